use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::io::{create_file, open_file, ArtifactMeta};
use crate::nn::{fit_mlp, Mlp, TrainConfig};
use crate::seeding::{derive_seed, stream_rng};
use crate::segmentation::PrimitiveDataset;
use crate::state::{Demonstration, NormStats};

const FORMAT_TAG: &str = "primix-bank/1";

/// Input of a lower model: normalized current follower state followed by
/// the normalized reference follower state.
pub fn lower_input(follower: &[f64], reference: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(follower.len() + reference.len());
    x.extend_from_slice(follower);
    x.extend_from_slice(reference);
    x
}

/// Inputs and targets, row by row.
pub type Pairs = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Normalized training pairs of one primitive. The reference for tick `k`
/// is the follower state `horizon` ticks later, held at the final tick.
pub fn lower_training_pairs(
    set: &PrimitiveDataset,
    demo: &Demonstration,
    norm: &NormStats,
    horizon: usize,
) -> Result<Pairs> {
    let follower = &demo.follower;
    let mut xs = Vec::with_capacity(set.len());
    let mut ys = Vec::with_capacity(set.len());
    for (k, (f, l)) in set.pair_ticks().zip(set.inputs.iter().zip(&set.targets)) {
        let reference = norm.normalize_state(follower.state_clamped(k + horizon))?;
        xs.push(lower_input(&norm.normalize(f)?, &reference));
        ys.push(norm.normalize(l)?);
    }
    Ok((xs, ys))
}

/// Extra training copies whose follower part is shifted by Gaussian noise
/// (normalized units) while the target leader state stays the same.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputJitter {
    pub sigma: f64,
    pub copies: usize,
}

impl Default for InputJitter {
    fn default() -> Self {
        InputJitter { sigma: 0.2, copies: 4 }
    }
}

impl InputJitter {
    pub fn none() -> Self {
        InputJitter { sigma: 0.0, copies: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("jitter sigma must be finite and non-negative"));
        }
        Ok(())
    }

    /// Appends `copies` jittered replicas of every pair. Only the first
    /// `follower_dim` input entries are perturbed.
    pub fn augment(
        &self,
        xs: &mut Vec<Vec<f64>>,
        ys: &mut Vec<Vec<f64>>,
        follower_dim: usize,
        seed: u64,
    ) -> Result<()> {
        check_len(xs.len(), ys.len())?;
        if self.sigma == 0.0 || self.copies == 0 {
            return Ok(());
        }
        let mut rng = stream_rng(seed, &[JITTER_STREAM]);
        let n = xs.len();
        for _ in 0..self.copies {
            for i in 0..n {
                let mut x = xs[i].clone();
                for v in x.iter_mut().take(follower_dim) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += self.sigma * z;
                }
                xs.push(x);
                ys.push(ys[i].clone());
            }
        }
        Ok(())
    }
}

const JITTER_STREAM: u64 = 1;

/// Trained primitives sharing one normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBank {
    pub primitives: Vec<Mlp>,
    /// `(demo id, segment index)` of each primitive.
    pub labels: Vec<(String, usize)>,
    pub norm: NormStats,
    pub horizon: usize,
}

impl LowerBank {
    pub fn new(primitives: Vec<Mlp>, labels: Vec<(String, usize)>, norm: NormStats, horizon: usize) -> Result<Self> {
        let Some(first) = primitives.first() else {
            return Err(Error::NoData);
        };
        check_len(primitives.len(), labels.len())?;
        let d = norm.dim();
        for p in &primitives {
            check_len(2 * d, p.input_dim())?;
            check_len(d, p.output_dim())?;
            if p.layer_sizes() != first.layer_sizes() {
                return Err(Error::invalid("primitives must share layer sizes"));
            }
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(LowerBank {
            primitives,
            labels,
            norm,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.norm.dim()
    }

    /// Bank restricted to the given primitive indices.
    pub fn subset(&self, indices: &[usize]) -> Result<LowerBank> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::invalid("primitive index out of range"));
        }
        LowerBank::new(
            indices.iter().map(|&i| self.primitives[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
            self.norm.clone(),
            self.horizon,
        )
    }

    /// Writes `bank.json` plus one model file per primitive into `dir`.
    pub fn save(&self, dir: &Path, meta: Option<&ArtifactMeta>) -> Result<()> {
        let mut files = Vec::with_capacity(self.len());
        for ((demo, seg), mlp) in self.labels.iter().zip(&self.primitives) {
            let name = format!("{demo}_seg{seg:02}.json");
            let mut f = create_file(&dir.join(&name))?;
            std::io::Write::write_all(&mut f, mlp.to_json(meta)?.as_bytes())
                .map_err(|e| Error::io(format!("writing {name}"), e))?;
            files.push(BankEntry {
                demo_id: demo.clone(),
                segment_index: *seg,
                file: name,
            });
        }
        let index = BankFile {
            format: FORMAT_TAG.into(),
            horizon: self.horizon,
            norm: self.norm.clone(),
            primitives: files,
            meta: meta.cloned(),
        };
        serde_json::to_writer_pretty(create_file(&dir.join("bank.json"))?, &index)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<LowerBank> {
        let index: BankFile = serde_json::from_reader(std::io::BufReader::new(open_file(&dir.join("bank.json"))?))?;
        if index.format != FORMAT_TAG {
            return Err(Error::format(
                "bank file",
                format!("unknown format tag {:?}", index.format),
            ));
        }
        let mut primitives = Vec::with_capacity(index.primitives.len());
        let mut labels = Vec::with_capacity(index.primitives.len());
        for e in index.primitives {
            let text = std::fs::read_to_string(dir.join(&e.file))
                .map_err(|err| Error::io(format!("reading {}", e.file), err))?;
            primitives.push(Mlp::from_json(&text)?);
            labels.push((e.demo_id, e.segment_index));
        }
        LowerBank::new(primitives, labels, index.norm, index.horizon)
    }
}

#[derive(Serialize, Deserialize)]
struct BankEntry {
    demo_id: String,
    segment_index: usize,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    format: String,
    horizon: usize,
    norm: NormStats,
    primitives: Vec<BankEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ArtifactMeta>,
}

/// Trains one primitive per dataset. Each dataset `i` gets its own
/// initialization and shuffling stream derived from `(cfg.seed, i)`, so the
/// result does not depend on how the work is scheduled across threads.
/// Returns the bank and the loss history of every primitive.
pub fn train_lower_bank(
    sets: &[PrimitiveDataset],
    demos: &[(String, Demonstration)],
    norm: &NormStats,
    horizon: usize,
    hidden: &[usize],
    jitter: &InputJitter,
    cfg: &TrainConfig,
) -> Result<(LowerBank, Vec<Vec<f64>>)> {
    jitter.validate()?;
    if sets.is_empty() {
        return Err(Error::NoData);
    }
    let d = norm.dim();
    let mut sizes = vec![2 * d];
    sizes.extend_from_slice(hidden);
    sizes.push(d);
    let trained: Vec<Result<(Mlp, Vec<f64>)>> = sets
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let (_, demo) = demos
                .iter()
                .find(|(id, _)| *id == set.demo_id)
                .ok_or_else(|| Error::invalid(format!("no demonstration named {:?}", set.demo_id)))?;
            let (mut xs, mut ys) = lower_training_pairs(set, demo, norm, horizon)?;
            let seed = derive_seed(cfg.seed, &[i as u64]);
            jitter.augment(&mut xs, &mut ys, d, seed)?;
            let mut mlp = Mlp::new(&sizes, seed)?;
            let local = TrainConfig { seed, ..cfg.clone() };
            let history = fit_mlp(&mut mlp, &xs, &ys, &local)?;
            Ok((mlp, history))
        })
        .collect();
    let mut primitives = Vec::with_capacity(sets.len());
    let mut histories = Vec::with_capacity(sets.len());
    for r in trained {
        let (m, h) = r?;
        primitives.push(m);
        histories.push(h);
    }
    let labels = sets.iter().map(|s| (s.demo_id.clone(), s.segment_index)).collect();
    Ok((LowerBank::new(primitives, labels, norm.clone(), horizon)?, histories))
}
