use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::io::{create_file, open_file, ArtifactMeta};
use crate::nn::{fit_mlp, Mlp, TrainConfig};
use crate::state::{Demonstration, NormStats};

const FORMAT_TAG: &str = "primix-ltof/1";

/// Maps a normalized leader state to the normalized follower state it
/// produces under bilateral coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LToFModel {
    pub mlp: Mlp,
    pub norm: NormStats,
}

impl LToFModel {
    pub fn new(mlp: Mlp, norm: NormStats) -> Result<Self> {
        check_len(norm.dim(), mlp.input_dim())?;
        check_len(norm.dim(), mlp.output_dim())?;
        Ok(LToFModel { mlp, norm })
    }

    /// Normalized in, normalized out.
    pub fn predict(&self, leader: &[f64]) -> Result<Vec<f64>> {
        self.mlp.forward(leader)
    }

    pub(crate) fn predict_unchecked(&self, leader: &[f64]) -> Vec<f64> {
        self.mlp.forward_unchecked(leader)
    }

    pub fn save(&self, path: &Path, meta: Option<&ArtifactMeta>) -> Result<()> {
        let file = LToFFile {
            format: FORMAT_TAG.into(),
            model: self.clone(),
            meta: meta.cloned(),
        };
        serde_json::to_writer(create_file(path)?, &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: LToFFile = serde_json::from_reader(std::io::BufReader::new(open_file(path)?))?;
        if f.format != FORMAT_TAG {
            return Err(Error::format("ltof file", format!("unknown format tag {:?}", f.format)));
        }
        LToFModel::new(f.model.mlp, f.model.norm)
    }
}

#[derive(Serialize, Deserialize)]
struct LToFFile {
    format: String,
    model: LToFModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ArtifactMeta>,
}

/// Regresses follower state on same-tick leader state over every tick of
/// every demonstration.
pub fn train_ltof(
    demos: &[Demonstration],
    norm: &NormStats,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(LToFModel, Vec<f64>)> {
    if demos.is_empty() {
        return Err(Error::NoData);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in demos {
        for (l, f) in d.leader.states().iter().zip(d.follower.states()) {
            xs.push(norm.normalize_state(l)?);
            ys.push(norm.normalize_state(f)?);
        }
    }
    let dim = norm.dim();
    let mut sizes = vec![dim];
    sizes.extend_from_slice(hidden);
    sizes.push(dim);
    let mut mlp = Mlp::new(&sizes, cfg.seed)?;
    let history = fit_mlp(&mut mlp, &xs, &ys, cfg)?;
    Ok((LToFModel::new(mlp, norm.clone())?, history))
}
