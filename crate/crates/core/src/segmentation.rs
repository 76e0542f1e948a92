//! Uniform time-based segmentation of demonstrations into primitive datasets.
//!
//! Segment `i` of `n` is centred on tick `(i + 0.5) T / n` and spans
//! `jitter * T / n` ticks, with `jitter` drawn per segment from
//! `[jitter_lo, jitter_hi]`. Widths above one overlap their neighbours; any
//! gap left by narrower widths, rounding or clipping is split between the two
//! segments that border it, and the first and last segments are stretched to
//! the ends of the timeline.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::create_file;
use crate::seeding::stream_rng;
use crate::state::{Demonstration, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSpec {
    pub n_segments: usize,
    pub jitter_lo: f64,
    pub jitter_hi: f64,
    pub seed: u64,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        SegmentSpec {
            n_segments: 10,
            jitter_lo: 0.9,
            jitter_hi: 1.1,
            seed: 0,
        }
    }
}

impl SegmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::invalid("n_segments must be at least 1"));
        }
        if !(self.jitter_lo > 0.0 && self.jitter_lo <= 1.0 && self.jitter_hi >= 1.0 && self.jitter_hi.is_finite()) {
            return Err(Error::invalid("jitter range must satisfy 0 < lo <= 1 <= hi"));
        }
        Ok(())
    }
}

/// Training pairs `(F_k, L_{k+1})` for the ticks `k` of one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveDataset {
    pub demo_id: String,
    pub demo_index: usize,
    pub segment_index: usize,
    /// Half-open tick range `[start, end)` covered by the segment.
    pub ticks: Range<usize>,
    /// Flattened follower states `F_k`.
    pub inputs: Vec<Vec<f64>>,
    /// Flattened leader states `L_{k+1}`.
    pub targets: Vec<Vec<f64>>,
}

impl PrimitiveDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Ticks `k` that produced a pair.
    pub fn pair_ticks(&self) -> Range<usize> {
        self.ticks.start..self.ticks.start + self.inputs.len()
    }
}

/// Tick ranges of the `n` segments of a `t_len`-tick timeline, with one
/// jitter value per segment.
pub fn segment_ranges(t_len: usize, jitters: &[f64]) -> Vec<Range<usize>> {
    let n = jitters.len();
    let t = t_len as f64;
    let edge = |i: usize, j: f64, sign: f64| -> usize {
        let x = t * ((2 * i + 1) as f64 + sign * j) / (2 * n) as f64;
        x.round().clamp(0.0, t) as usize
    };
    let mut ranges: Vec<Range<usize>> = jitters
        .iter()
        .enumerate()
        .map(|(i, &j)| edge(i, j, -1.0)..edge(i, j, 1.0))
        .collect();
    ranges[0].start = 0;
    ranges[n - 1].end = t_len;
    for i in 0..n - 1 {
        let (end, next) = (ranges[i].end, ranges[i + 1].start);
        if end < next {
            let mid = (end + next) / 2;
            ranges[i].end = mid;
            ranges[i + 1].start = mid;
        }
    }
    ranges
}

fn draw_jitters(spec: &SegmentSpec, demo_index: usize) -> Vec<f64> {
    let mut rng = stream_rng(spec.seed, &[demo_index as u64]);
    (0..spec.n_segments)
        .map(|_| {
            if spec.jitter_lo == spec.jitter_hi {
                spec.jitter_lo
            } else {
                rng.random_range(spec.jitter_lo..=spec.jitter_hi)
            }
        })
        .collect()
}

/// Splits one demonstration. `demo_index` selects the jitter stream.
pub fn segment_uniform(
    demo: &Demonstration,
    demo_id: &str,
    demo_index: usize,
    spec: &SegmentSpec,
) -> Result<Vec<PrimitiveDataset>> {
    spec.validate()?;
    let t_len = demo.len();
    if t_len < 2 * spec.n_segments {
        return Err(Error::DemoTooShort {
            len: t_len,
            segments: spec.n_segments,
        });
    }
    let leader = demo.leader.states();
    let follower = demo.follower.states();
    segment_ranges(t_len, &draw_jitters(spec, demo_index))
        .into_iter()
        .enumerate()
        .map(|(i, ticks)| {
            let last = ticks.end.min(t_len - 1);
            let inputs: Vec<Vec<f64>> = (ticks.start..last).map(|k| follower[k].flatten()).collect();
            let targets: Vec<Vec<f64>> = (ticks.start..last).map(|k| leader[k + 1].flatten()).collect();
            if inputs.is_empty() {
                return Err(Error::invalid(format!("segment {i} of {demo_id} has no pairs")));
            }
            Ok(PrimitiveDataset {
                demo_id: demo_id.to_string(),
                demo_index,
                segment_index: i,
                ticks,
                inputs,
                targets,
            })
        })
        .collect()
}

/// Segments every demonstration, in order.
pub fn build_primitive_sets(demos: &[(String, Demonstration)], spec: &SegmentSpec) -> Result<Vec<PrimitiveDataset>> {
    let Some((_, first)) = demos.first() else {
        return Err(Error::NoData);
    };
    let mut out = Vec::with_capacity(demos.len() * spec.n_segments);
    for (index, (id, demo)) in demos.iter().enumerate() {
        if demo.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: demo.dim(),
            });
        }
        if demo.dt() != first.dt() {
            return Err(Error::invalid(format!(
                "demo {id} has dt {} but {} was expected",
                demo.dt(),
                first.dt()
            )));
        }
        out.extend(segment_uniform(demo, id, index, spec)?);
    }
    Ok(out)
}

/// Writes the pairs of one dataset: column `k`, then the follower input and
/// leader target in the trajectory column layout.
pub fn write_dataset<W: Write>(out: W, set: &PrimitiveDataset) -> Result<()> {
    let dim = set.inputs[0].len() / CHANNELS;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    for p in ["f_", "l_"] {
        for ch in ["theta", "omega", "tau"] {
            header.extend((0..dim).map(|j| format!("{p}{ch}_{j}")));
        }
    }
    w.write_record(&header)?;
    for (k, (x, y)) in set.pair_ticks().zip(set.inputs.iter().zip(&set.targets)) {
        let row = std::iter::once(k.to_string()).chain(x.iter().chain(y).map(f64::to_string));
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io("writing primitive csv", e))?;
    Ok(())
}

/// File name of a dataset inside the primitives directory.
pub fn dataset_file_name(set: &PrimitiveDataset) -> String {
    format!("{}_seg{:02}.csv", set.demo_id, set.segment_index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub demo_id: String,
    pub demo_index: usize,
    pub segment_index: usize,
    pub start: usize,
    pub end: usize,
    pub pairs: usize,
    pub file: String,
}

impl From<&PrimitiveDataset> for SegmentRecord {
    fn from(set: &PrimitiveDataset) -> Self {
        SegmentRecord {
            demo_id: set.demo_id.clone(),
            demo_index: set.demo_index,
            segment_index: set.segment_index,
            start: set.ticks.start,
            end: set.ticks.end,
            pairs: set.len(),
            file: dataset_file_name(set),
        }
    }
}

/// Writes every dataset plus `segments.csv`, one row per dataset.
pub fn export_primitive_sets(dir: &Path, sets: &[PrimitiveDataset]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(&dir.join("segments.csv"))?);
    for set in sets {
        write_dataset(create_file(&dir.join(dataset_file_name(set)))?, set)?;
        w.serialize(SegmentRecord::from(set))?;
    }
    w.flush().map_err(|e| Error::io("writing segments.csv", e))?;
    Ok(())
}

pub fn read_segment_index(path: &Path) -> Result<Vec<SegmentRecord>> {
    let mut r = csv::Reader::from_reader(crate::io::open_file(path)?);
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Rebuilds the datasets listed in an index from their source
/// demonstrations.
pub fn datasets_from_index(
    records: &[SegmentRecord],
    demos: &[(String, Demonstration)],
) -> Result<Vec<PrimitiveDataset>> {
    records
        .iter()
        .map(|r| {
            let (_, demo) = demos
                .iter()
                .find(|(id, _)| *id == r.demo_id)
                .ok_or_else(|| Error::invalid(format!("segment index names unknown demo {:?}", r.demo_id)))?;
            if r.start >= r.end || r.end > demo.len() {
                return Err(Error::invalid(format!(
                    "bad tick range {}..{} for {}",
                    r.start, r.end, r.demo_id
                )));
            }
            let last = r.end.min(demo.len() - 1);
            Ok(PrimitiveDataset {
                demo_id: r.demo_id.clone(),
                demo_index: r.demo_index,
                segment_index: r.segment_index,
                ticks: r.start..r.end,
                inputs: (r.start..last).map(|k| demo.follower.states()[k].flatten()).collect(),
                targets: (r.start..last).map(|k| demo.leader.states()[k + 1].flatten()).collect(),
            })
        })
        .collect()
}
