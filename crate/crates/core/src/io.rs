//! CSV encoding of trajectories and demonstrations.
//!
//! Layout: a header row starting with `t`, then one column per joint per
//! channel in `theta, omega, tau` order. Demonstration files carry the leader
//! block (`l_` prefix) followed by the follower block (`f_` prefix); single
//! robot files have no prefix. Row `i` has `t = i * dt`. Floats are written in
//! Rust's shortest round-trip decimal form, so reading a file back is exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Demonstration, JointVector, RobotState, Trajectory, CHANNELS};

/// Provenance stamped into every artifact the pipeline writes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

const CHANNEL_NAMES: [&str; CHANNELS] = ["theta", "omega", "tau"];

fn header(prefixes: &[&str], dim: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for p in prefixes {
        for ch in CHANNEL_NAMES {
            for j in 0..dim {
                cols.push(format!("{p}{ch}_{j}"));
            }
        }
    }
    cols
}

fn write_rows<W: Write>(out: W, prefixes: &[&str], trajs: &[&Trajectory]) -> Result<()> {
    let dim = trajs[0].dim();
    let dt = trajs[0].dt();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(prefixes, dim))?;
    let mut row: Vec<String> = Vec::with_capacity(1 + prefixes.len() * CHANNELS * dim);
    for i in 0..trajs[0].len() {
        row.clear();
        row.push((i as f64 * dt).to_string());
        for t in trajs {
            row.extend(t.states()[i].flatten().iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("writing csv", e))?;
    Ok(())
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    write_rows(out, &[""], &[traj])
}

pub fn write_demonstration<W: Write>(out: W, demo: &Demonstration) -> Result<()> {
    write_rows(out, &["l_", "f_"], &[&demo.leader, &demo.follower])
}

/// Parses the numeric table; returns (dt, robots) where each robot is a list
/// of flattened states.
fn read_rows<R: Read>(input: R, prefixes: &[&str]) -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
    let mut r = csv::Reader::from_reader(input);
    let cols: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let per_robot = cols.len().saturating_sub(1);
    if per_robot == 0 || !per_robot.is_multiple_of(CHANNELS * prefixes.len()) {
        return Err(Error::format(
            "trajectory csv",
            format!("unexpected column count {}", cols.len()),
        ));
    }
    let dim = per_robot / (CHANNELS * prefixes.len());
    if cols != header(prefixes, dim) {
        return Err(Error::format("trajectory csv", format!("unexpected header {cols:?}")));
    }

    let mut times = Vec::new();
    let mut robots = vec![Vec::new(); prefixes.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::format("trajectory csv", format!("row {}: {e}", line + 1)))?;
        times.push(vals[0]);
        for (k, robot) in robots.iter_mut().enumerate() {
            let start = 1 + k * CHANNELS * dim;
            robot.push(vals[start..start + CHANNELS * dim].to_vec());
        }
    }
    let dt = match times.as_slice() {
        [] => return Err(Error::NoData),
        [_] => 1.0,
        [t0, t1, ..] => t1 - t0,
    };
    Ok((dt, robots))
}

fn to_trajectory(dt: f64, rows: Vec<Vec<f64>>) -> Result<Trajectory> {
    let states = rows
        .iter()
        .map(|r| {
            let s = RobotState::unflatten(r)?;
            RobotState::new(
                JointVector::new(s.theta.into_vec())?,
                JointVector::new(s.omega.into_vec())?,
                JointVector::new(s.tau.into_vec())?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(dt, states)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let (dt, mut robots) = read_rows(input, &[""])?;
    to_trajectory(dt, robots.remove(0))
}

pub fn read_demonstration<R: Read>(input: R) -> Result<Demonstration> {
    let (dt, mut robots) = read_rows(input, &["l_", "f_"])?;
    let follower = to_trajectory(dt, robots.remove(1))?;
    let leader = to_trajectory(dt, robots.remove(0))?;
    Demonstration::new(leader, follower)
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

pub(crate) fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

pub fn save_demonstration(path: &Path, demo: &Demonstration) -> Result<()> {
    write_demonstration(create_file(path)?, demo)
}

pub fn load_demonstration(path: &Path) -> Result<Demonstration> {
    read_demonstration(open_file(path)?)
}
