//! End-to-end acceptance checks. Prints one `[PASS]` or `[FAIL]` line per
//! check and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use primix::harness::{
    coupling_report, is_timing_artifact, latency_stats, read_trial_records, run_all, run_trial, simulate_demo,
    DiagnosticRecord, ExperimentConfig, LatencyRecord, Layout, SuccessTable,
};
use primix::models::{
    ce_weights, fuse_candidates, softmax, train_lower_bank, train_ltof, CEConfig, Controller, ControllerKind,
    CostWeights, CostWindow, LToFModel, PlaybackController,
};
use primix::nn::{Lstm, Mlp, Parameterized};
use primix::seeding::stream_rng;
use primix::segmentation::{build_primitive_sets, export_primitive_sets, SegmentSpec};
use primix::{Demonstration, NormStats};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn shipped_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    ExperimentConfig::load(&path).expect("shipped config loads")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn check(&mut self, name: &str, limit: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took > limit {
                Err(format!(
                    "{detail}; took {:.1} s, limit {:.0} s",
                    took.as_secs_f64(),
                    limit.as_secs_f64()
                ))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail} ({:.2} s)", took.as_secs_f64()),
            Err(why) => {
                self.failures += 1;
                println!("[FAIL] {name}: {why} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
}

/// Reference weights computed directly from the definition, in log space.
fn oracle_weights(costs: &[f64], rho: f64) -> Vec<f64> {
    let logs: Vec<f64> = costs.iter().map(|c| -c / rho).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    logs.iter().map(|l| (l - top).exp() / z).collect()
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..5.0)).collect()
}

fn ce_weight_properties() -> Check {
    let mut rng = stream_rng(11, &[]);
    let mut worst_uniform: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut least_peak: f64 = 1.0;
    for _ in 0..200 {
        let n = rng.random_range(2..600);
        let rho = rng.random_range(0.01..2.0);
        let level = rng.random_range(-10.0..10.0);
        let w = ce_weights(&vec![level; n], rho, n).map_err(|e| e.to_string())?;
        for x in w.weights() {
            worst_uniform = worst_uniform.max((x - 1.0 / n as f64).abs());
        }

        let costs = random_costs(&mut rng, n);
        let base = ce_weights(&costs, rho, n).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((base.weights().iter().sum::<f64>() - 1.0).abs());
        for (a, b) in base.weights().iter().zip(oracle_weights(&costs, rho)) {
            worst_oracle = worst_oracle.max((a - b).abs());
        }
        let shift = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        let moved = ce_weights(&shifted, rho, n).map_err(|e| e.to_string())?;
        for (a, b) in base.weights().iter().zip(moved.weights()) {
            worst_shift = worst_shift.max((a - b).abs());
        }

        let mut costs = costs;
        let argmin = rng.random_range(0..n);
        let (lo, hi) = costs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        });
        costs[argmin] = lo - 0.01 * (hi - lo);
        let (lo, hi) = (costs[argmin], hi);
        let sharp = ce_weights(&costs, 1e-6 * (hi - lo), n).map_err(|e| e.to_string())?;
        least_peak = least_peak.min(sharp.weights()[argmin]);
        worst_sum = worst_sum.max((sharp.weights().iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst_uniform <= 1e-12, || {
        format!("uniform deviation {worst_uniform:e}")
    })?;
    ensure(worst_shift <= 1e-9, || format!("shift deviation {worst_shift:e}"))?;
    ensure(least_peak > 0.999, || format!("sharp min-cost weight {least_peak}"))?;
    ensure(worst_sum <= 1e-9, || format!("sum deviation {worst_sum:e}"))?;
    ensure(worst_oracle <= 1e-12, || format!("oracle deviation {worst_oracle:e}"))?;
    Ok(format!(
        "uniform {worst_uniform:.1e}, shift {worst_shift:.1e}, min-cost weight {least_peak:.6}, sum {worst_sum:.1e}, oracle {worst_oracle:.1e}"
    ))
}

fn softmax_properties() -> Check {
    let mut rng = stream_rng(12, &[]);
    let (mut sum_dev, mut shift_dev, mut onehot_dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..500 {
        let n = rng.random_range(1..80);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let p = softmax(&logits).map_err(|e| e.to_string())?;
        sum_dev = sum_dev.max((p.weights().iter().sum::<f64>() - 1.0).abs());
        let s = rng.random_range(-500.0..500.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + s).collect();
        let q = softmax(&shifted).map_err(|e| e.to_string())?;
        for (a, b) in p.weights().iter().zip(q.weights()) {
            shift_dev = shift_dev.max((a - b).abs());
        }
        let hot = rng.random_range(0..n);
        let mut peaked = logits.clone();
        peaked[hot] += 1e3;
        let r = softmax(&peaked).map_err(|e| e.to_string())?;
        for (i, w) in r.weights().iter().enumerate() {
            let target = if i == hot { 1.0 } else { 0.0 };
            onehot_dev = onehot_dev.max((w - target).abs());
        }
    }
    ensure(sum_dev <= 1e-9, || format!("sum deviation {sum_dev:e}"))?;
    ensure(shift_dev <= 1e-9, || format!("shift deviation {shift_dev:e}"))?;
    ensure(onehot_dev <= 1e-9, || format!("one-hot deviation {onehot_dev:e}"))?;
    Ok(format!(
        "sum {sum_dev:.1e}, shift {shift_dev:.1e}, one-hot {onehot_dev:.1e}"
    ))
}

/// Largest relative gap between `analytic` and central differences of
/// `loss`, over `count` parameters spread across the model.
fn central_difference_gap<M: Parameterized + Clone>(
    model: &M,
    loss: impl Fn(&M) -> f64,
    analytic: &[f64],
    count: usize,
) -> (f64, usize) {
    let h = 1e-5;
    let n = model.num_params();
    let picks: Vec<usize> = (0..count.min(n)).map(|i| i * n / count.min(n)).collect();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &i in &picks {
        let p0 = model.params()[i];
        probe.params_mut()[i] = p0 + h;
        let up = loss(&probe);
        probe.params_mut()[i] = p0 - h;
        let down = loss(&probe);
        probe.params_mut()[i] = p0;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6));
    }
    (worst, picks.len())
}

fn half_squared_error(y: &[f64], t: &[f64], dy: &mut [f64]) -> f64 {
    let mut l = 0.0;
    for ((d, a), b) in dy.iter_mut().zip(y).zip(t) {
        *d = a - b;
        l += 0.5 * (a - b) * (a - b);
    }
    l
}

fn gradient_checks() -> Check {
    let mut rng = stream_rng(13, &[]);
    let mlp = Mlp::new(&[18, 24, 24, 9], 5).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.5..1.5)).collect();
    let t: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mlp_loss = |m: &Mlp| {
        let mut dy = vec![0.0; 9];
        half_squared_error(&m.forward(&x).unwrap(), &t, &mut dy)
    };
    let mut dy = vec![0.0; 9];
    half_squared_error(&mlp.forward(&x).unwrap(), &t, &mut dy);
    let mut g = vec![0.0; mlp.num_params()];
    mlp.backward(&x, &dy, &mut g).map_err(|e| e.to_string())?;
    let (mlp_gap, mlp_n) = central_difference_gap(&mlp, mlp_loss, &g, 120);

    let lstm = Lstm::new(9, 12, 2, 9, 6).map_err(|e| e.to_string())?;
    let inputs: Vec<Vec<f64>> = (0..7)
        .map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..7)
        .map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let lstm_loss = |m: &Lstm| {
        let ys = m.run(&inputs).unwrap();
        let mut dy = vec![0.0; 9];
        ys.iter()
            .zip(&targets)
            .map(|(y, t)| half_squared_error(y, t, &mut dy))
            .sum::<f64>()
    };
    let mut g = vec![0.0; lstm.num_params()];
    lstm.sequence_gradient(&inputs, |t, y, dy| half_squared_error(y, &targets[t], dy), &mut g)
        .map_err(|e| e.to_string())?;
    let (lstm_gap, lstm_n) = central_difference_gap(&lstm, lstm_loss, &g, 120);

    ensure(mlp_n >= 50 && lstm_n >= 50, || "too few parameters probed".into())?;
    ensure(mlp_gap < 1e-4, || format!("MLP relative error {mlp_gap:e}"))?;
    ensure(lstm_gap < 1e-4, || format!("LSTM relative error {lstm_gap:e}"))?;
    Ok(format!(
        "MLP {mlp_gap:.1e} over {mlp_n} params, LSTM {lstm_gap:.1e} over {lstm_n} params"
    ))
}

fn primitive_demos(cfg: &ExperimentConfig) -> Result<Vec<(String, Demonstration)>, String> {
    cfg.primitive_tasks()
        .map(|t| {
            simulate_demo(cfg, t)
                .map(|(d, _)| (t.name.clone(), d))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn segmentation(cfg: &ExperimentConfig, out: &Path) -> Check {
    let demos = primitive_demos(cfg)?;
    let base = cfg.segment_spec();
    let mut rng = stream_rng(14, &[]);
    let mut margin = f64::INFINITY;
    for trial in 0..50 {
        let spec = SegmentSpec {
            seed: rng.random(),
            ..base.clone()
        };
        let sets = build_primitive_sets(&demos, &spec).map_err(|e| e.to_string())?;
        ensure(sets.len() == 50, || format!("seed #{trial}: {} datasets", sets.len()))?;
        for (demo_index, (id, demo)) in demos.iter().enumerate() {
            let t = demo.len() as f64;
            let mut ranges: Vec<_> = sets
                .iter()
                .filter(|s| s.demo_index == demo_index)
                .map(|s| s.ticks.clone())
                .collect();
            ranges.sort_by_key(|r| r.start);
            let mut cursor = 0;
            for range in ranges {
                ensure(range.start <= cursor, || {
                    format!("{id}: ticks {cursor}..{} uncovered", range.start)
                })?;
                cursor = cursor.max(range.end);
                let len = range.len() as f64;
                let (lo, hi) = (base.jitter_lo * t / 10.0 - 1.0, base.jitter_hi * t / 10.0 + 1.0);
                margin = margin.min(len - lo).min(hi - len);
                ensure(len >= lo && len <= hi, || {
                    format!("{id}: segment of {len} ticks outside [{lo}, {hi}]")
                })?;
            }
            ensure(cursor == demo.len(), || {
                format!("{id}: coverage ends at {cursor} of {}", demo.len())
            })?;
        }
    }
    let sets = build_primitive_sets(&demos, &base).map_err(|e| e.to_string())?;
    export_primitive_sets(out, &sets).map_err(|e| e.to_string())?;
    Ok(format!(
        "50 datasets on each of 50 seeds, tightest length margin {margin:.1} ticks"
    ))
}

fn bilateral(cfg: &ExperimentConfig) -> Check {
    let mut gap: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for task in cfg.primitive_tasks() {
        let (demo, _) = simulate_demo(cfg, task).map_err(|e| e.to_string())?;
        let r = coupling_report(&demo, 10).map_err(|e| e.to_string())?;
        ensure(r.contact_ticks > 0, || format!("{}: no contact", task.name))?;
        gap = gap.max(r.free_space_gap);
        ratio = ratio.max(r.contact_ratio);
    }
    ensure(gap < cfg.checks.free_space_tracking, || {
        format!("free-space gap {gap:e} rad")
    })?;
    ensure(ratio < cfg.checks.contact_force_ratio, || {
        format!("contact ratio {ratio}")
    })?;
    Ok(format!("free-space gap {gap:.2e} rad, contact ratio {ratio:.4}"))
}

fn random_ltof(rng: &mut ChaCha8Rng) -> LToFModel {
    let norm = NormStats {
        mean: (0..9).map(|_| rng.random_range(-0.5..0.5)).collect(),
        std: (0..9).map(|_| rng.random_range(0.2..2.0)).collect(),
    };
    LToFModel::new(Mlp::new(&[9, 12, 9], rng.random()).unwrap(), norm).unwrap()
}

fn random_candidates(rng: &mut ChaCha8Rng, count: usize, steps: usize) -> Vec<Vec<Vec<f64>>> {
    (0..count)
        .map(|_| {
            (0..steps)
                .map(|_| (0..9).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect()
}

fn convexity() -> Check {
    let mut rng = stream_rng(15, &[]);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for step in 0..1000 {
        let ltof = random_ltof(&mut rng);
        let count = rng.random_range(1..60);
        let steps = rng.random_range(1..5);
        let candidates = random_candidates(&mut rng, count, steps);
        let window: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..9).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ce = CEConfig {
            rho: 10f64.powf(rng.random_range(-8.0..1.0)),
            top_m: rng.random_range(1..=count),
            cost_window: if step % 2 == 0 {
                CostWindow::FirstStep
            } else {
                CostWindow::Full
            },
            ..Default::default()
        };
        let out =
            fuse_candidates(&candidates, &ltof, &window, &CostWeights::default(), &ce).map_err(|e| e.to_string())?;
        for j in 0..9 {
            let lo = candidates.iter().map(|c| c[0][j]).fold(f64::INFINITY, f64::min);
            let hi = candidates.iter().map(|c| c[0][j]).fold(f64::NEG_INFINITY, f64::max);
            let x = out.command[j];
            if x < lo || x > hi {
                violations += 1;
                worst = worst.max(lo - x).max(x - hi);
            }
        }
    }
    ensure(violations == 0, || {
        format!("{violations} envelope violations, worst {worst:e}")
    })?;
    Ok("1000 fusion steps, 0 envelope violations".into())
}

fn planted_oracle() -> Check {
    let mut rng = stream_rng(16, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ltof = random_ltof(&mut rng);
        let candidates = random_candidates(&mut rng, 500, 1);
        let planted = rng.random_range(0..candidates.len());
        let normalized = ltof.norm.normalize(&candidates[planted][0]).unwrap();
        let reference = ltof.predict(&normalized).unwrap();
        let cw = CostWeights::default();
        let costs: Vec<f64> = candidates
            .iter()
            .map(|c| {
                let f = ltof.predict(&ltof.norm.normalize(&c[0]).unwrap()).unwrap();
                primix::models::compute_cost(&[f], std::slice::from_ref(&reference), &cw, CostWindow::FirstStep).unwrap()
            })
            .collect();
        let spread = costs.iter().cloned().fold(0.0, f64::max);
        let ce = CEConfig {
            rho: 1e-6 * spread,
            top_m: 50,
            ..Default::default()
        };
        let out = fuse_candidates(&candidates, &ltof, &[reference], &cw, &ce).map_err(|e| e.to_string())?;
        for (a, b) in out.command.iter().zip(&candidates[planted][0]) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-3, || {
        format!("fused command {worst:e} from the planted candidate")
    })?;
    Ok(format!(
        "worst distance to planted candidate {worst:.1e} over 100 draws"
    ))
}

/// Trains the primitives of one demonstration and replays it with the
/// noise-free playback controller. Writes the rollout and the bank to `out`.
fn playback_self_consistency(cfg: &ExperimentConfig, out: &Path) -> Check {
    let task = cfg
        .evaluations
        .first()
        .and_then(|e| cfg.task(&e.task))
        .ok_or("no evaluation task")?
        .clone();
    let (demo, _) = simulate_demo(cfg, &task).map_err(|e| e.to_string())?;
    let demos = vec![(task.name.clone(), demo.clone())];
    let norm = NormStats::from_trajectories([&demo.leader, &demo.follower]).map_err(|e| e.to_string())?;
    let mut spec = cfg.segment_spec();
    spec.seed = 0;
    let sets = build_primitive_sets(&demos, &spec).map_err(|e| e.to_string())?;
    let lower_cfg = cfg.lower.train.to_train_config(1);
    let (bank, _) = train_lower_bank(
        &sets,
        &demos,
        &norm,
        cfg.experiment.horizon,
        &cfg.lower.hidden,
        &cfg.lower.jitter,
        &lower_cfg,
    )
    .map_err(|e| e.to_string())?;
    let (ltof, _) = train_ltof(
        std::slice::from_ref(&demo),
        &norm,
        &cfg.ltof.hidden,
        &cfg.ltof.train.to_train_config(2),
    )
    .map_err(|e| e.to_string())?;
    let mut ce = cfg.ce_config();
    ce.noise_sigma = [0.0; 3];
    let mut c = PlaybackController::new(demo.follower.clone(), bank.clone(), ltof, cfg.cost.clone(), ce)
        .map_err(|e| e.to_string())?;
    c.reset(0);
    let r = run_trial(cfg, &task, 0.0, &mut c, 3).map_err(|e| e.to_string())?;
    ensure(!r.diverged, || "rollout diverged".into())?;
    let leader = demo.leader.states();
    let mut se = 0.0;
    let mut n = 0;
    for (k, cmd) in r.commands.iter().enumerate() {
        for j in 0..cmd.theta.len() {
            let e = cmd.theta[j] - leader[k + 1].theta[j];
            se += e * e;
            n += 1;
        }
    }
    let rms = (se / n as f64).sqrt();
    bank.save(&out.join("bank"), None).map_err(|e| e.to_string())?;
    let traj = primix::harness::rollout_trajectory(&r, cfg.plant.control_period).map_err(|e| e.to_string())?;
    primix::io::save_demonstration(&out.join("rollout.csv"), &traj).map_err(|e| e.to_string())?;
    ensure(rms < cfg.checks.playback_rms, || format!("RMS θ error {rms:.4} rad"))?;
    Ok(format!(
        "{} primitives, RMS θ error {rms:.4} rad, task success {}",
        bank.len(),
        r.success()
    ))
}

fn end_to_end(cfg: &ExperimentConfig, out: &Path) -> Check {
    run_all(cfg, out).map_err(|e| e.to_string())?;
    let layout = Layout::new(out);
    let records = read_trial_records(&layout.results()).map_err(|e| e.to_string())?;
    let table = SuccessTable::from_records(&records);
    let count = |ev: &str, k: ControllerKind| table.successes(ev, k).map(|(s, _)| s).unwrap_or(0);
    let mut cells = Vec::new();
    for ev in ["validation", "composite"] {
        for k in ControllerKind::ALL {
            cells.push(format!("{ev}/{k} {}/{}", count(ev, k), cfg.experiment.trials));
        }
    }
    let detail = cells.join(", ");
    for k in [ControllerKind::Sampling, ControllerKind::Playback] {
        ensure(count("validation", k) >= 8, || {
            format!("{k} validation below 8/10; {detail}")
        })?;
        ensure(count("composite", k) >= 6, || {
            format!("{k} composite below 6/10; {detail}")
        })?;
        ensure(
            count("composite", ControllerKind::Baseline) <= count("composite", k) + 1,
            || format!("baseline beats {k} on composite by more than one trial; {detail}"),
        )?;
    }
    Ok(detail)
}

fn fusion_latency(cfg: &ExperimentConfig, out: &Path) -> Check {
    let layout = Layout::new(out);
    let mut latencies = Vec::new();
    let mut candidates = Vec::new();
    for ev in &cfg.evaluations {
        let cell = layout.run_cell(&ev.name, ControllerKind::Sampling);
        let lat: Vec<LatencyRecord> = read_csv(&cell.join("latency.csv"))?;
        latencies.extend(lat.iter().map(|r| r.latency_ms));
        let diags: Vec<DiagnosticRecord> = read_csv(&cell.join("diagnostics.csv"))?;
        candidates.extend(diags.iter().map(|d| d.candidates));
    }
    ensure(!latencies.is_empty(), || "no sampling steps recorded".into())?;
    ensure(candidates.iter().all(|&c| c == 500), || {
        "steps with a candidate count other than 500".into()
    })?;
    let stats = latency_stats(&latencies);
    ensure(stats.p50_ms < 10.0, || format!("median {:.3} ms", stats.p50_ms))?;
    Ok(format!(
        "{} steps of 500 candidates, median {:.3} ms, p95 {:.3} ms, {} threads",
        stats.steps,
        stats.p50_ms,
        stats.p95_ms,
        rayon::current_num_threads()
    ))
}

fn read_csv<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Relative path → contents of every non-timing file under `root`.
fn snapshot(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| e.to_string())?;
        if entry.file_type().is_file() && !is_timing_artifact(entry.path()) {
            let rel = entry.path().strip_prefix(root).unwrap().to_path_buf();
            files.insert(rel, std::fs::read(entry.path()).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn compare_trees(name: &str, a: &Path, b: &Path) -> Result<usize, String> {
    let (x, y) = (snapshot(a)?, snapshot(b)?);
    ensure(!x.is_empty(), || format!("{name}: no files"))?;
    ensure(x.keys().eq(y.keys()), || format!("{name}: file sets differ"))?;
    if let Some((path, _)) = x.iter().find(|(p, data)| y[*p] != **data) {
        return Err(format!("{name}: {} differs", path.display()));
    }
    Ok(x.len())
}

fn determinism(cfg: &ExperimentConfig, first: &[(&str, PathBuf)], scratch: &Path) -> Check {
    let mut counts = Vec::new();
    for (name, dir) in first {
        let again = scratch.join(format!("{name}_again"));
        match *name {
            "segmentation" => {
                segmentation(cfg, &again)?;
            }
            "playback" => {
                playback_self_consistency(cfg, &again)?;
            }
            _ => {
                run_all(cfg, &again).map_err(|e| e.to_string())?;
            }
        }
        counts.push(format!("{name} {} files", compare_trees(name, dir, &again)?));
    }
    Ok(format!("byte-identical re-runs: {}", counts.join(", ")))
}

fn main() {
    let cfg = shipped_config();
    let scratch = tempfile::tempdir().expect("temp dir");
    let seg_dir = scratch.path().join("segmentation");
    let playback_dir = scratch.path().join("playback");
    let pipeline_dir = scratch.path().join("pipeline");
    let secs = Duration::from_secs;
    let mut r = Runner { failures: 0 };

    r.check("cross-entropy weights", secs(1), ce_weight_properties);
    r.check("softmax proportions", secs(1), softmax_properties);
    r.check("gradient checks", secs(30), gradient_checks);
    r.check("segmentation", secs(5), || segmentation(&cfg, &seg_dir));
    r.check("bilateral coupling", secs(10), || bilateral(&cfg));
    r.check("fusion convexity", secs(10), convexity);
    r.check("planted-oracle fusion", secs(5), planted_oracle);
    r.check("playback self-consistency", secs(120), || {
        playback_self_consistency(&cfg, &playback_dir)
    });
    r.check("end-to-end study", secs(1800), || end_to_end(&cfg, &pipeline_dir));
    r.check("fusion latency", secs(5), || fusion_latency(&cfg, &pipeline_dir));
    let runs = [
        ("segmentation", seg_dir),
        ("playback", playback_dir),
        ("pipeline", pipeline_dir),
    ];
    r.check("determinism", secs(2400), || determinism(&cfg, &runs, scratch.path()));

    if r.failures > 0 {
        println!("{} check(s) failed", r.failures);
        std::process::exit(1);
    }
}
