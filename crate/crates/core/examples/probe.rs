use std::time::Instant;

use ikforge_core::bench::{evaluate, DtSolver, Thresholds};
use ikforge_core::builtin_chain;
use ikforge_core::datasets::sample_uniform;
use ikforge_core::distal::{train, MlpSpec, TrainOpts};
use ikforge_core::metrics::{orientation_error, position_error};

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

fn main() {
    let chain_name = std::env::var("CHAIN").unwrap_or_else(|_| "planar3".into());
    let n_train = env_usize("N", 6400);
    let epochs = env_usize("EPOCHS", 500);
    let batch = env_usize("BATCH", 64);
    let lr = env_f64("LR", 1e-3);
    let patience = env_usize("PATIENCE", epochs);
    let hidden: Vec<usize> = std::env::var("HID")
        .unwrap_or_else(|_| "256,256".into())
        .split(',')
        .map(|t| t.trim().parse().unwrap())
        .collect();

    let chain = builtin_chain(&chain_name).unwrap();
    let train_ds = sample_uniform(&chain, n_train, 101).unwrap();
    let test_ds = sample_uniform(&chain, 1000, 999).unwrap();
    let spec = MlpSpec::for_chain(&chain, hidden.clone(), 7);
    let opts = TrainOpts {
        learning_rate: lr,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        ..TrainOpts::default()
    };
    let t0 = Instant::now();
    let model = train(&chain, &train_ds, &spec, &opts).unwrap();
    let train_time = t0.elapsed().as_secs_f64();

    let solver = DtSolver::new(&model, &chain).unwrap();
    let report = evaluate(&chain, &solver, &test_ds, &Thresholds::default()).unwrap();
    println!(
        "{chain_name} {n_train}/{hidden:?} b{batch} lr{lr} e{epochs}: ran {} time {:.1}s solve {:.4} eta {:.4} eps_pos {:.5} eps_ori {:.5}",
        model.history.len(),
        train_time,
        report.solve_rate,
        report.eta,
        report.eps_pos_mean,
        report.eps_ori_mean
    );

    // Held-out error distribution.
    let mut ep: Vec<f64> = Vec::new();
    let mut eo: Vec<f64> = Vec::new();
    for s in &test_ds.samples {
        let cfg = model.predict(&s.pose);
        let reached = chain.forward_kinematics(&cfg).unwrap();
        ep.push(position_error(&reached, &s.pose));
        eo.push(orientation_error(&reached, &s.pose));
    }
    ep.sort_by(f64::total_cmp);
    eo.sort_by(f64::total_cmp);
    println!(
        "eval eps_pos p50 {:.5} p90 {:.5} p95 {:.5} p99 {:.5} max {:.5}",
        quantile(&ep, 0.5),
        quantile(&ep, 0.9),
        quantile(&ep, 0.95),
        quantile(&ep, 0.99),
        ep.last().unwrap()
    );
    println!(
        "eval eps_ori p50 {:.5} p90 {:.5} p95 {:.5} p99 {:.5} max {:.5}",
        quantile(&eo, 0.5),
        quantile(&eo, 0.9),
        quantile(&eo, 0.95),
        quantile(&eo, 0.99),
        eo.last().unwrap()
    );

    // Train-set fit: same metric on the first 1000 training poses.
    let th = Thresholds::default();
    let mut hits = 0usize;
    let m = 1000.min(train_ds.samples.len());
    for s in train_ds.samples.iter().take(m) {
        let cfg = model.predict(&s.pose);
        let reached = chain.forward_kinematics(&cfg).unwrap();
        if position_error(&reached, &s.pose) < th.pos
            && orientation_error(&reached, &s.pose) < th.ori
        {
            hits += 1;
        }
    }
    println!("train-set solve rate ({m} poses): {:.4}", hits as f64 / m as f64);

    let h = &model.history;
    for i in (0..h.len()).step_by((h.len() / 10).max(1)) {
        println!("  e{:4}  train {:.6}  val {:.6}", i, h[i].0, h[i].1);
    }
    println!("  last  train {:.6}  val {:.6}", h.last().unwrap().0, h.last().unwrap().1);
}
