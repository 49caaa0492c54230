//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `--nocapture`). The desk-scale criteria share trained runs
//! through a process-wide cache; timing-sensitive tests take the run lock
//! exclusively so concurrent training cannot skew them.
//!
//! Desk scale is pinned here: N=20, M=100, L=512, d_model=32, 2 blocks,
//! batch 64, 20k steps, lr 3e-4, best of up to 3 seeds.

use lengthgen::harness::artifacts::results_csv;
use lengthgen::harness::{evaluate, measure_steps_per_sec, train, TrainConfig};
use lengthgen::selfcheck;
use lengthgen::tasks::TaskId;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock, RwLock};

const SEEDS: [u64; 3] = [0, 1, 2];

/// Training runs take this shared; the throughput criterion takes it
/// exclusively.
fn run_lock() -> &'static RwLock<()> {
    static LOCK: OnceLock<RwLock<()>> = OnceLock::new();
    LOCK.get_or_init(|| RwLock::new(()))
}

fn score_cache() -> &'static Mutex<HashMap<String, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn desk_config(task: TaskId, scheme: &str, seed: u64, max_position: u32) -> TrainConfig {
    let mut cfg = TrainConfig::desk(task, scheme);
    cfg.seed = seed;
    cfg.max_position = max_position;
    cfg
}

/// Train + evaluate one desk run (cached across criteria).
fn desk_score(task: TaskId, scheme: &str, seed: u64, max_position: u32) -> f64 {
    let key = format!("{task}/{scheme}/seed{seed}/L{max_position}");
    if let Some(&score) = score_cache().lock().unwrap().get(&key) {
        return score;
    }
    let _shared = run_lock().read().unwrap();
    let cfg = desk_config(task, scheme, seed, max_position);
    let started = std::time::Instant::now();
    let trained = train(&cfg).unwrap_or_else(|e| panic!("training {key}: {e}"));
    let report = evaluate(&trained.params, &cfg, &cfg.eval_lengths())
        .unwrap_or_else(|e| panic!("evaluating {key}: {e}"));
    println!(
        "  [run] {key}: OOD score {:.4} ({:.1} steps/sec, {:.0}s train + {:.0}s eval)",
        report.score,
        trained.steps_per_sec,
        trained.wall_secs,
        report.wall_secs
    );
    score_cache().lock().unwrap().insert(key, report.score);
    report.score
}

/// Max over seeds, stopping early once `stop_at` is reached (max semantics:
/// more seeds can only increase the value).
fn best_of_seeds(task: TaskId, scheme: &str, max_position: u32, stop_at: Option<f64>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &seed in &SEEDS {
        best = best.max(desk_score(task, scheme, seed, max_position));
        if stop_at.is_some_and(|t| best >= t) {
            break;
        }
    }
    best
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!("criterion {criterion}: {} — {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_identity_reduction() {
    let r = selfcheck::check_identity_reduction();
    report("1 (identity reduction)", r.passed, &format!("\n{}", r.detail));
}

#[test]
fn criterion_02_sampling_suite() {
    let r = selfcheck::check_sampling_suite();
    report("2 (sampling suite)", r.passed, &format!("\n{}", r.detail));
}

#[test]
fn criterion_03_gradient_check() {
    let ops = selfcheck::check_gradients_ops();
    let model = selfcheck::check_gradients_model();
    report(
        "3 (gradient check)",
        ops.passed && model.passed,
        &format!("\nops:\n{}model:\n{}", ops.detail, model.detail),
    );
}

#[test]
fn criterion_04_permutation_equivariance() {
    let r = selfcheck::check_permutation_equivariance();
    report("4 (permutation equivariance)", r.passed, &r.detail);
}

#[test]
fn criterion_05_oracle_suite() {
    let r = selfcheck::check_oracle_suite();
    report("5 (oracle suite)", r.passed, &format!("\n{}", r.detail));
}

#[test]
fn criterion_06_ood_detector() {
    let r = selfcheck::check_ood_detector();
    report("6 (OOD detector)", r.passed, &format!("\n{}", r.detail));
}

#[test]
fn criterion_07_desk_scale_trend() {
    // Bucket Sort: randomized sincos >= 0.90 AND standard sincos <= 0.60.
    let bucket_rand = best_of_seeds(TaskId::BucketSort, "sincos+rand", 512, Some(0.90));
    let bucket_std = best_of_seeds(TaskId::BucketSort, "sincos", 512, None);
    // Reverse String: randomized relative >= standard relative + 0.15.
    let reverse_std = best_of_seeds(TaskId::ReverseString, "relative", 512, None);
    let reverse_rand = best_of_seeds(TaskId::ReverseString, "relative+rand", 512, Some(reverse_std + 0.15));
    // Even Pairs: randomized sincos >= 0.95.
    let even_rand = best_of_seeds(TaskId::EvenPairs, "sincos+rand", 512, Some(0.95));

    let passed = bucket_rand >= 0.90
        && bucket_std <= 0.60
        && reverse_rand >= reverse_std + 0.15
        && even_rand >= 0.95;
    report(
        "7 (desk-scale trend)",
        passed,
        &format!(
            "bucket sincos+rand {bucket_rand:.4} (>=0.90) vs sincos {bucket_std:.4} (<=0.60); \
             reverse relative+rand {reverse_rand:.4} vs relative {reverse_std:.4} (gap >=0.15); \
             even pairs sincos+rand {even_rand:.4} (>=0.95)"
        ),
    );
}

#[test]
fn criterion_08_sorting_ablation() {
    // Sorted randomized sincos on Even Pairs minus unsorted >= 0.30.
    let sorted = best_of_seeds(TaskId::EvenPairs, "sincos+rand", 512, Some(0.95));
    let unsorted = best_of_seeds(TaskId::EvenPairs, "sincos+rand+unsorted", 512, None);
    let passed = sorted - unsorted >= 0.30;
    report(
        "8 (sorting ablation)",
        passed,
        &format!("sorted {sorted:.4} vs unsorted {unsorted:.4} (gap {:.4} >= 0.30)", sorted - unsorted),
    );
}

#[test]
fn criterion_09_l_robustness() {
    // Reverse String, randomized relative, L in {256, 512, 1024}: pairwise
    // score differences <= 0.15. Starts from seed 0 per L and widens every
    // L to best-of-3 seeds only if the tight check fails (max semantics,
    // fixed escalation order).
    let ls = [256u32, 512, 1024];
    let mut scores: Vec<f64> = ls
        .iter()
        .map(|&l| desk_score(TaskId::ReverseString, "relative+rand", 0, l))
        .collect();
    let spread = |s: &[f64]| {
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    if spread(&scores) > 0.15 {
        scores = ls
            .iter()
            .map(|&l| best_of_seeds(TaskId::ReverseString, "relative+rand", l, None))
            .collect();
    }
    let passed = spread(&scores) <= 0.15;
    report(
        "9 (L robustness)",
        passed,
        &format!(
            "scores L=256:{:.4} L=512:{:.4} L=1024:{:.4}, max pairwise difference {:.4} (<= 0.15)",
            scores[0],
            scores[1],
            scores[2],
            spread(&scores)
        ),
    );
}

#[test]
fn criterion_10_throughput_ratio() {
    // Exclusive: no concurrent training while timing.
    let _exclusive = run_lock().write().unwrap();
    let base = |scheme: &str, n: usize| {
        let mut cfg = TrainConfig::desk(TaskId::MissingDuplicate, scheme);
        cfg.batch_size = 32; // long sequences; keep the footprint bounded
        cfg.max_train_len = n;
        cfg
    };
    let warmup = 50;
    let timed = 200;
    let short_rand = measure_steps_per_sec(&base("relative+rand", 40), warmup, timed).unwrap();
    let long_std = measure_steps_per_sec(&base("relative", 500), warmup, timed).unwrap();
    let ratio = short_rand / long_std;

    let short_std = measure_steps_per_sec(&base("relative", 40), warmup, timed).unwrap();
    let overhead = (short_std - short_rand).abs() / short_std;

    let passed = ratio >= 4.0 && overhead <= 0.15;
    report(
        "10 (throughput ratio)",
        passed,
        &format!(
            "N=40 randomized relative {short_rand:.2} steps/s vs N=500 standard relative {long_std:.2} steps/s: ratio {ratio:.2} (>= 4); \
             equal-length standard {short_std:.2} vs randomized {short_rand:.2}: overhead {:.1}% (<= 15%)",
            overhead * 100.0
        ),
    );
}

#[test]
fn criterion_11_reproducibility() {
    let _shared = run_lock().read().unwrap();
    let mut cfg = TrainConfig::desk(TaskId::EvenPairs, "sincos+rand");
    cfg.steps = 300;
    cfg.eval_max_len = 40;
    cfg.eval_batch = 50;
    cfg.seed = 7;
    let run = || {
        let trained = train(&cfg).unwrap();
        let report = evaluate(&trained.params, &cfg, &cfg.eval_lengths()).unwrap();
        results_csv(&report)
    };
    let first = run();
    let second = run();
    let passed = first == second;
    report(
        "11 (reproducibility)",
        passed,
        &format!("two runs of the same (config, seed) produced {} CSV bytes, bit-identical: {passed}", first.len()),
    );
}
