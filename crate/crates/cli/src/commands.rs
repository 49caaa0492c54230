use crate::config::ExperimentFlags;
use crate::rundir;
use anyhow::{bail, Context, Result};
use lengthgen::analysis::{attention_summary, capture_run, pca_fit_project};
use lengthgen::harness::artifacts::{
    config_from_kv, config_to_kv, results_csv, write_results_csv, write_summary_json, RunSummary,
};
use lengthgen::harness::{
    ablation_l_sweep, ablation_sorting, aggregate, evaluate, measure_steps_per_sec,
    train as train_run, EvalReport, TrainConfig,
};
use lengthgen::nn::{load_checkpoint, save_checkpoint, ParameterStore};
use lengthgen::selfcheck::run_selfcheck;
use lengthgen::tasks::{sample_instance, TaskId};
use serde_json::json;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Mutex;

fn baseline_config() -> TrainConfig {
    TrainConfig::desk(TaskId::EvenPairs, "none")
}

/// Train one run, persist every artifact, evaluate on the unseen lengths.
fn run_one(out_root: &Path, config: &TrainConfig, capture: bool) -> Result<EvalReport> {
    let dir = rundir::run_dir(out_root, config);
    rundir::create(&dir)?;
    std::fs::write(dir.join("config.txt"), config_to_kv(config))?;
    let outcome = (|| -> Result<EvalReport> {
        log::info!("training {} {} seed {} lr {}", config.task, config.scheme, config.seed, config.lr);
        let trained = train_run(config).map_err(|e| anyhow::anyhow!("{e}"))?;
        let mut trace = String::from("step,loss\n");
        for record in &trained.trace {
            writeln!(trace, "{},{}", record.step, record.loss).expect("string write");
        }
        std::fs::write(dir.join("trace.csv"), trace)?;
        save_checkpoint(&dir.join("checkpoint"), &trained.params)?;
        let report = evaluate(&trained.params, config, &config.eval_lengths())
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        write_results_csv(&dir.join("results.csv"), &report).map_err(|e| anyhow::anyhow!("{e}"))?;
        write_summary_json(
            &dir.join("summary.json"),
            &RunSummary::single(&report, trained.steps_per_sec),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        if capture {
            dump_capture(&dir, &trained.params, config)?;
        }
        Ok(report)
    })();
    if let Err(e) = &outcome {
        // Partial artifacts stay; the manifest records what failed.
        std::fs::write(dir.join("error.txt"), format!("{e:#}\n")).ok();
    }
    outcome
}

fn load_run(run_dir: &Path) -> Result<(TrainConfig, ParameterStore<f32>)> {
    let echo = std::fs::read_to_string(run_dir.join("config.txt"))
        .with_context(|| format!("reading {}/config.txt", run_dir.display()))?;
    let config = config_from_kv(&echo, baseline_config()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let params = load_checkpoint(&run_dir.join("checkpoint")).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((config, params))
}

pub fn train(out_root: &Path, flags: &ExperimentFlags) -> Result<ExitCode> {
    let config = flags.resolve()?;
    let report = run_one(out_root, &config, flags.capture)?;
    println!(
        "{} {} seed {} lr {}: score {:.4} over lengths {}..={}",
        config.task,
        config.scheme,
        config.seed,
        config.lr,
        report.score,
        config.max_train_len + 1,
        config.eval_max_len
    );
    println!("artifacts: {}", rundir::run_dir(out_root, &config).display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(run_dir: &Path, flags: &ExperimentFlags) -> Result<ExitCode> {
    let (mut config, params) = load_run(run_dir)?;
    if let Some(m) = flags.m {
        config.eval_max_len = m;
    }
    if let Some(b) = flags.eval_batch {
        config.eval_batch = b;
    }
    let report = evaluate(&params, &config, &config.eval_lengths()).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_results_csv(&run_dir.join("results.csv"), &report).map_err(|e| anyhow::anyhow!("{e}"))?;
    print!("{}", results_csv(&report));
    eprintln!("score: {}", report.score);
    Ok(ExitCode::SUCCESS)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>, _> = raw.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => bail!("could not parse {what} list {raw:?}"),
    }
}

pub fn sweep(out_root: &Path, flags: &ExperimentFlags, seeds: &str, lrs: &str, jobs: usize) -> Result<ExitCode> {
    let seeds: Vec<u64> = parse_list(seeds, "seed")?;
    let lrs: Vec<f64> = parse_list(lrs, "learning rate")?;
    let schemes: Vec<String> = flags
        .scheme
        .as_deref()
        .unwrap_or("relative+rand")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let base = flags.resolve()?;
    let mut members = Vec::new();
    for scheme in &schemes {
        for &seed in &seeds {
            for &lr in &lrs {
                let mut cfg = base.clone();
                cfg.scheme = scheme.clone();
                cfg.seed = seed;
                cfg.lr = lr;
                cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
                members.push(cfg);
            }
        }
    }

    let queue = Mutex::new(members.into_iter().collect::<Vec<_>>());
    let results: Mutex<Vec<(String, EvalReport)>> = Mutex::new(Vec::new());
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let workers = jobs.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some(cfg) = queue.lock().unwrap().pop() else { break };
                match run_one(out_root, &cfg, flags.capture) {
                    Ok(report) => results.lock().unwrap().push((cfg.scheme.clone(), report)),
                    Err(e) => failures
                        .lock()
                        .unwrap()
                        .push(format!("{} seed {} lr {}: {e:#}", cfg.scheme, cfg.seed, cfg.lr)),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| (a.0.as_str(), a.1.seed, a.1.lr.to_bits()).cmp(&(b.0.as_str(), b.1.seed, b.1.lr.to_bits())));
    for scheme in &schemes {
        let group: Vec<EvalReport> = results
            .iter()
            .filter(|(s, _)| s == scheme)
            .map(|(_, r)| r.clone())
            .collect();
        if group.is_empty() {
            continue;
        }
        let agg = aggregate(&group).map_err(|e| anyhow::anyhow!("{e}"))?;
        let mut cfg = base.clone();
        cfg.scheme = scheme.clone();
        let dir = rundir::scheme_dir(out_root, &cfg);
        write_summary_json(
            &dir.join("summary.json"),
            &RunSummary {
                score: agg.max_score,
                max: agg.max_score,
                mean: agg.mean,
                std: agg.std,
                steps_per_sec: 0.0,
            },
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        println!(
            "{} {}: max {:.4}, mean {:.4} +/- {:.4} at lr {} over {} runs",
            base.task, scheme, agg.max_score, agg.mean, agg.std, agg.best_lr, agg.runs
        );
    }
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn ablate_l(out_root: &Path, flags: &ExperimentFlags, l_values: &str) -> Result<ExitCode> {
    let ls: Vec<u32> = parse_list(l_values, "L")?;
    let base = flags.resolve()?;
    let sweep = ablation_l_sweep(&base, &ls).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dir = rundir::scheme_dir(out_root, &base);
    rundir::create(&dir)?;
    let mut csv = String::from("task,scheme,seed,lr,steps,L,score\n");
    for (l, report) in &sweep {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            base.task, base.scheme, base.seed, base.lr, base.steps, l, report.score
        )
        .expect("string write");
        println!("L={l}: score {:.4}", report.score);
    }
    std::fs::write(dir.join("ablate_l.csv"), csv)?;
    Ok(ExitCode::SUCCESS)
}

pub fn ablate_sorting(out_root: &Path, flags: &ExperimentFlags) -> Result<ExitCode> {
    let base = flags.resolve()?;
    let result = ablation_sorting(&base).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dir = rundir::scheme_dir(out_root, &base);
    rundir::create(&dir)?;
    let payload = json!({
        "task": base.task.name(),
        "scheme": base.scheme,
        "sorted_score": result.sorted.score,
        "unsorted_score": result.unsorted.score,
        "gap": result.sorted.score - result.unsorted.score,
    });
    std::fs::write(dir.join("ablate_sorting.json"), serde_json::to_string_pretty(&payload)? + "\n")?;
    println!(
        "{}: sorted {:.4} vs unsorted {:.4} (gap {:.4})",
        base.task,
        result.sorted.score,
        result.unsorted.score,
        result.sorted.score - result.unsorted.score
    );
    Ok(ExitCode::SUCCESS)
}

pub fn throughput(
    out_root: &Path,
    flags: &ExperimentFlags,
    short_n: usize,
    long_n: usize,
    warmup: usize,
    timed: usize,
) -> Result<ExitCode> {
    let mut flags = flags.clone();
    // Long sequences are memory-hungry; default the batch down unless set.
    if flags.batch_size.is_none() {
        flags.batch_size = Some(32);
    }
    if flags.task.is_none() {
        flags.task = Some("missing_duplicate".into());
    }
    let base = flags.resolve()?;

    let mut short = base.clone();
    short.scheme = "relative+rand".into();
    short.max_train_len = short_n;
    let mut long = base.clone();
    long.scheme = "relative".into();
    long.max_train_len = long_n;
    let padded = long.task.spec().padded_length(long_n) as u32;
    if long.max_position < padded {
        long.max_position = padded;
        short.max_position = padded;
    }
    short.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    long.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

    let short_sps = measure_steps_per_sec(&short, warmup, timed).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!("short (N={short_n}, randomized relative): {short_sps:.2} steps/sec");
    let long_sps = measure_steps_per_sec(&long, warmup, timed).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!("long  (N={long_n}, standard relative):   {long_sps:.2} steps/sec");
    let ratio = short_sps / long_sps;
    println!("ratio: {ratio:.2}");

    // Randomized vs standard at equal length: the overhead of the method.
    let mut equal_std = short.clone();
    equal_std.scheme = "relative".into();
    let std_sps = measure_steps_per_sec(&equal_std, warmup, timed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let overhead = (std_sps - short_sps) / std_sps;
    println!("equal length N={short_n}: standard {std_sps:.2} vs randomized {short_sps:.2} steps/sec (overhead {:.1}%)", overhead * 100.0);

    rundir::create(out_root)?;
    let payload = json!({
        "task": base.task.name(),
        "short_n": short_n,
        "long_n": long_n,
        "short_steps_per_sec": short_sps,
        "long_steps_per_sec": long_sps,
        "ratio": ratio,
        "equal_length_standard_steps_per_sec": std_sps,
        "equal_length_randomized_steps_per_sec": short_sps,
        "randomized_overhead_fraction": overhead,
    });
    std::fs::write(out_root.join("throughput.json"), serde_json::to_string_pretty(&payload)? + "\n")?;
    Ok(ExitCode::SUCCESS)
}

pub fn dump_corpus(flags: &ExperimentFlags, count: usize, file: Option<&Path>) -> Result<ExitCode> {
    let config = flags.resolve()?;
    let spec = config.task.spec();
    let mut rng = lengthgen::rng::stream(config.seed, "corpus");
    let mut out: Box<dyn std::io::Write> = match file {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for length in spec.min_length..=config.max_train_len {
        for _ in 0..count {
            let inst = sample_instance(&spec, length, &mut rng).map_err(|e| anyhow::anyhow!("{e}"))?;
            let line = json!({
                "task": config.task.name(),
                "length": inst.input.len(),
                "input": inst.input,
                "target": inst.target,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn analyze_pca(
    run_dir: &Path,
    fit_length: Option<usize>,
    project_length: Option<usize>,
    count: usize,
) -> Result<ExitCode> {
    let (config, params) = load_run(run_dir)?;
    let fit_len = fit_length.unwrap_or(config.max_train_len);
    let project_len = project_length.unwrap_or_else(|| (3 * fit_len).min(config.eval_max_len));
    let (fit, _) = capture_run(&params, &config, fit_len, count).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (project, _) = capture_run(&params, &config, project_len, count).map_err(|e| anyhow::anyhow!("{e}"))?;
    let layers = pca_fit_project(&fit, &project).map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut csv = String::from("layer,regime,length,seq,slot,pc1,pc2\n");
    for lp in &layers {
        for (regime, length, coords) in
            [("fit", fit_len, &lp.fit_coords), ("project", project_len, &lp.project_coords)]
        {
            let width = coords.len() / count;
            for (row, &(pc1, pc2)) in coords.iter().enumerate() {
                writeln!(csv, "{},{},{},{},{},{},{}", lp.layer, regime, length, row / width, row % width, pc1, pc2)
                    .expect("string write");
            }
        }
    }
    std::fs::write(run_dir.join("pca.csv"), csv)?;
    let summary: Vec<_> = layers
        .iter()
        .map(|lp| json!({"layer": lp.layer, "out_of_support_fraction": lp.out_of_support_fraction}))
        .collect();
    std::fs::write(
        run_dir.join("pca_summary.json"),
        serde_json::to_string_pretty(&json!({
            "fit_length": fit_len,
            "project_length": project_len,
            "sequences_per_length": count,
            "layers": summary,
        }))? + "\n",
    )?;
    for lp in &layers {
        println!("layer {}: out-of-support fraction {:.4}", lp.layer, lp.out_of_support_fraction);
    }
    println!("wrote {}", run_dir.join("pca.csv").display());
    Ok(ExitCode::SUCCESS)
}

pub fn analyze_attention(run_dir: &Path, length: Option<usize>) -> Result<ExitCode> {
    let (config, params) = load_run(run_dir)?;
    let length = length.unwrap_or(config.max_train_len);
    let (_, attention) = capture_run(&params, &config, length, 1).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut csv = String::from("layer,row,col,value\n");
    for att in &attention {
        let summary = attention_summary(att);
        let n = att.width;
        for r in 0..n {
            for c in 0..n {
                writeln!(csv, "{},{},{},{}", att.block, r, c, summary[r * n + c]).expect("string write");
            }
        }
    }
    std::fs::write(run_dir.join("attention.csv"), csv)?;
    println!("wrote {} (length {length})", run_dir.join("attention.csv").display());
    Ok(ExitCode::SUCCESS)
}

pub fn selfcheck() -> Result<ExitCode> {
    let report = run_selfcheck();
    for r in &report.results {
        println!("[{}] {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
        for line in r.detail.lines() {
            println!("    {line}");
        }
    }
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn dump_capture(dir: &Path, params: &ParameterStore<f32>, config: &TrainConfig) -> Result<()> {
    // Activation dumps follow the checkpoint convention: a text manifest
    // plus a flat little-endian f32 payload in manifest order.
    let capture_dir = dir.join("capture");
    rundir::create(&capture_dir)?;
    let lengths = [config.max_train_len, (3 * config.max_train_len).min(config.eval_max_len)];
    let mut manifest = String::new();
    let mut payload: Vec<u8> = Vec::new();
    for &length in &lengths {
        let (dump, attention) = capture_run(params, config, length, 30).map_err(|e| anyhow::anyhow!("{e}"))?;
        for layer in &dump.layers {
            writeln!(
                manifest,
                "activations layer={} length={} rows={} width={} d_model={}",
                layer.layer, length, layer.rows, layer.width, layer.d_model
            )
            .expect("string write");
            for &v in &layer.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        for att in &attention {
            writeln!(
                manifest,
                "attention block={} length={} heads={} width={}",
                att.block, length, att.heads, att.width
            )
            .expect("string write");
            for &v in &att.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(capture_dir.join("manifest.txt"), manifest)?;
    std::fs::write(capture_dir.join("payload.bin"), payload)?;
    Ok(())
}
