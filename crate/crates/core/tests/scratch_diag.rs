use lengthgen::harness::TrainConfig;
use lengthgen::model::{accuracy_counts, forward, Batch, CaptureOptions};
use lengthgen::nn::{load_checkpoint, Tape};
use lengthgen::rng::{stream, stream_indexed};
use lengthgen::tasks::{sample_instance, TaskId};

#[test]
#[ignore]
fn assignment_robustness() {
    let dir = std::env::var("DIAG_RUN").expect("set DIAG_RUN to a run dir");
    let params = load_checkpoint(std::path::Path::new(&dir).join("checkpoint").as_path()).unwrap();
    let mut cfg = TrainConfig::desk(TaskId::EvenPairs, "sincos+rand");
    cfg.seed = 1;
    let model_cfg = cfg.model_config().unwrap();
    let enc = cfg.encoding_scheme().unwrap();
    let spec = cfg.task.spec();
    let length = 60usize;
    let padded = spec.padded_length(length);
    let mut content = stream_indexed(99, "diag-content", length as u64);
    let instances: Vec<_> = (0..200).map(|_| sample_instance(&spec, length, &mut content).unwrap()).collect();
    let mut accs: Vec<(f64, u32, u32, u32)> = Vec::new();
    for draw in 0..30u64 {
        let mut pos_rng = stream(draw, "diag-positions");
        let positions = enc.assign_positions(padded, &mut pos_rng).unwrap();
        let idx = positions.indices().to_vec();
        let min_gap = idx[1] - idx[0];
        let batch = Batch::from_instances(&spec, &instances, positions).unwrap();
        let mut tape: Tape<f32> = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &model_cfg, &batch, &CaptureOptions::default()).unwrap();
        let (c, t) = accuracy_counts(tape.data(out.logits), model_cfg.output_vocab, &batch);
        accs.push((c as f64 / t as f64, idx[0], idx[idx.len() - 1], min_gap));
    }
    accs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (acc, first, last, min_gap) in &accs {
        println!("acc {acc:.3} first {first} last {last} gap12 {min_gap}");
    }
    let mean = accs.iter().map(|a| a.0).sum::<f64>() / accs.len() as f64;
    println!("mean over 30 draws: {mean:.4}");
}
