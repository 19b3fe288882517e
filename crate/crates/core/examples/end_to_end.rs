// Every stage on disk, exactly as the command-line tool runs them: synthetic
// captures, features, training, detection, explanation, metrics, summary.

use rxads::pipeline::{self, RunConfig};

pub fn run_example() {
    let mut cfg = RunConfig::with_seed(21);
    cfg.out_dir = std::env::temp_dir().join(format!("rxads_end_to_end_{}", std::process::id()));
    cfg.synth.baseline_duration = 6.0;
    cfg.synth.attack_duration = 1.0;
    cfg.model.encoder = vec![16, 8];
    cfg.train.epochs = 15;
    cfg.max_explanations = Some(20);

    let summary = pipeline::run_all(&cfg).unwrap();
    print!("{summary}");
    println!("outputs under {}", cfg.out_dir.display());
    std::fs::remove_dir_all(&cfg.out_dir).unwrap();
}

fn main() {
    run_example();
}
