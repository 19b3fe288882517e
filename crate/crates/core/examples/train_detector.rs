// Trains the residual autoencoder on baseline windows, calibrates the
// threshold and scores an attacked capture.

use rxads::can_io::{inject_fuzzy, IdSpace};
use rxads::pipeline::{self, RunConfig};
use rxads::windowing::{extract_features, WindowSpec};

pub fn run_example() {
    let mut cfg = RunConfig::with_seed(11);
    cfg.synth.baseline_duration = 6.0;
    cfg.synth.attack_duration = 1.0;
    cfg.model.encoder = vec![16, 8];
    cfg.train.epochs = 15;

    let captures = pipeline::synthesize(&cfg);
    let (schema, features) = pipeline::featurize(&cfg, &captures).unwrap();
    let trained = pipeline::train(&cfg, &schema, &features[0].vectors).unwrap();
    let h = &trained.history;
    println!(
        "layers {:?}: loss {:.5} -> {:.5} over {} epochs",
        trained.bundle.model.dims(),
        h.initial_loss,
        h.final_loss(),
        h.epoch_loss.len()
    );
    println!("threshold {:.5} at quantile {}", trained.bundle.threshold.th, trained.bundle.threshold.quantile);

    let attacked = inject_fuzzy(&captures[0].frames, 2000.0, IdSpace::STANDARD, 99);
    let spec = WindowSpec::for_capture(cfg.window.size, &attacked).unwrap();
    let windows = extract_features(&attacked, &spec, &schema);
    let results = pipeline::detect(&trained.bundle, 1.0, &windows).unwrap();
    let flagged = results.iter().filter(|r| r.predicted.is_anomaly()).count();
    println!("fuzzed baseline: {flagged} of {} windows flagged", results.len());
}

fn main() {
    run_example();
}
