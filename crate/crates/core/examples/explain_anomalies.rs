// Explains DoS detections: the nearest accepted window for each flagged one,
// then the class-level mean deviation ranking.

use rxads::explainer::{aggregate, render_global, GlobalSection};
use rxads::pipeline::{self, RunConfig};

pub fn run_example() {
    let mut cfg = RunConfig::with_seed(3);
    cfg.synth.baseline_duration = 6.0;
    cfg.synth.attack_duration = 1.0;
    cfg.model.encoder = vec![16, 8];
    cfg.train.epochs = 15;

    let captures = pipeline::synthesize(&cfg);
    let (schema, features) = pipeline::featurize(&cfg, &captures).unwrap();
    let trained = pipeline::train(&cfg, &schema, &features[0].vectors).unwrap();
    let bundle = &trained.bundle;

    let dos = features.iter().find(|f| f.name == "dos").unwrap();
    let detections = pipeline::detect(bundle, 1.0, &dos.vectors).unwrap();
    let explanations = pipeline::explain(bundle, 1.0, &cfg.solver, &dos.vectors, &detections, Some(10)).unwrap();

    for e in explanations.iter().take(3) {
        println!(
            "window {:>3}: J {:.4} -> {:.4}, distance {:.4}, {:?} after {} iterations",
            e.window_id,
            e.j,
            e.j_cf,
            e.distance_sq().sqrt(),
            e.status,
            e.iterations
        );
    }
    let global = aggregate(&explanations, "dos").unwrap();
    print!("{}", render_global(&GlobalSection::new(&global, schema.names()), 5));
}

fn main() {
    run_example();
}
