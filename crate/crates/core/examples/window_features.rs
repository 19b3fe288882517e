// Windows a capture into half-overlapping slices and prints a few features
// of a normal and an attacked window side by side.

use rxads::can_io::{inject_dos, synth_baseline, SynthConfig};
use rxads::windowing::{extract_features, FeatureSchema, WindowSpec};

pub fn run_example() {
    let baseline = synth_baseline(1.0, 7, &SynthConfig::default());
    let schema = FeatureSchema::fit(&baseline, false).unwrap();
    println!("{} features ({} baseline ids)", schema.len(), schema.baseline_ids().len());

    let spec = WindowSpec::for_capture(0.05, &baseline).unwrap();
    let normal = extract_features(&baseline, &spec, &schema);
    let attacked = extract_features(&inject_dos(&baseline, 5000.0, 8), &spec, &schema);
    println!("{} windows of {} s, stride {} s", normal.len(), spec.win_size(), spec.stride());

    let k = normal.len() / 2;
    println!("{:<24} {:>12} {:>12}", "feature (window {k})", "normal", "dos");
    for name in ["no_of_records", "no_of_ids", "high_priority_count", "mean_time_interval", "no_of_req_msgs"] {
        let i = schema.index_of(name).unwrap();
        println!("{name:<24} {:>12.6} {:>12.6}", normal[k].values[i], attacked[k].values[i]);
    }
    println!("labels: {} / {}", normal[k].window_label.as_str(), attacked[k].window_label.as_str());
}

fn main() {
    run_example();
}
