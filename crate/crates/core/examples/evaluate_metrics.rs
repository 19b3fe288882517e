// Confusion counts and the derived rates for a handful of hand-made
// predictions, including the degenerate no-positive case.

use rxads::detector::Prediction;
use rxads::eval::{confusion, Metrics};
use rxads::windowing::WindowLabel;

pub fn run_example() {
    let predictions = [
        Prediction::Anomaly,
        Prediction::Anomaly,
        Prediction::Normal,
        Prediction::Normal,
        Prediction::Anomaly,
    ];
    let labels = [
        WindowLabel::Attack,
        WindowLabel::Normal,
        WindowLabel::Attack,
        WindowLabel::Normal,
        WindowLabel::Attack,
    ];
    let m = confusion(&predictions, &labels).unwrap();
    println!("tp {} fp {} tn {} fn {}", m.tp, m.fp, m.tn, m.fn_);
    println!(
        "accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3} specificity {:.3}",
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.specificity()
    );

    let all_normal = Metrics::from_counts(0, 0, 10, 0);
    println!("all-normal capture: precision {} (degenerate: {:?})", all_normal.precision, all_normal.degenerate);
}

fn main() {
    run_example();
}
