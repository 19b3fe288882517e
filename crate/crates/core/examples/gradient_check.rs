// Compares the analytic input gradient of a small autoencoder against
// central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rxads::rae::RaeModel;

pub fn run_example() {
    let model = RaeModel::new(&[6, 4, 2, 4, 6], 1e-3, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();

    let analytic = model.input_gradient(&x).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let (mut up, mut down) = (x.clone(), x.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (model.sample_error(&up).unwrap() - model.sample_error(&down).unwrap()) / (2.0 * h);
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
        println!("dJ/dx[{i}] analytic {:+.8e} numeric {:+.8e}", analytic[i], fd);
    }
    println!("worst relative error {worst:.2e}");
}

fn main() {
    run_example();
}
