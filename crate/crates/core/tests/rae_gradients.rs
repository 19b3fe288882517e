mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{input_error, parameter_error, random_draw, GRADIENT_TOL as TOL};

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for draw in 0..100 {
        let (model, batch) = random_draw(&mut rng);
        let pe = parameter_error(&model, &batch);
        assert!(pe < TOL, "draw {draw} dims {:?}: parameter gradient error {pe:e}", model.dims());
        for x in &batch {
            let ie = input_error(&model, x);
            assert!(ie < TOL, "draw {draw} dims {:?}: input gradient error {ie:e}", model.dims());
        }
    }
}

#[test]
fn error_and_gradient_agree_with_separate_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (model, batch) = random_draw(&mut rng);
        let (j, g) = model.error_and_input_gradient(&batch[0]).unwrap();
        assert_eq!(j, model.sample_error(&batch[0]).unwrap());
        assert_eq!(g, model.input_gradient(&batch[0]).unwrap());
    }
}

#[test]
fn loss_and_gradients_agree_with_batch_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let (model, batch) = random_draw(&mut rng);
        let (loss, _) = model.loss_and_gradients(&batch).unwrap();
        assert!((loss - model.batch_loss(&batch).unwrap()).abs() <= 1e-12 * loss.abs().max(1.0));
    }
}
