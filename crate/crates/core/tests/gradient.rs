use ndarray::Array2;
use negface::enlargement::{Architecture, DropoutMasks, TrainingModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Largest relative disagreement between analytic and central-difference
/// gradients; pairs where both are below `floor` are compared absolutely.
fn max_relative_error(batch_norm: bool, dropout: f64, seed: u64) -> f64 {
    let arch = Architecture {
        input_dim: 4,
        hidden: vec![6],
        output_dim: 8,
    };
    let mut model = TrainingModel::new(&arch, 3, batch_norm, dropout, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_simple_fn((5, 4), || normal.sample(&mut rng));
    let labels = [0, 1, 2, 1, 0];
    let masks = DropoutMasks::sample(&model.layer_widths(), 5, dropout, &mut rng);

    let (_, grads) = model.loss_and_gradients(&x, &labels, &masks);
    let analytic: Vec<Vec<f64>> = grads.as_slices().iter().map(|s| s.to_vec()).collect();
    let h = 1e-6;
    let floor = 1e-7;
    let mut worst = 0.0f64;
    for (p, expected) in analytic.iter().enumerate() {
        for (i, &a) in expected.iter().enumerate() {
            let original = model.parameters_mut()[p][i];
            model.parameters_mut()[p][i] = original + h;
            let up = model.loss(&x, &labels, &masks);
            model.parameters_mut()[p][i] = original - h;
            let down = model.loss(&x, &labels, &masks);
            model.parameters_mut()[p][i] = original;
            let numeric = (up - down) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < floor { (a - numeric).abs() / floor } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences_with_batch_norm() {
    let e = max_relative_error(true, 0.0, 1);
    assert!(e <= 1e-4, "relative error {e}");
}

#[test]
fn gradients_match_finite_differences_without_batch_norm() {
    let e = max_relative_error(false, 0.0, 2);
    assert!(e <= 1e-4, "relative error {e}");
}

#[test]
fn gradients_match_finite_differences_with_dropout_masks() {
    let e = max_relative_error(true, 0.5, 3);
    assert!(e <= 1e-4, "relative error {e}");
}
