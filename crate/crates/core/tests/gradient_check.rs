//! Backprop versus central finite differences on a model small enough to
//! perturb every parameter.

use abuckets_core::model::{loss_and_grad, ModelConfig, ModelParams};

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Denominator floor so that near-zero gradients compare absolutely.
const FLOOR: f64 = 1e-6;

fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: 8,
        model_dim: 8,
        head_dim: 4,
        n_heads: 2,
        n_layers: 1,
        max_context: 8,
        train_base: 10_000.0,
    }
}

fn numeric_grad(params: &ModelParams<f64>, tokens: &[u32], targets: &[Option<u32>], base: f64) -> Vec<f64> {
    let mut work = params.clone();
    (0..params.len())
        .map(|i| {
            let orig = work.as_slice()[i];
            work.as_mut_slice()[i] = orig + STEP;
            let (up, _) = loss_and_grad(&work, tokens, targets, base).unwrap();
            work.as_mut_slice()[i] = orig - STEP;
            let (down, _) = loss_and_grad(&work, tokens, targets, base).unwrap();
            work.as_mut_slice()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn worst_relative_error(analytic: &[f64], numeric: &[f64]) -> (usize, f64) {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best })
}

#[test]
fn backprop_matches_finite_differences() {
    let cfg = tiny();
    let params = ModelParams::<f64>::init(&cfg, 42).unwrap();
    assert!(params.len() <= 1000, "instance has {} parameters", params.len());
    let tokens = [3, 1, 7, 2, 2, 5, 0, 6];
    let targets = [Some(1), Some(7), None, Some(2), Some(5), Some(0), Some(6), Some(4)];
    for base in [10_000.0, 17_500.0, 3.0] {
        let (_, analytic) = loss_and_grad(&params, &tokens, &targets, base).unwrap();
        let numeric = numeric_grad(&params, &tokens, &targets, base);
        let (i, err) = worst_relative_error(&analytic, &numeric);
        assert!(
            err < REL_TOL,
            "base {base}: parameter {i} analytic {} numeric {} (rel {err:e})",
            analytic[i],
            numeric[i]
        );
        assert!(analytic.iter().any(|g| g.abs() > 1e-3));
    }
}

#[test]
fn two_layer_gradients_match() {
    let cfg = ModelConfig {
        vocab_size: 5,
        model_dim: 4,
        head_dim: 2,
        n_heads: 2,
        n_layers: 2,
        max_context: 6,
        train_base: 10_000.0,
    };
    let params = ModelParams::<f64>::init(&cfg, 9).unwrap();
    let tokens = [4, 0, 1, 3, 2, 2];
    let targets = [Some(0), Some(1), Some(3), Some(2), Some(2), Some(4)];
    let (_, analytic) = loss_and_grad(&params, &tokens, &targets, 20_000.0).unwrap();
    let numeric = numeric_grad(&params, &tokens, &targets, 20_000.0);
    let (i, err) = worst_relative_error(&analytic, &numeric);
    assert!(err < REL_TOL, "parameter {i}: rel {err:e}");
}
