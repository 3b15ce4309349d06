//! Central finite-difference verification of analytic gradients.

use super::tensor::Trainable;

/// Gradients smaller than this on both sides are treated as equal. Central
/// differences of an O(1) loss carry roundoff near `1e-16 / step`, so an
/// exactly-zero analytic gradient (e.g. a bias feeding batch normalization)
/// would otherwise score a relative error close to 1.
pub const ABS_FLOOR: f64 = 1e-9;

/// `|a - n| / (|a| + |n| + 1e-12)`, or 0 when both are below [`ABS_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if analytic.abs() < ABS_FLOOR && numeric.abs() < ABS_FLOOR {
        return 0.0;
    }
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Worst relative error between `analytic` and central differences of `f`
/// taken at `point`. `point` is restored before returning.
pub fn gradient_check(
    point: &mut [f64],
    analytic: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(point.len(), analytic.len(), "gradient length");
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + step;
        let up = f(point);
        point[i] = orig - step;
        let down = f(point);
        point[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
    worst
}

/// Checks the gradients already accumulated in `model` against central
/// differences of `loss`.
///
/// At most `max_per_param` evenly spaced entries of each parameter are
/// probed. `loss` must recompute the scalar from the model's current values.
pub fn check_params<M: Trainable>(
    model: &mut M,
    step: f64,
    max_per_param: usize,
    mut loss: impl FnMut(&mut M) -> f64,
) -> f64 {
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        let n = grads.len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let orig = model.params()[pi].value[i];
            model.params_mut()[pi].value[i] = orig + step;
            let up = loss(model);
            model.params_mut()[pi].value[i] = orig - step;
            let down = loss(model);
            model.params_mut()[pi].value[i] = orig;
            worst = worst.max(relative_error(grads[i], (up - down) / (2.0 * step)));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let coeffs = [0.3, -1.7, 2.5, 0.01];
        let mut x = vec![0.4, 0.2, -0.9, 3.0];
        let err = gradient_check(&mut x, &coeffs, 1e-3, |p| {
            p.iter().zip(&coeffs).map(|(a, b)| a * b).sum()
        });
        assert!(err < 1e-8, "{err}");
        assert_eq!(x, vec![0.4, 0.2, -0.9, 3.0]);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut x = vec![1.0];
        let err = gradient_check(&mut x, &[1.0], 1e-4, |p| p[0] * p[0]);
        assert!(err > 0.3);
    }
}
