//! Isotropic total-variation proximal operator (Chambolle's dual projection).

use ndarray::{Array2, ArrayView2};

/// Discrete isotropic total variation with forward differences.
pub fn total_variation(u: ArrayView2<f64>) -> f64 {
    let (h, w) = u.dim();
    let mut tv = 0.0;
    for i in 0..h {
        for j in 0..w {
            let gx = if i + 1 < h { u[[i + 1, j]] - u[[i, j]] } else { 0.0 };
            let gy = if j + 1 < w { u[[i, j + 1]] - u[[i, j]] } else { 0.0 };
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}

fn divergence(px: &Array2<f64>, py: &Array2<f64>) -> Array2<f64> {
    let (h, w) = px.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let dx = if h == 1 {
            0.0
        } else if i == 0 {
            px[[i, j]]
        } else if i + 1 == h {
            -px[[i - 1, j]]
        } else {
            px[[i, j]] - px[[i - 1, j]]
        };
        let dy = if w == 1 {
            0.0
        } else if j == 0 {
            py[[i, j]]
        } else if j + 1 == w {
            -py[[i, j - 1]]
        } else {
            py[[i, j]] - py[[i, j - 1]]
        };
        dx + dy
    })
}

/// Approximately solves `argmin_u 0.5 |u - f|^2 + lambda TV(u)` with `iters`
/// dual steps of size 1/8.
pub fn tv_prox(f: ArrayView2<f64>, lambda: f64, iters: usize) -> Array2<f64> {
    if lambda <= 0.0 {
        return f.to_owned();
    }
    let (h, w) = f.dim();
    let tau = 0.125;
    let mut px = Array2::<f64>::zeros((h, w));
    let mut py = Array2::<f64>::zeros((h, w));
    for _ in 0..iters {
        let div = divergence(&px, &py);
        let v = Array2::from_shape_fn((h, w), |(i, j)| div[[i, j]] - f[[i, j]] / lambda);
        for i in 0..h {
            for j in 0..w {
                let gx = if i + 1 < h { v[[i + 1, j]] - v[[i, j]] } else { 0.0 };
                let gy = if j + 1 < w { v[[i, j + 1]] - v[[i, j]] } else { 0.0 };
                let norm = 1.0 + tau * (gx * gx + gy * gy).sqrt();
                px[[i, j]] = (px[[i, j]] + tau * gx) / norm;
                py[[i, j]] = (py[[i, j]] + tau * gy) / norm;
            }
        }
    }
    let div = divergence(&px, &py);
    Array2::from_shape_fn((h, w), |(i, j)| f[[i, j]] - lambda * div[[i, j]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, w) = (6, 4);
        let u = Array2::from_shape_simple_fn((h, w), || rng.random_range(-1.0..1.0));
        let px = Array2::from_shape_simple_fn((h, w), || rng.random_range(-1.0..1.0));
        let py = Array2::from_shape_simple_fn((h, w), || rng.random_range(-1.0..1.0));
        let mut lhs = 0.0;
        for i in 0..h {
            for j in 0..w {
                let gx = if i + 1 < h { u[[i + 1, j]] - u[[i, j]] } else { 0.0 };
                let gy = if j + 1 < w { u[[i, j + 1]] - u[[i, j]] } else { 0.0 };
                lhs += gx * px[[i, j]] + gy * py[[i, j]];
            }
        }
        let rhs = -(divergence(&px, &py) * &u).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn denoises_piecewise_constant_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = Array2::from_shape_fn((32, 8), |(i, _)| if i < 16 { 1.0 } else { -1.0 });
        let noisy = &target + &Array2::from_shape_simple_fn((32, 8), || rng.random_range(-0.1..0.1));
        let out = tv_prox(noisy.view(), 0.05, 300);
        assert!(total_variation(out.view()) < total_variation(noisy.view()));
        let err = |a: &Array2<f64>| (a - &target).mapv(|v| v * v).sum();
        assert!(err(&out) < err(&noisy));
    }

    #[test]
    fn zero_lambda_is_identity_and_constants_are_fixed() {
        let f = Array2::from_elem((5, 3), 2.5);
        assert_eq!(tv_prox(f.view(), 0.0, 10), f);
        let out = tv_prox(f.view(), 1.0, 50);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }
}
