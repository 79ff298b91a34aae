//! Scalar pieces of the ℓ1 penalty and its Moreau envelope (Huber smoothing).

use nalgebra::DVector;

/// Soft thresholding; ties at the kink resolve to exactly zero.
#[inline]
pub fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Huber function h_α: t²/(2α) for |t| ≤ α, |t| − α/2 beyond. h_0 = |·|.
#[inline]
pub fn huber(t: f64, alpha: f64) -> f64 {
    let a = t.abs();
    if alpha > 0.0 && a <= alpha {
        t * t / (2.0 * alpha)
    } else {
        a - alpha / 2.0
    }
}

/// Derivative of h_α (α > 0): clip(t/α, −1, 1).
#[inline]
pub fn huber_grad(t: f64, alpha: f64) -> f64 {
    (t / alpha).clamp(-1.0, 1.0)
}

/// Moreau envelope of the ℓ1 norm, M_α(θ) = Σ_j h_α(θ_j); M_0 = ‖θ‖₁.
pub fn moreau_l1(theta: &DVector<f64>, alpha: f64) -> f64 {
    assert!(alpha >= 0.0, "smoothing parameter must be >= 0");
    theta.iter().map(|&t| huber(t, alpha)).sum()
}

/// Penalty used by the coordinate-descent kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    L1,
    Huber(f64),
}

impl Penalty {
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha > 0.0 {
            Penalty::Huber(alpha)
        } else {
            Penalty::L1
        }
    }

    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            Penalty::L1 => t.abs(),
            Penalty::Huber(a) => huber(t, a),
        }
    }

    /// argmin_t (a/2)(t − u)² + lam·pen(t), for a > 0.
    #[inline]
    pub fn coord_min(self, a: f64, u: f64, lam: f64) -> f64 {
        match self {
            Penalty::L1 => soft_threshold(u, lam / a),
            Penalty::Huber(alpha) => {
                let k = lam / a;
                if u.abs() <= alpha + k {
                    u * alpha / (alpha + k)
                } else {
                    u - k * u.signum()
                }
            }
        }
    }

    /// Optimality violation at coordinate value `t` given the scaled negative
    /// smooth gradient `s` (so that stationarity reads s ∈ ∂pen(t)).
    #[inline]
    pub fn violation(self, t: f64, s: f64) -> f64 {
        match self {
            Penalty::L1 => {
                if t != 0.0 {
                    (s - t.signum()).abs()
                } else {
                    (s.abs() - 1.0).max(0.0)
                }
            }
            Penalty::Huber(a) => (s - huber_grad(t, a)).abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moreau_basics() {
        let th = DVector::from_vec(vec![1.5, -0.2, 0.0]);
        assert_eq!(moreau_l1(&th, 0.0), 1.7);
        let alpha = 0.3;
        let v = moreau_l1(&DVector::from_vec(vec![2.0 * alpha]), alpha);
        assert!((v - 1.5 * alpha).abs() < 1e-15);
    }

    #[test]
    fn kink_tie_is_zero() {
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn moreau_sandwich(v in proptest::collection::vec(-5.0f64..5.0, 1..20), alpha in 0.0f64..2.0) {
            let th = DVector::from_vec(v);
            let m = moreau_l1(&th, alpha);
            let l1 = th.abs().sum();
            let p = th.len() as f64;
            prop_assert!(m <= l1 + 1e-12);
            prop_assert!(m >= l1 - p * alpha / 2.0 - 1e-12);
        }

        #[test]
        fn huber_prox_is_stationary(u in -10.0f64..10.0, a in 0.1f64..5.0, lam in 0.0f64..3.0, alpha in 1e-6f64..1.0) {
            let t = Penalty::Huber(alpha).coord_min(a, u, lam);
            // a(t - u) + lam h'(t) = 0
            prop_assert!((a * (t - u) + lam * huber_grad(t, alpha)).abs() < 1e-9 * (1.0 + a * u.abs()));
        }

        #[test]
        fn huber_prox_tends_to_soft_threshold(u in -10.0f64..10.0, a in 0.1f64..5.0, lam in 0.0f64..3.0) {
            let t = Penalty::Huber(1e-9).coord_min(a, u, lam);
            prop_assert!((t - soft_threshold(u, lam / a)).abs() < 1e-8);
        }
    }
}
