//! Brute-force Bogoliubov propagation in the plane-wave basis.
//!
//! With the interaction `iħΓ Σ_ij M_ij a_i† b_j† + h.c.` and a symmetric
//! weighted kernel `M`, the Heisenberg equations `da/dG = M b†`,
//! `db†/dG = M a` integrate to
//!
//! `a_out = cosh(G M) a_in + sinh(G M) b_in†`
//!
//! (and the same with `a ↔ b`). The matrix functions are evaluated through the
//! eigendecomposition of `M`. This never forms Schmidt modes or photon numbers
//! per mode, so it checks [`crate::gain`] independently.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::TpaKernel;
use crate::scalar::Scalar;

/// Oracle grids are for validation only.
pub const MAX_ORACLE_POINTS: usize = 64;

#[derive(Clone, Debug)]
pub struct BogoliubovPropagator<T: Scalar> {
    /// `G M`.
    pub coupling: DMatrix<T>,
    /// `a_out = transform_a a_in + transform_b b_in†`.
    pub transform_a: DMatrix<T>,
    pub transform_b: DMatrix<T>,
}

pub fn propagate_kernel<T: Scalar>(kernel: &TpaKernel<T>, gain_g: T) -> Result<BogoliubovPropagator<T>> {
    propagate(&kernel.weighted, gain_g)
}

pub fn propagate<T: Scalar>(weighted: &DMatrix<T>, gain_g: T) -> Result<BogoliubovPropagator<T>> {
    let n = weighted.nrows();
    if n != weighted.ncols() || n == 0 {
        return Err(Error::validation("kernel", "coupling matrix must be square and non-empty"));
    }
    if n > MAX_ORACLE_POINTS {
        return Err(Error::validation(
            "grid.n_points",
            format!("oracle supports at most {MAX_ORACLE_POINTS} points, got {n}"),
        ));
    }
    if !gain_g.f64().is_finite() || gain_g < T::zero() {
        return Err(Error::validation("gain.G", "must be finite and >= 0"));
    }
    let scale = weighted.amax();
    let asym = (weighted - weighted.transpose()).amax();
    if asym > T::tol(1e-12) * scale {
        return Err(Error::validation(
            "kernel",
            format!("oracle needs a symmetric kernel, asymmetry {asym:e}"),
        ));
    }

    let coupling = weighted * gain_g;
    let eig = SymmetricEigen::try_new(coupling.clone(), T::EPS, 0)
        .ok_or_else(|| Error::Numerical("eigendecomposition of the coupling did not converge".into()))?;
    let q = &eig.eigenvectors;
    let spectral = |f: &dyn Fn(T) -> T| {
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
        q * d * q.transpose()
    };
    let transform_a = spectral(&|x: T| x.cosh());
    let transform_b = spectral(&|x: T| x.sinh());
    Ok(BogoliubovPropagator {
        coupling,
        transform_a,
        transform_b,
    })
}

impl<T: Scalar> BogoliubovPropagator<T> {
    /// Largest entry of `A Aᵀ - B Bᵀ - I` and of `A Bᵀ - B Aᵀ`; both vanish when
    /// the canonical commutators are preserved.
    pub fn symplectic_residual(&self) -> T {
        let a = &self.transform_a;
        let b = &self.transform_b;
        let n = a.nrows();
        let first = (a * a.transpose() - b * b.transpose() - DMatrix::<T>::identity(n, n)).amax();
        let second = (a * b.transpose() - b * a.transpose()).amax();
        first.max(second)
    }
}

/// Signal photon-number moments over the input vacuum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments<T> {
    pub mean: T,
    /// `⟨N_s²⟩`, including the shot-noise term.
    pub second: T,
    /// `⟨N_s²⟩ / ⟨N_s⟩²`; absent when `⟨N_s⟩ = 0`.
    pub g2: Option<T>,
    /// Normally ordered `⟨:N_s²:⟩ / ⟨N_s⟩² = g2 - 1/⟨N_s⟩`, the high-brightness
    /// value that the mode-counting formula reproduces.
    pub g2_normal: Option<T>,
}

/// Moments of `N_s = Σ_i a_i† a_i` from Wick pairings of the transform.
///
/// With `n = B Bᵀ = ⟨a† a⟩` and `A Aᵀ = ⟨a a†⟩` (the anomalous signal-signal
/// averages vanish for a two-beam squeezer),
/// `⟨N²⟩ = (tr n)² + tr(n · A Aᵀ)`.
pub fn moments<T: Scalar>(propagator: &BogoliubovPropagator<T>) -> Moments<T> {
    let a = &propagator.transform_a;
    let b = &propagator.transform_b;
    let normal = b * b.transpose();
    let anti = a * a.transpose();
    let mean = normal.trace();
    let second = mean * mean + normal.component_mul(&anti).sum();
    let (g2, g2_normal) = if mean > T::zero() {
        let g2 = second / (mean * mean);
        (Some(g2), Some(g2 - T::one() / mean))
    } else {
        (None, None)
    };
    Moments {
        mean,
        second,
        g2,
        g2_normal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut s = &m + m.transpose();
        let norm = s.norm();
        s /= norm;
        s
    }

    #[test]
    fn zero_gain_is_identity() {
        let p = propagate(&random_symmetric(6, 1), 0.0).unwrap();
        assert!((p.transform_a.clone() - DMatrix::identity(6, 6)).amax() < 1e-15);
        assert!(p.transform_b.amax() < 1e-15);
        let m = moments(&p);
        assert_eq!(m.mean, 0.0);
        assert!(m.g2.is_none() && m.g2_normal.is_none());
    }

    #[test]
    fn single_mode_squeezer() {
        let p = propagate(&DMatrix::from_element(1, 1, 1.0), 1.5).unwrap();
        assert!((p.transform_a[(0, 0)] - 1.5_f64.cosh()).abs() < 1e-14);
        assert!((p.transform_b[(0, 0)] - 1.5_f64.sinh()).abs() < 1e-14);
        let m = moments(&p);
        let n = 1.5_f64.sinh().powi(2);
        assert!((m.mean - n).abs() < 1e-12);
        // Thermal statistics: ⟨N²⟩ = 2N² + N.
        assert!((m.g2_normal.unwrap() - 2.0).abs() < 1e-12);
        assert!((m.g2.unwrap() - (2.0 + 1.0 / n)).abs() < 1e-12);
    }

    #[test]
    fn two_equal_modes_give_three_halves() {
        let m = DMatrix::from_diagonal_element(2, 2, 1.0 / 2f64.sqrt());
        let mo = moments(&propagate(&m, 6.0).unwrap());
        assert!((mo.g2_normal.unwrap() - 1.5).abs() < 1e-12);
        // Raw ratio approaches 1.5 only in the bright limit.
        assert!((mo.g2.unwrap() - 1.5).abs() < 1e-3);
    }

    #[test]
    fn symplectic_for_random_kernels() {
        for seed in 0..5 {
            for g in [0.5, 1.0, 2.0, 4.0] {
                let p = propagate(&random_symmetric(16, seed), g).unwrap();
                assert!(p.symplectic_residual() < 1e-10, "seed {seed} G {g}");
            }
        }
    }

    #[test]
    fn moments_invariant_under_orthogonal_relabeling() {
        let m = random_symmetric(12, 7);
        let q = random_symmetric(12, 8).qr().q();
        let rotated = &q * &m * q.transpose();
        for g in [0.5, 2.0, 4.0] {
            let a = moments(&propagate(&m, g).unwrap());
            let b = moments(&propagate(&rotated, g).unwrap());
            assert!((a.mean - b.mean).abs() < 1e-9 * a.mean);
            assert!((a.second - b.second).abs() < 1e-9 * a.second);
        }
    }

    /// Integrate dA/dG = M B, dB/dG = M A with classical RK4.
    #[test]
    fn closed_form_matches_heisenberg_integration() {
        let m = random_symmetric(8, 3);
        let g_final = 2.0;
        let steps = 4000;
        let h = g_final / steps as f64;
        let mut a = DMatrix::<f64>::identity(8, 8);
        let mut b = DMatrix::<f64>::zeros(8, 8);
        let deriv = |a: &DMatrix<f64>, b: &DMatrix<f64>| (&m * b, &m * a);
        for _ in 0..steps {
            let (k1a, k1b) = deriv(&a, &b);
            let (k2a, k2b) = deriv(&(&a + &k1a * (h / 2.0)), &(&b + &k1b * (h / 2.0)));
            let (k3a, k3b) = deriv(&(&a + &k2a * (h / 2.0)), &(&b + &k2b * (h / 2.0)));
            let (k4a, k4b) = deriv(&(&a + &k3a * h), &(&b + &k3b * h));
            a += (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (h / 6.0);
            b += (k1b + k2b * 2.0 + k3b * 2.0 + k4b) * (h / 6.0);
        }
        let p = propagate(&m, g_final).unwrap();
        assert!((&p.transform_a - a).amax() < 1e-10);
        assert!((&p.transform_b - b).amax() < 1e-10);
    }

    #[test]
    fn rejects_invalid_couplings() {
        let mut m = random_symmetric(4, 2);
        m[(0, 1)] += 0.1;
        assert!(matches!(propagate(&m, 1.0), Err(Error::Validation { .. })));
        let big = DMatrix::<f64>::identity(65, 65);
        assert!(matches!(propagate(&big, 1.0), Err(Error::Validation { .. })));
        assert!(propagate(&DMatrix::<f64>::identity(3, 3), -1.0).is_err());
    }
}
