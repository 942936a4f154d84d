//! Cross-check of [`crate::gain::evolve`] against [`crate::oracle`] on seeded
//! random symmetric kernels.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gain::{evolve, GainSettings};
use crate::grid::AngularGrid;
use crate::oracle::{moments, propagate};
use crate::schmidt::{decompose_matrix, Solver, TruncationPolicy};

pub const DEFAULT_KERNELS: usize = 10;
pub const MIN_SIZE: usize = 8;
pub const MAX_SIZE: usize = 32;
pub const GAINS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative error in `⟨N_s⟩`.
    pub photons: f64,
    /// Absolute error in the normally ordered `g²`.
    pub g2: f64,
    /// Largest entry of the symplectic residual.
    pub symplectic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            photons: 1e-8,
            g2: 1e-6,
            symplectic: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Case {
    pub seed: u64,
    pub size: usize,
    #[serde(rename = "gain_G")]
    pub gain_g: f64,
    pub photons_evolve: f64,
    pub photons_oracle: f64,
    pub photons_error: f64,
    pub g2_evolve: f64,
    pub g2_oracle: f64,
    pub g2_error: f64,
    pub symplectic_residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tolerances: Tolerances,
    pub grid_sizes: Vec<usize>,
    pub gains: Vec<f64>,
    pub cases: Vec<Case>,
    /// Index of the case with the largest error relative to its tolerance.
    pub worst: usize,
    pub passed: bool,
}

impl Report {
    pub fn worst_case(&self) -> &Case {
        &self.cases[self.worst]
    }
}

/// Unit-Frobenius symmetric matrix with entries drawn from `U(-1, 1)`.
pub fn random_symmetric_kernel(size: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(size, size, |_, _| rng.random_range(-1.0..1.0));
    let s = &m + m.transpose();
    let norm = s.norm();
    s / norm
}

/// Sizes spread evenly over `[MIN_SIZE, MAX_SIZE]`.
pub fn kernel_sizes(count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![MIN_SIZE; count];
    }
    (0..count)
        .map(|i| MIN_SIZE + ((MAX_SIZE - MIN_SIZE) * i + (count - 1) / 2) / (count - 1))
        .collect()
}

pub fn run(tolerances: Tolerances) -> Result<Report> {
    run_with(DEFAULT_KERNELS, &GAINS, tolerances)
}

pub fn run_with(kernels: usize, gains: &[f64], tolerances: Tolerances) -> Result<Report> {
    let sizes = kernel_sizes(kernels);
    let settings = GainSettings {
        m_l: 1.0,
        transverse_dims: 1,
    };
    let mut cases = Vec::new();
    for (seed, &size) in sizes.iter().enumerate() {
        let seed = seed as u64;
        let kernel = random_symmetric_kernel(size, seed);
        // The quadrature only matters for unweighting the modes.
        let grid = AngularGrid::uniform(1.0, size)?;
        let decomposition = decompose_matrix(&kernel, &grid, TruncationPolicy::keep_all(), Solver::Svd)?;
        for &g in gains {
            let report = evolve(&decomposition, g, settings)?;
            let propagator = propagate(&kernel, g)?;
            let m = moments(&propagator);
            let photons_error = (report.total_photons - m.mean).abs() / m.mean;
            let g2_oracle = m.g2_normal.unwrap_or(f64::NAN);
            let g2_error = (report.g2 - g2_oracle).abs();
            let symplectic_residual = propagator.symplectic_residual();
            let passed = photons_error <= tolerances.photons
                && g2_error <= tolerances.g2
                && symplectic_residual <= tolerances.symplectic;
            cases.push(Case {
                seed,
                size,
                gain_g: g,
                photons_evolve: report.total_photons,
                photons_oracle: m.mean,
                photons_error,
                g2_evolve: report.g2,
                g2_oracle,
                g2_error,
                symplectic_residual,
                passed,
            });
        }
    }
    let score = |c: &Case| {
        (c.photons_error / tolerances.photons)
            .max(c.g2_error / tolerances.g2)
            .max(c.symplectic_residual / tolerances.symplectic)
    };
    let worst = (0..cases.len())
        .fold(0, |w, i| if score(&cases[i]) > score(&cases[w]) { i } else { w });
    let passed = cases.iter().all(|c| c.passed);
    Ok(Report {
        tolerances,
        grid_sizes: sizes,
        gains: gains.to_vec(),
        cases,
        worst,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_cover_the_range() {
        let s = kernel_sizes(10);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], 8);
        assert_eq!(s[9], 32);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn kernels_are_seeded() {
        assert_eq!(random_symmetric_kernel(8, 3), random_symmetric_kernel(8, 3));
        assert_ne!(random_symmetric_kernel(8, 3), random_symmetric_kernel(8, 4));
        assert!((random_symmetric_kernel(12, 1).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_suite_passes() {
        let r = run_with(3, &[1.0, 4.0], Tolerances::default()).unwrap();
        assert!(r.passed, "{:?}", r.worst_case());
        assert_eq!(r.cases.len(), 6);
    }

    #[test]
    fn impossible_tolerance_fails_and_names_worst_case() {
        let tight = Tolerances {
            photons: 0.0,
            g2: 0.0,
            symplectic: 0.0,
        };
        let r = run_with(2, &[2.0], tight).unwrap();
        assert!(!r.passed);
        assert!(r.worst < r.cases.len());
    }
}
