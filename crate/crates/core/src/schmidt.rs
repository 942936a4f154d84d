//! Schmidt decomposition of a weighted two-photon kernel.
//!
//! For a kernel sampled on nodes `θ_i` with quadrature weights `w_i`, the
//! weighted matrix `M_ij = F(θ_i, θ_j) sqrt(w_i w_j)` has singular value
//! decomposition `M = U S Vᵀ`. The Schmidt eigenvalues are `λ_n = s_n² / Σ s²`
//! and the mode functions are the singular vectors with the weights divided
//! back out, `u_n(θ_i) = U_in / sqrt(w_i)`, which makes them orthonormal under
//! the grid quadrature.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AngularGrid;
use crate::kernel::TpaKernel;
use crate::scalar::Scalar;

/// Relative eigenvalue floor used unless configured otherwise.
pub const DEFAULT_FLOOR: f64 = 1e-12;


#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Drop modes with `λ_n < floor · λ_1`.
    pub floor: f64,
    /// Keep at most this many modes.
    pub max_modes: Option<usize>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            floor: DEFAULT_FLOOR,
            max_modes: None,
        }
    }
}

impl TruncationPolicy {
    pub fn keep_all() -> Self {
        Self {
            floor: 0.0,
            max_modes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Symmetric eigendecomposition when the matrix is symmetric, SVD otherwise.
    #[default]
    Auto,
    Svd,
    SymmetricEigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation<T> {
    pub retained: usize,
    pub total: usize,
    /// Sum of the dropped `λ_n`.
    pub discarded_mass: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SchmidtDecomposition<T: Scalar> {
    /// Retained eigenvalues, descending. Together with `truncation.discarded_mass`
    /// they sum to one.
    pub lambdas: Vec<T>,
    /// Signal modes `u_n(θ_i)` as columns.
    pub modes_u: DMatrix<T>,
    /// Idler modes `v_n(θ_i)` as columns.
    pub modes_v: DMatrix<T>,
    /// `K = 1 / Σ λ_n²` over the full spectrum.
    pub schmidt_number: T,
    pub truncation: Truncation<T>,
    pub theta: Vec<T>,
    pub weights: Vec<T>,
}

/// Decompose a kernel built by [`crate::kernel::build_kernel`].
pub fn decompose<T: Scalar>(kernel: &TpaKernel<T>, policy: TruncationPolicy) -> Result<SchmidtDecomposition<T>> {
    decompose_matrix(&kernel.weighted, &kernel.grid, policy, Solver::Auto)
}

/// Decompose an arbitrary weighted matrix defined on `grid`.
pub fn decompose_matrix<T: Scalar>(
    weighted: &DMatrix<T>,
    grid: &AngularGrid<T>,
    policy: TruncationPolicy,
    solver: Solver,
) -> Result<SchmidtDecomposition<T>> {
    let n = grid.n_points();
    if weighted.nrows() != n || weighted.ncols() != n {
        return Err(Error::validation(
            "kernel",
            format!("matrix is {}x{}, grid has {n} points", weighted.nrows(), weighted.ncols()),
        ));
    }
    if weighted.iter().any(|x| !x.f64().is_finite()) {
        return Err(Error::Numerical("kernel contains non-finite entries".into()));
    }
    if !(policy.floor >= 0.0) {
        return Err(Error::validation("schmidt.eigenvalue_floor", "must be >= 0"));
    }

    let symmetric = is_symmetric(weighted);
    let use_eigen = match solver {
        Solver::Auto => symmetric,
        Solver::Svd => false,
        Solver::SymmetricEigen => {
            if !symmetric {
                return Err(Error::validation("schmidt.solver", "symmetric solver needs a symmetric kernel"));
            }
            true
        }
    };

    let mut triplets = if use_eigen {
        let eig = eigen_triplets(weighted)?;
        // The symmetric solver can return a zero spectrum for badly scaled
        // single-precision input; Σμ² must equal ‖M‖².
        let mass = eig.iter().fold(T::zero(), |acc, t| acc + t.0 * t.0);
        let expected = weighted.norm_squared();
        if (mass - expected).abs() <= T::of(1e-3) * expected {
            eig
        } else {
            log::warn!("symmetric eigensolver lost spectral mass ({mass} of {expected}), using SVD");
            svd_triplets(weighted)?
        }
    } else {
        svd_triplets(weighted)?
    };

    let total: T = triplets.iter().fold(T::zero(), |acc, t| acc + t.0 * t.0);
    if !(total > T::zero()) {
        return Err(Error::Numerical("kernel is identically zero".into()));
    }

    order_modes(&mut triplets);

    let lambdas_all: Vec<T> = triplets.iter().map(|t| t.0 * t.0 / total).collect();
    let lambda_1 = lambdas_all[0];
    let sum_sq = lambdas_all.iter().fold(T::zero(), |acc, &l| acc + l * l);
    let schmidt_number = T::one() / sum_sq;

    let floor = T::of(policy.floor) * lambda_1;
    let cap = policy.max_modes.unwrap_or(n).max(1);
    let retained = lambdas_all
        .iter()
        .take(cap)
        .take_while(|&&l| l >= floor)
        .count()
        .max(1);
    let discarded_mass = lambdas_all[retained..].iter().fold(T::zero(), |acc, &l| acc + l);

    let sw = grid.sqrt_weights();
    let mut modes_u = DMatrix::<T>::zeros(n, retained);
    let mut modes_v = DMatrix::<T>::zeros(n, retained);
    for (k, (_, u, v)) in triplets.iter().take(retained).enumerate() {
        let sign = sign_of_largest(u, &sw);
        for i in 0..n {
            modes_u[(i, k)] = sign * u[i] / sw[i];
            modes_v[(i, k)] = sign * v[i] / sw[i];
        }
    }

    Ok(SchmidtDecomposition {
        lambdas: lambdas_all[..retained].to_vec(),
        modes_u,
        modes_v,
        schmidt_number,
        truncation: Truncation {
            retained,
            total: n,
            discarded_mass,
        },
        theta: grid.theta().to_vec(),
        weights: grid.weights().to_vec(),
    })
}

/// `K = (Σλ)² / Σλ²`; invariant under scaling and reordering of `λ`.
pub fn schmidt_number<T: Scalar>(lambdas: &[T]) -> Result<T> {
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    for &l in lambdas {
        if !l.f64().is_finite() || l < T::zero() {
            return Err(Error::validation("lambdas", format!("eigenvalues must be finite and >= 0, got {l}")));
        }
        sum += l;
        sum_sq += l * l;
    }
    if !(sum > T::zero()) {
        return Err(Error::validation("lambdas", "all eigenvalues are zero"));
    }
    Ok(sum * sum / sum_sq)
}

impl<T: Scalar> SchmidtDecomposition<T> {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// Largest deviation of the quadrature Gram matrices of `u` and `v` from
    /// the identity.
    pub fn orthonormality_error(&self) -> T {
        gram_error(&self.modes_u, &self.weights).max(gram_error(&self.modes_v, &self.weights))
    }

    /// `Σ_n sqrt(λ_n) (√w u_n)(√w v_n)ᵀ`, comparable with the unit-norm
    /// weighted kernel.
    pub fn reconstruct_weighted(&self) -> DMatrix<T> {
        let n = self.theta.len();
        let sw: Vec<T> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut out = DMatrix::<T>::zeros(n, n);
        for (k, &l) in self.lambdas.iter().enumerate() {
            let s = l.sqrt();
            for j in 0..n {
                let vj = s * self.modes_v[(j, k)] * sw[j];
                for i in 0..n {
                    out[(i, j)] += self.modes_u[(i, k)] * sw[i] * vj;
                }
            }
        }
        out
    }

    /// Sum of the retained eigenvalues plus the discarded mass.
    pub fn total_mass(&self) -> T {
        self.lambdas.iter().fold(self.truncation.discarded_mass, |acc, &l| acc + l)
    }
}

fn is_symmetric<T: Scalar>(m: &DMatrix<T>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax();
    let tol = T::tol(1e-12) * scale;
    let n = m.nrows();
    (0..n).all(|j| (0..j).all(|i| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// `(singular value, weighted u, weighted v)` per mode.
type Triplet<T> = (T, DVector<T>, DVector<T>);

fn eigen_triplets<T: Scalar>(weighted: &DMatrix<T>) -> Result<Vec<Triplet<T>>> {
    let eig = SymmetricEigen::try_new(weighted.clone(), T::EPS, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    Ok((0..weighted.nrows())
        .map(|k| {
            let mu = eig.eigenvalues[k];
            let e = eig.eigenvectors.column(k).into_owned();
            let v = if mu < T::zero() { -e.clone() } else { e.clone() };
            (mu.abs(), e, v)
        })
        .collect())
}

fn svd_triplets<T: Scalar>(weighted: &DMatrix<T>) -> Result<Vec<Triplet<T>>> {
    let svd = SVD::try_new(weighted.clone(), true, true, T::EPS, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD returned no U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD returned no Vᵀ".into()))?;
    Ok((0..svd.singular_values.len())
        .map(|k| (svd.singular_values[k], u.column(k).into_owned(), v_t.row(k).transpose()))
        .collect())
}

/// Descending singular values. The sort is stable, so ties keep solver order.
fn order_modes<T: Scalar>(triplets: &mut [Triplet<T>]) {
    triplets.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
}

/// +1 if the largest-magnitude entry of the unweighted mode is positive.
fn sign_of_largest<T: Scalar>(u: &DVector<T>, sw: &[T]) -> T {
    let mut best = T::zero();
    let mut value = T::zero();
    for (i, &x) in u.iter().enumerate() {
        let y = x / sw[i];
        if y.abs() > best {
            best = y.abs();
            value = y;
        }
    }
    if value < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

fn gram_error<T: Scalar>(modes: &DMatrix<T>, weights: &[T]) -> T {
    let r = modes.ncols();
    let mut worst = T::zero();
    for a in 0..r {
        for b in a..r {
            let dot = (0..modes.nrows()).fold(T::zero(), |acc, i| acc + weights[i] * modes[(i, a)] * modes[(i, b)]);
            let target = if a == b { T::one() } else { T::zero() };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}
