//! Discretization of the emission angle.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::scalar::Scalar;

/// Smallest grid accepted by [`make_grid`].
pub const MIN_POINTS: usize = 8;

/// Angles beyond this are outside the small-angle regime of the amplitude.
pub const SMALL_ANGLE_LIMIT: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Uniform nodes including both endpoints, trapezoid weights.
    #[default]
    Trapezoid,
    /// Gauss–Legendre nodes on `[-theta_max, theta_max]`.
    GaussLegendre,
}

/// Symmetric angular grid with quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid<T> {
    theta: Vec<T>,
    weights: Vec<T>,
    theta_max: T,
    quadrature: Quadrature,
}

/// Validated grid: `theta_max > 0` and at least [`MIN_POINTS`] nodes.
pub fn make_grid<T: Scalar>(theta_max: T, n_points: usize, quadrature: Quadrature) -> Result<AngularGrid<T>> {
    if n_points < MIN_POINTS {
        return Err(Error::validation(
            "grid.n_points",
            format!("need at least {MIN_POINTS} points, got {n_points}"),
        ));
    }
    let grid = match quadrature {
        Quadrature::Trapezoid => AngularGrid::uniform(theta_max, n_points)?,
        Quadrature::GaussLegendre => AngularGrid::gauss_legendre(theta_max, n_points)?,
    };
    if theta_max.f64() > SMALL_ANGLE_LIMIT {
        log::warn!(
            "grid extends to {:.3} rad, beyond the small-angle regime ({SMALL_ANGLE_LIMIT} rad)",
            theta_max.f64()
        );
    }
    Ok(grid)
}

impl<T: Scalar> AngularGrid<T> {
    /// Uniform trapezoid grid on `[-theta_max, theta_max]` with `n >= 2` nodes.
    ///
    /// Nodes are mirrored explicitly so `theta[i] == -theta[n-1-i]` holds bitwise.
    pub fn uniform(theta_max: T, n: usize) -> Result<Self> {
        require_positive("grid.theta_max", theta_max.f64())?;
        if n < 2 {
            return Err(Error::validation("grid.n_points", "a trapezoid grid needs two endpoints"));
        }
        let step = (theta_max + theta_max) / T::of_usize(n - 1);
        let mut theta = vec![T::zero(); n];
        for i in 0..n / 2 {
            let t = -theta_max + step * T::of_usize(i);
            theta[i] = t;
            theta[n - 1 - i] = -t;
        }
        theta[0] = -theta_max;
        theta[n - 1] = theta_max;
        let mut weights = vec![step; n];
        let half = step / T::of(2.0);
        weights[0] = half;
        weights[n - 1] = half;
        Ok(Self {
            theta,
            weights,
            theta_max,
            quadrature: Quadrature::Trapezoid,
        })
    }

    /// Gauss–Legendre grid with `n >= 1` nodes, scaled to `[-theta_max, theta_max]`.
    pub fn gauss_legendre(theta_max: T, n: usize) -> Result<Self> {
        require_positive("grid.theta_max", theta_max.f64())?;
        if n == 0 {
            return Err(Error::validation("grid.n_points", "need at least one node"));
        }
        let (nodes, weights) = gauss_legendre_unit(n);
        Ok(Self {
            theta: nodes.iter().map(|&x| theta_max * T::of(x)).collect(),
            weights: weights.iter().map(|&w| theta_max * T::of(w)).collect(),
            theta_max,
            quadrature: Quadrature::GaussLegendre,
        })
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn n_points(&self) -> usize {
        self.theta.len()
    }

    pub fn theta_max(&self) -> T {
        self.theta_max
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    /// Total angular range covered by the quadrature, `2 theta_max`.
    pub fn range(&self) -> T {
        self.theta_max + self.theta_max
    }

    pub fn sqrt_weights(&self) -> Vec<T> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// Largest spacing between neighbouring nodes.
    pub fn max_spacing(&self) -> T {
        self.theta
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Quadrature of sampled values.
    pub fn integrate(&self, values: &[T]) -> T {
        self.weights
            .iter()
            .zip(values)
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
    }

    /// Value at `theta = 0`: the middle node for odd grids, the mean of the two
    /// middle nodes for even ones.
    pub fn center_value(&self, values: &[T]) -> T {
        let n = values.len();
        if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / T::of(2.0)
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
///
/// Newton iteration on the three-term recurrence, always in `f64`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
