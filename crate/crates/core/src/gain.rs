//! High-gain evolution of the Schmidt modes and the observables built on it.
//!
//! In the interaction picture every Schmidt pair `(A_n, B_n)` is an independent
//! two-mode squeezer, `A_n → A_n cosh(G√λ_n) + B_n† sinh(G√λ_n)`, so the signal
//! photon number in mode `n` is `N_n = sinh²(G√λ_n)`. The free phases `ω_s t`,
//! `ω_i t` drop out of every photon-number observable.
//!
//! `g²` uses the mode-counting form `1 + 1/m`, which equals the normally
//! ordered `⟨:N²:⟩/⟨N⟩²` of a multimode thermal beam. The raw ratio
//! `⟨N²⟩/⟨N⟩²` exceeds it by `1/⟨N⟩`; see [`crate::oracle::Moments`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schmidt::SchmidtDecomposition;
use crate::scalar::Scalar;

/// Largest `G√λ_1` accepted; `sinh²` of more overflows `f64`.
pub const MAX_MODE_GAIN: f64 = 350.0;

/// Number of frequency modes passed by the narrowband filter.
pub const DEFAULT_FREQUENCY_MODES: f64 = 1.25;

/// A profile counts as ring-shaped when its center is below this fraction of
/// its maximum.
pub const DIP_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSettings<T> {
    /// Frequency (longitudinal) mode count `m_l >= 1`.
    pub m_l: T,
    /// 1 for the simulated angle only; 2 assumes x/y factorization with
    /// identical marginals, so the transverse mode count is squared.
    pub transverse_dims: u8,
}

impl<T: Scalar> Default for GainSettings<T> {
    fn default() -> Self {
        Self {
            m_l: T::of(DEFAULT_FREQUENCY_MODES),
            transverse_dims: 1,
        }
    }
}

impl<T: Scalar> GainSettings<T> {
    pub fn validate(&self) -> Result<()> {
        let m_l = self.m_l.f64();
        if !m_l.is_finite() || m_l < 1.0 {
            return Err(Error::validation("gain.m_l", format!("must be >= 1, got {m_l}")));
        }
        if !(1..=2).contains(&self.transverse_dims) {
            return Err(Error::validation(
                "gain.transverse_dims",
                format!("must be 1 or 2, got {}", self.transverse_dims),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport<T> {
    #[serde(rename = "gain_G")]
    pub gain_g: T,
    pub per_mode_photons: Vec<T>,
    pub total_photons: T,
    /// `p_n = N_n / ⟨N_s⟩`; the `G → 0` limit `p_n = λ_n` at zero gain.
    pub weights: Vec<T>,
    pub k_eff_spatial: T,
    pub m_l: T,
    pub transverse_dims: u8,
    pub g2: T,
    pub farfield: Vec<T>,
    pub fwhm_theta: T,
    pub central_dip: bool,
}

/// Photon numbers and observables after parametric gain `G`.
pub fn evolve<T: Scalar>(
    decomposition: &SchmidtDecomposition<T>,
    gain_g: T,
    settings: GainSettings<T>,
) -> Result<GainReport<T>> {
    settings.validate()?;
    let Amplified {
        per_mode_photons,
        total_photons,
        weights,
    } = amplify(&decomposition.lambdas, gain_g)?;
    let k_eff_spatial = inverse_participation(&weights);
    let g2 = g2_from_modes(&weights, settings.m_l, settings.transverse_dims)?;

    let shape = farfield_profile(decomposition, &weights);
    let farfield = shape.intensity.iter().map(|&x| x * total_photons).collect();

    Ok(GainReport {
        gain_g,
        per_mode_photons,
        total_photons,
        weights,
        k_eff_spatial,
        m_l: settings.m_l,
        transverse_dims: settings.transverse_dims,
        g2,
        farfield,
        fwhm_theta: shape.fwhm,
        central_dip: shape.central_dip,
    })
}

/// Photon numbers of independently amplified Schmidt modes.
#[derive(Clone, Debug, PartialEq)]
pub struct Amplified<T> {
    pub per_mode_photons: Vec<T>,
    pub total_photons: T,
    /// `N_n / Σ N`, or `λ_n / Σ λ` at zero gain.
    pub weights: Vec<T>,
}

/// `N_n = sinh²(G √λ_n)` for a descending spectrum.
pub fn amplify<T: Scalar>(lambdas: &[T], gain_g: T) -> Result<Amplified<T>> {
    let g = gain_g.f64();
    if !g.is_finite() || g < 0.0 {
        return Err(Error::validation("gain.G", format!("must be finite and >= 0, got {g}")));
    }
    if lambdas.is_empty() {
        return Err(Error::validation("lambdas", "spectrum is empty"));
    }
    let top = gain_g * lambdas[0].sqrt();
    if top.f64() > MAX_MODE_GAIN {
        return Err(Error::Overflow {
            argument: top.f64(),
            limit: MAX_MODE_GAIN,
        });
    }

    let per_mode_photons: Vec<T> = lambdas
        .iter()
        .map(|&l| {
            let s = (gain_g * l.sqrt()).sinh();
            s * s
        })
        .collect();
    let total_photons = per_mode_photons.iter().fold(T::zero(), |a, &b| a + b);
    if !total_photons.f64().is_finite() {
        return Err(Error::Overflow {
            argument: top.f64(),
            limit: MAX_MODE_GAIN,
        });
    }

    let weights: Vec<T> = if total_photons > T::zero() {
        per_mode_photons.iter().map(|&n| n / total_photons).collect()
    } else {
        let sum = lambdas.iter().fold(T::zero(), |a, &b| a + b);
        lambdas.iter().map(|&l| l / sum).collect()
    };
    Ok(Amplified {
        per_mode_photons,
        total_photons,
        weights,
    })
}

/// `1/Σp²`.
pub fn inverse_participation<T: Scalar>(weights: &[T]) -> T {
    T::one() / weights.iter().fold(T::zero(), |a, &p| a + p * p)
}

/// `g² = 1 + 1/(m_t m_l)` with `m_t = (1/Σp²)^dims`.
pub fn g2_from_modes<T: Scalar>(weights: &[T], m_l: T, transverse_dims: u8) -> Result<T> {
    GainSettings { m_l, transverse_dims }.validate()?;
    let sum = weights.iter().fold(T::zero(), |a, &p| a + p);
    if weights.is_empty() || (sum.f64() - 1.0).abs() > 1e-9 || weights.iter().any(|&p| p < T::zero()) {
        return Err(Error::validation(
            "weights",
            format!("mode weights must be non-negative and sum to 1, sum is {sum}"),
        ));
    }
    let m_t = inverse_participation(weights).powi(i32::from(transverse_dims));
    Ok(g2_from_mode_count(m_t, m_l))
}

/// `g² = 1 + 1/(m_t m_l)` for known transverse and frequency mode counts.
pub fn g2_from_mode_count<T: Scalar>(m_t: T, m_l: T) -> T {
    T::one() + T::one() / (m_t * m_l)
}

/// Sampled far-field intensity with its width and shape flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField<T> {
    pub theta: Vec<T>,
    pub intensity: Vec<T>,
    pub fwhm: T,
    /// Center below [`DIP_THRESHOLD`] of the maximum.
    pub central_dip: bool,
}

/// `I(θ_i) = Σ_n N_n |u_n(θ_i)|²`.
///
/// Because the modes are orthonormal under the grid quadrature, the quadrature
/// integral of `I` equals `Σ N_n`.
pub fn farfield_profile<T: Scalar>(decomposition: &SchmidtDecomposition<T>, per_mode_photons: &[T]) -> FarField<T> {
    let u = &decomposition.modes_u;
    let n = u.nrows();
    let mut intensity = vec![T::zero(); n];
    for (k, &nk) in per_mode_photons.iter().enumerate().take(u.ncols()) {
        if nk == T::zero() {
            continue;
        }
        for (i, out) in intensity.iter_mut().enumerate() {
            let x = u[(i, k)];
            *out += nk * x * x;
        }
    }
    let theta = decomposition.theta.clone();
    let fwhm = full_width_half_max(&theta, &intensity);
    let central_dip = has_central_dip(&intensity);
    FarField {
        theta,
        intensity,
        fwhm,
        central_dip,
    }
}

/// Distance between the outermost half-maximum crossings, linearly
/// interpolated. Zero for an all-zero profile.
pub fn full_width_half_max<T: Scalar>(theta: &[T], values: &[T]) -> T {
    let max = values.iter().fold(T::zero(), |a, &b| a.max(b));
    if !(max > T::zero()) {
        return T::zero();
    }
    let half = max / T::of(2.0);
    let n = values.len();
    let first = values.iter().position(|&v| v >= half).unwrap_or(0);
    let last = values.iter().rposition(|&v| v >= half).unwrap_or(n - 1);
    let crossing = |a: usize, b: usize| {
        let (ya, yb) = (values[a], values[b]);
        theta[a] + (half - ya) * (theta[b] - theta[a]) / (yb - ya)
    };
    let left = if first == 0 { theta[0] } else { crossing(first - 1, first) };
    let right = if last == n - 1 { theta[n - 1] } else { crossing(last, last + 1) };
    right - left
}

/// `I(0) <` [`DIP_THRESHOLD`] `· max I`.
pub fn has_central_dip<T: Scalar>(values: &[T]) -> bool {
    let n = values.len();
    if n == 0 {
        return false;
    }
    let max = values.iter().fold(T::zero(), |a, &b| a.max(b));
    let center = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::of(2.0)
    };
    max > T::zero() && center < T::of(DIP_THRESHOLD) * max
}

/// Detection model for the noise reduction factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrfModel<T> {
    pub eta_s: T,
    pub eta_i: T,
    /// Fraction of the collected idler light that is the twin of collected
    /// signal light; the rest is uncorrelated light of the same mean.
    pub matched_fraction: T,
}

impl<T: Scalar> NrfModel<T> {
    pub fn validate(&self) -> Result<()> {
        for (path, v) in [
            ("nrf.eta_s", self.eta_s),
            ("nrf.eta_i", self.eta_i),
            ("nrf.matched_fraction", self.matched_fraction),
        ] {
            let v = v.f64();
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(path, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.eta_s + self.eta_i <= T::zero() {
            return Err(Error::validation("nrf.eta_s", "at least one channel must detect light"));
        }
        Ok(())
    }
}

/// `Var(N_s - N_i) / ⟨N_s + N_i⟩` for the detected beams.
///
/// Per Schmidt pair with `N` photons per arm, signal thinned by `η_s`, idler
/// made of a twin part thinned by `f η_i` and an independent thermal part
/// thinned by `(1-f) η_i`:
///
/// `Var = η_s²N² + η_sN + η_i²N²(f² + (1-f)²) + η_iN - 2fη_sη_i(N² + N)`.
///
/// Pairs are independent, so variances and means add.
pub fn nrf<T: Scalar>(report: &GainReport<T>, model: &NrfModel<T>) -> Result<T> {
    model.validate()?;
    let (es, ei, f) = (model.eta_s, model.eta_i, model.matched_fraction);
    let one = T::one();
    let two = T::of(2.0);
    let sum_n = report.total_photons;
    let sum_n2 = report.per_mode_photons.iter().fold(T::zero(), |a, &n| a + n * n);
    let linear = es + ei - two * f * es * ei;
    let quadratic = es * es + ei * ei * (f * f + (one - f) * (one - f)) - two * f * es * ei;
    // Quadratic term per unit mean photon number; vanishes as G → 0.
    let ratio = if sum_n > T::zero() { sum_n2 / sum_n } else { T::zero() };
    Ok((linear + quadratic * ratio) / (es + ei))
}
