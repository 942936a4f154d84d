//! Two-photon amplitude of the two-crystal amplifier on an angular grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::grid::{AngularGrid, SMALL_ANGLE_LIMIT};
use crate::scalar::{sinc, Scalar};

/// How the configured pump width is to be read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpWidthKind {
    /// Full width at half maximum of the intensity profile.
    #[default]
    Fwhm,
    /// 1/e² intensity radius `w0`; FWHM = `w0 sqrt(2 ln 2)`.
    WaistRadius,
}

/// Raw physical inputs, before derived quantities are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams<T> {
    pub pump_wavelength_vacuum: T,
    pub pump_width: T,
    pub pump_width_kind: PumpWidthKind,
    pub n_p: T,
    pub crystal_length: T,
    pub gap_length: T,
    pub delta_n_air: T,
}

impl<T: Scalar> Default for GeometryParams<T> {
    /// 355 nm pump, 200 µm FWHM, two 3 mm BBO crystals.
    fn default() -> Self {
        Self {
            pump_wavelength_vacuum: T::of(355e-9),
            pump_width: T::of(200e-6),
            pump_width_kind: PumpWidthKind::Fwhm,
            n_p: T::of(1.70),
            crystal_length: T::of(3e-3),
            gap_length: T::zero(),
            delta_n_air: T::of(1.016e-5),
        }
    }
}

/// Pump, crystal and air-gap parameters with derived wave numbers.
///
/// Fields are private so the derived values (`sigma`, `k_p`, `delta_k`)
/// always agree with the inputs they were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpaGeometry<T> {
    pump_wavelength_vacuum: T,
    pump_fwhm: T,
    sigma: T,
    n_p: T,
    k_p: T,
    crystal_length: T,
    gap_length: T,
    delta_n_air: T,
    delta_k: T,
}

pub fn build_geometry<T: Scalar>(params: &GeometryParams<T>) -> Result<OpaGeometry<T>> {
    require_positive("geometry.pump_wavelength_vacuum", params.pump_wavelength_vacuum.f64())?;
    require_positive("geometry.pump_width", params.pump_width.f64())?;
    require_positive("geometry.n_p", params.n_p.f64())?;
    require_positive("geometry.crystal_length", params.crystal_length.f64())?;
    require_non_negative("geometry.delta_n_air", params.delta_n_air.f64())?;
    require_non_negative("sweep.L", params.gap_length.f64())?;

    let ln2 = T::ln_2();
    let pump_fwhm = match params.pump_width_kind {
        PumpWidthKind::Fwhm => params.pump_width,
        PumpWidthKind::WaistRadius => params.pump_width * (T::of(2.0) * ln2).sqrt(),
    };
    let sigma = pump_fwhm / (T::of(2.0) * ln2.sqrt());
    let k_p = T::two_pi() * params.n_p / params.pump_wavelength_vacuum;
    Ok(OpaGeometry {
        pump_wavelength_vacuum: params.pump_wavelength_vacuum,
        pump_fwhm,
        sigma,
        n_p: params.n_p,
        k_p,
        crystal_length: params.crystal_length,
        gap_length: params.gap_length,
        delta_n_air: params.delta_n_air,
        delta_k: k_p * params.delta_n_air,
    })
}

impl<T: Scalar> OpaGeometry<T> {
    /// Same geometry with a different gap length.
    pub fn with_gap(&self, gap_length: T) -> Result<Self> {
        require_non_negative("sweep.L", gap_length.f64())?;
        Ok(Self {
            gap_length,
            ..self.clone()
        })
    }

    pub fn pump_wavelength_vacuum(&self) -> T {
        self.pump_wavelength_vacuum
    }
    pub fn pump_fwhm(&self) -> T {
        self.pump_fwhm
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn n_p(&self) -> T {
        self.n_p
    }
    pub fn k_p(&self) -> T {
        self.k_p
    }
    pub fn crystal_length(&self) -> T {
        self.crystal_length
    }
    pub fn gap_length(&self) -> T {
        self.gap_length
    }
    pub fn delta_n_air(&self) -> T {
        self.delta_n_air
    }
    pub fn delta_k(&self) -> T {
        self.delta_k
    }

    /// Gap length over which the on-axis intensity repeats, `λ_p / δn_air`.
    pub fn interference_period(&self) -> Option<T> {
        (self.delta_n_air > T::zero()).then(|| self.pump_wavelength_vacuum / self.delta_n_air)
    }

    /// Coefficient `c` of the gap phase `c (θs-θi)^2`.
    fn two_crystal_chirp(&self) -> T {
        (self.crystal_length + self.gap_length / self.n_p) * self.k_p / T::of(16.0)
    }

    fn single_crystal_chirp(&self) -> T {
        self.crystal_length * self.k_p / T::of(16.0)
    }

    /// Constant phase `δk L / (2 n_p)`.
    fn gap_phase(&self) -> T {
        self.delta_k * self.gap_length / (T::of(2.0) * self.n_p)
    }

    fn pump_factor(&self, sum: T) -> T {
        let s = self.sigma * self.k_p * sum;
        (-(s * s) / T::of(8.0)).exp()
    }
}

/// Two-crystal amplitude, unnormalized:
///
/// `exp{-σ²k_p²(θs+θi)²/8} sinc{L_c k_p (θs-θi)²/16} cos{(L_c + L/n_p) k_p (θs-θi)²/16 - δk L/(2 n_p)}`.
///
/// Symmetric in its two angles. Meaningful for `|θ| < 0.2` rad.
pub fn tpa_amplitude<T: Scalar>(geometry: &OpaGeometry<T>, theta_s: T, theta_i: T) -> T {
    let d = theta_s - theta_i;
    let d2 = d * d;
    geometry.pump_factor(theta_s + theta_i)
        * sinc(geometry.single_crystal_chirp() * d2)
        * (geometry.two_crystal_chirp() * d2 - geometry.gap_phase()).cos()
}

/// Single-crystal reference amplitude: pump envelope times phase matching.
pub fn single_crystal_amplitude<T: Scalar>(geometry: &OpaGeometry<T>, theta_s: T, theta_i: T) -> T {
    let d = theta_s - theta_i;
    geometry.pump_factor(theta_s + theta_i) * sinc(geometry.single_crystal_chirp() * d * d)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crystals {
    One,
    #[default]
    Two,
}

/// Kernel sampled on a grid.
///
/// `amplitude[(i, j)] = F(θ_i, θ_j)` as returned by the amplitude function;
/// `weighted[(i, j)] = F(θ_i, θ_j) sqrt(w_i w_j) / norm` has unit Frobenius
/// norm. `norm` is the Frobenius norm of the weighted matrix before scaling.
#[derive(Clone, Debug)]
pub struct TpaKernel<T: Scalar> {
    pub geometry: OpaGeometry<T>,
    pub grid: AngularGrid<T>,
    pub crystals: Crystals,
    pub amplitude: DMatrix<T>,
    pub weighted: DMatrix<T>,
    pub norm: T,
}

pub fn build_kernel<T: Scalar>(
    geometry: &OpaGeometry<T>,
    grid: &AngularGrid<T>,
    crystals: Crystals,
) -> Result<TpaKernel<T>> {
    check_resolution(geometry, grid, crystals)?;
    if grid.theta_max().f64() > SMALL_ANGLE_LIMIT {
        log::warn!("kernel evaluated beyond the small-angle regime");
    }
    let theta = grid.theta();
    let n = theta.len();
    let sw = grid.sqrt_weights();
    let amp = |a: T, b: T| match crystals {
        Crystals::One => single_crystal_amplitude(geometry, a, b),
        Crystals::Two => tpa_amplitude(geometry, a, b),
    };

    let mut amplitude = DMatrix::<T>::zeros(n, n);
    let mut weighted = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let f = amp(theta[i], theta[j]);
            let m = f * sw[i] * sw[j];
            amplitude[(i, j)] = f;
            amplitude[(j, i)] = f;
            weighted[(i, j)] = m;
            weighted[(j, i)] = m;
        }
    }
    let norm = weighted.norm();
    if !norm.f64().is_finite() || norm <= T::zero() {
        return Err(Error::Numerical(format!(
            "kernel has Frobenius norm {} and cannot be normalized",
            norm
        )));
    }
    weighted /= norm;
    Ok(TpaKernel {
        geometry: geometry.clone(),
        grid: grid.clone(),
        crystals,
        amplitude,
        weighted,
        norm,
    })
}

/// Nyquist test on the fastest phase of the amplitude.
///
/// The phase `c (θs-θi)²` advances by at most `2 c |θs-θi|_max h` between
/// neighbouring nodes; that must stay below π. The pump envelope, a Gaussian
/// in `θs+θi` with standard deviation `2/(σ k_p)`, must get at least one node
/// per standard deviation.
pub fn check_resolution<T: Scalar>(geometry: &OpaGeometry<T>, grid: &AngularGrid<T>, crystals: Crystals) -> Result<()> {
    let theta = grid.theta();
    let n = theta.len();
    if n < 2 {
        return Ok(());
    }
    let h = grid.max_spacing().f64();
    let span = (theta[n - 1] - theta[0]).f64();
    let chirp = match crystals {
        Crystals::One => geometry.single_crystal_chirp(),
        Crystals::Two => geometry.two_crystal_chirp(),
    }
    .f64();
    let phase_step = 2.0 * chirp * span * h;
    let pi = std::f64::consts::PI;
    if phase_step >= pi {
        // Uniform spacing h = span/(n-1) gives the required count.
        let required = (2.0 * chirp * span * span / pi).ceil() as usize + 2;
        return Err(Error::Resolution {
            detail: format!(
                "phase advances {phase_step:.3} rad per step at gap {:.4} m (limit π)",
                geometry.gap_length.f64()
            ),
            required_points: required,
        });
    }
    let pump_std = 2.0 / (geometry.sigma * geometry.k_p).f64();
    if h > pump_std {
        let required = (span / pump_std).ceil() as usize + 1;
        return Err(Error::Resolution {
            detail: format!("step {h:.3e} rad exceeds pump angular width {pump_std:.3e} rad"),
            required_points: required,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Quadrature};
    use proptest::prelude::*;

    fn geometry(gap: f64) -> OpaGeometry<f64> {
        build_geometry(&GeometryParams {
            gap_length: gap,
            ..GeometryParams::default()
        })
        .unwrap()
    }

    #[test]
    fn derived_quantities() {
        let g = geometry(0.0);
        // Independent arithmetic: 200e-6 / (2 sqrt(ln 2)) and 2π·1.7/355e-9.
        let sigma = 200e-6 / (2.0 * 2f64.ln().sqrt());
        assert!((g.sigma() - sigma).abs() <= 1e-12 * sigma);
        assert!((g.sigma() - 1.2011e-4).abs() < 1e-8);
        let kp = 2.0 * std::f64::consts::PI * 1.7 / 355e-9;
        assert!((g.k_p() - kp).abs() <= 1e-12 * kp);
        assert!((g.k_p() - 3.0088e7).abs() < 1e3);
        assert!((g.delta_k() - kp * 1.016e-5).abs() <= 1e-12 * g.delta_k());
    }

    #[test]
    fn zero_index_mismatch_gives_zero_delta_k() {
        let g = build_geometry(&GeometryParams {
            delta_n_air: 0.0,
            ..GeometryParams::<f64>::default()
        })
        .unwrap();
        assert_eq!(g.delta_k(), 0.0);
        assert!(g.interference_period().is_none());
    }

    #[test]
    fn waist_radius_interpretation() {
        let g = build_geometry(&GeometryParams {
            pump_width_kind: PumpWidthKind::WaistRadius,
            ..GeometryParams::<f64>::default()
        })
        .unwrap();
        let fwhm = 200e-6 * (2.0 * 2f64.ln()).sqrt();
        assert!((g.pump_fwhm() - fwhm).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases: [(&str, GeometryParams<f64>); 5] = [
            ("geometry.pump_wavelength_vacuum", GeometryParams { pump_wavelength_vacuum: 0.0, ..Default::default() }),
            ("geometry.pump_width", GeometryParams { pump_width: f64::NAN, ..Default::default() }),
            ("geometry.n_p", GeometryParams { n_p: -1.7, ..Default::default() }),
            ("geometry.crystal_length", GeometryParams { crystal_length: f64::INFINITY, ..Default::default() }),
            ("sweep.L", GeometryParams { gap_length: -1e-3, ..Default::default() }),
        ];
        for (path, params) in cases {
            match build_geometry(&params) {
                Err(Error::Validation { path: p, .. }) => assert_eq!(p, path),
                other => panic!("expected validation error for {path}, got {other:?}"),
            }
        }
    }

    #[test]
    fn on_axis_zero_gap_is_unity() {
        assert_eq!(tpa_amplitude(&geometry(0.0), 0.0, 0.0), 1.0);
    }

    #[test]
    fn on_axis_zero_at_quarter_phase() {
        // δk L/(2 n_p) = π δn L/λ = π/2  at  L = λ/(2 δn).
        let l: f64 = 355e-9 / (2.0 * 1.016e-5);
        assert!((l - 17.47e-3).abs() < 1e-5);
        assert!(tpa_amplitude(&geometry(l), 0.0, 0.0).abs() < 1e-12);
    }

    #[test]
    fn on_axis_value_is_antiperiodic_in_gap() {
        let p: f64 = 355e-9 / 1.016e-5;
        assert!((p - 34.94e-3).abs() < 1e-5);
        for &l in &[0.0, 0.004, 0.0123, 0.05, 0.1] {
            let f0 = tpa_amplitude(&geometry(l), 0.0, 0.0);
            let f1 = tpa_amplitude(&geometry(l + p), 0.0, 0.0);
            let f2 = tpa_amplitude(&geometry(l + 2.0 * p), 0.0, 0.0);
            assert!((f1 + f0).abs() < 1e-12, "L = {l}");
            assert!((f2 - f0).abs() < 1e-12, "L = {l}");
            assert!((f1 * f1 - f0 * f0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_crystal_at_zero_gap_is_single_crystal_times_modulation() {
        let g = geometry(0.0);
        let grid = make_grid(0.03, 201, Quadrature::Trapezoid).unwrap();
        let two = build_kernel(&g, &grid, Crystals::Two).unwrap();
        let one = build_kernel(&g, &grid, Crystals::One).unwrap();
        let c = g.crystal_length() * g.k_p() / 16.0;
        for i in 0..201 {
            for j in 0..201 {
                let d = grid.theta()[i] - grid.theta()[j];
                let expected = one.amplitude[(i, j)] * (c * d * d).cos();
                assert!((two.amplitude[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_and_normalized() {
        let grid = make_grid(0.03, 601, Quadrature::Trapezoid).unwrap();
        for &l in &[0.0, 0.0175, 0.07, 0.2] {
            let k = build_kernel(&geometry(l), &grid, Crystals::Two).unwrap();
            let max = k.amplitude.amax();
            let asym = (&k.amplitude - k.amplitude.transpose()).amax();
            assert!(asym <= 1e-12 * max);
            assert!((k.weighted.norm() - 1.0).abs() < 1e-12);
            assert!(k.norm > 0.0);
        }
    }

    #[test]
    fn coarse_grid_is_rejected_at_large_gap() {
        // ±0.06 rad with 501 nodes cannot sample the gap chirp at L = 0.2 m.
        let grid = make_grid(0.06, 501, Quadrature::Trapezoid).unwrap();
        let err = build_kernel(&geometry(0.2), &grid, Crystals::Two).unwrap_err();
        match err {
            Error::Resolution { required_points, .. } => assert!(required_points > 2000),
            other => panic!("{other:?}"),
        }
        // The same grid is fine for the single crystal and for short gaps.
        assert!(build_kernel(&geometry(0.2), &grid, Crystals::One).is_ok());
        assert!(build_kernel(&geometry(0.02), &grid, Crystals::Two).is_ok());
    }

    #[test]
    fn pump_envelope_must_be_resolved() {
        let grid = make_grid(0.03, 41, Quadrature::Trapezoid).unwrap();
        let err = build_kernel(&geometry(0.0), &grid, Crystals::One).unwrap_err();
        assert!(matches!(err, Error::Resolution { .. }));
    }

    #[test]
    fn default_grid_resolves_full_gap_range() {
        let grid = make_grid(0.03, 601, Quadrature::Trapezoid).unwrap();
        assert!(check_resolution(&geometry(0.2), &grid, Crystals::Two).is_ok());
        assert!(check_resolution(&geometry(0.25), &grid, Crystals::Two).is_err());
    }

    #[test]
    fn single_precision_kernel() {
        let g = build_geometry(&GeometryParams::<f32>::default()).unwrap();
        let grid = make_grid(0.03_f32, 201, Quadrature::Trapezoid).unwrap();
        let k = build_kernel(&g, &grid, Crystals::Two).unwrap();
        assert!((k.weighted.norm() - 1.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn amplitude_is_exchange_symmetric(
            ts in -0.1_f64..0.1,
            ti in -0.1_f64..0.1,
            gap in 0.0_f64..0.2,
        ) {
            let g = geometry(gap);
            prop_assert_eq!(tpa_amplitude(&g, ts, ti), tpa_amplitude(&g, ti, ts));
            prop_assert!(tpa_amplitude(&g, ts, ti).abs() <= 1.0);
        }
    }
}
