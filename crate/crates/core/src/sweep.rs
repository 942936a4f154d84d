//! Scans of the gap length `L`.
//!
//! [`prepare_sweep`] builds and decomposes one kernel per gap. The result,
//! [`PreparedSweep`], can be evaluated at any number of gains without touching
//! the kernels again. [`run_sweep`] does both in one call.
//!
//! Two couplings are available. With [`Coupling::Relative`] (the default) the
//! gain at gap `L` is `G β(L)`, where `β` is the Frobenius norm of the
//! unnormalized weighted kernel relative to a single crystal on the same grid.
//! The two-crystal interference then modulates the pair-generation strength
//! and the output intensity oscillates with `L`. [`Coupling::Normalized`] uses
//! `G` unchanged at every gap.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::gain::{
    amplify, full_width_half_max, g2_from_mode_count, has_central_dip, inverse_participation, GainSettings,
};
use crate::grid::AngularGrid;
use crate::kernel::{build_geometry, build_kernel, Crystals, GeometryParams};
use crate::peaks::{detect_minima, detect_peaks, period_estimate, Peak, PeakOptions, PeriodEstimate};
use crate::scalar::Scalar;
use crate::schmidt::{decompose_matrix, Solver, TruncationPolicy};

/// Largest gap accepted by a sweep (m).
pub const MAX_GAP: f64 = 0.25;

/// Largest step that still samples the 35 mm oscillation (m).
pub const MAX_STEP: f64 = 3e-3;

/// Modes with `λ_n < PROFILE_FLOOR · λ_1` are left out of far-field profiles.
/// Their share of the intensity is below this ratio at any gain.
pub const PROFILE_FLOOR: f64 = 1e-8;

/// Bumped whenever the cached point layout changes.
const CACHE_FORMAT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec<T> {
    pub l_start: T,
    pub l_stop: T,
    pub l_step: T,
}

impl<T: Scalar> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("sweep.L_start", self.l_start.f64())?;
        require_non_negative("sweep.L_stop", self.l_stop.f64())?;
        require_positive("sweep.L_step", self.l_step.f64())?;
        if self.l_stop.f64() > MAX_GAP {
            return Err(Error::validation(
                "sweep.L_stop",
                format!("must be <= {MAX_GAP} m, got {}", self.l_stop),
            ));
        }
        if self.l_stop < self.l_start {
            return Err(Error::validation("sweep.L_stop", "must be >= sweep.L_start"));
        }
        if self.l_step.f64() > MAX_STEP + 1e-15 {
            return Err(Error::validation(
                "sweep.L_step",
                format!("must be <= {MAX_STEP} m to resolve the oscillation, got {}", self.l_step),
            ));
        }
        Ok(())
    }

    /// `l_start + i l_step` up to `l_stop`, inclusive when it lands on the grid.
    pub fn gaps(&self) -> Vec<T> {
        let span = (self.l_stop - self.l_start).f64() / self.l_step.f64();
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.l_start + self.l_step * T::of_usize(i))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Relative,
    Normalized,
}

/// Everything except `L` that determines a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SweepSetup<T: Scalar> {
    /// `gap_length` is ignored.
    pub geometry: GeometryParams<T>,
    pub grid: AngularGrid<T>,
    pub policy: TruncationPolicy,
    pub solver: Solver,
    pub crystals: Crystals,
}

/// Cached outcome of kernel + Schmidt decomposition at one gap.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PreparedPoint<T: Scalar> {
    pub l: T,
    /// Kernel strength relative to a single crystal.
    pub beta: T,
    pub lambdas: Vec<T>,
    pub schmidt_number: T,
    /// `|u_n(θ_i)|²` for the modes above [`PROFILE_FLOOR`], as columns.
    pub intensity_basis: DMatrix<T>,
}

/// A gap that could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointFailure {
    pub index: usize,
    pub l: f64,
    pub message: String,
    pub exit_code: i32,
}

impl PointFailure {
    fn new(index: usize, l: f64, error: &Error) -> Self {
        Self {
            index,
            l,
            message: error.to_string(),
            exit_code: error.exit_code(),
        }
    }
}

/// Kernels keyed by a hash of `(setup, L)`.
///
/// Always kept in memory; with a spill directory every new point is also
/// written to `<dir>/<hash>.json` and read back by later runs.
pub struct PointCache<T: Scalar> {
    memory: Mutex<HashMap<String, Arc<PreparedPoint<T>>>>,
    spill: Option<PathBuf>,
}

impl<T: Scalar> Default for PointCache<T> {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl<T: Scalar> PointCache<T> {
    pub fn in_memory() -> Self {
        Self {
            memory: Mutex::new(HashMap::new()),
            spill: None,
        }
    }

    pub fn with_spill(dir: impl Into<PathBuf>) -> Self {
        Self {
            memory: Mutex::new(HashMap::new()),
            spill: Some(dir.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.memory.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<Arc<PreparedPoint<T>>> {
        if let Some(p) = self.memory.lock().ok()?.get(key) {
            return Some(p.clone());
        }
        let path = self.spill_path(key)?;
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<PreparedPoint<T>>(&bytes) {
            Ok(p) => {
                let p = Arc::new(p);
                self.memory.lock().ok()?.insert(key.to_string(), p.clone());
                Some(p)
            }
            Err(e) => {
                log::warn!("ignoring unreadable cache file {}: {e}", path.display());
                None
            }
        }
    }

    fn insert(&self, key: String, point: Arc<PreparedPoint<T>>) -> Result<()> {
        if let Some(path) = self.spill_path(&key) {
            let json = serde_json::to_vec(point.as_ref()).map_err(|e| Error::Numerical(e.to_string()))?;
            crate::io::write_atomic(&path, &json)?;
        }
        if let Ok(mut m) = self.memory.lock() {
            m.insert(key, point);
        }
        Ok(())
    }

    fn spill_path(&self, key: &str) -> Option<PathBuf> {
        self.spill.as_ref().map(|d| d.join(format!("{key}.json")))
    }
}

/// Hex digest identifying the kernel at gap `l` for `setup`.
pub fn cache_key<T: Scalar>(setup: &SweepSetup<T>, l: T) -> String {
    let mut geometry = setup.geometry.clone();
    geometry.gap_length = l;
    let payload = serde_json::json!({
        "format": CACHE_FORMAT,
        "precision": std::mem::size_of::<T>(),
        "geometry": geometry,
        "grid": setup.grid,
        "floor": setup.policy.floor,
        "max_modes": setup.policy.max_modes,
        "solver": setup.solver,
        "crystals": setup.crystals,
    });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

/// Kernels and spectra for every gap of a sweep.
#[derive(Clone, Debug)]
pub struct PreparedSweep<T: Scalar> {
    pub setup: SweepSetup<T>,
    pub spec: SweepSpec<T>,
    /// Successful points, ordered by `L`.
    pub points: Vec<Arc<PreparedPoint<T>>>,
    pub failures: Vec<PointFailure>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

pub fn prepare_sweep<T: Scalar>(
    setup: &SweepSetup<T>,
    spec: &SweepSpec<T>,
    cache: Option<&PointCache<T>>,
    options: RunOptions,
) -> Result<PreparedSweep<T>> {
    spec.validate()?;
    let gaps = spec.gaps();
    // Validates the template once so that bad geometry fails the whole run.
    let template = build_geometry(&GeometryParams {
        gap_length: spec.l_start,
        ..setup.geometry.clone()
    })?;
    let reference = match setup.crystals {
        Crystals::One => None,
        Crystals::Two => Some(build_kernel(&template, &setup.grid, Crystals::One)?.norm),
    };

    let done = AtomicUsize::new(0);
    let total = gaps.len();
    let tick = || {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n * 10 / total != (n - 1) * 10 / total || n == total {
            log::info!("sweep: {n}/{total} gaps prepared");
        }
    };
    let work = || {
        gaps.par_iter()
            .map(|&l| {
                let key = cache_key(setup, l);
                if let Some(p) = cache.and_then(|c| c.get(&key)) {
                    tick();
                    return Ok(p);
                }
                let point = prepare_point(setup, l, reference).map(Arc::new);
                tick();
                let point = point?;
                log::debug!("prepared L = {:.3} mm ({} modes)", l.f64() * 1e3, point.lambdas.len());
                if let Some(c) = cache {
                    c.insert(key, point.clone())?;
                }
                Ok(point)
            })
            .collect::<Vec<Result<Arc<PreparedPoint<T>>>>>()
    };
    let outcomes = match options.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut points = Vec::with_capacity(gaps.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(p) => points.push(p),
            Err(e) => {
                if let Error::Io { .. } = e {
                    return Err(e);
                }
                log::warn!("L = {:.3} mm failed: {e}", gaps[i].f64() * 1e3);
                failures.push(PointFailure::new(i, gaps[i].f64(), &e));
            }
        }
    }
    log::info!("prepared {} of {} gaps", points.len(), gaps.len());
    Ok(PreparedSweep {
        setup: setup.clone(),
        spec: *spec,
        points,
        failures,
    })
}

fn prepare_point<T: Scalar>(setup: &SweepSetup<T>, l: T, reference: Option<T>) -> Result<PreparedPoint<T>> {
    let geometry = build_geometry(&GeometryParams {
        gap_length: l,
        ..setup.geometry.clone()
    })?;
    let kernel = build_kernel(&geometry, &setup.grid, setup.crystals)?;
    let beta = reference.map_or(T::one(), |r| kernel.norm / r);
    let d = decompose_matrix(&kernel.weighted, &kernel.grid, setup.policy, setup.solver)?;
    let cutoff = T::of(PROFILE_FLOOR) * d.lambdas[0];
    let r = d.lambdas.iter().take_while(|&&l| l >= cutoff).count().max(1);
    let intensity_basis = d.modes_u.columns(0, r).map(|x| x * x);
    Ok(PreparedPoint {
        l,
        beta,
        lambdas: d.lambdas,
        schmidt_number: d.schmidt_number,
        intensity_basis,
    })
}

/// Observables at one gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint<T> {
    #[serde(rename = "L")]
    pub l: T,
    pub total_photons: T,
    pub g2: T,
    /// `1/Σp²` in one transverse dimension.
    pub k_eff_spatial: T,
    /// `k_eff_spatial^transverse_dims`, the transverse mode count entering `g2`.
    pub m_t: T,
    pub fwhm_theta: T,
    pub central_dip: bool,
    pub beta: T,
    pub schmidt_number: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult<T> {
    #[serde(rename = "gain_G")]
    pub gain_g: T,
    pub coupling: Coupling,
    pub transverse_dims: u8,
    pub points: Vec<SweepPoint<T>>,
    pub failures: Vec<PointFailure>,
    pub intensity_peaks: Vec<Peak<T>>,
    pub intensity_minima: Vec<Peak<T>>,
    pub g2_peaks: Vec<Peak<T>>,
    /// From intensity peaks; absent with fewer than two.
    pub period_estimate: Option<PeriodEstimate<T>>,
    /// From `g2` peaks.
    pub period_estimate_g2: Option<PeriodEstimate<T>>,
}

impl<T: Scalar> PreparedSweep<T> {
    /// Apply gain `G` to every prepared gap and analyse the result.
    pub fn evaluate(&self, gain_g: T, settings: GainSettings<T>, coupling: Coupling) -> Result<SweepResult<T>> {
        settings.validate()?;
        if !gain_g.f64().is_finite() || gain_g < T::zero() {
            return Err(Error::validation("gain.G", format!("must be finite and >= 0, got {gain_g}")));
        }
        let mut points = Vec::with_capacity(self.points.len());
        let mut failures = self.failures.clone();
        let gaps = self.spec.gaps();
        let theta = self.setup.grid.theta();
        for p in &self.points {
            let g_eff = self.effective_gain(p, gain_g, coupling);
            match evaluate_point(p, theta, g_eff, settings) {
                Ok(sp) => points.push(sp),
                Err(e) => {
                    let index = gaps.iter().position(|&l| l == p.l).unwrap_or(0);
                    failures.push(PointFailure::new(index, p.l.f64(), &e));
                }
            }
        }
        failures.sort_by_key(|f| f.index);
        Ok(analyse(gain_g, coupling, settings.transverse_dims, points, failures))
    }

    pub fn gaps(&self) -> Vec<T> {
        self.points.iter().map(|p| p.l).collect()
    }

    /// Effective gain at a prepared point.
    pub fn effective_gain(&self, point: &PreparedPoint<T>, gain_g: T, coupling: Coupling) -> T {
        match coupling {
            Coupling::Relative => gain_g * point.beta,
            Coupling::Normalized => gain_g,
        }
    }
}

fn evaluate_point<T: Scalar>(
    p: &PreparedPoint<T>,
    theta: &[T],
    g_eff: T,
    settings: GainSettings<T>,
) -> Result<SweepPoint<T>> {
    let amplified = amplify(&p.lambdas, g_eff)?;
    let k_eff_spatial = inverse_participation(&amplified.weights);
    let m_t = k_eff_spatial.powi(i32::from(settings.transverse_dims));
    let basis = &p.intensity_basis;
    let mut shape = vec![T::zero(); basis.nrows()];
    for (k, &w) in amplified.weights.iter().enumerate().take(basis.ncols()) {
        for (i, s) in shape.iter_mut().enumerate() {
            *s += w * basis[(i, k)];
        }
    }
    Ok(SweepPoint {
        l: p.l,
        total_photons: amplified.total_photons,
        g2: g2_from_mode_count(m_t, settings.m_l),
        k_eff_spatial,
        m_t,
        fwhm_theta: full_width_half_max(theta, &shape),
        central_dip: has_central_dip(&shape),
        beta: p.beta,
        schmidt_number: p.schmidt_number,
    })
}

/// Far-field intensity `Σ_n N_n |u_n(θ)|²` at one prepared gap.
pub fn point_profile<T: Scalar>(p: &PreparedPoint<T>, g_eff: T) -> Result<Vec<T>> {
    let amplified = amplify(&p.lambdas, g_eff)?;
    let basis = &p.intensity_basis;
    let mut out = vec![T::zero(); basis.nrows()];
    for (k, &n) in amplified.per_mode_photons.iter().enumerate().take(basis.ncols()) {
        for (i, s) in out.iter_mut().enumerate() {
            *s += n * basis[(i, k)];
        }
    }
    Ok(out)
}

fn analyse<T: Scalar>(
    gain_g: T,
    coupling: Coupling,
    transverse_dims: u8,
    points: Vec<SweepPoint<T>>,
    failures: Vec<PointFailure>,
) -> SweepResult<T> {
    let l: Vec<T> = points.iter().map(|p| p.l).collect();
    let intensity: Vec<T> = points.iter().map(|p| p.total_photons).collect();
    let g2: Vec<T> = points.iter().map(|p| p.g2).collect();
    let opts = PeakOptions::default();
    let intensity_peaks = detect_peaks(&l, &intensity, opts);
    let intensity_minima = detect_minima(&l, &intensity, opts);
    let g2_peaks = detect_peaks(&l, &g2, opts);
    SweepResult {
        gain_g,
        coupling,
        transverse_dims,
        period_estimate: period_estimate(&intensity_peaks).ok(),
        period_estimate_g2: period_estimate(&g2_peaks).ok(),
        points,
        failures,
        intensity_peaks,
        intensity_minima,
        g2_peaks,
    }
}

/// Prepare and evaluate in one call.
pub fn run_sweep<T: Scalar>(
    setup: &SweepSetup<T>,
    spec: &SweepSpec<T>,
    gain_g: T,
    settings: GainSettings<T>,
    coupling: Coupling,
    options: RunOptions,
) -> Result<SweepResult<T>> {
    prepare_sweep(setup, spec, None, options)?.evaluate(gain_g, settings, coupling)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelope<T> {
    pub positions: Vec<T>,
    pub values: Vec<T>,
    /// Index into `values` of the largest peak (first one on ties).
    pub argmax: usize,
    /// Peak values strictly increase from the first peak up to this count.
    pub rising_run: usize,
}

impl<T: Scalar> Envelope<T> {
    /// The largest peak is neither the first nor the last.
    pub fn interior_maximum(&self) -> bool {
        self.argmax > 0 && self.argmax + 1 < self.values.len()
    }
}

/// `g²` peak values in `L` order.
pub fn envelope_summary<T: Scalar>(result: &SweepResult<T>) -> Result<Envelope<T>> {
    envelope_from_peaks(&result.g2_peaks)
}

pub fn envelope_from_peaks<T: Scalar>(peaks: &[Peak<T>]) -> Result<Envelope<T>> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientPeaks {
            needed: 2,
            found: peaks.len(),
        });
    }
    let values: Vec<T> = peaks.iter().map(|p| p.value).collect();
    let mut argmax = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[argmax] {
            argmax = i;
        }
    }
    let rising_run = 1 + values.windows(2).take_while(|w| w[1] > w[0]).count();
    Ok(Envelope {
        positions: peaks.iter().map(|p| p.position).collect(),
        values,
        argmax,
        rising_run,
    })
}

/// Least-squares line through `(ln L, ln FWHM)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NarrowingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln FWHM`.
    pub residual: f64,
    pub n_points: usize,
}

/// Log-log slope of the far-field width against `L`.
///
/// Points with non-positive `L` or width are skipped; fewer than three usable
/// points is an [`Error::InsufficientPeaks`].
pub fn narrowing_check<T: Scalar>(samples: &[(T, T)]) -> Result<NarrowingFit> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(l, w)| (l.f64(), w.f64()))
        .filter(|&(l, w)| l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite())
        .map(|(l, w)| (l.ln(), w.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientPeaks {
            needed: 3,
            found: usable.len(),
        });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numerical("narrowing fit needs distinct gap lengths".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(NarrowingFit {
        slope,
        intercept,
        residual,
        n_points: usable.len(),
    })
}

/// [`narrowing_check`] over the intensity peaks at `L >= min_l`.
pub fn narrowing_from_sweep<T: Scalar>(result: &SweepResult<T>, min_l: T) -> Result<NarrowingFit> {
    let samples: Vec<(T, T)> = result
        .intensity_peaks
        .iter()
        .filter(|p| p.position >= min_l)
        .filter_map(|p| result.points.iter().find(|q| q.l == p.position))
        .map(|q| (q.l, q.fwhm_theta))
        .collect();
    narrowing_check(&samples)
}

/// Create the cache directory if it does not exist.
pub fn ensure_cache_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
