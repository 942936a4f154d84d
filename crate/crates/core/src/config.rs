//! JSON run configuration, schema version 1.
//!
//! Every block is optional and falls back to the defaults below; unknown keys
//! are rejected. Parse and validation errors carry the dotted path of the
//! offending key (`geometry.n_p`, `sweep.L`). All values are SI: meters and
//! radians.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, Error, Result};
use crate::gain::GainSettings;
use crate::grid::{make_grid, AngularGrid, Quadrature};
use crate::kernel::{build_geometry, Crystals, GeometryParams, OpaGeometry, PumpWidthKind};
use crate::schmidt::{Solver, TruncationPolicy};
use crate::sweep::{Coupling, SweepSetup, SweepSpec, MAX_GAP};

pub const SCHEMA_VERSION: u32 = 1;

/// Published JSON Schema for [`RunConfig`].
pub const SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub schmidt: SchmidtBlock,
    #[serde(default)]
    pub gain: GainBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryBlock {
    pub pump_wavelength_vacuum: f64,
    pub pump_width: f64,
    pub pump_width_kind: PumpWidthKind,
    pub n_p: f64,
    pub crystal_length: f64,
    pub delta_n_air: f64,
    pub crystals: Crystals,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        let p = GeometryParams::<f64>::default();
        Self {
            pump_wavelength_vacuum: p.pump_wavelength_vacuum,
            pump_width: p.pump_width,
            pump_width_kind: p.pump_width_kind,
            n_p: p.n_p,
            crystal_length: p.crystal_length,
            delta_n_air: p.delta_n_air,
            crystals: Crystals::Two,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub theta_max: f64,
    pub n_points: usize,
    pub quadrature: Quadrature,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            theta_max: 0.02,
            n_points: 601,
            quadrature: Quadrature::Trapezoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchmidtBlock {
    pub eigenvalue_floor: f64,
    pub max_modes: Option<usize>,
    pub solver: Solver,
}

impl Default for SchmidtBlock {
    fn default() -> Self {
        Self {
            eigenvalue_floor: crate::schmidt::DEFAULT_FLOOR,
            max_modes: None,
            solver: Solver::Auto,
        }
    }
}

/// Default gain: the smallest half-integer `G` at which the two-dimensional
/// transverse mode count at a constructive gap drops to 1.5 for the default
/// geometry.
pub const DEFAULT_GAIN: f64 = 18.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainBlock {
    #[serde(rename = "G")]
    pub gain_g: f64,
    pub m_l: f64,
    pub transverse_dims: u8,
    pub coupling: Coupling,
}

impl Default for GainBlock {
    fn default() -> Self {
        let s = GainSettings::<f64>::default();
        Self {
            gain_g: DEFAULT_GAIN,
            m_l: s.m_l,
            transverse_dims: s.transverse_dims,
            coupling: Coupling::Relative,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Gap for single-point commands (`kernel`, `schmidt`, `profile`).
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_start")]
    pub l_start: f64,
    #[serde(rename = "L_stop")]
    pub l_stop: f64,
    #[serde(rename = "L_step")]
    pub l_step: f64,
    /// Spill prepared points to this directory and reuse them across runs.
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            l: 0.037,
            l_start: 0.007,
            l_stop: 0.170,
            l_step: 0.001,
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub svg: bool,
    /// Gaps at which `sweep` also writes far-field profiles.
    #[serde(rename = "profile_L")]
    pub profile_l: Vec<f64>,
    pub modes_to_write: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            svg: true,
            profile_l: Vec::new(),
            modes_to_write: 10,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            geometry: GeometryBlock::default(),
            grid: GridBlock::default(),
            schmidt: SchmidtBlock::default(),
            gain: GainBlock::default(),
            sweep: SweepBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "(root)".to_string() } else { path };
            Error::validation(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.geometry_at(self.sweep.l)?;
        self.angular_grid()?;
        let floor = self.schmidt.eigenvalue_floor;
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::validation("schmidt.eigenvalue_floor", format!("must be in [0, 1), got {floor}")));
        }
        if self.schmidt.max_modes == Some(0) {
            return Err(Error::validation("schmidt.max_modes", "must be >= 1"));
        }
        require_non_negative("gain.G", self.gain.gain_g)?;
        self.gain_settings().validate()?;
        if self.sweep.l > MAX_GAP {
            return Err(Error::validation("sweep.L", format!("must be <= {MAX_GAP} m, got {}", self.sweep.l)));
        }
        self.sweep_spec().validate()?;
        for (i, &l) in self.output.profile_l.iter().enumerate() {
            let path = format!("output.profile_L[{i}]");
            require_non_negative(&path, l)?;
            if l > MAX_GAP {
                return Err(Error::validation(path, format!("must be <= {MAX_GAP} m")));
            }
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::validation("output.directory", "must not be empty"));
        }
        Ok(())
    }

    pub fn geometry_params(&self, l: f64) -> GeometryParams<f64> {
        let g = &self.geometry;
        GeometryParams {
            pump_wavelength_vacuum: g.pump_wavelength_vacuum,
            pump_width: g.pump_width,
            pump_width_kind: g.pump_width_kind,
            n_p: g.n_p,
            crystal_length: g.crystal_length,
            gap_length: l,
            delta_n_air: g.delta_n_air,
        }
    }

    pub fn geometry_at(&self, l: f64) -> Result<OpaGeometry<f64>> {
        build_geometry(&self.geometry_params(l))
    }

    pub fn angular_grid(&self) -> Result<AngularGrid<f64>> {
        make_grid(self.grid.theta_max, self.grid.n_points, self.grid.quadrature)
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            floor: self.schmidt.eigenvalue_floor,
            max_modes: self.schmidt.max_modes,
        }
    }

    pub fn gain_settings(&self) -> GainSettings<f64> {
        GainSettings {
            m_l: self.gain.m_l,
            transverse_dims: self.gain.transverse_dims,
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec<f64> {
        SweepSpec {
            l_start: self.sweep.l_start,
            l_stop: self.sweep.l_stop,
            l_step: self.sweep.l_step,
        }
    }

    pub fn sweep_setup(&self) -> Result<SweepSetup<f64>> {
        Ok(SweepSetup {
            geometry: self.geometry_params(self.sweep.l_start),
            grid: self.angular_grid()?,
            policy: self.policy(),
            solver: self.schmidt.solver,
            crystals: self.geometry.crystals,
        })
    }
}
