//! File output. Every file is written to a temporary sibling and renamed into
//! place, so an interrupted run never leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::TpaKernel;
use crate::scalar::Scalar;
use crate::schmidt::SchmidtDecomposition;
use crate::sweep::SweepResult;

/// Seventeen significant digits in scientific notation; round-trips `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // Temporary files are created 0600; outputs should be ordinary files.
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn row<I: IntoIterator<Item = f64>>(out: &mut String, first: f64, rest: I) {
    out.push_str(&fmt_float(first));
    for x in rest {
        out.push(',');
        out.push_str(&fmt_float(x));
    }
    out.push('\n');
}

/// `F(θs, θi)`: the header row holds `θi`, the first column `θs`.
pub fn kernel_csv<T: Scalar>(kernel: &TpaKernel<T>) -> String {
    let theta = kernel.grid.theta();
    let mut out = String::from("theta_s_rad\\theta_i_rad");
    for t in theta {
        out.push(',');
        out.push_str(&fmt_float(t.f64()));
    }
    out.push('\n');
    for (i, t) in theta.iter().enumerate() {
        row(&mut out, t.f64(), kernel.amplitude.row(i).iter().map(|x| x.f64()));
    }
    out
}

pub fn spectrum_csv<T: Scalar>(d: &SchmidtDecomposition<T>) -> String {
    let mut out = String::from("n,lambda,cumulative\n");
    let mut cumulative = 0.0;
    for (n, l) in d.lambdas.iter().enumerate() {
        cumulative += l.f64();
        let _ = writeln!(out, "{},{},{}", n + 1, fmt_float(l.f64()), fmt_float(cumulative));
    }
    out
}

/// First `count` signal and idler modes, unweighted.
pub fn modes_csv<T: Scalar>(d: &SchmidtDecomposition<T>, count: usize) -> String {
    let m = count.min(d.n_modes());
    let mut out = String::from("theta_rad");
    for k in 1..=m {
        let _ = write!(out, ",u_{k}");
    }
    for k in 1..=m {
        let _ = write!(out, ",v_{k}");
    }
    out.push('\n');
    for (i, t) in d.theta.iter().enumerate() {
        let u = (0..m).map(|k| d.modes_u[(i, k)].f64());
        let v = (0..m).map(|k| d.modes_v[(i, k)].f64());
        row(&mut out, t.f64(), u.chain(v));
    }
    out
}

pub fn profile_csv<T: Scalar>(theta: &[T], intensity: &[T]) -> String {
    let mut out = String::from("theta_rad,intensity\n");
    for (t, i) in theta.iter().zip(intensity) {
        row(&mut out, t.f64(), [i.f64()]);
    }
    out
}

pub const SWEEP_HEADER: &str = "L_m,total_photons,g2,k_eff_spatial,fwhm_theta_rad,central_dip";

pub fn sweep_csv<T: Scalar>(result: &SweepResult<T>) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in &result.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(p.l.f64()),
            fmt_float(p.total_photons.f64()),
            fmt_float(p.g2.f64()),
            fmt_float(p.k_eff_spatial.f64()),
            fmt_float(p.fwhm_theta.f64()),
            p.central_dip
        );
    }
    out
}
