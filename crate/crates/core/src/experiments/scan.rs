//! Resonance-shift scans, polarization against Ω2/Ω1, and dip widths.

use rayon::prelude::*;
use serde::Serialize;

use super::polarization::{polarize, PolarizationSetup};
use super::{Metadata, ScanPoint, ScanResult};
use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::protocols::{resonance_condition, ProtocolParams};

/// P_N at each Larmor frequency of a scan and the located minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceScan {
    /// Protocol's nominal resonance (rad/μs).
    pub nominal: f64,
    /// Larmor frequencies (rad/μs), ascending.
    pub omega_l: Vec<f64>,
    pub p_n: Vec<f64>,
    pub p_n_err: Vec<f64>,
    pub t_opt: Vec<f64>,
    /// `None` for a flat curve.
    pub minimum: Option<ScanMinimum>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanMinimum {
    /// Parabolic-refined minimizing ωl.
    pub omega_l: f64,
    /// Lowest sampled P_N and its position.
    pub p_n: f64,
    pub grid_omega_l: f64,
}

/// Spread below which a scan counts as flat.
const FLAT_TOLERANCE: f64 = 1e-9;

/// Evenly spaced points `lo..=hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Vertex of the parabola through three points with `x0 < x1 < x2`.
pub fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (y[1] - y[0], y[1] - y[2]);
    let den = a * fb - b * fa;
    if den == 0.0 {
        return x[1];
    }
    let v = x[1] - 0.5 * (a * a * fb - b * b * fa) / den;
    if v.is_finite() {
        v.clamp(x[0], x[2])
    } else {
        x[1]
    }
}

/// Index of the smallest value and the refined abscissa; `None` when flat.
fn locate_minimum(x: &[f64], y: &[f64]) -> Result<Option<ScanMinimum>> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo < FLAT_TOLERANCE {
        return Ok(None);
    }
    let k = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("non-empty scan");
    if k == 0 || k + 1 == y.len() {
        return Err(Error::BracketingFailure(x[k]).at_point(x[k]));
    }
    Ok(Some(ScanMinimum {
        omega_l: parabolic_vertex([x[k - 1], x[k], x[k + 1]], [y[k - 1], y[k], y[k + 1]]),
        p_n: y[k],
        grid_omega_l: x[k],
    }))
}

/// Optimal-time P_N at every Larmor frequency in `omega_l` (scan points run in parallel).
pub fn scan_resonance(setup: &PolarizationSetup, omega_l: &[f64]) -> Result<ResonanceScan> {
    if omega_l.len() < 3 {
        return Err(Error::InvalidParameter(
            "a resonance scan needs at least 3 points".into(),
        ));
    }
    let mut xs = omega_l.to_vec();
    xs.sort_by(f64::total_cmp);
    let runs: Vec<_> = xs
        .par_iter()
        .map(|&w| polarize(setup, w).map_err(|e| e.at_point(w)))
        .collect::<Result<_>>()?;
    let p_n: Vec<f64> = runs.iter().map(|r| r.min_p_n).collect();
    let minimum = locate_minimum(&xs, &p_n)?;
    Ok(ResonanceScan {
        nominal: resonance_condition(&setup.protocol)?,
        p_n_err: runs.iter().map(|r| r.min_p_n_err).collect(),
        t_opt: runs.iter().map(|r| r.t_opt).collect(),
        omega_l: xs,
        p_n,
        minimum,
    })
}

/// Scan over shifts `δωl = ωl − nominal` expressed in units of `unit`.
pub fn scan_shift(setup: &PolarizationSetup, shifts: &[f64], unit: f64) -> Result<ResonanceScan> {
    let nominal = resonance_condition(&setup.protocol)?;
    let omega: Vec<f64> = shifts.iter().map(|s| nominal + s * unit).collect();
    scan_resonance(setup, &omega)
}

impl ResonanceScan {
    /// Minimizing shift in units of `unit`.
    pub fn argmin_shift(&self, unit: f64) -> Option<f64> {
        self.minimum.map(|m| (m.omega_l - self.nominal) / unit)
    }

    /// Curve with x = `(ωl − nominal)/unit`.
    pub fn to_shift_result(&self, unit: f64, x_label: &str, metadata: Metadata) -> ScanResult {
        ScanResult::new(
            x_label,
            "P_N",
            self.omega_l
                .iter()
                .zip(&self.p_n)
                .zip(&self.p_n_err)
                .map(|((w, y), e)| ScanPoint {
                    x: (w - self.nominal) / unit,
                    y: *y,
                    y_err: *e,
                })
                .collect(),
            metadata,
        )
    }

    pub fn to_result(&self, x_label: &str, x_unit: f64, metadata: Metadata) -> ScanResult {
        ScanResult::new(
            x_label,
            "P_N",
            self.omega_l
                .iter()
                .zip(&self.p_n)
                .zip(&self.p_n_err)
                .map(|((w, y), e)| ScanPoint {
                    x: w / x_unit,
                    y: *y,
                    y_err: *e,
                })
                .collect(),
            metadata,
        )
    }
}

/// Shift grid of a ratio scan, in units of Ω2: a coarse pass over
/// `[lo, hi]` then a fine pass of the same size around the coarse minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ShiftGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
}

impl Default for ShiftGrid {
    fn default() -> Self {
        ShiftGrid {
            lo: -0.3,
            hi: 0.15,
            n_coarse: 19,
            n_fine: 9,
        }
    }
}

/// Located resonance and the optimal-time P_N there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocatedResonance {
    /// Minimizing shift in units of Ω2.
    pub shift: f64,
    pub omega_l: f64,
    pub p_n: f64,
    pub p_n_err: f64,
    pub t_opt: f64,
}

/// Two-pass search for the residual resonance shift, then a final run at the
/// refined minimum. The search runs without noise; a noisy setup is measured
/// once at the located point.
pub fn locate_resonance(setup: &PolarizationSetup, grid: &ShiftGrid) -> Result<LocatedResonance> {
    if !setup.noise.is_silent() {
        let quiet = PolarizationSetup {
            noise: NoiseConfig::noiseless(),
            n_realizations: 1,
            ..setup.clone()
        };
        let found = locate_resonance(&quiet, grid)?;
        let run = polarize(setup, found.omega_l).map_err(|e| e.at_point(found.omega_l))?;
        return Ok(LocatedResonance {
            p_n: run.min_p_n,
            p_n_err: run.min_p_n_err,
            t_opt: run.t_opt,
            ..found
        });
    }
    let unit = setup.protocol.omega2()?;
    let nominal = resonance_condition(&setup.protocol)?;
    let coarse = scan_shift(setup, &linspace(grid.lo, grid.hi, grid.n_coarse), unit)?;
    let step = (grid.hi - grid.lo) / (grid.n_coarse.max(2) - 1) as f64;
    let centre = match coarse.minimum {
        Some(m) => (m.grid_omega_l - nominal) / unit,
        None => 0.0,
    };
    let fine = scan_shift(
        setup,
        &linspace(centre - step, centre + step, grid.n_fine.max(3)),
        unit,
    )?;
    let omega_l = match fine.minimum {
        Some(m) => m.omega_l,
        None => nominal + centre * unit,
    };
    let best = polarize(setup, omega_l).map_err(|e| e.at_point(omega_l))?;
    // Keep the better of the refined run and the best grid point.
    let k = fine
        .p_n
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let (omega_l, p_n, p_n_err, t_opt) = if best.min_p_n <= fine.p_n[k] {
        (omega_l, best.min_p_n, best.min_p_n_err, best.t_opt)
    } else {
        (fine.omega_l[k], fine.p_n[k], fine.p_n_err[k], fine.t_opt[k])
    };
    Ok(LocatedResonance {
        shift: (omega_l - nominal) / unit,
        omega_l,
        p_n,
        p_n_err,
        t_opt,
    })
}

/// Row of a ratio scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub ratio: f64,
    pub located: LocatedResonance,
}

/// Optimal-time P_N at the located resonance for each `Ω2/Ω1`.
///
/// `corrected` selects the Bloch–Siegert corrected modulation. `base`
/// supplies everything but the protocol, which is rebuilt per ratio from Ω1.
pub fn scan_ratio(
    base: &PolarizationSetup,
    omega1: f64,
    ratios: &[f64],
    corrected: bool,
    grid: &ShiftGrid,
) -> Result<Vec<RatioPoint>> {
    let mut ratios = ratios.to_vec();
    ratios.sort_by(f64::total_cmp);
    if let Some(&r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 2.0)) {
        return Err(Error::InvalidParameter(format!("ratio {r} outside (0, 2]")));
    }
    ratios
        .iter()
        .map(|&r| {
            let o2 = r * omega1;
            let protocol = if corrected {
                ProtocolParams::pm_bss(omega1, o2)
            } else {
                ProtocolParams::pm(omega1, o2)
            }
            .with_carrier(base.protocol.carrier);
            let setup = PolarizationSetup {
                protocol,
                ..base.clone()
            };
            locate_resonance(&setup, grid)
                .map(|located| RatioPoint { ratio: r, located })
                .map_err(|e| e.at_point(r))
        })
        .collect()
}

/// A resonance dip of a P_N curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Dip {
    pub x: f64,
    pub depth_min: f64,
    /// Full width at half depth, `P_N = (1 + min)/2`.
    pub fwhm: f64,
}

/// Linear-interpolated crossing of `level` between samples i and j.
fn crossing(x: &[f64], y: &[f64], i: usize, j: usize, level: f64) -> f64 {
    let t = (level - y[i]) / (y[j] - y[i]);
    x[i] + t * (x[j] - x[i])
}

/// Width at half depth of the dip whose minimum sample is `k`.
/// `None` if either flank never reaches the half-depth level.
pub fn dip_fwhm(x: &[f64], y: &[f64], k: usize) -> Option<f64> {
    let level = 0.5 * (1.0 + y[k]);
    let left = (0..k)
        .rev()
        .find(|&i| y[i] >= level)
        .map(|i| crossing(x, y, i, i + 1, level))?;
    let right = (k + 1..y.len())
        .find(|&i| y[i] >= level)
        .map(|i| crossing(x, y, i - 1, i, level))?;
    Some(right - left)
}

/// Minimum of `y` over samples whose x lies within `window` of `centre`.
pub fn dip_near(x: &[f64], y: &[f64], centre: f64, window: f64) -> Option<Dip> {
    let k = (0..x.len())
        .filter(|&i| (x[i] - centre).abs() <= window)
        .min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    Some(Dip {
        x: x[k],
        depth_min: y[k],
        fwhm: dip_fwhm(x, y, k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_of_exact_parabola() {
        let f = |x: f64| 3.0 * (x - 0.37).powi(2) + 1.0;
        let x = [0.1, 0.3, 0.8];
        let v = parabolic_vertex(x, [f(x[0]), f(x[1]), f(x[2])]);
        assert!((v - 0.37).abs() < 1e-12);
    }

    #[test]
    fn fwhm_of_lorentzian_dip() {
        let w = 0.2;
        let x = linspace(-2.0, 2.0, 4001);
        let y: Vec<f64> = x
            .iter()
            .map(|x| 1.0 - 0.9 / (1.0 + (2.0 * x / w).powi(2)))
            .collect();
        let d = dip_near(&x, &y, 0.0, 0.5).unwrap();
        assert!((d.fwhm - w).abs() < 1e-5, "{}", d.fwhm);
        assert!((d.depth_min - 0.1).abs() < 1e-12);
    }

    #[test]
    fn edge_minimum_is_a_bracketing_failure() {
        let x = [0.0, 1.0, 2.0];
        let err = locate_minimum(&x, &[0.5, 0.7, 0.9]).unwrap_err();
        match err {
            Error::AtScanPoint { x, source } => {
                assert_eq!(x, 0.0);
                assert!(matches!(*source, Error::BracketingFailure(_)));
            }
            e => panic!("{e}"),
        }
        assert!(locate_minimum(&x, &[1.0, 1.0, 1.0]).unwrap().is_none());
    }

    #[test]
    fn uncoupled_scan_is_flat() {
        let setup = PolarizationSetup::noiseless(ProtocolParams::hh(1.0), 0.0);
        let mut setup = setup;
        setup.window_factor = 0.01;
        let s = scan_resonance(&setup, &linspace(0.9, 1.1, 5)).unwrap();
        assert!(s.minimum.is_none());
        assert!(s.p_n.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }
}
