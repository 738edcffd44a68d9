//! Run configuration.
//!
//! Configs are TOML. Frequencies are ordinary frequencies in MHz and become
//! angular frequencies (rad/μs) on load; times are in μs. Unknown keys are
//! rejected. An optional `[smoke]` table holds overrides that are deep-merged
//! over the rest of the file when a reduced run is requested.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use dressed::experiments::coherence::CoherenceSetup;
use dressed::experiments::{PolarizationSetup, SensingMode, SensingSetup, ShiftGrid};
use dressed::noise::{
    NoiseConfig, OuParams, DRIVE_STREAM, MAGNETIC_STREAM, REFERENCE_DRIVE_RELATIVE_ERROR,
    REFERENCE_DRIVE_TAU_US, REFERENCE_MAGNETIC_SIGMA, REFERENCE_MAGNETIC_TAU_US,
};
use dressed::propagator::{Nucleus, SimFrame, SystemParams};
use dressed::protocols::{resonance_condition, ProtocolKind, ProtocolParams};
use dressed::Error as CoreError;

use crate::error::{CliError, Result};

/// MHz to rad/μs.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f
}

fn default_name() -> String {
    "run".into()
}
fn default_seed() -> u64 {
    1
}
fn one() -> usize {
    1
}
fn default_window() -> f64 {
    dressed::experiments::polarization::DEFAULT_WINDOW_FACTOR
}
fn default_carrier_mhz() -> f64 {
    2870.0
}
fn both_variants() -> Vec<Variant> {
    vec![Variant::Corrected, Variant::Uncorrected]
}
fn default_shift_lo() -> f64 {
    -0.6
}
fn default_shift_hi() -> f64 {
    0.2
}
fn default_n_coarse() -> usize {
    33
}
fn default_n_fine() -> usize {
    11
}
fn default_coherence_samples() -> usize {
    100
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ScanRatio,
    ScanResonance,
    Polarize,
    Coherence,
    Sense,
    Power,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ScanRatio => "scan-ratio",
            Experiment::ScanResonance => "scan-resonance",
            Experiment::Polarize => "polarize",
            Experiment::Coherence => "coherence",
            Experiment::Sense => "sense",
            Experiment::Power => "power",
        }
    }

    /// Config section holding the experiment's own parameters.
    fn section(self) -> &'static str {
        match self {
            Experiment::ScanRatio => "scan_ratio",
            Experiment::ScanResonance => "scan_resonance",
            Experiment::Polarize => "polarize",
            Experiment::Coherence => "coherence",
            Experiment::Sense => "sense",
            Experiment::Power => "power",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameName {
    #[default]
    FirstIp,
    Lab,
}

impl From<FrameName> for SimFrame {
    fn from(f: FrameName) -> Self {
        match f {
            FrameName::FirstIp => SimFrame::FirstIp,
            FrameName::Lab => SimFrame::Lab,
        }
    }
}

/// Phase modulation with or without the Bloch–Siegert correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Corrected,
    Uncorrected,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Corrected => "corrected",
            Variant::Uncorrected => "uncorrected",
        }
    }

    pub fn protocol(self, omega1: f64, omega2: f64) -> ProtocolParams {
        match self {
            Variant::Corrected => ProtocolParams::pm_bss(omega1, omega2),
            Variant::Uncorrected => ProtocolParams::pm(omega1, omega2),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// No noise unless a sigma is given explicitly.
    #[default]
    None,
    /// T2* = 3 μs magnetic noise (τ = 25 μs) and 1 % drive error (τ = 500 μs).
    Reference,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanAxis {
    /// `(ωl − nominal)/Ω2`
    #[default]
    Shift,
    /// ωl in MHz.
    OmegaL,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    Effective,
    FullDrive,
}

impl From<ModeName> for SensingMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Effective => SensingMode::Effective,
            ModeName::FullDrive => SensingMode::FullDrive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// HH, PM, PM_BSS, Detuned, DetunedDouble, AM, AM_via_PM, Sense_PM or Sense_AM.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega2_mhz: Option<f64>,
    /// AM base amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega3_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_s_mhz: Option<f64>,
}

/// Config key of a core protocol parameter.
fn protocol_key(name: &str) -> &'static str {
    match name {
        "omega1" => "omega1_mhz",
        "omega2" => "omega2_mhz",
        "omega0_drive" => "omega0_mhz",
        "omega3" => "omega3_mhz",
        "delta" => "delta_mhz",
        "omega_s" => "omega_s_mhz",
        _ => "kind",
    }
}

fn protocol_error(section: &str, e: CoreError) -> CliError {
    match e {
        CoreError::MissingParameter { name, .. } => CliError::config(
            format!("{section}.{}", protocol_key(name)),
            "required by this protocol kind",
        ),
        CoreError::InvalidParameter(msg) => {
            let key = [
                "omega0_drive",
                "omega1",
                "omega2",
                "omega3",
                "omega_s",
                "delta",
            ]
            .into_iter()
            .find(|n| msg.starts_with(n))
            .map(|n| format!("{section}.{}", protocol_key(n)))
            .unwrap_or_else(|| section.to_string());
            CliError::config(key, msg)
        }
        other => CliError::config(section, other.to_string()),
    }
}

impl ProtocolSection {
    pub fn resolve(&self, section: &str, carrier: f64) -> Result<ProtocolParams> {
        let kind = ProtocolKind::from_str(&self.kind)
            .map_err(|e| CliError::config(format!("{section}.kind"), e.to_string()))?;
        let p = ProtocolParams {
            kind,
            omega1: self.omega1_mhz.map(mhz),
            omega2: self.omega2_mhz.map(mhz),
            omega0_drive: self.omega0_mhz.map(mhz),
            omega3: self.omega3_mhz.map(mhz),
            delta: self.delta_mhz.map(mhz),
            omega_s: self.omega_s_mhz.map(mhz),
            carrier,
        };
        p.validate().map_err(|e| protocol_error(section, e))?;
        Ok(p)
    }
}

/// Electron–nucleus coupling, either absolute or relative to Ω1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_over_omega1: Option<f64>,
}

impl CouplingSection {
    /// g in rad/μs; `omega1` is the Ω1 that `g_over_omega1` refers to.
    pub fn resolve(&self, omega1: Option<f64>) -> Result<f64> {
        let g = match (self.g_mhz, self.g_over_omega1) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "coupling",
                    "give either g_mhz or g_over_omega1, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::config(
                    "coupling.g_mhz",
                    "a coupling is required for this experiment",
                ))
            }
            (Some(g), None) => (mhz(g), "coupling.g_mhz"),
            (None, Some(r)) => {
                let o1 = omega1.ok_or_else(|| {
                    CliError::config("coupling.g_over_omega1", "no Omega1 to scale by")
                })?;
                (r * o1, "coupling.g_over_omega1")
            }
        };
        if !(g.0 > 0.0 && g.0.is_finite()) {
            return Err(CliError::config(g.1, "must be positive"));
        }
        Ok(g.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub model: NoiseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic_tau_us: Option<f64>,
    /// Standard deviation of the field fluctuation δB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic_sigma_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_tau_us: Option<f64>,
    /// Standard deviation of the relative drive-amplitude error ε.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_relative: Option<f64>,
}

impl NoiseSection {
    pub fn resolve(&self) -> Result<NoiseConfig> {
        let reference = self.model == NoiseModel::Reference;
        let magnetic_sigma = self.magnetic_sigma_mhz.map(mhz).unwrap_or(if reference {
            REFERENCE_MAGNETIC_SIGMA
        } else {
            0.0
        });
        let drive_sigma = self.drive_relative.unwrap_or(if reference {
            REFERENCE_DRIVE_RELATIVE_ERROR
        } else {
            0.0
        });
        let magnetic = OuParams::new(
            self.magnetic_tau_us.unwrap_or(REFERENCE_MAGNETIC_TAU_US),
            magnetic_sigma,
            MAGNETIC_STREAM,
        )
        .map_err(|e| CliError::config("noise.magnetic", e.to_string()))?;
        let drive_relative = OuParams::new(
            self.drive_tau_us.unwrap_or(REFERENCE_DRIVE_TAU_US),
            drive_sigma,
            DRIVE_STREAM,
        )
        .map_err(|e| CliError::config("noise.drive", e.to_string()))?;
        Ok(NoiseConfig {
            magnetic,
            drive_relative,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRatioSection {
    pub omega1_mhz: f64,
    /// Values of Ω2/Ω1.
    pub ratios: Vec<f64>,
    #[serde(default = "both_variants")]
    pub variants: Vec<Variant>,
    /// Shift search range in units of Ω2.
    #[serde(default = "default_shift_lo")]
    pub shift_lo: f64,
    #[serde(default = "default_shift_hi")]
    pub shift_hi: f64,
    #[serde(default = "default_n_coarse")]
    pub n_coarse: usize,
    #[serde(default = "default_n_fine")]
    pub n_fine: usize,
}

/// Extra scan points: `n_points` evenly spaced over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanResonanceSection {
    #[serde(default)]
    pub axis: ScanAxis,
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refine: Vec<Window>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizeSection {
    /// Larmor frequency; defaults to the nominal resonance plus `shift`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_l_mhz: Option<f64>,
    /// Offset from the nominal resonance in units of Ω2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    /// Defaults to the window factor times the predicted transfer time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final_us: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    pub omega1_mhz: f64,
    pub ratios: Vec<f64>,
    #[serde(default = "both_variants")]
    pub variants: Vec<Variant>,
    pub t_max_us: f64,
    #[serde(default = "default_coherence_samples")]
    pub n_samples: usize,
}

/// Single-nucleus polarization scan run alongside a sensing record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub lo_mhz: f64,
    pub hi_mhz: f64,
    pub n_points: usize,
    /// Extra points, in MHz.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refine: Vec<Window>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseSection {
    /// Larmor frequency of each nucleus.
    pub nuclei_mhz: Vec<f64>,
    pub total_time_us: f64,
    pub sample_dt_us: f64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub shot_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// Each protocol is tuned to its own nominal resonance.
    pub protocols: Vec<ProtocolSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Stem of the output file names.
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Noise realizations per simulated point.
    #[serde(default = "one")]
    pub n_realizations: usize,
    /// Propagation step override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub frame: FrameName,
    /// Electron gap ω0, used in the lab frame.
    #[serde(default = "default_carrier_mhz")]
    pub carrier_mhz: f64,
    /// Polarization window in units of the predicted transfer time.
    #[serde(default = "default_window")]
    pub window_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_ratio: Option<ScanRatioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_resonance: Option<ScanResonanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarize: Option<PolarizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherence: Option<CoherenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<SenseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSection>,
    /// Overrides applied by [`RunConfig::from_toml`] when `smoke` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoke: Option<toml::Table>,
}

/// Recursively overlays `over` onto `base`.
fn deep_merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => deep_merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Sorted union of an even grid and the refinement windows.
pub fn grid_points(lo: f64, hi: f64, n: usize, refine: &[Window]) -> Vec<f64> {
    let mut pts = dressed::experiments::scan::linspace(lo, hi, n);
    for w in refine {
        pts.extend(dressed::experiments::scan::linspace(w.lo, w.hi, w.n_points));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Experiment with every parameter converted to simulation units.
#[derive(Clone, Debug)]
pub enum Plan {
    ScanRatio {
        base: PolarizationSetup,
        omega1: f64,
        ratios: Vec<f64>,
        variants: Vec<Variant>,
        grid: ShiftGrid,
    },
    ScanResonance {
        setup: PolarizationSetup,
        axis: ScanAxis,
        /// Scan coordinates in config units, ascending.
        x: Vec<f64>,
        /// Matching Larmor frequencies (rad/μs).
        omega_l: Vec<f64>,
    },
    Polarize {
        setup: PolarizationSetup,
        omega_l: f64,
        t_final: f64,
    },
    Coherence {
        template: CoherenceSetup,
        omega1: f64,
        ratios: Vec<f64>,
        variants: Vec<Variant>,
    },
    Sense {
        setup: SensingSetup,
        /// Control scan: setup and Larmor frequencies (rad/μs).
        control: Option<(PolarizationSetup, Vec<f64>)>,
    },
    Power {
        g: f64,
        protocols: Vec<ProtocolParams>,
    },
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be positive, got {v}")))
    }
}

fn check_ratios(key: &str, ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        return Err(CliError::config(key, "needs at least one value"));
    }
    match ratios.iter().find(|r| !(**r > 0.0 && **r <= 2.0)) {
        Some(r) => Err(CliError::config(key, format!("ratio {r} outside (0, 2]"))),
        None => Ok(()),
    }
}

fn check_variants(key: &str, v: &[Variant]) -> Result<()> {
    if v.is_empty() {
        return Err(CliError::config(key, "needs at least one variant"));
    }
    if v.iter().enumerate().any(|(i, a)| v[..i].contains(a)) {
        return Err(CliError::config(key, "duplicate variant"));
    }
    Ok(())
}

fn check_windows(key: &str, w: &[Window]) -> Result<()> {
    for (i, w) in w.iter().enumerate() {
        if !(w.hi > w.lo) || w.n_points < 2 {
            return Err(CliError::config(
                format!("{key}[{i}]"),
                "needs hi > lo and n_points >= 2",
            ));
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parses a config; with `smoke` the `[smoke]` overrides are applied first.
    pub fn from_toml(text: &str, smoke: bool) -> Result<RunConfig> {
        let mut root: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if smoke {
            match root.get("smoke").cloned() {
                Some(toml::Value::Table(over)) => deep_merge(&mut root, &over),
                Some(_) => return Err(CliError::config("smoke", "must be a table")),
                None => {}
            }
        }
        let merged = toml::to_string(&root).map_err(|e| CliError::Parse(e.to_string()))?;
        let cfg: RunConfig = toml::from_str(&merged).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.plan()?;
        Ok(cfg)
    }

    /// The config as TOML, with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn carrier(&self) -> Result<f64> {
        positive("carrier_mhz", self.carrier_mhz).map(mhz)
    }

    fn section_missing(&self) -> CliError {
        CliError::config(
            self.experiment.section(),
            format!("required by experiment `{}`", self.experiment.name()),
        )
    }

    fn protocol(&self) -> Result<ProtocolParams> {
        self.protocol
            .as_ref()
            .ok_or_else(|| CliError::config("protocol", "required by this experiment"))?
            .resolve("protocol", self.carrier()?)
    }

    fn polarization_setup(&self, protocol: ProtocolParams, g: f64) -> Result<PolarizationSetup> {
        if self.n_realizations == 0 {
            return Err(CliError::config("n_realizations", "must be at least 1"));
        }
        if let Some(dt) = self.dt_us {
            positive("dt_us", dt)?;
        }
        Ok(PolarizationSetup {
            protocol,
            g,
            frame: self.frame.into(),
            noise: self.noise.resolve()?,
            n_realizations: self.n_realizations,
            master_seed: self.master_seed,
            dt: self.dt_us,
            window_factor: positive("window_factor", self.window_factor)?,
        })
    }

    /// Resolves and validates everything the experiment needs.
    pub fn plan(&self) -> Result<Plan> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::config("name", "must be a non-empty file stem"));
        }
        let carrier = self.carrier()?;
        match self.experiment {
            Experiment::ScanRatio => {
                let s = self
                    .scan_ratio
                    .as_ref()
                    .ok_or_else(|| self.section_missing())?;
                let omega1 = mhz(positive("scan_ratio.omega1_mhz", s.omega1_mhz)?);
                check_ratios("scan_ratio.ratios", &s.ratios)?;
                check_variants("scan_ratio.variants", &s.variants)?;
                if !(s.shift_hi > s.shift_lo) || s.n_coarse < 3 || s.n_fine < 3 {
                    return Err(CliError::config(
                        "scan_ratio.shift_lo",
                        "needs shift_hi > shift_lo and at least 3 coarse and fine points",
                    ));
                }
                let g = self.coupling.resolve(Some(omega1))?;
                let base = self.polarization_setup(
                    ProtocolParams::pm(omega1, omega1).with_carrier(carrier),
                    g,
                )?;
                Ok(Plan::ScanRatio {
                    base,
                    omega1,
                    ratios: s.ratios.clone(),
                    variants: s.variants.clone(),
                    grid: ShiftGrid {
                        lo: s.shift_lo,
                        hi: s.shift_hi,
                        n_coarse: s.n_coarse,
                        n_fine: s.n_fine,
                    },
                })
            }
            Experiment::ScanResonance => {
                let s = self
                    .scan_resonance
                    .as_ref()
                    .ok_or_else(|| self.section_missing())?;
                let protocol = self.protocol()?;
                let g = self.coupling.resolve(protocol.omega1)?;
                let setup = self.polarization_setup(protocol, g)?;
                if !(s.hi > s.lo) {
                    return Err(CliError::config("scan_resonance.hi", "must exceed lo"));
                }
                check_windows("scan_resonance.refine", &s.refine)?;
                let x = grid_points(s.lo, s.hi, s.n_points, &s.refine);
                if x.len() < 3 {
                    return Err(CliError::config(
                        "scan_resonance.n_points",
                        "a scan needs at least 3 points",
                    ));
                }
                let omega_l = match s.axis {
                    ScanAxis::OmegaL => x.iter().map(|f| mhz(*f)).collect(),
                    ScanAxis::Shift => {
                        let unit = protocol
                            .omega2()
                            .map_err(|e| protocol_error("protocol", e))?;
                        let nominal = resonance_condition(&protocol)
                            .map_err(|e| protocol_error("protocol", e))?;
                        x.iter().map(|s| nominal + s * unit).collect()
                    }
                };
                Ok(Plan::ScanResonance {
                    setup,
                    axis: s.axis,
                    x,
                    omega_l,
                })
            }
            Experiment::Polarize => {
                let s = self.polarize.clone().unwrap_or_default();
                let protocol = self.protocol()?;
                let g = self.coupling.resolve(protocol.omega1)?;
                let setup = self.polarization_setup(protocol, g)?;
                let omega_l = match (s.omega_l_mhz, s.shift) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::config(
                            "polarize",
                            "give either omega_l_mhz or shift, not both",
                        ))
                    }
                    (Some(f), None) => mhz(positive("polarize.omega_l_mhz", f)?),
                    (None, shift) => {
                        let nominal = resonance_condition(&protocol)
                            .map_err(|e| protocol_error("protocol", e))?;
                        match shift {
                            Some(s) => {
                                nominal
                                    + s * protocol
                                        .omega2()
                                        .map_err(|e| protocol_error("protocol", e))?
                            }
                            None => nominal,
                        }
                    }
                };
                let t_final = match s.t_final_us {
                    Some(t) => positive("polarize.t_final_us", t)?,
                    None => setup.window().map_err(|e| protocol_error("protocol", e))?,
                };
                Ok(Plan::Polarize {
                    setup,
                    omega_l,
                    t_final,
                })
            }
            Experiment::Coherence => {
                let s = self
                    .coherence
                    .as_ref()
                    .ok_or_else(|| self.section_missing())?;
                let omega1 = mhz(positive("coherence.omega1_mhz", s.omega1_mhz)?);
                check_ratios("coherence.ratios", &s.ratios)?;
                check_variants("coherence.variants", &s.variants)?;
                if s.n_samples < 4 {
                    return Err(CliError::config(
                        "coherence.n_samples",
                        "must be at least 4",
                    ));
                }
                if self.n_realizations == 0 {
                    return Err(CliError::config("n_realizations", "must be at least 1"));
                }
                if let Some(dt) = self.dt_us {
                    positive("dt_us", dt)?;
                }
                Ok(Plan::Coherence {
                    template: CoherenceSetup {
                        protocol: ProtocolParams::pm(omega1, omega1).with_carrier(carrier),
                        noise: self.noise.resolve()?,
                        n_realizations: self.n_realizations,
                        master_seed: self.master_seed,
                        t_max: positive("coherence.t_max_us", s.t_max_us)?,
                        n_samples: s.n_samples,
                        dt: self.dt_us,
                    },
                    omega1,
                    ratios: s.ratios.clone(),
                    variants: s.variants.clone(),
                })
            }
            Experiment::Sense => {
                let s = self.sense.as_ref().ok_or_else(|| self.section_missing())?;
                let protocol = self.protocol()?;
                let control_protocol = match protocol.kind {
                    ProtocolKind::SensePm => {
                        ProtocolParams::pm(protocol.omega1()?, protocol.omega2()?)
                    }
                    ProtocolKind::SenseAm => ProtocolParams::am(
                        protocol.omega0_drive()?,
                        protocol.omega1()?,
                        protocol.omega2()?,
                    ),
                    _ => {
                        return Err(CliError::config(
                            "protocol.kind",
                            "sensing needs Sense_PM or Sense_AM",
                        ))
                    }
                }
                .with_carrier(carrier);
                let g = self.coupling.resolve(protocol.omega1)?;
                if s.nuclei_mhz.is_empty() || s.nuclei_mhz.len() > dressed::spin::MAX_SPINS - 1 {
                    return Err(CliError::config(
                        "sense.nuclei_mhz",
                        format!("needs 1 to {} nuclei", dressed::spin::MAX_SPINS - 1),
                    ));
                }
                for f in &s.nuclei_mhz {
                    positive("sense.nuclei_mhz", *f)?;
                }
                if let Some(dt) = self.dt_us {
                    positive("dt_us", dt)?;
                }
                let setup = SensingSetup {
                    protocol,
                    system: SystemParams {
                        nuclei: s
                            .nuclei_mhz
                            .iter()
                            .map(|f| Nucleus {
                                omega_l: mhz(*f),
                                g,
                            })
                            .collect(),
                    },
                    total_time: positive("sense.total_time_us", s.total_time_us)?,
                    sample_dt: positive("sense.sample_dt_us", s.sample_dt_us)?,
                    mode: s.mode.into(),
                    shot_noise: s.shot_noise,
                    master_seed: self.master_seed,
                    dt: self.dt_us,
                };
                if setup.total_time < 2.0 * setup.sample_dt {
                    return Err(CliError::config(
                        "sense.total_time_us",
                        "must cover at least two samples",
                    ));
                }
                let control = match &s.control {
                    None => None,
                    Some(c) => {
                        if !(c.hi_mhz > c.lo_mhz) || c.lo_mhz <= 0.0 {
                            return Err(CliError::config(
                                "sense.control.hi_mhz",
                                "needs 0 < lo_mhz < hi_mhz",
                            ));
                        }
                        check_windows("sense.control.refine", &c.refine)?;
                        let pts = grid_points(c.lo_mhz, c.hi_mhz, c.n_points, &c.refine);
                        if pts.len() < 3 {
                            return Err(CliError::config(
                                "sense.control.n_points",
                                "a scan needs at least 3 points",
                            ));
                        }
                        let cs = self.polarization_setup(control_protocol, g)?;
                        Some((cs, pts.into_iter().map(mhz).collect()))
                    }
                };
                Ok(Plan::Sense { setup, control })
            }
            Experiment::Power => {
                let s = self.power.as_ref().ok_or_else(|| self.section_missing())?;
                if s.protocols.is_empty() {
                    return Err(CliError::config(
                        "power.protocols",
                        "needs at least one protocol",
                    ));
                }
                let protocols = s
                    .protocols
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p.resolve(&format!("power.protocols[{i}]"), carrier))
                    .collect::<Result<Vec<_>>>()?;
                let g = match (self.coupling.g_mhz, self.coupling.g_over_omega1) {
                    (None, None) => mhz(0.01),
                    _ => self.coupling.resolve(protocols[0].omega1)?,
                };
                Ok(Plan::Power { g, protocols })
            }
        }
    }
}
