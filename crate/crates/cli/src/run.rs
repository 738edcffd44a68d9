//! Experiment dispatch.

use std::f64::consts::PI;
use std::path::PathBuf;

use dressed::experiments::coherence::{CoherenceSetup, T2Estimate};
use dressed::experiments::polarization::polarize_for;
use dressed::experiments::scan::scan_ratio;
use dressed::experiments::{measure_t2, scan_resonance, sense_spectrum, PolarizationSetup};
use dressed::noise::NoiseConfig;
use dressed::power::power_report;
use dressed::protocols::{resonance_condition, ProtocolParams};
use dressed::spin::SpinConvention;

use crate::config::{CouplingSection, Plan, ProtocolSection, RunConfig, ScanAxis, Variant};
use crate::error::{CliError, Result};
use crate::output::{Cell, Table};
use crate::presets;

/// Environment variable that overrides the config's output directory.
pub const OUT_DIR_ENV: &str = "SIMULATE_OUT_DIR";

/// Decays shorter than this fraction of the record are re-measured.
const SHORT_DECAY_FRACTION: f64 = 0.05;
/// Record length of the re-measurement, in decay times.
const RERUN_SPAN: f64 = 8.0;

fn to_mhz(w: f64) -> f64 {
    w / (2.0 * PI)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Takes precedence over the config's `out_dir`.
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub smoke: bool,
}

/// A parsed config and a label for where it came from.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub source: String,
    pub smoke: bool,
}

/// Reads a preset by name, or else a config file by path.
pub fn load(source: &str, smoke: bool) -> Result<Loaded> {
    let (config, label) = match presets::find(source) {
        Some(p) => (p.config(smoke)?, format!("preset {}", p.name)),
        None => {
            let text = std::fs::read_to_string(source).map_err(|e| {
                CliError::config(
                    source,
                    format!("neither a preset nor a readable config: {e}"),
                )
            })?;
            (RunConfig::from_toml(&text, smoke)?, source.to_string())
        }
    };
    Ok(Loaded {
        config,
        source: label,
        smoke,
    })
}

fn noise_lines(prefix: &str, n: &NoiseConfig, out: &mut Vec<String>) {
    out.push(format!("{prefix}.magnetic_tau_us = {}", n.magnetic.tau));
    out.push(format!(
        "{prefix}.magnetic_sigma_rad_per_us = {}",
        n.magnetic.sigma
    ));
    out.push(format!("{prefix}.drive_tau_us = {}", n.drive_relative.tau));
    out.push(format!(
        "{prefix}.drive_relative_sigma = {}",
        n.drive_relative.sigma
    ));
}

fn protocol_lines(prefix: &str, p: &ProtocolParams, out: &mut Vec<String>) {
    out.push(format!("{prefix}.kind = {}", p.kind));
    for (k, v) in p.entries() {
        out.push(format!("{prefix}.{k}_rad_per_us = {v}"));
    }
}

fn setup_lines(s: &PolarizationSetup, out: &mut Vec<String>) {
    protocol_lines("resolved.protocol", &s.protocol, out);
    out.push(format!("resolved.g_rad_per_us = {}", s.g));
    out.push(format!("resolved.frame = {:?}", s.frame));
    out.push(format!("resolved.window_factor = {}", s.window_factor));
    out.push(format!("resolved.n_realizations = {}", s.n_realizations));
    match s.dt {
        Some(dt) => out.push(format!("resolved.dt_us = {dt}")),
        None => out.push("resolved.dt_us = default (40 steps per fastest period)".into()),
    }
    noise_lines("resolved.noise", &s.noise, out);
}

/// Comment lines shared by every file of a run.
pub fn header(loaded: &Loaded) -> Result<Vec<String>> {
    let cfg = &loaded.config;
    let mut out = vec![
        "dressed simulate output".to_string(),
        format!("code_version = {}", env!("CARGO_PKG_VERSION")),
        format!("experiment = {}", cfg.experiment.name()),
        format!("source = {}", loaded.source),
        format!("smoke = {}", loaded.smoke),
        format!("master_seed = {}", cfg.master_seed),
        format!("spin_convention = {}", SpinConvention::default()),
        "units = frequencies in MHz unless marked rad_per_us, times in us".to_string(),
    ];
    let shown = RunConfig {
        smoke: None,
        ..cfg.clone()
    };
    out.extend(
        shown
            .to_toml()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("config: {l}")),
    );
    match cfg.plan()? {
        Plan::ScanRatio { base, grid, .. } => {
            setup_lines(&base, &mut out);
            out.push(format!(
                "resolved.shift_grid = [{}, {}] coarse {} fine {}",
                grid.lo, grid.hi, grid.n_coarse, grid.n_fine
            ));
        }
        Plan::ScanResonance { setup, .. } | Plan::Polarize { setup, .. } => {
            setup_lines(&setup, &mut out)
        }
        Plan::Coherence { template, .. } => {
            out.push(format!(
                "resolved.n_realizations = {}",
                template.n_realizations
            ));
            noise_lines("resolved.noise", &template.noise, &mut out);
        }
        Plan::Sense { setup, control } => {
            protocol_lines("resolved.protocol", &setup.protocol, &mut out);
            for (i, n) in setup.system.nuclei.iter().enumerate() {
                out.push(format!(
                    "resolved.nucleus{i}.omega_l_rad_per_us = {}",
                    n.omega_l
                ));
                out.push(format!("resolved.nucleus{i}.g_rad_per_us = {}", n.g));
            }
            out.push(format!("resolved.sensing_mode = {:?}", setup.mode));
            if let Some((cs, _)) = control {
                protocol_lines("resolved.control.protocol", &cs.protocol, &mut out);
                out.push(format!("resolved.control.g_rad_per_us = {}", cs.g));
            }
        }
        Plan::Power { g, protocols } => {
            out.push(format!("resolved.g_rad_per_us = {g}"));
            for (i, p) in protocols.iter().enumerate() {
                protocol_lines(&format!("resolved.protocol{i}"), p, &mut out);
            }
        }
    }
    Ok(out)
}

fn measure_point(setup: &CoherenceSetup) -> Result<T2Estimate> {
    let est = measure_t2(setup)?;
    if est.t2 < SHORT_DECAY_FRACTION * setup.t_max {
        let shorter = CoherenceSetup {
            t_max: RERUN_SPAN * est.t2,
            ..setup.clone()
        };
        return Ok(measure_t2(&shorter)?);
    }
    Ok(est)
}

fn file(cfg: &RunConfig, suffix: &str) -> String {
    format!("{}{suffix}.csv", cfg.name)
}

/// Runs the experiment and returns its tables, without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<Vec<Table>> {
    match cfg.plan()? {
        Plan::ScanRatio {
            base,
            omega1,
            ratios,
            variants,
            grid,
        } => {
            let mut columns = vec!["omega2_over_omega1".to_string()];
            columns.extend(variants.iter().map(|v| format!("P_N_{}", v.name())));
            let mut t = Table::new(file(cfg, ""), &columns);
            let results = variants
                .iter()
                .map(|v| scan_ratio(&base, omega1, &ratios, *v == Variant::Corrected, &grid))
                .collect::<Result<Vec<_>, _>>()?;
            for i in 0..results[0].len() {
                let mut row = vec![Cell::Num(results[0][i].ratio)];
                row.extend(results.iter().map(|r| Cell::Num(r[i].located.p_n)));
                t.push(row);
            }
            for (v, res) in variants.iter().zip(&results) {
                for p in res {
                    let l = &p.located;
                    t.note(
                        format!("{}.ratio_{}", v.name(), p.ratio),
                        format!(
                            "shift_over_omega2 {} omega_l {} P_N_err {} t_opt_us {}",
                            l.shift,
                            to_mhz(l.omega_l),
                            l.p_n_err,
                            l.t_opt
                        ),
                    );
                }
            }
            Ok(vec![t])
        }
        Plan::ScanResonance {
            setup,
            axis,
            x,
            omega_l,
        } => {
            let scan = scan_resonance(&setup, &omega_l)?;
            let x_name = match axis {
                ScanAxis::Shift => "delta_omega_l_over_omega2",
                ScanAxis::OmegaL => "omega_l",
            };
            let mut t = Table::new(file(cfg, ""), &[x_name, "P_N"]);
            for (x, p) in x.iter().zip(&scan.p_n) {
                t.push(vec![Cell::Num(*x), Cell::Num(*p)]);
            }
            t.note("nominal_omega_l", to_mhz(scan.nominal));
            if let Some(m) = scan.minimum {
                let at = match axis {
                    ScanAxis::Shift => (m.omega_l - scan.nominal) / setup.protocol.omega2()?,
                    ScanAxis::OmegaL => to_mhz(m.omega_l),
                };
                t.note(format!("minimum_{x_name}"), at);
                t.note("minimum_P_N", m.p_n);
            }
            Ok(vec![t])
        }
        Plan::Polarize {
            setup,
            omega_l,
            t_final,
        } => {
            let run = polarize_for(&setup, omega_l, t_final)?;
            let mut t = Table::new(file(cfg, ""), &["time_us", "P_N", "P_N_err"]);
            for ((time, p), e) in run.times.iter().zip(&run.p_n).zip(&run.p_n_err) {
                t.push(vec![Cell::Num(*time), Cell::Num(*p), Cell::Num(*e)]);
            }
            t.note("omega_l", to_mhz(omega_l));
            t.note(
                "nominal_omega_l",
                to_mhz(resonance_condition(&setup.protocol)?),
            );
            t.note("min_P_N", run.min_p_n);
            t.note("t_opt_us", run.t_opt);
            Ok(vec![t])
        }
        Plan::Coherence {
            template,
            omega1,
            ratios,
            variants,
        } => {
            let mut columns = vec!["omega2_over_omega1".to_string()];
            for v in &variants {
                columns.push(format!("T2_{}", v.name()));
                columns.push(format!("T2_{}_se", v.name()));
            }
            let mut t = Table::new(file(cfg, ""), &columns);
            for &r in &ratios {
                let mut row = vec![Cell::Num(r)];
                for v in &variants {
                    let setup = CoherenceSetup {
                        protocol: v
                            .protocol(omega1, r * omega1)
                            .with_carrier(template.protocol.carrier),
                        ..template.clone()
                    };
                    let est = measure_point(&setup).map_err(|e| match e {
                        CliError::Numerical(e) => {
                            CliError::Numerical(dressed::Error::AtScanPoint {
                                x: r,
                                source: Box::new(e),
                            })
                        }
                        other => other,
                    })?;
                    t.note(
                        format!("{}.ratio_{r}", v.name()),
                        format!(
                            "method {:?} t_max_us {} amplitude {} reduced_chi2 {} one_over_e_us {}",
                            est.method,
                            est.times.last().copied().unwrap_or(0.0),
                            est.fit.amplitude,
                            est.fit.reduced_chi2,
                            est.one_over_e.map_or("none".to_string(), |x| x.to_string())
                        ),
                    );
                    row.push(Cell::Num(est.t2));
                    row.push(Cell::Num(est.t2_se));
                }
                t.push(row);
            }
            Ok(vec![t])
        }
        Plan::Sense { setup, control } => {
            let mut tables = Vec::new();
            if let Some((cs, omegas)) = control {
                let scan = scan_resonance(&cs, &omegas)?;
                let mut t = Table::new(file(cfg, "_control"), &["omega_l", "P_N"]);
                for (w, p) in scan.omega_l.iter().zip(&scan.p_n) {
                    t.push(vec![Cell::Num(to_mhz(*w)), Cell::Num(*p)]);
                }
                t.note("nominal_omega_l", to_mhz(scan.nominal));
                tables.push(t);
            }
            let record = sense_spectrum(&setup)?;
            let mut t = Table::new(file(cfg, "_spectrum"), &["frequency", "magnitude"]);
            for (f, m) in &record.spectrum {
                t.push(vec![Cell::Num(*f), Cell::Num(*m)]);
            }
            t.note("resolution", record.resolution);
            t.note("n_samples", record.series.len());
            let peaks: Vec<String> = record.peaks(0.2).iter().map(|f| f.to_string()).collect();
            t.note("peaks", peaks.join(" "));
            tables.push(t);
            Ok(tables)
        }
        Plan::Power { g, protocols } => Ok(vec![power_table(file(cfg, ""), g, &protocols)?]),
    }
}

fn power_table(file_name: String, g: f64, protocols: &[ProtocolParams]) -> Result<Table> {
    let mut t = Table::new(file_name, &["protocol", "peak_ratio", "cycle_ratio"]);
    for p in protocols {
        let r = power_report(p, resonance_condition(p)?, g)?;
        t.push(vec![
            Cell::Text(p.kind.to_string()),
            Cell::Num(r.peak_power_ratio),
            Cell::Num(r.cycle_power_ratio),
        ]);
        t.note(format!("{}.cycle_time_ratio", p.kind), r.cycle_time_ratio);
        if let Some(n) = r.note {
            t.note(format!("{}.note", p.kind), n);
        }
    }
    Ok(t)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::config("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads, runs and writes every CSV of a config; returns the written paths.
pub fn run(source: &str, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let mut loaded = load(source, opts.smoke)?;
    if let Some(seed) = opts.seed {
        loaded.config.master_seed = seed;
    }
    let header = header(&loaded)?;
    let tables = with_threads(opts.threads, || execute(&loaded.config))??;
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| loaded.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    tables.iter().map(|t| t.write(&dir, &header)).collect()
}

/// `simulate power <protocol> key=value ...`: one power-table row as CSV.
///
/// Keys are the protocol parameters in MHz (`omega1`, `omega2`, `omega0`,
/// `omega3`, `delta`, `omega_s`, with or without an `_mhz` suffix) and
/// optionally `g`.
pub fn power_command(kind: &str, params: &[String]) -> Result<String> {
    let mut section = ProtocolSection {
        kind: kind.to_string(),
        omega1_mhz: None,
        omega2_mhz: None,
        omega0_mhz: None,
        omega3_mhz: None,
        delta_mhz: None,
        omega_s_mhz: None,
    };
    let mut coupling = CouplingSection::default();
    for item in params {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::config(item.as_str(), "expected key=value"))?;
        let key = key.trim();
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::config(key, format!("`{value}` is not a number")))?;
        let slot = match key.strip_suffix("_mhz").unwrap_or(key) {
            "omega1" => &mut section.omega1_mhz,
            "omega2" => &mut section.omega2_mhz,
            "omega0" => &mut section.omega0_mhz,
            "omega3" => &mut section.omega3_mhz,
            "delta" => &mut section.delta_mhz,
            "omega_s" => &mut section.omega_s_mhz,
            "g" => &mut coupling.g_mhz,
            _ => return Err(CliError::config(key, "unknown parameter")),
        };
        *slot = Some(v);
    }
    let p = section.resolve("power", dressed::protocols::DEFAULT_CARRIER)?;
    let g = match coupling.g_mhz {
        Some(_) => coupling.resolve(None)?,
        None => crate::config::mhz(0.01),
    };
    let t = power_table("stdout".into(), g, &[p])?;
    Ok(t.render(&[format!("code_version = {}", env!("CARGO_PKG_VERSION"))]))
}
