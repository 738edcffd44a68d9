//! Frequency sensing of nuclei through repeated electron measurements.
//!
//! Each sample the electron is prepared, interacts with the nuclei for one
//! sampling interval and is read out; the nuclei carry their reduced state
//! over to the next sample. The spectrum is the Fourier transform of the
//! resulting series.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{stream_rng, NoiseSample, MEASUREMENT_STREAM};
use crate::propagator::{
    default_dt, expm, su2_step, time_grid, Hamiltonian, SimFrame, SpinHamiltonian, SystemParams,
};
use crate::protocols::{effective_coupling, resonance_condition, ProtocolKind, ProtocolParams};
use crate::spin::{embed, Axis, Operator, StateVector, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    /// Closed-form effective interaction `G σ_A (Ix cos δt − Iy sin δt)`.
    #[default]
    Effective,
    /// The complete driven Hamiltonian, read out in the control frame.
    FullDrive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingSetup {
    /// `Sense_PM` or `Sense_AM`.
    pub protocol: ProtocolParams,
    pub system: SystemParams,
    /// Record length (μs).
    pub total_time: f64,
    /// Interval between electron readouts (μs).
    pub sample_dt: f64,
    pub mode: SensingMode,
    /// Replace expectation values by ±1 single-shot outcomes.
    pub shot_noise: bool,
    pub master_seed: u64,
    /// Propagation step for [`SensingMode::FullDrive`].
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensingRecord {
    /// Start of each sampling interval (μs).
    pub sample_times: Vec<f64>,
    pub series: Vec<f64>,
    /// `(frequency in MHz, |DFT|/N)` for bins `0..=N/2`.
    pub spectrum: Vec<(f64, f64)>,
    /// Bin spacing, `1/(N·sample_dt)` (MHz).
    pub resolution: f64,
}

/// Electron preparation and readout for a coupling axis.
fn probe_states(axis: [f64; 3]) -> (StateVector, [f64; 3]) {
    // Prepare along m ⟂ n and read along n × m.
    let n = normalize(axis);
    let helper = if n[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let m = normalize(cross(helper, n));
    let read = cross(n, m);
    let theta = m[2].clamp(-1.0, 1.0).acos();
    let phi = m[1].atan2(m[0]);
    (StateVector::qubit(theta, phi), read)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn pauli_combination(v: [f64; 3]) -> Operator {
    let mut op = embed(Axis::X, 0, 1).expect("single qubit").scale(v[0]);
    op.add_scaled(&embed(Axis::Y, 0, 1).expect("single qubit"), v[1]);
    op.add_scaled(&embed(Axis::Z, 0, 1).expect("single qubit"), v[2]);
    op
}

/// Traces out the electron (site 0) from a joint density matrix.
fn trace_electron(rho: &DMatrix<C64>) -> DMatrix<C64> {
    let d = rho.nrows() / 2;
    DMatrix::from_fn(d, d, |i, j| rho[(i, j)] + rho[(d + i, d + j)])
}

/// Beat detuning `nominal − ωl` of every nucleus, checked against Nyquist.
fn detunings(setup: &SensingSetup) -> Result<Vec<f64>> {
    let nominal = resonance_condition(&setup.protocol)?;
    let nyquist = 0.5 / setup.sample_dt;
    setup
        .system
        .nuclei
        .iter()
        .map(|n| {
            let d = nominal - n.omega_l;
            let f = d.abs() / (2.0 * PI);
            if f > nyquist {
                Err(Error::Aliasing {
                    sample_dt: setup.sample_dt,
                    frequency: f,
                    nyquist,
                })
            } else {
                Ok(d)
            }
        })
        .collect()
}

fn validate(setup: &SensingSetup) -> Result<usize> {
    if !matches!(
        setup.protocol.kind,
        ProtocolKind::SensePm | ProtocolKind::SenseAm
    ) {
        return Err(Error::UnsupportedPairing(format!(
            "sensing needs Sense_PM or Sense_AM, got {}",
            setup.protocol.kind
        )));
    }
    if setup.system.nuclei.is_empty() {
        return Err(Error::InvalidParameter(
            "sensing needs at least one nucleus".into(),
        ));
    }
    if !(setup.sample_dt > 0.0 && setup.total_time >= 2.0 * setup.sample_dt) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < sample_dt <= total_time/2, got sample_dt = {} and total_time = {}",
            setup.sample_dt, setup.total_time
        )));
    }
    Ok((setup.total_time / setup.sample_dt).round() as usize)
}

/// Electron axis of the effective interaction.
fn effective_axis(kind: ProtocolKind) -> [f64; 3] {
    match kind {
        ProtocolKind::SenseAm => [1.0, 0.0, 0.0],
        _ => [0.0, 0.0, 1.0],
    }
}

/// Nuclei start polarized along +x.
fn initial_nuclear_state(n_nuclei: usize) -> DMatrix<C64> {
    let plus = StateVector::qubit(PI / 2.0, 0.0);
    let psi = StateVector::product(&vec![plus; n_nuclei]);
    psi.projector().0
}

fn effective_series(setup: &SensingSetup, n_samples: usize) -> Result<Vec<f64>> {
    let deltas = detunings(setup)?;
    let n = setup.system.n_spins();
    let axis = effective_axis(setup.protocol.kind);
    let sigma_a = {
        let mut op = embed(Axis::X, 0, n)?.scale(axis[0]);
        op.add_scaled(&embed(Axis::Z, 0, n)?, axis[2]);
        op
    };
    // In the frame rotating each nucleus at its own δ the interaction is static.
    let mut h = Operator::zeros(1 << n);
    for (j, (nuc, d)) in setup.system.nuclei.iter().zip(&deltas).enumerate() {
        let coupling = effective_coupling(&setup.protocol, nuc.g)?;
        h.add_scaled(&(&sigma_a * &embed(Axis::X, j + 1, n)?), coupling);
        h.add_scaled(&embed(Axis::Z, j + 1, n)?, 0.5 * d);
    }
    let u = expm(&(h.0 * C64::new(0.0, -setup.sample_dt)));
    let (prep, read) = probe_states(axis);
    let read = pauli_combination(read)
        .kron(&Operator::identity(1 << (n - 1)))
        .0;
    let prep = prep.projector().0;
    let mut rho_n = initial_nuclear_state(n - 1);
    let mut series = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let rho = &u * prep.kronecker(&rho_n) * u.adjoint();
        series.push((&rho * &read).trace().re);
        rho_n = trace_electron(&rho);
    }
    Ok(series)
}

/// `Σ_a c_a σ_a` coefficients of a 2×2 Hermitian matrix.
fn bloch_components(m: &DMatrix<C64>) -> [f64; 3] {
    [
        m[(0, 1)].re,
        -m[(0, 1)].im,
        0.5 * (m[(0, 0)].re - m[(1, 1)].re),
    ]
}

fn full_drive_series(setup: &SensingSetup, n_samples: usize) -> Result<Vec<f64>> {
    let nominal = resonance_condition(&setup.protocol)?;
    detunings(setup)?;
    let h = SpinHamiltonian::new(&setup.system, &setup.protocol, SimFrame::FirstIp)?;
    let control = SpinHamiltonian::new(
        &SystemParams::electron_only(),
        &setup.protocol,
        SimFrame::FirstIp,
    )?;
    let dt = setup.dt.unwrap_or_else(|| default_dt(&h));
    let per_sample = time_grid(&h, setup.sample_dt, dt)?.0.max(1);
    let step = setup.sample_dt / per_sample as f64;
    let n_total = n_samples * per_sample;
    let quiet = NoiseSample::default();

    // Control frame V(t) of the electron alone, at every sample boundary, and
    // the resonant Fourier component of V†σzV that sets the coupling axis.
    let sz = embed(Axis::Z, 0, 1)?.0;
    let mut v = DMatrix::<C64>::identity(2, 2);
    let mut frames = Vec::with_capacity(n_samples + 1);
    frames.push(v.clone());
    let mut component = [C64::new(0.0, 0.0); 3];
    for k in 0..n_total {
        let t = (k as f64 + 0.5) * step;
        let [cx, cy, cz] = control.electron_field(t, quiet);
        let v_mid = su2_step(0.0, cx, cy, cz, 0.5 * step) * &v;
        let b = bloch_components(&(v_mid.adjoint() * &sz * &v_mid));
        let phase = C64::from_polar(step, -nominal * t);
        for a in 0..3 {
            component[a] += phase * b[a];
        }
        v = su2_step(0.0, cx, cy, cz, step) * v;
        if (k + 1) % per_sample == 0 {
            frames.push(v.clone());
        }
    }
    // Strip the common phase so the component lies along a real axis.
    let chi = 0.5 * component.iter().map(|c| c * c).sum::<C64>().arg();
    let rotated = component.map(|c| (c * C64::from_polar(1.0, -chi)).re);
    let (prep, read) = probe_states(rotated);
    let read_op = pauli_combination(read).0;
    let prep = prep.projector().0;

    let n = setup.system.n_spins();
    let id_n = DMatrix::<C64>::identity(1 << (n - 1), 1 << (n - 1));
    let mut rho_n = initial_nuclear_state(n - 1);
    let mut scratch = Operator::zeros(h.dim());
    let mut series = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let v0 = &frames[s];
        let v1 = &frames[s + 1];
        let e0 = v0 * &prep * v0.adjoint();
        let mut rho = e0.kronecker(&rho_n);
        for k in 0..per_sample {
            let t = (s * per_sample + k) as f64 * step + 0.5 * step;
            let u = h.step(t, quiet, step, &mut scratch).0;
            rho = &u * rho * u.adjoint();
        }
        let read_sim = (v1 * &read_op * v1.adjoint()).kronecker(&id_n);
        series.push((&rho * read_sim).trace().re);
        rho_n = trace_electron(&rho);
    }
    Ok(series)
}

/// Probe time series and its spectrum.
pub fn sense_spectrum(setup: &SensingSetup) -> Result<SensingRecord> {
    let n_samples = validate(setup)?;
    let mut series = match setup.mode {
        SensingMode::Effective => effective_series(setup, n_samples)?,
        SensingMode::FullDrive => full_drive_series(setup, n_samples)?,
    };
    if setup.shot_noise {
        let mut rng = stream_rng(setup.master_seed, 0, MEASUREMENT_STREAM);
        for s in series.iter_mut() {
            let p_up = (0.5 * (1.0 + *s)).clamp(0.0, 1.0);
            *s = if rng.random::<f64>() < p_up {
                1.0
            } else {
                -1.0
            };
        }
    }
    let sample_times: Vec<f64> = (0..n_samples).map(|k| k as f64 * setup.sample_dt).collect();
    let resolution = 1.0 / (n_samples as f64 * setup.sample_dt);
    let spectrum = dft_magnitude(&series)
        .into_iter()
        .enumerate()
        .map(|(k, m)| (k as f64 * resolution, m))
        .collect();
    Ok(SensingRecord {
        sample_times,
        series,
        spectrum,
        resolution,
    })
}

/// `|X_k|/N` for `k = 0..=N/2`.
pub fn dft_magnitude(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut buf: Vec<C64> = series.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm() / n as f64).collect()
}

impl SensingRecord {
    /// `|Σ x_n e^{−2πi f t_n}|/N` at any frequency f (MHz).
    pub fn dtft(&self, f: f64) -> f64 {
        let w = -2.0 * PI * f;
        let sum: C64 = self
            .sample_times
            .iter()
            .zip(&self.series)
            .map(|(t, x)| C64::from_polar(*x, w * t))
            .sum();
        sum.norm() / self.series.len() as f64
    }

    /// Bins that are local maxima above `fraction` of the largest bin,
    /// strongest first.
    pub fn peaks(&self, fraction: f64) -> Vec<f64> {
        self.peaks_in(0.0, f64::INFINITY, fraction)
    }

    /// [`SensingRecord::peaks`] restricted to frequencies in `[lo, hi]`, with
    /// `fraction` relative to the largest bin in that band.
    pub fn peaks_in(&self, lo: f64, hi: f64, fraction: f64) -> Vec<f64> {
        let m: Vec<f64> = self.spectrum.iter().map(|p| p.1).collect();
        let band: Vec<usize> = (0..m.len())
            .filter(|&k| (lo..=hi).contains(&self.spectrum[k].0))
            .collect();
        let top = band.iter().map(|&k| m[k]).fold(0.0, f64::max);
        let mut found: Vec<(f64, f64)> = band
            .into_iter()
            .filter(|&k| {
                let left = if k == 0 {
                    m.get(1).copied().unwrap_or(0.0)
                } else {
                    m[k - 1]
                };
                let right = m.get(k + 1).copied().unwrap_or(0.0);
                m[k] >= left && m[k] > right && m[k] >= fraction * top
            })
            .map(|k| (self.spectrum[k].0, m[k]))
            .collect();
        found.sort_by(|a, b| b.1.total_cmp(&a.1));
        found.into_iter().map(|p| p.0).collect()
    }

    /// Full width at half maximum (MHz) of the peak nearest `f`, from the
    /// continuous transform.
    pub fn peak_fwhm(&self, f: f64) -> Option<f64> {
        let r = self.resolution;
        let fine = r / 200.0;
        let (mut f_peak, mut top) = (f, self.dtft(f));
        let mut x = f - r;
        while x <= f + r {
            let v = self.dtft(x);
            if v > top {
                top = v;
                f_peak = x;
            }
            x += fine;
        }
        let half = 0.5 * top;
        let edge = |dir: f64| -> Option<f64> {
            let mut a = f_peak;
            let mut b = f_peak + dir * fine;
            while self.dtft(b) > half {
                a = b;
                b += dir * fine;
                if (b - f_peak).abs() > 10.0 * r {
                    return None;
                }
            }
            for _ in 0..50 {
                let m = 0.5 * (a + b);
                if self.dtft(m) > half {
                    a = m;
                } else {
                    b = m;
                }
            }
            Some(0.5 * (a + b))
        };
        Some(edge(1.0)? - edge(-1.0)?)
    }
}
