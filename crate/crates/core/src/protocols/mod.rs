//! Drive protocols: waveforms, resonance conditions, the Bloch–Siegert
//! correction and effective-coupling predictions.
//!
//! All frequencies are angular (rad/μs), times in μs.

pub mod bessel;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{StateVector, C64};

pub use bessel::{bessel_j, j0, j1};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Resonant Hartmann–Hahn drive with amplitude equal to ωl.
    Hh,
    /// Phase-modulated drive, `φ = 2(Ω2/Ω1) sin(Ω1 t)`.
    Pm,
    /// Phase modulation at the Bloch–Siegert corrected frequency Ω̃1.
    PmBss,
    /// Constant drive detuned by δ from the electron gap.
    Detuned,
    /// Detuned drive plus a second drive `Ω2 cos(Ωeff t)` in quadrature.
    DetunedDouble,
    /// Amplitude modulation `Ω0 + Ω1 cos(Ω2 t)`.
    Am,
    /// Amplitude modulation synthesized from a phase-modulated Ω0 drive.
    AmViaPm,
    /// Phase modulation plus the sensing drive `Ωs cos(Ω2 t)`.
    SensePm,
    /// Amplitude modulation plus a spin-locking σz field of amplitude Ωs.
    SenseAm,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 9] = [
        ProtocolKind::Hh,
        ProtocolKind::Pm,
        ProtocolKind::PmBss,
        ProtocolKind::Detuned,
        ProtocolKind::DetunedDouble,
        ProtocolKind::Am,
        ProtocolKind::AmViaPm,
        ProtocolKind::SensePm,
        ProtocolKind::SenseAm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Hh => "HH",
            ProtocolKind::Pm => "PM",
            ProtocolKind::PmBss => "PM_BSS",
            ProtocolKind::Detuned => "Detuned",
            ProtocolKind::DetunedDouble => "DetunedDouble",
            ProtocolKind::Am => "AM",
            ProtocolKind::AmViaPm => "AM_via_PM",
            ProtocolKind::SensePm => "Sense_PM",
            ProtocolKind::SenseAm => "Sense_AM",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.name().replace('_', "").to_ascii_lowercase() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol `{s}`")))
    }
}

/// Protocol parameters; which fields are required depends on `kind`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    /// AM base amplitude Ω0.
    pub omega0_drive: Option<f64>,
    pub omega3: Option<f64>,
    pub delta: Option<f64>,
    pub omega_s: Option<f64>,
    /// Electron gap ω0, used only in the lab frame.
    pub carrier: f64,
}

/// Default electron gap: 2π × 2.87 GHz.
pub const DEFAULT_CARRIER: f64 = 2.0 * PI * 2870.0;

impl ProtocolParams {
    pub fn empty(kind: ProtocolKind) -> Self {
        ProtocolParams {
            kind,
            omega1: None,
            omega2: None,
            omega0_drive: None,
            omega3: None,
            delta: None,
            omega_s: None,
            carrier: DEFAULT_CARRIER,
        }
    }

    pub fn hh(omega: f64) -> Self {
        ProtocolParams {
            omega1: Some(omega),
            ..Self::empty(ProtocolKind::Hh)
        }
    }

    pub fn pm(omega1: f64, omega2: f64) -> Self {
        ProtocolParams {
            omega1: Some(omega1),
            omega2: Some(omega2),
            ..Self::empty(ProtocolKind::Pm)
        }
    }

    pub fn pm_bss(omega1: f64, omega2: f64) -> Self {
        ProtocolParams {
            kind: ProtocolKind::PmBss,
            ..Self::pm(omega1, omega2)
        }
    }

    pub fn detuned(omega1: f64, delta: f64) -> Self {
        ProtocolParams {
            omega1: Some(omega1),
            delta: Some(delta),
            ..Self::empty(ProtocolKind::Detuned)
        }
    }

    pub fn detuned_double(omega1: f64, delta: f64, omega2: f64) -> Self {
        ProtocolParams {
            kind: ProtocolKind::DetunedDouble,
            omega2: Some(omega2),
            ..Self::detuned(omega1, delta)
        }
    }

    pub fn am(omega0: f64, omega1: f64, omega2: f64) -> Self {
        ProtocolParams {
            omega0_drive: Some(omega0),
            omega1: Some(omega1),
            omega2: Some(omega2),
            ..Self::empty(ProtocolKind::Am)
        }
    }

    pub fn am_via_pm(omega0: f64, omega1: f64, omega2: f64, omega3: f64) -> Self {
        ProtocolParams {
            kind: ProtocolKind::AmViaPm,
            omega3: Some(omega3),
            ..Self::am(omega0, omega1, omega2)
        }
    }

    pub fn sense_pm(omega1: f64, omega2: f64, omega_s: f64) -> Self {
        ProtocolParams {
            kind: ProtocolKind::SensePm,
            omega_s: Some(omega_s),
            ..Self::pm(omega1, omega2)
        }
    }

    pub fn sense_am(omega0: f64, omega1: f64, omega2: f64, omega_s: f64) -> Self {
        ProtocolParams {
            kind: ProtocolKind::SenseAm,
            omega_s: Some(omega_s),
            ..Self::am(omega0, omega1, omega2)
        }
    }

    pub fn with_carrier(mut self, omega0: f64) -> Self {
        self.carrier = omega0;
        self
    }

    fn need(&self, value: Option<f64>, name: &'static str) -> Result<f64> {
        let v = value.ok_or(Error::MissingParameter {
            kind: self.kind.name(),
            name,
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite, got {v}"
            )));
        }
        Ok(v)
    }

    fn positive(&self, value: Option<f64>, name: &'static str) -> Result<f64> {
        let v = self.need(value, name)?;
        if v <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
        Ok(v)
    }

    fn non_negative(&self, value: Option<f64>, name: &'static str) -> Result<f64> {
        let v = self.need(value, name)?;
        if v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
        Ok(v)
    }

    pub fn omega1(&self) -> Result<f64> {
        self.positive(self.omega1, "omega1")
    }

    pub fn omega2(&self) -> Result<f64> {
        self.non_negative(self.omega2, "omega2")
    }

    pub fn omega0_drive(&self) -> Result<f64> {
        self.positive(self.omega0_drive, "omega0_drive")
    }

    pub fn omega3(&self) -> Result<f64> {
        self.positive(self.omega3, "omega3")
    }

    pub fn delta(&self) -> Result<f64> {
        self.need(self.delta, "delta")
    }

    pub fn omega_s(&self) -> Result<f64> {
        self.non_negative(self.omega_s, "omega_s")
    }

    /// Checks that every parameter the kind needs is present and in range.
    pub fn validate(&self) -> Result<()> {
        waveform(self).map(|_| ())
    }

    /// The same protocol with all parameters scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let m = |v: Option<f64>| v.map(|x| x * s);
        ProtocolParams {
            kind: self.kind,
            omega1: m(self.omega1),
            omega2: m(self.omega2),
            omega0_drive: m(self.omega0_drive),
            omega3: m(self.omega3),
            delta: m(self.delta),
            omega_s: m(self.omega_s),
            carrier: self.carrier,
        }
    }

    /// Lists `(name, value)` for every parameter that is set.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("omega0_drive", self.omega0_drive),
            ("omega3", self.omega3),
            ("delta", self.delta),
            ("omega_s", self.omega_s),
            ("carrier", Some(self.carrier)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Bloch–Siegert corrected modulation frequency and second-drive amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BssCorrected {
    pub omega1_tilde: f64,
    pub omega2_tilde: f64,
}

/// `Ω̃1 = (Ω1 + sqrt(4Ω1² + 3Ω2²))/3`,
/// `Ω̃2 = (Ω2/2)(1 + (Ω1 + Ω̃1)/sqrt(Ω2² + (Ω1 + Ω̃1)²))`.
pub fn bss_correct(omega1: f64, omega2: f64) -> BssCorrected {
    if omega2 == 0.0 {
        return BssCorrected {
            omega1_tilde: omega1,
            omega2_tilde: 0.0,
        };
    }
    let o1t = (omega1 + (4.0 * omega1 * omega1 + 3.0 * omega2 * omega2).sqrt()) / 3.0;
    let s = omega1 + o1t;
    let o2t = 0.5 * omega2 * (1.0 + s / (omega2 * omega2 + s * s).sqrt());
    BssCorrected {
        omega1_tilde: o1t,
        omega2_tilde: o2t,
    }
}

/// Drive amplitude envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// `base + depth·cos(freq·t)`
    Cosine {
        base: f64,
        depth: f64,
        freq: f64,
    },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant(a) => a,
            Envelope::Cosine { base, depth, freq } => base + depth * (freq * t).cos(),
        }
    }

    /// `max_t |value(t)|`
    pub fn peak(&self) -> f64 {
        match *self {
            Envelope::Constant(a) => a.abs(),
            Envelope::Cosine { base, depth, .. } => base.abs() + depth.abs(),
        }
    }

    /// Time average of `value(t)²`.
    pub fn mean_square(&self) -> f64 {
        match *self {
            Envelope::Constant(a) => a * a,
            Envelope::Cosine { base, depth, .. } => base * base + 0.5 * depth * depth,
        }
    }

    fn frequency(&self) -> f64 {
        match *self {
            Envelope::Constant(_) => 0.0,
            Envelope::Cosine { freq, .. } => freq.abs(),
        }
    }
}

/// Drive phase `φ(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Zero,
    /// `depth·sin(freq·t)`
    Sine {
        depth: f64,
        freq: f64,
    },
    /// `2[(Ω1/Ω0) sin Ω0t + Ω2/(Ω0² − Ω3²)(Ω0 cos Ω3t sin Ω0t − Ω3 cos Ω0t sin Ω3t)]`
    AmSynthesis {
        o0: f64,
        o1: f64,
        o2: f64,
        o3: f64,
    },
}

impl Phase {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Phase::Zero => 0.0,
            Phase::Sine { depth, freq } => depth * (freq * t).sin(),
            Phase::AmSynthesis { o0, o1, o2, o3 } => {
                let (s0, c0) = (o0 * t).sin_cos();
                let (s3, c3) = (o3 * t).sin_cos();
                2.0 * (o1 / o0 * s0 + o2 / (o0 * o0 - o3 * o3) * (o0 * c3 * s0 - o3 * c0 * s3))
            }
        }
    }

    /// `dφ/dt`
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Phase::Zero => 0.0,
            Phase::Sine { depth, freq } => depth * freq * (freq * t).cos(),
            Phase::AmSynthesis { o0, o1, o2, o3 } => {
                2.0 * (o1 + o2 * (o3 * t).cos()) * (o0 * t).cos()
            }
        }
    }

    /// `max_t |dφ/dt|`
    pub fn max_rate(&self) -> f64 {
        match *self {
            Phase::Zero => 0.0,
            Phase::Sine { depth, freq } => (depth * freq).abs(),
            Phase::AmSynthesis { o1, o2, .. } => 2.0 * (o1.abs() + o2.abs()),
        }
    }

    fn frequencies(&self) -> [f64; 2] {
        match *self {
            Phase::Zero => [0.0, 0.0],
            Phase::Sine { freq, .. } => [freq.abs(), 0.0],
            Phase::AmSynthesis { o0, o3, .. } => [o0.abs() + o3.abs(), 0.0],
        }
    }
}

/// One transverse drive `A(t)·cos((ω0 − Δ)t + φ(t) + φc)·σx` in the lab frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveChannel {
    pub amplitude: Envelope,
    pub phase: Phase,
    /// Δ: the carrier runs at `ω0 − Δ`.
    pub carrier_detuning: f64,
    /// φc
    pub carrier_phase: f64,
}

impl DriveChannel {
    fn simple(amplitude: Envelope, phase: Phase, carrier_detuning: f64) -> Self {
        DriveChannel {
            amplitude,
            phase,
            carrier_detuning,
            carrier_phase: 0.0,
        }
    }

    /// Phase of the carrier relative to `ω0 t`.
    fn offset_phase(&self, t: f64) -> f64 {
        -self.carrier_detuning * t + self.phase.value(t) + self.carrier_phase
    }
}

/// Longitudinal control field `f(t)·σz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZField {
    None,
    /// `amp·cos(freq·t + index·sin(mod_freq·t))`
    Modulated {
        amp: f64,
        freq: f64,
        index: f64,
        mod_freq: f64,
    },
}

impl ZField {
    pub fn peak(&self) -> f64 {
        match *self {
            ZField::None => 0.0,
            ZField::Modulated { amp, .. } => amp.abs(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ZField::None => 0.0,
            ZField::Modulated {
                amp,
                freq,
                index,
                mod_freq,
            } => amp * (freq * t + index * (mod_freq * t).sin()).cos(),
        }
    }
}

/// Complete control field of a protocol. Channel 0 defines the rotating frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveWaveform {
    pub channels: Vec<DriveChannel>,
    pub z_field: ZField,
}

impl DriveWaveform {
    /// Total transverse Rabi amplitude `Σ_k A_k(t)`.
    pub fn amplitude(&self, t: f64) -> f64 {
        self.channels.iter().map(|c| c.amplitude.value(t)).sum()
    }

    /// Phase of the reference channel.
    pub fn phase(&self, t: f64) -> f64 {
        self.channels[0].phase.value(t)
    }

    pub fn carrier_detuning(&self) -> f64 {
        self.channels[0].carrier_detuning
    }

    /// Upper bound on `|Σ_k A_k(t)|`, attained by every protocol here.
    pub fn peak_amplitude(&self) -> f64 {
        self.channels.iter().map(|c| c.amplitude.peak()).sum()
    }

    /// Fails if `|Ω(t)|` exceeds `cap` on `n` equally spaced times in `[0, t_max]`.
    pub fn check_power_cap(&self, cap: f64, t_max: f64, n: usize) -> Result<()> {
        for i in 0..n {
            let t = t_max * i as f64 / (n.max(2) - 1) as f64;
            let a = self.amplitude(t).abs();
            if a > cap * (1.0 + 1e-12) {
                return Err(Error::PowerCap {
                    amplitude: a,
                    cap,
                    t,
                });
            }
        }
        Ok(())
    }

    /// Bound on `|cx| + |cy| + |cz|` of the rotating-frame electron field.
    pub fn field_bound(&self) -> f64 {
        let reference = self.channels[0];
        0.5 * self.peak_amplitude()
            + 0.5 * (reference.carrier_detuning.abs() + reference.phase.max_rate())
            + self.z_field.peak()
    }

    /// Largest modulation frequency present in the first-IP field.
    pub fn modulation_bandwidth(&self) -> f64 {
        let reference = self.channels[0];
        let mut w: f64 = 0.0;
        for c in &self.channels {
            w = w.max(c.amplitude.frequency());
            for f in c.phase.frequencies() {
                w = w.max(f);
            }
            w = w.max((c.carrier_detuning - reference.carrier_detuning).abs());
        }
        if let ZField::Modulated {
            freq,
            index,
            mod_freq,
            ..
        } = self.z_field
        {
            w = w.max(freq.abs() + (index * mod_freq).abs());
        }
        w
    }

    /// Electron field `(cx, cy, cz)` in the frame rotating with channel 0:
    /// `H_e = cx σx + cy σy + cz σz`.
    ///
    /// `db` adds to the σz coefficient; `eps` scales every drive amplitude by `1 + eps`.
    pub fn rotating_frame_field(&self, t: f64, db: f64, eps: f64) -> [f64; 3] {
        let reference = &self.channels[0];
        let theta_ref = reference.offset_phase(t);
        let cz = 0.5 * (reference.carrier_detuning - reference.phase.rate(t))
            + self.z_field.value(t)
            + db;
        let (mut cx, mut cy) = (0.0, 0.0);
        for c in &self.channels {
            let half = 0.5 * c.amplitude.value(t) * (1.0 + eps);
            let psi = c.offset_phase(t) - theta_ref;
            let (s, co) = psi.sin_cos();
            cx += half * co;
            cy += half * s;
        }
        [cx, cy, cz]
    }

    /// Electron field in the lab frame for gap `omega0`: `(cx, 0, cz)`.
    pub fn lab_field(&self, t: f64, omega0: f64, db: f64, eps: f64) -> [f64; 3] {
        let cx = self
            .channels
            .iter()
            .map(|c| c.amplitude.value(t) * (1.0 + eps) * (omega0 * t + c.offset_phase(t)).cos())
            .sum();
        [cx, 0.0, 0.5 * omega0 + db + self.z_field.value(t)]
    }
}

/// Builds the control field of a protocol.
pub fn waveform(p: &ProtocolParams) -> Result<DriveWaveform> {
    use ProtocolKind::*;
    let single = |ch: DriveChannel| DriveWaveform {
        channels: vec![ch],
        z_field: ZField::None,
    };
    match p.kind {
        Hh => Ok(single(DriveChannel::simple(
            Envelope::Constant(p.omega1()?),
            Phase::Zero,
            0.0,
        ))),
        Pm | PmBss | SensePm => {
            let (o1, o2) = (p.omega1()?, p.omega2()?);
            let freq = if p.kind == PmBss {
                bss_correct(o1, o2).omega1_tilde
            } else {
                o1
            };
            let amplitude = if p.kind == SensePm {
                Envelope::Cosine {
                    base: o1,
                    depth: p.omega_s()?,
                    freq: o2,
                }
            } else {
                Envelope::Constant(o1)
            };
            let phase = if o2 == 0.0 {
                Phase::Zero
            } else {
                Phase::Sine {
                    depth: 2.0 * o2 / freq,
                    freq,
                }
            };
            Ok(single(DriveChannel::simple(amplitude, phase, 0.0)))
        }
        Detuned => Ok(single(DriveChannel::simple(
            Envelope::Constant(p.omega1()?),
            Phase::Zero,
            p.delta()?,
        ))),
        DetunedDouble => {
            let (o1, delta, o2) = (p.omega1()?, p.delta()?, p.omega2()?);
            let eff = o1.hypot(delta);
            Ok(DriveWaveform {
                channels: vec![
                    DriveChannel::simple(Envelope::Constant(o1), Phase::Zero, delta),
                    DriveChannel {
                        amplitude: Envelope::Cosine {
                            base: 0.0,
                            depth: o2,
                            freq: eff,
                        },
                        phase: Phase::Zero,
                        carrier_detuning: delta,
                        carrier_phase: FRAC_PI_2,
                    },
                ],
                z_field: ZField::None,
            })
        }
        Am | SenseAm => {
            let (o0, o1, o2) = (
                p.omega0_drive()?,
                p.non_negative(p.omega1, "omega1")?,
                p.omega2()?,
            );
            let mut w = single(DriveChannel::simple(
                Envelope::Cosine {
                    base: o0,
                    depth: o1,
                    freq: o2,
                },
                Phase::Zero,
                0.0,
            ));
            if p.kind == SenseAm {
                if o2 == 0.0 {
                    return Err(Error::InvalidParameter("Sense_AM needs omega2 > 0".into()));
                }
                w.z_field = ZField::Modulated {
                    amp: -p.omega_s()?,
                    freq: o0,
                    index: o1 / o2,
                    mod_freq: o2,
                };
            }
            Ok(w)
        }
        AmViaPm => {
            let o0 = p.omega0_drive()?;
            let o1 = p.non_negative(p.omega1, "omega1")?;
            let o2 = p.omega2()?;
            let o3 = p.omega3()?;
            if ((o0 - o3) / o0).abs() < 1e-9 {
                return Err(Error::DegenerateModulation(o0));
            }
            Ok(single(DriveChannel::simple(
                Envelope::Constant(o0),
                Phase::AmSynthesis { o0, o1, o2, o3 },
                0.0,
            )))
        }
    }
}

/// Nominal resonance Larmor frequency of a protocol.
pub fn resonance_condition(p: &ProtocolParams) -> Result<f64> {
    use ProtocolKind::*;
    Ok(match p.kind {
        Hh => p.omega1()?,
        Pm | SensePm => p.omega1()? + p.omega2()?,
        PmBss => {
            let b = bss_correct(p.omega1()?, p.omega2()?);
            b.omega1_tilde + b.omega2_tilde
        }
        Detuned => p.omega1()?.hypot(p.delta()?),
        DetunedDouble => p.omega1()?.hypot(p.delta()?) + 0.5 * p.omega2()?,
        Am | SenseAm => p.omega0_drive()? + p.omega2()?,
        AmViaPm => p.omega0_drive()? + p.non_negative(p.omega1, "omega1")? + p.omega3()?,
    })
}

/// Flip-flop coupling at resonance, in the half-normalized convention.
pub fn effective_coupling(p: &ProtocolParams, g: f64) -> Result<f64> {
    use ProtocolKind::*;
    Ok(match p.kind {
        Hh => g,
        Pm | PmBss => g / 2.0,
        Detuned => g * p.omega1()?.atan2(p.delta()?).sin(),
        DetunedDouble => 0.5 * g * p.omega1()?.atan2(p.delta()?).sin(),
        Am | SenseAm => g * j1(p.non_negative(p.omega1, "omega1")? / p.omega2()?),
        AmViaPm => 0.5 * g * j1(p.omega2()? / p.omega3()?),
        SensePm => g / 4.0,
    })
}

/// Predicted time to full population transfer, `π/(2·g_eff)`.
pub fn predicted_transfer_time(p: &ProtocolParams, g: f64) -> Result<f64> {
    let ge = effective_coupling(p, g)?;
    if ge <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "effective coupling must be positive, got {ge}"
        )));
    }
    Ok(PI / (2.0 * ge))
}

/// Electron state at t = 0: the lower-energy branch of the protocol's
/// (multiply) dressed basis, as seen in the rotating frame.
pub fn initial_electron_state(p: &ProtocolParams) -> Result<StateVector> {
    use ProtocolKind::*;
    let minus_x = StateVector::qubit(FRAC_PI_2, PI);
    Ok(match p.kind {
        Hh | Am | SenseAm => minus_x,
        Pm | SensePm | AmViaPm => StateVector::up(),
        PmBss => {
            let (o1, o2) = (p.omega1()?, p.omega2()?);
            let tilt = o2.atan2(o1 + bss_correct(o1, o2).omega1_tilde);
            StateVector::qubit(tilt, 0.0)
        }
        Detuned => {
            // Lower eigenstate of δ/2 σz + Ω1/2 σx: Bloch vector −(sinθ, 0, cosθ).
            let theta = p.omega1()?.atan2(p.delta()?);
            StateVector::qubit(PI - theta, PI)
        }
        DetunedDouble => {
            p.validate()?;
            StateVector::from_amplitudes(vec![
                C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2),
            ])?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bss_reference_values() {
        let b = bss_correct(1.0, 1.0);
        assert!((b.omega1_tilde - (1.0 + 7f64.sqrt()) / 3.0).abs() < 1e-15);
        assert!((b.omega1_tilde - 1.21525).abs() < 5e-6);
        // On resonance sqrt(Ω2² + (Ω1 + Ω̃1)²) = 2Ω̃1.
        let via_identity = 0.5 * (1.0 + (1.0 + b.omega1_tilde) / (2.0 * b.omega1_tilde));
        assert!((b.omega2_tilde - via_identity).abs() < 1e-15);
        assert!((b.omega2_tilde - 0.95565).abs() < 1e-4);
        assert_eq!(
            bss_correct(2.5, 0.0),
            BssCorrected {
                omega1_tilde: 2.5,
                omega2_tilde: 0.0
            }
        );
    }

    #[test]
    fn pm_without_modulation_is_plain_drive() {
        let w = waveform(&ProtocolParams::pm(1.3, 0.0)).unwrap();
        for t in [0.0, 0.4, 7.0] {
            assert_eq!(w.amplitude(t), 1.3);
            assert_eq!(w.phase(t), 0.0);
            assert_eq!(w.rotating_frame_field(t, 0.0, 0.0), [0.65, 0.0, 0.0]);
        }
    }

    #[test]
    fn pm_frame_term_vanishes_at_quarter_period() {
        let o1 = 2.0;
        let w = waveform(&ProtocolParams::pm(o1, 1.0)).unwrap();
        let [_, _, cz] = w.rotating_frame_field(PI / (2.0 * o1), 0.0, 0.0);
        assert!(cz.abs() < 1e-15);
        let [_, _, cz0] = w.rotating_frame_field(0.0, 0.0, 0.0);
        assert_eq!(cz0, -1.0);
    }

    #[test]
    fn am_amplitude_at_origin() {
        let mhz = 2.0 * PI;
        let w = waveform(&ProtocolParams::am(1.5 * mhz, 0.1 * mhz, 1.0 * mhz)).unwrap();
        assert!((w.amplitude(0.0) - 1.6 * mhz).abs() < 1e-12);
    }

    #[test]
    fn am_synthesis_phase_rate() {
        let (o0, o1, o2, o3) = (1.0, 0.3, 0.2, 0.45);
        let ph = Phase::AmSynthesis { o0, o1, o2, o3 };
        // central difference against the analytic rate
        for t in [0.0, 0.37, 2.9, 11.0] {
            let h = 1e-5;
            let fd = (ph.value(t + h) - ph.value(t - h)) / (2.0 * h);
            assert!((fd - ph.rate(t)).abs() < 1e-8);
        }
        let w = waveform(&ProtocolParams::am_via_pm(o0, o1, o2, o3)).unwrap();
        let [cx, cy, cz] = w.rotating_frame_field(0.0, 0.0, 0.0);
        assert_eq!((cx, cy), (0.5 * o0, 0.0));
        assert!((cz + (o1 + o2)).abs() < 1e-15);
    }

    #[test]
    fn am_via_pm_degenerate() {
        assert!(matches!(
            waveform(&ProtocolParams::am_via_pm(1.0, 0.1, 0.1, 1.0)),
            Err(Error::DegenerateModulation(_))
        ));
    }

    #[test]
    fn missing_parameter_is_named() {
        let mut p = ProtocolParams::am(1.0, 0.1, 1.0);
        p.omega2 = None;
        match waveform(&p) {
            Err(Error::MissingParameter { kind, name }) => {
                assert_eq!((kind, name), ("AM", "omega2"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detuned_double_second_drive_is_along_y() {
        let (o1, delta, o2) = (1.0, 3.0, 0.4);
        let w = waveform(&ProtocolParams::detuned_double(o1, delta, o2)).unwrap();
        let t = 0.0;
        let [cx, cy, cz] = w.rotating_frame_field(t, 0.0, 0.0);
        assert!((cx - 0.5 * o1).abs() < 1e-15);
        assert!((cy - 0.5 * o2).abs() < 1e-15);
        assert!((cz - 0.5 * delta).abs() < 1e-15);
    }

    #[test]
    fn resonance_conditions() {
        let x = 1.7;
        assert!((resonance_condition(&ProtocolParams::pm(x, x)).unwrap() - 2.0 * x).abs() < 1e-15);
        let d = resonance_condition(&ProtocolParams::detuned(1.0, 10.0)).unwrap();
        assert!((d - 101f64.sqrt()).abs() < 1e-14);
        let a = resonance_condition(&ProtocolParams::am(1.0, 1.0, 9.0)).unwrap();
        assert_eq!(a, 10.0);
    }

    #[test]
    fn effective_couplings() {
        let g = 1.0;
        let am = effective_coupling(&ProtocolParams::am(1.0, 0.1, 1.0), g).unwrap();
        assert!((am - 0.049_937_526).abs() < 1e-8);
        assert!((am / 0.05 - 1.0).abs() < 2e-3);
        let det = effective_coupling(&ProtocolParams::detuned(1.0, 10.0), g).unwrap();
        assert!((det - 1.0 / 101f64.sqrt()).abs() < 1e-15);
        assert!((det / 0.1 - 1.0).abs() < 6e-3);
        assert_eq!(effective_coupling(&ProtocolParams::hh(2.0), g).unwrap(), g);
        assert_eq!(
            effective_coupling(&ProtocolParams::pm(2.0, 1.0), g).unwrap(),
            g / 2.0
        );
        assert_eq!(
            effective_coupling(&ProtocolParams::sense_pm(2.0, 1.0, 0.1), g).unwrap(),
            g / 4.0
        );
    }

    #[test]
    fn detuned_initial_state_is_lower_eigenstate() {
        let p = ProtocolParams::detuned(1.0, 2.5);
        let psi = initial_electron_state(&p).unwrap();
        let h = crate::spin::Operator::from_fn(2, |r, c| match (r, c) {
            (0, 0) => C64::new(1.25, 0.0),
            (1, 1) => C64::new(-1.25, 0.0),
            _ => C64::new(0.5, 0.0),
        });
        let e = psi.expectation(&h);
        assert!((e + 0.5 * 1f64.hypot(2.5)).abs() < 1e-14);
    }

    #[test]
    fn protocol_names_parse() {
        for k in ProtocolKind::ALL {
            assert_eq!(k.name().parse::<ProtocolKind>().unwrap(), k);
        }
        assert_eq!(
            "pm-bss".parse::<ProtocolKind>().unwrap(),
            ProtocolKind::PmBss
        );
        assert!("xyz".parse::<ProtocolKind>().is_err());
    }
}
