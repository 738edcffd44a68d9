//! Time evolution under driven, noise-perturbed spin Hamiltonians.
//!
//! Each step applies the exact exponential of the Hamiltonian sampled at the
//! step midpoint, `U_k = exp(−i H(t_k + dt/2) dt)`, with noise held constant
//! over the step.

pub mod ensemble;
pub mod expm;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSample, NoiseStream};
use crate::protocols::{waveform, DriveWaveform, ProtocolParams};
use crate::spin::{embed, Axis, Operator, StateVector, MAX_SPINS};

pub use ensemble::{run_ensemble, EnsembleResult, Observable};
pub use expm::{expm, su2_step, unitary_step};

/// Default step: this fraction of the fastest period.
pub const DEFAULT_STEPS_PER_PERIOD: f64 = 40.0;
/// Coarsest accepted step, as a fraction of the fastest period.
pub const MIN_STEPS_PER_PERIOD: f64 = 20.0;
/// Largest tolerated norm error of a propagated state.
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    /// Larmor frequency ωl (rad/μs).
    pub omega_l: f64,
    /// Coupling g of the `g σz Ix` term (rad/μs).
    pub g: f64,
}

/// Nuclear spins coupled to the electron; site j+1 holds `nuclei[j]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub nuclei: Vec<Nucleus>,
}

impl SystemParams {
    pub fn single(omega_l: f64, g: f64) -> Self {
        SystemParams {
            nuclei: vec![Nucleus { omega_l, g }],
        }
    }

    pub fn electron_only() -> Self {
        SystemParams { nuclei: vec![] }
    }

    pub fn n_spins(&self) -> usize {
        1 + self.nuclei.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimFrame {
    Lab,
    /// Rotating with the reference drive's carrier and phase.
    #[default]
    FirstIp,
}

/// Time-dependent Hermitian generator on a fixed space.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    /// Largest angular frequency the dynamics contains (rad/μs).
    fn fastest_frequency(&self) -> f64;

    /// Writes `H(t)` for the given noise values into `out`.
    fn fill(&self, t: f64, noise: NoiseSample, out: &mut Operator);

    /// `exp(−i H(t) dt)`.
    fn step(&self, t: f64, noise: NoiseSample, dt: f64, scratch: &mut Operator) -> Operator {
        self.fill(t, noise, scratch);
        unitary_step(scratch, dt)
    }
}

/// Electron under a protocol's control field, coupled to nuclei by
/// `Σ_j [(ωl_j/2) Iz_j + g_j σz Ix_j]`.
#[derive(Clone, Debug)]
pub struct SpinHamiltonian {
    waveform: DriveWaveform,
    frame: SimFrame,
    omega0: f64,
    sx: Operator,
    sy: Operator,
    sz: Operator,
    static_part: Operator,
    static_bound: f64,
}

impl SpinHamiltonian {
    pub fn new(sys: &SystemParams, p: &ProtocolParams, frame: SimFrame) -> Result<Self> {
        Self::from_waveform(sys, waveform(p)?, frame, p.carrier)
    }

    pub fn from_waveform(
        sys: &SystemParams,
        waveform: DriveWaveform,
        frame: SimFrame,
        omega0: f64,
    ) -> Result<Self> {
        let n = sys.n_spins();
        if n > MAX_SPINS {
            return Err(Error::InvalidParameter(format!(
                "at most {} nuclei are supported, got {}",
                MAX_SPINS - 1,
                sys.nuclei.len()
            )));
        }
        if frame == SimFrame::Lab {
            let max_detuning = waveform
                .channels
                .iter()
                .map(|c| c.carrier_detuning.abs())
                .fold(0.0, f64::max);
            if !(omega0 > max_detuning && omega0.is_finite()) {
                return Err(Error::UnsupportedPairing(format!(
                    "lab frame needs a carrier above every drive detuning (omega0 = {omega0}, detuning = {max_detuning})"
                )));
            }
        }
        let dim = 1 << n;
        let mut static_part = Operator::zeros(dim);
        let mut static_bound = 0.0;
        for (j, nuc) in sys.nuclei.iter().enumerate() {
            static_part.add_scaled(&embed(Axis::Z, j + 1, n)?, 0.5 * nuc.omega_l);
            let zx = &embed(Axis::Z, 0, n)? * &embed(Axis::X, j + 1, n)?;
            static_part.add_scaled(&zx, nuc.g);
            static_bound += 0.5 * nuc.omega_l.abs() + nuc.g.abs();
        }
        Ok(SpinHamiltonian {
            waveform,
            frame,
            omega0,
            sx: embed(Axis::X, 0, n)?,
            sy: embed(Axis::Y, 0, n)?,
            sz: embed(Axis::Z, 0, n)?,
            static_part,
            static_bound,
        })
    }

    pub fn frame(&self) -> SimFrame {
        self.frame
    }

    pub fn waveform(&self) -> &DriveWaveform {
        &self.waveform
    }

    /// `(cx, cy, cz)` of the electron-only part.
    pub fn electron_field(&self, t: f64, noise: NoiseSample) -> [f64; 3] {
        match self.frame {
            SimFrame::FirstIp => self.waveform.rotating_frame_field(t, noise.db, noise.eps),
            SimFrame::Lab => self.waveform.lab_field(t, self.omega0, noise.db, noise.eps),
        }
    }
}

impl Hamiltonian for SpinHamiltonian {
    fn dim(&self) -> usize {
        self.sx.dim()
    }

    fn fastest_frequency(&self) -> f64 {
        let field = match self.frame {
            SimFrame::FirstIp => self.waveform.field_bound(),
            SimFrame::Lab => {
                self.waveform.peak_amplitude() + 0.5 * self.omega0 + self.waveform.z_field.peak()
            }
        };
        // Eigenvalue spread of Σ c_k P_k is at most 2Σ|c_k|.
        let spread = 2.0 * (field + self.static_bound);
        let mut w = spread.max(self.waveform.modulation_bandwidth());
        if self.frame == SimFrame::Lab {
            w = w.max(self.omega0 + self.waveform.modulation_bandwidth());
        }
        w
    }

    fn fill(&self, t: f64, noise: NoiseSample, out: &mut Operator) {
        let [cx, cy, cz] = self.electron_field(t, noise);
        out.copy_from(&self.static_part);
        out.add_scaled(&self.sx, cx);
        out.add_scaled(&self.sy, cy);
        out.add_scaled(&self.sz, cz);
    }

    fn step(&self, t: f64, noise: NoiseSample, dt: f64, scratch: &mut Operator) -> Operator {
        if self.dim() == 2 {
            let [cx, cy, cz] = self.electron_field(t, noise);
            return Operator(su2_step(0.0, cx, cy, cz, dt));
        }
        self.fill(t, noise, scratch);
        unitary_step(scratch, dt)
    }
}

/// `H(t)` for a protocol, frame and noise sample.
pub fn build_hamiltonian(
    sys: &SystemParams,
    p: &ProtocolParams,
    frame: SimFrame,
    noise: NoiseSample,
    t: f64,
) -> Result<Operator> {
    let h = SpinHamiltonian::new(sys, p, frame)?;
    let mut out = Operator::zeros(h.dim());
    h.fill(t, noise, &mut out);
    Ok(out)
}

/// Default step `(1/40)·2π/ω_fastest`.
pub fn default_dt<H: Hamiltonian + ?Sized>(h: &H) -> f64 {
    2.0 * PI / h.fastest_frequency() / DEFAULT_STEPS_PER_PERIOD
}

/// Uniform grid covering `[0, t_final]` with spacing at most `dt`.
///
/// Refuses `dt` coarser than `(1/20)·2π/ω_fastest`.
pub fn time_grid<H: Hamiltonian + ?Sized>(h: &H, t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "t_final must be non-negative, got {t_final}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let omega = h.fastest_frequency();
    let bound = 2.0 * PI / omega / MIN_STEPS_PER_PERIOD;
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::TimeStepTooLarge { dt, bound, omega });
    }
    let n = ((t_final / dt) * (1.0 - 1e-12)).ceil().max(0.0) as usize;
    let step = if n == 0 { 0.0 } else { t_final / n as f64 };
    Ok((n, step))
}

/// States of one realization on the propagation grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub realization_id: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Propagates `psi0` to `t_final`, calling `observe(t, ψ(t))` at t = 0 and
/// after every `record_every` steps (and at the final time).
pub fn evolve_observe<H, F>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    noise: &mut NoiseStream,
    record_every: usize,
    mut observe: F,
) -> Result<StateVector>
where
    H: Hamiltonian + ?Sized,
    F: FnMut(f64, &StateVector),
{
    if psi0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: psi0.dim(),
        });
    }
    let (n, step) = time_grid(h, t_final, dt)?;
    let record_every = record_every.max(1);
    let mut psi = psi0.clone();
    let mut scratch = Operator::zeros(h.dim());
    observe(0.0, &psi);
    for k in 0..n {
        let t = k as f64 * step;
        let u = h.step(t + 0.5 * step, noise.next_sample(), step, &mut scratch);
        psi = u.apply(&psi);
        if (k + 1) % record_every == 0 || k + 1 == n {
            observe((k + 1) as f64 * step, &psi);
        }
    }
    let drift = (psi.norm() - psi0.norm()).abs();
    if drift > NORM_TOLERANCE {
        return Err(Error::NormDrift(drift));
    }
    Ok(psi)
}

/// Noiseless propagation recording every step.
pub fn evolve<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    evolve_observe(
        h,
        psi0,
        t_final,
        dt,
        &mut NoiseStream::silent(),
        1,
        |t, psi| {
            times.push(t);
            states.push(psi.clone());
        },
    )?;
    Ok(Trajectory {
        times,
        states,
        realization_id: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::ProtocolKind;
    use crate::spin::C64;

    struct Static(Operator, f64);

    impl Hamiltonian for Static {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn fastest_frequency(&self) -> f64 {
            self.1
        }
        fn fill(&self, _t: f64, _noise: NoiseSample, out: &mut Operator) {
            out.copy_from(&self.0);
        }
    }

    #[test]
    fn larmor_half_turn() {
        let w = 3.0;
        let h = Static(embed(Axis::Z, 0, 1).unwrap().scale(w / 2.0), w);
        let plus = StateVector::qubit(PI / 2.0, 0.0);
        let tr = evolve(&h, &plus, PI / w, default_dt(&h)).unwrap();
        let x = embed(Axis::X, 0, 1).unwrap();
        assert!((tr.final_state().expectation(&x) + 1.0).abs() < 1e-12);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refuses_coarse_steps() {
        let h = Static(embed(Axis::Z, 0, 1).unwrap(), 2.0);
        let bound = 2.0 * PI / 2.0 / 20.0;
        assert!(matches!(
            evolve(&h, &StateVector::up(), 1.0, bound * 1.01),
            Err(Error::TimeStepTooLarge { .. })
        ));
        assert!(evolve(&h, &StateVector::up(), 1.0, bound).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let h = Static(Operator::identity(4), 1.0);
        assert!(matches!(
            evolve(&h, &StateVector::up(), 1.0, 0.01),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 2
            })
        ));
    }

    #[test]
    fn decoupled_spectrum() {
        let (o1, wl) = (1.3, 0.7);
        let sys = SystemParams::single(wl, 0.0);
        let h = build_hamiltonian(
            &sys,
            &ProtocolParams::pm(o1, 0.0),
            SimFrame::FirstIp,
            NoiseSample::default(),
            0.4,
        )
        .unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h.matrix().clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = [1.0, -1.0]
            .iter()
            .flat_map(|a| [1.0, -1.0].map(|b| a * o1 / 2.0 + b * wl / 2.0))
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let sys = SystemParams::single(2.0, 0.1);
        let noise = NoiseSample { db: 0.3, eps: 0.01 };
        for kind in ProtocolKind::ALL {
            let p = ProtocolParams {
                omega1: Some(1.0),
                omega2: Some(0.8),
                omega0_drive: Some(1.5),
                omega3: Some(0.6),
                delta: Some(2.0),
                omega_s: Some(0.1),
                ..ProtocolParams::empty(kind)
            }
            .with_carrier(100.0);
            for frame in [SimFrame::FirstIp, SimFrame::Lab] {
                for t in [0.0, 0.77, 13.1] {
                    let h = build_hamiltonian(&sys, &p, frame, noise, t).unwrap();
                    assert!(h.hermiticity_error() < 1e-12, "{kind} {frame:?}");
                }
            }
        }
    }

    #[test]
    fn lab_frame_needs_carrier() {
        let p = ProtocolParams::detuned(1.0, 5.0).with_carrier(2.0);
        assert!(matches!(
            SpinHamiltonian::new(&SystemParams::single(1.0, 0.1), &p, SimFrame::Lab),
            Err(Error::UnsupportedPairing(_))
        ));
    }

    #[test]
    fn energy_conserved_for_static_hamiltonian() {
        let sys = SystemParams::single(1.1, 0.2);
        let h = SpinHamiltonian::new(&sys, &ProtocolParams::hh(1.0), SimFrame::FirstIp).unwrap();
        let mut hm = Operator::zeros(4);
        h.fill(0.0, NoiseSample::default(), &mut hm);
        let psi0 = StateVector::from_amplitudes(vec![
            C64::new(0.3, 0.1),
            C64::new(-0.5, 0.0),
            C64::new(0.2, 0.7),
            C64::new(0.0, -0.1),
        ])
        .unwrap();
        let tr = evolve(&h, &psi0, 30.0, default_dt(&h)).unwrap();
        let e0 = psi0.expectation(&hm);
        for s in &tr.states {
            assert!((s.expectation(&hm) - e0).abs() < 1e-10);
        }
    }
}
