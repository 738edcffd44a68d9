//! Nuclear polarization under a protocol and its optimal-time value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::propagator::{
    default_dt, run_ensemble, Hamiltonian, Observable, SimFrame, SpinHamiltonian, SystemParams,
};
use crate::protocols::{initial_electron_state, predicted_transfer_time, ProtocolParams};
use crate::spin::{Operator, StateVector};

/// Samples kept per polarization run when searching for the optimal time.
const TARGET_SAMPLES: usize = 4000;

/// Probability that the nucleus is still `|↑z⟩`, for an electron–nucleus pair.
pub fn polarization(psi: &StateVector) -> Result<f64> {
    if psi.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: psi.dim(),
        });
    }
    Ok(psi.probability(0) + psi.probability(2))
}

/// Same quantity from the reduced density matrix of the nucleus.
pub fn polarization_from_density(psi: &StateVector) -> Result<f64> {
    if psi.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: psi.dim(),
        });
    }
    let rho = psi.projector();
    // Tr_e ρ, element ⟨↑|ρ_N|↑⟩
    Ok((rho.get(0, 0) + rho.get(2, 2)).re)
}

/// Projector onto nucleus `site` being up.
pub fn nucleus_up_projector(site: usize, n_spins: usize) -> Result<Operator> {
    let z = crate::spin::embed(crate::spin::Axis::Z, site, n_spins)?;
    let mut p = Operator::identity(z.dim()).scale(0.5);
    p.add_scaled(&z, 0.5);
    Ok(p)
}

/// Everything needed to run a polarization transfer except ωl.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSetup {
    pub protocol: ProtocolParams,
    /// Electron–nucleus coupling (rad/μs).
    pub g: f64,
    pub frame: SimFrame,
    pub noise: NoiseConfig,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Step override; defaults to 1/40 of the fastest period.
    pub dt: Option<f64>,
    /// Evolution window in units of the predicted full-transfer time.
    pub window_factor: f64,
}

/// Default evolution window in predicted full-transfer times.
pub const DEFAULT_WINDOW_FACTOR: f64 = 3.0;

impl PolarizationSetup {
    pub fn noiseless(protocol: ProtocolParams, g: f64) -> Self {
        PolarizationSetup {
            protocol,
            g,
            frame: SimFrame::FirstIp,
            noise: NoiseConfig::noiseless(),
            n_realizations: 1,
            master_seed: 0,
            dt: None,
            window_factor: DEFAULT_WINDOW_FACTOR,
        }
    }

    pub fn window(&self) -> Result<f64> {
        // g = 0 still needs a finite window: use the g = 1e-3 rad/μs scale.
        let g = if self.g > 0.0 { self.g } else { 1e-3 };
        Ok(self.window_factor * predicted_transfer_time(&self.protocol, g)?)
    }

    pub fn initial_state(&self) -> Result<StateVector> {
        Ok(initial_electron_state(&self.protocol)?.kron(&StateVector::up()))
    }

    pub fn hamiltonian(&self, omega_l: f64) -> Result<SpinHamiltonian> {
        SpinHamiltonian::new(
            &SystemParams::single(omega_l, self.g),
            &self.protocol,
            self.frame,
        )
    }
}

/// P_N(t) of one polarization run and its minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolarizationRun {
    pub omega_l: f64,
    pub times: Vec<f64>,
    pub p_n: Vec<f64>,
    pub p_n_err: Vec<f64>,
    /// Minimum of the (ensemble-mean) P_N over the window.
    pub min_p_n: f64,
    pub min_p_n_err: f64,
    pub t_opt: f64,
}

/// Evolves `|ψ_e⟩|↑z⟩` for `t_final` and records P_N(t).
pub fn polarize_for(
    setup: &PolarizationSetup,
    omega_l: f64,
    t_final: f64,
) -> Result<PolarizationRun> {
    let h = setup.hamiltonian(omega_l)?;
    let dt = setup.dt.unwrap_or_else(|| default_dt(&h));
    let n_steps = (t_final / dt).ceil() as usize;
    let record_every = (n_steps / TARGET_SAMPLES).max(1);
    let obs = [Observable::Expectation(nucleus_up_projector(1, 2)?)];
    let res = run_ensemble(
        &h,
        &setup.initial_state()?,
        t_final,
        dt,
        &setup.noise,
        setup.n_realizations,
        setup.master_seed,
        &obs,
        record_every,
    )?;
    let p_n = res.means.into_iter().next().unwrap_or_default();
    let p_n_err = res.std_errors.into_iter().next().unwrap_or_default();
    let (k, &min_p_n) = p_n
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least the initial sample");
    Ok(PolarizationRun {
        omega_l,
        t_opt: res.times[k],
        min_p_n,
        min_p_n_err: p_n_err[k],
        times: res.times,
        p_n,
        p_n_err,
    })
}

/// Polarization run over the setup's optimal-time window.
pub fn polarize(setup: &PolarizationSetup, omega_l: f64) -> Result<PolarizationRun> {
    polarize_for(setup, omega_l, setup.window()?)
}

/// Time of the first full transfer: the lowest P_N before the curve, having
/// dropped below `low`, recovers above `high`. The two levels keep fast
/// ripples from ending the search early.
pub fn transfer_time(run: &PolarizationRun, low: f64, high: f64) -> Option<f64> {
    let start = run.p_n.iter().position(|p| *p < low)?;
    let end = run.p_n[start..]
        .iter()
        .position(|p| *p > high)
        .map_or(run.p_n.len(), |k| k + start);
    let k = (start..end).min_by(|a, b| run.p_n[*a].total_cmp(&run.p_n[*b]))?;
    Some(run.times[k])
}

/// Exact hamiltonian dimension check used by callers building their own runs.
pub fn check_pair<H: Hamiltonian + ?Sized>(h: &H) -> Result<()> {
    if h.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: h.dim(),
        });
    }
    Ok(())
}
