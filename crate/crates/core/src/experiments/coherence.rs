//! Coherence time of the doubly dressed electron under magnetic and drive noise.
//!
//! The electron starts in an equal superposition of the two doubly dressed
//! states. The signal is its survival in the frame of the noiseless control,
//! `S(t) = |⟨U₀(t)ψ₀|ψ(t)⟩|²`, reported as `2S − 1` so that it falls from 1 to
//! the dephased value 0.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fit::{fit_exponential, ExpFit};
use crate::error::{Error, Result};
use crate::noise::{NoiseConfig, NoiseStream};
use crate::propagator::{
    default_dt, evolve_observe, run_ensemble, Observable, SimFrame, SpinHamiltonian, SystemParams,
};
use crate::protocols::{initial_electron_state, ProtocolParams};
use crate::spin::StateVector;

/// Reduced χ² above which the 1/e crossing is also reported.
pub const CHI2_FALLBACK: f64 = 3.0;
/// Mean signal over the last tenth of the record above which no decay is reported.
pub const UNDECAYED_LEVEL: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSetup {
    pub protocol: ProtocolParams,
    pub noise: NoiseConfig,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Record length (μs).
    pub t_max: f64,
    /// Signal samples over the record.
    pub n_samples: usize,
    pub dt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T2Method {
    ExponentialFit,
    OneOverE,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T2Estimate {
    /// Reported T2 (μs): the fit value, or the 1/e crossing when the fit is poor.
    pub t2: f64,
    pub t2_se: f64,
    pub method: T2Method,
    pub fit: ExpFit,
    pub one_over_e: Option<f64>,
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
    pub signal_err: Vec<f64>,
}

fn sample_index(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|s| s.total_cmp(&t)) {
        Ok(k) => k,
        Err(k) => {
            if k == 0 {
                0
            } else if k == times.len() || (t - times[k - 1]) < (times[k] - t) {
                k - 1
            } else {
                k
            }
        }
    }
}

/// First time a linearly interpolated signal drops below `1/e` of its start.
pub fn one_over_e_crossing(times: &[f64], signal: &[f64]) -> Option<f64> {
    let level = signal.first()? / std::f64::consts::E;
    signal.windows(2).zip(times.windows(2)).find_map(|(s, t)| {
        (s[0] >= level && s[1] < level)
            .then(|| t[0] + (s[0] - level) / (s[0] - s[1]) * (t[1] - t[0]))
    })
}

/// Equal superposition of the protocol's lower dressed state `qubit(θ, φ)`
/// and its orthogonal partner: `qubit(θ + π/2, φ)`.
pub fn dressed_superposition(p: &ProtocolParams) -> Result<StateVector> {
    let low = initial_electron_state(p)?;
    let [a, b] = [low.amplitudes()[0], low.amplitudes()[1]];
    let theta = 2.0 * a.norm().clamp(0.0, 1.0).acos();
    let phi = if b.norm() > 1e-15 {
        b.arg() - a.arg()
    } else {
        0.0
    };
    Ok(StateVector::qubit(theta + std::f64::consts::FRAC_PI_2, phi))
}

/// T2 of the dressed electron alone (no nuclear coupling).
pub fn measure_t2(setup: &CoherenceSetup) -> Result<T2Estimate> {
    if !(setup.t_max > 0.0) || setup.n_samples < 4 {
        return Err(Error::InvalidParameter(
            "coherence needs t_max > 0 and at least 4 samples".into(),
        ));
    }
    let h = SpinHamiltonian::new(
        &SystemParams::electron_only(),
        &setup.protocol,
        SimFrame::FirstIp,
    )?;
    let dt = setup.dt.unwrap_or_else(|| default_dt(&h));
    let n_steps = (setup.t_max / dt).ceil() as usize;
    let record_every = (n_steps / setup.n_samples).max(1);
    let psi0 = dressed_superposition(&setup.protocol)?;

    let mut reference = Vec::new();
    let mut ref_times = Vec::new();
    evolve_observe(
        &h,
        &psi0,
        setup.t_max,
        dt,
        &mut NoiseStream::silent(),
        record_every,
        |t, psi| {
            ref_times.push(t);
            reference.push(psi.clone());
        },
    )?;
    let reference: Arc<(Vec<f64>, Vec<StateVector>)> = Arc::new((ref_times, reference));
    let survival = {
        let r = Arc::clone(&reference);
        Observable::function(move |t, psi| {
            let k = sample_index(&r.0, t);
            2.0 * r.1[k].inner(psi).norm_sqr() - 1.0
        })
    };
    let res = run_ensemble(
        &h,
        &psi0,
        setup.t_max,
        dt,
        &setup.noise,
        setup.n_realizations,
        setup.master_seed,
        &[survival],
        record_every,
    )?;
    let signal = res.means[0].clone();
    let signal_err = res.std_errors[0].clone();
    let tail = (signal.len() / 10).max(1);
    let tail_mean = signal[signal.len() - tail..].iter().sum::<f64>() / tail as f64;
    if tail_mean > UNDECAYED_LEVEL {
        return Err(Error::DecayNotObserved(setup.t_max));
    }
    // The t = 0 point has zero variance; it carries no weight information.
    let fit = fit_exponential(&res.times[1..], &signal[1..], &signal_err[1..])?;
    let one_over_e = one_over_e_crossing(&res.times, &signal);
    let (t2, t2_se, method) = match one_over_e {
        Some(t) if fit.reduced_chi2 > CHI2_FALLBACK => (t, fit.tau_se, T2Method::OneOverE),
        _ => (fit.tau, fit.tau_se, T2Method::ExponentialFit),
    };
    Ok(T2Estimate {
        t2,
        t2_se,
        method,
        fit,
        one_over_e,
        times: res.times,
        signal,
        signal_err,
    })
}
