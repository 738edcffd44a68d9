//! Monte-Carlo averaging over noise realizations.
//!
//! Realizations run in parallel; partial sums are reduced in realization
//! order so results do not depend on the worker count.

use rayon::prelude::*;

use super::{evolve_observe, time_grid, Hamiltonian};
use crate::error::Result;
use crate::noise::{NoiseConfig, NoiseStream};
use crate::spin::{Operator, StateVector};

/// Realizations evaluated per parallel batch.
const BATCH: usize = 64;

pub type ObservableFn = dyn Fn(f64, &StateVector) -> f64 + Send + Sync;

pub enum Observable {
    Expectation(Operator),
    Function(Box<ObservableFn>),
}

impl Observable {
    pub fn function(f: impl Fn(f64, &StateVector) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Function(Box::new(f))
    }

    pub fn eval(&self, t: f64, psi: &StateVector) -> f64 {
        match self {
            Observable::Expectation(op) => psi.expectation(op),
            Observable::Function(f) => f(t, psi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `means[o][k]`: observable o at `times[k]`.
    pub means: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub n_realizations: usize,
}

#[allow(clippy::too_many_arguments)]
fn realization<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    mut noise: NoiseStream,
    observables: &[Observable],
    record_every: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut series = vec![Vec::new(); observables.len()];
    evolve_observe(h, psi0, t_final, dt, &mut noise, record_every, |t, psi| {
        for (s, o) in series.iter_mut().zip(observables) {
            s.push(o.eval(t, psi));
        }
    })?;
    Ok(series)
}

/// Averages each observable over `n` noise realizations.
///
/// Realization r draws its noise from streams derived from `(master_seed, r)`.
/// With silent noise a single trajectory is evaluated and reported with zero
/// standard error.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    noise: &NoiseConfig,
    n: usize,
    master_seed: u64,
    observables: &[Observable],
    record_every: usize,
) -> Result<EnsembleResult> {
    noise.validate()?;
    let n = n.max(1);
    let (n_steps, step) = time_grid(h, t_final, dt)?;
    let record_every = record_every.max(1);
    let mut times = vec![0.0];
    times.extend(
        (1..=n_steps)
            .filter(|k| k % record_every == 0 || *k == n_steps)
            .map(|k| k as f64 * step),
    );

    if noise.is_silent() {
        let means = realization(
            h,
            psi0,
            t_final,
            dt,
            NoiseStream::silent(),
            observables,
            record_every,
        )?;
        let zeros = means.iter().map(|m| vec![0.0; m.len()]).collect();
        return Ok(EnsembleResult {
            times,
            means,
            std_errors: zeros,
            n_realizations: n,
        });
    }

    let width = times.len();
    let mut sum = vec![vec![0.0; width]; observables.len()];
    let mut sum_sq = sum.clone();
    for start in (0..n).step_by(BATCH) {
        let end = (start + BATCH).min(n);
        let batch: Vec<Vec<Vec<f64>>> = (start..end)
            .into_par_iter()
            .map(|r| {
                let stream = noise.stream(step, master_seed, r as u64);
                realization(h, psi0, t_final, dt, stream, observables, record_every)
            })
            .collect::<Result<_>>()?;
        for series in &batch {
            for (o, s) in series.iter().enumerate() {
                for (k, v) in s.iter().enumerate() {
                    sum[o][k] += v;
                    sum_sq[o][k] += v * v;
                }
            }
        }
    }
    let nf = n as f64;
    let means: Vec<Vec<f64>> = sum
        .iter()
        .map(|s| s.iter().map(|v| v / nf).collect())
        .collect();
    let std_errors = means
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            m.iter()
                .zip(sq)
                .map(|(mu, s2)| {
                    if n < 2 {
                        0.0
                    } else {
                        ((s2 / nf - mu * mu).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    Ok(EnsembleResult {
        times,
        means,
        std_errors,
        n_realizations: n,
    })
}
