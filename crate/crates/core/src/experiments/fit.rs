//! Weighted least-squares fit of `A·exp(−t/τ)` by Levenberg–Marquardt.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RELATIVE_STEP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub tau: f64,
    pub amplitude_se: f64,
    pub tau_se: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

fn chi2(t: &[f64], y: &[f64], w: &[f64], a: f64, tau: f64) -> f64 {
    t.iter()
        .zip(y)
        .zip(w)
        .map(|((t, y), w)| w * (y - a * (-t / tau).exp()).powi(2))
        .sum()
}

/// Normal matrix `JᵀWJ` and gradient `JᵀW r` at `(a, tau)`.
fn normal_equations(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    a: f64,
    tau: f64,
) -> (Matrix2<f64>, Vector2<f64>) {
    let mut jtj = Matrix2::zeros();
    let mut jtr = Vector2::zeros();
    for ((&t, &y), &w) in t.iter().zip(y).zip(w) {
        let e = (-t / tau).exp();
        let j = Vector2::new(e, a * e * t / (tau * tau));
        jtj += w * j * j.transpose();
        jtr += w * (y - a * e) * j;
    }
    (jtj, jtr)
}

/// Log-linear starting guess from the positive samples.
fn initial_guess(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, y)| **y > 0.0)
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (st, sl) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t, b + l));
    let (mt, ml) = (st / n, sl / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| {
        (a + (t - mt) * (l - ml), b + (t - mt).powi(2))
    });
    let slope = num / den;
    if !(slope < 0.0) {
        return None;
    }
    Some(((ml - slope * mt).exp(), -1.0 / slope))
}

/// Fits `y ≈ A·exp(−t/τ)`. Points with `sigma > 0` are weighted by `1/σ²`;
/// if every sigma is zero the fit is unweighted and the covariance is scaled
/// by the reduced χ².
pub fn fit_exponential(t: &[f64], y: &[f64], sigma: &[f64]) -> Result<ExpFit> {
    if t.len() != y.len() || t.len() != sigma.len() || t.len() < 3 {
        return Err(Error::FitFailed("need at least 3 matching samples".into()));
    }
    let weighted = sigma.iter().all(|s| *s > 0.0);
    let w: Vec<f64> = if weighted {
        sigma.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; t.len()]
    };
    let (mut a, mut tau) =
        initial_guess(t, y).ok_or_else(|| Error::FitFailed("signal does not decay".into()))?;
    let mut lambda = 1e-3;
    let mut cost = chi2(t, y, &w, a, tau);
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let (jtj, jtr) = normal_equations(t, y, &w, a, tau);
        let mut accepted = false;
        while lambda < 1e12 {
            let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda;
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (na, ntau) = (a + step[0], tau + step[1]);
            let c = if ntau > 0.0 {
                chi2(t, y, &w, na, ntau)
            } else {
                f64::INFINITY
            };
            if c <= cost {
                let small = (step[0].abs() <= RELATIVE_STEP_TOLERANCE * a.abs().max(1e-300))
                    && (step[1].abs() <= RELATIVE_STEP_TOLERANCE * tau);
                let flat = cost - c <= RELATIVE_STEP_TOLERANCE * cost;
                a = na;
                tau = ntau;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small || flat {
                    return finish(t, y, &w, weighted, a, tau, cost, iterations);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            return finish(t, y, &w, weighted, a, tau, cost, iterations);
        }
    }
    Err(Error::FitFailed(format!(
        "no convergence after {iterations} iterations"
    )))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    weighted: bool,
    a: f64,
    tau: f64,
    cost: f64,
    iterations: usize,
) -> Result<ExpFit> {
    let dof = (t.len() - 2) as f64;
    let reduced_chi2 = cost / dof;
    let (jtj, _) = normal_equations(t, y, w, a, tau);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular normal matrix".into()))?;
    let scale = if weighted { 1.0 } else { reduced_chi2 };
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::FitFailed(format!("non-physical decay time {tau}")));
    }
    Ok(ExpFit {
        amplitude: a,
        tau,
        amplitude_se: (cov[(0, 0)] * scale).sqrt(),
        tau_se: (cov[(1, 1)] * scale).sqrt(),
        reduced_chi2,
        iterations,
    })
}
