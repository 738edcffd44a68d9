//! Ornstein–Uhlenbeck noise for the magnetic field and the drive amplitude.
//!
//! Realizations use the exact-update discretization
//! `x(t+dt) = x(t)·e^{−dt/τ} + σ·sqrt(1 − e^{−2dt/τ})·n`, so the grid spacing
//! does not bias the stationary statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream ids used for the two noise channels of a realization.
pub const MAGNETIC_STREAM: u64 = 0;
pub const DRIVE_STREAM: u64 = 1;
/// Stream id for measurement (shot-noise) draws.
pub const MEASUREMENT_STREAM: u64 = 2;
const STREAMS_PER_REALIZATION: u64 = 4;

/// Reference values: dephasing time and noise correlation times.
pub const REFERENCE_T2_STAR_US: f64 = 3.0;
pub const REFERENCE_MAGNETIC_TAU_US: f64 = 25.0;
pub const REFERENCE_DRIVE_TAU_US: f64 = 500.0;
pub const REFERENCE_DRIVE_RELATIVE_ERROR: f64 = 0.01;

/// Magnetic σ (rad/μs) for T2* = 3 μs at τ = 25 μs, as produced by
/// [`calibrate_sigma_for_t2star`] with the default [`FidOptions`].
pub const REFERENCE_MAGNETIC_SIGMA: f64 = 0.242_350_441_059_351_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Correlation time (μs).
    pub tau: f64,
    /// Stationary standard deviation.
    pub sigma: f64,
    /// Stream identifier within a realization.
    pub seed_stream: u64,
}

impl OuParams {
    pub fn new(tau: f64, sigma: f64, seed_stream: u64) -> Result<Self> {
        let p = OuParams {
            tau,
            sigma,
            seed_stream,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zero(seed_stream: u64) -> Self {
        OuParams {
            tau: 1.0,
            sigma: 0.0,
            seed_stream,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "OU correlation time must be positive, got {}",
                self.tau
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "OU sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.sigma == 0.0
    }
}

/// One exact OU update.
pub fn ou_step<R: Rng + ?Sized>(prev: f64, dt: f64, p: &OuParams, rng: &mut R) -> f64 {
    let decay = (-dt / p.tau).exp();
    let n: f64 = rng.sample(StandardNormal);
    prev * decay + n * p.sigma * (1.0 - decay * decay).sqrt()
}

/// Fixed-step OU generator with the update coefficients cached.
#[derive(Clone, Debug)]
pub struct OuSampler {
    decay: f64,
    kick: f64,
    value: f64,
    rng: ChaCha8Rng,
}

impl OuSampler {
    /// Starts from the stationary distribution.
    pub fn stationary(p: &OuParams, dt: f64, mut rng: ChaCha8Rng) -> Self {
        let decay = (-dt / p.tau).exp();
        let n: f64 = rng.sample(StandardNormal);
        OuSampler {
            decay,
            kick: p.sigma * (1.0 - decay * decay).sqrt(),
            value: n * p.sigma,
            rng,
        }
    }

    pub fn from_value(p: &OuParams, dt: f64, x0: f64, rng: ChaCha8Rng) -> Self {
        let decay = (-dt / p.tau).exp();
        OuSampler {
            decay,
            kick: p.sigma * (1.0 - decay * decay).sqrt(),
            value: x0,
            rng,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn advance(&mut self) -> f64 {
        let n: f64 = self.rng.sample(StandardNormal);
        self.value = self.value * self.decay + self.kick * n;
        self.value
    }
}

/// Independent generator for `(master_seed, realization, stream)`.
pub fn stream_rng(master_seed: u64, realization: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(realization * STREAMS_PER_REALIZATION + stream);
    rng
}

/// Noise values held constant over one propagation step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseSample {
    /// Magnetic shift δB (rad/μs), multiplies σz.
    pub db: f64,
    /// Relative drive-amplitude error ε, the drive becomes Ω·(1 + ε).
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub magnetic: OuParams,
    pub drive_relative: OuParams,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::reference()
    }
}

impl NoiseConfig {
    /// T2* = 3 μs magnetic noise (τ = 25 μs) and 1 % drive error (τ = 500 μs).
    pub fn reference() -> Self {
        NoiseConfig {
            magnetic: OuParams {
                tau: REFERENCE_MAGNETIC_TAU_US,
                sigma: REFERENCE_MAGNETIC_SIGMA,
                seed_stream: MAGNETIC_STREAM,
            },
            drive_relative: OuParams {
                tau: REFERENCE_DRIVE_TAU_US,
                sigma: REFERENCE_DRIVE_RELATIVE_ERROR,
                seed_stream: DRIVE_STREAM,
            },
        }
    }

    pub fn noiseless() -> Self {
        NoiseConfig {
            magnetic: OuParams::zero(MAGNETIC_STREAM),
            drive_relative: OuParams::zero(DRIVE_STREAM),
        }
    }

    pub fn is_silent(&self) -> bool {
        self.magnetic.is_silent() && self.drive_relative.is_silent()
    }

    pub fn validate(&self) -> Result<()> {
        self.magnetic.validate()?;
        self.drive_relative.validate()
    }

    /// Per-step noise source for one realization on a grid of spacing `dt`.
    pub fn stream(&self, dt: f64, master_seed: u64, realization: u64) -> NoiseStream {
        let sampler = |p: &OuParams| {
            (!p.is_silent()).then(|| {
                OuSampler::stationary(p, dt, stream_rng(master_seed, realization, p.seed_stream))
            })
        };
        NoiseStream {
            magnetic: sampler(&self.magnetic),
            drive: sampler(&self.drive_relative),
        }
    }
}

/// Yields one [`NoiseSample`] per propagation step.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    magnetic: Option<OuSampler>,
    drive: Option<OuSampler>,
}

impl NoiseStream {
    pub fn silent() -> Self {
        NoiseStream {
            magnetic: None,
            drive: None,
        }
    }

    /// Current sample, then advances both channels.
    pub fn next_sample(&mut self) -> NoiseSample {
        let s = NoiseSample {
            db: self.magnetic.as_ref().map_or(0.0, OuSampler::value),
            eps: self.drive.as_ref().map_or(0.0, OuSampler::value),
        };
        if let Some(m) = self.magnetic.as_mut() {
            m.advance();
        }
        if let Some(d) = self.drive.as_mut() {
            d.advance();
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct FidOptions {
    pub n_realizations: usize,
    /// Grid spacing; defaults to `min(target/200, τ/10)`.
    pub dt: Option<f64>,
    /// Simulated span in units of the target time.
    pub span: f64,
    pub master_seed: u64,
}

impl Default for FidOptions {
    fn default() -> Self {
        FidOptions {
            n_realizations: 2000,
            dt: None,
            span: 4.0,
            master_seed: 0x5EED_F1D0,
        }
    }
}

/// Ensemble free-induction decay of `⟨σx⟩` under `H = δB(t)σz`.
///
/// The accumulated phase is linear in σ, so unit-σ phases are stored once and
/// the decay for any σ is evaluated on the same realizations.
#[derive(Clone, Debug)]
pub struct FidEnsemble {
    pub times: Vec<f64>,
    /// `unit_phase[r][k]`: `2∫z dt` of realization r at `times[k]` for σ = 1.
    unit_phase: Vec<Vec<f64>>,
}

impl FidEnsemble {
    pub fn simulate(
        tau: f64,
        t_max: f64,
        dt: f64,
        n_realizations: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let unit = OuParams::new(tau, 1.0, MAGNETIC_STREAM)?;
        if !(dt > 0.0 && t_max > dt) {
            return Err(Error::InvalidParameter(format!(
                "FID grid needs 0 < dt < t_max (dt = {dt}, t_max = {t_max})"
            )));
        }
        let n_steps = (t_max / dt).ceil() as usize;
        let record_every = (n_steps / 400).max(1);
        let times: Vec<f64> = (0..=n_steps)
            .step_by(record_every)
            .map(|k| k as f64 * dt)
            .collect();
        let unit_phase = (0..n_realizations as u64)
            .into_par_iter()
            .map(|r| {
                let mut s =
                    OuSampler::stationary(&unit, dt, stream_rng(master_seed, r, unit.seed_stream));
                let mut phase = 0.0;
                let mut out = Vec::with_capacity(times.len());
                out.push(0.0);
                for k in 1..=n_steps {
                    phase += 2.0 * s.value() * dt;
                    s.advance();
                    if k % record_every == 0 {
                        out.push(phase);
                    }
                }
                out
            })
            .collect();
        Ok(FidEnsemble { times, unit_phase })
    }

    pub fn n_realizations(&self) -> usize {
        self.unit_phase.len()
    }

    /// Ensemble mean of `⟨σx⟩(t)` for noise amplitude `sigma`.
    pub fn signal(&self, sigma: f64) -> Vec<f64> {
        let n = self.unit_phase.len() as f64;
        let mut acc = vec![0.0; self.times.len()];
        for phases in &self.unit_phase {
            for (a, p) in acc.iter_mut().zip(phases) {
                *a += (sigma * p).cos();
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// First time the ensemble signal drops to 1/e, linearly interpolated.
    pub fn one_over_e_time(&self, sigma: f64) -> Option<f64> {
        first_crossing(&self.times, &self.signal(sigma), (-1.0f64).exp())
    }
}

pub(crate) fn first_crossing(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    values.windows(2).zip(times.windows(2)).find_map(|(v, t)| {
        (v[0] > level && v[1] <= level)
            .then(|| t[0] + (t[1] - t[0]) * (v[0] - level) / (v[0] - v[1]))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub t2star: f64,
    pub iterations: usize,
}

/// Bisection for the magnetic σ that gives an ensemble FID 1/e time of
/// `target_t2star`.
pub fn calibrate_sigma_for_t2star(
    target_t2star: f64,
    tau: f64,
    opts: &FidOptions,
) -> Result<Calibration> {
    // Quasi-static guess; the bracket widens for motional narrowing.
    let guess = 1.0 / (std::f64::consts::SQRT_2 * target_t2star);
    calibrate_in_bracket(target_t2star, tau, guess / 4.0, guess * 64.0, opts)
}

pub fn calibrate_in_bracket(
    target_t2star: f64,
    tau: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    opts: &FidOptions,
) -> Result<Calibration> {
    if !(target_t2star > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "calibration needs positive target and tau (target = {target_t2star}, tau = {tau})"
        )));
    }
    let dt = opts.dt.unwrap_or((target_t2star / 200.0).min(tau / 10.0));
    let ens = FidEnsemble::simulate(
        tau,
        opts.span * target_t2star,
        dt,
        opts.n_realizations,
        opts.master_seed,
    )?;
    // Crossing time decreases with σ; no crossing counts as "too slow".
    let crossing = |s: f64| ens.one_over_e_time(s).unwrap_or(f64::INFINITY);
    let (mut lo, mut hi) = (sigma_lo, sigma_hi);
    if crossing(hi) > target_t2star {
        return Err(Error::Calibration(format!(
            "sigma = {hi} does not decay to 1/e by {target_t2star} us"
        )));
    }
    if crossing(lo) < target_t2star {
        return Err(Error::Calibration(format!(
            "sigma = {lo} already decays before {target_t2star} us"
        )));
    }
    for it in 1..=40 {
        let mid = 0.5 * (lo + hi);
        let t = crossing(mid);
        if (t - target_t2star).abs() <= 1e-6 * target_t2star {
            return Ok(Calibration {
                sigma: mid,
                t2star: t,
                iterations: it,
            });
        }
        if t > target_t2star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "bisection did not converge in 40 iterations (bracket [{lo}, {hi}])"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_is_identity() {
        let p = OuParams::new(25.0, 0.3, 0).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        assert_eq!(ou_step(0.123, 0.0, &p, &mut rng), 0.123);
    }

    #[test]
    fn zero_sigma_is_zero_process() {
        let p = OuParams::new(5.0, 0.0, 0).unwrap();
        let mut s = OuSampler::stationary(&p, 0.1, stream_rng(3, 0, 0));
        assert!((0..1000).all(|_| s.advance() == 0.0));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(OuParams::new(0.0, 1.0, 0).is_err());
        assert!(OuParams::new(1.0, -1.0, 0).is_err());
    }

    #[test]
    fn sample_mean_from_zero() {
        let p = OuParams::new(1.0, 1.0, 0).unwrap();
        let mut rng = stream_rng(11, 0, 0);
        let n = 100_000;
        let mut x = 0.0;
        let mut sum = 0.0;
        for _ in 0..n {
            x = ou_step(x, 0.5, &p, &mut rng);
            sum += x;
        }
        let mean = sum / n as f64;
        // Correlated samples: effective count is reduced by (1+a)/(1−a).
        let a = (-0.5f64).exp();
        let se = (p.sigma * p.sigma / n as f64 * (1.0 + a) / (1.0 - a)).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, 3se {}", 3.0 * se);
    }

    #[test]
    fn stationary_variance_and_autocorrelation() {
        let p = OuParams::new(2.0, 0.7, 0).unwrap();
        let dt = 0.5;
        let mut s = OuSampler::stationary(&p, dt, stream_rng(42, 0, 0));
        let xs: Vec<f64> = (0..1_000_000).map(|_| s.advance()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var / (p.sigma * p.sigma) - 1.0).abs() < 0.03, "var {var}");
        for lag in [1usize, 2, 4] {
            let c = xs
                .iter()
                .zip(&xs[lag..])
                .map(|(a, b)| (a - mean) * (b - mean))
                .sum::<f64>()
                / (n - lag as f64)
                / var;
            let expected = (-(lag as f64) * dt / p.tau).exp();
            assert!(
                (c / expected - 1.0).abs() < 0.05,
                "lag {lag}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn identical_streams_are_bit_identical() {
        let cfg = NoiseConfig::reference();
        let draw = || {
            let mut s = cfg.stream(0.01, 77, 5);
            (0..500).map(|_| s.next_sample()).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
        let mut other = cfg.stream(0.01, 77, 6);
        assert_ne!(
            draw()[10],
            (0..11).map(|_| other.next_sample()).last().unwrap()
        );
    }

    #[test]
    fn zero_noise_never_decays() {
        let ens = FidEnsemble::simulate(25.0, 12.0, 0.015, 50, 1).unwrap();
        assert_eq!(ens.one_over_e_time(0.0), None);
        let opts = FidOptions {
            n_realizations: 50,
            ..FidOptions::default()
        };
        assert!(calibrate_in_bracket(3.0, 25.0, 0.0, 0.0, &opts).is_err());
    }

    #[test]
    fn first_crossing_interpolates() {
        let t = [0.0, 1.0, 2.0];
        let v = [1.0, 0.5, 0.0];
        assert!((first_crossing(&t, &v, 0.25).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(first_crossing(&t, &v, -1.0), None);
    }

    #[test]
    fn reference_sigma_is_the_calibrated_value() {
        let c = calibrate_sigma_for_t2star(
            REFERENCE_T2_STAR_US,
            REFERENCE_MAGNETIC_TAU_US,
            &FidOptions::default(),
        )
        .unwrap();
        assert!(
            (c.sigma / REFERENCE_MAGNETIC_SIGMA - 1.0).abs() < 1e-6,
            "{}",
            c.sigma
        );
    }

    #[test]
    fn quasi_static_limit_is_gaussian() {
        // τ ≫ T2*: ⟨cos 2σXt⟩ = exp(−2σ²t²), so T2* = 1/(√2 σ).
        let opts = FidOptions {
            n_realizations: 4000,
            ..FidOptions::default()
        };
        let c = calibrate_sigma_for_t2star(3.0, 1e5, &opts).unwrap();
        let expected = 1.0 / (std::f64::consts::SQRT_2 * 3.0);
        assert!(
            (c.sigma / expected - 1.0).abs() < 0.03,
            "{} vs {expected}",
            c.sigma
        );
    }

    #[test]
    fn motional_narrowing_limit() {
        // τ ≪ T2*: phase diffusion gives exp(−4σ²τt), so T2* = 1/(4σ²τ).
        let tau = 0.01;
        let c = calibrate_sigma_for_t2star(3.0, tau, &FidOptions::default()).unwrap();
        let t2 = 1.0 / (4.0 * c.sigma * c.sigma * tau);
        assert!((t2 / 3.0 - 1.0).abs() < 0.05, "{t2}");
    }
}
