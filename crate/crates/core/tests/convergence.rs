use std::f64::consts::PI;

use dressed::experiments::{
    locate_resonance, polarize_for, sense_spectrum, PolarizationSetup, SensingMode, SensingSetup,
    ShiftGrid,
};
use dressed::propagator::{default_dt, Nucleus, SystemParams};
use dressed::protocols::{predicted_transfer_time, resonance_condition, ProtocolParams};

fn mhz(f: f64) -> f64 {
    2.0 * PI * f
}

#[test]
fn halving_the_step_converges() {
    let o1 = mhz(3.3);
    let setup = PolarizationSetup::noiseless(ProtocolParams::pm(o1, 0.5 * o1), 0.04 * o1);
    let omega_l = resonance_condition(&setup.protocol).unwrap();
    let t = predicted_transfer_time(&setup.protocol, setup.g).unwrap();
    let dt0 = default_dt(&setup.hamiltonian(omega_l).unwrap());
    let final_p = |dt: f64| {
        let s = PolarizationSetup {
            dt: Some(dt),
            ..setup.clone()
        };
        *polarize_for(&s, omega_l, t).unwrap().p_n.last().unwrap()
    };
    let p: Vec<f64> = [1.0, 0.5, 0.25].iter().map(|k| final_p(k * dt0)).collect();
    let (e1, e2) = ((p[0] - p[1]).abs(), (p[1] - p[2]).abs());
    assert!(e2 < 1e-4, "{p:?}");
    assert!(e2 <= e1 / 3.0 || e1 < 1e-12, "{e1:e} {e2:e}");
}

#[test]
fn refining_the_shift_grid_stays_within_one_step() {
    let o1 = mhz(3.3);
    let setup = PolarizationSetup::noiseless(ProtocolParams::pm_bss(o1, 1.2 * o1), 0.04 * o1);
    let coarse = ShiftGrid {
        lo: -0.6,
        hi: 0.2,
        n_coarse: 33,
        n_fine: 11,
    };
    let fine = ShiftGrid {
        n_coarse: 65,
        n_fine: 21,
        ..coarse
    };
    let a = locate_resonance(&setup, &coarse).unwrap();
    let b = locate_resonance(&setup, &fine).unwrap();
    let step = (coarse.hi - coarse.lo) / (coarse.n_coarse - 1) as f64;
    assert!((a.shift - b.shift).abs() < step, "{} {}", a.shift, b.shift);
    assert!((a.p_n - b.p_n).abs() < 0.01);
}

#[test]
fn full_drive_and_effective_spectra_share_peaks() {
    let p = ProtocolParams::sense_am(mhz(1.5), mhz(0.1), mhz(1.0), mhz(0.1));
    let nominal = resonance_condition(&p).unwrap();
    let setup = |mode| SensingSetup {
        protocol: p,
        system: SystemParams {
            nuclei: vec![Nucleus {
                omega_l: nominal - mhz(0.05),
                g: mhz(0.05),
            }],
        },
        total_time: 100.0,
        sample_dt: 0.1,
        mode,
        shot_noise: false,
        master_seed: 0,
        dt: None,
    };
    let eff = sense_spectrum(&setup(SensingMode::Effective)).unwrap();
    let full = sense_spectrum(&setup(SensingMode::FullDrive)).unwrap();
    // The full drive also carries the nucleus against the off-resonant Fourier
    // components of the control frame, at Ω2 ± δ and above.
    let top = |r: &dressed::experiments::SensingRecord| r.peaks_in(0.0, 0.5, 0.5)[0];
    assert!((top(&eff) - 0.05).abs() <= eff.resolution);
    assert!(
        (top(&full) - top(&eff)).abs() <= eff.resolution,
        "{} {}",
        top(&full),
        top(&eff)
    );
}
