//! Matrix exponential for small dense complex matrices.
//!
//! Scaling and squaring with diagonal Padé approximants of degree 3 to 13,
//! degree chosen from the 1-norm (Higham, SIAM J. Matrix Anal. Appl. 26, 2005).

use nalgebra::DMatrix;

use crate::spin::{Operator, C64};

const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
    (13, 5.371_920_351_148_152),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm_one(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `U`, `V` of the degree-m approximant for m ≤ 9: `r = (V − U)⁻¹(V + U)`.
fn pade_low(a: &DMatrix<C64>, b: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::<C64>::identity(n, n) * real(b[1]);
    let mut even = DMatrix::<C64>::identity(n, n) * real(b[0]);
    let mut pow = DMatrix::<C64>::identity(n, n);
    for k in 1..b.len() / 2 {
        pow = &pow * &a2;
        odd += &pow * real(b[2 * k + 1]);
        even += &pow * real(b[2 * k]);
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let b = &B13;
    let id = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]);
    let u = a
        * (&a6 * inner_u
            + &a6 * real(b[7])
            + &a4 * real(b[5])
            + &a2 * real(b[3])
            + &id * real(b[1]));
    let inner_v = &a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]);
    let v =
        &a6 * inner_v + &a6 * real(b[6]) + &a4 * real(b[4]) + &a2 * real(b[2]) + &id * real(b[0]);
    (u, v)
}

fn solve(u: DMatrix<C64>, v: DMatrix<C64>) -> DMatrix<C64> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular inside the degree bounds")
}

/// `exp(a)` for a square complex matrix.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = norm_one(a);
    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            let (u, v) = match m {
                3 => pade_low(a, &B3),
                5 => pade_low(a, &B5),
                7 => pade_low(a, &B7),
                _ => pade_low(a, &B9),
            };
            return solve(u, v);
        }
    }
    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * real(0.5f64.powi(s));
    let (u, v) = pade13(&scaled);
    let mut r = solve(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `exp(−i·h·dt)` for a 2×2 Hermitian `h`, in closed form.
pub fn exp_hermitian_2x2(h: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    let a0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let az = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let ax = h[(1, 0)].re;
    let ay = h[(1, 0)].im;
    su2_step(a0, ax, ay, az, dt)
}

/// `exp(−i(a0 + ax σx + ay σy + az σz)dt)`.
pub fn su2_step(a0: f64, ax: f64, ay: f64, az: f64, dt: f64) -> DMatrix<C64> {
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let (s, c) = (r * dt).sin_cos();
    // sin(r dt)/r, continuous at r = 0
    let k = if r * dt > 1e-8 {
        s / r
    } else {
        dt * (1.0 - (r * dt).powi(2) / 6.0)
    };
    let phase = C64::from_polar(1.0, -a0 * dt);
    let m00 = C64::new(c, -k * az);
    let m11 = C64::new(c, k * az);
    // −i k (ax σx + ay σy): off-diagonals −i k (ax ∓ i ay)
    let m01 = C64::new(-k * ay, -k * ax);
    let m10 = C64::new(k * ay, -k * ax);
    DMatrix::from_row_slice(2, 2, &[m00 * phase, m01 * phase, m10 * phase, m11 * phase])
}

/// Exact one-step propagator `exp(−i·h·dt)`.
pub fn unitary_step(h: &Operator, dt: f64) -> Operator {
    if h.dim() == 2 {
        return Operator(exp_hermitian_2x2(&h.0, dt));
    }
    Operator(expm(&(&h.0 * C64::new(0.0, -dt))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{embed, Axis};
    use approx::assert_relative_eq;

    fn random_hermitian(n: usize, seed: u64, scale: f64) -> DMatrix<C64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&m + m.adjoint()) * real(0.5 * scale)
    }

    fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_library_exponential_across_degrees() {
        for (i, scale) in [1e-3, 0.05, 0.3, 1.0, 2.5, 8.0, 40.0]
            .into_iter()
            .enumerate()
        {
            for n in [2, 4, 8] {
                let h = random_hermitian(n, 100 + i as u64 * 10 + n as u64, scale);
                let a = &h * C64::new(0.0, -1.0);
                let ours = expm(&a);
                let oracle = a.clone().exp();
                assert!(
                    max_diff(&ours, &oracle) < 1e-11 * (1.0 + scale),
                    "n={n} scale={scale}"
                );
            }
        }
    }

    #[test]
    fn non_hermitian_argument() {
        let a = DMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(0.0), real(0.0)]);
        // exp of a nilpotent matrix is 1 + a
        let e = expm(&a);
        assert_relative_eq!(e[(0, 1)].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(e[(0, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_2x2_matches_pade() {
        for seed in 0..50 {
            let h = random_hermitian(2, seed, 3.0);
            let dt = 0.37;
            let closed = exp_hermitian_2x2(&h, dt);
            let pade = expm(&(&h * C64::new(0.0, -dt)));
            assert!(max_diff(&closed, &pade) < 1e-13);
        }
        let zero = DMatrix::<C64>::zeros(2, 2);
        assert!(max_diff(&exp_hermitian_2x2(&zero, 1.0), &DMatrix::identity(2, 2)) == 0.0);
    }

    #[test]
    fn half_turn_precession() {
        let w = 2.0;
        let h = embed(Axis::Z, 0, 1).unwrap().scale(w / 2.0);
        let u = unitary_step(&h, std::f64::consts::PI / w);
        let plus = crate::spin::StateVector::qubit(std::f64::consts::FRAC_PI_2, 0.0);
        let x = embed(Axis::X, 0, 1).unwrap();
        assert_relative_eq!(u.apply(&plus).expectation(&x), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn steps_are_unitary() {
        for seed in 0..20 {
            let h = Operator(random_hermitian(8, seed, 5.0));
            assert!(unitary_step(&h, 0.9).unitarity_error() < 1e-12);
        }
    }
}
