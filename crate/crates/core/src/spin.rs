//! Operator and state algebra on the joint space of one electron qubit and a
//! few nuclear qubits.
//!
//! Site 0 is always the electron; nuclei follow in order. Site 0 is the most
//! significant factor of the tensor product, so for two spins the computational
//! basis is `{↑↑, ↑↓, ↓↑, ↓↓}` with `↑` the `σz = +1` state.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_SPINS: usize = 5;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Single-site operator selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

/// Normalization of the ladder operators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinConvention {
    /// `σ± = (σx ± iσy)/2`
    #[default]
    Half,
    /// `σ± = σx ± iσy`
    Full,
}

impl SpinConvention {
    /// Factor `c` in `σ+ + σ- = c·σx`.
    pub fn ladder_sum_factor(self) -> f64 {
        match self {
            SpinConvention::Half => 1.0,
            SpinConvention::Full => 2.0,
        }
    }

    pub fn pauli(self, axis: Axis) -> Operator {
        let scale = match self {
            SpinConvention::Half => 1.0,
            SpinConvention::Full => 2.0,
        };
        let m = match axis {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -I], [I, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
            Axis::Plus => [[ZERO, ONE * scale], [ZERO, ZERO]],
            Axis::Minus => [[ZERO, ZERO], [ONE * scale, ZERO]],
        };
        Operator(DMatrix::from_fn(2, 2, |r, c| m[r][c]))
    }

    /// Tensor-embeds a single-site operator at `site` among `n_spins` qubits.
    pub fn embed(self, axis: Axis, site: usize, n_spins: usize) -> Result<Operator> {
        if n_spins == 0 || n_spins > MAX_SPINS {
            return Err(Error::InvalidParameter(format!(
                "n_spins must be in 1..={MAX_SPINS}, got {n_spins}"
            )));
        }
        if site >= n_spins {
            return Err(Error::SiteOutOfRange { site, n_spins });
        }
        let single = self.pauli(axis);
        let id = Operator::identity(2);
        let mut acc = if site == 0 {
            single.clone()
        } else {
            id.clone()
        };
        for s in 1..n_spins {
            acc = acc.kron(if s == site { &single } else { &id });
        }
        Ok(acc)
    }
}

impl fmt::Display for SpinConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpinConvention::Half => write!(f, "half (sigma_pm = (sigma_x +- i sigma_y)/2)"),
            SpinConvention::Full => write!(f, "full (sigma_pm = sigma_x +- i sigma_y)"),
        }
    }
}

/// Half-normalized embedding, the default convention.
pub fn embed(axis: Axis, site: usize, n_spins: usize) -> Result<Operator> {
    SpinConvention::Half.embed(axis, site, n_spins)
}

/// Dense complex square matrix acting on the joint space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(pub(crate) DMatrix<C64>);

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn from_matrix(m: DMatrix<C64>) -> Self {
        assert!(m.is_square(), "operator must be square");
        Operator(m)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Operator(DMatrix::from_fn(dim, dim, f))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Operator(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator(&self.0 * C64::new(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Operator {
        Operator(&self.0 * s)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// `self · x · self†`
    pub fn conjugate(&self, x: &Operator) -> Operator {
        Operator(&self.0 * &x.0 * self.0.adjoint())
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |H − H†|`
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// `max |U†U − 1|`
    pub fn unitarity_error(&self) -> f64 {
        let p = Operator(self.0.adjoint() * &self.0);
        p.max_abs_diff(&Operator::identity(self.dim()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.dim())
            .map(|c| self.0.column(c).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        StateVector(&self.0 * &psi.0)
    }

    /// Accumulates `s · other` into `self`.
    pub fn add_scaled(&mut self, other: &Operator, s: f64) {
        let s = C64::new(s, 0.0);
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += s * b;
        }
    }

    pub fn copy_from(&mut self, other: &Operator) {
        self.0.copy_from(&other.0);
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

/// Pure state of the joint system.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub(crate) DVector<C64>);

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amps);
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter("state has zero norm".into()));
        }
        Ok(StateVector(v / C64::new(n, 0.0)))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        StateVector(v)
    }

    /// Single-qubit state with Bloch angles `theta` (from +z) and `phi`.
    pub fn qubit(theta: f64, phi: f64) -> Self {
        StateVector(DVector::from_vec(vec![
            C64::new((theta / 2.0).cos(), 0.0),
            C64::from_polar((theta / 2.0).sin(), phi),
        ]))
    }

    pub fn up() -> Self {
        Self::basis(2, 0)
    }

    pub fn down() -> Self {
        Self::basis(2, 1)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn normalize(&mut self) {
        let n = self.0.norm();
        self.0 /= C64::new(n, 0.0);
    }

    pub fn kron(&self, other: &StateVector) -> StateVector {
        StateVector(self.0.kronecker(&other.0))
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn expectation(&self, op: &Operator) -> f64 {
        self.0.dotc(&(&op.0 * &self.0)).re
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.0[index].norm_sqr()
    }

    /// Tensor product of single-qubit states, electron first.
    pub fn product(factors: &[StateVector]) -> StateVector {
        let mut it = factors.iter();
        let first = it.next().expect("at least one factor").clone();
        it.fold(first, |acc, f| acc.kron(f))
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> Operator {
        Operator(&self.0 * self.0.adjoint())
    }
}

/// Fixed basis changes between the bare and dressed electron frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisMap {
    /// `x → z, z → −x, y → y`
    XToZ,
    /// Inverse of [`AxisMap::XToZ`]: `z → x, x → −z, y → y`
    ZToX,
}

impl FromStr for AxisMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.to_ascii_lowercase().as_str() {
            "x->z" | "x→z" | "xtoz" => Ok(AxisMap::XToZ),
            "z->x" | "z→x" | "ztox" => Ok(AxisMap::ZToX),
            _ => Err(Error::UnknownAxisMap(s.to_string())),
        }
    }
}

/// Single-qubit unitary `R` with `R σ R†` implementing the axis map.
pub fn dressed_rotation(map: AxisMap) -> Operator {
    // Rotation about y by ∓π/2: exp(±iπσy/4).
    let sign = match map {
        AxisMap::XToZ => 1.0,
        AxisMap::ZToX => -1.0,
    };
    let c = (std::f64::consts::FRAC_PI_4).cos();
    let s = sign * (std::f64::consts::FRAC_PI_4).sin();
    // exp(i s' σy) = cos + i sin σy, with i σy = [[0, 1], [-1, 0]]
    Operator(DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(s, 0.0),
            C64::new(-s, 0.0),
            C64::new(c, 0.0),
        ],
    ))
}
