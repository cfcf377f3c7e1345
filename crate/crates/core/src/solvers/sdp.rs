//! `min Tr(K X)` subject to `diag(X) = 1`, `X ⪰ 0`.
//!
//! Alternating-direction augmented Lagrangian iteration on the dual
//! `max 1ᵀy` s.t. `C - Diag(y) = S ⪰ 0`, working on `C = K / ‖K‖_F`. Each
//! iteration performs one Hermitian eigendecomposition to split
//! `V = C - Diag(y) - μX` into its positive part `S` and negative part
//! `-μX`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::eigen::hermitian_eigen;
use crate::error::{Error, Result};

const OVER_RELAXATION: f64 = 1.6;
const MU_MIN: f64 = 1e-4;
const MU_MAX: f64 = 1e4;
const MU_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 5000 }
    }
}

impl SdpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("SDP tolerance must be positive and the iteration cap at least 1"));
        }
        Ok(())
    }
}

/// Iterate state that can seed a related solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpWarmStart {
    pub x: DMatrix<Complex64>,
    pub s: DMatrix<Complex64>,
    pub y: DVector<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Feasible primal matrix: exact unit diagonal, PSD.
    pub x: DMatrix<Complex64>,
    /// `Tr(K X)` in the units of the input matrix.
    pub objective: f64,
    /// `‖diag(X) - 1‖₂` of the raw iterate, before the final projection.
    pub primal_residual: f64,
    /// `‖C - Diag(y) - S‖_F` relative to the normalized cost.
    pub dual_residual: f64,
    /// `|Tr(S X)|` on the normalized cost.
    pub complementarity: f64,
    /// Second-largest over largest eigenvalue of `X`.
    pub rank1_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual multipliers of the unit-diagonal constraints, in input units.
    pub dual_y: Vec<f64>,
    pub warm: SdpWarmStart,
}

/// Solves the unit-diagonal SDP from a cold start.
pub fn solve_unit_diag_sdp(k: &DMatrix<Complex64>, options: &SdpOptions) -> SdpSolution {
    solve_unit_diag_sdp_warm(k, options, None)
}

fn real_diag(m: &DMatrix<Complex64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), (0..m.nrows()).map(|i| m[(i, i)].re))
}

fn inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    // Re Tr(A B) for Hermitian A, B.
    a.iter().zip(b.transpose().iter()).map(|(x, y)| (x * y).re).sum()
}

fn with_diag_shift(c: &DMatrix<Complex64>, y: &DVector<f64>) -> DMatrix<Complex64> {
    let mut m = c.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= y[i];
    }
    m
}

/// Splits a Hermitian matrix into positive and negative semidefinite parts.
fn psd_split(v: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let eig = hermitian_eigen(v);
    let n = v.nrows();
    let mut pos = DMatrix::zeros(n, n);
    let mut neg = DMatrix::zeros(n, n);
    for (i, &lambda) in eig.values.iter().enumerate() {
        let u = eig.vectors.column(i);
        let outer = u * u.adjoint();
        if lambda > 0.0 {
            pos += outer * Complex64::new(lambda, 0.0);
        } else if lambda < 0.0 {
            neg += outer * Complex64::new(lambda, 0.0);
        }
    }
    (hermitize(pos), hermitize(neg))
}

fn hermitize(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Nearest unit-diagonal PSD matrix in the congruence sense: project onto
/// the PSD cone, then rescale rows and columns by `diag^(-1/2)`.
fn polish(x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = x.nrows();
    let (pos, _) = psd_split(x);
    let d: Vec<f64> = (0..n).map(|i| pos[(i, i)].re).collect();
    if d.iter().any(|v| !(*v > 1e-300)) {
        return DMatrix::identity(n, n);
    }
    let mut out = DMatrix::from_fn(n, n, |i, j| pos[(i, j)] / (d[i] * d[j]).sqrt());
    for i in 0..n {
        out[(i, i)] = Complex64::new(1.0, 0.0);
    }
    hermitize(out)
}

fn rank1_ratio(x: &DMatrix<Complex64>) -> f64 {
    let values = hermitian_eigen(x).values;
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let top = values[n - 1];
    if top <= 0.0 {
        return 1.0;
    }
    values[n - 2].max(0.0) / top
}

/// Solves the unit-diagonal SDP, optionally continuing from a previous
/// iterate of a problem with the same dimension.
///
/// Panics if `k` is not Hermitian or is empty.
pub fn solve_unit_diag_sdp_warm(
    k: &DMatrix<Complex64>,
    options: &SdpOptions,
    warm: Option<&SdpWarmStart>,
) -> SdpSolution {
    let m = k.nrows();
    assert!(m >= 1 && k.is_square(), "SDP needs a non-empty square cost");
    let scale = k.norm();
    let identity = DMatrix::<Complex64>::identity(m, m);
    if m == 1 || scale == 0.0 {
        let x = identity.clone();
        return SdpSolution {
            objective: inner(k, &x),
            primal_residual: 0.0,
            dual_residual: 0.0,
            complementarity: 0.0,
            rank1_ratio: if m == 1 { 0.0 } else { 1.0 },
            iterations: 0,
            converged: true,
            dual_y: real_diag(k).iter().copied().collect(),
            warm: SdpWarmStart { s: DMatrix::zeros(m, m), y: real_diag(k), x: x.clone(), mu: 1.0 },
            x,
        };
    }
    let c = hermitize(k / Complex64::new(scale, 0.0));
    let c_norm = c.norm();
    let sqrt_m = (m as f64).sqrt();

    let (mut x, mut s, mut y, mut mu) = match warm.filter(|w| w.x.nrows() == m) {
        Some(w) => (w.x.clone(), w.s.clone(), w.y.clone() / scale, w.mu),
        None => (identity.clone(), DMatrix::zeros(m, m), DVector::zeros(m), 1.0),
    };

    let mut iterations = 0;
    let mut converged = false;
    let (mut pinf, mut dinf, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut primal_heavy = 0usize;
    let mut dual_heavy = 0usize;
    while iterations < options.max_iterations {
        iterations += 1;
        let dx = real_diag(&x);
        let ds = real_diag(&(&c - &s));
        y = DVector::from_iterator(m, (0..m).map(|i| mu * (1.0 - dx[i]) + ds[i]));
        let c_minus_y = with_diag_shift(&c, &y);
        let v = &c_minus_y - &x * Complex64::new(mu, 0.0);
        let (pos, _) = psd_split(&v);
        s = pos;
        let dual_gap = &s - &c_minus_y; // S + Diag(y) - C
        x = hermitize(&x + &dual_gap * Complex64::new(OVER_RELAXATION / mu, 0.0));

        let dxn = real_diag(&x);
        pinf = (0..m).map(|i| (dxn[i] - 1.0).powi(2)).sum::<f64>().sqrt();
        dinf = dual_gap.norm();
        gap = inner(&s, &x).abs();
        let rel_p = pinf / (1.0 + sqrt_m);
        let rel_d = dinf / (1.0 + c_norm);
        let rel_g = gap / (1.0 + c_norm * sqrt_m);
        if rel_p.max(rel_d).max(rel_g) <= options.tolerance {
            converged = true;
            break;
        }
        if rel_p > 10.0 * rel_d {
            primal_heavy += 1;
            dual_heavy = 0;
        } else if rel_d > 10.0 * rel_p {
            dual_heavy += 1;
            primal_heavy = 0;
        } else {
            primal_heavy = 0;
            dual_heavy = 0;
        }
        if primal_heavy >= MU_WINDOW {
            mu = (mu * 2.0).min(MU_MAX);
            primal_heavy = 0;
        } else if dual_heavy >= MU_WINDOW {
            mu = (mu * 0.5).max(MU_MIN);
            dual_heavy = 0;
        }
    }

    let warm = SdpWarmStart { x: x.clone(), s: s.clone(), y: &y * scale, mu };
    let polished = polish(&x);
    SdpSolution {
        objective: inner(k, &polished),
        primal_residual: pinf,
        dual_residual: dinf,
        complementarity: gap,
        rank1_ratio: rank1_ratio(&polished),
        iterations,
        converged,
        dual_y: y.iter().map(|v| v * scale).collect(),
        warm,
        x: polished,
    }
}
