//! Waveform subproblem: one SCA step for the multi-user case and the full
//! single-user power allocation loop.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quartic::{build_b_bank, build_k3, build_k4};
use crate::rectenna::{idc_compact, lag_products, RectennaParams, Waveform};
use crate::solvers::smallest_eigenpair;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformStep {
    pub waveform: Waveform,
    /// Set when `K3` had no negative eigenvalue and the previous waveform was
    /// kept.
    pub degenerate: bool,
}

/// Minimizes the linearized objective `s^H K3 s` over `½‖s‖² ≤ P`.
///
/// `channels[q]` is the composite channel of user `q` and `b_prev[q]` its lag
/// products under `previous`.
pub fn waveform_step(
    channels: &[Vec<Complex64>],
    b_prev: &[Vec<Complex64>],
    weights: &[f64],
    power_w: f64,
    params: &RectennaParams,
    previous: &Waveform,
) -> WaveformStep {
    let k3 = build_k3(channels, b_prev, weights, params);
    let (lambda, v) = smallest_eigenpair(&k3);
    if lambda >= 0.0 {
        return WaveformStep { waveform: previous.clone(), degenerate: true };
    }
    let amp = (2.0 * power_w).sqrt();
    WaveformStep { waveform: Waveform::new(v.into_iter().map(|c| c * amp).collect()), degenerate: false }
}

/// Real per-tone amplitudes `w_n` for a single user on aligned channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    /// Current after each iteration, starting with the initial allocation.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn real_lags(p: &[f64], a: &[f64]) -> Vec<f64> {
    let x: Vec<Complex64> = p.iter().zip(a).map(|(p, a)| Complex64::new(p * a, 0.0)).collect();
    lag_products(&x).into_iter().map(|c| c.re).collect()
}

fn real_current(b: &[f64], params: &RectennaParams) -> f64 {
    let b: Vec<Complex64> = b.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    idc_compact(&b, params)
}

/// Iterates smallest-eigenvector updates of `K4` from a uniform allocation
/// until the relative change of the current drops to `epsilon`.
pub fn su_power_allocation(
    a: &[f64],
    power_w: f64,
    params: &RectennaParams,
    epsilon: f64,
    max_iterations: usize,
) -> Result<PowerAllocation> {
    if a.is_empty() || a.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("aligned amplitudes must be finite and non-negative"));
    }
    if !a.iter().any(|v| *v > 0.0) {
        return Err(Error::invalid("at least one aligned amplitude must be positive"));
    }
    let n = a.len();
    let amp = (2.0 * power_w).sqrt();
    let mut p = vec![amp / (n as f64).sqrt(); n];
    let mut b = real_lags(&p, a);
    let mut current = real_current(&b, params);
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let k4 = build_k4(a, &b, params);
        let eig = k4.symmetric_eigen();
        let (idx, lambda) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty matrix");
        if lambda >= 0.0 {
            break;
        }
        // -K4 is entrywise non-negative, so its Perron vector can be taken
        // non-negative; absolute values remove the sign ambiguity.
        let next: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|v| v.abs() * amp).collect();
        let next_b = real_lags(&next, a);
        let next_current = real_current(&next_b, params);
        if next_current < current {
            break;
        }
        let change = (next_current - current).abs() / next_current.abs().max(1e-30);
        p = next;
        b = next_b;
        current = next_current;
        trace.push(current);
        if change <= epsilon {
            converged = true;
            break;
        }
    }
    Ok(PowerAllocation { p, trace, iterations, converged })
}

/// `s_n = p_n conj(h_n) / |h_n|`.
pub fn assemble_su_waveform(p: &[f64], h: &[Complex64]) -> Waveform {
    assert_eq!(p.len(), h.len(), "allocation and channel lengths differ");
    Waveform::new(
        p.iter()
            .zip(h)
            .map(|(&pn, hn)| {
                if pn == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mag = hn.norm();
                assert!(mag > 0.0, "positive power on a zero channel");
                hn.conj() * (pn / mag)
            })
            .collect(),
    )
}

/// `Tr(K3 s s^H)`.
pub fn surrogate_value(k3: &DMatrix<Complex64>, s: &Waveform) -> f64 {
    let n = s.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += s.s[i].conj() * k3[(i, j)] * s.s[j];
        }
    }
    acc.re
}

/// Lag products of every user under `s`.
pub fn all_lags(channels: &[Vec<Complex64>], s: &Waveform) -> Vec<Vec<Complex64>> {
    channels.iter().map(|h| build_b_bank(h).coefficients(s)).collect()
}
