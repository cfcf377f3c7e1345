//! Passive beamforming steps: flat IRS through the unit-diagonal SDP,
//! frequency-selective IRS through element-wise updates, and the closed-form
//! single-user alignment.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelRealization;
use crate::error::Result;
use crate::quartic::{build_k1, d_coefficients, e_coefficients, lag_weights, pair_weight, received_flat, user_z};
use crate::rectenna::{idc_compact, lag_products, PhaseConfig, RectennaParams, SystemConfig, Waveform};
use crate::solvers::{
    gaussian_randomization, normalize_by_auxiliary, solve_unit_diag_sdp_warm, SdpWarmStart,
};

const SKIP_THRESHOLD: f64 = 1e-14;

/// Largest phasor change below which element-wise updating stops.
pub const EWU_TOLERANCE: f64 = 1e-10;

/// Sweep cap per frequency-selective step.
pub const EWU_MAX_SWEEPS: usize = 100;
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Outcome of one flat-IRS step.
#[derive(Debug, Clone)]
pub struct FfStep {
    pub phases: Vec<Complex64>,
    /// Weighted-sum current with the new phases and the input waveform.
    pub value: f64,
    /// Candidates were sampled because the SDP solution was not rank-1.
    pub randomized: bool,
    /// The extracted vector did not beat the incoming phases, which were kept.
    pub kept_previous: bool,
    pub sdp_converged: bool,
    pub rank1_ratio: f64,
    pub sdp_iterations: usize,
    pub warm: SdpWarmStart,
}

fn weighted_current_flat(z: &[DMatrix<Complex64>], theta: &[Complex64], weights: &[f64], params: &RectennaParams) -> f64 {
    z.iter()
        .zip(weights)
        .filter(|(_, w)| **w != 0.0)
        .map(|(zq, w)| w * idc_compact(&lag_products(&received_flat(zq, theta)), params))
        .sum()
}

fn with_auxiliary(theta: &[Complex64]) -> Vec<Complex64> {
    let mut v = theta.to_vec();
    v.push(ONE);
    v
}

/// One SCA step for the flat IRS with the waveform fixed.
///
/// Builds `K1` at the incoming phases, solves the unit-diagonal SDP of size
/// `L + 1`, extracts a unit-modulus vector and divides out the auxiliary
/// entry. The incoming phases are returned unchanged if the extraction does
/// not increase the weighted-sum current.
#[allow(clippy::too_many_arguments)]
pub fn ff_step<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    waveform: &Waveform,
    phases: &[Complex64],
    config: &SystemConfig,
    params: &RectennaParams,
    rng: &mut R,
    warm: Option<&SdpWarmStart>,
) -> Result<FfStep> {
    assert_eq!(phases.len(), realization.elements(), "one phase per element");
    let weights = &config.weights;
    let z: Vec<_> = (0..realization.users()).map(|q| user_z(realization, q, waveform)).collect();
    let previous = with_auxiliary(phases);
    let d: Vec<_> = z.iter().map(|zq| d_coefficients(zq, &previous)).collect();
    let k1 = build_k1(&z, &d, weights, params);
    let sdp = solve_unit_diag_sdp_warm(&k1, &config.sdp, warm);
    let extraction = gaussian_randomization(
        &sdp,
        |t| weighted_current_flat(&z, t, weights, params),
        config.randomization_candidates,
        rng,
    )?;
    let candidate = normalize_by_auxiliary(&extraction.theta);
    let new_value = weighted_current_flat(&z, &with_auxiliary(&candidate), weights, params);
    let old_value = weighted_current_flat(&z, &previous, weights, params);
    let (phases, value, kept_previous) = if new_value >= old_value {
        (candidate, new_value, false)
    } else {
        (phases.to_vec(), old_value, true)
    };
    Ok(FfStep {
        phases,
        value,
        randomized: extraction.randomized,
        kept_previous,
        sdp_converged: sdp.converged,
        rank1_ratio: sdp.rank1_ratio,
        sdp_iterations: sdp.iterations,
        warm: sdp.warm,
    })
}

/// One ascending sweep of element-wise updates maximizing `theta K theta^H`
/// for an explicit Hermitian `k`: `theta_m = exp(-j arg C_m)` with
/// `C_m = sum_(j != m) k_mj conj(theta_j)`.
pub fn ewu_sweep(k: &DMatrix<Complex64>, theta: &mut [Complex64]) {
    let m = theta.len();
    assert_eq!(k.nrows(), m, "dimension mismatch");
    for i in 0..m {
        let mut c = Complex64::new(0.0, 0.0);
        for j in 0..m {
            if j != i {
                c += k[(i, j)] * theta[j].conj();
            }
        }
        if c.norm() >= SKIP_THRESHOLD {
            theta[i] = Complex64::from_polar(1.0, -c.arg());
        }
    }
}

/// Outcome of one frequency-selective step.
#[derive(Debug, Clone, PartialEq)]
pub struct FsStep {
    /// `N x L` phases after dividing each subcarrier row by its auxiliary
    /// entry.
    pub phases: DMatrix<Complex64>,
    /// Input waveform with each tone rotated by its auxiliary entry, so that
    /// the received tones are exactly those reached by the sweep.
    pub waveform: Waveform,
}

/// Stacks `N x L` phases into the `N (L + 1)` vector with unit auxiliaries.
pub fn stack_selective(phases: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (n, l) = phases.shape();
    let mut out = Vec::with_capacity(n * (l + 1));
    for i in 0..n {
        out.extend(phases.row(i).iter().copied());
        out.push(ONE);
    }
    out
}

/// Element-wise updating on `-K2` without materializing it: up to
/// `max_sweeps` sweeps, stopping early once no phase moves by more than
/// [`EWU_TOLERANCE`].
///
/// Uses `x_q,n = theta_n z_q,n`: row `m = (n, a)` of `K2` applied to
/// `conj(theta)` equals `sum_q w_q z_q,n[a] sum_n' g_q(n' - n) conj(x_q,n')`, so
/// each update costs `O(K N)` and the received tones are refreshed in place.
pub fn fs_ewu_step(
    realization: &ChannelRealization,
    waveform: &Waveform,
    phases: &DMatrix<Complex64>,
    weights: &[f64],
    params: &RectennaParams,
    max_sweeps: usize,
) -> FsStep {
    let (n, l) = phases.shape();
    assert_eq!(n, realization.subcarriers(), "one phase row per subcarrier");
    assert_eq!(l, realization.elements(), "one phase column per element");
    let bd = l + 1;
    let users: Vec<usize> = (0..realization.users()).filter(|&q| weights[q] != 0.0).collect();
    let z: Vec<_> = users.iter().map(|&q| user_z(realization, q, waveform)).collect();
    let w: Vec<f64> = users.iter().map(|&q| weights[q]).collect();
    let mut theta = stack_selective(phases);
    let gamma: Vec<Vec<Complex64>> = z
        .iter()
        .map(|zq| {
            let c = lag_weights(&e_coefficients(zq, &theta), params);
            (0..2 * n - 1).map(|i| pair_weight(&c, i as isize - (n as isize - 1))).collect()
        })
        .collect();
    // gamma[q][offset + n - 1] = pair_weight(c_q, offset)
    let mut x: Vec<Vec<Complex64>> = z
        .iter()
        .map(|zq| (0..n).map(|i| (0..bd).map(|a| theta[i * bd + a] * zq[(a, i)]).sum()).collect())
        .collect();

    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let outside: Vec<Complex64> = gamma
                .iter()
                .zip(&x)
                .map(|(g, xq)| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| g[j + n - 1 - i] * xq[j].conj())
                        .sum()
                })
                .collect();
            for a in 0..bd {
                let idx = i * bd + a;
                let mut c = Complex64::new(0.0, 0.0);
                for (u, zq) in z.iter().enumerate() {
                    let za = zq[(a, i)];
                    let g0 = gamma[u][n - 1];
                    let full = outside[u] + g0 * x[u][i].conj();
                    let diag = g0 * za.norm_sqr() * theta[idx].conj();
                    // C_m of -K2 excludes the diagonal term.
                    c -= (za * full - diag) * w[u];
                }
                if c.norm() < SKIP_THRESHOLD {
                    continue;
                }
                let updated = Complex64::from_polar(1.0, -c.arg());
                let delta = updated - theta[idx];
                moved = moved.max(delta.norm());
                theta[idx] = updated;
                for (u, zq) in z.iter().enumerate() {
                    x[u][i] += delta * zq[(a, i)];
                }
            }
        }
        if moved <= EWU_TOLERANCE {
            break;
        }
    }

    let mut out = DMatrix::zeros(n, l);
    let mut s = waveform.s.clone();
    for i in 0..n {
        let aux = theta[i * bd + l];
        let block = normalize_by_auxiliary(&theta[i * bd..(i + 1) * bd]);
        for (e, v) in block.into_iter().enumerate() {
            out[(i, e)] = v;
        }
        s[i] *= aux;
    }
    FsStep { phases: out, waveform: Waveform::new(s) }
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Closed-form single-user alignment: waveform phases `gamma_n = -arg h_d,n`
/// and IRS phases `psi_n,l = -(gamma_n + arg h_i,n,l + arg h_r,n,l)`, wrapped
/// to `(-pi, pi]`.
pub fn su_fs_phases(realization: &ChannelRealization) -> (Vec<f64>, PhaseConfig) {
    assert_eq!(realization.users(), 1, "single-user alignment needs exactly one user");
    let (n, l) = (realization.subcarriers(), realization.elements());
    let gamma: Vec<f64> = (0..n).map(|i| wrap_angle(-realization.direct[(0, i)].arg())).collect();
    let refl = &realization.reflected[0];
    let psi = DMatrix::from_fn(n, l, |i, e| {
        let angle = -(gamma[i] + realization.incident[(i, e)].arg() + refl[(i, e)].arg());
        Complex64::from_polar(1.0, wrap_angle(angle))
    });
    (gamma, PhaseConfig::Selective(psi))
}
