//! Structured matrices behind the fourth-order objective and its successive
//! convex approximation.
//!
//! Phase vectors are row vectors `theta` of length `L + 1` whose last entry is
//! the auxiliary variable multiplying the direct path. With
//! `z_n = [h_r,n ∘ h_i,n ; h_d,n] s_n` the received tone is `x_n = theta z_n`,
//! and the lag products `b_k = sum_n conj(x_n) x_(n+k)` determine the current.
//! The phase-domain coefficients are `d_k = theta D_k theta^H = conj(b_k)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::rectenna::{composite_channel, lag_products, PhaseConfig, RectennaParams, Waveform};

/// Largest `N (L + 1)` for which the frequency-selective surrogate is
/// materialized densely.
pub const DENSE_K2_LIMIT: usize = 1024;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `[h_r,q,n,l h_i,n,l for l ; h_d,q,n]`.
pub fn aug_channel(realization: &ChannelRealization, user: usize, subcarrier: usize) -> Vec<Complex64> {
    let l = realization.elements();
    let refl = &realization.reflected[user];
    let mut v: Vec<Complex64> =
        (0..l).map(|e| refl[(subcarrier, e)] * realization.incident[(subcarrier, e)]).collect();
    v.push(realization.direct[(user, subcarrier)]);
    v
}

/// Stacks `z_n = v_n s_n` as the columns of an `(L + 1) x N` matrix.
pub fn build_z(v: &[Vec<Complex64>], s: &Waveform) -> DMatrix<Complex64> {
    assert_eq!(v.len(), s.len(), "one augmented channel per subcarrier");
    let dim = v.first().map_or(0, Vec::len);
    DMatrix::from_fn(dim, v.len(), |a, n| v[n][a] * s.s[n])
}

/// `z` blocks of one user for the given waveform.
pub fn user_z(realization: &ChannelRealization, user: usize, s: &Waveform) -> DMatrix<Complex64> {
    let v: Vec<_> = (0..realization.subcarriers()).map(|n| aug_channel(realization, user, n)).collect();
    build_z(&v, s)
}

/// Superdiagonal slices `B_k` of `B = h^H h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalBank {
    h: Vec<Complex64>,
}

impl DiagonalBank {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Entries `(n, n + k)` of `B_k`, i.e. `conj(h_n) h_(n+k)`.
    pub fn superdiagonal(&self, k: usize) -> Vec<Complex64> {
        let n = self.h.len();
        (0..n.saturating_sub(k)).map(|i| self.h[i].conj() * self.h[i + k]).collect()
    }

    pub fn matrix(&self, k: usize) -> DMatrix<Complex64> {
        let n = self.h.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in self.superdiagonal(k).into_iter().enumerate() {
            m[(i, i + k)] = v;
        }
        m
    }

    /// `b_k = s^H B_k s` for every `k`.
    pub fn coefficients(&self, s: &Waveform) -> Vec<Complex64> {
        assert_eq!(s.len(), self.h.len(), "waveform and channel lengths differ");
        let x: Vec<_> = s.s.iter().zip(&self.h).map(|(a, b)| a * b).collect();
        lag_products(&x)
    }
}

pub fn build_b_bank(h: &[Complex64]) -> DiagonalBank {
    DiagonalBank { h: h.to_vec() }
}

/// `D_k = sum_n z_n z_(n+k)^H` for `k = 0..N`, from `(L + 1) x N` blocks.
pub fn build_d_bank(z: &DMatrix<Complex64>) -> Vec<DMatrix<Complex64>> {
    let n = z.ncols();
    (0..n)
        .map(|k| {
            let mut d = DMatrix::zeros(z.nrows(), z.nrows());
            for i in 0..n - k {
                d += z.column(i) * z.column(i + k).adjoint();
            }
            d
        })
        .collect()
}

/// `theta M theta^H` for a row vector `theta`.
pub fn bilinear(m: &DMatrix<Complex64>, theta: &[Complex64]) -> Complex64 {
    assert_eq!(m.nrows(), theta.len(), "dimension mismatch");
    let t = DVector::from_column_slice(theta);
    // theta M theta^H = t^T M conj(t)
    (t.transpose() * m * t.map(|c| c.conj()))[(0, 0)]
}

/// Bilinear forms against every matrix of a bank; entry 0 must be real.
pub fn coefficients_from_bank(bank: &[DMatrix<Complex64>], theta: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out: Vec<Complex64> = bank.iter().map(|m| bilinear(m, theta)).collect();
    if let Some(first) = out.first_mut() {
        let residue = first.im.abs() / first.re.abs().max(f64::MIN_POSITIVE);
        if first.im.abs() > 1e-300 && residue > 1e-10 {
            return Err(Error::ImaginaryResidue { context: "coefficient 0", residue });
        }
        first.im = 0.0;
    }
    Ok(out)
}

/// `x_n = theta z_n` for a flat phase row.
pub fn received_flat(z: &DMatrix<Complex64>, theta: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(z.nrows(), theta.len(), "dimension mismatch");
    (0..z.ncols())
        .map(|n| z.column(n).iter().zip(theta).map(|(a, t)| a * t).sum())
        .collect()
}

/// `x_n = theta_n z_n` with one phase row per subcarrier stacked in `theta`.
pub fn received_selective(z: &DMatrix<Complex64>, theta: &[Complex64]) -> Vec<Complex64> {
    let dim = z.nrows();
    assert_eq!(theta.len(), dim * z.ncols(), "dimension mismatch");
    (0..z.ncols())
        .map(|n| z.column(n).iter().zip(&theta[n * dim..(n + 1) * dim]).map(|(a, t)| a * t).sum())
        .collect()
}

/// `d_k = theta D_k theta^H`, computed through the received tones.
pub fn d_coefficients(z: &DMatrix<Complex64>, theta: &[Complex64]) -> Vec<Complex64> {
    lag_products(&received_flat(z, theta)).into_iter().map(|b| b.conj()).collect()
}

/// `e_k = theta E_k theta^H` for a stacked frequency-selective phase vector.
pub fn e_coefficients(z: &DMatrix<Complex64>, theta: &[Complex64]) -> Vec<Complex64> {
    lag_products(&received_selective(z, theta)).into_iter().map(|b| b.conj()).collect()
}

/// Weights `c_k` of `J = sum_k c_k M_k` given the previous-iterate
/// coefficients: `c_0 = -k2/4 - (3/8) k4 coef_0`, `c_k = -(3/4) k4 conj(coef_k)`.
pub fn lag_weights(coef: &[Complex64], params: &RectennaParams) -> Vec<Complex64> {
    coef.iter()
        .enumerate()
        .map(|(k, c)| {
            if k == 0 {
                Complex64::new(-0.25 * params.k2 - 0.375 * params.k4 * c.re, 0.0)
            } else {
                -0.75 * params.k4 * c.conj()
            }
        })
        .collect()
}

/// Weight of the `(n, n')` pair in `J + J^H`, as a function of `n' - n`.
#[inline]
pub fn pair_weight(c: &[Complex64], offset: isize) -> Complex64 {
    match offset {
        0 => c[0] * 2.0,
        k if k > 0 => c[k as usize],
        k => c[(-k) as usize].conj(),
    }
}

/// `N x N` Hermitian Toeplitz matrix `G(n, n') = pair_weight(c, n' - n)`.
pub fn pair_weight_matrix(c: &[Complex64]) -> DMatrix<Complex64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| pair_weight(c, j as isize - i as isize))
}

fn symmetrize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Flat-IRS surrogate `K1 = J1 + J1^H` of size `(L + 1)^2`.
///
/// `z[q]` are the user blocks and `d[q]` the coefficients at the previous
/// iterate.
pub fn build_k1(
    z: &[DMatrix<Complex64>],
    d: &[Vec<Complex64>],
    weights: &[f64],
    params: &RectennaParams,
) -> DMatrix<Complex64> {
    assert!(!z.is_empty() && z.len() == d.len() && z.len() == weights.len(), "one entry per user");
    let dim = z[0].nrows();
    let mut k = DMatrix::zeros(dim, dim);
    for ((zq, dq), &w) in z.iter().zip(d).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let g = pair_weight_matrix(&lag_weights(dq, params));
        k += (zq * g * zq.adjoint()) * Complex64::new(w, 0.0);
    }
    symmetrize(&mut k);
    k
}

/// Frequency-selective surrogate `K2` accessed without materializing it.
///
/// Index `m = n (L + 1) + a` addresses entry `a` of the phase row of
/// subcarrier `n`. Block `(n, n')` equals
/// `sum_q w_q pair_weight(c_q, n' - n) z_q,n z_q,n'^H`.
#[derive(Debug, Clone)]
pub struct K2Operator {
    pub z: Vec<DMatrix<Complex64>>,
    pub c: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
}

impl K2Operator {
    pub fn new(z: Vec<DMatrix<Complex64>>, e: &[Vec<Complex64>], weights: &[f64], params: &RectennaParams) -> Self {
        assert!(!z.is_empty() && z.len() == e.len() && z.len() == weights.len(), "one entry per user");
        let c = e.iter().map(|eq| lag_weights(eq, params)).collect();
        Self { z, c, weights: weights.to_vec() }
    }

    pub fn block_dim(&self) -> usize {
        self.z[0].nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.z[0].ncols()
    }

    pub fn dim(&self) -> usize {
        self.block_dim() * self.subcarriers()
    }

    pub fn entry(&self, m: usize, j: usize) -> Complex64 {
        let dim = self.block_dim();
        let (n, a) = (m / dim, m % dim);
        let (n2, b) = (j / dim, j % dim);
        let mut v = ZERO;
        for ((zq, cq), &w) in self.z.iter().zip(&self.c).zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            v += pair_weight(cq, n2 as isize - n as isize) * zq[(a, n)] * zq[(b, n2)].conj() * w;
        }
        v
    }

    pub fn row(&self, m: usize) -> Vec<Complex64> {
        (0..self.dim()).map(|j| self.entry(m, j)).collect()
    }

    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        let dim = self.dim();
        if dim > DENSE_K2_LIMIT {
            return Err(Error::invalid(format!(
                "dense surrogate of size {dim} exceeds the limit of {DENSE_K2_LIMIT}"
            )));
        }
        let bd = self.block_dim();
        let n = self.subcarriers();
        let mut k = DMatrix::zeros(dim, dim);
        for ((zq, cq), &w) in self.z.iter().zip(&self.c).zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let g = pair_weight(cq, j as isize - i as isize) * w;
                    for a in 0..bd {
                        let za = zq[(a, i)] * g;
                        for b in 0..bd {
                            k[(i * bd + a, j * bd + b)] += za * zq[(b, j)].conj();
                        }
                    }
                }
            }
        }
        symmetrize(&mut k);
        Ok(k)
    }
}

/// Dense `K2`, gated at [`DENSE_K2_LIMIT`].
pub fn build_k2(
    z: &[DMatrix<Complex64>],
    e: &[Vec<Complex64>],
    weights: &[f64],
    params: &RectennaParams,
) -> Result<DMatrix<Complex64>> {
    K2Operator::new(z.to_vec(), e, weights, params).to_dense()
}

/// Waveform surrogate `K3 = J3 + J3^H` of size `N x N` from per-user
/// composite channels and previous-iterate lag products.
pub fn build_k3(
    h: &[Vec<Complex64>],
    b: &[Vec<Complex64>],
    weights: &[f64],
    params: &RectennaParams,
) -> DMatrix<Complex64> {
    assert!(!h.is_empty() && h.len() == b.len() && h.len() == weights.len(), "one entry per user");
    let n = h[0].len();
    let mut k = DMatrix::zeros(n, n);
    for ((hq, bq), &w) in h.iter().zip(b).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let c = lag_weights(bq, params);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += pair_weight(&c, j as isize - i as isize) * hq[i].conj() * hq[j] * w;
            }
        }
    }
    symmetrize(&mut k);
    k
}

/// Single-user surrogate on real aligned amplitudes `a` with real lag
/// products `b`.
pub fn build_k4(a: &[f64], b: &[f64], params: &RectennaParams) -> DMatrix<f64> {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    let n = a.len();
    let c0 = -0.25 * params.k2 - 0.375 * params.k4 * b[0];
    DMatrix::from_fn(n, n, |i, j| {
        let g = if i == j { 2.0 * c0 } else { -0.75 * params.k4 * b[i.abs_diff(j)] };
        g * (a[i] * a[j])
    })
}

/// Received tones and lag products of every user at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticState {
    pub channels: Vec<Vec<Complex64>>,
    pub b: Vec<Vec<Complex64>>,
}

impl QuarticState {
    pub fn new(realization: &ChannelRealization, s: &Waveform, phases: &PhaseConfig) -> Self {
        let channels: Vec<_> = (0..realization.users()).map(|q| composite_channel(realization, phases, q)).collect();
        Self::from_channels(channels, s)
    }

    pub fn from_channels(channels: Vec<Vec<Complex64>>, s: &Waveform) -> Self {
        let b = channels.iter().map(|h| build_b_bank(h).coefficients(s)).collect();
        Self { channels, b }
    }

    /// Phase-domain coefficients `d = conj(b)` of every user.
    pub fn d(&self) -> Vec<Vec<Complex64>> {
        self.b.iter().map(|bq| bq.iter().map(|v| v.conj()).collect()).collect()
    }
}
