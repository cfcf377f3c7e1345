//! Frequency-selective Rayleigh fading over the BS / IRS / user layout.
//!
//! Each link is a tapped delay line whose taps are independent circularly
//! symmetric complex Gaussians. The per-subcarrier response is evaluated at
//! baseband offsets `n * spacing` and scaled by the square root of the
//! distance-dependent pathloss of the link.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rectenna::SystemConfig;

const MODEL_D_TABLE: &str = include_str!("../data/model_d.pdp");

/// Geometry and large-scale fading parameters.
///
/// The IRS sits at horizontal offset `horizontal_m` from the BS along the
/// BS-user line and at height `vertical_m` above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub horizontal_m: f64,
    pub vertical_m: f64,
    pub direct_m: f64,
    pub exponent_direct: f64,
    pub exponent_incident: f64,
    pub exponent_reflected: f64,
    /// Linear power gain at `ref_distance_m`.
    pub ref_gain: f64,
    pub ref_distance_m: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            horizontal_m: 2.0,
            vertical_m: 2.0,
            direct_m: 15.0,
            exponent_direct: 2.0,
            exponent_incident: 2.0,
            exponent_reflected: 2.0,
            ref_gain: 10f64.powf(-3.5),
            ref_distance_m: 1.0,
        }
    }
}

impl Layout {
    pub fn validate(&self) -> Result<()> {
        let distances = [
            ("horizontal_m", self.horizontal_m),
            ("vertical_m", self.vertical_m),
            ("direct_m", self.direct_m),
            ("ref_distance_m", self.ref_distance_m),
        ];
        for (name, d) in distances {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {d}")));
            }
        }
        let exponents = [
            ("exponent_direct", self.exponent_direct),
            ("exponent_incident", self.exponent_incident),
            ("exponent_reflected", self.exponent_reflected),
        ];
        for (name, e) in exponents {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {e}")));
            }
        }
        if !(self.ref_gain > 0.0 && self.ref_gain.is_finite()) {
            return Err(Error::invalid(format!("ref_gain must be positive, got {}", self.ref_gain)));
        }
        Ok(())
    }

    /// BS-IRS and IRS-user distances.
    pub fn distances(&self) -> (f64, f64) {
        layout_distances(self)
    }

    /// Linear pathloss gains of the direct, incident and reflected links.
    pub fn link_gains(&self) -> Result<(f64, f64, f64)> {
        let (d_i, d_r) = self.distances();
        Ok((
            pathloss(self.direct_m, self.exponent_direct, self)?,
            pathloss(d_i, self.exponent_incident, self)?,
            pathloss(d_r, self.exponent_reflected, self)?,
        ))
    }
}

/// `ref_gain * (distance / ref_distance)^(-exponent)`.
pub fn pathloss(distance: f64, exponent: f64, layout: &Layout) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::invalid(format!("distance must be positive, got {distance}")));
    }
    Ok(layout.ref_gain * (distance / layout.ref_distance_m).powf(-exponent))
}

pub fn layout_distances(layout: &Layout) -> (f64, f64) {
    let incident = layout.horizontal_m.hypot(layout.vertical_m);
    let reflected = layout.vertical_m.hypot(layout.direct_m - layout.horizontal_m);
    (incident, reflected)
}

/// Tap delays with normalized mean powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    delays_s: Vec<f64>,
    powers: Vec<f64>,
}

impl PowerDelayProfile {
    /// Builds a profile from delays (s) and linear powers; powers are
    /// renormalized to sum to one.
    pub fn new(delays_s: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if delays_s.is_empty() || delays_s.len() != powers.len() {
            return Err(Error::invalid(format!(
                "profile needs equal, non-zero numbers of delays and powers ({} vs {})",
                delays_s.len(),
                powers.len()
            )));
        }
        if delays_s.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("tap delays must be finite and non-negative"));
        }
        if delays_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tap delays must be strictly increasing"));
        }
        if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("tap powers must be finite and non-negative"));
        }
        let total: f64 = powers.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("tap powers must not all be zero"));
        }
        let powers = powers.into_iter().map(|p| p / total).collect();
        Ok(Self { delays_s, powers })
    }

    /// Parses the two-column `delay_ns power_db` text format. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut delays = Vec::new();
        let mut powers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = |what: &str| -> Result<f64> {
                let field = fields.next().ok_or_else(|| Error::Profile {
                    line: idx + 1,
                    message: format!("missing {what} column"),
                })?;
                field.parse::<f64>().map_err(|e| Error::Profile {
                    line: idx + 1,
                    message: format!("bad {what} '{field}': {e}"),
                })
            };
            let delay_ns = next("delay_ns")?;
            let power_db = next("power_db")?;
            if fields.next().is_some() {
                return Err(Error::Profile { line: idx + 1, message: "expected two columns".into() });
            }
            delays.push(delay_ns * 1e-9);
            powers.push(10f64.powf(power_db / 10.0));
        }
        Self::new(delays, powers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Bundled 18-tap NLOS profile.
    pub fn model_d() -> Self {
        Self::parse(MODEL_D_TABLE).expect("bundled profile is well formed")
    }

    /// Exponentially decaying profile with `taps` taps spaced `spacing_s` apart.
    pub fn exponential(taps: usize, spacing_s: f64, decay_s: f64) -> Result<Self> {
        if taps == 0 || !(spacing_s > 0.0) || !(decay_s > 0.0) {
            return Err(Error::invalid("exponential profile needs taps >= 1 and positive spacing/decay"));
        }
        let delays: Vec<f64> = (0..taps).map(|t| t as f64 * spacing_s).collect();
        let powers = delays.iter().map(|d| (-d / decay_s).exp()).collect();
        Self::new(delays, powers)
    }

    /// Frequency-flat single tap at zero delay.
    pub fn single_tap() -> Self {
        Self { delays_s: vec![0.0], powers: vec![1.0] }
    }

    pub fn delays_s(&self) -> &[f64] {
        &self.delays_s
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }
}

/// Draws a circularly symmetric complex Gaussian with variance `variance`.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (variance / 2.0).sqrt()
}

pub fn generate_taps<R: Rng + ?Sized>(pdp: &PowerDelayProfile, rng: &mut R) -> Vec<Complex64> {
    pdp.powers.iter().map(|&p| cscg(rng, p)).collect()
}

/// `H[n] = sum_t taps[t] * exp(-j 2 pi n spacing delay[t])` for `n = 0..n_subcarriers`.
pub fn frequency_response(
    taps: &[Complex64],
    pdp: &PowerDelayProfile,
    n_subcarriers: usize,
    spacing_hz: f64,
) -> Vec<Complex64> {
    assert_eq!(taps.len(), pdp.len(), "tap count must match the profile");
    (0..n_subcarriers)
        .map(|n| {
            let f = n as f64 * spacing_hz;
            taps.iter()
                .zip(&pdp.delays_s)
                .map(|(&h, &tau)| h * Complex64::from_polar(1.0, -2.0 * PI * f * tau))
                .sum()
        })
        .collect()
}

/// Frequency-domain channels of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `K x N`, direct BS-user channel.
    pub direct: DMatrix<Complex64>,
    /// `N x L`, BS-IRS channel.
    pub incident: DMatrix<Complex64>,
    /// One `N x L` IRS-user channel per user.
    pub reflected: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn new(
        direct: DMatrix<Complex64>,
        incident: DMatrix<Complex64>,
        reflected: Vec<DMatrix<Complex64>>,
    ) -> Result<Self> {
        let (k, n) = direct.shape();
        let (n_i, l) = incident.shape();
        if n != n_i {
            return Err(Error::invalid(format!("direct has {n} subcarriers, incident has {n_i}")));
        }
        if reflected.len() != k {
            return Err(Error::invalid(format!("{} reflected channels for {k} users", reflected.len())));
        }
        if reflected.iter().any(|r| r.shape() != (n, l)) {
            return Err(Error::invalid("reflected channel shape must be N x L"));
        }
        let finite = |m: &DMatrix<Complex64>| m.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite(&direct) || !finite(&incident) || !reflected.iter().all(finite) {
            return Err(Error::invalid("channel entries must be finite"));
        }
        Ok(Self { direct, incident, reflected })
    }

    pub fn users(&self) -> usize {
        self.direct.nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.direct.ncols()
    }

    pub fn elements(&self) -> usize {
        self.incident.ncols()
    }

    /// Direct channel of `user` as a vector over subcarriers.
    pub fn direct_row(&self, user: usize) -> Vec<Complex64> {
        self.direct.row(user).iter().copied().collect()
    }

    /// Keeps only the listed users, in order.
    pub fn select_users(&self, users: &[usize]) -> Self {
        let direct = DMatrix::from_fn(users.len(), self.subcarriers(), |q, n| self.direct[(users[q], n)]);
        let reflected = users.iter().map(|&q| self.reflected[q].clone()).collect();
        Self { direct, incident: self.incident.clone(), reflected }
    }
}

/// Generates one realization.
///
/// Tap draws happen in a fixed order (direct per user, incident per element,
/// reflected per user and element) before any frequency evaluation, so two
/// calls that differ only in the subcarrier count see the same taps.
pub fn generate_realization<R: Rng + ?Sized>(
    config: &SystemConfig,
    layout: &Layout,
    pdp: &PowerDelayProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    config.validate()?;
    layout.validate()?;
    let (n, l, k) = (config.subcarriers, config.elements, config.users);
    let spacing = config.subcarrier_spacing();
    let (g_d, g_i, g_r) = layout.link_gains()?;
    let (a_d, a_i, a_r) = (g_d.sqrt(), g_i.sqrt(), g_r.sqrt());

    let direct_taps: Vec<_> = (0..k).map(|_| generate_taps(pdp, rng)).collect();
    let incident_taps: Vec<_> = (0..l).map(|_| generate_taps(pdp, rng)).collect();
    let reflected_taps: Vec<Vec<_>> =
        (0..k).map(|_| (0..l).map(|_| generate_taps(pdp, rng)).collect()).collect();

    let mut direct = DMatrix::zeros(k, n);
    for (q, taps) in direct_taps.iter().enumerate() {
        for (i, h) in frequency_response(taps, pdp, n, spacing).into_iter().enumerate() {
            direct[(q, i)] = h * a_d;
        }
    }
    let mut incident = DMatrix::zeros(n, l);
    for (e, taps) in incident_taps.iter().enumerate() {
        for (i, h) in frequency_response(taps, pdp, n, spacing).into_iter().enumerate() {
            incident[(i, e)] = h * a_i;
        }
    }
    let reflected = reflected_taps
        .iter()
        .map(|user_taps| {
            let mut m = DMatrix::zeros(n, l);
            for (e, taps) in user_taps.iter().enumerate() {
                for (i, h) in frequency_response(taps, pdp, n, spacing).into_iter().enumerate() {
                    m[(i, e)] = h * a_r;
                }
            }
            m
        })
        .collect();
    Ok(ChannelRealization { direct, incident, reflected })
}
