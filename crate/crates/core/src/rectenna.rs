//! Nonlinear rectenna model: DC current from a multisine through a composite
//! channel, truncated at fourth order.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::solvers::SdpOptions;

/// Largest subcarrier count accepted by [`idc_direct`].
pub const DIRECT_MAX_SUBCARRIERS: usize = 16;

const RESIDUE_TOL: f64 = 1e-8;

/// Diode and truncation coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectennaParams {
    pub k2: f64,
    pub k4: f64,
    pub saturation_current_a: f64,
    pub ideality: f64,
    pub thermal_voltage_v: f64,
    pub antenna_resistance_ohm: f64,
}

impl Default for RectennaParams {
    fn default() -> Self {
        Self {
            k2: 0.17,
            k4: 957.25,
            saturation_current_a: 5e-6,
            ideality: 1.05,
            thermal_voltage_v: 25.86e-3,
            antenna_resistance_ohm: 50.0,
        }
    }
}

impl RectennaParams {
    /// Derives `k2`, `k4` from the diode parameters via
    /// `beta_i = i_s / (i! (n' v_t)^i)` and `k_i = beta_i R^(i/2)`.
    pub fn from_diode(saturation_current_a: f64, ideality: f64, thermal_voltage_v: f64, antenna_resistance_ohm: f64) -> Self {
        let nv = ideality * thermal_voltage_v;
        let beta2 = saturation_current_a / (2.0 * nv.powi(2));
        let beta4 = saturation_current_a / (24.0 * nv.powi(4));
        Self {
            k2: beta2 * antenna_resistance_ohm,
            k4: beta4 * antenna_resistance_ohm.powi(2),
            saturation_current_a,
            ideality,
            thermal_voltage_v,
            antenna_resistance_ohm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k2 > 0.0 && self.k2.is_finite() && self.k4 > 0.0 && self.k4.is_finite()) {
            return Err(Error::invalid(format!("k2 and k4 must be positive, got {} and {}", self.k2, self.k4)));
        }
        Ok(())
    }
}

/// Dimensions, budget and optimizer settings shared by every algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub subcarriers: usize,
    pub elements: usize,
    pub users: usize,
    pub power_w: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub randomization_candidates: usize,
    pub sdp: SdpOptions,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            subcarriers: 16,
            elements: 20,
            users: 1,
            power_w: dbm_to_watts(36.0),
            carrier_hz: 5.18e9,
            bandwidth_hz: 10e6,
            weights: vec![1.0],
            epsilon: 1e-4,
            max_iterations: 200,
            randomization_candidates: 1000,
            sdp: SdpOptions::default(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 || self.elements == 0 || self.users == 0 {
            return Err(Error::invalid("subcarriers, elements and users must all be at least 1"));
        }
        if !(self.power_w > 0.0 && self.power_w.is_finite()) {
            return Err(Error::invalid(format!("power must be positive, got {}", self.power_w)));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {}", self.bandwidth_hz)));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::invalid(format!("carrier must be positive, got {}", self.carrier_hz)));
        }
        if self.weights.len() != self.users {
            return Err(Error::invalid(format!("{} weights for {} users", self.weights.len(), self.users)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || !self.weights.iter().any(|w| *w > 0.0) {
            return Err(Error::invalid("weights must be non-negative with at least one positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.randomization_candidates == 0 {
            return Err(Error::invalid("randomization_candidates must be at least 1"));
        }
        self.sdp.validate()
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Complex multisine weights `s_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub s: Vec<Complex64>,
}

impl Waveform {
    pub fn new(s: Vec<Complex64>) -> Self {
        Self { s }
    }

    /// Equal amplitude on every tone at full power, zero phase.
    pub fn uniform(subcarriers: usize, power_w: f64) -> Self {
        let amp = (2.0 * power_w / subcarriers as f64).sqrt();
        Self { s: vec![Complex64::new(amp, 0.0); subcarriers] }
    }

    /// All power on one tone.
    pub fn single_tone(subcarriers: usize, tone: usize, power_w: f64) -> Self {
        let mut s = vec![Complex64::new(0.0, 0.0); subcarriers];
        s[tone] = Complex64::new((2.0 * power_w).sqrt(), 0.0);
        Self { s }
    }

    /// `½‖s‖²`.
    pub fn power(&self) -> f64 {
        0.5 * self.s.iter().map(|x| x.norm_sqr()).sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// IRS reflection coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseConfig {
    /// One phasor per element, shared by all subcarriers.
    Flat(Vec<Complex64>),
    /// `N x L`: one phasor per subcarrier and element.
    Selective(DMatrix<Complex64>),
}

impl PhaseConfig {
    pub fn flat_from_angles(angles: &[f64]) -> Self {
        PhaseConfig::Flat(angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect())
    }

    pub fn elements(&self) -> usize {
        match self {
            PhaseConfig::Flat(t) => t.len(),
            PhaseConfig::Selective(m) => m.ncols(),
        }
    }

    /// Phasor applied by `element` on `subcarrier`.
    pub fn phasor(&self, subcarrier: usize, element: usize) -> Complex64 {
        match self {
            PhaseConfig::Flat(t) => t[element],
            PhaseConfig::Selective(m) => m[(subcarrier, element)],
        }
    }

    /// Expands a flat configuration to one row per subcarrier.
    pub fn to_selective(&self, subcarriers: usize) -> DMatrix<Complex64> {
        match self {
            PhaseConfig::Flat(t) => DMatrix::from_fn(subcarriers, t.len(), |_, l| t[l]),
            PhaseConfig::Selective(m) => m.clone(),
        }
    }

    /// Largest deviation of any entry from unit modulus.
    pub fn modulus_error(&self) -> f64 {
        let it: Box<dyn Iterator<Item = &Complex64>> = match self {
            PhaseConfig::Flat(t) => Box::new(t.iter()),
            PhaseConfig::Selective(m) => Box::new(m.iter()),
        };
        it.map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `h_n = h_d,n + sum_l h_r,n,l theta_n,l h_i,n,l` for one user.
pub fn composite_channel(realization: &ChannelRealization, phases: &PhaseConfig, user: usize) -> Vec<Complex64> {
    assert!(user < realization.users(), "user index out of range");
    assert_eq!(phases.elements(), realization.elements(), "phase count must match IRS size");
    if let PhaseConfig::Selective(m) = phases {
        assert_eq!(m.nrows(), realization.subcarriers(), "selective phases need one row per subcarrier");
    }
    let refl = &realization.reflected[user];
    (0..realization.subcarriers())
        .map(|n| {
            let mut h = realization.direct[(user, n)];
            for l in 0..realization.elements() {
                h += refl[(n, l)] * phases.phasor(n, l) * realization.incident[(n, l)];
            }
            h
        })
        .collect()
}

fn check_real(value: Complex64, context: &'static str) -> Result<f64> {
    let residue = value.im.abs() / value.re.abs().max(f64::MIN_POSITIVE);
    if value.im.abs() > 1e-300 && residue > RESIDUE_TOL {
        return Err(Error::ImaginaryResidue { context, residue });
    }
    Ok(value.re)
}

/// Received tone amplitudes `x_n = h_n s_n`.
pub fn received(s: &Waveform, h: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(s.len(), h.len(), "waveform and channel lengths differ");
    s.s.iter().zip(h).map(|(a, b)| a * b).collect()
}

/// Exhaustive evaluation over every index quadruple with `n1 + n3 = n2 + n4`.
///
/// Only available for up to [`DIRECT_MAX_SUBCARRIERS`] tones; larger problems
/// go through [`idc_compact`].
pub fn idc_direct(s: &Waveform, h: &[Complex64], params: &RectennaParams) -> Result<f64> {
    let x = received(s, h);
    let n = x.len();
    if n > DIRECT_MAX_SUBCARRIERS {
        return Err(Error::invalid(format!(
            "direct evaluation limited to {DIRECT_MAX_SUBCARRIERS} subcarriers, got {n}"
        )));
    }
    let second: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let mut fourth = Complex64::new(0.0, 0.0);
    for n1 in 0..n {
        for n2 in 0..n {
            for n3 in 0..n {
                let n4 = n1 + n3;
                if n4 < n2 || n4 - n2 >= n {
                    continue;
                }
                let n4 = n4 - n2;
                fourth += x[n1] * x[n2].conj() * x[n3] * x[n4].conj();
            }
        }
    }
    let fourth = check_real(fourth, "fourth-order quadruple sum")?;
    Ok(0.5 * params.k2 * second + 0.375 * params.k4 * fourth)
}

/// `b_k = sum_n conj(x_n) x_(n+k)` for `k = 0..N`.
pub fn lag_products(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut b: Vec<Complex64> = (0..n)
        .map(|k| (0..n - k).map(|i| x[i].conj() * x[i + k]).sum())
        .collect();
    if let Some(b0) = b.first_mut() {
        b0.im = 0.0;
    }
    b
}

/// `½k2 b0 + (3/8)k4 b0² + (3/4)k4 sum_(k>=1) |b_k|²`.
pub fn idc_compact(b: &[Complex64], params: &RectennaParams) -> f64 {
    let Some(b0) = b.first() else { return 0.0 };
    let b0 = b0.re;
    let cross: f64 = b[1..].iter().map(|v| v.norm_sqr()).sum();
    0.5 * params.k2 * b0 + 0.375 * params.k4 * b0 * b0 + 0.75 * params.k4 * cross
}

/// Current for one user via the lag-product form.
pub fn idc(s: &Waveform, h: &[Complex64], params: &RectennaParams) -> f64 {
    idc_compact(&lag_products(&received(s, h)), params)
}

/// Time average of `k2 y² + k4 y⁴` for the passband signal
/// `y(t) = Re{sum_n x_n exp(j 2 pi (c + n) t / T)}` sampled uniformly over one
/// period `T`.
///
/// The carrier index `c = 4N` stands in for the physical carrier: it is high
/// enough that only the intermodulation products of the model survive
/// averaging, and the result does not depend on its exact value.
pub fn idc_time_oracle(s: &Waveform, h: &[Complex64], params: &RectennaParams, n_samples: usize) -> f64 {
    let x = received(s, h);
    let carrier = 4 * x.len();
    assert!(n_samples > 8 * (carrier + x.len()), "too few samples to resolve the fourth harmonic");
    let mut acc = 0.0;
    for m in 0..n_samples {
        let t = m as f64 / n_samples as f64;
        let y: f64 = x
            .iter()
            .enumerate()
            .map(|(i, xn)| (xn * Complex64::from_polar(1.0, 2.0 * PI * t * (carrier + i) as f64)).re)
            .sum();
        let y2 = y * y;
        acc += params.k2 * y2 + params.k4 * y2 * y2;
    }
    acc / n_samples as f64
}

/// Per-user currents.
pub fn user_currents(
    s: &Waveform,
    phases: &PhaseConfig,
    realization: &ChannelRealization,
    params: &RectennaParams,
) -> Vec<f64> {
    (0..realization.users())
        .map(|q| idc(s, &composite_channel(realization, phases, q), params))
        .collect()
}

/// `sum_q weight_q i_dc,q`.
pub fn weighted_sum_idc(
    s: &Waveform,
    phases: &PhaseConfig,
    realization: &ChannelRealization,
    params: &RectennaParams,
    weights: &[f64],
) -> f64 {
    assert_eq!(weights.len(), realization.users(), "one weight per user");
    (0..realization.users())
        .filter(|&q| weights[q] != 0.0)
        .map(|q| weights[q] * idc(s, &composite_channel(realization, phases, q), params))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ones(n: usize) -> Vec<Complex64> {
        vec![c(1.0, 0.0); n]
    }

    #[test]
    fn coefficients_from_diode() {
        let p = RectennaParams::from_diode(5e-6, 1.05, 25.86e-3, 50.0);
        assert!((p.k2 / 0.17 - 1.0).abs() < 0.005, "k2 = {}", p.k2);
        assert!((p.k4 / 957.25 - 1.0).abs() < 0.005, "k4 = {}", p.k4);
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(36.0), 3.981_071_705_534_973, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        assert!(SystemConfig { subcarriers: 0, ..SystemConfig::default() }.validate().is_err());
        assert!(SystemConfig { weights: vec![0.0], ..SystemConfig::default() }.validate().is_err());
        assert!(SystemConfig { users: 2, ..SystemConfig::default() }.validate().is_err());
        assert!(SystemConfig { epsilon: 0.0, ..SystemConfig::default() }.validate().is_err());
    }

    fn tiny_realization(direct: Complex64, incident: &[Complex64], reflected: &[Complex64]) -> ChannelRealization {
        let l = incident.len();
        ChannelRealization::new(
            DMatrix::from_element(1, 1, direct),
            DMatrix::from_row_slice(1, l, incident),
            vec![DMatrix::from_row_slice(1, l, reflected)],
        )
        .unwrap()
    }

    #[test]
    fn composite_constructive() {
        let r = tiny_realization(c(1.0, 0.0), &ones(2), &ones(2));
        let h = composite_channel(&r, &PhaseConfig::Flat(ones(2)), 0);
        assert!((h[0] - c(3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn composite_without_incident_path() {
        let r = tiny_realization(c(0.3, -0.2), &[c(0.0, 0.0); 3], &ones(3));
        let h = composite_channel(&r, &PhaseConfig::flat_from_angles(&[0.1, 2.0, -1.0]), 0);
        assert_eq!(h[0], c(0.3, -0.2));
    }

    #[test]
    fn composite_pure_reflection() {
        let r = tiny_realization(c(0.0, 0.0), &ones(1), &ones(1));
        let h = composite_channel(&r, &PhaseConfig::flat_from_angles(&[0.7]), 0);
        assert!((h[0] - Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
    }

    #[test]
    fn single_tone_current() {
        let p = RectennaParams::default();
        let s = Waveform::new(vec![c(2f64.sqrt(), 0.0)]);
        let v = idc_direct(&s, &ones(1), &p).unwrap();
        assert_relative_eq!(v, 1436.045, max_relative = 1e-12);
        assert_relative_eq!(idc_time_oracle(&s, &ones(1), &p, 10_000), 1436.045, max_relative = 1e-12);
    }

    #[test]
    fn two_tone_current() {
        let p = RectennaParams::default();
        let s = Waveform::new(ones(2));
        assert_relative_eq!(idc_direct(&s, &ones(2), &p).unwrap(), 2153.9825, max_relative = 1e-12);
        assert_relative_eq!(idc_compact(&[c(2.0, 0.0), c(1.0, 0.0)], &p), 2153.9825, max_relative = 1e-12);
    }

    #[test]
    fn zero_input() {
        let p = RectennaParams::default();
        let s = Waveform::new(vec![c(0.0, 0.0); 4]);
        assert_eq!(idc_direct(&s, &ones(4), &p).unwrap(), 0.0);
        assert_eq!(idc_time_oracle(&s, &ones(4), &p, 10_000), 0.0);
        assert_eq!(idc_compact(&[c(0.0, 0.0); 4], &p), 0.0);
    }

    #[test]
    fn compact_without_cross_terms() {
        let p = RectennaParams::default();
        let b0 = 0.37;
        let mut b = vec![c(0.0, 0.0); 5];
        b[0] = c(b0, 0.0);
        assert_relative_eq!(idc_compact(&b, &p), 0.5 * p.k2 * b0 + 0.375 * p.k4 * b0 * b0);
    }

    #[test]
    fn direct_rejects_large_n() {
        let s = Waveform::uniform(17, 1.0);
        assert!(idc_direct(&s, &ones(17), &RectennaParams::default()).is_err());
    }

    #[test]
    fn waveform_power() {
        let w = Waveform::uniform(8, 3.0);
        assert_relative_eq!(w.power(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(Waveform::single_tone(8, 3, 3.0).power(), 3.0, max_relative = 1e-14);
    }

    fn weights_realization() -> ChannelRealization {
        ChannelRealization::new(
            DMatrix::from_row_slice(2, 2, &[c(0.5, 0.1), c(-0.2, 0.3), c(0.1, 0.9), c(0.4, -0.4)]),
            DMatrix::from_row_slice(2, 1, &[c(0.3, 0.2), c(-0.5, 0.1)]),
            vec![
                DMatrix::from_row_slice(2, 1, &[c(0.2, 0.6), c(0.1, 0.1)]),
                DMatrix::from_row_slice(2, 1, &[c(-0.7, 0.2), c(0.3, -0.3)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn weighted_sum_properties() {
        let p = RectennaParams::default();
        let r = weights_realization();
        let s = Waveform::new(vec![c(0.8, 0.2), c(-0.3, 0.6)]);
        let phases = PhaseConfig::flat_from_angles(&[1.3]);
        let per_user = user_currents(&s, &phases, &r, &p);
        assert_relative_eq!(weighted_sum_idc(&s, &phases, &r, &p, &[1.0, 0.0]), per_user[0]);
        let base = weighted_sum_idc(&s, &phases, &r, &p, &[0.3, 0.7]);
        assert_relative_eq!(weighted_sum_idc(&s, &phases, &r, &p, &[0.6, 1.4]), 2.0 * base, max_relative = 1e-14);
        let single = r.select_users(&[1]);
        assert_relative_eq!(
            weighted_sum_idc(&s, &phases, &single, &p, &[1.0]),
            idc_direct(&s, &composite_channel(&r, &phases, 1), &p).unwrap(),
            max_relative = 1e-12
        );
    }

    fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), len)
    }

    fn instance() -> impl Strategy<Value = (Vec<Complex64>, Vec<Complex64>)> {
        (1usize..=8).prop_flat_map(|n| (complex_vec(n), complex_vec(n)))
    }

    proptest! {
        #[test]
        fn three_evaluations_agree((s, h) in instance()) {
            let p = RectennaParams::default();
            let s = Waveform::new(s);
            let direct = idc_direct(&s, &h, &p).unwrap();
            let compact = idc(&s, &h, &p);
            let oracle = idc_time_oracle(&s, &h, &p, 10_000);
            let scale = direct.abs().max(1e-300);
            prop_assert!((direct - compact).abs() <= 1e-9 * scale);
            prop_assert!((direct - oracle).abs() <= 1e-9 * scale);
            prop_assert!(direct >= 0.0);
        }

        #[test]
        fn common_phase_invariance((s, h) in instance(), alpha in 0.0f64..6.3) {
            let p = RectennaParams::default();
            let rot = Complex64::from_polar(1.0, alpha);
            let a = idc(&Waveform::new(s.clone()), &h, &p);
            let b = idc(&Waveform::new(s.iter().map(|v| v * rot).collect()), &h, &p);
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
        }

        #[test]
        fn scaling_by_real_factor((s, h) in instance(), factor in 0.1f64..3.0) {
            let p2 = RectennaParams { k4: 0.0, ..RectennaParams::default() };
            let p4 = RectennaParams { k2: 0.0, ..RectennaParams::default() };
            let w = Waveform::new(s.clone());
            let scaled = Waveform::new(s.iter().map(|v| v * factor).collect());
            let (a2, b2) = (idc(&w, &h, &p2), idc(&scaled, &h, &p2));
            let (a4, b4) = (idc(&w, &h, &p4), idc(&scaled, &h, &p4));
            prop_assert!((b2 - factor.powi(2) * a2).abs() <= 1e-10 * b2.max(1e-300));
            prop_assert!((b4 - factor.powi(4) * a4).abs() <= 1e-10 * b4.max(1e-300));
        }
    }
}
