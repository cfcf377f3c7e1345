//! Alternating-optimization drivers, baselines, discrete-phase quantization
//! and the large-scale current approximation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::beamform::{ff_step, fs_ewu_step, su_fs_phases, EWU_MAX_SWEEPS};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::rectenna::{composite_channel, idc, PhaseConfig, RectennaParams, SystemConfig, Waveform};
use crate::solvers::SdpWarmStart;
use crate::waveform::{all_lags, assemble_su_waveform, su_power_allocation, waveform_step};

/// Relative slack allowed when checking that a trace never decreases.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub waveform: Waveform,
    pub phases: PhaseConfig,
    /// Weighted-sum current before the first iteration and after each one.
    pub trace: Vec<f64>,
    /// Linearized waveform objective `s^H K3 s` reached by each iteration
    /// (negative; empty for closed-form algorithms).
    pub surrogate_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub user_currents: Vec<f64>,
    /// Iterations (1-based) whose flat-IRS step had to sample candidates.
    pub randomized_iterations: Vec<usize>,
}

impl OptimizationResult {
    pub fn current(&self) -> f64 {
        *self.trace.last().expect("trace always holds the initial value")
    }

    /// True when no trace step falls by more than [`MONOTONE_SLACK`]
    /// relative, ignoring the listed randomized iterations.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).enumerate().all(|(i, w)| {
            self.randomized_iterations.contains(&(i + 1)) || w[1] >= w[0] - MONOTONE_SLACK * w[0].abs()
        })
    }
}

fn relative_change(current: f64, previous: f64) -> f64 {
    (current - previous).abs() / current.abs().max(1e-30)
}

fn weighted(channels: &[Vec<Complex64>], weights: &[f64], s: &Waveform, params: &RectennaParams) -> f64 {
    channels.iter().zip(weights).filter(|(_, w)| **w != 0.0).map(|(h, w)| w * idc(s, h, params)).sum()
}

fn channels_for(realization: &ChannelRealization, phases: &PhaseConfig) -> Vec<Vec<Complex64>> {
    (0..realization.users()).map(|q| composite_channel(realization, phases, q)).collect()
}

fn direct_channels(realization: &ChannelRealization) -> Vec<Vec<Complex64>> {
    (0..realization.users()).map(|q| realization.direct_row(q)).collect()
}

/// Uniformly random phasors in `[0, 2 pi)`.
pub fn random_phases<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Complex64> {
    (0..count).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))).collect()
}

fn check_dims(realization: &ChannelRealization, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    let dims = (realization.users(), realization.subcarriers(), realization.elements());
    if dims != (config.users, config.subcarriers, config.elements) {
        return Err(Error::invalid(format!(
            "realization has (K, N, L) = {dims:?}, config expects ({}, {}, {})",
            config.users, config.subcarriers, config.elements
        )));
    }
    Ok(())
}

struct WaveformLoop {
    waveform: Waveform,
    trace: Vec<f64>,
    surrogate_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Waveform-only SCA iterations on fixed channels.
fn waveform_loop(channels: &[Vec<Complex64>], config: &SystemConfig, params: &RectennaParams) -> WaveformLoop {
    let mut s = Waveform::uniform(config.subcarriers, config.power_w);
    let mut value = weighted(channels, &config.weights, &s, params);
    let mut trace = vec![value];
    let mut surrogate_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let lags = all_lags(channels, &s);
        let step = waveform_step(channels, &lags, &config.weights, config.power_w, params, &s);
        s = step.waveform;
        let next = weighted(channels, &config.weights, &s, params);
        surrogate_trace.push(surrogate(channels, &lags, config, params, &s));
        trace.push(next);
        let change = relative_change(next, value);
        value = next;
        if step.degenerate || change <= config.epsilon {
            converged = true;
            break;
        }
    }
    WaveformLoop { waveform: s, trace, surrogate_trace, iterations, converged }
}

fn surrogate(
    channels: &[Vec<Complex64>],
    lags: &[Vec<Complex64>],
    config: &SystemConfig,
    params: &RectennaParams,
    s: &Waveform,
) -> f64 {
    let k3 = crate::quartic::build_k3(channels, lags, &config.weights, params);
    crate::waveform::surrogate_value(&k3, s)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    realization: &ChannelRealization,
    phases: PhaseConfig,
    waveform: Waveform,
    params: &RectennaParams,
    trace: Vec<f64>,
    surrogate_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    randomized_iterations: Vec<usize>,
) -> OptimizationResult {
    let user_currents = channels_for(realization, &phases).iter().map(|h| idc(&waveform, h, params)).collect();
    OptimizationResult { waveform, phases, trace, surrogate_trace, iterations, converged, user_currents, randomized_iterations }
}

/// Alternating optimization for the flat IRS from random initial phases.
pub fn run_mu_ff<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let init = random_phases(config.elements, rng);
    run_mu_ff_from(realization, config, params, init, rng)
}

/// Alternating optimization for the flat IRS from the given phases and a
/// uniform-power waveform: SDP phase step, then waveform step, until the
/// relative change of the weighted-sum current is at most `epsilon`.
pub fn run_mu_ff_from<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    init: Vec<Complex64>,
    rng: &mut R,
) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    let mut theta = init;
    let mut s = Waveform::uniform(config.subcarriers, config.power_w);
    let mut value = weighted(&channels_for(realization, &PhaseConfig::Flat(theta.clone())), &config.weights, &s, params);
    let mut trace = vec![value];
    let mut surrogate_trace = Vec::new();
    let mut randomized = Vec::new();
    let mut warm: Option<SdpWarmStart> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let step = ff_step(realization, &s, &theta, config, params, rng, warm.as_ref())?;
        if step.randomized && !step.kept_previous {
            randomized.push(iterations);
        }
        theta = step.phases;
        warm = Some(step.warm);
        let channels = channels_for(realization, &PhaseConfig::Flat(theta.clone()));
        let lags = all_lags(&channels, &s);
        s = waveform_step(&channels, &lags, &config.weights, config.power_w, params, &s).waveform;
        surrogate_trace.push(surrogate(&channels, &lags, config, params, &s));
        let next = weighted(&channels, &config.weights, &s, params);
        trace.push(next);
        let change = relative_change(next, value);
        value = next;
        if change <= config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(finish(realization, PhaseConfig::Flat(theta), s, params, trace, surrogate_trace, iterations, converged, randomized))
}

/// Alternating optimization for the frequency-selective IRS from random
/// initial phases.
pub fn run_mu_fs<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let init = random_phases(config.elements, rng);
    run_mu_fs_from(realization, config, params, PhaseConfig::Flat(init))
}

/// Alternating optimization for the frequency-selective IRS: element-wise
/// updating, then a waveform step, per iteration. A flat `init`
/// is replicated across subcarriers.
pub fn run_mu_fs_from(
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    init: PhaseConfig,
) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    let mut phases = init.to_selective(config.subcarriers);
    let mut s = Waveform::uniform(config.subcarriers, config.power_w);
    let mut value =
        weighted(&channels_for(realization, &PhaseConfig::Selective(phases.clone())), &config.weights, &s, params);
    let mut trace = vec![value];
    let mut surrogate_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let step = fs_ewu_step(realization, &s, &phases, &config.weights, params, EWU_MAX_SWEEPS);
        phases = step.phases;
        s = step.waveform;
        let channels = channels_for(realization, &PhaseConfig::Selective(phases.clone()));
        let lags = all_lags(&channels, &s);
        s = waveform_step(&channels, &lags, &config.weights, config.power_w, params, &s).waveform;
        surrogate_trace.push(surrogate(&channels, &lags, config, params, &s));
        let next = weighted(&channels, &config.weights, &s, params);
        trace.push(next);
        let change = relative_change(next, value);
        value = next;
        if change <= config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(finish(realization, PhaseConfig::Selective(phases), s, params, trace, surrogate_trace, iterations, converged, Vec::new()))
}

/// Single-user frequency-selective design: closed-form alignment followed by
/// the power allocation loop. Consumes no randomness.
pub fn run_su_fs(realization: &ChannelRealization, config: &SystemConfig, params: &RectennaParams) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    assert_eq!(realization.users(), 1, "single-user design needs exactly one user");
    let (_, phases) = su_fs_phases(realization);
    let h = composite_channel(realization, &phases, 0);
    let a: Vec<f64> = h.iter().map(|v| v.norm()).collect();
    let alloc = su_power_allocation(&a, config.power_w, params, config.epsilon, config.max_iterations)?;
    let s = assemble_su_waveform(&alloc.p, &h);
    let w = config.weights[0];
    let trace = alloc.trace.iter().map(|v| v * w).collect();
    Ok(finish(realization, phases, s, params, trace, Vec::new(), alloc.iterations, alloc.converged, Vec::new()))
}

/// Conventional design without IRS: waveform optimization on the direct
/// channels only.
pub fn run_no_irs(realization: &ChannelRealization, config: &SystemConfig, params: &RectennaParams) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    let channels = direct_channels(realization);
    let out = waveform_loop(&channels, config, params);
    let user_currents = channels.iter().map(|h| idc(&out.waveform, h, params)).collect();
    Ok(OptimizationResult {
        waveform: out.waveform,
        phases: PhaseConfig::Flat(vec![Complex64::new(1.0, 0.0); config.elements]),
        trace: out.trace,
        surrogate_trace: out.surrogate_trace,
        iterations: out.iterations,
        converged: out.converged,
        user_currents,
        randomized_iterations: Vec::new(),
    })
}

/// Random flat phases, then waveform optimization on the resulting channel.
pub fn run_rand_phase<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    rng: &mut R,
) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    let phases = PhaseConfig::Flat(random_phases(config.elements, rng));
    let channels = channels_for(realization, &phases);
    let out = waveform_loop(&channels, config, params);
    Ok(finish(realization, phases, out.waveform, params, out.trace, out.surrogate_trace, out.iterations, out.converged, Vec::new()))
}

/// Channel seen by the adaptive single-sinewave baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssMode {
    /// Closed-form frequency-selective alignment first.
    Aligned,
    /// Direct channel only.
    NoIrs,
}

/// Adaptive single sinewave: all power on the tone with the largest channel
/// magnitude (first on ties), evaluated with the nonlinear model.
pub fn run_ass(realization: &ChannelRealization, config: &SystemConfig, params: &RectennaParams, mode: AssMode) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    assert_eq!(realization.users(), 1, "single-sinewave baseline needs exactly one user");
    let phases = match mode {
        AssMode::Aligned => su_fs_phases(realization).1,
        AssMode::NoIrs => PhaseConfig::Flat(vec![Complex64::new(1.0, 0.0); config.elements]),
    };
    let h = match mode {
        AssMode::Aligned => composite_channel(realization, &phases, 0),
        AssMode::NoIrs => realization.direct_row(0),
    };
    let best = strongest_tone(&h);
    let mut p = vec![0.0; h.len()];
    p[best] = (2.0 * config.power_w).sqrt();
    let s = if h[best].norm() > 0.0 { assemble_su_waveform(&p, &h) } else { Waveform::single_tone(h.len(), best, config.power_w) };
    let current = config.weights[0] * idc(&s, &h, params);
    Ok(OptimizationResult {
        waveform: s,
        phases,
        trace: vec![current],
        surrogate_trace: Vec::new(),
        iterations: 0,
        converged: true,
        user_currents: vec![current / config.weights[0]],
        randomized_iterations: Vec::new(),
    })
}

/// Index of the largest `|h_n|`, first on ties.
pub fn strongest_tone(h: &[Complex64]) -> usize {
    let mut best = 0;
    for (i, v) in h.iter().enumerate() {
        if v.norm() > h[best].norm() {
            best = i;
        }
    }
    best
}

/// Equally spaced phase set with `2^bits` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationScheme {
    bits: u32,
}

impl QuantizationScheme {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::invalid(format!("resolution must be 1..=16 bits, got {bits}")));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.levels() as f64
    }

    /// Nearest level on the circle; exact ties go to the smaller level.
    pub fn quantize_angle(&self, angle: f64) -> f64 {
        let levels = self.levels();
        let k = angle.rem_euclid(2.0 * PI) / self.step();
        let lower = (k.floor() as usize) % levels;
        let upper = (lower + 1) % levels;
        let frac = k - k.floor();
        let index = if (frac - 0.5).abs() <= 1e-12 {
            lower.min(upper)
        } else if frac > 0.5 {
            upper
        } else {
            lower
        };
        index as f64 * self.step()
    }

    pub fn quantize_phasor(&self, v: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.quantize_angle(v.arg()))
    }
}

/// Maps every phase to its nearest level.
pub fn quantize_phases(phases: &PhaseConfig, scheme: &QuantizationScheme) -> PhaseConfig {
    match phases {
        PhaseConfig::Flat(t) => PhaseConfig::Flat(t.iter().map(|v| scheme.quantize_phasor(*v)).collect()),
        PhaseConfig::Selective(m) => PhaseConfig::Selective(m.map(|v| scheme.quantize_phasor(v))),
    }
}

/// Current of `result`'s waveform after quantizing its phases.
pub fn quantized_current(
    realization: &ChannelRealization,
    result: &OptimizationResult,
    scheme: &QuantizationScheme,
    weights: &[f64],
    params: &RectennaParams,
) -> f64 {
    let q = quantize_phases(&result.phases, scheme);
    weighted(&channels_for(realization, &q), weights, &result.waveform, params)
}

/// Waveform-only re-optimization with quantized phases held fixed.
pub fn refine_quantized(
    realization: &ChannelRealization,
    result: &OptimizationResult,
    scheme: &QuantizationScheme,
    config: &SystemConfig,
    params: &RectennaParams,
) -> Result<OptimizationResult> {
    check_dims(realization, config)?;
    let phases = quantize_phases(&result.phases, scheme);
    let channels = channels_for(realization, &phases);
    let out = waveform_loop(&channels, config, params);
    Ok(finish(realization, phases, out.waveform, params, out.trace, out.surrogate_trace, out.iterations, out.converged, Vec::new()))
}

/// Large-scale approximation
/// `k2 P Λ + (3/2) k4 P² Λ² + 3 k4 P² Λ² N` with `Λ = Λd + Λi Λr L²`.
pub fn large_scale_idc(
    lambda_d: f64,
    lambda_i: f64,
    lambda_r: f64,
    elements: usize,
    subcarriers: usize,
    power_w: f64,
    params: &RectennaParams,
) -> f64 {
    let l = elements as f64;
    let lambda = lambda_d + lambda_i * lambda_r * l * l;
    let p2 = power_w * power_w * lambda * lambda;
    params.k2 * power_w * lambda + 1.5 * params.k4 * p2 + 3.0 * params.k4 * p2 * subcarriers as f64
}

/// Builds a selective configuration from an `N x L` angle matrix.
pub fn selective_from_angles(angles: &DMatrix<f64>) -> PhaseConfig {
    PhaseConfig::Selective(angles.map(|a| Complex64::from_polar(1.0, a)))
}
