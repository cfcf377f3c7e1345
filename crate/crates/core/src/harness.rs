//! Seeded Monte-Carlo experiment runner: configuration, trial execution,
//! aggregation and CSV / JSON output.
//!
//! Configuration files are TOML with the sections `[experiment]`,
//! `[system]`, `[layout]`, `[rectenna]` and `[channel]`. Every key is
//! optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{generate_realization, ChannelRealization, Layout, PowerDelayProfile};
use crate::error::{Error, Result};
use crate::optimize::{
    quantized_current, random_phases, refine_quantized, run_ass, run_mu_ff_from, run_mu_fs_from, run_no_irs,
    run_rand_phase, run_su_fs, AssMode, OptimizationResult, QuantizationScheme,
};
use crate::rectenna::{dbm_to_watts, PhaseConfig, RectennaParams, SystemConfig};
use crate::solvers::SdpOptions;

pub const CSV_HEADER: &str = "scenario,algorithm,sweep_name,sweep_value,trial,current_amps,iterations,converged,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "idc_vs_N")]
    IdcVsN,
    #[serde(rename = "idc_vs_L")]
    IdcVsL,
    #[serde(rename = "convergence")]
    Convergence,
    #[serde(rename = "bandwidth_sweep")]
    BandwidthSweep,
    #[serde(rename = "current_region")]
    CurrentRegion,
    #[serde(rename = "discrete_bits")]
    DiscreteBits,
    #[serde(rename = "layout_sweep")]
    LayoutSweep,
    #[serde(rename = "scaling_check")]
    ScalingCheck,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::IdcVsN => "idc_vs_N",
            Scenario::IdcVsL => "idc_vs_L",
            Scenario::Convergence => "convergence",
            Scenario::BandwidthSweep => "bandwidth_sweep",
            Scenario::CurrentRegion => "current_region",
            Scenario::DiscreteBits => "discrete_bits",
            Scenario::LayoutSweep => "layout_sweep",
            Scenario::ScalingCheck => "scaling_check",
        }
    }

    pub fn sweep_name(self) -> &'static str {
        match self {
            Scenario::IdcVsN => "N",
            Scenario::IdcVsL | Scenario::ScalingCheck => "L",
            Scenario::Convergence => "iteration",
            Scenario::BandwidthSweep => "bandwidth_hz",
            Scenario::CurrentRegion => "phi",
            Scenario::DiscreteBits => "bits",
            Scenario::LayoutSweep => "horizontal_m",
        }
    }

    fn integer_sweep(self) -> bool {
        matches!(
            self,
            Scenario::IdcVsN | Scenario::IdcVsL | Scenario::ScalingCheck | Scenario::Convergence | Scenario::DiscreteBits
        )
    }

    /// Scenarios whose sweep does not change the system: every sweep value
    /// is evaluated on the same realization and optimization run.
    fn evaluates_once(self) -> bool {
        matches!(self, Scenario::Convergence | Scenario::DiscreteBits)
    }

    /// The realization is shared across sweep values (the sweep only
    /// changes how it is used).
    fn shares_channel(self) -> bool {
        matches!(self, Scenario::Convergence | Scenario::DiscreteBits | Scenario::CurrentRegion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MuFf,
    MuFs,
    SuFs,
    NoIrs,
    RandPhase,
    Ass,
    AssNoIrs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MuFf => "mu_ff",
            Algorithm::MuFs => "mu_fs",
            Algorithm::SuFs => "su_fs",
            Algorithm::NoIrs => "no_irs",
            Algorithm::RandPhase => "rand_phase",
            Algorithm::Ass => "ass",
            Algorithm::AssNoIrs => "ass_no_irs",
        }
    }

    fn single_user(self) -> bool {
        matches!(self, Algorithm::SuFs | Algorithm::Ass | Algorithm::AssNoIrs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: Scenario,
    pub algorithms: Vec<Algorithm>,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Record wall time per algorithm call; when false `wall_ms` is 0.
    pub timing: bool,
    /// Discrete-phase scenario: re-optimize the waveform after quantizing.
    pub refine_quantized: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            scenario: Scenario::IdcVsN,
            algorithms: vec![Algorithm::MuFs, Algorithm::MuFf],
            sweep: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            trials: 100,
            seed: 0,
            timing: true,
            refine_quantized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub subcarriers: usize,
    pub elements: usize,
    pub users: usize,
    pub power_dbm: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Defaults to one per user.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub randomization_candidates: usize,
    pub sdp_tolerance: f64,
    pub sdp_max_iterations: usize,
}

impl Default for SystemSection {
    fn default() -> Self {
        let sys = SystemConfig::default();
        Self {
            subcarriers: sys.subcarriers,
            elements: sys.elements,
            users: sys.users,
            power_dbm: 36.0,
            carrier_hz: sys.carrier_hz,
            bandwidth_hz: sys.bandwidth_hz,
            weights: None,
            epsilon: sys.epsilon,
            max_iterations: sys.max_iterations,
            randomization_candidates: sys.randomization_candidates,
            sdp_tolerance: sys.sdp.tolerance,
            sdp_max_iterations: sys.sdp.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    pub horizontal_m: f64,
    pub vertical_m: f64,
    pub direct_m: f64,
    pub exponent_direct: f64,
    pub exponent_incident: f64,
    pub exponent_reflected: f64,
    pub ref_gain_db: f64,
    pub ref_distance_m: f64,
}

impl Default for LayoutSection {
    fn default() -> Self {
        let l = Layout::default();
        Self {
            horizontal_m: l.horizontal_m,
            vertical_m: l.vertical_m,
            direct_m: l.direct_m,
            exponent_direct: l.exponent_direct,
            exponent_incident: l.exponent_incident,
            exponent_reflected: l.exponent_reflected,
            ref_gain_db: -35.0,
            ref_distance_m: l.ref_distance_m,
        }
    }
}

impl LayoutSection {
    fn layout(&self) -> Layout {
        Layout {
            horizontal_m: self.horizontal_m,
            vertical_m: self.vertical_m,
            direct_m: self.direct_m,
            exponent_direct: self.exponent_direct,
            exponent_incident: self.exponent_incident,
            exponent_reflected: self.exponent_reflected,
            ref_gain: 10f64.powf(self.ref_gain_db / 10.0),
            ref_distance_m: self.ref_distance_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectennaSection {
    pub k2: f64,
    pub k4: f64,
}

impl Default for RectennaSection {
    fn default() -> Self {
        let p = RectennaParams::default();
        Self { k2: p.k2, k4: p.k4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// `model_d`, `single_tap`, or a path to a `delay_ns power_db` table
    /// (relative paths resolve against the config file's directory).
    pub profile: String,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { profile: "model_d".into() }
    }
}

/// The on-disk configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentSection,
    pub system: SystemSection,
    pub layout: LayoutSection,
    pub rectenna: RectennaSection,
    pub channel: ChannelSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub file: ConfigFile,
    pub system: SystemConfig,
    pub layout: Layout,
    pub params: RectennaParams,
    pub profile: PowerDelayProfile,
}

impl ExperimentSpec {
    /// Validates `file`; profile paths resolve against `base_dir`.
    pub fn new(file: ConfigFile, base_dir: &Path) -> Result<Self> {
        let exp = &file.experiment;
        if exp.trials == 0 {
            return Err(Error::Config("experiment.trials must be at least 1".into()));
        }
        if exp.sweep.is_empty() {
            return Err(Error::Config("experiment.sweep must not be empty".into()));
        }
        if exp.algorithms.is_empty() {
            return Err(Error::Config("experiment.algorithms must not be empty".into()));
        }
        let mut seen = Vec::new();
        for a in &exp.algorithms {
            if seen.contains(a) {
                return Err(Error::Config(format!("algorithm {} listed twice", a.name())));
            }
            seen.push(*a);
        }
        let s = &file.system;
        let system = SystemConfig {
            subcarriers: s.subcarriers,
            elements: s.elements,
            users: s.users,
            power_w: dbm_to_watts(s.power_dbm),
            carrier_hz: s.carrier_hz,
            bandwidth_hz: s.bandwidth_hz,
            weights: s.weights.clone().unwrap_or_else(|| vec![1.0; s.users]),
            epsilon: s.epsilon,
            max_iterations: s.max_iterations,
            randomization_candidates: s.randomization_candidates,
            sdp: SdpOptions { tolerance: s.sdp_tolerance, max_iterations: s.sdp_max_iterations },
        };
        let params = RectennaParams { k2: file.rectenna.k2, k4: file.rectenna.k4, ..RectennaParams::default() };
        params.validate().map_err(config_error("rectenna"))?;
        let profile = match file.channel.profile.as_str() {
            "model_d" => PowerDelayProfile::model_d(),
            "single_tap" => PowerDelayProfile::single_tap(),
            path => PowerDelayProfile::load(&base_dir.join(path))?,
        };
        let spec = Self { layout: file.layout.layout(), file, system, params, profile };
        if spec.file.experiment.scenario == Scenario::CurrentRegion {
            if spec.system.users != 2 {
                return Err(Error::Config("current_region needs system.users = 2".into()));
            }
        } else {
            spec.system.validate().map_err(config_error("system"))?;
        }
        if spec.system.users != 1 {
            if let Some(a) = spec.file.experiment.algorithms.iter().find(|a| a.single_user()) {
                return Err(Error::Config(format!("algorithm {} needs system.users = 1", a.name())));
            }
        }
        spec.layout.validate().map_err(config_error("layout"))?;
        for &v in &spec.file.experiment.sweep {
            spec.check_sweep_value(v)?;
            let (sys, layout) = spec.point(v);
            sys.validate().map_err(config_error("system"))?;
            layout.validate().map_err(config_error("layout"))?;
        }
        Ok(spec)
    }

    pub fn scenario(&self) -> Scenario {
        self.file.experiment.scenario
    }

    fn check_sweep_value(&self, v: f64) -> Result<()> {
        let scenario = self.scenario();
        let name = scenario.sweep_name();
        let bad = |why: &str| Err(Error::Config(format!("sweep value {v} for {name}: {why}")));
        if !v.is_finite() {
            return bad("must be finite");
        }
        if scenario.integer_sweep() && (v.fract() != 0.0 || v < 0.0) {
            return bad("must be a non-negative integer");
        }
        match scenario {
            Scenario::IdcVsN | Scenario::IdcVsL | Scenario::ScalingCheck if v < 1.0 => bad("must be at least 1"),
            Scenario::DiscreteBits if v > 16.0 => bad("at most 16 bits"),
            Scenario::BandwidthSweep | Scenario::LayoutSweep if v <= 0.0 => bad("must be positive"),
            _ => Ok(()),
        }
    }

    /// System and layout at one sweep value.
    pub fn point(&self, value: f64) -> (SystemConfig, Layout) {
        let mut sys = self.system.clone();
        let mut layout = self.layout.clone();
        match self.scenario() {
            Scenario::IdcVsN => sys.subcarriers = value as usize,
            Scenario::IdcVsL | Scenario::ScalingCheck => sys.elements = value as usize,
            Scenario::BandwidthSweep => sys.bandwidth_hz = value,
            Scenario::LayoutSweep => layout.horizontal_m = value,
            Scenario::CurrentRegion => sys.weights = vec![value.cos().powi(2), value.sin().powi(2)],
            Scenario::Convergence | Scenario::DiscreteBits => {}
        }
        (sys, layout)
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.file.to_toml().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn config_error(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Config(format!("[{section}] {e}"))
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let file = ConfigFile::parse(&text)?;
    ExperimentSpec::new(file, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum TrialIndex {
    Trial(usize),
    #[serde(serialize_with = "aggregate_label")]
    Aggregate,
}

fn aggregate_label<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("AGGREGATE")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub algorithm: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub trial: TrialIndex,
    /// NaN for a failed trial.
    pub current_amps: f64,
    /// Mean over trials on aggregate rows.
    pub iterations: f64,
    /// On aggregate rows: every included trial converged.
    pub converged: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub config_hash: String,
    pub version: String,
    /// Trial failures as `(sweep value, trial, algorithm, message)`.
    pub failures: Vec<(f64, usize, String, String)>,
    /// Log-log slope of the aggregate current against the sweep value, per
    /// algorithm (scaling check only).
    pub slopes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub metadata: Metadata,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!("unknown format '{other}', expected csv or json"))),
        }
    }
}

const PURPOSE_CHANNEL: u64 = 0;
const PURPOSE_INIT: u64 = 1;
const PURPOSE_FF: u64 = 2;
const PURPOSE_RAND: u64 = 3;

/// Independent ChaCha stream keyed by the full tuple.
pub fn trial_rng(seed: u64, sweep_index: u64, trial: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, sweep_index, trial, purpose]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

struct Outcome {
    result: Result<OptimizationResult>,
    wall_ms: f64,
}

fn run_algorithm(
    algorithm: Algorithm,
    realization: &ChannelRealization,
    config: &SystemConfig,
    params: &RectennaParams,
    init: &[Complex64],
    stream: impl Fn(u64) -> ChaCha8Rng,
    timing: bool,
) -> Outcome {
    let start = Instant::now();
    let result = match algorithm {
        Algorithm::MuFf => run_mu_ff_from(realization, config, params, init.to_vec(), &mut stream(PURPOSE_FF)),
        Algorithm::MuFs => run_mu_fs_from(realization, config, params, PhaseConfig::Flat(init.to_vec())),
        Algorithm::SuFs => run_su_fs(realization, config, params),
        Algorithm::NoIrs => run_no_irs(realization, config, params),
        Algorithm::RandPhase => run_rand_phase(realization, config, params, &mut stream(PURPOSE_RAND)),
        Algorithm::Ass => run_ass(realization, config, params, AssMode::Aligned),
        Algorithm::AssNoIrs => run_ass(realization, config, params, AssMode::NoIrs),
    };
    let wall_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    Outcome { result, wall_ms }
}

struct TrialRow {
    sweep_index: usize,
    trial: usize,
    row: ResultRow,
    failure: Option<String>,
}

/// Runs every algorithm for one `(sweep index, trial)` task. Scenarios that
/// evaluate once produce rows for every sweep value.
fn run_task(spec: &ExperimentSpec, sweep_index: usize, trial: usize) -> Vec<TrialRow> {
    let exp = &spec.file.experiment;
    let scenario = exp.scenario;
    let value = exp.sweep[sweep_index];
    let (config, layout) = spec.point(value);
    let stream_index = if scenario.shares_channel() { 0 } else { sweep_index as u64 };
    let stream = |purpose| trial_rng(exp.seed, stream_index, trial as u64, purpose);
    let base = |algorithm: String, sweep_index: usize, current: f64, iterations: usize, converged: bool, wall_ms: f64| {
        TrialRow {
            sweep_index,
            trial,
            row: ResultRow {
                scenario: scenario.name().into(),
                algorithm,
                sweep_name: scenario.sweep_name().into(),
                sweep_value: exp.sweep[sweep_index],
                trial: TrialIndex::Trial(trial),
                current_amps: current,
                iterations: iterations as f64,
                converged,
                wall_ms,
            },
            failure: None,
        }
    };
    let sweep_indices: Vec<usize> = if scenario.evaluates_once() { (0..exp.sweep.len()).collect() } else { vec![sweep_index] };
    let labels = |a: Algorithm| -> Vec<String> {
        if scenario == Scenario::CurrentRegion {
            vec![format!("{}@user1", a.name()), format!("{}@user2", a.name())]
        } else {
            vec![a.name().to_string()]
        }
    };

    let realization = generate_realization(&config, &layout, &spec.profile, &mut stream(PURPOSE_CHANNEL));
    let init = random_phases(config.elements, &mut stream(PURPOSE_INIT));
    let mut rows = Vec::new();
    for &algorithm in &exp.algorithms {
        let outcome = match &realization {
            Ok(r) => run_algorithm(algorithm, r, &config, &spec.params, &init, stream, exp.timing),
            Err(e) => Outcome { result: Err(Error::invalid(e.to_string())), wall_ms: 0.0 },
        };
        let wall = outcome.wall_ms;
        let result = match outcome.result {
            Ok(res) => res,
            Err(e) => {
                for &si in &sweep_indices {
                    for label in labels(algorithm) {
                        let mut row = base(label, si, f64::NAN, 0, false, wall);
                        row.failure = Some(e.to_string());
                        rows.push(row);
                    }
                }
                continue;
            }
        };
        let r = realization.as_ref().expect("algorithms only run on a realization");
        match scenario {
            Scenario::Convergence => {
                for &si in &sweep_indices {
                    let it = (exp.sweep[si] as usize).min(result.trace.len() - 1);
                    rows.push(base(algorithm.name().into(), si, result.trace[it], result.iterations, result.converged, wall));
                }
            }
            Scenario::DiscreteBits => {
                for &si in &sweep_indices {
                    let bits = exp.sweep[si] as u32;
                    let row = if bits == 0 {
                        Ok((result.current(), result.iterations, result.converged))
                    } else {
                        let scheme = QuantizationScheme::new(bits).expect("bits validated at load");
                        if exp.refine_quantized {
                            refine_quantized(r, &result, &scheme, &config, &spec.params)
                                .map(|q| (q.current(), result.iterations + q.iterations, result.converged && q.converged))
                        } else {
                            Ok((quantized_current(r, &result, &scheme, &config.weights, &spec.params), result.iterations, result.converged))
                        }
                    };
                    rows.push(match row {
                        Ok((cur, it, conv)) => base(algorithm.name().into(), si, cur, it, conv, wall),
                        Err(e) => {
                            let mut row = base(algorithm.name().into(), si, f64::NAN, 0, false, wall);
                            row.failure = Some(e.to_string());
                            row
                        }
                    });
                }
            }
            Scenario::CurrentRegion => {
                for (label, current) in labels(algorithm).into_iter().zip(&result.user_currents) {
                    rows.push(base(label, sweep_index, *current, result.iterations, result.converged, wall));
                }
            }
            _ => rows.push(base(algorithm.name().into(), sweep_index, result.current(), result.iterations, result.converged, wall)),
        }
    }
    rows
}

/// Runs the experiment on `parallelism` worker threads. Output depends only
/// on the spec, never on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, parallelism: usize) -> Result<ExperimentResult> {
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let exp = &spec.file.experiment;
    let sweep_tasks = if exp.scenario.evaluates_once() { 1 } else { exp.sweep.len() };
    let tasks: Vec<(usize, usize)> = (0..sweep_tasks).flat_map(|s| (0..exp.trials).map(move |t| (s, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let mut trial_rows: Vec<TrialRow> =
        pool.install(|| tasks.par_iter().flat_map_iter(|&(s, t)| run_task(spec, s, t)).collect());
    trial_rows.sort_by_key(|r| (r.sweep_index, r.trial));

    let mut rows = Vec::with_capacity(trial_rows.len() + exp.sweep.len() * exp.algorithms.len());
    let mut failures = Vec::new();
    let mut start = 0;
    while start < trial_rows.len() {
        let si = trial_rows[start].sweep_index;
        let end = start + trial_rows[start..].iter().take_while(|r| r.sweep_index == si).count();
        let group = &trial_rows[start..end];
        let mut labels: Vec<&str> = Vec::new();
        for r in group {
            if !labels.contains(&r.row.algorithm.as_str()) {
                labels.push(&r.row.algorithm);
            }
            if let Some(msg) = &r.failure {
                failures.push((r.row.sweep_value, r.trial, r.row.algorithm.clone(), msg.clone()));
            }
        }
        rows.extend(group.iter().map(|r| r.row.clone()));
        for label in labels {
            let ok: Vec<&ResultRow> =
                group.iter().map(|r| &r.row).filter(|r| r.algorithm == label && r.current_amps.is_finite()).collect();
            let mean = |f: fn(&ResultRow) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            rows.push(ResultRow {
                scenario: exp.scenario.name().into(),
                algorithm: label.into(),
                sweep_name: exp.scenario.sweep_name().into(),
                sweep_value: exp.sweep[si],
                trial: TrialIndex::Aggregate,
                current_amps: mean(|r| r.current_amps),
                iterations: mean(|r| r.iterations),
                converged: !ok.is_empty() && ok.iter().all(|r| r.converged),
                wall_ms: mean(|r| r.wall_ms),
            });
        }
        start = end;
    }

    let slopes = if exp.scenario == Scenario::ScalingCheck { log_log_slopes(&rows) } else { BTreeMap::new() };
    Ok(ExperimentResult {
        metadata: Metadata {
            scenario: exp.scenario.name().into(),
            seed: exp.seed,
            trials: exp.trials,
            config_hash: spec.config_hash(),
            version: env!("CARGO_PKG_VERSION").into(),
            failures,
            slopes,
        },
        rows,
    })
}

/// Least-squares slope of `ln(current)` against `ln(sweep value)` over the
/// aggregate rows of each algorithm.
pub fn log_log_slopes(rows: &[ResultRow]) -> BTreeMap<String, f64> {
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.trial == TrialIndex::Aggregate && r.current_amps > 0.0 && r.sweep_value > 0.0) {
        points.entry(r.algorithm.clone()).or_default().push((r.sweep_value.ln(), r.current_amps.ln()));
    }
    points.into_iter().filter(|(_, p)| p.len() >= 2).map(|(a, p)| (a, linear_fit(&p).0)).collect()
}

/// Least-squares line through `points`: `(slope, intercept, r_squared)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn float(v: f64) -> String {
    format!("{v:.11e}")
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let integral = |name: &str| matches!(name, "N" | "L" | "iteration" | "bits");
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let sweep = if integral(&r.sweep_name) { format!("{}", r.sweep_value as u64) } else { float(r.sweep_value) };
            let (trial, iterations) = match r.trial {
                TrialIndex::Trial(t) => (t.to_string(), format!("{}", r.iterations as u64)),
                TrialIndex::Aggregate => ("AGGREGATE".to_string(), float(r.iterations)),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.algorithm,
                r.sweep_name,
                sweep,
                trial,
                float(r.current_amps),
                iterations,
                r.converged,
                float(r.wall_ms)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result is always serializable")
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.trial == TrialIndex::Aggregate)
    }

    /// Aggregate current for `(algorithm, sweep value)`.
    pub fn aggregate(&self, algorithm: &str, sweep_value: f64) -> Option<f64> {
        self.aggregates().find(|r| r.algorithm == algorithm && r.sweep_value == sweep_value).map(|r| r.current_amps)
    }
}

pub fn write_results(result: &ExperimentResult, path: &Path, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => result.to_csv(),
        OutputFormat::Json => result.to_json(),
    };
    std::fs::write(path, text).map_err(|source| Error::Io { path: PathBuf::from(path), source })
}
