//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wptirs_core::channel::generate_realization;
use wptirs_core::harness::{run_experiment, ConfigFile, ExperimentResult, ExperimentSpec, TrialIndex};
use wptirs_core::optimize::{random_phases, run_mu_ff_from, run_mu_fs_from, run_su_fs};
use wptirs_core::rectenna::{composite_channel, idc_compact, idc_direct, idc_time_oracle, lag_products, received};
use wptirs_core::solvers::{hermitian_eigen, solve_unit_diag_sdp};
use wptirs_core::{
    ChannelRealization, Complex64, Layout, PhaseConfig, PowerDelayProfile, RectennaParams, SdpOptions, SystemConfig,
    Waveform,
};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn config(k: usize, n: usize, l: usize) -> SystemConfig {
    SystemConfig { users: k, subcarriers: n, elements: l, weights: vec![1.0; k], ..SystemConfig::default() }
}

fn realization(cfg: &SystemConfig, layout: &Layout, seed: u64) -> ChannelRealization {
    generate_realization(cfg, layout, &PowerDelayProfile::model_d(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget_s: u64, detail: String) -> Outcome {
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(budget_s), format!("{detail}; {:.1}s of {budget_s}s budget", elapsed.as_secs_f64()))
}

fn harness(text: &str) -> ExperimentResult {
    let spec = ExperimentSpec::new(ConfigFile::parse(text).unwrap(), Path::new(".")).unwrap();
    run_experiment(&spec, 1).unwrap()
}

fn trial_currents(result: &ExperimentResult, algorithm: &str, sweep_value: f64) -> Vec<f64> {
    result
        .rows
        .iter()
        .filter(|r| r.algorithm == algorithm && r.sweep_value == sweep_value && r.trial != TrialIndex::Aggregate)
        .map(|r| r.current_amps)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let params = RectennaParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for instance in 0..200 {
        let (k, n, l) = (rng.random_range(1..=2), rng.random_range(1..=8), rng.random_range(1..=4));
        let cfg = config(k, n, l);
        let r = realization(&cfg, &Layout::default(), 1000 + instance);
        let phases = if rng.random_bool(0.5) {
            PhaseConfig::Flat(random_phases(l, &mut rng))
        } else {
            PhaseConfig::Selective(DMatrix::from_fn(n, l, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))))
        };
        let s = Waveform::new((0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
        for q in 0..k {
            let h = composite_channel(&r, &phases, q);
            let direct = idc_direct(&s, &h, &params).map_err(|e| e.to_string())?;
            let compact = idc_compact(&lag_products(&received(&s, &h)), &params);
            let time = idc_time_oracle(&s, &h, &params, 100_000);
            worst = worst.max(rel(direct, compact)).max(rel(direct, time)).max(rel(compact, time));
        }
    }
    if worst > 1e-6 {
        return Err(format!("worst relative disagreement {worst:.2e} > 1e-6"));
    }
    within_budget(start, 60, format!("200 instances, worst relative disagreement {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let params = RectennaParams::default();
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut randomized = 0;
    let mut max_iterations = 0;
    for n in [4, 16] {
        for l in [10, 20] {
            for k in [1, 2] {
                let cfg = config(k, n, l);
                for trial in 0..100u64 {
                    let seed = 2_000_000 + 10_000 * n as u64 + 100 * l as u64 + 10 * k as u64 * 1000 + trial;
                    let r = realization(&cfg, &Layout::default(), seed);
                    let init = random_phases(l, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a));
                    let mut results = vec![
                        ("ff", run_mu_ff_from(&r, &cfg, &params, init.clone(), &mut ChaCha8Rng::seed_from_u64(seed))),
                        ("fs", run_mu_fs_from(&r, &cfg, &params, PhaseConfig::Flat(init))),
                    ];
                    if k == 1 {
                        results.push(("su", run_su_fs(&r, &cfg, &params)));
                    }
                    for (name, res) in results {
                        runs += 1;
                        match res {
                            Ok(out) => {
                                randomized += out.randomized_iterations.len();
                                max_iterations = max_iterations.max(out.iterations);
                                if !out.is_monotone() || !out.converged {
                                    failures.push(format!(
                                        "{name} N={n} L={l} K={k} trial {trial}: monotone={} converged={}",
                                        out.is_monotone(),
                                        out.converged
                                    ));
                                }
                            }
                            Err(e) => failures.push(format!("{name} N={n} L={l} K={k} trial {trial}: {e}")),
                        }
                    }
                }
            }
        }
    }
    if !failures.is_empty() {
        return Err(format!("{} of {runs} runs failed, first: {}", failures.len(), failures[0]));
    }
    within_budget(
        start,
        1200,
        format!("{runs} runs monotone and converged, max {max_iterations} iterations, {randomized} randomized FF iterations exempted"),
    )
}

/// Grid search for N = 2, L = 2, K = 1. Two-tone current depends on the
/// waveform only through |s_0|, |s_1| (|b_1| = |x_0||x_1|), so the waveform
/// grid is the power split alone. For the selective IRS the current is
/// increasing in each |h_n|, so each subcarrier's phases are gridded
/// separately.
fn grid_optimum(r: &ChannelRealization, power_w: f64, params: &RectennaParams, selective: bool) -> f64 {
    const G: usize = 64;
    let phasor = |i: usize| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / G as f64);
    let tone = |n: usize, a: usize, b: usize| r.direct[(0, n)] + r.reflected[0][(n, 0)] * phasor(a) * r.incident[(n, 0)] + r.reflected[0][(n, 1)] * phasor(b) * r.incident[(n, 1)];
    let splits: Vec<Waveform> = (0..G)
        .map(|i| {
            let alpha = i as f64 / (G - 1) as f64;
            Waveform::new(vec![c((2.0 * power_w * alpha).sqrt(), 0.0), c((2.0 * power_w * (1.0 - alpha)).sqrt(), 0.0)])
        })
        .collect();
    let best_over_splits = |h: &[Complex64]| splits.iter().map(|s| idc_direct(s, h, params).unwrap()).fold(f64::MIN, f64::max);
    if selective {
        let mut h = [c(0.0, 0.0); 2];
        for (n, slot) in h.iter_mut().enumerate() {
            for a in 0..G {
                for b in 0..G {
                    let v = tone(n, a, b);
                    if v.norm() > slot.norm() {
                        *slot = v;
                    }
                }
            }
        }
        best_over_splits(&h)
    } else {
        let mut best = f64::MIN;
        for a in 0..G {
            for b in 0..G {
                best = best.max(best_over_splits(&[tone(0, a, b), tone(1, a, b)]));
            }
        }
        best
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let params = RectennaParams::default();
    let cfg = config(1, 2, 2);
    let (mut worst_ff, mut worst_fs) = (f64::MAX, f64::MAX);
    let mut below = 0;
    for trial in 0..50u64 {
        let r = realization(&cfg, &Layout::default(), 3_000 + trial);
        let init = random_phases(2, &mut ChaCha8Rng::seed_from_u64(trial));
        let ff = run_mu_ff_from(&r, &cfg, &params, init.clone(), &mut ChaCha8Rng::seed_from_u64(trial)).map_err(|e| e.to_string())?;
        let fs = run_mu_fs_from(&r, &cfg, &params, PhaseConfig::Flat(init)).map_err(|e| e.to_string())?;
        let ratio_ff = ff.current() / grid_optimum(&r, cfg.power_w, &params, false);
        let ratio_fs = fs.current() / grid_optimum(&r, cfg.power_w, &params, true);
        if ratio_ff < 0.95 || ratio_fs < 0.95 {
            below += 1;
        }
        worst_ff = worst_ff.min(ratio_ff);
        worst_fs = worst_fs.min(ratio_fs);
    }
    let detail = format!("50 realizations, worst FF ratio {worst_ff:.4}, worst FS ratio {worst_fs:.4}, {below} below 0.95");
    if below > 0 {
        return Err(detail);
    }
    within_budget(start, 600, detail)
}

/// Per-realization comparisons use the same resolution as the N = 1
/// equality. At the default stopping tolerance the waveform loops stop
/// while still climbing by up to a few 1e-4, so the drivers run to a
/// tighter tolerance here.
const FS_FF_TOLERANCE: f64 = 1e-6;
const FS_FF_EPSILON: f64 = 1e-8;

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let params = RectennaParams::default();
    let mut loss = Vec::new();
    let mut violations = Vec::new();
    let mut worst_deficit: f64 = 0.0;
    let mut n1_gap: f64 = 0.0;
    for n in [1, 4, 16] {
        let cfg = SystemConfig { epsilon: FS_FF_EPSILON, ..config(1, n, 20) };
        let mut ff_sum = 0.0;
        let mut fs_sum = 0.0;
        for trial in 0..100u64 {
            // Same taps and initial phases for every N.
            let r = realization(&cfg, &Layout::default(), 4_000 + trial);
            let init = random_phases(cfg.elements, &mut ChaCha8Rng::seed_from_u64(40 + trial));
            let ff = run_mu_ff_from(&r, &cfg, &params, init.clone(), &mut ChaCha8Rng::seed_from_u64(trial)).map_err(|e| e.to_string())?;
            let fs = run_mu_fs_from(&r, &cfg, &params, PhaseConfig::Flat(init)).map_err(|e| e.to_string())?;
            if fs.current() < ff.current() {
                worst_deficit = worst_deficit.max(1.0 - fs.current() / ff.current());
                if fs.current() < ff.current() * (1.0 - FS_FF_TOLERANCE) {
                    violations.push(n);
                }
            }
            if n == 1 {
                n1_gap = n1_gap.max(rel(fs.current(), ff.current()));
            }
            ff_sum += ff.current();
            fs_sum += fs.current();
        }
        loss.push(1.0 - ff_sum / fs_sum);
    }
    let grows = loss.windows(2).all(|w| w[1] >= w[0]);
    let detail = format!(
        "FS below FF beyond {FS_FF_TOLERANCE:.0e} relative in {}/300 runs (worst deficit {worst_deficit:.2e}), N=1 max relative gap {n1_gap:.2e}, mean FF loss vs FS at N=1,4,16: {:.3e}, {:.3e}, {:.3e}",
        violations.len(),
        loss[0],
        loss[1],
        loss[2]
    );
    if !(violations.is_empty() && n1_gap <= 1e-6 && grows) {
        return Err(detail);
    }
    Ok(format!("{detail}; stopping tolerance {FS_FF_EPSILON:.0e}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn criterion_5() -> Outcome {
    let params = RectennaParams::default();
    let cfg = config(1, 16, 20);
    let (mut mu, mut su) = (Vec::new(), Vec::new());
    for trial in 0..100u64 {
        let r = realization(&cfg, &Layout::default(), 5_000 + trial);
        let init = random_phases(cfg.elements, &mut ChaCha8Rng::seed_from_u64(trial));
        mu.push(run_mu_fs_from(&r, &cfg, &params, PhaseConfig::Flat(init)).map_err(|e| e.to_string())?.current());
        su.push(run_su_fs(&r, &cfg, &params).map_err(|e| e.to_string())?.current());
    }
    let gap = rel(mean(&mu), mean(&su));
    check(gap <= 0.01, format!("mean multi-user FS {:.6e} vs single-user FS {:.6e}, relative gap {gap:.2e}", mean(&mu), mean(&su)))
}

/// IRS next to the user and an obstructed direct link, so
/// the reflected path and the fourth-order term dominate.
const SHORT_RANGE: &str = "[layout]\nhorizontal_m = 3.7\nvertical_m = 0.3\ndirect_m = 4.0\nexponent_direct = 10.0\n";

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let layout = ConfigFile::parse(SHORT_RANGE).unwrap();
    let l = layout.layout;
    let lambda_d = 10f64.powf(l.ref_gain_db / 10.0) * l.direct_m.powf(-l.exponent_direct);
    let (d_i, d_r) = ((l.horizontal_m.powi(2) + l.vertical_m.powi(2)).sqrt(), ((l.direct_m - l.horizontal_m).powi(2) + l.vertical_m.powi(2)).sqrt());
    let g = 10f64.powf(l.ref_gain_db / 10.0);
    let cascade = g * d_i.powf(-l.exponent_incident) * g * d_r.powf(-l.exponent_reflected) * 100.0;
    let by_l = harness(&format!(
        "[experiment]\nscenario = \"scaling_check\"\nalgorithms = [\"su_fs\"]\nsweep = [10, 20, 40]\ntrials = 50\nseed = 6\ntiming = false\n\
         [system]\nsubcarriers = 64\n{SHORT_RANGE}"
    ));
    let slope = by_l.metadata.slopes["su_fs"];
    let by_n = harness(&format!(
        "[experiment]\nscenario = \"idc_vs_N\"\nalgorithms = [\"su_fs\"]\nsweep = [16, 32, 64]\ntrials = 50\nseed = 6\ntiming = false\n\
         [system]\nelements = 20\n{SHORT_RANGE}"
    ));
    let points: Vec<(f64, f64)> = [16.0, 32.0, 64.0].iter().map(|&n| (n, by_n.aggregate("su_fs", n).unwrap())).collect();
    let (_, _, r2) = wptirs_core::harness::linear_fit(&points);
    let detail = format!(
        "direct/cascade gain ratio at L=10 {:.1e}, log-log slope vs L {slope:.3}, R^2 vs N {r2:.4}",
        lambda_d / cascade
    );
    if !((3.5..=4.2).contains(&slope) && r2 >= 0.98) {
        return Err(detail);
    }
    within_budget(start, 1800, detail)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let options = SdpOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hermitian = |rng: &mut ChaCha8Rng, m: usize| {
        let a = DMatrix::from_fn(m, m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&a + a.adjoint()) * c(0.5, 0.0)
    };
    let mut worst_2x2: f64 = 0.0;
    for _ in 0..1000 {
        let k = hermitian(&mut rng, 2);
        let analytic = k[(0, 0)].re + k[(1, 1)].re - 2.0 * k[(0, 1)].norm();
        let sol = solve_unit_diag_sdp(&k, &options);
        worst_2x2 = worst_2x2.max((sol.objective - analytic).abs());
    }
    let (mut worst_kkt, mut worst_diag): (f64, f64) = (0.0, 0.0);
    for instance in 0..200 {
        let m = 2 + instance % 7;
        let k = hermitian(&mut rng, m);
        let scale = k.norm();
        let sol = solve_unit_diag_sdp(&k, &options);
        let x = &sol.x;
        let mut s = k.clone();
        for i in 0..m {
            s[(i, i)] -= sol.dual_y[i];
            worst_diag = worst_diag.max((x[(i, i)] - c(1.0, 0.0)).norm());
        }
        let dual_infeasibility = (-hermitian_eigen(&s).values[0]).max(0.0);
        let primal_psd = (-hermitian_eigen(x).values[0]).max(0.0);
        let complementarity = (&s * x).trace().norm();
        let gap = (sol.objective - sol.dual_y.iter().sum::<f64>()).abs();
        worst_kkt = worst_kkt.max(dual_infeasibility.max(primal_psd).max(complementarity).max(gap) / scale);
    }
    let detail = format!(
        "2x2 worst error {worst_2x2:.2e}, M<=8 worst KKT residual {worst_kkt:.2e} (relative to ||K||_F), worst diagonal error {worst_diag:.2e}"
    );
    if !(worst_2x2 <= 1e-6 && worst_kkt <= 1e-6 && worst_diag <= 1e-8) {
        return Err(detail);
    }
    within_budget(start, 120, detail)
}

fn criterion_8() -> Outcome {
    let result = harness(
        "[experiment]\nscenario = \"idc_vs_N\"\nalgorithms = [\"su_fs\", \"mu_ff\", \"rand_phase\", \"no_irs\", \"ass\"]\n\
         sweep = [16]\ntrials = 100\nseed = 8\ntiming = false\n[system]\nelements = 20\n",
    );
    if !result.metadata.failures.is_empty() {
        return Err(format!("{} failed trials", result.metadata.failures.len()));
    }
    let get = |a: &str| trial_currents(&result, a, 16.0);
    let (fs, ff, rand, none, ass) = (get("su_fs"), get("mu_ff"), get("rand_phase"), get("no_irs"), get("ass"));
    // Slack of ten stopping tolerances for the locally converged loops.
    let slack = 1.0 - 10.0 * SystemConfig::default().epsilon;
    let fs_below_ff = fs.iter().zip(&ff).filter(|(a, b)| **a < **b * slack).count();
    let fs_below_ass = fs.iter().zip(&ass).filter(|(a, b)| **a < **b * slack).count();
    let ass_strict = fs.iter().zip(&ass).filter(|(a, b)| **b < **a).count();
    let detail = format!(
        "means FS {:.4e} FF {:.4e} rand {:.4e} no-IRS {:.4e} ASS {:.4e}; FS<FF in {fs_below_ff}, FS<ASS in {fs_below_ass}, ASS strictly below FS in {ass_strict}/100",
        mean(&fs),
        mean(&ff),
        mean(&rand),
        mean(&none),
        mean(&ass)
    );
    let ok = fs_below_ff == 0 && fs_below_ass == 0 && mean(&ff) >= mean(&rand) && mean(&ff) >= mean(&none) && ass_strict >= 95;
    check(ok, detail)
}

fn criterion_9() -> Outcome {
    let result = harness(
        "[experiment]\nscenario = \"discrete_bits\"\nalgorithms = [\"su_fs\", \"mu_ff\"]\nsweep = [0, 1, 2, 3]\ntrials = 100\nseed = 9\ntiming = false\n\
         [system]\nsubcarriers = 16\nelements = 20\n",
    );
    let mut ok = result.metadata.failures.is_empty();
    let mut parts = Vec::new();
    for a in ["su_fs", "mu_ff"] {
        let m: Vec<f64> = (0..4).map(|b| result.aggregate(a, b as f64).unwrap()).collect();
        let monotone = m[1] <= m[2] && m[2] <= m[3];
        let loss = 1.0 - m[3] / m[0];
        ok &= monotone && loss.abs() <= 0.10;
        parts.push(format!("{a}: M=1,2,3 {:.4e} {:.4e} {:.4e}, continuous {:.4e}, 3-bit loss {:.2}%", m[1], m[2], m[3], m[0], 100.0 * loss));
    }
    check(ok, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let configs = [
        "[experiment]\nscenario = \"idc_vs_N\"\nalgorithms = [\"mu_ff\", \"mu_fs\", \"rand_phase\", \"no_irs\"]\nsweep = [2, 4]\ntrials = 4\nseed = 10\ntiming = false\n[system]\nelements = 4\nusers = 2\n",
        "[experiment]\nscenario = \"current_region\"\nalgorithms = [\"mu_fs\", \"mu_ff\"]\nsweep = [0.3, 1.2]\ntrials = 3\nseed = 10\ntiming = false\n[system]\nsubcarriers = 4\nelements = 4\nusers = 2\n",
        "[experiment]\nscenario = \"discrete_bits\"\nalgorithms = [\"su_fs\", \"mu_ff\", \"ass\"]\nsweep = [0, 1, 2]\ntrials = 3\nseed = 10\ntiming = false\nrefine_quantized = true\n[system]\nsubcarriers = 4\nelements = 5\n",
    ];
    for text in configs {
        let spec = ExperimentSpec::new(ConfigFile::parse(text).unwrap(), Path::new(".")).unwrap();
        let outputs: Vec<String> =
            [1, 4, 1, 4].iter().map(|&p| run_experiment(&spec, p).unwrap().to_csv()).collect();
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("{} output differs across runs", spec.scenario().name()));
        }
    }
    Ok("3 scenarios byte-identical over two runs each at parallelism 1 and 4".into())
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        (1, "oracle equivalence", criterion_1),
        (2, "monotone convergence", criterion_2),
        (3, "brute-force optimality gap", criterion_3),
        (4, "FS/FF relations", criterion_4),
        (5, "single-user consistency", criterion_5),
        (6, "scaling law", criterion_6),
        (7, "SDP solver", criterion_7),
        (8, "baseline ordering", criterion_8),
        (9, "discrete phases", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
