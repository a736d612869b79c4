//! Property suites for every module, shared by the `invariants` test target
//! and the acceptance report. Each suite runs [`CASES`] cases from a fixed
//! proptest seed.

#![allow(dead_code)]

use std::cell::Cell;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use risjam_core::env::{gain_db, Antenna, DeviceRole, DeviceSpec, Environment, EnvironmentSpec, Position, RssiMeter};
use risjam_core::link::{jsr_db, rate_adapt_step, sjnr_db, LinkParams, LinkState, MCS_COUNT};
use risjam_core::optimizer::{aggregate_cost, brute_force_best, run_optimizer, CostWeights, Optimizer, OptimizerParams};
use risjam_core::ris::{compose_channel, random_config_with, RisConfig};
use risjam_core::rng;
use risjam_core::scenario::harness::{normalize, Evaluator, Probe, RssiOracle, World};
use risjam_core::scenario::spec::{Mode, PowerSettings, ScenarioSpec};
use risjam_core::scenario::{desk, DeviceCell, Scenario};

pub const CASES: u32 = 1000;

pub type Suite = fn() -> Result<(), String>;

/// Every suite with a stable name, grouped by module.
pub const SUITES: &[(&str, Suite)] = &[
    ("env/reciprocity", env_reciprocity),
    ("env/correlation-law", env_correlation_law),
    ("env/energy-law", env_energy_law),
    ("env/determinism", env_determinism),
    ("ris/linearity", ris_linearity),
    ("ris/flip", ris_flip),
    ("ris/triangle-bound", ris_triangle_bound),
    ("optimizer/table-monotone", optimizer_table_monotone),
    ("optimizer/scale-covariance", optimizer_scale_covariance),
    ("optimizer/exploration-floor", optimizer_exploration_floor),
    ("optimizer/brute-force-agreement", optimizer_brute_force_agreement),
    ("link/jsr-antisymmetry", link_jsr_antisymmetry),
    ("link/sjnr-monotone", link_sjnr_monotone),
    ("link/success-monotone", link_success_monotone),
    ("link/rate-adapt-fixed-point", link_rate_adapt_fixed_point),
    ("link/throughput-caps", link_throughput_caps),
    ("scenario/normalized-jsr", scenario_normalized_jsr),
    ("scenario/monotone-sweeps", scenario_monotone_sweeps),
    ("scenario/reoptimization", scenario_reoptimization),
    ("scenario/determinism", scenario_determinism),
];

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn channels(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(complex(), len)
}

fn bits(len: usize) -> impl Strategy<Value = RisConfig> {
    prop::collection::vec(any::<bool>(), len).prop_map(|b| RisConfig::from_bits(&b))
}

fn channels_and_config(max_len: usize) -> impl Strategy<Value = (Vec<Complex64>, RisConfig)> {
    (1..=max_len).prop_flat_map(|n| (channels(n), bits(n)))
}

fn small_spec(devices: usize, elements: usize, scatterers: usize) -> EnvironmentSpec {
    EnvironmentSpec {
        frequency_hz: 5.56e9,
        path_loss_exponent: 2.0,
        noise_floor_dbm: -95.0,
        scatterers,
        ris_elements: elements,
        ris_position: Position::new(0.0, 0.0, 1.0),
        ris_element_gain_db: -55.0,
        attacker_position: Position::new(-1.0, 0.0, 1.0),
        rician_k: 0.0,
        direct_rician_k: None,
        pattern_diversity: 0.0,
        devices: (0..devices)
            .map(|i| {
                let role = if i == 0 { DeviceRole::AccessPoint } else { DeviceRole::Station };
                let angle = i as f64 * 0.9;
                DeviceSpec::new(&format!("D{i}"), role, Position::new(2.0 + angle.cos(), 1.0 + 1.5 * angle.sin(), 1.0))
            })
            .collect(),
    }
}

/// `J0(x) = (1/pi) int_0^pi cos(x sin t) dt` by composite Simpson.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 400;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / PI
}

/// RMSE of `|rho(d)|` against `|J0(2 pi d / lambda)|` on `[0, 3 lambda]`.
pub fn correlation_rmse(env: &Environment, base: &Position, points: usize, realizations: usize) -> f64 {
    let lambda = env.wavelength();
    let ds: Vec<f64> = (0..points).map(|i| 3.0 * lambda * i as f64 / (points - 1) as f64).collect();
    let rho = env.spatial_correlation(base, &ds, realizations).expect("valid request");
    let sq: f64 = ds.iter().zip(&rho).map(|(d, r)| (r.norm() - bessel_j0(2.0 * PI * d / lambda).abs()).powi(2)).sum();
    (sq / ds.len() as f64).sqrt()
}

// ---- channel environment ----

pub fn env_reciprocity() -> Result<(), String> {
    let env = Environment::synthesize(small_spec(3, 16, 32), 5).expect("valid spec");
    check((0..16usize, -3.0..6.0f64, -3.0..6.0f64, 0.0..2.0f64, "[a-z]{1,6}"), |(l, x, y, z, name)| {
        let p = Position::new(x, y, z);
        prop_assume!(p.distance(&Position::new(0.0, 0.0, 1.0)) > 1e-3);
        let a = Antenna::named(&name);
        let fwd = env.ris_subchannel_with(l, &p, a).unwrap();
        let rev = env.ris_subchannel_reverse(l, &p, a).unwrap();
        prop_assert_eq!(fwd.re.to_bits(), rev.re.to_bits());
        prop_assert_eq!(fwd.im.to_bits(), rev.im.to_bits());
        Ok(())
    })
}

pub fn env_correlation_law() -> Result<(), String> {
    check((any::<u64>(), 2.4e9..6.0e9f64, -2.0..2.0f64, -2.0..2.0f64), |(seed, f, x, y)| {
        let mut spec = small_spec(2, 1, 256);
        spec.frequency_hz = f;
        let env = Environment::synthesize(spec, seed).unwrap();
        let rmse = correlation_rmse(&env, &Position::new(x, y, 1.0), 13, 1000);
        prop_assert!(rmse <= 0.05, "rmse {} at f={} seed={}", rmse, f, seed);
        Ok(())
    })
}

pub fn env_energy_law() -> Result<(), String> {
    check((any::<u64>(), 1.0..6.0f64, 0.0..PI, 0.0..4.0f64, 0.0..1.0f64), |(seed, dist, angle, k, delta)| {
        let mut spec = small_spec(2, 768, 256);
        spec.rician_k = k;
        spec.pattern_diversity = delta;
        let env = Environment::synthesize(spec, seed).unwrap();
        let antenna = Antenna::named("probe");
        let origin = Position::new(dist * angle.cos(), dist * angle.sin(), 1.0);
        let lambda = env.wavelength();
        let positions = 16;
        let rows = env.ris_subchannels_row(&origin, 4.0 * lambda, positions, antenna).unwrap();
        let mut ratio = 0.0;
        for (i, h) in rows.iter().enumerate() {
            let p = origin.offset(4.0 * lambda * i as f64, 0.0, 0.0);
            let pl = env.ris_path_loss(p.distance(&env.spec().ris_position));
            ratio += h.iter().map(|v| v.norm_sqr()).sum::<f64>() / (h.len() as f64 * pl);
        }
        ratio /= positions as f64;
        prop_assert!((ratio - 1.0).abs() <= 0.05, "mean |h|^2 / PL = {}", ratio);
        Ok(())
    })
}

pub fn env_determinism() -> Result<(), String> {
    check((any::<u64>(), 1..24usize, 16..48usize, 0.0..1.0f64, 0.0..0.5f64), |(seed, l, m, fraction, delta)| {
        let mut spec = small_spec(3, l, m);
        spec.pattern_diversity = delta;
        let a = Environment::synthesize(spec.clone(), seed).unwrap().perturb(fraction, seed ^ 1).unwrap();
        let b = Environment::synthesize(spec, seed).unwrap().perturb(fraction, seed ^ 1).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.to_document()).unwrap(), serde_json::to_string(&b.to_document()).unwrap());
        for e in 0..a.ensemble_count() {
            let (wa, wb) = (a.plane_waves(e).unwrap(), b.plane_waves(e).unwrap());
            for (p, q) in wa.iter().zip(&wb) {
                prop_assert_eq!([p.angle.to_bits(), p.phase.to_bits(), p.amplitude.to_bits()], [q.angle.to_bits(), q.phase.to_bits(), q.amplitude.to_bits()]);
            }
        }
        let p = Position::new(2.5, -0.5, 0.7);
        let id = risjam_core::DeviceId::new("D1");
        prop_assert_eq!(a.ris_subchannels(&p, Antenna::of(&id)).unwrap(), b.ris_subchannels(&p, Antenna::of(&id)).unwrap());
        Ok(())
    })
}

// ---- RIS composition ----

pub fn ris_linearity() -> Result<(), String> {
    check((channels_and_config(96), complex()), |((h, c), alpha)| {
        let scaled: Vec<Complex64> = h.iter().map(|v| v * alpha).collect();
        let lhs = compose_channel(&c, &scaled).unwrap();
        let rhs = compose_channel(&c, &h).unwrap() * alpha;
        let scale: f64 = h.iter().map(|v| v.norm()).sum::<f64>() * alpha.norm();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1e-300));
        Ok(())
    })
}

pub fn ris_flip() -> Result<(), String> {
    check(channels_and_config(96).prop_flat_map(|(h, c)| {
        let n = h.len();
        (Just(h), Just(c), 0..n)
    }), |(h, c, l)| {
        let before = compose_channel(&c, &h).unwrap();
        let mut flipped = c.clone();
        flipped.flip(l);
        let after = compose_channel(&flipped, &h).unwrap();
        // coefficient goes from c_l to -c_l
        let expected = -2.0 * c.coefficient(l) * h[l];
        let scale: f64 = h.iter().map(|v| v.norm()).sum();
        prop_assert!((after - before - expected).norm() <= 1e-12 * scale.max(1e-300));
        Ok(())
    })
}

pub fn ris_triangle_bound() -> Result<(), String> {
    check(channels_and_config(96), |(h, c)| {
        let bound: f64 = h.iter().map(|v| v.norm()).sum();
        prop_assert!(compose_channel(&c, &h).unwrap().norm() <= bound * (1.0 + 1e-12));
        // aligning every sub-channel with c_l = sign(Re h_l) on real inputs attains it
        let real: Vec<Complex64> = h.iter().map(|v| Complex64::new(v.re, 0.0)).collect();
        let aligned = RisConfig::from_bits(&real.iter().map(|v| v.re < 0.0).collect::<Vec<_>>());
        let sum: f64 = real.iter().map(|v| v.norm()).sum();
        prop_assert!((compose_channel(&aligned, &real).unwrap().norm() - sum).abs() <= 1e-12 * sum.max(1e-300));
        Ok(())
    })
}

// ---- optimizer ----

fn probe_oracle(h: &[Vec<Complex64>], sigma: Option<f64>, seed: u64) -> RssiOracle {
    RssiOracle {
        targets: vec![Probe::full(&h[0], 0.0)],
        non_targets: h[1..].iter().map(|v| Probe::full(v, 0.0)).collect(),
        meter: sigma.map(|s| RssiMeter::new(s, -200.0)),
        rng: rng::stream(seed, "measurement", 0),
    }
}

fn multi_channels(devices: usize, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<Complex64>>> {
    len.prop_flat_map(move |n| prop::collection::vec(channels(n), devices))
}

pub fn optimizer_table_monotone() -> Result<(), String> {
    check((multi_channels(3, 1..=48), any::<u64>(), prop_oneof![Just(0u64), Just(25), Just(100)], 0.0..1.0f64), |(h, seed, period, sigma)| {
        let params = OptimizerParams { table_size: 20, reeval_period: period, ..OptimizerParams::default() };
        let mut oracle = probe_oracle(&h, Some(sigma), seed);
        let run = run_optimizer(params, 300, h[0].len(), &mut oracle, seed).unwrap();
        for pair in run.trace.windows(2) {
            let reevaluated = period > 0 && pair[1].step % period == 0;
            if !reevaluated {
                prop_assert!(pair[1].table_worst_cost >= pair[0].table_worst_cost, "worst cost fell at step {}", pair[1].step);
                prop_assert!(pair[1].best_cost >= pair[0].best_cost);
            }
        }
        Ok(())
    })
}

pub fn optimizer_scale_covariance() -> Result<(), String> {
    let rssi = || prop::collection::vec(-100.0..0.0f64, 1..6);
    check((rssi(), rssi(), rssi(), rssi(), -60.0..60.0f64, 0.0..1.0f64), |(ta, na, tb, nb, offset, mean_w)| {
        let w = CostWeights::new(mean_w, 1.0 - mean_w).unwrap();
        let shift = |v: &[f64]| v.iter().map(|x| x + offset).collect::<Vec<_>>();
        let f = |t: &[f64], n: &[f64]| aggregate_cost(t, n, &w, -95.0).unwrap();
        let (a, b) = (f(&ta, &na), f(&tb, &nb));
        let (a2, b2) = (f(&shift(&ta), &shift(&na)), f(&shift(&tb), &shift(&nb)));
        let tol = |v: f64| 1e-9 * (1.0 + v.abs());
        prop_assert!((a - a2).abs() <= tol(a) && (b - b2).abs() <= tol(b));
        prop_assert!(a == 0.0 || a.signum() == a2.signum());
        if (a - b).abs() > tol(a) + tol(b) {
            prop_assert_eq!(a > b, a2 > b2);
        }
        Ok(())
    })
}

pub fn optimizer_exploration_floor() -> Result<(), String> {
    check((multi_channels(2, 1..=80), any::<u64>(), 0.001..0.3f64, 1..60usize), |(h, seed, floor, steps)| {
        let params = OptimizerParams { table_size: 10, exploration_floor: floor, ..OptimizerParams::default() };
        let mut oracle = probe_oracle(&h, None, seed);
        let mut opt = Optimizer::init(params, h[0].len(), &mut oracle, seed).unwrap();
        for _ in 0..steps {
            let probs = opt.element_probabilities();
            prop_assert!(probs.iter().all(|p| *p >= floor - 1e-15 && *p <= 1.0 - floor + 1e-15));
            // any fixed configuration keeps a positive sampling probability
            let log_p: f64 = probs.iter().map(|p| p.min(1.0 - p).ln()).sum();
            prop_assert!(log_p.is_finite());
            opt.step(&mut oracle).unwrap();
        }
        Ok(())
    })
}

/// Statistical: the optimizer must reach the exhaustive optimum in at least
/// 90 % of cases.
pub fn optimizer_brute_force_agreement() -> Result<(), String> {
    let hits = Cell::new(0u32);
    let total = Cell::new(0u32);
    check((multi_channels(3, 1..=10), any::<u64>()), |(h, seed)| {
        let len = h[0].len();
        let params = OptimizerParams::default();
        let mut oracle = probe_oracle(&h, None, seed);
        let best = brute_force_best(len, &mut oracle, &params).unwrap();
        let run = run_optimizer(params, 50 << len, len, &mut oracle, seed).unwrap();
        prop_assert!(run.best.cost <= best.cost + 1e-9 * (1.0 + best.cost.abs()));
        total.set(total.get() + 1);
        if (run.best.cost - best.cost).abs() <= 1e-9 * (1.0 + best.cost.abs()) {
            hits.set(hits.get() + 1);
        }
        Ok(())
    })?;
    let rate = hits.get() as f64 / total.get() as f64;
    if rate >= 0.9 {
        Ok(())
    } else {
        Err(format!("optimum reached in {:.1} % of cases", 100.0 * rate))
    }
}

// ---- link model ----

fn nonzero_complex() -> impl Strategy<Value = Complex64> {
    complex().prop_filter("non-zero gain", |c| c.norm() > 1e-6)
}

pub fn link_jsr_antisymmetry() -> Result<(), String> {
    check((nonzero_complex(), nonzero_complex(), -50.0..50.0f64, -50.0..50.0f64), |(hj, hs, pj, ps)| {
        let a = jsr_db(hj, hs, pj, ps).unwrap();
        let b = jsr_db(hs, hj, ps, pj).unwrap();
        prop_assert!((a + b).abs() <= 1e-9);
        Ok(())
    })
}

pub fn link_sjnr_monotone() -> Result<(), String> {
    check((-100.0..0.0f64, -120.0..20.0f64, 0.0..30.0f64, -100.0..-80.0f64, 0.01..30.0f64), |(s, j, dj, n, ds)| {
        prop_assert!(sjnr_db(s, j + dj, n) <= sjnr_db(s, j, n));
        prop_assert!(sjnr_db(s + ds, j, n) > sjnr_db(s, j, n));
        Ok(())
    })
}

pub fn link_success_monotone() -> Result<(), String> {
    let link = LinkParams::default();
    check((-20.0..40.0f64, 0.0..10.0f64, 0..MCS_COUNT - 1), |(s, ds, mcs)| {
        let p = link.packet_success_prob(s, mcs).unwrap();
        prop_assert!(link.packet_success_prob(s + ds, mcs).unwrap() >= p);
        prop_assert!(link.packet_success_prob(s, mcs + 1).unwrap() <= p);
        prop_assert!((0.0..=1.0).contains(&p));
        Ok(())
    })
}

pub fn link_rate_adapt_fixed_point() -> Result<(), String> {
    let link = LinkParams::default();
    check((-5.0..35.0f64, any::<u64>(), 0..MCS_COUNT), |(sjnr, seed, start)| {
        let mut r = rng::stream(seed, "adapt", 0);
        let mut state = LinkState::new(start, link.window, link.offered_load_mbps);
        let mut visited = Vec::new();
        for w in 0..120 {
            let p = link.packet_success_prob(sjnr, state.mcs).unwrap();
            for _ in 0..link.window {
                state.record(r.random::<f64>() < p);
            }
            state = rate_adapt_step(state);
            if w >= 60 {
                visited.push(state.mcs);
            }
        }
        let (lo, hi) = (visited.iter().min().unwrap(), visited.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "MCS wandered over {}..={} at {} dB", lo, hi, sjnr);
        Ok(())
    })
}

pub fn link_throughput_caps() -> Result<(), String> {
    let link = LinkParams::default();
    check((0..MCS_COUNT, 0.1..100.0f64, -0.5..1.5f64, -10.0..40.0f64, any::<u64>()), |(mcs, load, p, sjnr, seed)| {
        let state = LinkState::new(mcs, link.window, load);
        let t = link.throughput_mbps(&state, p);
        prop_assert!(t <= load + 1e-12);
        prop_assert!(t <= link.mcs_table.rate_mbps(mcs).unwrap() + 1e-12);
        prop_assert!(t >= 0.0);
        let adaptive = link.adaptive_throughput(sjnr, 500, &mut rng::stream(seed, "link", 0));
        prop_assert!(adaptive <= link.offered_load_mbps + 1e-12);
        Ok(())
    })
}

// ---- scenario harness ----

pub fn scenario_normalized_jsr() -> Result<(), String> {
    let cells = prop::collection::vec((-60.0..60.0f64, any::<bool>()), 1..12);
    check((cells, any::<prop::sample::Index>()), |(spec, pick)| {
        let mut is_target: Vec<bool> = spec.iter().map(|(_, t)| *t).collect();
        if !is_target.iter().any(|t| *t) {
            is_target[pick.index(spec.len())] = true;
        }
        let mut cells: Vec<DeviceCell> = spec
            .iter()
            .enumerate()
            .map(|(i, (jsr, _))| DeviceCell {
                device: format!("D{i}").as_str().into(),
                attacker_rssi_dbm: 0.0,
                ap_rssi_dbm: -jsr,
                jsr_db: *jsr,
                normalized_jsr_db: f64::NAN,
                delivered_dbm: 0.0,
                packet_rate: None,
                throughput_mbps: None,
                baseline_mbps: None,
            })
            .collect();
        normalize(&mut cells, &is_target);
        let reference = cells.iter().zip(&is_target).filter(|(_, t)| **t).map(|(c, _)| c.jsr_db).fold(f64::INFINITY, f64::min);
        for c in &cells {
            prop_assert_eq!(c.normalized_jsr_db, c.jsr_db - reference);
        }
        if is_target.iter().filter(|t| **t).count() == 1 {
            let own = is_target.iter().position(|t| *t).unwrap();
            prop_assert_eq!(cells[own].normalized_jsr_db, 0.0);
        }
        Ok(())
    })
}

pub fn scenario_monotone_sweeps() -> Result<(), String> {
    check((any::<u64>(), 3..7usize, 4..40usize), |(seed, devices, elements)| {
        let env = Environment::synthesize(small_spec(devices, elements, 16), seed).unwrap();
        let world = World::new(env).unwrap();
        let config = random_config_with(elements, &mut rng::stream(seed, "config", 0)).unwrap();
        let stations = world.stations();
        let gains: Vec<Complex64> = stations.iter().map(|&i| world.ris_gain(i, &config)).collect();
        let power = PowerSettings::default();
        let link = LinkParams::default();
        let ev = Evaluator { world: &world, power: &power, link: &link, meter: RssiMeter::new(0.5, -95.0) };
        let curve = ev.sweep("x".into(), &stations, &gains);
        for rates in &curve.rates {
            for w in rates.windows(2) {
                prop_assert!(w[1] <= w[0] + 2.0);
            }
        }
        Ok(())
    })
}

struct ReoptFixture {
    world: World,
    /// Median separation of the static optimization over five seeds, per
    /// roster index.
    original: Vec<f64>,
}

const REOPT_STEPS: u64 = 3000;

/// Target gain over the strongest non-target gain (dB) after an exact-oracle
/// optimization for `target`.
fn separation(subchannels: &[Vec<Complex64>], target: usize, seed: u64) -> f64 {
    let order: Vec<usize> = std::iter::once(target).chain((0..subchannels.len()).filter(|&i| i != target)).collect();
    let h: Vec<Vec<Complex64>> = order.iter().map(|&i| subchannels[i].clone()).collect();
    let mut oracle = probe_oracle(&h, None, seed);
    let run = run_optimizer(OptimizerParams::default(), REOPT_STEPS, h[0].len(), &mut oracle, seed).unwrap();
    let g = |v: &[Complex64]| gain_db(compose_channel(&run.best.config, v).unwrap());
    g(&h[0]) - h[1..].iter().map(|v| g(v)).fold(f64::NEG_INFINITY, f64::max)
}

/// The access point and one station from each of three desk clusters, in
/// front of a 256-element surface.
fn reopt_fixture() -> &'static ReoptFixture {
    static FIXTURE: OnceLock<ReoptFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let mut spec = desk::desk_environment();
        spec.ris_elements = 256;
        spec.devices.retain(|d| ["D0", "D2", "D5", "D9"].contains(&d.id.as_str()));
        let world = World::new(Environment::synthesize(spec, 11).unwrap()).unwrap();
        let original = (0..world.ids.len())
            .map(|t| {
                if t == world.ap {
                    return f64::NAN;
                }
                let runs: Vec<f64> = (1..=5).map(|s| separation(&world.subchannels, t, s)).collect();
                risjam_core::stats::median(&runs)
            })
            .collect();
        ReoptFixture { world, original }
    })
}

/// Every relocated target is again the strongest receiver after
/// re-optimization, and on average keeps at least 80 % of its original
/// separation.
pub fn scenario_reoptimization() -> Result<(), String> {
    let fixture = reopt_fixture();
    let stations = fixture.world.stations();
    let half_wave = fixture.world.env.wavelength() / 2.0;
    let ratios = std::cell::RefCell::new(Vec::new());
    check((prop::sample::select(stations), half_wave..0.2f64, 0.0..2.0 * PI, any::<u64>()), |(t, dist, angle, seed)| {
        let w = &fixture.world;
        let moved = w.env.devices()[t].position.offset(dist * angle.cos(), dist * angle.sin(), 0.0);
        let mut subchannels = w.subchannels.clone();
        subchannels[t] = w.env.ris_subchannels(&moved, Antenna::of(&w.ids[t])).unwrap();
        let after = separation(&subchannels, t, seed);
        prop_assert!(after > 0.0, "{} is not the strongest receiver after moving ({:.1} dB)", w.ids[t], after);
        ratios.borrow_mut().push(after / fixture.original[t]);
        Ok(())
    })?;
    let ratios = ratios.into_inner();
    let mean = risjam_core::stats::mean(&ratios);
    let below = ratios.iter().filter(|r| **r < 0.8).count();
    if mean >= 0.8 {
        Ok(())
    } else {
        Err(format!("mean separation ratio {mean:.3} < 0.8 ({below} of {} cases below)", ratios.len()))
    }
}

pub fn scenario_determinism() -> Result<(), String> {
    let modes = prop_oneof![Just(Mode::PacketRate), Just(Mode::JsrMatrix), Just(Mode::Throughput)];
    check((any::<u64>(), modes, 0..3usize, 4..24usize), |(seed, mode, random, elements)| {
        let env = small_spec(4, elements, 16);
        let mut spec = ScenarioSpec::new(mode);
        spec.seed = seed;
        spec.steps = 40;
        spec.optimizer.table_size = 8;
        spec.random_configs = random;
        spec.throughput.packets = 200;
        spec.target_sets = vec![vec!["D1".into()], vec!["D2".into()]];
        let render = || -> Result<(String, Vec<u8>), TestCaseError> {
            let result = Scenario::new(spec.clone(), env.clone()).unwrap().run().unwrap();
            let mut csv = Vec::new();
            result.write_results_csv(&mut csv).unwrap();
            result.write_sweep_csv(&mut csv).unwrap();
            Ok((serde_json::to_string(&result).unwrap(), csv))
        };
        let (a, b) = (render()?, render()?);
        prop_assert!(a == b, "two runs of seed {} differ", seed);
        Ok(())
    })
}
