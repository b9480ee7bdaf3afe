//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Monte Carlo bands and bandwidth choices are read from
//! `tests/fixtures/thresholds.toml`.

mod common;

use std::process::Command;
use std::time::Instant;

use common::{fixture, rel_err, spearman};
use cone_test::kde::Sample;
use cone_test::oracles::{mc_overlap, quad_mass_1d, quad_overlap_1d, quad_statistic_1d, QuadratureSpec};
use cone_test::report::to_json_line;
use cone_test::rng::stream;
use cone_test::simulate::{
    clt_diagnostic, generate_scenario, run_experiment, BandwidthRule, ExperimentConfig, ScenarioKind, ScenarioSpec,
};
use cone_test::spd::SpdMatrix;
use cone_test::special::{centering_a, kernel_mass, limit_constants, v_d_closed_form};
use cone_test::two_sample::{
    permutation_test, spectral_test, statistic_t, statistic_t_weighted, Bandwidths, Method, TwoSampleData,
};
use cone_test::wishart::{log_overlap, sample_wishart, WishartParams};
use rand::Rng;

type Pathway = (&'static str, Box<dyn Fn() -> String + Sync>);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn thresholds() -> toml::Table {
    std::fs::read_to_string(fixture("thresholds.toml")).unwrap().parse().unwrap()
}

fn num(t: &toml::Table, section: &str, key: &str) -> f64 {
    match &t[section][key] {
        toml::Value::Float(f) => *f,
        toml::Value::Integer(i) => *i as f64,
        other => panic!("{section}.{key}: {other:?}"),
    }
}

fn int(t: &toml::Table, section: &str, key: &str) -> usize {
    t[section][key].as_integer().unwrap_or_else(|| panic!("{section}.{key}")) as usize
}

fn scalar(v: f64) -> SpdMatrix {
    SpdMatrix::new(1, vec![v]).unwrap()
}

fn scalars(v: &[f64]) -> Sample {
    Sample::new(v.iter().map(|&x| scalar(x)).collect()).unwrap()
}

fn random_spd<R: Rng>(d: usize, rng: &mut R) -> SpdMatrix {
    let raw: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| raw[i * d + k] * raw[j * d + k]).sum();
            m[i * d + j] = s + if i == j { 0.1 + rng.random_range(0.0..1.0) } else { 0.0 };
        }
    }
    SpdMatrix::new(d, m).unwrap()
}

fn random_sample<R: Rng>(d: usize, n: usize, rng: &mut R) -> Sample {
    Sample::new((0..n).map(|_| random_spd(d, rng)).collect()).unwrap()
}

fn two_point() -> TwoSampleData {
    TwoSampleData::new(scalars(&[1.0]), scalars(&[2.0])).unwrap()
}

fn null_d2(n: usize, reps: usize, b: f64, method: Method, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioSpec {
            kind: ScenarioKind::Null,
            d: 2,
            nu1: 5.0,
            nu2: None,
            sigma1: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            scale_factor: None,
            rotation_angle: None,
            rotation: None,
            n1: n,
            n2: n,
        },
        reps,
        bandwidth_rule: BandwidthRule::Fixed { value: b },
        method,
        n_perm: 199,
        n_draws: 10_000,
        alpha: 0.05,
        master_seed: seed,
        oracle_moments: None,
    }
}

fn criterion_1() -> Outcome {
    let spec = QuadratureSpec::default();
    let pts = [0.5, 1.0, 2.0, 4.0, 8.0];
    let bws = [0.1, 0.5, 1.0];
    let mut worst = 0.0f64;
    for &x in &pts {
        for &y in &pts {
            for &b1 in &bws {
                for &b2 in &bws {
                    let closed = log_overlap(b1, b2, &scalar(x), &scalar(y)).unwrap().exp();
                    let quad = quad_overlap_1d(x, y, b1, b2, &spec).unwrap().value;
                    worst = worst.max(rel_err(closed, quad));
                }
            }
        }
    }
    outcome(worst <= 1e-8, format!("225 cases, max relative error {worst:.2e} (limit 1e-8)"))
}

fn criterion_2() -> Outcome {
    let d = |v: &[f64]| SpdMatrix::diagonal(v).unwrap();
    let m = |e: [f64; 4]| SpdMatrix::new(2, e.to_vec()).unwrap();
    let cases = [
        (d(&[1.0, 1.0]), d(&[1.0, 1.0]), 0.2),
        (d(&[4.0, 1.0]), d(&[1.0, 1.0]), 0.2),
        (d(&[4.0, 1.0]), d(&[1.0, 1.0]), 0.5),
        (m([2.0, 0.5, 0.5, 1.0]), m([1.0, -0.3, -0.3, 2.0]), 0.3),
        (d(&[0.5, 3.0]), d(&[2.0, 0.25]), 0.1),
        (d(&[1.0, 1.0]), d(&[3.0, 3.0]), 0.8),
    ];
    let mut within3 = 0;
    let mut within4 = 0;
    let mut zs = Vec::new();
    for (k, (x, y, b)) in cases.iter().enumerate() {
        let exact = log_overlap(*b, *b, x, y).unwrap().exp();
        let mc = mc_overlap(x, y, *b, 1_000_000, 500 + k as u64).unwrap();
        let z = (mc.estimate - exact) / mc.stderr;
        zs.push(format!("{z:+.2}"));
        if z.abs() <= 3.0 {
            within3 += 1;
        } else if z.abs() <= 4.0 {
            within4 += 1;
        }
    }
    let pass = within3 + within4 == cases.len() && within4 <= 1;
    outcome(pass, format!("6 cases, 1e6 draws, z-scores [{}] ({within3} within 3 SE, {within4} in (3, 4] SE)", zs.join(", ")))
}

fn criterion_3() -> Outcome {
    let mut rng = stream(3, 0);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let d = 1 + k % 3;
        let b = rng.random_range(0.05..1.0);
        let x = random_spd(d, &mut rng);
        let closed = log_overlap(b, b, &x, &x).unwrap().exp();
        let identity = centering_a(d, b).unwrap() * (-(d as f64 + 1.0) / 2.0 * x.log_det()).exp();
        worst = worst.max(rel_err(closed, identity));
    }
    outcome(worst <= 1e-10, format!("200 matrices, d in 1..=3, max relative error {worst:.2e} (limit 1e-10)"))
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for d in 1..=3 {
        let c = limit_constants(d);
        for b in [1e-2f64, 1e-3] {
            let dev = (b.powf(c.r as f64 / 2.0) * centering_a(d, b).unwrap() / c.c_d - 1.0).abs();
            pass &= dev <= 5.0 * b;
            parts.push(format!("d={d},b={b:e}: {dev:.2e}"));
        }
        let v = rel_err(c.v_d, v_d_closed_form(d));
        pass &= v <= 1e-12;
        parts.push(format!("v_{d} rel {v:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut rng = stream(5, 0);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(1..=15);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..6.0)).collect();
        let b = rng.random_range(0.05..0.9);
        let mass = quad_mass_1d(&scalars(&values), b, &spec).unwrap().value;
        worst = worst.max((mass - 1.0).abs());
    }
    let mut d2 = 0.0f64;
    for b in [0.2, 0.05] {
        d2 = d2.max(rel_err(kernel_mass(2, b).unwrap(), 1.0 / (1.0 - b * b)));
    }
    outcome(
        worst <= 1e-8 && d2 <= 1e-10,
        format!("d=1 max |mass - 1| {worst:.2e} (limit 1e-8); d=2 max relative error {d2:.2e} (limit 1e-10)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = stream(6, 0);
    let mut worst_paths = 0.0f64;
    for k in 0..100 {
        let d = 1 + k % 3;
        let (n1, n2) = (rng.random_range(1..=50), rng.random_range(1..=50));
        let data = TwoSampleData::new(random_sample(d, n1, &mut rng), random_sample(d, n2, &mut rng)).unwrap();
        let b1 = rng.random_range(0.05..1.0);
        let b2 = if k % 2 == 0 { b1 } else { rng.random_range(0.05..1.0) };
        let g = statistic_t(&data, b1, b2).unwrap();
        let w = statistic_t_weighted(&data, b1, b2).unwrap();
        worst_paths = worst_paths.max(rel_err(g, w));
    }
    let spec = QuadratureSpec::default();
    let mut worst_quad = 0.0f64;
    for k in 0..10 {
        let (n1, n2) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let data = TwoSampleData::new(random_sample(1, n1, &mut rng), random_sample(1, n2, &mut rng)).unwrap();
        let b1 = rng.random_range(0.1..1.0);
        let b2 = if k % 2 == 0 { b1 } else { rng.random_range(0.1..1.0) };
        let q = quad_statistic_1d(&data, b1, b2, &spec).unwrap().value;
        let g = statistic_t(&data, b1, b2).unwrap();
        let w = statistic_t_weighted(&data, b1, b2).unwrap();
        worst_quad = worst_quad.max(rel_err(q, g)).max(rel_err(q, w));
    }
    let t = statistic_t(&two_point(), 0.5, 0.5).unwrap();
    let fixture_err = (t - 0.5 * (0.25 + 0.125 - 8.0 / 27.0)).abs();
    outcome(
        worst_paths <= 1e-9 && worst_quad <= 1e-7 && fixture_err <= 1e-9 && (t - 0.039352).abs() < 5e-7,
        format!(
            "paths max rel {worst_paths:.2e} (1e-9); quadrature max rel {worst_quad:.2e} (1e-7); two-point T = {t:.9} (|err| {fixture_err:.1e})"
        ),
    )
}

fn criterion_7(th: &toml::Table) -> Outcome {
    let n = int(th, "clt", "n_per_sample");
    let config = ExperimentConfig {
        scenario: ScenarioSpec {
            kind: ScenarioKind::Null,
            d: 1,
            nu1: 4.0,
            nu2: None,
            sigma1: vec![vec![0.5]],
            scale_factor: None,
            rotation_angle: None,
            rotation: None,
            n1: n,
            n2: n,
        },
        reps: int(th, "clt", "reps"),
        bandwidth_rule: BandwidthRule::Power { c: 1.0, gamma: Some(0.5) },
        method: Method::Gaussian,
        n_perm: 199,
        n_draws: 10_000,
        alpha: 0.05,
        master_seed: int(th, "clt", "master_seed") as u64,
        oracle_moments: None,
    };
    let s = clt_diagnostic(&config).unwrap();
    let pass = s.mean.abs() <= num(th, "clt", "max_abs_mean")
        && s.variance >= num(th, "clt", "variance_lo")
        && s.variance <= num(th, "clt", "variance_hi")
        && s.ks_distance <= num(th, "clt", "max_ks");
    outcome(
        pass,
        format!(
            "b = {:.5}, V11 = {:.6}, V22 = {:.6}: mean {:+.3} (|.| <= 0.5), variance {:.3} (in [0.6, 1.7]), KS {:.3} (<= 0.15)",
            s.b[0], s.moments.v11, s.moments.v22, s.mean, s.variance, s.ks_distance
        ),
    )
}

fn criterion_8(th: &toml::Table) -> Outcome {
    let draws = int(th, "spectral", "two_point_draws");
    let r = spectral_test(&two_point(), Bandwidths::common(0.5).unwrap(), draws, 8).unwrap();
    let fixture_ok = (r.p_value - num(th, "spectral", "two_point_target")).abs() <= num(th, "spectral", "two_point_band");

    let reps = int(th, "spectral", "reps");
    let n = int(th, "spectral", "n_per_sample");
    let b = num(th, "spectral", "b");
    let seed = int(th, "spectral", "master_seed") as u64;
    let mut spec_cfg = null_d2(n, reps, b, Method::Spectral, seed);
    spec_cfg.n_draws = int(th, "spectral", "n_draws");
    let mut perm_cfg = null_d2(n, reps, b, Method::Permutation, seed);
    perm_cfg.n_perm = int(th, "spectral", "n_perm");
    let spectral = run_experiment(&spec_cfg).unwrap();
    let perm = run_experiment(&perm_cfg).unwrap();
    let ps: Vec<f64> = spectral.records.iter().map(|r| r.p_value).collect();
    let pp: Vec<f64> = perm.records.iter().map(|r| r.p_value).collect();
    let rho = spearman(&ps, &pp);
    let rate = spectral.rejection_rate;
    let pass = fixture_ok
        && rho >= num(th, "spectral", "min_rank_correlation")
        && rate >= num(th, "spectral", "rejection_lo")
        && rate <= num(th, "spectral", "rejection_hi");
    outcome(
        pass,
        format!(
            "two-point p = {:.5} (target 0.157299 +/- 0.0024); null d=2 n=40/40 b={b}: rank correlation {rho:.3} (>= 0.9), spectral rejection {rate:.3} (in [0.02, 0.09]), permutation rejection {:.3}",
            r.p_value, perm.rejection_rate
        ),
    )
}

fn criterion_9(th: &toml::Table) -> Outcome {
    let reps = int(th, "permutation_level", "reps");
    let mut cfg = null_d2(
        int(th, "permutation_level", "n_per_sample"),
        reps,
        num(th, "permutation_level", "b"),
        Method::Permutation,
        int(th, "permutation_level", "master_seed") as u64,
    );
    cfg.n_perm = int(th, "permutation_level", "n_perm");
    let r = run_experiment(&cfg).unwrap();
    let expected = reps as f64 / 10.0;
    let sigma = (reps as f64 * 0.1 * 0.9).sqrt();
    let k = num(th, "permutation_level", "decile_sigmas");
    let deciles_ok = r.p_value_deciles.iter().all(|&c| (c as f64 - expected).abs() <= k * sigma);
    let rate = r.rejection_rate;
    let pass = deciles_ok
        && rate >= num(th, "permutation_level", "rejection_lo")
        && rate <= num(th, "permutation_level", "rejection_hi");
    outcome(
        pass,
        format!(
            "rejection {rate:.3} (in [0.02, 0.08]); deciles {:?} (each within {expected} +/- {:.1})",
            r.p_value_deciles,
            k * sigma
        ),
    )
}

fn criterion_10(th: &toml::Table) -> Outcome {
    let n = int(th, "rotation", "n_per_sample");
    let reps = int(th, "rotation", "reps");
    let b = num(th, "rotation", "b");
    let seed = int(th, "rotation", "master_seed") as u64;
    let mut rot = null_d2(n, reps, b, Method::Permutation, seed);
    rot.n_perm = int(th, "rotation", "n_perm");
    rot.scenario.kind = ScenarioKind::RotationOnly;
    rot.scenario.sigma1 = vec![vec![4.0, 0.0], vec![0.0, 1.0]];
    rot.scenario.rotation_angle = Some(num(th, "rotation", "angle_degrees"));
    let mut null = rot.clone();
    null.scenario.kind = ScenarioKind::Null;
    null.scenario.rotation_angle = None;
    null.master_seed = seed + 1;
    let power = run_experiment(&rot).unwrap().rejection_rate;
    let level = run_experiment(&null).unwrap().rejection_rate;
    let pass = power >= num(th, "rotation", "min_power") && power - level >= num(th, "rotation", "min_gap_over_null");
    outcome(pass, format!("power {power:.3} (>= 0.20), matched null {level:.3}, gap {:.3} (>= 0.10)", power - level))
}

fn map_data(data: &TwoSampleData, a: &[f64]) -> TwoSampleData {
    let m = |s: &Sample| Sample::new(s.items().iter().map(|x| x.congruence(a).unwrap()).collect()).unwrap();
    TwoSampleData::new(m(data.sample1()), m(data.sample2())).unwrap()
}

fn criterion_11() -> Outcome {
    let mut rng = stream(11, 0);
    let mut drift = 0.0f64;
    for k in 0..20 {
        let d = 2 + k % 2;
        let data = TwoSampleData::new(random_sample(d, 15, &mut rng), random_sample(d, 12, &mut rng)).unwrap();
        let b = rng.random_range(0.1..1.0);
        // Orthogonal factor of a random matrix by Gram–Schmidt.
        let mut q: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for c in 0..d {
            for p in 0..c {
                let dot: f64 = (0..d).map(|i| q[i * d + c] * q[i * d + p]).sum();
                for i in 0..d {
                    q[i * d + c] -= dot * q[i * d + p];
                }
            }
            let norm: f64 = (0..d).map(|i| q[i * d + c].powi(2)).sum::<f64>().sqrt();
            for i in 0..d {
                q[i * d + c] /= norm;
            }
        }
        let t = statistic_t(&data, b, b).unwrap();
        let r = statistic_t(&map_data(&data, &q), b, b).unwrap();
        drift = drift.max(rel_err(t, r));
    }
    let mut p_equal = 0;
    let trials = 10;
    for k in 0..trials {
        let w = WishartParams::new(5.0, SpdMatrix::identity(2)).unwrap();
        let draw = |n: usize, rng: &mut _| Sample::new((0..n).map(|_| sample_wishart(&w, rng).unwrap()).collect()).unwrap();
        let data = TwoSampleData::new(draw(20, &mut rng), draw(20, &mut rng)).unwrap();
        let a: Vec<f64> = loop {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            if (a[0] * a[3] - a[1] * a[2]).abs() > 0.3 {
                break a;
            }
        };
        let bw = Bandwidths::common(0.4).unwrap();
        let p = permutation_test(&data, bw, 199, 100 + k).unwrap().p_value;
        let q = permutation_test(&map_data(&data, &a), bw, 199, 100 + k).unwrap().p_value;
        if p == q {
            p_equal += 1;
        }
    }
    outcome(
        drift <= 1e-9 && p_equal == trials,
        format!("orthogonal drift {drift:.2e} (<= 1e-9); permutation p identical under congruence in {p_equal}/{trials} cases"),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_12() -> Outcome {
    let pathways: Vec<Pathway> = vec![
        (
            "scenario",
            Box::new(|| {
                let cfg = null_d2(30, 1, 0.3, Method::Permutation, 1);
                let data = generate_scenario(&cfg.scenario, &mut stream(12, 0)).unwrap();
                format!("{:?}", data)
            }),
        ),
        ("mc_overlap", Box::new(|| format!("{:?}", mc_overlap(&SpdMatrix::diagonal(&[4.0, 1.0]).unwrap(), &SpdMatrix::identity(2), 0.2, 20_000, 4).unwrap()))),
        (
            "spectral",
            Box::new(|| {
                let data = generate_scenario(&null_d2(30, 1, 0.3, Method::Spectral, 1).scenario, &mut stream(13, 0)).unwrap();
                to_json_line(&spectral_test(&data, Bandwidths::common(0.3).unwrap(), 20_000, 5).unwrap())
            }),
        ),
        (
            "permutation",
            Box::new(|| {
                let data = generate_scenario(&null_d2(30, 1, 0.3, Method::Spectral, 1).scenario, &mut stream(14, 0)).unwrap();
                to_json_line(&permutation_test(&data, Bandwidths::new(0.3, 0.5).unwrap(), 199, 6).unwrap())
            }),
        ),
        ("experiment", Box::new(|| to_json_line(&run_experiment(&null_d2(20, 40, 0.3, Method::Permutation, 7)).unwrap()))),
        (
            "clt",
            Box::new(|| {
                let mut cfg = null_d2(20, 20, 0.3, Method::Gaussian, 8);
                cfg.scenario.d = 1;
                cfg.scenario.nu1 = 4.0;
                cfg.scenario.sigma1 = vec![vec![0.5]];
                to_json_line(&clt_diagnostic(&cfg).unwrap())
            }),
        ),
    ];
    let mut failures = Vec::new();
    for (name, f) in &pathways {
        let reference = in_pool(1, f);
        for threads in [1, 2, 4] {
            if in_pool(threads, f) != reference {
                failures.push(format!("{name}@{threads}"));
            }
        }
    }
    let (a, b) = (fixture("d2_a.csv"), fixture("d2_b.csv"));
    let cli = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_cone-test"))
            .args(["--threads", threads, "test", "--dim", "2", "--method", "all", "--seed", "12", "--perms", "99", "--draws", "5000"])
            .arg("--sample1")
            .arg(&a)
            .arg("--sample2")
            .arg(&b)
            .output()
            .unwrap()
            .stdout
    };
    let reference = cli("1");
    for threads in ["1", "3", "8"] {
        if cli(threads) != reference {
            failures.push(format!("cli@{threads}"));
        }
    }
    let checked = pathways.len() + 1;
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} pathways byte-identical across repeated runs with 1, 2, 4 (CLI: 1, 3, 8) workers")
        } else {
            format!("differences in {}", failures.join(", "))
        },
    )
}

fn main() {
    let th = thresholds();
    let criteria: Vec<Criterion> = vec![
        ("closed-form overlap vs quadrature (d=1)", Box::new(criterion_1)),
        ("closed-form overlap vs Monte Carlo (d=2)", Box::new(criterion_2)),
        ("diagonal identity", Box::new(criterion_3)),
        ("centering asymptotics and v_d", Box::new(criterion_4)),
        ("kernel mass identity", Box::new(criterion_5)),
        ("statistic path equality", Box::new(criterion_6)),
        ("shrinking-bandwidth CLT", Box::new(|| criterion_7(&th))),
        ("spectral calibration", Box::new(|| criterion_8(&th))),
        ("permutation level", Box::new(|| criterion_9(&th))),
        ("rotation sensitivity", Box::new(|| criterion_10(&th))),
        ("invariance suite", Box::new(criterion_11)),
        ("determinism", Box::new(criterion_12)),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {} [{:.1}s]", k + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: criteria {failed:?} failed");
        std::process::exit(1);
    }
}
