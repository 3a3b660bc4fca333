//! Acceptance suite: one test per criterion, each printing a `[PASS]` or
//! `[FAIL]` line. Run with `--nocapture` to see them.
//!
//! The Monte Carlo criteria hold a shared lock while they run so that their
//! wall-clock budgets are not inflated by sibling tests on small machines.

use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tensor_mp::config::{make_tau, EntryLaw, ModelKind, ModelParams, TauSpec};
use tensor_mp::experiment::{
    run_convergence, run_model_comparison, run_unit_sphere, KSchedule, SweepPlan, SweepResult,
    KS_MP_THRESHOLD_N30, LEVY_MODELS_THRESHOLD_N30,
};
use tensor_mp::gram::{build_correlation_gram, build_gram};
use tensor_mp::metrics::{
    column_normalization_sides, levy_feasible, levy_perturbation_sides, EmpiricalCdf, LEVY_TOL,
};
use tensor_mp::mp::MpLaw;
use tensor_mp::sampler::{norm_moment_check, sample_base, BaseSample};
use tensor_mp::selftest::run_selftest;
use tensor_mp::spectrum::{eigenvalues, esd, hermitian_eigenvalues};

fn heavy() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(criterion: u32, what: &str, passed: bool, detail: String) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion}: {what} ({detail})");
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn cz(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    cz(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Weights as documented for the config: two-point fills the first
/// `floor(weight * m)` slots with `a`.
fn tau_values(spec: &TauSpec, m: usize) -> Vec<f64> {
    match spec {
        TauSpec::ConstantOne => vec![1.0; m],
        TauSpec::TwoPoint { a, b, weight } => {
            let split = (weight * m as f64).floor() as usize;
            (0..m).map(|i| if i < split { *a } else { *b }).collect()
        }
        TauSpec::ExplicitList { values } => values.clone(),
    }
}

/// Kronecker product of the levels of sample `alpha`, first level most
/// significant.
fn tensor_vector(sample: &BaseSample, alpha: usize) -> Vec<Complex64> {
    let mut v = vec![cz(1.0, 0.0)];
    for l in 0..sample.k() {
        let level = sample.level(alpha, l);
        v = v
            .iter()
            .flat_map(|a| level.iter().map(move |b| a * b))
            .collect();
    }
    v
}

/// The `N x N` model matrix built entry by entry.
fn dense_model(sample: &BaseSample, tau: &[f64], model: ModelKind) -> DMatrix<Complex64> {
    let vectors: Vec<Vec<Complex64>> = (0..sample.m()).map(|a| tensor_vector(sample, a)).collect();
    let big_n = vectors[0].len();
    let mut m = DMatrix::from_element(big_n, big_n, cz(0.0, 0.0));
    for (y, &t) in vectors.iter().zip(tau) {
        let weight = match model {
            ModelKind::Correlation => t / y.iter().map(|z| z.norm_sqr()).sum::<f64>(),
            ModelKind::Covariance => t / big_n as f64,
        };
        for i in 0..big_n {
            for j in 0..big_n {
                m[(i, j)] += y[i] * y[j].conj() * weight;
            }
        }
    }
    m
}

fn nonzero_sorted(mut eigs: Vec<f64>) -> Vec<f64> {
    let largest = eigs.iter().copied().fold(0.0, f64::max);
    eigs.retain(|&e| e > 1e-9 * largest.max(1.0));
    eigs.sort_by(f64::total_cmp);
    eigs
}

#[test]
fn criterion_01_gram_oracle() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut count_mismatch = None;
    for seed in [0u64, 1, 2] {
        for n in [2u64, 3] {
            for k in [1u32, 2, 3] {
                for m in 1..=5u64 {
                    let big_n = n.pow(k);
                    let params = ModelParams::new(n, k, m as f64 / big_n as f64).with_seed(seed);
                    let sample = sample_base(&params, 0).unwrap();
                    assert_eq!(sample.m() as u64, m);
                    let tau = make_tau(&params.tau, sample.m()).unwrap();
                    for model in [ModelKind::Correlation, ModelKind::Covariance] {
                        let fast = nonzero_sorted(
                            eigenvalues(&build_gram(&sample, &tau, model).unwrap()).unwrap(),
                        );
                        let dense =
                            dense_model(&sample, &tau_values(&params.tau, m as usize), model);
                        let slow =
                            nonzero_sorted(dense.symmetric_eigenvalues().iter().copied().collect());
                        cases += 1;
                        if fast.len() != slow.len() {
                            count_mismatch = Some((n, k, m, seed, fast.len(), slow.len()));
                            continue;
                        }
                        for (a, b) in fast.iter().zip(&slow) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "Gram path matches the dense n^k matrix",
        count_mismatch.is_none() && worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("{cases} cases, max |diff| {worst:.2e}, rank mismatch {count_mismatch:?}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_trace_identity() {
    let taus = [
        TauSpec::ConstantOne,
        TauSpec::TwoPoint {
            a: 1.0,
            b: 2.0,
            weight: 0.5,
        },
        TauSpec::TwoPoint {
            a: 0.5,
            b: 3.0,
            weight: 0.25,
        },
    ];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in [0u64, 1, 2] {
        for tau_spec in &taus {
            for (n, k, c) in [
                (2u64, 1u32, 1.0),
                (3, 2, 0.5),
                (4, 3, 0.2),
                (6, 2, 0.7),
                (10, 2, 0.5),
            ] {
                for law in EntryLaw::ALL {
                    let params = ModelParams::new(n, k, c)
                        .with_seed(seed)
                        .with_law(law)
                        .with_tau(tau_spec.clone());
                    let sample = sample_base(&params, 0).unwrap();
                    let tau = make_tau(tau_spec, sample.m()).unwrap();
                    let total: f64 = tau_values(tau_spec, sample.m()).iter().sum();
                    let eigs =
                        eigenvalues(&build_correlation_gram(&sample, &tau).unwrap()).unwrap();
                    worst = worst.max((eigs.iter().sum::<f64>() - total).abs() / total);
                    cases += 1;
                }
            }
        }
    }
    let suite = run_selftest(0);
    let suite_trace = suite
        .checks
        .iter()
        .find(|c| c.name == "trace identity")
        .unwrap();
    verdict(
        2,
        "sum of correlation eigenvalues equals sum of tau",
        worst <= 1e-9 && suite_trace.passed,
        format!(
            "{cases} samples, max relative error {worst:.2e}; selftest samples {:.2e}",
            suite_trace.max_residual
        ),
    );
}

#[test]
fn criterion_03_column_normalization_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut lib_gap: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8usize);
        let p = rng.random_range(1..=8usize);
        let a = DMatrix::from_fn(n, p, |_, _| gaussian(&mut rng));
        let lambda: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..3.0)).collect();

        // both sides evaluated directly, entry by entry
        let root_n = (n as f64).sqrt();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for j in 0..p {
            let norm = (0..n).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            let col: f64 = (0..n)
                .map(|i| (a[(i, j)] / root_n - a[(i, j)] / norm).norm_sqr())
                .sum();
            lhs += lambda[j] * col;
            rhs += lambda[j] * (norm * norm / n as f64 - 1.0)
                - 2.0 * lambda[j] * (norm / root_n - 1.0);
        }
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));

        let (lib_lhs, lib_rhs) = column_normalization_sides(&a, &lambda).unwrap();
        worst = worst.max((lib_lhs - lib_rhs).abs() / (1.0 + lib_lhs.abs()));
        lib_gap = lib_gap
            .max((lib_lhs - lhs).abs())
            .max((lib_rhs - rhs).abs());
    }
    verdict(
        3,
        "column-normalization trace identity",
        worst <= 1e-10 && lib_gap <= 1e-10,
        format!("100 instances, max scaled residual {worst:.2e}, library vs direct {lib_gap:.2e}"),
    );
}

#[test]
fn criterion_04_levy_perturbation_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = f64::NEG_INFINITY;
    let mut rhs_gap: f64 = 0.0;
    let mut levy_exact = true;
    for _ in 0..200 {
        let a = DMatrix::from_fn(5, 8, |_, _| gaussian(&mut rng));
        let scale = 10f64.powf(rng.random_range(-3.0..0.5));
        let b = DMatrix::from_fn(5, 8, |i, j| a[(i, j)] + gaussian(&mut rng) * scale);
        let (lhs, rhs) = levy_perturbation_sides(&a, &b).unwrap();

        let sq = |m: &DMatrix<Complex64>| m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let direct_rhs = 2.0 / 25.0 * sq(&(&a - &b)) * (sq(&a) + sq(&b));
        rhs_gap = rhs_gap.max((rhs - direct_rhs).abs() / direct_rhs.max(1e-300));
        worst = worst.max(lhs - direct_rhs);

        // the reported Lévy distance must be feasible and within 1e-9 of the infimum
        let cdf = |m: &DMatrix<Complex64>| {
            let mut h = m * m.adjoint();
            h = (&h + h.adjoint()) * cz(0.5, 0.0);
            EmpiricalCdf::from_spectral(&esd(&hermitian_eigenvalues(&h).unwrap(), 5).unwrap())
        };
        let (fa, fb) = (cdf(&a), cdf(&b));
        let levy = lhs.powf(0.25);
        if !levy_feasible(&fa, &fb, levy * (1.0 + 1e-12))
            || (levy > 2.0 * LEVY_TOL && levy_feasible(&fa, &fb, levy - 2.0 * LEVY_TOL))
        {
            levy_exact = false;
        }
    }
    verdict(
        4,
        "L^4 <= (2/p^2) Tr((A-B)(A-B)*) Tr(AA* + BB*)",
        worst <= 1e-12 && rhs_gap <= 1e-12 && levy_exact,
        format!("200 pairs of 5x8, max lhs - rhs {worst:.2e}, levy resolved to {LEVY_TOL:e}: {levy_exact}"),
    );
}

#[test]
fn criterion_05_norm_moments() {
    let unit = ModelParams::new(10, 3, 0.001).with_law(EntryLaw::UnitCircle);
    let exact = norm_moment_check(&unit, 10_000).unwrap();
    let sample = sample_base(
        &ModelParams::new(10, 3, 0.01).with_law(EntryLaw::UnitCircle),
        0,
    )
    .unwrap();
    let direct_worst = (0..sample.m())
        .map(|a| {
            let sq: f64 = tensor_vector(&sample, a).iter().map(|z| z.norm_sqr()).sum();
            (sq / 1000.0 - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let unit_ok = exact.second.std_error == 0.0
        && exact.fourth.std_error == 0.0
        && exact.second.estimate == 1.0
        && exact.fourth.estimate == 1.0
        && direct_worst < 1e-12;

    let gauss = norm_moment_check(&ModelParams::new(10, 3, 0.001).with_seed(3), 10_000).unwrap();
    let target = 1.331; // (1 + 1/10)^3 for E|x|^4 = 2
    let z = (gauss.fourth.estimate - target) / gauss.fourth.std_error;
    verdict(
        5,
        "tensor norm moments",
        unit_ok && z.abs() <= 4.0 && gauss.fourth.target == (1.1f64).powi(3),
        format!(
            "unit circle: zero variance {unit_ok}; gaussian n=10 k=3: E||Y||^4/n^6 = {:.5} ± {:.5}, z = {z:.2}",
            gauss.fourth.estimate, gauss.fourth.std_error
        ),
    );
}

/// Closed-form MP moments (Narayana polynomials).
fn mp_moment_exact(c: f64, q: u32) -> f64 {
    let binom = |n: u32, k: u32| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (0..q)
        .map(|r| c.powi(r as i32 + 1) / (r as f64 + 1.0) * binom(q, r) * binom(q - 1, r))
        .sum()
}

#[test]
fn criterion_06_mp_analytics() {
    let start = Instant::now();
    let mut mass_err: f64 = 0.0;
    let mut mean_err: f64 = 0.0;
    for c in [0.1, 0.25, 0.5, 0.9, 1.0] {
        let law = MpLaw::new(c).unwrap();
        let atom = (1.0 - c).max(0.0);
        mass_err = mass_err.max((law.continuous_mass() - (1.0 - atom)).abs());
        mean_err = mean_err.max((law.moment(1) - c).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        6,
        "MP normalization and first moment",
        mass_err <= 1e-8 && mean_err <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max mass error {mass_err:.2e}, max |moment(1) - c| {mean_err:.2e}, {elapsed:.2?}"),
    );
}

struct Convergence {
    result: SweepResult,
    elapsed: Duration,
}

fn desk_plan(tau: TauSpec, law: EntryLaw, ns: &[u64], replicas: u32) -> SweepPlan {
    let template = ModelParams::new(10, 2, 0.5)
        .with_tau(tau)
        .with_law(law)
        .with_replicas(replicas);
    SweepPlan::grid(&template, ns, &[0.5], KSchedule::FixedK { k: 2 })
}

/// `tau = 1`, Gaussian, `k = 2`, `c = 0.5`, five replicas at `n = 10, 20, 30`;
/// shared by the convergence, product-state and moment criteria. Callers hold
/// the heavy lock.
fn convergence() -> &'static Convergence {
    static CELL: OnceLock<Convergence> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let plan = desk_plan(
            TauSpec::ConstantOne,
            EntryLaw::ComplexGaussian,
            &[10, 20, 30],
            5,
        );
        let result = run_convergence(&plan).unwrap();
        Convergence {
            result,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_07_convergence_to_mp() {
    let _guard = heavy();
    let run = convergence();
    let ks = |n| run.result.summary(n, 0.5).unwrap().ks_mp.unwrap();
    let (k10, k20, k30) = (ks(10), ks(20), ks(30));
    verdict(
        7,
        "KS distance to MP shrinks with n",
        k30.mean < KS_MP_THRESHOLD_N30 && k30.mean < k10.mean && run.elapsed < Duration::from_secs(30),
        format!(
            "mean KS n=10 {:.5}, n=20 {:.5}, n=30 {:.5} ± {:.5} (threshold {KS_MP_THRESHOLD_N30}), {:.2?}",
            k10.mean, k20.mean, k30.mean, k30.std_error, run.elapsed
        ),
    );
}

#[test]
fn criterion_08_model_comparison() {
    let _guard = heavy();
    let two_point = TauSpec::TwoPoint {
        a: 1.0,
        b: 2.0,
        weight: 0.5,
    };
    let gauss = run_model_comparison(&desk_plan(
        two_point.clone(),
        EntryLaw::ComplexGaussian,
        &[10, 20, 30],
        5,
    ))
    .unwrap();
    let levy = |n| gauss.summary(n, 0.5).unwrap().levy_models;
    let (l10, l20, l30) = (levy(10), levy(20), levy(30));

    let mut unit_rows = 0;
    let mut unit_max: f64 = 0.0;
    for (law, ns) in [
        (EntryLaw::UnitCircle, &[10u64, 20, 30][..]),
        (EntryLaw::Rademacher, &[10, 20][..]),
    ] {
        let r = run_model_comparison(&desk_plan(two_point.clone(), law, ns, 2)).unwrap();
        unit_rows += r.rows.len();
        unit_max = r
            .rows
            .iter()
            .map(|row| row.levy_models)
            .fold(unit_max, f64::max);
    }
    verdict(
        8,
        "correlation and covariance ESDs merge; unit-modulus laws coincide",
        l30.mean < l10.mean && l30.mean < LEVY_MODELS_THRESHOLD_N30 && unit_max == 0.0,
        format!(
            "mean Lévy n=10 {:.5}, n=20 {:.5}, n=30 {:.5} (threshold {LEVY_MODELS_THRESHOLD_N30}); unit-modulus max {unit_max} over {unit_rows} rows",
            l10.mean, l20.mean, l30.mean
        ),
    );
}

#[test]
fn criterion_09_unit_sphere_construction() {
    let _guard = heavy();
    let run = convergence();
    let reference = run.result.summary(30, 0.5).unwrap().ks_mp.unwrap();
    let point = ModelParams::new(30, 2, 0.5).with_replicas(5);
    let report = run_unit_sphere(&point).unwrap();
    let own = report.sphere_stat();
    verdict(
        9,
        "normalized-Gaussian construction equals the correlation model",
        report.max_entry_diff <= 1e-12 && report.matches(&reference, 2.0),
        format!(
            "max entry diff {:.2e}; sphere KS {:.5} ± {:.5} vs convergence {:.5} ± {:.5}",
            report.max_entry_diff, own.mean, own.std_error, reference.mean, reference.std_error
        ),
    );
}

#[test]
fn criterion_10_empirical_moments() {
    let _guard = heavy();
    let run = convergence();
    let rows: Vec<_> = run.result.rows.iter().filter(|r| r.n == 30).collect();
    let ratio = rows[0].m as f64 / rows[0].ambient_dim as f64;
    let first_exact = rows.iter().all(|r| (r.m1 - ratio).abs() <= 1e-12 * ratio);
    let law = MpLaw::new(ratio).unwrap();
    let summary = run.result.summary(30, 0.5).unwrap();
    let mut ok = first_exact;
    let mut detail = format!("q=1 equals m/N = {ratio}: {first_exact}");
    for q in 2..=4u32 {
        let stat = summary.moments[q as usize - 1];
        let quad = law.moment(q);
        let exact = mp_moment_exact(ratio, q);
        let z = (stat.mean - quad) / stat.std_error;
        ok &= z.abs() <= 3.0 && (quad - exact).abs() <= 1e-9 * exact;
        detail.push_str(&format!(
            "; q={q}: {:.5} vs {quad:.5}, z = {z:.2}",
            stat.mean
        ));
    }
    verdict(10, "ESD moments match MP moments", ok, detail);
}

#[test]
fn criterion_11_thread_count_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let plan = serde_json::json!({
        "points": [
            {"n": 6, "k": 2, "c": 0.5, "model": "correlation", "entry_law": "complexgaussian",
             "tau": {"kind": "constantone"}, "seed": 7, "replicas": 3},
            {"n": 8, "k": 2, "c": 0.25, "model": "covariance", "entry_law": "realgaussian",
             "tau": {"kind": "twopoint", "a": 1.0, "b": 2.0, "weight": 0.5}, "seed": 7, "replicas": 3},
            {"n": 5, "k": 3, "c": 0.1, "model": "correlation", "entry_law": "rademacher",
             "tau": {"kind": "constantone"}, "seed": 7, "replicas": 2}
        ]
    });
    let config = dir.path().join("plan.json");
    std::fs::write(&config, plan.to_string()).unwrap();
    let run = |threads: &str, out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_tensor-mp"))
            .args([
                "--config",
                config.to_str().unwrap(),
                "--threads",
                threads,
                "--seed",
                "11",
            ])
            .arg("--out")
            .arg(out)
            .arg("sweep")
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("sweep.csv")).unwrap()
    };
    let one = run("1", &dir.path().join("t1"));
    let eight = run("8", &dir.path().join("t8"));
    let rows = String::from_utf8_lossy(&one).lines().count() - 1;
    verdict(
        11,
        "sweep output is byte-identical for 1 and 8 threads",
        one == eight && rows == 8,
        format!("{} bytes, {rows} rows", one.len()),
    );
}
