//! Acceptance suite. Runs every criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p smoothcop --test acceptance -- 3 5`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smoothcop::benchmark::{run_experiment, ExperimentConfig, PerformanceReport};
use smoothcop::estimators::{
    empirical_beta_copula, margin_defect, mixture_oracle, smooth_estimator, Estimator, EstimatorKind, SmoothSpec,
    SurvivalCopula,
};
use smoothcop::margins::{margin_log_tails, MarginFamily};
use smoothcop::models::{CopulaFamily, CopulaModel};
use smoothcop::numerics::{reg_inc_beta, ShapePair};
use smoothcop::ranks::{maximal_ranks, ObservationMatrix, RankMatrix};
use smoothcop::sequential::{equivalence_check, ProcessGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const MARGINS: [MarginFamily; 6] = [
    MarginFamily::ScaledBinomial,
    MarginFamily::ScaledBetaBinomial { rho: 2.0 },
    MarginFamily::ScaledBetaBinomial { rho: 4.0 },
    MarginFamily::Beta { rho: 0.5 },
    MarginFamily::Beta { rho: 2.0 },
    MarginFamily::Beta { rho: 4.0 },
];

fn fixed_models(d: usize) -> Vec<CopulaModel> {
    if d == 2 {
        vec![
            CopulaModel::frank(-3.0, 2).unwrap(),
            CopulaModel::gaussian(0.5).unwrap(),
            CopulaModel::khoudraji_clayton(0.3, 0.7, 2.0).unwrap(),
        ]
    } else {
        vec![
            CopulaModel::clayton(2.0, d).unwrap(),
            CopulaModel::gumbel_hougaard(1.5, d).unwrap(),
            CopulaModel::frank(4.0, d).unwrap(),
        ]
    }
}

/// Every smooth estimator configuration of the library, for dimension `d`.
fn all_specs(d: usize) -> Vec<SmoothSpec> {
    let mut specs = Vec::new();
    for margin in MARGINS {
        specs.push(SmoothSpec::new(margin, SurvivalCopula::Independence));
        specs.push(SmoothSpec::new(margin, SurvivalCopula::EmpiricalBetaPilot));
        for model in fixed_models(d) {
            specs.push(SmoothSpec::new(margin, SurvivalCopula::Fixed(model)));
        }
    }
    specs
}

fn data_models(d: usize) -> Vec<CopulaModel> {
    let mut models = vec![CopulaModel::independence(d).unwrap()];
    models.extend(fixed_models(d));
    models
}

fn sample(model: &CopulaModel, n: usize, seed: u64) -> (ObservationMatrix, RankMatrix) {
    let x = model.sample(n, seed).unwrap();
    let r = maximal_ranks(&x, (1, n)).unwrap();
    assert!(!r.has_ties());
    (x, r)
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

// 1. Smooth estimator with binomial margins and independence equals the empirical beta copula.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let spec = SmoothSpec::new(MarginFamily::ScaledBinomial, SurvivalCopula::Independence);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for s in 0..500 {
        let d = 2 + s % 2;
        let n = rng.random_range(1..=100);
        let models = data_models(d);
        let (_, ranks) = sample(&models[s % models.len()], n, 1000 + s as u64);
        for k in 0..20 {
            let mut u = random_point(&mut rng, d);
            if k == 0 {
                u[0] = 1.0;
            }
            let a = smooth_estimator(&ranks, &spec, &u).unwrap();
            let b = empirical_beta_copula(&ranks, &u).unwrap();
            worst = worst.max((a - b).abs());
            pairs += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{pairs} pairs, max |difference| = {worst:.3e} (tolerance 1e-12)"))
}

fn binomial_tail_by_enumeration(n: usize, r: usize, x: f64) -> f64 {
    let mut total = 0.0;
    let mut choose = 1.0;
    for k in 0..=n {
        if k > 0 {
            choose = choose * (n + 1 - k) as f64 / k as f64;
        }
        if k >= r {
            total += choose * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32);
        }
    }
    total
}

// 2. Beta distribution function equals the binomial survival function.
fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=20 {
        for r in 1..=n {
            for i in 0..=200 {
                let x = i as f64 / 200.0;
                let beta = reg_inc_beta(x, ShapePair::new(r as f64, (n + 1 - r) as f64).unwrap()).unwrap();
                worst = worst.max((beta - binomial_tail_by_enumeration(n, r, x)).abs());
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{cases} (n, r, x) cases, max |difference| = {worst:.3e} (tolerance 1e-12)"))
}

// 3. Uniform margins.
fn criterion_3() -> Outcome {
    let mut worst_discrete: f64 = 0.0;
    let mut worst_beta_ratio: f64 = 0.0;
    for (i, n) in [10usize, 50, 200].into_iter().enumerate() {
        for d in [2usize, 3] {
            let models = data_models(d);
            let (_, ranks) = sample(&models[(i + d) % models.len()], n, 30 + n as u64 + d as u64);
            for spec in all_specs(d) {
                let est = Estimator::new(ranks.clone(), EstimatorKind::Smooth(spec)).unwrap();
                let defect = margin_defect(&est, 51).unwrap();
                if spec.margin.is_discrete() {
                    worst_discrete = worst_discrete.max(defect);
                } else {
                    worst_beta_ratio = worst_beta_ratio.max(defect * 2.0 * n as f64);
                }
            }
        }
    }
    outcome(
        worst_discrete <= 1e-12 && worst_beta_ratio <= 1.0,
        format!(
            "discrete margins max defect = {worst_discrete:.3e} (tolerance 1e-12); beta margins max defect * 2n = {worst_beta_ratio:.4} (bound 1)"
        ),
    )
}

fn box_volume(est: &Estimator, lo: &[f64], hi: &[f64]) -> f64 {
    let d = lo.len();
    let mut corner = vec![0.0; d];
    let mut total = 0.0;
    for mask in 0..(1usize << d) {
        let mut lows = 0;
        for j in 0..d {
            if mask >> j & 1 == 1 {
                corner[j] = hi[j];
            } else {
                corner[j] = lo[j];
                lows += 1;
            }
        }
        let sign = if lows % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * est.evaluate(&corner).unwrap();
    }
    total
}

// 4. Groundedness, C(1, ..., 1) = 1 and d-increasingness.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_ground: f64 = 0.0;
    let mut worst_top: f64 = 0.0;
    let mut min_volume = f64::INFINITY;
    let mut checked = 0;
    for d in [2usize, 3] {
        let models = data_models(d);
        let mut kinds = vec![EstimatorKind::EmpiricalBeta];
        kinds.extend(all_specs(d).into_iter().map(EstimatorKind::Smooth));
        for (k, kind) in kinds.into_iter().enumerate() {
            let n = 8 + (k * 7) % 23;
            let (_, ranks) = sample(&models[k % models.len()], n, 4000 + (d * 100 + k) as u64);
            let est = Estimator::new(ranks, kind).unwrap();
            worst_top = worst_top.max((est.evaluate(&vec![1.0; d]).unwrap() - 1.0).abs());
            for _ in 0..1000 {
                let a = random_point(&mut rng, d);
                let b = random_point(&mut rng, d);
                let lo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect();
                let hi: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
                min_volume = min_volume.min(box_volume(&est, &lo, &hi));
                let mut grounded = a.clone();
                grounded[rng.random_range(0..d)] = 0.0;
                worst_ground = worst_ground.max(est.evaluate(&grounded).unwrap().abs());
            }
            checked += 1;
        }
    }
    outcome(
        worst_ground <= 1e-12 && worst_top <= 1e-12 && min_volume >= -1e-10,
        format!(
            "{checked} estimators x 1000 boxes: max |C(u with a zero)| = {worst_ground:.3e}, max |C(1) - 1| = {worst_top:.3e}, min box volume = {min_volume:.3e} (tolerance -1e-10)"
        ),
    )
}

// 5. The smoothing survival function is strictly increasing in t at every threshold.
fn criterion_5() -> Outcome {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for n in [5usize, 20, 100] {
        let mut families = vec![MarginFamily::ScaledBinomial];
        for rho in [0.5, 2.0, 4.0] {
            families.push(MarginFamily::Beta { rho });
            if rho > 1.0 {
                families.push(MarginFamily::ScaledBetaBinomial { rho });
            }
        }
        for family in families {
            let thresholds: Vec<f64> = if family.is_discrete() {
                (0..n).map(|k| k as f64).collect()
            } else {
                (1..100).map(|k| k as f64 / 100.0).collect()
            };
            for &w in &thresholds {
                let tails: Vec<(f64, f64)> =
                    (0..=100).map(|i| margin_log_tails(family, n, i as f64 / 100.0, w).unwrap()).collect();
                for (i, pair) in tails.windows(2).enumerate() {
                    let ((s0, f0), (s1, f1)) = (pair[0], pair[1]);
                    checked += 1;
                    if !(s1 > s0 || f1 < f0) {
                        failures.push(format!("{family:?} n={n} w={w} t={}", i as f64 / 100.0));
                    }
                }
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{checked} consecutive t steps, all strictly increasing"),
        Some(first) => format!("{} of {checked} steps not increasing, first at {first}", failures.len()),
    };
    outcome(failures.is_empty(), detail)
}

// 6. Var(W) = rho * u(1-u)/n.
fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [2usize, 5, 10, 20, 50, 100] {
        for rho in [1.5, 2.0, 4.0, 0.5, 0.9 * n as f64] {
            for i in 1..20 {
                let t = i as f64 / 20.0;
                let target = rho * t * (1.0 - t) / n as f64;
                if rho > 1.0 && rho < n as f64 {
                    let bb = MarginFamily::ScaledBetaBinomial { rho };
                    let law = bb.law(n, t).unwrap();
                    let pmf = match law {
                        smoothcop::margins::MarginLaw::Counts { pmf, .. } => pmf,
                        other => panic!("unexpected law {other:?}"),
                    };
                    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| p * k as f64 / n as f64).sum();
                    let second: f64 = pmf.iter().enumerate().map(|(k, p)| p * (k as f64 / n as f64).powi(2)).sum();
                    worst = worst.max((second - mean * mean - target).abs());
                }
                if rho < n as f64 {
                    let shapes = MarginFamily::Beta { rho }.shapes(n, t).unwrap().unwrap();
                    let (a, b) = (shapes.a(), shapes.b());
                    let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
                    worst = worst.max((var - target).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max |Var(W) - rho u(1-u)/n| = {worst:.3e} (tolerance 1e-10)"))
}

// 7. Closed form versus simulation of the smoothing mixture.
fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_z: f64 = 0.0;
    let mut pilot_triples = 0;
    for i in 0..50 {
        let d = 2 + i % 2;
        let specs = all_specs(d);
        let spec = specs[(i * 7) % specs.len()];
        if spec.survival_copula == SurvivalCopula::EmpiricalBetaPilot {
            pilot_triples += 1;
        }
        let n = rng.random_range(5..=10);
        let models = data_models(d);
        let (_, ranks) = sample(&models[i % models.len()], n, 7000 + i as u64);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.95)).collect();
        let closed = smooth_estimator(&ranks, &spec, &u).unwrap();
        let oracle = mixture_oracle(&ranks, &spec, &u, 1_000_000, 70_000 + i as u64).unwrap();
        let z = (closed - oracle.value).abs() / oracle.std_error.max(1e-300);
        if (closed - oracle.value).abs() > 1e-12 {
            worst_z = worst_z.max(z);
        }
    }
    outcome(
        worst_z <= 4.0,
        format!("50 triples ({pilot_triples} with the pilot survival copula), max |z| = {worst_z:.2} (bound 4)"),
    )
}

fn benchmark(model: CopulaModel, estimators: Vec<EstimatorKind>) -> PerformanceReport {
    run_experiment(&ExperimentConfig { model, n: 30, reps: 2000, nodes: 1024, estimators, seed: 2024 }).unwrap()
}

// 8. Unbiasedness of the empirical beta copula form under independence.
fn criterion_8() -> Outcome {
    let spec = SmoothSpec::new(MarginFamily::ScaledBinomial, SurvivalCopula::Independence);
    let report = benchmark(CopulaModel::independence(2).unwrap(), vec![EstimatorKind::Smooth(spec)]);
    let p = &report.estimators[0];
    let z = p.isb_unclamped / p.se_isb;
    outcome(
        z.abs() <= 3.0,
        format!("ISB = {:.3e} (unclamped), SE = {:.3e}, |z| = {:.2} (bound 3)", p.isb_unclamped, p.se_isb, z.abs()),
    )
}

// 9. Beta-binomial rho = 4 with the pilot beats the empirical beta copula.
fn criterion_9() -> Outcome {
    let smooth = EstimatorKind::Smooth(SmoothSpec::new(
        MarginFamily::ScaledBetaBinomial { rho: 4.0 },
        SurvivalCopula::EmpiricalBetaPilot,
    ));
    let cases = [
        ("Clayton tau=0.5", CopulaModel::from_tau(CopulaFamily::Clayton, 0.5, 2).unwrap()),
        ("Frank tau=-0.3", CopulaModel::from_tau(CopulaFamily::Frank, -0.3, 2).unwrap()),
        ("Gumbel-Hougaard d=3 tau=0.25", CopulaModel::from_tau(CopulaFamily::GumbelHougaard, 0.25, 3).unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model) in cases {
        let report = benchmark(model, vec![smooth, EstimatorKind::EmpiricalBeta]);
        let (a, b) = (&report.estimators[0], &report.estimators[1]);
        let margin = b.imse - a.imse;
        let combined = (a.se_imse.powi(2) + b.se_imse.powi(2)).sqrt();
        let (_, paired) = report.imse_difference(1, 0);
        let ok = margin > 2.0 * combined;
        pass &= ok;
        parts.push(format!(
            "{name}: IMSE {:.4e} vs {:.4e}, margin/combined SE = {:.2} (paired {:.1}){}",
            a.imse,
            b.imse,
            margin / combined,
            margin / paired,
            if ok { "" } else { " FAIL" }
        ));
    }
    outcome(pass, parts.join("; "))
}

// Nonincreasing, allowing one increase within two combined standard errors.
fn nonincreasing_with_one_inversion(medians: &[f64], ses: &[f64]) -> bool {
    let mut inversions = 0;
    for i in 1..medians.len() {
        if medians[i] > medians[i - 1] {
            inversions += 1;
            let combined = (ses[i].powi(2) + ses[i - 1].powi(2)).sqrt();
            if medians[i] - medians[i - 1] > 2.0 * combined {
                return false;
            }
        }
    }
    inversions <= 1
}

// 10. Decay of the sup distance between the smoothed and classical sequential processes.
fn criterion_10() -> Outcome {
    let model = CopulaModel::independence(2).unwrap();
    let grid = ProcessGrid::default_for(2).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for margin in
        [MarginFamily::ScaledBinomial, MarginFamily::ScaledBetaBinomial { rho: 4.0 }, MarginFamily::Beta { rho: 4.0 }]
    {
        let spec = SmoothSpec::new(margin, SurvivalCopula::Independence);
        let rows = equivalence_check(&model, spec, &[50, 100, 200, 400], 50, &grid, 1010).unwrap();
        let medians: Vec<f64> = rows.iter().map(|r| r.median_sup).collect();
        let ses: Vec<f64> = rows.iter().map(|r| r.median_se).collect();
        let ok = nonincreasing_with_one_inversion(&medians, &ses);
        pass &= ok;
        let seq: Vec<String> = medians.iter().map(|m| format!("{m:.4}")).collect();
        parts.push(format!("{}: {}{}", EstimatorKind::Smooth(spec), seq.join(" > "), if ok { "" } else { " FAIL" }));
    }
    outcome(pass, parts.join("; "))
}

// 11. Stochastic pipelines are bit-identical across runs and thread counts.
fn criterion_11() -> Outcome {
    let run = || {
        let model = CopulaModel::from_tau(CopulaFamily::Clayton, 0.5, 2).unwrap();
        let x = model.sample(200, 7).unwrap();
        let ranks = maximal_ranks(&x, (1, 30)).unwrap();
        let spec = SmoothSpec::new(MarginFamily::Beta { rho: 2.0 }, SurvivalCopula::EmpiricalBetaPilot);
        let oracle = mixture_oracle(&ranks, &spec, &[0.3, 0.6], 300_000, 9).unwrap();
        let report = run_experiment(&ExperimentConfig {
            model,
            n: 25,
            reps: 40,
            nodes: 64,
            estimators: vec![EstimatorKind::EmpiricalBeta, EstimatorKind::Smooth(spec)],
            seed: 11,
        })
        .unwrap();
        let seq = equivalence_check(
            &model,
            SmoothSpec::new(MarginFamily::ScaledBetaBinomial { rho: 2.0 }, SurvivalCopula::Independence),
            &[20, 40],
            20,
            &ProcessGrid::default_for(2).unwrap(),
            13,
        )
        .unwrap();
        format!("{x:?}{oracle:?}{report:?}{seq:?}")
    };
    let mut outputs = Vec::new();
    for threads in [1, 3, 1] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        outputs.push(pool.install(run));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(same, "sampler, oracle, benchmark and sequential check re-run on 1, 3 and 1 threads".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("beta-copula equivalence", criterion_1),
        ("beta cdf / binomial survival identity", criterion_2),
        ("uniform margins", criterion_3),
        ("genuine copula", criterion_4),
        ("monotone smoothing margins", criterion_5),
        ("variance identities", criterion_6),
        ("oracle equivalence", criterion_7),
        ("unbiasedness under independence", criterion_8),
        ("IMSE ordering against the empirical beta copula", criterion_9),
        ("sequential process equivalence decay", criterion_10),
        ("determinism", criterion_11),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!("criterion {number:>2} {verdict} [{name}] {} ({:.1}s)", result.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
