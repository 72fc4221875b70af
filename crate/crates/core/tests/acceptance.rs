//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use regulab::config::{ExperimentConfig, ExperimentProblem};
use regulab::gallery::{gen_baart, gen_tomo, PerturbationKind, Scenario};
use regulab::harness::{aggregate_medians, derive_seeds, Experiment};
use regulab::io::write_records_csv;
use regulab::linalg::{svd_decompose, tikhonov_solve, tikhonov_solve_dense, DEFAULT_TRUNCATION};
use regulab::rng::{gaussian_matrix, gaussian_vector};
use regulab::rules::{psi_eval, select_alpha, select_from_values, AlphaGrid, Compensator, Functional, RuleId, RuleSpec};
use regulab::theory::{
    convergence_sweep, lemma1_gaussian_trials, lemma2_bounds_check, lower_bound_check, measured_constant,
    noise_condition_constant, summarize_trials, ResolventPower, SourcePower,
};
use regulab::{DenseMatrix, Vector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(
        elapsed < Duration::from_secs(limit_s),
        format!("runtime {:.1}s exceeds {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let alphas = AlphaGrid::new(1e-8, 1.0, 50).unwrap().points();
    let mut worst = 0.0_f64;
    for k in 0..20u64 {
        let n = 10 + k as usize;
        let m = if k % 2 == 0 { n } else { n + 3 };
        let a = gaussian_matrix(m, n, 1000 + k);
        let y = gaussian_vector(m, 2000 + k);
        let svd = svd_decompose(&a, DEFAULT_TRUNCATION).map_err(|e| e.to_string())?;
        for &alpha in &alphas {
            let x_svd = tikhonov_solve(&svd, &y, alpha).map_err(|e| e.to_string())?;
            let x_dense = tikhonov_solve_dense(&a, &y, alpha).map_err(|e| e.to_string())?;
            worst = worst.max((&x_svd - &x_dense).norm() / x_dense.norm());
        }
    }
    check(worst <= 1e-8, format!("max relative difference {worst:e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("max relative difference {worst:.3e} over 20 operators x 50 alphas"))
}

fn closed_form_values() -> Outcome {
    let a = DenseMatrix::identity(4, 4);
    let y = Vector::from_vec(vec![0.6, 0.0, 0.8, 0.0]);
    let svd = svd_decompose(&a, DEFAULT_TRUNCATION).unwrap();
    let expected = [
        (Functional::HeuristicDiscrepancy, 0.5),
        (Functional::HankeRaus, 2f64.powf(-1.5)),
        (Functional::QuasiOptimality, 0.25),
    ];
    let mut parts = Vec::new();
    for (f, want) in expected {
        let got = psi_eval(f, &svd, &y, 1.0).unwrap();
        check((got - want).abs() <= 1e-12, format!("{} = {got:e}, expected {want:e}", f.code()))?;
        parts.push(format!("{}={got:.15}", f.code()));
    }
    Ok(parts.join(" "))
}

fn operator_constants() -> Outcome {
    let start = Instant::now();
    let grid = AlphaGrid::new(1e-6, 1.0, 40).unwrap();
    let rows = lemma1_gaussian_trials(30, 50, 20_240_901, &grid).map_err(|e| e.to_string())?;
    let summary = summarize_trials(&rows);
    let mut parts = Vec::new();
    for r in &summary {
        check(r.trials == 50, "missing trials")?;
        check(r.max_ratio.is_finite(), format!("p={} q={} ratio not finite", r.p.value(), r.q.value()))?;
        match (r.p, r.q) {
            (SourcePower::Zero, ResolventPower::One) => {
                check(r.max_ratio <= 1.0 + 1e-8, format!("C(0,-1) observed {}", r.max_ratio))?
            }
            (SourcePower::Half, ResolventPower::One) => {
                check(r.max_ratio <= 1.25 + 1e-8, format!("C(1/2,-1) observed {}", r.max_ratio))?
            }
            _ => {}
        }
        parts.push(format!("C({},{})={:.4}", r.p.value(), r.q.value(), r.max_ratio));
    }
    within(start.elapsed(), 60)?;
    Ok(parts.join(" "))
}

fn lower_bounds() -> Outcome {
    let mut worst_c0 = f64::INFINITY;
    for k in 0..10u64 {
        let problem = gen_tomo(12, 1.0, 300 + k, 400 + k).map_err(|e| e.to_string())?;
        let scenario = Scenario {
            problem,
            perturbation: PerturbationKind::Gaussian,
        };
        let (op, data) = derive_seeds(77, k as usize, k as usize, 0);
        let inst = scenario.instance(0.03, 0.02, op, data).map_err(|e| e.to_string())?;
        let svd = svd_decompose(&inst.a_noisy, DEFAULT_TRUNCATION).unwrap();
        let grid = AlphaGrid::standard(&svd, 200, 1e-14).unwrap();
        let adjoint = (inst.a_noisy.transpose() * &inst.y_noisy).norm();
        // Shaved by a few ulps: the checker recomputes both norms from the SVD.
        let c0 = inst.y_noisy.norm().min(adjoint) * (1.0 - 1e-12);
        let out = lower_bound_check(&svd, &inst.y_noisy, &grid, c0).map_err(|e| e.to_string())?;
        check(out.holds, format!("instance {k}: bound violated (c0={c0:e}, c1={:e})", out.c1))?;
        worst_c0 = worst_c0.min(c0);
    }
    Ok(format!("10 tomo instances, smallest c0 {worst_c0:.3e}"))
}

fn scale_invariance() -> Outcome {
    let scenario = Scenario {
        problem: gen_baart(60).unwrap(),
        perturbation: PerturbationKind::Heat,
    };
    let mut compared = 0;
    for k in 0..5usize {
        let (op, data) = derive_seeds(5, k, k, 0);
        let inst = scenario.instance(0.01 * (k + 1) as f64, 0.02, op, data).unwrap();
        let svd = svd_decompose(&inst.a_noisy, DEFAULT_TRUNCATION).unwrap();
        let grid = AlphaGrid::standard(&svd, 200, 1e-14).unwrap();
        for f in Functional::ALL {
            let rule = RuleSpec::standard(f);
            let base = select_alpha(&rule, &svd, &inst.y_noisy, inst.eta, &grid).unwrap();
            for c in [1e-3, 1.0, 1e3] {
                let y = &inst.y_noisy * c;
                let s = select_alpha(&rule, &svd, &y, inst.eta, &grid).unwrap();
                check(
                    s.index == base.index && s.alpha_star == base.alpha_star,
                    format!("{} moved under scaling by {c}", f.code()),
                )?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} scaled selections identical"))
}

fn convergence_trend() -> Outcome {
    let start = Instant::now();
    let scenario = Scenario {
        problem: gen_baart(100).unwrap(),
        perturbation: PerturbationKind::Heat,
    };
    let rule = RuleSpec::semi_heuristic(Functional::QuasiOptimality, Compensator::SolutionNorm, 600.0, 0.07);
    let levels = [(1e-2, 1e-2), (1e-3, 1e-3), (1e-4, 1e-4), (1e-5, 1e-5)];
    let report = convergence_sweep(&scenario, &rule, &levels, 2024, 5, 200, 1e-14).map_err(|e| e.to_string())?;
    let alphas: Vec<f64> = report.levels.iter().map(|l| l.median_alpha_star()).collect();
    let errors: Vec<f64> = report.levels.iter().map(|l| l.median_e_rel()).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    let summary = format!("median alpha* [{}], median e_rel [{}]", fmt(&alphas), fmt(&errors));
    check(report.alpha_increases() <= 1, format!("alpha* not nonincreasing: {summary}"))?;
    check(errors[3] < errors[0], format!("error did not decrease: {summary}"))?;
    within(start.elapsed(), 120)?;
    Ok(summary)
}

fn desk_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentProblem::BaartHeat);
    c.realizations = 20;
    c.master_seed = 7;
    c
}

fn qualitative_ranking() -> Outcome {
    let start = Instant::now();
    let exp = Experiment::new(desk_config()).map_err(|e| e.to_string())?;
    let records = exp.run_grid();
    let medians = aggregate_medians(&records).map_err(|e| e.to_string())?;
    let m = |s: &str| medians[&s.parse::<RuleId>().unwrap()];
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let summary = medians
        .iter()
        .map(|(r, v)| format!("{r}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(failed == 0, format!("{failed} failed records"))?;
    check(m("QO-SH1") <= m("QO"), format!("QO-SH1 worse than QO: {summary}"))?;
    for base in ["HD", "HR"] {
        for sh in ["SH1", "SH2"] {
            let name = format!("{base}-{sh}");
            check(m(&name) <= 1.05 * m(base), format!("{name} worse than 1.05 x {base}: {summary}"))?;
        }
    }
    within(start.elapsed(), 300)?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let exp = Experiment::new(desk_config()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for (k, threads) in [(0, 4), (1, 4), (2, 1)] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let records = pool.install(|| exp.run_grid());
        let path = dir.path().join(format!("records{k}.csv"));
        write_records_csv(&records, &path).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    check(files[0] == files[1], "two runs differ")?;
    check(files[0] == files[2], "single-threaded run differs")?;
    let lines = files[0].iter().filter(|&&b| b == b'\n').count();
    check(lines == 1 + 100 * 20 * 9, format!("unexpected line count {lines}"))?;
    Ok(format!("3 runs byte-identical ({} bytes, {lines} lines)", files[0].len()))
}

fn fallback_profiles() -> Outcome {
    let cases: [(&str, Vec<f64>, usize, bool); 4] = [
        ("increasing", vec![1.0, 2.0, 3.0, 4.0, 5.0], 0, false),
        ("decreasing", vec![5.0, 4.0, 3.0, 2.0, 1.0], 4, true),
        ("endpoint with dip", vec![5.0, 3.0, 4.0, 2.0, 3.0, 1.0], 1, true),
        ("interior minimum", vec![5.0, 3.0, 1.0, 2.0, 4.0], 2, false),
    ];
    for (name, values, index, flag) in cases {
        let got = select_from_values(&values).map_err(|e| e.to_string())?;
        check(got == (index, flag), format!("{name}: got {got:?}, expected {:?}", (index, flag)))?;
    }
    // Identity operator: ψ_HD ∝ √α/(1+α) rises on α < 1 and falls on α > 1.
    let svd = svd_decompose(&DenseMatrix::identity(3, 3), 0.0).unwrap();
    let y = Vector::from_vec(vec![1.0, 2.0, 2.0]);
    let rule = RuleSpec::standard(Functional::HeuristicDiscrepancy);
    let left = select_alpha(&rule, &svd, &y, 0.0, &AlphaGrid::new(1e-3, 0.5, 30).unwrap()).unwrap();
    check(left.index == 0 && !left.fallback_used, "rising profile")?;
    let right = select_alpha(&rule, &svd, &y, 0.0, &AlphaGrid::new(2.0, 100.0, 30).unwrap()).unwrap();
    check(right.index == 29 && right.fallback_used, "falling profile")?;
    Ok("4 synthetic profiles and 2 operator profiles as documented".into())
}

fn noise_condition() -> Outcome {
    let grid = AlphaGrid::new(1e-4, 1.0, 25).unwrap();
    let e = gaussian_vector(5, 9);
    let rep = noise_condition_constant(&DenseMatrix::identity(5, 5), &e, Functional::HeuristicDiscrepancy, &grid)
        .map_err(|e| e.to_string())?;
    let want = 1.0 / grid.alpha_min.sqrt();
    check(
        (rep.c_nc - want).abs() <= 4.0 * f64::EPSILON * want,
        format!("c_nc = {:e}, expected {want:e}", rep.c_nc),
    )?;
    check(rep.ratios[0].1 == rep.c_nc, "supremum not at alpha_min")?;

    let problem = gen_baart(100).unwrap();
    let scenario = Scenario {
        problem: problem.clone(),
        perturbation: PerturbationKind::Heat,
    };
    let grid = AlphaGrid::new(1e-10, 1.0, 40).unwrap();
    let mut constants = Vec::new();
    for k in 0..10usize {
        let (op, data) = derive_seeds(31, k, k, k);
        let inst = scenario.instance(0.01 + 0.005 * k as f64, 0.01 + 0.004 * k as f64, op, data).unwrap();
        for f in Functional::ALL {
            let c = measured_constant(&problem, &inst, f, &grid).map_err(|e| e.to_string())?;
            let ok = lemma2_bounds_check(&problem, &inst, f, &grid, c).map_err(|e| e.to_string())?;
            check(ok, format!("instance {k}, {}: bound fails with C = {c}", f.code()))?;
            constants.push(c);
        }
    }
    let max_c = constants.iter().cloned().fold(0.0, f64::max);
    Ok(format!("c_nc = {:.6e}; 10 baart-heat instances pass, largest C {max_c:.4}", rep.c_nc))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 closed-form functional values", closed_form_values),
        ("3 operator-estimate constants", operator_constants),
        ("4 functional lower bounds", lower_bounds),
        ("5 scale invariance", scale_invariance),
        ("6 convergence trend", convergence_trend),
        ("7 qualitative ranking", qualitative_ranking),
        ("8 pairing and determinism", determinism),
        ("9 interior-minimum fallback", fallback_profiles),
        ("10 noise condition and upper bounds", noise_condition),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
