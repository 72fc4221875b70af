use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use regulab::config::{parse_config, ExperimentConfig};
use regulab::gallery::{gen_baart, gen_blur, gen_heat, gen_tomo, PerturbationKind, Scenario, TestProblem};
use regulab::harness::{aggregate_medians, derive_seeds, median_e_opt, theta_heatmap, Experiment};
use regulab::io;
use regulab::linalg::{svd_decompose, DEFAULT_TRUNCATION};
use regulab::rng::{gaussian_vector, mix64};
use regulab::rules::{AlphaGrid, Functional, RuleId};
use regulab::theory::{
    convergence_sweep, lemma1_gaussian_trials, lower_bound_check, noise_condition_constant, summarize_trials,
};
use regulab::{Error, ErrorCategory};

const SEED_ENV: &str = "REGULAB_SEED";

#[derive(Parser)]
#[command(name = "regulab", version, about = "Tikhonov regularisation with heuristic and semi-heuristic parameter choice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a test problem (operator, exact solution, exact data) as CSV.
    Gen {
        #[arg(long, value_enum)]
        problem: GenProblem,
        /// Dimension; the image side for blur and tomo.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte-Carlo experiment and write records, medians and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Track one rule as δ = η shrinks by decades from 10⁻².
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long, default_value = "QO-SH1")]
        rule: RuleId,
        #[arg(long, default_value_t = 5)]
        realizations: usize,
        /// Optional CSV with one row per level and realization.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of the operator estimates, noise condition and lower bounds.
    #[command(group(ArgGroup::new("kind").required(true).args(["lemma1", "noise_condition", "lower_bounds"])))]
    Check {
        #[arg(long)]
        lemma1: bool,
        #[arg(long)]
        noise_condition: bool,
        #[arg(long)]
        lower_bounds: bool,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a dot plot or θ heatmap from a records CSV.
    Plot {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "QO")]
        standard: RuleId,
        #[arg(long, default_value = "QO-SH1")]
        modified: RuleId,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenProblem {
    Baart,
    Heat,
    Blur,
    Tomo,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Dot,
    Heatmap,
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    CheckFailed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult = Result<(), CliError>;

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::CheckFailed(_) => 1,
        CliError::Lib(e) => match e.category() {
            ErrorCategory::Config => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        },
    }
}

fn seed_override() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let mut config = parse_config(path)?;
    if let Some(seed) = seed_override()? {
        config.master_seed = seed;
        config.validate()?;
    }
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_problem(problem: &TestProblem, out: &Path) -> Result<(), Error> {
    io::write_matrix_csv(&problem.a_clean, &out.join("A.csv"))?;
    io::write_vector_csv(&problem.x_true, &out.join("x_true.csv"))?;
    io::write_vector_csv(&problem.y_clean, &out.join("y.csv"))
}

fn gen(problem: GenProblem, n: usize, seed: u64, out: &Path) -> CliResult {
    if n < 2 {
        return Err(Error::Config(format!("n must be at least 2, got {n}")).into());
    }
    create_dir(out)?;
    match problem {
        GenProblem::Baart => write_problem(&gen_baart(n)?, out)?,
        GenProblem::Heat => io::write_matrix_csv(&gen_heat(n)?, &out.join("A.csv"))?,
        GenProblem::Blur => write_problem(&gen_blur(n, n.min(8), 0.9, seed)?, out)?,
        GenProblem::Tomo => write_problem(&gen_tomo(n, 1.0, seed, mix64(seed))?, out)?,
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(config: &Path, out: &Path, threads: Option<usize>) -> CliResult {
    let config = load_config(config)?;
    let exp = Experiment::new(config)?;
    let records = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("threads: {e}")))?
            .install(|| exp.run_grid()),
        None => exp.run_grid(),
    };
    create_dir(out)?;
    io::write_records_csv(&records, &out.join("records.csv"))?;
    let medians = aggregate_medians(&records)?;
    let e_opt = median_e_opt(&records);
    io::write_medians_csv(&medians, e_opt, &out.join("medians.csv"))?;
    for id in RuleId::all().into_iter().filter(|r| !r.is_standard()) {
        let matrix = theta_heatmap(&records, id.standard(), id)?;
        io::write_heatmap_csv(&matrix, &out.join(format!("heatmap_{id}.csv")))?;
        io::emit_heatmap_plot(&matrix, &out.join(format!("heatmap_{id}.svg")))?;
    }
    io::emit_dot_plot(&records, &out.join("dot_plot.svg"))?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    println!("{} records ({failed} failed) written to {}", records.len(), out.display());
    for (rule, m) in &medians {
        println!("{rule:<7} median e_rel {m:.6}");
    }
    if let Some(m) = e_opt {
        println!("{:<7} median e_rel {m:.6}", "e_opt");
    }
    Ok(())
}

fn sweep(config: &Path, levels: usize, rule: RuleId, realizations: usize, out: Option<&Path>) -> CliResult {
    if levels == 0 {
        return Err(Error::Config("levels must be at least 1".into()).into());
    }
    let config = load_config(config)?;
    let spec = config
        .rule_table()
        .into_iter()
        .find(|r| r.id() == rule)
        .ok_or_else(|| Error::Config(format!("unknown rule {rule}")))?;
    let scenario = regulab::harness::build_scenario(&config)?;
    let lv: Vec<(f64, f64)> = (0..levels)
        .map(|k| {
            let l = 10f64.powi(-2 - k as i32);
            (l, l)
        })
        .collect();
    let report = convergence_sweep(
        &scenario,
        &spec,
        &lv,
        config.master_seed,
        realizations,
        config.grid_points,
        config.alpha_floor,
    )?;
    println!("rule {rule}, gamma factor {}", report.gamma_factor());
    println!("{:>10} {:>14} {:>14}", "level", "median alpha*", "median e_rel");
    for l in &report.levels {
        println!("{:>10.1e} {:>14.6e} {:>14.6e}", l.delta_rel, l.median_alpha_star(), l.median_e_rel());
    }
    if let Some(path) = out {
        io::write_sweep_csv(&report, path)?;
    }
    Ok(())
}

fn check_lemma1(trials: usize, seed: u64, out: Option<&Path>) -> CliResult {
    let grid = AlphaGrid::new(1e-6, 1.0, 40)?;
    let rows = lemma1_gaussian_trials(30, trials, seed, &grid)?;
    println!("{:>5} {:>5} {:>12}", "p", "q", "max ratio");
    for r in summarize_trials(&rows) {
        println!("{:>5} {:>5} {:>12.6}", r.p.value(), r.q.value(), r.max_ratio);
    }
    if let Some(path) = out {
        io::write_lemma1_csv(&rows, path)?;
    }
    Ok(())
}

fn check_noise_condition(trials: usize, seed: u64, out: Option<&Path>) -> CliResult {
    let problem = gen_baart(100)?;
    let grid = AlphaGrid::new(1e-10, 1.0, 100)?;
    let mut reports = Vec::new();
    println!("{:>6} {:>14} {:>14} {:>14}", "trial", "HD", "HR", "QO");
    for t in 0..trials {
        let noise = gaussian_vector(problem.y_clean.len(), mix64(seed ^ t as u64));
        let row: Vec<_> = Functional::ALL
            .iter()
            .map(|&f| noise_condition_constant(&problem.a_clean, &noise, f, &grid))
            .collect::<Result<_, _>>()?;
        println!("{t:>6} {:>14.6e} {:>14.6e} {:>14.6e}", row[0].c_nc, row[1].c_nc, row[2].c_nc);
        reports.extend(row);
    }
    if let Some(path) = out {
        io::write_noise_condition_csv(&reports, path)?;
    }
    Ok(())
}

fn check_lower_bounds(trials: usize, seed: u64) -> CliResult {
    let mut failures = 0;
    for t in 0..trials {
        let problem = gen_tomo(12, 1.0, mix64(seed ^ t as u64), mix64(!seed ^ t as u64))?;
        let scenario = Scenario {
            problem,
            perturbation: PerturbationKind::Gaussian,
        };
        let (op, data) = derive_seeds(seed, t, t, 0);
        let inst = scenario.instance(0.05, 0.05, op, data)?;
        let svd = svd_decompose(&inst.a_noisy, DEFAULT_TRUNCATION)?;
        let grid = AlphaGrid::standard(&svd, 200, 1e-14)?;
        let adjoint = (inst.a_noisy.transpose() * &inst.y_noisy).norm();
        let c0 = inst.y_noisy.norm().min(adjoint) * (1.0 - 1e-12);
        let outcome = lower_bound_check(&svd, &inst.y_noisy, &grid, c0)?;
        println!(
            "trial {t}: c0 {:.6e} c1 {:.6e} {}",
            outcome.c0,
            outcome.c1,
            if outcome.holds { "holds" } else { "VIOLATED" }
        );
        failures += usize::from(!outcome.holds);
    }
    if failures > 0 {
        return Err(CliError::CheckFailed(format!("{failures} of {trials} instances violate the lower bounds")));
    }
    Ok(())
}

fn plot(records: &Path, kind: PlotKind, out: &Path, standard: RuleId, modified: RuleId) -> CliResult {
    let records = io::read_records_csv(records)?;
    match kind {
        PlotKind::Dot => io::emit_dot_plot(&records, out)?,
        PlotKind::Heatmap => io::emit_heatmap_plot(&theta_heatmap(&records, standard, modified)?, out)?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen { problem, n, seed, out } => gen(problem, n, seed, &out),
        Command::Run { config, out, threads } => run(&config, &out, threads),
        Command::Sweep {
            config,
            levels,
            rule,
            realizations,
            out,
        } => sweep(&config, levels, rule, realizations, out.as_deref()),
        Command::Check {
            lemma1,
            noise_condition,
            trials,
            seed,
            out,
            ..
        } => {
            if trials == 0 {
                return Err(Error::Config("trials must be at least 1".into()).into());
            }
            let seed = match seed {
                Some(s) => s,
                None => seed_override()?.unwrap_or(0),
            };
            if lemma1 {
                check_lemma1(trials, seed, out.as_deref())
            } else if noise_condition {
                check_noise_condition(trials, seed, out.as_deref())
            } else {
                check_lower_bounds(trials, seed)
            }
        }
        Command::Plot {
            records,
            kind,
            out,
            standard,
            modified,
        } => plot(&records, kind, &out, standard, modified),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Lib(err) => eprintln!("error: {err}"),
                CliError::CheckFailed(msg) => eprintln!("check failed: {msg}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
