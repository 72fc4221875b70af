//! Numerical checks of the operator-error estimates, the noise condition,
//! the lower bounds on the functionals, and convergence of the
//! semi-heuristic rules as `δ, η → 0`.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gallery::{NoisyInstance, Scenario, TestProblem};
use crate::harness::{derive_seeds, median};
use crate::linalg::{spectral_norm, svd_decompose, DenseMatrix, SvdFactorization, Vector, DEFAULT_TRUNCATION};
use crate::rng::{gaussian_matrix, mix64, seeded};
use crate::rules::{psi_projected, select_projected, AlphaGrid, Functional, RuleSpec};

/// Exponent `p` of the source factor `B_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourcePower {
    Zero,
    Half,
    One,
}

/// Exponent `q` of the resolvent, always negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResolventPower {
    One,
    ThreeHalves,
    Two,
}

impl SourcePower {
    pub const ALL: [SourcePower; 3] = [SourcePower::Zero, SourcePower::Half, SourcePower::One];

    pub fn value(self) -> f64 {
        match self {
            SourcePower::Zero => 0.0,
            SourcePower::Half => 0.5,
            SourcePower::One => 1.0,
        }
    }
}

impl ResolventPower {
    pub const ALL: [ResolventPower; 3] = [
        ResolventPower::One,
        ResolventPower::ThreeHalves,
        ResolventPower::Two,
    ];

    /// The (negative) exponent `q`.
    pub fn value(self) -> f64 {
        match self {
            ResolventPower::One => -1.0,
            ResolventPower::ThreeHalves => -1.5,
            ResolventPower::Two => -2.0,
        }
    }
}

/// `(p, q)` pair whose operator estimate controls `functional`.
pub fn exponents_for(functional: Functional) -> (SourcePower, ResolventPower) {
    match functional {
        Functional::HeuristicDiscrepancy => (SourcePower::Half, ResolventPower::One),
        Functional::HankeRaus => (SourcePower::Half, ResolventPower::ThreeHalves),
        Functional::QuasiOptimality => (SourcePower::One, ResolventPower::Two),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBoundReport {
    pub p: SourcePower,
    pub q: ResolventPower,
    /// `sup ‖difference‖ · α^{1/2-p-q} / η` over grid, both operator
    /// orderings and all trials.
    pub max_ratio: f64,
    pub alpha_grid: AlphaGrid,
    pub trials: usize,
    /// Set when `η = 0`, in which case the ratio is undefined and reported as 0.
    pub degenerate: bool,
}

struct GramSpectrum {
    vectors: DenseMatrix,
    values: Vector,
}

impl GramSpectrum {
    fn new(gram: DenseMatrix) -> Self {
        let eig = SymmetricEigen::new(gram);
        GramSpectrum {
            values: eig.eigenvalues.map(|l| l.max(0.0)),
            vectors: eig.eigenvectors,
        }
    }

    /// `Q diag(f(λ)) Qᵀ`.
    fn apply(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        scaled * self.vectors.transpose()
    }
}

/// Gram spectra of one operator in both orderings.
struct OperatorSpectra {
    op: DenseMatrix,
    normal: GramSpectrum,
    adjoint: GramSpectrum,
}

impl OperatorSpectra {
    fn new(op: &DenseMatrix) -> Self {
        OperatorSpectra {
            op: op.clone(),
            normal: GramSpectrum::new(op.tr_mul(op)),
            adjoint: GramSpectrum::new(op * op.transpose()),
        }
    }

    /// `(AᵀA + α)^q B_p` when `hat` is false, `(AAᵀ + α)^q B̂_p` otherwise.
    fn expression(&self, hat: bool, alpha: f64, p: SourcePower, q: ResolventPower) -> DenseMatrix {
        let spectrum = if hat { &self.adjoint } else { &self.normal };
        let q = q.value();
        match p {
            SourcePower::Zero => spectrum.apply(|l| (l + alpha).powf(q)),
            SourcePower::One => spectrum.apply(|l| l * (l + alpha).powf(q)),
            SourcePower::Half => {
                let resolvent = spectrum.apply(|l| (l + alpha).powf(q));
                if hat {
                    resolvent * &self.op
                } else {
                    resolvent * self.op.transpose()
                }
            }
        }
    }
}

fn ratio_for_pair(
    clean: &OperatorSpectra,
    noisy: &OperatorSpectra,
    eta: f64,
    p: SourcePower,
    q: ResolventPower,
    alphas: &[f64],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &alpha in alphas {
        let scale = alpha.powf(0.5 - p.value() - q.value()) / eta;
        for hat in [false, true] {
            let diff = noisy.expression(hat, alpha, p, q) - clean.expression(hat, alpha, p, q);
            worst = worst.max(spectral_norm(&diff)? * scale);
        }
    }
    Ok(worst)
}

/// Measures the constant in the operator-error estimate for one `(A, A_η)`
/// pair by dense assembly of both operator expressions on every grid point.
pub fn lemma1_ratio(
    a: &DenseMatrix,
    a_noisy: &DenseMatrix,
    p: SourcePower,
    q: ResolventPower,
    grid: &AlphaGrid,
) -> Result<OperatorBoundReport> {
    Ok(lemma1_ratios(a, a_noisy, &[(p, q)], grid)?.remove(0))
}

/// As [`lemma1_ratio`] for several `(p, q)` pairs sharing one factorisation.
pub fn lemma1_ratios(
    a: &DenseMatrix,
    a_noisy: &DenseMatrix,
    pairs: &[(SourcePower, ResolventPower)],
    grid: &AlphaGrid,
) -> Result<Vec<OperatorBoundReport>> {
    if a.shape() != a_noisy.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: a_noisy.len(),
        });
    }
    let eta = spectral_norm(&(a_noisy - a))?;
    let degenerate = eta == 0.0;
    let alphas = grid.points();
    let (clean, noisy) = if degenerate {
        (None, None)
    } else {
        (Some(OperatorSpectra::new(a)), Some(OperatorSpectra::new(a_noisy)))
    };
    pairs
        .iter()
        .map(|&(p, q)| {
            let max_ratio = match (&clean, &noisy) {
                (Some(c), Some(n)) => ratio_for_pair(c, n, eta, p, q, &alphas)?,
                _ => 0.0,
            };
            Ok(OperatorBoundReport {
                p,
                q,
                max_ratio,
                alpha_grid: *grid,
                trials: 1,
                degenerate,
            })
        })
        .collect()
}

pub fn all_exponent_pairs() -> Vec<(SourcePower, ResolventPower)> {
    SourcePower::ALL
        .iter()
        .flat_map(|&p| ResolventPower::ALL.iter().map(move |&q| (p, q)))
        .collect()
}

/// One row of a randomised operator-estimate study.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Trial {
    pub trial: usize,
    pub eta: f64,
    pub report: OperatorBoundReport,
}

/// Random `n × n` Gaussian operators of unit norm with Gaussian perturbations
/// of log-uniform size in `[10⁻³, 10⁻¹]`; one row per `(trial, p, q)`.
pub fn lemma1_gaussian_trials(n: usize, trials: usize, seed: u64, grid: &AlphaGrid) -> Result<Vec<Lemma1Trial>> {
    let pairs = all_exponent_pairs();
    let rows: Result<Vec<Vec<Lemma1Trial>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let base = mix64(seed ^ mix64(t as u64));
            let a = gaussian_matrix(n, n, base);
            let a = &a / spectral_norm(&a)?;
            let direction = gaussian_matrix(n, n, mix64(base));
            let exponent = -3.0 + 2.0 * rand::Rng::random::<f64>(&mut seeded(mix64(base ^ 1)));
            let eta_target = 10f64.powf(exponent);
            let a_noisy = &a + &direction * (eta_target / spectral_norm(&direction)?);
            let eta = spectral_norm(&(&a_noisy - &a))?;
            let reports = lemma1_ratios(&a, &a_noisy, &pairs, grid)?;
            Ok(reports
                .into_iter()
                .map(|report| Lemma1Trial { trial: t, eta, report })
                .collect())
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Folds per-trial rows into one report per `(p, q)`.
pub fn summarize_trials(rows: &[Lemma1Trial]) -> Vec<OperatorBoundReport> {
    let mut out: Vec<OperatorBoundReport> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|r| r.p == row.report.p && r.q == row.report.q) {
            Some(r) => {
                r.max_ratio = r.max_ratio.max(row.report.max_ratio);
                r.trials += 1;
                r.degenerate |= row.report.degenerate;
            }
            None => out.push(row.report.clone()),
        }
    }
    out.sort_by_key(|r| (r.p, r.q));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConditionReport {
    pub functional: Functional,
    /// `max_α ‖(AᵀA+α)⁻¹Aᵀe‖ / ψ(α, A, e)`.
    pub c_nc: f64,
    pub grid: AlphaGrid,
    /// `(α, ratio)` on every grid point.
    pub ratios: Vec<(f64, f64)>,
}

fn noise_ratios(svd: &SvdFactorization, noise: &Vector, functional: Functional, grid: &AlphaGrid) -> Result<Vec<(f64, f64, f64)>> {
    let data = svd.project(noise)?;
    Ok(grid
        .points()
        .into_iter()
        .map(|alpha| {
            let lhs = svd.solution_norm(&data, alpha);
            let psi = psi_projected(functional, svd, &data, alpha);
            (alpha, lhs, psi)
        })
        .collect())
}

pub fn noise_condition_constant(
    a: &DenseMatrix,
    noise: &Vector,
    functional: Functional,
    grid: &AlphaGrid,
) -> Result<NoiseConditionReport> {
    if noise.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("noise vector must be nonzero".into()));
    }
    let svd = svd_decompose(a, DEFAULT_TRUNCATION)?;
    let ratios: Vec<(f64, f64)> = noise_ratios(&svd, noise, functional, grid)?
        .into_iter()
        .map(|(alpha, lhs, psi)| {
            let r = if psi > 0.0 {
                lhs / psi
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            (alpha, r)
        })
        .collect();
    let c_nc = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(NoiseConditionReport {
        functional,
        c_nc,
        grid: *grid,
        ratios,
    })
}

/// Whether `‖(AᵀA+α)⁻¹Aᵀe‖ ≤ c · ψ(α, A, e)` on every grid point.
pub fn noise_condition_holds(
    a: &DenseMatrix,
    noise: &Vector,
    functional: Functional,
    grid: &AlphaGrid,
    c: f64,
) -> Result<bool> {
    let svd = svd_decompose(a, DEFAULT_TRUNCATION)?;
    Ok(noise_ratios(&svd, noise, functional, grid)?
        .into_iter()
        .all(|(_, lhs, psi)| lhs <= c * psi))
}

const BOUND_SLACK: f64 = 1e-9;

/// Checks on every grid point
/// `ψ(α, A_η, A_η x†) ≤ c η‖x†‖/√α + ψ(α, A, A x†)` and
/// `ψ(α, A_η, y_δ) ≤ δ/√α + (1 + c) η‖x†‖/√α + ψ(α, A, A x†)`.
pub fn lemma2_bounds_check(
    problem: &TestProblem,
    instance: &NoisyInstance,
    functional: Functional,
    grid: &AlphaGrid,
    c_pq: f64,
) -> Result<bool> {
    Ok(lemma2_profile(problem, instance, functional, grid)?.holds(c_pq))
}

/// Grid values entering both upper bounds, reusable across constants.
pub struct Lemma2Profile {
    alphas: Vec<f64>,
    psi_noisy_exact: Vec<f64>,
    psi_noisy_data: Vec<f64>,
    psi_clean_exact: Vec<f64>,
    eta_x: f64,
    delta: f64,
}

impl Lemma2Profile {
    pub fn holds(&self, c: f64) -> bool {
        self.alphas.iter().enumerate().all(|(i, &alpha)| {
            let root = alpha.sqrt();
            let rhs1 = c * self.eta_x / root + self.psi_clean_exact[i];
            let rhs2 = self.delta / root + (1.0 + c) * self.eta_x / root + self.psi_clean_exact[i];
            self.psi_noisy_exact[i] <= rhs1 * (1.0 + BOUND_SLACK)
                && self.psi_noisy_data[i] <= rhs2 * (1.0 + BOUND_SLACK)
        })
    }
}

pub fn lemma2_profile(
    problem: &TestProblem,
    instance: &NoisyInstance,
    functional: Functional,
    grid: &AlphaGrid,
) -> Result<Lemma2Profile> {
    let svd_clean = svd_decompose(&problem.a_clean, DEFAULT_TRUNCATION)?;
    let svd_noisy = svd_decompose(&instance.a_noisy, DEFAULT_TRUNCATION)?;
    let noisy_exact = svd_noisy.project(&(&instance.a_noisy * &problem.x_true))?;
    let noisy_data = svd_noisy.project(&instance.y_noisy)?;
    let clean_exact = svd_clean.project(&(&problem.a_clean * &problem.x_true))?;
    let alphas = grid.points();
    let eval = |svd: &SvdFactorization, data| -> Vec<f64> {
        alphas.iter().map(|&a| psi_projected(functional, svd, data, a)).collect()
    };
    Ok(Lemma2Profile {
        psi_noisy_exact: eval(&svd_noisy, &noisy_exact),
        psi_noisy_data: eval(&svd_noisy, &noisy_data),
        psi_clean_exact: eval(&svd_clean, &clean_exact),
        alphas,
        eta_x: instance.eta * problem.x_true.norm(),
        delta: instance.delta,
    })
}

/// Measured operator-estimate constant for the `(p, q)` pair matching
/// `functional` on this instance.
pub fn measured_constant(
    problem: &TestProblem,
    instance: &NoisyInstance,
    functional: Functional,
    grid: &AlphaGrid,
) -> Result<f64> {
    let (p, q) = exponents_for(functional);
    Ok(lemma1_ratio(&problem.a_clean, &instance.a_noisy, p, q, grid)?.max_ratio)
}

/// Smallest constant (to bisection accuracy) for which both upper bounds
/// hold, obtained by halving from `start` until failure and bisecting the
/// resulting bracket. `None` if `start` itself fails.
pub fn lemma2_sharp_constant(profile: &Lemma2Profile, start: f64) -> Option<f64> {
    if !profile.holds(start) {
        return None;
    }
    let mut hi = start;
    let mut lo = start / 2.0;
    let mut halvings = 0;
    while profile.holds(lo) {
        if halvings > 60 {
            return Some(0.0);
        }
        hi = lo;
        lo /= 2.0;
        halvings += 1;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if profile.holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Which side of the lower-bound check failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundOutcome {
    pub c0: f64,
    pub c1: f64,
    pub holds: bool,
}

/// Checks `ψ_HD ≥ (c₀/c₁)√α`, `ψ_HR ≥ (c₀/c₁^{3/2})α` and
/// `ψ_QO ≥ (c₀/c₁²)α` on every grid point, with
/// `c₁ = ‖A_η A_ηᵀ‖ + α_max`. Requires `‖y_δ‖ ≥ c₀` and `‖A_ηᵀy_δ‖ ≥ c₀`;
/// a violated requirement is reported as [`Error::Precondition`].
pub fn lower_bound_check(
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    grid: &AlphaGrid,
    c0: f64,
) -> Result<LowerBoundOutcome> {
    if !(c0 > 0.0) {
        return Err(Error::Precondition(format!("c0 must be positive, got {c0}")));
    }
    let data = svd_noisy.project(y_noisy)?;
    let y_norm = y_noisy.norm();
    let adjoint_norm = svd_noisy
        .singular_values()
        .iter()
        .zip(&data.coeffs)
        .map(|(&s, &c)| (s * c) * (s * c))
        .sum::<f64>()
        .sqrt();
    if y_norm < c0 {
        return Err(Error::Precondition(format!("‖y‖ = {y_norm} < c0 = {c0}")));
    }
    if adjoint_norm < c0 {
        return Err(Error::Precondition(format!("‖Aᵀy‖ = {adjoint_norm} < c0 = {c0}")));
    }
    let c1 = svd_noisy.norm() * svd_noisy.norm() + grid.alpha_max;
    let holds = grid.points().into_iter().all(|alpha| {
        let bounds = [
            (Functional::HeuristicDiscrepancy, c0 / c1 * alpha.sqrt()),
            (Functional::HankeRaus, c0 / c1.powf(1.5) * alpha),
            (Functional::QuasiOptimality, c0 / (c1 * c1) * alpha),
        ];
        bounds.iter().all(|&(f, bound)| {
            psi_projected(f, svd_noisy, &data, alpha) >= bound * (1.0 - 1e-12)
        })
    });
    Ok(LowerBoundOutcome { c0, c1, holds })
}

/// Selections at one noise level of a convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLevel {
    pub delta_rel: f64,
    pub eta_rel: f64,
    pub alpha_stars: Vec<f64>,
    pub e_rels: Vec<f64>,
}

impl SweepLevel {
    pub fn median_alpha_star(&self) -> f64 {
        median(&self.alpha_stars).unwrap_or(f64::NAN)
    }

    pub fn median_e_rel(&self) -> f64 {
        median(&self.e_rels).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSweepReport {
    pub rule: RuleSpec,
    pub levels: Vec<SweepLevel>,
}

impl ConvergenceSweepReport {
    pub fn gamma_factor(&self) -> f64 {
        self.rule.gamma_factor
    }

    /// Number of consecutive level pairs where the median `α*` increased.
    pub fn alpha_increases(&self) -> usize {
        count_increases(self.levels.iter().map(SweepLevel::median_alpha_star))
    }

    pub fn e_rel_increases(&self) -> usize {
        count_increases(self.levels.iter().map(SweepLevel::median_e_rel))
    }
}

fn count_increases(values: impl Iterator<Item = f64>) -> usize {
    let v: Vec<f64> = values.collect();
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Runs `rule` on `realizations` noisy instances per `(δ_rel, η_rel)` level.
/// Levels must be strictly decreasing in `max(δ, η)` with `η > 0`.
pub fn convergence_sweep(
    scenario: &Scenario,
    rule: &RuleSpec,
    levels: &[(f64, f64)],
    master_seed: u64,
    realizations: usize,
    grid_points: usize,
    alpha_floor: f64,
) -> Result<ConvergenceSweepReport> {
    rule.validate()?;
    if levels.is_empty() || realizations == 0 {
        return Err(Error::InvalidArgument("sweep needs levels and realizations".into()));
    }
    if levels.iter().any(|&(_, eta)| !(eta > 0.0)) {
        return Err(Error::InvalidArgument("every sweep level needs eta > 0".into()));
    }
    if levels.windows(2).any(|w| w[1].0.max(w[1].1) >= w[0].0.max(w[0].1)) {
        return Err(Error::InvalidArgument("sweep levels must be strictly decreasing".into()));
    }
    let out: Result<Vec<SweepLevel>> = levels
        .par_iter()
        .enumerate()
        .map(|(li, &(delta_rel, eta_rel))| {
            let picks: Result<Vec<(f64, f64)>> = (0..realizations)
                .map(|r| {
                    let (op_seed, data_seed) = derive_seeds(master_seed, li, li, r);
                    let inst = scenario.instance(delta_rel, eta_rel, op_seed, data_seed)?;
                    let svd = svd_decompose(&inst.a_noisy, DEFAULT_TRUNCATION)?;
                    let grid = if rule.is_standard() {
                        AlphaGrid::standard(&svd, grid_points, alpha_floor)?
                    } else {
                        AlphaGrid::restricted(rule, inst.eta, svd.norm() * svd.norm(), grid_points)?
                    };
                    let data = svd.project(&inst.y_noisy)?;
                    let target = svd.project_solution(&scenario.problem.x_true)?;
                    let sel = select_projected(rule, &svd, &data, inst.eta, &grid)?;
                    let e_rel = svd.solution_error(&data, &target, sel.alpha_star) / scenario.problem.x_true.norm();
                    Ok((sel.alpha_star, e_rel))
                })
                .collect();
            let picks = picks?;
            Ok(SweepLevel {
                delta_rel,
                eta_rel,
                alpha_stars: picks.iter().map(|p| p.0).collect(),
                e_rels: picks.iter().map(|p| p.1).collect(),
            })
        })
        .collect();
    Ok(ConvergenceSweepReport {
        rule: *rule,
        levels: out?,
    })
}
