//! Heuristic and semi-heuristic parameter choice rules.
//!
//! A rule minimises `ψ̄(α) = ψ(α, A_η, y_δ) - R(α)` over a logarithmic grid,
//! where `ψ` is one of the heuristic discrepancy, Hanke-Raus or
//! quasi-optimality functionals and `R` is an optional term compensating
//! the operator error `η`. All functionals are evaluated through the filter
//! functions of the factorised operator:
//!
//! | functional | filter on `c_i = (Uᵀy)_i` | complement weight |
//! |---|---|---|
//! | HD | `√α / (σ² + α)` | `1/√α` |
//! | HR | `α / (σ² + α)^{3/2}` | `1/√α` |
//! | QO | `α σ / (σ² + α)²` | `0` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ProjectedData, SvdFactorization, Vector};

/// Default number of grid points for the parameter search.
pub const DEFAULT_GRID_POINTS: usize = 200;
/// Lower clamp for the search interval of the standard rules.
pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Functional {
    #[serde(rename = "HD")]
    HeuristicDiscrepancy,
    #[serde(rename = "HR")]
    HankeRaus,
    #[serde(rename = "QO")]
    QuasiOptimality,
}

impl Functional {
    pub const ALL: [Functional; 3] = [
        Functional::HeuristicDiscrepancy,
        Functional::HankeRaus,
        Functional::QuasiOptimality,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Functional::HeuristicDiscrepancy => "HD",
            Functional::HankeRaus => "HR",
            Functional::QuasiOptimality => "QO",
        }
    }

    /// Spectral filter applied to the range coefficients.
    #[inline]
    pub fn filter(self, sigma: f64, alpha: f64) -> f64 {
        let d = sigma * sigma + alpha;
        match self {
            Functional::HeuristicDiscrepancy => alpha.sqrt() / d,
            Functional::HankeRaus => alpha / (d * d.sqrt()),
            Functional::QuasiOptimality => alpha * sigma / (d * d),
        }
    }

    /// Weight applied to the data component orthogonal to the range.
    #[inline]
    pub fn complement_weight(self, alpha: f64) -> f64 {
        match self {
            Functional::HeuristicDiscrepancy | Functional::HankeRaus => 1.0 / alpha.sqrt(),
            Functional::QuasiOptimality => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Compensator {
    /// Standard heuristic rule, `R = 0`.
    Uncompensated,
    /// SH1: `R = D η^s ‖x_α‖`.
    SolutionNorm,
    /// SH2: `R = D η^s / √α`.
    InverseSqrtAlpha,
}

impl Compensator {
    pub const ALL: [Compensator; 3] = [
        Compensator::Uncompensated,
        Compensator::SolutionNorm,
        Compensator::InverseSqrtAlpha,
    ];

    pub fn code(self) -> Option<&'static str> {
        match self {
            Compensator::Uncompensated => None,
            Compensator::SolutionNorm => Some("SH1"),
            Compensator::InverseSqrtAlpha => Some("SH2"),
        }
    }
}

/// Identifies one of the nine rules, printed as `HD`, `HD-SH1`, `QO-SH2`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleId {
    pub functional: Functional,
    pub compensator: Compensator,
}

impl RuleId {
    pub fn new(functional: Functional, compensator: Compensator) -> Self {
        RuleId {
            functional,
            compensator,
        }
    }

    /// All nine rules in canonical order.
    pub fn all() -> Vec<RuleId> {
        Functional::ALL
            .iter()
            .flat_map(|&f| Compensator::ALL.iter().map(move |&c| RuleId::new(f, c)))
            .collect()
    }

    pub fn standard(self) -> RuleId {
        RuleId::new(self.functional, Compensator::Uncompensated)
    }

    pub fn is_standard(self) -> bool {
        self.compensator == Compensator::Uncompensated
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.compensator.code() {
            None => f.write_str(self.functional.code()),
            Some(c) => write!(f, "{}-{}", self.functional.code(), c),
        }
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once('-') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let functional = Functional::ALL
            .into_iter()
            .find(|f| f.code() == head)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown rule id '{s}'")))?;
        let compensator = match tail {
            None => Compensator::Uncompensated,
            Some("SH1") => Compensator::SolutionNorm,
            Some("SH2") => Compensator::InverseSqrtAlpha,
            Some(_) => return Err(Error::InvalidArgument(format!("unknown rule id '{s}'"))),
        };
        Ok(RuleId::new(functional, compensator))
    }
}

/// Full description of a parameter choice rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleSpec {
    pub functional: Functional,
    pub compensator: Compensator,
    /// The constant `D`; zero for standard rules.
    pub d_constant: f64,
    /// `γ = gamma_factor · η^s`.
    pub gamma_factor: f64,
    pub s_exponent: f64,
}

impl RuleSpec {
    pub fn standard(functional: Functional) -> Self {
        RuleSpec {
            functional,
            compensator: Compensator::Uncompensated,
            d_constant: 0.0,
            gamma_factor: 1.0,
            s_exponent: 1.0,
        }
    }

    pub fn semi_heuristic(
        functional: Functional,
        compensator: Compensator,
        d_constant: f64,
        gamma_factor: f64,
    ) -> Self {
        RuleSpec {
            functional,
            compensator,
            d_constant,
            gamma_factor,
            s_exponent: 1.0,
        }
    }

    pub fn id(&self) -> RuleId {
        RuleId::new(self.functional, self.compensator)
    }

    pub fn is_standard(&self) -> bool {
        self.compensator == Compensator::Uncompensated
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_standard() && self.d_constant != 0.0 {
            return Err(Error::InvalidArgument(
                "standard rules must have D = 0".into(),
            ));
        }
        if !(self.d_constant >= 0.0 && self.d_constant.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "D must be finite and nonnegative, got {}",
                self.d_constant
            )));
        }
        if !(self.gamma_factor > 0.0 && self.gamma_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma factor must be positive, got {}",
                self.gamma_factor
            )));
        }
        if !(self.s_exponent > 0.0 && self.s_exponent <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eta exponent must lie in (0, 1], got {}",
                self.s_exponent
            )));
        }
        Ok(())
    }

    /// Lower end `γ` of the restricted search interval.
    pub fn gamma(&self, eta: f64) -> f64 {
        self.gamma_factor * eta.powf(self.s_exponent)
    }
}

/// Logarithmically spaced grid `alpha_min = α_0 < … < α_{count-1} = alpha_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub count: usize,
}

impl AlphaGrid {
    pub fn new(alpha_min: f64, alpha_max: f64, count: usize) -> Result<Self> {
        if !(alpha_min > 0.0 && alpha_min.is_finite() && alpha_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must be positive and finite, got [{alpha_min}, {alpha_max}]"
            )));
        }
        if alpha_min >= alpha_max {
            return Err(Error::InvalidArgument(format!(
                "empty grid interval [{alpha_min}, {alpha_max}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
        }
        Ok(AlphaGrid {
            alpha_min,
            alpha_max,
            count,
        })
    }

    /// Search interval of the standard rules: `[max(λ_min, floor), ‖A_η‖²]`.
    pub fn standard(svd: &SvdFactorization, count: usize, floor: f64) -> Result<Self> {
        let alpha_max = svd.norm() * svd.norm();
        AlphaGrid::new(svd.lambda_min().max(floor), alpha_max, count)
    }

    /// Search interval `[γ, alpha_max]` of a semi-heuristic rule.
    pub fn restricted(spec: &RuleSpec, eta: f64, alpha_max: f64, count: usize) -> Result<Self> {
        AlphaGrid::new(spec.gamma(eta), alpha_max, count)
    }

    pub fn points(&self) -> Vec<f64> {
        let lo = self.alpha_min.ln();
        let step = (self.alpha_max.ln() - lo) / (self.count - 1) as f64;
        let mut pts: Vec<f64> = (0..self.count).map(|k| (lo + step * k as f64).exp()).collect();
        pts[0] = self.alpha_min;
        pts[self.count - 1] = self.alpha_max;
        pts
    }
}

/// `‖Ψ(α, A) y‖` on projected data.
pub fn psi_projected(
    functional: Functional,
    svd: &SvdFactorization,
    data: &ProjectedData,
    alpha: f64,
) -> f64 {
    let range: f64 = svd
        .singular_values()
        .iter()
        .zip(&data.coeffs)
        .map(|(&s, &c)| {
            let v = functional.filter(s, alpha) * c;
            v * v
        })
        .sum();
    let w = functional.complement_weight(alpha) * data.complement_norm;
    (range + w * w).sqrt()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "regularisation parameter must be positive, got {alpha}"
        )))
    }
}

pub fn psi_eval(functional: Functional, svd: &SvdFactorization, y: &Vector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let data = svd.project(y)?;
    Ok(psi_projected(functional, svd, &data, alpha))
}

/// Compensating term `R(α)`.
pub fn compensator_eval(spec: &RuleSpec, eta: f64, alpha: f64, x_alpha_norm: f64) -> f64 {
    let scale = spec.d_constant * eta.powf(spec.s_exponent);
    match spec.compensator {
        Compensator::Uncompensated => 0.0,
        Compensator::SolutionNorm => scale * x_alpha_norm,
        Compensator::InverseSqrtAlpha => scale / alpha.sqrt(),
    }
}

pub(crate) fn psi_bar_projected(
    spec: &RuleSpec,
    svd: &SvdFactorization,
    data: &ProjectedData,
    eta: f64,
    alpha: f64,
) -> f64 {
    let psi = psi_projected(spec.functional, svd, data, alpha);
    let x_norm = match spec.compensator {
        Compensator::SolutionNorm => svd.solution_norm(data, alpha),
        _ => 0.0,
    };
    psi - compensator_eval(spec, eta, alpha, x_norm)
}

/// `ψ̄(α) = ψ(α, A_η, y_δ) - R(α)`; may be negative.
pub fn psi_bar_eval(
    spec: &RuleSpec,
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    eta: f64,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let data = svd_noisy.project(y_noisy)?;
    Ok(psi_bar_projected(spec, svd_noisy, &data, eta, alpha))
}

/// Result of a grid minimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub alpha_star: f64,
    pub psi_at_star: f64,
    pub fallback_used: bool,
}

/// Picks the grid minimiser of `values`.
///
/// Returns `(index, fallback_used)`. When the global minimum sits at the
/// right endpoint the smallest-α interior local minimum (strictly below
/// both neighbours) is taken instead; without one the endpoint is kept.
/// Either way the fallback flag is set. NaN entries are ignored.
pub fn select_from_values(values: &[f64]) -> Result<(usize, bool)> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    let best = best.ok_or_else(|| Error::Numeric("all functional values are NaN".into()))?;
    let last = values.len() - 1;
    if best != last {
        return Ok((best, false));
    }
    let interior = (1..last).find(|&i| values[i] < values[i - 1] && values[i] < values[i + 1]);
    Ok((interior.unwrap_or(last), true))
}

fn ensure_grid_matches_rule(spec: &RuleSpec, eta: f64, grid: &AlphaGrid) -> Result<()> {
    if spec.is_standard() {
        return Ok(());
    }
    let gamma = spec.gamma(eta);
    if (grid.alpha_min - gamma).abs() > 1e-12 * gamma {
        return Err(Error::Precondition(format!(
            "semi-heuristic search must start at gamma = {gamma}, grid starts at {}",
            grid.alpha_min
        )));
    }
    Ok(())
}

/// `ψ̄` on every grid point.
pub fn psi_bar_profile(
    spec: &RuleSpec,
    svd: &SvdFactorization,
    data: &ProjectedData,
    eta: f64,
    alphas: &[f64],
) -> Vec<f64> {
    alphas
        .iter()
        .map(|&a| psi_bar_projected(spec, svd, data, eta, a))
        .collect()
}

pub(crate) fn select_projected(
    spec: &RuleSpec,
    svd: &SvdFactorization,
    data: &ProjectedData,
    eta: f64,
    grid: &AlphaGrid,
) -> Result<Selection> {
    spec.validate()?;
    ensure_grid_matches_rule(spec, eta, grid)?;
    let alphas = grid.points();
    let values = psi_bar_profile(spec, svd, data, eta, &alphas);
    let (index, fallback_used) = select_from_values(&values)?;
    Ok(Selection {
        index,
        alpha_star: alphas[index],
        psi_at_star: values[index],
        fallback_used,
    })
}

/// Minimises `ψ̄` over `grid`; see [`select_from_values`] for the endpoint rule.
pub fn select_alpha(
    spec: &RuleSpec,
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    eta: f64,
    grid: &AlphaGrid,
) -> Result<Selection> {
    let data = svd_noisy.project(y_noisy)?;
    select_projected(spec, svd_noisy, &data, eta, grid)
}

pub(crate) fn optimal_projected(
    svd: &SvdFactorization,
    data: &ProjectedData,
    target: &ProjectedData,
    x_norm: f64,
    alphas: &[f64],
) -> (f64, f64) {
    let mut best = (alphas[0], f64::INFINITY);
    for &a in alphas {
        let e = svd.solution_error(data, target, a) / x_norm;
        if e < best.1 {
            best = (a, e);
        }
    }
    best
}

fn nonzero_norm(x_true: &Vector) -> Result<f64> {
    let n = x_true.norm();
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::InvalidArgument("exact solution must be nonzero".into()))
    }
}

/// Brute-force `argmin_α ‖x_α - x†‖ / ‖x†‖` over the grid; returns
/// `(alpha_opt, e_opt)`.
pub fn optimal_alpha(
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    x_true: &Vector,
    grid: &AlphaGrid,
) -> Result<(f64, f64)> {
    let x_norm = nonzero_norm(x_true)?;
    let data = svd_noisy.project(y_noisy)?;
    let target = svd_noisy.project_solution(x_true)?;
    Ok(optimal_projected(svd_noisy, &data, &target, x_norm, &grid.points()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub e_rel: f64,
    pub e_opt: f64,
    pub e_per: f64,
}

/// `e_rel / e_opt`, with `+∞` when only the optimum is exact.
pub fn performance_ratio(e_rel: f64, e_opt: f64) -> f64 {
    if e_opt == 0.0 {
        if e_rel == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        e_rel / e_opt
    }
}

pub fn error_metrics(
    alpha_star: f64,
    alpha_opt: f64,
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    x_true: &Vector,
) -> Result<ErrorMetrics> {
    check_alpha(alpha_star)?;
    check_alpha(alpha_opt)?;
    let x_norm = nonzero_norm(x_true)?;
    let data = svd_noisy.project(y_noisy)?;
    let target = svd_noisy.project_solution(x_true)?;
    let e_rel = svd_noisy.solution_error(&data, &target, alpha_star) / x_norm;
    let e_opt = svd_noisy.solution_error(&data, &target, alpha_opt) / x_norm;
    Ok(ErrorMetrics {
        e_rel,
        e_opt,
        e_per: performance_ratio(e_rel, e_opt),
    })
}

/// Improvement score `(e_per - ē_per) · 100`; positive when the modified
/// rule wins.
pub fn theta(e_per_standard: f64, e_per_modified: f64) -> f64 {
    (e_per_standard - e_per_modified) * 100.0
}

/// Everything recorded for one rule on one noisy instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOutcome {
    pub alpha_star: f64,
    pub psi_at_star: f64,
    pub fallback_used: bool,
    pub alpha_opt: f64,
    pub e_rel: f64,
    pub e_opt: f64,
    pub e_per: f64,
}

/// Selects `α*` with `spec` on `grid` and scores it against the optimum
/// found on `optimum_grid`.
pub fn evaluate_rule(
    spec: &RuleSpec,
    svd_noisy: &SvdFactorization,
    y_noisy: &Vector,
    x_true: &Vector,
    eta: f64,
    grid: &AlphaGrid,
    optimum_grid: &AlphaGrid,
) -> Result<SelectionOutcome> {
    let x_norm = nonzero_norm(x_true)?;
    let data = svd_noisy.project(y_noisy)?;
    let target = svd_noisy.project_solution(x_true)?;
    let optimum = optimal_projected(svd_noisy, &data, &target, x_norm, &optimum_grid.points());
    evaluate_projected(spec, svd_noisy, &data, &target, x_norm, eta, grid, optimum)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn evaluate_projected(
    spec: &RuleSpec,
    svd: &SvdFactorization,
    data: &ProjectedData,
    target: &ProjectedData,
    x_norm: f64,
    eta: f64,
    grid: &AlphaGrid,
    (alpha_opt, e_opt): (f64, f64),
) -> Result<SelectionOutcome> {
    let sel = select_projected(spec, svd, data, eta, grid)?;
    let e_rel = svd.solution_error(data, target, sel.alpha_star) / x_norm;
    Ok(SelectionOutcome {
        alpha_star: sel.alpha_star,
        psi_at_star: sel.psi_at_star,
        fallback_used: sel.fallback_used,
        alpha_opt,
        e_rel,
        e_opt,
        e_per: performance_ratio(e_rel, e_opt),
    })
}
