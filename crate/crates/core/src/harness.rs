//! Monte-Carlo sweeps over noise levels, realizations and the nine rules.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentProblem, MAX_LEVELS, MAX_REALIZATIONS};
use crate::error::{Error, Result};
use crate::gallery::{gen_baart, gen_blur, gen_tomo, PerturbationKind, Scenario};
use crate::linalg::{svd_decompose, DEFAULT_TRUNCATION};
use crate::rng::mix64;
use crate::rules::{evaluate_projected, optimal_projected, theta, AlphaGrid, RuleId, RuleSpec};

/// Seeds of the operator and data perturbation of one realization.
///
/// The indices are packed into 62 bits (16 + 16 + 30), shifted left by one
/// and tagged in the low bit; the result is XORed with the mixed master seed
/// and passed through the SplitMix64 finaliser. Both steps are bijections,
/// so distinct in-range index triples never share a seed. Mixing the master
/// first keeps nearby master seeds from producing permuted copies of the
/// same seed set.
pub fn derive_seeds(master_seed: u64, delta_index: usize, eta_index: usize, realization: usize) -> (u64, u64) {
    debug_assert!(delta_index < MAX_LEVELS && eta_index < MAX_LEVELS && realization < MAX_REALIZATIONS);
    let pack = ((delta_index as u64 & 0xffff) << 46) | ((eta_index as u64 & 0xffff) << 30) | (realization as u64 & 0x3fff_ffff);
    let master = mix64(master_seed);
    (mix64(master ^ (pack << 1)), mix64(master ^ ((pack << 1) | 1)))
}

/// Median by total order; even counts average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordStatus {
    Ok,
    /// The rule or realization failed; numeric fields are NaN.
    Failed,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Failed => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRecord {
    pub rule: RuleId,
    pub delta_rel: f64,
    pub eta_rel: f64,
    pub realization: usize,
    pub alpha_star: f64,
    pub fallback_used: bool,
    pub e_rel: f64,
    pub e_opt: f64,
    pub e_per: f64,
    pub status: RecordStatus,
}

impl ExperimentRecord {
    fn failed(rule: RuleId, delta_rel: f64, eta_rel: f64, realization: usize) -> Self {
        ExperimentRecord {
            rule,
            delta_rel,
            eta_rel,
            realization,
            alpha_star: f64::NAN,
            fallback_used: false,
            e_rel: f64::NAN,
            e_opt: f64::NAN,
            e_per: f64::NAN,
            status: RecordStatus::Failed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }
}

/// Canonical record order: rule, δ, η, realization.
pub fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        a.rule
            .cmp(&b.rule)
            .then(a.delta_rel.total_cmp(&b.delta_rel))
            .then(a.eta_rel.total_cmp(&b.eta_rel))
            .then(a.realization.cmp(&b.realization))
    });
}

/// A validated configuration together with its clean problem.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
}

const PROBLEM_TAG: u64 = 0x7072_6f62_6c65_6d00;
const PHANTOM_TAG: u64 = 0x7068_616e_746f_6d00;

pub fn build_scenario(config: &ExperimentConfig) -> Result<Scenario> {
    let problem_seed = mix64(config.master_seed ^ PROBLEM_TAG);
    let phantom_seed = mix64(config.master_seed ^ PHANTOM_TAG);
    Ok(match config.problem {
        ExperimentProblem::TomoGauss => Scenario {
            problem: gen_tomo(config.size, config.tomo_oversampling, problem_seed, phantom_seed)?,
            perturbation: PerturbationKind::Gaussian,
        },
        ExperimentProblem::BaartHeat => Scenario {
            problem: gen_baart(config.size)?,
            perturbation: PerturbationKind::Heat,
        },
        ExperimentProblem::BlurTomo => Scenario {
            problem: gen_blur(config.size, config.blur_band, config.blur_sigma, phantom_seed)?,
            perturbation: PerturbationKind::Tomo {
                grid_n: config.size,
                oversampling: config.tomo_oversampling,
            },
        },
    })
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenario = build_scenario(&config)?;
        Ok(Experiment { config, scenario })
    }

    /// One noisy instance scored under all nine rules. Failures become
    /// records with [`RecordStatus::Failed`].
    pub fn run_realization(&self, delta_index: usize, eta_index: usize, realization: usize) -> Vec<ExperimentRecord> {
        let delta_rel = self.config.delta_levels[delta_index];
        let eta_rel = self.config.eta_levels[eta_index];
        let rules = self.config.rule_table();
        let (op_seed, data_seed) = derive_seeds(self.config.master_seed, delta_index, eta_index, realization);
        match self.score(&rules, delta_rel, eta_rel, op_seed, data_seed) {
            Ok(outcomes) => rules
                .iter()
                .zip(outcomes)
                .map(|(spec, outcome)| match outcome {
                    Some(o) => ExperimentRecord {
                        rule: spec.id(),
                        delta_rel,
                        eta_rel,
                        realization,
                        alpha_star: o.alpha_star,
                        fallback_used: o.fallback_used,
                        e_rel: o.e_rel,
                        e_opt: o.e_opt,
                        e_per: o.e_per,
                        status: RecordStatus::Ok,
                    },
                    None => ExperimentRecord::failed(spec.id(), delta_rel, eta_rel, realization),
                })
                .collect(),
            Err(_) => rules
                .iter()
                .map(|spec| ExperimentRecord::failed(spec.id(), delta_rel, eta_rel, realization))
                .collect(),
        }
    }

    fn score(
        &self,
        rules: &[RuleSpec],
        delta_rel: f64,
        eta_rel: f64,
        op_seed: u64,
        data_seed: u64,
    ) -> Result<Vec<Option<crate::rules::SelectionOutcome>>> {
        let c = &self.config;
        let x_true = &self.scenario.problem.x_true;
        let inst = self.scenario.instance(delta_rel, eta_rel, op_seed, data_seed)?;
        let svd = svd_decompose(&inst.a_noisy, DEFAULT_TRUNCATION)?;
        let data = svd.project(&inst.y_noisy)?;
        let target = svd.project_solution(x_true)?;
        let x_norm = x_true.norm();
        let standard = AlphaGrid::standard(&svd, c.grid_points, c.alpha_floor)?;
        let optimum = optimal_projected(&svd, &data, &target, x_norm, &standard.points());
        let alpha_max = standard.alpha_max;
        let y_norm = inst.y_noisy.norm();
        Ok(rules
            .iter()
            .map(|spec| {
                let mut spec = *spec;
                let grid = if spec.is_standard() {
                    standard
                } else {
                    spec.d_constant = c.d_scaling.apply(spec.d_constant, svd.norm(), y_norm);
                    AlphaGrid::restricted(&spec, inst.eta, alpha_max, c.grid_points).ok()?
                };
                evaluate_projected(&spec, &svd, &data, &target, x_norm, inst.eta, &grid, optimum).ok()
            })
            .collect())
    }

    fn work_items(&self) -> Vec<(usize, usize, usize)> {
        let c = &self.config;
        let mut items = Vec::with_capacity(c.delta_levels.len() * c.eta_levels.len() * c.realizations);
        for di in 0..c.delta_levels.len() {
            for ei in 0..c.eta_levels.len() {
                for r in 0..c.realizations {
                    items.push((di, ei, r));
                }
            }
        }
        items
    }

    /// All `(δ, η, realization)` combinations on the rayon pool, sorted.
    pub fn run_grid(&self) -> Vec<ExperimentRecord> {
        let mut records: Vec<ExperimentRecord> = self
            .work_items()
            .into_par_iter()
            .flat_map_iter(|(di, ei, r)| self.run_realization(di, ei, r))
            .collect();
        sort_records(&mut records);
        records
    }

    pub fn run_grid_sequential(&self) -> Vec<ExperimentRecord> {
        let mut records: Vec<ExperimentRecord> = self
            .work_items()
            .into_iter()
            .flat_map(|(di, ei, r)| self.run_realization(di, ei, r))
            .collect();
        sort_records(&mut records);
        records
    }
}

/// Median `e_rel` per rule over successful records.
pub fn aggregate_medians(records: &[ExperimentRecord]) -> Result<BTreeMap<RuleId, f64>> {
    let mut groups: BTreeMap<RuleId, Vec<f64>> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.rule).or_default();
        if r.is_ok() {
            g.push(r.e_rel);
        }
    }
    groups
        .into_iter()
        .map(|(rule, values)| {
            median(&values)
                .map(|m| (rule, m))
                .ok_or_else(|| Error::InvalidArgument(format!("no successful records for rule {rule}")))
        })
        .collect()
}

/// Median of `e_opt` over the realizations, taken from one rule's records
/// (every rule of a realization shares the same optimum).
pub fn median_e_opt(records: &[ExperimentRecord]) -> Option<f64> {
    let first = records.iter().map(|r| r.rule).min()?;
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.rule == first && r.is_ok())
        .map(|r| r.e_opt)
        .collect();
    median(&values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub delta_levels: Vec<f64>,
    pub eta_levels: Vec<f64>,
    /// Row-major: one row per δ level.
    pub cells: Vec<f64>,
}

impl HeatmapMatrix {
    pub fn new(delta_levels: Vec<f64>, eta_levels: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != delta_levels.len() * eta_levels.len() {
            return Err(Error::DimensionMismatch {
                expected: delta_levels.len() * eta_levels.len(),
                got: cells.len(),
            });
        }
        Ok(HeatmapMatrix {
            delta_levels,
            eta_levels,
            cells,
        })
    }

    pub fn get(&self, delta_index: usize, eta_index: usize) -> f64 {
        self.cells[delta_index * self.eta_levels.len() + eta_index]
    }
}

fn sorted_levels(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Per `(δ, η)` cell, the median over realizations of the paired score
/// `θ = (e_per(standard) - e_per(modified)) · 100`. Realizations where
/// either rule failed are skipped; a cell left without pairs is NaN.
pub fn theta_heatmap(records: &[ExperimentRecord], standard: RuleId, modified: RuleId) -> Result<HeatmapMatrix> {
    let relevant: Vec<&ExperimentRecord> = records
        .iter()
        .filter(|r| r.rule == standard || r.rule == modified)
        .collect();
    let delta_levels = sorted_levels(relevant.iter().map(|r| r.delta_rel));
    let eta_levels = sorted_levels(relevant.iter().map(|r| r.eta_rel));
    if delta_levels.is_empty() {
        return Err(Error::InvalidArgument(format!("no records for {standard} or {modified}")));
    }
    type Key = (u64, u64, usize);
    let key = |r: &ExperimentRecord| -> Key { (r.delta_rel.to_bits(), r.eta_rel.to_bits(), r.realization) };
    let index = |rule: RuleId| -> HashMap<Key, &ExperimentRecord> {
        relevant.iter().filter(|r| r.rule == rule).map(|r| (key(r), *r)).collect()
    };
    let std_map = index(standard);
    let mod_map = index(modified);
    if std_map.len() != mod_map.len() || std_map.keys().any(|k| !mod_map.contains_key(k)) {
        return Err(Error::InvalidArgument(format!(
            "records of {standard} and {modified} are not paired"
        )));
    }
    let mut per_cell: HashMap<(u64, u64), Vec<f64>> = HashMap::new();
    for (k, s) in &std_map {
        let m = mod_map[k];
        let cell = per_cell.entry((k.0, k.1)).or_default();
        if s.is_ok() && m.is_ok() {
            cell.push(theta(s.e_per, m.e_per));
        }
    }
    let mut cells = Vec::with_capacity(delta_levels.len() * eta_levels.len());
    for d in &delta_levels {
        for e in &eta_levels {
            let values = per_cell.get(&(d.to_bits(), e.to_bits())).ok_or_else(|| {
                Error::InvalidArgument(format!("no records at delta={d}, eta={e}"))
            })?;
            cells.push(median(values).unwrap_or(f64::NAN));
        }
    }
    HeatmapMatrix::new(delta_levels, eta_levels, cells)
}
