//! Active curve acquisition: query strategies and per-step scaling-law
//! tracking.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CurveDataset, CurveKey, LearningCurve};
use crate::error::{Error, Result};
use crate::hier::{predict_targets, EnsembleResult};
use crate::kernels::ModelKind;
use crate::scaling::{ground_truth_law, mc_from_view, MeanStd, ScalingConfig, ScalingLaw, PFLOPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QueryStrategy {
    LargestFirst,
    SmallestFirst,
    Random { seed: u64 },
    Uncertainty,
}

impl QueryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            QueryStrategy::LargestFirst => "largest_first",
            QueryStrategy::SmallestFirst => "smallest_first",
            QueryStrategy::Random { .. } => "random",
            QueryStrategy::Uncertainty => "uncertainty",
        }
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    /// Accepts `largest_first`, `smallest_first`, `uncertainty`, `random`
    /// and `random:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match s.as_str() {
            "largest_first" | "largest" => QueryStrategy::LargestFirst,
            "smallest_first" | "smallest" => QueryStrategy::SmallestFirst,
            "uncertainty" => QueryStrategy::Uncertainty,
            "random" => QueryStrategy::Random { seed: 0 },
            other => match other.strip_prefix("random:").map(str::parse::<u64>) {
                Some(Ok(seed)) => QueryStrategy::Random { seed },
                _ => return Err(Error::Config(format!("unknown strategy `{s}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub queried: Option<CurveKey>,
    pub cum_cost_pflops: f64,
    pub abc: MeanStd,
    pub beta0: MeanStd,
    pub beta1: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ALState {
    pub train_keys: Vec<CurveKey>,
    pub pool_keys: Vec<CurveKey>,
    pub initial: Vec<CurveKey>,
    pub history: Vec<HistoryEntry>,
    /// Ensemble mean variance of each pool curve from the latest evaluation.
    pub mvar: BTreeMap<CurveKey, f64>,
}

impl ALState {
    pub fn queried(&self) -> Vec<CurveKey> {
        self.history.iter().filter_map(|h| h.queried.clone()).collect()
    }

    /// Mean over history entries of the across-run AbC standard deviation.
    pub fn mean_abc_std(&self) -> f64 {
        self.history.iter().map(|h| h.abc.std).sum::<f64>() / self.history.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ALConfig {
    pub runs: usize,
    pub kind: ModelKind,
    pub scaling: ScalingConfig,
    pub master_seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            runs: 10,
            kind: ModelKind::Magp,
            scaling: ScalingConfig::default(),
            master_seed: 0,
        }
    }
}

fn within_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x != y => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Starts with one curve per task: the one with the numerically smallest
/// within label (lexicographic when labels are not numbers).
pub fn init_state(ds: &CurveDataset) -> Result<ALState> {
    let mut first: BTreeMap<&str, &CurveKey> = BTreeMap::new();
    for c in &ds.curves {
        let e = first.entry(c.key.task.as_str()).or_insert(&c.key);
        if within_order(&c.key.within, &e.within).is_lt() {
            *e = &c.key;
        }
    }
    if first.is_empty() {
        return Err(Error::invalid("dataset has no curves"));
    }
    let train: Vec<CurveKey> = ds
        .curves
        .iter()
        .filter(|c| first.get(c.key.task.as_str()) == Some(&&c.key))
        .map(|c| c.key.clone())
        .collect();
    let pool = ds.keys().into_iter().filter(|k| !train.contains(k)).collect();
    Ok(ALState {
        initial: train.clone(),
        train_keys: train,
        pool_keys: pool,
        history: Vec::new(),
        mvar: BTreeMap::new(),
    })
}

fn curve<'a>(ds: &'a CurveDataset, key: &CurveKey) -> Result<&'a LearningCurve> {
    ds.get(key).ok_or_else(|| Error::UnknownKey(key.clone()))
}

/// Next curve to acquire. `step` is the 1-based index of the acquisition.
pub fn select_query(
    ds: &CurveDataset,
    state: &ALState,
    strategy: QueryStrategy,
    step: usize,
    mvar: Option<&BTreeMap<CurveKey, f64>>,
) -> Result<CurveKey> {
    if state.pool_keys.is_empty() {
        return Err(Error::EmptyPool);
    }
    match strategy {
        QueryStrategy::LargestFirst | QueryStrategy::SmallestFirst => {
            let mut sized = Vec::with_capacity(state.pool_keys.len());
            for k in &state.pool_keys {
                let c = curve(ds, k)?;
                sized.push((c.require_n_params()?, c.final_compute().unwrap_or(0.0), k));
            }
            let by_size =
                |a: &(f64, f64, &CurveKey), b: &(f64, f64, &CurveKey)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
            let pick = if strategy == QueryStrategy::LargestFirst {
                sized.iter().min_by(|a, b| by_size(b, a).then_with(|| a.2.cmp(b.2)))
            } else {
                sized.iter().min_by(|a, b| by_size(a, b).then_with(|| a.2.cmp(b.2)))
            };
            Ok(pick.expect("pool is non-empty").2.clone())
        }
        QueryStrategy::Random { seed } => {
            let mut keys = state.pool_keys.clone();
            keys.sort();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(step as u64));
            Ok(keys.swap_remove(rng.random_range(0..keys.len())))
        }
        QueryStrategy::Uncertainty => {
            let mvar = mvar.ok_or_else(|| Error::invalid("uncertainty sampling needs ensemble variances"))?;
            let mut best: Option<(&CurveKey, f64)> = None;
            for k in &state.pool_keys {
                let v = *mvar
                    .get(k)
                    .ok_or_else(|| Error::invalid(format!("no ensemble variance for {k}")))?;
                best = match best {
                    Some((bk, bv)) if bv > v || (bv == v && bk < k) => Some((bk, bv)),
                    _ => Some((k, v)),
                };
            }
            Ok(best.expect("pool is non-empty").0.clone())
        }
    }
}

fn acquired_cost(ds: &CurveDataset, state: &ALState) -> Result<f64> {
    let mut total = 0.0;
    for k in state.train_keys.iter().filter(|k| !state.initial.contains(k)) {
        let c = curve(ds, k)?;
        let fc = c
            .final_compute()
            .ok_or_else(|| Error::schema(k.to_string(), "curve has no compute axis"))?;
        total += fc / PFLOPS;
    }
    Ok(total)
}

/// Fits the ensemble on the current training set, fits the per-run laws on
/// train plus predicted pool, records a history entry and refreshes `mvar`.
pub fn evaluate(
    ds: &CurveDataset,
    state: &mut ALState,
    queried: Option<CurveKey>,
    config: &ALConfig,
    gt: &ScalingLaw,
) -> Result<()> {
    let pick = |keys: &[CurveKey]| keys.iter().map(|k| curve(ds, k).cloned()).collect::<Result<Vec<_>>>();
    let train = pick(&state.train_keys)?;
    let pool = pick(&state.pool_keys)?;
    let (report, models) = mc_from_view(
        &train,
        &pool,
        config.kind,
        config.runs,
        &config.scaling,
        config.master_seed,
        *gt,
    )?;
    state.mvar = if models.is_empty() {
        BTreeMap::new()
    } else {
        let seeds = models.iter().map(|m| m.seed).collect();
        EnsembleResult::from_runs(seeds, predict_targets(&models, &pool)?)?.mvar_by_key()
    };
    state.history.push(HistoryEntry {
        step: state.history.len(),
        queried,
        cum_cost_pflops: acquired_cost(ds, state)?,
        abc: report.abc,
        beta0: report.beta0,
        beta1: report.beta1,
    });
    Ok(())
}

/// Acquires one curve and re-evaluates. A state without history is
/// evaluated first so that uncertainty sampling has variances to rank.
pub fn al_step(
    ds: &CurveDataset,
    mut state: ALState,
    strategy: QueryStrategy,
    config: &ALConfig,
    gt: &ScalingLaw,
) -> Result<ALState> {
    if state.pool_keys.is_empty() {
        return Err(Error::EmptyPool);
    }
    if state.history.is_empty() {
        evaluate(ds, &mut state, None, config, gt)?;
    }
    let step = state.history.len();
    let key = select_query(ds, &state, strategy, step, Some(&state.mvar))?;
    state.pool_keys.retain(|k| k != &key);
    state.train_keys.push(key.clone());
    evaluate(ds, &mut state, Some(key), config, gt)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub gt_law: ScalingLaw,
    pub runs: Vec<(QueryStrategy, ALState)>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str =
        "strategy,step,queried_task,queried_within,cum_cost_pflops,abc_mean,abc_std,beta0_mean,beta1_mean";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (s, state) in &self.runs {
            for h in &state.history {
                let (t, w) = h
                    .queried
                    .as_ref()
                    .map(|k| (k.task.as_str(), k.within.as_str()))
                    .unwrap_or(("", ""));
                let _ = writeln!(
                    out,
                    "{s},{},{t},{w},{},{},{},{},{}",
                    h.step, h.cum_cost_pflops, h.abc.mean, h.abc.std, h.beta0.mean, h.beta1.mean
                );
            }
        }
        out
    }

    pub fn query_order_csv(&self) -> String {
        let mut out = String::from("strategy,order,task,within\n");
        for (s, state) in &self.runs {
            for (i, k) in state.queried().iter().enumerate() {
                let _ = writeln!(out, "{s},{},{},{}", i + 1, k.task, k.within);
            }
        }
        out
    }
}

/// Runs every strategy for `n_steps` acquisitions from the same initial
/// state. Without `gt_law`, the law of the full dataset is the reference.
pub fn run_experiment(
    ds: &CurveDataset,
    strategies: &[QueryStrategy],
    n_steps: usize,
    config: &ALConfig,
    gt_law: Option<ScalingLaw>,
) -> Result<ExperimentReport> {
    let gt = match gt_law {
        Some(l) => l,
        None => ground_truth_law(ds, config.scaling.fit_range)?,
    };
    let mut base = init_state(ds)?;
    if n_steps > base.pool_keys.len() {
        return Err(Error::invalid(format!(
            "{n_steps} steps requested but the pool holds {} curves",
            base.pool_keys.len()
        )));
    }
    evaluate(ds, &mut base, None, config, &gt)?;
    let mut runs = Vec::with_capacity(strategies.len());
    for &s in strategies {
        let mut state = base.clone();
        for _ in 0..n_steps {
            state = al_step(ds, state, s, config, &gt)?;
        }
        runs.push((s, state));
    }
    Ok(ExperimentReport { gt_law: gt, runs })
}
