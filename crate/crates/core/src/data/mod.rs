//! Hierarchical learning-curve grids.
//!
//! A dataset is a set of curves indexed by a two-level key `(task, within)`.
//! For the nanoGPT-style grids the task is the embedding width and `within`
//! the layer count; for translation grids they are source and target
//! language.

mod split;
mod synth;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use split::{apply_split, SplitKind, SplitSpec, SplitView};
pub use synth::{synth_generate, synth_generate_with_params, ComputeAxis, SynthConfig, SynthMode, Trend};
pub use transform::TransformState;

/// Meta field holding a curve's model parameter count.
pub const N_PARAMS: &str = "n_params";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CurveKey {
    pub task: String,
    pub within: String,
}

impl CurveKey {
    pub fn new(task: impl Into<String>, within: impl Into<String>) -> Self {
        CurveKey {
            task: task.into(),
            within: within.into(),
        }
    }

    /// The same curve seen with the hierarchy levels exchanged.
    pub fn transposed(&self) -> Self {
        CurveKey::new(self.within.clone(), self.task.clone())
    }
}

impl fmt::Display for CurveKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.task, self.within)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub key: CurveKey,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Cumulative training FLOPs at each `x`.
    pub compute: Option<Vec<f64>>,
    pub meta: BTreeMap<String, Value>,
}

impl LearningCurve {
    /// Builds a curve and checks the per-curve invariants.
    pub fn new(key: CurveKey, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let curve = LearningCurve {
            key,
            x,
            y,
            compute: None,
            meta: BTreeMap::new(),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn with_compute(mut self, compute: Vec<f64>) -> Result<Self> {
        self.compute = Some(compute);
        self.validate()?;
        Ok(self)
    }

    pub fn with_meta(mut self, field: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(field.to_string(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_params(&self) -> Option<f64> {
        self.meta.get(N_PARAMS).and_then(Value::as_f64)
    }

    pub fn require_n_params(&self) -> Result<f64> {
        self.n_params().ok_or_else(|| Error::MissingMeta {
            key: self.key.clone(),
            field: N_PARAMS.to_string(),
        })
    }

    pub fn final_compute(&self) -> Option<f64> {
        self.compute.as_ref().and_then(|c| c.last().copied())
    }

    /// Sub-curve over the index range `[start, end)`, keeping key and meta.
    pub fn slice(&self, start: usize, end: usize) -> LearningCurve {
        LearningCurve {
            key: self.key.clone(),
            x: self.x[start..end].to_vec(),
            y: self.y[start..end].to_vec(),
            compute: self.compute.as_ref().map(|c| c[start..end].to_vec()),
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = || format!("curve {}", self.key);
        if self.key.task.is_empty() || self.key.within.is_empty() {
            return Err(Error::schema(ctx(), "task and within must be non-empty"));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::schema(
                ctx(),
                format!("x has {} values but y has {}", self.x.len(), self.y.len()),
            ));
        }
        if self.x.len() < 2 {
            return Err(Error::schema(ctx(), "a curve needs at least 2 points"));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::schema(ctx(), "non-finite value in x or y"));
        }
        if self.x.iter().any(|&v| v <= 0.0) {
            return Err(Error::schema(ctx(), "x values must be positive"));
        }
        if !strictly_increasing(&self.x) {
            return Err(Error::NonMonotone {
                key: self.key.clone(),
                field: "x",
            });
        }
        if let Some(c) = &self.compute {
            if c.len() != self.x.len() {
                return Err(Error::schema(
                    ctx(),
                    format!("compute_flops has {} values but x has {}", c.len(), self.x.len()),
                ));
            }
            if c.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(Error::schema(ctx(), "compute_flops must be positive and finite"));
            }
            if !strictly_increasing(c) {
                return Err(Error::NonMonotone {
                    key: self.key.clone(),
                    field: "compute_flops",
                });
            }
        }
        Ok(())
    }

    /// Attaches a compute axis using the `6 * N * tokens` training-FLOPs
    /// approximation: `compute[i] = 6 * n_params * tokens_per_step * x[i]`.
    pub fn derive_compute(&self, n_params: f64, tokens_per_step: f64) -> Result<LearningCurve> {
        if self.compute.is_some() {
            return Err(Error::invalid(format!("curve {} already has a compute axis", self.key)));
        }
        if !(n_params.is_finite() && n_params > 0.0) {
            return Err(Error::invalid("n_params must be positive"));
        }
        if !(tokens_per_step.is_finite() && tokens_per_step > 0.0) {
            return Err(Error::invalid("tokens_per_step must be positive"));
        }
        let scale = 6.0 * n_params * tokens_per_step;
        let compute: Vec<f64> = self.x.iter().map(|&s| scale * s).collect();
        if compute.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("compute axis overflows f64".into()));
        }
        let mut out = self.clone();
        out.compute = Some(compute);
        Ok(out)
    }

    /// Keeps `m` points whose `log10(x)` best match `m` equally spaced
    /// targets between the endpoints.
    ///
    /// Targets are matched in order; each picks the nearest x that lies after
    /// the previous pick and still leaves room for the remaining targets
    /// (ties go to the smaller x). Endpoints are always kept.
    pub fn subsample_log(&self, m: usize) -> Result<LearningCurve> {
        let n = self.len();
        if m < 2 || m > n {
            return Err(Error::invalid(format!("subsample size {m} outside [2, {n}]")));
        }
        if m == n {
            return Ok(self.clone());
        }
        let lx: Vec<f64> = self.x.iter().map(|v| v.log10()).collect();
        let (lo, hi) = (lx[0], lx[n - 1]);
        let mut picks = Vec::with_capacity(m);
        picks.push(0usize);
        for k in 1..m - 1 {
            let target = lo + (hi - lo) * k as f64 / (m - 1) as f64;
            let first = picks[k - 1] + 1;
            let last = n - 1 - (m - 1 - k);
            let mut best = first;
            for i in first..=last {
                if (lx[i] - target).abs() < (lx[best] - target).abs() {
                    best = i;
                }
            }
            picks.push(best);
        }
        picks.push(n - 1);
        Ok(self.select(&picks))
    }

    fn select(&self, idx: &[usize]) -> LearningCurve {
        LearningCurve {
            key: self.key.clone(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            compute: self.compute.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
            meta: self.meta.clone(),
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Loss,
    Bleu,
    Chrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "min")]
    LowerBetter,
    #[serde(rename = "max")]
    HigherBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XKind {
    Steps,
    Tokens,
    DatasetSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveDataset {
    pub name: String,
    pub metric: Metric,
    pub direction: Direction,
    pub x_kind: XKind,
    pub task_axis_label: String,
    pub within_axis_label: String,
    pub curves: Vec<LearningCurve>,
}

impl CurveDataset {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.curves {
            c.validate()?;
            if !seen.insert(&c.key) {
                return Err(Error::DuplicateKey(c.key.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &CurveKey) -> Option<&LearningCurve> {
        self.curves.iter().find(|c| &c.key == key)
    }

    pub fn keys(&self) -> Vec<CurveKey> {
        self.curves.iter().map(|c| c.key.clone()).collect()
    }

    /// Distinct task labels in first-seen order.
    pub fn tasks(&self) -> Vec<String> {
        distinct(self.curves.iter().map(|c| &c.key.task))
    }

    pub fn withins(&self) -> Vec<String> {
        distinct(self.curves.iter().map(|c| &c.key.within))
    }

    pub fn has_compute(&self) -> bool {
        self.curves.iter().all(|c| c.compute.is_some())
    }

    /// The same grid with task and within exchanged on every key.
    pub fn transposed(&self) -> CurveDataset {
        let mut out = self.clone();
        std::mem::swap(&mut out.task_axis_label, &mut out.within_axis_label);
        for c in &mut out.curves {
            c.key = c.key.transposed();
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawDataset = serde_json::from_str(text).map_err(|e| Error::schema("dataset", e.to_string()))?;
        let ds = raw.into_dataset()?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawDataset::from(self))?)
    }
}

fn distinct<'a>(it: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in it {
        if seen.insert(s) {
            out.push(s.clone());
        }
    }
    out
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<CurveDataset> {
    let text = fs::read_to_string(path.as_ref())?;
    CurveDataset::from_json_str(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: String,
    metric: Metric,
    direction: Direction,
    x_kind: XKind,
    task_axis_label: String,
    within_axis_label: String,
    curves: Vec<RawCurve>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurve {
    task: String,
    within: String,
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compute_flops: Option<Vec<f64>>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
}

impl RawDataset {
    fn into_dataset(self) -> Result<CurveDataset> {
        let curves = self
            .curves
            .into_iter()
            .map(|c| {
                let key = CurveKey::new(c.task, c.within);
                if let Some(v) = c.meta.get(N_PARAMS) {
                    if !v.as_f64().is_some_and(|n| n > 0.0) {
                        return Err(Error::schema(
                            format!("curve {key}"),
                            "meta.n_params must be a positive number",
                        ));
                    }
                }
                Ok(LearningCurve {
                    key,
                    x: c.x,
                    y: c.y,
                    compute: c.compute_flops,
                    meta: c.meta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveDataset {
            name: self.name,
            metric: self.metric,
            direction: self.direction,
            x_kind: self.x_kind,
            task_axis_label: self.task_axis_label,
            within_axis_label: self.within_axis_label,
            curves,
        })
    }
}

impl From<&CurveDataset> for RawDataset {
    fn from(ds: &CurveDataset) -> Self {
        RawDataset {
            name: ds.name.clone(),
            metric: ds.metric,
            direction: ds.direction,
            x_kind: ds.x_kind,
            task_axis_label: ds.task_axis_label.clone(),
            within_axis_label: ds.within_axis_label.clone(),
            curves: ds
                .curves
                .iter()
                .map(|c| RawCurve {
                    task: c.key.task.clone(),
                    within: c.key.within.clone(),
                    x: c.x.clone(),
                    y: c.y.clone(),
                    compute_flops: c.compute.clone(),
                    meta: c.meta.clone(),
                })
                .collect(),
        }
    }
}
