use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CurveDataset, CurveKey, LearningCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Explicit,
    Diagonal,
    LargestK,
    RandomK,
    PrefixMask,
}

/// How to divide a dataset into a training view and prediction targets.
///
/// `masks` is keyed task -> within -> number of observed points counted from
/// the start of the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub name: String,
    pub kind: SplitKind,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "key_pairs")]
    pub test_keys: Option<Vec<CurveKey>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<BTreeMap<String, BTreeMap<String, usize>>>,
}

mod key_pairs {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::CurveKey;

    pub fn serialize<S: Serializer>(keys: &Option<Vec<CurveKey>>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Option<Vec<[&str; 2]>> = keys
            .as_ref()
            .map(|ks| ks.iter().map(|k| [k.task.as_str(), k.within.as_str()]).collect());
        serde::Serialize::serialize(&pairs, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<CurveKey>>, D::Error> {
        let pairs: Option<Vec<[String; 2]>> = Option::deserialize(d)?;
        Ok(pairs.map(|ps| ps.into_iter().map(|[t, w]| CurveKey::new(t, w)).collect()))
    }
}

impl SplitSpec {
    pub fn explicit(test_keys: Vec<CurveKey>) -> Self {
        SplitSpec {
            name: String::new(),
            kind: SplitKind::Explicit,
            test_keys: Some(test_keys),
            k: None,
            seed: None,
            masks: None,
        }
    }

    pub fn diagonal(test_keys: Vec<CurveKey>) -> Self {
        SplitSpec {
            kind: SplitKind::Diagonal,
            ..SplitSpec::explicit(test_keys)
        }
    }

    pub fn largest_k(k: usize) -> Self {
        SplitSpec {
            name: String::new(),
            kind: SplitKind::LargestK,
            test_keys: None,
            k: Some(k),
            seed: None,
            masks: None,
        }
    }

    pub fn random_k(k: usize, seed: u64) -> Self {
        SplitSpec {
            kind: SplitKind::RandomK,
            seed: Some(seed),
            ..SplitSpec::largest_k(k)
        }
    }

    pub fn prefix_mask(masks: impl IntoIterator<Item = (CurveKey, usize)>) -> Self {
        let mut map: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for (key, n) in masks {
            map.entry(key.task).or_default().insert(key.within, n);
        }
        SplitSpec {
            name: String::new(),
            kind: SplitKind::PrefixMask,
            test_keys: None,
            k: None,
            seed: None,
            masks: Some(map),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema("split preset", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    fn mask_entries(&self) -> Vec<(CurveKey, usize)> {
        self.masks
            .iter()
            .flatten()
            .flat_map(|(t, inner)| {
                inner
                    .iter()
                    .map(move |(w, &n)| (CurveKey::new(t.clone(), w.clone()), n))
            })
            .collect()
    }
}

/// Training view and prediction targets produced by a split.
///
/// For prefix masks the same key appears in both halves: the observed prefix
/// in `train`, the unobserved suffix in `test`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub train: Vec<LearningCurve>,
    pub test: Vec<LearningCurve>,
}

impl SplitView {
    pub fn train_keys(&self) -> Vec<CurveKey> {
        self.train.iter().map(|c| c.key.clone()).collect()
    }

    pub fn test_keys(&self) -> Vec<CurveKey> {
        self.test.iter().map(|c| c.key.clone()).collect()
    }
}

pub fn apply_split(ds: &CurveDataset, spec: &SplitSpec) -> Result<SplitView> {
    match spec.kind {
        SplitKind::Explicit => {
            let test = key_set(ds, spec.test_keys.as_deref().unwrap_or_default())?;
            Ok(partition(ds, |k| test.contains(k), |_| false))
        }
        SplitKind::Diagonal => {
            let test = key_set(ds, spec.test_keys.as_deref().unwrap_or_default())?;
            if let Some(k) = test.iter().find(|k| k.task == k.within) {
                return Err(Error::invalid(format!("diagonal curve {k} cannot be a test curve")));
            }
            Ok(partition(ds, |k| test.contains(k), |k| k.task == k.within))
        }
        SplitKind::LargestK => {
            let k = checked_k(ds, spec)?;
            let mut sized = ds
                .curves
                .iter()
                .map(|c| Ok((c.require_n_params()?, &c.key)))
                .collect::<Result<Vec<_>>>()?;
            sized.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            let test: BTreeSet<CurveKey> = sized.into_iter().take(k).map(|(_, key)| key.clone()).collect();
            Ok(partition(ds, |key| test.contains(key), |_| false))
        }
        SplitKind::RandomK => {
            let k = checked_k(ds, spec)?;
            let seed = spec
                .seed
                .ok_or_else(|| Error::invalid("random_k split requires a seed"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let test: BTreeSet<CurveKey> = index::sample(&mut rng, ds.curves.len(), k)
                .into_iter()
                .map(|i| ds.curves[i].key.clone())
                .collect();
            Ok(partition(ds, |key| test.contains(key), |_| false))
        }
        SplitKind::PrefixMask => {
            let entries = spec.mask_entries();
            let mut masks = BTreeMap::new();
            for (key, observed) in entries {
                let curve = ds.get(&key).ok_or_else(|| Error::UnknownKey(key.clone()))?;
                if observed < 1 || observed >= curve.len() {
                    return Err(Error::invalid(format!(
                        "mask for {key} must observe between 1 and {} points, got {observed}",
                        curve.len() - 1
                    )));
                }
                masks.insert(key, observed);
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for c in &ds.curves {
                match masks.get(&c.key) {
                    Some(&n) => {
                        train.push(c.slice(0, n));
                        test.push(c.slice(n, c.len()));
                    }
                    None => train.push(c.clone()),
                }
            }
            Ok(SplitView { train, test })
        }
    }
}

fn key_set(ds: &CurveDataset, keys: &[CurveKey]) -> Result<BTreeSet<CurveKey>> {
    keys.iter()
        .map(|k| {
            ds.get(k)
                .map(|c| c.key.clone())
                .ok_or_else(|| Error::UnknownKey(k.clone()))
        })
        .collect()
}

fn checked_k(ds: &CurveDataset, spec: &SplitSpec) -> Result<usize> {
    let k = spec
        .k
        .ok_or_else(|| Error::invalid(format!("{:?} split requires k", spec.kind)))?;
    if k > ds.curves.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} available curves",
            ds.curves.len()
        )));
    }
    Ok(k)
}

fn partition(
    ds: &CurveDataset,
    is_test: impl Fn(&CurveKey) -> bool,
    is_excluded: impl Fn(&CurveKey) -> bool,
) -> SplitView {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in ds.curves.iter().filter(|c| !is_excluded(&c.key)) {
        if is_test(&c.key) {
            test.push(c.clone());
        } else {
            train.push(c.clone());
        }
    }
    SplitView { train, test }
}
