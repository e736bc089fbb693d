//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored; keys are case-insensitive. Grid
//! keys (`h`, `t`, `lambda`, `xi`) accept comma-separated lists for sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use super::normalize::Normalization;
use super::split::SplitSpec;
use super::synth::SynthParams;
use crate::error::{PdsrError, Result};

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "data_path",
    "normalization",
    "holdout",
    "platform_users",
    "min_records",
    "targets",
    "h",
    "h_counts",
    "t",
    "lambda",
    "xi",
    "k",
    "seed",
    "repetitions",
    "timing",
    "report_platforms",
    "synth_users",
    "synth_services",
    "synth_rank",
    "synth_missing",
    "synth_seed",
];

fn config_err(msg: impl Into<String>) -> PdsrError {
    PdsrError::Config(msg.into())
}

/// Raw key/value pairs, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            map.set_pair(line)
                .map_err(|e| config_err(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(map)
    }

    /// Applies one `key=value` override; later values win.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| config_err(format!("expected key=value, got {pair:?}")))?;
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(config_err(format!("unknown key {key:?}")));
        }
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| config_err(format!("invalid value for {key}: {v:?}"))))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|_| config_err(format!("invalid entry in {key}: {item:?}")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    WsDream,
    MovieLens,
    Synthetic,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::WsDream => "wsdream",
            DatasetKind::MovieLens => "movielens",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = PdsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wsdream" => Ok(DatasetKind::WsDream),
            "movielens" => Ok(DatasetKind::MovieLens),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(config_err(format!(
                "unknown dataset {other:?} (expected wsdream, movielens or synthetic)"
            ))),
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    /// Hash functions per platform.
    pub h_counts: Vec<usize>,
    pub t: usize,
    pub lambda: f64,
    pub xi: f64,
}

impl Cell {
    /// `3` when all platforms agree, otherwise `3;4`.
    pub fn h_label(&self) -> String {
        match self.h_counts.split_first() {
            Some((first, rest)) if rest.iter().all(|h| h == first) => first.to_string(),
            _ => self.h_counts.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub dataset: DatasetKind,
    pub data_path: Option<PathBuf>,
    pub normalization: Normalization,
    pub holdout: usize,
    pub platform_users: Vec<usize>,
    pub min_records: usize,
    pub targets: usize,
    pub h: Vec<usize>,
    pub h_counts: Option<Vec<usize>>,
    pub t: Vec<usize>,
    pub lambda: Vec<f64>,
    pub xi: Vec<f64>,
    pub k: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// When false, wall-clock columns are written as 0 so outputs are byte-stable.
    pub timing: bool,
    /// Platform ids to score; all platforms when absent.
    pub report_platforms: Option<Vec<u32>>,
    pub synth: SynthParams,
}

impl EvalConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let dataset: DatasetKind = map
            .parsed("dataset")?
            .ok_or_else(|| config_err("missing required key dataset"))?;
        let data_path = map.get("data_path").map(PathBuf::from);
        if dataset != DatasetKind::Synthetic && data_path.is_none() {
            return Err(config_err(format!("dataset {dataset} requires data_path")));
        }
        let default_synth = SynthParams::default();
        let synth = SynthParams {
            users: map.parsed("synth_users")?.unwrap_or(default_synth.users),
            services: map.parsed("synth_services")?.unwrap_or(default_synth.services),
            rank: map.parsed("synth_rank")?.unwrap_or(default_synth.rank),
            missing: map.parsed("synth_missing")?.unwrap_or(default_synth.missing),
            seed: map.parsed("synth_seed")?.unwrap_or(default_synth.seed),
        };
        let (default_norm, default_users, default_min) = match dataset {
            DatasetKind::MovieLens => (Normalization::None, Some(vec![2249, 3375]), Some(25)),
            DatasetKind::WsDream => (Normalization::InvertedMinMax, Some(vec![135, 204]), None),
            DatasetKind::Synthetic if synth.users == 339 => (Normalization::InvertedMinMax, Some(vec![135, 204]), None),
            DatasetKind::Synthetic => (Normalization::InvertedMinMax, None, None),
        };
        let holdout = map.parsed("holdout")?.unwrap_or(15);
        let k = map.parsed("k")?.unwrap_or(5);
        let platform_users = map
            .list("platform_users")?
            .or(default_users)
            .ok_or_else(|| config_err("missing required key platform_users"))?;
        let h_counts: Option<Vec<usize>> = map.list("h_counts")?;
        if h_counts.is_some() && map.get("h").is_some() {
            return Err(config_err("set either h or h_counts, not both"));
        }
        let cfg = EvalConfig {
            dataset,
            data_path,
            normalization: map.parsed("normalization")?.unwrap_or(default_norm),
            holdout,
            min_records: map.parsed("min_records")?.or(default_min).unwrap_or(holdout + k),
            platform_users,
            targets: map.parsed("targets")?.unwrap_or(15),
            h: map.list("h")?.unwrap_or_else(|| vec![3]),
            h_counts,
            t: map.list("t")?.unwrap_or_else(|| vec![9]),
            lambda: map.list("lambda")?.unwrap_or_else(|| vec![0.1]),
            xi: map.list("xi")?.unwrap_or_else(|| vec![0.3]),
            k,
            seed: map.parsed("seed")?.unwrap_or(0),
            repetitions: map.parsed("repetitions")?.unwrap_or(50),
            timing: map.parsed("timing")?.unwrap_or(true),
            report_platforms: map.list("report_platforms")?,
            synth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(config_err(msg));
        if self.holdout == 0 {
            return fail("holdout must be at least 1".into());
        }
        if self.k == 0 {
            return fail("K must be at least 1".into());
        }
        if self.min_records < self.holdout + self.k {
            return fail(format!(
                "min_records ({}) must be at least holdout + K ({})",
                self.min_records,
                self.holdout + self.k
            ));
        }
        if self.platform_users.is_empty() || self.platform_users.contains(&0) {
            return fail("platform_users entries must be positive".into());
        }
        if self.targets == 0 || self.repetitions == 0 {
            return fail("targets and repetitions must be at least 1".into());
        }
        if self.h.is_empty() || self.h.contains(&0) || self.h.iter().any(|&h| h > u16::MAX as usize) {
            return fail("h entries must lie in 1..=65535".into());
        }
        if let Some(hc) = &self.h_counts {
            if hc.len() != self.platform_users.len() || hc.contains(&0) {
                return fail(format!(
                    "h_counts needs one positive entry per platform ({} platforms)",
                    self.platform_users.len()
                ));
            }
        }
        if self.t.is_empty() || self.lambda.is_empty() || self.xi.is_empty() {
            return fail("grid keys must not be empty".into());
        }
        if let Some(bad) = self.lambda.iter().chain(&self.xi).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return fail(format!("lambda and xi must be finite and non-negative, got {bad}"));
        }
        if let Some(rp) = &self.report_platforms {
            let n = self.platform_users.len() as u32;
            if rp.is_empty() || rp.iter().any(|&p| p == 0 || p > n) {
                return fail(format!("report_platforms entries must lie in 1..={n}"));
            }
        }
        if self.dataset == DatasetKind::Synthetic {
            self.synth.validate().map_err(|e| config_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn n_platforms(&self) -> usize {
        self.platform_users.len()
    }

    /// Platform ids to score, ascending.
    pub fn reported_platforms(&self) -> Vec<u32> {
        let mut ids = self
            .report_platforms
            .clone()
            .unwrap_or_else(|| (1..=self.n_platforms() as u32).collect());
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Grid expansion in `h`, `t`, `lambda`, `xi` order.
    pub fn cells(&self) -> Vec<Cell> {
        let hs: Vec<Vec<usize>> = match &self.h_counts {
            Some(hc) => vec![hc.clone()],
            None => self.h.iter().map(|&h| vec![h; self.n_platforms()]).collect(),
        };
        let mut cells = Vec::new();
        for h in &hs {
            for &t in &self.t {
                for &lambda in &self.lambda {
                    for &xi in &self.xi {
                        cells.push(Cell {
                            h_counts: h.clone(),
                            t,
                            lambda,
                            xi,
                        });
                    }
                }
            }
        }
        cells
    }

    /// The single cell of a non-sweep run.
    pub fn single_cell(&self) -> Result<Cell> {
        let mut cells = self.cells();
        if cells.len() != 1 {
            return Err(config_err(format!(
                "expected a single parameter setting, the grid has {} cells",
                cells.len()
            )));
        }
        Ok(cells.remove(0))
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            holdout: self.holdout,
            platform_users: self.platform_users.clone(),
            min_records: self.min_records,
            targets: self.targets,
            seed,
        }
    }
}
