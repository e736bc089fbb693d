//! Repeated split → index → graph → recommend → score runs.
//!
//! Each repetition draws its own split and hash families from a seed derived
//! from the master seed. Within a repetition one graph is built per distinct
//! `(H, T)` and shared by every `(λ, ξ)` cell, and candidate pools (hence
//! predictions) are shared across cells of the same graph. Every message
//! exchanged while indexing passes through [`audit_privacy`].

use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Cell, DatasetKind, EvalConfig};
use super::data::{load_movielens, load_wsdream, QosMatrix};
use super::metrics::{aqos, ild, mae, rmse};
use super::normalize::{normalize, Normalization};
use super::split::{split_platforms, PlatformSplit, Split};
use super::synth;
use crate::error::{PdsrError, Result};
use crate::federation::audit_privacy;
use crate::graph::{build_graph_observed, SimilarityGraph};
use crate::recommend::{binomial, brute_force_select, greedy_select, CandidatePool, Objective, RecommendationList};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const METRICS_HEADER: &str = "platform,H,T,lambda,xi,K,mae,rmse,aqos,ild,coverage,seconds";

pub fn load_dataset(cfg: &EvalConfig) -> Result<QosMatrix> {
    let path = || {
        cfg.data_path
            .as_deref()
            .ok_or_else(|| PdsrError::Config(format!("dataset {} requires data_path", cfg.dataset)))
    };
    let raw = match cfg.dataset {
        DatasetKind::WsDream => load_wsdream(path()?)?,
        DatasetKind::MovieLens => load_movielens(path()?)?,
        DatasetKind::Synthetic => synth::generate(&cfg.synth)?,
    };
    normalize(&raw, cfg.normalization)
}

pub fn repetition_seed(master: u64, repetition: usize) -> u64 {
    derive_seed(master, &[stream::REPETITION, repetition as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatformMetrics {
    pub platform: u32,
    pub mae: f64,
    pub rmse: f64,
    pub aqos: f64,
    pub ild: f64,
    pub coverage: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub seed: u64,
    /// `(platform, target user ids)`
    pub targets: Vec<(u32, Vec<u64>)>,
    pub metrics: Vec<PlatformMetrics>,
    pub messages_audited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: DatasetKind,
    pub normalization: Normalization,
    pub cell: Cell,
    pub k: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// Per-platform means over repetitions.
    pub platforms: Vec<PlatformMetrics>,
    pub per_repetition: Vec<RepetitionRecord>,
    pub messages_audited: usize,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<EvalReport>,
}

/// Split and graph for one repetition and one `(H, T)`.
#[derive(Debug)]
pub struct Prepared {
    pub seed: u64,
    pub split: Split,
    pub graph: SimilarityGraph,
    pub messages_audited: usize,
    pub graph_seconds: f64,
}

fn audited_graph(split: &Split, h_counts: &[usize], t: usize, seed: u64) -> Result<(SimilarityGraph, usize)> {
    let mut audited = 0usize;
    let graph = build_graph_observed(&split.training(), h_counts, t, seed, |msg| {
        audited += 1;
        let report = audit_privacy(msg)?;
        if report.passed() {
            Ok(())
        } else {
            let reasons: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            Err(PdsrError::Privacy(format!(
                "platform {} round {}: {}",
                report.platform_id,
                report.round,
                reasons.join("; ")
            )))
        }
    })?;
    Ok((graph, audited))
}

pub fn prepare(cfg: &EvalConfig, data: &QosMatrix, h_counts: &[usize], t: usize, repetition: usize) -> Result<Prepared> {
    let seed = repetition_seed(cfg.seed, repetition);
    let split = split_platforms(data, &cfg.split_spec(seed))?;
    let start = Instant::now();
    let (graph, messages_audited) = audited_graph(&split, h_counts, t, seed)?;
    Ok(Prepared {
        seed,
        split,
        graph,
        messages_audited,
        graph_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-target pools and holdout predictions for one platform.
struct PlatformPools<'a> {
    platform: &'a PlatformSplit,
    pools: Vec<CandidatePool>,
    mae: f64,
    rmse: f64,
    seconds: f64,
}

fn platform_pools<'a>(graph: &SimilarityGraph, platform: &'a PlatformSplit) -> Result<PlatformPools<'a>> {
    let start = Instant::now();
    let mut pools = Vec::with_capacity(platform.targets.len());
    let (mut preds, mut truths) = (Vec::new(), Vec::new());
    for target in &platform.targets {
        let pool = CandidatePool::build(graph, &platform.training, target.local)?;
        for &(service, truth) in &target.holdout {
            let pred = pool.predicted(service).ok_or_else(|| {
                PdsrError::invalid(format!("holdout service {service} of user {} is visible in training", target.user_id))
            })?;
            preds.push(pred);
            truths.push(truth);
        }
        pools.push(pool);
    }
    Ok(PlatformPools {
        platform,
        mae: mae(&preds, &truths)?,
        rmse: rmse(&preds, &truths)?,
        pools,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn score_cell(graph: &SimilarityGraph, pp: &PlatformPools<'_>, cell: &Cell, k: usize) -> Result<(PlatformMetrics, f64)> {
    let start = Instant::now();
    let mut lists = Vec::with_capacity(pp.pools.len());
    for pool in &pp.pools {
        lists.push(greedy_select(&Objective::new(graph, pool, cell.lambda, cell.xi)?, k)?.services);
    }
    let users: Vec<usize> = pp.platform.targets.iter().map(|t| t.local).collect();
    let quality = aqos(&lists, &users, &pp.platform.truth)?;
    let diversity = ild(&lists, &pp.platform.truth)?;
    let metrics = PlatformMetrics {
        platform: pp.platform.truth.platform_id(),
        mae: pp.mae,
        rmse: pp.rmse,
        aqos: quality.aqos,
        ild: diversity,
        coverage: quality.coverage,
        seconds: 0.0,
    };
    Ok((metrics, start.elapsed().as_secs_f64()))
}

fn run_repetition(cfg: &EvalConfig, data: &QosMatrix, cells: &[Cell], repetition: usize) -> Vec<Result<RepetitionRecord>> {
    let seed = repetition_seed(cfg.seed, repetition);
    let split = match split_platforms(data, &cfg.split_spec(seed)) {
        Ok(s) => s,
        Err(e) => return cells.iter().map(|_| Err(e.duplicate())).collect(),
    };
    let reported = cfg.reported_platforms();
    let targets: Vec<(u32, Vec<u64>)> = reported
        .iter()
        .filter_map(|&pid| split.platform(pid))
        .map(|p| (p.truth.platform_id(), p.targets.iter().map(|t| t.user_id).collect()))
        .collect();

    let mut out: Vec<Option<Result<RepetitionRecord>>> = cells.iter().map(|_| None).collect();
    for (i, cell) in cells.iter().enumerate() {
        if out[i].is_some() {
            continue;
        }
        let group: Vec<usize> = (i..cells.len())
            .filter(|&j| cells[j].h_counts == cell.h_counts && cells[j].t == cell.t)
            .collect();
        let start = Instant::now();
        let built = audited_graph(&split, &cell.h_counts, cell.t, seed).and_then(|(graph, audited)| {
            let graph_seconds = start.elapsed().as_secs_f64();
            let pools = reported
                .iter()
                .map(|&pid| {
                    let p = split
                        .platform(pid)
                        .ok_or_else(|| PdsrError::invalid(format!("no platform {pid}")))?;
                    platform_pools(&graph, p)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((graph, audited, graph_seconds, pools))
        });
        let (graph, audited, graph_seconds, pools) = match built {
            Ok(b) => b,
            Err(e) => {
                for &j in &group {
                    out[j] = Some(Err(e.duplicate()));
                }
                continue;
            }
        };
        for &j in &group {
            let record = pools
                .iter()
                .map(|pp| {
                    let (mut m, secs) = score_cell(&graph, pp, &cells[j], cfg.k)?;
                    m.seconds = if cfg.timing { graph_seconds + pp.seconds + secs } else { 0.0 };
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()
                .map(|metrics| RepetitionRecord {
                    repetition,
                    seed,
                    targets: targets.clone(),
                    metrics,
                    messages_audited: audited,
                });
            out[j] = Some(record);
        }
    }
    out.into_iter().map(|r| r.expect("every cell visited")).collect()
}

fn mean_metrics(records: &[RepetitionRecord]) -> Vec<PlatformMetrics> {
    let n = records.len() as f64;
    let mut means: Vec<PlatformMetrics> = records[0]
        .metrics
        .iter()
        .map(|m| PlatformMetrics {
            platform: m.platform,
            mae: 0.0,
            rmse: 0.0,
            aqos: 0.0,
            ild: 0.0,
            coverage: 0.0,
            seconds: 0.0,
        })
        .collect();
    for record in records {
        for (acc, m) in means.iter_mut().zip(&record.metrics) {
            acc.mae += m.mae;
            acc.rmse += m.rmse;
            acc.aqos += m.aqos;
            acc.ild += m.ild;
            acc.coverage += m.coverage;
            acc.seconds += m.seconds;
        }
    }
    for m in &mut means {
        m.mae /= n;
        m.rmse /= n;
        m.aqos /= n;
        m.ild /= n;
        m.coverage /= n;
        m.seconds /= n;
    }
    means
}

/// Runs every grid cell of `cfg`; a failing cell yields an error outcome
/// without stopping the others. Repetitions run in parallel.
pub fn sweep(cfg: &EvalConfig, data: &QosMatrix) -> Vec<CellOutcome> {
    run_cells(cfg, data, cfg.cells())
}

fn run_cells(cfg: &EvalConfig, data: &QosMatrix, cells: Vec<Cell>) -> Vec<CellOutcome> {
    let per_rep: Vec<Vec<Result<RepetitionRecord>>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, data, &cells, rep))
        .collect();
    let mut columns: Vec<Vec<Result<RepetitionRecord>>> = cells.iter().map(|_| Vec::new()).collect();
    for rep in per_rep {
        for (col, r) in columns.iter_mut().zip(rep) {
            col.push(r);
        }
    }
    cells
        .into_iter()
        .zip(columns)
        .map(|(cell, col)| {
            let result = col.into_iter().collect::<Result<Vec<_>>>().and_then(|records| {
                let platforms = mean_metrics(&records);
                for m in &platforms {
                    if m.mae > m.rmse + 1e-12 || !(0.0..=1.0).contains(&m.ild) {
                        return Err(PdsrError::invalid(format!("platform {} report violates MAE ≤ RMSE or ILD ∈ [0,1]", m.platform)));
                    }
                }
                Ok(EvalReport {
                    dataset: cfg.dataset,
                    normalization: cfg.normalization,
                    cell: cell.clone(),
                    k: cfg.k,
                    seed: cfg.seed,
                    repetitions: cfg.repetitions,
                    platforms,
                    messages_audited: records.iter().map(|r| r.messages_audited).sum(),
                    per_repetition: records,
                })
            });
            CellOutcome { cell, result }
        })
        .collect()
}

/// Single-cell evaluation.
pub fn run_pipeline(cfg: &EvalConfig, data: &QosMatrix) -> Result<EvalReport> {
    let cell = cfg.single_cell()?;
    run_cells(cfg, data, vec![cell])
        .pop()
        .expect("one outcome per cell")
        .result
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// One row per cell and reported platform; failed cells get `NA` metrics.
pub fn write_metrics_csv<W: Write>(cfg: &EvalConfig, outcomes: &[CellOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER.split(','))?;
    for outcome in outcomes {
        let c = &outcome.cell;
        let prefix = |platform: u32| {
            vec![
                platform.to_string(),
                c.h_label(),
                c.t.to_string(),
                fmt_f64(c.lambda),
                fmt_f64(c.xi),
                cfg.k.to_string(),
            ]
        };
        match &outcome.result {
            Ok(report) => {
                for m in &report.platforms {
                    let mut row = prefix(m.platform);
                    row.extend([m.mae, m.rmse, m.aqos, m.ild, m.coverage, m.seconds].map(fmt_f64));
                    w.write_record(&row)?;
                }
            }
            Err(e) => {
                log::error!("cell H={} T={} lambda={} xi={} failed: {e}", c.h_label(), c.t, c.lambda, c.xi);
                for pid in cfg.reported_platforms() {
                    let mut row = prefix(pid);
                    row.extend(std::iter::repeat_n("NA".to_string(), 6));
                    w.write_record(&row)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Recommendation for one user on the repetition-0 split.
#[derive(Debug, Clone, Serialize)]
pub struct UserRecommendation {
    pub user_id: u64,
    pub platform: u32,
    pub candidates: usize,
    pub list: RecommendationList,
}

pub fn recommend_user(cfg: &EvalConfig, data: &QosMatrix, cell: &Cell, user_id: u64, k: usize) -> Result<(UserRecommendation, Prepared)> {
    if !data.user_ids.contains(&user_id) {
        return Err(PdsrError::UnknownUser(user_id));
    }
    let prepared = prepare(cfg, data, &cell.h_counts, cell.t, 0)?;
    let (platform, local) = prepared.split.locate(user_id).ok_or(PdsrError::UnknownUser(user_id))?;
    let pool = CandidatePool::build(&prepared.graph, &platform.training, local)?;
    let list = greedy_select(&Objective::new(&prepared.graph, &pool, cell.lambda, cell.xi)?, k)?;
    let rec = UserRecommendation {
        user_id,
        platform: platform.truth.platform_id(),
        candidates: pool.len(),
        list,
    };
    Ok((rec, prepared))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub instance: usize,
    pub platform: u32,
    pub user_id: u64,
    pub k: usize,
    pub lambda: f64,
    pub xi: f64,
    pub candidates: usize,
    pub greedy_f: f64,
    pub optimal_f: f64,
    pub ratio: f64,
}

pub const ORACLE_HEADER: &str = "instance,platform,user_id,K,lambda,xi,candidates,greedy_F,optimal_F,ratio";

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub instances: usize,
    pub max_candidates: usize,
    /// Draw `K ∈ 1..=4` and `λ, ξ ∈ [0, 0.5]` per instance instead of using the cell's values.
    pub randomize: bool,
    pub cap: u128,
}

/// Compares greedy against the exhaustive optimum on target users' candidate
/// pools, down-sampled to `max_candidates`.
pub fn oracle_check(cfg: &EvalConfig, data: &QosMatrix, cell: &Cell, settings: &OracleSettings) -> Result<Vec<OracleRow>> {
    if settings.max_candidates == 0 {
        return Err(PdsrError::Config("max-candidates must be at least 1".into()));
    }
    let prepared = prepare(cfg, data, &cell.h_counts, cell.t, 0)?;
    let mut users: Vec<(&PlatformSplit, usize, CandidatePool)> = Vec::new();
    for pid in cfg.reported_platforms() {
        if let Some(p) = prepared.split.platform(pid) {
            for t in &p.targets {
                let pool = CandidatePool::build(&prepared.graph, &p.training, t.local)?;
                if !pool.is_empty() {
                    users.push((p, t.local, pool));
                }
            }
        }
    }
    if users.is_empty() {
        return Err(PdsrError::EmptyCandidates);
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[stream::ORACLE]));
    let mut rows = Vec::with_capacity(settings.instances);
    for instance in 0..settings.instances {
        let (platform, local, pool) = &users[rng.random_range(0..users.len())];
        let pool = if pool.len() > settings.max_candidates {
            let picks: Vec<u32> = index::sample(&mut rng, pool.len(), settings.max_candidates)
                .into_iter()
                .map(|p| pool.candidates()[p])
                .collect();
            pool.restrict(&picks)?
        } else {
            pool.clone()
        };
        let (k, lambda, xi) = if settings.randomize {
            (rng.random_range(1..=4), rng.random_range(0.0..=0.5), rng.random_range(0.0..=0.5))
        } else {
            (cfg.k, cell.lambda, cell.xi)
        };
        let subsets = binomial(pool.len(), k.min(pool.len()));
        if subsets > settings.cap {
            return Err(PdsrError::TooLarge {
                subsets,
                cap: settings.cap,
            });
        }
        let objective = Objective::new(&prepared.graph, &pool, lambda, xi)?;
        let greedy = greedy_select(&objective, k)?;
        let greedy_f = objective.f(&greedy.services)?;
        let (_, optimal_f) = brute_force_select(&objective, k, settings.cap)?;
        rows.push(OracleRow {
            instance,
            platform: platform.truth.platform_id(),
            user_id: platform.truth.user_ids()[*local],
            k,
            lambda,
            xi,
            candidates: pool.len(),
            greedy_f,
            optimal_f,
            ratio: if optimal_f > 0.0 { greedy_f / optimal_f } else { 1.0 },
        });
    }
    Ok(rows)
}

pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ORACLE_HEADER.split(','))?;
    for r in rows {
        w.write_record(&[
            r.instance.to_string(),
            r.platform.to_string(),
            r.user_id.to_string(),
            r.k.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.xi),
            r.candidates.to_string(),
            fmt_f64(r.greedy_f),
            fmt_f64(r.optimal_f),
            fmt_f64(r.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `platform,user_id,target,holdout` with holdout service ids joined by `;`.
pub fn write_split_csv<W: Write>(split: &Split, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["platform", "user_id", "target", "holdout"])?;
    for p in &split.platforms {
        for (local, &user) in p.truth.user_ids().iter().enumerate() {
            let target = p.targets.iter().find(|t| t.local == local);
            let holdout = target
                .map(|t| t.holdout.iter().map(|(s, _)| s.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            w.write_record(&[
                p.truth.platform_id().to_string(),
                user.to_string(),
                u8::from(target.is_some()).to_string(),
                holdout,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
