//! Rolling daily top-k evaluation: candidate assembly, per-user ranking,
//! the four ranking metrics, and temporal averaging.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{Dataset, KeyIndex};
use crate::engine::{forward_day, score_all, ModelConfig, ModelState, Variant};
use crate::error::{Result, TgcfError};
use crate::graph::{build_window_graph, edge_coefficients, WindowedGraph};

/// Evaluation knobs.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub k: usize,
    /// Use the average-precision form without the final division by the
    /// number of relevant items.
    pub map_literal_paper_formula: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { k: 50, map_literal_paper_formula: false }
    }
}

/// The four ranking metrics for one user-day, or their average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricBundle {
    pub mrr: f64,
    pub recall_at_k: f64,
    pub map: f64,
    pub ndcg_at_k: f64,
    pub k: usize,
    pub n_users: usize,
}

/// Metrics of one evaluated day.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DayMetrics {
    pub day: u32,
    #[serde(flatten)]
    pub metrics: MetricBundle,
}

/// Anything that can score (user, candidate) pairs for a given day using
/// only information causally available before that day.
pub trait DayScorer: Sync {
    fn score_day(&self, day: u32, users: &[u32], candidates: &[u32]) -> Result<Array2<f64>>;
}

/// Engine-backed scorer. Windowed variants rebuild the trailing-w graph from
/// all events strictly before the prediction day; the Static variant
/// propagates on a frozen training graph.
pub struct GcnScorer<'a> {
    pub state: &'a ModelState,
    pub config: &'a ModelConfig,
    pub dataset: &'a Dataset,
    /// Required for [`Variant::Static`].
    pub static_graph: Option<&'a WindowedGraph>,
}

impl DayScorer for GcnScorer<'_> {
    fn score_day(&self, day: u32, users: &[u32], candidates: &[u32]) -> Result<Array2<f64>> {
        let owned;
        let graph = match self.config.variant {
            Variant::Static => self.static_graph.ok_or_else(|| {
                TgcfError::Invariant("static scorer requires a prebuilt training graph".into())
            })?,
            Variant::Windowed | Variant::ForwardWeighted => {
                let mut g = build_window_graph(&self.dataset.log.events, day, self.config.window);
                edge_coefficients(&mut g, self.config.variant.normalizer())?;
                owned = g;
                &owned
            }
        };
        let emb = forward_day(self.state, graph, &self.dataset.catalog, self.config);
        Ok(score_all(&emb, users, candidates))
    }
}

/// Sorts candidates by descending score, ties broken by ascending item key.
pub fn rank_items(candidates: &[u32], scores: &[f64], items: &KeyIndex) -> Result<Vec<u32>> {
    debug_assert_eq!(candidates.len(), scores.len());
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(TgcfError::Eval(format!(
            "non-finite score for item {}",
            items.key(candidates[pos])
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| items.key(candidates[a]).cmp(items.key(candidates[b])))
    });
    Ok(order.into_iter().map(|i| candidates[i]).collect())
}

/// Metrics for one ranked list against a binary relevance set.
pub fn compute_metrics(
    ranked: &[u32],
    relevant: &BTreeSet<u32>,
    opts: &EvalOptions,
) -> MetricBundle {
    assert!(!relevant.is_empty(), "relevance set must be nonempty (Q_t construction)");
    debug_assert!(relevant.iter().all(|r| ranked.contains(r)));
    let k = opts.k;
    let t_u = relevant.len();
    let mut first_rel: Option<usize> = None;
    let mut hits_at_k = 0usize;
    let mut cum_rel = 0usize;
    let mut ap_sum = 0.0;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().enumerate() {
        let rank = pos + 1; // 1-based
        if relevant.contains(item) {
            cum_rel += 1;
            if first_rel.is_none() {
                first_rel = Some(rank);
            }
            ap_sum += cum_rel as f64 / rank as f64;
            if rank <= k {
                hits_at_k += 1;
                dcg += 1.0 / ((rank + 1) as f64).log2();
            }
        }
    }
    let idcg: f64 = (1..=t_u.min(k)).map(|j| 1.0 / ((j + 1) as f64).log2()).sum();
    let map = if opts.map_literal_paper_formula { ap_sum } else { ap_sum / t_u as f64 };
    MetricBundle {
        mrr: first_rel.map(|r| 1.0 / r as f64).unwrap_or(0.0),
        recall_at_k: hits_at_k as f64 / t_u as f64,
        map,
        ndcg_at_k: dcg / idcg,
        k,
        n_users: 1,
    }
}

/// Evaluates one day: builds Q_t and the candidate list, scores, ranks, and
/// averages per-user metrics uniformly. Returns `None` when the day has no
/// positive events.
pub fn evaluate_day(
    scorer: &dyn DayScorer,
    dataset: &Dataset,
    day: u32,
    opts: &EvalOptions,
) -> Result<Option<DayMetrics>> {
    let mut relevance: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for e in dataset.log.events_in(day..day + 1) {
        relevance.entry(e.user).or_default().insert(e.item);
    }
    if relevance.is_empty() {
        return Ok(None);
    }
    let candidates = dataset.catalog.available_items(day);
    if candidates.is_empty() {
        return Err(TgcfError::Eval(format!("no candidate items available on day {day}")));
    }
    let users: Vec<u32> = relevance.keys().copied().collect();
    let scores = scorer.score_day(day, &users, &candidates)?;
    let mut sums = [0.0f64; 4];
    for (r, user) in users.iter().enumerate() {
        let row: Vec<f64> = scores.row(r).to_vec();
        let ranked = rank_items(&candidates, &row, &dataset.log.items).map_err(|e| {
            TgcfError::Eval(format!("day {day}, user {}: {e}", dataset.log.users.key(*user)))
        })?;
        let m = compute_metrics(&ranked, &relevance[user], opts);
        sums[0] += m.mrr;
        sums[1] += m.recall_at_k;
        sums[2] += m.map;
        sums[3] += m.ndcg_at_k;
    }
    let n = users.len() as f64;
    Ok(Some(DayMetrics {
        day,
        metrics: MetricBundle {
            mrr: sums[0] / n,
            recall_at_k: sums[1] / n,
            map: sums[2] / n,
            ndcg_at_k: sums[3] / n,
            k: opts.k,
            n_users: users.len(),
        },
    }))
}

/// Evaluates every day of `days` that has positives; days run in parallel
/// against the immutable scorer.
pub fn evaluate_range(
    scorer: &dyn DayScorer,
    dataset: &Dataset,
    days: Range<u32>,
    opts: &EvalOptions,
) -> Result<Vec<DayMetrics>> {
    let mut out: Vec<DayMetrics> = days
        .collect::<Vec<u32>>()
        .par_iter()
        .map(|&day| evaluate_day(scorer, dataset, day, opts))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    out.sort_by_key(|d| d.day);
    Ok(out)
}

/// Unweighted arithmetic mean of each metric across evaluated days.
pub fn aggregate_over_time(days: &[DayMetrics]) -> Result<MetricBundle> {
    if days.is_empty() {
        return Err(TgcfError::Eval("no evaluated days to aggregate".into()));
    }
    let n = days.len() as f64;
    Ok(MetricBundle {
        mrr: days.iter().map(|d| d.metrics.mrr).sum::<f64>() / n,
        recall_at_k: days.iter().map(|d| d.metrics.recall_at_k).sum::<f64>() / n,
        map: days.iter().map(|d| d.metrics.map).sum::<f64>() / n,
        ndcg_at_k: days.iter().map(|d| d.metrics.ndcg_at_k).sum::<f64>() / n,
        k: days[0].metrics.k,
        n_users: days.iter().map(|d| d.metrics.n_users).sum(),
    })
}
