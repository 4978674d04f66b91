//! Propagation structure for one prediction day: the windowed causal
//! bipartite multigraph (or the full static training graph) with per-edge
//! coefficients for each model variant.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::dataio::Event;
use crate::error::{Result, TgcfError};

/// Coefficient rule applied to graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerKind {
    /// c = 1/(sqrt deg(u) * sqrt deg(i)) with static neighbor-set degrees.
    StaticSymmetric,
    /// Same form, degrees taken within the window multigraph.
    WindowedSymmetric,
    /// c = 1/delta_t, replacing degree normalization entirely.
    InverseDeltaT,
}

/// One edge of the (multi)graph, in local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub user: u32,
    pub item: u32,
    /// Days between event and prediction day; 0 for static graphs (unused by
    /// the static normalizer).
    pub delta_t: u32,
}

/// Bipartite propagation graph for one prediction day.
///
/// Nodes are reindexed densely per graph; `user_ids`/`item_ids` map local
/// index -> global index, and only nodes with at least one in-window edge
/// are present.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedGraph {
    pub prediction_day: u32,
    /// `None` for the full static training graph.
    pub window: Option<u32>,
    pub edges: Vec<Edge>,
    pub user_degrees: Vec<u32>,
    pub item_degrees: Vec<u32>,
    /// Per-edge propagation coefficient, parallel to `edges`; empty until
    /// [`edge_coefficients`] assigns them.
    pub coeffs: Vec<f64>,
    /// Local user index -> global user index, ascending.
    pub user_ids: Vec<u32>,
    /// Local item index -> global item index, ascending.
    pub item_ids: Vec<u32>,
}

impl WindowedGraph {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Local index of a global user id, if present.
    pub fn local_user(&self, global: u32) -> Option<usize> {
        self.user_ids.binary_search(&global).ok()
    }

    /// Local index of a global item id, if present.
    pub fn local_item(&self, global: u32) -> Option<usize> {
        self.item_ids.binary_search(&global).ok()
    }
}

fn assemble(
    prediction_day: u32,
    window: Option<u32>,
    raw: Vec<(u32, u32, u32)>, // (global user, global item, delta_t)
) -> WindowedGraph {
    let user_ids: Vec<u32> = raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let item_ids: Vec<u32> = raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let mut edges = Vec::with_capacity(raw.len());
    let mut user_degrees = vec![0u32; user_ids.len()];
    let mut item_degrees = vec![0u32; item_ids.len()];
    for (gu, gi, dt) in raw {
        let u = user_ids.binary_search(&gu).unwrap() as u32;
        let i = item_ids.binary_search(&gi).unwrap() as u32;
        user_degrees[u as usize] += 1;
        item_degrees[i as usize] += 1;
        edges.push(Edge { user: u, item: i, delta_t: dt });
    }
    WindowedGraph {
        prediction_day,
        window,
        edges,
        user_degrees,
        item_degrees,
        coeffs: Vec::new(),
        user_ids,
        item_ids,
    }
}

/// Builds the windowed causal multigraph for prediction day `t`: one edge per
/// event with day in [max(0, t-w), t), carrying delta_t = t - day.
///
/// An empty window yields an empty graph; propagation then contributes
/// nothing.
pub fn build_window_graph(events: &[Event], t: u32, w: u32) -> WindowedGraph {
    debug_assert!(t >= 1 && w >= 1);
    let start = t.saturating_sub(w);
    let lo = events.partition_point(|e| e.day < start);
    let hi = events.partition_point(|e| e.day < t);
    let raw: Vec<(u32, u32, u32)> = events[lo..hi]
        .iter()
        .map(|e| (e.user, e.item, t - e.day))
        .collect();
    assemble(t, Some(w), raw)
}

/// Builds the static training graph over a day range: one edge per distinct
/// (user, item) pair with at least one event in range; time is collapsed.
pub fn build_static_graph(events: &[Event], range: Range<u32>) -> WindowedGraph {
    let lo = events.partition_point(|e| e.day < range.start);
    let hi = events.partition_point(|e| e.day < range.end);
    let pairs: BTreeSet<(u32, u32)> = events[lo..hi].iter().map(|e| (e.user, e.item)).collect();
    let raw: Vec<(u32, u32, u32)> = pairs.into_iter().map(|(u, i)| (u, i, 0)).collect();
    assemble(range.end, None, raw)
}

/// Assigns per-edge coefficients in place according to `kind`.
///
/// The same coefficient is used in both propagation directions, so the
/// stacked propagation operator is symmetric.
pub fn edge_coefficients(graph: &mut WindowedGraph, kind: NormalizerKind) -> Result<()> {
    let mut coeffs = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let c = match kind {
            NormalizerKind::StaticSymmetric | NormalizerKind::WindowedSymmetric => {
                let du = graph.user_degrees[e.user as usize];
                let di = graph.item_degrees[e.item as usize];
                if du == 0 || di == 0 {
                    return Err(TgcfError::Invariant(format!(
                        "zero degree on edge ({}, {})",
                        e.user, e.item
                    )));
                }
                1.0 / ((du as f64).sqrt() * (di as f64).sqrt())
            }
            NormalizerKind::InverseDeltaT => {
                if e.delta_t < 1 {
                    return Err(TgcfError::Invariant(format!(
                        "edge ({}, {}) has delta_t {} < 1 under InverseDeltaT",
                        e.user, e.item, e.delta_t
                    )));
                }
                1.0 / e.delta_t as f64
            }
        };
        debug_assert!(c.is_finite() && c > 0.0);
        coeffs.push(c);
    }
    graph.coeffs = coeffs;
    Ok(())
}
