//! Non-graph reference models: BPR-MF, MostPop and RecentPop.

use ndarray::Array2;

use crate::dataio::{Dataset, Event};
use crate::engine::{FeatureMode, ModelConfig, Variant};
use crate::error::Result;
use crate::eval::DayScorer;
use crate::training::{train, TrainConfig, TrainOutput};

/// Popularity scoring mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopularityMode {
    /// MostPop: counts frozen over the full training range.
    AllHistory,
    /// RecentPop: counts over the trailing w days, recomputed per day.
    LastWDays(u32),
}

/// Non-personalized popularity model. Scores are identical for every user
/// on a given day.
pub struct PopularityModel<'a> {
    pub mode: PopularityMode,
    pub dataset: &'a Dataset,
}

impl PopularityModel<'_> {
    /// Per-item interaction count over the governing range for day `t`.
    /// Every event counts, including repeats of the same (user, item) pair.
    fn counts(&self, t: u32) -> Vec<u32> {
        let events: &[Event] = match self.mode {
            PopularityMode::AllHistory => self.dataset.train_events(),
            PopularityMode::LastWDays(w) => {
                self.dataset.log.events_in(t.saturating_sub(w)..t)
            }
        };
        let mut counts = vec![0u32; self.dataset.n_items()];
        for e in events {
            counts[e.item as usize] += 1;
        }
        counts
    }

    /// Scores for a candidate list on day `t`; unseen items score 0.
    /// Downstream ranking breaks ties by ascending item key.
    pub fn scores(&self, t: u32, candidates: &[u32]) -> Vec<f64> {
        let counts = self.counts(t);
        candidates.iter().map(|&i| counts[i as usize] as f64).collect()
    }
}

impl DayScorer for PopularityModel<'_> {
    fn score_day(&self, day: u32, users: &[u32], candidates: &[u32]) -> Result<Array2<f64>> {
        let row = self.scores(day, candidates);
        let mut out = Array2::zeros((users.len(), candidates.len()));
        for mut r in out.rows_mut() {
            for (c, v) in r.iter_mut().zip(&row) {
                *c = *v;
            }
        }
        Ok(out)
    }
}

/// MF configuration: the engine with zero propagation layers on the static
/// graph, so scores are raw table dot products.
pub fn mf_config(id_dim: usize) -> ModelConfig {
    ModelConfig {
        variant: Variant::Static,
        layers: 0,
        id_dim,
        feature_mode: FeatureMode::IdOnly,
        feature_dim: 16,
        window: 1,
    }
}

/// Trains BPR-MF with the shared BPR/DNS/Adam loop.
pub fn train_mf(dataset: &Dataset, id_dim: usize, cfg: &TrainConfig) -> Result<TrainOutput> {
    train(dataset, &mf_config(id_dim), cfg)
}
