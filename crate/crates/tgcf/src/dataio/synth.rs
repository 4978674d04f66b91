//! Synthetic drifting-dataset generator.
//!
//! Users belong to latent segments; each segment holds a categorical
//! preference over item clusters, re-drawn every `regime_length` days.
//! Items have finite lifetimes so the daily catalog churns, and a
//! `repeat_prob` fraction of the previous day's events is replayed verbatim.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Exp};
use serde::{Deserialize, Serialize};

use super::{Dataset, Event, EventLog, ItemCatalog, ItemMeta, KeyIndex};
use crate::error::{Result, TgcfError};

/// Generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    pub days: u32,
    pub events_per_day: usize,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_clusters")]
    pub item_clusters: usize,
    #[serde(default = "default_regime")]
    pub regime_length: u32,
    #[serde(default = "default_repeat")]
    pub repeat_prob: f64,
    #[serde(default = "default_lifetime")]
    pub item_lifetime_mean: f64,
    /// Train/validation boundary; defaults to 2/3 of the day span.
    #[serde(default)]
    pub train_end_day: Option<u32>,
    /// Validation/test boundary; defaults to 5/6 of the day span.
    #[serde(default)]
    pub val_end_day: Option<u32>,
}

fn default_segments() -> usize {
    8
}
fn default_clusters() -> usize {
    12
}
fn default_regime() -> u32 {
    20
}
fn default_repeat() -> f64 {
    0.134
}
fn default_lifetime() -> f64 {
    60.0
}

/// Achieved daily statistics, for comparison against calibration targets.
#[derive(Debug, Clone, Serialize)]
pub struct SynthStats {
    pub mean_events_per_day: f64,
    pub mean_users_per_day: f64,
    pub mean_items_per_day: f64,
    /// Fraction of events (day >= 1) that also occurred the previous day.
    pub repeat_fraction: f64,
}

/// Dirichlet concentration for segment preferences; small values make
/// regimes sharply concentrated on a few clusters.
const PREF_ALPHA: f64 = 0.3;

/// Deterministically generates a drifting dataset for a fixed (spec, seed).
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Dataset, SynthStats)> {
    if spec.users == 0 || spec.items == 0 || spec.days == 0 || spec.events_per_day == 0 {
        return Err(TgcfError::Config(
            "synthetic spec fields users/items/days/events_per_day must be positive".into(),
        ));
    }
    if spec.segments == 0 || spec.item_clusters == 0 || spec.regime_length == 0 {
        return Err(TgcfError::Config(
            "synthetic spec fields segments/item_clusters/regime_length must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.repeat_prob) {
        return Err(TgcfError::Config("repeat_prob must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Items: cluster assignment, availability interval, categorical labels.
    let exp = Exp::new(1.0 / spec.item_lifetime_mean.max(1.0))
        .map_err(|e| TgcfError::Config(format!("bad item_lifetime_mean: {e}")))?;
    let mut meta = Vec::with_capacity(spec.items);
    let mut clusters = Vec::with_capacity(spec.items);
    for k in 0..spec.items {
        let cluster = rng.gen_range(0..spec.item_clusters);
        let (issue, maturity) = loop {
            let raw_issue = rng.gen_range(-(spec.item_lifetime_mean as i64)..spec.days as i64);
            let lifetime = exp.sample(&mut rng).round().max(3.0) as i64;
            let maturity = raw_issue + lifetime;
            if maturity >= 0 {
                break (raw_issue.max(0) as u32, maturity as u32);
            }
        };
        let labels: [String; 7] = [
            format!("R{}", rng.gen_range(0..6)),
            format!("S{}", cluster),
            format!("N{}", cluster * 2 + rng.gen_range(0..2)),
            format!("C{}", rng.gen_range(0..8)),
            format!("F{}", rng.gen_range(0..4)),
            format!("G{}", rng.gen_range(0..3)),
            format!("Y{}", rng.gen_range(0..4)),
        ];
        meta.push(ItemMeta {
            item_id: format!("i{k:05}"),
            labels,
            issue_day: issue,
            maturity_day: maturity,
        });
        clusters.push(cluster);
    }

    // Segment preferences per regime.
    let n_regimes = (spec.days + spec.regime_length - 1) / spec.regime_length;
    let dirichlet = Dirichlet::new(&vec![PREF_ALPHA; spec.item_clusters])
        .map_err(|e| TgcfError::Config(format!("bad cluster count: {e}")))?;
    let mut prefs = Vec::with_capacity(n_regimes as usize);
    for _ in 0..n_regimes {
        let per_segment: Vec<Vec<f64>> = (0..spec.segments).map(|_| dirichlet.sample(&mut rng)).collect();
        prefs.push(per_segment);
    }
    let segment_of = |u: usize| u % spec.segments;

    // Day loop.
    let mut events: Vec<(u32, u32, u32)> = Vec::new(); // (day, user, item)
    let mut prev: Vec<(u32, u32)> = Vec::new();
    let mut repeat_events = 0usize;
    let mut total_after_day0 = 0usize;
    let mut user_days = 0usize;
    let mut item_days = 0usize;
    for day in 0..spec.days {
        let alive: Vec<u32> = (0..spec.items)
            .filter(|&k| meta[k].available_on(day))
            .map(|k| k as u32)
            .collect();
        if alive.is_empty() {
            return Err(TgcfError::Config(format!("no items available on day {day}; increase item_lifetime_mean or items")));
        }
        let mut alive_by_cluster = vec![Vec::new(); spec.item_clusters];
        for &k in &alive {
            alive_by_cluster[clusters[k as usize]].push(k);
        }

        let mut today: BTreeSet<(u32, u32)> = BTreeSet::new();

        // Replay a fraction of the previous day verbatim.
        let prev_valid: Vec<(u32, u32)> = prev
            .iter()
            .copied()
            .filter(|&(_, i)| meta[i as usize].available_on(day))
            .collect();
        let n_replay = (spec.repeat_prob * prev_valid.len() as f64).round() as usize;
        if n_replay > 0 {
            let mut pool = prev_valid.clone();
            for r in 0..n_replay.min(pool.len()) {
                let j = rng.gen_range(r..pool.len());
                pool.swap(r, j);
                today.insert(pool[r]);
            }
        }

        // Fresh events: segment preference -> cluster -> alive item.
        // Rejects candidates that repeat the previous day so the replayed
        // fraction stays at repeat_prob.
        let prev_set: BTreeSet<(u32, u32)> = prev.iter().copied().collect();
        let regime = (day / spec.regime_length) as usize;
        let mut attempts = 0usize;
        let max_attempts = spec.events_per_day * 200;
        while today.len() < spec.events_per_day && attempts < max_attempts {
            attempts += 1;
            let user = rng.gen_range(0..spec.users) as u32;
            let weights = &prefs[regime][segment_of(user as usize)];
            let mut x: f64 = rng.gen();
            let mut cluster = spec.item_clusters - 1;
            for (c, w) in weights.iter().enumerate() {
                x -= w;
                if x <= 0.0 {
                    cluster = c;
                    break;
                }
            }
            let pool = if alive_by_cluster[cluster].is_empty() { &alive } else { &alive_by_cluster[cluster] };
            let item = pool[rng.gen_range(0..pool.len())];
            let cand = (user, item);
            if today.contains(&cand) || prev_set.contains(&cand) {
                continue;
            }
            today.insert(cand);
        }

        if day > 0 {
            total_after_day0 += today.len();
            repeat_events += today.iter().filter(|e| prev_set.contains(e)).count();
        }
        user_days += today.iter().map(|&(u, _)| u).collect::<BTreeSet<_>>().len();
        item_days += today.iter().map(|&(_, i)| i).collect::<BTreeSet<_>>().len();
        for &(u, i) in &today {
            events.push((day, u, i));
        }
        prev = today.into_iter().collect();
    }

    let stats = SynthStats {
        mean_events_per_day: events.len() as f64 / spec.days as f64,
        mean_users_per_day: user_days as f64 / spec.days as f64,
        mean_items_per_day: item_days as f64 / spec.days as f64,
        repeat_fraction: if total_after_day0 > 0 {
            repeat_events as f64 / total_after_day0 as f64
        } else {
            0.0
        },
    };

    // Assemble the dataset. Key order is index order by zero-padding.
    let users = KeyIndex::from_keys((0..spec.users).map(|u| format!("u{u:05}")));
    let items = KeyIndex::from_keys(meta.iter().map(|m| m.item_id.clone()));
    let mut evs: Vec<Event> = events
        .into_iter()
        .map(|(day, u, i)| Event { day, user: u, item: i })
        .collect();
    evs.sort_unstable();
    let log = EventLog { events: evs, users, items };
    let catalog = ItemCatalog::from_meta(meta);

    let train_end = spec.train_end_day.unwrap_or(spec.days * 2 / 3);
    let val_end = spec.val_end_day.unwrap_or(spec.days * 5 / 6);
    let split = super::chronological_split(&log, train_end, val_end)?;
    let dataset = Dataset::new(log, catalog, split)?;
    Ok((dataset, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            users: 200,
            items: 500,
            days: 120,
            events_per_day: 300,
            segments: 8,
            item_clusters: 12,
            regime_length: 20,
            repeat_prob: 0.134,
            item_lifetime_mean: 60.0,
            train_end_day: None,
            val_end_day: None,
        }
    }

    #[test]
    fn repeat_fraction_matches_target() {
        let (_, stats) = generate_synthetic(&spec(), 42).unwrap();
        assert!(
            (stats.repeat_fraction - 0.134).abs() <= 0.02,
            "repeat fraction {} not within 0.134 +/- 0.02",
            stats.repeat_fraction
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, _) = generate_synthetic(&spec(), 7).unwrap();
        let (b, _) = generate_synthetic(&spec(), 7).unwrap();
        assert_eq!(a.log.events, b.log.events);
        assert_eq!(a.catalog.meta, b.catalog.meta);
    }

    #[test]
    fn zero_events_rejected() {
        let mut s = spec();
        s.events_per_day = 0;
        assert!(generate_synthetic(&s, 1).is_err());
    }

    #[test]
    fn regimes_drift_item_popularity() {
        // Popularity ranks decorrelate across a regime boundary: correlation
        // between day 5 and day 25 (different regimes) is lower than between
        // day 5 and day 15 (same regime).
        let mut s = spec();
        s.events_per_day = 1000;
        let (ds, _) = generate_synthetic(&s, 11).unwrap();
        let counts_on = |day: u32| {
            let mut c = vec![0f64; ds.n_items()];
            for e in ds.log.events_in(day..day + 1) {
                c[e.item as usize] += 1.0;
            }
            c
        };
        let rank_corr = |a: &[f64], b: &[f64]| {
            // Spearman via rank transform then Pearson.
            let ranks = |v: &[f64]| {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&x, &y| v[x].partial_cmp(&v[y]).unwrap());
                let mut r = vec![0f64; v.len()];
                for (pos, &i) in idx.iter().enumerate() {
                    r[i] = pos as f64;
                }
                r
            };
            let (ra, rb) = (ranks(a), ranks(b));
            let n = ra.len() as f64;
            let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
            let mut cov = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for i in 0..ra.len() {
                cov += (ra[i] - ma) * (rb[i] - mb);
                va += (ra[i] - ma).powi(2);
                vb += (rb[i] - mb).powi(2);
            }
            cov / (va.sqrt() * vb.sqrt())
        };
        let (d5, d15, d25) = (counts_on(5), counts_on(15), counts_on(25));
        let same_regime = rank_corr(&d5, &d15);
        let cross_regime = rank_corr(&d5, &d25);
        assert!(
            cross_regime < same_regime,
            "expected drift: corr(5,25)={cross_regime} >= corr(5,15)={same_regime}"
        );
    }

    #[test]
    fn six_regimes_over_120_days() {
        let s = spec();
        assert_eq!((s.days + s.regime_length - 1) / s.regime_length, 6);
    }
}
