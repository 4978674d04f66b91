//! Embedding storage, layer-wise linear propagation, layer aggregation,
//! scoring, analytic backward pass and Adam updates.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use ndarray::{s, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataio::ItemCatalog;
use crate::error::{Result, TgcfError};
use crate::graph::{NormalizerKind, WindowedGraph};

/// Model variant: which graph the propagation runs on and which
/// coefficient rule applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Static,
    Windowed,
    ForwardWeighted,
}

impl Variant {
    pub fn normalizer(self) -> NormalizerKind {
        match self {
            Variant::Static => NormalizerKind::StaticSymmetric,
            Variant::Windowed => NormalizerKind::WindowedSymmetric,
            Variant::ForwardWeighted => NormalizerKind::InverseDeltaT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    IdOnly,
    IdPlusFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of propagation layers K.
    pub layers: usize,
    /// ID embedding size d.
    pub id_dim: usize,
    pub feature_mode: FeatureMode,
    /// Embedding size per categorical feature.
    pub feature_dim: usize,
    /// Window size w in days; unused for the Static variant.
    pub window: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Windowed,
            layers: 1,
            id_dim: 64,
            feature_mode: FeatureMode::IdOnly,
            feature_dim: 16,
            window: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers > 3 {
            return Err(TgcfError::Config(format!("layers must be in 0..=3, got {}", self.layers)));
        }
        if self.id_dim == 0 || self.feature_dim == 0 {
            return Err(TgcfError::Config("embedding dims must be >= 1".into()));
        }
        if self.variant != Variant::Static && self.window == 0 {
            return Err(TgcfError::Config("window must be >= 1 for windowed variants".into()));
        }
        Ok(())
    }

    /// Projection input width in feature mode: d + 7 * feature_dim.
    pub fn concat_dim(&self) -> usize {
        self.id_dim + 7 * self.feature_dim
    }
}

/// One trainable tensor with its Adam moment arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub m: Array2<f64>,
    pub v: Array2<f64>,
}

impl Param {
    fn new(value: Array2<f64>) -> Self {
        let m = Array2::zeros(value.raw_dim());
        let v = Array2::zeros(value.raw_dim());
        Param { value, m, v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    /// One vocab-sized table per categorical feature.
    pub tables: Vec<Param>,
    /// (d + 7*feature_dim) x d.
    pub projection: Param,
    /// 1 x d.
    pub bias: Param,
}

/// All trainable parameters plus the Adam step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub user_table: Param,
    pub item_table: Param,
    pub features: Option<FeatureParams>,
    pub step: u64,
}

impl ModelState {
    pub fn n_users(&self) -> usize {
        self.user_table.value.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_table.value.nrows()
    }

    /// Asserts every parameter entry is finite.
    pub fn check_finite(&self) -> Result<()> {
        let check = |name: &str, a: &Array2<f64>| -> Result<()> {
            if let Some(idx) = a.iter().position(|x| !x.is_finite()) {
                return Err(TgcfError::NonFiniteGradient { param: name.into(), index: idx });
            }
            Ok(())
        };
        check("user_table", &self.user_table.value)?;
        check("item_table", &self.item_table.value)?;
        if let Some(f) = &self.features {
            for (i, t) in f.tables.iter().enumerate() {
                check(&format!("feature_table_{i}"), &t.value)?;
            }
            check("projection", &f.projection.value)?;
            check("bias", &f.bias.value)?;
        }
        Ok(())
    }
}

impl ModelState {
    /// Named views of every parameter value array, in checkpoint order.
    pub fn param_arrays_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = vec![
            ("user_table".into(), &mut self.user_table.value),
            ("item_table".into(), &mut self.item_table.value),
        ];
        if let Some(f) = self.features.as_mut() {
            for (i, t) in f.tables.iter_mut().enumerate() {
                out.push((format!("feature_table_{i}"), &mut t.value));
            }
            out.push(("projection".into(), &mut f.projection.value));
            out.push(("bias".into(), &mut f.bias.value));
        }
        out
    }
}

/// Initialization scale: zero-mean normal with standard deviation 0.1.
const INIT_SCALE: f64 = 0.1;

/// Creates a fresh state; deterministic for a fixed seed.
pub fn init_state(
    config: &ModelConfig,
    user_count: usize,
    item_count: usize,
    feature_vocabs: &[usize; 7],
    seed: u64,
) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SCALE).unwrap();
    let mut draw = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
    };
    let user_table = Param::new(draw(user_count, config.id_dim));
    let item_table = Param::new(draw(item_count, config.id_dim));
    let features = match config.feature_mode {
        FeatureMode::IdOnly => None,
        FeatureMode::IdPlusFeatures => {
            let tables = (0..7).map(|f| Param::new(draw(feature_vocabs[f], config.feature_dim))).collect();
            let projection = Param::new(draw(config.concat_dim(), config.id_dim));
            let bias = Param::new(draw(1, config.id_dim));
            Some(FeatureParams { tables, projection, bias })
        }
    };
    ModelState { user_table, item_table, features, step: 0 }
}

/// Item-side concatenated inputs in feature mode: [id | f0 | .. | f6].
fn item_concat(state: &ModelState, catalog: &ItemCatalog, config: &ModelConfig) -> Array2<f64> {
    let n = state.n_items();
    let d = config.id_dim;
    let fd = config.feature_dim;
    let f = state.features.as_ref().expect("feature mode without feature params");
    let mut concat = Array2::zeros((n, config.concat_dim()));
    concat.slice_mut(s![.., 0..d]).assign(&state.item_table.value);
    for i in 0..n {
        for (fi, t) in f.tables.iter().enumerate() {
            let code = catalog.codes[i][fi];
            let off = d + fi * fd;
            concat
                .slice_mut(s![i, off..off + fd])
                .assign(&t.value.row(code));
        }
    }
    concat
}

/// Layer-0 inputs for every user and item in the dataset.
///
/// IdOnly: the ID embedding rows. IdPlusFeatures: items are projected from
/// the concatenation of ID and feature embeddings; users are unchanged
/// (users carry no features).
pub fn initial_features(
    state: &ModelState,
    catalog: &ItemCatalog,
    config: &ModelConfig,
) -> (Array2<f64>, Array2<f64>) {
    let h0_users = state.user_table.value.clone();
    let h0_items = match config.feature_mode {
        FeatureMode::IdOnly => state.item_table.value.clone(),
        FeatureMode::IdPlusFeatures => {
            let f = state.features.as_ref().unwrap();
            let concat = item_concat(state, catalog, config);
            concat.dot(&f.projection.value) + &f.bias.value.row(0)
        }
    };
    (h0_users, h0_items)
}

/// Per-layer hidden representations over a graph's local indices, plus the
/// aggregated final embeddings e = sum_k h^(k) / (k+1).
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub hu: Vec<Array2<f64>>,
    pub hi: Vec<Array2<f64>>,
    pub eu: Array2<f64>,
    pub ei: Array2<f64>,
}

/// Runs K alternating sparse propagations from layer-0 inputs (local index
/// space) and aggregates the layers.
pub fn propagate(
    h0_users: Array2<f64>,
    h0_items: Array2<f64>,
    graph: &WindowedGraph,
    k: usize,
) -> LayerStack {
    assert_eq!(
        graph.coeffs.len(),
        graph.edges.len(),
        "edge coefficients must be assigned before propagation"
    );
    let d = h0_users.ncols().max(h0_items.ncols());
    let mut hu = vec![h0_users];
    let mut hi = vec![h0_items];
    for layer in 1..=k {
        let prev_u = &hu[layer - 1];
        let prev_i = &hi[layer - 1];
        let mut next_u: Array2<f64> = Array2::zeros((prev_u.nrows(), d));
        let mut next_i: Array2<f64> = Array2::zeros((prev_i.nrows(), d));
        for (e, &c) in graph.edges.iter().zip(&graph.coeffs) {
            let (u, i) = (e.user as usize, e.item as usize);
            let src_i = prev_i.row(i).to_owned();
            next_u.row_mut(u).scaled_add(c, &src_i);
            let src_u = prev_u.row(u).to_owned();
            next_i.row_mut(i).scaled_add(c, &src_u);
        }
        hu.push(next_u);
        hi.push(next_i);
    }
    let mut eu = Array2::zeros(hu[0].raw_dim());
    let mut ei = Array2::zeros(hi[0].raw_dim());
    for (layer, (u, i)) in hu.iter().zip(&hi).enumerate() {
        let alpha = 1.0 / (layer as f64 + 1.0);
        eu.scaled_add(alpha, u);
        ei.scaled_add(alpha, i);
    }
    LayerStack { hu, hi, eu, ei }
}

/// Final embeddings for every user/item in the dataset on one day: nodes in
/// the graph carry their propagated embedding, isolated nodes keep h^(0).
#[derive(Debug, Clone)]
pub struct DayEmbeddings {
    pub e_users: Array2<f64>,
    pub e_items: Array2<f64>,
}

/// Full forward pass for one prediction day.
pub fn forward_day(
    state: &ModelState,
    graph: &WindowedGraph,
    catalog: &ItemCatalog,
    config: &ModelConfig,
) -> DayEmbeddings {
    let (h0_users, h0_items) = initial_features(state, catalog, config);
    let local_u = gather(&h0_users, &graph.user_ids);
    let local_i = gather(&h0_items, &graph.item_ids);
    let stack = propagate(local_u, local_i, graph, config.layers);
    let mut e_users = h0_users;
    let mut e_items = h0_items;
    scatter_assign(&mut e_users, &graph.user_ids, &stack.eu);
    scatter_assign(&mut e_items, &graph.item_ids, &stack.ei);
    DayEmbeddings { e_users, e_items }
}

fn gather(full: &Array2<f64>, ids: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((ids.len(), full.ncols()));
    for (local, &g) in ids.iter().enumerate() {
        out.row_mut(local).assign(&full.row(g as usize));
    }
    out
}

fn scatter_assign(full: &mut Array2<f64>, ids: &[u32], local: &Array2<f64>) {
    for (l, &g) in ids.iter().enumerate() {
        full.row_mut(g as usize).assign(&local.row(l));
    }
}

/// Dot-product score of one user/item embedding pair.
pub fn score(e_user: ndarray::ArrayView1<f64>, e_item: ndarray::ArrayView1<f64>) -> f64 {
    e_user.dot(&e_item)
}

/// One score row per queried user over the candidate list.
pub fn score_all(emb: &DayEmbeddings, users: &[u32], candidates: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((users.len(), candidates.len()));
    for (r, &u) in users.iter().enumerate() {
        let eu = emb.e_users.row(u as usize);
        for (c, &i) in candidates.iter().enumerate() {
            out[[r, c]] = eu.dot(&emb.e_items.row(i as usize));
        }
    }
    out
}

/// Gradients mirroring the parameter arrays of [`ModelState`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub user_table: Array2<f64>,
    pub item_table: Array2<f64>,
    pub features: Option<FeatureGradients>,
}

#[derive(Debug, Clone)]
pub struct FeatureGradients {
    pub tables: Vec<Array2<f64>>,
    pub projection: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Gradients {
    /// Named views of every gradient array, matching
    /// [`ModelState::param_arrays_mut`] order.
    pub fn arrays(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = vec![
            ("user_table".into(), &self.user_table),
            ("item_table".into(), &self.item_table),
        ];
        if let Some(f) = &self.features {
            for (i, t) in f.tables.iter().enumerate() {
                out.push((format!("feature_table_{i}"), t));
            }
            out.push(("projection".into(), &f.projection));
            out.push(("bias".into(), &f.bias));
        }
        out
    }

    pub fn zeros_like(state: &ModelState) -> Self {
        Gradients {
            user_table: Array2::zeros(state.user_table.value.raw_dim()),
            item_table: Array2::zeros(state.item_table.value.raw_dim()),
            features: state.features.as_ref().map(|f| FeatureGradients {
                tables: f.tables.iter().map(|t| Array2::zeros(t.value.raw_dim())).collect(),
                projection: Array2::zeros(f.projection.value.raw_dim()),
                bias: Array2::zeros(f.bias.value.raw_dim()),
            }),
        }
    }
}

/// Backward pass for one day: maps gradients w.r.t. the final full-table
/// embeddings to parameter gradients.
///
/// The stacked propagation operator A is symmetric, so the pullback through
/// e = sum_k alpha_k A^k h^(0) is the same polynomial applied to the
/// incoming gradient. Isolated nodes pass their gradient straight to h^(0).
pub fn backward_day(
    state: &ModelState,
    graph: &WindowedGraph,
    catalog: &ItemCatalog,
    config: &ModelConfig,
    grad_e_users: &Array2<f64>,
    grad_e_items: &Array2<f64>,
) -> Gradients {
    let local_gu = gather(grad_e_users, &graph.user_ids);
    let local_gi = gather(grad_e_items, &graph.item_ids);
    let back = propagate(local_gu, local_gi, graph, config.layers);
    let mut grad_h0_users = grad_e_users.clone();
    let mut grad_h0_items = grad_e_items.clone();
    scatter_assign(&mut grad_h0_users, &graph.user_ids, &back.eu);
    scatter_assign(&mut grad_h0_items, &graph.item_ids, &back.ei);

    let mut grads = Gradients::zeros_like(state);
    grads.user_table += &grad_h0_users;
    match config.feature_mode {
        FeatureMode::IdOnly => {
            grads.item_table += &grad_h0_items;
        }
        FeatureMode::IdPlusFeatures => {
            let f = state.features.as_ref().unwrap();
            let d = config.id_dim;
            let fd = config.feature_dim;
            let concat = item_concat(state, catalog, config);
            let grad_concat = grad_h0_items.dot(&f.projection.value.t());
            let fg = grads.features.as_mut().unwrap();
            fg.projection += &concat.t().dot(&grad_h0_items);
            let bias_sum = grad_h0_items.sum_axis(Axis(0));
            let mut bias_row = fg.bias.row_mut(0);
            bias_row += &bias_sum;
            grads.item_table += &grad_concat.slice(s![.., 0..d]);
            for item in 0..state.n_items() {
                for fi in 0..7 {
                    let code = catalog.codes[item][fi];
                    let off = d + fi * fd;
                    let slice = grad_concat.slice(s![item, off..off + fd]);
                    let mut row = fg.tables[fi].row_mut(code);
                    row += &slice;
                }
            }
        }
    }
    grads
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

fn adam_update(param: &mut Param, grad: &Array2<f64>, hp: &AdamParams, t: u64, name: &str) -> Result<()> {
    if let Some(idx) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TgcfError::NonFiniteGradient { param: name.into(), index: idx });
    }
    let t = t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    azip(param, grad, |value, m, v, g| {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *value -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    });
    Ok(())
}

fn azip(param: &mut Param, grad: &Array2<f64>, mut f: impl FnMut(&mut f64, &mut f64, &mut f64, f64)) {
    ndarray::Zip::from(&mut param.value)
        .and(&mut param.m)
        .and(&mut param.v)
        .and(grad)
        .for_each(|value, m, v, &g| f(value, m, v, g));
}

/// One bias-corrected Adam step over every parameter; increments the step
/// counter exactly once.
pub fn adam_step(state: &mut ModelState, grads: &Gradients, hp: &AdamParams) -> Result<()> {
    state.step += 1;
    let t = state.step;
    adam_update(&mut state.user_table, &grads.user_table, hp, t, "user_table")?;
    adam_update(&mut state.item_table, &grads.item_table, hp, t, "item_table")?;
    if let Some(f) = state.features.as_mut() {
        let fg = grads
            .features
            .as_ref()
            .expect("feature gradients missing for a feature-mode state");
        for (i, (p, g)) in f.tables.iter_mut().zip(&fg.tables).enumerate() {
            adam_update(p, g, hp, t, &format!("feature_table_{i}"))?;
        }
        adam_update(&mut f.projection, &fg.projection, hp, t, "projection")?;
        adam_update(&mut f.bias, &fg.bias, hp, t, "bias")?;
    }
    state.check_finite()
}
