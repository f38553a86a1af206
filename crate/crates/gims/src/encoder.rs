//! Vertex feature encoder.
//!
//! Three stages share one weight container: an L-layer GraphSAGE with mean
//! aggregation (no bias, ReLU), a positional MLP (2→32→64→D) added onto the
//! features, and a stack of alternating self-/cross-attention layers with
//! residual message MLPs. Forward passes can record caches so the trainer's
//! hand-written backward pass can run without recomputation.
//!
//! All math is 64-bit. Weight matrices are stored (out × in) and applied to
//! row-per-vertex activations as `x · Wᵀ`.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::core::Graph;
use crate::{Error, Result};

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_GNN_LAYERS: usize = 3;
/// Default number of (self, cross) attention layer pairs.
pub const DEFAULT_ATTN_PAIRS: usize = 4;
const POS_H1: usize = 32;
const POS_H2: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnKind {
    /// Keys/values from the same graph.
    SelfAttn,
    /// Keys/values from the other graph.
    CrossAttn,
}

impl AttnKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SelfAttn => "self",
            Self::CrossAttn => "cross",
        }
    }
}

/// One attention layer: multi-head projections plus the residual message
/// MLP (2D→2D→D). The same layer weights serve both graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnLayer {
    pub kind: AttnKind,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub m1: Array2<f64>,
    pub c1: Array1<f64>,
    pub m2: Array2<f64>,
    pub c2: Array1<f64>,
}

/// Positional MLP: 2 → 32 → 64 → D, ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct PosMlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

/// Every learnable tensor of the model, including the matcher's dustbin
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub dim: usize,
    pub heads: usize,
    pub gnn: Vec<Array2<f64>>,
    pub pos: PosMlp,
    pub attn: Vec<AttnLayer>,
    pub dustbin: f64,
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

fn zero_pos(dim: usize) -> PosMlp {
    PosMlp {
        w1: Array2::zeros((POS_H1, 2)),
        b1: Array1::zeros(POS_H1),
        w2: Array2::zeros((POS_H2, POS_H1)),
        b2: Array1::zeros(POS_H2),
        w3: Array2::zeros((dim, POS_H2)),
        b3: Array1::zeros(dim),
    }
}

fn zero_attn(kind: AttnKind, dim: usize) -> AttnLayer {
    AttnLayer {
        kind,
        wq: Array2::zeros((dim, dim)),
        wk: Array2::zeros((dim, dim)),
        wv: Array2::zeros((dim, dim)),
        wo: Array2::zeros((dim, dim)),
        m1: Array2::zeros((2 * dim, 2 * dim)),
        c1: Array1::zeros(2 * dim),
        m2: Array2::zeros((dim, 2 * dim)),
        c2: Array1::zeros(dim),
    }
}

/// Standard alternation: `pairs` × (self, cross).
pub fn alternating_kinds(pairs: usize) -> Vec<AttnKind> {
    (0..pairs)
        .flat_map(|_| [AttnKind::SelfAttn, AttnKind::CrossAttn])
        .collect()
}

impl ModelWeights {
    /// Xavier-uniform initialization (a = √(6/(fan_in+fan_out))), biases
    /// zero, dustbin 1.0. Deterministic under `seed`.
    pub fn xavier_init(
        dim: usize,
        gnn_layers: usize,
        heads: usize,
        attn_kinds: &[AttnKind],
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || heads == 0 || dim % heads != 0 {
            return Err(Error::InvalidInput(format!(
                "dim {dim} must be a positive multiple of heads {heads}"
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gnn = (0..gnn_layers).map(|_| xavier(&mut rng, dim, dim)).collect();
        let pos = PosMlp {
            w1: xavier(&mut rng, POS_H1, 2),
            b1: Array1::zeros(POS_H1),
            w2: xavier(&mut rng, POS_H2, POS_H1),
            b2: Array1::zeros(POS_H2),
            w3: xavier(&mut rng, dim, POS_H2),
            b3: Array1::zeros(dim),
        };
        let attn = attn_kinds
            .iter()
            .map(|&kind| AttnLayer {
                kind,
                wq: xavier(&mut rng, dim, dim),
                wk: xavier(&mut rng, dim, dim),
                wv: xavier(&mut rng, dim, dim),
                wo: xavier(&mut rng, dim, dim),
                m1: xavier(&mut rng, 2 * dim, 2 * dim),
                c1: Array1::zeros(2 * dim),
                m2: xavier(&mut rng, dim, 2 * dim),
                c2: Array1::zeros(dim),
            })
            .collect();
        Ok(Self {
            dim,
            heads,
            gnn,
            pos,
            attn,
            dustbin: 1.0,
        })
    }

    /// Defaults: D=128, L=3, 4 heads, 4 (self, cross) pairs.
    pub fn default_init(seed: u64) -> Self {
        Self::xavier_init(
            DEFAULT_DIM,
            DEFAULT_GNN_LAYERS,
            DEFAULT_HEADS,
            &alternating_kinds(DEFAULT_ATTN_PAIRS),
            seed,
        )
        .expect("default dims are valid")
    }

    /// Pass-through configuration: no GNN layers, zero positional MLP, zero
    /// attention (the residual updates vanish), dustbin 0. `encode_pair`
    /// then returns the raw descriptors unchanged.
    pub fn identity(dim: usize, heads: usize) -> Self {
        let attn = alternating_kinds(DEFAULT_ATTN_PAIRS)
            .into_iter()
            .map(|k| zero_attn(k, dim))
            .collect();
        Self {
            dim,
            heads,
            gnn: Vec::new(),
            pos: zero_pos(dim),
            attn,
            dustbin: 0.0,
        }
    }

    /// Same structure, every parameter zero; the accumulator for gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            heads: self.heads,
            gnn: self.gnn.iter().map(|w| Array2::zeros(w.dim())).collect(),
            pos: zero_pos(self.dim),
            attn: self
                .attn
                .iter()
                .map(|l| zero_attn(l.kind, self.dim))
                .collect(),
            dustbin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::InvalidInput(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        let d = self.dim;
        for (l, w) in self.gnn.iter().enumerate() {
            if w.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "gnn layer {l} has shape {:?}, want ({d}, {d})",
                    w.dim()
                )));
            }
        }
        let p = &self.pos;
        let pos_ok = p.w1.dim() == (POS_H1, 2)
            && p.b1.len() == POS_H1
            && p.w2.dim() == (POS_H2, POS_H1)
            && p.b2.len() == POS_H2
            && p.w3.dim() == (d, POS_H2)
            && p.b3.len() == d;
        if !pos_ok {
            return Err(Error::DimensionMismatch(
                "positional MLP shapes do not match 2→32→64→D".into(),
            ));
        }
        for (i, a) in self.attn.iter().enumerate() {
            let ok = a.wq.dim() == (d, d)
                && a.wk.dim() == (d, d)
                && a.wv.dim() == (d, d)
                && a.wo.dim() == (d, d)
                && a.m1.dim() == (2 * d, 2 * d)
                && a.c1.len() == 2 * d
                && a.m2.dim() == (d, 2 * d)
                && a.c2.len() == d;
            if !ok {
                return Err(Error::DimensionMismatch(format!(
                    "attention layer {i} has inconsistent shapes"
                )));
            }
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.to_flat().len()
    }

    /// Canonical flattening: GNN layers, positional MLP (w1,b1,w2,b2,w3,b3),
    /// attention layers (wq,wk,wv,wo,m1,c1,m2,c2), dustbin.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.gnn {
            out.extend(w.iter());
        }
        let p = &self.pos;
        out.extend(p.w1.iter());
        out.extend(p.b1.iter());
        out.extend(p.w2.iter());
        out.extend(p.b2.iter());
        out.extend(p.w3.iter());
        out.extend(p.b3.iter());
        for a in &self.attn {
            out.extend(a.wq.iter());
            out.extend(a.wk.iter());
            out.extend(a.wv.iter());
            out.extend(a.wo.iter());
            out.extend(a.m1.iter());
            out.extend(a.c1.iter());
            out.extend(a.m2.iter());
            out.extend(a.c2.iter());
        }
        out.push(self.dustbin);
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat); shapes stay as they are.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector holds {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        let fill2 = |m: &mut Array2<f64>, it: &mut std::slice::Iter<f64>| {
            for v in m.iter_mut() {
                *v = *it.next().unwrap();
            }
        };
        let fill1 = |m: &mut Array1<f64>, it: &mut std::slice::Iter<f64>| {
            for v in m.iter_mut() {
                *v = *it.next().unwrap();
            }
        };
        for w in &mut self.gnn {
            fill2(w, &mut it);
        }
        fill2(&mut self.pos.w1, &mut it);
        fill1(&mut self.pos.b1, &mut it);
        fill2(&mut self.pos.w2, &mut it);
        fill1(&mut self.pos.b2, &mut it);
        fill2(&mut self.pos.w3, &mut it);
        fill1(&mut self.pos.b3, &mut it);
        for a in &mut self.attn {
            fill2(&mut a.wq, &mut it);
            fill2(&mut a.wk, &mut it);
            fill2(&mut a.wv, &mut it);
            fill2(&mut a.wo, &mut it);
            fill2(&mut a.m1, &mut it);
            fill1(&mut a.c1, &mut it);
            fill2(&mut a.m2, &mut it);
            fill1(&mut a.c2, &mut it);
        }
        self.dustbin = *it.next().unwrap();
        Ok(())
    }

    /// Named tensors for serialization. `meta.heads` carries the head count,
    /// which is not recoverable from any shape.
    pub fn export_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let push2 = |out: &mut Vec<(String, Vec<usize>, Vec<f64>)>, name: String, m: &Array2<f64>| {
            out.push((name, vec![m.nrows(), m.ncols()], m.iter().copied().collect()));
        };
        let push1 = |out: &mut Vec<(String, Vec<usize>, Vec<f64>)>, name: String, v: &Array1<f64>| {
            out.push((name, vec![v.len()], v.to_vec()));
        };
        for (l, w) in self.gnn.iter().enumerate() {
            push2(&mut out, format!("gnn.{l}.w"), w);
        }
        push2(&mut out, "pos.w1".into(), &self.pos.w1);
        push1(&mut out, "pos.b1".into(), &self.pos.b1);
        push2(&mut out, "pos.w2".into(), &self.pos.w2);
        push1(&mut out, "pos.b2".into(), &self.pos.b2);
        push2(&mut out, "pos.w3".into(), &self.pos.w3);
        push1(&mut out, "pos.b3".into(), &self.pos.b3);
        for (i, a) in self.attn.iter().enumerate() {
            let k = a.kind.name();
            push2(&mut out, format!("attn.{i}.{k}.wq"), &a.wq);
            push2(&mut out, format!("attn.{i}.{k}.wk"), &a.wk);
            push2(&mut out, format!("attn.{i}.{k}.wv"), &a.wv);
            push2(&mut out, format!("attn.{i}.{k}.wo"), &a.wo);
            push2(&mut out, format!("attn.{i}.{k}.m1"), &a.m1);
            push1(&mut out, format!("attn.{i}.{k}.c1"), &a.c1);
            push2(&mut out, format!("attn.{i}.{k}.m2"), &a.m2);
            push1(&mut out, format!("attn.{i}.{k}.c2"), &a.c2);
        }
        out.push(("dustbin".into(), vec![1], vec![self.dustbin]));
        out.push(("meta.heads".into(), vec![1], vec![self.heads as f64]));
        out
    }

    /// Rebuilds a model from named tensors (the inverse of
    /// [`export_tensors`](Self::export_tensors)).
    pub fn from_tensors(entries: &[(String, Vec<usize>, Vec<f64>)]) -> Result<Self> {
        use std::collections::HashMap;
        let map: HashMap<&str, (&[usize], &[f64])> = entries
            .iter()
            .map(|(n, s, d)| (n.as_str(), (s.as_slice(), d.as_slice())))
            .collect();
        let get = |name: &str| -> Result<(&[usize], &[f64])> {
            map.get(name)
                .copied()
                .ok_or_else(|| Error::Format(format!("weights file is missing tensor '{name}'")))
        };
        let mat = |name: &str| -> Result<Array2<f64>> {
            let (shape, data) = get(name)?;
            if shape.len() != 2 {
                return Err(Error::Format(format!("tensor '{name}' is not a matrix")));
            }
            Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
                .map_err(|e| Error::Format(format!("tensor '{name}': {e}")))
        };
        let vec1 = |name: &str| -> Result<Array1<f64>> {
            let (shape, data) = get(name)?;
            if shape.len() != 1 {
                return Err(Error::Format(format!("tensor '{name}' is not a vector")));
            }
            Ok(Array1::from_vec(data.to_vec()))
        };
        let scalar = |name: &str| -> Result<f64> {
            let (_, data) = get(name)?;
            data.first()
                .copied()
                .ok_or_else(|| Error::Format(format!("tensor '{name}' is empty")))
        };

        let pos = PosMlp {
            w1: mat("pos.w1")?,
            b1: vec1("pos.b1")?,
            w2: mat("pos.w2")?,
            b2: vec1("pos.b2")?,
            w3: mat("pos.w3")?,
            b3: vec1("pos.b3")?,
        };
        let dim = pos.w3.nrows();
        let mut gnn = Vec::new();
        while map.contains_key(format!("gnn.{}.w", gnn.len()).as_str()) {
            gnn.push(mat(&format!("gnn.{}.w", gnn.len()))?);
        }
        let mut attn = Vec::new();
        loop {
            let i = attn.len();
            let kind = if map.contains_key(format!("attn.{i}.self.wq").as_str()) {
                AttnKind::SelfAttn
            } else if map.contains_key(format!("attn.{i}.cross.wq").as_str()) {
                AttnKind::CrossAttn
            } else {
                break;
            };
            let k = kind.name();
            attn.push(AttnLayer {
                kind,
                wq: mat(&format!("attn.{i}.{k}.wq"))?,
                wk: mat(&format!("attn.{i}.{k}.wk"))?,
                wv: mat(&format!("attn.{i}.{k}.wv"))?,
                wo: mat(&format!("attn.{i}.{k}.wo"))?,
                m1: mat(&format!("attn.{i}.{k}.m1"))?,
                c1: vec1(&format!("attn.{i}.{k}.c1"))?,
                m2: mat(&format!("attn.{i}.{k}.m2"))?,
                c2: vec1(&format!("attn.{i}.{k}.c2"))?,
            });
        }
        let model = Self {
            dim,
            heads: scalar("meta.heads")? as usize,
            gnn,
            pos,
            attn,
            dustbin: scalar("dustbin")?,
        };
        model.validate()?;
        Ok(model)
    }
}

/// One side of an image pair as the encoder sees it.
#[derive(Debug, Clone)]
pub struct EncodeInput<'a> {
    /// Row-per-vertex descriptor matrix, n×D.
    pub features: Array2<f64>,
    pub graph: &'a Graph,
    pub positions: &'a [(f64, f64)],
    /// Image (width, height) in pixels, used to normalize positions.
    pub dims: (f64, f64),
}

/// Row-normalized (I + A) mean-aggregation operator of Eq.-style GraphSAGE.
fn mean_matrix(g: &Graph) -> Array2<f64> {
    let n = g.vertex_count();
    let mut m = Array2::zeros((n, n));
    let adj = g.adjacency();
    for i in 0..n {
        let w = 1.0 / (1 + adj[i].len()) as f64;
        m[[i, i]] = w;
        for &j in &adj[i] {
            m[[i, j]] = w;
        }
    }
    m
}

struct GnnLayerCache {
    z: Array2<f64>,
    pre: Array2<f64>,
}

/// h′ = ReLU((mean over {i} ∪ N(i)) · Wᵀ).
pub fn graphsage_layer(h: &Array2<f64>, g: &Graph, w: &Array2<f64>) -> Result<Array2<f64>> {
    if h.nrows() != g.vertex_count() || h.ncols() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "graphsage: h is {:?}, graph has {} vertices, W is {:?}",
            h.dim(),
            g.vertex_count(),
            w.dim()
        )));
    }
    let (out, _) = graphsage_layer_cached(h, &mean_matrix(g), w);
    Ok(out)
}

fn graphsage_layer_cached(
    h: &Array2<f64>,
    m: &Array2<f64>,
    w: &Array2<f64>,
) -> (Array2<f64>, GnnLayerCache) {
    let z = m.dot(h);
    let pre = z.dot(&w.t());
    let out = pre.mapv(|v| v.max(0.0));
    (out, GnnLayerCache { z, pre })
}

/// L stacked GraphSAGE layers; an empty weight list is the identity.
pub fn encode_gnn(f: &Array2<f64>, g: &Graph, layers: &[Array2<f64>]) -> Result<Array2<f64>> {
    let mut h = f.clone();
    for w in layers {
        h = graphsage_layer(&h, g, w)?;
    }
    Ok(h)
}

struct PosCache {
    p: Array2<f64>,
    pre1: Array2<f64>,
    a1: Array2<f64>,
    pre2: Array2<f64>,
    a2: Array2<f64>,
}

/// f̃ = f + MLP(p) with positions normalized to [−1, 1]² by the image dims.
pub fn encode_position(
    f: &Array2<f64>,
    positions: &[(f64, f64)],
    dims: (f64, f64),
    mlp: &PosMlp,
) -> Result<Array2<f64>> {
    if f.nrows() != positions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} positions",
            f.nrows(),
            positions.len()
        )));
    }
    let (out, _) = encode_position_cached(f, positions, dims, mlp);
    Ok(out)
}

fn normalize_positions(positions: &[(f64, f64)], dims: (f64, f64)) -> Array2<f64> {
    let mut p = Array2::zeros((positions.len(), 2));
    for (i, &(x, y)) in positions.iter().enumerate() {
        p[[i, 0]] = 2.0 * x / dims.0 - 1.0;
        p[[i, 1]] = 2.0 * y / dims.1 - 1.0;
    }
    p
}

fn encode_position_cached(
    f: &Array2<f64>,
    positions: &[(f64, f64)],
    dims: (f64, f64),
    mlp: &PosMlp,
) -> (Array2<f64>, PosCache) {
    let p = normalize_positions(positions, dims);
    let pre1 = p.dot(&mlp.w1.t()) + &mlp.b1;
    let a1 = pre1.mapv(|v| v.max(0.0));
    let pre2 = a1.dot(&mlp.w2.t()) + &mlp.b2;
    let a2 = pre2.mapv(|v| v.max(0.0));
    let z3 = a2.dot(&mlp.w3.t()) + &mlp.b3;
    let out = f + &z3;
    (
        out,
        PosCache {
            p,
            pre1,
            a1,
            pre2,
            a2,
        },
    )
}

struct AttnDirCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    mcat: Array2<f64>,
    cat: Array2<f64>,
    pre1: Array2<f64>,
    g1: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Multi-head message for queries `x` against keys/values `y`, after the
/// output projection (pre-residual). With no keys the message is zero.
pub fn attention_message(
    x: &Array2<f64>,
    y: &Array2<f64>,
    layer: &AttnLayer,
    heads: usize,
) -> Array2<f64> {
    let d = x.ncols();
    let (_, cache) = attention_dir_forward(x, y, layer, heads);
    // cat = [x ‖ m]; the message is its right half.
    cache.cat.slice(s![.., d..2 * d]).to_owned()
}

fn attention_dir_forward(
    x: &Array2<f64>,
    y: &Array2<f64>,
    layer: &AttnLayer,
    heads: usize,
) -> (Array2<f64>, AttnDirCache) {
    let d = x.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = x.dot(&layer.wq.t());
    let k = y.dot(&layer.wk.t());
    let v = y.dot(&layer.wv.t());
    let mut mcat = Array2::zeros((x.nrows(), d));
    let mut attn = Vec::with_capacity(heads);
    if y.nrows() > 0 {
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let logits = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let a = softmax_rows(&logits);
            let mh = a.dot(&v.slice(cols));
            mcat.slice_mut(cols).assign(&mh);
            attn.push(a);
        }
    }
    let mo = mcat.dot(&layer.wo.t());
    let cat = concatenate(Axis(1), &[x.view(), mo.view()]).expect("row counts match");
    let pre1 = cat.dot(&layer.m1.t()) + &layer.c1;
    let g1 = pre1.mapv(|v| v.max(0.0));
    let delta = g1.dot(&layer.m2.t()) + &layer.c2;
    (
        x + &delta,
        AttnDirCache {
            q,
            k,
            v,
            attn,
            mcat,
            cat,
            pre1,
            g1,
        },
    )
}

struct AttnLayerCache {
    xa_in: Array2<f64>,
    xb_in: Array2<f64>,
    a_dir: AttnDirCache,
    b_dir: AttnDirCache,
}

/// Runs the full attention stack; both graphs update simultaneously from
/// the previous layer's values.
pub fn attention_stack(
    xa: &Array2<f64>,
    xb: &Array2<f64>,
    layers: &[AttnLayer],
    heads: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = xa.ncols();
    if xb.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "attention inputs disagree: {d} vs {}",
            xb.ncols()
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::InvalidInput(format!(
            "dim {d} is not divisible by {heads} heads"
        )));
    }
    let (xa, xb, _) = attention_stack_cached(xa.clone(), xb.clone(), layers, heads);
    Ok((xa, xb))
}

fn attention_stack_cached(
    mut xa: Array2<f64>,
    mut xb: Array2<f64>,
    layers: &[AttnLayer],
    heads: usize,
) -> (Array2<f64>, Array2<f64>, Vec<AttnLayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (ya, ca, yb, cb) = match layer.kind {
            AttnKind::SelfAttn => {
                let (ya, ca) = attention_dir_forward(&xa, &xa, layer, heads);
                let (yb, cb) = attention_dir_forward(&xb, &xb, layer, heads);
                (ya, ca, yb, cb)
            }
            AttnKind::CrossAttn => {
                let (ya, ca) = attention_dir_forward(&xa, &xb, layer, heads);
                let (yb, cb) = attention_dir_forward(&xb, &xa, layer, heads);
                (ya, ca, yb, cb)
            }
        };
        caches.push(AttnLayerCache {
            xa_in: xa,
            xb_in: xb,
            a_dir: ca,
            b_dir: cb,
        });
        xa = ya;
        xb = yb;
    }
    (xa, xb, caches)
}

struct SideCache {
    m: Array2<f64>,
    gnn: Vec<GnnLayerCache>,
    pos: PosCache,
}

/// Everything the backward pass needs from one forward run.
pub struct PairCache {
    a: SideCache,
    b: SideCache,
    attn: Vec<AttnLayerCache>,
}

/// GNN → positional MLP → joint attention, for both graphs.
pub fn encode_pair(
    a: &EncodeInput,
    b: &EncodeInput,
    w: &ModelWeights,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (xa, xb, _) = encode_pair_cached(a, b, w)?;
    Ok((xa, xb))
}

/// As [`encode_pair`] but returns the cache for a later backward pass.
pub fn encode_pair_cached(
    a: &EncodeInput,
    b: &EncodeInput,
    w: &ModelWeights,
) -> Result<(Array2<f64>, Array2<f64>, PairCache)> {
    let side = |inp: &EncodeInput| -> Result<(Array2<f64>, SideCache)> {
        if inp.features.nrows() != inp.graph.vertex_count()
            || inp.features.nrows() != inp.positions.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "side with {} feature rows, {} vertices, {} positions",
                inp.features.nrows(),
                inp.graph.vertex_count(),
                inp.positions.len()
            )));
        }
        if inp.features.ncols() != w.dim {
            return Err(Error::DimensionMismatch(format!(
                "features are {}-D but the model is {}-D",
                inp.features.ncols(),
                w.dim
            )));
        }
        let m = mean_matrix(inp.graph);
        let mut h = inp.features.clone();
        let mut gnn_caches = Vec::with_capacity(w.gnn.len());
        for lw in &w.gnn {
            let (next, cache) = graphsage_layer_cached(&h, &m, lw);
            gnn_caches.push(cache);
            h = next;
        }
        let (encoded, pos_cache) = encode_position_cached(&h, inp.positions, inp.dims, &w.pos);
        Ok((
            encoded,
            SideCache {
                m,
                gnn: gnn_caches,
                pos: pos_cache,
            },
        ))
    };
    let (ea, ca) = side(a)?;
    let (eb, cb) = side(b)?;
    let (xa, xb, attn_caches) = attention_stack_cached(ea, eb, &w.attn, w.heads);
    Ok((
        xa,
        xb,
        PairCache {
            a: ca,
            b: cb,
            attn: attn_caches,
        },
    ))
}

fn relu_mask(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Backward through one attention direction. Returns the gradient
/// contributions to the query-side input and the key/value-side input;
/// the caller adds them into the right accumulators (they coincide for
/// self-attention).
fn attention_dir_backward(
    dout: &Array2<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
    cache: &AttnDirCache,
    layer: &AttnLayer,
    heads: usize,
    g: &mut AttnLayer,
) -> (Array2<f64>, Array2<f64>) {
    let d = x.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dx = dout.clone();
    let mut dy = Array2::zeros(y.dim());
    let ddelta = dout;
    g.m2 += &ddelta.t().dot(&cache.g1);
    g.c2 += &ddelta.sum_axis(Axis(0));
    let dg1 = ddelta.dot(&layer.m2);
    let dpre1 = dg1 * relu_mask(&cache.pre1);
    g.m1 += &dpre1.t().dot(&cache.cat);
    g.c1 += &dpre1.sum_axis(Axis(0));
    let dcat = dpre1.dot(&layer.m1);
    dx += &dcat.slice(s![.., 0..d]);
    let dmo = dcat.slice(s![.., d..2 * d]).to_owned();

    g.wo += &dmo.t().dot(&cache.mcat);
    let dmcat = dmo.dot(&layer.wo);

    let mut dq = Array2::zeros(cache.q.dim());
    let mut dk = Array2::zeros(cache.k.dim());
    let mut dv = Array2::zeros(cache.v.dim());
    if y.nrows() > 0 {
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = &cache.attn[h];
            let dmh = dmcat.slice(cols);
            let da = dmh.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dmh));
            // Softmax backward per row.
            let rowdot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = a * &(&da - &rowdot) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
    }
    g.wq += &dq.t().dot(x);
    dx += &dq.dot(&layer.wq);
    g.wk += &dk.t().dot(y);
    dy += &dk.dot(&layer.wk);
    g.wv += &dv.t().dot(y);
    dy += &dv.dot(&layer.wv);
    (dx, dy)
}

/// Backpropagates `d(loss)/d(xa, xb)` through the whole encoder,
/// accumulating weight gradients into `grads` (a [`ModelWeights`] of the
/// same structure, typically from [`ModelWeights::zeros_like`]).
pub fn encode_pair_backward(
    cache: &PairCache,
    w: &ModelWeights,
    mut dxa: Array2<f64>,
    mut dxb: Array2<f64>,
    grads: &mut ModelWeights,
) {
    for (li, layer_cache) in cache.attn.iter().enumerate().rev() {
        let layer = &w.attn[li];
        let glayer = &mut grads.attn[li];
        let (ndxa, ndxb) = match layer.kind {
            AttnKind::SelfAttn => {
                let (dxa_q, dxa_kv) = attention_dir_backward(
                    &dxa,
                    &layer_cache.xa_in,
                    &layer_cache.xa_in,
                    &layer_cache.a_dir,
                    layer,
                    w.heads,
                    glayer,
                );
                let (dxb_q, dxb_kv) = attention_dir_backward(
                    &dxb,
                    &layer_cache.xb_in,
                    &layer_cache.xb_in,
                    &layer_cache.b_dir,
                    layer,
                    w.heads,
                    glayer,
                );
                (dxa_q + dxa_kv, dxb_q + dxb_kv)
            }
            AttnKind::CrossAttn => {
                let (dxa_q, dxb_kv) = attention_dir_backward(
                    &dxa,
                    &layer_cache.xa_in,
                    &layer_cache.xb_in,
                    &layer_cache.a_dir,
                    layer,
                    w.heads,
                    glayer,
                );
                let (dxb_q, dxa_kv) = attention_dir_backward(
                    &dxb,
                    &layer_cache.xb_in,
                    &layer_cache.xa_in,
                    &layer_cache.b_dir,
                    layer,
                    w.heads,
                    glayer,
                );
                (dxa_q + dxa_kv, dxb_q + dxb_kv)
            }
        };
        dxa = ndxa;
        dxb = ndxb;
    }

    let side_backward = |d_enc: Array2<f64>, sc: &SideCache, grads: &mut ModelWeights| {
        // Positional MLP: out = h + MLP(p); dh = d_enc, plus weight grads.
        let pc = &sc.pos;
        let dz3 = &d_enc;
        grads.pos.w3 += &dz3.t().dot(&pc.a2);
        grads.pos.b3 += &dz3.sum_axis(Axis(0));
        let da2 = dz3.dot(&w.pos.w3);
        let dpre2 = da2 * relu_mask(&pc.pre2);
        grads.pos.w2 += &dpre2.t().dot(&pc.a1);
        grads.pos.b2 += &dpre2.sum_axis(Axis(0));
        let da1 = dpre2.dot(&w.pos.w2);
        let dpre1 = da1 * relu_mask(&pc.pre1);
        grads.pos.w1 += &dpre1.t().dot(&pc.p);
        grads.pos.b1 += &dpre1.sum_axis(Axis(0));

        // GNN layers in reverse.
        let mut dh = d_enc;
        for (li, lc) in sc.gnn.iter().enumerate().rev() {
            let dpre = &dh * &relu_mask(&lc.pre);
            grads.gnn[li] += &dpre.t().dot(&lc.z);
            let dz = dpre.dot(&w.gnn[li]);
            dh = sc.m.t().dot(&dz);
        }
        let _ = dh; // gradient w.r.t. raw descriptors is not needed
    };
    side_backward(dxa, &cache.a, grads);
    side_backward(dxb, &cache.b, grads);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_range(0.0..1.0) < p {
                    edges.push((i, j));
                }
            }
        }
        Graph::canonical(n, edges).unwrap()
    }

    fn eye(d: usize) -> Array2<f64> {
        Array2::from_shape_fn((d, d), |(r, c)| if r == c { 1.0 } else { 0.0 })
    }

    /// Per-vertex loop reimplementation of one GraphSAGE layer.
    fn sage_reference(h: &Array2<f64>, g: &Graph, w: &Array2<f64>) -> Array2<f64> {
        let n = g.vertex_count();
        let adj = g.adjacency();
        let mut out = Array2::zeros((n, w.nrows()));
        for i in 0..n {
            let mut members = vec![i];
            members.extend(adj[i].iter().copied());
            let mut mean = vec![0.0; h.ncols()];
            for &j in &members {
                for c in 0..h.ncols() {
                    mean[c] += h[[j, c]];
                }
            }
            for m in &mut mean {
                *m /= members.len() as f64;
            }
            for r in 0..w.nrows() {
                let mut s = 0.0;
                for c in 0..h.ncols() {
                    s += w[[r, c]] * mean[c];
                }
                out[[i, r]] = s.max(0.0);
            }
        }
        out
    }

    /// Dense per-query loop reimplementation of one attention direction.
    fn attn_dir_reference(
        x: &Array2<f64>,
        y: &Array2<f64>,
        l: &AttnLayer,
        heads: usize,
    ) -> Array2<f64> {
        let (n, d) = x.dim();
        let m = y.nrows();
        let dh = d / heads;
        let matvec = |w: &Array2<f64>, row: ndarray::ArrayView1<f64>| -> Vec<f64> {
            (0..w.nrows())
                .map(|r| (0..w.ncols()).map(|c| w[[r, c]] * row[c]).sum())
                .collect()
        };
        let q: Vec<Vec<f64>> = (0..n).map(|i| matvec(&l.wq, x.row(i))).collect();
        let k: Vec<Vec<f64>> = (0..m).map(|j| matvec(&l.wk, y.row(j))).collect();
        let v: Vec<Vec<f64>> = (0..m).map(|j| matvec(&l.wv, y.row(j))).collect();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let mut mcat = vec![0.0; d];
            for h in 0..heads {
                let lo = h * dh;
                let logits: Vec<f64> = (0..m)
                    .map(|j| {
                        (0..dh).map(|c| q[i][lo + c] * k[j][lo + c]).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for j in 0..m {
                    let w = exps[j] / sum;
                    for c in 0..dh {
                        mcat[lo + c] += w * v[j][lo + c];
                    }
                }
            }
            let mut cat = x.row(i).to_vec();
            let mo: Vec<f64> = (0..d)
                .map(|r| (0..d).map(|c| l.wo[[r, c]] * mcat[c]).sum())
                .collect();
            cat.extend(mo);
            let g1: Vec<f64> = (0..2 * d)
                .map(|r| {
                    let s: f64 = (0..2 * d).map(|c| l.m1[[r, c]] * cat[c]).sum::<f64>() + l.c1[r];
                    s.max(0.0)
                })
                .collect();
            for r in 0..d {
                let delta: f64 =
                    (0..2 * d).map(|c| l.m2[[r, c]] * g1[c]).sum::<f64>() + l.c2[r];
                out[[i, r]] = x[[i, r]] + delta;
            }
        }
        out
    }

    #[test]
    fn graphsage_identity_weight_means_neighbors() {
        let g = Graph::canonical(2, [(0, 1)]).unwrap();
        let h = ndarray::arr2(&[[2.0, 0.0], [0.0, 2.0]]);
        let out = graphsage_layer(&h, &g, &eye(2)).unwrap();
        assert_eq!(out, ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]));
    }

    #[test]
    fn graphsage_isolated_vertex_sees_only_itself() {
        let g = Graph::canonical(2, []).unwrap();
        let h = ndarray::arr2(&[[0.5, 0.25], [0.125, 0.75]]);
        let out = graphsage_layer(&h, &g, &eye(2)).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn graphsage_matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = rand_graph(&mut rng, 10, 0.3);
            let h = rand_mat(&mut rng, 10, 6);
            let w = rand_mat(&mut rng, 6, 6);
            let fast = graphsage_layer(&h, &g, &w).unwrap();
            let slow = sage_reference(&h, &g, &w);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn encode_gnn_zero_layers_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = rand_graph(&mut rng, 5, 0.5);
        let h = rand_mat(&mut rng, 5, 4);
        assert_eq!(encode_gnn(&h, &g, &[]).unwrap(), h);
    }

    #[test]
    fn encode_gnn_ones_are_a_fixed_point_on_a_path() {
        let g = Graph::canonical(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let h = Array2::ones((4, 3));
        let layers = vec![eye(3), eye(3), eye(3)];
        let out = encode_gnn(&h, &g, &layers).unwrap();
        for v in out.iter() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_gnn_dimension_mismatch_is_an_error() {
        let g = Graph::canonical(3, [(0, 1)]).unwrap();
        let h = Array2::<f64>::zeros((2, 4));
        assert!(encode_gnn(&h, &g, &[eye(4)]).is_err());
    }

    #[test]
    fn position_mlp_all_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = rand_mat(&mut rng, 6, 8);
        let pos: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 10.0, 5.0)).collect();
        let out = encode_position(&f, &pos, (100.0, 100.0), &zero_pos(8)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn position_mlp_output_bias_shifts_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = rand_mat(&mut rng, 4, 8);
        let mut mlp = zero_pos(8);
        mlp.b3 = Array1::from_vec((0..8).map(|i| i as f64 * 0.5).collect());
        let pos: Vec<(f64, f64)> = (0..4).map(|i| (i as f64, i as f64)).collect();
        let out = encode_position(&f, &pos, (10.0, 10.0), &mlp).unwrap();
        let want = &f + &mlp.b3;
        assert_eq!(out, want);
    }

    #[test]
    fn position_mlp_matches_matrix_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 8;
        let f = rand_mat(&mut rng, 5, d);
        let mlp = PosMlp {
            w1: rand_mat(&mut rng, POS_H1, 2),
            b1: Array1::from_vec((0..POS_H1).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            w2: rand_mat(&mut rng, POS_H2, POS_H1),
            b2: Array1::from_vec((0..POS_H2).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            w3: rand_mat(&mut rng, d, POS_H2),
            b3: Array1::from_vec((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        };
        let pos: Vec<(f64, f64)> = (0..5)
            .map(|_| (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)))
            .collect();
        let dims = (640.0, 480.0);
        let out = encode_position(&f, &pos, dims, &mlp).unwrap();
        for i in 0..5 {
            let px = 2.0 * pos[i].0 / dims.0 - 1.0;
            let py = 2.0 * pos[i].1 / dims.1 - 1.0;
            let a1: Vec<f64> = (0..POS_H1)
                .map(|r| (mlp.w1[[r, 0]] * px + mlp.w1[[r, 1]] * py + mlp.b1[r]).max(0.0))
                .collect();
            let a2: Vec<f64> = (0..POS_H2)
                .map(|r| {
                    ((0..POS_H1).map(|c| mlp.w2[[r, c]] * a1[c]).sum::<f64>() + mlp.b2[r]).max(0.0)
                })
                .collect();
            for r in 0..d {
                let z3: f64 =
                    (0..POS_H2).map(|c| mlp.w3[[r, c]] * a2[c]).sum::<f64>() + mlp.b3[r];
                assert!((out[[i, r]] - (f[[i, r]] + z3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_over_identical_keys_averages_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 6;
        let mut layer = zero_attn(AttnKind::CrossAttn, d);
        layer.wq = rand_mat(&mut rng, d, d);
        layer.wk = rand_mat(&mut rng, d, d);
        layer.wv = eye(d);
        layer.wo = eye(d);
        let x = rand_mat(&mut rng, 2, d);
        let v_row: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = Array2::from_shape_fn((3, d), |(_, c)| v_row[c]);
        let msg = attention_message(&x, &y, &layer, 2);
        for i in 0..2 {
            for c in 0..d {
                assert!((msg[[i, c]] - v_row[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_single_key_passes_value_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 6;
        let mut layer = zero_attn(AttnKind::CrossAttn, d);
        layer.wq = rand_mat(&mut rng, d, d);
        layer.wk = rand_mat(&mut rng, d, d);
        layer.wv = eye(d);
        layer.wo = eye(d);
        let x = rand_mat(&mut rng, 3, d);
        let y = rand_mat(&mut rng, 1, d);
        let msg = attention_message(&x, &y, &layer, 3);
        for i in 0..3 {
            for c in 0..d {
                assert!((msg[[i, c]] - y[[0, c]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn attention_stack_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = 8;
        let rand_layer = |rng: &mut ChaCha8Rng, kind: AttnKind| AttnLayer {
            kind,
            wq: rand_mat(rng, d, d),
            wk: rand_mat(rng, d, d),
            wv: rand_mat(rng, d, d),
            wo: rand_mat(rng, d, d),
            m1: rand_mat(rng, 2 * d, 2 * d),
            c1: Array1::from_vec((0..2 * d).map(|_| rng.gen_range(-0.5..0.5)).collect()),
            m2: rand_mat(rng, d, 2 * d),
            c2: Array1::from_vec((0..d).map(|_| rng.gen_range(-0.5..0.5)).collect()),
        };
        let layers = vec![
            rand_layer(&mut rng, AttnKind::SelfAttn),
            rand_layer(&mut rng, AttnKind::CrossAttn),
        ];
        let xa = rand_mat(&mut rng, 5, d);
        let xb = rand_mat(&mut rng, 7, d);
        let (fa, fb) = attention_stack(&xa, &xb, &layers, 4).unwrap();

        let ra1 = attn_dir_reference(&xa, &xa, &layers[0], 4);
        let rb1 = attn_dir_reference(&xb, &xb, &layers[0], 4);
        let ra2 = attn_dir_reference(&ra1, &rb1, &layers[1], 4);
        let rb2 = attn_dir_reference(&rb1, &ra1, &layers[1], 4);
        for (a, b) in fa.iter().zip(ra2.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        for (a, b) in fb.iter().zip(rb2.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn attention_stack_with_no_layers_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xa = rand_mat(&mut rng, 3, 4);
        let xb = rand_mat(&mut rng, 2, 4);
        let (fa, fb) = attention_stack(&xa, &xb, &[], 2).unwrap();
        assert_eq!(fa, xa);
        assert_eq!(fb, xb);
    }

    fn rand_inputs(
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
        d: usize,
    ) -> (Array2<f64>, Graph, Vec<(f64, f64)>, Array2<f64>, Graph, Vec<(f64, f64)>) {
        let fa = rand_mat(rng, n, d);
        let ga = rand_graph(rng, n, 0.4);
        let pa: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)))
            .collect();
        let fb = rand_mat(rng, m, d);
        let gb = rand_graph(rng, m, 0.4);
        let pb: Vec<(f64, f64)> = (0..m)
            .map(|_| (rng.gen_range(0.0..320.0), rng.gen_range(0.0..240.0)))
            .collect();
        (fa, ga, pa, fb, gb, pb)
    }

    #[test]
    fn identity_config_returns_raw_descriptors() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (fa, ga, pa, fb, gb, pb) = rand_inputs(&mut rng, 6, 4, 8);
        let w = ModelWeights::identity(8, 2);
        w.validate().unwrap();
        let a = EncodeInput {
            features: fa.clone(),
            graph: &ga,
            positions: &pa,
            dims: (320.0, 240.0),
        };
        let b = EncodeInput {
            features: fb.clone(),
            graph: &gb,
            positions: &pb,
            dims: (320.0, 240.0),
        };
        let (xa, xb) = encode_pair(&a, &b, &w).unwrap();
        assert_eq!(xa, fa);
        assert_eq!(xb, fb);
    }

    #[test]
    fn swapping_inputs_swaps_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (fa, ga, pa, fb, gb, pb) = rand_inputs(&mut rng, 5, 7, 8);
        let w = ModelWeights::xavier_init(8, 2, 2, &alternating_kinds(2), 99).unwrap();
        let a = EncodeInput {
            features: fa,
            graph: &ga,
            positions: &pa,
            dims: (320.0, 240.0),
        };
        let b = EncodeInput {
            features: fb,
            graph: &gb,
            positions: &pb,
            dims: (320.0, 240.0),
        };
        let (xa, xb) = encode_pair(&a, &b, &w).unwrap();
        let (yb, ya) = encode_pair(&b, &a, &w).unwrap();
        assert_eq!(xa, ya);
        assert_eq!(xb, yb);
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (fa, ga, pa, fb, gb, pb) = rand_inputs(&mut rng, 7, 5, 8);
        let w = ModelWeights::xavier_init(8, 2, 2, &alternating_kinds(2), 4).unwrap();
        let b = EncodeInput {
            features: fb,
            graph: &gb,
            positions: &pb,
            dims: (320.0, 240.0),
        };

        // perm[i] = old index of new vertex i.
        let perm = [3usize, 0, 6, 2, 5, 1, 4];
        let mut inv = [0usize; 7];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let fa_p = Array2::from_shape_fn(fa.dim(), |(i, c)| fa[[perm[i], c]]);
        let pa_p: Vec<(f64, f64)> = perm.iter().map(|&o| pa[o]).collect();
        let edges_p: Vec<(usize, usize)> =
            ga.edges().iter().map(|&(u, v)| (inv[u], inv[v])).collect();
        let ga_p = Graph::canonical(7, edges_p).unwrap();

        let a = EncodeInput {
            features: fa.clone(),
            graph: &ga,
            positions: &pa,
            dims: (320.0, 240.0),
        };
        let a_p = EncodeInput {
            features: fa_p,
            graph: &ga_p,
            positions: &pa_p,
            dims: (320.0, 240.0),
        };
        let (xa, xb) = encode_pair(&a, &b, &w).unwrap();
        let (xa_p, xb_p) = encode_pair(&a_p, &b, &w).unwrap();
        for i in 0..7 {
            for c in 0..8 {
                assert!(
                    (xa_p[[i, c]] - xa[[perm[i], c]]).abs() < 1e-12,
                    "vertex {i} channel {c}"
                );
            }
        }
        for (p, q) in xb.iter().zip(xb_p.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gnn_influence_stays_within_hop_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let g = Graph::canonical(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let h = rand_mat(&mut rng, 6, 3);
        let mut h_pert = h.clone();
        h_pert[[5, 0]] += 0.75;
        h_pert[[5, 2]] -= 0.5;
        for hops in 1..=2usize {
            let layers: Vec<Array2<f64>> = (0..hops).map(|_| rand_mat(&mut rng, 3, 3)).collect();
            let base = encode_gnn(&h, &g, &layers).unwrap();
            let pert = encode_gnn(&h_pert, &g, &layers).unwrap();
            for i in 0..6 {
                let reachable = 5 - i <= hops;
                if !reachable {
                    for c in 0..3 {
                        assert_eq!(base[[i, c]], pert[[i, c]], "vertex {i} after {hops} hops");
                    }
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = 8;
        let (fa, ga, pa, fb, gb, pb) = rand_inputs(&mut rng, 6, 5, d);
        let a = EncodeInput {
            features: fa,
            graph: &ga,
            positions: &pa,
            dims: (320.0, 240.0),
        };
        let b = EncodeInput {
            features: fb,
            graph: &gb,
            positions: &pb,
            dims: (320.0, 240.0),
        };
        let w = ModelWeights::xavier_init(d, 2, 2, &alternating_kinds(1), 21).unwrap();
        // Linear probe loss: L = Σ Pa⊙xa + Σ Pb⊙xb.
        let probe_a = rand_mat(&mut rng, 6, d);
        let probe_b = rand_mat(&mut rng, 5, d);

        let (_, _, cache) = encode_pair_cached(&a, &b, &w).unwrap();
        let mut grads = w.zeros_like();
        encode_pair_backward(&cache, &w, probe_a.clone(), probe_b.clone(), &mut grads);
        let analytic = grads.to_flat();

        let loss = |flat: &[f64]| -> f64 {
            let mut wt = w.clone();
            wt.assign_flat(flat).unwrap();
            let (xa, xb) = encode_pair(&a, &b, &wt).unwrap();
            (&xa * &probe_a).sum() + (&xb * &probe_b).sum()
        };
        let mut flat = w.to_flat();
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..flat.len() {
            let orig = flat[k];
            flat[k] = orig + eps;
            let lp = loss(&flat);
            flat[k] = orig - eps;
            let lm = loss(&flat);
            flat[k] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "param {k}: analytic {} vs fd {fd}, rel {rel}",
                analytic[k]
            );
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn xavier_init_is_seeded_and_bounded() {
        let kinds = alternating_kinds(2);
        let w1 = ModelWeights::xavier_init(16, 2, 4, &kinds, 7).unwrap();
        let w2 = ModelWeights::xavier_init(16, 2, 4, &kinds, 7).unwrap();
        let w3 = ModelWeights::xavier_init(16, 2, 4, &kinds, 8).unwrap();
        assert_eq!(w1.to_flat(), w2.to_flat());
        assert_ne!(w1.to_flat(), w3.to_flat());
        let bound = (6.0 / 32.0f64).sqrt();
        for w in &w1.gnn {
            for v in w.iter() {
                assert!(v.abs() <= bound);
            }
        }
        assert_eq!(w1.dustbin, 1.0);
        assert!(w1.pos.b1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn xavier_init_rejects_indivisible_heads() {
        assert!(ModelWeights::xavier_init(10, 1, 4, &alternating_kinds(1), 0).is_err());
    }

    #[test]
    fn flat_and_tensor_roundtrips_preserve_weights() {
        let w = ModelWeights::xavier_init(8, 3, 2, &alternating_kinds(2), 31).unwrap();
        let mut w2 = w.zeros_like();
        w2.assign_flat(&w.to_flat()).unwrap();
        assert_eq!(w, w2);

        let tensors = w.export_tensors();
        let w3 = ModelWeights::from_tensors(&tensors).unwrap();
        assert_eq!(w, w3);
        assert_eq!(w3.heads, 2);

        assert!(w2.assign_flat(&[0.0; 3]).is_err());
    }
}
