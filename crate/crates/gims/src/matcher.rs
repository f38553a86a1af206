//! Soft assignment between two encoded keypoint sets.
//!
//! The score matrix of pairwise inner products is augmented with a dustbin
//! row and column holding a single learnable scalar, balanced by log-domain
//! Sinkhorn iterations, and reduced to hard matches by a mutual-strict-argmax
//! rule. The Sinkhorn forward stores per-iteration potentials so training
//! can backpropagate through the unrolled iterations exactly.

use ndarray::{s, Array1, Array2, Axis};

use crate::core::{Match, MatchSet};
use crate::{Error, Result};

/// Default Sinkhorn iteration budget.
pub const SINKHORN_ITERATIONS: usize = 100;
/// Default confidence floor for extracting a hard match.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.2;

/// Pairwise scores `s_ij = ⟨f̃_i^A, f̃_j^B⟩` plus the dustbin-augmented
/// matrix with scalar `z` on the extra row and column.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub s: Array2<f64>,
    pub augmented: Array2<f64>,
    pub z: f64,
}

/// Sinkhorn output: the balanced assignment and how closely it met the
/// marginals.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// (m+1)×(n+1) nonnegative transport plan, dustbins last.
    pub q: Array2<f64>,
    pub iterations: usize,
    /// Largest absolute deviation of any row/column sum from its marginal.
    pub residual: f64,
}

/// Inner products of every row of `xa` against every row of `xb`.
pub fn score_matrix(xa: &Array2<f64>, xb: &Array2<f64>, z: f64) -> Result<ScoreMatrix> {
    if xa.ncols() != xb.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor dims differ: {} vs {}",
            xa.ncols(),
            xb.ncols()
        )));
    }
    if !z.is_finite() || xa.iter().chain(xb.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input to score_matrix".into()));
    }
    let s = xa.dot(&xb.t());
    let (m, n) = s.dim();
    let mut augmented = Array2::from_elem((m + 1, n + 1), z);
    augmented.slice_mut(s![0..m, 0..n]).assign(&s);
    Ok(ScoreMatrix { s, augmented, z })
}

/// Everything needed to backpropagate through the unrolled iterations:
/// the augmented scores, u₁..u_K, v₀..v_K, and the final plan.
pub struct SinkhornCache {
    s_aug: Array2<f64>,
    u: Vec<Array1<f64>>,
    v: Vec<Array1<f64>>,
    q: Array2<f64>,
    log_mu: Array1<f64>,
    log_nu: Array1<f64>,
}

fn lse_over_cols(x: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(x.rows().into_iter().map(|row| {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
    }))
}

fn lse_over_rows(x: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(x.columns().into_iter().map(|col| {
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + col.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
    }))
}

/// Log-domain Sinkhorn against marginals (1,…,1,n) over rows and
/// (1,…,1,m) over columns (total mass m+n), starting from v = 0 and
/// alternating row then column updates for a fixed iteration budget.
pub fn sinkhorn(score: &ScoreMatrix, iterations: usize) -> Assignment {
    sinkhorn_cached(score, iterations).0
}

/// As [`sinkhorn`], returning the cache for [`sinkhorn_backward`].
pub fn sinkhorn_cached(score: &ScoreMatrix, iterations: usize) -> (Assignment, SinkhornCache) {
    let s_aug = score.augmented.clone();
    let (r, c) = s_aug.dim();
    // A side with no keypoints (or B likewise) has nothing to balance.
    if r < 2 || c < 2 {
        let q = Array2::zeros((r, c));
        return (
            Assignment {
                q: q.clone(),
                iterations: 0,
                residual: 0.0,
            },
            SinkhornCache {
                s_aug,
                u: Vec::new(),
                v: Vec::new(),
                q,
                log_mu: Array1::zeros(r),
                log_nu: Array1::zeros(c),
            },
        );
    }
    let mut log_mu = Array1::zeros(r);
    log_mu[r - 1] = ((c - 1) as f64).ln();
    let mut log_nu = Array1::zeros(c);
    log_nu[c - 1] = ((r - 1) as f64).ln();

    let mut us = Vec::with_capacity(iterations);
    let mut vs = Vec::with_capacity(iterations + 1);
    vs.push(Array1::zeros(c));
    let mut v = vs[0].clone();
    let mut u;
    for _ in 0..iterations {
        u = &log_mu - &lse_over_cols(&(&s_aug + &v));
        v = &log_nu - &lse_over_rows(&(&s_aug + &u.clone().insert_axis(Axis(1))));
        us.push(u);
        vs.push(v.clone());
    }
    let u_last = us
        .last()
        .cloned()
        .unwrap_or_else(|| Array1::zeros(r));
    let v_last = vs.last().expect("v0 always present");
    let q = (&s_aug + &u_last.insert_axis(Axis(1)) + v_last).mapv(f64::exp);

    let mut residual = 0.0f64;
    for (i, row) in q.rows().into_iter().enumerate() {
        residual = residual.max((row.sum() - log_mu[i].exp()).abs());
    }
    for (j, col) in q.columns().into_iter().enumerate() {
        residual = residual.max((col.sum() - log_nu[j].exp()).abs());
    }
    (
        Assignment {
            q: q.clone(),
            iterations,
            residual,
        },
        SinkhornCache {
            s_aug,
            u: us,
            v: vs,
            q,
            log_mu,
            log_nu,
        },
    )
}

/// Gradient of a loss w.r.t. the augmented score matrix, given its gradient
/// w.r.t. the plan Q̃. Walks the stored iterations in reverse, recomputing
/// the softmax weights of each log-sum-exp from the cached potentials.
pub fn sinkhorn_backward(cache: &SinkhornCache, dq: &Array2<f64>) -> Array2<f64> {
    let k_iters = cache.u.len();
    if k_iters == 0 {
        return Array2::zeros(cache.s_aug.dim());
    }
    let g = dq * &cache.q;
    let mut ds = g.clone();
    let mut dv = g.sum_axis(Axis(0));
    let du_last = g.sum_axis(Axis(1));

    for k in (0..k_iters).rev() {
        let u_k = &cache.u[k];
        let v_k = &cache.v[k + 1];
        let v_prev = &cache.v[k];

        // v_k = log_nu − LSE_i(S + u_k): column softmax weights.
        let w = (&cache.s_aug + &u_k.clone().insert_axis(Axis(1)) + &(v_k - &cache.log_nu))
            .mapv(f64::exp);
        let mut du = -w.dot(&dv);
        if k == k_iters - 1 {
            du += &du_last;
        }
        ds -= &(&w * &dv);

        // u_k = log_mu − LSE_j(S + v_{k−1}): row softmax weights.
        let r = (&cache.s_aug + v_prev + &(u_k - &cache.log_mu).insert_axis(Axis(1)))
            .mapv(f64::exp);
        ds -= &(&r * &du.clone().insert_axis(Axis(1)));
        dv = -r.t().dot(&du);
    }
    // dv now refers to the constant v₀ and is discarded.
    ds
}

/// Maps the augmented-score gradient back to the encoded descriptors and
/// the dustbin scalar.
pub fn score_backward(
    xa: &Array2<f64>,
    xb: &Array2<f64>,
    ds_aug: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, f64) {
    let m = xa.nrows();
    let n = xb.nrows();
    let ds = ds_aug.slice(s![0..m, 0..n]);
    let dxa = ds.dot(xb);
    let dxb = ds.t().dot(xa);
    let dz = ds_aug.row(m).sum() + ds_aug.column(n).sum() - ds_aug[[m, n]];
    (dxa, dxb, dz)
}

/// Keeps (i, j) iff Q̃_ij is the strict maximum of row i and of column j
/// among non-dustbin entries and clears `min_conf`. The result is
/// one-to-one by construction.
pub fn extract_matches(assignment: &Assignment, min_conf: f64) -> MatchSet {
    let q = &assignment.q;
    let (r, c) = q.dim();
    if r < 2 || c < 2 {
        return MatchSet { pairs: Vec::new() };
    }
    let m = r - 1;
    let n = c - 1;

    // (index of the maximum, whether it is strict) per row and column.
    let strict_max = |values: &mut dyn Iterator<Item = f64>| -> (usize, bool) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        let mut unique = true;
        for (idx, v) in values.enumerate() {
            if v > best {
                best = v;
                arg = idx;
                unique = true;
            } else if v == best {
                unique = false;
            }
        }
        (arg, unique)
    };
    let rows: Vec<(usize, bool)> = (0..m)
        .map(|i| strict_max(&mut (0..n).map(|j| q[[i, j]])))
        .collect();
    let cols: Vec<(usize, bool)> = (0..n)
        .map(|j| strict_max(&mut (0..m).map(|i| q[[i, j]])))
        .collect();

    let mut matches = Vec::new();
    for (i, &(j, row_strict)) in rows.iter().enumerate() {
        if !row_strict {
            continue;
        }
        let (ci, col_strict) = cols[j];
        if col_strict && ci == i && q[[i, j]] >= min_conf {
            matches.push(Match {
                a: i,
                b: j,
                confidence: q[[i, j]].clamp(0.0, 1.0),
            });
        }
    }
    MatchSet { pairs: matches }
}

/// Score → Sinkhorn → extraction in one call.
pub fn match_pair(
    xa: &Array2<f64>,
    xb: &Array2<f64>,
    z: f64,
    iterations: usize,
    min_conf: f64,
) -> Result<(MatchSet, Assignment)> {
    let score = score_matrix(xa, xb, z)?;
    let assignment = sinkhorn(&score, iterations);
    Ok((extract_matches(&assignment, min_conf), assignment))
}
