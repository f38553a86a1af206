//! Homography estimation and evaluation: point projection, Hartley-normalized
//! DLT, 4-point RANSAC with a final refit, corner reprojection error, and the
//! thresholded AUC summary metric.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::core::Homography;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iters: usize,
    /// Forward reprojection error below which a pair counts as an inlier.
    pub inlier_thr: f64,
    pub seed: u64,
    /// Target probability of having seen one all-inlier sample.
    pub confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            inlier_thr: 3.0,
            seed: 0,
            confidence: 0.999,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be ≥ 1".into()));
        }
        if !(self.inlier_thr > 0.0) {
            return Err(Error::InvalidInput("inlier_thr must be > 0".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput("confidence must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

/// Projects `p` through `h` with perspective division.
pub fn apply_homography(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    let m = h.matrix();
    let w = m[2][0] * p.0 + m[2][1] * p.1 + m[2][2];
    if w.abs() < 1e-12 {
        return Err(Error::Degenerate(format!(
            "point ({}, {}) maps to infinity",
            p.0, p.1
        )));
    }
    let x = m[0][0] * p.0 + m[0][1] * p.1 + m[0][2];
    let y = m[1][0] * p.0 + m[1][1] * p.1 + m[1][2];
    Ok((x / w, y / w))
}

/// Similarity transform sending the points' centroid to the origin with
/// mean distance √2, as a 3×3 matrix.
fn hartley_transform(pts: &[(f64, f64)]) -> Result<[[f64; 3]; 3]> {
    let n = pts.len() as f64;
    let (cx, cy) = pts
        .iter()
        .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x, ay + y));
    let (cx, cy) = (cx / n, cy / n);
    let mean_dist = pts
        .iter()
        .map(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat3_inv_similarity(t: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    // Inverse of [[s,0,tx],[0,s,ty],[0,0,1]].
    let s = t[0][0];
    [
        [1.0 / s, 0.0, -t[0][2] / s],
        [0.0, 1.0 / s, -t[1][2] / s],
        [0.0, 0.0, 1.0],
    ]
}

/// Direct linear transform on ≥ 4 correspondences with Hartley
/// normalization on both sides. Degenerate configurations (e.g. three
/// collinear source points among four) are reported as errors.
pub fn dlt_homography(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 4 {
        return Err(Error::Degenerate(format!(
            "DLT needs at least 4 correspondences, got {}",
            src.len()
        )));
    }
    let t_src = hartley_transform(src)?;
    let t_dst = hartley_transform(dst)?;
    let norm = |t: &[[f64; 3]; 3], p: (f64, f64)| -> (f64, f64) {
        (t[0][0] * p.0 + t[0][2], t[1][1] * p.1 + t[1][2])
    };

    // 2n×9 design matrix, zero-padded to at least 9 rows so the full right
    // singular basis (including the null vector) is available.
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (&sp, &dp)) in src.iter().zip(dst.iter()).enumerate() {
        let (x, y) = norm(&t_src, sp);
        let (u, v) = norm(&t_dst, dp);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap()
    });
    let smallest = order[0];
    // With exact data the smallest singular value is ~0 (the solution);
    // a second near-zero value means the system has no unique solution.
    let sigma_max = svd.singular_values[*order.last().unwrap()];
    if order.len() > 1 && svd.singular_values[order[1]] < 1e-10 * sigma_max.max(1e-300) {
        return Err(Error::Degenerate(
            "correspondences are degenerate (rank-deficient DLT system)".into(),
        ));
    }
    let h_hat = [
        [v_t[(smallest, 0)], v_t[(smallest, 1)], v_t[(smallest, 2)]],
        [v_t[(smallest, 3)], v_t[(smallest, 4)], v_t[(smallest, 5)]],
        [v_t[(smallest, 6)], v_t[(smallest, 7)], v_t[(smallest, 8)]],
    ];
    let h = mat3_mul(&mat3_inv_similarity(&t_dst), &mat3_mul(&h_hat, &t_src));
    Homography::new(h)
}

fn forward_error(h: &Homography, s: (f64, f64), d: (f64, f64)) -> f64 {
    match apply_homography(h, s) {
        Ok((x, y)) => ((x - d.0).powi(2) + (y - d.1).powi(2)).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

/// Classic 4-point RANSAC over correspondences, deterministic under
/// `cfg.seed`, with confidence-based early exit and a final DLT refit on
/// the best inlier set.
pub fn ransac_homography(
    src: &[(f64, f64)],
    dst: &[(f64, f64)],
    cfg: &RansacConfig,
) -> Result<RansacResult> {
    cfg.validate()?;
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} destination points",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "no estimate: {n} matches, need at least 4"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_mask: Option<Vec<bool>> = None;
    let mut best_count = 0usize;
    let mut best_h: Option<Homography> = None;
    let mut iterations = 0usize;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let mut idx = [0usize; 4];
        let mut picked = 0;
        while picked < 4 {
            let c = rng.gen_range(0..n);
            if !idx[..picked].contains(&c) {
                idx[picked] = c;
                picked += 1;
            }
        }
        let s4: Vec<(f64, f64)> = idx.iter().map(|&i| src[i]).collect();
        let d4: Vec<(f64, f64)> = idx.iter().map(|&i| dst[i]).collect();
        let Ok(h) = dlt_homography(&s4, &d4) else {
            continue;
        };
        let mask: Vec<bool> = (0..n)
            .map(|i| forward_error(&h, src[i], dst[i]) < cfg.inlier_thr)
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count > best_count {
            best_count = count;
            best_mask = Some(mask);
            best_h = Some(h);
            // Early exit once the all-inlier sample probability is met.
            let w = best_count as f64 / n as f64;
            let p_outlier_sample = 1.0 - w.powi(4);
            if p_outlier_sample <= 0.0 {
                break;
            }
            let needed = (1.0 - cfg.confidence).ln() / p_outlier_sample.ln();
            if (iterations as f64) >= needed {
                break;
            }
        }
    }

    let (Some(mask), Some(h)) = (best_mask, best_h) else {
        return Err(Error::Degenerate(
            "no estimate: every minimal sample was degenerate".into(),
        ));
    };
    if best_count < 4 {
        return Err(Error::Degenerate(format!(
            "no estimate: best consensus has only {best_count} inliers"
        )));
    }
    let inl_src: Vec<(f64, f64)> = (0..n).filter(|&i| mask[i]).map(|i| src[i]).collect();
    let inl_dst: Vec<(f64, f64)> = (0..n).filter(|&i| mask[i]).map(|i| dst[i]).collect();
    let (final_h, final_mask) = match dlt_homography(&inl_src, &inl_dst) {
        Ok(refit) => {
            let m: Vec<bool> = (0..n)
                .map(|i| forward_error(&refit, src[i], dst[i]) < cfg.inlier_thr)
                .collect();
            (refit, m)
        }
        Err(_) => (h, mask),
    };
    Ok(RansacResult {
        homography: final_h,
        inliers: final_mask,
        iterations,
    })
}

/// Mean displacement of the four image corners between two homographies.
pub fn corner_error(h_est: &Homography, h_true: &Homography, w: f64, h: f64) -> Result<f64> {
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut total = 0.0;
    for &c in &corners {
        let (ex, ey) = apply_homography(h_est, c)
            .map_err(|_| Error::Degenerate("no estimate: corner maps to infinity".into()))?;
        let (tx, ty) = apply_homography(h_true, c)
            .map_err(|_| Error::Degenerate("no estimate: corner maps to infinity".into()))?;
        total += ((ex - tx).powi(2) + (ey - ty).powi(2)).sqrt();
    }
    Ok(total / 4.0)
}

/// What to do with pairs that produced no homography estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoEstimate {
    /// Count the pair as error ∞ (default).
    AsInfinite,
    /// Exclude the pair from the statistic.
    Drop,
}

/// AUC@t as a percentage: (100/t)·∫₀ᵗ F(x) dx with F the empirical CDF of
/// the errors. The integral is computed exactly: each error e ≤ t
/// contributes (t − e)/(t·N).
pub fn auc(errors: &[Option<f64>], t: f64, mode: NoEstimate) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("AUC of an empty error list".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("threshold {t} must be > 0")));
    }
    let mut kept = Vec::with_capacity(errors.len());
    for e in errors {
        match (e, mode) {
            (Some(v), _) => {
                if !(*v >= 0.0) {
                    return Err(Error::InvalidInput(format!("invalid error value {v}")));
                }
                kept.push(*v);
            }
            (None, NoEstimate::AsInfinite) => kept.push(f64::INFINITY),
            (None, NoEstimate::Drop) => {}
        }
    }
    if kept.is_empty() {
        // Every pair failed and was dropped: nothing succeeded below any
        // threshold.
        return Ok(0.0);
    }
    let n = kept.len() as f64;
    // `Sum` for f64 uses -0.0 as its identity, so an empty sum would carry a
    // negative sign into the result; adding +0.0 normalizes the zero.
    let area: f64 = kept.iter().filter(|&&e| e <= t).map(|&e| t - e).sum::<f64>() + 0.0;
    Ok(100.0 * area / (t * n))
}
