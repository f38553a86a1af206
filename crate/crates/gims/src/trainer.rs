//! Self-supervised training on synthetic homography pairs.
//!
//! A source image is warped by a randomly sampled homography; keypoints
//! detected on both sides are labeled by projecting the source keypoints
//! through the true homography and pairing mutual nearest neighbors. The
//! loss is the negative log-likelihood of the labeled cells of the Sinkhorn
//! plan, differentiated analytically through the matcher and encoder and
//! minimized with Adam.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agc::AgcParams;
use crate::core::{Graph, Homography, Image, Keypoint};
use crate::descriptor::{describe, DescriptorProvider};
use crate::encoder::{
    alternating_kinds, encode_pair_backward, encode_pair_cached, EncodeInput, ModelWeights,
};
use crate::geometry::{
    apply_homography, auc, corner_error, ransac_homography, NoEstimate, RansacConfig,
};
use crate::imagekp::{extract_patches, DetectParams, Pyramid};
use crate::matcher::{
    extract_matches, score_backward, score_matrix, sinkhorn_backward, sinkhorn_cached,
};
use crate::{Error, Result};

/// Default tolerance for calling a projected keypoint pair a true match.
pub const DEFAULT_EPSILON_GT: f64 = 3.0;
/// Keypoint cap per image during training.
pub const TRAIN_MAX_KEYPOINTS: usize = 512;
const LOG_FLOOR: f64 = 1e-12;

/// Uniform sampling ranges for each factor of the synthetic homography.
/// Zero-width ranges pin a parameter exactly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HomographyRanges {
    /// Isotropic scale about the image center.
    pub scale: (f64, f64),
    /// Rotation about the image center, radians.
    pub rotation: (f64, f64),
    /// Translation as a fraction of image width/height.
    pub translation: (f64, f64),
    /// Per-corner perspective jitter as a fraction of width/height.
    pub perspective: (f64, f64),
    /// Crop factor; (1, 1) disables cropping.
    pub crop: (f64, f64),
}

impl Default for HomographyRanges {
    fn default() -> Self {
        let rot = 30.0 * std::f64::consts::PI / 180.0;
        Self {
            scale: (0.8, 1.2),
            rotation: (-rot, rot),
            translation: (-0.1, 0.1),
            perspective: (-0.05, 0.05),
            crop: (1.0, 1.0),
        }
    }
}

impl HomographyRanges {
    /// Every parameter pinned at its identity value.
    pub fn identity() -> Self {
        Self {
            scale: (1.0, 1.0),
            rotation: (0.0, 0.0),
            translation: (0.0, 0.0),
            perspective: (0.0, 0.0),
            crop: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(ordered(self.scale) && self.scale.0 > 0.0) {
            return Err(Error::InvalidInput("invalid scale range".into()));
        }
        if !(ordered(self.rotation) && ordered(self.translation) && ordered(self.perspective)) {
            return Err(Error::InvalidInput("invalid homography ranges".into()));
        }
        if !(ordered(self.crop) && self.crop.0 > 0.0 && self.crop.1 <= 1.0) {
            return Err(Error::InvalidInput(
                "crop range must lie in (0, 1] and be ordered".into(),
            ));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Samples translate·rotate·scale·perspective·crop about the image center,
/// uniformly from `ranges`, deterministically under `seed`. Non-invertible
/// draws are resampled a bounded number of times.
pub fn sample_homography(
    w: f64,
    h: f64,
    seed: u64,
    ranges: &HomographyRanges,
) -> Result<Homography> {
    ranges.validate()?;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::InvalidInput("image dims must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        if let Ok(hmg) = sample_once(w, h, &mut rng, ranges) {
            return Ok(hmg);
        }
    }
    Err(Error::Degenerate(
        "could not sample an invertible homography in 16 attempts".into(),
    ))
}

fn sample_once(
    w: f64,
    h: f64,
    rng: &mut ChaCha8Rng,
    ranges: &HomographyRanges,
) -> Result<Homography> {
    let (cx, cy) = (w / 2.0, h / 2.0);
    // Fixed draw order keeps seeds meaningful across parameter changes.
    let s = draw(rng, ranges.scale);
    let phi = draw(rng, ranges.rotation);
    let tx = draw(rng, ranges.translation) * w;
    let ty = draw(rng, ranges.translation) * h;
    let jitter: Vec<(f64, f64)> = (0..4)
        .map(|_| {
            (
                draw(rng, ranges.perspective) * w,
                draw(rng, ranges.perspective) * h,
            )
        })
        .collect();
    let crop_factor = draw(rng, ranges.crop);
    let (crop_x, crop_y) = if crop_factor < 1.0 {
        let span = 1.0 - crop_factor;
        (
            rng.gen_range(0.0..span) * w,
            rng.gen_range(0.0..span) * h,
        )
    } else {
        (0.0, 0.0)
    };

    let translate = Homography::new([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])?;
    let (cos, sin) = (phi.cos(), phi.sin());
    let rotate = Homography::new([
        [cos, -sin, cx - cos * cx + sin * cy],
        [sin, cos, cy - sin * cx - cos * cy],
        [0.0, 0.0, 1.0],
    ])?;
    let scale = Homography::new([
        [s, 0.0, cx * (1.0 - s)],
        [0.0, s, cy * (1.0 - s)],
        [0.0, 0.0, 1.0],
    ])?;
    let perspective = if jitter.iter().all(|&(dx, dy)| dx == 0.0 && dy == 0.0) {
        Homography::identity()
    } else {
        let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
        let moved: Vec<(f64, f64)> = corners
            .iter()
            .zip(&jitter)
            .map(|(&(x, y), &(dx, dy))| (x + dx, y + dy))
            .collect();
        crate::geometry::dlt_homography(&corners, &moved)?
    };
    // Maps the crop window back onto the full frame.
    let crop = Homography::new([
        [1.0 / crop_factor, 0.0, -crop_x / crop_factor],
        [0.0, 1.0 / crop_factor, -crop_y / crop_factor],
        [0.0, 0.0, 1.0],
    ])?;

    translate
        .compose(&rotate)?
        .compose(&scale)?
        .compose(&perspective)?
        .compose(&crop)
}

fn bilinear_zero(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (img.width(), img.height());
    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return 0.0;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = img.get(x0, y0, c);
    let v10 = img.get(x1, y0, c);
    let v01 = img.get(x0, y1, c);
    let v11 = img.get(x1, y1, c);
    (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
}

/// Warps `img` by `h`: output pixel p takes the bilinear sample of the
/// source at H⁻¹(p); samples outside the source are black.
pub fn warp_image(img: &Image, h: &Homography) -> Result<Image> {
    let inv = h.inverse()?;
    let (w, ht, ch) = (img.width(), img.height(), img.channels());
    let mut pixels = vec![0.0; w * ht * ch];
    for y in 0..ht {
        for x in 0..w {
            match apply_homography(&inv, (x as f64, y as f64)) {
                Ok((sx, sy)) => {
                    for c in 0..ch {
                        pixels[(y * w + x) * ch + c] =
                            bilinear_zero(img, sx, sy, c).clamp(0.0, 1.0);
                    }
                }
                Err(_) => {} // behind the camera plane: leave black
            }
        }
    }
    Image::new(w, ht, ch, pixels)
}

/// A source image, its warp, and the homography that relates them.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub source: Image,
    pub warped: Image,
    pub homography: Homography,
    pub seed: u64,
}

/// Samples a homography and produces the warped counterpart of `source`.
pub fn synth_pair(source: &Image, seed: u64, ranges: &HomographyRanges) -> Result<SynthPair> {
    let h = sample_homography(source.width() as f64, source.height() as f64, seed, ranges)?;
    Ok(SynthPair {
        source: source.clone(),
        warped: warp_image(source, &h)?,
        homography: h,
        seed,
    })
}

/// Deterministic test scene: a shaded background scattered with Gaussian
/// blobs of varying size and polarity, giving the detector plenty of
/// structure.
pub fn synthetic_scene(width: usize, height: usize, blobs: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            pixels[y * width + x] = 0.35 + 0.1 * x as f64 / width as f64;
        }
    }
    for _ in 0..blobs {
        let bx = rng.gen_range(0.1..0.9) * width as f64;
        let by = rng.gen_range(0.1..0.9) * height as f64;
        let sigma: f64 = rng.gen_range(1.5..5.0);
        let amp = rng.gen_range(0.25..0.55) * if rng.gen_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
        let r = (4.0 * sigma).ceil() as isize;
        let (bxi, byi) = (bx.round() as isize, by.round() as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (bxi + dx, byi + dy);
                if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
                    continue;
                }
                let d2 = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (2.0 * sigma * sigma);
                pixels[y as usize * width + x as usize] += amp * (-d2).exp();
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    Image::new(width, height, 1, pixels).expect("pixels are clamped to range")
}

/// True correspondence labels for one pair: positives plus the keypoints
/// consigned to each dustbin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub positives: Vec<(usize, usize)>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub epsilon: f64,
}

impl GroundTruth {
    /// |positives|·2 + |unmatched_a| + |unmatched_b| = mA + mB.
    pub fn is_conserving(&self, m_a: usize, m_b: usize) -> bool {
        2 * self.positives.len() + self.unmatched_a.len() + self.unmatched_b.len() == m_a + m_b
    }
}

/// Projects A keypoints through the true homography and pairs mutual
/// nearest neighbors at distance < ε. Points projecting outside
/// [0, w−1]×[0, h−1] of image B, and all leftovers, go to the dustbins.
/// Distance ties resolve to the smaller index.
pub fn label_ground_truth(
    kp_a: &[(f64, f64)],
    kp_b: &[(f64, f64)],
    h: &Homography,
    epsilon: f64,
    dims_b: (f64, f64),
) -> GroundTruth {
    let projected: Vec<Option<(f64, f64)>> = kp_a
        .iter()
        .map(|&p| match apply_homography(h, p) {
            Ok((x, y))
                if x >= 0.0 && y >= 0.0 && x <= dims_b.0 - 1.0 && y <= dims_b.1 - 1.0 =>
            {
                Some((x, y))
            }
            _ => None,
        })
        .collect();

    let d2 = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
    // Nearest B for each valid projection; ascending scan keeps the
    // smaller index on ties.
    let nn_b: Vec<Option<usize>> = projected
        .iter()
        .map(|p| {
            p.and_then(|p| {
                let mut best: Option<(f64, usize)> = None;
                for (j, &q) in kp_b.iter().enumerate() {
                    let d = d2(p, q);
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, j));
                    }
                }
                best.map(|(_, j)| j)
            })
        })
        .collect();
    let nn_a: Vec<Option<usize>> = kp_b
        .iter()
        .map(|&q| {
            let mut best: Option<(f64, usize)> = None;
            for (i, p) in projected.iter().enumerate() {
                let Some(p) = p else { continue };
                let d = d2(*p, q);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            best.map(|(_, i)| i)
        })
        .collect();

    let mut positives = Vec::new();
    let mut matched_b = vec![false; kp_b.len()];
    let mut unmatched_a = Vec::new();
    for (i, proj) in projected.iter().enumerate() {
        let paired = match (proj, nn_b[i]) {
            (Some(p), Some(j)) => {
                if nn_a[j] == Some(i) && d2(*p, kp_b[j]).sqrt() < epsilon {
                    positives.push((i, j));
                    matched_b[j] = true;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        if !paired {
            unmatched_a.push(i);
        }
    }
    let unmatched_b = (0..kp_b.len()).filter(|&j| !matched_b[j]).collect();
    GroundTruth {
        positives,
        unmatched_a,
        unmatched_b,
        epsilon,
    }
}

/// Mean negative log-likelihood of the labeled cells of the plan, with the
/// log floored at 1e-12, and its gradient w.r.t. Q̃.
pub fn nll_loss(q: &Array2<f64>, gt: &GroundTruth) -> (f64, Array2<f64>) {
    let (rows, cols) = q.dim();
    let mut dq = Array2::zeros((rows, cols));
    let cells: Vec<(usize, usize)> = gt
        .positives
        .iter()
        .copied()
        .chain(gt.unmatched_a.iter().map(|&i| (i, cols - 1)))
        .chain(gt.unmatched_b.iter().map(|&j| (rows - 1, j)))
        .collect();
    if cells.is_empty() {
        return (0.0, dq);
    }
    let count = cells.len() as f64;
    let mut loss = 0.0;
    for (i, j) in cells {
        let v = q[[i, j]];
        loss -= v.max(LOG_FLOOR).ln();
        if v > LOG_FLOOR {
            dq[[i, j]] -= 1.0 / (count * v);
        }
    }
    (loss / count, dq)
}

/// Adam with bias correction, operating on the flattened parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] * grads[k];
            let m_hat = self.m[k] / b1t;
            let v_hat = self.v[k] / b2t;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// One image's matching inputs: keypoints aligned with the graph built
/// over them, descriptors as encoder-ready rows, and the frame size.
#[derive(Debug, Clone)]
pub struct PreparedSide {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Array2<f64>,
    pub graph: Graph,
    pub positions: Vec<(f64, f64)>,
    pub dims: (f64, f64),
}

fn placeholder_keypoint() -> Keypoint {
    Keypoint {
        x: 0.0,
        y: 0.0,
        scale: 1.0,
        orientation: 0.0,
        response: 0.0,
        octave: 0,
    }
}

/// Detect → orient → describe → AGC for one image. Vertices dropped by the
/// graph's small-component removal are dropped from every parallel array.
pub fn prepare_side(
    img: &Image,
    detect: &DetectParams,
    agc: &AgcParams,
    provider: &DescriptorProvider,
) -> Result<PreparedSide> {
    let pyr = Pyramid::build(img)?;
    let kps = crate::imagekp::detect_on(&pyr, detect);
    let patches = extract_patches(&pyr, &kps);
    let descs = describe(&patches, provider)?;
    let positions: Vec<(f64, f64)> = kps.iter().map(|k| (k.x, k.y)).collect();
    let (graph, report) = crate::agc::build_agc(&positions, &descs, agc)?;

    let n_kept = graph.vertex_count();
    let mut keypoints = vec![placeholder_keypoint(); n_kept];
    let mut kept_positions = vec![(0.0, 0.0); n_kept];
    let mut data = Array2::zeros((n_kept, descs.dim()));
    for (old, slot) in report.kept_map.iter().enumerate() {
        if let Some(new) = *slot {
            keypoints[new] = kps[old];
            kept_positions[new] = positions[old];
            for (c, &v) in descs.row(old).iter().enumerate() {
                data[[new, c]] = v;
            }
        }
    }
    Ok(PreparedSide {
        keypoints,
        descriptors: data,
        graph,
        positions: kept_positions,
        dims: (img.width() as f64, img.height() as f64),
    })
}

impl PreparedSide {
    pub fn encode_input(&self) -> EncodeInput<'_> {
        EncodeInput {
            features: self.descriptors.clone(),
            graph: &self.graph,
            positions: &self.positions,
            dims: self.dims,
        }
    }
}

/// One training example: both prepared sides plus the labeled truth.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub a: PreparedSide,
    pub b: PreparedSide,
    pub gt: GroundTruth,
}

/// Runs the detection pipeline on both halves of a synthetic pair and
/// labels the result. Keypoint counts are capped at `max_keypoints`
/// (clamped to the training cap of 512).
pub fn prepare_train_item(
    pair: &SynthPair,
    max_keypoints: usize,
    agc: &AgcParams,
    provider: &DescriptorProvider,
    epsilon_gt: f64,
) -> Result<TrainItem> {
    let detect = DetectParams {
        max_keypoints: max_keypoints.min(TRAIN_MAX_KEYPOINTS),
        ..DetectParams::default()
    };
    let a = prepare_side(&pair.source, &detect, agc, provider)?;
    let b = prepare_side(&pair.warped, &detect, agc, provider)?;
    let gt = label_ground_truth(
        &a.positions,
        &b.positions,
        &pair.homography,
        epsilon_gt,
        b.dims,
    );
    Ok(TrainItem { a, b, gt })
}

/// Forward pass loss of one item under the given weights.
pub fn item_loss(item: &TrainItem, w: &ModelWeights, sinkhorn_iters: usize) -> Result<f64> {
    let (xa, xb) = crate::encoder::encode_pair(&item.a.encode_input(), &item.b.encode_input(), w)?;
    let score = score_matrix(&xa, &xb, w.dustbin)?;
    let (assignment, _) = sinkhorn_cached(&score, sinkhorn_iters);
    Ok(nll_loss(&assignment.q, &item.gt).0)
}

/// Mean loss over the batch and the full analytic gradient.
pub fn batch_gradient(
    batch: &[TrainItem],
    w: &ModelWeights,
    sinkhorn_iters: usize,
) -> Result<(f64, ModelWeights)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty training batch".into()));
    }
    let mut grads = w.zeros_like();
    let mut total_loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for item in batch {
        let (xa, xb, cache) =
            encode_pair_cached(&item.a.encode_input(), &item.b.encode_input(), w)?;
        let score = score_matrix(&xa, &xb, w.dustbin)?;
        let (assignment, sk_cache) = sinkhorn_cached(&score, sinkhorn_iters);
        let (loss, mut dq) = nll_loss(&assignment.q, &item.gt);
        total_loss += loss * scale;
        dq *= scale;
        let ds_aug = sinkhorn_backward(&sk_cache, &dq);
        let (dxa, dxb, dz) = score_backward(&xa, &xb, &ds_aug);
        grads.dustbin += dz;
        encode_pair_backward(&cache, w, dxa, dxb, &mut grads);
    }
    Ok((total_loss, grads))
}

/// One optimizer step over `batch`. Weights update in place; the mean
/// batch loss (before the update) is returned. A non-finite loss or
/// gradient aborts with diagnostics and leaves the weights untouched.
pub fn train_step(
    weights: &mut ModelWeights,
    batch: &[TrainItem],
    opt: &mut Adam,
    sinkhorn_iters: usize,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(batch, weights, sinkhorn_iters)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss {loss} at optimizer step {}",
            opt.step + 1
        )));
    }
    let grad_flat = grads.to_flat();
    if let Some(k) = grad_flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient at parameter {k} (of {}), optimizer step {}",
            grad_flat.len(),
            opt.step + 1
        )));
    }
    let mut flat = weights.to_flat();
    opt.apply(&mut flat, &grad_flat);
    weights.assign_flat(&flat)?;
    Ok(loss)
}

/// Matches two prepared sides under the given weights and returns the
/// corner error of the RANSAC estimate against the true homography, or
/// `None` when no estimate was possible.
pub fn evaluate_item(
    item: &TrainItem,
    h_true: &Homography,
    w: &ModelWeights,
    sinkhorn_iters: usize,
    min_conf: f64,
    ransac: &RansacConfig,
) -> Result<Option<f64>> {
    let (xa, xb) = crate::encoder::encode_pair(&item.a.encode_input(), &item.b.encode_input(), w)?;
    let score = score_matrix(&xa, &xb, w.dustbin)?;
    let assignment = crate::matcher::sinkhorn(&score, sinkhorn_iters);
    let matches = extract_matches(&assignment, min_conf);
    let src: Vec<(f64, f64)> = matches.pairs.iter().map(|m| item.a.positions[m.a]).collect();
    let dst: Vec<(f64, f64)> = matches.pairs.iter().map(|m| item.b.positions[m.b]).collect();
    let Ok(res) = ransac_homography(&src, &dst, ransac) else {
        return Ok(None);
    };
    match corner_error(&res.homography, h_true, item.a.dims.0, item.a.dims.1) {
        Ok(e) => Ok(Some(e)),
        Err(_) => Ok(None),
    }
}

/// Settings for the GNN-depth ablation harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationConfig {
    pub image_size: (usize, usize),
    pub blobs: usize,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub steps: usize,
    pub max_keypoints: usize,
    pub lr: f64,
    pub sinkhorn_iterations: usize,
    pub min_confidence: f64,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            image_size: (160, 160),
            blobs: 40,
            train_pairs: 3,
            eval_pairs: 3,
            steps: 20,
            max_keypoints: 128,
            lr: 1e-4,
            sinkhorn_iterations: 50,
            min_confidence: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthRow {
    pub layers: usize,
    pub final_loss: f64,
    pub auc5: f64,
    pub auc10: f64,
    pub auc25: f64,
}

/// Trains a fresh model per GNN depth on the same synthetic corpus and
/// reports loss and AUC per depth. No ordering between depths is implied.
pub fn depth_ablation(depths: &[usize], cfg: &AblationConfig) -> Result<Vec<DepthRow>> {
    let agc = AgcParams::default();
    let provider = DescriptorProvider::Hist128;
    let ranges = HomographyRanges::default();
    let (w_img, h_img) = cfg.image_size;

    let mut train_items = Vec::new();
    for k in 0..cfg.train_pairs {
        let scene = synthetic_scene(w_img, h_img, cfg.blobs, cfg.seed.wrapping_add(k as u64));
        let pair = synth_pair(&scene, cfg.seed.wrapping_add(1000 + k as u64), &ranges)?;
        train_items.push((
            prepare_train_item(&pair, cfg.max_keypoints, &agc, &provider, DEFAULT_EPSILON_GT)?,
            pair.homography,
        ));
    }
    let mut eval_items = Vec::new();
    for k in 0..cfg.eval_pairs {
        let scene = synthetic_scene(
            w_img,
            h_img,
            cfg.blobs,
            cfg.seed.wrapping_add(5000 + k as u64),
        );
        let pair = synth_pair(&scene, cfg.seed.wrapping_add(6000 + k as u64), &ranges)?;
        eval_items.push((
            prepare_train_item(&pair, cfg.max_keypoints, &agc, &provider, DEFAULT_EPSILON_GT)?,
            pair.homography,
        ));
    }
    let batch: Vec<TrainItem> = train_items.iter().map(|(i, _)| i.clone()).collect();

    let mut rows = Vec::with_capacity(depths.len());
    for &layers in depths {
        let mut model = ModelWeights::xavier_init(
            crate::encoder::DEFAULT_DIM,
            layers,
            crate::encoder::DEFAULT_HEADS,
            &alternating_kinds(crate::encoder::DEFAULT_ATTN_PAIRS),
            cfg.seed,
        )?;
        let mut opt = Adam::new(cfg.lr, model.param_count());
        let mut final_loss = f64::NAN;
        for _ in 0..cfg.steps {
            final_loss = train_step(&mut model, &batch, &mut opt, cfg.sinkhorn_iterations)?;
        }
        let ransac = RansacConfig::default();
        let errors: Vec<Option<f64>> = eval_items
            .iter()
            .map(|(item, h_true)| {
                evaluate_item(
                    item,
                    h_true,
                    &model,
                    cfg.sinkhorn_iterations,
                    cfg.min_confidence,
                    &ransac,
                )
            })
            .collect::<Result<_>>()?;
        rows.push(DepthRow {
            layers,
            final_loss,
            auc5: auc(&errors, 5.0, NoEstimate::AsInfinite)?,
            auc10: auc(&errors, 10.0, NoEstimate::AsInfinite)?,
            auc25: auc(&errors, 25.0, NoEstimate::AsInfinite)?,
        });
    }
    Ok(rows)
}
