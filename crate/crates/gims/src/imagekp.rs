//! Keypoint detection and patch extraction.
//!
//! A Gaussian scale pyramid (with a 2× upsampled first octave) feeds a
//! difference-of-Gaussians detector with contrast and edge rejection and a
//! 36-bin gradient-orientation vote. Patches are 64×64 crops at the pyramid
//! level nearest the keypoint scale, rotated to canonical orientation and
//! averaged down to 32×32.
//!
//! Keypoint positions, scales and responses are reported in base-image
//! coordinates regardless of the octave they were found in.

use crate::core::{Image, Keypoint};
use crate::{Error, Result};

/// Scales per octave.
const SCALES: usize = 3;
/// Blur of the first pyramid level, in octave pixels.
const SIGMA0: f64 = 1.6;
/// Blur assumed already present in the input image.
const INIT_BLUR: f64 = 0.5;
const ORI_BINS: usize = 36;

/// Detection thresholds; defaults follow common SIFT practice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    /// Keep at most this many keypoints, by descending response.
    pub max_keypoints: usize,
    /// Minimum |DoG| at an extremum.
    pub contrast_threshold: f64,
    /// Maximum principal-curvature ratio before a point counts as an edge.
    pub edge_ratio: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            max_keypoints: 10_000,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

/// Plain row-major float grid; unlike [`Image`] it may hold signed values
/// (DoG levels).
#[derive(Debug, Clone)]
pub(crate) struct Buf2D {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Buf2D {
    fn new(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            data: vec![0.0; w * h],
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    #[inline]
    fn at_i(&self, x: isize, y: isize) -> f64 {
        let xr = reflect101(x, self.w);
        let yr = reflect101(y, self.h);
        self.data[yr * self.w + xr]
    }

    /// Bilinear sample with mirror padding outside the grid.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as isize;
        let y0 = y0 as isize;
        let v00 = self.at_i(x0, y0);
        let v10 = self.at_i(x0 + 1, y0);
        let v01 = self.at_i(x0, y0 + 1);
        let v11 = self.at_i(x0 + 1, y0 + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }
}

/// Reflect an index into `[0, n)` about the border pixels (−1 maps to 1).
#[inline]
fn reflect101(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn gaussian_blur(src: &Buf2D, sigma: f64) -> Buf2D {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for d in -radius..=radius {
        let v = (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let mut tmp = Buf2D::new(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                acc += kernel[ki] * src.data[y * src.w + reflect101(x as isize + d, src.w)];
            }
            tmp.data[y * src.w + x] = acc;
        }
    }
    let mut out = Buf2D::new(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                acc += kernel[ki] * tmp.data[reflect101(y as isize + d, src.h) * src.w + x];
            }
            out.data[y * src.w + x] = acc;
        }
    }
    out
}

fn upsample2(src: &Buf2D) -> Buf2D {
    let mut out = Buf2D::new(src.w * 2, src.h * 2);
    for y in 0..out.h {
        for x in 0..out.w {
            out.data[y * out.w + x] = src.sample(x as f64 / 2.0, y as f64 / 2.0);
        }
    }
    out
}

fn downsample2(src: &Buf2D) -> Buf2D {
    let mut out = Buf2D::new(src.w / 2, src.h / 2);
    for y in 0..out.h {
        for x in 0..out.w {
            out.data[y * out.w + x] = src.at(x * 2, y * 2);
        }
    }
    out
}

struct Octave {
    gauss: Vec<Buf2D>,
    dog: Vec<Buf2D>,
}

/// Gaussian scale pyramid. Octave 0 is the input upsampled 2×; octave `o`
/// has resolution `2·w / 2^o`.
pub struct Pyramid {
    octaves: Vec<Octave>,
    base_width: usize,
    base_height: usize,
}

impl Pyramid {
    /// Builds the pyramid for a grayscale image of at least 16×16 pixels.
    pub fn build(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::InvalidInput(
                "pyramid needs a grayscale image".into(),
            ));
        }
        if img.width() < 16 || img.height() < 16 {
            return Err(Error::InvalidInput(format!(
                "image {}x{} is smaller than 16x16",
                img.width(),
                img.height()
            )));
        }
        let min_dim = img.width().min(img.height());
        let n_octaves = ((min_dim as f64).log2().floor() as usize).saturating_sub(3).max(1);

        let src = Buf2D {
            w: img.width(),
            h: img.height(),
            data: img.pixels().to_vec(),
        };
        // Upsampling doubles the assumed input blur; lift it to SIGMA0.
        let up = upsample2(&src);
        let delta = (SIGMA0 * SIGMA0 - (2.0 * INIT_BLUR).powi(2)).max(0.0).sqrt();
        let mut base = gaussian_blur(&up, delta);

        let mut octaves = Vec::with_capacity(n_octaves);
        for _ in 0..n_octaves {
            let mut gauss = Vec::with_capacity(SCALES + 3);
            gauss.push(base.clone());
            for s in 1..SCALES + 3 {
                let prev = sigma_in_octave(s - 1);
                let next = sigma_in_octave(s);
                let delta = (next * next - prev * prev).sqrt();
                let blurred = gaussian_blur(&gauss[s - 1], delta);
                gauss.push(blurred);
            }
            let dog = (0..SCALES + 2)
                .map(|s| {
                    let mut d = Buf2D::new(gauss[s].w, gauss[s].h);
                    for i in 0..d.data.len() {
                        d.data[i] = gauss[s + 1].data[i] - gauss[s].data[i];
                    }
                    d
                })
                .collect();
            base = downsample2(&gauss[SCALES]);
            octaves.push(Octave { gauss, dog });
        }
        Ok(Self {
            octaves,
            base_width: img.width(),
            base_height: img.height(),
        })
    }

    pub fn octave_count(&self) -> usize {
        self.octaves.len()
    }

    pub fn base_dims(&self) -> (usize, usize) {
        (self.base_width, self.base_height)
    }

    /// Blur of Gaussian level `(octave, s)` in base-image pixels.
    pub fn sigma_of(&self, octave: usize, s: usize) -> f64 {
        sigma_in_octave(s) * octave_factor(octave)
    }

    /// Gaussian level whose blur is nearest `sigma` (log-scale distance);
    /// ties take the smaller octave, then the smaller level.
    fn nearest_level(&self, sigma: f64) -> (usize, usize) {
        let target = sigma.max(1e-6).ln();
        let mut best = (0, 0);
        let mut best_d = f64::INFINITY;
        for o in 0..self.octaves.len() {
            for s in 0..SCALES + 3 {
                let d = (self.sigma_of(o, s).ln() - target).abs();
                if d < best_d {
                    best_d = d;
                    best = (o, s);
                }
            }
        }
        best
    }
}

/// Base-image pixels per octave pixel.
#[inline]
fn octave_factor(octave: usize) -> f64 {
    2f64.powi(octave as i32 - 1)
}

#[inline]
fn sigma_in_octave(s: usize) -> f64 {
    SIGMA0 * 2f64.powf(s as f64 / SCALES as f64)
}

/// Luma conversion (0.299, 0.587, 0.114) for 3-channel input; 1-channel
/// input passes through unchanged.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => {
            let mut pixels = Vec::with_capacity(img.width() * img.height());
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let v = 0.299 * img.get(x, y, 0)
                        + 0.587 * img.get(x, y, 1)
                        + 0.114 * img.get(x, y, 2);
                    pixels.push(v.clamp(0.0, 1.0));
                }
            }
            Image::new(img.width(), img.height(), 1, pixels)
        }
        c => Err(Error::InvalidInput(format!(
            "cannot convert {c}-channel image to grayscale"
        ))),
    }
}

/// Detects DoG extrema in `img` (grayscale, ≥ 16×16).
pub fn detect_keypoints(img: &Image, params: &DetectParams) -> Result<Vec<Keypoint>> {
    let pyr = Pyramid::build(img)?;
    Ok(detect_on(&pyr, params))
}

/// Detection on an already-built pyramid. Output is ordered by (octave,
/// scale, y, x); when more than `max_keypoints` survive, the strongest are
/// kept (response ties broken by (y, x) order) and the canonical order is
/// restored afterwards.
pub fn detect_on(pyr: &Pyramid, params: &DetectParams) -> Vec<Keypoint> {
    let mut kps = Vec::new();
    for (o, oct) in pyr.octaves.iter().enumerate() {
        let f = octave_factor(o);
        for s in 1..=SCALES {
            let below = &oct.dog[s - 1];
            let here = &oct.dog[s];
            let above = &oct.dog[s + 1];
            for y in 1..here.h - 1 {
                for x in 1..here.w - 1 {
                    let v = here.at(x, y);
                    if !is_extremum(below, here, above, x, y) {
                        continue;
                    }
                    if v.abs() < params.contrast_threshold {
                        continue;
                    }
                    if fails_edge_test(here, x, y, params.edge_ratio) {
                        continue;
                    }
                    let orientation =
                        dominant_orientation(&oct.gauss[s], x, y, sigma_in_octave(s));
                    kps.push(Keypoint {
                        x: x as f64 * f,
                        y: y as f64 * f,
                        scale: pyr.sigma_of(o, s),
                        orientation,
                        response: v.abs(),
                        octave: o,
                    });
                }
            }
        }
    }
    if kps.len() > params.max_keypoints {
        kps.sort_by(|a, b| {
            b.response
                .partial_cmp(&a.response)
                .unwrap()
                .then(a.y.partial_cmp(&b.y).unwrap())
                .then(a.x.partial_cmp(&b.x).unwrap())
        });
        kps.truncate(params.max_keypoints);
        kps.sort_by(|a, b| {
            a.octave
                .cmp(&b.octave)
                .then(a.scale.partial_cmp(&b.scale).unwrap())
                .then(a.y.partial_cmp(&b.y).unwrap())
                .then(a.x.partial_cmp(&b.x).unwrap())
        });
    }
    kps
}

/// Strictly greater (or strictly smaller) than all 26 scale-space neighbors.
fn is_extremum(below: &Buf2D, here: &Buf2D, above: &Buf2D, x: usize, y: usize) -> bool {
    let v = here.at(x, y);
    let mut max_n = f64::NEG_INFINITY;
    let mut min_n = f64::INFINITY;
    for layer in [below, here, above] {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if std::ptr::eq(layer, here) && dx == 0 && dy == 0 {
                    continue;
                }
                let n = layer.at((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                max_n = max_n.max(n);
                min_n = min_n.min(n);
            }
        }
    }
    v > max_n || v < min_n
}

/// Principal-curvature ratio test on the 2×2 spatial Hessian of the DoG.
fn fails_edge_test(d: &Buf2D, x: usize, y: usize, edge_ratio: f64) -> bool {
    let v = d.at(x, y);
    let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
    let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
    let dxy = (d.at(x + 1, y + 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1)
        + d.at(x - 1, y - 1))
        / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det <= 0.0 || tr * tr * edge_ratio >= det * (edge_ratio + 1.0) * (edge_ratio + 1.0)
}

/// 36-bin Gaussian-weighted gradient-orientation histogram around `(x, y)`
/// with parabolic peak refinement. Flat neighborhoods return 0.
fn dominant_orientation(g: &Buf2D, x: usize, y: usize, sigma_oct: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let radius = (3.0 * 1.5 * sigma_oct).round() as isize;
    let wsigma = 1.5 * sigma_oct;
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let px = x as isize + dx;
            let py = y as isize + dy;
            if px < 1 || py < 1 || px as usize >= g.w - 1 || py as usize >= g.h - 1 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            let gx = g.at(px + 1, py) - g.at(px - 1, py);
            let gy = g.at(px, py + 1) - g.at(px, py - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ang = gy.atan2(gx).rem_euclid(two_pi);
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * wsigma * wsigma)).exp();
            let bin = ((ang / two_pi) * ORI_BINS as f64).round() as usize % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    // Circular [1, 4, 6, 4, 1]/16 smoothing.
    let mut smoothed = [0.0f64; ORI_BINS];
    for (b, out) in smoothed.iter_mut().enumerate() {
        *out = (hist[(b + ORI_BINS - 2) % ORI_BINS]
            + 4.0 * hist[(b + ORI_BINS - 1) % ORI_BINS]
            + 6.0 * hist[b]
            + 4.0 * hist[(b + 1) % ORI_BINS]
            + hist[(b + 2) % ORI_BINS])
            / 16.0;
    }
    let mut peak_bin = 0;
    for b in 1..ORI_BINS {
        if smoothed[b] > smoothed[peak_bin] {
            peak_bin = b;
        }
    }
    if smoothed[peak_bin] == 0.0 {
        return 0.0;
    }
    let l = smoothed[(peak_bin + ORI_BINS - 1) % ORI_BINS];
    let c = smoothed[peak_bin];
    let r = smoothed[(peak_bin + 1) % ORI_BINS];
    let denom = l - 2.0 * c + r;
    let delta = if denom.abs() < 1e-12 {
        0.0
    } else {
        0.5 * (l - r) / denom
    };
    ((peak_bin as f64 + delta) * two_pi / ORI_BINS as f64).rem_euclid(two_pi)
}

/// 32×32 canonical-orientation intensity patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Index of the keypoint the patch was cut for.
    pub keypoint: usize,
    data: Vec<f64>,
}

impl Patch {
    pub const SIDE: usize = 32;

    pub fn from_values(keypoint: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::SIDE * Self::SIDE {
            return Err(Error::DimensionMismatch(format!(
                "patch needs {} values, got {}",
                Self::SIDE * Self::SIDE,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "patch values must be finite and in [0, 1]".into(),
            ));
        }
        Ok(Self { keypoint, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * Self::SIDE + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Cuts the patch for `kp`: a 64×64 window at the pyramid level nearest the
/// keypoint scale, sampled on a grid rotated by the keypoint orientation
/// (so the patch itself is de-rotated), then 2×2-averaged down to 32×32.
/// Samples outside the level mirror-pad, so any center position is valid.
pub fn extract_patch(pyr: &Pyramid, kp: &Keypoint, keypoint_id: usize) -> Patch {
    let (o, s) = pyr.nearest_level(kp.scale);
    let g = &pyr.octaves[o].gauss[s];
    let f = octave_factor(o);
    let cx = kp.x / f;
    let cy = kp.y / f;
    let (sin_t, cos_t) = kp.orientation.sin_cos();
    let mut big = vec![0.0f64; 64 * 64];
    for v in 0..64 {
        for u in 0..64 {
            let du = u as f64 - 31.5;
            let dv = v as f64 - 31.5;
            let sx = cx + cos_t * du - sin_t * dv;
            let sy = cy + sin_t * du + cos_t * dv;
            big[v * 64 + u] = g.sample(sx, sy);
        }
    }
    let mut data = vec![0.0f64; 32 * 32];
    for y in 0..32 {
        for x in 0..32 {
            let sum = big[(2 * y) * 64 + 2 * x]
                + big[(2 * y) * 64 + 2 * x + 1]
                + big[(2 * y + 1) * 64 + 2 * x]
                + big[(2 * y + 1) * 64 + 2 * x + 1];
            data[y * 32 + x] = (sum / 4.0).clamp(0.0, 1.0);
        }
    }
    Patch {
        keypoint: keypoint_id,
        data,
    }
}

/// Patches for all keypoints, ids assigned by list position.
pub fn extract_patches(pyr: &Pyramid, kps: &[Keypoint]) -> Vec<Patch> {
    kps.iter()
        .enumerate()
        .map(|(i, kp)| extract_patch(pyr, kp, i))
        .collect()
}
