//! Shared plumbing: image IO, sidecar JSON files, dataset manifests.

use gims::core::{DescriptorSet, Homography, Image, Keypoint};
use gims::formats::atomic_write;
use gims::{Error, Result};
use image::ImageEncoder;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Loads an image as single-channel grayscale with values in [0, 1].
pub fn load_gray(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read image {}: {e}", path.display())))?;
    let gray = img.to_luma32f();
    let (w, h) = gray.dimensions();
    let pixels: Vec<f64> = gray
        .into_raw()
        .into_iter()
        .map(|v| (v as f64).clamp(0.0, 1.0))
        .collect();
    Image::new(w as usize, h as usize, 1, pixels)
}

/// Writes a single-channel image as an 8-bit grayscale PNG (atomically).
pub fn save_gray_png(path: &Path, img: &Image) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::InvalidInput(
            "PNG export supports single-channel images only".into(),
        ));
    }
    let data: Vec<u8> = img
        .pixels()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(
            &data,
            img.width() as u32,
            img.height() as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Format(format!("PNG encoding failed: {e}")))?;
    atomic_write(path, &buf)
}

/// Parses a "WxH" extent such as "640x480".
pub fn parse_size(s: &str) -> Result<(f64, f64)> {
    let err = || Error::InvalidInput(format!("expected WxH (e.g. 640x480), got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let w: f64 = w.trim().parse().map_err(|_| err())?;
    let h: f64 = h.trim().parse().map_err(|_| err())?;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(err());
    }
    Ok((w, h))
}

/// Positional-normalization extent for a keypoint set when the caller did
/// not supply one: the smallest axis-aligned box from the origin that
/// contains every keypoint.
pub fn infer_extent(kps: &[Keypoint]) -> (f64, f64) {
    let mut w: f64 = 1.0;
    let mut h: f64 = 1.0;
    for k in kps {
        w = w.max(k.x.ceil() + 1.0);
        h = h.max(k.y.ceil() + 1.0);
    }
    (w, h)
}

/// Descriptor rows as a dense matrix.
pub fn desc_to_array(d: &DescriptorSet) -> Array2<f64> {
    Array2::from_shape_vec((d.count(), d.dim()), d.data().to_vec())
        .expect("descriptor storage is rectangular by construction")
}

/// Encoded features carry norms of roughly √dim at initialization, and the
/// default confidence floor is calibrated for dot products at that scale.
/// The pass-through configuration skips the encoder, so its unit-norm
/// descriptors must be rescaled to the same operating temperature; this
/// changes no argmax, only the confidence calibration.
pub fn calibration_scale(dim: usize) -> f64 {
    (dim as f64).sqrt()
}

/// One generated pair: a source image, its warped copy, and the
/// ground-truth homography between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub source: PathBuf,
    pub warped: PathBuf,
    pub homography: [[f64; 3]; 3],
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl PairEntry {
    pub fn homography(&self) -> Result<Homography> {
        Homography::new(self.homography)
    }
}

/// Dataset manifest written by `synth` and consumed by `sweep`/`train`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<PairEntry>,
}

/// Resolves `p` relative to `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("JSON encoding failed: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Reads a ground-truth homography file: either a bare JSON 3×3 array or
/// an object with a "homography" field and optional "width"/"height"
/// (the sidecars written by `synth` have this shape).
pub fn read_homography_file(path: &Path) -> Result<(Homography, Option<(f64, f64)>)> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (matrix_value, dims) = match &value {
        serde_json::Value::Array(_) => (value.clone(), None),
        serde_json::Value::Object(map) => {
            let m = map.get("homography").ok_or_else(|| {
                Error::Format(format!("{}: missing \"homography\" field", path.display()))
            })?;
            let dims = match (
                map.get("width").and_then(|v| v.as_f64()),
                map.get("height").and_then(|v| v.as_f64()),
            ) {
                (Some(w), Some(h)) => Some((w, h)),
                _ => None,
            };
            (m.clone(), dims)
        }
        _ => {
            return Err(Error::Format(format!(
                "{}: expected a 3×3 array or an object",
                path.display()
            )))
        }
    };
    let m: [[f64; 3]; 3] = serde_json::from_value(matrix_value)
        .map_err(|e| Error::Format(format!("{}: homography is not 3×3: {e}", path.display())))?;
    Ok((Homography::new(m)?, dims))
}
