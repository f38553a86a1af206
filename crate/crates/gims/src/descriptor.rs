//! Patch descriptors.
//!
//! Two built-in providers (a SIFT-style 128-bin gradient histogram and the
//! raw normalized patch) plus an external path that serves precomputed
//! descriptors from a file, standing in for a learned network.

use crate::core::DescriptorSet;
use crate::imagekp::Patch;
use crate::{Error, Result};

/// Where descriptors come from and how wide they are.
#[derive(Debug, Clone)]
pub enum DescriptorProvider {
    /// 4×4 spatial cells × 8 orientation bins, 128-D.
    Hist128,
    /// Mean-subtracted, L2-normalized flattened patch, 1024-D.
    RawPatch,
    /// Precomputed rows loaded from a descriptor file; must match the patch
    /// count.
    External(DescriptorSet),
}

impl DescriptorProvider {
    pub fn dim(&self) -> usize {
        match self {
            Self::Hist128 => 128,
            Self::RawPatch => 1024,
            Self::External(set) => set.dim(),
        }
    }
}

/// Describes every patch; row order equals patch order.
pub fn describe(patches: &[Patch], provider: &DescriptorProvider) -> Result<DescriptorSet> {
    match provider {
        DescriptorProvider::Hist128 => {
            let mut data = Vec::with_capacity(patches.len() * 128);
            for p in patches {
                data.extend_from_slice(&hist128(p));
            }
            DescriptorSet::new(patches.len(), 128, data)
        }
        DescriptorProvider::RawPatch => {
            let mut data = Vec::with_capacity(patches.len() * 1024);
            for p in patches {
                data.extend_from_slice(&rawpatch(p));
            }
            DescriptorSet::new(patches.len(), 1024, data)
        }
        DescriptorProvider::External(set) => {
            if set.count() != patches.len() {
                return Err(Error::InvalidInput(format!(
                    "external descriptors hold {} rows but {} patches were given",
                    set.count(),
                    patches.len()
                )));
            }
            Ok(set.clone())
        }
    }
}

/// Gradient histogram after L2-normalization and the 0.2 clamp, but before
/// the final re-normalization. Exposed so the clamp invariant is testable.
pub fn hist128_prenorm(patch: &Patch) -> [f64; 128] {
    let mut hist = accumulate_hist(patch);
    let norm = l2(&hist);
    if norm == 0.0 {
        return hist;
    }
    for v in &mut hist {
        *v = (*v / norm).min(0.2);
    }
    hist
}

/// Final 128-D descriptor: normalize, clamp at 0.2, re-normalize. A patch
/// with no gradients yields the zero vector.
pub fn hist128(patch: &Patch) -> [f64; 128] {
    let mut hist = hist128_prenorm(patch);
    let norm = l2(&hist);
    if norm > 0.0 {
        for v in &mut hist {
            *v /= norm;
        }
    }
    hist
}

/// Trilinear accumulation of gradient magnitude into 4×4 spatial cells ×
/// 8 orientation bins. Gradients are central differences over the interior
/// of the 32×32 patch.
fn accumulate_hist(patch: &Patch) -> [f64; 128] {
    let two_pi = std::f64::consts::TAU;
    let mut hist = [0.0f64; 128];
    for y in 1..Patch::SIDE - 1 {
        for x in 1..Patch::SIDE - 1 {
            let gx = patch.get(x + 1, y) - patch.get(x - 1, y);
            let gy = patch.get(x, y + 1) - patch.get(x, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ang = gy.atan2(gx).rem_euclid(two_pi);

            // Continuous cell coordinates: cell centers sit at pixel columns
            // 3.5, 11.5, 19.5, 27.5.
            let u = (x as f64 + 0.5) / 8.0 - 0.5;
            let v = (y as f64 + 0.5) / 8.0 - 0.5;
            let ob = ang / two_pi * 8.0;

            let u0 = u.floor();
            let v0 = v.floor();
            let o0 = ob.floor();
            let fu = u - u0;
            let fv = v - v0;
            let fo = ob - o0;

            for (du, wu) in [(0i64, 1.0 - fu), (1, fu)] {
                let cu = u0 as i64 + du;
                if !(0..4).contains(&cu) || wu == 0.0 {
                    continue;
                }
                for (dv, wv) in [(0i64, 1.0 - fv), (1, fv)] {
                    let cv = v0 as i64 + dv;
                    if !(0..4).contains(&cv) || wv == 0.0 {
                        continue;
                    }
                    for (doo, wo) in [(0i64, 1.0 - fo), (1, fo)] {
                        let co = (o0 as i64 + doo).rem_euclid(8) as usize;
                        hist[(cv as usize * 4 + cu as usize) * 8 + co] += mag * wu * wv * wo;
                    }
                }
            }
        }
    }
    hist
}

/// Flattened patch, mean-subtracted and L2-normalized; constant patches
/// yield the zero vector.
pub fn rawpatch(patch: &Patch) -> Vec<f64> {
    let mean = patch.data().iter().sum::<f64>() / patch.data().len() as f64;
    let mut out: Vec<f64> = patch.data().iter().map(|v| v - mean).collect();
    let norm = l2(&out);
    if norm > 0.0 {
        for v in &mut out {
            *v /= norm;
        }
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn patch_from(mut f: impl FnMut(usize, usize) -> f64) -> Patch {
        let mut data = Vec::with_capacity(1024);
        for y in 0..32 {
            for x in 0..32 {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Patch::from_values(0, data).unwrap()
    }

    fn random_patch(seed: u64) -> Patch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        patch_from(|_, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn constant_patch_is_degenerate() {
        let p = patch_from(|_, _| 0.5);
        let set = describe(std::slice::from_ref(&p), &DescriptorProvider::Hist128).unwrap();
        assert!(set.is_degenerate(0));
        assert!(set.row(0).iter().all(|&v| v == 0.0));

        let raw = describe(std::slice::from_ref(&p), &DescriptorProvider::RawPatch).unwrap();
        assert!(raw.is_degenerate(0));
    }

    #[test]
    fn rows_are_unit_norm() {
        let p = random_patch(5);
        for provider in [DescriptorProvider::Hist128, DescriptorProvider::RawPatch] {
            let set = describe(std::slice::from_ref(&p), &provider).unwrap();
            let norm = l2(set.row(0));
            assert!((norm - 1.0).abs() < 1e-9, "{provider:?}: norm {norm}");
            assert_eq!(set.dim(), provider.dim());
        }
    }

    #[test]
    fn vertical_step_edge_mass_lands_in_horizontal_bins() {
        let p = patch_from(|x, _| if x < 16 { 0.2 } else { 0.8 });
        let d = hist128(&p);
        let total: f64 = d.iter().sum();
        assert!(total > 0.0);
        // Angle-0 and angle-π gradients live in orientation bins 0 and 4.
        let horizontal: f64 = (0..16).map(|cell| d[cell * 8] + d[cell * 8 + 4]).sum();
        assert!(
            horizontal >= 0.9 * total,
            "horizontal share {}",
            horizontal / total
        );
    }

    #[test]
    fn clamp_holds_before_renormalization() {
        // A patch with one dominant gradient concentrates mass heavily; the
        // clamp must still cap every entry at 0.2.
        let p = patch_from(|x, _| if x < 16 { 0.0 } else { 1.0 });
        let pre = hist128_prenorm(&p);
        let max = pre.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 0.2 + 1e-12, "max pre-renorm entry {max}");
        assert!(max > 0.19, "clamp should actually bind here");
    }

    #[test]
    fn quarter_rotation_permutes_bins() {
        let p = random_patch(9);
        // 90° counter-clockwise grid rotation: rotated (x, y) reads original
        // (y, 31 − x).
        let rot = patch_from(|x, y| p.get(y, 31 - x));
        let d = hist128(&p);
        let dr = hist128(&rot);
        for cy in 0..4 {
            for cx in 0..4 {
                for o in 0..8 {
                    let idx_rot = (cy * 4 + cx) * 8 + o;
                    let idx_orig = ((3 - cx) * 4 + cy) * 8 + (o + 6) % 8;
                    let diff = (dr[idx_rot] - d[idx_orig]).abs();
                    assert!(
                        diff < 1e-12,
                        "bin ({cy},{cx},{o}): rotated {} vs original {}",
                        dr[idx_rot],
                        d[idx_orig]
                    );
                }
            }
        }
    }

    #[test]
    fn external_provider_checks_count() {
        let set = DescriptorSet::new(2, 4, vec![0.1; 8]).unwrap();
        let p = random_patch(1);
        let err = describe(
            std::slice::from_ref(&p),
            &DescriptorProvider::External(set.clone()),
        );
        assert!(err.is_err());
        let ok = describe(
            &[random_patch(1), random_patch(2)],
            &DescriptorProvider::External(set.clone()),
        )
        .unwrap();
        assert_eq!(ok, set);
    }
}
