use crate::cli::EvalArgs;
use crate::util::{infer_extent, read_homography_file, resolve, write_json_atomic};
use gims::formats::{read_gimk, read_matches};
use gims::geometry::{auc, corner_error, ransac_homography, NoEstimate, RansacConfig};
use gims::{Error, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
struct PairSpec {
    matches: PathBuf,
    kp_a: PathBuf,
    kp_b: PathBuf,
    homography: PathBuf,
    #[serde(default)]
    width: Option<f64>,
    #[serde(default)]
    height: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct EvalManifest {
    pairs: Vec<PairSpec>,
}

fn collect_specs(a: &EvalArgs) -> Result<Vec<PairSpec>> {
    if let Some(manifest_path) = &a.pairs {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: EvalManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(manifest
            .pairs
            .into_iter()
            .map(|s| PairSpec {
                matches: resolve(&base, &s.matches),
                kp_a: resolve(&base, &s.kp_a),
                kp_b: resolve(&base, &s.kp_b),
                homography: resolve(&base, &s.homography),
                ..s
            })
            .collect())
    } else {
        match (&a.matches, &a.kp_a, &a.kp_b, &a.homography) {
            (Some(m), Some(ka), Some(kb), Some(h)) => Ok(vec![PairSpec {
                matches: m.clone(),
                kp_a: ka.clone(),
                kp_b: kb.clone(),
                homography: h.clone(),
                width: a.width,
                height: a.height,
            }]),
            _ => Err(Error::InvalidInput(
                "eval needs either --pairs or all of --matches/--kp-a/--kp-b/--homography".into(),
            )),
        }
    }
}

pub fn run(a: EvalArgs) -> Result<()> {
    let specs = collect_specs(&a)?;
    if specs.is_empty() {
        return Err(Error::InvalidInput("no pairs to evaluate".into()));
    }
    let ransac = RansacConfig {
        max_iters: a.ransac_iters,
        inlier_thr: a.ransac_thresh,
        seed: a.seed,
        confidence: a.ransac_conf,
    };

    let mut rows = Vec::with_capacity(specs.len());
    let mut errors: Vec<Option<f64>> = Vec::with_capacity(specs.len());
    let mut match_total = 0usize;
    for spec in &specs {
        let ms = read_matches(&spec.matches)?;
        let kp_a = read_gimk(&spec.kp_a)?;
        let kp_b = read_gimk(&spec.kp_b)?;
        for p in &ms.pairs {
            if p.a >= kp_a.len() || p.b >= kp_b.len() {
                return Err(Error::InvalidInput(format!(
                    "{}: match ({}, {}) is out of range for {}×{} keypoints",
                    spec.matches.display(),
                    p.a,
                    p.b,
                    kp_a.len(),
                    kp_b.len()
                )));
            }
        }
        let (h_true, sidecar_dims) = read_homography_file(&spec.homography)?;
        let (w, h) = spec
            .width
            .zip(spec.height)
            .or(sidecar_dims)
            .unwrap_or_else(|| infer_extent(&kp_a));

        let (err, inliers) = if ms.pairs.len() >= 4 {
            let src: Vec<_> = ms.pairs.iter().map(|p| (kp_a[p.a].x, kp_a[p.a].y)).collect();
            let dst: Vec<_> = ms.pairs.iter().map(|p| (kp_b[p.b].x, kp_b[p.b].y)).collect();
            match ransac_homography(&src, &dst, &ransac) {
                Ok(res) => match corner_error(&res.homography, &h_true, w, h) {
                    Ok(e) => (Some(e), res.inliers.iter().filter(|&&x| x).count()),
                    Err(_) => (None, 0),
                },
                Err(_) => (None, 0),
            }
        } else {
            (None, 0)
        };
        match_total += ms.pairs.len();
        errors.push(err);
        rows.push(serde_json::json!({
            "matches": ms.pairs.len(),
            "corner_error": err,
            "inliers": inliers,
        }));
    }

    let mode = if a.drop_failed {
        NoEstimate::Drop
    } else {
        NoEstimate::AsInfinite
    };
    let report = serde_json::json!({
        "pairs": rows,
        "amn": match_total as f64 / specs.len() as f64,
        "auc5": auc(&errors, 5.0, mode)?,
        "auc10": auc(&errors, 10.0, mode)?,
        "auc25": auc(&errors, 25.0, mode)?,
        "drop_mode": if a.drop_failed { "drop" } else { "infinite" },
    });
    if let Some(path) = &a.output {
        write_json_atomic(path, &report)?;
    }
    println!("{report}");
    Ok(())
}
