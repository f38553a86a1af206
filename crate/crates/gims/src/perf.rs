//! Performance harness: per-stage latency breakdown of one matching run
//! and a scaling study of graph construction.
//!
//! Timing assertions live in an opt-in (`#[ignore]`) suite with generous
//! multiplicative slack, since absolute numbers vary by machine. The
//! non-ignored tests check structure only: stage presence, nonnegative
//! times, deterministic instance generation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agc::{build_agc, build_coarse, AgcParams};
use crate::core::{DescriptorSet, Graph, Image};
use crate::descriptor::{describe, DescriptorProvider};
use crate::encoder::{encode_pair, EncodeInput, ModelWeights};
use crate::geometry::{ransac_homography, RansacConfig};
use crate::imagekp::{detect_on, extract_patches, DetectParams, Pyramid};
use crate::matcher::{extract_matches, score_matrix, sinkhorn, DEFAULT_MIN_CONFIDENCE};
use crate::{Error, Result};

/// Pipeline stages in execution order. Short names follow the usual
/// latency-table convention: keypoint detection, patch generation,
/// descriptor generation, graph construction.
pub const STAGE_ORDER: [&str; 6] = ["KD", "PG", "DG", "GC", "Matching", "RANSAC"];

/// Wall time of one pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    /// One of [`STAGE_ORDER`].
    pub stage: String,
    pub seconds: f64,
    /// Stage workload: per-image element counts (pixels, keypoints,
    /// patches, vertices) or the match count for RANSAC.
    pub input_sizes: Vec<usize>,
}

/// Settings for [`profile_pipeline`].
#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub detect: DetectParams,
    /// `None` skips graph construction: matching then runs on edgeless
    /// graphs and the report has no GC row.
    pub graph: Option<AgcParams>,
    pub sinkhorn_iterations: usize,
    pub min_confidence: f64,
    pub ransac: RansacConfig,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            detect: DetectParams::default(),
            graph: Some(AgcParams::default()),
            sinkhorn_iterations: crate::matcher::SINKHORN_ITERATIONS,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            ransac: RansacConfig::default(),
        }
    }
}

struct SideArrays {
    descriptors: ndarray::Array2<f64>,
    graph: Graph,
    positions: Vec<(f64, f64)>,
    dims: (f64, f64),
}

/// Runs the full pipeline once on `(img_a, img_b)` under pass-through
/// (identity) weights and returns per-stage wall times, in execution
/// order. All real work happens inside some stage, so the rows sum to the
/// call's total wall time up to scaffolding noise.
pub fn profile_pipeline(
    img_a: &Image,
    img_b: &Image,
    cfg: &ProfileConfig,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();

    // KD: scale pyramid + detection.
    let started = Instant::now();
    let pyr_a = Pyramid::build(img_a)?;
    let kps_a = detect_on(&pyr_a, &cfg.detect);
    let pyr_b = Pyramid::build(img_b)?;
    let kps_b = detect_on(&pyr_b, &cfg.detect);
    rows.push(TimingRow {
        stage: "KD".into(),
        seconds: started.elapsed().as_secs_f64(),
        input_sizes: vec![
            img_a.width() * img_a.height(),
            img_b.width() * img_b.height(),
        ],
    });

    // PG: oriented patch extraction.
    let started = Instant::now();
    let patches_a = extract_patches(&pyr_a, &kps_a);
    let patches_b = extract_patches(&pyr_b, &kps_b);
    rows.push(TimingRow {
        stage: "PG".into(),
        seconds: started.elapsed().as_secs_f64(),
        input_sizes: vec![kps_a.len(), kps_b.len()],
    });

    // DG: descriptors.
    let started = Instant::now();
    let provider = DescriptorProvider::Hist128;
    let descs_a = describe(&patches_a, &provider)?;
    let descs_b = describe(&patches_b, &provider)?;
    rows.push(TimingRow {
        stage: "DG".into(),
        seconds: started.elapsed().as_secs_f64(),
        input_sizes: vec![patches_a.len(), patches_b.len()],
    });

    // GC: adaptive graph construction, including the vertex filtering it
    // implies for downstream arrays.
    let started = Instant::now();
    let to_side = |kps: &[crate::core::Keypoint],
                   descs: &DescriptorSet,
                   img: &Image,
                   graph_params: Option<&AgcParams>|
     -> Result<SideArrays> {
        let positions: Vec<(f64, f64)> = kps.iter().map(|k| (k.x, k.y)).collect();
        let (graph, kept_map) = match graph_params {
            Some(p) => {
                let (g, report) = build_agc(&positions, descs, p)?;
                (g, report.kept_map)
            }
            None => (
                Graph::new(positions.len(), Vec::new()),
                (0..positions.len()).map(Some).collect(),
            ),
        };
        let n = graph.vertex_count();
        let mut data = ndarray::Array2::zeros((n, descs.dim()));
        let mut kept_positions = vec![(0.0, 0.0); n];
        for (old, slot) in kept_map.iter().enumerate() {
            if let Some(new) = *slot {
                kept_positions[new] = positions[old];
                for (c, &v) in descs.row(old).iter().enumerate() {
                    data[[new, c]] = v;
                }
            }
        }
        Ok(SideArrays {
            descriptors: data,
            graph,
            positions: kept_positions,
            dims: (img.width() as f64, img.height() as f64),
        })
    };
    let side_a = to_side(&kps_a, &descs_a, img_a, cfg.graph.as_ref())?;
    let side_b = to_side(&kps_b, &descs_b, img_b, cfg.graph.as_ref())?;
    let gc_elapsed = started.elapsed().as_secs_f64();
    if cfg.graph.is_some() {
        rows.push(TimingRow {
            stage: "GC".into(),
            seconds: gc_elapsed,
            input_sizes: vec![kps_a.len(), kps_b.len()],
        });
    }

    // Matching: encode, score, Sinkhorn, extraction.
    let started = Instant::now();
    let weights = ModelWeights::identity(descs_a.dim(), 1);
    let (xa, xb) = encode_pair(
        &EncodeInput {
            features: side_a.descriptors.clone(),
            graph: &side_a.graph,
            positions: &side_a.positions,
            dims: side_a.dims,
        },
        &EncodeInput {
            features: side_b.descriptors.clone(),
            graph: &side_b.graph,
            positions: &side_b.positions,
            dims: side_b.dims,
        },
        &weights,
    )?;
    let score = score_matrix(&xa, &xb, weights.dustbin)?;
    let assignment = sinkhorn(&score, cfg.sinkhorn_iterations);
    let matches = extract_matches(&assignment, cfg.min_confidence);
    rows.push(TimingRow {
        stage: "Matching".into(),
        seconds: started.elapsed().as_secs_f64(),
        input_sizes: vec![side_a.graph.vertex_count(), side_b.graph.vertex_count()],
    });

    // RANSAC: timed even when it fails for lack of matches.
    let started = Instant::now();
    let src: Vec<(f64, f64)> = matches.pairs.iter().map(|m| side_a.positions[m.a]).collect();
    let dst: Vec<(f64, f64)> = matches.pairs.iter().map(|m| side_b.positions[m.b]).collect();
    let _ = ransac_homography(&src, &dst, &cfg.ransac);
    rows.push(TimingRow {
        stage: "RANSAC".into(),
        seconds: started.elapsed().as_secs_f64(),
        input_sizes: vec![matches.pairs.len()],
    });

    Ok(rows)
}

/// One scaling-study measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    /// Coarse construction (radius candidates + similarity filter) only.
    pub coarse_seconds: f64,
    /// Full adaptive construction including repair and stitching.
    pub total_seconds: f64,
}

/// Scaling-study result: per-size timings and the least-squares slope of
/// log(coarse time) against log(n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// `None` with fewer than two measurements.
    pub exponent: Option<f64>,
}

impl ScalingStudy {
    /// CSV rows `n,coarse_seconds,total_seconds`; an empty study yields an
    /// empty string.
    pub fn to_csv(&self) -> String {
        if self.rows.is_empty() {
            return String::new();
        }
        let mut out = String::from("n,coarse_seconds,total_seconds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.n, r.coarse_seconds, r.total_seconds));
        }
        out
    }
}

/// Deterministic instance at fixed density: `n` points uniform in a square
/// whose area grows with `n` (so radius-candidate counts stay O(1) per
/// vertex), with random unit descriptors.
pub fn scaling_instance(n: usize, seed: u64) -> (Vec<(f64, f64)>, DescriptorSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    // ~25 px² per point keeps several candidates inside the default β=15.
    let side = (n as f64 * 25.0).sqrt().max(1.0);
    let positions: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
        .collect();
    let dim = 16;
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        data.extend(v.iter().map(|x| x / norm));
    }
    (
        positions,
        DescriptorSet::new(n, dim, data).expect("generated data is consistent"),
    )
}

/// Times AGC construction over synthetic instances of the given sizes.
/// Instances are seed-deterministic; times of course are not.
pub fn scaling_study(n_list: &[usize], seed: u64) -> Result<ScalingStudy> {
    if n_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("sizes must be ascending".into()));
    }
    let params = AgcParams::default();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (positions, descriptors) = scaling_instance(n, seed);
        let started = Instant::now();
        build_coarse(&positions, &descriptors, &params)?;
        let coarse_seconds = started.elapsed().as_secs_f64();
        let started = Instant::now();
        build_agc(&positions, &descriptors, &params)?;
        let total_seconds = started.elapsed().as_secs_f64();
        rows.push(ScalingRow {
            n,
            coarse_seconds,
            total_seconds,
        });
    }
    let exponent = fit_exponent(
        &rows.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.coarse_seconds).collect::<Vec<_>>(),
    );
    Ok(ScalingStudy { rows, exponent })
}

/// Least-squares slope of log y against log x; `None` below two points or
/// on nonpositive values.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
