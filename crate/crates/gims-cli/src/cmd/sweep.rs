use crate::cli::SweepArgs;
use crate::cmd::detect::provider_of;
use crate::util::{calibration_scale, load_gray, read_manifest, resolve};
use gims::agc::{build_agc, AgcParams};
use gims::core::{DescriptorSet, Homography, Image};
use gims::descriptor::describe;
use gims::encoder::{encode_pair, EncodeInput, ModelWeights};
use gims::formats::{atomic_write, read_gimw};
use gims::geometry::apply_homography;
use gims::imagekp::{detect_on, extract_patches, DetectParams, Pyramid};
use gims::matcher::match_pair;
use gims::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use std::time::Instant;

struct CachedSide {
    positions: Vec<(f64, f64)>,
    descs: DescriptorSet,
    dims: (f64, f64),
}

struct CachedPair {
    a: CachedSide,
    b: CachedSide,
    h: Homography,
}

fn cache_side(img: &Image, detect: &DetectParams, provider: &gims::descriptor::DescriptorProvider) -> Result<CachedSide> {
    let pyr = Pyramid::build(img)?;
    let kps = detect_on(&pyr, detect);
    let patches = extract_patches(&pyr, &kps);
    let descs = describe(&patches, provider)?;
    Ok(CachedSide {
        positions: kps.iter().map(|k| (k.x, k.y)).collect(),
        descs,
        dims: (img.width() as f64, img.height() as f64),
    })
}

/// Graph + filtered data for one side under one parameter cell.
fn filtered_inputs(
    side: &CachedSide,
    params: &AgcParams,
    scale: f64,
) -> Result<(gims::core::Graph, Vec<(f64, f64)>, Array2<f64>)> {
    let (graph, report) = build_agc(&side.positions, &side.descs, params)?;
    let mut positions = Vec::with_capacity(graph.vertex_count());
    let mut data = Vec::with_capacity(graph.vertex_count() * side.descs.dim());
    for (old, new) in report.kept_map.iter().enumerate() {
        if new.is_some() {
            positions.push(side.positions[old]);
            data.extend_from_slice(side.descs.row(old));
        }
    }
    let features = Array2::from_shape_vec((graph.vertex_count(), side.descs.dim()), data)
        .expect("kept rows match kept vertex count")
        * scale;
    Ok((graph, positions, features))
}

fn eval_cell(
    pair: &CachedPair,
    params: &AgcParams,
    weights: &ModelWeights,
    scale: f64,
    a: &SweepArgs,
) -> Result<(usize, usize)> {
    let (graph_a, pos_a, feat_a) = filtered_inputs(&pair.a, params, scale)?;
    let (graph_b, pos_b, feat_b) = filtered_inputs(&pair.b, params, scale)?;
    let input_a = EncodeInput {
        features: feat_a,
        graph: &graph_a,
        positions: &pos_a,
        dims: pair.a.dims,
    };
    let input_b = EncodeInput {
        features: feat_b,
        graph: &graph_b,
        positions: &pos_b,
        dims: pair.b.dims,
    };
    let (xa, xb) = encode_pair(&input_a, &input_b, weights)?;
    let (matches, _) = match_pair(&xa, &xb, weights.dustbin, a.sinkhorn_iters, a.min_conf)?;
    let mut correct = 0;
    for m in &matches.pairs {
        if let Ok(proj) = apply_homography(&pair.h, pos_a[m.a]) {
            let q = pos_b[m.b];
            let d = ((proj.0 - q.0).powi(2) + (proj.1 - q.1).powi(2)).sqrt();
            if d < a.epsilon_gt {
                correct += 1;
            }
        }
    }
    Ok((matches.pairs.len(), correct))
}

pub fn run(a: SweepArgs) -> Result<()> {
    let (manifest, base) = read_manifest(&a.pairs)?;
    if manifest.pairs.is_empty() {
        return Err(Error::InvalidInput("manifest has no pairs".into()));
    }
    let provider = provider_of(a.provider);
    let detect = DetectParams {
        max_keypoints: a.max_kp,
        ..DetectParams::default()
    };
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for entry in &manifest.pairs {
        let src = load_gray(&resolve(&base, &entry.source))?;
        let wrp = load_gray(&resolve(&base, &entry.warped))?;
        pairs.push(CachedPair {
            a: cache_side(&src, &detect, &provider)?,
            b: cache_side(&wrp, &detect, &provider)?,
            h: entry.homography()?,
        });
    }
    let dim = pairs[0].a.descs.dim();
    let (weights, scale) = match &a.weights {
        Some(path) => {
            let w = read_gimw(path)?;
            if w.dim != dim {
                return Err(Error::DimensionMismatch(format!(
                    "weights expect {}-D features but descriptors are {dim}-D",
                    w.dim
                )));
            }
            (w, 1.0)
        }
        None => (ModelWeights::identity(dim, 1), calibration_scale(dim)),
    };

    let mut cells = Vec::new();
    for &beta in &a.beta {
        for &alpha in &a.alpha {
            for &theta in &a.theta {
                cells.push((beta, alpha, theta));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    let rows: Vec<String> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(beta, alpha, theta)| {
                let params = AgcParams {
                    beta,
                    alpha,
                    theta,
                    gamma_over_all_pairs: false,
                };
                let started = Instant::now();
                let mut matches_total = 0;
                let mut correct_total = 0;
                for pair in &pairs {
                    match eval_cell(pair, &params, &weights, scale, &a) {
                        Ok((m, c)) => {
                            matches_total += m;
                            correct_total += c;
                        }
                        Err(e) => eprintln!(
                            "warning: pair skipped at ({beta}, {alpha}, {theta}): {e}"
                        ),
                    }
                }
                format!(
                    "{beta},{alpha},{theta},{matches_total},{correct_total},{:.6}",
                    started.elapsed().as_secs_f64()
                )
            })
            .collect()
    });

    let mut csv = String::from("beta,alpha,theta,matches,correct,seconds\n");
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    atomic_write(&a.output, csv.as_bytes())?;
    println!(
        "{}",
        serde_json::json!({
            "cells": cells.len(),
            "pairs": pairs.len(),
            "output": a.output,
        })
    );
    Ok(())
}
