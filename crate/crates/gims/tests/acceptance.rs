//! Acceptance gate: one test per release criterion, named `criterion_*` so
//! the harness emits one pass/fail line each. Run with
//! `cargo test --test acceptance -- --nocapture` for the measured numbers;
//! the scaling criterion is machine-sensitive and opt-in (`--ignored`).

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gims::agc::{
    build_agc, build_coarse, connect_isolated, cosine_similarity, reference, remove_small,
    AgcParams,
};
use gims::core::{DescriptorSet, Graph, Homography, Keypoint};
use gims::encoder::{
    alternating_kinds, attention_message, graphsage_layer, AttnKind, ModelWeights,
};
use gims::geometry::{apply_homography, auc, corner_error, ransac_homography, NoEstimate,
    RansacConfig};
use gims::imagekp::DetectParams;
use gims::matcher::{match_pair, score_matrix, sinkhorn};
use gims::spatial::{brute, KdTree};
use gims::trainer::{
    batch_gradient, depth_ablation, item_loss, label_ground_truth, nll_loss, prepare_side,
    prepare_train_item, synth_pair, synthetic_scene, train_step, AblationConfig, Adam,
    GroundTruth, HomographyRanges, PreparedSide, TrainItem, DEFAULT_EPSILON_GT,
};

/// Fixed-density point cloud with random unit descriptors.
fn instance(n: usize, dim: usize, seed: u64) -> (Vec<(f64, f64)>, DescriptorSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64 * 25.0).sqrt().max(1.0);
    let positions: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        data.extend(v.iter().map(|x| x / norm));
    }
    (positions, DescriptorSet::new(n, dim, data).unwrap())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_01_agc_invariant_suite() {
    let params = AgcParams::default(); // (β, α, θ) = (15, 2, 7)
    let started = Instant::now();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let n = rng.gen_range(2..=2000);
        let (positions, descriptors) = instance(n, 32, seed);

        // Stage checks: every coarse edge within radius and above γ…
        let (coarse, stats) = build_coarse(&positions, &descriptors, &params).unwrap();
        if let Some(gamma) = stats.gamma {
            for &(i, j) in coarse.edges() {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                assert!(
                    (dx * dx + dy * dy).sqrt() < params.beta,
                    "seed {seed}: coarse edge ({i},{j}) beyond β"
                );
                let c = cosine_similarity(descriptors.row(i), descriptors.row(j)).unwrap();
                assert!(
                    c >= gamma - 1e-12,
                    "seed {seed}: coarse edge ({i},{j}) below γ: {c} < {gamma}"
                );
            }
        } else {
            assert!(coarse.edge_count() == 0, "seed {seed}: edges without γ");
        }

        // …every component surviving small-component removal has order ≥ θ…
        let tree = KdTree::build(&positions).unwrap();
        let repaired = connect_isolated(&coarse, &tree);
        let (pruned, _) = remove_small(&repaired, params.theta);
        if pruned.vertex_count() > 0 {
            for comp in pruned.connected_components() {
                assert!(
                    comp.len() >= params.theta.min(pruned.vertex_count()),
                    "seed {seed}: surviving component of order {} < θ",
                    comp.len()
                );
            }
        }

        // …and the final output is one component with no isolated vertex.
        let (g, _report) = build_agc(&positions, &descriptors, &params).unwrap();
        assert_eq!(
            g.connected_components().len(),
            1,
            "seed {seed}: {} components",
            g.connected_components().len()
        );
        assert_eq!(
            g.degrees().iter().filter(|&&d| d == 0).count(),
            0,
            "seed {seed}: isolated vertices remain"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "suite took {elapsed:.1}s, budget is 60s");
    println!("PASS criterion 01: AGC invariants on 100 instances (n ≤ 2000) in {elapsed:.1}s");
}

#[test]
fn criterion_02_oracle_equivalence() {
    // build_agc against the naive double-loop reference: exact edge sets.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.gen_range(2..=300);
        let (positions, descriptors) = instance(n, 16, 3000 + seed);
        let params = AgcParams::default();
        let (g, _) = build_agc(&positions, &descriptors, &params).unwrap();
        let oracle = reference::build_agc(&positions, &descriptors, &params);
        assert_eq!(
            g.edges(),
            oracle.edges(),
            "seed {seed}: AGC diverges from reference"
        );
        assert_eq!(g.vertex_count(), oracle.vertex_count());
    }

    // KD-tree queries against brute force: exact sets.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let n = rng.gen_range(2..=500);
        let (positions, _) = instance(n, 4, 4000 + seed);
        let tree = KdTree::build(&positions).unwrap();
        let beta = rng.gen_range(1.0..30.0);
        let mut got = tree.pairs_within_radius(beta);
        got.sort_unstable();
        assert_eq!(got, brute::pairs_within_radius(&positions, beta), "seed {seed}");
        for _ in 0..10 {
            let q = rng.gen_range(0..n);
            assert_eq!(
                tree.nearest_neighbor(q).ok(),
                brute::nearest_neighbor(&positions, q),
                "seed {seed}, query {q}"
            );
        }
    }

    // graphsage_layer against a dense loop.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n = rng.gen_range(1..=20);
        let d = 8;
        let h: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let w: Array2<f64> = Array2::from_shape_fn((d, d), |_| rng.gen_range(-0.5..0.5));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_range(0.0..1.0) < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::canonical(n, edges.clone()).unwrap();
        let got = graphsage_layer(&h, &g, &w).unwrap();
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for i in 0..n {
            for c in 0..d {
                // Mean over {i} ∪ N(i), then x·Wᵀ, then ReLU.
                let mut z = vec![0.0; d];
                for k in 0..d {
                    z[k] = h[[i, k]];
                    for &j in &adj[i] {
                        z[k] += h[[j, k]];
                    }
                    z[k] /= (1 + adj[i].len()) as f64;
                }
                let pre: f64 = (0..d).map(|k| z[k] * w[[c, k]]).sum();
                let want = pre.max(0.0);
                assert!(
                    rel_err(got[[i, c]], want) <= 1e-10,
                    "seed {seed}: graphsage[{i},{c}] {} vs {}",
                    got[[i, c]],
                    want
                );
            }
        }
    }

    // attention_message against per-head loops.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let (nx, ny, d, heads) = (rng.gen_range(1..=8), rng.gen_range(1..=8), 8usize, 2usize);
        let dh = d / heads;
        let x: Array2<f64> = Array2::from_shape_fn((nx, d), |_| rng.gen_range(-1.0..1.0));
        let y: Array2<f64> = Array2::from_shape_fn((ny, d), |_| rng.gen_range(-1.0..1.0));
        let mut w = ModelWeights::xavier_init(d, 0, heads, &[AttnKind::CrossAttn], seed).unwrap();
        w.dustbin = 0.0;
        let layer = &w.attn[0];
        let got = attention_message(&x, &y, layer, heads);
        let matmul_t = |a: &Array2<f64>, m: &Array2<f64>| -> Array2<f64> {
            let (r, k) = (a.nrows(), a.ncols());
            let out_d = m.nrows();
            Array2::from_shape_fn((r, out_d), |(i, o)| {
                (0..k).map(|c| a[[i, c]] * m[[o, c]]).sum()
            })
        };
        let q = matmul_t(&x, &layer.wq);
        let k = matmul_t(&y, &layer.wk);
        let v = matmul_t(&y, &layer.wv);
        let mut mcat = Array2::zeros((nx, d));
        for head in 0..heads {
            let lo = head * dh;
            for i in 0..nx {
                let logits: Vec<f64> = (0..ny)
                    .map(|j| {
                        (lo..lo + dh).map(|c| q[[i, c]] * k[[j, c]]).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let denom: f64 = exps.iter().sum();
                for c in lo..lo + dh {
                    mcat[[i, c]] = (0..ny)
                        .map(|j| exps[j] / denom * v[[j, c]])
                        .sum::<f64>();
                }
            }
        }
        let want = matmul_t(&mcat, &layer.wo);
        for i in 0..nx {
            for c in 0..d {
                assert!(
                    rel_err(got[[i, c]], want[[i, c]]) <= 1e-10,
                    "seed {seed}: attention[{i},{c}]"
                );
            }
        }
    }

    // score_matrix against plain loops.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (m, n, d) = (rng.gen_range(1..=12), rng.gen_range(1..=12), 6usize);
        let xa: Array2<f64> = Array2::from_shape_fn((m, d), |_| rng.gen_range(-1.0..1.0));
        let xb: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let z = rng.gen_range(-1.0..1.0);
        let sm = score_matrix(&xa, &xb, z).unwrap();
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..d).map(|c| xa[[i, c]] * xb[[j, c]]).sum();
                assert!(rel_err(sm.s[[i, j]], want) <= 1e-10, "seed {seed}");
                assert!(rel_err(sm.augmented[[i, j]], want) <= 1e-10, "seed {seed}");
            }
        }
        for i in 0..=m {
            assert!(rel_err(sm.augmented[[i, n]], z) <= 1e-10);
        }
        for j in 0..=n {
            assert!(rel_err(sm.augmented[[m, j]], z) <= 1e-10);
        }
    }

    // nll_loss against a plain loop.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let (rows, cols) = (rng.gen_range(2..=10), rng.gen_range(2..=10));
        let q: Array2<f64> = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(1e-6..1.0));
        let n_pos = rng.gen_range(0..rows.min(cols));
        let gt = GroundTruth {
            positives: (0..n_pos).map(|k| (k, k)).collect(),
            unmatched_a: (n_pos..rows - 1).collect(),
            unmatched_b: (n_pos..cols - 1).collect(),
            epsilon: 3.0,
        };
        let (loss, _) = nll_loss(&q, &gt);
        let mut cells: Vec<(usize, usize)> = gt.positives.clone();
        cells.extend(gt.unmatched_a.iter().map(|&i| (i, cols - 1)));
        cells.extend(gt.unmatched_b.iter().map(|&j| (rows - 1, j)));
        let want = if cells.is_empty() {
            0.0
        } else {
            -cells
                .iter()
                .map(|&(i, j)| q[[i, j]].max(1e-12).ln())
                .sum::<f64>()
                / cells.len() as f64
        };
        assert!(rel_err(loss, want) <= 1e-10, "seed {seed}: {loss} vs {want}");
    }

    println!("PASS criterion 02: oracle equivalence on 100 seeds per operation");
}

#[test]
fn criterion_03_sinkhorn_contract() {
    let (m, n) = (8usize, 6usize);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xa: Array2<f64> = Array2::from_shape_fn((m, 4), |_| rng.gen_range(-1.5..1.5));
        let xb: Array2<f64> = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.5..1.5));
        let z = rng.gen_range(-1.0..1.0);
        let sm = score_matrix(&xa, &xb, z).unwrap();
        let a = sinkhorn(&sm, 100);
        for i in 0..m {
            let s: f64 = a.q.row(i).sum();
            assert!((s - 1.0).abs() < 1e-6, "seed {seed}: row {i} sums to {s}");
        }
        for j in 0..n {
            let s: f64 = a.q.column(j).sum();
            assert!((s - 1.0).abs() < 1e-6, "seed {seed}: col {j} sums to {s}");
        }
        let dust_row: f64 = a.q.row(m).sum();
        let dust_col: f64 = a.q.column(n).sum();
        assert!((dust_row - n as f64).abs() < 1e-6, "seed {seed}: dustbin row {dust_row}");
        assert!((dust_col - m as f64).abs() < 1e-6, "seed {seed}: dustbin col {dust_col}");
    }
    println!("PASS criterion 03: Sinkhorn marginals within 1e-6 on 50 random 8×6 problems");
}

fn toy_item(seed: u64, n_a: usize, n_b: usize, dim: usize) -> TrainItem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = |n: usize| {
        let positions: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(5.0..95.0), rng.gen_range(5.0..95.0)))
            .collect();
        let descriptors = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-0.5..0.5));
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        PreparedSide {
            keypoints: vec![
                Keypoint {
                    x: 0.0,
                    y: 0.0,
                    scale: 1.0,
                    orientation: 0.0,
                    response: 0.0,
                    octave: 0
                };
                n
            ],
            descriptors,
            graph: Graph::canonical(n, edges).unwrap(),
            positions,
            dims: (100.0, 100.0),
        }
    };
    let a = side(n_a);
    let b = side(n_b);
    let k = n_a.min(n_b) - 1;
    let gt = GroundTruth {
        positives: (0..k).map(|i| (i, i)).collect(),
        unmatched_a: (k..n_a).collect(),
        unmatched_b: (k..n_b).collect(),
        epsilon: DEFAULT_EPSILON_GT,
    };
    TrainItem { a, b, gt }
}

#[test]
fn criterion_04_gradient_checks() {
    // Every learnable tensor of a small full model, end to end through
    // Sinkhorn, on a 6-vertex toy pair.
    let w = ModelWeights::xavier_init(8, 2, 2, &alternating_kinds(1), 3).unwrap();
    let item = toy_item(21, 6, 5, 8);
    let iters = 25;
    let (_, grads) = batch_gradient(std::slice::from_ref(&item), &w, iters).unwrap();
    let analytic = grads.to_flat();
    let flat = w.to_flat();
    let step = 1e-5;
    let mut worst = (0.0f64, 0usize);
    for k in 0..flat.len() {
        let mut plus = flat.clone();
        plus[k] += step;
        let mut wp = w.clone();
        wp.assign_flat(&plus).unwrap();
        let mut minus = flat.clone();
        minus[k] -= step;
        let mut wm = w.clone();
        wm.assign_flat(&minus).unwrap();
        let fd = (item_loss(&item, &wp, iters).unwrap() - item_loss(&item, &wm, iters).unwrap())
            / (2.0 * step);
        let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-4);
        if rel > worst.0 {
            worst = (rel, k);
        }
    }
    assert!(
        worst.0 < 1e-4,
        "worst relative error {} at parameter {} of {}",
        worst.0,
        worst.1,
        flat.len()
    );
    println!(
        "PASS criterion 04: {} parameters checked by central differences, worst rel err {:.2e}",
        flat.len(),
        worst.0
    );
}

#[test]
fn criterion_05_alpha_monotonicity() {
    let alphas = [0.0, 2.0, 10.0, 50.0, 100.0];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let n = rng.gen_range(30..=400);
        let (positions, descriptors) = instance(n, 16, 8000 + seed);
        let mut previous: Option<Vec<(usize, usize)>> = None;
        for &alpha in &alphas {
            let params = AgcParams {
                alpha,
                ..AgcParams::default()
            };
            let (coarse, _) = build_coarse(&positions, &descriptors, &params).unwrap();
            let edges: Vec<(usize, usize)> = coarse.edges().to_vec();
            if let Some(prev) = &previous {
                let prev_set: std::collections::HashSet<_> = prev.iter().collect();
                assert!(
                    edges.iter().all(|e| prev_set.contains(e)),
                    "seed {seed}: α={alpha} kept an edge absent at the lower α"
                );
                assert!(edges.len() <= prev.len(), "seed {seed}: edge count grew with α");
            }
            previous = Some(edges);
        }
    }
    println!("PASS criterion 05: coarse edge sets nested decreasing over α ∈ {{0,2,10,50,100}} on 20 instances");
}

#[test]
fn criterion_06_end_to_end_identity() {
    let img = synthetic_scene(192, 192, 130, 77);
    let detect = DetectParams {
        max_keypoints: 200,
        ..DetectParams::default()
    };
    let agc = AgcParams::default();
    let side = prepare_side(&img, &detect, &agc, &gims::descriptor::DescriptorProvider::Hist128)
        .unwrap();
    let m = side.graph.vertex_count();
    assert!(m >= 8, "scene must yield a workable graph, got {m} vertices");

    // Zero-attention identity configuration: encoding is a pass-through,
    // so identical inputs produce identical features on both sides.
    //
    // Histogram descriptors are unit-norm, while encoder outputs (whose dot
    // products the 0.2 confidence floor is calibrated for) carry norms of
    // roughly sqrt(D) at initialization.  A pass-through therefore runs the
    // matcher two orders of magnitude colder than its operating regime and
    // every assignment row flattens below the floor no matter how separable
    // the descriptors are.  Restore the operating temperature by scaling the
    // features to norm sqrt(D); this changes no argmax and no mutuality, only
    // the confidence calibration.
    let dim = side.descriptors.ncols();
    let weights = ModelWeights::identity(dim, 1);
    let scale = (dim as f64).sqrt();
    let input = side.encode_input();
    let input = gims::encoder::EncodeInput {
        features: input.features * scale,
        ..input
    };
    let (xa, xb) = gims::encoder::encode_pair(&input, &input, &weights).unwrap();
    let (matches, _) = match_pair(&xa, &xb, weights.dustbin, 100, 0.2).unwrap();
    assert!(
        matches.pairs.len() * 2 >= m,
        "only {} matches from {m} keypoints",
        matches.pairs.len()
    );

    let src: Vec<(f64, f64)> = matches.pairs.iter().map(|p| side.positions[p.a]).collect();
    let dst: Vec<(f64, f64)> = matches.pairs.iter().map(|p| side.positions[p.b]).collect();
    if matches.pairs.len() >= 4 {
        let res = ransac_homography(&src, &dst, &RansacConfig::default()).unwrap();
        let err = corner_error(&res.homography, &Homography::identity(), 160.0, 160.0).unwrap();
        assert!(err < 1e-3, "corner error {err} ≥ 1e-3 px");
        println!(
            "PASS criterion 06: identity pair gives {} / {m} matches, corner error {err:.2e} px",
            matches.pairs.len()
        );
    } else {
        panic!("fewer than 4 matches ({}) — cannot attempt RANSAC", matches.pairs.len());
    }
}

#[test]
fn criterion_07_desk_scale_learning_signal() {
    let started = Instant::now();
    let agc = AgcParams::default();
    let provider = gims::descriptor::DescriptorProvider::Hist128;
    let ranges = HomographyRanges::default();
    let max_kp = 256;

    // 50 training pairs and 10 held-out pairs on disjoint seeds.
    let make_items = |base: u64, count: usize| -> Vec<(TrainItem, Homography)> {
        (0..count)
            .map(|k| {
                let scene = synthetic_scene(160, 160, 70, base + k as u64);
                let pair = synth_pair(&scene, base + 500 + k as u64, &ranges).unwrap();
                let item =
                    prepare_train_item(&pair, max_kp, &agc, &provider, DEFAULT_EPSILON_GT)
                        .unwrap();
                (item, pair.homography)
            })
            .collect()
    };
    let train: Vec<(TrainItem, Homography)> = make_items(0, 50);
    let held_out: Vec<(TrainItem, Homography)> = make_items(10_000, 10);

    let init = ModelWeights::default_init(1);
    let mut model = init.clone();
    // The optimizer defaults elsewhere use lr = 1e-4; this short run uses
    // 3e-4 so 300 steps carry a visible signal without memorizing the
    // training pairs.
    let mut opt = Adam::new(3e-4, model.param_count());
    let steps = 300;
    let batch_size = 4;
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch: Vec<TrainItem> = (0..batch_size)
            .map(|b| train[(step * batch_size + b) % train.len()].0.clone())
            .collect();
        losses.push(train_step(&mut model, &batch, &mut opt, 100).unwrap());
    }
    let window = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let first = window(&losses[..20]);
    let last = window(&losses[steps - 20..]);
    let loss_drop = (first - last) / first;
    assert!(
        loss_drop >= 0.30,
        "smoothed loss fell only {:.1}% ({first:.4} → {last:.4})",
        loss_drop * 100.0
    );

    // Precision on held-out pairs: extracted matches within ε_gt = 3 px of
    // the true correspondence.
    let precision = |w: &ModelWeights, set: &[(TrainItem, Homography)]| -> (usize, usize) {
        let mut correct = 0;
        let mut extracted = 0;
        for (item, h_true) in set {
            let Ok((xa, xb)) =
                gims::encoder::encode_pair(&item.a.encode_input(), &item.b.encode_input(), w)
            else {
                continue;
            };
            let Ok((matches, _)) = match_pair(&xa, &xb, w.dustbin, 100, 0.2) else {
                continue;
            };
            extracted += matches.pairs.len();
            for p in &matches.pairs {
                if let Ok(proj) = apply_homography(h_true, item.a.positions[p.a]) {
                    let q = item.b.positions[p.b];
                    let d = ((proj.0 - q.0).powi(2) + (proj.1 - q.1).powi(2)).sqrt();
                    if d < DEFAULT_EPSILON_GT {
                        correct += 1;
                    }
                }
            }
        }
        (correct, extracted)
    };
    let (c_init, e_init) = precision(&init, &held_out);
    let (c_post, e_post) = precision(&model, &held_out);
    let (tc_init, te_init) = precision(&init, &train);
    let (tc_post, te_post) = precision(&model, &train);
    println!(
        "diag: loss {first:.3}→{last:.3}; train precision {tc_init}/{te_init} → {tc_post}/{te_post}; held-out {c_init}/{e_init} → {c_post}/{e_post}"
    );
    let p_init = if e_init == 0 { 0.0 } else { c_init as f64 / e_init as f64 };
    let p_post = if e_post == 0 { 0.0 } else { c_post as f64 / e_post as f64 };
    assert!(
        p_post > p_init,
        "post-training precision {p_post:.3} ({c_post}/{e_post}) does not beat init {p_init:.3} ({c_init}/{e_init})"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "took {elapsed:.0}s, budget is 30 min");
    println!(
        "PASS criterion 07: loss −{:.0}% over {steps} steps, precision {p_init:.3} → {p_post:.3}, {elapsed:.0}s",
        loss_drop * 100.0
    );
}

#[test]
fn criterion_08_gnn_depth_harness() {
    let cfg = AblationConfig {
        image_size: (128, 128),
        blobs: 30,
        train_pairs: 2,
        eval_pairs: 2,
        steps: 3,
        max_keypoints: 96,
        lr: 1e-4,
        sinkhorn_iterations: 30,
        min_confidence: 0.2,
        seed: 5,
    };
    let depths = [0usize, 1, 2, 3, 4, 5];
    let rows = depth_ablation(&depths, &cfg).unwrap();
    assert_eq!(rows.len(), depths.len());
    println!("layers | final loss | AUC@5 | AUC@10 | AUC@25");
    for (row, &want) in rows.iter().zip(&depths) {
        assert_eq!(row.layers, want);
        assert!(row.final_loss.is_finite());
        for v in [row.auc5, row.auc10, row.auc25] {
            assert!((0.0..=100.0).contains(&v), "AUC out of range at L={want}");
        }
        println!(
            "{:>6} | {:>10.4} | {:>5.1} | {:>6.1} | {:>6.1}",
            row.layers, row.final_loss, row.auc5, row.auc10, row.auc25
        );
    }
    // No ordering asserted: the table is the deliverable.
    println!("PASS criterion 08: depth table emitted for L ∈ {{0..5}}");
}

#[test]
fn criterion_09_auc_metric() {
    // Exact trivials.
    let zeros = vec![Some(0.0); 4];
    assert_eq!(auc(&zeros, 5.0, NoEstimate::AsInfinite).unwrap(), 100.0);
    let fails = vec![None, None];
    assert_eq!(auc(&fails, 5.0, NoEstimate::AsInfinite).unwrap(), 0.0);
    let half = vec![Some(0.0), None];
    assert_eq!(auc(&half, 10.0, NoEstimate::AsInfinite).unwrap(), 50.0);

    // Monotonicity in the threshold on random error lists.
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let errors: Vec<Option<f64>> = (0..rng.gen_range(1..40))
            .map(|_| {
                if rng.gen_range(0.0..1.0) < 0.2 {
                    None
                } else {
                    Some(rng.gen_range(0.0..40.0))
                }
            })
            .collect();
        let a5 = auc(&errors, 5.0, NoEstimate::AsInfinite).unwrap();
        let a10 = auc(&errors, 10.0, NoEstimate::AsInfinite).unwrap();
        let a25 = auc(&errors, 25.0, NoEstimate::AsInfinite).unwrap();
        assert!(a5 <= a10 + 1e-12 && a10 <= a25 + 1e-12, "seed {seed}: {a5} {a10} {a25}");
    }
    println!("PASS criterion 09: AUC trivials exact, AUC@5 ≤ AUC@10 ≤ AUC@25 on 50 random lists");
}

#[test]
#[ignore = "machine-sensitive timing; run with --ignored as the opt-in perf gate"]
fn criterion_10_scaling_exponent() {
    let study = gims::perf::scaling_study(&[2000, 4000, 8000, 16000], 3).unwrap();
    let exp = study.exponent.expect("four sizes fit a slope");
    assert!(
        exp < 1.6,
        "coarse-stage exponent {exp:.3}\n{}",
        study.to_csv()
    );
    println!("PASS criterion 10: coarse-stage growth exponent {exp:.3} < 1.6");
}

// Sanity cross-checks used by several criteria above.

#[test]
fn label_conservation_holds_on_random_pairs() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_a = rng.gen_range(1..40);
        let n_b = rng.gen_range(1..40);
        let pts = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(f64, f64)> {
            (0..n)
                .map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect()
        };
        let a = pts(&mut rng, n_a);
        let b = pts(&mut rng, n_b);
        let h = Homography::identity();
        let gt = label_ground_truth(&a, &b, &h, 3.0, (100.0, 100.0));
        assert!(gt.is_conserving(n_a, n_b), "seed {seed}");
    }
}

