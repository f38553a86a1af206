//! Adaptive graph construction.
//!
//! Builds a graph over detected keypoints in four stages: coarse edges from
//! a radius search filtered by an adaptive cosine-similarity threshold,
//! nearest-neighbor repair of isolated vertices, removal of small connected
//! components, and centroid-guided stitching of the remainder into a single
//! component. Baseline builders (Delaunay, ε-neighborhood, kNN, MST,
//! complete) are included for comparison runs.
//!
//! [`reference::build_agc`] is a deliberately naive reimplementation used as
//! a test oracle; it shares no search structures with the fast path.

use serde::{Deserialize, Serialize};

use crate::core::{DescriptorSet, Graph};
use crate::spatial::KdTree;
use crate::{Error, Result};

/// Tunable thresholds of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgcParams {
    /// Candidate radius in pixels, > 0.
    pub beta: f64,
    /// Similarity percentile in [0, 100].
    pub alpha: f64,
    /// Minimum surviving component order, >= 0.
    pub theta: usize,
    /// When true, the percentile threshold is computed over all vertex
    /// pairs instead of only the within-radius candidates. Off by default;
    /// kept for comparison experiments.
    #[serde(default)]
    pub gamma_over_all_pairs: bool,
}

impl Default for AgcParams {
    fn default() -> Self {
        Self {
            beta: 15.0,
            alpha: 2.0,
            theta: 7,
            gamma_over_all_pairs: false,
        }
    }
}

impl AgcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be > 0 (got {})",
                self.beta
            )));
        }
        if !(0.0..=100.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in [0, 100] (got {})",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Candidate pairs with their similarities and the derived threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStats {
    /// Within-radius pairs, `i < j`, lexicographically sorted.
    pub candidates: Vec<(usize, usize)>,
    /// Cosine similarity per candidate, aligned with `candidates`.
    pub similarities: Vec<f64>,
    /// Percentile threshold; `None` when there were no values to rank.
    pub gamma: Option<f64>,
}

/// What each construction stage did; serialized alongside graph files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgcReport {
    pub n_input: usize,
    pub candidate_count: usize,
    pub gamma: Option<f64>,
    pub coarse_edges: usize,
    pub isolated_repaired: usize,
    pub component_sizes_before_removal: Vec<usize>,
    pub removed_vertices: Vec<usize>,
    /// Old vertex id → new id; `None` for removed vertices.
    pub kept_map: Vec<Option<usize>>,
    pub stitch_edges: usize,
    pub final_vertices: usize,
    pub final_edges: usize,
    pub warnings: Vec<String>,
}

/// Cosine similarity of two equal-length vectors; 0 when either has zero
/// norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "cosine_similarity: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Linear-interpolated percentile over an ascending sort of `values`
/// (0-based): rank `r = alpha/100·(k−1)`, result
/// `(1−frac)·v[⌊r⌋] + frac·v[⌊r⌋+1]`.
pub fn percentile_threshold(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "percentile of an empty list is undefined".into(),
        ));
    }
    if !(0.0..=100.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "percentile rank must lie in [0, 100] (got {alpha})"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("values must not be NaN"));
    let r = alpha / 100.0 * (sorted.len() - 1) as f64;
    let lo = r.floor() as usize;
    let frac = r - lo as f64;
    if frac == 0.0 {
        // Also covers alpha = 100, where lo + 1 would be out of bounds.
        Ok(sorted[lo])
    } else {
        Ok((1.0 - frac) * sorted[lo] + frac * sorted[lo + 1])
    }
}

/// Stage 1–2: radius candidates filtered by the adaptive similarity
/// threshold. No candidates → edgeless graph with `gamma = None`.
pub fn build_coarse(
    positions: &[(f64, f64)],
    descriptors: &DescriptorSet,
    params: &AgcParams,
) -> Result<(Graph, SimilarityStats)> {
    params.validate()?;
    if descriptors.count() != positions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} positions vs {} descriptor rows",
            positions.len(),
            descriptors.count()
        )));
    }
    let tree = KdTree::build(positions)?;
    build_coarse_with_tree(positions, descriptors, params, &tree)
}

fn build_coarse_with_tree(
    positions: &[(f64, f64)],
    descriptors: &DescriptorSet,
    params: &AgcParams,
    tree: &KdTree,
) -> Result<(Graph, SimilarityStats)> {
    let candidates = tree.pairs_within_radius(params.beta);
    let similarities: Vec<f64> = candidates
        .iter()
        .map(|&(i, j)| cosine_similarity(descriptors.row(i), descriptors.row(j)))
        .collect::<Result<_>>()?;

    let gamma = if params.gamma_over_all_pairs {
        let mut all = Vec::with_capacity(positions.len().saturating_sub(1) * positions.len() / 2);
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                all.push(cosine_similarity(descriptors.row(i), descriptors.row(j))?);
            }
        }
        if all.is_empty() {
            None
        } else {
            Some(percentile_threshold(&all, params.alpha)?)
        }
    } else if similarities.is_empty() {
        None
    } else {
        Some(percentile_threshold(&similarities, params.alpha)?)
    };

    let edges: Vec<(usize, usize)> = match gamma {
        None => Vec::new(),
        Some(g) => candidates
            .iter()
            .zip(&similarities)
            .filter(|&(_, &c)| c >= g)
            .map(|(&e, _)| e)
            .collect(),
    };
    let graph = Graph::canonical(positions.len(), edges)?;
    Ok((
        graph,
        SimilarityStats {
            candidates,
            similarities,
            gamma,
        },
    ))
}

/// Stage 3: every vertex isolated in the *input* graph gains one edge to
/// its nearest neighbor. The degree snapshot is taken before any repair
/// edge is added, and vertices are processed in ascending id order, so the
/// result does not depend on processing order.
pub fn connect_isolated(g: &Graph, tree: &KdTree) -> Graph {
    let degrees = g.degrees();
    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    for v in 0..g.vertex_count() {
        if degrees[v] == 0 {
            if let Ok(nn) = tree.nearest_neighbor(v) {
                edges.push((v.min(nn), v.max(nn)));
            }
            // n < 2: nothing to connect to; the vertex stays isolated and
            // build_agc records a warning.
        }
    }
    Graph::canonical(g.vertex_count(), edges).expect("repair edges are in range and not loops")
}

/// Stage 4: deletes every connected component smaller than `theta` unless
/// it is the only component left, then re-indexes survivors densely.
///
/// Components are considered in ascending (order, smallest-member) order;
/// the returned map sends old ids to new ids (`None` = removed).
pub fn remove_small(g: &Graph, theta: usize) -> (Graph, Vec<Option<usize>>) {
    let components = g.connected_components();
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_unstable_by_key(|&c| (components[c].len(), components[c][0]));

    let mut removed = vec![false; components.len()];
    let mut remaining = components.len();
    for &c in &order {
        if components[c].len() < theta && remaining > 1 {
            removed[c] = true;
            remaining -= 1;
        }
    }

    let mut keep = vec![true; g.vertex_count()];
    for (c, comp) in components.iter().enumerate() {
        if removed[c] {
            for &v in comp {
                keep[v] = false;
            }
        }
    }
    let mut map = vec![None; g.vertex_count()];
    let mut next = 0;
    for (v, item) in map.iter_mut().enumerate() {
        if keep[v] {
            *item = Some(next);
            next += 1;
        }
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter_map(|&(a, b)| Some((map[a]?, map[b]?)))
        .collect();
    let graph = Graph::canonical(next, edges).expect("surviving edges stay valid");
    (graph, map)
}

/// Stage 5: repeatedly joins the two components whose centroids are
/// closest, adding one edge between their closest vertex pair, until one
/// component remains. Centroids are recomputed every iteration; distance
/// ties resolve to the smallest (component id, vertex id) pair.
pub fn connect_components(g: &Graph, positions: &[(f64, f64)]) -> Graph {
    assert_eq!(
        g.vertex_count(),
        positions.len(),
        "one position per vertex"
    );
    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    loop {
        let current = Graph::canonical(g.vertex_count(), edges.iter().copied())
            .expect("stitch edges stay valid");
        let comps = current.connected_components();
        if comps.len() <= 1 {
            return current;
        }
        let centroids: Vec<(f64, f64)> = comps
            .iter()
            .map(|comp| {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for &v in comp {
                    sx += positions[v].0;
                    sy += positions[v].1;
                }
                (sx / comp.len() as f64, sy / comp.len() as f64)
            })
            .collect();

        let mut best_pair = (0usize, 1usize);
        let mut best_d2 = f64::INFINITY;
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                let dx = centroids[i].0 - centroids[j].0;
                let dy = centroids[i].1 - centroids[j].1;
                let d2 = dx * dx + dy * dy;
                if d2 < best_d2 {
                    best_d2 = d2;
                    best_pair = (i, j);
                }
            }
        }

        let (ci, cj) = best_pair;
        let mut best_edge = (comps[ci][0], comps[cj][0]);
        let mut best_v2 = f64::INFINITY;
        for &u in &comps[ci] {
            for &v in &comps[cj] {
                let dx = positions[u].0 - positions[v].0;
                let dy = positions[u].1 - positions[v].1;
                let d2 = dx * dx + dy * dy;
                if d2 < best_v2 {
                    best_v2 = d2;
                    best_edge = (u, v);
                }
            }
        }
        edges.push((best_edge.0.min(best_edge.1), best_edge.0.max(best_edge.1)));
    }
}

/// Full construction: coarse → isolated repair → small-component removal →
/// stitching. The report's `kept_map` relates output vertex ids to input
/// keypoint indices when removal dropped vertices.
pub fn build_agc(
    positions: &[(f64, f64)],
    descriptors: &DescriptorSet,
    params: &AgcParams,
) -> Result<(Graph, AgcReport)> {
    params.validate()?;
    if descriptors.count() != positions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} positions vs {} descriptor rows",
            positions.len(),
            descriptors.count()
        )));
    }
    let mut warnings = Vec::new();
    let tree = KdTree::build(positions)?;
    let (coarse, stats) = build_coarse_with_tree(positions, descriptors, params, &tree)?;

    let degrees = coarse.degrees();
    let isolated: Vec<usize> = (0..coarse.vertex_count())
        .filter(|&v| degrees[v] == 0)
        .collect();
    if positions.len() == 1 && !isolated.is_empty() {
        warnings.push("single vertex left isolated: no neighbor exists".into());
    }
    let repaired = connect_isolated(&coarse, &tree);

    let comps_before = repaired.connected_components();
    let component_sizes_before_removal: Vec<usize> =
        comps_before.iter().map(|c| c.len()).collect();
    let (pruned, kept_map) = remove_small(&repaired, params.theta);
    let removed_vertices: Vec<usize> = kept_map
        .iter()
        .enumerate()
        .filter_map(|(v, m)| m.is_none().then_some(v))
        .collect();

    let surviving_positions: Vec<(f64, f64)> = kept_map
        .iter()
        .enumerate()
        .filter_map(|(v, m)| m.map(|_| positions[v]))
        .collect();
    let stitched = connect_components(&pruned, &surviving_positions);

    let report = AgcReport {
        n_input: positions.len(),
        candidate_count: stats.candidates.len(),
        gamma: stats.gamma,
        coarse_edges: coarse.edge_count(),
        isolated_repaired: isolated.len(),
        component_sizes_before_removal,
        removed_vertices,
        kept_map,
        stitch_edges: stitched.edge_count() - pruned.edge_count(),
        final_vertices: stitched.vertex_count(),
        final_edges: stitched.edge_count(),
        warnings,
    };
    Ok((stitched, report))
}

/// Baseline graph constructions used for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Delaunay,
    Epsilon,
    Knn,
    Mst,
    Complete,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delaunay" => Ok(Self::Delaunay),
            "epsilon" => Ok(Self::Epsilon),
            "knn" => Ok(Self::Knn),
            "mst" => Ok(Self::Mst),
            "complete" => Ok(Self::Complete),
            other => Err(Error::InvalidInput(format!(
                "unknown baseline graph kind '{other}'"
            ))),
        }
    }
}

/// Builds one of the baseline graphs. `param` is ε for `epsilon` and k for
/// `knn`; the other kinds ignore it.
pub fn build_baseline(
    kind: BaselineKind,
    positions: &[(f64, f64)],
    param: f64,
) -> Result<Graph> {
    match kind {
        BaselineKind::Complete => {
            let mut edges = Vec::new();
            for i in 0..positions.len() {
                for j in i + 1..positions.len() {
                    edges.push((i, j));
                }
            }
            Graph::canonical(positions.len(), edges)
        }
        BaselineKind::Epsilon => {
            if !(param > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "epsilon must be > 0 (got {param})"
                )));
            }
            let tree = KdTree::build(positions)?;
            Graph::canonical(positions.len(), tree.pairs_within_radius(param))
        }
        BaselineKind::Knn => {
            let k = param as usize;
            if k == 0 {
                return Err(Error::InvalidInput("knn needs k >= 1".into()));
            }
            let mut edges = Vec::new();
            for i in 0..positions.len() {
                let mut others: Vec<(f64, usize)> = (0..positions.len())
                    .filter(|&j| j != i)
                    .map(|j| {
                        let dx = positions[i].0 - positions[j].0;
                        let dy = positions[i].1 - positions[j].1;
                        (dx * dx + dy * dy, j)
                    })
                    .collect();
                others.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                for &(_, j) in others.iter().take(k) {
                    edges.push((i.min(j), i.max(j)));
                }
            }
            Graph::canonical(positions.len(), edges)
        }
        BaselineKind::Mst => Ok(minimum_spanning_tree(positions)),
        BaselineKind::Delaunay => {
            let tris = delaunay_triangulation(positions)?;
            let mut edges = Vec::new();
            for t in tris {
                edges.push((t[0].min(t[1]), t[0].max(t[1])));
                edges.push((t[1].min(t[2]), t[1].max(t[2])));
                edges.push((t[0].min(t[2]), t[0].max(t[2])));
            }
            Graph::canonical(positions.len(), edges)
        }
    }
}

/// Prim's algorithm over Euclidean distances; deterministic via ascending
/// index scans.
fn minimum_spanning_tree(positions: &[(f64, f64)]) -> Graph {
    let n = positions.len();
    if n < 2 {
        return Graph::new(n, Vec::new());
    }
    let mut in_tree = vec![false; n];
    let mut best_d2 = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    in_tree[0] = true;
    for j in 1..n {
        let dx = positions[0].0 - positions[j].0;
        let dy = positions[0].1 - positions[j].1;
        best_d2[j] = dx * dx + dy * dy;
        parent[j] = 0;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        let mut pick_d2 = f64::INFINITY;
        for v in 0..n {
            if !in_tree[v] && best_d2[v] < pick_d2 {
                pick_d2 = best_d2[v];
                pick = v;
            }
        }
        in_tree[pick] = true;
        edges.push((pick.min(parent[pick]), pick.max(parent[pick])));
        for v in 0..n {
            if !in_tree[v] {
                let dx = positions[pick].0 - positions[v].0;
                let dy = positions[pick].1 - positions[v].1;
                let d2 = dx * dx + dy * dy;
                if d2 < best_d2[v] {
                    best_d2[v] = d2;
                    parent[v] = pick;
                }
            }
        }
    }
    Graph::canonical(n, edges).expect("tree edges are valid")
}

/// Bowyer–Watson triangulation. Input is jittered by a deterministic
/// sub-nanopixel amount so cocircular/collinear quadruples fall into general
/// position; output indices refer to the original points.
pub fn delaunay_triangulation(positions: &[(f64, f64)]) -> Result<Vec<[usize; 3]>> {
    use rand::prelude::*;
    let n = positions.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "delaunay needs at least 3 points (got {n})"
        )));
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in positions {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput("non-finite point".into()));
        }
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    // Exactly collinear input has no triangulation; check before the jitter
    // below turns it into sliver triangles.
    let tol = 1e-12 * span * span;
    let origin = positions[0];
    let general_position = positions.iter().skip(1).any(|&(bx, by)| {
        let (ux, uy) = (bx - origin.0, by - origin.1);
        positions.iter().skip(1).any(|&(cx, cy)| {
            let (vx, vy) = (cx - origin.0, cy - origin.1);
            (ux * vy - uy * vx).abs() > tol
        })
    });
    if !general_position {
        return Err(Error::Degenerate(
            "delaunay input is degenerate (collinear points)".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x00d1_5EED);
    let jitter = span * 1e-9;
    let mut pts: Vec<(f64, f64)> = positions
        .iter()
        .map(|&(x, y)| {
            (
                x + rng.gen_range(-jitter..jitter),
                y + rng.gen_range(-jitter..jitter),
            )
        })
        .collect();

    // Super-triangle far outside the bounding box.
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    pts.push((cx - 30.0 * span, cy - 10.0 * span));
    pts.push((cx + 30.0 * span, cy - 10.0 * span));
    pts.push((cx, cy + 30.0 * span));

    let ccw = |a: usize, b: usize, c: usize, pts: &[(f64, f64)]| -> bool {
        let (ax, ay) = pts[a];
        let (bx, by) = pts[b];
        let (cx, cy) = pts[c];
        (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) > 0.0
    };
    let make_tri = |a: usize, b: usize, c: usize, pts: &[(f64, f64)]| -> [usize; 3] {
        if ccw(a, b, c, pts) {
            [a, b, c]
        } else {
            [a, c, b]
        }
    };
    // Strictly inside the circumcircle of CCW triangle (a, b, c)?
    let in_circle = |t: &[usize; 3], p: usize, pts: &[(f64, f64)]| -> bool {
        let (ax, ay) = pts[t[0]];
        let (bx, by) = pts[t[1]];
        let (cx, cy) = pts[t[2]];
        let (px, py) = pts[p];
        let (a1, a2) = (ax - px, ay - py);
        let (b1, b2) = (bx - px, by - py);
        let (c1, c2) = (cx - px, cy - py);
        let a3 = a1 * a1 + a2 * a2;
        let b3 = b1 * b1 + b2 * b2;
        let c3 = c1 * c1 + c2 * c2;
        a1 * (b2 * c3 - b3 * c2) - a2 * (b1 * c3 - b3 * c1) + a3 * (b1 * c2 - b2 * c1) > 0.0
    };

    let super_base = n;
    let mut tris: Vec<[usize; 3]> = vec![make_tri(n, n + 1, n + 2, &pts)];
    for p in 0..n {
        let mut bad = Vec::new();
        for (ti, t) in tris.iter().enumerate() {
            if in_circle(t, p, &pts) {
                bad.push(ti);
            }
        }
        // Boundary of the cavity: edges of bad triangles not shared by two
        // bad triangles.
        let mut edge_count: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for &ti in &bad {
            let t = tris[ti];
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edge_count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        let mut boundary: Vec<(usize, usize)> = edge_count
            .into_iter()
            .filter_map(|(e, c)| (c == 1).then_some(e))
            .collect();
        boundary.sort_unstable();
        for &ti in bad.iter().rev() {
            tris.swap_remove(ti);
        }
        for (u, v) in boundary {
            tris.push(make_tri(u, v, p, &pts));
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < super_base));
    if tris.is_empty() {
        return Err(Error::Degenerate(
            "delaunay input is degenerate (collinear points)".into(),
        ));
    }
    let mut out: Vec<[usize; 3]> = tris
        .iter()
        .map(|t| {
            let mut s = *t;
            s.sort_unstable();
            s
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Summary counts for a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub vertices: usize,
    pub edges: usize,
    pub components: usize,
    pub isolated: usize,
    /// `degree_histogram[d]` = number of vertices with degree `d`.
    pub degree_histogram: Vec<usize>,
}

pub fn graph_stats(g: &Graph) -> GraphStats {
    let degrees = g.degrees();
    let max_deg = degrees.iter().copied().max().unwrap_or(0);
    let mut degree_histogram = vec![0; max_deg + 1];
    for &d in &degrees {
        degree_histogram[d] += 1;
    }
    GraphStats {
        vertices: g.vertex_count(),
        edges: g.edge_count(),
        components: g.connected_components().len(),
        isolated: degrees.iter().filter(|&&d| d == 0).count(),
        degree_histogram,
    }
}

/// Naive reimplementation of the full construction, used as a test oracle.
/// Everything is plain double loops over plain vectors: no KD-tree, no
/// shared helpers beyond the [`Graph`] container.
pub mod reference {
    use crate::core::{DescriptorSet, Graph};

    use super::AgcParams;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (x, y) in a.iter().zip(b) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    }

    fn percentile(values: &[f64], alpha: f64) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r = alpha / 100.0 * (sorted.len() - 1) as f64;
        let lo = r.floor() as usize;
        let frac = r - lo as f64;
        if frac == 0.0 {
            sorted[lo]
        } else {
            (1.0 - frac) * sorted[lo] + frac * sorted[lo + 1]
        }
    }

    fn components_of(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut stack = vec![s];
            seen[s] = true;
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Straight-line Algorithm 1: O(n²) candidate scan, O(n²) repairs,
    /// sequential small-component removal, O(n²) stitching.
    pub fn build_agc(
        positions: &[(f64, f64)],
        descriptors: &DescriptorSet,
        params: &AgcParams,
    ) -> Graph {
        let n = positions.len();
        let d2 = |i: usize, j: usize| {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            dx * dx + dy * dy
        };

        // Coarse stage.
        let mut candidates = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if d2(i, j) < params.beta * params.beta {
                    candidates.push((i, j));
                }
            }
        }
        let sims: Vec<f64> = candidates
            .iter()
            .map(|&(i, j)| cosine(descriptors.row(i), descriptors.row(j)))
            .collect();
        let gamma_pool: Vec<f64> = if params.gamma_over_all_pairs {
            let mut all = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    all.push(cosine(descriptors.row(i), descriptors.row(j)));
                }
            }
            all
        } else {
            sims.clone()
        };
        let mut edges: Vec<(usize, usize)> = if gamma_pool.is_empty() {
            Vec::new()
        } else {
            let gamma = percentile(&gamma_pool, params.alpha);
            candidates
                .iter()
                .zip(&sims)
                .filter(|&(_, &c)| c >= gamma)
                .map(|(&e, _)| e)
                .collect()
        };

        // Isolated repair against the coarse degree snapshot.
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        for v in 0..n {
            if degree[v] == 0 && n >= 2 {
                let mut best = usize::MAX;
                let mut best_d2 = f64::INFINITY;
                for u in 0..n {
                    if u != v && d2(v, u) < best_d2 {
                        best_d2 = d2(v, u);
                        best = u;
                    }
                }
                let e = (v.min(best), v.max(best));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }

        // Small-component removal, ascending (size, min id), keeping the
        // last component regardless of size.
        let comps = components_of(n, &edges);
        let mut order: Vec<usize> = (0..comps.len()).collect();
        order.sort_unstable_by_key(|&c| (comps[c].len(), comps[c][0]));
        let mut removed = vec![false; comps.len()];
        let mut remaining = comps.len();
        for &c in &order {
            if comps[c].len() < params.theta && remaining > 1 {
                removed[c] = true;
                remaining -= 1;
            }
        }
        let mut keep = vec![true; n];
        for (c, comp) in comps.iter().enumerate() {
            if removed[c] {
                for &v in comp {
                    keep[v] = false;
                }
            }
        }
        let mut map = vec![usize::MAX; n];
        let mut surviving = Vec::new();
        for v in 0..n {
            if keep[v] {
                map[v] = surviving.len();
                surviving.push(positions[v]);
            }
        }
        let mut edges: Vec<(usize, usize)> = edges
            .iter()
            .filter(|&&(a, b)| keep[a] && keep[b])
            .map(|&(a, b)| (map[a], map[b]))
            .collect();

        // Stitching.
        let m = surviving.len();
        let sd2 = |i: usize, j: usize| {
            let dx = surviving[i].0 - surviving[j].0;
            let dy = surviving[i].1 - surviving[j].1;
            dx * dx + dy * dy
        };
        loop {
            let comps = components_of(m, &edges);
            if comps.len() <= 1 {
                break;
            }
            let centroids: Vec<(f64, f64)> = comps
                .iter()
                .map(|comp| {
                    let mut sx = 0.0;
                    let mut sy = 0.0;
                    for &v in comp {
                        sx += surviving[v].0;
                        sy += surviving[v].1;
                    }
                    (sx / comp.len() as f64, sy / comp.len() as f64)
                })
                .collect();
            let mut bi = 0;
            let mut bj = 1;
            let mut bd = f64::INFINITY;
            for i in 0..comps.len() {
                for j in i + 1..comps.len() {
                    let dx = centroids[i].0 - centroids[j].0;
                    let dy = centroids[i].1 - centroids[j].1;
                    let d = dx * dx + dy * dy;
                    if d < bd {
                        bd = d;
                        bi = i;
                        bj = j;
                    }
                }
            }
            let mut bu = comps[bi][0];
            let mut bv = comps[bj][0];
            let mut bvd = f64::INFINITY;
            for &u in &comps[bi] {
                for &v in &comps[bj] {
                    if sd2(u, v) < bvd {
                        bvd = sd2(u, v);
                        bu = u;
                        bv = v;
                    }
                }
            }
            edges.push((bu.min(bv), bu.max(bv)));
        }
        edges.sort_unstable();
        edges.dedup();
        Graph::new(m, edges)
    }
}
