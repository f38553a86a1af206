//! 2-D KD-tree over keypoint positions.
//!
//! Supports the two queries graph construction needs: all pairs within a
//! radius and nearest neighbor of an indexed point. Built once, then
//! immutable; concurrent queries are safe.

use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    /// Index into `points`.
    point: usize,
    /// Splitting axis: 0 = x, 1 = y.
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Balanced KD-tree built by exact median split on alternating axes.
///
/// Median ties are broken by point index, which makes the structure (and
/// therefore every query answer) fully deterministic.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

impl KdTree {
    /// Builds a tree over `points`. Duplicates are allowed.
    pub fn build(points: &[(f64, f64)]) -> Result<Self> {
        if points
            .iter()
            .any(|&(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::InvalidInput(
                "KD-tree points must have finite coordinates".into(),
            ));
        }
        let points: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build_rec(&points, &mut nodes, &mut order, 0);
        Ok(Self {
            points,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Number of nodes on the longest root-to-leaf path (0 for an empty
    /// tree). Median splits keep this logarithmic.
    pub fn height(&self) -> usize {
        fn rec(nodes: &[Node], node: Option<usize>) -> usize {
            match node {
                None => 0,
                Some(i) => 1 + rec(nodes, nodes[i].left).max(rec(nodes, nodes[i].right)),
            }
        }
        rec(&self.nodes, self.root)
    }

    /// All unordered pairs `(i, j)` with `i < j` and Euclidean distance
    /// strictly less than `beta`, sorted lexicographically.
    ///
    /// `beta <= 0` yields the empty set (no distance is negative).
    pub fn pairs_within_radius(&self, beta: f64) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        if beta <= 0.0 {
            return pairs;
        }
        let mut hits = Vec::new();
        for i in 0..self.points.len() {
            hits.clear();
            self.radius_rec(self.root, self.points[i], beta, i, &mut hits);
            for &j in &hits {
                if j > i {
                    pairs.push((i, j));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    fn radius_rec(
        &self,
        node: Option<usize>,
        q: [f64; 2],
        beta: f64,
        skip: usize,
        out: &mut Vec<usize>,
    ) {
        let Some(ni) = node else { return };
        let nd = &self.nodes[ni];
        let p = self.points[nd.point];
        if nd.point != skip && dist2(p, q) < beta * beta {
            out.push(nd.point);
        }
        let diff = q[nd.axis] - p[nd.axis];
        let (near, far) = if diff < 0.0 {
            (nd.left, nd.right)
        } else {
            (nd.right, nd.left)
        };
        self.radius_rec(near, q, beta, skip, out);
        // A far-side point is at least |diff| away, so equality at the plane
        // can be pruned under the strict-< membership rule.
        if diff.abs() < beta {
            self.radius_rec(far, q, beta, skip, out);
        }
    }

    /// Index of the point nearest to point `query`, excluding `query`
    /// itself. Distance ties resolve to the smaller index.
    pub fn nearest_neighbor(&self, query: usize) -> Result<usize> {
        if query >= self.points.len() {
            return Err(Error::InvalidInput(format!(
                "query index {query} out of range for {} points",
                self.points.len()
            )));
        }
        if self.points.len() < 2 {
            return Err(Error::InvalidInput(
                "nearest_neighbor needs at least 2 points".into(),
            ));
        }
        let mut best: Option<(f64, usize)> = None;
        self.nn_rec(self.root, self.points[query], query, &mut best);
        Ok(best.expect("n >= 2 guarantees a candidate").1)
    }

    fn nn_rec(
        &self,
        node: Option<usize>,
        q: [f64; 2],
        skip: usize,
        best: &mut Option<(f64, usize)>,
    ) {
        let Some(ni) = node else { return };
        let nd = &self.nodes[ni];
        let p = self.points[nd.point];
        if nd.point != skip {
            let d2 = dist2(p, q);
            let better = match *best {
                None => true,
                Some((bd, bi)) => d2 < bd || (d2 == bd && nd.point < bi),
            };
            if better {
                *best = Some((d2, nd.point));
            }
        }
        let diff = q[nd.axis] - p[nd.axis];
        let (near, far) = if diff < 0.0 {
            (nd.left, nd.right)
        } else {
            (nd.right, nd.left)
        };
        self.nn_rec(near, q, skip, best);
        // Non-strict comparison: an equal-distance point on the far side may
        // win the smaller-index tie break, so it must still be visited.
        let explore_far = match *best {
            None => true,
            Some((bd, _)) => diff * diff <= bd,
        };
        if explore_far {
            self.nn_rec(far, q, skip, best);
        }
    }
}

fn build_rec(
    points: &[[f64; 2]],
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    depth: usize,
) -> Option<usize> {
    if order.is_empty() {
        return None;
    }
    let axis = depth % 2;
    order.sort_unstable_by(|&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .expect("coordinates are finite")
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let point = order[mid];
    let (lo, rest) = order.split_at_mut(mid);
    let hi = &mut rest[1..];
    let left = build_rec(points, nodes, lo, depth + 1);
    let right = build_rec(points, nodes, hi, depth + 1);
    nodes.push(Node {
        point,
        axis,
        left,
        right,
    });
    Some(nodes.len() - 1)
}

/// Brute-force counterparts used as oracles in tests and by the reference
/// implementation of graph construction.
pub mod brute {
    /// All pairs `(i, j)`, `i < j`, with distance strictly below `beta`.
    pub fn pairs_within_radius(points: &[(f64, f64)], beta: f64) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                if dx * dx + dy * dy < beta * beta {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Argmin of distance over all points except `query`; ties resolve to
    /// the smaller index.
    pub fn nearest_neighbor(points: &[(f64, f64)], query: usize) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (j, &(x, y)) in points.iter().enumerate() {
            if j == query {
                continue;
            }
            let dx = points[query].0 - x;
            let dy = points[query].1 - y;
            let d2 = dx * dx + dy * dy;
            let better = match best {
                None => true,
                Some((bd, _)) => d2 < bd,
            };
            if better {
                best = Some((d2, j));
            }
        }
        best.map(|(_, j)| j)
    }
}
