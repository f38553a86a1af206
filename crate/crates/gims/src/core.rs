//! Shared domain types used by every other module.
//!
//! All types are immutable after construction and safe to share across
//! threads. Internal arithmetic is 64-bit; serialized descriptor and weight
//! payloads are 32-bit (see [`crate::formats`]).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major intensity image with values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// `pixels` is row-major, channel-interleaved, `width*height*channels` long.
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "unsupported channel count {channels} (expected 1 or 3)"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "pixel count {} does not match {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Intensity at `(x, y)` for channel `c`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }
}

/// Detected image feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Position in base-image pixels.
    pub x: f64,
    pub y: f64,
    /// Detection scale in base-image pixels, > 0.
    pub scale: f64,
    /// Dominant gradient orientation, radians in `[0, 2π)`.
    pub orientation: f64,
    /// Detection response (absolute DoG value at the extremum), >= 0.
    pub response: f64,
    /// Pyramid octave index the keypoint was found in.
    pub octave: usize,
}

impl Keypoint {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Undirected graph over vertex ids `0..n`.
///
/// Edges are stored as given; builders in [`crate::agc`] always emit the
/// canonical form (each pair as `(i, j)` with `i < j`, lexicographically
/// sorted, no duplicates). [`validate_graph`] reports violations as data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Self { n, edges }
    }

    /// Normalizes pairs to `i < j`, sorts and dedupes. Self-loops and
    /// out-of-range endpoints are rejected.
    pub fn canonical(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut es: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop at {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge {a}-{b} out of range for n={n}"
                )));
            }
            es.push((a.min(b), a.max(b)));
        }
        es.sort_unstable();
        es.dedup();
        Ok(Self { n, edges: es })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor lists; each list ascending for canonical graphs.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(|l| l.len()).collect()
    }

    /// Connected components as ascending vertex-id lists, ordered by their
    /// smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut components = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            let mut comp = Vec::new();
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

/// Checks the [`Graph`] invariants; an empty list means all hold.
pub fn validate_graph(g: &Graph) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &(a, b) in g.edges() {
        if a == b {
            violations.push(format!("self-loop at {a}"));
            continue;
        }
        if a >= g.vertex_count() || b >= g.vertex_count() {
            violations.push(format!(
                "edge endpoint out of range: {a}-{b} (n={})",
                g.vertex_count()
            ));
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            violations.push(format!("duplicate edge {}-{}", key.0, key.1));
        }
    }
    violations
}

/// Row-per-vertex feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    count: usize,
    dim: usize,
    data: Vec<f64>,
    degenerate: Vec<bool>,
}

impl DescriptorSet {
    pub fn new(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * dim {
            return Err(Error::DimensionMismatch(format!(
                "descriptor data length {} does not match {}x{}",
                data.len(),
                count,
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "descriptor entries must be finite".into(),
            ));
        }
        let degenerate = (0..count)
            .map(|i| data[i * dim..(i + 1) * dim].iter().all(|&v| v == 0.0))
            .collect();
        Ok(Self {
            count,
            dim,
            data,
            degenerate,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// True when row `i` is all zeros; such rows have similarity 0 to
    /// anything.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A single correspondence between vertex `a` in image A and `b` in image B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    /// Assignment confidence in `[0, 1]`.
    pub confidence: f64,
}

/// One-to-one matches between two keypoint sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
}

impl MatchSet {
    /// Each side index appears at most once.
    pub fn is_one_to_one(&self) -> bool {
        let mut seen_a = std::collections::HashSet::new();
        let mut seen_b = std::collections::HashSet::new();
        self.pairs
            .iter()
            .all(|m| seen_a.insert(m.a) && seen_b.insert(m.b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Invertible 3x3 projective transform.
///
/// Normalized so that `h[2][2] == 1` whenever that entry is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let mut h = Self { m };
        let det = h.det();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::Degenerate(format!(
                "homography is singular (det = {det})"
            )));
        }
        if h.m[2][2] != 0.0 {
            let s = h.m[2][2];
            for row in &mut h.m {
                for v in row {
                    *v /= s;
                }
            }
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Homography::new(out)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.m;
        let det = self.det();
        let cof = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = cof[i][j] / det;
            }
        }
        Homography::new(inv)
    }
}
