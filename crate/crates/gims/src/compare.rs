//! Side-by-side comparison of graph construction methods.
//!
//! Builds the adaptive graph and each requested baseline over the same
//! keypoint cloud and tabulates structure counts (vertices, edges,
//! components, isolated vertices). The report is descriptive: rows record
//! per-method failures instead of aborting the run, and nothing beyond
//! structural sanity is asserted.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agc::{build_agc, build_baseline, graph_stats, AgcParams, BaselineKind, GraphStats};
use crate::core::DescriptorSet;
use crate::{Error, Result};

/// A graph construction method selectable in a comparison run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Agc,
    Delaunay,
    Epsilon,
    Knn,
    Mst,
    Complete,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Agc => "agc",
            Method::Delaunay => "delaunay",
            Method::Epsilon => "epsilon",
            Method::Knn => "knn",
            Method::Mst => "mst",
            Method::Complete => "complete",
        }
    }

    /// Every method, AGC first, in the fixed report order.
    pub fn all() -> Vec<Method> {
        vec![
            Method::Agc,
            Method::Delaunay,
            Method::Epsilon,
            Method::Knn,
            Method::Mst,
            Method::Complete,
        ]
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agc" => Ok(Method::Agc),
            other => Ok(match other.parse::<BaselineKind>()? {
                BaselineKind::Delaunay => Method::Delaunay,
                BaselineKind::Epsilon => Method::Epsilon,
                BaselineKind::Knn => Method::Knn,
                BaselineKind::Mst => Method::Mst,
                BaselineKind::Complete => Method::Complete,
            }),
        }
    }
}

/// Per-method parameters for a comparison run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareParams {
    pub agc: AgcParams,
    /// Radius for the ε-neighborhood baseline.
    pub epsilon: f64,
    /// Neighbor count for the kNN baseline.
    pub knn_k: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            agc: AgcParams::default(),
            epsilon: 15.0,
            knn_k: 4,
        }
    }
}

/// One method's outcome: stats on success, the error message on failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub stats: Option<GraphStats>,
    /// Similarity threshold chosen by AGC; absent for baselines.
    pub gamma: Option<f64>,
    pub error: Option<String>,
    pub elapsed_ms: f64,
}

/// One row per requested method, in request order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub n_points: usize,
    pub rows: Vec<CompareRow>,
}

/// Builds each requested method over the same cloud. Per-method errors
/// (e.g. Delaunay on fewer than 3 points) become row-level failures; the
/// report always holds exactly one row per requested method.
pub fn compare(
    positions: &[(f64, f64)],
    descriptors: &DescriptorSet,
    methods: &[Method],
    params: &CompareParams,
) -> CompareReport {
    let rows = methods
        .iter()
        .map(|&m| {
            let started = Instant::now();
            let (stats, gamma, error) = match m {
                Method::Agc => match build_agc(positions, descriptors, &params.agc) {
                    Ok((g, report)) => (Some(graph_stats(&g)), report.gamma, None),
                    Err(e) => (None, None, Some(e.to_string())),
                },
                baseline => {
                    let (kind, param) = match baseline {
                        Method::Delaunay => (BaselineKind::Delaunay, 0.0),
                        Method::Epsilon => (BaselineKind::Epsilon, params.epsilon),
                        Method::Knn => (BaselineKind::Knn, params.knn_k as f64),
                        Method::Mst => (BaselineKind::Mst, 0.0),
                        Method::Complete => (BaselineKind::Complete, 0.0),
                        Method::Agc => unreachable!("handled above"),
                    };
                    match build_baseline(kind, positions, param) {
                        Ok(g) => (Some(graph_stats(&g)), None, None),
                        Err(e) => (None, None, Some(e.to_string())),
                    }
                }
            };
            CompareRow {
                method: m.name().to_string(),
                stats,
                gamma,
                error,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    CompareReport {
        n_points: positions.len(),
        rows,
    }
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "—".into())
}

impl CompareReport {
    /// GitHub-style table, one row per method.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Graph construction comparison over {} points\n\n",
            self.n_points
        ));
        out.push_str("| method | vertices | edges | components | isolated | gamma | time (ms) | note |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let s = row.stats.as_ref();
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {:.3} | {} |\n",
                row.method,
                fmt_opt(s.map(|s| s.vertices)),
                fmt_opt(s.map(|s| s.edges)),
                fmt_opt(s.map(|s| s.components)),
                fmt_opt(s.map(|s| s.isolated)),
                row.gamma
                    .map(|g| format!("{g:.4}"))
                    .unwrap_or_else(|| "—".into()),
                row.elapsed_ms,
                row.error.as_deref().unwrap_or(""),
            ));
        }
        out
    }

    /// CSV with a header row; failed methods leave stats columns empty.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,vertices,edges,components,isolated,gamma,elapsed_ms,error\n");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for row in &self.rows {
            let s = row.stats.as_ref();
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{}\n",
                row.method,
                opt(s.map(|s| s.vertices.to_string())),
                opt(s.map(|s| s.edges.to_string())),
                opt(s.map(|s| s.components.to_string())),
                opt(s.map(|s| s.isolated.to_string())),
                opt(row.gamma.map(|g| g.to_string())),
                row.elapsed_ms,
                // Commas inside error messages would break the row.
                row.error.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
        out
    }
}
