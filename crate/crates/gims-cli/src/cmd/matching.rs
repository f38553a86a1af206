use crate::cli::MatchArgs;
use crate::util::{calibration_scale, desc_to_array, infer_extent, parse_size};
use gims::core::{DescriptorSet, Graph, Keypoint};
use gims::encoder::{encode_pair, EncodeInput, ModelWeights};
use gims::formats::{atomic_write, read_gimd, read_gimg, read_gimk, read_gimw, write_matches};
use gims::matcher::match_pair;
use gims::{Error, Result};
use std::path::Path;
use std::time::Instant;

struct Side {
    descs: DescriptorSet,
    graph: Graph,
    positions: Vec<(f64, f64)>,
    dims: (f64, f64),
}

fn load_side(
    label: &str,
    kp: &Path,
    desc: &Path,
    graph: &Path,
    size: Option<&str>,
) -> Result<Side> {
    let kps: Vec<Keypoint> = read_gimk(kp)?;
    let descs = read_gimd(desc)?;
    let graph = read_gimg(graph)?.to_graph()?;
    if descs.count() != kps.len() || graph.vertex_count() != kps.len() {
        return Err(Error::DimensionMismatch(format!(
            "side {label}: {} keypoints, {} descriptors, {} graph vertices — counts must \
             agree (after AGC pruning, use the build-graph --keypoints-out and \
             --descriptors-out files)",
            kps.len(),
            descs.count(),
            graph.vertex_count()
        )));
    }
    let dims = match size {
        Some(s) => parse_size(s)?,
        None => infer_extent(&kps),
    };
    let positions = kps.iter().map(|k| (k.x, k.y)).collect();
    Ok(Side {
        descs,
        graph,
        positions,
        dims,
    })
}

pub fn run(a: MatchArgs) -> Result<()> {
    let t_start = Instant::now();
    let side_a = load_side("A", &a.kp_a, &a.desc_a, &a.graph_a, a.size_a.as_deref())?;
    let side_b = load_side("B", &a.kp_b, &a.desc_b, &a.graph_b, a.size_b.as_deref())?;
    if side_a.descs.dim() != side_b.descs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor dims differ: {} vs {}",
            side_a.descs.dim(),
            side_b.descs.dim()
        )));
    }
    let dim = side_a.descs.dim();
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
    let t_load = t_start.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let input_a = EncodeInput {
        features: desc_to_array(&side_a.descs) * scale,
        graph: &side_a.graph,
        positions: &side_a.positions,
        dims: side_a.dims,
    };
    let input_b = EncodeInput {
        features: desc_to_array(&side_b.descs) * scale,
        graph: &side_b.graph,
        positions: &side_b.positions,
        dims: side_b.dims,
    };
    let (xa, xb) = encode_pair(&input_a, &input_b, &weights)?;
    let t_encode = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let (matches, assignment) =
        match_pair(&xa, &xb, weights.dustbin, a.sinkhorn_iters, a.min_conf)?;
    let t_match = t2.elapsed().as_secs_f64();

    write_matches(&a.output, &matches)?;
    println!(
        "{}",
        serde_json::json!({
            "matches": matches.pairs.len(),
            "residual": assignment.residual,
            "iterations": assignment.iterations,
            "output": a.output,
        })
    );

    if a.profile || a.profile_out.is_some() {
        let csv = format!(
            "stage,seconds\nload,{t_load:.6}\nencode,{t_encode:.6}\nmatching,{t_match:.6}\n"
        );
        if a.profile {
            eprint!("{csv}");
        }
        if let Some(path) = &a.profile_out {
            atomic_write(path, csv.as_bytes())?;
        }
    }
    Ok(())
}
