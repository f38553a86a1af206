use crate::cli::BuildGraphArgs;
use crate::util::write_json_atomic;
use gims::agc::{build_agc, build_baseline, graph_stats, AgcParams, BaselineKind};
use gims::core::{DescriptorSet, Graph};
use gims::formats::{read_gimd, read_gimk, write_gimd, write_gimg, write_gimk, GraphFile};
use gims::{Error, Result};

pub fn run(a: BuildGraphArgs) -> Result<()> {
    let kps = read_gimk(&a.keypoints)?;
    let positions: Vec<(f64, f64)> = kps.iter().map(|k| (k.x, k.y)).collect();
    let descs = a.descriptors.as_deref().map(read_gimd).transpose()?;
    if let Some(d) = &descs {
        if d.count() != positions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} keypoints but {} descriptors",
                positions.len(),
                d.count()
            )));
        }
    }

    let method = a.method.to_lowercase();
    let (graph, params_json, gamma) = if method == "agc" {
        let descs = descs.as_ref().ok_or_else(|| {
            Error::InvalidInput("--method agc needs --descriptors".into())
        })?;
        let params = AgcParams {
            beta: a.beta,
            alpha: a.alpha,
            theta: a.theta,
            gamma_over_all_pairs: a.gamma_all_pairs,
        };
        let (graph, report) = build_agc(&positions, descs, &params)?;
        if let Some(path) = &a.keypoints_out {
            let kept: Vec<_> = report
                .kept_map
                .iter()
                .enumerate()
                .filter_map(|(old, new)| new.map(|_| kps[old]))
                .collect();
            write_gimk(path, &kept)?;
        }
        if let Some(path) = &a.descriptors_out {
            let mut data = Vec::new();
            let mut count = 0;
            for (old, new) in report.kept_map.iter().enumerate() {
                if new.is_some() {
                    data.extend_from_slice(descs.row(old));
                    count += 1;
                }
            }
            write_gimd(path, &DescriptorSet::new(count, descs.dim(), data)?)?;
        }
        let params_json = serde_json::json!({
            "beta": params.beta,
            "alpha": params.alpha,
            "theta": params.theta,
            "gamma_over_all_pairs": params.gamma_over_all_pairs,
        });
        (graph, params_json, report.gamma)
    } else {
        let kind: BaselineKind = method.parse()?;
        let param = match kind {
            BaselineKind::Epsilon => a.eps,
            BaselineKind::Knn => a.k as f64,
            _ => 0.0,
        };
        let graph: Graph = build_baseline(kind, &positions, param)?;
        (graph, serde_json::json!({ "param": param }), None)
    };

    write_gimg(&a.output, &GraphFile::from_graph(&graph, &method, params_json))?;

    let stats = graph_stats(&graph);
    let report = serde_json::json!({
        "method": method,
        "input": positions.len(),
        "vertices": stats.vertices,
        "edges": stats.edges,
        "components": stats.components,
        "isolated": stats.isolated,
        "gamma": gamma,
        "output": a.output,
    });
    if let Some(path) = &a.stats {
        write_json_atomic(path, &report)?;
    }
    println!("{report}");
    Ok(())
}
