use crate::cli::{
    CompareArgs, InitWeightsArgs, ProfileArgs, ReportFormat, ScalingArgs, SynthSceneArgs,
};
use crate::util::{load_gray, save_gray_png};
use gims::agc::AgcParams;
use gims::compare::{compare as run_compare, CompareParams, Method};
use gims::encoder::{alternating_kinds, ModelWeights};
use gims::formats::{atomic_write, read_gimd, read_gimk, write_gimw};
use gims::geometry::RansacConfig;
use gims::imagekp::DetectParams;
use gims::perf::{profile_pipeline, scaling_study, ProfileConfig};
use gims::trainer::synthetic_scene;
use gims::{Error, Result};

pub fn init_weights(a: InitWeightsArgs) -> Result<()> {
    let w = ModelWeights::xavier_init(
        a.dim,
        a.layers,
        a.heads,
        &alternating_kinds(a.attn_pairs),
        a.seed,
    )?;
    write_gimw(&a.output, &w)?;
    println!(
        "{}",
        serde_json::json!({
            "dim": a.dim,
            "layers": a.layers,
            "heads": a.heads,
            "attn_pairs": a.attn_pairs,
            "parameters": w.param_count(),
            "output": a.output,
        })
    );
    Ok(())
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let kps = read_gimk(&a.keypoints)?;
    let descs = read_gimd(&a.descriptors)?;
    if descs.count() != kps.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} keypoints but {} descriptors",
            kps.len(),
            descs.count()
        )));
    }
    let positions: Vec<(f64, f64)> = kps.iter().map(|k| (k.x, k.y)).collect();
    let methods: Vec<Method> = if a.methods.is_empty() {
        Method::all()
    } else {
        a.methods
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?
    };
    let params = CompareParams {
        agc: AgcParams {
            beta: a.beta,
            alpha: a.alpha,
            theta: a.theta,
            gamma_over_all_pairs: a.gamma_all_pairs,
        },
        epsilon: a.eps,
        knn_k: a.k,
    };
    let report = run_compare(&positions, &descs, &methods, &params);
    let text = match a.format {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Csv => report.to_csv(),
    };
    match &a.output {
        Some(path) => atomic_write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn profile(a: ProfileArgs) -> Result<()> {
    let img_a = load_gray(&a.image_a)?;
    let img_b = load_gray(&a.image_b)?;
    let cfg = ProfileConfig {
        detect: DetectParams {
            max_keypoints: a.max_kp,
            ..DetectParams::default()
        },
        graph: if a.no_graph {
            None
        } else {
            Some(AgcParams::default())
        },
        sinkhorn_iterations: a.sinkhorn_iters,
        min_confidence: a.min_conf,
        ransac: RansacConfig::default(),
    };
    let rows = profile_pipeline(&img_a, &img_b, &cfg)?;
    let mut csv = String::from("stage,seconds,input_sizes\n");
    for row in &rows {
        let sizes: Vec<String> = row.input_sizes.iter().map(ToString::to_string).collect();
        csv.push_str(&format!(
            "{},{:.6},{}\n",
            row.stage,
            row.seconds,
            sizes.join(";")
        ));
    }
    match &a.output {
        Some(path) => {
            atomic_write(path, csv.as_bytes())?;
            println!("{}", serde_json::json!({ "stages": rows.len(), "output": path }));
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn scaling(a: ScalingArgs) -> Result<()> {
    let study = scaling_study(&a.sizes, a.seed)?;
    let csv = study.to_csv();
    match &a.output {
        Some(path) => {
            atomic_write(path, csv.as_bytes())?;
            println!(
                "{}",
                serde_json::json!({ "exponent": study.exponent, "output": path })
            );
        }
        None => {
            print!("{csv}");
            eprintln!(
                "{}",
                serde_json::json!({ "exponent": study.exponent })
            );
        }
    }
    Ok(())
}

pub fn synth_scene(a: SynthSceneArgs) -> Result<()> {
    let img = synthetic_scene(a.width, a.height, a.blobs, a.seed);
    save_gray_png(&a.output, &img)?;
    println!(
        "{}",
        serde_json::json!({
            "width": a.width,
            "height": a.height,
            "blobs": a.blobs,
            "seed": a.seed,
            "output": a.output,
        })
    );
    Ok(())
}
