use crate::cli::SynthArgs;
use crate::util::{load_gray, save_gray_png, write_json_atomic, Manifest, PairEntry};
use gims::core::Image;
use gims::trainer::{synth_pair, HomographyRanges};
use gims::{Error, Result};
use rayon::prelude::*;
use std::path::PathBuf;

pub fn run(a: SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::InvalidInput("--count must be at least 1".into()));
    }
    let rot = a.rot_deg.to_radians();
    let ranges = HomographyRanges {
        scale: (a.scale_lo, a.scale_hi),
        rotation: (-rot, rot),
        translation: (-a.trans_frac, a.trans_frac),
        perspective: (-a.persp_frac, a.persp_frac),
        crop: (a.crop_lo, a.crop_hi),
    };
    ranges.validate()?;
    std::fs::create_dir_all(&a.out_dir)?;

    // Load each source once; manifest entries keep absolute source paths so
    // the dataset can be consumed from anywhere.
    let mut sources: Vec<(PathBuf, String, Image)> = Vec::with_capacity(a.images.len());
    for path in &a.images {
        let img = load_gray(path)?;
        let abs = path.canonicalize()?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        sources.push((abs, stem, img));
    }
    {
        let mut stems: Vec<&str> = sources.iter().map(|(_, s, _)| s.as_str()).collect();
        stems.sort_unstable();
        stems.dedup();
        if stems.len() != sources.len() {
            return Err(Error::InvalidInput(
                "source images must have distinct file stems".into(),
            ));
        }
    }

    let tasks: Vec<(usize, usize, u64)> = (0..sources.len())
        .flat_map(|si| (0..a.count).map(move |k| (si, k)))
        .enumerate()
        .map(|(global, (si, k))| (si, k, a.seed.wrapping_add(global as u64)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<PairEntry>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(si, k, seed)| {
                let (abs, stem, img) = &sources[si];
                let pair = synth_pair(img, seed, &ranges)?;
                let warped_name = format!("{stem}_w{k:03}.png");
                save_gray_png(&a.out_dir.join(&warped_name), &pair.warped)?;
                let entry = PairEntry {
                    source: abs.clone(),
                    warped: PathBuf::from(&warped_name),
                    homography: *pair.homography.matrix(),
                    seed,
                    width: img.width(),
                    height: img.height(),
                };
                write_json_atomic(&a.out_dir.join(format!("{stem}_w{k:03}.json")), &entry)?;
                Ok(entry)
            })
            .collect()
    });
    let mut pairs = Vec::with_capacity(results.len());
    for r in results {
        pairs.push(r?);
    }
    write_json_atomic(&a.out_dir.join("manifest.json"), &Manifest { pairs })?;
    println!(
        "{}",
        serde_json::json!({
            "pairs": tasks.len(),
            "out_dir": a.out_dir,
            "manifest": a.out_dir.join("manifest.json"),
        })
    );
    Ok(())
}
