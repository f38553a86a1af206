use crate::cli::{DetectArgs, Provider};
use crate::util::load_gray;
use gims::core::DescriptorSet;
use gims::descriptor::{describe, DescriptorProvider};
use gims::formats::{write_gimd, write_gimk};
use gims::imagekp::{detect_on, extract_patches, DetectParams, Patch, Pyramid};
use gims::Result;

pub fn provider_of(p: Provider) -> DescriptorProvider {
    match p {
        Provider::Hist128 => DescriptorProvider::Hist128,
        Provider::Rawpatch => DescriptorProvider::RawPatch,
    }
}

pub fn run(a: DetectArgs) -> Result<()> {
    let img = load_gray(&a.image)?;
    let pyr = Pyramid::build(&img)?;
    let params = DetectParams {
        max_keypoints: a.max_kp,
        contrast_threshold: a.contrast_threshold,
        edge_ratio: a.edge_ratio,
    };
    let kps = detect_on(&pyr, &params);
    write_gimk(&a.output, &kps)?;

    if a.descriptors.is_some() || a.patches.is_some() {
        let patches = extract_patches(&pyr, &kps);
        if let Some(path) = &a.patches {
            let dim = Patch::SIDE * Patch::SIDE;
            let mut data = Vec::with_capacity(patches.len() * dim);
            for p in &patches {
                data.extend_from_slice(p.data());
            }
            write_gimd(path, &DescriptorSet::new(patches.len(), dim, data)?)?;
        }
        if let Some(path) = &a.descriptors {
            write_gimd(path, &describe(&patches, &provider_of(a.provider))?)?;
        }
    }

    println!(
        "{}",
        serde_json::json!({
            "image": a.image,
            "keypoints": kps.len(),
            "output": a.output,
        })
    );
    Ok(())
}
