use crate::cli::TrainArgs;
use crate::cmd::detect::provider_of;
use crate::util::{load_gray, read_manifest, resolve};
use gims::agc::AgcParams;
use gims::encoder::{alternating_kinds, ModelWeights};
use gims::formats::{atomic_write, read_gimw, read_train_state, write_gimw, write_train_state, TrainState};
use gims::trainer::{prepare_train_item, train_step, Adam, SynthPair, TrainItem};
use gims::{Error, Result};
use std::path::{Path, PathBuf};

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(a: TrainArgs) -> Result<()> {
    if a.steps == 0 || a.batch == 0 {
        return Err(Error::InvalidInput("--steps and --batch must be at least 1".into()));
    }
    let (manifest, base) = read_manifest(&a.pairs)?;
    if manifest.pairs.is_empty() {
        return Err(Error::InvalidInput("manifest has no pairs".into()));
    }
    let provider = provider_of(a.provider);
    let agc = AgcParams::default();
    eprintln!("preparing {} pairs…", manifest.pairs.len());
    let items: Vec<TrainItem> = manifest
        .pairs
        .iter()
        .map(|entry| {
            let pair = SynthPair {
                source: load_gray(&resolve(&base, &entry.source))?,
                warped: load_gray(&resolve(&base, &entry.warped))?,
                homography: entry.homography()?,
                seed: entry.seed,
            };
            prepare_train_item(&pair, a.max_kp, &agc, &provider, a.epsilon_gt)
        })
        .collect::<Result<_>>()?;
    let desc_dim = items[0].a.descriptors.ncols();
    if desc_dim != a.dim {
        return Err(Error::DimensionMismatch(format!(
            "--dim {} but the {:?} descriptors are {desc_dim}-D",
            a.dim, a.provider
        )));
    }

    let state_path = a.state.clone().unwrap_or_else(|| sibling(&a.output, "state.json"));
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| sibling(&a.output, "loss.csv"));
    let (mut model, mut adam, mut losses, seed0) = if a.resume {
        let model = read_gimw(&a.output)?;
        let state = read_train_state(&state_path)?;
        (model, state.adam, state.losses, state.seed)
    } else {
        let model = ModelWeights::xavier_init(
            a.dim,
            a.layers,
            a.heads,
            &alternating_kinds(a.attn_pairs),
            a.seed,
        )?;
        let adam = Adam::new(a.lr, model.param_count());
        (model, adam, Vec::new(), a.seed)
    };

    let offset = losses.len();
    let progress_every = (a.steps / 20).max(1);
    for step in 0..a.steps {
        let batch: Vec<TrainItem> = (0..a.batch)
            .map(|b| items[((offset + step) * a.batch + b) % items.len()].clone())
            .collect();
        let loss = train_step(&mut model, &batch, &mut adam, a.sinkhorn_iters)?;
        losses.push(loss);
        if (step + 1) % progress_every == 0 || step + 1 == a.steps {
            eprintln!("step {}/{}: loss {loss:.6}", step + 1, a.steps);
        }
    }

    write_gimw(&a.output, &model)?;
    write_train_state(
        &state_path,
        &TrainState {
            adam,
            losses: losses.clone(),
            seed: seed0,
        },
    )?;
    let mut csv = String::from("step,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{loss}\n", i + 1));
    }
    atomic_write(&loss_path, csv.as_bytes())?;
    let report = serde_json::json!({
        "steps": losses.len(),
        "final_loss": losses.last(),
        "checkpoint": a.output,
        "state": state_path,
        "loss_csv": loss_path,
    });
    println!("{report}");
    Ok(())
}
