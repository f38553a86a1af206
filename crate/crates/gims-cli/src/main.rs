//! `gims` — graph-based image matching from the command line.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

mod cli;
mod cmd;
mod util;

use clap::Parser;
use cli::{Cli, Cmd};
use gims::Error;
use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match apply_config(argv) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(parsed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(cli: Cli) -> gims::Result<()> {
    match cli.cmd {
        Cmd::Detect(a) => cmd::detect::run(a),
        Cmd::BuildGraph(a) => cmd::graph::run(a),
        Cmd::Match(a) => cmd::matching::run(a),
        Cmd::Eval(a) => cmd::eval::run(a),
        Cmd::Synth(a) => cmd::synth::run(a),
        Cmd::Sweep(a) => cmd::sweep::run(a),
        Cmd::Train(a) => cmd::train::run(a),
        Cmd::InitWeights(a) => cmd::misc::init_weights(a),
        Cmd::Compare(a) => cmd::misc::compare(a),
        Cmd::Profile(a) => cmd::misc::profile(a),
        Cmd::Scaling(a) => cmd::misc::scaling(a),
        Cmd::SynthScene(a) => cmd::misc::synth_scene(a),
    }
}

/// Merges `--config file.json` into the argument list: each key becomes a
/// `--key value` pair appended to the command line unless the flag was
/// given explicitly (explicit flags win). Booleans toggle bare flags and
/// arrays join with commas.
fn apply_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config: Option<String> = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let text =
        std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
    let given: std::collections::HashSet<String> = out
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|s| s.split('=').next().unwrap_or(s).to_string())
        .collect();
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    for key in keys {
        let flag = key.trim_start_matches('-');
        if given.contains(flag) {
            continue;
        }
        match &map[key] {
            serde_json::Value::Bool(true) => out.push(format!("--{flag}")),
            serde_json::Value::Bool(false) => {}
            serde_json::Value::Array(items) => {
                let rendered: Result<Vec<String>, String> =
                    items.iter().map(render_config_scalar).collect();
                out.push(format!("--{flag}"));
                out.push(rendered?.join(","));
            }
            other => {
                out.push(format!("--{flag}"));
                out.push(render_config_scalar(other)?);
            }
        }
    }
    Ok(out)
}

fn render_config_scalar(v: &serde_json::Value) -> Result<String, String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(format!(
            "config values must be strings, numbers, booleans, or arrays of those; got {other}"
        )),
    }
}
