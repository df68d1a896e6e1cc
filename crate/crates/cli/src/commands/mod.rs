mod learning;
mod render;
mod sampling;

use std::path::Path;

use mcmc_core::io::write_atomic;
use mcmc_core::{rng, Point};
use serde_json::Value;

use crate::settings::{parse_numbers, Failure, Outcome, Settings};

pub fn run(command: &str, s: &Settings) -> Outcome<String> {
    match command {
        "sample" => sampling::sample(s),
        "diagnose" => sampling::diagnose(s),
        "sde" => sampling::sde(s),
        "pssmlt" => render::pssmlt(s),
        "mis" => render::mis(s),
        "sgld" => learning::sgld(s),
        "ebm-train" => learning::ebm_train(s),
        "ebm-sample" => learning::ebm_sample(s),
        other => Err(Failure::config("command", format!("unknown command `{other}`"))),
    }
}

/// Compact JSON of the resolved configuration, used as the first line of
/// every artifact.
fn header(config: &Value) -> String {
    config.to_string()
}

fn write_text(path: &str, text: &str) -> Outcome<()> {
    let p = Path::new(path);
    write_atomic(p, text.as_bytes()).map_err(|e| Failure::io(p, e))
}

fn write_json(path: &str, value: &Value) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// One seed per chain: the seed itself for a single chain, derived
/// sub-seeds otherwise.
fn chain_seeds(seed: u64, chains: usize) -> Vec<u64> {
    if chains == 1 {
        vec![seed]
    } else {
        (0..chains as u64).map(|i| rng::derive_seed(seed, i)).collect()
    }
}

/// Initial state from `key`, defaulting to the origin, checked against `dim`.
fn initial_state(s: &Settings, key: &str, dim: usize) -> Outcome<Point> {
    let coords = match s.raw(key) {
        Some(text) => parse_numbers(key, text)?,
        None => vec![0.0; dim],
    };
    if coords.len() != dim {
        return Err(Failure::config(
            key,
            format!("has {} coordinates but the model has dimension {dim}", coords.len()),
        ));
    }
    Ok(Point::new(coords)?)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}
