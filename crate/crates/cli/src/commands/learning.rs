use std::path::Path;

use mcmc_core::ebm::{
    annealed_score_langevin, ebm_mh_sample, ebm_ula_sample, train_cd, CdConfig, EnergyFunction, EnergyModel,
    InnerSampler, NegativeInit,
};
use mcmc_core::io::{numbered, parse_csv, CsvWriter};
use mcmc_core::optim::{map_estimate, sgld_sample_posterior, ConjugateGaussian, OptimizerTrace};
use mcmc_core::samplers::TemperatureSchedule;
use mcmc_core::{rng, Descriptor, Point};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{chain_seeds, fmt_list, header, initial_state, write_json, write_text};
use crate::settings::{parse_numbers, Failure, Outcome, Settings};

/// Rows of a numeric CSV restricted to its `x*` columns when it has a
/// header naming them, otherwise every column.
fn read_points(key: &str, path: &str) -> Outcome<Vec<Point>> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(Path::new(path), e))?;
    let table = parse_csv(&text).map_err(|e| Failure::config(key, e.to_string()))?;
    if table.rows.is_empty() {
        return Err(Failure::config(key, "no data rows"));
    }
    let cols: Vec<usize> = match &table.header {
        Some(h) => {
            let named: Vec<usize> = h
                .iter()
                .enumerate()
                .filter(|(_, n)| n.len() > 1 && n.starts_with('x') && n[1..].bytes().all(|b| b.is_ascii_digit()))
                .map(|(i, _)| i)
                .collect();
            if named.is_empty() {
                (0..h.len()).collect()
            } else {
                named
            }
        }
        None => (0..table.rows[0].len()).collect(),
    };
    table
        .rows
        .iter()
        .map(|r| Point::new(cols.iter().map(|&c| r[c]).collect()).map_err(Failure::from))
        .collect()
}

fn conjugate_model(s: &Settings, seed_default: u64) -> Outcome<(ConjugateGaussian, Value)> {
    let desc = s.descriptor("model")?.unwrap_or_else(|| Descriptor::new("model", "conjugate"));
    if desc.kind != "conjugate" {
        return Err(Failure::config("model.kind", format!("unknown model `{}` (expected conjugate)", desc.kind)));
    }
    desc.reject_unknown(&["n", "true_mean", "prior_var", "lik_var", "data_seed"])?;
    let prior_var = desc.f64_or("prior_var", 4.0)?;
    let lik_var = desc.f64_or("lik_var", 1.0)?;
    match s.raw("data") {
        Some(path) => {
            for k in ["n", "true_mean", "data_seed"] {
                if desc.params.contains_key(k) {
                    return Err(Failure::config(desc.field(k), "not used when data is read from a file"));
                }
            }
            let points = read_points("data", path)?;
            if points[0].dim() != 1 {
                return Err(Failure::config("data", "expected a single column of observations"));
            }
            let data: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let n = data.len();
            let m = ConjugateGaussian::new(data, prior_var, lik_var)?;
            Ok((m, json!({ "kind": "conjugate", "data": path, "n": n, "prior_var": prior_var, "lik_var": lik_var })))
        }
        None => {
            let n = desc.usize_or("n", 20)?;
            if n == 0 {
                return Err(Failure::config(desc.field("n"), "must be at least 1"));
            }
            let true_mean = desc.f64_or("true_mean", 1.5)?;
            let data_seed = desc.get_f64("data_seed")?.map_or(Ok(seed_default), |v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as u64)
                } else {
                    Err(Failure::config(desc.field("data_seed"), "expected a non-negative integer"))
                }
            })?;
            let m = ConjugateGaussian::simulate(n, true_mean, prior_var, lik_var, data_seed)?;
            Ok((
                m,
                json!({
                    "kind": "conjugate", "n": n, "true_mean": true_mean, "prior_var": prior_var,
                    "lik_var": lik_var, "data_seed": data_seed,
                }),
            ))
        }
    }
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

pub fn sgld(s: &Settings) -> Outcome<String> {
    s.reject_unknown(
        &["seed", "out", "data", "eta", "steps", "burn_in", "theta0", "map_steps", "map_eta", "chains", "report"],
        &["model"],
    )?;
    let (model, model_config) = conjugate_model(s, 0)?;
    let eta = s.f64_or("eta", 1e-3)?;
    let steps = s.count_or("steps", 100_000)?;
    let burn_in = s.usize_or("burn_in", 1000)?;
    let theta0 = initial_state(s, "theta0", 1)?;
    let map_steps = s.count_or("map_steps", 10_000)?;
    let map_eta = s.f64_or("map_eta", eta)?;
    let chains = s.count_or("chains", 1)?;
    let seed = s.u64_or("seed", 0)?;
    let out = s.required("out")?;
    let report_path = s.raw("report");
    let seeds = chain_seeds(seed, chains);

    let config = json!({
        "command": "sgld", "model": model_config, "eta": eta, "steps": steps, "burn_in": burn_in,
        "theta0": theta0, "map_steps": map_steps, "map_eta": map_eta, "chains": chains, "seed": seed,
        "chain_seeds": seeds, "out": out, "report": report_path,
    });
    let traces: Vec<OptimizerTrace> = seeds
        .par_iter()
        .map(|&sd| sgld_sample_posterior(&model, &theta0, eta, steps, burn_in, sd))
        .collect::<Result<_, _>>()?;
    let map = map_estimate(&model, &theta0, map_eta, map_steps)?;

    let mut csv = CsvWriter::new(&header(&config), &["chain".into(), "step".into(), "theta0".into()]);
    for (c, t) in traces.iter().enumerate() {
        for (i, th) in t.thetas.iter().enumerate() {
            csv.row(&[c as u64, (burn_in + i + 1) as u64], th.as_slice());
        }
    }
    write_text(out, &csv.finish())?;

    let (mean, var) = mean_var(traces.iter().flat_map(|t| t.thetas.iter().map(|p| p[0])));
    if let Some(path) = report_path {
        write_json(
            path,
            &json!({
                "config": config,
                "posterior_mean": model.posterior_mean(),
                "posterior_var": model.posterior_var(),
                "sample_mean": mean,
                "sample_var": var,
                "map": map[0],
                "closed_form_mode": model.posterior_mean(),
            }),
        )?;
    }
    Ok(format!(
        "sgld: mean {mean:.4} var {var:.5} (closed form {:.4}, {:.5}), MAP {:.6} -> {out} (seed={seed}, chains={chains})",
        model.posterior_mean(),
        model.posterior_var(),
        map[0]
    ))
}

fn energy_model(s: &Settings) -> Outcome<EnergyModel> {
    let desc = s.descriptor("model")?;
    match (desc, s.raw("model_file")) {
        (Some(d), None) => Ok(EnergyModel::from_descriptor(&d)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(Path::new(path), e))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| Failure::config("model_file", e.to_string()))?;
            let inner = value.get("model").cloned().unwrap_or(value);
            let model: EnergyModel =
                serde_json::from_value(inner).map_err(|e| Failure::config("model_file", e.to_string()))?;
            Ok(model.validated()?)
        }
        (Some(_), Some(_)) => Err(Failure::config("model_file", "give either model or model_file, not both")),
        (None, None) => Err(Failure::config("model", "required but not given")),
    }
}

fn inner_sampler(s: &Settings) -> Outcome<InnerSampler> {
    let Some(d) = s.descriptor("inner")? else {
        return Ok(CdConfig::default().inner);
    };
    let positive = |key: &str, default: f64| -> Outcome<f64> {
        let v = d.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Failure::config(d.field(key), "must be positive"))
        }
    };
    match d.kind.as_str() {
        "ula" => {
            d.reject_unknown(&["eps"])?;
            Ok(InnerSampler::Ula { eps: positive("eps", 0.01)? })
        }
        "mh" => {
            d.reject_unknown(&["sigma"])?;
            Ok(InnerSampler::Mh { sigma: positive("sigma", 0.5)? })
        }
        other => Err(Failure::config("inner.kind", format!("unknown inner sampler `{other}` (expected ula or mh)"))),
    }
}

pub fn ebm_train(s: &Settings) -> Outcome<String> {
    s.reject_unknown(
        &["seed", "out", "data", "k", "init", "persistent", "batch_size", "frozen", "eta", "steps"],
        &["model", "inner"],
    )?;
    let model = EnergyModel::from_descriptor(&s.required_descriptor("model")?)?;
    let data_path = s.required("data")?;
    let data = read_points("data", data_path)?;
    if data[0].dim() != model.dim() {
        return Err(Failure::config(
            "data",
            format!("data has {} columns but the model has dimension {}", data[0].dim(), model.dim()),
        ));
    }
    let init = match s.raw("init").unwrap_or("data") {
        "data" => NegativeInit::FromData,
        "noise" => NegativeInit::FromNoise,
        other => return Err(Failure::config("init", format!("expected data or noise, got `{other}`"))),
    };
    let frozen = match s.raw("frozen") {
        Some(text) => parse_numbers("frozen", text)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < model.theta().len() {
                    Ok(v as usize)
                } else {
                    Err(Failure::config("frozen", format!("`{v}` is not a parameter index")))
                }
            })
            .collect::<Outcome<Vec<_>>>()?,
        None => Vec::new(),
    };
    let batch_size = match s.raw("batch_size") {
        Some(_) => Some(s.count_or("batch_size", 1)?),
        None => None,
    };
    let cfg = CdConfig {
        k: s.count_or("k", 20)?,
        inner: inner_sampler(s)?,
        init,
        persistent: s.bool_or("persistent", false)?,
        batch_size,
        frozen,
    };
    let eta = s.f64_or("eta", 0.05)?;
    if eta <= 0.0 {
        return Err(Failure::config("eta", "must be positive"));
    }
    let steps = s.count_or("steps", 1000)?;
    let seed = s.u64_or("seed", 0)?;
    let out = s.required("out")?;

    let config = json!({
        "command": "ebm-train", "model": model, "data": data_path, "n_data": data.len(), "cd": cfg,
        "eta": eta, "steps": steps, "seed": seed, "out": out,
    });
    let trained = train_cd(&model, &data, &cfg, eta, steps, &mut rng::seeded(seed))?;
    write_json(out, &json!({ "config": config, "model": trained }))?;
    Ok(format!(
        "ebm-train: {} theta {} after {steps} updates -> {out} (seed={seed})",
        trained.family(),
        fmt_list(trained.theta())
    ))
}

enum Sampler {
    Ula { eps: f64, steps: usize },
    Mh { sigma: f64, steps: usize },
    Annealed { c: f64, schedule: TemperatureSchedule },
}

fn sampler(s: &Settings) -> Outcome<(Sampler, Value)> {
    let d = s
        .descriptor("sampler")?
        .unwrap_or_else(|| Descriptor::new("sampler", "ula"));
    let steps = d.usize_or("steps", 1000)?;
    if steps == 0 {
        return Err(Failure::config(d.field("steps"), "must be at least 1"));
    }
    let positive = |key: &str, default: f64| -> Outcome<f64> {
        let v = d.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Failure::config(d.field(key), "must be positive"))
        }
    };
    match d.kind.as_str() {
        "ula" => {
            d.reject_unknown(&["eps", "steps"])?;
            let eps = positive("eps", 0.01)?;
            Ok((Sampler::Ula { eps, steps }, json!({ "kind": "ula", "eps": eps, "steps": steps })))
        }
        "mh" => {
            d.reject_unknown(&["sigma", "steps"])?;
            let sigma = positive("sigma", 0.5)?;
            Ok((Sampler::Mh { sigma, steps }, json!({ "kind": "mh", "sigma": sigma, "steps": steps })))
        }
        "annealed" => {
            d.reject_unknown(&["c", "temps", "steps_per_level"])?;
            let c = positive("c", 0.01)?;
            let temps = match d.get_list("temps")? {
                Some(list) => list
                    .into_iter()
                    .map(|v| match v.as_slice() {
                        [t] => Ok(*t),
                        _ => Err(Failure::config(d.field("temps"), "temperatures are scalars")),
                    })
                    .collect::<Outcome<Vec<_>>>()?,
                None => vec![8.0, 4.0, 2.0, 1.0],
            };
            let schedule = TemperatureSchedule::new(temps, d.usize_or("steps_per_level", 500)?)
                .map_err(|e| Failure::config(d.field("temps"), e.to_string()))?;
            let v = json!({ "kind": "annealed", "c": c, "schedule": schedule });
            Ok((Sampler::Annealed { c, schedule }, v))
        }
        other => Err(Failure::config(
            "sampler.kind",
            format!("unknown sampler `{other}` (expected ula, mh or annealed)"),
        )),
    }
}

pub fn ebm_sample(s: &Settings) -> Outcome<String> {
    s.reject_unknown(&["seed", "out", "model_file", "n", "x0"], &["model", "sampler"])?;
    let model = energy_model(s)?;
    let (sampler, sampler_config) = sampler(s)?;
    let n = s.count_or("n", 1000)?;
    let x0 = initial_state(s, "x0", model.dim())?;
    let seed = s.u64_or("seed", 0)?;
    let out = s.required("out")?;

    let config = json!({
        "command": "ebm-sample", "model": model, "sampler": sampler_config, "n": n, "x0": x0,
        "seed": seed, "out": out,
    });
    let samples: Vec<Point> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, i);
            match &sampler {
                Sampler::Ula { eps, steps } => ebm_ula_sample(&model, &x0, *eps, *steps, &mut r),
                Sampler::Mh { sigma, steps } => ebm_mh_sample(&model, &x0, *sigma, *steps, &mut r),
                Sampler::Annealed { c, schedule } => {
                    annealed_score_langevin(|x, g| model.grad_x(x, g), &x0, *c, schedule, &mut r)
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let dim = model.dim();
    let mut cols = vec!["sample".to_string()];
    cols.extend(numbered("x", dim));
    let mut csv = CsvWriter::new(&header(&config), &cols);
    for (i, x) in samples.iter().enumerate() {
        csv.row(&[i as u64], x.as_slice());
    }
    write_text(out, &csv.finish())?;
    let mean: Vec<f64> = (0..dim)
        .map(|d| samples.iter().map(|p| p[d]).sum::<f64>() / n as f64)
        .collect();
    Ok(format!(
        "ebm-sample: {n} samples from {} with mean {} -> {out} (seed={seed})",
        model.family(),
        fmt_list(&mean)
    ))
}
