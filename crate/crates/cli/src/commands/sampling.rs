use std::collections::BTreeMap;

use mcmc_core::diagnostics::{DiagnosticsReport, Grid};
use mcmc_core::io::{numbered, parse_csv, CsvWriter};
use mcmc_core::samplers::{run_chain, Chain, SamplerConfig};
use mcmc_core::sde::{simulate_brownian, simulate_langevin_sde, RegionConstraint, SdePath};
use mcmc_core::targets::make_target;
use mcmc_core::{Descriptor, Point, Target, TargetDensity};
use rayon::prelude::*;
use serde_json::json;

use super::{chain_seeds, header, initial_state, write_json, write_text};
use crate::settings::{Failure, Outcome, Settings};

const NO_TV: Option<(&TargetDensity, &Grid)> = None;

pub fn sample(s: &Settings) -> Outcome<String> {
    s.reject_unknown(
        &["seed", "out", "x0", "steps", "burn_in", "thin", "chains", "report"],
        &["target", "sampler"],
    )?;
    let target_desc = s.required_descriptor("target")?;
    let target = make_target(&target_desc)?;
    let sampler_desc = s.descriptor("sampler")?.unwrap_or_else(|| Descriptor::new("sampler", "mh"));
    let sampler = SamplerConfig::from_descriptor(&sampler_desc)?;
    let steps = s.count_or("steps", 10_000)?;
    let burn_in = s.usize_or("burn_in", 0)?;
    let thin = s.count_or("thin", 1)?;
    let chains = s.count_or("chains", 1)?;
    let seed = s.u64_or("seed", 0)?;
    let x0 = initial_state(s, "x0", target.dim())?;
    let out = s.required("out")?;
    let report_path = s.raw("report");
    let seeds = chain_seeds(seed, chains);

    let config = json!({
        "command": "sample",
        "target": target,
        "sampler": sampler,
        "x0": x0,
        "steps": steps,
        "burn_in": burn_in,
        "thin": thin,
        "chains": chains,
        "seed": seed,
        "chain_seeds": seeds,
        "out": out,
        "report": report_path,
    });

    let runs: Vec<Chain> = seeds
        .par_iter()
        .map(|&sd| run_chain(&sampler, &target, &x0, steps, burn_in, thin, sd))
        .collect::<Result<_, _>>()?;

    let dim = target.dim();
    let mut cols = vec!["chain".to_string(), "step".to_string(), "accepted".to_string()];
    cols.extend(numbered("x", dim));
    let mut csv = CsvWriter::new(&header(&config), &cols);
    let mut rows = 0;
    for (c, chain) in runs.iter().enumerate() {
        for (x, &step) in chain.samples.iter().zip(&chain.sample_steps) {
            let acc = u64::from(chain.accept_flags[step]);
            csv.row(&[c as u64, step as u64, acc], x.as_slice());
            rows += 1;
        }
    }
    write_text(out, &csv.finish())?;

    let flags: Vec<bool> = runs.iter().flat_map(|c| c.accept_flags.iter().copied()).collect();
    let acceptance = flags.iter().filter(|&&a| a).count() as f64 / flags.len() as f64;
    if let Some(path) = report_path {
        let per_chain = runs
            .iter()
            .map(|c| DiagnosticsReport::from_chain(c, NO_TV))
            .collect::<Result<Vec<_>, _>>()?;
        let pooled_samples: Vec<Point> = runs.iter().flat_map(|c| c.samples.iter().cloned()).collect();
        let pooled = DiagnosticsReport::from_samples(&pooled_samples, &flags, NO_TV)?;
        let evaluations: Vec<_> = runs.iter().map(|c| c.evaluations).collect();
        write_json(
            path,
            &json!({ "config": config, "chains": per_chain, "pooled": pooled, "evaluations": evaluations }),
        )?;
    }
    Ok(format!(
        "sample: {rows} rows of {dim}-dimensional samples to {out} (seed={seed}, chains={chains}, sampler={sampler}, acceptance={acceptance:.4})"
    ))
}

struct ChainRows {
    samples: Vec<Point>,
    flags: Vec<bool>,
}

/// Groups a samples CSV by its `chain` column. Acceptance comes from the
/// `accepted` column, or is inferred from state changes when it is absent.
fn read_samples(path: &str) -> Outcome<BTreeMap<u64, ChainRows>> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(std::path::Path::new(path), e))?;
    let table = parse_csv(&text).map_err(|e| Failure::config("input", e.to_string()))?;
    if table.rows.is_empty() {
        return Err(Failure::config("input", "no samples"));
    }
    let width = table.rows[0].len();
    let (coords, chain_col, acc_col): (Vec<usize>, _, _) = match &table.header {
        Some(h) => (
            h.iter()
                .enumerate()
                .filter(|(_, name)| name.len() > 1 && name.starts_with('x') && name[1..].bytes().all(|b| b.is_ascii_digit()))
                .map(|(i, _)| i)
                .collect(),
            table.column("chain"),
            table.column("accepted"),
        ),
        None => ((0..width).collect(), None, None),
    };
    if coords.is_empty() {
        return Err(Failure::config("input", "no coordinate columns (x0, x1, ...) found"));
    }
    let mut groups: BTreeMap<u64, ChainRows> = BTreeMap::new();
    for row in &table.rows {
        let id = chain_col.map_or(0, |c| row[c] as u64);
        let x: Vec<f64> = coords.iter().map(|&i| row[i]).collect();
        let g = groups.entry(id).or_insert_with(|| ChainRows { samples: Vec::new(), flags: Vec::new() });
        let flag = match acc_col {
            Some(c) => row[c] != 0.0,
            None => g.samples.last().is_none_or(|prev| prev.as_slice() != x.as_slice()),
        };
        g.samples.push(Point::new(x)?);
        g.flags.push(flag);
    }
    Ok(groups)
}

pub fn diagnose(s: &Settings) -> Outcome<String> {
    s.reject_unknown(&["seed", "out", "input", "lower", "upper", "bins"], &["target"])?;
    let input = s.required("input")?;
    let out = s.required("out")?;
    let seed = s.u64_or("seed", 0)?;
    let lower = s.f64_or("lower", -5.0)?;
    let upper = s.f64_or("upper", 5.0)?;
    let bins = s.usize_or("bins", 40)?;
    let groups = read_samples(input)?;
    let dim = groups.values().next().map_or(0, |g| g.samples[0].dim());

    let target = match s.descriptor("target")? {
        Some(d) => {
            let t = make_target(&d)?;
            if t.dim() != dim {
                return Err(Failure::config("target", format!("target has dimension {} but samples have {dim}", t.dim())));
            }
            if dim > 2 {
                return Err(Failure::config("target", "histogram TV is available for 1 or 2 dimensions"));
            }
            Some(t)
        }
        None => None,
    };
    let grid = match &target {
        Some(_) => Some(Grid::uniform(dim, lower, upper, bins).map_err(|e| match e {
            mcmc_core::Error::Config { message, .. } => Failure::config("bins", message),
            other => other.into(),
        })?),
        None => None,
    };
    let against = target.as_ref().zip(grid.as_ref());

    let config = json!({
        "command": "diagnose",
        "input": input,
        "target": target,
        "grid": grid.as_ref().map(|_| json!({ "lower": lower, "upper": upper, "bins": bins })),
        "seed": seed,
        "out": out,
    });
    let mut per_chain = Vec::new();
    let mut all_samples = Vec::new();
    let mut all_flags = Vec::new();
    for (id, g) in &groups {
        let r = DiagnosticsReport::from_samples(&g.samples, &g.flags, against)?;
        per_chain.push(json!({ "chain": id, "n": g.samples.len(), "report": r }));
        all_samples.extend(g.samples.iter().cloned());
        all_flags.extend(g.flags.iter().copied());
    }
    let pooled = DiagnosticsReport::from_samples(&all_samples, &all_flags, against)?;
    write_json(out, &json!({ "config": config, "chains": per_chain, "pooled": pooled }))?;
    let tv = pooled.tv_distance.map_or(String::new(), |t| format!(", tv={t:.4}"));
    Ok(format!(
        "diagnose: {} samples in {} chain(s) from {input}, acceptance={:.4}, min_ess={:.1}{tv} -> {out} (seed={seed})",
        all_samples.len(),
        groups.len(),
        pooled.acceptance_rate,
        pooled.min_ess()
    ))
}

pub fn sde(s: &Settings) -> Outcome<String> {
    s.reject_unknown(
        &["seed", "out", "process", "x0", "dim", "steps", "dt", "sigma", "paths"],
        &["target", "constraint"],
    )?;
    let process = s.raw("process").unwrap_or("brownian");
    let steps = s.count_or("steps", 1000)?;
    let paths = s.count_or("paths", 1)?;
    let seed = s.u64_or("seed", 0)?;
    let out = s.required("out")?;
    let seeds = chain_seeds(seed, paths);

    let (config, results): (_, Vec<SdePath>) = match process {
        "brownian" => {
            if s.descriptor("target")?.is_some() {
                return Err(Failure::config("target", "only used by the langevin process"));
            }
            if s.raw("dt").is_some() {
                return Err(Failure::config("dt", "only used by the langevin process"));
            }
            let constraint = s.descriptor("constraint")?.map(|d| RegionConstraint::from_descriptor(&d)).transpose()?;
            let dim = s.count_or("dim", 2)?;
            let x0 = initial_state(s, "x0", dim)?;
            let sigma = s.f64_or("sigma", 0.1)?;
            let config = json!({
                "command": "sde", "process": "brownian", "constraint": constraint.as_ref().map(|c| c.name()),
                "x0": x0, "steps": steps, "sigma": sigma, "paths": paths, "seed": seed, "path_seeds": seeds, "out": out,
            });
            let results = seeds
                .par_iter()
                .map(|&sd| simulate_brownian(&x0, steps, sigma, constraint.as_ref(), sd))
                .collect::<Result<_, _>>()?;
            (config, results)
        }
        "langevin" => {
            if s.descriptor("constraint")?.is_some() {
                return Err(Failure::config("constraint", "only used by the brownian process"));
            }
            if s.raw("sigma").is_some() {
                return Err(Failure::config("sigma", "only used by the brownian process"));
            }
            let target = make_target(&s.required_descriptor("target")?)?;
            let x0 = initial_state(s, "x0", target.dim())?;
            let dt = s.f64_or("dt", 0.01)?;
            let config = json!({
                "command": "sde", "process": "langevin", "target": target,
                "x0": x0, "steps": steps, "dt": dt, "paths": paths, "seed": seed, "path_seeds": seeds, "out": out,
            });
            let results = seeds
                .par_iter()
                .map(|&sd| simulate_langevin_sde(&target, &x0, steps, dt, sd))
                .collect::<Result<_, _>>()?;
            (config, results)
        }
        other => {
            return Err(Failure::config("process", format!("expected brownian or langevin, got `{other}`")));
        }
    };

    let dim = results[0].points[0].dim();
    let mut cols = vec!["path".to_string(), "step".to_string(), "t".to_string()];
    cols.extend(numbered("x", dim));
    let mut csv = CsvWriter::new(&header(&config), &cols);
    let mut row = Vec::with_capacity(dim + 1);
    for (p, path) in results.iter().enumerate() {
        for (k, (x, t)) in path.points.iter().zip(path.times()).enumerate() {
            row.clear();
            row.push(t);
            row.extend_from_slice(x.as_slice());
            csv.row(&[p as u64, k as u64], &row);
        }
    }
    write_text(out, &csv.finish())?;
    let end = results[0].points.last().expect("paths are never empty");
    Ok(format!(
        "sde: {paths} {process} path(s) of {steps} steps to {out} (seed={seed}, first path ends at {})",
        super::fmt_list(end.as_slice())
    ))
}
