use mcmc_core::io::{image_csv_string, pgm_string};
use mcmc_core::mcint::{mc_estimate, mis_estimate, Strategy, TwoBump};
use mcmc_core::pssmlt::{normalize_image, render_chains, Builtin, RenderConfig, SplatMode};
use mcmc_core::{rng, Descriptor};
use serde_json::json;

use super::{header, write_json, write_text};
use crate::settings::{Failure, Outcome, Settings};

/// Stream reserved for the plain-MC normalization pass.
const NORMALIZE_STREAM: u64 = u64::MAX;

pub fn pssmlt(s: &Settings) -> Outcome<String> {
    s.reject_unknown(
        &[
            "seed",
            "out",
            "width",
            "height",
            "mutations",
            "large_step_prob",
            "sigma",
            "splat",
            "normalize_samples",
            "chains",
            "csv",
        ],
        &["estimator"],
    )?;
    let estimator = Builtin::from_descriptor(&s.required_descriptor("estimator")?)?;
    let d = RenderConfig::default();
    let splat = match s.raw("splat").unwrap_or("expected") {
        "expected" => SplatMode::Expected,
        "accepted" => SplatMode::Accepted,
        other => return Err(Failure::config("splat", format!("expected `expected` or `accepted`, got `{other}`"))),
    };
    let cfg = RenderConfig {
        width: s.count_or("width", d.width)?,
        height: s.count_or("height", d.height)?,
        n_mutations: s.count_or("mutations", d.n_mutations)?,
        large_step_prob: s.f64_or("large_step_prob", d.large_step_prob)?,
        sigma: s.f64_or("sigma", d.sigma)?,
        splat,
        seed: s.u64_or("seed", 0)?,
    };
    cfg.validate()?;
    let n_mc = s.count_or("normalize_samples", 100_000)?;
    let chains = s.count_or("chains", 1)?;
    let out = s.required("out")?;
    let csv_path = s.raw("csv");

    let config = json!({
        "command": "pssmlt",
        "estimator": estimator,
        "render": cfg,
        "normalize_samples": n_mc,
        "chains": chains,
        "out": out,
        "csv": csv_path,
    });
    let render = render_chains(&estimator, &cfg, chains)?;
    let image = normalize_image(&render.image, &estimator, n_mc, &mut rng::substream(cfg.seed, NORMALIZE_STREAM))?;
    let head = header(&config);
    write_text(out, &pgm_string(&image, &head))?;
    if let Some(p) = csv_path {
        write_text(p, &image_csv_string(&image, &head))?;
    }
    Ok(format!(
        "pssmlt: {}x{} image to {out} (seed={}, chains={chains}, mutations={}, acceptance={:.4}, mean={:.6})",
        cfg.width,
        cfg.height,
        cfg.seed,
        render.mutations,
        render.acceptance_rate(),
        image.mean()
    ))
}

fn two_bump(desc: &Descriptor) -> Outcome<TwoBump> {
    if desc.kind != "two-bump" {
        return Err(Failure::config("integrand.kind", format!("unknown integrand `{}` (expected two-bump)", desc.kind)));
    }
    desc.reject_unknown(&["narrow_mean", "narrow_sd", "narrow_amp", "wide_mean", "wide_sd", "wide_amp"])?;
    let d = TwoBump::default();
    let t = TwoBump {
        narrow_mean: desc.f64_or("narrow_mean", d.narrow_mean)?,
        narrow_sd: desc.f64_or("narrow_sd", d.narrow_sd)?,
        narrow_amp: desc.f64_or("narrow_amp", d.narrow_amp)?,
        wide_mean: desc.f64_or("wide_mean", d.wide_mean)?,
        wide_sd: desc.f64_or("wide_sd", d.wide_sd)?,
        wide_amp: desc.f64_or("wide_amp", d.wide_amp)?,
    };
    for (key, amp) in [("narrow_amp", t.narrow_amp), ("wide_amp", t.wide_amp)] {
        if amp.is_nan() || amp < 0.0 {
            return Err(Failure::config(desc.field(key), "must be non-negative"));
        }
    }
    Ok(t)
}

pub fn mis(s: &Settings) -> Outcome<String> {
    s.reject_unknown(&["seed", "out", "n"], &["integrand"])?;
    let desc = s
        .descriptor("integrand")?
        .unwrap_or_else(|| Descriptor::new("integrand", "two-bump"));
    let integrand = two_bump(&desc)?;
    let (narrow, wide) = integrand.strategies()?;
    let n = s.count_or("n", 100_000)?;
    let seed = s.u64_or("seed", 0)?;
    let out = s.required("out")?;
    let f = |x: &[f64]| integrand.eval(x);
    let truth = integrand.integral();

    let strategies: [&dyn Strategy; 2] = [&narrow, &wide];
    let mis = mis_estimate(f, &strategies, n, &mut rng::substream(seed, 0))?;
    // Single strategies get the same number of evaluated points.
    let budget = mis.evaluated_points;
    let singles = [("narrow", &narrow), ("wide", &wide)]
        .into_iter()
        .enumerate()
        .map(|(i, (name, st))| {
            let e = mc_estimate(f, st, budget, &mut rng::substream(seed, 1 + i as u64))?;
            Ok(json!({
                "strategy": name,
                "estimate": e,
                "estimator_variance": e.std_error * e.std_error,
            }))
        })
        .collect::<Result<Vec<_>, mcmc_core::Error>>()?;

    let config = json!({ "command": "mis", "integrand": integrand, "n": n, "seed": seed, "out": out });
    let e = &mis.estimate;
    write_json(
        out,
        &json!({
            "config": config,
            "truth": truth,
            "mis": mis,
            "mis_estimator_variance": e.std_error * e.std_error,
            "z_score": (e.value - truth) / e.std_error,
            "single": singles,
        }),
    )?;
    Ok(format!(
        "mis: estimate {:.6} ± {:.6} (truth {truth}) from {budget} points -> {out} (seed={seed})",
        e.value, e.std_error
    ))
}
