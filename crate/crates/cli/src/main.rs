//! `mcmc`: batch experiment runner.
//!
//! Every subcommand reads flags and, optionally, a `--config` file of
//! `key=value` lines (flags win). Outputs are written atomically and start
//! with a line recording the fully resolved configuration. On failure a
//! single JSON error line goes to stderr and the exit status is 2 for
//! configuration errors, 3 for divergence or other runtime failures and 1
//! for I/O errors.

mod commands;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::{parse_assignments, parse_config_text, Failure, Outcome, Settings};

#[derive(Parser, Debug)]
#[command(name = "mcmc", version, about = "Run MCMC, PSSMLT, SGLD and EBM experiments from the command line")]
struct Cli {
    /// File of `key=value` lines; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Random seed (default 0).
    #[arg(long)]
    seed: Option<String>,
    /// Output file.
    #[arg(long)]
    out: Option<String>,
    /// Extra `key=value` setting, same syntax as the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

macro_rules! command_args {
    ($name:ident { $($field:ident : $help:literal),* $(,)? }) => {
        #[derive(Args, Debug, Default)]
        struct $name {
            #[command(flatten)]
            common: Common,
            $(
                #[arg(long, help = $help)]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
                vec![
                    ("seed", self.common.seed.clone()),
                    ("out", self.common.out.clone()),
                    $((stringify!($field), self.$field.clone()),)*
                ]
            }
        }
    };
}

command_args!(SampleArgs {
    target: "Target descriptor, e.g. `gaussian:dim=2` or `banana:curvature=0.5,scale=2`",
    sampler: "Sampler descriptor: `mh:sigma=`, `ula:tau=`, `mala:tau=`, `almc:tau=,t_max=,levels=,steps_per_level=`, `hmc:eps=,steps=`",
    x0: "Initial state, comma separated (default: origin)",
    steps: "Total transitions per chain (default 10000)",
    burn_in: "Transitions discarded at the start (default 0)",
    thin: "Keep every k-th state after burn-in (default 1)",
    chains: "Independent chains run in parallel (default 1)",
    report: "Optional JSON diagnostics report",
});

command_args!(DiagnoseArgs {
    input: "Samples CSV as written by `sample`",
    target: "Target for the histogram TV distance (1 or 2 dimensions)",
    lower: "Lower histogram bound (default -5)",
    upper: "Upper histogram bound (default 5)",
    bins: "Histogram bins per dimension (default 40)",
});

command_args!(SdeArgs {
    process: "`brownian` or `langevin` (default brownian)",
    target: "Target whose score drives the Langevin SDE",
    constraint: "Region confining Brownian motion: `disk:radius=`, `annulus:inner=,outer=`, `square:half_width=`",
    x0: "Initial state (default: origin)",
    dim: "Dimension when no target is given (default 2)",
    steps: "Number of steps (default 1000)",
    dt: "Langevin time step (default 0.01)",
    sigma: "Brownian step standard deviation (default 0.1)",
    paths: "Independent paths (default 1)",
});

command_args!(PssmltArgs {
    estimator: "Integrand: `constant`, `left-half`, `spike:radius=,width=`, `two-island`",
    width: "Image width (default 32)",
    height: "Image height (default 32)",
    mutations: "Mutations per chain (default 1000000)",
    large_step_prob: "Probability of an independent large step (default 0.3)",
    sigma: "Small-step standard deviation (default 0.02)",
    splat: "`expected` or `accepted` (default expected)",
    normalize_samples: "Plain-MC samples for brightness normalization (default 100000)",
    chains: "Independent chains merged into one image (default 1)",
    csv: "Optional raw pixel CSV",
});

command_args!(SgldArgs {
    model: "Conjugate model: `conjugate:n=,true_mean=,prior_var=,lik_var=,data_seed=`",
    data: "Optional one-column CSV of observations replacing simulated data",
    eta: "Step size (default 0.001)",
    steps: "Total SGLD steps (default 100000)",
    burn_in: "Steps discarded (default 1000)",
    theta0: "Initial parameter (default 0)",
    map_steps: "SGD iterations for the MAP estimate (default 10000)",
    map_eta: "SGD step size for the MAP estimate (default: eta)",
    chains: "Independent SGLD chains (default 1)",
    report: "Optional JSON summary",
});

command_args!(EbmTrainArgs {
    model: "Initial model: `gaussian:dim=,mu=,sigma=` or `quadratic:dim=,a=,b=`",
    data: "Training data CSV (columns x0, x1, ... or unlabeled numbers)",
    k: "Inner MCMC steps per negative sample (default 20)",
    inner: "Inner sampler: `ula:eps=` or `mh:sigma=` (default ula:eps=0.01)",
    init: "Negative sample start: `data` or `noise` (default data)",
    persistent: "Carry negatives across updates (default false)",
    batch_size: "Minibatch size drawn with replacement (default: full data)",
    frozen: "Parameter indices held fixed, `/` separated",
    eta: "Learning rate (default 0.05)",
    steps: "Parameter updates (default 1000)",
});

command_args!(EbmSampleArgs {
    model: "Model descriptor, as for ebm-train",
    model_file: "Model JSON written by ebm-train",
    sampler: "`ula:eps=,steps=`, `mh:sigma=,steps=` or `annealed:c=,temps=,steps_per_level=`",
    n: "Number of independent samples (default 1000)",
    x0: "Initial state (default: origin)",
});

command_args!(MisArgs {
    integrand: "`two-bump` with optional narrow_mean, narrow_sd, narrow_amp, wide_mean, wide_sd, wide_amp",
    n: "Samples per strategy (default 100000)",
});

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a sampler on a target and write the retained states.
    Sample(SampleArgs),
    /// Summarize a samples CSV: acceptance, moments, ESS, optional TV distance.
    Diagnose(DiagnoseArgs),
    /// Simulate Brownian motion or the Langevin SDE.
    Sde(SdeArgs),
    /// Render an image with primary-sample-space Metropolis light transport.
    Pssmlt(PssmltArgs),
    /// Sample a conjugate Gaussian posterior with SGLD and compare to closed form.
    Sgld(SgldArgs),
    /// Fit an energy-based model with contrastive divergence.
    EbmTrain(EbmTrainArgs),
    /// Draw samples from an energy-based model.
    EbmSample(EbmSampleArgs),
    /// Compare multiple importance sampling against single strategies.
    Mis(MisArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Diagnose(_) => "diagnose",
            Command::Sde(_) => "sde",
            Command::Pssmlt(_) => "pssmlt",
            Command::Sgld(_) => "sgld",
            Command::EbmTrain(_) => "ebm-train",
            Command::EbmSample(_) => "ebm-sample",
            Command::Mis(_) => "mis",
        }
    }

    fn flags(&self) -> (Vec<(&'static str, Option<String>)>, &[String]) {
        match self {
            Command::Sample(a) => (a.pairs(), &a.common.set),
            Command::Diagnose(a) => (a.pairs(), &a.common.set),
            Command::Sde(a) => (a.pairs(), &a.common.set),
            Command::Pssmlt(a) => (a.pairs(), &a.common.set),
            Command::Sgld(a) => (a.pairs(), &a.common.set),
            Command::EbmTrain(a) => (a.pairs(), &a.common.set),
            Command::EbmSample(a) => (a.pairs(), &a.common.set),
            Command::Mis(a) => (a.pairs(), &a.common.set),
        }
    }
}

fn resolve(cli: Cli) -> Outcome<(String, Settings)> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut flags = BTreeMap::new();
    let name = match &cli.command {
        Some(cmd) => {
            let (pairs, set) = cmd.flags();
            for (k, v) in parse_assignments(set)? {
                flags.insert(k, v);
            }
            for (k, v) in pairs {
                if let Some(v) = v {
                    flags.insert(k.to_string(), v);
                }
            }
            if let Some(from_file) = file.get("command") {
                if from_file != cmd.name() {
                    return Err(Failure::config(
                        "command",
                        format!("config file is for `{from_file}` but `{}` was requested", cmd.name()),
                    ));
                }
            }
            cmd.name().to_string()
        }
        None => file
            .get("command")
            .cloned()
            .ok_or_else(|| Failure::config("command", "no subcommand given and the config file names none"))?,
    };
    Ok((name, Settings::new(file, flags)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", Failure::config("arguments", first).json_line());
            return ExitCode::from(2);
        }
    };
    let result = resolve(cli).and_then(|(name, settings)| commands::run(&name, &settings));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.json_line());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
