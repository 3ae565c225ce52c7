//! The `structlab` experiment driver.
//!
//! Every command resolves its parameters (schema defaults, then `--config`,
//! then flags), runs, prints one JSON envelope to stdout and writes the same
//! envelope plus any auxiliary files to `--out`. Exit status is 0 when every
//! asserted property holds, 2 on a violation or warning and 1 on error.

mod commands;
mod config;

pub use commands::{read_corpus, Outcome, Status, SWEEP_QUORUM};
pub use config::{parse_config, ExperimentConfig, DEFAULT_SEED};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::io::to_json;

#[derive(Debug, Parser)]
#[command(
    name = "structlab",
    version,
    about = "Structure-centric alignment experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Declares a flag struct whose fields override config keys of the same name.
macro_rules! flags {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Args)]
        struct $name {
            $(#[arg(long)] $field: Option<$ty>,)*
        }

        impl $name {
            fn overrides(&self) -> Vec<(&'static str, String)> {
                let mut v = Vec::new();
                $(if let Some(x) = &self.$field {
                    v.push((stringify!($field), x.to_string()));
                })*
                v
            }
        }
    };
}

flags!(DpiFlags {
    num_systems: usize,
    max_alphabet: usize
});

flags!(CvFlags {
    n_batches: usize,
    batch_size: usize,
    pilot_fraction: f64,
    beta: String,
    coupled: bool,
    bootstrap: usize,
    train_iterations: usize,
    train_batch_size: usize,
    d_s: usize,
    d_struct: usize,
    d_app: usize,
    noise_x: f64,
    noise_y: f64,
    eta_x: f64,
    eta_y: f64,
    n_samples: usize,
});

flags!(ToyFlags {
    d_s: usize,
    d_struct: usize,
    d_app: usize,
    noise_x: f64,
    noise_y: f64,
    eta_x: f64,
    eta_y: f64,
    n_samples: usize,
    d_embed: usize,
    optimizer: String,
    learning_rate: f64,
    weight_decay: f64,
    batch_size: usize,
    iterations: usize,
    lambda_struct: f64,
    lambda_consistency: f64,
    lambda_local: f64,
    log_scale_init: f64,
    local_blocks: usize,
    local_top_k: usize,
    window: usize,
    factor: f64,
    sweep: usize,
});

flags!(LexiconFlags {
    corpus: String,
    lexicon: String,
    min_content_tokens: usize
});

flags!(EdgeFlags {
    input: String,
    method: String,
    sigma: f64,
    low: f64,
    high: f64,
    min_slope: f64,
});

flags!(InfoNceFlags {
    rho: f64,
    n: usize,
    batches: usize
});

#[derive(Debug, Subcommand)]
enum Command {
    /// Data-processing inequality and total-MI invariance sweep over random discrete chains
    DpiVerify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: DpiFlags,
    },
    /// Control-variate variance reduction on InfoNCE bound traces from a trained toy model
    CvExperiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: CvFlags,
    },
    /// Toy training run (or seed sweep) with gradient and convergence diagnostics
    ToyTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: ToyFlags,
    },
    /// Appearance-term filtering statistics over a caption corpus
    LexiconStats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: LexiconFlags,
    },
    /// Canny or LoG edge map of a PGM image
    EdgeExtract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: EdgeFlags,
    },
    /// InfoNCE bound against the analytic MI of a bivariate Gaussian
    InfonceGauss {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: InfoNceFlags,
    },
}

type Runner = fn(&ExperimentConfig) -> Result<Outcome>;
type Schema = fn() -> Vec<(&'static str, String)>;

struct Plan<'a> {
    name: &'static str,
    report: &'static str,
    schema: Schema,
    run: Runner,
    common: &'a Common,
    overrides: Vec<(&'static str, String)>,
}

impl Command {
    fn plan(&self) -> Plan<'_> {
        use commands::*;
        let (name, report, schema, run, common, overrides): (_, _, Schema, Runner, _, _) =
            match self {
                Command::DpiVerify { common, flags } => (
                    "dpi-verify",
                    "dpi_verify.json",
                    dpi_schema,
                    dpi_verify,
                    common,
                    flags.overrides(),
                ),
                Command::CvExperiment { common, flags } => (
                    "cv-experiment",
                    "report.json",
                    cv_schema,
                    cv_experiment,
                    common,
                    flags.overrides(),
                ),
                Command::ToyTrain { common, flags } => (
                    "toy-train",
                    "toy_train.json",
                    toy_schema,
                    toy_train,
                    common,
                    flags.overrides(),
                ),
                Command::LexiconStats { common, flags } => (
                    "lexicon-stats",
                    "lexicon_stats.json",
                    lexicon_schema,
                    lexicon_stats,
                    common,
                    flags.overrides(),
                ),
                Command::EdgeExtract { common, flags } => (
                    "edge-extract",
                    "edge_extract.json",
                    edge_schema,
                    edge_extract,
                    common,
                    flags.overrides(),
                ),
                Command::InfonceGauss { common, flags } => (
                    "infonce-gauss",
                    "infonce_gauss.json",
                    infonce_schema,
                    infonce_gauss,
                    common,
                    flags.overrides(),
                ),
            };
        Plan {
            name,
            report,
            schema,
            run,
            common,
            overrides,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    status: Status,
    seed: Option<u64>,
    config: Option<&'a std::collections::BTreeMap<String, String>>,
    result: Value,
    diagnostics: Vec<String>,
}

fn write_outputs(dir: &Path, report: &str, envelope: &str, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &outcome.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    std::fs::write(dir.join(report), envelope)?;
    Ok(())
}

fn error_envelope(command: &str, cfg: Option<&ExperimentConfig>, message: String) -> String {
    let env = Envelope {
        command,
        status: Status::Error,
        seed: cfg.map(|c| c.seed),
        config: cfg.map(|c| c.values()),
        result: Value::Null,
        diagnostics: vec![message],
    };
    to_json(&env).unwrap_or_else(|_| "{\"status\":\"error\"}\n".into())
}

/// Runs a planned command; returns the stdout text and the exit code.
fn execute(plan: Plan<'_>) -> (String, i32) {
    let cfg = match ExperimentConfig::resolve(
        &(plan.schema)(),
        plan.common.config.as_deref(),
        plan.common.seed,
        plan.overrides,
    ) {
        Ok(c) => c,
        Err(e) => return (error_envelope(plan.name, None, e.to_string()), 1),
    };
    let outcome = match (plan.run)(&cfg) {
        Ok(o) => o,
        Err(e) => return (error_envelope(plan.name, Some(&cfg), e.to_string()), 1),
    };
    let env = Envelope {
        command: plan.name,
        status: outcome.status,
        seed: Some(cfg.seed),
        config: Some(cfg.values()),
        result: outcome.result.clone(),
        diagnostics: outcome.diagnostics.clone(),
    };
    let text = match to_json(&env) {
        Ok(t) => t,
        Err(e) => return (error_envelope(plan.name, Some(&cfg), e.to_string()), 1),
    };
    if let Err(e) = write_outputs(&plan.common.out, plan.report, &text, &outcome) {
        return (error_envelope(plan.name, Some(&cfg), e.to_string()), 1);
    }
    (text, outcome.status.exit_code())
}

/// Entry point behind the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            print!(
                "{}",
                error_envelope("", None, e.to_string().trim_end().to_string())
            );
            return 1;
        }
    };
    let (text, code) = execute(cli.command.plan());
    print!("{text}");
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_a_schema_key() {
        let cli = Cli::try_parse_from([
            "structlab",
            "toy-train",
            "--iterations",
            "3",
            "--optimizer",
            "sgd",
        ])
        .unwrap();
        let plan = cli.command.plan();
        let keys: Vec<_> = (plan.schema)().into_iter().map(|(k, _)| k).collect();
        for (k, _) in &plan.overrides {
            assert!(keys.contains(k), "{k}");
        }
        assert_eq!(plan.overrides.len(), 2);
    }

    #[test]
    fn parse_errors_exit_with_one() {
        assert_eq!(run(["structlab", "dpi-verify", "--num-systems", "x"]), 1);
        assert_eq!(run(["structlab", "no-such-command"]), 1);
    }
}
