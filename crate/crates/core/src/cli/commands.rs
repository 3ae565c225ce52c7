//! The experiment behind each subcommand: config schema in, JSON result and
//! auxiliary files out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use crate::edges::{canny, log_zero_crossings, read_pgm, write_pgm_ascii};
use crate::error::{Error, Result};
use crate::estimators::{
    combine_cv, gaussian_infonce_bounds, gaussian_mi, infonce_bound, pilot_mean,
    variance_reduction_report_with, EstimatorTrace, DEFAULT_PILOT_FRACTION,
};
use crate::io::write_trace_csv;
use crate::numeric::{derive_seed, mean, sample_var};
use crate::prob::chain_sweep;
use crate::text_filter::{corpus_statistics, filter_caption, Lexicon, DEFAULT_MIN_CONTENT_TOKENS};
use crate::trainer::{
    convergence_ordering, seed_sweep, synthesize_multimodal, train, LatentConfig, LatentModel,
    TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// A premise of the experiment does not hold; results are still reported.
    Warning,
    /// An asserted property failed.
    Violation,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::Warning | Status::Violation => 2,
        }
    }
}

/// What a command produced, before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub result: Value,
    pub diagnostics: Vec<String>,
    /// Extra output files, relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(result: Value) -> Self {
        Outcome {
            status: Status::Ok,
            result,
            diagnostics: Vec::new(),
            files: Vec::new(),
        }
    }

    fn flag(&mut self, status: Status, message: String) {
        if self.status == Status::Ok || status == Status::Violation {
            self.status = status;
        }
        self.diagnostics.push(message);
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn insert(target: &mut Value, key: &str, value: Value) {
    if let Value::Object(map) = target {
        map.insert(key.to_string(), value);
    }
}

pub fn dpi_schema() -> Vec<(&'static str, String)> {
    vec![("num_systems", "1000".into()), ("max_alphabet", "6".into())]
}

pub fn dpi_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sweep = chain_sweep(cfg.get("num_systems")?, cfg.get("max_alphabet")?, cfg.seed)?;
    let mut result = to_value(&sweep)?;
    insert(&mut result, "violations", json!(sweep.violations()));
    let mut out = Outcome::new(result);
    if sweep.violations() > 0 {
        out.flag(
            Status::Violation,
            format!(
                "{} DPI, {} invariance and {} permutation violations",
                sweep.dpi_violations, sweep.invariance_violations, sweep.permutation_violations
            ),
        );
    }
    Ok(out)
}

fn latent_schema() -> Vec<(&'static str, String)> {
    let d = LatentConfig::default();
    vec![
        ("d_s", d.d_s.to_string()),
        ("d_struct", d.d_struct.to_string()),
        ("d_app", d.d_app.to_string()),
        ("noise_x", d.noise_x.to_string()),
        ("noise_y", d.noise_y.to_string()),
        ("eta_x", d.eta_x.to_string()),
        ("eta_y", d.eta_y.to_string()),
        ("n_samples", d.n_samples.to_string()),
    ]
}

fn latent_config(cfg: &ExperimentConfig) -> Result<LatentConfig> {
    Ok(LatentConfig {
        d_s: cfg.get("d_s")?,
        d_struct: cfg.get("d_struct")?,
        d_app: cfg.get("d_app")?,
        noise_x: cfg.get("noise_x")?,
        noise_y: cfg.get("noise_y")?,
        eta_x: cfg.get("eta_x")?,
        eta_y: cfg.get("eta_y")?,
        n_samples: cfg.get("n_samples")?,
        seed: cfg.seed,
    })
}

pub fn cv_schema() -> Vec<(&'static str, String)> {
    let mut s = vec![
        ("n_batches", "2000".into()),
        ("batch_size", "128".into()),
        ("pilot_fraction", DEFAULT_PILOT_FRACTION.to_string()),
        ("beta", "auto".into()),
        ("coupled", "false".into()),
        ("bootstrap", "200".into()),
        ("train_iterations", "500".into()),
        (
            "train_batch_size",
            TrainConfig::default().batch_size.to_string(),
        ),
    ];
    s.extend(latent_schema());
    s
}

/// Bootstrap standard error of var(cv)/var(xy) over index resamples.
fn bootstrap_ratio_se(xy: &[f64], cv: &[f64], resamples: usize, seed: u64) -> f64 {
    if resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xy.len();
    let ratios: Vec<f64> = (0..resamples)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let a: Vec<f64> = idx.iter().map(|&i| xy[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| cv[i]).collect();
            sample_var(&b) / sample_var(&a)
        })
        .filter(|r| r.is_finite())
        .collect();
    if ratios.len() < 2 {
        0.0
    } else {
        sample_var(&ratios).sqrt()
    }
}

pub fn cv_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let latent = latent_config(cfg)?;
    let n_batches: usize = cfg.get("n_batches")?;
    let batch_size: usize = cfg.get("batch_size")?;
    let pilot_fraction: f64 = cfg.get("pilot_fraction")?;
    let coupled: bool = cfg.get("coupled")?;
    let resamples: usize = cfg.get("bootstrap")?;
    let beta = match cfg.raw("beta")? {
        "auto" => None,
        _ => Some(cfg.get::<f64>("beta")?),
    };
    if batch_size < 2 {
        return Err(Error::Config("batch_size must be at least 2".into()));
    }

    let model = LatentModel::new(&latent)?;
    let trained = train(
        &synthesize_multimodal(&latent)?,
        &TrainConfig {
            iterations: cfg.get("train_iterations")?,
            batch_size: cfg.get("train_batch_size")?,
            seed: cfg.seed,
            ..TrainConfig::default()
        },
    )?
    .model;
    let t_main = (-trained.log_scale_main).exp();
    let t_struct = (-trained.log_scale_struct).exp();

    let batch_seed = derive_seed(cfg.seed, 7);
    let pairs = (0..n_batches as u64)
        .into_par_iter()
        .map(|b| {
            let data = model.sample(
                batch_size,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(batch_seed, b)),
            );
            let xy = infonce_bound(
                &trained.embed_visual(&data.x)?,
                &trained.embed_text(&data.y)?,
                t_main,
            )?
            .bound;
            // the coupled stream reuses the original pair as its structural view
            let ee = if coupled {
                xy
            } else {
                infonce_bound(
                    &trained.embed_visual(&data.x_e)?,
                    &trained.embed_text(&data.y_e)?,
                    t_struct,
                )?
                .bound
            };
            Ok((xy, ee))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let trace_xy = EstimatorTrace::new(pairs.iter().map(|p| p.0).collect())?;
    let trace_ee = EstimatorTrace::new(pairs.iter().map(|p| p.1).collect())?;

    let report = variance_reduction_report_with(&trace_xy, &trace_ee, pilot_fraction, beta)?;
    let rem_xy = pilot_mean(&trace_xy, pilot_fraction)?.remainder;
    let rem_ee = pilot_mean(&trace_ee, pilot_fraction)?.remainder;
    let cv = combine_cv(&rem_xy, &rem_ee, report.beta_star, report.mu_ee_pilot)?;
    let ratio = report.var_ratio();
    let se = bootstrap_ratio_se(
        rem_xy.values(),
        cv.values(),
        resamples,
        derive_seed(cfg.seed, 8),
    );

    let mut result = to_value(&report)?;
    insert(&mut result, "var_ratio", json!(ratio));
    insert(&mut result, "var_ratio_bootstrap_se", json!(se));
    insert(
        &mut result,
        "beta_source",
        json!(if beta.is_some() { "config" } else { "pilot" }),
    );
    insert(&mut result, "log_scale_main", json!(trained.log_scale_main));
    insert(
        &mut result,
        "log_scale_struct",
        json!(trained.log_scale_struct),
    );

    let mut out = Outcome::new(result);
    if !(report.rho > 0.0) {
        out.flag(
            Status::Warning,
            format!(
                "premise violated: traces are not positively correlated (rho = {}), no variance reduction expected",
                report.rho
            ),
        );
    }
    if !(ratio <= 1.0 + 2.0 * se) {
        out.flag(
            Status::Warning,
            format!("variance ratio {ratio} exceeds 1 + 2 bootstrap SE ({se})"),
        );
    }
    out.files
        .push(("trace_xy.csv".into(), trace_xy.to_csv().into_bytes()));
    out.files
        .push(("trace_ee.csv".into(), trace_ee.to_csv().into_bytes()));
    Ok(out)
}

pub fn toy_schema() -> Vec<(&'static str, String)> {
    let t = TrainConfig::default();
    let mut s = latent_schema();
    s.extend([
        ("d_embed", t.d_embed.to_string()),
        ("optimizer", "adamw".to_string()),
        ("learning_rate", t.learning_rate.to_string()),
        ("weight_decay", t.weight_decay.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("iterations", t.iterations.to_string()),
        ("lambda_struct", t.lambdas.structural.to_string()),
        ("lambda_consistency", t.lambdas.consistency.to_string()),
        ("lambda_local", t.lambdas.local.to_string()),
        ("log_scale_init", t.log_scale_init.to_string()),
        ("local_blocks", t.local_blocks.to_string()),
        ("local_top_k", t.local_top_k.to_string()),
        ("window", "50".to_string()),
        ("factor", "1".to_string()),
        ("sweep", "0".to_string()),
    ]);
    s
}

fn train_config(cfg: &ExperimentConfig) -> Result<TrainConfig> {
    let mut t = TrainConfig {
        d_embed: cfg.get("d_embed")?,
        optimizer: cfg.raw("optimizer")?.parse()?,
        learning_rate: cfg.get("learning_rate")?,
        weight_decay: cfg.get("weight_decay")?,
        batch_size: cfg.get("batch_size")?,
        iterations: cfg.get("iterations")?,
        log_scale_init: cfg.get("log_scale_init")?,
        local_blocks: cfg.get("local_blocks")?,
        local_top_k: cfg.get("local_top_k")?,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    t.lambdas.structural = cfg.get("lambda_struct")?;
    t.lambdas.consistency = cfg.get("lambda_consistency")?;
    t.lambdas.local = cfg.get("lambda_local")?;
    Ok(t)
}

/// Share of seeds that must satisfy the ordering and ratio properties.
pub const SWEEP_QUORUM: f64 = 0.7;

pub fn toy_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let latent = latent_config(cfg)?;
    let train_cfg = train_config(cfg)?;
    let window: usize = cfg.get("window")?;
    let factor: f64 = cfg.get("factor")?;
    let sweep: usize = cfg.get("sweep")?;

    if sweep == 0 {
        let run = train(&synthesize_multimodal(&latent)?, &train_cfg)?;
        let trace = &run.trace;
        let mut out = Outcome::new(Value::Null);
        let ordering = if trace.len() >= window {
            to_value(&convergence_ordering(trace, window, factor)?)?
        } else {
            out.diagnostics.push(format!(
                "trace of {} steps is shorter than the convergence window {window}",
                trace.len()
            ));
            Value::Null
        };
        let last = trace.records.last().expect("validated iterations >= 1");
        out.result = json!({
            "iterations": trace.len(),
            "convergence": ordering,
            "mean_grad_cosine": trace.mean_grad_cosine(),
            "final_quartile_min_ratio": trace.final_quartile_min_ratio(),
            "final_loss_main": last.loss_main,
            "final_loss_struct": last.loss_struct,
            "final_log_scale_main": last.log_scale_main,
            "final_log_scale_struct": last.log_scale_struct,
        });
        out.files
            .push(("trace.csv".into(), trace.to_csv().into_bytes()));
        return Ok(out);
    }

    let seeds: Vec<u64> = (0..sweep as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let runs = seed_sweep(&latent, &train_cfg, &seeds, window, factor)?;
    let summaries: Vec<_> = runs.iter().map(|(s, _)| s.clone()).collect();
    let cosines: Vec<f64> = summaries.iter().map(|s| s.mean_grad_cosine).collect();
    let mean_cosine = mean(&cosines);
    let positive = cosines.iter().filter(|&&c| c > 0.0).count();
    let later = summaries.iter().filter(|s| s.aux_later).count();
    let bounded = summaries.iter().filter(|s| s.ratio_bounded).count();
    let quorum = (SWEEP_QUORUM * sweep as f64 - 1e-9).ceil() as usize;

    let mut out = Outcome::new(json!({
        "num_seeds": sweep,
        "mean_grad_cosine": mean_cosine,
        "positive_cosine_seeds": positive,
        "aux_later_seeds": later,
        "ratio_bounded_seeds": bounded,
        "quorum": quorum,
        "seeds": to_value(&summaries)?,
    }));
    if !(mean_cosine > 0.0) {
        out.flag(
            Status::Violation,
            format!("mean gradient cosine {mean_cosine} is not positive"),
        );
    }
    if later < quorum {
        out.flag(
            Status::Violation,
            format!("structural loss converged no earlier than the main loss in only {later}/{sweep} seeds"),
        );
    }
    if bounded < quorum {
        out.flag(
            Status::Violation,
            format!("gradient-norm ratio stayed bounded in only {bounded}/{sweep} seeds"),
        );
    }
    for (summary, trace) in &runs {
        out.files.push((
            format!("trace_seed{}.csv", summary.seed),
            trace.to_csv().into_bytes(),
        ));
    }
    Ok(out)
}

pub fn lexicon_schema() -> Vec<(&'static str, String)> {
    vec![
        ("corpus", String::new()),
        ("lexicon", String::new()),
        ("min_content_tokens", DEFAULT_MIN_CONTENT_TOKENS.to_string()),
    ]
}

fn read_text(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {path}: {e}")))
}

/// One caption per non-blank line.
pub fn read_corpus(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

pub fn lexicon_stats(cfg: &ExperimentConfig) -> Result<Outcome> {
    let corpus = read_corpus(&read_text(cfg.required("corpus")?)?);
    let lexicon = Lexicon::parse(&read_text(cfg.required("lexicon")?)?)?;
    let min: usize = cfg.get("min_content_tokens")?;
    let stats = corpus_statistics(&corpus, &lexicon, min)?;
    let mut filtered = String::new();
    for caption in &corpus {
        filtered.push_str(&filter_caption(caption, &lexicon, min).filtered);
        filtered.push('\n');
    }
    let mut out = Outcome::new(to_value(&stats)?);
    out.files
        .push(("filtered.txt".into(), filtered.into_bytes()));
    Ok(out)
}

pub fn edge_schema() -> Vec<(&'static str, String)> {
    vec![
        ("input", String::new()),
        ("method", "canny".into()),
        ("sigma", "1".into()),
        ("low", "0.1".into()),
        ("high", "0.2".into()),
        ("min_slope", "0.01".into()),
    ]
}

pub fn edge_extract(cfg: &ExperimentConfig) -> Result<Outcome> {
    let path = cfg.required("input")?;
    let bytes =
        std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
    let img = read_pgm(&bytes)?;
    let sigma: f64 = cfg.get("sigma")?;
    let edges = match cfg.raw("method")? {
        "canny" => canny(&img, sigma, cfg.get("low")?, cfg.get("high")?)?,
        "log" => log_zero_crossings(&img, sigma, cfg.get("min_slope")?)?,
        other => {
            return Err(Error::Config(format!(
                "unknown edge method {other:?} (canny or log)"
            )))
        }
    };
    let mut out = Outcome::new(json!({
        "height": edges.height(),
        "width": edges.width(),
        "edge_count": edges.count(),
    }));
    out.files
        .push(("edges.pgm".into(), write_pgm_ascii(&edges.to_image())));
    Ok(out)
}

pub fn infonce_schema() -> Vec<(&'static str, String)> {
    vec![
        ("rho", "0.9".into()),
        ("n", "128".into()),
        ("batches", "200".into()),
    ]
}

pub fn infonce_gauss(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rho: f64 = cfg.get("rho")?;
    let n: usize = cfg.get("n")?;
    let batches: usize = cfg.get("batches")?;
    if batches < 2 {
        return Err(Error::Config("batches must be at least 2".into()));
    }
    let bounds: Vec<f64> = gaussian_infonce_bounds(rho, n, batches, cfg.seed)?
        .iter()
        .map(|b| b.bound)
        .collect();
    let analytic = gaussian_mi(rho);
    let ln_n = (n as f64).ln();
    let mean_bound = mean(&bounds);
    let se = (sample_var(&bounds) / batches as f64).sqrt();
    let max_bound = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut out = Outcome::new(json!({
        "analytic_mi": analytic,
        "mean_bound": mean_bound,
        "standard_error": se,
        "max_bound": max_bound,
        "ln_n": ln_n,
    }));
    if !(mean_bound <= analytic + 3.0 * se) {
        out.flag(
            Status::Violation,
            format!("mean bound {mean_bound} exceeds the analytic MI {analytic} by more than 3 SE"),
        );
    }
    if !(max_bound <= ln_n) {
        out.flag(
            Status::Violation,
            format!("a batch bound {max_bound} exceeds ln N = {ln_n}"),
        );
    }
    out.files
        .push(("bounds.csv".into(), write_trace_csv(&bounds).into_bytes()));
    Ok(out)
}
