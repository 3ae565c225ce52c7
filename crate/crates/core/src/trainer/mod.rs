//! Toy reproduction of the gradient-dynamics analysis: two linear encoders,
//! shared between original and structure-only views, trained on synthetic
//! latent-variable data with the full structure-centric objective.

mod convergence;
mod data;
mod optim;

pub use convergence::{detect_convergence, order_curves, ConvergenceOrdering, MIN_WINDOW};
pub use data::{synthesize_multimodal, LatentConfig, LatentModel, SyntheticDataset};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::losses::{
    consistency_loss_unchecked, local_gamma, local_multipositive_unchecked,
    symmetric_infonce_unchecked, LossEval, LossWeights, MAX_LOG_SCALE,
};
use crate::numeric::{derive_seed, dot, norm, Matrix};

/// Toy defaults. With lr 1e-2 or the CLIP logit scale ln(1/0.07), randomly
/// initialized linear encoders reach a compromise point within a few hundred
/// steps where the main and structural gradients oppose each other.
pub const TOY_LEARNING_RATE: f64 = 1e-3;
pub const TOY_LOG_SCALE_INIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub d_embed: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lambdas: LossWeights,
    pub log_scale_init: f64,
    /// Number of coordinate blocks used as regions/chunks; 0 disables the local term.
    pub local_blocks: usize,
    pub local_top_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_embed: 8,
            optimizer: OptimizerKind::AdamW,
            learning_rate: TOY_LEARNING_RATE,
            weight_decay: 0.05,
            batch_size: 16,
            iterations: 2000,
            lambdas: LossWeights::default(),
            log_scale_init: TOY_LOG_SCALE_INIT,
            local_blocks: 0,
            local_top_k: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset: &SyntheticDataset) -> Result<()> {
        if self.d_embed == 0 || self.iterations == 0 || self.batch_size < 2 {
            return Err(Error::invalid(
                "d_embed and iterations must be positive and batch_size at least 2",
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate must be finite and non-negative",
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(
                "weight_decay must be finite and non-negative",
            ));
        }
        if !(self.log_scale_init <= MAX_LOG_SCALE) {
            return Err(Error::invalid(format!(
                "log_scale_init above {MAX_LOG_SCALE}"
            )));
        }
        let w = self.lambdas;
        if [w.structural, w.consistency, w.local]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if self.batch_size > dataset.len() {
            return Err(Error::invalid(format!(
                "batch_size {} exceeds dataset size {}",
                self.batch_size,
                dataset.len()
            )));
        }
        if self.local_blocks > 0 {
            if self.local_blocks > dataset.input_dim() {
                return Err(Error::invalid("more local blocks than input coordinates"));
            }
            if self.local_top_k == 0 || self.local_top_k > self.local_blocks {
                return Err(Error::invalid("local_top_k must be in 1..=local_blocks"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss_main: f64,
    pub loss_struct: f64,
    pub loss_consistency: f64,
    pub loss_local: Option<f64>,
    pub grad_norm_main: f64,
    pub grad_norm_struct: f64,
    pub grad_cosine: f64,
    pub log_scale_main: f64,
    pub log_scale_struct: f64,
}

impl TrainRecord {
    /// ‖∇𝓛_{I',T'}‖ / ‖∇𝓛_{I,T}‖, infinite when the main gradient vanishes.
    pub fn grad_ratio(&self) -> f64 {
        if self.grad_norm_main == 0.0 {
            f64::INFINITY
        } else {
            self.grad_norm_struct / self.grad_norm_main
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<TrainRecord>,
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "step",
    "loss_main",
    "loss_struct",
    "loss_consistency",
    "loss_local",
    "grad_norm_main",
    "grad_norm_struct",
    "grad_norm_ratio",
    "grad_cosine",
    "log_scale_main",
    "log_scale_struct",
];

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn loss_main(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss_main).collect()
    }

    pub fn loss_struct(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss_struct).collect()
    }

    pub fn mean_grad_cosine(&self) -> f64 {
        crate::numeric::mean(
            &self
                .records
                .iter()
                .map(|r| r.grad_cosine)
                .collect::<Vec<_>>(),
        )
    }

    /// Smallest gradient-norm ratio over the last quarter of the run.
    pub fn final_quartile_min_ratio(&self) -> f64 {
        let start = self.records.len() - self.records.len().div_ceil(4);
        self.records[start..]
            .iter()
            .map(TrainRecord::grad_ratio)
            .fold(f64::INFINITY, f64::min)
    }

    /// One row per step; `loss_local` is empty when the local term is off.
    pub fn to_csv(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let cells = [
                r.step.to_string(),
                fmt17(r.loss_main),
                fmt17(r.loss_struct),
                fmt17(r.loss_consistency),
                r.loss_local.map(fmt17).unwrap_or_default(),
                fmt17(r.grad_norm_main),
                fmt17(r.grad_norm_struct),
                fmt17(r.grad_ratio()),
                fmt17(r.grad_cosine),
                fmt17(r.log_scale_main),
                fmt17(r.log_scale_struct),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn convergence_ordering(
    trace: &TrainTrace,
    window: usize,
    factor: f64,
) -> Result<ConvergenceOrdering> {
    if trace.is_empty() {
        return Err(Error::invalid("empty training trace"));
    }
    order_curves(&trace.loss_main(), &trace.loss_struct(), window, factor)
}

/// Encoder weights after training, row-major `d_embed × d_in` each.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub visual: Matrix,
    pub text: Matrix,
    pub log_scale_main: f64,
    pub log_scale_struct: f64,
}

impl TrainedModel {
    /// Unit-norm visual embeddings of the rows of `x`.
    pub fn embed_visual(&self, x: &Matrix) -> Result<EmbeddingBatch> {
        embed(&self.visual, x)
    }

    /// Unit-norm text embeddings of the rows of `y`.
    pub fn embed_text(&self, y: &Matrix) -> Result<EmbeddingBatch> {
        embed(&self.text, y)
    }
}

fn embed(w: &Matrix, x: &Matrix) -> Result<EmbeddingBatch> {
    if x.cols() != w.cols() {
        return Err(Error::mismatch("encoder input width", w.cols(), x.cols()));
    }
    EmbeddingBatch::normalized(x.matmul_t(w)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: TrainTrace,
    pub model: TrainedModel,
}

/// L2-normalized linear encoding of the rows of `x`, with the pre-norm lengths.
struct Encoded {
    e: Matrix,
    norms: Vec<f64>,
}

const NORM_FLOOR: f64 = 1e-12;

fn encode(w: &Matrix, x: &Matrix) -> Encoded {
    let mut e = x.matmul_t(w).expect("encoder input width matches weights");
    let mut norms = Vec::with_capacity(e.rows());
    for i in 0..e.rows() {
        let n = norm(e.row(i)).max(NORM_FLOOR);
        e.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Encoded { e, norms }
}

/// Accumulates ∂L/∂W given ∂L/∂e for e = Wx/‖Wx‖.
fn backprop(grad_e: &Matrix, enc: &Encoded, x: &Matrix, out: &mut [f64]) {
    let d_in = x.cols();
    for i in 0..x.rows() {
        let e = enc.e.row(i);
        let g = grad_e.row(i);
        let radial = dot(e, g);
        for (r, (gr, er)) in g.iter().zip(e).enumerate() {
            let dz = (gr - er * radial) / enc.norms[i];
            if dz == 0.0 {
                continue;
            }
            for (o, xv) in out[r * d_in..(r + 1) * d_in].iter_mut().zip(x.row(i)) {
                *o += dz * xv;
            }
        }
    }
}

fn gather(m: &Matrix, rows: &[usize]) -> Matrix {
    let d = m.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(m.row(r));
    }
    Matrix::from_vec(rows.len(), d, data).expect("gathered shape")
}

/// Copies of each row restricted to one contiguous coordinate block, sample-major.
fn block_views(m: &Matrix, blocks: usize) -> Matrix {
    let (n, d) = m.shape();
    let mut out = Matrix::zeros(n * blocks, d);
    for i in 0..n {
        for j in 0..blocks {
            let (lo, hi) = (j * d / blocks, (j + 1) * d / blocks);
            out.row_mut(i * blocks + j)[lo..hi].copy_from_slice(&m.row(i)[lo..hi]);
        }
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn check(eval: &LossEval, step: usize, what: &str) -> Result<()> {
    if eval.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            step,
            what: what.to_string(),
        })
    }
}

pub fn train(dataset: &SyntheticDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_impl(dataset, config, true)
}

/// Loss values and the combined parameter gradient for one batch.
struct StepEval {
    record: TrainRecord,
    grad: Vec<f64>,
}

struct Trainer<'a> {
    dataset: &'a SyntheticDataset,
    config: &'a TrainConfig,
    d_in: usize,
    block: usize,
}

impl Trainer<'_> {
    fn ls_main_at(&self) -> usize {
        2 * self.block
    }

    fn ls_struct_at(&self) -> usize {
        2 * self.block + 1
    }

    /// With `observe_aux` off only the main loss is evaluated and optimized.
    fn evaluate(
        &self,
        params: &[f64],
        rows: &[usize],
        step: usize,
        observe_aux: bool,
    ) -> Result<StepEval> {
        let (d_e, d_in, block) = (self.config.d_embed, self.d_in, self.block);
        let weights = self.config.lambdas;
        let w_v = Matrix::from_vec(d_e, d_in, params[..block].to_vec())?;
        let w_t = Matrix::from_vec(d_e, d_in, params[block..2 * block].to_vec())?;
        let (ls_main, ls_struct) = (params[self.ls_main_at()], params[self.ls_struct_at()]);

        let xb = gather(&self.dataset.x, rows);
        let yb = gather(&self.dataset.y, rows);
        let img = encode(&w_v, &xb);
        let txt = encode(&w_t, &yb);
        let main = symmetric_infonce_unchecked(&img.e, &txt.e, ls_main.exp())?;
        check(&main, step, "main contrastive loss")?;

        let mut g_main = vec![0.0; 2 * block];
        backprop(&main.grad_a, &img, &xb, &mut g_main[..block]);
        backprop(&main.grad_b, &txt, &yb, &mut g_main[block..]);
        let mut grad = g_main.clone();
        grad.extend([main.grad_log_scale, 0.0]);

        let mut record = TrainRecord {
            step,
            loss_main: main.value,
            loss_struct: 0.0,
            loss_consistency: 0.0,
            loss_local: None,
            grad_norm_main: norm(&g_main),
            grad_norm_struct: 0.0,
            grad_cosine: 0.0,
            log_scale_main: ls_main,
            log_scale_struct: ls_struct,
        };

        if observe_aux {
            let xeb = gather(&self.dataset.x_e, rows);
            let yeb = gather(&self.dataset.y_e, rows);
            let img_s = encode(&w_v, &xeb);
            let txt_s = encode(&w_t, &yeb);
            let structural = symmetric_infonce_unchecked(&img_s.e, &txt_s.e, ls_struct.exp())?;
            check(&structural, step, "structural contrastive loss")?;
            let consistency = consistency_loss_unchecked(&img.e, &img_s.e)?;
            check(&consistency, step, "consistency loss")?;

            let mut g_struct = vec![0.0; 2 * block];
            backprop(&structural.grad_a, &img_s, &xeb, &mut g_struct[..block]);
            backprop(&structural.grad_b, &txt_s, &yeb, &mut g_struct[block..]);
            let mut g_cons = vec![0.0; 2 * block];
            backprop(&consistency.grad_a, &img, &xb, &mut g_cons[..block]);
            backprop(&consistency.grad_b, &img_s, &xeb, &mut g_cons[..block]);

            for ((g, s), c) in grad.iter_mut().zip(&g_struct).zip(&g_cons) {
                *g += weights.structural * s + weights.consistency * c;
            }
            grad[self.ls_struct_at()] += weights.structural * structural.grad_log_scale;

            if self.config.local_blocks > 0 {
                let (value, g_local) =
                    local_step(&w_v, &w_t, &xb, &yb, self.config, local_gamma(), step)?;
                for (g, l) in grad.iter_mut().zip(&g_local) {
                    *g += weights.local * l;
                }
                record.loss_local = Some(value);
            }

            record.loss_struct = structural.value;
            record.loss_consistency = consistency.value;
            record.grad_norm_struct = norm(&g_struct);
            record.grad_cosine = cosine(&g_main, &g_struct);
        }

        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                what: "parameter gradient".into(),
            });
        }
        Ok(StepEval { record, grad })
    }

    fn optimizer(&self) -> Optimizer {
        let mut decay_mask = vec![true; 2 * self.block];
        decay_mask.extend([false, false]);
        Optimizer::new(
            self.config.optimizer,
            self.config.learning_rate,
            self.config.weight_decay,
            decay_mask,
        )
    }

    fn apply(&self, opt: &mut Optimizer, params: &mut [f64], grad: &[f64]) {
        opt.step(params, grad);
        for at in [self.ls_main_at(), self.ls_struct_at()] {
            params[at] = params[at].min(MAX_LOG_SCALE);
        }
    }
}

fn train_impl(
    dataset: &SyntheticDataset,
    config: &TrainConfig,
    observe_aux: bool,
) -> Result<TrainOutcome> {
    config.validate(dataset)?;
    let (n, d_in, d_e) = (dataset.len(), dataset.input_dim(), config.d_embed);
    let block = d_e * d_in;
    let trainer = Trainer {
        dataset,
        config,
        d_in,
        block,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_scale = 1.0 / (d_in as f64).sqrt();
    let mut params: Vec<f64> = (0..2 * block)
        .map(|_| init_scale * Distribution::<f64>::sample(&StandardNormal, &mut init_rng))
        .collect();
    params.extend([config.log_scale_init, config.log_scale_init]);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut next_rows = || -> Vec<usize> {
        if config.batch_size == n {
            (0..n).collect()
        } else {
            index::sample(&mut batch_rng, n, config.batch_size).into_vec()
        }
    };

    let mut opt = trainer.optimizer();
    let mut records = Vec::with_capacity(config.iterations);
    for step in 0..config.iterations {
        let eval = trainer.evaluate(&params, &next_rows(), step, observe_aux)?;
        trainer.apply(&mut opt, &mut params, &eval.grad);
        records.push(eval.record);
    }

    Ok(TrainOutcome {
        trace: TrainTrace { records },
        model: TrainedModel {
            visual: Matrix::from_vec(d_e, d_in, params[..block].to_vec())?,
            text: Matrix::from_vec(d_e, d_in, params[block..2 * block].to_vec())?,
            log_scale_main: params[2 * block],
            log_scale_struct: params[2 * block + 1],
        },
    })
}

/// Local term on coordinate-block sub-embeddings: each text chunk's positives
/// are the `local_top_k` regions of its own sample that the current encoders
/// rank most similar. Returns the loss and its gradient over both encoders.
fn local_step(
    w_v: &Matrix,
    w_t: &Matrix,
    xb: &Matrix,
    yb: &Matrix,
    config: &TrainConfig,
    gamma: f64,
    step: usize,
) -> Result<(f64, Vec<f64>)> {
    let blocks = config.local_blocks;
    let xr = block_views(xb, blocks);
    let yc = block_views(yb, blocks);
    let regions = encode(w_v, &xr);
    let chunks = encode(w_t, &yc);
    let positives: Vec<Vec<usize>> = (0..chunks.e.rows())
        .map(|m| {
            let base = (m / blocks) * blocks;
            let mut cand: Vec<usize> = (base..base + blocks).collect();
            cand.sort_by(|&a, &b| {
                let sa = dot(chunks.e.row(m), regions.e.row(a));
                let sb = dot(chunks.e.row(m), regions.e.row(b));
                sb.total_cmp(&sa).then(a.cmp(&b))
            });
            cand.truncate(config.local_top_k);
            cand
        })
        .collect();
    let local = local_multipositive_unchecked(&chunks.e, &regions.e, &positives, gamma)?;
    check(&local, step, "local alignment loss")?;
    let block = w_v.rows() * w_v.cols();
    let mut g = vec![0.0; 2 * block];
    backprop(&local.grad_b, &regions, &xr, &mut g[..block]);
    backprop(&local.grad_a, &chunks, &yc, &mut g[block..]);
    Ok((local.value, g))
}

/// Per-seed outcome of a sweep run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_grad_cosine: f64,
    pub final_quartile_min_ratio: f64,
    pub ratio_bounded: bool,
    pub iter_main: Option<usize>,
    pub iter_struct: Option<usize>,
    pub aux_later: bool,
}

pub const RATIO_FLOOR: f64 = 0.01;

pub fn summarize(seed: u64, trace: &TrainTrace, window: usize, factor: f64) -> Result<SeedSummary> {
    let order = convergence_ordering(trace, window, factor)?;
    let ratio = trace.final_quartile_min_ratio();
    Ok(SeedSummary {
        seed,
        mean_grad_cosine: trace.mean_grad_cosine(),
        final_quartile_min_ratio: ratio,
        ratio_bounded: ratio > RATIO_FLOOR,
        iter_main: order.iter_main,
        iter_struct: order.iter_struct,
        aux_later: order.aux_later,
    })
}

/// Trains one independent run per seed (data and initialization both seeded)
/// in parallel; results come back in seed order.
pub fn seed_sweep(
    latent: &LatentConfig,
    config: &TrainConfig,
    seeds: &[u64],
    window: usize,
    factor: f64,
) -> Result<Vec<(SeedSummary, TrainTrace)>> {
    let mut out: Vec<(SeedSummary, TrainTrace)> = seeds
        .par_iter()
        .map(|&seed| {
            let data = synthesize_multimodal(&LatentConfig {
                seed,
                ..latent.clone()
            })?;
            let run = train(
                &data,
                &TrainConfig {
                    seed,
                    ..config.clone()
                },
            )?;
            Ok((summarize(seed, &run.trace, window, factor)?, run.trace))
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|(s, _)| s.seed);
    Ok(out)
}
