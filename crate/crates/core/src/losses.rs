//! Contrastive objectives for structure-centric alignment with exact ambient
//! gradients.
//!
//! All losses take embeddings that live on the unit sphere but differentiate
//! the formula with respect to the raw coordinates (no tangent projection);
//! callers that normalize upstream apply the normalization Jacobian
//! themselves. The `*_unchecked` variants skip the unit-norm validation so
//! that finite-difference probes off the sphere evaluate the same formula.

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::numeric::{dot, log_sum_exp, Matrix};

/// Upper clamp on the learnable log logit scale.
pub const MAX_LOG_SCALE: f64 = 3.5;

/// Fixed temperature of the local alignment loss.
pub const LOCAL_TEMPERATURE: f64 = 0.07;

/// ln(1/0.07), the initial log logit scale.
pub fn initial_log_scale() -> f64 {
    (1.0 / 0.07f64).ln()
}

/// Logit multiplier γ = 1/0.07 used by the local loss.
pub fn local_gamma() -> f64 {
    1.0 / LOCAL_TEMPERATURE
}

/// Loss value and its gradients with respect to both inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
    /// d value / d log_scale for losses with a logit scale, 0 otherwise.
    pub grad_log_scale: f64,
}

impl LossEval {
    fn zero_like(a: &Matrix, b: &Matrix) -> Self {
        LossEval {
            value: 0.0,
            grad_a: Matrix::zeros(a.rows(), a.cols()),
            grad_b: Matrix::zeros(b.rows(), b.cols()),
            grad_log_scale: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_a.is_finite()
            && self.grad_b.is_finite()
            && self.grad_log_scale.is_finite()
    }
}

fn same_shape(a: &Matrix, b: &Matrix, context: &'static str) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::mismatch(context, a.rows(), b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::mismatch(context, a.cols(), b.cols()));
    }
    Ok(())
}

/// Symmetric InfoNCE with logits `scale · a·bᵀ` (scale is the multiplier,
/// not its log).
pub fn symmetric_infonce_unchecked(a: &Matrix, b: &Matrix, scale: f64) -> Result<LossEval> {
    same_shape(a, b, "symmetric InfoNCE inputs")?;
    let n = a.rows();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut logits = a.matmul_t(b)?;
    logits.scale(scale);

    let row_lse: Vec<f64> = (0..n)
        .map(|i| log_sum_exp(logits.row(i).iter().copied()))
        .collect();
    let col_lse: Vec<f64> = (0..n)
        .map(|j| log_sum_exp((0..n).map(|i| logits[(i, j)])))
        .collect();

    let inv2n = 1.0 / (2.0 * n as f64);
    let value = inv2n
        * (0..n)
            .map(|i| (row_lse[i] - logits[(i, i)]) + (col_lse[i] - logits[(i, i)]))
            .sum::<f64>();

    // dV/dlogit
    let mut g = Matrix::zeros(n, n);
    let mut grad_log_scale = 0.0;
    for i in 0..n {
        for j in 0..n {
            let l = logits[(i, j)];
            let mut v = (l - row_lse[i]).exp() + (l - col_lse[j]).exp();
            if i == j {
                v -= 2.0;
            }
            v *= inv2n;
            g[(i, j)] = v;
            grad_log_scale += v * l;
        }
    }

    let mut grad_a = g.matmul(b)?;
    grad_a.scale(scale);
    let mut grad_b = g.transpose().matmul(a)?;
    grad_b.scale(scale);

    Ok(LossEval {
        value,
        grad_a,
        grad_b,
        grad_log_scale,
    })
}

/// Symmetric InfoNCE between paired batches with logits `exp(log_scale)·⟨a_i, b_j⟩`.
///
/// `log_scale` above [`MAX_LOG_SCALE`] is rejected; clamping is the caller's job.
pub fn symmetric_infonce(
    a: &EmbeddingBatch,
    b: &EmbeddingBatch,
    log_scale: f64,
) -> Result<LossEval> {
    if !log_scale.is_finite() {
        return Err(Error::NonFinite("log_scale".into()));
    }
    if log_scale > MAX_LOG_SCALE {
        return Err(Error::invalid(format!(
            "log_scale {log_scale} exceeds the clamp {MAX_LOG_SCALE}"
        )));
    }
    symmetric_infonce_unchecked(a.matrix(), b.matrix(), log_scale.exp())
}

/// Mean of (1 − ⟨a_i, b_i⟩).
pub fn consistency_loss_unchecked(a: &Matrix, b: &Matrix) -> Result<LossEval> {
    same_shape(a, b, "consistency inputs")?;
    let n = a.rows();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let inv = 1.0 / n as f64;
    let value = inv * (0..n).map(|i| 1.0 - dot(a.row(i), b.row(i))).sum::<f64>();
    let mut grad_a = b.clone();
    grad_a.scale(-inv);
    let mut grad_b = a.clone();
    grad_b.scale(-inv);
    Ok(LossEval {
        value,
        grad_a,
        grad_b,
        grad_log_scale: 0.0,
    })
}

pub fn consistency_loss(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<LossEval> {
    consistency_loss_unchecked(a.matrix(), b.matrix())
}

/// Text chunks, batch regions and the positive region set of each chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAlignmentProblem {
    chunks: EmbeddingBatch,
    regions: EmbeddingBatch,
    positives: Vec<Vec<usize>>,
    gamma: f64,
}

fn check_positives(positives: &[Vec<usize>], chunks: usize, regions: usize) -> Result<()> {
    if positives.len() != chunks {
        return Err(Error::mismatch(
            "positive sets per chunk",
            chunks,
            positives.len(),
        ));
    }
    for (m, set) in positives.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::invalid(format!(
                "chunk {m} has an empty positive set"
            )));
        }
        for (pos, &k) in set.iter().enumerate() {
            if k >= regions {
                return Err(Error::invalid(format!(
                    "chunk {m} positive index {k} out of range for {regions} regions"
                )));
            }
            if set[..pos].contains(&k) {
                return Err(Error::invalid(format!("chunk {m} lists region {k} twice")));
            }
        }
    }
    Ok(())
}

impl LocalAlignmentProblem {
    /// `positives[m]` holds zero-based region indices for chunk `m`.
    pub fn new(
        chunks: EmbeddingBatch,
        regions: EmbeddingBatch,
        positives: Vec<Vec<usize>>,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if chunks.dim() != regions.dim() {
            return Err(Error::mismatch(
                "chunk/region dimension",
                chunks.dim(),
                regions.dim(),
            ));
        }
        check_positives(&positives, chunks.len(), regions.len())?;
        Ok(LocalAlignmentProblem {
            chunks,
            regions,
            positives,
            gamma,
        })
    }

    pub fn chunks(&self) -> &EmbeddingBatch {
        &self.chunks
    }

    pub fn regions(&self) -> &EmbeddingBatch {
        &self.regions
    }

    pub fn positives(&self) -> &[Vec<usize>] {
        &self.positives
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Local multi-positive loss on raw matrices. `grad_a` is with respect to the
/// chunks, `grad_b` with respect to the regions.
pub fn local_multipositive_unchecked(
    chunks: &Matrix,
    regions: &Matrix,
    positives: &[Vec<usize>],
    gamma: f64,
) -> Result<LossEval> {
    if chunks.cols() != regions.cols() {
        return Err(Error::mismatch(
            "chunk/region dimension",
            chunks.cols(),
            regions.cols(),
        ));
    }
    if chunks.rows() == 0 || regions.rows() == 0 {
        return Err(Error::invalid(
            "local loss needs at least one chunk and one region",
        ));
    }
    check_positives(positives, chunks.rows(), regions.rows())?;

    let m_count = chunks.rows();
    let inv_m = 1.0 / m_count as f64;
    let mut out = LossEval::zero_like(chunks, regions);
    let mut weights = vec![0.0; regions.rows()];

    let mut is_pos = vec![false; regions.rows()];
    for (m, set) in positives.iter().enumerate() {
        let c = chunks.row(m);
        let z: Vec<f64> = regions.row_iter().map(|r| gamma * dot(c, r)).collect();
        is_pos.iter_mut().for_each(|p| *p = false);
        set.iter().for_each(|&k| is_pos[k] = true);
        let lse_pos = log_sum_exp(set.iter().map(|&k| z[k]));
        // lse_all − lse_pos = ln(1 + Σ_neg / Σ_pos), kept accurate when tiny
        let negatives: Vec<f64> = z
            .iter()
            .zip(&is_pos)
            .filter(|(_, &p)| !p)
            .map(|(&v, _)| v)
            .collect();
        let loss = if negatives.is_empty() {
            0.0
        } else {
            (log_sum_exp(negatives.iter().copied()) - lse_pos)
                .exp()
                .ln_1p()
        };
        out.value += inv_m * loss;

        let lse_all = lse_pos + loss;
        let shrink = (-loss).exp_m1();
        for (j, w) in weights.iter_mut().enumerate() {
            *w = if is_pos[j] {
                (z[j] - lse_pos).exp() * shrink
            } else {
                (z[j] - lse_all).exp()
            };
        }
        let scale = gamma * inv_m;
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let r = regions.row(j);
            for (g, &rv) in out.grad_a.row_mut(m).iter_mut().zip(r) {
                *g += scale * w * rv;
            }
            for (g, &cv) in out.grad_b.row_mut(j).iter_mut().zip(c) {
                *g += scale * w * cv;
            }
        }
    }
    Ok(out)
}

pub fn local_multipositive_loss(problem: &LocalAlignmentProblem) -> Result<LossEval> {
    local_multipositive_unchecked(
        problem.chunks.matrix(),
        problem.regions.matrix(),
        &problem.positives,
        problem.gamma,
    )
}

/// Weights (λ1, λ2, λ3) on the structural, consistency and local terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossWeights {
    pub structural: f64,
    pub consistency: f64,
    pub local: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            structural: 0.25,
            consistency: 0.1,
            local: 0.1,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            structural: 0.0,
            consistency: 0.0,
            local: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.structural),
            ("lambda2", self.consistency),
            ("lambda3", self.local),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// main + λ1·structural + λ2·consistency + λ3·local, values and gradients.
///
/// All components must carry gradients of identical shapes, i.e. be expressed
/// over the same pair of inputs. A missing local term contributes nothing.
pub fn total_loss(
    main: &LossEval,
    structural: &LossEval,
    consistency: &LossEval,
    local: Option<&LossEval>,
    weights: LossWeights,
) -> Result<LossEval> {
    weights.validate()?;
    let mut total = main.clone();
    let mut parts = vec![
        (structural, weights.structural),
        (consistency, weights.consistency),
    ];
    if let Some(l) = local {
        parts.push((l, weights.local));
    }
    for (part, w) in parts {
        total.value += w * part.value;
        total.grad_a.add_scaled(&part.grad_a, w)?;
        total.grad_b.add_scaled(&part.grad_b, w)?;
        total.grad_log_scale += w * part.grad_log_scale;
    }
    Ok(total)
}

/// Inputs of the local term inside the full objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalInputs {
    pub chunks: Matrix,
    pub regions: Matrix,
    pub positives: Vec<Vec<usize>>,
    pub gamma: f64,
}

/// The four embedding views of one batch: original image/text and their
/// structure-centric counterparts, plus optional local chunks and regions.
#[derive(Debug, Clone, Copy)]
pub struct StructuralViews<'a> {
    pub image: &'a Matrix,
    pub text: &'a Matrix,
    pub image_struct: &'a Matrix,
    pub text_struct: &'a Matrix,
    pub local: Option<&'a LocalInputs>,
}

/// Components and combined gradient of the full objective.
///
/// `total.grad_a` is stacked over the visual side `[image; image_struct; regions]`
/// and `total.grad_b` over the text side `[text; text_struct; chunks]`.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub main: LossEval,
    pub structural: LossEval,
    pub consistency: LossEval,
    pub local: Option<LossEval>,
    pub total: LossEval,
    pub grad_log_scale_main: f64,
    pub grad_log_scale_struct: f64,
    n: usize,
}

#[derive(Clone, Copy)]
enum Side {
    Visual(usize),
    Text(usize),
}

fn lift(
    eval: &LossEval,
    a: Side,
    b: Side,
    visual_rows: usize,
    text_rows: usize,
    d: usize,
) -> LossEval {
    let mut out = LossEval {
        value: eval.value,
        grad_a: Matrix::zeros(visual_rows, d),
        grad_b: Matrix::zeros(text_rows, d),
        grad_log_scale: eval.grad_log_scale,
    };
    for (grad, side) in [(&eval.grad_a, a), (&eval.grad_b, b)] {
        let (dst, offset) = match side {
            Side::Visual(o) => (&mut out.grad_a, o),
            Side::Text(o) => (&mut out.grad_b, o),
        };
        for i in 0..grad.rows() {
            for (t, s) in dst.row_mut(offset + i).iter_mut().zip(grad.row(i)) {
                *t += s;
            }
        }
    }
    out
}

fn block(m: &Matrix, start: usize, len: usize) -> Matrix {
    let d = m.cols();
    Matrix::from_vec(len, d, m.as_slice()[start * d..(start + len) * d].to_vec())
        .expect("block bounds are derived from the stacked layout")
}

impl ObjectiveEval {
    pub fn grad_image(&self) -> Matrix {
        block(&self.total.grad_a, 0, self.n)
    }

    pub fn grad_image_struct(&self) -> Matrix {
        block(&self.total.grad_a, self.n, self.n)
    }

    pub fn grad_regions(&self) -> Option<Matrix> {
        let rows = self.total.grad_a.rows() - 2 * self.n;
        self.local
            .as_ref()
            .map(|_| block(&self.total.grad_a, 2 * self.n, rows))
    }

    pub fn grad_text(&self) -> Matrix {
        block(&self.total.grad_b, 0, self.n)
    }

    pub fn grad_text_struct(&self) -> Matrix {
        block(&self.total.grad_b, self.n, self.n)
    }

    pub fn grad_chunks(&self) -> Option<Matrix> {
        let rows = self.total.grad_b.rows() - 2 * self.n;
        self.local
            .as_ref()
            .map(|_| block(&self.total.grad_b, 2 * self.n, rows))
    }
}

/// Evaluates 𝓛_{I,T} + λ1𝓛_{I',T'} + λ2𝓛_{I,I'} + λ3𝓛_local on raw matrices.
pub fn structural_objective(
    views: StructuralViews<'_>,
    log_scale_main: f64,
    log_scale_struct: f64,
    weights: LossWeights,
) -> Result<ObjectiveEval> {
    let n = views.image.rows();
    let d = views.image.cols();
    for m in [views.text, views.image_struct, views.text_struct] {
        same_shape(views.image, m, "objective view shapes")?;
    }
    let main = symmetric_infonce_unchecked(views.image, views.text, log_scale_main.exp())?;
    let structural = symmetric_infonce_unchecked(
        views.image_struct,
        views.text_struct,
        log_scale_struct.exp(),
    )?;
    let consistency = consistency_loss_unchecked(views.image, views.image_struct)?;
    let local = views
        .local
        .map(|l| local_multipositive_unchecked(&l.chunks, &l.regions, &l.positives, l.gamma))
        .transpose()?;

    let (regions, chunks) = views
        .local
        .map_or((0, 0), |l| (l.regions.rows(), l.chunks.rows()));
    if let Some(l) = views.local {
        if l.chunks.cols() != d {
            return Err(Error::mismatch(
                "local embedding dimension",
                d,
                l.chunks.cols(),
            ));
        }
    }
    let (vr, tr) = (2 * n + regions, 2 * n + chunks);
    let main_l = lift(&main, Side::Visual(0), Side::Text(0), vr, tr, d);
    let struct_l = lift(&structural, Side::Visual(n), Side::Text(n), vr, tr, d);
    let cons_l = lift(&consistency, Side::Visual(0), Side::Visual(n), vr, tr, d);
    let local_l = local
        .as_ref()
        .map(|l| lift(l, Side::Text(2 * n), Side::Visual(2 * n), vr, tr, d));
    let total = total_loss(&main_l, &struct_l, &cons_l, local_l.as_ref(), weights)?;

    Ok(ObjectiveEval {
        grad_log_scale_main: main.grad_log_scale,
        grad_log_scale_struct: weights.structural * structural.grad_log_scale,
        main,
        structural,
        consistency,
        local,
        total,
        n,
    })
}
