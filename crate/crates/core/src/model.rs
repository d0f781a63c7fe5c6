//! The convolutional model: basis aggregation and filtering blocks, global
//! average pooling, softmax classification, and hand-written backward passes
//! producing gradients for the filters, the classifier and (through the
//! operator plumbing in [`crate::grad`]) the trainable adjacency.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheby::{derivative_basis, forward_basis, ChebyshevBasis};
use crate::error::{Error, Result};
use crate::grad::{grad_wrt_adjacency, grad_wrt_laplacian, BasisGradients};
use crate::graph::{
    build_laplacian, rescale_matrix, rescale_pullback_factor, rescale_spectrum, AdjacencyParam,
    BaseKind, LaplacianKind, LaplacianOperator,
};
use crate::skeleton::TrajectoryGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Handcrafted Laplacian: the adjacency stays frozen.
    Hl,
    /// Mixture over the five plain handcrafted operators; only the mixture
    /// weights train.
    Ml,
    /// One independent learned operator per basis slot.
    Tll,
    /// The shared-operator design: one trainable adjacency drives the whole
    /// basis.
    Learned,
}

impl TrainMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hl" => Some(TrainMode::Hl),
            "ml" => Some(TrainMode::Ml),
            "tll" => Some(TrainMode::Tll),
            "learned" => Some(TrainMode::Learned),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TrainMode::Hl => "hl",
            TrainMode::Ml => "ml",
            TrainMode::Tll => "tll",
            TrainMode::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub mode: TrainMode,
    pub kind: LaplacianKind,
    /// Basis order K.
    pub order: usize,
    /// Spectral rescaling of the operator (the orthogonality constraint for
    /// the shared design; mixtures rescale the mixed operator).
    pub rescale: bool,
    pub blocks: usize,
    pub channels: usize,
    pub classes: usize,
    /// Node descriptor size s = 3 * chunks.
    pub signal_dim: usize,
    pub nodes: usize,
}

/// The trainable operator parameters, one variant per mode.
#[derive(Debug, Clone)]
pub enum LaplacianModel {
    Fixed(AdjacencyParam),
    Learned(AdjacencyParam),
    /// Softmax logits over the five plain handcrafted operators.
    Mixture(Array1<f64>),
    /// One adjacency per basis slot.
    Independent(Vec<AdjacencyParam>),
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// theta[block][k]: s_in x channels filter matrix.
    pub theta: Vec<Vec<Array2<f64>>>,
    /// (blocks * channels) x classes.
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
    /// The frozen skeleton adjacency the dataset came with.
    pub handcrafted: Array2<f64>,
    pub laplacian: LaplacianModel,
}

/// Uniform init scaled by 1/sqrt(fan_in); the adjacency starts at the
/// handcrafted graph plus small positive noise so every column has mass.
pub fn init_params(
    config: ModelConfig,
    handcrafted: &Array2<f64>,
    seed: u64,
) -> Result<ModelParams> {
    if handcrafted.nrows() != config.nodes || handcrafted.ncols() != config.nodes {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} handcrafted adjacency", config.nodes),
            got: format!("{}x{}", handcrafted.nrows(), handcrafted.ncols()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize, span: f64| -> Array2<f64> {
        let mut m = Array2::zeros((rows, cols));
        for v in m.iter_mut() {
            *v = rng.random_range(-span..span);
        }
        m
    };

    let mut theta = Vec::with_capacity(config.blocks);
    for b in 0..config.blocks {
        let s_in = if b == 0 {
            config.signal_dim
        } else {
            config.channels
        };
        let span = 1.0 / (s_in as f64).sqrt();
        theta.push(
            (0..config.order)
                .map(|_| uniform(s_in, config.channels, span))
                .collect(),
        );
    }
    let pooled_dim = config.blocks * config.channels;
    let span = 1.0 / (pooled_dim as f64).sqrt();
    let classifier_w = uniform(pooled_dim, config.classes, span);
    let classifier_b = Array1::zeros(config.classes);

    let noisy_adjacency = |rng: &mut ChaCha8Rng| -> Result<AdjacencyParam> {
        let mut m = handcrafted.clone();
        for v in m.iter_mut() {
            *v += rng.random_range(0.0..0.01);
        }
        AdjacencyParam::new(m)
    };
    let laplacian = match config.mode {
        TrainMode::Hl => LaplacianModel::Fixed(AdjacencyParam::new(handcrafted.clone())?),
        TrainMode::Learned => LaplacianModel::Learned(noisy_adjacency(&mut rng)?),
        TrainMode::Ml => LaplacianModel::Mixture(Array1::zeros(BaseKind::ALL.len())),
        TrainMode::Tll => {
            let mut list = Vec::with_capacity(config.order);
            for _ in 0..config.order {
                list.push(noisy_adjacency(&mut rng)?);
            }
            LaplacianModel::Independent(list)
        }
    };

    Ok(ModelParams {
        config,
        theta,
        classifier_w,
        classifier_b,
        handcrafted: handcrafted.clone(),
        laplacian,
    })
}

// ---------------------------------------------------------------------------
// Operator context: everything the forward pass needs from the current
// operator parameters, rebuilt once per optimizer step.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum OperatorContext {
    Shared {
        basis: ChebyshevBasis,
        /// The unrescaled operator the parametrization Jacobian is evaluated
        /// on.
        raw: LaplacianOperator,
        /// dL_used/dL_raw under the frozen-bounds convention (1 when no
        /// rescaling is applied).
        scale: f64,
        trainable: bool,
    },
    Mixture {
        basis: ChebyshevBasis,
        components: Vec<Array2<f64>>,
        weights: Array1<f64>,
        scale: f64,
    },
    Independent { ops: Vec<LaplacianOperator> },
}

impl OperatorContext {
    pub fn order(&self) -> usize {
        match self {
            OperatorContext::Shared { basis, .. } => basis.order(),
            OperatorContext::Mixture { basis, .. } => basis.order(),
            OperatorContext::Independent { ops } => ops.len(),
        }
    }

    pub fn term(&self, k: usize) -> &Array2<f64> {
        match self {
            OperatorContext::Shared { basis, .. } => basis.term(k),
            OperatorContext::Mixture { basis, .. } => basis.term(k),
            OperatorContext::Independent { ops } => &ops[k].matrix,
        }
    }

    pub fn nodes(&self) -> usize {
        self.term(0).nrows()
    }
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let total = exps.sum();
    exps / total
}

/// Build the operator context for the current parameters. `with_derivs`
/// additionally fills the basis derivative matrices for the backward pass.
pub fn prepare_operator(params: &ModelParams, with_derivs: bool) -> Result<OperatorContext> {
    let config = &params.config;
    match &params.laplacian {
        LaplacianModel::Fixed(a) | LaplacianModel::Learned(a) => {
            let raw = build_laplacian(a, config.kind, false)?;
            let (used, scale) = if config.rescale {
                let rescaled = rescale_spectrum(&raw)?;
                let factor = rescale_pullback_factor(rescaled.bounds.expect("rescaled bounds"));
                (rescaled.matrix, factor)
            } else {
                (raw.matrix.clone(), 1.0)
            };
            let mut basis = forward_basis(&used, config.order)?;
            if with_derivs {
                basis = derivative_basis(&used, basis)?;
            }
            Ok(OperatorContext::Shared {
                basis,
                raw,
                scale,
                trainable: matches!(params.laplacian, LaplacianModel::Learned(_)),
            })
        }
        LaplacianModel::Mixture(logits) => {
            let weights = softmax(logits);
            let hand = AdjacencyParam::new(params.handcrafted.clone())?;
            let components: Vec<Array2<f64>> = BaseKind::ALL
                .iter()
                .map(|&b| {
                    build_laplacian(&hand, LaplacianKind::plain(b), false).map(|l| l.matrix)
                })
                .collect::<Result<_>>()?;
            let n = config.nodes;
            let mut mixed = Array2::<f64>::zeros((n, n));
            for (w, c) in weights.iter().zip(&components) {
                mixed = mixed + *w * c;
            }
            let (used, scale) = if config.rescale {
                let (m, bounds) = rescale_matrix(&mixed)?;
                (m, rescale_pullback_factor(bounds))
            } else {
                (mixed, 1.0)
            };
            let mut basis = forward_basis(&used, config.order)?;
            if with_derivs {
                basis = derivative_basis(&used, basis)?;
            }
            Ok(OperatorContext::Mixture {
                basis,
                components,
                weights,
                scale,
            })
        }
        LaplacianModel::Independent(list) => {
            if list.len() != config.order {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} independent operators", config.order),
                    got: format!("{}", list.len()),
                });
            }
            let ops = list
                .iter()
                .map(|a| build_laplacian(a, config.kind, false))
                .collect::<Result<Vec<_>>>()?;
            Ok(OperatorContext::Independent { ops })
        }
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlockTrace {
    /// Input signal s_in x n.
    pub psi: Array2<f64>,
    /// aggregates[k] = term_k . psi^T, n x s_in.
    pub aggregates: Vec<Array2<f64>>,
    /// Pre-activation n x channels.
    pub pre: Array2<f64>,
    /// Post-activation output.
    pub out: Array2<f64>,
    pub relu: bool,
}

/// One aggregation-plus-filter block: pre = sum_k term_k . psi^T . theta_k.
pub fn conv_block_forward(
    psi: &Array2<f64>,
    ctx: &OperatorContext,
    theta: &[Array2<f64>],
    relu: bool,
) -> Result<BlockTrace> {
    let n = ctx.nodes();
    if psi.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("signal with {n} columns"),
            got: format!("{}x{}", psi.nrows(), psi.ncols()),
        });
    }
    if theta.len() != ctx.order() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} filter matrices", ctx.order()),
            got: format!("{}", theta.len()),
        });
    }
    let s_in = psi.nrows();
    let channels = theta[0].ncols();
    let psi_t = psi.t();
    let mut aggregates = Vec::with_capacity(theta.len());
    let mut pre = Array2::<f64>::zeros((n, channels));
    for (k, th) in theta.iter().enumerate() {
        if th.nrows() != s_in || th.ncols() != channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{s_in}x{channels} filter"),
                got: format!("{}x{}", th.nrows(), th.ncols()),
            });
        }
        let agg = ctx.term(k).dot(&psi_t);
        pre = pre + agg.dot(th);
        aggregates.push(agg);
    }
    let out = if relu { pre.mapv(|v| v.max(0.0)) } else { pre.clone() };
    Ok(BlockTrace {
        psi: psi.clone(),
        aggregates,
        pre,
        out,
        relu,
    })
}

/// Gradients flowing out of one block.
#[derive(Debug, Clone)]
pub struct BlockGradients {
    pub theta: Vec<Array2<f64>>,
    /// Per-term operator gradients nabla_k = dLoss/dT_k.
    pub nabla: Vec<Array2<f64>>,
    /// Gradient on the block's input signal.
    pub psi: Array2<f64>,
}

/// Backward through one block.
pub fn conv_block_backward(
    trace: &BlockTrace,
    ctx: &OperatorContext,
    theta: &[Array2<f64>],
    grad_out: &Array2<f64>,
) -> Result<BlockGradients> {
    if grad_out.dim() != trace.out.dim() {
        return Err(Error::MismatchedTrace(format!(
            "grad_out {}x{} vs output {}x{}",
            grad_out.nrows(),
            grad_out.ncols(),
            trace.out.nrows(),
            trace.out.ncols()
        )));
    }
    let g_pre = if trace.relu {
        let mut g = grad_out.clone();
        g.zip_mut_with(&trace.pre, |gv, &p| {
            if p <= 0.0 {
                *gv = 0.0;
            }
        });
        g
    } else {
        grad_out.clone()
    };

    let mut grad_theta = Vec::with_capacity(theta.len());
    let mut nabla = Vec::with_capacity(theta.len());
    let mut grad_psi = Array2::<f64>::zeros(trace.psi.dim());
    let g_pre_t = g_pre.t();
    for (k, th) in theta.iter().enumerate() {
        grad_theta.push(trace.aggregates[k].t().dot(&g_pre));
        nabla.push(g_pre.dot(&th.t()).dot(&trace.psi));
        grad_psi = grad_psi + th.dot(&g_pre_t).dot(ctx.term(k));
    }
    Ok(BlockGradients {
        theta: grad_theta,
        nabla,
        psi: grad_psi,
    })
}

/// Mean over nodes, one value per channel.
pub fn global_average_pool(features: &Array2<f64>) -> Array1<f64> {
    features
        .mean_axis(Axis(0))
        .expect("pooling requires at least one node")
}

#[derive(Debug, Clone)]
pub struct ClassifierEval {
    pub loss: f64,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
    pub grad_logits: Array1<f64>,
}

/// Softmax cross-entropy with the standard closed-form gradient.
pub fn classify_and_loss(
    pooled: &Array1<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    label: usize,
) -> Result<ClassifierEval> {
    let classes = w.ncols();
    if label >= classes {
        return Err(Error::InvalidLabel { label, classes });
    }
    if pooled.len() != w.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("pooled vector of {}", w.nrows()),
            got: format!("{}", pooled.len()),
        });
    }
    let logits = pooled.dot(w) + b;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted = logits.mapv(|v| v - max);
    let log_sum = shifted.mapv(f64::exp).sum().ln();
    let probs = shifted.mapv(|v| (v - log_sum).exp());
    let loss = log_sum - shifted[label];
    let mut grad_logits = probs.clone();
    grad_logits[label] -= 1.0;
    Ok(ClassifierEval {
        loss,
        logits,
        probs,
        grad_logits,
    })
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub blocks: Vec<BlockTrace>,
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
    pub loss: f64,
    pub label: usize,
}

/// Full forward pass over one sample. Blocks chain through transposed
/// activations; every block's pooled output feeds the classifier.
pub fn model_forward(
    sample: &TrajectoryGraph,
    params: &ModelParams,
    ctx: &OperatorContext,
) -> Result<ForwardTrace> {
    let config = &params.config;
    if sample.signal.nrows() != config.signal_dim || sample.signal.ncols() != config.nodes {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} signal", config.signal_dim, config.nodes),
            got: format!("{}x{}", sample.signal.nrows(), sample.signal.ncols()),
        });
    }
    let mut blocks = Vec::with_capacity(config.blocks);
    let mut psi = sample.signal.clone();
    for b in 0..config.blocks {
        let relu = b + 1 < config.blocks;
        let trace = conv_block_forward(&psi, ctx, &params.theta[b], relu)?;
        psi = trace.out.t().to_owned();
        blocks.push(trace);
    }
    let mut pooled = Array1::<f64>::zeros(config.blocks * config.channels);
    for (b, block) in blocks.iter().enumerate() {
        let p = global_average_pool(&block.out);
        pooled
            .slice_mut(ndarray::s![b * config.channels..(b + 1) * config.channels])
            .assign(&p);
    }
    let eval = classify_and_loss(&pooled, &params.classifier_w, &params.classifier_b, sample.label)?;
    Ok(ForwardTrace {
        blocks,
        pooled,
        logits: eval.logits,
        probs: eval.probs,
        loss: eval.loss,
        label: sample.label,
    })
}

/// Per-sample gradients for everything except the operator parameters, plus
/// the accumulated per-term operator gradients. Operator-parameter gradients
/// are produced by [`adjacency_gradient`], usually from a batch-summed
/// accumulation (the map is linear, so summing first is exact).
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub theta: Vec<Vec<Array2<f64>>>,
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
    pub nabla: BasisGradients,
    pub loss: f64,
}

impl GradientBundle {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientBundle {
            theta: params
                .theta
                .iter()
                .map(|block| block.iter().map(|t| Array2::zeros(t.dim())).collect())
                .collect(),
            classifier_w: Array2::zeros(params.classifier_w.dim()),
            classifier_b: Array1::zeros(params.classifier_b.len()),
            nabla: BasisGradients::zeros(params.config.order, params.config.nodes),
            loss: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.classifier_w += &other.classifier_w;
        self.classifier_b += &other.classifier_b;
        self.nabla.add_assign(&other.nabla);
        self.loss += other.loss;
    }

    pub fn scale(&mut self, factor: f64) {
        for block in &mut self.theta {
            for t in block {
                t.mapv_inplace(|v| v * factor);
            }
        }
        self.classifier_w.mapv_inplace(|v| v * factor);
        self.classifier_b.mapv_inplace(|v| v * factor);
        self.nabla.scale(factor);
        self.loss *= factor;
    }
}

/// Backward pass over one sample.
pub fn model_backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    ctx: &OperatorContext,
) -> Result<GradientBundle> {
    let config = &params.config;
    if trace.blocks.len() != config.blocks {
        return Err(Error::MismatchedTrace(format!(
            "{} block traces for {} blocks",
            trace.blocks.len(),
            config.blocks
        )));
    }
    let n = config.nodes as f64;
    let mut grad_logits = trace.probs.clone();
    grad_logits[trace.label] -= 1.0;

    let grad_w = outer(&trace.pooled, &grad_logits);
    let grad_b = grad_logits.clone();
    let grad_pooled = params.classifier_w.dot(&grad_logits);

    let mut bundle = GradientBundle::zeros_like(params);
    bundle.classifier_w = grad_w;
    bundle.classifier_b = grad_b;
    bundle.loss = trace.loss;

    // pooling spreads each block's pooled gradient uniformly over nodes
    let mut carried: Option<Array2<f64>> = None; // gradient on block output from the next block
    for b in (0..config.blocks).rev() {
        let block = &trace.blocks[b];
        let slice = grad_pooled.slice(ndarray::s![b * config.channels..(b + 1) * config.channels]);
        let mut grad_out = Array2::from_shape_fn(block.out.dim(), |(_, c)| slice[c] / n);
        if let Some(extra) = carried.take() {
            grad_out = grad_out + extra;
        }
        let grads = conv_block_backward(block, ctx, &params.theta[b], &grad_out)?;
        bundle.theta[b] = grads.theta;
        for (k, g) in grads.nabla.into_iter().enumerate() {
            *bundle.nabla.term_mut(k) += &g;
        }
        if b > 0 {
            // the previous block's output feeds this block as psi = out^T
            carried = Some(grads.psi.t().to_owned());
        }
    }
    Ok(bundle)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.len(), b.len()));
    for (i, &av) in a.iter().enumerate() {
        for (j, &bv) in b.iter().enumerate() {
            out[[i, j]] = av * bv;
        }
    }
    out
}

/// Gradient w.r.t. the operator parameters from accumulated per-term
/// gradients.
#[derive(Debug, Clone)]
pub enum AdjacencyGradient {
    /// Frozen operator (handcrafted baseline).
    Frozen,
    Shared(Array2<f64>),
    MixtureLogits(Array1<f64>),
    Independent(Vec<Array2<f64>>),
}

pub fn adjacency_gradient(
    params: &ModelParams,
    ctx: &OperatorContext,
    nabla: &BasisGradients,
) -> Result<AdjacencyGradient> {
    let kind = params.config.kind;
    match (&params.laplacian, ctx) {
        (LaplacianModel::Fixed(_), OperatorContext::Shared { .. }) => Ok(AdjacencyGradient::Frozen),
        (
            LaplacianModel::Learned(a),
            OperatorContext::Shared {
                basis, raw, scale, ..
            },
        ) => {
            let mut grad_l = grad_wrt_laplacian(nabla, basis)?;
            grad_l.mapv_inplace(|v| v * scale);
            Ok(AdjacencyGradient::Shared(grad_wrt_adjacency(
                kind, a, raw, &grad_l,
            )?))
        }
        (
            LaplacianModel::Mixture(_),
            OperatorContext::Mixture {
                basis,
                components,
                weights,
                scale,
            },
        ) => {
            let mut grad_l = grad_wrt_laplacian(nabla, basis)?;
            grad_l.mapv_inplace(|v| v * scale);
            let raw: Array1<f64> = components
                .iter()
                .map(|c| (&grad_l * c).sum())
                .collect();
            let mean = weights.dot(&raw);
            let grad_logits =
                Array1::from_iter(weights.iter().zip(&raw).map(|(&w, &g)| w * (g - mean)));
            Ok(AdjacencyGradient::MixtureLogits(grad_logits))
        }
        (LaplacianModel::Independent(list), OperatorContext::Independent { ops }) => {
            let mut grads = Vec::with_capacity(list.len());
            for (k, (a, op)) in list.iter().zip(ops).enumerate() {
                grads.push(grad_wrt_adjacency(kind, a, op, nabla.term(k))?);
            }
            Ok(AdjacencyGradient::Independent(grads))
        }
        _ => Err(Error::MismatchedTrace(
            "operator context does not match the parameter mode".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: a version line, `key = value` config echo, then each
// tensor as a `tensor <name> <rows> <cols>` header followed by row-major
// values. Values round-trip bit-exactly.
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &str = "cheblap-checkpoint v1";

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let config = &params.config;
    let mut text = format!("{CHECKPOINT_MAGIC}\n");
    text.push_str(&format!("mode = {}\n", config.mode.label()));
    text.push_str(&format!("kind = {}\n", config.kind));
    text.push_str(&format!("K = {}\n", config.order));
    text.push_str(&format!("rescale = {}\n", u8::from(config.rescale)));
    text.push_str(&format!("blocks = {}\n", config.blocks));
    text.push_str(&format!("channels = {}\n", config.channels));
    text.push_str(&format!("classes = {}\n", config.classes));
    text.push_str(&format!("signal_dim = {}\n", config.signal_dim));
    text.push_str(&format!("nodes = {}\n", config.nodes));

    let push_tensor = |text: &mut String, name: &str, m: &Array2<f64>| {
        text.push_str(&format!("tensor {name} {} {}\n", m.nrows(), m.ncols()));
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
    };
    for (b, block) in params.theta.iter().enumerate() {
        for (k, t) in block.iter().enumerate() {
            push_tensor(&mut text, &format!("theta.{b}.{k}"), t);
        }
    }
    push_tensor(&mut text, "classifier_w", &params.classifier_w);
    let b_row = params
        .classifier_b
        .clone()
        .into_shape_with_order((1, params.classifier_b.len()))
        .expect("row reshape");
    push_tensor(&mut text, "classifier_b", &b_row);
    push_tensor(&mut text, "handcrafted", &params.handcrafted);
    match &params.laplacian {
        LaplacianModel::Fixed(a) | LaplacianModel::Learned(a) => {
            push_tensor(&mut text, "adjacency", a.values());
        }
        LaplacianModel::Mixture(logits) => {
            let row = logits
                .clone()
                .into_shape_with_order((1, logits.len()))
                .expect("row reshape");
            push_tensor(&mut text, "mixture_logits", &row);
        }
        LaplacianModel::Independent(list) => {
            for (k, a) in list.iter().enumerate() {
                push_tensor(&mut text, &format!("adjacency.{k}"), a.values());
            }
        }
    }
    text.push_str("end\n");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(name.clone()))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        file: name.clone(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == CHECKPOINT_MAGIC => {}
        other => {
            return Err(parse_err(
                1,
                format!("expected {CHECKPOINT_MAGIC:?}, got {other:?}"),
            ))
        }
    }

    let mut kv = std::collections::BTreeMap::<String, String>::new();
    while let Some(&(_, line)) = lines.peek() {
        if line.starts_with("tensor ") || line.trim() == "end" {
            break;
        }
        let (line_no, line) = lines.next().expect("peeked");
        let (key, value) = line.split_once('=').ok_or_else(|| {
            parse_err(line_no + 1, format!("expected `key = value`, got {line:?}"))
        })?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }
    let field = |key: &str| -> Result<&String> {
        kv.get(key)
            .ok_or_else(|| parse_err(0, format!("missing config key `{key}`")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        field(key)?
            .parse()
            .map_err(|_| parse_err(0, format!("bad value for `{key}`")))
    };
    let mode = TrainMode::parse(field("mode")?)
        .ok_or_else(|| parse_err(0, "bad value for `mode`".into()))?;
    let kind = LaplacianKind::parse(field("kind")?)
        .ok_or_else(|| parse_err(0, "bad value for `kind`".into()))?;
    let config = ModelConfig {
        mode,
        kind,
        order: parse_usize("K")?,
        rescale: parse_usize("rescale")? != 0,
        blocks: parse_usize("blocks")?,
        channels: parse_usize("channels")?,
        classes: parse_usize("classes")?,
        signal_dim: parse_usize("signal_dim")?,
        nodes: parse_usize("nodes")?,
    };

    let mut tensors = std::collections::BTreeMap::<String, Array2<f64>>::new();
    let mut saw_end = false;
    while let Some((line_no, line)) = lines.next() {
        let trimmed = line.trim();
        if trimmed == "end" {
            saw_end = true;
            break;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "tensor" {
            return Err(parse_err(
                line_no + 1,
                format!("expected tensor header, got {line:?}"),
            ));
        }
        let rows: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no + 1, "bad tensor rows".into()))?;
        let cols: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(line_no + 1, "bad tensor cols".into()))?;
        let mut m = Array2::<f64>::zeros((rows, cols));
        for r in 0..rows {
            let (row_no, row_line) = lines
                .next()
                .ok_or_else(|| parse_err(line_no + 1, "truncated tensor".into()))?;
            let values: Vec<&str> = row_line.split_whitespace().collect();
            if values.len() != cols {
                return Err(parse_err(
                    row_no + 1,
                    format!("expected {cols} values, got {}", values.len()),
                ));
            }
            for (c, v) in values.iter().enumerate() {
                m[[r, c]] = v
                    .parse()
                    .map_err(|_| parse_err(row_no + 1, format!("bad value {v:?}")))?;
            }
        }
        tensors.insert(fields[1].to_string(), m);
    }
    if !saw_end {
        return Err(parse_err(0, "checkpoint missing `end` marker".into()));
    }

    let mut take = |name: &str| -> Result<Array2<f64>> {
        tensors
            .remove(name)
            .ok_or_else(|| parse_err(0, format!("missing tensor `{name}`")))
    };
    let mut theta = Vec::with_capacity(config.blocks);
    for b in 0..config.blocks {
        let mut block = Vec::with_capacity(config.order);
        for k in 0..config.order {
            block.push(take(&format!("theta.{b}.{k}"))?);
        }
        theta.push(block);
    }
    let classifier_w = take("classifier_w")?;
    let classifier_b = take("classifier_b")?.row(0).to_owned();
    let handcrafted = take("handcrafted")?;
    let laplacian = match config.mode {
        TrainMode::Hl => LaplacianModel::Fixed(AdjacencyParam::new(take("adjacency")?)?),
        TrainMode::Learned => LaplacianModel::Learned(AdjacencyParam::new(take("adjacency")?)?),
        TrainMode::Ml => LaplacianModel::Mixture(take("mixture_logits")?.row(0).to_owned()),
        TrainMode::Tll => {
            let mut list = Vec::with_capacity(config.order);
            for k in 0..config.order {
                list.push(AdjacencyParam::new(take(&format!("adjacency.{k}"))?)?);
            }
            LaplacianModel::Independent(list)
        }
    };
    Ok(ModelParams {
        config,
        theta,
        classifier_w,
        classifier_b,
        handcrafted,
        laplacian,
    })
}
