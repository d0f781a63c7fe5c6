//! Optimization loop: Adam under a global learning rate that adapts inversely
//! to the speed of change of the training loss, the four operator modes
//! (frozen, mixture, independent, shared-learned), per-epoch metrics, and
//! Gram-matrix diagnostics of the basis.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array, Array2, Dimension};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BaseKind, LaplacianKind};
use crate::model::{
    adjacency_gradient, init_params, model_backward, model_forward, prepare_operator,
    AdjacencyGradient, GradientBundle, LaplacianModel, ModelConfig, ModelParams, OperatorContext,
    TrainMode,
};
use crate::skeleton::{Dataset, TrajectoryGraph};

pub const LR_MIN: f64 = 1e-6;
pub const LR_MAX: f64 = 1e-1;
pub const LR_FACTOR: f64 = 0.99;

/// Cross entropy never legitimately exceeds a few units (ln of the class
/// count at init); a mean loss beyond this is unambiguous divergence, even
/// though the stable softmax and normalized operators keep it finite.
pub const LOSS_DIVERGENCE_GUARD: f64 = 1e6;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Adam beta1.
    pub momentum: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Basis order K.
    pub order: usize,
    pub kind: BaseKind,
    pub symmetric: bool,
    pub orthogonal: bool,
    pub mode: TrainMode,
    pub seed: u64,
    pub blocks: usize,
    pub channels: usize,
    /// Temporal chunks M; the node descriptor has 3M entries.
    pub chunks: usize,
    pub reference: [usize; 3],
    pub deterministic: bool,
    /// Worker cap for batch fan-out; 0 uses the runtime default, 1 forces a
    /// sequential loop.
    pub threads: usize,
    /// Weight of the pairwise Gram penalty that encourages orthogonality of
    /// independently learned operators.
    pub tll_penalty: f64,
}

impl TrainConfig {
    pub fn laplacian_kind(&self) -> LaplacianKind {
        LaplacianKind::new(self.kind, self.symmetric)
    }

    /// Keys `K`, `kind` and `mode` have no defaults and must be present.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<TrainConfig> {
        const KNOWN: &[&str] = &[
            "epochs",
            "batch_size",
            "base_lr",
            "momentum",
            "beta2",
            "adam_eps",
            "K",
            "kind",
            "sym",
            "orth",
            "mode",
            "seed",
            "blocks",
            "channels",
            "chunks",
            "ref_joints",
            "deterministic",
            "threads",
            "tll_penalty",
        ];
        for key in map.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let required = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("missing config key `{key}`")))
        };
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value for `{key}`: {value:?}")))
        }
        fn opt<T: std::str::FromStr>(
            map: &BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match map.get(key) {
                Some(v) => parse(key, v),
                None => Ok(default),
            }
        }
        let flag = |key: &str, default: bool| -> Result<bool> {
            match map.get(key) {
                Some(v) => Ok(opt::<u8>(map, key, 0)? != 0 || v == "true"),
                None => Ok(default),
            }
        };

        let order: usize = parse("K", required("K")?)?;
        let kind = BaseKind::parse(required("kind")?)
            .ok_or_else(|| Error::Config(format!("bad value for `kind`: {:?}", map["kind"])))?;
        let mode = TrainMode::parse(required("mode")?)
            .ok_or_else(|| Error::Config(format!("bad value for `mode`: {:?}", map["mode"])))?;
        let reference = match map.get("ref_joints") {
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "ref_joints wants three comma-separated indices, got {v:?}"
                    )));
                }
                [
                    parse("ref_joints", parts[0])?,
                    parse("ref_joints", parts[1])?,
                    parse("ref_joints", parts[2])?,
                ]
            }
            None => [0, 1, 2],
        };

        let config = TrainConfig {
            epochs: opt(map, "epochs", 1800)?,
            batch_size: opt(map, "batch_size", 200)?,
            base_lr: opt(map, "base_lr", 0.01)?,
            momentum: opt(map, "momentum", 0.9)?,
            beta2: opt(map, "beta2", 0.999)?,
            adam_eps: opt(map, "adam_eps", 1e-8)?,
            order,
            kind,
            symmetric: flag("sym", false)?,
            orthogonal: flag("orth", false)?,
            mode,
            seed: opt(map, "seed", 0)?,
            blocks: opt(map, "blocks", 1)?,
            channels: opt(map, "channels", 64)?,
            chunks: opt(map, "chunks", 4)?,
            reference,
            deterministic: flag("deterministic", false)?,
            threads: opt(map, "threads", 0)?,
            tll_penalty: opt(map, "tll_penalty", 1e-2)?,
        };
        if config.epochs == 0 || config.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if config.order == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        Ok(config)
    }

    /// Echo in the config-file syntax, used by checkpointed run manifests.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("epochs".into(), self.epochs.to_string());
        map.insert("batch_size".into(), self.batch_size.to_string());
        map.insert("base_lr".into(), self.base_lr.to_string());
        map.insert("momentum".into(), self.momentum.to_string());
        map.insert("beta2".into(), self.beta2.to_string());
        map.insert("adam_eps".into(), self.adam_eps.to_string());
        map.insert("K".into(), self.order.to_string());
        map.insert("kind".into(), self.kind.label().to_ascii_lowercase());
        map.insert("sym".into(), u8::from(self.symmetric).to_string());
        map.insert("orth".into(), u8::from(self.orthogonal).to_string());
        map.insert("mode".into(), self.mode.label().into());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("blocks".into(), self.blocks.to_string());
        map.insert("channels".into(), self.channels.to_string());
        map.insert("chunks".into(), self.chunks.to_string());
        map.insert(
            "ref_joints".into(),
            format!(
                "{},{},{}",
                self.reference[0], self.reference[1], self.reference[2]
            ),
        );
        map.insert(
            "deterministic".into(),
            u8::from(self.deterministic).to_string(),
        );
        map.insert("threads".into(), self.threads.to_string());
        map.insert("tll_penalty".into(), self.tll_penalty.to_string());
        map
    }
}

/// Parse `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, name: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            file: name.into(),
            line: line_no + 1,
            message: format!("expected `key = value`, got {trimmed:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(name.clone()))?;
    parse_config_text(&text, &name)
}

// ---------------------------------------------------------------------------
// Learning rate and optimizer
// ---------------------------------------------------------------------------

/// Shrink by 0.99 when the loss is changing faster than last epoch, grow by
/// 1/0.99 when it slowed down; ties shrink. Clamped to [1e-6, 1e-1].
pub fn lr_update(prev_lr: f64, speed_now: f64, speed_prev: f64) -> f64 {
    let lr = if speed_now >= speed_prev {
        prev_lr * LR_FACTOR
    } else {
        prev_lr / LR_FACTOR
    };
    lr.clamp(LR_MIN, LR_MAX)
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct AdamState<D: Dimension> {
    m: Array<f64, D>,
    v: Array<f64, D>,
}

impl<D: Dimension> AdamState<D> {
    pub fn zeros_like(param: &Array<f64, D>) -> Self {
        AdamState {
            m: Array::zeros(param.raw_dim()),
            v: Array::zeros(param.raw_dim()),
        }
    }
}

/// One bias-corrected Adam update. `step` is the 1-based shared timestep.
pub fn adam_step<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    state: &mut AdamState<D>,
    step: usize,
    lr: f64,
    cfg: &AdamConfig,
    what: &str,
) -> Result<()> {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    ndarray::Zip::from(param.view_mut())
        .and(&mut state.m)
        .and(&mut state.v)
        .and(grad)
        .for_each(|p, m, v, &g| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        });
    if param.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteUpdate { what: what.into() });
    }
    Ok(())
}

enum LapStates {
    Frozen,
    Shared(AdamState<ndarray::Ix2>),
    Mixture(AdamState<ndarray::Ix1>),
    Independent(Vec<AdamState<ndarray::Ix2>>),
}

struct Optimizer {
    cfg: AdamConfig,
    step: usize,
    theta: Vec<Vec<AdamState<ndarray::Ix2>>>,
    classifier_w: AdamState<ndarray::Ix2>,
    classifier_b: AdamState<ndarray::Ix1>,
    laplacian: LapStates,
}

impl Optimizer {
    fn new(params: &ModelParams, cfg: AdamConfig) -> Self {
        let laplacian = match &params.laplacian {
            LaplacianModel::Fixed(_) => LapStates::Frozen,
            LaplacianModel::Learned(a) => LapStates::Shared(AdamState::zeros_like(a.values())),
            LaplacianModel::Mixture(logits) => LapStates::Mixture(AdamState::zeros_like(logits)),
            LaplacianModel::Independent(list) => LapStates::Independent(
                list.iter()
                    .map(|a| AdamState::zeros_like(a.values()))
                    .collect(),
            ),
        };
        Optimizer {
            cfg,
            step: 0,
            theta: params
                .theta
                .iter()
                .map(|block| block.iter().map(AdamState::zeros_like).collect())
                .collect(),
            classifier_w: AdamState::zeros_like(&params.classifier_w),
            classifier_b: AdamState::zeros_like(&params.classifier_b),
            laplacian: LapStates::Frozen,
        }
        .with_laplacian(laplacian)
    }

    fn with_laplacian(mut self, laplacian: LapStates) -> Self {
        self.laplacian = laplacian;
        self
    }

    fn apply(
        &mut self,
        params: &mut ModelParams,
        bundle: &GradientBundle,
        adjacency: &AdjacencyGradient,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let cfg = self.cfg;
        for (b, (block, states)) in params
            .theta
            .iter_mut()
            .zip(self.theta.iter_mut())
            .enumerate()
        {
            for (k, (t, s)) in block.iter_mut().zip(states.iter_mut()).enumerate() {
                adam_step(t, &bundle.theta[b][k], s, step, lr, &cfg, &format!("theta.{b}.{k}"))?;
            }
        }
        adam_step(
            &mut params.classifier_w,
            &bundle.classifier_w,
            &mut self.classifier_w,
            step,
            lr,
            &cfg,
            "classifier_w",
        )?;
        adam_step(
            &mut params.classifier_b,
            &bundle.classifier_b,
            &mut self.classifier_b,
            step,
            lr,
            &cfg,
            "classifier_b",
        )?;

        match (&mut params.laplacian, adjacency, &mut self.laplacian) {
            (LaplacianModel::Fixed(_), AdjacencyGradient::Frozen, LapStates::Frozen) => {}
            (
                LaplacianModel::Learned(a),
                AdjacencyGradient::Shared(grad),
                LapStates::Shared(state),
            ) => {
                // projected-gradient convention: entries pinned at the zero
                // bound ignore gradients that push them negative
                let mut grad = grad.clone();
                ndarray::Zip::from(&mut grad)
                    .and(a.values())
                    .for_each(|g, &v| {
                        if v == 0.0 && *g > 0.0 {
                            *g = 0.0;
                        }
                    });
                adam_step(a.values_mut(), &grad, state, step, lr, &cfg, "adjacency")?;
                a.project_nonnegative();
            }
            (
                LaplacianModel::Mixture(logits),
                AdjacencyGradient::MixtureLogits(grad),
                LapStates::Mixture(state),
            ) => {
                adam_step(logits, grad, state, step, lr, &cfg, "mixture_logits")?;
            }
            (
                LaplacianModel::Independent(list),
                AdjacencyGradient::Independent(grads),
                LapStates::Independent(states),
            ) => {
                for (k, ((a, g), s)) in list.iter_mut().zip(grads).zip(states).enumerate() {
                    let mut g = g.clone();
                    ndarray::Zip::from(&mut g).and(a.values()).for_each(|gv, &v| {
                        if v == 0.0 && *gv > 0.0 {
                            *gv = 0.0;
                        }
                    });
                    adam_step(a.values_mut(), &g, s, step, lr, &cfg, &format!("adjacency.{k}"))?;
                    a.project_nonnegative();
                }
            }
            _ => {
                return Err(Error::MismatchedTrace(
                    "adjacency gradient does not match the parameter mode".into(),
                ))
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GramReport {
    /// K x K Frobenius inner products of the basis terms.
    pub gram: Array2<f64>,
    /// sum_{k != k'} <T_k, T_k'>^2 / sum_k <T_k, T_k>^2.
    pub offdiag_energy: f64,
}

pub fn basis_diagnostics(terms: &[Array2<f64>]) -> GramReport {
    let k = terms.len();
    let mut gram = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            gram[[i, j]] = (&terms[i] * &terms[j]).sum();
        }
    }
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..k {
        for j in 0..k {
            let v = gram[[i, j]] * gram[[i, j]];
            if i == j {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    GramReport {
        gram,
        offdiag_energy: if diag > 0.0 { off / diag } else { 0.0 },
    }
}

/// Pairwise Gram penalty sum_{k != k'} <L_k, L_k'>^2 with its gradient per
/// term; used to push independently learned operators toward orthogonality.
pub fn orthogonality_penalty(terms: &[Array2<f64>]) -> (f64, Vec<Array2<f64>>) {
    let k = terms.len();
    let mut inner = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            if i != j {
                inner[[i, j]] = (&terms[i] * &terms[j]).sum();
            }
        }
    }
    let value = inner.iter().map(|v| v * v).sum();
    let grads = (0..k)
        .map(|i| {
            let mut g = Array2::<f64>::zeros(terms[0].dim());
            for j in 0..k {
                if j != i {
                    g = g + 4.0 * inner[[i, j]] * &terms[j];
                }
            }
            g
        })
        .collect();
    (value, grads)
}

fn operator_terms(ctx: &OperatorContext) -> Vec<Array2<f64>> {
    (0..ctx.order()).map(|k| ctx.term(k).clone()).collect()
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Mean over classes of per-class accuracy (the reported headline).
    pub class_averaged_accuracy: f64,
    pub sample_accuracy: f64,
    /// (correct, total) per class id.
    pub per_class: Vec<(usize, usize)>,
    /// confusion[(true, predicted)] counts.
    pub confusion: Array2<usize>,
}

pub fn evaluate(params: &ModelParams, split: &[TrajectoryGraph]) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(Error::EmptySplit);
    }
    let classes = params.config.classes;
    let ctx = prepare_operator(params, false)?;
    let mut per_class = vec![(0usize, 0usize); classes];
    let mut confusion = Array2::<usize>::zeros((classes, classes));
    let mut correct = 0usize;
    for sample in split {
        let trace = model_forward(sample, params, &ctx)?;
        let predicted = trace
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .expect("at least one class");
        per_class[sample.label].1 += 1;
        confusion[[sample.label, predicted]] += 1;
        if predicted == sample.label {
            per_class[sample.label].0 += 1;
            correct += 1;
        }
    }
    let mut class_acc_sum = 0.0;
    let mut seen = 0usize;
    for &(c, t) in &per_class {
        if t > 0 {
            class_acc_sum += c as f64 / t as f64;
            seen += 1;
        }
    }
    Ok(EvalReport {
        class_averaged_accuracy: class_acc_sum / seen.max(1) as f64,
        sample_accuracy: correct as f64 / split.len() as f64,
        per_class,
        confusion,
    })
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gram_offdiag: f64,
}

impl EpochMetrics {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.epoch, self.loss, self.lr, self.train_acc, self.test_acc, self.gram_offdiag
        )
    }
}

pub fn metrics_to_text(rows: &[EpochMetrics]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

fn model_config(config: &TrainConfig, dataset: &Dataset) -> Result<ModelConfig> {
    let first = dataset
        .train
        .first()
        .or_else(|| dataset.test.first())
        .ok_or(Error::EmptySplit)?;
    Ok(ModelConfig {
        mode: config.mode,
        kind: config.laplacian_kind(),
        order: config.order,
        // independent operators get the Gram penalty instead of rescaling
        rescale: config.orthogonal && config.mode != TrainMode::Tll,
        blocks: config.blocks,
        channels: config.channels,
        classes: dataset.num_classes,
        signal_dim: first.signal.nrows(),
        nodes: first.signal.ncols(),
    })
}

fn batch_gradients(
    batch: &[TrajectoryGraph],
    params: &ModelParams,
    ctx: &OperatorContext,
    pool: Option<&rayon::ThreadPool>,
) -> Result<GradientBundle> {
    let run = |sample: &TrajectoryGraph| -> Result<GradientBundle> {
        let trace = model_forward(sample, params, ctx)?;
        model_backward(&trace, params, ctx)
    };
    let bundles: Vec<GradientBundle> = match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(run).collect::<Result<Vec<_>>>())?,
        None => batch.iter().map(run).collect::<Result<Vec<_>>>()?,
    };
    // deterministic index-order reduction regardless of worker scheduling
    let mut total = GradientBundle::zeros_like(params);
    for b in &bundles {
        total.add_assign(b);
    }
    Ok(total)
}

/// Train a model. Returns the final parameters and one metrics row per epoch.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    let mc = model_config(config, dataset)?;
    if mc.order > mc.nodes.min(mc.signal_dim) {
        eprintln!(
            "warning: K = {} exceeds min(nodes, signal_dim) = {}; basis terms beyond the rank bound add no independent directions",
            mc.order,
            mc.nodes.min(mc.signal_dim)
        );
    }
    let mut params = init_params(mc, &dataset.adjacency, config.seed)?;
    let adam = AdamConfig {
        beta1: config.momentum,
        beta2: config.beta2,
        eps: config.adam_eps,
    };
    let mut optimizer = Optimizer::new(&params, adam);

    let workers = if config.deterministic { 1 } else { config.threads };
    let pool = if workers == 1 {
        None
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if workers > 0 {
            builder = builder.num_threads(workers);
        }
        Some(builder.build().map_err(|e| Error::Config(e.to_string()))?)
    };

    let needs_derivs = matches!(config.mode, TrainMode::Learned | TrainMode::Ml);
    let mut lr = config.base_lr;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut loss_history: Vec<f64> = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut sample_count = 0usize;
        for batch in dataset.train.chunks(config.batch_size) {
            let ctx = prepare_operator(&params, needs_derivs)?;
            let mut total = batch_gradients(batch, &params, &ctx, pool.as_ref())?;
            loss_sum += total.loss;
            sample_count += batch.len();
            total.scale(1.0 / batch.len() as f64);
            if !total.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if config.mode == TrainMode::Tll && config.orthogonal {
                let terms = operator_terms(&ctx);
                let (_, penalty_grads) = orthogonality_penalty(&terms);
                for (k, g) in penalty_grads.iter().enumerate() {
                    *total.nabla.term_mut(k) += &(config.tll_penalty * g);
                }
            }
            let adjacency = adjacency_gradient(&params, &ctx, &total.nabla)?;
            optimizer
                .apply(&mut params, &total, &adjacency, lr)
                .map_err(|e| match e {
                    Error::NonFiniteUpdate { what } => {
                        eprintln!("aborting: non-finite update in {what} at epoch {epoch}");
                        Error::NonFiniteLoss { epoch }
                    }
                    other => other,
                })?;
        }
        let epoch_loss = loss_sum / sample_count.max(1) as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if epoch_loss > LOSS_DIVERGENCE_GUARD {
            return Err(Error::DivergedLoss {
                epoch,
                loss: epoch_loss,
            });
        }
        loss_history.push(epoch_loss);
        let h = loss_history.len();
        if h >= 3 {
            let speed_now = (loss_history[h - 1] - loss_history[h - 2]).abs();
            let speed_prev = (loss_history[h - 2] - loss_history[h - 3]).abs();
            lr = lr_update(lr, speed_now, speed_prev);
        }

        let train_eval = evaluate(&params, &dataset.train)?;
        let test_eval = evaluate(&params, &dataset.test)?;
        let diag_ctx = prepare_operator(&params, false)?;
        if let OperatorContext::Shared { raw, .. } = &diag_ctx {
            // invariant drift is logged, never fatal
            let drift = crate::graph::laplacian_drift(raw);
            if drift > 1e-6 {
                eprintln!("warning: operator invariant drift {drift:e} at epoch {epoch}");
            }
        }
        let gram = basis_diagnostics(&operator_terms(&diag_ctx));
        metrics.push(EpochMetrics {
            epoch,
            loss: epoch_loss,
            lr,
            train_acc: train_eval.class_averaged_accuracy,
            test_acc: test_eval.class_averaged_accuracy,
            gram_offdiag: gram.offdiag_energy,
        });
    }
    Ok((params, metrics))
}
