//! End-to-end finite-difference verification of the full model backward pass
//! for every trainable tensor, plus the structural contracts (frozen
//! baseline, batch linearity, node-permutation equivariance).

use cheblap_core::grad::BasisGradients;
use cheblap_core::gradcheck::relative_error;
use cheblap_core::graph::{AdjacencyParam, BaseKind, LaplacianKind};
use cheblap_core::model::{
    adjacency_gradient, model_backward, model_forward, prepare_operator, AdjacencyGradient,
    GradientBundle, LaplacianModel, ModelConfig, ModelParams, TrainMode,
};
use cheblap_core::skeleton::TrajectoryGraph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NODES: usize = 5;
const SIGNAL: usize = 6;
const ORDER: usize = 4;
const CHANNELS: usize = 8;

fn random_sample(rng: &mut ChaCha8Rng) -> TrajectoryGraph {
    let mut signal = Array2::<f64>::zeros((SIGNAL, NODES));
    for v in signal.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut adjacency = Array2::<f64>::zeros((NODES, NODES));
    for i in 0..NODES - 1 {
        adjacency[[i, i + 1]] = 1.0;
        adjacency[[i + 1, i]] = 1.0;
    }
    TrajectoryGraph {
        signal,
        adjacency,
        label: 1,
    }
}

fn make_params(mode: TrainMode, kind: LaplacianKind, rescale: bool, seed: u64) -> ModelParams {
    let config = ModelConfig {
        mode,
        kind,
        order: ORDER,
        rescale,
        blocks: 2,
        channels: CHANNELS,
        classes: 3,
        signal_dim: SIGNAL,
        nodes: NODES,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = random_sample(&mut rng);
    cheblap_core::model::init_params(config, &sample.adjacency, seed).unwrap()
}

fn loss_of(params: &ModelParams, sample: &TrajectoryGraph) -> f64 {
    let ctx = prepare_operator(params, false).unwrap();
    model_forward(sample, params, &ctx).unwrap().loss
}

fn backward_of(params: &ModelParams, sample: &TrajectoryGraph) -> (GradientBundle, AdjacencyGradient) {
    let ctx = prepare_operator(params, true).unwrap();
    let trace = model_forward(sample, params, &ctx).unwrap();
    let bundle = model_backward(&trace, params, &ctx).unwrap();
    let adj = adjacency_gradient(params, &ctx, &bundle.nabla).unwrap();
    (bundle, adj)
}

fn assert_fd(analytic: f64, fd: f64, what: &str) {
    let rel = relative_error(analytic, fd);
    assert!(rel < 1e-4, "{what}: analytic {analytic} fd {fd} rel {rel:e}");
}

#[test]
fn every_trainable_tensor_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample = random_sample(&mut rng);
    let params = make_params(
        TrainMode::Learned,
        LaplacianKind::new(BaseKind::Ndrw, true),
        false,
        7,
    );
    let (bundle, adj) = backward_of(&params, &sample);
    let h = 1e-5;

    for b in 0..params.theta.len() {
        for k in 0..ORDER {
            for i in 0..params.theta[b][k].nrows() {
                for j in 0..CHANNELS {
                    let mut up = params.clone();
                    up.theta[b][k][[i, j]] += h;
                    let mut dn = params.clone();
                    dn.theta[b][k][[i, j]] -= h;
                    let fd = (loss_of(&up, &sample) - loss_of(&dn, &sample)) / (2.0 * h);
                    assert_fd(bundle.theta[b][k][[i, j]], fd, &format!("theta.{b}.{k}[{i},{j}]"));
                }
            }
        }
    }

    for i in 0..params.classifier_w.nrows() {
        for j in 0..params.classifier_w.ncols() {
            let mut up = params.clone();
            up.classifier_w[[i, j]] += h;
            let mut dn = params.clone();
            dn.classifier_w[[i, j]] -= h;
            let fd = (loss_of(&up, &sample) - loss_of(&dn, &sample)) / (2.0 * h);
            assert_fd(bundle.classifier_w[[i, j]], fd, &format!("classifier_w[{i},{j}]"));
        }
    }
    for j in 0..params.classifier_b.len() {
        let mut up = params.clone();
        up.classifier_b[j] += h;
        let mut dn = params.clone();
        dn.classifier_b[j] -= h;
        let fd = (loss_of(&up, &sample) - loss_of(&dn, &sample)) / (2.0 * h);
        assert_fd(bundle.classifier_b[j], fd, &format!("classifier_b[{j}]"));
    }

    let AdjacencyGradient::Shared(grad_a) = adj else {
        panic!("learned mode produces a shared adjacency gradient");
    };
    let perturb = |params: &ModelParams, p: usize, q: usize, delta: f64| -> ModelParams {
        let mut out = params.clone();
        let LaplacianModel::Learned(a) = &mut out.laplacian else {
            unreachable!()
        };
        a.values_mut()[[p, q]] += delta;
        out
    };
    for p in 0..NODES {
        for q in 0..NODES {
            let fd = (loss_of(&perturb(&params, p, q, h), &sample)
                - loss_of(&perturb(&params, p, q, -h), &sample))
                / (2.0 * h);
            assert_fd(grad_a[[p, q]], fd, &format!("adjacency[{p},{q}]"));
        }
    }
}

#[test]
fn mixture_logit_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sample = random_sample(&mut rng);
    let mut params = make_params(
        TrainMode::Ml,
        LaplacianKind::plain(BaseKind::Ndrw),
        false,
        11,
    );
    if let LaplacianModel::Mixture(logits) = &mut params.laplacian {
        for v in logits.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let (bundle, adj) = backward_of(&params, &sample);
    let AdjacencyGradient::MixtureLogits(grad) = adj else {
        panic!("mixture mode produces logit gradients");
    };
    assert!(bundle.loss.is_finite());
    let h = 1e-6;
    for m in 0..grad.len() {
        let perturb = |delta: f64| -> f64 {
            let mut out = params.clone();
            if let LaplacianModel::Mixture(logits) = &mut out.laplacian {
                logits[m] += delta;
            }
            loss_of(&out, &sample)
        };
        let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
        assert_fd(grad[m], fd, &format!("mixture_logits[{m}]"));
    }
}

#[test]
fn independent_operator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample = random_sample(&mut rng);
    let params = make_params(
        TrainMode::Tll,
        LaplacianKind::plain(BaseKind::Drw),
        false,
        13,
    );
    let (_, adj) = backward_of(&params, &sample);
    let AdjacencyGradient::Independent(grads) = adj else {
        panic!("independent mode produces per-slot gradients");
    };
    let h = 1e-5;
    for k in 0..ORDER {
        for p in 0..NODES {
            for q in 0..NODES {
                let perturb = |delta: f64| -> f64 {
                    let mut out = params.clone();
                    if let LaplacianModel::Independent(list) = &mut out.laplacian {
                        list[k].values_mut()[[p, q]] += delta;
                    }
                    loss_of(&out, &sample)
                };
                let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
                assert_fd(grads[k][[p, q]], fd, &format!("adjacency.{k}[{p},{q}]"));
            }
        }
    }
}

#[test]
fn frozen_baseline_has_no_adjacency_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sample = random_sample(&mut rng);
    let params = make_params(
        TrainMode::Hl,
        LaplacianKind::new(BaseKind::Comb, true),
        true,
        17,
    );
    let (_, adj) = backward_of(&params, &sample);
    assert!(matches!(adj, AdjacencyGradient::Frozen));
}

#[test]
fn duplicated_sample_doubles_the_batch_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample = random_sample(&mut rng);
    let params = make_params(
        TrainMode::Learned,
        LaplacianKind::plain(BaseKind::Ndn),
        false,
        19,
    );
    let ctx = prepare_operator(&params, true).unwrap();
    let single = {
        let trace = model_forward(&sample, &params, &ctx).unwrap();
        model_backward(&trace, &params, &ctx).unwrap()
    };
    let mut batch = GradientBundle::zeros_like(&params);
    for _ in 0..2 {
        let trace = model_forward(&sample, &params, &ctx).unwrap();
        batch.add_assign(&model_backward(&trace, &params, &ctx).unwrap());
    }
    assert!((batch.loss - 2.0 * single.loss).abs() < 1e-12);
    for (a, b) in batch.theta.iter().flatten().zip(single.theta.iter().flatten()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }
    let nb: &BasisGradients = &batch.nabla;
    for k in 0..ORDER {
        for (x, y) in nb.term(k).iter().zip(single.nabla.term(k).iter()) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }
}

#[test]
fn node_permutation_with_conjugated_adjacency_preserves_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sample = random_sample(&mut rng);
    let params = make_params(
        TrainMode::Learned,
        LaplacianKind::new(BaseKind::Ndrw, true),
        true,
        23,
    );
    let base_loss = loss_of(&params, &sample);

    let perm: Vec<usize> = vec![3, 0, 4, 1, 2];
    let mut permuted_signal = Array2::<f64>::zeros(sample.signal.dim());
    for (new, &old) in perm.iter().enumerate() {
        for r in 0..SIGNAL {
            permuted_signal[[r, new]] = sample.signal[[r, old]];
        }
    }
    let permute2 = |m: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(m.dim());
        for (ni, &oi) in perm.iter().enumerate() {
            for (nj, &oj) in perm.iter().enumerate() {
                out[[ni, nj]] = m[[oi, oj]];
            }
        }
        out
    };
    let permuted_sample = TrajectoryGraph {
        signal: permuted_signal,
        adjacency: permute2(&sample.adjacency),
        label: sample.label,
    };
    let mut permuted_params = params.clone();
    permuted_params.handcrafted = permute2(&params.handcrafted);
    if let (LaplacianModel::Learned(a), LaplacianModel::Learned(pa)) =
        (&params.laplacian, &mut permuted_params.laplacian)
    {
        *pa = AdjacencyParam::new(permute2(a.values())).unwrap();
    }
    let permuted_loss = loss_of(&permuted_params, &permuted_sample);
    assert!(
        (base_loss - permuted_loss).abs() < 1e-10,
        "{base_loss} vs {permuted_loss}"
    );
}

#[test]
fn softmax_probabilities_always_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..10u64 {
        let sample = random_sample(&mut rng);
        let params = make_params(
            TrainMode::Learned,
            LaplacianKind::plain(BaseKind::Dn),
            false,
            seed,
        );
        let ctx = prepare_operator(&params, false).unwrap();
        let trace = model_forward(&sample, &params, &ctx).unwrap();
        assert!((trace.probs.sum() - 1.0).abs() < 1e-12);
    }
}
