#![allow(dead_code)]

use siamese_nas::analysis::{kendall_tau, spearman_rho};
use siamese_nas::autodiff::max_relative_error;
use siamese_nas::estimation::EstimationCode;
use siamese_nas::graph::{encode_cell, CellSpec, Edge, OpVocabulary};
use siamese_nas::predictor::*;
use siamese_nas::tensor::Matrix;

/// Two 3-node cells expanded to 6 graph nodes.
pub fn small_graphs() -> (Vec<PreparedGraph>, usize) {
    let vocab = OpVocabulary::new(vec!["skip_connect".into(), "conv".into()]).unwrap();
    let specs = [
        vec![Edge::new(0, 1, "conv"), Edge::new(0, 2, "skip_connect"), Edge::new(1, 2, "conv")],
        vec![Edge::new(0, 1, "skip_connect"), Edge::new(1, 2, "conv")],
    ];
    let graphs = specs
        .into_iter()
        .map(|edges| {
            let g = encode_cell(&CellSpec { num_nodes: 3, edges }, &vocab).unwrap();
            PreparedGraph::new(&g.pad_to(6).unwrap())
        })
        .collect();
    (graphs, vocab.feature_dim())
}

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error floor for near-zero gradient entries.
pub const FD_FLOOR: f64 = 1e-6;

/// Worst relative error per parameter for the joint loss of a two-sample
/// batch, model n = 6, c = 8, L = 2.
pub fn gradient_errors(use_nsam: bool, seed: u64) -> Vec<(String, f64)> {
    let (graphs, d) = small_graphs();
    let mut cfg = PredictorConfig::new(6, d);
    cfg.hidden_dim = 8;
    cfg.trunk_layers = 2;
    cfg.use_nsam = use_nsam;
    let mut params = PredictorParams::init(cfg, seed).unwrap();
    let codes = [
        EstimationCode {
            losses: [0.7, -0.2, 1.1],
            normalized: true,
        },
        EstimationCode {
            losses: [-0.9, 0.4, -0.6],
            normalized: true,
        },
    ];
    let batch: Vec<TrainingSample> = graphs
        .iter()
        .zip(&codes)
        .zip([0.71, 0.42])
        .map(|((g, c), a)| TrainingSample {
            graph: g,
            code: *c,
            accuracy: a,
        })
        .collect();
    let (_, grads) = loss_and_gradients(&params, &batch).unwrap();
    let mut out = Vec::new();
    for k in 0..params.set().len() {
        let shape = params.set().get(k).shape();
        let mut numeric = Matrix::zeros(shape.0, shape.1);
        for e in 0..params.set().get(k).len() {
            let orig = params.set().get(k).data()[e];
            params.set_mut().get_mut(k).data_mut()[e] = orig + FD_STEP;
            let up = joint_loss_value(&params, &batch).unwrap();
            params.set_mut().get_mut(k).data_mut()[e] = orig - FD_STEP;
            let down = joint_loss_value(&params, &batch).unwrap();
            params.set_mut().get_mut(k).data_mut()[e] = orig;
            numeric.data_mut()[e] = (up - down) / (2.0 * FD_STEP);
        }
        out.push((params.set().name(k).to_string(), max_relative_error(&grads[k], &numeric, FD_FLOOR)));
    }
    out
}

/// O(n²) pair counting.
pub fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty) = (0i64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            tx += u64::from(dx == 0.0);
            ty += u64::from(dy == 0.0);
            s += i64::from(dx * dy > 0.0) - i64::from(dx * dy < 0.0);
        }
    }
    let n0 = (n * (n - 1) / 2) as u64;
    s as f64 / ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt()
}

/// Average ranks by counting, then Pearson on the doubled ranks.
pub fn brute_rho(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<i128> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as i128;
                let equal = v.iter().filter(|b| *b == a).count() as i128;
                2 * less + equal + 1
            })
            .collect()
    };
    let (a, b) = (ranks(x), ranks(y));
    let n = a.len() as i128;
    let sa: i128 = a.iter().sum();
    let sb: i128 = b.iter().sum();
    let saa: i128 = a.iter().map(|v| v * v).sum();
    let sbb: i128 = b.iter().map(|v| v * v).sum();
    let sab: i128 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let cov = n * sab - sa * sb;
    let va = n * saa - sa * sa;
    let vb = n * sbb - sb * sb;
    (cov as f64 / (va as f64 * vb as f64).sqrt()).clamp(-1.0, 1.0)
}

fn constant(v: &[f64]) -> bool {
    v.iter().all(|a| *a == v[0])
}

pub fn check_exact(x: &[f64], y: &[f64]) {
    if constant(x) || constant(y) {
        assert!(kendall_tau(x, y).is_err());
        assert!(spearman_rho(x, y).is_err());
        return;
    }
    assert_eq!(kendall_tau(x, y).unwrap(), brute_tau(x, y), "tau {x:?} {y:?}");
    assert_eq!(spearman_rho(x, y).unwrap(), brute_rho(x, y), "rho {x:?} {y:?}");
}

/// Every vector over `{0, .., k-1}^n`.
pub fn all_vectors(n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..k.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = code % k;
                    code /= k;
                    d as f64
                })
                .collect()
        })
        .collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}
