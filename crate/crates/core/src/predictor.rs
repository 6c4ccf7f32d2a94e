//! The two-branch Siamese accuracy predictor.
//!
//! A shared GCN trunk (optionally followed by node self-attention, NSAM)
//! embeds the cell. The basic branch mean-pools the trunk output into a
//! linear head. The estimation branch first fuses the upsampled Estimation
//! Code into the trunk output with an adjacency-masked cross-attention block
//! (EFM), then pools into its own head.
//!
//! Attention blocks share one wiring: `Q`, `K`, `V` come from graph
//! convolutions, scores `Q·Kᵀ` are masked by `M = A + I` (Hadamard product,
//! then a softmax over the allowed entries only), and the attended values get
//! a skip connection before a final graph convolution.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::estimation::{EstimationCode, CODE_LENGTH};
use crate::graph::CellGraph;
use crate::optim::{adam_step, AdamState, ParamSet};
use crate::tensor::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Graphs scored per tape during batched inference.
const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub hidden_dim: usize,
    pub trunk_layers: usize,
    pub use_nsam: bool,
    pub max_nodes: usize,
    pub feature_dim: usize,
    pub code_length: usize,
    pub learning_rate: f64,
    pub output_activation: OutputActivation,
}

impl PredictorConfig {
    /// Defaults for everything not dictated by the search space.
    pub fn new(max_nodes: usize, feature_dim: usize) -> Self {
        Self {
            hidden_dim: 64,
            trunk_layers: 3,
            use_nsam: true,
            max_nodes,
            feature_dim,
            code_length: CODE_LENGTH,
            learning_rate: 1e-3,
            output_activation: OutputActivation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 4 {
            return Err(Error::Config(format!("hidden_dim must be >= 4, got {}", self.hidden_dim)));
        }
        if self.trunk_layers < 1 {
            return Err(Error::Config("trunk_layers must be >= 1".into()));
        }
        if self.code_length != CODE_LENGTH {
            return Err(Error::Config(format!("code_length must be {CODE_LENGTH}, got {}", self.code_length)));
        }
        if self.max_nodes == 0 || self.feature_dim == 0 {
            return Err(Error::Config("max_nodes and feature_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Indices of each role inside the [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    trunk: Vec<usize>,
    nsam: Option<[usize; 4]>,
    efm: [usize; 4],
    upsample_w: usize,
    upsample_b: usize,
    basic_w: usize,
    basic_b: usize,
    est_w: usize,
    est_b: usize,
}

const ATTN_ROLES: [&str; 4] = ["q", "k", "v", "o"];

impl Layout {
    fn resolve(config: &PredictorConfig, set: &ParamSet) -> Result<Self> {
        let find = |name: String| {
            set.position(&name)
                .ok_or_else(|| Error::Config(format!("parameter `{name}` missing")))
        };
        let attn = |prefix: &str| -> Result<[usize; 4]> {
            Ok([
                find(format!("{prefix}.{}", ATTN_ROLES[0]))?,
                find(format!("{prefix}.{}", ATTN_ROLES[1]))?,
                find(format!("{prefix}.{}", ATTN_ROLES[2]))?,
                find(format!("{prefix}.{}", ATTN_ROLES[3]))?,
            ])
        };
        Ok(Self {
            trunk: (0..config.trunk_layers).map(|i| find(format!("trunk.{i}"))).collect::<Result<_>>()?,
            nsam: if config.use_nsam { Some(attn("nsam")?) } else { None },
            efm: attn("efm")?,
            upsample_w: find("upsample.weight".into())?,
            upsample_b: find("upsample.bias".into())?,
            basic_w: find("head.basic.weight".into())?,
            basic_b: find("head.basic.bias".into())?,
            est_w: find("head.estimation.weight".into())?,
            est_b: find("head.estimation.bias".into())?,
        })
    }
}

/// Expected shapes of every parameter, in storage order.
fn param_shapes(config: &PredictorConfig) -> Vec<(String, (usize, usize))> {
    let c = config.hidden_dim;
    let mut shapes = Vec::new();
    for i in 0..config.trunk_layers {
        let fan_in = if i == 0 { config.feature_dim } else { c };
        shapes.push((format!("trunk.{i}"), (fan_in, c)));
    }
    if config.use_nsam {
        for r in ATTN_ROLES {
            shapes.push((format!("nsam.{r}"), (c, c)));
        }
    }
    for r in ATTN_ROLES {
        shapes.push((format!("efm.{r}"), (c, c)));
    }
    let nc = config.max_nodes * c;
    shapes.push(("upsample.weight".into(), (config.code_length, nc)));
    shapes.push(("upsample.bias".into(), (1, nc)));
    shapes.push(("head.basic.weight".into(), (c, 1)));
    shapes.push(("head.basic.bias".into(), (1, 1)));
    shapes.push(("head.estimation.weight".into(), (c, 1)));
    shapes.push(("head.estimation.bias".into(), (1, 1)));
    shapes
}

/// All trainable matrices of the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub config: PredictorConfig,
    set: ParamSet,
    layout: Layout,
}

impl PredictorParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization. Biases use the
    /// fan-in of the weight they accompany.
    pub fn init(config: PredictorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        for (name, (rows, cols)) in param_shapes(&config) {
            let fan_in = if name.ends_with(".bias") {
                if name.starts_with("upsample") {
                    config.code_length
                } else {
                    config.hidden_dim
                }
            } else {
                rows
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
            set.push(name, Matrix::from_vec(rows, cols, data)?);
        }
        Self::from_parts(config, set)
    }

    pub fn from_parts(config: PredictorConfig, set: ParamSet) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != set.len() {
            return Err(Error::Config(format!(
                "expected {} parameters for this config, found {}",
                expected.len(),
                set.len()
            )));
        }
        for (name, shape) in &expected {
            let m = set
                .by_name(name)
                .ok_or_else(|| Error::Config(format!("parameter `{name}` missing")))?;
            if m.shape() != *shape {
                return Err(Error::dim("checkpoint", *shape, m.shape()));
            }
            if !m.is_finite() {
                return Err(Error::Config(format!("parameter `{name}` holds non-finite values")));
            }
        }
        let layout = Layout::resolve(&config, &set)?;
        Ok(Self { config, set, layout })
    }

    pub fn set(&self) -> &ParamSet {
        &self.set
    }

    /// Mutable access for perturbation experiments; shapes must be preserved.
    pub fn set_mut(&mut self) -> &mut ParamSet {
        &mut self.set
    }

    pub fn trunk_param_names(&self) -> Vec<&str> {
        self.layout.trunk.iter().map(|&i| self.set.name(i)).collect()
    }
}

/// Per-graph constants consumed by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub features: Matrix,
    /// `rownorm(A + I)`
    pub norm_adj: Matrix,
    /// `A + I` as 0/1
    pub mask: Matrix,
}

impl PreparedGraph {
    pub fn new(graph: &CellGraph) -> Self {
        Self::from_matrices(&graph.adjacency, graph.features.clone())
    }

    pub fn from_matrices(adjacency: &Matrix, features: Matrix) -> Self {
        let n = adjacency.rows();
        let mut mask = adjacency.map(|v| if v != 0.0 { 1.0 } else { 0.0 });
        for i in 0..n {
            mask.set(i, i, 1.0);
        }
        let mut norm_adj = mask.clone();
        for i in 0..n {
            let s: f64 = mask.row(i).iter().sum();
            for j in 0..n {
                norm_adj.set(i, j, mask.get(i, j) / s);
            }
        }
        Self {
            features,
            norm_adj,
            mask,
        }
    }

    pub fn n(&self) -> usize {
        self.mask.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Basic,
    Estimation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub branch: Branch,
}

/// Graph inputs placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GraphVars {
    pub features: Var,
    pub norm_adj: Var,
    pub mask: Var,
}

impl GraphVars {
    pub fn place(tape: &mut Tape, g: &PreparedGraph) -> Self {
        Self {
            features: tape.constant(g.features.clone()),
            norm_adj: tape.constant(g.norm_adj.clone()),
            mask: tape.constant(g.mask.clone()),
        }
    }
}

/// `relu(rownorm(A + I) · H · W)`
pub fn gcn_layer(tape: &mut Tape, h: Var, norm_adj: Var, w: Var) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let prop = tape.matmul(norm_adj, hw)?;
    Ok(tape.relu(prop))
}

/// Adjacency-masked attention. Queries and values come from `h`, keys from
/// `key_source`; `weights` are the q, k, v and output convolutions.
pub fn masked_attention(tape: &mut Tape, h: Var, key_source: Var, graph: GraphVars, weights: [Var; 4]) -> Result<Var> {
    let [wq, wk, wv, wo] = weights;
    let q = gcn_layer(tape, h, graph.norm_adj, wq)?;
    let k = gcn_layer(tape, key_source, graph.norm_adj, wk)?;
    let v = gcn_layer(tape, h, graph.norm_adj, wv)?;
    let scores = tape.matmul_transposed(q, k)?;
    let masked = tape.hadamard(scores, graph.mask)?;
    let mask = tape.value(graph.mask).clone();
    let attn = tape.masked_softmax(masked, &mask)?;
    let mixed = tape.matmul(attn, v)?;
    let skip = tape.add(mixed, h)?;
    gcn_layer(tape, skip, graph.norm_adj, wo)
}

/// Estimation fusion: cross-attention with keys from the upsampled code.
pub fn efm_forward(tape: &mut Tape, h: Var, code_matrix: Var, graph: GraphVars, weights: [Var; 4]) -> Result<Var> {
    masked_attention(tape, h, code_matrix, graph, weights)
}

/// Node self-attention: queries, keys and values all from `h`.
pub fn nsam_forward(tape: &mut Tape, h: Var, graph: GraphVars, weights: [Var; 4]) -> Result<Var> {
    masked_attention(tape, h, h, graph, weights)
}

/// Dense `code (1×3) -> 1×(n·c)`, reshaped to `n×c`.
pub fn upsample_code(tape: &mut Tape, code: Var, weight: Var, bias: Var, nodes: usize, hidden: usize) -> Result<Var> {
    if tape.value(code).shape() != (1, CODE_LENGTH) {
        let (r, c) = tape.value(code).shape();
        return Err(Error::Contract(format!("estimation code must be 1x{CODE_LENGTH}, got {r}x{c}")));
    }
    let flat = tape.matmul(code, weight)?;
    let flat = tape.add(flat, bias)?;
    tape.reshape(flat, nodes, hidden)
}

/// Parameters placed on one tape.
struct Bound<'a> {
    vars: Vec<Var>,
    layout: &'a Layout,
    config: &'a PredictorConfig,
}

impl<'a> Bound<'a> {
    fn place(tape: &mut Tape, params: &'a PredictorParams, trainable: bool) -> Self {
        let vars = params
            .set
            .iter()
            .map(|p| {
                if trainable {
                    tape.parameter(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Self {
            vars,
            layout: &params.layout,
            config: &params.config,
        }
    }

    fn attn(&self, idx: [usize; 4]) -> [Var; 4] {
        idx.map(|i| self.vars[i])
    }

    fn check_graph(&self, tape: &Tape, g: GraphVars) -> Result<()> {
        let x = tape.value(g.features).shape();
        let want = (self.config.max_nodes, self.config.feature_dim);
        if x != want {
            return Err(Error::dim("predictor input", want, x));
        }
        Ok(())
    }

    fn trunk(&self, tape: &mut Tape, g: GraphVars) -> Result<Var> {
        self.check_graph(tape, g)?;
        let mut h = g.features;
        for &i in &self.layout.trunk {
            h = gcn_layer(tape, h, g.norm_adj, self.vars[i])?;
        }
        if let Some(nsam) = self.layout.nsam {
            h = nsam_forward(tape, h, g, self.attn(nsam))?;
        }
        Ok(h)
    }

    fn head(&self, tape: &mut Tape, h: Var, w: usize, b: usize) -> Result<Var> {
        let pooled = tape.mean_pool_rows(h)?;
        let out = tape.matmul(pooled, self.vars[w])?;
        tape.add(out, self.vars[b])
    }

    fn basic(&self, tape: &mut Tape, trunk: Var) -> Result<Var> {
        self.head(tape, trunk, self.layout.basic_w, self.layout.basic_b)
    }

    fn estimation(&self, tape: &mut Tape, trunk: Var, g: GraphVars, code: &EstimationCode) -> Result<Var> {
        let code = tape.constant(Matrix::from_vec(1, CODE_LENGTH, code.losses.to_vec())?);
        let e = upsample_code(
            tape,
            code,
            self.vars[self.layout.upsample_w],
            self.vars[self.layout.upsample_b],
            self.config.max_nodes,
            self.config.hidden_dim,
        )?;
        let fused = efm_forward(tape, trunk, e, g, self.attn(self.layout.efm))?;
        self.head(tape, fused, self.layout.est_w, self.layout.est_b)
    }
}

/// One supervised example.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSample<'a> {
    pub graph: &'a PreparedGraph,
    pub code: EstimationCode,
    pub accuracy: f64,
}

/// Joint loss `MSE(basic, g) + MSE(estimation, g)` over a batch, with gradients
/// for every parameter in storage order.
pub fn loss_and_gradients(params: &PredictorParams, batch: &[TrainingSample<'_>]) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let bound = Bound::place(&mut tape, params, true);
    let loss = joint_loss(&mut tape, &bound, batch)?;
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(Error::Training {
            param: "<loss>".into(),
            reason: format!("non-finite loss {value}"),
        });
    }
    let grads = tape.backward(loss)?;
    let out = bound
        .vars
        .iter()
        .zip(params.set.iter())
        .map(|(&v, p)| grads.get_or_zeros(v, p.value.shape()))
        .collect();
    Ok((value, out))
}

/// Joint loss value only.
pub fn joint_loss_value(params: &PredictorParams, batch: &[TrainingSample<'_>]) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = Bound::place(&mut tape, params, false);
    let loss = joint_loss(&mut tape, &bound, batch)?;
    Ok(tape.value(loss).get(0, 0))
}

fn joint_loss(tape: &mut Tape, bound: &Bound<'_>, batch: &[TrainingSample<'_>]) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("training batch is empty".into()));
    }
    let mut total: Option<Var> = None;
    for s in batch {
        if !(0.0..=1.0).contains(&s.accuracy) {
            return Err(Error::Contract(format!("accuracy {} outside [0, 1]", s.accuracy)));
        }
        let g = GraphVars::place(tape, s.graph);
        let trunk = bound.trunk(tape, g)?;
        let target = Matrix::scalar(s.accuracy);
        let pb = bound.basic(tape, trunk)?;
        let pe = bound.estimation(tape, trunk, g, &s.code)?;
        let lb = tape.mse(pb, &target)?;
        let le = tape.mse(pe, &target)?;
        let pair = tape.add(lb, le)?;
        total = Some(match total {
            Some(t) => tape.add(t, pair)?,
            None => pair,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

/// Predictor with its optimizer state.
#[derive(Debug, Clone)]
pub struct SiamesePredictor {
    params: PredictorParams,
    adam: AdamState,
}

impl SiamesePredictor {
    pub fn new(config: PredictorConfig, seed: u64) -> Result<Self> {
        Ok(Self::from_params(PredictorParams::init(config, seed)?))
    }

    pub fn from_params(params: PredictorParams) -> Self {
        let adam = AdamState::new(&params.set);
        Self { params, adam }
    }

    pub fn params(&self) -> &PredictorParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut PredictorParams {
        &mut self.params
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.params.config
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.adam.step
    }

    pub fn predict_basic(&self, g: &PreparedGraph) -> Result<Prediction> {
        Ok(Prediction {
            value: self.predict_basic_batch(&[g])?[0],
            branch: Branch::Basic,
        })
    }

    pub fn predict_estimation(&self, g: &PreparedGraph, code: &EstimationCode) -> Result<Prediction> {
        Ok(Prediction {
            value: self.predict_estimation_batch(&[(g, *code)])?[0],
            branch: Branch::Estimation,
        })
    }

    pub fn predict_basic_batch(&self, graphs: &[&PreparedGraph]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let bound = Bound::place(&mut tape, &self.params, false);
            for g in chunk {
                let gv = GraphVars::place(&mut tape, g);
                let trunk = bound.trunk(&mut tape, gv)?;
                let p = bound.basic(&mut tape, trunk)?;
                out.push(tape.value(p).get(0, 0));
            }
        }
        Ok(out)
    }

    pub fn predict_estimation_batch(&self, items: &[(&PreparedGraph, EstimationCode)]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let bound = Bound::place(&mut tape, &self.params, false);
            for (g, code) in chunk {
                let gv = GraphVars::place(&mut tape, g);
                let trunk = bound.trunk(&mut tape, gv)?;
                let p = bound.estimation(&mut tape, trunk, gv, code)?;
                out.push(tape.value(p).get(0, 0));
            }
        }
        Ok(out)
    }

    /// One Adam step on the joint loss; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[TrainingSample<'_>]) -> Result<f64> {
        let (loss, grads) = loss_and_gradients(&self.params, batch)?;
        let lr = self.params.config.learning_rate;
        adam_step(&mut self.params.set, &grads, &mut self.adam, lr)?;
        Ok(loss)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &Checkpoint::from(&self.params))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads parameters; optimizer state starts fresh.
    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        Ok(Self::from_params(ckpt.into_params()?))
    }
}

/// On-disk parameter container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: PredictorConfig,
    pub params: ParamSet,
}

impl From<&PredictorParams> for Checkpoint {
    fn from(p: &PredictorParams) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config: p.config.clone(),
            params: p.set.clone(),
        }
    }
}

impl Checkpoint {
    pub fn into_params(self) -> Result<PredictorParams> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        PredictorParams::from_parts(self.config, self.params)
    }
}
