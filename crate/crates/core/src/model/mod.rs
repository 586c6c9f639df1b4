//! The attention-KAN regressor and the two MLP baselines behind one
//! interface: inputs in, 25 logistic outputs out.
//!
//! Attention-KAN forward pass for a 55-feature input `x`:
//!
//! 1. token lift: `tok[t] = x[t]·E[t] + PE[t]` (55 tokens of width `d_model`)
//! 2. self-attention, optionally added back onto the tokens (residual)
//! 3. shared projection `z[t] = w·h[t] + b`
//! 4. KAN layers 55 → 40 → 40 → 25
//! 5. logistic
//!
//! All weights live in one flat vector split into named sections.

mod checkpoint;
mod latency;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use latency::{measure_latency, LatencyStats};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::face_sim::{FeatureVector, FEATURE_DIM, LANDMARK_DIM};
use crate::nn::{
    logistic, positional_encoding, silu, silu_grad, AttentionCache, Dense, KanCache, KanInit, KanLayer, Mixing,
    SelfAttention, SplineGrid,
};
use crate::parallel::Exec;
use crate::seed;
use crate::servo_space::{ServoFrame, SERVO_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    AttentionKan,
    MlpBlendshape,
    MlpLandmark,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::AttentionKan, ModelKind::MlpBlendshape, ModelKind::MlpLandmark];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AttentionKan => "attention-kan",
            ModelKind::MlpBlendshape => "mlp-blendshape",
            ModelKind::MlpLandmark => "mlp-landmark",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            ModelKind::MlpLandmark => LANDMARK_DIM,
            _ => FEATURE_DIM,
        }
    }

    /// Whether the model reads landmarks instead of blendshape features.
    pub fn uses_landmarks(self) -> bool {
        self == ModelKind::MlpLandmark
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown model kind '{s}'")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub intervals: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            intervals: 5,
            lo: -1.5,
            hi: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub kan_base_gain: f64,
    pub kan_spline_weight: f64,
    pub kan_coef_sigma: f64,
    pub embed_sigma: f64,
    pub attention_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kan_base_gain: 1.0,
            kan_spline_weight: 0.1,
            kan_coef_sigma: 0.1,
            embed_sigma: 1.0,
            attention_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub seed: u64,
    pub d_model: usize,
    /// Attention output is added to the lifted tokens.
    pub residual: bool,
    pub kan_widths: Vec<usize>,
    pub mlp_widths: Vec<usize>,
    pub grid: GridConfig,
    pub init: InitConfig,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        ModelConfig {
            kind,
            seed,
            d_model: 16,
            residual: true,
            kan_widths: vec![FEATURE_DIM, 40, 40, SERVO_DIM],
            mlp_widths: vec![kind.input_dim(), 64, 64, SERVO_DIM],
            grid: GridConfig::default(),
            init: InitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = match self.kind {
            ModelKind::AttentionKan => {
                if self.d_model == 0 || self.d_model % 2 != 0 {
                    return Err(Error::Argument(format!("d_model must be even, got {}", self.d_model)));
                }
                &self.kan_widths
            }
            _ => &self.mlp_widths,
        };
        if widths.len() != 4 {
            return Err(Error::Argument(format!("expected 4 layer widths, got {}", widths.len())));
        }
        if widths[0] != self.kind.input_dim() || widths[3] != SERVO_DIM || widths.contains(&0) {
            return Err(Error::Argument(format!(
                "layer widths {widths:?} must run {} → … → {SERVO_DIM}",
                self.kind.input_dim()
            )));
        }
        SplineGrid::cubic(self.grid.intervals, self.grid.lo, self.grid.hi)?;
        Ok(())
    }
}

/// Named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Arch {
    AttentionKan {
        d: usize,
        residual: bool,
        pe: Vec<f64>,
        attention: SelfAttention,
        kan: Vec<KanLayer>,
    },
    Mlp {
        layers: Vec<Dense>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    arch: Arch,
    params: Vec<f64>,
    sections: Vec<Section>,
    mixing: Mixing,
    version: u64,
}

fn build_arch(config: &ModelConfig) -> Result<(Arch, Vec<Section>)> {
    config.validate()?;
    let mut sections = Vec::new();
    let mut offset = 0;
    let mut add = |name: String, len: usize| {
        sections.push(Section { name, offset, len });
        offset += len;
    };
    let arch = match config.kind {
        ModelKind::AttentionKan => {
            let d = config.d_model;
            let t = FEATURE_DIM;
            let attention = SelfAttention::new(t, d)?;
            let grid = SplineGrid::cubic(config.grid.intervals, config.grid.lo, config.grid.hi)?;
            let kan = config
                .kan_widths
                .windows(2)
                .map(|w| KanLayer::new(w[0], w[1], grid.clone()))
                .collect::<Result<Vec<_>>>()?;
            add("embed".into(), t * d);
            add("attention".into(), attention.param_count());
            add("project".into(), d + 1);
            for (i, l) in kan.iter().enumerate() {
                add(format!("kan.{i}"), l.param_count());
            }
            Arch::AttentionKan {
                d,
                residual: config.residual,
                pe: positional_encoding(t, d)?,
                attention,
                kan,
            }
        }
        _ => {
            let layers = config
                .mlp_widths
                .windows(2)
                .map(|w| Dense::new(w[0], w[1]))
                .collect::<Result<Vec<_>>>()?;
            for (i, l) in layers.iter().enumerate() {
                add(format!("dense.{i}"), l.param_count());
            }
            Arch::Mlp { layers }
        }
    };
    Ok((arch, sections))
}

/// Reusable buffers for one forward/backward pass. After the first call no
/// further allocation happens.
#[derive(Debug, Clone)]
pub struct Workspace {
    version: Option<u64>,
    input: Vec<f64>,
    tokens: Vec<f64>,
    attended: Vec<f64>,
    hidden: Vec<f64>,
    att_cache: AttentionCache,
    kan_caches: Vec<KanCache>,
    /// Layer activations: `acts[0]` is the KAN/MLP input, `acts[L]` the logits.
    acts: Vec<Vec<f64>>,
    /// MLP pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
    grad_acts: Vec<Vec<f64>>,
    grad_tokens: Vec<f64>,
    grad_hidden: Vec<f64>,
    grad_input: Vec<f64>,
}

impl Workspace {
    pub fn new(model: &Model) -> Self {
        let widths: Vec<usize> = match &model.arch {
            Arch::AttentionKan { kan, .. } => {
                std::iter::once(kan[0].in_dim()).chain(kan.iter().map(|l| l.out_dim())).collect()
            }
            Arch::Mlp { layers } => std::iter::once(layers[0].in_dim()).chain(layers.iter().map(|l| l.out_dim())).collect(),
        };
        let (td, att_cache, kan_caches) = match &model.arch {
            Arch::AttentionKan { d, attention, kan, .. } => (
                FEATURE_DIM * d,
                AttentionCache::new(attention),
                kan.iter().map(KanCache::new).collect(),
            ),
            Arch::Mlp { .. } => (0, AttentionCache::default(), Vec::new()),
        };
        Workspace {
            version: None,
            input: vec![0.0; model.input_dim()],
            tokens: vec![0.0; td],
            attended: vec![0.0; td],
            hidden: vec![0.0; td],
            att_cache,
            kan_caches,
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            pre: widths.iter().map(|&w| vec![0.0; w]).collect(),
            output: vec![0.0; SERVO_DIM],
            grad_acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            grad_tokens: vec![0.0; td],
            grad_hidden: vec![0.0; td],
            grad_input: vec![0.0; model.input_dim()],
        }
    }

    /// Outputs of the last forward pass.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Pre-logistic values of the last forward pass.
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }

    /// Gradient with respect to the model input from the last backward pass.
    pub fn input_gradient(&self) -> &[f64] {
        &self.grad_input
    }

    /// Attention weights of the last forward pass (attention-KAN only).
    pub fn attention_weights(&self) -> &[f64] {
        self.att_cache.weights()
    }
}

impl Model {
    /// Builds a model with seeded initial weights.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let (arch, sections) = build_arch(&config)?;
        let total = sections.last().map_or(0, |s| s.offset + s.len);
        let mut model = Model {
            config,
            arch,
            params: vec![0.0; total],
            sections,
            mixing: Mixing::Attention,
            version: 0,
        };
        model.initialize();
        Ok(model)
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        let (arch, sections) = build_arch(&config)?;
        let total = sections.last().map_or(0, |s| s.offset + s.len);
        ensure_len(&params, total, "model parameters")?;
        Ok(Model {
            config,
            arch,
            params,
            sections,
            mixing: Mixing::Attention,
            version: 0,
        })
    }

    fn initialize(&mut self) {
        let init = self.config.init;
        let base = seed::mix(self.config.seed, seed::stream::INIT);
        let ranges: Vec<_> = self.sections.iter().map(|s| s.offset..s.offset + s.len).collect();
        match &self.arch {
            Arch::AttentionKan { d, attention, kan, .. } => {
                use rand_distr::{Distribution, Normal};
                let mut rng = seed::item_rng(base, 0, 0);
                let normal = Normal::new(0.0, init.embed_sigma).expect("finite sigma");
                let r = ranges[0].clone();
                for v in &mut self.params[r] {
                    *v = normal.sample(&mut rng);
                }
                let r = ranges[1].clone();
                attention.init(&mut self.params[r], init.attention_sigma, &mut seed::item_rng(base, 1, 0));
                let r = ranges[2].clone();
                let a = (3.0 / *d as f64).sqrt();
                let mut rng = seed::item_rng(base, 2, 0);
                let proj = &mut self.params[r];
                for v in &mut proj[..*d] {
                    *v = rand::Rng::random_range(&mut rng, -a..a);
                }
                proj[*d] = 0.0;
                let kinit = KanInit {
                    base_gain: init.kan_base_gain,
                    spline_weight: init.kan_spline_weight,
                    coef_sigma: init.kan_coef_sigma,
                };
                for (i, layer) in kan.iter().enumerate() {
                    let r = ranges[3 + i].clone();
                    layer.init(&mut self.params[r], &kinit, &mut seed::item_rng(base, 3 + i as u64, 0));
                }
            }
            Arch::Mlp { layers } => {
                for (i, layer) in layers.iter().enumerate() {
                    let r = ranges[i].clone();
                    layer.init(&mut self.params[r], &mut seed::item_rng(base, i as u64, 0));
                }
            }
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn input_dim(&self) -> usize {
        self.config.kind.input_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn section(&self, name: &str) -> Option<&[f64]> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.params[s.offset..s.offset + s.len])
    }

    /// Increments on every parameter change; caches from older versions are
    /// rejected by [`backward`](Self::backward).
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to the parameters. Invalidates existing workspaces.
    pub fn update_params<F: FnOnce(&mut [f64]) -> R, R>(&mut self, f: F) -> R {
        self.version += 1;
        f(&mut self.params)
    }

    pub fn mixing(&self) -> Mixing {
        self.mixing
    }

    /// Switches the attention block between full attention and identity
    /// mixing (each token sees only itself). Has no effect on the MLPs.
    pub fn set_mixing(&mut self, mixing: Mixing) {
        self.version += 1;
        self.mixing = mixing;
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self)
    }

    fn param_slice(&self, i: usize) -> &[f64] {
        let s = &self.sections[i];
        &self.params[s.offset..s.offset + s.len]
    }

    /// Runs the network on `input`, leaving activations in `ws`. Returns the
    /// 25 outputs in (0, 1).
    pub fn forward_ws<'w>(&self, input: &[f64], ws: &'w mut Workspace) -> Result<&'w [f64]> {
        ensure_len(input, self.input_dim(), "model input")?;
        ws.version = None;
        ws.input.copy_from_slice(input);
        match &self.arch {
            Arch::AttentionKan {
                d,
                residual,
                pe,
                attention,
                kan,
            } => {
                let d = *d;
                if ws.tokens.len() != FEATURE_DIM * d || ws.kan_caches.len() != kan.len() {
                    *ws = Workspace::new(self);
                    ws.input.copy_from_slice(input);
                }
                let embed = self.param_slice(0);
                for t in 0..FEATURE_DIM {
                    for j in 0..d {
                        ws.tokens[t * d + j] = input[t] * embed[t * d + j] + pe[t * d + j];
                    }
                }
                attention.forward(self.param_slice(1), &ws.tokens, &mut ws.attended, &mut ws.att_cache, self.mixing)?;
                for i in 0..ws.hidden.len() {
                    ws.hidden[i] = if *residual { ws.tokens[i] + ws.attended[i] } else { ws.attended[i] };
                }
                let proj = self.param_slice(2);
                let z = &mut ws.acts[0];
                for t in 0..FEATURE_DIM {
                    let h = &ws.hidden[t * d..(t + 1) * d];
                    z[t] = proj[d] + h.iter().zip(&proj[..d]).map(|(a, b)| a * b).sum::<f64>();
                }
                for (l, layer) in kan.iter().enumerate() {
                    let (lo, hi) = ws.acts.split_at_mut(l + 1);
                    layer.forward(self.param_slice(3 + l), &lo[l], &mut hi[0], &mut ws.kan_caches[l])?;
                }
            }
            Arch::Mlp { layers } => {
                if ws.acts.len() != layers.len() + 1 || ws.acts[0].len() != input.len() {
                    *ws = Workspace::new(self);
                }
                ws.acts[0].copy_from_slice(input);
                let last = layers.len() - 1;
                for (l, layer) in layers.iter().enumerate() {
                    let (lo, hi) = ws.acts.split_at_mut(l + 1);
                    layer.forward(self.param_slice(l), &lo[l], &mut hi[0])?;
                    if l < last {
                        ws.pre[l + 1].copy_from_slice(&hi[0]);
                        for v in hi[0].iter_mut() {
                            *v = silu(*v);
                        }
                    }
                }
            }
        }
        let logits = ws.acts.last().expect("layers");
        for (o, &z) in ws.output.iter_mut().zip(logits) {
            *o = logistic(z);
        }
        ws.version = Some(self.version);
        Ok(&ws.output)
    }

    /// Backpropagates `grad_output` (dL/d output) through the pass stored in
    /// `ws`, adding parameter gradients into `grad`. The input gradient is
    /// left in [`Workspace::input_gradient`].
    pub fn backward(&self, ws: &mut Workspace, grad_output: &[f64], grad: &mut [f64]) -> Result<()> {
        if ws.version != Some(self.version) {
            return Err(Error::State("workspace does not hold a forward pass of the current parameters".into()));
        }
        ensure_len(grad_output, SERVO_DIM, "output gradient")?;
        ensure_len(grad, self.params.len(), "parameter gradient")?;
        let n_layers = ws.acts.len() - 1;
        {
            let g = &mut ws.grad_acts[n_layers];
            for i in 0..SERVO_DIM {
                let y = ws.output[i];
                g[i] = grad_output[i] * y * (1.0 - y);
            }
        }
        let sec = |i: usize| {
            let s = &self.sections[i];
            s.offset..s.offset + s.len
        };
        match &self.arch {
            Arch::AttentionKan {
                d,
                residual,
                attention,
                kan,
                ..
            } => {
                let d = *d;
                for l in (0..kan.len()).rev() {
                    let (lo, hi) = ws.grad_acts.split_at_mut(l + 1);
                    kan[l].backward(
                        self.param_slice(3 + l),
                        &ws.kan_caches[l],
                        &hi[0],
                        &mut lo[l],
                        &mut grad[sec(3 + l)],
                    )?;
                }
                let proj = self.param_slice(2);
                let gproj = &mut grad[sec(2)];
                let dz = &ws.grad_acts[0];
                for t in 0..FEATURE_DIM {
                    let h = &ws.hidden[t * d..(t + 1) * d];
                    let gh = &mut ws.grad_hidden[t * d..(t + 1) * d];
                    gproj[d] += dz[t];
                    for j in 0..d {
                        gproj[j] += dz[t] * h[j];
                        gh[j] = dz[t] * proj[j];
                    }
                }
                attention.backward(
                    self.param_slice(1),
                    &mut ws.att_cache,
                    &ws.grad_hidden,
                    &mut ws.grad_tokens,
                    &mut grad[sec(1)],
                )?;
                if *residual {
                    for (gt, gh) in ws.grad_tokens.iter_mut().zip(&ws.grad_hidden) {
                        *gt += gh;
                    }
                }
                let embed = self.param_slice(0);
                let gembed = &mut grad[sec(0)];
                for t in 0..FEATURE_DIM {
                    let mut gx = 0.0;
                    for j in 0..d {
                        let g = ws.grad_tokens[t * d + j];
                        gembed[t * d + j] += ws.input[t] * g;
                        gx += embed[t * d + j] * g;
                    }
                    ws.grad_input[t] = gx;
                }
            }
            Arch::Mlp { layers } => {
                for l in (0..layers.len()).rev() {
                    let (lo, hi) = ws.grad_acts.split_at_mut(l + 1);
                    layers[l].backward(self.param_slice(l), &ws.acts[l], &hi[0], &mut lo[l], &mut grad[sec(l)])?;
                    if l > 0 {
                        for (g, &z) in lo[l].iter_mut().zip(&ws.pre[l]) {
                            *g *= silu_grad(z);
                        }
                    }
                }
                ws.grad_input.copy_from_slice(&ws.grad_acts[0]);
            }
        }
        Ok(())
    }

    /// Single prediction on a raw input vector (55 features, or 126
    /// landmark coordinates for the landmark baseline).
    pub fn predict(&self, input: &[f64]) -> Result<ServoFrame> {
        let mut ws = self.workspace();
        let out = self.forward_ws(input, &mut ws)?;
        ServoFrame::from_slice(out)
    }

    pub fn forward(&self, fv: &FeatureVector) -> Result<ServoFrame> {
        self.predict(fv.as_slice())
    }

    /// Per-item predictions; identical to calling [`predict`](Self::predict)
    /// on each input.
    pub fn predict_batch(&self, inputs: &[&[f64]], exec: Exec) -> Result<Vec<ServoFrame>> {
        if inputs.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        const CHUNK: usize = 64;
        let chunks = inputs.len().div_ceil(CHUNK);
        let parts = exec.map(chunks, |c| -> Result<Vec<ServoFrame>> {
            let mut ws = self.workspace();
            inputs[c * CHUNK..((c + 1) * CHUNK).min(inputs.len())]
                .iter()
                .map(|x| ServoFrame::from_slice(self.forward_ws(x, &mut ws)?))
                .collect()
        });
        let mut out = Vec::with_capacity(inputs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    pub fn forward_batch(&self, batch: &[FeatureVector], exec: Exec) -> Result<Vec<ServoFrame>> {
        let inputs: Vec<&[f64]> = batch.iter().map(|f| f.as_slice()).collect();
        self.predict_batch(&inputs, exec)
    }
}

/// Builds an untrained model of any kind; the baselines share the
/// training/evaluation interface of the attention-KAN.
pub fn build_baseline(config: ModelConfig) -> Result<Model> {
    Model::new(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::numeric_gradient;

    fn input(n: usize, salt: u64) -> Vec<f64> {
        let mut rng = seed::rng(salt);
        (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect()
    }

    #[test]
    fn shapes_and_sections() {
        let m = Model::new(ModelConfig::new(ModelKind::AttentionKan, 1)).unwrap();
        let names: Vec<&str> = m.sections().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["embed", "attention", "project", "kan.0", "kan.1", "kan.2"]);
        assert_eq!(m.param_count(), 55 * 16 + 3 * 256 + 17 + (55 * 40 + 40 * 40 + 40 * 25) * 10);
        let b = Model::new(ModelConfig::new(ModelKind::MlpBlendshape, 1)).unwrap();
        assert_eq!(b.param_count(), 56 * 64 + 65 * 64 + 65 * 25);
        let l = Model::new(ModelConfig::new(ModelKind::MlpLandmark, 1)).unwrap();
        assert_eq!(l.input_dim(), 126);
    }

    #[test]
    fn outputs_in_unit_interval_and_reproducible() {
        for kind in ModelKind::ALL {
            let m = Model::new(ModelConfig::new(kind, 9)).unwrap();
            let x = input(m.input_dim(), 3);
            let a = m.predict(&x).unwrap();
            assert!(a.as_slice().iter().all(|v| *v > 0.0 && *v < 1.0));
            let m2 = Model::new(ModelConfig::new(kind, 9)).unwrap();
            assert_eq!(a, m2.predict(&x).unwrap());
        }
    }

    #[test]
    fn bad_configs_rejected() {
        let mut c = ModelConfig::new(ModelKind::AttentionKan, 0);
        c.kan_widths = vec![55, 40, 25];
        assert!(Model::new(c).is_err());
        let mut c = ModelConfig::new(ModelKind::AttentionKan, 0);
        c.d_model = 15;
        assert!(Model::new(c).is_err());
        let m = Model::new(ModelConfig::new(ModelKind::MlpLandmark, 0)).unwrap();
        assert!(matches!(m.predict(&[0.5; 55]), Err(Error::Dimension(_))));
    }

    #[test]
    fn batch_matches_single() {
        let m = Model::new(ModelConfig::new(ModelKind::AttentionKan, 2)).unwrap();
        let xs: Vec<Vec<f64>> = (0..130).map(|i| input(55, i)).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let batch = m.predict_batch(&refs, Exec::default()).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            assert_eq!(&m.predict(x).unwrap(), b);
        }
        assert!(m.predict_batch(&[], Exec::Sequential).is_err());
    }

    #[test]
    fn stale_workspace_rejected() {
        let mut m = Model::new(ModelConfig::new(ModelKind::MlpBlendshape, 2)).unwrap();
        let mut ws = m.workspace();
        let x = input(55, 1);
        m.forward_ws(&x, &mut ws).unwrap();
        m.update_params(|p| p[0] += 0.1);
        let mut g = vec![0.0; m.param_count()];
        assert!(matches!(m.backward(&mut ws, &[1.0; 25], &mut g), Err(Error::State(_))));
    }

    #[test]
    fn full_model_gradient() {
        for kind in ModelKind::ALL {
            for residual in [true, false] {
                let mut c = ModelConfig::new(kind, 4);
                c.residual = residual;
                c.init.kan_spline_weight = 0.8;
                let m = Model::new(c.clone()).unwrap();
                let x = input(m.input_dim(), 8);
                let r = input(25, 9);
                let mut ws = m.workspace();
                m.forward_ws(&x, &mut ws).unwrap();
                let mut g = vec![0.0; m.param_count()];
                m.backward(&mut ws, &r, &mut g).unwrap();
                let gx = ws.input_gradient().to_vec();
                // Spot-check a strided subset of parameters.
                let idx: Vec<usize> = (0..m.param_count()).step_by(37).collect();
                let sub: Vec<f64> = idx.iter().map(|&i| m.params()[i]).collect();
                let f = |s: &[f64]| {
                    let mut p = m.params().to_vec();
                    for (&i, &v) in idx.iter().zip(s) {
                        p[i] = v;
                    }
                    let mm = Model::from_parts(c.clone(), p).unwrap();
                    let y = mm.predict(&x).unwrap();
                    y.as_slice().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
                };
                let num = numeric_gradient(f, &sub, 1e-5);
                let ana: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
                let err = crate::nn::relative_error(&ana, &num);
                assert!(err < 1e-4, "{kind} residual={residual}: {err}");
                let fx = |xx: &[f64]| {
                    let y = m.predict(xx).unwrap();
                    y.as_slice().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
                };
                let err = crate::nn::grad_check(fx, &x, &gx, 1e-5);
                assert!(err < 1e-4, "{kind} input: {err}");
            }
        }
    }
}
