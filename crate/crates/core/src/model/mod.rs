//! The AttackNet layer graph.
//!
//! ```text
//! phase(c_in → f):  Conv BN LReLU ─┬─ Conv BN LReLU ─ Conv BN ─(+)─ LReLU
//!                                  └──────────────────────────────┘
//! input → phase(3→16) → MaxPool → Dropout → phase(16→32) → MaxPool → Dropout
//!       → Flatten → Dense(→128) → Tanh → Dropout → Dense(→2) → Softmax
//! ```
//!
//! The residual shortcut adds each phase's first activation to its third
//! convolution block. Widths and input size come from [`ModelConfig`].

mod checkpoint;
mod config;
mod cost;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION,
};
pub use config::{parse_key_values, ModelConfig};
pub use cost::{flop_count, param_count, FlopBreakdown};

use crate::error::{Error, Result};
use crate::layers::{self, BatchNormState, BatchStats, Mode};
use crate::rng::Prng;
use crate::tensor::Tensor;

pub const CONV_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Adam first and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

impl Moments {
    fn zeros_like(t: &Tensor) -> Self {
        Self {
            m: Tensor::zeros_like(t),
            v: Tensor::zeros_like(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    convs: Vec<ConvParams>,
    norms: Vec<BatchNormState>,
    fc1: DenseParams,
    fc2: DenseParams,
    moments: Vec<Moments>,
    adam_step: u64,
}

/// Gradients of every trainable tensor, in [`Model::param_names`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

fn he_uniform(rng: &mut Prng, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    rng.uniform_tensor(shape, -bound, bound)
}

/// Builds a freshly initialized model: He-uniform conv/dense weights, zero
/// biases, BN gamma 1 and beta 0.
pub fn build_model(cfg: &ModelConfig, rng: &mut Prng) -> Result<Model> {
    cfg.validate()?;
    let (f1, f2) = (cfg.phase1_filters, cfg.phase2_filters);
    let channels = [
        (cfg.input_channels, f1),
        (f1, f1),
        (f1, f1),
        (f1, f2),
        (f2, f2),
        (f2, f2),
    ];
    let mut convs = Vec::with_capacity(CONV_LAYERS);
    let mut norms = Vec::with_capacity(CONV_LAYERS);
    for &(cin, cout) in &channels {
        convs.push(ConvParams {
            weight: he_uniform(rng, &[cout, cin, 3, 3], cin * 9)?,
            bias: Tensor::zeros(&[cout])?,
        });
        norms.push(BatchNormState::new(cout, cfg.bn_momentum, cfg.bn_epsilon)?);
    }
    let flat = cfg.flatten_dim();
    let fc1 = DenseParams {
        weight: he_uniform(rng, &[flat, cfg.dense_width], flat)?,
        bias: Tensor::zeros(&[cfg.dense_width])?,
    };
    let fc2 = DenseParams {
        weight: he_uniform(rng, &[cfg.dense_width, cfg.num_classes], cfg.dense_width)?,
        bias: Tensor::zeros(&[cfg.num_classes])?,
    };
    Model::from_parts(cfg.clone(), convs, norms, fc1, fc2)
}

struct PhaseTrace {
    convs: Vec<layers::Conv2dCache>,
    norms: Vec<layers::BatchNormCache>,
    acts: Vec<layers::LeakyReluCache>,
}

struct PhaseGrads {
    dx: Tensor,
    convs: Vec<layers::Conv2dGrads>,
    norms: Vec<layers::BatchNormGrads>,
}

/// Everything the backward pass needs past the phase-2 feature map.
pub struct HeadTrace {
    pool: layers::MaxPoolCache,
    drop_conv: layers::DropoutCache,
    flat_shape: Vec<usize>,
    fc1: layers::DenseCache,
    tanh: layers::TanhCache,
    drop_dense: layers::DropoutCache,
    fc2: layers::DenseCache,
}

pub struct TrunkTrace {
    phase1: PhaseTrace,
    pool1: layers::MaxPoolCache,
    drop1: layers::DropoutCache,
    phase2: PhaseTrace,
}

/// Saved state of one forward pass.
pub struct ForwardTrace {
    pub trunk: TrunkTrace,
    pub head: HeadTrace,
    /// Output of phase 2 before pooling, `[N, phase2_filters, H/2, W/2]`.
    pub feature_map: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
    /// Per-BN-layer batch statistics (training mode only).
    pub batch_stats: Vec<BatchStats>,
}

/// Gradients of the head parameters plus the gradient at the feature map.
pub struct HeadGrads {
    pub d_feature_map: Tensor,
    fc1: layers::DenseGrads,
    fc2: layers::DenseGrads,
}

impl Model {
    /// Assembles a model from explicit tensors, validating every shape.
    pub fn from_parts(
        config: ModelConfig,
        convs: Vec<ConvParams>,
        norms: Vec<BatchNormState>,
        fc1: DenseParams,
        fc2: DenseParams,
    ) -> Result<Self> {
        config.validate()?;
        let (f1, f2) = (config.phase1_filters, config.phase2_filters);
        let channels = [
            (config.input_channels, f1),
            (f1, f1),
            (f1, f1),
            (f1, f2),
            (f2, f2),
            (f2, f2),
        ];
        if convs.len() != CONV_LAYERS || norms.len() != CONV_LAYERS {
            return Err(Error::Shape(format!(
                "expected {CONV_LAYERS} conv and batchnorm layers, got {} and {}",
                convs.len(),
                norms.len()
            )));
        }
        for (i, ((conv, norm), &(cin, cout))) in convs.iter().zip(&norms).zip(&channels).enumerate()
        {
            conv.weight
                .ensure_shape(&[cout, cin, 3, 3], &format!("conv{} weight", i + 1))?;
            conv.bias
                .ensure_shape(&[cout], &format!("conv{} bias", i + 1))?;
            for t in [
                &norm.gamma,
                &norm.beta,
                &norm.running_mean,
                &norm.running_var,
            ] {
                t.ensure_shape(&[cout], &format!("bn{}", i + 1))?;
            }
        }
        fc1.weight
            .ensure_shape(&[config.flatten_dim(), config.dense_width], "fc1 weight")?;
        fc1.bias.ensure_shape(&[config.dense_width], "fc1 bias")?;
        fc2.weight
            .ensure_shape(&[config.dense_width, config.num_classes], "fc2 weight")?;
        fc2.bias.ensure_shape(&[config.num_classes], "fc2 bias")?;
        let mut model = Self {
            config,
            convs,
            norms,
            fc1,
            fc2,
            moments: Vec::new(),
            adam_step: 0,
        };
        model.moments = model
            .params()
            .iter()
            .map(|t| Moments::zeros_like(t))
            .collect();
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn convs(&self) -> &[ConvParams] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [ConvParams] {
        &mut self.convs
    }

    pub fn norms(&self) -> &[BatchNormState] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormState] {
        &mut self.norms
    }

    pub fn fc1(&self) -> &DenseParams {
        &self.fc1
    }

    pub fn fc1_mut(&mut self) -> &mut DenseParams {
        &mut self.fc1
    }

    pub fn fc2(&self) -> &DenseParams {
        &self.fc2
    }

    pub fn fc2_mut(&mut self) -> &mut DenseParams {
        &mut self.fc2
    }

    pub fn moments(&self) -> &[Moments] {
        &self.moments
    }

    pub fn adam_step(&self) -> u64 {
        self.adam_step
    }

    pub(crate) fn set_optimizer_state(&mut self, moments: Vec<Moments>, step: u64) -> Result<()> {
        if moments.len() != self.moments.len() {
            return Err(Error::Shape(
                "moment count does not match parameters".into(),
            ));
        }
        for (m, p) in moments.iter().zip(self.params()) {
            m.m.ensure_shape(p.shape(), "adam moment")?;
            m.v.ensure_shape(p.shape(), "adam moment")?;
        }
        self.moments = moments;
        self.adam_step = step;
        Ok(())
    }

    /// Names of the trainable tensors, in canonical order.
    pub fn param_names() -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..=CONV_LAYERS {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
            names.push(format!("bn{i}.gamma"));
            names.push(format!("bn{i}.beta"));
        }
        for fc in ["fc1", "fc2"] {
            names.push(format!("{fc}.weight"));
            names.push(format!("{fc}.bias"));
        }
        names
    }

    /// Trainable tensors in [`Model::param_names`] order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (c, n) in self.convs.iter().zip(&self.norms) {
            out.extend([&c.weight, &c.bias, &n.gamma, &n.beta]);
        }
        out.extend([
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
        ]);
        out
    }

    fn params_and_moments_mut(&mut self) -> (Vec<&mut Tensor>, &mut [Moments]) {
        let mut out = Vec::new();
        for (c, n) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out.push(&mut self.fc1.weight);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weight);
        out.push(&mut self.fc2.bias);
        (out, &mut self.moments)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let cfg = &self.config;
        let s = x.shape();
        if s.len() != 4 || s[1] != cfg.input_channels || s[2] != cfg.input_h || s[3] != cfg.input_w
        {
            return Err(Error::Shape(format!(
                "model expects [N,{},{},{}] input, got {s:?}",
                cfg.input_channels, cfg.input_h, cfg.input_w
            )));
        }
        Ok(())
    }

    fn norm_forward(
        &self,
        i: usize,
        x: &Tensor,
        mode: Mode,
        stats: &mut Vec<BatchStats>,
    ) -> Result<(Tensor, layers::BatchNormCache)> {
        match mode {
            Mode::Train => {
                let (y, cache, s) = layers::batchnorm_forward_train(x, &self.norms[i])?;
                stats.push(s);
                Ok((y, cache))
            }
            Mode::Infer => layers::batchnorm_forward_infer(x, &self.norms[i]),
        }
    }

    fn phase_forward(
        &self,
        first: usize,
        x: &Tensor,
        mode: Mode,
        stats: &mut Vec<BatchStats>,
    ) -> Result<(Tensor, PhaseTrace)> {
        let alpha = self.config.leaky_alpha;
        let mut trace = PhaseTrace {
            convs: Vec::with_capacity(3),
            norms: Vec::with_capacity(3),
            acts: Vec::with_capacity(3),
        };
        let mut h = x.clone();
        let mut shortcut = None;
        for k in 0..3 {
            let conv = &self.convs[first + k];
            let (c, cc) = layers::conv2d_forward(&h, &conv.weight, &conv.bias)?;
            let (mut n, nc) = self.norm_forward(first + k, &c, mode, stats)?;
            trace.convs.push(cc);
            trace.norms.push(nc);
            if k == 2 {
                let skip: &Tensor = shortcut.as_ref().expect("first block output");
                n = layers::residual_add(&n, skip)?;
            }
            let (a, ac) = layers::leaky_relu_forward(&n, alpha)?;
            trace.acts.push(ac);
            if k == 0 {
                shortcut = Some(a.clone());
            }
            h = a;
        }
        Ok((h, trace))
    }

    fn phase_backward(&self, trace: PhaseTrace, dy: &Tensor) -> Result<PhaseGrads> {
        let PhaseTrace {
            mut convs,
            mut norms,
            mut acts,
        } = trace;
        let mut conv_grads = Vec::with_capacity(3);
        let mut norm_grads = Vec::with_capacity(3);
        // post-add activation
        let dsum = layers::leaky_relu_backward(acts.pop().expect("3 activations"), dy)?;
        let (d_main, d_skip) = layers::residual_add_backward(&dsum);
        let g3n = layers::batchnorm_backward(norms.pop().expect("3 norms"), &d_main)?;
        let g3c = layers::conv2d_backward(convs.pop().expect("3 convs"), &g3n.dx)?;
        // block 2
        let da2 = layers::leaky_relu_backward(acts.pop().expect("3 activations"), &g3c.dx)?;
        let g2n = layers::batchnorm_backward(norms.pop().expect("3 norms"), &da2)?;
        let g2c = layers::conv2d_backward(convs.pop().expect("3 convs"), &g2n.dx)?;
        // block 1 receives both the main path and the shortcut
        let da1 = g2c.dx.add(&d_skip)?;
        let d1 = layers::leaky_relu_backward(acts.pop().expect("3 activations"), &da1)?;
        let g1n = layers::batchnorm_backward(norms.pop().expect("3 norms"), &d1)?;
        let g1c = layers::conv2d_backward(convs.pop().expect("3 convs"), &g1n.dx)?;
        let dx = g1c.dx.clone();
        conv_grads.extend([g1c, g2c, g3c]);
        norm_grads.extend([g1n, g2n, g3n]);
        Ok(PhaseGrads {
            dx,
            convs: conv_grads,
            norms: norm_grads,
        })
    }

    /// Runs the network. Training mode needs `rng` for dropout and uses
    /// batch statistics without committing them (see [`Model::commit_batch_stats`]).
    pub fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        mut rng: Option<&mut Prng>,
    ) -> Result<ForwardTrace> {
        self.check_input(x)?;
        if mode == Mode::Train && rng.is_none() {
            return Err(Error::InvalidArgument(
                "training-mode forward needs a PRNG".into(),
            ));
        }
        let cfg = &self.config;
        let mut scratch = Prng::new(0);
        let mut stats = Vec::new();

        let (p1, phase1) = self.phase_forward(0, x, mode, &mut stats)?;
        let (h, pool1) = layers::maxpool2x2_forward(&p1)?;
        let r = rng.as_deref_mut().unwrap_or(&mut scratch);
        let (h, drop1) = layers::dropout_forward(&h, cfg.dropout_conv as f64, mode, r)?;

        let (feature_map, phase2) = self.phase_forward(3, &h, mode, &mut stats)?;
        let (h, pool) = layers::maxpool2x2_forward(&feature_map)?;
        let r = rng.as_deref_mut().unwrap_or(&mut scratch);
        let (h, drop_conv) = layers::dropout_forward(&h, cfg.dropout_conv as f64, mode, r)?;

        let flat_shape = h.shape().to_vec();
        let n = flat_shape[0];
        let flat = h.reshape(&[n, cfg.flatten_dim()])?;
        let (h, fc1) = layers::dense_forward(&flat, &self.fc1.weight, &self.fc1.bias)?;
        let (h, tanh) = layers::tanh_forward(&h);
        let r = rng.unwrap_or(&mut scratch);
        let (h, drop_dense) = layers::dropout_forward(&h, cfg.dropout_dense as f64, mode, r)?;
        let (logits, fc2) = layers::dense_forward(&h, &self.fc2.weight, &self.fc2.bias)?;
        let probs = layers::softmax(&logits)?;

        Ok(ForwardTrace {
            trunk: TrunkTrace {
                phase1,
                pool1,
                drop1,
                phase2,
            },
            head: HeadTrace {
                pool,
                drop_conv,
                flat_shape,
                fc1,
                tanh,
                drop_dense,
                fc2,
            },
            feature_map,
            logits,
            probs,
            batch_stats: stats,
        })
    }

    /// Inference-mode class probabilities `[N, 2]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, Mode::Infer, None)?.probs)
    }

    /// Folds a training forward pass's batch statistics into the running averages.
    pub fn commit_batch_stats(&mut self, trace: &ForwardTrace) {
        for (norm, stats) in self.norms.iter_mut().zip(&trace.batch_stats) {
            norm.update_running(stats);
        }
    }

    /// Backpropagates from the logits to the phase-2 feature map.
    pub fn backward_head(&self, head: HeadTrace, dlogits: &Tensor) -> Result<HeadGrads> {
        let HeadTrace {
            pool,
            drop_conv,
            flat_shape,
            fc1,
            tanh,
            drop_dense,
            fc2,
        } = head;
        let g2 = layers::dense_backward(fc2, dlogits)?;
        let d = layers::dropout_backward(drop_dense, &g2.dx)?;
        let d = layers::tanh_backward(tanh, &d)?;
        let g1 = layers::dense_backward(fc1, &d)?;
        let d = g1.dx.clone().reshape(&flat_shape)?;
        let d = layers::dropout_backward(drop_conv, &d)?;
        let d_feature_map = layers::maxpool2x2_backward(pool, &d)?;
        Ok(HeadGrads {
            d_feature_map,
            fc1: g1,
            fc2: g2,
        })
    }

    /// Full reverse pass from the pre-softmax logit gradient.
    pub fn backward(&self, trace: ForwardTrace, dlogits: &Tensor) -> Result<Gradients> {
        let ForwardTrace { trunk, head, .. } = trace;
        let hg = self.backward_head(head, dlogits)?;
        let g2 = self.phase_backward(trunk.phase2, &hg.d_feature_map)?;
        let d = layers::dropout_backward(trunk.drop1, &g2.dx)?;
        let d = layers::maxpool2x2_backward(trunk.pool1, &d)?;
        let g1 = self.phase_backward(trunk.phase1, &d)?;

        let mut tensors = Vec::with_capacity(4 * CONV_LAYERS + 4);
        for phase in [g1, g2] {
            for (c, n) in phase.convs.into_iter().zip(phase.norms) {
                tensors.extend([c.dw, c.db, n.dgamma, n.dbeta]);
            }
        }
        tensors.extend([hg.fc1.dw, hg.fc1.db, hg.fc2.dw, hg.fc2.db]);
        Ok(Gradients { tensors })
    }

    /// One bias-corrected Adam update over every trainable tensor.
    pub fn apply_gradients(&mut self, grads: &Gradients) -> Result<()> {
        let step = self.adam_step + 1;
        let opt = crate::trainer::AdamConfig::from_model_config(&self.config);
        let (mut params, moments) = self.params_and_moments_mut();
        crate::trainer::adam_step(&mut params, &grads.tensors, moments, step, &opt)?;
        self.adam_step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            input_h: 8,
            input_w: 8,
            phase1_filters: 2,
            phase2_filters: 4,
            dense_width: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn manifest_is_stable() {
        let mut rng = Prng::new(1);
        let m = build_model(&ModelConfig::default(), &mut rng).unwrap();
        let names = Model::param_names();
        assert_eq!(names.len(), 28);
        assert_eq!(m.params().len(), 28);
        assert_eq!(m.moments().len(), 28);
        for (p, mo) in m.params().iter().zip(m.moments()) {
            assert_eq!(p.shape(), mo.m.shape());
            assert_eq!(p.shape(), mo.v.shape());
        }
        assert_eq!(names[0], "conv1.weight");
        assert_eq!(names[27], "fc2.bias");
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&small_cfg(), &mut Prng::new(3)).unwrap();
        let b = build_model(&small_cfg(), &mut Prng::new(3)).unwrap();
        assert_eq!(a, b);
        let c = build_model(&small_cfg(), &mut Prng::new(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ModelConfig {
            input_h: 30,
            ..ModelConfig::default()
        };
        assert!(matches!(
            build_model(&cfg, &mut Prng::new(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forward_contract() {
        let m = build_model(&ModelConfig::default(), &mut Prng::new(5)).unwrap();
        let x = Prng::new(6)
            .uniform_tensor(&[64, 3, 32, 32], 0.0, 1.0)
            .unwrap();
        let p1 = m.predict(&x).unwrap();
        let p2 = m.predict(&x).unwrap();
        assert_eq!(p1.shape(), &[64, 2]);
        assert_eq!(p1, p2);
        for row in p1.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
        let bad = Tensor::zeros(&[1, 3, 16, 16]).unwrap();
        assert!(matches!(m.predict(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn train_forward_requires_rng() {
        let m = build_model(&small_cfg(), &mut Prng::new(5)).unwrap();
        let x = Tensor::zeros(&[2, 3, 8, 8]).unwrap();
        assert!(m.forward(&x, Mode::Train, None).is_err());
        let t = m.forward(&x, Mode::Train, Some(&mut Prng::new(1))).unwrap();
        assert_eq!(t.batch_stats.len(), 6);
    }

    #[test]
    fn gradients_align_with_params() {
        let mut m = build_model(&small_cfg(), &mut Prng::new(7)).unwrap();
        let mut rng = Prng::new(8);
        let x = rng.uniform_tensor(&[3, 3, 8, 8], 0.0, 1.0).unwrap();
        let trace = m.forward(&x, Mode::Train, Some(&mut rng)).unwrap();
        let (_, dlogits) = layers::cross_entropy_loss(&trace.probs, &[0, 1, 0]).unwrap();
        m.commit_batch_stats(&trace);
        let grads = m.backward(trace, &dlogits).unwrap();
        for (g, p) in grads.tensors.iter().zip(m.params()) {
            assert_eq!(g.shape(), p.shape());
            assert!(g.all_finite());
        }
        m.apply_gradients(&grads).unwrap();
        assert_eq!(m.adam_step(), 1);
    }
}
