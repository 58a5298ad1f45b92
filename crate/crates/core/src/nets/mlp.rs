use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::autodiff::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Shape of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Where one dense layer lives inside a flat [`ParamVector`].
///
/// Weights are stored row-major as `[fan_in, fan_out]`, followed by the
/// `fan_out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self, NetError> {
        let spec = Self { layer_sizes, hidden_activation, output_activation };
        spec.validate()?;
        Ok(spec)
    }

    /// `8 -> 64 -> 64 -> 2`, tanh hidden units, linear output.
    pub fn default_generator() -> Self {
        Self {
            layer_sizes: vec![8, 64, 64, 2],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    /// `2 -> 64 -> 64 -> 1`, relu hidden units, raw logit output.
    pub fn default_discriminator() -> Self {
        Self {
            layer_sizes: vec![2, 64, 64, 1],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layer_sizes.len() < 2 {
            return Err(NetError::InvalidSpec(format!(
                "need at least 2 layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(NetError::InvalidSpec(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        if self.hidden_activation == Activation::Identity {
            return Err(NetError::InvalidSpec("hidden activation must be relu or tanh".into()));
        }
        if self.output_activation == Activation::Relu {
            return Err(NetError::InvalidSpec("output activation must be identity or tanh".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let layout = LayerLayout {
                    fan_in,
                    fan_out,
                    weight_offset: offset,
                    bias_offset: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                layout
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Flat parameter set of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self { values: vec![0.0; spec.param_count()] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Hash of the exact bit patterns of every value.
    pub fn bit_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.values.clone())
    }

    pub(crate) fn check_len(&self, spec: &MlpSpec) -> Result<(), NetError> {
        if self.values.len() != spec.param_count() {
            return Err(NetError::LengthMismatch {
                what: "parameter vector",
                expected: spec.param_count(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Gaussian weights with standard deviation `sqrt(2/fan_in)` ahead of relu
/// units and `sqrt(1/fan_in)` otherwise (tanh or linear output); zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; spec.param_count()];
    for (i, layer) in spec.layers().iter().enumerate() {
        let gain = match spec.activation_for(i) {
            Activation::Relu => 2.0,
            Activation::Tanh | Activation::Identity => 1.0,
        };
        let std = (gain / layer.fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite positive std");
        for w in &mut values[layer.weight_offset..layer.bias_offset] {
            *w = normal.sample(&mut rng);
        }
    }
    ParamVector { values }
}

fn apply_activation(tape: &mut Tape, x: Var, act: Activation) -> Result<Var, NetError> {
    Ok(match act {
        Activation::Identity => x,
        Activation::Relu => tape.relu(x)?,
        Activation::Tanh => tape.tanh(x)?,
    })
}

fn check_input(spec: &MlpSpec, tape: &Tape, input: Var) -> Result<(), NetError> {
    let shape = tape.value(input).shape();
    if shape.len() != 2 || shape[1] != spec.input_dim() {
        return Err(NetError::InputShape { expected_cols: spec.input_dim(), got: shape.to_vec() });
    }
    Ok(())
}

/// Records a forward pass of `spec` on `tape`. `params` holds the flat
/// parameter vector and may be a leaf (to differentiate with respect to the
/// weights) or a constant.
pub fn record_forward(spec: &MlpSpec, tape: &mut Tape, params: Var, input: Var) -> Result<Var, NetError> {
    check_input(spec, tape, input)?;
    if tape.value(params).len() != spec.param_count() {
        return Err(NetError::LengthMismatch {
            what: "parameter vector",
            expected: spec.param_count(),
            got: tape.value(params).len(),
        });
    }
    let mut h = input;
    for (i, layer) in spec.layers().iter().enumerate() {
        let w = tape.slice(params, layer.weight_offset, &[layer.fan_in, layer.fan_out])?;
        let b = tape.slice(params, layer.bias_offset, &[layer.fan_out])?;
        let pre = tape.matmul(h, w)?;
        let pre = tape.add_bias(pre, b)?;
        h = apply_activation(tape, pre, spec.activation_for(i))?;
    }
    Ok(h)
}

/// Records `d output / d input` of a single-output network, one row per
/// input row. The result stays differentiable with respect to `params`,
/// which is what the gradient penalty needs.
pub fn record_input_gradient(
    spec: &MlpSpec,
    tape: &mut Tape,
    params: Var,
    input: Var,
) -> Result<Var, NetError> {
    check_input(spec, tape, input)?;
    if spec.output_dim() != 1 || spec.output_activation != Activation::Identity {
        return Err(NetError::InvalidSpec(
            "input gradient needs a single linear output unit".into(),
        ));
    }
    let layers = spec.layers();
    let batch = tape.value(input).rows();

    // Forward, keeping the weights and hidden pre-activations/outputs.
    let mut weights = Vec::with_capacity(layers.len());
    let mut hidden = Vec::with_capacity(layers.len() - 1);
    let mut h = input;
    for (i, layer) in layers.iter().enumerate() {
        let w = tape.slice(params, layer.weight_offset, &[layer.fan_in, layer.fan_out])?;
        weights.push(w);
        if i + 1 == layers.len() {
            break;
        }
        let b = tape.slice(params, layer.bias_offset, &[layer.fan_out])?;
        let pre = tape.matmul(h, w)?;
        let pre = tape.add_bias(pre, b)?;
        let out = apply_activation(tape, pre, spec.hidden_activation)?;
        hidden.push((pre, out));
        h = out;
    }

    // Backward through the layers as ordinary recorded operations.
    let ones = tape.constant(Tensor::filled(&[batch, 1], 1.0));
    let last_t = tape.transpose(*weights.last().expect("at least one layer"))?;
    let mut g = tape.matmul(ones, last_t)?;
    for i in (0..hidden.len()).rev() {
        let (pre, out) = hidden[i];
        let slope = match spec.hidden_activation {
            Activation::Relu => tape.relu_mask(pre)?,
            Activation::Tanh => {
                let sq = tape.square(out)?;
                let neg = tape.scalar_mul(sq, -1.0)?;
                tape.add_scalar(neg, 1.0)?
            }
            Activation::Identity => unreachable!("validated spec"),
        };
        let g_pre = tape.mul(g, slope)?;
        let wt = tape.transpose(weights[i])?;
        g = tape.matmul(g_pre, wt)?;
    }
    Ok(g)
}

/// Forward pass without gradient bookkeeping.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, input: &Tensor) -> Result<Tensor, NetError> {
    params.check_len(spec)?;
    let mut tape = Tape::new();
    let p = tape.constant(params.to_tensor());
    let x = tape.constant(input.clone());
    let out = record_forward(spec, &mut tape, p, x)?;
    Ok(tape.value(out).clone())
}

/// Generator network `z -> G(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    spec: MlpSpec,
}

impl Generator {
    pub fn new(spec: MlpSpec) -> Result<Self, NetError> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, theta: &ParamVector, z: &Tensor) -> Result<Tensor, NetError> {
        mlp_forward(&self.spec, theta, z)
    }

    pub fn record(&self, tape: &mut Tape, theta: Var, z: Var) -> Result<Var, NetError> {
        record_forward(&self.spec, tape, theta, z)
    }
}

/// Discriminator network. `C(x)` is the raw output, `D(x) = sigmoid(C(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    spec: MlpSpec,
}

/// Raw and squashed discriminator outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Discriminator {
    pub fn new(spec: MlpSpec) -> Result<Self, NetError> {
        spec.validate()?;
        if spec.output_activation != Activation::Identity {
            return Err(NetError::InvalidSpec("discriminator output activation must be identity".into()));
        }
        if spec.output_dim() != 1 {
            return Err(NetError::InvalidSpec(format!(
                "discriminator must have one output unit, got {}",
                spec.output_dim()
            )));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, omega: &ParamVector, x: &Tensor) -> Result<DiscriminatorOutput, NetError> {
        let logits = self.logits(omega, x)?;
        let probs = logits.iter().map(|&c| crate::autodiff::sigmoid(c)).collect();
        Ok(DiscriminatorOutput { logits, probs })
    }

    pub fn logits(&self, omega: &ParamVector, x: &Tensor) -> Result<Vec<f64>, NetError> {
        Ok(mlp_forward(&self.spec, omega, x)?.into_data())
    }

    /// Records `C(x)` as a `[batch, 1]` node.
    pub fn record_logits(&self, tape: &mut Tape, omega: Var, x: Var) -> Result<Var, NetError> {
        record_forward(&self.spec, tape, omega, x)
    }

    /// Records `D(x)` as a `[batch, 1]` node.
    pub fn record_probs(&self, tape: &mut Tape, omega: Var, x: Var) -> Result<Var, NetError> {
        let c = self.record_logits(tape, omega, x)?;
        Ok(tape.sigmoid(c)?)
    }

    pub fn record_input_gradient(&self, tape: &mut Tape, omega: Var, x: Var) -> Result<Var, NetError> {
        record_input_gradient(&self.spec, tape, omega, x)
    }
}

/// `G(z)` for a flat generator parameter vector.
pub fn generator_forward(theta: &ParamVector, spec: &MlpSpec, z: &Tensor) -> Result<Tensor, NetError> {
    mlp_forward(spec, theta, z)
}

/// `(C(x), D(x))` for a flat discriminator parameter vector.
pub fn discriminator_forward(
    omega: &ParamVector,
    spec: &MlpSpec,
    x: &Tensor,
) -> Result<DiscriminatorOutput, NetError> {
    Discriminator::new(spec.clone())?.forward(omega, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(sizes: &[usize], hidden: Activation, out: Activation) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), hidden, out).unwrap()
    }

    #[test]
    fn param_count_matches_layout() {
        let spec = MlpSpec::default_generator();
        assert_eq!(spec.param_count(), 8 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        let last = *spec.layers().last().unwrap();
        assert_eq!(last.bias_offset + last.fan_out, spec.param_count());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = MlpSpec::default_discriminator();
        let a = init_params(&spec, 7);
        let b = init_params(&spec, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 8));
        for layer in spec.layers() {
            let biases = &a.as_slice()[layer.bias_offset..layer.bias_offset + layer.fan_out];
            assert!(biases.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relu_weight_variance_tracks_fan_in() {
        // 100 x 100 relu layer: 10k weight draws.
        let spec = tiny(&[100, 100, 1], Activation::Relu, Activation::Identity);
        let p = init_params(&spec, 3);
        let w = &p.as_slice()[..10_000];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 100.0;
        assert!((var - expected).abs() < 0.1 * expected, "var {var} vs {expected}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 1], Activation::Identity, Activation::Identity).is_err());
        let tanh_out = tiny(&[2, 4, 1], Activation::Relu, Activation::Tanh);
        assert!(matches!(Discriminator::new(tanh_out), Err(NetError::InvalidSpec(_))));
    }

    #[test]
    fn zero_generator_outputs_zero() {
        let spec = tiny(&[3, 5, 2], Activation::Tanh, Activation::Identity);
        let z = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.1, 0.2, 0.3]);
        let out = generator_forward(&ParamVector::zeros(&spec), &spec, &z).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generator_rows_are_batch_independent() {
        let spec = MlpSpec::default_generator();
        let theta = init_params(&spec, 11);
        let z = Tensor::matrix(32, 8, (0..256).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect());
        let full = generator_forward(&theta, &spec, &z).unwrap();
        for r in [0, 13, 31] {
            let single = generator_forward(&theta, &spec, &z.slice_rows(r, r + 1)).unwrap();
            assert_eq!(single.row(0), full.row(r));
        }
    }

    #[test]
    fn generator_2_4_2_matches_hand_computation() {
        // W1 = [[1, 0, -1, 0.5], [0, 2, 1, -0.5]], b1 = [0, 0.1, 0, -0.2]
        // W2 = [[1, 0], [0, 1], [1, 1], [-1, 2]], b2 = [0.5, -0.5]
        let spec = tiny(&[2, 4, 2], Activation::Tanh, Activation::Identity);
        let params = ParamVector::from_vec(vec![
            1.0, 0.0, -1.0, 0.5, 0.0, 2.0, 1.0, -0.5, // W1
            0.0, 0.1, 0.0, -0.2, // b1
            1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 2.0, // W2
            0.5, -0.5, // b2
        ]);
        let z = Tensor::matrix(1, 2, vec![0.5, -0.25]);
        // pre1 = [0.5, -0.4, -0.75, 0.175]
        let h = [0.5f64.tanh(), (-0.4f64).tanh(), (-0.75f64).tanh(), 0.175f64.tanh()];
        let expected = [h[0] + h[2] - h[3] + 0.5, h[1] + h[2] + 2.0 * h[3] - 0.5];
        let out = generator_forward(&params, &spec, &z).unwrap();
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-14, "{o} vs {e}");
        }
    }

    #[test]
    fn discriminator_2_4_1_matches_hand_computation() {
        let spec = tiny(&[2, 4, 1], Activation::Relu, Activation::Identity);
        let params = ParamVector::from_vec(vec![
            1.0, -1.0, 0.5, 2.0, 1.0, 1.0, -2.0, 0.0, // W1
            0.0, 0.5, 0.0, -1.0, // b1
            1.0, -1.0, 2.0, 0.5, // W2
            0.25, // b2
        ]);
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        // pre1 = [3, 1.5, -3.5, 1], relu -> [3, 1.5, 0, 1]
        // C = 3 - 1.5 + 0 + 0.5 + 0.25 = 2.25
        let out = discriminator_forward(&params, &spec, &x).unwrap();
        assert_eq!(out.logits, vec![2.25]);
        assert_eq!(out.probs[0], 1.0 / (1.0 + (-2.25f64).exp()));
    }

    #[test]
    fn zero_logit_gives_half() {
        let spec = tiny(&[2, 3, 1], Activation::Relu, Activation::Identity);
        let out = discriminator_forward(&ParamVector::zeros(&spec), &spec, &Tensor::matrix(1, 2, vec![4.0, -1.0]))
            .unwrap();
        assert_eq!(out.probs, vec![0.5]);
    }

    #[test]
    fn input_shape_is_checked() {
        let spec = MlpSpec::default_generator();
        let theta = init_params(&spec, 0);
        let err = generator_forward(&theta, &spec, &Tensor::matrix(1, 3, vec![0.0; 3])).unwrap_err();
        assert!(matches!(err, NetError::InputShape { expected_cols: 8, .. }));
    }

    #[test]
    fn input_gradient_of_linear_discriminator_is_its_weights() {
        // A one-hidden-layer relu net with all-positive activations behaves
        // linearly: C(x) = x W1 W2 + const.
        let spec = tiny(&[2, 2, 1], Activation::Relu, Activation::Identity);
        let params = ParamVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 10.0, 10.0, 3.0, -2.0, 0.0]);
        let mut tape = Tape::new();
        let p = tape.constant(params.to_tensor());
        let x = tape.constant(Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]));
        let g = record_input_gradient(&spec, &mut tape, p, x).unwrap();
        assert_eq!(tape.value(g).data(), &[3.0, -2.0, 3.0, -2.0]);
    }
}
