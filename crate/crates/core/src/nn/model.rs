use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, LossKind};
use super::{NnError, Real};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// One layer of the fixed vocabulary.
///
/// Dense weights are stored row-major `[outputs][inputs]` followed by the
/// bias. Convolutions are single-stride, valid-padding, square-kernel;
/// inputs and outputs are flattened `[channel][row][col]`, weights
/// `[out][in][ky][kx]` followed by one bias per output channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Conv2d {
        channels_in: usize,
        channels_out: usize,
        height: usize,
        width: usize,
        kernel: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec::Dense { inputs, outputs, activation }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { channels_in, height, width, .. } => channels_in * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { channels_out, height, width, kernel, .. } => {
                channels_out * (height + 1 - kernel) * (width + 1 - kernel)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => outputs * inputs + outputs,
            LayerSpec::Conv2d { channels_in, channels_out, kernel, .. } => {
                channels_out * channels_in * kernel * kernel + channels_out
            }
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { channels_in, kernel, .. } => channels_in * kernel * kernel,
        }
    }

    fn weight_count(&self) -> usize {
        self.param_count() - self.bias_count()
    }

    fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { channels_out, .. } => channels_out,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidArchitecture(m.to_string()));
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => {
                if inputs == 0 || outputs == 0 {
                    return bad("dense layer with zero width");
                }
            }
            LayerSpec::Conv2d { channels_in, channels_out, height, width, kernel, .. } => {
                if channels_in == 0 || channels_out == 0 || kernel == 0 {
                    return bad("conv layer with zero channels or kernel");
                }
                if kernel > height || kernel > width {
                    return bad("conv kernel larger than its input");
                }
            }
        }
        Ok(())
    }
}

/// An input with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl LabeledExample {
    /// Validates that every feature lies in `[0, 1]` and the label is below
    /// `num_classes`.
    pub fn new(x: Vec<f64>, y: usize, num_classes: usize) -> Result<Self, NnError> {
        if y >= num_classes {
            return Err(NnError::ClassOutOfRange { class: y, num_classes });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(NnError::InvalidConfig("feature outside [0, 1]".into()));
        }
        Ok(Self { x, y })
    }

    pub fn one_hot(&self, num_classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_classes];
        v[self.y] = 1.0;
        v
    }
}

/// Additive noise on the output of layer `layer` (after its activation).
/// `layer == layers.len() - 1` perturbs the logits.
#[derive(Debug, Clone, Copy)]
pub struct Injection<'a, T> {
    pub layer: usize,
    pub noise: &'a [T],
}

/// Result of one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: T,
    /// Final-layer output the loss was evaluated at (noise included).
    pub logits: Vec<T>,
    pub params: Vec<T>,
    pub input: Vec<T>,
}

/// Feed-forward network with a flat parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real = f64> {
    layers: Vec<LayerSpec>,
    params: Vec<T>,
    num_classes: usize,
    seed: u64,
}

struct Trace<T> {
    /// `acts[l]` is the input of layer `l`; the last entry is the output.
    acts: Vec<Vec<T>>,
    pres: Vec<Vec<T>>,
}

impl<T: Real> Model<T> {
    pub fn from_parts(layers: Vec<LayerSpec>, num_classes: usize, seed: u64, params: Vec<T>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidArchitecture("no layers".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].output_len(),
                    pair[1].input_len()
                )));
            }
        }
        let last = layers.last().expect("non-empty").output_len();
        if last != num_classes || num_classes == 0 {
            return Err(NnError::InvalidArchitecture(format!(
                "final layer emits {last} values for {num_classes} classes"
            )));
        }
        let expected: usize = layers.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(NnError::DimensionMismatch { what: "parameter store", expected, got: params.len() });
        }
        Ok(Self { layers, params, num_classes, seed })
    }

    pub fn zeros(layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self, NnError> {
        let n = layers.iter().map(LayerSpec::param_count).sum();
        Self::from_parts(layers, num_classes, 0, vec![T::zero(); n])
    }

    /// He-normal weights (scaled by `sqrt(2 / fan_in)` for relu layers and
    /// `sqrt(1 / fan_in)` otherwise), zero biases.
    pub fn init(layers: Vec<LayerSpec>, num_classes: usize, seed: u64) -> Result<Self, NnError> {
        let mut model = Self::zeros(layers, num_classes)?;
        model.seed = seed;
        let mut rng = rng::stream(seed, &[rng::tags::INIT]);
        let mut offset = 0;
        for layer in &model.layers {
            let gain = match layer.activation() {
                Activation::Relu => 2.0,
                Activation::Identity => 1.0,
            };
            let scale = (gain / layer.fan_in() as f64).sqrt();
            for w in &mut model.params[offset..offset + layer.weight_count()] {
                let z: f64 = rng.sample(StandardNormal);
                *w = T::of(z * scale);
            }
            offset += layer.param_count();
        }
        Ok(model)
    }

    /// Relu MLP with identity output layer; `widths = [inputs, hidden.., classes]`.
    pub fn mlp(widths: &[usize], seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::InvalidArchitecture("an MLP needs input and output widths".into()));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                LayerSpec::dense(w[0], w[1], act)
            })
            .collect();
        Self::init(layers, widths[n], seed)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same architecture, parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            layers: self.layers.clone(),
            params: self.params.iter().map(|&p| U::of(p.as_f64())).collect(),
            num_classes: self.num_classes,
            seed: self.seed,
        }
    }

    fn check_input(&self, x: &[T]) -> Result<(), NnError> {
        if x.len() != self.input_len() {
            return Err(NnError::DimensionMismatch { what: "input", expected: self.input_len(), got: x.len() });
        }
        Ok(())
    }

    fn check_injection(&self, injection: &Option<Injection<'_, T>>) -> Result<(), NnError> {
        if let Some(inj) = injection {
            let layer = self
                .layers
                .get(inj.layer)
                .ok_or_else(|| NnError::InvalidArchitecture(format!("no layer {} to inject noise at", inj.layer)))?;
            if inj.noise.len() != layer.output_len() {
                return Err(NnError::DimensionMismatch {
                    what: "injected noise",
                    expected: layer.output_len(),
                    got: inj.noise.len(),
                });
            }
        }
        Ok(())
    }

    /// Logits `f(x)`.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        self.forward_injected(x, None)
    }

    /// Logits for an `f64` input regardless of the model precision.
    pub fn forward_f64(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let xt: Vec<T> = x.iter().map(|&v| T::of(v)).collect();
        Ok(self.forward(&xt)?.into_iter().map(Real::as_f64).collect())
    }

    pub fn predict(&self, x: &[T]) -> Result<usize, NnError> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn predict_f64(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.forward_f64(x)?))
    }

    pub fn forward_injected(&self, x: &[T], injection: Option<Injection<'_, T>>) -> Result<Vec<T>, NnError> {
        self.check_input(x)?;
        self.check_injection(&injection)?;
        let mut current = x.to_vec();
        let mut offset = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let p = &self.params[offset..offset + layer.param_count()];
            offset += layer.param_count();
            let mut z = layer_forward(layer, p, &current);
            activate(layer.activation(), &mut z);
            if let Some(inj) = injection.filter(|inj| inj.layer == l) {
                for (v, &e) in z.iter_mut().zip(inj.noise) {
                    *v = *v + e;
                }
            }
            current = z;
        }
        Ok(current)
    }

    fn trace(&self, x: &[T], injection: Option<Injection<'_, T>>) -> Trace<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let p = &self.params[offset..offset + layer.param_count()];
            offset += layer.param_count();
            let z = layer_forward(layer, p, acts.last().expect("input pushed"));
            let mut a = z.clone();
            activate(layer.activation(), &mut a);
            if let Some(inj) = injection.filter(|inj| inj.layer == l) {
                for (v, &e) in a.iter_mut().zip(inj.noise) {
                    *v = *v + e;
                }
            }
            pres.push(z);
            acts.push(a);
        }
        Trace { acts, pres }
    }

    /// Reverse-mode gradients of `loss` evaluated at `f(x) + logit_noise`,
    /// the noise being a constant additive term.
    pub fn backward(
        &self,
        x: &[T],
        y: usize,
        loss: LossKind,
        logit_noise: Option<&[T]>,
    ) -> Result<Gradients<T>, NnError> {
        let injection = logit_noise.map(|noise| Injection { layer: self.layers.len() - 1, noise });
        let mut params = vec![T::zero(); self.params.len()];
        let (loss, logits, input) = self.backward_with(x, injection, Some(&mut params), true, |z| loss.eval(z, y))?;
        Ok(Gradients { loss, logits, params, input: input.expect("input gradient requested") })
    }

    /// General backward pass.
    ///
    /// `loss_fn` maps the final output to `(loss, d loss / d output)`.
    /// Parameter gradients are *accumulated* into `param_grads` when given;
    /// the input gradient is returned only if `need_input`.
    #[allow(clippy::type_complexity)]
    pub fn backward_with<F>(
        &self,
        x: &[T],
        injection: Option<Injection<'_, T>>,
        param_grads: Option<&mut [T]>,
        need_input: bool,
        loss_fn: F,
    ) -> Result<(T, Vec<T>, Option<Vec<T>>), NnError>
    where
        F: FnOnce(&[T]) -> Result<(T, Vec<T>), NnError>,
    {
        self.check_input(x)?;
        self.check_injection(&injection)?;
        if let Some(g) = param_grads.as_ref() {
            if g.len() != self.params.len() {
                return Err(NnError::DimensionMismatch {
                    what: "parameter gradient buffer",
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
        }
        let trace = self.trace(x, injection);
        if trace.acts.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(NnError::NonFinite("activations"));
        }
        let output = trace.acts.last().expect("output").clone();
        let (loss, dout) = loss_fn(&output)?;
        if dout.len() != output.len() {
            return Err(NnError::DimensionMismatch { what: "loss gradient", expected: output.len(), got: dout.len() });
        }

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.param_count();
        }

        let mut param_grads = param_grads;
        let mut delta = dout;
        let mut input_grad = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation() == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&trace.pres[l]) {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let p = &self.params[offsets[l]..offsets[l] + layer.param_count()];
            if let Some(g) = param_grads.as_deref_mut() {
                let g = &mut g[offsets[l]..offsets[l] + layer.param_count()];
                layer_param_grad(layer, &trace.acts[l], &delta, g);
            }
            if l > 0 {
                delta = layer_input_grad(layer, p, &delta);
            } else if need_input {
                input_grad = Some(layer_input_grad(layer, p, &delta));
            }
        }
        Ok((loss, output, input_grad))
    }
}

fn activate<T: Real>(act: Activation, z: &mut [T]) {
    if act == Activation::Relu {
        for v in z {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

fn layer_forward<T: Real>(layer: &LayerSpec, p: &[T], a: &[T]) -> Vec<T> {
    match *layer {
        LayerSpec::Dense { inputs, outputs, .. } => {
            let (w, b) = p.split_at(inputs * outputs);
            (0..outputs).map(|o| b[o] + dot(&w[o * inputs..(o + 1) * inputs], a)).collect()
        }
        LayerSpec::Conv2d { channels_in, channels_out, height, width, kernel, .. } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let (w, b) = p.split_at(channels_out * channels_in * kernel * kernel);
            let mut out = vec![T::zero(); channels_out * oh * ow];
            for co in 0..channels_out {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut s = b[co];
                        for ci in 0..channels_in {
                            for u in 0..kernel {
                                let wrow = &w[((co * channels_in + ci) * kernel + u) * kernel..][..kernel];
                                let arow = &a[(ci * height + i + u) * width + j..][..kernel];
                                s = s + dot(wrow, arow);
                            }
                        }
                        out[(co * oh + i) * ow + j] = s;
                    }
                }
            }
            out
        }
    }
}

fn layer_param_grad<T: Real>(layer: &LayerSpec, a: &[T], delta: &[T], g: &mut [T]) {
    match *layer {
        LayerSpec::Dense { inputs, outputs, .. } => {
            let (gw, gb) = g.split_at_mut(inputs * outputs);
            for o in 0..outputs {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                axpy(d, a, &mut gw[o * inputs..(o + 1) * inputs]);
                gb[o] = gb[o] + d;
            }
        }
        LayerSpec::Conv2d { channels_in, channels_out, height, width, kernel, .. } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let (gw, gb) = g.split_at_mut(channels_out * channels_in * kernel * kernel);
            for co in 0..channels_out {
                for i in 0..oh {
                    for j in 0..ow {
                        let d = delta[(co * oh + i) * ow + j];
                        if d == T::zero() {
                            continue;
                        }
                        gb[co] = gb[co] + d;
                        for ci in 0..channels_in {
                            for u in 0..kernel {
                                let grow = &mut gw[((co * channels_in + ci) * kernel + u) * kernel..][..kernel];
                                let arow = &a[(ci * height + i + u) * width + j..][..kernel];
                                axpy(d, arow, grow);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn layer_input_grad<T: Real>(layer: &LayerSpec, p: &[T], delta: &[T]) -> Vec<T> {
    match *layer {
        LayerSpec::Dense { inputs, outputs, .. } => {
            let mut ga = vec![T::zero(); inputs];
            for o in 0..outputs {
                let d = delta[o];
                if d != T::zero() {
                    axpy(d, &p[o * inputs..(o + 1) * inputs], &mut ga);
                }
            }
            ga
        }
        LayerSpec::Conv2d { channels_in, channels_out, height, width, kernel, .. } => {
            let (oh, ow) = (height + 1 - kernel, width + 1 - kernel);
            let w = &p[..channels_out * channels_in * kernel * kernel];
            let mut ga = vec![T::zero(); channels_in * height * width];
            for co in 0..channels_out {
                for i in 0..oh {
                    for j in 0..ow {
                        let d = delta[(co * oh + i) * ow + j];
                        if d == T::zero() {
                            continue;
                        }
                        for ci in 0..channels_in {
                            for u in 0..kernel {
                                let wrow = &w[((co * channels_in + ci) * kernel + u) * kernel..][..kernel];
                                let arow = &mut ga[(ci * height + i + u) * width + j..][..kernel];
                                axpy(d, wrow, arow);
                            }
                        }
                    }
                }
            }
            ga
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cross_entropy, softmax};
    use approx::assert_abs_diff_eq;

    fn identity_net() -> Model {
        let layers = vec![LayerSpec::dense(2, 2, Activation::Identity)];
        Model::from_parts(layers, 2, 0, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn identity_forward() {
        assert_eq!(identity_net().forward(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let m: Model = Model::zeros(
            vec![LayerSpec::dense(3, 4, Activation::Relu), LayerSpec::dense(4, 2, Activation::Identity)],
            2,
        )
        .unwrap();
        assert_eq!(m.forward(&[0.1, 0.5, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn two_layer_relu_by_hand() {
        // W1 = [[1, -1], [2, 0.5], [-1, 1]], b1 = [0.1, -0.2, 0.3]
        // W2 = [[1, 2, -1], [0.5, -1, 1]], b2 = [0, 0.25]
        let layers = vec![LayerSpec::dense(2, 3, Activation::Relu), LayerSpec::dense(3, 2, Activation::Identity)];
        let params = vec![1.0, -1.0, 2.0, 0.5, -1.0, 1.0, 0.1, -0.2, 0.3, 1.0, 2.0, -1.0, 0.5, -1.0, 1.0, 0.0, 0.25];
        let m = Model::from_parts(layers, 2, 0, params).unwrap();
        // hidden pre = [1.1, 1.8, -0.7] -> relu [1.1, 1.8, 0]
        // out = [1.1 + 3.6, 0.55 - 1.8 + 0.25] = [4.7, -1.0]
        let z = m.forward(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(z[0], 4.7, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = identity_net();
        assert!(matches!(m.forward(&[1.0]), Err(NnError::DimensionMismatch { .. })));
        let chain = vec![LayerSpec::dense(2, 3, Activation::Relu), LayerSpec::dense(4, 2, Activation::Identity)];
        assert!(Model::<f64>::zeros(chain, 2).is_err());
        let wrong_classes = vec![LayerSpec::dense(2, 3, Activation::Identity)];
        assert!(Model::<f64>::zeros(wrong_classes, 2).is_err());
        assert!(m.backward(&[0.1, 0.2], 0, LossKind::Xent, Some(&[0.0])).is_err());
    }

    #[test]
    fn param_count_matches_layers() {
        let m: Model = Model::mlp(&[784, 128, 64, 10], 1).unwrap();
        assert_eq!(m.params().len(), 784 * 128 + 128 + 128 * 64 + 64 + 64 * 10 + 10);
        let conv = LayerSpec::Conv2d {
            channels_in: 1,
            channels_out: 2,
            height: 5,
            width: 5,
            kernel: 3,
            activation: Activation::Relu,
        };
        assert_eq!(conv.output_len(), 2 * 3 * 3);
        assert_eq!(conv.param_count(), 2 * 9 + 2);
    }

    #[test]
    fn identity_backward_is_softmax_minus_onehot() {
        let m = identity_net();
        let x = [0.3, 0.7];
        let g = m.backward(&x, 1, LossKind::Xent, None).unwrap();
        let s = softmax(&x).unwrap();
        assert_abs_diff_eq!(g.input[0], s[0], epsilon = 1e-12);
        assert_abs_diff_eq!(g.input[1], s[1] - 1.0, epsilon = 1e-12);
        let (l, _) = cross_entropy(&x, 1).unwrap();
        assert_abs_diff_eq!(g.loss, l, epsilon = 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_input_gradient() {
        let mut m: Model = Model::mlp(&[3, 5, 2], 9).unwrap();
        let n = m.params().len();
        // zero the final weights and bias
        for p in &mut m.params_mut()[n - (5 * 2 + 2)..] {
            *p = 0.0;
        }
        let g = m.backward(&[0.2, 0.4, 0.9], 0, LossKind::Xent, None).unwrap();
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logit_noise_shifts_the_loss_point() {
        let m = identity_net();
        let noise = [0.5, -0.5];
        let g = m.backward(&[0.3, 0.7], 0, LossKind::Xent, Some(&noise)).unwrap();
        assert_abs_diff_eq!(g.logits[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(g.logits[1], 0.2, epsilon = 1e-15);
        let (l, _) = cross_entropy(&[0.8, 0.2], 0).unwrap();
        assert_abs_diff_eq!(g.loss, l, epsilon = 1e-12);
    }

    #[test]
    fn conv_forward_by_hand() {
        // 1 channel 3x3 input, 2x2 kernel of ones, bias 0.5 -> 2x2 sums of windows + 0.5
        let layers = vec![
            LayerSpec::Conv2d {
                channels_in: 1,
                channels_out: 1,
                height: 3,
                width: 3,
                kernel: 2,
                activation: Activation::Identity,
            },
            LayerSpec::dense(4, 2, Activation::Identity),
        ];
        let mut params = vec![1.0, 1.0, 1.0, 1.0, 0.5];
        params.extend([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let m = Model::from_parts(layers, 2, 0, params).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let z = m.forward(&x).unwrap();
        assert_abs_diff_eq!(z[0], 0.1 + 0.2 + 0.4 + 0.5 + 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], 0.5 + 0.6 + 0.8 + 0.9 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cast_preserves_predictions() {
        let m: Model = Model::mlp(&[4, 8, 3], 5).unwrap();
        let m32: Model<f32> = m.cast();
        let x = [0.1, 0.9, 0.4, 0.3];
        assert_eq!(m.predict(&x).unwrap(), m32.predict_f64(&x).unwrap());
    }
}
