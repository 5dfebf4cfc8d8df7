use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv3d_same, conv3d_same_backward_input, conv3d_same_backward_params, ConvLayer};
use super::loss::{is_soft_target, log_loss_unchecked};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::volume::{Dims, Grid};

pub const KERNEL: [usize; 3] = [3, 3, 3];
/// Image and object-mask channels.
pub const INPUT_CHANNELS: usize = 2;

/// Architecture descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub fov: Dims,
    pub channels: usize,
    pub modules: usize,
}

impl ModelSpec {
    /// Fewest 3×3×3 layers whose receptive field at the central output voxel
    /// spans the whole FoV.
    pub fn min_layers(fov: Dims) -> usize {
        fov.iter().map(|&f| (f - 1).div_ceil(2)).max().unwrap_or(0)
    }

    /// Module count used when none is configured: the smallest `M` with
    /// `2 + 2M` layers strictly exceeding [`min_layers`](Self::min_layers),
    /// which gives 8 modules (18 layers) for a 33×33×17 FoV.
    pub fn default_modules(fov: Dims) -> usize {
        (Self::min_layers(fov) + 1).saturating_sub(2).div_ceil(2)
    }

    pub fn with_default_depth(fov: Dims, channels: usize) -> Self {
        ModelSpec {
            fov,
            channels,
            modules: Self::default_modules(fov),
        }
    }

    pub fn layer_count(&self) -> usize {
        2 + 2 * self.modules
    }

    pub fn validate(&self) -> Result<()> {
        if self.fov.iter().any(|&f| f == 0 || f % 2 == 0) {
            return Err(Error::Architecture(format!(
                "fov components must be odd and positive, got {:?}",
                self.fov
            )));
        }
        if self.channels == 0 {
            return Err(Error::Architecture("channel count must be positive".into()));
        }
        let need = Self::min_layers(self.fov);
        if self.layer_count() < need {
            return Err(Error::Architecture(format!(
                "{} conv layers cannot cover fov {:?}; need at least {need}",
                self.layer_count(),
                self.fov
            )));
        }
        Ok(())
    }
}

/// Two convolutions with full pre-activation and an identity skip:
/// `x + conv_b(relu(conv_a(relu(x))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualModule<T> {
    pub conv_a: ConvLayer<T>,
    pub conv_b: ConvLayer<T>,
}

/// The mask predictor: stem conv (2 → C), residual modules (C → C), ReLU,
/// head conv (C → 1), logistic.
#[derive(Clone, Debug, PartialEq)]
pub struct FfnModel<T> {
    spec: ModelSpec,
    pub stem: ConvLayer<T>,
    pub modules: Vec<ResidualModule<T>>,
    pub head: ConvLayer<T>,
}

/// Gradients for every layer of a model, in [`FfnModel::layers`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> GradientSet<T> {
    pub fn zeros_like(model: &FfnModel<T>) -> Self {
        GradientSet {
            layers: model
                .layers()
                .into_iter()
                .map(|l| ConvLayer::zeros(l.kernel(), l.c_in(), l.c_out()).expect("valid layer shape"))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights().iter().chain(l.bias()).all(|v| v.is_finite()))
    }

    /// Adds `other` element-wise.
    pub fn accumulate(&mut self, other: &GradientSet<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch("gradient sets differ in layer count".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights().len() != b.weights().len() || a.bias().len() != b.bias().len() {
                return Err(Error::ShapeMismatch("gradient layer shapes differ".into()));
            }
            for (x, &y) in a.weights_mut().iter_mut().zip(b.weights()) {
                *x += y;
            }
            for (x, &y) in a.bias_mut().iter_mut().zip(b.bias()) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Flattened values in parameter order.
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights().iter().chain(l.bias()).copied())
            .collect()
    }
}

/// Intermediate activations kept for the backward pass.
struct Trace<T> {
    /// Input of each residual module, plus the input of the head last.
    hidden: Vec<Tensor<T>>,
    /// Pre-activation output of each module's first conv.
    mid: Vec<Tensor<T>>,
    logits: Tensor<T>,
}

fn check_finite<T: Real>(t: &Tensor<T>, layer: impl FnOnce() -> String) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer() })
    }
}

fn logistic<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Zeroes `grad` wherever `pre <= 0` (ReLU derivative).
fn relu_mask<T: Real>(grad: &mut Tensor<T>, pre: &Tensor<T>) {
    for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

impl<T: Real> FfnModel<T> {
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        Ok(FfnModel {
            spec,
            stem: ConvLayer::zeros(KERNEL, INPUT_CHANNELS, c)?,
            modules: (0..spec.modules)
                .map(|_| {
                    Ok(ResidualModule {
                        conv_a: ConvLayer::zeros(KERNEL, c, c)?,
                        conv_b: ConvLayer::zeros(KERNEL, c, c)?,
                    })
                })
                .collect::<Result<_>>()?,
            head: ConvLayer::zeros(KERNEL, c, 1)?,
        })
    }

    /// Seeded initialization: uniform kernels scaled by `1/sqrt(fan_in)`,
    /// zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = spec.channels;
        let stem = ConvLayer::init_uniform(KERNEL, INPUT_CHANNELS, c, &mut rng)?;
        let mut modules = Vec::with_capacity(spec.modules);
        for _ in 0..spec.modules {
            let conv_a = ConvLayer::init_uniform(KERNEL, c, c, &mut rng)?;
            let conv_b = ConvLayer::init_uniform(KERNEL, c, c, &mut rng)?;
            modules.push(ResidualModule { conv_a, conv_b });
        }
        let head = ConvLayer::init_uniform(KERNEL, c, 1, &mut rng)?;
        Ok(FfnModel {
            spec,
            stem,
            modules,
            head,
        })
    }

    pub(crate) fn from_layers(spec: ModelSpec, mut layers: Vec<ConvLayer<T>>) -> Result<Self> {
        let template = Self::zeros(spec)?;
        let expected = template.layers();
        if layers.len() != expected.len()
            || layers.iter().zip(&expected).any(|(a, b)| {
                a.kernel() != b.kernel() || a.c_in() != b.c_in() || a.c_out() != b.c_out()
            })
        {
            return Err(Error::Architecture("layer shapes do not match the descriptor".into()));
        }
        let head = layers.pop().expect("at least two layers");
        let mut rest = layers.into_iter();
        let stem = rest.next().expect("at least two layers");
        let mut modules = Vec::new();
        while let (Some(conv_a), Some(conv_b)) = (rest.next(), rest.next()) {
            modules.push(ResidualModule { conv_a, conv_b });
        }
        Ok(FfnModel {
            spec,
            stem,
            modules,
            head,
        })
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn fov(&self) -> Dims {
        self.spec.fov
    }

    /// All conv layers: stem, then `conv_a`/`conv_b` of each module, then head.
    pub fn layers(&self) -> Vec<&ConvLayer<T>> {
        let mut v = vec![&self.stem];
        for m in &self.modules {
            v.push(&m.conv_a);
            v.push(&m.conv_b);
        }
        v.push(&self.head);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>> {
        let mut v = vec![&mut self.stem];
        for m in &mut self.modules {
            v.push(&mut m.conv_a);
            v.push(&mut m.conv_b);
        }
        v.push(&mut self.head);
        v
    }

    pub fn layer_names(&self) -> Vec<String> {
        let mut v = vec!["stem".to_string()];
        for i in 0..self.modules.len() {
            v.push(format!("module{i}.conv_a"));
            v.push(format!("module{i}.conv_b"));
        }
        v.push("head".to_string());
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn convert<U: Real>(&self) -> FfnModel<U> {
        let conv = |l: &ConvLayer<T>| {
            ConvLayer::from_parts(
                l.kernel(),
                l.c_in(),
                l.c_out(),
                l.weights().iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
                l.bias().iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
            )
            .expect("same shape")
        };
        FfnModel {
            spec: self.spec,
            stem: conv(&self.stem),
            modules: self
                .modules
                .iter()
                .map(|m| ResidualModule {
                    conv_a: conv(&m.conv_a),
                    conv_b: conv(&m.conv_b),
                })
                .collect(),
            head: conv(&self.head),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.dims() != self.spec.fov {
            return Err(Error::DimsMismatch {
                expected: self.spec.fov,
                actual: input.dims(),
            });
        }
        if input.channels() != INPUT_CHANNELS {
            return Err(Error::ChannelMismatch {
                expected: INPUT_CHANNELS,
                actual: input.channels(),
            });
        }
        Ok(())
    }

    fn trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut h = conv3d_same(input, &self.stem, false)?;
        check_finite(&h, || "stem".into())?;
        let mut hidden = Vec::with_capacity(self.modules.len() + 1);
        let mut mid = Vec::with_capacity(self.modules.len());
        for (i, m) in self.modules.iter().enumerate() {
            let u = conv3d_same(&h, &m.conv_a, true)?;
            check_finite(&u, || format!("module{i}.conv_a"))?;
            let mut next = conv3d_same(&u, &m.conv_b, true)?;
            check_finite(&next, || format!("module{i}.conv_b"))?;
            for (n, &x) in next.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *n += x;
            }
            hidden.push(std::mem::replace(&mut h, next));
            mid.push(u);
        }
        let logits = conv3d_same(&h, &self.head, true)?;
        check_finite(&logits, || "head".into())?;
        hidden.push(h);
        Ok(Trace { hidden, mid, logits })
    }

    /// Batched forward pass on a 2-channel (image, mask) tensor; returns
    /// per-voxel probabilities as a 1-channel tensor.
    pub fn forward_tensor(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut out = self.trace(input)?.logits;
        for v in out.as_mut_slice() {
            *v = logistic(*v);
        }
        Ok(out)
    }

    /// Loss and parameter gradients for a batch. `target` is a 1-channel
    /// tensor of soft targets; the loss is summed over the batch.
    pub fn backward(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(T, GradientSet<T>)> {
        self.forward_backward(input, target).map(|(loss, grads, _)| (loss, grads))
    }

    /// [`backward`](Self::backward) that also returns the forward pass's
    /// probabilities.
    pub fn forward_backward(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(T, GradientSet<T>, Tensor<T>)> {
        let trace = self.trace(input)?;
        if target.channels() != 1 || target.dims() != input.dims() || target.batch() != input.batch() {
            return Err(Error::ShapeMismatch(format!(
                "target must be {} x {:?} x 1, got {} x {:?} x {}",
                input.batch(),
                input.dims(),
                target.batch(),
                target.dims(),
                target.channels()
            )));
        }
        if !target.as_slice().iter().all(|&m| is_soft_target(m)) {
            return Err(Error::InvalidValue("targets must be 0.05 or 0.95".into()));
        }
        let pred: Vec<T> = trace.logits.as_slice().iter().map(|&z| logistic(z)).collect();
        let (loss, _) = log_loss_unchecked(&pred, target.as_slice());

        // d loss / d logit = v - m; the prediction clamp guards only the loss value.
        let mut grad = Tensor::from_vec(
            input.batch(),
            input.dims(),
            1,
            pred.iter().zip(target.as_slice()).map(|(&v, &m)| v - m).collect(),
        )?;
        let mut grads = GradientSet::zeros_like(self);
        let n = grads.layers.len();

        let top = &trace.hidden[self.modules.len()];
        conv3d_same_backward_params(top, &grad, true, &mut grads.layers[n - 1]);
        grad = conv3d_same_backward_input(&grad, &self.head);
        relu_mask(&mut grad, top);

        for (i, m) in self.modules.iter().enumerate().rev() {
            let h = &trace.hidden[i];
            let u = &trace.mid[i];
            conv3d_same_backward_params(u, &grad, true, &mut grads.layers[2 + 2 * i]);
            let mut du = conv3d_same_backward_input(&grad, &m.conv_b);
            relu_mask(&mut du, u);
            conv3d_same_backward_params(h, &du, true, &mut grads.layers[1 + 2 * i]);
            let mut dh = conv3d_same_backward_input(&du, &m.conv_a);
            relu_mask(&mut dh, h);
            for (g, &d) in grad.as_mut_slice().iter_mut().zip(dh.as_slice()) {
                *g += d;
            }
            check_finite(&grad, || format!("module{i} (backward)"))?;
        }
        conv3d_same_backward_params(input, &grad, false, &mut grads.layers[0]);
        if !grads.all_finite() {
            return Err(Error::NonFinite {
                layer: "gradients".into(),
            });
        }
        let prediction = Tensor::from_vec(input.batch(), input.dims(), 1, pred)?;
        Ok((loss, grads, prediction))
    }

    /// Plain SGD: every parameter decremented by `lr * gradient`.
    pub fn sgd_step(&mut self, grads: &GradientSet<T>, lr: T) -> Result<()> {
        let layers = self.layers_mut();
        if layers.len() != grads.layers.len()
            || layers.iter().zip(&grads.layers).any(|(l, g)| {
                l.weights().len() != g.weights().len() || l.bias().len() != g.bias().len()
            })
        {
            return Err(Error::ShapeMismatch("gradient set does not match the model".into()));
        }
        for (layer, g) in layers.into_iter().zip(&grads.layers) {
            for (w, &d) in layer.weights_mut().iter_mut().zip(g.weights()) {
                *w -= lr * d;
            }
            for (b, &d) in layer.bias_mut().iter_mut().zip(g.bias()) {
                *b -= lr * d;
            }
        }
        Ok(())
    }

    /// Flattened parameters in [`layers`](Self::layers) order, weights
    /// before biases within a layer.
    pub fn flatten(&self) -> Vec<T> {
        self.layers()
            .iter()
            .flat_map(|l| l.weights().iter().chain(l.bias()).copied())
            .collect()
    }

    /// Mutable access to the `index`-th flattened parameter.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for l in self.layers_mut() {
            let nw = l.weights().len();
            if index < nw {
                return Some(&mut l.weights_mut()[index]);
            }
            index -= nw;
            let nb = l.bias().len();
            if index < nb {
                return Some(&mut l.bias_mut()[index]);
            }
            index -= nb;
        }
        None
    }
}

impl FfnModel<f32> {
    /// Single-sample forward pass on FoV-sized image and mask patches.
    pub fn forward(&self, image_patch: &Grid<f32>, mask_patch: &Grid<f32>) -> Result<Grid<f32>> {
        for g in [image_patch, mask_patch] {
            if g.dims() != self.spec.fov {
                return Err(Error::DimsMismatch {
                    expected: self.spec.fov,
                    actual: g.dims(),
                });
            }
        }
        let input = Tensor::from_grids(&[vec![image_patch, mask_patch]])?;
        Ok(self.forward_tensor(&input)?.channel_grid(0, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            fov: [9, 9, 5],
            channels: 4,
            modules: 2,
        }
    }

    #[test]
    fn depth_rule() {
        assert_eq!(ModelSpec::min_layers([33, 33, 17]), 16);
        assert_eq!(ModelSpec::default_modules([33, 33, 17]), 8);
        assert_eq!(ModelSpec::with_default_depth([33, 33, 17], 32).layer_count(), 18);
        assert!(ModelSpec { fov: [33, 33, 17], channels: 8, modules: 6 }.validate().is_err());
        assert!(ModelSpec { fov: [17, 17, 9], channels: 8, modules: 3 }.validate().is_ok());
        assert!(ModelSpec { fov: [8, 9, 9], channels: 8, modules: 3 }.validate().is_err());
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = FfnModel::<f32>::zeros(tiny_spec()).unwrap();
        let img = Grid::filled([9, 9, 5], 0.7);
        let mask = Grid::filled([9, 9, 5], 0.05);
        let out = m.forward(&img, &mask).unwrap();
        assert_eq!(out.dims(), [9, 9, 5]);
        assert!(out.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn paper_fov_output_shape() {
        let spec = ModelSpec { fov: [33, 33, 17], channels: 2, modules: 8 };
        let m = FfnModel::<f32>::init(spec, 1).unwrap();
        let out = m.forward(&Grid::filled([33, 33, 17], 0.5), &Grid::filled([33, 33, 17], 0.05)).unwrap();
        assert_eq!(out.dims(), [33, 33, 17]);
        assert!(out.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn forward_dims_mismatch() {
        let m = FfnModel::<f32>::zeros(tiny_spec()).unwrap();
        let bad = Grid::filled([9, 9, 3], 0.5);
        assert!(matches!(m.forward(&bad, &bad), Err(Error::DimsMismatch { .. })));
    }

    #[test]
    fn zero_residual_module_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = FfnModel::<f64>::init(tiny_spec(), 3).unwrap();
        let input = Tensor::from_vec(
            1,
            [9, 9, 5],
            2,
            (0..405 * 2).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let before = m.forward_tensor(&input).unwrap();
        // Zeroing module 1 entirely must equal removing it.
        let module = &mut m.modules[1];
        for l in [&mut module.conv_a, &mut module.conv_b] {
            l.weights_mut().fill(0.0);
            l.bias_mut().fill(0.0);
        }
        let zeroed = m.forward_tensor(&input).unwrap();
        let mut removed = m.clone();
        removed.modules.pop();
        removed.spec.modules = 1;
        assert_eq!(zeroed, removed.forward_tensor(&input).unwrap());
        assert_ne!(before, zeroed);
    }

    #[test]
    fn zero_model_stem_bias_gradient_symmetric() {
        let m = FfnModel::<f64>::zeros(tiny_spec()).unwrap();
        let input = Tensor::from_vec(1, [9, 9, 5], 2, vec![0.5; 810]).unwrap();
        let target = Tensor::from_vec(1, [9, 9, 5], 1, (0..405).map(|i| if i % 2 == 0 { 0.95 } else { 0.05 }).collect()).unwrap();
        let (loss, g) = m.backward(&input, &target).unwrap();
        assert!((loss - 405.0 * std::f64::consts::LN_2).abs() < 1e-9);
        let stem_bias = g.layers[0].bias();
        assert!(stem_bias.iter().all(|v| v.is_finite()));
        assert!(stem_bias.windows(2).all(|w| w[0] == w[1]));
        // Only the head bias sees a gradient: sum(v - m) = 405*0.5 - (203*0.95 + 202*0.05).
        let expected = 405.0 * 0.5 - (203.0 * 0.95 + 202.0 * 0.05);
        assert!((g.layers.last().unwrap().bias()[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn backward_loss_equals_forward_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = FfnModel::<f32>::init(tiny_spec(), 7).unwrap();
        let img = Grid::from_fn([9, 9, 5], |_| rng.gen_range(0.0..1.0));
        let mask = Grid::from_fn([9, 9, 5], |[x, y, z]| if (x, y, z) == (4, 4, 2) { 0.95 } else { 0.05 });
        let target_grid = Grid::from_fn([9, 9, 5], |[x, _, _]| if x < 5 { 0.95 } else { 0.05 });
        let pred = m.forward(&img, &mask).unwrap();
        let (l1, _) = super::super::loss::log_loss(pred.as_slice(), target_grid.as_slice()).unwrap();
        let input = Tensor::from_grids(&[vec![&img, &mask]]).unwrap();
        let target = Tensor::from_grids(&[vec![&target_grid]]).unwrap();
        let (l2, _) = m.backward(&input, &target).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn sgd_arithmetic() {
        let spec = tiny_spec();
        let mut m = FfnModel::<f32>::zeros(spec).unwrap();
        *m.param_mut(0).unwrap() = 1.0;
        let mut g = GradientSet::zeros_like(&m);
        g.layers[0].weights_mut()[0] = 2.0;
        m.sgd_step(&g, 0.001).unwrap();
        assert_eq!(m.flatten()[0], 0.998);

        let before = m.clone();
        m.sgd_step(&GradientSet::zeros_like(&m), 0.001).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = tiny_spec();
        let base = FfnModel::<f64>::init(spec, 1).unwrap();
        let mut g = GradientSet::zeros_like(&base);
        for l in &mut g.layers {
            for w in l.weights_mut() {
                *w = f64::from(rng.gen_range(-64i32..64)) / 64.0;
            }
        }
        let lr = 1.0 / 1024.0;
        let mut twice = base.clone();
        twice.sgd_step(&g, lr).unwrap();
        twice.sgd_step(&g, lr).unwrap();
        let mut once = base.clone();
        once.sgd_step(&g, 2.0 * lr).unwrap();
        for (a, b) in twice.flatten().iter().zip(once.flatten()) {
            assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut m = FfnModel::<f32>::zeros(tiny_spec()).unwrap();
        let other = FfnModel::<f32>::zeros(ModelSpec { fov: [9, 9, 5], channels: 3, modules: 2 }).unwrap();
        assert!(matches!(
            m.sgd_step(&GradientSet::zeros_like(&other), 0.1),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
