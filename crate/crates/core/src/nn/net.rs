use std::ops::Range;

use ndarray::{concatenate, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::layer::{Activation, ConvShape, Layer, LayerCache, LayerKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    One,
    Two,
}

/// One layer of a branch; branch layers are always rectified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv {
        height: usize,
        width: usize,
        channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        filters: usize,
    },
}

/// A branch reads the concatenation of `inputs` slices of its input vector.
/// With no layers it passes that concatenation through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub inputs: Vec<Range<usize>>,
    pub layers: Vec<LayerSpec>,
}

impl BranchSpec {
    pub fn passthrough(inputs: Vec<Range<usize>>) -> Self {
        Self {
            inputs,
            layers: vec![],
        }
    }

    pub fn dense(inputs: Vec<Range<usize>>, units: &[usize]) -> Self {
        Self {
            inputs,
            layers: units.iter().map(|&units| LayerSpec::Dense { units }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_len: usize,
    pub branches: Vec<BranchSpec>,
    /// Trunk widths; the last entry is the linear output layer.
    pub trunk: Vec<usize>,
}

impl NetSpec {
    /// A plain multilayer perceptron over the whole input.
    pub fn mlp(input_len: usize, trunk: Vec<usize>) -> Self {
        Self {
            input_len,
            branches: vec![BranchSpec::passthrough(vec![0..input_len])],
            trunk,
        }
    }
}

/// The new module grafted on in Stage Two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideSpec {
    pub input_len: usize,
    pub branch: BranchSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub inputs: Vec<Range<usize>>,
    pub layers: Vec<Layer>,
}

fn spans_len(spans: &[Range<usize>]) -> usize {
    spans.iter().map(|r| r.len()).sum()
}

fn gather(x: ArrayView2<f64>, spans: &[Range<usize>]) -> Array2<f64> {
    if spans.len() == 1 && spans[0].start == 0 && spans[0].end == x.ncols() {
        return x.to_owned();
    }
    let views: Vec<_> = spans
        .iter()
        .map(|r| x.slice(ndarray::s![.., r.clone()]))
        .collect();
    if views.is_empty() {
        return Array2::zeros((x.nrows(), 0));
    }
    concatenate(Axis(1), &views).expect("spans share the batch dimension")
}

impl Branch {
    fn build(spec: &BranchSpec, input_len: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if let Some(r) = spec.inputs.iter().find(|r| r.end > input_len || r.start > r.end) {
            return Err(Error::DimensionMismatch(format!(
                "branch input span {r:?} outside input of width {input_len}"
            )));
        }
        let mut width = spans_len(&spec.inputs);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let kind = match *l {
                LayerSpec::Dense { units } => LayerKind::Dense {
                    inputs: width,
                    outputs: units,
                },
                LayerSpec::Conv {
                    height,
                    width: w,
                    channels,
                    kernel_h,
                    kernel_w,
                    filters,
                } => {
                    let shape = ConvShape {
                        height,
                        width: w,
                        channels,
                        kernel_h,
                        kernel_w,
                        filters,
                    };
                    if shape.input_len() != width || kernel_h > height || kernel_w > w {
                        return Err(Error::DimensionMismatch(format!(
                            "convolution {shape:?} does not fit an input of width {width}"
                        )));
                    }
                    LayerKind::Conv(shape)
                }
            };
            let layer = Layer::new(kind, Activation::Relu, rng);
            width = layer.output_len();
            layers.push(layer);
        }
        Ok(Self {
            inputs: spec.inputs.clone(),
            layers,
        })
    }

    pub fn output_len(&self) -> usize {
        self.layers
            .last()
            .map_or_else(|| spans_len(&self.inputs), |l| l.output_len())
    }

    fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Vec<LayerCache>) {
        let mut h = gather(x, &self.inputs);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let cache = layer.pre_activation(h.view(), None);
            h = layer.activation.apply(&cache.pre);
            caches.push(cache);
        }
        (h, caches)
    }

    /// Appends (weight, bias) gradients for each layer in order.
    fn backward(&self, caches: &[LayerCache], upstream: Array2<f64>, out: &mut Vec<ArrayD<f64>>) {
        let mut grads = Vec::with_capacity(2 * self.layers.len());
        let mut d = upstream;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let dpre = layer.activation.backprop(&cache.pre, d);
            let g = layer.backward_pre(cache, &dpre);
            grads.push(g.bias.into_dyn());
            grads.push(g.weight.into_dyn());
            d = g.input;
        }
        out.extend(grads.into_iter().rev());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideBranch {
    pub input_len: usize,
    pub branch: Branch,
    /// Maps the side output into the pre-activation of the augmented trunk layer.
    pub bridge: Array2<f64>,
}

/// A feed-forward network that can be widened once at a hidden trunk layer.
///
/// Branch outputs are concatenated and fed through the trunk, whose last
/// layer is linear. After augmentation the trunk layer at `augment_at`
/// also receives `bridge · side(aug_input)` in its pre-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentableNet {
    input_len: usize,
    branches: Vec<Branch>,
    trunk: Vec<Layer>,
    augment_at: usize,
    side: Option<SideBranch>,
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    branch_caches: Vec<Vec<LayerCache>>,
    trunk_caches: Vec<LayerCache>,
    side_caches: Vec<LayerCache>,
    side_output: Option<Array2<f64>>,
}

/// Parameter gradients aligned with [`AugmentableNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<ArrayD<f64>>);

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|v| v * factor);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|a| a.iter().copied()).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().flat_map(|a| a.iter()).map(|v| v * v).sum()
    }
}

impl AugmentableNet {
    /// A Stage-One network with uniform ±1/√fan_in initialization.
    pub fn new(spec: &NetSpec, rng: &mut dyn RngCore) -> Result<Self> {
        if spec.trunk.is_empty() {
            return Err(Error::InvalidArgument("network needs an output layer".into()));
        }
        let branches = spec
            .branches
            .iter()
            .map(|b| Branch::build(b, spec.input_len, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut width: usize = branches.iter().map(Branch::output_len).sum();
        let mut trunk = Vec::with_capacity(spec.trunk.len());
        for (i, &units) in spec.trunk.iter().enumerate() {
            let act = if i + 1 == spec.trunk.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            trunk.push(Layer::dense(width, units, act, rng));
            width = units;
        }
        Ok(Self {
            input_len: spec.input_len,
            branches,
            augment_at: spec.trunk.len().saturating_sub(2),
            trunk,
            side: None,
        })
    }

    pub fn stage(&self) -> Stage {
        if self.side.is_some() {
            Stage::Two
        } else {
            Stage::One
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn aug_input_len(&self) -> Option<usize> {
        self.side.as_ref().map(|s| s.input_len)
    }

    pub fn output_len(&self) -> usize {
        self.trunk.last().map_or(0, Layer::output_len)
    }

    pub fn augment_at(&self) -> usize {
        self.augment_at
    }

    pub fn hidden_layers(&self) -> usize {
        self.trunk.len() - 1
    }

    pub fn trunk(&self) -> &[Layer] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [Layer] {
        &mut self.trunk
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn side(&self) -> Option<&SideBranch> {
        self.side.as_ref()
    }

    pub fn side_mut(&mut self) -> Option<&mut SideBranch> {
        self.side.as_mut()
    }

    /// Graft a side branch onto hidden trunk layer `augment_at` (the last
    /// hidden layer when `None`). The bridge starts at zero, so the new
    /// network computes exactly what the old one did.
    pub fn augment(
        &self,
        side: &SideSpec,
        augment_at: Option<usize>,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if self.side.is_some() {
            return Err(Error::AlreadyAugmented);
        }
        let hidden = self.hidden_layers();
        let index = augment_at.unwrap_or(hidden.saturating_sub(1));
        if index >= hidden {
            return Err(Error::InvalidAugmentLayer { index, hidden });
        }
        let branch = Branch::build(&side.branch, side.input_len, rng)?;
        let bridge = Array2::zeros((self.trunk[index].output_len(), branch.output_len()));
        let mut net = self.clone();
        net.augment_at = index;
        net.side = Some(SideBranch {
            input_len: side.input_len,
            branch,
            bridge,
        });
        Ok(net)
    }

    /// Fill the bridge with uniform values in ±1/√width.
    pub fn randomize_bridge(&mut self, rng: &mut dyn RngCore) {
        if let Some(side) = &mut self.side {
            let bound = 1.0 / (side.bridge.ncols().max(1) as f64).sqrt();
            side.bridge.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
    }

    fn check_inputs(&self, main: &ArrayView2<f64>, aug: Option<&ArrayView2<f64>>) -> Result<()> {
        if main.ncols() != self.input_len {
            return Err(Error::DimensionMismatch(format!(
                "main input width {} but network expects {}",
                main.ncols(),
                self.input_len
            )));
        }
        match (&self.side, aug) {
            (None, None) => Ok(()),
            (Some(side), Some(a)) => {
                if a.ncols() != side.input_len || a.nrows() != main.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "augmentation input {}×{} but network expects {}×{}",
                        a.nrows(),
                        a.ncols(),
                        main.nrows(),
                        side.input_len
                    )));
                }
                Ok(())
            }
            (None, Some(_)) => Err(Error::StageMismatch(
                "augmentation input given to a Stage-One network".into(),
            )),
            (Some(_), None) => Err(Error::StageMismatch(
                "Stage-Two network needs an augmentation input".into(),
            )),
        }
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(
        &self,
        main: ArrayView2<f64>,
        aug: Option<ArrayView2<f64>>,
    ) -> Result<(Array2<f64>, Tape)> {
        self.check_inputs(&main, aug.as_ref())?;
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut branch_caches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let (h, c) = b.forward(main);
            outs.push(h);
            branch_caches.push(c);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let mut h = if views.len() == 1 {
            outs.pop().expect("one branch")
        } else {
            concatenate(Axis(1), &views).expect("branch outputs share the batch dimension")
        };

        let (side_caches, side_output, bridged) = match (&self.side, aug) {
            (Some(side), Some(a)) => {
                let (out, caches) = side.branch.forward(a);
                let bridged = out.dot(&side.bridge.t());
                (caches, Some(out), Some(bridged))
            }
            _ => (vec![], None, None),
        };

        let mut trunk_caches = Vec::with_capacity(self.trunk.len());
        for (i, layer) in self.trunk.iter().enumerate() {
            let extra = if i == self.augment_at { bridged.as_ref() } else { None };
            let cache = layer.pre_activation(h.view(), extra);
            h = layer.activation.apply(&cache.pre);
            trunk_caches.push(cache);
        }
        Ok((
            h,
            Tape {
                branch_caches,
                trunk_caches,
                side_caches,
                side_output,
            },
        ))
    }

    pub fn predict(&self, main: ArrayView2<f64>, aug: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        Ok(self.forward(main, aug)?.0)
    }

    /// Gradients of Σ upstream ⊙ output with respect to every parameter.
    pub fn backward(&self, tape: &Tape, upstream: &Array2<f64>) -> Grads {
        let mut trunk_grads = Vec::with_capacity(2 * self.trunk.len());
        let mut bridge_dpre = None;
        let mut d = upstream.clone();
        for (i, (layer, cache)) in self.trunk.iter().zip(&tape.trunk_caches).enumerate().rev() {
            let dpre = layer.activation.backprop(&cache.pre, d);
            if i == self.augment_at && self.side.is_some() {
                bridge_dpre = Some(dpre.clone());
            }
            let g = layer.backward_pre(cache, &dpre);
            trunk_grads.push(g.bias.into_dyn());
            trunk_grads.push(g.weight.into_dyn());
            d = g.input;
        }
        trunk_grads.reverse();

        let mut out = Vec::with_capacity(self.param_tensor_count());
        let mut col = 0;
        for (b, caches) in self.branches.iter().zip(&tape.branch_caches) {
            let w = b.output_len();
            let slice = d.slice(ndarray::s![.., col..col + w]).to_owned();
            b.backward(caches, slice, &mut out);
            col += w;
        }
        out.extend(trunk_grads);

        if let (Some(side), Some(dpre), Some(side_out)) = (&self.side, bridge_dpre, &tape.side_output) {
            let dbridge = dpre.t().dot(side_out);
            let dside = dpre.dot(&side.bridge);
            side.branch.backward(&tape.side_caches, dside, &mut out);
            out.push(dbridge.into_dyn());
        }
        Grads(out)
    }

    fn param_tensor_count(&self) -> usize {
        let layers: usize = self.branches.iter().map(|b| b.layers.len()).sum::<usize>()
            + self.trunk.len()
            + self.side.as_ref().map_or(0, |s| s.branch.layers.len());
        2 * layers + usize::from(self.side.is_some())
    }

    /// Parameter names in canonical order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.param_tensor_count());
        for (bi, b) in self.branches.iter().enumerate() {
            for li in 0..b.layers.len() {
                names.push(format!("branch{bi}.{li}.weight"));
                names.push(format!("branch{bi}.{li}.bias"));
            }
        }
        for li in 0..self.trunk.len() {
            names.push(format!("trunk.{li}.weight"));
            names.push(format!("trunk.{li}.bias"));
        }
        if let Some(side) = &self.side {
            for li in 0..side.branch.layers.len() {
                names.push(format!("side.{li}.weight"));
                names.push(format!("side.{li}.bias"));
            }
            names.push("bridge.weight".to_string());
        }
        names
    }

    pub fn params(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::with_capacity(self.param_tensor_count());
        let layers = self
            .branches
            .iter()
            .flat_map(|b| b.layers.iter())
            .chain(self.trunk.iter())
            .chain(self.side.iter().flat_map(|s| s.branch.layers.iter()));
        for l in layers {
            out.push(l.weight.view().into_dyn());
            out.push(l.bias.view().into_dyn());
        }
        if let Some(side) = &self.side {
            out.push(side.bridge.view().into_dyn());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        let (branches, trunk, side) = (&mut self.branches, &mut self.trunk, &mut self.side);
        let mut bridge = None;
        let side_layers = match side {
            Some(s) => {
                bridge = Some(&mut s.bridge);
                Some(&mut s.branch.layers)
            }
            None => None,
        };
        let layers = branches
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut())
            .chain(trunk.iter_mut())
            .chain(side_layers.into_iter().flat_map(|l| l.iter_mut()));
        for l in layers {
            out.push(l.weight.view_mut().into_dyn());
            out.push(l.bias.view_mut().into_dyn());
        }
        if let Some(b) = bridge {
            out.push(b.view_mut().into_dyn());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        for mut p in self.params_mut() {
            for v in p.iter_mut() {
                *v = values[i];
                i += 1;
            }
        }
        Ok(())
    }

    /// θ′ ← τθ + (1−τ)θ′ for every parameter, with `self` as θ′.
    pub fn soft_update_from(&mut self, main: &AugmentableNet, tau: f64) -> Result<()> {
        if self.param_names() != main.param_names() {
            return Err(Error::DimensionMismatch("target and main networks differ in shape".into()));
        }
        for (mut t, m) in self.params_mut().into_iter().zip(main.params()) {
            Zip::from(&mut t).and(&m).for_each(|t, &m| *t = tau * m + (1.0 - tau) * *t);
        }
        Ok(())
    }

    /// Apply `delta` (aligned with `params`) in place: θ ← θ + delta.
    pub fn apply_update(&mut self, delta: &Grads) {
        for (mut p, d) in self.params_mut().into_iter().zip(&delta.0) {
            p += d;
        }
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params().iter().map(|p| ArrayD::zeros(p.raw_dim())).collect())
    }
}
