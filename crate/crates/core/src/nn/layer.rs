use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Linear => z.clone(),
        }
    }

    /// Multiply `upstream` by the activation derivative at pre-activation `z`.
    pub fn backprop(self, z: &Array2<f64>, mut upstream: Array2<f64>) -> Array2<f64> {
        if self == Activation::Relu {
            upstream.zip_mut_with(z, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        upstream
    }
}

/// Valid-padding, stride-1 convolution over an HWC tensor stored flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub filters: usize,
}

impl ConvShape {
    pub fn out_height(&self) -> usize {
        self.height + 1 - self.kernel_h
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.kernel_w
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.channels
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn output_len(&self) -> usize {
        self.positions() * self.filters
    }

    /// Rows are (sample, position); columns follow (kh, kw, channel) order.
    fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (batch, p, k) = (x.nrows(), self.positions(), self.patch_len());
        let mut out = Array2::zeros((batch * p, k));
        let (ow, c, w) = (self.out_width(), self.channels, self.width);
        for b in 0..batch {
            let row = x.row(b);
            for oy in 0..self.out_height() {
                for ox in 0..ow {
                    let mut dst = out.row_mut(b * p + oy * ow + ox);
                    let mut j = 0;
                    for ky in 0..self.kernel_h {
                        let base = ((oy + ky) * w + ox) * c;
                        for v in row.slice(s![base..base + self.kernel_w * c]) {
                            dst[j] = *v;
                            j += 1;
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, cols: &Array2<f64>, batch: usize) -> Array2<f64> {
        let p = self.positions();
        let mut out = Array2::zeros((batch, self.input_len()));
        let (ow, c, w) = (self.out_width(), self.channels, self.width);
        for b in 0..batch {
            let mut row = out.row_mut(b);
            for oy in 0..self.out_height() {
                for ox in 0..ow {
                    let src = cols.row(b * p + oy * ow + ox);
                    let mut j = 0;
                    for ky in 0..self.kernel_h {
                        let base = ((oy + ky) * w + ox) * c;
                        for t in 0..self.kernel_w * c {
                            row[base + t] += src[j];
                            j += 1;
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv(ConvShape),
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv(c) => c.input_len(),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv(c) => c.output_len(),
        }
    }

    fn weight_shape(&self) -> (usize, usize) {
        match self {
            LayerKind::Dense { inputs, outputs } => (*outputs, *inputs),
            LayerKind::Conv(c) => (c.filters, c.patch_len()),
        }
    }
}

/// Batches up to this many rows use matrix-vector products.
const SMALL_BATCH: usize = 8;

/// A dense or convolutional layer with its activation.
///
/// Dense weights are (outputs × inputs). Convolution weights are
/// (filters × kh·kw·channels) and outputs are flattened HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// What a layer keeps from its forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Dense input, or im2col patches for convolutions.
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
}

pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub input: Array2<f64>,
}

impl Layer {
    /// Uniform init in ±1/√fan_in for weights and biases.
    pub fn new(kind: LayerKind, activation: Activation, rng: &mut dyn RngCore) -> Self {
        let (rows, cols) = kind.weight_shape();
        let bound = 1.0 / (cols as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(rows, || rng.random_range(-bound..bound));
        Self {
            kind,
            weight,
            bias,
            activation,
        }
    }

    pub fn dense(inputs: usize, outputs: usize, activation: Activation, rng: &mut dyn RngCore) -> Self {
        Self::new(LayerKind::Dense { inputs, outputs }, activation, rng)
    }

    pub fn zeros(kind: LayerKind, activation: Activation) -> Self {
        let shape = kind.weight_shape();
        Self {
            kind,
            weight: Array2::zeros(shape),
            bias: Array1::zeros(shape.0),
            activation,
        }
    }

    pub fn input_len(&self) -> usize {
        self.kind.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.kind.output_len()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-activation and cache. `extra` is added to the pre-activation.
    pub fn pre_activation(&self, x: ArrayView2<f64>, extra: Option<&Array2<f64>>) -> LayerCache {
        let batch = x.nrows();
        let (input, mut pre) = match self.kind {
            LayerKind::Dense { .. } => (x.to_owned(), self.affine(x)),
            LayerKind::Conv(c) => {
                let cols = c.im2col(x);
                let pre = self.affine(cols.view());
                let pre = pre
                    .into_shape_with_order((batch, c.output_len()))
                    .expect("contiguous conv output");
                (cols, pre)
            }
        };
        if let Some(e) = extra {
            pre += e;
        }
        LayerCache { input, pre }
    }

    /// x · Wᵀ + b. Few rows go through matrix-vector products, which skip
    /// the packing a general matrix product does.
    fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        if x.nrows() > SMALL_BATCH {
            return x.dot(&self.weight.t()) + &self.bias;
        }
        let mut out = Array2::zeros((x.nrows(), self.weight.nrows()));
        for (mut dst, src) in out.rows_mut().into_iter().zip(x.rows()) {
            dst.assign(&(self.weight.dot(&src) + &self.bias));
        }
        out
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.activation.apply(&self.pre_activation(x, None).pre)
    }

    /// Gradients given d(loss)/d(pre-activation).
    pub fn backward_pre(&self, cache: &LayerCache, dpre: &Array2<f64>) -> LayerGrads {
        match self.kind {
            LayerKind::Dense { .. } => LayerGrads {
                weight: dpre.t().dot(&cache.input),
                bias: dpre.sum_axis(Axis(0)),
                input: dpre.dot(&self.weight),
            },
            LayerKind::Conv(c) => {
                let batch = dpre.nrows();
                let d = dpre
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((batch * c.positions(), c.filters))
                    .expect("contiguous conv gradient");
                let dcols = d.dot(&self.weight);
                LayerGrads {
                    weight: d.t().dot(&cache.input),
                    bias: d.sum_axis(Axis(0)),
                    input: c.col2im(&dcols, batch),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dense_applies_activation() {
        let mut layer = Layer::zeros(LayerKind::Dense { inputs: 3, outputs: 3 }, Activation::Relu);
        layer.weight = Array2::eye(3);
        let x = array![[1.0, -2.0, 0.5]];
        assert_eq!(layer.forward(x.view()), array![[1.0, 0.0, 0.5]]);
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = ConvShape {
            height: 4,
            width: 5,
            channels: 2,
            kernel_h: 3,
            kernel_w: 2,
            filters: 3,
        };
        let layer = Layer::new(LayerKind::Conv(shape), Activation::Linear, &mut rng);
        let x = Array2::from_shape_fn((2, shape.input_len()), |(b, i)| ((b * 31 + i * 7) % 11) as f64 - 5.0);
        let y = layer.forward(x.view());
        for b in 0..2 {
            for oy in 0..shape.out_height() {
                for ox in 0..shape.out_width() {
                    for f in 0..shape.filters {
                        let mut acc = layer.bias[f];
                        for ky in 0..3 {
                            for kx in 0..2 {
                                for ch in 0..2 {
                                    let xi = ((oy + ky) * 5 + ox + kx) * 2 + ch;
                                    let wi = (ky * 2 + kx) * 2 + ch;
                                    acc += layer.weight[[f, wi]] * x[[b, xi]];
                                }
                            }
                        }
                        let yi = (oy * shape.out_width() + ox) * 3 + f;
                        assert!((y[[b, yi]] - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
