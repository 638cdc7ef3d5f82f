//! Central finite-difference check of [`AugmentableNet::backward`].

use ndarray::{Array2, ArrayView2};

use super::AugmentableNet;
use crate::error::Result;

/// Gradients smaller than this are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-4;

/// Largest per-parameter relative gap between backprop and central
/// differences of Σ upstream ⊙ output.
pub fn max_gradient_error(
    net: &AugmentableNet,
    main: ArrayView2<f64>,
    aug: Option<ArrayView2<f64>>,
    upstream: &Array2<f64>,
    step: f64,
) -> Result<f64> {
    let (_, tape) = net.forward(main, aug)?;
    let analytic = net.backward(&tape, upstream).flatten();
    let loss = |n: &AugmentableNet| -> Result<f64> { Ok((n.predict(main, aug)? * upstream).sum()) };
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst = 0.0f64;
    for (i, g) in analytic.iter().enumerate() {
        params[i] = base[i] + step;
        probe.set_flat_params(&params)?;
        let up = loss(&probe)?;
        params[i] = base[i] - step;
        probe.set_flat_params(&params)?;
        let down = loss(&probe)?;
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let scale = g.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
        worst = worst.max((g - numeric).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BranchSpec, LayerSpec, NetSpec, SideSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_and_dense_backprop_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = NetSpec {
            input_len: 3 * 4 * 2 + 3,
            branches: vec![
                BranchSpec {
                    inputs: vec![0..24],
                    layers: vec![LayerSpec::Conv {
                        height: 3,
                        width: 4,
                        channels: 2,
                        kernel_h: 2,
                        kernel_w: 2,
                        filters: 3,
                    }],
                },
                BranchSpec::dense(vec![24..27], &[4]),
            ],
            trunk: vec![5, 3],
        };
        let side = SideSpec {
            input_len: 2,
            branch: BranchSpec::dense(vec![0..2], &[3]),
        };
        let mut net = AugmentableNet::new(&spec, &mut rng).unwrap().augment(&side, None, &mut rng).unwrap();
        net.randomize_bridge(&mut rng);
        let main = Array2::from_shape_simple_fn((4, 27), || rng.random_range(-1.0..1.0));
        let aug = Array2::from_shape_simple_fn((4, 2), || rng.random_range(-1.0..1.0));
        let upstream = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let err = max_gradient_error(&net, main.view(), Some(aug.view()), &upstream, 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
