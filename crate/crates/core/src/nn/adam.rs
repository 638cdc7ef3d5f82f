use ndarray::{ArrayD, Zip};

use super::net::{AugmentableNet, Grads};

/// Adam over the parameters of one network, minimizing.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(net: &AugmentableNet, lr: f64) -> Self {
        let zeros = net.zero_grads().0;
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut AugmentableNet, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((mut p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::NetSpec;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimizes_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = AugmentableNet::new(&NetSpec::mlp(2, vec![1]), &mut rng).unwrap();
        let mut opt = Adam::new(&net, 0.05);
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let y = Array2::from_shape_vec((3, 1), vec![2.0, -1.0, 1.0]).unwrap();
        let mut loss = f64::INFINITY;
        for _ in 0..2000 {
            let (out, tape) = net.forward(x.view(), None).unwrap();
            let diff = &out - &y;
            loss = diff.mapv(|d| d * d).sum();
            let grads = net.backward(&tape, &(2.0 * diff));
            opt.step(&mut net, &grads);
        }
        assert!(loss < 1e-8, "{loss}");
    }
}
