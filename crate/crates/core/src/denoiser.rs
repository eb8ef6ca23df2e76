//! Tiny noise-prediction models with hand-written backward passes.
//!
//! Parameters are exposed as one flat vector so that the same gradient can be
//! checked against finite differences. Linear layout: `W` row-major then `b`.
//! Two-layer layout: `W1` (H x D), `b1`, `W2` (D x H), `b2`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ToyDenoiser {
    /// `y = W x + b`
    Linear { w: Array2<f64>, b: Array1<f64> },
    /// `y = W2 tanh(W1 x + b1) + b2`
    Mlp2 {
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let n = Normal::new(0.0, scale).expect("scale is finite and non-negative");
    Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    let n = Normal::new(0.0, scale).expect("scale is finite and non-negative");
    Array1::from_shape_fn(len, |_| n.sample(rng))
}

impl ToyDenoiser {
    pub fn linear_zeros(dim: usize) -> Self {
        Self::Linear {
            w: Array2::zeros((dim, dim)),
            b: Array1::zeros(dim),
        }
    }

    pub fn linear_random(dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = normal_matrix(&mut rng, dim, dim, scale);
        let b = normal_vector(&mut rng, dim, scale);
        Self::Linear { w, b }
    }

    pub fn mlp2_random(dim: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = normal_matrix(&mut rng, hidden, dim, scale);
        let b1 = normal_vector(&mut rng, hidden, scale);
        let w2 = normal_matrix(&mut rng, dim, hidden, scale);
        let b2 = normal_vector(&mut rng, dim, scale);
        Self::Mlp2 { w1, b1, w2, b2 }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { b, .. } => b.len(),
            Self::Mlp2 { b2, .. } => b2.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Self::Linear { w, b } => w.len() + b.len(),
            Self::Mlp2 { w1, b1, w2, b2 } => w1.len() + b1.len() + w2.len() + b2.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        match self {
            Self::Linear { w, b } => {
                out.extend(w.iter());
                out.extend(b.iter());
            }
            Self::Mlp2 { w1, b1, w2, b2 } => {
                out.extend(w1.iter());
                out.extend(b1.iter());
                out.extend(w2.iter());
                out.extend(b2.iter());
            }
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        let mut it = p.iter().copied();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = it.next().expect("length checked above");
            }
        };
        match self {
            Self::Linear { w, b } => {
                fill(&mut w.iter_mut());
                fill(&mut b.iter_mut());
            }
            Self::Mlp2 { w1, b1, w2, b2 } => {
                fill(&mut w1.iter_mut());
                fill(&mut b1.iter_mut());
                fill(&mut w2.iter_mut());
                fill(&mut b2.iter_mut());
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Self::Linear { w, b } => w.dot(&x) + b,
            Self::Mlp2 { w1, b1, w2, b2 } => {
                let h = (w1.dot(&x) + b1).mapv(f64::tanh);
                w2.dot(&h) + b2
            }
        }
    }

    /// Row-wise forward pass over a batch (B x D).
    pub fn forward_batch(&self, xs: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((xs.nrows(), self.dim()));
        for (x, mut y) in xs.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            y.assign(&self.forward(x));
        }
        out
    }

    /// Parameter gradient of `grad_out · f(x)`.
    pub fn vjp(&self, x: ArrayView1<f64>, grad_out: ArrayView1<f64>) -> Array1<f64> {
        let mut g = Vec::with_capacity(self.n_params());
        match self {
            Self::Linear { .. } => {
                for &go in grad_out.iter() {
                    g.extend(x.iter().map(|xk| go * xk));
                }
                g.extend(grad_out.iter());
            }
            Self::Mlp2 { w1, b1, w2, .. } => {
                let h = (w1.dot(&x) + b1).mapv(f64::tanh);
                let g_h = w2.t().dot(&grad_out);
                let g_a = &g_h * &h.mapv(|v| 1.0 - v * v);
                for &ga in g_a.iter() {
                    g.extend(x.iter().map(|xk| ga * xk));
                }
                g.extend(g_a.iter());
                for &go in grad_out.iter() {
                    g.extend(h.iter().map(|hk| go * hk));
                }
                g.extend(grad_out.iter());
            }
        }
        Array1::from(g)
    }

    /// Summed parameter gradient over a batch of inputs and output gradients.
    pub fn vjp_batch(&self, xs: &Array2<f64>, grad_out: &Array2<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(self.n_params());
        for (x, go) in xs.axis_iter(Axis(0)).zip(grad_out.axis_iter(Axis(0))) {
            g += &self.vjp(x, go);
        }
        g
    }

    /// Explicit output-by-parameter Jacobian (D x P).
    pub fn jacobian(&self, x: ArrayView1<f64>) -> Array2<f64> {
        let d = self.dim();
        let mut j = Array2::zeros((d, self.n_params()));
        for i in 0..d {
            let mut e = Array1::zeros(d);
            e[i] = 1.0;
            j.row_mut(i).assign(&self.vjp(x, e.view()));
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn param_round_trip() {
        let mut m = ToyDenoiser::mlp2_random(3, 4, 0.5, 1);
        let p = m.params();
        assert_eq!(p.len(), 4 * 3 + 4 + 3 * 4 + 3);
        let doubled: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        m.set_params(&doubled).unwrap();
        assert_eq!(m.params(), doubled);
        assert!(m.set_params(&[1.0]).is_err());
    }

    #[test]
    fn linear_forward_and_jacobian() {
        let m = ToyDenoiser::Linear {
            w: array![[1.0, 2.0], [3.0, 4.0]],
            b: array![0.5, -0.5],
        };
        let x = array![1.0, -1.0];
        assert_eq!(m.forward(x.view()), array![-0.5, -1.5]);
        let j = m.jacobian(x.view());
        // d y0 / d W00, W01 = x; d y0 / d b0 = 1
        assert_eq!(j.row(0).to_vec(), vec![1.0, -1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(j.row(1).to_vec(), vec![0.0, 0.0, 1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn mlp_jacobian_matches_finite_differences() {
        let m = ToyDenoiser::mlp2_random(2, 3, 0.7, 5);
        let x = array![0.3, -0.8];
        let j = m.jacobian(x.view());
        let p0 = m.params();
        let h = 1e-6;
        for k in 0..p0.len() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            let mut pp = p0.clone();
            pp[k] += h;
            plus.set_params(&pp).unwrap();
            pp[k] -= 2.0 * h;
            minus.set_params(&pp).unwrap();
            let fd = (plus.forward(x.view()) - minus.forward(x.view())) / (2.0 * h);
            for i in 0..2 {
                assert!((fd[i] - j[[i, k]]).abs() < 1e-7, "param {k} output {i}");
            }
        }
    }
}
