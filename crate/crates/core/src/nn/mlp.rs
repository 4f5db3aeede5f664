use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_label, logit_gradient, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Two-layer perceptron: `W2 · act(W1 · x + b1) + b2`.
///
/// Parameters are stored flat in the order `W1 | b1 | W2 | b2`, matrices
/// row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub activation: Activation,
    pub init_seed: u64,
    params: Vec<f64>,
}

impl Mlp {
    /// Seeded He-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        for (name, v) in [
            ("input_dim", input_dim),
            ("hidden_dim", hidden_dim),
            ("n_classes", n_classes),
        ] {
            if v == 0 {
                return Err(Error::BadDimension(format!("{name} must be positive")));
            }
        }
        let mut mlp = Mlp {
            input_dim,
            hidden_dim,
            n_classes,
            activation: Activation::Relu,
            init_seed: seed,
            params: vec![0.0; Self::param_count(input_dim, hidden_dim, n_classes)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / input_dim as f64).sqrt();
        let a2 = (6.0 / hidden_dim as f64).sqrt();
        let (w1, w2) = (mlp.w1_range(), mlp.w2_range());
        for v in &mut mlp.params[w1] {
            *v = rng.random_range(-a1..a1);
        }
        for v in &mut mlp.params[w2] {
            *v = rng.random_range(-a2..a2);
        }
        Ok(mlp)
    }

    /// Builds a network from explicit row-major weights.
    pub fn from_parts(
        w1: &[Vec<f64>],
        b1: &[f64],
        w2: &[Vec<f64>],
        b2: &[f64],
        activation: Activation,
    ) -> Result<Self> {
        let hidden_dim = w1.len();
        let input_dim = w1.first().map_or(0, Vec::len);
        let n_classes = w2.len();
        if hidden_dim == 0 || input_dim == 0 || n_classes == 0 {
            return Err(Error::BadDimension("empty weight matrix".into()));
        }
        let consistent = w1.iter().all(|r| r.len() == input_dim)
            && w2.iter().all(|r| r.len() == hidden_dim)
            && b1.len() == hidden_dim
            && b2.len() == n_classes;
        if !consistent {
            return Err(Error::BadDimension("inconsistent layer shapes".into()));
        }
        let mut params: Vec<f64> = Vec::with_capacity(Self::param_count(input_dim, hidden_dim, n_classes));
        params.extend(w1.iter().flatten().copied());
        params.extend_from_slice(b1);
        params.extend(w2.iter().flatten().copied());
        params.extend_from_slice(b2);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Mlp {
            input_dim,
            hidden_dim,
            n_classes,
            activation,
            init_seed: 0,
            params,
        })
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize, n_classes: usize) -> usize {
        hidden_dim * input_dim + hidden_dim + n_classes * hidden_dim + n_classes
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden_dim * self.input_dim
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden_dim * self.input_dim;
        s..s + self.hidden_dim
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.n_classes * self.hidden_dim
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + self.n_classes
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[self.w1_range()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.b1_range()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.w2_range()]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.b2_range()]
    }

    /// Rebuilds a network from a flat parameter buffer (model files).
    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.params.len()),
                actual: format!("{} parameters", params.len()),
            });
        }
        self.params = params;
        Ok(self)
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let w1 = self.w1();
        self.b1()
            .iter()
            .enumerate()
            .map(|(h, b)| {
                let row = &w1[h * self.input_dim..(h + 1) * self.input_dim];
                b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn output(&self, hidden: &[f64]) -> Vec<f64> {
        let w2 = self.w2();
        self.b2()
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let row = &w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
                b + row.iter().zip(hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

impl Network for Mlp {
    type Input = Vec<f64>;

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &Vec<f64>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {}", self.input_dim),
                actual: format!("vector of length {}", x.len()),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &Vec<f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let hidden: Vec<f64> = self
            .hidden_pre(x)
            .into_iter()
            .map(|v| self.activation.apply(v))
            .collect();
        Ok(self.output(&hidden))
    }

    fn accumulate_gradient(&self, x: &Vec<f64>, label: usize, grad: &mut [f64]) -> Result<(f64, usize)> {
        self.check_input(x)?;
        check_label(label, self.n_classes)?;
        let pre = self.hidden_pre(x);
        let hidden: Vec<f64> = pre.iter().map(|v| self.activation.apply(*v)).collect();
        let logits = self.output(&hidden);
        let (dz, loss, pred) = logit_gradient(&logits, label);

        let (w1r, b1r, w2r, b2r) = (self.w1_range(), self.b1_range(), self.w2_range(), self.b2_range());
        let w2 = self.w2();
        let mut dhidden = vec![0.0; self.hidden_dim];
        for (k, dzk) in dz.iter().enumerate() {
            grad[b2r.start + k] += dzk;
            let row = k * self.hidden_dim;
            for h in 0..self.hidden_dim {
                grad[w2r.start + row + h] += dzk * hidden[h];
                dhidden[h] += dzk * w2[row + h];
            }
        }
        for h in 0..self.hidden_dim {
            let dpre = dhidden[h] * self.activation.derivative(pre[h]);
            if dpre == 0.0 {
                continue;
            }
            grad[b1r.start + h] += dpre;
            let row = w1r.start + h * self.input_dim;
            for (i, xi) in x.iter().enumerate() {
                grad[row + i] += dpre * xi;
            }
        }
        Ok((loss, pred))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::predict;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Mlp::init(7, 4, 2, 1).unwrap();
        let b = Mlp::init(7, 4, 2, 1).unwrap();
        assert_eq!(a, b);
        assert!(a
            .params()
            .iter()
            .zip(b.params())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.b1().iter().chain(a.b2()).all(|v| *v == 0.0));
        assert_ne!(a.params(), Mlp::init(7, 4, 2, 2).unwrap().params());
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        assert!(matches!(Mlp::init(7, 0, 2, 1), Err(Error::BadDimension(_))));
        assert!(matches!(Mlp::init(0, 4, 2, 1), Err(Error::BadDimension(_))));
        assert!(matches!(Mlp::init(7, 4, 0, 1), Err(Error::BadDimension(_))));
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let m = Mlp::init(3, 5, 2, 9).unwrap();
        let n = m.params().len();
        let zero = m.with_params(vec![0.0; n]).unwrap();
        assert_eq!(zero.forward(&vec![1.0, -7.0, 3.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_set_identity_network() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = Mlp::from_parts(&eye, &[0.0, 0.0], &eye, &[0.0, 0.0], Activation::Identity).unwrap();
        assert_eq!(m.forward(&vec![3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(predict(&m, &vec![3.0, -1.0]).unwrap().0, 0);
    }

    #[test]
    fn forward_is_pure_and_checks_shape() {
        let m = Mlp::init(4, 8, 3, 5).unwrap();
        let x = vec![0.1, 0.2, -0.3, 0.4];
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
        assert!(matches!(m.forward(&vec![1.0]), Err(Error::ShapeMismatch { .. })));
    }
}
