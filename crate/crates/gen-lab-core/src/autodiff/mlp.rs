//! Feed-forward networks: rectifier hidden layers, identity output layer.

use crate::rng::DetRng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Weights and biases for a feed-forward net with the given layer sizes.
/// `dims = [in, h1, ..., out]`; a two-entry `dims` is a single linear layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
    pub fn new(dims: &[usize], rng: &mut DetRng) -> Self {
        assert!(
            dims.len() >= 2,
            "an MLP needs at least input and output dims"
        );
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            weights.push(Tensor::matrix(fan_in, fan_out, data));
            biases.push(Tensor::zeros(vec![fan_out]));
        }
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    /// All-zero parameters; used to build hand-crafted stub modules in tests.
    pub fn zeroed(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        let weights = dims
            .windows(2)
            .map(|w| Tensor::zeros(vec![w[0], w[1]]))
            .collect();
        let biases = dims.windows(2).map(|w| Tensor::zeros(vec![w[1]])).collect();
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.biases[layer]
    }

    /// Sum over layers of (d_in + 1) * d_out.
    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn for_each_param(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            f(format!("{prefix}.w{l}"), w);
            f(format!("{prefix}.b{l}"), b);
        }
    }

    /// Mutable parameter tensors in `for_each_param` order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Put every parameter on the tape as a leaf, in `for_each_param` order.
    pub fn insert(&self, tape: &mut Tape, order: &mut Vec<Var>) -> MlpVars {
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let wv = tape.leaf(w.clone());
            let bv = tape.leaf(b.clone());
            order.push(wv);
            order.push(bv);
            ws.push(wv);
            bs.push(bv);
        }
        MlpVars { ws, bs }
    }
}

/// Tape handles for one inserted MLP.
pub struct MlpVars {
    ws: Vec<Var>,
    bs: Vec<Var>,
}

impl MlpVars {
    /// Forward a (batch x in) tensor through the net.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.ws.len() - 1;
        for (l, (&w, &b)) in self.ws.iter().zip(&self.bs).enumerate() {
            let z = tape.matmul(h, w);
            let z = tape.add_bias(z, b);
            h = if l < last { tape.relu(z) } else { z };
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_formula() {
        let mut rng = DetRng::new(0);
        let mlp = Mlp::new(&[3, 48, 32], &mut rng);
        assert_eq!(mlp.param_count(), 4 * 48 + 49 * 32);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut rng = DetRng::new(42);
            let mlp = Mlp::new(&[4, 8, 2], &mut rng);
            let mut tape = Tape::new();
            let mut order = Vec::new();
            let vars = mlp.insert(&mut tape, &mut order);
            let x = tape.leaf(Tensor::matrix(
                3,
                4,
                (0..12).map(|i| i as f64 * 0.1).collect(),
            ));
            let y = vars.forward(&mut tape, x);
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_linear_layer_has_no_relu() {
        // y = Wx + b with W = -I must keep negative outputs
        let mut mlp = Mlp::zeroed(&[2, 2]);
        mlp.weight_mut(0).data_mut()[0] = -1.0;
        mlp.weight_mut(0).data_mut()[3] = -1.0;
        let mut tape = Tape::new();
        let mut order = Vec::new();
        let vars = mlp.insert(&mut tape, &mut order);
        let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let y = vars.forward(&mut tape, x);
        assert_eq!(tape.value(y).data(), &[-1.0, -2.0]);
    }
}
