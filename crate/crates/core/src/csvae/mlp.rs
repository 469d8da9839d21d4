use crate::numerics::{autodiff::softplus, Matrix, NumericsError, SeededRng, Tape, Var};

/// Fully connected network: ReLU after every layer but the last.
///
/// Weights are stored `in × out` so a batch `B × in` maps with one product.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl Mlp {
    /// Uniform fan-in init `U(±1/√in)`, zero biases.
    pub fn new(widths: &[usize], rng: &mut SeededRng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(Matrix::from_fn(w[0], w[1], |_, _| rng.uniform(-bound, bound)));
            biases.push(Matrix::zeros(1, w[1]));
        }
        Self { weights, biases }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            weights: widths.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect(),
            biases: widths.windows(2).map(|w| Matrix::zeros(1, w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").cols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.weights.iter().map(Matrix::cols));
        w
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Parameters interleaved as `[W₀, b₀, W₁, b₁, …]`.
    pub fn params(&self) -> Vec<&Matrix> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Batch forward pass without recording.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NumericsError> {
        let last = self.num_layers() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = h.matmul(w)?;
            let bias = b.row(0);
            for i in 0..next.rows() {
                for (v, bj) in next.row_mut(i).iter_mut().zip(bias) {
                    *v += bj;
                    if l < last {
                        *v = v.max(0.0);
                    }
                }
            }
            h = next;
        }
        Ok(h)
    }

    /// Registers the parameters on `tape` (in [`Mlp::params`] order).
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Recorded forward pass using parameter vars from [`Mlp::register`].
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, NumericsError> {
        let last = self.num_layers() - 1;
        let mut h = x;
        for l in 0..self.num_layers() {
            h = tape.affine(h, vars[2 * l], vars[2 * l + 1])?;
            if l < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Decoder positivity map.
pub fn positive_variance(x: f64) -> f64 {
    softplus(x) + super::GAMMA_OFFSET
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut rng = SeededRng::new(5);
        let net = Mlp::new(&[4, 6, 7, 3], &mut rng);
        let x = Matrix::from_fn(5, 4, |_, _| rng.normal());
        let plain = net.forward(&x).unwrap();
        let mut t = Tape::new();
        let vars = net.register(&mut t);
        let xv = t.leaf(x);
        let out = net.forward_tape(&mut t, &vars, xv).unwrap();
        assert_eq!(t.value(out), &plain);
        assert_eq!(net.widths(), vec![4, 6, 7, 3]);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = SeededRng::new(1);
        let net = Mlp::new(&[16, 8], &mut rng);
        assert!(net.weights[0].as_slice().iter().all(|w| w.abs() <= 0.25));
        assert!(net.biases[0].as_slice().iter().all(|&b| b == 0.0));
    }
}
