use super::{check_channels, DenseParams, Initializer, Module, Param};
use crate::error::Result;
use crate::tensor::{Scalar, Tape, Var};

pub const SE_REDUCTION: usize = 16;

/// Squeeze-and-excitation channel attention:
/// `z = mean_hw(X)`, `s = σ(W2·relu(W1·z))`, output `s ⊙ X`.
#[derive(Clone, Debug)]
pub struct SeAttention<S: Scalar = f32> {
    channels: usize,
    pub squeeze: DenseParams<S>,
    pub excite: DenseParams<S>,
}

impl<S: Scalar> SeAttention<S> {
    pub fn new(init: &mut Initializer, channels: usize) -> Self {
        let hidden = Self::hidden_width(channels);
        Self { channels, squeeze: init.dense(channels, hidden), excite: init.dense(hidden, channels) }
    }

    /// `C/16`, clamped to at least one unit.
    pub fn hidden_width(channels: usize) -> usize {
        (channels / SE_REDUCTION).max(1)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Per-channel gates `s`, shaped `N×C×1×1`.
    pub fn gates(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        check_channels(tape, x, self.channels, "se_forward")?;
        let n = tape.shape(x)[0];
        let z = tape.global_avg_pool(x)?;
        let z = tape.reshape(z, [n, self.channels])?;
        let h = self.squeeze.forward(tape, z)?;
        let h = tape.relu(h);
        let s = self.excite.forward(tape, h)?;
        let s = tape.sigmoid(s);
        tape.reshape(s, [n, self.channels, 1, 1])
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let s = self.gates(tape, x)?;
        tape.mul(x, s)
    }
}

impl<S: Scalar> Module<S> for SeAttention<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.squeeze.params().into_iter().chain(self.excite.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.squeeze.params_mut();
        out.extend(self.excite.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_excitation_halves_input() {
        let mut init = Initializer::new(4);
        let mut se = SeAttention::<f64>::new(&mut init, 5);
        se.excite.weight.value_mut().data_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::uniform([2, 5, 3, 3], -2.0, 2.0, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = se.forward(&mut tape, xv).unwrap();
        assert_eq!(tape.value(y), &x.map(|v| 0.5 * v));
    }

    #[test]
    fn gates_stay_inside_unit_interval() {
        let mut init = Initializer::new(5);
        let se = SeAttention::<f64>::new(&mut init, 32);
        assert_eq!(SeAttention::<f64>::hidden_width(32), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform([1, 32, 4, 4], -3.0, 3.0, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let s = se.gates(&mut tape, xv).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
