//! Squeeze-and-excitation and SSCA gates on a random feature map, then the
//! closed forms with zeroed parameters.

use dcap::nn::{Initializer, Module, SeAttention, SscaBlock};
use dcap::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stats(t: &Tensor<f64>) -> (f64, f64) {
    t.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn main() -> dcap::Result<()> {
    let mut init = Initializer::new(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::<f64>::uniform([2, 8, 12, 12], -1.0, 1.0, &mut rng);

    let mut se = SeAttention::<f64>::new(&mut init, 8);
    let mut ssca = SscaBlock::<f64>::new(&mut init, 8);

    let mut tape = Tape::inference();
    let v = tape.leaf(x.clone());
    let gates = se.gates(&mut tape, v)?;
    let (ms, mc) = ssca.attention_maps(&mut tape, v)?;
    println!("SE gates {:?} in {:?} (hidden width {})", tape.shape(gates), stats(tape.value(gates)), SeAttention::<f64>::hidden_width(8));
    println!("SSCA spatial map {:?} in {:?}", tape.shape(ms), stats(tape.value(ms)));
    println!("SSCA channel map {:?} in {:?}", tape.shape(mc), stats(tape.value(mc)));

    se.zero_params();
    ssca.zero_params();
    let mut tape = Tape::inference();
    let v = tape.leaf(x.clone());
    let y_se = se.forward(&mut tape, v)?;
    let y_ssca = ssca.forward(&mut tape, v)?;
    let half = x.map(|a| 0.5 * a);
    let quarter = x.map(|a| 0.25 * a);
    println!("zeroed SE:   |y - x/2| max {:e}", tape.value(y_se).max_abs_diff(&half));
    println!("zeroed SSCA: |y - x/4| max {:e}", tape.value(y_ssca).max_abs_diff(&quarter));
    Ok(())
}
