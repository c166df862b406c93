//! Chained 5×5 pools reproduce parallel 5/9/13 pools; SPPF and AaSP necks
//! side by side.

use dcap::nn::{AaspBlock, Initializer, Module, SppfBlock};
use dcap::tensor::maxpool2d;
use dcap::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dcap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::<f64>::uniform([1, 4, 16, 16], -1.0, 1.0, &mut rng);

    let mut chained = x.clone();
    for k in [5, 9, 13] {
        chained = maxpool2d(&chained, 5, 1, 2)?.0;
        let wide = maxpool2d(&x, k, 1, k / 2)?.0;
        println!("{} chained 5×5 pools vs one {k}×{k} pool: max diff {}", (k - 1) / 4, chained.max_abs_diff(&wide));
    }

    let mut init = Initializer::new(6);
    let sppf = SppfBlock::<f64>::new(&mut init, 4, 8);
    let aasp = AaspBlock::<f64>::new(&mut init, 4, 8);
    let mut tape = Tape::inference();
    let v = tape.leaf(x);
    let a = sppf.forward(&mut tape, v)?;
    let pooled = aasp.pooled(&mut tape, v)?;
    let b = aasp.forward(&mut tape, v)?;
    println!("SPPF: {:?}, {} params", tape.shape(a), sppf.param_count());
    println!("AaSP: {:?} before SE, {:?} after, {} params", tape.shape(pooled), tape.shape(b), aasp.param_count());
    Ok(())
}
