//! Multi-scale dilated residual convolution: shapes, parameter cost and the
//! identity shortcut.

use dcap::nn::{ConvBlock, Initializer, MdrcBlock, Module};
use dcap::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run<M: Fn(&mut Tape<f64>, dcap::Var) -> dcap::Result<dcap::Var>>(x: &Tensor<f64>, f: M) -> dcap::Result<Tensor<f64>> {
    let mut tape = Tape::inference();
    let v = tape.leaf(x.clone());
    let y = f(&mut tape, v)?;
    Ok(tape.value(y).clone())
}

fn main() -> dcap::Result<()> {
    let mut init = Initializer::new(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f64>::uniform([1, 8, 16, 16], -1.0, 1.0, &mut rng);

    let conv = ConvBlock::<f64>::same(&mut init, 8, 16, 3, 2);
    let down = MdrcBlock::<f64>::new(&mut init, 8, 16, &[2, 3], 2)?;
    println!("ConvBlock 8->16 s2: {:?}, {} params", run(&x, |t, v| conv.forward(t, v))?.shape(), conv.param_count());
    println!(
        "MDRC d=[2,3] 8->16 s2: {:?}, {} params, residual {}",
        run(&x, |t, v| down.forward(t, v))?.shape(),
        down.param_count(),
        down.residual()
    );

    let mut same = MdrcBlock::<f64>::new(&mut init, 8, 8, &[1, 2, 3], 1)?;
    let y = run(&x, |t, v| same.forward(t, v))?;
    println!("MDRC d=[1,2,3] 8->8 s1: residual {}, |y - x| max {:.3}", same.residual(), y.max_abs_diff(&x));
    same.zero_params();
    let y = run(&x, |t, v| same.forward(t, v))?;
    println!("with zeroed parameters: |y - x| max {:.1e}", y.max_abs_diff(&x));
    Ok(())
}
