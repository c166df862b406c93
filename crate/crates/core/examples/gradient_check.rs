//! Finite-difference check of every block and a tiny full detector in f64.

use dcap::cli::{format_suite, gradient_suite};
use dcap::tensor::{gradcheck, DEFAULT_EPS};
use dcap::Tensor;

fn main() -> dcap::Result<()> {
    let x = Tensor::<f64>::from_fn([1, 1, 3, 3], |i| i as f64 / 4.0 - 1.0);
    let err = gradcheck(
        |t, v| {
            let y = t.sigmoid(v);
            Ok(t.sum(y))
        },
        &x,
        DEFAULT_EPS,
    )?;
    println!("sum(sigmoid(x)): max rel err {err:.2e}\n");

    let items = gradient_suite(None)?;
    print!("{}", format_suite(&items));
    let failed = items.iter().filter(|i| !i.passed()).count();
    println!("{} of {} items within tolerance", items.len() - failed, items.len());
    Ok(())
}
