//! Impulse response of a dilated 3×3 convolution and agreement of the two
//! conv paths.

use dcap::tensor::{conv2d_direct, conv2d_im2col, conv_output_extent, ConvGeometry};
use dcap::Tensor;

fn main() -> dcap::Result<()> {
    let size = 11;
    let mut impulse = Tensor::<f64>::zeros([1, 1, size, size]);
    impulse.data_mut()[(size / 2) * size + size / 2] = 1.0;
    let ones = Tensor::<f64>::ones([1, 1, 3, 3]);

    for d in 1..=3 {
        let geom = ConvGeometry::new(1, d, d);
        let y = conv2d_direct(&impulse, &ones, None, geom)?;
        println!("dilation {d}: receptive field {}×{}", 2 * d + 1, 2 * d + 1);
        for row in 0..size {
            let line: String = (0..size).map(|col| if y.at4(0, 0, row, col) > 0.0 { '#' } else { '.' }).collect();
            println!("  {line}");
        }
        let fast = conv2d_im2col(&impulse, &ones, None, geom)?;
        println!("  im2col vs direct max diff {:.1e}", y.max_abs_diff(&fast));
    }

    let geom = ConvGeometry::new(2, 2, 2);
    println!("64 px input, k=3 d=2 pad=2 stride=2 -> {} px", conv_output_extent(64, 3, geom)?);
    Ok(())
}
