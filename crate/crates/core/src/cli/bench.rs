//! Median wall times of paired implementations on fixed shapes.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{AaspBlock, ConvBlock, Initializer, MdrcBlock, SppfBlock};
use crate::tensor::{conv2d_direct, conv2d_im2col, ConvGeometry, Tape, Tensor};

/// Largest tolerated elementwise gap between the two conv paths.
pub const CONV_AGREEMENT: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub baseline: &'static str,
    pub baseline_ms: f64,
    pub candidate: &'static str,
    pub candidate_ms: f64,
}

fn median_ms(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<Duration> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2].as_secs_f64() * 1e3
}

/// Largest `|direct − im2col|` over five seeded random shapes and geometries.
pub fn conv_agreement() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = [
        ([1, 1, 9, 9], 2, 3, ConvGeometry::new(1, 1, 1)),
        ([2, 3, 12, 10], 4, 3, ConvGeometry::new(1, 2, 2)),
        ([1, 4, 16, 16], 8, 3, ConvGeometry::new(2, 3, 3)),
        ([3, 2, 7, 11], 5, 1, ConvGeometry::pointwise()),
        ([1, 8, 20, 20], 4, 5, ConvGeometry::new(2, 2, 4)),
    ];
    let mut worst = 0.0f64;
    for (shape, cout, k, geom) in cases {
        let x = Tensor::<f32>::uniform(shape, -1.0, 1.0, &mut rng);
        let w = Tensor::<f32>::uniform([cout, shape[1], k, k], -1.0, 1.0, &mut rng);
        let b = Tensor::<f32>::uniform([cout], -1.0, 1.0, &mut rng);
        let a = conv2d_direct(&x, &w, Some(&b), geom)?;
        let c = conv2d_im2col(&x, &w, Some(&b), geom)?;
        worst = worst.max(a.max_abs_diff(&c));
    }
    if worst > CONV_AGREEMENT {
        return Err(Error::shape("bench", format!("direct and im2col conv disagree by {worst}")));
    }
    Ok(worst)
}

pub fn run_bench(reps: usize) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut init = Initializer::new(7);
    let x = Tensor::<f32>::uniform([4, 16, 32, 32], -1.0, 1.0, &mut rng);
    let w = Tensor::<f32>::uniform([16, 16, 3, 3], -0.1, 0.1, &mut rng);
    let geom = ConvGeometry::new(1, 2, 2);

    let conv_direct = median_ms(reps, || {
        conv2d_direct(&x, &w, None, geom).expect("valid shapes");
    });
    let conv_im2col = median_ms(reps, || {
        conv2d_im2col(&x, &w, None, geom).expect("valid shapes");
    });

    let forward_ms = |f: &dyn Fn(&mut Tape, crate::tensor::Var)| {
        median_ms(reps, || {
            let mut tape = Tape::inference();
            let v = tape.constant(x.clone());
            f(&mut tape, v);
        })
    };
    let plain = ConvBlock::same(&mut init, 16, 16, 3, 1);
    let mdrc = MdrcBlock::new(&mut init, 16, 16, &[2, 3], 1)?;
    let sppf = SppfBlock::new(&mut init, 16, 16);
    let aasp = AaspBlock::new(&mut init, 16, 16);
    let plain_ms = forward_ms(&|t, v| {
        plain.forward(t, v).expect("valid shapes");
    });
    let mdrc_ms = forward_ms(&|t, v| {
        mdrc.forward(t, v).expect("valid shapes");
    });
    let sppf_ms = forward_ms(&|t, v| {
        sppf.forward(t, v).expect("valid shapes");
    });
    let aasp_ms = forward_ms(&|t, v| {
        aasp.forward(t, v).expect("valid shapes");
    });

    Ok(vec![
        BenchRow { baseline: "conv2d direct", baseline_ms: conv_direct, candidate: "conv2d im2col", candidate_ms: conv_im2col },
        BenchRow { baseline: "ConvBlock 3x3", baseline_ms: plain_ms, candidate: "MDRC d=[2,3]", candidate_ms: mdrc_ms },
        BenchRow { baseline: "SPPF", baseline_ms: sppf_ms, candidate: "AaSP", candidate_ms: aasp_ms },
    ])
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<16} {:>10}   {:<16} {:>10}\n", "baseline", "median ms", "candidate", "median ms");
    for r in rows {
        s.push_str(&format!("{:<16} {:>10.3}   {:<16} {:>10.3}\n", r.baseline, r.baseline_ms, r.candidate, r.candidate_ms));
    }
    s
}
