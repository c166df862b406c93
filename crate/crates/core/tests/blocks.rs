//! Blocks against straight-line loop implementations built from the naive
//! convolution and pooling oracles.

mod common;

use common::{naive_conv, naive_same_maxpool};
use dcap::nn::{AaspBlock, ConvBlock, ConvParams, DenseParams, Initializer, MdrcBlock, SeAttention, SppfBlock, SscaBlock};
use dcap::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn silu(v: f64) -> f64 {
    v * sigmoid(v)
}

fn conv(p: &ConvParams<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let g = p.geom;
    naive_conv(x, p.weight.value(), Some(p.bias.value().data()), g.stride, g.dilation, g.padding)
}

fn conv_block(b: &ConvBlock<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    conv(&b.conv, x).map(silu)
}

fn concat(parts: &[Tensor<f64>]) -> Tensor<f64> {
    let (n, h, w) = (parts[0].shape()[0], parts[0].shape()[2], parts[0].shape()[3]);
    let c: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for p in parts {
            let per = p.shape()[1] * h * w;
            data.extend_from_slice(&p.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::new([n, c, h, w], data).unwrap()
}

/// `x[n,c,:,:] * g[n,c]` for gates shaped `N×C` or `N×C×1×1`.
fn scale_channels(x: &Tensor<f64>, gates: &[f64]) -> Tensor<f64> {
    let hw = x.shape()[2] * x.shape()[3];
    Tensor::from_fn(x.shape().to_vec(), |i| x.data()[i] * gates[i / hw])
}

fn channel_means(x: &Tensor<f64>) -> Vec<f64> {
    let hw = x.shape()[2] * x.shape()[3];
    x.data().chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect()
}

fn dense(p: &DenseParams<f64>, input: &[f64]) -> Vec<f64> {
    let (f, g) = (p.weight.value().shape()[0], p.weight.value().shape()[1]);
    let w = p.weight.value().data();
    (0..g).map(|j| p.bias.value().data()[j] + (0..f).map(|i| input[i] * w[i * g + j]).sum::<f64>()).collect()
}

fn se(b: &SeAttention<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let c = x.shape()[1];
    let gates: Vec<f64> = channel_means(x)
        .chunks(c)
        .flat_map(|z| {
            let h: Vec<f64> = dense(&b.squeeze, z).into_iter().map(|v| v.max(0.0)).collect();
            dense(&b.excite, &h).into_iter().map(sigmoid)
        })
        .collect();
    scale_channels(x, &gates)
}

fn run(x: &Tensor<f64>, f: impl Fn(&mut Tape<f64>, dcap::Var) -> dcap::Result<dcap::Var>) -> Tensor<f64> {
    let mut tape = Tape::inference();
    let v = tape.leaf(x.clone());
    let y = f(&mut tape, v).unwrap();
    tape.value(y).clone()
}

fn random_input(rng: &mut ChaCha8Rng, c: usize) -> Tensor<f64> {
    Tensor::uniform([2, c, rng.gen_range(5..11), rng.gen_range(5..11)], -2.0, 2.0, rng)
}

#[test]
fn mdrc_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut init = Initializer::new(1);
    for (c1, c2, dilations, stride) in [(3, 3, vec![1, 2, 3], 1), (3, 5, vec![2, 3], 2), (4, 4, vec![2], 1)] {
        let block = MdrcBlock::<f64>::new(&mut init, c1, c2, &dilations, stride).unwrap();
        let x = random_input(&mut rng, c1);
        let branches: Vec<Tensor<f64>> = block.branches.iter().map(|b| conv_block(b, &x)).collect();
        let mut expect = conv_block(&block.fuse, &concat(&branches));
        if c1 == c2 && stride == 1 {
            expect = Tensor::from_fn(expect.shape().to_vec(), |i| expect.data()[i] + x.data()[i]);
        }
        let got = run(&x, |t, v| block.forward(t, v));
        assert!(got.max_abs_diff(&expect) < TOL, "mdrc {c1}->{c2} d{dilations:?} s{stride}");
    }
}

#[test]
fn se_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut init = Initializer::new(2);
    for c in [1, 5, 32, 40] {
        let block = SeAttention::<f64>::new(&mut init, c);
        let x = random_input(&mut rng, c);
        assert!(run(&x, |t, v| block.forward(t, v)).max_abs_diff(&se(&block, &x)) < TOL, "se c={c}");
    }
}

#[test]
fn ssca_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut init = Initializer::new(3);
    for c in [1, 4, 9] {
        let block = SscaBlock::<f64>::new(&mut init, c);
        let x = random_input(&mut rng, c);
        let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let spatial = conv(&block.spatial_conv, &x).map(sigmoid);
        let pooled = Tensor::new([n, c, 1, 1], channel_means(&x)).unwrap();
        let channel = conv(&block.channel_conv, &pooled).map(sigmoid);
        let expect = Tensor::from_fn([n, c, h, w], |i| {
            let (b, rem) = (i / (c * h * w), i % (c * h * w));
            let (ch, yx) = (rem / (h * w), rem % (h * w));
            x.data()[i] * spatial.data()[b * h * w + yx] * channel.data()[b * c + ch]
        });
        assert!(run(&x, |t, v| block.forward(t, v)).max_abs_diff(&expect) < TOL, "ssca c={c}");
    }
}

#[test]
fn aasp_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut init = Initializer::new(4);
    for (c1, c2) in [(4, 4), (6, 3), (1, 8)] {
        let block = AaspBlock::<f64>::new(&mut init, c1, c2);
        let x = random_input(&mut rng, c1);
        let x1 = conv_block(&block.reduce, &x);
        let y1 = naive_same_maxpool(&x1, block.pool_kernels.0);
        let y2 = naive_same_maxpool(&y1, block.pool_kernels.1);
        let fused = conv_block(&block.fuse, &concat(&[x1, y1, y2]));
        let expect = se(&block.se, &fused);
        assert!(run(&x, |t, v| block.forward(t, v)).max_abs_diff(&expect) < TOL, "aasp {c1}->{c2}");
    }
}

#[test]
fn sppf_matches_parallel_pool_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut init = Initializer::new(5);
    let block = SppfBlock::<f64>::new(&mut init, 6, 6);
    let x = random_input(&mut rng, 6);
    let x1 = conv_block(&block.reduce, &x);
    let pools = [5, 9, 13].map(|k| naive_same_maxpool(&x1, k));
    let expect = conv_block(&block.fuse, &concat(&[x1.clone(), pools[0].clone(), pools[1].clone(), pools[2].clone()]));
    assert!(run(&x, |t, v| block.forward(t, v)).max_abs_diff(&expect) < TOL);
}
