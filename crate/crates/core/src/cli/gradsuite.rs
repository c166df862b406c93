//! Float64 finite-difference checks of every op family, block, the loss and
//! a tiny end-to-end detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{assign_targets, compute_loss, DetectorModel, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::metrics::{BoxXYXY, GroundTruth};
use crate::nn::{AaspBlock, C3Block, ConvBlock, Initializer, MdrcBlock, Module, SeAttention, SppfBlock, SscaBlock};
use crate::tensor::{gradcheck, gradcheck_module, ConvGeometry, Tape, Tensor, Var, DEFAULT_EPS};

pub const BLOCK_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteItem {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl SuiteItem {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `sum(y ⊙ R)` for a fixed random `R`, so that no output element is
/// weighted symmetrically.
fn project(tape: &mut Tape<f64>, y: Var) -> Result<Var> {
    let r = tape.constant(random(tape.shape(y), 99));
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

struct Suite<'a> {
    fault: Option<&'a str>,
    items: Vec<SuiteItem>,
}

impl Suite<'_> {
    fn arm(&self, tape: &mut Tape<f64>) {
        if let Some(op) = self.fault {
            tape.inject_fault(op);
        }
    }

    fn module<M: Module<f64>>(
        &mut self,
        name: &'static str,
        tolerance: f64,
        mut module: M,
        inputs: &[Tensor<f64>],
        f: impl Fn(&M, &mut Tape<f64>, &[Var]) -> Result<Var>,
    ) -> Result<()> {
        let report = gradcheck_module(
            &mut module,
            inputs,
            |m, tape, xs| {
                self.arm(tape);
                f(m, tape, xs)
            },
            DEFAULT_EPS,
        )?;
        self.items.push(SuiteItem { name, max_rel_err: report.max(), tolerance });
        Ok(())
    }
}

/// Runs every check. `fault` corrupts the backward pass of the named tape op
/// to prove the suite can fail.
pub fn gradient_suite(fault: Option<&str>) -> Result<Vec<SuiteItem>> {
    if let Some(op) = fault {
        if !crate::tensor::FAULT_OPS.contains(&op) {
            return Err(Error::Config(format!("unknown op `{op}` ({})", crate::tensor::FAULT_OPS.join("|"))));
        }
    }
    let mut suite = Suite { fault, items: Vec::new() };
    let mut init = Initializer::new(17);
    let x4 = [random(&[2, 4, 7, 7], 1)];

    let conv = init.conv::<f64>(4, 3, 3, ConvGeometry::new(2, 2, 2));
    suite.module("conv2d (dilated, strided)", BLOCK_TOLERANCE, conv, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let pool_err = gradcheck(
        |t, x| {
            suite.arm(t);
            let y = t.maxpool2d(x, 3, 1, 1)?;
            project(t, y)
        },
        &x4[0],
        DEFAULT_EPS,
    )?;
    suite.items.push(SuiteItem { name: "maxpool2d", max_rel_err: pool_err, tolerance: BLOCK_TOLERANCE });

    let block = ConvBlock::<f64>::same(&mut init, 4, 5, 3, 1);
    suite.module("ConvBlock", BLOCK_TOLERANCE, block, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let mdrc = MdrcBlock::<f64>::new(&mut init, 4, 4, &[2, 3], 1)?;
    suite.module("MDRC (residual)", BLOCK_TOLERANCE, mdrc, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let mdrc = MdrcBlock::<f64>::new(&mut init, 4, 6, &[2, 3], 2)?;
    suite.module("MDRC (stride 2)", BLOCK_TOLERANCE, mdrc, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let se = SeAttention::<f64>::new(&mut init, 4);
    suite.module("SE", BLOCK_TOLERANCE, se, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let ssca = SscaBlock::<f64>::new(&mut init, 4);
    suite.module("SSCA", BLOCK_TOLERANCE, ssca, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let aasp = AaspBlock::<f64>::new(&mut init, 4, 4);
    suite.module("AaSP", BLOCK_TOLERANCE, aasp, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let sppf = SppfBlock::<f64>::new(&mut init, 4, 4);
    suite.module("SPPF", BLOCK_TOLERANCE, sppf, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let c3 = C3Block::<f64>::new(&mut init, 4, 4, 1, None)?;
    suite.module("C3", BLOCK_TOLERANCE, c3, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let c3 = C3Block::<f64>::new(&mut init, 4, 4, 1, Some(&[2, 3]))?;
    suite.module("C3 (MDRC bottleneck)", BLOCK_TOLERANCE, c3, &x4, |m, t, xs| {
        let y = m.forward(t, xs[0])?;
        project(t, y)
    })?;

    let cfg = ModelConfig { variant: Variant::Dcap, channels: vec![2, 4, 4], image_size: 16, seed: 3, ..ModelConfig::default() };
    let gts = [
        GroundTruth { class_id: 0, bbox: BoxXYXY::new(1.0, 2.0, 8.5, 7.0) },
        GroundTruth { class_id: 1, bbox: BoxXYXY::new(9.5, 8.5, 15.0, 15.5) },
    ];
    let targets = [assign_targets(&gts, &cfg)?];
    let raw = random(&[1, cfg.head_channels(), cfg.grid_size(), cfg.grid_size()], 5);
    let loss_err = gradcheck(
        |t, x| {
            suite.arm(t);
            Ok(compute_loss(t, x, &targets, &cfg)?.total)
        },
        &raw,
        DEFAULT_EPS,
    )?;
    suite.items.push(SuiteItem { name: "detector loss", max_rel_err: loss_err, tolerance: BLOCK_TOLERANCE });

    let model = DetectorModel::<f64>::new(&cfg)?;
    let image = [random(&[1, 1, 16, 16], 6)];
    suite.module("full detector (dcap, tiny)", MODEL_TOLERANCE, model, &image, |m, t, xs| {
        let raw = m.forward(t, xs[0])?;
        Ok(compute_loss(t, raw, &targets, &m.config)?.total)
    })?;

    Ok(suite.items)
}

pub fn format_suite(items: &[SuiteItem]) -> String {
    let mut s = format!("{:<28} {:>12} {:>10}  result\n", "item", "max rel err", "tolerance");
    for it in items {
        s.push_str(&format!(
            "{:<28} {:>12.3e} {:>10.0e}  {}\n",
            it.name,
            it.max_rel_err,
            it.tolerance,
            if it.passed() { "pass" } else { "FAIL" }
        ));
    }
    s
}
