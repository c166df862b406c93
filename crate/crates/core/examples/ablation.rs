//! A reduced ablation grid through the library entry points the CLI uses.
//!
//! `cargo run --release --example ablation -- [EPOCHS] [SEEDS]`

use dcap::cli::{cmd_ablate, cmd_generate, format_ablation, RunConfig};
use dcap::data::SplitName;
use dcap::detector::TrainConfig;

fn main() -> dcap::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let bad = |e: std::num::ParseIntError| dcap::Error::Config(e.to_string());
    let epochs = args.next().unwrap_or(Ok(20)).map_err(bad)?;
    let seeds = args.next().unwrap_or(Ok(2)).map_err(bad)?;

    let mut cfg = RunConfig::default();
    cfg.synth.count = 60;
    cfg.train = TrainConfig { epochs, lr: 0.03, warmup_epochs: 3, grad_clip: 10.0, ..cfg.train };
    let dir = tempfile::tempdir().map_err(|source| dcap::Error::Io { path: std::env::temp_dir(), source })?;
    cmd_generate(&cfg, dir.path())?;

    let names: Vec<String> = ["base", "mdrc_conv", "mdrc_c3", "dcap"].map(String::from).to_vec();
    let rows = cmd_ablate(&cfg, dir.path(), &names, seeds, SplitName::Val)?;
    let (table, _) = format_ablation(&rows)?;
    print!("{table}");
    Ok(())
}
