//! Renders a small single-band corpus with YOLO labels and a 70/20/10 split.
//!
//! `cargo run --release --example synthetic_corpus -- OUT_DIR`

use dcap::data::{read_split, split_dataset, synth_generate, write_splits, SplitName, SynthSpec, CLASS_NAMES};

fn main() -> dcap::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dcap_corpus"));
    let spec = SynthSpec { count: 40, seed: 11, ..SynthSpec::default() };
    let manifest = synth_generate(&spec, &out)?;
    let split = split_dataset(&manifest.ids(), spec.seed)?;
    write_splits(&out.join("splits"), &split)?;

    let objects: usize = manifest.entries.iter().map(|e| e.objects).sum();
    println!("{} images, {objects} objects of classes {:?} in {}", manifest.entries.len(), CLASS_NAMES, out.display());
    for name in [SplitName::Train, SplitName::Val, SplitName::Test] {
        println!("  {name}: {} images", read_split(&out.join("splits"), name)?.len());
    }
    let first = &manifest.entries[0].id;
    let label = std::fs::read_to_string(out.join("labels").join(format!("{first}.txt"))).map_err(|e| dcap::Error::Data(e.to_string()))?;
    print!("labels/{first}.txt:\n{label}");
    Ok(())
}
