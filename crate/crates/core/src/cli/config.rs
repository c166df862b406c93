//! `key = value` run configuration covering the model, the synthetic corpus
//! and training. `#` starts a comment; unknown and repeated keys are errors.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use crate::data::{Range, SynthSpec};
use crate::detector::{ModelConfig, TrainConfig, NMS_CONF, NMS_IOU};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    /// Thresholds applied by `predict`.
    pub conf_thresh: f64,
    pub nms_iou: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            synth: SynthSpec::default(),
            train: TrainConfig::default(),
            conf_thresh: NMS_CONF,
            nms_iou: NMS_IOU,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "variant",
    "dilations",
    "mdrc_placement",
    "channels",
    "num_classes",
    "image_size",
    "anchor",
    "seed",
    "count",
    "objects_per_image",
    "object_size",
    "wavelength",
    "amplitude",
    "orientation",
    "ellipse_fraction",
    "clutter_count",
    "clutter_intensity",
    "background",
    "noise_sigma",
    "grid_cell",
    "data_seed",
    "epochs",
    "lr",
    "momentum",
    "batch_size",
    "warmup_epochs",
    "grad_clip",
    "conf_thresh",
    "nms_iou",
];

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|t| scalar(t.trim())).collect()
}

fn range<T: FromStr + PartialOrd + Copy>(v: &str) -> std::result::Result<Range<T>, String> {
    let (lo, hi) = v.split_once("..").ok_or_else(|| format!("expected `lo..hi`, got `{v}`"))?;
    let r = Range::new(scalar(lo.trim())?, scalar(hi.trim())?);
    if !r.is_valid() {
        return Err(format!("empty range `{v}`"));
    }
    Ok(r)
}

fn pair(v: &str) -> std::result::Result<(f64, f64), String> {
    match list::<f64>(v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected `w,h`, got `{v}`")),
    }
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = || format!("{source}:{}", lineno + 1);
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::parse(loc(), format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::parse(loc(), format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(loc(), format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|m| Error::parse(loc(), format!("{key}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let (m, s, t) = (&mut self.model, &mut self.synth, &mut self.train);
        match key {
            "variant" => m.variant = v.parse().map_err(|e: Error| e.to_string())?,
            "dilations" => m.dilations = list(v)?,
            "mdrc_placement" => m.mdrc_placement = v.parse().map_err(|e: Error| e.to_string())?,
            "channels" => m.channels = list(v)?,
            "num_classes" => m.num_classes = scalar(v)?,
            "image_size" => {
                m.image_size = scalar(v)?;
                s.image_size = m.image_size;
            }
            "anchor" => m.anchor = pair(v)?,
            "seed" => {
                m.seed = scalar(v)?;
                t.seed = m.seed;
            }
            "count" => s.count = scalar(v)?,
            "objects_per_image" => s.objects_per_image = range(v)?,
            "object_size" => s.object_size = range(v)?,
            "wavelength" => s.wavelength = range(v)?,
            "amplitude" => s.amplitude = range(v)?,
            "orientation" => s.orientation = range(v)?,
            "ellipse_fraction" => s.ellipse_fraction = scalar(v)?,
            "clutter_count" => s.clutter_count = range(v)?,
            "clutter_intensity" => s.clutter_intensity = range(v)?,
            "background" => s.background = scalar(v)?,
            "noise_sigma" => s.noise_sigma = scalar(v)?,
            "grid_cell" => s.grid_cell = scalar(v)?,
            "data_seed" => s.seed = scalar(v)?,
            "epochs" => t.epochs = scalar(v)?,
            "lr" => t.lr = scalar(v)?,
            "momentum" => t.momentum = scalar(v)?,
            "batch_size" => t.batch_size = scalar(v)?,
            "warmup_epochs" => t.warmup_epochs = scalar(v)?,
            "grad_clip" => t.grad_clip = scalar(v)?,
            "conf_thresh" => self.conf_thresh = scalar(v)?,
            "nms_iou" => self.nms_iou = scalar(v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.synth.validate()?;
        self.train.validate()?;
        for (name, v) in [("conf_thresh", self.conf_thresh), ("nms_iou", self.nms_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let (m, s, t) = (&self.model, &self.synth, &self.train);
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let r = |r: Range<f64>| format!("{}..{}", r.lo, r.hi);
        let ru = |r: Range<usize>| format!("{}..{}", r.lo, r.hi);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("variant", m.variant.to_string());
        kv("dilations", join(&m.dilations));
        kv("mdrc_placement", m.mdrc_placement.to_string());
        kv("channels", join(&m.channels));
        kv("num_classes", m.num_classes.to_string());
        kv("image_size", m.image_size.to_string());
        kv("anchor", format!("{},{}", m.anchor.0, m.anchor.1));
        kv("seed", m.seed.to_string());
        kv("count", s.count.to_string());
        kv("objects_per_image", ru(s.objects_per_image));
        kv("object_size", r(s.object_size));
        kv("wavelength", r(s.wavelength));
        kv("amplitude", r(s.amplitude));
        kv("orientation", r(s.orientation));
        kv("ellipse_fraction", s.ellipse_fraction.to_string());
        kv("clutter_count", ru(s.clutter_count));
        kv("clutter_intensity", r(s.clutter_intensity));
        kv("background", s.background.to_string());
        kv("noise_sigma", s.noise_sigma.to_string());
        kv("grid_cell", s.grid_cell.to_string());
        kv("data_seed", s.seed.to_string());
        kv("epochs", t.epochs.to_string());
        kv("lr", t.lr.to_string());
        kv("momentum", t.momentum.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("warmup_epochs", t.warmup_epochs.to_string());
        kv("grad_clip", t.grad_clip.to_string());
        kv("conf_thresh", self.conf_thresh.to_string());
        kv("nms_iou", self.nms_iou.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{MdrcPlacement, Variant};

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(
            "# tiny run\nvariant = base\nmdrc_placement=c3_layers\ndilations = 2\nobject_size = 10..20 # px\nseed = 4\nepochs = 3\nanchor = 12,20\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.model.variant, Variant::Base);
        assert_eq!(cfg.model.mdrc_placement, MdrcPlacement::C3Layers);
        assert_eq!(cfg.model.dilations, vec![2]);
        assert_eq!(cfg.synth.object_size, Range::new(10.0, 20.0));
        assert_eq!((cfg.model.seed, cfg.train.seed), (4, 4));
        assert_eq!(cfg.model.anchor, (12.0, 20.0));
        assert_eq!(RunConfig::parse(&cfg.to_text(), "again").unwrap(), cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text(), "d").unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let e = RunConfig::parse("epochs = 1\nfoo = 2\n", "c").unwrap_err();
        assert_eq!(e.to_string(), "c:2: unknown key `foo`");
        assert!(RunConfig::parse("lr = 1\nlr = 2\n", "c").unwrap_err().to_string().contains("duplicate"));
        assert!(RunConfig::parse("lr 0.1\n", "c").is_err());
        assert!(RunConfig::parse("epochs = many\n", "c").is_err());
        assert!(RunConfig::parse("object_size = 20..10\n", "c").is_err());
        assert!(matches!(RunConfig::parse("image_size = 60\n", "c"), Err(Error::Config(_))));
    }

    #[test]
    fn every_key_is_settable() {
        let text = RunConfig::default().to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, CONFIG_KEYS);
    }
}
