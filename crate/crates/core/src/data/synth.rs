//! Synthetic single-band scenes: textured wave patches and ellipses as
//! objects (class 0), small bright blobs and streaks as noise (class 1).

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::LabeledImage;
use super::labels::{format_labels, xyxy_to_cxcywh};
use super::pgm::{write_pgm, GrayImage};
use crate::error::{Error, Result};
use crate::metrics::{BoxXYXY, GroundTruth};
use crate::par::par_map;

/// Pixels brighter than this (above background) belong to an instance mask.
pub const MASK_THRESHOLD: f64 = 0.05;

const LAYOUT_ATTEMPTS: usize = 64;
const PLACEMENT_ATTEMPTS: usize = 200;

/// Inclusive range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi
    }
}

impl Range<f64> {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }
}

impl Range<usize> {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.lo..=self.hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub count: usize,
    pub image_size: usize,
    pub objects_per_image: Range<usize>,
    /// Extent of object patches, pixels.
    pub object_size: Range<f64>,
    pub wavelength: Range<f64>,
    pub amplitude: Range<f64>,
    /// Stripe orientation, radians.
    pub orientation: Range<f64>,
    /// Probability that an object is a filled ellipse instead of a wave patch.
    pub ellipse_fraction: f64,
    pub clutter_count: Range<usize>,
    pub clutter_intensity: Range<f64>,
    pub background: f64,
    pub noise_sigma: f64,
    /// Box centers must land in distinct cells of this grid.
    pub grid_cell: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 64,
            image_size: 64,
            objects_per_image: Range::new(1, 2),
            object_size: Range::new(16.0, 34.0),
            wavelength: Range::new(4.0, 8.0),
            amplitude: Range::new(0.35, 0.6),
            orientation: Range::new(0.0, PI),
            ellipse_fraction: 0.3,
            clutter_count: Range::new(0, 2),
            clutter_intensity: Range::new(0.45, 0.8),
            background: 0.15,
            noise_sigma: 0.04,
            grid_cell: 8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.count == 0 {
            return bad("count must be positive");
        }
        if self.image_size < 16 {
            return bad("image_size must be at least 16");
        }
        if self.grid_cell == 0 {
            return bad("grid_cell must be positive");
        }
        if !self.objects_per_image.is_valid() || self.objects_per_image.lo == 0 {
            return bad("objects_per_image must be a non-empty range starting at 1 or more");
        }
        if !self.clutter_count.is_valid() {
            return bad("clutter_count range is empty");
        }
        for (name, r) in [
            ("object_size", self.object_size),
            ("wavelength", self.wavelength),
            ("amplitude", self.amplitude),
            ("orientation", self.orientation),
            ("clutter_intensity", self.clutter_intensity),
        ] {
            if !r.is_valid() || !r.lo.is_finite() || !r.hi.is_finite() {
                return bad(&format!("{name} range is empty"));
            }
        }
        if self.object_size.lo < 4.0 || self.wavelength.lo <= 0.0 {
            return bad("object_size must be at least 4 and wavelength positive");
        }
        if self.object_size.hi > self.image_size as f64 - 2.0 {
            return bad("object_size exceeds the image");
        }
        if self.amplitude.lo <= MASK_THRESHOLD || self.clutter_intensity.lo <= MASK_THRESHOLD {
            return bad("amplitudes must exceed the mask threshold");
        }
        if !(0.0..=1.0).contains(&self.ellipse_fraction) {
            return bad("ellipse_fraction must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&self.background) {
            return bad("noise_sigma must be non-negative and background in [0, 1]");
        }
        Ok(())
    }
}

/// One rendered instance. Coordinates are in pixels, pixel `(x, y)` spans
/// `[x, x+1) × [y, y+1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InstanceKind {
    Wave { cx: f64, cy: f64, w: f64, h: f64, theta: f64, wavelength: f64, amp: f64 },
    Ellipse { cx: f64, cy: f64, w: f64, h: f64, amp: f64 },
    Blob { cx: f64, cy: f64, sigma: f64, amp: f64 },
    Streak { x0: f64, y0: f64, x1: f64, y1: f64, amp: f64 },
}

const STREAK_SIGMA: f64 = 1.2;

impl InstanceKind {
    pub fn class_id(&self) -> usize {
        match self {
            InstanceKind::Wave { .. } | InstanceKind::Ellipse { .. } => 0,
            InstanceKind::Blob { .. } | InstanceKind::Streak { .. } => 1,
        }
    }

    /// Support of the pattern; the intensity is zero outside it.
    pub fn support(&self) -> BoxXYXY {
        match *self {
            InstanceKind::Wave { cx, cy, w, h, .. } | InstanceKind::Ellipse { cx, cy, w, h, .. } => {
                BoxXYXY::from_center(cx, cy, w, h)
            }
            InstanceKind::Blob { cx, cy, sigma, .. } => BoxXYXY::from_center(cx, cy, 6.0 * sigma, 6.0 * sigma),
            InstanceKind::Streak { x0, y0, x1, y1, .. } => {
                let r = 3.0 * STREAK_SIGMA;
                BoxXYXY::new(x0.min(x1) - r, y0.min(y1) - r, x0.max(x1) + r, y0.max(y1) + r)
            }
        }
    }

    /// Intensity added at the point `(px, py)`.
    pub fn intensity(&self, px: f64, py: f64) -> f64 {
        match *self {
            InstanceKind::Wave { cx, cy, w, h, theta, wavelength, amp } => {
                let (dx, dy) = (px - cx, py - cy);
                let r2 = (dx / (w / 2.0)).powi(2) + (dy / (h / 2.0)).powi(2);
                if r2 >= 1.0 {
                    return 0.0;
                }
                let u = dx * theta.cos() + dy * theta.sin();
                let stripe = 0.5 + 0.5 * (2.0 * PI * u / wavelength).cos();
                amp * (1.0 - r2).sqrt() * (0.35 + 0.65 * stripe)
            }
            InstanceKind::Ellipse { cx, cy, w, h, amp } => {
                let r2 = ((px - cx) / (w / 2.0)).powi(2) + ((py - cy) / (h / 2.0)).powi(2);
                if r2 >= 1.0 {
                    0.0
                } else {
                    amp * (0.5 + 0.5 * r2)
                }
            }
            InstanceKind::Blob { cx, cy, sigma, amp } => {
                let d2 = (px - cx).powi(2) + (py - cy).powi(2);
                if d2 > (3.0 * sigma).powi(2) {
                    0.0
                } else {
                    amp * (-d2 / (2.0 * sigma * sigma)).exp()
                }
            }
            InstanceKind::Streak { x0, y0, x1, y1, amp } => {
                let (vx, vy) = (x1 - x0, y1 - y0);
                let t = (((px - x0) * vx + (py - y0) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
                let d2 = (px - x0 - t * vx).powi(2) + (py - y0 - t * vy).powi(2);
                if d2 > (3.0 * STREAK_SIGMA).powi(2) {
                    0.0
                } else {
                    amp * (-d2 / (2.0 * STREAK_SIGMA * STREAK_SIGMA)).exp()
                }
            }
        }
    }
}

/// Nonzero pixels of an instance as `(x, y, intensity)`, sampled at pixel
/// centers and cropped to a `size × size` image.
pub fn render_instance(kind: &InstanceKind, size: usize) -> Vec<(usize, usize, f64)> {
    let s = kind.support().clip(size as f64, size as f64);
    let mut out = Vec::new();
    for y in s.y1.floor().max(0.0) as usize..(s.y2.ceil() as usize).min(size) {
        for x in s.x1.floor().max(0.0) as usize..(s.x2.ceil() as usize).min(size) {
            let v = kind.intensity(x as f64 + 0.5, y as f64 + 0.5);
            if v > 0.0 {
                out.push((x, y, v));
            }
        }
    }
    out
}

/// Tight box around the super-threshold mask, or `None` if the mask is empty.
fn tight_box(kind: &InstanceKind, size: usize) -> Option<BoxXYXY> {
    let mut b: Option<BoxXYXY> = None;
    for (x, y, v) in render_instance(kind, size) {
        if v > MASK_THRESHOLD {
            let (x, y) = (x as f64, y as f64);
            b = Some(match b {
                None => BoxXYXY::new(x, y, x + 1.0, y + 1.0),
                Some(b) => BoxXYXY::new(b.x1.min(x), b.y1.min(y), b.x2.max(x + 1.0), b.y2.max(y + 1.0)),
            });
        }
    }
    b
}

fn sample_object(spec: &SynthSpec, rng: &mut impl Rng) -> InstanceKind {
    let size = spec.image_size as f64;
    let w = spec.object_size.sample(rng);
    let h = spec.object_size.sample(rng);
    let cx = rng.gen_range(w / 2.0 + 1.0..=size - w / 2.0 - 1.0);
    let cy = rng.gen_range(h / 2.0 + 1.0..=size - h / 2.0 - 1.0);
    let amp = spec.amplitude.sample(rng);
    if rng.gen_bool(spec.ellipse_fraction) {
        InstanceKind::Ellipse { cx, cy, w, h, amp }
    } else {
        let theta = spec.orientation.sample(rng);
        let wavelength = spec.wavelength.sample(rng);
        InstanceKind::Wave { cx, cy, w, h, theta, wavelength, amp }
    }
}

fn sample_clutter(spec: &SynthSpec, rng: &mut impl Rng) -> InstanceKind {
    let size = spec.image_size as f64;
    let amp = spec.clutter_intensity.sample(rng);
    if rng.gen_bool(0.5) {
        let sigma = rng.gen_range(2.0..3.0);
        let m = 3.0 * sigma + 1.0;
        InstanceKind::Blob { cx: rng.gen_range(m..size - m), cy: rng.gen_range(m..size - m), sigma, amp }
    } else {
        let len = rng.gen_range(12.0..20.0);
        let phi: f64 = rng.gen_range(0.0..PI);
        let (hx, hy) = (phi.cos() * len / 2.0, phi.sin() * len / 2.0);
        let m = 3.0 * STREAK_SIGMA + 1.0;
        let cx = rng.gen_range(hx.abs() + m..size - hx.abs() - m);
        let cy = rng.gen_range(hy.abs() + m..size - hy.abs() - m);
        InstanceKind::Streak { x0: cx - hx, y0: cy - hy, x1: cx + hx, y1: cy + hy, amp }
    }
}

fn disjoint(a: &BoxXYXY, b: &BoxXYXY) -> bool {
    a.x2 + 1.0 <= b.x1 || b.x2 + 1.0 <= a.x1 || a.y2 + 1.0 <= b.y1 || b.y2 + 1.0 <= a.y1
}

fn try_layout(spec: &SynthSpec, rng: &mut impl Rng) -> Option<Vec<(InstanceKind, BoxXYXY)>> {
    let n_obj = spec.objects_per_image.sample(rng);
    let n_clutter = spec.clutter_count.sample(rng);
    let mut placed: Vec<(InstanceKind, BoxXYXY)> = Vec::new();
    for i in 0..n_obj + n_clutter {
        let mut ok = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let kind = if i < n_obj { sample_object(spec, rng) } else { sample_clutter(spec, rng) };
            let support = kind.support();
            if placed.iter().any(|(k, _)| !disjoint(&k.support(), &support)) {
                continue;
            }
            let Some(tight) = tight_box(&kind, spec.image_size) else { continue };
            let cell = |b: &BoxXYXY| {
                let (x, y) = b.center();
                ((x / spec.grid_cell as f64) as usize, (y / spec.grid_cell as f64) as usize)
            };
            if placed.iter().any(|(_, b)| cell(b) == cell(&tight)) {
                continue;
            }
            placed.push((kind, tight));
            ok = true;
            break;
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Image `index` of the corpus described by `spec`, with its instances.
pub fn synth_image(spec: &SynthSpec, index: usize) -> Result<(LabeledImage, Vec<InstanceKind>)> {
    spec.validate()?;
    let mut rng = image_rng(spec.seed, index);
    let layout = (0..LAYOUT_ATTEMPTS).find_map(|_| try_layout(spec, &mut rng)).ok_or_else(|| {
        Error::Generation(format!(
            "image {index}: could not place {}..{} objects and {}..{} noise instances in {}x{} after {LAYOUT_ATTEMPTS} attempts",
            spec.objects_per_image.lo,
            spec.objects_per_image.hi,
            spec.clutter_count.lo,
            spec.clutter_count.hi,
            spec.image_size,
            spec.image_size
        ))
    })?;
    let size = spec.image_size;
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut canvas: Vec<f64> = (0..size * size).map(|_| spec.background + noise.sample(&mut rng)).collect();
    for (kind, _) in &layout {
        for (x, y, v) in render_instance(kind, size) {
            canvas[y * size + x] += v;
        }
    }
    let bytes: Vec<u8> = canvas.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let image = LabeledImage {
        id: format!("img_{index:04}"),
        image: GrayImage::from_bytes(size, size, &bytes),
        boxes: layout.iter().map(|(k, b)| GroundTruth { class_id: k.class_id(), bbox: *b }).collect(),
    };
    Ok((image, layout.into_iter().map(|(k, _)| k).collect()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub objects: usize,
    pub noise: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,objects,noise\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{}\n", e.id, e.objects, e.noise));
        }
        s
    }
}

/// Writes `images/`, `labels/` and `manifest.csv` under `out_dir`.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    let labels_dir = out_dir.join("labels");
    for d in [&images_dir, &labels_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let indices: Vec<usize> = (0..spec.count).collect();
    let entries = par_map(&indices, |_, &i| -> Result<ManifestEntry> {
        let (img, _) = synth_image(spec, i)?;
        write_pgm(&images_dir.join(format!("{}.pgm", img.id)), &img.image)?;
        let lines = img
            .boxes
            .iter()
            .map(|g| xyxy_to_cxcywh(g.class_id, &g.bbox, spec.image_size as f64))
            .collect::<Result<Vec<_>>>()?;
        let label_path = labels_dir.join(format!("{}.txt", img.id));
        std::fs::write(&label_path, format_labels(&lines)).map_err(|e| Error::io(&label_path, e))?;
        let objects = img.boxes.iter().filter(|g| g.class_id == 0).count();
        Ok(ManifestEntry { id: img.id, objects, noise: img.boxes.len() - objects })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries };
    let path = out_dir.join("manifest.csv");
    std::fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_box_is_in_bounds_and_covers_its_mask() {
        let spec = SynthSpec { count: 40, seed: 11, ..SynthSpec::default() };
        for i in 0..spec.count {
            let (img, kinds) = synth_image(&spec, i).unwrap();
            for (g, k) in img.boxes.iter().zip(&kinds) {
                assert!(g.bbox.is_valid() && g.bbox.x1 >= 0.0 && g.bbox.x2 <= 64.0 && g.bbox.y2 <= 64.0);
                let mask: Vec<_> = render_instance(k, 64).into_iter().filter(|p| p.2 > MASK_THRESHOLD).collect();
                let inside = mask
                    .iter()
                    .filter(|(x, y, _)| {
                        (*x as f64) >= g.bbox.x1
                            && (*x as f64 + 1.0) <= g.bbox.x2
                            && (*y as f64) >= g.bbox.y1
                            && (*y as f64 + 1.0) <= g.bbox.y2
                    })
                    .count();
                assert!(inside as f64 >= 0.9 * mask.len() as f64);
            }
        }
    }

    #[test]
    fn single_object_no_clutter() {
        let spec = SynthSpec {
            count: 8,
            objects_per_image: Range::new(1, 1),
            clutter_count: Range::new(0, 0),
            ..SynthSpec::default()
        };
        for i in 0..spec.count {
            let (img, _) = synth_image(&spec, i).unwrap();
            assert_eq!(img.boxes.len(), 1);
            assert_eq!(img.boxes[0].class_id, 0);
        }
    }

    #[test]
    fn crowded_spec_fails_to_place() {
        let spec = SynthSpec {
            objects_per_image: Range::new(9, 9),
            object_size: Range::new(30.0, 30.0),
            ..SynthSpec::default()
        };
        assert!(matches!(synth_image(&spec, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_ranges() {
        let spec = SynthSpec { amplitude: Range::new(0.5, 0.4), ..SynthSpec::default() };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
