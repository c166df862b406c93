//! Binary PGM (`P5`, maxval 255). Intensities are bytes / 255.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), width * height);
        Self { width, height, pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos;
    let err = |at: usize, msg: &str| Error::parse(format!("byte {at}"), msg.to_string());
    if bytes.len() < 2 {
        return Err(err(0, "truncated header"));
    }
    match &bytes[..2] {
        b"P5" => pos = 2,
        b"P2" => return Err(err(0, "unsupported PGM format P2 (ASCII); only binary P5 is read")),
        _ => return Err(err(0, "not a PGM file (expected magic P5)")),
    }
    let mut fields = [0usize; 3];
    for (i, slot) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, &format!("expected header field {}", ["width", "height", "maxval"][i])));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are ascii")
            .parse()
            .map_err(|_| err(start, "header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected a single whitespace byte after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(err(pos, &format!("unsupported maxval {maxval}; only 255 is read")));
    }
    let need = width * height;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(err(
            pos + payload.len(),
            &format!("truncated payload: {} of {need} pixel bytes", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(err(pos + need, "trailing bytes after pixel payload"));
    }
    Ok(GrayImage::from_bytes(width, height, payload))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Parse { location, message } => Error::parse(format!("{}: {location}", path.display()), message),
        other => other,
    })
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let img = decode_pgm(b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        assert_eq!(img.pixels[0], 0.0);
        assert_eq!(img.pixels[1], 1.0);
        assert!((img.pixels[2] - 0.50196).abs() < 1e-5);
        assert!((img.pixels[3] - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn rejects_ascii_and_truncation() {
        let e = decode_pgm(b"P2\n2 2\n255\n0 1 2 3").unwrap_err();
        assert!(e.to_string().contains("unsupported"), "{e}");
        let e = decode_pgm(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
        assert!(e.to_string().contains("byte 13"), "{e}");
        assert!(decode_pgm(b"P5\n2 x\n255\n").is_err());
    }

    #[test]
    fn header_comments() {
        let img = decode_pgm(b"P5 # made by hand\n1 1\n255\n\x07").unwrap();
        assert_eq!(img.to_bytes(), vec![7]);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
            let img = GrayImage::from_bytes(w, h, &raw);
            let enc = encode_pgm(&img);
            let back = decode_pgm(&enc).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pgm(&back), enc);
        }
    }
}
