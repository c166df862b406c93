//! Prediction files: one line per detection, `class score x1 y1 x2 y2`.

use std::path::Path;

use super::{BoxXYXY, Detection};
use crate::error::{Error, Result};

pub fn format_predictions(dets: &[Detection]) -> String {
    dets.iter()
        .map(|d| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
                d.class_id, d.score, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2
            )
        })
        .collect()
}

pub fn parse_predictions(text: &str, source: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let loc = || format!("{source}:{}", lineno + 1);
        if tokens.len() != 6 {
            return Err(Error::parse(loc(), format!("expected 6 fields, found {}", tokens.len())));
        }
        let class_id = tokens[0].parse::<usize>().map_err(|_| Error::parse(loc(), format!("bad class `{}`", tokens[0])))?;
        let mut v = [0.0; 5];
        for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
            *slot = tok.parse::<f64>().map_err(|_| Error::parse(loc(), format!("bad number `{tok}`")))?;
        }
        let bbox = BoxXYXY::new(v[1], v[2], v[3], v[4]);
        if !bbox.is_valid() || !(0.0..=1.0).contains(&v[0]) {
            return Err(Error::parse(loc(), "score outside [0,1] or inverted box"));
        }
        out.push(Detection { bbox, score: v[0], class_id });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, &path.display().to_string())
}

pub fn write_predictions(path: &Path, dets: &[Detection]) -> Result<()> {
    std::fs::write(path, format_predictions(dets)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let d = parse_predictions("0 0.5 1 2 3 4\n\n1 0.25 0 0 10 10\n", "p").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].class_id, 1);
        let e = parse_predictions("0 0.5 1 2 3\n", "p").unwrap_err();
        assert!(e.to_string().starts_with("p:1"));
        assert!(parse_predictions("0 0.5 5 5 1 1\n", "p").is_err());
    }
}
