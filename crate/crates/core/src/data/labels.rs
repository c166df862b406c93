//! Normalized `class cx cy w h` label lines and conversion to pixel boxes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{BoxXYXY, GroundTruth};

/// Tolerance for boxes that poke outside `[0, 1]` through rounding.
pub const LABEL_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YoloLabelLine {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloLabelLine {
    fn validate(&self, num_classes: usize) -> std::result::Result<(), String> {
        if self.class_id >= num_classes {
            return Err(format!("class {} out of range (0..{num_classes})", self.class_id));
        }
        if !(self.w > 0.0) {
            return Err("zero-width box".into());
        }
        if !(self.h > 0.0) {
            return Err("zero-height box".into());
        }
        let inside = |c: f64, half: f64| c - half >= -LABEL_SLACK && c + half <= 1.0 + LABEL_SLACK;
        if !inside(self.cx, self.w / 2.0) || !inside(self.cy, self.h / 2.0) {
            return Err("box escapes the unit square".into());
        }
        Ok(())
    }
}

pub fn xyxy_to_cxcywh(class_id: usize, b: &BoxXYXY, img_size: f64) -> Result<YoloLabelLine> {
    if !(b.width() > 0.0 && b.height() > 0.0) {
        return Err(Error::Data(format!("zero-area box {b:?}")));
    }
    Ok(YoloLabelLine {
        class_id,
        cx: (b.x1 + b.x2) / (2.0 * img_size),
        cy: (b.y1 + b.y2) / (2.0 * img_size),
        w: b.width() / img_size,
        h: b.height() / img_size,
    })
}

pub fn cxcywh_to_xyxy(l: &YoloLabelLine, img_size: f64) -> BoxXYXY {
    BoxXYXY::new(
        (l.cx - l.w / 2.0) * img_size,
        (l.cy - l.h / 2.0) * img_size,
        (l.cx + l.w / 2.0) * img_size,
        (l.cy + l.h / 2.0) * img_size,
    )
}

/// Parses label text into pixel boxes clipped to the image.
pub fn parse_labels(text: &str, img_size: f64, num_classes: usize, source: &str) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let loc = || format!("{source}:{}", lineno + 1);
        if tokens.len() != 5 {
            return Err(Error::parse(loc(), format!("expected `class cx cy w h`, found {} fields", tokens.len())));
        }
        let class_id =
            tokens[0].parse::<usize>().map_err(|_| Error::parse(loc(), format!("non-numeric class `{}`", tokens[0])))?;
        let mut v = [0.0; 4];
        for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(loc(), format!("non-numeric token `{tok}`")))?;
        }
        let line = YoloLabelLine { class_id, cx: v[0], cy: v[1], w: v[2], h: v[3] };
        line.validate(num_classes).map_err(|m| Error::parse(loc(), m))?;
        let bbox = cxcywh_to_xyxy(&line, img_size).clip(img_size, img_size);
        out.push(GroundTruth { class_id, bbox });
    }
    Ok(out)
}

/// One line per box with six decimals.
pub fn format_labels(lines: &[YoloLabelLine]) -> String {
    lines.iter().map(|l| format!("{} {:.6} {:.6} {:.6} {:.6}\n", l.class_id, l.cx, l.cy, l.w, l.h)).collect()
}

pub fn read_labels(path: &Path, img_size: f64, num_classes: usize) -> Result<Vec<GroundTruth>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, img_size, num_classes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conversions() {
        let l = xyxy_to_cxcywh(0, &BoxXYXY::new(0., 0., 64., 64.), 64.0).unwrap();
        assert_eq!((l.cx, l.cy, l.w, l.h), (0.5, 0.5, 1.0, 1.0));
        let l = xyxy_to_cxcywh(0, &BoxXYXY::new(16., 16., 48., 48.), 64.0).unwrap();
        assert_eq!((l.cx, l.cy, l.w, l.h), (0.5, 0.5, 0.5, 0.5));
        assert!(xyxy_to_cxcywh(0, &BoxXYXY::new(3., 3., 3., 9.), 64.0).is_err());
    }

    #[test]
    fn parse_cases() {
        let g = parse_labels("0 0.5 0.5 0.5 0.5\n", 64.0, 2, "l").unwrap();
        assert_eq!(g, vec![GroundTruth { class_id: 0, bbox: BoxXYXY::new(16., 16., 48., 48.) }]);
        assert!(parse_labels("", 64.0, 2, "l").unwrap().is_empty());
        let e = parse_labels("0 0.5 0.5 0 0.1\n", 64.0, 2, "l").unwrap_err();
        assert!(e.to_string().contains("zero-width"), "{e}");
        let e = parse_labels("0 0.5 0.5 0.1 0.1\n2 0.5 0.5 0.1 0.1\n", 64.0, 2, "l").unwrap_err();
        assert!(e.to_string().starts_with("l:2"), "{e}");
        assert!(parse_labels("0 0.9 0.5 0.4 0.1\n", 64.0, 2, "l").is_err());
        assert!(parse_labels("0 a 0.5 0.4 0.1\n", 64.0, 2, "l").is_err());
    }

    proptest! {
        #[test]
        fn xyxy_round_trip(x in 0.0..60.0f64, y in 0.0..60.0f64, w in 0.5..4.0f64, h in 0.5..4.0f64) {
            let b = BoxXYXY::new(x, y, x + w, y + h);
            let back = cxcywh_to_xyxy(&xyxy_to_cxcywh(1, &b, 64.0).unwrap(), 64.0);
            prop_assert!((back.x1 - b.x1).abs() < 1e-9 && (back.y1 - b.y1).abs() < 1e-9);
            prop_assert!((back.x2 - b.x2).abs() < 1e-9 && (back.y2 - b.y2).abs() < 1e-9);
        }

        #[test]
        fn serialize_then_parse(cx in 0.2..0.8f64, cy in 0.2..0.8f64, w in 0.01..0.4f64, h in 0.01..0.4f64, c in 0usize..2) {
            let line = YoloLabelLine { class_id: c, cx, cy, w, h };
            let text = format_labels(&[line]);
            let parsed = parse_labels(&text, 1.0, 2, "p").unwrap();
            let expect = cxcywh_to_xyxy(&line, 1.0);
            prop_assert_eq!(parsed[0].class_id, c);
            prop_assert!((parsed[0].bbox.x1 - expect.x1).abs() < 2e-6);
            prop_assert!((parsed[0].bbox.y2 - expect.y2).abs() < 2e-6);
            // reformatting the parsed text is stable
            let again = format_labels(&[xyxy_to_cxcywh(c, &parsed[0].bbox, 1.0).unwrap()]);
            let reparsed = parse_labels(&again, 1.0, 2, "p").unwrap();
            prop_assert!((reparsed[0].bbox.x1 - parsed[0].bbox.x1).abs() < 2e-6);
        }
    }
}
