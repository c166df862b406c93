use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;

#[derive(Clone, Debug, PartialEq)]
pub struct AssignedCell {
    pub gx: usize,
    pub gy: usize,
    pub gt: GroundTruth,
}

impl AssignedCell {
    pub fn cell(&self, grid: usize) -> usize {
        self.gy * grid + self.gx
    }
}

/// Training targets of one image on a `grid × grid` map.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAssignment {
    pub grid: usize,
    /// Objectness target per cell, row-major.
    pub obj: Vec<f64>,
    /// Assigned cells in row-major order.
    pub cells: Vec<AssignedCell>,
}

/// Each box goes to the cell containing its center; when two centers share
/// a cell the larger box wins (the earlier one on equal area).
pub fn assign_targets(gts: &[GroundTruth], cfg: &ModelConfig) -> Result<GridAssignment> {
    let g = cfg.grid_size();
    let s = cfg.stride() as f64;
    let mut owner: Vec<Option<usize>> = vec![None; g * g];
    for (i, gt) in gts.iter().enumerate() {
        if gt.class_id >= cfg.num_classes {
            return Err(Error::Data(format!("class {} out of range (0..{})", gt.class_id, cfg.num_classes)));
        }
        if !(gt.bbox.width() > 0.0 && gt.bbox.height() > 0.0) {
            return Err(Error::Data(format!("degenerate box {:?}", gt.bbox)));
        }
        let (cx, cy) = gt.bbox.center();
        let gx = ((cx / s).floor().max(0.0) as usize).min(g - 1);
        let gy = ((cy / s).floor().max(0.0) as usize).min(g - 1);
        let slot = &mut owner[gy * g + gx];
        match slot {
            Some(j) if gts[*j].bbox.area() >= gt.bbox.area() => {}
            _ => *slot = Some(i),
        }
    }
    let mut obj = vec![0.0; g * g];
    let mut cells = Vec::new();
    for (cell, o) in owner.iter().enumerate() {
        if let Some(i) = *o {
            obj[cell] = 1.0;
            cells.push(AssignedCell { gx: cell % g, gy: cell / g, gt: gts[i] });
        }
    }
    Ok(GridAssignment { grid: g, obj, cells })
}
