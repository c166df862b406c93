use super::EvalReport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.len() < 2 {
        return Err(Error::EvalUndefined(format!("mean ± std needs at least 2 runs, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanStd { mean, std: var.sqrt() })
}

/// Per-field mean ± std, in [`super::REPORT_COLUMNS`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub runs: usize,
    pub fields: [MeanStd; 5],
}

impl RunSummary {
    pub fn map50(&self) -> MeanStd {
        self.fields[2]
    }

    pub fn mean_iou(&self) -> MeanStd {
        self.fields[4]
    }
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<RunSummary> {
    let mut fields = [MeanStd { mean: 0.0, std: 0.0 }; 5];
    for (i, f) in fields.iter_mut().enumerate() {
        let vals: Vec<f64> = reports.iter().map(|r| r.values()[i]).collect();
        *f = mean_std(&vals)?;
    }
    Ok(RunSummary { runs: reports.len(), fields })
}
