use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean_and_std, student_t_quantile};

pub const DEFAULT_CONFIDENCE: f64 = 0.90;

/// Replicated measurements of one trial and their one-sided lower
/// confidence limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub trial_id: u64,
    pub replicates: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub confidence: f64,
    pub lcl: f64,
}

impl ResponseRecord {
    pub fn new(trial_id: u64, replicates: Vec<f64>, confidence: f64) -> Result<Self> {
        if replicates.len() < 2 {
            return Err(Error::InsufficientReplicates(replicates.len()));
        }
        if replicates.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                parameter: format!("replicates of trial {trial_id}"),
            });
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::invalid(format!("confidence {confidence} outside (0,1)")));
        }
        let n = replicates.len();
        let (mean, std) = mean_and_std(&replicates);
        let t = student_t_quantile(confidence, (n - 1) as f64)?;
        let lcl = if std == 0.0 { mean } else { mean - t * std / (n as f64).sqrt() };
        Ok(Self {
            trial_id,
            replicates,
            mean,
            std,
            confidence,
            lcl,
        })
    }
}

/// `mean − t(c, n−1)·s/√n` for one set of replicates (trial id 0).
pub fn compute_lcl(replicates: &[f64], confidence: f64) -> Result<ResponseRecord> {
    ResponseRecord::new(0, replicates.to_vec(), confidence)
}

/// Reads `trial_id, r1, r2, ...` rows; replicate counts may differ per row
/// and blank cells are skipped.
pub fn read_responses_csv<R: Read>(input: R, confidence: f64) -> Result<Vec<ResponseRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("trial_id") {
        return Err(Error::invalid("responses CSV must start with a `trial_id` column"));
    }
    let mut out: Vec<ResponseRecord> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id: u64 = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::invalid(format!("row {}: bad trial_id", line + 2)))?;
        if out.iter().any(|r| r.trial_id == id) {
            return Err(Error::invalid(format!("trial {id} listed twice")));
        }
        let reps = rec
            .iter()
            .skip(1)
            .filter(|c| !c.is_empty())
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {}: `{c}` is not a number", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ResponseRecord::new(id, reps, confidence)?);
    }
    Ok(out)
}
