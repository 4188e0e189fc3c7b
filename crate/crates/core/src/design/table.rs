use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::factor::{FactorKind, FactorSpec, Level};
use crate::constraint::ConstraintExpr;
use crate::error::{Error, Result};

/// Default upper bound on the number of enumerated full-factorial trials.
pub const DEFAULT_TRIAL_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    InitialFull,
    InitialConstrained,
    GeneratedGrid,
    GeneratedCluster,
    RandomSubset,
}

impl Provenance {
    pub fn is_generated(self) -> bool {
        matches!(self, Provenance::GeneratedGrid | Provenance::GeneratedCluster)
    }
}

/// A trial matrix over a list of factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    factors: Vec<FactorSpec>,
    trials: Vec<Vec<Level>>,
    trial_ids: Vec<u64>,
    provenance: Provenance,
}

pub(crate) fn check_factor_list(factors: &[FactorSpec]) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::invalid("at least one factor is required"));
    }
    for (i, f) in factors.iter().enumerate() {
        f.validate()?;
        if factors[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::invalid(format!("duplicate factor name `{}`", f.name)));
        }
    }
    Ok(())
}

impl Design {
    pub fn new(
        factors: Vec<FactorSpec>,
        trials: Vec<Vec<Level>>,
        trial_ids: Vec<u64>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_factor_list(&factors)?;
        if trials.len() != trial_ids.len() {
            return Err(Error::shape("trial ids", trials.len(), trial_ids.len()));
        }
        let mut sorted = trial_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("trial ids must be unique"));
        }
        for (row, id) in trials.iter().zip(&trial_ids) {
            if row.len() != factors.len() {
                return Err(Error::shape(format!("trial {id}"), factors.len(), row.len()));
            }
            for (f, v) in factors.iter().zip(row) {
                let ok = match (f.kind, v) {
                    (FactorKind::Categorical, Level::Text(_))
                    | (FactorKind::NumericDiscrete, Level::Number(_)) => {
                        f.level_index(v).is_some()
                    }
                    (FactorKind::NumericContinuous, Level::Number(x)) => {
                        x.is_finite() && (provenance.is_generated() || f.level_index(v).is_some())
                    }
                    _ => false,
                };
                if !ok {
                    return Err(Error::invalid(format!(
                        "trial {id}: `{v}` is not a valid level of `{}`",
                        f.name
                    )));
                }
            }
        }
        Ok(Self {
            factors,
            trials,
            trial_ids,
            provenance,
        })
    }

    /// Builds a design with ids `0..n`.
    pub fn with_sequential_ids(
        factors: Vec<FactorSpec>,
        trials: Vec<Vec<Level>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let ids = (0..trials.len() as u64).collect();
        Self::new(factors, trials, ids, provenance)
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn trials(&self) -> &[Vec<Level>] {
        &self.trials
    }

    pub fn trial_ids(&self) -> &[u64] {
        &self.trial_ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn trial(&self, id: u64) -> Option<&[Level]> {
        self.trial_ids
            .iter()
            .position(|&t| t == id)
            .map(|i| self.trials[i].as_slice())
    }

    /// Keeps the rows at `idx` (in that order) under a new provenance.
    pub(crate) fn subset(&self, idx: &[usize], provenance: Provenance) -> Design {
        Design {
            factors: self.factors.clone(),
            trials: idx.iter().map(|&i| self.trials[i].clone()).collect(),
            trial_ids: idx.iter().map(|&i| self.trial_ids[i]).collect(),
            provenance,
        }
    }

    /// Writes the design as CSV: a header of factor names, one trial per row.
    pub fn write_csv<W: Write>(&self, out: W, with_ids: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = Vec::with_capacity(self.factors.len() + 1);
        if with_ids {
            header.push("trial_id");
        }
        header.extend(self.factors.iter().map(|f| f.name.as_str()));
        w.write_record(&header)?;
        for (id, row) in self.trial_ids.iter().zip(&self.trials) {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if with_ids {
                rec.push(id.to_string());
            }
            rec.extend(row.iter().map(Level::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a design written by [`Design::write_csv`]. Columns may appear in
    /// any order; a missing `trial_id` column yields sequential ids.
    pub fn read_csv<R: Read>(
        input: R,
        factors: &[FactorSpec],
        provenance: Provenance,
    ) -> Result<Design> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = r.headers()?.clone();
        let id_col = header.iter().position(|h| h == "trial_id");
        let mut cols = Vec::with_capacity(factors.len());
        for f in factors {
            let c = header
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::invalid(format!("csv lacks a `{}` column", f.name)))?;
            cols.push(c);
        }
        if let Some(extra) = header
            .iter()
            .find(|h| *h != "trial_id" && !factors.iter().any(|f| f.name == *h))
        {
            return Err(Error::UnknownFactor(extra.to_owned()));
        }
        let mut trials = Vec::new();
        let mut ids = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let id = match id_col {
                Some(c) => rec[c].parse::<u64>().map_err(|_| {
                    Error::invalid(format!("row {}: bad trial_id `{}`", line + 1, &rec[c]))
                })?,
                None => line as u64,
            };
            let mut row = Vec::with_capacity(factors.len());
            for (f, &c) in factors.iter().zip(&cols) {
                let cell = &rec[c];
                row.push(if f.kind.is_numeric() {
                    Level::Number(cell.parse::<f64>().map_err(|_| {
                        Error::invalid(format!("row {}: `{cell}` is not a number", line + 1))
                    })?)
                } else {
                    Level::Text(cell.to_owned())
                });
            }
            trials.push(row);
            ids.push(id);
        }
        Design::new(factors.to_vec(), trials, ids, provenance)
    }
}

/// Enumerates every level combination with the default cap.
pub fn build_full_factorial(factors: &[FactorSpec]) -> Result<Design> {
    build_full_factorial_capped(factors, DEFAULT_TRIAL_CAP)
}

/// Enumerates every level combination, first factor outermost (row-major).
pub fn build_full_factorial_capped(factors: &[FactorSpec], cap: u128) -> Result<Design> {
    check_factor_list(factors)?;
    let product = factors
        .iter()
        .try_fold(1u128, |acc, f| acc.checked_mul(f.level_count() as u128))
        .unwrap_or(u128::MAX);
    if product > cap {
        return Err(Error::Size { product, cap });
    }
    let n = product as usize;
    let mut trials = Vec::with_capacity(n);
    let mut counter = vec![0usize; factors.len()];
    for _ in 0..n {
        trials.push(
            factors
                .iter()
                .zip(&counter)
                .map(|(f, &i)| f.levels[i].clone())
                .collect(),
        );
        for (pos, f) in factors.iter().enumerate().rev() {
            counter[pos] += 1;
            if counter[pos] < f.level_count() {
                break;
            }
            counter[pos] = 0;
        }
    }
    Ok(Design {
        factors: factors.to_vec(),
        trials,
        trial_ids: (0..n as u64).collect(),
        provenance: Provenance::InitialFull,
    })
}

/// Keeps the trials satisfying every constraint, preserving ids and order.
pub fn filter_by_constraints(design: &Design, constraints: &[ConstraintExpr]) -> Result<Design> {
    let bound = constraints
        .iter()
        .map(|c| c.bind(design.factors()))
        .collect::<Result<Vec<_>>>()?;
    let mut keep = Vec::with_capacity(design.len());
    for (i, row) in design.trials().iter().enumerate() {
        let mut ok = true;
        for b in &bound {
            if !b.holds(row)? {
                ok = false;
                break;
            }
        }
        if ok {
            keep.push(i);
        }
    }
    Ok(design.subset(&keep, Provenance::InitialConstrained))
}
