use serde::{Deserialize, Serialize};

use super::factor::{FactorKind, FactorSpec, Level, Transform};
use super::table::Design;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// How one factor maps onto its block of unit-interval columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum EncodingRule {
    /// Transform, then min-max scale over the declared level range.
    Scaled {
        transform: Transform,
        lo: f64,
        hi: f64,
    },
    /// Two-level categorical: first level 0, second level 1.
    Binary,
    /// One column per level.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub factor: FactorSpec,
    pub start: usize,
    pub width: usize,
    pub rule: EncodingRule,
}

/// Column layout of an encoded design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    blocks: Vec<ColumnBlock>,
    width: usize,
}

impl ColumnMap {
    pub fn new(factors: &[FactorSpec]) -> Result<Self> {
        super::table::check_factor_list(factors)?;
        let mut blocks = Vec::with_capacity(factors.len());
        let mut start = 0;
        for f in factors {
            let (rule, width) = match f.kind {
                FactorKind::Categorical if f.level_count() == 2 => (EncodingRule::Binary, 1),
                FactorKind::Categorical => (EncodingRule::OneHot, f.level_count()),
                _ => {
                    let levels = f.numeric_levels().expect("validated numeric levels");
                    let lo = f.transform.apply(levels[0]);
                    let hi = f.transform.apply(levels[levels.len() - 1]);
                    (
                        EncodingRule::Scaled {
                            transform: f.transform,
                            lo,
                            hi,
                        },
                        1,
                    )
                }
            };
            blocks.push(ColumnBlock {
                factor: f.clone(),
                start,
                width,
                rule,
            });
            start += width;
        }
        Ok(Self {
            blocks,
            width: start,
        })
    }

    pub fn blocks(&self) -> &[ColumnBlock] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn factors(&self) -> Vec<FactorSpec> {
        self.blocks.iter().map(|b| b.factor.clone()).collect()
    }

    /// Encodes one trial into `out` (length [`ColumnMap::width`]).
    pub fn encode_into<T: Scalar>(&self, trial: &[Level], out: &mut [T]) -> Result<()> {
        if trial.len() != self.blocks.len() {
            return Err(Error::shape("trial", self.blocks.len(), trial.len()));
        }
        for (b, v) in self.blocks.iter().zip(trial) {
            let cell = &mut out[b.start..b.start + b.width];
            match &b.rule {
                EncodingRule::Scaled { transform, lo, hi } => {
                    let x = v.as_number().ok_or_else(|| {
                        Error::invalid(format!("`{v}` is not numeric for `{}`", b.factor.name))
                    })?;
                    let s = (transform.apply(x) - lo) / (hi - lo);
                    cell[0] = T::lit(s.clamp(0.0, 1.0));
                }
                EncodingRule::Binary => {
                    let i = level_index_or_err(&b.factor, v)?;
                    cell[0] = T::lit(i as f64);
                }
                EncodingRule::OneHot => {
                    let i = level_index_or_err(&b.factor, v)?;
                    cell.fill(T::zero());
                    cell[i] = T::one();
                }
            }
        }
        Ok(())
    }

    /// Per-factor position in [0,1]: scaled value for numeric factors, level
    /// index over (levels - 1) for categorical ones.
    pub fn normalized_levels<T: Scalar>(&self, trial: &[Level]) -> Result<Vec<T>> {
        self.blocks
            .iter()
            .zip(trial)
            .map(|(b, v)| match &b.rule {
                EncodingRule::Scaled { transform, lo, hi } => {
                    let x = v.as_number().ok_or_else(|| {
                        Error::invalid(format!("`{v}` is not numeric for `{}`", b.factor.name))
                    })?;
                    Ok(T::lit(((transform.apply(x) - lo) / (hi - lo)).clamp(0.0, 1.0)))
                }
                EncodingRule::Binary | EncodingRule::OneHot => {
                    let i = level_index_or_err(&b.factor, v)?;
                    Ok(T::lit(i as f64 / (b.factor.level_count() - 1) as f64))
                }
            })
            .collect()
    }

    /// Maps a unit-interval vector back to raw levels.
    ///
    /// Numeric-discrete factors always snap to the nearest declared level
    /// (distance measured on the encoded scale, ties to the lower level);
    /// numeric-continuous factors snap only when `snap` is set.
    pub fn decode<T: Scalar>(&self, v: &[T], snap: bool) -> Result<Vec<Level>> {
        if v.len() != self.width {
            return Err(Error::shape("encoded vector", self.width, v.len()));
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let cell = &v[b.start..b.start + b.width];
            let level = match &b.rule {
                EncodingRule::Scaled { transform, lo, hi } => {
                    let s = cell[0].as_f64().clamp(0.0, 1.0);
                    if snap || b.factor.kind == FactorKind::NumericDiscrete {
                        let levels = b.factor.numeric_levels().expect("numeric");
                        let mut best = 0;
                        let mut best_d = f64::INFINITY;
                        for (i, &l) in levels.iter().enumerate() {
                            let d = (s - (transform.apply(l) - lo) / (hi - lo)).abs();
                            if d < best_d {
                                best = i;
                                best_d = d;
                            }
                        }
                        Level::Number(levels[best])
                    } else {
                        Level::Number(transform.invert(lo + s * (hi - lo)))
                    }
                }
                EncodingRule::Binary => {
                    let i = usize::from(cell[0].as_f64() >= 0.5);
                    b.factor.levels[i].clone()
                }
                EncodingRule::OneHot => {
                    let mut best = 0;
                    for (i, x) in cell.iter().enumerate() {
                        if *x > cell[best] {
                            best = i;
                        }
                    }
                    b.factor.levels[best].clone()
                }
            };
            out.push(level);
        }
        Ok(out)
    }
}

fn level_index_or_err(f: &FactorSpec, v: &Level) -> Result<usize> {
    f.level_index(v)
        .ok_or_else(|| Error::invalid(format!("`{v}` is not a level of `{}`", f.name)))
}

/// A design mapped into unit-interval columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix<T> {
    pub rows: Matrix<T>,
    pub column_map: ColumnMap,
    pub trial_ids: Vec<u64>,
}

impl<T: Scalar> EncodedMatrix<T> {
    pub fn width(&self) -> usize {
        self.column_map.width()
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }
}

/// Encodes every trial of a design.
pub fn encode_design<T: Scalar>(design: &Design) -> Result<EncodedMatrix<T>> {
    if design.is_empty() {
        return Err(Error::invalid("cannot encode an empty design"));
    }
    let column_map = ColumnMap::new(design.factors())?;
    encode_with(design, column_map)
}

/// Encodes a design against an existing column layout (e.g. a trained model's).
pub fn encode_with<T: Scalar>(design: &Design, column_map: ColumnMap) -> Result<EncodedMatrix<T>> {
    let width = column_map.width();
    let mut rows = Matrix::zeros(design.len(), width);
    for (i, trial) in design.trials().iter().enumerate() {
        column_map.encode_into(trial, rows.row_mut(i))?;
    }
    Ok(EncodedMatrix {
        rows,
        column_map,
        trial_ids: design.trial_ids().to_vec(),
    })
}

/// Free-function form of [`ColumnMap::decode`].
pub fn decode_vector<T: Scalar>(v: &[T], column_map: &ColumnMap, snap: bool) -> Result<Vec<Level>> {
    column_map.decode(v, snap)
}
