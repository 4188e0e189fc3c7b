use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    NumericDiscrete,
    NumericContinuous,
    Categorical,
}

impl FactorKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, FactorKind::Categorical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    Identity,
    Log10,
}

impl Transform {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log10 => v.log10(),
        }
    }

    #[inline]
    pub fn invert(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log10 => 10f64.powf(v),
        }
    }
}

/// A raw factor level: a number for numeric factors, text for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Number(f64),
    Text(String),
}

impl Level {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Level::Number(v) => Some(*v),
            Level::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Level::Text(s) => Some(s),
            Level::Number(_) => None,
        }
    }

    /// Equality usable for exact-duplicate detection (bitwise on numbers).
    pub(crate) fn same(&self, other: &Level) -> bool {
        match (self, other) {
            (Level::Number(a), Level::Number(b)) => a.to_bits() == b.to_bits() || a == b,
            (Level::Text(a), Level::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Number(v) => write!(f, "{v}"),
            Level::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Level {
    fn from(v: f64) -> Self {
        Level::Number(v)
    }
}

impl From<&str> for Level {
    fn from(v: &str) -> Self {
        Level::Text(v.to_owned())
    }
}

/// One experimental factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub kind: FactorKind,
    pub levels: Vec<Level>,
    #[serde(default)]
    pub transform: Transform,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl FactorSpec {
    pub fn numeric(name: &str, kind: FactorKind, levels: &[f64]) -> Result<Self> {
        let spec = Self {
            name: name.to_owned(),
            kind,
            levels: levels.iter().map(|&v| Level::Number(v)).collect(),
            transform: Transform::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn discrete(name: &str, levels: &[f64]) -> Result<Self> {
        Self::numeric(name, FactorKind::NumericDiscrete, levels)
    }

    pub fn continuous(name: &str, levels: &[f64]) -> Result<Self> {
        Self::numeric(name, FactorKind::NumericContinuous, levels)
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Result<Self> {
        let spec = Self {
            name: name.to_owned(),
            kind: FactorKind::Categorical,
            levels: levels.iter().map(|&v| Level::from(v)).collect(),
            transform: Transform::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_transform(mut self, transform: Transform) -> Result<Self> {
        self.transform = transform;
        self.validate()?;
        Ok(self)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Numeric levels, or `None` for categorical factors.
    pub fn numeric_levels(&self) -> Option<Vec<f64>> {
        self.levels.iter().map(Level::as_number).collect()
    }

    /// Position of a level in the declared list.
    pub fn level_index(&self, level: &Level) -> Option<usize> {
        self.levels.iter().position(|l| l.same(level))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::invalid(format!("factor `{}`: {m}", self.name)));
        if !is_identifier(&self.name) {
            return err("name is not an identifier".into());
        }
        if self.levels.len() < 2 {
            return err(format!("needs at least 2 levels, has {}", self.levels.len()));
        }
        match self.kind {
            FactorKind::Categorical => {
                if self.transform != Transform::Identity {
                    return err("categorical factors take no transform".into());
                }
                let mut seen = Vec::with_capacity(self.levels.len());
                for l in &self.levels {
                    let Level::Text(s) = l else {
                        return err(format!("categorical level `{l}` is not text"));
                    };
                    if seen.contains(&s) {
                        return err(format!("duplicate level `{s}`"));
                    }
                    seen.push(s);
                }
            }
            FactorKind::NumericDiscrete | FactorKind::NumericContinuous => {
                let Some(values) = self.numeric_levels() else {
                    return err("numeric factor has a text level".into());
                };
                if values.iter().any(|v| !v.is_finite()) {
                    return err("levels must be finite".into());
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return err("numeric levels must be strictly increasing".into());
                }
                if self.transform == Transform::Log10 && values[0] <= 0.0 {
                    return err("log10 transform requires positive levels".into());
                }
            }
        }
        Ok(())
    }
}
