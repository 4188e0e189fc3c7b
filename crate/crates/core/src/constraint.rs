//! Conjunctive comparison constraints over raw factor levels, e.g.
//! `n1 > n2 and k1 >= k2`.
//!
//! Grammar (whitespace-insensitive, `and` case-insensitive):
//!
//! ```text
//! expr    := clause ("and" clause)*
//! clause  := operand op operand
//! op      := ">" | ">=" | "<" | "<=" | "==" | "!="
//! operand := identifier | number | 'text' | "text"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::design::{FactorKind, FactorSpec, Level};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn compare<V: PartialOrd + ?Sized>(self, a: &V, b: &V) -> bool {
        match self {
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Factor(String),
    Number(f64),
    Text(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Factor(n) => f.write_str(n),
            Operand::Number(v) => write!(f, "{v}"),
            Operand::Text(s) if s.contains('"') => write!(f, "'{s}'"),
            Operand::Text(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

/// A parsed constraint; a trial is feasible iff every clause holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintExpr {
    source: String,
    clauses: Vec<Clause>,
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{} {} {}", c.lhs, c.op.symbol(), c.rhs)?;
        }
        Ok(())
    }
}

/// Source of raw levels by factor name.
pub trait TrialLookup {
    fn level(&self, name: &str) -> Option<&Level>;
}

impl TrialLookup for HashMap<String, Level> {
    fn level(&self, name: &str) -> Option<&Level> {
        self.get(name)
    }
}

impl TrialLookup for BTreeMap<String, Level> {
    fn level(&self, name: &str) -> Option<&Level> {
        self.get(name)
    }
}

impl TrialLookup for (&[FactorSpec], &[Level]) {
    fn level(&self, name: &str) -> Option<&Level> {
        self.0
            .iter()
            .position(|f| f.name == name)
            .and_then(|i| self.1.get(i))
    }
}

impl ConstraintExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Names of every factor referenced, in order of appearance.
    pub fn factor_names(&self) -> Vec<&str> {
        let mut names = Vec::new();
        for c in &self.clauses {
            for o in [&c.lhs, &c.rhs] {
                if let Operand::Factor(n) = o {
                    if !names.contains(&n.as_str()) {
                        names.push(n.as_str());
                    }
                }
            }
        }
        names
    }

    pub fn evaluate(&self, trial: &impl TrialLookup) -> Result<bool> {
        for c in &self.clauses {
            let l = resolve(&c.lhs, trial)?;
            let r = resolve(&c.rhs, trial)?;
            if !compare_levels(c.op, &l, &r)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Resolves factor references to column positions for fast row evaluation.
    pub fn bind(&self, factors: &[FactorSpec]) -> Result<BoundConstraint> {
        let slot = |o: &Operand| -> Result<Slot> {
            Ok(match o {
                Operand::Factor(n) => Slot::Column(
                    factors
                        .iter()
                        .position(|f| &f.name == n)
                        .ok_or_else(|| Error::UnknownFactor(n.clone()))?,
                ),
                Operand::Number(v) => Slot::Value(Level::Number(*v)),
                Operand::Text(s) => Slot::Value(Level::Text(s.clone())),
            })
        };
        let clauses = self
            .clauses
            .iter()
            .map(|c| Ok((slot(&c.lhs)?, c.op, slot(&c.rhs)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundConstraint {
            width: factors.len(),
            clauses,
        })
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Column(usize),
    Value(Level),
}

/// A constraint bound to a factor ordering.
#[derive(Debug, Clone)]
pub struct BoundConstraint {
    width: usize,
    clauses: Vec<(Slot, CmpOp, Slot)>,
}

impl BoundConstraint {
    pub fn holds(&self, row: &[Level]) -> Result<bool> {
        if row.len() != self.width {
            return Err(Error::Evaluation(format!(
                "trial has {} values, expected {}",
                row.len(),
                self.width
            )));
        }
        let get = |s: &Slot| -> Level {
            match s {
                Slot::Column(i) => row[*i].clone(),
                Slot::Value(v) => v.clone(),
            }
        };
        for (l, op, r) in &self.clauses {
            if !compare_levels(*op, &get(l), &get(r))? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn resolve(o: &Operand, trial: &impl TrialLookup) -> Result<Level> {
    match o {
        Operand::Factor(n) => trial
            .level(n)
            .cloned()
            .ok_or_else(|| Error::Evaluation(format!("trial has no value for `{n}`"))),
        Operand::Number(v) => Ok(Level::Number(*v)),
        Operand::Text(s) => Ok(Level::Text(s.clone())),
    }
}

fn compare_levels(op: CmpOp, l: &Level, r: &Level) -> Result<bool> {
    match (l, r) {
        (Level::Number(a), Level::Number(b)) => Ok(op.compare(a, b)),
        (Level::Text(a), Level::Text(b)) if !op.is_ordering() => Ok(op.compare(a, b)),
        _ => Err(Error::Evaluation(format!(
            "cannot compare `{l}` {} `{r}`",
            op.symbol()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Text(String),
    Op(CmpOp),
    And,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |offset: usize, message: &str| Error::Syntax {
        offset,
        message: message.to_owned(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'>' | b'<' | b'=' | b'!' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'>', true) => CmpOp::Ge,
                    (b'>', false) => CmpOp::Gt,
                    (b'<', true) => CmpOp::Le,
                    (b'<', false) => CmpOp::Lt,
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    _ => return Err(syntax(start, "unknown operator")),
                };
                i += if eq { 2 } else { 1 };
                out.push((start, Tok::Op(op)));
            }
            b'\'' | b'"' => {
                let close = text[i + 1..]
                    .find(c as char)
                    .ok_or_else(|| syntax(start, "unterminated string literal"))?;
                out.push((start, Tok::Text(text[i + 1..i + 1 + close].to_owned())));
                i += close + 2;
            }
            b'0'..=b'9' | b'.' | b'-' | b'+' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[j - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let v: f64 = text[i..j]
                    .parse()
                    .map_err(|_| syntax(start, "malformed number"))?;
                out.push((start, Tok::Number(v)));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &text[i..j];
                out.push((
                    start,
                    if word.eq_ignore_ascii_case("and") {
                        Tok::And
                    } else {
                        Tok::Ident(word.to_owned())
                    },
                ));
                i = j;
            }
            _ => {
                // accept the mathematical symbols as aliases
                let rest = &text[i..];
                let alias = [("≥", CmpOp::Ge), ("≤", CmpOp::Le), ("≠", CmpOp::Ne)]
                    .into_iter()
                    .find(|(s, _)| rest.starts_with(s));
                match alias {
                    Some((s, op)) => {
                        out.push((start, Tok::Op(op)));
                        i += s.len();
                    }
                    None => return Err(syntax(start, "unexpected character")),
                }
            }
        }
    }
    Ok(out)
}

/// Parses `text` and resolves its factor references against `factors`.
pub fn parse_constraint(text: &str, factors: &[FactorSpec]) -> Result<ConstraintExpr> {
    let toks = tokenize(text)?;
    let end = text.len();
    let mut pos = 0;
    let mut clauses = Vec::new();
    let at = |p: usize| toks.get(p).map_or(end, |t| t.0);
    let syntax = |offset: usize, message: &str| Error::Syntax {
        offset,
        message: message.to_owned(),
    };
    loop {
        let operand = |p: usize| -> Result<Operand> {
            match toks.get(p).map(|t| &t.1) {
                Some(Tok::Ident(n)) => Ok(Operand::Factor(n.clone())),
                Some(Tok::Number(v)) => Ok(Operand::Number(*v)),
                Some(Tok::Text(s)) => Ok(Operand::Text(s.clone())),
                _ => Err(syntax(at(p), "expected a factor name or literal")),
            }
        };
        let lhs = operand(pos)?;
        let op = match toks.get(pos + 1).map(|t| &t.1) {
            Some(Tok::Op(op)) => *op,
            _ => return Err(syntax(at(pos + 1), "expected a comparison operator")),
        };
        let rhs = operand(pos + 2)?;
        let clause_start = at(pos);
        check_clause(&lhs, op, &rhs, factors, clause_start)?;
        clauses.push(Clause { lhs, op, rhs });
        pos += 3;
        match toks.get(pos).map(|t| &t.1) {
            None => break,
            Some(Tok::And) => pos += 1,
            Some(_) => return Err(syntax(at(pos), "expected `and` or end of input")),
        }
    }
    Ok(ConstraintExpr {
        source: text.to_owned(),
        clauses,
    })
}

#[derive(PartialEq)]
enum Ty {
    Numeric,
    Categorical,
}

fn check_clause(
    lhs: &Operand,
    op: CmpOp,
    rhs: &Operand,
    factors: &[FactorSpec],
    offset: usize,
) -> Result<()> {
    let ty = |o: &Operand| -> Result<(Ty, bool)> {
        Ok(match o {
            Operand::Factor(n) => {
                let f = factors
                    .iter()
                    .find(|f| &f.name == n)
                    .ok_or_else(|| Error::UnknownFactor(n.clone()))?;
                let t = if f.kind == FactorKind::Categorical {
                    Ty::Categorical
                } else {
                    Ty::Numeric
                };
                (t, false)
            }
            Operand::Number(_) => (Ty::Numeric, true),
            Operand::Text(_) => (Ty::Categorical, true),
        })
    };
    let (lt, llit) = ty(lhs)?;
    let (rt, rlit) = ty(rhs)?;
    let here = format!("`{lhs} {} {rhs}` at offset {offset}", op.symbol());
    if llit && rlit {
        return Err(Error::ConstraintType(format!(
            "{here} compares two literals"
        )));
    }
    if lt != rt {
        return Err(Error::ConstraintType(format!(
            "{here} mixes numeric and categorical operands"
        )));
    }
    if lt == Ty::Categorical && op.is_ordering() {
        return Err(Error::ConstraintType(format!(
            "{here} applies an ordering operator to a categorical operand"
        )));
    }
    Ok(())
}
