//! Decoding latent grids into designs, and the diagnostics used to judge a
//! design before it is run.

use std::collections::HashMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintExpr;
use crate::design::{encode_design, ColumnMap, Design, EncodingRule, FactorSpec, Level, Provenance};
use crate::error::{Error, Result};
use crate::geometry::{make_grid, GridSpec};
use crate::scalar::Scalar;
use crate::vae::{uniformize, LatentSpace, VaeModel};

/// Side of the lattice used for the density-uniformity statistic.
pub const DENSITY_PARTITION: usize = 4;

/// Correlations within this distance of ±1 count as confounding.
const CONFOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub trial_id: u64,
    pub constraint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorValue {
    pub factor: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    pub n_trials: usize,
    pub n_unique: usize,
    pub violations: Vec<Violation>,
    pub confounded_pairs: Vec<(String, String)>,
    /// Factors fixed at a single level across the design.
    pub degenerate_factors: Vec<String>,
    /// Fraction of declared levels present, per factor.
    pub level_coverage: Vec<FactorValue>,
    /// Chi-square of level counts against a uniform split, per factor.
    pub balance: Vec<FactorValue>,
    /// Largest |correlation| between encoded columns of different factors.
    pub orthogonality: f64,
    /// Chi-square of trial counts over a 4×4 partition of the uniformed
    /// square; only known when trial locations are.
    pub density_uniformity: Option<f64>,
    /// Distance from each trial to its nearest other trial in encoded space.
    pub nearest_neighbor_distance: Vec<f64>,
}

impl DesignDiagnostics {
    /// Violations or confounding that should stop a design from being run.
    pub fn is_flagged(&self) -> bool {
        !self.violations.is_empty() || !self.confounded_pairs.is_empty()
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            return 0.0;
        }
        let mut ids: Vec<u64> = self.violations.iter().map(|v| v.trial_id).collect();
        ids.dedup();
        ids.len() as f64 / self.n_trials as f64
    }
}

/// A grid point whose decoded trial duplicated an earlier one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub point_index: usize,
    pub kept_trial_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDesign {
    pub design: Design,
    pub diagnostics: DesignDiagnostics,
    /// Uniformed location of each kept trial, aligned with the design rows.
    pub locations: Vec<[f64; 2]>,
    pub collapsed: Vec<Collapse>,
}

/// Decodes the points of `spec` into a design and scores it.
pub fn generate<T: Scalar>(
    model: &VaeModel<T>,
    spec: &GridSpec,
    constraints: &[ConstraintExpr],
    snap: bool,
) -> Result<GeneratedDesign> {
    let grid = make_grid::<T>(spec)?;
    generate_at(model, &grid.points, grid.space, constraints, snap, Provenance::GeneratedGrid)
}

/// Decodes arbitrary latent points; see [`generate`].
pub fn generate_at<T: Scalar>(
    model: &VaeModel<T>,
    points: &[[T; 2]],
    space: LatentSpace,
    constraints: &[ConstraintExpr],
    snap: bool,
    provenance: Provenance,
) -> Result<GeneratedDesign> {
    if !provenance.is_generated() {
        return Err(Error::invalid("generated designs need a generated provenance"));
    }
    if points.is_empty() {
        return Err(Error::invalid("no latent points to decode"));
    }
    let decoded = model.decode_trials(points, space, snap)?;
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut trials = Vec::new();
    let mut locations = Vec::new();
    let mut collapsed = Vec::new();
    for (i, trial) in decoded.into_iter().enumerate() {
        let key = trial_key(&trial);
        if let Some(&kept) = seen.get(&key) {
            collapsed.push(Collapse {
                point_index: i,
                kept_trial_id: kept,
            });
            continue;
        }
        let id = trials.len() as u64;
        seen.insert(key, id);
        let u = match space {
            LatentSpace::Uniformed => points[i],
            LatentSpace::Original => uniformize(points[i]),
        };
        locations.push([u[0].as_f64(), u[1].as_f64()]);
        trials.push(trial);
    }
    let design = Design::with_sequential_ids(model.column_map.factors(), trials, provenance)?;
    let diagnostics = diagnose_at(&design, constraints, Some(&locations))?;
    Ok(GeneratedDesign {
        design,
        diagnostics,
        locations,
        collapsed,
    })
}

fn trial_key(trial: &[Level]) -> String {
    // f64 bit patterns keep continuous values exact
    let mut k = String::new();
    for l in trial {
        match l {
            Level::Number(v) => k.push_str(&format!("n{:016x}|", v.to_bits())),
            Level::Text(s) => {
                k.push('t');
                k.push_str(&s.len().to_string());
                k.push(':');
                k.push_str(s);
                k.push('|');
            }
        }
    }
    k
}

/// Uniform sample of `n` trials without replacement; ids are kept.
pub fn random_subset(design: &Design, n: usize, seed: u64) -> Result<Design> {
    if n == 0 || n > design.len() {
        return Err(Error::invalid(format!(
            "subset size {n} outside 1..={}",
            design.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = index::sample(&mut rng, design.len(), n).into_vec();
    Ok(design.subset(&idx, Provenance::RandomSubset))
}

/// Diagnostics without trial locations (no density statistic).
pub fn diagnose(design: &Design, constraints: &[ConstraintExpr]) -> Result<DesignDiagnostics> {
    diagnose_at(design, constraints, None)
}

/// Diagnostics; `locations` are uniformed points aligned with the trials.
pub fn diagnose_at(
    design: &Design,
    constraints: &[ConstraintExpr],
    locations: Option<&[[f64; 2]]>,
) -> Result<DesignDiagnostics> {
    if design.is_empty() {
        return Err(Error::invalid("cannot diagnose an empty design"));
    }
    let factors = design.factors();
    let n = design.len();

    let bound = constraints
        .iter()
        .map(|c| c.bind(factors).map(|b| (c.source().to_string(), b)))
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    for (id, trial) in design.trial_ids().iter().zip(design.trials()) {
        for (src, b) in &bound {
            if !b.holds(trial)? {
                violations.push(Violation {
                    trial_id: *id,
                    constraint: src.clone(),
                });
            }
        }
    }

    let n_unique = {
        let mut keys: Vec<String> = design.trials().iter().map(|t| trial_key(t)).collect();
        keys.sort();
        keys.dedup();
        keys.len()
    };

    // level index per trial and factor, off-level values mapped to the nearest level
    let column_map = ColumnMap::new(factors)?;
    let mut level_idx = vec![vec![0usize; n]; factors.len()];
    for (t, trial) in design.trials().iter().enumerate() {
        for (f, spec) in factors.iter().enumerate() {
            level_idx[f][t] = nearest_level(spec, &column_map, f, &trial[f])?;
        }
    }

    let mut level_coverage = Vec::with_capacity(factors.len());
    let mut balance = Vec::with_capacity(factors.len());
    let mut degenerate = Vec::new();
    for (f, spec) in factors.iter().enumerate() {
        let l = spec.level_count();
        let mut counts = vec![0usize; l];
        for &i in &level_idx[f] {
            counts[i] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        level_coverage.push(FactorValue {
            factor: spec.name.clone(),
            value: present as f64 / l as f64,
        });
        balance.push(FactorValue {
            factor: spec.name.clone(),
            value: chi_square_uniform(&counts),
        });
        if present == 1 && distinct_values(design, f) == 1 {
            degenerate.push(f);
        }
    }

    // one scalar column per factor for confounding
    let scalar_cols = (0..factors.len())
        .map(|f| factor_scalar_column(design, &column_map, f))
        .collect::<Result<Vec<_>>>()?;
    let mut confounded_pairs = Vec::new();
    for a in 0..factors.len() {
        for b in a + 1..factors.len() {
            let both_fixed = degenerate.contains(&a) && degenerate.contains(&b);
            let linked = !degenerate.contains(&a)
                && !degenerate.contains(&b)
                && correlation(&scalar_cols[a], &scalar_cols[b])
                    .is_some_and(|r| r.abs() >= 1.0 - CONFOUND_TOL);
            if both_fixed || linked {
                confounded_pairs.push((factors[a].name.clone(), factors[b].name.clone()));
            }
        }
    }

    let encoded = encode_design::<f64>(design)?;
    let mut orthogonality: f64 = 0.0;
    let blocks = encoded.column_map.blocks();
    let column = |c: usize| -> Vec<f64> { encoded.rows.iter_rows().map(|r| r[c]).collect() };
    for (bi, ba) in blocks.iter().enumerate() {
        for bb in &blocks[bi + 1..] {
            for ca in ba.start..ba.start + ba.width {
                let xa = column(ca);
                for cb in bb.start..bb.start + bb.width {
                    if let Some(r) = correlation(&xa, &column(cb)) {
                        orthogonality = orthogonality.max(r.abs());
                    }
                }
            }
        }
    }

    let density_uniformity = match locations {
        Some(loc) => {
            if loc.len() != n {
                return Err(Error::shape("trial locations", n, loc.len()));
            }
            Some(partition_chi_square(loc, DENSITY_PARTITION))
        }
        None => None,
    };

    let mut nearest_neighbor_distance = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = encoded
                .rows
                .row(i)
                .iter()
                .zip(encoded.rows.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            nearest_neighbor_distance[i] = nearest_neighbor_distance[i].min(d);
            nearest_neighbor_distance[j] = nearest_neighbor_distance[j].min(d);
        }
    }
    if n == 1 {
        nearest_neighbor_distance[0] = 0.0;
    }

    Ok(DesignDiagnostics {
        n_trials: n,
        n_unique,
        violations,
        confounded_pairs,
        degenerate_factors: degenerate.iter().map(|&f| factors[f].name.clone()).collect(),
        level_coverage,
        balance,
        orthogonality,
        density_uniformity,
        nearest_neighbor_distance,
    })
}

fn distinct_values(design: &Design, f: usize) -> usize {
    let mut seen: Vec<&Level> = Vec::new();
    for t in design.trials() {
        if !seen.contains(&&t[f]) {
            seen.push(&t[f]);
        }
    }
    seen.len()
}

fn factor_scalar_column(design: &Design, map: &ColumnMap, f: usize) -> Result<Vec<f64>> {
    let block = &map.blocks()[f];
    design
        .trials()
        .iter()
        .map(|t| {
            let v = &t[f];
            match &block.rule {
                EncodingRule::Scaled { transform, lo, hi } => {
                    let x = v
                        .as_number()
                        .ok_or_else(|| Error::invalid(format!("`{v}` is not numeric")))?;
                    Ok((transform.apply(x) - lo) / (hi - lo))
                }
                _ => block
                    .factor
                    .level_index(v)
                    .map(|i| i as f64)
                    .ok_or_else(|| Error::invalid(format!("`{v}` is not a level of `{}`", block.factor.name))),
            }
        })
        .collect()
}

fn nearest_level(spec: &FactorSpec, map: &ColumnMap, f: usize, v: &Level) -> Result<usize> {
    if let Some(i) = spec.level_index(v) {
        return Ok(i);
    }
    match (&map.blocks()[f].rule, v.as_number()) {
        (EncodingRule::Scaled { transform, .. }, Some(x)) => {
            let tx = transform.apply(x);
            let levels = spec.numeric_levels().expect("numeric");
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &l) in levels.iter().enumerate() {
                let d = (transform.apply(l) - tx).abs();
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            Ok(best)
        }
        _ => Err(Error::invalid(format!("`{v}` is not a level of `{}`", spec.name))),
    }
}

fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Pearson correlation; `None` when either column is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let scale = 1e-12 * n;
    if saa <= scale * scale || sbb <= scale * scale {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Chi-square of point counts over a `k`×`k` partition of the unit square.
pub fn partition_chi_square(points: &[[f64; 2]], k: usize) -> f64 {
    let mut counts = vec![0usize; k * k];
    let cell = |v: f64| ((v * k as f64).floor() as isize).clamp(0, k as isize - 1) as usize;
    for p in points {
        counts[cell(p[1]) * k + cell(p[0])] += 1;
    }
    chi_square_uniform(&counts)
}
