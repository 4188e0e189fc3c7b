use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::delaunay::{triangulate, Triangulation};
use crate::error::{Error, Result};
use crate::geometry::{cell_center, FieldMap, Resolution};
use crate::scalar::Scalar;
use crate::vae::LatentEmbedding;

pub const DEFAULT_SURFACE_RESOLUTION: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellSource {
    /// Barycentric value inside a triangle.
    Interior,
    /// Value of the nearest node.
    Exterior,
}

/// A distinct location carrying the mean response of the trials there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SurfaceNode<T: Scalar> {
    pub point: [T; 2],
    pub value: T,
    pub trial_ids: Vec<u64>,
}

/// Piecewise-linear response over the uniformed square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Surface<T: Scalar> {
    pub map: FieldMap<T>,
    pub sources: Vec<Vec<CellSource>>,
    pub nodes: Vec<SurfaceNode<T>>,
    pub triangles: Vec<[usize; 3]>,
    /// Set when the nodes were collinear and every cell is nearest-node.
    pub degenerate: bool,
}

struct Interp<'a, T: Scalar> {
    nodes: &'a [SurfaceNode<T>],
    tri: Option<Triangulation>,
}

impl<T: Scalar> Interp<'_, T> {
    fn value_at(&self, p: [T; 2]) -> (T, CellSource) {
        let q = [p[0].as_f64(), p[1].as_f64()];
        if let Some(tri) = &self.tri {
            if let Some((ti, w)) = tri.locate(q) {
                let t = tri.triangles[ti];
                let v: T = (0..3)
                    .filter(|&k| w[k] != 0.0)
                    .map(|k| T::lit(w[k]) * self.nodes[t[k]].value)
                    .sum();
                // keep rounding inside the vertex range
                let vals = t.map(|k| self.nodes[k].value);
                let lo = vals[0].min(vals[1]).min(vals[2]);
                let hi = vals[0].max(vals[1]).max(vals[2]);
                return (v.max(lo).min(hi), CellSource::Interior);
            }
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, nd) in self.nodes.iter().enumerate() {
            let dx = nd.point[0].as_f64() - q[0];
            let dy = nd.point[1].as_f64() - q[1];
            let d = dx * dx + dy * dy;
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        (self.nodes[best].value, CellSource::Exterior)
    }
}

impl<T: Scalar> Surface<T> {
    /// Interpolated value at an arbitrary point.
    pub fn value_at(&self, p: [T; 2]) -> (T, CellSource) {
        let tri = (!self.degenerate).then(|| Triangulation {
            points: self.nodes.iter().map(|n| [n.point[0].as_f64(), n.point[1].as_f64()]).collect(),
            triangles: self.triangles.clone(),
        });
        Interp {
            nodes: &self.nodes,
            tri,
        }
        .value_at(p)
    }
}

/// Interpolates responses at the embedded trials; trials without a response
/// are skipped.
pub fn interpolate<T: Scalar>(
    embedding: &LatentEmbedding<T>,
    responses: &BTreeMap<u64, T>,
    resolution: usize,
) -> Result<Surface<T>> {
    for id in responses.keys() {
        if !embedding.trial_ids.contains(id) {
            return Err(Error::invalid(format!("response for unknown trial {id}")));
        }
    }
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    let mut ids = Vec::new();
    for (id, p) in embedding.trial_ids.iter().zip(&embedding.uniformed) {
        if let Some(&v) = responses.get(id) {
            pts.push(*p);
            vals.push(v);
            ids.push(*id);
        }
    }
    interpolate_points(&pts, &vals, &ids, resolution)
}

/// Interpolates `values` at `points` (trial ids aligned) over a square
/// lattice. Collinear input falls back to nearest-node everywhere with
/// `degenerate` set; use [`interpolate_strict`] to get the error instead.
pub fn interpolate_points<T: Scalar>(
    points: &[[T; 2]],
    values: &[T],
    trial_ids: &[u64],
    resolution: usize,
) -> Result<Surface<T>> {
    match interpolate_strict(points, values, trial_ids, resolution) {
        Err(Error::Triangulation(_)) => build(points, values, trial_ids, resolution, false),
        other => other,
    }
}

/// Like [`interpolate_points`] but fails on collinear input.
pub fn interpolate_strict<T: Scalar>(
    points: &[[T; 2]],
    values: &[T],
    trial_ids: &[u64],
    resolution: usize,
) -> Result<Surface<T>> {
    build(points, values, trial_ids, resolution, true)
}

fn build<T: Scalar>(
    points: &[[T; 2]],
    values: &[T],
    trial_ids: &[u64],
    resolution: usize,
    triangulated: bool,
) -> Result<Surface<T>> {
    if points.len() != values.len() || points.len() != trial_ids.len() {
        return Err(Error::shape("interpolation input", points.len(), values.len().min(trial_ids.len())));
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    if points.is_empty() {
        return Err(Error::Triangulation("no points with responses".into()));
    }
    if values.iter().chain(points.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            parameter: "interpolation input".into(),
        });
    }
    let nodes = merge_duplicates(points, values, trial_ids);
    let tri = if triangulated {
        let coords: Vec<[f64; 2]> = nodes.iter().map(|n| [n.point[0].as_f64(), n.point[1].as_f64()]).collect();
        Some(triangulate(&coords)?)
    } else {
        None
    };
    let interp = Interp { nodes: &nodes, tri };
    let res = Resolution::square(resolution);
    let mut values = vec![vec![T::zero(); resolution]; resolution];
    let mut sources = vec![vec![CellSource::Exterior; resolution]; resolution];
    for j in 0..resolution {
        for i in 0..resolution {
            let (v, s) = interp.value_at(cell_center(res, j, i));
            values[j][i] = v;
            sources[j][i] = s;
        }
    }
    let triangles = interp.tri.map(|t| t.triangles).unwrap_or_default();
    Ok(Surface {
        map: FieldMap::new("response", res, values)?,
        sources,
        nodes,
        triangles,
        degenerate: !triangulated,
    })
}

fn merge_duplicates<T: Scalar>(points: &[[T; 2]], values: &[T], ids: &[u64]) -> Vec<SurfaceNode<T>> {
    let mut nodes: Vec<SurfaceNode<T>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut sums: Vec<T> = Vec::new();
    for ((&p, &v), &id) in points.iter().zip(values).zip(ids) {
        if let Some(k) = nodes.iter().position(|n| n.point == p) {
            nodes[k].trial_ids.push(id);
            counts[k] += 1;
            sums[k] += v;
        } else {
            nodes.push(SurfaceNode {
                point: p,
                value: v,
                trial_ids: vec![id],
            });
            counts.push(1);
            sums.push(v);
        }
    }
    for ((n, &c), &s) in nodes.iter_mut().zip(&counts).zip(&sums) {
        if c > 1 {
            n.value = s / T::from_usize_lossy(c);
        }
    }
    nodes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    #[default]
    Max,
    Min,
}

impl Goal {
    fn better<T: Scalar>(self, a: T, b: T) -> bool {
        match self {
            Goal::Max => a > b,
            Goal::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Optimum<T: Scalar> {
    pub row: usize,
    pub col: usize,
    /// Uniformed center of the winning cell.
    pub point: [T; 2],
    pub value: T,
    /// Best executed trial location.
    pub best_node: SurfaceNode<T>,
}

/// Best lattice cell (ties to the lowest row, then column) and best node.
pub fn find_optimum<T: Scalar>(surface: &Surface<T>, goal: Goal) -> Optimum<T> {
    let mut best = (0, 0, surface.map.get(0, 0));
    for (j, i, v) in surface.map.cells() {
        if goal.better(v, best.2) {
            best = (j, i, v);
        }
    }
    let mut node = &surface.nodes[0];
    for n in &surface.nodes[1..] {
        if goal.better(n.value, node.value) {
            node = n;
        }
    }
    Optimum {
        row: best.0,
        col: best.1,
        point: surface.map.center(best.0, best.1),
        value: best.2,
        best_node: node.clone(),
    }
}
