use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delaunay triangulation of distinct points; triangles are counter-clockwise
/// index triples into `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

#[inline]
fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

pub(crate) fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    orient2d(c(a), c(b), c(p))
}

/// Bowyer–Watson insertion with exact predicates.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Triangulation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Triangulation(format!("{n} points cannot span a triangle")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            parameter: "triangulation points".into(),
        });
    }
    let mut seen = points.to_vec();
    seen.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Triangulation("duplicate points".into()));
    }
    let a = points[0];
    let Some(b) = points.iter().copied().find(|&p| p != a) else {
        return Err(Error::Triangulation("all points coincide".into()));
    };
    if points.iter().all(|&p| orient(a, b, p) == 0.0) {
        return Err(Error::Triangulation("all points are collinear".into()));
    }

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    // far enough that few hull edges are lost to the super triangle
    let m = 1e4 * span;
    let mut verts = points.to_vec();
    verts.push([mid[0] - 2.0 * m, mid[1] - m]);
    verts.push([mid[0] + 2.0 * m, mid[1] - m]);
    verts.push([mid[0], mid[1] + 2.0 * m]);

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for i in 0..n {
        let p = verts[i];
        let mut keep = Vec::with_capacity(tris.len() + 2);
        let mut edges: HashMap<(usize, usize), (usize, usize, u8)> = HashMap::new();
        for t in tris.drain(..) {
            let bad = incircle(c(verts[t[0]]), c(verts[t[1]]), c(verts[t[2]]), c(p)) > 0.0;
            if !bad {
                keep.push(t);
                continue;
            }
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (u.min(v), u.max(v));
                edges.entry(key).and_modify(|e| e.2 += 1).or_insert((u, v, 1));
            }
        }
        let mut boundary: Vec<(usize, usize)> = edges
            .into_values()
            .filter(|e| e.2 == 1)
            .map(|e| (e.0, e.1))
            .collect();
        boundary.sort_unstable();
        for (u, v) in boundary {
            keep.push([u, v, i]);
        }
        tris = keep;
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    tris.sort_unstable();
    Ok(Triangulation {
        points: points.to_vec(),
        triangles: tris,
    })
}

impl Triangulation {
    /// Index of a triangle containing `p` (boundary included) and the
    /// barycentric weights of its vertices.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        for (ti, t) in self.triangles.iter().enumerate() {
            let [a, b, cc] = t.map(|v| self.points[v]);
            if p[0] < a[0].min(b[0]).min(cc[0])
                || p[0] > a[0].max(b[0]).max(cc[0])
                || p[1] < a[1].min(b[1]).min(cc[1])
                || p[1] > a[1].max(b[1]).max(cc[1])
            {
                continue;
            }
            let wa = orient(b, cc, p);
            let wb = orient(cc, a, p);
            let wc = orient(a, b, p);
            if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                continue;
            }
            for (k, &v) in t.iter().enumerate() {
                if self.points[v] == p {
                    let mut w = [0.0; 3];
                    w[k] = 1.0;
                    return Some((ti, w));
                }
            }
            let total = wa + wb + wc;
            return Some((ti, [wa / total, wb / total, wc / total]));
        }
        None
    }
}
