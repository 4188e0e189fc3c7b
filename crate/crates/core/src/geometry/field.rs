use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::vae::{LatentSpace, VaeModel};

/// Lattice size over the uniformed square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub fn square(n: usize) -> Self {
        Self { width: n, height: n }
    }
}

/// Values on an H×W lattice; cell (row j, col i) is centered at
/// ((i + 0.5)/W, (j + 0.5)/H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FieldMap<T: Scalar> {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Row-major, `values[row][col]`.
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> FieldMap<T> {
    pub fn new(name: impl Into<String>, res: Resolution, values: Vec<Vec<T>>) -> Result<Self> {
        if values.len() != res.height || values.iter().any(|r| r.len() != res.width) {
            return Err(Error::shape("field values", format!("{}x{}", res.height, res.width), "ragged"));
        }
        Ok(Self {
            name: name.into(),
            width: res.width,
            height: res.height,
            values,
        })
    }

    pub fn resolution(&self) -> Resolution {
        Resolution {
            width: self.width,
            height: self.height,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row][col]
    }

    pub fn center(&self, row: usize, col: usize) -> [T; 2] {
        cell_center(self.resolution(), row, col)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(j, r)| r.iter().enumerate().map(move |(i, &v)| (j, i, v)))
    }

    pub fn max(&self) -> T {
        self.cells().map(|c| c.2).fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.cells().map(|c| c.2).fold(T::infinity(), T::min)
    }

    /// Riemann sum over the unit square.
    pub fn integral(&self) -> T {
        let area = T::one() / T::from_usize_lossy(self.width * self.height);
        self.cells().map(|c| c.2).sum::<T>() * area
    }

    /// CSV with columns `x, y, value` (cell centers, row-major).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "value"])?;
        for (j, i, v) in self.cells() {
            let c = self.center(j, i);
            w.write_record([c[0].to_string(), c[1].to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn cell_center<T: Scalar>(res: Resolution, row: usize, col: usize) -> [T; 2] {
    [
        T::lit((col as f64 + 0.5) / res.width as f64),
        T::lit((row as f64 + 0.5) / res.height as f64),
    ]
}

/// Every cell center, row-major.
pub fn lattice_points<T: Scalar>(res: Resolution) -> Vec<[T; 2]> {
    let mut v = Vec::with_capacity(res.width * res.height);
    for j in 0..res.height {
        for i in 0..res.width {
            v.push(cell_center(res, j, i));
        }
    }
    v
}

fn sample_std<T: Scalar>(v: impl Iterator<Item = T> + Clone) -> T {
    let n = v.clone().count();
    if n < 2 {
        return T::zero();
    }
    let nf = T::from_usize_lossy(n);
    let mean = v.clone().sum::<T>() / nf;
    (v.map(|x| (x - mean) * (x - mean)).sum::<T>() / (nf - T::one())).sqrt()
}

/// Gaussian kernel mass at `x` from a point at `p`, reflected at 0 and 1.
#[inline]
fn reflected_kernel<T: Scalar>(x: T, p: T, h: T) -> T {
    let two = T::lit(2.0);
    let k = |d: T| (-(d * d) / (two * h * h)).exp();
    k(x - p) + k(x + p) + k(x - (two - p))
}

/// Kernel density estimate of uniformed points, normalized to integrate to 1.
///
/// Gaussian product kernel with Scott bandwidth `n^(-1/6) · std` per axis
/// (floored at half a cell), reflected at the square's edges.
pub fn density_map<T: Scalar>(points: &[[T; 2]], res: Resolution) -> Result<FieldMap<T>> {
    if points.is_empty() {
        return Err(Error::invalid("density map needs at least one point"));
    }
    if res.width == 0 || res.height == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    let n = points.len();
    let scott = T::lit((n as f64).powf(-1.0 / 6.0));
    let hx = (scott * sample_std(points.iter().map(|p| p[0])))
        .max(T::lit(0.5 / res.width as f64));
    let hy = (scott * sample_std(points.iter().map(|p| p[1])))
        .max(T::lit(0.5 / res.height as f64));
    // separable: density = Kyᵀ · Kx
    let mut kx = Matrix::<T>::zeros(n, res.width);
    let mut ky = Matrix::<T>::zeros(n, res.height);
    for (p, pt) in points.iter().enumerate() {
        for i in 0..res.width {
            let x = T::lit((i as f64 + 0.5) / res.width as f64);
            kx[(p, i)] = reflected_kernel(x, pt[0], hx);
        }
        for j in 0..res.height {
            let y = T::lit((j as f64 + 0.5) / res.height as f64);
            ky[(p, j)] = reflected_kernel(y, pt[1], hy);
        }
    }
    let mut values = vec![vec![T::zero(); res.width]; res.height];
    for p in 0..n {
        let kxr = kx.row(p);
        for (j, row) in values.iter_mut().enumerate() {
            let a = ky[(p, j)];
            if a != T::zero() {
                crate::nn::kernels::axpy(a, kxr, row);
            }
        }
    }
    let total: T = values.iter().flatten().copied().sum();
    let scale = if total > T::zero() {
        T::from_usize_lossy(res.width * res.height) / total
    } else {
        T::zero()
    };
    for v in values.iter_mut().flatten() {
        *v *= scale;
    }
    FieldMap::new("density", res, values)
}

/// Something that maps uniformed points to per-factor levels in [0,1].
pub trait FactorField<T: Scalar> {
    fn normalized_levels(&self, uniformed: &[[T; 2]]) -> Result<Matrix<T>>;
}

/// Decoded levels snapped to the declared ones, so flat regions read zero.
impl<T: Scalar> FactorField<T> for VaeModel<T> {
    fn normalized_levels(&self, uniformed: &[[T; 2]]) -> Result<Matrix<T>> {
        VaeModel::normalized_levels(self, uniformed, LatentSpace::Uniformed, true)
    }
}

/// Adapts a closure `point -> levels` into a [`FactorField`].
pub struct FnField<F>(pub F);

impl<T: Scalar, F: Fn([T; 2]) -> Vec<T>> FactorField<T> for FnField<F> {
    fn normalized_levels(&self, uniformed: &[[T; 2]]) -> Result<Matrix<T>> {
        let rows: Vec<Vec<T>> = uniformed.iter().map(|&p| (self.0)(p)).collect();
        Matrix::from_rows(&rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Max,
}

/// Aggregated absolute finite-difference gradient of decoded factor levels.
///
/// Central differences along both uniformed axes (one-sided at the edges);
/// `Sum` adds every |ΔF/ΔL| term, `Max` keeps the largest.
pub fn gradient_map<T: Scalar>(
    field: &impl FactorField<T>,
    res: Resolution,
    agg: Aggregation,
) -> Result<FieldMap<T>> {
    if res.width < 3 || res.height < 3 {
        return Err(Error::invalid("gradient map needs at least 3 cells per axis"));
    }
    let levels = field.normalized_levels(&lattice_points(res))?;
    let nf = levels.cols();
    let at = |j: usize, i: usize| levels.row(j * res.width + i);
    let (w, h) = (res.width, res.height);
    let dx = T::lit(1.0 / w as f64);
    let dy = T::lit(1.0 / h as f64);
    let mut values = vec![vec![T::zero(); w]; h];
    for j in 0..h {
        for i in 0..w {
            let (xl, xr, xs) = if i == 0 {
                (0, 1, dx)
            } else if i == w - 1 {
                (w - 2, w - 1, dx)
            } else {
                (i - 1, i + 1, dx + dx)
            };
            let (yl, yr, ys) = if j == 0 {
                (0, 1, dy)
            } else if j == h - 1 {
                (h - 2, h - 1, dy)
            } else {
                (j - 1, j + 1, dy + dy)
            };
            let mut acc = T::zero();
            for f in 0..nf {
                let gx = ((at(j, xr)[f] - at(j, xl)[f]) / xs).abs();
                let gy = ((at(yr, i)[f] - at(yl, i)[f]) / ys).abs();
                acc = match agg {
                    Aggregation::Sum => acc + gx + gy,
                    Aggregation::Max => acc.max(gx).max(gy),
                };
            }
            values[j][i] = acc;
        }
    }
    let name = match agg {
        Aggregation::Sum => "gradient-sum",
        Aggregation::Max => "gradient-max",
    };
    FieldMap::new(name, res, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BorderCell<T: Scalar> {
    pub row: usize,
    pub col: usize,
    pub x: T,
    pub y: T,
    pub value: T,
}

/// Cells whose value reaches `threshold`.
pub fn extract_borders<T: Scalar>(map: &FieldMap<T>, threshold: T) -> Vec<BorderCell<T>> {
    map.cells()
        .filter(|&(_, _, v)| v >= threshold)
        .map(|(row, col, value)| {
            let c = map.center(row, col);
            BorderCell {
                row,
                col,
                x: c[0],
                y: c[1],
                value,
            }
        })
        .collect()
}

/// Labels 4-connected regions of cells below `threshold`; border cells get
/// `None`. Returns the labels and the segment count.
pub fn low_gradient_segments<T: Scalar>(map: &FieldMap<T>, threshold: T) -> (Vec<Vec<Option<usize>>>, usize) {
    let (w, h) = (map.width, map.height);
    let mut labels = vec![vec![None; w]; h];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for j in 0..h {
        for i in 0..w {
            if labels[j][i].is_some() || map.get(j, i) >= threshold {
                continue;
            }
            labels[j][i] = Some(count);
            queue.push_back((j, i));
            while let Some((cj, ci)) = queue.pop_front() {
                let mut nbrs = Vec::with_capacity(4);
                if cj > 0 {
                    nbrs.push((cj - 1, ci));
                }
                if cj + 1 < h {
                    nbrs.push((cj + 1, ci));
                }
                if ci > 0 {
                    nbrs.push((cj, ci - 1));
                }
                if ci + 1 < w {
                    nbrs.push((cj, ci + 1));
                }
                for (nj, ni) in nbrs {
                    if labels[nj][ni].is_none() && map.get(nj, ni) < threshold {
                        labels[nj][ni] = Some(count);
                        queue.push_back((nj, ni));
                    }
                }
            }
            count += 1;
        }
    }
    (labels, count)
}
