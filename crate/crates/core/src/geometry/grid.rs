use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vae::{deuniformize, uniformize, LatentSpace};

/// Half-width of the box an original-space square grid spans, in standard
/// deviations of the latent prior.
pub const SQUARE_ORIGINAL_HALF_WIDTH: f64 = 2.0;

fn uniformed() -> LatentSpace {
    LatentSpace::Uniformed
}

fn original() -> LatentSpace {
    LatentSpace::Original
}

/// Declarative latent point pattern. Rotations are in radians,
/// counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GridSpec {
    /// `nx × ny` cell centers, rotated about the center of the pattern.
    Square {
        nx: usize,
        ny: usize,
        #[serde(default)]
        rotation: f64,
        #[serde(default = "uniformed")]
        space: LatentSpace,
    },
    /// A center point plus `rings × angles` points on equal-mass rings.
    Polar {
        rings: usize,
        angles: usize,
        #[serde(default)]
        rotation: f64,
        #[serde(default = "original")]
        space: LatentSpace,
    },
    /// Two concentric 4-point squares offset by 45°.
    DoubleSquare {
        inner_radius: f64,
        outer_radius: f64,
        #[serde(default)]
        rotation: f64,
        #[serde(default = "original")]
        space: LatentSpace,
    },
    Explicit {
        points: Vec<[f64; 2]>,
        #[serde(default = "uniformed")]
        space: LatentSpace,
    },
}

impl GridSpec {
    pub fn square(nx: usize, ny: usize) -> Self {
        GridSpec::Square {
            nx,
            ny,
            rotation: 0.0,
            space: LatentSpace::Uniformed,
        }
    }

    pub fn polar(rings: usize, angles: usize) -> Self {
        GridSpec::Polar {
            rings,
            angles,
            rotation: 0.0,
            space: LatentSpace::Original,
        }
    }

    pub fn double_square(inner_radius: f64, outer_radius: f64, rotation: f64) -> Self {
        GridSpec::DoubleSquare {
            inner_radius,
            outer_radius,
            rotation,
            space: LatentSpace::Original,
        }
    }

    pub fn explicit(points: Vec<[f64; 2]>, space: LatentSpace) -> Self {
        GridSpec::Explicit { points, space }
    }

    pub fn space(&self) -> LatentSpace {
        match self {
            GridSpec::Square { space, .. }
            | GridSpec::Polar { space, .. }
            | GridSpec::DoubleSquare { space, .. }
            | GridSpec::Explicit { space, .. } => *space,
        }
    }

    /// Number of points the spec produces.
    pub fn point_count(&self) -> usize {
        match self {
            GridSpec::Square { nx, ny, .. } => nx * ny,
            GridSpec::Polar { rings, angles, .. } => rings * angles + 1,
            GridSpec::DoubleSquare { .. } => 8,
            GridSpec::Explicit { points, .. } => points.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GridSpec::Square { .. } => "square",
            GridSpec::Polar { .. } => "polar",
            GridSpec::DoubleSquare { .. } => "double-square",
            GridSpec::Explicit { .. } => "explicit",
        }
    }
}

/// Points produced from a [`GridSpec`], in the spec's coordinate space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LatentGrid<T: Scalar> {
    pub points: Vec<[T; 2]>,
    pub space: LatentSpace,
}

impl<T: Scalar> LatentGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn uniformed(&self) -> Vec<[T; 2]> {
        match self.space {
            LatentSpace::Uniformed => self.points.clone(),
            LatentSpace::Original => self.points.iter().map(|&p| uniformize(p)).collect(),
        }
    }

    pub fn original(&self) -> Vec<[T; 2]> {
        match self.space {
            LatentSpace::Original => self.points.clone(),
            LatentSpace::Uniformed => self.points.iter().map(|&p| deuniformize(p)).collect(),
        }
    }
}

/// Radius of the k-th polar ring: the 2D standard normal mass inside it is
/// `k / (rings + 1)`.
pub fn polar_ring_radius(k: usize, rings: usize) -> f64 {
    (-2.0 * (1.0 - k as f64 / (rings + 1) as f64).ln()).sqrt()
}

fn rotate(p: [f64; 2], center: [f64; 2], angle: f64) -> [f64; 2] {
    if angle == 0.0 {
        return p;
    }
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
}

fn on_circle(center: [f64; 2], r: f64, angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [center[0] + r * c, center[1] + r * s]
}

/// Generates the points of a grid specification.
pub fn make_grid<T: Scalar>(spec: &GridSpec) -> Result<LatentGrid<T>> {
    let space = spec.space();
    let center = match space {
        LatentSpace::Uniformed => [0.5, 0.5],
        LatentSpace::Original => [0.0, 0.0],
    };
    let pts: Vec<[f64; 2]> = match spec {
        &GridSpec::Square { nx, ny, rotation, .. } => {
            if nx == 0 || ny == 0 {
                return Err(Error::invalid("square grid counts must be >= 1"));
            }
            let (lo, span) = match space {
                LatentSpace::Uniformed => (0.0, 1.0),
                LatentSpace::Original => (-SQUARE_ORIGINAL_HALF_WIDTH, 2.0 * SQUARE_ORIGINAL_HALF_WIDTH),
            };
            let mut v = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let p = [
                        lo + span * (i as f64 + 0.5) / nx as f64,
                        lo + span * (j as f64 + 0.5) / ny as f64,
                    ];
                    v.push(rotate(p, center, rotation));
                }
            }
            v
        }
        &GridSpec::Polar { rings, angles, rotation, .. } => {
            if angles == 0 {
                return Err(Error::invalid("polar grid needs at least one angle"));
            }
            let mut v = vec![center];
            for k in 1..=rings {
                let r = match space {
                    LatentSpace::Original => polar_ring_radius(k, rings),
                    // equal-area rings inside the inscribed disc
                    LatentSpace::Uniformed => 0.5 * (k as f64 / (rings + 1) as f64).sqrt(),
                };
                for a in 0..angles {
                    v.push(on_circle(center, r, rotation + 2.0 * PI * a as f64 / angles as f64));
                }
            }
            v
        }
        &GridSpec::DoubleSquare {
            inner_radius,
            outer_radius,
            rotation,
            ..
        } => {
            if !(inner_radius > 0.0 && outer_radius > 0.0)
                || !inner_radius.is_finite()
                || !outer_radius.is_finite()
            {
                return Err(Error::invalid("double-square radii must be positive"));
            }
            let mut v = Vec::with_capacity(8);
            for k in 0..4 {
                v.push(on_circle(center, inner_radius, rotation + FRAC_PI_4 + k as f64 * FRAC_PI_2));
            }
            for k in 0..4 {
                v.push(on_circle(center, outer_radius, rotation + k as f64 * FRAC_PI_2));
            }
            v
        }
        GridSpec::Explicit { points, .. } => {
            if points.is_empty() {
                return Err(Error::invalid("explicit grid has no points"));
            }
            points.clone()
        }
    };
    for p in &pts {
        let ok = match space {
            LatentSpace::Uniformed => p.iter().all(|&v| v > 0.0 && v < 1.0),
            LatentSpace::Original => p.iter().all(|v| v.is_finite()),
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{} grid point ({:.4}, {:.4}) falls outside the {} domain",
                spec.kind_name(),
                p[0],
                p[1],
                match space {
                    LatentSpace::Uniformed => "uniformed (0,1)²",
                    LatentSpace::Original => "latent",
                }
            )));
        }
    }
    Ok(LatentGrid {
        points: pts.into_iter().map(|p| p.map(T::lit)).collect(),
        space,
    })
}
