//! Quadrature rules: tensor Gauss–Legendre on full cells, recursive dyadic
//! subdivision on cut cells, and composite Gauss along parameterized
//! boundary curves.
//!
//! Cut cells are handled geometry-agnostically: a boundary cell is split
//! into `2^M` children, fully interior children receive a tensor Gauss rule,
//! exterior children are dropped, and straddling children at the maximal
//! depth contribute their centroid (restricted to inside points) with the
//! child volume as weight.

use thiserror::Error;

use crate::domain::{BoundaryPart, CellClass, DomainModel};

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature requested on an exterior cell")]
    ExteriorCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    InteriorGauss,
    CutCell,
    BoundaryCurve,
}

/// Points, weights and (for boundary rules) outward normals.
#[derive(Debug, Clone)]
pub struct QuadratureRule<const M: usize> {
    pub kind: RuleKind,
    pub points: Vec<QuadPoint<M>>,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<const M: usize> {
    pub x: [f64; M],
    pub weight: f64,
    /// Outward normal for boundary-curve rules, zero otherwise.
    pub normal: [f64; M],
}

impl<const M: usize> QuadratureRule<M> {
    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; M]) -> f64) -> f64 {
        self.points.iter().map(|p| p.weight * f(&p.x)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration from the Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Tensor Gauss rule on the box `[lo, hi]` with `pts` points per axis.
pub fn tensor_gauss<const M: usize>(lo: &[f64; M], hi: &[f64; M], pts: usize) -> Vec<QuadPoint<M>> {
    let (nodes, weights) = gauss_legendre(pts);
    let mut out = Vec::with_capacity(pts.pow(M as u32));
    let mut idx = [0usize; M];
    loop {
        let mut x = [0.0; M];
        let mut w = 1.0;
        for d in 0..M {
            let mid = 0.5 * (lo[d] + hi[d]);
            let half = 0.5 * (hi[d] - lo[d]);
            x[d] = mid + half * nodes[idx[d]];
            w *= half * weights[idx[d]];
        }
        out.push(QuadPoint {
            x,
            weight: w,
            normal: [0.0; M],
        });
        let mut d = M;
        let mut done = true;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            if idx[d] < pts {
                done = false;
                break;
            }
            idx[d] = 0;
        }
        if done {
            return out;
        }
    }
}

fn subdivide_cut<const M: usize>(
    domain: &DomainModel<M>,
    lo: &[f64; M],
    hi: &[f64; M],
    pts: usize,
    depth: usize,
    out: &mut Vec<QuadPoint<M>>,
) {
    match domain.classify_box(lo, hi) {
        CellClass::Interior => out.extend(tensor_gauss(lo, hi, pts)),
        CellClass::Exterior => {}
        CellClass::Boundary => {
            if depth == 0 {
                let centroid: [f64; M] = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
                if domain.is_inside(&centroid) {
                    let volume: f64 = (0..M).map(|d| hi[d] - lo[d]).product();
                    out.push(QuadPoint {
                        x: centroid,
                        weight: volume,
                        normal: [0.0; M],
                    });
                }
                return;
            }
            // Split into 2^M children.
            let mid: [f64; M] = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
            for mask in 0..(1usize << M) {
                let clo: [f64; M] =
                    std::array::from_fn(|d| if mask >> d & 1 == 0 { lo[d] } else { mid[d] });
                let chi: [f64; M] =
                    std::array::from_fn(|d| if mask >> d & 1 == 0 { mid[d] } else { hi[d] });
                subdivide_cut(domain, &clo, &chi, pts, depth - 1, out);
            }
        }
    }
}

/// Quadrature over the part of a grid cell inside the domain.
///
/// Interior cells get a plain tensor Gauss rule (exact for polynomials of
/// degree `2*pts - 1` per axis); boundary cells are dyadically subdivided to
/// `depth` levels.
pub fn cell_quadrature<const M: usize>(
    domain: &DomainModel<M>,
    lo: &[f64; M],
    hi: &[f64; M],
    class: CellClass,
    pts: usize,
    depth: usize,
) -> Result<QuadratureRule<M>, QuadratureError> {
    match class {
        CellClass::Exterior => Err(QuadratureError::ExteriorCell),
        CellClass::Interior => Ok(QuadratureRule {
            kind: RuleKind::InteriorGauss,
            points: tensor_gauss(lo, hi, pts),
        }),
        CellClass::Boundary => {
            let mut points = Vec::new();
            subdivide_cut(domain, lo, hi, pts, depth, &mut points);
            Ok(QuadratureRule {
                kind: RuleKind::CutCell,
                points,
            })
        }
    }
}

/// Parameter values in `(t0, t1)` where the curve crosses grid hyperplanes,
/// so composite Gauss panels align with cells.
fn grid_crossings<const M: usize>(curve: &crate::domain::BoundaryCurve<M>, h: f64) -> Vec<f64> {
    use crate::domain::BoundaryCurve::*;
    let mut ts = Vec::new();
    match curve {
        Segment { a, b, .. } => {
            for d in 0..M {
                let delta = b[d] - a[d];
                if delta.abs() < 1e-14 {
                    continue;
                }
                let lo = a[d].min(b[d]);
                let hi = a[d].max(b[d]);
                let mut m = (lo / h).floor() as i64;
                while (m as f64) * h <= hi {
                    let t = ((m as f64) * h - a[d]) / delta;
                    if t > 1e-12 && t < 1.0 - 1e-12 {
                        ts.push(t);
                    }
                    m += 1;
                }
            }
        }
        Arc {
            center,
            radius,
            theta0,
            theta1,
            ..
        } => {
            // Crossings with the lines x = m h and y = m h.
            for d in 0..2usize.min(M) {
                let lo = center[d] - radius;
                let hi = center[d] + radius;
                let mut m = (lo / h).floor() as i64;
                while (m as f64) * h <= hi {
                    let c = ((m as f64) * h - center[d]) / radius;
                    if c.abs() <= 1.0 {
                        let candidates = if d == 0 {
                            let base = c.acos();
                            [base, -base]
                        } else {
                            let asin = c.asin();
                            [asin, std::f64::consts::PI - asin]
                        };
                        for t in candidates {
                            for shift in [-2.0, 0.0, 2.0] {
                                let tt = t + shift * std::f64::consts::PI;
                                if tt > theta0 + 1e-12 && tt < theta1 - 1e-12 {
                                    ts.push(tt);
                                }
                            }
                        }
                    }
                    m += 1;
                }
            }
        }
        Endpoint { .. } => {}
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    ts
}

/// Composite Gauss rule along every piece of a boundary part, with panels
/// split at grid-line crossings and at least `pts` points per panel.
pub fn boundary_quadrature<const M: usize>(
    domain: &DomainModel<M>,
    part: BoundaryPart,
    h: f64,
    pts: usize,
) -> QuadratureRule<M> {
    let (nodes, weights) = gauss_legendre(pts.max(2));
    let mut points = Vec::new();
    for piece in domain.pieces_of(part) {
        if let crate::domain::BoundaryCurve::Endpoint { x, outward } = &piece.curve {
            points.push(QuadPoint {
                x: *x,
                weight: 1.0,
                normal: *outward,
            });
            continue;
        }
        let (t0, t1) = piece.curve.param_range();
        let mut breaks = vec![t0];
        breaks.extend(grid_crossings(&piece.curve, h));
        breaks.push(t1);
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-14 {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for q in 0..nodes.len() {
                let t = mid + half * nodes[q];
                let (x, speed, normal) = piece.curve.at(t);
                points.push(QuadPoint {
                    x,
                    weight: weights[q] * half * speed,
                    normal,
                });
            }
        }
    }
    QuadratureRule {
        kind: RuleKind::BoundaryCurve,
        points,
    }
}
