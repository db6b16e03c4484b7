//! Implicit domain description: inside predicate, boundary decomposition
//! into Dirichlet/Neumann/Robin parts, and the weight function tied to the
//! Dirichlet part.
//!
//! Cell classification against the domain can use an exact geometric
//! predicate (supplied per preset for boxes, disks and annuli) or fall back
//! to corner plus lattice sampling.

use crate::weight::WeightFunction;

/// Classification of an axis-aligned box against the domain: fully contained
/// in the closure, boundary-crossing, or disjoint from the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Interior,
    Boundary,
    Exterior,
}

/// The three boundary parts of the mixed problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryPart {
    /// Essential part: solution values prescribed, weight vanishes here.
    Dirichlet,
    /// Natural part with prescribed conormal flux.
    Neumann,
    /// Part with a flux/value (Robin) combination.
    Robin,
}

/// Parameterized boundary curve. Arcs are only meaningful in two dimensions;
/// endpoints only in one.
#[derive(Debug, Clone)]
pub enum BoundaryCurve<const M: usize> {
    Segment {
        a: [f64; M],
        b: [f64; M],
        outward: [f64; M],
    },
    Arc {
        center: [f64; M],
        radius: f64,
        theta0: f64,
        theta1: f64,
        /// Outward normal points away from the center when true.
        outward_radial: bool,
    },
    Endpoint {
        x: [f64; M],
        outward: [f64; M],
    },
}

impl<const M: usize> BoundaryCurve<M> {
    /// Length of the curve (counting measure one for endpoints).
    pub fn measure(&self) -> f64 {
        match self {
            Self::Segment { a, b, .. } => (0..M)
                .map(|d| (b[d] - a[d]) * (b[d] - a[d]))
                .sum::<f64>()
                .sqrt(),
            Self::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => radius * (theta1 - theta0).abs(),
            Self::Endpoint { .. } => 1.0,
        }
    }

    /// Parameter interval of the curve.
    pub fn param_range(&self) -> (f64, f64) {
        match self {
            Self::Segment { .. } => (0.0, 1.0),
            Self::Arc { theta0, theta1, .. } => (*theta0, *theta1),
            Self::Endpoint { .. } => (0.0, 0.0),
        }
    }

    /// Point, speed `|dx/dt|` and outward normal at parameter `t`.
    pub fn at(&self, t: f64) -> ([f64; M], f64, [f64; M]) {
        match self {
            Self::Segment { a, b, outward } => {
                let p = std::array::from_fn(|d| a[d] + t * (b[d] - a[d]));
                (p, self.measure(), *outward)
            }
            Self::Arc {
                center,
                radius,
                outward_radial,
                ..
            } => {
                assert!(M == 2, "arcs are two-dimensional");
                let (s, c) = t.sin_cos();
                let mut p = *center;
                let mut normal = [0.0; M];
                p[0] += radius * c;
                p[1] += radius * s;
                let sign = if *outward_radial { 1.0 } else { -1.0 };
                normal[0] = sign * c;
                normal[1] = sign * s;
                (p, *radius, normal)
            }
            Self::Endpoint { x, outward } => (*x, 1.0, *outward),
        }
    }

    /// Distance from `x` to the curve.
    pub fn distance(&self, x: &[f64; M]) -> f64 {
        match self {
            Self::Segment { a, b, .. } => {
                let mut ab2 = 0.0;
                let mut ax_ab = 0.0;
                for d in 0..M {
                    ab2 += (b[d] - a[d]) * (b[d] - a[d]);
                    ax_ab += (x[d] - a[d]) * (b[d] - a[d]);
                }
                let t = if ab2 > 0.0 {
                    (ax_ab / ab2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (0..M)
                    .map(|d| {
                        let p = a[d] + t * (b[d] - a[d]);
                        (x[d] - p) * (x[d] - p)
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            Self::Arc {
                center,
                radius,
                theta0,
                theta1,
                ..
            } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                let mut ang = dy.atan2(dx);
                // Move the angle into the branch nearest the arc range.
                while ang < *theta0 - std::f64::consts::PI {
                    ang += 2.0 * std::f64::consts::PI;
                }
                while ang > *theta1 + std::f64::consts::PI {
                    ang -= 2.0 * std::f64::consts::PI;
                }
                if ang >= *theta0 && ang <= *theta1 {
                    (r - radius).abs()
                } else {
                    let t = if ang < *theta0 { *theta0 } else { *theta1 };
                    let (s, c) = t.sin_cos();
                    let px = center[0] + radius * c;
                    let py = center[1] + radius * s;
                    ((x[0] - px).powi(2) + (x[1] - py).powi(2)).sqrt()
                }
            }
            Self::Endpoint { x: p, .. } => (0..M)
                .map(|d| (x[d] - p[d]) * (x[d] - p[d]))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// One boundary piece: a curve tagged with the part it belongs to.
#[derive(Debug, Clone)]
pub struct BoundaryPiece<const M: usize> {
    pub curve: BoundaryCurve<M>,
    pub part: BoundaryPart,
}

type InsideFn<const M: usize> = Box<dyn Fn(&[f64; M]) -> bool + Send + Sync>;
type BoxClassFn<const M: usize> = Box<dyn Fn(&[f64; M], &[f64; M]) -> CellClass + Send + Sync>;

/// Implicit domain with boundary decomposition and weight.
pub struct DomainModel<const M: usize> {
    pub name: String,
    inside: InsideFn<M>,
    pub bbox: ([f64; M], [f64; M]),
    pub weight: WeightFunction<M>,
    pieces: Vec<BoundaryPiece<M>>,
    box_class: Option<BoxClassFn<M>>,
}

impl<const M: usize> DomainModel<M> {
    pub fn new(
        name: impl Into<String>,
        inside: InsideFn<M>,
        bbox: ([f64; M], [f64; M]),
        weight: WeightFunction<M>,
        pieces: Vec<BoundaryPiece<M>>,
    ) -> Self {
        Self {
            name: name.into(),
            inside,
            bbox,
            weight,
            pieces,
            box_class: None,
        }
    }

    /// Install an exact box classifier used instead of point sampling.
    pub fn with_box_classifier(mut self, f: BoxClassFn<M>) -> Self {
        self.box_class = Some(f);
        self
    }

    pub fn is_inside(&self, x: &[f64; M]) -> bool {
        (self.inside)(x)
    }

    pub fn pieces(&self) -> &[BoundaryPiece<M>] {
        &self.pieces
    }

    pub fn pieces_of(&self, part: BoundaryPart) -> impl Iterator<Item = &BoundaryPiece<M>> {
        self.pieces.iter().filter(move |p| p.part == part)
    }

    pub fn has_part(&self, part: BoundaryPart) -> bool {
        self.pieces.iter().any(|p| p.part == part)
    }

    /// Which boundary part a point on the boundary belongs to (nearest piece
    /// within tolerance).
    pub fn boundary_part(&self, x: &[f64; M]) -> Option<BoundaryPart> {
        let tol = 1e-9;
        let mut best: Option<(f64, BoundaryPart)> = None;
        for piece in &self.pieces {
            let d = piece.curve.distance(x);
            if d <= tol && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, piece.part));
            }
        }
        best.map(|(_, p)| p)
    }

    /// Classify an axis-aligned box: exactly when a geometric predicate was
    /// installed, otherwise by corner and 5-per-axis lattice sampling.
    pub fn classify_box(&self, lo: &[f64; M], hi: &[f64; M]) -> CellClass {
        if let Some(f) = &self.box_class {
            return f(lo, hi);
        }
        let mut any_inside = false;
        let mut all_inside = true;
        let samples_per_axis = 5usize;
        let mut idx = [0usize; M];
        loop {
            let p: [f64; M] = std::array::from_fn(|d| {
                lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (samples_per_axis - 1) as f64
            });
            if self.is_inside(&p) {
                any_inside = true;
            } else {
                all_inside = false;
            }
            // Advance the lattice counter.
            let mut d = M;
            let mut done = true;
            while d > 0 {
                d -= 1;
                idx[d] += 1;
                if idx[d] < samples_per_axis {
                    done = false;
                    break;
                }
                idx[d] = 0;
            }
            if done {
                break;
            }
        }
        if all_inside {
            CellClass::Interior
        } else if any_inside {
            CellClass::Boundary
        } else {
            CellClass::Exterior
        }
    }

    /// Deterministic sample points on a boundary part, distributed over the
    /// pieces proportionally to their measure.
    pub fn sample_boundary(&self, part: BoundaryPart, total: usize) -> Vec<[f64; M]> {
        let pieces: Vec<&BoundaryPiece<M>> = self.pieces_of(part).collect();
        let total_measure: f64 = pieces.iter().map(|p| p.curve.measure()).sum();
        let mut out = Vec::with_capacity(total);
        for piece in pieces {
            let share = if total_measure > 0.0 {
                ((piece.curve.measure() / total_measure) * total as f64).ceil() as usize
            } else {
                total
            };
            let (t0, t1) = piece.curve.param_range();
            for i in 0..share.max(1) {
                let t = t0 + (t1 - t0) * (i as f64 + 0.5) / share.max(1) as f64;
                out.push(piece.curve.at(t).0);
            }
        }
        out
    }
}

impl<const M: usize> std::fmt::Debug for DomainModel<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainModel")
            .field("name", &self.name)
            .field("bbox", &self.bbox)
            .field("pieces", &self.pieces.len())
            .finish()
    }
}

/// Squared distance from the origin-side nearest point of a box, and of its
/// farthest corner. Helpers for exact circle tests.
fn box_radius_range_sq<const M: usize>(lo: &[f64; M], hi: &[f64; M]) -> (f64, f64) {
    let mut min_sq = 0.0;
    let mut max_sq = 0.0;
    for d in 0..M {
        let nearest = if lo[d] > 0.0 {
            lo[d]
        } else if hi[d] < 0.0 {
            hi[d]
        } else {
            0.0
        };
        min_sq += nearest * nearest;
        let far = lo[d].abs().max(hi[d].abs());
        max_sq += far * far;
    }
    (min_sq, max_sq)
}

/// Exact classifier for the quarter disk `{x^2 + y^2 <= 1, x, y >= 0}`.
pub fn classify_box_quarter_disk(lo: &[f64; 2], hi: &[f64; 2]) -> CellClass {
    if hi[0] <= 0.0 || hi[1] <= 0.0 {
        return CellClass::Exterior;
    }
    let (min_sq, max_sq) = box_radius_range_sq(lo, hi);
    if min_sq >= 1.0 {
        return CellClass::Exterior;
    }
    if lo[0] >= 0.0 && lo[1] >= 0.0 && max_sq <= 1.0 {
        return CellClass::Interior;
    }
    CellClass::Boundary
}

/// Exact classifier for the quarter annulus `{1 <= x^2 + y^2 <= 4, x, y >= 0}`.
pub fn classify_box_quarter_annulus(lo: &[f64; 2], hi: &[f64; 2]) -> CellClass {
    if hi[0] <= 0.0 || hi[1] <= 0.0 {
        return CellClass::Exterior;
    }
    let (min_sq, max_sq) = box_radius_range_sq(lo, hi);
    if min_sq >= 4.0 || max_sq <= 1.0 {
        return CellClass::Exterior;
    }
    if lo[0] >= 0.0 && lo[1] >= 0.0 && max_sq <= 4.0 && min_sq >= 1.0 {
        return CellClass::Interior;
    }
    CellClass::Boundary
}

/// Exact classifier for an axis-aligned box domain.
pub fn classify_box_in_box<const M: usize>(
    dom_lo: [f64; M],
    dom_hi: [f64; M],
) -> impl Fn(&[f64; M], &[f64; M]) -> CellClass {
    move |lo, hi| {
        let mut interior = true;
        for d in 0..M {
            if hi[d] <= dom_lo[d] || lo[d] >= dom_hi[d] {
                return CellClass::Exterior;
            }
            if lo[d] < dom_lo[d] || hi[d] > dom_hi[d] {
                interior = false;
            }
        }
        if interior {
            CellClass::Interior
        } else {
            CellClass::Boundary
        }
    }
}
