//! Built-in problems: the population-dynamics system on the quarter disk
//! (and its quarter-annulus variant), plus manufactured problems with known
//! exact solutions for verification.

use std::f64::consts::PI;

use thiserror::Error;

use crate::domain::{
    classify_box_in_box, classify_box_quarter_annulus, classify_box_quarter_disk, BoundaryCurve,
    BoundaryPart, BoundaryPiece, DomainModel,
};
use crate::problem::{ProblemData, SmoothField, SPECIES};
use crate::util::XorShift64;
use crate::weight::{WeightCombine, WeightExpr, WeightFunction, WeightPrimitive};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown problem preset `{0}`")]
    UnknownKind(String),
}

/// Exact solution pair with analytic derivatives.
pub struct ExactSolution<const M: usize> {
    pub fields: [SmoothField<M>; SPECIES],
}

/// A complete built-in problem.
pub struct ProblemPreset<const M: usize> {
    pub name: &'static str,
    pub domain: DomainModel<M>,
    pub data: ProblemData<M>,
    pub exact: Option<ExactSolution<M>>,
    /// Set when the diffusion matrix is not uniformly positive definite on
    /// the domain; solvers must expect indefinite blocks.
    pub warn_nonelliptic: bool,
}

/// Either spatial dimension, for runtime dispatch in the CLI.
pub enum AnyPreset {
    One(Box<ProblemPreset<1>>),
    Two(Box<ProblemPreset<2>>),
}

pub const PRESET_NAMES: [&str; 6] = [
    "population",
    "population-annulus",
    "poisson1d",
    "coupled_smooth",
    "dirichlet_only",
    "dirichlet_neumann",
];

pub fn preset_by_name(name: &str) -> Result<AnyPreset, PresetError> {
    match name {
        "population" => Ok(AnyPreset::Two(Box::new(preset_population()))),
        "population-annulus" => Ok(AnyPreset::Two(Box::new(preset_population_annulus()))),
        "poisson1d" => Ok(AnyPreset::One(Box::new(preset_poisson1d()))),
        "coupled_smooth" => Ok(AnyPreset::Two(Box::new(preset_coupled_smooth()))),
        "dirichlet_only" => Ok(AnyPreset::Two(Box::new(preset_dirichlet_only()))),
        "dirichlet_neumann" => Ok(AnyPreset::Two(Box::new(preset_dirichlet_neumann()))),
        other => Err(PresetError::UnknownKind(other.to_string())),
    }
}

fn segment(a: [f64; 2], b: [f64; 2], outward: [f64; 2], part: BoundaryPart) -> BoundaryPiece<2> {
    BoundaryPiece {
        curve: BoundaryCurve::Segment { a, b, outward },
        part,
    }
}

/// Population-dynamics steady state on the quarter disk.
///
/// Diffusion `P = [[x^2 y, y], [y, y]]`, couplings `0.05 y` and `2 x^2`,
/// right sides `-e^{x+y}`; solution values `y` on `x = 0`, unit conormal
/// flux on `y = 0`, homogeneous Robin data with unit coefficient on the arc.
/// The weight is the half-plane factor `x` vanishing exactly on the
/// Dirichlet part.
pub fn preset_population() -> ProblemPreset<2> {
    let weight = WeightFunction::from_primitives(
        &[WeightPrimitive::half_plane([1.0, 0.0], 0.0)],
        WeightCombine::RConjunction,
    );
    let domain = DomainModel::new(
        "quarter_disk",
        Box::new(|p: &[f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] * p[0] + p[1] * p[1] <= 1.0),
        ([0.0, 0.0], [1.0, 1.0]),
        weight,
        vec![
            segment([0.0, 0.0], [0.0, 1.0], [-1.0, 0.0], BoundaryPart::Dirichlet),
            segment([0.0, 0.0], [1.0, 0.0], [0.0, -1.0], BoundaryPart::Neumann),
            BoundaryPiece {
                curve: BoundaryCurve::Arc {
                    center: [0.0, 0.0],
                    radius: 1.0,
                    theta0: 0.0,
                    theta1: std::f64::consts::FRAC_PI_2,
                    outward_radial: true,
                },
                part: BoundaryPart::Robin,
            },
        ],
    )
    .with_box_classifier(Box::new(classify_box_quarter_disk));

    let data = population_data();
    ProblemPreset {
        name: "population",
        domain,
        data,
        exact: None,
        warn_nonelliptic: true,
    }
}

fn population_data() -> ProblemData<2> {
    ProblemData {
        diffusion: Box::new(|p| [[p[0] * p[0] * p[1], p[1]], [p[1], p[1]]]),
        diffusion_div: Box::new(|p| [2.0 * p[0] * p[1] + 1.0, 1.0]),
        tau: [
            Box::new(|p: &[f64; 2]| 2.0 * p[0] * p[0]),
            Box::new(|p: &[f64; 2]| 0.05 * p[1]),
        ],
        sigma: [Box::new(|_| 1.0), Box::new(|_| 1.0)],
        source: [
            Box::new(|p: &[f64; 2]| -(p[0] + p[1]).exp()),
            Box::new(|p: &[f64; 2]| -(p[0] + p[1]).exp()),
        ],
        neumann: [Box::new(|_| 1.0), Box::new(|_| 1.0)],
        robin: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        lift: [lift_y(), lift_y()],
    }
}

fn lift_y() -> SmoothField<2> {
    SmoothField {
        value: Box::new(|p: &[f64; 2]| p[1]),
        gradient: Box::new(|_| [0.0, 1.0]),
        hessian: Box::new(|_| [[0.0; 2]; 2]),
    }
}

/// The same population system posed on the quarter annulus `1 <= r <= 2`
/// with the product weight `(x^2 + y^2 - 1)(4 - x^2 - y^2)` vanishing on
/// both circular arcs, which become the Dirichlet part; the straight edges
/// carry the Neumann and Robin data.
pub fn preset_population_annulus() -> ProblemPreset<2> {
    let weight = WeightFunction::new(WeightExpr::Product(
        Box::new(WeightExpr::Primitive(WeightPrimitive::CircleOutside {
            center: [0.0, 0.0],
            radius: 1.0,
        })),
        Box::new(WeightExpr::Primitive(WeightPrimitive::CircleInside {
            center: [0.0, 0.0],
            radius: 2.0,
        })),
    ));
    let domain = DomainModel::new(
        "quarter_annulus",
        Box::new(|p: &[f64; 2]| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            p[0] >= 0.0 && p[1] >= 0.0 && (1.0..=4.0).contains(&r2)
        }),
        ([0.0, 0.0], [2.0, 2.0]),
        weight,
        vec![
            BoundaryPiece {
                curve: BoundaryCurve::Arc {
                    center: [0.0, 0.0],
                    radius: 1.0,
                    theta0: 0.0,
                    theta1: std::f64::consts::FRAC_PI_2,
                    outward_radial: false,
                },
                part: BoundaryPart::Dirichlet,
            },
            BoundaryPiece {
                curve: BoundaryCurve::Arc {
                    center: [0.0, 0.0],
                    radius: 2.0,
                    theta0: 0.0,
                    theta1: std::f64::consts::FRAC_PI_2,
                    outward_radial: true,
                },
                part: BoundaryPart::Dirichlet,
            },
            segment([1.0, 0.0], [2.0, 0.0], [0.0, -1.0], BoundaryPart::Neumann),
            segment([0.0, 1.0], [0.0, 2.0], [-1.0, 0.0], BoundaryPart::Robin),
        ],
    )
    .with_box_classifier(Box::new(classify_box_quarter_annulus));

    ProblemPreset {
        name: "population-annulus",
        domain,
        data: population_data(),
        exact: None,
        warn_nonelliptic: true,
    }
}

/// `-u'' = 1` on (0, 1) with homogeneous Dirichlet ends, posed twice (the
/// two species are decoupled); exact solution `x(1-x)/2`.
pub fn preset_poisson1d() -> ProblemPreset<1> {
    let weight = WeightFunction::from_primitives(
        &[
            WeightPrimitive::half_plane([1.0], 0.0),
            WeightPrimitive::half_plane([-1.0], 1.0),
        ],
        WeightCombine::Product,
    );
    let domain = DomainModel::new(
        "unit_interval",
        Box::new(|p: &[f64; 1]| (0.0..=1.0).contains(&p[0])),
        ([0.0], [1.0]),
        weight,
        vec![
            BoundaryPiece {
                curve: BoundaryCurve::Endpoint {
                    x: [0.0],
                    outward: [-1.0],
                },
                part: BoundaryPart::Dirichlet,
            },
            BoundaryPiece {
                curve: BoundaryCurve::Endpoint {
                    x: [1.0],
                    outward: [1.0],
                },
                part: BoundaryPart::Dirichlet,
            },
        ],
    )
    .with_box_classifier(Box::new(classify_box_in_box([0.0], [1.0])));

    let exact1 = SmoothField::<1> {
        value: Box::new(|p: &[f64; 1]| p[0] * (1.0 - p[0]) / 2.0),
        gradient: Box::new(|p: &[f64; 1]| [(1.0 - 2.0 * p[0]) / 2.0]),
        hessian: Box::new(|_| [[-1.0]]),
    };
    // The second species solves the doubled problem so that the two
    // components differ and energy identities are exercised nontrivially.
    let exact2 = SmoothField::<1> {
        value: Box::new(|p: &[f64; 1]| p[0] * (1.0 - p[0])),
        gradient: Box::new(|p: &[f64; 1]| [1.0 - 2.0 * p[0]]),
        hessian: Box::new(|_| [[-2.0]]),
    };

    let data = ProblemData::<1> {
        diffusion: Box::new(|_| [[1.0]]),
        diffusion_div: Box::new(|_| [0.0]),
        tau: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        sigma: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        // Species 1 solves -u'' = 1; species 2 solves +u'' = -2 through the
        // second equation's sign convention.
        source: [Box::new(|_| 1.0), Box::new(|_| -2.0)],
        neumann: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        robin: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        lift: [SmoothField::zero(), SmoothField::zero()],
    };

    ProblemPreset {
        name: "poisson1d",
        domain,
        data,
        exact: Some(ExactSolution {
            fields: [exact1, exact2],
        }),
        warn_nonelliptic: false,
    }
}

fn unit_square(weight: WeightFunction<2>, pieces: Vec<BoundaryPiece<2>>) -> DomainModel<2> {
    DomainModel::new(
        "unit_square",
        Box::new(|p: &[f64; 2]| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])),
        ([0.0, 0.0], [1.0, 1.0]),
        weight,
        pieces,
    )
    .with_box_classifier(Box::new(classify_box_in_box([0.0, 0.0], [1.0, 1.0])))
}

fn sine_field() -> SmoothField<2> {
    SmoothField {
        value: Box::new(|p: &[f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin()),
        gradient: Box::new(|p: &[f64; 2]| {
            [
                PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
            ]
        }),
        hessian: Box::new(|p: &[f64; 2]| {
            let ss = (PI * p[0]).sin() * (PI * p[1]).sin();
            let cc = (PI * p[0]).cos() * (PI * p[1]).cos();
            [[-PI * PI * ss, PI * PI * cc], [PI * PI * cc, -PI * PI * ss]]
        }),
    }
}

const TAU_SMOOTH: f64 = 0.01;

/// Coupled smooth problem on the unit square with all three boundary parts:
/// Dirichlet on `x = 0` and `x = 1`, Neumann on `y = 1`, Robin on `y = 0`.
/// Exact solutions `sin(pi x) sin(pi y)` and `x(1 - x)`; the second lies in
/// the weighted trial space at every grid width.
pub fn preset_coupled_smooth() -> ProblemPreset<2> {
    let weight = WeightFunction::from_primitives(
        &[
            WeightPrimitive::half_plane([1.0, 0.0], 0.0),
            WeightPrimitive::half_plane([-1.0, 0.0], 1.0),
        ],
        WeightCombine::Product,
    );
    let domain = unit_square(
        weight,
        vec![
            segment([0.0, 0.0], [0.0, 1.0], [-1.0, 0.0], BoundaryPart::Dirichlet),
            segment([1.0, 0.0], [1.0, 1.0], [1.0, 0.0], BoundaryPart::Dirichlet),
            segment([0.0, 1.0], [1.0, 1.0], [0.0, 1.0], BoundaryPart::Neumann),
            segment([0.0, 0.0], [1.0, 0.0], [0.0, -1.0], BoundaryPart::Robin),
        ],
    );

    let u2 = || SmoothField::<2> {
        value: Box::new(|p: &[f64; 2]| p[0] * (1.0 - p[0])),
        gradient: Box::new(|p: &[f64; 2]| [1.0 - 2.0 * p[0], 0.0]),
        hessian: Box::new(|_| [[-2.0, 0.0], [0.0, 0.0]]),
    };

    let data = ProblemData::<2> {
        diffusion: Box::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
        diffusion_div: Box::new(|_| [0.0, 0.0]),
        tau: [Box::new(|_| TAU_SMOOTH), Box::new(|_| TAU_SMOOTH)],
        sigma: [Box::new(|_| 1.0), Box::new(|_| 1.0)],
        source: [
            // f1 = -lap(u1) - tau2 u2 = 2 pi^2 sin sin - tau x(1-x)
            Box::new(|p: &[f64; 2]| {
                2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
                    - TAU_SMOOTH * p[0] * (1.0 - p[0])
            }),
            // f2 = lap(u2) + tau1 u1 = -2 + tau sin sin
            Box::new(|p: &[f64; 2]| -2.0 + TAU_SMOOTH * (PI * p[0]).sin() * (PI * p[1]).sin()),
        ],
        neumann: [
            // On y = 1 with nu = (0, 1): g1 = d_y u1 = -pi sin(pi x).
            Box::new(|p: &[f64; 2]| -PI * (PI * p[0]).sin()),
            // g2 = -d_y u2 = 0.
            Box::new(|_| 0.0),
        ],
        robin: [
            // On y = 0 with nu = (0, -1): h1 = -d_y u1 + u1 = -pi sin(pi x).
            Box::new(|p: &[f64; 2]| -PI * (PI * p[0]).sin()),
            // h2 = +d_y u2 + u2 = x(1 - x).
            Box::new(|p: &[f64; 2]| p[0] * (1.0 - p[0])),
        ],
        lift: [SmoothField::zero(), SmoothField::zero()],
    };

    ProblemPreset {
        name: "coupled_smooth",
        domain,
        data,
        exact: Some(ExactSolution {
            fields: [sine_field(), u2()],
        }),
        warn_nonelliptic: false,
    }
}

/// Fully Dirichlet problem on the unit square; both boundary-term groups of
/// the error bounds vanish.
pub fn preset_dirichlet_only() -> ProblemPreset<2> {
    let weight = WeightFunction::from_primitives(
        &[
            WeightPrimitive::half_plane([1.0, 0.0], 0.0),
            WeightPrimitive::half_plane([-1.0, 0.0], 1.0),
            WeightPrimitive::half_plane([0.0, 1.0], 0.0),
            WeightPrimitive::half_plane([0.0, -1.0], 1.0),
        ],
        WeightCombine::Product,
    );
    let domain = unit_square(
        weight,
        vec![
            segment([0.0, 0.0], [0.0, 1.0], [-1.0, 0.0], BoundaryPart::Dirichlet),
            segment([1.0, 0.0], [1.0, 1.0], [1.0, 0.0], BoundaryPart::Dirichlet),
            segment([0.0, 0.0], [1.0, 0.0], [0.0, -1.0], BoundaryPart::Dirichlet),
            segment([0.0, 1.0], [1.0, 1.0], [0.0, 1.0], BoundaryPart::Dirichlet),
        ],
    );

    let u2 = || SmoothField::<2> {
        value: Box::new(|p: &[f64; 2]| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])),
        gradient: Box::new(|p: &[f64; 2]| {
            [
                (1.0 - 2.0 * p[0]) * p[1] * (1.0 - p[1]),
                p[0] * (1.0 - p[0]) * (1.0 - 2.0 * p[1]),
            ]
        }),
        hessian: Box::new(|p: &[f64; 2]| {
            [
                [
                    -2.0 * p[1] * (1.0 - p[1]),
                    (1.0 - 2.0 * p[0]) * (1.0 - 2.0 * p[1]),
                ],
                [
                    (1.0 - 2.0 * p[0]) * (1.0 - 2.0 * p[1]),
                    -2.0 * p[0] * (1.0 - p[0]),
                ],
            ]
        }),
    };

    let data = ProblemData::<2> {
        diffusion: Box::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
        diffusion_div: Box::new(|_| [0.0, 0.0]),
        tau: [Box::new(|_| TAU_SMOOTH), Box::new(|_| TAU_SMOOTH)],
        sigma: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        source: [
            Box::new(|p: &[f64; 2]| {
                2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
                    - TAU_SMOOTH * p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
            }),
            Box::new(|p: &[f64; 2]| {
                -2.0 * (p[1] * (1.0 - p[1]) + p[0] * (1.0 - p[0]))
                    + TAU_SMOOTH * (PI * p[0]).sin() * (PI * p[1]).sin()
            }),
        ],
        neumann: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        robin: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        lift: [SmoothField::zero(), SmoothField::zero()],
    };

    ProblemPreset {
        name: "dirichlet_only",
        domain,
        data,
        exact: Some(ExactSolution {
            fields: [sine_field(), u2()],
        }),
        warn_nonelliptic: false,
    }
}

/// Dirichlet/Neumann problem on the unit square (no Robin part).
pub fn preset_dirichlet_neumann() -> ProblemPreset<2> {
    let weight = WeightFunction::from_primitives(
        &[
            WeightPrimitive::half_plane([1.0, 0.0], 0.0),
            WeightPrimitive::half_plane([-1.0, 0.0], 1.0),
            WeightPrimitive::half_plane([0.0, 1.0], 0.0),
        ],
        WeightCombine::Product,
    );
    let domain = unit_square(
        weight,
        vec![
            segment([0.0, 0.0], [0.0, 1.0], [-1.0, 0.0], BoundaryPart::Dirichlet),
            segment([1.0, 0.0], [1.0, 1.0], [1.0, 0.0], BoundaryPart::Dirichlet),
            segment([0.0, 0.0], [1.0, 0.0], [0.0, -1.0], BoundaryPart::Dirichlet),
            segment([0.0, 1.0], [1.0, 1.0], [0.0, 1.0], BoundaryPart::Neumann),
        ],
    );

    let u2 = || SmoothField::<2> {
        value: Box::new(|p: &[f64; 2]| p[0] * (1.0 - p[0]) * p[1]),
        gradient: Box::new(|p: &[f64; 2]| [(1.0 - 2.0 * p[0]) * p[1], p[0] * (1.0 - p[0])]),
        hessian: Box::new(|p: &[f64; 2]| {
            [[-2.0 * p[1], 1.0 - 2.0 * p[0]], [1.0 - 2.0 * p[0], 0.0]]
        }),
    };

    let data = ProblemData::<2> {
        diffusion: Box::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
        diffusion_div: Box::new(|_| [0.0, 0.0]),
        tau: [Box::new(|_| TAU_SMOOTH), Box::new(|_| TAU_SMOOTH)],
        sigma: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        source: [
            Box::new(|p: &[f64; 2]| {
                2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
                    - TAU_SMOOTH * p[0] * (1.0 - p[0]) * p[1]
            }),
            Box::new(|p: &[f64; 2]| {
                -2.0 * p[1] + TAU_SMOOTH * (PI * p[0]).sin() * (PI * p[1]).sin()
            }),
        ],
        neumann: [
            Box::new(|p: &[f64; 2]| -PI * (PI * p[0]).sin()),
            Box::new(|p: &[f64; 2]| -p[0] * (1.0 - p[0])),
        ],
        robin: [Box::new(|_| 0.0), Box::new(|_| 0.0)],
        lift: [SmoothField::zero(), SmoothField::zero()],
    };

    ProblemPreset {
        name: "dirichlet_neumann",
        domain,
        data,
        exact: Some(ExactSolution {
            fields: [sine_field(), u2()],
        }),
        warn_nonelliptic: false,
    }
}

/// Sample the ellipticity quotient `P(x) xi . xi / |xi|^2` at random inside
/// points and directions; returns the observed (min, max).
pub fn sample_ellipticity<const M: usize>(
    preset: &ProblemPreset<M>,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = XorShift64::new(seed);
    let (lo, hi) = preset.domain.bbox;
    let mut min_q = f64::INFINITY;
    let mut max_q = f64::NEG_INFINITY;
    let mut found = 0;
    while found < samples {
        let x = rng.point_in(&lo, &hi);
        if !preset.domain.is_inside(&x) {
            continue;
        }
        let mut xi = [0.0; M];
        let mut norm = 0.0;
        for v in xi.iter_mut() {
            *v = rng.uniform(-1.0, 1.0);
            norm += *v * *v;
        }
        if norm < 1e-12 {
            continue;
        }
        let p = (preset.data.diffusion)(&x);
        let mut q = 0.0;
        for a in 0..M {
            for b in 0..M {
                q += p[a][b] * xi[a] * xi[b];
            }
        }
        q /= norm;
        min_q = min_q.min(q);
        max_q = max_q.max(q);
        found += 1;
    }
    (min_q, max_q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_reference_values() {
        let preset = preset_population();
        let p = (preset.data.diffusion)(&[1.0, 1.0]);
        assert_eq!(p, [[1.0, 1.0], [1.0, 1.0]]);
        // Coupling of species 2 into the first equation at (0, 2).
        assert!(((preset.data.tau[1])(&[0.0, 2.0]) - 0.1).abs() < 1e-15);
        assert_eq!(
            preset.domain.boundary_part(&[0.0, 0.5]),
            Some(BoundaryPart::Dirichlet)
        );
        assert_eq!(
            preset.domain.boundary_part(&[0.5, 0.0]),
            Some(BoundaryPart::Neumann)
        );
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(
            preset.domain.boundary_part(&[inv, inv]),
            Some(BoundaryPart::Robin)
        );
    }

    #[test]
    fn population_diffusion_is_symmetric_but_not_elliptic() {
        let preset = preset_population();
        let mut rng = XorShift64::new(3);
        for _ in 0..100 {
            let x = [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)];
            let p = (preset.data.diffusion)(&x);
            assert_eq!(p[0][1], p[1][0]);
        }
        let (c1, c2) = sample_ellipticity(&preset, 100, 0);
        assert!(c2 > 0.0);
        // det P = y^2 (x^2 - 1) <= 0 on the quarter disk: indefinite.
        assert!(c1 <= 0.0, "expected sampled indefiniteness, got C1={c1}");
        assert!(preset.warn_nonelliptic);
    }

    #[test]
    fn manufactured_ellipticity_is_positive() {
        let (c1, c2) = sample_ellipticity(&preset_coupled_smooth(), 100, 0);
        assert!(c1 > 0.9 && c2 < 1.1);
    }

    #[test]
    fn tau_positive_almost_everywhere() {
        let population = preset_population();
        let smooth = preset_coupled_smooth();
        let mut rng = XorShift64::new(9);
        for _ in 0..100 {
            let x = [rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)];
            assert!((population.data.tau[0])(&x) > 0.0);
            assert!((population.data.tau[1])(&x) > 0.0);
            assert!((smooth.data.tau[0])(&x) > 0.0);
        }
    }

    fn check_substitution<const M: usize>(preset: &ProblemPreset<M>, seed: u64) {
        let exact = preset
            .exact
            .as_ref()
            .expect("preset must have an exact pair");
        let mut rng = XorShift64::new(seed);
        let (lo, hi) = preset.domain.bbox;
        let mut checked = 0;
        while checked < 200 {
            let x = rng.point_in(&lo, &hi);
            if !preset.domain.is_inside(&x) {
                continue;
            }
            for s in 0..SPECIES {
                let grad = (exact.fields[s].gradient)(&x);
                let hess = (exact.fields[s].hessian)(&x);
                let other = (exact.fields[1 - s].value)(&x);
                let r = preset.data.strong_residual(s, &x, &grad, &hess, other);
                assert!(
                    r.abs() < 1e-10,
                    "{}: species {s} residual {r} at {x:?}",
                    preset.name
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn manufactured_solutions_satisfy_the_strong_form() {
        check_substitution(&preset_poisson1d(), 1);
        check_substitution(&preset_coupled_smooth(), 2);
        check_substitution(&preset_dirichlet_only(), 3);
        check_substitution(&preset_dirichlet_neumann(), 4);
    }

    #[test]
    fn exact_solutions_vanish_on_dirichlet_part() {
        for preset in [
            preset_coupled_smooth(),
            preset_dirichlet_only(),
            preset_dirichlet_neumann(),
        ] {
            let exact = preset.exact.as_ref().unwrap();
            for x in preset.domain.sample_boundary(BoundaryPart::Dirichlet, 100) {
                for f in &exact.fields {
                    assert!(
                        (f.value)(&x).abs() < 1e-12,
                        "{}: exact solution nonzero at {x:?}",
                        preset.name
                    );
                }
            }
        }
    }

    #[test]
    fn boundary_parts_partition_the_boundary() {
        fn check<const M: usize>(preset: &ProblemPreset<M>) {
            for part in [
                BoundaryPart::Dirichlet,
                BoundaryPart::Neumann,
                BoundaryPart::Robin,
            ] {
                if !preset.domain.has_part(part) {
                    continue;
                }
                for x in preset.domain.sample_boundary(part, 300) {
                    assert_eq!(
                        preset.domain.boundary_part(&x),
                        Some(part),
                        "{}: point {x:?} not attributed to its part",
                        preset.name
                    );
                    // No piece of another part may also contain the point.
                    for piece in preset.domain.pieces() {
                        if piece.part != part {
                            assert!(
                                piece.curve.distance(&x) > 1e-9,
                                "{}: point {x:?} claimed by two parts",
                                preset.name
                            );
                        }
                    }
                }
            }
        }
        check(&preset_population());
        check(&preset_population_annulus());
        check(&preset_coupled_smooth());
        check(&preset_dirichlet_only());
        check(&preset_dirichlet_neumann());
        check(&preset_poisson1d());
    }

    #[test]
    fn annulus_weight_vanishes_on_dirichlet_arcs() {
        let preset = preset_population_annulus();
        for x in preset.domain.sample_boundary(BoundaryPart::Dirichlet, 100) {
            assert!(preset.domain.weight.value(&x).abs() < 1e-12);
        }
        // Positive inside.
        assert!(preset.domain.weight.value(&[1.5, 0.01]) > 0.0);
    }

    #[test]
    fn preset_lookup() {
        assert!(preset_by_name("population").is_ok());
        assert!(matches!(
            preset_by_name("nope"),
            Err(PresetError::UnknownKind(_))
        ));
        for name in PRESET_NAMES {
            assert!(preset_by_name(name).is_ok(), "{name} must resolve");
        }
    }
}
