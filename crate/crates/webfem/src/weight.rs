//! Weight functions vanishing on the Dirichlet boundary part.
//!
//! A weight is assembled from implicit primitives (half-planes, circles)
//! whose zero sets are the Dirichlet pieces, combined either by pointwise
//! product or by the R-conjunction `a ∧ b = a + b - sqrt(a^2 + b^2)`, which
//! preserves the union of zero sets while staying smooth away from joints.
//! Every expression carries exact first and second derivatives so that
//! strong residuals of weighted splines can be evaluated analytically.

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy)]
pub struct Jet<const M: usize> {
    pub value: f64,
    pub grad: [f64; M],
    pub hess: [[f64; M]; M],
}

impl<const M: usize> Jet<M> {
    pub fn constant(c: f64) -> Self {
        Self {
            value: c,
            grad: [0.0; M],
            hess: [[0.0; M]; M],
        }
    }

    fn product(a: &Self, b: &Self) -> Self {
        let value = a.value * b.value;
        let grad = std::array::from_fn(|d| a.value * b.grad[d] + b.value * a.grad[d]);
        let mut hess = [[0.0; M]; M];
        for i in 0..M {
            for j in 0..M {
                hess[i][j] = a.value * b.hess[i][j]
                    + b.value * a.hess[i][j]
                    + a.grad[i] * b.grad[j]
                    + b.grad[i] * a.grad[j];
            }
        }
        Self { value, grad, hess }
    }

    /// R-conjunction `a + b - sqrt(a^2 + b^2)`.
    fn r_conjunction(a: &Self, b: &Self) -> Self {
        let s2 = a.value * a.value + b.value * b.value;
        let s = s2.sqrt();
        if s < 1e-300 {
            // Joint point of both zero sets; the combination itself is zero
            // and the derivative terms of sqrt degenerate.
            return Self {
                value: 0.0,
                grad: std::array::from_fn(|d| a.grad[d] + b.grad[d]),
                hess: std::array::from_fn(|i| std::array::from_fn(|j| a.hess[i][j] + b.hess[i][j])),
            };
        }
        let ds: [f64; M] = std::array::from_fn(|d| (a.value * a.grad[d] + b.value * b.grad[d]) / s);
        let mut hess = [[0.0; M]; M];
        for i in 0..M {
            for j in 0..M {
                let d2s = (a.grad[i] * a.grad[j]
                    + a.value * a.hess[i][j]
                    + b.grad[i] * b.grad[j]
                    + b.value * b.hess[i][j])
                    / s
                    - ds[i] * ds[j] / s;
                hess[i][j] = a.hess[i][j] + b.hess[i][j] - d2s;
            }
        }
        Self {
            value: a.value + b.value - s,
            grad: std::array::from_fn(|d| a.grad[d] + b.grad[d] - ds[d]),
            hess,
        }
    }
}

/// Implicit primitive with signed-distance-like value: positive on the side
/// of the domain, zero on the boundary piece it represents.
#[derive(Debug, Clone)]
pub enum WeightPrimitive<const M: usize> {
    /// `normal . x + offset` with `normal` of unit length; positive on the
    /// side the normal points into.
    HalfPlane { normal: [f64; M], offset: f64 },
    /// `|x - center|^2 - radius^2`; positive outside the circle.
    CircleOutside { center: [f64; M], radius: f64 },
    /// `radius^2 - |x - center|^2`; positive inside the circle.
    CircleInside { center: [f64; M], radius: f64 },
}

impl<const M: usize> WeightPrimitive<M> {
    pub fn half_plane(normal: [f64; M], offset: f64) -> Self {
        let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(len > 0.0, "half-plane normal must be nonzero");
        Self::HalfPlane {
            normal: std::array::from_fn(|d| normal[d] / len),
            offset: offset / len,
        }
    }

    fn jet(&self, x: &[f64; M]) -> Jet<M> {
        match self {
            Self::HalfPlane { normal, offset } => {
                let mut v = *offset;
                for d in 0..M {
                    v += normal[d] * x[d];
                }
                Jet {
                    value: v,
                    grad: *normal,
                    hess: [[0.0; M]; M],
                }
            }
            Self::CircleOutside { center, radius } => {
                let mut v = -radius * radius;
                for d in 0..M {
                    v += (x[d] - center[d]) * (x[d] - center[d]);
                }
                let mut hess = [[0.0; M]; M];
                for d in 0..M {
                    hess[d][d] = 2.0;
                }
                Jet {
                    value: v,
                    grad: std::array::from_fn(|d| 2.0 * (x[d] - center[d])),
                    hess,
                }
            }
            Self::CircleInside { center, radius } => {
                let mut v = radius * radius;
                for d in 0..M {
                    v -= (x[d] - center[d]) * (x[d] - center[d]);
                }
                let mut hess = [[0.0; M]; M];
                for d in 0..M {
                    hess[d][d] = -2.0;
                }
                Jet {
                    value: v,
                    grad: std::array::from_fn(|d| -2.0 * (x[d] - center[d])),
                    hess,
                }
            }
        }
    }
}

/// Expression tree of primitives and combinators.
#[derive(Debug, Clone)]
pub enum WeightExpr<const M: usize> {
    Constant(f64),
    Primitive(WeightPrimitive<M>),
    Product(Box<WeightExpr<M>>, Box<WeightExpr<M>>),
    RConjunction(Box<WeightExpr<M>>, Box<WeightExpr<M>>),
}

impl<const M: usize> WeightExpr<M> {
    pub fn jet(&self, x: &[f64; M]) -> Jet<M> {
        match self {
            Self::Constant(c) => Jet::constant(*c),
            Self::Primitive(p) => p.jet(x),
            Self::Product(a, b) => Jet::product(&a.jet(x), &b.jet(x)),
            Self::RConjunction(a, b) => Jet::r_conjunction(&a.jet(x), &b.jet(x)),
        }
    }
}

/// How multiple Dirichlet primitives are merged into one weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCombine {
    Product,
    RConjunction,
}

/// Weight function: zero exactly on the Dirichlet boundary part, positive in
/// the adjacent domain interior.
#[derive(Debug, Clone)]
pub struct WeightFunction<const M: usize> {
    expr: WeightExpr<M>,
    /// Vanishing order on the Dirichlet part (1 for the simple primitives).
    pub dirichlet_order: u32,
}

impl<const M: usize> WeightFunction<M> {
    pub fn new(expr: WeightExpr<M>) -> Self {
        Self {
            expr,
            dirichlet_order: 1,
        }
    }

    /// Constant weight for problems without a Dirichlet part.
    pub fn one() -> Self {
        Self::new(WeightExpr::Constant(1.0))
    }

    /// Combine Dirichlet primitives into a single weight. An empty list
    /// yields the constant weight one.
    pub fn from_primitives(prims: &[WeightPrimitive<M>], combine: WeightCombine) -> Self {
        let mut iter = prims.iter();
        let first = match iter.next() {
            Some(p) => WeightExpr::Primitive(p.clone()),
            None => return Self::one(),
        };
        let expr = iter.fold(first, |acc, p| {
            let rhs = Box::new(WeightExpr::Primitive(p.clone()));
            match combine {
                WeightCombine::Product => WeightExpr::Product(Box::new(acc), rhs),
                WeightCombine::RConjunction => WeightExpr::RConjunction(Box::new(acc), rhs),
            }
        });
        Self::new(expr)
    }

    pub fn value(&self, x: &[f64; M]) -> f64 {
        self.expr.jet(x).value
    }

    pub fn gradient(&self, x: &[f64; M]) -> [f64; M] {
        self.expr.jet(x).grad
    }

    pub fn jet(&self, x: &[f64; M]) -> Jet<M> {
        self.expr.jet(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::XorShift64;

    /// The quarter-annulus weight `(x^2 + y^2 - 1)(4 - x^2 - y^2)`.
    fn annulus_weight() -> WeightFunction<2> {
        WeightFunction::new(WeightExpr::Product(
            Box::new(WeightExpr::Primitive(WeightPrimitive::CircleOutside {
                center: [0.0, 0.0],
                radius: 1.0,
            })),
            Box::new(WeightExpr::Primitive(WeightPrimitive::CircleInside {
                center: [0.0, 0.0],
                radius: 2.0,
            })),
        ))
    }

    #[test]
    fn annulus_weight_reference_values() {
        let w = annulus_weight();
        assert_eq!(w.value(&[1.0, 0.0]), 0.0);
        assert!((w.value(&[1.5, 0.0]) - 2.1875).abs() < 1e-15);
        assert_eq!(w.value(&[0.0, 2.0]), 0.0);
    }

    #[test]
    fn half_plane_is_signed_distance() {
        let w = WeightFunction::from_primitives(
            &[WeightPrimitive::half_plane([1.0, 0.0], 0.0)],
            WeightCombine::RConjunction,
        );
        assert!((w.value(&[0.3, 0.7]) - 0.3).abs() < 1e-15);
        assert_eq!(w.value(&[0.0, 0.4]), 0.0);
    }

    #[test]
    fn r_conjunction_preserves_zero_sets() {
        let w = WeightFunction::from_primitives(
            &[
                WeightPrimitive::half_plane([1.0, 0.0], 0.0),
                WeightPrimitive::half_plane([0.0, 1.0], 0.0),
            ],
            WeightCombine::RConjunction,
        );
        // Zero on either line inside the first quadrant...
        assert!(w.value(&[0.0, 0.5]).abs() < 1e-15);
        assert!(w.value(&[0.8, 0.0]).abs() < 1e-15);
        // ...and strictly positive inside.
        let mut rng = XorShift64::new(5);
        for _ in 0..200 {
            let p = [rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0)];
            assert!(w.value(&p) > 0.0, "w should be positive at {p:?}");
        }
    }

    fn check_jet_against_fd(w: &WeightFunction<2>, x: &[f64; 2]) {
        let step = 1e-5;
        let jet = w.jet(x);
        for d in 0..2 {
            let mut xp = *x;
            let mut xm = *x;
            xp[d] += step;
            xm[d] -= step;
            let fd = (w.value(&xp) - w.value(&xm)) / (2.0 * step);
            assert!(
                (fd - jet.grad[d]).abs() <= 1e-6 * jet.grad[d].abs().max(1.0),
                "grad[{d}] at {x:?}: fd {fd} vs {}",
                jet.grad[d]
            );
        }
        for a in 0..2 {
            for b in 0..2 {
                let s = 1e-4;
                let mut pp = *x;
                let mut pm = *x;
                let mut mp = *x;
                let mut mm = *x;
                pp[a] += s;
                pp[b] += s;
                pm[a] += s;
                pm[b] -= s;
                mp[a] -= s;
                mp[b] += s;
                mm[a] -= s;
                mm[b] -= s;
                let fd =
                    (w.value(&pp) - w.value(&pm) - w.value(&mp) + w.value(&mm)) / (4.0 * s * s);
                assert!(
                    (fd - jet.hess[a][b]).abs() <= 1e-4 * jet.hess[a][b].abs().max(1.0),
                    "hess[{a}][{b}] at {x:?}: fd {fd} vs {}",
                    jet.hess[a][b]
                );
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let mut rng = XorShift64::new(11);
        let annulus = annulus_weight();
        let rconj = WeightFunction::from_primitives(
            &[
                WeightPrimitive::half_plane([1.0, 0.0], 0.0),
                WeightPrimitive::half_plane([0.0, 1.0], 0.0),
            ],
            WeightCombine::RConjunction,
        );
        for _ in 0..25 {
            let p = [rng.uniform(0.1, 1.9), rng.uniform(0.1, 1.9)];
            check_jet_against_fd(&annulus, &p);
            check_jet_against_fd(&rconj, &p);
        }
    }
}
