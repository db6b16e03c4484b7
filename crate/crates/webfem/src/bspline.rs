//! Uniform (cardinal) B-splines of order `n` in one dimension and their
//! tensor products on an `h`-grid.
//!
//! The cardinal spline `b(x)` of order `n` lives on the uniform knots
//! `0, 1, ..., n`; the basis consists of scaled translates
//! `b_k(x) = b(x/h - k)`. Evaluation uses the Cox–de Boor recurrence on
//! uniform knots with the half-open convention `[0, n)`: the value at the
//! right endpoint is zero and ties at interior knots take the
//! right-continuous piece.

use thiserror::Error;

/// Largest supported spline order. Plenty for practice (the usual choices
/// are 2 to 4) while keeping evaluation allocation-free.
pub const MAX_ORDER: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BsplineError {
    #[error("spline order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error("spline order must be at most {MAX_ORDER}, got {0}")]
    OrderTooLarge(usize),
}

/// Spline order `n` (polynomial degree `n - 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplineOrder(usize);

impl SplineOrder {
    pub fn new(n: usize) -> Result<Self, BsplineError> {
        if n < 2 {
            return Err(BsplineError::OrderTooSmall(n));
        }
        if n > MAX_ORDER {
            return Err(BsplineError::OrderTooLarge(n));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn degree(self) -> usize {
        self.0 - 1
    }
}

/// Uniform grid of width `h` in `M` dimensions. Cells are
/// `Q_l = h([0,1]^M + l)` for integer multi-indices `l`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec<const M: usize> {
    h: f64,
}

impl<const M: usize> GridSpec<M> {
    pub fn new(h: f64) -> Self {
        assert!(h > 0.0, "grid width must be positive");
        Self { h }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_lo(&self, l: &MultiIndex<M>) -> [f64; M] {
        std::array::from_fn(|d| self.h * l[d] as f64)
    }

    pub fn cell_hi(&self, l: &MultiIndex<M>) -> [f64; M] {
        std::array::from_fn(|d| self.h * (l[d] + 1) as f64)
    }

    pub fn cell_center(&self, l: &MultiIndex<M>) -> [f64; M] {
        std::array::from_fn(|d| self.h * (l[d] as f64 + 0.5))
    }
}

/// Integer multi-index of a translate or grid cell.
pub type MultiIndex<const M: usize> = [i64; M];

/// Cardinal B-spline `b^n(x)` on knots `0..n`, evaluated by the uniform-knot
/// recurrence. Zero outside `[0, n)`.
pub fn cardinal(n: SplineOrder, x: f64) -> f64 {
    let n = n.get();
    if !(0.0 <= x && x < n as f64) {
        return 0.0;
    }
    // At order r the nonzero translates b^r(x - i) have i in [j-r+1, j]
    // where j = floor(x). Build them up from order 1.
    let j = x.floor() as i64;
    let mut vals = [0.0f64; MAX_ORDER];
    vals[0] = 1.0; // b^1(x - j)
    for r in 1..n {
        // Move from order r to order r+1; vals[t] currently holds
        // b^r(x - i) with i = j - r + 1 + t for t in 0..r.
        let mut next = [0.0f64; MAX_ORDER];
        for t in 0..=r {
            let i = j - r as i64 + t as i64;
            let y = x - i as f64;
            let left = if t > 0 { vals[t - 1] } else { 0.0 };
            let right = if t < r { vals[t] } else { 0.0 };
            next[t] = (y * left + ((r + 1) as f64 - y) * right) / r as f64;
        }
        vals = next;
    }
    // We want the translate with i = 0, i.e. t = -(j - n + 1).
    vals[(n as i64 - 1 - j) as usize]
}

/// `p`-th derivative of the cardinal spline: repeated backward differences of
/// the order-`(n-p)` spline. Requires `p <= n - 1`.
pub fn cardinal_deriv_p(n: SplineOrder, p: usize, x: f64) -> f64 {
    assert!(
        p < n.get(),
        "derivative order {} too high for order {}",
        p,
        n.get()
    );
    if p == 0 {
        return cardinal(n, x);
    }
    let lower = SplineOrder(n.get() - p);
    let mut sum = 0.0;
    let mut binom = 1.0f64;
    for i in 0..=p {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * cardinal(lower, x - i as f64);
        binom = binom * (p - i) as f64 / (i + 1) as f64;
    }
    sum
}

/// First derivative `b^{n-1}(x) - b^{n-1}(x-1)`.
pub fn cardinal_deriv(n: SplineOrder, x: f64) -> f64 {
    cardinal_deriv_p(n, 1, x)
}

/// Second derivative; requires `n >= 3` for a meaningful (bounded) result.
pub fn cardinal_deriv2(n: SplineOrder, x: f64) -> f64 {
    cardinal_deriv_p(n, 2, x)
}

/// Tensor-product B-spline basis on a uniform grid.
///
/// With `normalized` set, translates carry the factor `h^{-M/2}` so that
/// their L2 norm is independent of the grid width; the default leaves the
/// plain translates `b(x/h - k)` which sum to one.
#[derive(Debug, Clone, Copy)]
pub struct UniformBsplineBasis<const M: usize> {
    pub order: SplineOrder,
    pub grid: GridSpec<M>,
    pub normalized: bool,
}

impl<const M: usize> UniformBsplineBasis<M> {
    pub fn new(order: SplineOrder, grid: GridSpec<M>) -> Self {
        Self {
            order,
            grid,
            normalized: false,
        }
    }

    pub fn normalized(order: SplineOrder, grid: GridSpec<M>) -> Self {
        Self {
            order,
            grid,
            normalized: true,
        }
    }

    fn scale_factor(&self) -> f64 {
        if self.normalized {
            self.grid.h().powf(-(M as f64) / 2.0)
        } else {
            1.0
        }
    }

    /// Local coordinate `x_d/h - k_d` per axis.
    fn local(&self, k: &MultiIndex<M>, x: &[f64; M]) -> [f64; M] {
        std::array::from_fn(|d| x[d] / self.grid.h() - k[d] as f64)
    }

    /// Value of the translate `b_k` at `x`.
    pub fn eval(&self, k: &MultiIndex<M>, x: &[f64; M]) -> f64 {
        let t = self.local(k, x);
        let mut v = self.scale_factor();
        for d in 0..M {
            v *= cardinal(self.order, t[d]);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    /// Exact gradient of the translate `b_k` at `x`.
    pub fn gradient(&self, k: &MultiIndex<M>, x: &[f64; M]) -> [f64; M] {
        let t = self.local(k, x);
        let vals: [f64; M] = std::array::from_fn(|d| cardinal(self.order, t[d]));
        let ders: [f64; M] = std::array::from_fn(|d| cardinal_deriv(self.order, t[d]));
        let s = self.scale_factor() / self.grid.h();
        std::array::from_fn(|d| {
            let mut g = s * ders[d];
            for e in 0..M {
                if e != d {
                    g *= vals[e];
                }
            }
            g
        })
    }

    /// Value and gradient in one pass.
    pub fn eval_with_gradient(&self, k: &MultiIndex<M>, x: &[f64; M]) -> (f64, [f64; M]) {
        let t = self.local(k, x);
        let vals: [f64; M] = std::array::from_fn(|d| cardinal(self.order, t[d]));
        let sf = self.scale_factor();
        let mut v = sf;
        for d in 0..M {
            v *= vals[d];
        }
        let ders: [f64; M] = std::array::from_fn(|d| cardinal_deriv(self.order, t[d]));
        let s = sf / self.grid.h();
        let grad = std::array::from_fn(|d| {
            let mut g = s * ders[d];
            for e in 0..M {
                if e != d {
                    g *= vals[e];
                }
            }
            g
        });
        (v, grad)
    }

    /// Hessian of the translate `b_k` at `x`. Meaningful for `n >= 3`.
    pub fn hessian(&self, k: &MultiIndex<M>, x: &[f64; M]) -> [[f64; M]; M] {
        let t = self.local(k, x);
        let vals: [f64; M] = std::array::from_fn(|d| cardinal(self.order, t[d]));
        let d1: [f64; M] = std::array::from_fn(|d| cardinal_deriv(self.order, t[d]));
        let d2: [f64; M] = std::array::from_fn(|d| cardinal_deriv2(self.order, t[d]));
        let h = self.grid.h();
        let sf = self.scale_factor();
        let mut out = [[0.0; M]; M];
        for a in 0..M {
            for b in 0..M {
                let mut v = sf / (h * h);
                for e in 0..M {
                    v *= if e == a && e == b {
                        d2[e]
                    } else if e == a || e == b {
                        d1[e]
                    } else {
                        vals[e]
                    };
                }
                out[a][b] = v;
            }
        }
        out
    }

    /// Closed support box `h([0,n]^M + k)` of the translate `b_k`.
    pub fn support(&self, k: &MultiIndex<M>) -> ([f64; M], [f64; M]) {
        let h = self.grid.h();
        let n = self.order.get() as f64;
        (
            std::array::from_fn(|d| h * k[d] as f64),
            std::array::from_fn(|d| h * (k[d] as f64 + n)),
        )
    }

    /// Grid cells covered by the support of `b_k`: `l` with
    /// `k_d <= l_d <= k_d + n - 1`.
    pub fn support_cells(&self, k: &MultiIndex<M>) -> impl Iterator<Item = MultiIndex<M>> {
        let n = self.order.get() as i64;
        let k = *k;
        CartesianOffsets::<M>::new(n).map(move |off| std::array::from_fn(|d| k[d] + off[d]))
    }

    /// Translates that are nonzero somewhere on the open cell `Q_l`:
    /// `k` with `l_d - n + 1 <= k_d <= l_d`.
    pub fn splines_on_cell(&self, l: &MultiIndex<M>) -> impl Iterator<Item = MultiIndex<M>> {
        let n = self.order.get() as i64;
        let l = *l;
        CartesianOffsets::<M>::new(n).map(move |off| std::array::from_fn(|d| l[d] - n + 1 + off[d]))
    }
}

/// Iterator over `[0, extent)^M` integer offsets in lexicographic order.
pub struct CartesianOffsets<const M: usize> {
    extent: i64,
    current: Option<[i64; M]>,
}

impl<const M: usize> CartesianOffsets<M> {
    pub fn new(extent: i64) -> Self {
        let current = if extent > 0 { Some([0; M]) } else { None };
        Self { extent, current }
    }
}

impl<const M: usize> Iterator for CartesianOffsets<M> {
    type Item = [i64; M];

    fn next(&mut self) -> Option<[i64; M]> {
        let cur = self.current?;
        let mut next = cur;
        let mut d = M;
        loop {
            if d == 0 {
                self.current = None;
                break;
            }
            d -= 1;
            next[d] += 1;
            if next[d] < self.extent {
                self.current = Some(next);
                break;
            }
            next[d] = 0;
        }
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::XorShift64;

    fn ord(n: usize) -> SplineOrder {
        SplineOrder::new(n).unwrap()
    }

    /// The quadratic cardinal spline written out piecewise.
    fn quadratic_piecewise(x: f64) -> f64 {
        if (0.0..1.0).contains(&x) {
            x * x / 2.0
        } else if (1.0..2.0).contains(&x) {
            0.5 + (x - 1.0) - (x - 1.0) * (x - 1.0)
        } else if (2.0..3.0).contains(&x) {
            (x - 3.0) * (x - 3.0) / 2.0
        } else {
            0.0
        }
    }

    #[test]
    fn order_validation() {
        assert!(SplineOrder::new(1).is_err());
        assert!(SplineOrder::new(2).is_ok());
        assert!(SplineOrder::new(MAX_ORDER + 1).is_err());
    }

    #[test]
    fn cardinal_reference_values() {
        assert_eq!(cardinal(ord(3), 0.5), 0.125);
        assert_eq!(cardinal(ord(3), 1.5), 0.75);
        assert_eq!(cardinal(ord(3), 3.0), 0.0);
        assert_eq!(cardinal(ord(2), 1.0), 1.0);
    }

    #[test]
    fn cardinal_matches_quadratic_piecewise_form() {
        for i in 0..=600 {
            let x = -0.5 + i as f64 * 0.0075;
            let got = cardinal(ord(3), x);
            let want = quadratic_piecewise(x);
            assert!(
                (got - want).abs() < 1e-14,
                "x = {x}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn cardinal_nonnegative_and_supported_on_open_interval() {
        for n in 2..=5 {
            let order = ord(n);
            for i in 0..=1000 {
                let x = -1.0 + i as f64 * (n as f64 + 2.0) / 1000.0;
                let v = cardinal(order, x);
                assert!(v >= 0.0);
                if x > 1e-9 && x < n as f64 - 1e-9 {
                    assert!(v > 0.0, "n={n}, x={x} should be strictly inside support");
                } else if !(0.0..n as f64).contains(&x) {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = XorShift64::new(42);
        for n in 2..=4 {
            let order = ord(n);
            for h in [1.0, 0.25] {
                let basis = UniformBsplineBasis::<2>::new(order, GridSpec::new(h));
                for _ in 0..1000 {
                    let x = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
                    let cell: [i64; 2] = std::array::from_fn(|d| (x[d] / h).floor() as i64);
                    let sum: f64 = basis
                        .splines_on_cell(&cell)
                        .map(|k| basis.eval(&k, &x))
                        .sum();
                    assert!((sum - 1.0).abs() <= 1e-12, "n={n} h={h} x={x:?} sum={sum}");
                }
            }
        }
    }

    #[test]
    fn tensor_reference_values() {
        let basis = UniformBsplineBasis::<2>::new(ord(3), GridSpec::new(1.0));
        let v = basis.eval(&[0, 0], &[1.5, 1.5]);
        assert!((v - 0.5625).abs() < 1e-15);

        // Outside the support box.
        assert_eq!(basis.eval(&[0, 0], &[3.5, 1.0]), 0.0);

        // Scaling invariance b_{k,h}(h x) = b_{k,1}(x).
        let fine = UniformBsplineBasis::<2>::new(ord(3), GridSpec::new(0.5));
        let v = fine.eval(&[0, 0], &[0.75, 0.75]);
        assert!((v - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn gradient_reference_values() {
        let basis = UniformBsplineBasis::<1>::new(ord(3), GridSpec::new(1.0));
        let g = basis.gradient(&[0], &[0.5]);
        assert!((g[0] - 0.5).abs() < 1e-15);

        let g = basis.gradient(&[0], &[7.0]);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = XorShift64::new(3);
        let step = 1e-5;
        for n in [2usize, 3, 4] {
            let basis = UniformBsplineBasis::<2>::new(ord(n), GridSpec::new(0.5));
            for _ in 0..20 {
                // Keep points away from knot lines where higher derivatives
                // jump and finite differences lose accuracy.
                let mut x = [
                    rng.uniform(0.05, 0.45 * n as f64),
                    rng.uniform(0.05, 0.45 * n as f64),
                ];
                for xd in &mut x {
                    let t = *xd / 0.5;
                    if (t - t.round()).abs() < 0.02 {
                        *xd += 0.02;
                    }
                }
                let g = basis.gradient(&[0, 0], &x);
                for d in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += step;
                    xm[d] -= step;
                    let fd = (basis.eval(&[0, 0], &xp) - basis.eval(&[0, 0], &xm)) / (2.0 * step);
                    assert!(
                        (fd - g[d]).abs() <= 1e-6 * g[d].abs().max(1.0),
                        "n={n} x={x:?} d={d}: fd={fd} analytic={}",
                        g[d]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_central_differences() {
        let mut rng = XorShift64::new(9);
        let step = 1e-4;
        let basis = UniformBsplineBasis::<2>::new(ord(3), GridSpec::new(0.5));
        for _ in 0..20 {
            // Stay away from knot lines where the second derivative jumps.
            let x = [
                0.25 * (1 + rng.next_u64() as usize % 2) as f64 + rng.uniform(0.02, 0.23),
                rng.uniform(0.02, 0.23),
            ];
            let hess = basis.hessian(&[0, 0], &x);
            for a in 0..2 {
                for b in 0..2 {
                    let mut pp = x;
                    let mut pm = x;
                    let mut mp = x;
                    let mut mm = x;
                    pp[a] += step;
                    pp[b] += step;
                    pm[a] += step;
                    pm[b] -= step;
                    mp[a] -= step;
                    mp[b] += step;
                    mm[a] -= step;
                    mm[b] -= step;
                    let fd = (basis.eval(&[0, 0], &pp)
                        - basis.eval(&[0, 0], &pm)
                        - basis.eval(&[0, 0], &mp)
                        + basis.eval(&[0, 0], &mm))
                        / (4.0 * step * step);
                    assert!(
                        (fd - hess[a][b]).abs() <= 2e-4 * hess[a][b].abs().max(1.0),
                        "x={x:?} ({a},{b}): fd={fd} analytic={}",
                        hess[a][b]
                    );
                }
            }
        }
    }

    /// 5-point Gauss-Legendre on [a, b]; exact for degree 9.
    fn gauss5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        const X: [f64; 5] = [
            -0.906179845938664,
            -0.5384693101056831,
            0.0,
            0.5384693101056831,
            0.906179845938664,
        ];
        const W: [f64; 5] = [
            0.23692688505618908,
            0.47862867049936647,
            0.5688888888888889,
            0.47862867049936647,
            0.23692688505618908,
        ];
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        (0..5).map(|i| W[i] * f(mid + half * X[i])).sum::<f64>() * half
    }

    #[test]
    fn normalized_translates_have_h_independent_l2_norm() {
        for n in 2..=4 {
            let order = ord(n);
            let mut norms = Vec::new();
            for h in [1.0, 0.5, 0.125] {
                let basis = UniformBsplineBasis::<1>::normalized(order, GridSpec::new(h));
                // Integrate b^2 cell by cell; the integrand is polynomial on
                // each knot interval so 5-point Gauss is exact.
                let mut sq = 0.0;
                for c in 0..n as i64 {
                    sq += gauss5(h * c as f64, h * (c + 1) as f64, |x| {
                        let v = basis.eval(&[0], &[x]);
                        v * v
                    });
                }
                norms.push(sq.sqrt());
            }
            for w in norms.windows(2) {
                assert!(
                    (w[0] - w[1]).abs() <= 1e-10,
                    "n={n}: norms vary with h: {norms:?}"
                );
            }
        }
    }

    #[test]
    fn derivative_jumps_vanish_through_order_n_minus_2() {
        let eps = 1e-7;
        for n in 3..=5 {
            let order = ord(n);
            for knot in 0..=n as i64 {
                let t = knot as f64;
                for p in 0..=(n - 2) {
                    let jump =
                        cardinal_deriv_p(order, p, t + eps) - cardinal_deriv_p(order, p, t - eps);
                    assert!(
                        jump.abs() < 1e-5,
                        "n={n} knot={t} deriv order {p}: jump {jump}"
                    );
                }
                // The (n-1)-st derivative genuinely jumps at interior knots.
                if knot > 0 && knot < n as i64 {
                    let jump = cardinal_deriv_p(order, n - 1, t + eps)
                        - cardinal_deriv_p(order, n - 1, t - eps);
                    assert!(jump.abs() > 0.1, "n={n} knot={t}: expected a real jump");
                }
            }
        }
    }

    #[test]
    fn offsets_iterator_is_lexicographic() {
        let offs: Vec<[i64; 2]> = CartesianOffsets::<2>::new(2).collect();
        assert_eq!(offs, vec![[0, 0], [0, 1], [1, 0], [1, 1]]);
    }
}
