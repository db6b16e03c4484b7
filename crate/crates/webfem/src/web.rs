//! The weighted extended B-spline basis.
//!
//! Outer translates — those with no fully interior cell in their support —
//! render the plain spline basis arbitrarily ill-conditioned on cut cells.
//! Each outer translate `b_j` is therefore absorbed into nearby inner ones
//! with Lagrange extrapolation coefficients over a closest `n^M` block of
//! inner indices, and the combination is multiplied by the weight so the
//! result conforms to the Dirichlet boundary:
//!
//! `B_i = (w / w(x_i)) (b_i + sum_j e_{i,j} b_j)`

use std::collections::{BTreeMap, BTreeSet};

use crate::bspline::{CartesianOffsets, GridSpec, MultiIndex, SplineOrder, UniformBsplineBasis};
use crate::domain::DomainModel;
use crate::grid::{CellGrid, GridError, IndexSets};
use crate::weight::WeightFunction;

/// An `n^M` block of indices `{alpha_d .. alpha_d + n - 1}` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBlock<const M: usize> {
    pub base: MultiIndex<M>,
    pub n: usize,
}

impl<const M: usize> IndexBlock<M> {
    pub fn members(&self) -> impl Iterator<Item = MultiIndex<M>> {
        let base = self.base;
        CartesianOffsets::<M>::new(self.n as i64)
            .map(move |off| std::array::from_fn(|d| base[d] + off[d]))
    }

    /// Chebyshev distance from an index to the block.
    pub fn chebyshev_distance(&self, j: &MultiIndex<M>) -> i64 {
        let mut dist = 0i64;
        for d in 0..M {
            let lo = self.base[d];
            let hi = self.base[d] + self.n as i64 - 1;
            let dd = (lo - j[d]).max(j[d] - hi).max(0);
            dist = dist.max(dd);
        }
        dist
    }
}

/// A closest `n^M` block of inner indices to `j`, ties broken by the
/// lexicographically smallest base.
pub fn closest_index_block<const M: usize>(
    j: &MultiIndex<M>,
    inner: &BTreeSet<MultiIndex<M>>,
    order: SplineOrder,
) -> Result<IndexBlock<M>, GridError> {
    let n = order.get();
    if inner.is_empty() {
        return Err(GridError::NoInnerArray(j.to_vec()));
    }
    let mut lo = *inner.iter().next().unwrap();
    let mut hi = lo;
    for k in inner {
        for d in 0..M {
            lo[d] = lo[d].min(k[d]);
            hi[d] = hi[d].max(k[d]);
        }
    }
    let mut best: Option<(i64, IndexBlock<M>)> = None;
    let mut base = lo;
    'outer: loop {
        let block = IndexBlock { base, n };
        if block.members().all(|m| inner.contains(&m)) {
            let dist = block.chebyshev_distance(j);
            let better = match &best {
                None => true,
                Some((bd, bb)) => dist < *bd || (dist == *bd && base < bb.base),
            };
            if better {
                best = Some((dist, block));
            }
        }
        // Advance lexicographically over possible bases.
        let mut d = M;
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            base[d] += 1;
            if base[d] <= hi[d] - n as i64 + 1 {
                break;
            }
            base[d] = lo[d];
        }
    }
    best.map(|(_, b)| b)
        .ok_or_else(|| GridError::NoInnerArray(j.to_vec()))
}

/// Tensor-product Lagrange extrapolation coefficients: the row `e_{., j}`
/// over the nodes of `block`, i.e. the cardinal polynomial values at `j`.
pub fn extension_row<const M: usize>(
    j: &MultiIndex<M>,
    block: &IndexBlock<M>,
) -> Vec<(MultiIndex<M>, f64)> {
    let n = block.n;
    // Per-axis 1-D Lagrange values at j_d over nodes base_d .. base_d+n-1.
    let mut axis: Vec<Vec<f64>> = Vec::with_capacity(M);
    for d in 0..M {
        let mut vals = Vec::with_capacity(n);
        for t in 0..n as i64 {
            let node = block.base[d] + t;
            let mut v = 1.0;
            for l in 0..n as i64 {
                let other = block.base[d] + l;
                if other != node {
                    v *= (j[d] - other) as f64 / (node - other) as f64;
                }
            }
            vals.push(v);
        }
        axis.push(vals);
    }
    block
        .members()
        .map(|i| {
            let mut e = 1.0;
            for d in 0..M {
                e *= axis[d][(i[d] - block.base[d]) as usize];
            }
            (i, e)
        })
        .collect()
}

/// Computable bound on extension coefficients for blocks adjacent to `j`:
/// `((2n-1)! / ((n-1)!)^2)^M`.
pub fn extension_bound(order: SplineOrder, dim: usize) -> f64 {
    let n = order.get() as u64;
    let fact = |m: u64| -> f64 { (1..=m).map(|v| v as f64).product::<f64>().max(1.0) };
    (fact(2 * n - 1) / (fact(n - 1) * fact(n - 1))).powi(dim as i32)
}

/// One weighted extended basis function.
#[derive(Debug, Clone)]
pub struct WebBasisFn<const M: usize> {
    pub index: MultiIndex<M>,
    /// Center of the anchor interior cell.
    pub center: [f64; M],
    pub weight_at_center: f64,
    /// Spline combination `b_i + sum e_{i,j} b_j` as (translate, coefficient),
    /// the unit own-term first.
    pub terms: Vec<(MultiIndex<M>, f64)>,
    pub support_lo: [f64; M],
    pub support_hi: [f64; M],
}

/// The full weighted extended basis over the inner index set.
pub struct WebBasis<const M: usize> {
    pub order: SplineOrder,
    pub grid: GridSpec<M>,
    pub splines: UniformBsplineBasis<M>,
    pub weight: WeightFunction<M>,
    pub sets: IndexSets<M>,
    pub fns: Vec<WebBasisFn<M>>,
}

impl<const M: usize> WebBasis<M> {
    /// Build the basis for classified cells and derived index sets.
    pub fn build(
        domain: &DomainModel<M>,
        cells: &CellGrid<M>,
        sets: IndexSets<M>,
        order: SplineOrder,
    ) -> Result<Self, GridError> {
        let grid = cells.grid;
        let splines = UniformBsplineBasis::new(order, grid);
        let inner_set: BTreeSet<MultiIndex<M>> = sets.inner.iter().copied().collect();

        // Distribute each outer translate into its closest inner block.
        let mut outer_terms: BTreeMap<MultiIndex<M>, Vec<(MultiIndex<M>, f64)>> = BTreeMap::new();
        let bound = extension_bound(order, M);
        for j in &sets.outer {
            let block = closest_index_block(j, &inner_set, order)?;
            for (i, e) in extension_row(j, &block) {
                if e != 0.0 {
                    debug_assert!(
                        e.abs() <= bound,
                        "extension coefficient {e} for j={j:?} exceeds bound {bound}"
                    );
                    outer_terms.entry(i).or_default().push((*j, e));
                }
            }
        }

        let mut fns = Vec::with_capacity(sets.inner.len());
        for i in &sets.inner {
            let mut terms = vec![(*i, 1.0)];
            if let Some(extra) = outer_terms.get(i) {
                terms.extend(extra.iter().copied());
            }
            let center = sets.center[i];
            let weight_at_center = domain.weight.value(&center);
            assert!(
                weight_at_center > 0.0,
                "weight vanishes at inner cell center {center:?}; the Dirichlet \
                 weight must be positive on interior cells"
            );
            let mut support_lo = [f64::INFINITY; M];
            let mut support_hi = [f64::NEG_INFINITY; M];
            for (k, _) in &terms {
                let (lo, hi) = splines.support(k);
                for d in 0..M {
                    support_lo[d] = support_lo[d].min(lo[d]);
                    support_hi[d] = support_hi[d].max(hi[d]);
                }
            }
            fns.push(WebBasisFn {
                index: *i,
                center,
                weight_at_center,
                terms,
                support_lo,
                support_hi,
            });
        }

        Ok(Self {
            order,
            grid,
            splines,
            weight: domain.weight.clone(),
            sets,
            fns,
        })
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    /// Plain spline combination `b_i + sum e b_j` without the weight.
    pub fn eval_extended(&self, f: usize, x: &[f64; M]) -> f64 {
        let func = &self.fns[f];
        func.terms
            .iter()
            .map(|(k, c)| c * self.splines.eval(k, x))
            .sum()
    }

    pub fn eval_extended_with_gradient(&self, f: usize, x: &[f64; M]) -> (f64, [f64; M]) {
        let func = &self.fns[f];
        let mut v = 0.0;
        let mut g = [0.0; M];
        for (k, c) in &func.terms {
            let (val, grad) = self.splines.eval_with_gradient(k, x);
            v += c * val;
            for d in 0..M {
                g[d] += c * grad[d];
            }
        }
        (v, g)
    }

    /// Weighted basis function value.
    pub fn eval(&self, f: usize, x: &[f64; M]) -> f64 {
        let func = &self.fns[f];
        let s = self.eval_extended(f, x);
        self.weight.value(x) / func.weight_at_center * s
    }

    /// Value and gradient of the weighted basis function.
    pub fn eval_with_gradient(&self, f: usize, x: &[f64; M]) -> (f64, [f64; M]) {
        let func = &self.fns[f];
        let (s, sg) = self.eval_extended_with_gradient(f, x);
        let wj = self.weight.jet(x);
        let inv = 1.0 / func.weight_at_center;
        let v = wj.value * inv * s;
        let g = std::array::from_fn(|d| inv * (wj.grad[d] * s + wj.value * sg[d]));
        (v, g)
    }

    /// Value, gradient and Hessian; needs order at least three for a
    /// meaningful second derivative.
    pub fn eval_with_hessian(&self, f: usize, x: &[f64; M]) -> (f64, [f64; M], [[f64; M]; M]) {
        let func = &self.fns[f];
        let mut s = 0.0;
        let mut sg = [0.0; M];
        let mut sh = [[0.0; M]; M];
        for (k, c) in &func.terms {
            let (val, grad) = self.splines.eval_with_gradient(k, x);
            let hess = self.splines.hessian(k, x);
            s += c * val;
            for d in 0..M {
                sg[d] += c * grad[d];
                for e in 0..M {
                    sh[d][e] += c * hess[d][e];
                }
            }
        }
        let wj = self.weight.jet(x);
        let inv = 1.0 / func.weight_at_center;
        let v = wj.value * inv * s;
        let g = std::array::from_fn(|d| inv * (wj.grad[d] * s + wj.value * sg[d]));
        let mut h = [[0.0; M]; M];
        for a in 0..M {
            for b in 0..M {
                h[a][b] = inv
                    * (wj.hess[a][b] * s
                        + wj.grad[a] * sg[b]
                        + wj.grad[b] * sg[a]
                        + wj.value * sh[a][b]);
            }
        }
        (v, g, h)
    }

    /// Grid cells on which basis function `f` may be nonzero.
    pub fn cells_of_fn(&self, f: usize) -> BTreeSet<MultiIndex<M>> {
        let mut cells = BTreeSet::new();
        for (k, _) in &self.fns[f].terms {
            for l in self.splines.support_cells(k) {
                cells.insert(l);
            }
        }
        cells
    }

    /// Exact representation of every coarse basis function in a once-refined
    /// basis, via the two-scale relation of cardinal splines.
    ///
    /// Returns, per coarse function, the list of (fine function position,
    /// coefficient). Fails when a refined child would be an outer translate
    /// of the fine basis (the spaces are then not nested).
    pub fn embed_in_refined(
        &self,
        fine: &WebBasis<M>,
    ) -> Result<Vec<Vec<(usize, f64)>>, GridError> {
        let h = self.grid.h();
        assert!(
            (fine.grid.h() - 0.5 * h).abs() <= 1e-12 * h,
            "refined basis must halve the grid width"
        );
        assert!(
            !self.splines.normalized && !fine.splines.normalized,
            "embedding assumes unnormalized translates"
        );
        let n = self.order.get();
        // 1-D mask: b(x) = 2^{1-n} sum_k C(n,k) b(2x - k), k = 0..n.
        let mut mask1 = Vec::with_capacity(n + 1);
        let mut c = 1.0f64;
        for k in 0..=n {
            mask1.push(c * 0.5f64.powi(n as i32 - 1));
            c = c * (n - k) as f64 / (k + 1) as f64;
        }

        let fine_relevant: BTreeSet<MultiIndex<M>> = fine.sets.relevant.iter().copied().collect();
        let mut out = Vec::with_capacity(self.fns.len());
        for func in &self.fns {
            let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
            for (k, c) in &func.terms {
                for off in CartesianOffsets::<M>::new(n as i64 + 1) {
                    let child: MultiIndex<M> = std::array::from_fn(|d| 2 * k[d] + off[d]);
                    let mut m = *c;
                    for d in 0..M {
                        m *= mask1[off[d] as usize];
                    }
                    if m == 0.0 {
                        continue;
                    }
                    match fine.sets.inner_position(&child) {
                        Some(pos) => {
                            let scale = fine.fns[pos].weight_at_center / func.weight_at_center;
                            *coeffs.entry(pos).or_insert(0.0) += m * scale;
                        }
                        None => {
                            if fine_relevant.contains(&child) {
                                // An outer child cannot be represented.
                                return Err(GridError::NoInnerArray(child.to_vec()));
                            }
                            // Irrelevant children vanish on the domain.
                        }
                    }
                }
            }
            out.push(coeffs.into_iter().collect());
        }
        Ok(out)
    }
}
