//! Grid-cell classification and the relevant/inner/outer spline index sets.
//!
//! Cells of the background grid are tagged interior, boundary or exterior
//! against the domain. A translate is *relevant* when its support meets a
//! non-exterior cell, *inner* when at least one fully interior cell lies in
//! its support, and *outer* otherwise. Outer translates are the unstable ones
//! later absorbed into inner ones by the extension.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bspline::{CartesianOffsets, GridSpec, MultiIndex, SplineOrder};
use crate::domain::{CellClass, DomainModel};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("no grid cell is interior to the domain; grid width is too coarse")]
    DegenerateDomain,
    #[error("no full inner index block exists near outer index {0:?}; grid width is too coarse")]
    NoInnerArray(Vec<i64>),
}

/// Classified cells over the padded bounding box of the domain.
pub struct CellGrid<const M: usize> {
    pub grid: GridSpec<M>,
    origin: MultiIndex<M>,
    dims: [usize; M],
    classes: Vec<CellClass>,
}

impl<const M: usize> CellGrid<M> {
    fn flat(&self, l: &MultiIndex<M>) -> Option<usize> {
        let mut idx = 0usize;
        for d in 0..M {
            let off = l[d] - self.origin[d];
            if off < 0 || off as usize >= self.dims[d] {
                return None;
            }
            idx = idx * self.dims[d] + off as usize;
        }
        Some(idx)
    }

    /// Class of a cell; anything outside the classified range is exterior.
    pub fn class(&self, l: &MultiIndex<M>) -> CellClass {
        match self.flat(l) {
            Some(i) => self.classes[i],
            None => CellClass::Exterior,
        }
    }

    /// All cells of the given class, in lexicographic order.
    pub fn cells_of(&self, class: CellClass) -> Vec<MultiIndex<M>> {
        let mut out = Vec::new();
        self.for_each_cell(|l, c| {
            if c == class {
                out.push(l);
            }
        });
        out
    }

    /// All non-exterior cells, in lexicographic order.
    pub fn active_cells(&self) -> Vec<(MultiIndex<M>, CellClass)> {
        let mut out = Vec::new();
        self.for_each_cell(|l, c| {
            if c != CellClass::Exterior {
                out.push((l, c));
            }
        });
        out
    }

    fn for_each_cell(&self, mut f: impl FnMut(MultiIndex<M>, CellClass)) {
        let mut idx = [0usize; M];
        let total: usize = self.dims.iter().product();
        for flat in 0..total {
            let l: MultiIndex<M> = std::array::from_fn(|d| self.origin[d] + idx[d] as i64);
            f(l, self.classes[flat]);
            let mut d = M;
            while d > 0 {
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Classify every cell of the padded bounding box.
///
/// The padding of `n` cells per side guarantees that every translate whose
/// support touches the domain only sees classified cells.
pub fn classify_cells<const M: usize>(
    domain: &DomainModel<M>,
    grid: GridSpec<M>,
    order: SplineOrder,
) -> Result<CellGrid<M>, GridError> {
    let h = grid.h();
    let n = order.get() as i64;
    let origin: MultiIndex<M> = std::array::from_fn(|d| (domain.bbox.0[d] / h).floor() as i64 - n);
    let upper: MultiIndex<M> = std::array::from_fn(|d| (domain.bbox.1[d] / h).ceil() as i64 + n);
    let dims: [usize; M] = std::array::from_fn(|d| (upper[d] - origin[d]) as usize);

    let total: usize = dims.iter().product();
    let mut classes = Vec::with_capacity(total);
    let mut idx = [0usize; M];
    let mut found_interior = false;
    for _ in 0..total {
        let l: MultiIndex<M> = std::array::from_fn(|d| origin[d] + idx[d] as i64);
        let lo = grid.cell_lo(&l);
        let hi = grid.cell_hi(&l);
        let class = domain.classify_box(&lo, &hi);
        found_interior |= class == CellClass::Interior;
        classes.push(class);
        let mut d = M;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    if !found_interior {
        return Err(GridError::DegenerateDomain);
    }
    Ok(CellGrid {
        grid,
        origin,
        dims,
        classes,
    })
}

/// Relevant (`K`), inner (`I`) and outer (`J`) index sets, together with the
/// anchor cell and center point of every inner translate.
pub struct IndexSets<const M: usize> {
    pub relevant: Vec<MultiIndex<M>>,
    pub inner: Vec<MultiIndex<M>>,
    pub outer: Vec<MultiIndex<M>>,
    /// Offset of the selected interior cell within the support of each inner
    /// translate (lexicographically smallest).
    pub anchor_offset: BTreeMap<MultiIndex<M>, MultiIndex<M>>,
    /// Center of the selected interior cell.
    pub center: BTreeMap<MultiIndex<M>, [f64; M]>,
    inner_pos: BTreeMap<MultiIndex<M>, usize>,
}

impl<const M: usize> IndexSets<M> {
    pub fn inner_position(&self, i: &MultiIndex<M>) -> Option<usize> {
        self.inner_pos.get(i).copied()
    }

    pub fn is_inner(&self, k: &MultiIndex<M>) -> bool {
        self.inner_pos.contains_key(k)
    }
}

/// Derive the index sets from classified cells.
pub fn build_index_sets<const M: usize>(cells: &CellGrid<M>, order: SplineOrder) -> IndexSets<M> {
    let n = order.get() as i64;
    // A cell l is covered by translates k with l - n + 1 <= k <= l.
    let mut relevant: BTreeSet<MultiIndex<M>> = BTreeSet::new();
    for (l, _class) in cells.active_cells() {
        for off in CartesianOffsets::<M>::new(n) {
            let k: MultiIndex<M> = std::array::from_fn(|d| l[d] - n + 1 + off[d]);
            relevant.insert(k);
        }
    }

    let mut inner = Vec::new();
    let mut outer = Vec::new();
    let mut anchor_offset = BTreeMap::new();
    let mut center = BTreeMap::new();
    for &k in &relevant {
        // Lexicographically first interior support cell.
        let mut anchor: Option<MultiIndex<M>> = None;
        for off in CartesianOffsets::<M>::new(n) {
            let l: MultiIndex<M> = std::array::from_fn(|d| k[d] + off[d]);
            if cells.class(&l) == CellClass::Interior {
                anchor = Some(off);
                break;
            }
        }
        match anchor {
            Some(off) => {
                let cell: MultiIndex<M> = std::array::from_fn(|d| k[d] + off[d]);
                anchor_offset.insert(k, off);
                center.insert(k, cells.grid.cell_center(&cell));
                inner.push(k);
            }
            None => outer.push(k),
        }
    }

    let inner_pos = inner.iter().enumerate().map(|(p, k)| (*k, p)).collect();

    IndexSets {
        relevant: relevant.into_iter().collect(),
        inner,
        outer,
        anchor_offset,
        center,
        inner_pos,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{classify_box_in_box, classify_box_quarter_disk};
    use crate::weight::WeightFunction;

    fn unit_interval() -> DomainModel<1> {
        DomainModel::new(
            "unit_interval",
            Box::new(|p: &[f64; 1]| (0.0..=1.0).contains(&p[0])),
            ([0.0], [1.0]),
            WeightFunction::one(),
            vec![],
        )
        .with_box_classifier(Box::new(classify_box_in_box([0.0], [1.0])))
    }

    fn quarter_disk() -> DomainModel<2> {
        DomainModel::new(
            "quarter_disk",
            Box::new(|p: &[f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] * p[0] + p[1] * p[1] <= 1.0),
            ([0.0, 0.0], [1.0, 1.0]),
            WeightFunction::one(),
            vec![],
        )
        .with_box_classifier(Box::new(classify_box_quarter_disk))
    }

    #[test]
    fn interval_index_sets_match_support_arithmetic() {
        let domain = unit_interval();
        let grid = GridSpec::<1>::new(0.5);
        let order = SplineOrder::new(2).unwrap();
        let cells = classify_cells(&domain, grid, order).unwrap();
        assert_eq!(cells.class(&[0]), CellClass::Interior);
        assert_eq!(cells.class(&[1]), CellClass::Interior);
        assert_eq!(cells.class(&[2]), CellClass::Exterior);
        assert_eq!(cells.class(&[-1]), CellClass::Exterior);

        let sets = build_index_sets(&cells, order);
        assert_eq!(sets.relevant, vec![[-1], [0], [1]]);
        assert_eq!(sets.inner, vec![[-1], [0], [1]]);
        assert!(sets.outer.is_empty());
        // An index whose support is entirely exterior is not relevant.
        assert!(!sets.relevant.contains(&[3]));
    }

    #[test]
    fn quarter_disk_has_outer_splines() {
        let domain = quarter_disk();
        let grid = GridSpec::<2>::new(0.25);
        let order = SplineOrder::new(3).unwrap();
        let cells = classify_cells(&domain, grid, order).unwrap();
        let sets = build_index_sets(&cells, order);
        assert!(
            !sets.outer.is_empty(),
            "expected outer splines along the arc"
        );

        // Enumeration oracle: recompute membership for every index from raw
        // box classifications, bypassing CellGrid.
        let n = order.get() as i64;
        for k0 in -4..8i64 {
            for k1 in -4..8i64 {
                let k = [k0, k1];
                let mut any_active = false;
                let mut any_interior = false;
                for off in CartesianOffsets::<2>::new(n) {
                    let l = [k[0] + off[0], k[1] + off[1]];
                    let lo = grid.cell_lo(&l);
                    let hi = grid.cell_hi(&l);
                    match classify_box_quarter_disk(&lo, &hi) {
                        CellClass::Interior => {
                            any_active = true;
                            any_interior = true;
                        }
                        CellClass::Boundary => any_active = true,
                        CellClass::Exterior => {}
                    }
                }
                assert_eq!(
                    sets.relevant.contains(&k),
                    any_active,
                    "K membership of {k:?}"
                );
                assert_eq!(
                    sets.inner.contains(&k),
                    any_interior,
                    "I membership of {k:?}"
                );
                assert_eq!(
                    sets.outer.contains(&k),
                    any_active && !any_interior,
                    "J membership of {k:?}"
                );
            }
        }
    }

    #[test]
    fn anchor_cells_are_interior_and_in_support() {
        let domain = quarter_disk();
        let order = SplineOrder::new(3).unwrap();
        let grid = GridSpec::<2>::new(0.125);
        let cells = classify_cells(&domain, grid, order).unwrap();
        let sets = build_index_sets(&cells, order);
        for i in &sets.inner {
            let off = sets.anchor_offset[i];
            for d in 0..2 {
                assert!((0..order.get() as i64).contains(&off[d]));
            }
            let cell = [i[0] + off[0], i[1] + off[1]];
            assert_eq!(cells.class(&cell), CellClass::Interior);
            let x = sets.center[i];
            assert!(domain.is_inside(&x));
        }
    }

    #[test]
    fn refinement_never_flips_interior_to_exterior() {
        let domain = quarter_disk();
        let order = SplineOrder::new(3).unwrap();
        let mut rng = crate::util::XorShift64::new(1);
        let points: Vec<[f64; 2]> = (0..100)
            .map(|_| [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)])
            .filter(|p| domain.is_inside(p))
            .collect();
        for k in 1..4u32 {
            let h_coarse = 0.5f64.powi(k as i32);
            let h_fine = h_coarse / 2.0;
            let coarse = classify_cells(&domain, GridSpec::new(h_coarse), order).unwrap();
            let fine = classify_cells(&domain, GridSpec::new(h_fine), order).unwrap();
            for p in &points {
                let lc: [i64; 2] = std::array::from_fn(|d| (p[d] / h_coarse).floor() as i64);
                let lf: [i64; 2] = std::array::from_fn(|d| (p[d] / h_fine).floor() as i64);
                if coarse.class(&lc) == CellClass::Interior {
                    assert_ne!(
                        fine.class(&lf),
                        CellClass::Exterior,
                        "point {p:?} flipped interior -> exterior between h={h_coarse} and h={h_fine}"
                    );
                }
            }
        }
    }

    #[test]
    fn boundary_cells_straddle_the_boundary() {
        let domain = quarter_disk();
        let order = SplineOrder::new(3).unwrap();
        for k in 2..=4i32 {
            let h = 0.5f64.powi(k);
            let grid = GridSpec::<2>::new(h);
            let cells = classify_cells(&domain, grid, order).unwrap();
            for l in cells.cells_of(CellClass::Boundary) {
                let lo = grid.cell_lo(&l);
                let hi = grid.cell_hi(&l);
                let mut any_in = false;
                let mut any_out = false;
                for a in 0..32 {
                    for b in 0..32 {
                        let p = [
                            lo[0] + (hi[0] - lo[0]) * (a as f64 + 0.5) / 32.0,
                            lo[1] + (hi[1] - lo[1]) * (b as f64 + 0.5) / 32.0,
                        ];
                        if domain.is_inside(&p) {
                            any_in = true;
                        } else {
                            any_out = true;
                        }
                    }
                }
                assert!(
                    any_in && any_out,
                    "boundary cell {l:?} at h={h} does not straddle the boundary"
                );
            }
        }
    }

    #[test]
    fn too_coarse_grid_is_degenerate() {
        let domain = quarter_disk();
        let order = SplineOrder::new(3).unwrap();
        // With h = 2 no cell fits inside the quarter disk.
        let err = classify_cells(&domain, GridSpec::new(2.0), order);
        assert!(matches!(err, Err(GridError::DegenerateDomain)));
    }
}
