//! Assembly of the block Galerkin system for the coupled two-species weak
//! form.
//!
//! With test functions of species `i` and the convention that the first
//! species carries a positive and the second a negative diffusion sign, the
//! weak form reads
//!
//! ```text
//! (+/-) (P grad u_i, grad v) (-/+) (tau_j u_j, v) + <sigma_i u_i, v>_Robin
//!     = (f_i, v) + <g_i, v>_Neumann + <h_i, v>_Robin - a_i(U, v)
//! ```
//!
//! which produces the 2x2 block matrix `[[K + R1, -T2], [T1, -K + R2]]`
//! over the inner basis, where `K` is the weighted diffusion stiffness,
//! `T_j` the tau-weighted mass and `R_i` the Robin boundary mass. The
//! Dirichlet lift is homogenized into the load.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bspline::{GridSpec, MultiIndex, SplineOrder};
use crate::domain::{BoundaryPart, CellClass, DomainModel};
use crate::grid::{build_index_sets, classify_cells, CellGrid, GridError};
use crate::presets::ProblemPreset;
use crate::problem::{ProblemData, SPECIES};
use crate::quadrature::{boundary_quadrature, cell_quadrature, QuadratureError, QuadratureRule};
use crate::solver::{solve_block, SolveReport, SolverConfig, SolverError};
use crate::sparse::CsrMatrix;
use crate::web::WebBasis;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("the weighted extended basis is empty")]
    EmptyBasis,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Quadrature resolution knobs.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    /// Gauss points per axis on full cells.
    pub gauss_pts: usize,
    /// Dyadic subdivision depth on cut cells.
    pub cut_depth: usize,
    /// Gauss points per boundary panel.
    pub boundary_pts: usize,
}

impl QuadConfig {
    pub fn for_order(order: SplineOrder) -> Self {
        let n = order.get();
        // Two extra points per axis keep products of weighted splines exact
        // for polynomial weights of coordinate degree up to two.
        Self {
            gauss_pts: n + 2,
            cut_depth: 4,
            boundary_pts: n + 2,
        }
    }

    /// A strictly finer configuration for residual evaluation and
    /// consistency checks.
    pub fn refined(&self) -> Self {
        Self {
            gauss_pts: 2 * self.gauss_pts,
            cut_depth: self.cut_depth + 1,
            boundary_pts: 2 * self.boundary_pts,
        }
    }
}

/// Grid, classified cells, basis and cell-to-basis adjacency for one width.
pub struct Discretization<const M: usize> {
    pub order: SplineOrder,
    pub grid: GridSpec<M>,
    pub cells: CellGrid<M>,
    pub basis: WebBasis<M>,
    pub quad: QuadConfig,
    active: Vec<(MultiIndex<M>, CellClass)>,
    cell_fns: BTreeMap<MultiIndex<M>, Vec<usize>>,
}

impl<const M: usize> Discretization<M> {
    pub fn active_cells(&self) -> &[(MultiIndex<M>, CellClass)] {
        &self.active
    }

    /// Basis functions possibly nonzero on a cell.
    pub fn fns_on_cell(&self, l: &MultiIndex<M>) -> &[usize] {
        self.cell_fns.get(l).map_or(&[], |v| v.as_slice())
    }

    /// Basis functions whose support box contains the point.
    pub fn fns_containing(&self, x: &[f64; M]) -> Vec<usize> {
        (0..self.basis.len())
            .filter(|&f| {
                let func = &self.basis.fns[f];
                (0..M).all(|d| x[d] >= func.support_lo[d] && x[d] <= func.support_hi[d])
            })
            .collect()
    }

    pub fn dofs(&self) -> usize {
        SPECIES * self.basis.len()
    }

    /// Quadrature rule for one active cell.
    pub fn cell_rule(
        &self,
        domain: &DomainModel<M>,
        l: &MultiIndex<M>,
        class: CellClass,
        quad: &QuadConfig,
    ) -> Result<QuadratureRule<M>, QuadratureError> {
        let lo = self.grid.cell_lo(l);
        let hi = self.grid.cell_hi(l);
        cell_quadrature(domain, &lo, &hi, class, quad.gauss_pts, quad.cut_depth)
    }
}

/// Classify cells, derive index sets and build the weighted extended basis.
pub fn discretize<const M: usize>(
    preset: &ProblemPreset<M>,
    order: SplineOrder,
    h: f64,
    quad: QuadConfig,
) -> Result<Discretization<M>, AssemblyError> {
    let grid = GridSpec::new(h);
    let cells = classify_cells(&preset.domain, grid, order)?;
    let sets = build_index_sets(&cells, order);
    let basis = WebBasis::build(&preset.domain, &cells, sets, order)?;
    if basis.is_empty() {
        return Err(AssemblyError::EmptyBasis);
    }
    let active = cells.active_cells();
    let mut cell_fns: BTreeMap<MultiIndex<M>, Vec<usize>> = BTreeMap::new();
    for f in 0..basis.len() {
        for l in basis.cells_of_fn(f) {
            if cells.class(&l) != CellClass::Exterior {
                cell_fns.entry(l).or_default().push(f);
            }
        }
    }
    Ok(Discretization {
        order,
        grid,
        cells,
        basis,
        quad,
        active,
        cell_fns,
    })
}

/// The assembled block system.
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_per_species: usize,
}

impl BlockSystem {
    pub fn dofs(&self) -> usize {
        self.rhs.len()
    }

    /// Extract one of the four blocks (species row, species column).
    pub fn species_block(&self, row: usize, col: usize) -> CsrMatrix {
        let n = self.n_per_species;
        self.matrix
            .block(row * n, (row + 1) * n, col * n, (col + 1) * n)
    }

    /// Energy functional value `J(v) = v' A v / 2 - b' v`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let av = self.matrix.apply(v);
        0.5 * crate::util::dot(v, &av) - crate::util::dot(&self.rhs, v)
    }

    /// Quadratic form `e' A e` (only the symmetric part contributes).
    pub fn quadratic_form(&self, e: &[f64]) -> f64 {
        crate::util::dot(e, &self.matrix.apply(e))
    }

    pub fn solve(
        &self,
        config: &SolverConfig,
        negate_second: bool,
    ) -> Result<(Vec<f64>, SolveReport), SolverError> {
        solve_block(
            &self.matrix,
            &self.rhs,
            self.n_per_species,
            negate_second,
            config,
        )
    }
}

/// Volume contributions over a given set of cells, as triplets plus load.
#[allow(clippy::type_complexity)]
fn assemble_volume<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    cells: &[(MultiIndex<M>, CellClass)],
    quad: &QuadConfig,
) -> Result<(Vec<(usize, usize, f64)>, Vec<f64>), AssemblyError> {
    let n = disc.basis.len();
    let data = &preset.data;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; SPECIES * n];

    for (cell, class) in cells {
        let fns = disc.fns_on_cell(cell);
        if fns.is_empty() {
            continue;
        }
        let rule = disc.cell_rule(&preset.domain, cell, *class, quad)?;
        let k = fns.len();
        let mut diff = vec![0.0; k * k];
        let mut mass_t0 = vec![0.0; k * k];
        let mut mass_t1 = vec![0.0; k * k];

        for q in &rule.points {
            let x = &q.x;
            let w = q.weight;
            let evals: Vec<(f64, [f64; M])> = fns
                .iter()
                .map(|&f| disc.basis.eval_with_gradient(f, x))
                .collect();
            let p = (data.diffusion)(x);
            let t0 = (data.tau[0])(x);
            let t1 = (data.tau[1])(x);
            let f0 = (data.source[0])(x);
            let f1 = (data.source[1])(x);
            let u0 = ((data.lift[0].value)(x), (data.lift[0].gradient)(x));
            let u1 = ((data.lift[1].value)(x), (data.lift[1].gradient)(x));

            // P * gradient of each basis function, reused across pairs.
            let pg: Vec<[f64; M]> = evals
                .iter()
                .map(|(_, g)| std::array::from_fn(|a| (0..M).map(|b| p[a][b] * g[b]).sum::<f64>()))
                .collect();
            let pgu0: [f64; M] =
                std::array::from_fn(|a| (0..M).map(|b| p[a][b] * u0.1[b]).sum::<f64>());
            let pgu1: [f64; M] =
                std::array::from_fn(|a| (0..M).map(|b| p[a][b] * u1.1[b]).sum::<f64>());

            for (ri, &(vr, ref gr)) in evals.iter().enumerate() {
                // Loads: sources.
                let r = fns[ri];
                rhs[r] += w * f0 * vr;
                rhs[n + r] += w * f1 * vr;
                // Homogenization, volume part of -a_s(U, v):
                // species 1: -(P grad U1 . grad v - tau2 U2 v)
                // species 2: -(-P grad U2 . grad v + tau1 U1 v)
                let pgu0_gr: f64 = (0..M).map(|d| pgu0[d] * gr[d]).sum();
                let pgu1_gr: f64 = (0..M).map(|d| pgu1[d] * gr[d]).sum();
                rhs[r] -= w * (pgu0_gr - t1 * u1.0 * vr);
                rhs[n + r] -= w * (-pgu1_gr + t0 * u0.0 * vr);

                for (ci, &(vc, _)) in evals.iter().enumerate() {
                    let grad_term: f64 = (0..M).map(|d| pg[ci][d] * gr[d]).sum();
                    diff[ri * k + ci] += w * grad_term;
                    mass_t0[ri * k + ci] += w * t0 * vc * vr;
                    mass_t1[ri * k + ci] += w * t1 * vc * vr;
                }
            }
        }

        for (ri, &r) in fns.iter().enumerate() {
            for (ci, &c) in fns.iter().enumerate() {
                let d = diff[ri * k + ci];
                if d != 0.0 {
                    triplets.push((r, c, d));
                    triplets.push((n + r, n + c, -d));
                }
                let t1v = mass_t1[ri * k + ci];
                if t1v != 0.0 {
                    triplets.push((r, n + c, -t1v));
                }
                let t0v = mass_t0[ri * k + ci];
                if t0v != 0.0 {
                    triplets.push((n + r, c, t0v));
                }
            }
        }
    }
    Ok((triplets, rhs))
}

/// Boundary contributions: Neumann and Robin loads plus the Robin matrix.
fn assemble_boundary<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    quad: &QuadConfig,
) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let n = disc.basis.len();
    let data = &preset.data;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; SPECIES * n];
    let h = disc.grid.h();

    // Neumann loads.
    let rule = boundary_quadrature(&preset.domain, BoundaryPart::Neumann, h, quad.boundary_pts);
    for q in &rule.points {
        let fns = disc.fns_containing(&q.x);
        let g0 = (data.neumann[0])(&q.x);
        let g1 = (data.neumann[1])(&q.x);
        for f in fns {
            let v = disc.basis.eval(f, &q.x);
            rhs[f] += q.weight * g0 * v;
            rhs[n + f] += q.weight * g1 * v;
        }
    }

    // Robin matrix and loads (including the lift's Robin term).
    let rule = boundary_quadrature(&preset.domain, BoundaryPart::Robin, h, quad.boundary_pts);
    for q in &rule.points {
        let fns = disc.fns_containing(&q.x);
        let s0 = (data.sigma[0])(&q.x);
        let s1 = (data.sigma[1])(&q.x);
        let h0 = (data.robin[0])(&q.x);
        let h1 = (data.robin[1])(&q.x);
        let u0 = (data.lift[0].value)(&q.x);
        let u1 = (data.lift[1].value)(&q.x);
        let evals: Vec<(usize, f64)> = fns.iter().map(|&f| (f, disc.basis.eval(f, &q.x))).collect();
        for &(r, vr) in &evals {
            rhs[r] += q.weight * (h0 - s0 * u0) * vr;
            rhs[n + r] += q.weight * (h1 - s1 * u1) * vr;
            for &(c, vc) in &evals {
                let m0 = q.weight * s0 * vc * vr;
                let m1 = q.weight * s1 * vc * vr;
                if m0 != 0.0 {
                    triplets.push((r, c, m0));
                }
                if m1 != 0.0 {
                    triplets.push((n + r, n + c, m1));
                }
            }
        }
    }
    (triplets, rhs)
}

/// Assemble the full block system.
pub fn assemble<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
) -> Result<BlockSystem, AssemblyError> {
    assemble_with_quad(preset, disc, &disc.quad)
}

/// Assemble with an explicit quadrature configuration (used for consistency
/// checks at finer resolution).
pub fn assemble_with_quad<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    quad: &QuadConfig,
) -> Result<BlockSystem, AssemblyError> {
    let n = disc.basis.len();
    if n == 0 {
        return Err(AssemblyError::EmptyBasis);
    }
    let (mut triplets, mut rhs) = assemble_volume(preset, disc, &disc.active, quad)?;
    let (btrip, brhs) = assemble_boundary(preset, disc, quad);
    triplets.extend(btrip);
    for (a, b) in rhs.iter_mut().zip(&brhs) {
        *a += b;
    }
    Ok(BlockSystem {
        matrix: CsrMatrix::from_triplets(SPECIES * n, SPECIES * n, triplets),
        rhs,
        n_per_species: n,
    })
}

/// A solved discrete field: coefficients over the basis plus the lift.
pub struct SolutionView<'a, const M: usize> {
    pub disc: &'a Discretization<M>,
    pub data: &'a ProblemData<M>,
    pub coeffs: &'a [f64],
}

impl<'a, const M: usize> SolutionView<'a, M> {
    pub fn new(disc: &'a Discretization<M>, data: &'a ProblemData<M>, coeffs: &'a [f64]) -> Self {
        assert_eq!(coeffs.len(), disc.dofs());
        Self { disc, data, coeffs }
    }

    fn species_coeff(&self, s: usize, f: usize) -> f64 {
        self.coeffs[s * self.disc.basis.len() + f]
    }

    /// Value of species `s` at `x`, searching the active basis functions.
    pub fn value(&self, s: usize, x: &[f64; M]) -> f64 {
        self.value_with(&self.disc.fns_containing(x), s, x)
    }

    /// Value using a precomputed candidate list.
    pub fn value_with(&self, fns: &[usize], s: usize, x: &[f64; M]) -> f64 {
        let mut v = (self.data.lift[s].value)(x);
        for &f in fns {
            v += self.species_coeff(s, f) * self.disc.basis.eval(f, x);
        }
        v
    }

    pub fn gradient_with(&self, fns: &[usize], s: usize, x: &[f64; M]) -> [f64; M] {
        let mut g = (self.data.lift[s].gradient)(x);
        for &f in fns {
            let (_, bg) = self.disc.basis.eval_with_gradient(f, x);
            let c = self.species_coeff(s, f);
            for d in 0..M {
                g[d] += c * bg[d];
            }
        }
        g
    }

    /// Value, gradient and Hessian (requires order >= 3 for a meaningful
    /// Hessian).
    pub fn jet_with(
        &self,
        fns: &[usize],
        s: usize,
        x: &[f64; M],
    ) -> (f64, [f64; M], [[f64; M]; M]) {
        let mut v = (self.data.lift[s].value)(x);
        let mut g = (self.data.lift[s].gradient)(x);
        let mut h = (self.data.lift[s].hessian)(x);
        for &f in fns {
            let (bv, bg, bh) = self.disc.basis.eval_with_hessian(f, x);
            let c = self.species_coeff(s, f);
            v += c * bv;
            for a in 0..M {
                g[a] += c * bg[a];
                for b in 0..M {
                    h[a][b] += c * bh[a][b];
                }
            }
        }
        (v, g, h)
    }
}

/// Express a coarse solution exactly in a refined discretization (nested
/// spline spaces). Both coefficient layouts are per-species blocks.
pub fn embed_solution<const M: usize>(
    coarse: &Discretization<M>,
    fine: &Discretization<M>,
    coarse_coeffs: &[f64],
) -> Result<Vec<f64>, GridError> {
    let map = coarse.basis.embed_in_refined(&fine.basis)?;
    let nc = coarse.basis.len();
    let nf = fine.basis.len();
    let mut out = vec![0.0; SPECIES * nf];
    for s in 0..SPECIES {
        for (cf, expansion) in map.iter().enumerate() {
            let c = coarse_coeffs[s * nc + cf];
            if c == 0.0 {
                continue;
            }
            for &(ff, m) in expansion {
                out[s * nf + ff] += c * m;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset_coupled_smooth, preset_poisson1d, preset_population};
    use crate::util::XorShift64;

    fn ord(n: usize) -> SplineOrder {
        SplineOrder::new(n).unwrap()
    }

    #[test]
    fn disjoint_supports_give_zero_entries() {
        let preset = preset_poisson1d();
        let order = ord(2);
        let disc = discretize(&preset, order, 0.125, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        // Find two basis functions with disjoint supports.
        let a = 0;
        let mut b = None;
        for f in 1..disc.basis.len() {
            if disc.basis.fns[f].support_lo[0] >= disc.basis.fns[a].support_hi[0] {
                b = Some(f);
                break;
            }
        }
        let b = b.expect("grid is fine enough for disjoint supports");
        assert_eq!(system.matrix.get(a, b), 0.0);
        assert_eq!(system.matrix.get(b, a), 0.0);
    }

    #[test]
    fn poisson_1d_matches_exact_solution_at_knots() {
        let preset = preset_poisson1d();
        let order = ord(2);
        let disc = discretize(&preset, order, 0.25, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let cfg = SolverConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let (x, _) = system.solve(&cfg, false).unwrap();
        let view = SolutionView::new(&disc, &preset.data, &x);
        for (s, scale) in [(0usize, 0.5), (1, 1.0)] {
            for i in 1..4 {
                let xi = [0.25 * i as f64];
                let exact = scale * xi[0] * (1.0 - xi[0]);
                let got = view.value(s, &xi);
                assert!(
                    (got - exact).abs() < 1e-3,
                    "species {s} at {xi:?}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn loads_match_independent_quadrature_pass() {
        // Recompute every load entry from scratch with separate quadrature
        // loops; exercises the lift homogenization on the population preset.
        let preset = preset_population();
        let order = ord(3);
        let quad = QuadConfig::for_order(order);
        let disc = discretize(&preset, order, 0.25, quad).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let n = disc.basis.len();
        let data = &preset.data;

        for (s, other) in [(0usize, 1usize), (1, 0)] {
            let sign_d = if s == 0 { 1.0 } else { -1.0 };
            let sign_c = if s == 0 { -1.0 } else { 1.0 };
            for r in 0..n {
                let mut load = 0.0;
                // Volume terms: f_s v - (sign_d P grad U_s . grad v
                //                         + sign_c tau_other U_other v).
                for (cell, class) in disc.active_cells() {
                    if !disc.fns_on_cell(cell).contains(&r) {
                        continue;
                    }
                    let rule = disc
                        .cell_rule(&preset.domain, cell, *class, &disc.quad)
                        .unwrap();
                    for q in &rule.points {
                        let (vr, gr) = disc.basis.eval_with_gradient(r, &q.x);
                        let p = (data.diffusion)(&q.x);
                        let gu: [f64; 2] = (data.lift[s].gradient)(&q.x);
                        let pgu: [f64; 2] =
                            std::array::from_fn(|a| (0..2).map(|b| p[a][b] * gu[b]).sum::<f64>());
                        let pg_gr: f64 = (0..2).map(|d| pgu[d] * gr[d]).sum();
                        let uo = (data.lift[other].value)(&q.x);
                        let to = (data.tau[other])(&q.x);
                        load += q.weight
                            * ((data.source[s])(&q.x) * vr
                                - sign_d * pg_gr
                                - sign_c * to * uo * vr);
                    }
                }
                // Boundary terms.
                let rule = boundary_quadrature(
                    &preset.domain,
                    BoundaryPart::Neumann,
                    disc.grid.h(),
                    disc.quad.boundary_pts,
                );
                for q in &rule.points {
                    let v = disc.basis.eval(r, &q.x);
                    load += q.weight * (data.neumann[s])(&q.x) * v;
                }
                let rule = boundary_quadrature(
                    &preset.domain,
                    BoundaryPart::Robin,
                    disc.grid.h(),
                    disc.quad.boundary_pts,
                );
                for q in &rule.points {
                    let v = disc.basis.eval(r, &q.x);
                    let sig = (data.sigma[s])(&q.x);
                    let us = (data.lift[s].value)(&q.x);
                    load += q.weight * ((data.robin[s])(&q.x) - sig * us) * v;
                }
                let got = system.rhs[s * n + r];
                assert!(
                    (got - load).abs() <= 1e-10 * load.abs().max(1.0),
                    "species {s}, row {r}: {got} vs independent {load}"
                );
            }
        }
    }

    #[test]
    fn diffusion_blocks_are_symmetric_and_signed() {
        let preset = preset_coupled_smooth();
        let order = ord(3);
        let disc = discretize(&preset, order, 0.25, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();

        let b00 = system.species_block(0, 0);
        let b11 = system.species_block(1, 1);
        assert!(b00.asymmetry() <= 1e-10);
        assert!(b11.asymmetry() <= 1e-10);

        // Sign pattern of the coupling blocks against direct quadrature.
        let b01 = system.species_block(0, 1);
        let b10 = system.species_block(1, 0);
        let mut rng = XorShift64::new(5);
        for _ in 0..10 {
            let r = (rng.next_u64() as usize) % disc.basis.len();
            let c = (rng.next_u64() as usize) % disc.basis.len();
            let mut mass = 0.0;
            for (cell, class) in disc.active_cells() {
                let fns = disc.fns_on_cell(cell);
                if !fns.contains(&r) || !fns.contains(&c) {
                    continue;
                }
                let rule = disc
                    .cell_rule(&preset.domain, cell, *class, &disc.quad)
                    .unwrap();
                for q in &rule.points {
                    mass += q.weight * disc.basis.eval(r, &q.x) * disc.basis.eval(c, &q.x);
                }
            }
            // tau1 = tau2 = TAU here, so both couplings have magnitude
            // tau * mass with opposite signs.
            let t = 0.01 * mass;
            assert!(
                (b01.get(r, c) + t).abs() <= 1e-10 * t.abs().max(1e-12),
                "block(1,2) sign: {} vs {}",
                b01.get(r, c),
                -t
            );
            assert!(
                (b10.get(r, c) - t).abs() <= 1e-10 * t.abs().max(1e-12),
                "block(2,1) sign: {} vs {}",
                b10.get(r, c),
                t
            );
        }
    }

    #[test]
    fn assembly_is_additive_over_cell_partitions() {
        let preset = preset_coupled_smooth();
        let order = ord(3);
        let quad = QuadConfig::for_order(order);
        let disc = discretize(&preset, order, 0.25, quad).unwrap();
        let all = disc.active_cells().to_vec();
        // Split along a grid line.
        let (left, right): (Vec<_>, Vec<_>) = all.iter().partition(|(l, _)| l[0] < 2);
        let (t_all, r_all) = assemble_volume(&preset, &disc, &all, &quad).unwrap();
        let (t_l, r_l) = assemble_volume(&preset, &disc, &left, &quad).unwrap();
        let (t_r, r_r) = assemble_volume(&preset, &disc, &right, &quad).unwrap();
        let n = disc.dofs();
        let m_all = CsrMatrix::from_triplets(n, n, t_all);
        let mut t_sum = t_l;
        t_sum.extend(t_r);
        let m_sum = CsrMatrix::from_triplets(n, n, t_sum);
        for r in 0..n {
            let scale: f64 = 1.0;
            for (c, v) in m_all.row(r) {
                assert!(
                    (v - m_sum.get(r, c)).abs() <= 1e-12 * v.abs().max(scale),
                    "matrix additivity at ({r},{c})"
                );
            }
            let diff = (r_all[r] - (r_l[r] + r_r[r])).abs();
            assert!(diff <= 1e-12 * r_all[r].abs().max(1.0), "rhs additivity");
        }
    }

    #[test]
    fn empirical_friedrich_inequality_holds() {
        let preset = preset_coupled_smooth();
        let order = ord(3);
        let disc = discretize(&preset, order, 0.25, QuadConfig::for_order(order)).unwrap();
        let n = disc.basis.len();
        let mut rng = XorShift64::new(77);
        let mut worst_ratio = 0.0f64;
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut l2 = 0.0;
            let mut h1 = 0.0;
            for (cell, class) in disc.active_cells() {
                let fns = disc.fns_on_cell(cell);
                let rule = disc
                    .cell_rule(&preset.domain, cell, *class, &disc.quad)
                    .unwrap();
                for q in &rule.points {
                    let mut v = 0.0;
                    let mut g = [0.0; 2];
                    for &f in fns {
                        let (bv, bg) = disc.basis.eval_with_gradient(f, &q.x);
                        v += coeffs[f] * bv;
                        g[0] += coeffs[f] * bg[0];
                        g[1] += coeffs[f] * bg[1];
                    }
                    l2 += q.weight * v * v;
                    h1 += q.weight * (g[0] * g[0] + g[1] * g[1]);
                }
            }
            worst_ratio = worst_ratio.max((l2 / h1).sqrt());
        }
        // Functions vanishing on two opposite sides of the unit square obey
        // the inequality with constant 1/pi; allow generous slack.
        assert!(
            worst_ratio < 5.0,
            "empirical Friedrich ratio {worst_ratio} unbounded"
        );
    }

    #[test]
    fn energy_functional_basics() {
        let preset = preset_poisson1d();
        let order = ord(3);
        let disc = discretize(&preset, order, 0.25, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let zero = vec![0.0; system.dofs()];
        assert_eq!(system.energy(&zero), 0.0);

        // With the second equation sign-normalized the energy is minimized
        // by the solution.
        let cfg = SolverConfig {
            tol: 1e-13,
            ..Default::default()
        };
        let (x, _) = system.solve(&cfg, false).unwrap();
        let n = system.n_per_species;
        let mut trip = Vec::new();
        for r in 0..system.dofs() {
            let sign = if r >= n { -1.0 } else { 1.0 };
            for (c, v) in system.matrix.row(r) {
                trip.push((r, c, sign * v));
            }
        }
        let negated = BlockSystem {
            matrix: CsrMatrix::from_triplets(system.dofs(), system.dofs(), trip),
            rhs: system
                .rhs
                .iter()
                .enumerate()
                .map(|(r, &v)| if r >= n { -v } else { v })
                .collect(),
            n_per_species: n,
        };
        let j_star = negated.energy(&x);
        let mut rng = XorShift64::new(3);
        for _ in 0..50 {
            let w: Vec<f64> = (0..system.dofs()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let perturbed: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + 0.1 * b).collect();
            assert!(
                negated.energy(&perturbed) >= j_star - 1e-12,
                "energy not minimal at the solution"
            );
        }
    }

    #[test]
    fn galerkin_orthogonality_via_finer_quadrature() {
        let preset = preset_coupled_smooth();
        let order = ord(3);
        let quad = QuadConfig::for_order(order);
        let disc = discretize(&preset, order, 0.25, quad).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let cfg = SolverConfig {
            tol: 1e-13,
            ..Default::default()
        };
        let (x, _) = system.solve(&cfg, false).unwrap();

        let fine = assemble_with_quad(&preset, &disc, &quad.refined()).unwrap();
        let residual: Vec<f64> = {
            let ax = fine.matrix.apply(&x);
            fine.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        };
        let scale = fine.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for (i, r) in residual.iter().enumerate() {
            assert!(
                r.abs() <= 1e-8 * scale,
                "fine-quadrature residual row {i}: {r}"
            );
        }
    }

    #[test]
    fn decoupled_block_solve_equals_scalar_solves() {
        // tau = 0: the species decouple and the block solution matches two
        // independent single-species solves.
        let preset = preset_poisson1d();
        let order = ord(2);
        let disc = discretize(&preset, order, 0.125, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let n = system.n_per_species;
        let cfg = SolverConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let (x, _) = system.solve(&cfg, false).unwrap();

        // Scalar solves of the diagonal blocks.
        let k00 = system.species_block(0, 0);
        let k11 = system.species_block(1, 1);
        let (x0, _) = crate::solver::ssor_cg(&k00, &system.rhs[..n], &cfg).unwrap();
        // The second block is negative definite; solve its negation.
        let mut trip = Vec::new();
        for r in 0..n {
            for (c, v) in k11.row(r) {
                trip.push((r, c, -v));
            }
        }
        let k11n = CsrMatrix::from_triplets(n, n, trip);
        let b1: Vec<f64> = system.rhs[n..].iter().map(|v| -v).collect();
        let (x1, _) = crate::solver::ssor_cg(&k11n, &b1, &cfg).unwrap();
        for i in 0..n {
            assert!((x[i] - x0[i]).abs() <= 1e-10 * x0[i].abs().max(1.0));
            assert!((x[n + i] - x1[i]).abs() <= 1e-10 * x1[i].abs().max(1.0));
        }
    }

    #[test]
    fn population_solve_meets_the_residual_contract() {
        // The stopping rule holds even on the nonsymmetric indefinite block
        // system, through the normal-equation fallback.
        let preset = preset_population();
        let order = ord(3);
        let disc = discretize(&preset, order, 0.25, QuadConfig::for_order(order)).unwrap();
        let system = assemble(&preset, &disc).unwrap();
        let cfg = SolverConfig {
            tol: 1e-6,
            max_iter: Some(200_000),
            ..Default::default()
        };
        let (x, report) = system.solve(&cfg, false).unwrap();
        assert_eq!(report.method_used, crate::solver::Method::NormalCg);
        assert!(report.final_rel_residual <= 1e-6);
        // Independent recomputation of the residual.
        let ax = system.matrix.apply(&x);
        let r: f64 = system
            .rhs
            .iter()
            .zip(&ax)
            .map(|(b, a)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let bn: f64 = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(r / bn <= 1e-6);
    }

    #[test]
    fn embedding_preserves_solution_values() {
        let preset = preset_coupled_smooth();
        let order = ord(3);
        let quad = QuadConfig::for_order(order);
        let coarse = discretize(&preset, order, 0.25, quad).unwrap();
        let fine = discretize(&preset, order, 0.125, quad).unwrap();
        let system = assemble(&preset, &coarse).unwrap();
        let cfg = SolverConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let (x, _) = system.solve(&cfg, false).unwrap();
        let embedded = embed_solution(&coarse, &fine, &x).unwrap();
        let cview = SolutionView::new(&coarse, &preset.data, &x);
        let fview = SolutionView::new(&fine, &preset.data, &embedded);
        let mut rng = XorShift64::new(15);
        for _ in 0..30 {
            let p = [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)];
            for s in 0..SPECIES {
                let a = cview.value(s, &p);
                let b = fview.value(s, &p);
                assert!(
                    (a - b).abs() <= 1e-11 * a.abs().max(1.0),
                    "species {s} at {p:?}: {a} vs {b}"
                );
            }
        }
    }
}
