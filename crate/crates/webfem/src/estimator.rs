//! Computable error machinery: the relative strong-form residual, a flux
//! reconstruction, the functional upper bound with per-term breakdown, its
//! Dirichlet-only and Dirichlet/Neumann specializations, and the energy-gap
//! lower bound.
//!
//! The upper bound evaluates, per species `i` with `j` the other species and
//! a flux field `u*` of H(div)-type regularity,
//!
//! ```text
//!   || (f_i + div u*_i - tau_j u_j^h) / sqrt(tau_j) ||^2   where tau >= theta
//! + || (h_i - sigma_i u_i^h - nu.u*_i) / sqrt(sigma_i) ||^2  on the Robin part
//! + ||| P^{-1} u*_i - grad u_i^h |||^2                       over the domain
//! + || f_i + div u*_i - tau_j u_j^h ||^2                     where tau < theta
//! + || g_i - nu.u*_i ||^2                                    on the Neumann part
//! + || sqrt(tau_j) (u_j - u_j^h) ||^2                        coupling remainder
//! ```
//!
//! The coupling remainder involves the unknown solution; it is evaluated
//! against an exact reference when one exists (oracle mode) or against a
//! refined-grid surrogate, clearly labeled as such.

use thiserror::Error;

use crate::assembly::{
    assemble, discretize, embed_solution, AssemblyError, BlockSystem, Discretization, SolutionView,
};
use crate::domain::BoundaryPart;
use crate::presets::{ExactSolution, ProblemPreset};
use crate::problem::{invert_matrix, SPECIES};
use crate::quadrature::boundary_quadrature;
use crate::solver::{ssor_cg, SolverConfig, SolverError};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("strong residual needs spline order at least 3 for second derivatives")]
    SecondDerivativeUnavailable,
    #[error("flux projection mass system could not be solved: {0}")]
    ProjectionSingular(SolverError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Threshold splitting the domain into the region where both coupling
/// coefficients stay above `theta` and its complement.
#[derive(Debug, Clone, Copy)]
pub struct OmegaTilde {
    pub theta: f64,
}

impl OmegaTilde {
    pub fn contains<const M: usize>(&self, preset: &ProblemPreset<M>, x: &[f64; M]) -> bool {
        let t0 = (preset.data.tau[0])(x);
        let t1 = (preset.data.tau[1])(x);
        t0.min(t1) >= self.theta
    }
}

/// Default threshold: one percent of the largest `min_j tau_j` seen at the
/// assembly quadrature points. Strictly positive even for vanishing
/// couplings, so that a degenerate problem puts every point into the
/// complement region instead of dividing by tau = 0.
pub fn default_theta<const M: usize>(preset: &ProblemPreset<M>, disc: &Discretization<M>) -> f64 {
    let mut max_min_tau: f64 = 0.0;
    for (cell, class) in disc.active_cells() {
        if let Ok(rule) = disc.cell_rule(&preset.domain, cell, *class, &disc.quad) {
            for q in &rule.points {
                let t0 = (preset.data.tau[0])(&q.x);
                let t1 = (preset.data.tau[1])(&q.x);
                max_min_tau = max_min_tau.max(t0.min(t1));
            }
        }
    }
    (0.01 * max_min_tau).max(f64::MIN_POSITIVE)
}

/// Pointwise strong residuals `L u_h - f` of both species.
pub fn strong_residual_at<const M: usize>(
    preset: &ProblemPreset<M>,
    view: &SolutionView<'_, M>,
    fns: &[usize],
    x: &[f64; M],
) -> [f64; SPECIES] {
    let jets: Vec<_> = (0..SPECIES).map(|s| view.jet_with(fns, s, x)).collect();
    std::array::from_fn(|s| {
        preset
            .data
            .strong_residual(s, x, &jets[s].1, &jets[s].2, jets[1 - s].0)
    })
}

/// Relative strong-form residual `||L u_h - f|| / ||f||` over the domain,
/// with quadrature strictly finer than assembly.
pub fn residual_epsilon<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
) -> Result<f64, EstimatorError> {
    if disc.order.get() < 3 {
        return Err(EstimatorError::SecondDerivativeUnavailable);
    }
    let quad = disc.quad.refined();
    let mut res_sq = 0.0;
    let mut f_sq = 0.0;
    for (cell, class) in disc.active_cells() {
        let fns = disc.fns_on_cell(cell);
        let rule = disc
            .cell_rule(&preset.domain, cell, *class, &quad)
            .map_err(AssemblyError::from)?;
        for q in &rule.points {
            let r = strong_residual_at(preset, view, fns, &q.x);
            for (s, rs) in r.iter().enumerate() {
                let f = (preset.data.source[s])(&q.x);
                res_sq += q.weight * rs * rs;
                f_sq += q.weight * f * f;
            }
        }
    }
    Ok((res_sq / f_sq).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxMode {
    /// Componentwise L2 projection of `P grad u_h` onto the extended
    /// (unweighted) spline space.
    Projection,
    /// Use `P grad u_h` itself (spline-smooth, needs order >= 3 for its
    /// divergence).
    Identity,
}

/// Reconstructed flux per species: either projection coefficients over the
/// extended basis or the identity flux evaluated on the fly.
pub struct FluxReconstruction<const M: usize> {
    pub mode: FluxMode,
    /// `coeffs[species][component][basis fn]` for projection mode.
    coeffs: Option<Vec<Vec<Vec<f64>>>>,
}

impl<const M: usize> FluxReconstruction<M> {
    /// Flux vector at a point.
    pub fn value(
        &self,
        preset: &ProblemPreset<M>,
        view: &SolutionView<'_, M>,
        fns: &[usize],
        s: usize,
        x: &[f64; M],
    ) -> [f64; M] {
        match self.mode {
            FluxMode::Identity => {
                let g = view.gradient_with(fns, s, x);
                let p = (preset.data.diffusion)(x);
                std::array::from_fn(|a| (0..M).map(|b| p[a][b] * g[b]).sum())
            }
            FluxMode::Projection => {
                let c = self.coeffs.as_ref().unwrap();
                std::array::from_fn(|comp| {
                    fns.iter()
                        .map(|&f| c[s][comp][f] * view.disc.basis.eval_extended(f, x))
                        .sum()
                })
            }
        }
    }

    /// Divergence of the flux at a point.
    pub fn divergence(
        &self,
        preset: &ProblemPreset<M>,
        view: &SolutionView<'_, M>,
        fns: &[usize],
        s: usize,
        x: &[f64; M],
    ) -> f64 {
        match self.mode {
            FluxMode::Identity => {
                let (_, g, h) = view.jet_with(fns, s, x);
                preset.data.diffusion_strong(x, &g, &h)
            }
            FluxMode::Projection => {
                let c = self.coeffs.as_ref().unwrap();
                let mut div = 0.0;
                for &f in fns {
                    let (_, grad) = view.disc.basis.eval_extended_with_gradient(f, x);
                    for comp in 0..M {
                        div += c[s][comp][f] * grad[comp];
                    }
                }
                div
            }
        }
    }
}

/// Build a flux reconstruction for the discrete solution.
pub fn reconstruct_flux<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    mode: FluxMode,
) -> Result<FluxReconstruction<M>, EstimatorError> {
    match mode {
        FluxMode::Identity => {
            if disc.order.get() < 3 {
                return Err(EstimatorError::SecondDerivativeUnavailable);
            }
            Ok(FluxReconstruction { mode, coeffs: None })
        }
        FluxMode::Projection => {
            let n = disc.basis.len();
            // Mass matrix of the extended basis and per-component loads.
            let mut triplets = Vec::new();
            let mut rhs = vec![vec![vec![0.0; n]; M]; SPECIES];
            for (cell, class) in disc.active_cells() {
                let fns = disc.fns_on_cell(cell);
                if fns.is_empty() {
                    continue;
                }
                let rule = disc
                    .cell_rule(&preset.domain, cell, *class, &disc.quad)
                    .map_err(AssemblyError::from)?;
                for q in &rule.points {
                    let vals: Vec<f64> = fns
                        .iter()
                        .map(|&f| disc.basis.eval_extended(f, &q.x))
                        .collect();
                    let p = (preset.data.diffusion)(&q.x);
                    for s in 0..SPECIES {
                        let g = view.gradient_with(fns, s, &q.x);
                        let pg: [f64; M] =
                            std::array::from_fn(|a| (0..M).map(|b| p[a][b] * g[b]).sum());
                        for (fi, &f) in fns.iter().enumerate() {
                            for comp in 0..M {
                                rhs[s][comp][f] += q.weight * pg[comp] * vals[fi];
                            }
                        }
                    }
                    for (ri, &r) in fns.iter().enumerate() {
                        for (ci, &c) in fns.iter().enumerate() {
                            let v = q.weight * vals[ri] * vals[ci];
                            if v != 0.0 {
                                triplets.push((r, c, v));
                            }
                        }
                    }
                }
            }
            let mass = CsrMatrix::from_triplets(n, n, triplets);
            let cfg = SolverConfig {
                tol: 1e-12,
                max_iter: Some(1000 * n.max(10)),
                ..Default::default()
            };
            let mut coeffs = vec![vec![vec![0.0; n]; M]; SPECIES];
            for s in 0..SPECIES {
                for comp in 0..M {
                    let (c, _) = ssor_cg(&mass, &rhs[s][comp], &cfg)
                        .map_err(EstimatorError::ProjectionSingular)?;
                    coeffs[s][comp] = c;
                }
            }
            Ok(FluxReconstruction {
                mode,
                coeffs: Some(coeffs),
            })
        }
    }
}

/// Reference for the coupling remainder term.
pub enum CouplingReference<'a, const M: usize> {
    /// Exact solution known: the term is computed faithfully (oracle mode).
    Exact(&'a ExactSolution<M>),
    /// Refined-grid surrogate; not a rigorous bound.
    Surrogate(&'a SolutionView<'a, M>),
    /// Term omitted (the boundary-condition specializations drop it).
    Omit,
}

impl<'a, const M: usize> CouplingReference<'a, M> {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Exact(_) => "oracle",
            Self::Surrogate(_) => "surrogate",
            Self::Omit => "omitted",
        }
    }
}

/// Per-species terms of the upper bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpeciesTerms {
    pub resid_interior: f64,
    pub robin: f64,
    pub flux: f64,
    pub degenerate: f64,
    pub neumann: f64,
    pub coupling: f64,
}

impl SpeciesTerms {
    pub fn sum(&self) -> f64 {
        self.resid_interior
            + self.robin
            + self.flux
            + self.degenerate
            + self.neumann
            + self.coupling
    }
}

/// Full estimator output.
#[derive(Debug, Clone)]
pub struct EstimatorBreakdown {
    pub species: [SpeciesTerms; SPECIES],
    pub theta: f64,
    pub total: f64,
    pub coupling_mode: &'static str,
}

impl EstimatorBreakdown {
    pub fn to_key_values(&self) -> Vec<(String, f64)> {
        let mut out = vec![("theta_tilde".to_string(), self.theta)];
        for (s, terms) in self.species.iter().enumerate() {
            let i = s + 1;
            out.push((format!("t_resid_interior_{i}"), terms.resid_interior));
            out.push((format!("t_robin_{i}"), terms.robin));
            out.push((format!("t_flux_{i}"), terms.flux));
            out.push((format!("t_degenerate_{i}"), terms.degenerate));
            out.push((format!("t_neumann_{i}"), terms.neumann));
            out.push((format!("t_coupling_{i}"), terms.coupling));
        }
        out.push(("upper_total".to_string(), self.total));
        out
    }
}

impl std::fmt::Display for EstimatorBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in self.to_key_values() {
            writeln!(f, "{k}={v:.17e}")?;
        }
        write!(f, "coupling_mode={}", self.coupling_mode)
    }
}

/// Which terms a bound variant includes.
#[derive(Debug, Clone, Copy)]
struct TermMask {
    robin: bool,
    neumann: bool,
    coupling: bool,
}

fn upper_bound_masked<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    flux: &FluxReconstruction<M>,
    theta: f64,
    coupling: &CouplingReference<'_, M>,
    mask: TermMask,
) -> Result<EstimatorBreakdown, EstimatorError> {
    assert!(theta > 0.0, "the coupling threshold must be positive");
    let omega = OmegaTilde { theta };
    let quad = disc.quad.refined();
    let mut terms = [SpeciesTerms::default(); SPECIES];

    // Volume terms.
    for (cell, class) in disc.active_cells() {
        let fns = disc.fns_on_cell(cell);
        let rule = disc
            .cell_rule(&preset.domain, cell, *class, &quad)
            .map_err(AssemblyError::from)?;
        for q in &rule.points {
            let x = &q.x;
            let w = q.weight;
            let in_omega = omega.contains(preset, x);
            let p = (preset.data.diffusion)(x);
            let p_inv = invert_matrix(&p);
            let values: [f64; SPECIES] = std::array::from_fn(|s| view.value_with(fns, s, x));
            for s in 0..SPECIES {
                let o = 1 - s;
                let tau_o = (preset.data.tau[o])(x);
                // Equation residual with the reconstructed flux in place of
                // P grad u_h; vanishes when u* is the exact flux and the
                // other species is exact. The diffusion sign of the second
                // species flips the whole combination, which the squared
                // norms do not see.
                let sign = if s == 0 { -1.0 } else { 1.0 };
                let resid = sign * flux.divergence(preset, view, fns, s, x)
                    + sign * tau_o * values[o]
                    - (preset.data.source[s])(x);
                if in_omega {
                    terms[s].resid_interior += w * resid * resid / tau_o;
                } else {
                    terms[s].degenerate += w * resid * resid;
                }
                // ||| P^{-1} u* - grad u_h |||^2 with the P weight.
                let star = flux.value(preset, view, fns, s, x);
                let grad = view.gradient_with(fns, s, x);
                let delta: [f64; M] = match &p_inv {
                    Some(pi) => std::array::from_fn(|a| {
                        (0..M).map(|b| pi[a][b] * star[b]).sum::<f64>() - grad[a]
                    }),
                    None => [f64::INFINITY; M],
                };
                let mut energy = 0.0;
                for a in 0..M {
                    for b in 0..M {
                        energy += p[a][b] * delta[a] * delta[b];
                    }
                }
                terms[s].flux += w * energy;
                if mask.coupling && in_omega {
                    match coupling {
                        CouplingReference::Exact(exact) => {
                            let diff = (exact.fields[o].value)(x) - values[o];
                            terms[s].coupling += w * tau_o * diff * diff;
                        }
                        CouplingReference::Surrogate(reference) => {
                            let diff = reference.value(o, x) - values[o];
                            terms[s].coupling += w * tau_o * diff * diff;
                        }
                        CouplingReference::Omit => {}
                    }
                }
            }
        }
    }

    // Robin terms.
    if mask.robin {
        let rule = boundary_quadrature(
            &preset.domain,
            BoundaryPart::Robin,
            disc.grid.h(),
            quad.boundary_pts,
        );
        for q in &rule.points {
            let fns = disc.fns_containing(&q.x);
            for s in 0..SPECIES {
                let sigma = (preset.data.sigma[s])(&q.x);
                let u = view.value_with(&fns, s, &q.x);
                let star = flux.value(preset, view, &fns, s, &q.x);
                let nu_star: f64 = (0..M).map(|d| q.normal[d] * star[d]).sum();
                let r = (preset.data.robin[s])(&q.x) - sigma * u - nu_star;
                terms[s].robin += q.weight * r * r / sigma;
            }
        }
    }

    // Neumann terms.
    if mask.neumann {
        let rule = boundary_quadrature(
            &preset.domain,
            BoundaryPart::Neumann,
            disc.grid.h(),
            quad.boundary_pts,
        );
        for q in &rule.points {
            let fns = disc.fns_containing(&q.x);
            for s in 0..SPECIES {
                let star = flux.value(preset, view, &fns, s, &q.x);
                let nu_star: f64 = (0..M).map(|d| q.normal[d] * star[d]).sum();
                let r = (preset.data.neumann[s])(&q.x) - nu_star;
                terms[s].neumann += q.weight * r * r;
            }
        }
    }

    let total = terms.iter().map(|t| t.sum()).sum();
    Ok(EstimatorBreakdown {
        species: terms,
        theta,
        total,
        coupling_mode: coupling.label(),
    })
}

/// The general upper bound with all terms.
pub fn upper_bound<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    flux: &FluxReconstruction<M>,
    theta: f64,
    coupling: &CouplingReference<'_, M>,
) -> Result<EstimatorBreakdown, EstimatorError> {
    upper_bound_masked(
        preset,
        disc,
        view,
        flux,
        theta,
        coupling,
        TermMask {
            robin: true,
            neumann: true,
            coupling: true,
        },
    )
}

/// Dirichlet-only specialization: both boundary-term groups and the coupling
/// remainder drop out.
pub fn upper_bound_dirichlet<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    flux: &FluxReconstruction<M>,
    theta: f64,
) -> Result<EstimatorBreakdown, EstimatorError> {
    upper_bound_masked(
        preset,
        disc,
        view,
        flux,
        theta,
        &CouplingReference::Omit,
        TermMask {
            robin: false,
            neumann: false,
            coupling: false,
        },
    )
}

/// Dirichlet/Neumann specialization: the Robin group and the coupling
/// remainder drop out.
pub fn upper_bound_dirichlet_neumann<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    flux: &FluxReconstruction<M>,
    theta: f64,
) -> Result<EstimatorBreakdown, EstimatorError> {
    upper_bound_masked(
        preset,
        disc,
        view,
        flux,
        theta,
        &CouplingReference::Omit,
        TermMask {
            robin: false,
            neumann: true,
            coupling: false,
        },
    )
}

/// Exact error in the quadratic error form: diffusion energy plus the
/// coupling cross term plus the Robin boundary mass, against a known
/// solution by fine quadrature. Can be negative for strongly
/// non-cooperative coefficients; the flag records that instead of panicking.
pub struct ExactErrorReport {
    pub value: f64,
    pub negative: bool,
}

pub fn energy_error_vs_exact<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    exact: &ExactSolution<M>,
) -> Result<ExactErrorReport, EstimatorError> {
    let quad = disc.quad.refined();
    let mut value = 0.0;
    for (cell, class) in disc.active_cells() {
        let fns = disc.fns_on_cell(cell);
        let rule = disc
            .cell_rule(&preset.domain, cell, *class, &quad)
            .map_err(AssemblyError::from)?;
        for q in &rule.points {
            let x = &q.x;
            let p = (preset.data.diffusion)(x);
            let mut e_val = [0.0; SPECIES];
            let mut e_grad = [[0.0; M]; SPECIES];
            for s in 0..SPECIES {
                e_val[s] = (exact.fields[s].value)(x) - view.value_with(fns, s, x);
                let eg = (exact.fields[s].gradient)(x);
                let gh = view.gradient_with(fns, s, x);
                for d in 0..M {
                    e_grad[s][d] = eg[d] - gh[d];
                }
            }
            for grad in &e_grad {
                let mut diff = 0.0;
                for a in 0..M {
                    for b in 0..M {
                        diff += p[a][b] * grad[a] * grad[b];
                    }
                }
                value += q.weight * diff;
            }
            let t0 = (preset.data.tau[0])(x);
            let t1 = (preset.data.tau[1])(x);
            value += q.weight * (t0 + t1) * e_val[0] * e_val[1];
        }
    }
    let rule = boundary_quadrature(
        &preset.domain,
        BoundaryPart::Robin,
        disc.grid.h(),
        quad.boundary_pts,
    );
    for q in &rule.points {
        let fns = disc.fns_containing(&q.x);
        for s in 0..SPECIES {
            let sigma = (preset.data.sigma[s])(&q.x);
            let e = (exact.fields[s].value)(&q.x) - view.value_with(&fns, s, &q.x);
            value += q.weight * sigma * e * e;
        }
    }
    Ok(ExactErrorReport {
        value,
        negative: value < 0.0,
    })
}

/// Lower bound via the energy gap to a refined-grid candidate.
pub struct LowerBoundReport {
    /// Best (largest) lower bound over the candidate family.
    pub value: f64,
    /// Energy of the coarse solution, in the refined system when nested.
    pub j_coarse: f64,
    /// Energy of the refined solution.
    pub j_fine: f64,
    /// Whether the coarse solution embedded exactly.
    pub nested: bool,
}

/// Compute `max(0, 2 (J(u_h) - J(v)))` with `v` the solution on the halved
/// grid. On nested (box) domains the coarse solution is expressed exactly in
/// the refined space so both energies use the same discrete functional; the
/// candidate family always also contains the coarse solution itself, whose
/// gap is zero.
pub fn lower_bound_via_refinement<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    system: &BlockSystem,
    coeffs: &[f64],
    solver: &SolverConfig,
    negate_second: bool,
) -> Result<LowerBoundReport, EstimatorError> {
    let fine_disc = discretize(preset, disc.order, disc.grid.h() / 2.0, disc.quad)?;
    let fine_system = assemble(preset, &fine_disc)?;
    let (fine_x, _) = fine_system
        .solve(solver, negate_second)
        .map_err(AssemblyError::from)?;
    let j_fine = fine_system.energy(&fine_x);
    let (j_coarse, nested) = match embed_solution(disc, &fine_disc, coeffs) {
        Ok(embedded) => (fine_system.energy(&embedded), true),
        Err(_) => (system.energy(coeffs), false),
    };
    let value = (2.0 * (j_coarse - j_fine)).max(0.0);
    Ok(LowerBoundReport {
        value,
        j_coarse,
        j_fine,
        nested,
    })
}

/// Lower bound over an explicit candidate family of energies.
pub fn lower_bound_from_energies(j_uh: f64, candidate_energies: &[f64]) -> f64 {
    candidate_energies
        .iter()
        .map(|j| 2.0 * (j_uh - j))
        .fold(0.0, f64::max)
}

/// L2 mismatch `|| P grad u_h - u* ||` over the domain (flux fidelity
/// diagnostic).
pub fn flux_mismatch<const M: usize>(
    preset: &ProblemPreset<M>,
    disc: &Discretization<M>,
    view: &SolutionView<'_, M>,
    flux: &FluxReconstruction<M>,
) -> Result<f64, EstimatorError> {
    let mut sq = 0.0;
    for (cell, class) in disc.active_cells() {
        let fns = disc.fns_on_cell(cell);
        let rule = disc
            .cell_rule(&preset.domain, cell, *class, &disc.quad)
            .map_err(AssemblyError::from)?;
        for q in &rule.points {
            let p = (preset.data.diffusion)(&q.x);
            for s in 0..SPECIES {
                let g = view.gradient_with(fns, s, &q.x);
                let pg: [f64; M] = std::array::from_fn(|a| (0..M).map(|b| p[a][b] * g[b]).sum());
                let star = flux.value(preset, view, fns, s, &q.x);
                for d in 0..M {
                    sq += q.weight * (pg[d] - star[d]) * (pg[d] - star[d]);
                }
            }
        }
    }
    Ok(sq.sqrt())
}
