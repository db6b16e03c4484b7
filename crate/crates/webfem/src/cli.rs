//! Command-line driver: problem selection, sweeps over the grid width,
//! convergence tables, estimator reports and field dumps.
//!
//! Outputs land in the chosen directory:
//! * `table.csv` — one row per grid width: `h, dofs, iterations, eps_res,
//!   upper, lower` (descending `h`);
//! * `summary.csv` — machine-readable run record with solver and estimator
//!   detail per grid width;
//! * `fields_h{h}.csv` — solution and residual samples on a uniform lattice
//!   when field emission is on.
//!
//! All floating-point output uses 17 significant digits so repeated runs are
//! byte-identical and downstream tools can round-trip values.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::assembly::{assemble, discretize, AssemblyError, QuadConfig, SolutionView};
use crate::bspline::{BsplineError, SplineOrder};
use crate::estimator::{
    default_theta, energy_error_vs_exact, lower_bound_from_energies, reconstruct_flux,
    residual_epsilon, strong_residual_at, upper_bound, CouplingReference, EstimatorBreakdown,
    EstimatorError, FluxMode,
};
use crate::presets::{preset_by_name, AnyPreset, PresetError, ProblemPreset};
use crate::solver::{MethodChoice, SolveReport, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Order(#[from] BsplineError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub order: usize,
    pub h_list: Vec<f64>,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub ssor_omega: f64,
    pub seed: u64,
    pub estimate: bool,
    pub theta_tilde: Option<f64>,
    pub flux_mode: FluxMode,
    pub quad_depth: usize,
    pub emit_fields: bool,
    pub out_dir: PathBuf,
    pub negate_second_equation: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.h_list.is_empty() {
            return Err(CliError::InvalidConfig("empty grid-width list".into()));
        }
        if self.h_list.iter().any(|&h| h <= 0.0 || !h.is_finite()) {
            return Err(CliError::InvalidConfig(
                "grid widths must be positive".into(),
            ));
        }
        if self.order < 2 {
            return Err(CliError::InvalidConfig(
                "spline order must be at least 2".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::InvalidConfig(
                "solver tolerance must be in (0, 1)".into(),
            ));
        }
        if !(self.ssor_omega > 0.0 && self.ssor_omega < 2.0) {
            return Err(CliError::InvalidConfig(
                "SSOR omega must be in (0, 2)".into(),
            ));
        }
        if let Some(theta) = self.theta_tilde {
            if theta <= 0.0 {
                return Err(CliError::InvalidConfig(
                    "the coupling threshold must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ssor_omega: self.ssor_omega,
            method: MethodChoice::Auto,
            seed: self.seed,
            track_iterates: false,
        }
    }
}

/// Result of one grid width.
pub struct RunRow {
    pub h: f64,
    pub dofs: usize,
    pub report: SolveReport,
    pub eps_res: Option<f64>,
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub lower_nested: Option<bool>,
    pub energy_error_exact: Option<f64>,
    pub breakdown: Option<EstimatorBreakdown>,
}

pub struct RunSummary {
    pub problem: String,
    pub rows: Vec<RunRow>,
    pub warn_nonelliptic: bool,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Execute a full run: discretize, solve, estimate and emit artifacts for
/// every grid width (sorted descending).
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    match preset_by_name(&config.problem)? {
        AnyPreset::One(preset) => run_typed::<1>(&preset, config),
        AnyPreset::Two(preset) => run_typed::<2>(&preset, config),
    }
}

fn run_typed<const M: usize>(
    preset: &ProblemPreset<M>,
    config: &RunConfig,
) -> Result<RunSummary, CliError> {
    let order = SplineOrder::new(config.order)?;
    fs::create_dir_all(&config.out_dir)?;

    let mut h_list = config.h_list.clone();
    h_list.sort_by(|a, b| b.partial_cmp(a).unwrap());
    h_list.dedup();

    let mut table = fs::File::create(config.out_dir.join("table.csv"))?;
    writeln!(table, "h,dofs,iterations,eps_res,upper,lower")?;
    let mut summary = fs::File::create(config.out_dir.join("summary.csv"))?;
    writeln!(
        summary,
        "h,dofs,iterations,final_rel_residual,method,definiteness,eps_res,\
         energy_error_exact,upper_total,lower_bound,lower_nested,theta_tilde,\
         t_resid_interior_1,t_robin_1,t_flux_1,t_degenerate_1,t_neumann_1,t_coupling_1,\
         t_resid_interior_2,t_robin_2,t_flux_2,t_degenerate_2,t_neumann_2,t_coupling_2,\
         coupling_mode,warn_nonelliptic"
    )?;

    if config.order < 3 {
        eprintln!(
            "note: strong residual needs order >= 3; eps_res column left empty at order {}",
            config.order
        );
    }

    let mut rows = Vec::new();
    for &h in &h_list {
        let row = run_single(preset, config, order, h)?;

        writeln!(
            table,
            "{},{},{},{},{},{}",
            fmt(row.h),
            row.dofs,
            row.report.iterations,
            fmt_opt(row.eps_res),
            fmt_opt(row.upper),
            fmt_opt(row.lower),
        )?;
        table.flush()?;

        let bd = row.breakdown.as_ref();
        let term = |pick: fn(&crate::estimator::SpeciesTerms) -> f64, s: usize| -> String {
            bd.map(|b| fmt(pick(&b.species[s]))).unwrap_or_default()
        };
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(row.h),
            row.dofs,
            row.report.iterations,
            fmt(row.report.final_rel_residual),
            row.report.method_used,
            row.report.definiteness,
            fmt_opt(row.eps_res),
            fmt_opt(row.energy_error_exact),
            fmt_opt(row.upper),
            fmt_opt(row.lower),
            row.lower_nested.map(|b| b.to_string()).unwrap_or_default(),
            bd.map(|b| fmt(b.theta)).unwrap_or_default(),
            term(|t| t.resid_interior, 0),
            term(|t| t.robin, 0),
            term(|t| t.flux, 0),
            term(|t| t.degenerate, 0),
            term(|t| t.neumann, 0),
            term(|t| t.coupling, 0),
            term(|t| t.resid_interior, 1),
            term(|t| t.robin, 1),
            term(|t| t.flux, 1),
            term(|t| t.degenerate, 1),
            term(|t| t.neumann, 1),
            term(|t| t.coupling, 1),
            bd.map(|b| b.coupling_mode.to_string()).unwrap_or_default(),
            preset.warn_nonelliptic,
        )?;
        summary.flush()?;

        rows.push(row);
    }

    Ok(RunSummary {
        problem: config.problem.clone(),
        rows,
        warn_nonelliptic: preset.warn_nonelliptic,
    })
}

fn run_single<const M: usize>(
    preset: &ProblemPreset<M>,
    config: &RunConfig,
    order: SplineOrder,
    h: f64,
) -> Result<RunRow, CliError> {
    let mut quad = QuadConfig::for_order(order);
    quad.cut_depth = config.quad_depth;
    let disc = discretize(preset, order, h, quad)?;
    let system = assemble(preset, &disc)?;
    let solver_cfg = config.solver_config();
    let (coeffs, report) = system.solve(&solver_cfg, config.negate_second_equation)?;
    let view = SolutionView::new(&disc, &preset.data, &coeffs);

    let eps_res = if config.order >= 3 {
        Some(residual_epsilon(preset, &disc, &view)?)
    } else {
        None
    };

    let energy_error_exact = match &preset.exact {
        Some(exact) => Some(energy_error_vs_exact(preset, &disc, &view, exact)?.value),
        None => None,
    };

    let mut upper = None;
    let mut lower = None;
    let mut lower_nested = None;
    let mut breakdown = None;
    if config.estimate {
        let theta = config
            .theta_tilde
            .unwrap_or_else(|| default_theta(preset, &disc));
        let flux = reconstruct_flux(preset, &disc, &view, config.flux_mode)?;

        // A refined solve serves both the lower bound and, absent an exact
        // solution, the coupling surrogate.
        let fine_disc = discretize(preset, order, h / 2.0, quad)?;
        let fine_system = assemble(preset, &fine_disc)?;
        let (fine_coeffs, _) = fine_system.solve(&solver_cfg, config.negate_second_equation)?;
        let fine_view = SolutionView::new(&fine_disc, &preset.data, &fine_coeffs);

        let bd = match &preset.exact {
            Some(exact) => upper_bound(
                preset,
                &disc,
                &view,
                &flux,
                theta,
                &CouplingReference::Exact(exact),
            )?,
            None => upper_bound(
                preset,
                &disc,
                &view,
                &flux,
                theta,
                &CouplingReference::Surrogate(&fine_view),
            )?,
        };

        let j_fine = fine_system.energy(&fine_coeffs);
        let (j_coarse, nested) = match crate::assembly::embed_solution(&disc, &fine_disc, &coeffs) {
            Ok(embedded) => (fine_system.energy(&embedded), true),
            Err(_) => (system.energy(&coeffs), false),
        };
        lower = Some(lower_bound_from_energies(j_coarse, &[j_coarse, j_fine]));
        lower_nested = Some(nested);
        upper = Some(bd.total);
        breakdown = Some(bd);
    }

    if config.emit_fields {
        emit_fields(preset, config, &disc, &view, h)?;
    }

    Ok(RunRow {
        h,
        dofs: system.dofs(),
        report,
        eps_res,
        upper,
        lower,
        lower_nested,
        energy_error_exact,
        breakdown,
    })
}

/// Sample the solution and strong residual on a uniform lattice over the
/// bounding box, keeping inside points only.
fn emit_fields<const M: usize>(
    preset: &ProblemPreset<M>,
    config: &RunConfig,
    disc: &crate::assembly::Discretization<M>,
    view: &SolutionView<'_, M>,
    h: f64,
) -> Result<(), CliError> {
    const LATTICE: usize = 50;
    let path = config.out_dir.join(format!("fields_h{h}.csv"));
    let mut file = fs::File::create(path)?;
    match M {
        1 => writeln!(file, "x,u1,u2,r1,r2")?,
        _ => writeln!(file, "x,y,u1,u2,r1,r2")?,
    }
    let (lo, hi) = preset.domain.bbox;
    let mut idx = [0usize; M];
    loop {
        let x: [f64; M] =
            std::array::from_fn(|d| lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / LATTICE as f64);
        if preset.domain.is_inside(&x) {
            let fns = disc.fns_containing(&x);
            let u1 = view.value_with(&fns, 0, &x);
            let u2 = view.value_with(&fns, 1, &x);
            let (r1, r2) = if config.order >= 3 {
                let r = strong_residual_at(preset, view, &fns, &x);
                (fmt(r[0]), fmt(r[1]))
            } else {
                (String::new(), String::new())
            };
            let coords: Vec<String> = x.iter().map(|&c| fmt(c)).collect();
            writeln!(
                file,
                "{},{},{},{},{}",
                coords.join(","),
                fmt(u1),
                fmt(u2),
                r1,
                r2
            )?;
        }
        let mut d = M;
        let mut done = true;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            if idx[d] <= LATTICE {
                done = false;
                break;
            }
            idx[d] = 0;
        }
        if done {
            break;
        }
    }
    Ok(())
}

/// Parse a comma-separated list of grid widths.
pub fn parse_h_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad grid width `{tok}`: {e}"))
        })
        .collect()
}
