use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use webfem::cli::{parse_h_list, run, RunConfig};
use webfem::estimator::FluxMode;

/// Weighted extended B-spline Galerkin solver for coupled elliptic systems,
/// with computable two-sided a posteriori error bounds.
#[derive(Parser, Debug)]
#[command(name = "webfem", version, about)]
struct Args {
    /// Problem preset: population, population-annulus, poisson1d,
    /// coupled_smooth, dirichlet_only, dirichlet_neumann.
    #[arg(long)]
    problem: String,

    /// Spline order n (polynomial degree n-1). The strong residual needs
    /// order >= 3.
    #[arg(long, default_value_t = 3)]
    order: usize,

    /// Comma-separated grid widths, e.g. `0.5,0.25,0.125,0.0625`.
    #[arg(long, value_parser = parse_h_list)]
    h: Vec<Vec<f64>>,

    /// Relative residual tolerance of the linear solver.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    /// Iteration cap (default: ten times the number of unknowns).
    #[arg(long)]
    max_iter: Option<usize>,

    /// SSOR relaxation parameter in (0, 2).
    #[arg(long, default_value_t = 1.2)]
    ssor_omega: f64,

    /// Threshold separating the well-coupled region (default: one percent of
    /// the largest coupling coefficient).
    #[arg(long)]
    theta_tilde: Option<f64>,

    /// Flux reconstruction used by the upper bound.
    #[arg(long, default_value = "projection", value_parser = ["projection", "identity"])]
    flux: String,

    /// Dyadic subdivision depth on boundary-crossing cells.
    #[arg(long, default_value_t = 4)]
    quad_depth: usize,

    /// Compute the two-sided error bounds (adds a refined solve per width).
    #[arg(long, default_value_t = false)]
    estimate: bool,

    /// Write solution/residual samples per grid width.
    #[arg(long, default_value_t = false)]
    emit_fields: bool,

    /// Output directory for table.csv, summary.csv and field dumps.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Scale the second species' equations by -1 before solving (pure row
    /// scaling; symmetrizes weakly coupled systems).
    #[arg(long, default_value_t = false)]
    negate_second_equation: bool,

    /// Seed for the solver's definiteness probe.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = RunConfig {
        problem: args.problem,
        order: args.order,
        h_list: args.h.into_iter().flatten().collect(),
        tol: args.tol,
        max_iter: args.max_iter,
        ssor_omega: args.ssor_omega,
        seed: args.seed,
        estimate: args.estimate,
        theta_tilde: args.theta_tilde,
        flux_mode: if args.flux == "identity" {
            FluxMode::Identity
        } else {
            FluxMode::Projection
        },
        quad_depth: args.quad_depth,
        emit_fields: args.emit_fields,
        out_dir: args.out.clone(),
        negate_second_equation: args.negate_second_equation,
    };

    match run(&config) {
        Ok(summary) => {
            if summary.warn_nonelliptic {
                eprintln!(
                    "warning: preset `{}` has a diffusion matrix that is not uniformly \
                     positive definite; indefinite solver fallbacks are expected",
                    summary.problem
                );
            }
            println!("problem: {}", summary.problem);
            println!(
                "{:>12} {:>8} {:>7} {:>13} {:>13} {:>13}",
                "h", "dofs", "iters", "eps_res", "upper", "lower"
            );
            for row in &summary.rows {
                println!(
                    "{:>12.6} {:>8} {:>7} {:>13} {:>13} {:>13}",
                    row.h,
                    row.dofs,
                    row.report.iterations,
                    row.eps_res.map(|v| format!("{v:.3e}")).unwrap_or_default(),
                    row.upper.map(|v| format!("{v:.3e}")).unwrap_or_default(),
                    row.lower.map(|v| format!("{v:.3e}")).unwrap_or_default(),
                );
            }
            println!("artifacts in {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
