//! Iterative solvers for the assembled block systems.
//!
//! The primary path is conjugate gradients preconditioned by symmetric SOR,
//! with the relative-residual stopping rule. Because the literal sign
//! structure of the coupled weak form makes the block operator indefinite or
//! nonsymmetric depending on the coefficients, the block driver probes the
//! matrix and falls back to MINRES (symmetric indefinite) or to conjugate
//! gradients on the normal equations (nonsymmetric), in that order of
//! preference.

use thiserror::Error;

use crate::sparse::CsrMatrix;
use crate::util::{axpy, dot, norm2, XorShift64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SsorCg,
    Minres,
    NormalCg,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::SsorCg => "ssor_cg",
            Method::Minres => "minres",
            Method::NormalCg => "normal_cg",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Auto,
    Force(Method),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    Spd,
    Indefinite,
    Unknown,
}

impl std::fmt::Display for Definiteness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Definiteness::Spd => "spd",
            Definiteness::Indefinite => "indefinite",
            Definiteness::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative residual target.
    pub tol: f64,
    /// Maximum iterations; `None` means ten times the number of unknowns.
    pub max_iter: Option<usize>,
    /// SSOR relaxation parameter in (0, 2).
    pub ssor_omega: f64,
    pub method: MethodChoice,
    /// Seed for the definiteness probe.
    pub seed: u64,
    /// Record every iterate (tests only; memory-heavy).
    pub track_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: None,
            ssor_omega: 1.2,
            method: MethodChoice::Auto,
            seed: 0,
            track_iterates: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) {
        assert!(
            self.tol > 0.0 && self.tol < 1.0,
            "tolerance must be in (0,1)"
        );
        assert!(
            self.ssor_omega > 0.0 && self.ssor_omega < 2.0,
            "SSOR omega must be in (0,2)"
        );
    }

    fn iter_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_rel_residual: f64,
    pub method_used: Method,
    pub definiteness: Definiteness,
    pub residual_history: Vec<f64>,
    pub iterates: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (probe quotient {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("iteration limit {iterations} reached at relative residual {final_rel_residual:.3e}")]
    MaxIterExceeded {
        iterations: usize,
        final_rel_residual: f64,
        best: Vec<f64>,
        report: SolveReport,
    },
    #[error("system is numerically singular (residual stagnated at {0:.3e})")]
    SingularSystem(f64),
}

/// Apply the SSOR preconditioner `M^{-1} r` with
/// `M = (D/w + L) (w/(2-w)) D^{-1} (D/w + L)^T`.
struct SsorPreconditioner<'a> {
    a: &'a CsrMatrix,
    diag: Vec<f64>,
    omega: f64,
}

impl<'a> SsorPreconditioner<'a> {
    fn new(a: &'a CsrMatrix, omega: f64) -> Self {
        let diag = a.diagonal();
        assert!(
            diag.iter().all(|&d| d != 0.0),
            "SSOR needs a nonzero diagonal"
        );
        Self { a, diag, omega }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let w = self.omega;
        // Forward solve (D/w + L) t = r.
        let mut t = vec![0.0; n];
        for i in 0..n {
            let mut s = r[i];
            for (c, v) in self.a.row(i) {
                if c < i {
                    s -= v * t[c];
                }
            }
            t[i] = s * w / self.diag[i];
        }
        // Scale by ((2-w)/w) D.
        for i in 0..n {
            t[i] *= (2.0 - w) / w * self.diag[i];
        }
        // Backward solve (D/w + U) z = t.
        for i in (0..n).rev() {
            let mut s = t[i];
            for (c, v) in self.a.row(i) {
                if c > i {
                    s -= v * z[c];
                }
            }
            z[i] = s * w / self.diag[i];
        }
    }
}

/// Sample Rayleigh quotients with seeded random vectors; a nonpositive value
/// certifies indefiniteness.
pub fn spd_probe(a: &CsrMatrix, seed: u64, samples: usize) -> Result<(), f64> {
    let n = a.n_rows();
    let mut rng = XorShift64::new(seed);
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let av = a.apply(&v);
        let q = dot(&v, &av);
        if q <= 0.0 {
            return Err(q);
        }
    }
    Ok(())
}

const SYMMETRY_TOL: f64 = 1e-10;

/// SSOR-preconditioned conjugate gradients for symmetric positive definite
/// systems. The returned residual is the true relative residual
/// `||b - Ax|| / ||b||`.
pub fn ssor_cg(
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    config.validate();
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(SolverError::NotSymmetric(asym));
    }
    if let Err(q) = spd_probe(a, config.seed, 5) {
        return Err(SolverError::NotPositiveDefinite(q));
    }
    let n = b.len();
    let b_norm = norm2(b);
    let mut report = SolveReport {
        iterations: 0,
        final_rel_residual: 0.0,
        method_used: Method::SsorCg,
        definiteness: Definiteness::Spd,
        residual_history: Vec::new(),
        iterates: if config.track_iterates {
            Some(Vec::new())
        } else {
            None
        },
    };
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, report));
    }
    let pre = SsorPreconditioner::new(a, config.ssor_omega);
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let cap = config.iter_cap(n);
    for iter in 1..=cap {
        let ap = a.apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolverError::NotPositiveDefinite(pap));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm2(&r) / b_norm;
        report.iterations = iter;
        report.residual_history.push(rel);
        if let Some(iterates) = &mut report.iterates {
            iterates.push(x.clone());
        }
        if rel <= config.tol {
            report.final_rel_residual = rel;
            return Ok((x, report));
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm2(&sub(b, &a.apply(&x))) / b_norm;
    report.final_rel_residual = rel;
    Err(SolverError::MaxIterExceeded {
        iterations: cap,
        final_rel_residual: rel,
        best: x,
        report,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// MINRES for symmetric (possibly indefinite) systems.
pub fn minres(
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    config.validate();
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(SolverError::NotSymmetric(asym));
    }
    let n = b.len();
    let b_norm = norm2(b);
    let mut report = SolveReport {
        iterations: 0,
        final_rel_residual: 0.0,
        method_used: Method::Minres,
        definiteness: Definiteness::Unknown,
        residual_history: Vec::new(),
        iterates: if config.track_iterates {
            Some(Vec::new())
        } else {
            None
        },
    };
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, report));
    }

    // Lanczos vectors and Givens-rotation state (Paige & Saunders).
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|&bi| bi / b_norm).collect();
    let mut beta = b_norm;
    let mut eta = b_norm;
    let (mut c_old, mut c_cur) = (1.0f64, 1.0f64);
    let (mut s_old, mut s_cur) = (0.0f64, 0.0f64);
    let mut d_prev = vec![0.0; n];
    let mut d_prev2 = vec![0.0; n];

    let cap = config.iter_cap(n);
    for iter in 1..=cap {
        let mut w = a.apply(&v);
        let alpha = dot(&v, &w);
        for i in 0..n {
            w[i] -= alpha * v[i] + beta * v_prev[i];
        }
        let beta_next = norm2(&w);

        // Apply the two previous rotations and compute the new one.
        let delta = c_cur * alpha - c_old * s_cur * beta;
        let rho1 = (delta * delta + beta_next * beta_next).sqrt();
        let rho2 = s_cur * alpha + c_old * c_cur * beta;
        let rho3 = s_old * beta;
        if rho1 == 0.0 {
            return Err(SolverError::SingularSystem(eta.abs() / b_norm));
        }
        let c_new = delta / rho1;
        let s_new = beta_next / rho1;

        let mut d_new = vec![0.0; n];
        for i in 0..n {
            d_new[i] = (v[i] - rho3 * d_prev2[i] - rho2 * d_prev[i]) / rho1;
        }
        axpy(c_new * eta, &d_new, &mut x);
        eta *= -s_new;

        report.iterations = iter;
        let est = eta.abs() / b_norm;
        report.residual_history.push(est);
        if let Some(iterates) = &mut report.iterates {
            iterates.push(x.clone());
        }
        if est <= config.tol || beta_next < 1e-300 {
            // Confirm with the true residual before declaring victory.
            let rel = norm2(&sub(b, &a.apply(&x))) / b_norm;
            if rel <= config.tol {
                report.final_rel_residual = rel;
                return Ok((x, report));
            }
            if beta_next < 1e-300 {
                report.final_rel_residual = rel;
                return Ok((x, report));
            }
        }

        d_prev2 = d_prev;
        d_prev = d_new;
        v_prev = v;
        v = w.iter().map(|&wi| wi / beta_next).collect();
        beta = beta_next;
        c_old = c_cur;
        c_cur = c_new;
        s_old = s_cur;
        s_cur = s_new;
    }
    let rel = norm2(&sub(b, &a.apply(&x))) / b_norm;
    report.final_rel_residual = rel;
    Err(SolverError::MaxIterExceeded {
        iterations: cap,
        final_rel_residual: rel,
        best: x,
        report,
    })
}

/// Conjugate gradients on the normal equations `A^T A x = A^T b`. Robust for
/// any nonsingular matrix at the cost of squaring the condition number. The
/// stopping rule still monitors the original residual.
///
/// Columns are equilibrated to unit norm first; the Dirichlet weight makes
/// near-boundary basis functions tiny, and without the rescaling the normal
/// equations inherit that disparity squared.
pub fn normal_cg(
    a: &CsrMatrix,
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    config.validate();
    let n = b.len();

    let col_scale: Vec<f64> = {
        let at0 = a.transpose();
        (0..a.n_cols())
            .map(|c| {
                let s: f64 = at0.row(c).map(|(_, v)| v * v).sum::<f64>().sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect()
    };
    let mut scaled = Vec::with_capacity(a.nnz());
    for r in 0..a.n_rows() {
        for (c, v) in a.row(r) {
            scaled.push((r, c, v / col_scale[c]));
        }
    }
    let a = &CsrMatrix::from_triplets(a.n_rows(), a.n_cols(), scaled);

    let at = a.transpose();
    let b_norm = norm2(b);
    let mut report = SolveReport {
        iterations: 0,
        final_rel_residual: 0.0,
        method_used: Method::NormalCg,
        definiteness: Definiteness::Unknown,
        residual_history: Vec::new(),
        iterates: if config.track_iterates {
            Some(Vec::new())
        } else {
            None
        },
    };
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = at.apply(&r);
    let mut p = z.clone();
    let mut zz = dot(&z, &z);
    let mut best = x.clone();
    let mut best_rel = 1.0f64;
    let cap = config.iter_cap(n);
    for iter in 1..=cap {
        let w = a.apply(&p);
        let ww = dot(&w, &w);
        if ww == 0.0 {
            return Err(SolverError::SingularSystem(best_rel));
        }
        let alpha = zz / ww;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &w, &mut r);
        let rel = norm2(&r) / b_norm;
        report.iterations = iter;
        report.residual_history.push(rel);
        if let Some(iterates) = &mut report.iterates {
            iterates.push(x.clone());
        }
        if rel < best_rel {
            best_rel = rel;
            best = x.clone();
        }
        if rel <= config.tol {
            report.final_rel_residual = rel;
            let unscaled: Vec<f64> = x.iter().zip(&col_scale).map(|(v, s)| v / s).collect();
            return Ok((unscaled, report));
        }
        z = at.apply(&r);
        let zz_new = dot(&z, &z);
        if zz_new == 0.0 {
            // Gradient of the least-squares functional vanished; the
            // residual is orthogonal to the range and cannot improve.
            report.final_rel_residual = rel;
            return Err(SolverError::SingularSystem(rel));
        }
        let beta = zz_new / zz;
        zz = zz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    report.final_rel_residual = best_rel;
    Err(SolverError::MaxIterExceeded {
        iterations: cap,
        final_rel_residual: best_rel,
        best: best.iter().zip(&col_scale).map(|(v, s)| v / s).collect(),
        report,
    })
}

/// Solve the assembled block system.
///
/// `species_offset` is the first row of the second species block; with
/// `negate_second` the second block row is scaled by -1 before solving
/// (pure row scaling, the solution is unchanged) which symmetrizes weakly
/// coupled systems.
pub fn solve_block(
    a: &CsrMatrix,
    b: &[f64],
    species_offset: usize,
    negate_second: bool,
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    config.validate();
    let (a_eff, b_eff) = if negate_second {
        let mut triplets = Vec::with_capacity(a.nnz());
        for r in 0..a.n_rows() {
            let sign = if r >= species_offset { -1.0 } else { 1.0 };
            for (c, v) in a.row(r) {
                triplets.push((r, c, sign * v));
            }
        }
        let nb: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(r, &v)| if r >= species_offset { -v } else { v })
            .collect();
        (
            CsrMatrix::from_triplets(a.n_rows(), a.n_cols(), triplets),
            nb,
        )
    } else {
        (a.clone(), b.to_vec())
    };

    match config.method {
        MethodChoice::Force(Method::SsorCg) => ssor_cg(&a_eff, &b_eff, config),
        MethodChoice::Force(Method::Minres) => minres(&a_eff, &b_eff, config),
        MethodChoice::Force(Method::NormalCg) => normal_cg(&a_eff, &b_eff, config),
        MethodChoice::Auto => {
            if a_eff.asymmetry() <= SYMMETRY_TOL {
                if spd_probe(&a_eff, config.seed, 5).is_ok() {
                    match ssor_cg(&a_eff, &b_eff, config) {
                        Ok(ok) => Ok(ok),
                        // The probe can miss indefiniteness; CG detects it
                        // mid-iteration and we fall back.
                        Err(SolverError::NotPositiveDefinite(_)) => {
                            let (x, mut rep) = minres(&a_eff, &b_eff, config)?;
                            rep.definiteness = Definiteness::Indefinite;
                            Ok((x, rep))
                        }
                        Err(e) => Err(e),
                    }
                } else {
                    let (x, mut rep) = minres(&a_eff, &b_eff, config)?;
                    rep.definiteness = Definiteness::Indefinite;
                    Ok((x, rep))
                }
            } else {
                normal_cg(&a_eff, &b_eff, config)
            }
        }
    }
}
