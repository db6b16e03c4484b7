//! Coefficient data of the coupled two-species reaction–diffusion system.
//!
//! The strong form solved here is, with species indices 1 and 2 and `j` the
//! respective other species,
//!
//! ```text
//!   -div(P grad u1) - tau2 u2 = f1        div(P grad u2) + tau1 u1 = f2
//!    u_i = U_i                  on the Dirichlet part
//!    (+/-) nu . P grad u_i = g_i          on the Neumann part
//!    (+/-) nu . P grad u_i + sigma_i u_i = h_i   on the Robin part
//! ```
//!
//! where the conormal sign is positive for the first species and negative
//! for the second. All coefficients are supplied as closures; built-in
//! problems construct them in [`crate::presets`].

pub const SPECIES: usize = 2;

pub type ValueFn<const M: usize> = Box<dyn Fn(&[f64; M]) -> f64 + Send + Sync>;
pub type VecFn<const M: usize> = Box<dyn Fn(&[f64; M]) -> [f64; M] + Send + Sync>;
pub type MatFn<const M: usize> = Box<dyn Fn(&[f64; M]) -> [[f64; M]; M] + Send + Sync>;

/// Scalar field with analytic first and second derivatives (Dirichlet lifts
/// and manufactured exact solutions).
pub struct SmoothField<const M: usize> {
    pub value: ValueFn<M>,
    pub gradient: VecFn<M>,
    pub hessian: MatFn<M>,
}

impl<const M: usize> SmoothField<M> {
    pub fn zero() -> Self {
        Self {
            value: Box::new(|_| 0.0),
            gradient: Box::new(|_| [0.0; M]),
            hessian: Box::new(|_| [[0.0; M]; M]),
        }
    }

    pub fn laplacian(&self, x: &[f64; M]) -> f64 {
        let h = (self.hessian)(x);
        (0..M).map(|d| h[d][d]).sum()
    }
}

/// Full problem data for the two-species system.
pub struct ProblemData<const M: usize> {
    /// Diffusion matrix `P`.
    pub diffusion: MatFn<M>,
    /// Row divergence of `P`: component `b` is `sum_a d_a P_ab`; needed for
    /// strong residuals.
    pub diffusion_div: VecFn<M>,
    /// Coupling coefficients; `tau[0]` multiplies species 1 in the second
    /// equation, `tau[1]` multiplies species 2 in the first.
    pub tau: [ValueFn<M>; SPECIES],
    /// Robin coefficients per species.
    pub sigma: [ValueFn<M>; SPECIES],
    /// Right-hand sides per species.
    pub source: [ValueFn<M>; SPECIES],
    /// Neumann data per species.
    pub neumann: [ValueFn<M>; SPECIES],
    /// Robin data per species.
    pub robin: [ValueFn<M>; SPECIES],
    /// Dirichlet lifts per species.
    pub lift: [SmoothField<M>; SPECIES],
}

impl<const M: usize> ProblemData<M> {
    /// `div(P grad u)` from the analytic derivatives of `u`.
    pub fn diffusion_strong(&self, x: &[f64; M], grad: &[f64; M], hess: &[[f64; M]; M]) -> f64 {
        let p = (self.diffusion)(x);
        let pdiv = (self.diffusion_div)(x);
        let mut out = 0.0;
        for b in 0..M {
            out += pdiv[b] * grad[b];
            for a in 0..M {
                out += p[a][b] * hess[a][b];
            }
        }
        out
    }

    /// Strong residual of the species-`s` equation for given fields:
    /// species 1: `-div(P grad u1) - tau2 u2 - f1`,
    /// species 2: `+div(P grad u2) + tau1 u1 - f2`.
    pub fn strong_residual(
        &self,
        s: usize,
        x: &[f64; M],
        grad_s: &[f64; M],
        hess_s: &[[f64; M]; M],
        other_value: f64,
    ) -> f64 {
        let o = 1 - s;
        let sign = if s == 0 { -1.0 } else { 1.0 };
        sign * self.diffusion_strong(x, grad_s, hess_s) + sign * (self.tau[o])(x) * other_value
            - (self.source[s])(x)
    }
}

/// Invert a small dense matrix by Gauss–Jordan elimination.
pub fn invert_matrix<const M: usize>(a: &[[f64; M]; M]) -> Option<[[f64; M]; M]> {
    let mut work = *a;
    let mut inv = [[0.0; M]; M];
    for (d, row) in inv.iter_mut().enumerate() {
        row[d] = 1.0;
    }
    for col in 0..M {
        let piv = (col..M)
            .max_by(|&i, &j| work[i][col].abs().partial_cmp(&work[j][col].abs()).unwrap())?;
        if work[piv][col].abs() < 1e-300 {
            return None;
        }
        work.swap(col, piv);
        inv.swap(col, piv);
        let p = work[col][col];
        for c in 0..M {
            work[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..M {
            if r != col {
                let f = work[r][col];
                for c in 0..M {
                    work[r][c] -= f * work[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    Some(inv)
}
