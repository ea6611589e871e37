//! Observer-design matrix inequalities.
//!
//! Two block inequalities are assembled, decided for strict feasibility,
//! and turned into observer gains:
//!
//! * Lipschitz kind, variables (P, Y, eps):
//!   `[[A'P + PA - C'Y' - YC + eps*gl^2*I, P], [P, -eps*I]] < 0`,
//!   gain `L = P^{-1} Y`.
//! * One-sided + quadratic kind, variables (P, sigma, eps1, eps2):
//!   `[[A'P + PA - sigma*C'C + (eps1*gs + eps2*gq1)*I, P + ((gq2*eps2 - eps1)/2)*I],
//!     [ ..sym.. , -eps2*I]] < 0`,
//!   gain `L = sigma/2 * P^{-1} C'`.
//!
//! Strictness is realized as a margin `delta`: the block must satisfy
//! `lambda_max <= -delta` with `lambda_min(P) >= delta`. Feasibility is
//! searched by alternating projections with over-relaxation between the
//! negative-definite cone (eigenvalue clamping) and the affine image of
//! the decision variables (least squares, with P and the scalars clamped
//! to stay admissible). A stall is reported as "no certificate found",
//! never as a proof of infeasibility.

use thiserror::Error;

use crate::matfun::{eig_sym, solve_spd, Mat, MatError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no certificate found: cone residual {residual:.3e} after {iterations} iterations")]
    Infeasible {
        residual: f64,
        iterations: usize,
        /// Cone residual per iteration, for stall diagnostics.
        residuals: Vec<f64>,
    },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

impl From<MatError> for LmiError {
    fn from(e: MatError) -> Self {
        LmiError::NumericalBreakdown(e.to_string())
    }
}

/// Which inequality is being solved, with its nonlinearity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LmiKind {
    Lipschitz {
        gamma_l: f64,
    },
    OslQib {
        gamma_s: f64,
        gamma_q1: f64,
        gamma_q2: f64,
    },
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub kind: LmiKind,
    pub a: Mat,
    pub c: Mat,
    /// Strictness margin replacing `< 0` by `<= -delta * I`.
    pub delta: f64,
}

impl LmiProblem {
    pub fn new(kind: LmiKind, a: Mat, c: Mat, delta: f64) -> Result<Self, LmiError> {
        if a.rows != a.cols {
            return Err(LmiError::DimensionMismatch("A must be square".into()));
        }
        if c.cols != a.rows {
            return Err(LmiError::DimensionMismatch(format!(
                "C must have {} columns, found {}",
                a.rows, c.cols
            )));
        }
        if !(delta > 0.0) {
            return Err(LmiError::DimensionMismatch("delta must be positive".into()));
        }
        Ok(Self { kind, a, c, delta })
    }

    /// Default margin scaled to the plant: `1e-4 * max(1, ||A||_F)`.
    pub fn default_delta(a: &Mat) -> f64 {
        1e-4 * a.frobenius_norm().max(1.0)
    }

    pub fn n(&self) -> usize {
        self.a.rows
    }

    pub fn p_dim(&self) -> usize {
        self.c.rows
    }

    fn num_vars(&self) -> usize {
        let n = self.n();
        let tri = n * (n + 1) / 2;
        match self.kind {
            LmiKind::Lipschitz { .. } => tri + n * self.p_dim() + 1,
            LmiKind::OslQib { .. } => tri + 3,
        }
    }
}

/// Decision variables of one kind of problem.
#[derive(Debug, Clone)]
pub enum LmiVars {
    Lipschitz { p: SymMatrix, y: Mat, eps: f64 },
    OslQib {
        p: SymMatrix,
        sigma: f64,
        eps1: f64,
        eps2: f64,
    },
}

impl LmiVars {
    pub fn p(&self) -> &SymMatrix {
        match self {
            LmiVars::Lipschitz { p, .. } | LmiVars::OslQib { p, .. } => p,
        }
    }
}

/// A feasible point with its extracted gain and eigen-certificates.
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub vars: LmiVars,
    pub gain: Mat,
    pub lambda_p_min: f64,
    pub lambda_lmi_max: f64,
    /// Cone residual per iteration (distance of the affine iterate to the
    /// shifted negative-definite cone).
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Over-relaxation factor for the cone step, in (0, 2).
    pub relaxation: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 400,
            relaxation: 1.2,
        }
    }
}

/// Independently recomputed certificates.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub ok: bool,
    pub lambda_p_min: f64,
    pub lambda_lmi_max: f64,
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Assemble the 2n x 2n symmetric block for the given trial variables.
pub fn assemble(problem: &LmiProblem, vars: &LmiVars) -> Result<SymMatrix, LmiError> {
    let n = problem.n();
    let pm = vars.p().to_mat();
    if pm.rows != n {
        return Err(LmiError::DimensionMismatch(format!(
            "P must be {n}x{n}, found {}x{}",
            pm.rows, pm.cols
        )));
    }

    let at_p = problem.a.transpose().matmul(&pm);
    let p_a = pm.matmul(&problem.a);
    let mut m11 = at_p.add(&p_a);
    let m12;
    let m22_scale;

    match (&problem.kind, vars) {
        (LmiKind::Lipschitz { gamma_l }, LmiVars::Lipschitz { y, eps, .. }) => {
            if y.rows != n || y.cols != problem.p_dim() {
                return Err(LmiError::DimensionMismatch(format!(
                    "Y must be {}x{}, found {}x{}",
                    n,
                    problem.p_dim(),
                    y.rows,
                    y.cols
                )));
            }
            let yc = y.matmul(&problem.c);
            m11 = m11.sub(&yc.transpose()).sub(&yc);
            for i in 0..n {
                m11.set(i, i, m11.get(i, i) + eps * gamma_l * gamma_l);
            }
            m12 = pm.clone();
            m22_scale = *eps;
        }
        (
            LmiKind::OslQib {
                gamma_s,
                gamma_q1,
                gamma_q2,
            },
            LmiVars::OslQib {
                sigma,
                eps1,
                eps2,
                ..
            },
        ) => {
            let ctc = problem.c.transpose().matmul(&problem.c);
            m11 = m11.sub(&ctc.scale(*sigma));
            let shift = eps1 * gamma_s + eps2 * gamma_q1;
            for i in 0..n {
                m11.set(i, i, m11.get(i, i) + shift);
            }
            let mut m = pm.clone();
            let off = (gamma_q2 * eps2 - eps1) / 2.0;
            for i in 0..n {
                m.set(i, i, m.get(i, i) + off);
            }
            m12 = m;
            m22_scale = *eps2;
        }
        _ => {
            return Err(LmiError::DimensionMismatch(
                "variable kind does not match problem kind".into(),
            ))
        }
    }

    let mut block = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            block.set(i, j, m11.get(i, j));
            block.set(i, n + j, m12.get(i, j));
            block.set(n + i, j, m12.get(j, i));
        }
        block.set(n + i, n + i, -m22_scale);
    }
    Ok(SymMatrix::from_mat(&block))
}

// ---------------------------------------------------------------------------
// Decision-vector layout
// ---------------------------------------------------------------------------

fn init_vars(problem: &LmiProblem) -> LmiVars {
    let n = problem.n();
    let scalar0 = 1.0f64.max(2.0 * problem.delta);
    let p0 = SymMatrix::from_mat(&Mat::identity(n).scale(scalar0));
    match problem.kind {
        LmiKind::Lipschitz { .. } => LmiVars::Lipschitz {
            p: p0,
            y: Mat::zeros(n, problem.p_dim()),
            eps: scalar0,
        },
        LmiKind::OslQib { .. } => LmiVars::OslQib {
            p: p0,
            sigma: scalar0,
            eps1: scalar0,
            eps2: scalar0,
        },
    }
}

fn vars_from_z(problem: &LmiProblem, z: &[f64]) -> LmiVars {
    let n = problem.n();
    let mut p = SymMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            p.set_sym(i, j, z[k]);
            k += 1;
        }
    }
    match problem.kind {
        LmiKind::Lipschitz { .. } => {
            let pd = problem.p_dim();
            let mut y = Mat::zeros(n, pd);
            for i in 0..n {
                for j in 0..pd {
                    y.set(i, j, z[k]);
                    k += 1;
                }
            }
            let eps = z[k];
            LmiVars::Lipschitz { p, y, eps }
        }
        LmiKind::OslQib { .. } => LmiVars::OslQib {
            p,
            sigma: z[k],
            eps1: z[k + 1],
            eps2: z[k + 2],
        },
    }
}

/// Frobenius-faithful vectorization of a symmetric matrix (off-diagonal
/// entries weighted by sqrt(2)).
fn vec_sym(m: &SymMatrix) -> Vec<f64> {
    let n = m.n();
    let s2 = std::f64::consts::SQRT_2;
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            if i == j {
                v.push(m.get(i, j));
            } else {
                v.push(s2 * m.get(i, j));
            }
        }
    }
    v
}

/// Clamp the eigenvalues of a symmetric matrix from below.
fn psd_clamp(m: &SymMatrix, floor: f64) -> Result<SymMatrix, LmiError> {
    let eig = eig_sym(m)?;
    rebuild(&eig.vectors, &eig.values.iter().map(|&l| l.max(floor)).collect::<Vec<_>>())
}

fn rebuild(v: &Mat, lambda: &[f64]) -> Result<SymMatrix, LmiError> {
    let n = v.rows;
    let mut vl = v.clone();
    for i in 0..n {
        for j in 0..n {
            vl.set(i, j, v.get(i, j) * lambda[j]);
        }
    }
    Ok(SymMatrix::from_mat(&vl.matmul(&v.transpose())))
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// Search for a strictly feasible point and extract the observer gain.
pub fn solve(problem: &LmiProblem, cfg: &SolveConfig) -> Result<LmiSolution, LmiError> {
    let q = problem.num_vars();
    let delta = problem.delta;
    // The iterates chase a slightly deeper cone so the exact margin check
    // has room to succeed; marginal problems fall out as "no certificate".
    let cone_level = -2.0 * delta;

    // Constant affine basis: M(z) = K0 + sum z_i K_i.
    let zeros = vec![0.0; q];
    let k0 = assemble(problem, &vars_from_z(problem, &zeros))?;
    let k0v = vec_sym(&k0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    for i in 0..q {
        let mut e = zeros.clone();
        e[i] = 1.0;
        let ki = assemble(problem, &vars_from_z(problem, &e))?;
        let kiv = vec_sym(&ki);
        basis.push(kiv.iter().zip(&k0v).map(|(a, b)| a - b).collect());
    }

    // Normal matrix E'E, factored once.
    let mut ete = SymMatrix::zeros(q);
    for i in 0..q {
        for j in i..q {
            let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
            ete.set_sym(i, j, dot);
        }
    }
    let ete_eig = eig_sym(&ete)?;
    // The parameterization can be legitimately rank deficient (with full
    // output, only Y + Y' enters the block), so fit with the
    // pseudo-inverse: null directions get coefficient zero.
    let lambda_cut = 1e-12 * ete_eig.values.last().unwrap().max(1.0);
    let lsq_fit = |target: &[f64]| -> Vec<f64> {
        // z = (E'E)^+ E'(target - k0)
        let rhs: Vec<f64> = (0..q)
            .map(|i| {
                basis[i]
                    .iter()
                    .zip(target.iter().zip(&k0v))
                    .map(|(b, (t, k))| b * (t - k))
                    .sum()
            })
            .collect();
        let vt_r = ete_eig.vectors.transpose().matvec(&rhs);
        let scaled: Vec<f64> = vt_r
            .iter()
            .zip(&ete_eig.values)
            .map(|(v, l)| if *l > lambda_cut { v / l } else { 0.0 })
            .collect();
        ete_eig.vectors.matvec(&scaled)
    };

    let clamp_vars = |vars: &mut LmiVars| -> Result<(), LmiError> {
        let floor = delta * (1.0 + 1e-9);
        match vars {
            LmiVars::Lipschitz { p, eps, .. } => {
                *p = psd_clamp(p, floor)?;
                *eps = eps.max(delta);
            }
            LmiVars::OslQib {
                p,
                sigma,
                eps1,
                eps2,
            } => {
                *p = psd_clamp(p, floor)?;
                *sigma = sigma.max(delta);
                *eps1 = eps1.max(delta);
                *eps2 = eps2.max(delta);
            }
        }
        Ok(())
    };

    let mut vars = init_vars(problem);
    let mut residuals: Vec<f64> = Vec::new();

    for iter in 0..cfg.max_iters {
        let x = assemble(problem, &vars)?;
        if !x.is_finite() {
            return Err(LmiError::NumericalBreakdown("non-finite iterate".into()));
        }
        let eig_x = eig_sym(&x)?;
        let lambda_lmi_max = *eig_x.values.last().unwrap();
        let lambda_p_min = eig_sym(vars.p())?.values[0];

        if lambda_lmi_max <= -delta && lambda_p_min >= delta {
            let gain = extract_gain(problem, &vars)?;
            return Ok(LmiSolution {
                vars,
                gain,
                lambda_p_min,
                lambda_lmi_max,
                residuals,
                iterations: iter,
            });
        }

        // Projection onto the shifted cone by eigenvalue clamping.
        let cone = rebuild(
            &eig_x.vectors,
            &eig_x
                .values
                .iter()
                .map(|&l| l.min(cone_level))
                .collect::<Vec<_>>(),
        )?;
        let r_cone = cone.to_mat().sub(&x.to_mat()).frobenius_norm();
        residuals.push(r_cone);

        // Over-relaxed target, then least-squares back onto the affine
        // image with admissibility clamps.
        let omega = cfg.relaxation;
        let target: Vec<f64> = vec_sym(&x)
            .iter()
            .zip(vec_sym(&cone).iter())
            .map(|(xv, cv)| xv + omega * (cv - xv))
            .collect();
        let z = lsq_fit(&target);
        vars = vars_from_z(problem, &z);
        clamp_vars(&mut vars)?;
    }

    Err(LmiError::Infeasible {
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        iterations: cfg.max_iters,
        residuals,
    })
}

fn extract_gain(problem: &LmiProblem, vars: &LmiVars) -> Result<Mat, LmiError> {
    match vars {
        LmiVars::Lipschitz { p, y, .. } => Ok(solve_spd(p, y)?),
        LmiVars::OslQib { p, sigma, .. } => {
            let ct = problem.c.transpose();
            Ok(solve_spd(p, &ct)?.scale(0.5 * sigma))
        }
    }
}

/// Recompute both eigen-certificates from scratch.
pub fn certify(problem: &LmiProblem, solution: &LmiSolution) -> Result<Certificate, LmiError> {
    let block = assemble(problem, &solution.vars)?;
    let lambda_lmi_max = *eig_sym(&block)?.values.last().unwrap();
    let lambda_p_min = eig_sym(solution.vars.p())?.values[0];
    Ok(Certificate {
        ok: lambda_lmi_max <= -problem.delta && lambda_p_min >= problem.delta,
        lambda_p_min,
        lambda_lmi_max,
    })
}
