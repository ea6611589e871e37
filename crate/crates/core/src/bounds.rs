//! Nonlinearity constants: one-sided Lipschitz, quadratic inner bounds,
//! and Lipschitz constants of `G f(x, u)` over the domain box, computed
//! by composing symbolic row objectives with certified branch-and-bound.
//!
//! All returned constants take the conservative end of their enclosure
//! (upper for maxima, lower for minima), so downstream inequalities stay
//! sound even when a run stops on budget instead of gap.

use thiserror::Error;

use crate::expr::{Expr, ExprError, Func, SystemModel};
use crate::globopt::{maximize, minimize, BnbConfig, Enclosure, ExprObjective, Objective};
use crate::interval::{DomainError, Interval, IntervalBox};
use crate::matfun::{eig_sym, MatError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("epsilon parameters must be nonnegative (eps1 = {eps1}, eps2 = {eps2})")]
    NegativeEpsilon { eps1: f64, eps2: f64 },
    #[error("necessity violated: 2*{gamma_q1} + {gamma_q2}^2 < 0, no quadratically inner-bounded function admits these constants")]
    NecessityViolated { gamma_q1: f64, gamma_q2: f64 },
    #[error("audit point lies outside the domain box")]
    PointOutsideDomain,
}

/// A certified two-sided bound on one constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub lb: f64,
    pub ub: f64,
}

impl From<&Enclosure> for BoundPair {
    fn from(e: &Enclosure) -> Self {
        BoundPair { lb: e.lb, ub: e.ub }
    }
}

/// Which route produced the one-sided constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Frobenius,
    Gershgorin,
    Thm3,
    SpectralSample,
    All,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Frobenius => "frobenius",
            Method::Gershgorin => "gershgorin",
            Method::Thm3 => "thm3",
            Method::SpectralSample => "spectral-sample",
            Method::All => "all",
        }
    }
}

// ---------------------------------------------------------------------------
// Symbolic row objectives
// ---------------------------------------------------------------------------

/// `psi(i,i) + sum_{j != i} |psi(i,j)|` as an expression; abs enters above
/// the differentiation level, so the entries themselves stay smooth.
fn gershgorin_row_expr(psi: &[Vec<Expr>], i: usize, sign: f64) -> Expr {
    let n = psi.len();
    let mut acc = psi[i][i].clone();
    for j in 0..n {
        if j != i {
            acc = Expr::add(
                acc,
                Expr::mul(
                    Expr::Const(sign),
                    Expr::call(Func::Abs, psi[i][j].clone()),
                ),
            );
        }
    }
    acc
}

/// Sum of squares of all Jacobian entries of `G f`.
fn frobenius_sq_expr(xi: &[Vec<Expr>]) -> Expr {
    let mut acc = Expr::Const(0.0);
    for row in xi {
        for e in row {
            acc = Expr::add(acc, Expr::pow(e.clone(), 2));
        }
    }
    acc
}

/// Row objective `psi(i,i) + zeta * max_{j != i} |psi(i,j)|`. The inner
/// finite max is not expressible as a single tree, so this composite
/// evaluates it with interval max directly.
struct ZetaRowObjective<'a> {
    diag: &'a Expr,
    offdiag: Vec<&'a Expr>,
    zeta: f64,
    n_states: usize,
}

impl Objective for ZetaRowObjective<'_> {
    fn enclosure(&self, bx: &IntervalBox) -> Result<Interval, DomainError> {
        let mut acc = self.diag.eval_interval(bx, self.n_states)?;
        if !self.offdiag.is_empty() {
            let mut m = self.offdiag[0].eval_interval(bx, self.n_states)?.abs_i();
            for e in &self.offdiag[1..] {
                m = m.max_i(e.eval_interval(bx, self.n_states)?.abs_i());
            }
            acc = acc + Interval::point(self.zeta) * m;
        }
        Ok(acc)
    }

    fn value(&self, z: &[f64]) -> Result<f64, DomainError> {
        let mut acc = self.diag.eval_point(z, self.n_states)?;
        if !self.offdiag.is_empty() {
            let mut m = 0.0f64;
            for e in &self.offdiag {
                m = m.max(e.eval_point(z, self.n_states)?.abs());
            }
            acc += self.zeta * m;
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// One-sided Lipschitz constants
// ---------------------------------------------------------------------------

/// Square-root-of-summed-squares route: `gamma_s` is the square root of
/// the maximized Frobenius norm squared of the Jacobian of `G f`.
pub fn osl_frobenius(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Enclosure), BoundsError> {
    let xi = model.jacobian_exprs()?;
    let obj_expr = frobenius_sq_expr(&xi);
    let obj = ExprObjective {
        expr: &obj_expr,
        n_states: model.n,
    };
    let enc = maximize(&obj, &model.omega, cfg)?;
    Ok((enc.ub.max(0.0).sqrt(), enc))
}

/// Row-circle route: per-row maximization of
/// `psi(i,i) + sum_{j != i} |psi(i,j)|`, outer max over rows.
pub fn osl_gershgorin(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Vec<Enclosure>), BoundsError> {
    let psi = model.psi_exprs()?;
    let mut rows = Vec::with_capacity(model.n);
    for i in 0..model.n {
        let row_expr = gershgorin_row_expr(&psi, i, 1.0);
        let obj = ExprObjective {
            expr: &row_expr,
            n_states: model.n,
        };
        rows.push(maximize(&obj, &model.omega, cfg)?);
    }
    let gamma_s = rows.iter().map(|e| e.ub).fold(f64::NEG_INFINITY, f64::max);
    Ok((gamma_s, rows))
}

/// Largest-off-diagonal route with the dimension constant `zeta = n - 1`.
pub fn osl_thm3(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Vec<Enclosure>), BoundsError> {
    let psi = model.psi_exprs()?;
    let n = model.n;
    let zeta = if n >= 2 {
        crate::matfun::zeta_n(n)
    } else {
        0.0
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let offdiag: Vec<&Expr> = (0..n).filter(|&j| j != i).map(|j| &psi[i][j]).collect();
        let obj = ZetaRowObjective {
            diag: &psi[i][i],
            offdiag,
            zeta,
            n_states: n,
        };
        rows.push(maximize(&obj, &model.omega, cfg)?);
    }
    let gamma_s = rows.iter().map(|e| e.ub).fold(f64::NEG_INFINITY, f64::max);
    Ok((gamma_s, rows))
}

/// Sampled (non-certified) spectral extremes of the symmetrized Jacobian:
/// `gamma_bar` from the largest eigenvalue, `gamma_lower` from the
/// smallest, over a stratified low-discrepancy point set with a fixed
/// seed.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    pub gamma_bar: f64,
    pub gamma_lower: f64,
    pub samples: u64,
}

pub fn osl_spectral_bounds(
    model: &SystemModel,
    sample_budget: u64,
    seed: u64,
) -> Result<SpectralSample, BoundsError> {
    use rand::{Rng, SeedableRng};
    assert!(sample_budget >= 1);
    let xi = model.jacobian_exprs()?;
    let d = model.n + model.m;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut gamma_bar = f64::NEG_INFINITY;
    let mut gamma_lower = f64::INFINITY;
    let mut count: u64 = 0;
    let mut z = vec![0.0f64; d];

    let eval_at = |z: &[f64],
                       gamma_bar: &mut f64,
                       gamma_lower: &mut f64|
     -> Result<(), BoundsError> {
        let (x, u) = z.split_at(model.n);
        let j = model.jacobian_at(&xi, x, u)?;
        let eig = eig_sym(&SymMatrix::from_mat(&j))?;
        *gamma_lower = gamma_lower.min(eig.values[0]);
        *gamma_bar = gamma_bar.max(*eig.values.last().expect("nonempty spectrum"));
        Ok(())
    };

    // Stratified jittered grid, then plain uniform draws for the rest of
    // the budget.
    let k = (sample_budget as f64).powf(1.0 / d as f64).floor().max(1.0) as u64;
    let mut cell = vec![0u64; d];
    'grid: loop {
        for (dim, c) in cell.iter().enumerate() {
            let iv = model.omega.dims[dim];
            let w = iv.width() / k as f64;
            z[dim] = iv.lo + (*c as f64 + rng.gen_range(0.0..1.0)) * w;
        }
        eval_at(&z, &mut gamma_bar, &mut gamma_lower)?;
        count += 1;
        // Odometer increment over the k^d grid.
        for slot in cell.iter_mut() {
            *slot += 1;
            if *slot < k {
                continue 'grid;
            }
            *slot = 0;
        }
        break;
    }
    while count < sample_budget {
        for (dim, slot) in z.iter_mut().enumerate() {
            let iv = model.omega.dims[dim];
            *slot = rng.gen_range(iv.lo..=iv.hi);
        }
        eval_at(&z, &mut gamma_bar, &mut gamma_lower)?;
        count += 1;
    }

    Ok(SpectralSample {
        gamma_bar,
        gamma_lower,
        samples: count,
    })
}

/// Certified under-estimate of the smallest symmetrized-Jacobian
/// eigenvalue over the domain: per-row minimization of
/// `psi(i,i) - sum_{j != i} |psi(i,j)|`, outer min over rows.
pub fn gamma_lower_gershgorin(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Vec<Enclosure>), BoundsError> {
    let psi = model.psi_exprs()?;
    let mut rows = Vec::with_capacity(model.n);
    for i in 0..model.n {
        let row_expr = gershgorin_row_expr(&psi, i, -1.0);
        let obj = ExprObjective {
            expr: &row_expr,
            n_states: model.n,
        };
        rows.push(minimize(&obj, &model.omega, cfg)?);
    }
    let gamma_lower = rows.iter().map(|e| e.lb).fold(f64::INFINITY, f64::min);
    Ok((gamma_lower, rows))
}

/// Maximum over the domain of the summed squared state-gradient norms of
/// the rows of `G f` (the curvature budget entering the quadratic inner
/// bound).
pub fn gradient_energy_max(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Enclosure), BoundsError> {
    // xi_i = sum_j G(i,j) f_j, objective sum_i ||grad_x xi_i||^2.
    let mut obj_expr = Expr::Const(0.0);
    for i in 0..model.n {
        let mut xi_i = Expr::Const(0.0);
        for (j, fj) in model.f.iter().enumerate() {
            xi_i = Expr::add(
                xi_i,
                Expr::mul(Expr::Const(model.gmat.get(i, j)), fj.clone()),
            );
        }
        for d in 0..model.n {
            obj_expr = Expr::add(obj_expr, Expr::pow(xi_i.diff(d)?, 2));
        }
    }
    let obj = ExprObjective {
        expr: &obj_expr,
        n_states: model.n,
    };
    let enc = maximize(&obj, &model.omega, cfg)?;
    Ok((enc.ub, enc))
}

// ---------------------------------------------------------------------------
// Quadratic inner bounds
// ---------------------------------------------------------------------------

/// The quadratic-inner-bound pair for chosen nonnegative epsilons,
/// together with the certified ingredients that produced it:
/// `gamma_q1 = eps1 * gamma_bar - eps2 * gamma_lower + gamma_m` and
/// `gamma_q2 = eps2 - eps1`.
#[derive(Debug, Clone)]
pub struct QibConstants {
    pub gamma_q1: f64,
    pub gamma_q2: f64,
    pub gamma_bar: f64,
    pub gamma_lower: f64,
    pub gamma_m: f64,
    pub gamma_bar_enclosure: BoundPair,
    pub gamma_lower_enclosure: BoundPair,
    pub gamma_m_enclosure: BoundPair,
    pub necessity_ok: bool,
}

pub fn qib_constants(
    model: &SystemModel,
    eps1: f64,
    eps2: f64,
    cfg: &BnbConfig,
) -> Result<QibConstants, BoundsError> {
    if eps1 < 0.0 || eps2 < 0.0 {
        return Err(BoundsError::NegativeEpsilon { eps1, eps2 });
    }
    // gamma_bar enters with a positive weight, so any certified upper
    // bound on it keeps the inequality valid; the row-circle constant is
    // exactly that.
    let (gamma_bar, bar_rows) = osl_gershgorin(model, cfg)?;
    let (gamma_lower, low_rows) = gamma_lower_gershgorin(model, cfg)?;
    let (gamma_m, m_enc) = gradient_energy_max(model, cfg)?;

    let gamma_q1 = eps1 * gamma_bar - eps2 * gamma_lower + gamma_m;
    let gamma_q2 = eps2 - eps1;
    let necessity_ok = 2.0 * gamma_q1 + gamma_q2 * gamma_q2 >= 0.0;

    let combine_max = |rows: &[Enclosure]| BoundPair {
        lb: rows.iter().map(|e| e.lb).fold(f64::NEG_INFINITY, f64::max),
        ub: rows.iter().map(|e| e.ub).fold(f64::NEG_INFINITY, f64::max),
    };
    let combine_min = |rows: &[Enclosure]| BoundPair {
        lb: rows.iter().map(|e| e.lb).fold(f64::INFINITY, f64::min),
        ub: rows.iter().map(|e| e.ub).fold(f64::INFINITY, f64::min),
    };

    Ok(QibConstants {
        gamma_q1,
        gamma_q2,
        gamma_bar,
        gamma_lower,
        gamma_m,
        gamma_bar_enclosure: combine_max(&bar_rows),
        gamma_lower_enclosure: combine_min(&low_rows),
        gamma_m_enclosure: BoundPair::from(&m_enc),
        necessity_ok,
    })
}

/// Lipschitz constant of `G f` over the domain as the square root of the
/// maximized squared Jacobian Frobenius norm.
pub fn lipschitz_constant(
    model: &SystemModel,
    cfg: &BnbConfig,
) -> Result<(f64, Enclosure), BoundsError> {
    let (gm, enc) = gradient_energy_max(model, cfg)?;
    Ok((gm.max(0.0).sqrt(), enc))
}

/// Lipschitz constant implied by a quadratic-inner-bound pair:
/// `sqrt(2 gamma_q1 + gamma_q2^2)`. Errors when the necessity inequality
/// fails, which certifies that no genuine pair can look like this.
pub fn qib_to_lipschitz(gamma_q1: f64, gamma_q2: f64) -> Result<f64, BoundsError> {
    let s = 2.0 * gamma_q1 + gamma_q2 * gamma_q2;
    if s < 0.0 {
        return Err(BoundsError::NecessityViolated { gamma_q1, gamma_q2 });
    }
    Ok(s.sqrt())
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

/// One evaluated inequality instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn check_pair_in_domain(
    model: &SystemModel,
    x: &[f64],
    xhat: &[f64],
    u: &[f64],
) -> Result<(), BoundsError> {
    let inside = |x: &[f64]| {
        x.len() == model.n
            && x.iter()
                .zip(&model.omega.dims[..model.n])
                .all(|(v, d)| d.contains(*v))
    };
    let u_inside = u.len() == model.m
        && u.iter()
            .zip(&model.omega.dims[model.n..])
            .all(|(v, d)| d.contains(*v));
    if inside(x) && inside(xhat) && u_inside {
        Ok(())
    } else {
        Err(BoundsError::PointOutsideDomain)
    }
}

fn delta_terms(
    model: &SystemModel,
    x: &[f64],
    xhat: &[f64],
    u: &[f64],
) -> Result<(f64, f64, f64), BoundsError> {
    let fx = model.gf_value(x, u)?;
    let fxh = model.gf_value(xhat, u)?;
    let mut df_sq = 0.0;
    let mut inner = 0.0;
    let mut dx_sq = 0.0;
    for i in 0..model.n {
        let df = fx[i] - fxh[i];
        let dx = x[i] - xhat[i];
        df_sq += df * df;
        inner += df * dx;
        dx_sq += dx * dx;
    }
    Ok((df_sq, inner, dx_sq))
}

/// Evaluate the one-sided inequality
/// `<G(f(x,u) - f(xh,u)), x - xh> <= gamma_s ||x - xh||^2` at one pair.
pub fn osl_audit(
    model: &SystemModel,
    gamma_s: f64,
    x: &[f64],
    xhat: &[f64],
    u: &[f64],
) -> Result<Audit, BoundsError> {
    check_pair_in_domain(model, x, xhat, u)?;
    let (_, inner, dx_sq) = delta_terms(model, x, xhat, u)?;
    let rhs = gamma_s * dx_sq;
    Ok(Audit {
        lhs: inner,
        rhs,
        holds: inner <= rhs,
    })
}

/// Evaluate the quadratic inner bound
/// `||G df||^2 <= gamma_q1 ||dx||^2 + gamma_q2 <G df, dx>` at one pair.
pub fn qib_audit(
    model: &SystemModel,
    gamma_q1: f64,
    gamma_q2: f64,
    x: &[f64],
    xhat: &[f64],
    u: &[f64],
) -> Result<Audit, BoundsError> {
    check_pair_in_domain(model, x, xhat, u)?;
    let (df_sq, inner, dx_sq) = delta_terms(model, x, xhat, u)?;
    let rhs = gamma_q1 * dx_sq + gamma_q2 * inner;
    Ok(Audit {
        lhs: df_sq,
        rhs,
        holds: df_sq <= rhs,
    })
}

/// Sufficient conditions for the cubic-damping nonlinearity to satisfy a
/// quadratic inner bound on a ball of radius `r`:
/// `2 r^2 <= -gamma_q2 / 2`, `r^4 <= gamma_q1 - gamma_q2 r^2`,
/// `gamma_q1 >= 0`, `gamma_q2 < 0`.
pub fn qib_sufficient_ball(r: f64, gamma_q1: f64, gamma_q2: f64) -> bool {
    r > 0.0
        && 2.0 * r * r <= -gamma_q2 / 2.0
        && r.powi(4) <= gamma_q1 - gamma_q2 * r * r
        && gamma_q1 >= 0.0
        && gamma_q2 < 0.0
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

/// All constants of one parameterization run.
#[derive(Debug, Clone)]
pub struct GammaReport {
    pub gamma_l: f64,
    pub gamma_s: f64,
    pub gamma_bar: f64,
    pub gamma_lower: f64,
    pub gamma_m: f64,
    pub gamma_q1: f64,
    pub gamma_q2: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub method: Method,
    pub gamma_s_enclosure: BoundPair,
    pub gamma_lower_enclosure: BoundPair,
    pub gamma_m_enclosure: BoundPair,
    pub necessity_ok: bool,
    /// Per-method one-sided constants, populated when `method` is `All`.
    pub gamma_s_by_method: Vec<(Method, f64)>,
}

/// Run the full parameterization: the chosen one-sided route plus the
/// quadratic-inner-bound ingredients.
pub fn compute_report(
    model: &SystemModel,
    method: Method,
    eps1: f64,
    eps2: f64,
    cfg: &BnbConfig,
) -> Result<GammaReport, BoundsError> {
    let combine_max = |rows: &[Enclosure]| BoundPair {
        lb: rows.iter().map(|e| e.lb).fold(f64::NEG_INFINITY, f64::max),
        ub: rows.iter().map(|e| e.ub).fold(f64::NEG_INFINITY, f64::max),
    };

    let mut by_method = Vec::new();
    let (gamma_s, gamma_s_enclosure) = match method {
        Method::Frobenius => {
            let (gs, enc) = osl_frobenius(model, cfg)?;
            (
                gs,
                BoundPair {
                    lb: enc.lb.max(0.0).sqrt(),
                    ub: enc.ub.max(0.0).sqrt(),
                },
            )
        }
        Method::Gershgorin => {
            let (gs, rows) = osl_gershgorin(model, cfg)?;
            (gs, combine_max(&rows))
        }
        Method::Thm3 => {
            let (gs, rows) = osl_thm3(model, cfg)?;
            (gs, combine_max(&rows))
        }
        Method::All => {
            let (gf, enc_f) = osl_frobenius(model, cfg)?;
            let (gg, rows_g) = osl_gershgorin(model, cfg)?;
            let (gt, rows_t) = osl_thm3(model, cfg)?;
            by_method.push((Method::Frobenius, gf));
            by_method.push((Method::Gershgorin, gg));
            by_method.push((Method::Thm3, gt));
            // Every route is a valid upper bound; take the tightest.
            let min = gf.min(gg).min(gt);
            let encl = if min == gf {
                BoundPair {
                    lb: enc_f.lb.max(0.0).sqrt(),
                    ub: enc_f.ub.max(0.0).sqrt(),
                }
            } else if min == gg {
                combine_max(&rows_g)
            } else {
                combine_max(&rows_t)
            };
            (min, encl)
        }
        Method::SpectralSample => {
            let s = osl_spectral_bounds(model, 100_000, 0)?;
            (
                s.gamma_bar,
                BoundPair {
                    lb: s.gamma_bar,
                    ub: s.gamma_bar,
                },
            )
        }
    };

    let qib = qib_constants(model, eps1, eps2, cfg)?;
    let gamma_l = qib.gamma_m.max(0.0).sqrt();

    Ok(GammaReport {
        gamma_l,
        gamma_s,
        gamma_bar: qib.gamma_bar,
        gamma_lower: qib.gamma_lower,
        gamma_m: qib.gamma_m,
        gamma_q1: qib.gamma_q1,
        gamma_q2: qib.gamma_q2,
        eps1,
        eps2,
        method,
        gamma_s_enclosure,
        gamma_lower_enclosure: qib.gamma_lower_enclosure,
        gamma_m_enclosure: qib.gamma_m_enclosure,
        necessity_ok: qib.necessity_ok,
        gamma_s_by_method: by_method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::matfun::Mat;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn moving_object() -> SystemModel {
        SystemModel::moving_object()
    }

    fn zero_system() -> SystemModel {
        SystemModel::new(
            2,
            0,
            1,
            2,
            Mat::identity(2),
            Mat::zeros(2, 0),
            Mat::from_rows(&[&[1.0, 0.0]]),
            Mat::identity(2),
            vec![Expr::Const(0.0), Expr::Const(0.0)],
            IntervalBox::new(vec![Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]),
        )
        .unwrap()
    }

    fn linear_system(j: [[f64; 2]; 2]) -> SystemModel {
        let f = vec![
            parse(
                &format!("{}*x1 + {}*x2", j[0][0], j[0][1]),
                2,
                0,
            )
            .unwrap(),
            parse(
                &format!("{}*x1 + {}*x2", j[1][0], j[1][1]),
                2,
                0,
            )
            .unwrap(),
        ];
        SystemModel::new(
            2,
            0,
            1,
            2,
            Mat::identity(2),
            Mat::zeros(2, 0),
            Mat::from_rows(&[&[1.0, 0.0]]),
            Mat::identity(2),
            f,
            IntervalBox::new(vec![Interval::new(-2.0, 2.0), Interval::new(-2.0, 2.0)]),
        )
        .unwrap()
    }

    fn cfg() -> BnbConfig {
        BnbConfig::with_tol(1e-7)
    }

    #[test]
    fn frobenius_route_moving_object() {
        let (gs, enc) = osl_frobenius(&moving_object(), &cfg()).unwrap();
        assert!(enc.converged);
        assert!((gs - 25000f64.sqrt()).abs() < 1e-4, "gs = {gs}");
    }

    #[test]
    fn frobenius_trivial_systems() {
        let (gs, _) = osl_frobenius(&zero_system(), &cfg()).unwrap();
        assert_eq!(gs, 0.0);
        let (gs, _) = osl_frobenius(&linear_system([[-1.0, 0.0], [0.0, -1.0]]), &cfg()).unwrap();
        assert!((gs - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn gershgorin_route_moving_object_is_zero() {
        let (gs, rows) = osl_gershgorin(&moving_object(), &cfg()).unwrap();
        assert!(gs >= 0.0 && gs <= 1e-6, "gs = {gs}");
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.converged));
    }

    #[test]
    fn gershgorin_constant_jacobian() {
        let (gs, _) = osl_gershgorin(&linear_system([[-2.0, 1.0], [1.0, -2.0]]), &cfg()).unwrap();
        assert!((gs + 1.0).abs() < 1e-6, "gs = {gs}");
        let (gs0, _) = osl_gershgorin(&zero_system(), &cfg()).unwrap();
        assert!(gs0.abs() < 1e-9);
    }

    #[test]
    fn thm3_route_matches_gershgorin_at_n2() {
        let (gt, _) = osl_thm3(&moving_object(), &cfg()).unwrap();
        assert!(gt >= 0.0 && gt <= 1e-6, "gt = {gt}");
        let (gt2, _) = osl_thm3(&linear_system([[0.0, 1.0], [1.0, 0.0]]), &cfg()).unwrap();
        assert!((gt2 - 1.0).abs() < 1e-6);
        // Diagonal Jacobian: the bound is the max diagonal entry.
        let (gt3, _) = osl_thm3(&linear_system([[3.0, 0.0], [0.0, -1.0]]), &cfg()).unwrap();
        assert!((gt3 - 3.0).abs() < 1e-6);
    }

    #[test]
    fn spectral_sampling_moving_object() {
        let s = osl_spectral_bounds(&moving_object(), 100_000, 0).unwrap();
        assert!(s.gamma_bar.abs() < 0.01, "gamma_bar = {}", s.gamma_bar);
        assert!((s.gamma_lower + 150.0).abs() < 2.0, "gamma_lower = {}", s.gamma_lower);
        assert_eq!(s.samples, 100_000);
    }

    #[test]
    fn spectral_sampling_trivial() {
        let s = osl_spectral_bounds(&zero_system(), 100, 0).unwrap();
        assert_eq!(s.gamma_bar, 0.0);
        assert_eq!(s.gamma_lower, 0.0);
        let sys = linear_system([[-2.0, 1.0], [1.0, -2.0]]);
        let s = osl_spectral_bounds(&sys, 100, 0).unwrap();
        assert!((s.gamma_bar + 1.0).abs() < 1e-9);
        assert!((s.gamma_lower + 3.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_lower_moving_object() {
        let (gl, rows) = gamma_lower_gershgorin(&moving_object(), &BnbConfig::with_tol(1e-6)).unwrap();
        assert!(gl <= -150.0 && gl >= -150.0 - 1e-6, "gl = {gl}");
        assert!(rows.iter().all(|r| r.converged));
        let (gl0, _) = gamma_lower_gershgorin(&zero_system(), &cfg()).unwrap();
        assert!(gl0.abs() < 1e-9);
        let (glc, _) =
            gamma_lower_gershgorin(&linear_system([[-2.0, 1.0], [1.0, -2.0]]), &cfg()).unwrap();
        assert!((glc + 3.0).abs() < 1e-6);
    }

    #[test]
    fn qib_constants_moving_object() {
        let q = qib_constants(&moving_object(), 1e5, 1e-1, &BnbConfig::with_tol(1e-8)).unwrap();
        assert!((q.gamma_q1 - 25015.0).abs() < 1e-2, "gamma_q1 = {}", q.gamma_q1);
        assert_eq!(q.gamma_q2, 1e-1 - 1e5);
        assert!(q.necessity_ok);
        assert!((q.gamma_m - 25000.0).abs() < 1e-2);
    }

    #[test]
    fn qib_constants_rejects_negative_eps() {
        let err = qib_constants(&zero_system(), -1.0, 0.0, &cfg());
        assert!(matches!(err, Err(BoundsError::NegativeEpsilon { .. })));
    }

    #[test]
    fn qib_constants_zero_system() {
        let q = qib_constants(&zero_system(), 0.0, 0.0, &cfg()).unwrap();
        assert!(q.gamma_q1.abs() < 1e-9);
        assert_eq!(q.gamma_q2, 0.0);
    }

    #[test]
    fn lipschitz_values() {
        let (gl, _) = lipschitz_constant(&moving_object(), &BnbConfig::with_tol(1e-4)).unwrap();
        assert!((gl - 25000f64.sqrt()).abs() < 1e-4);
        let (gl0, _) = lipschitz_constant(&zero_system(), &cfg()).unwrap();
        assert_eq!(gl0, 0.0);
    }

    #[test]
    fn lipschitz_scalar_linear() {
        let f = vec![parse("2*x1", 1, 0).unwrap()];
        let sys = SystemModel::new(
            1,
            0,
            1,
            1,
            Mat::identity(1),
            Mat::zeros(1, 0),
            Mat::identity(1),
            Mat::identity(1),
            f,
            IntervalBox::new(vec![Interval::new(-1.0, 1.0)]),
        )
        .unwrap();
        let (gl, _) = lipschitz_constant(&sys, &cfg()).unwrap();
        assert!((gl - 2.0).abs() < 1e-9);
    }

    #[test]
    fn qib_to_lipschitz_cases() {
        // A Lipschitz function is quadratically inner-bounded with the
        // pair (gl^2, 0); the conversion formula returns sqrt(2)*gl for
        // that pair (the formula carries a sqrt(2) slack, it is not the
        // inverse map).
        let gl = 3.0;
        let back = qib_to_lipschitz(gl * gl, 0.0).unwrap();
        assert!((back - 2f64.sqrt() * gl).abs() < 1e-12);
        assert_eq!(qib_to_lipschitz(0.0, 0.0).unwrap(), 0.0);
        // The refuted pair still passes the necessity inequality:
        // 2(-200) + 141^2 = 19481.
        let v = qib_to_lipschitz(-200.0, -141.0).unwrap();
        assert!((v - 19481f64.sqrt()).abs() < 1e-9);
        assert!(matches!(
            qib_to_lipschitz(-200.0, 1.0),
            Err(BoundsError::NecessityViolated { .. })
        ));
    }

    #[test]
    fn qib_audit_counterexamples() {
        let model = moving_object();
        let a = qib_audit(&model, -200.0, -141.0, &[1.0, 0.0], &[0.0, 0.0], &[]).unwrap();
        assert_eq!(a.lhs, 1.0);
        assert_eq!(a.rhs, -59.0);
        assert!(!a.holds);

        let b = qib_audit(&model, -99.0, -100.0, &[0.5, 0.0], &[0.0, 0.0], &[]).unwrap();
        assert_eq!(b.lhs, 0.015625);
        assert_eq!(b.rhs, -18.5);
        assert!(!b.holds);

        let c = qib_audit(&model, -99.0, -100.0, &[2.0, 1.0], &[2.0, 1.0], &[]).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn qib_audit_rejects_outside_domain() {
        let model = moving_object();
        let r = qib_audit(&model, 0.0, 0.0, &[6.0, 0.0], &[0.0, 0.0], &[]);
        assert!(matches!(r, Err(BoundsError::PointOutsideDomain)));
    }

    #[test]
    fn osl_audit_cases() {
        let model = moving_object();
        let a = osl_audit(&model, 0.0, &[1.0, 0.0], &[0.0, 0.0], &[]).unwrap();
        assert_eq!(a.lhs, -1.0);
        assert!(a.holds);
        let b = osl_audit(&model, 0.0, &[2.0, 1.0], &[2.0, 1.0], &[]).unwrap();
        assert_eq!(b.lhs, 0.0);
        assert!(b.holds);
        // A constant below the certified lower bound must be violated along
        // the minimizing direction.
        let c = osl_audit(&model, -160.0, &[5.0, 5.0], &[4.999, 4.999], &[]).unwrap();
        assert!(!c.holds);
    }

    #[test]
    fn sufficient_ball_cases() {
        assert!(qib_sufficient_ball(5.0, 100.0, -100.0));
        assert!(!qib_sufficient_ball(5.9372, -200.0, -141.0));
        assert!(qib_sufficient_ball(1e-4, 0.0, -1.0));
        assert!(!qib_sufficient_ball(5.0, 100.0, 1.0));
    }

    /// Every route's one-sided constant dominates sampled symmetrized
    /// Jacobian eigenvalues.
    #[test]
    fn osl_constants_dominate_sampled_eigenvalues() {
        let model = moving_object();
        let (gf, _) = osl_frobenius(&model, &cfg()).unwrap();
        let (gg, _) = osl_gershgorin(&model, &cfg()).unwrap();
        let (gt, _) = osl_thm3(&model, &cfg()).unwrap();
        let xi = model.jacobian_exprs().unwrap();
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let j = model.jacobian_at(&xi, &x, &[]).unwrap();
            let lmax = *eig_sym(&SymMatrix::from_mat(&j))
                .unwrap()
                .values
                .last()
                .unwrap();
            assert!(gf >= lmax - 1e-8);
            assert!(gg >= lmax - 1e-8);
            assert!(gt >= lmax - 1e-8);
        }
    }

    /// With computed constants, the one-sided and quadratic inequalities
    /// hold on random pairs, and the implied Lipschitz constant satisfies
    /// the two-sided inequality.
    #[test]
    fn audits_hold_on_random_pairs() {
        let model = moving_object();
        let cfg = BnbConfig::with_tol(1e-8);
        let (gs, _) = osl_gershgorin(&model, &cfg).unwrap();
        let q = qib_constants(&model, 1e5, 1e-1, &cfg).unwrap();
        let gl = qib_to_lipschitz(q.gamma_q1, q.gamma_q2).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let xh = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let a = osl_audit(&model, gs, &x, &xh, &[]).unwrap();
            assert!(a.lhs <= a.rhs + 1e-9, "osl violated: {a:?}");
            let b = qib_audit(&model, q.gamma_q1, q.gamma_q2, &x, &xh, &[]).unwrap();
            assert!(b.lhs <= b.rhs + 1e-9, "qib violated: {b:?}");
            // Two-sided inequality with the implied constant.
            let fx = model.gf_value(&x, &[]).unwrap();
            let fxh = model.gf_value(&xh, &[]).unwrap();
            let dfn: f64 = fx
                .iter()
                .zip(&fxh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let dxn: f64 = x
                .iter()
                .zip(&xh)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(dfn <= gl * dxn + 1e-9);
        }
    }

    /// Any negative first constant with moderate second constant fails the
    /// quadratic inequality somewhere on the probe family ([a, 0], 0).
    #[test]
    fn negative_gamma_q1_is_always_refuted() {
        let model = moving_object();
        let probe: Vec<f64> = (1..=50).map(|k| 0.1 * k as f64).collect();
        for &gq1 in &[-0.05, -0.1, -1.0, -10.0, -200.0] {
            for &gq2 in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
                let violated = probe.iter().any(|&a| {
                    let audit =
                        qib_audit(&model, gq1, gq2, &[a, 0.0], &[0.0, 0.0], &[]).unwrap();
                    !audit.holds
                });
                assert!(violated, "gq1={gq1} gq2={gq2} passed the probe family");
            }
        }
    }

    #[test]
    fn compute_report_moving_object() {
        let model = moving_object();
        let r = compute_report(&model, Method::Gershgorin, 1e5, 1e-1, &BnbConfig::with_tol(1e-8))
            .unwrap();
        assert!(r.gamma_s <= 1e-6);
        assert!((r.gamma_lower + 150.0).abs() < 1e-6);
        assert!((r.gamma_m - 25000.0).abs() < 1e-2);
        assert!((r.gamma_q1 - 25015.0).abs() < 1e-2);
        assert_eq!(r.gamma_q2, 1e-1 - 1e5);
        assert!(r.necessity_ok);
        assert!(r.gamma_lower <= r.gamma_bar);
        assert!(r.gamma_s >= r.gamma_lower);
    }
}
