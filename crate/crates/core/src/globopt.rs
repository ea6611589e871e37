//! Certified global maximization by interval branch-and-bound.
//!
//! Boxes are kept in a priority queue ordered by their interval upper
//! bound. The best midpoint evaluation so far is a certified achievable
//! value; any box whose interval upper bound cannot beat it is discarded.
//! Splitting always bisects the widest dimension. Single-threaded and
//! fully deterministic: queue ties are broken by insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::interval::{DomainError, Interval, IntervalBox};
use crate::expr::Expr;

/// A scalar objective that can be bounded over a box and evaluated at a
/// point. Implementations must be interval-sound: the box enclosure has
/// to contain every point value inside the box.
pub trait Objective {
    fn enclosure(&self, bx: &IntervalBox) -> Result<Interval, DomainError>;
    fn value(&self, z: &[f64]) -> Result<f64, DomainError>;
}

/// An [`Expr`] objective over a model with `n` state variables.
pub struct ExprObjective<'a> {
    pub expr: &'a Expr,
    pub n_states: usize,
}

impl Objective for ExprObjective<'_> {
    fn enclosure(&self, bx: &IntervalBox) -> Result<Interval, DomainError> {
        self.expr.eval_interval(bx, self.n_states)
    }

    fn value(&self, z: &[f64]) -> Result<f64, DomainError> {
        self.expr.eval_point(z, self.n_states)
    }
}

/// Negation wrapper so minimization reuses the maximizer.
struct Negated<'a, O: Objective + ?Sized>(&'a O);

impl<O: Objective + ?Sized> Objective for Negated<'_, O> {
    fn enclosure(&self, bx: &IntervalBox) -> Result<Interval, DomainError> {
        Ok(-self.0.enclosure(bx)?)
    }

    fn value(&self, z: &[f64]) -> Result<f64, DomainError> {
        Ok(-self.0.value(z)?)
    }
}

/// How to pick the split dimension. Only widest-dimension bisection is
/// implemented; the variant exists so configs read explicitly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SplitRule {
    #[default]
    WidestDimension,
}

#[derive(Debug, Clone, Copy)]
pub struct BnbConfig {
    /// Required certified gap `ub - lb` for convergence.
    pub tol: f64,
    /// Maximum number of boxes processed before giving up.
    pub max_boxes: u64,
    /// Wall-clock budget in seconds.
    pub max_seconds: f64,
    pub split_rule: SplitRule,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_boxes: 1_000_000,
            max_seconds: 60.0,
            split_rule: SplitRule::WidestDimension,
        }
    }
}

impl BnbConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Result of a branch-and-bound run.
///
/// For maximization, `lb` is a certified achievable value (a point
/// evaluation at `argbest`) and `ub` a certified upper bound from interval
/// arithmetic, so the global maximum lies in `[lb, ub]`. For minimization
/// the roles mirror: `lb` is the certified lower bound and `ub` the
/// achieved value.
#[derive(Debug, Clone, PartialEq)]
pub struct Enclosure {
    pub lb: f64,
    pub ub: f64,
    pub argbest: Vec<f64>,
    pub boxes_processed: u64,
    pub converged: bool,
}

impl Enclosure {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }
}

struct QueueItem {
    ub: f64,
    seq: u64,
    bx: IntervalBox,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.ub == other.ub && self.seq == other.seq
    }
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on ub; on ties, smaller sequence number (older box) wins.
        self.ub
            .total_cmp(&other.ub)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Certified global maximization of `objective` over `omega`.
pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    omega: &IntervalBox,
    cfg: &BnbConfig,
) -> Result<Enclosure, DomainError> {
    Ok(maximize_traced(objective, omega, cfg)?.0)
}

/// As [`maximize`], additionally reporting the incumbent and certified
/// bound after every processed box; the first is nondecreasing and the
/// second nonincreasing.
pub fn maximize_traced<O: Objective + ?Sized>(
    objective: &O,
    omega: &IntervalBox,
    cfg: &BnbConfig,
) -> Result<(Enclosure, Vec<(f64, f64)>), DomainError> {
    let SplitRule::WidestDimension = cfg.split_rule;
    let start = Instant::now();

    let mut seq: u64 = 0;
    let mut heap: BinaryHeap<QueueItem> = BinaryHeap::new();

    let root_ub = objective.enclosure(omega)?.hi;
    let mid = omega.midpoint();
    let mut lb = objective.value(&mid)?;
    let mut argbest = mid;
    let mut global_ub = root_ub;
    heap.push(QueueItem {
        ub: root_ub,
        seq,
        bx: omega.clone(),
    });
    seq += 1;

    let mut processed: u64 = 0;
    let mut converged = false;
    let mut trace: Vec<(f64, f64)> = Vec::new();

    while let Some(item) = heap.pop() {
        // Popped upper bounds are nonincreasing, so this is the certified
        // global upper bound right now.
        global_ub = global_ub.min(item.ub).max(lb);
        processed += 1;
        trace.push((lb, global_ub));

        if global_ub - lb <= cfg.tol {
            converged = true;
            break;
        }
        if processed >= cfg.max_boxes || start.elapsed().as_secs_f64() > cfg.max_seconds {
            break;
        }
        if item.ub <= lb {
            // Cannot contain a strictly better point.
            continue;
        }
        if item.bx.width() == 0.0 {
            // Degenerate box: its enclosure is as tight as it gets.
            continue;
        }

        let dim = item.bx.widest_dim();
        let (left, right) = item.bx.split(dim);
        for child in [left, right] {
            let enc = objective.enclosure(&child)?;
            let mid = child.midpoint();
            let v = objective.value(&mid)?;
            if v > lb {
                lb = v;
                argbest = mid;
            }
            if enc.hi > lb {
                heap.push(QueueItem {
                    ub: enc.hi,
                    seq,
                    bx: child,
                });
            }
            seq += 1;
        }
    }

    // If the queue drained without hitting the gap criterion, every box
    // was pruned against the incumbent, so the incumbent is the maximum.
    let ub = if heap.is_empty() && !converged {
        lb
    } else {
        global_ub.max(lb)
    };

    Ok((
        Enclosure {
            lb,
            ub,
            argbest,
            boxes_processed: processed,
            converged: converged || ub - lb <= cfg.tol,
        },
        trace,
    ))
}

/// Certified global minimization: maximization of the negated objective,
/// reported in the original sign convention (`lb <= min <= ub`, with `lb`
/// the certified lower bound and `ub` an achieved value).
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    omega: &IntervalBox,
    cfg: &BnbConfig,
) -> Result<Enclosure, DomainError> {
    let neg = Negated(objective);
    let enc = maximize(&neg, omega, cfg)?;
    Ok(Enclosure {
        lb: -enc.ub,
        ub: -enc.lb,
        argbest: enc.argbest,
        boxes_processed: enc.boxes_processed,
        converged: enc.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn box2(lo: f64, hi: f64) -> IntervalBox {
        IntervalBox::new(vec![Interval::new(lo, hi), Interval::new(lo, hi)])
    }

    #[test]
    fn constant_objective_converges_immediately() {
        let e = parse("7", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let enc = maximize(&obj, &box2(-3.0, 9.0), &BnbConfig::default()).unwrap();
        assert!(enc.converged);
        assert_eq!(enc.lb, 7.0);
        assert!((enc.ub - 7.0).abs() < 1e-12);
        assert_eq!(enc.boxes_processed, 1);
    }

    /// Row objective of the one-sided bound: max is exactly 0 at the
    /// origin, and the certified gap must close below 1e-6.
    #[test]
    fn gershgorin_row_objective_max_is_zero() {
        let e = parse("-3*x1^2 - x2^2 + 2*abs(x1*x2)", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let enc = maximize(&obj, &box2(-5.0, 5.0), &BnbConfig::with_tol(1e-6)).unwrap();
        assert!(enc.converged, "gap {}", enc.gap());
        assert!(enc.ub <= 1e-6, "ub {}", enc.ub);
        assert!(enc.lb <= 0.0 && enc.lb >= -1e-6);
    }

    #[test]
    fn gradient_norm_objective_hits_corner() {
        // Sum of squared gradient entries of the cubic damping example:
        // maximum 25000 at the four domain corners.
        let e = parse(
            "(-3*x1^2 - x2^2)^2 + 2*(-2*x1*x2)^2 + (-x1^2 - 3*x2^2)^2",
            2,
            0,
        )
        .unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let enc = maximize(&obj, &box2(-5.0, 5.0), &BnbConfig::with_tol(1e-3)).unwrap();
        assert!(enc.converged);
        assert!((enc.ub - 25000.0).abs() < 1e-3 + 1e-6, "ub {}", enc.ub);
        assert!((enc.lb - 25000.0).abs() < 1e-3 + 1e-6);
    }

    #[test]
    fn minimize_row_objective_reaches_neg_150() {
        let e = parse("-3*x1^2 - x2^2 - 2*abs(x1*x2)", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let enc = minimize(&obj, &box2(-5.0, 5.0), &BnbConfig::with_tol(1e-6)).unwrap();
        assert!(enc.converged);
        assert!(enc.lb <= -150.0 && enc.lb >= -150.0 - 1e-6, "lb {}", enc.lb);
        assert!(enc.ub >= -150.0 - 1e-9 && enc.ub <= -150.0 + 1e-6);
    }

    #[test]
    fn minimize_trivial_cases() {
        let sq = parse("x1^2", 1, 0).unwrap();
        let obj = ExprObjective { expr: &sq, n_states: 1 };
        let omega = IntervalBox::new(vec![Interval::new(-1.0, 1.0)]);
        let enc = minimize(&obj, &omega, &BnbConfig::with_tol(1e-9)).unwrap();
        assert!(enc.lb <= 0.0 && enc.ub >= 0.0 && enc.gap() <= 1e-9);

        let lin = parse("x1 + x2", 2, 0).unwrap();
        let obj = ExprObjective { expr: &lin, n_states: 2 };
        let omega = IntervalBox::new(vec![
            Interval::new(0.0, 1.0),
            Interval::new(0.0, 1.0),
        ]);
        let enc = minimize(&obj, &omega, &BnbConfig::with_tol(1e-9)).unwrap();
        assert!((enc.lb - 0.0).abs() <= 1e-9 && enc.ub >= 0.0);
        assert!(enc.argbest.iter().all(|&v| v <= 0.5));
    }

    #[test]
    fn budget_exhaustion_reports_unconverged() {
        let e = parse("sin(x1*10)*cos(x2*7) + x1*x2", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let cfg = BnbConfig {
            tol: 1e-12,
            max_boxes: 50,
            ..BnbConfig::default()
        };
        let enc = maximize(&obj, &box2(-5.0, 5.0), &cfg).unwrap();
        assert!(!enc.converged);
        assert!(enc.boxes_processed <= 50);
        assert!(enc.lb <= enc.ub);
    }

    /// Soundness: no sampled point value exceeds the certified ub, and the
    /// incumbent never exceeds the sampled maximum by more than rounding.
    #[test]
    fn sampled_soundness() {
        let e = parse("-3*x1^2 - x2^2 + 2*abs(x1*x2) + sin(x1)", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let enc = maximize(&obj, &box2(-5.0, 5.0), &BnbConfig::with_tol(1e-8)).unwrap();
        let mut rng = StdRng::seed_from_u64(21);
        let mut sample_max = f64::NEG_INFINITY;
        for _ in 0..100_000 {
            let z = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let v = obj.value(&z).unwrap();
            sample_max = sample_max.max(v);
            assert!(v <= enc.ub + 1e-12);
        }
        assert!(enc.lb >= sample_max - 1e-9 || enc.lb <= sample_max);
    }

    /// The incumbent never decreases and the certified bound never
    /// increases across iterations.
    #[test]
    fn monotone_progress_trace() {
        let e = parse("-3*x1^2 - x2^2 + 2*abs(x1*x2) + cos(x1*3)", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let (enc, trace) = maximize_traced(&obj, &box2(-5.0, 5.0), &BnbConfig::with_tol(1e-7)).unwrap();
        assert!(enc.converged);
        assert!(trace.len() > 10);
        for w in trace.windows(2) {
            assert!(w[1].0 >= w[0].0, "incumbent decreased: {w:?}");
            assert!(w[1].1 <= w[0].1, "certified bound increased: {w:?}");
        }
    }

    #[test]
    fn deterministic_repeat_runs() {
        let e = parse("-3*x1^2 - x2^2 + 2*abs(x1*x2)", 2, 0).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 2 };
        let cfg = BnbConfig::with_tol(1e-7);
        let a = maximize(&obj, &box2(-5.0, 5.0), &cfg).unwrap();
        let b = maximize(&obj, &box2(-5.0, 5.0), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_input_dimension() {
        // A point interval in one dimension must not break splitting.
        let e = parse("x1^2 + u1", 1, 1).unwrap();
        let obj = ExprObjective { expr: &e, n_states: 1 };
        let omega = IntervalBox::new(vec![Interval::new(-2.0, 2.0), Interval::point(3.0)]);
        let enc = maximize(&obj, &omega, &BnbConfig::with_tol(1e-6)).unwrap();
        assert!(enc.converged);
        assert!((enc.ub - 7.0).abs() < 1e-5);
    }
}
