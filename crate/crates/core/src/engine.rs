//! Exact gradient descent on `f(x, y) = F(xy)` with per-step diagnostics.
//!
//! The update is the symmetric map
//! `(x, y) <- (x - h l y, y - h l x)` with `l = F'(xy)`, recorded together
//! with the quantities driving the convergence analysis: the product gap
//! `delta = xy - 1`, the curvature ratio `q = l / delta`, the one-step
//! contraction factor `r` with `delta_{k+1} = r_k delta_k`, the squared
//! norm `uu = x^2 + y^2`, and the sharpness.

use crate::family::{FamilyError, ObjectiveSpec, Point2D};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("max_iters must be at least 1")]
    BadMaxIters,
    #[error("convergence_tol must be positive, got {0}")]
    BadTolerance(f64),
    #[error("divergence_bound {bound} must exceed max(|x0|, |y0|)^2 = {floor}")]
    BadDivergenceBound { bound: f64, floor: f64 },
    #[error("record_stride must be at least 1")]
    BadStride,
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Consecutive sub-tolerance steps required before declaring convergence;
/// oscillatory phase-2 approaches make a single-step test unreliable.
const CONFIRM_STEPS: u32 = 10;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: ObjectiveSpec,
    pub x0: f64,
    pub y0: f64,
    pub learning_rate: f64,
    pub max_iters: u64,
    pub convergence_tol: f64,
    pub divergence_bound: f64,
    pub record_stride: u64,
}

impl RunConfig {
    pub fn new(spec: ObjectiveSpec, x0: f64, y0: f64, learning_rate: f64) -> Self {
        Self {
            spec,
            x0,
            y0,
            learning_rate,
            max_iters: 2_000_000,
            convergence_tol: 1e-12,
            divergence_bound: 1e12,
            record_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        Point2D::new(self.x0, self.y0)?;
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(EngineError::BadLearningRate(self.learning_rate));
        }
        if self.max_iters == 0 {
            return Err(EngineError::BadMaxIters);
        }
        if self.convergence_tol <= 0.0 || self.convergence_tol.is_nan() {
            return Err(EngineError::BadTolerance(self.convergence_tol));
        }
        let floor = self.x0.abs().max(self.y0.abs()).powi(2);
        if self.divergence_bound <= floor {
            return Err(EngineError::BadDivergenceBound { bound: self.divergence_bound, floor });
        }
        if self.record_stride == 0 {
            return Err(EngineError::BadStride);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Converged,
    Diverged,
    MaxIters,
    /// The iteration landed exactly on the minimizer set, or revisited a
    /// point two steps back to within 1e-14: the pathological events the
    /// convergence theory excludes as measure zero.
    DegenerateHit,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepRecord {
    pub k: u64,
    pub x: f64,
    pub y: f64,
    pub loss: f64,
    pub delta: f64,
    pub ell: f64,
    pub q: f64,
    pub r: f64,
    pub uu: f64,
    pub sharpness: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub iterations: u64,
    pub learning_rate: f64,
    pub convergence_tol: f64,
    /// Final iterate and its sharpness when `status == Converged`.
    pub limit: Option<Point2D>,
    pub limit_sharpness: Option<f64>,
}

impl Trajectory {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn initial(&self) -> &StepRecord {
        &self.steps[0]
    }

    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("at least the initial step is recorded")
    }

    /// Largest finite recorded sharpness: the local gradient-Lipschitz
    /// constant over the visited region.
    pub fn max_sharpness(&self) -> f64 {
        self.steps.iter().map(|s| s.sharpness).filter(|s| s.is_finite()).fold(0.0, f64::max)
    }
}

/// One GD step; `l` is evaluated once and both coordinates update from the
/// old values.
pub fn gd_step(spec: &ObjectiveSpec, p: Point2D, h: f64) -> (f64, f64) {
    let l = spec.eval_df(p.x * p.y);
    (p.x - h * l * p.y, p.y - h * l * p.x)
}

/// Run GD to termination, recording every `record_stride`-th step plus the
/// terminal one.
pub fn run(config: &RunConfig) -> Result<Trajectory, EngineError> {
    config.validate()?;
    let spec = &config.spec;
    let h = config.learning_rate;
    let tol = config.convergence_tol;

    let mut steps = Vec::new();
    let (mut x, mut y) = (config.x0, config.y0);
    // (x, y) two iterations ago, for the period-2 revisit guard.
    let mut back2: Option<(f64, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    let mut prev_dist = f64::INFINITY;
    let mut confirm = 0u32;
    let mut status = Status::MaxIters;
    let mut iterations = 0;

    for k in 0..=config.max_iters {
        iterations = k;
        let s = x * y;
        let uu = x * x + y * y;

        if !x.is_finite() || !y.is_finite() || uu > config.divergence_bound {
            status = Status::Diverged;
            push_record(spec, h, &mut steps, k, x, y);
            break;
        }

        let dist = spec.dist_to_minimizer(s);
        // Landing exactly on the minimizer set from a macroscopic distance
        // is the finite-step hit the convergence analysis excludes. Exact
        // zeros reached from inside the convergence neighbourhood are just
        // rounding underflow of a converging tail, and a start on the set
        // is an ordinary fixed point.
        if dist == 0.0 && k >= 1 && prev_dist > tol {
            status = Status::DegenerateHit;
            push_record(spec, h, &mut steps, k, x, y);
            break;
        }
        prev_dist = dist;
        // Period-2 revisit away from the minimizer set: a macroscopic
        // 2-cycle capture. Near the set, sub-1e-14 revisits are rounding
        // stalls handled below.
        if let Some((bx, by)) = back2 {
            let scale = 1.0 + x.abs().max(y.abs());
            if dist > 1e-6 && (x - bx).abs().max((y - by).abs()) <= 1e-14 * scale {
                status = Status::DegenerateHit;
                push_record(spec, h, &mut steps, k, x, y);
                break;
            }
        }

        if k % config.record_stride == 0 {
            push_record(spec, h, &mut steps, k, x, y);
        }

        let ell = spec.eval_df(s);
        let grad_norm = (ell * y).hypot(ell * x);
        if dist < tol && grad_norm < tol {
            confirm += 1;
            if confirm >= CONFIRM_STEPS {
                status = Status::Converged;
                if (k % config.record_stride) != 0 {
                    push_record(spec, h, &mut steps, k, x, y);
                }
                break;
            }
        } else {
            confirm = 0;
        }

        if k == config.max_iters {
            if (k % config.record_stride) != 0 {
                push_record(spec, h, &mut steps, k, x, y);
            }
            break;
        }

        let next = gd_step(spec, Point2D { x, y }, h);
        // Exact fixed point or exact 2-cycle of f64 arithmetic: the update
        // can no longer move the iterate, so the run is terminal. Stalls
        // can freeze the iterate up to an ulp-scale distance short of the
        // located minimizer product, so the classification threshold is
        // the looser of the configured tolerance and the 1e-8 minimizer
        // neighbourhood used by the stability check.
        let stalled_fixed = next.0 == x && next.1 == y;
        let stalled_cycle = prev == Some(next);
        if stalled_fixed || stalled_cycle {
            let stall_tol = tol.max(1e-8 * (1.0 + s.abs()));
            status = if dist <= stall_tol { Status::Converged } else { Status::DegenerateHit };
            if (k % config.record_stride) != 0 {
                push_record(spec, h, &mut steps, k, x, y);
            }
            break;
        }

        back2 = prev;
        prev = Some((x, y));
        x = next.0;
        y = next.1;
    }

    let (limit, limit_sharpness) = if status == Status::Converged {
        let p = Point2D { x, y };
        (Some(p), Some(spec.sharpness(p)))
    } else {
        (None, None)
    };
    Ok(Trajectory {
        steps,
        status,
        iterations,
        learning_rate: h,
        convergence_tol: tol,
        limit,
        limit_sharpness,
    })
}

fn push_record(spec: &ObjectiveSpec, h: f64, steps: &mut Vec<StepRecord>, k: u64, x: f64, y: f64) {
    let s = x * y;
    let delta = s - 1.0;
    let ell = spec.eval_df(s);
    let q = spec.q(delta);
    let uu = x * x + y * y;
    let r = 1.0 - h * q * (uu - h * ell * s);
    steps.push(StepRecord {
        k,
        x,
        y,
        loss: spec.eval_loss(s),
        delta,
        ell,
        q,
        r,
        uu,
        sharpness: spec.sharpness(Point2D { x, y }),
    });
}

/// First recorded step from which GD stays in the flat region:
/// `uu <= 2/h` with `|r| < 1` for the rest of the trajectory. `None` if
/// the trajectory did not converge or starts already inside the flat
/// region (initial sharpness at most `2/h`: no escape stage).
pub fn phase_boundary(traj: &Trajectory) -> Option<usize> {
    if !traj.converged() {
        return None;
    }
    let h = traj.learning_rate;
    if traj.initial().sharpness <= 2.0 / h {
        return None;
    }
    let n = traj.steps.len();
    // suffix_ok[i]: |r_j| < 1 for all recorded j >= i.
    let mut suffix_ok = vec![false; n];
    let mut ok = true;
    for i in (0..n).rev() {
        ok = ok && traj.steps[i].r.abs() < 1.0;
        suffix_ok[i] = ok;
    }
    let boundary = (0..n).find(|&i| traj.steps[i].uu <= 2.0 / h && suffix_ok[i])?;
    if boundary == 0 {
        None
    } else {
        Some(boundary)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// Stability of a minimizer as a fixed point of the GD map: eigenvalue
/// magnitudes of `I - h H`. The zero-curvature direction along the
/// minimizer manifold always maps with multiplier exactly 1 and carries no
/// stability information, so only curved directions are classified.
pub fn fixed_point_stability(
    spec: &ObjectiveSpec,
    minimizer: Point2D,
    h: f64,
) -> Result<Stability, FamilyError> {
    let s = minimizer.product();
    if spec.dist_to_minimizer(s) >= 1e-8 {
        return Err(FamilyError::NotAMinimizer(minimizer.x, minimizer.y));
    }
    let sum = spec.eval_hessian(minimizer);
    let eigs = [sum.eig_min, sum.trace - sum.eig_min];
    let scale = sum.eig_max_magnitude.max(1.0);
    let mut stable = true;
    let mut unstable = false;
    for lambda in eigs {
        if lambda.abs() <= 1e-9 * scale {
            continue;
        }
        let mu = (1.0 - h * lambda).abs();
        if mu >= 1.0 - 1e-12 {
            stable = false;
        }
        if mu > 1.0 + 1e-12 {
            unstable = true;
        }
    }
    Ok(if unstable {
        Stability::Unstable
    } else if stable {
        Stability::Stable
    } else {
        Stability::Marginal
    })
}
