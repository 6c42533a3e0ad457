//! Integral curves of ∇f/‖∇f‖², parameterized by the fiber value, and the
//! drift and norm-growth bounds that hold along them.
//!
//! Along such a curve f(x(s)) = s, so integrating in s from t1 to t2 carries
//! a point of the fiber f = t1 to the fiber f = t2.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{dist, norm, normalized};
use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("start has length {got}, polynomial has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gradient vanishes at the start point")]
    CriticalStart,
    #[error("step size underflow at s = {s}")]
    StepUnderflow { s: f64, x: Vec<f64> },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("bounds are only defined for trajectories that reached their target fiber")]
    NotReached,
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Reached,
    /// ‖x‖‖∇f(x)‖ fell below the floor: an asymptotic critical value may lie
    /// between the two fibers.
    AbortedLowMalgrange,
    /// ∇f nearly vanished.
    AbortedCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub grad_norm: f64,
}

impl FlowSample {
    pub fn rabier(&self) -> f64 {
        norm(&self.x) * self.grad_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<FlowSample>,
    pub t1: f64,
    pub t2: f64,
    /// Minimum of ‖x‖‖∇f(x)‖ over the samples.
    pub c_min: f64,
    /// Same quantity at the chord midpoints between consecutive samples.
    pub midpoint_rabier: Vec<f64>,
    pub status: FlowStatus,
}

impl Trajectory {
    /// Trajectory through given `(s, x)` samples, evaluating the gradient of
    /// `f` at every sample and chord midpoint. Used for replaying stored
    /// curves and for building test inputs.
    pub fn from_points(f: &Polynomial, points: Vec<(f64, Vec<f64>)>, status: FlowStatus) -> Result<Self, FlowError> {
        let first = points.first().ok_or(FlowError::EmptyTrajectory)?;
        let (t1, t2) = (first.0, points.last().map(|p| p.0).unwrap_or(first.0));
        let mut grad = vec![0.0; f.n_vars()];
        let mut samples = Vec::with_capacity(points.len());
        for (s, x) in points {
            if x.len() != f.n_vars() {
                return Err(FlowError::DimensionMismatch {
                    expected: f.n_vars(),
                    got: x.len(),
                });
            }
            f.value_and_gradient(&x, &mut grad);
            samples.push(FlowSample {
                s,
                x,
                grad_norm: norm(&grad),
            });
        }
        let midpoint_rabier = samples
            .windows(2)
            .map(|w| midpoint_rabier(f, &w[0].x, &w[1].x))
            .collect();
        let c_min = samples.iter().map(FlowSample::rabier).fold(f64::INFINITY, f64::min);
        Ok(Self {
            samples,
            t1,
            t2,
            c_min,
            midpoint_rabier,
            status,
        })
    }

    pub fn end(&self) -> &FlowSample {
        self.samples.last().expect("trajectories are never empty")
    }

    /// CSV rows `s, x1..xn, norm, grad_norm, rabier` with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FlowError> {
        let n = self.samples.first().map_or(0, |p| p.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(["norm", "grad_norm", "rabier"].map(String::from));
        w.write_record(&header)?;
        for p in &self.samples {
            let mut row = vec![p.s];
            row.extend(&p.x);
            row.extend([norm(&p.x), p.grad_norm, p.rabier()]);
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn midpoint_rabier(f: &Polynomial, a: &[f64], b: &[f64]) -> f64 {
    let m: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
    let mut grad = vec![0.0; m.len()];
    f.value_and_gradient(&m, &mut grad);
    norm(&m) * norm(&grad)
}

/// Tolerances for the embedded Runge–Kutta integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step, relative to max(1, |s|).
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            min_step: 1e-14,
            max_steps: 200_000,
        }
    }
}

impl StepControl {
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
            ..*self
        }
    }
}

/// Fiber-consistency tolerance `1e-9 · (1 + |t1| + |t2|)`.
pub fn flow_tol(t1: f64, t2: f64) -> f64 {
    1e-9 * (1.0 + t1.abs() + t2.abs())
}

const MAX_CORRECTIONS: usize = 3;

// Dormand–Prince 5(4) tableau; the field does not depend on s, so the
// node row is not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Field<'a> {
    f: &'a Polynomial,
    grad: Vec<f64>,
    degree: i32,
}

impl Field<'_> {
    /// ∇f/‖∇f‖² at x, or None where the gradient is numerically zero.
    fn eval(&mut self, x: &[f64], out: &mut [f64]) -> Option<()> {
        self.f.value_and_gradient(x, &mut self.grad);
        let g2: f64 = self.grad.iter().map(|g| g * g).sum();
        if !(g2.is_finite() && g2.sqrt() >= critical_threshold(x, self.degree)) {
            return None;
        }
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g / g2;
        }
        Some(())
    }
}

fn critical_threshold(x: &[f64], degree: i32) -> f64 {
    1e-12 * (1.0 + norm(x).powi((degree - 1).max(0)))
}

/// Moves `x` along ∇f until |f(x) - s| ≤ tol (at most a few Newton steps).
fn project_to_fiber(f: &Polynomial, x: &mut [f64], s: f64, tol: f64, grad: &mut [f64]) -> bool {
    for _ in 0..=MAX_CORRECTIONS {
        let r = f.value_and_gradient(x, grad) - s;
        if r.abs() <= tol {
            return true;
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if !(g2 > 0.0 && g2.is_finite()) {
            return false;
        }
        for (xi, g) in x.iter_mut().zip(grad.iter()) {
            *xi -= r * g / g2;
        }
    }
    false
}

/// Follows ∇f/‖∇f‖² from `x0` (on the fiber t1 = f(x0)) to the fiber `t2`.
pub fn trace_gradient_flow(
    f: &Polynomial,
    x0: &[f64],
    t2: f64,
    c_floor: f64,
    ctrl: &StepControl,
) -> Result<Trajectory, FlowError> {
    let n = f.n_vars();
    if x0.len() != n {
        return Err(FlowError::DimensionMismatch { expected: n, got: x0.len() });
    }
    let degree = f.degree();
    let mut grad = vec![0.0; n];
    let t1 = f.value_and_gradient(x0, &mut grad);
    let g0 = norm(&grad);
    if !(g0 > 0.0) {
        return Err(FlowError::CriticalStart);
    }
    let tol = flow_tol(t1, t2);
    let mut traj = Trajectory {
        samples: vec![FlowSample {
            s: t1,
            x: x0.to_vec(),
            grad_norm: g0,
        }],
        t1,
        t2,
        c_min: norm(x0) * g0,
        midpoint_rabier: Vec::new(),
        status: FlowStatus::Reached,
    };
    if let Some(status) = abort_status(x0, g0, degree, c_floor) {
        traj.status = status;
        return Ok(traj);
    }
    if t1 == t2 {
        return Ok(traj);
    }

    let mut field = Field { f, grad: vec![0.0; n], degree };
    let dir = (t2 - t1).signum();
    let mut s = t1;
    let mut x = x0.to_vec();
    let mut h = dir * (t2 - t1).abs() / 16.0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y = vec![0.0; n];
    // FSAL: k[0] holds the field at the current point
    if field.eval(&x, &mut k[0]).is_none() {
        return Err(FlowError::CriticalStart);
    }
    for _ in 0..ctrl.max_steps {
        let last = dir * (s + h - t2) >= 0.0;
        if last {
            h = t2 - s;
        }
        let mut ok = true;
        for i in 1..7 {
            for j in 0..n {
                let mut acc = x[j];
                for (l, kl) in k.iter().enumerate().take(i) {
                    acc += h * A[i][l] * kl[j];
                }
                stage[j] = acc;
            }
            if field.eval(&stage, &mut k[i]).is_none() {
                ok = false;
                break;
            }
        }
        let mut err = f64::INFINITY;
        if ok {
            err = 0.0;
            for j in 0..n {
                let mut hi = x[j];
                let mut lo = 0.0;
                for i in 0..7 {
                    hi += h * B5[i] * k[i][j];
                    lo += h * (B5[i] - B4[i]) * k[i][j];
                }
                y[j] = hi;
                let scale = ctrl.atol + ctrl.rtol * x[j].abs().max(hi.abs());
                err = f64::max(err, (lo / scale).abs());
            }
        }
        if ok && err <= 1.0 {
            let s_new = if last { t2 } else { s + h };
            let projected = project_to_fiber(f, &mut y, s_new, tol, &mut grad);
            if projected {
                let gn = norm(&grad);
                traj.midpoint_rabier.push(midpoint_rabier(f, &x, &y));
                traj.samples.push(FlowSample {
                    s: s_new,
                    x: y.clone(),
                    grad_norm: gn,
                });
                traj.c_min = traj.c_min.min(norm(&y) * gn);
                if let Some(status) = abort_status(&y, gn, degree, c_floor) {
                    traj.status = status;
                    return Ok(traj);
                }
                if last {
                    return Ok(traj);
                }
                s = s_new;
                x.copy_from_slice(&y);
                if field.eval(&x, &mut k[0]).is_none() {
                    traj.status = FlowStatus::AbortedCritical;
                    return Ok(traj);
                }
                let grow = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
                h *= grow.clamp(0.2, 5.0);
                continue;
            }
        }
        let shrink = if ok && err.is_finite() { 0.9 * err.powf(-0.25) } else { 0.25 };
        h *= shrink.clamp(0.1, 0.5);
        if h.abs() < ctrl.min_step * s.abs().max(1.0) {
            return Err(FlowError::StepUnderflow { s, x });
        }
    }
    Err(FlowError::TooManySteps(ctrl.max_steps))
}

fn abort_status(x: &[f64], grad_norm: f64, degree: i32, c_floor: f64) -> Option<FlowStatus> {
    if grad_norm < critical_threshold(x, degree) {
        Some(FlowStatus::AbortedCritical)
    } else if norm(x) * grad_norm < c_floor {
        Some(FlowStatus::AbortedLowMalgrange)
    } else {
        None
    }
}

/// Smallest ‖x‖‖∇f(x)‖ seen along the trajectory, including the chord
/// midpoints between samples.
pub fn trajectory_malgrange_constant(traj: &Trajectory) -> f64 {
    traj.midpoint_rabier.iter().copied().fold(traj.c_min, f64::min)
}

/// One inequality checked at every relevant sample. `margin` is the least
/// value of (bound − observed) in normalized units; negative when violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    pub margin: f64,
}

/// Drift and norm-growth bounds, evaluated with the Malgrange constant
/// measured along the trajectory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub scope: String,
    pub c_min: f64,
    /// ‖u(t1) − u(t2)‖ ≤ (2/C)|t1 − t2| for the unit directions u.
    pub drift: BoundCheck,
    /// ‖x(s)‖ ≤ ‖x(t1)‖ e^{|s−t1|/C}.
    pub upper_growth: BoundCheck,
    /// ‖x(s)‖ ≥ ‖x(t1)‖ (2 − e^{|s−t1|/C}).
    pub lower_bound: BoundCheck,
    /// e^{|t2−t1|/C}; the norm bounds keep the curve away from the origin
    /// when this is below 3/2.
    pub growth_factor: f64,
    pub not_far_applicable: bool,
}

pub const BOUND_SLACK: f64 = 1e-6;

pub fn verify_bounds(traj: &Trajectory) -> Result<BoundReport, FlowError> {
    verify_bounds_with_slack(traj, BOUND_SLACK)
}

pub fn verify_bounds_with_slack(traj: &Trajectory, slack: f64) -> Result<BoundReport, FlowError> {
    if traj.status != FlowStatus::Reached {
        return Err(FlowError::NotReached);
    }
    let first = traj.samples.first().ok_or(FlowError::EmptyTrajectory)?;
    let end = traj.end();
    let c = trajectory_malgrange_constant(traj);
    let r1 = norm(&first.x);
    let dt = (end.s - first.s).abs();

    let drift_value = dist(&normalized(&first.x), &normalized(&end.x));
    let drift_margin = 2.0 / c * dt - drift_value;

    let mut upper = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for p in &traj.samples {
        let e = ((p.s - first.s).abs() / c).exp();
        let ratio = norm(&p.x) / r1;
        upper = upper.min(e - ratio);
        lower = lower.min(ratio - (2.0 - e));
    }
    let growth_factor = (dt / c).exp();
    Ok(BoundReport {
        scope: "along-trajectory".to_string(),
        c_min: c,
        drift: BoundCheck {
            holds: drift_margin >= -slack,
            margin: drift_margin,
        },
        upper_growth: BoundCheck {
            holds: upper >= -slack,
            margin: upper,
        },
        lower_bound: BoundCheck {
            holds: lower >= -slack,
            margin: lower,
        },
        growth_factor,
        not_far_applicable: growth_factor < 1.5,
    })
}

impl BoundReport {
    pub fn all_hold(&self) -> bool {
        self.drift.holds && self.upper_growth.holds && self.lower_bound.holds
    }
}
