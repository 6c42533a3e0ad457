//! Points of a fiber `f = t` on large spheres and the directions they
//! approach as the radius grows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directions::{hausdorff_extrinsic, DirectionSet, DirectionsError, Provenance};
use crate::geom::{dot, normalize, normalized, sphere_starts, starts_for_spacing, SpatialHash};
use crate::poly::{PolyError, Polynomial};

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("at least one start is required")]
    NoStarts,
    #[error("invalid radius schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Directions(#[from] DirectionsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub radius: f64,
    pub residual: f64,
}

/// Radii `r0 · factor^k` for `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub r0: f64,
    pub factor: f64,
    pub count: usize,
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        Self {
            r0: 10.0,
            factor: 10f64.sqrt(),
            // 10 · sqrt(10)^6 = 10^4
            count: 7,
        }
    }
}

impl RadiusSchedule {
    pub fn new(r0: f64, factor: f64, count: usize) -> Result<Self, FiberError> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(FiberError::InvalidSchedule(format!("r0 = {r0} must be positive")));
        }
        if !(factor > 1.0 && factor.is_finite()) {
            return Err(FiberError::InvalidSchedule(format!("factor = {factor} must exceed 1")));
        }
        if count == 0 {
            return Err(FiberError::InvalidSchedule("count must be positive".into()));
        }
        Ok(Self { r0, factor, count })
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.r0 * self.factor.powi(k as i32))
            .collect()
    }

    pub fn last(&self) -> f64 {
        self.r0 * self.factor.powi(self.count as i32 - 1)
    }
}

pub const FIBER_MAX_ITER: usize = 100;

/// Residual tolerance `1e-8 · max(1, |t|)` for points of the fiber `f = t`.
pub fn fiber_tol(t: f64) -> f64 {
    1e-8 * t.abs().max(1.0)
}

/// Counts from one batch of Newton solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub starts: usize,
    pub converged: usize,
    pub nonfinite: usize,
    pub unconverged: usize,
}

enum Outcome {
    Converged(Vec<f64>, f64),
    NonFinite,
    Stalled,
}

// Longest move per iteration, as a fraction of the radius.
const MAX_STEP: f64 = 0.25;
// Iterations over which |f - t| must at least halve.
const STALL_WINDOW: usize = 10;
const MAX_HALVINGS: usize = 12;

/// Newton iteration for {f = t, |x|^2 = R^2}: the minimum-norm solution of
/// the linearized pair of constraints, followed by radial retraction, with
/// step halving whenever |f - t| would grow.
fn newton_on_fiber(f: &Polynomial, t: f64, radius: f64, start: &[f64], tol: f64) -> Outcome {
    let n = start.len();
    let mut x: Vec<f64> = normalized(start).iter().map(|v| v * radius).collect();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut r1 = f.value_and_gradient(&x, &mut grad) - t;
    let mut checkpoint = r1.abs();
    for iter in 0..FIBER_MAX_ITER {
        if !r1.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Outcome::NonFinite;
        }
        if r1.abs() <= tol {
            return Outcome::Converged(x, r1.abs());
        }
        // give up on starts drifting toward a spurious extremum of |f - t|
        if iter > 0 && iter % STALL_WINDOW == 0 {
            if r1.abs() > 0.5 * checkpoint {
                return Outcome::Stalled;
            }
            checkpoint = r1.abs();
        }
        let r2 = dot(&x, &x) - radius * radius;
        // J = [grad; 2x], dx = -J^T (J J^T)^{-1} r
        let a = dot(&grad, &grad);
        let b = 2.0 * dot(&grad, &x);
        let c = 4.0 * dot(&x, &x);
        let det = a * c - b * b;
        if !(det > 1e-24 * a * c) {
            return Outcome::Stalled;
        }
        let l1 = (c * r1 - b * r2) / det;
        let l2 = (a * r2 - b * r1) / det;
        let mut dx: Vec<f64> = grad
            .iter()
            .zip(&x)
            .map(|(g, xi)| -(l1 * g + 2.0 * l2 * xi))
            .collect();
        let step = dot(&dx, &dx).sqrt();
        if step > MAX_STEP * radius {
            let s = MAX_STEP * radius / step;
            dx.iter_mut().for_each(|v| *v *= s);
        }
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                trial[i] = x[i] + scale * dx[i];
            }
            let len = normalize(&mut trial);
            if !(len > 0.0) {
                return Outcome::NonFinite;
            }
            trial.iter_mut().for_each(|v| *v *= radius);
            let val = f.value_and_gradient(&trial, &mut trial_grad) - t;
            if val.is_finite() && val.abs() < r1.abs() {
                x.copy_from_slice(&trial);
                grad.copy_from_slice(&trial_grad);
                r1 = val;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Outcome::Stalled;
        }
    }
    if r1.abs() <= tol {
        Outcome::Converged(x, r1.abs())
    } else {
        Outcome::Stalled
    }
}

fn solve_from_starts(
    f: &Polynomial,
    t: f64,
    radius: f64,
    starts: &[Vec<f64>],
    dedup: f64,
) -> (Vec<FiberPoint>, SolveStats) {
    let tol = fiber_tol(t);
    let outcomes: Vec<Outcome> = starts
        .par_iter()
        .map(|s| newton_on_fiber(f, t, radius, s, tol))
        .collect();
    let mut stats = SolveStats {
        starts: starts.len(),
        ..Default::default()
    };
    let mut found = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Converged(x, res) => {
                stats.converged += 1;
                found.push((x, res));
            }
            Outcome::NonFinite => stats.nonfinite += 1,
            Outcome::Stalled => stats.unconverged += 1,
        }
    }
    if stats.nonfinite > 0 {
        log::debug!("{} fiber starts hit non-finite values at R = {radius}", stats.nonfinite);
    }
    // thin in direction space, keeping the lexicographically first point
    found.sort_by(|a, b| crate::geom::lex_cmp(&a.0, &b.0));
    let n = f.n_vars();
    let mut hash = SpatialHash::new(n, dedup);
    let mut kept: Vec<FiberPoint> = Vec::new();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for (x, residual) in found {
        let u = normalized(&x);
        let mut clash = false;
        hash.for_each_near(&u, |j| {
            if !clash && crate::geom::dist(&u, &dirs[j]) < dedup {
                clash = true;
            }
        });
        if clash {
            continue;
        }
        hash.insert(dirs.len(), &u);
        dirs.push(u);
        kept.push(FiberPoint {
            radius: crate::geom::norm(&x),
            x,
            t,
            residual,
        });
    }
    (kept, stats)
}

/// Points of `f = t` on the sphere of radius `radius`, from `n_starts`
/// quasi-uniform starts. An empty list means the fiber was not found on
/// that sphere.
pub fn solve_fiber_on_sphere(
    f: &Polynomial,
    t: f64,
    radius: f64,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<FiberPoint>, FiberError> {
    Ok(solve_fiber_on_sphere_with_stats(f, t, radius, n_starts, seed)?.0)
}

pub fn solve_fiber_on_sphere_with_stats(
    f: &Polynomial,
    t: f64,
    radius: f64,
    n_starts: usize,
    seed: u64,
) -> Result<(Vec<FiberPoint>, SolveStats), FiberError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(FiberError::InvalidRadius(radius));
    }
    if n_starts == 0 {
        return Err(FiberError::NoStarts);
    }
    let starts = sphere_starts(f.n_vars(), n_starts, seed);
    Ok(solve_from_starts(f, t, radius, &starts, 1e-9))
}

/// How the direction clouds behaved along the radius schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostic {
    pub t: f64,
    pub mesh: f64,
    pub radii: Vec<f64>,
    pub cloud_sizes: Vec<usize>,
    /// Extrinsic Hausdorff distance between consecutive clouds.
    pub steps: Vec<f64>,
    /// max |f_d(u)| over the final cloud.
    pub top_form_residual: f64,
    /// top_form_residual · R_last.
    pub kappa: f64,
    /// |t| + sum over lower homogeneous parts of their sampled max on the sphere.
    pub kappa_bound: f64,
    pub converged: bool,
    /// No radius produced a fiber point: the fiber may be compact.
    pub escapes_detection: bool,
    pub stats: Vec<SolveStats>,
}

impl ConvergenceDiagnostic {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnostic serializes")
    }
}

/// Cap on starts per radius.
const MAX_STARTS: usize = 400_000;

/// Default number of starts per radius for a target mesh: a lattice with
/// spacing `mesh` on the sphere.
pub fn default_starts(n: usize, mesh: f64) -> usize {
    starts_for_spacing(n, mesh).min(MAX_STARTS)
}

/// Settings for estimating D_∞(t) shared by the profile operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mesh: f64,
    pub schedule: RadiusSchedule,
    pub seed: u64,
    /// Starts per radius; `None` means [`default_starts`].
    pub starts: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mesh: 0.02,
            schedule: RadiusSchedule::default(),
            seed: 0,
            starts: None,
        }
    }
}

impl EstimatorConfig {
    pub fn estimate(&self, f: &Polynomial, t: f64) -> Result<(DirectionSet, ConvergenceDiagnostic), FiberError> {
        let starts = self.starts.unwrap_or_else(|| default_starts(f.n_vars(), self.mesh));
        estimate_directions_with_starts(f, t, &self.schedule, self.mesh, self.seed, starts)
    }
}

/// Directions of fiber points on each sphere of `schedule`; the cloud at the
/// last radius is the estimate.
pub fn estimate_directions_at_infinity(
    f: &Polynomial,
    t: f64,
    schedule: &RadiusSchedule,
    mesh: f64,
    seed: u64,
) -> Result<(DirectionSet, ConvergenceDiagnostic), FiberError> {
    let starts = default_starts(f.n_vars(), mesh);
    estimate_directions_with_starts(f, t, schedule, mesh, seed, starts)
}

pub fn estimate_directions_with_starts(
    f: &Polynomial,
    t: f64,
    schedule: &RadiusSchedule,
    mesh: f64,
    seed: u64,
    n_starts: usize,
) -> Result<(DirectionSet, ConvergenceDiagnostic), FiberError> {
    if schedule.count < 3 {
        return Err(FiberError::InvalidSchedule(format!(
            "need at least 3 radii, got {}",
            schedule.count
        )));
    }
    if !(mesh > 0.0 && mesh <= 0.5) {
        return Err(DirectionsError::InvalidMesh(mesh).into());
    }
    if n_starts == 0 {
        return Err(FiberError::NoStarts);
    }
    let n = f.n_vars();
    let top = f.top_form()?;
    let starts = sphere_starts(n, n_starts, seed);
    let radii = schedule.radii();
    let mut clouds = Vec::with_capacity(radii.len());
    let mut stats = Vec::with_capacity(radii.len());
    for &r in &radii {
        let (pts, st) = solve_from_starts(f, t, r, &starts, 0.5 * mesh);
        let dirs = pts.into_iter().map(|p| p.x).collect();
        let cloud = DirectionSet::deduplicated(n, dirs, mesh, Provenance::Fiber { t, radius: r })?;
        log::debug!("t = {t}, R = {r}: {} directions from {} solves", cloud.len(), st.converged);
        clouds.push(cloud);
        stats.push(st);
    }
    let steps: Vec<f64> = clouds
        .windows(2)
        .map(|w| hausdorff_extrinsic(&w[0], &w[1]))
        .collect::<Result<_, _>>()?;
    let last = clouds.pop().expect("schedule is nonempty");
    let r_last = schedule.last();
    let top_form_residual = last
        .points()
        .iter()
        .map(|u| top.value(u).abs())
        .fold(0.0, f64::max);
    let escapes_detection = stats.iter().all(|s| s.converged == 0);
    let converged = !escapes_detection && steps_settle(&steps, mesh);
    let diag = ConvergenceDiagnostic {
        t,
        mesh,
        cloud_sizes: clouds.iter().map(DirectionSet::len).chain([last.len()]).collect(),
        radii,
        steps,
        top_form_residual,
        kappa: top_form_residual * r_last,
        kappa_bound: t.abs() + lower_parts_bound(f, seed)?,
        converged,
        escapes_detection,
        stats,
    };
    Ok((last, diag))
}

/// True when the steps shrink from their largest value on and the last one
/// is within two meshes. Steps before the peak come from radii that are not
/// yet asymptotic. Once both neighbours are at sampling resolution (≤ 2 mesh)
/// their order is noise and is not held against convergence.
pub fn steps_settle(steps: &[f64], mesh: f64) -> bool {
    let Some(&last) = steps.last() else {
        return false;
    };
    let floor = 2.0 * mesh;
    let peak = steps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    last <= floor
        && steps[peak..]
            .windows(2)
            .all(|w| w[1] < w[0] || (w[0] <= floor && w[1] <= floor))
}

/// Sampled sum over i < d of max over the unit sphere of |f_i|.
pub fn lower_parts_bound(f: &Polynomial, seed: u64) -> Result<f64, FiberError> {
    let parts = f.homogeneous_decomposition()?;
    let d = parts.len() - 1;
    let n = f.n_vars();
    let samples = sphere_starts(n, 20_000, seed ^ 0x5eed);
    Ok(parts[..d]
        .iter()
        .map(|p| {
            if p.is_zero() {
                0.0
            } else {
                samples.iter().map(|u| p.value(u).abs()).fold(0.0, f64::max)
            }
        })
        .sum())
}
