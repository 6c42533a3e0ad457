//! Numerical search for asymptotic critical values: local minima of the
//! Rabier quantity ‖x‖‖∇f(x)‖ on growing spheres, linked across radii into
//! branches whose decay and fiber values are then classified.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fibers::RadiusSchedule;
use crate::geom::{dist, dot, norm, normalize, normalized, sphere_starts};
use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum MalgrangeError {
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("at least one start is required")]
    NoStarts,
    #[error("scan needs at least 4 radii, got {0}")]
    ScheduleTooShort(usize),
    #[error("invalid scan range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("witness sequence needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("witness norms must increase strictly (index {0})")]
    NonIncreasingNorms(usize),
    #[error("point {index} has length {got}, polynomial has {expected} variables")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
}

/// A local minimizer of ‖x‖‖∇f(x)‖ on the sphere ‖x‖ = radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabierRecord {
    pub radius: f64,
    pub x_star: Vec<f64>,
    pub rabier: f64,
    pub fiber_value: f64,
}

impl RabierRecord {
    fn new(f: &Polynomial, x: Vec<f64>, radius: f64) -> Self {
        let mut g = vec![0.0; x.len()];
        f.value_and_gradient(&x, &mut g);
        Self {
            radius,
            rabier: norm(&x) * norm(&g),
            fiber_value: f.value_compensated(&x),
            x_star: x,
        }
    }

    pub fn direction(&self) -> Vec<f64> {
        normalized(&self.x_star)
    }
}

/// Result of minimizing on one sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMinima {
    pub radius: f64,
    pub records: Vec<RabierRecord>,
    pub starts: usize,
    /// Starts that did not reach the stationarity test.
    pub dropped: usize,
}

pub const MINIMIZER_MAX_ITER: usize = 400;
/// Minima closer than this angle are the same minimum.
pub const DEDUP_ANGLE: f64 = 1e-3;
/// Projected gradient of ρ must fall below this times max(1, ρ).
pub const STATIONARITY_TOL: f64 = 1e-6;

struct Minimizer<'a> {
    f: &'a Polynomial,
    n: usize,
    radius: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

struct Eval {
    /// ρ = R²‖∇f‖²
    rho: f64,
    /// tangential part of ∇ρ
    pgrad: Vec<f64>,
}

impl Minimizer<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<Eval> {
        self.f.value_gradient_hessian(x, &mut self.grad, &mut self.hess);
        let r2 = self.radius * self.radius;
        let g2 = dot(&self.grad, &self.grad);
        let rho = r2 * g2;
        // ∇ρ = 2R² H g, projected to the tangent space of the sphere
        let n = self.n;
        let mut pg: Vec<f64> = (0..n)
            .map(|i| 2.0 * r2 * (0..n).map(|j| self.hess[i * n + j] * self.grad[j]).sum::<f64>())
            .collect();
        let u = normalized(x);
        let radial = dot(&pg, &u);
        pg.iter_mut().zip(&u).for_each(|(p, ui)| *p -= radial * ui);
        if !rho.is_finite() || pg.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Eval { rho, pgrad: pg })
    }

    fn rho(&mut self, x: &[f64]) -> f64 {
        self.f.value_and_gradient(x, &mut self.grad);
        self.radius * self.radius * dot(&self.grad, &self.grad)
    }

    fn stationary(e: &Eval) -> bool {
        norm(&e.pgrad) <= STATIONARITY_TOL * e.rho.max(1.0)
    }

    /// Levenberg–Marquardt on the residual ∇f restricted to the tangent
    /// space, with retraction to the sphere and a sufficient-decrease test.
    fn run(&mut self, start: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let mut x: Vec<f64> = normalized(start).iter().map(|v| v * self.radius).collect();
        let mut e = self.eval(&x)?;
        let mut mu = 1e-3;
        for _ in 0..MINIMIZER_MAX_ITER {
            if Self::stationary(&e) {
                return Some(x);
            }
            let u = normalized(&x);
            // Gauss–Newton matrix P HᵀH P with the radial direction pinned
            let h = DMatrix::from_row_slice(n, n, &self.hess);
            let p = DMatrix::identity(n, n) - DVector::from_column_slice(&u) * DVector::from_column_slice(&u).transpose();
            let hp = &h * &p;
            let jtj = hp.transpose() * &hp;
            let scale = jtj.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let g = DVector::from_column_slice(&self.grad);
            let rhs = -(hp.transpose() * &g);
            let uu = DVector::from_column_slice(&u) * DVector::from_column_slice(&u).transpose();
            let mut accepted = false;
            for _ in 0..30 {
                let m = &jtj + &p * (mu * scale) + &uu * scale;
                let Some(d) = m.lu().solve(&rhs) else {
                    mu *= 10.0;
                    continue;
                };
                let mut step: Vec<f64> = d.iter().copied().collect();
                let len = norm(&step);
                if !len.is_finite() {
                    mu *= 10.0;
                    continue;
                }
                let cap = 0.25 * self.radius;
                if len > cap {
                    step.iter_mut().for_each(|v| *v *= cap / len);
                }
                let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                normalize(&mut trial);
                trial.iter_mut().for_each(|v| *v *= self.radius);
                let rho_t = self.rho(&trial);
                // Armijo test against the first-order prediction
                let predicted = dot(&e.pgrad, &step);
                if rho_t.is_finite() && rho_t <= e.rho + 1e-4 * predicted.min(0.0) && rho_t < e.rho {
                    x = trial;
                    e = self.eval(&x)?;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                mu *= 4.0;
            }
            if !accepted {
                // no decrease possible at working precision
                return if Self::stationary(&e) { Some(x) } else { None };
            }
        }
        if Self::stationary(&e) {
            Some(x)
        } else {
            None
        }
    }
}

/// Local minima of ‖x‖‖∇f(x)‖ on the sphere of radius `radius`.
pub fn rabier_minima_on_sphere(
    f: &Polynomial,
    radius: f64,
    n_starts: usize,
    seed: u64,
) -> Result<SphereMinima, MalgrangeError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MalgrangeError::InvalidRadius(radius));
    }
    if n_starts == 0 {
        return Err(MalgrangeError::NoStarts);
    }
    let n = f.n_vars();
    let starts = sphere_starts(n, n_starts, seed);
    let found: Vec<Option<Vec<f64>>> = starts
        .par_iter()
        .map(|s| {
            let mut m = Minimizer {
                f,
                n,
                radius,
                grad: vec![0.0; n],
                hess: vec![0.0; n * n],
            };
            m.run(s)
        })
        .collect();
    let dropped = found.iter().filter(|o| o.is_none()).count();
    let mut records: Vec<RabierRecord> = Vec::new();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let mut converged: Vec<Vec<f64>> = found.into_iter().flatten().collect();
    converged.sort_by(|a, b| crate::geom::lex_cmp(a, b));
    for x in converged {
        let u = normalized(&x);
        if dirs.iter().any(|d| angle(d, &u) < DEDUP_ANGLE) {
            continue;
        }
        dirs.push(u);
        records.push(RabierRecord::new(f, x, radius));
    }
    records.sort_by(record_order);
    Ok(SphereMinima {
        radius,
        records,
        starts: n_starts,
        dropped,
    })
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    2.0 * (0.5 * dist(a, b)).min(1.0).asin()
}

fn record_order(a: &RabierRecord, b: &RabierRecord) -> std::cmp::Ordering {
    a.fiber_value
        .total_cmp(&b.fiber_value)
        .then_with(|| crate::geom::lex_cmp(&a.x_star, &b.x_star))
}

/// Decay classification of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchClass {
    /// Rabier decays and fiber values settle: evidence for an asymptotic
    /// critical value.
    Candidate,
    /// Rabier grows at least like R^{1/2}.
    Cleared,
    /// Neither; or too few radii to tell.
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Slope at most −1/2 over at least four radii.
    Strong,
    /// Slope at most −1/4 over at least four radii.
    Moderate,
    /// Three radii only.
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub records: Vec<RabierRecord>,
    /// Least-squares slope of log(rabier) against log(R).
    pub slope: f64,
    /// Extrapolated limit of the fiber values.
    pub limit: f64,
    pub cauchy: bool,
    pub class: BranchClass,
    /// Set when the first record was also within the linking gate of this
    /// other branch, which continued elsewhere.
    pub split_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub slope: f64,
    pub confidence: Confidence,
    pub branches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub radius: f64,
    pub min_rabier: f64,
    pub minima: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub range: (f64, f64),
    pub candidates: Vec<Candidate>,
    pub cleared: Vec<(f64, f64)>,
    pub branches: Vec<Branch>,
    pub radii: Vec<RadiusSummary>,
    pub splits: usize,
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scan report serializes")
    }
}

/// Gate for linking records across radii, in the coordinates
/// (x/‖x‖, v/(1+|v|)) where v is the fiber value.
pub const LINK_GATE: f64 = 0.2;
pub const CANDIDATE_SLOPE: f64 = -0.25;
pub const CLEAR_SLOPE: f64 = 0.5;
/// Candidates whose values are this close are reported once.
pub const CANDIDATE_MERGE: f64 = 0.05;
/// Half-width of the window kept out of the cleared set around the value of
/// every branch that is not cleared.
pub const OBSTRUCTION_WINDOW: f64 = 0.05;

fn link_coords(r: &RabierRecord) -> Vec<f64> {
    let mut c = r.direction();
    c.push(r.fiber_value / (1.0 + r.fiber_value.abs()));
    c
}

/// Minimizes on every radius of `schedule`, links the minima into branches
/// and classifies them. Candidate values and cleared intervals are reported
/// within `range`.
pub fn scan_asymptotic_critical_values(
    f: &Polynomial,
    schedule: &RadiusSchedule,
    n_starts: usize,
    seed: u64,
    range: (f64, f64),
) -> Result<ScanReport, MalgrangeError> {
    if schedule.count < 4 {
        return Err(MalgrangeError::ScheduleTooShort(schedule.count));
    }
    if !(range.0 <= range.1) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(MalgrangeError::InvalidRange(range.0, range.1));
    }
    let levels: Vec<SphereMinima> = schedule
        .radii()
        .into_iter()
        .map(|r| rabier_minima_on_sphere(f, r, n_starts, seed))
        .collect::<Result<_, _>>()?;
    let (mut branches, splits) = link_branches(&levels);
    for b in &mut branches {
        classify(b);
    }
    let candidates = collect_candidates(&branches, range);
    let cleared = cleared_intervals(&branches, range);
    let radii = levels
        .iter()
        .map(|l| RadiusSummary {
            radius: l.radius,
            min_rabier: l.records.iter().map(|r| r.rabier).fold(f64::INFINITY, f64::min),
            minima: l.records.len(),
            dropped: l.dropped,
        })
        .collect();
    Ok(ScanReport {
        range,
        candidates,
        cleared,
        branches,
        radii,
        splits,
    })
}

/// Greedy nearest-pair matching between the ends of open branches and the
/// records of the next radius. A branch may skip one radius.
fn link_branches(levels: &[SphereMinima]) -> (Vec<Branch>, usize) {
    let mut branches: Vec<Branch> = Vec::new();
    // level index of each branch's last record
    let mut last_level: Vec<usize> = Vec::new();
    let mut splits = 0;
    for (k, level) in levels.iter().enumerate() {
        let coords: Vec<Vec<f64>> = level.records.iter().map(link_coords).collect();
        let open: Vec<usize> = (0..branches.len())
            .filter(|&b| last_level[b] + 2 >= k && last_level[b] < k)
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &b in &open {
            let end = link_coords(branches[b].records.last().expect("branches are nonempty"));
            for (j, c) in coords.iter().enumerate() {
                let d = dist(&end, c);
                if d <= LINK_GATE {
                    pairs.push((d, b, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut branch_taken = vec![false; branches.len()];
        let mut record_owner: Vec<Option<usize>> = vec![None; level.records.len()];
        for &(_, b, j) in &pairs {
            if !branch_taken[b] && record_owner[j].is_none() {
                branch_taken[b] = true;
                record_owner[j] = Some(b);
            }
        }
        for (j, rec) in level.records.iter().enumerate() {
            match record_owner[j] {
                Some(b) => {
                    branches[b].records.push(rec.clone());
                    last_level[b] = k;
                }
                None => {
                    // a record in reach of an already continued branch is a split
                    let split_from = pairs.iter().find(|p| p.2 == j).map(|p| p.1);
                    if split_from.is_some() {
                        splits += 1;
                        log::info!("branch split at R = {}", rec.radius);
                    }
                    branches.push(Branch {
                        id: branches.len(),
                        records: vec![rec.clone()],
                        slope: f64::NAN,
                        limit: rec.fiber_value,
                        cauchy: false,
                        class: BranchClass::Undetermined,
                        split_from,
                    });
                    last_level.push(k);
                }
            }
        }
    }
    (branches, splits)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x.ln(), y.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return f64::NAN;
    }
    sxy / sxx
}

/// True when the successive differences of `v` do not grow over the last
/// three and the final difference is small relative to the value.
pub fn is_cauchy(v: &[f64]) -> bool {
    if v.len() < 3 || v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let d: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let tail = &d[d.len().saturating_sub(3)..];
    let shrinking = tail.windows(2).all(|w| w[1] <= w[0] * 1.0001 + 1e-15);
    let last = *d.last().expect("at least two differences");
    shrinking && last <= 0.1 * v.last().expect("nonempty").abs().max(1.0)
}

/// Aitken Δ² extrapolation of the last three terms; falls back to the last
/// term when the second difference vanishes or the jump is implausible.
pub fn extrapolate_limit(v: &[f64]) -> f64 {
    let m = v.len();
    let last = v[m - 1];
    if m < 3 {
        return last;
    }
    let (a, b, c) = (v[m - 3], v[m - 2], v[m - 1]);
    let denom = (c - b) - (b - a);
    if denom.abs() < 1e-300 {
        return last;
    }
    let lim = c - (c - b) * (c - b) / denom;
    if lim.is_finite() && (lim - c).abs() <= 10.0 * (c - b).abs() {
        lim
    } else {
        last
    }
}

fn classify(b: &mut Branch) {
    let radii: Vec<f64> = b.records.iter().map(|r| r.radius).collect();
    let rab: Vec<f64> = b.records.iter().map(|r| r.rabier).collect();
    let vals: Vec<f64> = b.records.iter().map(|r| r.fiber_value).collect();
    b.cauchy = is_cauchy(&vals);
    b.limit = if b.cauchy {
        extrapolate_limit(&vals)
    } else {
        *vals.last().expect("nonempty")
    };
    if b.records.len() < 3 {
        b.class = BranchClass::Undetermined;
        return;
    }
    b.slope = loglog_slope(&radii, &rab);
    b.class = if b.slope <= CANDIDATE_SLOPE && b.cauchy {
        BranchClass::Candidate
    } else if b.slope >= CLEAR_SLOPE {
        BranchClass::Cleared
    } else {
        BranchClass::Undetermined
    };
}

fn collect_candidates(branches: &[Branch], range: (f64, f64)) -> Vec<Candidate> {
    let mut cands: Vec<&Branch> = branches
        .iter()
        .filter(|b| b.class == BranchClass::Candidate)
        .filter(|b| b.limit >= range.0 - CANDIDATE_MERGE && b.limit <= range.1 + CANDIDATE_MERGE)
        .collect();
    cands.sort_by(|a, b| a.limit.total_cmp(&b.limit).then(a.id.cmp(&b.id)));
    let mut out: Vec<Candidate> = Vec::new();
    let mut group: Vec<&Branch> = Vec::new();
    let flush = |group: &mut Vec<&Branch>, out: &mut Vec<Candidate>| {
        if group.is_empty() {
            return;
        }
        // the branch seen over the most radii speaks for the group
        let lead = group
            .iter()
            .max_by(|a, b| a.records.len().cmp(&b.records.len()).then(b.id.cmp(&a.id)))
            .expect("group is nonempty");
        let slope = group.iter().map(|b| b.slope).fold(f64::NEG_INFINITY, f64::max);
        let confidence = if lead.records.len() >= 4 && slope <= -0.5 {
            Confidence::Strong
        } else if lead.records.len() >= 4 {
            Confidence::Moderate
        } else {
            Confidence::Weak
        };
        out.push(Candidate {
            value: lead.limit,
            slope,
            confidence,
            branches: group.iter().map(|b| b.id).collect(),
        });
        group.clear();
    };
    for b in cands {
        if let Some(prev) = group.last() {
            if b.limit - prev.limit > CANDIDATE_MERGE {
                flush(&mut group, &mut out);
            }
        }
        group.push(b);
    }
    flush(&mut group, &mut out);
    out
}

/// `range` with a window removed around the value of every branch that is
/// not cleared; what remains is where only growing branches were seen.
fn cleared_intervals(branches: &[Branch], range: (f64, f64)) -> Vec<(f64, f64)> {
    let mut holes: Vec<(f64, f64)> = branches
        .iter()
        .filter(|b| b.class != BranchClass::Cleared)
        .map(|b| {
            let tail: Vec<f64> = b.records.iter().rev().take(2).map(|r| r.fiber_value).collect();
            let spread = tail.iter().map(|v| (v - b.limit).abs()).fold(0.0, f64::max);
            let w = OBSTRUCTION_WINDOW.max(spread);
            (b.limit - w, b.limit + w)
        })
        .collect();
    holes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut cursor = range.0;
    for (lo, hi) in holes {
        if hi < cursor {
            continue;
        }
        if lo > range.1 {
            break;
        }
        if lo > cursor {
            out.push((cursor, lo));
        }
        cursor = cursor.max(hi);
    }
    if cursor < range.1 {
        out.push((cursor, range.1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRow {
    pub norm: f64,
    pub value: f64,
    pub rabier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum WitnessVerdict {
    /// The sequence is evidence that `value` is an asymptotic critical value.
    Supports { value: f64 },
    NotAWitness { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub rows: Vec<WitnessRow>,
    pub slope: f64,
    pub verdict: WitnessVerdict,
}

/// Tabulates norm, value and Rabier quantity along a sequence of points
/// going to infinity, and judges whether it witnesses an asymptotic
/// critical value.
pub fn check_witness_sequence(f: &Polynomial, points: &[Vec<f64>]) -> Result<WitnessReport, MalgrangeError> {
    if points.len() < 5 {
        return Err(MalgrangeError::TooFewPoints(points.len()));
    }
    let n = f.n_vars();
    let mut rows = Vec::with_capacity(points.len());
    let mut grad = vec![0.0; n];
    for (i, p) in points.iter().enumerate() {
        if p.len() != n {
            return Err(MalgrangeError::DimensionMismatch {
                index: i,
                expected: n,
                got: p.len(),
            });
        }
        f.value_and_gradient(p, &mut grad);
        let r = norm(p);
        if let Some(prev) = rows.last().map(|w: &WitnessRow| w.norm) {
            if !(r > prev) {
                return Err(MalgrangeError::NonIncreasingNorms(i));
            }
        }
        rows.push(WitnessRow {
            norm: r,
            value: f.value_compensated(p),
            rabier: r * norm(&grad),
        });
    }
    let norms: Vec<f64> = rows.iter().map(|r| r.norm).collect();
    let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let rab: Vec<f64> = rows.iter().map(|r| r.rabier).collect();
    let tail = rows.len().min(10).max(5);
    let k0 = rows.len() - tail;
    let slope = loglog_slope(&norms[k0..], &rab[k0..]);
    let verdict = if !is_cauchy(&vals) {
        WitnessVerdict::NotAWitness {
            reason: "values do not settle".into(),
        }
    } else if !(slope < 0.0) {
        WitnessVerdict::NotAWitness {
            reason: format!("Rabier quantity does not decay (slope {slope:.3})"),
        }
    } else {
        // last value against the power law fitted through the tail
        let m = rows.len();
        let predicted = rab[m - 2] * (norms[m - 1] / norms[m - 2]).powf(slope);
        if rab[m - 1] <= 10.0 * predicted {
            WitnessVerdict::Supports {
                value: extrapolate_limit(&vals),
            }
        } else {
            WitnessVerdict::NotAWitness {
                reason: "Rabier quantity stalls".into(),
            }
        }
    };
    Ok(WitnessReport { rows, slope, verdict })
}
