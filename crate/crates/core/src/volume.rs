//! (n−2)-volume of direction sets, from covering numbers in any dimension
//! and from Cauchy–Crofton crossing counts for curves on S².

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directions::{covering_number, DirectionSet, DirectionsError};
use crate::fibers::{EstimatorConfig, FiberError};
use crate::geom::{dot, random_unit_vector, rng_for};
use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("need at least 3 covering radii, got {0}")]
    TooFewEps(usize),
    #[error("covering radii must be positive and strictly decreasing")]
    EpsNotDecreasing,
    #[error("smallest covering radius {eps} is below 4 meshes ({mesh})")]
    CloudTooSparse { eps: f64, mesh: f64 },
    #[error("crossing counts need directions on S² (n = 3), got n = {0}")]
    NotCurveOnSphere(usize),
    #[error("graph is not curve-like: median degree {0} exceeds 4")]
    NotCurveLike(f64),
    #[error("at least one circle is required")]
    NoCircles,
    #[error("t grid must be sorted")]
    UnsortedGrid,
    #[error(transparent)]
    Directions(#[from] DirectionsError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    Covering,
    Crofton,
}

impl VolumeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Covering => "covering",
            Self::Crofton => "crofton",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodParameter {
    Eps(Vec<f64>),
    Samples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeStatus {
    Ok,
    /// No part of dimension n−2 was seen; the value is 0 by convention.
    LowerDimensional,
}

impl VolumeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::LowerDimensional => "lower_dimensional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub method: VolumeMethod,
    pub eps_or_samples: MethodParameter,
    pub error_bar: f64,
    pub status: VolumeStatus,
}

/// Covering numbers of sets of dimension n−2 behave like V·(c/ε)^{n−2}.
/// The constant belongs to the octave-averaged farthest-point count below
/// and was fitted on great-circle arcs of angles kπ/4, k = 1..8, sampled at
/// spacing 0.002 with ε from 0.008 to 0.064; the unit test
/// `calibration_constant_reproduces` refits it.
pub const COVERING_CALIBRATION: f64 = 0.706;

/// Sub-radii per octave when averaging covering counts.
const OCTAVE_SAMPLES: usize = 16;

/// Mean of M̂(ε')·(ε'/ε)^k over ε' log-uniform in [ε, 2ε). Farthest-point
/// counts are staircases in log ε with one step per octave; the average
/// removes the phase of the staircase.
pub fn octave_averaged_covering(a: &DirectionSet, eps: f64, k: i32) -> Result<f64, DirectionsError> {
    let mut sum = 0.0;
    for j in 0..OCTAVE_SAMPLES {
        let e = eps * 2f64.powf(j as f64 / OCTAVE_SAMPLES as f64);
        sum += covering_number(a, e)? as f64 * (e / eps).powi(k);
    }
    Ok(sum / OCTAVE_SAMPLES as f64)
}

fn check_eps(a: &DirectionSet, eps: &[f64]) -> Result<(), VolumeError> {
    if eps.len() < 3 {
        return Err(VolumeError::TooFewEps(eps.len()));
    }
    if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(VolumeError::EpsNotDecreasing);
    }
    let min = *eps.last().expect("nonempty");
    if min < 4.0 * a.mesh() * (1.0 - 1e-12) {
        return Err(VolumeError::CloudTooSparse { eps: min, mesh: a.mesh() });
    }
    if a.is_empty() {
        return Err(DirectionsError::Empty.into());
    }
    Ok(())
}

/// Fits M̄(ε) = a + V·(c/ε)^{n−2} on each run of three consecutive radii;
/// the value is the mean of the fitted V and the error bar half their range.
pub fn estimate_volume_covering(a: &DirectionSet, eps_list: &[f64]) -> Result<VolumeEstimate, VolumeError> {
    check_eps(a, eps_list)?;
    let k = a.n() as i32 - 2;
    let counts: Vec<f64> = eps_list
        .iter()
        .map(|&e| octave_averaged_covering(a, e, k))
        .collect::<Result<_, _>>()?;
    let param = MethodParameter::Eps(eps_list.to_vec());
    if k == 0 {
        // zero-dimensional volume is a point count
        let v = *counts.last().expect("nonempty");
        let spread = counts.iter().fold(0.0f64, |m, c| m.max((c - v).abs()));
        return Ok(VolumeEstimate {
            value: v,
            method: VolumeMethod::Covering,
            eps_or_samples: param,
            error_bar: spread,
            status: VolumeStatus::Ok,
        });
    }
    let scale = COVERING_CALIBRATION.powi(k);
    let fits: Vec<f64> = eps_list
        .windows(3)
        .zip(counts.windows(3))
        .map(|(e, m)| {
            let xs: Vec<f64> = e.iter().map(|v| v.powi(-k)).collect();
            (slope(&xs, m) / scale).max(0.0)
        })
        .collect();
    let value = fits.iter().sum::<f64>() / fits.len() as f64;
    let (lo, hi) = fits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let status = if counts.iter().all(|&c| c == counts[0]) {
        VolumeStatus::LowerDimensional
    } else {
        VolumeStatus::Ok
    };
    Ok(VolumeEstimate {
        value,
        method: VolumeMethod::Covering,
        eps_or_samples: param,
        error_bar: 0.5 * (hi - lo),
        status,
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Default covering radii for a cloud of the given mesh: 16, 8 and 4 meshes.
pub fn default_eps(mesh: f64) -> Vec<f64> {
    vec![16.0 * mesh, 8.0 * mesh, 4.0 * mesh]
}

/// A vertex this close to a circle is a tangential touch.
const TOUCH: f64 = 1e-12;

/// Crossings of the attached graph with one random great circle per index.
/// Index i uses its own generator, so counts do not depend on scheduling.
pub fn crossing_counts(a: &DirectionSet, n_circles: usize, seed: u64) -> Result<Vec<usize>, VolumeError> {
    if a.n() != 3 {
        return Err(VolumeError::NotCurveOnSphere(a.n()));
    }
    if n_circles == 0 {
        return Err(VolumeError::NoCircles);
    }
    let g = a.graph().ok_or(DirectionsError::MissingGraph)?;
    let edges: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
    let touched: Vec<usize> = {
        let mut v: Vec<usize> = edges.iter().flat_map(|&(i, j)| [i, j]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let pts = a.points();
    Ok((0..n_circles)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut side = vec![0.0; pts.len()];
            loop {
                let pole = random_unit_vector(&mut rng, 3);
                let mut touch = false;
                for &k in &touched {
                    side[k] = dot(&pole, &pts[k]);
                    touch |= side[k].abs() < TOUCH;
                }
                if !touch {
                    break;
                }
            }
            edges.iter().filter(|&&(p, q)| side[p] * side[q] < 0.0).count()
        })
        .collect())
}

/// Length of the attached graph, read as a union of geodesic segments,
/// by the Cauchy–Crofton formula: π times the mean number of crossings
/// with a uniformly random great circle.
pub fn estimate_length_crofton(a: &DirectionSet, n_circles: usize, seed: u64) -> Result<VolumeEstimate, VolumeError> {
    if a.n() != 3 {
        return Err(VolumeError::NotCurveOnSphere(a.n()));
    }
    let g = a.graph().ok_or(DirectionsError::MissingGraph)?;
    let param = MethodParameter::Samples(n_circles);
    if g.edge_count() == 0 {
        if n_circles == 0 {
            return Err(VolumeError::NoCircles);
        }
        return Ok(VolumeEstimate {
            value: 0.0,
            method: VolumeMethod::Crofton,
            eps_or_samples: param,
            error_bar: 0.0,
            status: VolumeStatus::LowerDimensional,
        });
    }
    let med = g.median_degree();
    if med > 4.0 {
        return Err(VolumeError::NotCurveLike(med));
    }
    let counts = crossing_counts(a, n_circles, seed)?;
    let m = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / m;
    let var = if counts.len() > 1 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(VolumeEstimate {
        value: std::f64::consts::PI * mean,
        method: VolumeMethod::Crofton,
        eps_or_samples: param,
        error_bar: std::f64::consts::PI * (var / m).sqrt(),
        status: VolumeStatus::Ok,
    })
}

/// Components whose chordal diameter stays below this many meshes are
/// treated as isolated points.
pub const POINT_LIKE_DIAMETER: f64 = 4.0;

/// Drops components of diameter below `POINT_LIKE_DIAMETER` meshes and
/// attaches the curve skeleton to what is left.
pub fn curve_part(a: &DirectionSet) -> Result<DirectionSet, VolumeError> {
    let eps = a.default_graph_eps();
    let labels = a.components();
    let mut lo: Vec<Vec<f64>> = Vec::new();
    let mut hi: Vec<Vec<f64>> = Vec::new();
    let mut keys: Vec<usize> = labels.clone();
    keys.sort_unstable();
    keys.dedup();
    let mut keep = vec![false; a.len()];
    for key in keys {
        let members: Vec<usize> = (0..a.len()).filter(|&i| labels[i] == key).collect();
        lo.clear();
        hi.clear();
        // diameter of the bounding box is within √n of the true diameter
        // and is enough to tell a point from a curve
        let n = a.n();
        let mut bmin = vec![f64::INFINITY; n];
        let mut bmax = vec![f64::NEG_INFINITY; n];
        for &i in &members {
            for d in 0..n {
                bmin[d] = bmin[d].min(a.points()[i][d]);
                bmax[d] = bmax[d].max(a.points()[i][d]);
            }
        }
        let diag = bmin.iter().zip(&bmax).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt();
        if diag >= POINT_LIKE_DIAMETER * a.mesh() {
            members.iter().for_each(|&i| keep[i] = true);
        }
    }
    let pts: Vec<Vec<f64>> = a
        .points()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(p, _)| p.clone())
        .collect();
    let kept = DirectionSet::new(a.n(), pts, a.mesh(), a.provenance())?;
    Ok(kept.with_curve_graph(eps)?)
}

/// Volume of a direction set: crossing counts on its curve part when n = 3,
/// covering numbers otherwise.
pub fn estimate_set_volume(a: &DirectionSet, n_circles: usize, seed: u64, eps: &[f64]) -> Result<VolumeEstimate, VolumeError> {
    if a.n() == 3 {
        let curves = curve_part(a)?;
        if curves.is_empty() {
            return Ok(VolumeEstimate {
                value: 0.0,
                method: VolumeMethod::Crofton,
                eps_or_samples: MethodParameter::Samples(n_circles),
                error_bar: 0.0,
                status: VolumeStatus::LowerDimensional,
            });
        }
        estimate_length_crofton(&curves, n_circles, seed)
    } else {
        estimate_volume_covering(a, eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeConfig {
    pub estimator: EstimatorConfig,
    pub n_circles: usize,
    /// Covering radii; `None` means [`default_eps`] of the mesh.
    pub eps: Option<Vec<f64>>,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            n_circles: 400,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEntry {
    pub t: f64,
    pub estimate: Option<VolumeEstimate>,
    pub converged: bool,
    pub error: Option<String>,
}

impl VolumeEntry {
    pub fn status(&self) -> &'static str {
        match (&self.estimate, &self.error) {
            (Some(e), _) => e.status.as_str(),
            (None, _) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quotient {
    pub t1: f64,
    pub t2: f64,
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub entries: Vec<VolumeEntry>,
    /// |vol(t_i+1) − vol(t_i)| / |t_i+1 − t_i| for adjacent grid points with
    /// both volumes available.
    pub quotients: Vec<Quotient>,
}

impl VolumeProfile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("volume profile serializes")
    }

    /// CSV with columns t, volume, error_bar, method, status.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), VolumeError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "volume", "error_bar", "method", "status"])?;
        for e in &self.entries {
            let (v, eb, m) = match &e.estimate {
                Some(est) => (est.value.to_string(), est.error_bar.to_string(), est.method.as_str()),
                None => ("NaN".into(), "NaN".into(), ""),
            };
            w.write_record([e.t.to_string(), v, eb, m.to_string(), e.status().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimates D_∞(t) and its volume at each grid point. Every t uses the
/// same seed, so the random circles are shared across the grid. Failures
/// are recorded per entry.
pub fn volume_profile(f: &Polynomial, t_grid: &[f64], config: &VolumeConfig) -> Result<VolumeProfile, VolumeError> {
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(VolumeError::UnsortedGrid);
    }
    let eps = config
        .eps
        .clone()
        .unwrap_or_else(|| default_eps(config.estimator.mesh));
    let entries: Vec<VolumeEntry> = t_grid
        .iter()
        .map(|&t| {
            let res = config.estimator.estimate(f, t).map_err(VolumeError::from).and_then(|(set, diag)| {
                estimate_set_volume(&set, config.n_circles, config.estimator.seed, &eps).map(|e| (e, diag.converged))
            });
            match res {
                Ok((e, converged)) => VolumeEntry {
                    t,
                    estimate: Some(e),
                    converged,
                    error: None,
                },
                Err(err) => {
                    log::warn!("volume at t = {t}: {err}");
                    VolumeEntry {
                        t,
                        estimate: None,
                        converged: false,
                        error: Some(err.to_string()),
                    }
                }
            }
        })
        .collect();
    let quotients = entries
        .windows(2)
        .filter_map(|w| match (&w[0].estimate, &w[1].estimate) {
            (Some(a), Some(b)) if w[1].t > w[0].t => Some(Quotient {
                t1: w[0].t,
                t2: w[1].t,
                quotient: (b.value - a.value).abs() / (w[1].t - w[0].t),
            }),
            _ => None,
        })
        .collect();
    Ok(VolumeProfile { entries, quotients })
}

/// Points along the great-circle arc from (1,0,0) through (0,1,0) of the
/// given angle, at the given spacing, with consecutive points joined.
pub fn great_circle_arc(angle: f64, spacing: f64) -> Result<DirectionSet, DirectionsError> {
    let closed = angle >= std::f64::consts::TAU - 1e-12;
    let segs = (angle / spacing).ceil().max(1.0) as usize;
    let count = if closed { segs } else { segs + 1 };
    let pts: Vec<Vec<f64>> = (0..count)
        .map(|k| {
            let a = angle * k as f64 / segs as f64;
            vec![a.cos(), a.sin(), 0.0]
        })
        .collect();
    let mesh = spacing.min(0.5);
    let set = DirectionSet::new(3, pts.clone(), mesh, crate::directions::Provenance::Derived)?;
    // map sorted positions back to arc order
    let order: Vec<usize> = pts
        .iter()
        .map(|p| {
            set.points()
                .iter()
                .enumerate()
                .min_by(|a, b| crate::geom::dist(a.1, p).total_cmp(&crate::geom::dist(b.1, p)))
                .map(|(i, _)| i)
                .expect("set is nonempty")
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        edges.push((order[count - 1], order[0]));
    }
    set.with_edges(2.0 * mesh, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::Provenance;
    use crate::fibers::RadiusSchedule;
    use crate::poly::parse;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const CAL_SPACING: f64 = 0.002;
    const CAL_EPS: [f64; 4] = [0.064, 0.032, 0.016, 0.008];

    fn cal_angles() -> Vec<f64> {
        (1..=8).map(|k| k as f64 * PI / 4.0).collect()
    }

    #[test]
    fn calibration_constant_reproduces() {
        // least squares through the origin of covering slope against length
        let mut sbl = 0.0;
        let mut sll = 0.0;
        for ang in cal_angles() {
            let arc = great_circle_arc(ang, CAL_SPACING).unwrap();
            let m: Vec<f64> = CAL_EPS
                .iter()
                .map(|&e| octave_averaged_covering(&arc, e, 1).unwrap())
                .collect();
            let xs: Vec<f64> = CAL_EPS.iter().map(|e| 1.0 / e).collect();
            let b = slope(&xs, &m);
            sbl += b * ang;
            sll += ang * ang;
        }
        let c = sbl / sll;
        assert!((c - COVERING_CALIBRATION).abs() < 0.01 * COVERING_CALIBRATION, "refit c = {c}");
    }

    #[test]
    fn covering_on_circle_and_arcs() {
        for (ang, tol) in [(2.0 * PI, 0.05), (PI / 2.0, 0.05)] {
            let arc = great_circle_arc(ang, CAL_SPACING).unwrap();
            let v = estimate_volume_covering(&arc, &CAL_EPS).unwrap();
            assert!((v.value - ang).abs() <= tol * ang, "{ang}: {v:?}");
            assert_eq!(v.status, VolumeStatus::Ok);
        }
    }

    #[test]
    fn covering_of_a_point_is_zero() {
        let p = DirectionSet::new(3, vec![vec![0.0, 0.0, 1.0]], 0.01, Provenance::Derived).unwrap();
        let v = estimate_volume_covering(&p, &[0.16, 0.08, 0.04]).unwrap();
        assert!(v.value.abs() <= v.error_bar + 1e-15);
        assert_eq!(v.status, VolumeStatus::LowerDimensional);
    }

    #[test]
    fn covering_preconditions() {
        let arc = great_circle_arc(PI, 0.01).unwrap();
        assert!(matches!(estimate_volume_covering(&arc, &[0.2, 0.1]), Err(VolumeError::TooFewEps(2))));
        assert!(matches!(
            estimate_volume_covering(&arc, &[0.1, 0.2, 0.3]),
            Err(VolumeError::EpsNotDecreasing)
        ));
        assert!(matches!(
            estimate_volume_covering(&arc, &[0.2, 0.1, 0.02]),
            Err(VolumeError::CloudTooSparse { .. })
        ));
    }

    #[test]
    fn covering_and_crofton_agree_on_calibration_arcs() {
        for ang in [PI / 4.0, PI / 2.0, PI, 1.5 * PI] {
            let arc = great_circle_arc(ang, CAL_SPACING).unwrap();
            let cov = estimate_volume_covering(&arc, &CAL_EPS).unwrap().value;
            let cro = estimate_length_crofton(&arc, 2000, 7).unwrap().value;
            assert!((cov - cro).abs() <= 0.1 * cro, "{ang}: covering {cov}, crofton {cro}");
        }
    }

    #[test]
    fn crofton_on_great_circle_is_unbiased() {
        let circle = great_circle_arc(2.0 * PI, 0.01).unwrap();
        for seed in 0..20 {
            let v = estimate_length_crofton(&circle, 200, seed).unwrap();
            assert!((v.value - 2.0 * PI).abs() <= 3.0 * v.error_bar + 1e-12, "{seed}: {v:?}");
        }
    }

    #[test]
    fn crofton_counts_are_deterministic() {
        let arc = great_circle_arc(PI, 0.01).unwrap();
        assert_eq!(crossing_counts(&arc, 300, 5).unwrap(), crossing_counts(&arc, 300, 5).unwrap());
    }

    #[test]
    fn crofton_preconditions() {
        let flat = DirectionSet::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.1, Provenance::Derived)
            .unwrap()
            .with_default_graph()
            .unwrap();
        assert!(matches!(estimate_length_crofton(&flat, 10, 0), Err(VolumeError::NotCurveOnSphere(2))));
        let lonely = DirectionSet::new(3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 0.1, Provenance::Derived)
            .unwrap()
            .with_default_graph()
            .unwrap();
        let v = estimate_length_crofton(&lonely, 10, 0).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.status, VolumeStatus::LowerDimensional);
    }

    #[test]
    fn curve_skeleton_of_sampled_circle_closes() {
        let pts: Vec<Vec<f64>> = (0..700)
            .map(|k| {
                let a = k as f64 * 0.009;
                vec![a.cos(), a.sin(), 0.0]
            })
            .collect();
        let cloud = DirectionSet::new(3, pts, 0.01, Provenance::Derived).unwrap();
        let curves = curve_part(&cloud).unwrap();
        let v = estimate_length_crofton(&curves, 400, 1).unwrap();
        assert!((v.value - 2.0 * PI).abs() <= 3.0 * v.error_bar + 1e-12, "{v:?}");
    }

    #[test]
    fn paraboloid_profile_is_zero() {
        let f = parse("z - x^2 - y^2", 3).unwrap();
        let cfg = VolumeConfig {
            estimator: EstimatorConfig {
                mesh: 0.05,
                schedule: RadiusSchedule::new(10.0, 10.0, 4).unwrap(),
                ..EstimatorConfig::default()
            },
            n_circles: 100,
            eps: None,
        };
        let p = volume_profile(&f, &[-1.0, 0.0, 1.0], &cfg).unwrap();
        for e in &p.entries {
            let est = e.estimate.as_ref().unwrap();
            assert_eq!(est.value, 0.0);
            assert_eq!(est.status, VolumeStatus::LowerDimensional);
        }
        assert!(p.quotients.iter().all(|q| q.quotient == 0.0));
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,volume,error_bar,method,status\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let f = parse("z - x^2 - y^2", 3).unwrap();
        assert!(matches!(
            volume_profile(&f, &[1.0, 0.0], &VolumeConfig::default()),
            Err(VolumeError::UnsortedGrid)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sub_cloud_never_longer(angle in 0.5f64..6.0, keep in 0.1f64..0.9, seed in 0u64..1000) {
            let arc = great_circle_arc(angle, 0.02).unwrap();
            let all: Vec<(usize, usize)> = arc.graph().unwrap().edges().map(|(i, j, _)| (i, j)).collect();
            let cut = ((all.len() as f64) * keep) as usize;
            let sub = arc.clone().with_edges(0.04, &all[..cut]).unwrap();
            let big = crossing_counts(&arc, 64, seed).unwrap();
            let small = crossing_counts(&sub, 64, seed).unwrap();
            prop_assert!(small.iter().zip(&big).all(|(s, b)| s <= b));
        }

        #[test]
        fn estimates_are_nonnegative(angle in 0.3f64..6.2, seed in 0u64..100) {
            let arc = great_circle_arc(angle, 0.01).unwrap();
            let c = estimate_length_crofton(&arc, 50, seed).unwrap();
            prop_assert!(c.value >= 0.0 && c.error_bar >= 0.0);
            let v = estimate_volume_covering(&arc, &[0.16, 0.08, 0.04]).unwrap();
            prop_assert!(v.value >= 0.0 && v.error_bar >= 0.0);
        }
    }
}
