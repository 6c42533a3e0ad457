//! Profiles of t ↦ D_∞(t): Hausdorff ratios between nearby fibers measured
//! inside the algebraic directions, and covering dimension along a grid.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directions::{
    hausdorff_extrinsic, hausdorff_intrinsic, sample_algebraic_directions, DirectionSet, DirectionsError,
    DEFAULT_RESIDUAL_TOL,
};
use crate::fibers::{EstimatorConfig, FiberError};
use crate::poly::{PolyError, Polynomial};
use crate::volume::octave_averaged_covering;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("delta must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("need at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("t grid must be sorted")]
    UnsortedGrid,
    #[error("fewer than 2 usable covering scales")]
    TooFewScales,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Directions(#[from] DirectionsError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub t1: f64,
    pub t2: f64,
    /// Intrinsic Hausdorff distance; +inf when the sets meet different
    /// components of the algebraic directions.
    #[serde(rename = "dH_g", with = "inf_as_string")]
    pub dh_g: f64,
    #[serde(rename = "dH")]
    pub dh: f64,
    #[serde(with = "inf_as_string")]
    pub ratio: f64,
}

// JSON has no infinity; write it as the string "inf".
mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzVerdict {
    LipschitzConsistent,
    JumpDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    pub t0: f64,
    pub delta: f64,
    pub pairs: Vec<PairDistance>,
    /// Largest ratio over the pairs.
    #[serde(with = "inf_as_string")]
    pub fitted_c: f64,
    pub verdict: LipschitzVerdict,
    /// Pairs dropped because one of the sets came out empty.
    pub skipped: usize,
}

impl LipschitzProfile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    /// CSV with columns t1, t2, dH_g, dH, ratio.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t1", "t2", "dH_g", "dH", "ratio"])?;
        for p in &self.pairs {
            w.write_record([p.t1, p.t2, p.dh_g, p.dh, p.ratio].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A pair counts towards a jump only if its intrinsic distance exceeds
/// this many meshes; below that the distance is sampling noise.
pub const RESOLVED_MESHES: f64 = 2.0;
/// A resolved ratio this many times the median ratio is a jump.
pub const JUMP_FACTOR: f64 = 10.0;

/// Pairs in (t0 − delta, t0 + delta) with |t1 − t2| spaced geometrically
/// over two decades. Even-numbered pairs straddle t0; the others sit on
/// one side of it, alternating right and left.
pub fn pair_grid(t0: f64, delta: f64, n_pairs: usize) -> Vec<(f64, f64)> {
    (0..n_pairs)
        .map(|k| {
            let g = 0.9 * delta * 10f64.powf(-2.0 * k as f64 / (n_pairs - 1) as f64);
            let mid = match k % 4 {
                0 | 2 => t0,
                1 => t0 + 0.5 * delta,
                _ => t0 - 0.5 * delta,
            };
            (mid - 0.5 * g, mid + 0.5 * g)
        })
        .collect()
}

/// Direction sets for each distinct t, in increasing order of t.
fn estimate_all(
    f: &Polynomial,
    ts: impl IntoIterator<Item = f64>,
    config: &EstimatorConfig,
) -> Result<BTreeMap<u64, DirectionSet>, AnalysisError> {
    let mut ts: Vec<f64> = ts.into_iter().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut sets = BTreeMap::new();
    for t in ts {
        let (set, diag) = config.estimate(f, t)?;
        if !diag.converged {
            log::warn!("directions at t = {t} did not settle");
        }
        sets.insert(t.to_bits(), set);
    }
    Ok(sets)
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Intrinsic and extrinsic Hausdorff distances between D_∞(t1) and
/// D_∞(t2) for pairs around t0, measured in the neighbourhood graph of the
/// sampled algebraic directions.
pub fn lipschitz_profile(
    f: &Polynomial,
    t0: f64,
    delta: f64,
    n_pairs: usize,
    config: &EstimatorConfig,
) -> Result<LipschitzProfile, AnalysisError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(AnalysisError::InvalidDelta(delta));
    }
    if n_pairs < 3 {
        return Err(AnalysisError::TooFewPairs(n_pairs));
    }
    let grid = pair_grid(t0, delta, n_pairs);
    let top = f.top_form()?;
    let ambient = sample_algebraic_directions(&top, config.mesh, DEFAULT_RESIDUAL_TOL, config.seed)?
        .set
        .with_default_graph()?;
    let sets = estimate_all(f, grid.iter().flat_map(|&(a, b)| [a, b]), config)?;
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (t1, t2) in grid {
        let a = &sets[&t1.to_bits()];
        let b = &sets[&t2.to_bits()];
        if a.is_empty() || b.is_empty() {
            log::info!("pair ({t1}, {t2}) skipped: empty direction set");
            skipped += 1;
            continue;
        }
        let dh = hausdorff_extrinsic(a, b)?;
        let dh_g = match hausdorff_intrinsic(a, b, &ambient) {
            Ok(d) => d,
            Err(DirectionsError::SnapFailed { distance, eps }) => {
                // a set leaving the sampled algebraic directions is as far
                // as it can be
                log::warn!("pair ({t1}, {t2}): snapping failed at {distance} > {eps}");
                f64::INFINITY
            }
            Err(e) => return Err(e.into()),
        };
        pairs.push(PairDistance {
            t1,
            t2,
            dh_g,
            dh,
            ratio: dh_g / (t2 - t1).abs(),
        });
    }
    let ratios: Vec<f64> = pairs.iter().map(|p| p.ratio).collect();
    let fitted_c = ratios.iter().copied().fold(0.0, f64::max);
    let med = median(&ratios);
    let floor = RESOLVED_MESHES * config.mesh;
    let jump = pairs
        .iter()
        .any(|p| p.dh_g.is_infinite() || (p.dh_g > floor && p.ratio > JUMP_FACTOR * med));
    Ok(LipschitzProfile {
        t0,
        delta,
        pairs,
        fitted_c,
        verdict: if jump {
            LipschitzVerdict::JumpDetected
        } else {
            LipschitzVerdict::LipschitzConsistent
        },
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEntry {
    pub t: f64,
    pub dim_est: f64,
    /// −1 for an empty set.
    pub dim_rounded: i32,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionProfile {
    pub entries: Vec<DimensionEntry>,
}

impl DimensionProfile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    /// CSV with columns t, dim_est, dim_rounded, residual.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "dim_est", "dim_rounded", "residual"])?;
        for e in &self.entries {
            w.write_record([
                e.t.to_string(),
                e.dim_est.to_string(),
                e.dim_rounded.to_string(),
                e.residual.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// dim(t0) ≤ dim(t) for the grid neighbours t of t0; `None` if t0 is
    /// not an interior grid point.
    pub fn semicontinuous_at(&self, t0: f64) -> Option<bool> {
        let i = self.entries.iter().position(|e| e.t == t0)?;
        if i == 0 || i + 1 == self.entries.len() {
            return None;
        }
        let d = self.entries[i].dim_rounded;
        Some(d <= self.entries[i - 1].dim_rounded && d <= self.entries[i + 1].dim_rounded)
    }
}

/// Covering radii 4·mesh · 10^{j/6}, j = 0..=6: one decade in half-octave
/// steps.
pub fn dimension_scales(mesh: f64) -> Vec<f64> {
    (0..=6).map(|j| 4.0 * mesh * 10f64.powf(j as f64 / 6.0)).collect()
}

/// Slope of log M̄(ε) against log(1/ε) over `scales`; scales above the
/// diameter of the sphere carry no information and are ignored.
pub fn covering_dimension(a: &DirectionSet, scales: &[f64]) -> Result<f64, AnalysisError> {
    let usable: Vec<f64> = scales.iter().copied().filter(|&e| e > 0.0 && e < 2.0).collect();
    if usable.len() < 2 {
        return Err(AnalysisError::TooFewScales);
    }
    let xs: Vec<f64> = usable.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = usable
        .iter()
        .map(|&e| octave_averaged_covering(a, e, 0).map(|m| m.ln()))
        .collect::<Result<_, _>>()?;
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

fn dimension_entry(t: f64, a: &DirectionSet, scales: &[f64]) -> Result<DimensionEntry, AnalysisError> {
    if a.is_empty() {
        return Ok(DimensionEntry {
            t,
            dim_est: f64::NAN,
            dim_rounded: -1,
            residual: 0.0,
        });
    }
    let d = covering_dimension(a, scales)?;
    let top = a.n() as i32 - 2;
    let rounded = (d.round() as i32).clamp(0, top);
    Ok(DimensionEntry {
        t,
        dim_est: d,
        dim_rounded: rounded,
        residual: d - rounded as f64,
    })
}

/// Covering dimension of D_∞(t) over a decade of scales above four meshes.
pub fn dimension_profile(
    f: &Polynomial,
    t_grid: &[f64],
    config: &EstimatorConfig,
) -> Result<DimensionProfile, AnalysisError> {
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(AnalysisError::UnsortedGrid);
    }
    let scales = dimension_scales(config.mesh);
    let sets = estimate_all(f, t_grid.iter().copied(), config)?;
    let entries = t_grid
        .iter()
        .map(|&t| dimension_entry(t, &sets[&t.to_bits()], &scales))
        .collect::<Result<_, _>>()?;
    Ok(DimensionProfile { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::Provenance;
    use crate::fibers::RadiusSchedule;
    use crate::poly::parse;
    use crate::volume::great_circle_arc;
    use proptest::prelude::*;

    fn quick() -> EstimatorConfig {
        EstimatorConfig {
            mesh: 0.04,
            schedule: RadiusSchedule::new(10.0, 10.0, 4).unwrap(),
            seed: 0,
            starts: None,
        }
    }

    #[test]
    fn pair_grid_shape() {
        let g = pair_grid(1.0, 0.5, 7);
        assert_eq!(g.len(), 7);
        for &(a, b) in &g {
            assert!(a > 0.5 && b < 1.5 && a < b);
        }
        let gaps: Vec<f64> = g.iter().map(|p| p.1 - p.0).collect();
        assert!((gaps[0] / gaps[6] - 100.0).abs() < 1e-9);
        assert!(g.iter().step_by(2).all(|&(a, b)| a < 1.0 && b > 1.0));
        assert!(g[1].0 > 1.0 && g[3].1 < 1.0);
    }

    #[test]
    fn lipschitz_preconditions() {
        let f = parse("z - x^2 - y^2", 3).unwrap();
        assert!(matches!(
            lipschitz_profile(&f, 0.0, 0.0, 5, &quick()),
            Err(AnalysisError::InvalidDelta(_))
        ));
        assert!(matches!(
            lipschitz_profile(&f, 0.0, 1.0, 2, &quick()),
            Err(AnalysisError::TooFewPairs(2))
        ));
    }

    #[test]
    fn paraboloid_is_lipschitz_consistent() {
        let f = parse("z - x^2 - y^2", 3).unwrap();
        let cfg = quick();
        let p = lipschitz_profile(&f, 5.0, 1.0, 5, &cfg).unwrap();
        assert_eq!(p.verdict, LipschitzVerdict::LipschitzConsistent);
        let min_gap = p.pairs.iter().map(|q| q.t2 - q.t1).fold(f64::INFINITY, f64::min);
        for q in &p.pairs {
            assert!(q.dh_g <= cfg.mesh, "{q:?}");
            assert!(q.dh <= q.dh_g + 1e-12);
        }
        assert!(p.fitted_c <= 2.0 * cfg.mesh / min_gap);
    }

    #[test]
    fn vanishing_component_jumps_at_zero() {
        let f = parse("z*(x^2 + (x*y - 1)^2)", 3).unwrap();
        let p = lipschitz_profile(&f, 0.0, 0.5, 5, &quick()).unwrap();
        assert_eq!(p.verdict, LipschitzVerdict::JumpDetected, "{p:#?}");
        for q in &p.pairs {
            if q.dh_g.is_finite() {
                assert!(q.dh <= q.dh_g + 1e-12);
            }
        }
    }

    #[test]
    fn infinite_ratio_round_trips_through_json() {
        let p = LipschitzProfile {
            t0: 0.0,
            delta: 1.0,
            pairs: vec![PairDistance {
                t1: -0.1,
                t2: 0.1,
                dh_g: f64::INFINITY,
                dh: 0.5,
                ratio: f64::INFINITY,
            }],
            fitted_c: f64::INFINITY,
            verdict: LipschitzVerdict::JumpDetected,
            skipped: 0,
        };
        let text = p.to_json();
        assert!(text.contains("\"dH_g\":\"inf\""));
        let back: LipschitzProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn circle_has_dimension_one() {
        let circle = great_circle_arc(std::f64::consts::TAU, 0.002).unwrap();
        let d = covering_dimension(&circle, &dimension_scales(0.002)).unwrap();
        assert!((0.9..=1.1).contains(&d), "{d}");
    }

    #[test]
    fn point_has_dimension_zero_and_empty_is_sentinel() {
        let p = DirectionSet::new(3, vec![vec![0.0, 0.0, 1.0]], 0.02, Provenance::Derived).unwrap();
        let e = dimension_entry(0.0, &p, &dimension_scales(0.02)).unwrap();
        assert_eq!(e.dim_rounded, 0);
        let empty = DirectionSet::new(3, vec![], 0.02, Provenance::Derived).unwrap();
        assert_eq!(dimension_entry(0.0, &empty, &dimension_scales(0.02)).unwrap().dim_rounded, -1);
        assert!(matches!(covering_dimension(&p, &[3.0, 2.5, 0.1]), Err(AnalysisError::TooFewScales)));
    }

    #[test]
    fn example_dimension_profiles() {
        let cfg = quick();
        let f = parse("z - x^2 - y^2", 3).unwrap();
        let p = dimension_profile(&f, &[-1.0, 0.0, 1.0], &cfg).unwrap();
        assert_eq!(p.entries.iter().map(|e| e.dim_rounded).collect::<Vec<_>>(), vec![0, 0, 0]);
        let f = parse("z*(x^2 + (x*y - 1)^2)", 3).unwrap();
        let p = dimension_profile(&f, &[-0.5, 0.0, 0.5], &cfg).unwrap();
        assert_eq!(p.entries.iter().map(|e| e.dim_rounded).collect::<Vec<_>>(), vec![1, 1, 1]);
        assert_eq!(p.semicontinuous_at(0.0), Some(true));
        assert_eq!(p.semicontinuous_at(0.5), None);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,dim_est,dim_rounded,residual\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pairs_stay_inside_window(t0 in -5.0f64..5.0, delta in 0.01f64..3.0, n in 3usize..12) {
            for (a, b) in pair_grid(t0, delta, n) {
                prop_assert!(a > t0 - delta && b < t0 + delta && a < b);
            }
        }
    }
}
