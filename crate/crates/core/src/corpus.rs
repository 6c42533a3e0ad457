//! The three reference polynomials with their known facts at infinity.
//!
//! Angles on the circle {x = 0} of S² are measured in the yz-plane from
//! +y towards +z; [`arc_point`] maps an angle back to S².

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{parse, Polynomial};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown example '{0}' (known: paraboloid, parusinski, vanishing_component)")]
    UnknownId(String),
}

pub const EXAMPLE_IDS: [&str; 3] = ["paraboloid", "parusinski", "vanishing_component"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TSign {
    Negative,
    Zero,
    Positive,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactKind {
    AsymptoticCriticalValues { values: Vec<f64> },
    AlgebraicDirections { description: String },
    DirectionsAtInfinity {
        t: TSign,
        description: String,
        /// 1-dimensional length of the set, when it is a curve.
        length: Option<f64>,
        dimension: i32,
    },
    /// Trace of D_∞(t) on the circle {x = 0}; endpoints and lengths are
    /// functions of t, see [`endpoint_a`], [`endpoint_b`], [`stated_arcs`]
    /// and [`derived_arcs`].
    SliceArcs { t: TSign, description: String },
    Witness {
        sequence: String,
        limit_value: f64,
        /// Closed forms along the sequence, k being the index.
        value: String,
        rabier: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    /// Quotation of the claim this fact records.
    pub anchor: String,
    /// Exercised by the test suite.
    pub checkable: bool,
    #[serde(flatten)]
    pub kind: FactKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub source: String,
    pub polynomial: Polynomial,
    pub facts: Vec<Fact>,
}

impl ExampleRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("example serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Known asymptotic critical values, if recorded.
    pub fn known_kinf(&self) -> Option<&[f64]> {
        self.facts.iter().find_map(|f| match &f.kind {
            FactKind::AsymptoticCriticalValues { values } => Some(values.as_slice()),
            _ => None,
        })
    }
}

fn fact(anchor: &str, checkable: bool, kind: FactKind) -> Fact {
    Fact {
        anchor: anchor.into(),
        checkable,
        kind,
    }
}

fn record(id: &str, source: &str, facts: Vec<Fact>) -> ExampleRecord {
    ExampleRecord {
        id: id.into(),
        source: source.into(),
        polynomial: parse(source, 3).expect("built-in example parses"),
        facts,
    }
}

pub fn get_example(id: &str) -> Result<ExampleRecord, CorpusError> {
    match id {
        "paraboloid" => Ok(paraboloid()),
        "parusinski" => Ok(parusinski()),
        "vanishing_component" => Ok(vanishing_component()),
        other => Err(CorpusError::UnknownId(other.into())),
    }
}

pub fn all_examples() -> Vec<ExampleRecord> {
    EXAMPLE_IDS
        .iter()
        .map(|id| get_example(id).expect("listed id exists"))
        .collect()
}

fn paraboloid() -> ExampleRecord {
    record(
        "paraboloid",
        "z - x^2 - y^2",
        vec![
            fact(
                "K_∞(f) = ∅",
                true,
                FactKind::AsymptoticCriticalValues { values: vec![] },
            ),
            fact(
                "D_∞^a = {(0, 0, ±1)}",
                true,
                FactKind::AlgebraicDirections {
                    description: "the two poles (0, 0, ±1)".into(),
                },
            ),
            fact(
                "D_∞(t) = {(0, 0, 1)} for all t ∈ R",
                true,
                FactKind::DirectionsAtInfinity {
                    t: TSign::All,
                    description: "the north pole (0, 0, 1)".into(),
                    length: Some(0.0),
                    dimension: 0,
                },
            ),
        ],
    )
}

fn parusinski() -> ExampleRecord {
    record(
        "parusinski",
        "x + x^2*y + x^4*y*z",
        vec![
            fact(
                "K_∞(f) = {0}",
                true,
                FactKind::AsymptoticCriticalValues { values: vec![0.0] },
            ),
            fact(
                "D_∞^a = {(x,y,z) ∈ S²: xyz = 0}",
                true,
                FactKind::AlgebraicDirections {
                    description: "the three great circles x = 0, y = 0, z = 0".into(),
                },
            ),
            fact(
                "H_t is the union of two anticlockwise arcs A→(0,0,−1) and −A→(0,0,1)",
                true,
                FactKind::SliceArcs {
                    t: TSign::Positive,
                    description: "arcs from A(t) to (0,0,-1) and from -A(t) to (0,0,1)".into(),
                },
            ),
            fact(
                "H_t is the union of two anticlockwise arcs (0,0,−1)→B and (0,0,1)→−B",
                false,
                FactKind::SliceArcs {
                    t: TSign::Negative,
                    description: "arcs from (0,0,-1) to B(t) and from (0,0,1) to -B(t)".into(),
                },
            ),
        ],
    )
}

fn vanishing_component() -> ExampleRecord {
    record(
        "vanishing_component",
        "z*(x^2 + (x*y - 1)^2)",
        vec![
            fact(
                "D_∞(0) = {z=0, x²+y²=1}",
                true,
                FactKind::DirectionsAtInfinity {
                    t: TSign::Zero,
                    description: "the equator".into(),
                    length: Some(2.0 * PI),
                    dimension: 1,
                },
            ),
            fact(
                "D_∞(t) = D_∞(0) ∪ {x=0, y²+z²=1, z ⩾ 0} if t > 0",
                true,
                FactKind::DirectionsAtInfinity {
                    t: TSign::Positive,
                    description: "the equator and the upper half of the circle x = 0".into(),
                    length: Some(3.0 * PI),
                    dimension: 1,
                },
            ),
            fact(
                "D_∞(t) = D_∞(0) ∪ {x=0, y²+z²=1, z ⩽ 0} if t < 0",
                true,
                FactKind::DirectionsAtInfinity {
                    t: TSign::Negative,
                    description: "the equator and the lower half of the circle x = 0".into(),
                    length: Some(3.0 * PI),
                    dimension: 1,
                },
            ),
            fact(
                "X^k := (1/k, k, 1/k); f(X^k) → 0 and ‖X^k‖‖∇f(X^k)‖ → 0",
                true,
                FactKind::Witness {
                    sequence: "(1/k, k, 1/k)".into(),
                    limit_value: 0.0,
                    value: "k^-3".into(),
                    rabier: "sqrt(5)/k + O(k^-3)".into(),
                },
            ),
            fact(
                "0 ∈ K_∞(f)",
                true,
                FactKind::AsymptoticCriticalValues { values: vec![0.0] },
            ),
        ],
    )
}

/// Point of S² on the circle {x = 0} at the given angle.
pub fn arc_point(angle: f64) -> [f64; 3] {
    [0.0, angle.cos(), angle.sin()]
}

/// A(t) = (0, −1, 1/(4t)) / √(1 + 1/(16t²)), for t > 0.
pub fn endpoint_a(t: f64) -> [f64; 3] {
    let s = (1.0 + 1.0 / (16.0 * t * t)).sqrt();
    [0.0, -1.0 / s, 1.0 / (4.0 * t) / s]
}

/// B(t) = (0, 1, 1/(4t)) / √(1 + 1/(16t²)), for t < 0.
pub fn endpoint_b(t: f64) -> [f64; 3] {
    let s = (1.0 + 1.0 / (16.0 * t * t)).sqrt();
    [0.0, 1.0 / s, 1.0 / (4.0 * t) / s]
}

fn angle_of(p: [f64; 3]) -> f64 {
    p[2].atan2(p[1])
}

/// H_t as anticlockwise arcs [from, to] (radians, to > from) read off the
/// endpoint description: A→(0,0,−1) and −A→(0,0,1) for t > 0,
/// (0,0,−1)→B and (0,0,1)→−B for t < 0.
pub fn stated_arcs(t: f64) -> Vec<(f64, f64)> {
    let ccw = |from: f64, to: f64| {
        let mut to = to;
        while to <= from {
            to += 2.0 * PI;
        }
        (from, to)
    };
    if t > 0.0 {
        let a = endpoint_a(t);
        let minus_a = [0.0, -a[1], -a[2]];
        vec![ccw(angle_of(a), -FRAC_PI_2), ccw(angle_of(minus_a), FRAC_PI_2)]
    } else if t < 0.0 {
        let b = endpoint_b(t);
        let minus_b = [0.0, -b[1], -b[2]];
        vec![ccw(-FRAC_PI_2, angle_of(b)), ccw(FRAC_PI_2, angle_of(minus_b))]
    } else {
        vec![]
    }
}

/// H_t from the discriminant condition together with the sign of the
/// root: the quadrant between the axis and the line z = −y/(4t) that the
/// discriminant admits carries no fiber points, because both roots there
/// have the wrong sign.
///
/// t > 0: [π, 3π/2] ∪ [−atan(1/(4t)), π/2];
/// t < 0: [π/2, π + atan(1/(4|t|))] ∪ [3π/2, 2π].
pub fn derived_arcs(t: f64) -> Vec<(f64, f64)> {
    if t > 0.0 {
        let m = (1.0 / (4.0 * t)).atan();
        vec![(PI, 1.5 * PI), (-m, FRAC_PI_2)]
    } else if t < 0.0 {
        let m = (1.0 / (4.0 * t.abs())).atan();
        vec![(FRAC_PI_2, PI + m), (1.5 * PI, 2.0 * PI)]
    } else {
        vec![]
    }
}

pub fn arcs_length(arcs: &[(f64, f64)]) -> f64 {
    arcs.iter().map(|(a, b)| b - a).sum()
}

/// Angular distance from `angle` to the union of `arcs`.
pub fn distance_to_arcs(arcs: &[(f64, f64)], angle: f64) -> f64 {
    arcs.iter()
        .map(|&(a, b)| {
            let mut best = f64::INFINITY;
            for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
                let x = angle + shift;
                let d = if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                };
                best = best.min(d);
            }
            best
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_resolve_and_parse() {
        assert_eq!(get_example("paraboloid").unwrap().polynomial.to_string(), "-x^2 - y^2 + z");
        let p = get_example("parusinski").unwrap();
        assert_eq!(p.known_kinf(), Some(&[0.0][..]));
        assert_eq!(p.polynomial, parse("x + x^2*y + x^4*y*z", 3).unwrap());
        let v = get_example("vanishing_component").unwrap();
        assert!(v.facts.iter().any(|f| matches!(&f.kind, FactKind::Witness { sequence, .. } if sequence == "(1/k, k, 1/k)")));
        assert!(matches!(get_example("nope"), Err(CorpusError::UnknownId(_))));
        assert_eq!(get_example("paraboloid").unwrap().known_kinf(), Some(&[][..]));
    }

    #[test]
    fn records_round_trip() {
        for rec in all_examples() {
            let back = ExampleRecord::from_json(&rec.to_json()).unwrap();
            assert_eq!(back, rec);
            assert!(rec.facts.iter().all(|f| !f.anchor.is_empty()));
        }
    }

    #[test]
    fn endpoint_a_at_quarter() {
        let a = endpoint_a(0.25);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[1] + s).abs() < 1e-15 && (a[2] - s).abs() < 1e-15);
    }

    #[test]
    fn stated_length_at_quarter_is_three_halves_pi() {
        let arcs = stated_arcs(0.25);
        assert!((arcs_length(&arcs) - 1.5 * PI).abs() < 1e-12);
        for t in [0.1f64, 1.0, 7.0] {
            let m = (1.0 / (4.0 * t)).atan();
            assert!((arcs_length(&stated_arcs(t)) - (PI + 2.0 * m)).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_arcs_lengths() {
        for t in [0.25f64, 1.0, -0.25, -3.0] {
            let m = (1.0 / (4.0 * t.abs())).atan();
            assert!((arcs_length(&derived_arcs(t)) - (PI + m)).abs() < 1e-12);
        }
    }

    #[test]
    fn both_descriptions_contain_the_axis_limits() {
        // (0,±1,0) and (0,0,±1) lie on every H_t
        for t in [0.25, 1.0, -0.5] {
            let mut all = vec![derived_arcs(t)];
            if t > 0.0 {
                all.push(stated_arcs(t));
            }
            for arcs in all {
                for ang in [0.0, FRAC_PI_2, PI, 1.5 * PI] {
                    assert!(distance_to_arcs(&arcs, ang) < 1e-12, "t={t} angle={ang} {arcs:?}");
                }
            }
        }
    }

    #[test]
    fn literal_b_misses_the_y_axis() {
        // with z-component +1/(4t) the arcs for t < 0 exclude (0, ±1, 0),
        // which the sequences (t, ±k, −1/t²) put in H_t
        let arcs = stated_arcs(-0.5);
        assert!(distance_to_arcs(&arcs, 0.0) > 0.1);
        assert!(distance_to_arcs(&arcs, PI) > 0.1);
    }
}
