//! Sparse multivariate real polynomials.
//!
//! A [`Polynomial`] stores its nonzero terms in descending graded
//! lexicographic order (total degree first, then exponents compared from the
//! first variable on). Every operation that walks the terms does so in that
//! order, so evaluation is bit-for-bit reproducible.

mod parser;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::parse;

/// Largest exponent accepted from text or JSON input.
pub const MAX_EXPONENT: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at position {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("variable index {index} out of range for {n_vars} variables (position {position})")]
    VariableOutOfRange {
        index: usize,
        n_vars: usize,
        position: usize,
    },
    #[error("at least two variables are required, got {0}")]
    TooFewVariables(usize),
    #[error("point has {got} coordinates, polynomial has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exponent vector has length {got}, expected {expected}")]
    ExponentLength { expected: usize, got: usize },
    #[error("exponent {0} exceeds the supported maximum")]
    ExponentTooLarge(u32),
    #[error("coefficient is not finite")]
    NonFiniteCoefficient,
    #[error("the zero polynomial has no homogeneous decomposition")]
    ZeroPolynomial,
}

/// One monomial `coeff * x1^e1 * ... * xn^en`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Term {
    pub fn total_degree(&self) -> u32 {
        self.exps.iter().sum()
    }
}

/// Descending graded lexicographic comparison of exponent vectors.
fn grlex_desc(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    db.cmp(&da).then_with(|| b.cmp(a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: Vec<Term>,
    degree: i32,
    /// Highest exponent of each variable, used to size the power tables.
    max_exp: Vec<u32>,
}

impl Polynomial {
    /// Builds the canonical form: duplicate exponents are summed, zero
    /// coefficients dropped and terms sorted.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        if n_vars < 2 {
            return Err(PolyError::TooFewVariables(n_vars));
        }
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (exps, coeff) in terms {
            if exps.len() != n_vars {
                return Err(PolyError::ExponentLength {
                    expected: n_vars,
                    got: exps.len(),
                });
            }
            if let Some(&e) = exps.iter().find(|&&e| e > MAX_EXPONENT) {
                return Err(PolyError::ExponentTooLarge(e));
            }
            if !coeff.is_finite() {
                return Err(PolyError::NonFiniteCoefficient);
            }
            *acc.entry(exps).or_insert(0.0) += coeff;
        }
        let mut terms: Vec<Term> = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exps, coeff)| Term { coeff, exps })
            .collect();
        terms.sort_by(|a, b| grlex_desc(&a.exps, &b.exps));
        Ok(Self::from_sorted(n_vars, terms))
    }

    fn from_sorted(n_vars: usize, terms: Vec<Term>) -> Self {
        let degree = terms
            .iter()
            .map(|t| t.total_degree() as i32)
            .max()
            .unwrap_or(-1);
        let mut max_exp = vec![0u32; n_vars];
        for t in &terms {
            for (m, &e) in max_exp.iter_mut().zip(&t.exps) {
                *m = (*m).max(e);
            }
        }
        Self {
            n_vars,
            terms,
            degree,
            max_exp,
        }
    }

    pub fn zero(n_vars: usize) -> Result<Self, PolyError> {
        Self::from_terms(n_vars, std::iter::empty())
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Maximum total degree, `-1` for the zero polynomial.
    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every term has the same total degree (the zero polynomial
    /// counts as homogeneous).
    pub fn is_homogeneous(&self) -> bool {
        match self.terms.first() {
            None => true,
            Some(first) => {
                let d = first.total_degree();
                self.terms.iter().all(|t| t.total_degree() == d)
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), PolyError> {
        if x.len() != self.n_vars {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_vars,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Value at `x`, computed in double-double arithmetic so that terms
    /// which cancel do not swamp a small result.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_dim(x)?;
        Ok(self.value_compensated(x))
    }

    /// Double-double evaluation: every term product and the running sum are
    /// carried with an error word, giving close to correctly rounded values
    /// unless the cancellation exceeds about 30 digits.
    pub fn value_compensated(&self, x: &[f64]) -> f64 {
        let mut acc = Dd::ZERO;
        for t in &self.terms {
            let mut term = Dd::from(t.coeff);
            for (&xi, &e) in x.iter().zip(&t.exps) {
                for _ in 0..e {
                    term = term.mul_f64(xi);
                }
            }
            acc = acc.add(term);
        }
        acc.hi + acc.lo
    }

    pub fn eval_gradient(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.n_vars];
        self.value_and_gradient(x, &mut g);
        Ok(g)
    }

    /// Row-major `n x n` Hessian.
    pub fn eval_hessian(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.n_vars];
        let mut h = vec![0.0; self.n_vars * self.n_vars];
        self.value_gradient_hessian(x, &mut g, &mut h);
        Ok(h)
    }

    fn power_table(&self, x: &[f64]) -> PowerTable {
        PowerTable::new(x, &self.max_exp)
    }

    /// Value at `x`. Panics in debug builds if `x` has the wrong length.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_vars);
        let pw = self.power_table(x);
        self.terms
            .iter()
            .map(|t| {
                t.exps
                    .iter()
                    .enumerate()
                    .fold(t.coeff, |acc, (i, &e)| acc * pw.get(i, e))
            })
            .sum()
    }

    /// Value at `x`, writing the gradient into `grad`.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_vars);
        debug_assert_eq!(grad.len(), self.n_vars);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let pw = self.power_table(x);
        let mut value = 0.0;
        for t in &self.terms {
            value += t
                .exps
                .iter()
                .enumerate()
                .fold(t.coeff, |acc, (i, &e)| acc * pw.get(i, e));
            for (i, &ei) in t.exps.iter().enumerate() {
                if ei == 0 {
                    continue;
                }
                let mut d = t.coeff * ei as f64 * pw.get(i, ei - 1);
                for (j, &ej) in t.exps.iter().enumerate() {
                    if j != i {
                        d *= pw.get(j, ej);
                    }
                }
                grad[i] += d;
            }
        }
        value
    }

    /// Value, gradient and row-major Hessian at `x`.
    pub fn value_gradient_hessian(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = self.n_vars;
        debug_assert_eq!(hess.len(), n * n);
        let value = self.value_and_gradient(x, grad);
        hess.iter_mut().for_each(|h| *h = 0.0);
        let pw = self.power_table(x);
        for t in &self.terms {
            for i in 0..n {
                let ei = t.exps[i];
                if ei == 0 {
                    continue;
                }
                for j in i..n {
                    let ej = t.exps[j];
                    let d = if i == j {
                        if ei < 2 {
                            continue;
                        }
                        let mut d = t.coeff * (ei * (ei - 1)) as f64 * pw.get(i, ei - 2);
                        for (k, &ek) in t.exps.iter().enumerate() {
                            if k != i {
                                d *= pw.get(k, ek);
                            }
                        }
                        d
                    } else {
                        if ej == 0 {
                            continue;
                        }
                        let mut d = t.coeff
                            * (ei * ej) as f64
                            * pw.get(i, ei - 1)
                            * pw.get(j, ej - 1);
                        for (k, &ek) in t.exps.iter().enumerate() {
                            if k != i && k != j {
                                d *= pw.get(k, ek);
                            }
                        }
                        d
                    };
                    hess[i * n + j] += d;
                    if i != j {
                        hess[j * n + i] += d;
                    }
                }
            }
        }
        value
    }

    /// Homogeneous parts `f_0, ..., f_d`; entry `i` holds exactly the terms
    /// of total degree `i` (possibly the zero polynomial).
    pub fn homogeneous_decomposition(&self) -> Result<Vec<Polynomial>, PolyError> {
        if self.is_zero() {
            return Err(PolyError::ZeroPolynomial);
        }
        let d = self.degree as usize;
        let mut parts: Vec<Vec<Term>> = vec![Vec::new(); d + 1];
        for t in &self.terms {
            parts[t.total_degree() as usize].push(t.clone());
        }
        Ok(parts
            .into_iter()
            .map(|terms| Self::from_sorted(self.n_vars, terms))
            .collect())
    }

    /// The top homogeneous form `f_d`.
    pub fn top_form(&self) -> Result<Polynomial, PolyError> {
        let mut parts = self.homogeneous_decomposition()?;
        Ok(parts.pop().expect("nonzero polynomial has a top part"))
    }

    /// Variable names used for display: `x, y, z` up to three variables,
    /// `x1..xn` otherwise.
    pub fn variable_name(n_vars: usize, index: usize) -> String {
        if n_vars <= 3 {
            ["x", "y", "z"][index].to_string()
        } else {
            format!("x{}", index + 1)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("polynomial serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// `x_i^k` for every variable up to its maximal exponent, stored flat.
// Unevaluated sum hi + lo with |lo| ≤ ulp(hi) / 2.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn fast_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let r = Self::fast_two_sum(s.hi, s.lo + t.hi);
        Self::fast_two_sum(r.hi, r.lo + t.lo)
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Self::fast_two_sum(p, e + self.lo * b)
    }
}

// Powers x_i^k for k up to the largest exponent of x_i, kept on the stack
// when they fit.
struct PowerTable {
    inline: [f64; INLINE_POWERS],
    heap: Vec<f64>,
    offsets: [usize; INLINE_VARS],
    heap_offsets: Vec<usize>,
    spilled: bool,
}

const INLINE_POWERS: usize = 64;
const INLINE_VARS: usize = 8;

impl PowerTable {
    fn new(x: &[f64], max_exp: &[u32]) -> Self {
        let total: usize = max_exp.iter().map(|&m| m as usize + 1).sum();
        let spilled = total > INLINE_POWERS || x.len() > INLINE_VARS;
        let mut t = Self {
            inline: [0.0; INLINE_POWERS],
            heap: Vec::new(),
            offsets: [0; INLINE_VARS],
            heap_offsets: Vec::new(),
            spilled,
        };
        if spilled {
            t.heap.reserve(total);
            for (&xi, &m) in x.iter().zip(max_exp) {
                t.heap_offsets.push(t.heap.len());
                let mut p = 1.0;
                t.heap.push(p);
                for _ in 0..m {
                    p *= xi;
                    t.heap.push(p);
                }
            }
        } else {
            let mut k = 0;
            for (i, (&xi, &m)) in x.iter().zip(max_exp).enumerate() {
                t.offsets[i] = k;
                let mut p = 1.0;
                t.inline[k] = p;
                k += 1;
                for _ in 0..m {
                    p *= xi;
                    t.inline[k] = p;
                    k += 1;
                }
            }
        }
        t
    }

    #[inline]
    fn get(&self, var: usize, exp: u32) -> f64 {
        if self.spilled {
            self.heap[self.heap_offsets[var] + exp as usize]
        } else {
            self.inline[self.offsets[var] + exp as usize]
        }
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            let neg = t.coeff < 0.0;
            let mag = t.coeff.abs();
            match (k, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let vars: Vec<String> = t
                .exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    let name = Self::variable_name(self.n_vars, i);
                    if e == 1 {
                        name
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag:?}")?;
            } else if mag == 1.0 {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag:?}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    c: f64,
    e: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    n: usize,
    terms: Vec<TermJson>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolyJson {
            n: self.n_vars,
            terms: self
                .terms
                .iter()
                .map(|t| TermJson {
                    c: t.coeff,
                    e: t.exps.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PolyJson::deserialize(d)?;
        Polynomial::from_terms(raw.n, raw.terms.into_iter().map(|t| (t.e, t.c)))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex1() -> Polynomial {
        parse("z - x^2 - y^2", 3).unwrap()
    }

    fn ex3() -> Polynomial {
        parse("z*(x^2 + (x*y - 1)^2)", 3).unwrap()
    }

    #[test]
    fn paraboloid_terms() {
        let p = ex1();
        assert_eq!(p.degree(), 2);
        let got: Vec<(Vec<u32>, f64)> =
            p.terms().iter().map(|t| (t.exps.clone(), t.coeff)).collect();
        assert_eq!(
            got,
            vec![
                (vec![2, 0, 0], -1.0),
                (vec![0, 2, 0], -1.0),
                (vec![0, 0, 1], 1.0)
            ]
        );
    }

    #[test]
    fn zero_polynomial_has_sentinel_degree() {
        let p = parse("0", 3).unwrap();
        assert!(p.is_zero());
        assert_eq!(p.degree(), -1);
        assert_eq!(p.to_string(), "0");
        assert_eq!(
            p.homogeneous_decomposition().unwrap_err(),
            PolyError::ZeroPolynomial
        );
    }

    #[test]
    fn parusinski_degree() {
        let p = parse("x + x^2*y + x^4*y*z", 3).unwrap();
        assert_eq!(p.terms().len(), 3);
        assert_eq!(p.degree(), 6);
    }

    #[test]
    fn evaluation_examples() {
        assert_relative_eq!(ex3().evaluate(&[0.1, 10.0, 0.1]).unwrap(), 1e-3, max_relative = 1e-12);
        assert_eq!(ex1().evaluate(&[1.0, 1.0, 3.0]).unwrap(), 1.0);
        let p = parse("3 + x*y", 2).unwrap();
        assert_eq!(p.evaluate(&[0.0, 0.0]).unwrap(), 3.0);
        assert!(matches!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = ex1().eval_gradient(&[0.3, -1.5, 2.0]).unwrap();
        assert_eq!(g, vec![-0.6, 3.0, 1.0]);
        let c = parse("7", 3).unwrap();
        assert_eq!(c.eval_gradient(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        let g = ex3().eval_gradient(&[0.1, 10.0, 0.1]).unwrap();
        assert_relative_eq!(g[0], 0.02, max_relative = 1e-12);
        assert!(g[1].abs() < 1e-15);
        assert_relative_eq!(g[2], 0.01, max_relative = 1e-12);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let p = parse("x + x^2*y + x^4*y*z", 3).unwrap();
        let x = [0.7, -1.2, 0.4];
        let h = p.eval_hessian(&x).unwrap();
        let step = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let gp = p.eval_gradient(&xp).unwrap();
            let gm = p.eval_gradient(&xm).unwrap();
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((h[i * 3 + j] - fd).abs() < 1e-6, "H[{i}][{j}]");
            }
        }
    }

    #[test]
    fn decomposition_examples() {
        let parts = ex1().homogeneous_decomposition().unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts[0].is_zero());
        assert_eq!(parts[1].to_string(), "z");
        assert_eq!(parts[2].to_string(), "-x^2 - y^2");

        let parts = parse("x + x^2*y + x^4*y*z", 3)
            .unwrap()
            .homogeneous_decomposition()
            .unwrap();
        assert_eq!(parts.len(), 7);
        assert_eq!(parts[6].to_string(), "x^4*y*z");
        assert_eq!(parts[3].to_string(), "x^2*y");
        assert_eq!(parts[1].to_string(), "x");
        for i in [0, 2, 4, 5] {
            assert!(parts[i].is_zero());
        }

        // z(x^2 + (xy-1)^2) = x^2y^2z - 2xyz + x^2z + z
        let top = ex3().top_form().unwrap();
        assert_eq!(top.to_string(), "x^2*y^2*z");
        assert_eq!(ex3().to_string(), "x^2*y^2*z + x^2*z - 2.0*x*y*z + z");
    }

    #[test]
    fn compensated_evaluation_survives_cancellation() {
        // terms of size 1/k cancel down to k^-3
        let f = ex3();
        for k in [10.0f64, 100.0, 1000.0, 777.0] {
            let x = [1.0 / k, k, 1.0 / k];
            // exact value at the rounded point: z (x^2 + (xy - 1)^2) with xy - 1 tiny
            let xy1 = x[0].mul_add(x[1], -1.0);
            let exact = x[2] * (x[0] * x[0] + xy1 * xy1);
            let v = f.evaluate(&x).unwrap();
            assert!(((v - exact) / exact).abs() < 1e-14, "k = {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn json_layout() {
        let p = ex1();
        assert_eq!(
            p.to_json(),
            r#"{"n":3,"terms":[{"c":-1.0,"e":[2,0,0]},{"c":-1.0,"e":[0,2,0]},{"c":1.0,"e":[0,0,1]}]}"#
        );
        assert_eq!(Polynomial::from_json(&p.to_json()).unwrap(), p);
        assert!(Polynomial::from_json(r#"{"n":1,"terms":[]}"#).is_err());
    }

    #[test]
    fn from_terms_merges_and_drops_zeros() {
        let p = Polynomial::from_terms(
            2,
            vec![(vec![1, 0], 2.0), (vec![1, 0], -2.0), (vec![0, 1], 1.5)],
        )
        .unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.degree(), 1);
        assert!(matches!(
            Polynomial::from_terms(1, vec![]),
            Err(PolyError::TooFewVariables(1))
        ));
    }
}
