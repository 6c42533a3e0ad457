//! Finite point clouds on the unit sphere standing in for sets of directions
//! at infinity, with Hausdorff distances and covering numbers.

mod graph;

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{dist, dot, lex_cmp, normalize, norm, sphere_starts, starts_for_spacing, SpatialHash};
use crate::poly::Polynomial;

pub use graph::{GraphKind, NeighborGraph};

#[allow(unused_imports)]
pub(crate) use graph::UnionFind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectionsError {
    #[error("direction set is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mesh must lie in (0, 0.5], got {0}")]
    InvalidMesh(f64),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("polynomial is zero")]
    ZeroPolynomial,
    #[error("point has zero or non-finite norm")]
    DegeneratePoint,
    #[error("direction set carries no neighborhood graph")]
    MissingGraph,
    #[error("graph eps {eps} is below twice the mesh {mesh}")]
    GraphEpsTooSmall { eps: f64, mesh: f64 },
    #[error("point lies {distance} from the cloud, beyond graph eps {eps}")]
    SnapFailed { distance: f64, eps: f64 },
}

/// Where a cloud came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Zero set of the top form on the sphere.
    Algebraic,
    /// Normalized points of the fiber `f = t` on the sphere of the given radius.
    Fiber { t: f64, radius: f64 },
    /// Anything built from other clouds or by hand.
    Derived,
}

/// Unit vectors in R^n with a target spacing and an optional neighbourhood
/// graph. Points are kept in lexicographic order.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    n: usize,
    points: Vec<Vec<f64>>,
    mesh: f64,
    provenance: Provenance,
    graph: Option<NeighborGraph>,
    near_singular: Vec<bool>,
    // farthest-point insertion radii, filled on first covering query
    insertion_radii: OnceLock<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DirectionSetJson {
    n: usize,
    mesh: f64,
    provenance: Provenance,
    points: Vec<Vec<f64>>,
}

impl PartialEq for DirectionSet {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.mesh == other.mesh
            && self.provenance == other.provenance
            && self.points == other.points
    }
}

impl DirectionSet {
    /// Normalizes and sorts `points`. Any mesh in (0, 0.5] is accepted.
    pub fn new(
        n: usize,
        points: Vec<Vec<f64>>,
        mesh: f64,
        provenance: Provenance,
    ) -> Result<Self, DirectionsError> {
        let flags = vec![false; points.len()];
        Self::with_flags(n, points, flags, mesh, provenance)
    }

    fn with_flags(
        n: usize,
        points: Vec<Vec<f64>>,
        flags: Vec<bool>,
        mesh: f64,
        provenance: Provenance,
    ) -> Result<Self, DirectionsError> {
        if !(mesh > 0.0 && mesh <= 0.5) {
            return Err(DirectionsError::InvalidMesh(mesh));
        }
        let mut tagged = Vec::with_capacity(points.len());
        for (mut p, flag) in points.into_iter().zip(flags) {
            if p.len() != n {
                return Err(DirectionsError::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
            let r = normalize(&mut p);
            if !(r > 0.0 && r.is_finite()) {
                return Err(DirectionsError::DegeneratePoint);
            }
            tagged.push((p, flag));
        }
        tagged.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let (points, near_singular) = tagged.into_iter().unzip();
        Ok(Self {
            n,
            points,
            mesh,
            provenance,
            graph: None,
            near_singular,
            insertion_radii: OnceLock::new(),
        })
    }

    /// Normalizes, sorts and thins `points` so that no two kept points are
    /// closer than `mesh / 2`; earlier points in lexicographic order win.
    pub fn deduplicated(
        n: usize,
        points: Vec<Vec<f64>>,
        mesh: f64,
        provenance: Provenance,
    ) -> Result<Self, DirectionsError> {
        let flags = vec![false; points.len()];
        Self::deduplicated_with_flags(n, points, flags, mesh, provenance)
    }

    fn deduplicated_with_flags(
        n: usize,
        points: Vec<Vec<f64>>,
        flags: Vec<bool>,
        mesh: f64,
        provenance: Provenance,
    ) -> Result<Self, DirectionsError> {
        let all = Self::with_flags(n, points, flags, mesh, provenance)?;
        let radius = 0.5 * mesh;
        let mut hash = SpatialHash::new(n, radius);
        let mut keep_points: Vec<Vec<f64>> = Vec::new();
        let mut keep_flags = Vec::new();
        for (p, flag) in all.points.into_iter().zip(all.near_singular) {
            let mut clash = false;
            hash.for_each_near(&p, |j| {
                if !clash && dist(&p, &keep_points[j]) < radius {
                    clash = true;
                }
            });
            if !clash {
                hash.insert(keep_points.len(), &p);
                keep_points.push(p);
                keep_flags.push(flag);
            }
        }
        Ok(Self {
            n,
            points: keep_points,
            mesh,
            provenance,
            graph: None,
            near_singular: keep_flags,
            insertion_radii: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn graph(&self) -> Option<&NeighborGraph> {
        self.graph.as_ref()
    }

    /// Per-point flag: the projected gradient of the defining form nearly
    /// vanished where the point was found.
    pub fn near_singular(&self) -> &[bool] {
        &self.near_singular
    }

    /// Attaches the neighbourhood graph with edge threshold `eps`.
    pub fn with_graph(mut self, eps: f64) -> Result<Self, DirectionsError> {
        if !(eps >= 2.0 * self.mesh) {
            return Err(DirectionsError::GraphEpsTooSmall {
                eps,
                mesh: self.mesh,
            });
        }
        self.graph = Some(NeighborGraph::neighborhood(&self.points, eps));
        Ok(self)
    }

    /// Neighbourhood graph at the default threshold of three meshes.
    pub fn with_default_graph(self) -> Result<Self, DirectionsError> {
        let eps = self.default_graph_eps();
        self.with_graph(eps)
    }

    pub fn default_graph_eps(&self) -> f64 {
        3.0 * self.mesh
    }

    /// Attaches the minimum spanning forest of the neighbourhood graph, with
    /// closed curves closed up again. On clouds sampled from curves this is a
    /// thin skeleton tracing the curves, with the same connected components
    /// as the full graph.
    pub fn with_curve_graph(self, eps: f64) -> Result<Self, DirectionsError> {
        let mut s = self.with_graph(eps)?;
        s.graph = s.graph.map(|g| {
            let mut tree = g.spanning_forest();
            tree.close_loops(&s.points, 10.0 * eps);
            tree
        });
        Ok(s)
    }

    /// Points with |u_axis| ≤ width, kept on the same sphere.
    pub fn band(&self, axis: usize, width: f64) -> Result<Self, DirectionsError> {
        if axis >= self.n {
            return Err(DirectionsError::DimensionMismatch {
                expected: self.n,
                got: axis,
            });
        }
        let (pts, flags): (Vec<Vec<f64>>, Vec<bool>) = self
            .points
            .iter()
            .zip(&self.near_singular)
            .filter(|(p, _)| p[axis].abs() <= width)
            .map(|(p, &f)| (p.clone(), f))
            .unzip();
        Self::with_flags(self.n, pts, flags, self.mesh, Provenance::Derived)
    }

    /// Attaches an explicit graph over the current points.
    pub fn with_edges(
        mut self,
        eps: f64,
        edges: &[(usize, usize)],
    ) -> Result<Self, DirectionsError> {
        if !(eps >= 2.0 * self.mesh) {
            return Err(DirectionsError::GraphEpsTooSmall {
                eps,
                mesh: self.mesh,
            });
        }
        self.graph = Some(NeighborGraph::from_edges(
            &self.points,
            eps,
            GraphKind::Skeleton,
            edges,
        ));
        Ok(self)
    }

    /// Union of two clouds on the same sphere (no thinning).
    pub fn union(&self, other: &Self) -> Result<Self, DirectionsError> {
        self.check_dim(other)?;
        let mut pts = self.points.clone();
        pts.extend(other.points.iter().cloned());
        let mut flags = self.near_singular.clone();
        flags.extend(other.near_singular.iter().copied());
        Self::with_flags(
            self.n,
            pts,
            flags,
            self.mesh.max(other.mesh),
            Provenance::Derived,
        )
    }

    /// Points with |u_axis| ≤ width, with that coordinate dropped and the
    /// remainder renormalized; the result lives on S^{n-2}. Used to read
    /// off the trace of a direction set on a coordinate hyperplane.
    pub fn restrict_to_slice(&self, axis: usize, width: f64) -> Result<Self, DirectionsError> {
        if axis >= self.n || self.n < 3 {
            return Err(DirectionsError::DimensionMismatch {
                expected: self.n,
                got: axis,
            });
        }
        let pts: Vec<Vec<f64>> = self
            .points
            .iter()
            .filter(|p| p[axis].abs() <= width)
            .map(|p| {
                p.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != axis)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        Self::deduplicated(self.n - 1, pts, self.mesh, Provenance::Derived)
    }

    /// Component labels under the attached graph, or under the default
    /// neighbourhood graph when none is attached.
    pub fn components(&self) -> Vec<usize> {
        match &self.graph {
            Some(g) => g.components(),
            None => NeighborGraph::neighborhood(&self.points, self.default_graph_eps()).components(),
        }
    }

    pub fn component_count(&self) -> usize {
        let mut c = self.components();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Largest chordal diameter over the connected components.
    pub fn max_component_diameter(&self) -> f64 {
        let labels = self.components();
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                if labels[i] == labels[j] {
                    best = best.max(dist(&self.points[i], &self.points[j]));
                }
            }
        }
        best
    }

    /// Farthest-point traversal radii: r[0] = +inf, r[k] is the distance of
    /// the k-th inserted point to the earlier ones. Nonincreasing.
    pub fn insertion_radii(&self) -> &[f64] {
        self.insertion_radii.get_or_init(|| farthest_point_radii(&self.points))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DirectionSetJson {
            n: self.n,
            mesh: self.mesh,
            provenance: self.provenance,
            points: self.points.clone(),
        })
        .expect("direction set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: DirectionSetJson = serde_json::from_str(text)?;
        Self::new(raw.n, raw.points, raw.mesh, raw.provenance).map_err(serde::de::Error::custom)
    }

    fn check_dim(&self, other: &Self) -> Result<(), DirectionsError> {
        if self.n != other.n {
            return Err(DirectionsError::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }

    /// Nearest cloud point to `u` and its distance.
    fn nearest(&self, u: &[f64]) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist(p, u)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    fn snap(&self, u: &[f64], eps: f64) -> Result<(usize, f64), DirectionsError> {
        if u.len() != self.n {
            return Err(DirectionsError::DimensionMismatch {
                expected: self.n,
                got: u.len(),
            });
        }
        let (i, d) = self.nearest(u).ok_or(DirectionsError::Empty)?;
        if d > eps {
            return Err(DirectionsError::SnapFailed { distance: d, eps });
        }
        Ok((i, d))
    }
}

fn farthest_point_radii(points: &[Vec<f64>]) -> Vec<f64> {
    let m = points.len();
    if m == 0 {
        return Vec::new();
    }
    let mut radii = Vec::with_capacity(m);
    radii.push(f64::INFINITY);
    let mut gap: Vec<f64> = points.iter().map(|p| dist(p, &points[0])).collect();
    let mut used = vec![false; m];
    used[0] = true;
    for _ in 1..m {
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for (i, &g) in gap.iter().enumerate() {
            if !used[i] && g > best_d {
                best = i;
                best_d = g;
            }
        }
        used[best] = true;
        radii.push(best_d);
        let pb = &points[best];
        for (g, p) in gap.iter_mut().zip(points) {
            let d = dist(p, pb);
            if d < *g {
                *g = d;
            }
        }
    }
    radii
}

/// Outcome of sampling the zero set of a homogeneous form on the sphere.
#[derive(Debug, Clone)]
pub struct AlgebraicSample {
    pub set: DirectionSet,
    pub starts: usize,
    pub converged: usize,
    /// No start converged: the zero set may be empty.
    pub possibly_empty: bool,
}

pub const NEWTON_MAX_ITER: usize = 50;
pub const SINGULAR_GRADIENT: f64 = 1e-8;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
// Longest single Newton move on the sphere; keeps each start near where it began.
const MAX_STEP: f64 = 0.25;
// Bound on the start lattice so fine meshes in high dimension stay tractable.
const MAX_STARTS: usize = 400_000;

/// Projected Newton on the sphere for a homogeneous form; `None` if the
/// residual does not reach `tol`. The flag reports a near-singular limit.
pub fn newton_on_sphere(form: &Polynomial, start: &[f64], tol: f64) -> Option<(Vec<f64>, bool)> {
    let n = start.len();
    let mut u = start.to_vec();
    normalize(&mut u);
    let mut grad = vec![0.0; n];
    for _ in 0..=NEWTON_MAX_ITER {
        let val = form.value_and_gradient(&u, &mut grad);
        let radial = dot(&grad, &u);
        let tangent: Vec<f64> = grad.iter().zip(&u).map(|(g, x)| g - radial * x).collect();
        let tn = norm(&tangent);
        if !val.is_finite() || !tn.is_finite() {
            return None;
        }
        if val.abs() <= tol {
            return Some((u, tn < SINGULAR_GRADIENT));
        }
        if tn == 0.0 {
            return None;
        }
        let mut scale = val / (tn * tn);
        if scale.abs() * tn > MAX_STEP {
            scale = scale.signum() * MAX_STEP / tn;
        }
        for (x, g) in u.iter_mut().zip(&tangent) {
            *x -= scale * g;
        }
        normalize(&mut u);
    }
    None
}

/// Samples the zero set of the homogeneous form `form` on S^{n-1}.
pub fn sample_algebraic_directions(
    form: &Polynomial,
    mesh: f64,
    residual_tol: f64,
    seed: u64,
) -> Result<AlgebraicSample, DirectionsError> {
    if form.is_zero() {
        return Err(DirectionsError::ZeroPolynomial);
    }
    if !form.is_homogeneous() {
        return Err(DirectionsError::NotHomogeneous);
    }
    if !(mesh > 0.0 && mesh <= 0.5) {
        return Err(DirectionsError::InvalidMesh(mesh));
    }
    let n = form.n_vars();
    let count = starts_for_spacing(n, 0.5 * mesh).min(MAX_STARTS);
    let starts = sphere_starts(n, count, seed);
    let found: Vec<(Vec<f64>, bool)> = starts
        .par_iter()
        .filter_map(|s| newton_on_sphere(form, s, residual_tol))
        .collect();
    let converged = found.len();
    if converged == 0 {
        log::warn!("no Newton start converged on the top form; its zero set may be empty");
    }
    let (points, flags): (Vec<_>, Vec<_>) = found.into_iter().unzip();
    let set = DirectionSet::deduplicated_with_flags(n, points, flags, mesh, Provenance::Algebraic)?;
    Ok(AlgebraicSample {
        set,
        starts: count,
        converged,
        possibly_empty: converged == 0,
    })
}

/// Symmetric Hausdorff distance under the chordal metric. One empty and one
/// nonempty cloud are at distance +inf; two empty clouds at 0.
pub fn hausdorff_extrinsic(a: &DirectionSet, b: &DirectionSet) -> Result<f64, DirectionsError> {
    a.check_dim(b)?;
    Ok(hausdorff_points(&a.points, &b.points))
}

pub(crate) fn hausdorff_points(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    directed(a, b).max(directed(b, a))
}

fn directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.par_iter()
        .map(|p| b.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max)
}

/// Length of the shortest graph path between the cloud points nearest to
/// `u` and `v`, plus the two snapping distances. +inf if the two snapped
/// points lie in different components.
pub fn intrinsic_distance(ambient: &DirectionSet, u: &[f64], v: &[f64]) -> Result<f64, DirectionsError> {
    let g = ambient.graph.as_ref().ok_or(DirectionsError::MissingGraph)?;
    let (iu, du) = ambient.snap(u, g.eps())?;
    let (iv, dv) = ambient.snap(v, g.eps())?;
    if iu == iv {
        return Ok(dist(u, v));
    }
    let paths = g.shortest_paths(&[(iu, du)]);
    Ok(paths[iv] + dv)
}

/// Hausdorff distance with intrinsic distances measured in `ambient`.
pub fn hausdorff_intrinsic(
    a: &DirectionSet,
    b: &DirectionSet,
    ambient: &DirectionSet,
) -> Result<f64, DirectionsError> {
    a.check_dim(ambient)?;
    b.check_dim(ambient)?;
    let g = ambient.graph.as_ref().ok_or(DirectionsError::MissingGraph)?;
    if a.is_empty() || b.is_empty() {
        return Err(DirectionsError::Empty);
    }
    let snap_all = |s: &DirectionSet| -> Result<Vec<(usize, f64)>, DirectionsError> {
        s.points.iter().map(|p| ambient.snap(p, g.eps())).collect()
    };
    let sa = snap_all(a)?;
    let sb = snap_all(b)?;
    let da = directed_intrinsic(g, &a.points, &sa, &b.points, &sb);
    let db = directed_intrinsic(g, &b.points, &sb, &a.points, &sa);
    Ok(da.max(db))
}

// sup over p in `from` of the intrinsic distance from p to the set `to`
fn directed_intrinsic(
    g: &NeighborGraph,
    from: &[Vec<f64>],
    from_snap: &[(usize, f64)],
    to: &[Vec<f64>],
    to_snap: &[(usize, f64)],
) -> f64 {
    let field = g.shortest_paths(to_snap);
    from.iter()
        .zip(from_snap)
        .map(|(p, &(i, d))| {
            let mut best = field[i] + d;
            for (q, &(j, _)) in to.iter().zip(to_snap) {
                if j == i {
                    best = best.min(dist(p, q));
                }
            }
            best
        })
        .fold(0.0, f64::max)
}

/// Upper estimate of the minimal number of eps-balls covering the cloud,
/// from farthest-point traversal: the number of inserted points whose
/// insertion radius exceeds eps. Satisfies M(eps) ≤ M̂ ≤ M(eps/2) and is
/// antitone in eps.
pub fn covering_number(a: &DirectionSet, eps: f64) -> Result<usize, DirectionsError> {
    if a.is_empty() {
        return Err(DirectionsError::Empty);
    }
    assert!(eps > 0.0, "covering radius must be positive");
    Ok(a.insertion_radii().iter().filter(|&&r| r > eps).count())
}
