//! Neighbourhood graphs over direction clouds and shortest paths on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geom::{dist, SpatialHash};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// Every pair of points at chordal distance at most `eps`.
    Neighborhood,
    /// Minimum spanning forest of the neighbourhood graph.
    Skeleton,
}

/// Undirected weighted graph; weights are chordal distances.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    eps: f64,
    kind: GraphKind,
    adj: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn neighborhood(points: &[Vec<f64>], eps: f64) -> Self {
        let hash = SpatialHash::build(points, eps);
        let adj = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut nb = Vec::new();
                hash.for_each_near(p, |j| {
                    if j != i {
                        let d = dist(p, &points[j]);
                        if d <= eps {
                            nb.push((j, d));
                        }
                    }
                });
                nb.sort_by_key(|&(j, _)| j);
                nb
            })
            .collect();
        Self {
            eps,
            kind: GraphKind::Neighborhood,
            adj,
        }
    }

    /// Kruskal minimum spanning forest of `self`, ties broken by endpoint
    /// indices so the result is deterministic.
    pub fn spanning_forest(&self) -> Self {
        let mut edges: Vec<(f64, usize, usize)> = self
            .edges()
            .map(|(i, j, w)| (w, i, j))
            .collect();
        edges.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut uf = UnionFind::new(self.adj.len());
        let mut adj = vec![Vec::new(); self.adj.len()];
        for (w, i, j) in edges {
            if uf.union(i, j) {
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        for nb in &mut adj {
            nb.sort_by_key(|&(j, _)| j);
        }
        Self {
            eps: self.eps,
            kind: GraphKind::Skeleton,
            adj,
        }
    }

    /// Joins pairs of leaves that are within `eps` of each other but at
    /// least `min_cycle` apart along the graph. A spanning tree of a cloud
    /// sampled from a closed curve misses exactly one such edge.
    pub fn close_loops(&mut self, points: &[Vec<f64>], min_cycle: f64) {
        let leaves: Vec<usize> = (0..self.adj.len()).filter(|&i| self.adj[i].len() == 1).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (a, &i) in leaves.iter().enumerate() {
            for &j in &leaves[a + 1..] {
                let d = dist(&points[i], &points[j]);
                if d <= self.eps {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (d, i, j) in pairs {
            if self.adj[i].len() != 1 || self.adj[j].len() != 1 {
                continue;
            }
            if self.shortest_paths(&[(i, 0.0)])[j] >= min_cycle {
                self.adj[i].push((j, d));
                self.adj[j].push((i, d));
                self.adj[i].sort_by_key(|&(k, _)| k);
                self.adj[j].sort_by_key(|&(k, _)| k);
            }
        }
    }

    /// Graph with explicitly given edges (weights recomputed from points).
    pub fn from_edges(points: &[Vec<f64>], eps: f64, kind: GraphKind, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); points.len()];
        for &(i, j) in edges {
            if i == j || adj[i].iter().any(|&(k, _)| k == j) {
                continue;
            }
            let w = dist(&points[i], &points[j]);
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for nb in &mut adj {
            nb.sort_by_key(|&(j, _)| j);
        }
        Self { eps, kind, adj }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Each undirected edge once, as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, nb)| {
            nb.iter()
                .filter(move |&&(j, _)| i < j)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn median_degree(&self) -> f64 {
        let mut d: Vec<usize> = (0..self.adj.len()).map(|i| self.degree(i)).collect();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_unstable();
        let m = d.len();
        if m % 2 == 1 {
            d[m / 2] as f64
        } else {
            0.5 * (d[m / 2 - 1] + d[m / 2]) as f64
        }
    }

    /// Connected component label of every node.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.adj.len());
        for (i, j, _) in self.edges() {
            uf.union(i, j);
        }
        (0..self.adj.len()).map(|i| uf.find(i)).collect()
    }

    /// Multi-source Dijkstra: `sources` carries initial distances.
    pub fn shortest_paths(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let mut best = vec![f64::INFINITY; self.adj.len()];
        let mut heap = BinaryHeap::new();
        for &(s, d0) in sources {
            if d0 < best[s] {
                best[s] = d0;
                heap.push(HeapItem(d0, s));
            }
        }
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > best[u] {
                continue;
            }
            for &(v, w) in &self.adj[u] {
                let nd = d + w;
                if nd < best[v] {
                    best[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        best
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns true if `a` and `b` were in different sets.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
