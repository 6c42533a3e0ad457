//! Small vector helpers, seeded sphere sampling and a uniform-grid spatial
//! hash shared by the point-cloud code.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scales `a` to unit length; returns the original norm.
pub fn normalize(a: &mut [f64]) -> f64 {
    let r = norm(a);
    if r > 0.0 {
        a.iter_mut().for_each(|v| *v /= r);
    }
    r
}

pub fn normalized(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    normalize(&mut v);
    v
}

/// Lexicographic total order on coordinate vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Independent generator for work item `stream` of a run seeded with `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn random_unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v) > 1e-12 {
            return v;
        }
    }
}

/// Uniformly random rotation of R^3 as a row-major matrix.
pub fn random_rotation3<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let q = random_unit_vector(rng, 4);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Spherical Fibonacci lattice with `count` points, rotated by a rotation
/// drawn from `seed`.
pub fn fibonacci_sphere(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let rot = random_rotation3(&mut rng_for(seed, u64::MAX));
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            let p = [r * phi.cos(), r * phi.sin(), z];
            let mut out: Vec<f64> = rot
                .iter()
                .map(|row| row[0] * p[0] + row[1] * p[1] + row[2] * p[2])
                .collect();
            normalize(&mut out);
            out
        })
        .collect()
}

/// Quasi-uniform sample of `count` points on S^{n-1}: an evenly spaced
/// circle for n = 2, a rotated Fibonacci lattice for n = 3 and seeded
/// Gaussian directions otherwise.
pub fn sphere_starts(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        2 => {
            let offset: f64 = rng_for(seed, u64::MAX).random();
            (0..count)
                .map(|i| {
                    let a = std::f64::consts::TAU * (i as f64 + offset) / count as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        3 => fibonacci_sphere(count, seed),
        _ => {
            let mut rng = rng_for(seed, u64::MAX);
            (0..count).map(|_| random_unit_vector(&mut rng, n)).collect()
        }
    }
}

/// Number of lattice points giving a typical nearest-neighbour spacing of
/// `spacing` on the unit sphere S^{n-1}.
pub fn starts_for_spacing(n: usize, spacing: f64) -> usize {
    let area = match n {
        2 => std::f64::consts::TAU,
        3 => 4.0 * std::f64::consts::PI,
        _ => unit_sphere_area(n),
    };
    (area / spacing.powi(n as i32 - 1)).ceil() as usize
}

/// Surface area of S^{n-1}.
pub fn unit_sphere_area(n: usize) -> f64 {
    // A_{n-1} = 2 pi^{n/2} / Gamma(n/2), via the recurrence area(R^{k+2}) = 2 pi area(R^k) / k.
    let (mut a, mut k) = if n % 2 == 0 {
        (std::f64::consts::TAU, 2)
    } else {
        (4.0 * std::f64::consts::PI, 3)
    };
    while k < n {
        a *= std::f64::consts::TAU / k as f64;
        k += 2;
    }
    a
}

/// Uniform grid hash over points of R^n.
pub struct SpatialHash {
    cell: f64,
    n: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialHash {
    pub fn new(n: usize, cell: f64) -> Self {
        assert!(cell > 0.0);
        Self {
            cell,
            n,
            buckets: HashMap::new(),
        }
    }

    pub fn build(points: &[Vec<f64>], cell: f64) -> Self {
        let n = points.first().map_or(0, Vec::len);
        let mut h = Self::new(n, cell);
        for (i, p) in points.iter().enumerate() {
            h.insert(i, p);
        }
        h
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    pub fn insert(&mut self, id: usize, p: &[f64]) {
        let k = self.key(p);
        self.buckets.entry(k).or_default().push(id);
    }

    /// Calls `visit` for every stored id in the cells adjacent to `p`; all
    /// ids within distance `cell` of `p` are visited.
    pub fn for_each_near(&self, p: &[f64], mut visit: impl FnMut(usize)) {
        let base = self.key(p);
        let mut offset = vec![-1i64; self.n];
        let mut key = base.clone();
        loop {
            for i in 0..self.n {
                key[i] = base[i] + offset[i];
            }
            if let Some(ids) = self.buckets.get(&key) {
                ids.iter().for_each(|&id| visit(id));
            }
            // odometer over {-1,0,1}^n
            let mut i = 0;
            loop {
                if i == self.n {
                    return;
                }
                offset[i] += 1;
                if offset[i] <= 1 {
                    break;
                }
                offset[i] = -1;
                i += 1;
            }
        }
    }
}
