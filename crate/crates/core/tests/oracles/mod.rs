//! Straightforward reference implementations used to cross-check the
//! library. Shared with the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pathbank_core::{Label, ReasoningPath, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// DBSCAN by exhaustive pairwise distances. Core points within `eps` of
/// each other are unioned; clusters are ranked by their smallest core index
/// and a border point joins the lowest-ranked cluster among its core
/// neighbours.
pub fn brute_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| 1.0 - cos(&points[i], &points[j]) <= eps).collect()).collect();
    let core: Vec<bool> = near.iter().map(|row| row.iter().filter(|b| **b).count() >= min_samples).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut rank_of_root = BTreeMap::new();
    for (i, _) in core.iter().enumerate().filter(|(_, c)| **c) {
        let r = find(&mut parent, i);
        let next = rank_of_root.len();
        rank_of_root.entry(r).or_insert(next);
    }
    (0..n)
        .map(|i| {
            if core[i] {
                Some(rank_of_root[&find(&mut parent, i)])
            } else {
                (0..n).filter(|&j| core[j] && near[i][j]).map(|j| rank_of_root[&find(&mut parent, j)]).min()
            }
        })
        .collect()
}

/// Groups point indices by cluster, dropping the label names.
pub fn partition<L: Copy + Ord>(labels: impl IntoIterator<Item = Option<L>>) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<L, BTreeSet<usize>> = BTreeMap::new();
    let mut noise = BTreeSet::new();
    for (i, l) in labels.into_iter().enumerate() {
        match l {
            Some(l) => {
                groups.entry(l).or_default().insert(i);
            }
            None => {
                noise.insert(i);
            }
        }
    }
    let mut out: BTreeSet<BTreeSet<usize>> = groups.into_values().collect();
    // Noise is kept apart from every cluster by tagging it with a sentinel.
    if !noise.is_empty() {
        noise.insert(usize::MAX);
        out.insert(noise);
    }
    out
}

pub fn label_partition(labels: &[Label]) -> BTreeSet<BTreeSet<usize>> {
    partition(labels.iter().map(|l| l.cluster()))
}

/// A random DBSCAN instance: a few noisy blobs on the sphere.
pub struct DbscanInstance {
    pub points: Vec<Vec<f64>>,
    pub eps: f64,
    pub min_samples: usize,
}

pub fn random_dbscan_instance(rng: &mut ChaCha8Rng) -> DbscanInstance {
    let dim = rng.gen_range(2..=16);
    let n = rng.gen_range(1..=50);
    let blobs = rng.gen_range(1..=5);
    let spread = rng.gen_range(0.02..0.6);
    let centers: Vec<Vec<f64>> = (0..blobs).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let points = (0..n)
        .map(|_| {
            let c = &centers[rng.gen_range(0..blobs)];
            loop {
                let p: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-spread..spread)).collect();
                if dot(&p, &p) > 1e-6 {
                    break p;
                }
            }
        })
        .collect();
    DbscanInstance { points, eps: rng.gen_range(0.01..0.6), min_samples: rng.gen_range(1..=5) }
}

pub fn to_vectors(points: &[Vec<f64>]) -> Vec<Vector> {
    points.iter().map(|p| Vector::new(p.clone()).unwrap()).collect()
}

/// Exhaustive top-k: score everything, sort by score then path, truncate.
pub fn brute_topk(question: &[f64], pool: &[(ReasoningPath, Vec<f64>)], k: usize) -> Vec<(ReasoningPath, f64)> {
    let mut scored: Vec<(ReasoningPath, f64)> = pool.iter().map(|(p, v)| (p.clone(), cos(question, v))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.steps().cmp(b.0.steps())));
    scored.truncate(k);
    scored
}

/// Hamilton apportionment with remainders compared as exact fractions:
/// ties prefer the larger category, then the smaller name.
pub fn hamilton(counts: &BTreeMap<String, usize>, size: usize) -> BTreeMap<String, usize> {
    let n: usize = counts.values().sum();
    let mut out: BTreeMap<String, usize> = counts.iter().map(|(k, c)| (k.clone(), size * c / n)).collect();
    let mut left = size - out.values().sum::<usize>();
    let mut order: Vec<&String> = counts.keys().collect();
    // remainder of size*c/n is (size*c) mod n, all over the same denominator
    order.sort_by(|a, b| {
        let (ca, cb) = (counts[*a], counts[*b]);
        ((size * cb) % n).cmp(&((size * ca) % n)).then(cb.cmp(&ca)).then(a.cmp(b))
    });
    for name in order {
        if left == 0 {
            break;
        }
        *out.get_mut(name).unwrap() += 1;
        left -= 1;
    }
    out
}

/// Closed-form Gaussian KL between isotropic posterior and prior as an
/// explicit sum over coordinates.
pub fn gaussian_kl_direct(m: f64, mu_sq: f64, s0: f64, sp: f64) -> f64 {
    0.5 * (m * sp / s0 + mu_sq / s0 - m + m * (s0 / sp).ln())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
