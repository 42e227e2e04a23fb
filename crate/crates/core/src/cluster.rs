//! Cosine-distance DBSCAN and canonical-intent extraction.
//!
//! Points are visited in input order and clusters are numbered in discovery
//! order. A border point reachable from several clusters stays with the
//! first cluster that reached it.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbedError};
use crate::types::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_samples: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 0.25, min_samples: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("eps must be in (0, 2], got {0}")]
    InvalidEps(f64),
    #[error("min_samples must be at least 1")]
    InvalidMinSamples,
    #[error("no points to cluster")]
    Empty,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl DbscanParams {
    pub fn new(eps: f64, min_samples: usize) -> Result<Self, ClusterError> {
        let p = Self { eps, min_samples };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), ClusterError> {
        if !(self.eps > 0.0 && self.eps <= 2.0) {
            return Err(ClusterError::InvalidEps(self.eps));
        }
        if self.min_samples < 1 {
            return Err(ClusterError::InvalidMinSamples);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Cluster(usize),
    Noise,
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(id) => Some(id),
            Label::Noise => None,
        }
    }
}

pub fn cosine_distance(a: &Vector, b: &Vector) -> Result<f64, EmbedError> {
    Ok(1.0 - cosine(a, b)?)
}

/// Labels each point with a cluster id or [`Label::Noise`].
///
/// A point is core when at least `min_samples` points (itself included) lie
/// within cosine distance `eps`.
pub fn dbscan(points: &[Vector], params: &DbscanParams) -> Result<Vec<Label>, ClusterError> {
    params.check()?;
    if points.is_empty() {
        return Err(ClusterError::Empty);
    }
    let n = points.len();
    let dim = points[0].dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != dim) {
        return Err(EmbedError::DimensionMismatch { expected: dim, got: bad.dim() }.into());
    }

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        neighbors[i].push(i);
        for j in (i + 1)..n {
            if cosine_distance(&points[i], &points[j])? <= params.eps {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_samples).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next_id = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[start] = Some(id);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    Ok(labels.into_iter().map(|l| l.map_or(Label::Noise, Label::Cluster)).collect())
}

/// A group of intent strings sharing one canonical label.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentCluster {
    pub category: String,
    pub canonical_label: String,
    pub member_intents: Vec<(String, Vector)>,
    pub centroid: Vector,
}

impl IntentCluster {
    pub fn contains(&self, intent: &str) -> bool {
        self.member_intents.iter().any(|(s, _)| s == intent)
    }
}

/// Member maximizing total cosine similarity to the others; ties go to the
/// lexicographically smallest intent string.
pub fn medoid(members: &[(String, Vector)]) -> Result<usize, EmbedError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (label, v)) in members.iter().enumerate() {
        let mut total = 0.0;
        for (j, (_, w)) in members.iter().enumerate() {
            if i != j {
                total += cosine(v, w)?;
            }
        }
        best = match best {
            None => Some((i, total)),
            Some((b, bt)) => {
                if total > bt || (total == bt && *label < members[b].0) {
                    Some((i, total))
                } else {
                    Some((b, bt))
                }
            }
        };
    }
    Ok(best.map(|(i, _)| i).unwrap_or(0))
}

/// L2-normalized mean of the member vectors.
pub fn centroid(members: &[(String, Vector)]) -> Result<Vector, EmbedError> {
    let dim = members[0].1.dim();
    let mut acc = vec![0.0; dim];
    for (_, v) in members {
        if v.dim() != dim {
            return Err(EmbedError::DimensionMismatch { expected: dim, got: v.dim() });
        }
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = members.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(Vector::normalized(acc)?)
}

/// Clusters one category's intents; every noise intent becomes its own
/// singleton cluster. Output order follows the first member's input index.
pub fn canonicalize(
    category: &str,
    intents: &[(String, Vector)],
    params: &DbscanParams,
) -> Result<Vec<IntentCluster>, ClusterError> {
    if intents.is_empty() {
        return Err(ClusterError::Empty);
    }
    let points: Vec<Vector> = intents.iter().map(|(_, v)| v.clone()).collect();
    let labels = dbscan(&points, params)?;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_cluster: Vec<Option<usize>> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match label {
            Label::Noise => groups.push(vec![i]),
            Label::Cluster(id) => {
                if group_of_cluster.len() <= *id {
                    group_of_cluster.resize(*id + 1, None);
                }
                match group_of_cluster[*id] {
                    Some(g) => groups[g].push(i),
                    None => {
                        group_of_cluster[*id] = Some(groups.len());
                        groups.push(vec![i]);
                    }
                }
            }
        }
    }

    groups
        .into_iter()
        .map(|members| {
            let member_intents: Vec<(String, Vector)> = members.iter().map(|&i| intents[i].clone()).collect();
            let label = member_intents[medoid(&member_intents)?].0.clone();
            let centroid = centroid(&member_intents)?;
            Ok(IntentCluster { category: String::from(category), canonical_label: label, member_intents, centroid })
        })
        .collect()
}
