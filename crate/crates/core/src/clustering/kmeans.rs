//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative inertia improvement below which Lloyd iterations stop.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub converged: bool,
    /// Index of the winning restart.
    pub best_restart: usize,
    /// Inertia after every Lloyd iteration, per restart.
    pub restart_traces: Vec<Vec<f64>>,
    /// Number of empty clusters re-seeded over all restarts.
    pub repairs: usize,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn count_distinct(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Infeasible("no points to cluster".into()))?;
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(dim)
}

/// Clusters `points` into `params.k` groups, keeping the restart with the
/// lowest inertia (earliest restart on ties). Deterministic given the seed.
pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansFit> {
    check_points(points)?;
    let distinct = count_distinct(points);
    if params.k == 0 || params.k > distinct {
        return Err(Error::Infeasible(format!(
            "cannot form {} clusters from {distinct} distinct points",
            params.k
        )));
    }
    kmeans_unchecked(points, params)
}

/// Like [`kmeans`] but tolerates fewer distinct points than clusters; empty
/// clusters are then filled by the repair step with duplicate points.
pub(crate) fn kmeans_unchecked(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansFit> {
    check_points(points)?;
    if params.k == 0 || params.k > points.len() {
        return Err(Error::Infeasible(format!(
            "cannot form {} clusters from {} points",
            params.k,
            points.len()
        )));
    }
    if params.restarts == 0 || params.max_iters == 0 {
        return Err(Error::Config(
            "restarts and max_iters must be positive".into(),
        ));
    }
    let runs: Vec<Run> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(r as u64);
            lloyd(points, params, &mut rng)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = i;
        }
    }
    let repairs = runs.iter().map(|r| r.repairs).sum();
    let restart_traces = runs.iter().map(|r| r.trace.clone()).collect();
    let winner = runs.into_iter().nth(best).expect("at least one restart");
    Ok(KMeansFit {
        centroids: winner.centroids,
        labels: winner.labels,
        inertia: winner.inertia,
        converged: winner.converged,
        best_restart: best,
        restart_traces,
        repairs,
    })
}

struct Run {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    inertia: f64,
    trace: Vec<f64>,
    converged: bool,
    repairs: usize,
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Assigns every point to its nearest centroid; returns how many labels changed.
fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize]) -> usize {
    let mut changed = 0;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let (j, _) = nearest(p, centroids);
        if *l != j {
            *l = j;
            changed += 1;
        }
    }
    changed
}

fn means(
    points: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    dim: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// Recomputes centroids as cluster means, moving the point farthest from its
/// centroid into each empty cluster. Returns the number of repairs.
fn update(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut Vec<Vec<f64>>) -> usize {
    let k = centroids.len();
    let dim = points[0].len();
    let mut repairs = 0;
    loop {
        let (m, counts) = means(points, labels, k, dim);
        *centroids = m;
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repairs;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let far = far.expect("k <= n guarantees a cluster with two members");
        labels[far] = empty;
        repairs += 1;
    }
}

pub(crate) fn inertia_of(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn lloyd(points: &[Vec<f64>], params: &KMeansParams, rng: &mut ChaCha8Rng) -> Run {
    let mut centroids = plus_plus_init(points, params.k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut repairs = 0;
    let mut converged = false;
    let mut iters = 0;
    let mut prev = f64::INFINITY;
    while iters < params.max_iters {
        iters += 1;
        if assign(points, &centroids, &mut labels) == 0 {
            converged = true;
            break;
        }
        repairs += update(points, &mut labels, &mut centroids);
        let inertia = inertia_of(points, &labels, &centroids);
        trace.push(inertia);
        if prev.is_finite() && prev - inertia <= params.tol * prev {
            // Improvement has stalled; finish at a fixed point so that the
            // labels are exactly the nearest-centroid assignment.
            while iters < params.max_iters {
                iters += 1;
                if assign(points, &centroids, &mut labels) == 0 {
                    converged = true;
                    break;
                }
                repairs += update(points, &mut labels, &mut centroids);
                trace.push(inertia_of(points, &labels, &centroids));
            }
            break;
        }
        prev = inertia;
    }
    let inertia = inertia_of(points, &labels, &centroids);
    Run {
        centroids,
        labels,
        inertia,
        trace,
        converged,
        repairs,
    }
}
