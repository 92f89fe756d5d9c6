use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PixelFeatures;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<u32>,
    /// k×dim, row-major.
    pub centroids: Vec<f64>,
    /// Sum of squared distances after each centroid update.
    pub objective_history: Vec<f64>,
    /// Number of Lloyd iterations performed.
    pub iterations: usize,
    /// Whether the assignment reached a fixpoint before `max_iter`.
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const ASSIGN_BLOCK: usize = 1024;

/// Nearest centroid per point, ties to the lowest index, plus that distance.
fn assign(features: &PixelFeatures, centroids: &[f64]) -> Vec<(u32, f64)> {
    let (n, dim) = (features.len(), features.dim);
    let blocks = n.div_ceil(ASSIGN_BLOCK);
    par::map_range(blocks, |b| {
        (b * ASSIGN_BLOCK..((b + 1) * ASSIGN_BLOCK).min(n))
            .map(|i| {
                let row = features.row(i);
                let mut best = (0u32, f64::INFINITY);
                for (j, c) in centroids.chunks_exact(dim).enumerate() {
                    let d = sq_dist(row, c);
                    if d < best.1 {
                        best = (j as u32, d);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Member means; a cluster without members keeps its previous centroid.
fn means(features: &PixelFeatures, labels: &[u32], k: usize, previous: &[f64]) -> Vec<f64> {
    let dim = features.dim;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let l = l as usize;
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for (j, c) in sums.chunks_exact_mut(dim).enumerate() {
        if counts[j] > 0 {
            let inv = 1.0 / counts[j] as f64;
            c.iter_mut().for_each(|v| *v *= inv);
        } else {
            c.copy_from_slice(&previous[j * dim..(j + 1) * dim]);
        }
    }
    sums
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn kmeans_objective(features: &PixelFeatures, labels: &[u32], centroids: &[f64]) -> f64 {
    let dim = features.dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(features.row(i), &centroids[l as usize * dim..(l as usize + 1) * dim]))
        .sum()
}

fn plus_plus_seeds(features: &PixelFeatures, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = features.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(features.row(i), features.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // Rounding can run past the end; fall back to the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // All remaining points coincide with a seed.
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(features.row(i), features.row(next)));
        }
    }
    chosen
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Empty clusters are re-seeded with the point farthest from its centroid
/// (taken from a cluster that keeps at least one member). On convergence
/// every point sits at its nearest centroid and every centroid is the mean of
/// its points. A cluster can only stay empty when there are fewer distinct
/// points than clusters.
pub fn kmeans(features: &PixelFeatures, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = features.len();
    if k == 0 || max_iter == 0 {
        return Err(Error::invalid("kmeans: k and max_iter must be ≥ 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("kmeans: k = {k} exceeds the {n} points")));
    }
    let dim = features.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f64> = plus_plus_seeds(features, k, &mut rng)
        .into_iter()
        .flat_map(|i| features.row(i).to_vec())
        .collect();

    let mut assigned = assign(features, &centroids);
    let mut labels: Vec<u32> = assigned.iter().map(|a| a.0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        reseed_empty(features, k, &mut labels, &mut assigned, &mut centroids);
        centroids = means(features, &labels, k, &centroids);
        history.push(kmeans_objective(features, &labels, &centroids));
        iterations += 1;
        assigned = assign(features, &centroids);
        let next: Vec<u32> = assigned.iter().map(|a| a.0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        if iterations >= max_iter {
            break;
        }
    }
    debug_assert_eq!(centroids.len(), k * dim);
    Ok(KMeansResult {
        labels,
        centroids,
        objective_history: history,
        iterations,
        converged,
    })
}

fn reseed_empty(
    features: &PixelFeatures,
    k: usize,
    labels: &mut [u32],
    assigned: &mut [(u32, f64)],
    centroids: &mut [f64],
) {
    let dim = features.dim;
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l as usize] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i] as usize] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if assigned[b].1 >= assigned[i].1 => Some(b),
                _ => Some(i),
            })
            .expect("k ≤ N leaves a cluster with two members");
        if assigned[far].1 == 0.0 {
            // Every point already sits on a centroid.
            continue;
        }
        counts[labels[far] as usize] -= 1;
        counts[j] = 1;
        labels[far] = j as u32;
        assigned[far] = (j as u32, 0.0);
        centroids[j * dim..(j + 1) * dim].copy_from_slice(features.row(far));
    }
}
