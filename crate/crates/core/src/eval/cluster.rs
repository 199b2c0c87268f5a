use crate::error::{Error, Result};
use crate::rng;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Independent seeded runs; the lowest inertia wins.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iters: 100, restarts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Member nearest each center.
    pub medoids: Vec<usize>,
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut x = rng.gen_range(0.0..total);
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("positive mass");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && x < d {
                    pick = i;
                    break;
                }
                x -= d;
            }
            pick
        } else {
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iters: usize) -> ClusterAssignment {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers);
            if *l != c {
                *l = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster at the point worst served by its center.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .expect("points");
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, &centers).0;
    }
    let mut medoids = vec![usize::MAX; k];
    let mut best = vec![f64::INFINITY; k];
    for (i, (&l, p)) in labels.iter().zip(points).enumerate() {
        let d = sq_dist(p, &centers[l]);
        if d < best[l] {
            best[l] = d;
            medoids[l] = i;
        }
    }
    let inertia = labels.iter().zip(points).map(|(&l, p)| sq_dist(p, &centers[l])).sum();
    ClusterAssignment { labels, centers, medoids, inertia }
}

/// k-means with k-means++ seeding under the Euclidean metric.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::contract(format!("k = {k} exceeds the {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::data("representations must be finite and of equal length"));
    }
    let mut best: Option<ClusterAssignment> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = rng::seeded(rng::derive_index(rng::derive(seed, "kmeans"), r as u64));
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, init, opts.max_iters.max(1));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut out = best.expect("at least one restart");
    // A cluster emptied by the final assignment takes the point nearest its center.
    for c in 0..k {
        if out.medoids[c] == usize::MAX {
            let (i, _) = nearest(&out.centers[c], points);
            out.medoids[c] = i;
        }
    }
    Ok(out)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract("labelings differ in length"));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| pairs(v)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Box-Muller sample.
    fn gaussian(rng: &mut rng::Rng) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::seeded(4);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (label, center) in [(0, [0.0, 0.0]), (1, [20.0, 20.0])] {
            for _ in 0..30 {
                pts.push(vec![center[0] + gaussian(&mut r), center[1] + gaussian(&mut r)]);
                truth.push(label);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separates_blobs() {
        let (pts, truth) = blobs();
        let a = kmeans(&pts, 2, 1, KMeansOptions::default()).unwrap();
        assert_eq!(adjusted_rand_index(&a.labels, &truth).unwrap(), 1.0);
        for (c, &m) in a.medoids.iter().enumerate() {
            assert_eq!(a.labels[m], c);
        }
    }

    #[test]
    fn k_extremes() {
        let (pts, _) = blobs();
        let one = kmeans(&pts, 1, 0, KMeansOptions::default()).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let all = kmeans(&pts, pts.len(), 0, KMeansOptions::default()).unwrap();
        let mut labels = all.labels.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), pts.len());
        assert!(all.inertia < 1e-20);
        assert!(kmeans(&pts, pts.len() + 1, 0, KMeansOptions::default()).is_err());
        assert!(kmeans(&pts, 0, 0, KMeansOptions::default()).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (pts, _) = blobs();
        let opts = KMeansOptions { restarts: 3, ..KMeansOptions::default() };
        assert_eq!(kmeans(&pts, 5, 9, opts).unwrap(), kmeans(&pts, 5, 9, opts).unwrap());
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // Reference value from the standard contingency formula.
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 0.24242424242424243).abs() < 1e-12);
        assert!(adjusted_rand_index(&[0], &[0, 1]).is_err());
    }
}
