use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const CONVERGENCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<const D: usize> {
    pub labels: Vec<usize>,
    pub centers: Vec<[f64; D]>,
    pub iterations: usize,
    /// Total within-cluster squared distance after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means from explicit seeds.
///
/// Assignment ties go to the lowest center index. A center left without
/// points is moved onto the point farthest from its assigned center (lowest
/// index on ties) before the update step.
pub fn kmeans_cluster<const D: usize>(points: &[[f64; D]], seeds: &[[f64; D]]) -> Result<KMeansResult<D>> {
    let k = seeds.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one seed".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut centers = seeds.to_vec();
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut inertia = assign(points, &centers, &mut labels);
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = farthest_point(points, &centers, &labels);
                let old = labels[far];
                inertia -= dist2(&points[far], &centers[old]);
                counts[old] -= 1;
                counts[c] = 1;
                labels[far] = c;
                centers[c] = points[far];
            }
        }
        history.push(inertia);

        let mut sums = vec![[0.0; D]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for d in 0..D {
                sums[l][d] += p[d];
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut next = [0.0; D];
            for d in 0..D {
                next[d] = sums[c][d] / counts[c] as f64;
            }
            shift = shift.max(dist2(&next, &centers[c]).sqrt());
            centers[c] = next;
        }
        if shift < CONVERGENCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    // Final labels against the final centers.
    let inertia = assign(points, &centers, &mut labels);
    if history.last().is_none_or(|&last| inertia < last) {
        history.push(inertia);
    }
    Ok(KMeansResult {
        labels,
        centers,
        iterations,
        inertia_history: history,
    })
}

fn assign<const D: usize>(points: &[[f64; D]], centers: &[[f64; D]], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, label) in points.iter().zip(labels.iter_mut()) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = dist2(p, center);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *label = best;
        inertia += best_d;
    }
    inertia
}

fn farthest_point<const D: usize>(points: &[[f64; D]], centers: &[[f64; D]], labels: &[usize]) -> usize {
    let mut far = 0;
    let mut far_d = -1.0;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &centers[labels[i]]);
        if d > far_d {
            far = i;
            far_d = d;
        }
    }
    far
}
