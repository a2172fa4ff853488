//! Lloyd's k-means with k-means++ seeding.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            tol: 1e-8,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step, in order.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KMeansModel {
    pub fn from_centroids(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centroids.first().map(Vec::len).unwrap_or(0);
        if centroids.is_empty() || dim == 0 {
            return Err(Error::InvalidClusterCount { k: 0, distinct: 0 });
        }
        if let Some(c) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.len(),
            });
        }
        Ok(Self {
            centroids,
            inertia: 0.0,
            inertia_history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Nearest centroid; ties go to the lowest cluster id.
    pub fn assign(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(nearest(&self.centroids, v).0)
    }

    /// `kmeans <k> <dim> <inertia>` followed by one centroid per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("kmeans {} {} {}\n", self.k(), self.dim(), self.inertia);
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(format!("kmeans: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split(' ')
            .collect();
        let ["kmeans", k, dim, inertia] = header[..] else {
            return Err(bad("bad header"));
        };
        let k: usize = k.parse().map_err(|_| bad("bad k"))?;
        let dim: usize = dim.parse().map_err(|_| bad("bad dim"))?;
        let inertia: f64 = inertia.parse().map_err(|_| bad("bad inertia"))?;
        let centroids = (0..k)
            .map(|_| {
                let row = lines
                    .next()
                    .ok_or_else(|| bad("missing centroid"))?
                    .split(' ')
                    .map(|p| p.parse::<f64>().map_err(|_| bad("bad value")))
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != dim {
                    return Err(bad("centroid width differs from dim"));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::from_centroids(centroids)?;
        model.inertia = inertia;
        Ok(model)
    }
}

fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_points(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && x < d {
                pick = i;
                break;
            }
            x -= d;
        }
        let chosen = points[pick].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &chosen));
        }
        centroids.push(chosen);
    }
    centroids
}

pub fn kmeans_fit(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansModel> {
    let distinct = distinct_points(points);
    if cfg.k == 0 || cfg.k > distinct {
        return Err(Error::InvalidClusterCount { k: cfg.k, distinct });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_plus_plus(points, cfg.k, &mut rng);
    let mut history = Vec::new();
    let mut labels = vec![0usize; points.len()];

    for _ in 0..cfg.max_iter {
        let mut inertia = 0.0;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (c, d) = nearest(&centroids, p);
            *l = c;
            inertia += d;
        }
        history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // an empty cluster keeps its previous centroid
            if n == 0 {
                continue;
            }
            let mean: Vec<f64> = s.into_iter().map(|x| x / n as f64).collect();
            shift = shift.max(sq_dist(c, &mean).sqrt());
            *c = mean;
        }
        if shift < cfg.tol {
            break;
        }
    }
    let inertia: f64 = points.iter().map(|p| nearest(&centroids, p).1).sum();
    history.push(inertia);
    Ok(KMeansModel {
        centroids,
        inertia,
        inertia_history: history,
    })
}
