//! Two-component PCA by power iteration with deflation.

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;
const CONVERGED: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub mean: Vec<f64>,
    /// Unit-norm principal directions.
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// Fraction of total variance carried by each component.
    pub explained: [f64; 2],
    pub projections: Vec<[f64; 2]>,
}

impl Pca2d {
    pub fn explained_total(&self) -> f64 {
        self.explained[0] + self.explained[1]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Leading eigenvector of a symmetric PSD matrix, kept orthogonal to `avoid`.
fn power_iteration(cov: &[Vec<f64>], avoid: Option<&[f64]>) -> (Vec<f64>, f64) {
    let d = cov.len();
    let project_out = |v: &mut Vec<f64>| {
        if let Some(u) = avoid {
            let p = dot(v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
    };
    // fixed, non-symmetric start so no eigen-direction is missed by construction
    let mut v: Vec<f64> = (0..d)
        .map(|i| 1.0 + ((i * 7 + 3) % 11) as f64 / 10.0)
        .collect();
    project_out(&mut v);
    if normalize(&mut v) == 0.0 {
        v = vec![0.0; d];
        v[d - 1] = 1.0;
        project_out(&mut v);
        normalize(&mut v);
    }
    for _ in 0..MAX_ITER {
        let mut next = mat_vec(cov, &v);
        project_out(&mut next);
        if normalize(&mut next) == 0.0 {
            break;
        }
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if delta < CONVERGED {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(cov, &v)).max(0.0);
    (v, lambda)
}

#[allow(clippy::needless_range_loop)]
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca2d> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "PCA needs at least 3 points, got {}",
            points.len()
        )));
    }
    let d = points[0].len();
    if d < 2 {
        return Err(Error::Degenerate("PCA needs at least 2 dimensions".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for c in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total <= f64::EPSILON * d as f64 * mean.iter().map(|m| m * m).sum::<f64>().max(1.0) {
        return Err(Error::Degenerate("all points are identical".into()));
    }

    let (v1, l1) = power_iteration(&cov, None);
    let deflated: Vec<Vec<f64>> = cov
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, c)| c - l1 * v1[i] * v1[j])
                .collect()
        })
        .collect();
    let (v2, l2) = power_iteration(&deflated, Some(&v1));

    let projections = centered
        .iter()
        .map(|c| [dot(c, &v1), dot(c, &v2)])
        .collect();
    Ok(Pca2d {
        mean,
        eigenvalues: [l1, l2],
        explained: [l1 / total, l2 / total],
        components: [v1, v2],
        projections,
    })
}
