//! First principal component of a small sample.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::geometry::{mean, Point};

/// Sample mean and unit top-eigenvector of the centered covariance.
///
/// The sign is fixed so that the first nonzero component is positive.
/// Returns `None` when the sample is empty or has no spread.
pub fn principal_direction(points: &[Point]) -> Option<(Point, Vec<f64>)> {
    let center = mean(points)?;
    let d = center.dim();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in points {
        let c: Vec<f64> = p.coords().iter().zip(center.coords()).map(|(a, m)| a - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let scale = cov.diagonal().iter().cloned().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let top = (0..d)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(b.cmp(&a)))
        .expect("dimension is at least 1");
    let mut dir: Vec<f64> = eig.eigenvectors.column(top).iter().cloned().collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    if let Some(first) = dir.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Some((center, dir))
}

/// Segment along the first principal component spanning the extreme
/// projections of the sample.
pub fn first_pc_segment(points: &[Point]) -> Option<(Point, Point)> {
    let (center, dir) = principal_direction(points)?;
    let proj = |p: &Point| -> f64 {
        p.coords().iter().zip(center.coords()).zip(&dir).map(|((a, m), u)| (a - m) * u).sum()
    };
    let (lo, hi) = points.iter().map(proj).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s), hi.max(s))
    });
    let at = |s: f64| Point::new(center.coords().iter().zip(&dir).map(|(m, u)| m + s * u).collect());
    Some((at(lo), at(hi)))
}
