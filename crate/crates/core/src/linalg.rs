//! Small dense linear-algebra helpers shared by the reduction, synthesis and
//! simulation modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ConsensusError, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// All eigenvalues of a real square matrix, via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(ConsensusError::EigenSolver(m.nrows()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect())
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// SVD rank threshold `max(rows, cols) * eps * sigma_max * scale`.
pub fn rank_tolerance(m: &DMatrix<f64>, scale: f64) -> f64 {
    let sigma_max = singular_values(m).max();
    rank_tolerance_for(m.nrows(), m.ncols(), sigma_max, scale)
}

pub(crate) fn rank_tolerance_for(rows: usize, cols: usize, sigma_max: f64, scale: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max.max(0.0) * scale
}

/// Number of singular values strictly above `tol`.
pub fn rank_with_tolerance(m: &DMatrix<f64>, tol: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > tol).count()
}

/// 2-norm condition number; infinite for singular or empty-rank input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return f64::INFINITY;
    }
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn block(m: &DMatrix<f64>, row: usize, col: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((row, col), (rows, cols)).into_owned()
}

pub fn set_block(m: &mut DMatrix<f64>, row: usize, col: usize, value: &DMatrix<f64>) {
    m.view_mut((row, col), value.shape()).copy_from(value);
}

pub fn add_block(m: &mut DMatrix<f64>, row: usize, col: usize, value: &DMatrix<f64>) {
    let mut view = m.view_mut((row, col), value.shape());
    view += value;
}

/// Block-diagonal matrix from a list of (possibly rectangular) blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        set_block(&mut out, r, c, b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Compares two spectra as multisets.
///
/// Eigenvalues from the union of both lists are grouped by single linkage
/// within `cluster_radius * (1 + |z|)`. Every group must hold equally many
/// members of `a` and `b`; the returned value is the largest distance between
/// the per-group centroids. A count mismatch yields `f64::INFINITY`.
///
/// Group centroids are well conditioned even when a repeated eigenvalue sits in
/// a Jordan block and the individual computed eigenvalues scatter at the square
/// root of machine precision.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64], cluster_radius: f64) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let all: Vec<(Complex64, bool)> = a
        .iter()
        .map(|&z| (z, true))
        .chain(b.iter().map(|&z| (z, false)))
        .collect();
    let mut group: Vec<usize> = (0..all.len()).collect();
    fn find(g: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while g[r] != r {
            r = g[r];
        }
        let mut c = i;
        while g[c] != r {
            let next = g[c];
            g[c] = r;
            c = next;
        }
        r
    }
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            let (zi, zj) = (all[i].0, all[j].0);
            let radius = cluster_radius * (1.0 + zi.norm().max(zj.norm()));
            if (zi - zj).norm() <= radius {
                let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                if ri != rj {
                    group[ri] = rj;
                }
            }
        }
    }
    let mut sums: std::collections::BTreeMap<usize, (Complex64, usize, Complex64, usize)> =
        Default::default();
    for (i, &(z, from_a)) in all.iter().enumerate() {
        let root = find(&mut group, i);
        let entry = sums
            .entry(root)
            .or_insert((Complex64::new(0.0, 0.0), 0, Complex64::new(0.0, 0.0), 0));
        if from_a {
            entry.0 += z;
            entry.1 += 1;
        } else {
            entry.2 += z;
            entry.3 += 1;
        }
    }
    let mut worst = 0.0_f64;
    for (sa, na, sb, nb) in sums.values() {
        if na != nb {
            return f64::INFINITY;
        }
        let d = (sa / *na as f64 - sb / *nb as f64).norm();
        worst = worst.max(d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_rotation_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert_relative_eq!(ev[0].im, -1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1].im, 1.0, epsilon = 1e-12);
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12));
    }

    #[test]
    fn empty_matrix_has_no_eigenvalues() {
        assert!(eigenvalues(&DMatrix::zeros(0, 0)).unwrap().is_empty());
        assert_eq!(spectral_abscissa(&DMatrix::zeros(0, 0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        let z = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(rank_with_tolerance(&z, rank_tolerance(&z, 1.0)), 0);
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(2, 1, 2.0);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn spectrum_distance_handles_split_double_root() {
        let eps = 1e-8;
        let a = vec![Complex64::new(-1.0 + eps, 0.0), Complex64::new(-1.0 - eps, 0.0)];
        let b = vec![Complex64::new(-1.0, eps), Complex64::new(-1.0, -eps)];
        assert!(spectrum_distance(&a, &b, 1e-5) < 1e-14);
        let c = vec![Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)];
        assert_eq!(spectrum_distance(&a, &c, 1e-5), f64::INFINITY);
    }
}
