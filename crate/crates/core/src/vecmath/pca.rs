use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{dot_unchecked, Matrix, Vector};
use crate::error::{Error, Result};

/// Principal axes of a mean-centred dataset.
///
/// `components` holds one orthonormal axis per row, ordered by decreasing
/// explained variance. Each axis has its largest-magnitude coordinate made
/// positive so fits are reproducible bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vector,
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

/// Fits `k` principal components using the unbiased (n - 1) sample covariance.
pub fn pca_fit(data: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (data.nrows(), data.ncols());
    if n < 2 {
        return Err(Error::contract(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::contract("PCA needs at least one column"));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::contract(format!(
            "k = {k} must lie in 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    if data.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("PCA input contains non-finite values"));
    }

    let mut mean = vec![0.0; d];
    for row in data.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centred = vec![0.0; d];
    for row in data.rows() {
        for (c, (x, m)) in centred.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centred[i];
            for j in i..d {
                cov[(i, j)] += ci * centred[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // Descending eigenvalue, stable on index for exact ties.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (r, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let norm = col.norm();
        let row = components.row_mut(r);
        for (dst, src) in row.iter_mut().zip(col.iter()) {
            *dst = src / norm;
        }
        fix_sign(row);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean: Vector::new(mean)?,
        components,
        explained_variance,
    })
}

fn fix_sign(axis: &mut [f64]) {
    let mut pivot = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[pivot].abs() {
            pivot = i;
        }
    }
    if axis[pivot] < 0.0 {
        for v in axis.iter_mut() {
            *v = -*v;
        }
    }
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// `components · (v - mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.dim() {
            return Err(Error::contract(format!(
                "cannot project a {}-D vector with a {}-D PCA model",
                v.len(),
                self.dim()
            )));
        }
        let centred: Vec<f64> = v.iter().zip(self.mean.iter()).map(|(x, m)| x - m).collect();
        Vector::new(
            self.components
                .rows()
                .map(|axis| dot_unchecked(axis, &centred))
                .collect(),
        )
    }

    /// Maps a projection back to input space: `mean + componentsᵀ · p`.
    pub fn reconstruct(&self, projection: &[f64]) -> Result<Vector> {
        if projection.len() != self.n_components() {
            return Err(Error::contract(format!(
                "projection has {} coordinates, model has {} components",
                projection.len(),
                self.n_components()
            )));
        }
        let mut out = self.mean.as_slice().to_vec();
        for (axis, p) in self.components.rows().zip(projection) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += a * p;
            }
        }
        Vector::new(out)
    }
}

/// One line of a 2-D projection export.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub id: String,
    pub source: String,
    pub x: f64,
    pub y: f64,
}

fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Writes `id,source,x,y` CSV with LF line endings.
pub fn write_projection_csv<W: Write>(mut out: W, rows: &[ProjectionRow]) -> std::io::Result<()> {
    out.write_all(b"id,source,x,y\n")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", csv_field(&r.id), csv_field(&r.source), r.x, r.y)?;
    }
    out.flush()
}
