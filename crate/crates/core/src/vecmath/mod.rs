//! Dense vector and matrix primitives shared by every other module.
//!
//! Slices are the common currency: operations take `&[f64]` so both
//! [`Vector`] values and matrix rows can be passed without copying.

mod pca;

pub use pca::{pca_fit, write_projection_csv, PcaModel, ProjectionRow};

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("vector must have at least one coordinate"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "vector coordinate {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Vector::new(values)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "flat buffer of length {} cannot be shaped {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty row list yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::contract(format!(
                    "row {i} has dimension {} but row 0 has {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copies the selected rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn squared_distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot_unchecked(v, v).sqrt()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("cosine similarity of a zero-norm vector"));
    }
    Ok((dot_unchecked(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vector> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::domain("cannot normalize a zero-norm vector"));
    }
    Vector::new(v.iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - 0.70710678).abs() < 1e-8);
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[1.0, 0.0], &[1.0]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![]).is_err());
        let json = serde_json::to_string(&Vector::new(vec![0.5, -1.0]).unwrap()).unwrap();
        assert_eq!(json, "[0.5,-1.0]");
    }

    #[test]
    fn matrix_rejects_ragged_rows() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(Matrix::from_rows(&rows), Err(Error::Contract(_))));
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.select_rows(&[1, 0]).row(0), &[3.0, 4.0]);
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, dim)
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(v in (1usize..16).prop_flat_map(nonzero_vec)) {
            let c = cosine_similarity(&v, &v).unwrap();
            prop_assert!((c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cosine_scale_invariant(
            (a, b) in (1usize..16).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
            s in 1e-3f64..1e3,
        ) {
            let base = cosine_similarity(&a, &b).unwrap();
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - base).abs() < 1e-12);
            prop_assert!((cosine_similarity(&b, &a).unwrap() - base).abs() < 1e-15);
        }

        #[test]
        fn normalized_has_unit_norm(v in (1usize..16).prop_flat_map(nonzero_vec)) {
            let u = l2_normalize(&v).unwrap();
            prop_assert!((norm(&u) - 1.0).abs() < 1e-12);
            prop_assert!((cosine_similarity(&u, &v).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
