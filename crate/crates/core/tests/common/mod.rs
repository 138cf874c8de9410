//! Synthetic corpora and independent numerical oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use veriframe::dataset::{Manifest, Source, VideoRecord};
use veriframe::embed::{EmbeddingRecord, EmbeddingStore};
use veriframe::rng::{Purpose, SeededRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// One video per `(action, source)`.
pub fn synth_manifest(actions: u32, sources: &[Source]) -> Manifest {
    let mut records = Vec::new();
    for a in 0..actions {
        for s in sources {
            let id = format!("{}_{a:03}", s.label());
            records.push(VideoRecord {
                path: format!("{id}.mp4").into(),
                video_id: id,
                source: s.clone(),
                action_id: a,
                width: 64,
                height: 48,
                duration: 2.0,
                fps: 30.0,
            });
        }
    }
    Manifest::new(records, (0..actions).map(|i| format!("action {i}")).collect()).unwrap()
}

/// Deterministic unit-scale direction for cluster `k`.
pub fn center(dim: usize, k: u64, scale: f64) -> Vec<f64> {
    let mut rng = SeededRng::new(0xC1u64 + k, Purpose::Synthetic, k);
    (0..dim).map(|_| scale * rng.normal()).collect()
}

/// `frames` noisy frames per video around `center_of(source)`.
pub fn synth_store(
    manifest: &Manifest,
    frames: u32,
    noise: f64,
    seed: u64,
    center_of: impl Fn(&Source) -> Vec<f64>,
) -> EmbeddingStore {
    let mut records = Vec::new();
    for (vi, v) in manifest.records().iter().enumerate() {
        let c = center_of(&v.source);
        let mut rng = SeededRng::new(seed, Purpose::Synthetic, vi as u64);
        for f in 0..frames {
            records.push(EmbeddingRecord {
                video_id: v.video_id.clone(),
                source: v.source.clone(),
                action_id: v.action_id,
                frame_index: f * 10,
                backend: "synthetic".into(),
                vector: c.iter().map(|x| (x + noise * rng.normal()) as f32).collect(),
            });
        }
    }
    let mut s = EmbeddingStore::from_records(records).unwrap();
    s.canonicalize();
    s
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues descending with unit eigenvectors as columns of `vecs[.][k]`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

/// Euclidean projection onto `{0 ≤ α ≤ c, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let g = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Minimizes `½αᵀQα − 1ᵀα` with `Q = (yyᵀ)∘K` over the SVM dual feasible
/// set by accelerated projected gradient. Returns `(α, objective)`.
pub fn dual_oracle(k: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    let objective = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += 0.5 * a[i] * a[j] * q[i][j];
            }
        }
        s - a.iter().sum::<f64>()
    };
    let lip = jacobi_eigen(&q).0[0].max(1e-12);
    let step = 1.0 / lip;
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..50_000 {
        let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - 1.0).collect();
        let xn = project_box_hyperplane(&z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>(), y, c);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let delta: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = xn.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / tn * (a - b)).collect();
        // Restart momentum when the objective rises.
        if objective(&xn) > objective(&x) {
            z = xn.clone();
            t = 1.0;
        } else {
            t = tn;
        }
        x = xn;
        if delta < 1e-13 {
            break;
        }
    }
    let obj = objective(&x);
    (x, obj)
}
