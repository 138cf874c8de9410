//! Sequential minimal optimization for the soft-margin SVM dual
//!
//! ```text
//! min_α  ½ αᵀQα − eᵀα   s.t.  0 ≤ αᵢ ≤ C,  yᵀα = 0,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//! ```
//!
//! Each step picks the maximal violating pair
//! `i = argmax_{I_up} −yₜ∇ₜ`, `j = argmin_{I_low} −yₜ∇ₜ` and solves the
//! two-variable subproblem in closed form. The run stops once the pair's
//! violation `m − M` drops to `tol`, which also bounds every training
//! point's KKT violation by `tol`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;

use super::kernel::Kernel;
use crate::error::{Error, Result};
use crate::vecmath::Matrix;

/// Full Gram matrices are cached up to this many rows (512 MiB of f64).
pub const FULL_GRAM_MAX_ROWS: usize = 8192;
/// Memory budget for the on-demand row cache used above that size.
pub const ROW_CACHE_BYTES: usize = 1 << 30;

const TAU: f64 = 1e-12;

trait GramRows {
    fn diag(&self, i: usize) -> f64;
    fn row(&mut self, i: usize) -> Arc<[f64]>;
}

struct FullGram {
    n: usize,
    data: Arc<[f64]>,
    rows: Vec<Arc<[f64]>>,
}

impl FullGram {
    fn new(kernel: &Kernel, x: &Matrix) -> Self {
        let n = x.nrows();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel.eval_unchecked(xi, x.row(j));
            }
        });
        let rows = (0..n).map(|i| Arc::from(&data[i * n..(i + 1) * n])).collect();
        FullGram {
            n,
            data: data.into(),
            rows,
        }
    }
}

impl GramRows for FullGram {
    fn diag(&self, i: usize) -> f64 {
        self.data[i * self.n + i]
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        Arc::clone(&self.rows[i])
    }
}

struct LruGram<'a> {
    kernel: Kernel,
    x: &'a Matrix,
    diag: Vec<f64>,
    capacity: usize,
    rows: HashMap<usize, Arc<[f64]>>,
    order: VecDeque<usize>,
}

impl<'a> LruGram<'a> {
    fn new(kernel: &Kernel, x: &'a Matrix, budget_bytes: usize) -> Self {
        let n = x.nrows();
        let diag = (0..n).map(|i| kernel.eval_unchecked(x.row(i), x.row(i))).collect();
        let capacity = (budget_bytes / (8 * n.max(1))).max(2);
        LruGram {
            kernel: *kernel,
            x,
            diag,
            capacity,
            rows: HashMap::new(),
            order: VecDeque::new(),
        }
    }
}

impl GramRows for LruGram<'_> {
    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        if let Some(r) = self.rows.get(&i) {
            let r = Arc::clone(r);
            if let Some(pos) = self.order.iter().position(|&k| k == i) {
                self.order.remove(pos);
            }
            self.order.push_back(i);
            return r;
        }
        let xi = self.x.row(i);
        let row: Vec<f64> = (0..self.x.nrows())
            .into_par_iter()
            .map(|j| self.kernel.eval_unchecked(xi, self.x.row(j)))
            .collect();
        let row: Arc<[f64]> = row.into();
        if self.rows.len() >= self.capacity {
            if let Some(evict) = self.order.pop_front() {
                self.rows.remove(&evict);
            }
        }
        self.rows.insert(i, Arc::clone(&row));
        self.order.push_back(i);
        row
    }
}

/// Optimal dual variables and the solver's final state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Intercept `b` of `f(x) = Σ αᵢyᵢK(xᵢ, x) + b`.
    pub bias: f64,
    pub iterations: usize,
    /// Final maximal-pair violation `m − M`.
    pub violation: f64,
}

pub(crate) fn solve(
    kernel: &Kernel,
    x: &Matrix,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution> {
    if x.nrows() <= FULL_GRAM_MAX_ROWS {
        let mut gram = FullGram::new(kernel, x);
        run(&mut gram, y, c, tol, max_iter)
    } else {
        let mut gram = LruGram::new(kernel, x, ROW_CACHE_BYTES);
        run(&mut gram, y, c, tol, max_iter)
    }
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

fn run(gram: &mut dyn GramRows, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // ∇f(α) = Qα − e, starting from α = 0.
    let mut grad = vec![-1.0; n];
    let mut iterations = 0usize;
    let violation;

    loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let f = -y[t] * grad[t];
            if in_up(y[t], alpha[t], c) && f > m {
                m = f;
                i = t;
            }
            if in_low(y[t], alpha[t], c) && f < big_m {
                big_m = f;
                j = t;
            }
        }
        let gap = m - big_m;
        if i == usize::MAX || j == usize::MAX || gap <= tol {
            violation = gap.max(0.0);
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Training {
                iterations,
                violation: gap,
            });
        }
        iterations += 1;

        let ki = gram.row(i);
        let kj = gram.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kii = gram.diag(i);
        let kjj = gram.diag(j);
        let kij = ki[j];

        if y[i] != y[j] {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    }

    // ρ = mean of yₜ∇ₜ over free vectors, else the midpoint of its feasible range.
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    };

    Ok(DualSolution {
        alpha,
        bias: -rho,
        iterations,
        violation,
    })
}

/// `½ αᵀQα − Σαᵢ` evaluated directly; used for auditing solutions.
pub fn dual_objective(kernel: &Kernel, x: &Matrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval_unchecked(x.row(i), x.row(j));
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}
