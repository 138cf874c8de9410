use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelSpec};
use super::smo::{self, DualSolution};
use crate::error::{Error, Result};
use crate::vecmath::{dot_unchecked, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Soft-margin penalty.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap in units of the training-set size.
    pub max_passes: usize,
    /// Carried for reproducibility records; working-set selection is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            tol: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::contract(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::contract(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == 0 {
            return Err(Error::contract("max_passes must be positive"));
        }
        Ok(())
    }
}

/// A trained two-class kernel SVM.
///
/// `classes[0]` is the label on the negative side of the decision function,
/// `classes[1]` the positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support_vectors: Matrix,
    /// `αᵢyᵢ` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub classes: [String; 2],
    linear_weights: Option<Vec<f64>>,
}

/// A trained model together with the full dual solution it came from.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub model: SvmModel,
    pub solution: DualSolution,
}

impl SvmModel {
    pub fn new(
        kernel: Kernel,
        support_vectors: Matrix,
        dual_coefs: Vec<f64>,
        bias: f64,
        classes: [String; 2],
    ) -> Result<Self> {
        if support_vectors.nrows() != dual_coefs.len() {
            return Err(Error::contract(format!(
                "{} support vectors but {} dual coefficients",
                support_vectors.nrows(),
                dual_coefs.len()
            )));
        }
        if !bias.is_finite() || dual_coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("model parameters must be finite"));
        }
        if classes[0] == classes[1] {
            return Err(Error::contract("a binary model needs two distinct classes"));
        }
        let linear_weights = match kernel {
            Kernel::Linear => {
                let mut w = vec![0.0; support_vectors.ncols()];
                for (sv, coef) in support_vectors.rows().zip(&dual_coefs) {
                    for (wi, xi) in w.iter_mut().zip(sv) {
                        *wi += coef * xi;
                    }
                }
                Some(w)
            }
            _ => None,
        };
        Ok(SvmModel {
            kernel,
            support_vectors,
            dual_coefs,
            bias,
            classes,
            linear_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `Σ dual_coefs[i] · K(svᵢ, x) + bias`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::contract(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        if let Some(w) = &self.linear_weights {
            return dot_unchecked(w, x) + self.bias;
        }
        self.support_vectors
            .rows()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// `classes[0]` when the decision is negative, otherwise `classes[1]`
    /// (a decision of exactly zero goes to `classes[1]`).
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let d = self.decision_function(x)?;
        Ok(self.label_for(d))
    }

    pub(crate) fn label_for(&self, decision: f64) -> &str {
        if decision < 0.0 {
            &self.classes[0]
        } else {
            &self.classes[1]
        }
    }
}

pub fn decision_function(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.decision_function(x)
}

pub fn predict_binary<'m>(model: &'m SvmModel, x: &[f64]) -> Result<&'m str> {
    model.predict(x)
}

fn check_training_input(x: &Matrix, n_labels: usize) -> Result<()> {
    if x.nrows() != n_labels {
        return Err(Error::contract(format!(
            "{} rows but {} labels",
            x.nrows(),
            n_labels
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::contract("training needs at least two rows"));
    }
    if x.ncols() == 0 {
        return Err(Error::contract("training rows must have at least one feature"));
    }
    if x.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("training data contains non-finite values"));
    }
    Ok(())
}

/// Solves the dual for ±1 targets with an already-resolved kernel.
pub(crate) fn fit_resolved(
    x: &Matrix,
    y: &[f64],
    kernel: Kernel,
    cfg: &TrainConfig,
    classes: [String; 2],
) -> Result<BinaryFit> {
    cfg.validate()?;
    check_training_input(x, y.len())?;
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::contract("binary training needs both classes present"));
    }
    let max_iter = cfg.max_passes.saturating_mul(x.nrows());
    let solution = smo::solve(&kernel, x, y, cfg.c, cfg.tol, max_iter)?;

    let sv_idx: Vec<usize> = (0..y.len()).filter(|&i| solution.alpha[i] > 0.0).collect();
    let support_vectors = x.select_rows(&sv_idx);
    let dual_coefs = sv_idx.iter().map(|&i| solution.alpha[i] * y[i]).collect();
    let model = SvmModel::new(kernel, support_vectors, dual_coefs, solution.bias, classes)?;
    Ok(BinaryFit { model, solution })
}

/// Trains on labels in `{-1, +1}`; the model's classes are `["-1", "+1"]`.
pub fn train_binary(x: &Matrix, y: &[i8], kernel: &KernelSpec, cfg: &TrainConfig) -> Result<SvmModel> {
    Ok(train_binary_detailed(x, y, kernel, cfg)?.model)
}

pub fn train_binary_detailed(
    x: &Matrix,
    y: &[i8],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
) -> Result<BinaryFit> {
    check_training_input(x, y.len())?;
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::contract(format!("binary labels must be -1 or +1, got {bad}")));
    }
    let targets: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let resolved = kernel.resolve(x)?;
    fit_resolved(x, &targets, resolved, cfg, ["-1".into(), "+1".into()])
}

/// Trains on two string labels; the lexicographically smaller becomes the
/// negative class.
pub fn train_binary_labeled<S: AsRef<str>>(
    x: &Matrix,
    labels: &[S],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
) -> Result<SvmModel> {
    check_training_input(x, labels.len())?;
    let mut classes: Vec<&str> = labels.iter().map(AsRef::as_ref).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::contract(format!(
            "binary training needs exactly two labels, found {}",
            classes.len()
        )));
    }
    let y: Vec<f64> = labels
        .iter()
        .map(|l| if l.as_ref() == classes[0] { -1.0 } else { 1.0 })
        .collect();
    let resolved = kernel.resolve(x)?;
    let names = [classes[0].to_string(), classes[1].to_string()];
    Ok(fit_resolved(x, &y, resolved, cfg, names)?.model)
}
