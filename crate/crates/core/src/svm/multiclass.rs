use rayon::prelude::*;

use super::kernel::{Kernel, KernelSpec};
use super::model::{fit_resolved, SvmModel, TrainConfig};
use crate::error::{Error, Result};
use crate::vecmath::Matrix;

/// One-vs-one ensemble over `k` classes.
///
/// `classes` is sorted; the model for the pair `(classes[a], classes[b])`
/// with `a < b` puts `classes[a]` on the negative side.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassModel {
    classes: Vec<String>,
    pairwise: Vec<PairModel>,
}

#[derive(Debug, Clone, PartialEq)]
struct PairModel {
    a: usize,
    b: usize,
    model: SvmModel,
}

impl MulticlassModel {
    /// Assembles an ensemble from already-trained pairwise models, which must
    /// cover every unordered pair of `classes` exactly once.
    pub fn new(classes: Vec<String>, models: Vec<SvmModel>) -> Result<Self> {
        let mut sorted = classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != classes.len() || sorted != classes {
            return Err(Error::contract("multiclass labels must be sorted and distinct"));
        }
        let k = classes.len();
        if k < 2 {
            return Err(Error::contract("multiclass model needs at least two classes"));
        }
        if models.len() != k * (k - 1) / 2 {
            return Err(Error::contract(format!(
                "{k} classes need {} pairwise models, got {}",
                k * (k - 1) / 2,
                models.len()
            )));
        }
        let index = |name: &str| classes.iter().position(|c| c == name);
        let mut seen = vec![false; k * k];
        let mut pairwise = Vec::with_capacity(models.len());
        let dim = models[0].dim();
        for model in models {
            let (Some(a), Some(b)) = (index(&model.classes[0]), index(&model.classes[1])) else {
                return Err(Error::contract("pairwise model refers to an unknown class"));
            };
            if a >= b || std::mem::replace(&mut seen[a * k + b], true) {
                return Err(Error::contract(format!(
                    "pairwise model ({}, {}) is misordered or duplicated",
                    model.classes[0], model.classes[1]
                )));
            }
            if model.dim() != dim {
                return Err(Error::contract("pairwise models disagree on input dimension"));
            }
            pairwise.push(PairModel { a, b, model });
        }
        pairwise.sort_by_key(|p| (p.a, p.b));
        Ok(MulticlassModel { classes, pairwise })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.pairwise[0].model.dim()
    }

    pub fn n_pairwise(&self) -> usize {
        self.pairwise.len()
    }

    /// Pairwise models in class-pair order.
    pub fn pairwise(&self) -> impl Iterator<Item = (&str, &str, &SvmModel)> {
        self.pairwise
            .iter()
            .map(|p| (self.classes[p.a].as_str(), self.classes[p.b].as_str(), &p.model))
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&SvmModel> {
        self.pairwise
            .iter()
            .find(|p| {
                let (x, y) = (&self.classes[p.a], &self.classes[p.b]);
                (x == a && y == b) || (x == b && y == a)
            })
            .map(|p| &p.model)
    }

    /// Per-class vote counts and summed `|decision|` over the pairs each class won.
    pub fn votes(&self, x: &[f64]) -> Result<(Vec<u32>, Vec<f64>)> {
        if x.len() != self.dim() {
            return Err(Error::contract(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let k = self.classes.len();
        let mut votes = vec![0u32; k];
        let mut strength = vec![0.0; k];
        for p in &self.pairwise {
            let d = p.model.decision_unchecked(x);
            let winner = if d < 0.0 { p.a } else { p.b };
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        Ok((votes, strength))
    }

    /// Most votes wins; ties go to the larger summed margin, then to the
    /// class that sorts first.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let (votes, strength) = self.votes(x)?;
        let mut best = 0;
        for c in 1..votes.len() {
            if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
                best = c;
            }
        }
        Ok(&self.classes[best])
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<String>> {
        x.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| self.predict(row).map(str::to_owned))
            .collect()
    }
}

pub fn predict_multiclass<'m>(model: &'m MulticlassModel, x: &[f64]) -> Result<&'m str> {
    model.predict(x)
}

/// Trains one binary model per unordered class pair on that pair's rows.
///
/// `gamma = "scale"` is resolved once on the full `x` so every pair shares a kernel.
pub fn train_multiclass<S: AsRef<str> + Sync>(
    x: &Matrix,
    labels: &[S],
    kernel: &KernelSpec,
    cfg: &TrainConfig,
) -> Result<MulticlassModel> {
    if x.nrows() != labels.len() {
        return Err(Error::contract(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let mut classes: Vec<String> = labels.iter().map(|l| l.as_ref().to_owned()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::contract(format!(
            "multiclass training needs at least two classes, found {}",
            classes.len()
        )));
    }
    let class_idx: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).unwrap())
        .collect();
    let resolved: Kernel = kernel.resolve(x)?;

    let k = classes.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let models = pairs
        .par_iter()
        .map(|&(a, b)| {
            let rows: Vec<usize> = (0..labels.len())
                .filter(|&i| class_idx[i] == a || class_idx[i] == b)
                .collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|&i| if class_idx[i] == a { -1.0 } else { 1.0 })
                .collect();
            let sub = x.select_rows(&rows);
            let names = [classes[a].clone(), classes[b].clone()];
            fit_resolved(&sub, &y, resolved, cfg, names).map(|fit| fit.model)
        })
        .collect::<Result<Vec<_>>>()?;
    MulticlassModel::new(classes, models)
}
