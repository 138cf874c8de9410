use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths<P: AsRef<str>, T: AsRef<str>>(preds: &[P], truth: &[T]) -> Result<()> {
    if preds.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} ground-truth labels",
            preds.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::contract("accuracy of an empty set is undefined"));
    }
    Ok(())
}

/// Accuracy within each ground-truth class.
pub fn per_class_accuracy<P: AsRef<str>, T: AsRef<str>>(preds: &[P], truth: &[T]) -> Result<BTreeMap<String, f64>> {
    check_lengths(preds, truth)?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, t) in preds.iter().zip(truth) {
        let e = tally.entry(t.as_ref()).or_default();
        e.1 += 1;
        if p.as_ref() == t.as_ref() {
            e.0 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(c, (ok, n))| (c.to_owned(), ok as f64 / n as f64))
        .collect())
}

/// Unweighted mean of per-class accuracies over the classes in `truth`.
pub fn macro_accuracy<P: AsRef<str>, T: AsRef<str>>(preds: &[P], truth: &[T]) -> Result<f64> {
    Ok(mean_of(&per_class_accuracy(preds, truth)?))
}

/// Macro accuracy over an explicit class list; every listed class must occur in `truth`.
pub fn macro_accuracy_over<P: AsRef<str>, T: AsRef<str>>(
    preds: &[P],
    truth: &[T],
    classes: &[&str],
) -> Result<f64> {
    let per = per_class_accuracy(preds, truth)?;
    if let Some(missing) = classes.iter().find(|c| !per.contains_key(**c)) {
        return Err(Error::contract(format!("class {missing:?} has no ground-truth samples")));
    }
    Ok(classes.iter().map(|c| per[*c]).sum::<f64>() / classes.len() as f64)
}

pub(crate) fn mean_of(per_class: &BTreeMap<String, f64>) -> f64 {
    per_class.values().sum::<f64>() / per_class.len() as f64
}

/// Counts indexed `[truth][prediction]` over a sorted label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new<P: AsRef<str>, T: AsRef<str>>(preds: &[P], truth: &[T]) -> Result<Self> {
        check_lengths(preds, truth)?;
        let labels: Vec<String> = truth
            .iter()
            .map(AsRef::as_ref)
            .chain(preds.iter().map(AsRef::as_ref))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let idx = |s: &str| labels.binary_search_by(|l| l.as_str().cmp(s)).unwrap();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (p, t) in preds.iter().zip(truth) {
            counts[idx(t.as_ref())][idx(p.as_ref())] += 1;
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn get(&self, truth: &str, pred: &str) -> u64 {
        let i = self.labels.iter().position(|l| l == truth);
        let j = self.labels.iter().position(|l| l == pred);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Per video: `positive` iff it labels more than half of the frames.
pub fn aggregate_video<S: AsRef<str>>(
    frame_preds: &BTreeMap<String, Vec<S>>,
    positive: &str,
    negative: &str,
) -> Result<BTreeMap<String, String>> {
    frame_preds
        .iter()
        .map(|(video, preds)| {
            if preds.is_empty() {
                return Err(Error::contract(format!("video {video} has no frame predictions")));
            }
            let hits = preds.iter().filter(|p| p.as_ref() == positive).count();
            let label = if 2 * hits > preds.len() { positive } else { negative };
            Ok((video.clone(), label.to_owned()))
        })
        .collect()
}

/// Per video: the most frequent frame label, ties going to the label that
/// comes first in `class_order` (labels absent from it sort after, by name).
pub fn aggregate_video_plurality<S: AsRef<str>>(
    frame_preds: &BTreeMap<String, Vec<S>>,
    class_order: &[String],
) -> Result<BTreeMap<String, String>> {
    let rank = |l: &str| class_order.iter().position(|c| c == l).unwrap_or(usize::MAX);
    frame_preds
        .iter()
        .map(|(video, preds)| {
            if preds.is_empty() {
                return Err(Error::contract(format!("video {video} has no frame predictions")));
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for p in preds {
                *counts.entry(p.as_ref()).or_default() += 1;
            }
            let best = counts
                .into_iter()
                .min_by(|(a, na), (b, nb)| nb.cmp(na).then(rank(a).cmp(&rank(b))).then(a.cmp(b)))
                .map(|(l, _)| l.to_owned())
                .expect("non-empty");
            Ok((video.clone(), best))
        })
        .collect()
}
