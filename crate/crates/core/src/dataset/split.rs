use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Manifest, VideoRecord};
use crate::error::{Error, Result};
use crate::rng::{Purpose, SeededRng};

pub const FINETUNE: &str = "finetune";
pub const TRAIN: &str = "train";
pub const TEST: &str = "test";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitScheme {
    #[serde(rename = "80-20")]
    TrainTest80_20,
    #[serde(rename = "40-40-20")]
    FinetuneTrainTest40_40_20,
}

impl SplitScheme {
    /// Partition names and fractions in shuffle order.
    pub fn partitions(self) -> &'static [(&'static str, f64)] {
        match self {
            SplitScheme::TrainTest80_20 => &[(TRAIN, 0.8), (TEST, 0.2)],
            SplitScheme::FinetuneTrainTest40_40_20 => &[(FINETUNE, 0.4), (TRAIN, 0.4), (TEST, 0.2)],
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitScheme::TrainTest80_20 => "80-20",
            SplitScheme::FinetuneTrainTest40_40_20 => "40-40-20",
        })
    }
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "80-20" | "80/20" => Ok(SplitScheme::TrainTest80_20),
            "40-40-20" | "40/40/20" => Ok(SplitScheme::FinetuneTrainTest40_40_20),
            other => Err(Error::parse("split scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub repetition: u64,
}

/// Action-level partition of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub partitions: BTreeMap<String, BTreeSet<u32>>,
}

impl Split {
    pub fn partition(&self, name: &str) -> Option<&BTreeSet<u32>> {
        self.partitions.get(name)
    }

    pub fn train(&self) -> &BTreeSet<u32> {
        &self.partitions[TRAIN]
    }

    pub fn test(&self) -> &BTreeSet<u32> {
        &self.partitions[TEST]
    }

    /// Records whose action falls in the named partition, in manifest order.
    pub fn videos<'m>(&self, manifest: &'m Manifest, name: &str) -> Vec<&'m VideoRecord> {
        match self.partitions.get(name) {
            Some(actions) => manifest
                .records()
                .iter()
                .filter(|r| actions.contains(&r.action_id))
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Partition sizes by cumulative rounding, forcing every partition non-empty.
fn partition_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let parts = fractions.len();
    let mut bounds = Vec::with_capacity(parts);
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (i, f) in fractions.iter().enumerate() {
        cum += f;
        let remaining = parts - i - 1;
        let ideal = if remaining == 0 { n } else { (cum * n as f64).round() as usize };
        let b = ideal.clamp(prev + 1, n - remaining);
        bounds.push(b);
        prev = b;
    }
    let mut last = 0;
    bounds
        .into_iter()
        .map(|b| {
            let s = b - last;
            last = b;
            s
        })
        .collect()
}

/// Shuffles the manifest's action ids with the `(seed, repetition)` stream and
/// cuts them by the scheme's fractions.
pub fn make_split(manifest: &Manifest, spec: SplitSpec) -> Result<Split> {
    let mut actions: Vec<u32> = manifest.action_ids().into_iter().collect();
    let parts = spec.scheme.partitions();
    if actions.is_empty() {
        return Err(Error::contract("cannot split an empty manifest"));
    }
    if actions.len() < parts.len() {
        return Err(Error::contract(format!(
            "{} action(s) cannot fill {} partitions",
            actions.len(),
            parts.len()
        )));
    }
    SeededRng::new(spec.seed, Purpose::Split, spec.repetition).shuffle(&mut actions);

    let fractions: Vec<f64> = parts.iter().map(|(_, f)| *f).collect();
    let sizes = partition_sizes(actions.len(), &fractions);
    let mut partitions = BTreeMap::new();
    let mut rest = actions.as_slice();
    for ((name, _), size) in parts.iter().zip(sizes) {
        let (head, tail) = rest.split_at(size);
        partitions.insert(name.to_string(), head.iter().copied().collect());
        rest = tail;
    }
    Ok(Split { partitions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Source, VideoRecord};

    pub(crate) fn corpus(actions: u32) -> Manifest {
        let mut records = Vec::new();
        for a in 0..actions {
            for (k, s) in [Source::Real, Source::Veo, Source::Lumiere].into_iter().enumerate() {
                records.push(VideoRecord {
                    video_id: format!("a{a}_{k}"),
                    source: s,
                    action_id: a,
                    path: format!("a{a}_{k}.mp4").into(),
                    width: 64,
                    height: 64,
                    duration: 2.0,
                    fps: 30.0,
                });
            }
        }
        Manifest::new(records, (0..actions).map(|i| format!("p{i}")).collect()).unwrap()
    }

    fn spec(scheme: SplitScheme, seed: u64, repetition: u64) -> SplitSpec {
        SplitSpec { scheme, seed, repetition }
    }

    #[test]
    fn eighty_twenty_on_hundred_actions() {
        let m = corpus(100);
        let s = make_split(&m, spec(SplitScheme::TrainTest80_20, 7, 0)).unwrap();
        assert_eq!(s.train().len(), 80);
        assert_eq!(s.test().len(), 20);
        assert!(s.train().is_disjoint(s.test()));
    }

    #[test]
    fn forty_forty_twenty() {
        let m = corpus(100);
        let s = make_split(&m, spec(SplitScheme::FinetuneTrainTest40_40_20, 7, 0)).unwrap();
        assert_eq!(s.partition(FINETUNE).unwrap().len(), 40);
        assert_eq!(s.train().len(), 40);
        assert_eq!(s.test().len(), 20);
    }

    #[test]
    fn deterministic_and_repetition_keyed() {
        let m = corpus(100);
        let a = make_split(&m, spec(SplitScheme::TrainTest80_20, 7, 0)).unwrap();
        let b = make_split(&m, spec(SplitScheme::TrainTest80_20, 7, 0)).unwrap();
        let c = make_split(&m, spec(SplitScheme::TrainTest80_20, 7, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn small_corpora() {
        assert_eq!(partition_sizes(2, &[0.8, 0.2]), vec![1, 1]);
        assert_eq!(partition_sizes(3, &[0.4, 0.4, 0.2]), vec![1, 1, 1]);
        assert_eq!(partition_sizes(10, &[0.4, 0.4, 0.2]), vec![4, 4, 2]);
        let m = corpus(2);
        assert!(make_split(&m, spec(SplitScheme::FinetuneTrainTest40_40_20, 1, 0)).is_err());
        let m = Manifest::new(vec![], vec!["p".into()]).unwrap();
        assert!(matches!(
            make_split(&m, spec(SplitScheme::TrainTest80_20, 1, 0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn induced_video_sets_disjoint() {
        let m = corpus(30);
        let s = make_split(&m, spec(SplitScheme::TrainTest80_20, 3, 4)).unwrap();
        let train: BTreeSet<_> = s.videos(&m, TRAIN).iter().map(|r| &r.video_id).collect();
        let test: BTreeSet<_> = s.videos(&m, TEST).iter().map(|r| &r.video_id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), m.records().len());
    }
}
