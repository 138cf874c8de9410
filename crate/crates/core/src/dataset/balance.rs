use std::collections::BTreeMap;

use super::VideoRecord;
use crate::error::{Error, Result};
use crate::rng::{Purpose, SeededRng};

/// Spreads `quota` over strata as evenly as capacities allow. Strata are
/// visited in `order`, which decides who receives the remainder.
fn water_fill(quota: usize, capacities: &[usize], order: &[usize]) -> Vec<usize> {
    let mut alloc = vec![0usize; capacities.len()];
    let mut remaining = quota;
    while remaining > 0 {
        let active: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&s| alloc[s] < capacities[s])
            .collect();
        if active.is_empty() {
            break;
        }
        let base = remaining / active.len();
        let extra = remaining % active.len();
        for (k, &s) in active.iter().enumerate() {
            let want = base + usize::from(k < extra);
            let give = want.min(capacities[s] - alloc[s]);
            alloc[s] += give;
            remaining -= give;
        }
    }
    alloc
}

/// Undersamples every class to the size of the smallest one, keeping whole
/// videos. A class made of several sources is sampled stratified across
/// them, each source contributing the floor or ceiling of an even share.
/// The surviving records keep their input order.
pub fn balance_undersample<F>(
    records: &[VideoRecord],
    class_of: F,
    seed: u64,
    repetition: u64,
) -> Result<Vec<VideoRecord>>
where
    F: Fn(&VideoRecord) -> String,
{
    // class -> source -> record indices
    let mut classes: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        classes
            .entry(class_of(r))
            .or_default()
            .entry(r.source.label().to_string())
            .or_default()
            .push(i);
    }
    if classes.len() < 2 {
        return Err(Error::contract(format!(
            "balancing needs at least two classes, found {}",
            classes.len()
        )));
    }
    let quota = classes
        .values()
        .map(|strata| strata.values().map(Vec::len).sum::<usize>())
        .min()
        .unwrap_or(0);

    let mut rng = SeededRng::new(seed, Purpose::Balance, repetition);
    let mut keep = Vec::with_capacity(quota * classes.len());
    for strata in classes.into_values() {
        let mut members: Vec<Vec<usize>> = strata.into_values().collect();
        let capacities: Vec<usize> = members.iter().map(Vec::len).collect();
        let mut order: Vec<usize> = (0..members.len()).collect();
        rng.shuffle(&mut order);
        let alloc = water_fill(quota, &capacities, &order);
        for (pool, take) in members.iter_mut().zip(alloc) {
            // Partial Fisher–Yates: the first `take` slots become a uniform sample.
            for i in 0..take {
                let j = i + rng.bounded(pool.len() - i);
                pool.swap(i, j);
            }
            keep.extend_from_slice(&pool[..take]);
        }
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| records[i].clone()).collect())
}

/// Two-class labelling: "Real" versus everything else as "Fake".
pub fn real_vs_fake(r: &VideoRecord) -> String {
    if r.source.is_real() { "Real" } else { "Fake" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use std::collections::HashMap;

    fn rec(id: String, source: Source) -> VideoRecord {
        VideoRecord {
            video_id: id,
            source,
            action_id: 0,
            path: "x.mp4".into(),
            width: 8,
            height: 8,
            duration: 1.0,
            fps: 10.0,
        }
    }

    fn corpus(real: usize, per_source: usize) -> Vec<VideoRecord> {
        let mut out: Vec<VideoRecord> =
            (0..real).map(|i| rec(format!("r{i}"), Source::Real)).collect();
        for s in Source::GENERATORS {
            for i in 0..per_source {
                out.push(rec(format!("{}{i}", s.label()), s.clone()));
            }
        }
        out
    }

    #[test]
    fn seven_sources_share_the_quota() {
        let out = balance_undersample(&corpus(100, 100), real_vs_fake, 11, 0).unwrap();
        let mut per_source: HashMap<String, usize> = HashMap::new();
        for r in &out {
            *per_source.entry(r.source.label().to_string()).or_default() += 1;
        }
        assert_eq!(per_source["Real"], 100);
        let fake: Vec<usize> = Source::GENERATORS.iter().map(|s| per_source[s.label()]).collect();
        assert_eq!(fake.iter().sum::<usize>(), 100);
        // 100 = 2 * 15 + 5 * 14
        assert_eq!(fake.iter().filter(|&&c| c == 15).count(), 2);
        assert_eq!(fake.iter().filter(|&&c| c == 14).count(), 5);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let mut input: Vec<VideoRecord> = (0..4).map(|i| rec(format!("r{i}"), Source::Real)).collect();
        input.extend((0..4).map(|i| rec(format!("v{i}"), Source::Veo)));
        let out = balance_undersample(&input, real_vs_fake, 5, 0).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn min_class_rule() {
        let mut input: Vec<VideoRecord> = (0..5).map(|i| rec(format!("r{i}"), Source::Real)).collect();
        input.extend((0..3).map(|i| rec(format!("v{i}"), Source::Veo)));
        let out = balance_undersample(&input, real_vs_fake, 5, 0).unwrap();
        assert_eq!(out.iter().filter(|r| r.source.is_real()).count(), 3);
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn single_class_rejected() {
        let input: Vec<VideoRecord> = (0..3).map(|i| rec(format!("r{i}"), Source::Real)).collect();
        assert!(matches!(
            balance_undersample(&input, real_vs_fake, 0, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn short_sources_are_topped_up_by_others() {
        let mut input: Vec<VideoRecord> = (0..10).map(|i| rec(format!("r{i}"), Source::Real)).collect();
        input.extend((0..1).map(|i| rec(format!("v{i}"), Source::Veo)));
        input.extend((0..20).map(|i| rec(format!("l{i}"), Source::Lumiere)));
        let out = balance_undersample(&input, real_vs_fake, 2, 0).unwrap();
        assert_eq!(out.iter().filter(|r| r.source == Source::Veo).count(), 1);
        assert_eq!(out.iter().filter(|r| r.source == Source::Lumiere).count(), 9);
    }

    #[test]
    fn seeded_and_redrawn_per_repetition() {
        let input = corpus(10, 10);
        let a = balance_undersample(&input, real_vs_fake, 9, 0).unwrap();
        let b = balance_undersample(&input, real_vs_fake, 9, 0).unwrap();
        let c = balance_undersample(&input, real_vs_fake, 9, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
