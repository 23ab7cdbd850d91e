use std::collections::HashMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use super::manifest::{DatasetManifest, Split};
use crate::augment::rng::keyed_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("manifest has no items")]
    EmptyManifest,
    #[error("train fraction {0} must lie in (0, 1)")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each `group` separately instead of the manifest as a whole.
    pub stratify_by_class: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            stratify_by_class: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(SplitError::BadFraction(self.train_fraction))
        }
    }
}

/// Items going to train out of a group of `n`: `floor(fraction * n)`, but at
/// least one for a nonempty group.
fn train_count(n: usize, fraction: f64) -> usize {
    // The tolerance absorbs products like 0.8 * 115 landing just below 92.
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    k.clamp(1.min(n), n)
}

/// Seeded shuffle then split. Items keep their group; output order is by group
/// (first appearance) then shuffled position.
pub fn split_dataset(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest), SplitError> {
    spec.validate()?;
    if manifest.items.is_empty() {
        return Err(SplitError::EmptyManifest);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, it) in manifest.items.iter().enumerate() {
        let key = if spec.stratify_by_class { it.group.as_str() } else { "" };
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }

    let mut train = DatasetManifest::new(manifest.classes.clone());
    let mut val = DatasetManifest::new(manifest.classes.clone());
    for key in order {
        let mut idx = groups.remove(key).expect("group recorded");
        idx.shuffle(&mut keyed_rng(spec.seed, key, "split"));
        let k = train_count(idx.len(), spec.train_fraction);
        for (pos, &i) in idx.iter().enumerate() {
            let mut item = manifest.items[i].clone();
            if pos < k {
                item.split = Split::Train;
                train.items.push(item);
            } else {
                item.split = Split::Val;
                val.items.push(item);
            }
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ManifestItem;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn manifest(counts: &[usize]) -> DatasetManifest {
        let mut m = DatasetManifest::new((0..counts.len()).map(|c| format!("c{c}")).collect());
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                m.items.push(ManifestItem {
                    image: format!("c{c}/{i}.png").into(),
                    label: format!("c{c}/{i}.txt").into(),
                    split: Split::Unassigned,
                    group: format!("c{c}"),
                    provenance: Default::default(),
                });
            }
        }
        m
    }

    fn per_group(m: &DatasetManifest, g: &str) -> usize {
        m.items.iter().filter(|i| i.group == g).count()
    }

    #[test]
    fn pku_counts_reproduce_table_rows() {
        let m = manifest(&[115, 115, 116, 116, 115, 116]);
        let (train, val) = split_dataset(&m, &SplitSpec::default()).unwrap();
        assert_eq!((train.items.len(), val.items.len()), (552, 141));
        let want = [(92, 23), (92, 23), (92, 24), (92, 24), (92, 23), (92, 24)];
        for (c, w) in want.iter().enumerate() {
            let g = format!("c{c}");
            assert_eq!((per_group(&train, &g), per_group(&val, &g)), *w);
        }
        assert!(train.items.iter().all(|i| i.split == Split::Train));
        assert!(val.items.iter().all(|i| i.split == Split::Val));
    }

    #[test]
    fn single_item_goes_to_train() {
        let m = manifest(&[1]);
        let spec = SplitSpec {
            train_fraction: 1.0 - 1e-6,
            ..Default::default()
        };
        let (train, val) = split_dataset(&m, &spec).unwrap();
        assert_eq!((train.items.len(), val.items.len()), (1, 0));
    }

    #[test]
    fn errors() {
        assert_eq!(
            split_dataset(&manifest(&[]), &SplitSpec::default()),
            Err(SplitError::EmptyManifest)
        );
        for f in [0.0, 1.0, -0.5, f64::NAN] {
            let spec = SplitSpec {
                train_fraction: f,
                ..Default::default()
            };
            assert!(matches!(
                split_dataset(&manifest(&[3]), &spec),
                Err(SplitError::BadFraction(_))
            ));
        }
    }

    #[test]
    fn seed_controls_membership() {
        let m = manifest(&[50]);
        let a = split_dataset(
            &m,
            &SplitSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = split_dataset(
            &m,
            &SplitSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let c = split_dataset(
            &m,
            &SplitSpec {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.items, c.0.items);
    }

    proptest! {
        #[test]
        fn split_is_partition(
            counts in proptest::collection::vec(1usize..60, 1..6),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
            stratify in any::<bool>(),
        ) {
            let m = manifest(&counts);
            let spec = SplitSpec { train_fraction: fraction, seed, stratify_by_class: stratify };
            let (train, val) = split_dataset(&m, &spec).unwrap();
            prop_assert_eq!(train.items.len() + val.items.len(), m.items.len());
            let t: HashSet<_> = train.items.iter().map(|i| i.image.clone()).collect();
            let v: HashSet<_> = val.items.iter().map(|i| i.image.clone()).collect();
            prop_assert!(t.is_disjoint(&v));
            let all: HashSet<_> = m.items.iter().map(|i| i.image.clone()).collect();
            prop_assert_eq!(t.union(&v).cloned().collect::<HashSet<_>>(), all);
            if stratify {
                for (c, &n) in counts.iter().enumerate() {
                    let got = per_group(&train, &format!("c{c}")) as f64 / n as f64;
                    prop_assert!((got - fraction).abs() < 1.0 / n as f64);
                }
            }
        }
    }
}
