use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Node-level train/val/test membership of one graph.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn all_false(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    /// Masks of a graph that belongs wholly to one split.
    pub fn whole(n: usize, split: super::Split) -> Self {
        let mut m = Self::all_false(n);
        let target = match split {
            super::Split::Train => &mut m.train,
            super::Split::Val => &mut m.val,
            super::Split::Test => &mut m.test,
        };
        target.fill(true);
        m
    }

    /// First node claimed by more than one split.
    pub fn overlap(&self) -> Option<usize> {
        (0..self.train.len().min(self.val.len()).min(self.test.len()))
            .find(|&i| u8::from(self.train[i]) + u8::from(self.val[i]) + u8::from(self.test[i]) > 1)
    }

    pub fn count(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Planetoid-style split: 20 training nodes per class, then 500 validation
/// and 1000 test nodes, all drawn from one seeded permutation.
pub fn make_planetoid_split(labels: &[usize], num_classes: usize, seed: u64) -> Result<Masks> {
    make_split(labels, num_classes, SplitSizes::default(), seed)
}

/// Walks a seeded permutation of the nodes. The first `per_class` nodes
/// seen of each class go to training; of the remaining nodes, in
/// permutation order, the first `val` go to validation and the next
/// `test` to test.
pub fn make_split(labels: &[usize], num_classes: usize, sizes: SplitSizes, seed: u64) -> Result<Masks> {
    let n = labels.len();
    let mut per_class = vec![0usize; num_classes];
    for (i, &y) in labels.iter().enumerate() {
        let slot = per_class
            .get_mut(y)
            .ok_or_else(|| Error::validation("labels", format!("node {i} has label {y} outside [0, {num_classes})")))?;
        *slot += 1;
    }
    if let Some((c, &count)) = per_class.iter().enumerate().find(|(_, &k)| k < sizes.per_class) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has {count} nodes, fewer than the {} required for training",
            sizes.per_class
        )));
    }
    let needed = sizes.per_class * num_classes + sizes.val + sizes.test;
    if n < needed {
        return Err(Error::InvalidArgument(format!(
            "{n} nodes, fewer than the {needed} needed for the split"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));

    let mut masks = Masks::all_false(n);
    let mut taken = vec![0usize; num_classes];
    let mut rest = Vec::with_capacity(n);
    for &i in &order {
        let y = labels[i];
        if taken[y] < sizes.per_class {
            taken[y] += 1;
            masks.train[i] = true;
        } else {
            rest.push(i);
        }
    }
    for &i in &rest[..sizes.val] {
        masks.val[i] = true;
    }
    for &i in &rest[sizes.val..sizes.val + sizes.test] {
        masks.test[i] = true;
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cora_like_labels() -> Vec<usize> {
        // 2708 nodes over 7 classes, unevenly sized like the real graph.
        let sizes = [351, 217, 418, 818, 426, 298, 180];
        sizes.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat(c).take(k)).collect()
    }

    #[test]
    fn cora_sized_split_counts() {
        let labels = cora_like_labels();
        assert_eq!(labels.len(), 2708);
        let m = make_planetoid_split(&labels, 7, 1).unwrap();
        assert_eq!(m.count(), (140, 500, 1000));
        assert_eq!(m.overlap(), None);
        let mut per_class = [0; 7];
        for (i, &t) in m.train.iter().enumerate() {
            if t {
                per_class[labels[i]] += 1;
            }
        }
        assert_eq!(per_class, [20; 7]);
    }

    #[test]
    fn same_seed_same_masks() {
        let labels = cora_like_labels();
        let a = make_planetoid_split(&labels, 7, 42).unwrap();
        let b = make_planetoid_split(&labels, 7, 42).unwrap();
        let c = make_planetoid_split(&labels, 7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_small_classes_and_small_graphs() {
        let mut labels = vec![0usize; 2000];
        labels.extend(vec![1usize; 19]);
        assert!(make_planetoid_split(&labels, 2, 0).is_err());
        let labels: Vec<usize> = (0..1500).map(|i| i % 3).collect();
        assert!(make_planetoid_split(&labels, 3, 0).is_err());
    }

    #[test]
    fn whole_graph_masks() {
        let m = Masks::whole(3, crate::graph::Split::Val);
        assert_eq!(m.val, vec![true; 3]);
        assert_eq!(m.count(), (0, 3, 0));
    }
}
