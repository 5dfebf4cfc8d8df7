use std::collections::{HashMap, HashSet};

use super::skeleton::Skeleton;
use crate::error::{Error, Result};
use crate::volume::SegmentationVolume;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegemCounts {
    pub splits: usize,
    pub mergers: usize,
}

/// Split and merger counts from skeleton/segment correspondence: a skeleton
/// corresponds to a non-zero segment holding at least `k` of its nodes.
pub fn segem_counts(skeletons: &[Skeleton], r: &SegmentationVolume, k: usize) -> Result<SegemCounts> {
    if k == 0 {
        return Err(Error::Precondition("node threshold k must be at least 1".into()));
    }
    let mut skeletons_per_segment: HashMap<u32, HashSet<usize>> = HashMap::new();
    let mut splits = 0;
    for (s, sk) in skeletons.iter().enumerate() {
        sk.check_bounds(r.dims())?;
        let mut hits: HashMap<u32, usize> = HashMap::new();
        for n in &sk.nodes {
            let l = r.get(n.position);
            if l != 0 {
                *hits.entry(l).or_default() += 1;
            }
        }
        let corresponding: Vec<u32> = hits.into_iter().filter(|&(_, c)| c >= k).map(|(l, _)| l).collect();
        splits += corresponding.len().saturating_sub(1);
        for l in corresponding {
            skeletons_per_segment.entry(l).or_default().insert(s);
        }
    }
    let mergers = skeletons_per_segment.values().map(|s| s.len().saturating_sub(1)).sum();
    Ok(SegemCounts { splits, mergers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn sk(id: u32, y: usize) -> Skeleton {
        Skeleton::chain(id, &[[0, y, 0], [1, y, 0], [2, y, 0]])
    }

    #[test]
    fn perfect_is_zero() {
        let sks = vec![sk(1, 0), sk(2, 2)];
        let r = Grid::from_fn([4, 4, 1], |[_, y, _]| match y {
            0 => 1,
            2 => 2,
            _ => 0,
        });
        assert_eq!(segem_counts(&sks, &r, 1).unwrap(), SegemCounts::default());
    }

    #[test]
    fn one_segment_over_all_skeletons() {
        let sks: Vec<Skeleton> = (0..4).map(|i| sk(i + 1, i as usize)).collect();
        let r = Grid::filled([4, 4, 1], 9);
        assert_eq!(segem_counts(&sks, &r, 2).unwrap(), SegemCounts { splits: 0, mergers: 3 });
    }

    #[test]
    fn threshold_k_filters_single_node_contacts() {
        let sks = vec![sk(1, 0)];
        let r = Grid::from_fn([4, 4, 1], |[x, _, _]| if x == 2 { 2 } else { 1 });
        assert_eq!(segem_counts(&sks, &r, 1).unwrap().splits, 1);
        assert_eq!(segem_counts(&sks, &r, 2).unwrap().splits, 0);
    }

    #[test]
    fn zero_k_rejected() {
        assert!(segem_counts(&[], &Grid::filled([1, 1, 1], 0), 0).is_err());
    }
}
