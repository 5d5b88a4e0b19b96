//! Block partitions of the parameter vector and the block selection rule.
//!
//! Block 0 is always the full vector; blocks `1..=U` are disjoint contiguous
//! intervals covering it, defined by boundaries `0 = b_0 < b_1 < ... < b_U = d`.

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    boundaries: Vec<usize>,
}

impl BlockPartition {
    pub fn new(d: usize, boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::Partition(format!(
                "need at least two boundaries, got {boundaries:?}"
            )));
        }
        if boundaries[0] != 0 {
            return Err(Error::Partition(format!(
                "first boundary must be 0, got {}",
                boundaries[0]
            )));
        }
        if *boundaries.last().unwrap() != d {
            return Err(Error::Partition(format!(
                "last boundary must equal d={d}, got {}",
                boundaries.last().unwrap()
            )));
        }
        if let Some(w) = boundaries.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Partition(format!(
                "boundaries must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(BlockPartition { boundaries })
    }

    /// Single partition block covering the whole vector.
    pub fn trivial(d: usize) -> Result<Self> {
        Self::new(d, vec![0, d])
    }

    /// `parts` nearly equal element intervals (sizes differ by at most one).
    pub fn even(d: usize, parts: usize) -> Result<Self> {
        if parts == 0 || parts > d {
            return Err(Error::Partition(format!(
                "cannot split {d} elements into {parts} non-empty blocks"
            )));
        }
        let boundaries = (0..=parts).map(|i| i * d / parts).collect();
        Self::new(d, boundaries)
    }

    pub fn dim(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// Number of disjoint blocks `U`.
    pub fn parts(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Index range of block `id`; block 0 is the whole vector.
    pub fn block(&self, id: usize) -> Result<Range<usize>> {
        match id {
            0 => Ok(0..self.dim()),
            i if i <= self.parts() => Ok(self.boundaries[i - 1]..self.boundaries[i]),
            i => Err(Error::Block(format!(
                "block {i} does not exist in a partition with {} blocks",
                self.parts()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionReason {
    WarmStart,
    AlternateFull,
    AlternatePartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockChoice {
    pub block_id: usize,
    pub reason: SelectionReason,
}

/// Block selection rule for partial-gradient updaters.
///
/// Full model while `s <= warm_start`; afterwards odd offsets `s - warm_start`
/// take the full model and even offsets take block `rank` (1-based).
pub fn select_block(s: u64, warm_start: u64, rank: usize) -> BlockChoice {
    if s <= warm_start {
        BlockChoice {
            block_id: 0,
            reason: SelectionReason::WarmStart,
        }
    } else if (s - warm_start) % 2 == 1 {
        BlockChoice {
            block_id: 0,
            reason: SelectionReason::AlternateFull,
        }
    } else {
        BlockChoice {
            block_id: rank,
            reason: SelectionReason::AlternatePartial,
        }
    }
}

/// Layer-aligned boundaries for `parts` blocks.
///
/// `layer_sizes` are parameter counts per layer (input side first) and
/// `layer_costs` the backward cost each layer adds. Minimizes the largest
/// per-block backward segment cost; ties go to the lexicographically smallest
/// boundary list.
pub fn balanced_boundaries(
    layer_sizes: &[usize],
    layer_costs: &[u64],
    parts: usize,
) -> Result<Vec<usize>> {
    let layers = layer_sizes.len();
    if layer_costs.len() != layers {
        return Err(Error::Shape {
            expected: layers,
            got: layer_costs.len(),
        });
    }
    if parts == 0 || parts > layers {
        return Err(Error::Partition(format!(
            "cannot split {layers} layers into {parts} blocks"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Partition("layer sizes must be positive".into()));
    }

    let mut prefix = vec![0u64; layers + 1];
    for (i, &c) in layer_costs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    let seg = |a: usize, b: usize| prefix[b] - prefix[a];

    // best[k][i]: minimal max-segment cost splitting the last layers i.. into k blocks.
    const INF: u64 = u64::MAX;
    let mut best = vec![vec![INF; layers + 1]; parts + 1];
    best[0][layers] = 0;
    for k in 1..=parts {
        for i in (0..layers).rev() {
            for j in (i + 1)..=layers {
                if best[k - 1][j] == INF {
                    continue;
                }
                let cost = seg(i, j).max(best[k - 1][j]);
                if cost < best[k][i] {
                    best[k][i] = cost;
                }
            }
        }
    }

    // Walk forward choosing the smallest cut that keeps the optimum.
    let target = best[parts][0];
    let mut cuts = vec![0usize];
    let mut i = 0;
    for k in (1..=parts).rev() {
        let j = ((i + 1)..=layers)
            .find(|&j| best[k - 1][j] != INF && seg(i, j).max(best[k - 1][j]) <= target)
            .expect("optimal split exists");
        cuts.push(j);
        i = j;
    }

    let mut offsets = vec![0usize; layers + 1];
    for (i, &s) in layer_sizes.iter().enumerate() {
        offsets[i + 1] = offsets[i] + s;
    }
    Ok(cuts.into_iter().map(|c| offsets[c]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn makes_forced_blocks() {
        let p = BlockPartition::new(4, vec![0, 2, 4]).unwrap();
        assert_eq!(p.block(0).unwrap(), 0..4);
        assert_eq!(p.block(1).unwrap(), 0..2);
        assert_eq!(p.block(2).unwrap(), 2..4);
        assert!(p.block(3).is_err());

        let p = BlockPartition::new(10, vec![0, 10]).unwrap();
        assert_eq!(p.parts(), 1);
        assert_eq!(p.block(1).unwrap(), 0..10);
    }

    #[test]
    fn rejects_bad_boundaries() {
        assert!(BlockPartition::new(10, vec![0, 3, 3, 10]).is_err());
        assert!(BlockPartition::new(10, vec![1, 10]).is_err());
        assert!(BlockPartition::new(10, vec![0, 9]).is_err());
        assert!(BlockPartition::new(10, vec![0]).is_err());
        assert!(BlockPartition::new(10, vec![0, 6, 4, 10]).is_err());
    }

    #[test]
    fn even_split() {
        let p = BlockPartition::even(10, 3).unwrap();
        assert_eq!(p.boundaries(), &[0, 3, 6, 10]);
        assert!(BlockPartition::even(2, 3).is_err());
    }

    #[test]
    fn selection_rule() {
        let c = select_block(5, 100, 3);
        assert_eq!((c.block_id, c.reason), (0, SelectionReason::WarmStart));
        let c = select_block(100, 100, 3);
        assert_eq!(c.reason, SelectionReason::WarmStart);
        let c = select_block(101, 100, 3);
        assert_eq!((c.block_id, c.reason), (0, SelectionReason::AlternateFull));
        let c = select_block(102, 100, 3);
        assert_eq!((c.block_id, c.reason), (3, SelectionReason::AlternatePartial));
    }

    #[test]
    fn partial_fraction_is_nine_twentieths() {
        let total = 10_000u64;
        let warm = total / 10;
        let partial = (0..total)
            .filter(|&s| select_block(s, warm, 1).block_id != 0)
            .count() as f64;
        assert!((partial / total as f64 - 0.45).abs() < 1e-3);
    }

    #[test]
    fn balanced_degenerate_cases() {
        assert_eq!(balanced_boundaries(&[4, 4, 4, 4], &[1; 4], 1).unwrap(), vec![0, 16]);
        assert_eq!(
            balanced_boundaries(&[3, 5, 2], &[3, 5, 2], 3).unwrap(),
            vec![0, 3, 8, 10]
        );
        assert!(balanced_boundaries(&[4, 4], &[1, 1], 3).is_err());
        assert!(balanced_boundaries(&[4, 0], &[1, 1], 1).is_err());
    }
}
