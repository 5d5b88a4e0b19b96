//! Minibatch sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derives an independent stream seed from a run seed and a stream path
/// (worker, updater, ...). SplitMix64 finalizer over the mixed words.
pub fn stream_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0xD1B5_4A32_D192_ED03)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform i.i.d. indices in `0..n`, with replacement.
pub fn sample_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// i.i.d. with replacement.
    #[default]
    Iid,
    /// Each epoch a seeded permutation of the dataset is split into disjoint
    /// shards, one per sampling stream; a stream walks its shard in order.
    EpochPartition,
}

/// Per-stream batch source. Each updater (or baseline worker) owns one.
#[derive(Debug, Clone)]
pub struct Sampler {
    n: usize,
    state: SamplerState,
}

#[derive(Debug, Clone)]
enum SamplerState {
    Iid(ChaCha8Rng),
    Epoch {
        seed: u64,
        stream: usize,
        streams: usize,
        epoch: u64,
        shard: Vec<usize>,
        pos: usize,
    },
}

impl Sampler {
    pub fn iid(n: usize, seed: u64) -> Self {
        Sampler {
            n,
            state: SamplerState::Iid(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Epoch-partition sampler for `stream` of `streams`. All streams must
    /// share `seed` so their shards are disjoint.
    pub fn epoch_partition(n: usize, seed: u64, stream: usize, streams: usize) -> Self {
        assert!(stream < streams, "stream {stream} out of {streams}");
        let mut sampler = Sampler {
            n,
            state: SamplerState::Epoch {
                seed,
                stream,
                streams,
                epoch: 0,
                shard: Vec::new(),
                pos: 0,
            },
        };
        sampler.refill();
        sampler
    }

    pub fn new(mode: SamplingMode, n: usize, seed: u64, stream: usize, streams: usize) -> Self {
        match mode {
            SamplingMode::Iid => Self::iid(n, stream_seed(seed, &[stream as u64])),
            SamplingMode::EpochPartition => Self::epoch_partition(n, seed, stream, streams),
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        match &mut self.state {
            SamplerState::Iid(rng) => sample_batch(rng, self.n, size),
            SamplerState::Epoch { .. } => (0..size).map(|_| self.next_epoch_index()).collect(),
        }
    }

    fn next_epoch_index(&mut self) -> usize {
        loop {
            if let SamplerState::Epoch { shard, pos, .. } = &mut self.state {
                if *pos < shard.len() {
                    *pos += 1;
                    return shard[*pos - 1];
                }
            }
            self.refill();
        }
    }

    fn refill(&mut self) {
        let n = self.n;
        if let SamplerState::Epoch {
            seed,
            stream,
            streams,
            epoch,
            shard,
            pos,
        } = &mut self.state
        {
            // Streams beyond n would get empty shards forever; fall back to
            // the whole permutation for them.
            loop {
                let mut perm: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(*seed, &[u64::MAX, *epoch]));
                perm.shuffle(&mut rng);
                *epoch += 1;
                *shard = if *streams <= n {
                    perm.into_iter()
                        .skip(*stream)
                        .step_by(*streams)
                        .collect()
                } else {
                    perm
                };
                *pos = 0;
                if !shard.is_empty() {
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic_given_seed() {
        let a = Sampler::iid(10, 42).next_batch(3);
        let b = Sampler::iid(10, 42).next_batch(3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn oversized_batches_allowed() {
        let batch = Sampler::iid(4, 1).next_batch(100);
        assert_eq!(batch.len(), 100);
        assert!(batch.iter().all(|&i| i < 4));
    }

    #[test]
    fn epoch_shards_are_disjoint_and_cover() {
        let n = 23;
        let streams = 3;
        let mut seen = Vec::new();
        for s in 0..streams {
            let mut sampler = Sampler::epoch_partition(n, 9, s, streams);
            let shard_len = (n - s).div_ceil(streams);
            seen.extend(sampler.next_batch(shard_len));
        }
        let unique: HashSet<usize> = seen.iter().copied().collect();
        assert_eq!(unique.len(), n);
        assert_eq!(seen.len(), n);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, &[0, 0]), stream_seed(1, &[0, 1]));
        assert_ne!(stream_seed(1, &[0, 1]), stream_seed(1, &[1, 0]));
        assert_eq!(stream_seed(5, &[2]), stream_seed(5, &[2]));
    }
}
