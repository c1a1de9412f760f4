//! Spam batch construction: unique uniformly drawn IPv4 addresses sharing a
//! single future timestamp, the payload one spamming session sends a victim.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use super::{AddrRecord, NetAddress, Timestamp, DEFAULT_PORT};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpamBatchError {
    #[error("requested {requested} addresses but only {available} remain in the v4 space")]
    SpaceExhausted { requested: u64, available: u64 },
    #[error("batch size must be at least 1")]
    EmptyBatch,
}

/// Draws `count` distinct uniform v4 addresses, all tagged with `ts`.
/// Reserved blocks are not excluded here; routability filtering happens at
/// relay time, mirroring how the spam wave actually traversed the network.
pub fn make_spam_batch(
    seed: u64,
    count: usize,
    ts: Timestamp,
) -> Result<Vec<AddrRecord>, SpamBatchError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    make_spam_batch_with(&mut rng, count, ts, &mut used)
}

/// Like [`make_spam_batch`] but draws from a caller-held RNG and skips any
/// address already present in `used`, so batches sent to different victims
/// with the same timestamp never share a tuple. Drawn addresses are added
/// to `used`.
pub fn make_spam_batch_with(
    rng: &mut impl Rng,
    count: usize,
    ts: Timestamp,
    used: &mut HashSet<u32>,
) -> Result<Vec<AddrRecord>, SpamBatchError> {
    if count == 0 {
        return Err(SpamBatchError::EmptyBatch);
    }
    let available = (1u64 << 32) - used.len() as u64;
    if count as u64 > available {
        return Err(SpamBatchError::SpaceExhausted {
            requested: count as u64,
            available,
        });
    }
    let mut batch = Vec::with_capacity(count);
    while batch.len() < count {
        let value = rng.gen::<u32>();
        if used.insert(value) {
            batch.push(AddrRecord::new(NetAddress::v4(value, DEFAULT_PORT), ts));
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RoutabilityPolicy;

    #[test]
    fn batch_is_unique_and_shares_one_timestamp() {
        let ts = Timestamp(86_940);
        let batch = make_spam_batch(1, 5_000, ts).unwrap();
        assert_eq!(batch.len(), 5_000);
        let distinct: HashSet<_> = batch.iter().map(|r| r.address).collect();
        assert_eq!(distinct.len(), 5_000);
        assert!(batch.iter().all(|r| r.timestamp == ts));
    }

    #[test]
    fn same_seed_reproduces_the_batch() {
        let a = make_spam_batch(42, 5_000, Timestamp(600)).unwrap();
        let b = make_spam_batch(42, 5_000, Timestamp(600)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exclusion_set_keeps_same_timestamp_batches_disjoint() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut used = HashSet::new();
        let ts = Timestamp(540);
        let a = make_spam_batch_with(&mut rng, 5_000, ts, &mut used).unwrap();
        let b = make_spam_batch_with(&mut rng, 5_000, ts, &mut used).unwrap();
        let set_a: HashSet<_> = a.iter().map(|r| r.address).collect();
        assert!(b.iter().all(|r| !set_a.contains(&r.address)));
        assert_eq!(used.len(), 10_000);
    }

    #[test]
    fn routable_share_per_batch_matches_policy_expectation() {
        let policy = RoutabilityPolicy::default();
        let expected = 5_000.0 * (1.0 - policy.excluded_v4_fraction());
        let runs = 200;
        let mut total = 0usize;
        for seed in 0..runs {
            let batch = make_spam_batch(seed, 5_000, Timestamp(0)).unwrap();
            total += batch
                .iter()
                .filter(|r| policy.is_routable(&r.address))
                .count();
        }
        let mean = total as f64 / runs as f64;
        // Per-batch sd is ~8, so the mean of 200 batches sits within ~±2.
        assert!((mean - expected).abs() < 2.5, "mean {mean} vs {expected}");
        assert!((mean - 4_935.0).abs() < 3.0);
    }

    #[test]
    fn zero_count_rejected() {
        assert_eq!(
            make_spam_batch(1, 0, Timestamp(0)).unwrap_err(),
            SpamBatchError::EmptyBatch
        );
    }
}
