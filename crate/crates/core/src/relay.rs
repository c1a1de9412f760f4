//! Addr acceptance and relay semantics.
//!
//! A peer accepts records whose timestamp is at most `accept_future_window`
//! ahead of its clock. An accepted record is considered for relay only if
//! it arrived in a small message, its timestamp has not gone stale, and the
//! address is routable; each such record is forwarded once, to `fanout`
//! uniformly chosen neighbors excluding the peer it came from. Relayed
//! records are batched per neighbor and leave on the next scheduled send.

use rand::Rng;

use crate::engine::ConnId;
use crate::model::{AddrRecord, RoutabilityPolicy, Timestamp};

/// Wire maximum for records per addr message.
pub const WIRE_MAX_RECORDS: usize = 1_000;

/// Protocol knobs for addr handling.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelayParams {
    /// Accept records stamped up to this many seconds into the future.
    pub accept_future_window_s: u64,
    /// Relay records until their timestamp is older than this.
    pub relay_staleness_window_s: u64,
    /// Only records from messages of at most this size are relayed.
    pub relay_size_threshold: usize,
    /// Number of neighbors each relayed record is forwarded to.
    pub fanout: usize,
    /// Queued relay records leave on the next send, this many ms later.
    pub flush_interval_ms: u64,
}

impl Default for RelayParams {
    fn default() -> Self {
        RelayParams {
            accept_future_window_s: 600,
            relay_staleness_window_s: 600,
            relay_size_threshold: 10,
            fanout: 2,
            flush_interval_ms: 2_000,
        }
    }
}

/// An accepted record plus its relay verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptedRecord {
    pub record: AddrRecord,
    pub relay_eligible: bool,
}

/// Applies the acceptance filter to one incoming message. Records stamped
/// too far into the future are dropped silently; the rest come back marked
/// relay-eligible iff the message was small, the timestamp fresh and the
/// address routable. Duplicate suppression is the caller's bookkeeping.
pub fn accept_addr(
    records: &[AddrRecord],
    msg_size: usize,
    now: Timestamp,
    params: &RelayParams,
    policy: &RoutabilityPolicy,
) -> Vec<AcceptedRecord> {
    let accept_limit = now.secs() + params.accept_future_window_s;
    let small_enough = msg_size <= params.relay_size_threshold;
    records
        .iter()
        .filter(|r| r.timestamp.secs() <= accept_limit)
        .map(|r| {
            let fresh = r.timestamp.secs() + params.relay_staleness_window_s >= now.secs();
            AcceptedRecord {
                record: *r,
                relay_eligible: small_enough && fresh && policy.is_routable(&r.address),
            }
        })
        .collect()
}

/// Draws `min(fanout, candidates.len())` distinct relay targets uniformly.
/// `candidates` must already exclude connections to the sending peer; the
/// caller passes them in the peer's stable connection order.
pub fn select_relay_targets(
    candidates: &[ConnId],
    fanout: usize,
    rng: &mut impl Rng,
) -> Vec<ConnId> {
    let k = fanout.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    let mut pool: Vec<ConnId> = candidates.to_vec();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetAddress;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rec(ip: u32, ts: u64) -> AddrRecord {
        AddrRecord::new(NetAddress::v4(ip, 8333), Timestamp(ts))
    }

    #[test]
    fn near_future_record_in_small_message_is_relay_eligible() {
        let params = RelayParams::default();
        let policy = RoutabilityPolicy::default();
        let now = Timestamp(10_000);
        let records = vec![rec(0x08080808, 10_540)];
        let out = accept_addr(&records, 10, now, &params, &policy);
        assert_eq!(out.len(), 1);
        assert!(out[0].relay_eligible);
    }

    #[test]
    fn record_in_oversized_message_accepted_but_not_relayed() {
        let params = RelayParams::default();
        let policy = RoutabilityPolicy::default();
        let now = Timestamp(0);
        let records: Vec<_> = (0..11).map(|i| rec(0x08080800 + i, 540)).collect();
        let out = accept_addr(&records, records.len(), now, &params, &policy);
        assert_eq!(out.len(), 11);
        assert!(out.iter().all(|r| !r.relay_eligible));
    }

    #[test]
    fn unroutable_address_not_relayed() {
        let params = RelayParams::default();
        let policy = RoutabilityPolicy::default();
        let out = accept_addr(&[rec(0x7f00_0001, 300)], 1, Timestamp(0), &params, &policy);
        assert_eq!(out.len(), 1);
        assert!(!out[0].relay_eligible);
    }

    #[test]
    fn too_far_future_dropped_stale_not_relayed() {
        let params = RelayParams::default();
        let policy = RoutabilityPolicy::default();
        let now = Timestamp(10_000);
        let records = vec![
            rec(0x08080801, now.secs() + params.accept_future_window_s + 1),
            rec(0x08080802, now.secs() - params.relay_staleness_window_s - 1),
            rec(0x08080803, now.secs() - params.relay_staleness_window_s),
        ];
        let out = accept_addr(&records, 3, now, &params, &policy);
        assert_eq!(out.len(), 2);
        assert!(!out[0].relay_eligible);
        assert!(out[1].relay_eligible);
    }

    #[test]
    fn fanout_bounded_by_candidates() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let one = vec![ConnId(7)];
        assert_eq!(select_relay_targets(&one, 2, &mut rng), vec![ConnId(7)]);
        assert!(select_relay_targets(&[], 2, &mut rng).is_empty());
        let many: Vec<ConnId> = (0..10).map(ConnId).collect();
        let picked = select_relay_targets(&many, 2, &mut rng);
        assert_eq!(picked.len(), 2);
        assert_ne!(picked[0], picked[1]);
    }

    #[test]
    fn selection_is_uniform_over_candidates() {
        // Chi-square over 10^4 two-target draws from 10 candidates;
        // df = 9, critical value 27.88 at p = 0.001.
        let candidates: Vec<ConnId> = (0..10).map(ConnId).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut counts = [0u32; 10];
        let draws = 10_000;
        for _ in 0..draws {
            for conn in select_relay_targets(&candidates, 2, &mut rng) {
                counts[conn.0 as usize] += 1;
            }
        }
        let expected = (draws * 2) as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 27.88, "chi-square {chi2} too large: {counts:?}");
    }
}
