//! Address-to-peer matching via spam tuple markers.
//!
//! A spam batch's (address, timestamp) tuples mark one victim. A peer that
//! owns several addresses relays the same tuples on all of them, so two
//! source addresses sharing enough tuples at the monitor belong to one
//! peer. Indirectly relayed tuples are filtered by timestamp freshness and
//! a per-source volume threshold before links are counted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, EventLog};
use crate::model::{NetAddress, Timestamp};

/// Matching thresholds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Tuples must be stamped at least this far in the future at receipt.
    pub min_future_s: u64,
    /// Sources must send at least this many tuples with one timestamp.
    pub min_tuples_per_source: u64,
    /// Two addresses link when they share at least this many tuples.
    pub min_shared_tuples: u64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            min_future_s: 300,
            min_tuples_per_source: 10,
            min_shared_tuples: 5,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_future_s == 0 || self.min_tuples_per_source == 0 || self.min_shared_tuples == 0
        {
            return Err("matching thresholds must all be positive".to_string());
        }
        Ok(())
    }
}

/// A set of addresses attributed to one peer, with the shared-tuple counts
/// that justified each direct link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerCluster {
    /// Sorted member addresses; always at least two.
    pub addresses: Vec<NetAddress>,
    /// (address, address, shared tuple count) for pairs meeting the
    /// threshold, each pair sorted.
    pub evidence: Vec<(NetAddress, NetAddress, u64)>,
}

/// Union-find over address indices, for merging intersecting link sets.
struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, x: usize, y: usize) {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
    }
}

/// Builds disjoint clusters of addresses that relayed the same spam tuples
/// to the monitor(s). Qualifying tuple sets are computed per log, then
/// unioned per source address across logs.
pub fn match_addresses(logs: &[EventLog], params: &MatchParams) -> Vec<PeerCluster> {
    // (tuple address, tuple timestamp, source address), deduplicated.
    let mut sightings: Vec<(NetAddress, Timestamp, NetAddress)> = Vec::new();
    for log in logs {
        // First pass: per (source, timestamp) record counts for the volume
        // threshold.
        let mut volume: BTreeMap<(NetAddress, Timestamp), u64> = BTreeMap::new();
        for event in &log.events {
            let EventKind::AddrMsg {
                sender_addr,
                records,
                ..
            } = &event.kind
            else {
                continue;
            };
            let received = event.time.to_timestamp();
            for record in records {
                if record.timestamp.delta_secs(received) < params.min_future_s as i64 {
                    continue;
                }
                *volume.entry((*sender_addr, record.timestamp)).or_default() += 1;
            }
        }
        for event in &log.events {
            let EventKind::AddrMsg {
                sender_addr,
                records,
                ..
            } = &event.kind
            else {
                continue;
            };
            let received = event.time.to_timestamp();
            for record in records {
                if record.timestamp.delta_secs(received) < params.min_future_s as i64 {
                    continue;
                }
                let qualified = volume
                    .get(&(*sender_addr, record.timestamp))
                    .is_some_and(|&n| n >= params.min_tuples_per_source);
                if qualified {
                    sightings.push((record.address, record.timestamp, *sender_addr));
                }
            }
        }
    }

    sightings.sort_unstable();
    sightings.dedup();

    // Shared-tuple counts per source-address pair: scan tuple groups and
    // charge every pair of sources that reported the tuple.
    let mut pair_counts: BTreeMap<(NetAddress, NetAddress), u64> = BTreeMap::new();
    let mut i = 0;
    while i < sightings.len() {
        let key = (sightings[i].0, sightings[i].1);
        let mut j = i;
        while j < sightings.len() && (sightings[j].0, sightings[j].1) == key {
            j += 1;
        }
        for a in i..j {
            for b in (a + 1)..j {
                let pair = (sightings[a].2, sightings[b].2);
                debug_assert!(pair.0 < pair.1);
                *pair_counts.entry(pair).or_default() += 1;
            }
        }
        i = j;
    }

    let links: Vec<(NetAddress, NetAddress, u64)> = pair_counts
        .into_iter()
        .filter(|&(_, n)| n >= params.min_shared_tuples)
        .map(|((a, b), n)| (a, b, n))
        .collect();
    if links.is_empty() {
        return Vec::new();
    }

    // Merge intersecting links into disjoint clusters.
    let mut index: BTreeMap<NetAddress, usize> = BTreeMap::new();
    for (a, b, _) in &links {
        let next = index.len();
        index.entry(*a).or_insert(next);
        let next = index.len();
        index.entry(*b).or_insert(next);
    }
    let mut uf = UnionFind::new(index.len());
    for (a, b, _) in &links {
        uf.union(index[a], index[b]);
    }

    let mut clusters: BTreeMap<usize, PeerCluster> = BTreeMap::new();
    for (addr, &idx) in &index {
        let root = uf.find(idx);
        clusters
            .entry(root)
            .or_insert_with(|| PeerCluster {
                addresses: Vec::new(),
                evidence: Vec::new(),
            })
            .addresses
            .push(*addr);
    }
    for (a, b, n) in links {
        let root = uf.find(index[&a]);
        clusters.get_mut(&root).unwrap().evidence.push((a, b, n));
    }
    let mut out: Vec<PeerCluster> = clusters.into_values().collect();
    for cluster in &mut out {
        cluster.addresses.sort_unstable();
        cluster.evidence.sort_unstable();
    }
    out.sort_unstable_by(|x, y| x.addresses.cmp(&y.addresses));
    out
}

/// Corrects an address count for multi-address peers: each cluster
/// collapses its observed members into one peer.
pub fn count_unique_peers(
    observed: &std::collections::BTreeSet<NetAddress>,
    clusters: &[PeerCluster],
) -> usize {
    let mut collapsed = 0usize;
    for cluster in clusters {
        let overlap = cluster
            .addresses
            .iter()
            .filter(|a| observed.contains(a))
            .count();
        collapsed += overlap.saturating_sub(1);
    }
    observed.len() - collapsed
}

/// Cross-checks clustering against degree estimation: for each cluster
/// with at least two estimated members, the members' estimates are
/// compared to their cluster mean; returns the grand mean of the relative
/// deviations, or `None` when no cluster qualifies.
pub fn cluster_estimate_consistency(
    clusters: &[PeerCluster],
    estimates: &BTreeMap<NetAddress, f64>,
) -> Option<f64> {
    let mut deviations = Vec::new();
    for cluster in clusters {
        let member_estimates: Vec<f64> = cluster
            .addresses
            .iter()
            .filter_map(|a| estimates.get(a).copied())
            .collect();
        if member_estimates.len() < 2 {
            continue;
        }
        let mean = member_estimates.iter().sum::<f64>() / member_estimates.len() as f64;
        for est in member_estimates {
            deviations.push((est - mean).abs() / mean);
        }
    }
    if deviations.is_empty() {
        None
    } else {
        Some(deviations.iter().sum::<f64>() / deviations.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ConnId, Event, EventLog, PeerId, SimTime};
    use crate::model::AddrRecord;
    use std::collections::BTreeSet;

    fn addr(ip: u32) -> NetAddress {
        NetAddress::v4(ip, 8333)
    }

    fn msg(time_s: u64, seq: u64, source: u32, tuples: &[(u32, u64)]) -> Event {
        Event {
            time: SimTime(time_s * 1000),
            seq,
            kind: EventKind::AddrMsg {
                conn: ConnId(0),
                sender: PeerId(1),
                sender_addr: addr(source),
                receiver: PeerId(0),
                records: tuples
                    .iter()
                    .map(|&(ip, ts)| AddrRecord::new(addr(ip), Timestamp(ts)))
                    .collect(),
            },
        }
    }

    fn tuples(base: u32, n: u32, ts: u64) -> Vec<(u32, u64)> {
        (0..n).map(|i| (base + i, ts)).collect()
    }

    #[test]
    fn shared_batch_links_two_addresses_of_one_peer() {
        let mut log = EventLog::new(PeerId(0), "m");
        // Sources 1 and 2 each report twelve fresh tuples of the same batch,
        // ten of them identical.
        let shared = tuples(0x0900_0000, 10, 400);
        let mut from_a = shared.clone();
        from_a.extend(tuples(0x0A00_0000, 2, 400));
        let mut from_b = shared;
        from_b.extend(tuples(0x0B00_0000, 2, 400));
        log.push(msg(10, 1, 1, &from_a));
        log.push(msg(11, 2, 2, &from_b));
        let clusters = match_addresses(&[log], &MatchParams::default());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].addresses, vec![addr(1), addr(2)]);
        assert_eq!(clusters[0].evidence, vec![(addr(1), addr(2), 10)]);
    }

    #[test]
    fn few_shared_tuples_do_not_link() {
        let mut log = EventLog::new(PeerId(0), "m");
        let shared = tuples(0x0900_0000, 4, 400); // below min_shared_tuples
        let mut from_a = shared.clone();
        from_a.extend(tuples(0x0A00_0000, 8, 400));
        let mut from_b = shared;
        from_b.extend(tuples(0x0B00_0000, 8, 400));
        log.push(msg(10, 1, 1, &from_a));
        log.push(msg(11, 2, 2, &from_b));
        assert!(match_addresses(&[log], &MatchParams::default()).is_empty());
    }

    #[test]
    fn stale_and_low_volume_sources_filtered() {
        let params = MatchParams::default();
        let mut log = EventLog::new(PeerId(0), "m");
        let shared = tuples(0x0900_0000, 10, 400);
        log.push(msg(10, 1, 1, &shared));
        // Source 2 reports the same tuples but under the volume threshold.
        log.push(msg(11, 2, 2, &shared[0..6]));
        // Source 3 reports them all, but stamped under five minutes ahead.
        let near: Vec<(u32, u64)> = shared.iter().map(|&(ip, _)| (ip, 200)).collect();
        log.push(msg(12, 3, 3, &near));
        assert!(match_addresses(&[log], &params).is_empty());
    }

    #[test]
    fn intersecting_links_merge_transitively() {
        let mut log = EventLog::new(PeerId(0), "m");
        let batch1 = tuples(0x0900_0000, 10, 400);
        let batch2 = tuples(0x0A00_0000, 10, 420);
        log.push(msg(10, 1, 1, &batch1));
        log.push(msg(11, 2, 2, &batch1));
        log.push(msg(12, 3, 2, &batch2));
        log.push(msg(13, 4, 3, &batch2));
        let clusters = match_addresses(&[log], &MatchParams::default());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].addresses, vec![addr(1), addr(2), addr(3)]);
        assert_eq!(clusters[0].evidence.len(), 2);
    }

    #[test]
    fn unique_peer_count_corrects_for_clusters() {
        let observed: BTreeSet<NetAddress> = (1..=10).map(addr).collect();
        assert_eq!(count_unique_peers(&observed, &[]), 10);
        let clusters = vec![PeerCluster {
            addresses: vec![addr(1), addr(2), addr(3), addr(4)],
            evidence: vec![],
        }];
        assert_eq!(count_unique_peers(&observed, &clusters), 7);
        // Cluster members outside the observed set do not collapse anything.
        let foreign = vec![PeerCluster {
            addresses: vec![addr(97), addr(98)],
            evidence: vec![],
        }];
        assert_eq!(count_unique_peers(&observed, &foreign), 10);
    }

    #[test]
    fn consistency_of_identical_estimates_is_zero() {
        let clusters = vec![PeerCluster {
            addresses: vec![addr(1), addr(2)],
            evidence: vec![],
        }];
        let mut estimates = BTreeMap::new();
        estimates.insert(addr(1), 120.0);
        estimates.insert(addr(2), 120.0);
        assert_eq!(
            cluster_estimate_consistency(&clusters, &estimates),
            Some(0.0)
        );
    }

    #[test]
    fn consistency_matches_hand_arithmetic() {
        // Members 100 and 102: mean 101, each deviates by 1/101.
        let clusters = vec![PeerCluster {
            addresses: vec![addr(1), addr(2)],
            evidence: vec![],
        }];
        let mut estimates = BTreeMap::new();
        estimates.insert(addr(1), 100.0);
        estimates.insert(addr(2), 102.0);
        let dev = cluster_estimate_consistency(&clusters, &estimates).unwrap();
        assert!((dev - 1.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn clusters_without_enough_estimates_are_skipped() {
        let clusters = vec![PeerCluster {
            addresses: vec![addr(1), addr(2)],
            evidence: vec![],
        }];
        let mut estimates = BTreeMap::new();
        estimates.insert(addr(1), 100.0);
        assert_eq!(cluster_estimate_consistency(&clusters, &estimates), None);
    }
}
