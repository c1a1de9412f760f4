//! Unreachable-peer estimation from connection-slot accounting.
//!
//! The sum of estimated degrees counts filled slots at reachable peers.
//! Slots explained by reachable peers' own outgoing connections (two
//! counted ends each), by super peers (connected to every reachable peer)
//! and by semi-super peers (connected to half) are subtracted; the
//! residual divided by the average outgoing connection count of unreachable
//! clients gives the unreachable peer count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, EventLog};
use crate::model::NetAddress;

#[derive(Debug, Error)]
pub enum UnreachableError {
    #[error("user-agent profile is empty")]
    EmptyProfile,
    #[error("user-agent share for {client:?} must be positive, got {share}")]
    NonPositiveShare { client: String, share: f64 },
    #[error("average outgoing connections must be positive, got {0}")]
    NonPositiveAverage(f64),
    #[error(
        "slot accounting is inconsistent: residual {residual:.1} < 0 \
         (total {total:.1}, subtracted {subtracted:.1})"
    )]
    NegativeResidual {
        residual: f64,
        total: f64,
        subtracted: f64,
    },
    #[error("super-peer counting needs at least 2 sentinel logs, got {0}")]
    NotEnoughSentinels(usize),
    #[error("malformed user-agent profile entry {0:?}, expected client:outgoing:share")]
    MalformedProfileEntry(String),
}

/// One client in the unreachable user-agent mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAgentShare {
    pub client: String,
    /// Default outgoing connections opened by this client.
    pub outgoing: f64,
    /// Observed share; shares are renormalized to sum to one.
    pub share: f64,
}

impl UserAgentShare {
    /// Parses `client:outgoing:share`.
    pub fn parse(s: &str) -> Result<Self, UnreachableError> {
        let mut parts = s.split(':');
        let err = || UnreachableError::MalformedProfileEntry(s.to_string());
        let client = parts.next().filter(|c| !c.is_empty()).ok_or_else(err)?;
        let outgoing: f64 = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        let share: f64 = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(UserAgentShare {
            client: client.to_string(),
            outgoing,
            share,
        })
    }
}

/// Share-weighted mean outgoing connection count, with shares renormalized
/// to sum to one.
pub fn avg_outgoing(profile: &[UserAgentShare]) -> Result<f64, UnreachableError> {
    if profile.is_empty() {
        return Err(UnreachableError::EmptyProfile);
    }
    let mut weighted = 0.0;
    let mut total_share = 0.0;
    for entry in profile {
        if entry.share <= 0.0 {
            return Err(UnreachableError::NonPositiveShare {
                client: entry.client.clone(),
                share: entry.share,
            });
        }
        weighted += entry.share * entry.outgoing;
        total_share += entry.share;
    }
    Ok(weighted / total_share)
}

/// Slot accounting output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnreachableBreakdown {
    pub total_slots: f64,
    pub reachable_slots: f64,
    pub super_slots: f64,
    pub semi_super_slots: f64,
    pub residual_slots: f64,
    pub avg_outgoing: f64,
    pub reachable_peers: f64,
    pub super_peers: f64,
    pub semi_super_peers: f64,
    pub unreachable_estimate: f64,
}

/// Sums per-address degree estimates, ignoring subjects whose estimate
/// exceeds the cutoff (peers known not to run the default configuration).
pub fn total_slots_from_estimates(
    estimates: &BTreeMap<NetAddress, f64>,
    degree_cutoff: f64,
) -> f64 {
    estimates.values().filter(|&&e| e <= degree_cutoff).sum()
}

/// Slot accounting: each reachable-to-reachable connection occupies two
/// counted slots, a super peer one slot per reachable peer, a semi-super
/// peer one per two reachable peers. The residual is attributed to
/// unreachable peers opening `avg_out` connections each.
pub fn estimate_unreachable(
    total_slots: f64,
    reachable_peers: f64,
    super_peers: f64,
    semi_super_peers: f64,
    avg_out: f64,
    reachable_outgoing: f64,
) -> Result<UnreachableBreakdown, UnreachableError> {
    if avg_out <= 0.0 {
        return Err(UnreachableError::NonPositiveAverage(avg_out));
    }
    let reachable_slots = 2.0 * reachable_outgoing * reachable_peers;
    let super_slots = super_peers * reachable_peers;
    let semi_super_slots = semi_super_peers * reachable_peers / 2.0;
    let subtracted = reachable_slots + super_slots + semi_super_slots;
    let residual_slots = total_slots - subtracted;
    if residual_slots < 0.0 {
        return Err(UnreachableError::NegativeResidual {
            residual: residual_slots,
            total: total_slots,
            subtracted,
        });
    }
    Ok(UnreachableBreakdown {
        total_slots,
        reachable_slots,
        super_slots,
        semi_super_slots,
        residual_slots,
        avg_outgoing: avg_out,
        reachable_peers,
        super_peers,
        semi_super_peers,
        unreachable_estimate: residual_slots / avg_out,
    })
}

/// Counts super and semi-super peers from sentinel connection logs.
///
/// At each sampled instant (day boundaries within coverage, else the final
/// event time) the remote addresses connected to every sentinel form the
/// super set and those connected to the first two sentinels the pair set;
/// `S` is the mean super-set size and `SS` the mean pair-set excess.
pub fn count_super_peers(
    sentinel_logs: &[EventLog],
    day_ms: u64,
) -> Result<(f64, f64), UnreachableError> {
    if sentinel_logs.len() < 2 {
        return Err(UnreachableError::NotEnoughSentinels(sentinel_logs.len()));
    }
    // Connection intervals per sentinel, keyed by remote address.
    struct Interval {
        remote: NetAddress,
        open: u64,
        close: u64,
    }
    let mut per_sentinel: Vec<Vec<Interval>> = Vec::with_capacity(sentinel_logs.len());
    let mut t_end = 0u64;
    for log in sentinel_logs {
        let mut open_at: BTreeMap<u64, (NetAddress, u64)> = BTreeMap::new();
        let mut intervals = Vec::new();
        for event in &log.events {
            t_end = t_end.max(event.time.millis());
            match &event.kind {
                EventKind::ConnOpen {
                    conn, remote_addr, ..
                } => {
                    open_at.insert(conn.0, (*remote_addr, event.time.millis()));
                }
                EventKind::ConnClose { conn, .. } => {
                    if let Some((remote, opened)) = open_at.remove(&conn.0) {
                        intervals.push(Interval {
                            remote,
                            open: opened,
                            close: event.time.millis(),
                        });
                    }
                }
                EventKind::AddrMsg { .. } => {}
            }
        }
        for (_, (remote, opened)) in open_at {
            intervals.push(Interval {
                remote,
                open: opened,
                close: u64::MAX,
            });
        }
        per_sentinel.push(intervals);
    }

    let mut samples: Vec<u64> = (1..)
        .map(|d| d * day_ms)
        .take_while(|&t| t <= t_end)
        .collect();
    if samples.is_empty() {
        samples.push(t_end);
    }

    let connected_at = |intervals: &[Interval], t: u64| -> BTreeSet<NetAddress> {
        intervals
            .iter()
            .filter(|iv| iv.open <= t && t < iv.close)
            .map(|iv| iv.remote)
            .collect()
    };

    let mut super_sum = 0.0;
    let mut pair_sum = 0.0;
    for &t in &samples {
        let sets: Vec<BTreeSet<NetAddress>> =
            per_sentinel.iter().map(|iv| connected_at(iv, t)).collect();
        let mut all = sets[0].clone();
        for set in &sets[1..] {
            all = all.intersection(set).copied().collect();
        }
        let pair: BTreeSet<NetAddress> = sets[0].intersection(&sets[1]).copied().collect();
        super_sum += all.len() as f64;
        pair_sum += pair.len() as f64;
    }
    let n = samples.len() as f64;
    let super_peers = super_sum / n;
    let semi_super = pair_sum / n - super_peers;
    Ok((super_peers, semi_super))
}
