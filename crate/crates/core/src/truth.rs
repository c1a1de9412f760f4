//! Ground truth emitted by a scenario run: peer configuration, address
//! ownership and per-peer degree time series. Estimator validation reads
//! this; nothing in the measurement pipelines may depend on it otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::PeerId;
use crate::model::{AsCategory, NetAddress};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthPeer {
    pub id: PeerId,
    pub addresses: Vec<NetAddress>,
    pub reachable: bool,
    pub asn: u32,
    pub category: AsCategory,
    pub profile: String,
    pub max_connections: u32,
    pub outbound_target: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeerSeries {
    pub peer: PeerId,
    /// Step function `(time_ms, degree)`, one point per change.
    pub points: Vec<(u64, u32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub days: u32,
    pub day_ms: u64,
    pub peers: Vec<TruthPeer>,
    /// Indexed by peer id.
    pub degree_series: Vec<PeerSeries>,
    /// Peers wired to every reachable address (monitors, super peers).
    pub universal_peers: Vec<PeerId>,
}

impl GroundTruth {
    /// Address to owning peer, for resolving estimate subjects.
    pub fn address_index(&self) -> BTreeMap<NetAddress, PeerId> {
        let mut index = BTreeMap::new();
        for peer in &self.peers {
            for addr in &peer.addresses {
                index.insert(*addr, peer.id);
            }
        }
        index
    }

    pub fn peer(&self, id: PeerId) -> Option<&TruthPeer> {
        self.peers.get(id.0 as usize)
    }

    /// AS category per reachable address, for histogram breakdowns.
    pub fn category_index(&self) -> BTreeMap<NetAddress, AsCategory> {
        let mut index = BTreeMap::new();
        for peer in &self.peers {
            for addr in &peer.addresses {
                index.insert(*addr, peer.category);
            }
        }
        index
    }

    /// Time-weighted mean degree of a peer over one scenario day.
    pub fn mean_degree(&self, peer: PeerId, day: u64) -> Option<f64> {
        if day >= self.days as u64 {
            return None;
        }
        let series = &self.degree_series.get(peer.0 as usize)?;
        debug_assert_eq!(series.peer, peer);
        let start = day * self.day_ms;
        let end = start + self.day_ms;
        let mut current = 0u32;
        let mut t_prev = start;
        let mut acc = 0u128;
        for &(t, degree) in &series.points {
            if t <= start {
                current = degree;
                continue;
            }
            if t >= end {
                break;
            }
            acc += (t - t_prev) as u128 * current as u128;
            t_prev = t;
            current = degree;
        }
        acc += (end - t_prev) as u128 * current as u128;
        Some(acc as f64 / self.day_ms as f64)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(std::io::Error::other)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_degree_integrates_the_step_function() {
        let truth = GroundTruth {
            seed: 0,
            days: 2,
            day_ms: 1_000,
            peers: vec![TruthPeer {
                id: PeerId(0),
                addresses: vec![],
                reachable: true,
                asn: 1,
                category: AsCategory::Uncategorized,
                profile: "core".into(),
                max_connections: 10,
                outbound_target: 10,
            }],
            degree_series: vec![PeerSeries {
                peer: PeerId(0),
                points: vec![(0, 4), (500, 8), (1_500, 2)],
            }],
            universal_peers: vec![],
        };
        // Day 0: 4 for 500 ms then 8 for 500 ms.
        assert_eq!(truth.mean_degree(PeerId(0), 0), Some(6.0));
        // Day 1: 8 for 500 ms then 2 for 500 ms.
        assert_eq!(truth.mean_degree(PeerId(0), 1), Some(5.0));
        assert_eq!(truth.mean_degree(PeerId(0), 2), None);
    }
}
