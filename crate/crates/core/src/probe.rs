//! The slot-availability experiment: a tester walks a list of reachable
//! addresses, opens one connection, waits, and if it survived opens four
//! more; which connections the target evicts reveals whether its inbound
//! slots are free, nearly full, or full with the tester's AS dominating.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{ActorBehavior, ActorError, ActorInit, ActorOutput};
use crate::engine::{
    ConnId, Direction, Engine, EngineError, EventKind, EventLog, LogFilter, PeerId, PeerSpec,
    SimTime,
};
use crate::model::{AsCategory, AsInfo, NetAddress};

/// Probe pacing and width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    /// Seconds to wait before checking connection survival.
    pub wait_s: u64,
    /// Connections opened after the first one survives.
    pub extra_connections: u32,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            wait_s: 3,
            extra_connections: 4,
        }
    }
}

impl ProbeParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.wait_s == 0 || self.extra_connections == 0 {
            return Err("probe wait and extra connections must be positive".to_string());
        }
        Ok(())
    }
}

/// Slot-state verdict for one probed target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeClass {
    /// All test connections survived: more than five slots free.
    FreeSlots,
    /// The first connection survived but not all five.
    NearCapacity,
    /// The first connection was evicted outright.
    Full,
}

impl std::fmt::Display for ProbeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProbeClass::FreeSlots => "free_slots",
            ProbeClass::NearCapacity => "near_capacity",
            ProbeClass::Full => "full",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ProbeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free_slots" => Ok(ProbeClass::FreeSlots),
            "near_capacity" => Ok(ProbeClass::NearCapacity),
            "full" => Ok(ProbeClass::Full),
            other => Err(format!("unknown probe class {other:?}")),
        }
    }
}

/// Outcome of one completed probe. `flags` holds per-connection survival:
/// a single `false` when the first connection died before the extras were
/// opened, otherwise one flag per connection at the final check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub target: NetAddress,
    pub class: ProbeClass,
    pub flags: Vec<bool>,
}

/// A probe attempt; refused dials are kept separate so campaign fractions
/// can exclude them from their denominators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeResult {
    Completed(ProbeOutcome),
    Refused { target: NetAddress },
}

/// The class is a pure function of the survival flags: no extras opened
/// means the first connection was already evicted; otherwise the target is
/// free iff every connection survived.
pub fn classify_flags(flags: &[bool]) -> ProbeClass {
    if flags.len() == 1 {
        ProbeClass::Full
    } else if flags.iter().all(|&f| f) {
        ProbeClass::FreeSlots
    } else {
        ProbeClass::NearCapacity
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probe campaign needs at least one target")]
    NoTargets,
    #[error("probe campaign needs at least one tester")]
    NoTesters,
}

/// Per-class counts averaged over testers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSummary {
    pub per_class: BTreeMap<ProbeClass, ClassStat>,
    /// Mean refused dials per tester.
    pub refused: f64,
    /// Mean contacted targets per tester.
    pub contacted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStat {
    pub mean_count: f64,
    pub fraction: f64,
}

/// Aggregates per-tester probe results: counts per class averaged over
/// testers, fractions over successfully contacted targets (summing to 1).
pub fn probe_campaign_summary(per_tester: &[Vec<ProbeResult>]) -> Result<ProbeSummary, ProbeError> {
    if per_tester.is_empty() {
        return Err(ProbeError::NoTesters);
    }
    if per_tester.iter().all(|r| r.is_empty()) {
        return Err(ProbeError::NoTargets);
    }
    let testers = per_tester.len() as f64;
    let mut counts: BTreeMap<ProbeClass, f64> = BTreeMap::new();
    let mut refused = 0f64;
    let mut contacted = 0f64;
    for results in per_tester {
        for result in results {
            match result {
                ProbeResult::Completed(outcome) => {
                    *counts.entry(outcome.class).or_default() += 1.0;
                    contacted += 1.0;
                }
                ProbeResult::Refused { .. } => refused += 1.0,
            }
        }
    }
    let mut per_class = BTreeMap::new();
    for class in [
        ProbeClass::FreeSlots,
        ProbeClass::NearCapacity,
        ProbeClass::Full,
    ] {
        let total = counts.get(&class).copied().unwrap_or(0.0);
        per_class.insert(
            class,
            ClassStat {
                mean_count: total / testers,
                fraction: if contacted > 0.0 {
                    total / contacted
                } else {
                    0.0
                },
            },
        );
    }
    Ok(ProbeSummary {
        per_class,
        refused: refused / testers,
        contacted: contacted / testers,
    })
}

// ---------------------------------------------------------------------------
// The campaign actor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeCampaignParams {
    #[serde(flatten)]
    pub probe: ProbeParams,
    /// When the first tester starts.
    pub start_ms: u64,
    /// Pause between consecutive probes of one tester.
    pub gap_ms: u64,
    /// ASN per tester; one tester per entry.
    pub tester_asns: Vec<u32>,
    /// Probed groups; every reachable address when absent. Groups of
    /// unreachable peers may be listed to exercise refused dials.
    pub target_groups: Option<Vec<String>>,
}

impl Default for ProbeCampaignParams {
    fn default() -> Self {
        ProbeCampaignParams {
            probe: ProbeParams::default(),
            start_ms: 60_000,
            gap_ms: 500,
            tester_asns: vec![65_000],
            target_groups: None,
        }
    }
}

struct TesterState {
    peer: PeerId,
    label: String,
    next_target: usize,
    conns: Vec<ConnId>,
    results: Vec<ProbeResult>,
}

enum ProbePhase {
    Start,
    FirstCheck,
    FinalCheck,
}

/// Serially walks the target list from each tester peer, spacing probes so
/// at most one is in flight per target, and records one [`ProbeResult`]
/// per attempt. Probe connections carry no addr traffic.
pub struct ProbeCampaign {
    params: ProbeCampaignParams,
    actor_index: usize,
    targets: Vec<NetAddress>,
    testers: Vec<TesterState>,
    active_tester: usize,
}

impl ProbeCampaign {
    pub fn from_params(
        init: &ActorInit,
        params: &serde_json::Value,
    ) -> Result<Box<dyn ActorBehavior>, ActorError> {
        let params: ProbeCampaignParams = crate::actors::parse_params("probe-campaign", params)?;
        if params.tester_asns.is_empty() {
            return Err(ActorError::InvalidParams {
                kind: "probe-campaign",
                reason: "at least one tester required".into(),
            });
        }
        let mut targets = init.resolve_targets("probe-campaign", &params.target_groups)?;
        targets.sort_unstable();
        if targets.is_empty() {
            return Err(ActorError::InvalidParams {
                kind: "probe-campaign",
                reason: "empty target list".into(),
            });
        }
        Ok(Box::new(ProbeCampaign {
            params,
            actor_index: init.index as usize,
            targets,
            testers: Vec::new(),
            active_tester: 0,
        }))
    }

    fn wait_ms(&self) -> u64 {
        self.params.probe.wait_s * 1000
    }

    fn schedule_phase(&self, engine: &mut Engine, phase: ProbePhase, delay: u64) {
        let tag = match phase {
            ProbePhase::Start => 0,
            ProbePhase::FirstCheck => 1,
            ProbePhase::FinalCheck => 2,
        };
        engine.schedule_wake(engine.now().plus_ms(delay), self.actor_index, tag);
    }

    /// Moves to the next target (or tester) after the current probe ends.
    fn advance(&mut self, engine: &mut Engine) {
        let tester = &mut self.testers[self.active_tester];
        tester.conns.clear();
        tester.next_target += 1;
        if tester.next_target >= self.targets.len() {
            self.active_tester += 1;
            if self.active_tester >= self.testers.len() {
                return;
            }
        }
        self.schedule_phase(engine, ProbePhase::Start, self.params.gap_ms);
    }
}

impl ActorBehavior for ProbeCampaign {
    fn kind(&self) -> &'static str {
        "probe-campaign"
    }

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError> {
        for (i, &asn) in self.params.tester_asns.iter().enumerate() {
            let own = NetAddress::v4(0xCB00_0200 + i as u32, 8333);
            let spec = PeerSpec::new(
                vec![own],
                false,
                AsInfo::new(asn, AsCategory::Uncategorized),
            )
            .with_limits(1_000, 1_000)
            .with_profile("probe-tester");
            let peer = engine.add_peer(spec)?;
            let label = format!("tester-{i}");
            engine.attach_log(peer, label.clone(), LogFilter::ConnOnly);
            self.testers.push(TesterState {
                peer,
                label,
                next_target: 0,
                conns: Vec::new(),
                results: Vec::new(),
            });
        }
        engine.schedule_wake(SimTime(self.params.start_ms), self.actor_index, 0);
        Ok(())
    }

    fn wake(&mut self, engine: &mut Engine, tag: u64) -> Result<(), ActorError> {
        if self.active_tester >= self.testers.len() {
            return Ok(());
        }
        let wait = self.wait_ms();
        let extras = self.params.probe.extra_connections;
        let tester_idx = self.active_tester;
        let target = self.targets[self.testers[tester_idx].next_target];
        let peer = self.testers[tester_idx].peer;
        match tag {
            // Start: dial the first connection.
            0 => match engine.open_connection(peer, target) {
                Ok((conn, _)) => {
                    self.testers[tester_idx].conns.push(conn);
                    self.schedule_phase(engine, ProbePhase::FirstCheck, wait);
                }
                Err(EngineError::TargetUnreachable(_) | EngineError::UnknownAddress(_)) => {
                    self.testers[tester_idx]
                        .results
                        .push(ProbeResult::Refused { target });
                    self.advance(engine);
                }
                Err(e) => return Err(e.into()),
            },
            // First check: if alive, open the extras; else classify Full.
            1 => {
                let first = self.testers[tester_idx].conns[0];
                if engine.is_conn_open(first) {
                    for _ in 0..extras {
                        let (conn, _) = engine.open_connection(peer, target)?;
                        self.testers[tester_idx].conns.push(conn);
                    }
                    self.schedule_phase(engine, ProbePhase::FinalCheck, wait);
                } else {
                    self.testers[tester_idx]
                        .results
                        .push(ProbeResult::Completed(ProbeOutcome {
                            target,
                            class: ProbeClass::Full,
                            flags: vec![false],
                        }));
                    self.advance(engine);
                }
            }
            // Final check: record survival, close survivors.
            2 => {
                let conns = self.testers[tester_idx].conns.clone();
                let flags: Vec<bool> = conns.iter().map(|&c| engine.is_conn_open(c)).collect();
                for (&conn, &alive) in conns.iter().zip(&flags) {
                    if alive {
                        engine.close_connection(conn, peer)?;
                    }
                }
                let class = classify_flags(&flags);
                self.testers[tester_idx]
                    .results
                    .push(ProbeResult::Completed(ProbeOutcome {
                        target,
                        class,
                        flags,
                    }));
                self.advance(engine);
            }
            _ => {}
        }
        Ok(())
    }

    fn finish(&mut self, out: &mut ActorOutput) {
        for tester in self.testers.drain(..) {
            out.probe_results.push((tester.label, tester.results));
        }
    }
}

// ---------------------------------------------------------------------------
// Log-side reconstruction
// ---------------------------------------------------------------------------

/// Rebuilds probe outcomes from a tester's connection log. A connection
/// survived its probe iff the tester itself closed it at cleanup; targets
/// the tester never reached leave no trace and are naturally excluded.
pub fn analyze_probe_log(log: &EventLog) -> Vec<ProbeOutcome> {
    let owner = match log.owner {
        Some(owner) => owner,
        None => return Vec::new(),
    };
    // Group this tester's outbound connections into probes: consecutive
    // conns to the same dialed address belong to one probe.
    struct ConnInfo {
        closed_by_owner: bool,
    }
    let mut order: Vec<(NetAddress, u64)> = Vec::new();
    let mut conns: BTreeMap<u64, ConnInfo> = BTreeMap::new();
    let mut dialed: BTreeMap<u64, NetAddress> = BTreeMap::new();
    for event in &log.events {
        match &event.kind {
            EventKind::ConnOpen {
                conn,
                local,
                remote_addr,
                direction: Direction::Outbound,
                ..
            } if *local == owner => {
                order.push((*remote_addr, conn.0));
                dialed.insert(conn.0, *remote_addr);
                conns.insert(
                    conn.0,
                    ConnInfo {
                        closed_by_owner: false,
                    },
                );
            }
            EventKind::ConnClose {
                conn, initiator, ..
            } => {
                if let Some(info) = conns.get_mut(&conn.0) {
                    info.closed_by_owner = *initiator == owner;
                }
            }
            _ => {}
        }
    }

    let mut outcomes = Vec::new();
    let mut i = 0usize;
    while i < order.len() {
        let (target, _) = order[i];
        let mut group: Vec<u64> = Vec::new();
        while i < order.len() && order[i].0 == target {
            group.push(order[i].1);
            i += 1;
        }
        let flags: Vec<bool> = group.iter().map(|id| conns[id].closed_by_owner).collect();
        outcomes.push(ProbeOutcome {
            target,
            class: classify_flags(&flags),
            flags,
        });
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_is_pure_in_the_flags() {
        assert_eq!(classify_flags(&[false]), ProbeClass::Full);
        assert_eq!(classify_flags(&[true; 5]), ProbeClass::FreeSlots);
        assert_eq!(
            classify_flags(&[true, true, true, false, false]),
            ProbeClass::NearCapacity
        );
        assert_eq!(
            classify_flags(&[false, true, true, true, true]),
            ProbeClass::NearCapacity
        );
    }

    #[test]
    fn summary_fractions_cover_contacted_targets_only() {
        let outcome = |class, target: u32| {
            ProbeResult::Completed(ProbeOutcome {
                target: NetAddress::v4(target, 8333),
                class,
                flags: vec![false],
            })
        };
        let per_tester = vec![vec![
            outcome(ProbeClass::Full, 1),
            outcome(ProbeClass::FreeSlots, 2),
            outcome(ProbeClass::FreeSlots, 3),
            ProbeResult::Refused {
                target: NetAddress::v4(4, 8333),
            },
        ]];
        let summary = probe_campaign_summary(&per_tester).unwrap();
        assert_eq!(summary.contacted, 3.0);
        assert_eq!(summary.refused, 1.0);
        let fractions: f64 = summary.per_class.values().map(|s| s.fraction).sum();
        assert!((fractions - 1.0).abs() < 1e-12);
        assert_eq!(
            summary.per_class[&ProbeClass::FreeSlots].fraction,
            2.0 / 3.0
        );
    }

    #[test]
    fn empty_campaign_inputs_are_rejected() {
        assert!(matches!(
            probe_campaign_summary(&[]),
            Err(ProbeError::NoTesters)
        ));
        assert!(matches!(
            probe_campaign_summary(&[vec![], vec![]]),
            Err(ProbeError::NoTargets)
        ));
    }
}
