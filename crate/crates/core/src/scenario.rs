//! Scenario configs, validation, topology bootstrap and the run loop.
//!
//! A scenario is a JSON document naming peer groups (counts, degree
//! targets, AS assignment), actor schedules (spam waves, probe campaigns)
//! and parameter overrides. Running one produces per-observer event logs
//! plus the ground truth needed to validate the measurement pipelines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{
    run_actors, ActorBehavior, ActorError, ActorInit, ActorOutput, ActorRegistry, DegreeFill,
    FillTarget, TopologyWiring, WirePlan, DAY_MS,
};
use crate::engine::{
    derive_seed, Engine, EngineParams, EventLog, LogFilter, PeerId, PeerSpec, SimTime,
};
use crate::estimator::{EstimatorParams, MatchParams, UserAgentShare};
use crate::model::{
    AddrFamily, AsCategory, AsInfo, NetAddress, PolicyError, RoutabilityPolicy, DEFAULT_PORT,
};
use crate::probe::{ProbeParams, ProbeResult};
use crate::relay::RelayParams;
use crate::truth::{GroundTruth, PeerSeries, TruthPeer};

/// A group of identically configured peers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeerGroupConfig {
    pub name: String,
    pub count: u32,
    pub reachable: bool,
    /// Addresses per peer, drawn uniformly from this range. Odd-indexed
    /// addresses are IPv6.
    pub addresses_per_peer_min: u32,
    pub addresses_per_peer_max: u32,
    /// Ground-truth degree targets; stub dialers top each peer up to a
    /// value drawn from this range and keep it there. Reachable only.
    pub degree_min: Option<u32>,
    pub degree_max: Option<u32>,
    /// Explicit degree targets, assigned to the group's peers in order
    /// (cycling). Mutually exclusive with degree_min/degree_max.
    pub degree_list: Option<Vec<u32>>,
    /// Pin each peer's connection limit at its degree target: the peer
    /// runs full, so new inbound connections trigger eviction.
    pub at_capacity: bool,
    pub max_connections: u32,
    pub outbound_target: u32,
    /// Reachable groups: open `outbound_target` ring edges to other
    /// interconnected reachable peers.
    pub interconnect: bool,
    /// Unreachable groups: dial every reachable address (super peers).
    pub connect_to_all: bool,
    /// ASNs assigned round-robin within the group.
    pub asn_pool: Vec<u32>,
    pub category: AsCategory,
    pub profile: String,
    /// ASNs of this group's stub dialers.
    pub filler_asn_pool: Vec<u32>,
}

impl Default for PeerGroupConfig {
    fn default() -> Self {
        PeerGroupConfig {
            name: String::new(),
            count: 1,
            reachable: true,
            addresses_per_peer_min: 1,
            addresses_per_peer_max: 1,
            degree_min: None,
            degree_max: None,
            degree_list: None,
            at_capacity: false,
            max_connections: 125,
            outbound_target: 10,
            interconnect: false,
            connect_to_all: false,
            asn_pool: vec![64_496],
            category: AsCategory::Uncategorized,
            profile: "core".to_string(),
            filler_asn_pool: Vec::new(),
        }
    }
}

/// One scheduled behavior, selected from the actor registry by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub kind: String,
    #[serde(default = "default_params")]
    pub params: serde_json::Value,
}

fn default_params() -> serde_json::Value {
    serde_json::json!({})
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub days: u32,
    /// Monitor nodes wired to every reachable address.
    pub monitors: u32,
    pub monitor_asn: u32,
    pub latency_ms: u64,
    pub protected_inbound_slots: usize,
    pub relay: RelayParams,
    /// Optional routability policy file (one CIDR per line); the built-in
    /// block set otherwise.
    pub routability_file: Option<PathBuf>,
    pub peer_groups: Vec<PeerGroupConfig>,
    pub actors: Vec<ActorConfig>,
    /// Peer ids whose connection events are logged (for super-peer
    /// counting).
    pub sentinel_peers: Vec<u32>,
    pub estimator: EstimatorParams,
    #[serde(rename = "match")]
    pub match_params: MatchParams,
    pub probe: ProbeParams,
    /// Unreachable client mix used by the slot-accounting report.
    pub user_agent_profile: Vec<UserAgentShare>,
    /// Record a global event log (costly; for invariant checks).
    pub record_global_log: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            days: 1,
            monitors: 0,
            monitor_asn: 64_600,
            latency_ms: 50,
            protected_inbound_slots: 8,
            relay: RelayParams::default(),
            routability_file: None,
            peer_groups: Vec::new(),
            actors: Vec::new(),
            sentinel_peers: Vec::new(),
            estimator: EstimatorParams::default(),
            match_params: MatchParams::default(),
            probe: ProbeParams::default(),
            user_agent_profile: Vec::new(),
            record_global_log: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scenario config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario field {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.days == 0 {
            return Err(invalid("days", "must be at least 1"));
        }
        self.estimator
            .validate()
            .map_err(|e| invalid("estimator", e.to_string()))?;
        self.match_params
            .validate()
            .map_err(|e| invalid("match", e))?;
        self.probe.validate().map_err(|e| invalid("probe", e))?;
        let mut names = std::collections::BTreeSet::new();
        for (i, group) in self.peer_groups.iter().enumerate() {
            let field = |f: &str| format!("peer_groups[{i}].{f}");
            if group.name.is_empty() {
                return Err(invalid(field("name"), "must not be empty"));
            }
            if !names.insert(group.name.clone()) {
                return Err(invalid(field("name"), "duplicate group name"));
            }
            if group.count == 0 {
                return Err(invalid(field("count"), "must be at least 1"));
            }
            if group.addresses_per_peer_min == 0 && group.reachable {
                return Err(invalid(
                    field("addresses_per_peer_min"),
                    "reachable peers own at least one address",
                ));
            }
            if group.addresses_per_peer_min > group.addresses_per_peer_max {
                return Err(invalid(field("addresses_per_peer_min"), "min exceeds max"));
            }
            if group.max_connections < group.outbound_target {
                return Err(invalid(field("outbound_target"), "exceeds max_connections"));
            }
            let has_range = group.degree_min.is_some() || group.degree_max.is_some();
            if has_range && group.degree_list.is_some() {
                return Err(invalid(
                    field("degree_list"),
                    "mutually exclusive with degree_min/degree_max",
                ));
            }
            let mut degree_bound: Option<u32> = None;
            match (group.degree_min, group.degree_max) {
                (Some(lo), Some(hi)) => {
                    if lo > hi {
                        return Err(invalid(field("degree_min"), "exceeds degree_max"));
                    }
                    degree_bound = Some(hi);
                }
                (None, None) => {}
                _ => {
                    return Err(invalid(
                        field("degree_min"),
                        "degree_min and degree_max must be set together",
                    ));
                }
            }
            if let Some(list) = &group.degree_list {
                if list.is_empty() {
                    return Err(invalid(field("degree_list"), "must not be empty"));
                }
                degree_bound = list.iter().max().copied();
            }
            if let Some(hi) = degree_bound {
                if !group.at_capacity && hi > group.max_connections {
                    return Err(invalid(
                        field("degree_max"),
                        format!(
                            "degree target {hi} exceeds max_connections {}",
                            group.max_connections
                        ),
                    ));
                }
                if !group.reachable {
                    return Err(invalid(
                        field("degree_min"),
                        "degree targets only apply to reachable groups",
                    ));
                }
            } else if group.at_capacity {
                return Err(invalid(field("at_capacity"), "requires a degree target"));
            }
            if group.connect_to_all && group.reachable {
                return Err(invalid(
                    field("connect_to_all"),
                    "super-peer groups must be unreachable",
                ));
            }
            if group.interconnect && !group.reachable {
                return Err(invalid(
                    field("interconnect"),
                    "interconnect only applies to reachable groups",
                ));
            }
            if group.asn_pool.is_empty() {
                return Err(invalid(field("asn_pool"), "must not be empty"));
            }
        }
        Ok(())
    }
}

/// Everything a scenario run leaves behind.
pub struct ScenarioOutput {
    /// Monitor, sentinel and tester logs, in attach order.
    pub logs: Vec<EventLog>,
    pub truth: GroundTruth,
    /// In-engine probe outcomes per tester (the log-independent route).
    pub probe_results: Vec<(String, Vec<ProbeResult>)>,
    /// The resolved config the run used.
    pub config: ScenarioConfig,
}

impl ScenarioOutput {
    /// Writes logs, ground truth and the resolved config into a directory.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for log in &self.logs {
            let path = dir.join(format!("{}.log", log.label));
            log.save(&path)?;
            written.push(path);
        }
        let truth_path = dir.join("truth.json");
        self.truth.save(&truth_path)?;
        written.push(truth_path);
        let config_path = dir.join("scenario.json");
        let file = std::fs::File::create(&config_path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &self.config)
            .map_err(std::io::Error::other)?;
        written.push(config_path);
        Ok(written)
    }
}

/// Deterministic allocator for unique public addresses.
struct AddressAllocator {
    policy: RoutabilityPolicy,
    next_v4: u32,
    next_v6: u128,
}

impl AddressAllocator {
    fn new(policy: RoutabilityPolicy) -> Self {
        AddressAllocator {
            policy,
            next_v4: 0x0500_0001, // 5.0.0.1
            next_v6: (0x2600u128 << 112) | 1,
        }
    }

    fn next(&mut self, family: AddrFamily) -> NetAddress {
        match family {
            AddrFamily::V4 => loop {
                let addr = NetAddress::v4(self.next_v4, DEFAULT_PORT);
                self.next_v4 += 1;
                if self.policy.is_routable(&addr) {
                    return addr;
                }
            },
            AddrFamily::V6 => {
                let addr = NetAddress::v6(self.next_v6, DEFAULT_PORT);
                self.next_v6 += 1;
                addr
            }
        }
    }
}

/// Runs a scenario with the built-in actor registry.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput, ScenarioError> {
    run_scenario_with(config, &ActorRegistry::with_builtins())
}

/// Runs a scenario, selecting actor behaviors from `registry` by name.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    registry: &ActorRegistry,
) -> Result<ScenarioOutput, ScenarioError> {
    config.validate()?;
    let routability = match &config.routability_file {
        Some(path) => RoutabilityPolicy::load(path)?,
        None => RoutabilityPolicy::default(),
    };
    let params = EngineParams {
        latency_ms: config.latency_ms,
        protected_inbound_slots: config.protected_inbound_slots,
        relay: config.relay.clone(),
        routability: routability.clone(),
        record_global_log: config.record_global_log,
        end: SimTime(config.days as u64 * DAY_MS),
    };
    let mut engine = Engine::new(params, config.seed);
    let mut allocator = AddressAllocator::new(routability);
    let mut layout_rng = ChaCha12Rng::seed_from_u64(derive_seed(config.seed, "layout", 0));

    // Peer creation, group by group.
    struct Planned {
        peer: PeerId,
        group: usize,
        degree_target: Option<u32>,
        primary_addr: NetAddress,
    }
    let mut planned: Vec<Planned> = Vec::new();
    let mut group_addresses: BTreeMap<String, Vec<NetAddress>> = BTreeMap::new();
    for (gi, group) in config.peer_groups.iter().enumerate() {
        let mut addrs_of_group = Vec::new();
        for member in 0..group.count {
            let n_addrs = if group.addresses_per_peer_min == group.addresses_per_peer_max {
                group.addresses_per_peer_min
            } else {
                layout_rng.gen_range(group.addresses_per_peer_min..=group.addresses_per_peer_max)
            };
            let addresses: Vec<NetAddress> = (0..n_addrs)
                .map(|k| {
                    let family = if k % 2 == 1 {
                        AddrFamily::V6
                    } else {
                        AddrFamily::V4
                    };
                    allocator.next(family)
                })
                .collect();
            let degree_target = if let Some(list) = &group.degree_list {
                Some(list[member as usize % list.len()])
            } else {
                match (group.degree_min, group.degree_max) {
                    (Some(lo), Some(hi)) if lo == hi => Some(lo),
                    (Some(lo), Some(hi)) => Some(layout_rng.gen_range(lo..=hi)),
                    _ => None,
                }
            };
            let max_connections = match degree_target {
                Some(target) if group.at_capacity => target,
                _ => group.max_connections,
            };
            let asn = group.asn_pool[planned.len() % group.asn_pool.len()];
            let spec = PeerSpec {
                addresses: addresses.clone(),
                reachable: group.reachable,
                max_connections,
                outbound_target: group.outbound_target,
                as_info: AsInfo::new(asn, group.category),
                profile: group.profile.clone(),
            };
            let peer = engine.add_peer(spec)?;
            addrs_of_group.extend(addresses.iter().copied());
            planned.push(Planned {
                peer,
                group: gi,
                degree_target,
                primary_addr: addresses
                    .first()
                    .copied()
                    .unwrap_or_else(|| NetAddress::v4(0x7f00_0000 | peer.0, 0)),
            });
        }
        addrs_of_group.sort_unstable();
        group_addresses.insert(group.name.clone(), addrs_of_group);
    }

    // Sentinel logs must exist before any connection is opened.
    for &sentinel in &config.sentinel_peers {
        if sentinel as usize >= planned.len() {
            return Err(invalid(
                "sentinel_peers",
                format!("peer id {sentinel} does not exist"),
            ));
        }
        engine.attach_log(
            PeerId(sentinel),
            format!("sentinel-{sentinel}"),
            LogFilter::ConnOnly,
        );
    }

    // Topology plans: ring edges among interconnected reachable peers,
    // outbound connections of plain unreachable peers, super-peer links.
    let reachable: Vec<&Planned> = planned
        .iter()
        .filter(|p| config.peer_groups[p.group].reachable)
        .collect();
    let mut wires: Vec<WirePlan> = Vec::new();
    let mut planned_extra_degree: BTreeMap<PeerId, u32> = BTreeMap::new();
    {
        let ring: Vec<&&Planned> = reachable
            .iter()
            .filter(|p| config.peer_groups[p.group].interconnect)
            .collect();
        for (i, peer) in ring.iter().enumerate() {
            let edges = config.peer_groups[peer.group].outbound_target as usize;
            if edges >= ring.len() {
                return Err(invalid(
                    format!("peer_groups[{}].outbound_target", peer.group),
                    "ring edges require more interconnected peers",
                ));
            }
            for k in 1..=edges {
                let to = ring[(i + k) % ring.len()];
                wires.push(WirePlan {
                    from: peer.peer,
                    to: to.primary_addr,
                });
                *planned_extra_degree.entry(peer.peer).or_default() += 1;
                *planned_extra_degree.entry(to.peer).or_default() += 1;
            }
        }

        let mut unreachable_idx = 0u64;
        for p in &planned {
            let group = &config.peer_groups[p.group];
            if group.reachable || group.connect_to_all {
                continue;
            }
            let outgoing = group.outbound_target as usize;
            if outgoing == 0 {
                continue;
            }
            if outgoing > reachable.len() {
                return Err(invalid(
                    format!("peer_groups[{}].outbound_target", p.group),
                    format!(
                        "{} outgoing connections but only {} reachable peers",
                        outgoing,
                        reachable.len()
                    ),
                ));
            }
            for k in 0..outgoing {
                let target =
                    reachable[((unreachable_idx * outgoing as u64) as usize + k) % reachable.len()];
                wires.push(WirePlan {
                    from: p.peer,
                    to: target.primary_addr,
                });
                *planned_extra_degree.entry(target.peer).or_default() += 1;
                *planned_extra_degree.entry(p.peer).or_default() += 1;
            }
            unreachable_idx += 1;
        }

        for p in &planned {
            let group = &config.peer_groups[p.group];
            if !group.connect_to_all {
                continue;
            }
            for r in &reachable {
                for addr in engine.peer(r.peer).spec().addresses.clone() {
                    wires.push(WirePlan {
                        from: p.peer,
                        to: addr,
                    });
                    *planned_extra_degree.entry(r.peer).or_default() += 1;
                    *planned_extra_degree.entry(p.peer).or_default() += 1;
                }
            }
        }
    }

    // Degree-target feasibility: bootstrap wiring plus monitor links must
    // fit under each target.
    let mut fill_targets: Vec<FillTarget> = Vec::new();
    for p in &planned {
        let Some(target) = p.degree_target else {
            continue;
        };
        let addresses = engine.peer(p.peer).spec().addresses.len() as u32;
        let fixed =
            config.monitors * addresses + planned_extra_degree.get(&p.peer).copied().unwrap_or(0);
        if fixed > target {
            return Err(invalid(
                format!("peer_groups[{}].degree_min", p.group),
                format!(
                    "peer {} already has {fixed} planned connections, above its degree target {target}",
                    p.peer
                ),
            ));
        }
        fill_targets.push(FillTarget {
            peer: p.peer,
            address: p.primary_addr,
            target_degree: target,
            asn_pool: config.peer_groups[p.group].filler_asn_pool.clone(),
        });
    }

    // Actor list; positions double as wake-dispatch indices.
    let reachable_addresses = engine.reachable_addresses();
    let mut actors: Vec<Box<dyn ActorBehavior>> = Vec::new();
    let make_init = |index: usize| ActorInit {
        seed: config.seed,
        index: index as u64,
        days: config.days,
        reachable_addresses: reachable_addresses.clone(),
        group_addresses: group_addresses.clone(),
    };
    if config.monitors > 0 {
        let init = make_init(actors.len());
        let params = serde_json::json!({
            "count": config.monitors,
            "asn": config.monitor_asn,
        });
        actors.push(registry.build("monitor", &init, &params)?);
    }
    if !wires.is_empty() {
        actors.push(Box::new(TopologyWiring::new(wires)));
    }
    if !fill_targets.is_empty() {
        actors.push(Box::new(DegreeFill::new(actors.len(), fill_targets)));
    }
    for actor_config in &config.actors {
        let init = make_init(actors.len());
        // Scenario-level probe params are the defaults for campaigns that
        // do not set their own.
        let params = if actor_config.kind == "probe-campaign" {
            let mut merged = serde_json::json!({
                "wait_s": config.probe.wait_s,
                "extra_connections": config.probe.extra_connections,
            });
            if let (Some(base), Some(given)) =
                (merged.as_object_mut(), actor_config.params.as_object())
            {
                for (key, value) in given {
                    base.insert(key.clone(), value.clone());
                }
            }
            merged
        } else {
            actor_config.params.clone()
        };
        actors.push(registry.build(&actor_config.kind, &init, &params)?);
    }

    run_actors(&mut engine, &mut actors)?;

    // Ground truth straight from the engine.
    let mut truth_peers = Vec::with_capacity(engine.peer_count());
    let mut degree_series = Vec::with_capacity(engine.peer_count());
    for id in 0..engine.peer_count() as u32 {
        let peer = engine.peer(PeerId(id));
        let spec = peer.spec();
        truth_peers.push(TruthPeer {
            id: PeerId(id),
            addresses: spec.addresses.clone(),
            reachable: spec.reachable,
            asn: spec.as_info.asn,
            category: spec.as_info.category,
            profile: spec.profile.clone(),
            max_connections: spec.max_connections,
            outbound_target: spec.outbound_target,
        });
        degree_series.push(PeerSeries {
            peer: PeerId(id),
            points: engine.degree_series(PeerId(id)).to_vec(),
        });
    }
    let universal_peers: Vec<PeerId> = truth_peers
        .iter()
        .filter(|p| {
            p.profile == "monitor"
                || planned
                    .iter()
                    .any(|pl| pl.peer == p.id && config.peer_groups[pl.group].connect_to_all)
        })
        .map(|p| p.id)
        .collect();
    let truth = GroundTruth {
        seed: config.seed,
        days: config.days,
        day_ms: DAY_MS,
        peers: truth_peers,
        degree_series,
        universal_peers,
    };

    let mut output = ActorOutput::default();
    for actor in actors.iter_mut() {
        actor.finish(&mut output);
    }

    Ok(ScenarioOutput {
        logs: engine.take_logs(),
        truth,
        probe_results: output.probe_results,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_group(name: &str, count: u32) -> PeerGroupConfig {
        PeerGroupConfig {
            name: name.to_string(),
            count,
            ..PeerGroupConfig::default()
        }
    }

    #[test]
    fn empty_scenario_produces_empty_logs() {
        let config = ScenarioConfig {
            monitors: 1,
            peer_groups: vec![base_group("peers", 3)],
            ..ScenarioConfig::default()
        };
        let output = run_scenario(&config).unwrap();
        assert_eq!(output.logs.len(), 1);
        // Only the monitor's own connection opens; no addr traffic.
        assert!(output.logs[0]
            .events
            .iter()
            .all(|e| matches!(e.kind, crate::engine::EventKind::ConnOpen { .. })));
        assert_eq!(output.truth.peers.len(), 4);
        assert_eq!(output.truth.universal_peers.len(), 1);
    }

    #[test]
    fn no_peer_groups_means_fully_empty_log() {
        let config = ScenarioConfig::default();
        let output = run_scenario(&config).unwrap();
        assert!(output.logs.is_empty());
        assert!(output.truth.peers.is_empty());
    }

    #[test]
    fn degree_targets_above_capacity_rejected_before_simulation() {
        let mut group = base_group("peers", 2);
        group.degree_min = Some(200);
        group.degree_max = Some(200);
        group.max_connections = 125;
        let config = ScenarioConfig {
            peer_groups: vec![group],
            ..ScenarioConfig::default()
        };
        let err = config.validate().unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { field, .. }
            if field.contains("degree_max")));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let err = ScenarioConfig::from_json("{\"bogus\": 1}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn duplicate_group_names_rejected() {
        let config = ScenarioConfig {
            peer_groups: vec![base_group("a", 1), base_group("a", 1)],
            ..ScenarioConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn degree_targets_are_realized_and_held() {
        let mut group = base_group("victims", 3);
        group.degree_min = Some(9);
        group.degree_max = Some(9);
        let config = ScenarioConfig {
            monitors: 1,
            days: 1,
            peer_groups: vec![group],
            ..ScenarioConfig::default()
        };
        let output = run_scenario(&config).unwrap();
        for peer in &output.truth.peers {
            if !peer.reachable {
                continue;
            }
            let mean = output.truth.mean_degree(peer.id, 0).unwrap();
            assert!(
                (mean - 9.0).abs() < 1e-6,
                "peer {} mean degree {mean}",
                peer.id
            );
        }
    }

    #[test]
    fn same_config_and_seed_reproduce_identical_logs() {
        let mut group = base_group("victims", 2);
        group.degree_min = Some(8);
        group.degree_max = Some(8);
        let config = ScenarioConfig {
            monitors: 1,
            days: 1,
            peer_groups: vec![group],
            actors: vec![ActorConfig {
                kind: "spam-wave".to_string(),
                params: serde_json::json!({
                    "sessions_per_address_per_day": 2,
                    "messages_per_session": 50,
                }),
            }],
            ..ScenarioConfig::default()
        };
        let mut bytes_a = Vec::new();
        run_scenario(&config).unwrap().logs[0]
            .write_to(&mut bytes_a)
            .unwrap();
        let mut bytes_b = Vec::new();
        run_scenario(&config).unwrap().logs[0]
            .write_to(&mut bytes_b)
            .unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn unknown_actor_kind_fails_with_known_list() {
        let config = ScenarioConfig {
            peer_groups: vec![base_group("peers", 1)],
            actors: vec![ActorConfig {
                kind: "mystery".to_string(),
                params: serde_json::json!({}),
            }],
            ..ScenarioConfig::default()
        };
        let err = run_scenario(&config).err().unwrap();
        assert!(err.to_string().contains("monitor"));
    }
}
