//! Scripted behaviors that drive a scenario: monitors, spam waves, topology
//! wiring, degree maintenance and probe campaigns. Each behavior implements
//! [`ActorBehavior`] and is registered by name in an [`ActorRegistry`];
//! scenario configs pick behaviors at runtime by that name.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::engine::{
    derive_seed, ConnId, Engine, EngineError, LogFilter, PeerId, PeerSpec, SimTime,
};
use crate::model::{make_spam_batch_with, AsCategory, AsInfo, NetAddress, Timestamp};
use crate::probe::{ProbeCampaign, ProbeResult};

pub const DAY_MS: u64 = 86_400_000;

/// Artifacts collected from actors when a scenario finishes.
#[derive(Debug, Default)]
pub struct ActorOutput {
    /// Probe outcomes per tester label, in probe order.
    pub probe_results: Vec<(String, Vec<ProbeResult>)>,
}

/// A scripted participant in the simulation. `start` runs before the event
/// loop; afterwards the behavior only acts when a scheduled wake fires.
pub trait ActorBehavior {
    fn kind(&self) -> &'static str;

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError>;

    fn wake(&mut self, engine: &mut Engine, tag: u64) -> Result<(), ActorError>;

    /// Hands collected artifacts to the scenario output.
    fn finish(&mut self, _out: &mut ActorOutput) {}
}

#[derive(Debug, Error)]
pub enum ActorError {
    #[error("unknown actor kind {kind:?} (registered: {known})")]
    UnknownKind { kind: String, known: String },
    #[error("invalid params for actor {kind:?}: {reason}")]
    InvalidParams { kind: &'static str, reason: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Context handed to actor factories.
pub struct ActorInit {
    /// Scenario seed; factories derive their own streams from it.
    pub seed: u64,
    /// Position of the actor in the scenario, used for seed derivation and
    /// wake dispatch.
    pub index: u64,
    /// Scenario length.
    pub days: u32,
    /// All reachable addresses, sorted; the default target set.
    pub reachable_addresses: Vec<NetAddress>,
    /// Addresses per peer group (reachable or not), each list sorted.
    pub group_addresses: BTreeMap<String, Vec<NetAddress>>,
}

impl ActorInit {
    /// Resolves a `target_groups` selector: named groups, or every
    /// reachable address when the selector is absent.
    pub fn resolve_targets(
        &self,
        kind: &'static str,
        selector: &Option<Vec<String>>,
    ) -> Result<Vec<NetAddress>, ActorError> {
        let mut out = Vec::new();
        match selector {
            None => out.extend_from_slice(&self.reachable_addresses),
            Some(names) => {
                for name in names {
                    let addrs = self.group_addresses.get(name).ok_or_else(|| {
                        ActorError::InvalidParams {
                            kind,
                            reason: format!("unknown target group {name:?}"),
                        }
                    })?;
                    out.extend_from_slice(addrs);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

type ActorFactory =
    fn(&ActorInit, &serde_json::Value) -> Result<Box<dyn ActorBehavior>, ActorError>;

/// Name-keyed factory table for actor behaviors.
pub struct ActorRegistry {
    factories: BTreeMap<&'static str, ActorFactory>,
}

impl Default for ActorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ActorRegistry {
    pub fn empty() -> Self {
        ActorRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with the built-in behaviors: `monitor`, `spam-wave`,
    /// `probe-campaign`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("monitor", MonitorFleet::from_params);
        reg.register("spam-wave", SpamWave::from_params);
        reg.register("probe-campaign", ProbeCampaign::from_params);
        reg
    }

    pub fn register(&mut self, kind: &'static str, factory: ActorFactory) {
        self.factories.insert(kind, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(
        &self,
        kind: &str,
        init: &ActorInit,
        params: &serde_json::Value,
    ) -> Result<Box<dyn ActorBehavior>, ActorError> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| ActorError::UnknownKind {
                kind: kind.to_string(),
                known: self.names().join(", "),
            })?;
        factory(init, params)
    }
}

pub(crate) fn parse_params<'a, T: Deserialize<'a>>(
    kind: &'static str,
    params: &'a serde_json::Value,
) -> Result<T, ActorError> {
    T::deserialize(params).map_err(|e| ActorError::InvalidParams {
        kind,
        reason: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Monitors
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MonitorParams {
    count: u32,
    asn: u32,
}

impl Default for MonitorParams {
    fn default() -> Self {
        MonitorParams {
            count: 1,
            asn: 64_600,
        }
    }
}

/// Observer peers that dial every reachable address, log everything they
/// receive, accept no inbound connections and never relay.
pub struct MonitorFleet {
    params: MonitorParams,
}

impl MonitorFleet {
    pub fn from_params(
        _init: &ActorInit,
        params: &serde_json::Value,
    ) -> Result<Box<dyn ActorBehavior>, ActorError> {
        let params: MonitorParams = parse_params("monitor", params)?;
        Ok(Box::new(MonitorFleet { params }))
    }
}

impl ActorBehavior for MonitorFleet {
    fn kind(&self) -> &'static str {
        "monitor"
    }

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError> {
        let targets = engine.reachable_addresses();
        for i in 0..self.params.count {
            // Monitors sit outside the public ranges used for peers.
            let own = NetAddress::v4(0xC633_6400 + i, 8333); // 198.51.100.x
            let spec = PeerSpec::new(
                vec![own],
                false,
                AsInfo::new(self.params.asn + i, AsCategory::Uncategorized),
            )
            .with_limits(u32::MAX, u32::MAX)
            .with_profile("monitor");
            let id = engine.add_peer(spec)?;
            engine.set_passive(id, true);
            engine.attach_log(id, format!("monitor-{i}"), LogFilter::All);
            for addr in &targets {
                engine.open_unique_connection(id, *addr)?;
            }
        }
        Ok(())
    }

    fn wake(&mut self, _engine: &mut Engine, _tag: u64) -> Result<(), ActorError> {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Spam waves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpamWaveParams {
    /// Spam sessions per victim address per simulated day.
    pub sessions_per_address_per_day: u32,
    /// Seconds the shared batch timestamp lies in the future at session
    /// start.
    pub timestamp_offset_s: u64,
    pub messages_per_session: u32,
    pub records_per_message: u32,
    /// Gap between consecutive messages of one session.
    pub message_interval_ms: u64,
    /// Number of source peers sessions rotate through.
    pub spammers: u32,
    pub spammer_asn: u32,
    /// Victim groups; all reachable addresses when absent.
    pub target_groups: Option<Vec<String>>,
}

impl Default for SpamWaveParams {
    fn default() -> Self {
        SpamWaveParams {
            sessions_per_address_per_day: 10,
            timestamp_offset_s: 540,
            messages_per_session: 500,
            records_per_message: 10,
            message_interval_ms: 10,
            spammers: 8,
            spammer_asn: 64_700,
            target_groups: None,
        }
    }
}

struct SessionPlan {
    victim: NetAddress,
    spammer_idx: u32,
}

enum SpamTag {
    Begin(usize),
    End(usize),
}

impl SpamTag {
    fn encode(&self) -> u64 {
        match self {
            SpamTag::Begin(i) => (*i as u64) << 1,
            SpamTag::End(i) => ((*i as u64) << 1) | 1,
        }
    }

    fn decode(tag: u64) -> SpamTag {
        let idx = (tag >> 1) as usize;
        if tag & 1 == 0 {
            SpamTag::Begin(idx)
        } else {
            SpamTag::End(idx)
        }
    }
}

/// Replays the observed spam-wave behavior: connect to a reachable address,
/// send `messages_per_session` addr messages of `records_per_message`
/// uniformly random v4 addresses sharing one future timestamp, disconnect.
/// Batches aimed at different victims never share an (address, timestamp)
/// tuple.
pub struct SpamWave {
    params: SpamWaveParams,
    actor_index: usize,
    rng: ChaCha12Rng,
    pool: Vec<PeerId>,
    sessions: Vec<SessionPlan>,
    open_conns: HashMap<usize, ConnId>,
    used_by_ts: HashMap<Timestamp, HashSet<u32>>,
    days: u32,
    targets: Vec<NetAddress>,
}

impl SpamWave {
    pub fn from_params(
        init: &ActorInit,
        params: &serde_json::Value,
    ) -> Result<Box<dyn ActorBehavior>, ActorError> {
        let params: SpamWaveParams = parse_params("spam-wave", params)?;
        if params.spammers == 0
            || params.messages_per_session == 0
            || params.records_per_message == 0
        {
            return Err(ActorError::InvalidParams {
                kind: "spam-wave",
                reason: "spammers, messages_per_session and records_per_message must be positive"
                    .into(),
            });
        }
        let targets = init.resolve_targets("spam-wave", &params.target_groups)?;
        Ok(Box::new(SpamWave {
            params,
            actor_index: init.index as usize,
            rng: ChaCha12Rng::seed_from_u64(derive_seed(init.seed, "spam-wave", init.index)),
            pool: Vec::new(),
            sessions: Vec::new(),
            open_conns: HashMap::new(),
            used_by_ts: HashMap::new(),
            days: init.days,
            targets,
        }))
    }

    fn session_span_ms(&self) -> u64 {
        self.params.messages_per_session as u64 * self.params.message_interval_ms
    }
}

impl ActorBehavior for SpamWave {
    fn kind(&self) -> &'static str {
        "spam-wave"
    }

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError> {
        for i in 0..self.params.spammers {
            let own = NetAddress::v4(0xCB00_7100 + (self.actor_index as u32) * 64 + i, 8333);
            let spec = PeerSpec::new(
                vec![own],
                false,
                AsInfo::new(self.params.spammer_asn, AsCategory::Uncategorized),
            )
            .with_limits(10_000, 10_000)
            .with_profile("spammer");
            self.pool.push(engine.add_peer(spec)?);
        }

        // Sessions stay clear of the day boundary so a session and its batch
        // timestamp land in the day they started in.
        let margin_ms = 2 * self.params.timestamp_offset_s * 1000 + self.session_span_ms();
        let latest = DAY_MS.saturating_sub(margin_ms).max(10_001);
        let mut spammer_next = 0u32;
        for day in 0..self.days {
            for victim in self.targets.clone() {
                for _ in 0..self.params.sessions_per_address_per_day {
                    let offset = self.rng.gen_range(10_000..latest);
                    let start = SimTime(day as u64 * DAY_MS + offset);
                    let idx = self.sessions.len();
                    self.sessions.push(SessionPlan {
                        victim,
                        spammer_idx: spammer_next % self.params.spammers,
                    });
                    spammer_next = spammer_next.wrapping_add(1);
                    engine.schedule_wake(start, self.actor_index, SpamTag::Begin(idx).encode());
                }
            }
        }
        Ok(())
    }

    fn wake(&mut self, engine: &mut Engine, tag: u64) -> Result<(), ActorError> {
        match SpamTag::decode(tag) {
            SpamTag::Begin(idx) => {
                let (victim, spammer) = {
                    let plan = &self.sessions[idx];
                    (plan.victim, self.pool[plan.spammer_idx as usize])
                };
                let conn = match engine.open_connection(spammer, victim) {
                    Ok((conn, _)) => {
                        if !engine.is_conn_open(conn) {
                            return Ok(()); // evicted on arrival; session abandoned
                        }
                        conn
                    }
                    Err(EngineError::InitiatorAtCapacity { .. }) => return Ok(()),
                    Err(e) => return Err(e.into()),
                };
                self.open_conns.insert(idx, conn);

                let ts = engine
                    .now()
                    .to_timestamp()
                    .saturating_add(self.params.timestamp_offset_s);
                let total =
                    (self.params.messages_per_session * self.params.records_per_message) as usize;
                let used = self.used_by_ts.entry(ts).or_default();
                let batch = make_spam_batch_with(&mut self.rng, total, ts, used).map_err(|e| {
                    ActorError::InvalidParams {
                        kind: "spam-wave",
                        reason: e.to_string(),
                    }
                })?;
                let now = engine.now();
                for (i, chunk) in batch
                    .chunks(self.params.records_per_message as usize)
                    .enumerate()
                {
                    let at = now.plus_ms(i as u64 * self.params.message_interval_ms);
                    engine.send_addr_at(spammer, conn, chunk.to_vec(), at)?;
                }
                // Disconnect only after the last message has arrived; an
                // earlier close would drop it in flight.
                let drain = self.session_span_ms() + engine.params().latency_ms;
                engine.schedule_wake(
                    now.plus_ms(drain),
                    self.actor_index,
                    SpamTag::End(idx).encode(),
                );
                // Timestamps far in the past can no longer collide with
                // future sessions; drop their exclusion sets.
                let horizon = engine.now().to_timestamp().secs().saturating_sub(3_600);
                self.used_by_ts.retain(|ts, _| ts.secs() >= horizon);
            }
            SpamTag::End(idx) => {
                if let Some(conn) = self.open_conns.remove(&idx) {
                    if engine.is_conn_open(conn) {
                        let spammer = self.pool[self.sessions[idx].spammer_idx as usize];
                        engine.close_connection(conn, spammer)?;
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Degree maintenance
// ---------------------------------------------------------------------------

/// One peer's degree top-up plan. Fillers cycle `asn_pool` from its start,
/// so a pool as long as the filler count pins the target's exact inbound
/// AS composition.
pub struct FillTarget {
    pub peer: PeerId,
    pub address: NetAddress,
    pub target_degree: u32,
    pub asn_pool: Vec<u32>,
}

/// Default filler ASNs: a small spread so no single stub AS dominates a
/// target's eviction grouping.
pub fn default_filler_asns() -> Vec<u32> {
    (64_512..64_520).collect()
}

struct Filler {
    peer: PeerId,
    target_addr: NetAddress,
    conn: Option<ConnId>,
}

/// Creates the stub dialers that realize configured ground-truth degrees
/// and re-opens their connections when churn (eviction, spam sessions)
/// frees a slot again. Reconnects only into free slots, so maintenance
/// itself never evicts.
pub struct DegreeFill {
    actor_index: usize,
    targets: Vec<FillTarget>,
    fillers: Vec<Filler>,
    target_degree: BTreeMap<PeerId, u32>,
    check_interval_ms: u64,
}

impl DegreeFill {
    pub fn new(actor_index: usize, targets: Vec<FillTarget>) -> Self {
        DegreeFill {
            actor_index,
            targets,
            fillers: Vec::new(),
            target_degree: BTreeMap::new(),
            check_interval_ms: 30_000,
        }
    }
}

impl ActorBehavior for DegreeFill {
    fn kind(&self) -> &'static str {
        "degree-fill"
    }

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError> {
        for t in &self.targets {
            self.target_degree.insert(t.peer, t.target_degree);
            let pool = if t.asn_pool.is_empty() {
                default_filler_asns()
            } else {
                t.asn_pool.clone()
            };
            let current = engine.peer(t.peer).degree() as u32;
            for (created, _) in (current..t.target_degree).enumerate() {
                let asn = pool[created % pool.len()];
                let spec = PeerSpec::new(
                    Vec::new(),
                    false,
                    AsInfo::new(asn, AsCategory::Uncategorized),
                )
                .with_limits(2, 1)
                .with_profile("filler");
                let id = engine.add_peer(spec)?;
                let (conn, _) = engine.open_connection(id, t.address)?;
                self.fillers.push(Filler {
                    peer: id,
                    target_addr: t.address,
                    conn: Some(conn),
                });
            }
        }
        if !self.fillers.is_empty() {
            engine.schedule_wake(SimTime(self.check_interval_ms), self.actor_index, 0);
        }
        Ok(())
    }

    fn wake(&mut self, engine: &mut Engine, _tag: u64) -> Result<(), ActorError> {
        for filler in &mut self.fillers {
            let open = filler.conn.is_some_and(|c| engine.is_conn_open(c));
            if open {
                continue;
            }
            filler.conn = None;
            let owner = match engine.addr_owner(&filler.target_addr) {
                Some(owner) => owner,
                None => continue,
            };
            let target = self.target_degree.get(&owner).copied().unwrap_or(0);
            if (engine.peer(owner).degree() as u32) < target {
                let (conn, _) = engine.open_connection(filler.peer, filler.target_addr)?;
                filler.conn = Some(conn);
            }
        }
        engine.schedule_wake(
            engine.now().plus_ms(self.check_interval_ms),
            self.actor_index,
            0,
        );
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Topology wiring
// ---------------------------------------------------------------------------

/// A planned bootstrap connection.
pub struct WirePlan {
    pub from: PeerId,
    pub to: NetAddress,
}

/// Opens the scenario's planned time-zero connections: reachable-to-
/// reachable edges, unreachable outbound connections and super-peer links.
pub struct TopologyWiring {
    plans: Vec<WirePlan>,
}

impl TopologyWiring {
    pub fn new(plans: Vec<WirePlan>) -> Self {
        TopologyWiring { plans }
    }
}

impl ActorBehavior for TopologyWiring {
    fn kind(&self) -> &'static str {
        "topology"
    }

    fn start(&mut self, engine: &mut Engine) -> Result<(), ActorError> {
        for plan in &self.plans {
            engine.open_unique_connection(plan.from, plan.to)?;
        }
        Ok(())
    }

    fn wake(&mut self, _engine: &mut Engine, _tag: u64) -> Result<(), ActorError> {
        Ok(())
    }
}

/// Drives the engine loop, dispatching wakes to their owning actors until
/// the queue drains. Actor indices must match positions in `actors`.
pub fn run_actors(
    engine: &mut Engine,
    actors: &mut [Box<dyn ActorBehavior>],
) -> Result<(), ActorError> {
    for actor in actors.iter_mut() {
        actor.start(engine)?;
    }
    loop {
        match engine.step() {
            crate::engine::StepEvent::Wake { actor, tag } => {
                actors[actor].wake(engine, tag)?;
            }
            crate::engine::StepEvent::Idle => return Ok(()),
        }
    }
}
