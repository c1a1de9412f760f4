//! Deterministic discrete-event engine: simulation clock, peer connection
//! tables, the inbound-eviction state machine, addr delivery and relay
//! scheduling, and per-peer event logs.
//!
//! The engine is strictly single-threaded. All randomness is drawn from
//! per-peer streams derived from the scenario seed, so a (config, seed)
//! pair reproduces byte-identical logs.

mod event;

pub use event::{Event, EventKind, EventLog, LogError, LogFilter, ReplayedConn};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AddrRecord, AsInfo, NetAddress, RoutabilityPolicy, Timestamp};
use crate::relay::{self, RelayParams, WIRE_MAX_RECORDS};

/// Milliseconds since the scenario epoch; the engine's clock.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * 1000)
    }

    pub fn millis(&self) -> u64 {
        self.0
    }

    /// Engine clock floored to gossip-timestamp granularity.
    pub fn to_timestamp(&self) -> Timestamp {
        Timestamp(self.0 / 1000)
    }

    pub fn plus_ms(&self, ms: u64) -> SimTime {
        SimTime(self.0.saturating_add(ms))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConnId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Inbound,
    Outbound,
}

/// Ground-truth configuration of a simulated peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSpec {
    pub addresses: Vec<NetAddress>,
    pub reachable: bool,
    pub max_connections: u32,
    pub outbound_target: u32,
    pub as_info: AsInfo,
    pub profile: String,
}

impl PeerSpec {
    pub fn new(addresses: Vec<NetAddress>, reachable: bool, as_info: AsInfo) -> Self {
        PeerSpec {
            addresses,
            reachable,
            max_connections: 125,
            outbound_target: 10,
            as_info,
            profile: "core".to_string(),
        }
    }

    pub fn with_limits(mut self, max_connections: u32, outbound_target: u32) -> Self {
        self.max_connections = max_connections;
        self.outbound_target = outbound_target;
        self
    }

    pub fn with_profile(mut self, profile: impl Into<String>) -> Self {
        self.profile = profile.into();
        self
    }
}

/// One live connection as seen from one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectionView {
    pub id: ConnId,
    pub local: PeerId,
    pub remote: PeerId,
    pub direction: Direction,
    pub established_at: SimTime,
    pub remote_as: AsInfo,
    pub remote_addr: NetAddress,
    pub protected: bool,
}

/// Result of accepting an inbound connection at a reachable peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenOutcome {
    /// The target had a free slot.
    Accepted,
    /// The target was at capacity and evicted an existing connection.
    AcceptedWithEviction(ConnId),
    /// The target was at capacity and the eviction rule picked the new
    /// connection itself; it was torn down immediately.
    RejectedSelf,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("peer cannot connect to itself")]
    SelfConnection,
    #[error("no peer owns address {0}")]
    UnknownAddress(NetAddress),
    #[error("peer {0} is not reachable")]
    TargetUnreachable(PeerId),
    #[error("peer {peer} is at its connection limit ({limit})")]
    InitiatorAtCapacity { peer: PeerId, limit: u32 },
    #[error("connection {0:?} is not open")]
    UnknownConnection(ConnId),
    #[error("duplicate connection from {from} to {addr}")]
    DuplicateConnection { from: PeerId, addr: NetAddress },
    #[error("peer {peer} is not an endpoint of connection {conn:?}")]
    NotAnEndpoint { peer: PeerId, conn: ConnId },
    #[error("addr message must carry 1..={max} records, got {got}")]
    WireSize { got: usize, max: usize },
    #[error("unknown peer id {0}")]
    UnknownPeer(PeerId),
    #[error("address {addr} owned by both {first} and {second}")]
    AddressCollision {
        addr: NetAddress,
        first: PeerId,
        second: PeerId,
    },
    #[error("reachable peer {0} must own at least one address")]
    ReachableWithoutAddress(PeerId),
}

/// Engine-level knobs. Protocol semantics live in [`RelayParams`].
#[derive(Debug, Clone)]
pub struct EngineParams {
    /// Constant one-way message delay.
    pub latency_ms: u64,
    /// The K oldest inbound connections of a peer are protected from
    /// eviction.
    pub protected_inbound_slots: usize,
    pub relay: RelayParams,
    pub routability: RoutabilityPolicy,
    /// Record every event engine-wide, not just at attached logs. Used by
    /// replay/determinism checks; costs memory on large runs.
    pub record_global_log: bool,
    /// Events scheduled past this horizon are dropped.
    pub end: SimTime,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            latency_ms: 50,
            protected_inbound_slots: 8,
            relay: RelayParams::default(),
            routability: RoutabilityPolicy::default(),
            record_global_log: false,
            end: SimTime::MAX,
        }
    }
}

/// Derives an independent RNG seed for a (domain, index) stream. Actors and
/// peers each get their own stream so adding one does not reshuffle the
/// draws of the others.
pub fn derive_seed(root: u64, domain: &str, index: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in domain.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    let mut z = root ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct ConnRecord {
    initiator: PeerId,
    acceptor: PeerId,
    dialed_addr: NetAddress,
    established: SimTime,
    open: bool,
}

/// Live state of one peer: its spec, open connections and relay bookkeeping.
pub struct PeerState {
    id: PeerId,
    spec: PeerSpec,
    conns: Vec<ConnId>,
    seen: HashSet<(NetAddress, Timestamp)>,
    seen_inserts: u32,
    relay_queue: BTreeMap<ConnId, Vec<AddrRecord>>,
    rng: ChaCha12Rng,
    passive: bool,
}

impl PeerState {
    pub fn id(&self) -> PeerId {
        self.id
    }

    pub fn spec(&self) -> &PeerSpec {
        &self.spec
    }

    /// Number of live connections, inbound plus outbound.
    pub fn degree(&self) -> usize {
        self.conns.len()
    }

    pub fn conn_ids(&self) -> &[ConnId] {
        &self.conns
    }

    /// Observers log traffic but never relay.
    pub fn is_passive(&self) -> bool {
        self.passive
    }

    pub fn has_seen(&self, record: &AddrRecord) -> bool {
        self.seen.contains(&(record.address, record.timestamp))
    }
}

struct LogSink {
    filter: LogFilter,
    log: EventLog,
}

enum Work {
    Wake {
        actor: usize,
        tag: u64,
    },
    Deliver {
        conn: ConnId,
        sender: PeerId,
        records: Vec<AddrRecord>,
    },
    Flush {
        peer: PeerId,
        conn: ConnId,
    },
}

struct Scheduled {
    at: SimTime,
    seq: u64,
    work: Work,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// What the event loop hands back to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    /// An actor asked to be woken; the runner dispatches it.
    Wake { actor: usize, tag: u64 },
    /// The queue is exhausted (or past the horizon).
    Idle,
}

pub struct Engine {
    params: EngineParams,
    seed: u64,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    peers: Vec<PeerState>,
    conns: Vec<ConnRecord>,
    addr_index: BTreeMap<NetAddress, PeerId>,
    sinks: Vec<LogSink>,
    sink_of: BTreeMap<PeerId, usize>,
    global: Option<EventLog>,
    degree_series: Vec<Vec<(u64, u32)>>,
}

impl Engine {
    pub fn new(params: EngineParams, seed: u64) -> Self {
        let global = params.record_global_log.then(|| EventLog {
            owner: None,
            label: "global".to_string(),
            events: Vec::new(),
        });
        Engine {
            params,
            seed,
            now: SimTime(0),
            seq: 0,
            queue: BinaryHeap::new(),
            peers: Vec::new(),
            conns: Vec::new(),
            addr_index: BTreeMap::new(),
            sinks: Vec::new(),
            sink_of: BTreeMap::new(),
            global,
            degree_series: Vec::new(),
        }
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    pub fn add_peer(&mut self, spec: PeerSpec) -> Result<PeerId, EngineError> {
        let id = PeerId(self.peers.len() as u32);
        if spec.reachable && spec.addresses.is_empty() {
            return Err(EngineError::ReachableWithoutAddress(id));
        }
        for addr in &spec.addresses {
            if let Some(&owner) = self.addr_index.get(addr) {
                return Err(EngineError::AddressCollision {
                    addr: *addr,
                    first: owner,
                    second: id,
                });
            }
        }
        for addr in &spec.addresses {
            self.addr_index.insert(*addr, id);
        }
        let rng = ChaCha12Rng::seed_from_u64(derive_seed(self.seed, "relay", id.0 as u64));
        self.peers.push(PeerState {
            id,
            spec,
            conns: Vec::new(),
            seen: HashSet::new(),
            seen_inserts: 0,
            relay_queue: BTreeMap::new(),
            rng,
            passive: false,
        });
        self.degree_series.push(Vec::new());
        Ok(id)
    }

    pub fn peer(&self, id: PeerId) -> &PeerState {
        &self.peers[id.0 as usize]
    }

    pub fn set_passive(&mut self, id: PeerId, passive: bool) {
        self.peers[id.0 as usize].passive = passive;
    }

    /// Attaches an event log sink to a peer. One sink per peer.
    pub fn attach_log(&mut self, peer: PeerId, label: impl Into<String>, filter: LogFilter) {
        let label = label.into();
        let idx = self.sinks.len();
        self.sinks.push(LogSink {
            filter,
            log: EventLog::new(peer, label),
        });
        self.sink_of.insert(peer, idx);
    }

    pub fn take_logs(&mut self) -> Vec<EventLog> {
        self.sink_of.clear();
        self.sinks.drain(..).map(|s| s.log).collect()
    }

    pub fn global_log(&self) -> Option<&EventLog> {
        self.global.as_ref()
    }

    /// Sorted list of addresses owned by reachable peers.
    pub fn reachable_addresses(&self) -> Vec<NetAddress> {
        self.addr_index
            .iter()
            .filter(|(_, id)| self.peers[id.0 as usize].spec.reachable)
            .map(|(addr, _)| *addr)
            .collect()
    }

    pub fn addr_owner(&self, addr: &NetAddress) -> Option<PeerId> {
        self.addr_index.get(addr).copied()
    }

    pub fn is_conn_open(&self, conn: ConnId) -> bool {
        self.conns.get(conn.0 as usize).is_some_and(|c| c.open)
    }

    pub fn conn_endpoints(&self, conn: ConnId) -> Option<(PeerId, PeerId)> {
        let c = self.conns.get(conn.0 as usize)?;
        c.open.then_some((c.initiator, c.acceptor))
    }

    /// Per-peer degree step series `(time_ms, degree)`, the ground truth
    /// behind estimator validation.
    pub fn degree_series(&self, peer: PeerId) -> &[(u64, u32)] {
        &self.degree_series[peer.0 as usize]
    }

    /// The connection table of `peer` with protection flags resolved.
    pub fn connections_of(&self, peer: PeerId) -> Vec<ConnectionView> {
        let state = &self.peers[peer.0 as usize];
        let protected = self.protected_set(state);
        state
            .conns
            .iter()
            .map(|&id| {
                let c = &self.conns[id.0 as usize];
                let (remote, direction) = if c.initiator == peer {
                    (c.acceptor, Direction::Outbound)
                } else {
                    (c.initiator, Direction::Inbound)
                };
                ConnectionView {
                    id,
                    local: peer,
                    remote,
                    direction,
                    established_at: c.established,
                    remote_as: self.peers[remote.0 as usize].spec.as_info,
                    remote_addr: self.remote_addr_for(peer, id),
                    protected: protected.contains(&id),
                }
            })
            .collect()
    }

    /// The K oldest inbound connections of a peer, by (established, id).
    fn protected_set(&self, state: &PeerState) -> HashSet<ConnId> {
        let mut inbound: Vec<(SimTime, ConnId)> = state
            .conns
            .iter()
            .filter(|&&id| self.conns[id.0 as usize].acceptor == state.id)
            .map(|&id| (self.conns[id.0 as usize].established, id))
            .collect();
        inbound.sort_unstable();
        inbound
            .into_iter()
            .take(self.params.protected_inbound_slots)
            .map(|(_, id)| id)
            .collect()
    }

    /// How `peer` identifies the far end of `conn`: the address it dialed
    /// for outbound connections, the remote's source address for inbound.
    fn remote_addr_for(&self, peer: PeerId, conn: ConnId) -> NetAddress {
        let c = &self.conns[conn.0 as usize];
        if c.initiator == peer {
            c.dialed_addr
        } else {
            self.source_addr(c.initiator)
        }
    }

    /// Source address a peer shows when dialing out. Peers without any
    /// configured address map into a reserved marker range.
    fn source_addr(&self, peer: PeerId) -> NetAddress {
        self.peers[peer.0 as usize]
            .spec
            .addresses
            .first()
            .copied()
            .unwrap_or_else(|| NetAddress::v4(0x7f00_0000 | peer.0, 0))
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn schedule(&mut self, at: SimTime, work: Work) {
        if at > self.params.end {
            return;
        }
        let seq = self.next_seq();
        self.queue.push(Reverse(Scheduled { at, seq, work }));
    }

    pub fn schedule_wake(&mut self, at: SimTime, actor: usize, tag: u64) {
        self.schedule(at, Work::Wake { actor, tag });
    }

    /// Opens a connection from `from` to the peer owning `to_addr`. The
    /// target always accepts; if it was at capacity, one connection (maybe
    /// the new one) is evicted. Parallel connections to the same address
    /// are allowed (the probe experiment opens five).
    pub fn open_connection(
        &mut self,
        from: PeerId,
        to_addr: NetAddress,
    ) -> Result<(ConnId, OpenOutcome), EngineError> {
        if from.0 as usize >= self.peers.len() {
            return Err(EngineError::UnknownPeer(from));
        }
        let to = *self
            .addr_index
            .get(&to_addr)
            .ok_or(EngineError::UnknownAddress(to_addr))?;
        if to == from {
            return Err(EngineError::SelfConnection);
        }
        if !self.peers[to.0 as usize].spec.reachable {
            return Err(EngineError::TargetUnreachable(to));
        }
        let from_state = &self.peers[from.0 as usize];
        if from_state.conns.len() >= from_state.spec.max_connections as usize {
            return Err(EngineError::InitiatorAtCapacity {
                peer: from,
                limit: from_state.spec.max_connections,
            });
        }

        let id = ConnId(self.conns.len() as u64);
        self.conns.push(ConnRecord {
            initiator: from,
            acceptor: to,
            dialed_addr: to_addr,
            established: self.now,
            open: true,
        });
        self.peers[from.0 as usize].conns.push(id);
        self.peers[to.0 as usize].conns.push(id);
        self.log_conn_open(id);
        self.record_degree(from);
        self.record_degree(to);

        let to_state = &self.peers[to.0 as usize];
        let outcome = if to_state.conns.len() > to_state.spec.max_connections as usize {
            let victim = self.evict_candidate(to).unwrap_or(id);
            self.force_close(victim, to);
            if victim == id {
                OpenOutcome::RejectedSelf
            } else {
                OpenOutcome::AcceptedWithEviction(victim)
            }
        } else {
            OpenOutcome::Accepted
        };
        Ok((id, outcome))
    }

    /// Like [`Engine::open_connection`] but refuses to duplicate a live
    /// connection from `from` to the same dialed address. Bootstrap and
    /// monitor wiring dial each address at most once.
    pub fn open_unique_connection(
        &mut self,
        from: PeerId,
        to_addr: NetAddress,
    ) -> Result<(ConnId, OpenOutcome), EngineError> {
        let exists = self.peers[from.0 as usize].conns.iter().any(|&id| {
            let c = &self.conns[id.0 as usize];
            c.initiator == from && c.dialed_addr == to_addr
        });
        if exists {
            return Err(EngineError::DuplicateConnection {
                from,
                addr: to_addr,
            });
        }
        self.open_connection(from, to_addr)
    }

    /// Picks the eviction victim for a peer that is over capacity by one:
    /// the youngest unprotected inbound connection from the AS group with
    /// the most unprotected inbound connections. Ties break toward the
    /// lowest ASN, then the highest (established, id). Returns `None` when
    /// every inbound connection is protected; the caller then drops the
    /// incoming connection itself.
    pub fn evict_candidate(&self, peer: PeerId) -> Option<ConnId> {
        let state = &self.peers[peer.0 as usize];
        let protected = self.protected_set(state);
        let mut groups: BTreeMap<u32, Vec<(SimTime, ConnId)>> = BTreeMap::new();
        for &id in &state.conns {
            let c = &self.conns[id.0 as usize];
            if c.acceptor != peer || protected.contains(&id) {
                continue;
            }
            let asn = self.peers[c.initiator.0 as usize].spec.as_info.asn;
            groups.entry(asn).or_default().push((c.established, id));
        }
        let (_, members) = groups
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))?;
        members.iter().max().map(|&(_, id)| id)
    }

    /// Closes a connection at the request of one of its endpoints.
    pub fn close_connection(&mut self, conn: ConnId, initiator: PeerId) -> Result<(), EngineError> {
        let c = self
            .conns
            .get(conn.0 as usize)
            .filter(|c| c.open)
            .ok_or(EngineError::UnknownConnection(conn))?;
        if c.initiator != initiator && c.acceptor != initiator {
            return Err(EngineError::NotAnEndpoint {
                peer: initiator,
                conn,
            });
        }
        self.force_close(conn, initiator);
        Ok(())
    }

    /// Closes the unique live connection between two peers; errors when
    /// none or several exist.
    pub fn close_between(&mut self, from: PeerId, to: PeerId) -> Result<(), EngineError> {
        let mut found = None;
        for &id in &self.peers[from.0 as usize].conns {
            let c = &self.conns[id.0 as usize];
            if (c.initiator, c.acceptor) == (from, to) || (c.initiator, c.acceptor) == (to, from) {
                if found.is_some() {
                    return Err(EngineError::UnknownConnection(id));
                }
                found = Some(id);
            }
        }
        let id = found.ok_or(EngineError::UnknownConnection(ConnId(u64::MAX)))?;
        self.force_close(id, from);
        Ok(())
    }

    fn force_close(&mut self, conn: ConnId, initiator: PeerId) {
        let c = &mut self.conns[conn.0 as usize];
        debug_assert!(c.open);
        c.open = false;
        let (a, b) = (c.initiator, c.acceptor);
        self.log_conn_close(conn, initiator);
        for peer in [a, b] {
            let state = &mut self.peers[peer.0 as usize];
            state.conns.retain(|&id| id != conn);
            state.relay_queue.remove(&conn);
        }
        self.record_degree(a);
        self.record_degree(b);
    }

    /// Sends an addr message over a connection; it arrives after the
    /// configured latency unless the connection closes first.
    pub fn send_addr(
        &mut self,
        from: PeerId,
        conn: ConnId,
        records: Vec<AddrRecord>,
    ) -> Result<(), EngineError> {
        let at = self.now;
        self.send_addr_at(from, conn, records, at)
    }

    /// Schedules an addr message to leave `from` at time `at`.
    pub fn send_addr_at(
        &mut self,
        from: PeerId,
        conn: ConnId,
        records: Vec<AddrRecord>,
        at: SimTime,
    ) -> Result<(), EngineError> {
        if records.is_empty() || records.len() > WIRE_MAX_RECORDS {
            return Err(EngineError::WireSize {
                got: records.len(),
                max: WIRE_MAX_RECORDS,
            });
        }
        let c = self
            .conns
            .get(conn.0 as usize)
            .filter(|c| c.open)
            .ok_or(EngineError::UnknownConnection(conn))?;
        if c.initiator != from && c.acceptor != from {
            return Err(EngineError::NotAnEndpoint { peer: from, conn });
        }
        let deliver_at = at.plus_ms(self.params.latency_ms);
        self.schedule(
            deliver_at,
            Work::Deliver {
                conn,
                sender: from,
                records,
            },
        );
        Ok(())
    }

    /// Advances the simulation until the next actor wake-up or queue
    /// exhaustion, processing deliveries and relay flushes in between.
    pub fn step(&mut self) -> StepEvent {
        while let Some(Reverse(item)) = self.queue.pop() {
            debug_assert!(item.at >= self.now);
            self.now = item.at;
            match item.work {
                Work::Wake { actor, tag } => return StepEvent::Wake { actor, tag },
                Work::Deliver {
                    conn,
                    sender,
                    records,
                } => self.handle_deliver(conn, sender, records),
                Work::Flush { peer, conn } => self.handle_flush(peer, conn),
            }
        }
        StepEvent::Idle
    }

    fn handle_deliver(&mut self, conn: ConnId, sender: PeerId, records: Vec<AddrRecord>) {
        let c = match self.conns.get(conn.0 as usize) {
            Some(c) if c.open => c,
            _ => return, // lost in flight
        };
        let receiver = if c.initiator == sender {
            c.acceptor
        } else {
            c.initiator
        };
        self.log_addr_msg(conn, sender, receiver, &records);
        if self.peers[receiver.0 as usize].passive {
            return;
        }

        let now_secs = self.now.to_timestamp();
        let msg_size = records.len();
        let accepted = relay::accept_addr(
            &records,
            msg_size,
            now_secs,
            &self.params.relay,
            &self.params.routability,
        );
        if accepted.is_empty() {
            return;
        }

        // Candidate relay targets: every live connection except those to the
        // sending peer.
        let candidates: Vec<ConnId> = self.peers[receiver.0 as usize]
            .conns
            .iter()
            .copied()
            .filter(|&id| {
                let c = &self.conns[id.0 as usize];
                c.initiator != sender && c.acceptor != sender
            })
            .collect();
        let fanout = self.params.relay.fanout;

        let mut queued: Vec<(ConnId, AddrRecord)> = Vec::new();
        {
            let state = &mut self.peers[receiver.0 as usize];
            for item in accepted {
                let key = (item.record.address, item.record.timestamp);
                let fresh = state.seen.insert(key);
                if fresh {
                    state.seen_inserts += 1;
                }
                if !(fresh && item.relay_eligible) || candidates.is_empty() {
                    continue;
                }
                for &target in
                    relay::select_relay_targets(&candidates, fanout, &mut state.rng).iter()
                {
                    queued.push((target, item.record));
                }
            }
        }
        for (target, record) in queued {
            self.queue_relay(receiver, target, record);
        }
        self.maybe_prune_seen(receiver);
    }

    fn queue_relay(&mut self, peer: PeerId, conn: ConnId, record: AddrRecord) {
        let flush_after = self.params.relay.flush_interval_ms;
        let at = self.now.plus_ms(flush_after);
        let state = &mut self.peers[peer.0 as usize];
        let vacant = !state.relay_queue.contains_key(&conn);
        state.relay_queue.entry(conn).or_default().push(record);
        if vacant {
            self.schedule(at, Work::Flush { peer, conn });
        }
    }

    fn handle_flush(&mut self, peer: PeerId, conn: ConnId) {
        let Some(queue) = self.peers[peer.0 as usize].relay_queue.remove(&conn) else {
            return;
        };
        if !self.is_conn_open(conn) {
            return;
        }
        // Staleness is re-checked at send time: a record queued just inside
        // the window must not leave once it has aged out.
        let now_secs = self.now.to_timestamp().secs();
        let staleness = self.params.relay.relay_staleness_window_s;
        let fresh: Vec<AddrRecord> = queue
            .into_iter()
            .filter(|r| r.timestamp.secs() + staleness >= now_secs)
            .collect();
        for chunk in fresh.chunks(WIRE_MAX_RECORDS) {
            if chunk.is_empty() {
                continue;
            }
            let _ = self.send_addr(peer, conn, chunk.to_vec());
        }
    }

    fn maybe_prune_seen(&mut self, peer: PeerId) {
        let staleness = self.params.relay.relay_staleness_window_s;
        let horizon = self.now.to_timestamp().secs().saturating_sub(staleness);
        let state = &mut self.peers[peer.0 as usize];
        if state.seen_inserts >= 16_384 {
            state.seen_inserts = 0;
            state.seen.retain(|(_, ts)| ts.secs() >= horizon);
        }
    }

    fn record_degree(&mut self, peer: PeerId) {
        let degree = self.peers[peer.0 as usize].conns.len() as u32;
        let series = &mut self.degree_series[peer.0 as usize];
        match series.last_mut() {
            Some(last) if last.0 == self.now.0 => last.1 = degree,
            _ => series.push((self.now.0, degree)),
        }
    }

    fn log_conn_open(&mut self, conn: ConnId) {
        let c = &self.conns[conn.0 as usize];
        let (initiator, acceptor, dialed) = (c.initiator, c.acceptor, c.dialed_addr);
        let established = c.established;
        let seq = self.next_seq();
        for (local, remote, direction) in [
            (initiator, acceptor, Direction::Outbound),
            (acceptor, initiator, Direction::Inbound),
        ] {
            let remote_addr = if direction == Direction::Outbound {
                dialed
            } else {
                self.source_addr(remote)
            };
            let kind = EventKind::ConnOpen {
                conn,
                local,
                remote,
                remote_addr,
                direction,
                remote_asn: self.peers[remote.0 as usize].spec.as_info.asn,
            };
            self.append_event(local, established, seq, kind, false);
        }
    }

    fn log_conn_close(&mut self, conn: ConnId, close_initiator: PeerId) {
        let c = &self.conns[conn.0 as usize];
        let (initiator, acceptor, dialed) = (c.initiator, c.acceptor, c.dialed_addr);
        let seq = self.next_seq();
        let now = self.now;
        for (local, remote, direction) in [
            (initiator, acceptor, Direction::Outbound),
            (acceptor, initiator, Direction::Inbound),
        ] {
            let remote_addr = if direction == Direction::Outbound {
                dialed
            } else {
                self.source_addr(remote)
            };
            let kind = EventKind::ConnClose {
                conn,
                local,
                remote,
                remote_addr,
                direction,
                initiator: close_initiator,
            };
            self.append_event(local, now, seq, kind, false);
        }
    }

    fn log_addr_msg(
        &mut self,
        conn: ConnId,
        sender: PeerId,
        receiver: PeerId,
        records: &[AddrRecord],
    ) {
        let has_sink = self
            .sink_of
            .get(&receiver)
            .map(|&i| self.sinks[i].filter == LogFilter::All)
            .unwrap_or(false);
        if !has_sink && self.global.is_none() {
            return;
        }
        let sender_addr = self.remote_addr_for(receiver, conn);
        let kind = EventKind::AddrMsg {
            conn,
            sender,
            sender_addr,
            receiver,
            records: records.to_vec(),
        };
        let seq = self.next_seq();
        let now = self.now;
        self.append_event(receiver, now, seq, kind, true);
    }

    /// Appends to the owner's sink (subject to its filter) and, for the
    /// initiator-side view of connection events, to the global log.
    fn append_event(
        &mut self,
        owner: PeerId,
        time: SimTime,
        seq: u64,
        kind: EventKind,
        is_addr: bool,
    ) {
        let to_global = match &kind {
            EventKind::ConnOpen { direction, .. } | EventKind::ConnClose { direction, .. } => {
                *direction == Direction::Outbound
            }
            EventKind::AddrMsg { .. } => true,
        };
        if let Some(&idx) = self.sink_of.get(&owner) {
            let sink = &mut self.sinks[idx];
            if !(is_addr && sink.filter == LogFilter::ConnOnly) {
                sink.log.push(Event {
                    time,
                    seq,
                    kind: kind.clone(),
                });
            }
        }
        if to_global {
            if let Some(global) = &mut self.global {
                global.push(Event { time, seq, kind });
            }
        }
    }
}

#[cfg(test)]
mod tests;
