use super::*;
use crate::model::{AsCategory, AsInfo};

fn addr(ip: u32) -> NetAddress {
    NetAddress::v4(ip, 8333)
}

fn spec(addrs: Vec<NetAddress>, reachable: bool, asn: u32) -> PeerSpec {
    PeerSpec::new(
        addrs,
        reachable,
        AsInfo::new(asn, AsCategory::Uncategorized),
    )
}

fn small_engine() -> Engine {
    Engine::new(
        EngineParams {
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    )
}

/// Target peer with capacity `m`, `k` protected slots, plus dialer peers in
/// the given ASNs already connected inbound, in order.
fn target_with_inbound(engine: &mut Engine, m: u32, asns: &[u32]) -> (PeerId, Vec<PeerId>) {
    let target = engine
        .add_peer(spec(vec![addr(0x0a00_0001)], true, 1).with_limits(m, 10))
        .unwrap();
    let mut dialers = Vec::new();
    for (i, &asn) in asns.iter().enumerate() {
        let d = engine
            .add_peer(spec(vec![addr(0x1400_0000 + i as u32)], false, asn).with_limits(500, 500))
            .unwrap();
        engine.open_connection(d, addr(0x0a00_0001)).unwrap();
        dialers.push(d);
    }
    (target, dialers)
}

#[test]
fn open_below_capacity_is_accepted() {
    let mut engine = small_engine();
    let (target, _) = target_with_inbound(&mut engine, 10, &[100, 100]);
    let dialer = engine.add_peer(spec(vec![], false, 7)).unwrap();
    let (_, outcome) = engine.open_connection(dialer, addr(0x0a00_0001)).unwrap();
    assert_eq!(outcome, OpenOutcome::Accepted);
    assert_eq!(engine.peer(target).degree(), 3);
}

#[test]
fn connection_symmetry_after_open_and_close() {
    let mut engine = small_engine();
    let a = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let b = engine.add_peer(spec(vec![addr(2)], true, 2)).unwrap();
    let (conn, _) = engine.open_connection(a, addr(2)).unwrap();
    let views_a = engine.connections_of(a);
    let views_b = engine.connections_of(b);
    assert_eq!(views_a.len(), 1);
    assert_eq!(views_a[0].direction, Direction::Outbound);
    assert_eq!(views_a[0].remote, b);
    assert_eq!(views_b[0].direction, Direction::Inbound);
    assert_eq!(views_b[0].remote, a);

    engine.close_connection(conn, a).unwrap();
    assert_eq!(engine.peer(a).degree(), 0);
    assert_eq!(engine.peer(b).degree(), 0);
    assert!(matches!(
        engine.close_connection(conn, a),
        Err(EngineError::UnknownConnection(_))
    ));
}

#[test]
fn self_and_unreachable_dials_are_rejected() {
    let mut engine = small_engine();
    let a = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let b = engine.add_peer(spec(vec![addr(2)], false, 2)).unwrap();
    assert!(matches!(
        engine.open_connection(a, addr(1)),
        Err(EngineError::SelfConnection)
    ));
    assert!(matches!(
        engine.open_connection(a, addr(2)),
        Err(EngineError::TargetUnreachable(p)) if p == b
    ));
    assert!(matches!(
        engine.open_connection(a, addr(99)),
        Err(EngineError::UnknownAddress(_))
    ));
}

#[test]
fn duplicate_unique_dial_is_rejected() {
    let mut engine = small_engine();
    let a = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let _b = engine.add_peer(spec(vec![addr(2)], true, 2)).unwrap();
    engine.open_unique_connection(a, addr(2)).unwrap();
    assert!(matches!(
        engine.open_unique_connection(a, addr(2)),
        Err(EngineError::DuplicateConnection { .. })
    ));
    // The raw probe path allows parallel connections.
    assert!(engine.open_connection(a, addr(2)).is_ok());
}

#[test]
fn eviction_picks_youngest_in_largest_as_group() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 0,
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    );
    // Capacity 8, groups {ASa: 3, ASb: 5}.
    let asns = [10, 10, 10, 20, 20, 20, 20, 20];
    let (target, dialers) = target_with_inbound(&mut engine, 8, &asns);
    assert_eq!(engine.peer(target).degree(), 8);

    let newcomer = engine
        .add_peer(spec(vec![], false, 30).with_limits(10, 10))
        .unwrap();
    let (conn, outcome) = engine.open_connection(newcomer, addr(0x0a00_0001)).unwrap();
    // Victim is the youngest of ASb = the last ASb dialer.
    let expected_victim = *dialers.last().unwrap();
    match outcome {
        OpenOutcome::AcceptedWithEviction(victim) => {
            assert_ne!(victim, conn);
            assert_eq!(engine.peer(expected_victim).degree(), 0);
        }
        other => panic!("unexpected outcome {other:?}"),
    }
    assert_eq!(engine.peer(target).degree(), 8);
    assert!(engine.is_conn_open(conn));
}

#[test]
fn eviction_single_group_takes_youngest_overall() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 0,
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    );
    let (target, _) = target_with_inbound(&mut engine, 3, &[10, 10, 10]);
    let newcomer = engine
        .add_peer(spec(vec![], false, 10).with_limits(10, 10))
        .unwrap();
    // Newcomer joins the only group and is its youngest member.
    let (_, outcome) = engine.open_connection(newcomer, addr(0x0a00_0001)).unwrap();
    assert_eq!(outcome, OpenOutcome::RejectedSelf);
    assert_eq!(engine.peer(target).degree(), 3);
    assert_eq!(engine.peer(newcomer).degree(), 0);
}

#[test]
fn group_size_tie_breaks_toward_lowest_asn() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 0,
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    );
    // Tie {ASa(40): 4, ASb(50): 4}; lower ASN group loses its youngest.
    let asns = [40, 50, 40, 50, 40, 50, 40, 50];
    let (target, dialers) = target_with_inbound(&mut engine, 8, &asns);
    let newcomer = engine
        .add_peer(spec(vec![], false, 60).with_limits(10, 10))
        .unwrap();
    let (_, outcome) = engine.open_connection(newcomer, addr(0x0a00_0001)).unwrap();
    // Youngest in ASN 40 is dialer index 6.
    assert!(matches!(outcome, OpenOutcome::AcceptedWithEviction(_)));
    assert_eq!(engine.peer(dialers[6]).degree(), 0);
    assert_eq!(engine.peer(dialers[7]).degree(), 1);
    assert_eq!(engine.peer(target).degree(), 8);
}

#[test]
fn protected_connections_survive_eviction() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 2,
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    );
    // The two oldest (ASN 10) are protected even though their group is
    // largest among all inbound.
    let asns = [10, 10, 10, 20];
    let (target, dialers) = target_with_inbound(&mut engine, 4, &asns);
    let views = engine.connections_of(target);
    assert_eq!(views.iter().filter(|v| v.protected).count(), 2);

    let newcomer = engine
        .add_peer(spec(vec![], false, 30).with_limits(10, 10))
        .unwrap();
    engine.open_connection(newcomer, addr(0x0a00_0001)).unwrap();
    // Victim must come from the unprotected tail {10, 20, 30}: the lone
    // ASN-10 unprotected connection wins the tie as lowest ASN.
    assert_eq!(engine.peer(dialers[0]).degree(), 1);
    assert_eq!(engine.peer(dialers[1]).degree(), 1);
    assert_eq!(engine.peer(dialers[2]).degree(), 0);
}

#[test]
fn fully_protected_table_rejects_the_newcomer() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 8,
            routability: RoutabilityPolicy::allow_all(),
            ..EngineParams::default()
        },
        1,
    );
    let (target, _) = target_with_inbound(&mut engine, 3, &[10, 20, 30]);
    let newcomer = engine
        .add_peer(spec(vec![], false, 40).with_limits(10, 10))
        .unwrap();
    // All three existing inbound plus the newcomer fit in the K = 8 oldest,
    // so nothing is evictable and the newcomer itself is dropped.
    let (_, outcome) = engine.open_connection(newcomer, addr(0x0a00_0001)).unwrap();
    assert_eq!(outcome, OpenOutcome::RejectedSelf);
    assert_eq!(engine.peer(target).degree(), 3);
}

#[test]
fn capacity_never_exceeded_and_evictions_logged() {
    let mut engine = Engine::new(
        EngineParams {
            protected_inbound_slots: 0,
            routability: RoutabilityPolicy::allow_all(),
            record_global_log: true,
            ..EngineParams::default()
        },
        1,
    );
    let (target, _) = target_with_inbound(&mut engine, 5, &[10, 11, 12, 13, 14]);
    for i in 0..4u32 {
        let d = engine
            .add_peer(spec(vec![], false, 20 + i).with_limits(10, 10))
            .unwrap();
        engine.open_connection(d, addr(0x0a00_0001)).unwrap();
        assert!(engine.peer(target).degree() <= 5);
    }
    let global = engine.global_log().unwrap();
    let opens = global
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ConnOpen { .. }))
        .count();
    let closes = global
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ConnClose { .. }))
        .count();
    assert_eq!(opens, 9);
    assert_eq!(closes, 4);
    // Replaying the log reproduces the final connection table.
    let replayed = global.replay_connections();
    assert_eq!(replayed.len(), 5);
}

#[test]
fn addr_message_is_delivered_with_latency_and_logged() {
    let mut engine = small_engine();
    let sender = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let monitor = engine
        .add_peer(spec(vec![addr(2)], false, 2).with_limits(1000, 1000))
        .unwrap();
    engine.set_passive(monitor, true);
    engine.attach_log(monitor, "monitor-0", LogFilter::All);
    let (conn, _) = engine.open_connection(monitor, addr(1)).unwrap();

    let records = vec![AddrRecord::new(addr(0x0808_0808), Timestamp(540))];
    engine.send_addr(sender, conn, records.clone()).unwrap();
    assert_eq!(engine.step(), StepEvent::Idle);
    assert_eq!(engine.now(), SimTime(50));

    let logs = engine.take_logs();
    let events = &logs[0].events;
    assert_eq!(events.len(), 2); // conn_open + addr_msg
    match &events[1].kind {
        EventKind::AddrMsg {
            sender: s,
            sender_addr,
            records: r,
            ..
        } => {
            assert_eq!(*s, sender);
            assert_eq!(*sender_addr, addr(1));
            assert_eq!(r, &records);
        }
        other => panic!("unexpected event {other:?}"),
    }
}

#[test]
fn message_in_flight_is_lost_when_connection_closes() {
    let mut engine = small_engine();
    let sender = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let monitor = engine
        .add_peer(spec(vec![addr(2)], false, 2).with_limits(10, 10))
        .unwrap();
    engine.set_passive(monitor, true);
    engine.attach_log(monitor, "monitor-0", LogFilter::All);
    let (conn, _) = engine.open_connection(monitor, addr(1)).unwrap();
    engine
        .send_addr(sender, conn, vec![AddrRecord::new(addr(9), Timestamp(0))])
        .unwrap();
    engine.close_connection(conn, sender).unwrap();
    engine.step();
    let logs = engine.take_logs();
    assert!(logs[0]
        .events
        .iter()
        .all(|e| !matches!(e.kind, EventKind::AddrMsg { .. })));
}

#[test]
fn relay_forwards_once_to_fanout_neighbors_excluding_sender() {
    let mut engine = Engine::new(
        EngineParams {
            latency_ms: 10,
            routability: RoutabilityPolicy::allow_all(),
            relay: RelayParams {
                flush_interval_ms: 100,
                ..RelayParams::default()
            },
            ..EngineParams::default()
        },
        3,
    );
    let hub = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let sender = engine
        .add_peer(spec(vec![addr(2)], false, 2).with_limits(10, 10))
        .unwrap();
    let (sender_conn, _) = engine.open_connection(sender, addr(1)).unwrap();
    let mut neighbor_logs = Vec::new();
    for i in 0..4u32 {
        let n = engine
            .add_peer(spec(vec![addr(100 + i)], false, 10 + i).with_limits(10, 10))
            .unwrap();
        engine.set_passive(n, true);
        engine.attach_log(n, format!("n{i}"), LogFilter::All);
        engine.open_connection(n, addr(1)).unwrap();
        neighbor_logs.push(n);
    }

    let record = AddrRecord::new(addr(0x0909_0909), Timestamp(540));
    engine.send_addr(sender, sender_conn, vec![record]).unwrap();
    engine.step();
    // Duplicate receipt: relayed once only.
    engine.send_addr(sender, sender_conn, vec![record]).unwrap();
    engine.step();

    let logs = engine.take_logs();
    let receivers: usize = logs
        .iter()
        .map(|log| {
            log.events
                .iter()
                .filter(|e| matches!(&e.kind, EventKind::AddrMsg { records, .. } if records.contains(&record)))
                .count()
        })
        .sum();
    assert_eq!(receivers, 2, "fanout must be exactly 2, relayed once");
    assert_eq!(engine.peer(hub).degree(), 5);
}

#[test]
fn stale_record_not_relayed_after_flush_delay() {
    let mut engine = Engine::new(
        EngineParams {
            latency_ms: 10,
            routability: RoutabilityPolicy::allow_all(),
            relay: RelayParams {
                flush_interval_ms: 5_000,
                ..RelayParams::default()
            },
            ..EngineParams::default()
        },
        3,
    );
    let hub = engine.add_peer(spec(vec![addr(1)], true, 1)).unwrap();
    let sender = engine
        .add_peer(spec(vec![addr(2)], false, 2).with_limits(10, 10))
        .unwrap();
    let (conn, _) = engine.open_connection(sender, addr(1)).unwrap();
    let n = engine
        .add_peer(spec(vec![addr(3)], false, 3).with_limits(10, 10))
        .unwrap();
    engine.set_passive(n, true);
    engine.attach_log(n, "n", LogFilter::All);
    engine.open_connection(n, addr(1)).unwrap();

    // Eligible on arrival (age 597 s < 600 s) but stale by flush time
    // (age 602 s), so the hub must drop it at send.
    engine
        .send_addr_at(
            sender,
            conn,
            vec![AddrRecord::new(addr(9), Timestamp(3))],
            SimTime::from_secs(600),
        )
        .unwrap();
    engine.step();
    assert_eq!(engine.peer(hub).degree(), 2);
    let logs = engine.take_logs();
    assert!(logs[0]
        .events
        .iter()
        .all(|e| !matches!(e.kind, EventKind::AddrMsg { .. })));
}

#[test]
fn derive_seed_separates_domains_and_indices() {
    let a = derive_seed(1, "relay", 0);
    let b = derive_seed(1, "relay", 1);
    let c = derive_seed(1, "actor", 0);
    let d = derive_seed(2, "relay", 0);
    assert!(a != b && a != c && a != d && b != c);
    assert_eq!(a, derive_seed(1, "relay", 0));
}
