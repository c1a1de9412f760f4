//! Degree estimation from observed spam relay.
//!
//! A monitor receiving a relayed spam batch of size `c` from a peer with
//! `n` neighbors sees on average `c = A·F/(n−1)` records, where `A`
//! routable addresses were relayed with fanout `F`. Inverting gives the
//! intermediate estimate `n = 1 + A·F/c`; the daily median over all
//! batches of a subject address is its degree estimate for that day.

mod histogram;
mod matching;
mod unreachable;

pub use histogram::{category_stats, degree_histogram, modal_bin, CategoryStat, HistogramRow};
pub use matching::{
    cluster_estimate_consistency, count_unique_peers, match_addresses, MatchParams, PeerCluster,
};
pub use unreachable::{
    avg_outgoing, count_super_peers, estimate_unreachable, total_slots_from_estimates,
    UnreachableBreakdown, UnreachableError, UserAgentShare,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EventKind, EventLog, SimTime};
use crate::model::{NetAddress, Timestamp};
use crate::truth::GroundTruth;

/// Filter thresholds and model constants of the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    /// Messages smaller than this are ignored entirely.
    pub min_message_size: usize,
    /// Records must be stamped at least this far into the future...
    pub future_window_low_s: u64,
    /// ...and at most this far, relative to receipt.
    pub future_window_high_s: u64,
    /// Batches are used only when strictly more records than this arrived.
    pub min_batch_count: u64,
    /// Estimation window; one estimate per subject per window.
    pub window_length_s: u64,
    /// Expected routable addresses relayed per spam batch.
    pub addresses_per_batch: f64,
    /// Relay fanout assumed by the model.
    pub fanout: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams {
            min_message_size: 4,
            future_window_low_s: 180,
            future_window_high_s: 600,
            min_batch_count: 10,
            window_length_s: 86_400,
            addresses_per_batch: 4_935.0,
            fanout: 2.0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.future_window_low_s == 0 || self.future_window_low_s >= self.future_window_high_s {
            return Err(EstimatorError::InvalidParams(format!(
                "future window must satisfy 0 < low < high, got {}..{}",
                self.future_window_low_s, self.future_window_high_s
            )));
        }
        if self.window_length_s == 0 {
            return Err(EstimatorError::InvalidParams(
                "window_length_s must be positive".into(),
            ));
        }
        if self.min_batch_count == 0 {
            return Err(EstimatorError::InvalidParams(
                "min_batch_count must be at least 1".into(),
            ));
        }
        if self.addresses_per_batch <= 0.0 || self.fanout <= 0.0 {
            return Err(EstimatorError::InvalidParams(
                "addresses_per_batch and fanout must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid estimator params: {0}")]
    InvalidParams(String),
    #[error("batch count must be positive, got {0}")]
    NonPositiveCount(f64),
    #[error("batch count {count} not above the minimum {min}; degrees this high are unobservable")]
    CountTooSmall { count: f64, min: u64 },
    #[error("no ground truth for estimate subject {subject} (day {day})")]
    MissingTruth { subject: NetAddress, day: u64 },
    #[error("ground truth degree for {subject} day {day} is zero")]
    ZeroTruth { subject: NetAddress, day: u64 },
}

/// One spam batch as seen by a monitor: how many qualifying records
/// arrived from `sender` carrying `batch_timestamp`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchObservation {
    pub sender: NetAddress,
    pub batch_timestamp: Timestamp,
    pub count: u64,
    pub first_seen: SimTime,
}

/// A day's degree estimate for one subject address.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeEstimate {
    pub subject: NetAddress,
    pub day: u64,
    pub estimate: f64,
    pub samples: usize,
}

/// Counts directly forwarded spam per (sender address, batch timestamp):
/// only records from messages of at least `min_message_size` whose
/// timestamp lies `future_window_low_s..=future_window_high_s` ahead of
/// receipt, keeping groups with strictly more than `min_batch_count`
/// records.
pub fn filter_direct_batches(log: &EventLog, params: &EstimatorParams) -> Vec<BatchObservation> {
    let mut groups: BTreeMap<(NetAddress, Timestamp), (u64, SimTime)> = BTreeMap::new();
    for event in &log.events {
        let EventKind::AddrMsg {
            sender_addr,
            records,
            ..
        } = &event.kind
        else {
            continue;
        };
        if records.len() < params.min_message_size {
            continue;
        }
        let received = event.time.to_timestamp();
        for record in records {
            let ahead = record.timestamp.delta_secs(received);
            if ahead < params.future_window_low_s as i64
                || ahead > params.future_window_high_s as i64
            {
                continue;
            }
            let entry = groups
                .entry((*sender_addr, record.timestamp))
                .or_insert((0, event.time));
            entry.0 += 1;
            entry.1 = entry.1.min(event.time);
        }
    }
    groups
        .into_iter()
        .filter(|(_, (count, _))| *count > params.min_batch_count)
        .map(
            |((sender, batch_timestamp), (count, first_seen))| BatchObservation {
                sender,
                batch_timestamp,
                count,
                first_seen,
            },
        )
        .collect()
}

/// Inverts the relay expectation: a batch of `count` records puts the
/// sender's neighbor count at `1 + (A / count) · F`.
///
/// Counts below `min_batch_count` are rejected: such batches cannot be
/// told apart from indirectly relayed spam, which is what caps observable
/// degrees near 1,000. The boundary itself is accepted so the inversion
/// covers the whole observable range; [`filter_direct_batches`] applies
/// the strict threshold when counting.
pub fn intermediate_estimate(count: f64, params: &EstimatorParams) -> Result<f64, EstimatorError> {
    if count <= 0.0 {
        return Err(EstimatorError::NonPositiveCount(count));
    }
    if count < params.min_batch_count as f64 {
        return Err(EstimatorError::CountTooSmall {
            count,
            min: params.min_batch_count,
        });
    }
    Ok(1.0 + params.addresses_per_batch / count * params.fanout)
}

/// Median with the mean-of-middle-pair rule for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("no NaN estimates"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Pools batch observations (possibly from several monitors) into one
/// estimate per (subject address, day): the median of the intermediate
/// estimates observed in that window. Windows without observations emit
/// nothing.
pub fn daily_estimates(
    observations: &[BatchObservation],
    params: &EstimatorParams,
) -> Result<Vec<DegreeEstimate>, EstimatorError> {
    let window_ms = params.window_length_s * 1_000;
    let mut groups: BTreeMap<(NetAddress, u64), Vec<f64>> = BTreeMap::new();
    for obs in observations {
        let day = obs.first_seen.millis() / window_ms;
        let estimate = intermediate_estimate(obs.count as f64, params)?;
        groups.entry((obs.sender, day)).or_default().push(estimate);
    }
    Ok(groups
        .into_iter()
        .map(|((subject, day), mut intermediates)| DegreeEstimate {
            subject,
            day,
            estimate: median(&mut intermediates),
            samples: intermediates.len(),
        })
        .collect())
}

/// Runs the full pipeline over several monitor logs.
pub fn estimate_from_logs(
    logs: &[EventLog],
    params: &EstimatorParams,
) -> Result<Vec<DegreeEstimate>, EstimatorError> {
    let mut observations = Vec::new();
    for log in logs {
        observations.extend(filter_direct_batches(log, params));
    }
    daily_estimates(&observations, params)
}

/// Per-address mean of the daily estimates, the whole-span aggregate used
/// by clustering cross-checks and slot accounting.
pub fn aggregate_by_address(estimates: &[DegreeEstimate]) -> BTreeMap<NetAddress, f64> {
    let mut sums: BTreeMap<NetAddress, (f64, usize)> = BTreeMap::new();
    for est in estimates {
        let entry = sums.entry(est.subject).or_insert((0.0, 0));
        entry.0 += est.estimate;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(addr, (sum, n))| (addr, sum / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub subject: NetAddress,
    pub day: u64,
    pub estimate: f64,
    pub truth: f64,
    pub abs_pct_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapeReport {
    /// Mean absolute percentage error over all estimates.
    pub mape: f64,
    pub rows: Vec<ValidationRow>,
}

/// Compares estimates against ground truth: truth per (peer, day) is the
/// mean degree over the day, and the report averages |est − truth|/truth.
/// Estimates whose subject or day has no truth fail, naming the subject.
pub fn validate_estimates(
    estimates: &[DegreeEstimate],
    truth: &GroundTruth,
) -> Result<MapeReport, EstimatorError> {
    let owners = truth.address_index();
    let mut rows = Vec::with_capacity(estimates.len());
    let mut total = 0.0;
    for est in estimates {
        let missing = || EstimatorError::MissingTruth {
            subject: est.subject,
            day: est.day,
        };
        let peer = owners.get(&est.subject).copied().ok_or_else(missing)?;
        let truth_degree = truth.mean_degree(peer, est.day).ok_or_else(missing)?;
        if truth_degree <= 0.0 {
            return Err(EstimatorError::ZeroTruth {
                subject: est.subject,
                day: est.day,
            });
        }
        let ape = (est.estimate - truth_degree).abs() / truth_degree;
        total += ape;
        rows.push(ValidationRow {
            subject: est.subject,
            day: est.day,
            estimate: est.estimate,
            truth: truth_degree,
            abs_pct_error: ape,
        });
    }
    let mape = if rows.is_empty() {
        0.0
    } else {
        total / rows.len() as f64
    };
    Ok(MapeReport { mape, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ConnId, Event, PeerId};
    use crate::model::AddrRecord;

    fn addr(ip: u32) -> NetAddress {
        NetAddress::v4(ip, 8333)
    }

    fn msg_event(time_ms: u64, seq: u64, sender: u32, records: Vec<AddrRecord>) -> Event {
        Event {
            time: SimTime(time_ms),
            seq,
            kind: EventKind::AddrMsg {
                conn: ConnId(0),
                sender: PeerId(1),
                sender_addr: addr(sender),
                receiver: PeerId(0),
                records,
            },
        }
    }

    fn batch(ip_base: u32, n: usize, ts: u64) -> Vec<AddrRecord> {
        (0..n as u32)
            .map(|i| AddrRecord::new(addr(ip_base + i), Timestamp(ts)))
            .collect()
    }

    #[test]
    fn qualifying_batch_counted_once_per_sender_and_timestamp() {
        let mut log = EventLog::new(PeerId(0), "monitor-0");
        // 80 qualifying records split over two messages, one timestamp.
        log.push(msg_event(1_000, 1, 9, batch(0x0900_0000, 50, 540)));
        log.push(msg_event(2_000, 2, 9, batch(0x0900_0100, 30, 540)));
        let out = filter_direct_batches(&log, &EstimatorParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].count, 80);
        assert_eq!(out[0].first_seen, SimTime(1_000));
        assert_eq!(out[0].batch_timestamp, Timestamp(540));
    }

    #[test]
    fn group_at_threshold_dropped() {
        let mut log = EventLog::new(PeerId(0), "m");
        log.push(msg_event(0, 1, 9, batch(0x0900_0000, 10, 540)));
        assert!(filter_direct_batches(&log, &EstimatorParams::default()).is_empty());
        let mut log2 = EventLog::new(PeerId(0), "m");
        log2.push(msg_event(0, 1, 9, batch(0x0900_0000, 11, 540)));
        assert_eq!(
            filter_direct_batches(&log2, &EstimatorParams::default()).len(),
            1
        );
    }

    #[test]
    fn small_messages_excluded_entirely() {
        let mut log = EventLog::new(PeerId(0), "m");
        for i in 0..20 {
            log.push(msg_event(
                i,
                i,
                9,
                batch(0x0900_0000 + i as u32 * 8, 3, 540),
            ));
        }
        assert!(filter_direct_batches(&log, &EstimatorParams::default()).is_empty());
    }

    #[test]
    fn future_window_bounds_are_inclusive() {
        let params = EstimatorParams::default();
        let mut log = EventLog::new(PeerId(0), "m");
        let records = vec![
            AddrRecord::new(addr(1), Timestamp(179)), // too near
            AddrRecord::new(addr(2), Timestamp(180)),
            AddrRecord::new(addr(3), Timestamp(600)),
            AddrRecord::new(addr(4), Timestamp(601)), // too far
        ];
        log.push(msg_event(0, 1, 9, records));
        let groups: Vec<_> = {
            let mut p = params.clone();
            p.min_batch_count = 0;
            filter_direct_batches(&log, &p)
        };
        let timestamps: Vec<u64> = groups.iter().map(|g| g.batch_timestamp.secs()).collect();
        assert_eq!(timestamps, vec![180, 600]);
    }

    #[test]
    fn inverse_formula_matches_known_points() {
        let params = EstimatorParams::default();
        // c = 79.6 inverts to just about the default connection cap.
        assert!((intermediate_estimate(79.6, &params).unwrap() - 125.0).abs() < 0.01);
        assert_eq!(intermediate_estimate(9_870.0, &params).unwrap(), 2.0);
        // The boundary count maps to the top of the observable range;
        // anything below it is indistinguishable from multi-hop relay.
        assert_eq!(intermediate_estimate(10.0, &params).unwrap(), 988.0);
        assert!(matches!(
            intermediate_estimate(9.99, &params),
            Err(EstimatorError::CountTooSmall { .. })
        ));
        assert!(matches!(
            intermediate_estimate(0.0, &params),
            Err(EstimatorError::NonPositiveCount(_))
        ));
    }

    #[test]
    fn round_trip_identity_over_observable_degrees() {
        let params = EstimatorParams::default();
        for n in 3..=988u32 {
            let count = params.addresses_per_batch * params.fanout / (n as f64 - 1.0);
            let estimate = intermediate_estimate(count, &params).unwrap();
            let rel = (estimate - n as f64).abs() / n as f64;
            assert!(rel <= 1e-9, "n={n} estimate={estimate}");
        }
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&mut [125.0, 124.0, 300.0]), 125.0);
        assert_eq!(median(&mut [120.0, 130.0]), 125.0);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn daily_estimates_pool_by_subject_and_window() {
        let params = EstimatorParams::default();
        let obs = |sender: u32, ts: u64, count: u64, at_ms: u64| BatchObservation {
            sender: addr(sender),
            batch_timestamp: Timestamp(ts),
            count,
            first_seen: SimTime(at_ms),
        };
        let observations = vec![
            obs(9, 540, 100, 1_000),
            obs(9, 9_540, 90, 5_000_000),
            obs(9, 86_940, 100, 86_400_000), // next day
            obs(10, 540, 50, 1_000),
        ];
        let estimates = daily_estimates(&observations, &params).unwrap();
        assert_eq!(estimates.len(), 3);
        let first = &estimates[0];
        assert_eq!(first.subject, addr(9));
        assert_eq!(first.day, 0);
        assert_eq!(first.samples, 2);
        let expected = median(&mut [
            intermediate_estimate(100.0, &params).unwrap(),
            intermediate_estimate(90.0, &params).unwrap(),
        ]);
        assert!((first.estimate - expected).abs() < 1e-12);
        assert_eq!(estimates[1].day, 1);
        assert_eq!(estimates[2].subject, addr(10));
    }

    #[test]
    fn validation_matches_hand_arithmetic() {
        use crate::model::AsCategory;
        use crate::truth::{PeerSeries, TruthPeer};
        let truth = GroundTruth {
            seed: 0,
            days: 1,
            day_ms: 86_400_000,
            peers: vec![TruthPeer {
                id: PeerId(0),
                addresses: vec![addr(9)],
                reachable: true,
                asn: 1,
                category: AsCategory::Uncategorized,
                profile: "core".into(),
                max_connections: 125,
                outbound_target: 10,
            }],
            degree_series: vec![PeerSeries {
                peer: PeerId(0),
                points: vec![(0, 125)],
            }],
            universal_peers: vec![],
        };
        let estimates = vec![DegreeEstimate {
            subject: addr(9),
            day: 0,
            estimate: 120.0,
            samples: 1,
        }];
        let report = validate_estimates(&estimates, &truth).unwrap();
        assert!((report.mape - 0.04).abs() < 1e-12);

        let perfect = vec![DegreeEstimate {
            subject: addr(9),
            day: 0,
            estimate: 125.0,
            samples: 1,
        }];
        assert_eq!(validate_estimates(&perfect, &truth).unwrap().mape, 0.0);

        let unknown = vec![DegreeEstimate {
            subject: addr(99),
            day: 0,
            estimate: 10.0,
            samples: 1,
        }];
        assert!(matches!(
            validate_estimates(&unknown, &truth),
            Err(EstimatorError::MissingTruth { subject, .. }) if subject == addr(99)
        ));
    }

    proptest::proptest! {
        #[test]
        fn estimate_strictly_decreases_in_count(
            a in 10.001f64..10_000.0,
            b in 10.001f64..10_000.0,
        ) {
            proptest::prop_assume!((a - b).abs() > 1e-9);
            let params = EstimatorParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let e_lo = intermediate_estimate(lo, &params).unwrap();
            let e_hi = intermediate_estimate(hi, &params).unwrap();
            proptest::prop_assert!(e_lo > e_hi);
        }

        #[test]
        fn median_survives_minority_contamination(
            clean in proptest::collection::vec(1.0f64..1_000.0, 1..40),
            dirty in proptest::collection::vec(-1e12f64..1e12, 0..40),
        ) {
            proptest::prop_assume!(dirty.len() < clean.len());
            let lo = clean.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut all: Vec<f64> = clean.iter().chain(dirty.iter()).cloned().collect();
            let m = median(&mut all);
            proptest::prop_assert!(m >= lo && m <= hi, "median {m} outside [{lo}, {hi}]");
        }
    }
}
