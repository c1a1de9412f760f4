//! Degree distribution tables: normalized histogram rows (overall and per
//! AS category) and per-category medians.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{AsCategory, NetAddress};

use super::{median, DegreeEstimate};

/// One histogram cell. `category = None` rows carry the overall histogram;
/// category rows are normalized by the same grand total, so they stack to
/// the overall frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub category: Option<AsCategory>,
    pub count: usize,
    pub frequency: f64,
}

/// Normalized histogram of degree estimates with the given bin width.
/// Subjects missing from `categories` count as `Uncategorized`.
pub fn degree_histogram(
    estimates: &[DegreeEstimate],
    categories: &BTreeMap<NetAddress, AsCategory>,
    bin_width: f64,
) -> Vec<HistogramRow> {
    assert!(bin_width > 0.0);
    let mut cells: BTreeMap<(i64, Option<AsCategory>), usize> = BTreeMap::new();
    for est in estimates {
        let bin = (est.estimate / bin_width).floor() as i64;
        let category = categories
            .get(&est.subject)
            .copied()
            .unwrap_or(AsCategory::Uncategorized);
        *cells.entry((bin, None)).or_default() += 1;
        *cells.entry((bin, Some(category))).or_default() += 1;
    }
    let total = estimates.len().max(1) as f64;
    cells
        .into_iter()
        .map(|((bin, category), count)| HistogramRow {
            bin_low: bin as f64 * bin_width,
            bin_high: (bin + 1) as f64 * bin_width,
            category,
            count,
            frequency: count as f64 / total,
        })
        .collect()
}

/// Of the overall rows, the one holding the most mass.
pub fn modal_bin(rows: &[HistogramRow]) -> Option<&HistogramRow> {
    rows.iter().filter(|r| r.category.is_none()).max_by(|a, b| {
        a.frequency
            .partial_cmp(&b.frequency)
            .unwrap()
            .then(b.bin_low.partial_cmp(&a.bin_low).unwrap())
    })
}

/// Per-category estimate medians. Categories without estimates are
/// omitted. Degrees are integral quantities, so the rounded median is
/// reported alongside the raw one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStat {
    pub category: AsCategory,
    pub count: usize,
    pub median: f64,
    pub median_rounded: i64,
}

pub fn category_stats(
    estimates: &[DegreeEstimate],
    categories: &BTreeMap<NetAddress, AsCategory>,
) -> Vec<CategoryStat> {
    let mut per_category: BTreeMap<AsCategory, Vec<f64>> = BTreeMap::new();
    for est in estimates {
        let category = categories
            .get(&est.subject)
            .copied()
            .unwrap_or(AsCategory::Uncategorized);
        per_category.entry(category).or_default().push(est.estimate);
    }
    per_category
        .into_iter()
        .map(|(category, mut values)| {
            let m = median(&mut values);
            CategoryStat {
                category,
                count: values.len(),
                median: m,
                median_rounded: m.round() as i64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(ip: u32) -> NetAddress {
        NetAddress::v4(ip, 8333)
    }

    fn est(ip: u32, estimate: f64) -> DegreeEstimate {
        DegreeEstimate {
            subject: addr(ip),
            day: 0,
            estimate,
            samples: 1,
        }
    }

    #[test]
    fn identical_estimates_fill_one_bin() {
        let estimates: Vec<_> = (0..8).map(|i| est(i, 125.0)).collect();
        let rows = degree_histogram(&estimates, &BTreeMap::new(), 5.0);
        let overall: Vec<_> = rows.iter().filter(|r| r.category.is_none()).collect();
        assert_eq!(overall.len(), 1);
        assert_eq!(overall[0].bin_low, 125.0);
        assert_eq!(overall[0].bin_high, 130.0);
        assert_eq!(overall[0].frequency, 1.0);
        assert_eq!(modal_bin(&rows).unwrap().bin_low, 125.0);
    }

    #[test]
    fn category_rows_stack_to_overall() {
        let mut categories = BTreeMap::new();
        categories.insert(addr(0), AsCategory::CloudProvider);
        categories.insert(addr(1), AsCategory::Isp);
        let estimates = vec![est(0, 126.0), est(1, 126.0), est(2, 97.0)];
        let rows = degree_histogram(&estimates, &categories, 5.0);
        let overall_126: f64 = rows
            .iter()
            .filter(|r| r.bin_low == 125.0 && r.category.is_none())
            .map(|r| r.frequency)
            .sum();
        let stacked_126: f64 = rows
            .iter()
            .filter(|r| r.bin_low == 125.0 && r.category.is_some())
            .map(|r| r.frequency)
            .sum();
        assert!((overall_126 - stacked_126).abs() < 1e-12);
        assert!((overall_126 - 2.0 / 3.0).abs() < 1e-12);
        // Uncategorized subjects fall back to the default category.
        assert!(rows
            .iter()
            .any(|r| r.category == Some(AsCategory::Uncategorized) && r.bin_low == 95.0));
    }

    #[test]
    fn category_medians_and_empty_category_omission() {
        let mut categories = BTreeMap::new();
        for i in 0..3 {
            categories.insert(addr(i), AsCategory::CloudProvider);
        }
        for i in 3..5 {
            categories.insert(addr(i), AsCategory::Isp);
        }
        let estimates = vec![
            est(0, 124.8),
            est(1, 125.2),
            est(2, 125.9),
            est(3, 96.7),
            est(4, 97.2),
        ];
        let stats = category_stats(&estimates, &categories);
        assert_eq!(stats.len(), 2);
        let cloud = &stats[1];
        assert_eq!(cloud.category, AsCategory::CloudProvider);
        assert_eq!(cloud.median, 125.2);
        assert_eq!(cloud.median_rounded, 125);
        let isp = &stats[0];
        assert_eq!(isp.category, AsCategory::Isp);
        assert_eq!(isp.median_rounded, 97);
        // No `Both` or `Uncategorized` rows.
        assert!(stats
            .iter()
            .all(|s| matches!(s.category, AsCategory::Isp | AsCategory::CloudProvider)));
    }
}
