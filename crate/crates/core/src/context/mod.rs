//! Spatiotemporal context: z-scored location plus one-hot hour, day and week,
//! and the location/time filtering applied to training manifests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::manifest::{AnnotationRecord, DAYS, HOURS, WEEKS};

pub const CONTEXT_DIM: usize = 2 + HOURS as usize + DAYS as usize + WEEKS as usize;
pub const HOUR_OFFSET: usize = 2;
pub const DAY_OFFSET: usize = HOUR_OFFSET + HOURS as usize;
pub const WEEK_OFFSET: usize = DAY_OFFSET + DAYS as usize;

const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("cannot fit normalization statistics on zero records")]
    Empty,
    #[error("context field out of range: {0}")]
    Range(String),
}

/// Location normalization statistics (population convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub lat_mean: f64,
    pub lat_std: f64,
    pub lon_mean: f64,
    pub lon_std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            lat_mean: 0.0,
            lat_std: 1.0,
            lon_mean: 0.0,
            lon_std: 1.0,
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits location statistics on `records`, which should be the training split.
/// A zero standard deviation is replaced by 1.
pub fn fit_normalizer(records: &[AnnotationRecord]) -> Result<NormStats, ContextError> {
    if records.is_empty() {
        return Err(ContextError::Empty);
    }
    let (lat_mean, mut lat_std) = mean_std(records.iter().map(|r| r.latitude));
    let (lon_mean, mut lon_std) = mean_std(records.iter().map(|r| r.longitude));
    for (name, std) in [("latitude", &mut lat_std), ("longitude", &mut lon_std)] {
        if std.is_nan() || *std <= 0.0 {
            log::warn!("{name} has zero variance over {} records; using std 1", records.len());
            *std = 1.0;
        }
    }
    Ok(NormStats {
        lat_mean,
        lat_std,
        lon_mean,
        lon_std,
    })
}

/// The 85-value context vector `[z_lat, z_lon | hour(24) | day(7) | week(52)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextVector(pub [f64; CONTEXT_DIM]);

impl ContextVector {
    pub fn zeros() -> Self {
        Self([0.0; CONTEXT_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn block_argmax(&self, offset: usize, len: usize) -> usize {
        let block = &self.0[offset..offset + len];
        (0..len).fold(0, |best, i| if block[i] > block[best] { i } else { best })
    }

    /// Recovers `(hour, day, week)` from the one-hot blocks.
    pub fn time_fields(&self) -> (u8, u8, u8) {
        (
            self.block_argmax(HOUR_OFFSET, HOURS as usize) as u8,
            self.block_argmax(DAY_OFFSET, DAYS as usize) as u8,
            self.block_argmax(WEEK_OFFSET, WEEKS as usize) as u8,
        )
    }
}

pub fn encode_context(record: &AnnotationRecord, stats: &NormStats) -> Result<ContextVector, ContextError> {
    if record.hour >= HOURS {
        return Err(ContextError::Range(format!("hour {}", record.hour)));
    }
    if record.day >= DAYS {
        return Err(ContextError::Range(format!("day {}", record.day)));
    }
    let week = match record.week {
        w if w < WEEKS => w,
        52 => {
            log::warn!("clip {}: week 52 clamped to 51", record.clip_id);
            WEEKS - 1
        }
        w => return Err(ContextError::Range(format!("week {w}"))),
    };
    if !record.latitude.is_finite() || !record.longitude.is_finite() {
        return Err(ContextError::Range(format!("non-finite location for {}", record.clip_id)));
    }
    let mut v = [0.0; CONTEXT_DIM];
    v[0] = (record.latitude - stats.lat_mean) / stats.lat_std;
    v[1] = (record.longitude - stats.lon_mean) / stats.lon_std;
    v[HOUR_OFFSET + record.hour as usize] = 1.0;
    v[DAY_OFFSET + record.day as usize] = 1.0;
    v[WEEK_OFFSET + week as usize] = 1.0;
    Ok(ContextVector(v))
}

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Drops every record farther than `threshold_km` from the centroid of all
/// other records. Fewer than two records are returned unchanged.
pub fn filter_location_outliers(records: &[AnnotationRecord], threshold_km: f64) -> Vec<AnnotationRecord> {
    if records.len() < 2 {
        return records.to_vec();
    }
    let n = records.len() as f64;
    let lat_sum: f64 = records.iter().map(|r| r.latitude).sum();
    let lon_sum: f64 = records.iter().map(|r| r.longitude).sum();
    records
        .iter()
        .filter(|r| {
            let lat = (lat_sum - r.latitude) / (n - 1.0);
            let lon = (lon_sum - r.longitude) / (n - 1.0);
            let keep = haversine_km(r.latitude, r.longitude, lat, lon) <= threshold_km;
            if !keep {
                log::info!("dropping location outlier {}", r.clip_id);
            }
            keep
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBlock {
    Hour,
    Day,
    Week,
}

impl TimeBlock {
    pub fn bins(self) -> usize {
        match self {
            TimeBlock::Hour => HOURS as usize,
            TimeBlock::Day => DAYS as usize,
            TimeBlock::Week => WEEKS as usize,
        }
    }

    pub fn value(self, record: &AnnotationRecord) -> usize {
        match self {
            TimeBlock::Hour => record.hour as usize,
            TimeBlock::Day => record.day as usize,
            TimeBlock::Week => (record.week as usize).min(WEEKS as usize - 1),
        }
    }
}

impl std::str::FromStr for TimeBlock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hour" => Ok(TimeBlock::Hour),
            "day" => Ok(TimeBlock::Day),
            "week" => Ok(TimeBlock::Week),
            other => Err(format!("unknown time block {other:?} (expected hour, day or week)")),
        }
    }
}

/// Record counts per bin of `block`, over all of its bins.
pub fn time_histogram(records: &[AnnotationRecord], block: TimeBlock) -> Vec<usize> {
    let mut counts = vec![0; block.bins()];
    for r in records {
        counts[block.value(r)] += 1;
    }
    counts
}

/// Population variance of a count histogram.
pub fn histogram_variance(counts: &[usize]) -> f64 {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n
}

/// Randomly thins time bins holding more records than the median occupied
/// bin, down to that median. The output keeps the input order.
pub fn rebalance_time(records: &[AnnotationRecord], block: TimeBlock, seed: u64) -> Vec<AnnotationRecord> {
    let mut by_bin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_bin.entry(block.value(r)).or_default().push(i);
    }
    let mut occupied: Vec<usize> = by_bin.values().map(Vec::len).collect();
    if occupied.is_empty() {
        return Vec::new();
    }
    occupied.sort_unstable();
    // lower median
    let target = occupied[(occupied.len() - 1) / 2];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; records.len()];
    for members in by_bin.values_mut() {
        if members.len() > target {
            members.shuffle(&mut rng);
            for &i in &members[target..] {
                keep[i] = false;
            }
        }
    }
    records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::manifest::Split;

    fn record(id: usize, lat: f64, lon: f64, hour: u8, day: u8, week: u8) -> AnnotationRecord {
        AnnotationRecord {
            clip_id: format!("r{id}"),
            path: String::new(),
            labels: [false; 8],
            latitude: lat,
            longitude: lon,
            hour,
            day,
            week,
            split: Split::Train,
        }
    }

    #[test]
    fn layout_constants() {
        assert_eq!(CONTEXT_DIM, 85);
        assert_eq!((HOUR_OFFSET, DAY_OFFSET, WEEK_OFFSET), (2, 26, 33));
    }

    #[test]
    fn single_point_has_unit_std_and_zero_scores() {
        let recs = vec![record(0, 40.0, -73.0, 1, 1, 1), record(1, 40.0, -73.0, 2, 2, 2)];
        let stats = fit_normalizer(&recs).unwrap();
        assert_eq!((stats.lat_std, stats.lon_std), (1.0, 1.0));
        let v = encode_context(&recs[0], &stats).unwrap();
        assert_eq!((v.0[0], v.0[1]), (0.0, 0.0));
    }

    #[test]
    fn two_point_statistics() {
        let recs = vec![record(0, 40.0, -73.0, 0, 0, 0), record(1, 42.0, -73.0, 0, 0, 0)];
        let stats = fit_normalizer(&recs).unwrap();
        assert_eq!((stats.lat_mean, stats.lat_std), (41.0, 1.0));
        assert!(fit_normalizer(&[]).is_err());
    }

    #[test]
    fn origin_one_hots() {
        let stats = NormStats {
            lat_mean: 40.0,
            lat_std: 2.0,
            lon_mean: -73.0,
            lon_std: 3.0,
        };
        let v = encode_context(&record(0, 40.0, -73.0, 0, 0, 0), &stats).unwrap();
        let ones: Vec<usize> = (0..CONTEXT_DIM).filter(|&i| v.0[i] != 0.0).collect();
        assert_eq!(ones, vec![2, 26, 33]);
        assert!(ones.iter().all(|&i| v.0[i] == 1.0));
    }

    #[test]
    fn out_of_range_fields() {
        let stats = NormStats::default();
        assert!(encode_context(&record(0, 0.0, 0.0, 24, 0, 0), &stats).is_err());
        assert!(encode_context(&record(0, 0.0, 0.0, 0, 7, 0), &stats).is_err());
        assert!(encode_context(&record(0, 0.0, 0.0, 0, 0, 53), &stats).is_err());
        let v = encode_context(&record(0, 0.0, 0.0, 0, 0, 52), &stats).unwrap();
        assert_eq!(v.time_fields().2, 51);
    }

    #[test]
    fn identical_points_are_kept() {
        let recs: Vec<_> = (0..5).map(|i| record(i, 40.7, -73.9, 0, 0, 0)).collect();
        assert_eq!(filter_location_outliers(&recs, 20.0), recs);
        assert_eq!(filter_location_outliers(&recs, f64::INFINITY), recs);
    }

    #[test]
    fn haversine_one_degree_of_latitude() {
        let d = haversine_km(0.0, 0.0, 1.0, 0.0);
        assert!((d - 111.195).abs() < 0.01, "{d}");
    }

    #[test]
    fn uniform_histogram_is_untouched() {
        let recs: Vec<_> = (0..48).map(|i| record(i, 0.0, 0.0, (i % 24) as u8, 0, 0)).collect();
        assert_eq!(rebalance_time(&recs, TimeBlock::Hour, 5), recs);
    }

    #[test]
    fn skewed_bins_shrink_to_the_median() {
        let hours = [vec![0u8; 10], vec![1; 2], vec![2; 2]].concat();
        let recs: Vec<_> = hours.iter().enumerate().map(|(i, &h)| record(i, 0.0, 0.0, h, 0, 0)).collect();
        let out = rebalance_time(&recs, TimeBlock::Hour, 9);
        let before = time_histogram(&recs, TimeBlock::Hour);
        let after = time_histogram(&out, TimeBlock::Hour);
        assert_eq!(&after[..3], &[2, 2, 2]);
        assert!(histogram_variance(&after[..3]) < histogram_variance(&before[..3]));
        assert!(histogram_variance(&after) < histogram_variance(&before));
        assert_eq!(out, rebalance_time(&recs, TimeBlock::Hour, 9));
    }
}
