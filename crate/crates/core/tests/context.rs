mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use urbantag::context::{
    encode_context, filter_location_outliers, fit_normalizer, haversine_km, histogram_variance, rebalance_time,
    time_histogram, TimeBlock, DAY_OFFSET, HOUR_OFFSET, WEEK_OFFSET,
};
use urbantag::{AnnotationRecord, Split, CONTEXT_DIM};

fn record(id: usize, lat: f64, lon: f64, hour: u8, day: u8, week: u8) -> AnnotationRecord {
    AnnotationRecord {
        clip_id: format!("c{id}"),
        path: format!("c{id}.wav"),
        labels: [false; 8],
        latitude: lat,
        longitude: lon,
        hour,
        day,
        week,
        split: Split::Train,
    }
}

fn random_records(n: usize, seed: u64) -> Vec<AnnotationRecord> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            record(
                i,
                40.7 + r.random_range(-0.05..0.05),
                -74.0 + r.random_range(-0.05..0.05),
                r.random_range(0..24),
                r.random_range(0..7),
                r.random_range(0..52),
            )
        })
        .collect()
}

proptest! {
    #[test]
    fn encoding_round_trips(seed in any::<u64>(), n in 2usize..40) {
        let recs = random_records(n, seed);
        let stats = fit_normalizer(&recs).unwrap();
        let mut zlat = Vec::new();
        for r in &recs {
            let v = encode_context(r, &stats).unwrap();
            prop_assert_eq!(v.0.len(), CONTEXT_DIM);
            for (offset, len) in [(HOUR_OFFSET, 24), (DAY_OFFSET, 7), (WEEK_OFFSET, 52)] {
                let block = &v.0[offset..offset + len];
                prop_assert_eq!(block.iter().filter(|&&x| x == 1.0).count(), 1);
                prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
            }
            prop_assert_eq!(v.time_fields(), (r.hour, r.day, r.week));
            let lat = v.0[0] * stats.lat_std + stats.lat_mean;
            let lon = v.0[1] * stats.lon_std + stats.lon_mean;
            prop_assert!((lat - r.latitude).abs() < 1e-9 && (lon - r.longitude).abs() < 1e-9);
            zlat.push(v.0[0]);
        }
        let mean = zlat.iter().sum::<f64>() / n as f64;
        let var = zlat.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rebalancing_never_raises_variance(seed in any::<u64>(), n in 1usize..200, skew in 0usize..24) {
        let mut recs = random_records(n, seed);
        for r in recs.iter_mut().take(n / 2) {
            r.hour = skew as u8;
        }
        let out = rebalance_time(&recs, TimeBlock::Hour, seed);
        let before = histogram_variance(&time_histogram(&recs, TimeBlock::Hour));
        let after = histogram_variance(&time_histogram(&out, TimeBlock::Hour));
        prop_assert!(after <= before + 1e-12);
        // order-preserving subset
        let mut it = recs.iter();
        for r in &out {
            prop_assert!(it.any(|x| x == r));
        }
        prop_assert_eq!(&out, &rebalance_time(&recs, TimeBlock::Hour, seed));
    }
}

#[test]
fn flat_histogram_is_left_alone() {
    let recs: Vec<_> = (0..48).map(|i| record(i, 40.0, -74.0, (i % 24) as u8, 0, 0)).collect();
    assert_eq!(rebalance_time(&recs, TimeBlock::Hour, 3), recs);
}

#[test]
fn skewed_hours_shrink_to_median() {
    let mut recs: Vec<_> = (0..24).map(|i| record(i, 40.0, -74.0, i as u8, 0, 0)).collect();
    recs.extend((24..64).map(|i| record(i, 40.0, -74.0, 8, 0, 0)));
    let out = rebalance_time(&recs, TimeBlock::Hour, 11);
    assert_eq!(time_histogram(&out, TimeBlock::Hour), vec![1; 24]);
}

#[test]
fn planted_far_point_is_dropped() {
    let mut recs = random_records(50, 4);
    // about 30 km north of the cluster
    recs.push(record(999, 40.7 + 30.0 / 111.2, -74.0, 0, 0, 0));
    let kept = filter_location_outliers(&recs, 20.0);
    assert_eq!(kept.len(), 50);
    assert!(kept.iter().all(|r| r.clip_id != "c999"));
    assert_eq!(filter_location_outliers(&recs, 40.0).len(), 51);
}

#[test]
fn one_degree_of_latitude() {
    assert!((haversine_km(40.0, -74.0, 41.0, -74.0) - 111.19).abs() < 0.01);
    assert_eq!(haversine_km(10.0, 20.0, 10.0, 20.0), 0.0);
}

#[test]
fn week_52_folds_into_the_last_slot() {
    let recs = vec![record(0, 40.0, -74.0, 0, 0, 52), record(1, 41.0, -74.0, 0, 0, 0)];
    let stats = fit_normalizer(&recs).unwrap();
    assert_eq!(encode_context(&recs[0], &stats).unwrap().time_fields().2, 51);
    let mut bad = recs[0].clone();
    bad.week = 53;
    assert!(encode_context(&bad, &stats).is_err());
    bad.week = 0;
    bad.hour = 24;
    assert!(encode_context(&bad, &stats).is_err());
}
