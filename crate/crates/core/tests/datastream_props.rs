use d2s_core::datastream::{read_records, sample_batch, write_records, DataStream, DriftSchedule, StreamConfig, TeacherModel};
use d2s_core::nn::Batch;
use proptest::prelude::*;

fn small_cfg() -> StreamConfig {
    StreamConfig { table_rows: vec![50, 40, 30, 20], seed: 11, ..StreamConfig::default() }
}

fn drifting() -> DriftSchedule {
    DriftSchedule::evenly_spaced(4, 30_000, 0.8, 0.3, 5).unwrap()
}

#[test]
fn same_position_gives_identical_batches() {
    let cfg = small_cfg();
    let a = sample_batch(&cfg, &drifting(), 12_345, 200).unwrap();
    let b = sample_batch(&cfg, &drifting(), 12_345, 200).unwrap();
    assert_eq!(a, b);
}

#[test]
fn chunking_does_not_change_examples() {
    let s = DataStream::new(small_cfg(), drifting()).unwrap();
    let whole = s.sample_batch(9_990, 100);
    let parts = [s.sample_batch(9_990, 37), s.sample_batch(10_027, 63)];
    assert_eq!(whole, Batch::concat(&parts).unwrap());
    let via_iter: Vec<Batch> = s.batches(9_990, 10_090).collect();
    assert_eq!(whole, Batch::concat(&via_iter).unwrap());
}

#[test]
fn zero_batch_is_rejected() {
    assert!(sample_batch(&small_cfg(), &drifting(), 0, 0).is_err());
}

#[test]
fn ids_stay_in_range_and_bags_have_configured_size() {
    let cfg = small_cfg();
    let b = sample_batch(&cfg, &drifting(), 0, 500).unwrap();
    b.validate().unwrap();
    for (f, feat) in b.categorical.iter().enumerate() {
        assert_eq!(feat.len(), 500);
        for i in 0..500 {
            assert_eq!(feat.bag(i).len(), cfg.multiplicity[f]);
            assert!(feat.bag(i).iter().all(|&id| (id as usize) < cfg.table_rows[f]));
        }
    }
}

#[test]
fn teacher_reproduces_anchors_exactly() {
    let sched = drifting();
    let t = TeacherModel::new(&small_cfg(), &sched).unwrap();
    for (j, &at) in sched.anchor_times.iter().enumerate() {
        assert_eq!(t.teacher_at(at), t.anchors()[j]);
    }
    // beyond the last anchor the teacher holds still
    assert_eq!(t.teacher_at(10_000_000), *t.anchors().last().unwrap());
}

#[test]
fn teacher_midpoint_is_elementwise_average() {
    let sched = drifting();
    let t = TeacherModel::new(&small_cfg(), &sched).unwrap();
    let mid = (sched.anchor_times[1] + sched.anchor_times[2]) / 2;
    let got = t.teacher_at(mid).flatten();
    let a = t.anchors()[1].flatten();
    let b = t.anchors()[2].flatten();
    for ((g, x), y) in got.iter().zip(&a).zip(&b) {
        assert!((g - 0.5 * (x + y)).abs() <= 1e-12 * (1.0 + x.abs() + y.abs()));
    }
}

#[test]
fn anchor_spacing_equals_configured_relative_distance() {
    let sched = drifting();
    let t = TeacherModel::new(&small_cfg(), &sched).unwrap();
    for j in 0..sched.anchor_times.len() - 1 {
        let d = t.drift_distance(sched.anchor_times[j], sched.anchor_times[j + 1]);
        let expected = sched.drift_magnitude * t.anchors()[j].norm();
        assert!((d - expected).abs() < 1e-9 * expected, "segment {j}: {d} vs {expected}");
        // rotation keeps the overall scale of the teacher
        assert!((t.anchors()[j + 1].norm() - t.anchors()[j].norm()).abs() < 1e-9 * t.anchors()[j].norm());
    }
}

#[test]
fn stationary_schedule_has_constant_teacher() {
    let sched = DriftSchedule::evenly_spaced(5, 40_000, 0.0, 0.0, 3).unwrap();
    let s = DataStream::new(small_cfg(), sched).unwrap();
    let t0 = s.teacher().teacher_at(0);
    for t in [1, 777, 15_000, 39_999, 40_000, 1_000_000] {
        assert_eq!(s.teacher().teacher_at(t), t0);
        assert_eq!(s.drift_distance(0, t), 0.0);
    }
}

#[test]
fn fast_logit_matches_materialized_teacher() {
    let s = DataStream::new(small_cfg(), drifting()).unwrap();
    let b = s.sample_batch(14_321, 20);
    let probs = s.teacher_probabilities(&b);
    for i in 0..b.len() {
        let t = b.virtual_time + i as u64;
        let params = s.teacher().teacher_at(t);
        let bags: Vec<&[u32]> = b.categorical.iter().map(|c| c.bag(i)).collect();
        let p = d2s_core::nn::sigmoid(params.logit(s.teacher().config(), b.dense.row(i), &bags));
        assert!((p - probs[i]).abs() < 1e-12);
    }
}

#[test]
fn zero_teacher_gives_balanced_labels() {
    let cfg = StreamConfig { label_noise: 0.0, ..small_cfg() };
    let sched = drifting();
    let s = DataStream::new(cfg, sched.clone()).unwrap();
    let zero = s.teacher().anchors().iter().map(|a| a.zeroed()).collect();
    let mut tcfg = s.teacher().config().clone();
    tcfg.logit_offset = 0.0;
    let teacher = TeacherModel::from_anchors(tcfg, sched, zero).unwrap();
    let s = s.with_teacher(teacher);
    let n = 40_000;
    let b = s.sample_batch(0, n);
    let rate = b.positive_rate();
    // 4.5 standard errors of a fair coin
    assert!((rate - 0.5).abs() < 4.5 * (0.25 / n as f64).sqrt(), "rate {rate}");
}

fn mutual_information(labels: &[u8], bins: &[usize], nbins: usize) -> f64 {
    let n = labels.len() as f64;
    let mut joint = vec![[0.0f64; 2]; nbins];
    for (&y, &b) in labels.iter().zip(bins) {
        joint[b][y as usize] += 1.0;
    }
    let py = [0, 1].map(|y| joint.iter().map(|r| r[y]).sum::<f64>() / n);
    let mut mi = 0.0;
    for row in &joint {
        let px = (row[0] + row[1]) / n;
        for y in 0..2 {
            let p = row[y] / n;
            if p > 0.0 {
                mi += p * (p / (px * py[y])).ln();
            }
        }
    }
    mi
}

#[test]
fn half_noise_destroys_feature_label_information() {
    let n = 60_000;
    let noisy = DataStream::new(StreamConfig { label_noise: 0.5, ..small_cfg() }, drifting()).unwrap();
    let clean = DataStream::new(StreamConfig { label_noise: 0.0, ..small_cfg() }, drifting()).unwrap();
    let nbins = 10;
    let mi = |s: &DataStream| {
        let b = s.sample_batch(0, n);
        let probs = s.teacher_probabilities(&b);
        let bins: Vec<usize> = probs.iter().map(|p| ((p * nbins as f64) as usize).min(nbins - 1)).collect();
        mutual_information(&b.labels, &bins, nbins)
    };
    let noisy_mi = mi(&noisy);
    let clean_mi = mi(&clean);
    // plug-in estimator bias is about (bins-1)/(2n) nats
    assert!(noisy_mi < 5.0 * (nbins as f64) / (2.0 * n as f64), "noisy MI {noisy_mi}");
    assert!(clean_mi > 20.0 * noisy_mi, "clean MI {clean_mi} vs noisy {noisy_mi}");
}

#[test]
fn record_file_round_trips() {
    let s = DataStream::new(small_cfg(), drifting()).unwrap();
    let batches: Vec<Batch> = s.batches(100, 300).collect();
    let mut bytes = Vec::new();
    write_records(&mut bytes, &batches).unwrap();
    assert_eq!(&bytes[..8], b"D2SSTRM1");
    assert_eq!(read_records(bytes.as_slice()).unwrap(), batches);
    assert!(read_records(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_records(bad.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_lipschitz_in_time(t in 0u64..40_000, delta in 1u64..5_000) {
        let sched = drifting();
        let teacher = TeacherModel::new(&small_cfg(), &sched).unwrap();
        // steepest segment slope bounds the distance travelled
        let slope = sched
            .anchor_times
            .windows(2)
            .map(|w| teacher.drift_distance(w[0], w[1]) / (w[1] - w[0]) as f64)
            .fold(0.0, f64::max);
        let d = teacher.drift_distance(t, t + delta);
        prop_assert!(d <= slope * delta as f64 * (1.0 + 1e-9) + 1e-12);
        prop_assert_eq!(teacher.drift_distance(t, t), 0.0);
    }

    #[test]
    fn distance_is_symmetric(a in 0u64..40_000, b in 0u64..40_000) {
        let teacher = TeacherModel::new(&small_cfg(), &drifting()).unwrap();
        prop_assert_eq!(teacher.drift_distance(a, b), teacher.drift_distance(b, a));
    }
}
