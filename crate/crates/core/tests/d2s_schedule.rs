use d2s_core::d2s::{d2s_schedule, divergence_monitor, prune_sources, D2SConfig, Job, JobKind, JobLog};
use d2s_core::eval::MetricsRecord;
use d2s_core::Error;

fn cfg(delta: u64, r: u64, p: u64, periods: u64) -> D2SConfig {
    D2SConfig { delta, r, p, horizon: periods * delta, pretrain_samples: 3 * delta, ..D2SConfig::default() }
}

/// Every configuration of the exhaustive grid, with horizons covering a
/// partial last serving period and several refreshes.
fn grid() -> Vec<D2SConfig> {
    let mut out = Vec::new();
    for delta in 1..=4 {
        for r in 1..=5 {
            for p in 1..=r {
                for periods in [r, r + 1, 2 * r + 1, 3 * r] {
                    out.push(cfg(delta, r, p, periods));
                }
            }
        }
    }
    out
}

fn assert_disjoint_contiguous(jobs: &[&Job], what: &str) {
    for w in jobs.windows(2) {
        assert_eq!(w[0].window.1, w[1].window.0, "{what}: windows not contiguous: {:?} then {:?}", w[0], w[1]);
    }
    for j in jobs {
        assert!(j.window.0 < j.window.1, "{what}: empty window {j:?}");
    }
}

fn generations(log: &JobLog) -> Vec<usize> {
    let mut g: Vec<usize> = log.jobs.iter().filter_map(|j| j.generation).collect();
    g.dedup();
    g
}

#[test]
fn lineage_windows_are_disjoint_and_ordered() {
    for c in grid() {
        let log = d2s_schedule(&c).unwrap();
        let dense: Vec<&Job> = log.lineage(None).collect();
        assert_disjoint_contiguous(&dense, "dense");
        for g in generations(&log) {
            let jobs: Vec<&Job> = log.lineage(Some(g)).collect();
            assert_eq!(jobs[0].kind, JobKind::PruneFinetune);
            assert!(jobs[1..].iter().all(|j| j.kind == JobKind::SparseIncr));
            assert_disjoint_contiguous(&jobs, "sparse");
        }
    }
}

#[test]
fn prune_source_arithmetic() {
    for c in grid() {
        let (d, r, p) = (c.delta as i64, c.r as i64, c.p as i64);
        let log = d2s_schedule(&c).unwrap();
        let prunes: Vec<&Job> = log.prune_jobs().collect();
        let expected = (c.horizon as i64 + r * d - 1) / (r * d);
        assert_eq!(prunes.len() as i64, expected, "{c:?}");
        for (k, j) in prunes.iter().enumerate() {
            let k = k as i64;
            assert_eq!(j.generation, Some(k as usize));
            assert_eq!(j.source_time, (k * r - p) * d);
            assert_eq!(j.window, ((k * r - p) * d, k * r * d));
            assert_eq!(j.output_time, k * r * d);
            assert_eq!(j.source_time + p * d, j.output_time);
        }
        let sources = prune_sources(&c, c.r);
        assert_eq!(sources.len(), prunes.len());
        for ((k, s, deploy), j) in sources.iter().zip(&prunes) {
            assert_eq!(Some(*k), j.generation);
            assert_eq!((*s, *deploy), (j.source_time, j.output_time));
        }
    }
}

#[test]
fn single_pass_accounting() {
    for c in grid() {
        let log = d2s_schedule(&c).unwrap();
        let t = c.horizon as i64;
        let span = |j: &&Job| j.window.1 - j.window.0;
        let dense_serving: i64 = log.lineage(None).filter(|j| j.window.0 >= 0).map(|j| span(&j)).sum();
        assert_eq!(dense_serving, t, "{c:?}");
        let dense_total: i64 = log.lineage(None).map(|j| span(&j)).sum();
        assert_eq!(dense_total, t + (c.pretrain_samples + c.p * c.delta) as i64);
        let first_dense = log.lineage(None).next().unwrap();
        assert_eq!(first_dense.window.0, -((c.pretrain_samples + c.p * c.delta) as i64));

        let mut serving: Vec<&Job> = log.jobs.iter().filter(|j| j.kind == JobKind::SparseIncr).collect();
        serving.sort_by_key(|j| j.window.0);
        assert_eq!(serving.first().unwrap().window.0, 0);
        assert_eq!(serving.last().unwrap().window.1, t);
        assert_disjoint_contiguous(&serving, "serving");
        assert_eq!(serving.iter().map(span).sum::<i64>(), t);

        for g in generations(&log) {
            let jobs: Vec<&Job> = log.lineage(Some(g)).collect();
            let prune = jobs[0];
            assert_eq!(span(&prune), (c.p * c.delta) as i64);
            assert!(jobs[1..].iter().all(|j| j.window.0 >= prune.output_time));
        }
        for j in &log.jobs {
            if j.kind != JobKind::PruneFinetune && j.window.0 >= -((c.p * c.delta) as i64) {
                assert_eq!(span(&j), c.delta as i64, "{j:?}");
            }
        }
    }
}

#[test]
fn horizon_of_one_period_deploys_once() {
    for delta in 1..=4 {
        for r in 1..=5 {
            for p in 1..=r {
                let log = d2s_schedule(&cfg(delta, r, p, r)).unwrap();
                assert_eq!(log.deployments(), vec![0]);
            }
        }
    }
}

#[test]
fn worked_example_delta1_r4_p1() {
    let log = d2s_schedule(&cfg(1, 4, 1, 12)).unwrap();
    let job = log.prune_jobs().find(|j| j.generation == Some(2)).unwrap();
    assert_eq!(job.source_time, 7);
    assert_eq!(job.window, (7, 8));
    assert_eq!(job.output_time, 8);
}

#[test]
fn p_equal_r_runs_three_jobs_at_once() {
    for delta in 1..=4 {
        for r in 1..=5 {
            let c = cfg(delta, r, r, 3 * r);
            let log = d2s_schedule(&c).unwrap();
            let live = |t: i64| log.jobs.iter().filter(|j| j.window.0 <= t && t < j.window.1).count();
            let max = (0..c.horizon as i64).map(live).max().unwrap();
            assert_eq!(max, 3, "delta {delta} r {r}");
            assert_eq!(live(0), 3);
            let last_deploy = *log.deployments().last().unwrap();
            assert_eq!(live(last_deploy), 2);
        }
    }
}

#[test]
fn schedule_rejects_invalid_configs() {
    for bad in [
        D2SConfig { r: 0, ..cfg(1, 1, 1, 4) },
        D2SConfig { p: 0, ..cfg(1, 2, 1, 4) },
        D2SConfig { p: 3, ..cfg(1, 2, 1, 4) },
        D2SConfig { horizon: 7, ..cfg(2, 2, 1, 4) },
        D2SConfig { delta: 0, ..cfg(1, 2, 1, 4) },
    ] {
        assert!(matches!(d2s_schedule(&bad), Err(Error::Config(_))), "{bad:?}");
    }
}

#[test]
fn job_table_lists_every_job() {
    let log = d2s_schedule(&cfg(2, 2, 1, 4)).unwrap();
    let table = log.to_table();
    assert_eq!(table.lines().count(), log.jobs.len() + 1);
    assert!(table.lines().any(|l| l == "prune-finetune,1,2,2,4,4"));
}

fn rec(t: i64, ce: f64) -> MetricsRecord {
    MetricsRecord {
        variant: "x".into(),
        seed: 0,
        virtual_time: t,
        lookahead_ce: ce,
        dense_ce: ce,
        relative_ce: 0.0,
        normalized_ce: 0.0,
        overall_sparsity: 0.0,
        per_layer_sparsity: vec![],
        mask_changes: 0,
    }
}

fn series(ces: &[f64]) -> Vec<MetricsRecord> {
    ces.iter().enumerate().map(|(i, &c)| rec(i as i64, c)).collect()
}

#[test]
fn monitor_never_fires_when_sparse_matches_dense() {
    let dense = series(&[0.5, 0.6, 0.55, 0.52]);
    for n in 0..=dense.len() {
        assert!(!divergence_monitor(&dense[..n], &dense[..n], 0.0).unwrap());
    }
}

#[test]
fn monitor_zero_threshold_fires_on_second_window() {
    let dense = series(&[0.5, 0.5, 0.5]);
    let sparse = series(&[0.51, 0.51, 0.51]);
    assert!(!divergence_monitor(&dense[..1], &sparse[..1], 0.0).unwrap());
    assert!(divergence_monitor(&dense[..2], &sparse[..2], 0.0).unwrap());
}

#[test]
fn monitor_debounces_oscillating_gap() {
    let dense = series(&[0.5; 8]);
    let sparse = series(&[0.6, 0.5, 0.6, 0.5, 0.6, 0.5, 0.6, 0.5]);
    for n in 1..=dense.len() {
        assert!(!divergence_monitor(&dense[..n], &sparse[..n], 0.05).unwrap());
    }
}

#[test]
fn monitor_rejects_misaligned_windows() {
    let dense = series(&[0.5, 0.5]);
    let mut sparse = series(&[0.6, 0.6]);
    assert!(matches!(divergence_monitor(&dense, &sparse[..1], 0.0), Err(Error::Data(_))));
    sparse[1].virtual_time = 5;
    assert!(matches!(divergence_monitor(&dense, &sparse, 0.0), Err(Error::Data(_))));
}
