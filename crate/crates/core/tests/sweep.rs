//! End-to-end properties of trials and sweeps on the desk preset.

use std::time::{Duration, Instant};

use cellfree::beamform::AssociationSets;
use cellfree::harness::{sweep_with, SweepOptions};
use cellfree::link::Direction;
use cellfree::strategy::ServingScheme;
use cellfree::{run_trial, sweep, Preset, SimConfig, StrategyRegistry};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn desk() -> SimConfig {
    SimConfig {
        trials: 3,
        dl_power_grid_dbw: vec![-10.0, 0.0, 30.0],
        ..SimConfig::preset(Preset::Desk)
    }
}

#[test]
fn same_trial_twice_gives_identical_records() {
    let cfg = desk();
    let a = run_trial(&cfg, 2).unwrap();
    let b = run_trial(&cfg, 2).unwrap();
    assert_eq!(a.records, b.records);
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    assert_ne!(a.records, run_trial(&cfg, 3).unwrap().records);
}

#[test]
fn sweep_does_not_depend_on_thread_count() {
    let cfg = desk();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sweep(&cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
}

#[test]
fn row_count_is_grid_times_combinations() {
    let cfg = SimConfig {
        trials: 2,
        dl_power_grid_dbw: vec![-10.0, 0.0],
        ..SimConfig::preset(Preset::Desk)
    };
    let res = sweep(&cfg).unwrap();
    // 2 schemes x 2 CSI x 2 beamformers x 2 directions
    assert_eq!(res.rows.len(), 2 * 16);
    assert!(res.failures.is_empty());
    for r in &res.rows {
        assert_eq!(r.trials, 2);
        assert_eq!(r.seed, cfg.master_seed);
        assert!(r.mean_rate_mbps.is_finite() && r.mean_rate_mbps >= 0.0);
        assert!(r.std_rate_mbps.is_finite() && r.std_rate_mbps >= 0.0);
    }
}

#[test]
fn serving_everyone_makes_user_centric_equal_cell_free() {
    let base = desk();
    let cfg = SimConfig {
        users_per_ap: base.num_users,
        ..base
    };
    let res = sweep(&cfg).unwrap();
    let (cf, uc): (Vec<_>, Vec<_>) = res.rows.iter().partition(|r| r.scheme == "CF");
    assert_eq!(cf.len(), uc.len());
    for (a, b) in cf.iter().zip(&uc) {
        assert_eq!(
            (&a.csi, &a.bf, a.direction, a.power_dbw),
            (&b.csi, &b.bf, b.direction, b.power_dbw)
        );
        let scale = a.mean_rate_mbps.abs().max(1.0);
        assert!(
            (a.mean_rate_mbps - b.mean_rate_mbps).abs() <= 1e-9 * scale,
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn estimated_csi_approaches_perfect_csi_with_strong_uncontaminated_pilots() {
    // one user cannot be contaminated, so only training noise separates the two
    let cfg = SimConfig {
        num_users: 1,
        users_per_ap: 1,
        pilot_power_w: 1e9,
        trials: 2,
        dl_power_grid_dbw: vec![0.0],
        beamformers: vec!["FD".into()],
        ..SimConfig::preset(Preset::Desk)
    };
    let res = sweep(&cfg).unwrap();
    for scheme in ["CF", "UC"] {
        for d in Direction::ALL {
            let p = res.mean(scheme, "PCSI", "FD", d, 0.0).unwrap();
            let i = res.mean(scheme, "ICSI", "FD", d, 0.0).unwrap();
            assert!((p - i).abs() <= 1e-3 * p, "{scheme} {d}: PCSI {p} vs ICSI {i}");
        }
    }
}

#[test]
fn icsi_rates_saturate_and_pcsi_cell_free_keeps_growing() {
    let res = sweep(&desk()).unwrap();
    let ratio = |s: &str, c: &str, b: &str| {
        res.mean(s, c, b, Direction::Downlink, 30.0).unwrap() / res.mean(s, c, b, Direction::Downlink, 0.0).unwrap()
    };
    assert!(ratio("CF", "PCSI", "FD") > 1.5);
    for s in ["CF", "UC"] {
        for b in ["FD", "HY"] {
            assert!(ratio(s, "ICSI", b) < 1.5, "{s}/{b}");
        }
    }
}

#[test]
fn standard_error_scales_with_inverse_root_of_trials() {
    // bootstrap the per-trial mean rate of one combination from a pool of trials
    let cfg = SimConfig { trials: 1, ..desk() };
    let pool: Vec<f64> = (0..48)
        .map(|t| {
            let o = run_trial(&cfg, t).unwrap();
            o.records
                .iter()
                .find(|r| r.scheme == "UC" && r.csi == "ICSI" && r.bf == "FD" && r.power_dbw == 0.0)
                .unwrap()
                .mean_rate()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut se = |n: usize| {
        let means: Vec<f64> = (0..4000)
            .map(|_| (0..n).map(|_| *pool.choose(&mut rng).unwrap()).sum::<f64>() / n as f64)
            .collect();
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
    };
    let (s8, s16, s32) = (se(8), se(16), se(32));
    // doubling the trials divides the standard error by sqrt(2), quadrupling halves it
    assert!((s16 / s8 - 0.5f64.sqrt()).abs() < 0.05, "{}", s16 / s8);
    assert!((s32 / s8 - 0.5).abs() < 0.05, "{}", s32 / s8);
}

#[test]
fn full_size_trial_fits_the_time_budget() {
    let cfg = SimConfig::preset(Preset::Paper);
    let t = Instant::now();
    let o = run_trial(&cfg, 0).unwrap();
    let elapsed = t.elapsed();
    assert!(o.failures.is_empty(), "{:?}", o.failures);
    // 8 combinations x 2 directions x 13 powers
    assert_eq!(o.records.len(), 208);
    assert!(elapsed < Duration::from_secs(300), "{elapsed:?}");
}

/// Serves each MS from its single strongest AP.
struct NearestAp;

impl ServingScheme for NearestAp {
    fn name(&self) -> &str {
        "NEAREST"
    }

    fn associate(&self, norms: &[Vec<f64>], num_aps: usize, _: &SimConfig) -> cellfree::Result<AssociationSets> {
        let mut served = vec![Vec::new(); num_aps];
        for (k, row) in norms.iter().enumerate() {
            let best = (0..num_aps).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            served[best].push(k);
        }
        Ok(AssociationSets::from_served(norms.len(), served))
    }
}

#[test]
fn registered_scheme_runs_through_the_sweep() {
    let mut registry = StrategyRegistry::builtin();
    registry.register_scheme(NearestAp);
    let cfg = SimConfig {
        schemes: vec!["nearest".into(), "CF".into()],
        ..desk()
    };
    let res = sweep_with(&cfg, &registry, &SweepOptions::default()).unwrap();
    assert!(res.rows.iter().any(|r| r.scheme == "NEAREST"));
    assert!(res.failures.is_empty(), "{:?}", res.failures);

    let unknown = SimConfig {
        schemes: vec!["nope".into()],
        ..desk()
    };
    let err = sweep(&unknown).unwrap_err().to_string();
    assert!(err.contains("nope") && err.contains("CF"), "{err}");
}

#[test]
fn user_centric_nulling_toward_everyone_removes_pcsi_saturation() {
    let ratio = |cfg: &SimConfig| {
        let res = sweep(cfg).unwrap();
        let at = |p| res.mean("UC", "PCSI", "FD", Direction::Downlink, p).unwrap();
        at(30.0) / at(0.0)
    };
    let served_only = desk();
    let everyone = SimConfig {
        uc_null_all_users: true,
        ..desk()
    };
    assert!(ratio(&served_only) < 1.5);
    assert!(ratio(&everyone) > 1.5);

    // with every MS served the two scopes coincide
    let full = SimConfig {
        users_per_ap: 4,
        ..desk()
    };
    let a = sweep(&full).unwrap();
    let b = sweep(&SimConfig {
        uc_null_all_users: true,
        ..full
    })
    .unwrap();
    assert_eq!(a, b);
}
