//! Monte Carlo trials and power sweeps.
//!
//! One trial draws a scenario, synthesizes every channel once and then
//! evaluates every selected (scheme, CSI, beamforming) combination on that
//! same realization. Fully-digital precoders are computed once per
//! (CSI, scheme) and shared by every beamforming architecture. Rates for the
//! whole power grid come from one set of unit-power effective links.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{downlink_power_coefficients, ms_beamformer, uplink_power_coefficient, zf_precoders};
use crate::channel::{synthesize_all, write_channel_dump, ChannelSet};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::linalg::CMatrix;
use crate::link::{downlink_effective, uplink_effective, Direction, EffectiveLink};
use crate::scenario::ScenarioRealization;
use crate::seed::TrialSeeds;
use crate::strategy::{CsiContext, Selection, StrategyRegistry};
use crate::training::EffectiveChannels;

/// Per-user rates of one combination at one power point in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub scheme: String,
    pub csi: String,
    pub bf: String,
    pub direction: Direction,
    pub power_dbw: f64,
    /// Mbit/s, one per MS.
    pub rates_mbps: Vec<f64>,
    pub trial: usize,
}

impl RateRecord {
    pub fn mean_rate(&self) -> f64 {
        if self.rates_mbps.is_empty() {
            0.0
        } else {
            self.rates_mbps.iter().sum::<f64>() / self.rates_mbps.len() as f64
        }
    }
}

/// Hybrid-decomposition diagnostics of one AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridDiagnostic {
    pub scheme: String,
    pub csi: String,
    pub ap: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialOutcome {
    pub trial: usize,
    pub records: Vec<RateRecord>,
    /// One entry per failed combination; nothing is recorded in its place.
    pub failures: Vec<String>,
    pub hybrid: Vec<HybridDiagnostic>,
    pub unserved_users: usize,
}

/// Scenario and channels of a trial, kept when dumping.
pub struct TrialArtifacts {
    pub scenario: ScenarioRealization,
    pub channels: ChannelSet,
}

/// Runs trial `trial_index` of `cfg` over the built-in strategies.
pub fn run_trial(cfg: &SimConfig, trial_index: usize) -> Result<TrialOutcome> {
    cfg.validate()?;
    let selection = StrategyRegistry::builtin().select(cfg)?;
    Ok(run_trial_with(cfg, &selection, trial_index, false).0)
}

/// Runs one trial for the given strategies, optionally returning the
/// scenario and channels.
pub fn run_trial_with(
    cfg: &SimConfig,
    selection: &Selection,
    trial_index: usize,
    keep_artifacts: bool,
) -> (TrialOutcome, Option<TrialArtifacts>) {
    let seeds = TrialSeeds::new(cfg.master_seed, trial_index as u64);
    let scenario = ScenarioRealization::generate(cfg, &seeds);
    let channels = synthesize_all(cfg, &scenario, &seeds);
    let mut outcome = TrialOutcome {
        trial: trial_index,
        ..Default::default()
    };
    if let Err(e) = evaluate(cfg, selection, &seeds, &channels, &mut outcome) {
        outcome.failures.push(format!("trial {trial_index}: {e}"));
    }
    let artifacts = keep_artifacts.then_some(TrialArtifacts { scenario, channels });
    (outcome, artifacts)
}

fn evaluate(
    cfg: &SimConfig,
    selection: &Selection,
    seeds: &TrialSeeds,
    channels: &ChannelSet,
    outcome: &mut TrialOutcome,
) -> Result<()> {
    let combiner = ms_beamformer(cfg.ms_antennas, cfg.streams)?;
    let combiner_gram = combiner.adjoint() * &combiner;
    let perfect = EffectiveChannels::perfect(channels, &combiner);
    let noise_var = cfg.noise_power_w();
    let eta_ul_unit = uplink_power_coefficient(&combiner, 1.0);
    let powers: Vec<(f64, f64)> = cfg
        .dl_power_grid_dbw
        .iter()
        .map(|&p| (p, 10f64.powf(p / 10.0)))
        .collect();
    let ctx = CsiContext {
        cfg,
        seeds,
        perfect: &perfect,
    };

    for csi in &selection.csi {
        let known = match csi.acquire(&ctx) {
            Ok(k) => k,
            Err(e) => {
                outcome
                    .failures
                    .push(format!("trial {}: CSI {}: {e}", outcome.trial, csi.name()));
                continue;
            }
        };
        let norms = known.norms();
        for scheme in &selection.schemes {
            let label = format!("{}/{}", scheme.name(), csi.name());
            let assoc = match scheme.associate(&norms, channels.num_aps, cfg) {
                Ok(a) => a,
                Err(e) => {
                    outcome.failures.push(format!("trial {}: {label}: {e}", outcome.trial));
                    continue;
                }
            };
            outcome.unserved_users += assoc.unserved_users().len();
            let fully_digital: Vec<Vec<CMatrix>> = assoc
                .served
                .iter()
                .enumerate()
                .map(|(m, served)| {
                    let nulled = scheme.nulling_set(&assoc, m, cfg);
                    let est: Vec<&CMatrix> = nulled.iter().map(|&k| known.get(k, m)).collect();
                    let mut q = zf_precoders(&est);
                    if nulled == *served {
                        return q;
                    }
                    served
                        .iter()
                        .map(|k| {
                            let i = nulled
                                .iter()
                                .position(|x| x == k)
                                .expect("nulling set covers served users");
                            std::mem::take(&mut q[i])
                        })
                        .collect()
                })
                .collect();

            for bf in &selection.beamformers {
                let combo = format!("{label}/{}", bf.name());
                let mut applied = Vec::with_capacity(fully_digital.len());
                let mut failed = None;
                for (m, q) in fully_digital.iter().enumerate() {
                    match bf.realize(q.clone(), cfg) {
                        Ok(r) => {
                            if let Some((initial, last)) = r.hybrid_objective {
                                outcome.hybrid.push(HybridDiagnostic {
                                    scheme: scheme.name().to_string(),
                                    csi: csi.name().to_string(),
                                    ap: m,
                                    initial_objective: initial,
                                    final_objective: last,
                                    converged: r.converged,
                                });
                            }
                            applied.push(r.precoders);
                        }
                        Err(e) => {
                            failed = Some(e);
                            break;
                        }
                    }
                }
                if let Some(e) = failed {
                    outcome.failures.push(format!("trial {}: {combo}: {e}", outcome.trial));
                    continue;
                }

                let etas: Vec<Vec<f64>> = applied.iter().map(|q| downlink_power_coefficients(q, 1.0)).collect();
                let dl = downlink_effective(&perfect, &assoc, &applied, &etas, &combiner_gram, noise_var);
                let ul = uplink_effective(&perfect, &assoc, &applied, eta_ul_unit, noise_var);
                for (direction, links) in [(Direction::Downlink, &dl), (Direction::Uplink, &ul)] {
                    match rates_over_grid(links, &powers, cfg.bandwidth_hz) {
                        Ok(per_power) => {
                            for ((power_dbw, _), rates) in powers.iter().zip(per_power) {
                                outcome.records.push(RateRecord {
                                    scheme: scheme.name().to_string(),
                                    csi: csi.name().to_string(),
                                    bf: bf.name().to_string(),
                                    direction,
                                    power_dbw: *power_dbw,
                                    rates_mbps: rates,
                                    trial: outcome.trial,
                                });
                            }
                        }
                        Err(e) => outcome
                            .failures
                            .push(format!("trial {}: {combo}/{direction}: {e}", outcome.trial)),
                    }
                }
            }
        }
    }
    Ok(())
}

fn rates_over_grid(links: &[EffectiveLink], powers: &[(f64, f64)], bandwidth_hz: f64) -> Result<Vec<Vec<f64>>> {
    powers
        .iter()
        .map(|&(_, lin)| links.iter().map(|l| l.rate_at(lin, bandwidth_hz)).collect())
        .collect()
}

/// One aggregated output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    pub csi: String,
    pub bf: String,
    pub direction: Direction,
    pub power_dbw: f64,
    /// Mean over trials of the per-trial average rate per user.
    pub mean_rate_mbps: f64,
    /// Sample standard deviation of the per-trial averages.
    pub std_rate_mbps: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn find(&self, scheme: &str, csi: &str, bf: &str, direction: Direction, power_dbw: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.scheme == scheme && r.csi == csi && r.bf == bf && r.direction == direction && r.power_dbw == power_dbw
        })
    }

    pub fn mean(&self, scheme: &str, csi: &str, bf: &str, direction: Direction, power_dbw: f64) -> Option<f64> {
        self.find(scheme, csi, bf, direction, power_dbw)
            .map(|r| r.mean_rate_mbps)
    }
}

type RowKey = (String, String, String, Direction, u64);

/// Aggregates trial outcomes into sorted rows.
pub fn aggregate(outcomes: &[TrialOutcome], seed: u64) -> SweepResult {
    let mut groups: BTreeMap<RowKey, (f64, Vec<f64>)> = BTreeMap::new();
    let mut failures = Vec::new();
    for o in outcomes {
        failures.extend(o.failures.iter().cloned());
        for r in &o.records {
            // order powers numerically through an order-preserving bit map
            let bits = r.power_dbw.to_bits();
            let ord = if r.power_dbw.is_sign_negative() {
                !bits
            } else {
                bits | (1 << 63)
            };
            groups
                .entry((r.scheme.clone(), r.csi.clone(), r.bf.clone(), r.direction, ord))
                .or_insert_with(|| (r.power_dbw, Vec::new()))
                .1
                .push(r.mean_rate());
        }
    }
    let rows = groups
        .into_iter()
        .map(|((scheme, csi, bf, direction, _), (power_dbw, xs))| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepRow {
                scheme,
                csi,
                bf,
                direction,
                power_dbw,
                mean_rate_mbps: mean,
                std_rate_mbps: std,
                trials: n,
                seed,
            }
        })
        .collect();
    SweepResult { rows, failures }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Write per-trial scenario JSON and channel dumps here.
    pub dump_dir: Option<PathBuf>,
}

/// Runs `cfg.trials` trials with the built-in strategies.
pub fn sweep(cfg: &SimConfig) -> Result<SweepResult> {
    sweep_with(cfg, &StrategyRegistry::builtin(), &SweepOptions::default())
}

/// Runs `cfg.trials` trials in parallel and aggregates them. The result does
/// not depend on the number of worker threads.
pub fn sweep_with(cfg: &SimConfig, registry: &StrategyRegistry, opts: &SweepOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let selection = registry.select(cfg)?;
    if let Some(dir) = &opts.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    }
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let (mut outcome, artifacts) = run_trial_with(cfg, &selection, t, opts.dump_dir.is_some());
            if let (Some(dir), Some(a)) = (&opts.dump_dir, artifacts) {
                if let Err(e) = dump_trial(dir, t, &a) {
                    outcome.failures.push(format!("trial {t}: dump failed: {e}"));
                }
            }
            outcome
        })
        .collect();
    let mut hybrid_unconverged = 0;
    for o in &outcomes {
        hybrid_unconverged += o.hybrid.iter().filter(|h| !h.converged).count();
    }
    if hybrid_unconverged > 0 {
        log::info!("{hybrid_unconverged} hybrid decompositions stopped at the iteration cap");
    }
    Ok(aggregate(&outcomes, cfg.master_seed))
}

fn dump_trial(dir: &std::path::Path, trial: usize, a: &TrialArtifacts) -> Result<()> {
    let json_path = dir.join(format!("scenario_{trial:04}.json"));
    std::fs::write(&json_path, a.scenario.to_json()?).map_err(|e| SimError::io(&json_path, e))?;
    let bin_path = dir.join(format!("channels_{trial:04}.bin"));
    let file = std::fs::File::create(&bin_path).map_err(|e| SimError::io(&bin_path, e))?;
    write_channel_dump(std::io::BufWriter::new(file), &a.channels).map_err(|e| SimError::io(&bin_path, e))?;
    Ok(())
}
