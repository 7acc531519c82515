//! Interchangeable pieces of the processing chain, registered by name.
//!
//! A simulated combination is one serving scheme, one CSI source and one
//! beamforming architecture. Built-ins are `CF`/`UC`, `PCSI`/`ICSI` and
//! `FD`/`HY`; extra implementations can be registered at runtime and picked
//! from the configuration.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::beamform::{hybrid_decompose, uc_select, AssociationSets};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::linalg::CMatrix;
use crate::seed::{Stream, TrialSeeds};
use crate::training::{generate_pilots, scramble_pilots, EffectiveChannels};

/// Decides which APs serve which MSs.
pub trait ServingScheme: Send + Sync {
    fn name(&self) -> &str;

    /// `norms[k][m]` are the Frobenius norms of the effective channels the
    /// APs know about.
    fn associate(&self, norms: &[Vec<f64>], num_aps: usize, cfg: &SimConfig) -> Result<AssociationSets>;

    /// Users AP `m` zero-forces toward. Must contain `assoc.served[m]`.
    fn nulling_set(&self, assoc: &AssociationSets, m: usize, _cfg: &SimConfig) -> Vec<usize> {
        assoc.served[m].clone()
    }
}

/// Every AP serves every MS.
#[derive(Debug, Default, Clone, Copy)]
pub struct CellFree;

impl ServingScheme for CellFree {
    fn name(&self) -> &str {
        "CF"
    }

    fn associate(&self, norms: &[Vec<f64>], num_aps: usize, _: &SimConfig) -> Result<AssociationSets> {
        Ok(AssociationSets::full(norms.len(), num_aps))
    }
}

/// Each AP serves the `users_per_ap` MSs it sees strongest.
#[derive(Debug, Default, Clone, Copy)]
pub struct UserCentric;

impl ServingScheme for UserCentric {
    fn name(&self) -> &str {
        "UC"
    }

    fn associate(&self, norms: &[Vec<f64>], num_aps: usize, cfg: &SimConfig) -> Result<AssociationSets> {
        uc_select(norms, num_aps, cfg.users_per_ap)
    }

    fn nulling_set(&self, assoc: &AssociationSets, m: usize, cfg: &SimConfig) -> Vec<usize> {
        if cfg.uc_null_all_users {
            (0..assoc.num_users()).collect()
        } else {
            assoc.served[m].clone()
        }
    }
}

/// What a trial hands to a [`CsiSource`].
pub struct CsiContext<'a> {
    pub cfg: &'a SimConfig,
    pub seeds: &'a TrialSeeds,
    /// True effective channels `H L`.
    pub perfect: &'a EffectiveChannels,
}

/// Produces the effective-channel knowledge the APs precode with.
pub trait CsiSource: Send + Sync {
    fn name(&self) -> &str;
    fn acquire(&self, ctx: &CsiContext<'_>) -> Result<EffectiveChannels>;
}

/// Genie-aided exact knowledge of `H L`.
#[derive(Debug, Default, Clone, Copy)]
pub struct PerfectCsi;

impl CsiSource for PerfectCsi {
    fn name(&self) -> &str {
        "PCSI"
    }

    fn acquire(&self, ctx: &CsiContext<'_>) -> Result<EffectiveChannels> {
        Ok(ctx.perfect.clone())
    }
}

/// Least-squares estimates from the uplink training phase.
#[derive(Debug, Default, Clone, Copy)]
pub struct EstimatedCsi;

impl CsiSource for EstimatedCsi {
    fn name(&self) -> &str {
        "ICSI"
    }

    fn acquire(&self, ctx: &CsiContext<'_>) -> Result<EffectiveChannels> {
        let cfg = ctx.cfg;
        let mut pilots = generate_pilots(
            cfg.num_users,
            cfg.streams,
            cfg.pilot_length,
            cfg.pilot_power_w,
            &mut ctx.seeds.rng(Stream::Pilots),
        )?;
        if cfg.pilot_scrambling {
            scramble_pilots(&mut pilots, &mut ctx.seeds.rng(Stream::PilotSigns));
        }
        Ok(EffectiveChannels::estimated(
            ctx.perfect,
            &pilots,
            cfg.pilot_length,
            cfg.ap_antennas,
            cfg.noise_power_w(),
            |m| ctx.seeds.rng(Stream::TrainingNoise(m)),
        ))
    }
}

/// Precoders an AP actually applies, with optional diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedPrecoders {
    pub precoders: Vec<CMatrix>,
    /// Initial and final hybrid objective, when a decomposition ran.
    pub hybrid_objective: Option<(f64, f64)>,
    pub converged: bool,
}

/// Turns one AP's fully-digital precoders into what the hardware applies.
pub trait BeamformingArchitecture: Send + Sync {
    fn name(&self) -> &str;
    fn realize(&self, fully_digital: Vec<CMatrix>, cfg: &SimConfig) -> Result<RealizedPrecoders>;
}

/// One RF chain per antenna: precoders are used as computed.
#[derive(Debug, Default, Clone, Copy)]
pub struct FullyDigital;

impl BeamformingArchitecture for FullyDigital {
    fn name(&self) -> &str {
        "FD"
    }

    fn realize(&self, fully_digital: Vec<CMatrix>, _: &SimConfig) -> Result<RealizedPrecoders> {
        Ok(RealizedPrecoders {
            precoders: fully_digital,
            hybrid_objective: None,
            converged: true,
        })
    }
}

/// `P` RF chains: a shared constant-modulus analog stage times per-user
/// digital stages.
#[derive(Debug, Default, Clone, Copy)]
pub struct Hybrid;

impl BeamformingArchitecture for Hybrid {
    fn name(&self) -> &str {
        "HY"
    }

    fn realize(&self, fully_digital: Vec<CMatrix>, cfg: &SimConfig) -> Result<RealizedPrecoders> {
        if fully_digital.is_empty() {
            return Ok(RealizedPrecoders {
                precoders: fully_digital,
                hybrid_objective: None,
                converged: true,
            });
        }
        let hy = hybrid_decompose(&fully_digital, cfg.hybrid_max_iters, cfg.hybrid_tol)?;
        Ok(RealizedPrecoders {
            precoders: hy.reconstructed(),
            hybrid_objective: Some((hy.objective[0], hy.final_objective())),
            converged: hy.converged,
        })
    }
}

/// Name-keyed collection of strategies. Lookups are case-insensitive.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    schemes: BTreeMap<String, Arc<dyn ServingScheme>>,
    csi: BTreeMap<String, Arc<dyn CsiSource>>,
    beamformers: BTreeMap<String, Arc<dyn BeamformingArchitecture>>,
}

/// The strategies a sweep iterates over, in configuration order.
#[derive(Clone)]
pub struct Selection {
    pub schemes: Vec<Arc<dyn ServingScheme>>,
    pub csi: Vec<Arc<dyn CsiSource>>,
    pub beamformers: Vec<Arc<dyn BeamformingArchitecture>>,
}

impl Selection {
    pub fn combinations(&self) -> usize {
        self.schemes.len() * self.csi.len() * self.beamformers.len()
    }
}

fn key(name: &str) -> String {
    name.to_ascii_uppercase()
}

fn lookup<T: ?Sized>(map: &BTreeMap<String, Arc<T>>, kind: &'static str, name: &str) -> Result<Arc<T>> {
    map.get(&key(name)).cloned().ok_or_else(|| SimError::UnknownStrategy {
        kind,
        name: name.to_string(),
        available: map.keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with every built-in strategy.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_scheme(CellFree);
        r.register_scheme(UserCentric);
        r.register_csi(PerfectCsi);
        r.register_csi(EstimatedCsi);
        r.register_beamformer(FullyDigital);
        r.register_beamformer(Hybrid);
        r
    }

    pub fn register_scheme(&mut self, s: impl ServingScheme + 'static) {
        self.schemes.insert(key(s.name()), Arc::new(s));
    }

    pub fn register_csi(&mut self, s: impl CsiSource + 'static) {
        self.csi.insert(key(s.name()), Arc::new(s));
    }

    pub fn register_beamformer(&mut self, s: impl BeamformingArchitecture + 'static) {
        self.beamformers.insert(key(s.name()), Arc::new(s));
    }

    pub fn scheme(&self, name: &str) -> Result<Arc<dyn ServingScheme>> {
        lookup(&self.schemes, "serving scheme", name)
    }

    pub fn csi(&self, name: &str) -> Result<Arc<dyn CsiSource>> {
        lookup(&self.csi, "CSI", name)
    }

    pub fn beamformer(&self, name: &str) -> Result<Arc<dyn BeamformingArchitecture>> {
        lookup(&self.beamformers, "beamforming", name)
    }

    pub fn scheme_names(&self) -> Vec<String> {
        self.schemes.keys().cloned().collect()
    }

    /// Resolves the strategy names listed in `cfg`.
    pub fn select(&self, cfg: &SimConfig) -> Result<Selection> {
        Ok(Selection {
            schemes: cfg.schemes.iter().map(|n| self.scheme(n)).collect::<Result<_>>()?,
            csi: cfg.csi_modes.iter().map(|n| self.csi(n)).collect::<Result<_>>()?,
            beamformers: cfg
                .beamformers
                .iter()
                .map(|n| self.beamformer(n))
                .collect::<Result<_>>()?,
        })
    }
}
