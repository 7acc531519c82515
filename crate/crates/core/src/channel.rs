//! Clustered multiuser mmWave channel synthesis.
//!
//! Each AP-MS channel is the normalized sum of the scatterer rays gated in by
//! the scenario, plus an optional LOS term:
//!
//! ```text
//! H = gamma * sum_rays alpha * sqrt(L(r)) * a_AP(theta_AP) a_MS(theta_MS)^H + H_LOS
//! gamma = sqrt(N_AP * N_MS / active_rays)
//! ```
//!
//! with `r` the total reflected path length and `L` the UMi close-in path
//! loss with shadowing.

use std::f64::consts::{LN_10, PI, TAU};
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SimConfig, SPEED_OF_LIGHT};
use crate::error::{Result, SimError};
use crate::linalg::{complex_gaussian, CMatrix, CVector, C64};
use crate::scenario::{Point2, RayIndex, ScattererRay, ScenarioRealization};
use crate::seed::{Stream, TrialSeeds};

/// Parameters of the close-in path-loss model with frequency-slope term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    /// Path-loss exponent.
    pub n: f64,
    /// Shadowing standard deviation, dB.
    pub sigma_db: f64,
    pub b: f64,
    pub c: f64,
    pub f0_ref_hz: f64,
}

impl PathlossParams {
    fn slope(&self, wavelength: f64) -> f64 {
        self.n * (1.0 + self.b * self.c / (wavelength * self.f0_ref_hz))
    }
}

/// ULA response with phase `2 pi * spacing * i * sin(theta)` on element `i`,
/// normalized to unit Euclidean norm.
pub fn steering_vector(n_elem: usize, theta: f64, spacing_wavelengths: f64) -> CVector {
    let mut out = CVector::zeros(n_elem);
    fill_steering(out.as_mut_slice(), theta.sin(), spacing_wavelengths);
    out
}

#[inline]
fn fill_steering(out: &mut [C64], sin_theta: f64, spacing: f64) {
    let amp = 1.0 / (out.len() as f64).sqrt();
    let step = C64::from_polar(1.0, TAU * spacing * sin_theta);
    let mut v = C64::new(amp, 0.0);
    for x in out.iter_mut() {
        *x = v;
        v *= step;
    }
}

/// Path gain in dB (negative for attenuation) at distance `r`.
///
/// `shadow_db` is subtracted, so a positive shadow draw attenuates more.
pub fn path_loss_db(r: f64, pl: &PathlossParams, shadow_db: f64, carrier_hz: f64) -> Result<f64> {
    if r.is_nan() || r <= 0.0 {
        return Err(SimError::InvalidArgument(format!(
            "path length must be positive, got {r}"
        )));
    }
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    Ok(path_loss_db_unchecked(r, pl, shadow_db, wavelength))
}

#[inline]
fn path_loss_db_unchecked(r: f64, pl: &PathlossParams, shadow_db: f64, wavelength: f64) -> f64 {
    -20.0 * (4.0 * PI / wavelength).log10() - 10.0 * pl.slope(wavelength) * r.log10() - shadow_db
}

/// Amplitude factor `sqrt(10^(L/10))` of a dB gain.
#[inline]
pub fn db_to_amplitude(gain_db: f64) -> f64 {
    (gain_db * LN_10 / 20.0).exp()
}

/// UMi LOS probability at 2-D distance `d`.
pub fn los_probability(d: f64) -> f64 {
    let e = (-d / 39.0).exp();
    (20.0 / d).min(1.0) * (1.0 - e) + e
}

/// A device's position and array orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Device {
    pub position: Point2,
    pub boresight: f64,
}

impl Device {
    fn frame(&self) -> Frame {
        let (sb, cb) = self.boresight.sin_cos();
        Frame {
            origin: self.position,
            sb,
            cb,
        }
    }

    /// Sine of the angle toward `target`, measured from the boresight, and the distance.
    fn sin_toward(&self, target: &Point2) -> (f64, f64) {
        self.frame().sin_toward(target)
    }
}

/// Device position with the boresight trigonometry precomputed.
struct Frame {
    origin: Point2,
    sb: f64,
    cb: f64,
}

impl Frame {
    #[inline]
    fn sin_toward(&self, target: &Point2) -> (f64, f64) {
        let dx = target.x - self.origin.x;
        let dy = target.y - self.origin.y;
        let dist = dx.hypot(dy);
        if dist == 0.0 {
            return (0.0, 0.0);
        }
        ((dy * self.cb - dx * self.sb) / dist, dist)
    }
}

/// Source of the random quantities of one channel draw.
pub trait PathDraws {
    /// Complex small-scale gain of the next ray.
    fn gain(&mut self) -> C64;
    /// Shadowing of the next ray, dB.
    fn ray_shadow_db(&mut self, sigma_db: f64) -> f64;
    /// Phase of the LOS component.
    fn los_phase(&mut self) -> f64;
}

/// Draws from a random stream: CN(0,1) gains, Gaussian shadowing, uniform phase.
pub struct RandomDraws<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> PathDraws for RandomDraws<'_, R> {
    fn gain(&mut self) -> C64 {
        complex_gaussian(self.0, 1.0)
    }

    fn ray_shadow_db(&mut self, sigma_db: f64) -> f64 {
        sigma_db * self.0.sample::<f64, _>(StandardNormal)
    }

    fn los_phase(&mut self) -> f64 {
        self.0.random::<f64>() * TAU
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `N_AP x N_MS` channel.
    pub h: CMatrix,
    pub k: usize,
    pub m: usize,
    pub active_ray_count: usize,
    pub los_flag: bool,
}

/// Static parameters shared by every link of a realization.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub ap_antennas: usize,
    pub ms_antennas: usize,
    pub element_spacing: f64,
    pub wavelength: f64,
    pub los: PathlossParams,
    pub nlos: PathlossParams,
}

impl ChannelModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            ap_antennas: cfg.ap_antennas,
            ms_antennas: cfg.ms_antennas,
            element_spacing: cfg.element_spacing,
            wavelength: cfg.wavelength_m(),
            los: cfg.los_pathloss(),
            nlos: cfg.nlos_pathloss(),
        }
    }

    /// Builds one link's channel from its gated rays and LOS state.
    ///
    /// `los_shadow_db` is only used when `los_flag` is set. Distances below
    /// 1 m are clamped to the model's 1 m reference distance.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        &self,
        (k, m): (usize, usize),
        ap: &Device,
        ms: &Device,
        scatterers: &[ScattererRay],
        active: &[usize],
        los_flag: bool,
        los_shadow_db: f64,
        draws: &mut dyn PathDraws,
    ) -> ChannelMatrix {
        let (n_ap, n_ms) = (self.ap_antennas, self.ms_antennas);
        let mut h = CMatrix::zeros(n_ap, n_ms);
        let mut a_ap = vec![C64::new(0.0, 0.0); n_ap];
        let mut a_ms = vec![C64::new(0.0, 0.0); n_ms];

        if !active.is_empty() {
            let gamma = ((n_ap * n_ms) as f64 / active.len() as f64).sqrt();
            let data = h.as_mut_slice();
            let (ap_frame, ms_frame) = (ap.frame(), ms.frame());
            for &idx in active {
                let ray = &scatterers[idx].position;
                let (sin_ap, r_ap) = ap_frame.sin_toward(ray);
                let (sin_ms, r_ms) = ms_frame.sin_toward(ray);
                let alpha = draws.gain();
                let shadow = draws.ray_shadow_db(self.nlos.sigma_db);
                let r = (r_ap + r_ms).max(1.0);
                let amp = gamma * db_to_amplitude(path_loss_db_unchecked(r, &self.nlos, shadow, self.wavelength));
                fill_steering(&mut a_ap, sin_ap, self.element_spacing);
                fill_steering(&mut a_ms, sin_ms, self.element_spacing);
                let c = alpha * amp;
                for v in a_ap.iter_mut() {
                    *v *= c;
                }
                // column-major: column j holds a_AP * conj(a_MS[j])
                for (col, b) in data.chunks_exact_mut(n_ap).zip(&a_ms) {
                    let bc = b.conj();
                    for (x, a) in col.iter_mut().zip(&a_ap) {
                        *x += a * bc;
                    }
                }
            }
        }

        if los_flag {
            let d = ap.position.distance(&ms.position).max(1.0);
            let (sin_ap, _) = ap.sin_toward(&ms.position);
            let (sin_ms, _) = ms.sin_toward(&ap.position);
            let eta = draws.los_phase();
            let amp = ((n_ap * n_ms) as f64).sqrt()
                * db_to_amplitude(path_loss_db_unchecked(d, &self.los, los_shadow_db, self.wavelength));
            let u = steering_vector(n_ap, sin_ap.asin(), self.element_spacing);
            let v = steering_vector(n_ms, sin_ms.asin(), self.element_spacing);
            h += (u * v.adjoint()) * C64::from_polar(amp, eta);
        } else if active.is_empty() {
            log::debug!("link (k={k}, m={m}) has no active rays and no LOS path");
        }

        ChannelMatrix {
            h,
            k,
            m,
            active_ray_count: active.len(),
            los_flag,
        }
    }
}

/// Channels of every (MS, AP) pair of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub num_users: usize,
    pub num_aps: usize,
    links: Vec<ChannelMatrix>,
}

impl ChannelSet {
    pub fn new(num_users: usize, num_aps: usize, links: Vec<ChannelMatrix>) -> Self {
        assert_eq!(links.len(), num_users * num_aps);
        Self {
            num_users,
            num_aps,
            links,
        }
    }

    pub fn get(&self, k: usize, m: usize) -> &ChannelMatrix {
        &self.links[k * self.num_aps + m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChannelMatrix> {
        self.links.iter()
    }
}

/// Ray-index bucket size for gating queries, meters.
const RAY_INDEX_CELL_M: f64 = 10.0;

/// Synthesizes all `K x M` channels of a realization.
///
/// Link `(k, m)` draws from its own stream, so links are built in parallel.
pub fn synthesize_all(cfg: &SimConfig, scenario: &ScenarioRealization, seeds: &TrialSeeds) -> ChannelSet {
    let model = ChannelModel::from_config(cfg);
    let index = RayIndex::new(&scenario.scatterers, RAY_INDEX_CELL_M);
    let (users, aps) = (scenario.num_users(), scenario.num_aps());
    let p = &scenario.placement;
    let links = (0..users * aps)
        .into_par_iter()
        .map(|link| {
            let (k, m) = (link / aps, link % aps);
            let ap = Device {
                position: p.ap_positions[m],
                boresight: p.ap_boresights[m],
            };
            let ms = Device {
                position: p.ms_positions[k],
                boresight: p.ms_boresights[k],
            };
            let active = index.active_rays(&ap.position, &ms.position, &scenario.scatterers, cfg.ellipse_excess_m);
            let mut rng = seeds.rng(Stream::Link(link));
            model.assemble(
                (k, m),
                &ap,
                &ms,
                &scenario.scatterers,
                &active,
                scenario.los_indicator[k][m] == 1,
                scenario.los_shadow_db[k][m],
                &mut RandomDraws(&mut rng),
            )
        })
        .collect();
    ChannelSet::new(users, aps, links)
}

const DUMP_MAGIC: &[u8; 4] = b"CFCH";
const DUMP_VERSION: u32 = 1;

/// Writes the channel tensor as: magic `CFCH`, then little-endian `u32`
/// version, K, M, N_AP, N_MS, then for each `k`, each `m`, the matrix in
/// row-major order as `(re, im)` pairs of little-endian `f64`.
pub fn write_channel_dump<W: Write>(mut w: W, set: &ChannelSet) -> std::io::Result<()> {
    let (n_ap, n_ms) = set.links.first().map(|c| c.h.shape()).unwrap_or((0, 0));
    w.write_all(DUMP_MAGIC)?;
    for v in [
        DUMP_VERSION,
        set.num_users as u32,
        set.num_aps as u32,
        n_ap as u32,
        n_ms as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for c in &set.links {
        for i in 0..n_ap {
            for j in 0..n_ms {
                let z = c.h[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a dump back as `[k][m]` matrices.
pub fn read_channel_dump<R: Read>(mut r: R) -> Result<Vec<Vec<CMatrix>>> {
    let bad = |msg: &str| SimError::InvalidArgument(format!("malformed channel dump: {msg}"));
    let io = |e| SimError::io("<channel dump>", e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != DUMP_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut header = [0u32; 5];
    for v in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(io)?;
        *v = u32::from_le_bytes(b);
    }
    let [version, k, m, n_ap, n_ms] = header.map(|v| v as usize);
    if version != DUMP_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let mut read_f64 = || -> Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        Ok(f64::from_le_bytes(b))
    };
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            let mut h = CMatrix::zeros(n_ap, n_ms);
            for i in 0..n_ap {
                for j in 0..n_ms {
                    let re = read_f64()?;
                    let im = read_f64()?;
                    h[(i, j)] = C64::new(re, im);
                }
            }
            row.push(h);
        }
        out.push(row);
    }
    Ok(out)
}
