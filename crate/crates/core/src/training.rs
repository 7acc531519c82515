//! Uplink training: pilot books, the received training matrix and the
//! least-squares estimate of each effective channel `S = H L`.

use rand::seq::index::sample;
use rand::Rng;

use crate::channel::ChannelSet;
use crate::error::{Result, SimError};
use crate::linalg::{complex_gaussian_matrix, CMatrix, C64};

/// Per-user pilot matrices `Phi_k` (P x tau_p) with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub pilots: Vec<CMatrix>,
    /// Total pilot power of each MS, watts.
    pub powers: Vec<f64>,
    /// Hadamard row indices chosen per user.
    pub rows: Vec<Vec<usize>>,
}

/// Multiplies column `j` of every pilot by `signs[k][j]`. Each user's rows
/// stay binary and orthonormal, while pilots of different users lose the
/// exact orthogonality that disjoint Hadamard rows would give them.
pub fn scramble_pilots<R: Rng + ?Sized>(book: &mut PilotBook, rng: &mut R) {
    for phi in &mut book.pilots {
        for j in 0..phi.ncols() {
            if rng.random::<bool>() {
                phi.column_mut(j).neg_mut();
            }
        }
    }
}

impl PilotBook {
    pub fn num_users(&self) -> usize {
        self.pilots.len()
    }
}

/// Entry `(i, j)` of the Sylvester Hadamard matrix of power-of-two order.
#[inline]
fn hadamard_sign(i: usize, j: usize) -> f64 {
    if (i & j).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Pilot matrix made of the given Hadamard rows, scaled by `1/sqrt(tau_p)`.
pub fn pilot_from_rows(rows: &[usize], tau_p: usize) -> CMatrix {
    let scale = 1.0 / (tau_p as f64).sqrt();
    CMatrix::from_fn(rows.len(), tau_p, |r, j| {
        C64::new(scale * hadamard_sign(rows[r], j), 0.0)
    })
}

/// Each user independently draws `P` distinct rows of the order-`tau_p`
/// Hadamard matrix. Pilots of different users may overlap.
pub fn generate_pilots<R: Rng + ?Sized>(
    num_users: usize,
    streams: usize,
    tau_p: usize,
    power_w: f64,
    rng: &mut R,
) -> Result<PilotBook> {
    if !tau_p.is_power_of_two() {
        return Err(SimError::Config(format!("pilot length {tau_p} is not a power of two")));
    }
    if streams > tau_p {
        return Err(SimError::Config(format!(
            "{streams} pilot rows requested from order {tau_p}"
        )));
    }
    let rows: Vec<Vec<usize>> = (0..num_users).map(|_| sample(rng, tau_p, streams).into_vec()).collect();
    Ok(PilotBook {
        pilots: rows.iter().map(|r| pilot_from_rows(r, tau_p)).collect(),
        powers: vec![power_w; num_users],
        rows,
    })
}

/// `Y_m = sum_k sqrt(p_k) S_{k,m} Phi_k + W_m`, with `S_{k,m} = H_{k,m} L_k`
/// given per user and `W_m` i.i.d. CN(0, noise_var).
pub fn training_rx<R: Rng + ?Sized>(
    effective: &[&CMatrix],
    pilots: &PilotBook,
    noise_var: f64,
    rng: &mut R,
) -> CMatrix {
    let n_ap = effective.first().map(|s| s.nrows());
    let tau_p = pilots.pilots.first().map(|p| p.ncols()).unwrap_or(0);
    let rows = n_ap.unwrap_or(0);
    let mut y = if noise_var > 0.0 {
        complex_gaussian_matrix(rng, rows, tau_p, noise_var)
    } else {
        CMatrix::zeros(rows, tau_p)
    };
    for ((s, phi), &p) in effective.iter().zip(&pilots.pilots).zip(&pilots.powers) {
        y += (*s * phi) * C64::new(p.sqrt(), 0.0);
    }
    y
}

/// Same as [`training_rx`] for an AP with an explicit antenna count, so the
/// empty-user case still has the right shape.
pub fn training_rx_sized<R: Rng + ?Sized>(
    n_ap: usize,
    effective: &[&CMatrix],
    pilots: &PilotBook,
    tau_p: usize,
    noise_var: f64,
    rng: &mut R,
) -> CMatrix {
    if effective.is_empty() {
        return complex_gaussian_matrix(rng, n_ap, tau_p, noise_var);
    }
    training_rx(effective, pilots, noise_var, rng)
}

/// `S_hat_{k,m} = Y_m Phi_k^H / sqrt(p_k)`.
pub fn estimate_effective(y: &CMatrix, pilots: &PilotBook, k: usize) -> CMatrix {
    (y * pilots.pilots[k].adjoint()) * C64::new(1.0 / pilots.powers[k].sqrt(), 0.0)
}

/// Exact effective channel `H L`.
pub fn perfect_csi_effective(h: &CMatrix, ms_beamformer: &CMatrix) -> CMatrix {
    h * ms_beamformer
}

/// Effective channels of all links, `[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    pub num_users: usize,
    pub num_aps: usize,
    data: Vec<CMatrix>,
}

impl EffectiveChannels {
    pub fn from_fn(num_users: usize, num_aps: usize, mut f: impl FnMut(usize, usize) -> CMatrix) -> Self {
        let mut data = Vec::with_capacity(num_users * num_aps);
        for k in 0..num_users {
            for m in 0..num_aps {
                data.push(f(k, m));
            }
        }
        Self {
            num_users,
            num_aps,
            data,
        }
    }

    pub fn get(&self, k: usize, m: usize) -> &CMatrix {
        &self.data[k * self.num_aps + m]
    }

    pub fn perfect(channels: &ChannelSet, ms_beamformer: &CMatrix) -> Self {
        Self::from_fn(channels.num_users, channels.num_aps, |k, m| {
            perfect_csi_effective(&channels.get(k, m).h, ms_beamformer)
        })
    }

    /// Runs the training phase at every AP and returns all estimates.
    ///
    /// `noise_rng(m)` supplies AP `m`'s noise stream.
    pub fn estimated<R: Rng>(
        perfect: &EffectiveChannels,
        pilots: &PilotBook,
        tau_p: usize,
        n_ap: usize,
        noise_var: f64,
        mut noise_rng: impl FnMut(usize) -> R,
    ) -> Self {
        let mut per_ap: Vec<Vec<CMatrix>> = Vec::with_capacity(perfect.num_aps);
        for m in 0..perfect.num_aps {
            let s: Vec<&CMatrix> = (0..perfect.num_users).map(|k| perfect.get(k, m)).collect();
            let y = training_rx_sized(n_ap, &s, pilots, tau_p, noise_var, &mut noise_rng(m));
            per_ap.push(
                (0..perfect.num_users)
                    .map(|k| estimate_effective(&y, pilots, k))
                    .collect(),
            );
        }
        Self::from_fn(perfect.num_users, perfect.num_aps, |k, m| per_ap[m][k].clone())
    }

    /// Frobenius norms `[k][m]`.
    pub fn norms(&self) -> Vec<Vec<f64>> {
        (0..self.num_users)
            .map(|k| (0..self.num_aps).map(|m| self.get(k, m).norm()).collect())
            .collect()
    }
}
