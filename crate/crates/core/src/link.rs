//! Effective downlink/uplink links and achievable rates.
//!
//! After the MS combiner (downlink) or the CPU combining of the per-AP
//! statistics (uplink), user `k` sees
//!
//! ```text
//! x_hat = A_k x_k + sum_{l != k} B_{k,l} x_l + noise,   noise ~ CN(0, N_k)
//! ```
//!
//! All signal matrices are built from the true channels; precoders and
//! combiners come from whatever CSI the APs had.

use serde::{Deserialize, Serialize};

use crate::beamform::AssociationSets;
use crate::error::{Result, SimError};
use crate::linalg::{ln_det_hpd, CMatrix, C64};
use crate::training::EffectiveChannels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "DL")]
    Downlink,
    #[serde(rename = "UL")]
    Uplink,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Downlink, Direction::Uplink];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Downlink => "DL",
            Direction::Uplink => "UL",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-user effective link at unit transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLink {
    /// `A_k`, P x P.
    pub desired: CMatrix,
    /// `B_{k,l}` for every other user `l`, P x P each.
    pub interference: Vec<CMatrix>,
    /// Hermitian PSD noise covariance, P x P.
    pub noise_cov: CMatrix,
}

impl EffectiveLink {
    pub fn streams(&self) -> usize {
        self.desired.nrows()
    }

    /// Rate when every transmitter scales its power by `power_scale`, Mbit/s.
    pub fn rate_at(&self, power_scale: f64, bandwidth_hz: f64) -> Result<f64> {
        let s = C64::new(power_scale.sqrt(), 0.0);
        let scaled = EffectiveLink {
            desired: &self.desired * s,
            interference: self.interference.iter().map(|b| b * s).collect(),
            noise_cov: self.noise_cov.clone(),
        };
        achievable_rate(&scaled, bandwidth_hz)
    }
}

/// `B log2 det(I + A A^H C^-1)` in Mbit/s with `C = sum_l B_l B_l^H + N`.
pub fn achievable_rate(link: &EffectiveLink, bandwidth_hz: f64) -> Result<f64> {
    if link.desired.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(0.0);
    }
    let mut c = link.noise_cov.clone();
    for b in &link.interference {
        c += b * b.adjoint();
    }
    // symmetrize against rounding so Cholesky sees an exactly Hermitian matrix
    let c = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    let total = &c + &link.desired * link.desired.adjoint();
    let total = (&total + total.adjoint()) * C64::new(0.5, 0.0);
    let singular = || SimError::Numerical("interference-plus-noise covariance is singular".into());
    let ln_c = ln_det_hpd(&c).ok_or_else(singular)?;
    let ln_t = ln_det_hpd(&total).ok_or_else(singular)?;
    let bits = ((ln_t - ln_c) / std::f64::consts::LN_2).max(0.0);
    Ok(bandwidth_hz * bits / 1e6)
}

fn accumulate(target: &mut CMatrix, term: CMatrix) {
    *target += term;
}

/// Downlink effective links of every user.
///
/// `precoders[m][i]` and `etas[m][i]` belong to user `assoc.served[m][i]`;
/// `true_eff` holds `S_{k,m} = H_{k,m} L_k` from the true channels, so
/// `L_k^H H_{k,m}^H Q = S_{k,m}^H Q`. The MS noise covariance is
/// `sigma_z^2 L^H L = sigma_z^2 (N_MS / P) I`.
pub fn downlink_effective(
    true_eff: &EffectiveChannels,
    assoc: &AssociationSets,
    precoders: &[Vec<CMatrix>],
    etas: &[Vec<f64>],
    ms_combiner_gram: &CMatrix,
    noise_var: f64,
) -> Vec<EffectiveLink> {
    let k_users = true_eff.num_users;
    let p = ms_combiner_gram.nrows();
    let mut desired = vec![CMatrix::zeros(p, p); k_users];
    let mut interf = vec![vec![CMatrix::zeros(p, p); k_users]; k_users];
    for (m, served) in assoc.served.iter().enumerate() {
        for (i, &l) in served.iter().enumerate() {
            let eta = etas[m][i];
            if eta == 0.0 {
                continue;
            }
            let q = &precoders[m][i] * C64::new(eta.sqrt(), 0.0);
            for k in 0..k_users {
                let term = true_eff.get(k, m).adjoint() * &q;
                if k == l {
                    accumulate(&mut desired[k], term);
                } else {
                    accumulate(&mut interf[k][l], term);
                }
            }
        }
    }
    let noise = ms_combiner_gram * C64::new(noise_var, 0.0);
    desired
        .into_iter()
        .zip(interf)
        .enumerate()
        .map(|(k, (a, row))| EffectiveLink {
            desired: a,
            interference: row
                .into_iter()
                .enumerate()
                .filter(|(l, _)| *l != k)
                .map(|(_, b)| b)
                .collect(),
            noise_cov: noise.clone(),
        })
        .collect()
}

/// Uplink effective links of every user.
///
/// AP `m` in `M(k)` applies `Q_{k,m}^H` to its received samples and the CPU
/// sums the results over `M(k)`. `eta_ul` is the per-user power coefficient
/// (equal for all users).
pub fn uplink_effective(
    true_eff: &EffectiveChannels,
    assoc: &AssociationSets,
    combiners: &[Vec<CMatrix>],
    eta_ul: f64,
    noise_var: f64,
) -> Vec<EffectiveLink> {
    let k_users = true_eff.num_users;
    let p = true_eff.get(0, 0).ncols();
    let amp = C64::new(eta_ul.sqrt(), 0.0);
    (0..k_users)
        .map(|k| {
            let mut desired = CMatrix::zeros(p, p);
            let mut interf = vec![CMatrix::zeros(p, p); k_users];
            let mut noise = CMatrix::zeros(p, p);
            for &m in &assoc.serving[k] {
                let i = assoc.served[m]
                    .binary_search(&k)
                    .expect("association sets are consistent");
                let qh = combiners[m][i].adjoint();
                for (l, acc) in interf.iter_mut().enumerate() {
                    let term = &qh * true_eff.get(l, m) * amp;
                    if l == k {
                        desired += term;
                    } else {
                        *acc += term;
                    }
                }
                noise += &qh * qh.adjoint() * C64::new(noise_var, 0.0);
            }
            EffectiveLink {
                desired,
                interference: interf
                    .into_iter()
                    .enumerate()
                    .filter(|(l, _)| *l != k)
                    .map(|(_, b)| b)
                    .collect(),
                noise_cov: noise,
            }
        })
        .collect()
}
