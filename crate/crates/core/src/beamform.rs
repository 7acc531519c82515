//! MS combiner, AP association, zero-forcing precoders, hybrid
//! analog/digital decomposition and power coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::linalg::{gram_pinv_right, pinv, power, CMatrix, C64, GRAM_RCOND};

/// The 0-1 MS beamformer `I_P (x) 1_{N_MS/P}`: antennas are split in `P`
/// contiguous groups and each group is summed into one stream.
pub fn ms_beamformer(ms_antennas: usize, streams: usize) -> Result<CMatrix> {
    if streams == 0 || !ms_antennas.is_multiple_of(streams) {
        return Err(SimError::Config(format!(
            "streams ({streams}) must divide ms_antennas ({ms_antennas})"
        )));
    }
    let group = ms_antennas / streams;
    Ok(CMatrix::from_fn(ms_antennas, streams, |r, c| {
        if r / group == c {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// Which APs serve which MSs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationSets {
    /// `served[m]`: MSs served by AP m, ascending.
    pub served: Vec<Vec<usize>>,
    /// `serving[k]`: APs serving MS k, ascending.
    pub serving: Vec<Vec<usize>>,
}

impl AssociationSets {
    /// Every AP serves every MS.
    pub fn full(num_users: usize, num_aps: usize) -> Self {
        Self::from_served(num_users, vec![(0..num_users).collect(); num_aps])
    }

    /// Builds the per-MS view from the per-AP sets.
    pub fn from_served(num_users: usize, mut served: Vec<Vec<usize>>) -> Self {
        let mut serving = vec![Vec::new(); num_users];
        for (m, set) in served.iter_mut().enumerate() {
            set.sort_unstable();
            for &k in set.iter() {
                serving[k].push(m);
            }
        }
        Self { served, serving }
    }

    pub fn num_aps(&self) -> usize {
        self.served.len()
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn unserved_users(&self) -> Vec<usize> {
        (0..self.num_users()).filter(|&k| self.serving[k].is_empty()).collect()
    }
}

/// Each AP keeps the `n_uc` MSs with the largest channel norms; `norms[k][m]`.
/// Ties go to the smaller MS index.
pub fn uc_select(norms: &[Vec<f64>], num_aps: usize, n_uc: usize) -> Result<AssociationSets> {
    let num_users = norms.len();
    if n_uc > num_users {
        return Err(SimError::Config(format!(
            "cannot serve {n_uc} users per AP out of {num_users}"
        )));
    }
    let served = (0..num_aps)
        .map(|m| {
            let mut order: Vec<usize> = (0..num_users).collect();
            order.sort_by(|&a, &b| norms[b][m].total_cmp(&norms[a][m]).then(a.cmp(&b)));
            order.truncate(n_uc);
            order
        })
        .collect();
    let sets = AssociationSets::from_served(num_users, served);
    for k in sets.unserved_users() {
        log::debug!("MS {k} is not selected by any AP");
    }
    Ok(sets)
}

/// Zero-forcing precoders for the users whose effective channels are given.
///
/// With `G = [S_1 ... S_n]` the precoders are the column blocks of
/// `G (G^H G)^+`. When `G` has full column rank, `S_j^H Q_k = delta_jk I`;
/// otherwise the result is the minimum-norm least-squares solution of
/// `G^H Q = I`.
pub fn zf_precoders(effective: &[&CMatrix]) -> Vec<CMatrix> {
    let Some(first) = effective.first() else {
        return Vec::new();
    };
    let (n_ap, p) = first.shape();
    let mut g = CMatrix::zeros(n_ap, p * effective.len());
    for (i, s) in effective.iter().enumerate() {
        g.columns_mut(i * p, p).copy_from(s);
    }
    if g.iter().all(|z| z.norm_sqr() == 0.0) {
        log::debug!("all-zero channel stack, zero precoders");
    }
    let q = gram_pinv_right(&g, GRAM_RCOND);
    (0..effective.len()).map(|i| q.columns(i * p, p).into_owned()).collect()
}

/// Output of [`hybrid_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDecomposition {
    /// Analog matrix `F` (N_AP x P), every entry of modulus `1/sqrt(N_AP)`.
    pub analog: CMatrix,
    /// Digital matrices `D_k` (P x P), one per input precoder.
    pub digital: Vec<CMatrix>,
    /// Objective `sum_k ||Q_k - F D_k||_F^2` after every digital update.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl HybridDecomposition {
    /// Reconstructed precoders `F D_k`.
    pub fn reconstructed(&self) -> Vec<CMatrix> {
        self.digital.iter().map(|d| &self.analog * d).collect()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("at least one objective value")
    }
}

fn unit_phase(z: C64, modulus: f64) -> C64 {
    if z.norm_sqr() == 0.0 {
        C64::new(modulus, 0.0)
    } else {
        z * (modulus / z.norm())
    }
}

fn objective(qs: &[CMatrix], f: &CMatrix, ds: &[CMatrix]) -> f64 {
    qs.iter().zip(ds).map(|(q, d)| power(&(q - f * d))).sum()
}

/// Factors per-user precoders into one shared constant-modulus analog matrix
/// and per-user digital matrices by block coordinate descent.
///
/// The digital blocks are the least-squares fit `pinv(F) Q_k` given `F`; the
/// analog block is swept entry by entry, each entry set to the optimal phase
/// with the others fixed. Both updates are exact block minimizers, so the
/// objective never increases. `F` starts from the phases of the first
/// precoder; iteration stops when the relative decrease drops below `tol` or
/// after `max_iters` sweeps.
pub fn hybrid_decompose(qs: &[CMatrix], max_iters: usize, tol: f64) -> Result<HybridDecomposition> {
    let first = qs
        .first()
        .ok_or_else(|| SimError::InvalidArgument("hybrid decomposition needs at least one precoder".into()))?;
    let (n_ap, p) = first.shape();
    let modulus = 1.0 / (n_ap as f64).sqrt();
    let scale: f64 = qs.iter().map(power).sum();

    let mut f = first.map(|z| unit_phase(z, modulus));
    let digital_step = |f: &CMatrix| -> Vec<CMatrix> {
        let fp = pinv(f, 1e-12);
        qs.iter().map(|q| &fp * q).collect()
    };
    let mut ds = digital_step(&f);
    let mut history = vec![objective(qs, &f, &ds)];
    let mut converged = false;

    // stacked [Q_1 .. Q_n] and [D_1 .. D_n]
    let width = p * qs.len();
    let mut q_stack = CMatrix::zeros(n_ap, width);
    for (i, q) in qs.iter().enumerate() {
        q_stack.columns_mut(i * p, p).copy_from(q);
    }

    for _ in 0..max_iters {
        let prev = *history.last().unwrap();
        if prev <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        let mut d_stack = CMatrix::zeros(p, width);
        for (i, d) in ds.iter().enumerate() {
            d_stack.columns_mut(i * p, p).copy_from(d);
        }
        for row in 0..n_ap {
            let mut resid = q_stack.row(row) - f.row(row) * &d_stack;
            for col in 0..p {
                let d_row = d_stack.row(col);
                resid += d_row * f[(row, col)];
                let corr = (&resid * d_row.adjoint())[(0, 0)];
                if corr.norm_sqr() > 0.0 {
                    f[(row, col)] = unit_phase(corr, modulus);
                }
                resid -= d_row * f[(row, col)];
            }
        }
        ds = digital_step(&f);
        let j = objective(qs, &f, &ds);
        history.push(j);
        if prev - j <= tol * prev {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("hybrid decomposition hit {max_iters} iterations without converging");
    }
    Ok(HybridDecomposition {
        analog: f,
        digital: ds,
        objective: history,
        converged,
    })
}

/// Downlink power coefficients of one AP: `P_T / (|K(m)| tr(Q Q^H))` for each
/// served user. A zero-trace precoder gets coefficient 0.
pub fn downlink_power_coefficients(precoders: &[CMatrix], p_t: f64) -> Vec<f64> {
    let n = precoders.len() as f64;
    precoders
        .iter()
        .map(|q| {
            let tr = power(q);
            if tr > 0.0 {
                p_t / (n * tr)
            } else {
                log::debug!("zero-trace precoder dropped");
                0.0
            }
        })
        .collect()
}

/// Uplink power coefficient `P_UL / tr(L^H L)`.
pub fn uplink_power_coefficient(ms_beamformer: &CMatrix, p_ul: f64) -> f64 {
    p_ul / power(ms_beamformer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_gaussian_matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ms_beamformer_structure() {
        let l = ms_beamformer(8, 2).unwrap();
        for r in 0..8 {
            let expected = if r < 4 { (1.0, 0.0) } else { (0.0, 1.0) };
            assert_eq!((l[(r, 0)].re, l[(r, 1)].re), expected);
        }
        assert_eq!(l.adjoint() * &l, CMatrix::identity(2, 2) * C64::new(4.0, 0.0));
        assert_eq!(ms_beamformer(8, 8).unwrap(), CMatrix::identity(8, 8));
        assert!(ms_beamformer(8, 3).is_err());
    }

    #[test]
    fn uc_select_top_norms() {
        let norms = vec![vec![5.0], vec![3.0], vec![1.0]];
        let sets = uc_select(&norms, 1, 2).unwrap();
        assert_eq!(sets.served[0], vec![0, 1]);
        assert_eq!(sets.serving, vec![vec![0], vec![0], vec![]]);
        assert_eq!(sets.unserved_users(), vec![2]);
    }

    #[test]
    fn uc_select_tie_breaks_by_index() {
        // all orderings of three equal norms with a distinct fourth
        for big in 0..4 {
            let norms: Vec<Vec<f64>> = (0..4).map(|k| vec![if k == big { 2.0 } else { 1.0 }]).collect();
            let one = uc_select(&norms, 1, 1).unwrap();
            assert_eq!(one.served[0], vec![big]);
            let two = uc_select(&norms, 1, 2).unwrap();
            let lowest_other = (0..4).find(|&k| k != big).unwrap();
            let mut expected = vec![big, lowest_other];
            expected.sort();
            assert_eq!(two.served[0], expected);
        }
        let equal = vec![vec![1.0]; 3];
        assert_eq!(uc_select(&equal, 1, 1).unwrap().served[0], vec![0]);
    }

    #[test]
    fn uc_select_all_equals_full() {
        let mut r = rng(1);
        let norms: Vec<Vec<f64>> = (0..5).map(|_| (0..7).map(|_| r.random()).collect()).collect();
        assert_eq!(uc_select(&norms, 7, 5).unwrap(), AssociationSets::full(5, 7));
        assert!(uc_select(&norms, 7, 6).is_err());
    }

    #[test]
    fn zf_single_user_identity() {
        let s = complex_gaussian_matrix(&mut rng(2), 16, 2, 1.0);
        let q = zf_precoders(&[&s]);
        assert!((s.adjoint() * &q[0] - CMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn zf_nulls_cross_users_when_underloaded() {
        for seed in 0..20 {
            let s: Vec<CMatrix> = (0..5)
                .map(|i| complex_gaussian_matrix(&mut rng(seed * 10 + i), 16, 2, 1e-9))
                .collect();
            let refs: Vec<&CMatrix> = s.iter().collect();
            let q = zf_precoders(&refs);
            for (j, sj) in s.iter().enumerate() {
                for (k, qk) in q.iter().enumerate() {
                    let prod = sj.adjoint() * qk;
                    if j == k {
                        assert!((prod - CMatrix::identity(2, 2)).norm() < 1e-9);
                    } else {
                        assert!(prod.norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn zf_overloaded_is_least_squares() {
        // 4 antennas, 3 users x 2 streams: G is 4 x 6
        let s: Vec<CMatrix> = (0..3)
            .map(|i| complex_gaussian_matrix(&mut rng(40 + i), 4, 2, 1.0))
            .collect();
        let refs: Vec<&CMatrix> = s.iter().collect();
        let q_blocks = zf_precoders(&refs);
        let mut g = CMatrix::zeros(4, 6);
        let mut q = CMatrix::zeros(4, 6);
        for i in 0..3 {
            g.columns_mut(2 * i, 2).copy_from(&s[i]);
            q.columns_mut(2 * i, 2).copy_from(&q_blocks[i]);
        }
        let residual = |x: &CMatrix| (g.adjoint() * x - CMatrix::identity(6, 6)).norm();
        assert!(residual(&q) > 0.1);
        // independent route: G has full row rank, so pinv(G^H) = (G G^H)^-1 G
        let gram = &g * g.adjoint();
        let alt = gram.try_inverse().unwrap() * &g;
        assert!((&alt - &q).norm() < 1e-9 * alt.norm());
        // no perturbation improves the residual
        let base = residual(&q);
        let mut r = rng(50);
        for _ in 0..200 {
            let dq = complex_gaussian_matrix(&mut r, 4, 6, 1e-4);
            assert!(residual(&(&q + dq)) >= base - 1e-12);
        }
    }

    #[test]
    fn zf_of_zero_stack_is_zero() {
        let z = CMatrix::zeros(16, 2);
        let q = zf_precoders(&[&z, &z]);
        assert!(q.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn hybrid_recovers_exact_factorization() {
        let n_ap = 16;
        let mut r = rng(3);
        let f0 = CMatrix::from_fn(n_ap, 2, |_, _| {
            C64::from_polar(0.25, r.random::<f64>() * std::f64::consts::TAU)
        });
        let d1 = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(0.7, 0.2),
            C64::new(-0.3, 1.1),
        ]));
        let d2 = complex_gaussian_matrix(&mut r, 2, 2, 1.0);
        let qs = vec![&f0 * &d1, &f0 * &d2];
        let hy = hybrid_decompose(&qs, 100, 1e-4).unwrap();
        assert!(hy.final_objective() < 1e-10);
        assert!(hy.analog.iter().all(|z| (z.norm() - 0.25).abs() < 1e-14));
        for col in 0..2 {
            let ratio = hy.analog[(0, col)] / f0[(0, col)];
            for row in 0..n_ap {
                assert!((hy.analog[(row, col)] / f0[(row, col)] - ratio).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn hybrid_scalar_is_polar_decomposition() {
        let q = CMatrix::from_element(1, 1, C64::new(-0.6, 0.8) * 3.0);
        let hy = hybrid_decompose(std::slice::from_ref(&q), 10, 1e-4).unwrap();
        assert!((hy.analog[(0, 0)] - C64::new(-0.6, 0.8)).norm() < 1e-14);
        assert!((hy.digital[0][(0, 0)] - C64::new(3.0, 0.0)).norm() < 1e-12);
        assert!(hy.final_objective() < 1e-20);
    }

    #[test]
    fn hybrid_objective_non_increasing() {
        for trial in 0..100 {
            let mut r = rng(1000 + trial);
            let n = 1 + trial as usize % 5;
            let qs: Vec<CMatrix> = (0..n).map(|_| complex_gaussian_matrix(&mut r, 16, 2, 1.0)).collect();
            let hy = hybrid_decompose(&qs, 100, 1e-4).unwrap();
            for w in hy.objective.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "trial {trial}: {:?}", hy.objective);
            }
            assert!(hy.final_objective() <= hy.objective[0]);
            assert!(hy.analog.iter().all(|z| (z.norm() - 0.25).abs() < 1e-14));
        }
    }

    #[test]
    fn hybrid_needs_input() {
        assert!(hybrid_decompose(&[], 10, 1e-4).is_err());
    }

    #[test]
    fn power_coefficient_arithmetic() {
        // tr(QQ^H) = 2
        let q = CMatrix::identity(4, 2);
        let eta = downlink_power_coefficients(&vec![q; 5], 1.0);
        assert!(eta.iter().all(|e| (e - 0.1).abs() < 1e-15));
        // tr(L^H L) = N_MS = 8, so each MS radiates exactly P_UL
        let l = ms_beamformer(8, 2).unwrap();
        assert!((uplink_power_coefficient(&l, 1.0) - 0.125).abs() < 1e-15);
        assert!((uplink_power_coefficient(&l, 1.0) * power(&l) - 1.0).abs() < 1e-15);
        assert_eq!(downlink_power_coefficients(&[CMatrix::zeros(4, 2)], 1.0), vec![0.0]);
    }

    #[test]
    fn per_ap_power_is_conserved() {
        let mut r = rng(7);
        let qs: Vec<CMatrix> = (0..4).map(|_| complex_gaussian_matrix(&mut r, 16, 2, 3.0)).collect();
        for p_t in [1e-3, 1.0, 1e3] {
            let eta = downlink_power_coefficients(&qs, p_t);
            let radiated: f64 = eta.iter().zip(&qs).map(|(e, q)| e * power(q)).sum();
            assert!((radiated / p_t - 1.0).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn uc_select_scale_invariant(seed in 0u64..10_000, scale in 1e-6..1e6f64, n in 1usize..5) {
            let mut r = rng(seed);
            let norms: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| r.random()).collect()).collect();
            let scaled: Vec<Vec<f64>> = norms.iter().map(|row| row.iter().map(|v| v * scale).collect()).collect();
            let a = uc_select(&norms, 6, n).unwrap();
            prop_assert_eq!(&a, &uc_select(&scaled, 6, n).unwrap());
            for (m, set) in a.served.iter().enumerate() {
                prop_assert_eq!(set.len(), n);
                for &k in set {
                    prop_assert!(a.serving[k].contains(&m));
                }
            }
        }

        #[test]
        fn zf_residual_grows_with_nested_sets(seed in 0u64..10_000) {
            let mut r = rng(seed);
            let s: Vec<CMatrix> = (0..8).map(|_| complex_gaussian_matrix(&mut r, 6, 2, 1.0)).collect();
            let mut last = 0.0;
            for n in 1..=8 {
                let refs: Vec<&CMatrix> = s[..n].iter().collect();
                let q = zf_precoders(&refs);
                let mut resid = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        let target = if j == k { CMatrix::identity(2, 2) } else { CMatrix::zeros(2, 2) };
                        resid += power(&(s[j].adjoint() * &q[k] - target));
                    }
                }
                prop_assert!(resid >= last - 1e-9);
                last = resid;
            }
        }
    }
}
