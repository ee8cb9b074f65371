//! Gram-matrix hardening statistics and uplink power control.

mod power;

pub use power::{
    closed_loop_sim, pc_fixed_sinr, pc_fixed_snr, pc_hardening, ClosedLoopConfig, PowerControlAlgorithm,
    PowerControlState, Trajectory, TrajectoryRow,
};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{iid_rayleigh, ChannelMatrix};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::{Error, Result};

/// `H Hᴴ` in the users orientation (K×K).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: CMatrix,
    pub n_snapshots_averaged: usize,
    pub n_bs_antennas: usize,
}

impl GramMatrix {
    pub fn n_users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let k = self.n_users();
        let mut best = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    best = best.max(self.matrix[(i, j)].norm());
                }
            }
        }
        best
    }

    /// `|G_ij|` as CSV, one matrix row per line.
    pub fn magnitude_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_users() {
            let row: Vec<String> = (0..self.n_users()).map(|j| format!("{:.8e}", self.matrix[(i, j)].norm())).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

pub fn gram(h: &ChannelMatrix) -> GramMatrix {
    let g = &h.entries * h.entries.adjoint();
    // Exact Hermitian symmetry and a real diagonal, independent of rounding.
    let matrix = (&g + g.adjoint()).unscale(2.0);
    GramMatrix { matrix, n_snapshots_averaged: 1, n_bs_antennas: h.n_antennas() }
}

/// Element-wise mean of the complex per-snapshot gram matrices.
pub fn gram_average(snapshots: &[ChannelMatrix]) -> Result<GramMatrix> {
    let first = snapshots.first().ok_or_else(|| Error::invalid("gram_average needs at least one snapshot"))?;
    let (k, m) = (first.n_users(), first.n_antennas());
    let mut acc = CMatrix::zeros(k, k);
    for (i, h) in snapshots.iter().enumerate() {
        if h.n_users() != k || h.n_antennas() != m {
            return Err(Error::invalid(format!(
                "snapshot {i} is {}x{}, expected {k}x{m}",
                h.n_users(),
                h.n_antennas()
            )));
        }
        acc += gram(h).matrix;
    }
    Ok(GramMatrix {
        matrix: acc.unscale(snapshots.len() as f64),
        n_snapshots_averaged: snapshots.len(),
        n_bs_antennas: m,
    })
}

/// Denominator of the hardening ratio. The numerator is always the
/// largest off-diagonal magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMetric {
    /// `tr(G)/K`, the mean eigenvalue.
    #[default]
    MeanEigenvalue,
    /// Smallest eigenvalue of `G`.
    MinEigenvalue,
}

impl RatioMetric {
    pub fn name(self) -> &'static str {
        match self {
            RatioMetric::MeanEigenvalue => "mean_eigenvalue",
            RatioMetric::MinEigenvalue => "min_eigenvalue",
        }
    }
}

/// Off-diagonal coupling relative to the eigenvalue scale of `G`. Returns
/// `+∞` when the denominator is not positive.
pub fn hardening_ratio(g: &GramMatrix, metric: RatioMetric) -> Result<f64> {
    let k = g.n_users();
    if k < 2 {
        return Err(Error::invalid(format!("hardening ratio needs K >= 2 users (got {k})")));
    }
    let denom = match metric {
        RatioMetric::MeanEigenvalue => g.eigenvalues().iter().sum::<f64>() / k as f64,
        RatioMetric::MinEigenvalue => g.eigenvalues()[0],
    };
    if !(denom > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(g.max_off_diagonal() / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardeningStats {
    pub n_antennas: usize,
    pub n_users: usize,
    pub metric: RatioMetric,
    pub mean: f64,
    pub std: f64,
    pub ratios: Vec<f64>,
}

/// Independent stream seed for draw `index` of a run seeded with `seed`.
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hardening ratio over `n_seeds` i.i.d. Rayleigh K×M draws.
pub fn hardening_monte_carlo(
    m: usize,
    k: usize,
    n_seeds: usize,
    metric: RatioMetric,
    seed: u64,
) -> Result<HardeningStats> {
    if n_seeds == 0 || m == 0 {
        return Err(Error::invalid("Monte Carlo needs n_seeds >= 1 and M >= 1"));
    }
    let ratios: Vec<f64> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| hardening_ratio(&gram(&iid_rayleigh(m, k, derive_seed(seed, m as u64, s))), metric))
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&ratios);
    Ok(HardeningStats { n_antennas: m, n_users: k, metric, mean, std, ratios })
}

/// Standard deviation of the per-slot normalised gain `‖h_k‖²/M` over
/// `n_slots` independent Rayleigh draws, pooled over `k` users.
pub fn normalised_gain_std(m: usize, k: usize, n_slots: usize, seed: u64) -> f64 {
    let gains: Vec<f64> = (0..n_slots as u64)
        .into_par_iter()
        .flat_map_iter(|s| {
            let h = iid_rayleigh(m, k, derive_seed(seed, 0x6A1E ^ m as u64, s));
            (0..k).map(move |u| h.entries.row(u).norm_squared() / m as f64).collect::<Vec<_>>()
        })
        .collect();
    mean_std(&gains).1
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelModelTag;
    use crate::linalg::is_hermitian;
    use crate::Complex64;
    use proptest::prelude::*;

    fn cm(entries: CMatrix) -> ChannelMatrix {
        ChannelMatrix::new(entries, ChannelModelTag::Iid, 0.1).unwrap()
    }

    fn gm(rows: &[&[f64]]) -> GramMatrix {
        let k = rows.len();
        GramMatrix {
            matrix: CMatrix::from_fn(k, k, |i, j| Complex64::new(rows[i][j], 0.0)),
            n_snapshots_averaged: 1,
            n_bs_antennas: 1,
        }
    }

    #[test]
    fn orthonormal_rows_give_identity() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = cm(CMatrix::from_fn(2, 4, |k, m| match (k, m) {
            (0, 0) | (0, 1) => Complex64::new(s, 0.0),
            (1, 2) => Complex64::new(0.0, s),
            (1, 3) => Complex64::new(-s, 0.0),
            _ => Complex64::new(0.0, 0.0),
        }));
        let g = gram(&h);
        assert!((g.matrix - CMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn single_user_is_norm_squared() {
        let h = iid_rayleigh(8, 1, 2);
        let g = gram(&h);
        assert_eq!(g.n_users(), 1);
        assert!((g.matrix[(0, 0)].re - h.entries.norm_squared()).abs() < 1e-12);
        assert!(hardening_ratio(&g, RatioMetric::MeanEigenvalue).is_err());
    }

    #[test]
    fn matches_brute_force_inner_products() {
        let h = iid_rayleigh(8, 3, 5);
        let g = gram(&h);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..8 {
                    acc += h.entries[(i, m)] * h.entries[(j, m)].conj();
                }
                assert!((g.matrix[(i, j)] - acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ratio_examples() {
        let id = gm(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(hardening_ratio(&id, RatioMetric::MinEigenvalue).unwrap(), 0.0);
        assert_eq!(hardening_ratio(&id, RatioMetric::MeanEigenvalue).unwrap(), 0.0);
        let g = gm(&[&[1.0, 0.5], &[0.5, 1.0]]);
        assert!((hardening_ratio(&g, RatioMetric::MinEigenvalue).unwrap() - 1.0).abs() < 1e-12);
        assert!((hardening_ratio(&g, RatioMetric::MeanEigenvalue).unwrap() - 0.5).abs() < 1e-12);
        let singular = gm(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(hardening_ratio(&singular, RatioMetric::MinEigenvalue).unwrap(), f64::INFINITY);
    }

    #[test]
    fn average_of_identical_snapshots_and_mismatch() {
        let h = iid_rayleigh(6, 2, 1);
        let avg = gram_average(&[h.clone(), h.clone(), h.clone()]).unwrap();
        assert_eq!(avg.n_snapshots_averaged, 3);
        assert!((avg.matrix - gram(&h).matrix).norm() < 1e-12);
        assert!(gram_average(&[h, iid_rayleigh(5, 2, 1)]).is_err());
        assert!(gram_average(&[]).is_err());
    }

    #[test]
    fn more_antennas_harden() {
        for metric in [RatioMetric::MeanEigenvalue, RatioMetric::MinEigenvalue] {
            let small = hardening_monte_carlo(32, 12, 200, metric, 1).unwrap();
            let large = hardening_monte_carlo(112, 12, 200, metric, 1).unwrap();
            assert!(large.mean < small.mean, "{metric:?}");
        }
    }

    #[test]
    fn gain_spread_scales_with_root_m() {
        let r = normalised_gain_std(32, 12, 2000, 3) / normalised_gain_std(112, 12, 2000, 3);
        assert!((r - (112.0f64 / 32.0).sqrt()).abs() < 0.15 * 1.87, "ratio {r}");
    }

    #[test]
    fn monte_carlo_is_thread_count_independent() {
        let a = hardening_monte_carlo(16, 4, 50, RatioMetric::MeanEigenvalue, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| hardening_monte_carlo(16, 4, 50, RatioMetric::MeanEigenvalue, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export_shape() {
        let csv = gram(&iid_rayleigh(4, 3, 1)).magnitude_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 3));
    }

    proptest! {
        #[test]
        fn gram_is_hermitian_psd(seed in any::<u64>(), k in 1usize..6, m in 1usize..10) {
            let g = gram(&iid_rayleigh(m, k, seed));
            prop_assert!(is_hermitian(&g.matrix, 1e-12));
            let eig = g.eigenvalues();
            prop_assert!(eig[0] >= -1e-10 * eig[eig.len() - 1].max(1.0));
            for i in 0..k {
                prop_assert!(g.matrix[(i, i)].im == 0.0 && g.matrix[(i, i)].re >= 0.0);
            }
        }

        #[test]
        fn ratio_is_scale_invariant(seed in any::<u64>(), re in 0.01f64..100.0, im in -100.0f64..100.0) {
            let h = iid_rayleigh(8, 3, seed);
            let c = Complex64::new(re, im);
            for metric in [RatioMetric::MeanEigenvalue, RatioMetric::MinEigenvalue] {
                let a = hardening_ratio(&gram(&h), metric).unwrap();
                let b = hardening_ratio(&gram(&h.scaled(c)), metric).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
