//! Half-chain Schmidt spectra.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// Eigenvalues of the reduced density matrix of the first L/2 sites, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    pub d: usize,
    pub values: Vec<f64>,
}

fn check(state: &[c64], l: usize) -> Result<()> {
    if l < 2 || l % 2 != 0 {
        return invalid_param(format!("half-chain bipartition needs even L >= 2, got {l}"));
    }
    if state.len() != 1 << l {
        return invalid_param(format!("state length {} != 2^{l}", state.len()));
    }
    Ok(())
}

/// C_{ij} = ψ(i·D + j): rows index the first L/2 sites, columns the rest.
pub fn coefficient_matrix(state: &[c64], l: usize) -> Result<Mat<c64>> {
    check(state, l)?;
    let d = 1usize << (l / 2);
    Ok(Mat::from_fn(d, d, |i, j| state[i * d + j]))
}

/// Squared singular values of C, normalized to unit sum.
pub fn schmidt_spectrum(state: &[c64], l: usize) -> Result<SchmidtSpectrum> {
    let c = coefficient_matrix(state, l)?;
    let sv = c.singular_values().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let mut values: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("state has zero norm".into()));
    }
    values.iter_mut().for_each(|x| *x /= total);
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(SchmidtSpectrum { d: c.nrows(), values })
}

/// ẽ_j = D λ_j.
pub fn rescaled_spectrum(s: &SchmidtSpectrum) -> Vec<f64> {
    s.values.iter().map(|x| x * s.d as f64).collect()
}

pub fn lambda_max(s: &SchmidtSpectrum) -> f64 {
    s.values[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateVector;
    use faer::Side;
    use proptest::prelude::*;

    fn real(v: &[f64]) -> Vec<c64> {
        v.iter().map(|&x| c64::new(x, 0.0)).collect()
    }

    #[test]
    fn product_and_bell_states() {
        let p = real(&[1.0, 0.0, 0.0, 0.0]);
        let c = coefficient_matrix(&p, 2).unwrap();
        assert_eq!(c[(0, 0)], c64::new(1.0, 0.0));
        assert_eq!(c[(1, 1)], c64::new(0.0, 0.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bell = real(&[r, 0.0, 0.0, r]);
        let c = coefficient_matrix(&bell, 2).unwrap();
        assert!((c[(0, 0)].re - r).abs() < 1e-15 && (c[(1, 1)].re - r).abs() < 1e-15);
        assert_eq!(c[(0, 1)].norm() + c[(1, 0)].norm(), 0.0);
        let s = schmidt_spectrum(&p, 2).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0]);
        assert_eq!(lambda_max(&s), 1.0);
    }

    #[test]
    fn product_state_rescaled() {
        let mut psi = vec![c64::new(0.0, 0.0); 16];
        psi[0] = c64::new(1.0, 0.0);
        let s = schmidt_spectrum(&psi, 4).unwrap();
        assert_eq!(rescaled_spectrum(&s), vec![4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maximally_entangled_l4() {
        // Σ_i |i⟩|i⟩ / 2
        let mut psi = vec![c64::new(0.0, 0.0); 16];
        for i in 0..4 {
            psi[i * 4 + i] = c64::new(0.5, 0.0);
        }
        let s = schmidt_spectrum(&psi, 4).unwrap();
        for v in &s.values {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!((lambda_max(&s) - 0.25).abs() < 1e-15);
        for e in rescaled_spectrum(&s) {
            assert!((e - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn odd_length_rejected() {
        assert!(coefficient_matrix(&[c64::new(1.0, 0.0); 8], 3).is_err());
        assert!(coefficient_matrix(&[c64::new(1.0, 0.0); 8], 2).is_err());
    }

    #[test]
    fn both_halves_share_spectrum() {
        for seed in 0..100 {
            let psi = StateVector::random(8, seed);
            let c = coefficient_matrix(&psi, 8).unwrap();
            let rho1 = &c * c.adjoint();
            let rho2 = c.transpose() * c.conjugate();
            let mut e1 = rho1.self_adjoint_eigenvalues(Side::Lower).unwrap();
            let mut e2 = rho2.self_adjoint_eigenvalues(Side::Lower).unwrap();
            e1.reverse();
            e2.reverse();
            let s = schmidt_spectrum(&psi, 8).unwrap();
            for i in 0..16 {
                assert!((e1[i] - e2[i]).abs() < 1e-12);
                assert!((e1[i] - s.values[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_svd_oracle() {
        let psi = StateVector::random(8, 3);
        let c = coefficient_matrix(&psi, 8).unwrap();
        let svd = c.svd().unwrap();
        let s = schmidt_spectrum(&psi, 8).unwrap();
        let sd = svd.S().column_vector();
        for i in 0..16 {
            assert!((sd[i].re * sd[i].re - s.values[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spectrum_invariants(half in 1usize..6, seed in any::<u64>()) {
            let l = 2 * half;
            let psi = StateVector::random(l, seed);
            let c = coefficient_matrix(&psi, l).unwrap();
            let fro: f64 = (0..c.nrows()).flat_map(|i| (0..c.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| c[(i, j)].norm_sqr()).sum();
            prop_assert!((fro - 1.0).abs() < 1e-12);
            let s = schmidt_spectrum(&psi, l).unwrap();
            prop_assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.values.iter().all(|&v| v >= 0.0));
            let lm = lambda_max(&s);
            prop_assert!(lm >= 1.0 / s.d as f64 - 1e-15 && lm <= 1.0 + 1e-15);
            prop_assert!((rescaled_spectrum(&s).iter().sum::<f64>() - s.d as f64).abs() < 1e-10);
        }
    }
}
