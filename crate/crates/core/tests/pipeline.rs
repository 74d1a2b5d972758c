use std::f64::consts::FRAC_PI_2;

use kfim_core::dynamics::{autocorrelation, autocorrelation_spectral, center_site, eth_record};
use kfim_core::entanglement::{lambda_max, rescaled_spectrum, schmidt_spectrum};
use kfim_core::model::{sample_coe, ChainParams};
use kfim_core::rmt::{rescale_lambda_max, sample_tridiagonal_lambda_max, sample_wishart_lambda_max};
use kfim_core::rng::derive_seed;
use kfim_core::spectral::{default_filter_spec, dense_eig, kfim_dense_eig, polfed};
use kfim_core::stats::{kl_divergence, moment_summary, shared_histograms};

#[test]
fn polfed_eigenstates_feed_schmidt_statistics() {
    let p = ChainParams::self_dual(10, 17).unwrap();
    let pf = polfed(&p, &default_filter_spec(10), 16).unwrap();
    let de = kfim_dense_eig(&p, FRAC_PI_2).unwrap().nearest(FRAC_PI_2, 16);
    assert_eq!(pf.len(), 16);
    for i in 0..16 {
        assert!((pf.phases[i] - de.phases[i]).abs() < 1e-10);
        let a = lambda_max(&schmidt_spectrum(pf.vector(i), 10).unwrap());
        let b = lambda_max(&schmidt_spectrum(de.vector(i), 10).unwrap());
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        let e = rescaled_spectrum(&schmidt_spectrum(pf.vector(i), 10).unwrap());
        assert!((e.iter().sum::<f64>() / e.len() as f64 - 1.0).abs() < 1e-10);
        assert!(rescale_lambda_max(a, 32).unwrap().is_finite());
    }
}

#[test]
fn dense_and_tridiagonal_wishart_agree() {
    let n = 3000;
    let dense: Vec<f64> = (0..n)
        .map(|i| rescale_lambda_max(sample_wishart_lambda_max(64, derive_seed(70, i)).unwrap(), 64).unwrap())
        .collect();
    let tri: Vec<f64> = (0..n)
        .map(|i| rescale_lambda_max(sample_tridiagonal_lambda_max(64, derive_seed(71, i)).unwrap(), 64).unwrap())
        .collect();
    let (a, b) = (moment_summary(&dense).unwrap(), moment_summary(&tri).unwrap());
    assert!((a.mean - b.mean).abs() < 4.0 * (a.mean_err() + b.mean_err()), "{a:?} {b:?}");
    let (hp, hq) = shared_histograms(&dense, &tri, 20).unwrap();
    assert!(kl_divergence(&hp, &hq).unwrap() < 0.02);
}

#[test]
fn coe_eigenbasis_autocorrelation_and_eth() {
    let u = sample_coe(256, 5).unwrap();
    let e = dense_eig(&u).unwrap();
    let idx = 100;
    let c = autocorrelation_spectral(&e, idx, 8, 10).unwrap();
    assert!((c.values[0].re - 1.0).abs() < 1e-12);
    assert!(c.abs().iter().all(|&x| x <= 1.0 + 1e-12));
    let rec = eth_record(&e.nearest(0.0, 32)).unwrap();
    assert_eq!(rec.site, center_site(8));
    assert!(rec.offdiag_rms > 0.0 && rec.offdiag_rms < 1.0);
}

#[test]
fn matrix_free_autocorrelation_from_dense_eigenstate() {
    let p = ChainParams::self_dual(8, 23).unwrap();
    let e = kfim_dense_eig(&p, FRAC_PI_2).unwrap();
    let one = e.nearest(FRAC_PI_2, 1);
    let idx = e.phases.iter().position(|&x| x == one.phases[0]).unwrap();
    let mf = autocorrelation(&p, one.phases[0], one.vector(0), 30).unwrap();
    let sp = autocorrelation_spectral(&e, idx, 8, 30).unwrap();
    for (a, b) in mf.values.iter().zip(&sp.values) {
        assert!((a - b).norm() < 1e-10);
    }
}
