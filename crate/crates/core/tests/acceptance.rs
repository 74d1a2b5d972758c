//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::cell::OnceCell;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use kfim_core::c64;
use kfim_core::dynamics::{
    autocorrelation, autocorrelation_spectral, ensemble_average, eth_record, otoc, otoc_dense,
    CorrelationSeries, TraceEstimator,
};
use kfim_core::entanglement::{lambda_max, rescaled_spectrum, schmidt_spectrum};
use kfim_core::model::{
    apply_floquet, build_dense_unitary, sample_coe, ChainParams, Operator, StateVector,
};
use kfim_core::rmt::{
    rescale_lambda_max, sample_tridiagonal_lambda_max, sample_wishart_lambda_max,
    sample_wishart_unit_trace, TW_GOE,
};
use kfim_core::rng::{derive_seed, rng_from_seed};
use kfim_core::spectral::{default_filter_spec, dense_eig, kfim_dense_eig, polfed, EigenpairSet};
use kfim_core::stats::{
    fit_exponential_scaling, fit_gev, kl_divergence, linear_fit, moment_summary, ratio_r,
    sample_gev, shared_histograms, MomentSummary,
};
use rand::Rng;
use rand_distr::StandardNormal;

const COE_L12_MEAN: f64 = -1.182;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn fmt_moments(m: &MomentSummary) -> String {
    format!("mean {:.4} var {:.4} skew {:.4} (n={})", m.mean, m.variance, m.skewness, m.count)
}

fn rescaled_lambda_max(v: &[c64], l: usize) -> f64 {
    let s = schmidt_spectrum(v, l).unwrap();
    rescale_lambda_max(lambda_max(&s), s.d).unwrap()
}

fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

const KFIM_L12_REALIZATIONS: u64 = 192;

/// Sample pools shared between criteria, built on first use.
#[derive(Default)]
struct Pools {
    kfim12: OnceCell<Vec<f64>>,
    kfim12_raw: OnceCell<Vec<f64>>,
    /// Pool length after each L=12 realization.
    kfim12_ends: OnceCell<Vec<usize>>,
    coe12: OnceCell<(Vec<f64>, Vec<f64>)>,
    tridiag: OnceCell<Vec<f64>>,
}

impl Pools {
    fn kfim_l12(&self) -> (&Vec<f64>, &Vec<f64>) {
        let raw = self.kfim12_raw.get_or_init(|| {
            let spec = default_filter_spec(12);
            let mut out = vec![];
            let mut ends = vec![];
            for r in 0..KFIM_L12_REALIZATIONS {
                let p = ChainParams::self_dual(12, derive_seed(6, r)).unwrap();
                let e = polfed(&p, &spec, 128).unwrap();
                for i in 0..e.len() {
                    out.push(lambda_max(&schmidt_spectrum(e.vector(i), 12).unwrap()));
                }
                ends.push(out.len());
            }
            let _ = self.kfim12_ends.set(ends);
            out
        });
        let resc = self
            .kfim12
            .get_or_init(|| raw.iter().map(|&x| rescale_lambda_max(x, 64).unwrap()).collect());
        (raw, resc)
    }

    /// (rescaled Schmidt values ẽ, rescaled λ_max) over COE L=12 eigenvectors.
    fn coe_l12(&self) -> &(Vec<f64>, Vec<f64>) {
        self.coe12.get_or_init(|| {
            let mut e_all = vec![];
            let mut lm = vec![];
            for s in 0..2 {
                let u = sample_coe(4096, derive_seed(5, s)).unwrap();
                let eigs = dense_eig(&u).unwrap().nearest(FRAC_PI_2, 512);
                for i in 0..eigs.len() {
                    let sp = schmidt_spectrum(eigs.vector(i), 12).unwrap();
                    e_all.extend(rescaled_spectrum(&sp));
                    lm.push(rescale_lambda_max(lambda_max(&sp), 64).unwrap());
                }
            }
            (e_all, lm)
        })
    }

    fn tridiagonal(&self) -> &Vec<f64> {
        self.tridiag.get_or_init(|| {
            let d = 1usize << 18;
            (0..20_000)
                .map(|i| rescale_lambda_max(sample_tridiagonal_lambda_max(d, derive_seed(4, i)).unwrap(), d).unwrap())
                .collect()
        })
    }
}

fn ac1(_: &Pools) -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0f64;
    for l in 4..=10 {
        for k in 0..20 {
            let j = rng.random_range(-PI..PI);
            let b = rng.random_range(-PI..PI);
            let h: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
            let p = ChainParams::new(l, j, b, h, k).unwrap();
            let psi = StateVector::random(l, derive_seed(1, (l * 100 + k as usize) as u64));
            let mut a = psi.amplitudes.clone();
            apply_floquet(&mut a, &p).unwrap();
            let mut d = psi.amplitudes.clone();
            build_dense_unitary(&p).unwrap().apply(&mut d);
            for (x, y) in a.iter().zip(&d) {
                worst = worst.max((x - y).norm());
            }
        }
    }
    outcome(worst < 1e-12, format!("max |matrix-free - dense| = {worst:.2e} over L=4..10 x 20 (< 1e-12)"))
}

fn ac2(_: &Pools) -> Outcome {
    let (mut dphi, mut dov, mut res) = (0.0f64, 0.0f64, 0.0f64);
    let (mut pairs, mut requested) = (0, 0);
    let mut flags_ok = true;
    for l in [10usize, 11, 12] {
        let spec = default_filter_spec(l);
        let n = 64;
        for r in 0..5 {
            let p = ChainParams::self_dual(l, derive_seed(2, (l * 10 + r) as u64)).unwrap();
            let pf = polfed(&p, &spec, n).unwrap();
            // Pairs dropped by the residue cut must be the outermost ones, so the
            // returned set is compared with the same number of nearest dense pairs.
            let de = kfim_dense_eig(&p, FRAC_PI_2).unwrap().nearest(FRAC_PI_2, pf.len());
            flags_ok &= !pf.is_empty() && pf.incomplete == (pf.len() < n);
            for i in 0..pf.len() {
                dphi = dphi.max((pf.phases[i] - de.phases[i]).abs());
                dov = dov.max(1.0 - inner(pf.vector(i), de.vector(i)).norm());
                res = res.max(pf.residues[i]);
            }
            pairs += pf.len();
            requested += n;
        }
    }
    let pass = flags_ok && dphi < 1e-10 && dov < 1e-8 && res < 1e-10;
    outcome(
        pass,
        format!(
            "{pairs}/{requested} pairs nearest pi/2 at L=10,11,12 converged: max dphase {dphi:.2e}, max 1-overlap {dov:.2e}, max residue {res:.2e}"
        ),
    )
}

fn wishart_moments(d: usize, draws: u64, master: u64) -> MomentSummary {
    let v: Vec<f64> = (0..draws)
        .map(|i| rescale_lambda_max(sample_wishart_lambda_max(d, derive_seed(master, i)).unwrap(), d).unwrap())
        .collect();
    moment_summary(&v).unwrap()
}

fn ac3(_: &Pools) -> Outcome {
    let m64 = wishart_moments(64, 100_000, 31);
    let m512 = wishart_moments(512, 100_000, 32);
    let ok = |m: &MomentSummary, mean, var, skew| {
        within(m.mean, mean, 0.01) && within(m.variance, var, 0.03) && within(m.skewness, skew, 0.05)
    };
    let pass = ok(&m64, -1.181, 1.240, 0.431) && ok(&m512, -1.202, 1.506, 0.332);
    outcome(pass, format!("D=64: {}; D=512: {}", fmt_moments(&m64), fmt_moments(&m512)))
}

fn ac4(pools: &Pools) -> Outcome {
    let m = moment_summary(pools.tridiagonal()).unwrap();
    let pass = within(m.mean, -1.200, 0.03) && within(m.variance, 1.606, 0.08) && within(m.skewness, 0.313, 0.1);
    outcome(pass, format!("D=2^18: {}", fmt_moments(&m)))
}

fn ac5(pools: &Pools) -> Outcome {
    let (coe, _) = pools.coe_l12();
    let mut wishart = Vec::with_capacity(coe.len());
    let mut i = 0;
    while wishart.len() < coe.len() {
        let w = sample_wishart_unit_trace(64, derive_seed(50, i)).unwrap();
        wishart.extend(w.eigenvalues.iter().map(|x| x * 64.0));
        i += 1;
    }
    let (p, q) = shared_histograms(&wishart, coe, 100).unwrap();
    let kl = kl_divergence(&p, &q).unwrap();
    outcome(kl < 0.02, format!("KL(Wishart D=64 || COE L=12) = {kl:.5} on 100 bins, {} values each (< 0.02)", coe.len()))
}

fn ac6(pools: &Pools) -> Outcome {
    let (_, pool) = pools.kfim_l12();
    let m = moment_summary(pool).unwrap();
    let sep = (m.mean - COE_L12_MEAN).abs();
    // Leave-one-realization-out jackknife error of the skewness.
    let ends = pools.kfim12_ends.get().unwrap();
    let mut starts = vec![0];
    starts.extend(&ends[..ends.len() - 1]);
    let jk: Vec<f64> = starts
        .iter()
        .zip(ends)
        .map(|(&a, &b)| {
            let rest: Vec<f64> = pool[..a].iter().chain(&pool[b..]).copied().collect();
            moment_summary(&rest).unwrap().skewness
        })
        .collect();
    let n = jk.len() as f64;
    let jm = jk.iter().sum::<f64>() / n;
    let skew_err = ((n - 1.0) / n * jk.iter().map(|x| (x - jm).powi(2)).sum::<f64>()).sqrt();
    let pass = pool.len() >= 2000
        && within(m.mean, -0.21, 0.05)
        && within(m.variance, 2.06, 0.15)
        && within(m.skewness, 0.58, 0.1)
        && sep > 0.9;
    outcome(
        pass,
        format!(
            "KFIM L=12: {} (skewness jackknife error {skew_err:.3}, {} realizations); separation from COE mean {sep:.3}",
            fmt_moments(&m),
            ends.len()
        ),
    )
}

fn ac7(pools: &Pools) -> Outcome {
    let (alpha, beta, xi) = (7.77e-3, 9.40e-5, 0.17);
    let f = fit_gev(&sample_gev(100_000, alpha, beta, xi, 7)).unwrap();
    let za = (f.alpha - alpha) / f.alpha_err;
    let zb = (f.beta - beta) / f.beta_err;
    let zx = (f.xi - xi) / f.xi_err;
    let synth = za.abs() <= 3.0 && zb.abs() <= 3.0 && zx.abs() <= 3.0;
    let (raw, _) = pools.kfim_l12();
    let k = fit_gev(raw).unwrap();
    let weibull = k.xi > 3.0 * k.xi_err;
    outcome(
        synth && weibull,
        format!(
            "synthetic z-scores (alpha {za:.2}, beta {zb:.2}, xi {zx:.2}); KFIM L=12 xi = {:.4} +- {:.4} (n={})",
            k.xi, k.xi_err, k.count
        ),
    )
}

fn ac8(_: &Pools) -> Outcome {
    let window = 32;
    let mut mean_pts = vec![];
    let mut max_pts = vec![];
    let mut off_pts = vec![];
    for l in 8..=13usize {
        let reals = match l {
            8..=11 => 64,
            12 => 32,
            _ => 16,
        };
        let spec = default_filter_spec(l);
        let (mut mg, mut mx, mut off2) = (0.0, 0.0, 0.0);
        for r in 0..reals {
            let p = ChainParams::self_dual(l, derive_seed(8, (l * 1000 + r) as u64)).unwrap();
            let e = polfed(&p, &spec, window).unwrap();
            let rec = eth_record(&e).unwrap();
            mg += rec.mean_gap;
            mx += rec.max_gap;
            off2 += rec.offdiag_rms * rec.offdiag_rms;
        }
        let n = reals as f64;
        mean_pts.push((l as f64, mg / n));
        max_pts.push((l as f64, mx / n));
        off_pts.push((l as f64, (off2 / n).sqrt()));
    }
    let fm = fit_exponential_scaling(&mean_pts).unwrap();
    let fx = fit_exponential_scaling(&max_pts).unwrap();
    let fo = fit_exponential_scaling(&off_pts).unwrap();
    let b_ok = [fm.b, fx.b, fo.b].iter().all(|b| (1.8..=2.3).contains(b));
    let a_ok = within(fm.a0, 0.447, 0.25 * 0.447);
    outcome(
        b_ok && a_ok,
        format!(
            "mean gap a0 {:.3} b {:.3}; max gap a0 {:.3} b {:.3}; off-diagonal a0 {:.3} b {:.3}",
            fm.a0, fm.b, fx.a0, fx.b, fo.a0, fo.b
        ),
    )
}

fn nearest_index(e: &EigenpairSet, target: f64) -> usize {
    (0..e.len())
        .min_by(|&a, &b| (e.phases[a] - target).abs().total_cmp(&(e.phases[b] - target).abs()))
        .unwrap()
}

fn ac9(_: &Pools) -> Outcome {
    let t_max = 100;
    let mut plateaus = vec![];
    let mut fits_ok = true;
    let mut fit_text = vec![];
    for l in [8usize, 10, 12] {
        let spec = default_filter_spec(l);
        let series: Vec<CorrelationSeries> = (0..32)
            .map(|r| {
                let p = ChainParams::self_dual(l, derive_seed(9, (l * 1000 + r) as u64)).unwrap();
                let e = polfed(&p, &spec, 1).unwrap();
                autocorrelation(&p, e.phases[0], e.vector(0), t_max).unwrap()
            })
            .collect();
        let (mean, _) = ensemble_average(&series, |z| z.norm()).unwrap();
        plateaus.push(mean[50..=100].iter().sum::<f64>() / 51.0);
        let t: Vec<f64> = (0..=2).map(|x| x as f64).collect();
        let y: Vec<f64> = mean[..=2].iter().map(|c| c.ln()).collect();
        let f = linear_fit(&t, &y).unwrap();
        fits_ok &= f.slope < 0.0 && f.r_squared > 0.9;
        fit_text.push(format!("L={l} slope {:.3} R2 {:.3}", f.slope, f.r_squared));
    }
    let mono = plateaus.windows(2).all(|w| w[1] < w[0]);
    let mut dev = 0.0f64;
    for r in 0..3 {
        let p = ChainParams::self_dual(8, derive_seed(90, r)).unwrap();
        let e = kfim_dense_eig(&p, FRAC_PI_2).unwrap();
        let i = nearest_index(&e, FRAC_PI_2);
        let mf = autocorrelation(&p, e.phases[i], e.vector(i), t_max).unwrap();
        let sp = autocorrelation_spectral(&e, i, 8, t_max).unwrap();
        for (a, b) in mf.values.iter().zip(&sp.values) {
            dev = dev.max((a - b).norm());
        }
    }
    outcome(
        mono && fits_ok && dev < 1e-10,
        format!(
            "plateaus L=8,10,12: {:.4} {:.4} {:.4}; early fit over t=0..2: {}; matrix-free vs dense {dev:.2e}",
            plateaus[0],
            plateaus[1],
            plateaus[2],
            fit_text.join(", ")
        ),
    )
}

fn saturation(mean: &[f64], from: usize) -> (f64, Option<usize>) {
    let tail = &mean[from..];
    let s = tail.iter().sum::<f64>() / tail.len() as f64;
    let reached = (0..mean.len()).find(|&t| mean[t..].iter().all(|x| (x - s).abs() <= 0.05 * s));
    (s, reached)
}

fn ac10(_: &Pools) -> Outcome {
    let t_max = 40;
    let kfim: Vec<CorrelationSeries> = (0..16)
        .map(|r| {
            let p = ChainParams::self_dual(10, derive_seed(10, r)).unwrap();
            otoc(&p, t_max, TraceEstimator::Full).unwrap()
        })
        .collect();
    let coe: Vec<CorrelationSeries> =
        (0..4).map(|r| otoc_dense(&sample_coe(1024, derive_seed(100, r)).unwrap(), t_max).unwrap()).collect();
    let zero = kfim.iter().chain(&coe).all(|c| c.values[0].re == 0.0);
    let (mk, _) = ensemble_average(&kfim, |z| z.re).unwrap();
    let (mc, _) = ensemble_average(&coe, |z| z.re).unwrap();
    let (sk, tk) = saturation(&mk, 30);
    let (sc, _) = saturation(&mc, 30);
    let rel = (sk - sc).abs() / sc;
    let pass = zero && tk.is_some_and(|t| t <= 20) && rel < 0.1;
    outcome(
        pass,
        format!(
            "C(0)=0: {zero}; KFIM L=10 saturates at {sk:.4} from t={tk:?}; COE {sc:.4}; relative difference {rel:.4}"
        ),
    )
}

fn kfim_pool(l: usize, realizations: u64) -> Vec<f64> {
    let spec = default_filter_spec(l);
    let mut out = vec![];
    for r in 0..realizations {
        let p = ChainParams::self_dual(l, derive_seed(11, (l as u64) * 1000 + r)).unwrap();
        let e = polfed(&p, &spec, spec.krylov_dim / 2).unwrap();
        out.extend((0..e.len()).map(|i| rescaled_lambda_max(e.vector(i), l)));
    }
    out
}

fn coe_pool(l: usize, samples: u64) -> Vec<f64> {
    let mut out = vec![];
    for s in 0..samples {
        let e = dense_eig(&sample_coe(1 << l, derive_seed(110, (l as u64) * 1000 + s)).unwrap()).unwrap();
        out.extend((0..e.len()).map(|i| rescaled_lambda_max(e.vector(i), l)));
    }
    out
}

fn ac11(pools: &Pools) -> Outcome {
    let reference = pools.tridiagonal();
    let mut pass = true;
    let mut text = vec![];
    for l in [8usize, 10, 12] {
        let (kf, coe) = match l {
            8 => (kfim_pool(8, 64), coe_pool(8, 8)),
            10 => (kfim_pool(10, 32), coe_pool(10, 2)),
            _ => (pools.kfim_l12().1.clone(), pools.coe_l12().1.clone()),
        };
        let rk = ratio_r(moment_summary(&kf).unwrap().mean, &TW_GOE);
        let rc = ratio_r(moment_summary(&coe).unwrap().mean, &TW_GOE);
        // D_KL(model || reference): the epsilon floor then acts on reference bins.
        // The opposite orientation is printed alongside for comparison.
        let (r, m) = shared_histograms(reference, &kf, 100).unwrap();
        let (dk, dk_rev) = (kl_divergence(&m, &r).unwrap(), kl_divergence(&r, &m).unwrap());
        let (r, m) = shared_histograms(reference, &coe, 100).unwrap();
        let (dc, dc_rev) = (kl_divergence(&m, &r).unwrap(), kl_divergence(&r, &m).unwrap());
        pass &= rk > rc && dk > dc;
        text.push(format!(
            "L={l}: R {rk:.3} vs {rc:.3}, D_KL {dk:.4} vs {dc:.4} [reversed {dk_rev:.4} vs {dc_rev:.4}] (n={}/{})",
            kf.len(),
            coe.len()
        ));
    }
    outcome(pass, format!("KFIM vs COE, {}", text.join("; ")))
}

type Criterion = fn(&Pools) -> Outcome;

fn main() {
    let criteria: [(usize, &str, Criterion); 11] = [
        (1, "operator correctness", ac1),
        (2, "eigensolver equivalence", ac2),
        (3, "Wishart moments", ac3),
        (4, "Laguerre tridiagonal moments", ac4),
        (5, "Marchenko-Pastur agreement", ac5),
        (6, "KFIM deviation signature", ac6),
        (7, "GEV recovery", ac7),
        (8, "ETH scaling", ac8),
        (9, "autocorrelation", ac9),
        (10, "OTOC", ac10),
        (11, "R and D_KL versus L", ac11),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let pools = Pools::default();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = f(&pools);
        println!(
            "AC{n} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
