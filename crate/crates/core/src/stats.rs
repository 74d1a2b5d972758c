//! Histograms, generalized extreme value fits, KL divergence, moments and
//! scaling fits.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::rmt::TwReference;
use crate::rng::rng_from_seed;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Floor applied to reference-bin masses in [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

pub const DEFAULT_BINS: usize = 100;

/// Binned sample weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn from_counts(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if edges.len() != counts.len() + 1 || counts.is_empty() {
            return invalid_param("need one more edge than bins");
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid_param("edges must be strictly increasing");
        }
        Ok(Histogram { edges, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Fraction of the total weight in each bin.
    pub fn masses(&self) -> Vec<f64> {
        let t = self.total();
        self.counts.iter().map(|c| if t > 0.0 { c / t } else { 0.0 }).collect()
    }

    /// Normalized density; Σ density·width = 1.
    pub fn density(&self) -> Vec<f64> {
        self.masses().iter().zip(self.widths()).map(|(m, w)| m / w).collect()
    }
}

/// How bin edges are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    Edges(Vec<f64>),
    /// Equal-width bins spanning the sample range.
    EqualWidth(usize),
    Range { bins: usize, lo: f64, hi: f64 },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::EqualWidth(DEFAULT_BINS)
    }
}

pub fn equal_width_edges(bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return invalid_param(format!("cannot build {bins} bins on [{lo}, {hi}]"));
    }
    let w = (hi - lo) / bins as f64;
    let mut e: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    e[bins] = hi;
    Ok(e)
}

fn sample_range(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return invalid_param("no samples");
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid_param("non-finite sample");
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        Ok((lo, hi))
    } else {
        Ok((lo - 0.5, hi + 0.5))
    }
}

/// Samples outside the edges are ignored; the last bin is closed on the right.
pub fn make_histogram(samples: &[f64], binning: &Binning) -> Result<Histogram> {
    if samples.is_empty() {
        return invalid_param("no samples");
    }
    let edges = match binning {
        Binning::Edges(e) => e.clone(),
        Binning::EqualWidth(bins) => {
            let (lo, hi) = sample_range(samples)?;
            equal_width_edges(*bins, lo, hi)?
        }
        Binning::Range { bins, lo, hi } => equal_width_edges(*bins, *lo, *hi)?,
    };
    let bins = edges.len().saturating_sub(1);
    Ok(fill(Histogram::from_counts(edges, vec![0.0; bins])?, samples))
}

fn fill(mut h: Histogram, samples: &[f64]) -> Histogram {
    let n = h.bins();
    let (lo, hi) = (h.edges[0], h.edges[n]);
    for &x in samples {
        if !(x >= lo && x <= hi) {
            continue;
        }
        let i = h.edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1);
        h.counts[i] += 1.0;
    }
    h
}

/// Two histograms on common equal-width edges spanning the pooled range.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> Result<(Histogram, Histogram)> {
    if a.is_empty() || b.is_empty() {
        return invalid_param("no samples");
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (lo, hi) = sample_range(&pooled)?;
    let binning = Binning::Edges(equal_width_edges(bins, lo, hi)?);
    Ok((make_histogram(a, &binning)?, make_histogram(b, &binning)?))
}

/// Σ_{P>0} P log(P / max(Q, ε)) over bin masses.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.edges != q.edges {
        return invalid_param("histograms have different bin edges");
    }
    Ok(kl_divergence_masses(&p.masses(), &q.masses()))
}

pub fn kl_divergence_masses(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum()
}

/// Sample moments with unbiased variance and the standardized third moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub count: usize,
}

impl MomentSummary {
    /// Standard error of the mean.
    pub fn mean_err(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

pub fn moment_summary(samples: &[f64]) -> Result<MomentSummary> {
    let n = samples.len();
    if n < 3 {
        return invalid_param(format!("need at least 3 samples, got {n}"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let variance = m2 / (nf - 1.0);
    let (m2, m3) = (m2 / nf, m3 / nf);
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Ok(MomentSummary { mean, variance, skewness, count: n })
}

/// |mean − μ_TW| / σ_TW.
pub fn ratio_r(model_mean: f64, tw: &TwReference) -> f64 {
    (model_mean - tw.mean).abs() / tw.variance.sqrt()
}

/// GEV density in the standardized variable y. ξ > 0 is the Weibull class
/// (support y < 1/ξ), ξ < 0 Fréchet, ξ = 0 Gumbel.
pub fn gev_density(y: f64, xi: f64) -> f64 {
    if xi.abs() < 1e-12 {
        let t = (-y).exp();
        return (-t).exp() * t;
    }
    let u = 1.0 - xi * y;
    if !(u > 0.0) {
        return 0.0;
    }
    let t = ((-xi * y).ln_1p() / xi).exp();
    (-t).exp() * t / u
}

fn gev_log_density(y: f64, xi: f64) -> f64 {
    if xi.abs() < 1e-12 {
        return -y - (-y).exp();
    }
    let u = 1.0 - xi * y;
    if !(u > 0.0) {
        return f64::NEG_INFINITY;
    }
    let lu = (-xi * y).ln_1p();
    -(lu / xi).exp() + (1.0 / xi - 1.0) * lu
}

pub fn gev_cdf(y: f64, xi: f64) -> f64 {
    if xi.abs() < 1e-12 {
        return (-(-y).exp()).exp();
    }
    let u = 1.0 - xi * y;
    if u <= 0.0 {
        return if xi > 0.0 { 1.0 } else { 0.0 };
    }
    (-((-xi * y).ln_1p() / xi).exp()).exp()
}

/// Inverse of [`gev_cdf`] for u ∈ (0, 1).
pub fn gev_quantile(u: f64, xi: f64) -> f64 {
    let w = -u.ln();
    if xi.abs() < 1e-12 {
        -w.ln()
    } else {
        -(xi * w.ln()).exp_m1() / xi
    }
}

/// `n` draws of α + β·y with y GEV(ξ) distributed, by inverse-CDF sampling.
pub fn sample_gev(n: usize, alpha: f64, beta: f64, xi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>();
            let u = u.max(f64::MIN_POSITIVE);
            alpha + beta * gev_quantile(u, xi)
        })
        .collect()
}

/// Maximum-likelihood GEV parameters with observed-information standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevFit {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub alpha_err: f64,
    pub beta_err: f64,
    pub xi_err: f64,
    pub log_likelihood: f64,
    pub count: usize,
    pub evaluations: usize,
}

fn gev_nll(z: &[f64], alpha: f64, beta: f64, xi: f64) -> f64 {
    if !(beta > 0.0) {
        return f64::INFINITY;
    }
    let lb = beta.ln();
    let mut s = 0.0;
    for &x in z {
        let l = gev_log_density((x - alpha) / beta, xi);
        if l == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        s -= l - lb;
    }
    s
}

/// Nelder–Mead minimizer; returns (best point, best value, evaluations, converged).
fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_evals: usize,
    ftol: f64,
    xtol: f64,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = n + 1;
    loop {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        let fspread = (values[n] - values[0]).abs();
        let xspread = simplex[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fspread <= ftol * (1.0 + values[0].abs()) && xspread <= xtol {
            return (simplex[0].clone(), values[0], evals, true);
        }
        if evals >= max_evals {
            return (simplex[0].clone(), values[0], evals, false);
        }
        let centroid: Vec<f64> =
            (0..n).map(|k| simplex[..n].iter().map(|x| x[k]).sum::<f64>() / n as f64).collect();
        let toward = |t: f64| -> Vec<f64> {
            (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect()
        };
        let xr = toward(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = toward(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = toward(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = toward(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    values[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(r)
}

/// Fits α, β, ξ by maximum likelihood. The data are standardized first, the
/// simplex search runs on (α, ln β, ξ) and is restarted once from its optimum.
pub fn fit_gev(samples: &[f64]) -> Result<GevFit> {
    let n = samples.len();
    if n < 100 {
        return invalid_param(format!("need at least 100 samples, got {n}"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid_param("non-finite sample");
    }
    let m = moment_summary(samples)?;
    let sd = m.variance.sqrt();
    if !(sd > 0.0) || sd < 1e-14 * m.mean.abs() {
        return Err(Error::DegenerateData("all samples are equal".into()));
    }
    let z: Vec<f64> = samples.iter().map(|x| (x - m.mean) / sd).collect();
    let nll = |p: &[f64]| gev_nll(&z, p[0], p[1].exp(), p[2]);

    let b0 = 6f64.sqrt() / std::f64::consts::PI;
    let a0 = -EULER_GAMMA * b0;
    let mut x0 = vec![a0, b0.ln(), 0.1];
    if !nll(&x0).is_finite() {
        x0[2] = 0.0;
    }
    let step = [0.1, 0.1, 0.05];
    let (x1, _, e1, _) = nelder_mead(&nll, &x0, &step, 4000, 1e-13, 1e-9);
    let (x, fbest, e2, ok) = nelder_mead(&nll, &x1, &step, 6000, 1e-14, 1e-10);
    let evaluations = e1 + e2;
    if !ok || !fbest.is_finite() {
        return Err(Error::OptimizerNonConvergence {
            evaluations,
            best: vec![m.mean + sd * x[0], sd * x[1].exp(), x[2]],
        });
    }
    let theta = [x[0], x[1].exp(), x[2]];
    let f = |t: [f64; 3]| gev_nll(&z, t[0], t[1], t[2]);
    let h = [1e-4 * theta[1], 1e-4 * theta[1], 1e-4];
    let mut hess = [[0.0; 3]; 3];
    let f0 = f(theta);
    for i in 0..3 {
        for j in i..3 {
            let shifted = |si: f64, sj: f64| {
                let mut t = theta;
                t[i] += si * h[i];
                t[j] += sj * h[j];
                f(t)
            };
            let v = if i == j {
                (shifted(1.0, 0.0) - 2.0 * f0 + shifted(-1.0, 0.0)) / (h[i] * h[i])
            } else {
                (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                    / (4.0 * h[i] * h[j])
            };
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let cov = invert3(hess).ok_or_else(|| Error::Linalg("singular observed information".into()))?;
    if (0..3).any(|i| !(cov[i][i] > 0.0)) {
        return Err(Error::Linalg("observed information is not positive definite".into()));
    }
    Ok(GevFit {
        alpha: m.mean + sd * theta[0],
        beta: sd * theta[1],
        xi: theta[2],
        alpha_err: sd * cov[0][0].sqrt(),
        beta_err: sd * cov[1][1].sqrt(),
        xi_err: cov[2][2].sqrt(),
        log_likelihood: -fbest - n as f64 * sd.ln(),
        count: n,
        evaluations,
    })
}

/// Ordinary least squares y = intercept + slope·x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return invalid_param("need at least 3 (x, y) pairs of equal length");
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateData("all abscissae are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = ssr / (nf - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        slope_err: (s2 / sxx).sqrt(),
        intercept_err: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 },
        residuals,
    })
}

/// value ≈ a₀ 2^{−L/b}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a0: f64,
    pub b: f64,
    pub a0_err: f64,
    pub b_err: f64,
    /// log₂ residuals in input order.
    pub residuals: Vec<f64>,
}

/// Least squares on log₂(value) = log₂(a₀) − L/b.
pub fn fit_exponential_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return invalid_param("need at least 3 points");
    }
    if points.iter().any(|&(_, v)| !(v > 0.0)) {
        return invalid_param("values must be positive");
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let fit = linear_fit(&x, &y)?;
    if !(fit.slope < 0.0) {
        return Err(Error::DegenerateData("values do not decrease with L".into()));
    }
    let a0 = fit.intercept.exp2();
    Ok(ScalingFit {
        a0,
        b: -1.0 / fit.slope,
        a0_err: a0 * std::f64::consts::LN_2 * fit.intercept_err,
        b_err: fit.slope_err / (fit.slope * fit.slope),
        residuals: fit.residuals,
    })
}
