//! Wishart references: dense and tridiagonal Laguerre samplers, the
//! Marchenko–Pastur density and Tracy–Widom centering.

use faer::{ColRef, Mat};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid_param, Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Unit-trace Wishart spectrum, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WishartSample {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
}

/// Low-order moments of the β = 1 Tracy–Widom law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwReference {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

pub const TW_GOE: TwReference = TwReference { mean: -1.207, variance: 1.608, skewness: 0.293 };

impl Default for TwReference {
    fn default() -> Self {
        TW_GOE
    }
}

impl TwReference {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return invalid_param(format!("dimension {d} < 2"));
    }
    Ok(())
}

fn gaussian_matrix(d: usize, rng: &mut Rng) -> Mat<f64> {
    let mut g = Mat::<f64>::zeros(d, d);
    for j in 0..d {
        for x in g.col_as_slice_mut(j) {
            *x = rng.sample(StandardNormal);
        }
    }
    g
}

/// Eigenvalues of G G^T / Tr(G G^T) for a D×D standard Gaussian G, computed
/// as squared singular values of G.
pub fn sample_wishart_unit_trace(d: usize, seed: u64) -> Result<WishartSample> {
    check_dim(d)?;
    let mut rng = rng_from_seed(seed);
    let g = gaussian_matrix(d, &mut rng);
    let sv = g.singular_values().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let mut ev: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let tr: f64 = ev.iter().sum();
    ev.iter_mut().for_each(|x| *x /= tr);
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(WishartSample { dim: d, eigenvalues: ev })
}

/// Largest eigenvalue of the unit-trace Wishart matrix for the same draw as
/// [`sample_wishart_unit_trace`] with the same seed. Large dimensions use
/// Lanczos on x ↦ G(G^T x).
pub fn sample_wishart_lambda_max(d: usize, seed: u64) -> Result<f64> {
    check_dim(d)?;
    if d <= 128 {
        return Ok(sample_wishart_unit_trace(d, seed)?.eigenvalues[0]);
    }
    let mut rng = rng_from_seed(seed);
    let g = gaussian_matrix(d, &mut rng);
    let tr: f64 = (0..d).map(|j| g.col_as_slice(j).iter().map(|x| x * x).sum::<f64>()).sum();
    let mut v0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v0);
    let top = lanczos_top(|x| {
        let y = g.transpose() * ColRef::from_slice(x);
        let z = &g * &y;
        z.iter().copied().collect()
    }, v0, d)?;
    Ok(top / tr)
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    x.iter_mut().for_each(|a| *a /= n);
    n
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// Lanczos with full reorthogonalization.
fn lanczos_top(op: impl Fn(&[f64]) -> Vec<f64>, v0: Vec<f64>, n: usize) -> Result<f64> {
    let mut basis = vec![v0];
    let mut t = SymTridiagonal { diag: vec![], off: vec![] };
    let mut prev = f64::NAN;
    let mut stable = 0;
    for k in 0..n {
        let mut w = op(&basis[k]);
        let alpha: f64 = w.iter().zip(&basis[k]).map(|(a, b)| a * b).sum();
        t.diag.push(alpha);
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let theta = t.top_eigenvalue_bisect();
        if (theta - prev).abs() <= 1e-14 * theta.abs() {
            stable += 1;
            if stable >= 3 {
                return Ok(theta);
            }
        } else {
            stable = 0;
        }
        prev = theta;
        let beta = normalize(&mut w);
        if beta <= 1e-13 * theta.abs() || k + 1 == n {
            return Ok(theta);
        }
        t.off.push(beta);
        basis.push(w);
    }
    Err(Error::NoConvergence { iterations: n, estimate: prev })
}

/// Marchenko–Pastur density of ẽ = Dλ for square Wishart matrices.
pub fn mp_density(e: f64) -> f64 {
    if e <= 0.0 || e > 4.0 {
        return 0.0;
    }
    ((4.0 - e) / e).sqrt() / (2.0 * PI)
}

/// (μ_W, σ_W) for subsystem dimension D.
pub fn centering_constants(d: usize) -> Result<(f64, f64)> {
    check_dim(d)?;
    let (a, b) = ((d as f64 - 1.0).sqrt(), (d as f64).sqrt());
    let d2 = (d * d) as f64;
    let mu = (a + b).powi(2) / d2;
    let sigma = (a + b) * (1.0 / b + 1.0 / a).cbrt() / d2;
    Ok((mu, sigma))
}

/// (λ_max − μ_W)/σ_W.
pub fn rescale_lambda_max(lmax: f64, d: usize) -> Result<f64> {
    if !(lmax > 0.0 && lmax <= 1.0 + 1e-12) {
        return invalid_param(format!("largest Schmidt coefficient {lmax} outside (0, 1]"));
    }
    let (mu, sigma) = centering_constants(d)?;
    Ok((lmax - mu) / sigma)
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// off[i] couples rows i and i + 1.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return invalid_param("off-diagonal must have one entry fewer than the diagonal");
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    /// Number of eigenvalues of the leading k×k block below x.
    fn count_below(&self, k: usize, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..k {
            let b2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - b2 / d;
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Number of eigenvalues below x.
    pub fn sturm_count(&self, x: f64) -> usize {
        self.count_below(self.len(), x)
    }

    fn gershgorin(&self, k: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..k {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < k {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Largest eigenvalue of the leading k×k block by bisection.
    fn block_top(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin(k);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(k, mid) == k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn top_eigenvalue_bisect(&self) -> f64 {
        self.block_top(self.len())
    }
}

/// Dumitriu–Edelman β = 1 Laguerre tridiagonal model of G G^T for a D×D real
/// Gaussian G: T = B B^T with B lower bidiagonal, diagonal χ_{D}, …, χ_1 and
/// subdiagonal χ_{D−1}, …, χ_1.
pub fn laguerre_tridiagonal(d: usize, seed: u64) -> Result<SymTridiagonal> {
    check_dim(d)?;
    let mut rng = rng_from_seed(seed);
    let mut chi2 = |k: usize| -> f64 { ChiSquared::new(k as f64).unwrap().sample(&mut rng) };
    let a2: Vec<f64> = (0..d).map(|i| chi2(d - i)).collect();
    let b2: Vec<f64> = (0..d - 1).map(|i| chi2(d - 1 - i)).collect();
    let diag = (0..d).map(|i| a2[i] + if i > 0 { b2[i - 1] } else { 0.0 }).collect();
    let off = (0..d - 1).map(|i| (a2[i] * b2[i]).sqrt()).collect();
    SymTridiagonal::new(diag, off)
}

/// Largest eigenvalue of T, optionally divided by Tr(T).
///
/// Lanczos started from e_1 on a tridiagonal matrix reproduces its leading
/// principal blocks, so the k-step Ritz value is the top eigenvalue of the
/// leading k×k block. k doubles until a Sturm count on the full matrix shows no
/// eigenvalue above θ_k(1 + 1e-10).
pub fn largest_eig_tridiag(t: &SymTridiagonal, trace_normalize: bool) -> Result<f64> {
    let n = t.len();
    if n == 0 || t.off.len() + 1 != n {
        return invalid_param("malformed tridiagonal matrix");
    }
    let max_iter = 10 * n;
    let mut k = n.min(32);
    let mut iterations = 0;
    let top = loop {
        let theta = t.block_top(k);
        iterations += k;
        let bound = theta + 1e-10 * theta.abs().max(f64::MIN_POSITIVE);
        if k == n || t.sturm_count(bound) == n {
            break theta;
        }
        if iterations > max_iter {
            return Err(Error::NoConvergence { iterations, estimate: theta });
        }
        k = (2 * k).min(n);
    };
    if trace_normalize {
        Ok(top / t.trace())
    } else {
        Ok(top)
    }
}

/// Unit-trace λ_max from one Laguerre tridiagonal draw.
pub fn sample_tridiagonal_lambda_max(d: usize, seed: u64) -> Result<f64> {
    largest_eig_tridiag(&laguerre_tridiagonal(d, seed)?, true)
}
