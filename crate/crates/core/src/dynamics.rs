//! Matrix elements of σ^z in eigenstates, spin autocorrelations and OTOCs.
//!
//! Sites are 1-based here, matching the usual chain labelling: site 1 is the
//! most significant bit of the basis index and site L the least significant.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::model::{spin, ChainParams, DenseUnitary, FloquetOperator, Operator, StateVector};
use crate::rng::derive_seed;
use crate::spectral::{residue, EigenpairSet};

/// Largest L for which the OTOC is traced exactly.
pub const OTOC_DENSE_MAX_L: usize = 12;

/// Eigenstates whose residue exceeds this are rejected by [`autocorrelation`].
pub const EIGENSTATE_TOLERANCE: f64 = 1e-10;

/// Chain-center site: L/2 for even L, (L+1)/2 for odd L.
pub fn center_site(l: usize) -> usize {
    l.div_ceil(2)
}

fn check_site(site: usize, l: usize) -> Result<()> {
    if site == 0 || site > l {
        return invalid_param(format!("site {site} outside 1..={l}"));
    }
    Ok(())
}

fn sites_of(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return invalid_param(format!("dimension {dim} is not a power of two"));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Diagonal of σ^z_site in the computational basis.
pub fn sigma_z(site: usize, l: usize) -> Result<Vec<f64>> {
    check_site(site, l)?;
    Ok((0..1usize << l).map(|k| spin(k, site - 1, l)).collect())
}

/// ⟨n|σ^z_site|m⟩ for all pairs in `eigs`.
pub fn observable_matrix(eigs: &EigenpairSet, site: usize) -> Result<Mat<c64>> {
    let s = sigma_z(site, sites_of(eigs.dim())?)?;
    let v = &eigs.vectors;
    let sv = Mat::from_fn(v.nrows(), v.ncols(), |k, j| v[(k, j)] * s[k]);
    Ok(v.adjoint() * sv)
}

/// Diagonal elements and off-diagonal magnitudes of σ^z_site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableElements {
    /// Real parts of the diagonal, in the phase order of the input set.
    pub diagonal: Vec<f64>,
    /// |⟨n|σ^z|m⟩| for n < m, row-major over the upper triangle.
    pub offdiag: Vec<f64>,
}

pub fn observable_elements(eigs: &EigenpairSet, site: usize) -> Result<ObservableElements> {
    let m = observable_matrix(eigs, site)?;
    let n = m.nrows();
    let diagonal = (0..n).map(|i| m[(i, i)].re).collect();
    let mut offdiag = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            offdiag.push(m[(i, j)].norm());
        }
    }
    Ok(ObservableElements { diagonal, offdiag })
}

/// δ_n = |O_{n+1} − O_n| over consecutive entries.
pub fn diagonal_gaps(diag: &[f64]) -> Result<Vec<f64>> {
    if diag.len() < 2 {
        return invalid_param("need at least two diagonal elements");
    }
    Ok(diag.windows(2).map(|w| (w[1] - w[0]).abs()).collect())
}

/// (mean δ_n, max δ_n).
pub fn diagonal_gap_stats(diag: &[f64]) -> Result<(f64, f64)> {
    let g = diagonal_gaps(diag)?;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let max = g.iter().cloned().fold(0.0, f64::max);
    Ok((mean, max))
}

/// Root-mean-square of the off-diagonal magnitudes; 0 for an empty slice.
pub fn offdiag_fluctuation(offdiag: &[f64]) -> f64 {
    if offdiag.is_empty() {
        return 0.0;
    }
    (offdiag.iter().map(|x| x * x).sum::<f64>() / offdiag.len() as f64).sqrt()
}

/// ETH statistics of σ^z at one site for one eigenpair window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EthRecord {
    pub l: usize,
    pub site: usize,
    pub phases: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub offdiag_rms: f64,
    /// Window-mean phase φ̄.
    pub mean_phase: f64,
}

impl EthRecord {
    /// 2^L, the density of states the fluctuations are compared against.
    pub fn density_of_states(&self) -> f64 {
        (self.l as f64).exp2()
    }
}

/// ETH record for the chain-center site of the window `eigs`.
pub fn eth_record(eigs: &EigenpairSet) -> Result<EthRecord> {
    let l = sites_of(eigs.dim())?;
    eth_record_at(eigs, center_site(l))
}

pub fn eth_record_at(eigs: &EigenpairSet, site: usize) -> Result<EthRecord> {
    let l = sites_of(eigs.dim())?;
    let el = observable_elements(eigs, site)?;
    let gaps = diagonal_gaps(&el.diagonal)?;
    let (mean_gap, max_gap) = diagonal_gap_stats(&el.diagonal)?;
    let mean_phase = eigs.phases.iter().sum::<f64>() / eigs.len() as f64;
    Ok(EthRecord {
        l,
        site,
        phases: eigs.phases.clone(),
        offdiag_rms: offdiag_fluctuation(&el.offdiag),
        diagonal: el.diagonal,
        gaps,
        mean_gap,
        max_gap,
        mean_phase,
    })
}

/// Values at integer times 0..=t_max.
///
/// OTOC values are real and stored with zero imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub times: Vec<usize>,
    pub values: Vec<c64>,
    /// Number of realizations (or random vectors) averaged into `values`.
    pub ensemble: usize,
}

impl CorrelationSeries {
    fn new(values: Vec<c64>, ensemble: usize) -> Self {
        CorrelationSeries { times: (0..values.len()).collect(), values, ensemble }
    }

    pub fn t_max(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }
}

/// Pointwise mean and standard error of `f` over a set of equal-length series.
pub fn ensemble_average(
    series: &[CorrelationSeries],
    f: impl Fn(c64) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = series.first() else {
        return invalid_param("no series to average");
    };
    let n = first.values.len();
    if series.iter().any(|s| s.values.len() != n) {
        return invalid_param("series lengths differ");
    }
    let k = series.len() as f64;
    let mut mean = vec![0.0; n];
    let mut err = vec![0.0; n];
    for t in 0..n {
        let xs: Vec<f64> = series.iter().map(|s| f(s.values[t])).collect();
        let m = xs.iter().sum::<f64>() / k;
        mean[t] = m;
        if series.len() > 1 {
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
            err[t] = (var / k).sqrt();
        }
    }
    Ok((mean, err))
}

fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// C(t) = ⟨ψ₀|σ^z_L(t) σ^z_L(0)|ψ₀⟩ for an eigenstate U ψ₀ = e^{iφ} ψ₀, evolved
/// matrix-free. The state is normalized before use.
pub fn autocorrelation(
    p: &ChainParams,
    phase: f64,
    eigenstate: &[c64],
    t_max: usize,
) -> Result<CorrelationSeries> {
    autocorrelation_at(p, phase, eigenstate, p.l, t_max)
}

pub fn autocorrelation_at(
    p: &ChainParams,
    phase: f64,
    eigenstate: &[c64],
    site: usize,
    t_max: usize,
) -> Result<CorrelationSeries> {
    let op = FloquetOperator::new(p)?;
    if eigenstate.len() != op.dim() {
        return invalid_param(format!("state length {} != 2^{}", eigenstate.len(), p.l));
    }
    let s = sigma_z(site, p.l)?;
    let n = crate::model::norm(eigenstate);
    if !(n > 0.0) {
        return Err(Error::InvalidInput("eigenstate has zero norm".into()));
    }
    let psi: Vec<c64> = eigenstate.iter().map(|z| z / n).collect();
    let r = residue(&op, &psi, phase);
    if !(r < EIGENSTATE_TOLERANCE) {
        return Err(Error::InvalidInput(format!("not an eigenstate: residue {r:e}")));
    }
    let w0: Vec<c64> = psi.iter().zip(&s).map(|(z, x)| z * x).collect();
    let mut w = w0.clone();
    let mut values = Vec::with_capacity(t_max + 1);
    values.push(inner(&w0, &w));
    for t in 1..=t_max {
        op.apply(&mut w);
        values.push(c64::from_polar(1.0, -phase * t as f64) * inner(&w0, &w));
    }
    Ok(CorrelationSeries::new(values, 1))
}

/// Spectral evaluation of the autocorrelation of eigenstate `index` of a full
/// eigenbasis: Σ_m |⟨m|σ^z|ψ₀⟩|² e^{i(φ_m − φ₀)t}.
pub fn autocorrelation_spectral(
    eigs: &EigenpairSet,
    index: usize,
    site: usize,
    t_max: usize,
) -> Result<CorrelationSeries> {
    if index >= eigs.len() {
        return invalid_param(format!("eigenpair index {index} out of range"));
    }
    if eigs.len() != eigs.dim() {
        return invalid_param("spectral evaluation needs the full eigenbasis");
    }
    let l = sites_of(eigs.dim())?;
    let s = sigma_z(site, l)?;
    let psi = eigs.vector(index);
    let w: Vec<c64> = psi.iter().zip(&s).map(|(z, x)| z * x).collect();
    let weights: Vec<f64> = (0..eigs.len()).map(|m| inner(eigs.vector(m), &w).norm_sqr()).collect();
    let phi0 = eigs.phases[index];
    let values = (0..=t_max)
        .map(|t| {
            weights
                .iter()
                .zip(&eigs.phases)
                .map(|(&wt, &ph)| c64::from_polar(wt, (ph - phi0) * t as f64))
                .sum()
        })
        .collect();
    Ok(CorrelationSeries::new(values, 1))
}

/// How the infinite-temperature expectation in [`otoc`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TraceEstimator {
    /// Exact Tr(·)/2^L by Heisenberg evolution of the full operator.
    Full,
    /// Average of ⟨r|·|r⟩ over normalized complex Gaussian vectors.
    Stochastic { vectors: usize, seed: u64 },
}

/// One Heisenberg step O ← U† O U on a dense operator.
trait Heisenberg {
    fn step(&self, o: &mut Mat<c64>);
}

impl Heisenberg for FloquetOperator {
    fn step(&self, o: &mut Mat<c64>) {
        // U† O U = (U† (U† O)†)†, so only U† acts, column by column.
        for j in 0..o.ncols() {
            self.apply_inverse(o.col_as_slice_mut(j));
        }
        let mut y = o.adjoint().to_owned();
        for j in 0..y.ncols() {
            self.apply_inverse(y.col_as_slice_mut(j));
        }
        *o = y.adjoint().to_owned();
    }
}

impl Heisenberg for DenseUnitary {
    fn step(&self, o: &mut Mat<c64>) {
        let ou = &*o * &self.entries;
        *o = self.entries.adjoint() * ou;
    }
}

// 2 − (2/D) Σ_ij s_i s_j |O(t)_ij|², the exact trace of |[O(t), O]|² / D.
fn otoc_full(h: &impl Heisenberg, s: &[f64], t_max: usize) -> Vec<c64> {
    let d = s.len();
    let mut o = Mat::from_fn(d, d, |i, j| if i == j { c64::new(s[i], 0.0) } else { c64::new(0.0, 0.0) });
    let mut values = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            h.step(&mut o);
        }
        let mut acc = 0.0;
        for j in 0..d {
            let col = o.col_as_slice(j);
            acc += s[j] * col.iter().zip(s).map(|(z, si)| si * z.norm_sqr()).sum::<f64>();
        }
        values.push(c64::new(2.0 - 2.0 * acc / d as f64, 0.0));
    }
    values
}

/// O(t) x = U^{−t} O U^t x.
fn heisenberg_apply(op: &FloquetOperator, s: &[f64], t: usize, x: &mut [c64]) {
    for _ in 0..t {
        op.apply(x);
    }
    x.iter_mut().zip(s).for_each(|(z, si)| *z *= si);
    for _ in 0..t {
        op.apply_inverse(x);
    }
}

fn otoc_stochastic(op: &FloquetOperator, s: &[f64], t_max: usize, vectors: usize, seed: u64) -> Vec<c64> {
    let l = op.sites();
    let mut acc = vec![0.0; t_max + 1];
    for k in 0..vectors {
        let r = StateVector::random(l, derive_seed(seed, k as u64));
        for (t, a) in acc.iter_mut().enumerate() {
            let mut x: Vec<c64> = r.iter().zip(s).map(|(z, si)| z * si).collect();
            heisenberg_apply(op, s, t, &mut x);
            let mut y = r.amplitudes.clone();
            heisenberg_apply(op, s, t, &mut y);
            y.iter_mut().zip(s).for_each(|(z, si)| *z *= si);
            *a += x.iter().zip(&y).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>();
        }
    }
    acc.into_iter().map(|a| c64::new(a / vectors as f64, 0.0)).collect()
}

/// Infinite-temperature OTOC ⟨|[O(t), O]|²⟩ with O = σ^z at the chain center.
pub fn otoc(p: &ChainParams, t_max: usize, trace: TraceEstimator) -> Result<CorrelationSeries> {
    let op = FloquetOperator::new(p)?;
    let s = sigma_z(center_site(p.l), p.l)?;
    match trace {
        TraceEstimator::Full => {
            if p.l > OTOC_DENSE_MAX_L {
                return Err(Error::ResourceLimit(format!(
                    "exact OTOC trace limited to L <= {OTOC_DENSE_MAX_L}; use the stochastic estimator"
                )));
            }
            Ok(CorrelationSeries::new(otoc_full(&op, &s, t_max), 1))
        }
        TraceEstimator::Stochastic { vectors, seed } => {
            if vectors == 0 {
                return invalid_param("stochastic trace needs at least one vector");
            }
            Ok(CorrelationSeries::new(otoc_stochastic(&op, &s, t_max, vectors, seed), vectors))
        }
    }
}

/// Exact OTOC for a dense unitary (e.g. a COE sample) on `l` sites.
pub fn otoc_dense(u: &DenseUnitary, t_max: usize) -> Result<CorrelationSeries> {
    let l = sites_of(u.dim)?;
    if l > OTOC_DENSE_MAX_L {
        return Err(Error::ResourceLimit(format!("exact OTOC trace limited to L <= {OTOC_DENSE_MAX_L}")));
    }
    let s = sigma_z(center_site(l), l)?;
    Ok(CorrelationSeries::new(otoc_full(u, &s, t_max), 1))
}
