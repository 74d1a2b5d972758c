//! Kicked field Ising Floquet operators and circular orthogonal ensemble samples.
//!
//! Basis states are indexed by integers whose most significant bit is site 0
//! (the first site of the chain). A bit value 0 is spin up, s = +1.

use faer::{c64, Mat};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::ops::{Deref, DerefMut};

use crate::error::{invalid_param, Error, Result};
use crate::rng::rng_from_seed;

/// Largest chain length for which dense matrices may be materialized.
pub const DENSE_MAX_L: usize = 14;

/// Largest chain length handled by the matrix-free kernels.
pub const MAX_L: usize = 30;

/// Parameters of one disorder realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub l: usize,
    pub j: f64,
    pub b: f64,
    pub h: Vec<f64>,
    pub seed: u64,
}

impl ChainParams {
    pub fn new(l: usize, j: f64, b: f64, h: Vec<f64>, seed: u64) -> Result<Self> {
        let p = ChainParams { l, j, b, h, seed };
        p.validate()?;
        Ok(p)
    }

    /// J = b = π/4 with standard normal fields drawn from `seed`.
    pub fn self_dual(l: usize, seed: u64) -> Result<Self> {
        let h = sample_disorder(l, seed)?;
        Self::new(l, FRAC_PI_4, FRAC_PI_4, h, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 || self.l > MAX_L {
            return invalid_param(format!("chain length {} outside [2, {MAX_L}]", self.l));
        }
        if self.h.len() != self.l {
            return invalid_param(format!("{} fields given for {} sites", self.h.len(), self.l));
        }
        if !self.j.is_finite() || !self.b.is_finite() || self.h.iter().any(|x| !x.is_finite()) {
            return invalid_param("non-finite coupling or field");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1usize << self.l
    }
}

/// Spin value (+1 or -1) of `site` in basis state `k` of an `l`-site chain.
#[inline]
pub fn spin(k: usize, site: usize, l: usize) -> f64 {
    if (k >> (l - 1 - site)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonal of H_z = J Σ s_i s_{i+1} + Σ h_i s_i with periodic boundary.
pub fn hz_diagonal(p: &ChainParams) -> Vec<f64> {
    let l = p.l;
    (0..p.dim())
        .map(|k| {
            let mut e = 0.0;
            for i in 0..l {
                let si = spin(k, i, l);
                e += p.j * si * spin(k, (i + 1) % l, l) + p.h[i] * si;
            }
            e
        })
        .collect()
}

/// Complex amplitudes in the σ^z product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<c64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<c64>) -> Result<Self> {
        if !amplitudes.len().is_power_of_two() || amplitudes.len() < 2 {
            return invalid_param(format!("state length {} is not a power of two", amplitudes.len()));
        }
        Ok(StateVector { amplitudes })
    }

    pub fn basis(l: usize, index: usize) -> Self {
        let mut a = vec![c64::new(0.0, 0.0); 1 << l];
        a[index] = c64::new(1.0, 0.0);
        StateVector { amplitudes: a }
    }

    /// Normalized complex Gaussian vector.
    pub fn random(l: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut a: Vec<c64> = (0..1usize << l)
            .map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = norm(&a);
        a.iter_mut().for_each(|z| *z /= n);
        StateVector { amplitudes: a }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Number of sites.
    pub fn sites(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }
}

impl Deref for StateVector {
    type Target = [c64];
    fn deref(&self) -> &[c64] {
        &self.amplitudes
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [c64] {
        &mut self.amplitudes
    }
}

pub(crate) fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A linear operator acting in place on vectors of a fixed dimension.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &mut [c64]);
}

/// Materialized unitary matrix.
#[derive(Debug, Clone)]
pub struct DenseUnitary {
    pub dim: usize,
    pub entries: Mat<c64>,
}

impl DenseUnitary {
    pub fn new(entries: Mat<c64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return invalid_param("matrix is not square");
        }
        Ok(DenseUnitary { dim: entries.nrows(), entries })
    }

    /// max |U†U − I|.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.entries.adjoint() * &self.entries;
        let mut e: f64 = 0.0;
        for j in 0..self.dim {
            for i in 0..self.dim {
                let d = if i == j { g[(i, j)] - 1.0 } else { g[(i, j)] };
                e = e.max(d.norm());
            }
        }
        e
    }

    /// max |U − U^T|.
    pub fn symmetry_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for j in 0..self.dim {
            for i in 0..j {
                e = e.max((self.entries[(i, j)] - self.entries[(j, i)]).norm());
            }
        }
        e
    }
}

impl Operator for DenseUnitary {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &mut [c64]) {
        let y = &self.entries * faer::ColRef::from_slice(x);
        x.copy_from_slice(y.try_as_col_major().unwrap().as_slice());
    }
}

/// Draws the longitudinal fields h_i ~ N(0, 1).
pub fn sample_disorder(l: usize, seed: u64) -> Result<Vec<f64>> {
    if l < 2 {
        return invalid_param(format!("chain length {l} < 2"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..l).map(|_| rng.sample(StandardNormal)).collect())
}

fn fwht_raw(x: &mut [c64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (u, v) in a.iter_mut().zip(b.iter_mut()) {
                let s = *u + *v;
                *v = *u - *v;
                *u = s;
            }
        }
        h *= 2;
    }
}

/// Orthonormal Walsh–Hadamard transform H^{⊗L}.
pub fn fwht_inplace(x: &mut [c64]) -> Result<()> {
    if x.len() < 2 || !x.len().is_power_of_two() {
        return invalid_param(format!("length {} is not a power of two", x.len()));
    }
    fwht_raw(x);
    let s = 1.0 / (x.len() as f64).sqrt();
    x.iter_mut().for_each(|z| *z *= s);
    Ok(())
}

/// Matrix-free U = e^{−iH_z} e^{−iH_x} with H_x = b Σ σ^x.
#[derive(Debug, Clone)]
pub struct FloquetOperator {
    l: usize,
    // e^{−ib Σ s} in the Hadamard frame, times the 2^{−L} of two raw transforms.
    kick: Vec<c64>,
    zz: Vec<c64>,
}

impl FloquetOperator {
    pub fn new(p: &ChainParams) -> Result<Self> {
        p.validate()?;
        let l = p.l;
        let scale = 1.0 / p.dim() as f64;
        let kick = (0..p.dim())
            .map(|k| {
                let m = l as f64 - 2.0 * k.count_ones() as f64;
                c64::from_polar(scale, -p.b * m)
            })
            .collect();
        let zz = hz_diagonal(p).into_iter().map(|e| c64::from_polar(1.0, -e)).collect();
        Ok(FloquetOperator { l, kick, zz })
    }

    pub fn sites(&self) -> usize {
        self.l
    }

    /// Diagonal of e^{−iH_z}.
    pub fn zz_phases(&self) -> &[c64] {
        &self.zz
    }

    pub fn apply_inverse(&self, x: &mut [c64]) {
        for (z, d) in x.iter_mut().zip(&self.zz) {
            *z *= d.conj();
        }
        fwht_raw(x);
        for (z, d) in x.iter_mut().zip(&self.kick) {
            *z *= d.conj();
        }
        fwht_raw(x);
    }
}

impl Operator for FloquetOperator {
    fn dim(&self) -> usize {
        self.zz.len()
    }

    fn apply(&self, x: &mut [c64]) {
        fwht_raw(x);
        for (z, d) in x.iter_mut().zip(&self.kick) {
            *z *= d;
        }
        fwht_raw(x);
        for (z, d) in x.iter_mut().zip(&self.zz) {
            *z *= d;
        }
    }
}

/// Applies one Floquet period to `state`.
pub fn apply_floquet(state: &mut [c64], p: &ChainParams) -> Result<()> {
    if state.len() != p.dim() {
        return invalid_param(format!("state dimension {} != 2^{}", state.len(), p.l));
    }
    FloquetOperator::new(p)?.apply(state);
    Ok(())
}

/// e^{−iH_x} as a dense matrix: entry (k, j) = cos(b)^{L−d} (−i sin b)^d, d = popcount(k ⊕ j).
fn kick_matrix_entries(p: &ChainParams) -> Vec<c64> {
    let (s, c) = p.b.sin_cos();
    (0..=p.l)
        .map(|d| c64::new(c.powi((p.l - d) as i32), 0.0) * c64::new(0.0, -s).powi(d as i32))
        .collect()
}

fn check_dense(p: &ChainParams) -> Result<()> {
    p.validate()?;
    if p.l > DENSE_MAX_L {
        return Err(Error::ResourceLimit(format!(
            "dense matrices limited to L <= {DENSE_MAX_L}, got {}",
            p.l
        )));
    }
    Ok(())
}

/// Dense Floquet matrix; column j equals the matrix-free image of e_j.
pub fn build_dense_unitary(p: &ChainParams) -> Result<DenseUnitary> {
    check_dense(p)?;
    let op = FloquetOperator::new(p)?;
    let table = kick_matrix_entries(p);
    let zz = op.zz_phases();
    let n = p.dim();
    let m = Mat::from_fn(n, n, |k, j| zz[k] * table[(k ^ j).count_ones() as usize]);
    DenseUnitary::new(m)
}

/// Complex symmetric form U_s = e^{−iH_z/2} e^{−iH_x} e^{−iH_z/2} = A^{−1} U A with
/// A = e^{−iH_z/2}. Returns U_s and the diagonal of A; eigenvectors of U are A w.
pub fn symmetrized_dense(p: &ChainParams) -> Result<(DenseUnitary, Vec<c64>)> {
    check_dense(p)?;
    let table = kick_matrix_entries(p);
    let half: Vec<c64> = hz_diagonal(p).into_iter().map(|e| c64::from_polar(1.0, -0.5 * e)).collect();
    let n = p.dim();
    let m = Mat::from_fn(n, n, |k, j| half[k] * table[(k ^ j).count_ones() as usize] * half[j]);
    Ok((DenseUnitary::new(m)?, half))
}

/// Haar unitary from the QR decomposition of a complex Ginibre matrix.
pub fn sample_haar(dim: usize, seed: u64) -> Result<Mat<c64>> {
    if dim < 2 {
        return invalid_param(format!("dimension {dim} < 2"));
    }
    let mut rng = rng_from_seed(seed);
    let mut g = Mat::<c64>::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            g[(i, j)] = c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
    }
    let qr = g.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    Ok(q)
}

/// COE sample W^T W with W Haar distributed.
pub fn sample_coe(dim: usize, seed: u64) -> Result<DenseUnitary> {
    let w = sample_haar(dim, seed)?;
    let mut u = w.transpose() * &w;
    for j in 0..dim {
        for i in 0..j {
            let s = (u[(i, j)] + u[(j, i)]) * 0.5;
            u[(i, j)] = s;
            u[(j, i)] = s;
        }
    }
    DenseUnitary::new(u)
}
