//! Eigenpairs of unitaries: dense diagonalization and polynomially filtered Arnoldi.

use faer::{c64, ColRef, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid_param, Error, Result};
use crate::model::{
    hz_diagonal, norm, ChainParams, DenseUnitary, FloquetOperator, Operator, StateVector,
    DENSE_MAX_L,
};
use crate::rng::derive_seed;

/// Eigenpairs near a target phase, sorted by ascending phase.
#[derive(Debug, Clone)]
pub struct EigenpairSet {
    pub phases: Vec<f64>,
    /// Unit-norm eigenvectors as columns.
    pub vectors: Mat<c64>,
    pub residues: Vec<f64>,
    pub target_phase: f64,
    /// Set when fewer pairs than requested passed the residue threshold.
    pub incomplete: bool,
}

impl EigenpairSet {
    fn from_unsorted(
        phases: Vec<f64>,
        vectors: Mat<c64>,
        residues: Vec<f64>,
        target_phase: f64,
        incomplete: bool,
    ) -> Self {
        let mut idx: Vec<usize> = (0..phases.len()).collect();
        idx.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
        let vectors = Mat::from_fn(vectors.nrows(), idx.len(), |i, j| vectors[(i, idx[j])]);
        EigenpairSet {
            phases: idx.iter().map(|&i| phases[i]).collect(),
            vectors,
            residues: idx.iter().map(|&i| residues[i]).collect(),
            target_phase,
            incomplete,
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vector(&self, i: usize) -> &[c64] {
        self.vectors.col_as_slice(i)
    }

    pub fn max_residue(&self) -> f64 {
        self.residues.iter().cloned().fold(0.0, f64::max)
    }

    /// The `count` pairs closest in phase to `target`, re-sorted by phase.
    pub fn nearest(&self, target: f64, count: usize) -> EigenpairSet {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            phase_distance(self.phases[a], target).total_cmp(&phase_distance(self.phases[b], target))
        });
        idx.truncate(count);
        let vectors = Mat::from_fn(self.dim(), idx.len(), |i, j| self.vectors[(i, idx[j])]);
        EigenpairSet::from_unsorted(
            idx.iter().map(|&i| self.phases[i]).collect(),
            vectors,
            idx.iter().map(|&i| self.residues[i]).collect(),
            target,
            self.incomplete || idx.len() < count,
        )
    }
}

/// Maps a phase into [−π, π).
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Distance between two phases on the circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Parameters of the filtered Arnoldi iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kappa: usize,
    pub krylov_dim: usize,
    pub target_phase: f64,
    pub residue_threshold: f64,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kappa < 1 {
            return invalid_param("filter order must be at least 1");
        }
        if self.krylov_dim < 2 {
            return invalid_param("Krylov dimension must be at least 2");
        }
        if !(self.residue_threshold > 0.0) || !self.target_phase.is_finite() {
            return invalid_param("residue threshold must be positive and the target finite");
        }
        Ok(())
    }
}

/// κ = ⌊0.8·2^{L/2}⌋, D_K = ⌊2^{L/2+2}⌋, target π/2, threshold 1e-10.
pub fn default_filter_spec(l: usize) -> FilterSpec {
    let half = l as f64 / 2.0;
    FilterSpec {
        kappa: ((0.8 * half.exp2()).floor() as usize).max(1),
        krylov_dim: ((half + 2.0).exp2().floor() as usize).max(2),
        target_phase: FRAC_PI_2,
        residue_threshold: 1e-10,
    }
}

/// ‖U v − e^{iφ} v‖.
pub fn residue(op: &impl Operator, v: &[c64], phase: f64) -> f64 {
    let mut w = v.to_vec();
    op.apply(&mut w);
    let z = c64::from_polar(1.0, phase);
    w.iter().zip(v).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt()
}

/// (1/(κ+1)) Σ_{m=0}^{κ} e^{−imφ} U^m x, in place.
pub fn filtered_apply_inplace(x: &mut [c64], op: &impl Operator, kappa: usize, phase: f64) {
    let mut y = x.to_vec();
    for m in 1..=kappa {
        op.apply(&mut y);
        let w = c64::from_polar(1.0, -(m as f64) * phase);
        for (a, b) in x.iter_mut().zip(&y) {
            *a += w * b;
        }
    }
    let s = 1.0 / (kappa as f64 + 1.0);
    x.iter_mut().for_each(|z| *z *= s);
}

pub fn filtered_apply(state: &StateVector, op: &impl Operator, spec: &FilterSpec) -> StateVector {
    let mut out = state.clone();
    filtered_apply_inplace(&mut out, op, spec.kappa, spec.target_phase);
    out
}

/// |g(e^{iφ})| of the normalized filter for an eigenphase offset δ = φ − target.
pub fn filter_response(kappa: usize, delta: f64) -> f64 {
    let n = kappa as f64 + 1.0;
    let s = (delta / 2.0).sin();
    if s.abs() < 1e-12 {
        return 1.0;
    }
    ((n * delta / 2.0).sin() / (n * s)).abs()
}

/// Output of [`arnoldi`].
#[derive(Debug, Clone)]
pub struct ArnoldiResult {
    /// Orthonormal Krylov basis Q, one column per step.
    pub basis: Mat<c64>,
    /// Square upper Hessenberg H = Q† Op Q.
    pub hessenberg: Mat<c64>,
    /// Norm of the residual vector after the last step.
    pub residual_norm: f64,
    pub breakdown: bool,
}

/// Arnoldi iteration with classical Gram–Schmidt; a second pass is made when
/// `reorth` is set. Breakdown is declared when the new direction has norm
/// below 1e-14 relative to Op q_j.
pub fn arnoldi(
    mut op: impl FnMut(&mut [c64]),
    dim: usize,
    krylov_dim: usize,
    start: &[c64],
    reorth: bool,
) -> Result<ArnoldiResult> {
    if start.len() != dim {
        return invalid_param(format!("start vector length {} != {dim}", start.len()));
    }
    let n0 = norm(start);
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("start vector norm {n0} is not 1")));
    }
    let kmax = krylov_dim.min(dim).max(1);
    let mut q = Mat::<c64>::zeros(dim, kmax + 1);
    let mut h = Mat::<c64>::zeros(kmax + 1, kmax);
    q.col_as_slice_mut(0).copy_from_slice(start);
    let mut k = kmax;
    let mut beta = 0.0;
    let mut breakdown = false;
    for j in 0..kmax {
        let mut w = q.col_as_slice(j).to_vec();
        op(&mut w);
        let wn = norm(&w);
        let passes = if reorth { 2 } else { 1 };
        for _ in 0..passes {
            let qj = q.as_ref().subcols(0, j + 1);
            let c = qj.adjoint() * ColRef::from_slice(&w);
            let corr = qj * &c;
            for (a, b) in w.iter_mut().zip(corr.iter()) {
                *a -= b;
            }
            for i in 0..=j {
                h[(i, j)] += c[i];
            }
        }
        beta = norm(&w);
        h[(j + 1, j)] = c64::new(beta, 0.0);
        if beta <= 1e-14 * wn.max(f64::MIN_POSITIVE) {
            k = j + 1;
            breakdown = true;
            break;
        }
        let inv = 1.0 / beta;
        for (a, b) in q.col_as_slice_mut(j + 1).iter_mut().zip(&w) {
            *a = b * inv;
        }
    }
    Ok(ArnoldiResult {
        basis: q.as_ref().subcols(0, k).to_owned(),
        hessenberg: h.as_ref().submatrix(0, 0, k, k).to_owned(),
        residual_norm: beta,
        breakdown,
    })
}

/// Filtered Arnoldi eigenpairs of the Floquet operator of `p`.
pub fn polfed(p: &ChainParams, spec: &FilterSpec, count: usize) -> Result<EigenpairSet> {
    let op = FloquetOperator::new(p)?;
    polfed_operator(&op, spec, count, derive_seed(p.seed, 0x5eed_a5a5))
}

/// Filtered Arnoldi for any unitary operator; `seed` fixes the start vector.
pub fn polfed_operator(
    op: &impl Operator,
    spec: &FilterSpec,
    count: usize,
    seed: u64,
) -> Result<EigenpairSet> {
    spec.validate()?;
    let dim = op.dim();
    let kdim = spec.krylov_dim.min(dim);
    if count > kdim / 2 {
        return invalid_param(format!("requested {count} pairs but at most {} available", kdim / 2));
    }
    let l = dim.trailing_zeros() as usize;
    let start = StateVector::random(l, seed);
    let arn = arnoldi(
        |x| filtered_apply_inplace(x, op, spec.kappa, spec.target_phase),
        dim,
        kdim,
        &start,
        true,
    )?;
    let k = arn.basis.ncols();
    let evd = arn.hessenberg.eigen().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let theta = evd.S().column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()));
    order.truncate((k / 2).max(1));
    let s = Mat::from_fn(k, order.len(), |i, j| evd.U()[(i, order[j])]);
    let y = &arn.basis * &s;

    let mut phases = Vec::new();
    let mut residues = Vec::new();
    let mut keep = Vec::new();
    for j in 0..y.ncols() {
        let mut v = y.col_as_slice(j).to_vec();
        let nv = norm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        let mut uv = v.clone();
        op.apply(&mut uv);
        let rq: c64 = v.iter().zip(&uv).map(|(a, b)| a.conj() * b).sum();
        let phi = wrap_phase(rq.arg());
        let z = c64::from_polar(1.0, phi);
        let r = uv.iter().zip(&v).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt();
        if r <= spec.residue_threshold {
            phases.push(phi);
            residues.push(r);
            keep.push(v);
        }
    }
    let vectors = Mat::from_fn(dim, keep.len(), |i, j| keep[j][i]);
    let all = EigenpairSet::from_unsorted(phases, vectors, residues, spec.target_phase, false);
    let out = all.nearest(spec.target_phase, count);
    Ok(out)
}

/// Below this residue a dense eigenpair is accepted without refinement.
const REFINE_TOL: f64 = 1e-13;

/// Columns per Rayleigh–Ritz block in the dense refinement sweeps.
const REFINE_BLOCK: usize = 48;

/// Rotates columns a..b of V (and of RV, SV) onto joint eigenvectors of the
/// projected pair (V^T R V, V^T S V).
fn rayleigh_ritz_block(v: &mut Mat<f64>, rv: &mut Mat<f64>, sv: &mut Mat<f64>, a: usize, b: usize) -> Result<()> {
    let len = b - a;
    let vc = v.as_ref().subcols(a, len);
    let mut pr = vc.transpose() * rv.as_ref().subcols(a, len);
    let mut ps = vc.transpose() * sv.as_ref().subcols(a, len);
    for i in 0..len {
        for j in 0..i {
            let x = 0.5 * (pr[(i, j)] + pr[(j, i)]);
            pr[(i, j)] = x;
            pr[(j, i)] = x;
            let y = 0.5 * (ps[(i, j)] + ps[(j, i)]);
            ps[(i, j)] = y;
            ps[(j, i)] = y;
        }
    }
    let small = Mat::from_fn(len, len, |i, j| c64::new(pr[(i, j)], ps[(i, j)]));
    let est: Vec<f64> = small
        .eigenvalues()
        .map_err(|e| Error::Linalg(format!("{e:?}")))?
        .iter()
        .map(|z| z.arg())
        .collect();
    // Pick the mixing angle that best separates the estimated phases.
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in 0..64 {
        let th = t as f64 * PI / 64.0;
        let mut c: Vec<f64> = est.iter().map(|p| (p - th).cos()).collect();
        c.sort_by(f64::total_cmp);
        let gap = c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap > best.0 {
            best = (gap, th);
        }
    }
    let (sb, cb) = best.1.sin_cos();
    let k = Mat::from_fn(len, len, |i, j| cb * pr[(i, j)] + sb * ps[(i, j)]);
    let q = k
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))?
        .U()
        .to_owned();
    let nv = v.as_ref().subcols(a, len) * &q;
    let nrv = rv.as_ref().subcols(a, len) * &q;
    let nsv = sv.as_ref().subcols(a, len) * &q;
    v.as_mut().subcols_mut(a, len).copy_from(&nv);
    rv.as_mut().subcols_mut(a, len).copy_from(&nrv);
    sv.as_mut().subcols_mut(a, len).copy_from(&nsv);
    Ok(())
}

/// Eigenpairs of a complex symmetric unitary R + iS. R and S are commuting real
/// symmetric matrices, so the eigenvectors can be taken real. Eigenvectors of
/// cos θ R + sin θ S with θ = center + π/2 are joint eigenvectors wherever
/// sin(φ − center) is non-degenerate; near-collisions are resolved by a
/// Rayleigh–Ritz step on U within a block of neighbouring columns.
fn symmetric_unitary_eig(r: Mat<f64>, s: Mat<f64>, center: f64) -> Result<(Vec<f64>, Mat<f64>, Vec<f64>)> {
    let n = r.nrows();
    let theta = center + FRAC_PI_2;
    let (st, ct) = theta.sin_cos();
    let m = Mat::from_fn(n, n, |i, j| ct * r[(i, j)] + st * s[(i, j)]);
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    drop(m);
    let mut v = evd.U().to_owned();
    drop(evd);
    let mut rv = &r * &v;
    let mut sv = &s * &v;
    drop(r);
    drop(s);

    let eval = |v: MatRef<f64>, rv: MatRef<f64>, sv: MatRef<f64>, j: usize| -> (f64, f64) {
        let (x, y, z) = (v.col(j), rv.col(j), sv.col(j));
        let a: f64 = (0..n).map(|i| x[i] * y[i]).sum();
        let b: f64 = (0..n).map(|i| x[i] * z[i]).sum();
        let phi = wrap_phase(b.atan2(a));
        let (sn, cs) = phi.sin_cos();
        let res: f64 = (0..n).map(|i| (y[i] - cs * x[i]).powi(2) + (z[i] - sn * x[i]).powi(2)).sum();
        (phi, res.sqrt())
    };
    let mut phases = vec![0.0; n];
    let mut residues = vec![0.0; n];
    for j in 0..n {
        (phases[j], residues[j]) = eval(v.as_ref(), rv.as_ref(), sv.as_ref(), j);
    }

    for sweep in 0..8 {
        let offset = if sweep % 2 == 0 { 0 } else { REFINE_BLOCK / 2 };
        let mut starts: Vec<usize> = vec![0];
        starts.extend((offset..n).step_by(REFINE_BLOCK).filter(|&a| a > 0));
        let mut touched = false;
        for (i, &a) in starts.iter().enumerate() {
            let b = starts.get(i + 1).copied().unwrap_or(n);
            if !(a..b).any(|j| residues[j] > REFINE_TOL) {
                continue;
            }
            touched = true;
            rayleigh_ritz_block(&mut v, &mut rv, &mut sv, a, b)?;
            for j in a..b {
                (phases[j], residues[j]) = eval(v.as_ref(), rv.as_ref(), sv.as_ref(), j);
            }
            // Restore ascending cos(φ − θ) so that blocks keep grouping close eigenvalues of M.
            let mut order: Vec<usize> = (a..b).collect();
            order.sort_by(|&x, &y| (phases[x] - theta).cos().total_cmp(&(phases[y] - theta).cos()));
            for m in [&mut v, &mut rv, &mut sv] {
                let block = Mat::from_fn(n, b - a, |i, j| m[(i, order[j])]);
                m.as_mut().subcols_mut(a, b - a).copy_from(&block);
            }
            let (ph, re): (Vec<f64>, Vec<f64>) = order.iter().map(|&j| (phases[j], residues[j])).unzip();
            phases[a..b].copy_from_slice(&ph);
            residues[a..b].copy_from_slice(&re);
        }
        if !touched {
            break;
        }
    }
    Ok((phases, v, residues))
}

fn check_dim(n: usize) -> Result<()> {
    if n > 1 << DENSE_MAX_L {
        return Err(Error::ResourceLimit(format!(
            "dense diagonalization limited to dimension 2^{DENSE_MAX_L}, got {n}"
        )));
    }
    Ok(())
}

/// All eigenpairs of a dense unitary.
pub fn dense_eig(u: &DenseUnitary) -> Result<EigenpairSet> {
    dense_eig_centered(u, FRAC_PI_2)
}

/// As [`dense_eig`]; `center` is the phase where symmetric inputs are resolved
/// most accurately.
pub fn dense_eig_centered(u: &DenseUnitary, center: f64) -> Result<EigenpairSet> {
    check_dim(u.dim)?;
    let err = u.unitarity_error();
    if err > 1e-10 {
        return Err(Error::InvalidInput(format!("matrix is not unitary: max |U†U − I| = {err:.3e}")));
    }
    let n = u.dim;
    if u.symmetry_error() <= 1e-13 {
        let r = Mat::from_fn(n, n, |i, j| u.entries[(i, j)].re);
        let s = Mat::from_fn(n, n, |i, j| u.entries[(i, j)].im);
        let (phases, v, residues) = symmetric_unitary_eig(r, s, center)?;
        let vectors = Mat::from_fn(n, n, |i, j| c64::new(v[(i, j)], 0.0));
        return Ok(EigenpairSet::from_unsorted(phases, vectors, residues, center, false));
    }
    let evd = u.entries.eigen().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let mut vectors = evd.U().to_owned();
    for j in 0..n {
        let col = vectors.col_as_slice_mut(j);
        let nv = norm(col);
        col.iter_mut().for_each(|z| *z /= nv);
    }
    let uv = &u.entries * &vectors;
    let mut phases = Vec::with_capacity(n);
    let mut residues = Vec::with_capacity(n);
    for j in 0..n {
        let (x, y) = (vectors.col_as_slice(j), uv.col_as_slice(j));
        let rq: c64 = x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
        let phi = wrap_phase(rq.arg());
        let z = c64::from_polar(1.0, phi);
        phases.push(phi);
        residues.push(y.iter().zip(x).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt());
    }
    Ok(EigenpairSet::from_unsorted(phases, vectors, residues, center, false))
}

/// All eigenpairs of the Floquet operator of `p`, through its complex symmetric
/// form e^{−iH_z/2} e^{−iH_x} e^{−iH_z/2}.
pub fn kfim_dense_eig(p: &ChainParams, center: f64) -> Result<EigenpairSet> {
    p.validate()?;
    if p.l > DENSE_MAX_L {
        return Err(Error::ResourceLimit(format!("dense diagonalization limited to L <= {DENSE_MAX_L}")));
    }
    let n = p.dim();
    let (sb, cb) = p.b.sin_cos();
    let table: Vec<c64> = (0..=p.l)
        .map(|d| c64::new(cb.powi((p.l - d) as i32), 0.0) * c64::new(0.0, -sb).powi(d as i32))
        .collect();
    let half: Vec<c64> = hz_diagonal(p).into_iter().map(|e| c64::from_polar(1.0, -0.5 * e)).collect();
    let entry = |k: usize, j: usize| half[k] * table[(k ^ j).count_ones() as usize] * half[j];
    let r = Mat::from_fn(n, n, |k, j| entry(k, j).re);
    let s = Mat::from_fn(n, n, |k, j| entry(k, j).im);
    let (phases, w, residues) = symmetric_unitary_eig(r, s, center)?;
    let vectors = Mat::from_fn(n, n, |i, j| half[i] * w[(i, j)]);
    Ok(EigenpairSet::from_unsorted(phases, vectors, residues, center, false))
}
