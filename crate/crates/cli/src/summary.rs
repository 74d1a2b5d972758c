//! Pooling of per-realization rows into summary statistics.
//!
//! Every statistic is computed from values sorted within their group, so the
//! summary does not depend on how rows were split across files or ordered.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use kfim_core::rmt::TW_GOE;
use kfim_core::stats::{
    fit_exponential_scaling, fit_gev, kl_divergence, make_histogram, moment_summary, ratio_r,
    shared_histograms, Binning, GevFit, Histogram, MomentSummary, ScalingFit,
};
use serde::{Deserialize, Serialize};

use crate::records::{
    read_records, AutocorrRow, EthRow, OtocRow, PolfedRow, Record, ReferenceRow, SchmidtRow, SpectrumRow,
};

/// Rows of every known schema, pooled from any number of files.
#[derive(Debug, Default, Clone)]
pub struct Dataset {
    pub schmidt: Vec<SchmidtRow>,
    pub spectra: Vec<SpectrumRow>,
    pub reference: Vec<ReferenceRow>,
    pub eth: Vec<EthRow>,
    pub autocorr: Vec<AutocorrRow>,
    pub otoc: Vec<OtocRow>,
    pub polfed: Vec<PolfedRow>,
}

fn matches<R: Record>(path: &Path) -> bool {
    path.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.starts_with(R::stem()))
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.schmidt.is_empty()
            && self.spectra.is_empty()
            && self.reference.is_empty()
            && self.eth.is_empty()
            && self.autocorr.is_empty()
            && self.otoc.is_empty()
            && self.polfed.is_empty()
    }

    /// Adds one CSV file, choosing the schema from its file name.
    pub fn add_file(&mut self, path: &Path) -> Result<()> {
        if matches::<SchmidtRow>(path) {
            self.schmidt.extend(read_records(path)?);
        } else if matches::<SpectrumRow>(path) {
            self.spectra.extend(read_records(path)?);
        } else if matches::<ReferenceRow>(path) {
            self.reference.extend(read_records(path)?);
        } else if matches::<EthRow>(path) {
            self.eth.extend(read_records(path)?);
        } else if matches::<AutocorrRow>(path) {
            self.autocorr.extend(read_records(path)?);
        } else if matches::<OtocRow>(path) {
            self.otoc.extend(read_records(path)?);
        } else if matches::<PolfedRow>(path) {
            self.polfed.extend(read_records(path)?);
        } else {
            bail!(
                "{}: file name does not start with a known stream (schmidt, spectra, reference, eth, autocorr, otoc, polfed)",
                path.display()
            );
        }
        Ok(())
    }

    /// Loads files and directories; directories contribute their known *.csv files.
    pub fn load(inputs: &[PathBuf]) -> Result<Self> {
        let mut d = Dataset::default();
        for p in inputs {
            if p.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                    .collect();
                files.sort();
                for f in files {
                    match d.add_file(&f) {
                        Ok(()) => {}
                        Err(e) if e.to_string().contains("known stream") => log::warn!("skipping {}", f.display()),
                        Err(e) => return Err(e),
                    }
                }
            } else {
                d.add_file(p)?;
            }
        }
        if d.is_empty() {
            bail!("no rows found in the given inputs");
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub d: usize,
    pub count: usize,
    /// D_KL(reference ‖ model) over the shared bins.
    pub kl: f64,
    /// Reference counts on the same edges as `SchmidtGroup::lambda_hist`.
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtGroup {
    pub model: String,
    pub l: usize,
    pub d: usize,
    pub count: usize,
    /// Moments of the rescaled λ_max.
    pub moments: MomentSummary,
    pub r: f64,
    pub r_err: f64,
    pub lambda_hist: Histogram,
    pub reference: Option<ReferenceComparison>,
    /// GEV fit of the raw λ_max (at least 100 samples).
    pub gev: Option<GevFit>,
    pub raw_hist: Histogram,
    pub e_tilde_hist: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGroup {
    pub method: String,
    pub d: usize,
    pub count: usize,
    pub moments: MomentSummary,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EthPoint {
    pub model: String,
    pub l: usize,
    pub realizations: usize,
    pub mean_gap: f64,
    pub mean_gap_err: f64,
    /// Realization average of the per-window maximum gap.
    pub max_gap: f64,
    pub max_gap_err: f64,
    /// Pooled RMS of the off-diagonal elements.
    pub offdiag_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EthFits {
    pub model: String,
    pub mean_gap: ScalingFit,
    pub max_gap: ScalingFit,
    pub offdiag: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesGroup {
    pub model: String,
    pub l: usize,
    pub realizations: usize,
    pub times: Vec<usize>,
    /// Mean |C(t)| for autocorrelations, mean value for OTOCs.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean over the second half of the time window.
    pub plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolfedGroup {
    pub l: usize,
    pub realizations: usize,
    pub pairs: usize,
    pub max_phase_dev: f64,
    pub max_overlap_dev: f64,
    pub max_residue: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schmidt: Vec<SchmidtGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<ReferenceGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eth: Vec<EthPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eth_fits: Vec<EthFits>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub autocorr: Vec<SeriesGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub otoc: Vec<SeriesGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polfed: Vec<PolfedGroup>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean_err(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn reference_groups(rows: &[ReferenceRow]) -> Result<(Vec<ReferenceGroup>, BTreeMap<usize, Vec<f64>>)> {
    let mut by: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    let mut by_d: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by.entry((r.method.clone(), r.d)).or_default().push(r.lambda_max_rescaled);
        by_d.entry(r.d).or_default().push(r.lambda_max_rescaled);
    }
    let mut out = vec![];
    for ((method, d), v) in by {
        let v = sorted(v);
        let moments = moment_summary(&v)?;
        out.push(ReferenceGroup { method, d, count: v.len(), r: ratio_r(moments.mean, &TW_GOE), moments });
    }
    Ok((out, by_d.into_iter().map(|(d, v)| (d, sorted(v))).collect()))
}

fn schmidt_groups(data: &Dataset, bins: usize, refs: &BTreeMap<usize, Vec<f64>>) -> Result<Vec<SchmidtGroup>> {
    let mut by: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &data.schmidt {
        let e = by.entry((r.model.clone(), r.l)).or_default();
        e.0.push(r.lambda_max_rescaled);
        e.1.push(r.lambda_max);
    }
    let mut spectra: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in &data.spectra {
        spectra.entry((r.model.clone(), r.l)).or_default().push(r.e_tilde);
    }
    // The largest available reference dimension stands in for the limiting law.
    let reference = refs.iter().next_back();
    let mut out = vec![];
    for ((model, l), (resc, raw)) in by {
        let resc = sorted(resc);
        let raw = sorted(raw);
        let moments = moment_summary(&resc)?;
        let (lambda_hist, reference) = match reference {
            Some((&d, rv)) => {
                let (r, m) = shared_histograms(rv, &resc, bins)?;
                // Empty bins are floored on the reference side.
                let kl = kl_divergence(&m, &r)?;
                (m, Some(ReferenceComparison { d, count: rv.len(), kl, counts: r.counts }))
            }
            None => (make_histogram(&resc, &Binning::EqualWidth(bins))?, None),
        };
        let gev = if raw.len() >= 100 {
            fit_gev(&raw).map_err(|e| log::warn!("GEV fit for {model} L={l} failed: {e}")).ok()
        } else {
            None
        };
        let e_tilde_hist = match spectra.remove(&(model.clone(), l)) {
            Some(v) => {
                let v = sorted(v);
                let hi = v.last().copied().unwrap_or(1.0).max(1e-12);
                Some(make_histogram(&v, &Binning::Range { bins, lo: 0.0, hi })?)
            }
            None => None,
        };
        out.push(SchmidtGroup {
            d: 1 << (l / 2),
            count: resc.len(),
            r: ratio_r(moments.mean, &TW_GOE),
            r_err: moments.mean_err() / TW_GOE.std_dev(),
            moments,
            lambda_hist,
            reference,
            gev,
            raw_hist: make_histogram(&raw, &Binning::EqualWidth(bins))?,
            e_tilde_hist,
            model,
            l,
        });
    }
    Ok(out)
}

fn eth_summary(rows: &[EthRow]) -> Result<(Vec<EthPoint>, Vec<EthFits>)> {
    let mut by: BTreeMap<(String, usize), Vec<&EthRow>> = BTreeMap::new();
    for r in rows {
        by.entry((r.model.clone(), r.l)).or_default().push(r);
    }
    let mut points = vec![];
    for ((model, l), rs) in by {
        let (mean_gap, mean_gap_err) = mean_err(&sorted(rs.iter().map(|r| r.mean_gap).collect()));
        let (max_gap, max_gap_err) = mean_err(&sorted(rs.iter().map(|r| r.max_gap).collect()));
        let off2 = sorted(rs.iter().map(|r| r.offdiag_rms * r.offdiag_rms).collect());
        points.push(EthPoint {
            model,
            l,
            realizations: rs.len(),
            mean_gap,
            mean_gap_err,
            max_gap,
            max_gap_err,
            offdiag_rms: (off2.iter().sum::<f64>() / off2.len() as f64).sqrt(),
        });
    }
    let mut fits = vec![];
    let mut models: Vec<&str> = points.iter().map(|p| p.model.as_str()).collect();
    models.dedup();
    for model in models {
        let pts: Vec<&EthPoint> = points.iter().filter(|p| p.model == model).collect();
        if pts.len() < 3 {
            continue;
        }
        let fit = |f: fn(&EthPoint) -> f64| fit_exponential_scaling(&pts.iter().map(|p| (p.l as f64, f(p))).collect::<Vec<_>>());
        match (fit(|p| p.mean_gap), fit(|p| p.max_gap), fit(|p| p.offdiag_rms)) {
            (Ok(mean_gap), Ok(max_gap), Ok(offdiag)) => {
                fits.push(EthFits { model: model.to_string(), mean_gap, max_gap, offdiag })
            }
            _ => log::warn!("ETH scaling fit for {model} failed"),
        }
    }
    Ok((points, fits))
}

fn series_groups(rows: impl Iterator<Item = (String, usize, usize, usize, f64)>) -> Vec<SeriesGroup> {
    // (model, l) -> t -> values
    let mut by: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut reals: BTreeMap<(String, usize), std::collections::BTreeSet<usize>> = BTreeMap::new();
    for (model, l, realization, t, v) in rows {
        by.entry((model.clone(), l)).or_default().entry(t).or_default().push(v);
        reals.entry((model, l)).or_default().insert(realization);
    }
    by.into_iter()
        .map(|((model, l), ts)| {
            let times: Vec<usize> = ts.keys().copied().collect();
            let (mean, stderr): (Vec<f64>, Vec<f64>) = ts.into_values().map(|v| mean_err(&sorted(v))).unzip();
            let half = mean.len() / 2;
            let tail = &mean[half..];
            let plateau = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            let realizations = reals[&(model.clone(), l)].len();
            SeriesGroup { model, l, realizations, times, mean, stderr, plateau }
        })
        .collect()
}

fn polfed_groups(rows: &[PolfedRow]) -> Vec<PolfedGroup> {
    let mut by: BTreeMap<usize, Vec<&PolfedRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.l).or_default().push(r);
    }
    by.into_iter()
        .map(|(l, rs)| PolfedGroup {
            l,
            realizations: rs.len(),
            pairs: rs.iter().map(|r| r.pairs).sum(),
            max_phase_dev: rs.iter().map(|r| r.max_phase_dev).fold(0.0, f64::max),
            max_overlap_dev: rs.iter().map(|r| r.max_overlap_dev).fold(0.0, f64::max),
            max_residue: rs.iter().map(|r| r.max_residue).fold(0.0, f64::max),
        })
        .collect()
}

pub fn summarize(data: &Dataset, bins: usize) -> Result<Summary> {
    if data.is_empty() {
        bail!("nothing to summarize");
    }
    let (reference, refs) = reference_groups(&data.reference)?;
    let (eth, eth_fits) = eth_summary(&data.eth)?;
    Ok(Summary {
        bins,
        schmidt: schmidt_groups(data, bins, &refs)?,
        reference,
        eth,
        eth_fits,
        autocorr: series_groups(data.autocorr.iter().map(|r| (r.model.clone(), r.l, r.realization, r.t, r.abs))),
        otoc: series_groups(data.otoc.iter().map(|r| (r.model.clone(), r.l, r.realization, r.t, r.value))),
        polfed: polfed_groups(&data.polfed),
    })
}

/// Evaluation of a fitted a₀ 2^{−L/b} curve.
pub trait ScalingFitExt {
    fn eval(&self, l: f64) -> f64;
}

impl ScalingFitExt for ScalingFit {
    fn eval(&self, l: f64) -> f64 {
        self.a0 * (-l / self.b).exp2()
    }
}
