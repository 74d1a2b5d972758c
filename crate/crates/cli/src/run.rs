//! Experiment execution: seeded realizations, CSV streams, summary and manifest.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use kfim_core::dynamics::{
    autocorrelation, autocorrelation_spectral, eth_record, otoc, otoc_dense, TraceEstimator,
};
use kfim_core::entanglement::{lambda_max, rescaled_spectrum, schmidt_spectrum};
use kfim_core::model::{sample_coe, sample_disorder, ChainParams, DENSE_MAX_L};
use kfim_core::rmt::{
    rescale_lambda_max, sample_tridiagonal_lambda_max, sample_wishart_lambda_max,
};
use kfim_core::rng::{derive_seed, RNG_ALGORITHM};
use kfim_core::spectral::{dense_eig_centered, kfim_dense_eig, polfed, EigenpairSet};
use kfim_core::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, Model, ReferenceConfig, ReferenceMethod};
use crate::records::{
    AutocorrRow, CsvSink, EthRow, OtocRow, PolfedRow, Record, ReferenceRow, SchmidtRow, SpectrumRow,
};
use crate::summary::{summarize, Dataset, Summary};

/// Realizations evaluated in parallel before their rows are written.
const CHUNK: usize = 32;

/// Largest dimension sampled densely by the `auto` reference method.
const DENSE_REFERENCE_MAX_DIM: usize = 1024;

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Seed of realization `r` at chain length `l`.
pub fn realization_seed(master: u64, l: usize, r: usize) -> u64 {
    derive_seed(master, ((l as u64) << 32) | r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub l: usize,
    pub realization: usize,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueSummary {
    pub l: usize,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub rng_algorithm: String,
    pub seed_derivation: String,
    pub software_version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub failed: usize,
    pub residues: Vec<ResidueSummary>,
    pub outputs: Vec<String>,
    pub realizations: Vec<RealizationRecord>,
}

/// Rows produced by one realization.
#[derive(Debug, Default)]
struct Batch {
    schmidt: Vec<SchmidtRow>,
    spectra: Vec<SpectrumRow>,
    reference: Vec<ReferenceRow>,
    eth: Vec<EthRow>,
    autocorr: Vec<AutocorrRow>,
    otoc: Vec<OtocRow>,
    polfed: Vec<PolfedRow>,
    max_residue: Option<f64>,
}

/// One sink per stream the experiment writes.
struct Sinks {
    files: Vec<(&'static str, CsvSink)>,
}

impl Sinks {
    fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let mut files = vec![];
        let mut add = |name: &'static str, s: Result<CsvSink>| -> Result<()> {
            files.push((name, s?));
            Ok(())
        };
        match cfg.kind {
            ExperimentKind::SchmidtStats => {
                add(SchmidtRow::FILE, CsvSink::create::<SchmidtRow>(dir))?;
                if cfg.store_spectra {
                    add(SpectrumRow::FILE, CsvSink::create::<SpectrumRow>(dir))?;
                }
                if cfg.reference.is_some() {
                    add(ReferenceRow::FILE, CsvSink::create::<ReferenceRow>(dir))?;
                }
            }
            ExperimentKind::WishartReference => add(ReferenceRow::FILE, CsvSink::create::<ReferenceRow>(dir))?,
            ExperimentKind::Eth => add(EthRow::FILE, CsvSink::create::<EthRow>(dir))?,
            ExperimentKind::Autocorr => add(AutocorrRow::FILE, CsvSink::create::<AutocorrRow>(dir))?,
            ExperimentKind::Otoc => add(OtocRow::FILE, CsvSink::create::<OtocRow>(dir))?,
            ExperimentKind::PolfedCheck => add(PolfedRow::FILE, CsvSink::create::<PolfedRow>(dir))?,
            ExperimentKind::GevFit => {}
        }
        Ok(Sinks { files })
    }

    fn sink(&mut self, name: &str) -> Option<&mut CsvSink> {
        self.files.iter_mut().find(|(n, _)| *n == name).map(|(_, s)| s)
    }

    fn write<R: Record>(&mut self, rows: &[R]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        match self.sink(R::FILE) {
            Some(s) => s.append(rows),
            None => Ok(()),
        }
    }

    fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.to_string()).collect()
    }
}

fn chain(cfg: &ExperimentConfig, l: usize, seed: u64) -> Result<ChainParams> {
    Ok(ChainParams::new(l, cfg.coupling, cfg.kick, sample_disorder(l, seed)?, seed)?)
}

/// Eigenpairs nearest the target phase: dense for small L or wide windows,
/// filtered Arnoldi otherwise.
fn eigenpairs(cfg: &ExperimentConfig, l: usize, seed: u64, count: usize) -> Result<EigenpairSet> {
    let target = cfg.target_phase;
    match cfg.model {
        Model::Kfim => {
            let p = chain(cfg, l, seed)?;
            let spec = cfg.filter_spec(l);
            if l <= DENSE_MAX_L && (l <= 8 || count > spec.krylov_dim / 2) {
                Ok(kfim_dense_eig(&p, target)?.nearest(target, count))
            } else {
                Ok(polfed(&p, &spec, count)?)
            }
        }
        Model::Coe => Ok(dense_eig_centered(&sample_coe(1 << l, seed)?, target)?.nearest(target, count)),
    }
}

fn schmidt_batch(cfg: &ExperimentConfig, l: usize, r: usize, seed: u64) -> Result<Batch> {
    let e = eigenpairs(cfg, l, seed, cfg.eigenpairs)?;
    let mut b = Batch { max_residue: Some(e.max_residue()), ..Default::default() };
    let model = cfg.model.name().to_string();
    for i in 0..e.len() {
        let s = schmidt_spectrum(e.vector(i), l)?;
        let lm = lambda_max(&s);
        b.schmidt.push(SchmidtRow {
            model: model.clone(),
            l,
            realization: r,
            seed,
            index: i,
            phase: e.phases[i],
            residue: e.residues[i],
            lambda_max: lm,
            lambda_max_rescaled: rescale_lambda_max(lm, s.d)?,
        });
        if cfg.store_spectra {
            for (rank, x) in rescaled_spectrum(&s).into_iter().enumerate() {
                b.spectra.push(SpectrumRow { model: model.clone(), l, realization: r, index: i, rank, e_tilde: x });
            }
        }
    }
    Ok(b)
}

fn reference_row(rc: &ReferenceConfig, draw: usize, seed: u64) -> Result<ReferenceRow> {
    let dense = match rc.method {
        ReferenceMethod::Auto => rc.dim <= DENSE_REFERENCE_MAX_DIM,
        ReferenceMethod::Dense => true,
        ReferenceMethod::Tridiagonal => false,
    };
    let lm = if dense {
        sample_wishart_lambda_max(rc.dim, seed)?
    } else {
        sample_tridiagonal_lambda_max(rc.dim, seed)?
    };
    Ok(ReferenceRow {
        method: if dense { "dense" } else { "tridiagonal" }.to_string(),
        d: rc.dim,
        draw,
        seed,
        lambda_max: lm,
        lambda_max_rescaled: rescale_lambda_max(lm, rc.dim)?,
    })
}

fn eth_batch(cfg: &ExperimentConfig, l: usize, r: usize, seed: u64) -> Result<Batch> {
    let e = eigenpairs(cfg, l, seed, cfg.eigenpairs)?;
    let rec = eth_record(&e)?;
    Ok(Batch {
        max_residue: Some(e.max_residue()),
        eth: vec![EthRow {
            model: cfg.model.name().to_string(),
            l,
            realization: r,
            seed,
            site: rec.site,
            pairs: e.len(),
            mean_phase: rec.mean_phase,
            mean_gap: rec.mean_gap,
            max_gap: rec.max_gap,
            offdiag_rms: rec.offdiag_rms,
            max_residue: e.max_residue(),
        }],
        ..Default::default()
    })
}

fn autocorr_batch(cfg: &ExperimentConfig, l: usize, r: usize, seed: u64) -> Result<Batch> {
    let (phase, series, residue) = match cfg.model {
        Model::Kfim => {
            let p = chain(cfg, l, seed)?;
            let e = eigenpairs(cfg, l, seed, 1)?;
            (e.phases[0], autocorrelation(&p, e.phases[0], e.vector(0), cfg.t_max)?, e.max_residue())
        }
        Model::Coe => {
            let e = dense_eig_centered(&sample_coe(1 << l, seed)?, cfg.target_phase)?;
            let near = e.nearest(cfg.target_phase, 1);
            let idx = e.phases.iter().position(|&x| x == near.phases[0]).unwrap_or(0);
            (e.phases[idx], autocorrelation_spectral(&e, idx, l, cfg.t_max)?, e.max_residue())
        }
    };
    let model = cfg.model.name().to_string();
    let rows = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, z): (&usize, &c64)| AutocorrRow {
            model: model.clone(),
            l,
            realization: r,
            seed,
            phase,
            t,
            re: z.re,
            im: z.im,
            abs: z.norm(),
        })
        .collect();
    Ok(Batch { autocorr: rows, max_residue: Some(residue), ..Default::default() })
}

fn otoc_batch(cfg: &ExperimentConfig, l: usize, r: usize, seed: u64) -> Result<Batch> {
    let series = match cfg.model {
        Model::Kfim => {
            let trace = match cfg.stochastic_vectors {
                Some(vectors) => TraceEstimator::Stochastic { vectors, seed: derive_seed(seed, 0x07_0c) },
                None => TraceEstimator::Full,
            };
            otoc(&chain(cfg, l, seed)?, cfg.t_max, trace)?
        }
        Model::Coe => otoc_dense(&sample_coe(1 << l, seed)?, cfg.t_max)?,
    };
    let model = cfg.model.name().to_string();
    let rows = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, z)| OtocRow { model: model.clone(), l, realization: r, seed, t, value: z.re })
        .collect();
    Ok(Batch { otoc: rows, ..Default::default() })
}

fn polfed_batch(cfg: &ExperimentConfig, l: usize, r: usize, seed: u64) -> Result<Batch> {
    let p = chain(cfg, l, seed)?;
    let target = cfg.target_phase;
    let pf = polfed(&p, &cfg.filter_spec(l), cfg.eigenpairs)?;
    // Pairs failing the residue cut are the outermost, so compare with as many dense pairs.
    let de = kfim_dense_eig(&p, target)?.nearest(target, pf.len());
    let (mut dphi, mut dov) = (0.0f64, 0.0f64);
    for i in 0..pf.len() {
        dphi = dphi.max((pf.phases[i] - de.phases[i]).abs());
        let ov: c64 = pf.vector(i).iter().zip(de.vector(i)).map(|(a, b)| a.conj() * b).sum();
        dov = dov.max(1.0 - ov.norm());
    }
    Ok(Batch {
        max_residue: Some(pf.max_residue()),
        polfed: vec![PolfedRow {
            l,
            realization: r,
            seed,
            pairs: pf.len(),
            max_phase_dev: dphi,
            max_overlap_dev: dov,
            max_residue: pf.max_residue(),
        }],
        ..Default::default()
    })
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    pool: rayon::ThreadPool,
    sinks: Sinks,
    data: Dataset,
    records: Vec<RealizationRecord>,
}

impl Runner<'_> {
    fn absorb(&mut self, b: Batch) -> Result<()> {
        self.sinks.write(&b.schmidt)?;
        self.sinks.write(&b.spectra)?;
        self.sinks.write(&b.reference)?;
        self.sinks.write(&b.eth)?;
        self.sinks.write(&b.autocorr)?;
        self.sinks.write(&b.otoc)?;
        self.sinks.write(&b.polfed)?;
        self.data.schmidt.extend(b.schmidt);
        self.data.spectra.extend(b.spectra);
        self.data.reference.extend(b.reference);
        self.data.eth.extend(b.eth);
        self.data.autocorr.extend(b.autocorr);
        self.data.otoc.extend(b.otoc);
        self.data.polfed.extend(b.polfed);
        Ok(())
    }

    /// Runs `n` indexed jobs in parallel chunks and writes results in index order.
    fn sweep(
        &mut self,
        l: usize,
        n: usize,
        seed_of: impl Fn(usize) -> u64 + Sync,
        job: impl Fn(usize, u64) -> Result<Batch> + Sync,
    ) -> Result<()> {
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let results: Vec<(usize, u64, Result<Batch>)> = self.pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|r| {
                        let seed = seed_of(r);
                        (r, seed, job(r, seed))
                    })
                    .collect()
            });
            for (r, seed, res) in results {
                match res {
                    Ok(b) => {
                        let max_residue = b.max_residue;
                        self.absorb(b)?;
                        self.records.push(RealizationRecord { l, realization: r, seed, ok: true, error: None, max_residue });
                    }
                    Err(e) => {
                        log::warn!("L={l} realization {r} (seed {seed}) failed: {e:#}");
                        self.records.push(RealizationRecord {
                            l,
                            realization: r,
                            seed,
                            ok: false,
                            error: Some(format!("{e:#}")),
                            max_residue: None,
                        });
                    }
                }
            }
            log::info!("L={l}: {end}/{n} done");
            start = end;
        }
        Ok(())
    }
}

fn residue_summaries(records: &[RealizationRecord]) -> Vec<ResidueSummary> {
    let mut by: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records {
        if let Some(x) = r.max_residue {
            by.entry(r.l).or_default().push(x);
        }
    }
    by.into_iter()
        .map(|(l, v)| ResidueSummary {
            l,
            max: v.iter().cloned().fold(0.0, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs an experiment and writes its CSV streams, `summary.json` and `manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<(Summary, RunManifest)> {
    cfg.validate()?;
    let clock = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let mut run = Runner {
        cfg,
        pool,
        sinks: Sinks::new(&cfg.output, cfg)?,
        data: Dataset::default(),
        records: vec![],
    };

    match cfg.kind {
        ExperimentKind::GevFit => run.data = Dataset::load(&cfg.input)?,
        ExperimentKind::WishartReference => {
            for &l in &cfg.sizes {
                let rc = ReferenceConfig { draws: cfg.realizations_for(l), dim: 1 << (l / 2), method: ReferenceMethod::Auto };
                let master = cfg.seed;
                run.sweep(l, rc.draws, |r| realization_seed(master, l, r), |r, seed| {
                    Ok(Batch { reference: vec![reference_row(&rc, r, seed)?], ..Default::default() })
                })?;
            }
        }
        kind => {
            for &l in &cfg.sizes {
                let n = cfg.realizations_for(l);
                let c = run.cfg;
                run.sweep(l, n, |r| realization_seed(c.seed, l, r), |r, seed| match kind {
                    ExperimentKind::SchmidtStats => schmidt_batch(c, l, r, seed),
                    ExperimentKind::Eth => eth_batch(c, l, r, seed),
                    ExperimentKind::Autocorr => autocorr_batch(c, l, r, seed),
                    ExperimentKind::Otoc => otoc_batch(c, l, r, seed),
                    ExperimentKind::PolfedCheck => polfed_batch(c, l, r, seed),
                    ExperimentKind::GevFit | ExperimentKind::WishartReference => unreachable!(),
                })?;
            }
            if let (ExperimentKind::SchmidtStats, Some(rc)) = (kind, &cfg.reference) {
                // Reference draws are indexed under L = 0 in the manifest.
                let master = derive_seed(cfg.seed, 0x2ef);
                run.sweep(0, rc.draws, |r| derive_seed(master, r as u64), |r, seed| {
                    Ok(Batch { reference: vec![reference_row(rc, r, seed)?], ..Default::default() })
                })?;
            }
        }
    }

    let summary = summarize(&run.data, cfg.bins)?;
    write_json(&cfg.output.join(SUMMARY_FILE), &summary)?;
    let mut outputs = run.sinks.names();
    outputs.push(SUMMARY_FILE.into());
    outputs.push(MANIFEST_FILE.into());
    let manifest = RunManifest {
        config: cfg.clone(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        seed_derivation: "seed(L, r) = splitmix64(master ^ splitmix64((L << 32) | r))".to_string(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        workers: workers.max(1),
        failed: run.records.iter().filter(|r| !r.ok).count(),
        residues: residue_summaries(&run.records),
        outputs,
        realizations: run.records,
    };
    write_json(&cfg.output.join(MANIFEST_FILE), &manifest)?;
    Ok((summary, manifest))
}

/// Worker count from `KFIM_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var("KFIM_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("KFIM_WORKERS=`{v}` is not a positive integer"))?;
            anyhow::ensure!(n > 0, "KFIM_WORKERS must be positive");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}
