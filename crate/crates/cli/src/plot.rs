//! Plot-ready CSV tables derived from a summary.

use anyhow::{bail, Result};
use kfim_core::rmt::mp_density;
use kfim_core::stats::gev_density;

use crate::records::Cell;
use crate::summary::{EthPoint, ScalingFitExt, SchmidtGroup, SeriesGroup, Summary};

pub const PLOT_KINDS: [&str; 11] = [
    "mp-density",
    "lambda-max",
    "gev-density",
    "R-vs-L",
    "dkl-vs-L",
    "eth-mean-gap",
    "eth-max-gap",
    "eth-offdiag",
    "autocorr",
    "otoc",
    "polfed-check",
];

/// Restricts multi-group summaries to one model and/or chain length.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub model: Option<String>,
    pub l: Option<usize>,
}

impl Selection {
    fn admits(&self, model: &str, l: usize) -> bool {
        self.model.as_deref().map_or(true, |m| m == model) && self.l.map_or(true, |x| x == l)
    }

    fn admits_model(&self, model: &str) -> bool {
        self.model.as_deref().map_or(true, |m| m == model)
    }
}

fn pick<'a, T>(items: &'a [T], key: impl Fn(&T) -> (&str, usize), sel: &Selection, what: &str) -> Result<&'a T> {
    let hits: Vec<&T> = items.iter().filter(|g| {
        let (m, l) = key(g);
        sel.admits(m, l)
    }).collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => bail!("summary has no {what} data matching the selection"),
        many => {
            let names: Vec<String> = many.iter().map(|g| {
                let (m, l) = key(g);
                format!("{m} L={l}")
            }).collect();
            bail!("several {what} groups match ({}); select one with --model/--l", names.join(", "))
        }
    }
}

struct Table {
    comment: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(comment: impl Into<String>, header: &[&'static str]) -> Self {
        Table { comment: comment.into(), header: header.to_vec(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut s = format!("# {}\n{}\n", self.comment, self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn f(x: f64) -> String {
    x.fmt_cell()
}

fn schmidt<'a>(s: &'a Summary, sel: &Selection) -> Result<&'a SchmidtGroup> {
    pick(&s.schmidt, |g| (g.model.as_str(), g.l), sel, "schmidt-stats")
}

fn series<'a>(groups: &'a [SeriesGroup], sel: &Selection, what: &str) -> Result<&'a SeriesGroup> {
    pick(groups, |g| (g.model.as_str(), g.l), sel, what)
}

fn eth_table(s: &Summary, sel: &Selection, which: &str) -> Result<Table> {
    let pts: Vec<&EthPoint> = s.eth.iter().filter(|p| sel.admits_model(&p.model)).collect();
    let mut models: Vec<&str> = pts.iter().map(|p| p.model.as_str()).collect();
    models.dedup();
    if models.len() != 1 {
        bail!("ETH plot needs exactly one model in the selection, found {}", models.len());
    }
    let fit = s.eth_fits.iter().find(|f| f.model == models[0]);
    let (label, comment) = match which {
        "eth-mean-gap" => ("mean_gap", "mean diagonal gap <delta_n> of sigma^z versus L; fit a0 2^(-L/b)"),
        "eth-max-gap" => ("max_gap", "maximum diagonal gap Max(delta_n) versus L; fit a0 2^(-L/b)"),
        _ => ("offdiag_rms", "off-diagonal fluctuation <|O_mn|^2>^(1/2) versus L; fit a0 2^(-L/b)"),
    };
    let mut t = Table::new(comment, &["L", label, "err", "fit"]);
    for p in pts {
        let (y, e) = match which {
            "eth-mean-gap" => (p.mean_gap, p.mean_gap_err),
            "eth-max-gap" => (p.max_gap, p.max_gap_err),
            _ => (p.offdiag_rms, 0.0),
        };
        let curve = fit.map(|f| {
            let sf = match which {
                "eth-mean-gap" => &f.mean_gap,
                "eth-max-gap" => &f.max_gap,
                _ => &f.offdiag,
            };
            f64_or_empty(Some(sf.eval(p.l as f64)))
        });
        t.push(vec![p.l.to_string(), f(y), f(e), curve.unwrap_or_default()]);
    }
    Ok(t)
}

fn f64_or_empty(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// Renders plot data of `kind` as CSV text preceded by a `#` comment line.
pub fn emit_plot_data(s: &Summary, kind: &str, sel: &Selection) -> Result<String> {
    let table = match kind {
        "mp-density" => {
            let g = schmidt(s, sel)?;
            let Some(h) = &g.e_tilde_hist else {
                bail!("summary has no rescaled Schmidt spectra for {} L={}", g.model, g.l);
            };
            let mut t = Table::new(
                format!("density of rescaled Schmidt values e = D*lambda ({} L={}), Marchenko-Pastur reference", g.model, g.l),
                &["e_tilde", "density_model", "density_mp"],
            );
            for (x, d) in h.centers().into_iter().zip(h.density()) {
                t.push(vec![f(x), f(d), f(mp_density(x))]);
            }
            t
        }
        "lambda-max" => {
            let g = schmidt(s, sel)?;
            let h = &g.lambda_hist;
            let mut t = Table::new(
                format!("density of rescaled lambda_max ({} L={}) and the Wishart reference on shared bins", g.model, g.l),
                &["lambda_rescaled", "density_model", "density_reference"],
            );
            let ref_density: Option<Vec<f64>> = g.reference.as_ref().map(|r| {
                let total: f64 = r.counts.iter().sum();
                r.counts.iter().zip(h.widths()).map(|(c, w)| c / total / w).collect()
            });
            for (i, (x, d)) in h.centers().into_iter().zip(h.density()).enumerate() {
                t.push(vec![f(x), f(d), f64_or_empty(ref_density.as_ref().map(|r| r[i]))]);
            }
            t
        }
        "gev-density" => {
            let g = schmidt(s, sel)?;
            let Some(fit) = &g.gev else {
                bail!("summary has no GEV fit for {} L={}", g.model, g.l);
            };
            let h = &g.raw_hist;
            let mut t = Table::new(
                format!("density of raw lambda_max ({} L={}) with the fitted GEV density", g.model, g.l),
                &["lambda_max", "density_model", "density_gev"],
            );
            for (x, d) in h.centers().into_iter().zip(h.density()) {
                let y = gev_density((x - fit.alpha) / fit.beta, fit.xi) / fit.beta;
                t.push(vec![f(x), f(d), f(y)]);
            }
            t
        }
        "R-vs-L" | "dkl-vs-L" => {
            let model = match &sel.model {
                Some(m) => m.clone(),
                None => {
                    let mut ms: Vec<&str> = s.schmidt.iter().map(|g| g.model.as_str()).collect();
                    ms.dedup();
                    match ms.as_slice() {
                        [one] => one.to_string(),
                        [] => bail!("summary has no schmidt-stats data"),
                        _ => bail!("several models present ({}); select one with --model", ms.join(", ")),
                    }
                }
            };
            let groups: Vec<&SchmidtGroup> = s.schmidt.iter().filter(|g| g.model == model).collect();
            if kind == "R-vs-L" {
                let mut t = Table::new(
                    format!("R = |mean lambda'_max - TW mean| / TW std versus L ({model})"),
                    &["L", "R", "err"],
                );
                for g in groups {
                    t.push(vec![g.l.to_string(), f(g.r), f(g.r_err)]);
                }
                t
            } else {
                let mut t = Table::new(
                    format!("D_KL({model} || reference) of rescaled lambda_max versus L"),
                    &["L", "D_KL"],
                );
                for g in groups {
                    let Some(r) = &g.reference else {
                        bail!("summary has no reference comparison for {model} L={}", g.l);
                    };
                    t.push(vec![g.l.to_string(), f(r.kl)]);
                }
                t
            }
        }
        "eth-mean-gap" | "eth-max-gap" | "eth-offdiag" => eth_table(s, sel, kind)?,
        "autocorr" => {
            let g = series(&s.autocorr, sel, "autocorr")?;
            let mut t = Table::new(
                format!("disorder-averaged |C(t)| of sigma^z_L ({} L={}), t in kick periods", g.model, g.l),
                &["t", "mean_abs_c", "stderr"],
            );
            for ((tt, m), e) in g.times.iter().zip(&g.mean).zip(&g.stderr) {
                t.push(vec![tt.to_string(), f(*m), f(*e)]);
            }
            t
        }
        "otoc" => {
            let g = series(&s.otoc, sel, "otoc")?;
            let mut t = Table::new(
                format!("infinite-temperature OTOC of sigma^z at the chain center ({} L={}), t in kick periods", g.model, g.l),
                &["t", "otoc", "stderr"],
            );
            for ((tt, m), e) in g.times.iter().zip(&g.mean).zip(&g.stderr) {
                t.push(vec![tt.to_string(), f(*m), f(*e)]);
            }
            t
        }
        "polfed-check" => {
            if s.polfed.is_empty() {
                bail!("summary has no polfed-check data");
            }
            let mut t = Table::new(
                "filtered Arnoldi versus dense diagonalization: worst deviations per L",
                &["L", "max_phase_dev", "max_overlap_dev", "max_residue"],
            );
            for g in s.polfed.iter().filter(|g| sel.l.map_or(true, |l| l == g.l)) {
                t.push(vec![g.l.to_string(), f(g.max_phase_dev), f(g.max_overlap_dev), f(g.max_residue)]);
            }
            t
        }
        other => bail!("unknown plot kind `{other}`; available kinds: {}", PLOT_KINDS.join(", ")),
    };
    Ok(table.render())
}
