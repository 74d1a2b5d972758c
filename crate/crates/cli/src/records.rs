//! CSV row types. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

pub trait Cell: Sized {
    fn fmt_cell(&self) -> String;
    fn parse_cell(s: &str) -> Result<Self>;
}

impl Cell for f64 {
    fn fmt_cell(&self) -> String {
        format!("{self:.16e}")
    }
    fn parse_cell(s: &str) -> Result<Self> {
        Ok(s.trim().parse()?)
    }
}

impl Cell for u64 {
    fn fmt_cell(&self) -> String {
        self.to_string()
    }
    fn parse_cell(s: &str) -> Result<Self> {
        Ok(s.trim().parse()?)
    }
}

impl Cell for usize {
    fn fmt_cell(&self) -> String {
        self.to_string()
    }
    fn parse_cell(s: &str) -> Result<Self> {
        Ok(s.trim().parse()?)
    }
}

impl Cell for String {
    fn fmt_cell(&self) -> String {
        self.clone()
    }
    fn parse_cell(s: &str) -> Result<Self> {
        Ok(s.to_string())
    }
}

pub trait Record: Sized {
    /// File name the rows are written to; aggregation matches on its stem.
    const FILE: &'static str;
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
    fn parse(r: &csv::StringRecord) -> Result<Self>;

    fn stem() -> &'static str {
        Self::FILE.trim_end_matches(".csv")
    }
}

macro_rules! record {
    ($(#[$m:meta])* $name:ident, $file:literal, { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $(pub $field: $ty),*
        }

        impl Record for $name {
            const FILE: &'static str = $file;
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),*];

            fn cells(&self) -> Vec<String> {
                vec![$(Cell::fmt_cell(&self.$field)),*]
            }

            fn parse(r: &csv::StringRecord) -> Result<Self> {
                let mut cols = r.iter();
                Ok($name {
                    $($field: {
                        let raw = cols.next().ok_or_else(|| anyhow!("missing column `{}`", stringify!($field)))?;
                        <$ty as Cell>::parse_cell(raw)
                            .with_context(|| format!("bad value `{raw}` in column `{}`", stringify!($field)))?
                    }),*
                })
            }
        }
    };
}

record!(
    /// One eigenvector's largest Schmidt value.
    SchmidtRow, "schmidt.csv", {
    model: String,
    l: usize,
    realization: usize,
    seed: u64,
    index: usize,
    phase: f64,
    residue: f64,
    lambda_max: f64,
    lambda_max_rescaled: f64,
});

record!(
    /// One rescaled Schmidt value ẽ = D λ.
    SpectrumRow, "spectra.csv", {
    model: String,
    l: usize,
    realization: usize,
    index: usize,
    rank: usize,
    e_tilde: f64,
});

record!(
    /// One Wishart largest-eigenvalue draw.
    ReferenceRow, "reference.csv", {
    method: String,
    d: usize,
    draw: usize,
    seed: u64,
    lambda_max: f64,
    lambda_max_rescaled: f64,
});

record!(EthRow, "eth.csv", {
    model: String,
    l: usize,
    realization: usize,
    seed: u64,
    site: usize,
    pairs: usize,
    mean_phase: f64,
    mean_gap: f64,
    max_gap: f64,
    offdiag_rms: f64,
    max_residue: f64,
});

record!(AutocorrRow, "autocorr.csv", {
    model: String,
    l: usize,
    realization: usize,
    seed: u64,
    phase: f64,
    t: usize,
    re: f64,
    im: f64,
    abs: f64,
});

record!(OtocRow, "otoc.csv", {
    model: String,
    l: usize,
    realization: usize,
    seed: u64,
    t: usize,
    value: f64,
});

record!(PolfedRow, "polfed.csv", {
    l: usize,
    realization: usize,
    seed: u64,
    pairs: usize,
    max_phase_dev: f64,
    max_overlap_dev: f64,
    max_residue: f64,
});

fn line<R: Record>(r: &R) -> String {
    let mut s = r.cells().join(",");
    s.push('\n');
    s
}

/// Truncating CSV writer that emits whole rows per write call.
pub struct CsvSink {
    file: File,
}

impl CsvSink {
    pub fn create<R: Record>(dir: &Path) -> Result<Self> {
        let path = dir.join(R::FILE);
        let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        file.write_all(format!("{}\n", R::HEADER.join(",")).as_bytes())?;
        Ok(CsvSink { file })
    }

    pub fn append<R: Record>(&mut self, rows: &[R]) -> Result<()> {
        let chunk: String = rows.iter().map(line).collect();
        self.file.write_all(chunk.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

fn check_header<R: Record>(found: &csv::StringRecord, path: &Path) -> Result<()> {
    for (i, want) in R::HEADER.iter().enumerate() {
        match found.get(i) {
            Some(got) if got.trim() == *want => {}
            Some(got) => bail!("{}: column {} is `{got}`, expected `{want}`", path.display(), i + 1),
            None => bail!("{}: missing column `{want}`", path.display()),
        }
    }
    if found.len() > R::HEADER.len() {
        bail!("{}: unexpected column `{}`", path.display(), &found[R::HEADER.len()]);
    }
    Ok(())
}

/// Reads rows, dropping a trailing line that lacks its newline (a cut-off append).
pub fn read_records<R: Record>(path: &Path) -> Result<Vec<R>> {
    let mut text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if !text.ends_with('\n') {
        if let Some(cut) = text.rfind('\n') {
            log::warn!("{}: ignoring incomplete last line", path.display());
            text.truncate(cut + 1);
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    check_header::<R>(rdr.headers()?, path)?;
    let mut out = vec![];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        out.push(R::parse(&rec).with_context(|| format!("{}: row {}", path.display(), i + 1))?);
    }
    Ok(out)
}
