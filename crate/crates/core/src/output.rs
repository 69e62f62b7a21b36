//! Byte-stable CSV/JSON output.
//!
//! Every number is written with 9 significant digits (`{:.8e}` in CSV; JSON
//! values are rounded to the same precision first), rows end in `\n`, and
//! all files are written from a single thread, so identical inputs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::disorder::DisorderAverage;
use crate::error::{Error, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_COLUMNS: [&str; 5] = ["t_ns", "p_f_mean", "p_f_std", "p_free_mean", "stored_energy"];

pub fn format_number(x: f64) -> String {
    // -0 and 0 print differently; fold them
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.8e}")
}

/// `x` rounded to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format_number(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Creates `dir`. An existing non-empty directory is an error unless
/// `overwrite` is set.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<PathBuf> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::Config(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !overwrite {
            return Err(Error::Config(format!(
                "output directory {} is not empty (pass --overwrite to reuse it)",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(dir.to_path_buf())
}

/// Writes a numeric table with a header row.
pub fn write_csv<R: AsRef<[f64]>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        let row = row.as_ref();
        if row.len() != header.len() {
            return Err(Error::InvalidParameter(format!("row has {} columns, header {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&x| format_number(x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Disorder-averaged trace in the `trace.csv` layout.
pub fn write_trace(path: &Path, avg: &DisorderAverage) -> Result<()> {
    let m = &avg.mean;
    let times = m.grid.sample_times();
    let rows = (0..times.len()).map(|i| [times[i], m.p_f[i], avg.p_f_std[i], m.free_space_power[i], m.total_pe[i]]);
    write_csv(path, &TRACE_COLUMNS, rows)
}

/// Reads a two-column `t_ns, p_f` target trace.
pub fn read_target_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column `{name}`", path.display())))
    };
    let (it, ip) = (col("t_ns")?, col("p_f")?);
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        t.push(num(it)?);
        p.push(num(ip)?);
    }
    if t.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }
    if !t.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config(format!("{}: times must ascend", path.display())));
    }
    Ok((t, p))
}

/// Scalar results. Absent fields are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_delay_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_below: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_above: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_amplitude: Option<f64>,
    /// Further subcommand-specific numbers, sorted by key.
    #[serde(flatten)]
    pub extra: BTreeMap<String, f64>,
}

impl Summary {
    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    fn rounded(&self) -> Self {
        let r = |o: Option<f64>| o.map(round_sig);
        Summary {
            p_max: r(self.p_max),
            t_delay_ns: r(self.t_delay_ns),
            eta_f: r(self.eta_f),
            exponent_below: r(self.exponent_below),
            exponent_above: r(self.exponent_above),
            n_threshold: r(self.n_threshold),
            coherence_amplitude: r(self.coherence_amplitude),
            extra: self.extra.iter().map(|(k, v)| (k.clone(), round_sig(*v))).collect(),
        }
    }
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    write_json(path, &summary.rounded())
}

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
