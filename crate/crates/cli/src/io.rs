//! Count panel CSV ingestion and export.
//!
//! Layout: a header row of series labels, then one row per time point. An
//! optional first column holds time labels; it is recognised by its header
//! (`time`, `t`, `date`, `quarter`, `period`, case-insensitive, or empty).
//! Lines starting with `#` are comments.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dtslpm::model::CountPanel;

const TIME_HEADERS: [&str; 5] = ["time", "t", "date", "quarter", "period"];

/// A panel plus the header of its time-label column, if the file had one.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsFile {
    pub panel: CountPanel,
    pub time_column: Option<String>,
}

fn is_time_header(h: &str) -> bool {
    let h = h.trim();
    h.is_empty() || TIME_HEADERS.iter().any(|t| t.eq_ignore_ascii_case(h))
}

pub fn load_counts(path: &Path) -> Result<CountPanel> {
    Ok(load_counts_file(path)?.panel)
}

pub fn load_counts_file(path: &Path) -> Result<CountsFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_counts(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Parses CSV text; errors name the 1-based data row and column.
pub fn parse_counts(text: &str) -> Result<CountsFile> {
    if text.lines().all(|l| l.trim().is_empty() || l.trim_start().starts_with('#')) {
        bail!("file is empty");
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let has_time = headers.len() > 1 && is_time_header(&headers[0]);
    let first = usize::from(has_time);
    let labels: Vec<String> = headers.iter().skip(first).map(str::to_string).collect();
    if labels.is_empty() {
        bail!("header row has no series columns");
    }

    let mut series = vec![Vec::new(); labels.len()];
    let mut times = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.with_context(|| format!("row {row}"))?;
        if record.len() != headers.len() {
            bail!("row {row}: expected {} columns, found {}", headers.len(), record.len());
        }
        times.push(if has_time { record[0].to_string() } else { row.to_string() });
        for (c, cell) in record.iter().enumerate().skip(first) {
            let value: u64 = cell.parse().map_err(|_| {
                anyhow!(
                    "row {row}, column {} ({}): expected a non-negative integer, found {cell:?}",
                    c + 1,
                    &headers[c]
                )
            })?;
            series[c - first].push(value);
        }
    }
    if times.len() < 2 {
        bail!("need at least 2 time points, found {}", times.len());
    }
    let panel = CountPanel::new(series, labels, times)?;
    Ok(CountsFile { panel, time_column: has_time.then(|| headers[0].to_string()) })
}

/// Writes a panel in the layout read by [`load_counts`]. `time_column` names
/// the time-label column; without it the column is omitted. `comment` lines
/// are written first, each prefixed with `# `.
pub fn write_counts(path: &Path, panel: &CountPanel, time_column: Option<&str>, comment: &[String]) -> Result<()> {
    let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for line in comment {
        writeln!(file, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = Vec::new();
    if let Some(t) = time_column {
        header.push(t);
    }
    header.extend(panel.series_labels().iter().map(String::as_str));
    w.write_record(&header)?;
    for t in 0..panel.n_times() {
        let mut row: Vec<String> = Vec::with_capacity(panel.n_series() + 1);
        if time_column.is_some() {
            row.push(panel.time_labels()[t].clone());
        }
        row.extend((0..panel.n_series()).map(|i| panel.count(i, t).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
