//! File formats: the sweep CSV, per-label `.dat` plot files and placement
//! files. Every file is written atomically through a temporary file in the
//! destination directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiments::{SweepResult, SweepRow};
use crate::scene::{TransmitterLayout, TransmitterParams};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["label", "N", "sqrt_crb_r_m", "sqrt_crb_theta_deg", "divergent_fraction"];

/// 12 significant digits, `inf` for infinities.
pub fn format_number(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

fn parse_number(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: format!("{s:?} is not a number"),
    })
}

/// Writes `contents` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sweep_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format {
        path: PathBuf::from("<csv>"),
        reason: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &result.rows {
        w.write_record([
            r.label.clone(),
            r.n.to_string(),
            format_number(r.mean_sqrt_crb_range),
            format_number(r.mean_sqrt_crb_theta_deg),
            format_number(r.divergent_fraction),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: PathBuf::from("<csv>"),
        reason: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a sweep CSV; `path` is used in error messages only.
pub fn parse_sweep_csv(text: &str, path: &Path) -> Result<SweepResult> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| fmt(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(fmt(format!("header must be `{}`", CSV_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(fmt(format!("row {} has {} fields", i + 2, rec.len())));
        }
        rows.push(SweepRow {
            label: rec[0].to_string(),
            n: rec[1].trim().parse().map_err(|_| fmt(format!("row {}: bad N {:?}", i + 2, &rec[1])))?,
            mean_sqrt_crb_range: parse_number(&rec[2], path)?,
            mean_sqrt_crb_theta_deg: parse_number(&rec[3], path)?,
            divergent_fraction: parse_number(&rec[4], path)?,
        });
    }
    Ok(SweepResult { rows })
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_csv(&text, path)
}

/// Two-column `N value` text for one label, ascending in N.
pub fn dat_text(result: &SweepResult, label: &str, angle: bool) -> String {
    let mut rows: Vec<&SweepRow> = result.rows_for(label).collect();
    rows.sort_by_key(|r| r.n);
    rows.iter()
        .map(|r| {
            let v = if angle { r.mean_sqrt_crb_theta_deg } else { r.mean_sqrt_crb_range };
            format!("{} {}\n", r.n, format_number(v))
        })
        .collect()
}

/// Writes `<stem>.csv` and `<label>_range.dat` / `<label>_angle.dat` into
/// `dir`, returning the paths written.
pub fn write_sweep(dir: &Path, stem: &str, result: &SweepResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{stem}.csv"));
    write_atomic(&csv_path, sweep_csv(result)?.as_bytes())?;
    written.push(csv_path);
    for label in result.labels() {
        for (suffix, angle) in [("range", false), ("angle", true)] {
            let p = dir.join(format!("{label}_{suffix}.dat"));
            write_atomic(&p, dat_text(result, label, angle).as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Header line of a placement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementMetadata {
    pub pa_count: usize,
    pub objective: String,
    pub objective_value: f64,
    pub restarts: usize,
    pub seed: u64,
    pub frequency_ghz: f64,
    pub waveguide_length_m: f64,
    pub waveguide_phase: bool,
}

/// `# {json}` followed by one position per line with 12 significant digits.
pub fn placement_text(meta: &PlacementMetadata, positions: &[f64]) -> Result<String> {
    let json = serde_json::to_string(meta).map_err(|e| Error::Format {
        path: PathBuf::from("<placement>"),
        reason: e.to_string(),
    })?;
    let mut out = format!("# {json}\n");
    for y in positions {
        out.push_str(&format_number(*y));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a placement file into its metadata and positions.
pub fn parse_placement(text: &str, path: &Path) -> Result<(PlacementMetadata, Vec<f64>)> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut meta = None;
    let mut positions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(json) = line.strip_prefix('#') {
            if meta.is_none() {
                meta = Some(
                    serde_json::from_str(json.trim())
                        .map_err(|e| fmt(format!("line {}: metadata: {e}", i + 1)))?,
                );
            }
        } else if !line.is_empty() {
            positions.push(parse_number(line, path)?);
        }
    }
    let meta = meta.ok_or_else(|| fmt("missing `# {…}` metadata line".into()))?;
    Ok((meta, positions))
}

/// Reads a placement file and rebuilds the layout, re-auditing its spacing,
/// bound and centering constraints.
pub fn load_placement(path: &Path, params: TransmitterParams) -> Result<(PlacementMetadata, TransmitterLayout)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (meta, positions) = parse_placement(&text, path)?;
    if positions.len() != meta.pa_count {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("metadata announces {} PAs, file lists {}", meta.pa_count, positions.len()),
        });
    }
    let layout = TransmitterLayout::new(positions, params, meta.waveguide_phase)?;
    Ok((meta, layout))
}
