//! On-disk formats: CSV for field snapshots and diagnostic series, JSON
//! manifests for run outcomes, bisections, fits, and convergence studies.
//!
//! Every file embeds the hash of the configuration that produced it, all
//! floats are written in shortest round-trip form, and the CSV readers
//! rebuild the exact bits, so a snapshot can serve as a restart file and a
//! rerun overwrites with byte-identical content. Column sets are versioned
//! by the schema tag in the first line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::Sign;
use crate::config::SimConfig;
use crate::diagnostics::{DiagnosticRecord, DiagnosticsSeries, PowerLawFit};
use crate::experiments::{BisectionResult, ConvergenceStudy, RunOutcome};
use crate::grid::{Snapshot, SnapshotLevel};

pub const SNAPSHOT_SCHEMA: &str = "snapshot/1";
pub const DIAGNOSTICS_SCHEMA: &str = "diagnostics/1";
pub const OUTCOME_SCHEMA: &str = "outcome/1";
pub const BISECTION_SCHEMA: &str = "bisection/1";
pub const FIT_SCHEMA: &str = "fit/1";
pub const CONVERGENCE_SCHEMA: &str = "convergence/1";

pub const SNAPSHOT_COLUMNS: &str = "level,r,u,v";
pub const DIAGNOSTIC_COLUMNS: &str = "t,u_r_center,lambda,sign,e_total,\
e_kinetic_lightcone,e_potential_lightcone,profile_error,finest_level";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Write `content`, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content)?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_text(path, &s)
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    schema: String,
    config_hash: String,
    time: f64,
    spacings: Vec<f64>,
    extents: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesHeader {
    schema: String,
    config_hash: String,
}

/// A snapshot read back from disk, with the hash it was written under.
#[derive(Debug, Clone)]
pub struct SnapshotFile {
    pub snapshot: Snapshot,
    pub config_hash: String,
}

/// A diagnostics series read back from disk.
#[derive(Debug, Clone)]
pub struct DiagnosticsFile {
    pub series: DiagnosticsSeries,
    pub config_hash: String,
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Manifests embed the canonical config: `out_dir` is dropped so the bytes
/// do not depend on where the results were written.
fn canonical_config(config: &SimConfig) -> SimConfig {
    let mut c = config.clone();
    c.out_dir = None;
    c
}

pub fn snapshot_csv_string(snap: &Snapshot, config_hash: &str) -> String {
    let header = SnapshotHeader {
        schema: SNAPSHOT_SCHEMA.into(),
        config_hash: config_hash.into(),
        time: snap.time,
        spacings: snap.levels.iter().map(|l| l.h).collect(),
        extents: snap.levels.iter().map(|l| l.extent()).collect(),
    };
    let mut s = String::new();
    writeln!(
        s,
        "# {}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .unwrap();
    s.push_str(SNAPSHOT_COLUMNS);
    s.push('\n');
    for (k, lvl) in snap.levels.iter().enumerate() {
        for i in 0..lvl.u.len() {
            writeln!(s, "{},{},{},{}", k, lvl.radius(i), lvl.u[i], lvl.v[i]).unwrap();
        }
    }
    s
}

pub fn write_snapshot_csv(
    path: &Path,
    snap: &Snapshot,
    config_hash: &str,
) -> Result<(), IoError> {
    write_text(path, &snapshot_csv_string(snap, config_hash))
}

fn parse_comment_header<'a, T: Deserialize<'a>>(
    path: &Path,
    line: Option<&'a str>,
    schema: &str,
) -> Result<T, IoError> {
    let raw = line.ok_or_else(|| malformed(path, 1, "empty file"))?;
    let json = raw
        .strip_prefix("# ")
        .ok_or_else(|| malformed(path, 1, "missing '# ' header line"))?;
    let header: T = serde_json::from_str(json)
        .map_err(|e| malformed(path, 1, format!("bad header: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(json).unwrap();
    match value.get("schema").and_then(|v| v.as_str()) {
        Some(s) if s == schema => Ok(header),
        Some(s) => Err(malformed(
            path,
            1,
            format!("schema {s:?}, expected {schema:?}"),
        )),
        None => Err(malformed(path, 1, "header has no schema tag")),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64, IoError> {
    s.parse::<f64>()
        .map_err(|_| malformed(path, line, format!("bad {field} value {s:?}")))
}

fn parse_opt_f64(
    path: &Path,
    line: usize,
    field: &str,
    s: &str,
) -> Result<Option<f64>, IoError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, line, field, s).map(Some)
    }
}

/// Rebuild a [`Snapshot`] from its CSV form, bit-exactly.
pub fn read_snapshot_csv(path: &Path) -> Result<SnapshotFile, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: SnapshotHeader = parse_comment_header(path, lines.next(), SNAPSHOT_SCHEMA)?;
    match lines.next() {
        Some(cols) if cols == SNAPSHOT_COLUMNS => {}
        other => {
            return Err(malformed(
                path,
                2,
                format!("column header {other:?}, expected {SNAPSHOT_COLUMNS:?}"),
            ))
        }
    }
    if header.spacings.len() != header.extents.len() {
        return Err(malformed(path, 1, "spacings and extents lengths differ"));
    }

    let mut levels: Vec<SnapshotLevel> = Vec::new();
    for (idx, row) in lines.enumerate() {
        let lineno = idx + 3;
        let mut cells = row.split(',');
        let mut next = |field: &str| {
            cells
                .next()
                .ok_or_else(|| malformed(path, lineno, format!("missing {field} column")))
        };
        let k: usize = next("level")?
            .parse()
            .map_err(|_| malformed(path, lineno, "bad level index"))?;
        let r = parse_f64(path, lineno, "r", next("r")?)?;
        let u = parse_f64(path, lineno, "u", next("u")?)?;
        let v = parse_f64(path, lineno, "v", next("v")?)?;
        if cells.next().is_some() {
            return Err(malformed(path, lineno, "too many columns"));
        }

        if k == levels.len() {
            let h = *header
                .spacings
                .get(k)
                .ok_or_else(|| malformed(path, lineno, "level beyond header spacings"))?;
            levels.push(SnapshotLevel {
                h,
                u: Vec::new(),
                v: Vec::new(),
            });
        } else if k + 1 != levels.len() {
            return Err(malformed(path, lineno, "level index out of order"));
        }
        let lvl = levels.last_mut().unwrap();
        let expect_r = lvl.u.len() as f64 * lvl.h;
        if r.to_bits() != expect_r.to_bits() {
            return Err(malformed(
                path,
                lineno,
                format!("node radius {r} does not match {expect_r}"),
            ));
        }
        lvl.u.push(u);
        lvl.v.push(v);
    }

    if levels.len() != header.spacings.len() {
        return Err(malformed(
            path,
            1,
            format!(
                "header promises {} levels, file has {}",
                header.spacings.len(),
                levels.len()
            ),
        ));
    }
    for (k, lvl) in levels.iter().enumerate() {
        if lvl.u.len() < 2 {
            return Err(malformed(path, 1, format!("level {k} has fewer than 2 nodes")));
        }
        if lvl.extent().to_bits() != header.extents[k].to_bits() {
            return Err(malformed(
                path,
                1,
                format!("level {k} extent differs from header"),
            ));
        }
    }

    Ok(SnapshotFile {
        snapshot: Snapshot {
            time: header.time,
            levels,
        },
        config_hash: header.config_hash,
    })
}

pub fn diagnostics_csv_string(series: &DiagnosticsSeries, config_hash: &str) -> String {
    let header = SeriesHeader {
        schema: DIAGNOSTICS_SCHEMA.into(),
        config_hash: config_hash.into(),
    };
    let mut s = String::new();
    writeln!(
        s,
        "# {}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .unwrap();
    s.push_str(DIAGNOSTIC_COLUMNS);
    s.push('\n');
    for rec in &series.records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            rec.t,
            rec.u_r_center,
            opt_cell(rec.lambda),
            rec.sign.map(|x| x.to_string()).unwrap_or_default(),
            rec.e_total,
            opt_cell(rec.e_kinetic_lightcone),
            opt_cell(rec.e_potential_lightcone),
            opt_cell(rec.profile_error),
            rec.finest_level,
        )
        .unwrap();
    }
    s
}

pub fn write_diagnostics_csv(
    path: &Path,
    series: &DiagnosticsSeries,
    config_hash: &str,
) -> Result<(), IoError> {
    write_text(path, &diagnostics_csv_string(series, config_hash))
}

/// Rebuild a diagnostics series from its CSV form, bit-exactly.
pub fn read_diagnostics_csv(path: &Path) -> Result<DiagnosticsFile, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: SeriesHeader = parse_comment_header(path, lines.next(), DIAGNOSTICS_SCHEMA)?;
    match lines.next() {
        Some(cols) if cols == DIAGNOSTIC_COLUMNS => {}
        other => {
            return Err(malformed(
                path,
                2,
                format!("column header {other:?}, expected {DIAGNOSTIC_COLUMNS:?}"),
            ))
        }
    }

    let mut records = Vec::new();
    for (idx, row) in lines.enumerate() {
        let lineno = idx + 3;
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != 9 {
            return Err(malformed(
                path,
                lineno,
                format!("expected 9 columns, found {}", cells.len()),
            ));
        }
        let sign = match cells[3] {
            "" => None,
            "+1" => Some(Sign::Plus),
            "-1" => Some(Sign::Minus),
            other => {
                return Err(malformed(path, lineno, format!("bad sign value {other:?}")))
            }
        };
        records.push(DiagnosticRecord {
            t: parse_f64(path, lineno, "t", cells[0])?,
            u_r_center: parse_f64(path, lineno, "u_r_center", cells[1])?,
            lambda: parse_opt_f64(path, lineno, "lambda", cells[2])?,
            sign,
            e_total: parse_f64(path, lineno, "e_total", cells[4])?,
            e_kinetic_lightcone: parse_opt_f64(path, lineno, "e_kinetic_lightcone", cells[5])?,
            e_potential_lightcone: parse_opt_f64(
                path,
                lineno,
                "e_potential_lightcone",
                cells[6],
            )?,
            profile_error: parse_opt_f64(path, lineno, "profile_error", cells[7])?,
            finest_level: cells[8]
                .parse()
                .map_err(|_| malformed(path, lineno, "bad finest_level value"))?,
        });
    }

    Ok(DiagnosticsFile {
        series: DiagnosticsSeries { records },
        config_hash: header.config_hash,
    })
}

/// Manifest for one classified evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeFile {
    pub schema: String,
    pub config_hash: String,
    pub config: SimConfig,
    pub outcome: RunOutcome,
}

impl OutcomeFile {
    pub fn new(config: &SimConfig, outcome: &RunOutcome) -> Self {
        OutcomeFile {
            schema: OUTCOME_SCHEMA.into(),
            config_hash: config.hash_hex(),
            config: canonical_config(config),
            outcome: outcome.clone(),
        }
    }
}

/// Manifest for a critical-amplitude search: the probe template, every
/// probe issued, and the final bracket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionFile {
    pub schema: String,
    pub config_hash: String,
    pub template: SimConfig,
    pub result: BisectionResult,
}

impl BisectionFile {
    pub fn new(template: &SimConfig, result: &BisectionResult) -> Self {
        BisectionFile {
            schema: BISECTION_SCHEMA.into(),
            config_hash: template.hash_hex(),
            template: canonical_config(template),
            result: result.clone(),
        }
    }
}

/// Manifest for a scale-history power-law fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub schema: String,
    /// Hash carried over from the series the fit was made from.
    pub config_hash: String,
    pub fit: PowerLawFit,
}

impl FitFile {
    pub fn new(config_hash: &str, fit: &PowerLawFit) -> Self {
        FitFile {
            schema: FIT_SCHEMA.into(),
            config_hash: config_hash.into(),
            fit: fit.clone(),
        }
    }
}

/// Manifest for a three-resolution self-convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceFile {
    pub schema: String,
    pub config_hash: String,
    pub config: SimConfig,
    pub study: ConvergenceStudy,
}

impl ConvergenceFile {
    pub fn new(config: &SimConfig, study: &ConvergenceStudy) -> Self {
        ConvergenceFile {
            schema: CONVERGENCE_SCHEMA.into(),
            config_hash: config.hash_hex(),
            config: canonical_config(config),
            study: study.clone(),
        }
    }
}
