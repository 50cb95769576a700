//! Plain-text file formats: scan sequences, convergence traces, and
//! spectra overlays.
//!
//! Every format is comma-separated with a versioned first line, so files
//! stay inspectable and plot directly with external tools. Numbers are
//! serialized with the shortest decimal that round-trips the exact f64,
//! which makes write → read → write byte-stable and read → write → read
//! lossless. Writers are deterministic functions of their inputs;
//! concurrent writes to distinct paths are safe, same-path concurrent
//! writes are undefined.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::estimator::{EstimatorError, ScanRecord};
use crate::spectrum::{EnergyGrid, SpectrumError};

pub const SCANS_FORMAT_VERSION: &str = "randspec-scans v1";
pub const TRACE_FORMAT_VERSION: &str = "randspec-trace v1";
pub const OVERLAY_FORMAT_VERSION: &str = "randspec-overlay v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported format header {found:?}, expected {expected:?}")]
    VersionMismatch { expected: &'static str, found: String },
    #[error("line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: scan {scan} has {got} bins, the header implies {expected}")]
    RowLengthMismatch {
        line: usize,
        scan: u64,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: scan index {got} breaks the contiguous sequence, expected {expected}")]
    NonContiguousIndex { line: usize, expected: u64, got: u64 },
    #[error("line {line}: {source}")]
    InvalidScan {
        line: usize,
        source: EstimatorError,
    },
    #[error("file contains no scan rows")]
    NoScans,
    #[error(transparent)]
    Grid(#[from] SpectrumError),
    #[error("record {index} has {got} bins but the grid has {expected}")]
    RecordGridMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("trace columns are inconsistent: {reason}")]
    TraceShape { reason: String },
    #[error("overlay columns are inconsistent: {reason}")]
    OverlayShape { reason: String },
}

/// In-memory image of a scan file: the grid descriptor, optionally the
/// declared intensity mean and dispersion, and one record per scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFile {
    pub grid: EnergyGrid,
    pub declared_mean: Option<f64>,
    pub declared_dispersion: Option<f64>,
    pub records: Vec<ScanRecord>,
}

fn push_f64(out: &mut String, value: f64) {
    write!(out, "{value}").expect("writing to a String cannot fail");
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64, IoError> {
    token.parse::<f64>().map_err(|_| IoError::MalformedRow {
        line,
        reason: format!("cannot parse {what} from {token:?}"),
    })
}

/// Writes a scan file. Layout:
///
/// ```text
/// randspec-scans v1
/// grid,<start_ev>,<stop_ev>,<step_ev>
/// intensity_stats,<mean>,<dispersion>        (optional)
/// <scan index from 1>,<intensity>,<bin 0>,<bin 1>,...
/// ```
pub fn write_scans(path: &Path, file: &ScanFile) -> Result<(), IoError> {
    let bins = file.grid.len();
    for (index, record) in file.records.iter().enumerate() {
        if record.bins() != bins {
            return Err(IoError::RecordGridMismatch {
                index: index + 1,
                expected: bins,
                got: record.bins(),
            });
        }
    }
    let mut out = String::new();
    out.push_str(SCANS_FORMAT_VERSION);
    out.push('\n');
    out.push_str("grid,");
    push_f64(&mut out, file.grid.start_ev());
    out.push(',');
    push_f64(&mut out, file.grid.stop_ev());
    out.push(',');
    push_f64(&mut out, file.grid.step_ev());
    out.push('\n');
    if let (Some(mean), Some(dispersion)) = (file.declared_mean, file.declared_dispersion) {
        out.push_str("intensity_stats,");
        push_f64(&mut out, mean);
        out.push(',');
        push_f64(&mut out, dispersion);
        out.push('\n');
    }
    for (index, record) in file.records.iter().enumerate() {
        write!(out, "{}", index + 1).expect("write to String");
        out.push(',');
        push_f64(&mut out, record.intensity());
        for &j in record.photocurrent() {
            out.push(',');
            push_f64(&mut out, j);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads and validates a scan file. The header is validated before any
/// row is parsed; row errors carry the offending line number.
pub fn read_scans(path: &Path) -> Result<ScanFile, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, version) = lines.next().ok_or(IoError::MalformedHeader {
        line: 1,
        reason: "empty file".into(),
    })?;
    if version != SCANS_FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            expected: SCANS_FORMAT_VERSION,
            found: version.to_string(),
        });
    }

    let (_, grid_line) = lines.next().ok_or(IoError::MalformedHeader {
        line: 2,
        reason: "missing grid line".into(),
    })?;
    let grid_fields: Vec<&str> = grid_line.split(',').collect();
    if grid_fields.len() != 4 || grid_fields[0] != "grid" {
        return Err(IoError::MalformedHeader {
            line: 2,
            reason: format!("expected grid,<start>,<stop>,<step>, got {grid_line:?}"),
        });
    }
    let start = parse_f64(grid_fields[1], 2, "grid start")?;
    let stop = parse_f64(grid_fields[2], 2, "grid stop")?;
    let step = parse_f64(grid_fields[3], 2, "grid step")?;
    let grid = EnergyGrid::new(start, stop, step)?;
    let bins = grid.len();

    let mut declared_mean = None;
    let mut declared_dispersion = None;
    let mut records = Vec::new();
    let mut expected_index = 1u64;
    let mut pending = lines.peekable();
    if let Some(&(_, line)) = pending.peek() {
        if line.starts_with("intensity_stats,") {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(IoError::MalformedHeader {
                    line: 3,
                    reason: format!("expected intensity_stats,<mean>,<dispersion>, got {line:?}"),
                });
            }
            declared_mean = Some(parse_f64(fields[1], 3, "declared mean")?);
            declared_dispersion = Some(parse_f64(fields[2], 3, "declared dispersion")?);
            pending.next();
        }
    }

    for (zero_based, line) in pending {
        let line_no = zero_based + 1;
        let mut fields = line.split(',');
        let index_tok = fields.next().ok_or_else(|| IoError::MalformedRow {
            line: line_no,
            reason: "empty row".into(),
        })?;
        let index: u64 = index_tok.parse().map_err(|_| IoError::MalformedRow {
            line: line_no,
            reason: format!("cannot parse scan index from {index_tok:?}"),
        })?;
        if index != expected_index {
            return Err(IoError::NonContiguousIndex {
                line: line_no,
                expected: expected_index,
                got: index,
            });
        }
        let intensity_tok = fields.next().ok_or_else(|| IoError::MalformedRow {
            line: line_no,
            reason: "row has no intensity field".into(),
        })?;
        let intensity = parse_f64(intensity_tok, line_no, "intensity")?;
        let mut photocurrent = Vec::with_capacity(bins);
        for token in fields {
            photocurrent.push(parse_f64(token, line_no, "photocurrent")?);
        }
        if photocurrent.len() != bins {
            return Err(IoError::RowLengthMismatch {
                line: line_no,
                scan: index,
                expected: bins,
                got: photocurrent.len(),
            });
        }
        let record = ScanRecord::new(intensity, photocurrent)
            .map_err(|source| IoError::InvalidScan {
                line: line_no,
                source,
            })?;
        records.push(record);
        expected_index += 1;
    }

    if records.is_empty() {
        return Err(IoError::NoScans);
    }
    Ok(ScanFile {
        grid,
        declared_mean,
        declared_dispersion,
        records,
    })
}

/// Estimate history at the control points: one column per control point,
/// labeled with its energy at three decimals, one row per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub energies_ev: Vec<f64>,
    /// `values[cp][iter]`; all series share one length.
    pub values: Vec<Vec<f64>>,
}

impl TraceFile {
    fn validate(&self) -> Result<usize, IoError> {
        if self.energies_ev.len() != self.values.len() {
            return Err(IoError::TraceShape {
                reason: format!(
                    "{} energy labels for {} series",
                    self.energies_ev.len(),
                    self.values.len()
                ),
            });
        }
        if self.values.is_empty() {
            return Err(IoError::TraceShape {
                reason: "trace has no control points".into(),
            });
        }
        let len = self.values[0].len();
        if len == 0 {
            return Err(IoError::TraceShape {
                reason: "trace has no iterations".into(),
            });
        }
        if let Some(bad) = self.values.iter().find(|s| s.len() != len) {
            return Err(IoError::TraceShape {
                reason: format!("series lengths differ: {} vs {}", len, bad.len()),
            });
        }
        Ok(len)
    }
}

pub fn write_trace(path: &Path, trace: &TraceFile) -> Result<(), IoError> {
    let iterations = trace.validate()?;
    let mut out = String::new();
    out.push_str(TRACE_FORMAT_VERSION);
    out.push('\n');
    out.push_str("iteration");
    for &e in &trace.energies_ev {
        write!(out, ",{e:.3}").expect("write to String");
    }
    out.push('\n');
    for iter in 0..iterations {
        write!(out, "{}", iter + 1).expect("write to String");
        for series in &trace.values {
            out.push(',');
            push_f64(&mut out, series[iter]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceFile, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, version) = lines.next().ok_or(IoError::MalformedHeader {
        line: 1,
        reason: "empty file".into(),
    })?;
    if version != TRACE_FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            expected: TRACE_FORMAT_VERSION,
            found: version.to_string(),
        });
    }
    let (_, header) = lines.next().ok_or(IoError::MalformedHeader {
        line: 2,
        reason: "missing column header".into(),
    })?;
    let mut cols = header.split(',');
    if cols.next() != Some("iteration") {
        return Err(IoError::MalformedHeader {
            line: 2,
            reason: format!("expected an iteration column, got {header:?}"),
        });
    }
    let mut energies = Vec::new();
    for tok in cols {
        energies.push(parse_f64(tok, 2, "control-point energy")?);
    }
    if energies.is_empty() {
        return Err(IoError::MalformedHeader {
            line: 2,
            reason: "trace has no control-point columns".into(),
        });
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); energies.len()];
    let mut expected_iter = 1u64;
    for (zero_based, line) in lines {
        let line_no = zero_based + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != energies.len() + 1 {
            return Err(IoError::MalformedRow {
                line: line_no,
                reason: format!(
                    "expected {} fields, got {}",
                    energies.len() + 1,
                    fields.len()
                ),
            });
        }
        let iter: u64 = fields[0].parse().map_err(|_| IoError::MalformedRow {
            line: line_no,
            reason: format!("cannot parse iteration from {:?}", fields[0]),
        })?;
        if iter != expected_iter {
            return Err(IoError::NonContiguousIndex {
                line: line_no,
                expected: expected_iter,
                got: iter,
            });
        }
        for (series, tok) in values.iter_mut().zip(&fields[1..]) {
            series.push(parse_f64(tok, line_no, "trace value")?);
        }
        expected_iter += 1;
    }
    let trace = TraceFile {
        energies_ev: energies,
        values,
    };
    trace.validate()?;
    Ok(trace)
}

/// The spectra-overlay plot data: the reference spectrum scaled to mean
/// intensity, one example noisy scan, the recursion's estimate scaled the
/// same way, and the injected noise profile.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayFile {
    pub energies_ev: Vec<f64>,
    pub reference: Vec<f64>,
    pub noisy_scan: Vec<f64>,
    pub spsa_estimate: Vec<f64>,
    pub noise_profile: Vec<f64>,
}

impl OverlayFile {
    fn validate(&self) -> Result<usize, IoError> {
        let len = self.energies_ev.len();
        if len == 0 {
            return Err(IoError::OverlayShape {
                reason: "overlay has no rows".into(),
            });
        }
        for (name, column) in [
            ("reference", &self.reference),
            ("noisy_scan", &self.noisy_scan),
            ("spsa_estimate", &self.spsa_estimate),
            ("noise_profile", &self.noise_profile),
        ] {
            if column.len() != len {
                return Err(IoError::OverlayShape {
                    reason: format!("column {name} has {} rows, expected {len}", column.len()),
                });
            }
        }
        Ok(len)
    }
}

pub const OVERLAY_COLUMNS: &str = "e_kin_ev,reference,noisy_scan,spsa_estimate,noise_profile";

pub fn write_overlay(path: &Path, overlay: &OverlayFile) -> Result<(), IoError> {
    let rows = overlay.validate()?;
    let mut out = String::new();
    out.push_str(OVERLAY_FORMAT_VERSION);
    out.push('\n');
    out.push_str(OVERLAY_COLUMNS);
    out.push('\n');
    for i in 0..rows {
        push_f64(&mut out, overlay.energies_ev[i]);
        for column in [
            &overlay.reference,
            &overlay.noisy_scan,
            &overlay.spsa_estimate,
            &overlay.noise_profile,
        ] {
            out.push(',');
            push_f64(&mut out, column[i]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_overlay(path: &Path) -> Result<OverlayFile, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, version) = lines.next().ok_or(IoError::MalformedHeader {
        line: 1,
        reason: "empty file".into(),
    })?;
    if version != OVERLAY_FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            expected: OVERLAY_FORMAT_VERSION,
            found: version.to_string(),
        });
    }
    let (_, header) = lines.next().ok_or(IoError::MalformedHeader {
        line: 2,
        reason: "missing column header".into(),
    })?;
    if header != OVERLAY_COLUMNS {
        return Err(IoError::MalformedHeader {
            line: 2,
            reason: format!("expected columns {OVERLAY_COLUMNS:?}, got {header:?}"),
        });
    }
    let mut overlay = OverlayFile {
        energies_ev: Vec::new(),
        reference: Vec::new(),
        noisy_scan: Vec::new(),
        spsa_estimate: Vec::new(),
        noise_profile: Vec::new(),
    };
    for (zero_based, line) in lines {
        let line_no = zero_based + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(IoError::MalformedRow {
                line: line_no,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        overlay
            .energies_ev
            .push(parse_f64(fields[0], line_no, "energy")?);
        overlay
            .reference
            .push(parse_f64(fields[1], line_no, "reference")?);
        overlay
            .noisy_scan
            .push(parse_f64(fields[2], line_no, "noisy scan")?);
        overlay
            .spsa_estimate
            .push(parse_f64(fields[3], line_no, "estimate")?);
        overlay
            .noise_profile
            .push(parse_f64(fields[4], line_no, "noise profile")?);
    }
    overlay.validate()?;
    Ok(overlay)
}

/// Plot-data emission, dispatching on the figure kind.
#[derive(Debug, Clone)]
pub enum PlotData<'a> {
    SpectraOverlay(&'a OverlayFile),
    ConvergenceTrace(&'a TraceFile),
}

pub fn emit_plot_data(data: PlotData<'_>, path: &Path) -> Result<(), IoError> {
    match data {
        PlotData::SpectraOverlay(overlay) => write_overlay(path, overlay),
        PlotData::ConvergenceTrace(trace) => write_trace(path, trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn small_file(records: Vec<ScanRecord>) -> ScanFile {
        ScanFile {
            grid: EnergyGrid::new(0.0, 0.2, 0.1).unwrap(),
            declared_mean: Some(1.0),
            declared_dispersion: Some(0.27),
            records,
        }
    }

    #[test]
    fn scan_file_round_trips_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        let records = vec![
            ScanRecord::new(0.9273, vec![0.1, 0.25, 1.0 / 3.0]).unwrap(),
            ScanRecord::new(1.2, vec![5e-324, 0.0, 123456.789012345]).unwrap(),
        ];
        let file = small_file(records);
        write_scans(&path, &file).unwrap();
        let read = read_scans(&path).unwrap();
        assert_eq!(read, file);

        // a second write of the re-read data is byte-identical
        let path2 = dir.path().join("scans2.csv");
        write_scans(&path2, &read).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        fs::write(&path, "randspec-scans v9\ngrid,0,1,0.5\n1,1.0,0,0,0\n").unwrap();
        assert!(matches!(
            read_scans(&path).unwrap_err(),
            IoError::VersionMismatch { .. }
        ));
    }

    #[test]
    fn zero_grid_step_fails_before_row_parsing() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        // the row is garbage too, but the header must fail first
        fs::write(
            &path,
            "randspec-scans v1\ngrid,0,1,0\n1,not_a_number,0\n",
        )
        .unwrap();
        assert!(matches!(
            read_scans(&path).unwrap_err(),
            IoError::Grid(SpectrumError::GridStep { .. })
        ));
    }

    #[test]
    fn truncated_row_reports_its_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        fs::write(
            &path,
            "randspec-scans v1\ngrid,0,0.2,0.1\n1,1.0,0,0,0\n2,1.1,0,0\n",
        )
        .unwrap();
        match read_scans(&path).unwrap_err() {
            IoError::RowLengthMismatch {
                line,
                scan,
                expected,
                got,
            } => {
                assert_eq!(line, 4);
                assert_eq!(scan, 2);
                assert_eq!(expected, 3);
                assert_eq!(got, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_contiguous_scan_index_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        fs::write(
            &path,
            "randspec-scans v1\ngrid,0,0.2,0.1\n1,1.0,0,0,0\n3,1.1,0,0,0\n",
        )
        .unwrap();
        assert!(matches!(
            read_scans(&path).unwrap_err(),
            IoError::NonContiguousIndex {
                expected: 2,
                got: 3,
                ..
            }
        ));
    }

    #[test]
    fn invalid_intensity_in_row_carries_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        fs::write(
            &path,
            "randspec-scans v1\ngrid,0,0.2,0.1\n1,-1.0,0,0,0\n",
        )
        .unwrap();
        assert!(matches!(
            read_scans(&path).unwrap_err(),
            IoError::InvalidScan { line: 3, .. }
        ));
    }

    #[test]
    fn file_without_rows_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        fs::write(&path, "randspec-scans v1\ngrid,0,0.2,0.1\n").unwrap();
        assert!(matches!(read_scans(&path).unwrap_err(), IoError::NoScans));
    }

    #[test]
    fn scan_file_without_declared_stats_reads_back_none() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        let mut file = small_file(vec![ScanRecord::new(1.0, vec![0.0, 1.0, 2.0]).unwrap()]);
        file.declared_mean = None;
        file.declared_dispersion = None;
        write_scans(&path, &file).unwrap();
        let read = read_scans(&path).unwrap();
        assert_eq!(read.declared_mean, None);
        assert_eq!(read.declared_dispersion, None);
    }

    #[test]
    fn trace_round_trips_and_labels_energies_with_three_decimals() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = TraceFile {
            energies_ev: vec![25.8, 28.808],
            values: vec![vec![1.0, 0.5, 0.25], vec![8.0, 4.0, 2.0]],
        };
        write_trace(&path, &trace).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap() == "iteration,25.800,28.808");
        assert_eq!(text.lines().count(), 2 + 3);

        let read = read_trace(&path).unwrap();
        assert_eq!(read.values, trace.values);
        let path2 = dir.path().join("trace2.csv");
        write_trace(&path2, &read).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn trace_rejects_ragged_series() {
        let trace = TraceFile {
            energies_ev: vec![1.0, 2.0],
            values: vec![vec![1.0], vec![1.0, 2.0]],
        };
        let dir = tempdir().unwrap();
        assert!(matches!(
            write_trace(&dir.path().join("t.csv"), &trace).unwrap_err(),
            IoError::TraceShape { .. }
        ));
    }

    #[test]
    fn overlay_has_five_columns_and_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("overlay.csv");
        let overlay = OverlayFile {
            energies_ev: vec![25.8, 25.85],
            reference: vec![0.6, 0.7],
            noisy_scan: vec![0.66, 0.77],
            spsa_estimate: vec![0.61, 0.69],
            noise_profile: vec![0.0, 0.0],
        };
        emit_plot_data(PlotData::SpectraOverlay(&overlay), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap().split(',').count(),
            5,
            "overlay must carry exactly five columns"
        );
        let read = read_overlay(&path).unwrap();
        assert_eq!(read, overlay);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Scan files survive write → read for arbitrary finite contents.
        #[test]
        fn scan_round_trip_is_lossless(
            intensities in proptest::collection::vec(1e-6..1e6f64, 1..8),
            seed_j in proptest::collection::vec(0.0..1e9f64, 3),
        ) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("scans.csv");
            let records: Vec<ScanRecord> = intensities.iter().enumerate()
                .map(|(k, &i)| {
                    let j: Vec<f64> = seed_j.iter().map(|&v| v * (k as f64 + 0.5) / 7.0).collect();
                    ScanRecord::new(i, j).unwrap()
                })
                .collect();
            let file = small_file(records);
            write_scans(&path, &file).unwrap();
            let read = read_scans(&path).unwrap();
            prop_assert_eq!(read, file);
        }
    }
}
