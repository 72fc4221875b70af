//! CSV emission and parsing, and static SVG plots.
//!
//! Floats are written in Rust's shortest round-trip scientific notation
//! (`{:e}`), with zero written as `0`, so write, read, write is byte stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{median, ExperimentRecord, HeatmapMatrix, RecordStatus};
use crate::linalg::{DenseMatrix, Vector};
use crate::rules::RuleId;
use crate::theory::{ConvergenceSweepReport, Lemma1Trial, NoiseConditionReport};

pub const RECORDS_HEADER: [&str; 10] = [
    "rule",
    "delta_rel",
    "eta_rel",
    "realization",
    "alpha_star",
    "fallback",
    "e_rel",
    "e_opt",
    "e_per",
    "status",
];

pub const HEATMAP_CORNER: &str = "delta/eta";

pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:e}")
    }
}

fn parse_float(s: &str, path: &Path, line: u64) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::csv(path, format!("line {line}: not a number: {s:?}")))
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file)))
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, row: &[String], path: &Path) -> Result<()> {
    w.write_record(row).map_err(|e| Error::csv(path, e))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

/// Writes records sorted by rule, δ, η and realization.
pub fn write_records_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut sorted = records.to_vec();
    crate::harness::sort_records(&mut sorted);
    let mut w = create(path)?;
    write_row(&mut w, &RECORDS_HEADER.map(String::from), path)?;
    for r in &sorted {
        let row = [
            r.rule.to_string(),
            format_float(r.delta_rel),
            format_float(r.eta_rel),
            r.realization.to_string(),
            format_float(r.alpha_star),
            r.fallback_used.to_string(),
            format_float(r.e_rel),
            format_float(r.e_opt),
            format_float(r.e_per),
            r.status.as_str().to_string(),
        ];
        write_row(&mut w, &row, path)?;
    }
    finish(w, path)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut rd = reader(path)?;
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i as u64 + 1;
        if i == 0 {
            if row.iter().ne(RECORDS_HEADER) {
                return Err(Error::csv(path, "unexpected records header"));
            }
            continue;
        }
        if row.len() != RECORDS_HEADER.len() {
            return Err(Error::csv(path, format!("line {line}: expected 10 fields, got {}", row.len())));
        }
        let bad = |what: &str| Error::csv(path, format!("line {line}: bad {what}"));
        let f = |k: usize| parse_float(&row[k], path, line);
        out.push(ExperimentRecord {
            rule: row[0].parse().map_err(|_| bad("rule"))?,
            delta_rel: f(1)?,
            eta_rel: f(2)?,
            realization: row[3].parse().map_err(|_| bad("realization"))?,
            alpha_star: f(4)?,
            fallback_used: row[5].parse().map_err(|_| bad("fallback"))?,
            e_rel: f(6)?,
            e_opt: f(7)?,
            e_per: f(8)?,
            status: match &row[9] {
                "ok" => RecordStatus::Ok,
                "error" => RecordStatus::Failed,
                _ => return Err(bad("status")),
            },
        });
    }
    if out.is_empty() && rd.position().line() == 1 {
        return Err(Error::csv(path, "missing header"));
    }
    Ok(out)
}

pub fn write_heatmap_csv(matrix: &HeatmapMatrix, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec![HEATMAP_CORNER.to_string()];
    header.extend(matrix.eta_levels.iter().map(|&e| format_float(e)));
    write_row(&mut w, &header, path)?;
    for (i, &d) in matrix.delta_levels.iter().enumerate() {
        let mut row = vec![format_float(d)];
        row.extend((0..matrix.eta_levels.len()).map(|j| format_float(matrix.get(i, j))));
        write_row(&mut w, &row, path)?;
    }
    finish(w, path)
}

pub fn read_heatmap_csv(path: &Path) -> Result<HeatmapMatrix> {
    let mut rd = reader(path)?;
    let mut rows = rd.records();
    let header = rows
        .next()
        .ok_or_else(|| Error::csv(path, "empty heatmap file"))?
        .map_err(|e| Error::csv(path, e))?;
    if header.get(0) != Some(HEATMAP_CORNER) {
        return Err(Error::csv(path, "unexpected heatmap header"));
    }
    let eta_levels = header
        .iter()
        .skip(1)
        .map(|s| parse_float(s, path, 1))
        .collect::<Result<Vec<f64>>>()?;
    let mut delta_levels = Vec::new();
    let mut cells = Vec::new();
    for (i, row) in rows.enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i as u64 + 2;
        if row.len() != eta_levels.len() + 1 {
            return Err(Error::csv(path, format!("line {line}: ragged row")));
        }
        delta_levels.push(parse_float(&row[0], path, line)?);
        for s in row.iter().skip(1) {
            cells.push(parse_float(s, path, line)?);
        }
    }
    HeatmapMatrix::new(delta_levels, eta_levels, cells)
}

/// `rule,median_e_rel` rows followed by an `e_opt` row.
pub fn write_medians_csv(medians: &BTreeMap<RuleId, f64>, e_opt: Option<f64>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_row(&mut w, &["rule".into(), "median_e_rel".into()], path)?;
    for (rule, m) in medians {
        write_row(&mut w, &[rule.to_string(), format_float(*m)], path)?;
    }
    if let Some(m) = e_opt {
        write_row(&mut w, &["e_opt".into(), format_float(m)], path)?;
    }
    finish(w, path)
}

pub fn write_lemma1_csv(rows: &[Lemma1Trial], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_row(&mut w, &["p", "q", "trial", "eta", "max_ratio"].map(String::from), path)?;
    for r in rows {
        let row = [
            format_float(r.report.p.value()),
            format_float(r.report.q.value()),
            r.trial.to_string(),
            format_float(r.eta),
            format_float(r.report.max_ratio),
        ];
        write_row(&mut w, &row, path)?;
    }
    finish(w, path)
}

pub fn write_noise_condition_csv(reports: &[NoiseConditionReport], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_row(&mut w, &["functional", "alpha", "ratio"].map(String::from), path)?;
    for rep in reports {
        for &(alpha, ratio) in &rep.ratios {
            let row = [rep.functional.code().to_string(), format_float(alpha), format_float(ratio)];
            write_row(&mut w, &row, path)?;
        }
    }
    finish(w, path)
}

pub fn write_sweep_csv(report: &ConvergenceSweepReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_row(
        &mut w,
        &["delta_rel", "eta_rel", "seed", "alpha_star", "e_rel"].map(String::from),
        path,
    )?;
    for level in &report.levels {
        for (s, (&a, &e)) in level.alpha_stars.iter().zip(&level.e_rels).enumerate() {
            let row = [
                format_float(level.delta_rel),
                format_float(level.eta_rel),
                s.to_string(),
                format_float(a),
                format_float(e),
            ];
            write_row(&mut w, &row, path)?;
        }
    }
    finish(w, path)
}

/// Dense matrix as row-major CSV without header.
pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_float(m[(i, j)])).collect();
        write_row(&mut w, &row, path)?;
    }
    finish(w, path)
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let mut rd = reader(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(Error::csv(path, format!("line {}: ragged row", i + 1)));
        }
        for s in row.iter() {
            values.push(parse_float(s, path, i as u64 + 1)?);
        }
        rows += 1;
    }
    Ok(DenseMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

/// Vector as a single CSV column.
pub fn write_vector_csv(v: &Vector, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for &x in v.iter() {
        write_row(&mut w, &[format_float(x)], path)?;
    }
    finish(w, path)
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const PLOT_WIDTH: f64 = 720.0;
const LABEL_WIDTH: f64 = 90.0;
const ROW_HEIGHT: f64 = 28.0;
const MARGIN: f64 = 20.0;

/// Log-scale dot plot of `e_rel`: one row per rule with a marker per
/// realization and a median marker, and a final row for `e_opt`.
pub fn render_dot_plot(records: &[ExperimentRecord]) -> Result<String> {
    let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::InvalidArgument("dot plot needs at least one successful record".into()));
    }
    let mut rows: BTreeMap<RuleId, Vec<f64>> = BTreeMap::new();
    for r in &ok {
        rows.entry(r.rule).or_default().push(r.e_rel);
    }
    // The optimum is shared by all rules of a realization; read it from one rule.
    let first = *rows.keys().next().expect("nonempty");
    let opt: Vec<f64> = ok.iter().filter(|r| r.rule == first).map(|r| r.e_opt).collect();

    let positive = rows.values().flatten().chain(&opt).copied().filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.log10(), hi.log10()) } else { (-1.0, 0.0) };
    let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let span = PLOT_WIDTH - LABEL_WIDTH - 2.0 * MARGIN;
    let x_of = |v: f64| {
        let t = if v > 0.0 && v.is_finite() { (v.log10() - lo) / (hi - lo) } else { 0.0 };
        LABEL_WIDTH + MARGIN + t.clamp(0.0, 1.0) * span
    };

    let height = (rows.len() + 2) as f64 * ROW_HEIGHT + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_WIDTH}\" height=\"{height}\" viewBox=\"0 0 {PLOT_WIDTH} {height}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let emit_row = |s: &mut String, k: usize, label: &str, values: &[f64], marker: &str, med: &str| {
        let y = MARGIN + (k as f64 + 0.5) * ROW_HEIGHT;
        let _ = writeln!(s, "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" font-family=\"monospace\">{label}</text>", 4.0, y + 4.0);
        let _ = writeln!(s, "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{:.3}\" y2=\"{y:.3}\" stroke=\"#ddd\"/>", LABEL_WIDTH + MARGIN, PLOT_WIDTH - MARGIN);
        for &v in values {
            let _ = writeln!(s, "<circle class=\"{marker}\" cx=\"{:.3}\" cy=\"{y:.3}\" r=\"2.5\" fill=\"black\"/>", x_of(v));
        }
        if let Some(m) = median(values) {
            let _ = writeln!(s, "<circle class=\"{med}\" cx=\"{:.3}\" cy=\"{y:.3}\" r=\"5\" fill=\"none\" stroke=\"green\" stroke-width=\"2\"/>", x_of(m));
        }
    };
    for (k, (rule, values)) in rows.iter().enumerate() {
        emit_row(&mut s, k, &rule.to_string(), values, "marker", "median");
    }
    emit_row(&mut s, rows.len(), "e_opt", &opt, "opt-marker", "opt-median");
    let axis_y = MARGIN + (rows.len() as f64 + 1.5) * ROW_HEIGHT;
    let _ = writeln!(
        s,
        "<text x=\"{:.3}\" y=\"{axis_y:.3}\" font-size=\"11\" font-family=\"monospace\">1e{lo:.2}</text>",
        LABEL_WIDTH + MARGIN
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.3}\" y=\"{axis_y:.3}\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"end\">1e{hi:.2}</text>",
        PLOT_WIDTH - MARGIN
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_dot_plot(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    write_text(&render_dot_plot(records)?, path)
}

/// Cell colours: red where the modified rule wins (θ > 0), blue where it
/// loses, grey for missing values.
pub fn render_heatmap(matrix: &HeatmapMatrix) -> String {
    let cell = 36.0;
    let rows = matrix.delta_levels.len();
    let cols = matrix.eta_levels.len();
    let width = LABEL_WIDTH + cols as f64 * cell + MARGIN;
    let height = MARGIN + ROW_HEIGHT + rows as f64 * cell + MARGIN;
    let scale = matrix
        .cells
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (j, e) in matrix.eta_levels.iter().enumerate() {
        let x = LABEL_WIDTH + (j as f64 + 0.5) * cell;
        let _ = writeln!(s, "<text x=\"{x:.3}\" y=\"{:.3}\" font-size=\"10\" font-family=\"monospace\" text-anchor=\"middle\">{}</text>", MARGIN + 12.0, format_float(*e));
    }
    for (i, d) in matrix.delta_levels.iter().enumerate() {
        let y = MARGIN + ROW_HEIGHT + i as f64 * cell;
        let _ = writeln!(s, "<text x=\"4\" y=\"{:.3}\" font-size=\"10\" font-family=\"monospace\">{}</text>", y + cell / 2.0 + 4.0, format_float(*d));
        for j in 0..cols {
            let v = matrix.get(i, j);
            let fill = if !v.is_finite() {
                "#999999".to_string()
            } else {
                let t = if scale > 0.0 { (v.abs() / scale).min(1.0) } else { 0.0 };
                let fade = (255.0 * (1.0 - t)).round() as u8;
                if v > 0.0 {
                    format!("#ff{fade:02x}{fade:02x}")
                } else {
                    format!("#{fade:02x}{fade:02x}ff")
                }
            };
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{:.3}\" y=\"{y:.3}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\"><title>{}</title></rect>",
                LABEL_WIDTH + j as f64 * cell,
                format_float(v)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_heatmap_plot(matrix: &HeatmapMatrix, path: &Path) -> Result<()> {
    write_text(&render_heatmap(matrix), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rule: &str, delta: f64, realization: usize, e_rel: f64) -> ExperimentRecord {
        ExperimentRecord {
            rule: rule.parse().unwrap(),
            delta_rel: delta,
            eta_rel: 0.03,
            realization,
            alpha_star: 1.234_567_890_123e-4,
            fallback_used: realization % 2 == 1,
            e_rel,
            e_opt: 0.1,
            e_per: e_rel / 0.1,
            status: RecordStatus::Ok,
        }
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(0.01), "1e-2");
        assert_eq!(format_float(f64::INFINITY), "inf");
        let v = 0.1 + 0.2;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn records_round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut records = vec![
            record("QO", 0.02, 1, 0.3),
            record("HD-SH2", 0.02, 0, 0.2),
            record("HD", 0.01, 0, 0.1),
        ];
        records.push(ExperimentRecord {
            status: RecordStatus::Failed,
            e_per: f64::INFINITY,
            ..record("HR", 0.01, 3, 0.4)
        });
        write_records_csv(&records, &path).unwrap();
        let back = read_records_csv(&path).unwrap();
        let mut expected = records.clone();
        crate::harness::sort_records(&mut expected);
        assert_eq!(back, expected);
        let bytes = std::fs::read(&path).unwrap();
        write_records_csv(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("rule,delta_rel,eta_rel,realization,alpha_star,fallback,e_rel,e_opt,e_per,status\nHD,"));
    }

    #[test]
    fn empty_records_file_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert!(read_records_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn heatmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let single = HeatmapMatrix::new(vec![0.01], vec![0.02], vec![0.0]).unwrap();
        write_heatmap_csv(&single, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "delta/eta,2e-2\n1e-2,0\n");
        let m = HeatmapMatrix::new(vec![0.01, 0.02], vec![0.01, 0.05, 0.1], vec![1.5, -2.0, 0.0, 3.25, f64::NAN, 7.0]).unwrap();
        write_heatmap_csv(&m, &path).unwrap();
        let back = read_heatmap_csv(&path).unwrap();
        assert_eq!(back.delta_levels, m.delta_levels);
        assert_eq!(back.get(1, 0), 3.25);
        assert!(back.get(1, 1).is_nan());
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let a = DenseMatrix::from_row_slice(2, 3, &[1.0, 2.5e-7, 0.0, -3.0, 1.0 / 3.0, 9.0]);
        write_matrix_csv(&a, &path).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), a);
    }

    #[test]
    fn dot_plot_marker_counts() {
        let one = render_dot_plot(&[record("QO", 0.01, 0, 0.2)]).unwrap();
        assert_eq!(one.matches("class=\"marker\"").count(), 1);
        assert_eq!(one.matches("class=\"median\"").count(), 1);
        assert_eq!(one.matches("class=\"opt-marker\"").count(), 1);

        let many: Vec<ExperimentRecord> = (0..5)
            .flat_map(|r| [record("QO", 0.01, r, 0.2 + r as f64 * 0.01), record("HD", 0.01, r, 0.3)])
            .collect();
        let svg = render_dot_plot(&many).unwrap();
        assert_eq!(svg.matches("class=\"marker\"").count(), 10);
        assert_eq!(svg.matches("class=\"median\"").count(), 2);
        assert_eq!(svg.matches("class=\"opt-marker\"").count(), 5);
        assert_eq!(svg, render_dot_plot(&many).unwrap());
        assert!(render_dot_plot(&[]).is_err());
    }

    #[test]
    fn heatmap_svg_cells() {
        let m = HeatmapMatrix::new(vec![0.01, 0.02], vec![0.01], vec![5.0, -5.0]).unwrap();
        let svg = render_heatmap(&m);
        assert_eq!(svg.matches("class=\"cell\"").count(), 2);
        assert!(svg.contains("#ff0000") && svg.contains("#0000ff"));
    }
}
