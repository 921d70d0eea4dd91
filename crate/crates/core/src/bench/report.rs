use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use super::{BenchError, BenchmarkRecord, WorkloadKind};

pub const CSV_HEADER: [&str; 5] = ["environment", "kind", "size", "iteration", "elapsed_ns"];

fn writer<W: io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_csv<W: io::Write>(records: &[BenchmarkRecord], out: W) -> io::Result<()> {
    let mut w = writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.environment.as_str(),
            r.kind.label(),
            &r.size.to_string(),
            &r.iteration.to_string(),
            &r.elapsed_ns.to_string(),
        ])?;
    }
    w.flush()
}

/// Header plus one LF-terminated line per record.
pub fn emit_csv(records: &[BenchmarkRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("records are UTF-8")
}

fn parse_err(line: u64, message: impl Into<String>) -> BenchError {
    BenchError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: u64,
) -> Result<T, BenchError> {
    let raw = &rec[i];
    raw.parse()
        .map_err(|_| parse_err(line, format!("{}: cannot parse {raw:?}", CSV_HEADER[i])))
}

pub fn parse_csv<R: io::Read>(input: R) -> Result<Vec<BenchmarkRecord>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut rows = rdr.records();
    match rows.next() {
        None => return Err(parse_err(1, "empty input; expected a header row")),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        Some(Ok(h)) if h.iter().ne(CSV_HEADER) => {
            return Err(parse_err(
                1,
                format!("expected header {}", CSV_HEADER.join(",")),
            ))
        }
        Some(Ok(_)) => {}
    }
    let mut out = Vec::new();
    for row in rows {
        let rec = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected 5 fields, found {}", rec.len()),
            ));
        }
        let kind: WorkloadKind = rec[1].parse().map_err(|m: String| parse_err(line, m))?;
        let elapsed_ns: u64 = field(&rec, 4, line)?;
        if elapsed_ns == 0 {
            return Err(parse_err(line, "elapsed_ns must be positive"));
        }
        out.push(BenchmarkRecord {
            environment: rec[0].to_owned(),
            kind,
            size: field(&rec, 2, line)?,
            iteration: field(&rec, 3, line)?,
            elapsed_ns,
        });
    }
    Ok(out)
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p/100 * n)`, ranks counted from 1.
pub fn nearest_rank(sorted: &[u64], percent: u32) -> u64 {
    assert!(!sorted.is_empty() && (1..=100).contains(&percent));
    let n = sorted.len();
    let rank = (percent as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub environment: String,
    pub kind: WorkloadKind,
    pub size: usize,
    pub count: usize,
    pub min: u64,
    pub median: u64,
    pub p95: u64,
    pub max: u64,
}

type Cell = (WorkloadKind, usize);

fn group(records: &[BenchmarkRecord]) -> BTreeMap<(&str, Cell), Vec<u64>> {
    let mut cells: BTreeMap<(&str, Cell), Vec<u64>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.environment.as_str(), (r.kind, r.size)))
            .or_default()
            .push(r.elapsed_ns);
    }
    for v in cells.values_mut() {
        v.sort_unstable();
    }
    cells
}

/// One summary per (environment, kind, size), in that order.
pub fn summarize(records: &[BenchmarkRecord]) -> Result<Vec<Summary>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyRecordSet);
    }
    Ok(group(records)
        .into_iter()
        .map(|((env, (kind, size)), t)| Summary {
            environment: env.to_owned(),
            kind,
            size,
            count: t.len(),
            min: t[0],
            median: nearest_rank(&t, 50),
            p95: nearest_rank(&t, 95),
            max: t[t.len() - 1],
        })
        .collect())
}

pub fn render_summaries(summaries: &[Summary]) -> String {
    let mut s = format!(
        "{:<12} {:<11} {:>9} {:>6} {:>14} {:>14} {:>14} {:>14}\n",
        "environment", "kind", "size", "n", "min_ns", "median_ns", "p95_ns", "max_ns"
    );
    for x in summaries {
        let _ = writeln!(
            s,
            "{:<12} {:<11} {:>9} {:>6} {:>14} {:>14} {:>14} {:>14}",
            x.environment, x.kind, x.size, x.count, x.min, x.median, x.p95, x.max
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellComparison {
    pub kind: WorkloadKind,
    pub size: usize,
    pub native_median_ns: u64,
    pub sandbox_median_ns: u64,
    /// Sandbox median over native median.
    pub ratio: f64,
    pub sandbox_faster: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cells: Vec<CellComparison>,
    pub native_only: Vec<(WorkloadKind, usize)>,
    pub sandbox_only: Vec<(WorkloadKind, usize)>,
}

fn medians(records: &[BenchmarkRecord]) -> BTreeMap<Cell, u64> {
    let mut cells: BTreeMap<Cell, Vec<u64>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.kind, r.size))
            .or_default()
            .push(r.elapsed_ns);
    }
    cells
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_unstable();
            (k, nearest_rank(&v, 50))
        })
        .collect()
}

/// Compares per-cell medians. Environment labels inside each input are
/// ignored; the argument position says which side is which.
pub fn compare_environments(
    native: &[BenchmarkRecord],
    sandbox: &[BenchmarkRecord],
) -> Result<Comparison, BenchError> {
    let n = medians(native);
    let s = medians(sandbox);
    let cells: Vec<CellComparison> = n
        .iter()
        .filter_map(|(cell, &nm)| {
            let &sm = s.get(cell)?;
            let ratio = sm as f64 / nm as f64;
            Some(CellComparison {
                kind: cell.0,
                size: cell.1,
                native_median_ns: nm,
                sandbox_median_ns: sm,
                ratio,
                sandbox_faster: ratio < 1.0,
            })
        })
        .collect();
    if cells.is_empty() {
        return Err(BenchError::NoOverlap);
    }
    Ok(Comparison {
        cells,
        native_only: n.keys().filter(|c| !s.contains_key(c)).copied().collect(),
        sandbox_only: s.keys().filter(|c| !n.contains_key(c)).copied().collect(),
    })
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut s = format!(
        "{:<11} {:>9} {:>16} {:>16} {:>9}\n",
        "kind", "size", "native_median", "sandbox_median", "ratio"
    );
    for x in &c.cells {
        let _ = writeln!(
            s,
            "{:<11} {:>9} {:>16} {:>16} {:>9.2}{}",
            x.kind,
            x.size,
            x.native_median_ns,
            x.sandbox_median_ns,
            x.ratio,
            if x.sandbox_faster {
                "  sandbox faster"
            } else {
                ""
            }
        );
    }
    for (label, cells) in [
        ("native only", &c.native_only),
        ("sandbox only", &c.sandbox_only),
    ] {
        if !cells.is_empty() {
            let list: Vec<String> = cells.iter().map(|(k, n)| format!("{k}@{n}")).collect();
            let _ = writeln!(s, "{label}: {}", list.join(", "));
        }
    }
    s
}
