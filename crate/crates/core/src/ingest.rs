//! Reading order-book snapshots and market-order tapes, and writing every artifact the
//! simulator and analyzers produce.
//!
//! Snapshots are line-delimited JSON, `{"ts":…, "p":…, "bids":[[price,vol],…], "asks":[…]}`.
//! Market orders are CSV `ts,buy,sell`. Tables are CSV preceded by one `# {json}` metadata line.
//! Floats in CSV are written with 17 significant digits; JSON uses shortest round-trip output.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzers::{FrameRecorder, SeriesFrame, Table};
use crate::dynamics::StepRecord;
use crate::error::{Error, Result};
use crate::field::OrderBookField;
use crate::fokker_planck::ReturnDensity;

/// Fraction of malformed lines above which parsing fails outright.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;
/// Snapshot gaps longer than this many `dt` start a new segment.
pub const GAP_FACTOR: f64 = 5.0;
/// At most this many line errors are kept verbatim; the rest are only counted.
const MAX_KEPT_ERRORS: usize = 1000;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One order-book snapshot. Bids are sorted by descending price, asks ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub ts: f64,
    /// Last traded price.
    pub p: f64,
    pub bids: Vec<(f64, f64)>,
    pub asks: Vec<(f64, f64)>,
}

impl SnapshotRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.ts.is_finite() {
            return Err(Error::data("timestamp is not finite"));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::data(format!("trade price must be positive, got {}", self.p)));
        }
        for (name, levels) in [("bid", &self.bids), ("ask", &self.asks)] {
            for &(price, vol) in levels.iter() {
                if !(price > 0.0 && price.is_finite()) {
                    return Err(Error::data(format!("{name} price must be positive, got {price}")));
                }
                if !(vol >= 0.0 && vol.is_finite()) {
                    return Err(Error::data(format!("{name} volume must be >= 0, got {vol}")));
                }
            }
        }
        if self.bids.windows(2).any(|w| w[1].0 > w[0].0) {
            return Err(Error::data("bids are not sorted by descending price"));
        }
        if self.asks.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::data("asks are not sorted by ascending price"));
        }
        Ok(())
    }

    pub fn best_bid(&self) -> Option<f64> {
        self.bids.first().map(|l| l.0)
    }

    pub fn best_ask(&self) -> Option<f64> {
        self.asks.first().map(|l| l.0)
    }

    /// Best bid at or above best ask.
    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    pub fn reference_price(&self, reference: ReferencePrice) -> f64 {
        match (reference, self.best_bid(), self.best_ask()) {
            (ReferencePrice::Mid, Some(b), Some(a)) => 0.5 * (a + b),
            _ => self.p,
        }
    }
}

/// A line that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Summary of a parse pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    /// Nonblank lines seen.
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    /// Crossed books; still yielded but flagged.
    pub crossed: usize,
    /// The first few malformed lines.
    pub errors: Vec<LineError>,
}

impl ParseReport {
    pub fn malformed_fraction(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.malformed as f64 / self.lines as f64
        }
    }

    /// Fails when more than [`MAX_MALFORMED_FRACTION`] of the lines were malformed.
    pub fn check(&self) -> Result<()> {
        if self.malformed_fraction() > MAX_MALFORMED_FRACTION {
            let first = self.errors.first().map(|e| format!("; line {}: {}", e.line, e.message)).unwrap_or_default();
            return Err(Error::data(format!(
                "{} of {} lines malformed ({:.1}%){first}",
                self.malformed,
                self.lines,
                100.0 * self.malformed_fraction()
            )));
        }
        Ok(())
    }
}

/// Streaming snapshot parser. Holds one line at a time; bad lines are recorded and skipped.
///
/// Timestamps must increase strictly; a record that does not advance time counts as malformed.
pub struct SnapshotReader<R> {
    input: R,
    buf: String,
    line_no: usize,
    last_ts: Option<f64>,
    report: ParseReport,
}

impl<R: BufRead> SnapshotReader<R> {
    pub fn new(input: R) -> Self {
        SnapshotReader { input, buf: String::new(), line_no: 0, last_ts: None, report: ParseReport::default() }
    }

    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    /// Consumes the reader; errors if too many lines were malformed.
    pub fn finish(self) -> Result<ParseReport> {
        self.report.check()?;
        Ok(self.report)
    }

    fn reject(&mut self, message: String) {
        self.report.malformed += 1;
        if self.report.errors.len() < MAX_KEPT_ERRORS {
            self.report.errors.push(LineError { line: self.line_no, message });
        }
    }

    fn parse_line(&self, line: &str) -> Result<SnapshotRecord> {
        let rec: SnapshotRecord = serde_json::from_str(line)?;
        rec.validate()?;
        if let Some(last) = self.last_ts {
            if !(rec.ts > last) {
                return Err(Error::data(format!("timestamp {} does not increase past {last}", rec.ts)));
            }
        }
        Ok(rec)
    }

    /// Next valid record, or `Ok(None)` at end of input. Only I/O failures are errors here.
    pub fn next_record(&mut self) -> Result<Option<SnapshotRecord>> {
        loop {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            self.report.lines += 1;
            match self.parse_line(line) {
                Ok(rec) => {
                    self.last_ts = Some(rec.ts);
                    self.report.records += 1;
                    if rec.is_crossed() {
                        self.report.crossed += 1;
                    }
                    return Ok(Some(rec));
                }
                Err(e) => self.reject(e.to_string()),
            }
        }
    }
}

impl<R: BufRead> Iterator for SnapshotReader<R> {
    type Item = Result<SnapshotRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Parses a whole snapshot stream into memory.
pub fn parse_snapshots<R: Read>(input: R) -> Result<(Vec<SnapshotRecord>, ParseReport)> {
    let mut reader = SnapshotReader::new(BufReader::new(input));
    let mut out = Vec::new();
    while let Some(rec) = reader.next_record()? {
        out.push(rec);
    }
    Ok((out, reader.finish()?))
}

pub fn read_snapshot_file(path: &Path) -> Result<(Vec<SnapshotRecord>, ParseReport)> {
    parse_snapshots(std::fs::File::open(path)?)
}

/// Parses several files in parallel; results keep the input order.
pub fn read_snapshot_files(paths: &[&Path]) -> Vec<Result<(Vec<SnapshotRecord>, ParseReport)>> {
    paths.par_iter().map(|p| read_snapshot_file(p)).collect()
}

pub fn write_snapshots<W: Write>(out: W, records: &[SnapshotRecord]) -> Result<()> {
    let mut w = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Snapshot of a simulated field with one order at the centre of every nonempty cell.
pub fn snapshot_from_field(field: &OrderBookField, p0: f64) -> SnapshotRecord {
    let p = p0 * field.log_price.exp();
    let level = |sign: f64| {
        move |(i, &vol): (usize, &f64)| (vol > 0.0).then(|| (p * (sign * (i as f64 + 0.5) * field.dx).exp(), vol))
    };
    SnapshotRecord {
        ts: field.t,
        p,
        bids: field.bid.iter().enumerate().filter_map(level(-1.0)).collect(),
        asks: field.ask.iter().enumerate().filter_map(level(1.0)).collect(),
    }
}

/// Market-order volume executed in the interval ending at `ts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketOrderRecord {
    pub ts: f64,
    pub buy: f64,
    pub sell: f64,
}

pub fn read_market_orders<R: Read>(input: R) -> Result<Vec<MarketOrderRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<MarketOrderRecord>().enumerate() {
        let r = row?;
        if !(r.buy >= 0.0 && r.sell >= 0.0) || !r.ts.is_finite() {
            return Err(Error::data(format!("market-order row {}: volumes must be >= 0", i + 1)));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_market_orders<W: Write>(out: W, records: &[MarketOrderRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ts", "buy", "sell"])?;
    for r in records {
        w.write_record([fmt_f64(r.ts), fmt_f64(r.buy), fmt_f64(r.sell)])?;
    }
    w.flush()?;
    Ok(())
}

/// Price used as the origin of the log-distance coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePrice {
    #[default]
    Trade,
    /// Arithmetic mid of the best quotes, falling back to the trade price for one-sided books.
    Mid,
}

/// Per-cell volumes of one snapshot on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    /// Volume lying beyond the last cell.
    pub overflow_bid: f64,
    pub overflow_ask: f64,
}

/// Assigns every order to cell `floor(|ln p_ref − ln price| / dx)` of a `cells`-long lattice.
pub fn to_log_grid(record: &SnapshotRecord, dx: f64, cells: usize, reference: ReferencePrice) -> Result<LogGrid> {
    if !(dx > 0.0) || cells == 0 {
        return Err(Error::domain("need dx > 0 and at least one cell"));
    }
    record.validate()?;
    let ln_ref = record.reference_price(reference).ln();
    let fill = |levels: &[(f64, f64)]| {
        let mut cells_out = vec![0.0; cells];
        let mut overflow = 0.0;
        for &(price, vol) in levels {
            let i = ((ln_ref - price.ln()).abs() / dx).floor();
            if i < cells as f64 {
                cells_out[i as usize] += vol;
            } else {
                overflow += vol;
            }
        }
        (cells_out, overflow)
    };
    let (bid, overflow_bid) = fill(&record.bids);
    let (ask, overflow_ask) = fill(&record.asks);
    Ok(LogGrid { bid, ask, overflow_bid, overflow_ask })
}

/// How snapshots are resampled into a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    pub dt: f64,
    pub dx: f64,
    pub cells: usize,
    #[serde(default)]
    pub reference: ReferencePrice,
    /// Lattice cells stored in the frame; all when `None`.
    #[serde(default)]
    pub bins: Option<Vec<usize>>,
}

/// Side information from [`build_frame`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub crossed_excluded: usize,
    pub segments: usize,
    /// Sampling instants skipped because the book was stale by more than the gap limit.
    pub gap_samples: usize,
    pub overflow_bid: f64,
    pub overflow_ask: f64,
}

fn median_spacing(ts: &[f64]) -> f64 {
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Resamples snapshots onto a regular `dt` grid (last observation carried forward).
///
/// Velocities are backward log-price differences over `dt`; the first sample of a segment
/// copies its successor. Market orders are summed over `(t − dt, t]`.
pub fn build_frame(
    snapshots: &[SnapshotRecord],
    market_orders: Option<&[MarketOrderRecord]>,
    opts: &FrameOptions,
) -> Result<(SeriesFrame, FrameReport)> {
    if !(opts.dt > 0.0) {
        return Err(Error::domain("frame dt must be > 0"));
    }
    let valid: Vec<&SnapshotRecord> = snapshots.iter().filter(|s| !s.is_crossed()).collect();
    let mut report = FrameReport { crossed_excluded: snapshots.len() - valid.len(), ..Default::default() };
    if valid.len() < 2 {
        return Err(Error::domain("need at least two uncrossed snapshots"));
    }
    let ts: Vec<f64> = valid.iter().map(|s| s.ts).collect();
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("snapshot timestamps must increase strictly"));
    }
    let spacing = median_spacing(&ts);
    if opts.dt < spacing * (1.0 - 1e-9) {
        return Err(Error::domain(format!("dt {} is below the median snapshot spacing {spacing}", opts.dt)));
    }
    let bins = opts.bins.clone().unwrap_or_else(|| (0..opts.cells).collect());
    if bins.iter().any(|&b| b >= opts.cells) {
        return Err(Error::domain("stored bin lies outside the lattice"));
    }
    let grids = valid.iter().map(|s| to_log_grid(s, opts.dx, opts.cells, opts.reference)).collect::<Result<Vec<_>>>()?;
    let ln_p: Vec<f64> = valid.iter().map(|s| s.reference_price(opts.reference).ln()).collect();

    // sampling instants and the snapshot observed at each
    let tol = 1e-9 * opts.dt;
    let steps = ((ts[ts.len() - 1] - ts[0] + tol) / opts.dt).floor() as usize;
    let mut samples: Vec<(f64, usize, u32)> = Vec::with_capacity(steps + 1);
    let mut j = 0;
    let mut segment = 0u32;
    let mut in_gap = false;
    for k in 0..=steps {
        let t = ts[0] + k as f64 * opts.dt;
        while j + 1 < ts.len() && ts[j + 1] <= t + tol {
            j += 1;
        }
        // instants strictly inside a long gap between snapshots are dropped
        if j + 1 < ts.len() && ts[j + 1] - ts[j] > GAP_FACTOR * opts.dt && t > ts[j] + tol {
            report.gap_samples += 1;
            in_gap = true;
            continue;
        }
        if in_gap && !samples.is_empty() {
            segment += 1;
        }
        in_gap = false;
        samples.push((t, j, segment));
    }
    if samples.len() < 2 || !samples.windows(2).any(|w| w[0].2 == w[1].2) {
        return Err(Error::domain("every sample is separated by a gap; no differences available"));
    }
    report.segments = segment as usize + 1;

    let mut frame = SeriesFrame::empty(bins.iter().map(|&b| b as f64 * opts.dx).collect(), opts.dt);
    let (mut bid_buf, mut ask_buf) = (vec![0.0; bins.len()], vec![0.0; bins.len()]);
    let mut seen = vec![false; valid.len()];
    for (k, &(t, j, seg)) in samples.iter().enumerate() {
        let g = &grids[j];
        if !seen[j] {
            seen[j] = true;
            report.overflow_bid += g.overflow_bid;
            report.overflow_ask += g.overflow_ask;
        }
        for (slot, &b) in bins.iter().enumerate() {
            bid_buf[slot] = g.bid[b];
            ask_buf[slot] = g.ask[b];
        }
        let v = if k > 0 && samples[k - 1].2 == seg {
            (ln_p[j] - ln_p[samples[k - 1].1]) / opts.dt
        } else if k + 1 < samples.len() && samples[k + 1].2 == seg {
            (ln_p[samples[k + 1].1] - ln_p[j]) / opts.dt
        } else {
            0.0
        };
        frame.push(t, seg, &bid_buf, &ask_buf, v, g.bid[0] + g.ask[0]);
    }
    if let Some(mo) = market_orders {
        let mut flows = vec![(0.0, 0.0); samples.len()];
        let mut m = 0;
        for (k, &(t, _, _)) in samples.iter().enumerate() {
            let start = t - opts.dt + tol;
            while m < mo.len() && mo[m].ts <= t + tol {
                if mo[m].ts > start {
                    flows[k].0 += mo[m].buy;
                    flows[k].1 += mo[m].sell;
                }
                m += 1;
            }
        }
        frame.mo_flows = Some(flows);
    }
    frame.validate()?;
    Ok((frame, report))
}

/// First line of a StepRecord stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub initial: OrderBookField,
    pub initial_velocity: f64,
    /// Free-form run description (config, seed).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Writes a header line then one StepRecord per line.
pub struct RecordWriter<W: Write> {
    out: BufWriter<W>,
    written: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W, header: &RecordHeader) -> Result<Self> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(RecordWriter { out, written: 0 })
    }

    pub fn write(&mut self, rec: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Streams a StepRecord file back: header first, then records.
pub struct RecordReader<R> {
    input: R,
    buf: String,
    line_no: usize,
    header: RecordHeader,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut buf = String::new();
        if input.read_line(&mut buf)? == 0 {
            return Err(Error::data("record stream is empty"));
        }
        let header: RecordHeader =
            serde_json::from_str(buf.trim()).map_err(|e| Error::data(format!("line 1: bad header: {e}")))?;
        header.initial.validate()?;
        Ok(RecordReader { input, buf, line_no: 1, header })
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn next_record(&mut self) -> Result<Option<StepRecord>> {
        loop {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line).map_err(|e| Error::data(format!("line {}: {e}", self.line_no)))?;
            return Ok(Some(rec));
        }
    }
}

/// Rebuilds a frame from a StepRecord stream by accumulating the per-cell deltas.
///
/// Matches what [`FrameRecorder`] sees during the original run, up to rounding.
pub fn frame_from_records<R: BufRead>(
    reader: &mut RecordReader<R>,
    cells: Option<Vec<usize>>,
    every: usize,
) -> Result<SeriesFrame> {
    let mut field = reader.header.initial.clone();
    let v0 = reader.header.initial_velocity;
    let cells = cells.unwrap_or_else(|| (0..field.cells()).collect());
    if cells.iter().any(|&c| c >= field.cells()) {
        return Err(Error::domain("stored cell lies outside the lattice"));
    }
    let first = match reader.next_record()? {
        Some(r) => r,
        None => return Err(Error::data("record stream has no steps")),
    };
    let dt = first.t - field.t;
    if !(dt > 0.0) {
        return Err(Error::data("record times do not advance"));
    }
    let mut rec = FrameRecorder::new(cells, field.dx, dt, every);
    rec.push_initial(&field, v0);
    let mut next = Some(first);
    while let Some(r) = next {
        if r.delta_bid.len() != field.cells() || r.delta_ask.len() != field.cells() {
            return Err(Error::data(format!("line {}: delta length differs from the lattice", reader.line_no)));
        }
        for (c, d) in field.bid.iter_mut().zip(&r.delta_bid) {
            *c += d;
        }
        for (c, d) in field.ask.iter_mut().zip(&r.delta_ask) {
            *c += d;
        }
        field.t = r.t;
        field.log_price = r.log_price;
        rec.observe(&r, &field);
        next = reader.next_record()?;
    }
    Ok(rec.finish())
}

/// Writes a table as CSV with a leading `# {meta}` line.
pub fn write_table<W: Write>(out: W, table: &Table) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(b"# ")?;
    serde_json::to_writer(&mut out, &table.meta)?;
    out.write_all(b"\n")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        if row.len() != table.columns.len() {
            return Err(Error::domain("table row width differs from the header"));
        }
        w.write_record(row.iter().map(|x| fmt_f64(*x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let meta = match first.trim().strip_prefix('#') {
        Some(json) => serde_json::from_str(json.trim())?,
        None => return Err(Error::data("table is missing its metadata line")),
    };
    let mut rdr = csv::Reader::from_reader(input);
    let columns = rdr.headers()?.iter().map(String::from).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::data(format!("table row {}: bad number {s:?}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

pub fn write_table_file(path: &Path, table: &Table) -> Result<()> {
    write_table(std::fs::File::create(path)?, table)
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    read_table(std::fs::File::open(path)?)
}

/// Two-column `v,p` table of a stationary density.
pub fn density_table(density: &ReturnDensity, meta: BTreeMap<String, serde_json::Value>) -> Table {
    let mut m = serde_json::Map::new();
    m.insert("statistic".into(), "stationary_density".into());
    m.insert("normalization".into(), density.normalization.into());
    m.extend(meta);
    Table {
        meta: serde_json::Value::Object(m),
        columns: vec!["v".into(), "p".into()],
        rows: density.grid.iter().zip(&density.density).map(|(v, p)| vec![*v, *p]).collect(),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(ts: f64, p: f64) -> SnapshotRecord {
        SnapshotRecord {
            ts,
            p,
            bids: vec![(p * 0.9995, 2.0), (p * 0.998, 1.0)],
            asks: vec![(p * 1.0005, 3.0), (p * 1.003, 4.0)],
        }
    }

    fn jsonl(records: &[SnapshotRecord]) -> Vec<u8> {
        let mut out = Vec::new();
        write_snapshots(&mut out, records).unwrap();
        out
    }

    #[test]
    fn empty_input() {
        let (recs, rep) = parse_snapshots(&b""[..]).unwrap();
        assert!(recs.is_empty());
        assert_eq!(rep.lines, 0);
    }

    #[test]
    fn bad_lines_are_counted_with_numbers() {
        let mut text = String::from_utf8(jsonl(&(0..20).map(|k| book(k as f64, 100.0)).collect::<Vec<_>>())).unwrap();
        text.push_str("{not json}\n");
        let (recs, rep) = parse_snapshots(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 20);
        assert_eq!(rep.malformed, 1);
        assert_eq!(rep.errors[0].line, 21);
    }

    #[test]
    fn too_many_bad_lines_fail() {
        let mut text = String::from_utf8(jsonl(&[book(0.0, 100.0), book(1.0, 100.0)])).unwrap();
        text.push_str("garbage\n");
        assert!(matches!(parse_snapshots(text.as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn repeated_timestamp_is_malformed() {
        let recs: Vec<_> = (0..30).map(|k| book(k as f64, 100.0)).collect();
        let mut bad = recs.clone();
        bad.insert(10, book(5.0, 100.0));
        let (out, rep) = parse_snapshots(&jsonl(&bad)[..]).unwrap();
        assert_eq!(out.len(), 30);
        assert_eq!(rep.malformed, 1);
        assert_eq!(rep.errors[0].line, 11);
    }

    #[test]
    fn crossed_books_are_flagged_and_dropped_from_frames() {
        let mut recs: Vec<_> = (0..5).map(|k| book(k as f64, 100.0)).collect();
        recs[2].bids[0].0 = 101.0;
        let (out, rep) = parse_snapshots(&jsonl(&recs)[..]).unwrap();
        assert_eq!(rep.crossed, 1);
        assert!(out[2].is_crossed());
        let opts = FrameOptions { dt: 1.0, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        let (_, fr) = build_frame(&out, None, &opts).unwrap();
        assert_eq!(fr.crossed_excluded, 1);
    }

    #[test]
    fn grid_cells() {
        let p = 50.0;
        let r = SnapshotRecord { ts: 0.0, p, bids: vec![(p, 1.0), (p * (-0.0015f64).exp(), 2.0)], asks: vec![] };
        let g = to_log_grid(&r, 0.001, 4, ReferencePrice::Trade).unwrap();
        assert_eq!(g.bid, vec![1.0, 2.0, 0.0, 0.0]);
        let far = SnapshotRecord { ts: 0.0, p, bids: vec![(p * 0.5, 7.0)], asks: vec![] };
        assert_eq!(to_log_grid(&far, 0.001, 4, ReferencePrice::Trade).unwrap().overflow_bid, 7.0);
    }

    #[test]
    fn identical_snapshots_give_zero_changes() {
        let recs = vec![book(0.0, 100.0), book(1.0, 100.0)];
        let opts = FrameOptions { dt: 1.0, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        let (f, _) = build_frame(&recs, None, &opts).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.velocities.iter().all(|v| *v == 0.0));
        assert_eq!(f.bid, f.bid.iter().map(|s| vec![s[0]; 2]).collect::<Vec<_>>());
    }

    #[test]
    fn exponential_price_has_constant_velocity() {
        let c = 0.003;
        let recs: Vec<_> = (0..50).map(|k| book(k as f64, 100.0 * (c * k as f64).exp())).collect();
        let opts = FrameOptions { dt: 1.0, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        let (f, _) = build_frame(&recs, None, &opts).unwrap();
        assert!(f.velocities.iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn gaps_split_segments() {
        let mut recs: Vec<_> = (0..10).map(|k| book(k as f64, 100.0)).collect();
        recs.extend((30..40).map(|k| book(k as f64, 100.0)));
        let opts = FrameOptions { dt: 1.0, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        let (f, rep) = build_frame(&recs, None, &opts).unwrap();
        assert_eq!(rep.segments, 2);
        assert_eq!(f.lag_starts(1).count(), 18);
    }

    #[test]
    fn dt_below_spacing_is_rejected() {
        let recs: Vec<_> = (0..10).map(|k| book(k as f64, 100.0)).collect();
        let opts = FrameOptions { dt: 0.5, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        assert!(matches!(build_frame(&recs, None, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn market_orders_sum_per_interval() {
        let recs: Vec<_> = (0..4).map(|k| book(2.0 * k as f64, 100.0)).collect();
        let mo: Vec<_> = (1..=6).map(|k| MarketOrderRecord { ts: k as f64, buy: 1.0, sell: k as f64 }).collect();
        let opts = FrameOptions { dt: 2.0, dx: 1e-3, cells: 8, reference: ReferencePrice::Trade, bins: None };
        let (f, _) = build_frame(&recs, Some(&mo), &opts).unwrap();
        assert_eq!(f.mo_flows.unwrap(), vec![(0.0, 0.0), (2.0, 3.0), (2.0, 7.0), (2.0, 11.0)]);
    }

    #[test]
    fn table_round_trip() {
        let t = Table {
            meta: serde_json::json!({"statistic": "x", "n": 3}),
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![0.1, f64::NAN], vec![1.0 / 3.0, -2.5e-300]],
        };
        let mut buf = Vec::new();
        write_table(&mut buf, &t).unwrap();
        let back = read_table(&buf[..]).unwrap();
        assert_eq!(back.meta, t.meta);
        assert_eq!(back.rows[1], t.rows[1]);
        assert!(back.rows[0][1].is_nan());
    }

    #[test]
    fn market_order_csv_round_trip() {
        let mo = vec![MarketOrderRecord { ts: 0.1, buy: 1.0 / 7.0, sell: 0.0 }];
        let mut buf = Vec::new();
        write_market_orders(&mut buf, &mo).unwrap();
        assert_eq!(read_market_orders(&buf[..]).unwrap(), mo);
    }
}
