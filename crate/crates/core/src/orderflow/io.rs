//! Newline-delimited JSON streams, optionally gzip-compressed (by `.gz` suffix).
//! Lines starting with `#` carry provenance metadata and are skipped on read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};

use super::event::{parse_message, OrderFlowEvent};
use super::OrderFlowError;

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn open_reader(path: &Path) -> std::io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let inner: Box<dyn Read> = if is_gz(path) { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
    Ok(Box::new(BufReader::new(inner)))
}

pub fn open_writer(path: &Path) -> std::io::Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if is_gz(path) {
        // Fixed mtime keeps compressed output byte-identical across runs.
        let enc: GzEncoder<File> = GzBuilder::new().mtime(0).write(file, Compression::default());
        Ok(Box::new(BufWriter::new(enc)))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Parse a stream, enforcing non-decreasing timestamps.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<OrderFlowEvent>, OrderFlowError> {
    let mut out = Vec::new();
    let mut last = i64::MIN;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let ev = parse_message(trimmed).map_err(|e| OrderFlowError::Line { line: i + 1, source: Box::new(e) })?;
        if ev.timestamp < last {
            return Err(OrderFlowError::Line {
                line: i + 1,
                source: Box::new(OrderFlowError::Ordering { previous: last, got: ev.timestamp }),
            });
        }
        last = ev.timestamp;
        out.push(ev);
    }
    Ok(out)
}

pub fn read_stream(path: &Path) -> Result<Vec<OrderFlowEvent>, OrderFlowError> {
    read_events(open_reader(path)?)
}

/// Write canonical lines, preceded by optional `#` header lines.
pub fn write_events<W: Write>(mut w: W, header: &[String], events: &[OrderFlowEvent]) -> std::io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    for ev in events {
        w.write_all(ev.to_json().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_stream(path: &Path, header: &[String], events: &[OrderFlowEvent]) -> std::io::Result<()> {
    write_events(open_writer(path)?, header, events)
}
