//! BSM trace files.
//!
//! Two interchangeable encodings: a binary stream of length-prefixed records
//! (u32 LE length followed by the 61-byte BSM layout), and a CSV with columns
//! `sender_id,timestamp_ms,x,y,heading,speed,yaw_rate,accel,turn_signal`.
//! Floats are written in shortest round-trip form, so converting between the
//! two is lossless.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{TurnSignal, VehicleId};

use super::message::{decode_bsm, encode_bsm, Bsm, MessageError, BSM_LEN};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("trace record {index}: {source}")]
    Message {
        index: usize,
        #[source]
        source: MessageError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Binary,
    Csv,
}

impl TraceFormat {
    /// `.csv` files are CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::Binary,
        }
    }
}

pub fn write_binary<W: Write>(mut w: W, bsms: &[Bsm]) -> Result<(), TraceError> {
    for (index, b) in bsms.iter().enumerate() {
        let bytes = encode_bsm(b).map_err(|source| TraceError::Message { index, source })?;
        w.write_all(&(BSM_LEN as u32).to_le_bytes())?;
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<Bsm>, TraceError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut out = Vec::new();
    let mut at = 0;
    while at < data.len() {
        let index = out.len();
        let Some(prefix) = data.get(at..at + 4) else {
            return Err(TraceError::Malformed {
                index,
                reason: format!("truncated length prefix ({} bytes left)", data.len() - at),
            });
        };
        let len = u32::from_le_bytes(prefix.try_into().expect("4-byte slice")) as usize;
        at += 4;
        let Some(body) = data.get(at..at + len) else {
            return Err(TraceError::Malformed {
                index,
                reason: format!("truncated record: need {len} bytes, {} left", data.len() - at),
            });
        };
        out.push(decode_bsm(body).map_err(|source| TraceError::Message { index, source })?);
        at += len;
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    sender_id: u32,
    timestamp_ms: u64,
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    yaw_rate: f64,
    accel: f64,
    turn_signal: TurnSignal,
}

pub fn write_csv<W: Write>(w: W, bsms: &[Bsm]) -> Result<(), TraceError> {
    let mut wr = csv::Writer::from_writer(w);
    for (index, b) in bsms.iter().enumerate() {
        // same validity rules as the binary form
        encode_bsm(b).map_err(|source| TraceError::Message { index, source })?;
        wr.serialize(CsvRow {
            sender_id: b.sender_id.0,
            timestamp_ms: b.timestamp_ms,
            x: b.x,
            y: b.y,
            heading: b.heading,
            speed: b.speed,
            yaw_rate: b.yaw_rate,
            accel: b.accel,
            turn_signal: b.turn_signal,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<Bsm>, TraceError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (index, row) in rd.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| TraceError::Malformed {
            index,
            reason: e.to_string(),
        })?;
        let bsm = Bsm {
            sender_id: VehicleId(row.sender_id),
            timestamp_ms: row.timestamp_ms,
            x: row.x,
            y: row.y,
            heading: row.heading,
            speed: row.speed,
            yaw_rate: row.yaw_rate,
            accel: row.accel,
            turn_signal: row.turn_signal,
        };
        // route through the codec for the same finiteness checks
        let bytes = encode_bsm(&bsm).map_err(|source| TraceError::Message { index, source })?;
        out.push(decode_bsm(&bytes).map_err(|source| TraceError::Message { index, source })?);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<Bsm>, TraceError> {
    let file = fs::File::open(path)?;
    match TraceFormat::from_path(path) {
        TraceFormat::Binary => read_binary(io::BufReader::new(file)),
        TraceFormat::Csv => read_csv(io::BufReader::new(file)),
    }
}

pub fn write_trace(path: &Path, bsms: &[Bsm]) -> Result<(), TraceError> {
    let file = fs::File::create(path)?;
    match TraceFormat::from_path(path) {
        TraceFormat::Binary => write_binary(io::BufWriter::new(file), bsms),
        TraceFormat::Csv => write_csv(io::BufWriter::new(file), bsms),
    }
}

/// Checks that timestamps never decrease per sender; returns the index of the
/// first offending record.
pub fn check_monotone(bsms: &[Bsm]) -> Result<(), TraceError> {
    let mut last = std::collections::HashMap::new();
    for (index, b) in bsms.iter().enumerate() {
        if let Some(&prev) = last.get(&b.sender_id) {
            if b.timestamp_ms < prev {
                return Err(TraceError::Malformed {
                    index,
                    reason: format!(
                        "timestamp {} precedes {} for sender {}",
                        b.timestamp_ms, prev, b.sender_id
                    ),
                });
            }
        }
        last.insert(b.sender_id, b.timestamp_ms);
    }
    Ok(())
}
