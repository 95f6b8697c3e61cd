//! Packet record files: CSV with a fixed header, or JSON lines with the same
//! field names.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use super::{PacketRecord, Timestamp};
use crate::error::{Error, Result};

pub const PACKET_COLUMNS: [&str; 13] = [
    "ts",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "proto",
    "ip_len",
    "payload_len",
    "ttl",
    "tcp_flags",
    "tcp_window",
    "tcp_seq",
    "tcp_ack",
];

/// Wide integer types so out-of-range values are reported rather than
/// swallowed by the deserializer.
#[derive(Debug, Deserialize)]
struct RawPacket {
    ts: f64,
    src_ip: String,
    dst_ip: String,
    src_port: i64,
    dst_port: i64,
    proto: i64,
    ip_len: i64,
    payload_len: i64,
    ttl: i64,
    tcp_flags: i64,
    tcp_window: i64,
    tcp_seq: i64,
    tcp_ack: i64,
}

fn ranged<T: TryFrom<i64>>(name: &str, v: i64, max: i64) -> Result<T, String> {
    if v < 0 || v > max {
        return Err(format!("{name}={v} outside 0..={max}"));
    }
    T::try_from(v).map_err(|_| format!("{name}={v} not representable"))
}

impl RawPacket {
    fn into_record(self) -> Result<PacketRecord, String> {
        if !self.ts.is_finite() || self.ts < 0.0 {
            return Err(format!("ts={} is not a non-negative number", self.ts));
        }
        let rec = PacketRecord {
            ts: Timestamp::from_secs_f64(self.ts),
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            src_port: ranged("src_port", self.src_port, 65_535)?,
            dst_port: ranged("dst_port", self.dst_port, 65_535)?,
            proto: ranged("proto", self.proto, 65_535)?,
            ip_len: ranged("ip_len", self.ip_len, u32::MAX as i64)?,
            payload_len: ranged("payload_len", self.payload_len, u32::MAX as i64)?,
            ttl: ranged("ttl", self.ttl, 255)?,
            tcp_flags: ranged("tcp_flags", self.tcp_flags, 255)?,
            tcp_window: ranged("tcp_window", self.tcp_window, u32::MAX as i64)?,
            tcp_seq: ranged("tcp_seq", self.tcp_seq, u32::MAX as i64)?,
            tcp_ack: ranged("tcp_ack", self.tcp_ack, u32::MAX as i64)?,
        };
        rec.validate()?;
        Ok(rec)
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn read_packet_csv(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let headers = rdr.headers()?.clone();
    for col in PACKET_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_err(path, 1, format!("missing column `{col}`")));
        }
    }

    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawPacket>().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let raw = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(raw.into_record().map_err(|r| parse_err(path, line, r))?);
    }
    Ok(out)
}

pub fn read_packet_jsonl(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPacket =
            serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        out.push(raw.into_record().map_err(|r| parse_err(path, line_no, r))?);
    }
    Ok(out)
}

/// Dispatches on extension: `.jsonl`/`.json` read as JSON lines, anything
/// else as CSV.
pub fn read_packets(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_packet_jsonl(path),
        _ => read_packet_csv(path),
    }
}

pub fn write_packet_csv(packets: &[PacketRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(f, "{}", PACKET_COLUMNS.join(",")).map_err(io)?;
    for p in packets {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.ts,
            p.src_ip,
            p.dst_ip,
            p.src_port,
            p.dst_port,
            p.proto,
            p.ip_len,
            p.payload_len,
            p.ttl,
            p.tcp_flags,
            p.tcp_window,
            p.tcp_seq,
            p.tcp_ack
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "ts,src_ip,dst_ip,src_port,dst_port,proto,ip_len,payload_len,ttl,tcp_flags,tcp_window,tcp_seq,tcp_ack\n";

    #[test]
    fn two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}0.000001,10.0.0.1,10.0.0.2,1234,80,6,60,0,64,2,64240,100,0\n\
             0.5,10.0.0.2,10.0.0.1,80,1234,6,60,0,128,18,65535,900,101\n"
        );
        let recs = read_packet_csv(write(&dir, "p.csv", &body)).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].ts, Timestamp(1));
        assert_eq!(recs[1].tcp_flags, 18);
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let recs = read_packet_csv(write(&dir, "p.csv", HEADER)).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn ttl_out_of_range_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}0,10.0.0.1,10.0.0.2,53,53,17,60,32,64,0,0,0,0\n\
             1,10.0.0.1,10.0.0.2,53,53,17,60,32,300,0,0,0,0\n"
        );
        match read_packet_csv(write(&dir, "p.csv", &body)) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("ttl"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let body = "ts,src_ip,dst_ip\n0,a,b\n";
        let err = read_packet_csv(write(&dir, "p.csv", body)).unwrap_err();
        assert!(err.to_string().contains("src_port"), "{err}");
    }

    #[test]
    fn jsonl_and_csv_agree() {
        let dir = tempfile::tempdir().unwrap();
        let jsonl = r#"{"ts":1.25,"src_ip":"a","dst_ip":"b","src_port":1,"dst_port":2,"proto":17,"ip_len":40,"payload_len":12,"ttl":9,"tcp_flags":0,"tcp_window":0,"tcp_seq":0,"tcp_ack":0}
{"ts":1.5,"src_ip":"b","dst_ip":"a","src_port":2,"dst_port":1,"proto":17,"ip_len":44,"payload_len":16,"ttl":9,"tcp_flags":0,"tcp_window":0,"tcp_seq":0,"tcp_ack":0}
"#;
        let a = read_packet_jsonl(write(&dir, "p.jsonl", jsonl)).unwrap();
        let csv_path = dir.path().join("p.csv");
        write_packet_csv(&a, &csv_path).unwrap();
        let b = read_packet_csv(&csv_path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_bad_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let jsonl = "\n{\"ts\":1}\n";
        match read_packet_jsonl(write(&dir, "p.jsonl", jsonl)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
