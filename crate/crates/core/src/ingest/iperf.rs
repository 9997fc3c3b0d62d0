use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::ingest::types::TrafficKpi;

pub const IPERF_COLUMNS: [&str; 7] = [
    "interval_start",
    "interval_end",
    "bytes",
    "bits_per_second",
    "jitter_ms",
    "lost_packets",
    "total_packets",
];

/// Extracts the requested rate from a file name such as `iperf3_dl_30mbps.csv`.
pub fn target_rate_from_filename(path: &Path) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)mbps").unwrap());
    let name = path.file_name()?.to_str()?;
    let caps = re.captures(name)?;
    caps[1].parse().ok().filter(|v: &f64| *v > 0.0)
}

/// Parses a per-interval traffic-generator export into test-level KPIs.
///
/// Throughput and jitter are means over intervals; byte and packet totals
/// are sums, and loss is the ratio of summed lost to summed packets.
/// Absent columns leave the dependent fields as `None`.
pub fn parse_iperf_csv(path: &Path, target_rate: f64) -> Result<TrafficKpi> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_iperf_bytes(&bytes, target_rate)
        .map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
            other => other,
        })
}

pub fn parse_iperf_bytes(data: &[u8], target_rate: f64) -> Result<TrafficKpi> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::data(format!("target rate must be > 0, got {target_rate}")));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(data);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let bytes_col = col("bytes");
    let bps_col = col("bits_per_second");
    let jitter_col = col("jitter_ms");
    let lost_col = col("lost_packets");
    let packets_col = col("total_packets");

    let mut rows = 0usize;
    let mut bps_sum = 0.0;
    let mut jitter_sum = 0.0;
    let mut byte_total = 0u64;
    let mut lost_total = 0u64;
    let mut packet_total = 0u64;

    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows += 1;
        let num = |idx: usize| -> Result<f64> {
            let cell = rec.get(idx).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| {
                    Error::data(format!("row {}: `{}` is not a non-negative number", i + 2, cell))
                })
        };
        if let Some(c) = bps_col {
            bps_sum += num(c)?;
        }
        if let Some(c) = jitter_col {
            jitter_sum += num(c)?;
        }
        if let Some(c) = bytes_col {
            byte_total += num(c)? as u64;
        }
        if let Some(c) = lost_col {
            lost_total += num(c)? as u64;
        }
        if let Some(c) = packets_col {
            packet_total += num(c)? as u64;
        }
    }
    if rows == 0 {
        return Err(Error::data("empty measurement"));
    }
    let n = rows as f64;

    let measured = bps_col.map(|_| bps_sum / n / 1e6);
    let loss = match (lost_col, packets_col) {
        (Some(_), Some(_)) if packet_total > 0 => {
            Some((lost_total as f64 / packet_total as f64).min(1.0))
        }
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(TrafficKpi {
        target_rate: Some(target_rate),
        measured_throughput: measured,
        packet_loss: loss,
        jitter: jitter_col.map(|_| jitter_sum / n),
        total_bytes: bytes_col.map(|_| byte_total),
        total_packets: packets_col.map(|_| packet_total),
        throughput_efficiency: measured.map(|m| m / target_rate),
    })
}
