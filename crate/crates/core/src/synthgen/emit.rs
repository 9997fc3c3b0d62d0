use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use super::{GroundTruth, ScenarioSpec};
use crate::error::{Error, Result};
use crate::ingest::TestId;

/// Values a test's artifacts must reproduce when parsed back.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Planted {
    pub test: TestId,
    pub hash: String,
    pub load: f64,
    pub mean_bps: f64,
    pub sinr: f64,
    pub rsrp: f64,
    pub cqi: f64,
    pub dl_bler: f64,
    pub ul_bler: f64,
}

/// Files of one test directory, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TestArtifacts {
    pub test: TestId,
    pub revision: String,
    pub iperf_name: String,
    pub iperf_csv: String,
    pub gnb_log: String,
}

/// Spreads `mean` over `n` values in symmetric pairs so the mean is exact.
/// `step` is the grid the offsets live on; offsets never exceed `max_dev`.
fn symmetric_series<R: Rng + ?Sized>(rng: &mut R, mean: f64, n: usize, step: f64, max_dev: f64) -> Vec<f64> {
    let steps = (max_dev / step).floor().max(0.0) as i64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let d = rng.random_range(0..=steps) as f64 * step;
        out.push(mean + d);
        out.push(mean - d);
    }
    if n % 2 == 1 {
        out.push(mean);
    }
    out
}

fn format_rate(load: f64) -> String {
    if load.fract() == 0.0 {
        format!("{}", load as i64)
    } else {
        format!("{load}")
    }
}

impl TestArtifacts {
    pub(super) fn draw<R: Rng + ?Sized>(rng: &mut R, spec: &ScenarioSpec, p: Planted) -> Self {
        let iperf_csv = iperf_csv(rng, spec.intervals, p.mean_bps);
        let gnb_log = gnb_log(rng, spec, &p);
        TestArtifacts {
            test: p.test,
            revision: p.hash,
            iperf_name: format!("iperf3_dl_{}mbps.csv", format_rate(p.load)),
            iperf_csv,
            gnb_log,
        }
    }

    pub fn dir(&self, dataset: &Path) -> PathBuf {
        dataset
            .join(self.test.day.format("%Y%m%d").to_string())
            .join(self.test.time_of_day.format("%H%M%S").to_string())
    }

    pub fn write(&self, dataset: &Path) -> Result<()> {
        let dir = self.dir(dataset);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let put = |name: &str, body: &str| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        put(&self.iperf_name, &self.iperf_csv)?;
        put("gnb.log", &self.gnb_log)?;
        put("revision.txt", &format!("{}\n", self.revision))
    }
}

fn iperf_csv<R: Rng + ?Sized>(rng: &mut R, intervals: usize, mean_bps: f64) -> String {
    let bps = symmetric_series(rng, mean_bps, intervals, 1.0, (mean_bps * 0.05).floor());
    let mut s = String::from("interval_start,interval_end,bytes,bits_per_second,jitter_ms,lost_packets,total_packets\n");
    for (i, b) in bps.iter().enumerate() {
        let bytes = (*b / 8.0).round() as u64;
        let packets = bytes / 1448 + 1;
        let lost = if rng.random_bool(0.1) { rng.random_range(0..=packets / 100) } else { 0 };
        let jitter = rng.random_range(0.05..0.6);
        writeln!(s, "{}.0,{}.0,{bytes},{},{jitter:.3},{lost},{packets}", i, i + 1, *b as u64).expect("string write");
    }
    s
}

fn gnb_log<R: Rng + ?Sized>(rng: &mut R, spec: &ScenarioSpec, p: &Planted) -> String {
    let n = spec.kpm_lines;
    let mut start = p.test.datetime();
    let mut lines = Vec::new();
    let mut stamp = |lines: &mut Vec<String>, body: String| {
        start += chrono::Duration::milliseconds(rng_free_step(lines.len()));
        lines.push(format!("[{}] {body}", start.format("%Y-%m-%dT%H:%M:%S%.3f")));
    };

    stamp(&mut lines, "[RRC] I Send RRCSetup to UE 0x4601".into());
    stamp(&mut lines, "[NGAP] I PDU session 1 established".into());
    if rng.random_bool(0.05) {
        stamp(&mut lines, "[MAC] I RA MSG2 not received, retrying".into());
    }

    let rsrp = symmetric_series(rng, p.rsrp, n, 0.1, 2.0);
    let sinr = symmetric_series(rng, p.sinr, n, 0.1, 1.5_f64.min(p.sinr.max(0.0)));
    let cqi = symmetric_series(rng, p.cqi, n, 0.1, 1.0_f64.min(p.cqi));
    let dl = symmetric_series(rng, p.dl_bler, n, 1e-4, (p.dl_bler * 0.5).min(0.01));
    let ul = symmetric_series(rng, p.ul_bler, n, 1e-4, (p.ul_bler * 0.5).min(0.01));
    for i in 0..n {
        stamp(
            &mut lines,
            format!("[PHY] I RSRP {:.1} dBm SINR {:.1} dB CQI {:.1}", rsrp[i], sinr[i], cqi[i]),
        );
        stamp(&mut lines, format!("[MAC] I dl_bler {:.4} ul_bler {:.4}", dl[i], ul[i]));
    }

    let round1 = (p.dl_bler * 200.0).round() as usize;
    let round2 = (round1 as f64 * 0.3).round() as usize;
    for _ in 0..round1 {
        stamp(&mut lines, "[MAC] I HARQ retransmission round 1".into());
    }
    for _ in 0..round2 {
        stamp(&mut lines, "[MAC] I HARQ retransmission round 2".into());
    }
    if p.load > spec.environment.link_capacity_mbps {
        stamp(&mut lines, "[MAC] W scheduler backlog above link capacity".into());
    }
    if rng.random_bool(0.02) {
        stamp(&mut lines, "[F1AP] E unexpected message dropped".into());
    }
    stamp(&mut lines, "[RRC] I Send RRCRelease to UE 0x4601".into());
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

// Fixed spacing keeps logs independent of draw order.
fn rng_free_step(i: usize) -> i64 {
    250 + (i as i64 % 4) * 50
}

#[derive(Serialize)]
struct CommitTruthRow<'a> {
    index: usize,
    hash: &'a str,
    categories: String,
    deployed_at: String,
    injected: bool,
    drop: f64,
    onset: usize,
}

pub(super) fn write_truth(truth: &GroundTruth, tests_path: &Path, commits_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(tests_path).map_err(|e| Error::data(format!("{}: {e}", tests_path.display())))?;
    for t in &truth.tests {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io(tests_path, e))?;

    let mut w =
        csv::Writer::from_path(commits_path).map_err(|e| Error::data(format!("{}: {e}", commits_path.display())))?;
    for c in &truth.commits {
        w.serialize(CommitTruthRow {
            index: c.index,
            hash: &c.hash,
            categories: c.categories.iter().map(|c| c.name()).collect::<Vec<_>>().join(";"),
            deployed_at: c.deployed_at.format("%Y-%m-%dT%H:%M:%S").to_string(),
            injected: c.injected,
            drop: c.drop,
            onset: c.onset,
        })?;
    }
    w.flush().map_err(|e| Error::io(commits_path, e))
}
