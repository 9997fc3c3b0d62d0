use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Test identifier derived from the `yyyymmdd/hhmmss` directory pair.
///
/// Times are naive local time; only the ordering is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestId {
    pub day: NaiveDate,
    pub time_of_day: NaiveTime,
}

impl TestId {
    pub fn new(day: NaiveDate, time_of_day: NaiveTime) -> Self {
        TestId { day, time_of_day }
    }

    /// Parses the two directory names, e.g. `("20250913", "040124")`.
    pub fn from_dir_names(day: &str, time: &str) -> Result<Self> {
        if day.len() != 8 || !day.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::data(format!("day directory `{day}` is not yyyymmdd")));
        }
        if time.len() != 6 || !time.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::data(format!("test directory `{time}` is not hhmmss")));
        }
        let day = NaiveDate::parse_from_str(day, "%Y%m%d")
            .map_err(|e| Error::data(format!("invalid date `{day}`: {e}")))?;
        let time = NaiveTime::parse_from_str(time, "%H%M%S")
            .map_err(|e| Error::data(format!("invalid time `{time}`: {e}")))?;
        Ok(TestId::new(day, time))
    }

    pub fn datetime(&self) -> NaiveDateTime {
        self.day.and_time(self.time_of_day)
    }

    /// Seconds since the Unix epoch, treating the naive time as UTC.
    pub fn timestamp(&self) -> i64 {
        self.datetime().and_utc().timestamp()
    }

    pub fn from_datetime(dt: NaiveDateTime) -> Self {
        TestId::new(dt.date(), dt.time())
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            self.day.format("%Y%m%d"),
            self.time_of_day.format("%H%M%S")
        )
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (day, time) = s
            .split_once('/')
            .ok_or_else(|| Error::data(format!("test id `{s}` is not yyyymmdd/hhmmss")))?;
        TestId::from_dir_names(day, time)
    }
}

impl Serialize for TestId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TestId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// End-to-end traffic indicators for one test. `None` marks a field that
/// could not be recovered from the artifacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficKpi {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_throughput: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_packets: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_efficiency: Option<f64>,
}

impl TrafficKpi {
    pub const FIELDS: [&'static str; 7] = [
        "target_rate",
        "measured_throughput",
        "packet_loss",
        "jitter",
        "total_bytes",
        "total_packets",
        "throughput_efficiency",
    ];

    pub fn get(&self, field: &str) -> Option<f64> {
        match field {
            "target_rate" => self.target_rate,
            "measured_throughput" => self.measured_throughput,
            "packet_loss" => self.packet_loss,
            "jitter" => self.jitter,
            "total_bytes" => self.total_bytes.map(|v| v as f64),
            "total_packets" => self.total_packets.map(|v| v as f64),
            "throughput_efficiency" => self.throughput_efficiency,
            _ => None,
        }
    }

    fn missing(&self, out: &mut BTreeSet<String>) {
        for f in Self::FIELDS {
            if self.get(f).is_none() {
                out.insert(f.to_string());
            }
        }
    }
}

/// Radio-side measurements aggregated over one test.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadioKpm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsrp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dl_bler: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ul_bler: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harq_retx_round1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harq_retx_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cqi_mean: Option<f64>,
}

impl RadioKpm {
    pub const FIELDS: [&'static str; 7] = [
        "rsrp",
        "sinr",
        "dl_bler",
        "ul_bler",
        "harq_retx_round1",
        "harq_retx_total",
        "cqi_mean",
    ];

    pub fn is_field(name: &str) -> bool {
        Self::FIELDS.contains(&name)
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        match field {
            "rsrp" => self.rsrp,
            "sinr" => self.sinr,
            "dl_bler" => self.dl_bler,
            "ul_bler" => self.ul_bler,
            "harq_retx_round1" => self.harq_retx_round1,
            "harq_retx_total" => self.harq_retx_total,
            "cqi_mean" => self.cqi_mean,
            _ => None,
        }
    }

    pub(crate) fn slot(&mut self, field: &str) -> Option<&mut Option<f64>> {
        Some(match field {
            "rsrp" => &mut self.rsrp,
            "sinr" => &mut self.sinr,
            "dl_bler" => &mut self.dl_bler,
            "ul_bler" => &mut self.ul_bler,
            "harq_retx_round1" => &mut self.harq_retx_round1,
            "harq_retx_total" => &mut self.harq_retx_total,
            "cqi_mean" => &mut self.cqi_mean,
            _ => return None,
        })
    }

    /// Range check for a single field value.
    pub fn in_range(field: &str, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match field {
            "dl_bler" | "ul_bler" => (0.0..=1.0).contains(&value),
            "cqi_mean" => (0.0..=15.0).contains(&value),
            "harq_retx_round1" | "harq_retx_total" => value >= 0.0,
            _ => true,
        }
    }

    fn missing(&self, out: &mut BTreeSet<String>) {
        for f in Self::FIELDS {
            if self.get(f).is_none() {
                out.insert(f.to_string());
            }
        }
    }
}

/// Event counters that every record carries, zero when nothing matched.
pub const CORE_EVENTS: [&str; 6] = [
    "pdu_sessions_active",
    "msg2_failures",
    "rrc_setup",
    "rrc_release",
    "scheduler_warnings",
    "error_lines",
];

pub type EventCounts = BTreeMap<String, u64>;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// One automated test, flattened into the feature-store row format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub schema_version: u32,
    pub id: TestId,
    pub commit_hash: String,
    pub traffic: TrafficKpi,
    pub radio: RadioKpm,
    pub events: EventCounts,
    pub missing_fields: BTreeSet<String>,
}

impl TestRecord {
    /// Recomputes `missing_fields` from the optional slots.
    pub fn refresh_missing(&mut self) {
        let mut missing = BTreeSet::new();
        self.traffic.missing(&mut missing);
        self.radio.missing(&mut missing);
        self.missing_events(&mut missing);
        self.missing_fields = missing;
    }

    fn missing_events(&self, out: &mut BTreeSet<String>) {
        for e in CORE_EVENTS {
            if !self.events.contains_key(e) {
                out.insert(e.to_string());
            }
        }
    }

    /// Numeric view used by downstream feature builders.
    pub fn field(&self, name: &str) -> Option<f64> {
        if let Some(v) = self.traffic.get(name) {
            return Some(v);
        }
        if let Some(v) = self.radio.get(name) {
            return Some(v);
        }
        self.events.get(name).map(|&c| c as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.commit_hash.is_empty() || !is_hex_like(&self.commit_hash) {
            return Err(Error::data(format!(
                "test {}: commit hash `{}` is not a hex revision id",
                self.id, self.commit_hash
            )));
        }
        let mut expected = BTreeSet::new();
        self.traffic.missing(&mut expected);
        self.radio.missing(&mut expected);
        self.missing_events(&mut expected);
        if expected != self.missing_fields {
            return Err(Error::data(format!(
                "test {}: missing_fields disagrees with populated values",
                self.id
            )));
        }
        if let (Some(t), Some(m), Some(e)) = (
            self.traffic.target_rate,
            self.traffic.measured_throughput,
            self.traffic.throughput_efficiency,
        ) {
            if (e * t - m).abs() > 1e-9 * t {
                return Err(Error::data(format!(
                    "test {}: efficiency does not equal measured/target",
                    self.id
                )));
            }
        }
        for f in RadioKpm::FIELDS {
            if let Some(v) = self.radio.get(f) {
                if !RadioKpm::in_range(f, v) {
                    return Err(Error::data(format!("test {}: {f} = {v} out of range", self.id)));
                }
            }
        }
        Ok(())
    }
}

pub fn is_hex_like(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_id_parses_directory_pair() {
        let id = TestId::from_dir_names("20250913", "040124").unwrap();
        assert_eq!(id.day, NaiveDate::from_ymd_opt(2025, 9, 13).unwrap());
        assert_eq!(id.time_of_day, NaiveTime::from_hms_opt(4, 1, 24).unwrap());
        assert_eq!(id.to_string(), "20250913/040124");
        assert_eq!("20250913/040124".parse::<TestId>().unwrap(), id);
    }

    #[test]
    fn test_id_rejects_bad_names() {
        assert!(TestId::from_dir_names("20250913", "abc").is_err());
        assert!(TestId::from_dir_names("20251332", "040124").is_err());
        assert!(TestId::from_dir_names("20250913", "250000").is_err());
        assert!(TestId::from_dir_names("2025091", "040124").is_err());
    }

    #[test]
    fn ordering_is_chronological() {
        let a = TestId::from_dir_names("20250912", "235959").unwrap();
        let b = TestId::from_dir_names("20250913", "000000").unwrap();
        assert!(a < b);
        assert!(a.timestamp() < b.timestamp());
    }
}
