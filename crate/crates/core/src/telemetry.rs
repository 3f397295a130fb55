//! Raw meter CSV ingest: parse, validate, resample to a uniform 15-minute
//! grid, and impute gaps.
//!
//! Missing values are carried as NaN inside channel arrays until `impute`
//! replaces them (median for numeric channels, mode for the fault flag and
//! tariff class). Resampling happens first, then imputation, so gaps are
//! imputed at the 15-minute resolution rather than the raw one.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STEP_SECS: i64 = 900;

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("required column {column:?} not found in header")]
    MissingColumn { column: String },
    #[error("no data rows")]
    EmptyInput,
    #[error("no records for meter {meter_id:?}")]
    NoRecords { meter_id: String },
    #[error("channel {channel:?} of meter {meter_id:?} has no observed values")]
    AllMissingChannel { channel: String, meter_id: String },
    #[error("row {row}: timestamp {value:?} is not ISO-8601")]
    InvalidTimestamp { row: usize, value: String },
    #[error("row {row}: empty meter id")]
    EmptyMeterId { row: usize },
}

/// Numeric channels of a meter series. The fault flag rides along as 0/1
/// so that every channel shares one storage type; it aggregates by OR and
/// imputes by mode instead of mean/median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    PowerKw,
    VoltageV,
    CurrentA,
    PowerFactor,
    ReactiveKvar,
    GridSupplyKw,
    SolarKw,
    WindKw,
    TemperatureC,
    HumidityPct,
    PricePerKwh,
    FaultFlag,
}

impl Channel {
    pub const ALL: [Channel; 12] = [
        Channel::PowerKw,
        Channel::VoltageV,
        Channel::CurrentA,
        Channel::PowerFactor,
        Channel::ReactiveKvar,
        Channel::GridSupplyKw,
        Channel::SolarKw,
        Channel::WindKw,
        Channel::TemperatureC,
        Channel::HumidityPct,
        Channel::PricePerKwh,
        Channel::FaultFlag,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::PowerKw => "power_kw",
            Channel::VoltageV => "voltage_v",
            Channel::CurrentA => "current_a",
            Channel::PowerFactor => "power_factor",
            Channel::ReactiveKvar => "reactive_kvar",
            Channel::GridSupplyKw => "grid_supply_kw",
            Channel::SolarKw => "solar_kw",
            Channel::WindKw => "wind_kw",
            Channel::TemperatureC => "temperature_c",
            Channel::HumidityPct => "humidity_pct",
            Channel::PricePerKwh => "price_per_kwh",
            Channel::FaultFlag => "fault_flag",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

/// One raw CSV row after cell-level validation. Any cell that is blank,
/// "NaN", unparseable, or out of its physical domain (negative power,
/// non-positive voltage, power factor outside [0,1]) becomes `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub meter_id: String,
    pub timestamp: DateTime<Utc>,
    pub power_kw: Option<f64>,
    pub voltage_v: Option<f64>,
    pub current_a: Option<f64>,
    pub power_factor: Option<f64>,
    pub reactive_kvar: Option<f64>,
    pub grid_supply_kw: Option<f64>,
    pub solar_kw: Option<f64>,
    pub wind_kw: Option<f64>,
    pub temperature_c: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub price_per_kwh: Option<f64>,
    pub fault_flag: Option<bool>,
    pub tariff_class: Option<String>,
}

impl RawRecord {
    pub fn channel(&self, c: Channel) -> Option<f64> {
        match c {
            Channel::PowerKw => self.power_kw,
            Channel::VoltageV => self.voltage_v,
            Channel::CurrentA => self.current_a,
            Channel::PowerFactor => self.power_factor,
            Channel::ReactiveKvar => self.reactive_kvar,
            Channel::GridSupplyKw => self.grid_supply_kw,
            Channel::SolarKw => self.solar_kw,
            Channel::WindKw => self.wind_kw,
            Channel::TemperatureC => self.temperature_c,
            Channel::HumidityPct => self.humidity_pct,
            Channel::PricePerKwh => self.price_per_kwh,
            Channel::FaultFlag => self.fault_flag.map(|b| if b { 1.0 } else { 0.0 }),
        }
    }
}

/// Maps record fields to CSV header names. Defaults to the field names
/// themselves; override entries for foreign exports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub meter_id: String,
    pub timestamp: String,
    pub columns: BTreeMap<String, String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        let mut columns = BTreeMap::new();
        for c in Channel::ALL {
            columns.insert(c.as_str().to_string(), c.as_str().to_string());
        }
        columns.insert("tariff_class".into(), "tariff_class".into());
        CsvSchema {
            meter_id: "meter_id".into(),
            timestamp: "timestamp".into(),
            columns,
        }
    }
}

/// A uniform 15-minute series for one meter. `start` is aligned to the
/// epoch's 15-minute grid; index `i` covers [start + 900i, start + 900(i+1)).
#[derive(Debug, Clone, PartialEq)]
pub struct MeterSeries {
    pub meter_id: String,
    pub start: DateTime<Utc>,
    pub step_secs: i64,
    pub channels: BTreeMap<Channel, Vec<f64>>,
    pub imputed: BTreeMap<Channel, Vec<bool>>,
    /// Tariff class per interval; empty if the input never carried one.
    pub tariff: Vec<Option<String>>,
    pub tariff_imputed: Vec<bool>,
}

impl MeterSeries {
    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step_secs * idx as i64)
    }

    pub fn channel(&self, c: Channel) -> Option<&[f64]> {
        self.channels.get(&c).map(|v| v.as_slice())
    }

    pub fn fault_at(&self, idx: usize) -> bool {
        self.channels
            .get(&Channel::FaultFlag)
            .map_or(false, |v| v[idx] > 0.5)
    }
}

/// Parse a raw meter CSV. Cell-level problems become missing values; only
/// structural problems (missing required columns, zero rows, unparseable
/// timestamps, empty meter ids) are errors. Row order is preserved.
pub fn parse_csv<R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<Vec<RawRecord>, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|_| TelemetryError::EmptyInput)?
        .clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);

    let meter_idx = index_of(&schema.meter_id).ok_or(TelemetryError::MissingColumn {
        column: schema.meter_id.clone(),
    })?;
    let ts_idx = index_of(&schema.timestamp).ok_or(TelemetryError::MissingColumn {
        column: schema.timestamp.clone(),
    })?;
    let power_header = schema
        .columns
        .get("power_kw")
        .cloned()
        .unwrap_or_else(|| "power_kw".into());
    if index_of(&power_header).is_none() {
        return Err(TelemetryError::MissingColumn {
            column: power_header,
        });
    }

    let mut chan_idx: BTreeMap<Channel, usize> = BTreeMap::new();
    for c in Channel::ALL {
        if let Some(header) = schema.columns.get(c.as_str()) {
            if let Some(i) = index_of(header) {
                chan_idx.insert(c, i);
            }
        }
    }
    let tariff_idx = schema
        .columns
        .get("tariff_class")
        .and_then(|h| index_of(h));

    let mut records = Vec::new();
    for (row_no, row) in rdr.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(_) => continue, // malformed rows are dropped, not fatal
        };
        let cell = |i: usize| row.get(i).unwrap_or("").trim();
        let meter_id = cell(meter_idx).to_string();
        if meter_id.is_empty() {
            return Err(TelemetryError::EmptyMeterId { row: row_no + 1 });
        }
        let ts_raw = cell(ts_idx);
        let timestamp =
            parse_timestamp(ts_raw).ok_or_else(|| TelemetryError::InvalidTimestamp {
                row: row_no + 1,
                value: ts_raw.to_string(),
            })?;

        let num = |c: Channel| -> Option<f64> {
            let v = parse_cell_f64(cell(*chan_idx.get(&c)?));
            v.filter(|&x| in_domain(c, x))
        };
        records.push(RawRecord {
            meter_id,
            timestamp,
            power_kw: num(Channel::PowerKw),
            voltage_v: num(Channel::VoltageV),
            current_a: num(Channel::CurrentA),
            power_factor: num(Channel::PowerFactor),
            reactive_kvar: num(Channel::ReactiveKvar),
            grid_supply_kw: num(Channel::GridSupplyKw),
            solar_kw: num(Channel::SolarKw),
            wind_kw: num(Channel::WindKw),
            temperature_c: num(Channel::TemperatureC),
            humidity_pct: num(Channel::HumidityPct),
            price_per_kwh: num(Channel::PricePerKwh),
            fault_flag: chan_idx
                .get(&Channel::FaultFlag)
                .and_then(|&i| parse_cell_bool(cell(i))),
            tariff_class: tariff_idx.and_then(|i| {
                let v = cell(i);
                if v.is_empty() {
                    None
                } else {
                    Some(v.to_string())
                }
            }),
        });
    }
    if records.is_empty() {
        return Err(TelemetryError::EmptyInput);
    }
    Ok(records)
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    // Naive "YYYY-MM-DDTHH:MM:SS" (or space-separated) is taken as UTC.
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    None
}

fn parse_cell_f64(s: &str) -> Option<f64> {
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_cell_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn in_domain(c: Channel, v: f64) -> bool {
    match c {
        Channel::PowerKw
        | Channel::CurrentA
        | Channel::GridSupplyKw
        | Channel::SolarKw
        | Channel::WindKw => v >= 0.0,
        Channel::VoltageV => v > 0.0,
        Channel::PowerFactor => (0.0..=1.0).contains(&v),
        _ => true,
    }
}

fn floor_to_grid(ts: DateTime<Utc>) -> i64 {
    ts.timestamp().div_euclid(STEP_SECS) * STEP_SECS
}

/// Aggregate one meter's records onto the epoch-aligned 15-minute grid.
/// Bucket value = mean of in-bucket readings per channel (OR for the fault
/// flag, in-bucket mode for tariff); empty buckets are missing. Only
/// channels observed at least once appear in the output.
pub fn resample(records: &[RawRecord], meter_id: &str) -> Result<MeterSeries, TelemetryError> {
    let mut mine: Vec<&RawRecord> = records.iter().filter(|r| r.meter_id == meter_id).collect();
    if mine.is_empty() {
        return Err(TelemetryError::NoRecords {
            meter_id: meter_id.to_string(),
        });
    }
    mine.sort_by_key(|r| r.timestamp);
    let start_secs = floor_to_grid(mine[0].timestamp);
    let last_secs = mine.last().unwrap().timestamp.timestamp();
    let len = ((last_secs - start_secs).div_euclid(STEP_SECS) + 1) as usize;

    let observed: Vec<Channel> = Channel::ALL
        .into_iter()
        .filter(|&c| mine.iter().any(|r| r.channel(c).is_some()))
        .collect();

    let mut sums: BTreeMap<Channel, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<Channel, Vec<u32>> = BTreeMap::new();
    for &c in &observed {
        sums.insert(c, vec![0.0; len]);
        counts.insert(c, vec![0; len]);
    }
    let mut fault_or = vec![false; len];
    let mut fault_seen = vec![false; len];
    let mut tariff_votes: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new(); len];
    let has_tariff = mine.iter().any(|r| r.tariff_class.is_some());

    for r in &mine {
        let idx = ((r.timestamp.timestamp() - start_secs).div_euclid(STEP_SECS)) as usize;
        for &c in &observed {
            if c == Channel::FaultFlag {
                if let Some(f) = r.fault_flag {
                    fault_seen[idx] = true;
                    fault_or[idx] |= f;
                }
                continue;
            }
            if let Some(v) = r.channel(c) {
                sums.get_mut(&c).unwrap()[idx] += v;
                counts.get_mut(&c).unwrap()[idx] += 1;
            }
        }
        if let Some(t) = &r.tariff_class {
            *tariff_votes[idx].entry(t.clone()).or_insert(0) += 1;
        }
    }

    let mut channels = BTreeMap::new();
    let mut imputed = BTreeMap::new();
    for &c in &observed {
        let vals: Vec<f64> = if c == Channel::FaultFlag {
            (0..len)
                .map(|i| {
                    if !fault_seen[i] {
                        f64::NAN
                    } else if fault_or[i] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        } else {
            let s = &sums[&c];
            let n = &counts[&c];
            (0..len)
                .map(|i| if n[i] == 0 { f64::NAN } else { s[i] / n[i] as f64 })
                .collect()
        };
        channels.insert(c, vals);
        imputed.insert(c, vec![false; len]);
    }

    let tariff: Vec<Option<String>> = if has_tariff {
        tariff_votes
            .into_iter()
            .map(|votes| {
                votes
                    .into_iter()
                    // BTreeMap iterates keys in lexicographic order, so on
                    // tied counts the first-sorting value wins.
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(k, _)| k)
            })
            .collect()
    } else {
        Vec::new()
    };
    let tariff_imputed = vec![false; if has_tariff { len } else { 0 }];

    Ok(MeterSeries {
        meter_id: meter_id.to_string(),
        start: Utc.timestamp_opt(start_secs, 0).unwrap(),
        step_secs: STEP_SECS,
        channels,
        imputed,
        tariff,
        tariff_imputed,
    })
}

/// Median of a sorted non-empty slice; even counts average the two
/// central values.
pub fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Fill missing entries: channel median for numeric channels, mode for the
/// fault flag (false wins ties) and tariff class (lexicographically first
/// wins ties). Marks every replacement in the imputation masks.
pub fn impute(series: &MeterSeries) -> Result<MeterSeries, TelemetryError> {
    let mut out = series.clone();
    for (&c, vals) in &series.channels {
        let mut present: Vec<f64> = vals.iter().copied().filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            return Err(TelemetryError::AllMissingChannel {
                channel: c.as_str().to_string(),
                meter_id: series.meter_id.clone(),
            });
        }
        let fill = if c == Channel::FaultFlag {
            let trues = present.iter().filter(|&&v| v > 0.5).count();
            let falses = present.len() - trues;
            if trues > falses {
                1.0
            } else {
                0.0
            }
        } else {
            present.sort_by(f64::total_cmp);
            median_sorted(&present)
        };
        let out_vals = out.channels.get_mut(&c).unwrap();
        let out_mask = out.imputed.get_mut(&c).unwrap();
        for i in 0..out_vals.len() {
            if out_vals[i].is_nan() {
                out_vals[i] = fill;
                out_mask[i] = true;
            }
        }
    }
    if !series.tariff.is_empty() {
        let mut votes: BTreeMap<&String, u32> = BTreeMap::new();
        for t in series.tariff.iter().flatten() {
            *votes.entry(t).or_insert(0) += 1;
        }
        if votes.is_empty() {
            return Err(TelemetryError::AllMissingChannel {
                channel: "tariff_class".into(),
                meter_id: series.meter_id.clone(),
            });
        }
        let mode = votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| k.clone())
            .unwrap();
        for i in 0..series.tariff.len() {
            if out.tariff[i].is_none() {
                out.tariff[i] = Some(mode.clone());
                out.tariff_imputed[i] = true;
            }
        }
    }
    Ok(out)
}

/// Serialize series back to the ingest CSV layout (one row per meter per
/// interval). Floats print in shortest round-trip form so a re-ingest of
/// the output reproduces the values exactly.
pub fn series_to_csv(series_list: &[MeterSeries]) -> String {
    let mut out = String::from("meter_id,timestamp");
    for c in Channel::ALL {
        out.push(',');
        out.push_str(c.as_str());
    }
    out.push_str(",tariff_class\n");
    for s in series_list {
        for i in 0..s.len() {
            out.push_str(&s.meter_id);
            out.push(',');
            out.push_str(&s.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string());
            for c in Channel::ALL {
                out.push(',');
                match s.channels.get(&c) {
                    Some(vals) if !vals[i].is_nan() => {
                        if c == Channel::FaultFlag {
                            out.push_str(if vals[i] > 0.5 { "true" } else { "false" });
                        } else {
                            out.push_str(&format!("{}", vals[i]));
                        }
                    }
                    _ => {}
                }
            }
            out.push(',');
            if let Some(Some(t)) = s.tariff.get(i) {
                out.push_str(t);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn record(meter: &str, when: &str, power: Option<f64>) -> RawRecord {
        RawRecord {
            meter_id: meter.into(),
            timestamp: ts(when),
            power_kw: power,
            voltage_v: None,
            current_a: None,
            power_factor: None,
            reactive_kvar: None,
            grid_supply_kw: None,
            solar_kw: None,
            wind_kw: None,
            temperature_c: None,
            humidity_pct: None,
            price_per_kwh: None,
            fault_flag: None,
            tariff_class: None,
        }
    }

    #[test]
    fn parses_basic_rows() {
        let csv = "meter_id,timestamp,power_kw,voltage_v,fault_flag,tariff_class\n\
                   M1,2024-01-01T00:00:00Z,1.5,230,false,residential\n\
                   M1,2024-01-01T00:15:00Z,,231,true,\n";
        let recs = parse_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].meter_id, "M1");
        assert_eq!(recs[0].power_kw, Some(1.5));
        assert_eq!(recs[0].voltage_v, Some(230.0));
        assert_eq!(recs[0].fault_flag, Some(false));
        assert_eq!(recs[0].tariff_class.as_deref(), Some("residential"));
        assert_eq!(recs[1].power_kw, None, "blank cell is missing");
        assert_eq!(recs[1].fault_flag, Some(true));
        assert_eq!(recs[1].tariff_class, None);
    }

    #[test]
    fn out_of_domain_cells_become_missing() {
        let csv = "meter_id,timestamp,power_kw,power_factor,voltage_v\n\
                   M1,2024-01-01T00:00:00Z,-3,1.4,0\n";
        let recs = parse_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(recs[0].power_kw, None);
        assert_eq!(recs[0].power_factor, None);
        assert_eq!(recs[0].voltage_v, None);
    }

    #[test]
    fn header_only_is_empty_input() {
        let csv = "meter_id,timestamp,power_kw\n";
        assert_eq!(
            parse_csv(csv.as_bytes(), &CsvSchema::default()),
            Err(TelemetryError::EmptyInput)
        );
    }

    #[test]
    fn missing_required_column_is_reported() {
        let csv = "meter_id,power_kw\nM1,2\n";
        assert_eq!(
            parse_csv(csv.as_bytes(), &CsvSchema::default()),
            Err(TelemetryError::MissingColumn {
                column: "timestamp".into()
            })
        );
        let csv2 = "meter_id,timestamp\nM1,2024-01-01T00:00:00Z\n";
        assert_eq!(
            parse_csv(csv2.as_bytes(), &CsvSchema::default()),
            Err(TelemetryError::MissingColumn {
                column: "power_kw".into()
            })
        );
    }

    #[test]
    fn bad_timestamp_is_an_error() {
        let csv = "meter_id,timestamp,power_kw\nM1,yesterday,2\n";
        assert!(matches!(
            parse_csv(csv.as_bytes(), &CsvSchema::default()),
            Err(TelemetryError::InvalidTimestamp { row: 1, .. })
        ));
    }

    #[test]
    fn schema_remaps_columns() {
        let mut schema = CsvSchema::default();
        schema.meter_id = "id".into();
        schema.columns.insert("power_kw".into(), "kW".into());
        let csv = "id,timestamp,kW\nM7,2024-01-01T00:00:00Z,4.25\n";
        let recs = parse_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(recs[0].meter_id, "M7");
        assert_eq!(recs[0].power_kw, Some(4.25));
    }

    #[test]
    fn resample_means_within_bucket() {
        let recs = vec![
            record("M1", "2024-01-01T00:03:00Z", Some(2.0)),
            record("M1", "2024-01-01T00:10:00Z", Some(4.0)),
        ];
        let s = resample(&recs, "M1").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.channel(Channel::PowerKw).unwrap()[0], 3.0);
        assert_eq!(s.start, ts("2024-01-01T00:00:00Z"));
    }

    #[test]
    fn resample_single_reading_is_identity() {
        let recs = vec![record("M1", "2024-01-01T00:07:00Z", Some(1.25))];
        let s = resample(&recs, "M1").unwrap();
        assert_eq!(s.channel(Channel::PowerKw).unwrap(), &[1.25]);
    }

    #[test]
    fn resample_marks_gaps_missing_and_ors_faults() {
        let mut a = record("M1", "2024-01-01T00:01:00Z", Some(1.0));
        a.fault_flag = Some(false);
        let mut b = record("M1", "2024-01-01T00:05:00Z", Some(2.0));
        b.fault_flag = Some(true);
        let c = record("M1", "2024-01-01T00:31:00Z", Some(5.0));
        let s = resample(&[a, b, c], "M1").unwrap();
        assert_eq!(s.len(), 3);
        let p = s.channel(Channel::PowerKw).unwrap();
        assert_eq!(p[0], 1.5);
        assert!(p[1].is_nan(), "empty bucket is missing");
        assert_eq!(p[2], 5.0);
        let f = s.channel(Channel::FaultFlag).unwrap();
        assert_eq!(f[0], 1.0, "any fault in the bucket counts");
        assert!(f[1].is_nan());
        assert!(f[2].is_nan(), "no fault info for this bucket");
    }

    #[test]
    fn resample_is_order_independent() {
        let mut recs = vec![
            record("M1", "2024-01-01T00:40:00Z", Some(3.0)),
            record("M1", "2024-01-01T00:03:00Z", Some(2.0)),
            record("M1", "2024-01-01T00:10:00Z", Some(4.0)),
        ];
        let a = resample(&recs, "M1").unwrap();
        recs.reverse();
        let b = resample(&recs, "M1").unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}")); // NaN-safe compare
    }

    #[test]
    fn resample_unknown_meter_is_no_records() {
        let recs = vec![record("M1", "2024-01-01T00:00:00Z", Some(1.0))];
        assert_eq!(
            resample(&recs, "M2"),
            Err(TelemetryError::NoRecords {
                meter_id: "M2".into()
            })
        );
    }

    #[test]
    fn resample_on_grid_is_identity_on_values() {
        let values = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let recs: Vec<RawRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut r = record("M1", "2024-01-01T00:00:00Z", Some(v));
                r.timestamp = r.timestamp + Duration::seconds(900 * i as i64);
                r
            })
            .collect();
        let s = resample(&recs, "M1").unwrap();
        assert_eq!(s.len(), values.len());
        assert_eq!(s.channel(Channel::PowerKw).unwrap(), &values);
    }

    #[test]
    fn impute_fills_median_and_records_mask() {
        let recs = vec![
            record("M1", "2024-01-01T00:01:00Z", Some(1.0)),
            record("M1", "2024-01-01T00:31:00Z", Some(3.0)),
        ];
        let s = resample(&recs, "M1").unwrap();
        let filled = impute(&s).unwrap();
        assert_eq!(filled.channel(Channel::PowerKw).unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(filled.imputed[&Channel::PowerKw], vec![false, true, false]);
    }

    #[test]
    fn impute_without_gaps_is_identity() {
        let recs = vec![
            record("M1", "2024-01-01T00:01:00Z", Some(1.0)),
            record("M1", "2024-01-01T00:16:00Z", Some(3.0)),
        ];
        let s = resample(&recs, "M1").unwrap();
        let filled = impute(&s).unwrap();
        assert_eq!(filled, s);
    }

    #[test]
    fn impute_median_matches_sort_oracle() {
        // Channel [5, missing, 5, 9]: median of {5,5,9} is 5 by the oracle.
        let recs = vec![
            record("M1", "2024-01-01T00:00:00Z", Some(5.0)),
            record("M1", "2024-01-01T00:30:00Z", Some(5.0)),
            record("M1", "2024-01-01T00:45:00Z", Some(9.0)),
        ];
        let s = resample(&recs, "M1").unwrap();
        let filled = impute(&s).unwrap();
        let mut present = vec![5.0, 5.0, 9.0];
        present.sort_by(f64::total_cmp);
        let oracle = if present.len() % 2 == 1 {
            present[present.len() / 2]
        } else {
            (present[present.len() / 2 - 1] + present[present.len() / 2]) / 2.0
        };
        assert_eq!(filled.channel(Channel::PowerKw).unwrap()[1], oracle);
    }

    #[test]
    fn impute_all_missing_channel_is_an_error() {
        let mut s = MeterSeries {
            meter_id: "M1".into(),
            start: ts("2024-01-01T00:00:00Z"),
            step_secs: STEP_SECS,
            channels: BTreeMap::new(),
            imputed: BTreeMap::new(),
            tariff: Vec::new(),
            tariff_imputed: Vec::new(),
        };
        s.channels.insert(Channel::SolarKw, vec![f64::NAN; 4]);
        s.imputed.insert(Channel::SolarKw, vec![false; 4]);
        assert_eq!(
            impute(&s),
            Err(TelemetryError::AllMissingChannel {
                channel: "solar_kw".into(),
                meter_id: "M1".into()
            })
        );
    }

    #[test]
    fn tariff_mode_breaks_ties_lexicographically() {
        let mut a = record("M1", "2024-01-01T00:00:00Z", Some(1.0));
        a.tariff_class = Some("industrial".into());
        let mut b = record("M1", "2024-01-01T00:15:00Z", Some(1.0));
        b.tariff_class = Some("commercial".into());
        let c = record("M1", "2024-01-01T00:30:00Z", Some(1.0));
        let s = resample(&[a, b, c], "M1").unwrap();
        let filled = impute(&s).unwrap();
        assert_eq!(filled.tariff[2].as_deref(), Some("commercial"));
        assert!(filled.tariff_imputed[2]);
    }

    #[test]
    fn series_csv_round_trips_through_ingest() {
        let mut a = record("M1", "2024-01-01T00:01:00Z", Some(1.238471));
        a.fault_flag = Some(true);
        a.voltage_v = Some(229.871);
        let mut b = record("M1", "2024-01-01T00:16:00Z", Some(2.5));
        b.fault_flag = Some(false);
        b.voltage_v = Some(231.002);
        let s = impute(&resample(&[a, b], "M1").unwrap()).unwrap();
        let csv = series_to_csv(std::slice::from_ref(&s));
        let recs = parse_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        let back = resample(&recs, "M1").unwrap();
        assert_eq!(back.channel(Channel::PowerKw), s.channel(Channel::PowerKw));
        assert_eq!(back.channel(Channel::VoltageV), s.channel(Channel::VoltageV));
        assert_eq!(
            back.channel(Channel::FaultFlag),
            s.channel(Channel::FaultFlag)
        );
    }

    proptest! {
        #[test]
        fn bucket_mean_is_bounded_by_extremes(
            raw in proptest::collection::vec((0i64..7200, 0.0f64..100.0), 1..60),
        ) {
            let base = ts("2024-01-01T00:00:00Z");
            let recs: Vec<RawRecord> = raw.iter().map(|&(off, v)| {
                let mut r = record("M1", "2024-01-01T00:00:00Z", Some(v));
                r.timestamp = base + Duration::seconds(off);
                r
            }).collect();
            let s = resample(&recs, "M1").unwrap();
            let p = s.channel(Channel::PowerKw).unwrap();
            for (i, &mean) in p.iter().enumerate() {
                if mean.is_nan() { continue; }
                let lo = s.timestamp(i).timestamp();
                let in_bucket: Vec<f64> = recs.iter()
                    .filter(|r| {
                        let t = r.timestamp.timestamp();
                        t >= lo && t < lo + STEP_SECS
                    })
                    .map(|r| r.power_kw.unwrap())
                    .collect();
                let min = in_bucket.iter().copied().fold(f64::INFINITY, f64::min);
                let max = in_bucket.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(mean >= min - 1e-9 && mean <= max + 1e-9);
            }
        }

        #[test]
        fn impute_is_idempotent(
            raw in proptest::collection::vec(proptest::option::of(0.0f64..50.0), 2..40),
        ) {
            prop_assume!(raw.iter().any(|v| v.is_some()));
            let base = ts("2024-01-01T00:00:00Z");
            let recs: Vec<RawRecord> = raw.iter().enumerate().map(|(i, &v)| {
                let mut r = record("M1", "2024-01-01T00:00:00Z", v.or(Some(0.0)));
                r.power_kw = v;
                r.voltage_v = Some(230.0);
                r.timestamp = base + Duration::seconds(900 * i as i64);
                r
            }).collect();
            let s = resample(&recs, "M1").unwrap();
            let once = impute(&s).unwrap();
            let twice = impute(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
