//! Engineered features per meter interval: supply/demand balance, loss
//! fraction, rolling statistics of consumption, environment-adjusted
//! consumption, and apparent power, alongside the raw channels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{Channel, MeterSeries};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty series")]
    EmptySeries,
    #[error("channel {channel:?} required but absent from meter {meter_id:?}")]
    MissingChannel { channel: String, meter_id: String },
    #[error("transformer supply length {got} does not match series length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Frame columns in their fixed CSV order: engineered columns first, then
/// the raw channels passed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureCol {
    TotalSupplyKw,
    TotalDemandKw,
    ImbalanceKw,
    LossPct,
    RollMean1h,
    RollStd1h,
    RollMean6h,
    RollStd6h,
    RollMean24h,
    RollStd24h,
    TempAdjConsumption,
    HumidityAdjConsumption,
    PriceWeightedConsumption,
    ApparentPowerKva,
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

impl FeatureCol {
    pub const ALL: [FeatureCol; 26] = [
        FeatureCol::TotalSupplyKw,
        FeatureCol::TotalDemandKw,
        FeatureCol::ImbalanceKw,
        FeatureCol::LossPct,
        FeatureCol::RollMean1h,
        FeatureCol::RollStd1h,
        FeatureCol::RollMean6h,
        FeatureCol::RollStd6h,
        FeatureCol::RollMean24h,
        FeatureCol::RollStd24h,
        FeatureCol::TempAdjConsumption,
        FeatureCol::HumidityAdjConsumption,
        FeatureCol::PriceWeightedConsumption,
        FeatureCol::ApparentPowerKva,
        FeatureCol::PowerKw,
        FeatureCol::VoltageV,
        FeatureCol::CurrentA,
        FeatureCol::PowerFactor,
        FeatureCol::ReactiveKvar,
        FeatureCol::GridSupplyKw,
        FeatureCol::SolarKw,
        FeatureCol::WindKw,
        FeatureCol::TemperatureC,
        FeatureCol::HumidityPct,
        FeatureCol::PricePerKwh,
        FeatureCol::FaultFlag,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureCol::TotalSupplyKw => "total_supply_kw",
            FeatureCol::TotalDemandKw => "total_demand_kw",
            FeatureCol::ImbalanceKw => "imbalance_kw",
            FeatureCol::LossPct => "loss_pct",
            FeatureCol::RollMean1h => "roll_mean_1h",
            FeatureCol::RollStd1h => "roll_std_1h",
            FeatureCol::RollMean6h => "roll_mean_6h",
            FeatureCol::RollStd6h => "roll_std_6h",
            FeatureCol::RollMean24h => "roll_mean_24h",
            FeatureCol::RollStd24h => "roll_std_24h",
            FeatureCol::TempAdjConsumption => "temp_adj_consumption",
            FeatureCol::HumidityAdjConsumption => "humidity_adj_consumption",
            FeatureCol::PriceWeightedConsumption => "price_weighted_consumption",
            FeatureCol::ApparentPowerKva => "apparent_power_kva",
            FeatureCol::PowerKw => "power_kw",
            FeatureCol::VoltageV => "voltage_v",
            FeatureCol::CurrentA => "current_a",
            FeatureCol::PowerFactor => "power_factor",
            FeatureCol::ReactiveKvar => "reactive_kvar",
            FeatureCol::GridSupplyKw => "grid_supply_kw",
            FeatureCol::SolarKw => "solar_kw",
            FeatureCol::WindKw => "wind_kw",
            FeatureCol::TemperatureC => "temperature_c",
            FeatureCol::HumidityPct => "humidity_pct",
            FeatureCol::PricePerKwh => "price_per_kwh",
            FeatureCol::FaultFlag => "fault_flag",
        }
    }
}

impl fmt::Display for FeatureCol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureCol {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        FeatureCol::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

/// Rolling-window lengths in 15-minute samples: 1 h, 6 h, 24 h.
pub const ROLL_WINDOWS: [(usize, FeatureCol, FeatureCol); 3] = [
    (4, FeatureCol::RollMean1h, FeatureCol::RollStd1h),
    (24, FeatureCol::RollMean6h, FeatureCol::RollStd6h),
    (96, FeatureCol::RollMean24h, FeatureCol::RollStd24h),
];

pub const FRAME_CSV_VERSION: u32 = 1;

/// All engineered and raw columns for one meter, aligned to its series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub meter_id: String,
    pub start: DateTime<Utc>,
    pub step_secs: i64,
    pub columns: BTreeMap<FeatureCol, Vec<f64>>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn col(&self, c: FeatureCol) -> &[f64] {
        &self.columns[&c]
    }

    pub fn value(&self, c: FeatureCol, idx: usize) -> f64 {
        self.columns[&c][idx]
    }

    pub fn timestamp(&self, idx: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.step_secs * idx as i64)
    }
}

pub fn total_supply(grid_supply_kw: f64, solar_kw: f64, wind_kw: f64) -> f64 {
    grid_supply_kw + solar_kw + wind_kw
}

pub fn imbalance(total_supply_kw: f64, total_demand_kw: f64) -> f64 {
    total_supply_kw - total_demand_kw
}

/// Loss as a fraction of grid supply; 0 when supply is effectively zero
/// (the guard keeps idle feeders from producing infinities).
pub fn loss_percentage(grid_supply_kw: f64, power_kw: f64) -> f64 {
    const EPS: f64 = 1e-9;
    if grid_supply_kw <= EPS {
        0.0
    } else {
        (grid_supply_kw - power_kw) / grid_supply_kw
    }
}

pub fn apparent_power(p_kw: f64, q_kvar: f64) -> f64 {
    p_kw.hypot(q_kvar)
}

/// Environment-interaction features. The adjustments are multiplicative
/// with fixed reference points: 20 °C reference, 40 °C scale, humidity as
/// a 0–1 factor, price as a direct weight.
pub fn environmental_features(
    power_kw: f64,
    temperature_c: f64,
    humidity_pct: f64,
    price: f64,
) -> (f64, f64, f64) {
    let temp_adj = power_kw * (1.0 + (temperature_c - 20.0) / 40.0);
    let humidity_adj = power_kw * (humidity_pct / 100.0);
    let price_weighted = power_kw * price;
    (temp_adj, humidity_adj, price_weighted)
}

/// Trailing-window mean and population std (divisor n). Warm-up indices
/// (i < window−1) use the available prefix so output length equals input
/// length. Running sums are rebuilt from scratch periodically to stop
/// floating-point drift on long series.
pub fn rolling_stats(series: &[f64], window_len: usize) -> Result<(Vec<f64>, Vec<f64>), FeatureError> {
    assert!(window_len >= 1, "window_len must be >= 1");
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    const RESYNC_EVERY: usize = 4096;
    let mut means = Vec::with_capacity(series.len());
    let mut stds = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..series.len() {
        let x = series[i];
        sum += x;
        sumsq += x * x;
        if i >= window_len {
            let old = series[i - window_len];
            sum -= old;
            sumsq -= old * old;
        }
        if i % RESYNC_EVERY == RESYNC_EVERY - 1 {
            let lo = (i + 1).saturating_sub(window_len);
            sum = series[lo..=i].iter().sum();
            sumsq = series[lo..=i].iter().map(|v| v * v).sum();
        }
        let n = (i + 1).min(window_len) as f64;
        let mean = sum / n;
        let var = (sumsq / n - mean * mean).max(0.0);
        means.push(mean);
        stds.push(var.sqrt());
    }
    Ok((means, stds))
}

/// Compute the full frame for one imputed series. When `transformer_supply`
/// is given (the per-interval supply attributed to this meter from its
/// transformer), it replaces the meter's own grid_supply reading in the
/// supply and loss columns.
pub fn build_frame(
    series: &MeterSeries,
    transformer_supply: Option<&[f64]>,
) -> Result<FeatureFrame, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let n = series.len();
    let chan = |c: Channel| -> Result<&[f64], FeatureError> {
        series.channel(c).ok_or_else(|| FeatureError::MissingChannel {
            channel: c.as_str().to_string(),
            meter_id: series.meter_id.clone(),
        })
    };
    let power = chan(Channel::PowerKw)?;
    let voltage = chan(Channel::VoltageV)?;
    let current = chan(Channel::CurrentA)?;
    let pf = chan(Channel::PowerFactor)?;
    let reactive = chan(Channel::ReactiveKvar)?;
    let grid = chan(Channel::GridSupplyKw)?;
    let solar = chan(Channel::SolarKw)?;
    let wind = chan(Channel::WindKw)?;
    let temp = chan(Channel::TemperatureC)?;
    let humidity = chan(Channel::HumidityPct)?;
    let price = chan(Channel::PricePerKwh)?;
    let fault = chan(Channel::FaultFlag)?;

    let supply_src: &[f64] = match transformer_supply {
        Some(ts) => {
            if ts.len() != n {
                return Err(FeatureError::LengthMismatch {
                    expected: n,
                    got: ts.len(),
                });
            }
            ts
        }
        None => grid,
    };

    let mut columns: BTreeMap<FeatureCol, Vec<f64>> = BTreeMap::new();
    let mut supply_col = Vec::with_capacity(n);
    let mut imbalance_col = Vec::with_capacity(n);
    let mut loss_col = Vec::with_capacity(n);
    let mut temp_adj = Vec::with_capacity(n);
    let mut hum_adj = Vec::with_capacity(n);
    let mut price_w = Vec::with_capacity(n);
    let mut s_kva = Vec::with_capacity(n);
    for i in 0..n {
        let ts = total_supply(supply_src[i], solar[i], wind[i]);
        supply_col.push(ts);
        imbalance_col.push(imbalance(ts, power[i]));
        loss_col.push(loss_percentage(supply_src[i], power[i]));
        let (t, h, p) = environmental_features(power[i], temp[i], humidity[i], price[i]);
        temp_adj.push(t);
        hum_adj.push(h);
        price_w.push(p);
        s_kva.push(apparent_power(power[i], reactive[i]));
    }
    columns.insert(FeatureCol::TotalSupplyKw, supply_col);
    columns.insert(FeatureCol::TotalDemandKw, power.to_vec());
    columns.insert(FeatureCol::ImbalanceKw, imbalance_col);
    columns.insert(FeatureCol::LossPct, loss_col);
    for (w, mean_col, std_col) in ROLL_WINDOWS {
        let (m, s) = rolling_stats(power, w)?;
        columns.insert(mean_col, m);
        columns.insert(std_col, s);
    }
    columns.insert(FeatureCol::TempAdjConsumption, temp_adj);
    columns.insert(FeatureCol::HumidityAdjConsumption, hum_adj);
    columns.insert(FeatureCol::PriceWeightedConsumption, price_w);
    columns.insert(FeatureCol::ApparentPowerKva, s_kva);
    columns.insert(FeatureCol::PowerKw, power.to_vec());
    columns.insert(FeatureCol::VoltageV, voltage.to_vec());
    columns.insert(FeatureCol::CurrentA, current.to_vec());
    columns.insert(FeatureCol::PowerFactor, pf.to_vec());
    columns.insert(FeatureCol::ReactiveKvar, reactive.to_vec());
    columns.insert(FeatureCol::GridSupplyKw, grid.to_vec());
    columns.insert(FeatureCol::SolarKw, solar.to_vec());
    columns.insert(FeatureCol::WindKw, wind.to_vec());
    columns.insert(FeatureCol::TemperatureC, temp.to_vec());
    columns.insert(FeatureCol::HumidityPct, humidity.to_vec());
    columns.insert(FeatureCol::PricePerKwh, price.to_vec());
    columns.insert(FeatureCol::FaultFlag, fault.to_vec());

    Ok(FeatureFrame {
        meter_id: series.meter_id.clone(),
        start: series.start,
        step_secs: series.step_secs,
        columns,
    })
}

/// Frames to CSV. First line is a version comment so readers can reject
/// layouts they don't understand.
pub fn frames_to_csv(frames: &[FeatureFrame]) -> String {
    let mut out = format!("#frame_version={FRAME_CSV_VERSION}\n");
    out.push_str("meter_id,timestamp");
    for c in FeatureCol::ALL {
        out.push(',');
        out.push_str(c.as_str());
    }
    out.push('\n');
    for f in frames {
        for i in 0..f.len() {
            out.push_str(&f.meter_id);
            out.push(',');
            out.push_str(&f.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string());
            for c in FeatureCol::ALL {
                out.push(',');
                out.push_str(&format!("{}", f.value(c, i)));
            }
            out.push('\n');
        }
    }
    out
}

/// Parse frames written by [`frames_to_csv`]. Rows must be grouped by meter
/// and chronologically ordered within each meter, which the writer
/// guarantees.
pub fn frames_from_csv(text: &str) -> Result<Vec<FeatureFrame>, FeatureError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or(FeatureError::EmptySeries)?;
    let header = if let Some(rest) = first.strip_prefix('#') {
        let _ = rest; // version pragma; only v1 exists
        lines.next().ok_or(FeatureError::EmptySeries)?
    } else {
        first
    };
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize, FeatureError> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| FeatureError::MissingChannel {
                channel: name.to_string(),
                meter_id: String::new(),
            })
    };
    let meter_idx = find("meter_id")?;
    let ts_idx = find("timestamp")?;
    let mut col_idx = Vec::new();
    for c in FeatureCol::ALL {
        col_idx.push((c, find(c.as_str())?));
    }

    let mut frames: Vec<FeatureFrame> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let meter = cells[meter_idx];
        let ts = chrono::DateTime::parse_from_rfc3339(cells[ts_idx])
            .map(|d| d.with_timezone(&Utc))
            .map_err(|_| FeatureError::EmptySeries)?;
        let new_frame = frames.last().map_or(true, |f| f.meter_id != meter);
        if new_frame {
            let mut columns = BTreeMap::new();
            for c in FeatureCol::ALL {
                columns.insert(c, Vec::new());
            }
            frames.push(FeatureFrame {
                meter_id: meter.to_string(),
                start: ts,
                step_secs: crate::telemetry::STEP_SECS,
                columns,
            });
        }
        let frame = frames.last_mut().unwrap();
        for &(c, idx) in &col_idx {
            let v: f64 = cells[idx].parse().unwrap_or(f64::NAN);
            frame.columns.get_mut(&c).unwrap().push(v);
        }
    }
    if frames.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    Ok(frames)
}
