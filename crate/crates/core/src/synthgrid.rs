//! Seeded synthetic grid: topology, telemetry, and theft injection with
//! ground truth.
//!
//! Honest meters are generated so that none of the labeling rules fire on
//! them (loss fraction 1–4%, voltage well inside ±10%, power factor ≥ 0.88,
//! renewables small relative to load); injected theft then separates
//! cleanly in ground truth. Every stream derives from (master seed, name),
//! so output is a pure function of the arguments.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;
use crate::telemetry::{Channel, MeterSeries, STEP_SECS};

pub const INTERVALS_PER_DAY: usize = 96;
/// Generated consumption never drops below this (idle baseline); keeps
/// power factor meaningful and makes bypass scaling strictly visible.
pub const MIN_POWER_KW: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error(
        "target prevalence {target} is unreachable with meter fraction {meter_fraction}: \
         each theft meter would need {required:.3} of its intervals flagged (max 0.9)"
    )]
    InfeasiblePrevalence {
        target: f64,
        meter_fraction: f64,
        required: f64,
    },
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub transformers: Vec<String>,
    pub meters: Vec<String>,
    /// (transformer_id, meter_id) star edges.
    pub edges: Vec<(String, String)>,
    pub nominal_voltage_v: f64,
}

impl GridTopology {
    pub fn transformer_of(&self, meter_id: &str) -> Option<&str> {
        self.edges
            .iter()
            .find(|(_, m)| m == meter_id)
            .map(|(t, _)| t.as_str())
    }

    pub fn meters_of(&self, transformer_id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(t, _)| t == transformer_id)
            .map(|(_, m)| m.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheftScenario {
    None,
    Bypass,
    IntermittentTap,
    MeterZeroing,
}

impl TheftScenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            TheftScenario::None => "none",
            TheftScenario::Bypass => "bypass",
            TheftScenario::IntermittentTap => "intermittent_tap",
            TheftScenario::MeterZeroing => "meter_zeroing",
        }
    }
}

/// Per-meter, per-interval injected-theft truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TheftGroundTruth {
    pub per_meter: BTreeMap<String, Vec<TheftScenario>>,
}

impl TheftGroundTruth {
    pub fn flag(&self, meter_id: &str, idx: usize) -> bool {
        self.per_meter
            .get(meter_id)
            .map_or(false, |v| v[idx] != TheftScenario::None)
    }

    pub fn flags_of(&self, meter_id: &str) -> Option<&[TheftScenario]> {
        self.per_meter.get(meter_id).map(|v| v.as_slice())
    }

    pub fn flagged_points(&self) -> usize {
        self.per_meter
            .values()
            .map(|v| v.iter().filter(|&&s| s != TheftScenario::None).count())
            .sum()
    }

    pub fn total_points(&self) -> usize {
        self.per_meter.values().map(Vec::len).sum()
    }

    pub fn point_prevalence(&self) -> f64 {
        let total = self.total_points();
        if total == 0 {
            0.0
        } else {
            self.flagged_points() as f64 / total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("meter_id,interval_index,flag,scenario\n");
        for (meter, flags) in &self.per_meter {
            for (i, s) in flags.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    meter,
                    i,
                    u8::from(*s != TheftScenario::None),
                    s.as_str()
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Fraction of meters that steal at all.
    pub theft_meter_fraction: f64,
    /// Target fraction of all (meter, interval) points flagged.
    pub target_point_prevalence: f64,
    /// Mix weights for (bypass, intermittent_tap, meter_zeroing); sum 1.
    pub scenario_weights: [f64; 3],
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            theft_meter_fraction: 0.3,
            target_point_prevalence: 0.188,
            scenario_weights: [0.5, 0.3, 0.2],
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.theft_meter_fraction) {
            return Err(SynthError::InvalidConfig(format!(
                "theft_meter_fraction {} outside [0,1]",
                self.theft_meter_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.target_point_prevalence) {
            return Err(SynthError::InvalidConfig(format!(
                "target_point_prevalence {} outside [0,1]",
                self.target_point_prevalence
            )));
        }
        let wsum: f64 = self.scenario_weights.iter().sum();
        if self.scenario_weights.iter().any(|&w| w < 0.0) || (wsum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidConfig(format!(
                "scenario_weights must be nonnegative and sum to 1, got {:?}",
                self.scenario_weights
            )));
        }
        Ok(())
    }
}

/// Star topology: every transformer serves `meters_per_transformer` meters,
/// with the meter-to-transformer assignment shuffled under the seed.
pub fn generate_topology(
    n_transformers: usize,
    meters_per_transformer: usize,
    seed: u64,
) -> GridTopology {
    assert!(n_transformers > 0 && meters_per_transformer > 0);
    let n_meters = n_transformers * meters_per_transformer;
    let width = |n: usize| (n.max(1) as f64).log10().floor() as usize + 1;
    let tw = width(n_transformers).max(2);
    let mw = width(n_meters).max(3);
    let transformers: Vec<String> = (1..=n_transformers)
        .map(|i| format!("TX_{i:0tw$}"))
        .collect();
    let meters: Vec<String> = (1..=n_meters).map(|i| format!("Meter_{i:0mw$}")).collect();

    let mut order: Vec<usize> = (0..n_meters).collect();
    let mut rng = seeds::rng(seed, "topology");
    order.shuffle(&mut rng);

    let mut edges = Vec::with_capacity(n_meters);
    for (slot, &meter_idx) in order.iter().enumerate() {
        let t = &transformers[slot / meters_per_transformer];
        edges.push((t.clone(), meters[meter_idx].clone()));
    }
    edges.sort();
    GridTopology {
        transformers,
        meters,
        edges,
        nominal_voltage_v: 230.0,
    }
}

struct Weather {
    temperature: Vec<f64>,
    humidity: Vec<f64>,
    price: Vec<f64>,
    solar_bell: Vec<f64>, // daylight bell × per-day clear-sky factor
}

fn simulate_weather(n: usize, seed: u64) -> Weather {
    let mut rng = seeds::rng(seed, "weather");
    let noise = Normal::new(0.0, 1.0).unwrap();
    let days = n.div_ceil(INTERVALS_PER_DAY);
    let clear_sky: Vec<f64> = (0..days).map(|_| rng.random_range(0.4..1.0)).collect();
    let mut temperature = Vec::with_capacity(n);
    let mut humidity = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    let mut solar_bell = Vec::with_capacity(n);
    for t in 0..n {
        let day = t / INTERVALS_PER_DAY;
        let hour = (t % INTERVALS_PER_DAY) as f64 / 4.0;
        let seasonal = 10.0 + 6.0 * (std::f64::consts::TAU * (day as f64 + 20.0) / 365.0).sin();
        let diurnal = 4.0 * (std::f64::consts::TAU * (hour - 14.0) / 24.0).cos();
        let temp = seasonal + diurnal + 0.6 * noise.sample(&mut rng);
        temperature.push(temp);
        humidity.push((72.0 - 1.1 * (temp - 10.0) + 2.0 * noise.sample(&mut rng)).clamp(20.0, 98.0));
        let base_price = if (17.0..21.0).contains(&hour) {
            0.32
        } else if (7.0..17.0).contains(&hour) {
            0.22
        } else {
            0.12
        };
        price.push(base_price + rng.random_range(-0.01..0.01));
        let bell = if (6.0..18.0).contains(&hour) {
            (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().powi(2)
        } else {
            0.0
        };
        solar_bell.push(bell * clear_sky[day]);
    }
    Weather {
        temperature,
        humidity,
        price,
        solar_bell,
    }
}

/// Recompute reactive power, apparent-power-consistent current, from the
/// power and power-factor channels at one interval.
fn recompute_electricals(channels: &mut BTreeMap<Channel, Vec<f64>>, idx: usize) {
    let p = channels[&Channel::PowerKw][idx];
    let pf = channels[&Channel::PowerFactor][idx].clamp(0.01, 1.0);
    let v = channels[&Channel::VoltageV][idx];
    let s_kva = p / pf;
    let q = (s_kva * s_kva - p * p).max(0.0).sqrt();
    channels.get_mut(&Channel::ReactiveKvar).unwrap()[idx] = q;
    channels.get_mut(&Channel::CurrentA).unwrap()[idx] = s_kva * 1000.0 / v;
}

/// Deterministic telemetry for every meter in the topology: diurnal load
/// peaking at 19:00 with a weekend bump, small renewables, shared weather,
/// and per-meter technical loss of 1–4% feeding the grid-supply channel.
pub fn simulate_telemetry(
    topology: &GridTopology,
    days: usize,
    seed: u64,
) -> BTreeMap<String, MeterSeries> {
    assert!(days >= 1);
    let n = days * INTERVALS_PER_DAY;
    let weather = simulate_weather(n, seed);
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();

    let mut out = BTreeMap::new();
    for meter_id in &topology.meters {
        let mut rng = seeds::rng(seed, &format!("telemetry/{meter_id}"));
        let noise = Normal::new(0.0, 1.0).unwrap();
        let base = rng.random_range(0.4..2.5);
        let solar_cap = rng.random_range(0.0..0.015) * base;
        let wind_cap = rng.random_range(0.0..0.005) * base;
        let loss_frac = rng.random_range(0.01..0.04);
        let tariff_class = if base < 1.0 {
            "residential"
        } else if base < 1.9 {
            "commercial"
        } else {
            "industrial"
        };

        let mut power = Vec::with_capacity(n);
        let mut voltage = Vec::with_capacity(n);
        let mut pf = Vec::with_capacity(n);
        let mut solar = Vec::with_capacity(n);
        let mut wind = Vec::with_capacity(n);
        let mut grid = Vec::with_capacity(n);
        let mut fault = Vec::with_capacity(n);
        let mut wind_state = 0.3 * wind_cap;
        for t in 0..n {
            let day = t / INTERVALS_PER_DAY;
            let hour = (t % INTERVALS_PER_DAY) as f64 / 4.0;
            let diurnal = 1.0 + 0.55 * (std::f64::consts::TAU * (hour - 19.0) / 24.0).cos();
            // 2024-01-01 is a Monday; days 5 and 6 of each week are the weekend.
            let weekly = if day % 7 >= 5 { 1.12 } else { 1.0 };
            let p = (base * diurnal * weekly + 0.06 * base * noise.sample(&mut rng))
                .max(MIN_POWER_KW);
            power.push(p);
            voltage.push((230.0 * (1.0 + 0.006 * noise.sample(&mut rng))).clamp(214.0, 246.0));
            pf.push((0.955 + 0.018 * noise.sample(&mut rng)).clamp(0.88, 0.99));
            solar.push(solar_cap * weather.solar_bell[t]);
            wind_state = 0.92 * wind_state + 0.08 * wind_cap * noise.sample(&mut rng).abs();
            wind.push(wind_state);
            let lf = (loss_frac + rng.random_range(-0.002..0.002)).max(0.005);
            grid.push(p * (1.0 + lf));
            // Rare faults: real ones ride an overcurrent, ghost ones don't.
            let roll: f64 = rng.random();
            fault.push(if roll < 0.0008 {
                2.0 // marker: real fault (current spike applied below)
            } else if roll < 0.0012 {
                1.0
            } else {
                0.0
            });
        }

        let mut channels: BTreeMap<Channel, Vec<f64>> = BTreeMap::new();
        channels.insert(Channel::PowerKw, power);
        channels.insert(Channel::VoltageV, voltage);
        channels.insert(Channel::PowerFactor, pf);
        channels.insert(Channel::SolarKw, solar);
        channels.insert(Channel::WindKw, wind);
        channels.insert(Channel::GridSupplyKw, grid);
        channels.insert(Channel::TemperatureC, weather.temperature.clone());
        channels.insert(Channel::HumidityPct, weather.humidity.clone());
        channels.insert(Channel::PricePerKwh, weather.price.clone());
        channels.insert(Channel::ReactiveKvar, vec![0.0; n]);
        channels.insert(Channel::CurrentA, vec![0.0; n]);
        for t in 0..n {
            recompute_electricals(&mut channels, t);
        }
        let fault_markers = fault;
        let mut fault01 = Vec::with_capacity(n);
        for t in 0..n {
            match fault_markers[t] as u8 {
                2 => {
                    let spike = rng.random_range(2.5..4.0);
                    channels.get_mut(&Channel::CurrentA).unwrap()[t] *= spike;
                    fault01.push(1.0);
                }
                1 => fault01.push(1.0),
                _ => fault01.push(0.0),
            }
        }
        channels.insert(Channel::FaultFlag, fault01);

        let imputed = channels.keys().map(|&c| (c, vec![false; n])).collect();
        out.insert(
            meter_id.clone(),
            MeterSeries {
                meter_id: meter_id.clone(),
                start,
                step_secs: STEP_SECS,
                channels,
                imputed,
                tariff: vec![Some(tariff_class.to_string()); n],
                tariff_imputed: vec![false; n],
            },
        );
    }
    out
}

fn pick_scenario(rng: &mut ChaCha8Rng, weights: &[f64; 3]) -> TheftScenario {
    let total: f64 = weights.iter().sum();
    let r = rng.random::<f64>() * total;
    if r < weights[0] {
        TheftScenario::Bypass
    } else if r < weights[0] + weights[1] {
        TheftScenario::IntermittentTap
    } else {
        TheftScenario::MeterZeroing
    }
}

/// Uniformly choose a start index such that `len` consecutive intervals are
/// unflagged, or None if no free run is long enough.
fn place_episode(
    rng: &mut ChaCha8Rng,
    flags: &[TheftScenario],
    len: usize,
) -> Option<usize> {
    let mut valid_starts = 0usize;
    let mut run = 0usize;
    for &f in flags {
        if f == TheftScenario::None {
            run += 1;
            if run >= len {
                valid_starts += 1;
            }
        } else {
            run = 0;
        }
    }
    if valid_starts == 0 {
        return None;
    }
    let target = rng.random_range(0..valid_starts);
    let mut seen = 0usize;
    run = 0;
    for (i, &f) in flags.iter().enumerate() {
        if f == TheftScenario::None {
            run += 1;
            if run >= len {
                if seen == target {
                    return Some(i + 1 - len);
                }
                seen += 1;
            }
        } else {
            run = 0;
        }
    }
    None
}

fn longest_free_run(flags: &[TheftScenario]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for &f in flags {
        if f == TheftScenario::None {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Overwrite telemetry with theft episodes until the realized point
/// prevalence matches the target. Thieving meters are a seeded sample of
/// `theft_meter_fraction` of all meters; each gets an equal point quota.
/// Grid supply is never touched — theft hides consumption at the meter.
pub fn inject_theft(
    telemetry: &BTreeMap<String, MeterSeries>,
    cfg: &ScenarioConfig,
) -> Result<(BTreeMap<String, MeterSeries>, TheftGroundTruth), SynthError> {
    cfg.validate()?;
    let mut out = telemetry.clone();
    let mut gt = TheftGroundTruth::default();
    for (id, s) in telemetry {
        gt.per_meter
            .insert(id.clone(), vec![TheftScenario::None; s.len()]);
    }
    if cfg.theft_meter_fraction == 0.0 || cfg.target_point_prevalence == 0.0 {
        return Ok((out, gt));
    }

    let meter_ids: Vec<String> = telemetry.keys().cloned().collect();
    let m = meter_ids.len();
    let k = ((cfg.theft_meter_fraction * m as f64).round() as usize).clamp(1, m);
    let per_meter_frac = cfg.target_point_prevalence * m as f64 / k as f64;
    if per_meter_frac > 0.9 {
        return Err(SynthError::InfeasiblePrevalence {
            target: cfg.target_point_prevalence,
            meter_fraction: cfg.theft_meter_fraction,
            required: per_meter_frac,
        });
    }

    let mut selector = seeds::rng(cfg.seed, "inject/select");
    let mut shuffled = meter_ids.clone();
    shuffled.shuffle(&mut selector);
    let mut thieves: Vec<String> = shuffled.into_iter().take(k).collect();
    thieves.sort();

    for meter_id in &thieves {
        let mut rng = seeds::rng(cfg.seed, &format!("inject/{meter_id}"));
        let series = out.get_mut(meter_id).unwrap();
        let n = series.len();
        let quota = (per_meter_frac * n as f64).round() as usize;
        let flags = gt.per_meter.get_mut(meter_id).unwrap();
        let mut flagged = 0usize;

        while flagged < quota {
            let scenario = pick_scenario(&mut rng, &cfg.scenario_weights);
            let (lo, hi) = match scenario {
                TheftScenario::Bypass => (24, 192),        // 6 h – 2 d
                TheftScenario::IntermittentTap => (4, 24), // 1 h – 6 h
                TheftScenario::MeterZeroing => (8, 48),    // 2 h – 12 h
                TheftScenario::None => unreachable!(),
            };
            let mut len = rng.random_range(lo..=hi).min((quota - flagged).max(2));
            let start = match place_episode(&mut rng, flags, len) {
                Some(s) => s,
                None => {
                    len = longest_free_run(flags);
                    if len == 0 {
                        break;
                    }
                    match place_episode(&mut rng, flags, len) {
                        Some(s) => s,
                        None => break,
                    }
                }
            };
            apply_episode(series, scenario, start, len, &mut rng);
            for f in &mut flags[start..start + len] {
                *f = scenario;
            }
            flagged += len;
        }
    }
    Ok((out, gt))
}

fn apply_episode(
    series: &mut MeterSeries,
    scenario: TheftScenario,
    start: usize,
    len: usize,
    rng: &mut ChaCha8Rng,
) {
    match scenario {
        TheftScenario::Bypass => {
            let u = rng.random_range(0.3..0.7);
            for i in start..start + len {
                let p = series.channels[&Channel::PowerKw][i] * u;
                series.channels.get_mut(&Channel::PowerKw).unwrap()[i] = p;
                recompute_electricals(&mut series.channels, i);
            }
        }
        TheftScenario::IntermittentTap => {
            let keep = rng.random_range(0.2..0.6); // drop 40–80%
            let bad_pf = rng.random_range(0.60..0.83);
            for i in start..start + len {
                let p = series.channels[&Channel::PowerKw][i] * keep;
                series.channels.get_mut(&Channel::PowerKw).unwrap()[i] = p;
                series.channels.get_mut(&Channel::PowerFactor).unwrap()[i] = bad_pf;
                recompute_electricals(&mut series.channels, i);
            }
        }
        TheftScenario::MeterZeroing => {
            for i in start..start + len {
                series.channels.get_mut(&Channel::PowerKw).unwrap()[i] = 0.0;
                series.channels.get_mut(&Channel::CurrentA).unwrap()[i] = 0.0;
                series.channels.get_mut(&Channel::ReactiveKvar).unwrap()[i] = 0.0;
            }
        }
        TheftScenario::None => unreachable!(),
    }
}

/// Add a seeded two-state (compressor-style) appliance to every meter:
/// square-wave cycles of `rated_kw` with jittered on/off runs. Grid supply
/// scales consistently so honest meters stay honest, and the electrical
/// channels are recomputed. Returns per-meter on/off ground truth.
pub fn inject_appliance(
    telemetry: &BTreeMap<String, MeterSeries>,
    rated_kw: f64,
    seed: u64,
) -> (BTreeMap<String, MeterSeries>, BTreeMap<String, Vec<bool>>) {
    assert!(rated_kw > 0.0);
    let mut out = telemetry.clone();
    let mut truth = BTreeMap::new();
    for (meter_id, series) in out.iter_mut() {
        let mut rng = seeds::rng(seed, &format!("appliance/{meter_id}"));
        let n = series.len();
        let mut state = Vec::with_capacity(n);
        let mut on = rng.random::<f64>() < 0.4;
        let mut remaining = rng.random_range(1..=4usize);
        for _ in 0..n {
            if remaining == 0 {
                on = !on;
                remaining = if on {
                    rng.random_range(3..=5) // 45–75 min on
                } else {
                    rng.random_range(4..=7) // 60–105 min off
                };
            }
            state.push(on);
            remaining -= 1;
        }
        for i in 0..n {
            if state[i] {
                let p_old = series.channels[&Channel::PowerKw][i];
                let p_new = p_old + rated_kw;
                let scale = p_new / p_old.max(1e-9);
                series.channels.get_mut(&Channel::PowerKw).unwrap()[i] = p_new;
                let g = series.channels.get_mut(&Channel::GridSupplyKw).unwrap();
                g[i] *= scale;
                recompute_electricals(&mut series.channels, i);
            }
        }
        truth.insert(meter_id.clone(), state);
    }
    (out, truth)
}
