//! Experiment runner: block loops with trajectory chaining, scheme
//! comparison over seeds and sweep points, CSV/JSON emission.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{baseline4_trajectory, baseline4_trajectory_capped, flight_block, run_baseline, BaselineContext, BaselineId};
use crate::ccp::{self, CcpSettings, CcpTrace};
use crate::channel::draw_block;
use crate::error::{Error, Result};
use crate::model::{objective, Plan, QosSpec};
use crate::scenario::{generate_scenario, load_scenario, Layout, Point, Scenario, SimParams};
use crate::units::w_to_dbm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Proposed,
    Baseline(BaselineId),
}

impl Scheme {
    pub fn all() -> Vec<Scheme> {
        std::iter::once(Scheme::Proposed)
            .chain(BaselineId::ALL.into_iter().map(Scheme::Baseline))
            .collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Proposed => f.write_str("proposed"),
            Scheme::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("proposed") {
            Ok(Scheme::Proposed)
        } else {
            s.parse().map(Scheme::Baseline)
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Block index of a row; `Mean` marks the per-run aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockTag {
    Index(usize),
    Mean,
}

impl fmt::Display for BlockTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockTag::Index(b) => b.fmt(f),
            BlockTag::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for BlockTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(BlockTag::Mean);
        }
        s.parse()
            .map(BlockTag::Index)
            .map_err(|_| Error::Config(format!("bad block tag '{s}'")))
    }
}

impl Serialize for BlockTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// JSON has no NaN; failed rows carry null.
fn nan_as_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One block of one run, or the mean over a run's blocks. Power columns
/// are per-slot averages in watts; NaN when the run produced no plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub block: BlockTag,
    pub scheme: Scheme,
    #[serde(rename = "L")]
    pub num_uavs: usize,
    #[serde(rename = "K")]
    pub num_users: usize,
    /// bit/s
    pub r_min: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub bs_power_w: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub uav_tx_power_w: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub uav_nav_power_w: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub per_uav_avg_w: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub weighted_total_w: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

pub const CSV_HEADER: [&str; 14] = [
    "seed",
    "block",
    "scheme",
    "L",
    "K",
    "r_min",
    "bs_power_w",
    "uav_tx_power_w",
    "uav_nav_power_w",
    "per_uav_avg_w",
    "weighted_total_w",
    "iterations",
    "converged",
    "seconds",
];

const DBM_HEADER: [&str; 5] = [
    "bs_power_dbm",
    "uav_tx_power_dbm",
    "uav_nav_power_dbm",
    "per_uav_avg_dbm",
    "weighted_total_dbm",
];

impl ResultRow {
    fn powers(&self) -> [f64; 5] {
        [
            self.bs_power_w,
            self.uav_tx_power_w,
            self.uav_nav_power_w,
            self.per_uav_avg_w,
            self.weighted_total_w,
        ]
    }

    fn sort_key(&self, other: &Self) -> Ordering {
        self.seed
            .cmp(&other.seed)
            .then(self.num_uavs.cmp(&other.num_uavs))
            .then(self.r_min.total_cmp(&other.r_min))
            .then(self.scheme.cmp(&other.scheme))
            .then(self.block.cmp(&other.block))
    }

    fn record(&self, dbm: bool) -> Vec<String> {
        let mut r = vec![
            self.seed.to_string(),
            self.block.to_string(),
            self.scheme.to_string(),
            self.num_uavs.to_string(),
            self.num_users.to_string(),
            format!("{:?}", self.r_min),
        ];
        r.extend(self.powers().iter().map(|p| format!("{p:?}")));
        r.push(self.iterations.to_string());
        r.push(self.converged.to_string());
        r.push(format!("{:?}", self.seconds));
        if dbm {
            r.extend(self.powers().iter().map(|p| format!("{:?}", w_to_dbm(*p))));
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Given(Scenario),
    Generate { params: SimParams, layout: Layout },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    None,
    Uavs(Vec<usize>),
    Rmin(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: ScenarioSource,
    pub schemes: Vec<Scheme>,
    pub sweep: Sweep,
    pub blocks: usize,
    pub seeds: Vec<u64>,
    pub ccp: CcpSettings,
    pub output: Option<PathBuf>,
    /// Fill the `seconds` column with wall time; off keeps output reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let params = SimParams::desk();
        Self {
            blocks: params.num_blocks,
            source: ScenarioSource::Generate { params, layout: Layout::default() },
            schemes: vec![Scheme::Proposed],
            sweep: Sweep::None,
            seeds: vec![0],
            ccp: CcpSettings::default(),
            output: None,
            timing: false,
        }
    }
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.schemes.is_empty() {
            return bad("no schemes selected");
        }
        if self.seeds.is_empty() {
            return bad("no seeds given");
        }
        if self.blocks == 0 {
            return bad("blocks must be at least 1");
        }
        match &self.sweep {
            Sweep::Uavs(v) if v.is_empty() || !strictly_increasing(v) => {
                return bad("UAV sweep must be a non-empty, strictly increasing list")
            }
            Sweep::Rmin(v) if v.is_empty() || !strictly_increasing(v) || v.iter().any(|r| !(*r > 0.0)) => {
                return bad("rate sweep must be a non-empty, strictly increasing list of positive rates")
            }
            Sweep::Uavs(_) if !matches!(self.source, ScenarioSource::Generate { .. }) => {
                return bad("a UAV sweep needs generated scenarios")
            }
            _ => {}
        }
        self.ccp.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn sweep_points(&self) -> Vec<SweepPoint> {
        match &self.sweep {
            Sweep::None => vec![SweepPoint { uavs: None, r_min: None }],
            Sweep::Uavs(v) => v.iter().map(|&l| SweepPoint { uavs: Some(l), r_min: None }).collect(),
            Sweep::Rmin(v) => v.iter().map(|&r| SweepPoint { uavs: None, r_min: Some(r) }).collect(),
        }
    }

    /// Scenario for one seed and sweep point; identical across schemes.
    fn scenario(&self, seed: u64, point: &SweepPoint) -> Result<Scenario> {
        let mut s = match &self.source {
            ScenarioSource::File(path) => {
                let mut s = load_scenario(path)?;
                s.seed = seed;
                s
            }
            ScenarioSource::Given(s) => Scenario { seed, ..s.clone() },
            ScenarioSource::Generate { params, layout } => {
                let mut params = params.clone();
                if let Some(l) = point.uavs {
                    params = params.with_uavs(l);
                }
                generate_scenario(&params, layout, seed)?
            }
        };
        s.params.num_blocks = self.blocks;
        if let Some(r) = point.r_min {
            s.params.r_min_bps = r;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug)]
struct SweepPoint {
    uavs: Option<usize>,
    r_min: Option<f64>,
}

fn mix(seed: u64, block: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (block as u64).wrapping_add(0x632B_E59B_D9B4_E019)
}

/// Run one scheme on one block.
pub fn run_scheme(
    scheme: Scheme,
    s: &Scenario,
    block_index: usize,
    settings: &CcpSettings,
    flight: Option<&[Vec<Point>]>,
) -> Result<(Plan, CcpTrace)> {
    let channels = draw_block(s, block_index as u64);
    let qos = QosSpec::from_params(&s.params);
    match scheme {
        Scheme::Proposed => ccp::run(s, &channels, &qos, settings),
        Scheme::Baseline(id) => {
            let ctx = BaselineContext {
                assignment_seed: mix(s.seed, block_index),
                trajectory: flight.map(|f| flight_block(f, block_index, s.params.num_slots)),
            };
            run_baseline(id, s, &channels, &qos, settings, &ctx)
        }
    }
}

fn row_for(p: &SimParams, seed: u64, scheme: Scheme, block: BlockTag) -> ResultRow {
    ResultRow {
        seed,
        block,
        scheme,
        num_uavs: p.num_uavs,
        num_users: p.num_users,
        r_min: p.r_min_bps,
        bs_power_w: f64::NAN,
        uav_tx_power_w: f64::NAN,
        uav_nav_power_w: f64::NAN,
        per_uav_avg_w: f64::NAN,
        weighted_total_w: f64::NAN,
        iterations: 0,
        converged: false,
        seconds: 0.0,
    }
}

/// All blocks of one (seed, sweep point, scheme) job plus the aggregate row.
fn run_job(cfg: &ExperimentConfig, seed: u64, point: &SweepPoint, scheme: Scheme) -> Vec<ResultRow> {
    let base = match cfg.scenario(seed, point) {
        Ok(s) => s,
        Err(e) => {
            warn!("seed {seed}: {e}");
            let mut params = match &cfg.source {
                ScenarioSource::Generate { params, .. } => params.clone(),
                ScenarioSource::Given(s) => s.params.clone(),
                ScenarioSource::File(_) => SimParams::desk(),
            };
            if let Some(l) = point.uavs {
                params = params.with_uavs(l);
            }
            if let Some(r) = point.r_min {
                params.r_min_bps = r;
            }
            let mut rows: Vec<ResultRow> = (0..cfg.blocks)
                .map(|b| row_for(&params, seed, scheme, BlockTag::Index(b)))
                .collect();
            rows.push(row_for(&params, seed, scheme, BlockTag::Mean));
            return rows;
        }
    };
    let flight = match scheme {
        Scheme::Baseline(BaselineId::FixedTrajectory) => Some(baseline4_trajectory(&base).unwrap_or_else(|e| {
            warn!("seed {seed}: {e}; flying at d_max instead");
            baseline4_trajectory_capped(&base)
        })),
        _ => None,
    };
    let mut rows = Vec::with_capacity(cfg.blocks + 1);
    let mut s = base.clone();
    for b in 0..cfg.blocks {
        let started = Instant::now();
        let result = run_scheme(scheme, &s, b, &cfg.ccp, flight.as_deref());
        let seconds = started.elapsed().as_secs_f64();
        let mut row = row_for(&s.params, seed, scheme, BlockTag::Index(b));
        if cfg.timing {
            row.seconds = seconds;
        }
        let next_starts = match result {
            Ok((plan, trace)) => {
                let rep = objective(&plan, &s);
                let t = s.num_slots() as f64;
                row.bs_power_w = rep.bs_total / t;
                row.uav_tx_power_w = rep.per_slot_uav_tx.iter().flatten().sum::<f64>() / t;
                row.uav_nav_power_w = rep.per_slot_uav_nav.iter().flatten().sum::<f64>() / t;
                row.per_uav_avg_w = rep.per_uav_avg;
                row.weighted_total_w = rep.weighted_total / t;
                row.iterations = trace.iterations();
                row.converged = trace.converged();
                plan.final_positions()
            }
            Err(e) => {
                warn!("seed {seed}, {scheme}, block {b}: {e}");
                match &flight {
                    Some(f) => f.iter().map(|p| p[(b + 1) * s.num_slots()]).collect(),
                    None => s.geometry.uav_start_positions.clone(),
                }
            }
        };
        rows.push(row);
        s = s.with_starts(next_starts);
    }
    rows.push(aggregate(&rows));
    rows
}

fn aggregate(rows: &[ResultRow]) -> ResultRow {
    let n = rows.len() as f64;
    let mean = |f: fn(&ResultRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    ResultRow {
        block: BlockTag::Mean,
        bs_power_w: mean(|r| r.bs_power_w),
        uav_tx_power_w: mean(|r| r.uav_tx_power_w),
        uav_nav_power_w: mean(|r| r.uav_nav_power_w),
        per_uav_avg_w: mean(|r| r.per_uav_avg_w),
        weighted_total_w: mean(|r| r.weighted_total_w),
        iterations: rows.iter().map(|r| r.iterations).sum(),
        converged: rows.iter().all(|r| r.converged),
        seconds: rows.iter().map(|r| r.seconds).sum(),
        ..rows[0].clone()
    }
}

/// Every (seed, sweep point, scheme) job in parallel; rows sorted by
/// (seed, L, r_min, scheme, block).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for p in &points {
            for &scheme in &cfg.schemes {
                jobs.push((seed, *p, scheme));
            }
        }
    }
    let mut rows: Vec<ResultRow> = jobs
        .par_iter()
        .flat_map_iter(|(seed, p, scheme)| run_job(cfg, *seed, p, *scheme))
        .collect();
    rows.sort_by(|a, b| a.sort_key(b));
    Ok(rows)
}

pub fn all_converged(rows: &[ResultRow]) -> bool {
    rows.iter().all(|r| r.converged)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W, dbm: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if dbm {
        header.extend(DBM_HEADER);
    }
    w.write_record(&header)?;
    for r in rows {
        w.write_record(r.record(dbm))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

pub fn to_json(rows: &[ResultRow], dbm: bool) -> Result<String> {
    let mut values = Vec::with_capacity(rows.len());
    for r in rows {
        let mut v = serde_json::to_value(r).map_err(|e| Error::Config(e.to_string()))?;
        if dbm {
            let obj = v.as_object_mut().expect("row serializes to an object");
            for (name, p) in DBM_HEADER.iter().zip(r.powers()) {
                obj.insert((*name).into(), serde_json::json!(w_to_dbm(p)));
            }
        }
        values.push(v);
    }
    serde_json::to_string_pretty(&values).map_err(|e| Error::Config(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Vec<ResultRow>> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("bad result JSON: {e}")))
}

pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>, dbm: bool) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?, dbm)
}

pub fn emit_json(rows: &[ResultRow], path: impl AsRef<Path>, dbm: bool) -> Result<()> {
    let mut text = to_json(rows, dbm)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(block: BlockTag, p: f64) -> ResultRow {
        ResultRow {
            seed: 3,
            block,
            scheme: Scheme::Baseline(BaselineId::Hovering),
            num_uavs: 3,
            num_users: 2,
            r_min: 8e5,
            bs_power_w: 1.0,
            uav_tx_power_w: p,
            uav_nav_power_w: 3e-3,
            per_uav_avg_w: 1.0000001e-3,
            weighted_total_w: 7.5e-4,
            iterations: 2,
            converged: true,
            seconds: 0.0,
        }
    }

    #[test]
    fn single_block_gives_block_and_mean_rows() {
        let cfg = ExperimentConfig { blocks: 1, ..Default::default() };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].block, BlockTag::Index(0));
        assert_eq!(rows[1].block, BlockTag::Mean);
        assert!(rows[0].converged);
        let r = &rows[0];
        for p in r.powers() {
            assert!(p >= 0.0);
        }
        let alpha = 1.0 / 4.0;
        let combined = alpha * (r.bs_power_w + r.uav_tx_power_w + r.uav_nav_power_w);
        assert!((combined - r.weighted_total_w).abs() <= 1e-12 * r.weighted_total_w);
        for (a, b) in rows[1].powers().iter().zip(rows[0].powers()) {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf, false).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rows = vec![
            sample_row(BlockTag::Index(0), 1.234567890123e-4),
            sample_row(BlockTag::Index(1), 2e-7),
            sample_row(BlockTag::Mean, 1e-4),
        ];
        for dbm in [false, true] {
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf, dbm).unwrap();
            assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
            assert_eq!(from_json(&to_json(&rows, dbm).unwrap()).unwrap(), rows);
        }
    }

    #[test]
    fn failed_rows_survive_json() {
        let mut row = sample_row(BlockTag::Index(0), 1e-4);
        row.bs_power_w = f64::NAN;
        row.converged = false;
        let back = from_json(&to_json(&[row], false).unwrap()).unwrap();
        assert!(back[0].bs_power_w.is_nan());
        assert!(!back[0].converged);
    }

    #[test]
    fn dbm_columns() {
        let mut buf = Vec::new();
        write_csv(&[sample_row(BlockTag::Index(0), 1e-3)], &mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().unwrap().clone();
        let rec = r.records().next().unwrap().unwrap();
        let col = |name: &str| rec[headers.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
        assert!((col("bs_power_dbm") - 30.0).abs() < 1e-12);
        assert!(col("uav_tx_power_dbm").abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        let bad = [
            ExperimentConfig { schemes: vec![], ..ok.clone() },
            ExperimentConfig { seeds: vec![], ..ok.clone() },
            ExperimentConfig { blocks: 0, ..ok.clone() },
            ExperimentConfig { sweep: Sweep::Uavs(vec![3, 2]), ..ok.clone() },
            ExperimentConfig { sweep: Sweep::Rmin(vec![1e5, 1e5]), ..ok.clone() },
            ExperimentConfig { sweep: Sweep::Rmin(vec![]), ..ok.clone() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{:?}", c.sweep);
        }
    }

    #[test]
    fn scheme_names() {
        for s in Scheme::all() {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("mean".parse::<BlockTag>().unwrap(), BlockTag::Mean);
        assert_eq!("4".parse::<BlockTag>().unwrap(), BlockTag::Index(4));
    }
}
