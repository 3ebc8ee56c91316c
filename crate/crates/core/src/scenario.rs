//! Experiment scenarios: physical parameters plus a randomized geometry.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_w};

pub type Point = Vector3<f64>;

/// Objective weights for the ground BS and each UAV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha_0: f64,
    pub alpha_l: Vec<f64>,
}

impl Weights {
    /// `alpha_0 = alpha_l = 1 / (L + 1)`.
    pub fn uniform(num_uavs: usize) -> Self {
        let w = 1.0 / (num_uavs as f64 + 1.0);
        Self {
            alpha_0: w,
            alpha_l: vec![w; num_uavs],
        }
    }
}

/// Physical and algorithmic parameters. Powers are in watts throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub bandwidth_hz: f64,
    pub slot_duration_s: f64,
    pub num_slots: usize,
    pub num_blocks: usize,
    pub num_uavs: usize,
    pub num_users: usize,
    pub bs_antennas: usize,
    pub uav_antennas: usize,
    #[serde(alias = "p_bs_max_w")]
    pub p_bs_max: f64,
    #[serde(alias = "p_uav_max_w")]
    pub p_uav_max: f64,
    #[serde(alias = "nav_c1_w")]
    pub nav_c1: f64,
    #[serde(alias = "nav_c2_w_per_m")]
    pub nav_c2: f64,
    #[serde(alias = "noise_psd_w_per_hz")]
    pub noise_psd: f64,
    #[serde(alias = "max_speed_m_per_s")]
    pub max_speed: f64,
    pub r_min_bps: f64,
    #[serde(alias = "d_min_m")]
    pub d_min: f64,
    pub rice_factor: f64,
    pub pathloss_exponent_data: f64,
    pub pathloss_exponent_fh: f64,
    pub antenna_gain_data: f64,
    pub antenna_gain_fh: f64,
    #[serde(alias = "beta_per_w")]
    pub beta: f64,
    pub weights: Weights,
}

impl SimParams {
    /// Reference physical values at desk-scale problem sizes
    /// (L=3, K=2, T=4, B=3, N=6, M=2).
    pub fn desk() -> Self {
        let p_uav_max = dbm_to_w(40.0);
        Self {
            bandwidth_hz: 2e6,
            slot_duration_s: 0.2,
            num_slots: 4,
            num_blocks: 3,
            num_uavs: 3,
            num_users: 2,
            bs_antennas: 6,
            uav_antennas: 2,
            p_bs_max: dbm_to_w(46.0),
            p_uav_max,
            nav_c1: dbm_to_w(0.0),
            nav_c2: dbm_to_w(20.0),
            noise_psd: dbm_to_w(-174.0),
            max_speed: 10.0,
            r_min_bps: 0.8e6,
            d_min: 10.0,
            rice_factor: db_to_linear(-3.0),
            pathloss_exponent_data: 2.5,
            pathloss_exponent_fh: 2.0,
            antenna_gain_data: 1e-3,
            antenna_gain_fh: 1e-3,
            beta: 1e4 / p_uav_max,
            weights: Weights::uniform(3),
        }
    }

    /// Full-scale sizes (L=4, K=4, T=50, B=30, N=12, M=2).
    pub fn full_scale() -> Self {
        Self {
            num_slots: 50,
            num_blocks: 30,
            num_uavs: 4,
            num_users: 4,
            bs_antennas: 12,
            weights: Weights::uniform(4),
            ..Self::desk()
        }
    }

    /// Change the number of UAVs, resetting the weights to `1/(L+1)` and
    /// growing the BS array if needed to keep `N >= L`.
    pub fn with_uavs(mut self, num_uavs: usize) -> Self {
        self.num_uavs = num_uavs;
        self.bs_antennas = self.bs_antennas.max(num_uavs);
        self.weights = Weights::uniform(num_uavs);
        self
    }

    /// Maximum flight distance per slot.
    pub fn d_max(&self) -> f64 {
        self.max_speed * self.slot_duration_s
    }

    /// Receiver noise power `noise_psd * bandwidth` (users and UAVs alike).
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth_hz
    }

    /// Minimum user rate in bit/s/Hz.
    pub fn r_min_spectral(&self) -> f64 {
        self.r_min_bps / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("slot_duration_s", self.slot_duration_s),
            ("p_bs_max", self.p_bs_max),
            ("p_uav_max", self.p_uav_max),
            ("nav_c2", self.nav_c2),
            ("noise_psd", self.noise_psd),
            ("max_speed", self.max_speed),
            ("r_min_bps", self.r_min_bps),
            ("d_min", self.d_min),
            ("rice_factor", self.rice_factor),
            ("pathloss_exponent_data", self.pathloss_exponent_data),
            ("pathloss_exponent_fh", self.pathloss_exponent_fh),
            ("antenna_gain_data", self.antenna_gain_data),
            ("antenna_gain_fh", self.antenna_gain_fh),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if !(self.nav_c1.is_finite() && self.nav_c1 >= 0.0) {
            return bad(format!("nav_c1 must be >= 0, got {}", self.nav_c1));
        }
        let counts = [
            ("num_slots", self.num_slots),
            ("num_blocks", self.num_blocks),
            ("num_uavs", self.num_uavs),
            ("num_users", self.num_users),
            ("bs_antennas", self.bs_antennas),
            ("uav_antennas", self.uav_antennas),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.bs_antennas < self.num_uavs {
            return bad(format!(
                "need N >= L (N={}, L={})",
                self.bs_antennas, self.num_uavs
            ));
        }
        if self.num_uavs * self.uav_antennas < self.num_users {
            return bad(format!(
                "need L*M >= K (L={}, M={}, K={})",
                self.num_uavs, self.uav_antennas, self.num_users
            ));
        }
        let w = &self.weights;
        if w.alpha_l.len() != self.num_uavs {
            return bad(format!(
                "expected {} UAV weights, got {}",
                self.num_uavs,
                w.alpha_l.len()
            ));
        }
        if std::iter::once(w.alpha_0)
            .chain(w.alpha_l.iter().copied())
            .any(|a| !(0.0..=1.0).contains(&a))
        {
            return bad("weights must lie in [0, 1]".into());
        }
        let sum = w.alpha_0 + w.alpha_l.iter().sum::<f64>();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self::desk()
    }
}

/// Ring/cylinder layout used when sampling a geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub user_height: f64,
    pub bs_height: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            ring_inner: 500.0,
            ring_outer: 1000.0,
            height_min: 50.0,
            height_max: 100.0,
            user_height: 0.0,
            bs_height: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_position: Point,
    pub user_positions: Vec<Point>,
    pub uav_start_positions: Vec<Point>,
    pub nav_min: Point,
    pub nav_max: Point,
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub height_min: f64,
    pub height_max: f64,
}

impl Geometry {
    pub fn in_nav_box(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.nav_min[i] && p[i] <= self.nav_max[i])
    }

    pub fn validate(&self, params: &SimParams) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.user_positions.len() != params.num_users {
            return bad(format!(
                "expected {} users, got {}",
                params.num_users,
                self.user_positions.len()
            ));
        }
        if self.uav_start_positions.len() != params.num_uavs {
            return bad(format!(
                "expected {} UAV starts, got {}",
                params.num_uavs,
                self.uav_start_positions.len()
            ));
        }
        if (0..3).any(|i| self.nav_min[i] > self.nav_max[i]) {
            return bad("nav_min must be component-wise <= nav_max".into());
        }
        if !(self.ring_inner >= 0.0 && self.ring_inner <= self.ring_outer) {
            return bad("ring radii must satisfy 0 <= R1 <= R2".into());
        }
        let all_points = std::iter::once(&self.bs_position)
            .chain(&self.user_positions)
            .chain(&self.uav_start_positions);
        for p in all_points.chain([&self.nav_min, &self.nav_max]) {
            if p.iter().any(|c| !c.is_finite()) {
                return bad("positions must be finite".into());
            }
        }
        for (k, u) in self.user_positions.iter().enumerate() {
            let r = u.x.hypot(u.y);
            if r < self.ring_inner || r > self.ring_outer {
                return bad(format!("user {k} outside the ring (radius {r})"));
            }
        }
        for (l, d) in self.uav_start_positions.iter().enumerate() {
            if !self.in_nav_box(d) {
                return bad(format!("UAV {l} starts outside the navigation box"));
            }
        }
        let starts = &self.uav_start_positions;
        for i in 0..starts.len() {
            for j in i + 1..starts.len() {
                let sep = (starts[i] - starts[j]).norm();
                if sep < params.d_min {
                    return bad(format!("UAVs {i} and {j} start {sep} m apart"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub params: SimParams,
    pub geometry: Geometry,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.geometry.validate(&self.params)
    }

    pub fn num_uavs(&self) -> usize {
        self.params.num_uavs
    }

    pub fn num_users(&self) -> usize {
        self.params.num_users
    }

    pub fn num_slots(&self) -> usize {
        self.params.num_slots
    }

    /// Same scenario with the UAVs starting elsewhere (block chaining).
    pub fn with_starts(&self, starts: Vec<Point>) -> Self {
        let mut s = self.clone();
        s.geometry.uav_start_positions = starts;
        s
    }
}

const PLACEMENT_TRIES: usize = 1000;
const PLACEMENT_RESTARTS: usize = 100;

/// Sample users uniformly in the ring and UAV starts uniformly in the
/// navigation cylinder, at least `d_min` apart. Pure in `(params, layout, seed)`.
pub fn generate_scenario(params: &SimParams, layout: &Layout, seed: u64) -> Result<Scenario> {
    params.validate()?;
    if !(layout.ring_inner >= 0.0
        && layout.ring_inner <= layout.ring_outer
        && layout.ring_outer > 0.0
        && layout.height_min <= layout.height_max)
    {
        return Err(Error::InvalidParams("inconsistent layout".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r1, r2) = (layout.ring_inner, layout.ring_outer);

    let mut users = Vec::with_capacity(params.num_users);
    while users.len() < params.num_users {
        let u: f64 = rng.random();
        let r = (u * (r2 * r2 - r1 * r1) + r1 * r1).sqrt();
        let theta = rng.random::<f64>() * 2.0 * PI;
        let p = Point::new(r * theta.cos(), r * theta.sin(), layout.user_height);
        let planar = p.x.hypot(p.y);
        // rounding can push a sample a hair outside the ring
        if planar >= r1 && planar <= r2 {
            users.push(p);
        }
    }

    let dh = layout.height_max - layout.height_min;
    let diameter = (4.0 * r2 * r2 + dh * dh).sqrt();
    let nav_min = Point::new(-r2, -r2, layout.height_min);
    let nav_max = Point::new(r2, r2, layout.height_max);
    let in_box = |p: &Point| (0..3).all(|i| p[i] >= nav_min[i] && p[i] <= nav_max[i]);
    if params.num_uavs > 1 && params.d_min > diameter {
        return Err(Error::Placement {
            wanted: params.num_uavs,
            placed: 1,
            d_min: params.d_min,
        });
    }

    let mut best = 0;
    let mut starts: Vec<Point> = Vec::new();
    'restart: for _ in 0..PLACEMENT_RESTARTS {
        starts.clear();
        while starts.len() < params.num_uavs {
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let r = r2 * rng.random::<f64>().sqrt();
                let theta = rng.random::<f64>() * 2.0 * PI;
                let h = layout.height_min + dh * rng.random::<f64>();
                let p = Point::new(r * theta.cos(), r * theta.sin(), h);
                if in_box(&p) && starts.iter().all(|q| (p - q).norm() >= params.d_min) {
                    starts.push(p);
                    placed = true;
                    break;
                }
            }
            best = best.max(starts.len());
            if !placed {
                continue 'restart;
            }
        }
        break;
    }
    if starts.len() < params.num_uavs {
        return Err(Error::Placement {
            wanted: params.num_uavs,
            placed: best,
            d_min: params.d_min,
        });
    }

    let scenario = Scenario {
        seed,
        params: params.clone(),
        geometry: Geometry {
            bs_position: Point::new(0.0, 0.0, layout.bs_height),
            user_positions: users,
            uav_start_positions: starts,
            nav_min,
            nav_max,
            ring_inner: r1,
            ring_outer: r2,
            height_min: layout.height_min,
            height_max: layout.height_max,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn scenario_to_string(s: &Scenario) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
}

pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|sp| line_col(text, sp.start))
            .unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    s.validate()?;
    Ok(s)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scenario_to_string(s)?)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    scenario_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_layout_params() -> SimParams {
        SimParams {
            num_uavs: 4,
            num_users: 4,
            bs_antennas: 12,
            weights: Weights::uniform(4),
            ..SimParams::desk()
        }
    }

    #[test]
    fn full_layout_class() {
        let s = generate_scenario(&full_layout_params(), &Layout::default(), 7).unwrap();
        assert_eq!(s.geometry.user_positions.len(), 4);
        assert_eq!(s.geometry.uav_start_positions.len(), 4);
        for u in &s.geometry.user_positions {
            let r = u.x.hypot(u.y);
            assert!((500.0..=1000.0).contains(&r));
            assert_eq!(u.z, 0.0);
        }
        for d in &s.geometry.uav_start_positions {
            assert!(d.x.hypot(d.y) <= 1000.0);
            assert!((50.0..=100.0).contains(&d.z));
        }
        assert_eq!(s.geometry.bs_position, Point::new(0.0, 0.0, 25.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SimParams::desk();
        let a = generate_scenario(&p, &Layout::default(), 11).unwrap();
        let b = generate_scenario(&p, &Layout::default(), 11).unwrap();
        assert_eq!(scenario_to_string(&a).unwrap(), scenario_to_string(&b).unwrap());
        let c = generate_scenario(&p, &Layout::default(), 12).unwrap();
        assert_ne!(a.geometry, c.geometry);
    }

    #[test]
    fn impossible_separation_is_a_placement_error() {
        let p = SimParams {
            num_uavs: 2,
            d_min: 5000.0,
            weights: Weights::uniform(2),
            ..SimParams::desk()
        };
        let err = generate_scenario(&p, &Layout::default(), 1).unwrap_err();
        assert!(matches!(err, Error::Placement { .. }));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SimParams::desk();
        p.bs_antennas = 2;
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        let mut p = SimParams::desk();
        p.num_users = 7;
        assert!(p.validate().is_err());
        let mut p = SimParams::desk();
        p.nav_c1 = 0.0;
        assert!(p.validate().is_ok());
        p.weights.alpha_0 = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn d_max_is_derived() {
        assert!((SimParams::desk().d_max() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_through_file() {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }

    #[test]
    fn file_has_expected_sections() {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), 3).unwrap();
        let text = scenario_to_string(&s).unwrap();
        assert!(text.contains("seed = 3"));
        assert!(text.contains("[params]"));
        assert!(text.contains("[geometry]"));
        assert!(text.contains("p_bs_max ="));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), 3).unwrap();
        let text = scenario_to_string(&s).unwrap();
        let cut = &text[..text.len() * 2 / 3];
        match scenario_from_str(cut) {
            Err(Error::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_weights_in_file_fail_validation() {
        let mut s = generate_scenario(&SimParams::desk(), &Layout::default(), 3).unwrap();
        s.params.weights.alpha_0 = 0.9;
        let text = scenario_to_string(&s).unwrap();
        assert!(matches!(scenario_from_str(&text), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn unit_suffixed_aliases_accepted() {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), 3).unwrap();
        let text = scenario_to_string(&s)
            .unwrap()
            .replace("p_bs_max =", "p_bs_max_w =")
            .replace("d_min =", "d_min_m =");
        assert_eq!(scenario_from_str(&text).unwrap(), s);
    }
}
