//! Comparison schemes: the CCP with the cooperation pattern or the
//! trajectory held fixed.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccp::{run_from, CcpSettings, CcpTrace};
use crate::channel::ChannelBlock;
use crate::dcp::AssembleOptions;
use crate::error::{Error, Result};
use crate::model::{Plan, QosSpec};
use crate::scenario::{Point, Scenario};
use crate::sdr::initialize_with;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineId {
    /// Baseline 1: one random UAV per user.
    CoordinatedBeamforming,
    /// Baseline 2: every UAV serves a full quota of random users.
    FixedCooperation,
    /// Baseline 3: UAVs stay at their start positions.
    Hovering,
    /// Baseline 4: straight flight to the navigation boundary.
    FixedTrajectory,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] = [
        BaselineId::CoordinatedBeamforming,
        BaselineId::FixedCooperation,
        BaselineId::Hovering,
        BaselineId::FixedTrajectory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineId::CoordinatedBeamforming => "baseline1",
            BaselineId::FixedCooperation => "baseline2",
            BaselineId::Hovering => "baseline3",
            BaselineId::FixedTrajectory => "baseline4",
        }
    }
}

impl fmt::Display for BaselineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline1" | "b1" | "coordinated" | "coordinated-beamforming" => Ok(BaselineId::CoordinatedBeamforming),
            "baseline2" | "b2" | "fixed-cooperation" => Ok(BaselineId::FixedCooperation),
            "baseline3" | "b3" | "hovering" | "hover" => Ok(BaselineId::Hovering),
            "baseline4" | "b4" | "fixed-trajectory" => Ok(BaselineId::FixedTrajectory),
            _ => Err(Error::Config(format!("unknown baseline '{s}'"))),
        }
    }
}

fn capacity(s: &Scenario) -> usize {
    s.params.uav_antennas.min(s.params.num_users)
}

fn check_coverable(s: &Scenario) -> Result<usize> {
    let cap = capacity(s);
    let (lc, kc) = (s.num_uavs(), s.num_users());
    if kc > lc * cap {
        return Err(Error::Assignment(format!(
            "{kc} users cannot be covered by {lc} UAVs serving at most {cap} each"
        )));
    }
    Ok(cap)
}

/// Each user is served by exactly one uniformly drawn UAV; draws that hit a
/// full UAV are repeated.
pub fn baseline1_assignment(s: &Scenario, seed: u64) -> Result<Vec<Vec<bool>>> {
    let cap = check_coverable(s)?;
    let (lc, kc) = (s.num_uavs(), s.num_users());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![vec![false; kc]; lc];
    let mut load = vec![0usize; lc];
    for k in 0..kc {
        let l = loop {
            let l = rng.random_range(0..lc);
            if load[l] < cap {
                break l;
            }
        };
        q[l][k] = true;
        load[l] += 1;
    }
    Ok(q)
}

/// Every UAV serves exactly `min(M, K)` users and every user has at least
/// one UAV: a random cover first, then random filling of the quotas.
pub fn baseline2_assignment(s: &Scenario, seed: u64) -> Result<Vec<Vec<bool>>> {
    let cap = check_coverable(s)?;
    let (lc, kc) = (s.num_uavs(), s.num_users());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![vec![false; kc]; lc];
    let mut seats: Vec<usize> = (0..lc).flat_map(|l| std::iter::repeat_n(l, cap)).collect();
    seats.shuffle(&mut rng);
    let mut users: Vec<usize> = (0..kc).collect();
    users.shuffle(&mut rng);
    for (&k, &l) in users.iter().zip(&seats) {
        q[l][k] = true;
    }
    for row in q.iter_mut() {
        let mut free: Vec<usize> = (0..kc).filter(|&k| !row[k]).collect();
        free.shuffle(&mut rng);
        let missing = cap - row.iter().filter(|v| **v).count();
        for &k in free.iter().take(missing) {
            row[k] = true;
        }
    }
    Ok(q)
}

fn boundary_flight(s: &Scenario, step_cap: Option<f64>) -> Result<Vec<Vec<Point>>> {
    let p = &s.params;
    let n = p.num_blocks * p.num_slots;
    let r2 = s.geometry.ring_outer;
    let d_max = p.d_max();
    let mut flight = Vec::with_capacity(s.num_uavs());
    for (l, d0) in s.geometry.uav_start_positions.iter().enumerate() {
        let r = d0.x.hypot(d0.y);
        let dist = (r2 - r).max(0.0);
        let dir = if r > 0.0 {
            Point::new(d0.x / r, d0.y / r, 0.0)
        } else {
            Point::new(1.0, 0.0, 0.0)
        };
        let mut step = dist / n as f64;
        if let Some(c) = step_cap {
            step = step.min(c);
        } else if step > d_max * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "UAV {l} needs {step:.3} m per slot to reach the boundary, above d_max = {d_max:.3} m"
            )));
        }
        flight.push((0..=n).map(|i| d0 + dir * (step * i as f64)).collect());
    }
    Ok(flight)
}

/// Constant-speed horizontal flight to the nearest point of the cylinder
/// wall, reached at the end of the last block. `B*T + 1` samples per UAV.
pub fn baseline4_trajectory(s: &Scenario) -> Result<Vec<Vec<Point>>> {
    boundary_flight(s, None)
}

/// Same direction as [`baseline4_trajectory`] with the per-slot step limited
/// to `d_max`; the wall may not be reached.
pub fn baseline4_trajectory_capped(s: &Scenario) -> Vec<Vec<Point>> {
    boundary_flight(s, Some(s.params.d_max())).expect("capped flight cannot fail")
}

/// The `T + 1` samples of block `b` (0-based) from a full flight.
pub fn flight_block(flight: &[Vec<Point>], b: usize, num_slots: usize) -> Vec<Vec<Point>> {
    flight
        .iter()
        .map(|f| f[b * num_slots..=(b + 1) * num_slots].to_vec())
        .collect()
}

/// Inputs a baseline needs beyond the scenario.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineContext {
    /// Seed of the random association (Baselines 1 and 2).
    pub assignment_seed: u64,
    /// Block trajectory for Baseline 4; derived from the scenario when absent.
    pub trajectory: Option<Vec<Vec<Point>>>,
}

fn hover_trajectory(s: &Scenario) -> Vec<Vec<Point>> {
    s.geometry
        .uav_start_positions
        .iter()
        .map(|d| vec![*d; s.params.num_slots + 1])
        .collect()
}

/// First block of the Baseline 4 flight; capped when the exact flight is
/// too fast.
pub fn baseline4_block(s: &Scenario) -> Vec<Vec<Point>> {
    let flight = match baseline4_trajectory(s) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("{e}; flying at d_max instead");
            baseline4_trajectory_capped(s)
        }
    };
    flight_block(&flight, 0, s.params.num_slots)
}

pub fn run_baseline(
    id: BaselineId,
    s: &Scenario,
    block: &ChannelBlock,
    qos: &QosSpec,
    settings: &CcpSettings,
    ctx: &BaselineContext,
) -> Result<(Plan, CcpTrace)> {
    settings.validate()?;
    let mut s = s.clone();
    if let Some(b) = settings.beta {
        s.params.beta = b;
    }
    let s = &s;
    let (traj, q, opts) = match id {
        BaselineId::CoordinatedBeamforming | BaselineId::FixedCooperation => {
            let q = if id == BaselineId::CoordinatedBeamforming {
                baseline1_assignment(s, ctx.assignment_seed)?
            } else {
                baseline2_assignment(s, ctx.assignment_seed)?
            };
            let opts = AssembleOptions { freeze_coop: Some(q.clone()), ..Default::default() };
            (hover_trajectory(s), Some(q), opts)
        }
        BaselineId::Hovering => {
            let opts = AssembleOptions { freeze_trajectory: true, ..Default::default() };
            (hover_trajectory(s), None, opts)
        }
        BaselineId::FixedTrajectory => {
            let traj = match &ctx.trajectory {
                Some(t) => t.clone(),
                None => baseline4_block(s),
            };
            check_trajectory(s, &traj)?;
            let opts = AssembleOptions { freeze_trajectory: true, ..Default::default() };
            (traj, None, opts)
        }
    };
    let (x0, report) = initialize_with(s, block, qos, &settings.init, &traj, q.as_deref())?;
    run_from(x0, report, s, block, qos, settings, &opts)
}

fn check_trajectory(s: &Scenario, traj: &[Vec<Point>]) -> Result<()> {
    let ok = traj.len() == s.num_uavs()
        && traj.iter().zip(&s.geometry.uav_start_positions).all(|(t, d0)| t.len() == s.num_slots() + 1 && t[0] == *d0);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension("baseline trajectory does not match the scenario".into()))
    }
}
