//! Decision state and physical evaluations: distances, SINRs, rates,
//! navigation power, the weighted power objective and the feasibility checker.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{path_gain, ChannelBlock, CVector};
use crate::dcp::SlackVars;
use crate::scenario::{Point, Scenario, SimParams};

/// Full decision state `x = (w, d, tau)` for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub num_uavs: usize,
    pub num_users: usize,
    pub num_slots: usize,
    /// `w_{l,k,t}` at `(l * K + k) * T + (t - 1)`; slots are 1-based in the API.
    pub w_data: Vec<CVector>,
    /// `w_{F,l,t}` at `l * T + (t - 1)`.
    pub w_fh: Vec<CVector>,
    /// `trajectory[l][t]` for `t = 0..=T`; index 0 is the block's start.
    pub trajectory: Vec<Vec<Point>>,
    pub coop: Vec<Vec<bool>>,
    pub slacks: SlackVars,
}

impl Plan {
    /// Zero beamformers, hovering UAVs, no cooperation.
    pub fn hover(scenario: &Scenario) -> Self {
        let p = &scenario.params;
        let (l, k, t) = (p.num_uavs, p.num_users, p.num_slots);
        let trajectory = scenario
            .geometry
            .uav_start_positions
            .iter()
            .map(|d0| vec![*d0; t + 1])
            .collect();
        Self {
            num_uavs: l,
            num_users: k,
            num_slots: t,
            w_data: vec![CVector::zeros(p.uav_antennas); l * k * t],
            w_fh: vec![CVector::zeros(p.bs_antennas); l * t],
            trajectory,
            coop: vec![vec![false; k]; l],
            slacks: SlackVars::zeros(l, k, t),
        }
    }

    fn data_index(&self, l: usize, k: usize, t: usize) -> usize {
        debug_assert!((1..=self.num_slots).contains(&t));
        (l * self.num_users + k) * self.num_slots + t - 1
    }

    pub fn w(&self, l: usize, k: usize, t: usize) -> &CVector {
        &self.w_data[self.data_index(l, k, t)]
    }

    pub fn w_mut(&mut self, l: usize, k: usize, t: usize) -> &mut CVector {
        let i = self.data_index(l, k, t);
        &mut self.w_data[i]
    }

    pub fn wf(&self, l: usize, t: usize) -> &CVector {
        &self.w_fh[l * self.num_slots + t - 1]
    }

    pub fn wf_mut(&mut self, l: usize, t: usize) -> &mut CVector {
        let i = l * self.num_slots + t - 1;
        &mut self.w_fh[i]
    }

    pub fn pos(&self, l: usize, t: usize) -> &Point {
        &self.trajectory[l][t]
    }

    /// Final positions, i.e. the next block's starting points.
    pub fn final_positions(&self) -> Vec<Point> {
        self.trajectory.iter().map(|tr| tr[self.num_slots]).collect()
    }

    pub fn check_dims(&self, s: &Scenario) -> bool {
        let p = &s.params;
        self.num_uavs == p.num_uavs
            && self.num_users == p.num_users
            && self.num_slots == p.num_slots
            && self.w_data.len() == p.num_uavs * p.num_users * p.num_slots
            && self.w_data.iter().all(|w| w.len() == p.uav_antennas)
            && self.w_fh.len() == p.num_uavs * p.num_slots
            && self.w_fh.iter().all(|w| w.len() == p.bs_antennas)
            && self.trajectory.len() == p.num_uavs
            && self
                .trajectory
                .iter()
                .zip(&s.geometry.uav_start_positions)
                .all(|(tr, d0)| tr.len() == p.num_slots + 1 && tr[0] == *d0)
            && self.coop.len() == p.num_uavs
            && self.coop.iter().all(|r| r.len() == p.num_users)
    }
}

/// Per-user QoS targets.
#[derive(Clone, Debug, PartialEq)]
pub struct QosSpec {
    /// Linear SINR target, `2^{2 r} - 1`.
    pub gamma_min: Vec<f64>,
    /// Rate target in bit/s/Hz.
    pub r_min: Vec<f64>,
}

impl QosSpec {
    pub fn uniform(num_users: usize, r_min: f64) -> Self {
        Self {
            gamma_min: vec![sinr_for_rate(r_min); num_users],
            r_min: vec![r_min; num_users],
        }
    }

    pub fn from_params(p: &SimParams) -> Self {
        Self::uniform(p.num_users, p.r_min_spectral())
    }

    /// Fronthaul SINR needed by a UAV serving the users flagged in `coop_row`,
    /// `2^{sum_k q_k R_k} - 1`.
    pub fn fronthaul_target(&self, coop_row: &[bool]) -> f64 {
        let total: f64 = coop_row
            .iter()
            .zip(&self.r_min)
            .filter(|(q, _)| **q)
            .map(|(_, r)| r)
            .sum();
        total.exp2() - 1.0
    }
}

/// Per-slot and aggregate power breakdown, in watts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub per_slot_bs: Vec<f64>,
    /// `[l][t-1]`
    pub per_slot_uav_tx: Vec<Vec<f64>>,
    /// `[l][t-1]`
    pub per_slot_uav_nav: Vec<Vec<f64>>,
    /// `sum_t f_t`.
    pub weighted_total: f64,
    /// Mean UAV power (transmit + navigation) per UAV and slot.
    pub per_uav_avg: f64,
    /// `sum_t` of BS fronthaul power.
    pub bs_total: f64,
}

/// `(d_{l,k,t}, d_{F,l,t})` at slot `t` (1-based).
pub fn distances(plan: &Plan, s: &Scenario, t: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = &s.geometry;
    let data = (0..plan.num_uavs)
        .map(|l| {
            g.user_positions
                .iter()
                .map(|u| (plan.pos(l, t) - u).norm())
                .collect()
        })
        .collect();
    let fh = (0..plan.num_uavs)
        .map(|l| (plan.pos(l, t) - g.bs_position).norm())
        .collect();
    (data, fh)
}

fn cdot(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// Data SINR of user `k` at slot `t`.
pub fn sinr_data(plan: &Plan, block: &ChannelBlock, s: &Scenario, k: usize, t: usize) -> f64 {
    let p = &s.params;
    let user = &s.geometry.user_positions[k];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for l in 0..plan.num_uavs {
        let d = (plan.pos(l, t) - user).norm();
        let pl = path_gain(p.antenna_gain_data, p.pathloss_exponent_data, d);
        let g = block.g(l, k);
        for j in 0..plan.num_users {
            let rx = pl * cdot(g, plan.w(l, j, t)).norm_sqr();
            if j == k {
                signal += rx;
            } else {
                interference += rx;
            }
        }
    }
    signal / (p.noise_power() + interference)
}

/// Fronthaul SINR of UAV `l` at slot `t` with the rank-one `G_F`.
pub fn sinr_fronthaul(plan: &Plan, block: &ChannelBlock, s: &Scenario, l: usize, t: usize) -> f64 {
    let p = &s.params;
    let d = (plan.pos(l, t) - s.geometry.bs_position).norm();
    let pl = path_gain(p.antenna_gain_fh, p.pathloss_exponent_fh, d);
    let rx_gain = block.g_fh_rx[l].norm_squared();
    let tx = &block.g_fh_tx[l];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..plan.num_uavs {
        // ||G^H w||^2 = |g_tx^H w|^2 ||g_rx||^2
        let rx = pl * cdot(tx, plan.wf(j, t)).norm_sqr() * rx_gain;
        if j == l {
            signal += rx;
        } else {
            interference += rx;
        }
    }
    signal / (p.noise_power() + interference)
}

/// Achievable rate with half-slot time division, bit/s/Hz.
pub fn rate(sinr: f64) -> f64 {
    0.5 * (1.0 + sinr).log2()
}

/// SINR needed for rate `r` bit/s/Hz.
pub fn sinr_for_rate(r: f64) -> f64 {
    (2.0 * r).exp2() - 1.0
}

pub fn nav_power(plan: &Plan, p: &SimParams, l: usize, t: usize) -> f64 {
    p.nav_c1 + p.nav_c2 * (plan.pos(l, t) - plan.pos(l, t - 1)).norm()
}

pub fn objective(plan: &Plan, s: &Scenario) -> PowerReport {
    let p = &s.params;
    let (lc, kc, tc) = (plan.num_uavs, plan.num_users, plan.num_slots);
    let per_slot_bs: Vec<f64> = (1..=tc)
        .map(|t| (0..lc).map(|l| plan.wf(l, t).norm_squared()).sum())
        .collect();
    let per_slot_uav_tx: Vec<Vec<f64>> = (0..lc)
        .map(|l| {
            (1..=tc)
                .map(|t| (0..kc).map(|k| plan.w(l, k, t).norm_squared()).sum())
                .collect()
        })
        .collect();
    let per_slot_uav_nav: Vec<Vec<f64>> = (0..lc)
        .map(|l| (1..=tc).map(|t| nav_power(plan, p, l, t)).collect())
        .collect();

    let w = &p.weights;
    let mut weighted_total = 0.0;
    for t in 0..tc {
        let mut f_t = w.alpha_0 * per_slot_bs[t];
        for l in 0..lc {
            f_t += w.alpha_l[l] * (per_slot_uav_tx[l][t] + per_slot_uav_nav[l][t]);
        }
        weighted_total += f_t;
    }
    let uav_sum: f64 = (0..lc)
        .map(|l| {
            per_slot_uav_tx[l].iter().sum::<f64>() + per_slot_uav_nav[l].iter().sum::<f64>()
        })
        .sum();
    PowerReport {
        bs_total: per_slot_bs.iter().sum(),
        per_uav_avg: uav_sum / (lc * tc) as f64,
        per_slot_bs,
        per_slot_uav_tx,
        per_slot_uav_nav,
        weighted_total,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 9] = [
        Self::C1,
        Self::C2,
        Self::C3,
        Self::C4,
        Self::C5,
        Self::C6,
        Self::C7,
        Self::C8,
        Self::C9,
    ];
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One constraint instance that exceeded the tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// `(l, k, t, j)` style indices; unused slots are `None`.
    pub indices: Vec<usize>,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCheck {
    pub id: ConstraintId,
    /// Largest violation measure over all instances; negative means every
    /// instance holds with margin.
    pub worst: f64,
    pub violations: Vec<Violation>,
}

/// Outcome of [`check_constraints`]. Power and distance constraints use
/// absolute measures (W, m); the SINR constraints C5/C6 are relative.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport {
    pub tol: f64,
    pub checks: Vec<ConstraintCheck>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.checks.iter().all(|c| c.violations.is_empty())
    }

    pub fn get(&self, id: ConstraintId) -> &ConstraintCheck {
        self.checks.iter().find(|c| c.id == id).expect("all ids checked")
    }

    pub fn violated(&self) -> Vec<ConstraintId> {
        self.checks
            .iter()
            .filter(|c| !c.violations.is_empty())
            .map(|c| c.id)
            .collect()
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{}: worst {:+.3e}, {} violation(s)",
                c.id,
                c.worst,
                c.violations.len()
            )?;
        }
        Ok(())
    }
}

struct Collector {
    tol: f64,
    worst: f64,
    violations: Vec<Violation>,
}

impl Collector {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            worst: f64::NEG_INFINITY,
            violations: Vec::new(),
        }
    }

    fn push(&mut self, indices: &[usize], amount: f64) {
        let amount = if amount.is_nan() { f64::INFINITY } else { amount };
        self.worst = self.worst.max(amount);
        if amount > self.tol {
            self.violations.push(Violation {
                indices: indices.to_vec(),
                amount,
            });
        }
    }

    fn finish(self, id: ConstraintId) -> ConstraintCheck {
        ConstraintCheck {
            id,
            worst: if self.worst == f64::NEG_INFINITY { 0.0 } else { self.worst },
            violations: self.violations,
        }
    }
}

fn relative_shortfall(target: f64, value: f64) -> f64 {
    if target > 0.0 {
        (target - value) / target
    } else {
        target - value
    }
}

/// Evaluate C1-C9 of the original problem.
pub fn check_constraints(
    plan: &Plan,
    block: &ChannelBlock,
    s: &Scenario,
    qos: &QosSpec,
    tol: f64,
) -> ViolationReport {
    let p = &s.params;
    let g = &s.geometry;
    let (lc, kc, tc) = (plan.num_uavs, plan.num_users, plan.num_slots);
    let report = objective(plan, s);
    let mut checks = Vec::with_capacity(9);

    let mut c = Collector::new(tol);
    for t in 1..=tc {
        c.push(&[t], report.per_slot_bs[t - 1] - p.p_bs_max);
    }
    checks.push(c.finish(ConstraintId::C1));

    let mut c = Collector::new(tol);
    for l in 0..lc {
        for t in 1..=tc {
            let used = report.per_slot_uav_tx[l][t - 1] + report.per_slot_uav_nav[l][t - 1];
            c.push(&[l, t], used - p.p_uav_max);
        }
    }
    checks.push(c.finish(ConstraintId::C2));

    // q is stored as booleans, so C3 holds by construction.
    let mut c = Collector::new(tol);
    c.push(&[], 0.0);
    checks.push(c.finish(ConstraintId::C3));

    let mut c = Collector::new(tol);
    for l in 0..lc {
        for k in 0..kc {
            let peak = (1..=tc)
                .map(|t| plan.w(l, k, t).norm_squared())
                .fold(0.0, f64::max);
            let cap = if plan.coop[l][k] { p.p_uav_max } else { 0.0 };
            c.push(&[l, k], peak - cap);
        }
    }
    checks.push(c.finish(ConstraintId::C4));

    let mut c = Collector::new(tol);
    for k in 0..kc {
        for t in 1..=tc {
            let gamma = sinr_data(plan, block, s, k, t);
            c.push(&[k, t], relative_shortfall(qos.gamma_min[k], gamma));
        }
    }
    checks.push(c.finish(ConstraintId::C5));

    let mut c = Collector::new(tol);
    for l in 0..lc {
        let target = qos.fronthaul_target(&plan.coop[l]);
        for t in 1..=tc {
            let gamma = sinr_fronthaul(plan, block, s, l, t);
            c.push(&[l, t], relative_shortfall(target, gamma));
        }
    }
    checks.push(c.finish(ConstraintId::C6));

    let mut c = Collector::new(tol);
    for l in 0..lc {
        for t in 1..=tc {
            let step = (plan.pos(l, t) - plan.pos(l, t - 1)).norm();
            c.push(&[l, t], step - p.d_max());
        }
    }
    checks.push(c.finish(ConstraintId::C7));

    let mut c = Collector::new(tol);
    for t in 1..=tc {
        for l in 0..lc {
            for j in l + 1..lc {
                let sep = (plan.pos(l, t) - plan.pos(j, t)).norm();
                c.push(&[l, j, t], p.d_min - sep);
            }
        }
    }
    checks.push(c.finish(ConstraintId::C8));

    let mut c = Collector::new(tol);
    for l in 0..lc {
        for t in 1..=tc {
            let d = plan.pos(l, t);
            let out = (0..3)
                .map(|i| (g.nav_min[i] - d[i]).max(d[i] - g.nav_max[i]))
                .fold(f64::NEG_INFINITY, f64::max);
            c.push(&[l, t], out);
        }
    }
    checks.push(c.finish(ConstraintId::C9));

    ViolationReport { tol, checks }
}
