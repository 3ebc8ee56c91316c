//! Binary approximation of the cooperation indicator, the slack-variable DC
//! reformulation and assembly of the convexified subproblem.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::channel::{CMatrix, CVector, ChannelBlock};
use crate::cone::{Affine, ConeProgram, ProgramBuilder, Var};
use crate::error::{Error, Result};
use crate::model::{Plan, QosSpec};
use crate::scenario::{Point, Scenario};

/// Upper bound on `tau_q`, keeping `-ln(1 - tau_q)` finite.
pub const TAU_Q_MAX: f64 = 1.0 - 1e-6;

/// Smallest fronthaul SINR slack. A UAV that serves nobody still needs
/// `tau_F > 0` in the fronthaul constraint; the floor costs a negligible
/// fronthaul power.
pub const TAU_F_FLOOR: f64 = 1e-6;

/// Slack variables of the DC reformulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackVars {
    /// `tau_{l,k,t}` at `(l * K + k) * T + (t - 1)`.
    pub tau_data: Vec<f64>,
    /// `tau_{F,l}`, one per UAV.
    pub tau_fh: Vec<f64>,
    /// `tau_{q,l,k}` at `l * K + k`.
    pub tau_q: Vec<f64>,
}

impl SlackVars {
    pub fn zeros(num_uavs: usize, num_users: usize, num_slots: usize) -> Self {
        Self {
            tau_data: vec![0.0; num_uavs * num_users * num_slots],
            tau_fh: vec![0.0; num_uavs],
            tau_q: vec![0.0; num_uavs * num_users],
        }
    }
}

fn data_idx(plan: &Plan, l: usize, k: usize, t: usize) -> usize {
    (l * plan.num_users + k) * plan.num_slots + t - 1
}

/// `Q(beta, w) = 1 - exp(-beta ||w||^2)`.
pub fn coop_indicator(beta: f64, w: &CVector) -> f64 {
    -(-beta * w.norm_squared()).exp_m1()
}

/// `[Re w; Im w]`
pub fn lift(w: &CVector) -> Vec<f64> {
    w.iter().map(|c| c.re).chain(w.iter().map(|c| c.im)).collect()
}

/// Affine minorant of `||G^H w||^2 / tau` in the lifted variables `(w~, tau)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineBound {
    /// Coefficients on `w~ = [Re w; Im w]`.
    pub w_coef: Vec<f64>,
    pub tau_coef: f64,
    pub constant: f64,
}

impl AffineBound {
    pub fn eval(&self, w: &CVector, tau: f64) -> f64 {
        let wl = lift(w);
        self.constant
            + self.tau_coef * tau
            + self.w_coef.iter().zip(&wl).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// First-order bound of the quadratic-over-linear function at `(w0, tau0)`:
/// `f(w0,tau0) + (w0~' G~ G~' / tau0)(2 w~ - ((tau + tau0)/tau0) w0~)`.
pub fn quad_over_lin_minorant(g: &CMatrix, w0: &CVector, tau0: f64) -> Result<AffineBound> {
    if !(tau0 > 0.0) {
        return Err(Error::Domain(format!("tau0 must be positive, got {tau0}")));
    }
    if g.nrows() != w0.len() {
        return Err(Error::Dimension(format!(
            "G has {} rows, w0 has length {}",
            g.nrows(),
            w0.len()
        )));
    }
    // G~' w0~ = [Re(G^H w0); Im(G^H w0)], so G~ G~' w0~ = lift(G G^H w0).
    let c = g.adjoint() * w0;
    let f0 = c.norm_squared() / tau0;
    let a = lift(&(g * &c));
    Ok(AffineBound {
        w_coef: a.iter().map(|v| 2.0 * v / tau0).collect(),
        tau_coef: -f0 / tau0,
        constant: 0.0,
    })
}

/// `||G^H w||^2 / tau`.
pub fn quad_over_lin(g: &CMatrix, w: &CVector, tau: f64) -> f64 {
    (g.adjoint() * w).norm_squared() / tau
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DcId {
    C5a,
    C6a,
    C6c,
    C8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcConstraint {
    /// `1 + sum_l sum_j |g_lk^H w_ljt|^2/(s2 tau_lkt) <= sum_l gamma_k |g_lk^H w_lkt|^2/(s2 tau_lkt)`
    C5a { k: usize, t: usize },
    /// `A_F^-1 d_F^a + sum_{j!=l} ||G_l^H w_Fjt||^2/s2 <= ||G_l^H w_Flt||^2/(s2 tau_Fl)`
    C6a { l: usize, t: usize },
    /// `beta ||w_lkt||^2 <= -ln(1 - tau_qlk)`
    C6c { l: usize, k: usize, t: usize },
    /// `d_min <= ||d_lt - d_jt||`
    C8 { l: usize, j: usize, t: usize },
}

impl DcConstraint {
    pub fn id(&self) -> DcId {
        match self {
            DcConstraint::C5a { .. } => DcId::C5a,
            DcConstraint::C6a { .. } => DcId::C6a,
            DcConstraint::C6c { .. } => DcId::C6c,
            DcConstraint::C8 { .. } => DcId::C8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConvexId {
    C1,
    C2,
    C5b,
    C6b,
    C7,
    C9,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvexConstraint {
    C1 { t: usize },
    C2 { l: usize, t: usize },
    C5b { l: usize, k: usize, t: usize },
    C6b { l: usize },
    C7 { l: usize, t: usize },
    C9 { l: usize, t: usize },
}

impl ConvexConstraint {
    pub fn id(&self) -> ConvexId {
        match self {
            ConvexConstraint::C1 { .. } => ConvexId::C1,
            ConvexConstraint::C2 { .. } => ConvexId::C2,
            ConvexConstraint::C5b { .. } => ConvexId::C5b,
            ConvexConstraint::C6b { .. } => ConvexId::C6b,
            ConvexConstraint::C7 { .. } => ConvexId::C7,
            ConvexConstraint::C9 { .. } => ConvexId::C9,
        }
    }
}

/// The constraint catalog of the reformulated problem for one block.
#[derive(Clone, Debug)]
pub struct DcConstraintSet {
    pub dc: Vec<DcConstraint>,
    pub convex: Vec<ConvexConstraint>,
    pub block: ChannelBlock,
    pub qos: QosSpec,
    /// `gamma_k = 1 + 1 / Gamma_k^min`.
    pub gamma: Vec<f64>,
    pub beta: f64,
}

pub fn build_dc_set(s: &Scenario, block: &ChannelBlock, qos: &QosSpec) -> Result<DcConstraintSet> {
    block.check_dims(&s.params)?;
    let p = &s.params;
    let (lc, kc, tc) = (p.num_uavs, p.num_users, p.num_slots);
    if qos.gamma_min.len() != kc || qos.r_min.len() != kc {
        return Err(Error::Dimension("QoS spec does not match the number of users".into()));
    }
    let mut dc = Vec::new();
    for t in 1..=tc {
        for k in 0..kc {
            dc.push(DcConstraint::C5a { k, t });
        }
    }
    for t in 1..=tc {
        for l in 0..lc {
            dc.push(DcConstraint::C6a { l, t });
        }
    }
    for l in 0..lc {
        for k in 0..kc {
            for t in 1..=tc {
                dc.push(DcConstraint::C6c { l, k, t });
            }
        }
    }
    for t in 1..=tc {
        for l in 0..lc {
            for j in l + 1..lc {
                dc.push(DcConstraint::C8 { l, j, t });
            }
        }
    }
    let mut convex = Vec::new();
    for t in 1..=tc {
        convex.push(ConvexConstraint::C1 { t });
        for l in 0..lc {
            convex.push(ConvexConstraint::C2 { l, t });
            convex.push(ConvexConstraint::C7 { l, t });
            convex.push(ConvexConstraint::C9 { l, t });
            for k in 0..kc {
                convex.push(ConvexConstraint::C5b { l, k, t });
            }
        }
    }
    for l in 0..lc {
        convex.push(ConvexConstraint::C6b { l });
    }
    Ok(DcConstraintSet {
        dc,
        convex,
        block: block.clone(),
        qos: qos.clone(),
        gamma: qos.gamma_min.iter().map(|g| 1.0 + 1.0 / g).collect(),
        beta: p.beta,
    })
}

fn g_col(g: &CVector) -> CMatrix {
    CMatrix::from_column_slice(g.len(), 1, g.as_slice())
}

impl DcConstraintSet {
    pub fn count(&self, id: DcId) -> usize {
        self.dc.iter().filter(|c| c.id() == id).count()
    }

    /// `(f1, f2)` of a DC constraint at `plan`.
    pub fn eval(&self, c: &DcConstraint, plan: &Plan, s: &Scenario) -> (f64, f64) {
        let p = &s.params;
        let s2 = p.noise_power();
        let sl = &plan.slacks;
        match *c {
            DcConstraint::C5a { k, t } => {
                let mut f1 = 1.0;
                let mut f2 = 0.0;
                for l in 0..plan.num_uavs {
                    let tau = sl.tau_data[data_idx(plan, l, k, t)];
                    let g = self.block.g(l, k);
                    for j in 0..plan.num_users {
                        f1 += g.dotc(plan.w(l, j, t)).norm_sqr() / (s2 * tau);
                    }
                    f2 += self.gamma[k] * g.dotc(plan.w(l, k, t)).norm_sqr() / (s2 * tau);
                }
                (f1, f2)
            }
            DcConstraint::C6a { l, t } => {
                let d = (plan.pos(l, t) - s.geometry.bs_position).norm();
                let g = self.block.g_fh(l);
                let mut f1 = d.powf(p.pathloss_exponent_fh) / p.antenna_gain_fh;
                for j in 0..plan.num_uavs {
                    if j != l {
                        f1 += quad_over_lin(&g, plan.wf(j, t), s2);
                    }
                }
                let f2 = quad_over_lin(&g, plan.wf(l, t), s2 * sl.tau_fh[l]);
                (f1, f2)
            }
            DcConstraint::C6c { l, k, t } => {
                let tq = sl.tau_q[l * plan.num_users + k];
                let f2 = if tq < 1.0 { -(-tq).ln_1p() } else { f64::INFINITY };
                (self.beta * plan.w(l, k, t).norm_squared(), f2)
            }
            DcConstraint::C8 { l, j, t } => {
                (p.d_min, (plan.pos(l, t) - plan.pos(j, t)).norm())
            }
        }
    }

    /// Scale-free violation `(f1 - f2) / max(|f1|, 1)`; C8 is measured in
    /// units of `d_min`.
    pub fn violation(&self, c: &DcConstraint, plan: &Plan, s: &Scenario) -> f64 {
        let (f1, f2) = self.eval(c, plan, s);
        let v = match c {
            DcConstraint::C8 { .. } => (f1 - f2) / s.params.d_min.max(1e-12),
            _ => (f1 - f2) / f1.abs().max(1.0),
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    pub fn max_dc_violation(&self, plan: &Plan, s: &Scenario) -> f64 {
        self.dc
            .iter()
            .map(|c| self.violation(c, plan, s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Violation of a convex constraint (relative for C5b/C6b, absolute
    /// watts or meters otherwise).
    pub fn convex_violation(&self, c: &ConvexConstraint, plan: &Plan, s: &Scenario) -> f64 {
        let p = &s.params;
        let g = &s.geometry;
        let sl = &plan.slacks;
        match *c {
            ConvexConstraint::C1 { t } => {
                (0..plan.num_uavs).map(|l| plan.wf(l, t).norm_squared()).sum::<f64>()
                    - p.p_bs_max
            }
            ConvexConstraint::C2 { l, t } => {
                let tx: f64 = (0..plan.num_users).map(|k| plan.w(l, k, t).norm_squared()).sum();
                tx + crate::model::nav_power(plan, p, l, t) - p.p_uav_max
            }
            ConvexConstraint::C5b { l, k, t } => {
                let d = (plan.pos(l, t) - g.user_positions[k]).norm();
                let need = d.powf(p.pathloss_exponent_data) / p.antenna_gain_data;
                (need - sl.tau_data[data_idx(plan, l, k, t)]) / need.max(1.0)
            }
            ConvexConstraint::C6b { l } => {
                let need: f64 = (0..plan.num_users)
                    .map(|k| self.qos.r_min[k] * sl.tau_q[l * plan.num_users + k])
                    .sum();
                need - sl.tau_fh[l].ln_1p() / LN_2
            }
            ConvexConstraint::C7 { l, t } => {
                (plan.pos(l, t) - plan.pos(l, t - 1)).norm() - p.d_max()
            }
            ConvexConstraint::C9 { l, t } => {
                let d = plan.pos(l, t);
                (0..3)
                    .map(|i| (g.nav_min[i] - d[i]).max(d[i] - g.nav_max[i]))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn max_convex_violation(&self, plan: &Plan, s: &Scenario) -> f64 {
        self.convex
            .iter()
            .map(|c| self.convex_violation(c, plan, s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First DC or convex constraint violated beyond `tol`, as `(name, amount)`.
    pub fn first_violation(&self, plan: &Plan, s: &Scenario, tol: f64) -> Option<(String, f64)> {
        self.first_violation_with(plan, s, tol, false)
    }

    /// As [`first_violation`](Self::first_violation); with `coop_frozen` the
    /// slacks `tau_q` hold a binary `q`, so C6c and the `tau_q` box are skipped.
    pub fn first_violation_with(&self, plan: &Plan, s: &Scenario, tol: f64, coop_frozen: bool) -> Option<(String, f64)> {
        for c in &self.dc {
            if coop_frozen && c.id() == DcId::C6c {
                continue;
            }
            let v = self.violation(c, plan, s);
            if v > tol {
                return Some((format!("{c:?}"), v));
            }
        }
        for c in &self.convex {
            let v = self.convex_violation(c, plan, s);
            if v > tol {
                return Some((format!("{c:?}"), v));
            }
        }
        let sl = &plan.slacks;
        if coop_frozen {
            return None;
        }
        if let Some(v) = sl.tau_q.iter().find(|v| !(**v >= 0.0 && **v <= TAU_Q_MAX)) {
            return Some(("tau_q box".into(), *v));
        }
        None
    }
}

/// Parts of the decision space held fixed in the subproblem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssembleOptions {
    /// Positions become constants (Baselines 3 and 4).
    pub freeze_trajectory: bool,
    /// Binary `q` replaces `tau_q`; links with `q = 0` lose their
    /// beamformer variables (Baselines 1 and 2).
    pub freeze_coop: Option<Vec<Vec<bool>>>,
    /// Use the power cone for `u >= s^alpha` even when `alpha = 2`.
    pub force_power_cone: bool,
}

/// Maps cone-program coordinates back to plan fields.
#[derive(Clone, Debug)]
pub struct VarMap {
    /// Lifted `[Re; Im]` variables per `(l,k,t)`; `None` when frozen to zero.
    pub w_data: Vec<Option<Vec<Var>>>,
    pub w_fh: Vec<Vec<Var>>,
    /// Position offsets from the linearization point per `(l,t)`.
    pub delta: Option<Vec<[Var; 3]>>,
    pub tau_data: Vec<Var>,
    pub tau_fh: Vec<Var>,
    pub tau_q: Option<Vec<Var>>,
}

#[derive(Clone, Debug)]
pub struct Subproblem {
    pub program: ConeProgram,
    pub map: VarMap,
}

impl Subproblem {
    /// Rebuild a plan from a primal point, taking frozen parts from `prev`.
    pub fn extract(&self, x: &[f64], prev: &Plan) -> Plan {
        let m = &self.map;
        let mut plan = prev.clone();
        let read = |vars: &[Var]| -> CVector {
            let n = vars.len() / 2;
            CVector::from_fn(n, |i, _| Complex64::new(x[vars[i].0], x[vars[n + i].0]))
        };
        for (i, v) in m.w_data.iter().enumerate() {
            plan.w_data[i] = match v {
                Some(vars) => read(vars),
                None => CVector::zeros(prev.w_data[i].len()),
            };
        }
        for (i, vars) in m.w_fh.iter().enumerate() {
            plan.w_fh[i] = read(vars);
        }
        if let Some(delta) = &m.delta {
            for l in 0..plan.num_uavs {
                for t in 1..=plan.num_slots {
                    let d = &delta[l * plan.num_slots + t - 1];
                    plan.trajectory[l][t] =
                        prev.trajectory[l][t] + Point::new(x[d[0].0], x[d[1].0], x[d[2].0]);
                }
            }
        }
        for (i, v) in m.tau_data.iter().enumerate() {
            plan.slacks.tau_data[i] = x[v.0];
        }
        for (i, v) in m.tau_fh.iter().enumerate() {
            plan.slacks.tau_fh[i] = x[v.0].max(TAU_F_FLOOR);
        }
        match &m.tau_q {
            Some(vars) => {
                for (i, v) in vars.iter().enumerate() {
                    plan.slacks.tau_q[i] = x[v.0].clamp(0.0, TAU_Q_MAX);
                }
            }
            None => {
                for l in 0..plan.num_uavs {
                    for k in 0..plan.num_users {
                        plan.slacks.tau_q[l * plan.num_users + k] =
                            if plan.coop[l][k] { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        plan
    }
}

/// Real affine forms of `Re(g^H w)` and `Im(g^H w)` over lifted variables.
fn inner_forms(g: &CVector, w: &[Var], scale: f64) -> [Affine; 2] {
    let n = g.len();
    let mut re = Affine::zero();
    let mut im = Affine::zero();
    for i in 0..n {
        let (gr, gi) = (g[i].re * scale, g[i].im * scale);
        re.add_term(w[i], gr);
        re.add_term(w[n + i], gi);
        im.add_term(w[n + i], gr);
        im.add_term(w[i], -gi);
    }
    [re, im]
}

fn bound_affine(b: &AffineBound, w: &[Var], tau: Affine, scale: f64) -> Affine {
    let mut e = tau * (b.tau_coef * scale) + Affine::constant(b.constant * scale);
    for (v, a) in w.iter().zip(&b.w_coef) {
        e.add_term(*v, a * scale);
    }
    e
}

/// Deterministic unit direction used when two UAVs coincide.
fn fallback_direction(l: usize, j: usize, t: usize) -> Point {
    let h = (l as u64 + 1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((j as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(t as u64);
    let a = (h % 3600) as f64 / 3600.0 * std::f64::consts::TAU;
    Point::new(a.cos(), a.sin(), 0.0)
}

/// Build the convex subproblem linearized at `prev`.
pub fn assemble_subproblem(
    prev: &Plan,
    dc: &DcConstraintSet,
    s: &Scenario,
    opts: &AssembleOptions,
) -> Result<Subproblem> {
    let p = &s.params;
    let geo = &s.geometry;
    if !prev.check_dims(s) {
        return Err(Error::Dimension("plan does not match scenario".into()));
    }
    let (lc, kc, tc) = (prev.num_uavs, prev.num_users, prev.num_slots);
    let (mm, nn) = (p.uav_antennas, p.bs_antennas);
    let s2 = p.noise_power();
    let sl = &prev.slacks;
    if let Some(v) = sl.tau_data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::LinearizationPoint(format!("tau_data = {v}")));
    }
    if let Some(v) = sl.tau_fh.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::LinearizationPoint(format!("tau_fh = {v}")));
    }
    let freeze_q = opts.freeze_coop.as_ref();
    if freeze_q.is_none() {
        if let Some(v) = sl.tau_q.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
            return Err(Error::LinearizationPoint(format!("tau_q = {v}")));
        }
    }
    if let Some(q) = freeze_q {
        if q.len() != lc || q.iter().any(|r| r.len() != kc) {
            return Err(Error::Dimension("frozen q has the wrong shape".into()));
        }
    }
    let mut b = ProgramBuilder::new();
    let w_floor = 1e-4 * p.p_uav_max.sqrt();
    let wf_floor = 1e-4 * p.p_bs_max.sqrt();

    // beamformers and their power epigraphs
    let mut w_vars: Vec<Option<Vec<Var>>> = Vec::with_capacity(lc * kc * tc);
    let mut p_vars: Vec<Option<Var>> = Vec::with_capacity(lc * kc * tc);
    for l in 0..lc {
        for k in 0..kc {
            let active = freeze_q.map_or(true, |q| q[l][k]);
            for t in 1..=tc {
                if !active {
                    w_vars.push(None);
                    p_vars.push(None);
                    continue;
                }
                let w0 = prev.w(l, k, t);
                let sc = w0.norm().max(w_floor) / (mm as f64).sqrt();
                let w = b.vars(&format!("w[{l},{k},{t}]"), 2 * mm, sc);
                let pw = b.var(format!("p[{l},{k},{t}]"), w0.norm_squared().max(w_floor * w_floor));
                b.quad_over_lin(pw.into(), Affine::constant(1.0), w.iter().map(|&v| v.into()).collect());
                w_vars.push(Some(w));
                p_vars.push(Some(pw));
            }
        }
    }
    let widx = |l: usize, k: usize, t: usize| (l * kc + k) * tc + t - 1;
    let mut wf_vars = Vec::with_capacity(lc * tc);
    let mut pf_vars = Vec::with_capacity(lc * tc);
    for l in 0..lc {
        for t in 1..=tc {
            let w0 = prev.wf(l, t);
            let sc = w0.norm().max(wf_floor) / (nn as f64).sqrt();
            let w = b.vars(&format!("wf[{l},{t}]"), 2 * nn, sc);
            let pw = b.var(format!("pf[{l},{t}]"), w0.norm_squared().max(wf_floor * wf_floor));
            b.quad_over_lin(pw.into(), Affine::constant(1.0), w.iter().map(|&v| v.into()).collect());
            wf_vars.push(w);
            pf_vars.push(pw);
        }
    }
    let fidx = |l: usize, t: usize| l * tc + t - 1;

    // positions: d_lt = prev_lt + delta_lt
    let delta: Option<Vec<[Var; 3]>> = if opts.freeze_trajectory {
        None
    } else {
        let mut out = Vec::with_capacity(lc * tc);
        for l in 0..lc {
            for t in 1..=tc {
                let v = b.vars(&format!("delta[{l},{t}]"), 3, p.d_max());
                out.push([v[0], v[1], v[2]]);
            }
        }
        Some(out)
    };
    let pos = |l: usize, t: usize, i: usize| -> Affine {
        if t == 0 {
            return Affine::constant(prev.pos(l, 0)[i]);
        }
        let base = Affine::constant(prev.pos(l, t)[i]);
        match &delta {
            Some(d) => base + Affine::from(d[l * tc + t - 1][i]),
            None => base,
        }
    };
    let diff = |l: usize, t: usize, target: &Point| -> Vec<Affine> {
        (0..3).map(|i| pos(l, t, i) - Affine::constant(target[i])).collect()
    };

    // navigation distance epigraphs, C7 and C9
    let mut nav: Vec<Affine> = Vec::with_capacity(lc * tc);
    for l in 0..lc {
        for t in 1..=tc {
            if delta.is_some() {
                let m = b.var(format!("m[{l},{t}]"), p.d_max());
                let rows = (0..3).map(|i| pos(l, t, i) - pos(l, t - 1, i)).collect();
                b.soc(m.into(), rows);
                b.le(m.into(), Affine::constant(p.d_max()));
                for i in 0..3 {
                    b.le(Affine::constant(geo.nav_min[i]), pos(l, t, i));
                    b.le(pos(l, t, i), Affine::constant(geo.nav_max[i]));
                }
                nav.push(m.into());
            } else {
                let step = (prev.pos(l, t) - prev.pos(l, t - 1)).norm();
                nav.push(Affine::constant(step));
            }
        }
    }

    // objective
    let w = &p.weights;
    let mut obj = Affine::zero();
    for t in 1..=tc {
        for l in 0..lc {
            obj += Affine::from(pf_vars[fidx(l, t)]) * w.alpha_0;
            let mut uav = Affine::constant(p.nav_c1) + nav[fidx(l, t)].clone() * p.nav_c2;
            for k in 0..kc {
                if let Some(pv) = p_vars[widx(l, k, t)] {
                    uav += pv.into();
                }
            }
            obj += uav * w.alpha_l[l];
        }
    }
    b.minimize(obj);

    // C1, C2
    for t in 1..=tc {
        let mut bs = Affine::zero();
        for l in 0..lc {
            bs += pf_vars[fidx(l, t)].into();
        }
        b.le(bs, Affine::constant(p.p_bs_max));
        for l in 0..lc {
            let mut used = Affine::constant(p.nav_c1) + nav[fidx(l, t)].clone() * p.nav_c2;
            for k in 0..kc {
                if let Some(pv) = p_vars[widx(l, k, t)] {
                    used += pv.into();
                }
            }
            b.le(used, Affine::constant(p.p_uav_max));
        }
    }

    // path-loss slacks: tau >= A^-1 s^alpha with s >= ||d - target||
    let use_rsoc = |alpha: f64| alpha == 2.0 && !opts.force_power_cone;
    let distance_epigraph =
        |b: &mut ProgramBuilder, name: String, l: usize, t: usize, target: &Point, alpha: f64, gain: f64, lhs: Affine, lhs_scale: f64| {
            let d0 = (prev.pos(l, t) - target).norm().max(1e-3);
            if delta.is_some() {
                let sv = b.var(name, d0);
                b.soc(sv.into(), diff(l, t, target));
                // gain * lhs >= s^alpha, rows scaled by d0
                let r1 = lhs * (gain / d0.powf(alpha));
                let r3 = Affine::from(sv) * (1.0 / d0);
                if use_rsoc(alpha) {
                    b.rsoc(r1, Affine::constant(0.5), vec![r3]);
                } else {
                    b.pow(r1, Affine::constant(1.0), r3, 1.0 / alpha);
                }
            } else {
                let need = d0.powf(alpha) / gain;
                b.le(Affine::constant(1.0), lhs * (1.0 / need));
            }
            let _ = lhs_scale;
        };

    let mut tau_vars = Vec::with_capacity(lc * kc * tc);
    for l in 0..lc {
        for k in 0..kc {
            for t in 1..=tc {
                let t0 = sl.tau_data[widx(l, k, t)];
                let tv = b.var(format!("tau[{l},{k},{t}]"), t0);
                distance_epigraph(
                    &mut b,
                    format!("s[{l},{k},{t}]"),
                    l,
                    t,
                    &geo.user_positions[k],
                    p.pathloss_exponent_data,
                    p.antenna_gain_data,
                    tv.into(),
                    t0,
                );
                tau_vars.push(tv);
            }
        }
    }

    // C5a: 1 + sum_{l,j} v_lkjt <= sum_l gamma_k bound_lkt / s2
    for t in 1..=tc {
        for k in 0..kc {
            let mut lhs = Affine::constant(1.0);
            let mut rhs = Affine::zero();
            for l in 0..lc {
                let i = widx(l, k, t);
                let t0 = sl.tau_data[i];
                let tau = tau_vars[i];
                let g = dc.block.g(l, k);
                let norm = 1.0 / (s2 * t0).sqrt();
                for j in 0..kc {
                    let Some(wj) = &w_vars[widx(l, j, t)] else {
                        continue;
                    };
                    let v0 = g.dotc(prev.w(l, j, t)).norm_sqr() / (s2 * t0);
                    let v = b.var(format!("v[{l},{k},{j},{t}]"), v0.max(1e-2));
                    // |g^H w|^2 / (s2 tau) <= v  <=>  |g^H w / sqrt(s2 t0)|^2 <= v (tau / t0)
                    let z = inner_forms(g, wj, norm).to_vec();
                    b.quad_over_lin(v.into(), Affine::term(tau, 1.0 / t0), z);
                    lhs += v.into();
                }
                if let Some(wk) = &w_vars[i] {
                    let bound = quad_over_lin_minorant(&g_col(g), prev.w(l, k, t), t0)?;
                    rhs += bound_affine(&bound, wk, tau.into(), dc.gamma[k] / s2);
                }
            }
            b.le(lhs, rhs);
        }
    }

    // fronthaul
    let mut tauf_vars = Vec::with_capacity(lc);
    for l in 0..lc {
        let t0 = sl.tau_fh[l];
        let tv = b.var(format!("tauf[{l}]"), t0.max(1e-3));
        b.le(Affine::constant(TAU_F_FLOOR), tv.into());
        tauf_vars.push(tv);
    }
    for t in 1..=tc {
        for l in 0..lc {
            let g = dc.block.g_fh(l);
            let bs = geo.bs_position;
            let d0 = (prev.pos(l, t) - bs).norm().max(1e-3);
            let alpha = p.pathloss_exponent_fh;
            let e0 = d0.powf(alpha);
            // A_F^-1 e with e >= s_F^alpha
            let path: Affine = if delta.is_some() {
                let e = b.var(format!("e[{l},{t}]"), e0);
                distance_epigraph(&mut b, format!("sf[{l},{t}]"), l, t, &bs, alpha, 1.0, e.into(), e0);
                Affine::term(e, 1.0 / p.antenna_gain_fh)
            } else {
                Affine::constant(e0 / p.antenna_gain_fh)
            };
            let mut lhs = path;
            for j in 0..lc {
                if j == l {
                    continue;
                }
                let wj = &wf_vars[fidx(j, t)];
                let v0 = quad_over_lin(&g, prev.wf(j, t), s2);
                let scale = v0.max(1e-6 * e0 / p.antenna_gain_fh);
                let v = b.var(format!("vf[{l},{j},{t}]"), scale);
                let norm = 1.0 / (s2 * scale).sqrt();
                let mut z = Vec::new();
                for col in 0..g.ncols() {
                    z.extend(inner_forms(&g.column(col).into_owned(), wj, norm));
                }
                b.quad_over_lin(Affine::term(v, 1.0 / scale), Affine::constant(1.0), z);
                lhs += v.into();
            }
            let bound = quad_over_lin_minorant(&g, prev.wf(l, t), sl.tau_fh[l])?;
            let rhs = bound_affine(&bound, &wf_vars[fidx(l, t)], tauf_vars[l].into(), 1.0 / s2);
            b.le(lhs, rhs);
        }
    }

    // C6b: (ln2 sum_k R_k tau_q, 1, 1 + tau_F) in K_exp; C6c tangent
    let tauq_vars: Option<Vec<Var>> = if freeze_q.is_some() {
        None
    } else {
        let mut v = Vec::with_capacity(lc * kc);
        for l in 0..lc {
            for k in 0..kc {
                let q = b.var(format!("tauq[{l},{k}]"), 1.0);
                b.nonneg(q.into());
                b.le(q.into(), Affine::constant(TAU_Q_MAX));
                v.push(q);
            }
        }
        Some(v)
    };
    for l in 0..lc {
        let mut rate = Affine::zero();
        for k in 0..kc {
            let r = dc.qos.r_min[k] * LN_2;
            match (&tauq_vars, freeze_q) {
                (Some(v), _) => rate += Affine::term(v[l * kc + k], r),
                (None, Some(q)) if q[l][k] => rate += Affine::constant(r),
                _ => {}
            }
        }
        b.exp(rate, Affine::constant(1.0), Affine::constant(1.0) + tauf_vars[l].into());
    }
    if let Some(v) = &tauq_vars {
        for l in 0..lc {
            for k in 0..kc {
                let q0 = sl.tau_q[l * kc + k];
                let slope = 1.0 / (1.0 - q0);
                let value = -(-q0).ln_1p();
                for t in 1..=tc {
                    let pv = p_vars[widx(l, k, t)].expect("unfrozen links keep variables");
                    // beta p <= value + slope (tau_q - q0)
                    let rhs = Affine::constant(value - slope * q0) + Affine::term(v[l * kc + k], slope);
                    b.le(Affine::term(pv, p.beta), rhs);
                }
            }
        }
    }

    // C8 linearized: u0'(d_l - d_j) >= d_min
    if delta.is_some() {
        for t in 1..=tc {
            for l in 0..lc {
                for j in l + 1..lc {
                    let mut diff0 = prev.pos(l, t) - prev.pos(j, t);
                    if diff0.norm() < 1e-9 {
                        diff0 = fallback_direction(l, j, t) * (1e-3 * p.d_min);
                    }
                    let u = diff0 / diff0.norm();
                    let mut e = Affine::zero();
                    for i in 0..3 {
                        e += (pos(l, t, i) - pos(j, t, i)) * u[i];
                    }
                    b.le(Affine::constant(p.d_min), e);
                }
            }
        }
    }

    Ok(Subproblem {
        program: b.build(),
        map: VarMap {
            w_data: w_vars,
            w_fh: wf_vars,
            delta,
            tau_data: tau_vars,
            tau_fh: tauf_vars,
            tau_q: tauq_vars,
        },
    })
}

/// Put `plan` into the program's coordinates (epigraphs tight), e.g. to
/// check that the linearization point is feasible for its own subproblem.
pub fn embed(sub: &Subproblem, plan: &Plan, prev: &Plan, s: &Scenario, dc: &DcConstraintSet) -> Vec<f64> {
    let prog = &sub.program;
    let m = &sub.map;
    let mut x = vec![f64::NAN; prog.num_vars];
    let p = &s.params;
    let s2 = p.noise_power();
    let put = |x: &mut Vec<f64>, vars: &[Var], w: &CVector| {
        for (v, val) in vars.iter().zip(lift(w)) {
            x[v.0] = val;
        }
    };
    for (i, v) in m.w_data.iter().enumerate() {
        if let Some(vars) = v {
            put(&mut x, vars, &plan.w_data[i]);
        }
    }
    for (i, vars) in m.w_fh.iter().enumerate() {
        put(&mut x, vars, &plan.w_fh[i]);
    }
    if let Some(delta) = &m.delta {
        for l in 0..plan.num_uavs {
            for t in 1..=plan.num_slots {
                let d = plan.trajectory[l][t] - prev.trajectory[l][t];
                for i in 0..3 {
                    x[delta[l * plan.num_slots + t - 1][i].0] = d[i];
                }
            }
        }
    }
    for (i, v) in m.tau_data.iter().enumerate() {
        x[v.0] = plan.slacks.tau_data[i];
    }
    for (i, v) in m.tau_fh.iter().enumerate() {
        x[v.0] = plan.slacks.tau_fh[i];
    }
    if let Some(vars) = &m.tau_q {
        for (i, v) in vars.iter().enumerate() {
            x[v.0] = plan.slacks.tau_q[i];
        }
    }
    // auxiliary variables by name
    let kc = plan.num_users;
    for (j, name) in prog.var_names.iter().enumerate() {
        if !x[j].is_nan() {
            continue;
        }
        let (head, idx) = match name.split_once('[') {
            Some((h, rest)) => (h, rest.trim_end_matches(']')),
            None => continue,
        };
        let ix: Vec<usize> = idx.split(',').filter_map(|v| v.parse().ok()).collect();
        x[j] = match head {
            "p" => plan.w(ix[0], ix[1], ix[2]).norm_squared(),
            "pf" => plan.wf(ix[0], ix[1]).norm_squared(),
            "m" => (plan.pos(ix[0], ix[1]) - plan.pos(ix[0], ix[1] - 1)).norm(),
            "s" => (plan.pos(ix[0], ix[2]) - s.geometry.user_positions[ix[1]]).norm(),
            "sf" => (plan.pos(ix[0], ix[1]) - s.geometry.bs_position).norm(),
            "e" => (plan.pos(ix[0], ix[1]) - s.geometry.bs_position)
                .norm()
                .powf(p.pathloss_exponent_fh),
            "v" => {
                let (l, k, jj, t) = (ix[0], ix[1], ix[2], ix[3]);
                let tau = plan.slacks.tau_data[(l * kc + k) * plan.num_slots + t - 1];
                dc.block.g(l, k).dotc(plan.w(l, jj, t)).norm_sqr() / (s2 * tau)
            }
            "vf" => quad_over_lin(&dc.block.g_fh(ix[0]), plan.wf(ix[1], ix[2]), s2),
            _ => f64::NAN,
        };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_block;
    use crate::model::{check_constraints, sinr_fronthaul, ConstraintId};
    use crate::scenario::{generate_scenario, Layout, SimParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn crand(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn indicator_values() {
        assert_eq!(coop_indicator(1e3, &CVector::zeros(2)), 0.0);
        let w = CVector::from_vec(vec![Complex64::new((LN_2 / 2.0).sqrt(), 0.0)]);
        assert!((coop_indicator(2.0, &w) - 0.5).abs() < 1e-15);
        let w = CVector::from_vec(vec![Complex64::new(0.06, 0.08)]);
        let oracle = 1.0 - (-10.0f64).exp();
        assert!((coop_indicator(1e3, &w) - oracle).abs() < 1e-15);
        assert!((oracle - 0.999_954_6).abs() < 1e-7);
    }

    #[test]
    fn sublevel_sets_and_sharpness() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beta = 1e3;
        for _ in 0..2000 {
            let w = CVector::from_fn(3, |_, _| crand(&mut rng) * 0.05);
            let theta: f64 = rng.random::<f64>() * 0.999;
            let in_q = coop_indicator(beta, &w) <= theta;
            let in_ball = w.norm_squared() <= -(-theta).ln_1p() / beta;
            let near = (w.norm_squared() - (-(-theta).ln_1p() / beta)).abs() < 1e-15;
            assert!(in_q == in_ball || near);
            if w.norm_squared() >= 100f64.ln() / beta {
                assert!(coop_indicator(beta, &w) >= 0.99 - 1e-15);
            }
        }
    }

    fn random_g(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CMatrix {
        CMatrix::from_fn(n, m, |_, _| crand(rng))
    }

    #[test]
    fn minorant_anchor_zero_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=4);
            let g = random_g(&mut rng, n, m);
            let w0 = CVector::from_fn(n, |_, _| crand(&mut rng));
            let tau0 = rng.random::<f64>() * 5.0 + 0.01;
            let b = quad_over_lin_minorant(&g, &w0, tau0).unwrap();
            let anchor = quad_over_lin(&g, &w0, tau0);
            assert!((b.eval(&w0, tau0) - anchor).abs() <= 1e-9 * anchor.max(1.0));
            let w = CVector::from_fn(n, |_, _| crand(&mut rng) * 3.0);
            let tau = rng.random::<f64>() * 5.0 + 1e-3;
            assert!(b.eval(&w, tau) <= quad_over_lin(&g, &w, tau) + 1e-9);
        }
        let g = random_g(&mut rng, 3, 2);
        let b = quad_over_lin_minorant(&g, &CVector::zeros(3), 1.0).unwrap();
        let w = CVector::from_fn(3, |_, _| crand(&mut rng));
        assert_eq!(b.eval(&w, 2.0), 0.0);
        assert!(matches!(quad_over_lin_minorant(&g, &w, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn lifting_matches_complex_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_g(&mut rng, 3, 2);
        let w = CVector::from_fn(3, |_, _| crand(&mut rng));
        let gt = nalgebra::DMatrix::from_fn(6, 4, |i, j| {
            let (bi, bj) = (i / 3, j / 2);
            let z = g[(i % 3, j % 2)];
            match (bi, bj) {
                (0, 0) | (1, 1) => z.re,
                (0, 1) => -z.im,
                _ => z.im,
            }
        });
        let wl = nalgebra::DVector::from_vec(lift(&w));
        let lhs = gt.transpose() * wl;
        let c = g.adjoint() * &w;
        for i in 0..2 {
            assert!((lhs[i] - c[i].re).abs() < 1e-12);
            assert!((lhs[2 + i] - c[i].im).abs() < 1e-12);
        }
    }

    fn setup(seed: u64) -> (Scenario, ChannelBlock, QosSpec, DcConstraintSet) {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), seed).unwrap();
        let b = draw_block(&s, 0);
        let q = QosSpec::from_params(&s.params);
        let dc = build_dc_set(&s, &b, &q).unwrap();
        (s, b, q, dc)
    }

    #[test]
    fn dc_counts() {
        let (s, _, _, dc) = setup(1);
        let p = &s.params;
        let (l, k, t) = (p.num_uavs, p.num_users, p.num_slots);
        assert_eq!(dc.count(DcId::C5a), k * t);
        assert_eq!(dc.count(DcId::C6a), l * t);
        assert_eq!(dc.count(DcId::C6c), l * k * t);
        assert_eq!(dc.count(DcId::C8), t * l * (l - 1) / 2);
    }

    /// Random plan with slacks set tight as in the equivalence anchor. Beams
    /// are either zero or strong enough that `Q(beta, w)` rounds to one.
    fn zf_direction(target: &CVector, others: Vec<CVector>) -> CVector {
        if others.is_empty() {
            return target.clone();
        }
        let o = CMatrix::from_columns(&others);
        let proj = &o * (o.adjoint() * &o).try_inverse().unwrap() * o.adjoint() * target;
        target - proj
    }

    fn anchored_plan(s: &Scenario, b: &ChannelBlock, rng: &mut ChaCha8Rng, level: f64, zf: bool) -> Plan {
        let p = &s.params;
        let mut plan = Plan::hover(s);
        for l in 0..p.num_uavs {
            for k in 0..p.num_users {
                plan.coop[l][k] = zf || rng.random::<f64>() < 0.7;
            }
        }
        let amp = (level / p.beta).sqrt();
        for l in 0..p.num_uavs {
            for k in 0..p.num_users {
                for t in 1..=p.num_slots {
                    if plan.coop[l][k] {
                        let w = if zf {
                            let others = (0..p.num_users).filter(|&j| j != k).map(|j| b.g(l, j).clone()).collect();
                            zf_direction(b.g(l, k), others)
                        } else {
                            CVector::from_fn(p.uav_antennas, |_, _| crand(rng))
                        };
                        *plan.w_mut(l, k, t) = &w * Complex64::from(amp / w.norm());
                    }
                }
            }
            let others = (0..p.num_uavs).filter(|&j| j != l).map(|j| b.g_fh_tx[j].clone()).collect();
            let dir = zf_direction(&b.g_fh_tx[l], others);
            let mag = 10f64.powf(rng.random::<f64>() * 4.0 - 6.0);
            for t in 1..=p.num_slots {
                let m = mag * (1.0 + 0.5 * rng.random::<f64>());
                *plan.wf_mut(l, t) = &dir * Complex64::from(m / dir.norm());
            }
        }
        tighten(&mut plan, s, b);
        plan
    }

    fn tighten(plan: &mut Plan, s: &Scenario, b: &ChannelBlock) {
        let p = &s.params;
        for l in 0..p.num_uavs {
            for k in 0..p.num_users {
                let mut qmax = 0.0f64;
                for t in 1..=p.num_slots {
                    let d = (plan.pos(l, t) - s.geometry.user_positions[k]).norm();
                    let i = data_idx(plan, l, k, t);
                    plan.slacks.tau_data[i] = d.powf(p.pathloss_exponent_data) / p.antenna_gain_data;
                    qmax = qmax.max(coop_indicator(p.beta, plan.w(l, k, t)));
                }
                plan.slacks.tau_q[l * p.num_users + k] = qmax;
            }
            plan.slacks.tau_fh[l] = (1..=p.num_slots)
                .map(|t| sinr_fronthaul(plan, b, s, l, t))
                .fold(f64::INFINITY, f64::min);
        }
    }

    #[test]
    fn equivalence_anchor_on_random_points() {
        let (s, b, q, dc) = setup(4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut seen = [0usize; 4];
        for _ in 0..200 {
            let plan = anchored_plan(&s, &b, &mut rng, 40.0, false);
            let orig = check_constraints(&plan, &b, &s, &q, 0.0);
            // points within rounding distance of the boundary carry no signal
            let (w5, w6) = (orig.get(ConstraintId::C5).worst, orig.get(ConstraintId::C6).worst);
            if w5.abs() < 1e-9 || w6.abs() < 1e-9 {
                continue;
            }
            let c5 = w5 <= 0.0;
            let c6 = w6 <= 0.0;
            let dc_c5 = dc
                .dc
                .iter()
                .filter(|c| c.id() == DcId::C5a)
                .all(|c| dc.violation(c, &plan, &s) <= 1e-12);
            let dc_c6 = dc
                .dc
                .iter()
                .filter(|c| matches!(c.id(), DcId::C6a | DcId::C6c))
                .all(|c| dc.violation(c, &plan, &s) <= 1e-12)
                && dc
                    .convex
                    .iter()
                    .filter(|c| c.id() == ConvexId::C6b)
                    .all(|c| dc.convex_violation(c, &plan, &s) <= 1e-12);
            assert_eq!(c5, dc_c5);
            assert_eq!(c6, dc_c6);
            seen[usize::from(c5)] += 1;
            seen[2 + usize::from(c6)] += 1;
        }
        assert!(seen.iter().all(|&n| n > 0), "{seen:?}");
    }

    fn feasible_plan(s: &Scenario, b: &ChannelBlock, dc: &DcConstraintSet) -> Plan {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let mut plan = anchored_plan(s, b, &mut rng, 8.0, true);
            plan.slacks.tau_fh.iter_mut().for_each(|v| *v *= 1.0 - 1e-9);
            plan.slacks.tau_q.iter_mut().for_each(|v| *v = 1.0 - (1.0 - *v) * (1.0 - 1e-9));
            if dc.first_violation(&plan, s, 0.0).is_none() {
                return plan;
            }
        }
        let mut plan = anchored_plan(s, b, &mut rng, 8.0, true);
        plan.slacks.tau_fh.iter_mut().for_each(|v| *v *= 1.0 - 1e-9);
        panic!("no feasible sample {:?}", dc.first_violation(&plan, s, 0.0));
    }

    #[test]
    fn previous_iterate_is_feasible_for_its_subproblem() {
        let (s, b, _, dc) = setup(4);
        let prev = feasible_plan(&s, &b, &dc);
        let sub = assemble_subproblem(&prev, &dc, &s, &AssembleOptions::default()).unwrap();
        crate::cone::validate(&sub.program).unwrap();
        let x = embed(&sub, &prev, &prev, &s, &dc);
        assert!(x.iter().all(|v| v.is_finite()));
        assert!(crate::cone::max_violation(&sub.program, &x) < 1e-9);
        let f = sub.program.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>()
            + sub.program.objective_constant;
        let f0 = crate::model::objective(&prev, &s).weighted_total;
        assert!((f - f0).abs() <= 1e-12 * f0.abs().max(1.0), "{f} vs {f0}");
        let back = sub.extract(&x, &prev);
        assert_eq!(back.w_data, prev.w_data);
        assert_eq!(back.slacks, prev.slacks);
    }

    #[test]
    fn subproblem_step_descends_and_stays_feasible() {
        let (s, b, _, dc) = setup(4);
        let prev = feasible_plan(&s, &b, &dc);
        let f0 = crate::model::objective(&prev, &s).weighted_total;
        let sub = assemble_subproblem(&prev, &dc, &s, &AssembleOptions::default()).unwrap();
        let sol = crate::cone::solve(&sub.program, &crate::cone::SolverSettings::default()).unwrap();
        assert_eq!(sol.status, crate::cone::SolveStatus::Optimal);
        let next = sub.extract(&sol.primal, &prev);
        let f1 = crate::model::objective(&next, &s).weighted_total;
        assert!(f1 <= f0 + 1e-8 * f0, "{f1} > {f0}");
        assert!(dc.max_dc_violation(&next, &s) < 1e-5);
        assert!(dc.max_convex_violation(&next, &s) < 1e-5);
    }

    #[test]
    fn rsoc_and_power_cone_paths_agree() {
        let (s, b, _, dc) = setup(4);
        assert_eq!(s.params.pathloss_exponent_fh, 2.0);
        let prev = feasible_plan(&s, &b, &dc);
        let solve = |force| {
            let opts = AssembleOptions { force_power_cone: force, ..Default::default() };
            let sub = assemble_subproblem(&prev, &dc, &s, &opts).unwrap();
            let sol = crate::cone::solve(&sub.program, &crate::cone::SolverSettings::default()).unwrap();
            assert_eq!(sol.status, crate::cone::SolveStatus::Optimal);
            sol.objective_value
        };
        let (a, p) = (solve(false), solve(true));
        assert!((a - p).abs() <= 1e-5 * a.abs(), "{a} vs {p}");
    }

    #[test]
    fn frozen_parts_are_respected() {
        let (s, b, _, dc) = setup(4);
        let prev = feasible_plan(&s, &b, &dc);
        let opts = AssembleOptions {
            freeze_trajectory: true,
            freeze_coop: Some(prev.coop.clone()),
            ..Default::default()
        };
        let sub = assemble_subproblem(&prev, &dc, &s, &opts).unwrap();
        assert!(sub.map.delta.is_none() && sub.map.tau_q.is_none());
        let sol = crate::cone::solve(&sub.program, &crate::cone::SolverSettings::default()).unwrap();
        assert_eq!(sol.status, crate::cone::SolveStatus::Optimal);
        let next = sub.extract(&sol.primal, &prev);
        assert_eq!(next.trajectory, prev.trajectory);
        for l in 0..s.params.num_uavs {
            for k in 0..s.params.num_users {
                if !prev.coop[l][k] {
                    assert!((1..=s.params.num_slots).all(|t| next.w(l, k, t).norm() == 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_tau_q_makes_rate_constraint_trivial() {
        let (s, _, _, dc) = setup(2);
        let mut plan = Plan::hover(&s);
        plan.slacks.tau_fh = vec![1e-9; s.params.num_uavs];
        for c in dc.convex.iter().filter(|c| c.id() == ConvexId::C6b) {
            assert!(dc.convex_violation(c, &plan, &s) <= 0.0);
        }
    }

    #[test]
    fn linearization_point_errors() {
        let (s, _, _, dc) = setup(2);
        let plan = Plan::hover(&s);
        let r = assemble_subproblem(&plan, &dc, &s, &AssembleOptions::default());
        assert!(matches!(r, Err(Error::LinearizationPoint(_))));
    }

    #[test]
    fn coincident_uavs_use_a_perturbed_direction() {
        let a = fallback_direction(0, 1, 3);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a, fallback_direction(0, 1, 3));
    }
}
