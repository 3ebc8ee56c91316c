//! Feasible starting point: fixed trajectory and cooperation, per-slot
//! semidefinite relaxation of the beamforming problem, rank-one extraction
//! and slack construction.

use log::{debug, warn};
use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{path_gain, CMatrix, CVector, ChannelBlock};
use crate::cone::{self, Affine, ConeProgram, ProgramBuilder, SolveStatus, SolverSettings, Var};
use crate::dcp::{build_dc_set, coop_indicator, SlackVars, TAU_F_FLOOR, TAU_Q_MAX};
use crate::error::{Error, Result};
use crate::model::{sinr_fronthaul, Plan, QosSpec};
use crate::scenario::{Point, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryMode {
    Hover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoopMode {
    NearestUav,
    FullCooperation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    pub trajectory_mode: TrajectoryMode,
    pub coop_mode: CoopMode,
    /// Largest accepted `lambda_2 / lambda_1`.
    pub rank1_tol: f64,
    /// Gaussian draws of the randomization fallback.
    pub randomizations: usize,
    pub solver: SolverSettings,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            trajectory_mode: TrajectoryMode::Hover,
            coop_mode: CoopMode::NearestUav,
            rank1_tol: 1e-6,
            randomizations: 32,
            solver: SolverSettings { abs_tol: 1e-10, rel_tol: 1e-10, max_iters: 200 },
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rank1_tol > 0.0 && self.rank1_tol < 1.0) {
            return Err(Error::Config(format!("rank1_tol must lie in (0, 1), got {}", self.rank1_tol)));
        }
        Ok(())
    }
}

/// Trajectory `d[l][0..=T]` and cooperation `q[l][k]` of the starting point.
pub fn initial_trajectory_and_coop(s: &Scenario, cfg: &InitConfig) -> Result<(Vec<Vec<Point>>, Vec<Vec<bool>>)> {
    cfg.validate()?;
    let p = &s.params;
    let traj = match cfg.trajectory_mode {
        TrajectoryMode::Hover => s
            .geometry
            .uav_start_positions
            .iter()
            .map(|d| vec![*d; p.num_slots + 1])
            .collect(),
    };
    let q = match cfg.coop_mode {
        CoopMode::FullCooperation => vec![vec![true; p.num_users]; p.num_uavs],
        CoopMode::NearestUav => nearest_uav(s)?,
    };
    Ok((traj, q))
}

/// Closest UAV per user with at most `min(M, K)` users per UAV; overflow goes
/// to the next closest UAV with room.
pub fn nearest_uav(s: &Scenario) -> Result<Vec<Vec<bool>>> {
    let p = &s.params;
    let cap = p.uav_antennas.min(p.num_users);
    if p.num_users > p.num_uavs * cap {
        return Err(Error::Assignment(format!(
            "{} users exceed capacity {} x {}",
            p.num_users, p.num_uavs, cap
        )));
    }
    let g = &s.geometry;
    let mut pairs = Vec::with_capacity(p.num_uavs * p.num_users);
    for l in 0..p.num_uavs {
        for k in 0..p.num_users {
            pairs.push(((g.uav_start_positions[l] - g.user_positions[k]).norm(), l, k));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut q = vec![vec![false; p.num_users]; p.num_uavs];
    let mut load = vec![0usize; p.num_uavs];
    let mut served = vec![false; p.num_users];
    for (_, l, k) in pairs {
        if !served[k] && load[l] < cap {
            q[l][k] = true;
            load[l] += 1;
            served[k] = true;
        }
    }
    Ok(q)
}

/// Fronthaul SINR target used by the relaxation; UAVs without users keep a
/// small positive target so the fronthaul slack stays positive.
pub fn fronthaul_sdp_target(qos: &QosSpec, row: &[bool]) -> f64 {
    qos.fronthaul_target(row).max(TAU_F_FLOOR)
}

/// Hermitian matrix variable `X + iY` with `X` symmetric and `Y` skew.
#[derive(Clone, Debug)]
pub struct HermitianVar {
    pub n: usize,
    /// Upper triangle of `X`, column-major (`j(j+1)/2 + i`, `i <= j`).
    pub re: Vec<Var>,
    /// Strict upper triangle of `Y`, column-major (`j(j-1)/2 + i`, `i < j`).
    pub im: Vec<Var>,
}

impl HermitianVar {
    fn new(b: &mut ProgramBuilder, name: &str, n: usize, scale: f64) -> Self {
        let re = b.vars(&format!("{name}.re"), n * (n + 1) / 2, scale);
        let im = b.vars(&format!("{name}.im"), n * (n - 1) / 2, scale);
        Self { n, re, im }
    }

    fn x(&self, i: usize, j: usize) -> Affine {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.re[b * (b + 1) / 2 + a].into()
    }

    fn y(&self, i: usize, j: usize) -> Affine {
        if i == j {
            Affine::zero()
        } else if i < j {
            self.im[j * (j - 1) / 2 + i].into()
        } else {
            -Affine::from(self.im[i * (i - 1) / 2 + j])
        }
    }

    fn trace(&self) -> Affine {
        let mut e = Affine::zero();
        for i in 0..self.n {
            e += self.x(i, i);
        }
        e
    }

    /// `g^H W g` as a real affine form.
    fn quad(&self, g: &CVector) -> Affine {
        let mut e = Affine::zero();
        for i in 0..self.n {
            e += self.x(i, i) * g[i].norm_sqr();
            for j in i + 1..self.n {
                let c = g[i].conj() * g[j];
                e += self.x(i, j) * (2.0 * c.re) + self.y(i, j) * (-2.0 * c.im);
            }
        }
        e
    }

    /// `[[X, -Y], [Y, X]]` in the cone's upper-triangle order.
    fn psd_rows(&self) -> Vec<Affine> {
        let n = self.n;
        let mut rows = Vec::with_capacity(n * (2 * n + 1));
        for c in 0..2 * n {
            for r in 0..=c {
                let e = match (r < n, c < n) {
                    (true, true) => self.x(r, c),
                    (false, false) => self.x(r - n, c - n),
                    (true, false) => -self.y(r, c - n),
                    (false, true) => unreachable!("upper triangle only"),
                };
                rows.push(e);
            }
        }
        rows
    }

    pub fn value(&self, x: &[f64]) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, n, |i, j| Complex64::new(self.x(i, j).eval(x), self.y(i, j).eval(x)))
    }
}

/// A per-slot relaxation and the location of its matrix variables.
#[derive(Clone, Debug)]
pub struct InitSdp {
    pub program: ConeProgram,
    pub slot: usize,
    /// Per `(l, k)`; `None` when `q_{l,k} = 0`.
    pub w_data: Vec<Option<HermitianVar>>,
    pub w_fh: Vec<HermitianVar>,
}

/// Relative margin on the SINR constraints, absorbing solver tolerance.
const SINR_MARGIN: f64 = 1e-7;
const ALLOCATION_RETRY_TOL: f64 = 1e-8;
const RELAXATION_PRIMAL_TOL: f64 = 1e-6;

/// Semidefinite relaxation of the beamforming problem at slot `t` with the
/// trajectory and cooperation fixed.
pub fn build_init_sdp(
    traj: &[Vec<Point>],
    q: &[Vec<bool>],
    block: &ChannelBlock,
    s: &Scenario,
    qos: &QosSpec,
    t: usize,
) -> Result<InitSdp> {
    let p = &s.params;
    let g = &s.geometry;
    let (lc, kc) = (p.num_uavs, p.num_users);
    block.check_dims(p)?;
    if traj.len() != lc || traj.iter().any(|r| r.len() != p.num_slots + 1) || q.len() != lc {
        return Err(Error::Dimension("trajectory or cooperation shape".into()));
    }
    if t == 0 || t > p.num_slots {
        return Err(Error::Dimension(format!("slot {t} out of range")));
    }
    if !cone::supports_psd() {
        return Err(Error::Capability("semidefinite cones are not available".into()));
    }
    let s2 = p.noise_power();
    let pl_data = |l: usize, k: usize| {
        path_gain(p.antenna_gain_data, p.pathloss_exponent_data, (traj[l][t] - g.user_positions[k]).norm())
    };
    let pl_fh = |l: usize| {
        path_gain(p.antenna_gain_fh, p.pathloss_exponent_fh, (traj[l][t] - g.bs_position).norm())
    };
    let mut b = ProgramBuilder::new();
    let mut w_data = Vec::with_capacity(lc * kc);
    for l in 0..lc {
        for k in 0..kc {
            if !q[l][k] {
                w_data.push(None);
                continue;
            }
            let gain = pl_data(l, k) * block.g(l, k).norm_squared();
            let scale = (s2 * qos.gamma_min[k] / gain).min(p.p_uav_max);
            let h = HermitianVar::new(&mut b, &format!("W[{l},{k},{t}]"), p.uav_antennas, scale);
            b.psd(2 * h.n, h.psd_rows());
            w_data.push(Some(h));
        }
    }
    let mut w_fh = Vec::with_capacity(lc);
    let targets: Vec<f64> = q.iter().map(|row| fronthaul_sdp_target(qos, row)).collect();
    for l in 0..lc {
        let gain = pl_fh(l) * block.g_fh_tx[l].norm_squared() * block.g_fh_rx[l].norm_squared();
        let scale = (s2 * targets[l] / gain).min(p.p_bs_max);
        let h = HermitianVar::new(&mut b, &format!("WF[{l},{t}]"), p.bs_antennas, scale);
        b.psd(2 * h.n, h.psd_rows());
        w_fh.push(h);
    }

    let w = &p.weights;
    let mut obj = Affine::zero();
    for l in 0..lc {
        obj += w_fh[l].trace() * w.alpha_0;
        for k in 0..kc {
            if let Some(h) = &w_data[l * kc + k] {
                obj += h.trace() * w.alpha_l[l];
            }
        }
    }
    b.minimize(obj);

    // C1
    let mut bs = Affine::zero();
    for h in &w_fh {
        bs += h.trace();
    }
    b.le(bs, Affine::constant(p.p_bs_max));
    // C2, C4
    for l in 0..lc {
        let nav = p.nav_c1 + p.nav_c2 * (traj[l][t] - traj[l][t - 1]).norm();
        let mut tx = Affine::zero();
        for k in 0..kc {
            if let Some(h) = &w_data[l * kc + k] {
                tx += h.trace();
                b.le(h.trace(), Affine::constant(p.p_uav_max));
            }
        }
        if !tx.terms.is_empty() {
            b.le(tx, Affine::constant(p.p_uav_max - nav));
        }
    }
    // C5: sum_l PL (gamma_k g'W_lk g - sum_j g'W_lj g) >= s2
    for k in 0..kc {
        let gamma = 1.0 + 1.0 / qos.gamma_min[k];
        let mut e = Affine::zero();
        for l in 0..lc {
            let gk = block.g(l, k);
            let f = pl_data(l, k) / s2;
            for j in 0..kc {
                if let Some(h) = &w_data[l * kc + j] {
                    let c = if j == k { gamma - 1.0 } else { -1.0 };
                    e += h.quad(gk) * (c * f);
                }
            }
        }
        b.le(Affine::constant(1.0 + SINR_MARGIN), e);
    }
    // C6 with G G^H = ||g_rx||^2 g_tx g_tx^H
    for l in 0..lc {
        let gamma = 1.0 + 1.0 / targets[l];
        let f = pl_fh(l) * block.g_fh_rx[l].norm_squared() / s2;
        let tx = &block.g_fh_tx[l];
        let mut e = Affine::zero();
        for (j, h) in w_fh.iter().enumerate() {
            let c = if j == l { gamma - 1.0 } else { -1.0 };
            e += h.quad(tx) * (c * f);
        }
        b.le(Affine::constant(1.0 + SINR_MARGIN), e);
    }
    Ok(InitSdp { program: b.build(), slot: t, w_data, w_fh })
}

/// Principal component `sqrt(lambda_1) v_1` and the ratio `lambda_2/lambda_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rank1 {
    pub w: CVector,
    pub ratio: f64,
}

fn principal(w: &CMatrix) -> (CVector, f64, f64) {
    let h = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = order.get(1).map_or(0.0, |&i| eig.eigenvalues[i]);
    (eig.eigenvectors.column(order[0]).into_owned(), l1, l2)
}

pub fn extract_rank1(w: &CMatrix, tol: f64) -> Result<Rank1> {
    if w.nrows() != w.ncols() || w.nrows() == 0 {
        return Err(Error::Dimension("extract_rank1 needs a square matrix".into()));
    }
    let (v, l1, l2) = principal(w);
    if !(l1 > 0.0) {
        return Ok(Rank1 { w: CVector::zeros(w.nrows()), ratio: 0.0 });
    }
    let ratio = l2.max(0.0) / l1;
    if ratio > tol {
        return Err(Error::RankOne { ratio });
    }
    Ok(Rank1 { w: v * Complex64::from(l1.sqrt()), ratio })
}

/// Beamformers of one slot after relaxation, extraction and rescaling.
#[derive(Clone, Debug)]
pub struct SlotBeams {
    pub slot: usize,
    pub w_data: Vec<CVector>,
    pub w_fh: Vec<CVector>,
    /// `lambda_2/lambda_1` of every matrix carrying non-negligible power.
    pub ratios: Vec<f64>,
    pub fallback: bool,
    pub sdp_objective: f64,
}

/// Matrices with trace below this share of the slot's total power are
/// treated as switched off; their eigen-ratio carries no information.
const NEGLIGIBLE_TRACE: f64 = 1e-6;

/// Beam directions with optimal powers for the fixed trajectory and `q`.
/// Returns `None` when no power allocation meets the constraints.
fn allocate_powers(
    dirs_data: &[Option<CVector>],
    dirs_fh: &[CVector],
    traj: &[Vec<Point>],
    q: &[Vec<bool>],
    block: &ChannelBlock,
    s: &Scenario,
    qos: &QosSpec,
    t: usize,
    hint: (&[f64], &[f64]),
    solver: &SolverSettings,
) -> Result<Option<(Vec<CVector>, Vec<CVector>, f64)>> {
    let p = &s.params;
    let g = &s.geometry;
    let (lc, kc) = (p.num_uavs, p.num_users);
    let s2 = p.noise_power();
    let mut b = ProgramBuilder::new();
    let unit = |v: &CVector| {
        let n = v.norm();
        if n > 0.0 {
            v / Complex64::from(n)
        } else {
            v.clone()
        }
    };
    let ud: Vec<Option<CVector>> = dirs_data.iter().map(|d| d.as_ref().map(unit)).collect();
    let uf: Vec<CVector> = dirs_fh.iter().map(unit).collect();
    let pd: Vec<Option<Var>> = ud
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.as_ref().map(|_| {
                let v = b.var(format!("p[{i}]"), hint.0[i].max(1e-15));
                b.nonneg(v.into());
                b.le(v.into(), Affine::constant(p.p_uav_max));
                v
            })
        })
        .collect();
    let pf: Vec<Var> = (0..lc)
        .map(|l| {
            let v = b.var(format!("pf[{l}]"), hint.1[l].max(1e-15));
            b.nonneg(v.into());
            v
        })
        .collect();
    let w = &p.weights;
    let mut obj = Affine::zero();
    let mut bs = Affine::zero();
    for l in 0..lc {
        obj += Affine::term(pf[l], w.alpha_0);
        bs += pf[l].into();
        let mut tx = Affine::zero();
        for k in 0..kc {
            if let Some(v) = pd[l * kc + k] {
                obj += Affine::term(v, w.alpha_l[l]);
                tx += v.into();
            }
        }
        let nav = p.nav_c1 + p.nav_c2 * (traj[l][t] - traj[l][t - 1]).norm();
        if !tx.terms.is_empty() {
            b.le(tx, Affine::constant(p.p_uav_max - nav));
        }
    }
    b.le(bs, Affine::constant(p.p_bs_max));
    b.minimize(obj);
    for k in 0..kc {
        let gamma = 1.0 + 1.0 / qos.gamma_min[k];
        let mut e = Affine::zero();
        for l in 0..lc {
            let gk = block.g(l, k);
            let f = path_gain(p.antenna_gain_data, p.pathloss_exponent_data, (traj[l][t] - g.user_positions[k]).norm()) / s2;
            for j in 0..kc {
                if let (Some(v), Some(u)) = (pd[l * kc + j], &ud[l * kc + j]) {
                    let c = if j == k { gamma - 1.0 } else { -1.0 };
                    e += Affine::term(v, c * f * gk.dotc(u).norm_sqr());
                }
            }
        }
        b.le(Affine::constant(1.0 + SINR_MARGIN), e);
    }
    for l in 0..lc {
        let gamma = 1.0 + 1.0 / fronthaul_sdp_target(qos, &q[l]);
        let f = path_gain(p.antenna_gain_fh, p.pathloss_exponent_fh, (traj[l][t] - g.bs_position).norm())
            * block.g_fh_rx[l].norm_squared()
            / s2;
        let mut e = Affine::zero();
        for j in 0..lc {
            let c = if j == l { gamma - 1.0 } else { -1.0 };
            e += Affine::term(pf[j], c * f * block.g_fh_tx[l].dotc(&uf[j]).norm_sqr());
        }
        b.le(Affine::constant(1.0 + SINR_MARGIN), e);
    }
    let program = b.build();
    let mut sol = cone::solve(&program, solver)?;
    if matches!(sol.status, SolveStatus::NumericalLimit | SolveStatus::IterationLimit) {
        // the allocation is re-checked against the constraints by the caller
        let loose = SolverSettings { abs_tol: ALLOCATION_RETRY_TOL, rel_tol: ALLOCATION_RETRY_TOL, ..solver.clone() };
        debug!("slot {t}: power allocation stopped with {}, retrying at {ALLOCATION_RETRY_TOL:e}", sol.status);
        sol = cone::solve(&program, &loose)?;
    }
    if sol.status != SolveStatus::Optimal {
        debug!("slot {t}: power allocation stopped with {}", sol.status);
        return Ok(None);
    }
    let amp = |v: Var| Complex64::from(sol.primal[v.0].max(0.0).sqrt());
    let wd = ud
        .iter()
        .zip(&pd)
        .map(|(u, v)| match (u, v) {
            (Some(u), Some(v)) => u * amp(*v),
            _ => CVector::zeros(p.uav_antennas),
        })
        .collect();
    let wf = uf.iter().zip(&pf).map(|(u, v)| u * amp(*v)).collect();
    Ok(Some((wd, wf, sol.objective_value)))
}

fn gaussian_draw(w: &CMatrix, rng: &mut ChaCha8Rng) -> CVector {
    let n = w.nrows();
    let h = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut out = CVector::zeros(n);
    for i in 0..n {
        let lam = eig.eigenvalues[i].max(0.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2 * lam;
        out += eig.eigenvectors.column(i) * z;
    }
    out
}

/// Relaxation, extraction and power rescaling for slot `t`. `Ok(None)` means
/// the relaxation is infeasible.
pub fn solve_slot(
    traj: &[Vec<Point>],
    q: &[Vec<bool>],
    block: &ChannelBlock,
    s: &Scenario,
    qos: &QosSpec,
    t: usize,
    cfg: &InitConfig,
) -> Result<Option<SlotBeams>> {
    let sdp = build_init_sdp(traj, q, block, s, qos, t)?;
    let sol = cone::solve(&sdp.program, &cfg.solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        // directions only; the rescaled beams are checked on their own
        SolveStatus::NumericalLimit | SolveStatus::IterationLimit if sol.primal_residual <= RELAXATION_PRIMAL_TOL => {
            debug!("slot {t}: relaxation stopped with {}, primal residual {:.1e}", sol.status, sol.primal_residual);
        }
        SolveStatus::Infeasible => return Ok(None),
        other => {
            warn!("relaxation at slot {t} stopped with {other}");
            return Ok(None);
        }
    }
    let mats_d: Vec<Option<CMatrix>> = sdp.w_data.iter().map(|h| h.as_ref().map(|h| h.value(&sol.primal))).collect();
    let mats_f: Vec<CMatrix> = sdp.w_fh.iter().map(|h| h.value(&sol.primal)).collect();
    let tr = |m: &CMatrix| m.trace().re;
    let total: f64 = mats_d.iter().flatten().chain(&mats_f).map(tr).sum();

    let mut ratios = Vec::new();
    let mut rank_ok = true;
    let mut take = |m: &CMatrix| -> CVector {
        let (v, l1, l2) = principal(m);
        if tr(m) > NEGLIGIBLE_TRACE * total && l1 > 0.0 {
            let r = l2.max(0.0) / l1;
            ratios.push(r);
            if r > cfg.rank1_tol {
                rank_ok = false;
            }
        }
        v * Complex64::from(l1.max(0.0).sqrt())
    };
    let dirs_d: Vec<Option<CVector>> = mats_d.iter().map(|m| m.as_ref().map(|m| take(m))).collect();
    let dirs_f: Vec<CVector> = mats_f.iter().map(|m| take(m)).collect();
    let hint_d: Vec<f64> = mats_d.iter().map(|m| m.as_ref().map_or(0.0, tr)).collect();
    let hint_f: Vec<f64> = mats_f.iter().map(tr).collect();
    let hint = (hint_d.as_slice(), hint_f.as_slice());

    let mut best = allocate_powers(&dirs_d, &dirs_f, traj, q, block, s, qos, t, hint, &cfg.solver)?;
    debug!("slot {t}: eigen-ratios {ratios:?}, rescaling feasible: {}", best.is_some());
    let fallback = !rank_ok;
    if fallback {
        warn!("slot {t}: relaxation is not rank one, using Gaussian randomization");
        let mut rng = ChaCha8Rng::seed_from_u64(0x5d2_u64 ^ (t as u64) ^ block.block_index.rotate_left(17));
        for _ in 0..cfg.randomizations {
            let dd: Vec<Option<CVector>> =
                mats_d.iter().map(|m| m.as_ref().map(|m| gaussian_draw(m, &mut rng))).collect();
            let df: Vec<CVector> = mats_f.iter().map(|m| gaussian_draw(m, &mut rng)).collect();
            if let Some(c) = allocate_powers(&dd, &df, traj, q, block, s, qos, t, hint, &cfg.solver)? {
                if best.as_ref().map_or(true, |b| c.2 < b.2) {
                    best = Some(c);
                }
            }
        }
    }
    let Some((w_data, w_fh, _)) = best else {
        return Err(Error::Infeasible(format!("no rescaled beamformer meets the constraints at slot {t}")));
    };
    debug!("slot {t}: relaxation objective {:.6e}", sol.objective_value);
    Ok(Some(SlotBeams { slot: t, w_data, w_fh, ratios, fallback, sdp_objective: sol.objective_value }))
}

/// Tight slacks for a plan whose beams, positions and cooperation are set.
pub fn construct_slacks(plan: &Plan, block: &ChannelBlock, s: &Scenario, beta: f64) -> SlackVars {
    let p = &s.params;
    let (lc, kc, tc) = (plan.num_uavs, plan.num_users, plan.num_slots);
    let mut sl = SlackVars::zeros(lc, kc, tc);
    for l in 0..lc {
        for k in 0..kc {
            let mut peak = CVector::zeros(p.uav_antennas);
            for t in 1..=tc {
                let d = (plan.pos(l, t) - s.geometry.user_positions[k]).norm();
                sl.tau_data[(l * kc + k) * tc + t - 1] = d.powf(p.pathloss_exponent_data) / p.antenna_gain_data;
                if plan.w(l, k, t).norm_squared() > peak.norm_squared() {
                    peak = plan.w(l, k, t).clone();
                }
            }
            sl.tau_q[l * kc + k] = coop_indicator(beta, &peak).min(TAU_Q_MAX);
        }
        sl.tau_fh[l] = (1..=tc)
            .map(|t| sinr_fronthaul(plan, block, s, l, t))
            .fold(f64::INFINITY, f64::min)
            .max(TAU_F_FLOOR);
    }
    sl
}

/// Diagnostics of the initialization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitReport {
    pub coop_mode: Option<CoopMode>,
    pub ratios: Vec<f64>,
    pub fallback_events: usize,
    pub sdp_objective: f64,
}

impl InitReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Beamformers for all slots with the trajectory and cooperation fixed.
/// `Ok(None)` when some slot's relaxation is infeasible.
pub fn solve_beamforming(
    traj: &[Vec<Point>],
    q: &[Vec<bool>],
    block: &ChannelBlock,
    s: &Scenario,
    qos: &QosSpec,
    cfg: &InitConfig,
) -> Result<Option<(Plan, InitReport)>> {
    let tc = s.params.num_slots;
    let slots: Vec<Result<Option<SlotBeams>>> = (1..=tc)
        .into_par_iter()
        .map(|t| solve_slot(traj, q, block, s, qos, t, cfg))
        .collect();
    let mut plan = Plan::hover(s);
    plan.trajectory = traj.to_vec();
    plan.coop = q.to_vec();
    let mut report = InitReport::default();
    let kc = plan.num_users;
    for r in slots {
        let Some(sb) = r? else {
            return Ok(None);
        };
        let t = sb.slot;
        for l in 0..plan.num_uavs {
            for k in 0..kc {
                *plan.w_mut(l, k, t) = sb.w_data[l * kc + k].clone();
            }
            *plan.wf_mut(l, t) = sb.w_fh[l].clone();
        }
        report.ratios.extend(sb.ratios);
        report.fallback_events += usize::from(sb.fallback);
        report.sdp_objective += sb.sdp_objective;
    }
    plan.slacks = construct_slacks(&plan, block, s, s.params.beta);
    Ok(Some((plan, report)))
}

/// Feasible starting point for the iterative procedure. Tries the configured
/// cooperation first and full cooperation second.
pub fn initialize(s: &Scenario, block: &ChannelBlock, qos: &QosSpec, cfg: &InitConfig) -> Result<(Plan, InitReport)> {
    let (traj, _) = initial_trajectory_and_coop(s, &InitConfig { coop_mode: CoopMode::FullCooperation, ..cfg.clone() })?;
    initialize_with(s, block, qos, cfg, &traj, None)
}

/// Starting point on a given trajectory. With `q` given only that
/// cooperation is tried; otherwise the fallback chain applies.
pub fn initialize_with(
    s: &Scenario,
    block: &ChannelBlock,
    qos: &QosSpec,
    cfg: &InitConfig,
    traj: &[Vec<Point>],
    q: Option<&[Vec<bool>]>,
) -> Result<(Plan, InitReport)> {
    cfg.validate()?;
    let frozen = q.is_some();
    let mut candidates: Vec<(Option<CoopMode>, Vec<Vec<bool>>)> = Vec::new();
    match q {
        Some(q) => candidates.push((None, q.to_vec())),
        None => {
            let mut modes = vec![cfg.coop_mode];
            if cfg.coop_mode != CoopMode::FullCooperation {
                modes.push(CoopMode::FullCooperation);
            }
            for mode in modes {
                let c = InitConfig { coop_mode: mode, ..cfg.clone() };
                match initial_trajectory_and_coop(s, &c) {
                    Ok((_, q)) => candidates.push((Some(mode), q)),
                    Err(Error::Assignment(m)) => debug!("assignment failed: {m}"),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    for (mode, q) in candidates {
        let Some((plan, mut report)) = solve_beamforming(traj, &q, block, s, qos, cfg)? else {
            debug!("relaxation infeasible with {mode:?}");
            continue;
        };
        report.coop_mode = mode;
        let mut plan = plan;
        if frozen {
            plan.slacks.tau_q = q.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        }
        let dc = build_dc_set(s, block, qos)?;
        if let Some((name, v)) = dc.first_violation_with(&plan, s, 1e-6, frozen) {
            return Err(Error::Initialization { constraint: name, violation: v });
        }
        return Ok((plan, report));
    }
    Err(Error::Infeasible("relaxation infeasible for every cooperation choice".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_block;
    use crate::model::{check_constraints, objective};
    use crate::scenario::{generate_scenario, Layout, SimParams};
    use rand::Rng;

    fn desk(seed: u64) -> (Scenario, ChannelBlock, QosSpec) {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), seed).unwrap();
        let b = draw_block(&s, 0);
        let q = QosSpec::from_params(&s.params);
        (s, b, q)
    }

    #[test]
    fn hover_and_full_cooperation() {
        let (s, _, _) = desk(1);
        let cfg = InitConfig { coop_mode: CoopMode::FullCooperation, ..Default::default() };
        let (traj, q) = initial_trajectory_and_coop(&s, &cfg).unwrap();
        assert!(q.iter().flatten().all(|&v| v));
        for (l, row) in traj.iter().enumerate() {
            assert!(row.iter().all(|d| *d == s.geometry.uav_start_positions[l]));
        }
    }

    #[test]
    fn nearest_uav_assigns_closest() {
        let (s, _, _) = desk(2);
        let mut s = s;
        s.params.num_users = 1;
        s.params.num_uavs = 2;
        s.geometry.user_positions = vec![Point::new(0.0, 0.0, 0.0)];
        s.geometry.uav_start_positions = vec![Point::new(0.0, 200.0, 0.0), Point::new(0.0, 100.0, 0.0)];
        let q = nearest_uav(&s).unwrap();
        assert_eq!(q, vec![vec![false], vec![true]]);
    }

    #[test]
    fn nearest_uav_respects_capacity() {
        let (mut s, _, _) = desk(3);
        s.params.uav_antennas = 1;
        let q = nearest_uav(&s).unwrap();
        assert!(q.iter().all(|r| r.iter().filter(|&&v| v).count() <= 1));
        for k in 0..s.params.num_users {
            assert_eq!(q.iter().filter(|r| r[k]).count(), 1);
        }
        s.params.num_users = 4;
        s.geometry.user_positions.extend(s.geometry.user_positions.clone());
        assert!(matches!(nearest_uav(&s), Err(Error::Assignment(_))));
    }

    #[test]
    fn rank1_of_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let w = CVector::from_fn(n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let m = &w * w.adjoint();
            let r = extract_rank1(&m, 1e-6).unwrap();
            let phase = r.w.dotc(&w);
            let phase = phase / phase.norm();
            assert!((&r.w * phase - &w).norm() <= 1e-9);
            assert!((r.w.norm_squared() - w.norm_squared()).abs() <= 1e-12 * w.norm_squared().max(1.0));
        }
        let err = extract_rank1(&CMatrix::identity(3, 3), 1e-6).unwrap_err();
        assert!(matches!(err, Error::RankOne { ratio } if (ratio - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hermitian_embedding_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = ProgramBuilder::new();
        let h = HermitianVar::new(&mut b, "W", 3, 1.0);
        let x: Vec<f64> = (0..b.num_vars()).map(|_| rng.random::<f64>() - 0.5).collect();
        let w = h.value(&x);
        assert!((&w - w.adjoint()).norm() < 1e-15);
        let g = CVector::from_fn(3, |_, _| Complex64::new(rng.random(), rng.random()));
        let direct = (g.adjoint() * &w * &g)[(0, 0)];
        assert!((h.quad(&g).eval(&x) - direct.re).abs() < 1e-12);
        assert!(direct.im.abs() < 1e-12);
    }

    #[test]
    fn single_link_closed_form() {
        let mut params = SimParams::desk();
        params.num_uavs = 1;
        params.num_users = 1;
        params.uav_antennas = 1;
        params.bs_antennas = 1;
        params.weights = crate::scenario::Weights::uniform(1);
        let s = generate_scenario(&params, &Layout::default(), 8).unwrap();
        let b = draw_block(&s, 0);
        let qos = QosSpec::from_params(&s.params);
        let traj = vec![vec![s.geometry.uav_start_positions[0]; s.params.num_slots + 1]];
        let q = vec![vec![true]];
        let sdp = build_init_sdp(&traj, &q, &b, &s, &qos, 1).unwrap();
        let sol = cone::solve(&sdp.program, &InitConfig::default().solver).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let w = sdp.w_data[0].as_ref().unwrap().value(&sol.primal)[(0, 0)].re;
        let p = &s.params;
        let d = (traj[0][1] - s.geometry.user_positions[0]).norm();
        let oracle = p.noise_power() * qos.gamma_min[0] * d.powf(p.pathloss_exponent_data)
            / (p.antenna_gain_data * b.g(0, 0).norm_squared());
        assert!((w / (oracle * (1.0 + SINR_MARGIN)) - 1.0).abs() < 1e-6, "{w} vs {oracle}");
    }

    #[test]
    fn zero_cooperation_links_have_no_variables() {
        let (s, b, qos) = desk(4);
        let mut q = vec![vec![false; 2]; 3];
        q[0][0] = true;
        q[1][1] = true;
        let traj = initial_trajectory_and_coop(&s, &InitConfig::default()).unwrap().0;
        let sdp = build_init_sdp(&traj, &q, &b, &s, &qos, 1).unwrap();
        assert_eq!(sdp.w_data.iter().filter(|h| h.is_some()).count(), 2);
    }

    #[test]
    fn infeasible_qos_is_reported() {
        let (mut s, b, qos) = desk(4);
        s.params.p_uav_max = s.params.nav_c1 + 1e-12;
        let (traj, q) = initial_trajectory_and_coop(&s, &InitConfig::default()).unwrap();
        let sdp = build_init_sdp(&traj, &q, &b, &s, &qos, 1).unwrap();
        let sol = cone::solve(&sdp.program, &InitConfig::default().solver).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(matches!(initialize(&s, &b, &qos, &InitConfig::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn initial_point_is_feasible_and_rank_one() {
        for seed in 0..3 {
            let (s, b, qos) = desk(seed);
            let (plan, report) = initialize(&s, &b, &qos, &InitConfig::default()).unwrap();
            assert_eq!(report.fallback_events, 0);
            assert!(report.max_ratio() <= 1e-6, "{}", report.max_ratio());
            let dc = build_dc_set(&s, &b, &qos).unwrap();
            assert!(dc.max_dc_violation(&plan, &s) <= 1e-6);
            assert!(check_constraints(&plan, &b, &s, &qos, 1e-6).is_feasible());
            // relaxation value bounds the rank-one plan's transmit power
            let r = objective(&plan, &s);
            let nav: f64 = r.per_slot_uav_nav.iter().zip(&s.params.weights.alpha_l)
                .map(|(v, a)| a * v.iter().sum::<f64>()).sum();
            assert!(report.sdp_objective <= (r.weighted_total - nav) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn slacks_of_switched_off_links() {
        let (s, b, qos) = desk(6);
        let (plan, _) = initialize(&s, &b, &qos, &InitConfig::default()).unwrap();
        for l in 0..plan.num_uavs {
            for k in 0..plan.num_users {
                let tq = plan.slacks.tau_q[l * plan.num_users + k];
                if !plan.coop[l][k] {
                    assert_eq!(tq, 0.0);
                }
                assert!(tq <= f64::from(u8::from(plan.coop[l][k])));
            }
        }
    }
}
