//! Convex-concave procedure: start from the SDR point, repeatedly linearize
//! the concave parts and solve the convex restriction, then round the
//! cooperation pattern and re-solve the beamformers.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::channel::{CVector, ChannelBlock};
use crate::cone::{self, SolveStatus, SolverSettings};
use crate::dcp::{assemble_subproblem, build_dc_set, AssembleOptions, DcConstraintSet};
use crate::error::{Error, Result};
use crate::model::{check_constraints, objective, Plan, QosSpec};
use crate::scenario::Scenario;
use crate::sdr::{self, InitConfig, InitReport};

/// Stopping tolerance on the objective decrease.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    /// Fixed value in watts.
    Absolute(f64),
    /// Multiple of the initial objective.
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcpSettings {
    pub epsilon: Tolerance,
    pub max_iters: usize,
    /// Overrides the scenario's `beta` when set.
    pub beta: Option<f64>,
    /// Watts; `None` means `1e-6 * p_uav_max`.
    pub q_threshold: Option<f64>,
    pub polish: bool,
    pub solver: SolverSettings,
    pub init: InitConfig,
}

impl Default for CcpSettings {
    fn default() -> Self {
        Self {
            epsilon: Tolerance::Relative(1e-3),
            max_iters: 50,
            beta: None,
            q_threshold: None,
            polish: true,
            solver: SolverSettings::default(),
            init: InitConfig::default(),
        }
    }
}

impl CcpSettings {
    pub fn validate(&self) -> Result<()> {
        let eps_ok = match self.epsilon {
            Tolerance::Absolute(e) | Tolerance::Relative(e) => e > 0.0,
        };
        if !eps_ok {
            return Err(Error::InvalidParams("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParams(format!("beta must be positive, got {b}")));
            }
        }
        if let Some(q) = self.q_threshold {
            if !(q > 0.0) {
                return Err(Error::InvalidParams(format!("q_threshold must be positive, got {q}")));
            }
        }
        self.init.validate()
    }

    pub fn q_threshold_for(&self, s: &Scenario) -> f64 {
        self.q_threshold.unwrap_or(1e-6 * s.params.p_uav_max)
    }

    /// Slack allowed on each descent step.
    pub fn descent_slack(&self, f: f64) -> f64 {
        10.0 * (self.solver.abs_tol + self.solver.rel_tol * f.abs())
    }
}

/// Status of an iterate that was solved but not accepted.
pub const REJECTED: &str = "rejected";
/// Status of a step taken from a solve that stalled short of the gap
/// tolerance with a primal-feasible point.
pub const INEXACT: &str = "inexact";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective_w: f64,
    pub max_dc_violation: f64,
    pub status: String,
    pub seconds: f64,
}

impl IterRecord {
    /// Whether this row is an iterate the procedure moved to.
    pub fn accepted(&self) -> bool {
        self.status == "init" || self.status == INEXACT || self.status == SolveStatus::Optimal.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Tolerance,
    IterationLimit,
    SolverFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcpTrace {
    /// Entry 0 is the initial point.
    pub records: Vec<IterRecord>,
    pub epsilon: f64,
    pub stop: StopReason,
    pub init: InitReport,
    /// `Some(false)` when polishing failed and the raw iterate was kept.
    pub polished: Option<bool>,
}

impl CcpTrace {
    /// Number of subproblems solved, including a failed last one.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Tolerance && self.polished != Some(false)
    }

    /// Objectives of the accepted iterates, starting with the initial point.
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.accepted()).map(|r| r.objective_w).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn with_beta(s: &Scenario, beta: Option<f64>) -> Scenario {
    let mut s = s.clone();
    if let Some(b) = beta {
        s.params.beta = b;
    }
    s
}

/// Proposed scheme: SDR start, CCP iterations, then rounding and polish.
pub fn run(s: &Scenario, block: &ChannelBlock, qos: &QosSpec, settings: &CcpSettings) -> Result<(Plan, CcpTrace)> {
    settings.validate()?;
    let s = with_beta(s, settings.beta);
    let (x0, report) = sdr::initialize(&s, block, qos, &settings.init)?;
    run_from(x0, report, &s, block, qos, settings, &AssembleOptions::default())
}

/// Iterate from a given feasible point with parts of the decision space
/// optionally frozen.
pub fn run_from(
    x0: Plan,
    init: InitReport,
    s: &Scenario,
    block: &ChannelBlock,
    qos: &QosSpec,
    settings: &CcpSettings,
    opts: &AssembleOptions,
) -> Result<(Plan, CcpTrace)> {
    settings.validate()?;
    let s = with_beta(s, settings.beta);
    let s = &s;
    let dc = build_dc_set(s, block, qos)?;
    let f0 = objective(&x0, s).weighted_total;
    let epsilon = match settings.epsilon {
        Tolerance::Absolute(e) => e,
        Tolerance::Relative(r) => r * f0,
    };
    let mut records = vec![IterRecord {
        iter: 0,
        objective_w: f0,
        max_dc_violation: dc.max_dc_violation(&x0, s),
        status: "init".into(),
        seconds: 0.0,
    }];
    let mut x = x0;
    let mut f = f0;
    let mut stop = StopReason::IterationLimit;
    for m in 1..=settings.max_iters {
        let started = Instant::now();
        let step = step(&x, &dc, s, settings, opts);
        let seconds = started.elapsed().as_secs_f64();
        let (next, status) = match step {
            Ok(r) => r,
            Err(e) => {
                warn!("iteration {m}: {e}");
                (None, e.to_string())
            }
        };
        let Some(next) = next else {
            records.push(IterRecord {
                iter: m,
                objective_w: f,
                max_dc_violation: dc.max_dc_violation(&x, s),
                status,
                seconds,
            });
            stop = StopReason::SolverFailure;
            break;
        };
        let f_next = objective(&next, s).weighted_total;
        let viol = dc.max_dc_violation(&next, s);
        debug!("iteration {m}: objective {f_next:.6e}, dc violation {viol:.2e}");
        let ascent = f_next > f + settings.descent_slack(f);
        let infeasible = viol > ITERATE_TOL || dc.max_convex_violation(&next, s) > ITERATE_TOL;
        records.push(IterRecord {
            iter: m,
            objective_w: f_next,
            max_dc_violation: viol,
            status: if ascent || infeasible { REJECTED.into() } else { status },
            seconds,
        });
        if ascent || infeasible {
            // keep the previous iterate; an ascent means no decrease is left
            stop = if infeasible { StopReason::SolverFailure } else { StopReason::Tolerance };
            break;
        }
        let error = f - f_next;
        x = next;
        f = f_next;
        if error <= epsilon {
            stop = StopReason::Tolerance;
            break;
        }
    }
    let mut trace = CcpTrace {
        records,
        epsilon,
        stop,
        init,
        polished: None,
    };
    if settings.polish {
        let q = match &opts.freeze_coop {
            Some(q) => q.clone(),
            None => {
                let mut rounded = x.clone();
                let mut q = extract_coop(&mut rounded, settings.q_threshold_for(s));
                cover_users(&x, &mut q);
                q
            }
        };
        let (plan, ok) = polish(&x, &q, s, block, qos, &settings.init)?;
        trace.polished = Some(ok);
        x = plan;
    }
    Ok((x, trace))
}

/// Solver tolerances tried in turn when a subproblem stalls.
const TOLERANCE_LADDER: [f64; 2] = [1e-7, 1e-6];

/// DC violation above which an iterate is not accepted.
pub const ITERATE_TOL: f64 = 1e-6;

/// One linearize-and-solve step. `Ok((None, status))` on a non-optimal solve.
fn step(
    x: &Plan,
    dc: &DcConstraintSet,
    s: &Scenario,
    settings: &CcpSettings,
    opts: &AssembleOptions,
) -> Result<(Option<Plan>, String)> {
    let sub = assemble_subproblem(x, dc, s, opts)?;
    let mut solver = settings.solver;
    let mut sol = cone::solve(&sub.program, &solver)?;
    for tol in TOLERANCE_LADDER {
        if sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Infeasible {
            break;
        }
        if tol <= solver.abs_tol.max(solver.rel_tol) {
            continue;
        }
        debug!("subproblem {} at tol {:.0e}; retrying at {tol:.0e}", sol.status, solver.abs_tol);
        solver.abs_tol = solver.abs_tol.max(tol);
        solver.rel_tol = solver.rel_tol.max(tol);
        sol = cone::solve(&sub.program, &solver)?;
    }
    match sol.status {
        SolveStatus::Optimal => Ok((Some(sub.extract(&sol.primal, x)), sol.status.to_string())),
        // a stalled gap with a feasible primal point is still a valid step;
        // the caller checks feasibility and descent
        SolveStatus::NumericalLimit | SolveStatus::IterationLimit
            if sol.primal_residual <= ITERATE_TOL && !sol.primal.is_empty() =>
        {
            debug!("accepting {} point with primal residual {:.1e}", sol.status, sol.primal_residual);
            Ok((Some(sub.extract(&sol.primal, x)), INEXACT.into()))
        }
        _ => Ok((None, sol.status.to_string())),
    }
}

/// Binary cooperation from beam powers. Beams at or below the threshold are
/// zeroed in place.
pub fn extract_coop(plan: &mut Plan, q_threshold: f64) -> Vec<Vec<bool>> {
    let (lc, kc, tc) = (plan.num_uavs, plan.num_users, plan.num_slots);
    let mut q = vec![vec![false; kc]; lc];
    for l in 0..lc {
        for k in 0..kc {
            for t in 1..=tc {
                let w = plan.w_mut(l, k, t);
                if w.norm_squared() > q_threshold {
                    q[l][k] = true;
                } else {
                    *w = CVector::zeros(w.len());
                }
            }
        }
    }
    plan.coop = q.clone();
    q
}

/// Users left without a serving UAV by rounding get the UAV that sent them
/// the most power.
fn cover_users(plan: &Plan, q: &mut [Vec<bool>]) {
    for k in 0..plan.num_users {
        if (0..plan.num_uavs).any(|l| q[l][k]) {
            continue;
        }
        let power = |l: usize| (1..=plan.num_slots).map(|t| plan.w(l, k, t).norm_squared()).sum::<f64>();
        let best = (0..plan.num_uavs).max_by(|&a, &b| power(a).total_cmp(&power(b)));
        if let Some(l) = best.filter(|&l| power(l) > 0.0) {
            debug!("user {k} lost every link in rounding; keeping UAV {l}");
            q[l][k] = true;
        }
    }
}

/// Re-solve the beamformers with trajectory and binary cooperation fixed.
/// Returns the input plan and `false` when that fails.
pub fn polish(
    plan: &Plan,
    q: &[Vec<bool>],
    s: &Scenario,
    block: &ChannelBlock,
    qos: &QosSpec,
    cfg: &InitConfig,
) -> Result<(Plan, bool)> {
    let fallback = |why: &str| {
        warn!("polish failed ({why}); keeping the unpolished plan");
        (plan.clone(), false)
    };
    let solved = match sdr::solve_beamforming(&plan.trajectory, q, block, s, qos, cfg) {
        Ok(r) => r,
        Err(Error::RankOne { .. }) | Err(Error::Solver(_)) => None,
        Err(e) => return Err(e),
    };
    let Some((polished, _)) = solved else {
        return Ok(fallback("relaxation infeasible"));
    };
    let report = check_constraints(&polished, block, s, qos, 1e-6);
    if !report.is_feasible() {
        return Ok(fallback(&format!("violates {:?}", report.violated())));
    }
    Ok((polished, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_block;
    use crate::scenario::{generate_scenario, Layout, SimParams};
    use num_complex::Complex64;

    fn desk(seed: u64) -> (Scenario, ChannelBlock, QosSpec) {
        let s = generate_scenario(&SimParams::desk(), &Layout::default(), seed).unwrap();
        let b = draw_block(&s, 0);
        let q = QosSpec::from_params(&s.params);
        (s, b, q)
    }

    #[test]
    fn descent_and_iterate_feasibility() {
        let (s, b, qos) = desk(3);
        let settings = CcpSettings::default();
        let (plan, trace) = run(&s, &b, &qos, &settings).unwrap();
        assert!(trace.iterations() >= 1);
        assert!(trace.iterations() <= settings.max_iters);
        for w in trace.objectives().windows(2) {
            assert!(w[1] <= w[0] + settings.descent_slack(w[0]), "{:?}", trace.records);
        }
        for r in trace.records.iter().filter(|r| r.accepted()) {
            assert!(r.max_dc_violation <= ITERATE_TOL, "{r:?}");
        }
        assert_eq!(trace.polished, Some(true));
        assert!(check_constraints(&plan, &b, &s, &qos, 1e-6).is_feasible());
        let floor: f64 = s.params.weights.alpha_l.iter().sum::<f64>() * s.params.nav_c1 * s.params.num_slots as f64;
        assert!(objective(&plan, &s).weighted_total >= floor);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_solve() {
        let (s, b, qos) = desk(4);
        let settings = CcpSettings {
            epsilon: Tolerance::Absolute(f64::INFINITY),
            polish: false,
            ..Default::default()
        };
        let (_, trace) = run(&s, &b, &qos, &settings).unwrap();
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.stop, StopReason::Tolerance);
        assert_eq!(trace.polished, None);
    }

    #[test]
    fn settings_are_validated() {
        let bad = [
            CcpSettings { epsilon: Tolerance::Absolute(0.0), ..Default::default() },
            CcpSettings { max_iters: 0, ..Default::default() },
            CcpSettings { q_threshold: Some(0.0), ..Default::default() },
            CcpSettings { beta: Some(-1.0), ..Default::default() },
        ];
        for b in bad {
            assert!(b.validate().is_err());
        }
        assert!(CcpSettings::default().validate().is_ok());
    }

    #[test]
    fn extract_coop_cases() {
        let (s, _, _) = desk(0);
        let mut zero = Plan::hover(&s);
        let q = extract_coop(&mut zero, 1e-6);
        assert!(q.iter().flatten().all(|v| !v));

        let mut one = Plan::hover(&s);
        one.w_mut(1, 0, 2)[0] = Complex64::new(s.params.p_uav_max.sqrt(), 0.0);
        let q = extract_coop(&mut one, 1e-6);
        let active: Vec<(usize, usize)> = (0..3)
            .flat_map(|l| (0..2).map(move |k| (l, k)))
            .filter(|&(l, k)| q[l][k])
            .collect();
        assert_eq!(active, vec![(1, 0)]);
    }

    #[test]
    fn zeroing_stays_within_power_bound() {
        let (s, _, _) = desk(0);
        let thr = 1e-4;
        let mut plan = Plan::hover(&s);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        for w in plan.w_data.iter_mut() {
            let p: f64 = rand::Rng::random_range(&mut rng, 0.0..2.0 * thr);
            w[0] = Complex64::new(p.sqrt(), 0.0);
        }
        let before = objective(&plan, &s).weighted_total;
        extract_coop(&mut plan, thr);
        let after = objective(&plan, &s).weighted_total;
        let bound = (plan.num_uavs * plan.num_users * plan.num_slots) as f64 * thr;
        assert!(before - after >= 0.0);
        assert!(before - after <= bound);
    }

    #[test]
    fn polish_fixed_point_and_fallback() {
        let (s, b, qos) = desk(1);
        let cfg = InitConfig::default();
        let (x0, _) = sdr::initialize(&s, &b, &qos, &cfg).unwrap();
        let f0 = objective(&x0, &s).weighted_total;
        let (p, ok) = polish(&x0, &x0.coop, &s, &b, &qos, &cfg).unwrap();
        assert!(ok);
        let f1 = objective(&p, &s).weighted_total;
        assert!((f1 - f0).abs() <= 1e-6 * f0, "{f0} {f1}");

        let mut zeroed = x0.clone();
        let q = extract_coop(&mut zeroed, 1e3);
        assert!(q.iter().flatten().all(|v| !v));
        let (p, ok) = polish(&zeroed, &q, &s, &b, &qos, &cfg).unwrap();
        assert!(!ok);
        assert!(p.w_data.iter().all(|w| w.norm_squared() == 0.0));
    }

    #[test]
    fn rounding_keeps_every_user_served() {
        let (s, _, _) = desk(0);
        let mut plan = Plan::hover(&s);
        plan.w_mut(0, 0, 1)[0] = Complex64::new(1e-2, 0.0);
        plan.w_mut(2, 1, 3)[0] = Complex64::new(1e-4, 0.0);
        plan.w_mut(1, 1, 3)[0] = Complex64::new(2e-4, 0.0);
        let mut rounded = plan.clone();
        let mut q = extract_coop(&mut rounded, 1e-6);
        assert!(!q[1][1] && !q[2][1]);
        cover_users(&plan, &mut q);
        assert_eq!(q, vec![vec![true, false], vec![false, true], vec![false, false]]);
    }

    #[test]
    fn trace_csv_header() {
        let (s, b, qos) = desk(4);
        let settings = CcpSettings {
            epsilon: Tolerance::Absolute(f64::INFINITY),
            polish: false,
            ..Default::default()
        };
        let (_, trace) = run(&s, &b, &qos, &settings).unwrap();
        let text = trace.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,objective_w,max_dc_violation,status,seconds"));
        assert!(lines.next().unwrap().starts_with("0,"));
        assert!(lines.next().unwrap().contains(",optimal,"));
    }
}
