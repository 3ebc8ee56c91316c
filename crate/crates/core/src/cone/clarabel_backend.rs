use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{BackendResult, Cone, Normalized, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const REDUCED_TOL: f64 = 1e-6;

pub(crate) fn solve(p: &Normalized, settings: &SolverSettings) -> Result<BackendResult> {
    let m = p.rows.len();
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::with_capacity(m);
    for (i, (terms, constant)) in p.rows.iter().enumerate() {
        for &(j, a) in terms {
            // Clarabel: s = b - A x in K
            ri.push(i);
            ci.push(j);
            vals.push(-a);
        }
        b.push(*constant);
    }
    let a = CscMatrix::new_from_triplets(m, p.n, ri, ci, vals);
    let pm = CscMatrix::new_from_triplets(p.n, p.n, vec![], vec![], vec![]);
    let cones: Vec<SupportedConeT<f64>> = p
        .cones
        .iter()
        .map(|c| match *c {
            Cone::Zero(n) => Ok(SupportedConeT::ZeroConeT(n)),
            Cone::NonNegative(n) => Ok(SupportedConeT::NonnegativeConeT(n)),
            Cone::SecondOrder(n) => Ok(SupportedConeT::SecondOrderConeT(n)),
            Cone::Exponential => Ok(SupportedConeT::ExponentialConeT()),
            Cone::Power(a) => Ok(SupportedConeT::PowerConeT(a)),
            other => Err(Error::Capability(format!("cone {other} not handled by Clarabel"))),
        })
        .collect::<Result<_>>()?;

    let s = DefaultSettings {
        max_iter: settings.max_iters as u32,
        tol_gap_abs: settings.abs_tol,
        tol_gap_rel: settings.rel_tol,
        tol_feas: settings.abs_tol.max(settings.rel_tol),
        verbose: log::log_enabled!(log::Level::Trace),
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pm, &p.c, &a, &b, &cones, s)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let gap = (sol.obj_val - sol.obj_val_dual).abs();
    let rel_gap = gap / sol.obj_val.abs().min(sol.obj_val_dual.abs()).max(1.0);
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        // reduced accuracy, still far inside what the callers need
        SolverStatus::AlmostSolved
            if sol.r_prim <= REDUCED_TOL && sol.r_dual <= REDUCED_TOL && rel_gap <= REDUCED_TOL =>
        {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalLimit,
    };
    Ok(BackendResult {
        status,
        y: sol.x.clone(),
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        gap: if gap.is_finite() { gap } else { f64::INFINITY },
        iterations: sol.iterations as usize,
    })
}
