//! Solver-agnostic conic program representation.
//!
//! A constraint is a block of affine rows `r = a x + c` together with the cone
//! `r` must lie in. Programs without PSD blocks go to Clarabel; PSD programs
//! go to the in-house interior-point solver in [`sdp`].

mod clarabel_backend;
#[cfg(feature = "sdp")]
mod sdp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    NonNegative(usize),
    /// `r1 >= ||(r2, ..., rn)||`.
    SecondOrder(usize),
    /// `2 r1 r2 >= ||(r3, ..., rn)||^2`, `r1, r2 >= 0`.
    RotatedSecondOrder(usize),
    /// `r2 exp(r1 / r2) <= r3`, `r2 > 0`.
    Exponential,
    /// `r1^a r2^(1-a) >= |r3|`, `r1, r2 >= 0`.
    Power(f64),
    /// Order-`n` symmetric matrix given by its upper triangle, column by
    /// column: `(0,0), (0,1), (1,1), (0,2), ...`.
    PositiveSemidefinite(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNegative(n) | Cone::SecondOrder(n) => n,
            Cone::RotatedSecondOrder(n) => n,
            Cone::Exponential | Cone::Power(_) => 3,
            Cone::PositiveSemidefinite(n) => n * (n + 1) / 2,
        }
    }

    pub fn is_psd(&self) -> bool {
        matches!(self, Cone::PositiveSemidefinite(_))
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cone::Zero(n) => write!(f, "zero {n}"),
            Cone::NonNegative(n) => write!(f, "nonneg {n}"),
            Cone::SecondOrder(n) => write!(f, "soc {n}"),
            Cone::RotatedSecondOrder(n) => write!(f, "rsoc {n}"),
            Cone::Exponential => write!(f, "exp 3"),
            Cone::Power(a) => write!(f, "pow 3 {a}"),
            Cone::PositiveSemidefinite(n) => write!(f, "psd {n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

/// Sparse affine expression `sum_j a_j x_j + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self {
            terms: vec![(v.0, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        self.terms.push((v.0, coef));
    }

    /// Merge duplicate indices and drop zeros.
    pub fn canonical(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, a) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    fn coef_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max)
    }
}

impl From<Var> for Affine {
    fn from(v: Var) -> Self {
        Affine::term(v, 1.0)
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(mut self, rhs: Affine) -> Affine {
        self += rhs;
        self
    }
}

impl AddAssign for Affine {
    fn add_assign(&mut self, rhs: Affine) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(self, rhs: Affine) -> Affine {
        self + (-rhs)
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self * -1.0
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(mut self, k: f64) -> Affine {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.constant *= k;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub cone: Cone,
    pub rows: Vec<Affine>,
}

/// Minimize `objective . x + objective_constant` over the constraint cones.
///
/// `var_scale` is a positive column scaling hint: the backend works with
/// `x_j / var_scale[j]`, which keeps badly scaled physical quantities (watts
/// next to path-loss slacks) well conditioned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConeProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<Constraint>,
    pub var_names: Vec<String>,
    pub var_scale: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
    IterationLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalLimit => "numerical_limit",
            SolveStatus::IterationLimit => "iteration_limit",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iters: 200,
        }
    }
}

/// Incremental construction of a [`ConeProgram`].
#[derive(Clone, Debug, Default)]
pub struct ProgramBuilder {
    prog: ConeProgram,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: impl Into<String>, scale: f64) -> Var {
        let p = &mut self.prog;
        p.num_vars += 1;
        p.objective.push(0.0);
        p.var_names.push(name.into());
        p.var_scale.push(if scale > 0.0 && scale.is_finite() { scale } else { 1.0 });
        Var(p.num_vars - 1)
    }

    pub fn vars(&mut self, name: &str, n: usize, scale: f64) -> Vec<Var> {
        (0..n).map(|i| self.var(format!("{name}[{i}]"), scale)).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.prog.num_vars
    }

    pub fn minimize(&mut self, e: Affine) {
        let e = e.canonical();
        for (j, a) in e.terms {
            self.prog.objective[j] += a;
        }
        self.prog.objective_constant += e.constant;
    }

    pub fn push(&mut self, cone: Cone, rows: Vec<Affine>) {
        let rows = rows.into_iter().map(Affine::canonical).collect();
        self.prog.constraints.push(Constraint { cone, rows });
    }

    /// `e >= 0`
    pub fn nonneg(&mut self, e: Affine) {
        self.push(Cone::NonNegative(1), vec![e]);
    }

    /// `lhs <= rhs`
    pub fn le(&mut self, lhs: Affine, rhs: Affine) {
        self.nonneg(rhs - lhs);
    }

    /// `e == 0`
    pub fn eq(&mut self, e: Affine) {
        self.push(Cone::Zero(1), vec![e]);
    }

    /// `t >= ||xs||`
    pub fn soc(&mut self, t: Affine, xs: Vec<Affine>) {
        let mut rows = vec![t];
        rows.extend(xs);
        self.push(Cone::SecondOrder(rows.len()), rows);
    }

    /// `2 u v >= ||xs||^2`, `u, v >= 0`
    pub fn rsoc(&mut self, u: Affine, v: Affine, xs: Vec<Affine>) {
        let mut rows = vec![u, v];
        rows.extend(xs);
        self.push(Cone::RotatedSecondOrder(rows.len()), rows);
    }

    /// `||z||^2 <= u v`, `u, v >= 0`
    pub fn quad_over_lin(&mut self, u: Affine, v: Affine, z: Vec<Affine>) {
        let z = z.into_iter().map(|e| e * std::f64::consts::SQRT_2).collect();
        self.rsoc(u, v, z);
    }

    /// `y exp(x / y) <= z`
    pub fn exp(&mut self, x: Affine, y: Affine, z: Affine) {
        self.push(Cone::Exponential, vec![x, y, z]);
    }

    /// `r1^a r2^(1-a) >= |r3|`
    pub fn pow(&mut self, r1: Affine, r2: Affine, r3: Affine, a: f64) {
        self.push(Cone::Power(a), vec![r1, r2, r3]);
    }

    /// Order-`n` PSD block from its upper triangle, column by column.
    pub fn psd(&mut self, n: usize, upper: Vec<Affine>) {
        self.push(Cone::PositiveSemidefinite(n), upper);
    }

    pub fn build(self) -> ConeProgram {
        self.prog
    }
}

/// Outcome of a successful [`validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    /// Variables that appear in no constraint and have no objective weight.
    pub dangling: Vec<usize>,
}

pub fn validate(p: &ConeProgram) -> Result<ValidationReport> {
    let bad = |m: String| Err(Error::MalformedProgram(m));
    if p.objective.len() != p.num_vars {
        return bad(format!(
            "objective has {} entries for {} variables",
            p.objective.len(),
            p.num_vars
        ));
    }
    if !p.var_names.is_empty() && p.var_names.len() != p.num_vars {
        return bad("var_names length differs from num_vars".into());
    }
    if !p.var_scale.is_empty() {
        if p.var_scale.len() != p.num_vars {
            return bad("var_scale length differs from num_vars".into());
        }
        if let Some(j) = p.var_scale.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("non-positive scale on variable {j}"));
        }
    }
    if p.objective.iter().any(|c| !c.is_finite()) || !p.objective_constant.is_finite() {
        return bad("non-finite objective coefficient".into());
    }
    let mut used = vec![false; p.num_vars];
    for (i, c) in p.constraints.iter().enumerate() {
        match c.cone {
            Cone::Power(a) if !(a > 0.0 && a < 1.0) => {
                return bad(format!("constraint {i}: power exponent {a} outside (0,1)"))
            }
            Cone::PositiveSemidefinite(n) if c.rows.len() != n * (n + 1) / 2 => {
                return bad(format!(
                    "constraint {i}: {} rows do not form the upper triangle of a square {n}x{n} matrix",
                    c.rows.len()
                ))
            }
            Cone::SecondOrder(0) | Cone::Zero(0) | Cone::NonNegative(0) => {
                return bad(format!("constraint {i}: empty cone"))
            }
            Cone::RotatedSecondOrder(n) if n < 2 => {
                return bad(format!("constraint {i}: rotated cone needs at least 2 rows"))
            }
            _ => {}
        }
        if c.rows.len() != c.cone.dim() {
            return bad(format!(
                "constraint {i}: {} rows for cone of dimension {}",
                c.rows.len(),
                c.cone.dim()
            ));
        }
        for row in &c.rows {
            if !row.constant.is_finite() {
                return bad(format!("constraint {i}: non-finite constant"));
            }
            for &(j, a) in &row.terms {
                if j >= p.num_vars {
                    return bad(format!(
                        "constraint {i}: variable {j} out of range ({} variables)",
                        p.num_vars
                    ));
                }
                if !a.is_finite() {
                    return bad(format!("constraint {i}: non-finite coefficient"));
                }
                used[j] = true;
            }
        }
    }
    let dangling = (0..p.num_vars)
        .filter(|&j| !used[j] && p.objective[j] == 0.0)
        .collect();
    Ok(ValidationReport { dangling })
}

/// Plain-text dump: variables, objective, cone list and sparse triplets.
pub fn dump(p: &ConeProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "vars {}", p.num_vars);
    for j in 0..p.num_vars {
        let name = p.var_names.get(j).map(String::as_str).unwrap_or("");
        let scale = p.var_scale.get(j).copied().unwrap_or(1.0);
        let _ = writeln!(s, "var {j} {name} {scale:e}");
    }
    for (j, c) in p.objective.iter().enumerate() {
        if *c != 0.0 {
            let _ = writeln!(s, "obj {j} {c:e}");
        }
    }
    let _ = writeln!(s, "objconst {:e}", p.objective_constant);
    let mut row = 0usize;
    for c in &p.constraints {
        let _ = writeln!(s, "cone {} rows {}..{}", c.cone, row, row + c.rows.len());
        for r in &c.rows {
            for &(j, a) in &r.terms {
                let _ = writeln!(s, "a {row} {j} {a:e}");
            }
            if r.constant != 0.0 {
                let _ = writeln!(s, "c {row} {:e}", r.constant);
            }
            row += 1;
        }
    }
    s
}

/// Numeric form handed to a backend: column-scaled, rotated cones rewritten
/// as second-order cones, each block row-normalized.
#[derive(Clone, Debug)]
pub(crate) struct Normalized {
    pub n: usize,
    pub c: Vec<f64>,
    /// `(terms, constant)` per row; the row lies in its block's cone.
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
    pub cones: Vec<Cone>,
}

fn normalize(p: &ConeProgram) -> Normalized {
    let scale = |j: usize| p.var_scale.get(j).copied().unwrap_or(1.0);
    let scaled = |r: &Affine| Affine {
        terms: r.terms.iter().map(|&(j, a)| (j, a * scale(j))).collect(),
        constant: r.constant,
    };
    let mut c: Vec<f64> = (0..p.num_vars).map(|j| p.objective[j] * scale(j)).collect();
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if cmax > 0.0 {
        c.iter_mut().for_each(|v| *v /= cmax);
    }

    let mut rows = Vec::new();
    let mut cones = Vec::new();
    let mut push_block = |cone: Cone, block: Vec<Affine>, per_row: bool| {
        let block: Vec<Affine> = if per_row {
            block
                .into_iter()
                .map(|r| {
                    let m = r.coef_norm().max(r.constant.abs());
                    if m > 0.0 {
                        r * (1.0 / m)
                    } else {
                        r
                    }
                })
                .collect()
        } else {
            let m = block.iter().map(Affine::coef_norm).fold(0.0, f64::max);
            if m > 0.0 {
                block.into_iter().map(|r| r * (1.0 / m)).collect()
            } else {
                block
            }
        };
        rows.extend(block.into_iter().map(|r| {
            let r = r.canonical();
            (r.terms, r.constant)
        }));
        cones.push(cone);
    };

    for con in &p.constraints {
        let block: Vec<Affine> = con.rows.iter().map(scaled).collect();
        match con.cone {
            Cone::Zero(_) | Cone::NonNegative(_) => push_block(con.cone, block, true),
            Cone::RotatedSecondOrder(n) => {
                let mut it = block.into_iter();
                let mut u = it.next().expect("validated");
                let mut v = it.next().expect("validated");
                let (nu, nv) = (
                    u.coef_norm().max(u.constant.abs()),
                    v.coef_norm().max(v.constant.abs()),
                );
                if nu > 0.0 && nv > 0.0 {
                    let k = (nv / nu).sqrt();
                    u = u * k;
                    v = v * (1.0 / k);
                }
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let mut soc = vec![(u.clone() + v.clone()) * h, (u - v) * h];
                soc.extend(it);
                push_block(Cone::SecondOrder(n), soc, false);
            }
            _ => push_block(con.cone, block, false),
        }
    }
    Normalized {
        n: p.num_vars,
        c,
        rows,
        cones,
    }
}

/// Raw backend output in the normalized coordinates.
pub(crate) struct BackendResult {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub fn solve(p: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution> {
    validate(p)?;
    let has_psd = p.constraints.iter().any(|c| c.cone.is_psd());
    let norm = normalize(p);
    let raw = if has_psd {
        let mixed = p.constraints.iter().any(|c| {
            !matches!(
                c.cone,
                Cone::Zero(_) | Cone::NonNegative(_) | Cone::PositiveSemidefinite(_)
            )
        });
        if mixed {
            return Err(Error::Capability(
                "PSD blocks can only be combined with linear constraints".into(),
            ));
        }
        solve_psd(&norm, settings)?
    } else {
        clarabel_backend::solve(&norm, settings)?
    };
    let primal: Vec<f64> = raw
        .y
        .iter()
        .enumerate()
        .map(|(j, y)| y * p.var_scale.get(j).copied().unwrap_or(1.0))
        .collect();
    let objective_value = p.objective_constant
        + p.objective.iter().zip(&primal).map(|(c, x)| c * x).sum::<f64>();
    Ok(ConeSolution {
        status: raw.status,
        primal,
        objective_value,
        primal_residual: raw.primal_residual,
        dual_residual: raw.dual_residual,
        gap: raw.gap,
        iterations: raw.iterations,
    })
}

#[cfg(feature = "sdp")]
fn solve_psd(norm: &Normalized, settings: &SolverSettings) -> Result<BackendResult> {
    sdp::solve(norm, settings)
}

#[cfg(not(feature = "sdp"))]
fn solve_psd(_norm: &Normalized, _settings: &SolverSettings) -> Result<BackendResult> {
    Err(Error::Capability(
        "this build has no semidefinite solver (enable the `sdp` feature)".into(),
    ))
}

/// Whether this build can solve programs with PSD blocks.
pub fn supports_psd() -> bool {
    cfg!(feature = "sdp")
}

/// Largest violation of `p`'s constraints at `x` in the original
/// (unnormalized) rows; PSD blocks report the negated smallest eigenvalue.
pub fn max_violation(p: &ConeProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for c in &p.constraints {
        let r: Vec<f64> = c.rows.iter().map(|row| row.eval(x)).collect();
        let v = match c.cone {
            Cone::Zero(_) => r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Cone::NonNegative(_) => r.iter().fold(0.0f64, |m, v| m.max(-v)),
            Cone::SecondOrder(_) => {
                let tail = r[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                tail - r[0]
            }
            Cone::RotatedSecondOrder(_) => {
                let tail = r[2..].iter().map(|v| v * v).sum::<f64>();
                (tail - 2.0 * r[0] * r[1]).max(-r[0]).max(-r[1])
            }
            Cone::Exponential => {
                if r[1] > 0.0 {
                    r[1] * (r[0] / r[1]).exp() - r[2]
                } else {
                    // closure: r1 <= 0, r2 = 0, r3 >= 0
                    r[0].max(-r[2]).max(r[1].abs())
                }
            }
            Cone::Power(a) => {
                let lhs = r[0].max(0.0).powf(a) * r[1].max(0.0).powf(1.0 - a);
                (r[2].abs() - lhs).max(-r[0]).max(-r[1])
            }
            Cone::PositiveSemidefinite(n) => {
                let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
                    let (a, b) = if i <= j { (i, j) } else { (j, i) };
                    r[b * (b + 1) / 2 + a]
                });
                -m.symmetric_eigenvalues().min()
            }
        };
        worst = worst.max(v);
    }
    worst
}

/// Variables grouped by name prefix (text before `[`), for diagnostics.
pub fn var_groups(p: &ConeProgram) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for name in &p.var_names {
        let key = name.split('[').next().unwrap_or("").to_string();
        *out.entry(key).or_insert(0) += 1;
    }
    out
}

/// Variable indices referenced by the constraint rows.
pub fn referenced_vars(p: &ConeProgram) -> BTreeSet<usize> {
    p.constraints
        .iter()
        .flat_map(|c| c.rows.iter().flat_map(|r| r.terms.iter().map(|t| t.0)))
        .collect()
}
