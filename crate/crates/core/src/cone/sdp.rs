//! Primal-dual interior-point method for linear + semidefinite programs.
//!
//! Standard form `min c'x  s.t.  A x = b,  G x + s = h,  s in K` with `K` a
//! product of a nonnegative orthant and PSD cones in scaled-vector form.
//! Homogeneous self-dual embedding, Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step; dense linear algebra throughout.

use nalgebra::{DMatrix, DVector, LU};

use super::{BackendResult, Cone, Normalized, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const STEP: f64 = 0.99;

#[derive(Clone, Debug)]
struct Layout {
    lp: usize,
    /// `(offset, order)` of each PSD block.
    blocks: Vec<(usize, usize)>,
    m: usize,
}

fn tri(i: usize, j: usize) -> usize {
    // i <= j
    j * (j + 1) / 2 + i
}

impl Layout {
    fn degree(&self) -> usize {
        self.lp + self.blocks.iter().map(|b| b.1).sum::<usize>()
    }

    fn smat(&self, v: &DVector<f64>, b: usize) -> DMatrix<f64> {
        let (off, n) = self.blocks[b];
        DMatrix::from_fn(n, n, |i, j| {
            let (a, c) = if i <= j { (i, j) } else { (j, i) };
            let x = v[off + tri(a, c)];
            if a == c {
                x
            } else {
                x / SQRT2
            }
        })
    }

    fn put(&self, v: &mut DVector<f64>, b: usize, m: &DMatrix<f64>) {
        let (off, n) = self.blocks[b];
        for j in 0..n {
            for i in 0..=j {
                v[off + tri(i, j)] = if i == j {
                    m[(i, i)]
                } else {
                    0.5 * (m[(i, j)] + m[(j, i)]) * SQRT2
                };
            }
        }
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.m);
        e.rows_mut(0, self.lp).fill(1.0);
        for &(off, n) in &self.blocks {
            for i in 0..n {
                e[off + tri(i, i)] = 1.0;
            }
        }
        e
    }

    fn jordan(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for i in 0..self.lp {
            out[i] = u[i] * v[i];
        }
        for b in 0..self.blocks.len() {
            let (us, vs) = (self.smat(u, b), self.smat(v, b));
            let p = (&us * &vs + &vs * &us) * 0.5;
            self.put(&mut out, b, &p);
        }
        out
    }

    /// Smallest "eigenvalue" over the product cone.
    fn min_value(&self, v: &DVector<f64>) -> f64 {
        let mut lo = f64::INFINITY;
        for i in 0..self.lp {
            lo = lo.min(v[i]);
        }
        for b in 0..self.blocks.len() {
            lo = lo.min(self.smat(v, b).symmetric_eigenvalues().min());
        }
        lo
    }

    /// Largest `a` with `v + a dv` in the cone; `v` must be interior.
    fn max_step(&self, v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..self.lp {
            if dv[i] < 0.0 {
                a = a.min(-v[i] / dv[i]);
            }
        }
        for b in 0..self.blocks.len() {
            let chol = match self.smat(v, b).cholesky() {
                Some(c) => c,
                None => return 0.0,
            };
            let l = chol.l();
            let t = match l.solve_lower_triangular(&self.smat(dv, b)) {
                Some(t) => t,
                None => return 0.0,
            };
            let m = match l.solve_lower_triangular(&t.transpose()) {
                Some(m) => m,
                None => return 0.0,
            };
            let m = (&m + m.transpose()) * 0.5;
            let lmin = m.symmetric_eigenvalues().min();
            if lmin < 0.0 {
                a = a.min(-1.0 / lmin);
            }
        }
        a
    }
}

/// Nesterov-Todd scaling `W` with `W z = W^{-T} s = lambda`.
struct Scaling {
    w: Vec<f64>,
    lam_lp: Vec<f64>,
    r: Vec<DMatrix<f64>>,
    rinv: Vec<DMatrix<f64>>,
    lam_psd: Vec<DVector<f64>>,
}

#[derive(Clone, Copy)]
enum Op {
    W,
    Wt,
    Winv,
    WinvT,
}

impl Scaling {
    fn identity(l: &Layout) -> Self {
        Self {
            w: vec![1.0; l.lp],
            lam_lp: vec![1.0; l.lp],
            r: l.blocks.iter().map(|b| DMatrix::identity(b.1, b.1)).collect(),
            rinv: l.blocks.iter().map(|b| DMatrix::identity(b.1, b.1)).collect(),
            lam_psd: l.blocks.iter().map(|b| DVector::from_element(b.1, 1.0)).collect(),
        }
    }

    fn compute(l: &Layout, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let mut w = Vec::with_capacity(l.lp);
        let mut lam_lp = Vec::with_capacity(l.lp);
        for i in 0..l.lp {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            w.push((s[i] / z[i]).sqrt());
            lam_lp.push((s[i] * z[i]).sqrt());
        }
        let mut r = Vec::new();
        let mut rinv = Vec::new();
        let mut lam_psd = Vec::new();
        for b in 0..l.blocks.len() {
            let ls = l.smat(s, b).cholesky()?.l();
            let lz = l.smat(z, b).cholesky()?.l();
            let svd = (lz.transpose() * &ls).svd(true, true);
            let u = svd.u?;
            let v = svd.v_t?.transpose();
            let sig = svd.singular_values;
            if sig.iter().any(|x| !(*x > 0.0)) {
                return None;
            }
            let isq = DMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
            r.push(&ls * &v * &isq);
            rinv.push(&isq * u.transpose() * lz.transpose());
            lam_psd.push(sig);
        }
        Some(Self {
            w,
            lam_lp,
            r,
            rinv,
            lam_psd,
        })
    }

    fn apply(&self, l: &Layout, v: &DVector<f64>, op: Op) -> DVector<f64> {
        let mut out = DVector::zeros(l.m);
        for i in 0..l.lp {
            out[i] = match op {
                Op::W | Op::Wt => self.w[i] * v[i],
                Op::Winv | Op::WinvT => v[i] / self.w[i],
            };
        }
        for b in 0..l.blocks.len() {
            let y = l.smat(v, b);
            let (r, ri) = (&self.r[b], &self.rinv[b]);
            let m = match op {
                Op::W => r.transpose() * y * r,
                Op::Wt => r * y * r.transpose(),
                Op::Winv => ri.transpose() * y * ri,
                Op::WinvT => ri * y * ri.transpose(),
            };
            l.put(&mut out, b, &m);
        }
        out
    }

    fn lambda(&self, l: &Layout) -> DVector<f64> {
        let mut out = DVector::zeros(l.m);
        for i in 0..l.lp {
            out[i] = self.lam_lp[i];
        }
        for (b, &(off, n)) in l.blocks.iter().enumerate() {
            for i in 0..n {
                out[off + tri(i, i)] = self.lam_psd[b][i];
            }
        }
        out
    }

    /// `lambda o v` (`inverse = false`) or its inverse `lambda \ v`.
    fn lambda_op(&self, l: &Layout, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(l.m);
        for i in 0..l.lp {
            out[i] = if inverse {
                v[i] / self.lam_lp[i]
            } else {
                v[i] * self.lam_lp[i]
            };
        }
        for (b, &(off, n)) in l.blocks.iter().enumerate() {
            let lam = &self.lam_psd[b];
            for j in 0..n {
                for i in 0..=j {
                    let f = 0.5 * (lam[i] + lam[j]);
                    let k = off + tri(i, j);
                    out[k] = if inverse { v[k] / f } else { v[k] * f };
                }
            }
        }
        out
    }
}

struct Problem {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    layout: Layout,
}

impl Problem {
    fn from_normalized(p: &Normalized) -> Result<Self> {
        let n = p.n;
        let mut eq_rows = Vec::new();
        let mut lp_rows = Vec::new();
        let mut psd = Vec::new();
        let mut row = 0;
        for cone in &p.cones {
            let d = cone.dim();
            match *cone {
                Cone::Zero(_) => eq_rows.extend(row..row + d),
                Cone::NonNegative(_) => lp_rows.extend(row..row + d),
                Cone::PositiveSemidefinite(k) => psd.push((row, k)),
                other => {
                    return Err(Error::Capability(format!(
                        "semidefinite backend does not handle {other}"
                    )))
                }
            }
            row += d;
        }
        let mut a = DMatrix::zeros(eq_rows.len(), n);
        let mut b = DVector::zeros(eq_rows.len());
        for (i, &r) in eq_rows.iter().enumerate() {
            let (terms, c) = &p.rows[r];
            for &(j, v) in terms {
                a[(i, j)] += v;
            }
            b[i] = -c;
        }
        let mut blocks = Vec::new();
        let mut m = lp_rows.len();
        for &(_, k) in &psd {
            blocks.push((m, k));
            m += k * (k + 1) / 2;
        }
        let layout = Layout {
            lp: lp_rows.len(),
            blocks,
            m,
        };
        let mut g = DMatrix::zeros(m, n);
        let mut h = DVector::zeros(m);
        for (i, &r) in lp_rows.iter().enumerate() {
            let (terms, c) = &p.rows[r];
            for &(j, v) in terms {
                g[(i, j)] -= v;
            }
            h[i] = *c;
        }
        for (bi, &(start, k)) in psd.iter().enumerate() {
            let off = layout.blocks[bi].0;
            for jj in 0..k {
                for ii in 0..=jj {
                    let t = tri(ii, jj);
                    let f = if ii == jj { 1.0 } else { SQRT2 };
                    let (terms, c) = &p.rows[start + t];
                    for &(j, v) in terms {
                        g[(off + t, j)] -= f * v;
                    }
                    h[off + t] = f * c;
                }
            }
        }
        Ok(Self {
            c: DVector::from_column_slice(&p.c),
            a,
            b,
            g,
            h,
            layout,
        })
    }
}

struct Kkt {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

type Triple = (DVector<f64>, DVector<f64>, DVector<f64>);

fn factor(p: &Problem, sc: &Scaling) -> Option<Kkt> {
    let l = &p.layout;
    let n = p.c.len();
    let np = p.b.len();
    let mut wg = DMatrix::zeros(l.m, n);
    for j in 0..n {
        let col = p.g.column(j).into_owned();
        if col.iter().all(|v| *v == 0.0) {
            continue;
        }
        wg.set_column(j, &sc.apply(l, &col, Op::WinvT));
    }
    let h = wg.transpose() * &wg + p.a.transpose() * &p.a;
    let scale = h.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let delta = 1e-14 * scale;
    let mut k = DMatrix::zeros(n + np, n + np);
    k.view_mut((0, 0), (n, n)).copy_from(&h);
    k.view_mut((n, 0), (np, n)).copy_from(&p.a);
    k.view_mut((0, n), (n, np)).copy_from(&p.a.transpose());
    for i in 0..n {
        k[(i, i)] += delta;
    }
    for i in 0..np {
        k[(n + i, n + i)] -= delta;
    }
    let lu = k.lu();
    if !lu.is_invertible() {
        return None;
    }
    Some(Kkt { lu, n })
}

/// Solve `[0 A' G'; A 0 0; G 0 -W'W] (x, y, z) = (r1, r2, r3)`.
fn solve_kkt(
    p: &Problem,
    sc: &Scaling,
    kkt: &Kkt,
    r1: &DVector<f64>,
    r2: &DVector<f64>,
    r3: &DVector<f64>,
) -> Option<Triple> {
    let l = &p.layout;
    let once = |r1: &DVector<f64>, r2: &DVector<f64>, r3: &DVector<f64>| -> Option<Triple> {
        let d = sc.apply(l, &sc.apply(l, r3, Op::WinvT), Op::Winv);
        let rx = r1 + p.g.transpose() * d + p.a.transpose() * r2;
        let mut rhs = DVector::zeros(kkt.n + r2.len());
        rhs.rows_mut(0, kkt.n).copy_from(&rx);
        rhs.rows_mut(kkt.n, r2.len()).copy_from(r2);
        let sol = kkt.lu.solve(&rhs)?;
        let x = sol.rows(0, kkt.n).into_owned();
        let y = sol.rows(kkt.n, r2.len()).into_owned();
        let gx = &p.g * &x - r3;
        let z = sc.apply(l, &sc.apply(l, &gx, Op::WinvT), Op::Winv);
        Some((x, y, z))
    };
    let (mut x, mut y, mut z) = once(r1, r2, r3)?;
    for _ in 0..2 {
        let e1 = r1 - p.a.transpose() * &y - p.g.transpose() * &z;
        let e2 = r2 - &p.a * &x;
        let dz = sc.apply(l, &sc.apply(l, &z, Op::W), Op::Wt);
        let e3 = r3 - (&p.g * &x - dz);
        let (dx, dy, dzc) = once(&e1, &e2, &e3)?;
        x += dx;
        y += dy;
        z += dzc;
    }
    if x.iter().chain(y.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, y, z))
}

struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
}

/// Accuracy accepted when the requested tolerance cannot be reached.
const REDUCED_TOL: f64 = 1e-6;
/// Residuals below this are treated as equal when picking the best stalled
/// iterate; the smaller gap then decides.
const RESIDUAL_FLOOR: f64 = 1e-7;

pub(crate) fn solve(norm: &Normalized, settings: &SolverSettings) -> Result<BackendResult> {
    let p = Problem::from_normalized(norm)?;
    let l = p.layout.clone();
    let n = p.c.len();
    let feastol = settings.abs_tol.max(settings.rel_tol);
    let resx0 = p.c.norm().max(1.0);
    let resy0 = p.b.norm().max(1.0);
    let resz0 = p.h.norm().max(1.0);
    let e = l.identity();
    let degree = l.degree() as f64;

    let numerical = |x: &DVector<f64>, tau: f64, it: usize, m: Option<&Metrics>| BackendResult {
        status: SolveStatus::NumericalLimit,
        y: (x / tau).iter().copied().collect(),
        primal_residual: m.map_or(f64::INFINITY, |m| m.pres),
        dual_residual: m.map_or(f64::INFINITY, |m| m.dres),
        gap: m.map_or(f64::INFINITY, |m| m.gap),
        iterations: it,
    };

    // starting point from two least-squares problems with W = I
    let id = Scaling::identity(&l);
    let kkt = factor(&p, &id).ok_or_else(|| Error::Solver("singular initial KKT system".into()))?;
    let zero_n = DVector::zeros(n);
    let zero_p = DVector::zeros(p.b.len());
    let zero_m = DVector::zeros(l.m);
    let (mut x, _, z0) = solve_kkt(&p, &id, &kkt, &zero_n, &p.b, &p.h)
        .ok_or_else(|| Error::Solver("initial primal solve failed".into()))?;
    let mut s = -z0;
    let (_, mut y, mut z) = solve_kkt(&p, &id, &kkt, &(-&p.c), &zero_p, &zero_m)
        .ok_or_else(|| Error::Solver("initial dual solve failed".into()))?;
    for v in [&mut s, &mut z] {
        let t = -l.min_value(v);
        if t >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + t);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let mut last: Option<Metrics> = None;
    // best iterate within the reduced tolerance, returned if progress stalls
    let mut best: Option<((f64, f64), BackendResult)> = None;
    // best infeasibility certificate seen so far
    let mut best_cert: Option<(f64, BackendResult)> = None;
    let keep = |slot: &mut Option<(f64, BackendResult)>, score: f64, r: BackendResult| {
        if score <= REDUCED_TOL && slot.as_ref().map_or(true, |b| score < b.0) {
            *slot = Some((score, r));
        }
    };
    let keep_best = |slot: &mut Option<((f64, f64), BackendResult)>, m: &Metrics, r: BackendResult| {
        let resid = m.pres.max(m.dres);
        let gap = m.relgap.min(m.gap);
        let key = (resid.max(RESIDUAL_FLOOR), gap);
        if resid.max(gap) <= REDUCED_TOL && slot.as_ref().map_or(true, |b| key < b.0) {
            *slot = Some((key, r));
        }
    };
    // primal feasible with a small gap but a stalled dual residual
    let mut inexact: Option<((f64, f64), BackendResult)> = None;
    let keep_inexact = |slot: &mut Option<((f64, f64), BackendResult)>, m: &Metrics, r: BackendResult| {
        let gap = m.relgap.min(m.gap);
        let key = (m.dres, gap);
        if m.pres <= REDUCED_TOL && gap <= REDUCED_TOL && slot.as_ref().map_or(true, |b| key < b.0) {
            *slot = Some((key, r));
        }
    };
    macro_rules! bail {
        ($x:expr, $tau:expr, $it:expr, $m:expr) => {
            return Ok(match best.take().or(inexact.take()).map(|b| b.1).or(best_cert.take().map(|b| b.1)) {
                Some(r) => r,
                None => numerical($x, $tau, $it, $m),
            })
        };
    }

    for it in 0..=settings.max_iters {
        let rx = p.a.transpose() * &y + p.g.transpose() * &z + &p.c * tau;
        let ry = &p.b * tau - &p.a * &x;
        let rz = &p.g * &x + &s - &p.h * tau;
        let cx = p.c.dot(&x);
        let by_hz = p.b.dot(&y) + p.h.dot(&z);
        let rt = -cx - by_hz - kappa;
        let mu = (s.dot(&z) + tau * kappa) / (degree + 1.0);

        let pcost = cx / tau;
        let dcost = -by_hz / tau;
        let gap = s.dot(&z) / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let m = Metrics {
            pres: (ry.norm() / resy0).max(rz.norm() / resz0) / tau,
            dres: rx.norm() / resx0 / tau,
            gap,
            relgap,
        };
        log::trace!(
            "sdp it {it}: pcost {pcost:.6e} dcost {dcost:.6e} pres {:.1e} dres {:.1e} gap {:.1e}",
            m.pres,
            m.dres,
            m.gap
        );
        if m.pres <= feastol
            && m.dres <= feastol
            && (m.gap <= settings.abs_tol || m.relgap <= settings.rel_tol)
        {
            return Ok(BackendResult {
                status: SolveStatus::Optimal,
                y: (&x / tau).iter().copied().collect(),
                primal_residual: m.pres,
                dual_residual: m.dres,
                gap: m.gap,
                iterations: it,
            });
        }
        let snapshot = |status| BackendResult {
            status,
            y: (&x / tau).iter().copied().collect(),
            primal_residual: m.pres,
            dual_residual: m.dres,
            gap: m.gap,
            iterations: it,
        };
        keep_best(&mut best, &m, snapshot(SolveStatus::Optimal));
        keep_inexact(&mut inexact, &m, snapshot(SolveStatus::NumericalLimit));
        if by_hz < 0.0 {
            let pinf = (p.a.transpose() * &y + p.g.transpose() * &z).norm() / resx0 / -by_hz;
            if tau < kappa {
                keep(&mut best_cert, pinf, snapshot(SolveStatus::Infeasible));
            }
            if pinf <= feastol {
                return Ok(BackendResult {
                    status: SolveStatus::Infeasible,
                    y: (&x / tau).iter().copied().collect(),
                    primal_residual: m.pres,
                    dual_residual: m.dres,
                    gap: m.gap,
                    iterations: it,
                });
            }
        }
        if cx < 0.0 {
            let dinf = ((&p.a * &x).norm() / resy0).max((&p.g * &x + &s).norm() / resz0) / -cx;
            if tau < kappa {
                keep(&mut best_cert, dinf, snapshot(SolveStatus::Unbounded));
            }
            if dinf <= feastol {
                return Ok(BackendResult {
                    status: SolveStatus::Unbounded,
                    y: (&x / tau).iter().copied().collect(),
                    primal_residual: m.pres,
                    dual_residual: m.dres,
                    gap: m.gap,
                    iterations: it,
                });
            }
        }
        if it == settings.max_iters {
            last = Some(m);
            break;
        }

        let sc = match Scaling::compute(&l, &s, &z) {
            Some(sc) => sc,
            None => bail!(&x, tau, it, Some(&m)),
        };
        let kkt = match factor(&p, &sc) {
            Some(k) => k,
            None => bail!(&x, tau, it, Some(&m)),
        };
        let (x1, y1, z1) = match solve_kkt(&p, &sc, &kkt, &(-&p.c), &p.b, &p.h) {
            Some(t) => t,
            None => bail!(&x, tau, it, Some(&m)),
        };
        let denom = -p.c.dot(&x1) - p.b.dot(&y1) - p.h.dot(&z1) + kappa / tau;
        let lam = sc.lambda(&l);
        let lam_sq = l.jordan(&lam, &lam);

        let direction = |eta: f64, ds: &DVector<f64>, dk: f64| -> Option<(Triple, DVector<f64>, f64, f64)> {
            let lds = sc.lambda_op(&l, ds, true);
            let wlds = sc.apply(&l, &lds, Op::Wt);
            let r3 = -(&rz * eta) - &wlds;
            let (x2, y2, z2) = solve_kkt(&p, &sc, &kkt, &(-(&rx * eta)), &(&ry * eta), &r3)?;
            let num = -eta * rt + dk / tau + p.c.dot(&x2) + p.b.dot(&y2) + p.h.dot(&z2);
            let dtau = num / denom;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dz = z2 + &z1 * dtau;
            let dss = &wlds - sc.apply(&l, &sc.apply(&l, &dz, Op::W), Op::Wt);
            let dkappa = (dk - kappa * dtau) / tau;
            Some(((dx, dy, dz), dss, dtau, dkappa))
        };
        let step_len = |dz: &DVector<f64>, dss: &DVector<f64>, dtau: f64, dkappa: f64| -> f64 {
            let mut a = l.max_step(&s, dss).min(l.max_step(&z, dz));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // predictor
        let ds_aff = -&lam_sq;
        let Some(((_, _, dz_a), ds_a, dtau_a, dkappa_a)) = direction(1.0, &ds_aff, -tau * kappa)
        else {
            bail!(&x, tau, it, Some(&m));
        };
        let alpha_a = step_len(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3);

        // corrector
        let ws = sc.apply(&l, &ds_a, Op::WinvT);
        let wz = sc.apply(&l, &dz_a, Op::W);
        let ds_c = -&lam_sq - l.jordan(&ws, &wz) + &e * (sigma * mu);
        let dk_c = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let Some(((dx, dy, dz), dss, dtau, dkappa)) = direction(1.0 - sigma, &ds_c, dk_c) else {
            bail!(&x, tau, it, Some(&m));
        };
        let alpha = (STEP * step_len(&dz, &dss, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) {
            bail!(&x, tau, it, Some(&m));
        }
        x += dx * alpha;
        y += dy * alpha;
        z += dz * alpha;
        s += dss * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }
    let m = last.expect("loop ends through the iteration cap");
    if let Some(r) = best.or(inexact).map(|b| b.1).or(best_cert.map(|b| b.1)) {
        return Ok(r);
    }
    Ok(BackendResult {
        status: SolveStatus::IterationLimit,
        y: (&x / tau).iter().copied().collect(),
        primal_residual: m.pres,
        dual_residual: m.dres,
        gap: m.gap,
        iterations: settings.max_iters,
    })
}
