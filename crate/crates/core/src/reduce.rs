//! Conjugation to rotations: diagonalization of elliptic loops, the normal
//! form at a rational frequency, the cohomological equation, and the
//! iterated "cheap trick" that transfers the rational normal form to a
//! nearby irrational frequency.

use crate::arithmetic::Frequency;
use crate::cocycle::{frac, MatrixLoop};
use crate::error::{Error, Result};
use crate::fourier::{from_fourier, grid_norm, shift, signed_index, to_fourier};
use crate::mat2::{lift_near, principal, Mat2};
use crate::rotation::elliptic_angle;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{Read, Write};

const TAU: f64 = 2.0 * PI;

/// Conjugator `B` with `B^{-1} M B = R_a`, upper triangular with positive
/// diagonal, for elliptic `M`. `a` is oriented by the sign of `M[1][0]`.
pub fn triangular_conjugator(m: &Mat2) -> Option<(Mat2, f64)> {
    let half = 0.5 * m.trace();
    if !(half.abs() < 1.0) || m.c == 0.0 {
        return None;
    }
    let s = m.c.signum() * (1.0 - half * half).sqrt();
    let beta = (s / m.c).sqrt();
    let gamma = beta * (m.a - m.d) / (2.0 * s);
    Some((Mat2::new(beta, gamma, 0.0, 1.0 / beta), elliptic_angle(m)))
}

fn q_product(lp: &dyn MatrixLoop, p: u64, q: u64, x: f64) -> Mat2 {
    let mut m = Mat2::identity();
    for k in 0..q {
        m = lp.at(frac(x + (k * p % q) as f64 / q as f64)) * m;
    }
    m
}

fn not_elliptic(x: f64, m: &Mat2) -> Error {
    Error::NotElliptic { x, trace: m.trace() }
}

/// Rotation-valued normal form of a totally elliptic loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticLoopForm {
    pub grid: Vec<f64>,
    pub conjugators: Vec<Mat2>,
    /// Angles in `(0, 2 pi)`; constant orientation along the loop.
    pub angles: Vec<f64>,
    /// Winding correction `c(x)`; identically zero for the triangular gauge,
    /// which is periodic by construction.
    pub correction: Vec<f64>,
    /// `||B(1) - B(0)||`.
    pub periodicity_defect: f64,
    /// `max ||B^{-1} A B - R_a||` over the grid.
    pub residual: f64,
}

/// Pointwise conjugation of `A` to `R_{a(x)}`.
pub fn elliptic_loop_diagonalize(lp: &dyn MatrixLoop, grid_size: usize) -> Result<EllipticLoopForm> {
    if grid_size < 2 {
        return Err(Error::param("grid_size must be >= 2"));
    }
    let grid: Vec<f64> = (0..grid_size).map(|j| j as f64 / grid_size as f64).collect();
    let parts: Result<Vec<(Mat2, f64, f64)>> = grid
        .par_iter()
        .map(|&x| {
            let m = lp.at(x);
            let (b, a) = triangular_conjugator(&m).ok_or_else(|| not_elliptic(x, &m))?;
            let r = (b.inverse() * m * b).max_abs_diff(&Mat2::rotation(a));
            Ok((b, a, r))
        })
        .collect();
    let parts = parts?;
    let end = lp.at(1.0);
    let b_end = triangular_conjugator(&end).ok_or_else(|| not_elliptic(1.0, &end))?.0;
    Ok(EllipticLoopForm {
        periodicity_defect: b_end.max_abs_diff(&parts[0].0),
        residual: parts.iter().map(|p| p.2).fold(0.0, f64::max),
        conjugators: parts.iter().map(|p| p.0).collect(),
        angles: parts.iter().map(|p| p.1).collect(),
        correction: vec![0.0; grid_size],
        grid,
    })
}

/// Tolerated residual of the rational normal form.
pub const NORMAL_FORM_TOL: f64 = 1e-6;

/// `B(x + p/q)^{-1} A(x) B(x) = R_{phi(x)}` on a grid that is a multiple of `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicNormalForm {
    pub p: u64,
    pub q: u64,
    pub grid: Vec<f64>,
    pub conjugators: Vec<Mat2>,
    /// Lifted continuously along the grid.
    pub phi: Vec<f64>,
    /// Diagonalized angle of the q-step product.
    pub q_angles: Vec<f64>,
    pub residual: f64,
}

/// Normal form of `(p/q, A)` built from the diagonalized q-step product.
pub fn periodic_normal_form(lp: &dyn MatrixLoop, p: u64, q: u64, grid_size: usize) -> Result<PeriodicNormalForm> {
    if q == 0 || !grid_size.is_multiple_of(q as usize) || grid_size < 2 * q as usize {
        return Err(Error::param(format!(
            "grid size {grid_size} must be a positive multiple of q = {q}"
        )));
    }
    let n = grid_size;
    let grid: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let diag: Result<Vec<(Mat2, f64)>> = grid
        .par_iter()
        .map(|&x| {
            let m = q_product(lp, p, q, x);
            triangular_conjugator(&m).ok_or_else(|| not_elliptic(x, &m))
        })
        .collect();
    let diag = diag.map_err(|e| Error::Precondition(format!("q-step product is not totally elliptic: {e}")))?;
    let step = n / q as usize * p as usize % n;
    let rot: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = diag[(i + step) % n].0.inverse() * lp.at(grid[i]) * diag[i].0;
            let ang = c.polar_angle();
            (ang, c.max_abs_diff(&Mat2::rotation(ang)))
        })
        .collect();
    let mut phi = Vec::with_capacity(n);
    let mut prev = rot[0].0;
    for r in &rot {
        prev = lift_near(r.0, prev);
        phi.push(prev);
    }
    let residual = rot.iter().map(|r| r.1).fold(0.0, f64::max);
    if residual > NORMAL_FORM_TOL {
        return Err(Error::Numerical(format!(
            "normal form residual {residual:e} exceeds {NORMAL_FORM_TOL:e}"
        )));
    }
    Ok(PeriodicNormalForm {
        p,
        q,
        grid,
        conjugators: diag.iter().map(|d| d.0).collect(),
        q_angles: diag.iter().map(|d| d.1).collect(),
        phi,
        residual,
    })
}

/// Solution of `theta(x + alpha) - theta(x) = phi(x) - mean(phi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CohomologicalSolution {
    /// Fourier coefficients in FFT order.
    pub theta: Vec<Complex64>,
    pub mean: f64,
    pub min_divisor: f64,
    pub min_divisor_mode: i64,
}

impl CohomologicalSolution {
    pub fn theta_grid(&self) -> Vec<f64> {
        from_fourier(&self.theta)
    }
}

/// Harmonic-by-harmonic division by `e^{2 pi i k alpha} - 1` for
/// `0 < |k| <= cutoff`; higher modes are dropped.
pub fn cohomological_solve(
    phi: &[Complex64],
    alpha: &Frequency,
    cutoff: usize,
    divisor_floor: f64,
) -> Result<CohomologicalSolution> {
    if alpha.is_rational() {
        return Err(Error::Unsupported(format!(
            "cohomological equation needs an irrational frequency, got {alpha}"
        )));
    }
    if cutoff == 0 {
        return Err(Error::param("cutoff must be >= 1"));
    }
    let n = phi.len();
    let a = alpha.value();
    let cutoff = cutoff.min((n - 1) / 2);
    let mut theta = vec![Complex64::new(0.0, 0.0); n];
    let mut min_divisor = f64::INFINITY;
    let mut min_mode = 0;
    for (j, c) in phi.iter().enumerate() {
        let k = signed_index(j, n);
        if k == 0 || k.unsigned_abs() as usize > cutoff {
            continue;
        }
        let div = Complex64::from_polar(1.0, TAU * k as f64 * a) - 1.0;
        let m = div.norm();
        if m < min_divisor {
            min_divisor = m;
            min_mode = k;
        }
        if m < divisor_floor {
            return Err(Error::Resonance { k, modulus: m });
        }
        theta[j] = c / div;
    }
    Ok(CohomologicalSolution {
        theta,
        mean: phi[0].re,
        min_divisor,
        min_divisor_mode: min_mode,
    })
}

/// Numerical knobs of the reduction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReduceOptions {
    /// Grid size; rounded up to a multiple of `q`.
    pub grid: usize,
    /// Fourier cutoff of the cohomological step.
    pub cutoff: usize,
    pub divisor_floor: f64,
    /// Smoothness index used for ledger norms; step `j` uses `max(r - j, 0)`.
    pub smoothness: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Smallest allowed distance of `sum_k phi(x + k p/q)` from `pi Z`.
    pub psi_floor: f64,
    /// Largest `||F||` accepted by a step.
    pub f_threshold: f64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            grid: 1 << 14,
            cutoff: 4096,
            divisor_floor: 1e-10,
            smoothness: 0.0,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            psi_floor: 1e-3,
            f_threshold: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub norm_phi_drift: f64,
    pub norm_z: f64,
    pub norm_f: f64,
    /// `max_x ||A_j(x) - R_{phi_j(x)}||`.
    pub residual: f64,
}

pub const LEDGER_HEADER: &str = "step,norm_phi_drift,norm_Z,norm_F,residual";

/// Serializes ledger rows as CSV with a header line.
pub fn write_ledger<W: Write>(mut w: W, rows: &[LedgerRow]) -> std::io::Result<()> {
    writeln!(w, "{LEDGER_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            r.step, r.norm_phi_drift, r.norm_z, r.norm_f, r.residual
        )?;
    }
    Ok(())
}

/// Iteration state: `A_j(x) = exp(F(x)) R_{phi(x)}` on the grid, with the
/// accumulated conjugator at `x` and at `x + alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionState {
    pub alpha: f64,
    pub p: u64,
    pub q: u64,
    pub phi: Vec<f64>,
    /// Generators `F(x)` in `sl(2)`.
    pub f: Vec<Mat2>,
    pub conj: Vec<Mat2>,
    pub conj_shifted: Vec<Mat2>,
    /// `(y1, y2)` grids of each step's symmetric generator.
    pub y_history: Vec<(Vec<f64>, Vec<f64>)>,
    pub ledger: Vec<LedgerRow>,
    /// Smallest distance of `psi` from `pi Z` seen so far.
    pub psi_margin: f64,
    /// Largest Newton residual of the last step.
    pub newton_residual: f64,
    /// `||F_new|| / (||F|| |alpha - p/q|)` of each step.
    pub contraction: Vec<f64>,
}

fn f_norm(f: &[Mat2], r: f64) -> f64 {
    (0..3)
        .map(|c| grid_norm(&f.iter().map(|m| m.sl2_coords()[c]).collect::<Vec<_>>(), r))
        .sum()
}

fn rotation_residual(f: &[Mat2], phi: &[f64]) -> f64 {
    f.iter()
        .zip(phi)
        .map(|(g, &a)| (g.exp_sl2() * Mat2::rotation(a)).max_abs_diff(&Mat2::rotation(a)))
        .fold(0.0, f64::max)
}

impl ReductionState {
    /// State with identity conjugators; grid size must be a multiple of `q`.
    pub fn from_parts(alpha: f64, p: u64, q: u64, phi: Vec<f64>, f: Vec<Mat2>, smoothness: f64) -> Result<Self> {
        let n = phi.len();
        if f.len() != n || q == 0 || !n.is_multiple_of(q as usize) {
            return Err(Error::param(
                "phi and F must share a grid whose size is a multiple of q",
            ));
        }
        let row = LedgerRow {
            step: 0,
            norm_phi_drift: 0.0,
            norm_z: 0.0,
            norm_f: f_norm(&f, smoothness),
            residual: rotation_residual(&f, &phi),
        };
        Ok(ReductionState {
            alpha,
            p,
            q,
            phi,
            f,
            conj: vec![Mat2::identity(); n],
            conj_shifted: vec![Mat2::identity(); n],
            y_history: Vec::new(),
            ledger: vec![row],
            psi_margin: f64::INFINITY,
            newton_residual: 0.0,
            contraction: Vec::new(),
        })
    }

    pub fn grid_size(&self) -> usize {
        self.phi.len()
    }

    pub fn last(&self) -> &LedgerRow {
        self.ledger.last().expect("ledger starts with step 0")
    }
}

/// Solves `P = e^Y R_psi e^{-Y}` for symmetric traceless `Y` by damped
/// Gauss-Newton with a finite-difference Jacobian, starting from `Y = 0`.
/// Returns `(y1, y2, psi, residual)`.
pub fn split_conjugation(p: &Mat2, psi0: f64, tol: f64, max_iter: usize) -> Result<(f64, f64, f64, f64)> {
    let model = |u: [f64; 3]| {
        let e = Mat2::symmetric_generator(u[0], u[1]).exp_sl2();
        e * Mat2::rotation(u[2]) * e.inverse()
    };
    let res = |u: [f64; 3]| {
        let m = model(u) - *p;
        [m.a, m.b, m.c, m.d]
    };
    let size = |r: [f64; 4]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 + p.op_norm();
    let mut u = [0.0, 0.0, psi0];
    let mut r = res(u);
    for _ in 0..max_iter {
        if size(r) <= tol * scale {
            return Ok((u[0], u[1], u[2], size(r)));
        }
        let h = 1e-7;
        let mut jac = [[0.0; 3]; 4];
        for c in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[c] += h;
            dn[c] -= h;
            let (rp, rd) = (res(up), res(dn));
            for (row, jrow) in jac.iter_mut().enumerate() {
                jrow[c] = (rp[row] - rd[row]) / (2.0 * h);
            }
        }
        // normal equations
        let mut ata = [[0.0; 3]; 3];
        let mut atr = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] = (0..4).map(|k| jac[k][i] * jac[k][j]).sum();
            }
            atr[i] = (0..4).map(|k| jac[k][i] * r[k]).sum();
        }
        let delta = solve3(ata, atr).ok_or_else(|| Error::Numerical("singular Gauss-Newton system".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = [u[0] - t * delta[0], u[1] - t * delta[1], u[2] - t * delta[2]];
            let rc = res(cand);
            if size(rc) < size(r) {
                u = cand;
                r = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if size(r) <= tol * scale {
        return Ok((u[0], u[1], u[2], size(r)));
    }
    Err(Error::Numerical(format!(
        "splitting did not converge (residual {:e})",
        size(r)
    )))
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

/// One inductive step. Conjugates `(alpha, e^F R_phi)` by `e^Y`, where `Y`
/// makes the q-step product at `p/q` a rotation; the new generator is
/// `log(e^{-Y(x + alpha)} e^{Y(x + p/q)})`.
pub fn cheap_trick_step(state: &ReductionState, opts: &ReduceOptions) -> Result<ReductionState> {
    let n = state.grid_size();
    let (p, q) = (state.p, state.q);
    let j = state.ledger.len() - 1;
    let norm_f = state.last().norm_f;
    if !(norm_f <= opts.f_threshold) {
        return Err(Error::Numerical(format!(
            "||F|| = {norm_f:e} is above the step threshold {:e}",
            opts.f_threshold
        )));
    }
    let step = n / q as usize * p as usize % n;
    let a_j: Vec<Mat2> = state
        .f
        .iter()
        .zip(&state.phi)
        .map(|(g, &a)| g.exp_sl2() * Mat2::rotation(a))
        .collect();

    // (y1, y2, psi, Newton residual, distance of psi from pi Z)
    #[allow(clippy::type_complexity)]
    let solved: Result<Vec<(f64, f64, f64, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut prod = Mat2::identity();
            let mut psi = 0.0;
            for k in 0..q as usize {
                let idx = (i + k * step) % n;
                prod = a_j[idx] * prod;
                psi += state.phi[idx];
            }
            let margin = (psi / PI - (psi / PI).round()).abs() * PI;
            if !(prod.trace().abs() < 2.0) {
                return Err(not_elliptic(i as f64 / n as f64, &prod));
            }
            let psi0 = lift_near(elliptic_angle(&prod), psi);
            let (y1, y2, psit, res) = split_conjugation(&prod, psi0, opts.newton_tol, opts.newton_max_iter)?;
            Ok((y1, y2, psit, res, margin))
        })
        .collect();
    let solved = solved?;
    let psi_margin = solved.iter().map(|s| s.4).fold(f64::INFINITY, f64::min);
    if psi_margin < opts.psi_floor {
        return Err(Error::Precondition(format!(
            "ellipticity margin {psi_margin:e} is below the floor {:e}",
            opts.psi_floor
        )));
    }
    let newton_residual = solved.iter().map(|s| s.3).fold(0.0, f64::max);
    let y1: Vec<f64> = solved.iter().map(|s| s.0).collect();
    let y2: Vec<f64> = solved.iter().map(|s| s.1).collect();
    let y1s = shift(&y1, state.alpha);
    let y2s = shift(&y2, state.alpha);
    let ey = |i: usize| Mat2::symmetric_generator(y1[i], y2[i]).exp_sl2();

    let next: Vec<(f64, Mat2, Mat2, Mat2)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let e_here = ey(i);
            let e_pq = ey((i + step) % n);
            let e_alpha = Mat2::symmetric_generator(y1s[i], y2s[i]).exp_sl2();
            let c = e_pq.inverse() * a_j[i] * e_here;
            let phi = lift_near(c.polar_angle(), state.phi[i]);
            let g = e_alpha.inverse() * e_pq;
            let f = g
                .log_sl2()
                .unwrap_or_else(|| Mat2::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN));
            (phi, f, state.conj[i] * e_here, state.conj_shifted[i] * e_alpha)
        })
        .collect();
    if next.iter().any(|t| !t.1.a.is_finite()) {
        return Err(Error::Numerical("new generator has no real logarithm".into()));
    }
    let phi: Vec<f64> = next.iter().map(|t| t.0).collect();
    let f: Vec<Mat2> = next.iter().map(|t| t.1).collect();
    let r = (opts.smoothness - (j + 1) as f64).max(0.0);
    let drift: Vec<f64> = phi.iter().zip(&state.phi).map(|(a, b)| a - b).collect();
    let row = LedgerRow {
        step: j + 1,
        norm_phi_drift: grid_norm(&drift, r),
        norm_z: grid_norm(&y1, r) + grid_norm(&y2, r),
        norm_f: f_norm(&f, r),
        residual: rotation_residual(&f, &phi),
    };
    let gap = (state.alpha - p as f64 / q as f64).abs();
    let mut contraction = state.contraction.clone();
    if norm_f > 0.0 && gap > 0.0 {
        contraction.push(row.norm_f / (norm_f * gap));
    }
    let mut ledger = state.ledger.clone();
    ledger.push(row);
    let mut y_history = state.y_history.clone();
    y_history.push((y1, y2));
    Ok(ReductionState {
        alpha: state.alpha,
        p,
        q,
        phi,
        f,
        conj: next.iter().map(|t| t.2).collect(),
        conj_shifted: next.iter().map(|t| t.3).collect(),
        y_history,
        ledger,
        psi_margin: psi_margin.min(state.psi_margin),
        newton_residual,
        contraction,
    })
}

/// Output of the full pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub grid: Vec<f64>,
    /// Composed conjugator on the grid.
    pub conjugator: Vec<Mat2>,
    pub theta0: f64,
    /// `R_{theta0}`.
    pub a0: Mat2,
    /// `max ||B(x + alpha)^{-1} A(x) B(x) - A0||` on the construction grid.
    pub final_residual: f64,
    /// Same quantity at the grid midpoints.
    pub verification_residual: f64,
    pub ledger: Vec<LedgerRow>,
    pub contraction: Vec<f64>,
    pub psi_margin: f64,
    pub min_divisor: f64,
    /// Largest `|det B - 1|` over the grid.
    pub det_defect: f64,
    pub steps_taken: usize,
}

impl Reduction {
    /// `max ||B||^2`.
    pub fn max_conjugator_norm_sqr(&self) -> f64 {
        self.conjugator.iter().map(|b| b.op_norm().powi(2)).fold(0.0, f64::max)
    }
}

/// Rotation-number difference between the cocycle and `R_{theta0}`,
/// measured as distance to the nearest `k alpha / 2 (mod 1)`, `|k| <= 8`.
pub fn rotation_defect(rho_bar: f64, theta0: f64, alpha: f64) -> (f64, i64) {
    let d = rho_bar - theta0 / TAU;
    let mut best = (f64::INFINITY, 0);
    for k in -8i64..=8 {
        let t = d - k as f64 * alpha / 2.0;
        let dist = (t - t.round()).abs();
        if dist < best.0 {
            best = (dist, k);
        }
    }
    best
}

/// Normal-form conjugator and angle at arbitrary phases.
fn diag_at(lp: &dyn MatrixLoop, p: u64, q: u64, x: f64) -> Result<Mat2> {
    let m = q_product(lp, p, q, x);
    Ok(triangular_conjugator(&m).ok_or_else(|| not_elliptic(x, &m))?.0)
}

/// Evaluates the composed conjugator and residual on the grid shifted by `offset`.
#[allow(clippy::too_many_arguments)]
fn conjugacy_residual(
    lp: &dyn MatrixLoop,
    nf: &PeriodicNormalForm,
    ys: &[(Vec<f64>, Vec<f64>)],
    theta: &[f64],
    alpha: f64,
    theta0: f64,
    offset: f64,
) -> Result<(Vec<Mat2>, f64)> {
    let n = nf.grid.len();
    let sh = |v: &[f64], s: f64| if s == 0.0 { v.to_vec() } else { shift(v, s) };
    let ys_here: Vec<(Vec<f64>, Vec<f64>)> = ys.iter().map(|(a, b)| (sh(a, offset), sh(b, offset))).collect();
    let ys_alpha: Vec<(Vec<f64>, Vec<f64>)> = ys
        .iter()
        .map(|(a, b)| (sh(a, offset + alpha), sh(b, offset + alpha)))
        .collect();
    let th_here = sh(theta, offset);
    let th_alpha = sh(theta, offset + alpha);
    let a0 = Mat2::rotation(theta0);
    let out: Result<Vec<(Mat2, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = nf.grid[i] + offset;
            let mut b = diag_at(lp, nf.p, nf.q, x)?;
            let mut ba = diag_at(lp, nf.p, nf.q, frac(x + alpha))?;
            for k in 0..ys.len() {
                b = b * Mat2::symmetric_generator(ys_here[k].0[i], ys_here[k].1[i]).exp_sl2();
                ba = ba * Mat2::symmetric_generator(ys_alpha[k].0[i], ys_alpha[k].1[i]).exp_sl2();
            }
            b = b * Mat2::rotation(th_here[i]);
            ba = ba * Mat2::rotation(th_alpha[i]);
            let r = (ba.inverse() * lp.at(frac(x)) * b).max_abs_diff(&a0);
            Ok((b, r))
        })
        .collect();
    let out = out?;
    let r = out.iter().map(|o| o.1).fold(0.0, f64::max);
    Ok((out.into_iter().map(|o| o.0).collect(), r))
}

/// Normal form at `p/q`, `j_max` inductive steps (stopping early once the
/// rotation residual is below `target_tolerance`), then the cohomological
/// equation for the remaining rotation angle.
pub fn cheap_trick_reduce(
    lp: &dyn MatrixLoop,
    alpha: &Frequency,
    p: u64,
    q: u64,
    j_max: usize,
    target_tolerance: f64,
    opts: &ReduceOptions,
) -> Result<Reduction> {
    if alpha.is_rational() {
        return Err(Error::Unsupported("reduction needs an irrational frequency".into()));
    }
    let a = alpha.value();
    let n = opts.grid.div_ceil(q as usize) * q as usize;
    let nf = periodic_normal_form(lp, p, q, n).map_err(|e| e.in_stage("normal-form"))?;
    let step = n / q as usize * p as usize % n;
    let shifted: Result<Vec<Mat2>> = nf.grid.par_iter().map(|&x| diag_at(lp, p, q, frac(x + a))).collect();
    let shifted = shifted.map_err(|e| e.in_stage("normal-form"))?;
    let f0: Option<Vec<Mat2>> = (0..n)
        .map(|i| (shifted[i].inverse() * nf.conjugators[(i + step) % n]).log_sl2())
        .collect();
    let f0 =
        f0.ok_or_else(|| Error::Numerical("initial generator has no real logarithm".into()).in_stage("normal-form"))?;
    let mut state = ReductionState::from_parts(a, p, q, nf.phi.clone(), f0, opts.smoothness)?;
    state.conj = nf.conjugators.clone();
    state.conj_shifted = shifted;
    for _ in 0..j_max {
        if state.last().residual < target_tolerance * 1e-3 {
            break;
        }
        state = cheap_trick_step(&state, opts).map_err(|e| e.in_stage("cheap-trick"))?;
    }
    let closure = state.phi[n - 1] + (state.phi[n - 1] - state.phi[n - 2]) - state.phi[0];
    let degree = (closure / TAU).round();
    if degree != 0.0 {
        return Err(Error::Unsupported(format!("rotation angle has degree {degree}")).in_stage("cohomological"));
    }
    let coeffs = to_fourier(&state.phi);
    let sol = cohomological_solve(&coeffs, alpha, opts.cutoff, opts.divisor_floor)
        .map_err(|e| e.in_stage("cohomological"))?;
    let theta = sol.theta_grid();
    let theta0 = sol.mean;
    let (conjugator, final_residual) = conjugacy_residual(lp, &nf, &state.y_history, &theta, a, theta0, 0.0)?;
    let (_, verification_residual) = conjugacy_residual(lp, &nf, &state.y_history, &theta, a, theta0, 0.5 / n as f64)?;
    let det_defect = conjugator.iter().map(|b| (b.det() - 1.0).abs()).fold(0.0, f64::max);
    Ok(Reduction {
        grid: nf.grid,
        conjugator,
        theta0,
        a0: Mat2::rotation(theta0),
        final_residual,
        verification_residual,
        steps_taken: state.ledger.len() - 1,
        ledger: state.ledger,
        contraction: state.contraction,
        psi_margin: state.psi_margin,
        min_divisor: sol.min_divisor,
        det_defect,
    })
}

/// Writes `2x2` blocks row-major as little-endian `f64`.
pub fn write_conjugator_dump<W: Write>(mut w: W, mats: &[Mat2]) -> std::io::Result<()> {
    for m in mats {
        for v in [m.a, m.b, m.c, m.d] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a dump written by [`write_conjugator_dump`].
pub fn read_conjugator_dump<R: Read>(mut r: R) -> std::io::Result<Vec<Mat2>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 32 != 0 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "dump length is not a multiple of 32 bytes",
        ));
    }
    Ok(bytes
        .chunks_exact(32)
        .map(|c| {
            let f = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().expect("8 bytes"));
            Mat2::new(f(0), f(1), f(2), f(3))
        })
        .collect())
}

/// `|phi - psi|` reduced mod `2 pi`, used to compare lifted angle sums.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    principal(a - b).abs()
}
