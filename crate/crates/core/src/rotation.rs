//! Fibered rotation numbers and the density of states.
//!
//! Every matrix `A = R_w P` (polar decomposition, `P` positive) moves the
//! angle of a vector by `w` plus something in `(-pi/2, pi/2)`. Lifting `w`
//! continuously in `x` gives a continuous lift of the projective action.

use crate::arithmetic::Frequency;
use crate::cocycle::{frac, orbit_point, q_step_pq, schrodinger_step, MatrixLoop};
use crate::error::{Error, Result};
use crate::lyapunov::periodic_mean;
use crate::mat2::{lift_near, Mat2};
use crate::potentials::Potential;
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

/// Minimum number of steps for orbit estimates.
pub const MIN_STEPS: usize = 1000;

/// Points whose q-step trace is this close to `+-2` are reported.
pub const NEAR_PARABOLIC: f64 = 1e-6;

/// Grid used to lift the polar angle of a general loop.
const LIFT_GRID: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationMethod {
    OrbitLift,
    RationalAverage,
    EllipticIntegral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationEstimate {
    /// Rotation number in `[0, 1)`; in `[0, 1/2]` for Schrodinger cocycles.
    pub rho: f64,
    /// The lifted value before reduction.
    pub rho_bar: f64,
    /// Orbit length, or quadrature points for rational frequencies.
    pub n_steps: usize,
    pub convergence_gap: f64,
    pub method: RotationMethod,
    /// Number of quadrature nodes whose q-step product was near parabolic.
    pub near_parabolic: usize,
}

impl RotationEstimate {
    /// `2 rho`, which lies in `[0, 1]` for Schrodinger cocycles.
    pub fn doubled(&self) -> f64 {
        2.0 * self.rho
    }
}

/// Lifted one-step action: `(angle increment, normalized image)`.
#[inline]
fn advance(m: &Mat2, omega: f64, v: [f64; 2]) -> (f64, [f64; 2]) {
    let w = m.apply(v);
    let (s, c) = omega.sin_cos();
    let u = [c * w[0] + s * w[1], -s * w[0] + c * w[1]];
    let d = omega + (v[0] * u[1] - v[1] * u[0]).atan2(v[0] * u[0] + v[1] * u[1]);
    let n = w[0].hypot(w[1]);
    (d, [w[0] / n, w[1] / n])
}

trait Lift: Sync {
    fn matrix(&self, x: f64) -> Mat2;
    fn omega(&self, x: f64, m: &Mat2) -> f64;
    /// `lo` such that every increment lies in `(lo, lo + 2 pi)`, if known.
    fn window(&self) -> Option<f64> {
        None
    }
}

/// Lifted angle walker; `angle` is the principal angle of `v`.
struct Walker {
    v: [f64; 2],
    angle: f64,
}

impl Walker {
    fn new(v: [f64; 2]) -> Self {
        Walker { v, angle: v[1].atan2(v[0]) }
    }

    #[inline]
    fn step<L: Lift>(&mut self, l: &L, x: f64) -> f64 {
        let m = l.matrix(x);
        match l.window() {
            Some(lo) => {
                let w = m.apply(self.v);
                let a = w[1].atan2(w[0]);
                let mut d = a - self.angle;
                d -= TAU * ((d - lo) / TAU).floor();
                let n = w[0].abs().max(w[1].abs());
                self.v = [w[0] / n, w[1] / n];
                self.angle = a;
                d
            }
            None => {
                let (d, w) = advance(&m, l.omega(x, &m), self.v);
                self.v = w;
                self.angle = w[1].atan2(w[0]);
                d
            }
        }
    }
}

struct SchrodingerLift<'a> {
    v: &'a Potential,
    energy: f64,
}

impl Lift for SchrodingerLift<'_> {
    fn matrix(&self, x: f64) -> Mat2 {
        schrodinger_step(self.v, self.energy, x)
    }

    // atan2(2, W) lies in (0, pi), continuous in W.
    fn omega(&self, _x: f64, m: &Mat2) -> f64 {
        m.polar_angle()
    }

    // omega in (0, pi) plus a positive-definite part in (-pi/2, pi/2)
    fn window(&self) -> Option<f64> {
        Some(-PI / 2.0)
    }
}

struct LoopLift<'a> {
    lp: &'a dyn MatrixLoop,
    grid: Vec<f64>,
}

impl<'a> LoopLift<'a> {
    fn new(lp: &'a dyn MatrixLoop) -> Result<Self> {
        let mut grid = Vec::with_capacity(LIFT_GRID + 1);
        let mut prev = lp.at(0.0).polar_angle();
        grid.push(prev);
        for i in 1..=LIFT_GRID {
            prev = lift_near(lp.at(i as f64 / LIFT_GRID as f64).polar_angle(), prev);
            grid.push(prev);
        }
        let degree = ((grid[LIFT_GRID] - grid[0]) / TAU).round() as i64;
        if degree != 0 {
            return Err(Error::Unsupported(format!(
                "loop is not homotopic to the identity (degree {degree})"
            )));
        }
        Ok(LoopLift { lp, grid })
    }
}

impl Lift for LoopLift<'_> {
    fn matrix(&self, x: f64) -> Mat2 {
        self.lp.at(x)
    }

    fn omega(&self, x: f64, m: &Mat2) -> f64 {
        let t = frac(x) * LIFT_GRID as f64;
        let i = (t.floor() as usize).min(LIFT_GRID - 1);
        let f = t - i as f64;
        let near = self.grid[i] * (1.0 - f) + self.grid[i + 1] * f;
        lift_near(m.polar_angle(), near)
    }
}

fn unit(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

fn orbit_rotation<L: Lift>(l: &L, alpha: f64, n: usize, x0: f64, y0: f64) -> (f64, f64) {
    let mut walker = Walker::new(unit(y0));
    let mut total = 0.0;
    let mut half = 0.0;
    for k in 0..n {
        if k == n / 2 {
            half = total;
        }
        total += walker.step(l, orbit_point(x0, alpha, k));
    }
    (total / (TAU * n as f64), half / (TAU * (n / 2) as f64))
}

/// Lifted angle gained by the `q` steps at `x`, starting from `v`.
fn q_lift<L: Lift>(l: &L, p: u64, q: u64, x: f64, v: [f64; 2]) -> (f64, [f64; 2]) {
    let mut walker = Walker::new(v);
    let mut total = 0.0;
    for k in 0..q {
        total += walker.step(l, frac(x + (k * p % q) as f64 / q as f64));
    }
    let n = walker.v[0].hypot(walker.v[1]);
    (total, [walker.v[0] / n, walker.v[1] / n])
}

fn q_product<L: Lift>(l: &L, p: u64, q: u64, x: f64) -> Mat2 {
    let mut m = Mat2::identity();
    for k in 0..q {
        m = l.matrix(frac(x + (k * p % q) as f64 / q as f64)) * m;
    }
    m
}

/// Rotation angle in `(0, 2 pi)` of an elliptic matrix, oriented by the
/// sign of its lower-left entry.
pub fn elliptic_angle(m: &Mat2) -> f64 {
    let a = (m.trace() / 2.0).clamp(-1.0, 1.0).acos();
    if m.c > 0.0 {
        a
    } else {
        TAU - a
    }
}

/// Rotation number (in turns) of the lifted q-step map at `x`.
fn rot_at<L: Lift>(l: &L, p: u64, q: u64, x: f64) -> f64 {
    let m = q_product(l, p, q, x);
    let tr = m.trace();
    if tr.abs() < 2.0 {
        let a = elliptic_angle(&m) / TAU;
        // |F^n(y) - y - n rot| < 1 turn, so 4 iterates pin the integer part
        let mut v = [1.0, 0.0];
        let mut total = 0.0;
        for _ in 0..4 {
            let (d, w) = q_lift(l, p, q, x, v);
            total += d;
            v = w;
        }
        let k = (total / (4.0 * TAU) - a).round();
        a + k
    } else {
        // eigenvector direction is invariant; its lifted gain is exact
        let mu = m.dominant_eigenvalue().re;
        let e1 = [m.b, mu - m.a];
        let e2 = [mu - m.d, m.c];
        let n1 = e1[0].hypot(e1[1]);
        let n2 = e2[0].hypot(e2[1]);
        let e = if n1 == 0.0 && n2 == 0.0 {
            [1.0, 0.0]
        } else if n1 >= n2 {
            [e1[0] / n1, e1[1] / n1]
        } else {
            [e2[0] / n2, e2[1] / n2]
        };
        q_lift(l, p, q, x, e).0 / TAU
    }
}

fn rational_rotation<L: Lift>(l: &L, p: u64, q: u64) -> Result<(f64, usize, f64, usize)> {
    let (mean, _, points, change) = periodic_mean(|x| Ok(rot_at(l, p, q, x)), q, 1e-9)?;
    let near = (0..points)
        .filter(|&i| {
            let tr = q_product(l, p, q, i as f64 / (q as f64 * points as f64)).trace();
            (tr.abs() - 2.0).abs() < NEAR_PARABOLIC
        })
        .count();
    Ok((mean / q as f64, points, change / q as f64, near))
}

fn finish(rho_bar: f64, schrodinger: bool) -> f64 {
    if schrodinger {
        rho_bar.clamp(0.0, 0.5)
    } else {
        frac(rho_bar)
    }
}

fn estimate<L: Lift>(
    l: &L,
    alpha: &Frequency,
    n: usize,
    x0: f64,
    y0: f64,
    schrodinger: bool,
) -> Result<RotationEstimate> {
    if n < MIN_STEPS {
        return Err(Error::param(format!("n = {n} is below the minimum {MIN_STEPS}")));
    }
    if let Some((p, q)) = alpha.as_rational() {
        let (rho_bar, points, gap, near) = rational_rotation(l, p, q)?;
        return Ok(RotationEstimate {
            rho: finish(rho_bar, schrodinger),
            rho_bar,
            n_steps: points,
            convergence_gap: gap,
            method: RotationMethod::RationalAverage,
            near_parabolic: near,
        });
    }
    let (rho_bar, half) = orbit_rotation(l, alpha.value(), n, x0, y0);
    Ok(RotationEstimate {
        rho: finish(rho_bar, schrodinger),
        rho_bar,
        n_steps: n,
        convergence_gap: (rho_bar - half).abs(),
        method: RotationMethod::OrbitLift,
        near_parabolic: 0,
    })
}

/// Fibered rotation number of `(alpha, S_{E - V})` starting at phase `x0`
/// and vector angle `y0`.
pub fn rotation_number(
    v: &Potential,
    energy: f64,
    alpha: &Frequency,
    n: usize,
    x0: f64,
    y0: f64,
) -> Result<RotationEstimate> {
    estimate(&SchrodingerLift { v, energy }, alpha, n, x0, y0, true)
}

/// Fibered rotation number of `(alpha, A)` for a loop homotopic to the identity.
pub fn loop_rotation_number(
    lp: &dyn MatrixLoop,
    alpha: &Frequency,
    n: usize,
    x0: f64,
    y0: f64,
) -> Result<RotationEstimate> {
    estimate(&LoopLift::new(lp)?, alpha, n, x0, y0, false)
}

/// Grid used to confirm ellipticity before integrating.
const ELLIPTIC_CHECK_GRID: usize = 4096;

/// `rho(p/q, S_{E-V}) = (1/q) (1/2 pi) int arccos(tr/2) dx` for a totally
/// elliptic q-step product, with the orientation and integer part fixed by
/// the exact rotation at `x = 0`.
pub fn elliptic_rotation_integral(v: &Potential, energy: f64, alpha: &Frequency) -> Result<RotationEstimate> {
    let (p, q) = alpha
        .as_rational()
        .ok_or_else(|| Error::param("the elliptic integral needs a rational frequency"))?;
    let width = 1.0 / q as f64;
    for i in 0..ELLIPTIC_CHECK_GRID {
        let x = width * i as f64 / ELLIPTIC_CHECK_GRID as f64;
        let tr = q_step_pq(v, energy, p, q, x).trace();
        if tr.abs() >= 2.0 {
            return Err(Error::Precondition(format!(
                "q-step product is not elliptic at x = {x} (trace {tr})"
            )));
        }
    }
    let l = SchrodingerLift { v, energy };
    let m0 = q_step_pq(v, energy, p, q, 0.0);
    let clockwise = m0.c < 0.0;
    let a0 = elliptic_angle(&m0) / TAU;
    let k = (rot_at(&l, p, q, 0.0) - a0).round();
    let integrand = |x: f64| {
        let a = (q_step_pq(v, energy, p, q, x).trace() / 2.0).clamp(-1.0, 1.0).acos() / TAU;
        Ok(if clockwise { k + 1.0 - a } else { k + a })
    };
    let (mean, _, points, change) = periodic_mean(integrand, q, 0.0)?;
    let rho_bar = mean / q as f64;
    Ok(RotationEstimate {
        rho: finish(rho_bar, true),
        rho_bar,
        n_steps: points,
        convergence_gap: change / q as f64,
        method: RotationMethod::EllipticIntegral,
        near_parabolic: 0,
    })
}

/// Allowed overshoot of `rho` past `[0, 1/2]`.
pub const DOS_TOLERANCE: f64 = 1e-6;

/// Integrated density of states `N(E) = 1 - 2 rho`.
pub fn density_of_states(rho: &RotationEstimate) -> Result<f64> {
    let r = rho.rho_bar;
    if !(-DOS_TOLERANCE..=0.5 + DOS_TOLERANCE).contains(&r) {
        return Err(Error::Consistency(format!("rotation number {r} is outside [0, 1/2]")));
    }
    Ok((1.0 - 2.0 * r).clamp(0.0, 1.0))
}
