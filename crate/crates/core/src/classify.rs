//! Elliptic / hyperbolic / mixed classification of matrix loops, regularity
//! certificates, and the dominant eigenvalue on complexified circles.

use crate::cocycle::MatrixLoop;
use crate::error::{Error, Result};
use crate::mat2::principal;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Smallest accepted phase grid.
pub const MIN_GRID: usize = 256;
/// `||tr| - 2|` below this counts as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-8;
/// Distance to the unit circle treated as unimodular.
pub const UNIMODULAR_TOL: f64 = 1e-6;
/// Number of coarse `nu` samples before bisection.
const NU_SCAN: usize = 32;
/// Relative bisection tolerance for `h'`.
const H_PRIME_REL_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceClass {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    TotallyElliptic,
    TotallyHyperbolic,
    Mixed,
    /// `max |tr|` within the resolution tolerance of 2 without a crossing.
    Undetermined,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::TotallyElliptic => "elliptic",
            Verdict::TotallyHyperbolic => "hyperbolic",
            Verdict::Mixed => "mixed",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub grid: Vec<f64>,
    pub traces: Vec<f64>,
    pub classes: Vec<TraceClass>,
    /// `2 - max |tr|`; negative when some point is hyperbolic.
    pub delta: f64,
    /// `min |tr| - 2`.
    pub hyperbolic_margin: f64,
    /// Maximal arcs `[a, b]` of grid points with `|tr| <= 2`.
    pub elliptic_arcs: Vec<(f64, f64)>,
    /// Points where `|tr| = 2`, refined by bisection.
    pub crossings: Vec<f64>,
    /// Largest per-sample pad `10 h max |tr'|` over the neighbouring cells.
    pub tolerance: f64,
    pub lipschitz: f64,
    pub verdict: Verdict,
    /// Every crossing has nonzero trace derivative.
    pub transversal: bool,
    pub min_transversal_derivative: Option<f64>,
}

impl EllipticityReport {
    pub fn is_totally_elliptic(&self) -> bool {
        self.verdict == Verdict::TotallyElliptic
    }

    pub fn is_mixed(&self) -> bool {
        self.verdict == Verdict::Mixed
    }
}

fn refine_crossing(lp: &dyn MatrixLoop, mut lo: f64, mut hi: f64) -> f64 {
    let g = |x: f64| lp.at(x).trace().abs() - 2.0;
    let glo = g(lo);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples `tr A` on `grid_size` phases and classifies the loop.
pub fn ellipticity_report(lp: &dyn MatrixLoop, grid_size: usize) -> Result<EllipticityReport> {
    if grid_size < MIN_GRID {
        return Err(Error::param(format!("grid_size must be >= {MIN_GRID}")));
    }
    let n = grid_size;
    let grid: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let (traces, derivs): (Vec<f64>, Vec<f64>) = grid
        .par_iter()
        .map(|&x| (lp.at(x).trace(), lp.trace_derivative(x)))
        .unzip();
    let lipschitz = derivs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    // pad each sample by 10 h times the largest |tr'| on its two cells
    let h = 1.0 / n as f64;
    let pads: Vec<f64> = (0..n)
        .map(|j| {
            let local = derivs[(j + n - 1) % n]
                .abs()
                .max(derivs[j].abs())
                .max(derivs[(j + 1) % n].abs());
            10.0 * h * local
        })
        .collect();
    let tolerance = pads.iter().fold(0.0f64, |m, &p| m.max(p));
    let classes: Vec<TraceClass> = traces
        .iter()
        .map(|t| {
            let g = t.abs() - 2.0;
            if g.abs() <= PARABOLIC_TOL {
                TraceClass::Parabolic
            } else if g < 0.0 {
                TraceClass::Elliptic
            } else {
                TraceClass::Hyperbolic
            }
        })
        .collect();
    let max_abs = traces.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let min_abs = traces.iter().fold(f64::INFINITY, |m, t| m.min(t.abs()));

    let mut crossings = Vec::new();
    for j in 0..n {
        let k = (j + 1) % n;
        let (gj, gk) = (traces[j].abs() - 2.0, traces[k].abs() - 2.0);
        if classes[j] == TraceClass::Parabolic {
            crossings.push(grid[j]);
        } else if classes[k] != TraceClass::Parabolic && (gj > 0.0) != (gk > 0.0) {
            let hi = if k == 0 { 1.0 } else { grid[k] };
            crossings.push(refine_crossing(lp, grid[j], hi));
        }
    }

    let mut elliptic_arcs = Vec::new();
    let inside = |j: usize| traces[j].abs() <= 2.0 + PARABOLIC_TOL;
    if (0..n).all(inside) {
        elliptic_arcs.push((0.0, 1.0));
    } else if let Some(start) = (0..n).find(|&j| !inside(j)) {
        // walk once around the circle from a point outside
        let mut open: Option<usize> = None;
        for s in 1..=n {
            let j = (start + s) % n;
            match (inside(j), open) {
                (true, None) => open = Some(start + s),
                (false, Some(a)) => {
                    elliptic_arcs.push((a as f64 / n as f64 % 1.0, (start + s - 1) as f64 / n as f64 % 1.0));
                    open = None;
                }
                _ => {}
            }
        }
        elliptic_arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let min_der = if crossings.is_empty() {
        None
    } else {
        Some(
            crossings
                .iter()
                .map(|&x| lp.trace_derivative(x).abs())
                .fold(f64::INFINITY, f64::min),
        )
    };
    let transversal = match min_der {
        Some(d) => d > 1e-9 * (1.0 + lipschitz) && !crossings.is_empty(),
        None => false,
    };
    let verdict = if !crossings.is_empty() {
        Verdict::Mixed
    } else if (0..n).all(|j| traces[j].abs() + pads[j] <= 2.0) {
        Verdict::TotallyElliptic
    } else if (0..n).all(|j| traces[j].abs() - pads[j] >= 2.0) {
        Verdict::TotallyHyperbolic
    } else {
        Verdict::Undetermined
    };
    Ok(EllipticityReport {
        grid,
        traces,
        classes,
        delta: 2.0 - max_abs,
        hyperbolic_margin: min_abs - 2.0,
        elliptic_arcs,
        crossings,
        tolerance,
        lipschitz,
        verdict,
        transversal,
        min_transversal_derivative: min_der,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub regular: bool,
    /// Largest `nu` (to bisection tolerance) with no unimodular eigenvalue on
    /// `0 < Im z <= nu`; zero when not regular.
    pub h_prime: f64,
    /// A crossing with vanishing derivative, or an elliptic point for
    /// totally elliptic loops.
    pub witness: Option<f64>,
    pub report: EllipticityReport,
}

/// True if some eigenvalue of `A(x + i nu)` is on the unit circle for a grid
/// phase or between two neighbouring phases.
pub fn has_unimodular_eigenvalue(lp: &dyn MatrixLoop, nu: f64, grid_size: usize) -> Result<bool> {
    let traces: Result<Vec<Complex64>> = (0..grid_size)
        .into_par_iter()
        .map(|j| Ok(lp.at_complex(Complex64::new(j as f64 / grid_size as f64, nu))?.trace()))
        .collect();
    let traces = traces?;
    for j in 0..grid_size {
        let t = traces[j];
        let mu = dominant_root(t);
        if (mu.norm() - 1.0).abs() < UNIMODULAR_TOL {
            return Ok(true);
        }
        let s = traces[(j + 1) % grid_size];
        if (t.im > 0.0) != (s.im > 0.0) {
            let w = t.im / (t.im - s.im);
            let re = t.re + w * (s.re - t.re);
            if re.abs() <= 2.0 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Root of `mu^2 - t mu + 1` of larger modulus.
pub fn dominant_root(t: Complex64) -> Complex64 {
    let half = t * 0.5;
    let d = (half * half - 1.0).sqrt();
    let (a, b) = (half + d, half - d);
    if a.norm() >= b.norm() {
        a
    } else {
        b
    }
}

/// Transversality check on the crossing set plus an `h'` estimate.
pub fn regularity_check(lp: &dyn MatrixLoop, grid_size: usize) -> Result<RegularityReport> {
    let strip = lp.strip_halfwidth();
    if !(strip > 0.0) {
        return Err(Error::Unsupported("regularity needs an analytic loop".into()));
    }
    lp.at_complex(Complex64::new(0.0, 0.0))?;
    let report = ellipticity_report(lp, grid_size)?;
    let (regular, witness) = match report.verdict {
        Verdict::TotallyHyperbolic => (true, None),
        Verdict::Mixed => {
            if report.transversal {
                (true, None)
            } else {
                let w = report
                    .crossings
                    .iter()
                    .copied()
                    .min_by(|a, b| lp.trace_derivative(*a).abs().total_cmp(&lp.trace_derivative(*b).abs()));
                (false, w)
            }
        }
        Verdict::TotallyElliptic | Verdict::Undetermined => {
            let j = (0..report.traces.len())
                .min_by(|&a, &b| report.traces[a].abs().total_cmp(&report.traces[b].abs()))
                .unwrap_or(0);
            (false, Some(report.grid[j]))
        }
    };
    let h_prime = if regular { h_prime_estimate(lp, grid_size)? } else { 0.0 };
    Ok(RegularityReport {
        regular,
        h_prime,
        witness,
        report,
    })
}

fn h_prime_estimate(lp: &dyn MatrixLoop, grid_size: usize) -> Result<f64> {
    let top = lp.strip_halfwidth().min(1.0);
    let mut good = 0.0;
    let mut bad = None;
    for k in 1..=NU_SCAN {
        let nu = top * k as f64 / NU_SCAN as f64;
        if has_unimodular_eigenvalue(lp, nu, grid_size)? {
            bad = Some(nu);
            break;
        }
        good = nu;
    }
    let Some(mut bad) = bad else {
        return Ok(top);
    };
    while bad - good > H_PRIME_REL_TOL * top {
        let mid = 0.5 * (good + bad);
        if has_unimodular_eigenvalue(lp, mid, grid_size)? {
            bad = mid;
        } else {
            good = mid;
        }
    }
    Ok(good)
}

/// The dominant eigenvalue sampled on `Im z = nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBranch {
    pub nu: f64,
    pub values: Vec<Complex64>,
    /// Integer slope `r` in `int log |lambda(x + i nu)| dx = 2 pi r nu + Re theta_bar`.
    pub winding: i64,
    /// Unrounded `-(argument increment)/(2 pi)`.
    pub winding_raw: f64,
    pub mean_log: Complex64,
    pub spectral_radius_min: f64,
    pub winding_nonnegative: bool,
    pub mean_log_nonnegative: bool,
}

impl EigenBranch {
    /// Grid mean of `log |lambda|`.
    pub fn mean_log_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm().ln()).sum::<f64>() / self.values.len() as f64
    }
}

/// Dominant eigenvalue of `A(x + i nu)` followed continuously around the circle.
pub fn eigen_branch(lp: &dyn MatrixLoop, nu: f64, grid_size: usize) -> Result<EigenBranch> {
    if grid_size < MIN_GRID {
        return Err(Error::param(format!("grid_size must be >= {MIN_GRID}")));
    }
    if !(nu > 0.0 && nu <= lp.strip_halfwidth()) {
        return Err(Error::StripViolation {
            im: nu,
            h: lp.strip_halfwidth(),
        });
    }
    let n = grid_size;
    let traces: Result<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| Ok(lp.at_complex(Complex64::new(j as f64 / n as f64, nu))?.trace()))
        .collect();
    let traces = traces?;
    let mut values: Vec<Complex64> = Vec::with_capacity(n);
    for (j, &t) in traces.iter().enumerate() {
        let mut mu = dominant_root(t);
        if (mu.norm() - 1.0).abs() < UNIMODULAR_TOL {
            return Err(Error::Regularity {
                x: j as f64 / n as f64,
                modulus: mu.norm(),
            });
        }
        if let Some(&prev) = values.last() {
            let other = mu.inv();
            if (mu - prev).norm() > (other - prev).norm() {
                mu = other;
            }
        }
        values.push(mu);
    }
    let mut total = 0.0;
    let mut args = Vec::with_capacity(n);
    let mut acc = values[0].arg();
    args.push(acc);
    for j in 1..=n {
        let step = principal(values[j % n].arg() - values[j - 1].arg());
        total += step;
        acc += step;
        if j < n {
            args.push(acc);
        }
    }
    let winding_raw = -total / (2.0 * PI);
    let winding = winding_raw.round() as i64;
    if (winding_raw - winding as f64).abs() > 0.01 {
        return Err(Error::Numerical(format!(
            "argument increment {winding_raw} turns is not an integer; refine the grid"
        )));
    }
    // theta(z) = log lambda(z) + 2 pi i r z
    let w = -(winding as f64);
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let x = j as f64 / n as f64;
        let log_l = Complex64::new(values[j].norm().ln(), args[j]);
        sum += log_l - Complex64::new(0.0, 2.0 * PI * w) * Complex64::new(x, nu);
    }
    let mut mean_log = sum / n as f64;
    mean_log.im = principal(mean_log.im);
    let spectral_radius_min = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    Ok(EigenBranch {
        nu,
        winding_nonnegative: winding >= 0,
        mean_log_nonnegative: mean_log.re >= -1e-6,
        values,
        winding,
        winding_raw,
        mean_log,
        spectral_radius_min,
    })
}
