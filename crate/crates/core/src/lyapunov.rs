//! Lyapunov exponents, complexified profiles, the subharmonic lower bound
//! for the analytic peak, and a cone-field hyperbolicity detector.

use crate::arithmetic::Frequency;
use crate::cocycle::{frac, orbit_point, q_step_complex, q_step_pq, schrodinger_step, ScaledProduct};
use crate::error::{Error, Result};
use crate::mat2::{principal, CMat2, Mat2};
use crate::potentials::{PoleData, Potential};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Smallest orbit length accepted by the estimators.
pub const MIN_STEPS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeOptions {
    pub n: usize,
    pub phases: usize,
    pub seed: u64,
}

impl Default for LeOptions {
    fn default() -> Self {
        LeOptions {
            n: 100_000,
            phases: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeMethod {
    /// Birkhoff average of `log ||A_n||/n` over random phases.
    OrbitAverage,
    /// `(1/q) int log r_spec(A^{(q)}(x + i nu)) dx` by adaptive trapezoid.
    RationalQuadrature { points: usize },
}

/// A finite-scale Lyapunov exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LEEstimate {
    /// Raw value; may be slightly negative for rational quadrature noise.
    pub value: f64,
    pub n_steps: usize,
    pub n_phases: usize,
    /// Dispersion across phases (orbit method) or quadrature error estimate.
    pub stderr: f64,
    /// `|LE(n) - LE(n/2)|`, or the last refinement change for quadrature.
    pub convergence_gap: f64,
    pub method: LeMethod,
}

impl LEEstimate {
    /// Value clamped at zero, used only in summary output.
    pub fn clamped(&self) -> f64 {
        self.value.max(0.0)
    }
}

fn check_strip(v: &Potential, nu: f64) -> Result<()> {
    if nu != 0.0 && nu.abs() > v.strip_halfwidth() {
        return Err(Error::StripViolation {
            im: nu,
            h: v.strip_halfwidth(),
        });
    }
    if nu != 0.0 && !v.is_analytic() {
        return Err(Error::Unsupported(
            "complexified exponents need an analytic potential".into(),
        ));
    }
    Ok(())
}

/// Seeded uniform starting phases.
pub fn phase_samples(phases: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..phases).map(|_| rng.gen::<f64>()).collect()
}

/// `log ||A_{n/2}||` and `log ||A_n||` along one orbit.
fn orbit_log_norms(v: &Potential, energy: f64, nu: f64, alpha: f64, x0: f64, n: usize) -> Result<(f64, f64)> {
    let half = n / 2;
    if nu == 0.0 {
        let mut prod = ScaledProduct::<f64>::new();
        let mut mid = 0.0;
        for k in 0..n {
            if k == half {
                mid = prod.log_norm();
            }
            prod.push(schrodinger_step(v, energy, orbit_point(x0, alpha, k)));
        }
        Ok((mid, prod.log_norm()))
    } else {
        let e = Complex64::new(energy, 0.0);
        let mut prod = ScaledProduct::<Complex64>::new();
        let mut mid = 0.0;
        for k in 0..n {
            if k == half {
                mid = prod.log_norm();
            }
            let z = Complex64::new(orbit_point(x0, alpha, k), nu);
            prod.push(Mat2::schrodinger(e - v.eval_complex(z)?));
        }
        Ok((mid, prod.log_norm()))
    }
}

/// Lyapunov exponent of `(alpha, S_{E - V(. + i nu)})`.
///
/// Irrational frequencies average `log ||A_n||/n` over `phases` seeded
/// starting points. Rational `p/q` integrates `log` of the spectral radius of
/// the q-step product instead, refining until two trapezoid levels agree.
pub fn le_estimate(v: &Potential, energy: f64, nu: f64, alpha: &Frequency, opts: &LeOptions) -> Result<LEEstimate> {
    if opts.n < MIN_STEPS {
        return Err(Error::param(format!("n = {} is below the minimum {MIN_STEPS}", opts.n)));
    }
    if opts.phases == 0 {
        return Err(Error::param("phases must be >= 1"));
    }
    check_strip(v, nu)?;
    if let Some((p, q)) = alpha.as_rational() {
        return rational_le(v, energy, nu, p, q);
    }
    let a = alpha.value();
    let n = opts.n;
    let results: Result<Vec<(f64, f64)>> = phase_samples(opts.phases, opts.seed)
        .par_iter()
        .map(|&x0| orbit_log_norms(v, energy, nu, a, x0, n))
        .collect();
    let results = results?;
    let m = results.len() as f64;
    let full: Vec<f64> = results.iter().map(|r| r.1 / n as f64).collect();
    let halfv: Vec<f64> = results.iter().map(|r| r.0 / (n / 2) as f64).collect();
    let mean = full.iter().sum::<f64>() / m;
    let mean_half = halfv.iter().sum::<f64>() / m;
    let stderr = if results.len() > 1 {
        let var = full.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(LEEstimate {
        value: mean,
        n_steps: n,
        n_phases: opts.phases,
        stderr,
        convergence_gap: (mean - mean_half).abs(),
        method: LeMethod::OrbitAverage,
    })
}

/// Neumaier-compensated sum.
fn compensated_sum(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut s, mut c, mut abs) = (0.0f64, 0.0f64, 0.0f64);
    for x in it {
        abs += x.abs();
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    (s + c, abs)
}

const QUAD_START: usize = 2048;
const QUAD_MAX: usize = 1 << 20;

/// Mean of a 1/q-periodic function by trapezoid refinement on `[0, 1/q)`,
/// stopping once two levels agree to `abs_tol` (or to roundoff).
/// Returns `(mean, error estimate, points, last change)`.
pub(crate) fn periodic_mean<F>(f: F, q: u64, abs_tol: f64) -> Result<(f64, f64, usize, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let width = 1.0 / q as f64;
    let eval = |n: usize, offset: f64| -> Result<(f64, f64)> {
        let vals: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| f(width * (i as f64 + offset) / n as f64))
            .collect();
        Ok(compensated_sum(vals?.into_iter()))
    };
    let mut n = QUAD_START;
    let (mut sum, mut abs) = eval(n, 0.0)?;
    let mut mean = sum / n as f64;
    loop {
        let (mid, mid_abs) = eval(n, 0.5)?;
        sum += mid;
        abs += mid_abs;
        n *= 2;
        let next = sum / n as f64;
        let change = (next - mean).abs();
        let roundoff = 16.0 * f64::EPSILON * abs / n as f64;
        mean = next;
        if change <= roundoff.max(1e-14 * mean.abs()).max(abs_tol) || n >= QUAD_MAX {
            return Ok((mean, change.max(roundoff), n, change));
        }
    }
}

/// `log r_spec` of the q-step product at `x + i nu`.
fn log_spectral_radius(v: &Potential, energy: f64, nu: f64, p: u64, q: u64, x: f64) -> Result<f64> {
    if nu == 0.0 {
        Ok(q_step_pq(v, energy, p, q, x).spectral_radius().ln())
    } else {
        Ok(q_step_complex(v, energy, p, q, Complex64::new(x, nu))?
            .spectral_radius()
            .ln())
    }
}

fn rational_le(v: &Potential, energy: f64, nu: f64, p: u64, q: u64) -> Result<LEEstimate> {
    let (mean, err, points, change) = periodic_mean(|x| log_spectral_radius(v, energy, nu, p, q, x), q, 0.0)?;
    Ok(LEEstimate {
        value: mean / q as f64,
        n_steps: points,
        n_phases: 1,
        stderr: err / q as f64,
        convergence_gap: change / q as f64,
        method: LeMethod::RationalQuadrature { points },
    })
}

/// Affine fit of a profile window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineFit {
    pub from: usize,
    pub to: usize,
    pub slope: f64,
    pub intercept: f64,
    /// `slope / (2 pi)`.
    pub acceleration: f64,
    /// `|slope/(2 pi) - round(slope/(2 pi))|`.
    pub quantization_residual: f64,
    /// Largest deviation of the data from the fitted line.
    pub max_residual: f64,
}

/// Sampled `nu -> L(nu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovProfile {
    pub nu: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Second differences at interior points (index `i` belongs to `nu[i+1]`).
    pub second_differences: Vec<f64>,
    pub fit: Option<AffineFit>,
}

/// Least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Second differences on a nonuniform grid, scaled like `L+ - 2L + L-`.
pub fn second_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..x.len().saturating_sub(1))
        .map(|i| {
            let hm = x[i] - x[i - 1];
            let hp = x[i + 1] - x[i];
            (hm * y[i + 1] - (hm + hp) * y[i] + hp * y[i - 1]) * 2.0 / (hm + hp)
        })
        .collect()
}

/// Profile `nu -> LE(alpha, A(. + i nu))` with an affine fit on
/// `fit_window = (from, to)` (inclusive indices into the grid).
pub fn le_profile(
    v: &Potential,
    energy: f64,
    alpha: &Frequency,
    nu_grid: &[f64],
    opts: &LeOptions,
    fit_window: Option<(usize, usize)>,
) -> Result<LyapunovProfile> {
    if nu_grid.is_empty() {
        return Err(Error::param("empty nu grid"));
    }
    if nu_grid.windows(2).any(|w| !(w[1] > w[0])) || nu_grid[0] < 0.0 {
        return Err(Error::param("nu grid must be nonnegative and strictly increasing"));
    }
    let ests: Result<Vec<LEEstimate>> = nu_grid
        .iter()
        .map(|&nu| le_estimate(v, energy, nu, alpha, opts))
        .collect();
    let ests = ests?;
    let values: Vec<f64> = ests.iter().map(|e| e.value).collect();
    let stderr: Vec<f64> = ests.iter().map(|e| e.stderr).collect();
    let fit = match fit_window {
        Some((from, to)) => {
            if !(from < to && to < nu_grid.len()) {
                return Err(Error::param(format!("bad fit window {from}..={to}")));
            }
            let (slope, intercept) = fit_line(&nu_grid[from..=to], &values[from..=to]);
            let acc = slope / (2.0 * PI);
            let max_residual = (from..=to)
                .map(|i| (values[i] - (slope * nu_grid[i] + intercept)).abs())
                .fold(0.0, f64::max);
            Some(AffineFit {
                from,
                to,
                slope,
                intercept,
                acceleration: acc,
                quantization_residual: (acc - acc.round()).abs(),
                max_residual,
            })
        }
        None => None,
    };
    Ok(LyapunovProfile {
        second_differences: second_differences(nu_grid, &values),
        nu: nu_grid.to_vec(),
        values,
        stderr,
        fit,
    })
}

/// Upper end of the usable `nu` range for a potential.
pub fn nu_upper_bound(v: &Potential, user: Option<f64>) -> f64 {
    let h = v.strip_halfwidth();
    match user {
        Some(u) => u.min(h),
        None => h,
    }
}

/// Subharmonic lower bound `log z0 + log((|E| + sqrt(E^2 - 4))/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermanBound {
    pub value: f64,
    /// False when the bound is not positive.
    pub informative: bool,
}

/// Lower bound on the exponent of the analytic peak with parameters
/// `(K, lambda)` at `|E| > 2`; independent of `K` and of the frequency.
pub fn herman_lower_bound(height: f64, lambda: f64, energy: f64) -> Result<HermanBound> {
    if !(height > 0.0 && lambda > 0.0) {
        return Err(Error::param("K and lambda must be positive"));
    }
    if !(energy.abs() > 2.0) {
        return Err(Error::Domain(format!("the bound needs |E| > 2, got {energy}")));
    }
    let log_z0 = -2.0 * (0.5 / lambda.sqrt()).asinh();
    let e = energy.abs();
    // (e + sqrt(e^2 - 4))/2 = exp(acosh(e/2))
    let value = log_z0 + (e / 2.0).acosh();
    Ok(HermanBound {
        value,
        informative: value > 0.0,
    })
}

/// The matrix `M_E(z)`, analytic on `|z| < z1`, with
/// `S_{E - V}(x) = M_E(e^{2 pi i x}) / (e^{2 pi i x} - z0)`.
pub fn herman_matrix(poles: &PoleData, energy: f64, z: Complex64) -> CMat2 {
    let w = z - poles.z0;
    Mat2::new(
        energy * w - poles.c * z / (z - poles.z1),
        -w,
        w,
        Complex64::new(0.0, 0.0),
    )
}

/// Parameters of the cone-field test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UhParams {
    /// Block length.
    pub n: usize,
    /// Smallest cone half-aperture tried (radians).
    pub margin: f64,
    /// Size of the phase grid.
    pub phases: usize,
    /// Required `min_x log(s1/s2)/n` of the block.
    pub min_gap_rate: f64,
}

impl Default for UhParams {
    fn default() -> Self {
        UhParams {
            n: 64,
            margin: 1e-3,
            phases: 512,
            min_gap_rate: 1e-3,
        }
    }
}

/// Evidence for uniform hyperbolicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeCertificate {
    /// Half-aperture of the invariant cones.
    pub aperture: f64,
    pub n: usize,
    pub phases: usize,
    /// Smallest singular-value gap rate over the grid.
    pub gap_rate: f64,
    /// Smallest distance of an image edge to the target cone edge, over `aperture`.
    pub slack: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UhVerdict {
    pub uniformly_hyperbolic: bool,
    pub certificate: Option<ConeCertificate>,
}

/// Angular rounding allowance when checking the image orientation.
const ORDER_EPS: f64 = 1e-12;

/// Angle of the line through `v`, in `(-pi/2, pi/2]`.
fn line_angle(v: [f64; 2]) -> f64 {
    let a = v[1].atan2(v[0]);
    let r = a - PI * (a / PI).round();
    if r <= -PI / 2.0 {
        r + PI
    } else {
        r
    }
}

/// Signed projective difference `a - b` in `(-pi/2, pi/2]`.
fn line_diff(a: f64, b: f64) -> f64 {
    let d = principal(2.0 * (a - b)) / 2.0;
    if d <= -PI / 2.0 {
        d + PI
    } else {
        d
    }
}

/// Cone-field test for uniform hyperbolicity of `(alpha, S_{E - V})`.
///
/// The cone at `x` is centred on the top left singular direction of the
/// block ending at `x`. Each block must map its cone strictly into the cone
/// at the image point, with a uniform singular-value gap.
pub fn uh_test(v: &Potential, energy: f64, alpha: &Frequency, params: &UhParams) -> Result<UhVerdict> {
    if params.n == 0 || params.phases == 0 {
        return Err(Error::param("uh_test needs n >= 1 and phases >= 1"));
    }
    if !(params.margin > 0.0 && params.margin < PI / 4.0) {
        return Err(Error::param("margin must lie in (0, pi/4)"));
    }
    let a = alpha.value();
    let n = params.n;
    let block = |x: f64| {
        let mut p = ScaledProduct::<f64>::new();
        for k in 0..n {
            p.push(schrodinger_step(v, energy, orbit_point(x, a, k)));
        }
        p
    };
    // (center angle, block matrix normalized, target angle, gap rate)
    let data: Vec<(f64, Mat2, f64, f64)> = (0..params.phases)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / params.phases as f64;
            let before = block(frac(x - n as f64 * a));
            let here = block(x);
            let m = here.normalized();
            let c = line_angle(before.normalized().top_left_singular());
            let t = line_angle(m.top_left_singular());
            let gap = 2.0 * here.log_norm() / n as f64;
            (c, m, t, gap)
        })
        .collect();
    let gap_rate = data.iter().map(|d| d.3).fold(f64::INFINITY, f64::min);
    if !(gap_rate > params.min_gap_rate) {
        return Ok(UhVerdict {
            uniformly_hyperbolic: false,
            certificate: None,
        });
    }
    let mut aperture = PI / 4.0;
    while aperture >= params.margin {
        let mut slack = f64::INFINITY;
        for &(c, m, t, _) in &data {
            let image = |ang: f64| line_angle(m.apply([ang.cos(), ang.sin()]));
            let lo = line_diff(image(c - aperture), t);
            let mid = line_diff(image(c), t);
            let hi = line_diff(image(c + aperture), t);
            // strong contraction collapses the image to rounding level
            if !(lo <= mid + ORDER_EPS && mid <= hi + ORDER_EPS) {
                slack = -1.0;
                break;
            }
            slack = slack.min((aperture - hi).min(aperture + lo) / aperture);
            if slack <= 1e-3 {
                break;
            }
        }
        if slack > 1e-3 {
            return Ok(UhVerdict {
                uniformly_hyperbolic: true,
                certificate: Some(ConeCertificate {
                    aperture,
                    n,
                    phases: params.phases,
                    gap_rate,
                    slack,
                }),
            });
        }
        aperture /= 2.0;
    }
    Ok(UhVerdict {
        uniformly_hyperbolic: false,
        certificate: None,
    })
}
