//! Transfer matrices of Schrodinger cocycles and matrix-valued loops.

use crate::arithmetic::{mod_inverse, Frequency};
use crate::error::{Error, Result};
use crate::mat2::{CMat2, Mat2, Scalar};
use crate::potentials::Potential;
use num_complex::Complex64;

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `k`-th orbit point `frac(x0 + k alpha)`.
#[inline]
pub fn orbit_point(x0: f64, alpha: f64, k: usize) -> f64 {
    frac(x0 + k as f64 * alpha)
}

/// `S_{E - V(x)}`; the determinant is exactly 1 by construction.
#[inline]
pub fn schrodinger_step(v: &Potential, energy: f64, x: f64) -> Mat2 {
    Mat2::schrodinger(energy - v.eval(x))
}

/// `S_{E - V(z)}` at a strip point.
pub fn schrodinger_step_complex(v: &Potential, energy: Complex64, z: Complex64) -> Result<CMat2> {
    Ok(Mat2::schrodinger(energy - v.eval_complex(z)?))
}

/// Product kept as a unit-norm matrix times `exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledProduct<T: Scalar = f64> {
    mat: Mat2<T>,
    log_scale: f64,
    pending: f64,
    steps: usize,
    since_check: u32,
}

/// Relative determinant drift that triggers a `sqrt(det)` correction.
pub const DET_TOLERANCE: f64 = 1e-9;

impl<T: Scalar> Default for ScaledProduct<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ScaledProduct<T> {
    pub fn new() -> Self {
        ScaledProduct {
            mat: Mat2::identity(),
            log_scale: 0.0,
            pending: 1.0,
            steps: 0,
            since_check: 0,
        }
    }

    /// Left-multiplies by `m` and rescales so the largest entry has modulus 1.
    #[inline]
    pub fn push(&mut self, m: Mat2<T>) {
        let p = m * self.mat;
        let n = p.max_abs();
        self.mat = p.scale(1.0 / n);
        self.pending *= n;
        self.steps += 1;
        self.since_check += 1;
        if !(1e-100..=1e100).contains(&self.pending) || self.since_check >= 64 {
            self.flush();
        }
    }

    fn flush(&mut self) {
        self.log_scale += self.pending.ln();
        self.pending = 1.0;
        self.since_check = 0;
        // det N should equal exp(-2 log_scale); correct drift while representable
        if self.log_scale.abs() < 300.0 {
            let expect = (-2.0 * self.log_scale).exp();
            let det = self.mat.det();
            if (det - T::from_real(expect)).abs() > DET_TOLERANCE * (1.0 + expect) {
                let fix = (T::from_real(expect) * det.recip()).sqrt();
                let m = self.mat;
                self.mat = Mat2::new(m.a * fix, m.b * fix, m.c * fix, m.d * fix);
            }
        }
    }

    /// Normalized factor (operator norm 1).
    pub fn normalized(&self) -> Mat2<T> {
        self.mat.scale(1.0 / self.mat.op_norm())
    }

    /// Accumulated log of the norm factors.
    pub fn log_scale(&self) -> f64 {
        self.log_scale + self.pending.ln()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `log ||product||`.
    pub fn log_norm(&self) -> f64 {
        self.log_scale() + self.mat.op_norm().ln()
    }

    /// The full product; overflows for long hyperbolic chains.
    pub fn reconstruct(&self) -> Mat2<T> {
        self.mat.scale(self.log_scale().exp())
    }

    /// Relative determinant defect `|det N - e^{-2l}| / (1 + e^{-2l})`.
    pub fn det_defect(&self) -> f64 {
        let expect = (-2.0 * self.log_scale()).exp();
        (self.mat.det() - T::from_real(expect)).abs() / (1.0 + expect)
    }
}

/// `A_n(x0) = S(x0 + (n-1) alpha) ... S(x0)` with rescaling.
pub fn scaled_transfer(v: &Potential, energy: f64, alpha: &Frequency, x0: f64, n: usize) -> Result<ScaledProduct> {
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    let a = alpha.value();
    let mut prod = ScaledProduct::new();
    for k in 0..n {
        prod.push(schrodinger_step(v, energy, orbit_point(x0, a, k)));
    }
    Ok(prod)
}

/// Complexified product along the orbit of `x0 + i nu`.
pub fn scaled_transfer_complex(
    v: &Potential,
    energy: f64,
    nu: f64,
    alpha: &Frequency,
    x0: f64,
    n: usize,
) -> Result<ScaledProduct<Complex64>> {
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    let a = alpha.value();
    let e = Complex64::new(energy, 0.0);
    let mut prod = ScaledProduct::new();
    for k in 0..n {
        let z = Complex64::new(orbit_point(x0, a, k), nu);
        prod.push(schrodinger_step_complex(v, e, z)?);
    }
    Ok(prod)
}

/// `A^{(q)}(x) = S(x + (q-1)p/q) ... S(x)`.
pub fn q_step_pq(v: &Potential, energy: f64, p: u64, q: u64, x: f64) -> Mat2 {
    let mut m = Mat2::identity();
    for k in 0..q {
        m = schrodinger_step(v, energy, frac(x + (k * p % q) as f64 / q as f64)) * m;
    }
    m
}

/// q-step product for a rational frequency.
pub fn q_step(v: &Potential, energy: f64, freq: &Frequency, x: f64) -> Result<Mat2> {
    let (p, q) = freq
        .as_rational()
        .ok_or_else(|| Error::param("q-step products need a rational frequency"))?;
    Ok(q_step_pq(v, energy, p, q, x))
}

/// Complexified q-step product at `z`.
pub fn q_step_complex(v: &Potential, energy: f64, p: u64, q: u64, z: Complex64) -> Result<CMat2> {
    let e = Complex64::new(energy, 0.0);
    let mut m = CMat2::identity();
    for k in 0..q {
        let shift = (k * p % q) as f64 / q as f64;
        m = schrodinger_step_complex(v, e, Complex64::new(frac(z.re + shift), z.im))? * m;
    }
    Ok(m)
}

/// The orbit point of `x` under `x -> x + p/q` inside `[anchor, anchor + 1/q)`,
/// with the number of steps `j` such that `x_tilde = x + j p/q (mod 1)`.
pub fn orbit_representative(x: f64, p: u64, q: u64, anchor: f64) -> (f64, u64) {
    let qf = q as f64;
    let u = frac(x - anchor);
    let cell = ((u * qf).floor() as u64).min(q - 1);
    let x_tilde = anchor + (u - cell as f64 / qf);
    let pinv = mod_inverse(p % q, q).unwrap_or(0);
    let j = ((q - cell) % q) * pinv % q;
    (x_tilde, j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceBranch {
    /// `|E| < 2`, `E = 2 cos theta`.
    Elliptic,
    /// `|E| > 2`, `E = 2 cosh theta`.
    Hyperbolic,
    /// `|E| = 2` or numerically indistinguishable; series limit.
    Parabolic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEval {
    pub value: f64,
    pub branch: TraceBranch,
    pub x_tilde: f64,
}

/// Below this angle the series form of `sin(q t)/sin t` is used.
const SERIES_THETA: f64 = 1e-7;

/// `U_{q-1}(E/2)` and `2 T_q(E/2)` through the trigonometric or hyperbolic
/// parametrisation of the energy.
pub fn chebyshev_pair(energy: f64, q: u64) -> (f64, f64, TraceBranch) {
    let qf = q as f64;
    let s = if energy < 0.0 { -1.0 } else { 1.0 };
    let half = energy.abs() / 2.0;
    let sign_u = if q.is_multiple_of(2) { s } else { 1.0 }; // s^(q-1)
    let sign_t = if q.is_multiple_of(2) { 1.0 } else { s }; // s^q
    if half == 1.0 {
        return (sign_u * qf, sign_t * 2.0, TraceBranch::Parabolic);
    }
    if half < 1.0 {
        let th = half.acos();
        if th < SERIES_THETA {
            let u = qf * (1.0 - (qf * qf - 1.0) * th * th / 6.0);
            let t = 2.0 * (qf * th).cos();
            return (sign_u * u, sign_t * t, TraceBranch::Parabolic);
        }
        let u = (qf * th).sin() / th.sin();
        (sign_u * u, sign_t * 2.0 * (qf * th).cos(), TraceBranch::Elliptic)
    } else {
        let th = half.acosh();
        if th < SERIES_THETA {
            let u = qf * (1.0 + (qf * qf - 1.0) * th * th / 6.0);
            let t = 2.0 * (qf * th).cosh();
            return (sign_u * u, sign_t * t, TraceBranch::Parabolic);
        }
        let u = (qf * th).sinh() / th.sinh();
        (sign_u * u, sign_t * 2.0 * (qf * th).cosh(), TraceBranch::Hyperbolic)
    }
}

/// Closed-form trace of the q-step product for potentials supported on an
/// arc shorter than `1/q`: `-V(x_tilde) U_{q-1}(E/2) + 2 T_q(E/2)`.
///
/// `x_tilde` is the orbit point under rotation by `1/q` inside the cell that
/// starts at the left end of the support.
pub fn trace_closed_form(v: &Potential, energy: f64, q: u64, x: f64) -> Result<TraceEval> {
    if q == 0 {
        return Err(Error::param("q must be >= 1"));
    }
    if q > 1 && v.support_length() >= 1.0 / q as f64 {
        return Err(Error::Precondition(format!(
            "support length {} is not below 1/q = {}",
            v.support_length(),
            1.0 / q as f64
        )));
    }
    let (x_tilde, _) = orbit_representative(x, 1, q, v.support_start());
    let (u, t, branch) = chebyshev_pair(energy, q);
    Ok(TraceEval {
        value: -v.eval(x_tilde) * u + t,
        branch,
        x_tilde,
    })
}

/// A continuous map from the circle into 2x2 matrices.
pub trait MatrixLoop: Sync {
    fn at(&self, x: f64) -> Mat2;

    /// Analytic extension at `z` with `|Im z| <= strip_halfwidth()`.
    fn at_complex(&self, _z: Complex64) -> Result<CMat2> {
        Err(Error::Unsupported("this loop has no analytic extension".into()))
    }

    /// Half-width of the strip of analyticity; 0 for non-analytic loops.
    fn strip_halfwidth(&self) -> f64 {
        0.0
    }

    /// `d/dx tr A(x)`.
    fn trace_derivative(&self, x: f64) -> f64 {
        let h = 1e-6;
        (self.at(x + h).trace() - self.at(x - h).trace()) / (2.0 * h)
    }
}

/// One Schrodinger step `x -> S_{E - V(x)}`.
#[derive(Clone, Copy, Debug)]
pub struct SchrodingerLoop<'a> {
    pub potential: &'a Potential,
    pub energy: f64,
}

impl MatrixLoop for SchrodingerLoop<'_> {
    fn at(&self, x: f64) -> Mat2 {
        schrodinger_step(self.potential, self.energy, x)
    }

    fn at_complex(&self, z: Complex64) -> Result<CMat2> {
        schrodinger_step_complex(self.potential, Complex64::new(self.energy, 0.0), z)
    }

    fn strip_halfwidth(&self) -> f64 {
        self.potential.strip_halfwidth()
    }

    fn trace_derivative(&self, x: f64) -> f64 {
        -self.potential.derivative(x)
    }
}

/// The q-step product `x -> A^{(q)}(x)` at frequency `p/q`.
#[derive(Clone, Copy, Debug)]
pub struct QStepLoop<'a> {
    pub potential: &'a Potential,
    pub energy: f64,
    pub p: u64,
    pub q: u64,
}

impl<'a> QStepLoop<'a> {
    pub fn new(potential: &'a Potential, energy: f64, freq: &Frequency) -> Result<Self> {
        let (p, q) = freq
            .as_rational()
            .ok_or_else(|| Error::param("q-step loops need a rational frequency"))?;
        Ok(QStepLoop {
            potential,
            energy,
            p,
            q,
        })
    }

    fn point(&self, x: f64, k: u64) -> f64 {
        frac(x + (k * self.p % self.q) as f64 / self.q as f64)
    }
}

impl MatrixLoop for QStepLoop<'_> {
    fn at(&self, x: f64) -> Mat2 {
        q_step_pq(self.potential, self.energy, self.p, self.q, x)
    }

    fn at_complex(&self, z: Complex64) -> Result<CMat2> {
        q_step_complex(self.potential, self.energy, self.p, self.q, z)
    }

    fn strip_halfwidth(&self) -> f64 {
        self.potential.strip_halfwidth()
    }

    /// Product rule with `dS/dx = [[-V', 0], [0, 0]]`.
    fn trace_derivative(&self, x: f64) -> f64 {
        let q = self.q as usize;
        let steps: Vec<Mat2> = (0..self.q)
            .map(|k| schrodinger_step(self.potential, self.energy, self.point(x, k)))
            .collect();
        // prefix[k] = S_{k-1} ... S_0, suffix[k] = S_{q-1} ... S_{k+1}
        let mut prefix = vec![Mat2::identity(); q + 1];
        for k in 0..q {
            prefix[k + 1] = steps[k] * prefix[k];
        }
        let mut suffix = vec![Mat2::identity(); q + 1];
        for k in (0..q).rev() {
            suffix[k] = suffix[k + 1] * steps[k];
        }
        let mut d = 0.0;
        for k in 0..q {
            let dv = -self.potential.derivative(self.point(x, k as u64));
            let ds = Mat2::new(dv, 0.0, 0.0, 0.0);
            d += (suffix[k + 1] * ds * prefix[k]).trace();
        }
        d
    }
}

/// A constant loop.
#[derive(Clone, Copy, Debug)]
pub struct ConstantLoop(pub Mat2);

impl MatrixLoop for ConstantLoop {
    fn at(&self, _x: f64) -> Mat2 {
        self.0
    }

    fn at_complex(&self, _z: Complex64) -> Result<CMat2> {
        Ok(self.0.to_complex())
    }

    fn strip_halfwidth(&self) -> f64 {
        f64::INFINITY
    }

    fn trace_derivative(&self, _x: f64) -> f64 {
        0.0
    }
}

/// A loop given by a closure (real values only).
pub struct FnLoop<F>(pub F);

impl<F: Fn(f64) -> Mat2 + Sync> MatrixLoop for FnLoop<F> {
    fn at(&self, x: f64) -> Mat2 {
        (self.0)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::golden_mean;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn peak() -> Potential {
        Potential::poisson_peak(10.0, 1e4).unwrap().0
    }

    #[test]
    fn step_examples() {
        let free = Potential::free();
        assert_eq!(schrodinger_step(&free, 3.0, 0.37), Mat2::new(3.0, -1.0, 1.0, 0.0));
        assert_eq!(schrodinger_step(&peak(), 0.0, 0.0), Mat2::new(-10.0, -1.0, 1.0, 0.0));
    }

    #[test]
    fn two_step_trace_identity() {
        let v = peak();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (x, a, e): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen_range(-3.0..12.0));
            let m = schrodinger_step(&v, e, frac(x + a)) * schrodinger_step(&v, e, x);
            let expect = -2.0 + (e - v.eval(frac(x + a))) * (e - v.eval(x));
            assert!((m.trace() - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn elliptic_order_six() {
        let free = Potential::free();
        let p = scaled_transfer(&free, 1.0, &Frequency::golden(), 0.3, 6).unwrap();
        let m = p.reconstruct();
        assert!(m.max_abs_diff(&Mat2::identity()) < 1e-12);
        assert!(p.log_norm().abs() < 1e-12);
    }

    #[test]
    fn constant_hyperbolic_growth() {
        let free = Potential::free();
        // log ||C^n|| = n log mu + log ||P|| with ||P|| ~ 1.34 for the spectral
        // projection, so n = 100 carries a 3e-3 bias; n = 1000 brings it to 3e-4
        let p = scaled_transfer(&free, 3.0, &Frequency::golden(), 0.0, 1000).unwrap();
        let rate = p.log_norm() / 1000.0;
        assert!((rate - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-3, "{rate}");
    }

    #[test]
    fn long_chains_do_not_overflow() {
        let free = Potential::free();
        // LE = acosh(2.5) * ... about 1.57 per step, 10^6 steps
        let p = scaled_transfer(&free, 5.0, &Frequency::golden(), 0.0, 1_000_000).unwrap();
        assert!(p.log_norm().is_finite());
        assert!((p.normalized().op_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescaled_matches_naive_product() {
        let b = Potential::peaky_bump(0.2, 0.5, 7.0, 0.8).unwrap();
        let alpha = Frequency::golden();
        for &e in &[-1.0, 0.5, 3.0, 9.0] {
            let p = scaled_transfer(&b, e, &alpha, 0.41, 10).unwrap();
            let mut naive = Mat2::identity();
            for k in 0..10 {
                naive = schrodinger_step(&b, e, orbit_point(0.41, alpha.value(), k)) * naive;
            }
            let r = p.reconstruct();
            let scale = naive.op_norm();
            assert!(r.max_abs_diff(&naive) <= 1e-9 * scale);
        }
    }

    #[test]
    fn free_elliptic_log_scale_vanishes() {
        let free = Potential::free();
        let p = scaled_transfer(&free, 1.3, &Frequency::golden(), 0.0, 100_000).unwrap();
        assert!(p.log_scale().abs() / 1e5 < 1e-4);
    }

    #[test]
    fn q_step_examples() {
        let v = peak();
        let one = Frequency::rational(0, 1).unwrap();
        assert_eq!(q_step(&v, 1.3, &one, 0.2).unwrap(), schrodinger_step(&v, 1.3, 0.2));
        let free = Potential::free();
        for q in 1..8u64 {
            let th: f64 = 0.7;
            let e = 2.0 * th.cos();
            let m = q_step_pq(&free, e, 1, q, 0.3);
            assert!((m.trace() - 2.0 * (q as f64 * th).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn orbit_representative_lands_in_cell() {
        for q in 1..10u64 {
            for p in 0..q {
                if crate::arithmetic::gcd(p, q) != 1 {
                    continue;
                }
                for &x in &[0.0, 0.13, 0.5, 0.77, 0.999] {
                    let (xt, j) = orbit_representative(x, p, q, 0.05);
                    assert!(xt >= 0.05 - 1e-15 && xt < 0.05 + 1.0 / q as f64);
                    let back = frac(x + (j * p % q) as f64 / q as f64);
                    let d = (back - frac(xt)).abs();
                    assert!(d.min(1.0 - d) < 1e-12, "p={p} q={q} x={x}");
                }
            }
        }
    }

    #[test]
    fn closed_form_branches() {
        let b = Potential::peaky_bump(0.02, 0.1, 20.0, 1.0).unwrap();
        // q = 1 reduces to E - V
        for &e in &[-3.0, -1.0, 0.4, 2.0, 5.0] {
            let t = trace_closed_form(&b, e, 1, 0.06).unwrap();
            assert!((t.value - (e - b.eval(0.06))).abs() < 1e-12 * (1.0 + e.abs()));
        }
        // q = 2 explicit polynomial
        let e: f64 = 0.37;
        let t = trace_closed_form(&b, e, 2, 0.58).unwrap();
        let vt = b.eval(0.08);
        assert!((t.value - (-vt * e + e * e - 2.0)).abs() < 1e-12);
        // parabolic limit
        for q in 1..6u64 {
            let t = trace_closed_form(&b, 2.0, q, 0.05).unwrap();
            assert_eq!(t.branch, TraceBranch::Parabolic);
            assert!((t.value - (-(q as f64) * b.eval(0.05) + 2.0)).abs() < 1e-12);
        }
        let wide = Potential::peaky_bump(0.1, 0.4, 20.0, 1.0).unwrap();
        assert!(matches!(
            trace_closed_form(&wide, 0.0, 4, 0.1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn q_step_trace_derivative_matches_difference() {
        let v = peak();
        let l = QStepLoop {
            potential: &v,
            energy: -0.12,
            p: 1,
            q: 2,
        };
        for &x in &[0.001, 0.003, 0.2, 0.4999] {
            let h = 1e-7;
            let fd = (l.at(x + h).trace() - l.at(x - h).trace()) / (2.0 * h);
            let an = l.trace_derivative(x);
            assert!((fd - an).abs() < 1e-4 * (1.0 + an.abs()), "x={x}: {fd} vs {an}");
        }
    }

    proptest! {
        #[test]
        fn cocycle_identity(n in 1usize..60, m in 1usize..60, x in 0.0f64..1.0) {
            let v = Potential::poisson_peak(4.0, 30.0).unwrap().0;
            let a = Frequency::golden();
            let whole = scaled_transfer(&v, 1.7, &a, x, n + m).unwrap().reconstruct();
            let first = scaled_transfer(&v, 1.7, &a, x, m).unwrap().reconstruct();
            let second = scaled_transfer(&v, 1.7, &a, frac(x + m as f64 * golden_mean()), n).unwrap().reconstruct();
            let prod = second * first;
            prop_assert!(prod.max_abs_diff(&whole) <= 1e-8 * whole.op_norm());
        }

        #[test]
        fn conjugation_periodicity(x in 0.0f64..1.0, e in -3.0f64..12.0, q in 2u64..7) {
            let v = peak();
            let p = 1;
            let lhs = q_step_pq(&v, e, p, q, frac(x + 1.0 / q as f64));
            let a = schrodinger_step(&v, e, x);
            let rhs = a * q_step_pq(&v, e, p, q, x) * a.inverse();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-8 * rhs.op_norm().max(1.0));
        }
    }
}
