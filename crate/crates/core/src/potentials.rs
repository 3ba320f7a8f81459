//! Peaky potentials on the circle `R/Z`.
//!
//! Two families are provided: smooth compactly supported bumps and the
//! analytic peak `K / (1 + 4 lambda sin^2(pi x))`. Some references write the
//! peak with `lambda sin^2` instead of `4 lambda sin^2`; this crate always
//! uses the `4 lambda` form and offers [`Normalization`] to convert.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// How the `lambda` parameter of a poisson peak is read from config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `K / (1 + 4 lambda sin^2(pi x))` (the native form).
    FourLambda,
    /// `K / (1 + lambda sin^2(pi x))`, converted by `lambda -> lambda / 4`.
    OneLambda,
}

impl Normalization {
    /// Native `lambda` for a user value given in this normalization.
    pub fn native_lambda(self, lambda: f64) -> f64 {
        match self {
            Normalization::FourLambda => lambda,
            Normalization::OneLambda => lambda / 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// `K exp(4s - s/(t(1-t)))` with `t` the position inside `(lo, hi)`.
    PeakyBump { lo: f64, hi: f64, sharpness: f64 },
    /// `K / (1 + 4 lambda sin^2(pi x))`.
    PoissonPeak { lambda: f64 },
    /// Periodic piecewise-linear interpolation of samples on a uniform grid.
    Tabulated { values: Vec<f64> },
    /// Constant function `K` (the free case uses `K = 0`).
    Constant,
}

/// A nonnegative potential on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    height: f64,
    strip: f64,
    peak: f64,
    support_len: f64,
    support_start: f64,
}

/// Poles of the rational extension `f(z) = K / (1 + lambda (2 - z - 1/z))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleData {
    pub z0: f64,
    pub z1: f64,
    /// `-K / lambda`.
    pub c: f64,
    pub height: f64,
    pub lambda: f64,
}

impl PoleData {
    fn new(height: f64, lambda: f64) -> Self {
        let log_z1 = log_z1(lambda);
        PoleData {
            z0: (-log_z1).exp(),
            z1: log_z1.exp(),
            c: -height / lambda,
            height,
            lambda,
        }
    }

    /// `log z1`, computed without cancellation.
    pub fn log_z1(&self) -> f64 {
        log_z1(self.lambda)
    }

    /// Factored form `C z / ((z - z0)(z - z1))`.
    pub fn f_factored(&self, z: Complex64) -> Complex64 {
        self.c * z / ((z - self.z0) * (z - self.z1))
    }

    /// Direct form `K / (1 + lambda (2 - z - 1/z))`.
    pub fn f_direct(&self, z: Complex64) -> Complex64 {
        self.height / (1.0 + self.lambda * (2.0 - z - z.inv()))
    }

    /// Residual of `lambda z^2 - (2 lambda + 1) z + lambda` at both poles,
    /// relative to `lambda`.
    pub fn quadratic_residual(&self) -> f64 {
        let q = |z: f64| (self.lambda * z * z - (2.0 * self.lambda + 1.0) * z + self.lambda).abs() / self.lambda;
        q(self.z0).max(q(self.z1))
    }
}

/// `log z1 = 2 asinh(1 / (2 sqrt(lambda)))`.
fn log_z1(lambda: f64) -> f64 {
    2.0 * (0.5 / lambda.sqrt()).asinh()
}

/// Fraction of the pole distance used as strip half-width.
pub const STRIP_SAFETY: f64 = 0.9;

/// Default grid for validation sweeps.
pub const VALIDATION_GRID: usize = 4096;

impl Potential {
    /// The analytic peak `K / (1 + 4 lambda sin^2(pi x))` and its pole data.
    pub fn poisson_peak(height: f64, lambda: f64) -> Result<(Potential, PoleData)> {
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param(format!("peak height must be positive, got {height}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {lambda}")));
        }
        let poles = PoleData::new(height, lambda);
        let pot = Potential {
            kind: PotentialKind::PoissonPeak { lambda },
            height,
            strip: STRIP_SAFETY * poles.log_z1() / (2.0 * PI),
            peak: 0.0,
            support_len: 1.0,
            support_start: 0.0,
        };
        Ok((pot, poles))
    }

    /// Smooth bump supported on `(lo, hi)` with maximum `height` at the midpoint.
    pub fn peaky_bump(lo: f64, hi: f64, height: f64, sharpness: f64) -> Result<Potential> {
        if !(lo > 0.0 && hi < 1.0 && lo < hi) {
            return Err(Error::param(format!(
                "bump support ({lo}, {hi}) must lie strictly inside (0, 1)"
            )));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param(format!("bump height must be positive, got {height}")));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(Error::param(format!("sharpness must be positive, got {sharpness}")));
        }
        Ok(Potential {
            kind: PotentialKind::PeakyBump { lo, hi, sharpness },
            height,
            strip: 0.0,
            peak: 0.5 * (lo + hi),
            support_len: hi - lo,
            support_start: lo,
        })
    }

    /// Samples on the grid `i / n`, linearly interpolated.
    pub fn tabulated(values: Vec<f64>) -> Result<Potential> {
        if values.is_empty() {
            return Err(Error::param("tabulated potential needs at least one sample"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("tabulated samples must be finite and nonnegative"));
        }
        let n = values.len();
        let (imax, height) =
            values
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        // support: shortest arc containing all positive cells
        let positive: Vec<usize> = (0..n).filter(|&i| values[i] > 0.0).collect();
        let (start, len) = if positive.is_empty() {
            (0.0, 0.0)
        } else {
            let mut gap_len = 0;
            let mut gap_end = positive[0];
            for w in 0..positive.len() {
                let a = positive[w];
                let b = positive[(w + 1) % positive.len()];
                let g = (b + n - a) % n;
                let g = if g == 0 { n } else { g };
                if g > gap_len {
                    gap_len = g;
                    gap_end = b;
                }
            }
            let start = (gap_end as f64 - 1.0) / n as f64;
            let len = ((n + 1 - gap_len) as f64 + 1.0).min(n as f64) / n as f64;
            (start.rem_euclid(1.0), len)
        };
        Ok(Potential {
            kind: PotentialKind::Tabulated { values },
            height,
            strip: 0.0,
            peak: imax as f64 / n as f64,
            support_len: len,
            support_start: start,
        })
    }

    /// Constant potential; entire, so the strip is unbounded.
    pub fn constant(value: f64) -> Result<Potential> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::param(format!("constant potential must be >= 0, got {value}")));
        }
        Ok(Potential {
            kind: PotentialKind::Constant,
            height: value,
            strip: f64::INFINITY,
            peak: 0.0,
            support_len: if value > 0.0 { 1.0 } else { 0.0 },
            support_start: 0.0,
        })
    }

    /// `V = 0`.
    pub fn free() -> Potential {
        Potential::constant(0.0).expect("zero is a valid constant")
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// `K(V) = max V`.
    pub fn height(&self) -> f64 {
        self.height
    }

    /// Location of the maximum.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Length of the (closed) support arc; 1 when the support is the whole circle.
    pub fn support_length(&self) -> f64 {
        self.support_len
    }

    /// Left end of the support arc.
    pub fn support_start(&self) -> f64 {
        self.support_start
    }

    /// Half-width of the analytic strip; 0 when not analytic.
    pub fn strip_halfwidth(&self) -> f64 {
        self.strip
    }

    pub fn is_analytic(&self) -> bool {
        self.strip > 0.0
    }

    /// Value at a real point of the torus.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            PotentialKind::PoissonPeak { lambda } => {
                let s = (PI * x).sin();
                self.height / (1.0 + 4.0 * lambda * s * s)
            }
            PotentialKind::PeakyBump { lo, hi, sharpness } => {
                let x = x.rem_euclid(1.0);
                if x <= *lo || x >= *hi {
                    return 0.0;
                }
                let t = (x - lo) / (hi - lo);
                self.height * (4.0 * sharpness - sharpness / (t * (1.0 - t))).exp()
            }
            PotentialKind::Tabulated { values } => {
                let n = values.len();
                let u = x.rem_euclid(1.0) * n as f64;
                let i = (u.floor() as usize).min(n - 1);
                let f = u - i as f64;
                values[i] * (1.0 - f) + values[(i + 1) % n] * f
            }
            PotentialKind::Constant => self.height,
        }
    }

    /// Derivative at a real point.
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            PotentialKind::PoissonPeak { lambda } => {
                let s = (PI * x).sin();
                let den = 1.0 + 4.0 * lambda * s * s;
                -self.height * 4.0 * lambda * PI * (2.0 * PI * x).sin() / (den * den)
            }
            PotentialKind::PeakyBump { lo, hi, sharpness } => {
                let x = x.rem_euclid(1.0);
                if x <= *lo || x >= *hi {
                    return 0.0;
                }
                let t = (x - lo) / (hi - lo);
                let tt = t * (1.0 - t);
                self.eval(x) * sharpness * (1.0 - 2.0 * t) / (tt * tt) / (hi - lo)
            }
            PotentialKind::Tabulated { values } => {
                let n = values.len();
                let u = x.rem_euclid(1.0) * n as f64;
                let i = (u.floor() as usize).min(n - 1);
                (values[(i + 1) % n] - values[i]) * n as f64
            }
            PotentialKind::Constant => 0.0,
        }
    }

    /// Value of the analytic extension at `z` inside the strip.
    pub fn eval_complex(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            return Ok(Complex64::new(self.eval(z.re), 0.0));
        }
        match &self.kind {
            PotentialKind::PoissonPeak { lambda } => {
                if z.im.abs() > self.strip {
                    return Err(Error::StripViolation {
                        im: z.im,
                        h: self.strip,
                    });
                }
                let s = (z * PI).sin();
                Ok(self.height / (1.0 + 4.0 * lambda * s * s))
            }
            PotentialKind::Constant => Ok(Complex64::new(self.height, 0.0)),
            PotentialKind::PeakyBump { .. } => Err(Error::Unsupported(
                "peaky bumps are smooth but not analytic; complex evaluation is undefined".into(),
            )),
            PotentialKind::Tabulated { .. } => Err(Error::Unsupported(
                "tabulated potentials have no analytic extension".into(),
            )),
        }
    }

    /// Checks the class invariants on a uniform grid.
    pub fn validate(&self, grid: usize) -> Result<()> {
        let grid = grid.max(16);
        let mut max = f64::MIN;
        for i in 0..grid {
            let v = self.eval(i as f64 / grid as f64);
            if !(v >= 0.0) {
                return Err(Error::Consistency(format!("negative value {v} at sample {i}")));
            }
            max = max.max(v);
        }
        // the grid max only matches K when the peak sits on a grid point
        let on_grid = (self.peak * grid as f64 - (self.peak * grid as f64).round()).abs() < 1e-9;
        if on_grid && (max - self.height).abs() > 1e-9 * self.height.max(1.0) {
            return Err(Error::Consistency(format!(
                "grid max {max} differs from height {}",
                self.height
            )));
        }
        if let PotentialKind::PeakyBump { lo, hi, .. } = self.kind {
            let changes = derivative_sign_changes(self, lo, hi, grid);
            if changes != 1 {
                return Err(Error::Consistency(format!(
                    "bump derivative changes sign {changes} times inside the support"
                )));
            }
        }
        Ok(())
    }

    /// Serializes to `key = value` pairs.
    pub fn to_config(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        match &self.kind {
            PotentialKind::PoissonPeak { lambda } => {
                m.insert("kind".into(), "poisson-peak".into());
                m.insert("K".into(), fmt_f64(self.height));
                m.insert("lambda".into(), fmt_f64(*lambda));
            }
            PotentialKind::PeakyBump { lo, hi, sharpness } => {
                m.insert("kind".into(), "peaky-bump".into());
                m.insert("K".into(), fmt_f64(self.height));
                m.insert("support".into(), format!("{},{}", fmt_f64(*lo), fmt_f64(*hi)));
                m.insert("sharpness".into(), fmt_f64(*sharpness));
            }
            PotentialKind::Tabulated { values } => {
                m.insert("kind".into(), "tabulated".into());
                let v: Vec<String> = values.iter().map(|x| fmt_f64(*x)).collect();
                m.insert("values".into(), v.join(","));
            }
            PotentialKind::Constant => {
                m.insert("kind".into(), "constant".into());
                m.insert("K".into(), fmt_f64(self.height));
            }
        }
        m
    }

    /// Parses the pairs written by [`Potential::to_config`].
    ///
    /// A poisson peak also accepts `normalization = one-lambda`.
    pub fn from_config(m: &BTreeMap<String, String>) -> Result<Potential> {
        let get = |k: &str| {
            m.get(k)
                .ok_or_else(|| Error::param(format!("potential: missing key `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let s = get(k)?;
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("potential: `{k}` is not a number: {s}")))
        };
        match get("kind")?.trim() {
            "poisson-peak" => {
                let norm = match m.get("normalization").map(|s| s.trim()) {
                    None | Some("four-lambda") => Normalization::FourLambda,
                    Some("one-lambda") => Normalization::OneLambda,
                    Some(o) => return Err(Error::param(format!("unknown normalization `{o}`"))),
                };
                Ok(Potential::poisson_peak(num("K")?, norm.native_lambda(num("lambda")?))?.0)
            }
            "peaky-bump" => {
                let s = get("support")?;
                let parts: Vec<&str> = s.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::param(format!("support must be `lo,hi`, got {s}")));
                }
                let lo = parts[0].trim().parse::<f64>();
                let hi = parts[1].trim().parse::<f64>();
                let (Ok(lo), Ok(hi)) = (lo, hi) else {
                    return Err(Error::param(format!("support must be two numbers, got {s}")));
                };
                let sharp = if m.contains_key("sharpness") {
                    num("sharpness")?
                } else {
                    1.0
                };
                Potential::peaky_bump(lo, hi, num("K")?, sharp)
            }
            "tabulated" => {
                let vals: std::result::Result<Vec<f64>, _> =
                    get("values")?.split(',').map(|t| t.trim().parse::<f64>()).collect();
                Potential::tabulated(vals.map_err(|_| Error::param("bad tabulated values"))?)
            }
            "constant" | "free" => {
                let k = if m.contains_key("K") { num("K")? } else { 0.0 };
                Potential::constant(k)
            }
            other => Err(Error::param(format!("unknown potential kind `{other}`"))),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Sign changes of `V'` sampled strictly inside `(lo, hi)`.
pub fn derivative_sign_changes(v: &Potential, lo: f64, hi: f64, grid: usize) -> usize {
    let mut prev = 0.0f64;
    let mut count = 0;
    for i in 1..grid {
        let x = lo + (hi - lo) * i as f64 / grid as f64;
        let d = v.derivative(x);
        if d == 0.0 {
            continue;
        }
        if prev != 0.0 && d.signum() != prev.signum() {
            count += 1;
        }
        prev = d;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn poisson_values() {
        let (v, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        assert_eq!(v.eval(0.0), 10.0);
        assert_eq!(v.eval(0.5), 10.0 / (1.0 + 4.0 * 1e4));
        assert!((v.eval(0.123) - v.eval(-0.123)).abs() < 1e-15);
        v.validate(VALIDATION_GRID).unwrap();
    }

    #[test]
    fn pole_moduli_against_root_finding() {
        let (_, p) = Potential::poisson_peak(10.0, 1e4).unwrap();
        // bisection on lambda z^2 - (2 lambda + 1) z + lambda
        let f = |z: f64| 1e4 * z * z - (2e4 + 1.0) * z + 1e4;
        let root = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a) * f(m) <= 0.0 {
                    b = m
                } else {
                    a = m
                }
            }
            0.5 * (a + b)
        };
        assert!((p.z0 - root(0.5, 1.0)).abs() < 1e-12);
        assert!((p.z1 - root(1.0, 2.0)).abs() < 1e-12);
        assert!((p.z0 - 0.990050).abs() < 5e-7);
        assert!((p.z1 - 1.010050).abs() < 5e-7);
        assert!(p.quadratic_residual() < 1e-12);
        assert!((p.z0 * p.z1 - 1.0).abs() < 1e-15);
        assert_eq!(p.c, -10.0 / 1e4);
    }

    #[test]
    fn strip_violation_and_unsupported() {
        let (v, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        let h = v.strip_halfwidth();
        assert!((h - 0.9 * (1.010050f64).ln() / (2.0 * PI)).abs() < 1e-7);
        assert!(v.eval_complex(Complex64::new(0.0, h / 2.0)).unwrap().norm().is_finite());
        assert!(matches!(
            v.eval_complex(Complex64::new(0.1, 1.01 * h)),
            Err(Error::StripViolation { .. })
        ));
        let b = Potential::peaky_bump(0.1, 0.4, 20.0, 1.0).unwrap();
        assert!(matches!(
            b.eval_complex(Complex64::new(0.2, 1e-3)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn bump_shape() {
        let b = Potential::peaky_bump(0.1, 0.4, 20.0, 1.0).unwrap();
        assert!((b.eval(0.25) - 20.0).abs() < 1e-12);
        assert_eq!(b.eval(0.05), 0.0);
        assert_eq!(derivative_sign_changes(&b, 0.1, 0.4, 4096), 1);
        assert!((b.support_length() - 0.3).abs() < 1e-15);
        for q in 1..=3 {
            assert!(b.support_length() < 1.0 / q as f64);
        }
        b.validate(VALIDATION_GRID).unwrap();
        assert!(Potential::peaky_bump(0.0, 0.4, 20.0, 1.0).is_err());
        assert!(Potential::peaky_bump(0.1, 1.0, 20.0, 1.0).is_err());
        assert!(Potential::poisson_peak(-1.0, 1.0).is_err());
        assert!(Potential::poisson_peak(1.0, 0.0).is_err());
    }

    #[test]
    fn bump_derivative_matches_finite_difference() {
        let b = Potential::peaky_bump(0.1, 0.4, 20.0, 1.5).unwrap();
        for &x in &[0.12, 0.2, 0.25, 0.31, 0.39] {
            let h = 1e-6;
            let fd = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
            assert!((fd - b.derivative(x)).abs() < 1e-5 * (1.0 + fd.abs()), "x={x}");
        }
        let (p, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        for &x in &[0.001, 0.003, 0.01, 0.2] {
            let h = 1e-8;
            let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
            assert!((fd - p.derivative(x)).abs() < 1e-5 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn config_round_trip() {
        let b = Potential::peaky_bump(0.1, 0.4, 20.0, 1.5).unwrap();
        assert_eq!(Potential::from_config(&b.to_config()).unwrap(), b);
        let (p, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        assert_eq!(Potential::from_config(&p.to_config()).unwrap(), p);
        let mut m = p.to_config();
        m.insert("normalization".into(), "one-lambda".into());
        let q = Potential::from_config(&m).unwrap();
        assert!(matches!(q.kind(), PotentialKind::PoissonPeak { lambda } if *lambda == 2500.0));
    }

    #[test]
    fn tabulated_support() {
        let mut vals = vec![0.0; 100];
        for (i, v) in vals.iter_mut().enumerate().take(30).skip(20) {
            *v = 1.0 + (i as f64 - 25.0).abs();
        }
        let t = Potential::tabulated(vals).unwrap();
        assert!((t.support_length() - 0.11).abs() < 1e-12);
        assert!((t.support_start() - 0.19).abs() < 1e-12);
        assert_eq!(t.height(), 6.0);
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(x in 0.0f64..1.0, s in -1.0f64..1.0) {
            let (v, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
            let z = Complex64::new(x, s * v.strip_halfwidth());
            let a = v.eval_complex(z.conj()).unwrap();
            let b = v.eval_complex(z).unwrap().conj();
            prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }

        #[test]
        fn factored_pole_form_agrees(x in 0.0f64..1.0, s in -1.0f64..1.0) {
            let (v, p) = Potential::poisson_peak(10.0, 1e4).unwrap();
            let w = Complex64::new(x, s * v.strip_halfwidth());
            let z = (Complex64::i() * 2.0 * PI * w).exp();
            let a = p.f_factored(z);
            let b = p.f_direct(z);
            prop_assert!((a - b).norm() <= 1e-10 * b.norm());
            // and with the trigonometric form
            let c = v.eval_complex(w).unwrap();
            prop_assert!((c - b).norm() <= 1e-9 * b.norm());
        }

        #[test]
        fn real_values_nonnegative(x in -2.0f64..2.0) {
            let (v, _) = Potential::poisson_peak(3.0, 50.0).unwrap();
            prop_assert!(v.eval(x) >= 0.0 && v.eval(x) <= 3.0);
            let b = Potential::peaky_bump(0.2, 0.3, 5.0, 0.7).unwrap();
            prop_assert!(b.eval(x) >= 0.0 && b.eval(x) <= 5.0);
        }
    }
}
