//! 2x2 matrices over `f64` and `Complex64`.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Scalar field for [`Mat2`].
pub trait Scalar:
    Copy
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    const ZERO: Self;
    const ONE: Self;
    fn from_real(x: f64) -> Self;
    fn norm_sqr(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn recip(self) -> Self;
    fn sqrt(self) -> Self;
    fn to_complex(self) -> Complex64;
    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    const ONE: Self = Complex64::new(1.0, 0.0);
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
    #[inline]
    fn recip(self) -> Self {
        Complex64::inv(&self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Row-major matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

pub type CMat2 = Mat2<Complex64>;

impl<T: Scalar> Mat2<T> {
    #[inline]
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Mat2 { a, b, c, d }
    }

    #[inline]
    pub fn identity() -> Self {
        Mat2::new(T::ONE, T::ZERO, T::ZERO, T::ONE)
    }

    /// The Schrodinger step `[[w, -1], [1, 0]]`.
    #[inline]
    pub fn schrodinger(w: T) -> Self {
        Mat2::new(w, -T::ONE, T::ONE, T::ZERO)
    }

    #[inline]
    pub fn det(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    #[inline]
    pub fn trace(&self) -> T {
        self.a + self.d
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        Mat2::new(self.a.scale(s), self.b.scale(s), self.c.scale(s), self.d.scale(s))
    }

    /// Inverse via the adjugate.
    #[inline]
    pub fn inverse(&self) -> Self {
        let r = self.det().recip();
        Mat2::new(self.d * r, -self.b * r, -self.c * r, self.a * r)
    }

    /// Adjugate, equal to the inverse when `det = 1`.
    #[inline]
    pub fn adjugate(&self) -> Self {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    /// Largest entry modulus; within a factor 2 of the operator norm.
    #[inline]
    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    #[inline]
    pub fn frobenius_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()
    }

    /// Largest singular value, in closed form.
    #[inline]
    pub fn op_norm(&self) -> f64 {
        let s = self.frobenius_sqr();
        let dd = self.det().norm_sqr();
        let disc = (s * s - 4.0 * dd).max(0.0);
        ((s + disc.sqrt()) * 0.5).sqrt()
    }

    /// Smallest singular value.
    #[inline]
    pub fn min_singular(&self) -> f64 {
        let big = self.op_norm();
        if big == 0.0 {
            0.0
        } else {
            self.det().abs() / big
        }
    }

    /// Entrywise max modulus of the difference.
    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        [
            (self.a - o.a).abs(),
            (self.b - o.b).abs(),
            (self.c - o.c).abs(),
            (self.d - o.d).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Operator norm of the difference.
    pub fn dist(&self, o: &Self) -> f64 {
        (*self - *o).op_norm()
    }

    /// Eigenvalue of largest modulus (roots of `mu^2 - tr mu + det`).
    pub fn dominant_eigenvalue(&self) -> Complex64 {
        let half = self.trace().to_complex() * 0.5;
        let disc = (half * half - self.det().to_complex()).sqrt();
        let p = half + disc;
        let m = half - disc;
        if p.norm_sqr() >= m.norm_sqr() {
            p
        } else {
            m
        }
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        self.dominant_eigenvalue().norm()
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Mat2<T>;
    #[inline]
    fn mul(self, r: Mat2<T>) -> Mat2<T> {
        Mat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Mat2<T>;
    #[inline]
    fn add(self, r: Mat2<T>) -> Mat2<T> {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Mat2<T>;
    #[inline]
    fn sub(self, r: Mat2<T>) -> Mat2<T> {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl Mat2<f64> {
    /// Rotation by `phi` (counter-clockwise).
    #[inline]
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn to_complex(&self) -> CMat2 {
        Mat2::new(
            Complex64::from(self.a),
            Complex64::from(self.b),
            Complex64::from(self.c),
            Complex64::from(self.d),
        )
    }

    /// Angle of the orthogonal polar factor, `atan2(c - b, a + d)`.
    #[inline]
    pub fn polar_angle(&self) -> f64 {
        (self.c - self.b).atan2(self.a + self.d)
    }

    /// Applies the matrix to a vector.
    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Top left singular vector (unit, angle in `(-pi/2, pi/2]`).
    pub fn top_left_singular(&self) -> [f64; 2] {
        // eigenvector of M M^T for the top eigenvalue
        let p = self.a * self.a + self.b * self.b;
        let r = self.a * self.c + self.b * self.d;
        let s = self.c * self.c + self.d * self.d;
        let ang = 0.5 * (2.0 * r).atan2(p - s);
        [ang.cos(), ang.sin()]
    }

    /// Exponential of a traceless generator via Cayley-Hamilton.
    pub fn exp_sl2(&self) -> Self {
        let a = 0.5 * (self.a - self.d);
        let x = Mat2::new(a, self.b, self.c, -a);
        let delta = a * a + self.b * self.c;
        let (ch, sh) = if delta > 0.0 {
            let s = delta.sqrt();
            (s.cosh(), sinhc(s))
        } else {
            let s = (-delta).sqrt();
            (s.cos(), sinc(s))
        };
        Mat2::new(ch + sh * x.a, sh * x.b, sh * x.c, ch + sh * x.d)
    }

    /// Principal logarithm of a unimodular matrix with trace in `(-2, inf)`.
    ///
    /// Returns `None` when the trace is too close to `-2` for a real log.
    pub fn log_sl2(&self) -> Option<Self> {
        let half = 0.5 * (self.a + self.d);
        let x = Mat2::new(self.a - half, self.b, self.c, self.d - half);
        let factor = if half > 1.0 {
            let s = half.acosh();
            1.0 / sinhc(s)
        } else if half > -1.0 + 1e-12 {
            let s = half.acos();
            if s > PI - 1e-9 {
                return None;
            }
            1.0 / sinc(s)
        } else {
            return None;
        };
        Some(x.scale(factor))
    }

    /// Coordinates `(h, e, f)` with `X = [[h, e], [f, -h]]`.
    pub fn sl2_coords(&self) -> [f64; 3] {
        [0.5 * (self.a - self.d), self.b, self.c]
    }

    pub fn from_sl2_coords(v: [f64; 3]) -> Self {
        Mat2::new(v[0], v[1], v[2], -v[0])
    }

    /// Symmetric traceless generator `[[y1, y2], [y2, -y1]]`.
    pub fn symmetric_generator(y1: f64, y2: f64) -> Self {
        Mat2::new(y1, y2, y2, -y1)
    }
}

/// `sin(s)/s` with the removable singularity handled.
#[inline]
pub fn sinc(s: f64) -> f64 {
    if s.abs() < 1e-4 {
        let s2 = s * s;
        1.0 - s2 / 6.0 + s2 * s2 / 120.0
    } else {
        s.sin() / s
    }
}

/// `sinh(s)/s` with the removable singularity handled.
#[inline]
pub fn sinhc(s: f64) -> f64 {
    if s.abs() < 1e-4 {
        let s2 = s * s;
        1.0 + s2 / 6.0 + s2 * s2 / 120.0
    } else {
        s.sinh() / s
    }
}

/// Reduces an angle to `(-pi, pi]`.
#[inline]
pub fn principal(a: f64) -> f64 {
    let r = a - (2.0 * PI) * (a / (2.0 * PI)).round();
    if r <= -PI {
        r + 2.0 * PI
    } else if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Shifts `a` by a multiple of `2 pi` to lie closest to `near`.
#[inline]
pub fn lift_near(a: f64, near: f64) -> f64 {
    near + principal(a - near)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_svd_top(m: &Mat2) -> f64 {
        // power iteration on M^T M
        let mut v = [1.0, 0.3];
        for _ in 0..200 {
            let w = m.apply(v);
            let u = [m.a * w[0] + m.c * w[1], m.b * w[0] + m.d * w[1]];
            let n = (u[0] * u[0] + u[1] * u[1]).sqrt();
            v = [u[0] / n, u[1] / n];
        }
        let w = m.apply(v);
        (w[0] * w[0] + w[1] * w[1]).sqrt()
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        let m = Mat2::new(3.0, -1.0, 1.0, 0.0);
        assert!((m.op_norm() - naive_svd_top(&m)).abs() < 1e-12);
        let m = Mat2::new(0.2, 7.0, -0.1, 1.5);
        assert!((m.op_norm() - naive_svd_top(&m)).abs() < 1e-10);
    }

    #[test]
    fn exp_of_rotation_generator() {
        let x = Mat2::new(0.0, -0.7, 0.7, 0.0);
        let r = x.exp_sl2();
        assert!(r.max_abs_diff(&Mat2::rotation(0.7)) < 1e-15);
    }

    #[test]
    fn top_singular_vector_is_image_direction() {
        let m = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let u = m.top_left_singular();
        // M M^T u = s^2 u
        let mt = Mat2::new(m.a, m.c, m.b, m.d);
        let w = (m * mt).apply(u);
        let s2 = m.op_norm().powi(2);
        assert!((w[0] - s2 * u[0]).abs() < 1e-12 && (w[1] - s2 * u[1]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn log_inverts_exp(h in -1.0f64..1.0, e in -1.0f64..1.0, f in -1.0f64..1.0) {
            let x = Mat2::from_sl2_coords([h, e, f]);
            let m = x.exp_sl2();
            prop_assert!((m.det() - 1.0).abs() < 1e-12);
            if let Some(l) = m.log_sl2() {
                prop_assert!(l.exp_sl2().max_abs_diff(&m) < 1e-10);
                // principal branch: small generators come back unchanged
                if h * h + e * f > -2.0 {
                    prop_assert!(l.max_abs_diff(&x) < 1e-9);
                }
            }
        }

        #[test]
        fn product_det_is_multiplicative(w1 in -5.0f64..5.0, w2 in -5.0f64..5.0) {
            let m = Mat2::schrodinger(w1) * Mat2::schrodinger(w2);
            prop_assert!((m.det() - 1.0).abs() < 1e-12);
            prop_assert!((m.inverse() * m).max_abs_diff(&Mat2::identity()) < 1e-12);
        }
    }
}
