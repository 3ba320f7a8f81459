//! Continued fractions and finite-resolution Diophantine certificates.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default denominator cap for convergent lists.
pub const DEFAULT_CAP: u64 = 1_000_000_000_000;

/// Denominators up to this bound are always checked exhaustively.
const BRUTE_FORCE_RANGE: u64 = 1000;

/// A rotation frequency on the circle.
#[derive(Clone, Debug, PartialEq)]
pub enum Frequency {
    /// `p / q` in lowest terms with `0 <= p < q`.
    Rational { p: u64, q: u64 },
    /// A real frequency with its convergents up to a denominator cap.
    Irrational {
        value: f64,
        convergents: Vec<(u64, u64)>,
        cap: u64,
    },
}

impl Frequency {
    /// `p / q`, reduced; `p` is taken mod `q`.
    pub fn rational(p: u64, q: u64) -> Result<Frequency> {
        if q == 0 {
            return Err(Error::param("denominator must be positive"));
        }
        let p = p % q;
        let g = gcd(p, q);
        Ok(Frequency::Rational { p: p / g, q: q / g })
    }

    /// A real frequency presumed irrational, with convergents up to `cap`.
    pub fn irrational(value: f64, cap: u64) -> Result<Frequency> {
        let convergents = convergents(value, cap)?;
        Ok(Frequency::Irrational {
            value,
            convergents,
            cap,
        })
    }

    /// `(sqrt 5 - 1) / 2`.
    pub fn golden() -> Frequency {
        Frequency::irrational(golden_mean(), DEFAULT_CAP).expect("golden mean is in (0,1)")
    }

    pub fn value(&self) -> f64 {
        match *self {
            Frequency::Rational { p, q } => p as f64 / q as f64,
            Frequency::Irrational { value, .. } => value,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Frequency::Rational { .. })
    }

    /// `(p, q)` for the rational kind.
    pub fn as_rational(&self) -> Option<(u64, u64)> {
        match *self {
            Frequency::Rational { p, q } => Some((p, q)),
            _ => None,
        }
    }

    pub fn convergents(&self) -> &[(u64, u64)] {
        match self {
            Frequency::Irrational { convergents, .. } => convergents,
            Frequency::Rational { .. } => &[],
        }
    }
}

impl std::fmt::Display for Frequency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frequency::Rational { p, q } => write!(f, "{p}/{q}"),
            Frequency::Irrational { value, .. } => write!(f, "{value:.17}"),
        }
    }
}

pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Inverse of `a` modulo `m` (`gcd(a, m) = 1`).
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    if r != 1 {
        return None;
    }
    Some(t.rem_euclid(m as i128) as u64)
}

/// Exact dyadic representation `num / 2^exp` of a double in `(0, 1)`.
fn dyadic(x: f64) -> Option<(u128, u32)> {
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    if mant == 0 {
        return Some((0, 0));
    }
    let tz = mant.trailing_zeros();
    let mant = mant >> tz;
    let e = e + tz as i32;
    if e >= 0 {
        return None;
    }
    let shift = (-e) as u32;
    if shift > 126 {
        return None;
    }
    Some((mant as u128, shift))
}

/// Continued-fraction convergents `p_n / q_n` (n >= 1) with `q_n <= cap`.
///
/// The expansion is that of the exact binary value of `alpha`, so a double
/// that is a short rational (like `0.5`) terminates.
pub fn convergents(alpha: f64, cap: u64) -> Result<Vec<(u64, u64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("frequency {alpha} must lie in (0, 1)")));
    }
    if cap == 0 {
        return Err(Error::param("denominator cap must be >= 1"));
    }
    let Some((num, shift)) = dyadic(alpha) else {
        // below 2^-126 the first partial quotient already exceeds any cap
        return Ok(Vec::new());
    };
    let (mut n, mut d) = (1u128 << shift, num); // reciprocal of alpha
    let (mut p0, mut q0, mut p1, mut q1) = (1u128, 0u128, 0u128, 1u128);
    let mut out = Vec::new();
    while d != 0 {
        let a = n / d;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > cap as u128 {
            break;
        }
        out.push((p2 as u64, q2 as u64));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        (n, d) = (d, n - a * d);
    }
    Ok(out)
}

/// Which inequality a certificate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiophantineClass {
    /// `|alpha - k/l| >= eta / l^sigma`.
    Dc1,
    /// `|2 rho - k alpha - l| >= kappa / |k|^exponent`.
    DsAlpha,
    /// Interval around `p/q` intersected with `DC1(eta^2, 3)`.
    Dpq,
}

impl DiophantineClass {
    pub fn name(self) -> &'static str {
        match self {
            DiophantineClass::Dc1 => "DC1",
            DiophantineClass::DsAlpha => "DS",
            DiophantineClass::Dpq => "Dpq",
        }
    }
}

/// Why a witness violates membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessReason {
    /// The defining inequality fails at `(k, l)`.
    Inequality,
    /// `alpha` lies outside the interval around `k/l`.
    OutsideInterval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Witness {
    pub k: i64,
    pub l: i64,
    pub reason: WitnessReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Member,
    NonMember(Witness),
}

/// Membership verdict valid up to `checked_up_to`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineCert {
    pub class: DiophantineClass,
    /// `eta` or `kappa`.
    pub constant: f64,
    /// `sigma`, or the `|k|` exponent for the DS class.
    pub sigma: f64,
    pub checked_up_to: u64,
    pub verdict: Verdict,
}

impl DiophantineCert {
    pub fn is_member(&self) -> bool {
        self.verdict == Verdict::Member
    }

    pub fn witness(&self) -> Option<Witness> {
        match self.verdict {
            Verdict::NonMember(w) => Some(w),
            Verdict::Member => None,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Tests `|alpha - k/l| >= eta / l^sigma` for all `l <= cap`.
///
/// Denominators up to 1000 are scanned exhaustively; beyond that only
/// convergent denominators are tested, which suffices because a
/// denominator between consecutive convergents never approximates better
/// than the smaller convergent.
pub fn dc1_membership(alpha: &Frequency, eta: f64, sigma: f64, cap: u64) -> Result<DiophantineCert> {
    check_positive("eta", eta)?;
    if !(sigma >= 2.0) {
        return Err(Error::param(format!("sigma must be >= 2, got {sigma}")));
    }
    let cert = |verdict| DiophantineCert {
        class: DiophantineClass::Dc1,
        constant: eta,
        sigma,
        checked_up_to: cap,
        verdict,
    };
    let value = match *alpha {
        Frequency::Rational { p, q } => {
            // |alpha - p/q| = 0 fails for any eta > 0
            if q <= cap {
                return Ok(cert(Verdict::NonMember(Witness {
                    k: p as i64,
                    l: q as i64,
                    reason: WitnessReason::Inequality,
                })));
            }
            p as f64 / q as f64
        }
        Frequency::Irrational { value, .. } => value,
    };
    let violates = |l: u64| -> Option<Witness> {
        let k = (value * l as f64).round();
        let lf = l as f64;
        if (value - k / lf).abs() < eta / lf.powf(sigma) {
            Some(Witness {
                k: k as i64,
                l: l as i64,
                reason: WitnessReason::Inequality,
            })
        } else {
            None
        }
    };
    for l in 1..=cap.min(BRUTE_FORCE_RANGE) {
        if let Some(w) = violates(l) {
            return Ok(cert(Verdict::NonMember(w)));
        }
    }
    if cap > BRUTE_FORCE_RANGE {
        let own;
        let convs: &[(u64, u64)] = match alpha {
            Frequency::Irrational {
                convergents: c,
                cap: c_cap,
                ..
            } if *c_cap >= cap => c,
            _ => {
                own = convergents(value, cap)?;
                &own
            }
        };
        for &(_, l) in convs.iter().filter(|c| c.1 > BRUTE_FORCE_RANGE && c.1 <= cap) {
            if let Some(w) = violates(l) {
                return Ok(cert(Verdict::NonMember(w)));
            }
        }
    }
    Ok(cert(Verdict::Member))
}

/// Membership in `]p/q - eta, p/q + eta[ ∩ DC1(eta^2, 3)`.
pub fn dpq_membership(alpha: &Frequency, center: &Frequency, eta: f64, cap: u64) -> Result<DiophantineCert> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::param(format!("eta must lie in (0, 1/2), got {eta}")));
    }
    let (p, q) = center
        .as_rational()
        .ok_or_else(|| Error::param("the center of a Dpq set must be rational"))?;
    let mut c = if (alpha.value() - center.value()).abs() >= eta {
        DiophantineCert {
            class: DiophantineClass::Dpq,
            constant: eta,
            sigma: 3.0,
            checked_up_to: cap,
            verdict: Verdict::NonMember(Witness {
                k: p as i64,
                l: q as i64,
                reason: WitnessReason::OutsideInterval,
            }),
        }
    } else {
        dc1_membership(alpha, eta * eta, 3.0, cap)?
    };
    c.class = DiophantineClass::Dpq;
    c.constant = eta;
    Ok(c)
}

/// Tests `|2 rho - k alpha - l| >= kappa / |k|^exponent` for `0 < |k| <= cap`.
pub fn ds_membership(rho: f64, alpha: &Frequency, kappa: f64, exponent: f64, cap: u64) -> Result<DiophantineCert> {
    check_positive("kappa", kappa)?;
    check_positive("exponent", exponent)?;
    let Frequency::Irrational { value, .. } = *alpha else {
        return Err(Error::Unsupported(
            "the DS class is only defined for irrational frequencies".into(),
        ));
    };
    if !rho.is_finite() {
        return Err(Error::param("rho must be finite"));
    }
    let cap_i = cap as i64;
    for m in 1..=cap_i {
        for k in [m, -m] {
            let t = 2.0 * rho - k as f64 * value;
            let l = t.round();
            if (t - l).abs() < kappa / (m as f64).powf(exponent) {
                return Ok(DiophantineCert {
                    class: DiophantineClass::DsAlpha,
                    constant: kappa,
                    sigma: exponent,
                    checked_up_to: cap,
                    verdict: Verdict::NonMember(Witness {
                        k,
                        l: l as i64,
                        reason: WitnessReason::Inequality,
                    }),
                });
            }
        }
    }
    Ok(DiophantineCert {
        class: DiophantineClass::DsAlpha,
        constant: kappa,
        sigma: exponent,
        checked_up_to: cap,
        verdict: Verdict::Member,
    })
}

/// Monte-Carlo estimate of the relative measure of a `Dpq` set.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub samples: usize,
    pub members: usize,
    pub fraction: f64,
    /// Binomial standard deviation of `fraction`.
    pub std_dev: f64,
    /// `1 - 2 eta`, the guaranteed relative measure.
    pub lower_bound: f64,
}

/// Uniform samples of `]p/q - eta, p/q + eta[`, deterministic in `seed`.
pub fn sample_interval(center: f64, eta: f64, samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| center + eta * (2.0 * rng.gen::<f64>() - 1.0))
        .collect()
}

pub fn dpq_density(center: &Frequency, eta: f64, samples: usize, cap: u64, seed: u64) -> Result<DensityEstimate> {
    if samples == 0 {
        return Err(Error::param("need at least one sample"));
    }
    let xs = sample_interval(center.value(), eta, samples, seed);
    let verdicts: Result<Vec<bool>> = xs
        .par_iter()
        .map(|&a| {
            if !(a > 0.0 && a < 1.0) {
                return Ok(false);
            }
            Ok(dpq_membership(&Frequency::irrational(a, cap)?, center, eta, cap)?.is_member())
        })
        .collect();
    let members = verdicts?.into_iter().filter(|m| *m).count();
    let fraction = members as f64 / samples as f64;
    let lower = 1.0 - 2.0 * eta;
    Ok(DensityEstimate {
        samples,
        members,
        fraction,
        std_dev: (lower * (1.0 - lower) / samples as f64).sqrt(),
        lower_bound: lower,
    })
}

/// First member of `D_{p/q}(eta)` in the seeded sample stream.
pub fn sample_dpq(center: &Frequency, eta: f64, cap: u64, seed: u64) -> Result<(Frequency, DiophantineCert)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let a = center.value() + eta * (2.0 * rng.gen::<f64>() - 1.0);
        if !(a > 0.0 && a < 1.0) {
            continue;
        }
        let f = Frequency::irrational(a, cap)?;
        let c = dpq_membership(&f, center, eta, cap)?;
        if c.is_member() {
            return Ok((f, c));
        }
    }
    Err(Error::Numerical("no member of the Dpq set found in 10^4 draws".into()))
}
