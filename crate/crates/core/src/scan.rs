//! Experiment drivers: energy scans, window finders and spectrum location.

use crate::arithmetic::{sample_dpq, DiophantineCert, Frequency};
use crate::classify::{ellipticity_report, regularity_check, Verdict, MIN_GRID};
use crate::cocycle::{orbit_point, schrodinger_step, QStepLoop};
use crate::config::{parse_frequency, Config};
use crate::error::{Error, Result};
use crate::lyapunov::{herman_lower_bound, le_estimate, uh_test, LeOptions, UhParams};
use crate::potentials::{Potential, PotentialKind};
use crate::rotation::{density_of_states, rotation_number};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::Write;

/// First line of every CSV written by this crate.
pub const CSV_VERSION: &str = "# cocycle-lab v1";

/// A fixed frequency or a seeded draw from a `Dpq` set.
#[derive(Clone, Debug, PartialEq)]
pub enum FrequencySpec {
    Fixed(Frequency),
    Dpq {
        center: Frequency,
        eta: f64,
        cap: u64,
        seed: u64,
    },
}

impl FrequencySpec {
    pub fn resolve(&self) -> Result<(Frequency, Option<DiophantineCert>)> {
        match self {
            FrequencySpec::Fixed(f) => Ok((f.clone(), None)),
            FrequencySpec::Dpq { center, eta, cap, seed } => {
                let (f, c) = sample_dpq(center, *eta, *cap, *seed)?;
                Ok((f, Some(c)))
            }
        }
    }

    /// Reads `alpha` from `section`: `golden`, `p/q`, a decimal, or `dpq`
    /// together with `dpq_center`, `dpq_eta`, `dpq_cap` and `dpq_seed`.
    pub fn from_config(cfg: &Config, section: &str, default_seed: u64) -> Result<FrequencySpec> {
        let raw: String = cfg.get_or(section, "alpha", "golden".to_string())?;
        if raw != "dpq" {
            return Ok(FrequencySpec::Fixed(
                cfg.frequency(section, "alpha")?.unwrap_or_else(Frequency::golden),
            ));
        }
        let center_raw: String = cfg.require(section, "dpq_center")?;
        let line = cfg.entry(section, "dpq_center").map(|e| e.line).unwrap_or(0);
        let center = parse_frequency(&center_raw).map_err(|e| Error::Config {
            line,
            msg: format!("{section}.dpq_center: {e}"),
        })?;
        if !center.is_rational() {
            return Err(Error::Config {
                line,
                msg: format!("{section}.dpq_center must be a fraction p/q"),
            });
        }
        Ok(FrequencySpec::Dpq {
            center,
            eta: cfg.float_in(section, "dpq_eta", 1e-3, 1e-12, 0.5)?,
            cap: cfg.get_or::<f64>(section, "dpq_cap", 1e4)? as u64,
            seed: cfg.get_or(section, "dpq_seed", default_seed)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub potential: Potential,
    pub frequency: FrequencySpec,
    pub e_min: f64,
    pub e_max: f64,
    pub e_count: usize,
    pub n_steps: usize,
    pub phases: usize,
    pub seed: u64,
    pub uh: UhParams,
}

impl ScanConfig {
    /// Reads the `[potential]` and `[scan]` sections.
    pub fn from_config(cfg: &Config) -> Result<ScanConfig> {
        let seed: u64 = cfg.get_or("scan", "seed", cfg.get_or("", "seed", 0)?)?;
        let uh_default = UhParams::default();
        let sc = ScanConfig {
            potential: cfg.potential()?,
            frequency: FrequencySpec::from_config(cfg, "scan", seed)?,
            e_min: cfg.float_in("scan", "e_min", -3.0, -1e6, 1e6)?,
            e_max: cfg.float_in("scan", "e_max", 3.0, -1e6, 1e6)?,
            e_count: cfg.count_at_least("scan", "e_count", 512, 2)?,
            n_steps: cfg.count_at_least("scan", "n", 100_000, crate::lyapunov::MIN_STEPS)?,
            phases: cfg.count_at_least("scan", "phases", 8, 1)?,
            seed,
            uh: UhParams {
                n: cfg.count_at_least("scan", "uh_n", uh_default.n, 1)?,
                margin: cfg.float_in("scan", "uh_margin", uh_default.margin, 1e-12, PI / 4.0)?,
                phases: cfg.count_at_least("scan", "uh_phases", uh_default.phases, 1)?,
                min_gap_rate: cfg.float_in("scan", "uh_min_gap_rate", uh_default.min_gap_rate, 0.0, 1e3)?,
            },
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.e_count < 2 {
            return Err(Error::param("the energy grid needs at least 2 points"));
        }
        if !(self.e_min.is_finite() && self.e_max.is_finite() && self.e_min < self.e_max) {
            return Err(Error::param("need finite e_min < e_max"));
        }
        if self.n_steps < crate::lyapunov::MIN_STEPS || self.phases == 0 {
            return Err(Error::param("n and phases are too small"));
        }
        Ok(())
    }

    pub fn energies(&self) -> Vec<f64> {
        energy_grid(self.e_min, self.e_max, self.e_count)
    }
}

/// `count` equally spaced points of `[lo, hi]`, endpoints included.
pub fn energy_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRow {
    pub energy: f64,
    pub le: f64,
    pub le_stderr: f64,
    pub rho: f64,
    pub dos: f64,
    pub uniformly_hyperbolic: bool,
    /// Present for the analytic peak at `|E| > 2`.
    pub herman: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanDataset {
    pub alpha: Frequency,
    pub rows: Vec<ScanRow>,
}

impl ScanDataset {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_VERSION}")?;
        writeln!(w, "E,alpha,le,le_stderr,rho,dos,uh,herman")?;
        let a = self.alpha.value();
        for r in &self.rows {
            let herman = r.herman.map(|h| h.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.energy, a, r.le, r.le_stderr, r.rho, r.dos, r.uniformly_hyperbolic as u8, herman
            )?;
        }
        Ok(())
    }
}

/// Lyapunov exponent, rotation number, density of states, cone test and
/// the subharmonic bound at every energy of the grid.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanDataset> {
    cfg.validate()?;
    let (alpha, _) = cfg.frequency.resolve()?;
    let le_opts = LeOptions {
        n: cfg.n_steps,
        phases: cfg.phases,
        seed: cfg.seed,
    };
    let v = &cfg.potential;
    let rows: Result<Vec<ScanRow>> = cfg
        .energies()
        .par_iter()
        .map(|&e| {
            let le = le_estimate(v, e, 0.0, &alpha, &le_opts)?;
            let rot = rotation_number(v, e, &alpha, cfg.n_steps, 0.0, 0.0)?;
            let uh = uh_test(v, e, &alpha, &cfg.uh)?;
            let herman = match v.kind() {
                PotentialKind::PoissonPeak { lambda } if e.abs() > 2.0 => {
                    Some(herman_lower_bound(v.height(), *lambda, e)?.value)
                }
                _ => None,
            };
            Ok(ScanRow {
                energy: e,
                le: le.value,
                le_stderr: le.stderr,
                rho: rot.rho,
                dos: density_of_states(&rot)?,
                uniformly_hyperbolic: uh.uniformly_hyperbolic,
                herman,
            })
        })
        .collect();
    Ok(ScanDataset { alpha, rows: rows? })
}

/// Knobs of [`find_windows`].
#[derive(Clone, Debug, PartialEq)]
pub struct WindowOptions {
    /// Points per unit of `theta` in the inequality solve.
    pub theta_density: usize,
    /// Energies checked per ac candidate.
    pub ac_samples: usize,
    /// Energies checked in the pp window.
    pub pp_samples: usize,
    /// First and last phase grids of the ellipticity check.
    pub grid: usize,
    pub max_grid: usize,
    /// Frequency for the spectrum hits in `[3, K - 2]`; skipped when absent.
    pub spectrum_alpha: Option<Frequency>,
    pub spectrum_count: usize,
    pub uh: UhParams,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            theta_density: 1 << 16,
            ac_samples: 5,
            pp_samples: 5,
            grid: 4096,
            max_grid: 1 << 20,
            spectrum_alpha: None,
            spectrum_count: 64,
            uh: UhParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcSample {
    pub energy: f64,
    /// `2 - max |tr|` on the phase grid.
    pub delta: f64,
    pub verdict: Verdict,
    pub grid: usize,
    /// Totally elliptic with `delta >= delta_k`.
    pub passed: bool,
}

/// A maximal interval `J_k` on which the three trace conditions hold.
#[derive(Clone, Debug, PartialEq)]
pub struct AcCandidate {
    pub k: u64,
    pub theta: (f64, f64),
    /// `2 cos J_k`, increasing.
    pub energy: (f64, f64),
    /// `min 2 - 2 |cos(q theta)|` on `J_k`.
    pub delta_k: f64,
    /// Smallest slack of: the sign condition (`s c`), the amplitude
    /// condition (`1/2 - K |s|`), the trace band (`min(2 - |2c|, |2c| - 3/2)`).
    pub margins: [f64; 3],
    pub samples: Vec<AcSample>,
}

impl AcCandidate {
    pub fn certified(&self) -> bool {
        self.samples.iter().all(|s| s.passed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpSample {
    pub energy: f64,
    pub mixed: bool,
    pub transversal: bool,
    /// `None` when the potential is not analytic (transversality only).
    pub regular: Option<bool>,
    pub h_prime: Option<f64>,
}

impl PpSample {
    pub fn passed(&self) -> bool {
        self.mixed && self.transversal && self.regular.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpWindow {
    pub energy: (f64, f64),
    pub samples: Vec<PpSample>,
}

/// Two-step traces over `E in [-3/(2K), -1/K]` at several frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStepCheck {
    pub energy: (f64, f64),
    pub alphas: Vec<f64>,
    /// `2 - max |tr(S(x + alpha) S(x))|` over the sampled `(x, E, alpha)`.
    pub margin: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub p: u64,
    pub q: u64,
    pub height: f64,
    pub ac_candidates: Vec<AcCandidate>,
    pub pp_window: Option<PpWindow>,
    pub two_step: Option<TwoStepCheck>,
    pub spectrum_hits: Vec<f64>,
    /// Grid cells of `[3, K - 2]` where the density of states rises.
    pub spectrum_cells: Vec<(f64, f64)>,
}

/// `sin(q t) / sin t`, continuous across the zeros of `sin t`.
fn sin_ratio(q: u64, t: f64) -> f64 {
    let s = t.sin();
    if s.abs() < 1e-12 {
        // limit q cos(q t) / cos t
        q as f64 * (q as f64 * t).cos() / t.cos()
    } else {
        (q as f64 * t).sin() / s
    }
}

fn window_margins(q: u64, height: f64, t: f64) -> [f64; 3] {
    let s = sin_ratio(q, t);
    let c = (q as f64 * t).cos();
    let two_c = (2.0 * c).abs();
    [s * c, 0.5 - height * s.abs(), (2.0 - two_c).min(two_c - 1.5)]
}

/// Maximal runs of grid points where all three margins are positive,
/// searched within `pi/(2q)` of each `theta_k = pi k / q`.
pub fn solve_theta_windows(q: u64, height: f64, density: usize) -> Vec<(u64, f64, f64, f64, [f64; 3])> {
    let mut out = Vec::new();
    let half = PI / (2.0 * q as f64);
    let n = ((2.0 * half * density as f64).ceil() as usize).max(16);
    for k in 1..2 * q {
        let center = PI * k as f64 / q as f64;
        let pts: Vec<f64> = (0..=n)
            .map(|i| center - half + 2.0 * half * i as f64 / n as f64)
            .collect();
        let ok: Vec<Option<[f64; 3]>> = pts
            .iter()
            .map(|&t| {
                let m = window_margins(q, height, t);
                m.iter().all(|&x| x > 0.0).then_some(m)
            })
            .collect();
        let mut i = 0;
        while i < pts.len() {
            if ok[i].is_none() {
                i += 1;
                continue;
            }
            let start = i;
            let mut margins = [f64::INFINITY; 3];
            let mut delta = f64::INFINITY;
            while i < pts.len() {
                let Some(m) = ok[i] else { break };
                for (a, b) in margins.iter_mut().zip(m) {
                    *a = a.min(b);
                }
                delta = delta.min(2.0 - 2.0 * (q as f64 * pts[i]).cos().abs());
                i += 1;
            }
            out.push((k, pts[start], pts[i - 1], delta, margins));
        }
    }
    out
}

fn certify_elliptic(lp: &QStepLoop<'_>, delta_k: f64, opts: &WindowOptions) -> Result<AcSample> {
    let mut grid = opts.grid.max(MIN_GRID);
    loop {
        let r = ellipticity_report(lp, grid)?;
        let settled = r.verdict != Verdict::Undetermined;
        if settled || grid >= opts.max_grid {
            return Ok(AcSample {
                energy: lp.energy,
                delta: r.delta,
                verdict: r.verdict,
                grid,
                passed: r.verdict == Verdict::TotallyElliptic && r.delta >= delta_k,
            });
        }
        grid *= 2;
    }
}

/// Interior sample points `lo + (hi - lo) (i + 1)/(m + 1)`, or the single
/// point of a degenerate interval.
fn interior_samples(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if hi <= lo || m == 0 {
        return vec![lo];
    }
    (0..m)
        .map(|i| lo + (hi - lo) * (i + 1) as f64 / (m + 1) as f64)
        .collect()
}

/// Ac candidates `2 cos J_k`, the pp window `[10, K - 10]`, the two-step
/// window for `q = 2`, and non-UH energies in `[3, K - 2]`.
pub fn find_windows(v: &Potential, freq: &Frequency, opts: &WindowOptions) -> Result<WindowReport> {
    let (p, q) = freq
        .as_rational()
        .ok_or_else(|| Error::param("windows are computed at a rational frequency"))?;
    let height = v.height();
    let mut ac_candidates: Vec<AcCandidate> = Vec::new();
    for (k, t0, t1, delta_k, margins) in solve_theta_windows(q, height, opts.theta_density) {
        let (e0, e1) = (2.0 * t0.cos(), 2.0 * t1.cos());
        let energy = (e0.min(e1), e0.max(e1));
        let dup = ac_candidates
            .iter()
            .any(|c| (c.energy.0 - energy.0).abs() < 1e-9 && (c.energy.1 - energy.1).abs() < 1e-9);
        if dup {
            continue;
        }
        let samples: Result<Vec<AcSample>> = interior_samples(energy.0, energy.1, opts.ac_samples)
            .into_iter()
            .map(|e| certify_elliptic(&QStepLoop::new(v, e, freq)?, delta_k, opts))
            .collect();
        ac_candidates.push(AcCandidate {
            k,
            theta: (t0, t1),
            energy,
            delta_k,
            margins,
            samples: samples?,
        });
    }
    ac_candidates.sort_by(|a, b| a.energy.0.total_cmp(&b.energy.0));

    let pp_window = if height >= 20.0 {
        let (lo, hi) = (10.0, height - 10.0);
        let samples: Result<Vec<PpSample>> = interior_samples(lo, hi, opts.pp_samples)
            .into_iter()
            .map(|e| pp_sample(v, e, freq, opts.grid.max(MIN_GRID)))
            .collect();
        Some(PpWindow {
            energy: (lo, hi),
            samples: samples?,
        })
    } else {
        None
    };

    let two_step = (q == 2).then(|| two_step_check(v, height, &[0.25, 0.5, 0.75], 64));

    let (spectrum_hits, spectrum_cells) = match &opts.spectrum_alpha {
        Some(a) if height >= 5.0 => {
            let s = locate_spectrum(v, a, (3.0, height - 2.0), opts.spectrum_count, &opts.uh)?;
            (s.non_uh, s.ids_cells)
        }
        _ => (Vec::new(), Vec::new()),
    };
    Ok(WindowReport {
        p,
        q,
        height,
        ac_candidates,
        pp_window,
        two_step,
        spectrum_hits,
        spectrum_cells,
    })
}

fn pp_sample(v: &Potential, energy: f64, freq: &Frequency, grid: usize) -> Result<PpSample> {
    let lp = QStepLoop::new(v, energy, freq)?;
    if v.is_analytic() {
        let r = regularity_check(&lp, grid)?;
        Ok(PpSample {
            energy,
            mixed: r.report.is_mixed(),
            transversal: r.report.transversal,
            regular: Some(r.regular),
            h_prime: Some(r.h_prime),
        })
    } else {
        let r = ellipticity_report(&lp, grid)?;
        Ok(PpSample {
            energy,
            mixed: r.is_mixed(),
            transversal: r.transversal,
            regular: None,
            h_prime: None,
        })
    }
}

/// Two-step traces on an `n x n` grid of `(x, E)` for each `alpha`.
pub fn two_step_check(v: &Potential, height: f64, alphas: &[f64], n: usize) -> TwoStepCheck {
    let (lo, hi) = (-1.5 / height, -1.0 / height);
    let energies = energy_grid(lo, hi, n.max(2));
    let max_abs = alphas
        .par_iter()
        .flat_map_iter(|&a| {
            let energies = &energies;
            (0..n).flat_map(move |i| {
                let x = i as f64 / n as f64;
                energies.iter().map(move |&e| {
                    let m = schrodinger_step(v, e, orbit_point(x, a, 1)) * schrodinger_step(v, e, x);
                    m.trace().abs()
                })
            })
        })
        .reduce(|| 0.0, f64::max);
    TwoStepCheck {
        energy: (lo, hi),
        alphas: alphas.to_vec(),
        margin: 2.0 - max_abs,
        samples: alphas.len() * n * energies.len(),
    }
}

/// Orbit length of the rotation numbers behind [`SpectrumScan::ids_cells`].
pub const IDS_STEPS: usize = 100_000;

/// Sampled complement of the uniformly hyperbolic set.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumScan {
    pub energies: Vec<f64>,
    pub uniformly_hyperbolic: Vec<bool>,
    pub non_uh: Vec<f64>,
    /// Neighbouring grid energies between which the integrated density of
    /// states rises by more than `4/IDS_STEPS`. The rotation number is
    /// constant on gaps, so each cell contains spectrum even when no grid
    /// energy fails the cone test.
    pub ids_cells: Vec<(f64, f64)>,
}

impl SpectrumScan {
    /// Some grid energy is not UH, or some cell carries spectrum.
    pub fn nonempty(&self) -> bool {
        !self.non_uh.is_empty() || !self.ids_cells.is_empty()
    }
}

/// Energies of a `count`-point grid of `window` where the cone test fails.
pub fn locate_spectrum(
    v: &Potential,
    alpha: &Frequency,
    window: (f64, f64),
    count: usize,
    uh: &UhParams,
) -> Result<SpectrumScan> {
    if alpha.is_rational() {
        return Err(Error::param("spectrum location needs an irrational frequency"));
    }
    if !(window.0.is_finite() && window.1.is_finite() && window.0 <= window.1) || count == 0 {
        return Err(Error::param("bad energy window"));
    }
    let energies = energy_grid(window.0, window.1, count);
    let flags: Result<Vec<bool>> = energies
        .par_iter()
        .map(|&e| Ok(uh_test(v, e, alpha, uh)?.uniformly_hyperbolic))
        .collect();
    let flags = flags?;
    let non_uh = energies
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(&e, _)| e)
        .collect();
    let ids: Result<Vec<f64>> = energies
        .par_iter()
        .map(|&e| density_of_states(&rotation_number(v, e, alpha, IDS_STEPS, 0.0, 0.0)?))
        .collect();
    let ids = ids?;
    let jump = 4.0 / IDS_STEPS as f64;
    let ids_cells = (1..energies.len())
        .filter(|&i| ids[i] - ids[i - 1] > jump)
        .map(|i| (energies[i - 1], energies[i]))
        .collect();
    Ok(SpectrumScan {
        energies,
        uniformly_hyperbolic: flags,
        non_uh,
        ids_cells,
    })
}

/// Writes a window report as sectioned CSV.
pub fn write_window_report<W: Write>(mut w: W, r: &WindowReport) -> std::io::Result<()> {
    writeln!(w, "{CSV_VERSION}")?;
    writeln!(w, "# windows p={} q={} K={}", r.p, r.q, r.height)?;
    writeln!(
        w,
        "kind,k,e_lo,e_hi,delta_k,sign_margin,amplitude_margin,trace_margin,certified"
    )?;
    for c in &r.ac_candidates {
        writeln!(
            w,
            "ac,{},{},{},{},{},{},{},{}",
            c.k,
            c.energy.0,
            c.energy.1,
            c.delta_k,
            c.margins[0],
            c.margins[1],
            c.margins[2],
            c.certified() as u8
        )?;
    }
    writeln!(w, "kind,E,verdict,delta,grid,passed")?;
    for c in &r.ac_candidates {
        for s in &c.samples {
            writeln!(
                w,
                "ac_sample,{},{},{},{},{}",
                s.energy,
                s.verdict.name(),
                s.delta,
                s.grid,
                s.passed as u8
            )?;
        }
    }
    if let Some(pp) = &r.pp_window {
        writeln!(w, "kind,E,mixed,transversal,regular,h_prime")?;
        for s in &pp.samples {
            let reg = s.regular.map(|b| (b as u8).to_string()).unwrap_or_default();
            let hp = s.h_prime.map(|h| h.to_string()).unwrap_or_default();
            writeln!(
                w,
                "pp,{},{},{},{},{}",
                s.energy, s.mixed as u8, s.transversal as u8, reg, hp
            )?;
        }
    }
    if let Some(t) = &r.two_step {
        writeln!(w, "kind,e_lo,e_hi,margin,samples")?;
        writeln!(w, "two_step,{},{},{},{}", t.energy.0, t.energy.1, t.margin, t.samples)?;
    }
    if !r.spectrum_hits.is_empty() {
        writeln!(w, "kind,E")?;
        for e in &r.spectrum_hits {
            writeln!(w, "spectrum,{e}")?;
        }
    }
    if !r.spectrum_cells.is_empty() {
        writeln!(w, "kind,e_lo,e_hi")?;
        for (a, b) in &r.spectrum_cells {
            writeln!(w, "spectrum_cell,{a},{b}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q2_window_matches_dense_oracle() {
        let k = 10.0;
        let wins = solve_theta_windows(2, k, 1 << 16);
        // oracle: direct inequality check on a denser E grid
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=400_000 {
            let e = -0.1 + 0.2 * i as f64 / 400_000.0;
            let t = (e / 2.0).acos();
            let s = (2.0 * t).sin() / t.sin();
            let c = (2.0 * t).cos();
            if s * c > 0.0 && k * s.abs() < 0.5 && (2.0 * c).abs() < 2.0 && (2.0 * c).abs() > 1.5 {
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        assert!(lo > -0.05 - 1e-6 && hi < 0.0, "{lo} {hi}");
        let near: Vec<_> = wins.iter().filter(|w| (2.0 * w.1.cos()).abs() < 0.1).collect();
        assert_eq!(near.len(), 2, "k = 1 and k = 3 give the same energies");
        for w in near {
            let (a, b) = (2.0 * w.1.cos(), 2.0 * w.2.cos());
            let (a, b) = (a.min(b), a.max(b));
            assert!((a - lo).abs() < 1e-4 && (b - hi).abs() < 1e-4, "{a} {b} vs {lo} {hi}");
            assert!(w.4.iter().all(|&m| m > 0.0));
        }
    }

    #[test]
    fn free_spectrum_and_far_energies() {
        let v = Potential::free();
        let a = Frequency::golden();
        let s = locate_spectrum(&v, &a, (-3.0, 3.0), 61, &UhParams::default()).unwrap();
        let lo = s.non_uh.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.non_uh.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (lo + 2.0).abs() <= 0.1 + 1e-12 && (hi - 2.0).abs() <= 0.1 + 1e-12,
            "{lo} {hi}"
        );

        let (peak, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        let s = locate_spectrum(&peak, &a, (19.0, 21.0), 9, &UhParams::default()).unwrap();
        assert!(s.non_uh.is_empty() && !s.nonempty());
        // spectrum in [3, 8] shows up through the density of states
        let s = locate_spectrum(&peak, &a, (3.0, 8.0), 64, &UhParams::default()).unwrap();
        assert!(s.nonempty(), "{:?}", s.ids_cells);
        assert!(locate_spectrum(
            &peak,
            &Frequency::rational(1, 2).unwrap(),
            (3.0, 8.0),
            4,
            &UhParams::default()
        )
        .is_err());
    }

    #[test]
    fn scan_rejects_bad_grids() {
        let cfg = Config::parse("[potential]\nkind = constant\nK = 0\n[scan]\ne_count = 1\n").unwrap();
        assert!(matches!(
            ScanConfig::from_config(&cfg),
            Err(Error::Config { line: 5, .. })
        ));
        let cfg = Config::parse("[potential]\nkind = constant\nK = 0\n[scan]\ne_min = nan\n").unwrap();
        assert!(matches!(
            ScanConfig::from_config(&cfg),
            Err(Error::Config { line: 5, .. })
        ));
    }

    #[test]
    fn free_scan_rows() {
        let cfg = Config::parse(
            "[potential]\nkind = constant\nK = 0\n[scan]\ne_min = -3\ne_max = 3\ne_count = 13\nn = 20000\nphases = 2\n",
        )
        .unwrap();
        let sc = ScanConfig::from_config(&cfg).unwrap();
        let d = run_scan(&sc).unwrap();
        for r in &d.rows {
            if r.energy.abs() < 2.0 {
                assert!(r.le < 0.01 && !r.uniformly_hyperbolic, "{r:?}");
            } else if r.energy.abs() > 2.2 {
                assert!(r.le > 0.5 && r.uniformly_hyperbolic, "{r:?}");
            }
        }
        assert!(d.rows.windows(2).all(|w| w[1].dos >= w[0].dos));
        assert!(d.rows.windows(2).all(|w| w[1].rho <= w[0].rho));
        let mut a = Vec::new();
        let mut b = Vec::new();
        d.write_csv(&mut a).unwrap();
        run_scan(&sc).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with(CSV_VERSION));
    }

    #[test]
    fn two_step_window_from_report() {
        let (v, _) = Potential::poisson_peak(10.0, 1e4).unwrap();
        let t = two_step_check(&v, 10.0, &[0.25, 0.5, 0.75], 16);
        assert!(t.margin >= 0.01, "{t:?}");
    }

    #[test]
    fn dpq_spec_is_deterministic() {
        let cfg = Config::parse("[scan]\nalpha = dpq\ndpq_center = 1/2\ndpq_eta = 1e-3\n").unwrap();
        let spec = FrequencySpec::from_config(&cfg, "scan", 0).unwrap();
        let (a, c) = spec.resolve().unwrap();
        let (b, _) = spec.resolve().unwrap();
        assert_eq!(a, b);
        assert!(c.unwrap().is_member());
        assert!((a.value() - 0.5).abs() < 1e-3);
    }
}
