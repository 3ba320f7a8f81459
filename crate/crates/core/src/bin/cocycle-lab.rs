use clap::{Parser, Subcommand};
use cocycle_lab::arithmetic::{dpq_density, dpq_membership, sample_dpq, sample_interval, DiophantineCert, DEFAULT_CAP};
use cocycle_lab::cocycle::SchrodingerLoop;
use cocycle_lab::config::Config;
use cocycle_lab::lyapunov::{le_profile, nu_upper_bound, LeOptions, UhParams};
use cocycle_lab::reduce::{cheap_trick_reduce, rotation_defect, write_conjugator_dump, write_ledger, ReduceOptions};
use cocycle_lab::rotation::rotation_number;
use cocycle_lab::scan::{
    find_windows, locate_spectrum, run_scan, write_window_report, FrequencySpec, ScanConfig, WindowOptions, CSV_VERSION,
};
use cocycle_lab::{Error, Frequency, Result};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "cocycle-lab",
    version,
    about = "Quasi-periodic Schrodinger cocycle experiments"
)]
struct Cli {
    /// Experiment file (sectioned `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// LE, rotation number, DOS, cone test and Herman bound over an energy grid.
    Scan,
    /// Ac candidate intervals and the pp window at a rational frequency.
    Windows,
    /// Energies where the cone test fails.
    Spectrum,
    /// Complexified exponent `nu -> L(nu)`.
    Profile,
    /// Normal form, inductive conjugation steps and the cohomological equation.
    Reduce,
    /// Monte-Carlo measure of a Dpq set and a seeded member.
    DcSample,
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Windows => "windows",
            Command::Spectrum => "spectrum",
            Command::Profile => "profile",
            Command::Reduce => "reduce",
            Command::DcSample => "dc",
        }
    }
}

fn load(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.set(&format!("seed={s}"))?;
        cfg.set(&format!("{}.seed={s}", cli.command.section()))?;
    }
    Ok(cfg)
}

fn output(cli: &Cli) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn seed_of(cfg: &Config, section: &str) -> Result<u64> {
    cfg.get_or(section, "seed", cfg.get_or("", "seed", 0)?)
}

fn uh_params(cfg: &Config, section: &str) -> Result<UhParams> {
    let d = UhParams::default();
    Ok(UhParams {
        n: cfg.count_at_least(section, "uh_n", d.n, 1)?,
        margin: cfg.float_in(section, "uh_margin", d.margin, 1e-12, std::f64::consts::FRAC_PI_4)?,
        phases: cfg.count_at_least(section, "uh_phases", d.phases, 1)?,
        min_gap_rate: cfg.float_in(section, "uh_min_gap_rate", d.min_gap_rate, 0.0, 1e3)?,
    })
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    let cfg = load(cli)?;
    let section = cli.command.section();
    match cli.command {
        Command::Scan => {
            let sc = ScanConfig::from_config(&cfg)?;
            let data = run_scan(&sc)?;
            let mut w = output(cli)?;
            data.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Windows => {
            let v = cfg.potential()?;
            let freq = cfg.frequency(section, "alpha")?.ok_or_else(|| Error::Config {
                line: 0,
                msg: "missing key windows.alpha".into(),
            })?;
            let d = WindowOptions::default();
            let spectrum_alpha = cfg.frequency(section, "spectrum_alpha")?;
            let opts = WindowOptions {
                theta_density: cfg.count_at_least(section, "theta_density", d.theta_density, 16)?,
                ac_samples: cfg.count_at_least(section, "ac_samples", d.ac_samples, 1)?,
                pp_samples: cfg.count_at_least(section, "pp_samples", d.pp_samples, 1)?,
                grid: cfg.count_at_least(section, "grid", d.grid, 256)?,
                max_grid: cfg.count_at_least(section, "max_grid", d.max_grid, 256)?,
                spectrum_alpha,
                spectrum_count: cfg.count_at_least(section, "spectrum_count", d.spectrum_count, 1)?,
                uh: uh_params(&cfg, section)?,
            };
            let report = find_windows(&v, &freq, &opts)?;
            let mut w = output(cli)?;
            write_window_report(&mut w, &report)?;
            w.flush()?;
        }
        Command::Spectrum => {
            let v = cfg.potential()?;
            let alpha = FrequencySpec::from_config(&cfg, section, seed_of(&cfg, section)?)?
                .resolve()?
                .0;
            let lo = cfg.float_in(section, "e_min", -3.0, -1e6, 1e6)?;
            let hi = cfg.float_in(section, "e_max", 3.0, lo, 1e6)?;
            let count = cfg.count_at_least(section, "e_count", 64, 1)?;
            let s = locate_spectrum(&v, &alpha, (lo, hi), count, &uh_params(&cfg, section)?)?;
            let mut w = output(cli)?;
            writeln!(w, "{CSV_VERSION}")?;
            writeln!(w, "E,alpha,uh,ids_cell")?;
            for (i, (e, f)) in s.energies.iter().zip(&s.uniformly_hyperbolic).enumerate() {
                // cell ending at this energy carries spectrum
                let cell = i > 0 && s.ids_cells.iter().any(|c| c.1 == *e);
                writeln!(w, "{e},{},{},{}", alpha.value(), *f as u8, cell as u8)?;
            }
            w.flush()?;
        }
        Command::Profile => {
            let v = cfg.potential()?;
            let seed = seed_of(&cfg, section)?;
            let alpha = FrequencySpec::from_config(&cfg, section, seed)?.resolve()?.0;
            let energy: f64 = cfg.require(section, "energy")?;
            let count = cfg.count_at_least(section, "nu_count", 16, 3)?;
            let top = nu_upper_bound(&v, cfg.get(section, "nu_max")?);
            if top.is_nan() || top <= 0.0 {
                return Err(Error::Config {
                    line: 0,
                    msg: "profile needs an analytic potential".into(),
                });
            }
            let nu: Vec<f64> = (1..=count).map(|i| top * i as f64 / count as f64).collect();
            let opts = LeOptions {
                n: cfg.count_at_least(section, "n", 100_000, cocycle_lab::lyapunov::MIN_STEPS)?,
                phases: cfg.count_at_least(section, "phases", 8, 1)?,
                seed,
            };
            let prof = le_profile(&v, energy, &alpha, &nu, &opts, Some((0, count - 1)))?;
            let mut w = output(cli)?;
            writeln!(w, "{CSV_VERSION}")?;
            if let Some(f) = prof.fit {
                writeln!(
                    w,
                    "# fit slope={} intercept={} acceleration={} quantization_residual={}",
                    f.slope, f.intercept, f.acceleration, f.quantization_residual
                )?;
            }
            writeln!(w, "nu,le,le_stderr,second_difference")?;
            for i in 0..prof.nu.len() {
                let d2 = if i > 0 && i + 1 < prof.nu.len() {
                    prof.second_differences[i - 1].to_string()
                } else {
                    String::new()
                };
                writeln!(w, "{},{},{},{}", prof.nu[i], prof.values[i], prof.stderr[i], d2)?;
            }
            w.flush()?;
        }
        Command::Reduce => {
            let v = cfg.potential()?;
            let seed = seed_of(&cfg, section)?;
            let spec = FrequencySpec::from_config(&cfg, section, seed)?;
            let (alpha, _) = spec.resolve()?;
            let center = match &spec {
                FrequencySpec::Dpq { center, .. } => center.clone(),
                FrequencySpec::Fixed(_) => cfg.frequency(section, "rational")?.ok_or_else(|| Error::Config {
                    line: 0,
                    msg: "missing key reduce.rational".into(),
                })?,
            };
            let (p, q) = center.as_rational().ok_or_else(|| Error::Config {
                line: 0,
                msg: "reduce.rational must be p/q".into(),
            })?;
            let energy: f64 = cfg.require(section, "energy")?;
            let d = ReduceOptions::default();
            let opts = ReduceOptions {
                grid: cfg.count_at_least(section, "grid", d.grid, 64)?,
                cutoff: cfg.count_at_least(section, "cutoff", d.cutoff, 1)?,
                divisor_floor: cfg.float_in(section, "divisor_floor", d.divisor_floor, 0.0, 1.0)?,
                smoothness: cfg.float_in(section, "smoothness", d.smoothness, 0.0, 64.0)?,
                newton_tol: cfg.float_in(section, "newton_tol", d.newton_tol, 1e-16, 1.0)?,
                newton_max_iter: cfg.count_at_least(section, "newton_max_iter", d.newton_max_iter, 1)?,
                psi_floor: cfg.float_in(section, "psi_floor", d.psi_floor, 0.0, 1.0)?,
                f_threshold: cfg.float_in(section, "f_threshold", d.f_threshold, 0.0, 1e3)?,
            };
            let j_max = cfg.get_or(section, "j_max", 3usize)?;
            let tol = cfg.float_in(section, "tolerance", 1e-6, 0.0, 1.0)?;
            let lp = SchrodingerLoop { potential: &v, energy };
            let red = cheap_trick_reduce(&lp, &alpha, p, q, j_max, tol, &opts)?;
            let rot_steps = cfg.count_at_least(section, "rotation_steps", 1_000_000, 1000)?;
            let rho = rotation_number(&v, energy, &alpha, rot_steps, 0.0, 0.0)?;
            let (defect, k) = rotation_defect(rho.rho_bar, red.theta0, alpha.value());
            eprintln!(
                "alpha={} theta0={} final_residual={:e} verification_residual={:e} rotation_defect={:e} (k={k})",
                alpha.value(),
                red.theta0,
                red.final_residual,
                red.verification_residual,
                defect
            );
            let mut w = output(cli)?;
            writeln!(w, "{CSV_VERSION}")?;
            write_ledger(&mut w, &red.ledger)?;
            w.flush()?;
            if let Some(path) = cfg.get::<String>(section, "conjugator_dump")? {
                let f = File::create(&path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
                write_conjugator_dump(BufWriter::new(f), &red.conjugator)?;
            }
        }
        Command::DcSample => {
            let center = cfg.frequency(section, "center")?.unwrap_or(Frequency::rational(1, 2)?);
            let eta = cfg.float_in(section, "eta", 0.1, 1e-12, 0.5)?;
            let samples = cfg.count_at_least(section, "samples", 100_000, 1)?;
            let cap = cfg.get_or::<f64>(section, "cap", DEFAULT_CAP as f64)? as u64;
            let seed = seed_of(&cfg, section)?;
            let est = dpq_density(&center, eta, samples, cap, seed)?;
            let rows = cfg.get_or(section, "rows", 16usize)?;
            let mut w = output(cli)?;
            writeln!(w, "{CSV_VERSION}")?;
            writeln!(
                w,
                "# density center={} eta={} samples={} members={} fraction={} std_dev={} lower_bound={}",
                center.value(),
                eta,
                est.samples,
                est.members,
                est.fraction,
                est.std_dev,
                est.lower_bound
            )?;
            writeln!(w, "alpha,class,eta,sigma,verdict,witness_k,witness_l")?;
            let (member, cert) = sample_dpq(&center, eta, cap, seed)?;
            write_cert(&mut w, member.value(), &cert)?;
            for a in sample_interval(center.value(), eta, rows, seed.wrapping_add(1)) {
                if !(a > 0.0 && a < 1.0) {
                    continue;
                }
                let cert = dpq_membership(&Frequency::irrational(a, cap)?, &center, eta, cap)?;
                write_cert(&mut w, a, &cert)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn write_cert(w: &mut dyn Write, alpha: f64, c: &DiophantineCert) -> io::Result<()> {
    let (verdict, k, l) = match c.witness() {
        None => ("member", String::new(), String::new()),
        Some(wt) => ("non-member", wt.k.to_string(), wt.l.to_string()),
    };
    writeln!(
        w,
        "{alpha},{},{},{},{verdict},{k},{l}",
        c.class.name(),
        c.constant,
        c.sigma
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
