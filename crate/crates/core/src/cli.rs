//! Command-line front end.
//!
//! Every command prints a summary, writes its tables as CSV into the
//! output directory and records a `<command>.manifest.json` with the
//! configuration, seed, crate version and a timestamp. CSV bodies depend
//! only on the configuration and seed.
//!
//! Exit codes: 0 success, 2 usage, 3 bad data or inputs, 4 numeric failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::cqed::{cooperativity, rabi_spectrum, reflectivity_at, CoupledSystem};
use crate::crystal::{count_uncertainty, effective_ion_count, effective_ion_count_thin, total_ion_count, ModeGeometry};
use crate::error::Error;
use crate::estimate::{
    fit_absorption, fit_calibration, fit_dispersion, fit_larmor, fit_lorentzian_dip, fit_rabi, fit_sqrt_n,
};
use crate::expsim::{pipeline, simulate_larmor, simulate_locked, simulate_scan, PipelineName};
use crate::larmor::{gyromagnetic_ratio, larmor_frequency, larmor_period, FieldConfig, SpinMixture};
use crate::motion::{effective_gamma, thermal_response, validity_check_with, ThermalConfig};
use crate::trace::{read_table, write_table, ScanTrace, Table};
use crate::units::{parse_quantity, to_khz, to_mhz, Dimension};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "CCQED_OUT";

#[derive(Debug, Parser)]
#[command(name = "ccqed", version, about = "Collective cavity QED of ion Coulomb crystals")]
pub struct Cli {
    /// Run configuration file (TOML sections with unit-suffixed values).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Read frequencies as angular (rad/s per Hz unit) instead of "2π × value".
    #[arg(long, global = true)]
    pub angular: bool,
    /// Output directory; overrides the config file and $CCQED_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cavity decay rates, finesse and single-ion coupling.
    Rates,
    /// Collective coupling, cooperativity and the strong-coupling verdict.
    Coupling(CouplingArgs),
    /// Effective ion number of the configured crystal with its uncertainty.
    Effn,
    /// Steady-state reflectivity spectrum.
    Spectrum(SpectrumArgs),
    /// Doppler-averaged response, effective γ′ and validity check.
    Thermal(ThermalArgs),
    /// Larmor precession readout C(τ).
    Larmor(LarmorArgs),
    /// Synthetic scanned or locked spectrum with noise.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV file.
    Fit(FitArgs),
    /// End-to-end synthetic reproduction of one measurement.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    /// Single-ion coupling, e.g. 0.53MHz.
    #[arg(long)]
    pub g: Option<String>,
    /// Effective ion number.
    #[arg(long)]
    pub n: Option<f64>,
    /// Effective dipole decay rate γ′, e.g. 11.9MHz.
    #[arg(long)]
    pub gamma_eff: Option<String>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Fixed atomic detuning; without it the probe and cavity are scanned together.
    #[arg(long)]
    pub delta: Option<String>,
    /// Half-width of the detuning range.
    #[arg(long, default_value = "40MHz")]
    pub span: String,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    #[arg(long)]
    pub n: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ThermalArgs {
    /// Temperature, e.g. 24mK; defaults to the config value.
    #[arg(long)]
    pub temperature: Option<String>,
    #[arg(long, default_value = "60MHz")]
    pub span: String,
    #[arg(long, default_value_t = 241)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct LarmorArgs {
    /// Add the configured readout noise.
    #[arg(long)]
    pub noisy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Cavity-length scan at fixed atomic detuning.
    Scan,
    /// Locked cavity, probe and cavity detunings equal.
    Locked,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimMode::Scan)]
    pub mode: SimMode,
    /// Atomic detuning for scans.
    #[arg(long, default_value = "0MHz")]
    pub delta: String,
    #[arg(long)]
    pub n: Option<f64>,
    /// Half-width of the locked grid.
    #[arg(long, default_value = "30MHz")]
    pub span: String,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    /// Lorentzian dip (detuning_mhz, counts|reflectivity[, sigma]).
    Dip,
    /// Locked spectrum (detuning_mhz, reflectivity[, sigma]).
    Rabi,
    /// Precession trace (tau_us, cooperativity[, sigma]).
    Larmor,
    /// κ′ versus Δ (detuning_mhz, kappa_prime_mhz[, sigma]).
    Absorption,
    /// Dip shift versus Δ (detuning_mhz, shift_mhz[, sigma]).
    Dispersion,
    /// g_N versus N (n, g_n_mhz[, sigma]).
    SqrtN,
    /// Larmor rate versus coil current (current_ma, omega_l_khz[, sigma]).
    Calibration,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: FitModel,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// fig4, fig5a, fig5b, fig6, fig7, fig8, fig9a, fig9b, fig10 or all.
    pub name: String,
    /// Expected values instead of noisy draws.
    #[arg(long)]
    pub noiseless: bool,
}

/// Failure of a command, carrying its exit category.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(e) => e.exit_code(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Session {
    cfg: RunConfig,
    angular: bool,
    out_dir: PathBuf,
    command: &'static str,
    files: Vec<String>,
}

impl Session {
    fn flag(&self, name: &str, text: &str, dim: Dimension) -> CliResult<f64> {
        parse_quantity(text, dim, self.angular).map_err(|m| Failure::Usage(format!("--{name}: {m}")))
    }

    fn csv_path(&mut self, stem: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(Error::from)?;
        let name = format!("{stem}.csv");
        self.files.push(name.clone());
        Ok(self.out_dir.join(name))
    }

    fn write_rows(&mut self, stem: &str, headers: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let path = self.csv_path(stem)?;
        write_table(BufWriter::new(File::create(path).map_err(Error::from)?), headers, rows)?;
        Ok(())
    }

    fn write_trace(&mut self, stem: &str, trace: &ScanTrace) -> CliResult<()> {
        let path = self.csv_path(stem)?;
        trace.write_csv(BufWriter::new(File::create(path).map_err(Error::from)?))?;
        Ok(())
    }

    fn system(&self, n: Option<f64>) -> CliResult<CoupledSystem> {
        let rates = self.cfg.cavity.rates()?;
        let n = n.unwrap_or(self.cfg.coupling.n_eff);
        Ok(CoupledSystem::new(self.cfg.single_ion_g()?, n, self.cfg.gamma_eff(), rates)?)
    }

    fn finish(&self, results: Value) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(Error::from)?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": self.cfg.seed,
            "angular": self.angular,
            "config": self.cfg,
            "versions": { "ccqed": env!("CARGO_PKG_VERSION") },
            "timestamp_unix": timestamp,
            "files": self.files,
            "results": results,
        });
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        let f = File::create(&path).map_err(Error::from)?;
        serde_json::to_writer_pretty(BufWriter::new(f), &manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        println!("wrote {} file(s) and {} to {}", self.files.len(), path.display(), self.out_dir.display());
        Ok(())
    }
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ccqed-out"))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p, cli.angular)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let command = match &cli.command {
        Command::Rates => "rates",
        Command::Coupling(_) => "coupling",
        Command::Effn => "effn",
        Command::Spectrum(_) => "spectrum",
        Command::Thermal(_) => "thermal",
        Command::Larmor(_) => "larmor",
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Pipeline(_) => "pipeline",
    };
    let mut s = Session { out_dir: output_dir(&cli, &cfg), cfg, angular: cli.angular, command, files: Vec::new() };
    let results = match &cli.command {
        Command::Rates => cmd_rates(&mut s)?,
        Command::Coupling(a) => cmd_coupling(&mut s, a)?,
        Command::Effn => cmd_effn(&mut s)?,
        Command::Spectrum(a) => cmd_spectrum(&mut s, a)?,
        Command::Thermal(a) => cmd_thermal(&mut s, a)?,
        Command::Larmor(a) => cmd_larmor(&mut s, a)?,
        Command::Simulate(a) => cmd_simulate(&mut s, a)?,
        Command::Fit(a) => cmd_fit(&mut s, a)?,
        Command::Pipeline(a) => cmd_pipeline(&mut s, a)?,
    };
    s.finish(results)
}

/// Parses arguments, runs, reports and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn grid(half_width: f64, points: usize) -> CliResult<Vec<f64>> {
    if points < 2 || half_width <= 0.0 {
        return Err(Failure::Usage("need a positive span and at least 2 points".into()));
    }
    Ok((0..points).map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64).collect())
}

fn cmd_rates(s: &mut Session) -> CliResult<Value> {
    let r = s.cfg.cavity.rates()?;
    let g = s.cfg.single_ion_g()?;
    println!("round-trip time   {:.4} ns", r.tau * 1e9);
    println!("free spectral range {:.4} GHz", r.fsr * 1e-9);
    println!("kappa1            2π × {:.4} MHz", to_mhz(r.kappa1));
    println!("kappa2            2π × {:.4} MHz", to_mhz(r.kappa2));
    println!("kappa_loss        2π × {:.4} MHz", to_mhz(r.kappa_loss));
    println!("kappa             2π × {:.4} MHz", to_mhz(r.kappa));
    println!("finesse           {:.0}", r.finesse);
    println!("mode volume       {:.4e} m^3", s.cfg.cavity.mode_volume());
    println!("single-ion g      2π × {:.4} MHz", to_mhz(g));
    s.write_rows(
        "rates",
        &["kappa1_mhz", "kappa2_mhz", "kappa_loss_mhz", "kappa_mhz", "finesse", "fsr_ghz", "g_mhz"],
        &[vec![to_mhz(r.kappa1), to_mhz(r.kappa2), to_mhz(r.kappa_loss), to_mhz(r.kappa), r.finesse, r.fsr * 1e-9, to_mhz(g)]],
    )?;
    Ok(json!({ "rates": r, "g": g }))
}

fn cmd_coupling(s: &mut Session, a: &CouplingArgs) -> CliResult<Value> {
    if let Some(g) = &a.g {
        s.cfg.coupling.g = Some(s.flag("g", g, Dimension::Frequency)?);
    }
    if let Some(ge) = &a.gamma_eff {
        s.cfg.coupling.gamma_eff = Some(s.flag("gamma-eff", ge, Dimension::Frequency)?);
    }
    let sys = s.system(a.n)?;
    let (kappa, gamma) = (sys.rates.kappa, sys.gamma_eff);
    let c = cooperativity(&sys);
    let strong = sys.g_n() > kappa.max(gamma);
    let threshold = (kappa.max(gamma) / sys.g).powi(2);
    println!("g_N = 2π × {:.4} MHz  (g = 2π × {:.4} MHz, N = {})", to_mhz(sys.g_n()), to_mhz(sys.g), sys.n_eff);
    println!("kappa = 2π × {:.4} MHz, gamma' = 2π × {:.4} MHz", to_mhz(kappa), to_mhz(gamma));
    println!("cooperativity C = {c:.4}");
    println!(
        "{} coupling: g_N {} max(kappa, gamma'); threshold N ≈ {threshold:.0}",
        if strong { "strong" } else { "not strong" },
        if strong { ">" } else { "≤" }
    );
    s.write_rows(
        "coupling",
        &["n", "g_mhz", "g_n_mhz", "kappa_mhz", "gamma_eff_mhz", "cooperativity", "threshold_n"],
        &[vec![sys.n_eff, to_mhz(sys.g), to_mhz(sys.g_n()), to_mhz(kappa), to_mhz(gamma), c, threshold]],
    )?;
    Ok(json!({ "g_n": sys.g_n(), "cooperativity": c, "strong": strong, "threshold_n": threshold }))
}

fn cmd_effn(s: &mut Session) -> CliResult<Value> {
    let c = s.cfg.crystal;
    let mode = ModeGeometry::new(s.cfg.cavity.waist, s.cfg.cavity.wavelength)?;
    let n = effective_ion_count(&c, &mode)?;
    let e = s.cfg.crystal_errors;
    let rel = count_uncertainty(e.density, e.imaging, &c, e.pumping)?;
    let thin_half = effective_ion_count_thin(c.density, c.half_length, s.cfg.cavity.waist);
    let thin_full = effective_ion_count_thin(c.density, 2.0 * c.half_length, s.cfg.cavity.waist);
    let total = total_ion_count(&c);
    println!("N = {:.1} ± {:.1}  (δN/N = {:.2} %)", n, n * rel, 100.0 * rel);
    println!("thin-crystal formula: {thin_half:.1} (half-length), {thin_full:.1} (full length)");
    println!("total ions in crystal: {total:.0}");
    s.write_rows(
        "effn",
        &["n_eff", "n_err", "rel_err", "thin_half_length", "thin_full_length", "total"],
        &[vec![n, n * rel, rel, thin_half, thin_full, total]],
    )?;
    Ok(json!({ "n_eff": n, "rel_uncertainty": rel, "thin": [thin_half, thin_full], "total": total }))
}

fn cmd_spectrum(s: &mut Session, a: &SpectrumArgs) -> CliResult<Value> {
    let sys = s.system(a.n)?;
    let span = s.flag("span", &a.span, Dimension::Frequency)?;
    let x = grid(span, a.points)?;
    let trace = match &a.delta {
        None => rabi_spectrum(&sys, &x)?,
        Some(d) => {
            let delta = s.flag("delta", d, Dimension::Frequency)?;
            let y = x.iter().map(|&dc| reflectivity_at(&sys, delta, dc)).collect();
            ScanTrace::new(x.clone(), y, crate::trace::Axis::Detuning, crate::trace::TraceKind::Normalized)?
        }
    };
    let (i, min) = trace.y.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &y)| if y < b.1 { (i, y) } else { b });
    println!("{} points, minimum reflectivity {min:.4} at 2π × {:.3} MHz", trace.len(), to_mhz(trace.x[i]));
    s.write_trace("spectrum", &trace)?;
    Ok(json!({ "points": trace.len(), "min_reflectivity": min, "min_detuning": trace.x[i] }))
}

fn cmd_thermal(s: &mut Session, a: &ThermalArgs) -> CliResult<Value> {
    let t = match &a.temperature {
        Some(t) => s.flag("temperature", t, Dimension::Temperature)?,
        None => s.cfg.thermal.temperature,
    };
    let th = ThermalConfig::new(t, s.cfg.thermal.ion_mass, s.cfg.transition.wavelength)?;
    // thermal broadening acts on the natural linewidth
    let sys = CoupledSystem { gamma_eff: s.cfg.transition.gamma, ..s.system(None)? };
    let span = s.flag("span", &a.span, Dimension::Frequency)?;
    let x = grid(span, a.points)?;
    let mut rows = Vec::with_capacity(x.len());
    for &d in &x {
        let hot = thermal_response(&sys, d, 0.0, &th)?;
        let cold = thermal_response(&sys, d, 0.0, &ThermalConfig { temperature: 0.0, ..th })?;
        rows.push(vec![
            to_mhz(d),
            to_mhz(hot.kappa_prime),
            to_mhz(-hot.delta_c_prime),
            to_mhz(cold.kappa_prime),
            to_mhz(-cold.delta_c_prime),
        ]);
    }
    let eg = effective_gamma(&sys, &th, &x)?;
    let v = validity_check_with(&sys, &th, s.cfg.thermal.validity_factor);
    println!("T = {:.2} mK, k v_D = 2π × {:.3} MHz", t * 1e3, to_mhz(v.doppler_rate));
    println!("gamma' fitted 2π × {:.3} ± {:.3} MHz, closed form 2π × {:.3} MHz", to_mhz(eg.fitted), to_mhz(eg.std_error), to_mhz(eg.closed_form));
    println!(
        "validity: min rate 2π × {:.3} MHz, margin {:.2} (needs ≥ {}): {}",
        to_mhz(v.min_rate),
        v.margin,
        v.factor,
        if v.valid { "valid" } else { "NOT valid" }
    );
    s.write_rows(
        "thermal",
        &["detuning_mhz", "kappa_prime_mhz", "shift_mhz", "kappa_prime_t0_mhz", "shift_t0_mhz"],
        &rows,
    )?;
    Ok(json!({ "temperature": t, "effective_gamma": eg, "validity": v }))
}

fn cmd_larmor(s: &mut Session, a: &LarmorArgs) -> CliResult<Value> {
    let mut p = s.cfg.pipeline_params();
    p.noiseless = !a.noisy;
    let field = FieldConfig { omega_x: s.cfg.larmor.field.omega_x, omega_z: s.cfg.larmor.field.omega_z };
    let probe = p.larmor_probe(s.cfg.seed)?;
    let trace = simulate_larmor(&SpinMixture::stretched_pair(), &field, &probe, &p.larmor_taus())?;
    let wl = larmor_frequency(&field);
    let gm = gyromagnetic_ratio(s.cfg.larmor.g_factor);
    println!(
        "omega_L = 2π × {:.3} kHz (|B| = {:.4} G), period {:.3} us",
        to_khz(wl),
        wl / gm * 1e4,
        larmor_period(&field) * 1e6
    );
    println!("{} delays, C(0) = {:.4}", trace.len(), trace.y[0]);
    s.write_trace("larmor", &trace)?;
    Ok(json!({ "omega_l": wl, "field": field }))
}

fn cmd_simulate(s: &mut Session, a: &SimulateArgs) -> CliResult<Value> {
    let sys = s.system(a.n)?;
    let p = s.cfg.pipeline_params();
    let noise = p.noise_model();
    let trace = match a.mode {
        SimMode::Scan => {
            let delta = s.flag("delta", &a.delta, Dimension::Frequency)?;
            simulate_scan(&sys, delta, &p.scan, &p.timing, &noise)?
        }
        SimMode::Locked => {
            let span = s.flag("span", &a.span, Dimension::Frequency)?;
            simulate_locked(&sys, &grid(span, a.points)?, &p.lock, &noise)?
        }
    };
    println!("{} samples ({:?}), seed {}", trace.len(), trace.kind, s.cfg.seed);
    s.write_trace("simulate", &trace)?;
    Ok(json!({ "mode": format!("{:?}", a.mode), "samples": trace.len() }))
}

fn column(t: &Table, name: &str, source: &str) -> CliResult<Vec<f64>> {
    let i = t
        .index_of(name)
        .ok_or_else(|| Error::data(source, 1, 1, format!("missing column {name:?} (have {})", t.headers.join(", "))))?;
    Ok(t.column(i).collect())
}

fn points_and_sigma(path: &Path, x: &str, y: &str, xs: f64, ys: f64) -> CliResult<(Vec<(f64, f64)>, Option<Vec<f64>>)> {
    let source = path.display().to_string();
    let t = read_table(File::open(path).map_err(Error::from)?, &source)?;
    let xv = column(&t, x, &source)?;
    let yv = column(&t, y, &source)?;
    let sig = t.index_of("sigma").map(|i| t.column(i).map(|v| v * ys).collect());
    Ok((xv.into_iter().zip(yv).map(|(a, b)| (a * xs, b * ys)).collect(), sig))
}

fn cmd_fit(s: &mut Session, a: &FitArgs) -> CliResult<Value> {
    let source = a.input.display().to_string();
    let mhz = crate::units::mhz(1.0);
    let trace = || -> CliResult<ScanTrace> { Ok(ScanTrace::read_csv(File::open(&a.input).map_err(Error::from)?, &source)?) };
    let v = match a.model {
        FitModel::Dip => {
            let f = fit_lorentzian_dip(&trace()?)?;
            println!(
                "center 2π × {:.4} ± {:.4} MHz, hwhm 2π × {:.4} ± {:.4} MHz, depth {:.4}",
                to_mhz(f.center.value),
                to_mhz(f.center.std_error),
                to_mhz(f.hwhm.value),
                to_mhz(f.hwhm.std_error),
                f.depth.value
            );
            serde_json::to_value(&f)
        }
        FitModel::Rabi => {
            let r = s.cfg.cavity.rates()?;
            let f = fit_rabi(&trace()?, s.cfg.gamma_eff(), &r)?;
            println!("g_N = 2π × {:.4} ± {:.4} MHz", to_mhz(f.g_n.value), to_mhz(f.g_n.std_error));
            serde_json::to_value(&f)
        }
        FitModel::Larmor => {
            let t = trace()?;
            let pts: Vec<(f64, f64)> = t.x.iter().copied().zip(t.y.iter().copied()).collect();
            let f = fit_larmor(&pts, t.sigma.as_deref())?;
            for e in [&f.exponential, &f.gaussian] {
                println!(
                    "{:?}: omega_L = 2π × {:.3} ± {:.3} kHz, timescale {:.3} ms [{:.3}, {:.3}]",
                    e.kind,
                    to_khz(e.omega_l.value),
                    to_khz(e.omega_l.std_error),
                    e.timescale * 1e3,
                    e.timescale_bounds.0 * 1e3,
                    e.timescale_bounds.1 * 1e3
                );
            }
            serde_json::to_value(&f)
        }
        FitModel::Absorption => {
            let (p, sig) = points_and_sigma(&a.input, "detuning_mhz", "kappa_prime_mhz", mhz, mhz)?;
            let f = fit_absorption(&p, sig.as_deref(), None)?;
            println!(
                "g_N = 2π × {:.3} ± {:.3} MHz, gamma' = 2π × {:.3} ± {:.3} MHz, kappa = 2π × {:.3} ± {:.3} MHz",
                to_mhz(f.g_n.value),
                to_mhz(f.g_n.std_error),
                to_mhz(f.gamma_eff.value),
                to_mhz(f.gamma_eff.std_error),
                to_mhz(f.kappa.value),
                to_mhz(f.kappa.std_error)
            );
            serde_json::to_value(&f)
        }
        FitModel::Dispersion => {
            let (p, sig) = points_and_sigma(&a.input, "detuning_mhz", "shift_mhz", mhz, mhz)?;
            let f = fit_dispersion(&p, sig.as_deref())?;
            println!(
                "g_N = 2π × {:.3} ± {:.3} MHz, gamma' = 2π × {:.3} ± {:.3} MHz",
                to_mhz(f.g_n.value),
                to_mhz(f.g_n.std_error),
                to_mhz(f.gamma_eff.value),
                to_mhz(f.gamma_eff.std_error)
            );
            serde_json::to_value(&f)
        }
        FitModel::SqrtN => {
            let (p, sig) = points_and_sigma(&a.input, "n", "g_n_mhz", 1.0, mhz)?;
            let f = fit_sqrt_n(&p, sig.as_deref())?;
            println!("g = 2π × {:.4} ± {:.4} MHz", to_mhz(f.g.value), to_mhz(f.g.std_error));
            serde_json::to_value(&f)
        }
        FitModel::Calibration => {
            let khz = crate::units::khz(1.0);
            let (p, sig) = points_and_sigma(&a.input, "current_ma", "omega_l_khz", 1e-3, khz)?;
            let f = fit_calibration(&p, sig.as_deref(), s.cfg.larmor.g_factor)?;
            println!(
                "omega_z = 2π × {:.2} ± {:.2} kHz, slope 2π × {:.3} ± {:.3} kHz/mA, B_z = {:.4} ± {:.4} G",
                to_khz(f.omega_z.value),
                to_khz(f.omega_z.std_error),
                to_khz(f.slope.value) * 1e-3,
                to_khz(f.slope.std_error) * 1e-3,
                f.b_z.value * 1e4,
                f.b_z.std_error * 1e4
            );
            serde_json::to_value(&f)
        }
    }
    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(json!({ "model": format!("{:?}", a.model), "input": source, "fit": v }))
}

fn cmd_pipeline(s: &mut Session, a: &PipelineArgs) -> CliResult<Value> {
    let names: Vec<PipelineName> = if a.name == "all" {
        PipelineName::ALL.to_vec()
    } else {
        vec![a.name.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?]
    };
    let mut p = s.cfg.pipeline_params();
    p.noiseless = a.noiseless;
    let mut results = serde_json::Map::new();
    for name in names {
        let out = pipeline(name, &p)?;
        println!("{name} (seed {})", out.seed);
        for c in &out.comparisons {
            let target = c.target.map(|(v, e)| format!("  published {v} ± {e}")).unwrap_or_default();
            println!(
                "  {:<14} injected {:>12.6} recovered {:>12.6} ± {:<10.3e} {:<8} pull {:.2}{target}",
                c.quantity,
                c.injected,
                c.recovered,
                c.std_error,
                c.unit,
                c.pull()
            );
        }
        for w in &out.warnings {
            println!("  warning: {w}");
        }
        for t in &out.tables {
            let path = s.csv_path(&format!("{name}_{}", t.name))?;
            t.write_csv(BufWriter::new(File::create(path).map_err(Error::from)?))?;
        }
        results.insert(
            name.to_string(),
            json!({ "comparisons": out.comparisons, "fits": out.fits, "warnings": out.warnings }),
        );
    }
    Ok(Value::Object(results))
}
