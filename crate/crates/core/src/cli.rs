// SPDX-License-Identifier: Apache-2.0
//! Command-line front end. Every subcommand writes one CSV table; settings
//! come from an optional `key = value` file overridden by flags.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fidelity::{condition_and_correct, haar_average_fidelity, outcome_fidelity, Estimator, GateProcess};
use crate::lindblad::{two_qubit_state, GateConfig, GateModel};
use crate::protocol::protocol_exactness;
use crate::pulse::emit_check;
use crate::scaling::{
    find_tau_opt, fit_power_law, scaling_exponents, sweep_tau, FidelitySettings, DEFAULT_KAPPA_TAU_GRID,
};
use crate::tensor::C64;
use crate::tls::{gaussian_band_report, spectral_overlap_integrals, LossReport, PhotonSpectrum, SpectralDensity};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_KAPPA: &str = "50MHz";
const EXACTNESS_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "timebin-cz", version, about = "Time-bin photonic CZ gate simulator")]
pub struct Cli {
    /// key = value settings file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV destination (default: stdout)
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check both ideal protocols against CZ on the standard test inputs
    ProtocolCheck,
    /// Emission round-trip overlap for Gaussian photons
    EmitCheck(EmitArgs),
    /// Run the dissipative gate model once
    Simulate(SimulateArgs),
    /// Infidelity over a κτ grid for one or more T1 values
    Sweep(SweepArgs),
    /// TLS-bath loss probability and coherence factor
    Tls(TlsArgs),
}

#[derive(Args, Debug, Default)]
pub struct EmitArgs {
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long = "kappa-tau")]
    pub kappa_tau: Option<String>,
    /// time step as a fraction of τ
    #[arg(long = "dt-frac")]
    pub dt_frac: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GateArgs {
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub t1: Option<String>,
    #[arg(long = "n-max")]
    pub n_max: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    /// monte-carlo or linearized
    #[arg(long)]
    pub estimator: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long = "kappa-tau")]
    pub kappa_tau: Option<String>,
    /// Haar-averaged fidelity instead of the single |++> probe
    #[arg(long)]
    pub fidelity: bool,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long = "kappa-tau")]
    pub kappa_tau: Option<String>,
    /// refine τ_opt per T1 and fit the scaling exponents
    #[arg(long)]
    pub optimize: bool,
}

#[derive(Args, Debug, Default)]
pub struct TlsArgs {
    /// flat, gaussian or file
    #[arg(long = "spectral-density")]
    pub spectral_density: Option<String>,
    /// two-column (ω, J) table in rad/s
    #[arg(long)]
    pub file: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long = "tau-sep")]
    pub tau_sep: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub gbar: Option<String>,
    #[arg(long = "delta-omega-bar")]
    pub delta_omega_bar: Option<String>,
    /// flat-band J0 in rad/s
    #[arg(long)]
    pub j0: Option<String>,
}

const KNOWN_KEYS: &[&str] = &[
    "kappa",
    "kappa-tau",
    "dt-frac",
    "t1",
    "n-max",
    "dt",
    "samples",
    "estimator",
    "seed",
    "optimize",
    "fidelity",
    "spectral-density",
    "file",
    "tau",
    "tau-sep",
    "lambda",
    "gbar",
    "delta-omega-bar",
    "j0",
];

/// Parses a `key = value` file. Keys may use `-` or `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", n + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(map)
}

/// Splits `"2.5e3ns"` into the longest numeric prefix and the unit suffix.
fn split_number(s: &str) -> (&str, &str) {
    let s = s.trim();
    let cut = s
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()))
        .rev()
        .find(|&i| s[..i].trim().parse::<f64>().is_ok())
        .unwrap_or(0);
    (s[..cut].trim(), s[cut..].trim())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("{what}: cannot parse {s:?}")))
}

/// Time in seconds from `100ns`, `10us`, `1ms`, `2s` or a bare number of seconds.
pub fn parse_time(s: &str) -> Result<f64> {
    let (num, unit) = split_number(s);
    // divide so that e.g. 100us is the double nearest 1e-4
    let per_second = match unit {
        "ns" => 1e9,
        "us" | "µs" => 1e6,
        "ms" => 1e3,
        "s" | "" => 1.0,
        other => return Err(Error::Config(format!("unknown time unit {other:?} in {s:?}"))),
    };
    Ok(parse_f64(num, "time")? / per_second)
}

/// Angular frequency (rad/s) from an ordinary frequency such as `50MHz`.
pub fn parse_frequency(s: &str) -> Result<f64> {
    let (num, unit) = split_number(s);
    let scale = match unit {
        "Hz" | "" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        other => return Err(Error::Config(format!("unknown frequency unit {other:?} in {s:?}"))),
    };
    Ok(2.0 * PI * parse_f64(num, "frequency")? * scale)
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(f).collect()
}

/// T1 in seconds, `inf` or `none` for no qubit decay.
fn parse_t1(s: &str) -> Result<Option<f64>> {
    match s.trim() {
        "inf" | "none" => Ok(None),
        other => parse_time(other).map(Some),
    }
}

/// Effective settings: flag value, else config file value, else default.
struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    fn get(&mut self, key: &str, flag: &Option<String>, default: Option<&str>) -> Option<String> {
        let v = flag.clone().or_else(|| self.file.get(key).cloned()).or(default.map(str::to_string));
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.clone());
        }
        v
    }

    fn require(&mut self, key: &str, flag: &Option<String>, default: &str) -> String {
        self.get(key, flag, Some(default)).expect("default supplied")
    }

    fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = if flag {
            true
        } else {
            match self.file.get(key).map(String::as_str) {
                None | Some("false") => false,
                Some("true") => true,
                Some(other) => return Err(Error::Config(format!("{key}: expected true/false, got {other:?}"))),
            }
        };
        self.used.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        for (k, v) in &self.used {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Full-precision float for CSV cells.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    fn write(&self, out: &mut dyn Write, comment: &str) -> Result<()> {
        writeln!(out, "# {comment}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gate_config(s: &mut Settings, g: &GateArgs, kappa_tau: f64) -> Result<(GateConfig, FidelitySettings)> {
    let kappa = parse_frequency(&s.require("kappa", &g.kappa, DEFAULT_KAPPA))?;
    let mut cfg = GateConfig::from_kappa_tau(kappa, kappa_tau)?;
    if let Some(n) = s.get("n-max", &g.n_max, None) {
        cfg.n_max = n.parse().map_err(|_| Error::Config(format!("n-max: cannot parse {n:?}")))?;
    }
    if let Some(dt) = s.get("dt", &g.dt, None) {
        cfg.dt = parse_time(&dt)?;
    }
    let samples = s.require("samples", &g.samples, "256");
    let samples = samples.parse().map_err(|_| Error::Config(format!("samples: cannot parse {samples:?}")))?;
    let estimator = match s.require("estimator", &g.estimator, "monte-carlo").as_str() {
        "monte-carlo" => Estimator::MonteCarlo,
        "linearized" => Estimator::Linearized,
        other => return Err(Error::Config(format!("unknown estimator {other:?}"))),
    };
    cfg.validate()?;
    Ok((cfg, FidelitySettings { n_samples: samples, seed: 0, estimator }))
}

fn t1_us(t1: Option<f64>) -> String {
    t1.map_or_else(|| "inf".to_string(), |t| num(t * 1e6))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    let mut s = Settings { file, used: BTreeMap::new() };
    let seed_text = s.require("seed", &cli.seed, "7");
    let seed: u64 = seed_text.parse().map_err(|_| Error::Config(format!("seed: cannot parse {seed_text:?}")))?;

    let (name, (table, failed)) = match &cli.command {
        Command::ProtocolCheck => ("protocol-check", protocol_check(stderr)?),
        Command::EmitCheck(a) => ("emit-check", emit(&mut s, a)?),
        Command::Simulate(a) => ("simulate", simulate(&mut s, a, seed)?),
        Command::Sweep(a) => ("sweep", sweep(&mut s, a, seed, stderr)?),
        Command::Tls(a) => ("tls", tls(&mut s, a)?),
    };
    let comment = format!("timebin-cz {VERSION} {name} config={} seed={seed}", s.hash(name));
    match &cli.output {
        Some(path) => write_file(path, &table, &comment)?,
        None => table.write(stdout, &comment)?,
    }
    Ok(if failed { 2 } else { 0 })
}

fn write_file(path: &Path, table: &Table, comment: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    table.write(&mut f, comment)?;
    f.flush()?;
    Ok(())
}

fn protocol_check(stderr: &mut dyn Write) -> Result<(Table, bool)> {
    let start = std::time::Instant::now();
    let rows = protocol_exactness()?;
    let mut t = Table::new(&["protocol", "input", "max_error", "branch_probability", "global_phase", "pass"]);
    let mut failed = false;
    for r in &rows {
        let pass = r.max_error <= EXACTNESS_TOL;
        failed |= !pass;
        t.rows.push(vec![
            r.protocol.to_string(),
            r.input.to_string(),
            num(r.max_error),
            num(r.branch_probability),
            num(r.global_phase),
            pass.to_string(),
        ]);
    }
    let worst = rows.iter().map(|r| r.max_error).fold(0.0, f64::max);
    writeln!(
        stderr,
        "protocol-check: {} rows, max error {worst:.3e}, {} ({:.3} s)",
        rows.len(),
        if failed { "FAIL" } else { "PASS" },
        start.elapsed().as_secs_f64()
    )?;
    Ok((t, failed))
}

fn emit(s: &mut Settings, a: &EmitArgs) -> Result<(Table, bool)> {
    let kappa = parse_frequency(&s.require("kappa", &a.kappa, DEFAULT_KAPPA))?;
    let grid = parse_list(&s.require("kappa-tau", &a.kappa_tau, "5,10,20,40"), |x| parse_f64(x, "kappa-tau"))?;
    let frac = parse_f64(&s.require("dt-frac", &a.dt_frac, "0.002"), "dt-frac")?;
    let mut t = Table::new(&["kappa_tau", "overlap", "residual", "clamped_samples"]);
    for kt in grid {
        let tau = kt / kappa;
        let c = emit_check(kappa, tau, frac * tau)?;
        let clamped = c.envelope.clamped().iter().filter(|&&b| b).count();
        t.rows.push(vec![num(kt), num(c.overlap_sqr), num(c.residual), clamped.to_string()]);
    }
    Ok((t, false))
}

fn simulate(s: &mut Settings, a: &SimulateArgs, seed: u64) -> Result<(Table, bool)> {
    let kt = parse_f64(&s.require("kappa-tau", &a.kappa_tau, "20"), "kappa-tau")?;
    let t1 = parse_t1(&s.require("t1", &a.gate.t1, "inf"))?;
    let (cfg, mut fid) = gate_config(s, &a.gate, kt)?;
    fid.seed = seed;
    let cfg = cfg.with_t1(t1)?;
    let model = GateModel::new(cfg)?;
    if s.flag("fidelity", a.fidelity)? {
        let process = GateProcess::from_model(&model)?;
        let est = haar_average_fidelity(&process, fid.n_samples, fid.seed, fid.estimator)?;
        let d = process.diagnostics;
        let mut t = Table::new(&[
            "kappa_tau",
            "T1_us",
            "epsilon",
            "stderr",
            "P_success",
            "P_f",
            "trace_drift",
            "min_eigenvalue",
        ]);
        t.rows.push(vec![
            num(kt),
            t1_us(t1),
            num(1.0 - est.mean),
            num(est.stderr),
            num(est.mean_p_success),
            num(est.mean_p_f),
            num(d.max_trace_drift),
            num(d.min_eigenvalue),
        ]);
        return Ok((t, false));
    }
    let h = C64::new(0.5, 0.0);
    let amps = [h; 4];
    let run = model.run(&two_qubit_state(amps)?)?;
    let outcome = condition_and_correct(&run.rho)?;
    let f = outcome_fidelity(&outcome, &amps)?;
    let mut t = Table::new(&[
        "kappa_tau",
        "T1_us",
        "p_plus",
        "p_minus",
        "P_f",
        "fidelity_pp",
        "trace_drift",
        "min_eigenvalue",
        "dt_used",
    ]);
    t.rows.push(vec![
        num(kt),
        t1_us(t1),
        num(outcome.p_plus),
        num(outcome.p_minus),
        num(outcome.p_f),
        num(f),
        num(run.trace_drift),
        num(run.min_eigenvalue),
        num(run.dt_used),
    ]);
    Ok((t, false))
}

fn sweep(s: &mut Settings, a: &SweepArgs, seed: u64, report: &mut dyn Write) -> Result<(Table, bool)> {
    let default_grid = DEFAULT_KAPPA_TAU_GRID.map(|x| x.to_string()).join(",");
    let grid = parse_list(&s.require("kappa-tau", &a.kappa_tau, &default_grid), |x| parse_f64(x, "kappa-tau"))?;
    let t1s = parse_list(&s.require("t1", &a.gate.t1, "inf"), parse_t1)?;
    let (base, mut fid) = gate_config(s, &a.gate, grid.first().copied().unwrap_or(20.0))?;
    fid.seed = seed;
    let optimize = s.flag("optimize", a.optimize)?;
    let mut t = Table::new(&["kappa_tau", "T1_us", "epsilon", "stderr", "P_f"]);
    let mut optima = Vec::new();
    for &t1 in &t1s {
        let result = if optimize {
            let opt = find_tau_opt(t1, &grid, &base, &fid)?;
            writeln!(
                report,
                "T1_us = {}\nkappa_tau_opt = {}\neps_min = {}",
                t1_us(t1),
                num(opt.kappa_tau_opt),
                num(opt.eps_min)
            )?;
            let sweep = opt.sweep.clone();
            if let Some(t1) = t1 {
                optima.push((t1, opt));
            }
            sweep
        } else {
            sweep_tau(t1, &grid, &base, &fid)?
        };
        for r in &result.rows {
            t.rows.push(vec![num(r.kappa_tau), t1_us(r.t1), num(r.epsilon), num(r.stderr), num(r.p_f)]);
        }
        if result.rows.len() >= 4 && result.rows.iter().all(|r| r.epsilon > 0.0) {
            let fit = fit_power_law(&result.points())?;
            writeln!(
                report,
                "T1_us = {}\nslope = {}\nslope_stderr = {}\nr_squared = {}",
                t1_us(t1),
                num(fit.slope),
                num(fit.slope_stderr),
                num(fit.r_squared)
            )?;
        }
    }
    if optimize && optima.len() >= 4 {
        let rep = scaling_exponents(base.kappa, &optima)?;
        writeln!(
            report,
            "xi = {}\nxi_stderr = {}\nzeta = {}\nzeta_stderr = {}\nK = {}\nD = {}",
            num(rep.xi.slope),
            num(rep.xi.slope_stderr),
            num(rep.zeta.slope),
            num(rep.zeta.slope_stderr),
            num(rep.k()),
            num(rep.d())
        )?;
    }
    Ok((t, false))
}

fn tls(s: &mut Settings, a: &TlsArgs) -> Result<(Table, bool)> {
    let tau = parse_time(&s.require("tau", &a.tau, "63.66197723675813ns"))?;
    let seps = parse_list(&s.require("tau-sep", &a.tau_sep, "100ns"), parse_time)?;
    let kind = s.require("spectral-density", &a.spectral_density, "gaussian");
    let lambda = parse_frequency(&s.require("lambda", &a.lambda, "1.6MHz"))?;
    let j = match kind.as_str() {
        "flat" => SpectralDensity::Flat { j0: parse_f64(&s.require("j0", &a.j0, "1e4"), "j0")? },
        "gaussian" => {
            let g = parse_frequency(&s.require("gbar", &a.gbar, "100kHz"))?;
            let dw = parse_frequency(&s.require("delta-omega-bar", &a.delta_omega_bar, "0Hz"))?;
            SpectralDensity::Gaussian { g2: g * g, lambda, delta_omega_bar: dw }
        }
        "file" => {
            let path = s
                .get("file", &a.file, None)
                .ok_or_else(|| Error::Config("spectral-density file needs --file".into()))?;
            SpectralDensity::from_file(Path::new(&path))?
        }
        other => return Err(Error::Config(format!("unknown spectral density {other:?}"))),
    };
    let u = PhotonSpectrum::gaussian(tau)?;
    let mut t = Table::new(&["lambda_tau_sep", "q", "abs_C", "phi", "eta", "born_warning"]);
    for sep in seps {
        let r: LossReport = match &j {
            SpectralDensity::Gaussian { lambda: l, .. } if *l == 0.0 => gaussian_band_report(&j, tau, sep)?,
            _ => spectral_overlap_integrals(&j, &u, sep)?,
        };
        t.rows.push(vec![
            num(lambda * sep),
            num(r.q),
            num(r.c.norm()),
            num(r.phi),
            num(r.eta),
            r.born_warning.to_string(),
        ]);
    }
    Ok((t, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        assert!((parse_time("100ns").unwrap() - 1e-7).abs() < 1e-22);
        assert!((parse_time("10us").unwrap() - 1e-5).abs() < 1e-20);
        assert!((parse_time("1.5e-3").unwrap() - 1.5e-3).abs() < 1e-18);
        assert!((parse_time("2e3ns").unwrap() - 2e-6).abs() < 1e-20);
        assert!((parse_frequency("50MHz").unwrap() - 2.0 * PI * 5e7).abs() < 1e-6);
        assert!((parse_frequency("1.6 MHz").unwrap() - 2.0 * PI * 1.6e6).abs() < 1e-6);
        assert!(parse_time("3 fortnights").is_err());
        assert!(parse_frequency("5THz").is_err());
        assert_eq!(parse_t1("inf").unwrap(), None);
    }

    #[test]
    fn config_file() {
        let m = parse_config("# comment\nkappa = 50MHz\nkappa_tau = 8,12 # inline\n\n").unwrap();
        assert_eq!(m["kappa"], "50MHz");
        assert_eq!(m["kappa-tau"], "8,12");
        assert!(matches!(parse_config("colour = blue"), Err(Error::Config(_))));
        assert!(parse_config("kappa 50MHz").is_err());
        assert!(parse_config("seed = 1\nseed = 2").is_err());
    }
}
