//! Command-line front end. Every run prints one JSON document: the
//! resolved config, its hash, the result and a hash of the result.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bogoliubov::{
    alpha_bound_check, bogoliubov_closed_form, c_o1_identity_check, dispersion, e_lambda, second_order_sum,
    BogoliubovCoefficients,
};
use crate::config::{LogMode, RunConfig};
use crate::energy::{
    c_tilde_full, energy_expansion, lhy_consistency, lhy_energy, lhy_terms, log_coefficient_fit, raw_integral,
    raw_lattice_sum, third_order_constant, EnergyCutoffs, FitModel, IntegralOptions,
};
use crate::error::{Error, Result};
use crate::lattice::{max_norm2_for_momentum, shell_momentum, ShellTable};
use crate::scattering::{eta_profile, scattering_length, solve_neumann};

pub const THREADS_ENV: &str = "DILUTE_BOSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dilute-bose", version, about = "Ground-state energy numerics for a dilute Bose gas on the unit torus")]
pub struct Cli {
    /// Config file (key = value text, or JSON if the name ends in .json)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Particle number
    #[arg(long = "N", global = true)]
    pub n: Option<u64>,
    #[arg(long, global = true)]
    pub ell: Option<f64>,
    /// Shell radius |n| <= K of the coefficient sums (default: momentum 3N)
    #[arg(long, global = true)]
    pub cutoff: Option<u32>,
    /// Worker threads (default from DILUTE_BOSE_THREADS)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// square_barrier, smooth_bump, tabulated or zero
    #[arg(long, global = true)]
    pub potential: Option<String>,
    #[arg(long, global = true)]
    pub v0: Option<f64>,
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Two-column (r, V) table for a tabulated potential
    #[arg(long, global = true)]
    pub table: Option<PathBuf>,
    /// Write the JSON document here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the command's table as CSV
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Lattice,
    Integral,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scattering length and the Neumann problem on the ball of radius N*ell
    Scattering {
        /// Write (r, f, w) and (q, eta) profiles to the CSV path
        #[arg(long)]
        dump_profiles: bool,
    },
    /// Dispersion table (q, eps(q)) over the lattice shells
    Spectrum,
    /// The cube-sum constant e_Lambda with convergence diagnostics
    Elambda {
        #[arg(long = "max-m")]
        max_m: Option<u32>,
    },
    /// Order-one constants and their matching identity
    Constants {
        /// Also evaluate the cubic-phase bounds with this shell radius
        #[arg(long)]
        alpha: Option<u32>,
    },
    /// Third-order (log N)/N term from the lattice sum and/or the integral
    Logterm {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Fit the log N coefficient over the ladder
        #[arg(long)]
        fit: bool,
    },
    /// The four-term energy expansion
    Energy,
    /// Lee-Huang-Yang energy and the log-coefficient comparison
    Lhy {
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scattering { .. } => "scattering",
            Command::Spectrum => "spectrum",
            Command::Elambda { .. } => "elambda",
            Command::Constants { .. } => "constants",
            Command::Logterm { .. } => "logterm",
            Command::Energy => "energy",
            Command::Lhy { .. } => "lhy",
        }
    }
}

/// Merges defaults, the config file, the environment and the flags.
pub fn resolve_config(cli: &Cli, env_threads: Option<&str>) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if c.threads.is_none() && cli.threads.is_none() {
        if let Some(s) = env_threads {
            let t = s
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(THREADS_ENV, format!("not a thread count: {s:?}")))?;
            c.threads = Some(t);
        }
    }
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(cli.n, c.n);
    set!(cli.ell, c.ell);
    set!(cli.potential, c.potential.kind);
    set!(cli.v0, c.potential.v0);
    set!(cli.radius, c.potential.radius);
    if cli.table.is_some() {
        c.potential.table = cli.table.clone();
    }
    if cli.cutoff.is_some() {
        c.cutoff = cli.cutoff;
    }
    if cli.threads.is_some() {
        c.threads = cli.threads;
    }
    if cli.out.is_some() {
        c.output.out = cli.out.clone();
    }
    if cli.csv.is_some() {
        c.output.csv = cli.csv.clone();
    }
    match &cli.command {
        Command::Elambda { max_m } => set!(max_m, c.max_m),
        Command::Logterm { mode, fit } => {
            if let Some(m) = mode {
                c.fit.mode = match m {
                    ModeArg::Lattice => LogMode::Lattice,
                    ModeArg::Integral => LogMode::Integral,
                    ModeArg::Both => LogMode::Both,
                };
            }
            c.fit.enabled |= *fit;
        }
        Command::Lhy { rho, a } => {
            set!(rho, c.lhy.rho);
            set!(a, c.lhy.a);
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("result serializes")
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

// shortest round-trip form with '.' as decimal point; NaN marks an empty cell
fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

fn int(x: u64) -> String {
    x.to_string()
}

fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let io = |e: &dyn std::fmt::Display| Error::Io { path: path.display().to_string(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    w.write_record(&table.header).map_err(|e| io(&e))?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

/// Default shell radius for the coefficient sums: momentum 3N.
pub fn default_max_norm2(c: &RunConfig) -> u64 {
    match c.cutoff {
        Some(k) => k as u64 * k as u64,
        None => max_norm2_for_momentum(3.0 * c.n as f64),
    }
}

fn run_command(cmd: &Command, c: &RunConfig) -> Result<(Value, Option<Table>)> {
    let v = c.potential.build()?;
    match cmd {
        Command::Scattering { dump_profiles } => {
            let sol = solve_neumann(&v, c.n, c.ell)?;
            let a_shoot = scattering_length(&v)?;
            let mut out = to_value(&sol.summary());
            out["a_free_space"] = json!(a_shoot);
            let table = if *dump_profiles {
                if c.output.csv.is_none() {
                    return Err(Error::invalid("csv", "--dump-profiles needs a CSV path"));
                }
                let mut rows: Vec<Vec<String>> = sol
                    .u_grid
                    .iter()
                    .map(|&(r, _)| [r, sol.f_at(r), sol.w_at(r), f64::NAN, f64::NAN].map(num).to_vec())
                    .collect();
                let prof = eta_profile(&sol, shell_momentum(default_max_norm2(c)).max(2.0 * std::f64::consts::PI))?;
                rows.extend(prof.grid.iter().zip(&prof.values).map(|(q, e)| [f64::NAN, f64::NAN, f64::NAN, *q, *e].map(num).to_vec()));
                Some(Table { header: vec!["r", "f", "w", "q", "eta"], rows })
            } else {
                None
            };
            Ok((out, table))
        }
        Command::Spectrum => {
            let a = scattering_length(&v)?;
            let shells = ShellTable::from_max_norm2(default_max_norm2(c));
            let table: Vec<[f64; 2]> = shells
                .shells
                .iter()
                .map(|&(n2, _)| {
                    let q = shell_momentum(n2);
                    [q, dispersion(q, a)]
                })
                .collect();
            let rows = table
                .iter()
                .zip(&shells.shells)
                .map(|(r, &(_, count))| vec![num(r[0]), num(r[1]), int(count)])
                .collect();
            let out = json!({ "a": a, "shells": table.len(), "table": table });
            Ok((out, Some(Table { header: vec!["q", "eps", "multiplicity"], rows })))
        }
        Command::Elambda { .. } => {
            let e = e_lambda(c.max_m)?;
            let rows = e.partial_sums.iter().map(|&(m, s)| vec![int(m as u64), num(s)]).collect();
            Ok((to_value(&e), Some(Table { header: vec!["M", "S"], rows })))
        }
        Command::Constants { alpha } => {
            let sol = solve_neumann(&v, c.n, c.ell)?;
            let coeffs = BogoliubovCoefficients::build(&v, &sol, default_max_norm2(c))?;
            let id = c_o1_identity_check(&coeffs);
            let a = scattering_length(&v)?;
            let el = e_lambda(c.max_m)?;
            let so = second_order_sum(a, c.second_order_k)?;
            let closed = bogoliubov_closed_form(a, c.n, el.value, so.total());
            let mut out = json!({
                "a": a,
                "max_norm2": coeffs.max_norm2,
                "momentum_cutoff": coeffs.cutoff(),
                "c_gn": id.c_gn,
                "c_o1": id.lhs,
                "c_eta_plus_quadratic": id.rhs,
                "identity_diff": id.diff,
                "c_eta": id.c_eta,
                "quadratic_correction": id.quadratic_correction,
                "closed_form": closed,
                "rhs_minus_closed_form": id.rhs - closed,
                "c_tilde_full": c_tilde_full(&coeffs),
                "invariants": coeffs.invariants(),
            });
            if let Some(k) = alpha {
                out["alpha"] = to_value(&alpha_bound_check(&coeffs, *k)?);
            }
            let rows = coeffs
                .shells()
                .shells
                .iter()
                .map(|&(n2, _)| {
                    let i = n2 as usize;
                    let vals = [
                        shell_momentum(n2),
                        coeffs.eta[i],
                        coeffs.g[i],
                        coeffs.vhat[i],
                        coeffs.tau[i],
                        coeffs.mu[i],
                        coeffs.sigma[i],
                        coeffs.gamma[i],
                        coeffs.f[i],
                        coeffs.g_coef[i],
                    ];
                    std::iter::once(int(n2)).chain(vals.map(num)).collect()
                })
                .collect();
            let header = vec!["n2", "q", "eta", "g", "vhat", "tau", "mu", "sigma", "gamma", "F", "G"];
            Ok((out, Some(Table { header, rows })))
        }
        Command::Logterm { .. } => {
            let mut out = json!({ "reference_c": third_order_constant(), "mode": c.fit.mode });
            let mut rows = Vec::new();
            let mut section = |name: &str, points: Vec<(f64, f64, f64)>| -> Result<()> {
                let mut s = json!({
                    "points": points.iter().map(|p| json!({"N": p.0, "raw": p.1, "n_times_c_tilde": p.2})).collect::<Vec<_>>(),
                });
                if c.fit.enabled {
                    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.2)).collect();
                    for (key, model) in [("fit_log", FitModel::Log), ("fit_log_inverse", FitModel::LogInverse)] {
                        let f = log_coefficient_fit(&xy, model)?;
                        let dev = (f.c - third_order_constant()) / third_order_constant();
                        s[key] = json!({ "fit": f, "relative_deviation": dev });
                    }
                }
                rows.extend(points.iter().map(|p| vec![name.to_string(), num(p.0), num(p.1), num(p.2)]));
                out[name] = s;
                Ok(())
            };
            // N times the prefactor (1024π⁴/N)(2π)⁻⁶ at 𝔞 = 1
            let pref = 16.0 / std::f64::consts::PI.powi(2);
            if matches!(c.fit.mode, LogMode::Integral | LogMode::Both) {
                let opts = IntegralOptions::default();
                let pts = c
                    .fit
                    .integral_ladder
                    .iter()
                    .map(|&n| raw_integral(n, &opts).map(|r| (n, r.value, pref * r.value)))
                    .collect::<Result<Vec<_>>>()?;
                section("integral", pts)?;
            }
            if matches!(c.fit.mode, LogMode::Lattice | LogMode::Both) {
                let pts = c
                    .fit
                    .lattice_ladder
                    .iter()
                    .map(|&n| raw_lattice_sum(n).map(|r| (n, r.value, pref * r.value)))
                    .collect::<Result<Vec<_>>>()?;
                section("lattice", pts)?;
            }
            Ok((out, Some(Table { header: vec!["mode", "N", "raw", "n_times_c_tilde"], rows })))
        }
        Command::Energy => {
            let cut = EnergyCutoffs { m_max: c.max_m, second_order_k: c.second_order_k };
            Ok((to_value(&energy_expansion(&v, c.n, c.ell, &cut)?), None))
        }
        Command::Lhy { .. } => {
            let (rho, a) = (c.lhy.rho, c.lhy.a);
            let out = json!({
                "rho": rho,
                "a": a,
                "rho_a3": rho * a.powi(3),
                "relative_terms": lhy_terms(rho, a)?,
                "energy_per_particle": lhy_energy(rho, a)?,
                "log_coefficient_relative_difference": lhy_consistency(),
            });
            Ok((out, None))
        }
    }
}

fn error_value(e: &Error) -> Value {
    let mut err = json!({ "code": e.code(), "module": e.module(), "message": e.to_string() });
    if let Error::InvalidInput { field, reason } = e {
        err["field"] = json!(field);
        err["reason"] = json!(reason);
    }
    json!({ "error": err })
}

/// Runs the CLI on `args` (including the program name), writing the JSON
/// document to `stdout` unless `--out` is given. Returns the exit code.
pub fn run<I, T>(args: I, env_threads: Option<&str>, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let v = json!({ "error": { "code": "usage", "module": "cli", "message": e.to_string() } });
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"));
            return 2;
        }
    };
    match execute(&cli, env_threads) {
        Ok(doc) => {
            let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
            let out = doc["config"]["output"]["out"].as_str().map(PathBuf::from);
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, &text) {
                        let err = Error::Io { path: p.display().to_string(), reason: e.to_string() };
                        let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&error_value(&err)).expect("json"));
                        return 1;
                    }
                }
                None => {
                    let _ = stdout.write_all(text.as_bytes());
                }
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&error_value(&e)).expect("json"));
            if matches!(e, Error::InvalidInput { .. }) {
                3
            } else {
                1
            }
        }
    }
}

/// Resolves the config and runs the command on a pool of the configured
/// size. Returns the full output document.
pub fn execute(cli: &Cli, env_threads: Option<&str>) -> Result<Value> {
    let c = resolve_config(cli, env_threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = c.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::invalid("threads", e.to_string()))?;
    let (result, table) = pool.install(|| run_command(&cli.command, &c))?;
    if let (Some(path), Some(t)) = (&c.output.csv, &table) {
        write_csv(path, t)?;
    }
    let config = to_value(&c);
    let config_text = serde_json::to_string(&config).expect("json");
    let result_text = serde_json::to_string(&result).expect("json");
    Ok(json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_hash": sha256_hex(config_text.as_bytes()),
        "result": result,
        "result_hash": sha256_hex(result_text.as_bytes()),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, Value) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("dilute-bose").chain(args.iter().copied()), None, &mut buf);
        (code, serde_json::from_slice(&buf).unwrap_or(Value::Null))
    }

    #[test]
    fn zero_potential_scattering() {
        let (code, v) = call(&["scattering", "--potential", "zero"]);
        assert_eq!(code, 0);
        assert_eq!(v["result"]["a"], json!(0.0));
        assert_eq!(v["result"]["lambda"], json!(0.0));
        assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, v) = call(&["frobnicate"]);
        assert_eq!(code, 2);
        assert_eq!(v["error"]["code"], "usage");
    }

    #[test]
    fn invalid_input_names_field() {
        let (code, v) = call(&["scattering", "--ell", "0.9"]);
        assert_eq!(code, 3);
        assert_eq!(v["error"]["field"], "ell");
        let (code, v) = call(&["energy", "--threads", "0"]);
        assert_eq!(code, 3);
        assert_eq!(v["error"]["field"], "threads");
    }

    #[test]
    fn env_threads_and_flag_precedence() {
        let cli = Cli::try_parse_from(["x", "energy"]).unwrap();
        assert_eq!(resolve_config(&cli, Some("3")).unwrap().threads, Some(3));
        let cli = Cli::try_parse_from(["x", "energy", "--threads", "2"]).unwrap();
        assert_eq!(resolve_config(&cli, Some("3")).unwrap().threads, Some(2));
        assert!(resolve_config(&cli, Some("many")).is_ok());
        let cli = Cli::try_parse_from(["x", "energy"]).unwrap();
        assert!(resolve_config(&cli, Some("many")).is_err());
    }

    #[test]
    fn result_hash_matches_payload() {
        let (_, v) = call(&["lhy", "--rho", "1e-6", "--a", "1"]);
        let text = serde_json::to_string(&v["result"]).unwrap();
        assert_eq!(v["result_hash"].as_str().unwrap(), sha256_hex(text.as_bytes()));
        assert!(v["result"]["log_coefficient_relative_difference"].as_f64().unwrap() <= 1e-12);
    }
}
