//! Command-line front end: `key = value` configuration files, command
//! dispatch and CSV / report output.
//!
//! User-facing frequencies and rates are ordinary frequencies in Hz; they
//! are converted to angular units on the way into the library.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::adiabatic::{cooling_criteria, induced_rates, steady_occupations, AdiabaticRates};
use crate::circuit::constants::PLANCK;
use crate::circuit::{bose_occupation, derive, CircuitDerivation, CircuitParams};
use crate::error::{Error, Result};
use crate::hilbert::SpaceLayout;
use crate::model::{regime_report, Frame, Mode, SystemParams};
use crate::spectrum::{
    analytic_spectrum, hybrid_linewidths, part_name, phase_moment_ratio, spectrum_numeric,
    FrequencyGrid, NumericOptions, SpectrumResult, PART_NUMERIC, PART_QUBIT,
};
use crate::steady::{sweep_occupations, truncation_escalate, SteadyOptions};

const TP: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Derived parameters and regime checks.
    Params,
    /// Steady-state occupations and residuals.
    Steady,
    /// Occupations over a grid of qubit or circuit decay rates.
    Sweep,
    /// Emission spectrum near the circuit sideband.
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Params => "params",
            Command::Steady => "steady",
            Command::Sweep => "sweep",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Analytic,
    Numeric,
    Both,
}

impl Method {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "analytic" => Some(Method::Analytic),
            "numeric" => Some(Method::Numeric),
            "both" => Some(Method::Both),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Numeric => "numeric",
            Method::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    GammaDown,
    GammaC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

/// Values of the swept rate, plus the list of values for the other rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub scale: Scale,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
    pub others_hz: Vec<f64>,
}

impl SweepSpec {
    pub fn values_hz(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                match self.scale {
                    Scale::Linear => self.start_hz + t * (self.stop_hz - self.start_hz),
                    Scale::Log => self.start_hz * (self.stop_hz / self.start_hz).powf(t),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config("sweep_points must be at least 2".into()));
        }
        if !(self.start_hz.is_finite() && self.stop_hz.is_finite()) || self.start_hz == self.stop_hz {
            return Err(Error::Config("sweep range must be finite with start != stop".into()));
        }
        if self.start_hz <= 0.0 || self.stop_hz <= 0.0 {
            return Err(Error::Config("swept rates must be positive".into()));
        }
        if self.others_hz.is_empty() || self.others_hz.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("the fixed-rate list must hold non-negative values".into()));
        }
        Ok(())
    }
}

/// Spectrum window, relative to the drive frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumWindow {
    pub center_hz: f64,
    pub span_hz: f64,
    pub points: usize,
    /// Concentrates points within this width of the center when set.
    pub cluster_hz: Option<f64>,
}

impl SpectrumWindow {
    /// Grid in rad/s.
    pub fn grid(&self) -> Result<FrequencyGrid> {
        match self.cluster_hz {
            None => FrequencyGrid::linear(TP * self.center_hz, TP * self.span_hz, self.points),
            Some(w) => FrequencyGrid::clustered(TP * self.center_hz, TP * self.span_hz, self.points, TP * w),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config("spectrum_points must be at least 2".into()));
        }
        if !(self.span_hz > 0.0 && self.span_hz.is_finite()) {
            return Err(Error::Config("spectrum_span_hz must be positive".into()));
        }
        if !self.center_hz.is_finite() {
            return Err(Error::Config("spectrum_center_hz must be finite".into()));
        }
        if let Some(w) = self.cluster_hz {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config("spectrum_cluster_hz must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub command: Command,
    pub method: Method,
    pub sweep: SweepSpec,
    pub window: SpectrumWindow,
    pub output: Option<PathBuf>,
    pub n_c: usize,
    pub n_m: usize,
    pub frame: Frame,
    pub residual_tol: f64,
    pub tail_tol: f64,
    pub truncation_cap: usize,
    /// Refuse to run outside the resolved-sideband / adiabatic regime.
    pub strict_regime: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.window.validate()?;
        if self.n_c < 2 || self.n_m < 2 {
            return Err(Error::Config("n_c and n_m must be at least 2".into()));
        }
        if self.truncation_cap < self.n_c.max(self.n_m) {
            return Err(Error::Config("truncation_cap is below the starting truncation".into()));
        }
        if !(self.residual_tol > 0.0) || !(self.tail_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        SpaceLayout::new(self.n_c, self.n_m)
    }

    fn steady_options(&self) -> SteadyOptions {
        SteadyOptions {
            residual_tol: self.residual_tol,
            ..SteadyOptions::default()
        }
    }
}

/// Where the model parameters came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    System(SystemParams),
    Circuit(CircuitParams),
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub source: ParamSource,
    /// Effective model parameters (rad/s).
    pub params: SystemParams,
    pub derivation: Option<CircuitDerivation>,
    pub run: RunConfig,
    /// Keys present in the file.
    pub given: BTreeSet<String>,
}

const SYSTEM_ONLY: &[&str] = &[
    "omega_c_hz",
    "qubit_freq_hz",
    "g_mc_hz",
    "g_cq_hz",
    "g_mq_hz",
    "nbar_m",
    "nbar_c",
];

const CIRCUIT_ONLY: &[&str] = &["c_m_f", "l_m_h", "c_c_f", "l_c_h", "c_ct_f", "c_t_f", "e_j_max_hz", "flux_ratio"];

const SHARED: &[&str] = &[
    "omega_m_hz",
    "drive_freq_hz",
    "drive_amplitude_hz",
    "gamma_m_hz",
    "gamma_c_hz",
    "gamma_down_hz",
    "gamma_up_hz",
    "gamma_phi_hz",
    "temperature_k",
];

const RUN_KEYS: &[&str] = &[
    "method",
    "frame",
    "n_c",
    "n_m",
    "residual_tol",
    "tail_tol",
    "truncation_cap",
    "strict_regime",
    "sweep_variable",
    "sweep_scale",
    "sweep_start_hz",
    "sweep_stop_hz",
    "sweep_points",
    "sweep_gamma_c_hz",
    "sweep_gamma_down_hz",
    "spectrum_center_hz",
    "spectrum_span_hz",
    "spectrum_points",
    "spectrum_cluster_hz",
];

fn known(key: &str) -> bool {
    [SYSTEM_ONLY, CIRCUIT_ONLY, SHARED, RUN_KEYS].iter().any(|set| set.contains(&key))
}

struct Entries(BTreeMap<String, (String, usize)>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {line}: expected `key = value`")));
            }
            if !known(k) {
                return Err(Error::Config(format!("line {line}: unknown key `{k}`")));
            }
            if let Some((_, first)) = map.insert(k.to_string(), (v.to_string(), line)) {
                return Err(Error::Config(format!("line {line}: `{k}` already set on line {first}")));
            }
        }
        Ok(Self(map))
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn get<T>(&self, key: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some((v, line)) => parse(v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("line {line}: `{key}` expects {what}, got `{v}`"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key, "a number", |s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key, "a non-negative integer", |s| s.parse().ok())
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key, "true or false", |s| s.parse().ok())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key, "a comma-separated list of numbers", |s| {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect()
        })
    }

    fn conflict(&self, a: &str, b: &str) -> Error {
        let la = self.0.get(a).map_or(0, |e| e.1);
        let lb = self.0.get(b).map_or(0, |e| e.1);
        Error::Config(format!("conflicting keys: `{a}` (line {la}) and `{b}` (line {lb})"))
    }
}

fn hz(x: Option<f64>, default: f64) -> f64 {
    x.map_or(default, |v| TP * v)
}

fn system_params(e: &Entries) -> Result<SystemParams> {
    let mut sp = SystemParams::nominal();
    sp.omega_m = hz(e.f64("omega_m_hz")?, sp.omega_m);
    sp.omega_c = hz(e.f64("omega_c_hz")?, sp.omega_c);
    sp.qubit_freq = hz(e.f64("qubit_freq_hz")?, sp.qubit_freq);
    sp.drive_freq = hz(e.f64("drive_freq_hz")?, sp.drive_freq);
    sp.drive_amplitude = hz(e.f64("drive_amplitude_hz")?, sp.drive_amplitude);
    sp.g_mc = hz(e.f64("g_mc_hz")?, sp.g_mc);
    sp.g_cq = hz(e.f64("g_cq_hz")?, sp.g_cq);
    sp.g_mq = hz(e.f64("g_mq_hz")?, sp.g_mq);
    apply_dissipation(e, &mut sp.gamma_m, &mut sp.gamma_c, &mut sp.gamma_down, &mut sp.gamma_up, &mut sp.gamma_phi)?;
    for nbar in ["nbar_m", "nbar_c"] {
        if e.has(nbar) && e.has("temperature_k") {
            return Err(e.conflict("temperature_k", nbar));
        }
    }
    let temperature = e.f64("temperature_k")?.or(sp.temperature).unwrap_or(0.0);
    sp.nbar_m = match e.f64("nbar_m")? {
        Some(n) => n,
        None => bose_occupation(sp.omega_m, temperature)?,
    };
    sp.nbar_c = match e.f64("nbar_c")? {
        Some(n) => n,
        None => bose_occupation(sp.omega_c, temperature)?,
    };
    sp.temperature = (!e.has("nbar_m") && !e.has("nbar_c")).then_some(temperature);
    sp.refresh_sideband_couplings();
    sp.validate()?;
    Ok(sp)
}

fn apply_dissipation(e: &Entries, gm: &mut f64, gc: &mut f64, gd: &mut f64, gu: &mut f64, gp: &mut f64) -> Result<()> {
    *gm = hz(e.f64("gamma_m_hz")?, *gm);
    *gc = hz(e.f64("gamma_c_hz")?, *gc);
    *gd = hz(e.f64("gamma_down_hz")?, *gd);
    *gu = hz(e.f64("gamma_up_hz")?, *gu);
    *gp = hz(e.f64("gamma_phi_hz")?, *gp);
    Ok(())
}

fn circuit_params(e: &Entries) -> Result<CircuitParams> {
    for &k in SYSTEM_ONLY {
        if e.has(k) {
            let other = CIRCUIT_ONLY.iter().find(|c| e.has(c)).copied().unwrap_or("c_m_f");
            return Err(e.conflict(other, k));
        }
    }
    if e.has("omega_m_hz") && e.has("l_m_h") {
        return Err(e.conflict("omega_m_hz", "l_m_h"));
    }
    let mut cp = CircuitParams::nominal();
    cp.c_m = e.f64("c_m_f")?.unwrap_or(cp.c_m);
    cp.l_m = e.f64("l_m_h")?.or(cp.l_m);
    cp.omega_m = hz(e.f64("omega_m_hz")?, cp.omega_m);
    cp.c_c = e.f64("c_c_f")?.unwrap_or(cp.c_c);
    cp.l_c = e.f64("l_c_h")?.or(cp.l_c);
    cp.c_ct = e.f64("c_ct_f")?.unwrap_or(cp.c_ct);
    cp.c_t = e.f64("c_t_f")?.unwrap_or(cp.c_t);
    cp.e_j_max = e.f64("e_j_max_hz")?.map_or(cp.e_j_max, |v| v * PLANCK);
    cp.flux_ratio = e.f64("flux_ratio")?.unwrap_or(cp.flux_ratio);
    cp.drive_freq = hz(e.f64("drive_freq_hz")?, cp.drive_freq);
    cp.drive_amplitude = hz(e.f64("drive_amplitude_hz")?, cp.drive_amplitude);
    cp.temperature = e.f64("temperature_k")?.unwrap_or(cp.temperature);
    let d = &mut cp.dissipation;
    apply_dissipation(e, &mut d.gamma_m, &mut d.gamma_c, &mut d.gamma_down, &mut d.gamma_up, &mut d.gamma_phi)?;
    Ok(cp)
}

fn run_config(e: &Entries, sp: &SystemParams) -> Result<RunConfig> {
    let method = e.get("method", "analytic, numeric or both", Method::parse)?.unwrap_or(Method::Analytic);
    let frame = e
        .get("frame", "sideband or lab", |s| match s {
            "sideband" => Some(Frame::Sideband),
            "lab" => Some(Frame::Lab),
            _ => None,
        })?
        .unwrap_or(Frame::Sideband);
    let variable = e
        .get("sweep_variable", "gamma_down or gamma_c", |s| match s {
            "gamma_down" => Some(SweepVariable::GammaDown),
            "gamma_c" => Some(SweepVariable::GammaC),
            _ => None,
        })?
        .unwrap_or(SweepVariable::GammaDown);
    let scale = e
        .get("sweep_scale", "log or linear", |s| match s {
            "log" => Some(Scale::Log),
            "linear" => Some(Scale::Linear),
            _ => None,
        })?
        .unwrap_or(Scale::Log);
    let (start, stop, others) = match variable {
        SweepVariable::GammaDown => {
            if e.has("sweep_gamma_down_hz") {
                return Err(e.conflict("sweep_variable", "sweep_gamma_down_hz"));
            }
            (1e6, 30e6, e.list("sweep_gamma_c_hz")?.unwrap_or_else(|| vec![50e3, 100e3, 200e3]))
        }
        SweepVariable::GammaC => {
            if e.has("sweep_gamma_c_hz") {
                return Err(e.conflict("sweep_variable", "sweep_gamma_c_hz"));
            }
            let own = sp.gamma_down / TP;
            (20e3, 500e3, e.list("sweep_gamma_down_hz")?.unwrap_or_else(|| vec![own]))
        }
    };
    let sweep = SweepSpec {
        variable,
        scale,
        start_hz: e.f64("sweep_start_hz")?.unwrap_or(start),
        stop_hz: e.f64("sweep_stop_hz")?.unwrap_or(stop),
        points: e.usize("sweep_points")?.unwrap_or(16),
        others_hz: others,
    };
    let window = SpectrumWindow {
        center_hz: e.f64("spectrum_center_hz")?.unwrap_or(sp.omega_c / TP),
        span_hz: e.f64("spectrum_span_hz")?.unwrap_or(4e6),
        points: e.usize("spectrum_points")?.unwrap_or(2001),
        cluster_hz: e.f64("spectrum_cluster_hz")?,
    };
    let defaults = SteadyOptions::default();
    let run = RunConfig {
        input: None,
        command: Command::Params,
        method,
        sweep,
        window,
        output: None,
        n_c: e.usize("n_c")?.unwrap_or(8),
        n_m: e.usize("n_m")?.unwrap_or(8),
        frame,
        residual_tol: e.f64("residual_tol")?.unwrap_or(defaults.residual_tol),
        tail_tol: e.f64("tail_tol")?.unwrap_or(1e-4),
        truncation_cap: e.usize("truncation_cap")?.unwrap_or(24),
        strict_regime: e.bool("strict_regime")?.unwrap_or(false),
    };
    run.validate()?;
    Ok(run)
}

/// Parses configuration text. Missing keys take the nominal values.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let e = Entries::parse(text)?;
    let circuit = CIRCUIT_ONLY.iter().any(|k| e.has(k));
    let (source, params, derivation) = if circuit {
        let cp = circuit_params(&e)?;
        let d = derive(&cp)?;
        (ParamSource::Circuit(cp), d.params.clone(), Some(d))
    } else {
        let sp = system_params(&e)?;
        (ParamSource::System(sp.clone()), sp, None)
    };
    let run = run_config(&e, &params)?;
    Ok(LoadedConfig {
        source,
        params,
        derivation,
        run,
        given: e.0.keys().cloned().collect(),
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| Error::Config(format!("cannot read {}: {err}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.run.input = Some(path.to_path_buf());
    Ok(cfg)
}

/// Text produced by a command, plus the first error hit after output could
/// still be produced (a failed sweep point, for instance).
#[derive(Debug)]
pub struct RunOutput {
    pub text: String,
    pub failure: Option<Error>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_regime(cfg: &LoadedConfig) -> Result<()> {
    let report = regime_report(&cfg.params);
    if cfg.run.strict_regime && !report.satisfied() {
        return Err(Error::Regime(format!(
            "resolved-sideband ratio {:.3}, adiabatic ratio {:.3}; both must reach 10",
            report.resolved_sideband, report.adiabatic
        )));
    }
    Ok(())
}

fn param_lines(cfg: &LoadedConfig) -> Vec<(String, String)> {
    let sp = &cfg.params;
    let mut out = Vec::new();
    let mut push = |k: &str, v: f64, keyed: bool| {
        let tag = if !keyed {
            " (derived)"
        } else if cfg.given.contains(k) {
            ""
        } else {
            " (default)"
        };
        out.push((k.to_string(), format!("{}{tag}", num(v))));
    };
    let circuit = matches!(cfg.source, ParamSource::Circuit(_));
    if let ParamSource::Circuit(cp) = &cfg.source {
        push("c_m_f", cp.c_m, true);
        push("c_c_f", cp.c_c, true);
        push("c_ct_f", cp.c_ct, true);
        push("c_t_f", cp.c_t, true);
        push("e_j_max_hz", cp.e_j_max / PLANCK, true);
        push("flux_ratio", cp.flux_ratio, true);
        if let Some(d) = &cfg.derivation {
            push("l_m_h", d.l_m, cfg.given.contains("l_m_h"));
            push("l_c_h", d.l_c, cfg.given.contains("l_c_h"));
            push("e_c_hz", d.e_c / PLANCK, false);
            push("e_j_hz", d.e_j / PLANCK, false);
        }
    }
    push("omega_m_hz", sp.omega_m / TP, !circuit || !cfg.given.contains("l_m_h"));
    push("omega_c_hz", sp.omega_c / TP, !circuit);
    push("qubit_freq_hz", sp.qubit_freq / TP, !circuit);
    push("drive_freq_hz", sp.drive_freq / TP, true);
    push("drive_amplitude_hz", sp.drive_amplitude / TP, true);
    push("g_mc_hz", sp.g_mc / TP, !circuit);
    push("g_cq_hz", sp.g_cq / TP, !circuit);
    push("g_mq_hz", sp.g_mq / TP, !circuit);
    push("gbar_cq_hz", sp.gbar_cq / TP, false);
    push("gbar_mq_hz", sp.gbar_mq / TP, false);
    push("gamma_m_hz", sp.gamma_m / TP, true);
    push("gamma_c_hz", sp.gamma_c / TP, true);
    push("gamma_down_hz", sp.gamma_down / TP, true);
    push("gamma_up_hz", sp.gamma_up / TP, true);
    push("gamma_phi_hz", sp.gamma_phi / TP, true);
    if let Some(t) = sp.temperature {
        push("temperature_k", t, true);
    }
    push("nbar_m", sp.nbar_m, !circuit && sp.temperature.is_none());
    push("nbar_c", sp.nbar_c, !circuit && sp.temperature.is_none());
    out
}

fn derived_lines(sp: &SystemParams, rates: &AdiabaticRates) -> Vec<(String, String)> {
    let hl = hybrid_linewidths(sp, rates);
    let mut out = vec![
        ("delta_d_hz".to_string(), num(sp.delta_d() / TP)),
        ("gamma_t_hz".to_string(), num(sp.gamma_t() / TP)),
    ];
    for mode in [Mode::Circuit, Mode::Mech] {
        let p = mode.label();
        let r = rates.mode(mode);
        out.push((format!("gamma_minus_{p}e_hz"), num(r.gamma_minus / TP)));
        out.push((format!("gamma_plus_{p}e_hz"), num(r.gamma_plus / TP)));
        out.push((format!("delta_{p}_hz"), num(r.shift / TP)));
        out.push((format!("gamma_tilde_{p}_hz"), num(hl.bare(mode) / TP)));
        out.push((format!("gamma_tilde_{p}_eff_hz"), num(hl.eff(mode) / TP)));
        out.push((format!("nbar_{p}"), num(sp.nbar(mode))));
    }
    out.push(("coupling_regime".into(), format!("{:?}", hl.regime).to_lowercase()));
    out
}

fn run_lines(run: &RunConfig) -> Vec<(String, String)> {
    let frame = match run.frame {
        Frame::Sideband => "sideband",
        Frame::Lab => "lab",
    };
    vec![
        ("command".into(), run.command.name().into()),
        ("method".into(), run.method.name().into()),
        ("frame".into(), frame.into()),
        ("n_c".into(), run.n_c.to_string()),
        ("n_m".into(), run.n_m.to_string()),
        ("residual_tol".into(), num(run.residual_tol)),
    ]
}

/// `# key = value` block describing every parameter behind an artifact.
pub fn header(cfg: &LoadedConfig) -> Result<String> {
    let rates = induced_rates(&cfg.params)?;
    let mut s = String::new();
    let mut block = |title: &str, lines: Vec<(String, String)>| {
        let _ = writeln!(s, "# [{title}]");
        for (k, v) in lines {
            let _ = writeln!(s, "# {k} = {v}");
        }
    };
    block("run", run_lines(&cfg.run));
    block("parameters", param_lines(cfg));
    block("derived", derived_lines(&cfg.params, &rates));
    Ok(s)
}

fn params_report(cfg: &LoadedConfig) -> Result<String> {
    let sp = &cfg.params;
    let rates = induced_rates(sp)?;
    let occ = steady_occupations(sp, &rates);
    let crit = cooling_criteria(sp, &rates);
    let rep = regime_report(sp);
    let mut s = header(cfg)?;
    let _ = writeln!(s, "[regime]");
    let _ = writeln!(s, "resolved_sideband_ratio = {}", num(rep.resolved_sideband));
    let _ = writeln!(s, "resolved_sideband_ok = {}", rep.resolved_ok());
    let _ = writeln!(s, "adiabatic_ratio = {}", num(rep.adiabatic));
    let _ = writeln!(s, "adiabatic_ok = {}", rep.adiabatic_ok());
    let _ = writeln!(s, "[cooling]");
    let _ = writeln!(s, "circuit_margin = {}", num(crit.circuit_margin));
    let _ = writeln!(s, "circuit_cooled = {}", crit.circuit_cooled());
    let _ = writeln!(s, "transfer_margin = {}", num(crit.transfer_margin));
    let _ = writeln!(s, "transfer_dominates = {}", crit.transfer_dominates());
    let _ = writeln!(s, "n_c_adiabatic = {}", num(occ.n_c));
    let _ = writeln!(s, "n_m_adiabatic = {}", num(occ.n_m));
    Ok(s)
}

fn steady_report(cfg: &LoadedConfig) -> Result<String> {
    check_regime(cfg)?;
    let sp = &cfg.params;
    let run = &cfg.run;
    let ss = truncation_escalate(sp, &run.layout()?, run.frame, run.tail_tol, run.truncation_cap, &run.steady_options())?;
    let occ = ss.occupations()?;
    let layout = ss.layout.ok_or_else(|| Error::Solver("steady state lost its layout".into()))?;
    let ad = steady_occupations(sp, &induced_rates(sp)?);
    let mut s = header(cfg)?;
    let _ = writeln!(s, "[steady]");
    let _ = writeln!(s, "solver = {}", ss.method);
    let _ = writeln!(s, "truncation_n_c = {}", layout.n_c());
    let _ = writeln!(s, "truncation_n_m = {}", layout.n_m());
    let _ = writeln!(s, "residual = {}", num(ss.residual));
    let _ = writeln!(s, "trace_defect = {}", num((ss.trace() - 1.0).norm()));
    let _ = writeln!(s, "hermiticity_defect = {}", num(ss.hermiticity_defect()));
    let _ = writeln!(s, "tail_population_c = {}", num(ss.tail_population(Mode::Circuit)?));
    let _ = writeln!(s, "tail_population_m = {}", num(ss.tail_population(Mode::Mech)?));
    let _ = writeln!(s, "n_c_numeric = {}", num(occ.n_c));
    let _ = writeln!(s, "n_m_numeric = {}", num(occ.n_m));
    let _ = writeln!(s, "n_c_adiabatic = {}", num(ad.n_c));
    let _ = writeln!(s, "n_m_adiabatic = {}", num(ad.n_m));
    let _ = writeln!(s, "p_e = {}", num(ss.expectations["p_e"].re));
    let _ = writeln!(s, "phase_moment_ratio = {}", num(phase_moment_ratio(&ss)?));
    Ok(s)
}

fn sweep_csv(cfg: &LoadedConfig) -> Result<RunOutput> {
    check_regime(cfg)?;
    let run = &cfg.run;
    let swept: Vec<f64> = run.sweep.values_hz().iter().map(|v| TP * v).collect();
    let others: Vec<f64> = run.sweep.others_hz.iter().map(|v| TP * v).collect();
    let (gds, gcs) = match run.sweep.variable {
        SweepVariable::GammaDown => (swept, others),
        SweepVariable::GammaC => (others, swept),
    };
    let rows = sweep_occupations(&cfg.params, &run.layout()?, run.frame, &gds, &gcs, &run.steady_options())?;
    let mut s = header(cfg)?;
    s.push_str("gamma_down_hz,gamma_c_hz,n_m_numeric,n_m_adiabatic,n_c_numeric,n_c_adiabatic,residual\n");
    let mut failure = None;
    for row in rows {
        let (nm, nc) = row.numeric.map_or((f64::NAN, f64::NAN), |o| (o.n_m, o.n_c));
        let fields = [row.gamma_down / TP, row.gamma_c / TP, nm, row.adiabatic.n_m, nc, row.adiabatic.n_c, row.residual];
        let line: Vec<String> = fields.iter().map(|&x| num(x)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
        if let Some(msg) = row.error {
            let _ = writeln!(s, "# failed: {msg}");
            failure.get_or_insert(Error::Solver(format!("sweep point failed: {msg}")));
        }
    }
    Ok(RunOutput { text: s, failure })
}

fn spectrum_csv(cfg: &LoadedConfig) -> Result<String> {
    let run = &cfg.run;
    let sp = &cfg.params;
    let grid = run.window.grid()?;
    let analytic = match run.method {
        Method::Numeric => None,
        _ => {
            check_regime(cfg)?;
            Some(analytic_spectrum(&grid, sp)?)
        }
    };
    let numeric = match run.method {
        Method::Analytic => None,
        _ => {
            let opts = NumericOptions {
                steady: run.steady_options(),
                ..NumericOptions::default()
            };
            Some(spectrum_numeric(sp, &run.layout()?, run.frame, &grid, &opts)?)
        }
    };
    let mut columns: Vec<(String, Vec<f64>)> = vec![("omega_hz_rel_drive".into(), grid.points().iter().map(|w| w / TP).collect())];
    if let Some(a) = &analytic {
        columns.push(("total".into(), a.total.clone()));
        let mut names = vec![PART_QUBIT.to_string()];
        for upper in [true, false] {
            for mode in [Mode::Circuit, Mode::Mech] {
                names.push(part_name(mode, upper));
            }
        }
        for name in names {
            let v = a.part(&name).map_or_else(|| vec![0.0; grid.len()], <[f64]>::to_vec);
            columns.push((name, v));
        }
    }
    if let Some(n) = &numeric {
        columns.push((PART_NUMERIC.into(), numeric_values(n)));
    }
    if let (Some(a), Some(n)) = (&analytic, &numeric) {
        let gap = a.total.iter().zip(numeric_values(n)).map(|(&t, x)| (x - t) / t.abs()).collect();
        columns.push(("rel_gap".into(), gap));
    }
    let mut s = header(cfg)?;
    let names: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
    s.push_str(&names.join(","));
    s.push('\n');
    for i in 0..grid.len() {
        let line: Vec<String> = columns.iter().map(|c| num(c.1[i])).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

fn numeric_values(r: &SpectrumResult) -> Vec<f64> {
    r.part(PART_NUMERIC).map_or_else(|| r.total.clone(), <[f64]>::to_vec)
}

/// Runs the configured command and returns its text output.
pub fn run(cfg: &LoadedConfig) -> Result<RunOutput> {
    let plain = |text| RunOutput { text, failure: None };
    match cfg.run.command {
        Command::Params => params_report(cfg).map(plain),
        Command::Steady => steady_report(cfg).map(plain),
        Command::Sweep => sweep_csv(cfg),
        Command::Spectrum => spectrum_csv(cfg).map(plain),
    }
}

#[derive(Debug, Parser)]
#[command(name = "qems", version, about = "Qubit-assisted cooling of coupled electromechanical modes")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: PathBuf,
    /// Write the output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the `method` key of the configuration.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
}

/// Caps the rayon pool at `QEMS_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QEMS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("QEMS_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))
}

fn report(err: &Error) -> i32 {
    let class = err.class();
    eprintln!("error[{}]: {err}", class.name());
    class.exit_code()
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = (|| {
        configure_threads()?;
        let mut cfg = load_config(&cli.config)?;
        cfg.run.command = cli.command;
        if let Some(m) = cli.method {
            cfg.run.method = m;
        }
        cfg.run.output = cli.out.clone();
        let out = run(&cfg)?;
        match &cfg.run.output {
            Some(path) => std::fs::write(path, &out.text)?,
            None => print!("{}", out.text),
        }
        Ok::<_, Error>(out.failure)
    })();
    match outcome {
        Ok(None) => 0,
        Ok(Some(err)) | Err(err) => report(&err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_nominal_parameters() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.params, SystemParams::nominal());
        assert!(cfg.given.is_empty());
        assert_eq!(cfg.run.window.points, 2001);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# header\n\n  gamma_c_hz = 5e4   # trailing\n").unwrap();
        assert!((cfg.params.gamma_c - TP * 5e4).abs() < 1e-9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("\n\nbogus_key = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("bogus_key"), "{err}");
        let err = parse_config("gamma_c_hz\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = parse_config("n_c = 4\nn_c = 6\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("line 1"), "{err}");
        let err = parse_config("gamma_c_hz = fast\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("number"), "{err}");
    }

    #[test]
    fn negative_rate_is_rejected() {
        let err = parse_config("gamma_down_hz = -1\n").unwrap_err();
        assert_eq!(err.class().exit_code(), 2);
        assert!(err.to_string().contains("gamma_down"));
    }

    #[test]
    fn circuit_and_system_frequencies_conflict() {
        let err = parse_config("c_m_f = 1e-20\nomega_c_hz = 2.5e8\n").unwrap_err().to_string();
        assert!(err.contains("conflicting") && err.contains("omega_c_hz"), "{err}");
        let err = parse_config("temperature_k = 0.02\nnbar_m = 1\n").unwrap_err().to_string();
        assert!(err.contains("conflicting"), "{err}");
    }

    #[test]
    fn circuit_config_derives_parameters() {
        let cfg = parse_config("flux_ratio = 0\n").unwrap();
        assert!(matches!(cfg.source, ParamSource::Circuit(_)));
        let sp = &cfg.params;
        assert!((sp.omega_m / TP - 250e6).abs() < 1.0);
        assert!((sp.omega_c - sp.omega_m).abs() < 1e-6 * sp.omega_m);
        assert!((sp.g_mc / TP - 7e3).abs() < 1e-3);
    }

    #[test]
    fn temperature_sets_occupations() {
        let cfg = parse_config("temperature_k = 0.02\n").unwrap();
        assert!((cfg.params.nbar_m - 1.2166).abs() < 1e-3);
        let h = header(&cfg).unwrap();
        assert!(h.contains("# temperature_k = 2.0000000000000000e-2\n"), "{h}");
        assert!(h.contains("# nbar_m = 1.21"), "{h}");
    }

    #[test]
    fn explicit_occupation_drops_temperature() {
        let cfg = parse_config("nbar_m = 0.5\n").unwrap();
        assert_eq!(cfg.params.nbar_m, 0.5);
        assert!(cfg.params.temperature.is_none());
        assert!((cfg.params.nbar_c - 1.2166).abs() < 1e-3);
    }

    #[test]
    fn run_invariants() {
        for bad in ["spectrum_points = 1", "spectrum_span_hz = 0", "sweep_points = 1", "sweep_start_hz = 0", "n_c = 1"] {
            let err = parse_config(bad).unwrap_err();
            assert_eq!(err.class().exit_code(), 2, "{bad}");
        }
        let err = parse_config("sweep_variable = gamma_c\nsweep_gamma_c_hz = 1e5\n").unwrap_err().to_string();
        assert!(err.contains("conflicting"), "{err}");
    }

    #[test]
    fn sweep_values_span_the_range() {
        let cfg = parse_config("sweep_points = 4\nsweep_start_hz = 1e6\nsweep_stop_hz = 8e6\n").unwrap();
        let v = cfg.run.sweep.values_hz();
        for (x, want) in v.iter().zip([1e6, 2e6, 4e6, 8e6]) {
            assert!((x - want).abs() < 1e-6 * want);
        }
        let cfg = parse_config("sweep_scale = linear\nsweep_points = 3\nsweep_start_hz = 1\nsweep_stop_hz = 3\n").unwrap();
        assert_eq!(cfg.run.sweep.values_hz(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn defaults_are_marked_in_header() {
        let cfg = parse_config("gamma_c_hz = 5e4\n").unwrap();
        let h = header(&cfg).unwrap();
        assert!(h.contains("# gamma_c_hz = 5.0000000000000000e4\n"), "{h}");
        assert!(h.contains("# gamma_down_hz = 1.0000000000000000e7 (default)\n"), "{h}");
        for key in ["gamma_minus_ce_hz", "gamma_plus_me_hz", "delta_c_hz", "gamma_tilde_m_eff_hz", "nbar_c"] {
            assert!(h.contains(&format!("# {key} = ")), "{key}");
        }
    }

    #[test]
    fn params_report_flags_regime() {
        let cfg = parse_config("").unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.text.contains("resolved_sideband_ok = true"));
        assert!(out.text.contains("adiabatic_ok = true"));
    }

    #[test]
    fn strict_regime_refuses_fast_couplings() {
        let mut cfg = parse_config("strict_regime = true\ngamma_down_hz = 1e5\n").unwrap();
        cfg.run.command = Command::Steady;
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.class().exit_code(), 4);
    }
}
