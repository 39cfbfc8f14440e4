//! Scenario files: flat TOML, validated in full before anything runs.
//!
//! ```toml
//! nx = 200
//! T = 1.0
//! nonlinearity = "sine(1, 0.5)"
//! init = "sine_mode(1, 0.3)"
//! method = "ls"
//! ```

use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;
use toml::{Table, Value};
use wavecontrol_core::{Grid, Nonlinearity};

/// A single offense; `line` is 1-based, 0 when the problem is not tied to a line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Every offense found in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Ls,
    Picard,
    Newton,
    NewtonAlt,
    HumLinear,
    Probe,
}

impl RunMethod {
    pub const ALL: [RunMethod; 6] = [
        RunMethod::Ls,
        RunMethod::Picard,
        RunMethod::Newton,
        RunMethod::NewtonAlt,
        RunMethod::HumLinear,
        RunMethod::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMethod::Ls => "ls",
            RunMethod::Picard => "picard",
            RunMethod::Newton => "newton",
            RunMethod::NewtonAlt => "newton_alt",
            RunMethod::HumLinear => "hum_linear",
            RunMethod::Probe => "probe",
        }
    }
}

impl fmt::Display for RunMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        RunMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                format!("unknown method `{s}` (expected one of ls, picard, newton, newton_alt, hum_linear, probe)")
            })
    }
}

/// Named data profile for a position or velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    /// `amp sin(n pi x)`
    SineMode {
        n: u32,
        amp: f64,
    },
    /// Smooth compactly supported bump of half-width `width`.
    Bump {
        center: f64,
        width: f64,
        amp: f64,
    },
    /// A trajectory dump; its initial (for `init`) or terminal (for
    /// `target`) state supplies both position and velocity. The initial
    /// velocity is recovered assuming no forcing at `t = 0`.
    File(PathBuf),
}

impl Profile {
    pub fn is_file(&self) -> bool {
        matches!(self, Profile::File(_))
    }

    /// Point values for the analytic profiles; `None` for files.
    pub fn eval(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Profile::Zero => 0.0,
            Profile::SineMode { n, amp } => amp * (n as f64 * std::f64::consts::PI * x).sin(),
            Profile::Bump { center, width, amp } => {
                let r = (x - center) / width;
                if r.abs() < 1.0 {
                    amp * (1.0 - 1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
            Profile::File(_) => return None,
        })
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => f.write_str("zero"),
            Profile::SineMode { n, amp } => write!(f, "sine_mode({n}, {amp})"),
            Profile::Bump { center, width, amp } => write!(f, "bump({center}, {width}, {amp})"),
            Profile::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (name, inner) = match text.find('(') {
            None => (text, None),
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| format!("malformed profile `{text}`"))?;
                (text[..open].trim(), Some(inner.trim()))
            }
        };
        let numbers = |want: usize| -> Result<Vec<f64>, String> {
            let inner = inner.unwrap_or("");
            let vals = inner
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad number `{}` in `{text}`", p.trim()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != want {
                return Err(format!("`{name}` takes {want} parameter(s), got {}", vals.len()));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(format!("non-finite parameter in `{text}`"));
            }
            Ok(vals)
        };
        match name {
            "zero" => {
                numbers(0)?;
                Ok(Profile::Zero)
            }
            "sine_mode" => {
                let v = numbers(2)?;
                if v[0] < 1.0 || v[0].fract() != 0.0 || v[0] > u32::MAX as f64 {
                    return Err(format!("sine_mode index must be a positive integer, got {}", v[0]));
                }
                Ok(Profile::SineMode {
                    n: v[0] as u32,
                    amp: v[1],
                })
            }
            "bump" => {
                let v = numbers(3)?;
                let (center, width) = (v[0], v[1]);
                if width <= 0.0 || center - width < 0.0 || center + width > 1.0 {
                    return Err(format!(
                        "bump support ({}, {}) must lie in [0, 1]",
                        center - width,
                        center + width
                    ));
                }
                Ok(Profile::Bump {
                    center,
                    width,
                    amp: v[2],
                })
            }
            "file" => {
                let path = inner.unwrap_or("").trim_matches(|c| c == '"' || c == '\'');
                if path.is_empty() {
                    return Err("file profile needs a path".into());
                }
                Ok(Profile::File(PathBuf::from(path)))
            }
            other => Err(format!(
                "unknown profile `{other}` (expected zero, sine_mode, bump or file)"
            )),
        }
    }
}

fn serialize_display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitModeName {
    LinearStar,
    AffineStar,
    User,
}

impl FromStr for InitModeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "linear_star" => Ok(InitModeName::LinearStar),
            "affine_star" => Ok(InitModeName::AffineStar),
            "user" => Ok(InitModeName::User),
            other => Err(format!(
                "unknown init_mode `{other}` (expected linear_star, affine_star or user)"
            )),
        }
    }
}

/// A validated scenario with every default filled in.
///
/// Serializes back to the same flat TOML layout it is read from.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub nx: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(serialize_with = "serialize_display")]
    pub nonlinearity: Nonlinearity,
    #[serde(serialize_with = "serialize_display")]
    pub init: Profile,
    #[serde(serialize_with = "serialize_display")]
    pub init_velocity: Profile,
    #[serde(serialize_with = "serialize_display")]
    pub target: Profile,
    #[serde(serialize_with = "serialize_display")]
    pub target_velocity: Profile,
    pub method: RunMethod,
    pub m: f64,
    pub grid_points: usize,
    pub golden_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_tol: Option<f64>,
    pub max_outer: usize,
    pub hum_tol: f64,
    pub hum_max_iter: usize,
    pub tikhonov: f64,
    pub init_mode: InitModeName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_state: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_control: Option<PathBuf>,
    pub blowup_guard: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_step: Option<f64>,
    pub increment_tol: f64,
    pub probe_magnitudes: Vec<f64>,
    pub probe_samples: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub record_timing: bool,
    /// Non-fatal findings, e.g. a horizon too short for the control region.
    #[serde(skip)]
    pub warnings: Vec<String>,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn grid(&self) -> Grid {
        match self.dt {
            Some(dt) => Grid::with_dt(self.nx, self.horizon, self.l1, self.l2, dt),
            None => Grid::new(self.nx, self.horizon, self.l1, self.l2),
        }
        .expect("grid validated at parse time")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Reads and parses a scenario file; relative data paths resolve against
    /// its directory.
    pub fn load(path: &Path) -> Result<Scenario, ParseErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ParseErrors(vec![ParseError {
                line: 0,
                message: format!("cannot read {}: {e}", path.display()),
            }])
        })?;
        let mut sc = parse_config(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are TOML-representable")
    }
}

struct Reader<'a> {
    text: &'a str,
    table: Table,
    used: BTreeSet<String>,
    errors: Vec<ParseError>,
}

impl Reader<'_> {
    fn line_of(&self, key: &str) -> usize {
        key_line(self.text, key)
    }

    fn error(&mut self, key: &str, message: impl Into<String>) {
        let line = if key.is_empty() { 0 } else { self.line_of(key) };
        self.errors.push(ParseError {
            line,
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_string());
        self.table.get(key).cloned()
    }

    fn get<T>(&mut self, key: &str, convert: impl Fn(&Value) -> Result<T, String>) -> Option<T> {
        let v = self.raw(key)?;
        match convert(&v) {
            Ok(t) => Some(t),
            Err(msg) => {
                self.error(key, format!("`{key}`: {msg}"));
                None
            }
        }
    }

    fn or<T>(&mut self, key: &str, default: T, convert: impl Fn(&Value) -> Result<T, String>) -> T {
        self.get(key, convert).unwrap_or(default)
    }
}

fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            let l = l
                .strip_prefix('"')
                .map(|r| r.replacen('"', "", 1))
                .unwrap_or_else(|| l.to_string());
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn as_f64(v: &Value) -> Result<f64, String> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        other => return Err(format!("expected a number, got {}", other.type_str())),
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn as_positive(v: &Value) -> Result<f64, String> {
    let x = as_f64(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn as_usize(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(format!("must be non-negative, got {i}")),
        other => Err(format!("expected an integer, got {}", other.type_str())),
    }
}

fn as_str(v: &Value) -> Result<String, String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| format!("expected a string, got {}", v.type_str()))
}

fn as_bool(v: &Value) -> Result<bool, String> {
    v.as_bool()
        .ok_or_else(|| format!("expected a boolean, got {}", v.type_str()))
}

fn parsed<T: FromStr>(v: &Value) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    as_str(v)?.parse::<T>().map_err(|e| e.to_string())
}

/// Parses scenario text, reporting every offense rather than the first.
pub fn parse_config(text: &str) -> Result<Scenario, ParseErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
        ParseErrors(vec![ParseError {
            line,
            message: e.message().to_string(),
        }])
    })?;
    let mut r = Reader {
        text,
        table,
        used: BTreeSet::new(),
        errors: Vec::new(),
    };

    let nx = r.or("nx", 200, as_usize);
    let horizon = r.or("T", 1.0, as_positive);
    let l1 = r.or("l1", 0.2, as_f64);
    let l2 = r.or("l2", 0.8, as_f64);
    let dt = r.get("dt", as_positive);
    let nonlinearity = r.or("nonlinearity", Nonlinearity::zero(), parsed::<Nonlinearity>);
    let init = r.or("init", Profile::SineMode { n: 1, amp: 1.0 }, parsed::<Profile>);
    let init_velocity = r.or("init_velocity", Profile::Zero, parsed::<Profile>);
    let target = r.or("target", Profile::Zero, parsed::<Profile>);
    let target_velocity = r.or("target_velocity", Profile::Zero, parsed::<Profile>);
    let method = r.or("method", RunMethod::Ls, parsed::<RunMethod>);
    let m = r.or("m", 2.0, as_f64);
    let grid_points = r.or("grid_points", 25, as_usize);
    let golden_iters = r.or("golden_iters", 20, as_usize);
    let e_tol = r.get("e_tol", as_positive);
    let max_outer = r.or("max_outer", 50, as_usize);
    let hum_tol = r.or("hum_tol", 1e-8, as_positive);
    let hum_max_iter = r.or("hum_max_iter", 500, as_usize);
    let tikhonov = r.or("tikhonov", 0.0, as_f64);
    let init_mode = r.or("init_mode", InitModeName::LinearStar, parsed::<InitModeName>);
    let user_state = r.get("user_state", as_str).map(PathBuf::from);
    let user_control = r.get("user_control", as_str).map(PathBuf::from);
    let blowup_guard = r.or("blowup_guard", 1e6, as_positive);
    let fixed_step = r.get("fixed_step", as_positive);
    let increment_tol = r.or("increment_tol", 1e-10, as_positive);
    let probe_magnitudes = r.or("probe_magnitudes", vec![0.0, 10.0, 40.0], |v| {
        let arr = v
            .as_array()
            .ok_or_else(|| format!("expected an array, got {}", v.type_str()))?;
        arr.iter()
            .map(|x| {
                as_f64(x).and_then(|x| {
                    if x >= 0.0 {
                        Ok(x)
                    } else {
                        Err(format!("magnitudes must be >= 0, got {x}"))
                    }
                })
            })
            .collect()
    });
    let probe_samples = r.or("probe_samples", 4, as_usize);
    let out = r.or("out", PathBuf::from("out"), |v| as_str(v).map(PathBuf::from));
    let seed = r.or("seed", 0, |v| match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err("expected a non-negative integer".into()),
    });
    let record_timing = r.or("record_timing", false, as_bool);

    let unknown: Vec<String> = r.table.keys().filter(|k| !r.used.contains(*k)).cloned().collect();
    for key in unknown {
        r.error(&key, format!("unknown key `{key}`"));
    }

    // cross-field checks
    let grid = match dt {
        Some(dt) => Grid::with_dt(nx, horizon, l1, l2, dt),
        None => Grid::new(nx, horizon, l1, l2),
    };
    let mut warnings = Vec::new();
    match &grid {
        Ok(g) => {
            if !g.t_exceeds_geometric() {
                warnings.push(format!(
                    "T = {horizon} does not exceed 2 max(l1, 1 - l2) = {}; controls may not exist and CG may not converge",
                    g.geometric_time()
                ));
            }
        }
        Err(e) => {
            let key = ["nx", "T", "l1", "l2", "dt"]
                .into_iter()
                .find(|k| r.table.contains_key(*k))
                .unwrap_or("");
            r.error(key, format!("invalid grid: {e}"));
        }
    }
    if m < 1.0 {
        r.error("m", format!("`m` must be at least 1, got {m}"));
    }
    if grid_points < 2 {
        r.error("grid_points", "`grid_points` must be at least 2");
    }
    if tikhonov < 0.0 {
        r.error("tikhonov", "`tikhonov` must be non-negative");
    }
    if probe_samples == 0 && method == RunMethod::Probe {
        r.error("probe_samples", "`probe_samples` must be positive");
    }
    if init.is_file() && init_velocity != Profile::Zero {
        r.error("init_velocity", "`init_velocity` cannot be combined with a file `init`");
    }
    if target.is_file() && target_velocity != Profile::Zero {
        r.error(
            "target_velocity",
            "`target_velocity` cannot be combined with a file `target`",
        );
    }
    for (key, p) in [("init_velocity", &init_velocity), ("target_velocity", &target_velocity)] {
        if p.is_file() {
            r.error(key, format!("`{key}` takes an analytic profile"));
        }
    }
    if init_mode == InitModeName::User && (user_state.is_none() || user_control.is_none()) {
        r.error(
            "init_mode",
            "init_mode = \"user\" needs both `user_state` and `user_control`",
        );
    }

    if !r.errors.is_empty() {
        r.errors.sort_by_key(|e| e.line);
        return Err(ParseErrors(r.errors));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Scenario {
        nx,
        horizon,
        l1,
        l2,
        dt,
        nonlinearity,
        init,
        init_velocity,
        target,
        target_velocity,
        method,
        m,
        grid_points,
        golden_iters,
        e_tol,
        max_outer,
        hum_tol,
        hum_max_iter,
        tikhonov,
        init_mode,
        user_state,
        user_control,
        blowup_guard,
        fixed_step,
        increment_tol,
        probe_magnitudes,
        probe_samples,
        out,
        seed,
        record_timing,
        warnings,
        base_dir: PathBuf::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let sc = parse_config("nx = 50\nT = 1.0\nmethod = \"hum_linear\"\nnonlinearity = \"zero\"\n").unwrap();
        assert_eq!(sc.method, RunMethod::HumLinear);
        assert!(sc.nonlinearity.is_zero());
        assert_eq!(sc.max_outer, 50);
        assert_eq!(sc.m, 2.0);
        assert_eq!(sc.init_mode, InitModeName::LinearStar);
        assert!(sc.warnings.is_empty());
    }

    #[test]
    fn short_horizon_warns() {
        let sc = parse_config("T = 0.3\nl1 = 0.2\nl2 = 0.8\n").unwrap();
        assert_eq!(sc.warnings.len(), 1);
        assert!(sc.warnings[0].contains("2 max(l1, 1 - l2)"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("nx = 20\nfoo = 1\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 2);
        assert!(err.0[0].message.contains("foo"));
    }

    #[test]
    fn all_errors_are_reported() {
        let text =
            "nx = \"many\"\nnonlinearity = \"nope(1)\"\ninit = \"bump(0.1, 0.5, 1)\"\nmethod = \"magic\"\nbar = 2\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn syntax_error_has_a_line() {
        let err = parse_config("nx = 20\nT = = 1\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 2);
    }

    #[test]
    fn user_mode_needs_dumps() {
        let err = parse_config("init_mode = \"user\"\nuser_state = \"y.dump\"\n").unwrap_err();
        assert!(err.0[0].message.contains("user_control"));
    }

    #[test]
    fn resolved_scenario_reparses_identically() {
        let sc = parse_config(
            "nx = 64\nT = 1.5\nnonlinearity = \"sine(1, 0.5)\"\ninit = \"bump(0.5, 0.2, 2)\"\ne_tol = 1e-14\n",
        )
        .unwrap();
        let again = parse_config(&sc.to_toml()).unwrap();
        assert_eq!(again.to_toml(), sc.to_toml());
        assert_eq!(again.init, sc.init);
        assert_eq!(again.nonlinearity.name(), sc.nonlinearity.name());
    }

    #[test]
    fn profiles_parse_and_evaluate() {
        let p: Profile = "sine_mode(2, 0.5)".parse().unwrap();
        assert!((p.eval(0.25).unwrap() - 0.5).abs() < 1e-15);
        let b: Profile = "bump(0.5, 0.25, 3)".parse().unwrap();
        assert_eq!(b.eval(0.5), Some(3.0));
        assert_eq!(b.eval(0.8), Some(0.0));
        assert!("sine_mode(0.5, 1)".parse::<Profile>().is_err());
        assert_eq!(
            "file(a/b.dump)".parse::<Profile>().unwrap(),
            Profile::File("a/b.dump".into())
        );
    }
}
