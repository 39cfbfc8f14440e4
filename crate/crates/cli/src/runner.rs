//! Executes scenarios and writes their outputs.
//!
//! Each run writes into its own directory:
//!
//! | file | content |
//! |---|---|
//! | `iterates.csv` | one row per outer iteration |
//! | `state.dump`, `control.dump` | final trajectory and control |
//! | `diagnostics.json` | CG diagnostics (`hum_linear`) |
//! | `probe.csv`, `probe.json` | probe table and fit (`probe`) |
//! | `summary.json` | method, outcome, final E and terminal miss |

use crate::scenario::{InitModeName, Profile, RunMethod, Scenario};
use rayon::prelude::*;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;
use wavecontrol_core::baselines::{self, BaselineError, BaselineOutcome, Method};
use wavecontrol_core::dump::{self, DumpError};
use wavecontrol_core::hum::{self, ControlDiagnostics};
use wavecontrol_core::least_squares::{
    self as ls, InitMode, IterateRecord, LineSearchOptions, LsConfig, LsError, Outcome, TrajectoryControlPair,
};
use wavecontrol_core::{norms, wave, Grid, HumError, HumOptions, LinearControlProblem, SpaceTimeField, StatePair};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged = 0,
    Failed = 1,
    ParseError = 2,
    Stagnation = 3,
    Diverged = 4,
    NoConvergence = 5,
    DescentFailure = 6,
    MaxIterations = 7,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

pub const EXIT_CODE_TABLE: &str = "\
Exit codes:
  0  converged (or probe completed)
  1  other failure (I/O, bad data file, solver breakdown)
  2  scenario parse error
  3  stagnation
  4  diverged
  5  inner control solve did not converge
  6  descent direction failure
  7  iteration limit reached";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Dump {
        path: PathBuf,
        #[source]
        source: DumpError,
    },
    #[error("{0}")]
    Data(String),
}

impl RunError {
    pub fn status(&self) -> Status {
        Status::Failed
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub method: String,
    pub outcome: Status,
    #[serde(rename = "final_E")]
    pub final_e: Option<f64>,
    pub final_terminal_miss: Option<f64>,
    pub iterations: usize,
    pub wallclock: f64,
    pub stopping_rule: String,
    pub nonlinearity: String,
    pub seed: u64,
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn exit_code(&self) -> u8 {
        self.outcome.code()
    }
}

/// Grid, data and solver settings resolved from a scenario.
pub struct Problem {
    pub grid: Grid,
    pub init: StatePair,
    pub target: StatePair,
    pub cfg: LsConfig,
}

fn read_dump(path: &Path, grid: &Grid) -> Result<SpaceTimeField, RunError> {
    let file = File::open(path).map_err(io_err(path))?;
    let field = dump::read_field(BufReader::new(file)).map_err(|source| RunError::Dump {
        path: path.to_path_buf(),
        source,
    })?;
    let g = field.grid();
    if g.nx() != grid.nx() || g.nt() != grid.nt() {
        return Err(RunError::Data(format!(
            "{}: dump grid nx={} nt={} does not match the scenario grid nx={} nt={}",
            path.display(),
            g.nx(),
            g.nt(),
            grid.nx(),
            grid.nt()
        )));
    }
    // reattach to the scenario grid so control-region bookkeeping matches
    SpaceTimeField::from_values(grid, field.into_values())
        .ok_or_else(|| RunError::Data(format!("{}: bad dump size", path.display())))
}

fn state_from(sc: &Scenario, grid: &Grid, pos: &Profile, vel: &Profile, terminal: bool) -> Result<StatePair, RunError> {
    if let Profile::File(p) = pos {
        let field = read_dump(&sc.resolve(p), grid)?;
        return Ok(if terminal {
            wave::terminal_state(&field)
        } else {
            wave::initial_state(&field, None)
        });
    }
    Ok(StatePair::from_fns(
        grid,
        |x| pos.eval(x).unwrap_or(0.0),
        |x| vel.eval(x).unwrap_or(0.0),
    ))
}

/// Builds grid, data and configuration, loading any referenced dumps.
pub fn resolve(sc: &Scenario) -> Result<Problem, RunError> {
    let grid = sc.grid();
    let init = state_from(sc, &grid, &sc.init, &sc.init_velocity, false)?;
    let target = state_from(sc, &grid, &sc.target, &sc.target_velocity, true)?;
    let hum = HumOptions {
        tol: sc.hum_tol,
        max_iter: sc.hum_max_iter,
        tikhonov: sc.tikhonov,
    };
    let init_mode = match sc.init_mode {
        InitModeName::LinearStar => InitMode::LinearStar,
        InitModeName::AffineStar => InitMode::AffineStar,
        InitModeName::User => {
            let (ys, fs) = (sc.user_state.as_ref(), sc.user_control.as_ref());
            let y = read_dump(&sc.resolve(ys.expect("validated")), &grid)?;
            let f = read_dump(&sc.resolve(fs.expect("validated")), &grid)?;
            let pair = TrajectoryControlPair::new(y, f, init.clone(), target.clone())
                .map_err(|e| RunError::Data(format!("user pair: {e}")))?;
            InitMode::User(Box::new(pair))
        }
    };
    let cfg = LsConfig {
        line_search: LineSearchOptions {
            m: sc.m,
            grid_points: sc.grid_points,
            golden_iters: sc.golden_iters,
        },
        e_tol: sc.e_tol,
        max_outer: sc.max_outer,
        hum,
        init: init_mode,
        blowup_guard: sc.blowup_guard,
        fixed_step: sc.fixed_step,
        increment_tol: sc.increment_tol,
    };
    Ok(Problem {
        grid,
        init,
        target,
        cfg,
    })
}

struct Output<'a> {
    dir: &'a Path,
    record_timing: bool,
}

impl Output<'_> {
    fn create(&self, name: &str) -> Result<(BufWriter<File>, PathBuf), RunError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(io_err(&path))?;
        Ok((BufWriter::new(f), path))
    }

    fn write_with(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<(), RunError> {
        let (mut w, path) = self.create(name)?;
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }

    fn field(&self, name: &str, field: &SpaceTimeField) -> Result<(), RunError> {
        self.write_with(name, |w| dump::write_field(w, field))
    }

    fn timing(&self, log: &[IterateRecord]) -> Vec<IterateRecord> {
        let mut log = log.to_vec();
        if !self.record_timing {
            log.iter_mut().for_each(|r| r.wallclock = 0.0);
        }
        log
    }

    fn iterates(&self, log: &[IterateRecord]) -> Result<(), RunError> {
        let log = self.timing(log);
        self.write_with("iterates.csv", |w| ls::write_iterates_csv(w, &log, None))
    }

    fn pair(&self, pair: &TrajectoryControlPair) -> Result<(), RunError> {
        self.field("state.dump", &pair.y)?;
        self.field("control.dump", &pair.f)
    }
}

fn hum_status(e: &HumError) -> Status {
    match e {
        HumError::NoConvergence { .. } => Status::NoConvergence,
        _ => Status::Failed,
    }
}

fn ls_status(e: &LsError) -> Status {
    match e {
        LsError::Initialization(h) => hum_status(h),
        LsError::DescentFailure { .. } => Status::DescentFailure,
        LsError::Stagnation { .. } => Status::Stagnation,
        LsError::BlowUp { .. } => Status::Diverged,
        _ => Status::Failed,
    }
}

/// Final fields of a finished or failed iteration.
struct Iterated {
    status: Status,
    log: Vec<IterateRecord>,
    pair: Option<TrajectoryControlPair>,
    error: Option<String>,
}

fn iterate(method: RunMethod, p: &Problem, sc: &Scenario) -> Iterated {
    let nl = &sc.nonlinearity;
    match method {
        RunMethod::Ls => match ls::solve(&p.grid, &p.init, &p.target, nl, &p.cfg) {
            Ok(run) => Iterated {
                status: match run.outcome {
                    Outcome::Converged => Status::Converged,
                    Outcome::MaxIterations => Status::MaxIterations,
                },
                log: run.log,
                pair: Some(run.pair),
                error: None,
            },
            Err(e) => Iterated {
                status: ls_status(&e),
                log: e.log().to_vec(),
                pair: None,
                error: Some(e.to_string()),
            },
        },
        _ => {
            let m = baseline_method(method).expect("iterative baseline");
            match baselines::run(m, &p.grid, &p.init, &p.target, nl, &p.cfg) {
                Ok(run) => Iterated {
                    status: match run.outcome {
                        BaselineOutcome::Converged => Status::Converged,
                        BaselineOutcome::Diverged => Status::Diverged,
                        BaselineOutcome::MaxIter => Status::MaxIterations,
                    },
                    log: run.log,
                    pair: run.pair,
                    error: None,
                },
                Err(e) => Iterated {
                    status: match &e {
                        BaselineError::Control { source, .. } => hum_status(source),
                        BaselineError::LeastSquares(inner) => ls_status(inner),
                    },
                    log: e.log().to_vec(),
                    pair: None,
                    error: Some(e.to_string()),
                },
            }
        }
    }
}

fn baseline_method(m: RunMethod) -> Option<Method> {
    match m {
        RunMethod::Picard => Some(Method::Picard),
        RunMethod::Newton => Some(Method::Newton),
        RunMethod::NewtonAlt => Some(Method::NewtonAlt),
        _ => None,
    }
}

fn stopping_rule(method: RunMethod, e_tol: f64) -> String {
    match method {
        RunMethod::Ls => format!("E <= {e_tol:e}"),
        RunMethod::HumLinear => "CG residual or terminal miss below hum_tol".into(),
        RunMethod::Probe => "all probe samples solved".into(),
        m => baseline_method(m).expect("baseline").stopping_rule().to_string(),
    }
}

/// Runs `method` for scenario `sc`, writing outputs into `dir`.
pub fn run_method(sc: &Scenario, method: RunMethod, dir: &Path) -> Result<Summary, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = resolve(sc)?;
    let out = Output {
        dir,
        record_timing: sc.record_timing,
    };
    let start = std::time::Instant::now();
    let mut summary = Summary {
        method: method.name().into(),
        outcome: Status::Converged,
        final_e: None,
        final_terminal_miss: None,
        iterations: 0,
        wallclock: 0.0,
        stopping_rule: stopping_rule(method, p.cfg.effective_e_tol()),
        nonlinearity: sc.nonlinearity.name().into(),
        seed: sc.seed,
        error: None,
        warnings: sc.warnings.clone(),
    };
    match method {
        RunMethod::HumLinear => hum_linear(sc, &p, &out, &mut summary)?,
        RunMethod::Probe => probe(sc, &p, &out, &mut summary)?,
        _ => {
            let it = iterate(method, &p, sc);
            out.iterates(&it.log)?;
            if let Some(pair) = &it.pair {
                out.pair(pair)?;
            }
            if let Some(last) = it.log.last() {
                summary.final_e = Some(last.e);
                summary.final_terminal_miss = Some(last.terminal_miss);
                summary.iterations = last.k;
            }
            summary.outcome = it.status;
            summary.error = it.error;
        }
    }
    if sc.record_timing {
        summary.wallclock = start.elapsed().as_secs_f64();
    }
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// Control of the linearization at zero: potential `g'(0)`, source `-g(0)`.
fn hum_linear(sc: &Scenario, p: &Problem, out: &Output, summary: &mut Summary) -> Result<(), RunError> {
    let nl = &sc.nonlinearity;
    let problem = LinearControlProblem::new(
        &p.grid,
        SpaceTimeField::constant(&p.grid, nl.gprime(0.0)),
        SpaceTimeField::constant(&p.grid, -nl.g(0.0)),
        p.init.clone(),
        p.target.clone(),
    )
    .map_err(|e| RunError::Data(e.to_string()))?;
    match hum::minimal_norm_control(&problem, &p.cfg.hum) {
        Ok(sol) => {
            #[derive(Serialize)]
            struct Diagnostics<'a> {
                #[serde(flatten)]
                base: ControlDiagnostics,
                control_l2_omega: f64,
                residual_history: &'a [f64],
            }
            out.json(
                "diagnostics.json",
                &Diagnostics {
                    base: ControlDiagnostics::from(&sol),
                    control_l2_omega: norms::l2_qt_omega(&sol.control),
                    residual_history: &sol.residual_history,
                },
            )?;
            out.field("state.dump", &sol.state)?;
            out.field("control.dump", &sol.control)?;
            let pair =
                TrajectoryControlPair::new(sol.state.clone(), sol.control.clone(), p.init.clone(), p.target.clone())
                    .map_err(|e| RunError::Data(e.to_string()))?;
            summary.final_e = Some(ls::error_functional(&pair, nl));
            summary.final_terminal_miss = Some(sol.terminal_residual);
            summary.iterations = sol.cg_iterations;
        }
        Err(e) => {
            summary.outcome = hum_status(&e);
            summary.error = Some(e.to_string());
        }
    }
    Ok(())
}

fn probe(sc: &Scenario, p: &Problem, out: &Output, summary: &mut Summary) -> Result<(), RunError> {
    match hum::observability_probe(&p.grid, &sc.probe_magnitudes, sc.probe_samples, sc.seed, &p.cfg.hum) {
        Ok(report) => {
            out.write_with("probe.csv", |w| {
                writeln!(
                    w,
                    "magnitude,sample,potential,data_norm,control_norm,ratio,cg_iterations"
                )?;
                for r in &report.rows {
                    writeln!(
                        w,
                        "{:e},{},{:e},{:e},{:e},{:e},{}",
                        r.magnitude, r.sample, r.potential, r.data_norm, r.control_norm, r.ratio, r.cg_iterations
                    )?;
                }
                Ok(())
            })?;
            out.json(
                "probe.json",
                &serde_json::json!({ "slope": report.slope, "intercept": report.intercept, "rows": report.rows.len() }),
            )?;
            summary.iterations = report.rows.len();
        }
        Err(e) => {
            summary.outcome = hum_status(&e);
            summary.error = Some(e.to_string());
        }
    }
    Ok(())
}

/// Runs the scenario's own method.
pub fn run(sc: &Scenario, dir: &Path) -> Result<Summary, RunError> {
    run_method(sc, sc.method, dir)
}

/// Runs several methods on one scenario, each into `dir/<method>`, and
/// writes a combined `compare.csv` and `compare.json`.
pub fn compare(sc: &Scenario, methods: &[RunMethod], dir: &Path) -> Result<Vec<Summary>, RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summaries = methods
        .par_iter()
        .map(|&m| run_method(sc, m, &dir.join(m.name())))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Output {
        dir,
        record_timing: sc.record_timing,
    };
    let mut csv = Vec::new();
    let mut header_done = false;
    for &m in methods {
        if !matches!(
            m,
            RunMethod::Ls | RunMethod::Picard | RunMethod::Newton | RunMethod::NewtonAlt
        ) {
            continue;
        }
        let path = dir.join(m.name()).join("iterates.csv");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if !header_done {
            writeln!(csv, "{header},method").expect("in-memory write");
            header_done = true;
        }
        for line in lines {
            writeln!(csv, "{line},{m}").expect("in-memory write");
        }
    }
    if header_done {
        out.write_with("compare.csv", |w| w.write_all(&csv))?;
    }
    out.json("compare.json", &summaries)?;
    Ok(summaries)
}

/// Scenario files (`*.toml`) of a batch directory, sorted by name.
pub fn batch_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    Ok(files)
}
