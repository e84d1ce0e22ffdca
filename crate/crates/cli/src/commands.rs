//! Subcommand implementations. Each returns an [`ExitStatus`]; messages go
//! to stdout, diagnostics to stderr.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fblf_core::analysis::{self, SequenceTriple};
use fblf_core::engine::{self, ModelKind, RunOutput};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::plot::Chart;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Ok = 0,
    Error = 1,
    Breach = 2,
    Violation = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Combined status of several runs; an error outranks everything else.
    fn merge(self, other: ExitStatus) -> ExitStatus {
        match (self, other) {
            (ExitStatus::Error, _) | (_, ExitStatus::Error) => ExitStatus::Error,
            (a, b) => a.max(b),
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] fblf_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CommandError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Overrides every config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Forces SVG output on.
    pub svg: bool,
    pub jobs: usize,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub config: PathBuf,
    pub output_dir: PathBuf,
    pub result: Result<RunOutput, CommandError>,
}

impl SimulateOutcome {
    pub fn status(&self) -> ExitStatus {
        match &self.result {
            Err(_) => ExitStatus::Error,
            Ok(out) if out.report.total_violations() > 0 => ExitStatus::Breach,
            Ok(_) => ExitStatus::Ok,
        }
    }
}

fn output_dir_for(config: &Path, cfg: &RunConfig, opts: &SimulateOptions, many: bool) -> PathBuf {
    let base = opts.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    if many {
        let stem = config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        base.join(stem)
    } else {
        base
    }
}

fn simulate_one(config: &Path, opts: &SimulateOptions, many: bool) -> SimulateOutcome {
    let cfg = match RunConfig::load(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            return SimulateOutcome {
                config: config.to_owned(),
                output_dir: opts.out.clone().unwrap_or_default(),
                result: Err(e.into()),
            }
        }
    };
    let dir = output_dir_for(config, &cfg, opts, many);
    let result = run_and_write(&cfg, &dir, opts.svg || cfg.emit_svg);
    SimulateOutcome {
        config: config.to_owned(),
        output_dir: dir,
        result,
    }
}

/// Runs one validated config and writes its artefacts into `dir`.
pub fn run_and_write(cfg: &RunConfig, dir: &Path, svg: bool) -> Result<RunOutput, CommandError> {
    let plant = cfg.plant()?;
    let out = engine::run(
        &plant,
        &cfg.controller(),
        cfg.theorem,
        cfg.steps,
        cfg.iterations,
    )?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("trace.csv");
    engine::write_trace_csv(&out.traces, create(&path)?)?;
    let path = dir.join("summary.csv");
    out.report.write_summary_csv(create(&path)?)?;
    let path = dir.join("memory.csv");
    out.memory.write_csv(create(&path)?)?;
    if svg {
        write_svgs(&out, cfg, dir)?;
    }
    Ok(out)
}

fn write_svgs(out: &RunOutput, cfg: &RunConfig, dir: &Path) -> Result<(), CommandError> {
    let sup_e: Vec<(f64, f64)> = out
        .report
        .iterations
        .iter()
        .map(|s| (s.k as f64, s.sup_e))
        .collect();
    let sup_v: Vec<(f64, f64)> = out
        .report
        .iterations
        .iter()
        .map(|s| (s.k as f64, s.sup_v))
        .collect();
    let (y_label, bound_label) = match out.report.model {
        ModelKind::I => ("sup_t V_k", "b_V"),
        ModelKind::II => ("sup_t e_k'Pe_k", "b_e^2"),
    };
    let convergence = Chart {
        title: &format!("{}: tracking error per iteration", cfg.model),
        x_label: "iteration k",
        y_label: "sup_t |e_k|",
        log_y: true,
        points: &sup_e,
        reference: None,
    }
    .render();
    let constraint = Chart {
        title: &format!("{}: constraint margin per iteration", cfg.model),
        x_label: "iteration k",
        y_label,
        log_y: false,
        points: &sup_v,
        reference: Some((out.report.bound, bound_label)),
    }
    .render();
    for (name, body) in [
        ("convergence.svg", convergence),
        ("constraint.svg", constraint),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Runs every config, at most `opts.jobs` at a time. Outcomes come back in
/// input order.
pub fn simulate_all(configs: &[PathBuf], opts: &SimulateOptions) -> Vec<SimulateOutcome> {
    let many = configs.len() > 1;
    let jobs = opts.jobs.clamp(1, configs.len().max(1));
    if jobs == 1 {
        return configs
            .iter()
            .map(|c| simulate_one(c, opts, many))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<SimulateOutcome>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let outcome = simulate_one(config, opts, many);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every config is visited"))
        .collect()
}

pub fn cmd_simulate(configs: &[PathBuf], opts: &SimulateOptions) -> ExitStatus {
    let mut status = ExitStatus::Ok;
    for outcome in simulate_all(configs, opts) {
        match &outcome.result {
            Ok(out) => {
                let report = &out.report;
                let last = report.iterations.last().expect("K >= 1");
                println!(
                    "{}: K={} sup_e[K]={:.6e} sup_V[K]={:.6e} breaches={} -> {}",
                    outcome.config.display(),
                    report.iterations.len(),
                    last.sup_e,
                    last.sup_v,
                    report.total_violations(),
                    outcome.output_dir.display()
                );
                if report.total_violations() > 0 {
                    eprintln!(
                        "{}: constraint breached in {} iteration(s)",
                        outcome.config.display(),
                        report
                            .iterations
                            .iter()
                            .filter(|s| s.violations > 0)
                            .count()
                    );
                }
            }
            Err(e) => eprintln!("{}: {e}", outcome.config.display()),
        }
        status = status.merge(outcome.status());
    }
    status
}

pub fn cmd_compare_blf(bounds: &[f64], out: &Path) -> ExitStatus {
    let report = match analysis::blf_report(bounds) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("compare-blf: {e}");
            return ExitStatus::Error;
        }
    };
    print!("{}", report.to_text());
    let written = fs::create_dir_all(out).map_err(io_err(out)).and_then(|_| {
        let path = out.join("blf_report.csv");
        report.write_csv(create(&path)?)?;
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("compare-blf: {e}");
        return ExitStatus::Error;
    }
    if report.all_hold() {
        ExitStatus::Ok
    } else {
        ExitStatus::Violation
    }
}

/// Reads a lemma CSV with header columns `r`, `s` and optionally `d`.
pub fn read_sequences(path: &Path) -> Result<SequenceTriple, CommandError> {
    let bad = |reason: String| CommandError::Input {
        path: path.to_owned(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let r_col = column("r").ok_or_else(|| bad("missing column `r`".into()))?;
    let s_col = column("s").ok_or_else(|| bad("missing column `s`".into()))?;
    let d_col = column("d");
    let (mut r, mut s, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |col: usize, name: &str| -> Result<f64, CommandError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                bad(format!(
                    "row {}: column `{name}` is not a number: `{raw}`",
                    line + 1
                ))
            })
        };
        r.push(field(r_col, "r")?);
        s.push(field(s_col, "s")?);
        if let Some(c) = d_col {
            d.push(field(c, "d")?);
        }
    }
    let seq = SequenceTriple::new(r, s);
    Ok(match d_col {
        Some(_) => seq.with_residual(d, None),
        None => seq,
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn cmd_check_lemmas(path: &Path, d_bar: Option<f64>) -> ExitStatus {
    let mut seq = match read_sequences(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("check-lemmas: {e}");
            return ExitStatus::Error;
        }
    };
    if seq.d.is_none() {
        if d_bar.is_some() {
            eprintln!("check-lemmas: --d-bar needs a `d` column");
            return ExitStatus::Error;
        }
        return match analysis::lemma1_check(&seq) {
            Ok(v) => {
                println!("check               value");
                println!("r_k <= r_k-1 - s_k  {}", yes_no(v.inequality_holds));
                if let Some(k) = v.first_violation {
                    println!("first violation     k={k}");
                }
                println!("r bounded           {}", yes_no(v.r_bounded));
                println!("s vanishes          {}", yes_no(v.s_vanishes));
                println!("tail sup of s       {:.6e}", v.s_limit_estimate);
                if v.inequality_holds {
                    ExitStatus::Ok
                } else {
                    ExitStatus::Violation
                }
            }
            Err(e) => {
                eprintln!("check-lemmas: {e}");
                ExitStatus::Error
            }
        };
    }
    seq.d_bar = d_bar;
    match analysis::lemma2_check(&seq) {
        Ok(v) => {
            println!("check                     value");
            println!("r_k <= r_k-1 - s_k + d_k  {}", yes_no(v.inequality_holds));
            if let Some(k) = v.first_violation {
                println!("first violation           k={k}");
            }
            println!("r bounded                 {}", yes_no(v.r_bounded));
            println!("tail sup of s             {:.6e}", v.limsup_s);
            if let Some(b) = v.bound_respected {
                println!("limsup s <= d_bar         {}", yes_no(b));
            }
            if let Some(b) = v.s_vanishes {
                println!("s vanishes                {}", yes_no(b));
            }
            if v.inequality_holds && v.bound_respected != Some(false) {
                ExitStatus::Ok
            } else {
                ExitStatus::Violation
            }
        }
        Err(e) => {
            eprintln!("check-lemmas: {e}");
            ExitStatus::Error
        }
    }
}
