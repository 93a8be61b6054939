use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lazylink::analysis::{
    annotate_w, compare_runs, find_lambda, fit_decay, plot_series, transmission_stats,
    AuditOptions, AuditReport, ComparisonTable, DecayFit, TransmissionStats,
};
use lazylink::hybridsim::{simulate, HybridArc, Termination};
use lazylink::matlib::{lyapunov_residual, norm, solve_lyapunov, spectral_norm, Matrix};
use lazylink::policy::Policy;
use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::config::{build, check, CheckReport, Experiment, ExperimentConfig, TraceFormat};
use crate::error::CliError;

pub const TOOL: &str = "lazylink";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn cmd_check(cfg: &ExperimentConfig) -> CheckReport {
    check(cfg).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub name: String,
    pub policy: String,
    #[serde(rename = "F11")]
    pub f11: Matrix,
    #[serde(rename = "F12")]
    pub f12: Matrix,
    #[serde(rename = "F21")]
    pub f21: Matrix,
    #[serde(rename = "F22")]
    pub f22: Matrix,
    /// Solution of F11ᵀP + PF11 = −I.
    #[serde(rename = "P1_unit")]
    pub p1_unit: Matrix,
    pub p1_unit_residual: f64,
    /// Certificate actually used by the policy, when it carries one.
    #[serde(rename = "P1", skip_serializing_if = "Option::is_none")]
    pub p1: Option<Matrix>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<Matrix>,
    /// 2|P1 F12| with the unit-decay certificate: the baseline's gamma.
    pub baseline_gamma_gain: f64,
    /// (a, b, c) of the asynchronous guard.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub async_gains: Option<[f64; 3]>,
    #[serde(rename = "P_o", skip_serializing_if = "Option::is_none")]
    pub p_o: Option<Matrix>,
}

pub fn cmd_design(cfg: &ExperimentConfig) -> Result<DesignReport, CliError> {
    let exp = build(cfg)?;
    let err = &exp.err;
    let n = err.n();
    let p1_unit = solve_lyapunov(&err.f11, &Matrix::identity(n))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let residual = lyapunov_residual(&err.f11, &p1_unit, &Matrix::identity(n));
    let gamma = 2.0 * spectral_norm(&p1_unit.matmul(&err.f12).expect("F12 conforms to P1"));
    let (p1, q, gains) = match &exp.policy {
        Policy::Sync(p) => (Some(p.p1().clone()), Some(p.q().clone()), None),
        Policy::Async(p) => {
            let (a, b, c) = p.gains();
            (Some(p.p1().clone()), Some(p.q().clone()), Some([a, b, c]))
        }
        Policy::Tabuada(_) => (None, None, None),
    };
    Ok(DesignReport {
        name: exp.name.clone(),
        policy: exp.policy.kind().to_string(),
        f11: err.f11.clone(),
        f12: err.f12.clone(),
        f21: err.f21.clone(),
        f22: err.f22.clone(),
        p1_unit,
        p1_unit_residual: residual,
        p1,
        q,
        baseline_gamma_gain: gamma,
        async_gains: gains,
        p_o: exp.monitor.observer.as_ref().map(|o| o.p_o.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool: String,
    pub version: String,
    pub name: String,
    pub policy: String,
    pub termination: Termination,
    pub converged: bool,
    pub final_t: f64,
    pub final_j: usize,
    pub final_distance: f64,
    pub final_x_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_eta_norm: Option<f64>,
    pub samples: usize,
    pub stats: TransmissionStats,
    pub decay: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_note: Option<String>,
    pub audit: AuditReport,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub arc: HybridArc,
    pub files: Vec<PathBuf>,
}

/// Simulates, audits and summarizes one experiment without touching disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<(Experiment, HybridArc, RunSummary), CliError> {
    let exp = build(cfg)?;
    info!("running {} ({})", exp.name, exp.policy.kind());
    let mut arc = simulate(&exp.system, &exp.policy, &exp.init, &exp.sim, &exp.pert)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    debug!("{} samples, {} events", arc.samples.len(), arc.events.len());
    let opts = AuditOptions {
        radius: exp.sim.convergence_radius,
        event_tol: exp.sim.event_tol,
        ..AuditOptions::default()
    };
    let audit = find_lambda(&arc, &exp.monitor, &opts, exp.monitor.lambda);
    let monitor = exp.monitor.with_lambda(audit.lambda);
    annotate_w(&mut arc, &monitor, "W");
    let (decay, decay_note) = match fit_decay(&arc, exp.sim.convergence_radius) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let last = arc.final_sample();
    let summary = RunSummary {
        tool: TOOL.into(),
        version: VERSION.into(),
        name: exp.name.clone(),
        policy: exp.policy.kind().into(),
        termination: arc.termination,
        converged: arc.converged(),
        final_t: last.t,
        final_j: last.j,
        final_distance: last.dist,
        final_x_norm: norm(&last.state.x),
        final_eta_norm: last.state.eta().map(|e| norm(&e)),
        samples: arc.samples.len(),
        stats: transmission_stats(&arc),
        decay,
        decay_note,
        audit,
        config: cfg.clone(),
    };
    Ok((exp, arc, summary))
}

pub fn cmd_run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput, CliError> {
    let (exp, arc, summary) = execute(cfg)?;
    let files = match out {
        Some(dir) => write_artifacts(dir, &exp, &arc, &summary)?,
        None => Vec::new(),
    };
    Ok(RunOutput {
        summary,
        arc,
        files,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_artifacts(
    dir: &Path,
    exp: &Experiment,
    arc: &HybridArc,
    summary: &RunSummary,
) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let mut files = Vec::new();
    let out = &exp.outputs;
    if out.trace {
        let (path, bytes) = match out.format {
            TraceFormat::Csv => (dir.join("trace.csv"), trace_csv(arc, exp).into_bytes()),
            TraceFormat::Json => (
                dir.join("trace.json"),
                serde_json::to_vec_pretty(arc).map_err(|e| CliError::Runtime(e.to_string()))?,
            ),
        };
        write_file(&path, &bytes)?;
        files.push(path);
    }
    if out.summary {
        let path = dir.join("summary.json");
        let bytes =
            serde_json::to_vec_pretty(summary).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(&path, &bytes)?;
        files.push(path);
    }
    if out.plots {
        files.extend(write_plots(&dir.join("plots"), arc)?);
    }
    Ok(files)
}

/// Scientific notation with 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(arc: &HybridArc, exp: &Experiment) -> Vec<String> {
    let n = exp.cascade.n();
    let mut cols = vec!["t".to_string(), "j".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    if exp.system.observer().is_some() {
        cols.extend((1..=n).map(|i| format!("xhat{i}")));
    }
    cols.extend((1..=arc.sensors).map(|i| format!("e{i}")));
    cols.extend((1..=arc.timers).map(|i| format!("tau{i}")));
    cols.extend((1..=arc.sensors).map(|i| format!("nu{i}")));
    cols.extend(["W", "dist", "event", "sensors"].map(String::from));
    cols
}

pub fn trace_csv(arc: &HybridArc, exp: &Experiment) -> String {
    let mut out = trace_header(arc, exp).join(",");
    out.push('\n');
    let mut events = arc.events.iter().peekable();
    for s in &arc.samples {
        let ev = events.next_if(|e| e.j == s.j && e.t == s.t);
        let mut row = vec![num(s.t), s.j.to_string()];
        row.extend(s.state.x.iter().map(|v| num(*v)));
        if let Some(xh) = &s.state.xhat {
            row.extend(xh.iter().map(|v| num(*v)));
        }
        row.extend(s.state.e.iter().map(|v| num(*v)));
        row.extend(s.state.tau.iter().map(|v| num(*v)));
        row.extend(s.state.nu(&exp.cascade).iter().map(|v| num(*v)));
        row.push(s.monitors.get("W").map_or_else(String::new, |w| num(*w)));
        row.push(num(s.dist));
        let (flag, mask) = match ev {
            Some(e) => {
                let mask: String = (0..arc.sensors)
                    .map(|i| if e.sensors.contains(&i) { '1' } else { '0' })
                    .collect();
                (1, mask)
            }
            None => (0, "0".repeat(arc.sensors)),
        };
        row.push(flag.to_string());
        row.push(mask);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_plots(dir: &Path, arc: &HybridArc) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let series = plot_series(arc);
    let mut files = Vec::new();
    for (name, pts) in &series {
        let path = dir.join(format!("{name}.dat"));
        let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut body = String::with_capacity(pts.len() * 48);
        body.push_str(&format!("# t {name}\n"));
        for (t, v) in pts {
            body.push_str(&format!("{} {}\n", num(*t), num(*v)));
        }
        f.write_all(body.as_bytes())
            .map_err(|e| CliError::io(&path, e))?;
        files.push(path);
    }
    let path = dir.join("layout.gp");
    let mut gp = String::from(
        "# gnuplot layout hint: one panel per signal group\nset multiplot layout 2,2\n",
    );
    for group in ["x", "e", "tau", "dist"] {
        let members: Vec<_> = series
            .keys()
            .filter(|k| k.starts_with(group) && !(group == "x" && k.starts_with("xhat")))
            .map(|k| format!("'{k}.dat' using 1:2 with lines title '{k}'"))
            .collect();
        if !members.is_empty() {
            gp.push_str(&format!(
                "set title '{group}'\nplot {}\n",
                members.join(", ")
            ));
        }
    }
    gp.push_str("unset multiplot\n");
    write_file(&path, gp.as_bytes())?;
    files.push(path);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub table: ComparisonTable,
    pub summaries: Vec<RunSummary>,
}

/// Runs every config (concurrently when built with `parallel`) and compares.
pub fn cmd_compare(
    cfgs: &[ExperimentConfig],
    out: Option<&Path>,
) -> Result<CompareOutput, CliError> {
    for cfg in cfgs {
        build(cfg)?;
    }
    let results = lazylink::batch::map(cfgs, execute);
    let mut runs = Vec::with_capacity(cfgs.len());
    for r in results {
        runs.push(r?);
    }
    let labels = unique_labels(cfgs);
    let pairs: Vec<(String, &HybridArc)> = labels
        .iter()
        .cloned()
        .zip(runs.iter().map(|r| &r.1))
        .collect();
    let radius = cfgs.first().map_or(0.0, |c| c.sim.convergence_radius);
    let table = compare_runs(&pairs, radius);
    if let Some(dir) = out {
        for (label, (exp, arc, summary)) in labels.iter().zip(&runs) {
            write_artifacts(&dir.join(label), exp, arc, summary)?;
        }
        write_file(&dir.join("compare.txt"), table.render_text().as_bytes())?;
        let bytes =
            serde_json::to_vec_pretty(&table).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(&dir.join("compare.json"), &bytes)?;
    }
    Ok(CompareOutput {
        table,
        summaries: runs.into_iter().map(|r| r.2).collect(),
    })
}

/// Config names, suffixed where repeated so per-run directories never clash.
fn unique_labels(cfgs: &[ExperimentConfig]) -> Vec<String> {
    let mut labels = Vec::with_capacity(cfgs.len());
    for (i, c) in cfgs.iter().enumerate() {
        let repeats = cfgs.iter().filter(|o| o.name == c.name).count() > 1;
        labels.push(if repeats {
            format!("{}-{}", c.name, i + 1)
        } else {
            c.name.clone()
        });
    }
    labels
}
