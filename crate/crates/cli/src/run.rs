//! Scenario dispatch, report emission and the exit-code contract.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use shocklab_core::functionals::{
    decay_fit, format_float, rows_to_csv, shift_bound_check, DecayFit, ShiftBoundReport,
};
use shocklab_core::poincare::{poincare_battery, BatteryReport};
use shocklab_core::solver::{convergence_study, ConvergenceReport, StepMonitor, MP_WARNING};
use shocklab_core::{
    build_profile, run, sweep, CertificateReport, DiagnosticsRow, Error, Execution, ShockParams, ShockProfile,
    VERSION,
};

use crate::config::{ConfigError, Format, Mode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Smallest steady-residual order the convergence mode accepts.
pub const MIN_CONVERGENCE_ORDER: f64 = 1.9;

/// Anything that ends a scenario with a non-zero exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl Failure {
    pub fn config(e: &ConfigError) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "ConfigError".into(),
            message: e.to_string(),
            detail: (!e.field.is_empty()).then(|| json!({ "field": e.field })),
        }
    }

    fn check(kind: &str, message: String) -> Self {
        Self {
            code: EXIT_CHECK,
            kind: kind.into(),
            message,
            detail: None,
        }
    }

    fn io(what: &str, path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "OutputError".into(),
            message: format!("cannot {what} {}: {e}", path.display()),
            detail: None,
        }
    }

    /// The JSON error record written to stderr and to `error.json`.
    pub fn record(&self, mode: Option<Mode>) -> Value {
        let mut v = json!({
            "version": VERSION,
            "mode": mode.map(Mode::name),
            "exit_code": self.code,
            "error": self.kind,
            "message": self.message,
        });
        if let Some(d) = &self.detail {
            v["detail"] = d.clone();
        }
        v
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else {
            match e {
                Error::CertificationFailed { .. } | Error::BatteryFailure { .. } => EXIT_CHECK,
                Error::InvalidParams(_)
                | Error::InvalidGrid(_)
                | Error::DegenerateStates(_)
                | Error::EmptyInput(_)
                | Error::InsufficientSpan { .. } => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            }
        };
        let detail = match &e {
            Error::BatteryFailure { witness, gap } => Some(json!({ "gap": gap, "witness": witness })),
            _ => None,
        };
        Self {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
            detail,
        }
    }
}

/// Result of one scenario.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
    pub failure: Option<Failure>,
}

/// Files a mode produced, plus an optional post-run check failure.
struct Produced {
    files: Vec<(&'static str, String)>,
    summary: Vec<String>,
    check: Option<Failure>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    version: &'static str,
    mode: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn report_json<T: Serialize>(config: &RunConfig, result: T) -> String {
    let report = Report {
        version: VERSION,
        mode: config.mode().name(),
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    text
}

/// Runs a validated configuration, writes its outputs and returns the exit
/// code. Failures also leave `error.json` in the output directory.
pub fn run_scenario(config: &RunConfig) -> Outcome {
    let dir = &config.output.directory;
    let result = fs::create_dir_all(dir)
        .map_err(|e| Failure::io("create", dir, e))
        .and_then(|()| produce(config));
    let failure = match result {
        Ok(produced) => {
            let written = produced.files.iter().try_for_each(|(name, body)| {
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| Failure::io("write", &path, e))
            });
            match written {
                Err(f) => Some(f),
                Ok(()) => {
                    if let Some(check) = produced.check {
                        write_error(dir, config.mode, &check);
                        return Outcome {
                            code: check.code,
                            summary: produced.summary,
                            failure: Some(check),
                        };
                    }
                    return Outcome {
                        code: EXIT_OK,
                        summary: produced.summary,
                        failure: None,
                    };
                }
            }
        }
        Err(f) => Some(f),
    };
    let failure = failure.expect("failure branch");
    write_error(dir, config.mode, &failure);
    Outcome {
        code: failure.code,
        summary: Vec::new(),
        failure: Some(failure),
    }
}

fn write_error(dir: &Path, mode: Option<Mode>, failure: &Failure) {
    if dir.is_dir() {
        let mut text = serde_json::to_string_pretty(&failure.record(mode)).expect("records serialize");
        text.push('\n');
        // The record also goes to stderr, so a failed write here loses nothing.
        let _ = fs::write(dir.join("error.json"), text);
    }
}

fn produce(config: &RunConfig) -> Result<Produced, Failure> {
    match config.mode() {
        Mode::Profile => profile_mode(config),
        Mode::Certify => certify_mode(config),
        Mode::Simulate => simulate_mode(config, false),
        Mode::Decay => simulate_mode(config, true),
        Mode::Poincare => poincare_mode(config),
        Mode::Convergence => convergence_mode(config),
    }
}

fn build(config: &RunConfig) -> Result<ShockProfile, Failure> {
    let params = config.shock_params().map_err(|e| Failure::config(&e))?;
    let (m, delta) = config.profile_options().map_err(|e| Failure::config(&e))?;
    Ok(build_profile(&params, m, delta)?)
}

#[derive(Serialize)]
struct ProfileSummary {
    params: ShockParams,
    lambda_minus: f64,
    lambda_plus: f64,
    table_len: usize,
    table_range: (f64, f64),
    ode_residual: f64,
    /// Abscissae beyond which `|U - u_pm| < 1e-10`.
    far_field_reach: (f64, f64),
    recommended_half_length: f64,
}

fn profile_mode(config: &RunConfig) -> Result<Produced, Failure> {
    let prof = build(config)?;
    let mut files = Vec::new();
    if config.output.wants(Format::Csv) {
        let mut csv = String::from("xi,U,Uxi\n");
        for r in prof.rows() {
            let _ = writeln!(csv, "{},{},{}", format_float(r.xi), format_float(r.u), format_float(r.uxi));
        }
        files.push(("profile.csv", csv));
    }
    let summary = ProfileSummary {
        params: prof.params,
        lambda_minus: prof.lambda_minus,
        lambda_plus: prof.lambda_plus,
        table_len: prof.table_len(),
        table_range: prof.table_range(),
        ode_residual: prof.ode_residual,
        far_field_reach: prof.far_field_reach(1e-10),
        recommended_half_length: prof.recommended_half_length(config.x0),
    };
    let lines = vec![format!(
        "profile p={} ({}, {}): {} nodes on [{:.3}, {:.3}], s={}",
        prof.params.p,
        prof.params.u_minus,
        prof.params.u_plus,
        summary.table_len,
        summary.table_range.0,
        summary.table_range.1,
        prof.params.s
    )];
    if config.output.wants(Format::Json) {
        files.push(("profile.json", report_json(config, &summary)));
    }
    Ok(Produced {
        files,
        summary: lines,
        check: None,
    })
}

#[derive(Serialize)]
struct CertifySummary<'a> {
    pairs: &'a [(f64, f64)],
    all_pass: bool,
    failures_within_hypotheses: usize,
    reports: &'a [CertificateReport],
    failures: &'a [shocklab_core::certifier::SweepFailure],
}

fn certify_mode(config: &RunConfig) -> Result<Produced, Failure> {
    let pairs = config.certifier_pairs().map_err(|e| Failure::config(&e))?;
    let c = &config.certifier;
    let outcome = sweep(&c.p_list, &pairs, c.n, c.allow_outside_hypotheses, Execution::Auto)?;
    let within = outcome.failures_within_hypotheses();
    let beta_min = outcome
        .reports
        .iter()
        .map(|r| r.beta)
        .fold(f64::INFINITY, f64::min);
    let lines = vec![format!(
        "certified {} of {} parameter sets; smallest beta {}",
        outcome.reports.len() - outcome.failures.len(),
        outcome.reports.len(),
        format_float(beta_min)
    )];
    let mut files = Vec::new();
    if config.output.wants(Format::Json) {
        let summary = CertifySummary {
            pairs: &pairs,
            all_pass: outcome.all_pass(),
            failures_within_hypotheses: within,
            reports: &outcome.reports,
            failures: &outcome.failures,
        };
        files.push(("certificates.json", report_json(config, &summary)));
    }
    let check = (within > 0).then(|| {
        let f = outcome.failures.iter().find(|f| f.in_hypotheses).expect("counted");
        let mut failure = Failure::check(
            "CertificationFailed",
            format!(
                "{within} certificate(s) failed inside the hypotheses; first: p = {}, ({}, {}): {} at U = {}",
                f.p, f.u_minus, f.u_plus, f.reason, f.witness
            ),
        );
        failure.detail = Some(serde_json::to_value(&outcome.failures).expect("failures serialize"));
        failure
    });
    Ok(Produced {
        files,
        summary: lines,
        check,
    })
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    params: ShockParams,
    grid: shocklab_core::Grid,
    monitor: &'a StepMonitor,
    warnings: &'a [String],
    initial_h1_norm: f64,
    final_row: &'a DiagnosticsRow,
    shift_rate_constant: f64,
    shift_bound: &'a ShiftBoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay: Option<DecaySummary>,
}

#[derive(Serialize)]
struct DecaySummary {
    fit: DecayFit,
    /// `||phi(1)||_{L2}`.
    l2_at_one: f64,
    /// `sup_{t >= 1} t^(1/4) ||phi(t)||_{L2} / ||phi(1)||_{L2}`.
    sup_scaled_ratio: f64,
}

fn simulate_mode(config: &RunConfig, decay: bool) -> Result<Produced, Failure> {
    let prof = build(config)?;
    let solver_config = config.solver_config().map_err(|e| Failure::config(&e))?;
    let traj = run(&prof, &solver_config)?;
    let bound = shift_bound_check(&traj, &prof)?;
    let decay_summary = if decay {
        let fit = decay_fit(&traj)?;
        let l2_at_one = traj
            .rows
            .iter()
            .find(|r| r.t >= 1.0)
            .map(|r| r.l2)
            .unwrap_or(f64::NAN);
        Some(DecaySummary {
            fit,
            l2_at_one,
            sup_scaled_ratio: fit.sup_scaled / l2_at_one,
        })
    } else {
        None
    };
    let last = traj.final_row();
    let m = &traj.monitor;
    let mut lines = vec![
        format!(
            "t = {}: X = {}, E_a = {}, |phi|_inf = {}",
            format_float(last.t),
            format_float(last.x),
            format_float(last.e_a),
            format_float(last.linf)
        ),
        format!(
            "{} steps; largest E_a increase {}; monotonicity breaks {}",
            m.steps,
            format_float(m.max_positive_increment),
            m.monotonicity_breaks
        ),
    ];
    if let Some(d) = &decay_summary {
        lines.push(match d.fit.c_star {
            Some(c) => format!("decay constant C* = {}, margin {}", format_float(c), format_float(d.fit.margin)),
            None => "no finite decay constant fits the samples".into(),
        });
    }
    lines.extend(traj.warnings.iter().map(|w| format!("warning: {w}")));

    let mut problems = Vec::new();
    if m.monotonicity_breaks > 0 {
        problems.push(format!("E_a increased beyond tolerance on {} step(s)", m.monotonicity_breaks));
    }
    if m.shift_bound_breaks > 0 {
        problems.push(format!("shift-rate bound failed on {} step(s)", m.shift_bound_breaks));
    }
    if m.max_mp_violation > MP_WARNING {
        problems.push(format!("maximum principle exceeded by {}", format_float(m.max_mp_violation)));
    }
    if !bound.all_hold {
        problems.push("shift displacement bound failed at a snapshot".into());
    }
    if let Some(d) = &decay_summary {
        if d.fit.c_star.is_none() || d.fit.margin > 0.0 {
            problems.push("decay bound does not hold with a finite constant".into());
        }
    }

    let mut files = Vec::new();
    if config.output.wants(Format::Csv) {
        files.push(("timeseries.csv", rows_to_csv(&traj.rows)));
    }
    if config.output.wants(Format::Json) {
        let summary = SimulateSummary {
            params: traj.params,
            grid: solver_config.grid,
            monitor: m,
            warnings: &traj.warnings,
            initial_h1_norm: traj.initial_h1_norm,
            final_row: last,
            shift_rate_constant: 4.0 * prof.weights.bounds(1025).a_max / prof.params.width(),
            shift_bound: &bound,
            decay: decay_summary,
        };
        let name = if decay { "decay.json" } else { "summary.json" };
        files.push((name, report_json(config, &summary)));
    }
    let check = (!problems.is_empty()).then(|| Failure::check("MonitorFailure", problems.join("; ")));
    Ok(Produced {
        files,
        summary: lines,
        check,
    })
}

fn poincare_mode(config: &RunConfig) -> Result<Produced, Failure> {
    let p = &config.poincare;
    let report: BatteryReport = poincare_battery(p.count, p.seed, p.points, Execution::Auto)?;
    let lines = vec![format!(
        "{} functions, min gap {} (case {}), {} near equality",
        report.count,
        format_float(report.min_gap),
        report.min_gap_index,
        report.near_equality.len()
    )];
    let mut files = Vec::new();
    if config.output.wants(Format::Json) {
        files.push(("poincare.json", report_json(config, &report)));
    }
    Ok(Produced {
        files,
        summary: lines,
        check: None,
    })
}

fn convergence_mode(config: &RunConfig) -> Result<Produced, Failure> {
    let prof = build(config)?;
    let c = &config.convergence;
    let report: ConvergenceReport = convergence_study(&prof, c.half_length, &c.dx, c.stabilizer)?;
    let mut lines: Vec<String> = report
        .dx
        .iter()
        .zip(&report.residual)
        .map(|(dx, r)| format!("dx = {dx}: residual {}", format_float(*r)))
        .collect();
    lines.push(format!(
        "orders: {}",
        report
            .orders
            .iter()
            .map(|o| format!("{o:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    let mut files = Vec::new();
    if config.output.wants(Format::Json) {
        files.push(("convergence.json", report_json(config, &report)));
    }
    let check = (!(report.min_order >= MIN_CONVERGENCE_ORDER)).then(|| {
        Failure::check(
            "ConvergenceOrder",
            format!(
                "measured order {:.4} is below {MIN_CONVERGENCE_ORDER}",
                report.min_order
            ),
        )
    });
    Ok(Produced {
        files,
        summary: lines,
        check,
    })
}

/// Reads `SHOCKLAB_THREADS`: unset or empty means no cap.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, ConfigError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ConfigError::new(
                "SHOCKLAB_THREADS",
                format!("expected a positive integer, got `{v}`"),
            )),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(thread_cap(None).unwrap(), None);
        assert_eq!(thread_cap(Some("")).unwrap(), None);
        assert_eq!(thread_cap(Some("4")).unwrap(), Some(4));
        assert!(thread_cap(Some("0")).is_err());
        assert!(thread_cap(Some("many")).is_err());
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let numerical: Failure = Error::NonFinite {
            t: 1.0,
            what: "shift".into(),
        }
        .into();
        assert_eq!(numerical.code, EXIT_NUMERICAL);
        assert_eq!(numerical.kind, "NonFinite");
        let wrapped: Failure = Error::StepFailed {
            t: 0.5,
            source: Box::new(Error::NonFinite {
                t: 0.5,
                what: "solution".into(),
            }),
        }
        .into();
        assert_eq!((wrapped.code, wrapped.kind.as_str()), (EXIT_NUMERICAL, "NonFinite"));
        let bad: Failure = Error::InvalidParams("x".into()).into();
        assert_eq!(bad.code, EXIT_CONFIG);
        let battery: Failure = Error::BatteryFailure {
            gap: -1.0,
            witness: "{}".into(),
        }
        .into();
        assert_eq!(battery.code, EXIT_CHECK);
    }
}
