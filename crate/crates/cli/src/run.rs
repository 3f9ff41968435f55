//! Experiment runners: dispatch, the exit-code contract, and per-experiment
//! CSV and metadata emission.

use std::time::Instant;

use serde_json::{json, Value};

use catsim_core::analysis::{exchange_study, wigner_ket, GridSpec, RotationSense, StudyOptions};
use catsim_core::dynamics::{
    analytic_cluster2_with_tol, analytic_cluster3_with_tol, ideal_cluster2_with_tol,
    ideal_cluster3_with_tol, CrossKerrParams, ExchangeModelParams, UnitConvention,
};
use catsim_core::hilbert::{fidelity_pure, reduced_density_from_ket, Ket};
use catsim_core::mbqc::{
    run_logical_protocol, sample_logical_protocol, verify_protocol, ProtocolAngles,
    ProtocolOptions, ProtocolRecord,
};
use catsim_core::states::{cat_with_tol, coherent_with_tol, cv_qudit, CatQuditParams};
use catsim_core::{C64, SimError};

use crate::config::{plan, RawConfig, RunPlan, WignerState};
use crate::output::{fmt, Csv, OutputSet};
use crate::Cli;

/// Failures during a run: simulator errors carry the exit-code contract,
/// output I/O failures exit 1.
enum RunError {
    Sim(SimError),
    Io(std::io::Error),
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        RunError::Sim(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Exit code for a simulator error: argument/shape problems are validation
/// failures (2), everything numerical or truncation-related is 3.
fn sim_exit_code(err: &SimError) -> i32 {
    match err {
        SimError::InvalidDimension(_)
        | SimError::SignatureMismatch(_)
        | SimError::InvalidArgument(_) => 2,
        SimError::PropertyViolation(_)
        | SimError::Truncation(_)
        | SimError::Numerical(_)
        | SimError::ZeroVector(_)
        | SimError::NoOutcome(_) => 3,
    }
}

/// Applies the `CATSIM_THREADS` cap to the global worker pool and reports
/// the effective width.
fn init_threads() -> usize {
    if let Ok(raw) = std::env::var("CATSIM_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    rayon::current_num_threads()
}

/// Folds per-experiment metadata into the common record.
fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
    base
}

/// Parses, validates, runs, and writes one experiment; returns the process
/// exit code.
pub fn run(cli: &Cli) -> i32 {
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", cli.config.display());
            return 2;
        }
    };
    let raw: RawConfig = match toml::from_str(&text) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let (run_plan, prefix, seed) = match plan(cli.experiment, &raw, cli.seed, cli.out.as_deref()) {
        Ok(resolved) => resolved,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return 2;
        }
    };
    let threads = init_threads();
    let mut outputs = match OutputSet::new(&prefix) {
        Ok(outputs) => outputs,
        Err(e) => {
            eprintln!("output error: cannot prepare prefix `{prefix}`: {e}");
            return 1;
        }
    };
    let start = Instant::now();
    match execute(&run_plan, seed, &mut outputs) {
        Ok(extra) => {
            let meta = merge(
                json!({
                    "tool": "catsim",
                    "version": env!("CARGO_PKG_VERSION"),
                    "experiment": cli.experiment.name(),
                    "config": serde_json::to_value(&raw).unwrap_or_default(),
                    "seed": seed,
                    "threads": threads,
                    "wall_time_s": start.elapsed().as_secs_f64(),
                    "outputs": outputs.names(),
                }),
                extra,
            );
            match outputs.write_json("metadata.json", &meta) {
                Ok(_) => 0,
                Err(e) => {
                    eprintln!("output error: {e}");
                    outputs.discard();
                    1
                }
            }
        }
        Err(RunError::Sim(e)) => {
            eprintln!("run error: {e}");
            outputs.discard();
            sim_exit_code(&e)
        }
        Err(RunError::Io(e)) => {
            eprintln!("output error: {e}");
            outputs.discard();
            1
        }
    }
}

fn execute(plan: &RunPlan, seed: Option<u64>, out: &mut OutputSet) -> Result<Value, RunError> {
    match plan {
        RunPlan::Ideal2 {
            alpha,
            d,
            dim,
            state_tail_tol,
            evolve_tail_tol,
        } => run_ideal2(*alpha, *d, *dim, *state_tail_tol, *evolve_tail_tol, out),
        RunPlan::Ideal3 {
            alpha,
            dim,
            state_tail_tol,
            evolve_tail_tol,
        } => run_ideal3(*alpha, *dim, *state_tail_tol, *evolve_tail_tol, out),
        RunPlan::Mbqc {
            alpha,
            dim,
            angles,
            state_tail_tol,
            evolve_tail_tol,
        } => run_mbqc(
            *alpha,
            *dim,
            angles,
            *state_tail_tol,
            *evolve_tail_tol,
            seed,
            out,
        ),
        RunPlan::Jc { params, opts } => run_jc(params, opts, out),
        RunPlan::Wigner {
            state,
            state_tail_tol,
            spec,
        } => run_wigner(state, *state_tail_tol, spec, out),
    }
}

/// Cross-Kerr cluster generation runs at unit coupling rate, so reported
/// times are in units of the inverse rate.
fn unit_rate2() -> CrossKerrParams {
    CrossKerrParams::new(1.0).expect("unit rate is valid")
}

fn run_ideal2(
    alpha: f64,
    d: usize,
    dim: usize,
    state_tol: f64,
    evolve_tol: f64,
    out: &mut OutputSet,
) -> Result<Value, RunError> {
    let params = unit_rate2();
    let evolved = ideal_cluster2_with_tol(alpha, d, &params, dim, state_tol, evolve_tol)?;
    let target = analytic_cluster2_with_tol(alpha, d, dim, state_tol)?;
    let overlap = fidelity_pure(&target, &evolved)?;
    let boundary = evolved.boundary_occupancy();
    let mut csv = Csv::new("quantity,value");
    csv.row(&["overlap_with_closed_form".into(), fmt(overlap)]);
    csv.row(&[
        "generation_time".into(),
        fmt(params.revival_time() / d as f64),
    ]);
    for (m, occ) in boundary.iter().enumerate() {
        csv.row(&[format!("boundary_occupancy_mode{m}"), fmt(*occ)]);
    }
    out.write("summary.csv", &csv.finish())?;
    Ok(json!({
        "resolved": {
            "alpha": alpha, "d": d, "dim": dim,
            "state_tail_tol": state_tol, "evolve_tail_tol": evolve_tol,
        },
        "truncation": { "boundary_occupancy": boundary },
        "overlap_with_closed_form": overlap,
    }))
}

fn run_ideal3(
    alpha: f64,
    dim: usize,
    state_tol: f64,
    evolve_tol: f64,
    out: &mut OutputSet,
) -> Result<Value, RunError> {
    let params = CrossKerrParams::chain(1.0, 1.0)?;
    let evolved = ideal_cluster3_with_tol(alpha, &params, dim, state_tol, evolve_tol)?;
    let target = analytic_cluster3_with_tol(alpha, dim, state_tol)?;
    let overlap = fidelity_pure(&target, &evolved)?;
    let purity = reduced_density_from_ket(&evolved, &[1])?.purity();
    let boundary = evolved.boundary_occupancy();
    let mut csv = Csv::new("quantity,value");
    csv.row(&["overlap_with_closed_form".into(), fmt(overlap)]);
    csv.row(&["reduced_middle_purity".into(), fmt(purity)]);
    csv.row(&[
        "generation_time".into(),
        fmt(params.revival_time() / 4.0),
    ]);
    for (m, occ) in boundary.iter().enumerate() {
        csv.row(&[format!("boundary_occupancy_mode{m}"), fmt(*occ)]);
    }
    out.write("summary.csv", &csv.finish())?;
    Ok(json!({
        "resolved": {
            "alpha": alpha, "dim": dim,
            "state_tail_tol": state_tol, "evolve_tail_tol": evolve_tol,
        },
        "truncation": { "boundary_occupancy": boundary },
        "overlap_with_closed_form": overlap,
        "reduced_middle_purity": purity,
    }))
}

fn record_cells(record: &ProtocolRecord) -> Vec<String> {
    vec![
        record.parity_b.to_string(),
        record.parity_a.to_string(),
        record.coherent_c.label().to_string(),
        fmt(record.prob),
        fmt(record.overlap),
        record.expected_gate.name().to_string(),
    ]
}

const PROTOCOL_HEADER: &str = "parity_b,parity_a,coherent_c,probability,overlap,expected_gate";

fn run_mbqc(
    alpha: f64,
    dim: usize,
    angles: &ProtocolAngles,
    state_tol: f64,
    evolve_tol: f64,
    seed: Option<u64>,
    out: &mut OutputSet,
) -> Result<Value, RunError> {
    let mut opts = ProtocolOptions::new(dim);
    opts.state_tail_tol = state_tol;
    opts.evolve_tail_tol = evolve_tol;
    let records = run_logical_protocol(alpha, angles, &opts)?;
    let mut csv = Csv::new(PROTOCOL_HEADER);
    let mut max_boundary = 0.0_f64;
    for record in &records {
        csv.row(&record_cells(record));
        max_boundary = max_boundary.max(record.b_state.boundary_occupancy()[0]);
    }
    out.write("protocol.csv", &csv.finish())?;
    let report = verify_protocol(&records);
    let mut summary = Csv::new("quantity,value");
    summary.row(&["branch_count".into(), format!("{}", records.len())]);
    summary.row(&["total_probability".into(), fmt(report.total_prob)]);
    summary.row(&["min_overlap".into(), fmt(report.min_overlap)]);
    summary.row(&["mean_overlap".into(), fmt(report.mean_overlap)]);
    out.write("summary.csv", &summary.finish())?;
    if let Some(seed) = seed {
        let sampled = sample_logical_protocol(alpha, angles, &opts, seed)?;
        let mut csv = Csv::new(PROTOCOL_HEADER);
        csv.row(&record_cells(&sampled));
        out.write("sample.csv", &csv.finish())?;
    }
    Ok(json!({
        "resolved": {
            "alpha": alpha, "dim": dim,
            "theta1": angles.theta1, "theta2": angles.theta2,
            "state_tail_tol": state_tol, "evolve_tail_tol": evolve_tol,
        },
        "truncation": { "max_branch_boundary_occupancy": max_boundary },
        "total_probability": report.total_prob,
        "min_overlap": report.min_overlap,
        "mean_overlap": report.mean_overlap,
    }))
}

fn convention_label(convention: UnitConvention) -> &'static str {
    match convention {
        UnitConvention::Plain => "plain",
        UnitConvention::Angular => "angular",
    }
}

fn sense_label(sense: RotationSense) -> &'static str {
    match sense {
        RotationSense::CounterClockwise => "counterclockwise",
        RotationSense::Clockwise => "clockwise",
    }
}

fn run_jc(
    params: &ExchangeModelParams,
    opts: &StudyOptions,
    out: &mut OutputSet,
) -> Result<Value, RunError> {
    let study = exchange_study(params, opts)?;
    let mut traj = Csv::new("time,re_aA,im_aA,re_aB,im_aB,nM");
    for i in 0..study.trajectory.times.len() {
        traj.row(&[
            fmt(study.trajectory.times[i]),
            fmt(study.trajectory.a_a[i].re),
            fmt(study.trajectory.a_a[i].im),
            fmt(study.trajectory.a_b[i].re),
            fmt(study.trajectory.a_b[i].im),
            fmt(study.trajectory.n_m[i]),
        ]);
    }
    out.write("trajectory.csv", &traj.finish())?;
    let mut curve = Csv::new("time,fidelity");
    for (t, f) in study
        .fidelity_curve
        .times
        .iter()
        .zip(study.fidelity_curve.fidelities.iter())
    {
        curve.row(&[fmt(*t), fmt(*f)]);
    }
    out.write("fidelity.csv", &curve.finish())?;
    let mut summary = Csv::new("quantity,value");
    summary.row(&["revival_time_us".into(), fmt(study.revival.time)]);
    summary.row(&["revival_magnitude".into(), fmt(study.revival.value)]);
    summary.row(&["gate_time_us".into(), fmt(study.gate_time)]);
    summary.row(&["gate_fidelity".into(), fmt(study.gate_fidelity)]);
    summary.row(&["gate_time_fraction".into(), fmt(study.gate_time_fraction)]);
    summary.row(&[
        "max_transmon_occupation".into(),
        fmt(study.max_transmon_occupation),
    ]);
    summary.row(&["cavity_alignment_rad".into(), fmt(study.cavity_alignment)]);
    summary.row(&["cavity_curvature_rad".into(), fmt(study.cavity_curvature)]);
    summary.row(&["qudit_alignment_rad".into(), fmt(study.qudit_alignment)]);
    summary.row(&["qudit_curvature_rad".into(), fmt(study.qudit_curvature)]);
    for outcome in &study.fock_outcomes {
        summary.row(&[
            format!("fock_{}_probability", outcome.outcome),
            fmt(outcome.prob),
        ]);
        summary.row(&[
            format!("fock_{}_fidelity", outcome.outcome),
            fmt(outcome.fidelity),
        ]);
    }
    out.write("summary.csv", &summary.finish())?;
    Ok(json!({
        "resolved": {
            "alpha": opts.alpha,
            "dim_a": opts.dim_a, "dim_b": opts.dim_b,
            "transmon_levels": params.transmon_levels,
            "expected_revival": opts.expected_revival,
            "coarse_points": opts.coarse_points,
            "trajectory_points": opts.trajectory_points,
            "snapshot_count": opts.snapshot_count,
        },
        "unit_convention": convention_label(study.convention),
        "rotation_sense": sense_label(study.rotation_sense),
        "truncation": { "max_boundary_occupancy": study.trajectory.max_boundary },
        "revival_time_us": study.revival.time,
        "gate_time_us": study.gate_time,
        "gate_fidelity": study.gate_fidelity,
    }))
}

fn build_wigner_state(state: &WignerState, tail_tol: f64) -> Result<(Ket, String), SimError> {
    match *state {
        WignerState::Vacuum { dim } => Ok((
            coherent_with_tol(C64::new(0.0, 0.0), dim, tail_tol)?,
            "vacuum".into(),
        )),
        WignerState::Coherent { alpha, dim } => Ok((
            coherent_with_tol(C64::from(alpha), dim, tail_tol)?,
            format!("coherent alpha={alpha}"),
        )),
        WignerState::Cat { alpha, parity, dim } => Ok((
            cat_with_tol(alpha, parity, dim, tail_tol)?,
            format!("cat-{parity} alpha={alpha}"),
        )),
        WignerState::Qudit { alpha, k, dim } => {
            let params = CatQuditParams::new(alpha, dim)?.with_tail_tol(tail_tol);
            Ok((cv_qudit(k, &params)?, format!("qudit-{k} alpha={alpha}")))
        }
    }
}

fn run_wigner(
    state: &WignerState,
    tail_tol: f64,
    spec: &GridSpec,
    out: &mut OutputSet,
) -> Result<Value, RunError> {
    let (ket, label) = build_wigner_state(state, tail_tol)?;
    let grid = wigner_ket(&ket, spec)?;
    let mut csv = Csv::with_comments(
        &[
            "W(x + i p) from the displaced-parity form W(beta) = (2/pi) Tr[D(beta)^H rho D(beta) PI].",
            "Normalization: integral of W over dx dp is 1; vacuum W(0) = 2/pi. Quadrature scale: <X> = sqrt(2) x.",
        ],
        "x,p,w",
    );
    let xs = spec.xs();
    let ps = spec.ps();
    for (c, x) in xs.iter().enumerate() {
        for (r, p) in ps.iter().enumerate() {
            csv.row(&[fmt(*x), fmt(*p), fmt(grid.values[(r, c)])]);
        }
    }
    out.write("wigner.csv", &csv.finish())?;
    let (peak_x, peak_p, peak_w) = grid.peak();
    let mut summary = Csv::new("quantity,value");
    summary.row(&["integral".into(), fmt(grid.integral())]);
    summary.row(&["peak_x".into(), fmt(peak_x)]);
    summary.row(&["peak_p".into(), fmt(peak_p)]);
    summary.row(&["peak_w".into(), fmt(peak_w)]);
    out.write("summary.csv", &summary.finish())?;
    let (x_min, x_max) = spec.x_range();
    let (p_min, p_max) = spec.p_range();
    Ok(json!({
        "resolved": {
            "state": label,
            "dim": ket.space().total_dim(),
            "x_range": [x_min, x_max],
            "p_range": [p_min, p_max],
            "resolution": spec.resolution(),
            "state_tail_tol": tail_tol,
        },
        "truncation": { "boundary_occupancy": ket.boundary_occupancy() },
        "integral": grid.integral(),
    }))
}
