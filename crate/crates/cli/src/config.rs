//! Run configuration: TOML schema, validation, and the resolved plan.
//!
//! Parsing is strict (unknown keys are rejected); semantic validation is
//! collected, so one failed run reports every offending field at once.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use catsim_core::analysis::{GridSpec, StudyOptions};
use catsim_core::dynamics::ExchangeModelParams;
use catsim_core::hilbert::DEFAULT_EVOLVE_TAIL_TOL;
use catsim_core::mbqc::ProtocolAngles;
use catsim_core::states::{default_truncation, Parity, DEFAULT_STATE_TAIL_TOL};

/// The experiment selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Two-mode cluster generation checked against its closed form.
    Ideal2,
    /// Three-mode chain cluster checked against its closed form.
    Ideal3,
    /// Logical measurement protocol with full branch enumeration.
    Mbqc,
    /// Calibrated exchange-model (two cavities + transmon) study.
    Jc,
    /// Wigner function of a configured single-mode state.
    Wigner,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ideal2 => "ideal2",
            Experiment::Ideal3 => "ideal3",
            Experiment::Mbqc => "mbqc",
            Experiment::Jc => "jc",
            Experiment::Wigner => "wigner",
        }
    }
}

/// Raw TOML schema. Every field is optional at parse time so semantic
/// validation can report all problems together; unknown keys fail the parse.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Optional echo of the experiment; must match the command when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Number-class count for `ideal2` (2 or 4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Per-mode Fock dimension; defaults to the gated truncation rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output path prefix; the `--out` flag overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Constructor tail-deficit gate (default 1e-8).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_tail_tol: Option<f64>,
    /// Evolved boundary-occupancy gate (default 1e-6).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolve_tail_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<AnglesSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jc: Option<JcSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wigner: Option<WignerSection>,
}

/// Measurement angles for the logical protocol.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesSection {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
}

/// Exchange-model parameters (GHz) and study controls.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct JcSection {
    pub omega_a: Option<f64>,
    pub omega_b: Option<f64>,
    pub omega_m: Option<f64>,
    pub lambda_am: Option<f64>,
    pub lambda_bm: Option<f64>,
    pub k_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmon_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_a: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim_b: Option<usize>,
    /// First-revival time the unit calibration aims for, in us.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_revival: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_count: Option<usize>,
}

/// Square phase-space window, centered on the origin.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Half-width of the window (default `alpha + 3`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Samples per axis (default 101).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
}

/// State selection for the `wigner` experiment.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    /// One of: vacuum, coherent, cat-even, cat-odd, qudit-0 .. qudit-3.
    pub state: Option<String>,
}

/// Single-mode state the `wigner` experiment renders.
#[derive(Clone, Copy, Debug)]
pub enum WignerState {
    Vacuum { dim: usize },
    Coherent { alpha: f64, dim: usize },
    Cat { alpha: f64, parity: Parity, dim: usize },
    Qudit { alpha: f64, k: usize, dim: usize },
}

/// Validated, fully resolved run plan.
#[derive(Clone, Debug)]
pub enum RunPlan {
    Ideal2 {
        alpha: f64,
        d: usize,
        dim: usize,
        state_tail_tol: f64,
        evolve_tail_tol: f64,
    },
    Ideal3 {
        alpha: f64,
        dim: usize,
        state_tail_tol: f64,
        evolve_tail_tol: f64,
    },
    Mbqc {
        alpha: f64,
        dim: usize,
        angles: ProtocolAngles,
        state_tail_tol: f64,
        evolve_tail_tol: f64,
    },
    Jc {
        params: ExchangeModelParams,
        opts: StudyOptions,
    },
    Wigner {
        state: WignerState,
        state_tail_tol: f64,
        spec: GridSpec,
    },
}

/// Collects a positive-and-finite check.
fn expect_positive(errors: &mut Vec<String>, field: &str, value: Option<f64>) -> Option<f64> {
    match value {
        Some(v) if v.is_finite() && v > 0.0 => Some(v),
        Some(v) => {
            errors.push(format!("{field}: must be positive and finite, got {v}"));
            None
        }
        None => None,
    }
}

fn expect_finite(errors: &mut Vec<String>, field: &str, value: Option<f64>) -> Option<f64> {
    match value {
        Some(v) if v.is_finite() => Some(v),
        Some(v) => {
            errors.push(format!("{field}: must be finite, got {v}"));
            None
        }
        None => None,
    }
}

fn require<T>(errors: &mut Vec<String>, field: &str, value: Option<T>) -> Option<T> {
    if value.is_none() {
        errors.push(format!("{field}: required for this experiment"));
    }
    value
}

/// Reports a missing field without re-flagging one that is present but
/// already failed its own value check.
fn require_present<T>(errors: &mut Vec<String>, field: &str, raw: &Option<T>) {
    if raw.is_none() {
        errors.push(format!("{field}: required for this experiment"));
    }
}

fn reject_section<T>(errors: &mut Vec<String>, field: &str, value: &Option<T>, used_by: &str) {
    if value.is_some() {
        errors.push(format!("{field}: only used by the {used_by} experiment"));
    }
}

/// Resolves the raw config against the selected experiment, collecting every
/// semantic error. Command-line `--seed`/`--out` override the config values.
pub fn plan(
    experiment: Experiment,
    raw: &RawConfig,
    cli_seed: Option<u64>,
    cli_out: Option<&str>,
) -> Result<(RunPlan, String, Option<u64>), Vec<String>> {
    let mut errors = Vec::new();
    if let Some(named) = &raw.experiment {
        if named != experiment.name() {
            errors.push(format!(
                "experiment: config names `{named}` but the command selected `{}`",
                experiment.name()
            ));
        }
    }
    let alpha = expect_positive(&mut errors, "alpha", raw.alpha);
    let state_tail_tol =
        expect_positive(&mut errors, "state_tail_tol", raw.state_tail_tol)
            .unwrap_or(DEFAULT_STATE_TAIL_TOL);
    let evolve_tail_tol =
        expect_positive(&mut errors, "evolve_tail_tol", raw.evolve_tail_tol)
            .unwrap_or(DEFAULT_EVOLVE_TAIL_TOL);
    if let Some(dim) = raw.dim {
        if dim < 2 {
            errors.push(format!("dim: must be at least 2, got {dim}"));
        }
    }
    // The truncation rule needs alpha; any reported alpha error substitutes
    // a placeholder so later checks still run and report their own fields.
    let dim_for = |alpha: Option<f64>, dim: Option<usize>| -> usize {
        dim.unwrap_or_else(|| default_truncation(alpha.unwrap_or(2.0)))
    };

    match experiment {
        Experiment::Ideal2 | Experiment::Ideal3 | Experiment::Mbqc => {
            reject_section(&mut errors, "jc", &raw.jc, "jc");
            reject_section(&mut errors, "grid", &raw.grid, "wigner");
            reject_section(&mut errors, "wigner", &raw.wigner, "wigner");
        }
        _ => {}
    }

    let plan = match experiment {
        Experiment::Ideal2 => {
            reject_section(&mut errors, "angles", &raw.angles, "mbqc");
            let d = raw.d.unwrap_or(4);
            if d != 2 && d != 4 {
                errors.push(format!("d: must be 2 or 4, got {d}"));
            }
            require_present(&mut errors, "alpha", &raw.alpha);
            RunPlan::Ideal2 {
                alpha: alpha.unwrap_or(2.0),
                d,
                dim: dim_for(alpha, raw.dim),
                state_tail_tol,
                evolve_tail_tol,
            }
        }
        Experiment::Ideal3 => {
            reject_section(&mut errors, "angles", &raw.angles, "mbqc");
            reject_section(&mut errors, "d", &raw.d, "ideal2");
            require_present(&mut errors, "alpha", &raw.alpha);
            RunPlan::Ideal3 {
                alpha: alpha.unwrap_or(2.0),
                dim: dim_for(alpha, raw.dim),
                state_tail_tol,
                evolve_tail_tol,
            }
        }
        Experiment::Mbqc => {
            reject_section(&mut errors, "d", &raw.d, "ideal2");
            require_present(&mut errors, "alpha", &raw.alpha);
            let section = require(&mut errors, "angles", raw.angles);
            let angles = section.and_then(|section| {
                let t1_present = require(&mut errors, "angles.theta1", section.theta1);
                let t1 = expect_finite(&mut errors, "angles.theta1", t1_present);
                let t2_present = require(&mut errors, "angles.theta2", section.theta2);
                let t2 = expect_finite(&mut errors, "angles.theta2", t2_present);
                Some(ProtocolAngles::new(t1?, t2?))
            });
            RunPlan::Mbqc {
                alpha: alpha.unwrap_or(2.0),
                dim: dim_for(alpha, raw.dim),
                angles: angles.unwrap_or(ProtocolAngles::new(0.0, 0.0)),
                state_tail_tol,
                evolve_tail_tol,
            }
        }
        Experiment::Jc => {
            reject_section(&mut errors, "angles", &raw.angles, "mbqc");
            reject_section(&mut errors, "d", &raw.d, "ideal2");
            reject_section(&mut errors, "grid", &raw.grid, "wigner");
            reject_section(&mut errors, "wigner", &raw.wigner, "wigner");
            if raw.dim.is_some() {
                errors.push("dim: jc cavities use jc.dim_a / jc.dim_b".into());
            }
            require_present(&mut errors, "alpha", &raw.alpha);
            let section = require(&mut errors, "jc", raw.jc);
            let (params, opts) = match section {
                Some(jc) => resolve_jc(&mut errors, alpha.unwrap_or(2.0), &jc),
                None => (
                    ExchangeModelParams::new(5.5, 8.5, 4.0, 0.12, 0.15, -0.6),
                    StudyOptions::new(alpha.unwrap_or(2.0)),
                ),
            };
            RunPlan::Jc { params, opts }
        }
        Experiment::Wigner => {
            reject_section(&mut errors, "angles", &raw.angles, "mbqc");
            reject_section(&mut errors, "d", &raw.d, "ideal2");
            reject_section(&mut errors, "jc", &raw.jc, "jc");
            let state = resolve_wigner_state(&mut errors, alpha, raw);
            let half_width = expect_positive(
                &mut errors,
                "grid.half_width",
                raw.grid.and_then(|g| g.half_width),
            )
            .unwrap_or(alpha.unwrap_or(0.0) + 3.0);
            let resolution = raw.grid.and_then(|g| g.resolution).unwrap_or(101);
            if resolution < 2 {
                errors.push(format!("grid.resolution: must be at least 2, got {resolution}"));
            }
            let spec = GridSpec::centered(half_width.max(0.1), resolution.max(2))
                .expect("centered grid construction is total for positive inputs");
            RunPlan::Wigner {
                state,
                state_tail_tol,
                spec,
            }
        }
    };

    if errors.is_empty() {
        let prefix = cli_out
            .map(str::to_string)
            .or_else(|| raw.out.clone())
            .unwrap_or_else(|| format!("{}_", experiment.name()));
        Ok((plan, prefix, cli_seed.or(raw.seed)))
    } else {
        Err(errors)
    }
}

fn resolve_jc(
    errors: &mut Vec<String>,
    alpha: f64,
    jc: &JcSection,
) -> (ExchangeModelParams, StudyOptions) {
    let mut field = |name: &str, value: Option<f64>| -> f64 {
        let present = require(errors, name, value);
        expect_finite(errors, name, present).unwrap_or(0.0)
    };
    let omega_a = field("jc.omega_a", jc.omega_a);
    let omega_b = field("jc.omega_b", jc.omega_b);
    let omega_m = field("jc.omega_m", jc.omega_m);
    let lambda_am = field("jc.lambda_am", jc.lambda_am);
    let lambda_bm = field("jc.lambda_bm", jc.lambda_bm);
    let k_m = field("jc.k_m", jc.k_m);
    let mut params = ExchangeModelParams::new(omega_a, omega_b, omega_m, lambda_am, lambda_bm, k_m);
    if let Some(levels) = jc.transmon_levels {
        if levels < 2 {
            errors.push(format!(
                "jc.transmon_levels: must be at least 2, got {levels}"
            ));
        }
        params.transmon_levels = levels.max(2);
    }
    let mut opts = StudyOptions::new(alpha);
    if let Some(dim) = jc.dim_a {
        if dim < 4 {
            errors.push(format!("jc.dim_a: must be at least 4, got {dim}"));
        }
        opts.dim_a = dim.max(4);
    }
    if let Some(dim) = jc.dim_b {
        if dim < 4 {
            errors.push(format!("jc.dim_b: must be at least 4, got {dim}"));
        }
        opts.dim_b = dim.max(4);
    }
    if let Some(revival) = expect_positive(errors, "jc.expected_revival", jc.expected_revival) {
        opts.expected_revival = revival;
    }
    let mut count = |name: &str, value: Option<usize>, floor: usize, slot: &mut usize| {
        if let Some(v) = value {
            if v < floor {
                errors.push(format!("{name}: must be at least {floor}, got {v}"));
            }
            *slot = v.max(floor);
        }
    };
    count("jc.coarse_points", jc.coarse_points, 16, &mut opts.coarse_points);
    count(
        "jc.trajectory_points",
        jc.trajectory_points,
        16,
        &mut opts.trajectory_points,
    );
    count("jc.snapshot_count", jc.snapshot_count, 3, &mut opts.snapshot_count);
    (params, opts)
}

fn resolve_wigner_state(
    errors: &mut Vec<String>,
    alpha: Option<f64>,
    raw: &RawConfig,
) -> WignerState {
    let label = raw
        .wigner
        .as_ref()
        .and_then(|w| w.state.clone())
        .unwrap_or_else(|| {
            errors.push("wigner.state: required for this experiment".into());
            "vacuum".into()
        });
    let mut named_alpha = |state: &str| -> f64 {
        match alpha {
            Some(a) => a,
            None => {
                if raw.alpha.is_none() {
                    errors.push(format!("alpha: required for wigner state `{state}`"));
                }
                2.0
            }
        }
    };
    let dim = |alpha: f64| raw.dim.unwrap_or_else(|| default_truncation(alpha));
    match label.as_str() {
        "vacuum" => WignerState::Vacuum {
            dim: raw.dim.unwrap_or(16),
        },
        "coherent" => {
            let a = named_alpha("coherent");
            WignerState::Coherent { alpha: a, dim: dim(a) }
        }
        "cat-even" | "cat-odd" => {
            let a = named_alpha(&label);
            let parity = if label == "cat-even" {
                Parity::Even
            } else {
                Parity::Odd
            };
            WignerState::Cat {
                alpha: a,
                parity,
                dim: dim(a),
            }
        }
        other if other.starts_with("qudit-") => {
            let a = named_alpha(other);
            let k = other["qudit-".len()..].parse::<usize>().ok().filter(|k| *k < 4);
            match k {
                Some(k) => WignerState::Qudit { alpha: a, k, dim: dim(a) },
                None => {
                    errors.push(format!(
                        "wigner.state: qudit index must be 0..=3, got `{other}`"
                    ));
                    WignerState::Vacuum { dim: 16 }
                }
            }
        }
        other => {
            errors.push(format!(
                "wigner.state: unknown state `{other}` (expected vacuum, coherent, cat-even, cat-odd, or qudit-0..qudit-3)"
            ));
            WignerState::Vacuum { dim: 16 }
        }
    }
}
