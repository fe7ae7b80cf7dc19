//! Config-driven experiment runs.
//!
//! A run reads an [`ExperimentConfig`], writes `trajectory.csv`,
//! `covariance.json`, `report.json` and `config.resolved.json` into the output
//! directory, and maps the outcome onto exit codes: 0 when every requested
//! check passes, 2 when one fails, 1 for configuration or runtime errors.
//!
//! Outputs are byte-identical for identical inputs: CSV floats use 17
//! significant digits, JSON keys follow struct order and all reductions run
//! in a fixed order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{apply_channel, evolve, uniform_grid, SolverSettings, Trajectory};
use crate::fock::{Model, OnsiteTerm};
use crate::lattice::{Graph, GraphSpec, VelocityBound};
use crate::sparse::C64;
use crate::states::{
    ground_state, is_stationary, thermal_state, validate_channel, ChannelReport, ChannelSpec,
    ExcitationChannel, StationaryEnsemble,
};
use crate::verify::{
    comparison_seed, comparison_trajectory, differential_inequality_check, dominance_check,
    eigenvalues, empirical_velocity, envelope_check, positivity_check, premise_check,
    DiffIneqReport, EnvelopeReport, PositivityReport, PremiseReport, VelocityReport,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tau: f64,
    #[serde(rename = "U", default)]
    pub u: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub onsite: Vec<OnsiteTerm>,
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Ground,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub sectors: Vec<usize>,
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
}

fn default_weight_floor() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    /// Defaults to `0.05 / τ`.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Stationarity,
    Channel,
    Positivity,
    Dominance,
    Diffineq,
    Envelope,
    Velocity,
    Premise,
    Conservation,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_1e8")]
    pub positivity: f64,
    #[serde(default = "tol_1e8")]
    pub dominance: f64,
    #[serde(default = "tol_1e6")]
    pub diffineq: f64,
    #[serde(default = "tol_1e10")]
    pub channel: f64,
    #[serde(default = "tol_1e9")]
    pub stationarity: f64,
    #[serde(default = "tol_1e10")]
    pub conservation: f64,
    #[serde(default = "tol_1e9")]
    pub energy: f64,
    #[serde(default = "tol_1e8")]
    pub premise: f64,
    #[serde(default = "tol_1e9")]
    pub oracle: f64,
}

fn tol_1e6() -> f64 {
    1e-6
}
fn tol_1e8() -> f64 {
    1e-8
}
fn tol_1e9() -> f64 {
    1e-9
}
fn tol_1e10() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            positivity: 1e-8,
            dominance: 1e-8,
            diffineq: 1e-6,
            channel: 1e-10,
            stationarity: 1e-9,
            conservation: 1e-10,
            energy: 1e-9,
            premise: 1e-8,
            oracle: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiseConfig {
    #[serde(default = "default_premise_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_premise_samples")]
    pub samples: usize,
}

fn default_premise_times() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}
fn default_premise_samples() -> usize {
    20
}

impl Default for PremiseConfig {
    fn default() -> Self {
        PremiseConfig {
            times: default_premise_times(),
            samples: default_premise_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Admissible fitted speed in units of `τ`, in addition to `≤ v`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_range: Option<[f64; 2]>,
}

fn default_threshold() -> f64 {
    1e-3
}

impl Default for VelocityConfig {
    fn default() -> Self {
        VelocityConfig {
            threshold: default_threshold(),
            speed_range: None,
        }
    }
}

fn default_checks() -> Vec<Check> {
    vec![
        Check::Stationarity,
        Check::Channel,
        Check::Positivity,
        Check::Dominance,
        Check::Diffineq,
        Check::Envelope,
        Check::Conservation,
    ]
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub graph: GraphSpec,
    pub model: ModelConfig,
    pub state: StateConfig,
    pub channel: ChannelSpec,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub premise: PremiseConfig,
    #[serde(default)]
    pub velocity: VelocityConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Fills derived defaults and checks ranges; the result is what
    /// `config.resolved.json` records.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let field = |name: &str, msg: String| Error::Config(format!("{name}: {msg}"));
        if !(c.model.tau > 0.0) || !c.model.tau.is_finite() {
            return Err(field(
                "model.tau",
                format!("must be positive, got {}", c.model.tau),
            ));
        }
        if c.model.n_max == 0 {
            return Err(field("model.n_max", "must be at least 1".into()));
        }
        if !(c.time.t_max > 0.0) || !c.time.t_max.is_finite() {
            return Err(field(
                "time.t_max",
                format!("must be positive, got {}", c.time.t_max),
            ));
        }
        let dt = c.time.dt.unwrap_or(0.05 / c.model.tau);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(field("time.dt", format!("must be positive, got {dt}")));
        }
        c.time.dt = Some(dt);
        if c.state.sectors.is_empty() {
            return Err(field(
                "state.sectors",
                "must list at least one sector".into(),
            ));
        }
        match (c.state.kind, c.state.beta) {
            (StateKind::Thermal, None) => {
                return Err(field("state.beta", "required for thermal states".into()))
            }
            (StateKind::Thermal, Some(b)) if !(b > 0.0) => {
                return Err(field("state.beta", format!("must be positive, got {b}")))
            }
            (StateKind::Ground, Some(_)) => {
                return Err(field("state.beta", "not used by ground states".into()))
            }
            _ => {}
        }
        if !(c.state.weight_floor > 0.0 && c.state.weight_floor <= 1e-6) {
            return Err(field(
                "state.weight_floor",
                format!("must lie in (0, 1e-6], got {}", c.state.weight_floor),
            ));
        }
        if !(c.solver.tol > 0.0) {
            return Err(field("solver.tol", "must be positive".into()));
        }
        if c.solver.krylov_dim == 0 {
            return Err(field("solver.krylov_dim", "must be at least 1".into()));
        }
        if !(c.velocity.threshold > 0.0) {
            return Err(field("velocity.threshold", "must be positive".into()));
        }
        let graph = c.graph.build().map_err(|e| field("graph", e.to_string()))?;
        let n = graph.n_sites();
        for &j in &c.channel.region {
            if j >= n {
                return Err(field(
                    "channel.region",
                    format!("site {j} outside the {n}-site graph"),
                ));
            }
        }
        for t in &c.model.onsite {
            if t.site >= n {
                return Err(field(
                    "model.onsite",
                    format!("site {} outside the graph", t.site),
                ));
            }
        }
        c.checks.sort_unstable();
        c.checks.dedup();
        Ok(c)
    }
}

/// Names of the shipped presets.
pub const PRESETS: [&str; 5] = [
    "lemma1-path4",
    "freeboson-line",
    "premise-2site",
    "lightcone-cycle6",
    "negative-removal",
];

fn base_config(name: &str, graph: &str, u: f64, n_max: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        graph: GraphSpec::Descriptor(graph.into()),
        model: ModelConfig {
            tau: 1.0,
            u,
            mu: 0.0,
            onsite: Vec::new(),
            n_max,
        },
        state: StateConfig {
            kind: StateKind::Ground,
            beta: None,
            sectors: vec![0],
            weight_floor: default_weight_floor(),
        },
        channel: ChannelSpec {
            kind: "add_boson".into(),
            region: vec![0],
            p: None,
            site_probabilities: None,
            theta: None,
        },
        time: TimeConfig {
            t_max: 5.0,
            dt: Some(0.05),
        },
        solver: SolverSettings::default(),
        checks: default_checks(),
        tolerances: Tolerances::default(),
        premise: PremiseConfig::default(),
        velocity: VelocityConfig::default(),
        seed: 7,
        output: format!("out/{name}"),
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut c = match name {
        "lemma1-path4" => {
            let mut c = base_config(name, "path:4", 1.0, 3);
            c.state = StateConfig {
                kind: StateKind::Thermal,
                beta: Some(1.0),
                sectors: vec![0, 1, 2],
                weight_floor: default_weight_floor(),
            };
            c.checks.push(Check::Velocity);
            c
        }
        "freeboson-line" => {
            let mut c = base_config(name, "path:10", 0.0, 1);
            c.time = TimeConfig {
                t_max: 4.0,
                dt: Some(0.01),
            };
            c.checks = vec![
                Check::Stationarity,
                Check::Channel,
                Check::Positivity,
                Check::Dominance,
                Check::Envelope,
                Check::Velocity,
                Check::Conservation,
                Check::Oracle,
            ];
            c.velocity.speed_range = Some([1.8, 2.2]);
            c
        }
        "premise-2site" => {
            let mut c = base_config(name, "path:2", 1.0, 2);
            c.state = StateConfig {
                kind: StateKind::Thermal,
                beta: Some(1.0),
                sectors: vec![0, 1],
                weight_floor: default_weight_floor(),
            };
            c.time.t_max = 2.0;
            c.checks.push(Check::Premise);
            c
        }
        "lightcone-cycle6" => {
            let mut c = base_config(name, "cycle:6", 1.0, 3);
            c.checks.push(Check::Velocity);
            c
        }
        "negative-removal" => {
            let mut c = base_config(name, "path:4", 1.0, 3);
            c.state.sectors = vec![2];
            c.channel.kind = "remove_boson".into();
            c.time.t_max = 1.0;
            c.checks = vec![Check::Channel, Check::Positivity];
            c
        }
        _ => return None,
    };
    c.checks.sort_unstable();
    Some(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceSummary {
    pub margins: Vec<Vec<f64>>,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub number_drift: f64,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub tol: f64,
    pub energy_tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub source_site: usize,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub series: Vec<f64>,
    pub max: f64,
    pub leak_tol: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySummary {
    #[serde(flatten)]
    pub report: VelocityReport,
    pub speed_range: Option<[f64; 2]>,
    pub in_range: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub pass: bool,
    pub failed: Vec<String>,
    pub velocity_bound: VelocityBound,
    pub stationarity: Option<StationarityReport>,
    pub channel: Option<ChannelReport>,
    pub positivity: Option<PositivityReport>,
    pub dominance: Option<DominanceSummary>,
    pub diffineq: Option<DiffIneqReport>,
    pub envelope: Option<EnvelopeReport>,
    pub empirical_velocity: Option<VelocitySummary>,
    pub premise: Option<PremiseReport>,
    pub conservation: Option<ConservationReport>,
    pub oracle: Option<OracleReport>,
    pub leakage: LeakageReport,
    pub warnings: Vec<String>,
    pub tolerances: Tolerances,
}

/// Everything a run computes, before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub gamma: Option<Vec<Vec<f64>>>,
    pub distances: Vec<Option<usize>>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

fn build_state(model: &Model, cfg: &StateConfig) -> Result<StationaryEnsemble> {
    match cfg.kind {
        StateKind::Ground => ground_state(model, &cfg.sectors),
        StateKind::Thermal => thermal_state(
            model,
            &cfg.sectors,
            cfg.beta.expect("resolved config has beta"),
            cfg.weight_floor,
        ),
    }
}

/// `|(e^{iτMt})_{j,src}|²` for a single free particle starting at `src`.
pub fn free_particle_numbers(graph: &Graph, tau: f64, src: usize, times: &[f64]) -> Vec<Vec<f64>> {
    let eig = SymmetricEigen::new(graph.adjacency());
    let n = graph.n_sites();
    times
        .iter()
        .map(|&t| {
            (0..n)
                .map(|j| {
                    let amp: C64 = (0..n)
                        .map(|m| {
                            C64::from_polar(1.0, tau * eig.eigenvalues[m] * t)
                                * (eig.eigenvectors[(j, m)] * eig.eigenvectors[(src, m)])
                        })
                        .sum();
                    amp.norm_sqr()
                })
                .collect()
        })
        .collect()
}

fn oracle_report(
    cfg: &ExperimentConfig,
    graph: &Graph,
    omega: &StationaryEnsemble,
    ch: &ExcitationChannel,
    traj: &Trajectory,
) -> Result<OracleReport> {
    let single = omega.members.len() == 1 && omega.members[0].total == 0;
    let src =
        match (ch.label.as_str(), ch.region.as_slice()) {
            ("add_boson", [s]) if single && cfg.model.u == 0.0 && cfg.model.onsite.is_empty() => *s,
            _ => return Err(Error::Config(
                "checks.oracle needs U = 0, no on-site terms, the vacuum and add_boson on one site"
                    .into(),
            )),
        };
    let exact = free_particle_numbers(graph, cfg.model.tau, src, &traj.times);
    let max_deviation = exact
        .iter()
        .zip(&traj.x)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    Ok(OracleReport {
        source_site: src,
        max_deviation,
        tol: cfg.tolerances.oracle,
        pass: max_deviation < cfg.tolerances.oracle,
    })
}

/// Runs an experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    let cfg = config.resolved()?;
    let tol = &cfg.tolerances;
    let graph = cfg.graph.build()?;
    let params = crate::fock::ModelParams {
        tau: cfg.model.tau,
        u: cfg.model.u,
        mu: cfg.model.mu,
        onsite: cfg.model.onsite.clone(),
    };
    let model = Model::new(graph.clone(), params, cfg.model.n_max)?;
    let vb = VelocityBound::new(&graph, cfg.model.tau)?;
    let omega = build_state(&model, &cfg.state)?;
    let ch = cfg.channel.build(graph.n_sites())?;
    let wants = |c: Check| cfg.checks.contains(&c);
    let mut warnings = omega.warnings.clone();
    if !graph.is_connected() {
        warnings.push(format!(
            "graph has {} components; unreachable sites are skipped",
            graph.n_components()
        ));
    }

    let channel = validate_channel(&ch, &model, &omega.sectors(), tol.channel)?;
    if !channel.pass {
        warnings.push(format!(
            "channel validation failed: {}",
            channel.failures.join("; ")
        ));
    }
    let (stat_ok, residual) = is_stationary(&omega, &model, tol.stationarity)?;
    let stationarity = StationarityReport {
        residual,
        tol: tol.stationarity,
        pass: stat_ok,
    };

    let initial = apply_channel(&omega, &ch, &model)?;
    let times = uniform_grid(cfg.time.t_max, cfg.time.dt.expect("resolved dt"))?;
    let traj = evolve(&model, &omega, &initial, &times, &cfg.solver)?;
    warnings.extend(traj.warnings.iter().cloned());

    let gamma = comparison_seed(&traj)
        .and_then(|x0| comparison_trajectory(&graph, cfg.model.tau, &x0, &times));
    let distances = graph.distances_from_set(&ch.region);

    let positivity = wants(Check::Positivity).then(|| positivity_check(&traj, tol.positivity));
    let dominance = wants(Check::Dominance).then(|| match &gamma {
        Ok(g) => {
            let d = dominance_check(&traj, g, tol.dominance).expect("shared grid");
            DominanceSummary {
                margins: d.margins,
                worst: d.worst,
                tol: d.tol,
                pass: d.pass,
                error: None,
            }
        }
        Err(e) => DominanceSummary {
            margins: Vec::new(),
            worst: f64::NAN,
            tol: tol.dominance,
            pass: false,
            error: Some(e.to_string()),
        },
    });
    let diffineq = if wants(Check::Diffineq) {
        Some(differential_inequality_check(
            &traj,
            &graph,
            cfg.model.tau,
            tol.diffineq,
        )?)
    } else {
        None
    };
    let envelope = if wants(Check::Envelope) && ch.declared_n0 != 0.0 {
        Some(envelope_check(
            &traj,
            &graph,
            &vb,
            &ch.region,
            ch.declared_n0.abs(),
        )?)
    } else {
        if wants(Check::Envelope) {
            warnings.push("envelope skipped: channel declares N0 = 0".into());
        }
        None
    };
    let empirical_velocity = if wants(Check::Velocity) {
        let r = empirical_velocity(&traj, &graph, &ch.region, cfg.velocity.threshold, vb.v)?;
        let in_range = match (cfg.velocity.speed_range, r.fitted_speed) {
            (Some([lo, hi]), Some(s)) => s >= lo * cfg.model.tau && s <= hi * cfg.model.tau,
            (Some(_), None) => false,
            (None, _) => true,
        };
        Some(VelocitySummary {
            pass: r.pass && in_range,
            speed_range: cfg.velocity.speed_range,
            in_range,
            report: r,
        })
    } else {
        None
    };
    let premise = if wants(Check::Premise) {
        Some(premise_check(
            &model,
            &ch,
            &omega.sectors(),
            &cfg.premise.times,
            cfg.premise.samples,
            cfg.seed,
            tol.premise,
        )?)
    } else {
        None
    };
    let conservation = wants(Check::Conservation).then(|| {
        let totals = traj.total_numbers();
        let number_drift = totals
            .iter()
            .map(|s| (s - totals[0]).abs())
            .fold(0.0, f64::max);
        ConservationReport {
            number_drift,
            norm_drift: traj.norm_drift,
            energy_drift: traj.energy_drift,
            tol: tol.conservation,
            energy_tol: tol.energy,
            pass: number_drift < tol.conservation
                && traj.norm_drift < tol.conservation
                && traj.energy_drift < tol.energy,
        }
    });
    let oracle = if wants(Check::Oracle) {
        Some(oracle_report(&cfg, &graph, &omega, &ch, &traj)?)
    } else {
        None
    };
    let max_leak = traj.leakage.iter().copied().fold(0.0, f64::max);
    let leakage = LeakageReport {
        series: traj.leakage.clone(),
        max: max_leak,
        leak_tol: cfg.solver.leak_tol,
        exceeded: traj.leakage_exceeded,
    };

    let mut failed = Vec::new();
    let mut note = |name: &str, ok: Option<bool>| {
        if ok == Some(false) {
            failed.push(name.to_string());
        }
    };
    note(
        "stationarity",
        wants(Check::Stationarity).then_some(stationarity.pass),
    );
    note("channel", wants(Check::Channel).then_some(channel.pass));
    note("positivity", positivity.as_ref().map(|r| r.pass));
    note("dominance", dominance.as_ref().map(|r| r.pass));
    note("diffineq", diffineq.as_ref().map(|r| r.pass));
    note("envelope", envelope.as_ref().map(|r| r.pass));
    note("velocity", empirical_velocity.as_ref().map(|r| r.pass));
    note("premise", premise.as_ref().map(|r| r.pass));
    note("conservation", conservation.as_ref().map(|r| r.pass));
    note("oracle", oracle.as_ref().map(|r| r.pass));
    note("leakage", Some(!leakage.exceeded));

    let report = RunReport {
        name: cfg.name.clone(),
        pass: failed.is_empty(),
        failed,
        velocity_bound: vb,
        stationarity: wants(Check::Stationarity).then_some(stationarity),
        channel: wants(Check::Channel).then_some(channel),
        positivity,
        dominance,
        diffineq,
        envelope,
        empirical_velocity,
        premise,
        conservation,
        oracle,
        leakage,
        warnings,
        tolerances: cfg.tolerances.clone(),
    };
    Ok(RunOutcome {
        config: cfg,
        report,
        trajectory: traj,
        gamma: gamma.ok(),
        distances,
    })
}

/// `x` with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

/// `t,site,x,gamma,envelope,leakage`, one row per (time, site), time-major.
pub fn trajectory_csv(outcome: &RunOutcome) -> String {
    let traj = &outcome.trajectory;
    let v = outcome.report.velocity_bound.v;
    let n0 = outcome
        .report
        .envelope
        .as_ref()
        .map(|e| e.n0)
        .unwrap_or_else(|| declared_n0(&outcome.config));
    let mut out = String::from("t,site,x,gamma,envelope,leakage\n");
    for (i, &t) in traj.times.iter().enumerate() {
        for j in 0..traj.n_sites {
            let gamma = outcome.gamma.as_ref().map_or(f64::NAN, |g| g[i][j]);
            let envelope = match outcome.distances[j] {
                Some(l) => n0.abs() * (v * t - l as f64).exp(),
                None => 0.0,
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_float(t),
                j,
                fmt_float(traj.x[i][j]),
                fmt_float(gamma),
                fmt_float(envelope),
                fmt_float(traj.leakage[i])
            );
        }
    }
    out
}

fn declared_n0(cfg: &ExperimentConfig) -> f64 {
    cfg.graph
        .build()
        .and_then(|g| cfg.channel.build(g.n_sites()))
        .map(|c| c.declared_n0)
        .unwrap_or(0.0)
}

#[derive(Serialize)]
struct CovarianceSidecar<'a> {
    times: &'a [f64],
    reference_spectrum: Vec<f64>,
    spectra: Vec<Vec<f64>>,
    difference_spectra: Vec<Vec<f64>>,
}

/// Eigenvalues of `C(ω)`, `C(ρ(t))` and `C(ρ(t)) − C(ω)`, ascending.
pub fn covariance_json(traj: &Trajectory) -> String {
    let spectra = traj.covariances.iter().map(eigenvalues).collect();
    let difference_spectra = (0..traj.times.len())
        .map(|i| eigenvalues(&traj.covariance_difference(i)))
        .collect();
    let side = CovarianceSidecar {
        times: &traj.times,
        reference_spectrum: eigenvalues(&traj.reference_covariance),
        spectra,
        difference_spectra,
    };
    serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n"
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// Executes and writes all artifacts into `out_dir`.
pub fn run_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    let io = |e: std::io::Error| Error::Config(format!("output {}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir).map_err(io)?;
    fs::write(out_dir.join("trajectory.csv"), trajectory_csv(&outcome)).map_err(io)?;
    fs::write(
        out_dir.join("covariance.json"),
        covariance_json(&outcome.trajectory),
    )
    .map_err(io)?;
    fs::write(out_dir.join("report.json"), report_json(&outcome.report)).map_err(io)?;
    fs::write(
        out_dir.join("config.resolved.json"),
        outcome.config.to_json(),
    )
    .map_err(io)?;
    Ok(outcome)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn output_dir(config: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir.map_or_else(|| PathBuf::from(&config.output), Path::to_path_buf)
}

/// Human-readable summary, one line per check.
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let line = |s: &mut String, name: &str, pass: bool, detail: String| {
        let _ = writeln!(
            s,
            "{:<13} {}  {detail}",
            name,
            if pass { "PASS" } else { "FAIL" }
        );
    };
    if let Some(r) = &report.stationarity {
        line(
            &mut s,
            "stationarity",
            r.pass,
            format!("residual {:e}", r.residual),
        );
    }
    if let Some(r) = &report.channel {
        line(&mut s, "channel", r.pass, r.failures.join("; "));
    }
    if let Some(r) = &report.positivity {
        line(
            &mut s,
            "positivity",
            r.pass,
            format!("min eig {:e}", r.worst),
        );
    }
    if let Some(r) = &report.dominance {
        line(
            &mut s,
            "dominance",
            r.pass,
            format!("worst margin {:e}", r.worst),
        );
    }
    if let Some(r) = &report.diffineq {
        line(
            &mut s,
            "diffineq",
            r.pass,
            format!(
                "worst {:e} / {:e} (fd error {:e})",
                r.worst_cauchy_schwarz, r.worst_linearized, r.fd_error
            ),
        );
    }
    if let Some(r) = &report.envelope {
        line(
            &mut s,
            "envelope",
            r.pass,
            format!("empirical c {:.6}", r.empirical_c),
        );
    }
    if let Some(r) = &report.empirical_velocity {
        line(&mut s, "velocity", r.pass, r.report.note.clone());
    }
    if let Some(r) = &report.premise {
        line(&mut s, "premise", r.pass, format!("min eig {:e}", r.worst));
    }
    if let Some(r) = &report.conservation {
        line(
            &mut s,
            "conservation",
            r.pass,
            format!("number {:e}, norm {:e}", r.number_drift, r.norm_drift),
        );
    }
    if let Some(r) = &report.oracle {
        line(
            &mut s,
            "oracle",
            r.pass,
            format!("max deviation {:e}", r.max_deviation),
        );
    }
    line(
        &mut s,
        "leakage",
        !report.leakage.exceeded,
        format!("max {:e}", report.leakage.max),
    );
    s
}

/// Printed form of a velocity bound.
pub fn bound_table(vb: &VelocityBound) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "chi      {:.12}", vb.chi);
    let _ = writeln!(s, "Delta    {:.12}", vb.delta);
    let _ = writeln!(s, "D        {}", vb.max_degree);
    let _ = writeln!(s, "tau      {:.12}", vb.tau);
    let _ = writeln!(s, "v0       {:.12}", vb.v0);
    let _ = writeln!(s, "v        {:.12}", vb.v);
    let _ = writeln!(s, "C        {:.12}", vb.c_const);
    s
}
