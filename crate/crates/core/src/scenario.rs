//! Builtin figure scenarios, parameter sweeps and resumable CSV output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entanglement::{log_negativity, quantum_limit_predicate, EntanglementTrace, ScaledParameters};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::gaussian_moments::{moment_trace_with, GaussianState, MomentTrace};
use crate::io::{csv_row, write_atomic};
use crate::model::{ModelConfig, SimulationGrid};
use crate::oracle::{evolve_full, OracleSettings};

/// One sweep value: parameter assignments applied on top of the base config and an
/// optional replacement initial state.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub label: String,
    pub assignments: Vec<(String, f64)>,
    pub initial: Option<GaussianState>,
}

impl SweepPoint {
    pub fn new(label: impl Into<String>, assignments: &[(&str, f64)]) -> Self {
        Self {
            label: label.into(),
            assignments: assignments.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
            initial: None,
        }
    }

    /// The base config with this point's assignments applied.
    pub fn apply(&self, base: &ModelConfig) -> Result<ModelConfig> {
        let mut c = base.clone();
        for (path, v) in &self.assignments {
            c.set_path(path, *v)?;
        }
        if let Some(s) = &self.initial {
            c.initial = s.clone();
        }
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub base: ModelConfig,
    pub points: Vec<SweepPoint>,
    pub oracle: bool,
}

impl Scenario {
    /// Replace the base configuration, keeping the sweep.
    pub fn with_base(mut self, base: ModelConfig) -> Self {
        self.base = base;
        self
    }

    /// Every sweep value must give a valid configuration.
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            let c = p.apply(&self.base)?;
            let report = c.validate();
            if !report.is_ok() {
                return Err(Error::InvalidArgument(format!("sweep value `{}`: {report}", p.label)));
            }
        }
        Ok(())
    }
}

fn label(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

fn cartesian(a: (&str, &[f64]), b: (&str, &[f64])) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &x in a.1 {
        for &y in b.1 {
            let name = format!("{}_{}-{}_{}", a.0.replace('.', "_"), label(x), b.0.replace('.', "_"), label(y));
            out.push(SweepPoint::new(name, &[(a.0, x), (b.0, y)]));
        }
    }
    out
}

fn axis(path: &str, values: &[f64]) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|&v| SweepPoint::new(format!("{}_{}", path.replace('.', "_"), label(v)), &[(path, v)]))
        .collect()
}

/// Horizon covering more than ten drive periods at `omega_d = 2`.
fn default_grid() -> SimulationGrid {
    SimulationGrid::linspace(0.0, 40.0, 161)
}

fn figure(coupling: f64, cutoff: f64, temperature: f64) -> ModelConfig {
    let mut c = ModelConfig::symmetric(coupling, cutoff, temperature, 0.2, 2.0);
    c.grid = default_grid();
    c
}

/// The four initial states of the initial-state sweep.
pub fn initial_state_set(config: &ModelConfig) -> Vec<(&'static str, GaussianState)> {
    let o = &config.oscillators;
    vec![
        ("vacuum", GaussianState::vacuum(o)),
        ("thermal_nbar2", GaussianState::thermal(o, [2.0, 2.0])),
        ("squeezed_r0.5", GaussianState::squeezed(o, 0.5)),
        ("displaced_q1_2", GaussianState::coherent(o, [2.0, 0.0, 0.0, 0.0])),
    ]
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    let temps = [2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
    let mut v = Vec::new();
    v.push(Scenario {
        name: "fig1_temperature".into(),
        description: "E_N(t) vs temperature for Omega = omega (nM) and Omega = 20 omega (M); gamma = 1e-3, c1 = 0.2, omega_d = 2".into(),
        base: figure(1e-3, 1.0, 5.0),
        points: cartesian(("bath.cutoff", &[1.0, 20.0]), ("bath.temperature", &temps)),
        oracle: false,
    });
    v.push(Scenario {
        name: "fig2_coupling".into(),
        description: "E_N(t) vs bath coupling for Omega = omega and 20 omega at T = 5".into(),
        base: figure(1e-3, 1.0, 5.0),
        points: cartesian(("bath.cutoff", &[1.0, 20.0]), ("bath.coupling", &[5e-4, 1e-3, 2e-3, 4e-3])),
        oracle: false,
    });
    let mut fig3 = figure(1e-3, 1.0, 10.0);
    fig3.grid = SimulationGrid::linspace(0.0, 80.0, 321);
    let points = initial_state_set(&fig3)
        .into_iter()
        .map(|(name, s)| SweepPoint { label: name.into(), assignments: vec![], initial: Some(s) })
        .collect();
    v.push(Scenario {
        name: "fig3_initial_state".into(),
        description: "E_N(t) for four initial Gaussians (vacuum, thermal nbar = 2, squeezed r = 0.5, displaced q1 = 2) at T = 10".into(),
        base: fig3,
        points,
        oracle: false,
    });
    v.push(Scenario {
        name: "fig4_diff_temp".into(),
        description: "Baths at different temperatures, T1 = 20, T2/T1 sweep, Omega = omega".into(),
        base: figure(1e-3, 1.0, 20.0),
        points: [0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|r| SweepPoint::new(format!("t2_over_t1_{}", label(*r)), &[("bath2.temperature", 20.0 * r)]))
            .collect(),
        oracle: false,
    });
    v.push(Scenario {
        name: "fig5_diff_gamma".into(),
        description: "Different couplings, gamma1 = 5e-3, gamma2/gamma1 sweep, T = 5, Omega = omega".into(),
        base: figure(5e-3, 1.0, 5.0),
        points: [0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|r| SweepPoint::new(format!("g2_over_g1_{}", label(*r)), &[("bath2.coupling", 5e-3 * r)]))
            .collect(),
        oracle: false,
    });
    v.push(Scenario {
        name: "fig6_freq_ratio".into(),
        description: "Equal masses, omega2/omega1 sweep at T = 60, Omega = omega1".into(),
        base: figure(1e-3, 1.0, 60.0),
        points: axis("osc2.frequency", &[0.93, 0.96, 1.0, 1.04, 1.07]),
        oracle: false,
    });
    v.push(Scenario {
        name: "fig6_mass_ratio".into(),
        description: "Equal frequencies, m2/m1 sweep at T = 60, Omega = omega".into(),
        base: figure(1e-3, 1.0, 60.0),
        points: axis("osc2.mass", &[0.25, 0.5, 1.0, 2.0]),
        oracle: false,
    });
    v.push(Scenario {
        name: "oracle_xcheck".into(),
        description: "Non-Markovian point (Omega = omega, T = 5) on [0, 30] against the 300-mode discrete-bath oracle".into(),
        base: ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.2, 2.0),
        points: vec![SweepPoint::new("t_5", &[])],
        oracle: true,
    });
    let mut markov = ModelConfig::symmetric(1e-2, 20.0, 5.0, 0.0, 2.0);
    markov.grid = SimulationGrid::linspace(0.0, 800.0, 81);
    v.push(Scenario {
        name: "markov_limit".into(),
        description: "Undriven thermalization at Omega = 20 omega, gamma = 1e-2, T = 5".into(),
        base: markov,
        points: vec![SweepPoint::new("undriven", &[])],
        oracle: false,
    });
    v
}

pub fn scenario_names() -> Vec<String> {
    builtin_scenarios().into_iter().map(|s| s.name).collect()
}

pub fn find_scenario(name: &str) -> Result<Scenario> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario { name: name.into(), available: scenario_names() })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointStatus {
    Completed,
    /// Output with a matching content hash already existed.
    Skipped,
    Failed(String),
}

/// Summary of one sweep value, also stored as the resumability sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointOutcome {
    pub label: String,
    pub assignments: Vec<(String, f64)>,
    pub hash: String,
    pub status: PointStatus,
    pub steady_log_negativity: f64,
    pub steady_std: f64,
    pub window: (f64, f64),
    pub predicate_margin: f64,
    pub oracle_max_rel_dev: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: String,
    pub directory: PathBuf,
    pub points: Vec<PointOutcome>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| matches!(p.status, PointStatus::Failed(_))).count()
    }

    /// 0 when every sweep value succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            2
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub oracle: bool,
    pub exec: Execution,
    pub oracle_settings: OracleSettings,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            oracle: false,
            exec: Execution::default(),
            oracle_settings: OracleSettings::default(),
        }
    }
}

/// Entrywise deviation `max |x - y| / max(|y|, 1e-3)` over the covariance.
fn max_rel_dev(a: &GaussianState, b: &GaussianState) -> f64 {
    a.covariance
        .iter()
        .zip(b.covariance.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3))
        .fold(0.0, f64::max)
}

fn point_csv(trace: &MomentTrace, ent: &EntanglementTrace, oracle: Option<&MomentTrace>) -> Result<String> {
    let mut out = MomentTrace::header();
    out.push_str(",log_negativity,min_pt_symplectic,steady_window");
    if oracle.is_some() {
        out.push_str(",oracle_log_negativity,oracle_max_rel_dev");
    }
    out.push('\n');
    for (i, row) in trace.rows().into_iter().enumerate() {
        let mut row = row;
        row.push(ent.log_negativity[i]);
        row.push(ent.min_pt_symplectic[i]);
        row.push(if ent.in_window[i] { 1.0 } else { 0.0 });
        if let Some(o) = oracle {
            row.push(log_negativity(&o.states[i].covariance)?);
            row.push(max_rel_dev(&trace.states[i], &o.states[i]));
        }
        out.push_str(&csv_row(&row));
        out.push('\n');
    }
    Ok(out)
}

fn point_hash(config: &ModelConfig, oracle: Option<&OracleSettings>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut text = config.to_toml_string()?;
    if let Some(s) = oracle {
        text.push_str(&format!("\n# oracle {s:?}\n"));
    }
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

fn run_point(point: &SweepPoint, scenario: &Scenario, opts: &RunOptions, dir: &Path, inner: Execution) -> PointOutcome {
    let mut outcome = PointOutcome {
        label: point.label.clone(),
        assignments: point.assignments.clone(),
        hash: String::new(),
        status: PointStatus::Completed,
        steady_log_negativity: f64::NAN,
        steady_std: f64::NAN,
        window: (f64::NAN, f64::NAN),
        predicate_margin: f64::NAN,
        oracle_max_rel_dev: None,
    };
    let with_oracle = scenario.oracle || opts.oracle;
    let result = (|| -> Result<()> {
        let config = point.apply(&scenario.base)?.validated()?;
        outcome.hash = point_hash(&config, with_oracle.then_some(&opts.oracle_settings))?;
        let csv_path = dir.join(format!("{}.csv", point.label));
        let sidecar = dir.join(format!("{}.json", point.label));
        if csv_path.exists() {
            if let Ok(text) = fs::read_to_string(&sidecar) {
                if let Ok(prev) = serde_json::from_str::<PointOutcome>(&text) {
                    if prev.hash == outcome.hash && !matches!(prev.status, PointStatus::Failed(_)) {
                        outcome = PointOutcome { status: PointStatus::Skipped, ..prev };
                        return Ok(());
                    }
                }
            }
        }
        let trace = moment_trace_with(&config, inner)?;
        let ent = EntanglementTrace::from_trace(&trace, &config)?;
        outcome.steady_log_negativity = ent.steady_mean;
        outcome.steady_std = ent.steady_std;
        outcome.window = ent.window;
        let omega = config.oscillators[0].frequency;
        let mu = ScaledParameters::from_config(&config, omega).growth_rate;
        outcome.predicate_margin =
            quantum_limit_predicate(&config.baths[0], &config.oscillators[0], omega, mu).margin;
        let oracle = if with_oracle {
            let o = evolve_full(&config, &opts.oracle_settings, inner)?;
            let dev = trace.states.iter().zip(&o.states).map(|(a, b)| max_rel_dev(a, b)).fold(0.0, f64::max);
            outcome.oracle_max_rel_dev = Some(dev);
            o.write_csv(&dir.join(format!("{}.oracle.csv", point.label)))?;
            Some(o)
        } else {
            None
        };
        write_atomic(&csv_path, point_csv(&trace, &ent, oracle.as_ref())?.as_bytes())?;
        let json = serde_json::to_string_pretty(&outcome).map_err(|e| Error::Parse(e.to_string()))?;
        write_atomic(&sidecar, json.as_bytes())
    })();
    if let Err(e) = result {
        outcome.status = PointStatus::Failed(e.to_string());
    }
    outcome
}

fn summary_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "label,assignments,status,steady_log_negativity,steady_std,window_start,window_end,predicate_margin,oracle_max_rel_dev,message\n",
    );
    for p in &report.points {
        let assign: Vec<String> = p.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let (status, msg) = match &p.status {
            PointStatus::Completed => ("completed", String::new()),
            PointStatus::Skipped => ("skipped", String::new()),
            PointStatus::Failed(m) => ("failed", m.replace(['"', '\n'], " ")),
        };
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{},\"{}\"\n",
            p.label,
            assign.join(";"),
            status,
            p.steady_log_negativity,
            p.steady_std,
            p.window.0,
            p.window.1,
            p.predicate_margin,
            p.oracle_max_rel_dev.map(|x| format!("{x:e}")).unwrap_or_default(),
            msg
        ));
    }
    out
}

/// Run every sweep value of `scenario`, writing `<out>/<name>/<label>.csv`, a JSON
/// sidecar per value and `summary.csv`. Values whose sidecar hash matches are skipped.
/// Failures are recorded per value; the remaining values still run.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let dir = opts.out_dir.join(&scenario.name);
    fs::create_dir_all(&dir)?;
    // Parallelize across sweep values; a single value parallelizes across final times.
    let (outer, inner) = if scenario.points.len() > 1 {
        (opts.exec, Execution::Sequential)
    } else {
        (Execution::Sequential, opts.exec)
    };
    let points = exec::map(outer, &scenario.points, |p| run_point(p, scenario, opts, &dir, inner));
    let report = RunReport { scenario: scenario.name.clone(), directory: dir.clone(), points };
    write_atomic(&dir.join("summary.csv"), summary_csv(&report).as_bytes())?;
    Ok(report)
}
