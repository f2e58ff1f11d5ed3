//! Subcommand orchestration. Every command produces one JSON document; the
//! ones that render traces also write `trace.csv` and `errors.svg`.

use std::path::{Path, PathBuf};

use consensus_core::fixtures;
use consensus_core::linalg;
use consensus_core::model::{find_spanning_tree, SpanningTree};
use consensus_core::simulate::{self, SimulationConfig};
use consensus_core::synthesis::{self, CriterionReport, GainSet};
use consensus_core::{reduction, ConsensusError, ProtocolKind, SimulationTrace};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{rows_of, ConfigError, GainSpec, Rows, RunConfig};
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Validate,
    Tree,
    Reduce,
    Design,
    Check,
    Simulate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Tree => "tree",
            Command::Reduce => "reduce",
            Command::Design => "design",
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub protocol: Option<ProtocolKind>,
    pub rate: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numeric(#[from] ConsensusError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub document: Value,
    /// False when a criterion failed or consensus was not reached.
    pub success: bool,
    pub artifacts: Vec<PathBuf>,
}

const DEFAULT_SEED: u64 = 0;
/// Pole targets `-{1..n}` when no rate is configured.
pub const DEFAULT_RATE: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeDoc {
    /// One edge per follower, listed by follower id.
    pub edges: Vec<TreeEdge>,
    /// Follower ids in the parent-before-child order used internally.
    pub visiting_order: Vec<usize>,
}

fn tree_doc(tree: &SpanningTree) -> TreeDoc {
    TreeDoc {
        edges: (1..=tree.follower_count())
            .map(|child| TreeEdge {
                parent: tree.parent(child),
                child,
            })
            .collect(),
        visiting_order: tree.order().to_vec(),
    }
}

/// Where the gains in a run came from.
#[derive(Debug, Clone, Serialize)]
pub struct GainsDoc {
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(rename = "G")]
    pub g: Vec<Rows>,
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
}

fn gains_doc(gains: &GainSet, rate: Option<f64>) -> GainsDoc {
    GainsDoc {
        source: if rate.is_some() { "designed" } else { "config" },
        rate,
        g: gains.g_all().iter().map(rows_of).collect(),
        k: gains.k_all().iter().map(rows_of).collect(),
    }
}

/// `{"gains": {"G": ..., "K": ...}}`, ready to paste into a config.
pub fn gain_fragment(gains: &GainSet) -> Value {
    let spec = GainSpec {
        g: Some(gains.g_all().iter().map(rows_of).collect()),
        k: Some(gains.k_all().iter().map(rows_of).collect()),
    };
    json!({ "gains": spec })
}

struct Context<'a> {
    config: &'a RunConfig,
    options: &'a Options,
    protocol: ProtocolKind,
    tree: SpanningTree,
}

impl<'a> Context<'a> {
    fn new(config: &'a RunConfig, options: &'a Options) -> Result<Self, CliError> {
        let tree = find_spanning_tree(config.system.graph())?;
        Ok(Self {
            config,
            options,
            protocol: options.protocol.unwrap_or(config.protocol()),
            tree,
        })
    }

    fn rate(&self) -> f64 {
        self.options
            .rate
            .or(self.config.file.design.map(|d| d.rate))
            .unwrap_or(DEFAULT_RATE)
    }

    fn design(&self, rate: f64) -> Result<GainSet, CliError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(CliError::Usage(format!("--rate must be positive, got {rate}")));
        }
        // both protocols use the tree route; the all-neighbors check then
        // verifies the result
        Ok(synthesis::design_gains(
            &self.config.system,
            &self.tree,
            Some(self.config.g.clone()),
            rate,
        )?)
    }

    /// Configured `K` is used as given unless `--rate` asks for a fresh
    /// design; without `K` the gains are designed.
    fn gains(&self) -> Result<(GainSet, Option<f64>), CliError> {
        match (&self.config.k, self.options.rate) {
            (Some(k), None) => Ok((GainSet::new(self.config.g.clone(), k.clone())?, None)),
            _ => {
                let rate = self.rate();
                Ok((self.design(rate)?, Some(rate)))
            }
        }
    }

    fn check(&self, gains: &GainSet) -> Result<CriterionReport, CliError> {
        Ok(synthesis::check(
            &self.config.system,
            &self.tree,
            gains,
            self.protocol,
            self.config.tolerances(),
        )?)
    }

    fn reduce_doc(&self, gains: &GainSet) -> Result<Value, CliError> {
        let tol = self.config.tolerances();
        let reduced = reduction::reduce(&self.config.system, &self.tree, gains, self.protocol, tol)?;
        let tail = reduced.tail();
        Ok(json!({
            "protocol": self.protocol,
            "s": reduced.s,
            "h": reduced.h,
            "rank_tolerance": reduced.rank_tolerance,
            "follower_block_dim": reduced.abar.nrows(),
            "auxiliary_dim": reduced.mbar.nrows(),
            "spectral_abscissa": {
                "follower_block": finite_or_null(linalg::spectral_abscissa(&reduced.abar)?),
                "leader_tail": finite_or_null(linalg::spectral_abscissa(&tail)?),
                "auxiliary": finite_or_null(linalg::spectral_abscissa(&reduced.mbar)?),
            },
            "tolerances": tol,
        }))
    }

    fn simulation_config(&self) -> (SimulationConfig, &'static str, Option<u64>) {
        let sim = self.config.sim();
        let (states, source, seed) = match &self.config.initial_states {
            Some(states) => (states.clone(), "config", None),
            None => {
                let seed = self.options.seed.unwrap_or(DEFAULT_SEED);
                let mut rng = fixtures::rng(seed);
                let n = self.config.system.n();
                let agents = self.config.system.follower_count() + 1;
                (fixtures::random_initial_states(&mut rng, agents, n), "seed", Some(seed))
            }
        };
        let config = SimulationConfig {
            t_end: sim.t_end,
            dt: sim.dt,
            initial_states: states,
            leader_input: sim.leader_input.clone(),
            divergence_guard: sim.divergence_guard,
        };
        (config, source, seed)
    }

    fn simulate(&self, gains: &GainSet) -> Result<(SimulationTrace, Value, bool), CliError> {
        let (sim_config, source, seed) = self.simulation_config();
        let trace = simulate::simulate(&self.config.system, &self.tree, gains, self.protocol, &sim_config)?;
        let sim = self.config.sim();
        let verdict = simulate::consensus_verdict(&trace, sim.epsilon, sim.window);
        let last = trace.times.len() - 1;
        let final_errors: Vec<Value> = (1..=trace.follower_count())
            .map(|i| {
                json!({
                    "follower": i,
                    "err": finite_or_null(trace.errors[last][i - 1]),
                    "relerr": finite_or_null(trace.rel_errors[last][i - 1]),
                })
            })
            .collect();
        let doc = json!({
            "settings": {
                "t_end": sim.t_end,
                "dt": sim.dt,
                "epsilon": sim.epsilon,
                "window": sim.window,
                "divergence_guard": sim.divergence_guard,
                "leader_input": sim.leader_input,
                "initial_states": source,
                "seed": seed,
            },
            "achieved": verdict.achieved,
            "t_settle": verdict.t_settle,
            "diverged": trace.diverged,
            "t_final": trace.times[last],
            "final_errors": final_errors,
        });
        Ok((trace, doc, verdict.achieved))
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.options.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(dir)
    }

    fn write_trace(&self, trace: &SimulationTrace) -> Result<Vec<PathBuf>, CliError> {
        let dir = self.out_dir()?;
        let csv = dir.join("trace.csv");
        let svg = dir.join("errors.svg");
        output::write_csv(trace, &csv).map_err(|e| io_error(&csv, e))?;
        output::write_svg(trace, &svg).map_err(|e| io_error(&svg, e))?;
        Ok(vec![csv, svg])
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// JSON has no infinities; an empty spectrum or a blown-up value becomes null.
fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn check_doc(report: &CriterionReport) -> Value {
    json!({
        "verdict": if report.overall { "PASS" } else { "FAIL" },
        "failing_followers": report.failing_followers(),
        "tail_fails": !report.tail_block.hurwitz.verdict,
        "criterion": report,
    })
}

pub fn run_command(cmd: Command, config: &RunConfig, options: &Options) -> Result<Outcome, CliError> {
    let ctx = Context::new(config, options)?;
    let mut artifacts = Vec::new();
    let (body, success) = match cmd {
        Command::Validate => {
            let d = &config.file.dims;
            (
                json!({
                    "valid": true,
                    "n": d.n,
                    "m": d.m,
                    "N": d.followers,
                    "edges": config.system.graph().edge_count(),
                    "protocol": ctx.protocol,
                    "gains_given": config.k.is_some(),
                    "tolerances": config.tolerances(),
                    "sim": config.sim(),
                }),
                true,
            )
        }
        Command::Tree => (json!({ "tree": tree_doc(&ctx.tree) }), true),
        Command::Reduce => {
            let (gains, rate) = ctx.gains()?;
            (
                json!({ "gains": gains_doc(&gains, rate), "reduced": ctx.reduce_doc(&gains)? }),
                true,
            )
        }
        Command::Design => {
            let rate = ctx.rate();
            let gains = ctx.design(rate)?;
            let mut doc = gain_fragment(&gains);
            doc["rate"] = json!(rate);
            doc["protocol"] = json!(ctx.protocol);
            (doc, true)
        }
        Command::Check => {
            let (gains, rate) = ctx.gains()?;
            let report = ctx.check(&gains)?;
            let ok = report.overall;
            (
                json!({
                    "protocol": ctx.protocol,
                    "tree": tree_doc(&ctx.tree),
                    "gains": gains_doc(&gains, rate),
                    "check": check_doc(&report),
                }),
                ok,
            )
        }
        Command::Simulate => {
            let (gains, rate) = ctx.gains()?;
            let (trace, sim_doc, achieved) = ctx.simulate(&gains)?;
            artifacts.extend(ctx.write_trace(&trace)?);
            (
                json!({
                    "protocol": ctx.protocol,
                    "gains": gains_doc(&gains, rate),
                    "consensus": sim_doc,
                }),
                achieved,
            )
        }
        Command::Report => {
            let (gains, rate) = ctx.gains()?;
            let report = ctx.check(&gains)?;
            let (trace, sim_doc, achieved) = ctx.simulate(&gains)?;
            artifacts.extend(ctx.write_trace(&trace)?);
            let ok = report.overall && achieved;
            (
                json!({
                    "protocol": ctx.protocol,
                    "verdict": if ok { "PASS" } else { "FAIL" },
                    "tree": tree_doc(&ctx.tree),
                    "gains": gains_doc(&gains, rate),
                    "reduced": ctx.reduce_doc(&gains)?,
                    "check": check_doc(&report),
                    "consensus": sim_doc,
                    "tolerances": config.tolerances(),
                }),
                ok,
            )
        }
    };
    let mut document = json!({ "command": cmd.name() });
    if let (Value::Object(head), Value::Object(rest)) = (&mut document, body) {
        head.extend(rest);
    }
    if options.out.is_some() {
        let path = ctx.out_dir()?.join(format!("{}.json", cmd.name()));
        let text = serde_json::to_string_pretty(&document).expect("serializable document");
        std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        artifacts.push(path);
    }
    Ok(Outcome {
        document,
        success,
        artifacts,
    })
}
