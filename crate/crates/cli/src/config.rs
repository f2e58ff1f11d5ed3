//! JSON run configuration: parsing, defaults and semantic validation.
//!
//! Matrices are written row-major as arrays of rows, e.g. `[[1, 0], [0, 1]]`.
//! Every error names either a line/column (syntax) or a field path such as
//! `edges[2].weight` (semantics).

use std::path::Path;

use consensus_core::model::{validate_system, AgentDynamics, MatrixWeightedDigraph, WeightedEdge};
use consensus_core::simulate::{DEFAULT_DT, DEFAULT_EPSILON, DEFAULT_GUARD, DEFAULT_T_END, DEFAULT_WINDOW};
use consensus_core::{LeaderInput, ProtocolKind, Tolerances, ValidatedSystem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-major matrix as written in the config file.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message} (line {line}, column {column})")]
    Schema {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub followers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub weight: Rows,
}

/// `G` defaults to zero; a missing `K` must be designed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Rows>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Rows>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub t_end: f64,
    pub dt: f64,
    /// Leader first. Drawn from `--seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
    pub leader_input: LeaderInput,
    pub divergence_guard: f64,
    /// Relative-error threshold for the consensus verdict.
    pub epsilon: f64,
    /// Final stretch of the horizon over which the threshold must hold.
    pub window: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            t_end: DEFAULT_T_END,
            dt: DEFAULT_DT,
            initial_states: None,
            leader_input: LeaderInput::Zero,
            divergence_guard: DEFAULT_GUARD,
            epsilon: DEFAULT_EPSILON,
            window: DEFAULT_WINDOW,
        }
    }
}

/// The file as written, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dims: Dims,
    pub leader: AgentSpec,
    pub followers: Vec<AgentSpec>,
    pub edges: Vec<EdgeSpec>,
    pub protocol: ProtocolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A configuration that passed every check, with its matrices built.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub system: ValidatedSystem,
    /// One `m x n` matrix per follower; zeros when not given.
    pub g: Vec<DMatrix<f64>>,
    pub k: Option<Vec<DMatrix<f64>>>,
    pub initial_states: Option<Vec<DVector<f64>>>,
}

impl RunConfig {
    pub fn protocol(&self) -> ProtocolKind {
        self.file.protocol
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.file.tolerances
    }

    pub fn sim(&self) -> &SimSpec {
        &self.file.sim
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let (line, column) = (inner.line(), inner.column());
        if inner.is_syntax() || inner.is_eof() {
            ConfigError::Syntax {
                line,
                column,
                message: strip_position(&inner.to_string()),
            }
        } else {
            ConfigError::Schema {
                path,
                message: strip_position(&inner.to_string()),
                line,
                column,
            }
        }
    })?;
    de.end().map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    build(file)
}

/// serde_json appends " at line L column C"; the variants carry those apart.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_string(),
        None => message.to_string(),
    }
}

fn matrix(rows: &Rows, path: &str, what: &str, shape: (usize, usize)) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(idx) = rows.iter().position(|row| row.len() != c) {
        return Err(field(
            format!("{path}[{idx}]"),
            format!("row has {} entries, row 0 has {c}", rows[idx].len()),
        ));
    }
    if (r, c) != shape {
        return Err(field(
            path,
            format!("{what} ({}×{}), got {r}×{c}", shape.0, shape.1),
        ));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn agent(spec: &AgentSpec, path: &str, n: usize, m: usize) -> Result<AgentDynamics, ConfigError> {
    let a = matrix(&spec.a, &format!("{path}.A"), "A must be n×n", (n, n))?;
    let b = matrix(&spec.b, &format!("{path}.B"), "B must be n×m", (n, m))?;
    AgentDynamics::new(a, b).map_err(|e| field(path, e.to_string()))
}

fn gain_list(
    list: &[Rows],
    path: &str,
    followers: usize,
    shape: (usize, usize),
) -> Result<Vec<DMatrix<f64>>, ConfigError> {
    if list.len() != followers {
        return Err(field(
            path,
            format!("expected one gain per follower (N = {followers}), got {}", list.len()),
        ));
    }
    list.iter()
        .enumerate()
        .map(|(i, rows)| matrix(rows, &format!("{path}[{i}]"), "gain must be m×n", shape))
        .collect()
}

fn positive(value: f64, path: &str) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be a positive finite number, got {value}")))
    }
}

fn build(file: ConfigFile) -> Result<RunConfig, ConfigError> {
    let Dims { n, m, followers: n_f } = file.dims;
    if n == 0 || m == 0 || n_f == 0 {
        return Err(field("dims", "n, m and N must all be at least 1"));
    }
    if file.followers.len() != n_f {
        return Err(field(
            "followers",
            format!("expected N = {n_f} followers, got {}", file.followers.len()),
        ));
    }
    let mut agents = vec![agent(&file.leader, "leader", n, m)?];
    for (i, spec) in file.followers.iter().enumerate() {
        agents.push(agent(spec, &format!("followers[{i}]"), n, m)?);
    }

    let mut edges = Vec::with_capacity(file.edges.len());
    for (idx, e) in file.edges.iter().enumerate() {
        let path = format!("edges[{idx}]");
        let weight = matrix(&e.weight, &format!("{path}.weight"), "weight must be n×n", (n, n))?;
        let edge = WeightedEdge {
            from: e.from,
            to: e.to,
            weight,
        };
        // per-edge checks in isolation so the error carries the index
        MatrixWeightedDigraph::new(n_f + 1, [edge.clone()]).map_err(|err| field(&path, err.to_string()))?;
        if let Some(prev) = edges
            .iter()
            .position(|p: &WeightedEdge| p.from == edge.from && p.to == edge.to)
        {
            return Err(field(
                path,
                format!("duplicates edges[{prev}] ({} -> {})", edge.from, edge.to),
            ));
        }
        edges.push(edge);
    }
    let graph = MatrixWeightedDigraph::new(n_f + 1, edges).map_err(|e| field("edges", e.to_string()))?;
    let system = validate_system(agents, graph).map_err(|e| field("dims", e.to_string()))?;

    let (g, k) = match &file.gains {
        None => (vec![DMatrix::zeros(m, n); n_f], None),
        Some(spec) => {
            let g = match &spec.g {
                Some(list) => gain_list(list, "gains.G", n_f, (m, n))?,
                None => vec![DMatrix::zeros(m, n); n_f],
            };
            let k = spec
                .k
                .as_ref()
                .map(|list| gain_list(list, "gains.K", n_f, (m, n)))
                .transpose()?;
            (g, k)
        }
    };

    if let Some(design) = &file.design {
        positive(design.rate, "design.rate")?;
    }

    let sim = &file.sim;
    positive(sim.dt, "sim.dt")?;
    positive(sim.t_end, "sim.t_end")?;
    if sim.t_end < sim.dt {
        return Err(field("sim.t_end", format!("must be at least dt = {}", sim.dt)));
    }
    positive(sim.divergence_guard, "sim.divergence_guard")?;
    positive(sim.epsilon, "sim.epsilon")?;
    // a window longer than the horizon is allowed; consensus is then never declared
    if !(sim.window >= 0.0 && sim.window.is_finite()) {
        return Err(field(
            "sim.window",
            format!("must be a nonnegative finite number, got {}", sim.window),
        ));
    }
    if let LeaderInput::Constant(v) = &sim.leader_input {
        if v.len() != m {
            return Err(field(
                "sim.leader_input.value",
                format!("must have length m = {m}, got {}", v.len()),
            ));
        }
    }
    let initial_states = match &sim.initial_states {
        None => None,
        Some(states) => {
            if states.len() != n_f + 1 {
                return Err(field(
                    "sim.initial_states",
                    format!("expected N + 1 = {} states (leader first), got {}", n_f + 1, states.len()),
                ));
            }
            let mut out = Vec::with_capacity(states.len());
            for (i, s) in states.iter().enumerate() {
                if s.len() != n {
                    return Err(field(
                        format!("sim.initial_states[{i}]"),
                        format!("must have length n = {n}, got {}", s.len()),
                    ));
                }
                out.push(DVector::from_column_slice(s));
            }
            Some(out)
        }
    };

    let tol = &file.tolerances;
    if !(tol.hurwitz_margin >= 0.0 && tol.hurwitz_margin.is_finite()) {
        return Err(field("tolerances.hurwitz_margin", "must be a nonnegative finite number"));
    }
    positive(tol.rank_tol_scale, "tolerances.rank_tol_scale")?;
    if tol.gerschgorin_grid == 0 {
        return Err(field("tolerances.gerschgorin_grid", "must be at least 1"));
    }

    Ok(RunConfig {
        file,
        system,
        g,
        k,
        initial_states,
    })
}

/// Row-major nested arrays for writing matrices back out.
pub fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dims": {"n": 1, "m": 1, "N": 1},
        "leader": {"A": [[0]], "B": [[1]]},
        "followers": [{"A": [[0]], "B": [[1]]}],
        "edges": [{"from": 0, "to": 1, "weight": [[1]]}],
        "protocol": "dst"
    }"#;

    fn with(replace: &str, by: &str) -> String {
        assert!(MINIMAL.contains(replace), "{replace}");
        MINIMAL.replacen(replace, by, 1)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.file.sim, SimSpec::default());
        assert_eq!(cfg.file.tolerances, Tolerances::default());
        assert!(cfg.k.is_none());
        assert_eq!(cfg.g, vec![DMatrix::zeros(1, 1)]);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let text = "{\n  \"dims\": {\"n\": 1,, }\n}";
        match parse_config_str(text) {
            Err(ConfigError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, 19);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_followers_names_the_field() {
        let text = with(r#""followers": [{"A": [[0]], "B": [[1]]}],"#, "");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("followers"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected_with_path() {
        let text = with(r#""dims": {"n": 1,"#, r#""dims": {"extra": 3, "n": 1,"#);
        let err = parse_config_str(&text).unwrap_err();
        match &err {
            ConfigError::Schema { path, message, .. } => {
                assert_eq!(path, "dims.extra");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_weight_shape() {
        let text = with(r#""weight": [[1]]"#, r#""weight": [[1, 2]]"#);
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("edges[0].weight:"), "{err}");
        assert!(err.contains("weight must be n×n"), "{err}");
    }

    #[test]
    fn ragged_rows_name_the_row() {
        let text = with(r#""leader": {"A": [[0]]"#, r#""leader": {"A": [[0], []]"#);
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("leader.A[1]:"), "{err}");
    }

    #[test]
    fn edge_into_leader_carries_index() {
        let text = with(
            r#""edges": [{"from": 0, "to": 1, "weight": [[1]]}]"#,
            r#""edges": [{"from": 0, "to": 1, "weight": [[1]]}, {"from": 1, "to": 0, "weight": [[1]]}]"#,
        );
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("edges[1]:"), "{err}");
    }

    #[test]
    fn follower_count_must_match_dims() {
        let text = with(r#""N": 1"#, r#""N": 2"#);
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("followers:"), "{err}");
    }

    #[test]
    fn gain_count_is_checked() {
        let text = with(r#""protocol": "dst""#, r#""protocol": "dst", "gains": {"K": [[[1]], [[2]]]}"#);
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("gains.K:"), "{err}");
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        let text = with(
            r#""protocol": "dst""#,
            r#""protocol": "dst", "tolerances": {"gerschgorin_grid": 0}"#,
        );
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("tolerances.gerschgorin_grid:"), "{err}");
    }

    #[test]
    fn constant_leader_input_length() {
        let text = with(
            r#""protocol": "dst""#,
            r#""protocol": "dst", "sim": {"leader_input": {"kind": "constant", "value": [1, 2]}}"#,
        );
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("sim.leader_input.value:"), "{err}");
    }

    #[test]
    fn trailing_garbage_is_a_syntax_error() {
        let text = format!("{MINIMAL} x");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Syntax { .. })));
    }
}
