//! Fixed-step RK4 integration of the closed loop.
//!
//! [`simulate`] integrates every agent's own equation with its protocol input
//! computed from neighbor states; [`stacked_equivalence`] integrates the
//! stacked matrix form instead. The two routes share nothing but the inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConsensusError, Result};
use crate::model::{SpanningTree, ValidatedSystem};
use crate::reduction::{self, ProtocolKind};
use crate::synthesis::GainSet;

/// Leader input `u_0`. Only constant signals are supported, matching the
/// exosystem `u_0' = 0` behind the criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum LeaderInput {
    Zero,
    Constant(Vec<f64>),
}

impl LeaderInput {
    fn vector(&self, m: usize) -> DVector<f64> {
        match self {
            LeaderInput::Zero => DVector::zeros(m),
            LeaderInput::Constant(v) => DVector::from_column_slice(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub dt: f64,
    /// `N + 1` vectors of length `n`, leader first, original ids.
    pub initial_states: Vec<DVector<f64>>,
    pub leader_input: LeaderInput,
    pub divergence_guard: f64,
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 10.0;
pub const DEFAULT_GUARD: f64 = 1e12;

impl SimulationConfig {
    pub fn new(initial_states: Vec<DVector<f64>>) -> Self {
        Self {
            t_end: DEFAULT_T_END,
            dt: DEFAULT_DT,
            initial_states,
            leader_input: LeaderInput::Zero,
            divergence_guard: DEFAULT_GUARD,
        }
    }

    pub fn validate(&self, system: &ValidatedSystem) -> Result<()> {
        let bad = |msg: String| Err(ConsensusError::SimulationConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return bad(format!("t_end {} must be at least dt {}", self.t_end, self.dt));
        }
        if self.divergence_guard.is_nan() || self.divergence_guard <= 0.0 {
            return bad("divergence guard must be positive".into());
        }
        if self.initial_states.len() != system.follower_count() + 1 {
            return bad(format!(
                "{} initial states for {} agents",
                self.initial_states.len(),
                system.follower_count() + 1
            ));
        }
        if let Some((i, x)) = self
            .initial_states
            .iter()
            .enumerate()
            .find(|(_, x)| x.len() != system.n() || x.iter().any(|v| !v.is_finite()))
        {
            return bad(format!("initial state {i} has length {}, expected {}", x.len(), system.n()));
        }
        if let LeaderInput::Constant(v) = &self.leader_input {
            if v.len() != system.m() {
                return bad(format!("leader input has length {}, expected {}", v.len(), system.m()));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// Stacked `[x_0; x_1; ...; x_N]` by original id at each instant.
    pub states: Vec<DVector<f64>>,
    /// `errors[t][i - 1] = ||x_i - x_0||_2`.
    pub errors: Vec<Vec<f64>>,
    /// `errors / (1 + ||x_0||_2)`.
    pub rel_errors: Vec<Vec<f64>>,
    pub diverged: bool,
    pub n: usize,
}

impl SimulationTrace {
    pub fn follower_count(&self) -> usize {
        self.states
            .first()
            .map(|s| s.len() / self.n - 1)
            .unwrap_or(0)
    }

    pub fn agent_state(&self, sample: usize, id: usize) -> DVector<f64> {
        self.states[sample].rows(id * self.n, self.n).into_owned()
    }

    fn push(&mut self, t: f64, x: DVector<f64>) {
        let n = self.n;
        let x0 = x.rows(0, n);
        let lead = x0.norm();
        let errs: Vec<f64> = (1..x.len() / n).map(|i| (x.rows(i * n, n) - x0).norm()).collect();
        self.rel_errors.push(errs.iter().map(|e| e / (1.0 + lead)).collect());
        self.errors.push(errs);
        self.times.push(t);
        self.states.push(x);
    }
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(field: F, x: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    let k1 = field(t, x);
    if !finite(&k1) {
        return Err(ConsensusError::IntegrationBlowUp(t));
    }
    let k2 = field(t + dt / 2.0, &(x + &k1 * (dt / 2.0)));
    let k3 = field(t + dt / 2.0, &(x + &k2 * (dt / 2.0)));
    let k4 = field(t + dt, &(x + &k3 * dt));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if !finite(&next) {
        return Err(ConsensusError::IntegrationBlowUp(t));
    }
    Ok(next)
}

fn integrate<F>(config: &SimulationConfig, n: usize, x0: DVector<f64>, field: F) -> Result<SimulationTrace>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut trace = SimulationTrace {
        times: Vec::new(),
        states: Vec::new(),
        errors: Vec::new(),
        rel_errors: Vec::new(),
        diverged: false,
        n,
    };
    let mut x = x0;
    trace.push(0.0, x.clone());
    for step in 0..config.steps() {
        let t = step as f64 * config.dt;
        x = rk4_step(&field, &x, t, config.dt)?;
        let blown = x.amax() > config.divergence_guard;
        trace.push((step + 1) as f64 * config.dt, x.clone());
        if blown {
            trace.diverged = true;
            break;
        }
    }
    Ok(trace)
}

/// Integrates each agent's equation under the chosen protocol.
pub fn simulate(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    kind: ProtocolKind,
    config: &SimulationConfig,
) -> Result<SimulationTrace> {
    gains.check_against(system)?;
    config.validate(system)?;
    let n = system.n();
    let n_f = system.follower_count();
    type Links = Vec<(usize, DMatrix<f64>)>;
    // (follower, own-state feedback A_i - B_i G_i, [(neighbor, B_i K_i W_ij)])
    let mut followers: Vec<(DMatrix<f64>, Links)> = Vec::with_capacity(n_f);
    for i in 1..=n_f {
        let agent = system.agent(i);
        let bk = &agent.b * gains.k(i);
        let links = match kind {
            ProtocolKind::Dst => {
                let j = tree.parent(i);
                vec![(j, &bk * system.graph().weight(i, j).expect("tree edge"))]
            }
            ProtocolKind::AllNeighbors => system
                .graph()
                .in_neighbors(i)
                .map(|(j, w)| (j, &bk * w))
                .collect(),
        };
        followers.push((&agent.a - &agent.b * gains.g(i), links));
    }
    let leader = system.leader();
    let drive = &leader.b * config.leader_input.vector(system.m());

    let field = |_t: f64, x: &DVector<f64>| {
        let mut dx = DVector::zeros(x.len());
        let x0 = x.rows(0, n);
        dx.rows_mut(0, n).copy_from(&(&leader.a * x0 + &drive));
        for (idx, (own, links)) in followers.iter().enumerate() {
            let i = idx + 1;
            let xi = x.rows(i * n, n);
            let mut d = own * xi;
            for (j, bkw) in links {
                d += bkw * (x.rows(j * n, n) - xi);
            }
            dx.rows_mut(i * n, n).copy_from(&d);
        }
        dx
    };
    let mut x0 = DVector::zeros((n_f + 1) * n);
    for (i, s) in config.initial_states.iter().enumerate() {
        x0.rows_mut(i * n, n).copy_from(s);
    }
    integrate(config, n, x0, field)
}

/// Integrates the stacked form `z' = F z + B u_0` with the same steps and
/// returns the largest deviation from the per-agent trace, each sample scaled
/// by `max(1, ||x(t)||_inf)`.
pub fn stacked_equivalence(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    kind: ProtocolKind,
    config: &SimulationConfig,
) -> Result<f64> {
    let reference = simulate(system, tree, gains, kind, config)?;
    let closed = reduction::closed_loop_matrix(system, tree, gains, kind)?;
    let n = system.n();
    let n_f = system.follower_count();
    let drive = &closed.b_stack * config.leader_input.vector(system.m());
    let permute_in = |x: &DVector<f64>| {
        let mut z = DVector::zeros(x.len());
        for pos in 0..=n_f {
            z.rows_mut(pos * n, n).copy_from(&x.rows(tree.original(pos) * n, n));
        }
        z
    };
    let mut z = permute_in(&reference.states[0]);
    let mut worst: f64 = 0.0;
    for (step, target) in reference.states.iter().enumerate() {
        if step > 0 {
            let t = (step - 1) as f64 * config.dt;
            z = rk4_step(|_t, v: &DVector<f64>| &closed.f * v + &drive, &z, t, config.dt)?;
        }
        let expected = permute_in(target);
        let scale = expected.amax().max(1.0);
        worst = worst.max((&z - &expected).amax() / scale);
    }
    Ok(worst)
}

/// `y_i(t) = x_{k_i}(t) - x_i(t)`, stacked by original follower id.
pub fn y_trajectory(trace: &SimulationTrace, tree: &SpanningTree) -> Vec<DVector<f64>> {
    let n = trace.n;
    let n_f = tree.follower_count();
    trace
        .states
        .iter()
        .map(|x| {
            let mut y = DVector::zeros(n_f * n);
            for i in 1..=n_f {
                let k = tree.parent(i);
                y.rows_mut((i - 1) * n, n)
                    .copy_from(&(x.rows(k * n, n) - x.rows(i * n, n)));
            }
            y
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVerdict {
    pub achieved: bool,
    /// First sample time after which every relative error stays below
    /// `epsilon` through the end of the run.
    pub t_settle: Option<f64>,
}

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_WINDOW: f64 = 2.0;

pub fn consensus_verdict(trace: &SimulationTrace, epsilon: f64, window: f64) -> ConsensusVerdict {
    let none = ConsensusVerdict {
        achieved: false,
        t_settle: None,
    };
    if trace.diverged || trace.times.is_empty() {
        return none;
    }
    let ok = |rel: &Vec<f64>| rel.iter().all(|&e| e < epsilon);
    let mut first_ok = None;
    for (idx, rel) in trace.rel_errors.iter().enumerate().rev() {
        if ok(rel) {
            first_ok = Some(idx);
        } else {
            break;
        }
    }
    let Some(idx) = first_ok else {
        return none;
    };
    let t_settle = trace.times[idx];
    let t_end = *trace.times.last().unwrap();
    ConsensusVerdict {
        achieved: t_settle <= t_end - window + 1e-9,
        t_settle: Some(t_settle),
    }
}
