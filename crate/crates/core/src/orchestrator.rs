//! The collaborative learning loop.
//!
//! Each iteration `n`:
//!
//! 1. every agent takes one Langevin step toward its own training data and the
//!    current consensus `theta_bar = sum_k pi[k] theta[k]`;
//! 2. the principal scores the moved agents on the held-out set, charges the
//!    mixture loss under the weights the agents just used, and discounts the
//!    weights;
//! 3. the loop stops once the consensus moves by at most `tol` or after `N`
//!    iterations.
//!
//! Agents draw noise from their own ChaCha stream, so the result does not
//! depend on how many worker threads run the agent steps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dynamics::{mean_estimate_into, AgentState, DynamicsParams};
use crate::error::{Error, Result};
use crate::model::{clip_gradient_in_place, loss_gradient_into, quadratic_loss, ModelSpec};
use crate::principal::{index_from_loss, log_sum_exp, PrincipalParams, PrincipalState};

/// Slack allowed when comparing the cumulative loss with its bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Random stream owned by one agent.
pub type AgentRng = ChaCha20Rng;

/// One reproducible stream per agent, all derived from `seed`. Stream `k` uses
/// ChaCha stream id `k`, so streams never overlap.
pub fn rng_streams(seed: u64, k: usize) -> Vec<AgentRng> {
    (0..k)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect()
}

/// Where the agents start.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    /// Shared data-driven guess from [`ModelSpec::initial_guess`] on the pooled
    /// training sets, zero momentum.
    #[default]
    Auto,
    /// The same start for every agent; momentum defaults to zero.
    Shared {
        theta: Vec<f64>,
        momentum: Option<Vec<f64>>,
    },
    /// One start per agent; momenta default to zero.
    PerAgent {
        thetas: Vec<Vec<f64>>,
        momenta: Option<Vec<Vec<f64>>>,
    },
}

impl InitialState {
    fn build(&self, model: &ModelSpec, train_sets: &[Dataset]) -> Result<Vec<AgentState>> {
        let k = train_sets.len();
        let p = model.param_dim();
        let zeros = vec![0.0; p];
        let states: Vec<AgentState> = match self {
            InitialState::Auto => {
                let theta = model.initial_guess(train_sets);
                (0..k)
                    .map(|_| AgentState::at_rest(theta.clone()))
                    .collect::<Result<_>>()?
            }
            InitialState::Shared { theta, momentum } => {
                let momentum = momentum.clone().unwrap_or_else(|| zeros.clone());
                (0..k)
                    .map(|_| AgentState::new(theta.clone(), momentum.clone()))
                    .collect::<Result<_>>()?
            }
            InitialState::PerAgent { thetas, momenta } => {
                if thetas.len() != k || momenta.as_ref().is_some_and(|m| m.len() != k) {
                    return Err(Error::validation(
                        "run.theta0",
                        format!("per-agent initial values must list {k} agents"),
                    ));
                }
                thetas
                    .iter()
                    .enumerate()
                    .map(|(i, theta)| {
                        let momentum = momenta
                            .as_ref()
                            .map_or_else(|| zeros.clone(), |m| m[i].clone());
                        AgentState::new(theta.clone(), momentum)
                    })
                    .collect::<Result<_>>()?
            }
        };
        if let Some(s) = states.iter().find(|s| s.dim() != p) {
            return Err(Error::validation(
                "run.theta0",
                format!("initial state has {} components, model needs {p}", s.dim()),
            ));
        }
        Ok(states)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Number of agents `K`.
    pub agents: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Iteration budget `N`; the step size is `T / N`.
    pub steps: usize,
    pub dynamics: DynamicsParams,
    pub principal: PrincipalParams,
    /// Stop once `|theta_bar_{n+1} - theta_bar_n|_2 <= tol`.
    pub tol: f64,
    pub seed: u64,
    /// Keep every `record_stride`-th iteration (plus the last) in the trajectory.
    pub record_stride: usize,
    /// Rescale gradients to satisfy `|g|^2 <= L (1 + |theta|^2)` when set.
    pub l_lip: Option<f64>,
    /// Clamp parameters into the model's box after every step.
    pub project_to_box: bool,
    pub initial: InitialState,
    /// Worker threads for agent steps; 0 or 1 runs everything inline.
    pub threads: usize,
}

impl RunConfig {
    /// The experiment setting for the Paramecium growth data: `T = 1`,
    /// `N = 10^5`, `gamma = 1`, `eta = 0.01`, `c = 0.001`, `beta = 0.5`,
    /// `mu = 0.001`.
    pub fn gause_defaults(agents: usize) -> Self {
        let horizon = 1.0;
        let steps = 100_000;
        Self {
            agents,
            horizon,
            steps,
            dynamics: DynamicsParams {
                delta: horizon / steps as f64,
                gamma: 1.0,
                eta: 0.01,
                c: 0.001,
            },
            principal: PrincipalParams {
                beta: 0.5,
                mu: 0.001,
            },
            tol: 1e-8,
            seed: 0,
            record_stride: 100,
            l_lip: None,
            project_to_box: false,
            initial: InitialState::Auto,
            threads: 1,
        }
    }

    /// Sets `T` and `N` and the matching step size.
    pub fn with_schedule(mut self, horizon: f64, steps: usize) -> Self {
        self.horizon = horizon;
        self.steps = steps;
        self.dynamics.delta = horizon / steps as f64;
        self
    }

    pub fn delta(&self) -> f64 {
        self.dynamics.delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::validation("run.agents", "need at least one agent"));
        }
        if self.steps == 0 {
            return Err(Error::validation("run.steps", "need at least one step"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::validation(
                "run.horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        self.dynamics
            .validate()
            .map_err(|e| prefix_key(e, "run."))?;
        PrincipalParams::new(self.principal.beta, self.principal.mu)
            .map_err(|e| prefix_key(e, "run."))?;
        let expected = self.horizon / self.steps as f64;
        if (self.dynamics.delta - expected).abs() > 1e-15 {
            return Err(Error::validation(
                "run.delta",
                format!(
                    "step size {} disagrees with horizon / steps = {expected}",
                    self.dynamics.delta
                ),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::validation(
                "run.tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::validation("run.record_stride", "must be at least 1"));
        }
        if let Some(l) = self.l_lip {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::validation(
                    "model.l_lip",
                    format!("must be positive, got {l}"),
                ));
            }
        }
        Ok(())
    }
}

fn prefix_key(err: Error, prefix: &str) -> Error {
    match err {
        Error::Validation { key, msg } => Error::Validation {
            key: format!("{prefix}{key}"),
            msg,
        },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Convergence,
    Horizon,
}

/// State after iteration `n`: agents have moved to `theta_{n+1}`, `rho` scores
/// those moved parameters, and `pi` / `log_alpha` are the updated weights.
/// `step_loss` is `L_n`, charged under the weights in force during the move.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    /// `tau_{n+1} = (n + 1) delta`.
    pub tau: f64,
    pub theta_bar: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub pi: Vec<f64>,
    pub step_loss: f64,
    /// Sum of `L_m` over the iterations since the previous recorded row, this one
    /// included. Summing this column over all rows gives the cumulative loss.
    pub window_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub beta: f64,
    pub initial_theta_bar: Vec<f64>,
    pub rows: Vec<StepRecord>,
    /// Every `L_n`, unthinned.
    pub step_losses: Vec<f64>,
    pub consensus: Vec<f64>,
    pub steps_executed: usize,
    pub terminated_by: Termination,
    pub cumulative_loss: f64,
    pub final_log_alpha: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub holds: bool,
    pub cumulative_loss: f64,
    pub bound: f64,
}

/// Recomputes `L` from the step losses and the bound from the final log-weights.
pub fn verify_bound(record: &TrajectoryRecord, beta: f64) -> BoundReport {
    let cumulative_loss: f64 = record.step_losses.iter().sum();
    let bound = -log_sum_exp(&record.final_log_alpha) / (1.0 - beta);
    BoundReport {
        holds: cumulative_loss <= bound + BOUND_SLACK,
        cumulative_loss,
        bound,
    }
}

struct Agent<'a> {
    state: AgentState,
    rng: AgentRng,
    train: &'a Dataset,
    grad: Vec<f64>,
    noise: Vec<f64>,
    rho: f64,
}

struct StepEnv<'a> {
    model: &'a ModelSpec,
    config: &'a RunConfig,
    test_set: &'a Dataset,
}

impl Agent<'_> {
    fn step(
        &mut self,
        index: usize,
        n: usize,
        theta_bar: &[f64],
        tau_next: f64,
        env: &StepEnv,
    ) -> Result<()> {
        let fail = |e: Error| Error::NumericFailure {
            agent: index,
            step: n,
            detail: e.to_string(),
        };
        loss_gradient_into(env.model, self.state.theta(), self.train, &mut self.grad)
            .map_err(fail)?;
        if let Some(l_lip) = env.config.l_lip {
            clip_gradient_in_place(&mut self.grad, self.state.theta(), l_lip);
        }
        for z in self.noise.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        self.state
            .advance(
                &self.grad,
                theta_bar,
                &env.config.dynamics,
                tau_next,
                &self.noise,
            )
            .map_err(|e| e.at(index, n))?;
        if env.config.project_to_box {
            if let Some(b) = env.model.param_box() {
                b.clamp(self.state.theta_mut());
            }
        }
        let test_loss =
            quadratic_loss(env.model, self.state.theta(), env.test_set).map_err(fail)?;
        self.rho = index_from_loss(test_loss, env.config.principal.mu);
        Ok(())
    }
}

fn consensus(agents: &[Agent], pi: &[f64], out: &mut [f64]) -> Result<()> {
    let thetas: Vec<&[f64]> = agents.iter().map(|a| a.state.theta()).collect();
    mean_estimate_into(&thetas, pi, out)
}

/// Runs the full loop and returns the recorded trajectory.
pub fn run(
    config: &RunConfig,
    model: &ModelSpec,
    train_sets: &[Dataset],
    test_set: &Dataset,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if train_sets.len() != config.agents {
        return Err(Error::validation(
            "run.agents",
            format!(
                "{} agents configured but {} training sets given",
                config.agents,
                train_sets.len()
            ),
        ));
    }
    if let Some(d) = train_sets.iter().chain([test_set]).find(|d| d.is_empty()) {
        return Err(Error::invalid(format!("dataset `{}` is empty", d.label())));
    }
    if config.project_to_box && model.param_box().is_none() {
        return Err(Error::validation(
            "model.param_box",
            "projection requested but the model has no parameter box",
        ));
    }

    let k = config.agents;
    let p = model.param_dim();
    let env = StepEnv {
        model,
        config,
        test_set,
    };

    let agents: Vec<Agent> = config
        .initial
        .build(model, train_sets)?
        .into_iter()
        .zip(rng_streams(config.seed, k))
        .zip(train_sets)
        .map(|((state, rng), train)| Agent {
            state,
            rng,
            train,
            grad: vec![0.0; p],
            noise: vec![0.0; p],
            rho: 0.0,
        })
        .collect();

    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?,
        )
    } else {
        None
    };

    // Entering the pool once keeps the per-step fork/join cheap.
    match pool {
        Some(pool) => pool.install(|| drive(config, &env, agents, true)),
        None => drive(config, &env, agents, false),
    }
}

fn drive(
    config: &RunConfig,
    env: &StepEnv,
    mut agents: Vec<Agent>,
    parallel: bool,
) -> Result<TrajectoryRecord> {
    let k = agents.len();
    let p = env.model.param_dim();
    let delta = config.delta();
    let beta = config.principal.beta;
    let mut principal = PrincipalState::uniform(k)?;
    let mut theta_bar = vec![0.0; p];
    consensus(&agents, principal.pi(), &mut theta_bar)?;
    let initial_theta_bar = theta_bar.clone();
    let mut next_bar = vec![0.0; p];
    let mut rho = vec![0.0; k];
    let mut rows = Vec::with_capacity(config.steps / config.record_stride + 2);
    let mut window_loss = 0.0;
    let mut terminated_by = Termination::Horizon;
    let mut steps_executed = 0;

    for n in 0..config.steps {
        let tau_next = (n + 1) as f64 * delta;
        let bar = theta_bar.as_slice();
        if parallel {
            agents
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(i, a)| a.step(i, n, bar, tau_next, env))?;
        } else {
            for (i, a) in agents.iter_mut().enumerate() {
                a.step(i, n, bar, tau_next, env)?;
            }
        }

        for (r, a) in rho.iter_mut().zip(&agents) {
            *r = a.rho;
        }
        let step_loss = principal.observe(&rho, beta)?;
        window_loss += step_loss;
        consensus(&agents, principal.pi(), &mut next_bar)?;
        steps_executed = n + 1;

        let moved = next_bar
            .iter()
            .zip(&theta_bar)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        // theta_{n+1} = theta_n + delta p_n, so with the default zero starting
        // momentum the first move is always nil; the test starts at n = 1.
        let converged = n >= 1 && moved <= config.tol;
        let last = converged || n + 1 == config.steps;

        if n % config.record_stride == 0 || last {
            rows.push(StepRecord {
                n,
                tau: tau_next,
                theta_bar: next_bar.clone(),
                thetas: agents.iter().map(|a| a.state.theta().to_vec()).collect(),
                rho: rho.clone(),
                log_alpha: principal.log_alpha().to_vec(),
                pi: principal.pi().to_vec(),
                step_loss,
                window_loss,
            });
            window_loss = 0.0;
        }
        std::mem::swap(&mut theta_bar, &mut next_bar);
        if converged {
            terminated_by = Termination::Convergence;
            break;
        }
    }

    Ok(TrajectoryRecord {
        beta,
        initial_theta_bar,
        rows,
        step_losses: principal.step_losses().to_vec(),
        consensus: theta_bar,
        steps_executed,
        terminated_by,
        cumulative_loss: principal.cumulative_loss(),
        final_log_alpha: principal.log_alpha().to_vec(),
        bound: principal.bound(beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn linear_sets() -> (Vec<Dataset>, Dataset) {
        let a = Dataset::new("agent-1", vec![(1.0, 2.0), (2.0, 4.1)]).unwrap();
        let b = Dataset::new("agent-2", vec![(1.0, 1.9), (3.0, 6.0)]).unwrap();
        let test = Dataset::new("principal-test", vec![(2.0, 4.0), (4.0, 8.0)]).unwrap();
        (vec![a, b], test)
    }

    fn small_config(agents: usize) -> RunConfig {
        let mut c = RunConfig::gause_defaults(agents).with_schedule(10.0, 2_000);
        c.dynamics.c = 0.01;
        c.principal.mu = 0.5;
        c.record_stride = 10;
        c.initial = InitialState::Shared {
            theta: vec![0.0],
            momentum: None,
        };
        c
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = rng_streams(7, 3);
        let mut b = rng_streams(7, 3);
        let xa: Vec<u64> = a.iter_mut().map(|r| r.random()).collect();
        let xb: Vec<u64> = b.iter_mut().map(|r| r.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa[0], xa[1]);
        assert_ne!(xa[1], xa[2]);
        let mut c = rng_streams(8, 1);
        assert_ne!(c[0].random::<u64>(), xa[0]);
    }

    #[test]
    fn records_are_consistent() {
        let (train, test) = linear_sets();
        let model = ModelSpec::new(ModelKind::Linear);
        let cfg = small_config(2);
        let rec = run(&cfg, &model, &train, &test).unwrap();
        assert!(rec.steps_executed <= cfg.steps);
        assert_eq!(rec.step_losses.len(), rec.steps_executed);
        let window_total: f64 = rec.rows.iter().map(|r| r.window_loss).sum();
        assert!((window_total - rec.cumulative_loss).abs() < 1e-9);
        for row in &rec.rows {
            assert!((row.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rec.rows.last().unwrap().theta_bar, rec.consensus);
        assert!(verify_bound(&rec, cfg.principal.beta).holds);
        // The slope is about 2 on every dataset.
        assert!((rec.consensus[0] - 2.0).abs() < 0.1, "{:?}", rec.consensus);
    }

    #[test]
    fn rho_scores_post_move_parameters() {
        let (train, test) = linear_sets();
        let model = ModelSpec::new(ModelKind::Linear);
        let mut cfg = small_config(2);
        cfg.record_stride = 1;
        cfg.steps = 50;
        cfg.dynamics.delta = cfg.horizon / 50.0;
        let rec = run(&cfg, &model, &train, &test).unwrap();
        for row in &rec.rows {
            for (theta, rho) in row.thetas.iter().zip(&row.rho) {
                let expected = index_from_loss(
                    quadratic_loss(&model, theta, &test).unwrap(),
                    cfg.principal.mu,
                );
                assert_eq!(*rho, expected);
            }
        }
        // L_0 is charged under the uniform starting weights.
        let r0 = &rec.rows[0];
        assert!((r0.step_loss - 0.5 * (r0.rho[0] + r0.rho[1])).abs() < 1e-15);
    }

    #[test]
    fn symmetric_agents_stay_identical() {
        let set = Dataset::new("s", vec![(1.0, 3.0), (2.0, 5.0)]).unwrap();
        let model = ModelSpec::new(ModelKind::Linear);
        let mut cfg = small_config(2);
        cfg.dynamics.c = 0.0;
        cfg.record_stride = 1;
        let rec = run(&cfg, &model, &[set.clone(), set.clone()], &set).unwrap();
        for row in &rec.rows {
            assert_eq!(row.thetas[0], row.thetas[1]);
            assert_eq!(row.pi, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn threads_do_not_change_results() {
        let (train, test) = linear_sets();
        let model = ModelSpec::new(ModelKind::Linear);
        let mut cfg = small_config(2);
        let one = run(&cfg, &model, &train, &test).unwrap();
        cfg.threads = 4;
        let four = run(&cfg, &model, &train, &test).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn numeric_failure_carries_location() {
        // h(x) = theta * x overflows at theta = 1e300, x = 1e10.
        let set = Dataset::new("s", vec![(1e10, 1.0)]).unwrap();
        let model = ModelSpec::new(ModelKind::Linear);
        let mut cfg = small_config(1);
        cfg.initial = InitialState::Shared {
            theta: vec![1e300],
            momentum: None,
        };
        cfg.dynamics.c = 0.0;
        match run(&cfg, &model, std::slice::from_ref(&set), &set) {
            Err(Error::NumericFailure { agent, step, .. }) => assert_eq!((agent, step), (0, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let (train, test) = linear_sets();
        let model = ModelSpec::new(ModelKind::Linear);
        let mut cfg = small_config(2);
        cfg.principal.beta = 1.5;
        match run(&cfg, &model, &train, &test) {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "run.beta"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = small_config(3);
        assert!(run(&cfg, &model, &train, &test).is_err());
        cfg = small_config(2);
        cfg.dynamics.delta *= 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
        cfg = small_config(2);
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        cfg = small_config(2);
        cfg.record_stride = 0;
        assert!(cfg.validate().is_err());
        cfg = small_config(2);
        cfg.project_to_box = true;
        assert!(run(&cfg, &model, &train, &test).is_err());
        cfg = small_config(2);
        cfg.initial = InitialState::PerAgent {
            thetas: vec![vec![0.0]],
            momenta: None,
        };
        assert!(run(&cfg, &model, &train, &test).is_err());
    }

    #[test]
    fn box_projection_keeps_parameters_inside() {
        let (train, test) = linear_sets();
        let model = ModelSpec::new(ModelKind::Linear)
            .with_param_box(crate::model::ParamBox::new(vec![-1.0], vec![1.5]).unwrap())
            .unwrap();
        let mut cfg = small_config(2);
        cfg.project_to_box = true;
        let rec = run(&cfg, &model, &train, &test).unwrap();
        for row in &rec.rows {
            for theta in &row.thetas {
                assert!(model.param_box().unwrap().contains(theta));
            }
        }
    }

    #[test]
    fn verify_bound_detects_violation() {
        let record = TrajectoryRecord {
            beta: 0.5,
            initial_theta_bar: vec![0.0],
            rows: vec![],
            step_losses: vec![0.0, 0.0],
            consensus: vec![0.0],
            steps_executed: 2,
            terminated_by: Termination::Horizon,
            cumulative_loss: 0.0,
            final_log_alpha: vec![(0.5f64).ln(), (0.5f64).ln()],
            bound: 0.0,
        };
        let ok = verify_bound(&record, 0.5);
        assert!(ok.holds);
        assert!(ok.cumulative_loss == 0.0 && ok.bound.abs() < 1e-15);

        let mut bad = record.clone();
        bad.step_losses = vec![0.9, 0.9];
        let report = verify_bound(&bad, 0.5);
        assert!(!report.holds);
        assert!((report.cumulative_loss - 1.8).abs() < 1e-15);
    }
}
