//! Agent dynamics: an Euler-Maruyama step of underdamped Langevin motion with a
//! mean-field pull toward the consensus estimate.
//!
//! With step `delta`, friction `gamma`, interaction strength `eta` and noise level
//! `c`, one step maps `(theta, p)` to
//!
//! ```text
//! theta' = theta + delta p
//! p'     = (1 - delta gamma) p - delta grad - delta eta (theta - theta_bar)
//!          + c / sqrt(ln(tau' + 2)) sqrt(delta) z
//! ```
//!
//! where `z` is a vector of independent standard normals supplied by the caller,
//! so `sqrt(delta) z` is a Brownian increment with covariance `delta I`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    theta: Vec<f64>,
    momentum: Vec<f64>,
}

impl AgentState {
    pub fn new(theta: Vec<f64>, momentum: Vec<f64>) -> Result<Self> {
        if theta.len() != momentum.len() {
            return Err(Error::invalid(format!(
                "theta has {} components but momentum has {}",
                theta.len(),
                momentum.len()
            )));
        }
        if theta.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::invalid("agent state must be finite"));
        }
        Ok(Self { theta, momentum })
    }

    /// Starts at `theta` with zero momentum.
    pub fn at_rest(theta: Vec<f64>) -> Result<Self> {
        let p = theta.len();
        Self::new(theta, vec![0.0; p])
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Applies one step in place. On failure the state is left unchanged.
    pub fn advance(
        &mut self,
        grad: &[f64],
        theta_bar: &[f64],
        params: &DynamicsParams,
        tau_next: f64,
        noise_draw: &[f64],
    ) -> std::result::Result<(), StepError> {
        let p = self.dim();
        for (name, len) in [
            ("gradient", grad.len()),
            ("theta_bar", theta_bar.len()),
            ("noise draw", noise_draw.len()),
        ] {
            if len != p {
                return Err(StepError::Length(format!(
                    "{name} has length {len}, expected {p}"
                )));
            }
        }
        let scale = noise_scale(params.c, tau_next);
        let sqrt_delta = params.delta.sqrt();
        let decay = 1.0 - params.delta * params.gamma;
        let coupling = params.delta * params.eta;

        let mut next = self.clone();
        for i in 0..p {
            let theta = self.theta[i];
            let mom = self.momentum[i];
            next.theta[i] = theta + params.delta * mom;
            next.momentum[i] =
                decay * mom - params.delta * grad[i] - coupling * (theta - theta_bar[i])
                    + scale * sqrt_delta * noise_draw[i];
        }
        if let Some(i) =
            (0..p).find(|&i| !(next.theta[i].is_finite() && next.momentum[i].is_finite()))
        {
            return Err(StepError::NonFinite(format!(
                "component {i} became non-finite (theta={}, momentum={})",
                next.theta[i], next.momentum[i]
            )));
        }
        *self = next;
        Ok(())
    }
}

/// Why an agent step was rejected. Callers attach the agent index and step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Length(String),
    NonFinite(String),
}

impl StepError {
    pub fn at(self, agent: usize, step: usize) -> Error {
        match self {
            StepError::Length(msg) => Error::InvalidArgument(msg),
            StepError::NonFinite(detail) => Error::NumericFailure {
                agent,
                step,
                detail,
            },
        }
    }
}

/// Step size, friction, interaction strength and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub c: f64,
}

impl DynamicsParams {
    pub fn new(delta: f64, gamma: f64, eta: f64, c: f64) -> Result<Self> {
        let params = Self {
            delta,
            gamma,
            eta,
            c,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("delta", self.delta, self.delta > 0.0, "must be positive"),
            ("gamma", self.gamma, self.gamma > 0.0, "must be positive"),
            ("eta", self.eta, self.eta >= 0.0, "must be nonnegative"),
            ("c", self.c, self.c >= 0.0, "must be nonnegative"),
        ];
        for (key, value, ok, msg) in checks {
            if !value.is_finite() || !ok {
                return Err(Error::validation(key, format!("{msg}, got {value}")));
            }
        }
        if self.delta * self.gamma >= 1.0 {
            return Err(Error::validation(
                "delta",
                format!(
                    "delta * gamma must be below 1 so momentum decays, got {}",
                    self.delta * self.gamma
                ),
            ));
        }
        Ok(())
    }
}

/// Annealed noise amplitude `c / sqrt(ln(tau_next + 2))`.
pub fn noise_scale(c: f64, tau_next: f64) -> f64 {
    c / (tau_next + 2.0).ln().sqrt()
}

/// Pure form of [`AgentState::advance`].
pub fn agent_step(
    state: &AgentState,
    grad: &[f64],
    theta_bar: &[f64],
    params: &DynamicsParams,
    tau_next: f64,
    noise_draw: &[f64],
) -> std::result::Result<AgentState, StepError> {
    let mut next = state.clone();
    next.advance(grad, theta_bar, params, tau_next, noise_draw)?;
    Ok(next)
}

/// The `pi`-weighted combination of the agents' parameter vectors.
pub fn mean_estimate(thetas: &[&[f64]], pi: &[f64]) -> Result<Vec<f64>> {
    let p = thetas.first().map_or(0, |t| t.len());
    let mut out = vec![0.0; p];
    mean_estimate_into(thetas, pi, &mut out)?;
    Ok(out)
}

pub(crate) fn mean_estimate_into(thetas: &[&[f64]], pi: &[f64], out: &mut [f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::invalid("mean estimate needs at least one agent"));
    }
    if thetas.len() != pi.len() {
        return Err(Error::invalid(format!(
            "{} parameter vectors but {} weights",
            thetas.len(),
            pi.len()
        )));
    }
    if thetas.iter().any(|t| t.len() != out.len()) {
        return Err(Error::invalid("parameter vectors differ in length"));
    }
    let sum: f64 = pi.iter().sum();
    if pi.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "weights must lie on the simplex (sum {sum})"
        )));
    }
    out.fill(0.0);
    for (theta, w) in thetas.iter().zip(pi) {
        for (o, v) in out.iter_mut().zip(theta.iter()) {
            *o += w * v;
        }
    }
    Ok(())
}
