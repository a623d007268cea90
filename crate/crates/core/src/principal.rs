//! The principal's side of the loop: score each agent on the held-out set, pay
//! the `pi`-weighted mixture loss, and shrink each agent's weight by `beta^rho`.
//!
//! Starting from weights on the simplex, the cumulative mixture loss `L` after
//! `N` rounds never exceeds `-ln(sum_k alpha_N[k]) / (1 - beta)`. The proof
//! chain behind that bound is
//!
//! ```text
//! beta^rho <= 1 - (1 - beta) rho                         (convexity, rho in [0,1])
//! sum alpha_{n+1} <= (sum alpha_n) (1 - (1 - beta) L_n)
//! sum alpha_N <= prod_n (1 - (1 - beta) L_n) <= exp(-(1 - beta) L)
//! ```
//!
//! [`PrincipalState`] keeps the weights in log space so that agents whose weight
//! underflows `f64` still contribute exactly to the bound.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{quadratic_loss, ModelSpec};

/// Tolerance on `sum(pi) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalParams {
    /// Discount base in `(0, 1)`.
    pub beta: f64,
    /// Scale of the test loss inside the performance index.
    pub mu: f64,
}

impl PrincipalParams {
    pub fn new(beta: f64, mu: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::validation(
                "mu",
                format!("must be positive, got {mu}"),
            ));
        }
        Ok(Self { beta, mu })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "beta",
            format!("must lie in (0, 1), got {beta}"),
        ))
    }
}

fn check_rho(rho: &[f64]) -> Result<()> {
    match rho.iter().position(|r| !(0.0..=1.0).contains(r)) {
        Some(k) => Err(Error::invalid(format!(
            "performance index {k} is {} but must lie in [0, 1]",
            rho[k]
        ))),
        None => Ok(()),
    }
}

/// `1 - exp(-mu * J(theta, test_set))`.
///
/// Mathematically below 1; in `f64` it rounds to exactly 1 once `mu * J` exceeds
/// about 37.
pub fn performance_index(
    model: &ModelSpec,
    theta: &[f64],
    test_set: &Dataset,
    mu: f64,
) -> Result<f64> {
    let loss = quadratic_loss(model, theta, test_set)?;
    Ok(index_from_loss(loss, mu))
}

#[inline]
pub(crate) fn index_from_loss(loss: f64, mu: f64) -> f64 {
    -(-mu * loss).exp_m1()
}

/// `alpha[k] * beta^rho[k]`, written as `alpha[k] * exp(-rho[k] ln(1/beta))`.
pub fn update_weights(alpha: &[f64], rho: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if alpha.len() != rho.len() {
        return Err(Error::invalid(format!(
            "{} weights but {} performance indices",
            alpha.len(),
            rho.len()
        )));
    }
    check_rho(rho)?;
    let log_inv_beta = -beta.ln();
    Ok(alpha
        .iter()
        .zip(rho)
        .map(|(a, r)| a * (-r * log_inv_beta).exp())
        .collect())
}

/// Projects positive weights onto the simplex.
pub fn normalize(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::DegenerateWeights("no weights".into()));
    }
    if let Some(k) = alpha.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::DegenerateWeights(format!(
            "weight {k} is {}, expected a positive finite value",
            alpha[k]
        )));
    }
    let total: f64 = alpha.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateWeights(format!("weights sum to {total}")));
    }
    Ok(alpha.iter().map(|a| a / total).collect())
}

/// `L_n = sum_k pi[k] rho[k]`.
pub fn mixture_loss(pi: &[f64], rho: &[f64]) -> Result<f64> {
    if pi.len() != rho.len() {
        return Err(Error::invalid(format!(
            "{} weights but {} performance indices",
            pi.len(),
            rho.len()
        )));
    }
    Ok(pi.iter().zip(rho).map(|(p, r)| p * r).sum())
}

/// `-ln(sum_k alpha_final[k]) / (1 - beta)`.
pub fn loss_bound(alpha_final: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let total: f64 = alpha_final.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateWeights(format!(
            "final weights sum to {total}"
        )));
    }
    Ok(bound_from_log_sum(total.ln(), beta))
}

#[inline]
fn bound_from_log_sum(log_sum: f64, beta: f64) -> f64 {
    -log_sum / (1.0 - beta)
}

/// Numerically stable `ln(sum_k exp(x[k]))`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Running state of the principal across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalState {
    log_alpha: Vec<f64>,
    pi: Vec<f64>,
    cumulative_loss: f64,
    step_losses: Vec<f64>,
}

impl PrincipalState {
    /// `alpha_0 = pi_0 = 1/K` for every agent.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("the principal needs at least one agent"));
        }
        Self::from_alpha(&vec![1.0 / k as f64; k])
    }

    /// Starts from arbitrary initial weights, which must lie on the simplex.
    pub fn from_alpha(alpha0: &[f64]) -> Result<Self> {
        let pi = normalize(alpha0)?;
        let total: f64 = alpha0.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "initial weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            log_alpha: alpha0.iter().map(|a| a.ln()).collect(),
            pi,
            cumulative_loss: 0.0,
            step_losses: Vec::new(),
        })
    }

    pub fn agents(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn log_alpha(&self) -> &[f64] {
        &self.log_alpha
    }

    /// The weights themselves; entries may underflow to zero.
    pub fn alpha(&self) -> Vec<f64> {
        self.log_alpha.iter().map(|l| l.exp()).collect()
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }

    pub fn step_losses(&self) -> &[f64] {
        &self.step_losses
    }

    /// `ln(sum_k alpha[k])`.
    pub fn log_weight_sum(&self) -> f64 {
        log_sum_exp(&self.log_alpha)
    }

    pub fn bound(&self, beta: f64) -> f64 {
        bound_from_log_sum(self.log_weight_sum(), beta)
    }

    /// Charges the mixture loss of this round under the current `pi`, then
    /// discounts every weight by `beta^rho[k]` and renormalizes. Returns `L_n`.
    pub fn observe(&mut self, rho: &[f64], beta: f64) -> Result<f64> {
        check_beta(beta)?;
        check_rho(rho)?;
        let step_loss = mixture_loss(&self.pi, rho)?;
        let log_inv_beta = -beta.ln();
        for (la, r) in self.log_alpha.iter_mut().zip(rho) {
            *la -= r * log_inv_beta;
        }
        let max = self
            .log_alpha
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeights(format!(
                "largest log-weight is {max}"
            )));
        }
        for (p, la) in self.pi.iter_mut().zip(&self.log_alpha) {
            *p = (la - max).exp();
        }
        let total: f64 = self.pi.iter().sum();
        for p in self.pi.iter_mut() {
            *p /= total;
        }
        self.step_losses.push(step_loss);
        self.cumulative_loss += step_loss;
        Ok(step_loss)
    }
}
