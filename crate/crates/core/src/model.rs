//! Hypothesis functions and the quadratic loss used by both agents and principal.
//!
//! Every model maps a parameter vector `theta` and a scalar input `x` to a scalar
//! prediction. The loss over a dataset is the mean squared residual and its
//! gradient is computed analytically from the per-point prediction gradient.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Arguments to `exp` are clamped to this magnitude so results saturate instead of
/// overflowing to infinity.
pub const EXP_ARG_LIMIT: f64 = 700.0;

#[inline]
pub(crate) fn clamped_exp(x: f64) -> f64 {
    x.clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT).exp()
}

/// Parameters of the logistic growth law `N(t) = N0 Ne / (N0 + (Ne - N0) exp(-r t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticGrowthParams {
    /// Initial population.
    pub n0: f64,
    /// Equilibrium (carrying) population.
    pub ne: f64,
    /// Growth rate, per day.
    pub r: f64,
}

impl LogisticGrowthParams {
    pub fn new(n0: f64, ne: f64, r: f64) -> Result<Self> {
        for (name, v) in [("N0", n0), ("Ne", ne), ("r", r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "logistic parameter {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Self { n0, ne, r })
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta {
            [n0, ne, r] => Self::new(*n0, *ne, *r),
            _ => Err(Error::invalid(format!(
                "logistic growth takes 3 parameters, got {}",
                theta.len()
            ))),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.n0, self.ne, self.r]
    }
}

/// Evaluates the logistic growth law at time `t` (days).
pub fn logistic_predict(params: &LogisticGrowthParams, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("non-finite time {t}")));
    }
    logistic_raw(params.n0, params.ne, params.r, t)
}

fn logistic_raw(n0: f64, ne: f64, r: f64, t: f64) -> Result<f64> {
    let e = clamped_exp(-r * t);
    let value = n0 * ne / (n0 + (ne - n0) * e);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!(
            "logistic prediction not finite at t={t} for (N0={n0}, Ne={ne}, r={r})"
        )))
    }
}

/// The registered hypothesis classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `theta = (N0, Ne, r)`.
    LogisticGrowth,
    /// Slope through the origin: `h(x) = theta[0] * x`.
    Linear,
    /// `h(x) = sum_j theta[j] * x^j` for `j = 0..=degree`.
    Polynomial { degree: usize },
}

impl ModelKind {
    pub const NAMES: [&'static str; 3] = ["logistic_growth", "linear", "polynomial"];

    /// Looks a model up by its registry name. `degree` is required for `polynomial`
    /// and rejected for the others.
    pub fn from_name(name: &str, degree: Option<usize>) -> Result<Self> {
        match (name, degree) {
            ("logistic_growth", None) => Ok(ModelKind::LogisticGrowth),
            ("linear", None) => Ok(ModelKind::Linear),
            ("polynomial", Some(degree)) => Ok(ModelKind::Polynomial { degree }),
            ("polynomial", None) => Err(Error::validation(
                "model.degree",
                "required for the polynomial model",
            )),
            ("logistic_growth" | "linear", Some(_)) => Err(Error::validation(
                "model.degree",
                format!("only meaningful for the polynomial model, not `{name}`"),
            )),
            _ => Err(Error::validation(
                "model.name",
                format!("unknown model `{name}`, expected one of {:?}", Self::NAMES),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LogisticGrowth => "logistic_growth",
            ModelKind::Linear => "linear",
            ModelKind::Polynomial { .. } => "polynomial",
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            ModelKind::LogisticGrowth => 3,
            ModelKind::Linear => 1,
            ModelKind::Polynomial { degree } => degree + 1,
        }
    }
}

/// Per-coordinate bounds on the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("param box bounds differ in length"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "param box coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for ((v, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| lo <= v && v <= hi)
    }
}

/// A hypothesis class together with an optional parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    param_box: Option<ParamBox>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            param_box: None,
        }
    }

    pub fn logistic_growth() -> Self {
        Self::new(ModelKind::LogisticGrowth)
    }

    pub fn with_param_box(mut self, param_box: ParamBox) -> Result<Self> {
        if param_box.dim() != self.param_dim() {
            return Err(Error::invalid(format!(
                "param box has {} coordinates, model `{}` has {}",
                param_box.dim(),
                self.kind.name(),
                self.param_dim()
            )));
        }
        self.param_box = Some(param_box);
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn param_dim(&self) -> usize {
        self.kind.param_dim()
    }

    pub fn param_box(&self) -> Option<&ParamBox> {
        self.param_box.as_ref()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::invalid(format!(
                "model `{}` expects {} parameters, got {}",
                self.kind.name(),
                self.param_dim(),
                theta.len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        match self.kind {
            ModelKind::LogisticGrowth => logistic_raw(theta[0], theta[1], theta[2], x),
            ModelKind::Linear => finite(theta[0] * x),
            ModelKind::Polynomial { .. } => finite(horner(theta, x)),
        }
    }

    /// Writes `d h(theta, x) / d theta` into `grad` and returns `h(theta, x)`.
    fn predict_with_gradient(&self, theta: &[f64], x: f64, grad: &mut [f64]) -> Result<f64> {
        match self.kind {
            ModelKind::LogisticGrowth => {
                let (n0, ne, r) = (theta[0], theta[1], theta[2]);
                let e = clamped_exp(-r * x);
                let denom = n0 + (ne - n0) * e;
                let denom_sq = denom * denom;
                grad[0] = ne * ne * e / denom_sq;
                grad[1] = n0 * n0 * (1.0 - e) / denom_sq;
                grad[2] = n0 * ne * (ne - n0) * x * e / denom_sq;
                finite(n0 * ne / denom)
            }
            ModelKind::Linear => {
                grad[0] = x;
                finite(theta[0] * x)
            }
            ModelKind::Polynomial { .. } => {
                let mut power = 1.0;
                for g in grad.iter_mut() {
                    *g = power;
                    power *= x;
                }
                finite(horner(theta, x))
            }
        }
    }

    /// A starting point derived from training data.
    ///
    /// For the logistic model this is the usual self-start: `Ne` is the largest
    /// observation, and `N0`, `r` come from a straight-line fit of the log-odds
    /// `ln(Ne / y - 1)` against time. Linear and polynomial models start at zero.
    pub fn initial_guess<'a, I>(&self, datasets: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a Dataset>,
    {
        match self.kind {
            ModelKind::LogisticGrowth => {
                let points: Vec<(f64, f64)> = datasets
                    .into_iter()
                    .flat_map(|d| d.points().iter().copied())
                    .collect();
                logistic_self_start(&points)
            }
            _ => vec![0.0; self.param_dim()],
        }
    }
}

fn logistic_self_start(points: &[(f64, f64)]) -> Vec<f64> {
    let ne = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(ne.is_finite() && ne > 0.0) {
        return vec![1.0, 1.0, 1.0];
    }
    let logits: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0 && *y < 0.95 * ne)
        .map(|&(t, y)| (t, (ne / y - 1.0).ln()))
        .collect();
    let n = logits.len() as f64;
    let (mean_t, mean_z) = logits
        .iter()
        .fold((0.0, 0.0), |(st, sz), (t, z)| (st + t / n, sz + z / n));
    let sxx: f64 = logits.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
    let sxz: f64 = logits
        .iter()
        .map(|(t, z)| (t - mean_t) * (z - mean_z))
        .sum();
    if logits.len() < 2 || sxx <= 0.0 || sxz >= 0.0 {
        return vec![ne / 100.0, ne, 1.0];
    }
    let slope = sxz / sxx;
    let intercept = mean_z - slope * mean_t;
    vec![ne / (1.0 + intercept.exp()), ne, -slope]
}

fn horner(theta: &[f64], x: f64) -> f64 {
    theta.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!(
            "model prediction is not finite ({v})"
        )))
    }
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid(format!(
            "dataset `{}` is empty",
            dataset.label()
        )));
    }
    Ok(())
}

/// Mean squared residual `(1/m) sum_i (h(x_i) - y_i)^2`.
pub fn quadratic_loss(model: &ModelSpec, theta: &[f64], dataset: &Dataset) -> Result<f64> {
    model.check_theta(theta)?;
    check_dataset(dataset)?;
    let mut sum = 0.0;
    for &(x, y) in dataset.points() {
        let residual = model.predict(theta, x)? - y;
        sum += residual * residual;
    }
    Ok(sum / dataset.len() as f64)
}

/// Analytic gradient of [`quadratic_loss`] with respect to `theta`.
pub fn loss_gradient(model: &ModelSpec, theta: &[f64], dataset: &Dataset) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.param_dim()];
    loss_gradient_into(model, theta, dataset, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`loss_gradient`]; `out` must have length `param_dim`.
pub fn loss_gradient_into(
    model: &ModelSpec,
    theta: &[f64],
    dataset: &Dataset,
    out: &mut [f64],
) -> Result<()> {
    model.check_theta(theta)?;
    check_dataset(dataset)?;
    if out.len() != model.param_dim() {
        return Err(Error::invalid("gradient buffer has the wrong length"));
    }
    let p = model.param_dim();
    // Stack buffer covers every registered model except high-degree polynomials.
    let mut stack = [0.0; 8];
    let mut heap;
    let point_grad: &mut [f64] = if p <= stack.len() {
        &mut stack[..p]
    } else {
        heap = vec![0.0; p];
        &mut heap
    };
    out.fill(0.0);
    for &(x, y) in dataset.points() {
        let residual = model.predict_with_gradient(theta, x, point_grad)? - y;
        for (o, g) in out.iter_mut().zip(point_grad.iter()) {
            *o += residual * g;
        }
    }
    let scale = 2.0 / dataset.len() as f64;
    for o in out.iter_mut() {
        *o *= scale;
    }
    Ok(())
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Rescales `g` so that `|g|^2 <= l_lip (1 + |theta|^2)`.
pub fn clip_gradient(g: &[f64], theta: &[f64], l_lip: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_gradient_in_place(&mut out, theta, l_lip);
    out
}

pub(crate) fn clip_gradient_in_place(g: &mut [f64], theta: &[f64], l_lip: f64) {
    let limit_sq = l_lip * (1.0 + norm_sq(theta));
    let g_sq = norm_sq(g);
    if g_sq <= limit_sq {
        return;
    }
    let scale = (limit_sq / g_sq).sqrt();
    for v in g.iter_mut() {
        *v *= scale;
    }
    // Rounding in the rescale can land one ulp above the limit.
    while norm_sq(g) > limit_sq {
        for v in g.iter_mut() {
            *v *= 1.0 - f64::EPSILON;
        }
    }
}
