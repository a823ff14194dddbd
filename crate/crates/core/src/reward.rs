//! Composite risk-aware reward
//!
//! `R = w1 * R_ann - w2 * sigma_down + w3 * D_ret + w4 * T_ry`
//!
//! together with its return/risk/benchmark decomposition, per-period analytic
//! gradients and a central-difference gradient check. Gradients hold the
//! denominator beta fixed at its clamped value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    self, AnnualizationMode, BetaEstimate, ComponentValues, MetricContext, MetricError,
};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("need at least 2 periods, got {0}")]
    TooShort(usize),
}

/// Nonnegative weights of the four reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RewardWeights {
    /// Annualized return.
    pub w1: f64,
    /// Downside deviation penalty.
    pub w2: f64,
    /// Differential return.
    pub w3: f64,
    /// Treynor ratio.
    pub w4: f64,
}

impl RewardWeights {
    pub fn new(w1: f64, w2: f64, w3: f64, w4: f64) -> Result<Self, RewardError> {
        let w = Self { w1, w2, w3, w4 };
        if w.as_array().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(RewardError::Weights(format!(
                "weights must be finite and nonnegative, got {:?}",
                w.as_array()
            )));
        }
        Ok(w)
    }

    pub fn equal() -> Self {
        Self::new(0.25, 0.25, 0.25, 0.25).unwrap()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w1, self.w2, self.w3, self.w4]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    /// Rescales onto the simplex. All-zero weights cannot be normalized.
    pub fn normalized(&self) -> Result<Self, RewardError> {
        let s = self.sum();
        if s <= 0.0 {
            return Err(RewardError::Weights("cannot normalize all-zero weights".into()));
        }
        Self::new(self.w1 / s, self.w2 / s, self.w3 / s, self.w4 / s)
    }

    pub fn is_simplex(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-12
    }

    /// Parses `w1,w2,w3,w4`.
    pub fn parse(text: &str) -> Result<Self, RewardError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RewardError::Weights(format!("`{text}`: {e}")))?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| RewardError::Weights(format!("`{text}`: expected 4 values")))?;
        Self::try_from(arr)
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::equal()
    }
}

impl TryFrom<[f64; 4]> for RewardWeights {
    type Error = RewardError;

    fn try_from(w: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(w[0], w[1], w[2], w[3])
    }
}

impl From<RewardWeights> for [f64; 4] {
    fn from(w: RewardWeights) -> Self {
        w.as_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    AnnualizedReturn,
    DownsideDeviation,
    DifferentialReturn,
    Treynor,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::AnnualizedReturn,
        Component::DownsideDeviation,
        Component::DifferentialReturn,
        Component::Treynor,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Component::AnnualizedReturn => "R_ann",
            Component::DownsideDeviation => "sigma_down",
            Component::DifferentialReturn => "D_ret",
            Component::Treynor => "T_ry",
        }
    }

    pub fn weight(self, w: &RewardWeights) -> f64 {
        match self {
            Component::AnnualizedReturn => w.w1,
            Component::DownsideDeviation => w.w2,
            Component::DifferentialReturn => w.w3,
            Component::Treynor => w.w4,
        }
    }

    /// Signed, weighted contribution of this component to the total.
    fn term(self, w: &RewardWeights, c: &ComponentValues) -> f64 {
        match self {
            Component::AnnualizedReturn => w.w1 * c.r_ann,
            Component::DownsideDeviation => -w.w2 * c.sigma_down,
            Component::DifferentialReturn => w.w3 * c.d_ret,
            Component::Treynor => w.w4 * c.t_ry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerms {
    /// `w1 * R_ann`
    pub annualized_return: f64,
    /// `-w2 * sigma_down`
    pub downside_deviation: f64,
    /// `w3 * D_ret`
    pub differential_return: f64,
    /// `w4 * T_ry`
    pub treynor: f64,
}

impl WeightedTerms {
    pub fn sum(&self) -> f64 {
        self.annualized_return + self.downside_deviation + self.differential_return + self.treynor
    }
}

/// Return reward, risk penalty and benchmark bonus; they add up to the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub return_reward: f64,
    pub risk_penalty: f64,
    pub benchmark_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub weights: RewardWeights,
    pub components: ComponentValues,
    pub weighted: WeightedTerms,
    pub total: f64,
    pub decomposition: Decomposition,
}

fn breakdown(weights: RewardWeights, components: ComponentValues) -> RewardBreakdown {
    let weighted = WeightedTerms {
        annualized_return: Component::AnnualizedReturn.term(&weights, &components),
        downside_deviation: Component::DownsideDeviation.term(&weights, &components),
        differential_return: Component::DifferentialReturn.term(&weights, &components),
        treynor: Component::Treynor.term(&weights, &components),
    };
    let mut out = RewardBreakdown {
        weights,
        components,
        weighted,
        total: weighted.sum(),
        decomposition: Decomposition {
            return_reward: 0.0,
            risk_penalty: 0.0,
            benchmark_bonus: 0.0,
        },
    };
    out.decomposition = decompose(&out);
    out
}

/// Splits a breakdown into return reward (`w1 R_ann + w4 T_ry`), risk penalty
/// (`-w2 sigma_down`) and benchmark bonus (`w3 D_ret`).
pub fn decompose(b: &RewardBreakdown) -> Decomposition {
    Decomposition {
        return_reward: b.weighted.annualized_return + b.weighted.treynor,
        risk_penalty: b.weighted.downside_deviation,
        benchmark_bonus: b.weighted.differential_return,
    }
}

/// Evaluates the composite reward on aligned portfolio, benchmark and market returns.
pub fn composite_reward(
    portfolio: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
) -> Result<RewardBreakdown, RewardError> {
    if portfolio.len() < 2 {
        return Err(RewardError::TooShort(portfolio.len()));
    }
    let c = metrics::components(portfolio, benchmark, market, ctx)?;
    Ok(breakdown(*weights, c))
}

/// Evaluates the composite reward with the denominator beta held at `beta`.
pub fn composite_reward_fixed_beta(
    portfolio: &[f64],
    benchmark: &[f64],
    beta: BetaEstimate,
    weights: &RewardWeights,
    ctx: &MetricContext,
) -> Result<RewardBreakdown, RewardError> {
    if portfolio.len() < 2 {
        return Err(RewardError::TooShort(portfolio.len()));
    }
    ctx.validate()?;
    let c = metrics::components_with_beta(portfolio, benchmark, beta, false, ctx)?;
    Ok(breakdown(*weights, c))
}

/// Per-period partials of each weighted, signed component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentGradients {
    pub annualized_return: Vec<f64>,
    pub downside_deviation: Vec<f64>,
    pub differential_return: Vec<f64>,
    pub treynor: Vec<f64>,
}

impl ComponentGradients {
    pub fn get(&self, c: Component) -> &[f64] {
        match c {
            Component::AnnualizedReturn => &self.annualized_return,
            Component::DownsideDeviation => &self.downside_deviation,
            Component::DifferentialReturn => &self.differential_return,
            Component::Treynor => &self.treynor,
        }
    }

    pub fn get_mut(&mut self, c: Component) -> &mut Vec<f64> {
        match c {
            Component::AnnualizedReturn => &mut self.annualized_return,
            Component::DownsideDeviation => &mut self.downside_deviation,
            Component::DifferentialReturn => &mut self.differential_return,
            Component::Treynor => &mut self.treynor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGradient {
    /// `dR/dR_pt` for every period.
    pub d_returns: Vec<f64>,
    pub components: ComponentGradients,
    /// Derivative under a uniform shift of every portfolio return.
    pub d_mu: f64,
    pub d_sigma_down: f64,
    pub d_mu_b: f64,
    /// Periods with `R_pt == 0`, where the downside hinge uses subgradient 0.
    pub kink_mask: Vec<bool>,
    pub beta_clamped: f64,
}

/// Analytic gradient of the composite reward with respect to each portfolio return.
pub fn reward_gradient(
    portfolio: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
) -> Result<RewardGradient, RewardError> {
    let b = composite_reward(portfolio, benchmark, market, weights, ctx)?;
    Ok(gradient_from(portfolio, &b, ctx))
}

fn gradient_from(portfolio: &[f64], b: &RewardBreakdown, ctx: &MetricContext) -> RewardGradient {
    let w = &b.weights;
    let c = &b.components;
    let n = portfolio.len() as f64;
    let beta = c.beta_clamped;
    let scale = ctx.periods_per_year / n;

    // dR_ann/dR_t, zero once the r_max guard binds
    let d_ann: Vec<f64> = if c.r_ann_clamped {
        vec![0.0; portfolio.len()]
    } else {
        match ctx.annualization {
            AnnualizationMode::Approx => vec![scale; portfolio.len()],
            AnnualizationMode::Exact => portfolio
                .iter()
                .map(|r| (1.0 + c.r_ann_raw) * scale / (1.0 + r))
                .collect(),
        }
    };

    let kink_mask: Vec<bool> = portfolio.iter().map(|&r| r == 0.0).collect();
    let downside: Vec<f64> = portfolio
        .iter()
        .map(|&r| {
            if r < 0.0 && c.sigma_down > 0.0 {
                // -w2 * dsigma/dR_t with dsigma/dR_t = R_t / (T sigma)
                -w.w2 * r / (n * c.sigma_down)
            } else {
                0.0
            }
        })
        .collect();

    let grads = ComponentGradients {
        annualized_return: d_ann.iter().map(|d| w.w1 * d).collect(),
        downside_deviation: downside,
        differential_return: vec![w.w3 / (beta * n); portfolio.len()],
        treynor: d_ann.iter().map(|d| w.w4 * d / beta).collect(),
    };
    let d_returns: Vec<f64> = (0..portfolio.len())
        .map(|t| {
            grads.annualized_return[t]
                + grads.downside_deviation[t]
                + grads.differential_return[t]
                + grads.treynor[t]
        })
        .collect();
    let d_mu = grads.annualized_return.iter().sum::<f64>()
        + grads.differential_return.iter().sum::<f64>()
        + grads.treynor.iter().sum::<f64>();

    RewardGradient {
        d_returns,
        components: grads,
        d_mu,
        d_sigma_down: -w.w2,
        d_mu_b: -w.w3 / beta,
        kink_mask,
        beta_clamped: beta,
    }
}

/// Pass threshold on the per-component relative error.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub component: Component,
    /// `max_t |analytic - numeric| / max(max_t |analytic|, max_t |numeric|)`.
    pub max_rel_error: f64,
    /// Coordinate with the largest absolute discrepancy.
    pub worst_index: Option<usize>,
    /// Zero weight: nothing to compare.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub h: f64,
    pub tolerance: f64,
    pub components: Vec<ComponentCheck>,
    pub max_rel_error: f64,
    /// Coordinates excluded because they sit on the downside hinge.
    pub excluded: Vec<usize>,
    pub passed: bool,
}

impl GradientCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &ComponentCheck> {
        self.components
            .iter()
            .filter(move |c| !c.skipped && !(c.max_rel_error < self.tolerance))
    }
}

/// Compares [`reward_gradient`] against central differences with step `h`.
pub fn finite_difference_check(
    portfolio: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
    h: f64,
) -> Result<GradientCheckReport, RewardError> {
    let analytic = reward_gradient(portfolio, benchmark, market, weights, ctx)?;
    check_gradient_against(&analytic, portfolio, benchmark, market, weights, ctx, h)
}

/// Compares a supplied gradient against central differences of the reward with
/// beta frozen at the gradient's `beta_clamped`.
pub fn check_gradient_against(
    analytic: &RewardGradient,
    portfolio: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
    h: f64,
) -> Result<GradientCheckReport, RewardError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(RewardError::Weights(format!("step h must be positive, got {h}")));
    }
    let base = composite_reward(portfolio, benchmark, market, weights, ctx)?;
    let beta = BetaEstimate {
        raw: base.components.beta,
        clamped: analytic.beta_clamped,
        was_clamped: base.components.beta_was_clamped,
    };

    let n = portfolio.len();
    let mut numeric = ComponentGradients {
        annualized_return: vec![0.0; n],
        downside_deviation: vec![0.0; n],
        differential_return: vec![0.0; n],
        treynor: vec![0.0; n],
    };
    let mut bumped = portfolio.to_vec();
    for t in 0..n {
        let x = portfolio[t];
        let (up, down) = (x + h, x - h);
        // realized step, exact by Sterbenz
        let span = (up - x) + (x - down);
        bumped[t] = up;
        let plus = composite_reward_fixed_beta(&bumped, benchmark, beta, weights, ctx)?;
        bumped[t] = down;
        let minus = composite_reward_fixed_beta(&bumped, benchmark, beta, weights, ctx)?;
        bumped[t] = x;
        for comp in Component::ALL {
            let d = comp.term(weights, &plus.components) - comp.term(weights, &minus.components);
            numeric.get_mut(comp)[t] = d / span;
        }
    }

    let excluded: Vec<usize> = analytic
        .kink_mask
        .iter()
        .enumerate()
        .filter_map(|(t, &k)| k.then_some(t))
        .collect();

    let mut checks = Vec::with_capacity(4);
    for comp in Component::ALL {
        let skipped = comp.weight(weights) == 0.0;
        let a = analytic.components.get(comp);
        let num = numeric.get(comp);
        let mut scale = 0.0f64;
        let mut worst = 0.0f64;
        let mut worst_index = None;
        for t in 0..n {
            if comp == Component::DownsideDeviation && analytic.kink_mask[t] {
                continue;
            }
            scale = scale.max(a[t].abs()).max(num[t].abs());
            let diff = (a[t] - num[t]).abs();
            if diff > worst || (worst_index.is_none() && diff.is_nan()) {
                worst = diff;
                worst_index = Some(t);
            }
        }
        let max_rel_error = if skipped {
            0.0
        } else if scale == 0.0 {
            worst
        } else {
            worst / scale
        };
        checks.push(ComponentCheck {
            component: comp,
            max_rel_error,
            worst_index,
            skipped,
        });
    }

    let max_rel_error = checks
        .iter()
        .filter(|c| !c.skipped)
        .map(|c| c.max_rel_error)
        .fold(0.0, f64::max);
    let passed = checks
        .iter()
        .all(|c| c.skipped || c.max_rel_error < GRADIENT_TOLERANCE);
    Ok(GradientCheckReport {
        h,
        tolerance: GRADIENT_TOLERANCE,
        components: checks,
        max_rel_error,
        excluded,
        passed,
    })
}

/// Upper bound on |R| when |R_ann| <= r_max and beta is clamped to `[beta_min, beta_max]`.
pub fn reward_bound(weights: &RewardWeights, ctx: &MetricContext) -> f64 {
    weights.w1 * ctx.r_max
        + weights.w2 * ctx.r_max
        + weights.w3 * ctx.differential_bound()
        + weights.w4 * ctx.treynor_bound()
}
