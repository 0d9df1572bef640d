//! Importance-weighted payoffs and per-null wealth processes.
//!
//! For every candidate value `m` of the total misstated fraction we run a
//! betting game whose payoff `Z_t + beta_t U_t - mu_t(m)` has conditional mean
//! zero when `m` is the truth. Wealth is tracked in log space, bets follow the
//! ApproxKelly rule `A/V` clipped so that every attainable multiplier stays
//! at least `safety`, and the control-variate weight `beta` is learned
//! online from past payoffs.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::population::Population;
use crate::sampling::Distribution;
use crate::scalar::{compensated_sum, Scalar};

/// Betting parameters shared by every null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BetConfig<T: Scalar> {
    /// Minimum attainable wealth multiplier (`eps_w`).
    pub safety: T,
    /// Floor on bet-bound denominators (`eps_d`).
    pub floor: T,
    /// Learn a control-variate weight from the scores.
    pub control_variates: bool,
}

impl<T: Scalar> Default for BetConfig<T> {
    fn default() -> Self {
        Self {
            safety: T::lit(0.01),
            floor: T::lit(1e-12),
            control_variates: false,
        }
    }
}

/// One audited draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Observation<T: Scalar> {
    pub index: usize,
    pub f_obs: T,
    pub q_prob: T,
    /// Importance-weighted payoff `f * pi / q`.
    pub z: T,
    /// Control variate `S(I) - E_q[S]`; zero without scores.
    pub u: T,
    pub step: usize,
}

/// Range of attainable payoffs for the next draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PayoffSupport<T: Scalar> {
    pub z_lo: T,
    pub z_hi: T,
    pub u_lo: T,
    pub u_hi: T,
}

/// Per-draw quantities derived from the sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawContext<T: Scalar> {
    pub support: PayoffSupport<T>,
    /// Largest `pi(i)/q(i)` over indices with positive probability.
    pub max_ratio: T,
    score_mean: T,
    constant_scores: bool,
}

impl<T: Scalar> DrawContext<T> {
    /// Builds the context for `dist`. With `score_accuracy = Some(a)` the
    /// misstated fraction of index `i` is assumed to lie in
    /// `[S(i)/(1+a), S(i)/(1-a)]`, which narrows the payoff range.
    pub fn new(
        dist: &Distribution<T>,
        population: &Population<T>,
        score_accuracy: Option<T>,
    ) -> Self {
        let w = population.weights();
        let scores = population.scores();
        let (mut z_lo, mut z_hi) = (T::infinity(), T::neg_infinity());
        let (mut s_lo, mut s_hi) = (T::infinity(), T::neg_infinity());
        let mut max_ratio = T::zero();
        for (i, q) in dist.iter().filter(|(_, q)| *q > T::zero()) {
            let ratio = w[i] / q;
            max_ratio = max_ratio.max(ratio);
            let (f_lo, f_hi) = match (scores, score_accuracy) {
                (Some(s), Some(a)) => (
                    s[i] / (T::one() + a),
                    (s[i] / (T::one() - a)).min(T::one()),
                ),
                _ => (T::zero(), T::one()),
            };
            z_lo = z_lo.min(ratio * f_lo);
            z_hi = z_hi.max(ratio * f_hi);
            if let Some(s) = scores {
                s_lo = s_lo.min(s[i]);
                s_hi = s_hi.max(s[i]);
            }
        }
        match scores {
            Some(s) if s_lo < s_hi => {
                let score_mean = dist.expect(s);
                Self {
                    support: PayoffSupport {
                        z_lo,
                        z_hi,
                        u_lo: s_lo - score_mean,
                        u_hi: s_hi - score_mean,
                    },
                    max_ratio,
                    score_mean,
                    constant_scores: false,
                }
            }
            _ => Self {
                support: PayoffSupport {
                    z_lo,
                    z_hi,
                    u_lo: T::zero(),
                    u_hi: T::zero(),
                },
                max_ratio,
                score_mean: T::zero(),
                constant_scores: true,
            },
        }
    }

    /// Control variate of `index` (exactly zero for absent or constant scores).
    pub fn control_variate(&self, population: &Population<T>, index: usize) -> T {
        match population.scores() {
            Some(s) if !self.constant_scores => s[index] - self.score_mean,
            _ => T::zero(),
        }
    }
}

/// Payoff and control variate for a drawn index with observed fraction `f_obs`.
pub fn compute_payoff<T: Scalar>(
    index: usize,
    f_obs: T,
    dist: &Distribution<T>,
    ctx: &DrawContext<T>,
    population: &Population<T>,
    step: usize,
) -> Result<Observation<T>> {
    if !(f_obs >= T::zero() && f_obs <= T::one()) {
        return Err(AuditError::Validation(format!(
            "misstated fraction must lie in [0, 1], got {f_obs}"
        )));
    }
    let q_prob = dist
        .prob_of(index)
        .ok_or_else(|| AuditError::Validation(format!("index {index} is not available")))?;
    if !(q_prob > T::zero()) {
        return Err(AuditError::ImpossibleDraw { index });
    }
    let z = f_obs * (population.weights()[index] / q_prob);
    let u = ctx.control_variate(population, index);
    Ok(Observation {
        index,
        f_obs,
        q_prob,
        z,
        u,
        step,
    })
}

/// `m` minus the misstatement mass already audited.
pub fn residual_null<T: Scalar>(m: T, audited_mass: T) -> T {
    m - audited_mass
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetBounds<T> {
    pub lower: T,
    pub upper: T,
}

/// Bet interval keeping `1 + lambda * g >= safety` for every payoff `g` in
/// `[g_lo, g_hi]`.
pub fn bet_bounds<T: Scalar>(g_lo: T, g_hi: T, cfg: &BetConfig<T>) -> BetBounds<T> {
    let reach = T::one() - cfg.safety;
    BetBounds {
        lower: -reach / g_hi.max(cfg.floor),
        upper: reach / (-g_lo).max(cfg.floor),
    }
}

/// ApproxKelly: `A/V` clipped to the bet bounds; zero before any data.
pub fn approx_kelly_bet<T: Scalar>(sum_payoff: T, sum_sq_payoff: T, bounds: BetBounds<T>) -> T {
    if sum_payoff == T::zero() {
        return T::zero();
    }
    if sum_sq_payoff <= T::zero() {
        return if sum_payoff > T::zero() {
            bounds.upper
        } else {
            bounds.lower
        };
    }
    (sum_payoff / sum_sq_payoff).max(bounds.lower).min(bounds.upper)
}

/// Predictable control-variate weight `-cv_num / cv_den` clipped to `[-1, 1]`.
pub fn beta_update<T: Scalar>(cv_num: T, cv_den: T, past_steps: usize) -> T {
    if past_steps == 0 || cv_den <= T::zero() {
        return T::zero();
    }
    (-cv_num / cv_den).max(-T::one()).min(T::one())
}

/// One-step growth: the quadratic lower bound and the realized log increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthDiagnostics<T> {
    pub bound: T,
    pub realized: T,
}

impl<T: Scalar> GrowthDiagnostics<T> {
    pub fn new(bet: T, payoff: T) -> Self {
        let x = bet * payoff;
        Self {
            bound: x - x * x,
            realized: x.ln_1p(),
        }
    }
}

/// What a null needs from one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput<T: Scalar> {
    pub z: T,
    pub u: T,
    /// Audited misstatement mass before this draw.
    pub audited_before: T,
    /// Unaudited weight before this draw.
    pub remaining_before: T,
    pub support: PayoffSupport<T>,
}

/// One round of draws (a single draw, or a minibatch) and the logical state
/// after it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundInput<T: Scalar> {
    pub steps: Vec<StepInput<T>>,
    pub audited_after: T,
    pub remaining_after: T,
}

fn exclusion_tol<T: Scalar>() -> T {
    T::epsilon() * T::lit(64.0)
}

fn outside_logical<T: Scalar>(mu: T, remaining: T) -> bool {
    let tol = exclusion_tol::<T>();
    mu < -tol || mu > remaining + tol
}

/// `z + bu - mu`, or exactly zero when it is within rounding of zero given
/// the size of its terms. Without this, degenerate supports (all payoffs
/// equal, as under the oracle strategy) let the clip bound admit bets large
/// enough to turn rounding noise into wealth.
fn net_payoff<T: Scalar>(z: T, bu: T, m: T, audited_before: T) -> T {
    let g = z + bu - residual_null(m, audited_before);
    let scale = z.abs() + bu.abs() + m.abs() + audited_before.abs();
    if g.abs() <= exclusion_tol::<T>() * scale {
        T::zero()
    } else {
        g
    }
}

/// Wealth-process state for a single null `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NullState<T: Scalar> {
    pub m: T,
    pub log_wealth: T,
    /// `A`: sum of past payoffs.
    pub sum_payoff: T,
    /// `V`: sum of squared past payoffs.
    pub sum_sq_payoff: T,
    pub cv_num: T,
    pub cv_den: T,
    /// Bet used at the most recent step.
    pub bet: T,
    /// Control-variate weight used at the most recent step.
    pub beta: T,
    /// `m` is logically impossible given the audited values.
    pub excluded: bool,
    pub steps: usize,
}

impl<T: Scalar> NullState<T> {
    pub fn new(m: T) -> Self {
        Self {
            m,
            log_wealth: T::zero(),
            sum_payoff: T::zero(),
            sum_sq_payoff: T::zero(),
            cv_num: T::zero(),
            cv_den: T::zero(),
            bet: T::zero(),
            beta: T::zero(),
            excluded: false,
            steps: 0,
        }
    }

    pub fn wealth(&self) -> T {
        self.log_wealth.exp()
    }

    /// Bet and control-variate weight for the next draw, fixed from the
    /// history so far.
    pub fn next_bet(&self, step: &StepInput<T>, cfg: &BetConfig<T>) -> (T, T) {
        let mu = residual_null(self.m, step.audited_before);
        let beta = if cfg.control_variates {
            beta_update(self.cv_num, self.cv_den, self.steps)
        } else {
            T::zero()
        };
        let s = &step.support;
        let (bu_lo, bu_hi) = {
            let (a, b) = (beta * s.u_lo, beta * s.u_hi);
            (a.min(b), a.max(b))
        };
        let bounds = bet_bounds(s.z_lo + bu_lo - mu, s.z_hi + bu_hi - mu, cfg);
        (
            approx_kelly_bet(self.sum_payoff, self.sum_sq_payoff, bounds),
            beta,
        )
    }

    /// Processes one round. Wealth is multiplied by the averaged bet payoff
    /// `1 + (1/B) sum lambda_i g_i`, which for a single draw is the ordinary
    /// update. Statistics advance after every draw so that later bets in a
    /// round see earlier in-round observations.
    pub fn observe_round(&mut self, round: &RoundInput<T>, cfg: &BetConfig<T>) -> Result<()> {
        if self.excluded {
            return Ok(());
        }
        let batch = T::from_usize_lossy(round.steps.len());
        let mut weighted = T::zero();
        for step in &round.steps {
            let mu = residual_null(self.m, step.audited_before);
            if outside_logical(mu, step.remaining_before) {
                self.excluded = true;
                return Ok(());
            }
            let (bet, beta) = self.next_bet(step, cfg);
            let payoff = net_payoff(step.z, beta * step.u, self.m, step.audited_before);
            let multiplier = T::one() + bet * payoff;
            if !(multiplier > T::zero()) {
                return Err(AuditError::Invariant(format!(
                    "wealth multiplier {multiplier} at m = {} (bet {bet}, payoff {payoff})",
                    self.m
                )));
            }
            weighted = weighted + bet * payoff;
            self.sum_payoff = self.sum_payoff + payoff;
            self.sum_sq_payoff = self.sum_sq_payoff + payoff * payoff;
            let centered = step.z - mu;
            self.cv_num = self.cv_num + centered * step.u;
            self.cv_den = self.cv_den + step.u * step.u;
            self.bet = bet;
            self.beta = beta;
            self.steps += 1;
        }
        let averaged = T::one() + weighted / batch;
        if !(averaged > T::zero()) {
            return Err(AuditError::Invariant(format!(
                "averaged multiplier {averaged} at m = {}",
                self.m
            )));
        }
        self.log_wealth = self.log_wealth + averaged.ln();
        let mu_next = residual_null(self.m, round.audited_after);
        if outside_logical(mu_next, round.remaining_after) {
            self.excluded = true;
        }
        Ok(())
    }

    /// Wealth state of null `m` recomputed from the full round history.
    pub fn replay(m: T, rounds: &[RoundInput<T>], cfg: &BetConfig<T>) -> Result<Self> {
        let mut state = Self::new(m);
        for round in rounds {
            state.observe_round(round, cfg)?;
            if state.excluded {
                break;
            }
        }
        Ok(state)
    }
}

/// Wealth processes over a grid of nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct NullGrid<T: Scalar> {
    states: Vec<NullState<T>>,
    cfg: BetConfig<T>,
}

impl<T: Scalar> NullGrid<T> {
    /// `size` equally spaced nulls on `[0, 1]`.
    pub fn uniform(size: usize, cfg: BetConfig<T>) -> Result<Self> {
        if size < 2 {
            return Err(AuditError::Config(format!(
                "grid needs at least 2 points, got {size}"
            )));
        }
        let last = T::from_usize_lossy(size - 1);
        Ok(Self::from_points(
            (0..size).map(|k| T::from_usize_lossy(k) / last),
            cfg,
        ))
    }

    pub fn from_points<I: IntoIterator<Item = T>>(points: I, cfg: BetConfig<T>) -> Self {
        Self {
            states: points.into_iter().map(NullState::new).collect(),
            cfg,
        }
    }

    pub fn from_states(states: Vec<NullState<T>>, cfg: BetConfig<T>) -> Self {
        Self { states, cfg }
    }

    pub fn config(&self) -> &BetConfig<T> {
        &self.cfg
    }

    pub fn states(&self) -> &[NullState<T>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn observe_round(&mut self, round: &RoundInput<T>) -> Result<()> {
        let cfg = self.cfg;
        self.states
            .iter_mut()
            .try_for_each(|s| s.observe_round(round, &cfg))
    }

    /// Single-draw update.
    pub fn update(&mut self, step: StepInput<T>, audited_after: T, remaining_after: T) -> Result<()> {
        self.observe_round(&RoundInput {
            steps: vec![step],
            audited_after,
            remaining_after,
        })
    }
}

/// Sum of weights over the given indices.
pub fn weight_of<T: Scalar>(population: &Population<T>, indices: &[usize]) -> T {
    let w = population.weights();
    compensated_sum(indices.iter().map(|&i| w[i]))
}
