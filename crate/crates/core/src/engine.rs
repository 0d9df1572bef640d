//! Audit sessions: draw, observe, update, stop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confseq::{
    bracketed_betting_interval, logical_bounds, ClosedFormState, ClosedFormStep, CsFamily,
    Interval, IntervalState, NullStatus,
};
use crate::error::{AuditError, Result};
use crate::martingale::{
    compute_payoff, BetConfig, DrawContext, NullGrid, NullState, Observation, RoundInput,
    StepInput,
};
use crate::population::Population;
use crate::rng::{AuditRng, RngState};
use crate::sampling::{draw_index, make_distribution, Distribution, Strategy};
use crate::scalar::{compensated_sum, Scalar};

pub const DEFAULT_GRID_SIZE: usize = 1001;

fn default_batch_size() -> usize {
    1
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SessionConfig<T: Scalar> {
    pub epsilon: T,
    pub delta: T,
    pub strategy: Strategy,
    pub cs_family: CsFamily,
    #[serde(default)]
    pub control_variates: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Known relative accuracy `a` of the scores: `S/f` in `[1-a, 1+a]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_accuracy: Option<T>,
    /// Step count the closed-form bet schedules are tuned for (default N/2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<T>,
}

impl<T: Scalar> SessionConfig<T> {
    pub fn new(epsilon: T, delta: T, strategy: Strategy, cs_family: CsFamily) -> Self {
        Self {
            epsilon,
            delta,
            strategy,
            cs_family,
            control_variates: false,
            batch_size: 1,
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            score_accuracy: None,
            horizon: None,
        }
    }

    pub fn validate(&self, population: &Population<T>) -> Result<()> {
        let bad = |msg: String| Err(AuditError::Config(msg));
        if !(self.epsilon > T::zero() && self.epsilon <= T::one()) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.grid_size < 2 {
            return bad(format!("grid size must be at least 2, got {}", self.grid_size));
        }
        if self.batch_size == 0 || self.batch_size > population.len() {
            return bad(format!(
                "batch size must lie in [1, {}], got {}",
                population.len(),
                self.batch_size
            ));
        }
        if self.control_variates && self.cs_family != CsFamily::Betting {
            return bad("control variates require the betting CS".into());
        }
        if let Some(a) = self.score_accuracy {
            if !(a >= T::zero() && a < T::one()) {
                return bad(format!("score accuracy must lie in [0, 1), got {a}"));
            }
            if population.scores().is_none() {
                return bad("score accuracy given but the population has no scores".into());
            }
        }
        if let Some(h) = self.horizon {
            if !(h > T::zero()) {
                return bad(format!("horizon must be positive, got {h}"));
            }
        }
        self.strategy.check_population(population)
    }
}

/// One recorded draw, as persisted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HistoryEntry<T: Scalar> {
    pub step: usize,
    pub index: usize,
    pub q_prob: T,
    pub f_obs: T,
}

/// Ordered audit record. The order of entries is the filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditHistory<T: Scalar> {
    observations: Vec<Observation<T>>,
    audited: Vec<bool>,
    audited_mass: T,
    audited_mirror_mass: T,
    remaining_weight: T,
    rounds: usize,
}

impl<T: Scalar> AuditHistory<T> {
    fn new(n: usize) -> Self {
        Self {
            observations: Vec::new(),
            audited: vec![false; n],
            audited_mass: T::zero(),
            audited_mirror_mass: T::zero(),
            remaining_weight: T::one(),
            rounds: 0,
        }
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn is_audited(&self, index: usize) -> bool {
        self.audited[index]
    }

    pub fn remaining(&self) -> Vec<usize> {
        (0..self.audited.len()).filter(|&i| !self.audited[i]).collect()
    }

    /// `sum pi(I_j) f(I_j)` over audited draws.
    pub fn audited_mass(&self) -> T {
        self.audited_mass
    }

    /// `sum pi(I_j) (1 - f(I_j))` over audited draws.
    pub fn audited_mirror_mass(&self) -> T {
        self.audited_mirror_mass
    }

    pub fn remaining_weight(&self) -> T {
        self.remaining_weight
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn push(&mut self, obs: Observation<T>, population: &Population<T>) {
        self.audited[obs.index] = true;
        self.observations.push(obs);
        let w = population.weights();
        self.audited_mass = compensated_sum(self.observations.iter().map(|o| w[o.index] * o.f_obs));
        self.audited_mirror_mass = compensated_sum(
            self.observations
                .iter()
                .map(|o| w[o.index] * (T::one() - o.f_obs)),
        );
        self.remaining_weight = compensated_sum(
            (0..self.audited.len())
                .filter(|&i| !self.audited[i])
                .map(|i| w[i]),
        );
    }

    pub fn entries(&self) -> Vec<HistoryEntry<T>> {
        self.observations
            .iter()
            .map(|o| HistoryEntry {
                step: o.step,
                index: o.index,
                q_prob: o.q_prob,
                f_obs: o.f_obs,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    /// The width target was reached; auditing may continue on request.
    Stopped,
    /// Every transaction has been audited.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PendingDraw<T: Scalar> {
    pub index: usize,
    pub q_prob: T,
}

/// Result of recording one round of observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SessionUpdate<T: Scalar> {
    pub interval: Interval<T>,
    pub width: T,
    pub stopped: bool,
    pub t: usize,
}

/// Interval state after round `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraceEntry<T: Scalar> {
    pub t: usize,
    pub audited: usize,
    pub prob_cs: Interval<T>,
    pub logical: Interval<T>,
    pub combined: Interval<T>,
    pub width: T,
}

/// Outcome of testing the assertion `m* <= epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Confirm,
    Continue,
}

#[derive(Debug, Clone)]
enum Estimator<T: Scalar> {
    Betting {
        grid: NullGrid<T>,
        rounds: Vec<RoundInput<T>>,
    },
    ClosedForm(ClosedFormState<T>),
}

/// Persisted form of a session: configuration, population, history and
/// generator state. Derived state is rebuilt on restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SessionSnapshot<T: Scalar> {
    pub id: String,
    pub config: SessionConfig<T>,
    pub population: Population<T>,
    pub history: Vec<HistoryEntry<T>>,
    #[serde(default)]
    pub pending: Vec<PendingDraw<T>>,
    pub rng_state: RngState,
    pub status: SessionStatus,
    pub stopped_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AuditSession<T: Scalar> {
    id: String,
    population: Arc<Population<T>>,
    config: SessionConfig<T>,
    history: AuditHistory<T>,
    rng: AuditRng,
    estimator: Estimator<T>,
    intervals: IntervalState<T>,
    pending: Option<Vec<PendingDraw<T>>>,
    status: SessionStatus,
    stopped_at: Option<usize>,
    trace: Vec<TraceEntry<T>>,
}

impl<T: Scalar> AuditSession<T> {
    pub fn create(
        id: impl Into<String>,
        population: Arc<Population<T>>,
        config: SessionConfig<T>,
    ) -> Result<Self> {
        config.validate(&population)?;
        let n = population.len();
        let horizon = config
            .horizon
            .unwrap_or_else(|| (T::from_usize_lossy(n) / T::lit(2.0)).max(T::one()));
        let estimator = match ClosedFormState::new(config.cs_family, config.delta, horizon) {
            Some(state) => Estimator::ClosedForm(state),
            None => {
                let bet = BetConfig {
                    control_variates: config.control_variates,
                    ..BetConfig::default()
                };
                Estimator::Betting {
                    grid: NullGrid::uniform(config.grid_size, bet)?,
                    rounds: Vec::new(),
                }
            }
        };
        Ok(Self {
            id: id.into(),
            rng: AuditRng::new(config.seed),
            history: AuditHistory::new(n),
            population,
            config,
            estimator,
            intervals: IntervalState::initial(),
            pending: None,
            status: SessionStatus::Running,
            stopped_at: None,
            trace: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn population(&self) -> &Arc<Population<T>> {
        &self.population
    }

    pub fn config(&self) -> &SessionConfig<T> {
        &self.config
    }

    pub fn history(&self) -> &AuditHistory<T> {
        &self.history
    }

    pub fn intervals(&self) -> &IntervalState<T> {
        &self.intervals
    }

    pub fn interval(&self) -> Interval<T> {
        self.intervals.combined
    }

    pub fn width(&self) -> T {
        self.intervals.width()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    /// Rounds recorded so far.
    pub fn t(&self) -> usize {
        self.history.rounds()
    }

    pub fn pending(&self) -> Option<&[PendingDraw<T>]> {
        self.pending.as_deref()
    }

    pub fn trace(&self) -> &[TraceEntry<T>] {
        &self.trace
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }

    pub fn grid(&self) -> Option<&NullGrid<T>> {
        match &self.estimator {
            Estimator::Betting { grid, .. } => Some(grid),
            Estimator::ClosedForm(_) => None,
        }
    }

    pub fn closed_form(&self) -> Option<&ClosedFormState<T>> {
        match &self.estimator {
            Estimator::ClosedForm(state) => Some(state),
            Estimator::Betting { .. } => None,
        }
    }

    /// Current sampling distribution over the unaudited indices.
    pub fn distribution(&self) -> Result<Distribution<T>> {
        make_distribution(self.config.strategy, &self.population, &self.history.remaining())
    }

    /// Draws the next index (or minibatch) and marks it pending.
    pub fn next_draw(&mut self) -> Result<Vec<usize>> {
        if self.pending.is_some() {
            return Err(AuditError::Sequencing(
                "a draw is already pending; record its observations first".into(),
            ));
        }
        if self.status == SessionStatus::Exhausted {
            return Err(AuditError::Exhausted);
        }
        let base = self.distribution()?;
        let size = self.config.batch_size.min(base.len());
        let mut drawn: Vec<PendingDraw<T>> = Vec::with_capacity(size);
        for _ in 0..size {
            let taken: Vec<usize> = drawn.iter().map(|d| d.index).collect();
            let dist = base.restricted(&taken)?;
            let index = draw_index(&dist, &mut self.rng);
            let q_prob = dist.prob_of(index).expect("drawn from support");
            drawn.push(PendingDraw { index, q_prob });
        }
        let indices = drawn.iter().map(|d| d.index).collect();
        self.pending = Some(drawn);
        Ok(indices)
    }

    /// Records the misstated fractions of the pending draw(s), given as
    /// `(index, f)` pairs in any order.
    pub fn record_observation(&mut self, observed: &[(usize, T)]) -> Result<SessionUpdate<T>> {
        let pending = self
            .pending
            .clone()
            .ok_or_else(|| AuditError::Sequencing("no draw is pending".into()))?;
        for &(index, f) in observed {
            if !(f >= T::zero() && f <= T::one()) {
                return Err(AuditError::Validation(format!(
                    "misstated fraction for index {index} must lie in [0, 1], got {f}"
                )));
            }
        }
        let mut values = Vec::with_capacity(pending.len());
        for p in &pending {
            let mut hits = observed.iter().filter(|(i, _)| *i == p.index);
            match (hits.next(), hits.next()) {
                (Some(&(_, f)), None) => values.push(f),
                _ => {
                    return Err(AuditError::Validation(format!(
                        "expected exactly one observation for pending index {}",
                        p.index
                    )))
                }
            }
        }
        if observed.len() != pending.len() {
            return Err(AuditError::Validation(format!(
                "expected {} observations, got {}",
                pending.len(),
                observed.len()
            )));
        }
        self.apply_round(&pending, &values)?;
        self.pending = None;
        Ok(self.update_summary())
    }

    /// Records a round whose indices were chosen outside the session, as when
    /// replaying an audit recorded elsewhere. Each index must have positive
    /// probability under the strategy given the earlier indices of the round.
    pub fn record_external(&mut self, observed: &[(usize, T)]) -> Result<SessionUpdate<T>> {
        if self.pending.is_some() {
            return Err(AuditError::Sequencing(
                "a draw is pending; record its observations first".into(),
            ));
        }
        if self.status == SessionStatus::Exhausted {
            return Err(AuditError::Exhausted);
        }
        if observed.is_empty() || observed.len() > self.config.batch_size {
            return Err(AuditError::Validation(format!(
                "a round holds between 1 and {} observations, got {}",
                self.config.batch_size,
                observed.len()
            )));
        }
        let drawn = self.external_draws(observed.iter().map(|o| o.0))?;
        for &(index, f) in observed {
            if !(f >= T::zero() && f <= T::one()) {
                return Err(AuditError::Validation(format!(
                    "misstated fraction for index {index} must lie in [0, 1], got {f}"
                )));
            }
        }
        let values: Vec<T> = observed.iter().map(|o| o.1).collect();
        self.apply_round(&drawn, &values)?;
        Ok(self.update_summary())
    }

    fn external_draws(&self, indices: impl Iterator<Item = usize>) -> Result<Vec<PendingDraw<T>>> {
        let base = self.distribution()?;
        let mut drawn: Vec<PendingDraw<T>> = Vec::new();
        for index in indices {
            let taken: Vec<usize> = drawn.iter().map(|d| d.index).collect();
            let q_prob = base
                .restricted(&taken)?
                .prob_of(index)
                .filter(|&q| q > T::zero())
                .ok_or(AuditError::ImpossibleDraw { index })?;
            drawn.push(PendingDraw { index, q_prob });
        }
        Ok(drawn)
    }

    fn apply_round(&mut self, pending: &[PendingDraw<T>], values: &[T]) -> Result<()> {
        let step_no = self.history.rounds() + 1;
        let base = self.distribution()?;
        let pop = Arc::clone(&self.population);
        let weights = pop.weights();
        let mut steps = Vec::with_capacity(pending.len());
        let mut closed_steps = Vec::with_capacity(pending.len());
        let mut observations = Vec::with_capacity(pending.len());
        let mut audited = self.history.audited_mass();
        let mut audited_mirror = self.history.audited_mirror_mass();
        let mut remaining = self.history.remaining_weight();
        for (k, (p, &f)) in pending.iter().zip(values).enumerate() {
            let taken: Vec<usize> = pending[..k].iter().map(|d| d.index).collect();
            let dist = base.restricted(&taken)?;
            let ctx = DrawContext::new(&dist, &pop, self.config.score_accuracy);
            let obs = compute_payoff(p.index, f, &dist, &ctx, &pop, step_no)?;
            if self.config.score_accuracy.is_some() {
                let tol = T::lit(1e-9) * (T::one() + ctx.support.z_hi.abs());
                if obs.z < ctx.support.z_lo - tol || obs.z > ctx.support.z_hi + tol {
                    return Err(AuditError::Validation(format!(
                        "observed fraction {f} for index {} contradicts the declared score accuracy",
                        p.index
                    )));
                }
            }
            let w = weights[p.index];
            steps.push(StepInput {
                z: obs.z,
                u: obs.u,
                audited_before: audited,
                remaining_before: remaining,
                support: ctx.support,
            });
            closed_steps.push(ClosedFormStep {
                z: obs.z,
                z_mirror: (T::one() - f) * (w / obs.q_prob),
                audited_before: audited,
                audited_mirror_before: audited_mirror,
                max_ratio: ctx.max_ratio,
            });
            audited = audited + w * f;
            audited_mirror = audited_mirror + w * (T::one() - f);
            remaining = remaining - w;
            observations.push(obs);
        }

        for obs in observations {
            self.history.push(obs, &pop);
        }
        self.history.rounds += 1;

        let audited_after = self.history.audited_mass();
        let remaining_after = self.history.remaining_weight();
        let logical = logical_bounds(audited_after, remaining_after);
        let prob_cs = match &mut self.estimator {
            Estimator::Betting { grid, rounds } => {
                let round = RoundInput {
                    steps,
                    audited_after,
                    remaining_after,
                };
                grid.observe_round(&round)?;
                rounds.push(round);
                betting_cs(grid, rounds, &logical, self.config.delta)?
            }
            Estimator::ClosedForm(state) => {
                for s in &closed_steps {
                    state.observe(s);
                }
                state.interval(self.config.delta)
            }
        };
        self.intervals.advance(prob_cs, logical);

        let t = self.history.rounds();
        self.trace.push(TraceEntry {
            t,
            audited: self.history.len(),
            prob_cs,
            logical,
            combined: self.intervals.combined,
            width: self.intervals.width(),
        });
        if self.stopped_at.is_none() && self.intervals.width() <= self.config.epsilon {
            self.stopped_at = Some(t);
        }
        self.status = if self.history.remaining().is_empty() {
            SessionStatus::Exhausted
        } else if self.stopped_at.is_some() {
            SessionStatus::Stopped
        } else {
            SessionStatus::Running
        };
        Ok(())
    }

    fn update_summary(&self) -> SessionUpdate<T> {
        SessionUpdate {
            interval: self.intervals.combined,
            width: self.intervals.width(),
            stopped: self.stopped_at.is_some(),
            t: self.history.rounds(),
        }
    }

    /// Decision on the assertion `m* <= epsilon`.
    pub fn test_assertion(&self, epsilon: T) -> Decision {
        decide(&self.intervals.combined, epsilon)
    }

    /// Interval for the misstatement left after correcting audited items.
    pub fn remaining_fraction_interval(&self) -> Interval<T> {
        shift_down(&self.intervals.combined, self.history.audited_mass())
    }

    /// Log-wealth of the null `m`, recomputed from the history. `None` for
    /// closed-form sessions.
    pub fn log_wealth_at(&self, m: T) -> Result<Option<T>> {
        match &self.estimator {
            Estimator::Betting { grid, rounds } => {
                Ok(Some(NullState::replay(m, rounds, grid.config())?.log_wealth))
            }
            Estimator::ClosedForm(_) => Ok(None),
        }
    }

    pub fn snapshot(&self) -> SessionSnapshot<T> {
        SessionSnapshot {
            id: self.id.clone(),
            config: self.config.clone(),
            population: self.population.without_truth(),
            history: self.history.entries(),
            pending: self.pending.clone().unwrap_or_default(),
            rng_state: self.rng.state(),
            status: self.status,
            stopped_at: self.stopped_at,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::restore(serde_json::from_str(json)?)
    }

    /// Rebuilds a session by replaying its recorded history.
    pub fn restore(snapshot: SessionSnapshot<T>) -> Result<Self> {
        let p = snapshot.population;
        let population = Arc::new(Population::new(
            p.ids().to_vec(),
            p.reported().to_vec(),
            p.scores().map(<[T]>::to_vec),
            p.truth().map(<[T]>::to_vec),
        )?);
        Self::restore_with(snapshot.id, population, snapshot.config, &snapshot.history, snapshot.pending, snapshot.rng_state, snapshot.status, snapshot.stopped_at)
    }

    #[allow(clippy::too_many_arguments)]
    fn restore_with(
        id: String,
        population: Arc<Population<T>>,
        config: SessionConfig<T>,
        history: &[HistoryEntry<T>],
        pending: Vec<PendingDraw<T>>,
        rng_state: RngState,
        status: SessionStatus,
        stopped_at: Option<usize>,
    ) -> Result<Self> {
        let mut session = Self::create(id, population, config)?;
        let mut start = 0;
        while start < history.len() {
            let step = history[start].step;
            let end = start
                + history[start..]
                    .iter()
                    .take_while(|e| e.step == step)
                    .count();
            let round = &history[start..end];
            if step != session.t() + 1 {
                return Err(AuditError::Format(format!(
                    "history step {step} out of order"
                )));
            }
            let drawn = session
                .external_draws(round.iter().map(|e| e.index))
                .map_err(|_| AuditError::Format(format!("history round {step} is not a valid draw")))?;
            for (e, d) in round.iter().zip(&drawn) {
                let tol = T::lit(1e-9) * d.q_prob;
                if (d.q_prob - e.q_prob).abs() > tol {
                    return Err(AuditError::Format(format!(
                        "recorded probability {} for index {} does not match {}",
                        e.q_prob, e.index, d.q_prob
                    )));
                }
            }
            let values: Vec<T> = round.iter().map(|e| e.f_obs).collect();
            session.apply_round(&drawn, &values)?;
            start = end;
        }
        if session.status != status || session.stopped_at != stopped_at {
            return Err(AuditError::Format(format!(
                "replayed status {:?}/{:?} disagrees with recorded {:?}/{:?}",
                session.status, session.stopped_at, status, stopped_at
            )));
        }
        session.rng = AuditRng::from_state(rng_state);
        session.pending = if pending.is_empty() { None } else { Some(pending) };
        Ok(session)
    }
}

/// Reject when the interval lies above `epsilon`, confirm when it lies at or
/// below it, continue otherwise. An empty interval never decides.
pub fn decide<T: Scalar>(interval: &Interval<T>, epsilon: T) -> Decision {
    if interval.empty {
        Decision::Continue
    } else if interval.lo > epsilon {
        Decision::Reject
    } else if interval.hi <= epsilon {
        Decision::Confirm
    } else {
        Decision::Continue
    }
}

/// Shifts an interval down by `mass`, flooring both ends at zero.
pub fn shift_down<T: Scalar>(interval: &Interval<T>, mass: T) -> Interval<T> {
    if interval.empty {
        return *interval;
    }
    Interval::new(
        (interval.lo - mass).max(T::zero()),
        (interval.hi - mass).max(T::zero()),
    )
}

/// Betting interval evaluated on the grid plus the two logical endpoints,
/// bracketed to neighbouring rejected nulls.
fn betting_cs<T: Scalar>(
    grid: &NullGrid<T>,
    rounds: &[RoundInput<T>],
    logical: &Interval<T>,
    delta: T,
) -> Result<Interval<T>> {
    let threshold = (T::one() / delta).ln();
    let status = |s: &NullState<T>| {
        if s.excluded {
            NullStatus::Excluded
        } else if s.log_wealth < threshold {
            NullStatus::Survives
        } else {
            NullStatus::Rejected
        }
    };
    let mut points: Vec<(T, NullStatus)> = grid.states().iter().map(|s| (s.m, status(s))).collect();
    if !logical.empty {
        for m in [logical.lo, logical.hi] {
            let probe = NullState::replay(m, rounds, grid.config())?;
            points.push((m, status(&probe)));
        }
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nulls"));
    Ok(bracketed_betting_interval(&points))
}
