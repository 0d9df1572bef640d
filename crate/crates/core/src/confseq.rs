//! Confidence sequences: betting, logical, running intersection, and the
//! closed-form Hoeffding and empirical-Bernstein constructions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::martingale::NullGrid;
use crate::scalar::Scalar;

/// Closed interval in `[0, 1]`, or the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Interval<T: Scalar> {
    pub lo: T,
    pub hi: T,
    #[serde(default)]
    pub empty: bool,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        if lo > hi {
            Self::empty()
        } else {
            Self {
                lo,
                hi,
                empty: false,
            }
        }
    }

    pub fn unit() -> Self {
        Self::new(T::zero(), T::one())
    }

    pub fn empty() -> Self {
        Self {
            lo: T::zero(),
            hi: T::zero(),
            empty: true,
        }
    }

    pub fn width(&self) -> T {
        if self.empty {
            T::zero()
        } else {
            self.hi - self.lo
        }
    }

    pub fn contains(&self, x: T) -> bool {
        !self.empty && self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.empty || (!other.empty && other.lo <= self.lo && self.hi <= other.hi)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        if self.empty || other.empty {
            return Self::empty();
        }
        Self::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn clamp_unit(&self) -> Self {
        self.intersect(&Self::unit())
    }
}

/// Family of probabilistic confidence sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsFamily {
    Betting,
    Hoeffding,
    EmpiricalBernstein,
}

impl CsFamily {
    pub const ALL: [CsFamily; 3] = [
        CsFamily::Betting,
        CsFamily::Hoeffding,
        CsFamily::EmpiricalBernstein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CsFamily::Betting => "betting",
            CsFamily::Hoeffding => "hoeffding",
            CsFamily::EmpiricalBernstein => "empirical_bernstein",
        }
    }
}

impl fmt::Display for CsFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CsFamily {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        CsFamily::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                AuditError::Config(format!(
                    "unknown CS family {s:?} (expected betting, hoeffding or empirical_bernstein)"
                ))
            })
    }
}

/// Status of one evaluated null when building the betting interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullStatus {
    Survives,
    Rejected,
    Excluded,
}

fn log_threshold<T: Scalar>(delta: T) -> T {
    (T::one() / delta).ln()
}

/// Convex hull of the non-excluded grid nulls whose wealth is still below
/// `1/delta`.
pub fn betting_interval<T: Scalar>(grid: &NullGrid<T>, delta: T) -> Interval<T> {
    let threshold = log_threshold(delta);
    let mut survivors = grid
        .states()
        .iter()
        .filter(|s| !s.excluded && s.log_wealth < threshold)
        .map(|s| s.m);
    match survivors.next() {
        None => Interval::empty(),
        Some(first) => {
            let last = survivors.last().unwrap_or(first);
            Interval::new(first, last)
        }
    }
}

/// Betting interval over nulls sorted by `m`, widened so each end reaches
/// the neighbouring rejected null: the continuous boundary lies somewhere
/// in that gap. Returns `[0, 1]` when every null is excluded, since the
/// logical bounds then carry all the information.
pub fn bracketed_betting_interval<T: Scalar>(points: &[(T, NullStatus)]) -> Interval<T> {
    let live: Vec<(T, NullStatus)> = points
        .iter()
        .copied()
        .filter(|(_, s)| *s != NullStatus::Excluded)
        .collect();
    if live.is_empty() {
        return Interval::unit();
    }
    let first = live.iter().position(|(_, s)| *s == NullStatus::Survives);
    let last = live.iter().rposition(|(_, s)| *s == NullStatus::Survives);
    match (first, last) {
        (Some(a), Some(b)) => {
            let lo = if a > 0 { live[a - 1].0 } else { live[a].0 };
            let hi = if b + 1 < live.len() { live[b + 1].0 } else { live[b].0 };
            Interval::new(lo, hi)
        }
        _ => Interval::empty(),
    }
}

/// Deterministic bounds `[L, L + remaining]` implied by the audited mass.
pub fn logical_bounds<T: Scalar>(audited_mass: T, remaining_weight: T) -> Interval<T> {
    Interval::new(audited_mass, audited_mass + remaining_weight).clamp_unit()
}

/// `prob ∩ logical ∩ previous`.
pub fn intersect_running<T: Scalar>(
    prob: &Interval<T>,
    logical: &Interval<T>,
    previous: &Interval<T>,
) -> Interval<T> {
    prob.intersect(logical).intersect(previous)
}

/// Snapshot of every interval maintained by a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct IntervalState<T: Scalar> {
    pub prob_cs: Interval<T>,
    pub logical: Interval<T>,
    pub combined: Interval<T>,
}

impl<T: Scalar> IntervalState<T> {
    pub fn initial() -> Self {
        Self {
            prob_cs: Interval::unit(),
            logical: Interval::unit(),
            combined: Interval::unit(),
        }
    }

    pub fn width(&self) -> T {
        self.combined.width()
    }

    pub fn advance(&mut self, prob_cs: Interval<T>, logical: Interval<T>) {
        self.combined = intersect_running(&prob_cs, &logical, &self.combined);
        self.prob_cs = prob_cs;
        self.logical = logical;
    }
}

/// Hoeffding CGF-like penalty `lambda^2 c^2 / 8`.
pub fn psi_hoeffding<T: Scalar>(lambda: T, c: T) -> T {
    lambda * lambda * c * c / T::lit(8.0)
}

/// Empirical-Bernstein penalty `(-log(1 - c lambda) - c lambda) / c^2`,
/// continuous at `c = 0` where it equals `lambda^2 / 2`.
pub fn psi_eb<T: Scalar>(lambda: T, c: T) -> T {
    let x = c * lambda;
    if x.abs() < T::lit(1e-3) {
        // -ln(1-x) - x = x^2/2 + x^3/3 + x^4/4 + ...
        let l2 = lambda * lambda;
        let mut acc = T::zero();
        for k in (2..=7).rev() {
            acc = acc * x + T::one() / T::from_usize_lossy(k);
        }
        l2 * acc
    } else {
        (-(-x).ln_1p() - x) / (c * c)
    }
}

/// Inputs to a closed-form update for one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormStep<T> {
    /// Importance-weighted payoff of the draw.
    pub z: T,
    /// Importance-weighted payoff with `f` replaced by `1 - f`.
    pub z_mirror: T,
    /// Audited misstatement mass before the draw.
    pub audited_before: T,
    /// Audited mass of `1 - f` before the draw.
    pub audited_mirror_before: T,
    /// Largest `pi(i)/q(i)` over indices with positive probability.
    pub max_ratio: T,
}

/// Running sums for the weighted Hoeffding confidence sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HoeffdingCs<T: Scalar> {
    pub sum_lambda: T,
    pub sum_lambda_mhat: T,
    pub sum_psi: T,
    pub steps: usize,
    horizon: T,
    delta: T,
}

impl<T: Scalar> HoeffdingCs<T> {
    /// `horizon` is the step count the default bet schedule is tuned for.
    pub fn new(delta: T, horizon: T) -> Self {
        Self {
            sum_lambda: T::zero(),
            sum_lambda_mhat: T::zero(),
            sum_psi: T::zero(),
            steps: 0,
            horizon,
            delta,
        }
    }

    /// Default bet `min(sqrt(8 log(2/delta) / (c^2 horizon)), 1/(2c))`.
    pub fn default_lambda(&self, c: T) -> T {
        let c = c.max(T::lit(1e-12));
        let two = T::lit(2.0);
        (T::lit(8.0) * (two / self.delta).ln() / (c * c * self.horizon))
            .sqrt()
            .min(T::one() / (two * c))
    }

    /// Records one draw with bet `lambda` and range bound `c`.
    pub fn record(&mut self, lambda: T, c: T, z: T, audited_before: T) {
        let mhat = z + audited_before;
        self.sum_lambda = self.sum_lambda + lambda;
        self.sum_lambda_mhat = self.sum_lambda_mhat + lambda * mhat;
        self.sum_psi = self.sum_psi + psi_hoeffding(lambda, c);
        self.steps += 1;
    }

    /// Records one draw using the default schedule.
    pub fn observe(&mut self, step: &ClosedFormStep<T>) {
        let c = step.max_ratio;
        let lambda = self.default_lambda(c);
        self.record(lambda, c, step.z, step.audited_before);
    }

    pub fn interval(&self, delta: T) -> Interval<T> {
        if !(self.sum_lambda > T::zero()) {
            return Interval::unit();
        }
        let center = self.sum_lambda_mhat / self.sum_lambda;
        let half = ((T::lit(2.0) / delta).ln() + self.sum_psi) / self.sum_lambda;
        Interval::new(center - half, center + half).clamp_unit()
    }
}

/// One-sided empirical-Bernstein lower confidence sequence. The two-sided
/// interval runs one on the payoffs and one on the mirrored payoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EbLowerCs<T: Scalar> {
    pub sum_lambda: T,
    pub sum_lambda_mhat: T,
    pub sum_penalty: T,
    /// Running mean of the estimates `mhat`; starts at 1.
    pub mean_estimate: T,
    sum_mhat: T,
    /// Welford accumulators over past payoffs.
    z_mean: T,
    z_m2: T,
    pub steps: usize,
    horizon: T,
    delta: T,
}

impl<T: Scalar> EbLowerCs<T> {
    pub fn new(delta: T, horizon: T) -> Self {
        Self {
            sum_lambda: T::zero(),
            sum_lambda_mhat: T::zero(),
            sum_penalty: T::zero(),
            mean_estimate: T::one(),
            sum_mhat: T::zero(),
            z_mean: T::zero(),
            z_m2: T::zero(),
            steps: 0,
            horizon,
            delta,
        }
    }

    /// Regularized running variance of past payoffs (0.25 before any data).
    pub fn variance_estimate(&self) -> T {
        let n = T::from_usize_lossy(self.steps);
        (T::lit(0.25) + self.z_m2) / (n + T::one())
    }

    /// Centering of the next payoff and the matching range bound `c`.
    pub fn centering(&self, audited_before: T) -> (T, T) {
        let _ = audited_before;
        let center = self.mean_estimate;
        (center, center.max(T::lit(1e-12)))
    }

    /// Default bet `min(sqrt(2 log(2/delta) / (sigma^2 horizon)), 0.5/c)`.
    pub fn default_lambda(&self, c: T) -> T {
        let var = self.variance_estimate().max(T::lit(1e-12));
        (T::lit(2.0) * (T::lit(2.0) / self.delta).ln() / (var * self.horizon))
            .sqrt()
            .min(T::lit(0.5) / c)
    }

    /// Records one payoff `z` (with audited mass `audited_before`) using the
    /// default bet.
    pub fn observe(&mut self, z: T, audited_before: T) {
        let (center, c) = self.centering(audited_before);
        let lambda = self.default_lambda(c);
        self.record(lambda, center, c, z, audited_before);
    }

    /// Records one payoff with an explicit bet; `lambda` must lie in `[0, 1/c)`.
    pub fn record(&mut self, lambda: T, center: T, c: T, z: T, audited_before: T) {
        debug_assert!(lambda >= T::zero() && lambda * c < T::one());
        let mhat = z + audited_before;
        let dev = z - center;
        self.sum_lambda = self.sum_lambda + lambda;
        self.sum_lambda_mhat = self.sum_lambda_mhat + lambda * mhat;
        self.sum_penalty = self.sum_penalty + dev * dev * psi_eb(lambda, c);
        self.steps += 1;
        self.sum_mhat = self.sum_mhat + mhat;
        self.mean_estimate = self.sum_mhat / T::from_usize_lossy(self.steps);
        let d = z - self.z_mean;
        self.z_mean = self.z_mean + d / T::from_usize_lossy(self.steps);
        self.z_m2 = self.z_m2 + d * (z - self.z_mean);
    }

    /// Unclamped lower bound; `None` before any positive bet.
    pub fn lower_bound(&self, delta: T) -> Option<T> {
        if !(self.sum_lambda > T::zero()) {
            return None;
        }
        Some(
            (self.sum_lambda_mhat - (T::lit(2.0) / delta).ln() - self.sum_penalty)
                / self.sum_lambda,
        )
    }
}

/// Two-sided empirical-Bernstein CS: direct lower bound, and an upper bound
/// of one minus a lower bound on `1 - m*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmpiricalBernsteinCs<T: Scalar> {
    pub direct: EbLowerCs<T>,
    pub mirrored: EbLowerCs<T>,
}

impl<T: Scalar> EmpiricalBernsteinCs<T> {
    pub fn new(delta: T, horizon: T) -> Self {
        Self {
            direct: EbLowerCs::new(delta, horizon),
            mirrored: EbLowerCs::new(delta, horizon),
        }
    }

    pub fn observe(&mut self, step: &ClosedFormStep<T>) {
        self.direct.observe(step.z, step.audited_before);
        self.mirrored
            .observe(step.z_mirror, step.audited_mirror_before);
    }

    pub fn interval(&self, delta: T) -> Interval<T> {
        let lo = self.direct.lower_bound(delta).unwrap_or(T::zero());
        let hi = self
            .mirrored
            .lower_bound(delta)
            .map(|l| T::one() - l)
            .unwrap_or(T::one());
        Interval::new(lo, hi).clamp_unit()
    }
}

/// Closed-form CS state for either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "family", rename_all = "snake_case")]
pub enum ClosedFormState<T: Scalar> {
    Hoeffding(HoeffdingCs<T>),
    EmpiricalBernstein(EmpiricalBernsteinCs<T>),
}

impl<T: Scalar> ClosedFormState<T> {
    pub fn new(family: CsFamily, delta: T, horizon: T) -> Option<Self> {
        match family {
            CsFamily::Betting => None,
            CsFamily::Hoeffding => Some(Self::Hoeffding(HoeffdingCs::new(delta, horizon))),
            CsFamily::EmpiricalBernstein => Some(Self::EmpiricalBernstein(
                EmpiricalBernsteinCs::new(delta, horizon),
            )),
        }
    }

    pub fn observe(&mut self, step: &ClosedFormStep<T>) {
        match self {
            Self::Hoeffding(h) => h.observe(step),
            Self::EmpiricalBernstein(e) => e.observe(step),
        }
    }

    pub fn interval(&self, delta: T) -> Interval<T> {
        match self {
            Self::Hoeffding(h) => h.interval(delta),
            Self::EmpiricalBernstein(e) => e.interval(delta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::{BetConfig, NullState};

    fn grid_with(log_wealth: impl Fn(f64) -> f64) -> NullGrid<f64> {
        let base = NullGrid::<f64>::uniform(1001, BetConfig::default()).unwrap();
        let states = base
            .states()
            .iter()
            .map(|s| NullState {
                log_wealth: log_wealth(s.m),
                ..s.clone()
            })
            .collect();
        NullGrid::from_states(states, BetConfig::default())
    }

    fn close(a: Interval<f64>, lo: f64, hi: f64) -> bool {
        !a.empty && (a.lo - lo).abs() < 1e-12 && (a.hi - hi).abs() < 1e-12
    }

    #[test]
    fn betting_interval_examples() {
        let delta = 0.05;
        let log20 = 20f64.ln();
        assert!(close(betting_interval(&grid_with(|_| 0.0), delta), 0.0, 1.0));
        let g = grid_with(|m| if (0.2..=0.3).contains(&m) { 0.0 } else { log20 + 1e-9 });
        assert!(close(betting_interval(&g, delta), 0.2, 0.3));
        let g = grid_with(|m| {
            if (0.2..=0.25).contains(&m) || (m - 0.4).abs() < 1e-9 {
                0.0
            } else {
                log20 + 1.0
            }
        });
        assert!(close(betting_interval(&g, delta), 0.2, 0.4));
        assert!(betting_interval(&grid_with(|_| 10.0), delta).empty);
    }

    #[test]
    fn bracketed_interval_reaches_neighbours() {
        use NullStatus::*;
        let pts = [
            (0.0, Excluded),
            (0.1, Rejected),
            (0.2, Survives),
            (0.3, Survives),
            (0.4, Rejected),
            (0.5, Rejected),
        ];
        assert!(close(bracketed_betting_interval(&pts), 0.1, 0.4));
        let all_out = [(0.0, Excluded), (0.5, Excluded)];
        assert!(close(bracketed_betting_interval(&all_out), 0.0, 1.0));
        let none = [(0.0, Rejected), (0.5, Rejected)];
        assert!(bracketed_betting_interval(&none).empty);
        // excluded neighbours do not widen the interval
        let edge = [(0.1, Excluded), (0.2, Survives), (0.3, Excluded)];
        assert!(close(bracketed_betting_interval(&edge), 0.2, 0.2));
    }

    #[test]
    fn logical_examples() {
        assert!(close(logical_bounds(0.0, 1.0), 0.0, 1.0));
        assert!(close(logical_bounds(0.5 * 0.2, 0.5), 0.1, 0.6));
        assert!(close(logical_bounds(0.22, 0.0), 0.22, 0.22));
    }

    #[test]
    fn running_intersection_examples() {
        let i = |a, b| Interval::new(a, b);
        assert!(close(
            intersect_running(&i(0.2, 0.9), &i(0.0, 0.55), &i(0.1, 0.6)),
            0.2,
            0.55
        ));
        assert!(close(
            intersect_running(&Interval::unit(), &Interval::unit(), &Interval::unit()),
            0.0,
            1.0
        ));
        assert!(intersect_running(&i(0.6, 0.9), &Interval::unit(), &i(0.1, 0.5)).empty);
    }

    #[test]
    fn hoeffding_without_data_is_unit() {
        let h = HoeffdingCs::<f64>::new(0.05, 50.0);
        assert!(close(h.interval(0.05), 0.0, 1.0));
    }

    #[test]
    fn hoeffding_constant_bets_half_width() {
        let (lambda, c, t, delta) = (0.7, 0.9, 12usize, 0.05);
        let mut h = HoeffdingCs::<f64>::new(delta, 50.0);
        for _ in 0..t {
            // centre at 0.5 so the clamp does not bind
            h.record(lambda, c, 0.5, 0.0);
        }
        let expected = ((2.0 / delta).ln() + t as f64 * lambda * lambda * c * c / 8.0)
            / (t as f64 * lambda);
        let i = h.interval(delta);
        let half = ((i.hi - i.lo) / 2.0).min(0.5);
        assert!((half - expected.min(0.5)).abs() < 1e-12);
    }

    #[test]
    fn eb_without_data_is_unit() {
        let e = EmpiricalBernsteinCs::<f64>::new(0.05, 50.0);
        assert!(close(e.interval(0.05), 0.0, 1.0));
    }

    #[test]
    fn psi_eb_continuous_at_small_c() {
        let lambda = 0.8_f64;
        let small = psi_eb(lambda, 1e-6);
        assert!((small - lambda * lambda / 2.0).abs() < 1e-6);
        for x in [0.999e-3_f64, 1.001e-3] {
            let c = x / lambda;
            let series: f64 = (2..40).map(|k| x.powi(k) / k as f64).sum::<f64>() / (c * c);
            assert!((psi_eb(lambda, c) - series).abs() < 1e-9 * series);
        }
    }

    #[test]
    fn family_names_roundtrip() {
        for f in CsFamily::ALL {
            assert_eq!(f.name().parse::<CsFamily>().unwrap(), f);
        }
        assert!("bayes".parse::<CsFamily>().is_err());
    }
}
