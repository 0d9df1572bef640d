//! Synthetic scenarios and batch experiments.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confseq::CsFamily;
use crate::engine::{AuditSession, SessionConfig, SessionStatus, DEFAULT_GRID_SIZE};
use crate::error::{AuditError, Result};
use crate::population::Population;
use crate::rng::{derive_seed, AuditRng};
use crate::sampling::Strategy;

/// f range of indices whose weight class carries large misstatements.
pub const LARGE_F: (f64, f64) = (0.4, 0.5);
/// f range of the other weight class.
pub const SMALL_F: (f64, f64) = (0.001, 0.01);

/// Slack used when checking whether an interval covers `m*`.
const COVER_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    /// Large weights carry large f.
    PropPi,
    /// Large weights carry small f.
    InvPropPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreMode {
    None,
    /// `S = f * u`, `u ~ U[1-a, 1+a]`, clamped to `[0, 1]`.
    Relative { accuracy: f64 },
    /// `S = c f + (1-c) R`, `R ~ U[0, 1]`.
    Mixture { c: f64 },
}

/// One estimation method run on every trial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub strategy: Strategy,
    pub cs_family: CsFamily,
    #[serde(default)]
    pub control_variates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MethodConfig {
    pub fn new(strategy: Strategy, cs_family: CsFamily, control_variates: bool) -> Self {
        Self {
            strategy,
            cs_family,
            control_variates,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => {
                let mut l = format!("{}+{}", self.strategy, self.cs_family.name());
                if self.control_variates {
                    l.push_str("+cv");
                }
                l
            }
        }
    }
}

fn default_large() -> (f64, f64) {
    (100.0, 1000.0)
}
fn default_small() -> (f64, f64) {
    (1.0, 10.0)
}
fn default_strategy() -> Strategy {
    Strategy::PropM
}
fn default_family() -> CsFamily {
    CsFamily::Betting
}
fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}
fn default_batch() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_trials() -> usize {
    100
}
fn default_score_mode() -> ScoreMode {
    ScoreMode::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub n1_frac: f64,
    pub f_mode: FMode,
    #[serde(default = "default_score_mode")]
    pub score_mode: ScoreMode,
    #[serde(default = "default_large")]
    pub large_range: (f64, f64),
    #[serde(default = "default_small")]
    pub small_range: (f64, f64),
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_family")]
    pub cs_family: CsFamily,
    #[serde(default)]
    pub control_variates: bool,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Pass the relative accuracy of generated scores to the sessions.
    #[serde(default = "default_true")]
    pub declare_score_accuracy: bool,
    /// Keep auditing past the stopping time until the population is exhausted.
    #[serde(default)]
    pub run_to_completion: bool,
    /// Methods compared on each trial; empty means the single method given
    /// by the top-level fields.
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
}

impl ScenarioConfig {
    pub fn new(n: usize, n1_frac: f64, f_mode: FMode, epsilon: f64, delta: f64) -> Self {
        Self {
            n,
            n1_frac,
            f_mode,
            score_mode: ScoreMode::None,
            large_range: default_large(),
            small_range: default_small(),
            trials: default_trials(),
            seed: 0,
            epsilon,
            delta,
            strategy: Strategy::PropM,
            cs_family: CsFamily::Betting,
            control_variates: false,
            grid_size: DEFAULT_GRID_SIZE,
            batch_size: 1,
            declare_score_accuracy: true,
            run_to_completion: false,
            methods: Vec::new(),
        }
    }

    pub fn n_large(&self) -> usize {
        (self.n1_frac * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AuditError::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.n1_frac) {
            return bad(format!("n1_frac must lie in [0, 1], got {}", self.n1_frac));
        }
        for (name, (lo, hi)) in [("large_range", self.large_range), ("small_range", self.small_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} must be a positive range, got [{lo}, {hi}]"));
            }
        }
        match self.score_mode {
            ScoreMode::Relative { accuracy } if !(0.0..1.0).contains(&accuracy) => {
                return bad(format!("relative accuracy must lie in [0, 1), got {accuracy}"))
            }
            ScoreMode::Mixture { c } if !(c > 0.0 && c <= 1.0) => {
                return bad(format!("mixture weight must lie in (0, 1], got {c}"))
            }
            _ => {}
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        Ok(())
    }

    pub fn method_list(&self) -> Vec<MethodConfig> {
        if self.methods.is_empty() {
            vec![MethodConfig::new(self.strategy, self.cs_family, self.control_variates)]
        } else {
            self.methods.clone()
        }
    }

    pub fn session_config(&self, method: &MethodConfig, seed: u64) -> SessionConfig<f64> {
        let mut cfg = SessionConfig::new(self.epsilon, self.delta, method.strategy, method.cs_family);
        cfg.control_variates = method.control_variates;
        cfg.grid_size = self.grid_size;
        cfg.batch_size = self.batch_size;
        cfg.seed = seed;
        if let (ScoreMode::Relative { accuracy }, true) = (self.score_mode, self.declare_score_accuracy) {
            cfg.score_accuracy = Some(accuracy);
        }
        cfg
    }

    /// Seed of trial `k`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, trial as u64)
    }
}

/// Reported values and true fractions: the first `N1` indices are large.
pub fn generate_population(scenario: &ScenarioConfig, rng: &mut AuditRng) -> Result<Population<f64>> {
    scenario.validate()?;
    let n1 = scenario.n_large();
    let mut reported = Vec::with_capacity(scenario.n);
    let mut truth = Vec::with_capacity(scenario.n);
    for i in 0..scenario.n {
        let large = i < n1;
        let (lo, hi) = if large { scenario.large_range } else { scenario.small_range };
        reported.push(rng.uniform(lo, hi)?);
        let big_f = large == (scenario.f_mode == FMode::PropPi);
        let (flo, fhi) = if big_f { LARGE_F } else { SMALL_F };
        truth.push(rng.uniform(flo, fhi)?);
    }
    Population::from_values(reported, None, Some(truth))
}

pub fn generate_scores(
    population: &Population<f64>,
    mode: ScoreMode,
    rng: &mut AuditRng,
) -> Result<Option<Vec<f64>>> {
    let truth = population
        .truth()
        .ok_or_else(|| AuditError::Config("score generation needs true fractions".into()))?;
    Ok(match mode {
        ScoreMode::None => None,
        ScoreMode::Relative { accuracy } => Some(
            truth
                .iter()
                .map(|&f| {
                    let u = rng.uniform(1.0 - accuracy, 1.0 + accuracy)?;
                    Ok((f * u).clamp(0.0, 1.0))
                })
                .collect::<Result<_>>()?,
        ),
        ScoreMode::Mixture { c } => Some(
            truth
                .iter()
                .map(|&f| c * f + (1.0 - c) * rng.unit())
                .collect(),
        ),
    })
}

/// Population (with scores) used by trial `k`.
pub fn trial_population(scenario: &ScenarioConfig, trial: usize) -> Result<Population<f64>> {
    let seed = scenario.trial_seed(trial);
    let pop = generate_population(scenario, &mut AuditRng::split(seed, 0))?;
    match generate_scores(&pop, scenario.score_mode, &mut AuditRng::split(seed, 1))? {
        Some(scores) => pop.with_scores(scores),
        None => Ok(pop),
    }
}

/// Outcome of one session run against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub tau: usize,
    pub miscovered: bool,
    /// Combined-CS width after each round.
    pub widths: Vec<f64>,
}

/// Runs a session answering every draw from the population's truth.
pub fn run_session(
    population: Arc<Population<f64>>,
    config: SessionConfig<f64>,
    to_completion: bool,
) -> Result<TrialOutcome> {
    let truth: Vec<f64> = population
        .truth()
        .ok_or_else(|| AuditError::Config("simulation needs true fractions".into()))?
        .to_vec();
    let m_star = population.m_star().expect("truth present");
    let mut session = AuditSession::create("trial", population, config)?;
    let mut miscovered = false;
    loop {
        let drawn = session.next_draw()?;
        let obs: Vec<(usize, f64)> = drawn.iter().map(|&i| (i, truth[i])).collect();
        session.record_observation(&obs)?;
        let c = session.interval();
        if c.empty || m_star < c.lo - COVER_SLACK || m_star > c.hi + COVER_SLACK {
            miscovered = true;
        }
        match session.status() {
            SessionStatus::Exhausted => break,
            SessionStatus::Stopped if !to_completion => break,
            _ => {}
        }
    }
    Ok(TrialOutcome {
        tau: session.stopped_at().unwrap_or(session.t()),
        miscovered,
        widths: session.trace().iter().map(|e| e.width).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthQuantiles {
    pub t: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub label: String,
    pub taus: Vec<usize>,
    pub miscovered: Vec<bool>,
    pub widths: Vec<WidthQuantiles>,
}

impl MethodResult {
    pub fn mean_tau(&self) -> f64 {
        self.taus.iter().sum::<usize>() as f64 / self.taus.len() as f64
    }

    pub fn miscoverage_count(&self) -> usize {
        self.miscovered.iter().filter(|&&m| m).count()
    }

    pub fn miscoverage_rate(&self) -> f64 {
        self.miscoverage_count() as f64 / self.miscovered.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: ScenarioConfig,
    pub methods: Vec<MethodResult>,
}

impl ExperimentResult {
    pub fn method(&self, label: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.label == label)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = pos.ceil() as usize;
    sorted[i] + (sorted[j] - sorted[i]) * (pos - i as f64)
}

/// Per-round width quantiles; a trial that ended early keeps its last width.
fn width_quantiles(traces: &[Vec<f64>]) -> Vec<WidthQuantiles> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let mut col: Vec<f64> = traces
                .iter()
                .filter_map(|tr| tr.get(k).or(tr.last()).copied())
                .collect();
            col.sort_by(f64::total_cmp);
            WidthQuantiles {
                t: k + 1,
                median: quantile(&col, 0.5),
                q10: quantile(&col, 0.1),
                q90: quantile(&col, 0.9),
            }
        })
        .collect()
}

/// Runs every method on `trials` independent populations. Methods within a
/// trial share the population and the session seed.
pub fn run_trials(scenario: &ScenarioConfig) -> Result<ExperimentResult> {
    scenario.validate()?;
    let methods = scenario.method_list();
    let per_trial: Vec<Vec<TrialOutcome>> = (0..scenario.trials)
        .into_par_iter()
        .map(|k| {
            let pop = Arc::new(trial_population(scenario, k)?);
            let seed = derive_seed(scenario.trial_seed(k), 2);
            methods
                .iter()
                .map(|m| {
                    run_session(
                        Arc::clone(&pop),
                        scenario.session_config(m, seed),
                        scenario.run_to_completion,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let results = methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let outcomes: Vec<&TrialOutcome> = per_trial.iter().map(|t| &t[j]).collect();
            let traces: Vec<Vec<f64>> = outcomes.iter().map(|o| o.widths.clone()).collect();
            MethodResult {
                label: m.label(),
                taus: outcomes.iter().map(|o| o.tau).collect(),
                miscovered: outcomes.iter().map(|o| o.miscovered).collect(),
                widths: width_quantiles(&traces),
            }
        })
        .collect();
    Ok(ExperimentResult {
        scenario: scenario.clone(),
        methods: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGainPoint {
    pub c: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub q10_ratio: f64,
    pub q90_ratio: f64,
    pub mean_tau_cv: f64,
    pub mean_tau_plain: f64,
}

/// Mean `tau_CV / tau_noCV` for each mixture weight `c`, using paired
/// trials: both arms see the same population and the same draw stream.
pub fn cv_gain_sweep(scenario: &ScenarioConfig, c_values: &[f64]) -> Result<Vec<CvGainPoint>> {
    c_values
        .iter()
        .map(|&c| {
            if !(c > 0.0 && c < 1.0) {
                return Err(AuditError::Config(format!("c must lie in (0, 1), got {c}")));
            }
            let mut sc = scenario.clone();
            sc.score_mode = ScoreMode::Mixture { c };
            sc.validate()?;
            let plain = MethodConfig::new(sc.strategy, CsFamily::Betting, false);
            let cv = MethodConfig::new(sc.strategy, CsFamily::Betting, true);
            let pairs: Vec<(usize, usize)> = (0..sc.trials)
                .into_par_iter()
                .map(|k| {
                    let pop = Arc::new(trial_population(&sc, k)?);
                    let seed = derive_seed(sc.trial_seed(k), 2);
                    let a = run_session(Arc::clone(&pop), sc.session_config(&plain, seed), false)?;
                    let b = run_session(pop, sc.session_config(&cv, seed), false)?;
                    Ok((a.tau, b.tau))
                })
                .collect::<Result<_>>()?;
            let mut ratios: Vec<f64> = pairs.iter().map(|&(a, b)| b as f64 / a as f64).collect();
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            ratios.sort_by(f64::total_cmp);
            Ok(CvGainPoint {
                c,
                mean_ratio: mean,
                std_ratio: var.sqrt(),
                q10_ratio: quantile(&ratios, 0.1),
                q90_ratio: quantile(&ratios, 0.9),
                mean_tau_cv: pairs.iter().map(|p| p.1 as f64).sum::<f64>() / n,
                mean_tau_plain: pairs.iter().map(|p| p.0 as f64).sum::<f64>() / n,
            })
        })
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Serialize)]
struct MethodSummary<'a> {
    label: &'a str,
    trials: usize,
    mean_tau: f64,
    median_tau: f64,
    miscoverage_count: usize,
    miscoverage_rate: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a ScenarioConfig,
    methods: Vec<MethodSummary<'a>>,
}

/// Writes `summary.json`, `trials.csv` and `widths.csv` into `dir`.
///
/// `trials.csv` gains a trailing `method` column when more than one method
/// was run.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let summary = Summary {
        scenario: &result.scenario,
        methods: result
            .methods
            .iter()
            .map(|m| {
                let mut taus: Vec<f64> = m.taus.iter().map(|&t| t as f64).collect();
                taus.sort_by(f64::total_cmp);
                MethodSummary {
                    label: &m.label,
                    trials: m.taus.len(),
                    mean_tau: m.mean_tau(),
                    median_tau: quantile(&taus, 0.5),
                    miscoverage_count: m.miscoverage_count(),
                    miscoverage_rate: m.miscoverage_rate(),
                }
            })
            .collect(),
    };
    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;

    let multi = result.methods.len() > 1;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    if multi {
        w.write_record(["trial", "tau", "miscovered", "method"])?;
    } else {
        w.write_record(["trial", "tau", "miscovered"])?;
    }
    for m in &result.methods {
        for (k, (&tau, &mis)) in m.taus.iter().zip(&m.miscovered).enumerate() {
            let mut rec = vec![k.to_string(), tau.to_string(), mis.to_string()];
            if multi {
                rec.push(m.label.clone());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("widths.csv"))?;
    w.write_record(["t", "method", "width_median", "width_q10", "width_q90"])?;
    for m in &result.methods {
        for q in &m.widths {
            w.write_record([
                q.t.to_string(),
                m.label.clone(),
                q.median.to_string(),
                q.q10.to_string(),
                q.q90.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cv_gain(points: &[CvGainPoint], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("cv_gain.json"))?;
    serde_json::to_writer_pretty(&mut f, points)?;
    writeln!(f)?;
    let mut w = csv::Writer::from_path(dir.join("cv_gain.csv"))?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> ScenarioConfig {
        ScenarioConfig::new(200, 0.2, FMode::PropPi, 0.05, 0.05)
    }

    #[test]
    fn class_sizes() {
        let sc = scenario();
        let pop = generate_population(&sc, &mut AuditRng::new(1)).unwrap();
        let large = pop.reported().iter().filter(|&&v| v >= 100.0).count();
        assert_eq!(large, 40);
        assert_eq!(pop.len(), 200);
    }

    #[test]
    fn f_ranges_follow_mode() {
        let mut sc = scenario();
        let pop = generate_population(&sc, &mut AuditRng::new(5)).unwrap();
        for (&v, &f) in pop.reported().iter().zip(pop.truth().unwrap()) {
            if v >= 100.0 {
                assert!((0.4..=0.5).contains(&f));
            } else {
                assert!((0.001..=0.01).contains(&f));
            }
        }
        sc.f_mode = FMode::InvPropPi;
        let inv = generate_population(&sc, &mut AuditRng::new(5)).unwrap();
        assert_eq!(inv.reported(), pop.reported());
        for (&v, &f) in inv.reported().iter().zip(inv.truth().unwrap()) {
            if v >= 100.0 {
                assert!((0.001..=0.01).contains(&f));
            } else {
                assert!((0.4..=0.5).contains(&f));
            }
        }
    }

    #[test]
    fn degenerate_scores_equal_truth() {
        let pop = generate_population(&scenario(), &mut AuditRng::new(2)).unwrap();
        let truth = pop.truth().unwrap();
        let rel = generate_scores(&pop, ScoreMode::Relative { accuracy: 0.0 }, &mut AuditRng::new(3))
            .unwrap()
            .unwrap();
        assert_eq!(rel, truth);
        let mix = generate_scores(&pop, ScoreMode::Mixture { c: 1.0 }, &mut AuditRng::new(3))
            .unwrap()
            .unwrap();
        assert_eq!(mix, truth);
    }

    #[test]
    fn relative_scores_within_band() {
        let pop = generate_population(&scenario(), &mut AuditRng::new(2)).unwrap();
        let s = generate_scores(&pop, ScoreMode::Relative { accuracy: 0.1 }, &mut AuditRng::new(9))
            .unwrap()
            .unwrap();
        for (&s, &f) in s.iter().zip(pop.truth().unwrap()) {
            let r = s / f;
            assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn epsilon_one_stops_at_first_round() {
        let mut sc = scenario();
        sc.n = 30;
        sc.epsilon = 1.0;
        sc.trials = 4;
        let r = run_trials(&sc).unwrap();
        assert!(r.methods[0].taus.iter().all(|&t| t == 1));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.1, 0.9, 9);
        assert_eq!(v.len(), 9);
        assert!((v[4] - 0.5).abs() < 1e-15);
        assert_eq!(v[8], 0.9);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0], 0.5), 1.5);
    }
}
