//! Monte Carlo engine for the risk-set process.
//!
//! Every replication draws from its own ChaCha stream derived from
//! `(seed, replication)`, so results do not depend on how rayon schedules the
//! work. Stopping times are `Option<u64>`: `None` means the process never
//! crossed `1/α` before the data ran out.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{BayesProcess, PlugInProcess, PriorSpec};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianProcess, LogrankSummary};
use crate::normal::normal_quantile;
use crate::process::{EProcess, ExactProcess, TwoSidedProcess};
use crate::riskset::{log_evalue_increment, EventBatch, EvidenceThreshold, HazardRatio, RiskSet};

/// Minimum number of stopping-time samples for a quantile estimate.
pub const MIN_QUANTILE_SAMPLES: usize = 100;
/// Minimum number of trajectories for the O'Brien–Fleming search.
pub const MIN_OBF_REPLICATIONS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TieModel {
    /// One event per event time.
    #[default]
    None,
    /// Discrete unit times; each participant at risk has an event with
    /// probability `h0` (control) or `h0·θ` (treatment) per unit.
    UnitTime { h0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    ExactSafe,
    GaussianSafe,
    PlugInSafe,
    BayesSafe,
    ClassicalFixed,
    ObfContinuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    Left,
    Right,
    TwoSided,
}

/// What is being tested and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub theta0: f64,
    /// Design alternative, or `θ_min` for two-sided tests.
    pub theta1: f64,
    pub alpha: f64,
    /// Target power `1 − β`.
    pub power: f64,
    pub side: Sidedness,
    pub test: TestKind,
    /// Prior for the Bayes numerator; defaults to a normal on `log θ`
    /// centred at `log θ1`.
    #[serde(default)]
    pub prior: Option<PriorSpec<f64>>,
}

impl DesignSpec {
    /// One-sided exact safe design for `θ0 = 1`.
    pub fn exact(theta1: f64, alpha: f64, power: f64) -> Self {
        let side = if theta1 < 1.0 {
            Sidedness::Left
        } else {
            Sidedness::Right
        };
        Self {
            theta0: 1.0,
            theta1,
            alpha,
            power,
            side,
            test: TestKind::ExactSafe,
            prior: None,
        }
    }

    pub fn with_test(mut self, test: TestKind) -> Self {
        self.test = test;
        self
    }

    pub fn beta(&self) -> f64 {
        1.0 - self.power
    }

    pub fn validate(&self) -> Result<()> {
        let t0 = HazardRatio::new(self.theta0)?;
        let t1 = HazardRatio::new(self.theta1)?;
        EvidenceThreshold::new(self.alpha)?;
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(Error::InvalidDesign(format!(
                "power {} must lie in (0, 1)",
                self.power
            )));
        }
        if self.alpha + self.beta() >= 1.0 {
            return Err(Error::InvalidDesign("alpha + beta must be below 1".into()));
        }
        if t1.value() == t0.value() {
            return Err(Error::InvalidDesign(
                "theta1 must differ from theta0".into(),
            ));
        }
        match (self.side, t1.value() < t0.value()) {
            (Sidedness::Left, false) => {
                return Err(Error::InvalidDesign(
                    "left-sided test needs theta1 < theta0".into(),
                ))
            }
            (Sidedness::Right, true) => {
                return Err(Error::InvalidDesign(
                    "right-sided test needs theta1 > theta0".into(),
                ))
            }
            _ => {}
        }
        if self.test == TestKind::GaussianSafe && self.theta0 != 1.0 {
            return Err(Error::InvalidDesign(
                "the gaussian safe test is defined for theta0 = 1 only".into(),
            ));
        }
        if self.side == Sidedness::TwoSided
            && matches!(
                self.test,
                TestKind::GaussianSafe | TestKind::PlugInSafe | TestKind::BayesSafe
            )
        {
            return Err(Error::InvalidDesign(
                "two-sided tests are available for the exact kind only".into(),
            ));
        }
        Ok(())
    }

    /// Builds the e-process for a trial starting from `(m1, m0)`.
    pub fn process(&self, m1: u64, m0: u64) -> Result<DesignProcess> {
        self.validate()?;
        let t0 = HazardRatio::new(self.theta0)?;
        let t1 = HazardRatio::new(self.theta1)?;
        Ok(match (self.test, self.side) {
            (TestKind::ExactSafe, Sidedness::TwoSided) => {
                DesignProcess::TwoSided(TwoSidedProcess::new(t1, t0))
            }
            (TestKind::ExactSafe, _) => DesignProcess::Exact(ExactProcess::new(t1, t0)),
            (TestKind::GaussianSafe, _) => {
                DesignProcess::Gaussian(GaussianProcess::new(t1, m1, m0))
            }
            (TestKind::PlugInSafe, _) => {
                DesignProcess::PlugIn(PlugInProcess::new(RiskSet::new(m1, m0), t0)?)
            }
            (TestKind::BayesSafe, _) => {
                let prior = self
                    .prior
                    .clone()
                    .unwrap_or_else(|| PriorSpec::default_for(t1));
                DesignProcess::Bayes(Box::new(BayesProcess::new(&prior, t0)))
            }
            (TestKind::ClassicalFixed | TestKind::ObfContinuous, _) => {
                return Err(Error::InvalidDesign(
                    "classical tests have no e-process".into(),
                ))
            }
        })
    }
}

/// The e-process selected by a [`DesignSpec`].
#[derive(Debug, Clone)]
pub enum DesignProcess {
    Exact(ExactProcess<f64>),
    TwoSided(TwoSidedProcess<f64>),
    Gaussian(GaussianProcess<f64>),
    PlugIn(PlugInProcess<f64>),
    Bayes(Box<BayesProcess<f64>>),
}

impl EProcess<f64> for DesignProcess {
    fn observe(&mut self, batch: &EventBatch) -> Result<f64> {
        match self {
            Self::Exact(p) => p.observe(batch),
            Self::TwoSided(p) => p.observe(batch),
            Self::Gaussian(p) => p.observe(batch),
            Self::PlugIn(p) => p.observe(batch),
            Self::Bayes(p) => p.observe(batch),
        }
    }

    fn log_e(&self) -> f64 {
        match self {
            Self::Exact(p) => p.log_e(),
            Self::TwoSided(p) => p.log_e(),
            Self::Gaussian(p) => p.log_e(),
            Self::PlugIn(p) => p.log_e(),
            Self::Bayes(p) => p.log_e(),
        }
    }

    fn n_events(&self) -> u64 {
        match self {
            Self::Exact(p) => p.n_events(),
            Self::TwoSided(p) => p.n_events(),
            Self::Gaussian(p) => p.n_events(),
            Self::PlugIn(p) => p.n_events(),
            Self::Bayes(p) => p.n_events(),
        }
    }
}

/// Data-generating setup for a batch of replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub m1: u64,
    pub m0: u64,
    pub theta_true: f64,
    pub design: DesignSpec,
    #[serde(default)]
    pub ties: TieModel,
    pub replications: u64,
    pub seed: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m0 == 0 {
            return Err(Error::InvalidDesign("m1 and m0 must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidDesign("need at least one replication".into()));
        }
        let theta = HazardRatio::new(self.theta_true)?.value();
        if let TieModel::UnitTime { h0 } = self.ties {
            if !(h0 > 0.0 && h0 * theta.max(1.0) < 1.0) {
                return Err(Error::InvalidDesign(format!(
                    "h0={h0} needs 0 < h0*max(theta, 1) < 1"
                )));
            }
        }
        self.design.validate()
    }

    /// Event stream for replication `rep`, lazily generated.
    pub fn stream(&self, rep: u64) -> Box<dyn Iterator<Item = EventBatch> + Send> {
        let rng = replication_rng(self.seed, rep);
        let risk = RiskSet::new(self.m1, self.m0);
        match self.ties {
            TieModel::None => Box::new(SingleEventSampler::new(risk, self.theta_true, rng)),
            TieModel::UnitTime { h0 } => {
                Box::new(TiedSampler::new(risk, self.theta_true, h0, rng).map(|tb| tb.batch))
            }
        }
    }
}

/// Independent generator for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One event at a time: the next event is in treatment with odds `θ·y1 : y0`.
#[derive(Debug, Clone)]
pub struct SingleEventSampler<R> {
    risk: RiskSet,
    theta: f64,
    rng: R,
}

impl<R: Rng> SingleEventSampler<R> {
    pub fn new(initial: RiskSet, theta: f64, rng: R) -> Self {
        Self {
            risk: initial,
            theta,
            rng,
        }
    }
}

impl<R: Rng> Iterator for SingleEventSampler<R> {
    type Item = EventBatch;

    fn next(&mut self) -> Option<EventBatch> {
        let RiskSet { y1, y0 } = self.risk;
        if y1 + y0 == 0 {
            return None;
        }
        let a = self.theta * y1 as f64;
        let treated = y0 == 0 || (y1 > 0 && self.rng.random::<f64>() * (a + y0 as f64) < a);
        let b = EventBatch::single(self.risk, treated).expect("sampled group is non-empty");
        self.risk = b.risk_after();
        Some(b)
    }
}

/// Complete single-event stream until both groups are exhausted.
pub fn sample_single_event_stream<R: Rng>(m1: u64, m0: u64, theta: f64, rng: R) -> Vec<EventBatch> {
    SingleEventSampler::new(RiskSet::new(m1, m0), theta, rng).collect()
}

/// Event batch tagged with the time it occurred at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedBatch {
    pub time: f64,
    pub batch: EventBatch,
}

/// Unit-time sampler with independent Bernoulli thinning per participant.
/// Unit times without events are skipped.
#[derive(Debug, Clone)]
pub struct TiedSampler<R> {
    risk: RiskSet,
    p1: f64,
    p0: f64,
    time: u64,
    rng: R,
}

impl<R: Rng> TiedSampler<R> {
    pub fn new(initial: RiskSet, theta: f64, h0: f64, rng: R) -> Self {
        Self {
            risk: initial,
            p1: h0 * theta,
            p0: h0,
            time: 0,
            rng,
        }
    }
}

impl<R: Rng> Iterator for TiedSampler<R> {
    type Item = TimedBatch;

    fn next(&mut self) -> Option<TimedBatch> {
        loop {
            let RiskSet { y1, y0 } = self.risk;
            if y1 + y0 == 0 {
                return None;
            }
            self.time += 1;
            let o1 = Binomial::new(y1, self.p1)
                .expect("valid probability")
                .sample(&mut self.rng);
            let o0 = Binomial::new(y0, self.p0)
                .expect("valid probability")
                .sample(&mut self.rng);
            if o1 + o0 > 0 {
                let batch =
                    EventBatch::new(self.risk, o1 + o0, o1).expect("counts within risk set");
                self.risk = batch.risk_after();
                return Some(TimedBatch {
                    time: self.time as f64,
                    batch,
                });
            }
        }
    }
}

pub fn sample_tied_stream<R: Rng>(
    m1: u64,
    m0: u64,
    theta: f64,
    h0: f64,
    rng: R,
) -> Result<Vec<TimedBatch>> {
    if !(h0 > 0.0 && h0 * theta.max(1.0) < 1.0) {
        return Err(Error::InvalidDesign(format!(
            "h0={h0} needs 0 < h0*max(theta, 1) < 1"
        )));
    }
    Ok(TiedSampler::new(RiskSet::new(m1, m0), theta, h0, rng).collect())
}

/// Cumulative event count at the first event time where `log e ≥ log_threshold`.
pub fn stopping_time<P: EProcess<f64>>(
    stream: impl IntoIterator<Item = EventBatch>,
    process: &mut P,
    log_threshold: f64,
) -> Result<Option<u64>> {
    for b in stream {
        if process.observe(&b)? >= log_threshold {
            return Ok(Some(process.n_events()));
        }
    }
    Ok(None)
}

/// Stopping times of every replication, in replication order.
pub fn simulate_stopping(scenario: &SimScenario) -> Result<Vec<Option<u64>>> {
    scenario.validate()?;
    let log_thr = -scenario.design.alpha.ln();
    (0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let mut p = scenario.design.process(scenario.m1, scenario.m0)?;
            stopping_time(scenario.stream(rep), &mut p, log_thr)
        })
        .collect()
}

/// Smallest `n` with `#{τ ≤ n} ≥ (1−β)·N`; unstopped samples count as `+∞`.
pub fn estimate_nmax(samples: &[Option<u64>], beta: f64) -> Result<u64> {
    if samples.len() < MIN_QUANTILE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_QUANTILE_SAMPLES,
            got: samples.len(),
        });
    }
    quantile_rank(samples, beta)
}

fn quantile_rank(samples: &[Option<u64>], beta: f64) -> Result<u64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidDesign(format!(
            "beta {beta} must lie in (0, 1)"
        )));
    }
    let need = (((1.0 - beta) * samples.len() as f64 - 1e-9).ceil() as usize).max(1);
    let mut stopped: Vec<u64> = samples.iter().flatten().copied().collect();
    if stopped.len() < need {
        return Err(Error::UnattainablePower(format!(
            "only {} of {} replications stopped, {} needed",
            stopped.len(),
            samples.len(),
            need
        )));
    }
    stopped.sort_unstable();
    Ok(stopped[need - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub replications: usize,
    pub n_max: u64,
    /// Mean of `τ' = min(τ, n_max)`.
    pub mean_tau_prime: f64,
    /// Mean of `τ` over replications with `τ < n_max`.
    pub conditional_mean: Option<f64>,
    /// Fraction with `τ ≤ n_max`.
    pub power: f64,
}

pub fn summarize_stopping(samples: &[Option<u64>], n_max: u64) -> Result<StoppingReport> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let n = samples.len() as f64;
    let capped = |t: &Option<u64>| t.map_or(n_max, |t| t.min(n_max));
    let mean_tau_prime = samples.iter().map(|t| capped(t) as f64).sum::<f64>() / n;
    let early: Vec<u64> = samples
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t < n_max)
        .collect();
    let conditional_mean = (!early.is_empty())
        .then(|| early.iter().map(|&t| t as f64).sum::<f64>() / early.len() as f64);
    let power = samples
        .iter()
        .filter(|t| matches!(t, Some(t) if *t <= n_max))
        .count() as f64
        / n;
    Ok(StoppingReport {
        replications: samples.len(),
        n_max,
        mean_tau_prime,
        conditional_mean,
        power,
    })
}

/// Schoenfeld's fixed-sample event count `⌈4(z_α + z_β)² / log²θ1⌉`.
pub fn schoenfeld_sample_size(theta1: f64, alpha: f64, beta: f64) -> Result<u64> {
    let t = HazardRatio::new(theta1)?;
    if t.value() == 1.0 {
        return Err(Error::InvalidDesign("theta1 must differ from 1".into()));
    }
    let za = normal_quantile(1.0 - alpha)?;
    let zb = normal_quantile(1.0 - beta)?;
    Ok((4.0 * (za + zb).powi(2) / t.ln().powi(2)).ceil() as u64)
}

/// Smallest `n_max` for which the continuous O'Brien–Fleming boundary is
/// crossed by some `n ≤ n_max` in at least a `power` fraction of simulated
/// logrank trajectories. `max_events` truncates the trajectories.
pub fn estimate_obf_nmax(
    scenario: &SimScenario,
    power: f64,
    max_events: Option<u64>,
) -> Result<u64> {
    scenario.validate()?;
    if scenario.replications < MIN_OBF_REPLICATIONS {
        return Err(Error::TooFewSamples {
            needed: MIN_OBF_REPLICATIONS as usize,
            got: scenario.replications as usize,
        });
    }
    if !(0.0..1.0).contains(&power) {
        return Err(Error::InvalidDesign(format!(
            "power {power} must lie in [0, 1)"
        )));
    }
    let horizon = max_events.unwrap_or(scenario.m1 + scenario.m0) as usize;
    let c = normal_quantile(1.0 - scenario.design.alpha / 2.0)?;
    let side = scenario.design.side;
    // With S_n = Z_n·sqrt(n), crossing at n for design n_max reads
    // S_n ≤ −c·sqrt(n_max) on the left side, so only the running extreme of S
    // matters.
    let counts = (0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let mut crossed = vec![0u32; horizon + 1];
            let mut summary = LogrankSummary::<f64>::new();
            let mut extreme = 0.0f64;
            let mut last_n = 0usize;
            let flag = |extreme: f64, k: usize| u32::from(extreme >= c * (k as f64).sqrt());
            for b in scenario.stream(rep) {
                summary.push(&b);
                let n = summary.n_events as usize;
                if n > horizon {
                    break;
                }
                for (k, c) in crossed.iter_mut().enumerate().take(n).skip(last_n + 1) {
                    *c = flag(extreme, k);
                }
                if let Ok(z) = summary.z() {
                    let s = z * (n as f64).sqrt();
                    let s = match side {
                        Sidedness::Left => -s,
                        Sidedness::Right => s,
                        Sidedness::TwoSided => s.abs(),
                    };
                    extreme = extreme.max(s);
                }
                crossed[n] = flag(extreme, n);
                last_n = n;
            }
            // After exhaustion the trajectory is frozen at its last value.
            for (k, c) in crossed.iter_mut().enumerate().skip(last_n + 1) {
                *c = flag(extreme, k);
            }
            crossed
        })
        .reduce(
            || vec![0u32; horizon + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let need = power * scenario.replications as f64 - 1e-9;
    (1..=horizon)
        .find(|&k| counts[k] as f64 >= need)
        .map(|k| k as u64)
        .ok_or_else(|| {
            Error::UnattainablePower(format!(
                "obrien-fleming power {power} not reached within {horizon} events"
            ))
        })
}

/// Stopping times of the continuous O'Brien–Fleming procedure with a fixed
/// `n_max`: the first event count `n ≤ n_max` at which the logrank `Z`
/// crosses the boundary. Batches that jump past `n_max` are not analysed.
pub fn simulate_obf_stopping(scenario: &SimScenario, n_max: u64) -> Result<Vec<Option<u64>>> {
    scenario.validate()?;
    if n_max == 0 {
        return Err(Error::InvalidDesign("n_max must be at least 1".into()));
    }
    let c = normal_quantile(1.0 - scenario.design.alpha / 2.0)? * (n_max as f64).sqrt();
    let side = scenario.design.side;
    Ok((0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let mut summary = LogrankSummary::<f64>::new();
            for b in scenario.stream(rep) {
                summary.push(&b);
                if summary.n_events > n_max {
                    return None;
                }
                let Ok(z) = summary.z() else { continue };
                let s = z * (summary.n_events as f64).sqrt();
                let s = match side {
                    Sidedness::Left => -s,
                    Sidedness::Right => s,
                    Sidedness::TwoSided => s.abs(),
                };
                if s >= c {
                    return Some(summary.n_events);
                }
            }
            None
        })
        .collect())
}

/// Wald's approximation `log(1/α) / E_θ[log(q_θ1/q_θ0)]` with event
/// probabilities frozen at the initial allocation.
pub fn wald_expected_stopping(
    theta: f64,
    theta1: f64,
    theta0: f64,
    m1: u64,
    m0: u64,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if m1 == 0 || m0 == 0 {
        return Err(Error::InvalidDesign("m1 and m0 must be at least 1".into()));
    }
    let prob = |x: f64| -> Result<f64> {
        let x = HazardRatio::new(x)?.value();
        Ok(m1 as f64 * x / (m0 as f64 + m1 as f64 * x))
    };
    let (p, p1, p0) = (prob(theta)?, prob(theta1)?, prob(theta0)?);
    let kl = p * (p1 / p0).ln() + (1.0 - p) * ((1.0 - p1) / (1.0 - p0)).ln();
    if kl.is_nan() || kl <= 0.0 {
        return Err(Error::Undefined(format!(
            "expected log-growth {kl} is not positive"
        )));
    }
    Ok(-alpha.ln() / kl)
}

/// Running log product of the unit-time factors `U(k)` for `k = 1..=K`,
/// where `K` is the last event time. Unit times without events contribute 1.
pub fn unit_time_martingale(
    stream: &[TimedBatch],
    theta1: f64,
    theta0: f64,
) -> Result<Vec<(u64, f64)>> {
    let t1 = HazardRatio::new(theta1)?;
    let t0 = HazardRatio::new(theta0)?;
    let mut out = Vec::new();
    let mut log_u = 0.0;
    let mut k = 0u64;
    for tb in stream {
        if tb.time.fract() != 0.0 || tb.time < 1.0 || (tb.time as u64) <= k {
            return Err(Error::Data(format!(
                "unit times must be increasing positive integers, got {}",
                tb.time
            )));
        }
        let t = tb.time as u64;
        while k + 1 < t {
            k += 1;
            out.push((k, log_u));
        }
        k = t;
        log_u += log_evalue_increment(t1, t0, &tb.batch);
        out.push((k, log_u));
    }
    Ok(out)
}

/// Percentile bootstrap interval for `n_max`. Rounds where the resample does
/// not reach the power target are counted in `unattainable`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: u64,
    pub upper: u64,
    pub level: f64,
    pub rounds: usize,
    pub unattainable: usize,
}

pub fn bootstrap_nmax(
    samples: &[Option<u64>],
    beta: f64,
    rounds: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    if samples.len() < MIN_QUANTILE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_QUANTILE_SAMPLES,
            got: samples.len(),
        });
    }
    if rounds == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidDesign(
            "bootstrap needs rounds >= 1 and level in (0, 1)".into(),
        ));
    }
    let mut rng = replication_rng(seed, u64::MAX);
    let mut stats = Vec::with_capacity(rounds);
    let mut unattainable = 0;
    let mut resample = vec![None; samples.len()];
    for _ in 0..rounds {
        for slot in resample.iter_mut() {
            *slot = samples[rng.random_range(0..samples.len())];
        }
        match quantile_rank(&resample, beta) {
            Ok(n) => stats.push(n),
            Err(_) => unattainable += 1,
        }
    }
    if stats.is_empty() {
        return Err(Error::UnattainablePower(
            "no bootstrap round reached the power target".into(),
        ));
    }
    stats.sort_unstable();
    let pick = |q: f64| stats[((q * stats.len() as f64).ceil() as usize).clamp(1, stats.len()) - 1];
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapInterval {
        lower: pick(tail),
        upper: pick(1.0 - tail),
        level,
        rounds,
        unattainable,
    })
}

/// Everything the design command reports for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub scenario: SimScenario,
    pub schoenfeld_n: u64,
    /// `None` when the power target was not reached; see `unattainable`.
    pub safe: Option<StoppingReport>,
    pub obf_n_max: Option<u64>,
    pub wald_expected: Option<f64>,
    pub bootstrap: Option<BootstrapInterval>,
    pub unattainable: Vec<String>,
}

/// Simulates the safe test, the O'Brien–Fleming comparator and the Wald
/// approximation for `scenario`.
pub fn design_report(scenario: &SimScenario, bootstrap_rounds: usize) -> Result<DesignReport> {
    scenario.validate()?;
    let d = &scenario.design;
    let schoenfeld_n = schoenfeld_sample_size(d.theta1, d.alpha, d.beta())?;
    let mut unattainable = Vec::new();
    let samples = simulate_stopping(scenario)?;
    let (safe, bootstrap) = match estimate_nmax(&samples, d.beta()) {
        Ok(n_max) => {
            let boot = if bootstrap_rounds > 0 {
                bootstrap_nmax(&samples, d.beta(), bootstrap_rounds, 0.95, scenario.seed).ok()
            } else {
                None
            };
            (Some(summarize_stopping(&samples, n_max)?), boot)
        }
        Err(Error::UnattainablePower(msg)) => {
            unattainable.push(format!("safe: {msg}"));
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let obf_n_max = if scenario.replications >= MIN_OBF_REPLICATIONS {
        let obf = SimScenario {
            design: d.clone().with_test(TestKind::ObfContinuous),
            ..scenario.clone()
        };
        match estimate_obf_nmax(&obf, d.power, None) {
            Ok(n) => Some(n),
            Err(Error::UnattainablePower(msg)) => {
                unattainable.push(format!("obrien-fleming: {msg}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let wald_expected = wald_expected_stopping(
        scenario.theta_true,
        d.theta1,
        d.theta0,
        scenario.m1,
        scenario.m0,
        d.alpha,
    )
    .ok();
    Ok(DesignReport {
        scenario: scenario.clone(),
        schoenfeld_n,
        safe,
        obf_n_max,
        wald_expected,
        bootstrap,
        unattainable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schoenfeld_golden() {
        let got: Vec<u64> = [0.5, 0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|&t| schoenfeld_sample_size(t, 0.05, 0.2).unwrap())
            .collect();
        assert_eq!(got, vec![52, 95, 195, 497, 2228]);
        assert!(schoenfeld_sample_size(1.0, 0.05, 0.2).is_err());
    }

    #[test]
    fn nmax_order_statistics() {
        let s: Vec<Option<u64>> = (1..=100).map(Some).collect();
        assert_eq!(estimate_nmax(&s, 0.2).unwrap(), 80);
        assert_eq!(estimate_nmax(&vec![Some(7); 100], 0.2).unwrap(), 7);
        assert!(matches!(
            estimate_nmax(&s[..50], 0.2),
            Err(Error::TooFewSamples { .. })
        ));
        let mut half = vec![None; 50];
        half.extend((1..=50).map(Some));
        assert!(matches!(
            estimate_nmax(&half, 0.2),
            Err(Error::UnattainablePower(_))
        ));
    }

    #[test]
    fn summary_arithmetic() {
        let r = summarize_stopping(&[Some(10), Some(20), None], 30).unwrap();
        assert!((r.mean_tau_prime - 20.0).abs() < 1e-12);
        assert_eq!(r.conditional_mean, Some(15.0));
        let r = summarize_stopping(&[Some(40), None], 30).unwrap();
        assert_eq!(r.mean_tau_prime, 30.0);
        assert_eq!(r.power, 0.0);
        assert_eq!(r.conditional_mean, None);
    }

    #[test]
    fn wald_balanced_golden() {
        let w = wald_expected_stopping(0.7, 0.7, 1.0, 100, 100, 0.05).unwrap();
        assert!((w - 191.4).abs() < 0.1, "{w}");
        assert_eq!(
            wald_expected_stopping(0.7, 0.7, 1.0, 100, 100, 1.0).unwrap(),
            0.0
        );
        assert!(wald_expected_stopping(0.7, 1.3, 1.0, 100, 100, 0.05).is_err());
    }

    #[test]
    fn sampler_exhausts_both_groups() {
        let s = sample_single_event_stream(3, 4, 0.5, replication_rng(1, 0));
        assert_eq!(s.len(), 7);
        assert_eq!(s.last().unwrap().risk_after(), RiskSet::new(0, 0));
        assert_eq!(s.iter().map(|b| b.o1()).sum::<u64>(), 3);
    }

    #[test]
    fn tied_sampler_conserves_counts() {
        let s = sample_tied_stream(30, 20, 0.8, 0.05, replication_rng(2, 3)).unwrap();
        assert_eq!(s.iter().map(|t| t.batch.o()).sum::<u64>(), 50);
        assert!(s.windows(2).all(|w| w[0].time < w[1].time));
        assert!(sample_tied_stream(30, 20, 4.0, 0.3, replication_rng(2, 3)).is_err());
    }

    #[test]
    fn threshold_one_stops_at_first_favourable_event() {
        let stream = [
            EventBatch::single(RiskSet::new(5, 5), false).unwrap(),
            EventBatch::single(RiskSet::new(5, 4), true).unwrap(),
        ];
        let mut p = ExactProcess::new(
            HazardRatio::new(0.5).unwrap(),
            HazardRatio::new(1.0).unwrap(),
        );
        assert_eq!(stopping_time(stream, &mut p, 0.0).unwrap(), Some(1));
    }

    #[test]
    fn unit_time_fills_gaps() {
        let b = EventBatch::single(RiskSet::new(2, 2), true).unwrap();
        let u = unit_time_martingale(
            &[TimedBatch {
                time: 3.0,
                batch: b,
            }],
            0.5,
            1.0,
        )
        .unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(u[0], (1, 0.0));
        assert_eq!(u[1], (2, 0.0));
        assert!((u[2].1 - (2.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn replications_are_deterministic() {
        let sc = SimScenario {
            m1: 200,
            m0: 200,
            theta_true: 0.6,
            design: DesignSpec::exact(0.6, 0.05, 0.8),
            ties: TieModel::None,
            replications: 40,
            seed: 99,
        };
        let a = simulate_stopping(&sc).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| simulate_stopping(&sc).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn design_validation() {
        assert!(DesignSpec::exact(1.0, 0.05, 0.8).validate().is_err());
        assert!(DesignSpec::exact(0.7, 0.5, 0.4).validate().is_err());
        let mut d = DesignSpec::exact(0.7, 0.05, 0.8);
        d.side = Sidedness::Right;
        assert!(d.validate().is_err());
        d.side = Sidedness::TwoSided;
        assert!(d.validate().is_ok());
        assert!(d.with_test(TestKind::PlugInSafe).validate().is_err());
    }
}
