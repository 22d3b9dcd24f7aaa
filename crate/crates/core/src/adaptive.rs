//! Learned alternatives and anytime-valid confidence sequences.
//!
//! Instead of a fixed `θ1`, the numerator of each per-event-time ratio can be
//! any conditional distribution that depends on strictly earlier data. Two
//! such choices live here: the prequential plug-in (a smoothed maximum
//! likelihood estimate with one virtual event per group) and the Bayes
//! predictive under a prior on `log θ`, integrated on a fixed grid.
//!
//! Inverting the resulting processes over `θ0` gives confidence sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::EProcess;
use crate::riskset::{
    log_q_at, moments_at, EventBatch, EvidenceThreshold, HazardRatio, MartingaleState, RiskSet,
};
use crate::scalar::{log_sum_exp, Scalar};

const NEWTON_MAX_ITER: usize = 200;

/// Sufficient statistics and smoothed MLE for the prequential plug-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInState<T> {
    initial: RiskSet,
    history: Vec<EventBatch>,
    log_theta_hat: T,
}

impl<T: Scalar> PlugInState<T> {
    /// State before any event, anchored at the initial risk set `(m1, m0)`
    /// which places the two virtual events.
    pub fn new(initial: RiskSet) -> Result<Self> {
        if initial.y1 == 0 || initial.y0 == 0 {
            return Err(Error::Data(
                "plug-in needs both groups non-empty at the start".into(),
            ));
        }
        let mut s = Self {
            initial,
            history: Vec::new(),
            log_theta_hat: T::zero(),
        };
        s.log_theta_hat = s.maximize(T::zero());
        Ok(s)
    }

    pub fn theta_hat(&self) -> T {
        self.log_theta_hat.exp()
    }

    pub fn log_theta_hat(&self) -> T {
        self.log_theta_hat
    }

    pub fn history(&self) -> &[EventBatch] {
        &self.history
    }

    pub fn initial(&self) -> RiskSet {
        self.initial
    }

    /// Appends `batch` and re-maximizes, warm-started at the previous estimate.
    pub fn update(&self, batch: &EventBatch) -> Self {
        let mut next = self.clone();
        next.push(batch);
        next
    }

    pub(crate) fn push(&mut self, batch: &EventBatch) {
        self.history.push(*batch);
        self.log_theta_hat = self.maximize(self.log_theta_hat);
    }

    fn virtual_batches(&self) -> [EventBatch; 2] {
        let RiskSet { y1, y0 } = self.initial;
        [
            EventBatch::new(RiskSet::new(y1 + 1, y0), 1, 1).expect("valid virtual event"),
            EventBatch::new(RiskSet::new(y1, y0 + 1), 1, 0).expect("valid virtual event"),
        ]
    }

    /// Score and information of the smoothed log-likelihood at `beta`.
    pub fn smoothed_score(&self, beta: T) -> (T, T) {
        let mut score = T::zero();
        let mut info = T::zero();
        for b in self.history.iter().chain(self.virtual_batches().iter()) {
            let (m, v) = moments_at(beta, b);
            score = score + T::count(b.o1()) - m;
            info = info + v;
        }
        (score, info)
    }

    /// Smoothed log-likelihood at `beta`.
    pub fn smoothed_log_likelihood(&self, beta: T) -> T {
        self.history
            .iter()
            .chain(self.virtual_batches().iter())
            .fold(T::zero(), |acc, b| acc + log_q_at(beta, b))
    }

    // The smoothed log-likelihood is strictly concave in beta, so the root of
    // the score is the maximizer. Newton steps are capped in length and kept
    // inside the bracket known so far, falling back to bisection.
    fn maximize(&self, start: T) -> T {
        let tol = T::lit(1e-11);
        let max_step = T::lit(2.0);
        let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
        let mut beta = start;
        for _ in 0..NEWTON_MAX_ITER {
            let (s, i) = self.smoothed_score(beta);
            if s == T::zero() {
                return beta;
            }
            if s > T::zero() {
                lo = beta;
            } else {
                hi = beta;
            }
            let newton = if i > T::zero() {
                s / i
            } else {
                s.signum() * max_step
            };
            let step = newton.max(-max_step).min(max_step);
            if step.abs() <= tol * (T::one() + beta.abs()) {
                return beta + step;
            }
            let next = beta + step;
            beta = if next > lo && next < hi {
                next
            } else {
                T::half() * (lo + hi)
            };
        }
        beta
    }
}

/// `log[q_θ̂(o1 | batch) / q_θ0(o1 | batch)]` with `θ̂` fitted on earlier data.
pub fn plugin_log_increment<T: Scalar>(
    state_before: &PlugInState<T>,
    batch: &EventBatch,
    theta0: HazardRatio<T>,
) -> Result<T> {
    if state_before.history.last() == Some(batch) {
        return Err(Error::PredictiveLeak);
    }
    Ok(log_q_at(state_before.log_theta_hat, batch) - log_q_at(theta0.ln(), batch))
}

pub fn plugin_increment<T: Scalar>(
    state_before: &PlugInState<T>,
    batch: &EventBatch,
    theta0: HazardRatio<T>,
) -> Result<T> {
    plugin_log_increment(state_before, batch, theta0).map(T::exp)
}

/// Test martingale with the prequential plug-in numerator.
#[derive(Debug, Clone)]
pub struct PlugInProcess<T> {
    theta0: HazardRatio<T>,
    learner: PlugInState<T>,
    state: MartingaleState<T>,
}

impl<T: Scalar> PlugInProcess<T> {
    pub fn new(initial: RiskSet, theta0: HazardRatio<T>) -> Result<Self> {
        Ok(Self {
            theta0,
            learner: PlugInState::new(initial)?,
            state: MartingaleState::new(),
        })
    }

    pub fn learner(&self) -> &PlugInState<T> {
        &self.learner
    }
}

impl<T: Scalar> EProcess<T> for PlugInProcess<T> {
    fn observe(&mut self, batch: &EventBatch) -> Result<T> {
        let inc = log_q_at(self.learner.log_theta_hat, batch) - log_q_at(self.theta0.ln(), batch);
        self.state = self.state.with_log_increment(inc, batch);
        self.learner.push(batch);
        Ok(self.state.log_e())
    }

    fn log_e(&self) -> T {
        self.state.log_e()
    }

    fn n_events(&self) -> u64 {
        self.state.n_events()
    }
}

/// Which family a [`PriorSpec`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorFamily<T> {
    /// Normal on `log θ`.
    LogNormal { mean_log: T, sd_log: T },
    /// User-supplied nodes and weights.
    DiscreteGrid,
}

/// Prior on `θ` as quadrature nodes (in `log θ`) and normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec<T> {
    family: PriorFamily<T>,
    log_nodes: Vec<T>,
    weights: Vec<T>,
}

/// Number of standard deviations covered on each side by the log-normal grid.
const LOG_NORMAL_SPAN_SD: f64 = 8.0;

impl<T: Scalar> PriorSpec<T> {
    /// Normal prior on `log θ`, discretized on `nodes` equally spaced points
    /// over `mean ± 8 sd`.
    pub fn log_normal(mean_log: T, sd_log: T, nodes: usize) -> Result<Self> {
        if !mean_log.is_finite() || !(sd_log.is_finite() && sd_log > T::zero()) {
            return Err(Error::InvalidPrior(
                "log-normal prior needs finite mean and sd > 0".into(),
            ));
        }
        if nodes < 2 {
            return Err(Error::InvalidPrior(
                "log-normal prior needs at least two nodes".into(),
            ));
        }
        let span = T::lit(LOG_NORMAL_SPAN_SD) * sd_log;
        let step = (span + span) / T::count(nodes as u64 - 1);
        let log_nodes: Vec<T> = (0..nodes)
            .map(|k| mean_log - span + step * T::count(k as u64))
            .collect();
        let dens: Vec<T> = log_nodes
            .iter()
            .map(|&b| {
                let u = (b - mean_log) / sd_log;
                (-T::half() * u * u).exp()
            })
            .collect();
        let total = dens.iter().fold(T::zero(), |a, &d| a + d);
        let weights = dens.into_iter().map(|d| d / total).collect();
        Ok(Self {
            family: PriorFamily::LogNormal { mean_log, sd_log },
            log_nodes,
            weights,
        })
    }

    /// Default prior: normal on `log θ` centred at `log θ_min`, sd 0.5.
    pub fn default_for(theta_min: HazardRatio<T>) -> Self {
        Self::log_normal(theta_min.ln(), T::half(), 201).expect("valid default prior")
    }

    /// Discrete prior on positive `thetas` with nonnegative weights summing to 1.
    pub fn grid(thetas: &[T], weights: &[T]) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != weights.len() {
            return Err(Error::InvalidPrior(
                "need one weight per node and at least one node".into(),
            ));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w >= T::zero())) {
            return Err(Error::InvalidPrior("weights must be nonnegative".into()));
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        if (total - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::InvalidPrior(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let log_nodes = thetas
            .iter()
            .map(|&t| HazardRatio::new(t).map(|h| h.ln()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family: PriorFamily::DiscreteGrid,
            log_nodes,
            weights: weights.to_vec(),
        })
    }

    pub fn point_mass(theta: HazardRatio<T>) -> Self {
        Self {
            family: PriorFamily::DiscreteGrid,
            log_nodes: vec![theta.ln()],
            weights: vec![T::one()],
        }
    }

    pub fn family(&self) -> &PriorFamily<T> {
        &self.family
    }

    pub fn log_nodes(&self) -> &[T] {
        &self.log_nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

/// Posterior over the prior's grid, kept as normalized log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesPosterior<T> {
    log_nodes: Vec<T>,
    log_weights: Vec<T>,
}

impl<T: Scalar> BayesPosterior<T> {
    pub fn new(prior: &PriorSpec<T>) -> Self {
        Self {
            log_nodes: prior.log_nodes.clone(),
            log_weights: prior.weights.iter().map(|w| w.ln()).collect(),
        }
    }

    /// Posterior after conditioning the prior on `history`.
    pub fn from_history(prior: &PriorSpec<T>, history: &[EventBatch]) -> Result<Self> {
        let mut p = Self::new(prior);
        for b in history {
            p.update(b)?;
        }
        Ok(p)
    }

    /// `log ∫ q_θ(o1 | batch) dW(θ)`.
    pub fn log_predictive(&self, batch: &EventBatch) -> T {
        let terms: Vec<T> = self
            .log_nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&b, &w)| w + log_q_at(b, batch))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn update(&mut self, batch: &EventBatch) -> Result<()> {
        for (w, &b) in self.log_weights.iter_mut().zip(&self.log_nodes) {
            *w = *w + log_q_at(b, batch);
        }
        let norm = log_sum_exp(&self.log_weights);
        if !norm.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        for w in &mut self.log_weights {
            *w = *w - norm;
        }
        Ok(())
    }

    /// Posterior mean of `log θ`.
    pub fn mean_log_theta(&self) -> T {
        self.log_nodes
            .iter()
            .zip(&self.log_weights)
            .fold(T::zero(), |acc, (&b, &w)| acc + b * w.exp())
    }
}

/// `log[q_W(o1 | batch) / q_θ0(o1 | batch)]` with `W` the posterior after `history`.
pub fn bayes_predictive_log_increment<T: Scalar>(
    prior: &PriorSpec<T>,
    history: &[EventBatch],
    batch: &EventBatch,
    theta0: HazardRatio<T>,
) -> Result<T> {
    let post = BayesPosterior::from_history(prior, history)?;
    Ok(post.log_predictive(batch) - log_q_at(theta0.ln(), batch))
}

pub fn bayes_predictive_increment<T: Scalar>(
    prior: &PriorSpec<T>,
    history: &[EventBatch],
    batch: &EventBatch,
    theta0: HazardRatio<T>,
) -> Result<T> {
    bayes_predictive_log_increment(prior, history, batch, theta0).map(T::exp)
}

/// Test martingale with the Bayes predictive numerator.
#[derive(Debug, Clone)]
pub struct BayesProcess<T> {
    theta0: HazardRatio<T>,
    posterior: BayesPosterior<T>,
    state: MartingaleState<T>,
}

impl<T: Scalar> BayesProcess<T> {
    pub fn new(prior: &PriorSpec<T>, theta0: HazardRatio<T>) -> Self {
        Self {
            theta0,
            posterior: BayesPosterior::new(prior),
            state: MartingaleState::new(),
        }
    }

    pub fn posterior(&self) -> &BayesPosterior<T> {
        &self.posterior
    }
}

impl<T: Scalar> EProcess<T> for BayesProcess<T> {
    fn observe(&mut self, batch: &EventBatch) -> Result<T> {
        let inc = self.posterior.log_predictive(batch) - log_q_at(self.theta0.ln(), batch);
        self.state = self.state.with_log_increment(inc, batch);
        self.posterior.update(batch)?;
        Ok(self.state.log_e())
    }

    fn log_e(&self) -> T {
        self.state.log_e()
    }

    fn n_events(&self) -> u64 {
        self.state.n_events()
    }
}

/// Ordered, log-spaced grid of candidate null hazard ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid<T> {
    thetas: Vec<T>,
}

impl<T: Scalar> ThetaGrid<T> {
    pub fn log_spaced(lo: T, hi: T, points: usize) -> Result<Self> {
        let (lo, hi) = (HazardRatio::new(lo)?, HazardRatio::new(hi)?);
        if points < 2 || hi.value() <= lo.value() {
            return Err(Error::Data(
                "theta grid needs lo < hi and at least two points".into(),
            ));
        }
        let step = (hi.ln() - lo.ln()) / T::count(points as u64 - 1);
        let thetas = (0..points)
            .map(|k| (lo.ln() + step * T::count(k as u64)).exp())
            .collect();
        Ok(Self { thetas })
    }

    pub fn thetas(&self) -> &[T] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

impl<T: Scalar> Default for ThetaGrid<T> {
    /// `[1e-3, 1e3]` with 400 points.
    fn default() -> Self {
        Self::log_spaced(T::lit(1e-3), T::lit(1e3), 400).expect("valid default grid")
    }
}

/// Numerator used when inverting over `θ0`.
#[derive(Debug, Clone, PartialEq)]
pub enum NumeratorStrategy<T> {
    PlugIn,
    Bayes(PriorSpec<T>),
}

/// One interval of a confidence sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsInterval<T> {
    pub n_events: u64,
    pub n_event_times: u64,
    /// `None` when every grid point is rejected.
    pub bounds: Option<(T, T)>,
    /// False when the lower bound sits on the first grid point, i.e. the grid
    /// does not reach far enough down to locate it.
    pub lower_bracketed: bool,
    pub upper_bracketed: bool,
}

impl<T: Scalar> CsInterval<T> {
    pub fn contains(&self, theta: T) -> bool {
        matches!(self.bounds, Some((lo, hi)) if lo <= theta && theta <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSequence<T> {
    /// Entry 0 is the interval before any event.
    pub intervals: Vec<CsInterval<T>>,
    pub running_intersection: bool,
}

impl<T: Scalar> ConfidenceSequence<T> {
    /// Whether `theta` is outside some interval of the sequence.
    pub fn ever_excludes(&self, theta: T) -> bool {
        self.intervals.iter().any(|iv| !iv.contains(theta))
    }
}

enum Numerator<T> {
    PlugIn(PlugInState<T>),
    Bayes(BayesPosterior<T>),
}

impl<T: Scalar> Numerator<T> {
    fn log_prob(&self, batch: &EventBatch) -> T {
        match self {
            Numerator::PlugIn(s) => log_q_at(s.log_theta_hat, batch),
            Numerator::Bayes(p) => p.log_predictive(batch),
        }
    }

    fn update(&mut self, batch: &EventBatch) -> Result<()> {
        match self {
            Numerator::PlugIn(s) => {
                s.push(batch);
                Ok(())
            }
            Numerator::Bayes(p) => p.update(batch),
        }
    }
}

/// Inverts `M_{r,θ0}` over `grid` after every event time.
///
/// Grid points with `M ≥ 1/α` are rejected. The lower bound is the last
/// rejected grid point before the first accepted one, the upper bound
/// symmetric, so values lying between an accepted and a rejected grid point
/// stay inside the interval. With
/// `running_intersection` the reported intervals are intersected over time.
pub fn confidence_sequence<T: Scalar>(
    batches: &[EventBatch],
    alpha: T,
    strategy: &NumeratorStrategy<T>,
    grid: &ThetaGrid<T>,
    running_intersection: bool,
) -> Result<ConfidenceSequence<T>> {
    let threshold = EvidenceThreshold::new(alpha)?;
    if grid.len() < 2 {
        return Err(Error::Data("theta grid needs at least two points".into()));
    }
    let initial = batches
        .first()
        .map(|b| b.risk())
        .unwrap_or(RiskSet::new(1, 1));
    let mut numerator = match strategy {
        NumeratorStrategy::PlugIn => Numerator::PlugIn(PlugInState::new(initial)?),
        NumeratorStrategy::Bayes(prior) => Numerator::Bayes(BayesPosterior::new(prior)),
    };
    let log_grid: Vec<T> = grid.thetas().iter().map(|t| t.ln()).collect();
    let mut log_num = T::zero();
    let mut log_den = vec![T::zero(); grid.len()];
    let last = grid.len() - 1;
    let full = CsInterval {
        n_events: 0,
        n_event_times: 0,
        bounds: Some((grid.thetas()[0], grid.thetas()[last])),
        lower_bracketed: false,
        upper_bracketed: false,
    };
    let mut intervals = vec![full];
    let mut n_events = 0;
    for (i, b) in batches.iter().enumerate() {
        log_num = log_num + numerator.log_prob(b);
        numerator.update(b)?;
        for (d, &lb) in log_den.iter_mut().zip(&log_grid) {
            *d = *d + log_q_at(lb, b);
        }
        n_events += b.o();
        let accepted = |j: usize| !threshold.is_crossed(log_num - log_den[j]);
        let lo = (0..=last).find(|&j| accepted(j));
        let hi = (0..=last).rev().find(|&j| accepted(j));
        let mut iv = match (lo, hi) {
            (Some(lo), Some(hi)) => CsInterval {
                n_events,
                n_event_times: i as u64 + 1,
                // Rounded outward to the neighbouring rejected grid points so
                // that values between grid points are not dropped.
                bounds: Some((
                    grid.thetas()[lo.saturating_sub(1)],
                    grid.thetas()[(hi + 1).min(last)],
                )),
                lower_bracketed: lo > 0,
                upper_bracketed: hi < last,
            },
            _ => CsInterval {
                n_events,
                n_event_times: i as u64 + 1,
                bounds: None,
                lower_bracketed: true,
                upper_bracketed: true,
            },
        };
        if running_intersection {
            let prev = *intervals.last().expect("initial interval present");
            iv = intersect(prev, iv);
        }
        intervals.push(iv);
    }
    Ok(ConfidenceSequence {
        intervals,
        running_intersection,
    })
}

fn intersect<T: Scalar>(prev: CsInterval<T>, cur: CsInterval<T>) -> CsInterval<T> {
    let (Some((plo, phi)), Some((clo, chi))) = (prev.bounds, cur.bounds) else {
        return CsInterval {
            bounds: None,
            lower_bracketed: true,
            upper_bracketed: true,
            ..cur
        };
    };
    let (lo, lower_bracketed) = if plo > clo {
        (plo, prev.lower_bracketed)
    } else {
        (clo, cur.lower_bracketed)
    };
    let (hi, upper_bracketed) = if phi < chi {
        (phi, prev.upper_bracketed)
    } else {
        (chi, cur.upper_bracketed)
    };
    if lo > hi {
        return CsInterval {
            bounds: None,
            lower_bracketed: true,
            upper_bracketed: true,
            ..cur
        };
    }
    CsInterval {
        bounds: Some((lo, hi)),
        lower_bracketed,
        upper_bracketed,
        ..cur
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskset::evalue_increment;

    fn hr(x: f64) -> HazardRatio<f64> {
        HazardRatio::new(x).unwrap()
    }

    #[test]
    fn plugin_starts_at_one_for_balanced_allocation() {
        let s = PlugInState::<f64>::new(RiskSet::new(100, 100)).unwrap();
        assert!((s.theta_hat() - 1.0).abs() < 1e-12);
        let b = EventBatch::single(RiskSet::new(100, 100), true).unwrap();
        assert!((plugin_increment(&s, &b, hr(1.0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plugin_one_sided_data_stays_interior() {
        let mut s = PlugInState::<f64>::new(RiskSet::new(20, 20)).unwrap();
        for k in 0..15 {
            s = s.update(&EventBatch::single(RiskSet::new(20 - k, 20), true).unwrap());
        }
        assert!(s.theta_hat().is_finite() && s.theta_hat() > 1.0);
        let (score, _) = s.smoothed_score(s.log_theta_hat());
        assert!(score.abs() < 1e-6);
    }

    #[test]
    fn plugin_leak_is_detected() {
        let s0 = PlugInState::<f64>::new(RiskSet::new(10, 10)).unwrap();
        let b = EventBatch::single(RiskSet::new(10, 10), false).unwrap();
        let s1 = s0.update(&b);
        assert_eq!(
            plugin_increment(&s1, &b, hr(1.0)),
            Err(Error::PredictiveLeak)
        );
    }

    #[test]
    fn plugin_increment_has_unit_conditional_expectation() {
        let mut s = PlugInState::<f64>::new(RiskSet::new(30, 25)).unwrap();
        s = s.update(&EventBatch::single(RiskSet::new(30, 25), false).unwrap());
        s = s.update(&EventBatch::new(RiskSet::new(30, 24), 2, 0).unwrap());
        let geometry = EventBatch::new(RiskSet::new(30, 22), 3, 1).unwrap();
        let t0 = hr(1.3);
        let e: f64 = geometry
            .outcomes()
            .map(|b| {
                crate::riskset::hypergeom_event_prob(t0, &b) * plugin_increment(&s, &b, t0).unwrap()
            })
            .sum();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_prior_reduces_to_fixed_alternative() {
        let prior = PriorSpec::point_mass(hr(0.6));
        let history = [EventBatch::single(RiskSet::new(10, 10), true).unwrap()];
        let b = EventBatch::new(RiskSet::new(9, 10), 2, 1).unwrap();
        let inc = bayes_predictive_increment(&prior, &history, &b, hr(1.0)).unwrap();
        assert!((inc - evalue_increment(hr(0.6), hr(1.0), &b)).abs() < 1e-14);
    }

    #[test]
    fn two_point_prior_numerator() {
        let prior = PriorSpec::<f64>::grid(&[0.5, 2.0], &[0.5, 0.5]).unwrap();
        let b = EventBatch::single(RiskSet::new(50, 50), true).unwrap();
        let post = BayesPosterior::new(&prior);
        assert!((post.log_predictive(&b).exp() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::grid(&[0.5, 2.0], &[0.5, 0.4]).is_err());
        assert!(PriorSpec::grid(&[0.5, 2.0], &[1.5, -0.5]).is_err());
        assert!(PriorSpec::grid(&[0.0], &[1.0]).is_err());
        assert!(PriorSpec::<f64>::log_normal(0.0, 0.0, 10).is_err());
        let p = PriorSpec::<f64>::log_normal(0.3, 0.5, 101).unwrap();
        let total: f64 = p.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_events_gives_full_grid() {
        let grid = ThetaGrid::<f64>::default();
        let cs = confidence_sequence(&[], 0.05, &NumeratorStrategy::PlugIn, &grid, false).unwrap();
        assert_eq!(cs.intervals.len(), 1);
        assert_eq!(
            cs.intervals[0].bounds,
            Some((grid.thetas()[0], grid.thetas()[399]))
        );
        assert!(!cs.intervals[0].lower_bracketed);
    }

    #[test]
    fn bounds_round_outward() {
        let grid = ThetaGrid::<f64>::log_spaced(0.01, 100.0, 41).unwrap();
        let batches = crate::sim::sample_single_event_stream(
            300,
            300,
            0.5,
            crate::sim::replication_rng(3, 0),
        );
        let cs =
            confidence_sequence(&batches, 0.05, &NumeratorStrategy::PlugIn, &grid, false).unwrap();
        let last = cs.intervals.last().unwrap();
        let (lo, hi) = last.bounds.unwrap();
        assert!(last.lower_bracketed && last.upper_bracketed);
        assert!(lo < 0.5 && 0.5 < hi && hi < 1.0, "{lo} {hi}");
        // Both endpoints are themselves rejected.
        let mut p = PlugInProcess::new(RiskSet::new(300, 300), hr(lo)).unwrap();
        let log_e = batches
            .iter()
            .map(|b| p.observe(b).unwrap())
            .last()
            .unwrap();
        assert!(log_e >= 20f64.ln());
        let nested =
            confidence_sequence(&batches, 0.05, &NumeratorStrategy::PlugIn, &grid, true).unwrap();
        let widths: Vec<f64> = nested
            .intervals
            .iter()
            .filter_map(|iv| iv.bounds)
            .map(|(a, b)| b / a)
            .collect();
        assert!(widths.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = ThetaGrid::<f64>::log_spaced(0.01, 100.0, 5).unwrap();
        let expect = [0.01, 0.1, 1.0, 10.0, 100.0];
        for (a, b) in g.thetas().iter().zip(expect) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        assert!(ThetaGrid::<f64>::log_spaced(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn intersection_nests() {
        let a = CsInterval {
            n_events: 1,
            n_event_times: 1,
            bounds: Some((0.2, 3.0)),
            lower_bracketed: true,
            upper_bracketed: true,
        };
        let b = CsInterval {
            n_events: 2,
            n_event_times: 2,
            bounds: Some((0.1, 2.0)),
            lower_bracketed: true,
            upper_bracketed: true,
        };
        assert_eq!(intersect(a, b).bounds, Some((0.2, 2.0)));
        let c = CsInterval {
            bounds: Some((5.0, 6.0)),
            ..b
        };
        assert_eq!(intersect(a, c).bounds, None);
    }
}
