//! Exact conditional event probabilities and the event-time test martingale.
//!
//! Given that an event time has been reached with risk set `(y1, y0)` and
//! `o` events in total, the number of treatment-group events `o1` follows a
//! Fisher noncentral hypergeometric law with odds `θ`. For `o = 1` this is
//! the Bernoulli law `y1·θ / (y0 + y1·θ)`. The likelihood ratio of two such
//! laws is a conditional E-variable under the denominator, and its running
//! product is a test martingale.
//!
//! Everything here is evaluated in natural-log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, Scalar};

/// Smallest and largest hazard ratio accepted from configuration.
pub const THETA_MIN_ACCEPTED: f64 = 1e-8;
pub const THETA_MAX_ACCEPTED: f64 = 1e8;

/// Participants at risk just before an event time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RiskSet {
    /// Treatment group.
    pub y1: u64,
    /// Control group.
    pub y0: u64,
}

impl RiskSet {
    pub const fn new(y1: u64, y0: u64) -> Self {
        Self { y1, y0 }
    }

    pub const fn total(&self) -> u64 {
        self.y1 + self.y0
    }

    /// Fraction of the risk set in the treatment group.
    pub fn treatment_share<T: Scalar>(&self) -> T {
        T::count(self.y1) / T::count(self.total())
    }
}

/// Observation at one event time: `o` events, `o1` of them in treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventBatch {
    risk: RiskSet,
    o: u64,
    o1: u64,
}

impl EventBatch {
    pub fn new(risk: RiskSet, o: u64, o1: u64) -> Result<Self> {
        if o == 0 {
            return Err(Error::InvalidBatch(
                "an event batch needs at least one event".into(),
            ));
        }
        if o1 > o {
            return Err(Error::InvalidBatch(format!("o1={o1} exceeds o={o}")));
        }
        let o0 = o - o1;
        if o1 > risk.y1 {
            if risk.y1 == 0 {
                return Err(Error::EmptyGroupEvent {
                    group: 1,
                    y1: risk.y1,
                    y0: risk.y0,
                });
            }
            return Err(Error::InvalidBatch(format!(
                "{o1} treatment events but only {} at risk",
                risk.y1
            )));
        }
        if o0 > risk.y0 {
            if risk.y0 == 0 {
                return Err(Error::EmptyGroupEvent {
                    group: 0,
                    y1: risk.y1,
                    y0: risk.y0,
                });
            }
            return Err(Error::InvalidBatch(format!(
                "{o0} control events but only {} at risk",
                risk.y0
            )));
        }
        Ok(Self { risk, o, o1 })
    }

    /// A single event, in the treatment group when `treatment` is set.
    pub fn single(risk: RiskSet, treatment: bool) -> Result<Self> {
        Self::new(risk, 1, u64::from(treatment))
    }

    pub fn risk(&self) -> RiskSet {
        self.risk
    }

    pub fn o(&self) -> u64 {
        self.o
    }

    pub fn o1(&self) -> u64 {
        self.o1
    }

    pub fn o0(&self) -> u64 {
        self.o - self.o1
    }

    pub fn o1_min(&self) -> u64 {
        self.o.saturating_sub(self.risk.y0)
    }

    pub fn o1_max(&self) -> u64 {
        self.o.min(self.risk.y1)
    }

    /// The outcome is determined by the geometry (one group cannot absorb any
    /// or all of the events).
    pub fn is_forced(&self) -> bool {
        self.o1_min() == self.o1_max()
    }

    /// Same risk set and event count with a different treatment count.
    pub fn with_o1(&self, o1: u64) -> Result<Self> {
        Self::new(self.risk, self.o, o1)
    }

    /// Every admissible outcome for this geometry.
    pub fn outcomes(&self) -> impl Iterator<Item = EventBatch> + '_ {
        (self.o1_min()..=self.o1_max()).map(move |u| EventBatch {
            risk: self.risk,
            o: self.o,
            o1: u,
        })
    }

    /// Risk set after removing this batch's events.
    pub fn risk_after(&self) -> RiskSet {
        RiskSet::new(self.risk.y1 - self.o1, self.risk.y0 - self.o0())
    }
}

/// Hazard ratio `λ1/λ0`, validated to `[1e-8, 1e8]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HazardRatio<T>(T);

impl<T: Scalar> HazardRatio<T> {
    pub fn new(theta: T) -> Result<Self> {
        let t = theta.to_f64().unwrap_or(f64::NAN);
        if !(THETA_MIN_ACCEPTED..=THETA_MAX_ACCEPTED).contains(&t) {
            return Err(Error::InvalidHazardRatio(t));
        }
        Ok(Self(theta))
    }

    pub fn value(&self) -> T {
        self.0
    }

    /// `log θ`, the Cox coefficient.
    pub fn ln(&self) -> T {
        self.0.ln()
    }

    pub fn recip(&self) -> Self {
        Self(self.0.recip())
    }
}

/// Rejection threshold `1/α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceThreshold<T> {
    alpha: T,
}

impl<T: Scalar> EvidenceThreshold<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidAlpha(alpha.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn threshold(&self) -> T {
        self.alpha.recip()
    }

    /// `log(1/α)`.
    pub fn log_threshold(&self) -> T {
        -self.alpha.ln()
    }

    pub fn is_crossed(&self, log_e: T) -> bool {
        log_e >= self.log_threshold()
    }
}

/// `y1·θ/(y0 + y1·θ)` for `o1 = 1`, `y0/(y0 + y1·θ)` for `o1 = 0`.
pub fn bernoulli_event_prob<T: Scalar>(theta: HazardRatio<T>, risk: RiskSet, o1: u64) -> Result<T> {
    if o1 > 1 {
        return Err(Error::OutOfSupport { o1, min: 0, max: 1 });
    }
    let batch = EventBatch::new(risk, 1, o1)?;
    let y1 = T::count(batch.risk.y1);
    let y0 = T::count(batch.risk.y0);
    let denom = y0 + y1 * theta.value();
    Ok(if o1 == 1 {
        y1 * theta.value() / denom
    } else {
        y0 / denom
    })
}

/// Walks the unnormalized log weights `log[C(y1,u)·C(y0,o-u)·θ^u]` over the
/// support, relative to the weight at `o1_min`.
fn for_each_log_weight<T: Scalar>(log_theta: T, batch: &EventBatch, mut f: impl FnMut(u64, T)) {
    let (y1, y0, o) = (batch.risk.y1, batch.risk.y0, batch.o);
    let lo = batch.o1_min();
    let hi = batch.o1_max();
    let mut w = T::zero();
    f(lo, w);
    for u in lo..hi {
        // C(y1,u+1)/C(y1,u) = (y1-u)/(u+1); C(y0,o-u-1)/C(y0,o-u) = (o-u)/(y0-o+u+1)
        w = w + T::count(y1 - u).ln() - T::count(u + 1).ln() + T::count(o - u).ln()
            - T::count(y0 + u + 1 - o).ln()
            + log_theta;
        f(u + 1, w);
    }
}

/// `log q_θ(o1 | (y1, y0), o)` at a raw log hazard ratio.
pub(crate) fn log_q_at<T: Scalar>(log_theta: T, batch: &EventBatch) -> T {
    if batch.is_forced() {
        return T::zero();
    }
    let mut norm = T::neg_infinity();
    let mut at_obs = T::zero();
    for_each_log_weight(log_theta, batch, |u, w| {
        norm = log_add_exp(norm, w);
        if u == batch.o1 {
            at_obs = w;
        }
    });
    at_obs - norm
}

/// Mean and variance of `O1` under the noncentral hypergeometric law at
/// `log_theta` for the batch's geometry.
pub(crate) fn moments_at<T: Scalar>(log_theta: T, batch: &EventBatch) -> (T, T) {
    if batch.is_forced() {
        return (T::count(batch.o1_min()), T::zero());
    }
    if batch.o == 1 {
        let y1t = T::count(batch.risk.y1) * log_theta.exp();
        let p = y1t / (T::count(batch.risk.y0) + y1t);
        return (p, p * (T::one() - p));
    }
    let mut weights = Vec::with_capacity((batch.o1_max() - batch.o1_min() + 1) as usize);
    for_each_log_weight(log_theta, batch, |u, w| weights.push((u, w)));
    let max = weights
        .iter()
        .map(|&(_, w)| w)
        .fold(T::neg_infinity(), T::max);
    let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
    for &(u, w) in &weights {
        let p = (w - max).exp();
        let k = T::count(u);
        s0 = s0 + p;
        s1 = s1 + p * k;
        s2 = s2 + p * k * k;
    }
    let mean = s1 / s0;
    let var = (s2 / s0 - mean * mean).max(T::zero());
    (mean, var)
}

/// `log q_θ(o1 | (y1, y0), o)`; see [`hypergeom_event_prob`].
pub fn log_hypergeom_event_prob<T: Scalar>(theta: HazardRatio<T>, batch: &EventBatch) -> T {
    log_q_at(theta.ln(), batch)
}

/// Fisher noncentral hypergeometric probability of the batch's `o1`.
///
/// A batch can only be constructed with `o1` inside its support, so the
/// support check lives in [`EventBatch::new`].
pub fn hypergeom_event_prob<T: Scalar>(theta: HazardRatio<T>, batch: &EventBatch) -> T {
    log_hypergeom_event_prob(theta, batch).exp()
}

/// Probability of `o1` events in treatment for the geometry of `batch`.
pub fn hypergeom_prob_of<T: Scalar>(
    theta: HazardRatio<T>,
    batch: &EventBatch,
    o1: u64,
) -> Result<T> {
    let (min, max) = (batch.o1_min(), batch.o1_max());
    if o1 < min || o1 > max {
        return Err(Error::OutOfSupport { o1, min, max });
    }
    Ok(hypergeom_event_prob(theta, &batch.with_o1(o1)?))
}

/// `log[q_θ1(o1 | ·) / q_θ0(o1 | ·)]`.
pub fn log_evalue_increment<T: Scalar>(
    theta1: HazardRatio<T>,
    theta0: HazardRatio<T>,
    batch: &EventBatch,
) -> T {
    if batch.is_forced() || theta1 == theta0 {
        return T::zero();
    }
    log_q_at(theta1.ln(), batch) - log_q_at(theta0.ln(), batch)
}

/// One-outcome likelihood ratio `q_θ1(o1 | ·) / q_θ0(o1 | ·)`.
pub fn evalue_increment<T: Scalar>(
    theta1: HazardRatio<T>,
    theta0: HazardRatio<T>,
    batch: &EventBatch,
) -> T {
    log_evalue_increment(theta1, theta0, batch).exp()
}

/// Running product of per-event-time E-variables, stored as its natural log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleState<T> {
    log_e: T,
    n_events: u64,
    n_event_times: u64,
}

impl<T: Scalar> Default for MartingaleState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MartingaleState<T> {
    /// The empty product.
    pub fn new() -> Self {
        Self {
            log_e: T::zero(),
            n_events: 0,
            n_event_times: 0,
        }
    }

    pub fn log_e(&self) -> T {
        self.log_e
    }

    pub fn e_value(&self) -> T {
        self.log_e.exp()
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn n_event_times(&self) -> u64 {
        self.n_event_times
    }

    /// Multiplies in the exact increment for `batch`.
    pub fn update(
        &self,
        theta1: HazardRatio<T>,
        theta0: HazardRatio<T>,
        batch: &EventBatch,
    ) -> Self {
        self.with_log_increment(log_evalue_increment(theta1, theta0, batch), batch)
    }

    /// Multiplies in an arbitrary conditional E-variable given as a log.
    pub fn with_log_increment(&self, log_increment: T, batch: &EventBatch) -> Self {
        Self {
            log_e: self.log_e + log_increment,
            n_events: self.n_events + batch.o,
            n_event_times: self.n_event_times + 1,
        }
    }

    pub fn rejects(&self, threshold: &EvidenceThreshold<T>) -> bool {
        threshold.is_crossed(self.log_e)
    }
}

/// `log[(M_left + M_right)/2]` for the two-sided GROW mixture.
pub fn two_sided_log_evalue<T: Scalar>(
    left: &MartingaleState<T>,
    right: &MartingaleState<T>,
) -> Result<T> {
    if left.n_events != right.n_events || left.n_event_times != right.n_event_times {
        return Err(Error::MismatchedComponents(format!(
            "left saw {}/{} events/times, right saw {}/{}",
            left.n_events, left.n_event_times, right.n_events, right.n_event_times
        )));
    }
    Ok(log_add_exp(left.log_e, right.log_e) - T::LN_2())
}

/// `(M_left + M_right)/2`.
pub fn two_sided_state<T: Scalar>(
    left: &MartingaleState<T>,
    right: &MartingaleState<T>,
) -> Result<T> {
    two_sided_log_evalue(left, right).map(T::exp)
}

/// Log of the product of independent trials' e-values.
pub fn meta_combine_log<T: Scalar>(states: &[MartingaleState<T>]) -> T {
    states.iter().fold(T::zero(), |acc, s| acc + s.log_e)
}

/// Product of independent trials' e-values; 1 for no trials.
pub fn meta_combine<T: Scalar>(states: &[MartingaleState<T>]) -> T {
    meta_combine_log(states).exp()
}

/// Score `U(β)` and observed information `-U'(β)` of the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreComponents<T> {
    pub score: T,
    pub information: T,
}

impl<T: Scalar> ScoreComponents<T> {
    /// `U / sqrt(-U')`.
    pub fn standardized(&self) -> Result<T> {
        if self.information <= T::zero() {
            return Err(Error::DegenerateVariance);
        }
        Ok(self.score / self.information.sqrt())
    }
}

/// `U(β) = Σ (O1 − E_β[O1])` and `-U'(β) = Σ Var_β[O1]` with `β = log θ`.
pub fn score_components<T: Scalar>(batches: &[EventBatch], beta: T) -> ScoreComponents<T> {
    let mut score = T::zero();
    let mut information = T::zero();
    for b in batches {
        let (mean, var) = moments_at(beta, b);
        score = score + T::count(b.o1) - mean;
        information = information + var;
    }
    ScoreComponents { score, information }
}

/// `Σ log q_θ(o1 | ·)` at `β = log θ`.
pub fn log_partial_likelihood<T: Scalar>(batches: &[EventBatch], beta: T) -> T {
    batches
        .iter()
        .fold(T::zero(), |acc, b| acc + log_q_at(beta, b))
}
