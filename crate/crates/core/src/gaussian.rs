//! Gaussian approximation on the logrank statistic.
//!
//! Covers the ties-corrected logrank `Z`, Schoenfeld's per-event drift, the
//! per-event and statistic-based Gaussian e-values, the null-expectation
//! audit of the per-event Gaussian increment, and the `Z`-scale rejection
//! boundaries of the Gaussian safe test, the continuous O'Brien–Fleming
//! procedure and the fixed-sample test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::normal_quantile;
use crate::process::EProcess;
use crate::riskset::{bernoulli_event_prob, EventBatch, HazardRatio, RiskSet};
use crate::scalar::Scalar;

/// Observed-minus-expected and hypergeometric variance of one event time.
pub fn logrank_terms<T: Scalar>(batch: &EventBatch) -> (T, T) {
    let risk = batch.risk();
    let y = T::count(risk.total());
    let o = T::count(batch.o());
    let a = risk.treatment_share::<T>();
    let expected = o * a;
    let variance = if risk.total() <= 1 {
        T::zero()
    } else {
        o * a * (T::one() - a) * (y - o) / (y - T::one())
    };
    (T::count(batch.o1()) - expected, variance)
}

/// Running sums of the logrank statistic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogrankSummary<T> {
    /// `Σ (O1 − E1)`.
    pub score: T,
    /// `Σ V1`.
    pub variance: T,
    pub n_events: u64,
    pub n_event_times: u64,
}

impl<T: Scalar> LogrankSummary<T> {
    pub fn new() -> Self {
        Self {
            score: T::zero(),
            variance: T::zero(),
            n_events: 0,
            n_event_times: 0,
        }
    }

    pub fn push(&mut self, batch: &EventBatch) {
        let (d, v) = logrank_terms::<T>(batch);
        self.score = self.score + d;
        self.variance = self.variance + v;
        self.n_events += batch.o();
        self.n_event_times += 1;
    }

    /// Standardized statistic `score / sqrt(variance)`.
    pub fn z(&self) -> Result<T> {
        if self.variance <= T::zero() {
            return Err(Error::DegenerateVariance);
        }
        Ok(self.score / self.variance.sqrt())
    }
}

/// Logrank statistic over an ordered list of event times.
pub fn logrank_z<T: Scalar>(batches: &[EventBatch]) -> Result<LogrankSummary<T>> {
    if batches.is_empty() {
        return Err(Error::Undefined(
            "logrank statistic of zero event times".into(),
        ));
    }
    let mut summary = LogrankSummary::new();
    for b in batches {
        summary.push(b);
    }
    summary.z()?;
    Ok(summary)
}

/// Per-event-time statistic `(O1 − E1)/sqrt(V1)`; `None` when `V1 = 0`.
pub fn per_event_z<T: Scalar>(batch: &EventBatch) -> Option<T> {
    let (d, v) = logrank_terms::<T>(batch);
    (v > T::zero()).then(|| d / v.sqrt())
}

/// Per-event drift `log θ · sqrt(m1·m0/(m1+m0)²)`.
pub fn schoenfeld_mu<T: Scalar>(theta: HazardRatio<T>, m1: u64, m0: u64) -> T {
    let (a, b) = (T::count(m1), T::count(m0));
    theta.ln() * (a * b).sqrt() / (a + b)
}

/// Log of `φ_{μ1·√o}(z) / φ_0(z)`.
pub fn gaussian_log_increment<T: Scalar>(mu1: T, z: T, o: u64) -> T {
    let so = T::count(o).sqrt();
    -T::half() * mu1 * mu1 * T::count(o) + mu1 * so * z
}

/// Per-event-time Gaussian e-value `exp(−½·μ1²·o + μ1·√o·Z⟨i⟩)`.
pub fn gaussian_increment<T: Scalar>(mu1: T, z: T, o: u64) -> T {
    gaussian_log_increment(mu1, z, o).exp()
}

/// Log of the statistic-based Gaussian e-value at `n` events and statistic `z`.
pub fn gaussian_log_evalue_at<T: Scalar>(mu1: T, n: u64, z: T) -> T {
    let nn = T::count(n);
    -T::half() * nn * mu1 * mu1 + mu1 * nn.sqrt() * z
}

/// `exp(−½·n·μ1² + μ1·√n·Z)`.
pub fn gaussian_evalue<T: Scalar>(summary: &LogrankSummary<T>, mu1: T) -> Result<T> {
    Ok(gaussian_log_evalue_at(mu1, summary.n_events, summary.z()?).exp())
}

/// Expectation under `θ0 = 1` of the single-event Gaussian increment at the
/// risk set `current`, with the drift fixed by the initial allocation.
pub fn null_expectation_audit<T: Scalar>(
    theta1: HazardRatio<T>,
    m1: u64,
    m0: u64,
    current: RiskSet,
) -> Result<T> {
    if current.y1 == 0 || current.y0 == 0 {
        return Err(Error::Data("audit needs both groups at risk".into()));
    }
    let mu1 = schoenfeld_mu(theta1, m1, m0);
    let null = HazardRatio::new(T::one())?;
    let mut total = T::zero();
    for o1 in 0..=1 {
        let b = EventBatch::new(current, 1, o1)?;
        let z = per_event_z::<T>(&b).expect("both groups at risk");
        total = total + bernoulli_event_prob(null, current, o1)? * gaussian_increment(mu1, z, 1);
    }
    Ok(total)
}

/// Statistic-based Gaussian e-process `M''`, updated as event times arrive.
#[derive(Debug, Clone)]
pub struct GaussianProcess<T> {
    mu1: T,
    summary: LogrankSummary<T>,
    log_e: T,
}

impl<T: Scalar> GaussianProcess<T> {
    pub fn new(theta1: HazardRatio<T>, m1: u64, m0: u64) -> Self {
        Self::with_drift(schoenfeld_mu(theta1, m1, m0))
    }

    pub fn with_drift(mu1: T) -> Self {
        Self {
            mu1,
            summary: LogrankSummary::new(),
            log_e: T::zero(),
        }
    }

    pub fn summary(&self) -> &LogrankSummary<T> {
        &self.summary
    }
}

impl<T: Scalar> EProcess<T> for GaussianProcess<T> {
    fn observe(&mut self, batch: &EventBatch) -> Result<T> {
        self.summary.push(batch);
        // Z is undefined until the variance is positive; M'' stays at 1.
        if let Ok(z) = self.summary.z() {
            self.log_e = gaussian_log_evalue_at(self.mu1, self.summary.n_events, z);
        }
        Ok(self.log_e)
    }

    fn log_e(&self) -> T {
        self.log_e
    }

    fn n_events(&self) -> u64 {
        self.summary.n_events
    }
}

/// Which boundary family a [`BoundarySpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    GaussianSafe,
    ObrienFleming,
    FixedClassical,
}

/// Direction of the one-sided alternative on the `Z` scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Reject for small `Z` (treatment reduces the hazard).
    Left,
    /// Reject for large `Z`.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec<T> {
    pub kind: BoundaryKind,
    pub alpha: T,
    pub side: Side,
    /// Design alternative; used by the Gaussian safe boundary only.
    pub theta1: Option<HazardRatio<T>>,
    /// Maximum number of events; used by O'Brien–Fleming only.
    pub n_max: Option<u64>,
    pub m1: u64,
    pub m0: u64,
}

impl<T: Scalar> BoundarySpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidAlpha(self.alpha.to_f64().unwrap_or(f64::NAN)));
        }
        match self.kind {
            BoundaryKind::GaussianSafe => match self.theta1 {
                None => {
                    return Err(Error::InvalidBoundary(
                        "gaussian-safe boundary needs theta1".into(),
                    ))
                }
                Some(t) if t.value() == T::one() => {
                    return Err(Error::InvalidBoundary(
                        "gaussian-safe boundary needs theta1 != 1".into(),
                    ))
                }
                Some(_) if self.m1 == 0 || self.m0 == 0 => {
                    return Err(Error::InvalidBoundary(
                        "gaussian-safe boundary needs m1, m0 >= 1".into(),
                    ))
                }
                _ => {}
            },
            BoundaryKind::ObrienFleming => match self.n_max {
                None | Some(0) => {
                    return Err(Error::InvalidBoundary(
                        "obrien-fleming needs n_max >= 1".into(),
                    ))
                }
                _ => {}
            },
            BoundaryKind::FixedClassical => {}
        }
        Ok(())
    }

    /// Threshold on `Z` at `n` events for this boundary's kind.
    pub fn threshold(&self, n: u64) -> Result<T> {
        match self.kind {
            BoundaryKind::GaussianSafe => gaussian_safe_boundary(n, self),
            BoundaryKind::ObrienFleming => obf_boundary(n, self),
            BoundaryKind::FixedClassical => fixed_boundary(self),
        }
    }

    /// Whether `z` lies in the rejection region given threshold `t`.
    pub fn rejects(&self, z: T, t: T) -> bool {
        match self.rejection_side() {
            Side::Left => z <= t,
            Side::Right => z >= t,
        }
    }

    /// For the Gaussian safe boundary the side follows the sign of `log θ1`.
    pub fn rejection_side(&self) -> Side {
        match (self.kind, self.theta1) {
            (BoundaryKind::GaussianSafe, Some(t)) if t.value() > T::one() => Side::Right,
            (BoundaryKind::GaussianSafe, Some(_)) => Side::Left,
            _ => self.side,
        }
    }
}

/// Level set `log M'' = log(1/α)` solved for `Z`.
///
/// Reject iff `Z ≤ t` when `θ1 < 1`, `Z ≥ t` when `θ1 > 1`.
pub fn gaussian_safe_boundary<T: Scalar>(n: u64, spec: &BoundarySpec<T>) -> Result<T> {
    if spec.kind != BoundaryKind::GaussianSafe {
        return Err(Error::InvalidBoundary("not a gaussian-safe spec".into()));
    }
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidBoundary("n must be at least 1".into()));
    }
    let theta1 = spec.theta1.expect("validated");
    let mu1 = schoenfeld_mu(theta1, spec.m1, spec.m0);
    let nn = T::count(n);
    let log_thr = -spec.alpha.ln();
    Ok((log_thr + T::half() * nn * mu1 * mu1) / (mu1 * nn.sqrt()))
}

/// Continuous-monitoring O'Brien–Fleming boundary `Φ⁻¹(1−α/2)/sqrt(n/n_max)`.
pub fn obf_boundary<T: Scalar>(n: u64, spec: &BoundarySpec<T>) -> Result<T> {
    if spec.kind != BoundaryKind::ObrienFleming {
        return Err(Error::InvalidBoundary("not an obrien-fleming spec".into()));
    }
    spec.validate()?;
    let n_max = spec.n_max.expect("validated");
    if n == 0 || n > n_max {
        return Err(Error::InvalidBoundary(format!(
            "n={n} outside [1, n_max={n_max}]"
        )));
    }
    let c = normal_quantile(T::one() - spec.alpha / T::lit(2.0))?;
    let b = c / (T::count(n) / T::count(n_max)).sqrt();
    Ok(match spec.side {
        Side::Left => -b,
        Side::Right => b,
    })
}

/// Fixed-sample one-sided critical value `±Φ⁻¹(1−α)`.
pub fn fixed_boundary<T: Scalar>(spec: &BoundarySpec<T>) -> Result<T> {
    spec.validate()?;
    let c = normal_quantile(T::one() - spec.alpha)?;
    Ok(match spec.side {
        Side::Left => -c,
        Side::Right => c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hr(x: f64) -> HazardRatio<f64> {
        HazardRatio::new(x).unwrap()
    }

    fn safe_spec(theta1: f64, alpha: f64) -> BoundarySpec<f64> {
        BoundarySpec {
            kind: BoundaryKind::GaussianSafe,
            alpha,
            side: Side::Left,
            theta1: Some(hr(theta1)),
            n_max: None,
            m1: 5000,
            m0: 5000,
        }
    }

    #[test]
    fn all_treatment_events_score_is_half_per_event() {
        let batches: Vec<_> = (0..6)
            .map(|i| EventBatch::single(RiskSet::new(1_000_000 - i, 1_000_000), true).unwrap())
            .collect();
        let s = logrank_z::<f64>(&batches).unwrap();
        assert!((s.score - 3.0).abs() < 1e-5);
        assert_eq!(s.n_events, 6);
    }

    #[test]
    fn tied_batch_terms() {
        let b = EventBatch::new(RiskSet::new(2, 2), 2, 1).unwrap();
        let (d, v) = logrank_terms::<f64>(&b);
        assert!((d - 0.0).abs() < 1e-15);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_variance_is_an_error() {
        let b = EventBatch::new(RiskSet::new(3, 0), 1, 1).unwrap();
        assert_eq!(
            logrank_z::<f64>(&[b]).unwrap_err(),
            Error::DegenerateVariance
        );
        assert!(logrank_z::<f64>(&[]).is_err());
    }

    #[test]
    fn schoenfeld_examples() {
        assert_eq!(schoenfeld_mu(hr(1.0), 10, 10), 0.0);
        assert!((schoenfeld_mu(hr(0.7), 100, 100) - (-0.178_337)).abs() < 1e-6);
        // log(0.7)·sqrt(2)/3
        assert!((schoenfeld_mu(hr(0.7), 200, 100) - (-0.168_138_181)).abs() < 1e-8);
    }

    #[test]
    fn gaussian_increment_examples() {
        assert_eq!(gaussian_increment(0.0, -3.0_f64, 4), 1.0);
        let v = gaussian_increment(-0.178_337_f64, -1.0, 1);
        assert!((v - (-0.5 * 0.178_337_f64.powi(2) + 0.178_337).exp()).abs() < 1e-14);
        assert!((v - 1.176_37).abs() < 1e-5);
    }

    #[test]
    fn gaussian_evalue_example() {
        let s = LogrankSummary::<f64> {
            score: -2.5 * 5.0,
            variance: 25.0,
            n_events: 100,
            n_event_times: 100,
        };
        assert!((s.z().unwrap() + 2.5).abs() < 1e-15);
        let e = gaussian_evalue(&s, -0.178_337_f64).unwrap();
        assert!((e - 17.605_665).abs() < 1e-5);
        assert!((gaussian_evalue(&s, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn audit_examples() {
        assert!(
            (null_expectation_audit(hr(1.0), 10, 10, RiskSet::new(10, 10)).unwrap() - 1.0).abs()
                < 1e-15
        );
        let v = null_expectation_audit(hr(0.7), 100, 100, RiskSet::new(40, 40)).unwrap();
        assert!(v <= 1.0 + 1e-9);
        // 3:1 allocation, theta1 = 0.1: two-term sum evaluated by hand
        let v = null_expectation_audit(hr(0.1), 300, 100, RiskSet::new(300, 100)).unwrap();
        let mu = 0.1_f64.ln() * (3.0_f64).sqrt() / 4.0;
        let sd = (0.75_f64 * 0.25).sqrt();
        let hand = 0.75 * (-0.5 * mu * mu + mu * 0.25 / sd).exp()
            + 0.25 * (-0.5 * mu * mu - mu * 0.75 / sd).exp();
        assert!((v - hand).abs() < 1e-12);
        assert!(v > 1.0);
    }

    #[test]
    fn safe_boundary_example_and_level_set() {
        let spec = safe_spec(0.7, 0.05);
        let t = gaussian_safe_boundary(100, &spec).unwrap();
        assert!((t - (-2.5715)).abs() < 1e-4);
        let mu1 = schoenfeld_mu(hr(0.7), 5000, 5000);
        let e = gaussian_log_evalue_at(mu1, 100, t).exp();
        assert!((e - 20.0).abs() < 1e-9);
    }

    #[test]
    fn safe_boundary_is_u_shaped() {
        let spec = safe_spec(0.7, 0.05);
        let mags: Vec<f64> = (1..=2000)
            .map(|n| gaussian_safe_boundary(n, &spec).unwrap().abs())
            .collect();
        let argmin = mags
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(argmin > 0 && argmin < mags.len() - 1);
        assert!(mags[..=argmin].windows(2).all(|w| w[1] <= w[0]));
        assert!(mags[argmin..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn safe_boundary_rejects_theta_one() {
        assert!(gaussian_safe_boundary(10, &safe_spec(1.0, 0.05)).is_err());
    }

    #[test]
    fn obf_examples() {
        let spec = BoundarySpec::<f64> {
            kind: BoundaryKind::ObrienFleming,
            alpha: 0.05,
            side: Side::Left,
            theta1: None,
            n_max: Some(205),
            m1: 5000,
            m0: 5000,
        };
        assert!((obf_boundary(205, &spec).unwrap() + 1.959_96).abs() < 1e-5);
        assert!((obf_boundary(100, &spec).unwrap() + 2.8063).abs() < 1e-4);
        assert!(obf_boundary(206, &spec).is_err());
        let mags: Vec<f64> = (1..=205)
            .map(|n| obf_boundary(n, &spec).unwrap().abs())
            .collect();
        assert!(mags.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fixed_classical_left() {
        let spec = BoundarySpec::<f64> {
            kind: BoundaryKind::FixedClassical,
            alpha: 0.05,
            side: Side::Left,
            theta1: None,
            n_max: None,
            m1: 1,
            m0: 1,
        };
        assert!((fixed_boundary(&spec).unwrap() + 1.6449).abs() < 1e-4);
    }

    #[test]
    fn single_event_variance_is_bernoulli() {
        let b = EventBatch::single(RiskSet::new(7, 3), true).unwrap();
        let (_, v) = logrank_terms::<f64>(&b);
        assert_eq!(v, 0.7 * (1.0 - 0.7) * 9.0 / 9.0);
    }
}
