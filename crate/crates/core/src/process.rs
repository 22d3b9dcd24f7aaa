//! Sequential e-processes over a stream of event batches.

use crate::error::Result;
use crate::riskset::{
    log_evalue_increment, two_sided_log_evalue, EventBatch, HazardRatio, MartingaleState,
};
use crate::scalar::Scalar;

/// A process that consumes one event time at a time and reports its
/// running log e-value.
pub trait EProcess<T: Scalar> {
    /// Consumes `batch` and returns the log e-value after it.
    fn observe(&mut self, batch: &EventBatch) -> Result<T>;

    /// Current log e-value.
    fn log_e(&self) -> T;

    /// Cumulative number of events seen.
    fn n_events(&self) -> u64;
}

/// Exact safe logrank martingale for a fixed alternative.
#[derive(Debug, Clone)]
pub struct ExactProcess<T> {
    theta1: HazardRatio<T>,
    theta0: HazardRatio<T>,
    state: MartingaleState<T>,
}

impl<T: Scalar> ExactProcess<T> {
    pub fn new(theta1: HazardRatio<T>, theta0: HazardRatio<T>) -> Self {
        Self {
            theta1,
            theta0,
            state: MartingaleState::new(),
        }
    }

    pub fn state(&self) -> &MartingaleState<T> {
        &self.state
    }
}

impl<T: Scalar> EProcess<T> for ExactProcess<T> {
    fn observe(&mut self, batch: &EventBatch) -> Result<T> {
        self.state = self.state.update(self.theta1, self.theta0, batch);
        Ok(self.state.log_e())
    }

    fn log_e(&self) -> T {
        self.state.log_e()
    }

    fn n_events(&self) -> u64 {
        self.state.n_events()
    }
}

/// Equal-weight mixture of the `θ_min` and `1/θ_min` martingales.
///
/// The components are kept separately and mixed only on read-out.
#[derive(Debug, Clone)]
pub struct TwoSidedProcess<T> {
    left: ExactProcess<T>,
    right: ExactProcess<T>,
}

impl<T: Scalar> TwoSidedProcess<T> {
    pub fn new(theta_min: HazardRatio<T>, theta0: HazardRatio<T>) -> Self {
        Self {
            left: ExactProcess::new(theta_min, theta0),
            right: ExactProcess::new(theta_min.recip(), theta0),
        }
    }

    pub fn components(&self) -> (&MartingaleState<T>, &MartingaleState<T>) {
        (self.left.state(), self.right.state())
    }
}

impl<T: Scalar> EProcess<T> for TwoSidedProcess<T> {
    fn observe(&mut self, batch: &EventBatch) -> Result<T> {
        self.left.observe(batch)?;
        self.right.observe(batch)?;
        Ok(self.log_e())
    }

    fn log_e(&self) -> T {
        two_sided_log_evalue(self.left.state(), self.right.state())
            .expect("components fed the same stream")
    }

    fn n_events(&self) -> u64 {
        self.left.n_events()
    }
}

/// Log increment of an [`ExactProcess`] without carrying state.
pub fn exact_log_increment<T: Scalar>(
    theta1: HazardRatio<T>,
    theta0: HazardRatio<T>,
    batch: &EventBatch,
) -> T {
    log_evalue_increment(theta1, theta0, batch)
}
