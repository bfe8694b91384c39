//! Device compute-time model.

use rand::Rng;
use rand_distr::{Distribution, Exp};

/// A device rated at `mips` million instructions per second running a
/// local update that costs `work_per_update` instructions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeProfile {
    pub mips: f64,
    pub work_per_update: f64,
}

impl ComputeProfile {
    pub fn new(mips: f64, work_per_update: f64) -> Self {
        assert!(mips > 0.0 && work_per_update > 0.0);
        Self {
            mips,
            work_per_update,
        }
    }

    pub fn mean_time(&self) -> f64 {
        self.work_per_update / (self.mips * 1e6)
    }

    /// Exponential local-update duration with mean [`Self::mean_time`].
    pub fn sample_compute_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(1.0 / self.mean_time())
            .expect("positive rate")
            .sample(rng)
    }
}
