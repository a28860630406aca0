//! Scalar abstraction for rewards and UCT statistics.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating-point type used for rewards, running means and UCB scores.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as float")
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn clamp_unit(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}
