//! Scalar abstraction for the numeric kernels: f32 or f64.

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar the numeric kernels are generic over.
pub trait Real: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }
}

impl<T> Real for T where T: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {}
