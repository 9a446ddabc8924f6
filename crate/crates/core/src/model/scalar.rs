use core::fmt::Debug;
use core::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point element type of the model. Implemented for `f32` and `f64`.
pub trait Real: Float + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
