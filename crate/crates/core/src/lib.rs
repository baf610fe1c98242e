pub mod actors;
pub mod attacks;
pub mod bench;
pub mod bits;
pub mod channel;
pub mod config;
pub mod crypto;
pub mod dppuf;
pub mod fuzzy;
pub mod scalar;
pub mod sim;
pub mod store;
pub mod wire;

/// Hardware instance with `f64` delays.
pub type Dppuf = dppuf::DppufInstance<f64>;
/// Hardware instance with `f32` delays.
pub type Dppuf32 = dppuf::DppufInstance<f32>;
pub type PublicModel = dppuf::PpufModel<f64>;
