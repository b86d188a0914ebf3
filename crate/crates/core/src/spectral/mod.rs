//! Short-time Fourier analysis, log-power features, and the DDAE baseline.

mod ddae;
mod stft;

pub use ddae::{lps_mse, Ddae, DdaeSpec};
pub use stft::{istft, lps, lps_invert, stft, Spectrogram, StftConfig, C64, LPS_EPSILON};
