//! Mixed-frequency extraction of the quarterly constrained share.

pub mod fit;
pub mod io;
pub mod kalman;
pub mod model;

pub use fit::{extract_b, log_likelihood, mle_fit, sample_means, ExtractionResult, MleFit, MleOptions};
pub use io::{read_mixed_csv, write_extraction_csv};
pub use kalman::{periodic_steady_gain, FilterOutput, LinearGaussian, SmootherOutput};
pub use model::{
    steady_gain, stylized_riccati_gain, stylized_system, MixedFreqData, MixedFreqModel, MixedFreqParams,
    MixedFreqSample, ObsNoise, SurveyWeighting,
};
