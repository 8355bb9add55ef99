//! Reference models with known answers, used to validate the engines.

mod conjugate;
mod lgm;
mod normal_gamma;
mod random_effects;
mod stereology;

pub use conjugate::ConjugateGaussianModel;
pub use lgm::{GaussianLgm, PoissonLgm};
pub use normal_gamma::{NormalGammaModel, NormalGammaPosterior};
pub use random_effects::RandomEffectsModel;
pub use stereology::{
    gpd_quantile, FourSummary, NineSummary, StereologicalModel, INCLUSION_THRESHOLD,
};
