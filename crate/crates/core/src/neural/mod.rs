//! Dense networks with reverse-mode gradients: the order-invariant set
//! encoder, policy heads and value heads.

pub mod dist;
mod gradcheck;
mod layers;
mod nets;
mod params;
mod tape;

pub use dist::{
    categorical_entropy, categorical_log_prob, full_mask, gaussian_entropy, gaussian_log_prob, gaussian_sample,
    GaussianSample, MaskedCategorical,
};
pub use gradcheck::{grad_check, GradCheckReport, REL_FLOOR};
pub use layers::{Dense, EncoderConfig, EncoderOutput, ObsBatch, SetEncoder, RELU_GAIN};
pub use nets::{ActorNet, ActorOut, CriticNet, CriticOut, HeadKind, ValueKind, INIT_LOG_STD, POLICY_OUT_GAIN, SIGMA_FLOOR};
pub use params::{uniform_fan_in, Grads, ParamId, ParamSet};
pub use tape::{sigmoid, softplus, Tape, Tensor, Var};
