//! Differentiable core: a tape-based tensor with reverse-mode gradients, the
//! channel-reduced encoder, the sigmoid classifier, and embedding fusion.

mod net;
mod params;
mod tape;

pub use net::{
    attentive_stat_pool, block_param, classifier_forward, encoder_forward, fuse_alpha,
    infer_configs, init_model_params, se_res2_block, AlphaFusion, ClassifierConfig,
    EtEncoderConfig, ASP_EPS, P_ASP_B, P_ASP_V, P_ASP_W, P_CLS1_B, P_CLS1_W, P_CLS2_B, P_CLS2_W,
    P_MFA_B, P_MFA_W, P_PROJ_B, P_PROJ_W, P_RAW_ALPHA, P_STEM_B, P_STEM_W, RES2_SCALE,
};
pub use params::{BoundParams, ParamSet, ParamTensor};
pub use tape::{ModelError, Tape, TensorRef, BCE_CLAMP};
