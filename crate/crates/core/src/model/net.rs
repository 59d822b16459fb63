//! The compact diagnosis network: a TDNN stem, squeeze-excitation Res2
//! blocks with multi-scale dilated convolutions, channel-concatenated block
//! aggregation, attentive statistics pooling, an embedding projection, and a
//! two-layer sigmoid classifier. A learnable gate fuses cough and breath
//! embeddings for the dual-input variant.

use serde::{Deserialize, Serialize};

use super::params::{BoundParams, ParamSet, ParamTensor};
use super::tape::{ModelError, Tape, TensorRef};
use crate::features::FeatureMatrix;

/// Res2 channel split factor.
pub const RES2_SCALE: usize = 4;

pub const ASP_EPS: f64 = 1e-9;

/// Encoder hyperparameters. Channel width defaults to one eighth of the
/// usual 512.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtEncoderConfig {
    pub in_dim: usize,
    pub channels: usize,
    pub blocks: usize,
    pub dilations: Vec<usize>,
    pub se_bottleneck: usize,
    pub attn_hidden: usize,
    pub embed_dim: usize,
}

impl Default for EtEncoderConfig {
    fn default() -> Self {
        EtEncoderConfig {
            in_dim: 40,
            channels: 512 / 8,
            blocks: 3,
            dilations: vec![2, 3, 4],
            se_bottleneck: 16,
            attn_hidden: 16,
            embed_dim: 48,
        }
    }
}

impl EtEncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dilations.len() != self.blocks {
            return Err(ModelError::Config(format!(
                "{} dilations for {} blocks",
                self.dilations.len(),
                self.blocks
            )));
        }
        if !self.channels.is_multiple_of(RES2_SCALE) {
            return Err(ModelError::Config(format!(
                "channels {} not divisible by the Res2 scale {RES2_SCALE}",
                self.channels
            )));
        }
        if self.in_dim == 0 || self.embed_dim == 0 || self.blocks == 0 {
            return Err(ModelError::Config("zero-sized dimension".into()));
        }
        Ok(())
    }

    /// Channel count after concatenating every block output.
    pub fn aggregated_channels(&self) -> usize {
        self.channels * self.blocks
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_dim: 32,
            out_dim: 1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.out_dim != 1 {
            return Err(ModelError::Config(format!(
                "classifier needs hidden_dim >= 1 and out_dim == 1, got {} / {}",
                self.hidden_dim, self.out_dim
            )));
        }
        Ok(())
    }
}

/// Learnable convex gate between the cough and breath embeddings, stored as
/// a raw logit so the mixing weight always stays in (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct AlphaFusion {
    pub raw_alpha: f64,
}

impl AlphaFusion {
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 + (-self.raw_alpha).exp())
    }
}

pub const P_STEM_W: &str = "enc.stem.w";
pub const P_STEM_B: &str = "enc.stem.b";
pub const P_MFA_W: &str = "enc.mfa.w";
pub const P_MFA_B: &str = "enc.mfa.b";
pub const P_ASP_W: &str = "enc.asp.w";
pub const P_ASP_B: &str = "enc.asp.b";
pub const P_ASP_V: &str = "enc.asp.v";
pub const P_PROJ_W: &str = "enc.proj.w";
pub const P_PROJ_B: &str = "enc.proj.b";
pub const P_CLS1_W: &str = "cls.fc1.w";
pub const P_CLS1_B: &str = "cls.fc1.b";
pub const P_CLS2_W: &str = "cls.fc2.w";
pub const P_CLS2_B: &str = "cls.fc2.b";
pub const P_RAW_ALPHA: &str = "fusion.raw_alpha";

pub fn block_param(block: usize, suffix: &str) -> String {
    format!("enc.block{block}.{suffix}")
}

/// Initializes every parameter of the encoder + classifier (and the fusion
/// gate when requested) with seeded uniform draws; biases start at zero and
/// the fusion gate starts at the midpoint.
pub fn init_model_params(
    enc: &EtEncoderConfig,
    cls: &ClassifierConfig,
    with_fusion: bool,
    seed: u64,
) -> Result<ParamSet, ModelError> {
    enc.validate()?;
    cls.validate()?;
    let c = enc.channels;
    let sub = c / RES2_SCALE;
    let agg = enc.aggregated_channels();
    let mut p = ParamSet::new();

    p.insert_uniform(P_STEM_W, &[c, enc.in_dim, 5], enc.in_dim * 5, seed);
    p.insert(P_STEM_B, ParamTensor::zeros(&[c]));
    for b in 0..enc.blocks {
        p.insert_uniform(&block_param(b, "in.w"), &[c, c, 1], c, seed);
        p.insert(&block_param(b, "in.b"), ParamTensor::zeros(&[c]));
        for j in 0..RES2_SCALE - 1 {
            p.insert_uniform(
                &block_param(b, &format!("res2.{j}.w")),
                &[sub, sub, 3],
                sub * 3,
                seed,
            );
            p.insert(
                &block_param(b, &format!("res2.{j}.b")),
                ParamTensor::zeros(&[sub]),
            );
        }
        p.insert_uniform(&block_param(b, "out.w"), &[c, c, 1], c, seed);
        p.insert(&block_param(b, "out.b"), ParamTensor::zeros(&[c]));
        p.insert_uniform(
            &block_param(b, "se.squeeze.w"),
            &[enc.se_bottleneck, c],
            c,
            seed,
        );
        p.insert(
            &block_param(b, "se.squeeze.b"),
            ParamTensor::zeros(&[enc.se_bottleneck]),
        );
        p.insert_uniform(
            &block_param(b, "se.excite.w"),
            &[c, enc.se_bottleneck],
            enc.se_bottleneck,
            seed,
        );
        p.insert(&block_param(b, "se.excite.b"), ParamTensor::zeros(&[c]));
    }
    p.insert_uniform(P_MFA_W, &[agg, agg, 1], agg, seed);
    p.insert(P_MFA_B, ParamTensor::zeros(&[agg]));
    p.insert_uniform(P_ASP_W, &[enc.attn_hidden, agg], agg, seed);
    p.insert(P_ASP_B, ParamTensor::zeros(&[enc.attn_hidden]));
    p.insert_uniform(P_ASP_V, &[enc.attn_hidden], enc.attn_hidden, seed);
    p.insert_uniform(P_PROJ_W, &[enc.embed_dim, 2 * agg], 2 * agg, seed);
    p.insert(P_PROJ_B, ParamTensor::zeros(&[enc.embed_dim]));

    p.insert_uniform(
        P_CLS1_W,
        &[cls.hidden_dim, enc.embed_dim],
        enc.embed_dim,
        seed,
    );
    p.insert(P_CLS1_B, ParamTensor::zeros(&[cls.hidden_dim]));
    p.insert_uniform(
        P_CLS2_W,
        &[cls.out_dim, cls.hidden_dim],
        cls.hidden_dim,
        seed,
    );
    p.insert(P_CLS2_B, ParamTensor::zeros(&[cls.out_dim]));

    if with_fusion {
        p.insert(
            P_RAW_ALPHA,
            ParamTensor {
                shape: vec![1],
                values: vec![0.0],
            },
        );
    }
    Ok(p)
}

/// Reads the architecture back out of a parameter set, used when loading a
/// checkpoint without a sidecar config.
pub fn infer_configs(params: &ParamSet) -> Result<(EtEncoderConfig, ClassifierConfig), ModelError> {
    let stem = params
        .get(P_STEM_W)
        .ok_or_else(|| ModelError::Checkpoint(format!("missing {P_STEM_W}")))?;
    if stem.shape.len() != 3 {
        return Err(ModelError::Checkpoint(format!(
            "{P_STEM_W} has shape {:?}",
            stem.shape
        )));
    }
    let channels = stem.shape[0];
    let in_dim = stem.shape[1];
    let mut blocks = 0;
    while params.get(&block_param(blocks, "in.w")).is_some() {
        blocks += 1;
    }
    if blocks == 0 {
        return Err(ModelError::Checkpoint("no encoder blocks found".into()));
    }
    let se = params
        .get(&block_param(0, "se.squeeze.w"))
        .ok_or_else(|| ModelError::Checkpoint("missing SE weights".into()))?;
    let asp_w = params
        .get(P_ASP_W)
        .ok_or_else(|| ModelError::Checkpoint(format!("missing {P_ASP_W}")))?;
    let proj = params
        .get(P_PROJ_W)
        .ok_or_else(|| ModelError::Checkpoint(format!("missing {P_PROJ_W}")))?;
    let fc1 = params
        .get(P_CLS1_W)
        .ok_or_else(|| ModelError::Checkpoint(format!("missing {P_CLS1_W}")))?;
    let enc = EtEncoderConfig {
        in_dim,
        channels,
        blocks,
        // dilations are architectural constants not stored per block
        dilations: (0..blocks).map(|b| b + 2).collect(),
        se_bottleneck: se.shape[0],
        attn_hidden: asp_w.shape[0],
        embed_dim: proj.shape[0],
    };
    let cls = ClassifierConfig {
        hidden_dim: fc1.shape[0],
        out_dim: 1,
    };
    enc.validate()?;
    cls.validate()?;
    Ok((enc, cls))
}

/// One squeeze-excitation Res2 block:
/// 1x1 conv, ReLU, Res2 multi-scale dilated 3x1 convs, ReLU, 1x1 conv,
/// SE channel gating, residual add with the block input.
pub fn se_res2_block(
    tape: &mut Tape,
    bound: &BoundParams,
    block: usize,
    input: TensorRef,
    dilation: usize,
) -> Result<TensorRef, ModelError> {
    let c = tape.shape(input)[0];
    if !c.is_multiple_of(RES2_SCALE) {
        return Err(ModelError::Config(format!(
            "block input has {c} channels, not divisible by {RES2_SCALE}"
        )));
    }
    let sub = c / RES2_SCALE;

    let w_in = bound.get(&block_param(block, "in.w"));
    let b_in = bound.get(&block_param(block, "in.b"));
    let y = tape.conv1d(input, w_in, b_in, 1)?;
    let y = tape.relu(y);

    // Res2: chunk 0 passes through; chunk j >= 2 receives the previous
    // chunk's output before its own dilated conv.
    let mut outputs = Vec::with_capacity(RES2_SCALE);
    let first = tape.slice_rows(y, 0, sub)?;
    outputs.push(first);
    for j in 1..RES2_SCALE {
        let chunk = tape.slice_rows(y, j * sub, sub)?;
        let fed = if j >= 2 {
            tape.add(chunk, outputs[j - 1])?
        } else {
            chunk
        };
        let w = bound.get(&block_param(block, &format!("res2.{}.w", j - 1)));
        let b = bound.get(&block_param(block, &format!("res2.{}.b", j - 1)));
        outputs.push(tape.conv1d(fed, w, b, dilation)?);
    }
    let y = tape.concat_rows(&outputs)?;
    let y = tape.relu(y);

    let w_out = bound.get(&block_param(block, "out.w"));
    let b_out = bound.get(&block_param(block, "out.b"));
    let y = tape.conv1d(y, w_out, b_out, 1)?;

    // squeeze-excitation: global mean over time, bottleneck, sigmoid gate
    let squeezed = tape.mean_over_cols(y)?;
    let sq_w = bound.get(&block_param(block, "se.squeeze.w"));
    let sq_b = bound.get(&block_param(block, "se.squeeze.b"));
    let z = tape.matvec(sq_w, squeezed)?;
    let z = tape.add(z, sq_b)?;
    let z = tape.relu(z);
    let ex_w = bound.get(&block_param(block, "se.excite.w"));
    let ex_b = bound.get(&block_param(block, "se.excite.b"));
    let gate = tape.matvec(ex_w, z)?;
    let gate = tape.add(gate, ex_b)?;
    let gate = tape.sigmoid(gate);
    let y = tape.mul_col_vec(y, gate)?;

    tape.add(y, input)
}

/// Attentive statistics pooling: softmax attention over time, then the
/// attention-weighted mean and standard deviation concatenated.
pub fn attentive_stat_pool(
    tape: &mut Tape,
    attn_w: TensorRef,
    attn_b: TensorRef,
    attn_v: TensorRef,
    input: TensorRef,
) -> Result<TensorRef, ModelError> {
    let scores = tape.matmul(attn_w, input)?;
    let scores = tape.add_col_vec(scores, attn_b)?;
    let scores = tape.tanh(scores);
    let scores = tape.vecmat(attn_v, scores)?;
    let weights = tape.softmax(scores)?;

    let mean = tape.matvec(input, weights)?;
    let squared = tape.mul(input, input)?;
    let second_moment = tape.matvec(squared, weights)?;
    let mean_sq = tape.mul(mean, mean)?;
    let variance = tape.sub(second_moment, mean_sq)?;
    let std = tape.clamped_sqrt(variance, ASP_EPS);
    tape.concat_rows(&[mean, std])
}

/// Full encoder forward: stem conv, the SE-Res2 stack, channel-concatenated
/// aggregation, a 1x1 conv, attentive pooling, and the embedding projection.
pub fn encoder_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &EtEncoderConfig,
    features: &FeatureMatrix,
) -> Result<TensorRef, ModelError> {
    cfg.validate()?;
    if features.bins != cfg.in_dim {
        return Err(ModelError::Shape(format!(
            "features have {} bins, encoder expects {}",
            features.bins, cfg.in_dim
        )));
    }
    // transpose T x F into channels-by-time
    let t = features.frames;
    let f = features.bins;
    let mut transposed = vec![0.0; f * t];
    for ti in 0..t {
        for fi in 0..f {
            transposed[fi * t + ti] = features.data[ti * f + fi];
        }
    }
    let x = tape.constant(&[f, t], transposed);

    let stem_w = bound.get(P_STEM_W);
    let stem_b = bound.get(P_STEM_B);
    let mut h = tape.conv1d(x, stem_w, stem_b, 1)?;
    h = tape.relu(h);

    let mut block_outputs = Vec::with_capacity(cfg.blocks);
    for b in 0..cfg.blocks {
        h = se_res2_block(tape, bound, b, h, cfg.dilations[b])?;
        block_outputs.push(h);
    }

    let aggregated = tape.concat_rows(&block_outputs)?;
    let mfa_w = bound.get(P_MFA_W);
    let mfa_b = bound.get(P_MFA_B);
    let aggregated = tape.conv1d(aggregated, mfa_w, mfa_b, 1)?;

    let pooled = attentive_stat_pool(
        tape,
        bound.get(P_ASP_W),
        bound.get(P_ASP_B),
        bound.get(P_ASP_V),
        aggregated,
    )?;

    let proj_w = bound.get(P_PROJ_W);
    let proj_b = bound.get(P_PROJ_B);
    let emb = tape.matvec(proj_w, pooled)?;
    tape.add(emb, proj_b)
}

/// Two fully connected layers ending in a logistic sigmoid, so the output is
/// always a probability in (0, 1).
pub fn classifier_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    embedding: TensorRef,
) -> Result<TensorRef, ModelError> {
    let w1 = bound.get(P_CLS1_W);
    let b1 = bound.get(P_CLS1_B);
    let h = tape.matvec(w1, embedding)?;
    let h = tape.add(h, b1)?;
    let h = tape.relu(h);
    let w2 = bound.get(P_CLS2_W);
    let b2 = bound.get(P_CLS2_B);
    let out = tape.matvec(w2, h)?;
    let out = tape.add(out, b2)?;
    Ok(tape.sigmoid(out))
}

/// Convex combination `alpha * cough + (1 - alpha) * breath` with
/// `alpha = sigmoid(raw_alpha)`. Gradients flow into the gate and both
/// embeddings.
pub fn fuse_alpha(
    tape: &mut Tape,
    raw_alpha: TensorRef,
    cough_emb: TensorRef,
    breath_emb: TensorRef,
) -> Result<TensorRef, ModelError> {
    if tape.shape(cough_emb) != tape.shape(breath_emb) {
        return Err(ModelError::Shape(format!(
            "fuse: {:?} vs {:?}",
            tape.shape(cough_emb),
            tape.shape(breath_emb)
        )));
    }
    let alpha = tape.sigmoid(raw_alpha);
    let one = tape.scalar(1.0);
    let complement = tape.sub(one, alpha)?;
    let weighted_cough = tape.scalar_mul(alpha, cough_emb)?;
    let weighted_breath = tape.scalar_mul(complement, breath_emb)?;
    tape.add(weighted_cough, weighted_breath)
}
