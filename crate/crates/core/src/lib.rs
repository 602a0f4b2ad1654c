//! Link-level simulation of a multi-user MIMO downlink carrying bit-plane
//! images to a receiver that reconstructs them with a contraction operator.
//!
//! The crate covers Rayleigh channels with imperfect CSI ([`channel`]),
//! MF/ZF precoding ([`precoding`]), the analytic SINR/BER/distortion chain
//! ([`link`]), symbol-level transmission ([`transceiver`]), contraction
//! operators and semantic performance bounds ([`inference`]), image
//! metrics ([`metrics`]) and the experiment harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod harness;
pub mod image;
pub mod inference;
pub mod link;
pub mod metrics;
pub mod precoding;
pub mod seed;
pub mod transceiver;

pub use channel::{draw_channel_set, CMatrix, ChannelSet};
pub use error::{Error, Result};
pub use image::{synthetic_image, GrayImage, Image};
pub use inference::{
    apply_operator, estimate_bias, estimate_rho, identity_bound, inferiority_threshold,
    semantic_bound, sinr_sensitivity, ContractionOperator, InferenceProfile, OperatorKind,
    Reconstructor,
};
pub use link::{
    ber_from_sinr, empirical_link_budget, expected_distortion, link_budget, q_function,
    EmpiricalLinkBudget, Estimate, LinkBudget, QamParams,
};
pub use metrics::{
    mae, metric_lipschitz_probe, metric_report, psnr, ssim, MetricReport, SsimConfig,
};
pub use precoding::{
    build_precoder, mf_precoder, precoder_cost_probe, zf_precoder, Precoder, Scheme,
};
pub use seed::SeedSpec;
pub use transceiver::{
    combine_bit_planes, split_bit_planes, transmit_frame, BitPlaneSource, FrameOptions,
    FrameResult, QamConstellation,
};
