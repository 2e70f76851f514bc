//! Estimation of numerical-attribute distributions under local differential
//! privacy.
//!
//! Users hold values in a bounded numerical domain and submit randomized
//! reports; the aggregator reconstructs the value distribution without ever
//! seeing raw data. The crate provides:
//!
//! - the Square Wave mechanism (continuous and discrete) and its General
//!   Wave relatives, with the mutual-information rule for the wave width
//!   ([`wave`]);
//! - EM and smoothed-EM reconstruction of the input histogram from
//!   aggregated reports ([`reconstruct`]);
//! - categorical frequency oracles (GRR, OLH, HRR) with unbiased
//!   aggregation and Norm-Sub post-processing ([`fo`]);
//! - hierarchy-based estimators: beta-ary hierarchy histograms with
//!   constrained inference, HaarHRR, and ADMM post-processing
//!   ([`hierarchy`]);
//! - mean/variance baselines (stochastic rounding, piecewise mechanism) and
//!   the CFO-with-binning pipeline ([`baselines`]);
//! - distribution-utility metrics: Wasserstein and KS distance, range
//!   queries, mean, variance and quantiles ([`metrics`]).
//!
//! Everything randomized draws from streams derived from a single
//! [`RngSeed`], so runs replay bit-identically regardless of scheduling.

pub mod baselines;
pub mod core;
pub mod error;
pub mod fo;
pub mod hierarchy;
pub mod metrics;
pub mod reconstruct;
pub mod wave;

pub use crate::core::{BucketSpec, Histogram, PrivacyParams, ReportBatch, RngSeed};
pub use crate::error::{Error, Result};
