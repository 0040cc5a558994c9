//! Chunk-wise streaming encoder-decoder transformer engine.
//!
//! A desk-scale engine for streaming sequence-to-sequence inference:
//! blocked causal attention masking, encoder and decoder KV caches,
//! stability-checked greedy and beam-search streaming decoders with
//! online word timestamps, streaming word-error metrics, and low-rank
//! adapter fine-tuning driven by a finite-difference gradient oracle.
//!
//! Modules roughly bottom-up:
//!
//! - [`math`]: dense f32 matrices, stable softmax, masked attention.
//! - [`mask`]: the chunked causal mask and the training sample grid.
//! - [`model`]: the toy transformer, its caches, and LoRA adapters.
//! - [`decode`]: streaming greedy/beam decoding with token regression.
//! - [`metrics`]: WER/RWER/ARWER, timestamp quality, runtime stats.
//! - [`finetune`]: the adapter training loop.
//! - [`count`]: multiply-accumulate accounting for the benchmark harness.

pub mod count;
pub mod decode;
pub mod error;
pub mod finetune;
pub mod mask;
pub mod math;
pub mod metrics;
pub mod model;

pub use error::{EngineError, Result};
