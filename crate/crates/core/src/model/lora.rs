//! Low-rank adapters over the attention projections.
//!
//! An adapter contributes `scale * A . B` on top of a frozen projection
//! matrix. `B` starts at zero so a fresh stack leaves the model bitwise
//! unchanged. Adapters attach to the encoder self-attention and to the
//! decoder self- and cross-attention projections.

use super::{ModelConfig, ModelWeights};
use crate::error::{EngineError, Result};
use crate::math::{matmul, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which projection of an attention trio an adapter modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjKind {
    Q,
    K,
    V,
}

impl ProjKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProjKind::Q => "w_q",
            ProjKind::K => "w_k",
            ProjKind::V => "w_v",
        }
    }
}

/// Location of an adapted projection inside the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdapterSite {
    EncoderSelf { layer: usize, proj: ProjKind },
    DecoderSelf { layer: usize, proj: ProjKind },
    DecoderCross { layer: usize, proj: ProjKind },
}

impl AdapterSite {
    pub fn is_encoder(&self) -> bool {
        matches!(self, AdapterSite::EncoderSelf { .. })
    }

    /// Whether perturbing this site changes the decoder's cross-attention
    /// key/value projections of the encoder output.
    pub fn touches_cross_kv(&self) -> bool {
        matches!(
            self,
            AdapterSite::DecoderCross {
                proj: ProjKind::K | ProjKind::V,
                ..
            }
        )
    }

    /// Manifest name of the adapted tensor.
    pub fn tensor_name(&self) -> String {
        match self {
            AdapterSite::EncoderSelf { layer, proj } => format!("enc.{layer}.attn.{}", proj.name()),
            AdapterSite::DecoderSelf { layer, proj } => {
                format!("dec.{layer}.self_attn.{}", proj.name())
            }
            AdapterSite::DecoderCross { layer, proj } => {
                format!("dec.{layer}.cross_attn.{}", proj.name())
            }
        }
    }

    pub fn parse(name: &str) -> Option<AdapterSite> {
        let parts: Vec<&str> = name.split('.').collect();
        let proj = |p: &str| match p {
            "w_q" => Some(ProjKind::Q),
            "w_k" => Some(ProjKind::K),
            "w_v" => Some(ProjKind::V),
            _ => None,
        };
        match parts.as_slice() {
            ["enc", l, "attn", p] => Some(AdapterSite::EncoderSelf {
                layer: l.parse().ok()?,
                proj: proj(p)?,
            }),
            ["dec", l, "self_attn", p] => Some(AdapterSite::DecoderSelf {
                layer: l.parse().ok()?,
                proj: proj(p)?,
            }),
            ["dec", l, "cross_attn", p] => Some(AdapterSite::DecoderCross {
                layer: l.parse().ok()?,
                proj: proj(p)?,
            }),
            _ => None,
        }
    }
}

/// One low-rank adapter: `A` is `d x r`, `B` is `r x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub site: AdapterSite,
    pub a: Matrix,
    pub b: Matrix,
    pub scale: f32,
}

impl LoraAdapter {
    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// The dense update `scale * A . B`.
    pub fn delta(&self) -> Result<Matrix> {
        let ab = matmul(&self.a, &self.b)?;
        let data = ab.data().iter().map(|v| v * self.scale).collect();
        Matrix::from_vec(ab.rows(), ab.cols(), data)
    }
}

/// Ordered set of adapters; the order fixes the flat parameter layout
/// used by the finite-difference trainer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoraStack {
    pub adapters: Vec<LoraAdapter>,
}

impl LoraStack {
    /// Fresh adapters on `sites`: `A` seeded uniform in
    /// `[-1/sqrt(d), 1/sqrt(d)]`, `B` zero, so the stack starts inert.
    pub fn new_zero(
        config: &ModelConfig,
        sites: &[AdapterSite],
        rank: usize,
        scale: f32,
        seed: u64,
    ) -> Result<Self> {
        if rank == 0 || rank > config.d {
            return Err(EngineError::Domain(format!(
                "adapter rank {rank} outside 1..=d ({})",
                config.d
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = 1.0 / (config.d as f32).sqrt();
        let adapters = sites
            .iter()
            .map(|&site| {
                let a_data = (0..config.d * rank)
                    .map(|_| rng.gen_range(-spread..=spread))
                    .collect();
                LoraAdapter {
                    site,
                    a: Matrix::from_vec(config.d, rank, a_data).expect("finite"),
                    b: Matrix::zeros(rank, config.d),
                    scale,
                }
            })
            .collect();
        Ok(Self { adapters })
    }

    /// Adapters on every site the fine-tuning recipe trains: encoder
    /// self-attention plus decoder self- and cross-attention, Q and V
    /// projections of each.
    pub fn standard_sites(config: &ModelConfig) -> Vec<AdapterSite> {
        let mut sites = Vec::new();
        for layer in 0..config.layers_enc {
            for proj in [ProjKind::Q, ProjKind::V] {
                sites.push(AdapterSite::EncoderSelf { layer, proj });
            }
        }
        for layer in 0..config.layers_dec {
            for proj in [ProjKind::Q, ProjKind::V] {
                sites.push(AdapterSite::DecoderSelf { layer, proj });
            }
            for proj in [ProjKind::Q, ProjKind::V] {
                sites.push(AdapterSite::DecoderCross { layer, proj });
            }
        }
        sites
    }

    /// Total flat parameter count (all `A` and `B` entries).
    pub fn param_len(&self) -> usize {
        self.adapters
            .iter()
            .map(|ad| ad.a.data().len() + ad.b.data().len())
            .sum()
    }

    /// Flatten parameters: per adapter, `A` row-major then `B` row-major.
    pub fn params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_len());
        for ad in &self.adapters {
            out.extend_from_slice(ad.a.data());
            out.extend_from_slice(ad.b.data());
        }
        out
    }

    /// Write a flat parameter vector back into the adapters.
    pub fn set_params(&mut self, params: &[f32]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(EngineError::Shape(format!(
                "parameter vector length {} != {}",
                params.len(),
                self.param_len()
            )));
        }
        let mut offset = 0;
        for ad in &mut self.adapters {
            let a_len = ad.a.data().len();
            let b_len = ad.b.data().len();
            ad.a = Matrix::from_vec(
                ad.a.rows(),
                ad.a.cols(),
                params[offset..offset + a_len].to_vec(),
            )?;
            offset += a_len;
            ad.b = Matrix::from_vec(
                ad.b.rows(),
                ad.b.cols(),
                params[offset..offset + b_len].to_vec(),
            )?;
            offset += b_len;
        }
        Ok(())
    }

    /// Coordinate ranges of adapters whose site touches the encoder, and
    /// of adapters that change the cross-attention K/V projections. The
    /// trainer uses these to reuse cached activations.
    pub fn coordinate_site(&self, coord: usize) -> Option<AdapterSite> {
        let mut offset = 0;
        for ad in &self.adapters {
            let len = ad.a.data().len() + ad.b.data().len();
            if coord < offset + len {
                return Some(ad.site);
            }
            offset += len;
        }
        None
    }
}

/// Materialize effective weights: `W_eff = W + scale * A . B` per adapted
/// projection, base weights untouched.
pub fn apply_lora(weights: &ModelWeights, stack: &LoraStack) -> Result<ModelWeights> {
    let mut out = weights.clone();
    for ad in &stack.adapters {
        let delta = ad.delta()?;
        let name = ad.site.tensor_name();
        let target = out
            .tensor_mut(&name)
            .ok_or_else(|| EngineError::Domain(format!("no such projection: {name}")))?;
        if target.rows() != delta.rows() || target.cols() != delta.cols() {
            return Err(EngineError::Shape(format!(
                "adapter for {name} is {}x{}, projection is {}x{}",
                delta.rows(),
                delta.cols(),
                target.rows(),
                target.cols()
            )));
        }
        let summed: Vec<f32> = target
            .data()
            .iter()
            .zip(delta.data())
            .map(|(w, dl)| w + dl)
            .collect();
        *target = Matrix::from_vec(target.rows(), target.cols(), summed)?;
    }
    Ok(out)
}
