use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{AttentionError, TokenLayout};

/// Model-level constants for the FLOPs estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsParams {
    /// Hidden dimension d (896 for the 0.5B backbone, 1536 for 1.5B).
    pub hidden_dim: f64,
    pub layers: usize,
}

impl FlopsParams {
    pub fn new(hidden_dim: f64, layers: usize) -> Result<Self, AttentionError> {
        if hidden_dim <= 0.0 || !hidden_dim.is_finite() {
            return Err(AttentionError::InvalidInput(format!(
                "hidden_dim must be positive, got {hidden_dim}"
            )));
        }
        Ok(FlopsParams { hidden_dim, layers })
    }
}

/// Token accounting for the FLOPs model.
///
/// Real-valued so that corpus averages (e.g. 10.4 images of 730 tokens,
/// 17.4 text tokens) plug in directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsLayout {
    text_tokens: f64,
    vision_tokens: f64,
    sum_span_sq: f64,
}

impl FlopsLayout {
    /// `image_count` images of `tokens_per_image` vision tokens each.
    /// Both may be fractional averages.
    pub fn uniform(
        text_tokens: f64,
        image_count: f64,
        tokens_per_image: f64,
    ) -> Result<Self, AttentionError> {
        for (name, v) in [
            ("text_tokens", text_tokens),
            ("image_count", image_count),
            ("tokens_per_image", tokens_per_image),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(AttentionError::InvalidInput(format!(
                    "{name} must be a finite non-negative value, got {v}"
                )));
            }
        }
        Ok(FlopsLayout {
            text_tokens,
            vision_tokens: image_count * tokens_per_image,
            sum_span_sq: image_count * tokens_per_image * tokens_per_image,
        })
    }

    /// Exact per-image span sizes.
    pub fn from_spans(text_tokens: f64, span_lens: &[f64]) -> Result<Self, AttentionError> {
        if text_tokens < 0.0 || !text_tokens.is_finite() {
            return Err(AttentionError::InvalidInput(format!(
                "text_tokens must be a finite non-negative value, got {text_tokens}"
            )));
        }
        for &n in span_lens {
            if n <= 0.0 || !n.is_finite() {
                return Err(AttentionError::InvalidInput(format!(
                    "span lengths must be positive, got {n}"
                )));
            }
        }
        Ok(FlopsLayout {
            text_tokens,
            vision_tokens: span_lens.iter().sum(),
            sum_span_sq: span_lens.iter().map(|n| n * n).sum(),
        })
    }

    pub fn from_layout(layout: &TokenLayout) -> Self {
        FlopsLayout {
            text_tokens: layout.text_len() as f64,
            vision_tokens: layout.vision_len() as f64,
            sum_span_sq: layout
                .image_spans()
                .iter()
                .map(|s| (s.len * s.len) as f64)
                .sum(),
        }
    }

    pub fn text_tokens(&self) -> f64 {
        self.text_tokens
    }

    pub fn vision_tokens(&self) -> f64 {
        self.vision_tokens
    }

    pub fn sum_span_sq(&self) -> f64 {
        self.sum_span_sq
    }

    fn seq_len(&self) -> f64 {
        self.text_tokens + self.vision_tokens
    }
}

/// Per-layer FLOPs split into the attention and MLP terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub attention: f64,
    pub mlp: f64,
}

impl FlopsBreakdown {
    pub fn total(&self) -> f64 {
        self.attention + self.mlp
    }
}

/// FLOPs of one transformer layer.
///
/// Full attention: `(N_t + N_v)^2 d + (N_t + N_v) d^2`.
/// Masked attention charges text rows against the whole sequence and each
/// vision row against its own image block only:
/// `(N_t (N_t + N_v) + sum_i n_i^2) d + (N_t + N_v) d^2`.
/// The attention terms use the full (non-causal) pair convention.
pub fn flops_per_layer(layout: &FlopsLayout, params: &FlopsParams, masked: bool) -> FlopsBreakdown {
    let d = params.hidden_dim;
    let total = layout.seq_len();
    let attention = if masked {
        (layout.text_tokens * total + layout.sum_span_sq) * d
    } else {
        total * total * d
    };
    FlopsBreakdown {
        attention,
        mlp: total * d * d,
    }
}

/// Whole-model FLOPs for a layer-windowed masking scheme: masked layers
/// use the masked formula, the rest full attention.
pub fn flops_total(
    layout: &FlopsLayout,
    params: &FlopsParams,
    masked_layers: &BTreeSet<usize>,
) -> f64 {
    let full = flops_per_layer(layout, params, false).total();
    let masked = flops_per_layer(layout, params, true).total();
    (0..params.layers)
        .map(|l| if masked_layers.contains(&l) { masked } else { full })
        .sum()
}

/// Allowed attention pairs on a masked layer under the full-block
/// convention: every text row sees all L columns and every vision row its
/// whole image span, with no causal truncation. This is the integer
/// counterpart of the masked attention term `N_t (N_t + N_v) + sum n_i^2`.
pub fn masked_pair_count(layout: &TokenLayout) -> u128 {
    let text = layout.text_len() as u128;
    let total = layout.total_len() as u128;
    let span_sq: u128 = layout
        .image_spans()
        .iter()
        .map(|s| (s.len as u128) * (s.len as u128))
        .sum();
    text * total + span_sq
}

/// Allowed pairs with full attention under the same convention: L^2.
pub fn full_pair_count(layout: &TokenLayout) -> u128 {
    let total = layout.total_len() as u128;
    total * total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_layout() -> FlopsLayout {
        // Corpus averages: 10.4 images x 730 vision tokens, 17.4 text tokens.
        FlopsLayout::uniform(17.4, 10.4, 730.0).unwrap()
    }

    #[test]
    fn small_model_flops_match_reported_numbers() {
        let params = FlopsParams::new(896.0, 24).unwrap();
        let layout = benchmark_layout();
        let full = flops_per_layer(&layout, &params, false).total();
        let masked = flops_per_layer(&layout, &params, true).total();
        assert!((full / 1e9 - 58.0).abs() < 0.5, "full = {full:e}");
        assert!((masked / 1e9 - 11.2).abs() < 0.1, "masked = {masked:e}");
        let reduction = 100.0 * (1.0 - masked / full);
        assert!((reduction - 81.0).abs() <= 1.0, "reduction = {reduction}");
    }

    #[test]
    fn mid_model_flops_match_reported_numbers() {
        let params = FlopsParams::new(1536.0, 24).unwrap();
        let layout = benchmark_layout();
        let full = flops_per_layer(&layout, &params, false).total();
        let masked = flops_per_layer(&layout, &params, true).total();
        assert!((full / 1e9 - 107.0).abs() < 1.0, "full = {full:e}");
        assert!((masked / 1e9 - 26.7).abs() < 0.2, "masked = {masked:e}");
        let reduction = 100.0 * (1.0 - masked / full);
        assert!((reduction - 75.0).abs() <= 1.0, "reduction = {reduction}");
    }

    #[test]
    fn no_vision_tokens_makes_masked_equal_full() {
        let params = FlopsParams::new(896.0, 24).unwrap();
        let layout = FlopsLayout::uniform(100.0, 0.0, 0.0).unwrap();
        let full = flops_per_layer(&layout, &params, false);
        let masked = flops_per_layer(&layout, &params, true);
        assert_eq!(full, masked);
        let d = 896.0;
        assert_eq!(full.total(), 100.0 * 100.0 * d + 100.0 * d * d);
    }

    #[test]
    fn masked_never_exceeds_full() {
        let params = FlopsParams::new(64.0, 4).unwrap();
        for (nt, m, n) in [(0.0, 1.0, 8.0), (5.0, 3.0, 7.0), (100.0, 12.0, 730.0)] {
            let layout = FlopsLayout::uniform(nt, m, n).unwrap();
            let full = flops_per_layer(&layout, &params, false).total();
            let masked = flops_per_layer(&layout, &params, true).total();
            assert!(masked <= full, "nt={nt} m={m} n={n}");
        }
    }

    #[test]
    fn total_mixes_masked_and_full_layers() {
        let params = FlopsParams::new(64.0, 4).unwrap();
        let layout = FlopsLayout::uniform(3.0, 2.0, 5.0).unwrap();
        let full = flops_per_layer(&layout, &params, false).total();
        let masked = flops_per_layer(&layout, &params, true).total();
        let layers: BTreeSet<usize> = [2, 3].into_iter().collect();
        let total = flops_total(&layout, &params, &layers);
        assert!((total - (2.0 * full + 2.0 * masked)).abs() < 1e-6);
    }

    #[test]
    fn pair_count_closed_form_on_known_layout() {
        // prefix 2, spans [3, 2], suffix 1: Nt = 3, L = 8.
        let layout = TokenLayout::new(2, &[3, 2], 1).unwrap();
        assert_eq!(masked_pair_count(&layout), 3 * 8 + 9 + 4);
        assert_eq!(full_pair_count(&layout), 64);
    }
}
