use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{AttentionError, TokenLayout, DEFAULT_MASKED_LAYERS, DEFAULT_TOTAL_LAYERS};

/// Whether vision tokens may attend to the text prefix on masked layers.
///
/// The default blocks it: on a masked layer a vision row is charged only
/// its own image block in the FLOPs model, so the mask matches that
/// accounting. `Allowed` keeps the prefix visible for experimentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionPrefixPolicy {
    Blocked,
    Allowed,
}

impl Default for VisionPrefixPolicy {
    fn default() -> Self {
        VisionPrefixPolicy::Blocked
    }
}

/// A layout plus the set of layers on which the block restriction applies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionMaskSpec {
    pub layout: TokenLayout,
    pub masked_layers: BTreeSet<usize>,
    pub total_layers: usize,
    #[serde(default)]
    pub vision_prefix: VisionPrefixPolicy,
}

impl AttentionMaskSpec {
    pub fn new(
        layout: TokenLayout,
        masked_layers: BTreeSet<usize>,
        total_layers: usize,
        vision_prefix: VisionPrefixPolicy,
    ) -> Result<Self, AttentionError> {
        if let Some(&layer) = masked_layers.iter().find(|&&l| l >= total_layers) {
            return Err(AttentionError::LayerOutOfRange {
                layer,
                total_layers,
            });
        }
        Ok(AttentionMaskSpec {
            layout,
            masked_layers,
            total_layers,
            vision_prefix,
        })
    }

    /// The default scheme: mask the deeper half of a 24-layer model.
    pub fn deep_layers(layout: TokenLayout) -> Self {
        AttentionMaskSpec {
            layout,
            masked_layers: DEFAULT_MASKED_LAYERS.collect(),
            total_layers: DEFAULT_TOTAL_LAYERS,
            vision_prefix: VisionPrefixPolicy::Blocked,
        }
    }
}

/// Dense L x L allow/block matrix. `true` means "may attend".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    len: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    fn new(len: usize) -> Self {
        MaskMatrix {
            len,
            bits: vec![false; len * len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.len + col]
    }

    fn set(&mut self, row: usize, col: usize) {
        self.bits[row * self.len + col] = true;
    }

    /// Number of allowed columns in `row`.
    pub fn allowed_in_row(&self, row: usize) -> usize {
        self.bits[row * self.len..(row + 1) * self.len]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Total allowed (row, col) pairs.
    pub fn allowed_pairs(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Run-length encode each row as `(start, len)` runs of allowed columns.
    ///
    /// This is the export format consumed by external training stacks; a
    /// causal row `r` encodes as the single run `(0, r + 1)`.
    pub fn to_rle_rows(&self) -> Vec<Vec<(usize, usize)>> {
        let mut rows = Vec::with_capacity(self.len);
        for r in 0..self.len {
            let mut runs = Vec::new();
            let mut start = None;
            for c in 0..self.len {
                match (self.allows(r, c), start) {
                    (true, None) => start = Some(c),
                    (false, Some(s)) => {
                        runs.push((s, c - s));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                runs.push((s, self.len - s));
            }
            rows.push(runs);
        }
        rows
    }
}

/// Build the attention mask for one layer.
///
/// Unmasked layers get the plain causal mask. On masked layers each vision
/// row keeps only the causal prefix of its own image span (plus the text
/// prefix when the spec allows it); text rows are causal on every layer.
pub fn build_mask(spec: &AttentionMaskSpec, layer: usize) -> Result<MaskMatrix, AttentionError> {
    if layer >= spec.total_layers {
        return Err(AttentionError::LayerOutOfRange {
            layer,
            total_layers: spec.total_layers,
        });
    }
    let len = spec.layout.total_len();
    if len == 0 {
        return Err(AttentionError::InvalidInput("empty token layout".into()));
    }
    let masked = spec.masked_layers.contains(&layer);
    let mut mask = MaskMatrix::new(len);
    for row in 0..len {
        let span = if masked { spec.layout.span_of(row) } else { None };
        match span {
            Some(i) => {
                let span = spec.layout.image_spans()[i];
                if spec.vision_prefix == VisionPrefixPolicy::Allowed {
                    for col in 0..spec.layout.prefix_text_len().min(row + 1) {
                        mask.set(row, col);
                    }
                }
                for col in span.start..=row {
                    mask.set(row, col);
                }
            }
            None => {
                for col in 0..=row {
                    mask.set(row, col);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_masking(layout: TokenLayout, layers: &[usize]) -> AttentionMaskSpec {
        AttentionMaskSpec::new(
            layout,
            layers.iter().copied().collect(),
            24,
            VisionPrefixPolicy::Blocked,
        )
        .unwrap()
    }

    #[test]
    fn single_image_masked_equals_causal() {
        // One block spanning the whole sequence: masking changes nothing.
        let layout = TokenLayout::new(0, &[5], 0).unwrap();
        let spec = spec_masking(layout, &[0]);
        let masked = build_mask(&spec, 0).unwrap();
        let causal = build_mask(&spec, 1).unwrap();
        assert_eq!(masked, causal);
    }

    #[test]
    fn two_span_masked_rows() {
        // Layout (prefix 0, spans [2, 2], suffix 0): on a masked layer
        // row 2 may see only column 2, row 3 columns 2..=3.
        let layout = TokenLayout::new(0, &[2, 2], 0).unwrap();
        let spec = spec_masking(layout, &[0]);
        let mask = build_mask(&spec, 0).unwrap();
        assert_eq!(mask.allowed_in_row(0), 1);
        assert_eq!(mask.allowed_in_row(1), 2);
        assert!(mask.allows(2, 2) && !mask.allows(2, 0) && !mask.allows(2, 1));
        assert_eq!(mask.allowed_in_row(2), 1);
        assert!(mask.allows(3, 2) && mask.allows(3, 3));
        assert_eq!(mask.allowed_in_row(3), 2);
    }

    #[test]
    fn unmasked_layer_is_plain_causal() {
        let layout = TokenLayout::new(2, &[3, 3], 1).unwrap();
        let spec = spec_masking(layout, &[5]);
        let mask = build_mask(&spec, 0).unwrap();
        for row in 0..mask.len() {
            assert_eq!(mask.allowed_in_row(row), row + 1);
        }
    }

    #[test]
    fn vision_prefix_policy_allows_prefix() {
        let layout = TokenLayout::new(2, &[2], 0).unwrap();
        let spec = AttentionMaskSpec::new(
            layout,
            [0].into_iter().collect(),
            24,
            VisionPrefixPolicy::Allowed,
        )
        .unwrap();
        let mask = build_mask(&spec, 0).unwrap();
        assert!(mask.allows(2, 0) && mask.allows(2, 1) && mask.allows(2, 2));
        assert_eq!(mask.allowed_in_row(2), 3);
        assert_eq!(mask.allowed_in_row(3), 4); // prefix (2) + own span causal (2)
    }

    #[test]
    fn masked_layer_out_of_range_rejected() {
        let layout = TokenLayout::new(0, &[2], 0).unwrap();
        let err = AttentionMaskSpec::new(
            layout,
            [24].into_iter().collect(),
            24,
            VisionPrefixPolicy::Blocked,
        );
        assert!(err.is_err());
    }

    #[test]
    fn empty_layout_is_usage_error() {
        let layout = TokenLayout::new(0, &[], 0).unwrap();
        let spec = spec_masking(layout, &[0]);
        assert!(build_mask(&spec, 0).is_err());
    }

    #[test]
    fn rle_round_trip_against_dense() {
        let layout = TokenLayout::new(1, &[3, 2], 2).unwrap();
        let spec = spec_masking(layout, &[0]);
        let mask = build_mask(&spec, 0).unwrap();
        let rle = mask.to_rle_rows();
        for (r, runs) in rle.iter().enumerate() {
            let mut dense = vec![false; mask.len()];
            for &(s, l) in runs {
                for c in s..s + l {
                    dense[c] = true;
                }
            }
            for (c, &allowed) in dense.iter().enumerate() {
                assert_eq!(allowed, mask.allows(r, c), "row {r} col {c}");
            }
        }
    }
}
