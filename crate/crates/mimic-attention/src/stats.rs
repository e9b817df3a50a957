use serde::{Deserialize, Serialize};

use crate::{AttentionError, TokenLayout};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Intra- vs inter-image attention fractions for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStat {
    pub layer: usize,
    pub intra_fraction: f64,
    pub inter_fraction: f64,
}

/// Per-layer aggregation of vision-to-vision attention mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttentionStats {
    pub layers: Vec<LayerStat>,
}

/// Split each vision token's attention mass over vision columns into
/// same-image (intra) and other-image (inter) fractions, averaged over
/// the vision rows that carry any vision mass.
///
/// `attn` holds one row-stochastic L x L matrix per layer, already subject
/// to whatever (causal) masking produced it; rows must sum to 1 within
/// 1e-6. With `count_self_as_intra` disabled, a token's own position is
/// dropped before renormalizing, which also drops first-token rows whose
/// only vision mass is themselves.
pub fn inter_intra_stats(
    attn: &[Vec<Vec<f64>>],
    layout: &TokenLayout,
    count_self_as_intra: bool,
) -> Result<LayerAttentionStats, AttentionError> {
    let len = layout.total_len();
    if layout.vision_len() == 0 {
        return Err(AttentionError::InvalidInput(
            "layout has no vision tokens to aggregate".into(),
        ));
    }
    let mut layers = Vec::with_capacity(attn.len());
    for (layer_idx, matrix) in attn.iter().enumerate() {
        if matrix.len() != len || matrix.iter().any(|row| row.len() != len) {
            return Err(AttentionError::InvalidInput(format!(
                "layer {layer_idx}: expected a {len}x{len} matrix"
            )));
        }
        let mut intra_sum = 0.0;
        let mut rows_counted = 0usize;
        for (row_idx, row) in matrix.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(AttentionError::NonStochasticRow {
                    layer: layer_idx,
                    row: row_idx,
                    sum,
                });
            }
            let Some(own_span) = layout.span_of(row_idx) else {
                continue; // text rows are not aggregated
            };
            let own = layout.image_spans()[own_span];
            let mut vision_mass = 0.0;
            let mut intra_mass = 0.0;
            for (col, &value) in row.iter().enumerate() {
                if !layout.is_vision(col) {
                    continue;
                }
                if !count_self_as_intra && col == row_idx {
                    continue;
                }
                vision_mass += value;
                if own.contains(col) {
                    intra_mass += value;
                }
            }
            if vision_mass > 0.0 {
                intra_sum += intra_mass / vision_mass;
                rows_counted += 1;
            }
        }
        if rows_counted == 0 {
            return Err(AttentionError::InvalidInput(format!(
                "layer {layer_idx}: no vision row carries vision attention mass"
            )));
        }
        let intra = intra_sum / rows_counted as f64;
        layers.push(LayerStat {
            layer: layer_idx,
            intra_fraction: intra,
            inter_fraction: 1.0 - intra,
        });
    }
    Ok(LayerAttentionStats { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Uniform causal attention: row r spreads 1/(r+1) over columns 0..=r.
    fn uniform_causal(len: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|r| {
                let w = 1.0 / (r + 1) as f64;
                (0..len).map(|c| if c <= r { w } else { 0.0 }).collect()
            })
            .collect()
    }

    #[test]
    fn uniform_causal_two_images_hand_computed() {
        // 2 images x 2 tokens, no text. Per-row intra fractions are
        // 1, 1, 1/3, 1/2; mean = 0.7083...
        let layout = TokenLayout::new(0, &[2, 2], 0).unwrap();
        let stats = inter_intra_stats(&[uniform_causal(4)], &layout, true).unwrap();
        let expected = (1.0 + 1.0 + 1.0 / 3.0 + 0.5) / 4.0;
        assert!((stats.layers[0].intra_fraction - expected).abs() < 1e-12);
        assert!((stats.layers[0].intra_fraction - 0.7083).abs() < 1e-4);
        assert!(
            (stats.layers[0].intra_fraction + stats.layers[0].inter_fraction - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn block_diagonal_attention_is_fully_intra() {
        // Mass confined to each token's own span: intra fraction 1.
        let layout = TokenLayout::new(0, &[2, 2], 0).unwrap();
        let attn = vec![vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
        ]];
        let stats = inter_intra_stats(&attn, &layout, true).unwrap();
        assert_eq!(stats.layers[0].intra_fraction, 1.0);
        assert_eq!(stats.layers[0].inter_fraction, 0.0);
    }

    #[test]
    fn single_image_is_fully_intra() {
        let layout = TokenLayout::new(0, &[4], 0).unwrap();
        let stats =
            inter_intra_stats(&[uniform_causal(4), uniform_causal(4)], &layout, true).unwrap();
        for layer in &stats.layers {
            assert_eq!(layer.intra_fraction, 1.0);
        }
    }

    #[test]
    fn excluding_self_changes_first_token_rows() {
        // Row 2 (first token of image 2) only holds self-mass among vision
        // columns after the causal mask; excluding self drops it.
        let layout = TokenLayout::new(0, &[2, 2], 0).unwrap();
        let stats = inter_intra_stats(&[uniform_causal(4)], &layout, false).unwrap();
        // Contributing rows: 1 (intra 1), 2 (intra 0), 3 (intra 1/3).
        let expected = (1.0 + 0.0 + 1.0 / 3.0) / 3.0;
        assert!((stats.layers[0].intra_fraction - expected).abs() < 1e-12);
    }

    #[test]
    fn non_stochastic_row_rejected() {
        let layout = TokenLayout::new(0, &[2, 2], 0).unwrap();
        let mut attn = uniform_causal(4);
        attn[2][0] += 0.01;
        let err = inter_intra_stats(&[attn], &layout, true);
        assert!(matches!(
            err,
            Err(AttentionError::NonStochasticRow { layer: 0, row: 2, .. })
        ));
    }

    #[test]
    fn text_rows_are_ignored() {
        // Prefix text token attends everywhere available; only the vision
        // rows should shape the fractions.
        let layout = TokenLayout::new(1, &[1, 1], 0).unwrap();
        let stats = inter_intra_stats(&[uniform_causal(3)], &layout, true).unwrap();
        // Row 1 (image 0): vision mass = self only -> intra 1.
        // Row 2 (image 1): vision cols 1, 2 with equal mass -> intra 1/2.
        let expected = (1.0 + 0.5) / 2.0;
        assert!((stats.layers[0].intra_fraction - expected).abs() < 1e-12);
    }
}
