use std::fmt;

/// Errors from layout construction, masking, pooling, and attention stats.
#[derive(Debug)]
pub enum AttentionError {
    /// A layout or matrix argument was structurally invalid.
    InvalidInput(String),
    /// Layer index outside `[0, total_layers)`.
    LayerOutOfRange { layer: usize, total_layers: usize },
    /// An attention row did not sum to 1 within tolerance.
    NonStochasticRow {
        layer: usize,
        row: usize,
        sum: f64,
    },
}

impl fmt::Display for AttentionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            AttentionError::LayerOutOfRange {
                layer,
                total_layers,
            } => write!(
                f,
                "layer {layer} out of range for a {total_layers}-layer model"
            ),
            AttentionError::NonStochasticRow { layer, row, sum } => write!(
                f,
                "attention row {row} of layer {layer} sums to {sum}, expected 1 within 1e-6"
            ),
        }
    }
}

impl std::error::Error for AttentionError {}
