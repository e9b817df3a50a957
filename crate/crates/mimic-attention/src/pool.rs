use crate::AttentionError;

/// 1-D average pooling over a token sequence.
///
/// Consecutive non-overlapping windows of `factor` tokens are averaged
/// element-wise; a final partial window is averaged over its actual size.
/// Output length is `ceil(len / factor)`; factor 1 is the identity.
pub fn pool_tokens_1d(tokens: &[Vec<f64>], factor: usize) -> Result<Vec<Vec<f64>>, AttentionError> {
    if factor == 0 {
        return Err(AttentionError::InvalidInput(
            "pooling factor must be at least 1".into(),
        ));
    }
    let Some(first) = tokens.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    if let Some(bad) = tokens.iter().position(|t| t.len() != dim) {
        return Err(AttentionError::InvalidInput(format!(
            "token {bad} has dimension {}, expected {dim}",
            tokens[bad].len()
        )));
    }
    let mut pooled = Vec::with_capacity(tokens.len().div_ceil(factor));
    for window in tokens.chunks(factor) {
        let mut mean = vec![0.0; dim];
        for token in window {
            for (acc, &v) in mean.iter_mut().zip(token) {
                *acc += v;
            }
        }
        let inv = 1.0 / window.len() as f64;
        for acc in &mut mean {
            *acc *= inv;
        }
        pooled.push(mean);
    }
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn factor_one_is_identity() {
        let tokens = scalars(&[1.0, 2.0, 3.0]);
        assert_eq!(pool_tokens_1d(&tokens, 1).unwrap(), tokens);
    }

    #[test]
    fn windows_average() {
        let tokens = scalars(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            pool_tokens_1d(&tokens, 2).unwrap(),
            scalars(&[1.5, 3.5])
        );
    }

    #[test]
    fn partial_window_uses_actual_size() {
        let tokens = scalars(&[1.0, 2.0, 3.0, 4.0, 10.0]);
        assert_eq!(
            pool_tokens_1d(&tokens, 2).unwrap(),
            scalars(&[1.5, 3.5, 10.0])
        );
    }

    #[test]
    fn empty_sequence_pools_to_empty() {
        assert!(pool_tokens_1d(&[], 4).unwrap().is_empty());
    }

    #[test]
    fn zero_factor_rejected() {
        assert!(pool_tokens_1d(&scalars(&[1.0]), 0).is_err());
    }

    #[test]
    fn ragged_tokens_rejected() {
        let tokens = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(pool_tokens_1d(&tokens, 2).is_err());
    }
}
