use serde::{Deserialize, Serialize};

use crate::AttentionError;

/// Contiguous run of vision-token positions produced by one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpan {
    pub start: usize,
    pub len: usize,
}

impl ImageSpan {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos >= self.start && pos < self.end()
    }
}

/// Position layout of one multi-image input sequence.
///
/// The sequence order is fixed: `prefix_text_len` text tokens, then one
/// contiguous vision span per image, then `suffix_text_len` text tokens.
/// Spans are non-overlapping and each holds at least one token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    prefix_text_len: usize,
    image_spans: Vec<ImageSpan>,
    suffix_text_len: usize,
}

impl TokenLayout {
    /// Build a layout from the text lengths and per-image token counts.
    pub fn new(
        prefix_text_len: usize,
        image_token_counts: &[usize],
        suffix_text_len: usize,
    ) -> Result<Self, AttentionError> {
        let mut spans = Vec::with_capacity(image_token_counts.len());
        let mut cursor = prefix_text_len;
        for (i, &n) in image_token_counts.iter().enumerate() {
            if n == 0 {
                return Err(AttentionError::InvalidInput(format!(
                    "image {i} has zero vision tokens"
                )));
            }
            spans.push(ImageSpan { start: cursor, len: n });
            cursor += n;
        }
        Ok(TokenLayout {
            prefix_text_len,
            image_spans: spans,
            suffix_text_len,
        })
    }

    pub fn prefix_text_len(&self) -> usize {
        self.prefix_text_len
    }

    pub fn suffix_text_len(&self) -> usize {
        self.suffix_text_len
    }

    pub fn image_spans(&self) -> &[ImageSpan] {
        &self.image_spans
    }

    pub fn image_count(&self) -> usize {
        self.image_spans.len()
    }

    /// Total text tokens (prefix plus suffix).
    pub fn text_len(&self) -> usize {
        self.prefix_text_len + self.suffix_text_len
    }

    /// Total vision tokens across all images.
    pub fn vision_len(&self) -> usize {
        self.image_spans.iter().map(|s| s.len).sum()
    }

    /// Full sequence length.
    pub fn total_len(&self) -> usize {
        self.text_len() + self.vision_len()
    }

    /// Index of the image span covering `pos`, if `pos` is a vision token.
    pub fn span_of(&self, pos: usize) -> Option<usize> {
        if pos < self.prefix_text_len {
            return None;
        }
        // Spans are sorted by start; binary search on span start.
        match self
            .image_spans
            .binary_search_by(|s| s.start.cmp(&pos))
        {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => {
                let s = &self.image_spans[i - 1];
                if s.contains(pos) {
                    Some(i - 1)
                } else {
                    None
                }
            }
        }
    }

    pub fn is_vision(&self, pos: usize) -> bool {
        self.span_of(pos).is_some()
    }
}
