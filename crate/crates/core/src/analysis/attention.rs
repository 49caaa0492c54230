use crate::model::LayerAttention;
use crate::nn::Real;

/// Elementwise maximum over heads of one block's post-softmax attention:
/// an `n x n` matrix with entries in [0, 1].
pub fn attention_summary<E: Real>(attention: &LayerAttention<E>) -> Vec<f64> {
    let n = attention.width;
    let mut out = vec![f64::NEG_INFINITY; n * n];
    for head in attention.data.chunks(n * n) {
        for (o, &v) in out.iter_mut().zip(head.iter()) {
            *o = o.max(v.to_f64());
        }
    }
    out
}

/// How strongly the answer block attends along the reversal anti-diagonal:
/// mean attention within `bandwidth` of the anti-diagonal (answer slot `j`
/// looking at input slot `input_len - 1 - j`), divided by the whole-matrix
/// mean. A visible X pattern pushes this well above 1.
pub fn anti_diagonal_ratio(
    summary: &[f64],
    width: usize,
    input_len: usize,
    answer_len: usize,
    bandwidth: usize,
) -> f64 {
    assert_eq!(summary.len(), width * width);
    assert!(input_len + answer_len <= width);
    let matrix_mean = summary.iter().sum::<f64>() / summary.len() as f64;
    let mut band_sum = 0.0;
    let mut band_count = 0usize;
    for j in 0..answer_len {
        let query = input_len + j;
        // The reversal source for answer slot j, clamped into the input.
        let center = input_len.saturating_sub(1 + j.min(input_len - 1));
        let lo = center.saturating_sub(bandwidth);
        let hi = (center + bandwidth).min(input_len - 1);
        for key in lo..=hi {
            band_sum += summary[query * width + key];
            band_count += 1;
        }
    }
    if band_count == 0 || matrix_mean == 0.0 {
        return 0.0;
    }
    (band_sum / band_count as f64) / matrix_mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(heads: usize, width: usize, data: Vec<f64>) -> LayerAttention<f64> {
        LayerAttention { block: 0, heads, width, data }
    }

    #[test]
    fn single_head_summary_is_that_head() {
        let data = vec![0.25, 0.75, 0.5, 0.5];
        let att = layer(1, 2, data.clone());
        assert_eq!(attention_summary(&att), data);
    }

    #[test]
    fn summary_is_monotone_in_heads() {
        let one = layer(1, 2, vec![0.25, 0.75, 0.5, 0.5]);
        let two = layer(2, 2, vec![0.25, 0.75, 0.5, 0.5, 0.9, 0.1, 0.2, 0.8]);
        let s1 = attention_summary(&one);
        let s2 = attention_summary(&two);
        for (a, b) in s1.iter().zip(s2.iter()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn x_pattern_scores_high_uniform_scores_one() {
        // width 8 = 4 input + 4 answer slots; build the reversal pattern.
        let (input_len, answer_len, width) = (4usize, 4usize, 8usize);
        let mut x = vec![0.01; width * width];
        for j in 0..answer_len {
            x[(input_len + j) * width + (input_len - 1 - j)] = 1.0;
        }
        let ratio = anti_diagonal_ratio(&x, width, input_len, answer_len, 1);
        assert!(ratio > 2.0, "x-pattern ratio {ratio}");

        let uniform = vec![0.125; width * width];
        let ratio = anti_diagonal_ratio(&uniform, width, input_len, answer_len, 1);
        assert!((ratio - 1.0).abs() < 1e-9, "uniform ratio {ratio}");
    }
}
