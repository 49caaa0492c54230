use super::{ModelConfig, ModelError};
use crate::encodings::BaseEncoding;
use crate::nn::{ParameterStore, Real};
use rand::Rng;
use rand_distr::StandardNormal;

/// Deterministic initialization: truncated normal (resample outside two
/// sigma) with sigma = d_model^(-1/2) for projections and 0.02 for
/// embedding tables; gains one, biases and attention content/position
/// biases zero. Draw order is the fixed creation order below.
pub fn init_params<E: Real>(config: &ModelConfig, rng: &mut impl Rng) -> Result<ParameterStore<E>, ModelError> {
    config.validate()?;
    let d = config.d_model;
    let proj_sigma = (d as f64).powf(-0.5);
    let embed_sigma = 0.02;
    let mut params = ParameterStore::new();

    let normal = |shape: &[usize], sigma: f64, rng: &mut dyn rand::RngCore| -> Vec<E> {
        let numel: usize = shape.iter().product();
        (0..numel).map(|_| E::from_f64(trunc_normal(rng, sigma))).collect()
    };

    let tensor = |params: &mut ParameterStore<E>, path: String, shape: &[usize], sigma: f64, rng: &mut dyn rand::RngCore| {
        let values = normal(shape, sigma, rng);
        params.insert(&path, values, shape).expect("unique init paths");
    };
    let zeros = |params: &mut ParameterStore<E>, path: String, shape: &[usize]| {
        let numel: usize = shape.iter().product();
        params.insert(&path, vec![E::ZERO; numel], shape).expect("unique init paths");
    };
    let ones = |params: &mut ParameterStore<E>, path: String, shape: &[usize]| {
        let numel: usize = shape.iter().product();
        params.insert(&path, vec![E::ONE; numel], shape).expect("unique init paths");
    };

    tensor(&mut params, "embed.tok".into(), &[config.input_vocab, d], embed_sigma, rng);
    if config.scheme.base == BaseEncoding::Learned {
        tensor(&mut params, "embed.pos".into(), &[config.learned_table_rows(), d], embed_sigma, rng);
    }
    for b in 0..config.blocks {
        let p = format!("block.{b:02}");
        ones(&mut params, format!("{p}.ln1.gain"), &[d]);
        zeros(&mut params, format!("{p}.ln1.bias"), &[d]);
        for name in ["wq", "wk", "wv", "wo"] {
            tensor(&mut params, format!("{p}.attn.{name}"), &[d, d], proj_sigma, rng);
        }
        // No key bias: a constant added to every key shifts each softmax row
        // uniformly and cancels, so the parameter could never train.
        for name in ["bq", "bv", "bo"] {
            zeros(&mut params, format!("{p}.attn.{name}"), &[d]);
        }
        if config.scheme.base == BaseEncoding::Relative {
            tensor(&mut params, format!("{p}.attn.rel.wr"), &[d, d], proj_sigma, rng);
            zeros(&mut params, format!("{p}.attn.rel.u"), &[d]);
            zeros(&mut params, format!("{p}.attn.rel.v"), &[d]);
        }
        ones(&mut params, format!("{p}.ln2.gain"), &[d]);
        zeros(&mut params, format!("{p}.ln2.bias"), &[d]);
        tensor(&mut params, format!("{p}.mlp.w1"), &[d, config.mlp_hidden], proj_sigma, rng);
        zeros(&mut params, format!("{p}.mlp.b1"), &[config.mlp_hidden]);
        tensor(&mut params, format!("{p}.mlp.w2"), &[config.mlp_hidden, d], proj_sigma, rng);
        zeros(&mut params, format!("{p}.mlp.b2"), &[d]);
    }
    ones(&mut params, "final_ln.gain".into(), &[d]);
    zeros(&mut params, "final_ln.bias".into(), &[d]);
    // Small output head so fresh models emit near-uniform logits.
    tensor(&mut params, "head.w".into(), &[d, config.output_vocab], embed_sigma, rng);
    zeros(&mut params, "head.b".into(), &[config.output_vocab]);
    Ok(params)
}

fn trunc_normal(rng: &mut dyn rand::RngCore, sigma: f64) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        if v.abs() <= 2.0 {
            return v * sigma;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::EncodingScheme;
    use crate::rng::stream;
    use crate::tasks::TaskId;

    fn config(base: BaseEncoding, randomized: bool) -> ModelConfig {
        let spec = TaskId::ReverseString.spec();
        let mut scheme = EncodingScheme::new(base, randomized, 32, 128);
        scheme.randomized = randomized;
        ModelConfig::new(&spec, scheme, 2, 8, 40)
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = config(BaseEncoding::SinCos, false);
        let a: ParameterStore<f32> = init_params(&cfg, &mut stream(9, "init")).unwrap();
        let b: ParameterStore<f32> = init_params(&cfg, &mut stream(9, "init")).unwrap();
        assert_eq!(a.len(), b.len());
        for ((pa, ta), (pb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(pa, pb);
            for (x, y) in ta.values().iter().zip(tb.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn values_finite_and_bounded() {
        let cfg = config(BaseEncoding::Learned, true);
        let params: ParameterStore<f64> = init_params(&cfg, &mut stream(10, "init")).unwrap();
        for (_, t) in params.iter() {
            assert!(t.values().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        }
    }

    #[test]
    fn relative_has_strictly_more_parameters() {
        let sincos = config(BaseEncoding::SinCos, false);
        let relative = config(BaseEncoding::Relative, false);
        let a: ParameterStore<f32> = init_params(&sincos, &mut stream(0, "init")).unwrap();
        let b: ParameterStore<f32> = init_params(&relative, &mut stream(0, "init")).unwrap();
        let (na, nb) = (a.num_values(), b.num_values());
        assert!(nb > na, "relative {nb} <= sincos {na}");
        // Per block: wr (d*d) plus u and v (d each).
        assert_eq!(nb - na, 2 * (32 * 32 + 2 * 32));
    }
}
