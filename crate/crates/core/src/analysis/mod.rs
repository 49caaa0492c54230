//! Post-hoc diagnostics: PCA of layer activations across length regimes and
//! max-over-heads attention summaries.

mod attention;
mod pca;

pub use attention::{anti_diagonal_ratio, attention_summary};
pub use pca::{out_of_support_fraction, Pca};

use crate::harness::{HarnessError, TrainConfig};
use crate::model::{forward, Batch, CaptureOptions, LayerActivations, LayerAttention};
use crate::nn::{ParameterStore, Tape};
use crate::rng::stream_indexed;
use crate::tasks::sample_instance;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate PCA basis: {0}")]
    DegenerateBasis(String),
    #[error("capture absent: {0}")]
    CaptureAbsent(String),
    #[error(transparent)]
    Harness(#[from] Box<HarnessError>),
}

impl From<HarnessError> for AnalysisError {
    fn from(e: HarnessError) -> Self {
        AnalysisError::Harness(Box::new(e))
    }
}

/// Per-layer activations of a set of sequences at one evaluation length
/// (layer 0 = embeddings after the additive encoding, then one per block).
pub struct ActivationDump {
    pub length: usize,
    pub sequences: usize,
    pub layers: Vec<LayerActivations<f32>>,
}

/// Run `count` fresh sequences of `length` through the model and capture
/// all layer activations plus the first sequence's attention matrices.
pub fn capture_run(
    params: &ParameterStore<f32>,
    config: &TrainConfig,
    length: usize,
    count: usize,
) -> Result<(ActivationDump, Vec<LayerAttention<f32>>), AnalysisError> {
    let spec = config.task.spec();
    let model_cfg = config.model_config().map_err(Box::new)?;
    let scheme = config.encoding_scheme().map_err(Box::new)?;
    let mut content_rng = stream_indexed(config.seed, "analysis-content", length as u64);
    let mut position_rng = stream_indexed(config.seed, "analysis-positions", length as u64);
    let instances: Vec<_> = (0..count)
        .map(|_| sample_instance(&spec, length, &mut content_rng))
        .collect::<Result<_, _>>()
        .map_err(|e: crate::tasks::TaskError| Box::new(HarnessError::from(e)))?;
    let padded = spec.padded_length(length);
    let positions = scheme
        .assign_positions(padded, &mut position_rng)
        .map_err(|e| Box::new(HarnessError::from(e)))?;
    let batch = Batch::from_instances(&spec, &instances, positions)
        .map_err(|e| Box::new(HarnessError::from(e)))?;
    let mut tape: Tape<f32> = Tape::new();
    let bound = params.bind(&mut tape);
    let opts = CaptureOptions { activations: true, attention: true, ..CaptureOptions::default() };
    let out = forward(&mut tape, &bound, &model_cfg, &batch, &opts)
        .map_err(|e| Box::new(HarnessError::from(e)))?;
    Ok((
        ActivationDump { length, sequences: count, layers: out.capture.activations },
        out.capture.attention,
    ))
}

/// 2D coordinates of fit- and projection-regime activations for one layer,
/// under the basis fitted on the fit regime only.
pub struct LayerProjection {
    pub layer: usize,
    pub fit_coords: Vec<(f64, f64)>,
    pub project_coords: Vec<(f64, f64)>,
    pub out_of_support_fraction: f64,
}

/// Fit a (non-whitened) 2D PCA per layer on the `fit` dump and project both
/// dumps with the same transformation.
pub fn pca_fit_project(
    fit: &ActivationDump,
    project: &ActivationDump,
) -> Result<Vec<LayerProjection>, AnalysisError> {
    if fit.layers.len() != project.layers.len() {
        return Err(AnalysisError::CaptureAbsent(format!(
            "layer count mismatch: {} vs {}",
            fit.layers.len(),
            project.layers.len()
        )));
    }
    let mut out = Vec::with_capacity(fit.layers.len());
    for (f, p) in fit.layers.iter().zip(project.layers.iter()) {
        let d = f.d_model;
        let fit_rows: Vec<f64> = f.data.iter().map(|&v| v as f64).collect();
        let proj_rows: Vec<f64> = p.data.iter().map(|&v| v as f64).collect();
        let pca = Pca::fit(&fit_rows, fit_rows.len() / d, d)?;
        let fit_coords = pca.project(&fit_rows, d);
        let project_coords = pca.project(&proj_rows, d);
        let oos = out_of_support_fraction(&fit_coords, &project_coords, 0.1);
        out.push(LayerProjection { layer: f.layer, fit_coords, project_coords, out_of_support_fraction: oos });
    }
    Ok(out)
}
