//! Surrogate construction for forget targets.

use thiserror::Error;

use crate::data::{attribute_mask, mirror, render_glyph, Dataset, GlyphAttribute, GLYPH_SIDE};
use crate::rng::{Purpose, StreamRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("strategy {strategy} is not available for the {dataset} dataset")]
    StrategyDatasetMismatch { strategy: &'static str, dataset: &'static str },
    #[error("invalid surrogate spec: {0}")]
    InvalidSpec(String),
    #[error("forget target is not a member of the dataset")]
    TargetNotInDataset,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurrogateStrategy {
    /// Horizontal mirror (negated first coordinate for 2-D points).
    Flip,
    /// Additive Gaussian noise, clamped to the data range when there is one.
    AddNoise { sigma: f64 },
    /// Moves a mixture point to the nearest other mode, keeping its offset.
    ModeShift,
    /// Re-renders the glyph with one attribute set to `value`. `strength` in
    /// (0, 1] blends target and fully edited glyph inside the attribute mask.
    AttributeEdit { attribute: GlyphAttribute, value: i32, strength: f64 },
}

impl SurrogateStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SurrogateStrategy::Flip => "flip",
            SurrogateStrategy::AddNoise { .. } => "add_noise",
            SurrogateStrategy::ModeShift => "mode_shift",
            SurrogateStrategy::AttributeEdit { .. } => "attribute_edit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSpec {
    pub strategy: SurrogateStrategy,
    pub seed: u64,
}

impl SurrogateSpec {
    pub fn validate(&self, dataset: &Dataset) -> Result<(), SurrogateError> {
        let mismatch = || SurrogateError::StrategyDatasetMismatch { strategy: self.strategy.name(), dataset: dataset.name() };
        match (&self.strategy, dataset) {
            (SurrogateStrategy::AddNoise { sigma }, _) if !(*sigma > 0.0) => {
                Err(SurrogateError::InvalidSpec(format!("noise sigma must be positive, got {sigma}")))
            }
            (SurrogateStrategy::ModeShift, Dataset::Glyphs(_)) => Err(mismatch()),
            (SurrogateStrategy::AttributeEdit { .. }, Dataset::Mixture { .. }) => Err(mismatch()),
            (SurrogateStrategy::AttributeEdit { attribute, value, strength }, _) => {
                if !attribute.range().contains(value) {
                    return Err(SurrogateError::InvalidSpec(format!("{} value {value} out of range", attribute.name())));
                }
                if !(*strength > 0.0 && *strength <= 1.0) {
                    return Err(SurrogateError::InvalidSpec(format!("edit strength {strength} outside (0, 1]")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Builds the surrogate `x0_s` for the forget target `x0_f`.
pub fn make_surrogate(x0_f: &[f64], spec: &SurrogateSpec, dataset: &Dataset) -> Result<Vec<f64>, SurrogateError> {
    spec.validate(dataset)?;
    if x0_f.len() != dataset.dim() {
        return Err(SurrogateError::DimensionMismatch { expected: dataset.dim(), found: x0_f.len() });
    }
    match (spec.strategy, dataset) {
        (SurrogateStrategy::Flip, Dataset::Glyphs(_)) => Ok(mirror(x0_f, GLYPH_SIDE)),
        (SurrogateStrategy::Flip, Dataset::Mixture { .. }) => Ok(vec![-x0_f[0], x0_f[1]]),
        (SurrogateStrategy::AddNoise { sigma }, _) => {
            let mut rng = StreamRng::new(spec.seed, Purpose::Surrogate);
            let mut out: Vec<f64> = x0_f.iter().map(|x| x + sigma * rng.normal()).collect();
            if let Some((lo, hi)) = dataset.range() {
                out.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
            }
            Ok(out)
        }
        (SurrogateStrategy::ModeShift, Dataset::Mixture { spec: mixture, .. }) => Ok(mixture.shift_to_neighbor(x0_f)),
        (SurrogateStrategy::AttributeEdit { attribute, value, strength }, Dataset::Glyphs(glyphs)) => {
            let index = glyphs.images().iter().position(|g| g == x0_f).ok_or(SurrogateError::TargetNotInDataset)?;
            let attrs = glyphs.attrs(index);
            if attrs.get(attribute) == value {
                return Err(SurrogateError::InvalidSpec(format!("target already has {} = {value}", attribute.name())));
            }
            let edited = render_glyph(&attrs.with(attribute, value).expect("validated range"));
            let mask = attribute_mask(attrs, attribute, value);
            Ok(x0_f
                .iter()
                .zip(&edited)
                .zip(&mask)
                .map(|((x, e), m)| if *m { x + strength * (e - x) } else { *x })
                .collect())
        }
        _ => unreachable!("rejected by validate"),
    }
}
