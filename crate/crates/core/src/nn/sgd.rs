use super::{GradientSet, Mlp, NnError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub gradient_clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            gradient_clip_norm: Some(10.0),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidArchitecture(
                "learning_rate must be > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidArchitecture(
                "momentum must be in [0, 1)".into(),
            ));
        }
        if let Some(c) = self.gradient_clip_norm {
            if !(c > 0.0) {
                return Err(NnError::InvalidArchitecture("clip norm must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and optional global-norm clipping.
///
/// `velocity <- momentum * velocity + grad; params <- params - lr * velocity`
#[derive(Debug, Clone)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: GradientSet,
}

impl Sgd {
    pub fn new(config: SgdConfig, params: &Mlp) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: GradientSet::zeros_like(params),
        })
    }

    pub fn velocity(&self) -> &GradientSet {
        &self.velocity
    }

    /// Applies one descent step. A non-finite gradient leaves `params` and the
    /// momentum buffers untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &GradientSet) -> Result<(), NnError> {
        if !grads.shape_matches(params) || !self.velocity.shape_matches(params) {
            return Err(NnError::InvalidArchitecture(
                "gradient shape does not match parameters".into(),
            ));
        }
        if !grads.params_finite() {
            return Err(NnError::Divergence("gradient"));
        }
        let scale = match self.config.gradient_clip_norm {
            Some(clip) => {
                let norm = grads.param_norm();
                if norm > clip {
                    clip / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let mu = self.config.momentum;
        for (v, g) in self
            .velocity
            .weights
            .iter_mut()
            .chain(self.velocity.biases.iter_mut())
            .zip(grads.weights.iter().chain(&grads.biases))
        {
            v.iter_mut()
                .zip(g)
                .for_each(|(v, &g)| *v = mu * *v + scale * g);
        }
        params.apply_step(&self.velocity, self.config.learning_rate);
        if !params.all_finite() {
            return Err(NnError::Divergence("parameter"));
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.velocity.fill_zero();
    }
}
