use serde::{Deserialize, Serialize};

/// Extrapolation formula used after the momentum update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumForm {
    /// `y₊ = x₊ + ((t - 1)/t₊)(x₊ - x)`
    #[default]
    Standard,
    /// `y₊ = x + ((t - 1)/t₊)(x - x₊)`, the variant with the roles of the
    /// old and new point swapped.
    AsPrinted,
}

/// Momentum state for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct FistaState {
    pub t: f64,
    /// Extrapolated point where the next gradient is taken.
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl FistaState {
    pub fn new(x: Vec<f64>) -> Self {
        Self {
            t: 1.0,
            y: x.clone(),
            x,
        }
    }

    /// Drop accumulated momentum.
    pub fn restart(&mut self) {
        self.t = 1.0;
        self.y.clone_from(&self.x);
    }
}

/// One FISTA step: `x₊ = step(y)`, `t₊ = (1 + √(1 + 4t²))/2`, then extrapolate.
/// With `accelerate` off this is a plain proximal-gradient step from `x`.
pub fn fista_update(
    state: FistaState,
    accelerate: bool,
    form: MomentumForm,
    step: impl FnOnce(&[f64]) -> Vec<f64>,
) -> FistaState {
    if !accelerate {
        let x = step(&state.x);
        return FistaState {
            t: 1.0,
            y: x.clone(),
            x,
        };
    }
    let x_next = step(&state.y);
    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * state.t * state.t).sqrt());
    let beta = (state.t - 1.0) / t_next;
    let y_next = match form {
        MomentumForm::Standard => x_next
            .iter()
            .zip(&state.x)
            .map(|(&xn, &xo)| xn + beta * (xn - xo))
            .collect(),
        MomentumForm::AsPrinted => state
            .x
            .iter()
            .zip(&x_next)
            .map(|(&xo, &xn)| xo + beta * (xo - xn))
            .collect(),
    };
    FistaState {
        t: t_next,
        y: y_next,
        x: x_next,
    }
}
