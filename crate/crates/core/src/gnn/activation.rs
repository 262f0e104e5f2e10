use crate::genome::Activation;

/// Slope of the leaky ReLU node activation.
pub const LEAKY_SLOPE: f64 = 0.01;

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn apply(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Sigmoid => sigmoid(x),
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE * x
            }
        }
        Activation::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        Activation::Softplus => softplus(x),
        Activation::Identity => x,
    }
}

/// Derivative given the pre-activation `x` and the output `y = apply(x)`.
pub fn derivative(act: Activation, x: f64, y: f64) -> f64 {
    match act {
        Activation::Sigmoid => y * (1.0 - y),
        Activation::Tanh => 1.0 - y * y,
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::LeakyRelu => {
            if x > 0.0 {
                1.0
            } else {
                LEAKY_SLOPE
            }
        }
        Activation::Elu => {
            if x > 0.0 {
                1.0
            } else {
                y + 1.0
            }
        }
        Activation::Softplus => sigmoid(x),
        Activation::Identity => 1.0,
    }
}
