use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
    Sin,
    /// Exact GELU, `x Phi(x)`.
    Gelu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Self::Tanh, Self::Softplus, Self::Sin, Self::Gelu];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Softplus => "softplus",
            Self::Sin => "sin",
            Self::Gelu => "gelu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s.to_ascii_lowercase())
    }

    /// Value and first three derivatives at `x`.
    #[inline]
    pub fn eval(self, x: f64) -> [f64; 4] {
        match self {
            Self::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, (6.0 * t * t - 2.0) * s]
            }
            Self::Softplus => {
                let sig = sigmoid(x);
                let d2 = sig * (1.0 - sig);
                [softplus(x), sig, d2, d2 * (1.0 - 2.0 * sig)]
            }
            Self::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            Self::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                [x * cdf, cdf + x * pdf, pdf * (2.0 - x * x), pdf * (x * x * x - 4.0 * x)]
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
