//! Proper composite binary losses and their links.

use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 − PROB_CLIP]` before a link is applied.
pub const PROB_CLIP: f64 = 1e-12;

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Binary label `±1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn from_indicator(active: bool) -> Self {
        if active {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }
}

/// A strictly proper composite binary loss `φ` with invertible link `γ`.
pub trait BinaryLoss: Send + Sync {
    fn loss(&self, y: Sign, u: f64) -> f64;

    /// `∂φ(y, u)/∂u`.
    fn derivative(&self, y: Sign, u: f64) -> f64;

    fn link(&self, p: f64) -> f64;

    fn inverse_link(&self, u: f64) -> f64;

    /// `λ` for which the loss is `λ`-strongly proper composite, if known.
    fn strong_properness(&self) -> Option<f64>;

    /// `E_{y∼Bin(q)}[φ(y, u) − φ(y, γ(q))]`.
    fn pointwise_regret(&self, q: f64, u: f64) -> f64 {
        let opt = self.link(clip_probability(q));
        let r = q * (self.loss(Sign::Pos, u) - self.loss(Sign::Pos, opt))
            + (1.0 - q) * (self.loss(Sign::Neg, u) - self.loss(Sign::Neg, opt));
        r.max(0.0)
    }
}

/// `ln(1 + e^{−z})` without overflow.
pub fn softplus_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(p / (1 − p))` on the clipped probability.
pub fn logit(p: f64) -> f64 {
    let p = clip_probability(p);
    (p / (1.0 - p)).ln()
}

/// `φ_log(y, u) = ln(1 + e^{−yu})`.
pub fn logistic_loss(y: Sign, u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::NonFinite(format!("logistic loss score {u}")));
    }
    Ok(softplus_neg(y.value() * u))
}

/// Logistic loss with logit link; 4-strongly proper composite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Logistic;

impl BinaryLoss for Logistic {
    fn loss(&self, y: Sign, u: f64) -> f64 {
        softplus_neg(y.value() * u)
    }

    fn derivative(&self, y: Sign, u: f64) -> f64 {
        let t = y.value();
        -t * sigmoid(-t * u)
    }

    fn link(&self, p: f64) -> f64 {
        logit(p)
    }

    fn inverse_link(&self, u: f64) -> f64 {
        sigmoid(u)
    }

    fn strong_properness(&self) -> Option<f64> {
        Some(4.0)
    }

    /// Binary KL divergence `KL(q ‖ σ(u))`, using `ln σ(u) = −softplus(−u)`.
    fn pointwise_regret(&self, q: f64, u: f64) -> f64 {
        let ln_p = -softplus_neg(u);
        let ln_not_p = -softplus_neg(-u);
        let mut kl = 0.0;
        if q > 0.0 {
            kl += q * (q.ln() - ln_p);
        }
        if q < 1.0 {
            kl += (1.0 - q) * ((1.0 - q).ln() - ln_not_p);
        }
        kl.max(0.0)
    }
}

/// The shipped binary losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    Logistic,
}

impl LossKind {
    pub fn get(self) -> &'static dyn BinaryLoss {
        match self {
            LossKind::Logistic => &Logistic,
        }
    }
}

pub fn pointwise_binary_regret(q: f64, u: f64, loss: &dyn BinaryLoss) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("probability {q}")));
    }
    Ok(loss.pointwise_regret(q, u))
}
