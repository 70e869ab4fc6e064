use serde::Serialize;
use tch::{Kind, Reduction, Tensor};

use crate::config::PerceptualLoss;
use crate::{Error, Result};

/// Clamp for the logs of the probability form of the decode loss.
pub const PROB_EPS: f64 = 1e-7;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy from decoder logits. Numerically stable form
/// used for optimisation.
pub fn decode_loss(logits: &Tensor, messages: &Tensor) -> Result<Tensor> {
    same_shape(logits, messages, "decode loss")?;
    Ok(logits.binary_cross_entropy_with_logits::<Tensor>(
        messages,
        None,
        None,
        Reduction::Mean,
    ))
}

/// Mean binary cross-entropy from probabilities with logs clamped at
/// `PROB_EPS`.
pub fn decode_loss_from_probabilities(probs: &Tensor, messages: &Tensor) -> Result<Tensor> {
    same_shape(probs, messages, "decode loss")?;
    let p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let one = p.ones_like();
    let l = -(messages * p.log() + (&one - messages) * (&one - &p).log());
    Ok(l.mean(Kind::Float))
}

pub fn l2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "L2 loss")?;
    Ok(a.mse_loss(b, Reduction::Mean))
}

pub fn perceptual(kind: PerceptualLoss, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "perceptual loss")?;
    Ok(match kind {
        PerceptualLoss::Off => Tensor::zeros([], (a.kind(), a.device())),
        PerceptualLoss::L1 => (a - b).abs().mean(a.kind()),
    })
}

/// The five weighted terms of the stage 2 and 3 objective.
#[derive(Debug)]
pub struct LossTerms {
    pub decode: Tensor,
    pub raw_l2: Tensor,
    pub rgb_l2: Tensor,
    pub perceptual: Tensor,
    /// Negated mean critic score of the encoded images.
    pub critic: Tensor,
}

/// Scalar snapshot of `LossTerms` for telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossValues {
    pub decode: f64,
    pub raw_l2: f64,
    pub rgb_l2: f64,
    pub perceptual: f64,
    pub critic: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn total(&self, lambda: &[f64; 5]) -> Tensor {
        &self.decode * lambda[0]
            + &self.raw_l2 * lambda[1]
            + &self.rgb_l2 * lambda[2]
            + &self.perceptual * lambda[3]
            + &self.critic * lambda[4]
    }

    pub fn values(&self, lambda: &[f64; 5]) -> LossValues {
        let v = |t: &Tensor| t.double_value(&[]);
        LossValues {
            decode: v(&self.decode),
            raw_l2: v(&self.raw_l2),
            rgb_l2: v(&self.rgb_l2),
            perceptual: v(&self.perceptual),
            critic: v(&self.critic),
            total: v(&self.total(lambda)),
        }
    }
}

/// Wasserstein critic loss: score of encoded minus score of cover.
pub fn critic_loss(encoded_scores: &Tensor, cover_scores: &Tensor) -> Tensor {
    encoded_scores.mean(Kind::Float) - cover_scores.mean(Kind::Float)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Device;

    fn scalar_bce(p: &[f64], m: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&p, &m) in p.iter().zip(m) {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            s -= m * p.ln() + (1.0 - m) * (1.0 - p).ln();
        }
        s / p.len() as f64
    }

    #[test]
    fn exact_probabilities_give_zero_loss() {
        let m = Tensor::from_slice(&[0f32, 1., 1., 0.]).view([1, 4]);
        let l = decode_loss_from_probabilities(&m, &m).unwrap().double_value(&[]);
        assert!(l < 1e-6, "{l}");
    }

    #[test]
    fn half_probabilities_give_ln_two() {
        let m = Tensor::from_slice(&[0f32, 1., 1., 0.]).view([1, 4]);
        let p = m.full_like(0.5);
        let l = decode_loss_from_probabilities(&p, &m).unwrap().double_value(&[]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-6);
        let z = m.zeros_like();
        let l = decode_loss(&z, &m).unwrap().double_value(&[]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn both_forms_match_a_scalar_oracle() {
        tch::manual_seed(5);
        let logits = Tensor::randn([3, 100], (Kind::Double, Device::Cpu)) * 2.0;
        let m = Tensor::rand([3, 100], (Kind::Double, Device::Cpu)).ge(0.5).to_kind(Kind::Double);
        let probs = logits.sigmoid();
        let p = Vec::<f64>::try_from(&probs.view([-1])).unwrap();
        let mv = Vec::<f64>::try_from(&m.view([-1])).unwrap();
        let want = scalar_bce(&p, &mv);
        let a = decode_loss(&logits, &m).unwrap().double_value(&[]);
        let b = decode_loss_from_probabilities(&probs, &m).unwrap().double_value(&[]);
        assert!((a - want).abs() < 1e-9, "{a} vs {want}");
        assert!((b - want).abs() < 1e-6, "{b} vs {want}");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = Tensor::zeros([1, 100], (Kind::Float, Device::Cpu));
        let b = Tensor::zeros([1, 99], (Kind::Float, Device::Cpu));
        assert!(decode_loss(&a, &b).is_err());
        assert!(decode_loss_from_probabilities(&a, &b).is_err());
    }

    fn terms(decode: f64, raw: f64, rgb: f64, per: f64, critic: f64) -> LossTerms {
        let s = |v: f64| Tensor::from(v);
        LossTerms {
            decode: s(decode),
            raw_l2: s(raw),
            rgb_l2: s(rgb),
            perceptual: s(per),
            critic: s(critic),
        }
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let opts = (Kind::Double, Device::Cpu);
        let r = Tensor::rand([2, 1, 8, 8], opts);
        let i = Tensor::rand([2, 3, 8, 8], opts);
        let t = LossTerms {
            decode: Tensor::zeros([], opts),
            raw_l2: l2(&r, &r).unwrap(),
            rgb_l2: l2(&i, &i).unwrap(),
            perceptual: perceptual(PerceptualLoss::L1, &i, &i).unwrap(),
            critic: Tensor::zeros([], opts),
        };
        assert_eq!(t.total(&[2.0, 1.0, 1.0, 1.0, 1.0]).double_value(&[]), 0.0);
    }

    #[test]
    fn image_terms_add_with_their_weights() {
        let opts = (Kind::Double, Device::Cpu);
        let r = Tensor::zeros([1, 1, 4, 4], opts);
        let i = Tensor::zeros([1, 3, 4, 4], opts);
        let raw = l2(&r, &(&r + 0.1)).unwrap();
        let rgb = l2(&i, &(&i + 0.1)).unwrap();
        assert!((raw.double_value(&[]) - 0.01).abs() < 1e-12);
        let t = LossTerms {
            decode: Tensor::zeros([], opts),
            raw_l2: raw,
            rgb_l2: rgb,
            perceptual: Tensor::zeros([], opts),
            critic: Tensor::zeros([], opts),
        };
        assert!((t.total(&[2.0, 1.0, 1.0, 1.0, 1.0]).double_value(&[]) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn weighted_total_matches_recomputation() {
        let t = terms(0.3, 0.02, 0.05, 0.1, -0.7);
        let lambda = [2.0, 3.0, 5.0, 7.0, 11.0];
        let want = 2.0 * 0.3 + 3.0 * 0.02 + 5.0 * 0.05 + 7.0 * 0.1 - 11.0 * 0.7;
        let v = t.values(&lambda);
        assert!((v.total - want).abs() < 1e-12);
        assert_eq!(v.critic, -0.7);
    }

    #[test]
    fn perceptual_off_is_zero() {
        let a = Tensor::rand([1, 3, 4, 4], (Kind::Float, Device::Cpu));
        let b = a.zeros_like();
        assert_eq!(perceptual(PerceptualLoss::Off, &a, &b).unwrap().double_value(&[]), 0.0);
        assert!(perceptual(PerceptualLoss::L1, &a, &b).unwrap().double_value(&[]) > 0.0);
    }
}
