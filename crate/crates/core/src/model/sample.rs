use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::forward::forward;
use crate::model::params::ParameterSet;
use crate::model::scalar::Scalar;
use crate::rng::Rng;
use crate::tokenizer::TokenId;

/// Temperature 0 selects the argmax (smallest id among ties); any other
/// value must be positive and finite.
pub fn sample_from_logits<T: Scalar>(logits: &[T], temperature: f64, rng: &mut Rng) -> Result<TokenId> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if temperature == 0.0 {
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        return Ok(TokenId(best as u32));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive (or 0 for argmax), got {temperature}")));
    }
    let max = logits.iter().map(|z| z.f64()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("logits contain no finite maximum"));
    }
    let weights: Vec<f64> = logits.iter().map(|z| ((z.f64() - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Ok(TokenId(i as u32));
            }
            u -= w;
            last_positive = i;
        }
    }
    Ok(TokenId(last_positive as u32))
}

/// Draws the token following `context` (full forward pass; use an
/// [`InferenceSession`](crate::model::infer::InferenceSession) for rollouts).
pub fn sample_next<T: Scalar>(params: &ParameterSet<T>, context: &[TokenId], rng: &mut Rng, temperature: f64) -> Result<TokenId> {
    let logits = forward(params, context)?;
    sample_from_logits(logits.row(logits.rows() - 1), temperature, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn dominant_logit_always_drawn() {
        let mut rng = seeded(1);
        let logits = [0.0f32, 50.0, 0.0, -3.0];
        for _ in 0..1000 {
            assert_eq!(sample_from_logits(&logits, 1.0, &mut rng).unwrap(), TokenId(1));
        }
    }

    #[test]
    fn argmax_convention_breaks_ties_low() {
        let mut rng = seeded(1);
        assert_eq!(sample_from_logits(&[1.0f64, 3.0, 3.0], 0.0, &mut rng).unwrap(), TokenId(1));
        assert!(sample_from_logits(&[1.0f64], -1.0, &mut rng).is_err());
        assert!(sample_from_logits(&[1.0f64], f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn two_token_frequencies() {
        // softmax(ln 3, 0) = (0.75, 0.25)
        let mut rng = seeded(42);
        let logits = [3f64.ln(), 0.0];
        let n = 10_000;
        let zeros = (0..n).filter(|_| sample_from_logits(&logits, 1.0, &mut rng).unwrap() == TokenId(0)).count();
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - 0.75).abs() < 3.0 * sigma, "{zeros}");
    }

    #[test]
    fn low_temperature_sharpens() {
        let mut rng = seeded(9);
        let logits = [1.0f64, 0.0];
        let n = 2000;
        let hot = (0..n).filter(|_| sample_from_logits(&logits, 0.05, &mut rng).unwrap() == TokenId(0)).count();
        assert!(hot > n - 5);
    }
}
