use rand::Rng;
use serde::{Deserialize, Serialize};

const U_CLAMP: f64 = 1e-12;

/// Paired training and validation weights built from one uniform draw per
/// observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrwPair {
    pub u: Vec<f64>,
    pub w_train: Vec<f64>,
    pub w_valid: Vec<f64>,
}

/// Draws `n` uniforms and forms the anti-correlated weight pair.
pub fn draw_frw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> FrwPair {
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    frw_from_uniforms(u)
}

/// `w_train = -ln u`, `w_valid = -ln(1 - u)`, each rescaled to mean one.
pub fn frw_from_uniforms(u: Vec<f64>) -> FrwPair {
    let u: Vec<f64> = u.into_iter().map(|v| v.clamp(U_CLAMP, 1.0 - U_CLAMP)).collect();
    let w_train = mean_one(u.iter().map(|v| -v.ln()).collect());
    let w_valid = mean_one(u.iter().map(|v| -(1.0 - v).ln()).collect());
    FrwPair { u, w_train, w_valid }
}

fn mean_one(w: Vec<f64>) -> Vec<f64> {
    let m = w.iter().sum::<f64>() / w.len() as f64;
    w.into_iter().map(|v| v / m).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSize {
    pub n_eff: f64,
    pub n_eff_adm: f64,
}

/// Kish effective sample size, clamped to `[2, n]` for admissibility checks.
pub fn kish_neff(w: &[f64]) -> EffectiveSize {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let n_eff = s * s / s2;
    EffectiveSize {
        n_eff,
        n_eff_adm: n_eff.max(2.0).min(w.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn symmetric_point_gives_unit_weights() {
        let f = frw_from_uniforms(vec![0.5; 6]);
        assert!(f.w_train.iter().chain(&f.w_valid).all(|w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn two_point_example() {
        let f = frw_from_uniforms(vec![0.1, 0.9]);
        let raw = [-(0.1f64).ln(), -(0.9f64).ln()];
        assert!((raw[0] - 2.302585).abs() < 1e-6 && (raw[1] - 0.105361).abs() < 1e-6);
        let m = (raw[0] + raw[1]) / 2.0;
        for i in 0..2 {
            assert!((f.w_train[i] - raw[i] / m).abs() < 1e-12);
            assert!((f.w_valid[i] - f.w_train[1 - i]).abs() < 1e-12);
        }
        assert!((f.w_train.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_uniforms_stay_finite() {
        let f = frw_from_uniforms(vec![0.0, 1.0, 0.3]);
        assert!(f.w_train.iter().chain(&f.w_valid).all(|w| w.is_finite() && *w > 0.0));
    }

    #[test]
    fn kish_examples() {
        let e = kish_neff(&[1.0; 4]);
        assert_eq!((e.n_eff, e.n_eff_adm), (4.0, 4.0));
        let e = kish_neff(&[1.5, 0.5]);
        assert!((e.n_eff - 1.6).abs() < 1e-12);
        assert_eq!(e.n_eff_adm, 2.0);
    }

    #[test]
    fn weights_are_anti_correlated() {
        let mut neg = 0;
        for s in 0..1000 {
            let f = draw_frw(30, &mut substream(3, s));
            let (a, b) = (&f.w_train, &f.w_valid);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - 1.0) * (y - 1.0)).sum();
            neg += (cov < 0.0) as usize;
        }
        assert_eq!(neg, 1000);
    }
}
