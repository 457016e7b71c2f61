use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{dot, norm2};

const MAX_ITERS: usize = 3000;
const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// False when the power iteration hit its cap and `value` is the
    /// Frobenius-norm bound instead.
    pub converged: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded random start.
pub fn estimate_lipschitz(
    op: impl Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    seed: u64,
) -> LipschitzEstimate {
    if dim == 0 {
        return LipschitzEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut lambda = 0.0;
    for it in 1..=MAX_ITERS {
        let y = op(&x);
        let next = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return LipschitzEstimate {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if it > 1 && (next - lambda).abs() <= REL_TOL * next.abs() {
            return LipschitzEstimate {
                value: next.max(lambda),
                converged: true,
                iterations: it,
            };
        }
        lambda = next;
    }

    // ‖A‖₂ <= ‖A‖_F, computed one column at a time
    let mut frob = 0.0;
    let mut e = vec![0.0; dim];
    for i in 0..dim {
        e[i] = 1.0;
        frob += op(&e).iter().map(|v| v * v).sum::<f64>();
        e[i] = 0.0;
    }
    LipschitzEstimate {
        value: frob.sqrt(),
        converged: false,
        iterations: MAX_ITERS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spectrum() {
        let est = estimate_lipschitz(|x| x.to_vec(), 5, 1);
        assert!(est.converged);
        assert!((est.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_spectrum() {
        let d = [1.0, 2.0, 3.0];
        let est = estimate_lipschitz(|x| x.iter().zip(&d).map(|(a, b)| a * b).collect(), 3, 7);
        assert!((est.value - 3.0).abs() < 0.03);
    }

    #[test]
    fn zero_operator() {
        let est = estimate_lipschitz(|x| vec![0.0; x.len()], 4, 0);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let d = [0.5, 2.0, 1.9, 0.1];
        let op = |x: &[f64]| x.iter().zip(&d).map(|(a, b)| a * b).collect::<Vec<_>>();
        assert_eq!(estimate_lipschitz(op, 4, 3), estimate_lipschitz(op, 4, 3));
    }
}
