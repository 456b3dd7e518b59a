//! Quadrature rules on the reference element `[-1, 1]^d`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Rule family used to integrate over one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadKind {
    /// Tensor-product Gauss-Legendre with `n` points per axis.
    GaussLegendre(usize),
    /// Uniform Monte Carlo with `n` points total, weight = volume / n each.
    MonteCarlo { n: usize, seed: u64 },
}

/// Points (flattened, `len = n * dim`) and weights on `[-1, 1]^dim`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// 1D Gauss-Legendre abscissae/weights on [-1, 1].
fn gauss_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (p, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0_f64 / 5.0).sqrt();
            (
                vec![-a, 0.0, a],
                vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
            )
        }
        4 => (
            vec![
                -0.8611363115940526,
                -0.3399810435848563,
                0.3399810435848563,
                0.8611363115940526,
            ],
            vec![
                0.3478548451374538,
                0.6521451548625461,
                0.6521451548625461,
                0.3478548451374538,
            ],
        ),
        5 => (
            vec![
                -0.9061798459386640,
                -0.5384693101056831,
                0.0,
                0.5384693101056831,
                0.9061798459386640,
            ],
            vec![
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
        0 => return Err(Error::invalid("quadrature order must be at least 1")),
        other => {
            return Err(Error::invalid(format!(
                "Gauss-Legendre order {other} not supported (max 5)"
            )))
        }
    };
    Ok((p, w))
}

/// Builds a rule of the given kind on `[-1, 1]^dim`.
pub fn quadrature(kind: QuadKind, dim: usize) -> Result<QuadratureRule> {
    match kind {
        QuadKind::GaussLegendre(n) => {
            let (p1, w1) = gauss_1d(n)?;
            let total = p1.len().pow(dim as u32);
            let mut points = Vec::with_capacity(total * dim);
            let mut weights = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rest = flat;
                let mut w = 1.0;
                for _ in 0..dim {
                    let k = rest % p1.len();
                    rest /= p1.len();
                    points.push(p1[k]);
                    w *= w1[k];
                }
                weights.push(w);
            }
            Ok(QuadratureRule {
                dim,
                points,
                weights,
            })
        }
        QuadKind::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::invalid("Monte Carlo point count must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let volume = 2.0_f64.powi(dim as i32);
            let mut points = Vec::with_capacity(n * dim);
            for _ in 0..n * dim {
                points.push(rng.gen_range(-1.0..1.0));
            }
            Ok(QuadratureRule {
                dim,
                points,
                weights: vec![volume / n as f64; n],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss2_points_and_weights_on_square() {
        let rule = quadrature(QuadKind::GaussLegendre(2), 2).unwrap();
        assert_eq!(rule.len(), 4);
        let a = 1.0 / 3.0_f64.sqrt();
        for i in 0..4 {
            let p = rule.point(i);
            assert_abs_diff_eq!(p[0].abs(), a, epsilon = 1e-15);
            assert_abs_diff_eq!(p[1].abs(), a, epsilon = 1e-15);
            assert_abs_diff_eq!(rule.weights[i], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn gauss2_integrates_u2v2_exactly() {
        let rule = quadrature(QuadKind::GaussLegendre(2), 2).unwrap();
        let integral: f64 = (0..rule.len())
            .map(|i| {
                let p = rule.point(i);
                rule.weights[i] * p[0] * p[0] * p[1] * p[1]
            })
            .sum();
        assert_abs_diff_eq!(integral, 4.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss2_exact_for_monomials_up_to_degree_three() {
        let rule = quadrature(QuadKind::GaussLegendre(2), 2).unwrap();
        for px in 0..=3usize {
            for py in 0..=3usize {
                if px + py > 3 {
                    continue;
                }
                let integral: f64 = (0..rule.len())
                    .map(|i| {
                        let p = rule.point(i);
                        rule.weights[i] * p[0].powi(px as i32) * p[1].powi(py as i32)
                    })
                    .sum();
                let exact_1d = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let exact = exact_1d(px) * exact_1d(py);
                assert_abs_diff_eq!(integral, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_weights_sum_to_reference_volume() {
        let rule = quadrature(QuadKind::MonteCarlo { n: 37, seed: 3 }, 3).unwrap();
        let sum: f64 = rule.weights.iter().sum();
        assert_abs_diff_eq!(sum, 8.0, epsilon = 1e-12);
        assert_eq!(rule.len(), 37);
    }

    #[test]
    fn zero_points_rejected() {
        assert!(quadrature(QuadKind::GaussLegendre(0), 2).is_err());
        assert!(quadrature(QuadKind::MonteCarlo { n: 0, seed: 0 }, 2).is_err());
    }
}
