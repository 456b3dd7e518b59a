//! Gaussian kernel machinery for the non-boundary-critical state dimensions:
//! evaluation, gradients, and the closed-form main-term reductions of every
//! kernel integral needed by hybrid assembly.
//!
//! With per-axis lengthscales `kappa_j` and supports `xi_t`, all pairwise
//! integrals factor through the Gaussian product overlap
//!
//! ```text
//! P(t,l) = c^2 * prod_j( sqrt(pi) kappa_j ) * exp( -1/4 sum_j (d_j/kappa_j)^2 )
//! ```
//!
//! where `d = xi_l - xi_t`. The gradient-bearing reductions scale `P` by the
//! per-axis factor `w_j = d_j / (2 kappa_j^2)`:
//!
//! - kernel x kernel        -> P
//! - kernel x grad(kernel)  -> P * w      (gradient acting on the `l` kernel)
//! - grad x grad, main term -> P * w' D w
//!
//! The grad-grad form keeps only the separation-quadratic main term, so it
//! vanishes on the diagonal and is nonnegative for positive semidefinite
//! coefficient blocks. The degenerate case of zero kernel dimensions with
//! `c = 1` makes every reduction the identity, which recovers pure-mesh
//! Galerkin assembly from the hybrid path.

use crate::error::{Error, Result};

/// Gaussian kernel basis over the non-boundary-critical dimensions.
#[derive(Debug, Clone)]
pub struct KernelSet {
    /// Supporting states, `n2` rows of `d1` components.
    supports: Vec<Vec<f64>>,
    /// Per-axis positive lengthscales (d1 entries).
    lengthscales: Vec<f64>,
    /// Single normalizing constant for the d1-dimensional kernel.
    normalizer: f64,
}

impl KernelSet {
    pub fn new(supports: Vec<Vec<f64>>, lengthscales: Vec<f64>, normalizer: f64) -> Result<Self> {
        if supports.is_empty() {
            return Err(Error::invalid("kernel set needs at least one support"));
        }
        let d1 = lengthscales.len();
        for s in &supports {
            if s.len() != d1 {
                return Err(Error::invalid("support dimension mismatch"));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("supports must be finite"));
            }
        }
        if lengthscales.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::invalid("lengthscales must be positive"));
        }
        if !(normalizer > 0.0) {
            return Err(Error::invalid("normalizer must be positive"));
        }
        Ok(KernelSet {
            supports,
            lengthscales,
            normalizer,
        })
    }

    /// Normalized-Gaussian constant `prod_j 1/(sqrt(2 pi) kappa_j)`.
    pub fn density_normalizer(lengthscales: &[f64]) -> f64 {
        lengthscales
            .iter()
            .map(|k| 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * k))
            .product()
    }

    /// Kernel set with default density normalization.
    pub fn normalized(supports: Vec<Vec<f64>>, lengthscales: Vec<f64>) -> Result<Self> {
        let c = Self::density_normalizer(&lengthscales);
        Self::new(supports, lengthscales, c)
    }

    /// Degenerate constant kernel (zero kernel dimensions, single support).
    /// Every reduction becomes the identity; hybrid assembly with this set
    /// equals pure-mesh assembly.
    pub fn constant() -> Self {
        KernelSet {
            supports: vec![vec![]],
            lengthscales: vec![],
            normalizer: 1.0,
        }
    }

    /// `n2` equally spaced supports over `[-pi, pi)`.
    pub fn uniform_angle_grid(n2: usize, lengthscale: f64) -> Result<Self> {
        if n2 == 0 {
            return Err(Error::invalid("need at least one support"));
        }
        let step = 2.0 * std::f64::consts::PI / n2 as f64;
        let supports = (0..n2)
            .map(|t| vec![-std::f64::consts::PI + t as f64 * step])
            .collect();
        Self::normalized(supports, vec![lengthscale])
    }

    /// Uniform grid over the given ranges, one count per axis.
    pub fn uniform_grid(ranges: &[(f64, f64)], counts: &[usize], lengthscales: Vec<f64>) -> Result<Self> {
        if ranges.len() != counts.len() || ranges.len() != lengthscales.len() {
            return Err(Error::invalid("ranges/counts/lengthscales mismatch"));
        }
        let mut supports = vec![vec![]];
        for (axis, (&(lo, hi), &n)) in ranges.iter().zip(counts).enumerate() {
            if n == 0 {
                return Err(Error::invalid("support count must be positive"));
            }
            let step = (hi - lo) / n as f64;
            let mut next = Vec::with_capacity(supports.len() * n);
            for s in &supports {
                for k in 0..n {
                    let mut row = s.clone();
                    row.push(lo + (k as f64 + 0.5) * step);
                    next.push(row);
                }
            }
            let _ = axis;
            supports = next;
        }
        Self::normalized(supports, lengthscales)
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn support(&self, t: usize) -> &[f64] {
        &self.supports[t]
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `c * exp(-1/2 sum_j ((x_j - xi_j)/kappa_j)^2)`.
    pub fn eval(&self, xq: &[f64], t: usize) -> f64 {
        let xi = &self.supports[t];
        let mut e = 0.0;
        for j in 0..self.dim() {
            let z = (xq[j] - xi[j]) / self.lengthscales[j];
            e += z * z;
        }
        self.normalizer * (-0.5 * e).exp()
    }

    /// Componentwise `-(x - xi)/kappa^2 * k(x, xi)`.
    pub fn grad(&self, xq: &[f64], t: usize) -> Vec<f64> {
        let k = self.eval(xq, t);
        let xi = &self.supports[t];
        (0..self.dim())
            .map(|j| -(xq[j] - xi[j]) / (self.lengthscales[j] * self.lengthscales[j]) * k)
            .collect()
    }

    /// Gaussian product overlap `int k(.,xi_t) k(.,xi_l)` over all axes.
    pub fn overlap(&self, t: usize, l: usize) -> f64 {
        let mut p = self.normalizer * self.normalizer;
        let mut e = 0.0;
        for j in 0..self.dim() {
            let kappa = self.lengthscales[j];
            let d = self.supports[l][j] - self.supports[t][j];
            p *= std::f64::consts::PI.sqrt() * kappa;
            e += (d / kappa) * (d / kappa);
        }
        p * (-0.25 * e).exp()
    }

    /// Per-axis gradient weight `w_j = (xi_l - xi_t)_j / (2 kappa_j^2)`.
    pub fn grad_weight(&self, t: usize, l: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let kappa = self.lengthscales[j];
                (self.supports[l][j] - self.supports[t][j]) / (2.0 * kappa * kappa)
            })
            .collect()
    }

    /// Main-term reduction of `int grad k_t . D grad k_l` with the
    /// coefficient block frozen at the support midpoint: `P * w' D w`.
    /// `d_qq` is row-major `d1 x d1`. Vanishes exactly at `t == l`.
    pub fn int_grad_grad(&self, t: usize, l: usize, d_qq: &[f64]) -> f64 {
        let d1 = self.dim();
        debug_assert_eq!(d_qq.len(), d1 * d1);
        let w = self.grad_weight(t, l);
        let mut quad = 0.0;
        for i in 0..d1 {
            for j in 0..d1 {
                quad += w[i] * d_qq[i * d1 + j] * w[j];
            }
        }
        self.overlap(t, l) * quad
    }

    /// Reduction of `int coeff . k_t grad k_l` (gradient on the `l` kernel):
    /// `P * coeff . w`. Antisymmetric under swap of `t` and `l`.
    pub fn int_grad_kernel(&self, t: usize, l: usize, coeff: &[f64]) -> f64 {
        let w = self.grad_weight(t, l);
        let dot: f64 = coeff.iter().zip(&w).map(|(c, w)| c * w).sum();
        self.overlap(t, l) * dot
    }

    /// Vector form of the kernel/gradient reduction, `P * w`.
    pub fn int_grad_kernel_vec(&self, t: usize, l: usize) -> Vec<f64> {
        let p = self.overlap(t, l);
        self.grad_weight(t, l).iter().map(|w| p * w).collect()
    }

    /// Reduction of `int coeff . k_t k_l`: `coeff * P`. Symmetric, maximal
    /// at `t == l`.
    pub fn int_kernel_kernel(&self, t: usize, l: usize, coeff: f64) -> f64 {
        coeff * self.overlap(t, l)
    }

    /// Total kernel mass `int k(., xi_t) = c * prod_j sqrt(2 pi) kappa_j`
    /// (exactly 1 under density normalization).
    pub fn mass(&self) -> f64 {
        let mut m = self.normalizer;
        for &kappa in &self.lengthscales {
            m *= (2.0 * std::f64::consts::PI).sqrt() * kappa;
        }
        m
    }

    /// Collapses the kernel integral of a load field to evaluation at the
    /// support: returns `x_p -> f(state(xi_t, x_p))`. The full state is laid
    /// out `[mesh dims..., kernel dims...]`.
    pub fn reduce_load<'a, F>(&'a self, f: F, t: usize) -> impl Fn(&[f64]) -> f64 + 'a
    where
        F: Fn(&[f64]) -> f64 + 'a,
    {
        move |xp: &[f64]| {
            let mut state = Vec::with_capacity(xp.len() + self.dim());
            state.extend_from_slice(xp);
            state.extend_from_slice(&self.supports[t]);
            f(&state)
        }
    }

    /// Coefficients `a_t` with `sum_t a_t k(xi_s, xi_t) = value` for every
    /// support `s`, used to prescribe a constant value at a constrained mesh
    /// node across the kernel dimensions.
    pub fn dirichlet_coefficients(&self, value: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(n, n);
        for s in 0..n {
            for t in 0..n {
                gram[(s, t)] = self.eval(self.support(s), t);
            }
        }
        let rhs = nalgebra::DVector::from_element(n, value);
        gram.lu()
            .solve(&rhs)
            .map(|v| v.as_slice().to_vec())
            .ok_or_else(|| Error::Solver {
                msg: "kernel Gram matrix is singular".into(),
                residual: f64::NAN,
            })
    }

    /// Deduplicated pairwise support midpoints `(xi_t + xi_l)/2` (includes
    /// the supports themselves at `t == l`), plus the pair -> midpoint map.
    /// Components are rounded to `rounding` before exact-match dedup.
    pub fn support_midpoints(&self, rounding: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let n = self.len();
        let mut midpoints: Vec<Vec<f64>> = Vec::new();
        let mut keys: Vec<Vec<i64>> = Vec::new();
        let mut pair_to_mid = vec![0usize; n * n];
        for t in 0..n {
            for l in 0..n {
                let mid: Vec<f64> = (0..self.dim())
                    .map(|j| 0.5 * (self.supports[t][j] + self.supports[l][j]))
                    .collect();
                let key: Vec<i64> = mid.iter().map(|&v| (v / rounding).round() as i64).collect();
                let id = match keys.iter().position(|k| *k == key) {
                    Some(id) => id,
                    None => {
                        keys.push(key);
                        midpoints.push(mid);
                        midpoints.len() - 1
                    }
                };
                pair_to_mid[t * n + l] = id;
            }
        }
        (midpoints, pair_to_mid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn unit_1d(xi: &[f64]) -> KernelSet {
        // kappa = 1, normalized c = 1/sqrt(2 pi)
        KernelSet::normalized(xi.iter().map(|&x| vec![x]).collect(), vec![1.0]).unwrap()
    }

    #[test]
    fn eval_at_support_is_normalizer() {
        let ks = KernelSet::new(vec![vec![0.3]], vec![0.5], 2.0).unwrap();
        assert_abs_diff_eq!(ks.eval(&[0.3], 0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn eval_quarter_pi_offset() {
        let ks = KernelSet::new(vec![vec![0.0]], vec![PI / 4.0], 1.0).unwrap();
        assert_abs_diff_eq!(ks.eval(&[PI / 4.0], 0), (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn eval_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let ks = unit_1d(&[a, b]);
            let k_ab = ks.eval(&[a], 1);
            let k_ba = ks.eval(&[b], 0);
            assert_abs_diff_eq!(k_ab, k_ba, epsilon = 1e-15);
        }
    }

    #[test]
    fn grad_zero_at_support_and_points_toward_support() {
        let ks = unit_1d(&[0.7]);
        assert_eq!(ks.grad(&[0.7], 0), vec![0.0]);
        assert!(ks.grad(&[0.2], 0)[0] > 0.0);
        assert!(ks.grad(&[1.2], 0)[0] < 0.0);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let ks = KernelSet::normalized(vec![vec![0.4, -0.3]], vec![0.8, 1.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..100 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let g = ks.grad(&x, 0);
            for j in 0..2 {
                let mut plus = x;
                let mut minus = x;
                plus[j] += h;
                minus[j] -= h;
                let fd = (ks.eval(&plus, 0) - ks.eval(&minus, 0)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6, "axis {j}");
            }
        }
    }

    #[test]
    fn grad_grad_vanishes_on_diagonal() {
        let ks = unit_1d(&[0.0, 1.0, 2.5]);
        for t in 0..3 {
            assert_eq!(ks.int_grad_grad(t, t, &[1.0]), 0.0);
        }
    }

    #[test]
    fn grad_grad_unit_separation_closed_form() {
        // 1/(8 sqrt(pi)) * exp(-1/4) for kappa = 1, unit separation.
        let ks = unit_1d(&[0.0, 1.0]);
        let expected = (1.0 / (8.0 * PI.sqrt())) * (-0.25f64).exp();
        assert_abs_diff_eq!(ks.int_grad_grad(0, 1, &[1.0]), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.054924, epsilon = 1e-6);
    }

    #[test]
    fn grad_grad_nonnegative_for_psd_blocks() {
        let ks = KernelSet::normalized(
            vec![vec![0.0, 0.0], vec![0.7, -0.4], vec![-1.1, 0.5]],
            vec![0.9, 1.4],
        )
        .unwrap();
        // D = A' A is PSD.
        let a = [[1.0, 0.3], [-0.2, 0.8]];
        let mut d = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                d[i * 2 + j] = (0..2).map(|k| a[k][i] * a[k][j]).sum();
            }
        }
        for t in 0..3 {
            for l in 0..3 {
                assert!(ks.int_grad_grad(t, l, &d) >= 0.0);
            }
        }
    }

    #[test]
    fn grad_kernel_diagonal_zero_and_antisymmetric() {
        let ks = unit_1d(&[0.0, 0.6, 1.7]);
        assert_eq!(ks.int_grad_kernel(1, 1, &[1.0]), 0.0);
        for t in 0..3 {
            for l in 0..3 {
                let a = ks.int_grad_kernel(t, l, &[1.0]);
                let b = ks.int_grad_kernel(l, t, &[1.0]);
                assert_abs_diff_eq!(a, -b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn grad_kernel_unit_separation_matches_quadrature_oracle() {
        // Exact integral of k(x, xi_t) d/dx k(x, xi_l), computed by fine
        // midpoint quadrature, against the closed form 1/(4 sqrt(pi)) e^-1/4.
        let ks = unit_1d(&[0.0, 1.0]);
        let n = 400_000;
        let (lo, hi) = (-12.0, 13.0);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            let k_t = ks.eval(&[x], 0);
            let dk_l = ks.grad(&[x], 1)[0];
            acc += k_t * dk_l * h;
        }
        let closed = ks.int_grad_kernel(0, 1, &[1.0]);
        let expected = (1.0 / (4.0 * PI.sqrt())) * (-0.25f64).exp();
        assert_abs_diff_eq!(closed, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(closed, acc, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 0.109848, epsilon = 1e-6);
    }

    #[test]
    fn kernel_kernel_diagonal_and_decay() {
        let ks = unit_1d(&[0.0, 1.0]);
        let diag = ks.int_kernel_kernel(0, 0, 1.0);
        assert_abs_diff_eq!(diag, 1.0 / (2.0 * PI.sqrt()), epsilon = 1e-14);
        assert_abs_diff_eq!(diag, 0.282095, epsilon = 1e-6);
        let off = ks.int_kernel_kernel(0, 1, 1.0);
        assert_abs_diff_eq!(off / diag, (-0.25f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(off, ks.int_kernel_kernel(1, 0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn kernel_kernel_matches_2d_quadrature() {
        let ks = KernelSet::normalized(vec![vec![0.0, 0.0], vec![0.5, -0.3]], vec![0.6, 0.9])
            .unwrap();
        let n = 900;
        let (lo, hi) = (-7.0, 7.0);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                acc += ks.eval(&x, 0) * ks.eval(&x, 1) * h * h;
            }
        }
        assert_abs_diff_eq!(ks.int_kernel_kernel(0, 1, 1.0), acc, epsilon = 1e-6);
    }

    #[test]
    fn mass_is_one_under_density_normalization() {
        let ks = KernelSet::normalized(vec![vec![0.0, 1.0]], vec![0.4, 2.2]).unwrap();
        assert_abs_diff_eq!(ks.mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reduce_load_constant_and_coordinate_fields() {
        let ks = unit_1d(&[0.8]);
        let constant = ks.reduce_load(|_s: &[f64]| 3.5, 0);
        assert_eq!(constant(&[0.1, 0.2]), 3.5);
        // f(state) = theta, with state layout [x, y, theta].
        let theta = ks.reduce_load(|s: &[f64]| s[2], 0);
        assert_abs_diff_eq!(theta(&[0.1, 0.2]), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn reduce_load_matches_kernel_quadrature_for_small_lengthscale() {
        // A bump centered at the support: the kernel integral of f * k
        // approaches f at the support as kappa shrinks.
        let bump = |theta: f64| (-(theta - 0.5) * (theta - 0.5) / 0.08).exp();
        let f = |s: &[f64]| bump(s[2]);
        let mut errs = Vec::new();
        for &kappa in &[0.4, 0.2, 0.1] {
            let ks = KernelSet::normalized(vec![vec![0.5]], vec![kappa]).unwrap();
            let reduced = ks.reduce_load(f, 0);
            let collapsed = reduced(&[0.0, 0.0]);
            let n = 200_000;
            let h = 14.0 / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let th = -6.5 + (i as f64 + 0.5) * h;
                acc += bump(th) * ks.eval(&[th], 0) * h;
            }
            errs.push((collapsed - acc).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
    }

    #[test]
    fn constant_kernel_reductions_are_identity() {
        let ks = KernelSet::constant();
        assert_eq!(ks.dim(), 0);
        assert_eq!(ks.len(), 1);
        assert_eq!(ks.eval(&[], 0), 1.0);
        assert_eq!(ks.overlap(0, 0), 1.0);
        assert_eq!(ks.int_kernel_kernel(0, 0, 2.5), 2.5);
        assert_eq!(ks.int_grad_grad(0, 0, &[]), 0.0);
        assert_eq!(ks.mass(), 1.0);
    }

    #[test]
    fn uniform_angle_grid_spacing() {
        let ks = KernelSet::uniform_angle_grid(8, PI / 4.0).unwrap();
        assert_eq!(ks.len(), 8);
        assert_abs_diff_eq!(ks.support(0)[0], -PI, epsilon = 1e-15);
        assert_abs_diff_eq!(ks.support(1)[0] - ks.support(0)[0], PI / 4.0, epsilon = 1e-15);
        // Last support stops short of +pi.
        assert!(ks.support(7)[0] < PI);
    }

    #[test]
    fn midpoints_deduplicate() {
        let ks = unit_1d(&[0.0, PI / 2.0]);
        let (mids, map) = ks.support_midpoints(1e-12);
        let vals: Vec<f64> = mids.iter().map(|m| m[0]).collect();
        assert_eq!(vals.len(), 3);
        assert!(vals.contains(&0.0));
        assert!(vals.iter().any(|&v| (v - PI / 4.0).abs() < 1e-15));
        assert!(vals.iter().any(|&v| (v - PI / 2.0).abs() < 1e-15));
        // Pair (0,1) and (1,0) share a midpoint.
        assert_eq!(map[1], map[2]);
    }

    #[test]
    fn dirichlet_coefficients_reproduce_value_at_supports() {
        let ks = KernelSet::uniform_angle_grid(8, PI / 4.0).unwrap();
        let coeffs = ks.dirichlet_coefficients(2.0).unwrap();
        for s in 0..8 {
            let v: f64 = (0..8).map(|t| coeffs[t] * ks.eval(ks.support(s), t)).sum();
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
        }
    }
}
