//! Galerkin assembly of the linear system `K A = F` for both the pure-mesh
//! basis and the hybrid tensor-product (kernel x polynomial) basis, plus
//! boundary-condition application by symmetric elimination.
//!
//! Hybrid entries combine mesh-direction quadrature with the kernel-direction
//! closed forms: the `qq` diffusion block uses the grad/grad main term, the
//! mixed `qp`/`pq` blocks and kernel-direction drift use the grad/kernel
//! reduction, and `pp`/drift/reaction blocks use the plain overlap. Load
//! entries collapse the kernel integral to evaluation at each support.
//!
//! Safety boundaries in Neumann mode are natural: no surface terms are
//! assembled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSet;
use crate::mesh::{Mesh, NodeLabel};
use crate::model::{CoefficientField, MAX_DIM};
use crate::quad::{quadrature, QuadKind};
use crate::solve::{solve_checked, CsrMatrix};

/// Supplies the PDE coefficient fields at a full state point
/// (mesh coordinates first, kernel coordinates after).
pub trait CoefficientProvider: Sync {
    fn eval(&self, x: &[f64]) -> CoefficientField;
}

impl<F> CoefficientProvider for F
where
    F: Fn(&[f64]) -> CoefficientField + Sync,
{
    fn eval(&self, x: &[f64]) -> CoefficientField {
        self(x)
    }
}

/// Mesh and kernel set with the flat coefficient indexing
/// `flat = dof * n2 + t`. Pure-mesh solving is the degenerate case of a
/// single constant kernel.
#[derive(Debug, Clone)]
pub struct HybridBasis {
    pub mesh: Mesh,
    pub kernels: KernelSet,
    midpoints: Vec<Vec<f64>>,
    pair_to_mid: Vec<usize>,
}

impl HybridBasis {
    pub fn new(mesh: Mesh, kernels: KernelSet) -> Self {
        let (midpoints, pair_to_mid) = kernels.support_midpoints(1e-12);
        HybridBasis {
            mesh,
            kernels,
            midpoints,
            pair_to_mid,
        }
    }

    pub fn pure_mesh(mesh: Mesh) -> Self {
        Self::new(mesh, KernelSet::constant())
    }

    /// Number of flat coefficients `M = dofs * n2`.
    pub fn size(&self) -> usize {
        self.mesh.dof_count() * self.kernels.len()
    }

    pub fn state_dim(&self) -> usize {
        self.mesh.dim() + self.kernels.dim()
    }

    pub fn flat_index(&self, dof: usize, t: usize) -> usize {
        dof * self.kernels.len() + t
    }

    /// Deduplicated support midpoints `(xi_t + xi_l)/2`.
    pub fn midpoints(&self) -> &[Vec<f64>] {
        &self.midpoints
    }

    pub fn midpoint_of_pair(&self, t: usize, l: usize) -> usize {
        self.pair_to_mid[t * self.kernels.len() + l]
    }
}

/// Boundary-condition handling at safety boundaries. The goal boundary is
/// always Dirichlet at the goal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Safety-boundary coefficients pinned to zero.
    DirichletZero,
    /// Natural boundary condition only.
    Neumann,
}

/// Assembled system before or after constraint application.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Constrained flat indices with prescribed values.
    pub dirichlet: Vec<(usize, f64)>,
}

fn check_finite(cf: &CoefficientField, element: usize) -> Result<()> {
    let d = cf.dim;
    let finite = cf.reaction.is_finite()
        && cf.source.is_finite()
        && cf.drift[..d].iter().all(|v| v.is_finite())
        && cf.diffusion[..d]
            .iter()
            .all(|row| row[..d].iter().all(|v| v.is_finite()));
    if finite {
        Ok(())
    } else {
        Err(Error::Numeric {
            element,
            msg: "non-finite coefficient value".into(),
        })
    }
}

/// Assembles the hybrid tensor-product system over all active elements.
pub fn assemble(
    basis: &HybridBasis,
    provider: &dyn CoefficientProvider,
    quad: QuadKind,
) -> Result<LinearSystem> {
    let mesh = &basis.mesh;
    let kernels = &basis.kernels;
    let d2 = mesh.dim();
    let d1 = kernels.dim();
    let n2 = kernels.len();
    let rule = quadrature(quad, d2)?;
    let m = basis.size();

    let active: Vec<usize> = (0..mesh.element_count())
        .filter(|&e| mesh.element_active(e))
        .collect();
    if active.is_empty() {
        return Err(Error::Assembly("no active elements in the domain".into()));
    }

    // Kernel-pair tables are element-independent.
    let mut overlap = vec![0.0; n2 * n2];
    let mut wvec = vec![0.0; n2 * n2 * d1.max(1)];
    for t in 0..n2 {
        for l in 0..n2 {
            overlap[t * n2 + l] = kernels.overlap(t, l);
            let w = kernels.grad_weight(t, l);
            for j in 0..d1 {
                wvec[(t * n2 + l) * d1 + j] = w[j];
            }
        }
    }
    let mass = kernels.mass();
    let spacing = mesh.spacing();
    let jac: f64 = spacing.iter().map(|h| h / 2.0).product();
    let n_loc = mesh.nodes_per_element();
    let n_mid = basis.midpoints.len();

    struct ElementBlock {
        dofs: Vec<usize>,
        /// Dense local matrix, (n_loc*n2)^2.
        k: Vec<f64>,
        /// Dense local load, n_loc*n2.
        f: Vec<f64>,
    }

    let blocks: Vec<Result<ElementBlock>> = active
        .par_iter()
        .map(|&element| -> Result<ElementBlock> {
            let nodes = mesh.element_nodes(element);
            let dofs: Vec<usize> = nodes.iter().map(|&n| mesh.dof_of_node(n)).collect();
            let origin = mesh.element_origin(element);
            let local_n = n_loc * n2;
            let mut k_loc = vec![0.0; local_n * local_n];
            let mut f_loc = vec![0.0; local_n];
            let mut coeffs: Vec<CoefficientField> = Vec::with_capacity(n_mid);
            let mut state = vec![0.0; d2 + d1];

            for g in 0..rule.len() {
                let u = rule.point(g);
                for k in 0..d2 {
                    state[k] = origin[k] + (u[k] + 1.0) * 0.5 * spacing[k];
                }
                let be = mesh.eval_basis(element, &state[..d2])?;
                let scale = rule.weights[g] * jac;

                coeffs.clear();
                for mid in &basis.midpoints {
                    state[d2..].copy_from_slice(mid);
                    let cf = provider.eval(&state);
                    check_finite(&cf, element)?;
                    coeffs.push(cf);
                }

                for t in 0..n2 {
                    for l in 0..n2 {
                        let pair = t * n2 + l;
                        let cf = &coeffs[basis.pair_to_mid[pair]];
                        let p = overlap[pair];
                        let w = &wvec[pair * d1..pair * d1 + d1];
                        let dmat = &cf.diffusion;

                        // Kernel-direction reductions at this pair.
                        let mut gg = 0.0;
                        let mut drift_q = 0.0;
                        let mut d_pq_w = [0.0; MAX_DIM]; // (D_pq w)_alpha
                        let mut w_d_qp = [0.0; MAX_DIM]; // (w' D_qp)_beta
                        for j in 0..d1 {
                            drift_q += cf.drift[d2 + j] * w[j];
                            for j2 in 0..d1 {
                                gg += w[j] * dmat[d2 + j][d2 + j2] * w[j2];
                            }
                            for alpha in 0..d2 {
                                d_pq_w[alpha] += dmat[alpha][d2 + j] * w[j];
                                w_d_qp[alpha] += w[j] * dmat[d2 + j][alpha];
                            }
                        }

                        for a in 0..n_loc {
                            let phi_a = be.values[a];
                            let ga = &be.gradients[a * d2..a * d2 + d2];
                            let row = a * n2 + t;
                            for b in 0..n_loc {
                                let phi_b = be.values[b];
                                let gb = &be.gradients[b * d2..b * d2 + d2];

                                let mut pp = 0.0;
                                let mut pq = 0.0;
                                let mut qp = 0.0;
                                let mut drift_p = 0.0;
                                for alpha in 0..d2 {
                                    let mut d_gb = 0.0;
                                    for beta in 0..d2 {
                                        d_gb += dmat[alpha][beta] * gb[beta];
                                    }
                                    pp += ga[alpha] * d_gb;
                                    pq += ga[alpha] * d_pq_w[alpha];
                                    qp += w_d_qp[alpha] * gb[alpha];
                                    drift_p += cf.drift[alpha] * gb[alpha];
                                }

                                let value = scale
                                    * p
                                    * (pp + pq * phi_b - qp * phi_a
                                        + gg * phi_a * phi_b
                                        + drift_q * phi_a * phi_b
                                        + drift_p * phi_a
                                        + cf.reaction * phi_a * phi_b);
                                k_loc[row * local_n + b * n2 + l] += value;
                            }
                        }
                    }
                }

                // Load: collapse the kernel integral at each support.
                for t in 0..n2 {
                    let cf = &coeffs[basis.pair_to_mid[t * n2 + t]];
                    let f_t = cf.source * mass;
                    for a in 0..n_loc {
                        f_loc[a * n2 + t] += scale * f_t * be.values[a];
                    }
                }
            }
            Ok(ElementBlock {
                dofs,
                k: k_loc,
                f: f_loc,
            })
        })
        .collect();

    // Merge in fixed element order for reproducibility.
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; m];
    for block in blocks {
        let block = block?;
        let local_n = block.dofs.len() * n2;
        for a in 0..block.dofs.len() {
            for t in 0..n2 {
                let row = basis.flat_index(block.dofs[a], t);
                rhs[row] += block.f[a * n2 + t];
                for b in 0..block.dofs.len() {
                    for l in 0..n2 {
                        let v = block.k[(a * n2 + t) * local_n + b * n2 + l];
                        if v != 0.0 {
                            triplets.push((row, basis.flat_index(block.dofs[b], l), v));
                        }
                    }
                }
            }
        }
    }

    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(m, &triplets),
        rhs,
        dirichlet: Vec::new(),
    })
}

/// Direct pure-mesh Galerkin assembly (no kernel machinery); serves both as
/// the production path for full-mesh bases and as an independent route for
/// equivalence checks against the degenerate hybrid assembly.
pub fn assemble_pure_mesh(
    mesh: &Mesh,
    provider: &dyn CoefficientProvider,
    quad: QuadKind,
) -> Result<LinearSystem> {
    let d = mesh.dim();
    let rule = quadrature(quad, d)?;
    let m = mesh.dof_count();
    let active: Vec<usize> = (0..mesh.element_count())
        .filter(|&e| mesh.element_active(e))
        .collect();
    if active.is_empty() {
        return Err(Error::Assembly("no active elements in the domain".into()));
    }
    let spacing = mesh.spacing();
    let jac: f64 = spacing.iter().map(|h| h / 2.0).product();
    let n_loc = mesh.nodes_per_element();

    struct ElementBlock {
        dofs: Vec<usize>,
        k: Vec<f64>,
        f: Vec<f64>,
    }

    let blocks: Vec<Result<ElementBlock>> = active
        .par_iter()
        .map(|&element| -> Result<ElementBlock> {
            let nodes = mesh.element_nodes(element);
            let dofs: Vec<usize> = nodes.iter().map(|&n| mesh.dof_of_node(n)).collect();
            let origin = mesh.element_origin(element);
            let mut k_loc = vec![0.0; n_loc * n_loc];
            let mut f_loc = vec![0.0; n_loc];
            let mut x = vec![0.0; d];
            for g in 0..rule.len() {
                let u = rule.point(g);
                for k in 0..d {
                    x[k] = origin[k] + (u[k] + 1.0) * 0.5 * spacing[k];
                }
                let cf = provider.eval(&x);
                check_finite(&cf, element)?;
                let be = mesh.eval_basis(element, &x)?;
                let scale = rule.weights[g] * jac;
                for a in 0..n_loc {
                    let phi_a = be.values[a];
                    let ga = &be.gradients[a * d..a * d + d];
                    f_loc[a] += scale * cf.source * phi_a;
                    for b in 0..n_loc {
                        let phi_b = be.values[b];
                        let gb = &be.gradients[b * d..b * d + d];
                        let mut diff = 0.0;
                        let mut drift = 0.0;
                        for alpha in 0..d {
                            let mut d_gb = 0.0;
                            for beta in 0..d {
                                d_gb += cf.diffusion[alpha][beta] * gb[beta];
                            }
                            diff += ga[alpha] * d_gb;
                            drift += cf.drift[alpha] * gb[alpha];
                        }
                        k_loc[a * n_loc + b] +=
                            scale * (diff + phi_a * drift + cf.reaction * phi_a * phi_b);
                    }
                }
            }
            Ok(ElementBlock {
                dofs,
                k: k_loc,
                f: f_loc,
            })
        })
        .collect();

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; m];
    for block in blocks {
        let block = block?;
        for a in 0..block.dofs.len() {
            rhs[block.dofs[a]] += block.f[a];
            for b in 0..block.dofs.len() {
                let v = block.k[a * block.dofs.len() + b];
                if v != 0.0 {
                    triplets.push((block.dofs[a], block.dofs[b], v));
                }
            }
        }
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(m, &triplets),
        rhs,
        dirichlet: Vec::new(),
    })
}

/// Prescribed flat-index values for the given boundary mode: goal nodes at
/// the goal value (via the kernel Gram coefficients in hybrid mode), safety
/// nodes at zero under `DirichletZero`, obstacle-interior nodes always zero.
pub fn dirichlet_values(
    basis: &HybridBasis,
    mode: BoundaryMode,
    goal_value: f64,
) -> Result<Vec<(usize, f64)>> {
    let n2 = basis.kernels.len();
    let goal_coeffs = basis.kernels.dirichlet_coefficients(goal_value)?;
    let mut constraints = Vec::new();
    for dof in 0..basis.mesh.dof_count() {
        match basis.mesh.dof_label(dof) {
            NodeLabel::GoalBoundary => {
                for t in 0..n2 {
                    constraints.push((basis.flat_index(dof, t), goal_coeffs[t]));
                }
            }
            NodeLabel::SafetyBoundary if mode == BoundaryMode::DirichletZero => {
                for t in 0..n2 {
                    constraints.push((basis.flat_index(dof, t), 0.0));
                }
            }
            NodeLabel::Obstacle => {
                for t in 0..n2 {
                    constraints.push((basis.flat_index(dof, t), 0.0));
                }
            }
            _ => {}
        }
    }
    Ok(constraints)
}

/// Applies Dirichlet constraints by symmetric elimination: constrained rows
/// become identity rows with the prescribed right-hand values and
/// constrained columns fold into the right-hand side.
pub fn apply_boundary(
    basis: &HybridBasis,
    system: &LinearSystem,
    mode: BoundaryMode,
    goal_value: f64,
) -> Result<LinearSystem> {
    let constraints = dirichlet_values(basis, mode, goal_value)?;
    let m = system.matrix.n;
    let mut value_of = vec![f64::NAN; m];
    for &(idx, v) in &constraints {
        value_of[idx] = v;
    }
    let constrained = |i: usize| !value_of[i].is_nan();

    let mut rhs = system.rhs.clone();
    let mut triplets = Vec::with_capacity(system.matrix.values.len());
    for r in 0..m {
        if constrained(r) {
            continue;
        }
        let (cols, vals) = system.matrix.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if constrained(c) {
                rhs[r] -= v * value_of[c];
            } else {
                triplets.push((r, c, v));
            }
        }
    }
    for &(idx, v) in &constraints {
        triplets.push((idx, idx, 1.0));
        rhs[idx] = v;
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(m, &triplets),
        rhs,
        dirichlet: constraints,
    })
}

/// Solves the constrained system by direct banded factorization.
pub fn solve(system: &LinearSystem, residual_tol: f64) -> Result<Vec<f64>> {
    solve_checked(&system.matrix, &system.rhs, residual_tol)
}
