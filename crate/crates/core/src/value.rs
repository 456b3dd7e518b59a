//! Value-function evaluation and gradients over the full state space.

use std::io::Write;
use std::sync::Arc;

use crate::assembly::HybridBasis;
use crate::error::{Error, Result};

/// Value function `v(x) = sum_{i,t} a_{i,t} k(x_q, xi_t) phi_i(x_p) + shift`.
///
/// Inside inactive (obstacle) elements the value is the absorbing boundary
/// value, zero. Outside the mesh bounds evaluation is an error.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub basis: Arc<HybridBasis>,
    pub coeffs: Vec<f64>,
    pub shift: f64,
}

impl ValueFunction {
    pub fn new(basis: Arc<HybridBasis>, coeffs: Vec<f64>, shift: f64) -> Self {
        debug_assert_eq!(coeffs.len(), basis.size());
        ValueFunction {
            basis,
            coeffs,
            shift,
        }
    }

    /// Evaluates at a full state `[mesh dims..., kernel dims...]`. Kernel
    /// coordinates must already be normalized (angles wrapped).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mesh = &self.basis.mesh;
        let d2 = mesh.dim();
        let xp = &x[..d2];
        match mesh.locate_element(xp) {
            Some(element) => {
                let be = mesh.eval_basis(element, xp)?;
                let kernels = &self.basis.kernels;
                let n2 = kernels.len();
                let xq = &x[d2..];
                let mut acc = 0.0;
                for (a, &node) in mesh.element_nodes(element).iter().enumerate() {
                    let dof = mesh.dof_of_node(node);
                    let phi = be.values[a];
                    if phi == 0.0 {
                        continue;
                    }
                    for t in 0..n2 {
                        acc += self.coeffs[self.basis.flat_index(dof, t)]
                            * kernels.eval(xq, t)
                            * phi;
                    }
                }
                Ok(acc + self.shift)
            }
            None => {
                if self.in_bounds(xp) {
                    // Inside an inactive element: absorbing value.
                    Ok(0.0)
                } else {
                    Err(Error::OutOfDomain(format!("state {x:?} outside bounds")))
                }
            }
        }
    }

    /// True when the mesh-dimension part of the state is within bounds.
    pub fn in_bounds(&self, xp: &[f64]) -> bool {
        self.basis
            .mesh
            .axes()
            .iter()
            .zip(xp)
            .all(|(a, &c)| a.periodic || (c >= a.min && c <= a.max))
    }

    /// Absorbing evaluation: zero outside bounds or inside obstacles.
    pub fn eval_absorbing(&self, x: &[f64]) -> f64 {
        let d2 = self.basis.mesh.dim();
        if !self.in_bounds(&x[..d2]) {
            return 0.0;
        }
        self.eval(x).unwrap_or(0.0)
    }

    /// Full-state gradient. One-sided at element borders (the containing
    /// element resolves toward the lower index).
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mesh = &self.basis.mesh;
        let d2 = mesh.dim();
        let kernels = &self.basis.kernels;
        let d1 = kernels.dim();
        let n2 = kernels.len();
        let xp = &x[..d2];
        let xq = &x[d2..];
        let element = mesh
            .locate_element(xp)
            .ok_or_else(|| Error::OutOfDomain(format!("state {x:?} outside free space")))?;
        let be = mesh.eval_basis(element, xp)?;
        let mut g = vec![0.0; d2 + d1];
        for (a, &node) in mesh.element_nodes(element).iter().enumerate() {
            let dof = mesh.dof_of_node(node);
            let phi = be.values[a];
            let gphi = &be.gradients[a * d2..a * d2 + d2];
            for t in 0..n2 {
                let c = self.coeffs[self.basis.flat_index(dof, t)];
                if c == 0.0 {
                    continue;
                }
                let k = kernels.eval(xq, t);
                for alpha in 0..d2 {
                    g[alpha] += c * k * gphi[alpha];
                }
                if d1 > 0 {
                    let gk = kernels.grad(xq, t);
                    for j in 0..d1 {
                        g[d2 + j] += c * phi * gk[j];
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn goal_value_hint(&self) -> f64 {
        self.shift
    }
}

/// One row of an exported value grid slice.
#[derive(Debug, Clone)]
pub struct ValueGridRow {
    pub position: [f64; 2],
    pub slice: Vec<f64>,
    pub value: f64,
    pub log_value: f64,
}

/// Samples a 2D position slice of the value function at fixed values for the
/// remaining axes, with a raw and a `log10(value + floor)` column. The floor
/// is `1e-9 * goal_value`.
pub fn sample_value_grid(
    vf: &ValueFunction,
    slice: &[f64],
    resolution: [usize; 2],
    goal_value: f64,
) -> Result<Vec<ValueGridRow>> {
    let mesh = &vf.basis.mesh;
    let d2 = mesh.dim();
    let d_total = d2 + vf.basis.kernels.dim();
    if 2 + slice.len() != d_total {
        return Err(Error::invalid(format!(
            "slice covers {} axes, state has {}",
            slice.len(),
            d_total - 2
        )));
    }
    let axes = mesh.axes();
    for (k, &v) in slice.iter().enumerate().take(d2.saturating_sub(2)) {
        let a = &axes[2 + k];
        if !a.periodic && (v < a.min || v > a.max) {
            return Err(Error::invalid("slice value outside mesh bounds"));
        }
    }
    let floor = 1e-9 * goal_value;
    let mut rows = Vec::with_capacity(resolution[0] * resolution[1]);
    let mut state = vec![0.0; d_total];
    state[2..].copy_from_slice(slice);
    for iy in 0..resolution[1] {
        for ix in 0..resolution[0] {
            // Cell-centered samples over the position box.
            let fx = (ix as f64 + 0.5) / resolution[0] as f64;
            let fy = (iy as f64 + 0.5) / resolution[1] as f64;
            state[0] = axes[0].min + fx * (axes[0].max - axes[0].min);
            state[1] = axes[1].min + fy * (axes[1].max - axes[1].min);
            let value = vf.eval_absorbing(&state);
            rows.push(ValueGridRow {
                position: [state[0], state[1]],
                slice: slice.to_vec(),
                value,
                log_value: (value.max(0.0) + floor).log10(),
            });
        }
    }
    Ok(rows)
}

/// Writes grid rows as CSV with per-slice-axis columns.
pub fn write_value_grid<W: Write>(rows: &[ValueGridRow], out: &mut W) -> Result<()> {
    let n_slice = rows.first().map(|r| r.slice.len()).unwrap_or(0);
    let slice_cols: Vec<String> = (0..n_slice).map(|k| format!("s{k}")).collect();
    let header = if n_slice == 1 {
        "x,y,theta,value,log10_value".to_string()
    } else if n_slice == 0 {
        "x,y,value,log10_value".to_string()
    } else {
        format!("x,y,{},value,log10_value", slice_cols.join(","))
    };
    writeln!(out, "{header}")?;
    for r in rows {
        let slice: Vec<String> = r.slice.iter().map(|v| format!("{v}")).collect();
        if slice.is_empty() {
            writeln!(out, "{},{},{},{}", r.position[0], r.position[1], r.value, r.log_value)?;
        } else {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.position[0],
                r.position[1],
                slice.join(","),
                r.value,
                r.log_value
            )?;
        }
    }
    Ok(())
}
