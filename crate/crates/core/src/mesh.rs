//! Structured rectangular/box meshes over the boundary-critical state
//! dimensions, with multilinear Lagrange shape functions.
//!
//! Meshes are uniform per axis. In 3D mode the third axis is periodic
//! (heading): the node layers at both ends are identified to the same
//! degree of freedom.

use std::io::Write;

use crate::env::Environment;
use crate::error::{Error, Result};

/// One mesh axis.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.cells as f64
    }
}

/// Per-node boundary classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLabel {
    Interior,
    SafetyBoundary,
    GoalBoundary,
    /// Node with no adjacent active element (inside an obstacle).
    Obstacle,
}

/// Shape-function values and gradients of one element at a query point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub element: usize,
    /// One value per local node (4 in 2D, 8 in 3D).
    pub values: Vec<f64>,
    /// Global-coordinate gradients, flattened `local_node * dim + axis`.
    pub gradients: Vec<f64>,
}

/// Structured mesh with per-node labels and per-element activity flags.
#[derive(Debug, Clone)]
pub struct Mesh {
    axes: Vec<Axis>,
    /// Nodes per axis (cells + 1, including the duplicate periodic layer).
    node_counts: Vec<usize>,
    labels: Vec<NodeLabel>,
    dof_of_node: Vec<usize>,
    n_dofs: usize,
    elem_active: Vec<bool>,
}

impl Mesh {
    /// Builds the mesh for an environment. `extra_axes` adds boundary-free
    /// state axes (e.g. a periodic heading axis) for pure-mesh 3D mode.
    pub fn build(env: &Environment, extra_axes: &[Axis]) -> Result<Self> {
        if extra_axes.len() > 1 {
            return Err(Error::invalid("at most one extra mesh axis is supported"));
        }
        let cell = env.cell_size();
        let bounds = env.bounds();
        let mut axes = vec![
            Axis {
                min: bounds.min[0],
                max: bounds.max[0],
                cells: env.cell_counts()[0],
                periodic: false,
            },
            Axis {
                min: bounds.min[1],
                max: bounds.max[1],
                cells: env.cell_counts()[1],
                periodic: false,
            },
        ];
        axes.extend_from_slice(extra_axes);
        for ax in &axes {
            if ax.cells == 0 || !(ax.max > ax.min) {
                return Err(Error::invalid("mesh axis must have positive extent and cells"));
            }
        }

        let [nx, ny] = env.cell_counts();
        // Position-plane labels, broadcast along any extra axis.
        let mut plane_labels = Vec::with_capacity((nx + 1) * (ny + 1));
        let goal = env.goal();
        for iy in 0..=ny {
            for ix in 0..=nx {
                let p = [
                    bounds.min[0] + ix as f64 * cell[0],
                    bounds.min[1] + iy as f64 * cell[1],
                ];
                let mut any_active = false;
                let mut any_inactive = false;
                for (dx, dy) in [(-1i64, -1i64), (0, -1), (-1, 0), (0, 0)] {
                    let cx = ix as i64 + dx;
                    let cy = iy as i64 + dy;
                    if cx < 0 || cy < 0 || cx >= nx as i64 || cy >= ny as i64 {
                        continue;
                    }
                    if env.is_obstacle([cx as usize, cy as usize]) {
                        any_inactive = true;
                    } else {
                        any_active = true;
                    }
                }
                let on_wall = ix == 0 || ix == nx || iy == 0 || iy == ny;
                let label = if !any_active {
                    NodeLabel::Obstacle
                } else if goal.contains(p) {
                    NodeLabel::GoalBoundary
                } else if on_wall || any_inactive {
                    NodeLabel::SafetyBoundary
                } else {
                    NodeLabel::Interior
                };
                plane_labels.push(label);
            }
        }

        let mut plane_active = Vec::with_capacity(nx * ny);
        for cy in 0..ny {
            for cx in 0..nx {
                plane_active.push(!env.is_obstacle([cx, cy]));
            }
        }

        Self::assemble_mesh(axes, plane_labels, plane_active)
    }

    /// Uniform mesh over a plain box with all elements active; outer nodes
    /// are safety boundary. Used for generic boundary-value problems.
    pub fn uniform_box(mins: &[f64], maxs: &[f64], cells: &[usize]) -> Result<Self> {
        if mins.len() != 2 || maxs.len() != 2 || cells.len() != 2 {
            return Err(Error::invalid("uniform_box expects two axes"));
        }
        let axes = vec![
            Axis {
                min: mins[0],
                max: maxs[0],
                cells: cells[0],
                periodic: false,
            },
            Axis {
                min: mins[1],
                max: maxs[1],
                cells: cells[1],
                periodic: false,
            },
        ];
        let (nx, ny) = (cells[0], cells[1]);
        let mut plane_labels = Vec::with_capacity((nx + 1) * (ny + 1));
        for iy in 0..=ny {
            for ix in 0..=nx {
                let on_wall = ix == 0 || ix == nx || iy == 0 || iy == ny;
                plane_labels.push(if on_wall {
                    NodeLabel::SafetyBoundary
                } else {
                    NodeLabel::Interior
                });
            }
        }
        Self::assemble_mesh(axes, plane_labels, vec![true; nx * ny])
    }

    fn assemble_mesh(
        axes: Vec<Axis>,
        plane_labels: Vec<NodeLabel>,
        plane_active: Vec<bool>,
    ) -> Result<Self> {
        let node_counts: Vec<usize> = axes.iter().map(|a| a.cells + 1).collect();
        let n_nodes: usize = node_counts.iter().product();
        let plane_nodes = node_counts[0] * node_counts[1];

        let mut labels = Vec::with_capacity(n_nodes);
        let layers = if axes.len() == 3 { node_counts[2] } else { 1 };
        for _ in 0..layers {
            labels.extend_from_slice(&plane_labels);
        }

        // Periodic axes identify the last node layer with the first.
        let mut dof_of_node = vec![usize::MAX; n_nodes];
        let mut n_dofs = 0;
        for id in 0..n_nodes {
            let layer = id / plane_nodes;
            if axes.len() == 3 && axes[2].periodic && layer == node_counts[2] - 1 {
                dof_of_node[id] = dof_of_node[id % plane_nodes];
            } else {
                dof_of_node[id] = n_dofs;
                n_dofs += 1;
            }
        }

        let elem_layers = if axes.len() == 3 { axes[2].cells } else { 1 };
        let mut elem_active = Vec::with_capacity(plane_active.len() * elem_layers);
        for _ in 0..elem_layers {
            elem_active.extend_from_slice(&plane_active);
        }

        Ok(Mesh {
            axes,
            node_counts,
            labels,
            dof_of_node,
            n_dofs,
            elem_active,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.spacing()).collect()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Nodes per axis (cells + 1, including the duplicate periodic layer).
    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    /// Distinct degrees of freedom (periodic layers identified).
    pub fn dof_count(&self) -> usize {
        self.n_dofs
    }

    pub fn dof_of_node(&self, node: usize) -> usize {
        self.dof_of_node[node]
    }

    pub fn element_count(&self) -> usize {
        self.elem_active.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim()
    }

    pub fn element_active(&self, element: usize) -> bool {
        self.elem_active[element]
    }

    pub fn node_label(&self, node: usize) -> NodeLabel {
        self.labels[node]
    }

    /// Label per degree of freedom (canonical node of the dof).
    pub fn dof_label(&self, dof: usize) -> NodeLabel {
        // Canonical node ids are assigned in order, so the first node with
        // this dof defines the label; labels agree across periodic copies.
        self.labels[self.canonical_node(dof)]
    }

    /// First node id carrying this dof.
    pub fn canonical_node(&self, dof: usize) -> usize {
        debug_assert!(dof < self.n_dofs);
        // Dofs are assigned in node order, skipping duplicate layers, so the
        // canonical node id equals the dof id for all non-duplicate nodes.
        dof
    }

    fn node_multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        let mut rest = node;
        for &n in &self.node_counts {
            idx.push(rest % n);
            rest /= n;
        }
        idx
    }

    pub fn node_position(&self, node: usize) -> Vec<f64> {
        self.node_multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.min + i as f64 * a.spacing())
            .collect()
    }

    fn element_multi_index(&self, element: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        let mut rest = element;
        for a in &self.axes {
            idx.push(rest % a.cells);
            rest /= a.cells;
        }
        idx
    }

    fn element_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for k in (0..self.dim()).rev() {
            flat = flat * self.axes[k].cells + idx[k];
        }
        flat
    }

    /// Lower corner coordinates of an element.
    pub fn element_origin(&self, element: usize) -> Vec<f64> {
        self.element_multi_index(element)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.min + i as f64 * a.spacing())
            .collect()
    }

    /// Node ids of an element, local order by corner bits (axis 0 fastest).
    pub fn element_nodes(&self, element: usize) -> Vec<usize> {
        let e = self.element_multi_index(element);
        let n_loc = self.nodes_per_element();
        let mut nodes = Vec::with_capacity(n_loc);
        for corner in 0..n_loc {
            let mut flat = 0;
            for k in (0..self.dim()).rev() {
                let bit = (corner >> k) & 1;
                flat = flat * self.node_counts[k] + e[k] + bit;
            }
            nodes.push(flat);
        }
        nodes
    }

    /// Maps a point to its containing active element. Points on shared faces
    /// resolve to the lower-indexed element; returns `None` outside the
    /// domain or inside inactive elements.
    pub fn locate_element(&self, p: &[f64]) -> Option<usize> {
        debug_assert_eq!(p.len(), self.dim());
        let mut idx = Vec::with_capacity(self.dim());
        for (k, a) in self.axes.iter().enumerate() {
            let mut x = p[k];
            if a.periodic {
                let span = a.max - a.min;
                x = (x - a.min).rem_euclid(span) + a.min;
            } else if x < a.min || x > a.max {
                return None;
            }
            let t = (x - a.min) / a.spacing();
            let f = t.floor();
            let mut i = f as isize;
            if t == f && i > 0 {
                i -= 1;
            }
            idx.push((i.max(0) as usize).min(a.cells - 1));
        }
        let element = self.element_index(&idx);
        if self.elem_active[element] {
            Some(element)
        } else {
            None
        }
    }

    /// Multilinear shape values and global-coordinate gradients at `p`.
    pub fn eval_basis(&self, element: usize, p: &[f64]) -> Result<BasisEval> {
        let dim = self.dim();
        let origin = self.element_origin(element);
        let mut local = Vec::with_capacity(dim);
        for k in 0..dim {
            let h = self.axes[k].spacing();
            let mut x = p[k];
            if self.axes[k].periodic {
                let a = &self.axes[k];
                let span = a.max - a.min;
                // Shift into the element's own span for wrap elements.
                while x < origin[k] - 1e-12 {
                    x += span;
                }
                while x > origin[k] + h + 1e-12 {
                    x -= span;
                }
            }
            let u = (x - origin[k]) / h;
            if !(-1e-9..=1.0 + 1e-9).contains(&u) {
                return Err(Error::OutOfDomain(format!(
                    "point {p:?} outside element {element}"
                )));
            }
            local.push(u.clamp(0.0, 1.0));
        }

        let n_loc = self.nodes_per_element();
        let mut values = Vec::with_capacity(n_loc);
        let mut gradients = Vec::with_capacity(n_loc * dim);
        for corner in 0..n_loc {
            let mut v = 1.0;
            for k in 0..dim {
                let bit = (corner >> k) & 1;
                v *= if bit == 1 { local[k] } else { 1.0 - local[k] };
            }
            values.push(v);
            for k in 0..dim {
                let mut g = 1.0 / self.axes[k].spacing();
                if (corner >> k) & 1 == 0 {
                    g = -g;
                }
                for k2 in 0..dim {
                    if k2 == k {
                        continue;
                    }
                    let bit = (corner >> k2) & 1;
                    g *= if bit == 1 { local[k2] } else { 1.0 - local[k2] };
                }
                gradients.push(g);
            }
        }
        Ok(BasisEval {
            element,
            values,
            gradients,
        })
    }

    /// Writes `id,x,y[,theta],label` rows for nodes and
    /// `id,node ids...,active` rows for elements.
    pub fn export_csv<W: Write>(&self, nodes_out: &mut W, elems_out: &mut W) -> Result<()> {
        let theta_col = if self.dim() == 3 { ",theta" } else { "" };
        writeln!(nodes_out, "id,x,y{theta_col},label")?;
        for node in 0..self.node_count() {
            let pos = self.node_position(node);
            let label = match self.labels[node] {
                NodeLabel::Interior => "interior",
                NodeLabel::SafetyBoundary => "safety",
                NodeLabel::GoalBoundary => "goal",
                NodeLabel::Obstacle => "obstacle",
            };
            let coords: Vec<String> = pos.iter().map(|c| format!("{c}")).collect();
            writeln!(nodes_out, "{},{},{}", node, coords.join(","), label)?;
        }
        writeln!(elems_out, "id,nodes,active")?;
        for element in 0..self.element_count() {
            let nodes: Vec<String> = self
                .element_nodes(element)
                .iter()
                .map(|n| n.to_string())
                .collect();
            writeln!(
                elems_out,
                "{},{},{}",
                element,
                nodes.join(" "),
                self.elem_active[element] as u8
            )?;
        }
        Ok(())
    }
}
