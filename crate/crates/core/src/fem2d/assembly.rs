//! Finite-element assembly of bilinear forms and load vectors on all mesh
//! nodes. Restrict to free DOFs with [`DofMap`](super::DofMap) afterwards.

use std::sync::Arc;

use super::mesh::{CartesianMesh, ElementPoint};
use super::sparse::{Pattern, SparseOperator};

/// Sparsity pattern of element-coupled nodes plus the scatter map from
/// element matrices into the CSR value array. Build once per mesh, then
/// assemble any number of operators that share the pattern.
#[derive(Debug, Clone)]
pub struct Assembler {
    pattern: Arc<Pattern>,
    /// `scatter[e * nloc^2 + a * nloc + b]` is the value index of
    /// `(node_a, node_b)` of element `e`.
    scatter: Vec<usize>,
    nloc: usize,
}

impl Assembler {
    pub fn new(mesh: &CartesianMesh) -> Self {
        let n = mesh.num_nodes();
        let nloc = mesh.nodes_per_element();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut nodes = Vec::new();
        for e in 0..mesh.num_elements() {
            mesh.element_nodes_into(e, &mut nodes);
            for &a in &nodes {
                cols[a].extend_from_slice(&nodes);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            col_idx.extend_from_slice(c);
            row_ptr.push(col_idx.len());
        }
        let pattern = Pattern { nrows: n, ncols: n, row_ptr, col_idx };
        let mut scatter = Vec::with_capacity(mesh.num_elements() * nloc * nloc);
        for e in 0..mesh.num_elements() {
            mesh.element_nodes_into(e, &mut nodes);
            for &a in &nodes {
                for &b in &nodes {
                    scatter.push(pattern.position(a, b).expect("element coupling in pattern"));
                }
            }
        }
        Self { pattern: Arc::new(pattern), scatter, nloc }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Assembles `sum_e K_e` where `element_matrix(e, out)` fills the
    /// row-major local matrix of element `e`.
    pub fn assemble_with(
        &self,
        mesh: &CartesianMesh,
        symmetric: bool,
        mut element_matrix: impl FnMut(usize, &mut [f64]),
    ) -> SparseOperator {
        let nl2 = self.nloc * self.nloc;
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut local = vec![0.0; nl2];
        for e in 0..mesh.num_elements() {
            local.iter_mut().for_each(|v| *v = 0.0);
            element_matrix(e, &mut local);
            for (k, v) in local.iter().enumerate() {
                values[self.scatter[e * nl2 + k]] += v;
            }
        }
        SparseOperator::from_pattern(self.pattern.clone(), values, symmetric)
    }

    /// `M_ij = int zeta_j zeta_i`.
    pub fn mass(&self, mesh: &CartesianMesh) -> SparseOperator {
        self.weighted_mass(mesh, |_| 1.0)
    }

    /// `int w zeta_j zeta_i` for a scalar weight field.
    pub fn weighted_mass(&self, mesh: &CartesianMesh, weight: impl Fn(ElementPoint) -> f64) -> SparseOperator {
        let tab = mesh.tabulation();
        let det = mesh.jacobian_det();
        let nl = self.nloc;
        self.assemble_with(mesh, true, |e, local| {
            for q in 0..tab.weights.len() {
                let w = tab.weights[q] * det * weight(ElementPoint { element: e, x: mesh.quadrature_point(e, q) });
                let v = &tab.values[q];
                for a in 0..nl {
                    for b in 0..nl {
                        local[a * nl + b] += w * v[a] * v[b];
                    }
                }
            }
        })
    }

    /// `K_ij = int coeff grad zeta_j . grad zeta_i`.
    pub fn stiffness(&self, mesh: &CartesianMesh, coeff: impl Fn(ElementPoint) -> f64) -> SparseOperator {
        self.diffusion(mesh, |p| {
            let c = coeff(p);
            [[c, 0.0], [0.0, c]]
        })
    }

    /// `int (T grad zeta_j) . grad zeta_i` for a symmetric tensor field `T`.
    pub fn diffusion(&self, mesh: &CartesianMesh, tensor: impl Fn(ElementPoint) -> [[f64; 2]; 2]) -> SparseOperator {
        let tab = mesh.tabulation();
        let det = mesh.jacobian_det();
        let nl = self.nloc;
        let mut grads = vec![[0.0; 2]; nl];
        self.assemble_with(mesh, true, |e, local| {
            for q in 0..tab.weights.len() {
                let t = tensor(ElementPoint { element: e, x: mesh.quadrature_point(e, q) });
                let w = tab.weights[q] * det;
                for (g, r) in grads.iter_mut().zip(&tab.grads[q]) {
                    *g = mesh.physical_grad(*r);
                }
                for a in 0..nl {
                    let ga = grads[a];
                    for b in 0..nl {
                        let gb = grads[b];
                        let tg = [t[0][0] * gb[0] + t[0][1] * gb[1], t[1][0] * gb[0] + t[1][1] * gb[1]];
                        local[a * nl + b] += w * (tg[0] * ga[0] + tg[1] * ga[1]);
                    }
                }
            }
        })
    }

    /// `A_ij = int (beta . grad zeta_j) zeta_i`.
    pub fn advection(&self, mesh: &CartesianMesh, velocity: impl Fn(ElementPoint) -> [f64; 2]) -> SparseOperator {
        let tab = mesh.tabulation();
        let det = mesh.jacobian_det();
        let nl = self.nloc;
        let mut grads = vec![[0.0; 2]; nl];
        self.assemble_with(mesh, false, |e, local| {
            for q in 0..tab.weights.len() {
                let beta = velocity(ElementPoint { element: e, x: mesh.quadrature_point(e, q) });
                let w = tab.weights[q] * det;
                for (g, r) in grads.iter_mut().zip(&tab.grads[q]) {
                    *g = mesh.physical_grad(*r);
                }
                let v = &tab.values[q];
                for a in 0..nl {
                    for b in 0..nl {
                        local[a * nl + b] += w * (beta[0] * grads[b][0] + beta[1] * grads[b][1]) * v[a];
                    }
                }
            }
        })
    }
}

/// Mass matrix on all nodes.
pub fn assemble_mass(mesh: &CartesianMesh) -> SparseOperator {
    Assembler::new(mesh).mass(mesh)
}

/// Stiffness matrix with a scalar coefficient field.
pub fn assemble_stiffness(mesh: &CartesianMesh, coeff: impl Fn(ElementPoint) -> f64) -> SparseOperator {
    Assembler::new(mesh).stiffness(mesh, coeff)
}

/// Advection matrix for a velocity field.
pub fn assemble_advection(mesh: &CartesianMesh, velocity: impl Fn(ElementPoint) -> [f64; 2]) -> SparseOperator {
    Assembler::new(mesh).advection(mesh, velocity)
}

/// Load vector `F_i = int f zeta_i` on all nodes.
pub fn assemble_load(mesh: &CartesianMesh, f: impl Fn(ElementPoint) -> f64) -> Vec<f64> {
    let tab = mesh.tabulation();
    let det = mesh.jacobian_det();
    let mut out = vec![0.0; mesh.num_nodes()];
    let mut nodes = Vec::new();
    for e in 0..mesh.num_elements() {
        mesh.element_nodes_into(e, &mut nodes);
        for q in 0..tab.weights.len() {
            let w = tab.weights[q] * det * f(ElementPoint { element: e, x: mesh.quadrature_point(e, q) });
            for (n, v) in nodes.iter().zip(&tab.values[q]) {
                out[*n] += w * v;
            }
        }
    }
    out
}
