//! Uniform Cartesian meshes with tensor-product Lagrange elements.

use serde::{Deserialize, Serialize};

use super::quadrature::GaussLegendre;
use super::FemError;

/// A side of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySide {
    /// `y = y0`
    Bottom,
    /// `y = y1`
    Top,
    /// `x = x0`
    Left,
    /// `x = x1`
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// A quadrature point handed to coefficient closures during assembly.
#[derive(Debug, Clone, Copy)]
pub struct ElementPoint {
    pub element: usize,
    pub x: [f64; 2],
}

/// Values and reference derivatives of the element shape functions at the
/// quadrature points of the reference square `[-1, 1]^2`.
#[derive(Debug, Clone)]
pub struct Tabulation {
    /// Reference coordinates of each quadrature point.
    pub points: Vec<[f64; 2]>,
    /// Reference weights.
    pub weights: Vec<f64>,
    /// `values[q][a]`
    pub values: Vec<Vec<f64>>,
    /// `grads[q][a]` in reference coordinates.
    pub grads: Vec<Vec<[f64; 2]>>,
}

/// Uniform Cartesian grid on a rectangle carrying continuous Lagrange
/// elements of degree 1 (bilinear) or 2 (biquadratic).
#[derive(Debug, Clone)]
pub struct CartesianMesh {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub degree: usize,
    tab: Tabulation,
}

/// Boundary classification and free-DOF numbering.
#[derive(Debug, Clone)]
pub struct DofMap {
    kinds: Vec<NodeKind>,
    free: Vec<usize>,
    node_to_free: Vec<Option<usize>>,
    dirichlet: Vec<BoundarySide>,
}

/// Builds a mesh and its DOF map. Nodes on any of `dirichlet_sides`
/// (corners included) are Dirichlet nodes and are excluded from the free
/// numbering.
pub fn build_mesh(
    bounds: [f64; 4],
    nx: usize,
    ny: usize,
    degree: usize,
    dirichlet_sides: &[BoundarySide],
) -> Result<(CartesianMesh, DofMap), FemError> {
    let mesh = CartesianMesh::new(bounds, nx, ny, degree)?;
    let dofs = DofMap::new(&mesh, dirichlet_sides);
    Ok((mesh, dofs))
}

fn lagrange_1d(degree: usize, xi: f64) -> (Vec<f64>, Vec<f64>) {
    match degree {
        1 => (vec![0.5 * (1.0 - xi), 0.5 * (1.0 + xi)], vec![-0.5, 0.5]),
        2 => (
            vec![0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
            vec![xi - 0.5, -2.0 * xi, xi + 0.5],
        ),
        _ => unreachable!("degree validated at construction"),
    }
}

/// Shape function values and reference gradients at a reference point.
fn shape_functions(degree: usize, xi: f64, eta: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (vx, dx) = lagrange_1d(degree, xi);
    let (vy, dy) = lagrange_1d(degree, eta);
    let n1 = degree + 1;
    let mut values = Vec::with_capacity(n1 * n1);
    let mut grads = Vec::with_capacity(n1 * n1);
    for ly in 0..n1 {
        for lx in 0..n1 {
            values.push(vx[lx] * vy[ly]);
            grads.push([dx[lx] * vy[ly], vx[lx] * dy[ly]]);
        }
    }
    (values, grads)
}

impl CartesianMesh {
    pub fn new(bounds: [f64; 4], nx: usize, ny: usize, degree: usize) -> Result<Self, FemError> {
        let [x0, x1, y0, y1] = bounds;
        if !(x0 < x1) || !(y0 < y1) || !bounds.iter().all(|b| b.is_finite()) {
            return Err(FemError::InvalidGeometry(format!(
                "degenerate bounds x in [{x0}, {x1}], y in [{y0}, {y1}]"
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(FemError::InvalidGeometry(format!(
                "need at least 2 cells per direction, got {nx} x {ny}"
            )));
        }
        if degree != 1 && degree != 2 {
            return Err(FemError::InvalidGeometry(format!("unsupported element degree {degree}")));
        }
        // Gauss rule of order 2d + 1.
        let rule = GaussLegendre::with_order(2 * degree + 1);
        let mut tab = Tabulation { points: vec![], weights: vec![], values: vec![], grads: vec![] };
        for (qy, wy) in rule.points.iter().zip(&rule.weights) {
            for (qx, wx) in rule.points.iter().zip(&rule.weights) {
                let (v, g) = shape_functions(degree, *qx, *qy);
                tab.points.push([*qx, *qy]);
                tab.weights.push(wx * wy);
                tab.values.push(v);
                tab.grads.push(g);
            }
        }
        Ok(Self { x0, x1, y0, y1, nx, ny, degree, tab })
    }

    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    /// Nodes per row.
    pub fn nodes_x(&self) -> usize {
        self.degree * self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.degree * self.ny + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Local nodes per element.
    pub fn nodes_per_element(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let npx = self.nodes_x();
        let (ix, iy) = (node % npx, node / npx);
        let d = self.degree as f64;
        [self.x0 + ix as f64 * self.hx() / d, self.y0 + iy as f64 * self.hy() / d]
    }

    /// Global node numbers of element `e`, in the local lexicographic order
    /// used by the tabulation.
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes_per_element());
        self.element_nodes_into(e, &mut out);
        out
    }

    pub fn element_nodes_into(&self, e: usize, out: &mut Vec<usize>) {
        out.clear();
        let (ex, ey) = (e % self.nx, e / self.nx);
        let d = self.degree;
        let npx = self.nodes_x();
        for ly in 0..=d {
            for lx in 0..=d {
                out.push((d * ey + ly) * npx + d * ex + lx);
            }
        }
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [
            self.x0 + (ex as f64 + 0.5) * self.hx(),
            self.y0 + (ey as f64 + 0.5) * self.hy(),
        ]
    }

    pub fn tabulation(&self) -> &Tabulation {
        &self.tab
    }

    /// Determinant of the (constant) reference-to-physical Jacobian.
    pub fn jacobian_det(&self) -> f64 {
        0.25 * self.hx() * self.hy()
    }

    /// Maps a reference gradient to physical coordinates.
    #[inline]
    pub fn physical_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [2.0 * g[0] / self.hx(), 2.0 * g[1] / self.hy()]
    }

    pub fn quadrature_point(&self, e: usize, q: usize) -> [f64; 2] {
        let c = self.element_center(e);
        let p = self.tab.points[q];
        [c[0] + 0.5 * self.hx() * p[0], c[1] + 0.5 * self.hy() * p[1]]
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.num_nodes()).map(|n| f(self.node_coords(n))).collect()
    }

    /// Element containing `p` and the reference coordinates of `p` in it.
    /// Points on an interior edge go to the element above/right of it.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 2]), FemError> {
        let tol = 1e-12 * (self.x1 - self.x0).max(self.y1 - self.y0);
        if p[0] < self.x0 - tol || p[0] > self.x1 + tol || p[1] < self.y0 - tol || p[1] > self.y1 + tol {
            return Err(FemError::PointOutside(p));
        }
        let fx = ((p[0] - self.x0) / self.hx()).clamp(0.0, self.nx as f64);
        let fy = ((p[1] - self.y0) / self.hy()).clamp(0.0, self.ny as f64);
        let ex = (fx.floor() as usize).min(self.nx - 1);
        let ey = (fy.floor() as usize).min(self.ny - 1);
        let xi = 2.0 * (fx - ex as f64) - 1.0;
        let eta = 2.0 * (fy - ey as f64) - 1.0;
        Ok((ey * self.nx + ex, [xi, eta]))
    }

    /// Shape function values at reference coordinates.
    pub fn shape_values(&self, xi: [f64; 2]) -> Vec<f64> {
        shape_functions(self.degree, xi[0], xi[1]).0
    }

    /// Shape function values and reference gradients at reference coordinates.
    pub fn shape_values_and_grads(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        shape_functions(self.degree, xi[0], xi[1])
    }

    /// Evaluates the finite-element field with nodal values `u` at `p`.
    pub fn evaluate(&self, u: &[f64], p: [f64; 2]) -> Result<f64, FemError> {
        let (e, xi) = self.locate(p)?;
        let vals = self.shape_values(xi);
        Ok(self.element_nodes(e).iter().zip(&vals).map(|(n, v)| u[*n] * v).sum())
    }

    /// Physical gradient of the nodal field `u` at the centre of element `e`.
    pub fn center_gradient(&self, u: &[f64], e: usize) -> [f64; 2] {
        let (_, grads) = shape_functions(self.degree, 0.0, 0.0);
        let mut g = [0.0; 2];
        for (n, dg) in self.element_nodes(e).iter().zip(&grads) {
            g[0] += u[*n] * dg[0];
            g[1] += u[*n] * dg[1];
        }
        self.physical_grad(g)
    }

    pub fn on_side(&self, node: usize, side: BoundarySide) -> bool {
        let npx = self.nodes_x();
        let (ix, iy) = (node % npx, node / npx);
        match side {
            BoundarySide::Bottom => iy == 0,
            BoundarySide::Top => iy == self.nodes_y() - 1,
            BoundarySide::Left => ix == 0,
            BoundarySide::Right => ix == npx - 1,
        }
    }
}

impl DofMap {
    pub fn new(mesh: &CartesianMesh, dirichlet_sides: &[BoundarySide]) -> Self {
        let all = [BoundarySide::Bottom, BoundarySide::Top, BoundarySide::Left, BoundarySide::Right];
        let mut kinds = Vec::with_capacity(mesh.num_nodes());
        let mut free = Vec::new();
        let mut node_to_free = Vec::with_capacity(mesh.num_nodes());
        for n in 0..mesh.num_nodes() {
            let kind = if dirichlet_sides.iter().any(|s| mesh.on_side(n, *s)) {
                NodeKind::Dirichlet
            } else if all.iter().any(|s| mesh.on_side(n, *s)) {
                NodeKind::Neumann
            } else {
                NodeKind::Interior
            };
            kinds.push(kind);
            if kind == NodeKind::Dirichlet {
                node_to_free.push(None);
            } else {
                node_to_free.push(Some(free.len()));
                free.push(n);
            }
        }
        Self { kinds, free, node_to_free, dirichlet: dirichlet_sides.to_vec() }
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.node_to_free[node]
    }

    pub fn dirichlet_sides(&self) -> &[BoundarySide] {
        &self.dirichlet
    }

    /// Restricts a nodal vector to the free DOFs.
    pub fn restrict_vec(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|n| v[*n]).collect()
    }

    /// Extends a free-DOF vector to all nodes, Dirichlet nodes set from
    /// `dirichlet_value`.
    pub fn extend_vec(&self, v: &[f64], dirichlet_value: f64) -> Vec<f64> {
        let mut out = vec![dirichlet_value; self.kinds.len()];
        for (i, n) in self.free.iter().enumerate() {
            out[*n] = v[i];
        }
        out
    }
}
