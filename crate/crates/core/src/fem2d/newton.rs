//! Newton's method for `div(k u grad u) + f = 0` with homogeneous Dirichlet
//! data.

use serde::{Deserialize, Serialize};

use super::assembly::Assembler;
use super::banded::BandedLu;
use super::mesh::{CartesianMesh, DofMap, ElementPoint};
use super::FemError;

/// Starting point of the Newton iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Constant value on all free DOFs.
    Constant(f64),
    /// Explicit free-DOF vector.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
    pub initial_guess: InitialGuess,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 50, max_halvings: 8, initial_guess: InitialGuess::Constant(1.0) }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.tolerance > 0.0) {
            return Err(FemError::InvalidConfig(format!("Newton tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(FemError::InvalidConfig("Newton needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Converged Newton iterate and its residual history.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    /// Free-DOF coefficients.
    pub free: Vec<f64>,
    /// Coefficients on all nodes (Dirichlet nodes set to zero).
    pub nodal: Vec<f64>,
    /// Residual norm before each iteration and after the last one.
    pub residuals: Vec<f64>,
}

impl NewtonSolution {
    pub fn iterations(&self) -> usize {
        self.residuals.len() - 1
    }
}

/// Damped Newton loop on `residual(u) = 0`. `jacobian_solve(u)` factors the
/// Jacobian at `u` and `solve` applies the factorization in place. Returns
/// the iterate and the residual norm history.
pub fn damped_newton<S>(
    mut u: Vec<f64>,
    config: &NewtonConfig,
    mut residual: impl FnMut(&[f64]) -> Vec<f64>,
    mut jacobian_solve: impl FnMut(&[f64]) -> Result<S, FemError>,
    solve: impl Fn(&S, &mut [f64]),
) -> Result<(Vec<f64>, Vec<f64>), FemError> {
    config.validate()?;
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = residual(&u);
    let mut rn = norm(&r);
    let mut history = vec![rn];
    for _ in 0..config.max_iterations {
        if rn <= config.tolerance {
            return Ok((u, history));
        }
        let jac = jacobian_solve(&u)?;
        let mut step = r.clone();
        solve(&jac, &mut step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
            let tr = residual(&trial);
            let tn = norm(&tr);
            if tn.is_finite() && tn < rn {
                accepted = Some((trial, tr, tn));
                break;
            }
            alpha *= 0.5;
        }
        let (nu, nr, nn) = match accepted {
            Some(a) => a,
            // No decrease within the halving budget: take the smallest step
            // anyway and let the iteration limit decide.
            None => {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a - 2.0 * alpha * s).collect();
                let tr = residual(&trial);
                let tn = norm(&tr);
                (trial, tr, tn)
            }
        };
        u = nu;
        r = nr;
        rn = nn;
        history.push(rn);
        if !rn.is_finite() {
            break;
        }
    }
    if rn <= config.tolerance {
        return Ok((u, history));
    }
    Err(FemError::NewtonDiverged { iterations: history.len() - 1, residual: rn })
}

/// Solves `div(k u grad u) + f = 0` on the free DOFs of `dofs`, with `u = 0`
/// on Dirichlet nodes. `forcing` is the assembled load vector `int f zeta_i`
/// on all nodes. Fails with [`FemError::NegativeBranch`] if the converged
/// iterate is negative anywhere.
pub fn newton_solve_quadratic_elliptic(
    mesh: &CartesianMesh,
    dofs: &DofMap,
    conductivity: impl Fn(ElementPoint) -> f64,
    forcing: &[f64],
    config: &NewtonConfig,
) -> Result<NewtonSolution, FemError> {
    config.validate()?;
    let problem = QuadraticElliptic::new(mesh, dofs, conductivity, forcing);
    let u0 = match &config.initial_guess {
        InitialGuess::Constant(c) => vec![*c; dofs.num_free()],
        InitialGuess::Vector(v) => {
            if v.len() != dofs.num_free() {
                return Err(FemError::InvalidConfig(format!(
                    "initial guess has length {}, expected {}",
                    v.len(),
                    dofs.num_free()
                )));
            }
            v.clone()
        }
    };
    let (free, residuals) = damped_newton(
        u0,
        config,
        |u| problem.residual(u),
        |u| BandedLu::factor(&problem.jacobian(u)),
        |lu, b| lu.solve_in_place(b),
    )?;
    if let Some((i, v)) = free.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(FemError::NegativeBranch { dof: i, value: *v });
    }
    let nodal = dofs.extend_vec(&free, 0.0);
    Ok(NewtonSolution { free, nodal, residuals })
}

/// Discrete residual and Jacobian of the quadratic elliptic problem.
struct QuadraticElliptic<'a> {
    mesh: &'a CartesianMesh,
    dofs: &'a DofMap,
    asm: Assembler,
    /// `w_q det k(x_q)` per element and quadrature point.
    weights: Vec<f64>,
    /// Physical shape gradients per quadrature point.
    grads: Vec<Vec<[f64; 2]>>,
    forcing: Vec<f64>,
}

impl<'a> QuadraticElliptic<'a> {
    fn new(mesh: &'a CartesianMesh, dofs: &'a DofMap, k: impl Fn(ElementPoint) -> f64, forcing: &[f64]) -> Self {
        let tab = mesh.tabulation();
        let nq = tab.weights.len();
        let det = mesh.jacobian_det();
        let mut weights = Vec::with_capacity(mesh.num_elements() * nq);
        for e in 0..mesh.num_elements() {
            for q in 0..nq {
                weights.push(tab.weights[q] * det * k(ElementPoint { element: e, x: mesh.quadrature_point(e, q) }));
            }
        }
        let grads = tab.grads.iter().map(|g| g.iter().map(|r| mesh.physical_grad(*r)).collect()).collect();
        Self { mesh, dofs, asm: Assembler::new(mesh), weights, grads, forcing: forcing.to_vec() }
    }

    /// Value and gradient of `u` at quadrature point `q` of an element.
    fn local(&self, nodes: &[usize], u: &[f64], q: usize) -> (f64, [f64; 2]) {
        let tab = self.mesh.tabulation();
        let (mut val, mut g) = (0.0, [0.0; 2]);
        for (a, n) in nodes.iter().enumerate() {
            val += u[*n] * tab.values[q][a];
            g[0] += u[*n] * self.grads[q][a][0];
            g[1] += u[*n] * self.grads[q][a][1];
        }
        (val, g)
    }

    fn residual(&self, free: &[f64]) -> Vec<f64> {
        let u = self.dofs.extend_vec(free, 0.0);
        let nq = self.mesh.tabulation().weights.len();
        let mut r: Vec<f64> = self.forcing.iter().map(|f| -f).collect();
        let mut nodes = Vec::new();
        for e in 0..self.mesh.num_elements() {
            self.mesh.element_nodes_into(e, &mut nodes);
            for q in 0..nq {
                let (val, g) = self.local(&nodes, &u, q);
                let w = self.weights[e * nq + q] * val;
                for (a, n) in nodes.iter().enumerate() {
                    r[*n] += w * (g[0] * self.grads[q][a][0] + g[1] * self.grads[q][a][1]);
                }
            }
        }
        self.dofs.restrict_vec(&r)
    }

    fn jacobian(&self, free: &[f64]) -> super::SparseOperator {
        let u = self.dofs.extend_vec(free, 0.0);
        let tab = self.mesh.tabulation();
        let nq = tab.weights.len();
        let nl = self.mesh.nodes_per_element();
        let mut nodes = Vec::new();
        let full = self.asm.assemble_with(self.mesh, false, |e, local| {
            self.mesh.element_nodes_into(e, &mut nodes);
            for q in 0..nq {
                let (val, g) = self.local(&nodes, &u, q);
                let w = self.weights[e * nq + q];
                for a in 0..nl {
                    let ga = self.grads[q][a];
                    let gu_a = g[0] * ga[0] + g[1] * ga[1];
                    for b in 0..nl {
                        let gb = self.grads[q][b];
                        local[a * nl + b] += w * (tab.values[q][b] * gu_a + val * (gb[0] * ga[0] + gb[1] * ga[1]));
                    }
                }
            }
        });
        let free_nodes = self.dofs.free_nodes();
        full.submatrix(free_nodes, free_nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::assembly::assemble_load;
    use crate::fem2d::mesh::{build_mesh, BoundarySide};

    #[test]
    fn scalar_quadratic_positive_root() {
        // k a u^2 = f with k = a = 1, f = 4.
        let cfg = NewtonConfig::default();
        let (u, hist) = damped_newton(
            vec![1.0],
            &cfg,
            |u| vec![u[0] * u[0] - 4.0],
            |u| Ok(2.0 * u[0]),
            |j, b| b[0] /= *j,
        )
        .unwrap();
        assert!((u[0] - 2.0).abs() < 1e-7);
        assert!(hist.last().unwrap() <= &1e-6);
    }

    #[test]
    fn reports_divergence_with_last_residual() {
        let cfg = NewtonConfig { max_iterations: 3, ..Default::default() };
        // u^2 + 1 = 0 has no real root.
        let err = damped_newton(vec![1.0], &cfg, |u| vec![u[0] * u[0] + 1.0], |u| Ok(2.0 * u[0]), |j, b| b[0] /= *j)
            .unwrap_err();
        assert!(matches!(err, FemError::NewtonDiverged { residual, .. } if residual >= 1.0));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let cfg = NewtonConfig { tolerance: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    fn head_problem(k: f64, scale: f64) -> NewtonSolution {
        head_problem_tol(k, scale, 1e-12)
    }

    fn head_problem_tol(k: f64, scale: f64, tolerance: f64) -> NewtonSolution {
        let (mesh, dofs) =
            build_mesh([0.0, 1.0, 0.0, 1.0], 8, 8, 1, &[BoundarySide::Bottom, BoundarySide::Top]).unwrap();
        let load = assemble_load(&mesh, |p| scale * (1.0 + p.x[0]));
        let cfg = NewtonConfig { tolerance, ..Default::default() };
        newton_solve_quadratic_elliptic(&mesh, &dofs, |_| k, &load, &cfg).unwrap()
    }

    #[test]
    fn homogeneity_of_the_head() {
        let base = head_problem(1.0, 1.0);
        assert!(base.free.iter().all(|v| *v > 0.0));
        let doubled_k = head_problem(2.0, 1.0);
        for (a, b) in base.free.iter().zip(&doubled_k.free) {
            assert!((b - a / 2f64.sqrt()).abs() < 1e-10);
        }
        let quadrupled_f = head_problem(1.0, 4.0);
        for (a, b) in base.free.iter().zip(&quadrupled_f.free) {
            assert!((b - 2.0 * a).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_tail_is_quadratic() {
        // Stop above the round-off floor so the tail reflects the method.
        let sol = head_problem_tol(1.0, 1.0, 1e-8);
        let r = &sol.residuals;
        let n = r.len();
        assert!(n >= 3);
        for k in n - 2..n {
            assert!(r[k] <= 10.0 * r[k - 1] * r[k - 1], "{r:?}");
        }
    }

    #[test]
    fn negative_initial_guess_lands_on_negative_branch() {
        let (mesh, dofs) = build_mesh([0.0, 1.0, 0.0, 1.0], 4, 4, 1, &[BoundarySide::Bottom]).unwrap();
        let load = assemble_load(&mesh, |_| 1.0);
        let cfg = NewtonConfig { initial_guess: InitialGuess::Constant(-1.0), ..Default::default() };
        let err = newton_solve_quadratic_elliptic(&mesh, &dofs, |_| 1.0, &load, &cfg).unwrap_err();
        assert!(matches!(err, FemError::NegativeBranch { .. }));
    }
}
