//! Space-time measurement operators with Kronecker structure: measurement
//! `k = j * n_sensors + i` is `sum_n w_{jn} (s_i . c_n)` for a trajectory
//! with columns `c_n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ObserveError;
use crate::fem2d::{CartesianMesh, DofMap, GaussLegendre, TimeGrid};
use crate::models::wendland_2_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    Riesz,
    Pointwise,
}

/// Wendland sensor footprints with trapezoidal time windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RieszSensors {
    pub centers: Vec<[f64; 2]>,
    pub radius: f64,
    pub window_centers: Vec<f64>,
    /// Half-width of the constant part of each window.
    pub plateau: f64,
    /// Half-width of the support of each window.
    pub support: f64,
}

impl Default for RieszSensors {
    fn default() -> Self {
        Self::taylor_green()
    }
}

impl RieszSensors {
    /// Three sensors, 40 windows centred at `0.01 (33 + 5 j)`.
    pub fn taylor_green() -> Self {
        let unit = 0.01;
        Self {
            centers: vec![[0.1, 0.7], [-0.1, -0.5], [0.5, 0.1]],
            radius: 0.1,
            window_centers: (1..=40).map(|j| unit * (33 + 5 * j) as f64).collect(),
            plateau: unit,
            support: 2.0 * unit,
        }
    }

    /// Normalized trapezoid `nu_j` (unit integral).
    pub fn window(&self, j: usize, t: f64) -> f64 {
        let d = (t - self.window_centers[j]).abs();
        let h = 1.0 / (self.plateau + self.support);
        if d <= self.plateau {
            h
        } else if d < self.support {
            h * (self.support - d) / (self.support - self.plateau)
        } else {
            0.0
        }
    }
}

/// Point evaluations at sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointwiseSensors {
    pub points: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl Default for PointwiseSensors {
    fn default() -> Self {
        Self::tracer()
    }
}

impl PointwiseSensors {
    /// 5 x 5 grid `(0.1 + 0.2 i, 0.1 + 0.2 j)` at `t = 0.1, ..., 0.5`.
    pub fn tracer() -> Self {
        let mut points = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                points.push([0.1 + 0.2 * i as f64, 0.1 + 0.2 * j as f64]);
            }
        }
        Self { points, times: (1..=5).map(|m| 0.1 * m as f64).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SensorLayout {
    Riesz(RieszSensors),
    Pointwise(PointwiseSensors),
}

/// Linear map from trajectory coefficients (DOFs x levels) to `R^{Nm}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    pub mode: MeasurementMode,
    /// `n_sensors x DOFs`
    pub spatial: DMatrix<f64>,
    /// `n_times x levels`
    pub temporal: DMatrix<f64>,
    pub layout: SensorLayout,
}

fn restrict_columns(full: DMatrix<f64>, dofs: Option<&DofMap>) -> DMatrix<f64> {
    match dofs {
        None => full,
        Some(d) => full.select_columns(d.free_nodes()),
    }
}

/// `int f g` over `[a, b]` for functions that are polynomial of degree at
/// most 2 between consecutive breakpoints (Simpson is exact).
fn integrate_piecewise(f: impl Fn(f64) -> f64, mut breaks: Vec<f64>, a: f64, b: f64) -> f64 {
    breaks.retain(|t| *t > a && *t < b);
    breaks.push(a);
    breaks.push(b);
    breaks.sort_by(|x, y| x.total_cmp(y));
    breaks.dedup();
    breaks.windows(2).map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1]))).sum()
}

/// Load vector `int f zeta_a` of a compactly supported `f` (support
/// radius `radius` around `center`), integrated with a composite Gauss rule
/// on `sub x sub` subcells of every element touching the support.
fn localized_load(mesh: &CartesianMesh, f: impl Fn([f64; 2]) -> f64, center: [f64; 2], radius: f64, sub: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(4);
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let mut out = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let c = mesh.element_center(e);
        if (c[0] - center[0]).abs() > radius + 0.5 * hx || (c[1] - center[1]).abs() > radius + 0.5 * hy {
            continue;
        }
        let nodes = mesh.element_nodes(e);
        let w_sub = (2.0 / sub as f64).powi(2) / 4.0 * mesh.jacobian_det();
        for sx in 0..sub {
            for sy in 0..sub {
                for (qx, wx) in rule.points.iter().zip(&rule.weights) {
                    for (qy, wy) in rule.points.iter().zip(&rule.weights) {
                        let xi = [-1.0 + (sx as f64 + 0.5 * (qx + 1.0)) * 2.0 / sub as f64, -1.0 + (sy as f64 + 0.5 * (qy + 1.0)) * 2.0 / sub as f64];
                        let x = [c[0] + 0.5 * hx * xi[0], c[1] + 0.5 * hy * xi[1]];
                        let fv = f(x);
                        if fv == 0.0 {
                            continue;
                        }
                        let w = wx * wy * w_sub * fv;
                        for (n, v) in nodes.iter().zip(mesh.shape_values(xi)) {
                            out[*n] += w * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Hat function of level `n` on the grid.
fn hat(grid: &TimeGrid, n: usize, t: f64) -> f64 {
    let d = (t - grid.time(n)).abs() / grid.dt;
    (1.0 - d).max(0.0)
}

impl MeasurementOperator {
    /// Riesz-representer operator; `dofs` restricts columns to free DOFs.
    pub fn riesz(mesh: &CartesianMesh, dofs: Option<&DofMap>, grid: &TimeGrid, sensors: &RieszSensors) -> Result<Self, ObserveError> {
        if !(sensors.radius > 0.0 && sensors.plateau >= 0.0 && sensors.support > sensors.plateau) {
            return Err(ObserveError::InvalidConfig(format!(
                "need radius > 0 and support > plateau >= 0, got {} / {} / {}",
                sensors.radius, sensors.plateau, sensors.support
            )));
        }
        let t_end = grid.time(grid.nt);
        for t in &sensors.window_centers {
            if t - sensors.support < -1e-12 || t + sensors.support > t_end + 1e-12 {
                return Err(ObserveError::InvalidConfig(format!("time window around {t} leaves [0, {t_end}]")));
            }
        }
        let nodes = mesh.num_nodes();
        let mut spatial = DMatrix::zeros(sensors.centers.len(), nodes);
        for (i, c) in sensors.centers.iter().enumerate() {
            let row = localized_load(mesh, |x| wendland_2_1(sensors.radius, *c, x), *c, sensors.radius, 8);
            spatial.row_mut(i).copy_from_slice(&row);
        }
        let levels = grid.nt + 1;
        let mut temporal = DMatrix::zeros(sensors.window_centers.len(), levels);
        for (j, tj) in sensors.window_centers.iter().enumerate() {
            let (a, b) = (tj - sensors.support, tj + sensors.support);
            let kinks = vec![tj - sensors.plateau, tj + sensors.plateau];
            for n in 0..levels {
                let (lo, hi) = (grid.time(n) - grid.dt, grid.time(n) + grid.dt);
                if hi <= a || lo >= b {
                    continue;
                }
                let mut breaks = kinks.clone();
                breaks.extend([lo, grid.time(n), hi]);
                temporal[(j, n)] =
                    integrate_piecewise(|t| sensors.window(j, t) * hat(grid, n, t), breaks, a.max(lo), b.min(hi));
            }
        }
        Ok(Self {
            mode: MeasurementMode::Riesz,
            spatial: restrict_columns(spatial, dofs),
            temporal,
            layout: SensorLayout::Riesz(sensors.clone()),
        })
    }

    /// Point evaluations of the finite-element interpolant, linear
    /// interpolation between time levels.
    pub fn pointwise(mesh: &CartesianMesh, dofs: Option<&DofMap>, grid: &TimeGrid, sensors: &PointwiseSensors) -> Result<Self, ObserveError> {
        let nodes = mesh.num_nodes();
        let mut spatial = DMatrix::zeros(sensors.points.len(), nodes);
        for (i, p) in sensors.points.iter().enumerate() {
            let (e, xi) = mesh.locate(*p).map_err(|_| ObserveError::PointOutside(*p))?;
            for (node, v) in mesh.element_nodes(e).iter().zip(mesh.shape_values(xi)) {
                spatial[(i, *node)] = v;
            }
        }
        let t_end = grid.time(grid.nt);
        let levels = grid.nt + 1;
        let mut temporal = DMatrix::zeros(sensors.times.len(), levels);
        for (m, t) in sensors.times.iter().enumerate() {
            if *t < -1e-12 || *t > t_end + 1e-12 {
                return Err(ObserveError::InvalidConfig(format!("sample time {t} outside [0, {t_end}]")));
            }
            for n in 0..levels {
                let h = hat(grid, n, *t);
                // Snap round-off at nodal times.
                temporal[(m, n)] = if h < 1e-12 { 0.0 } else if h > 1.0 - 1e-12 { 1.0 } else { h };
            }
        }
        Ok(Self {
            mode: MeasurementMode::Pointwise,
            spatial: restrict_columns(spatial, dofs),
            temporal,
            layout: SensorLayout::Pointwise(sensors.clone()),
        })
    }

    pub fn num_measurements(&self) -> usize {
        self.spatial.nrows() * self.temporal.nrows()
    }

    pub fn num_sensors(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn num_dofs(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn num_levels(&self) -> usize {
        self.temporal.ncols()
    }

    /// Measurements of a trajectory (DOFs x levels).
    pub fn measure(&self, traj: &DMatrix<f64>) -> Result<DVector<f64>, ObserveError> {
        if traj.nrows() != self.num_dofs() || traj.ncols() != self.num_levels() {
            return Err(ObserveError::Shape {
                expected: (self.num_dofs(), self.num_levels()),
                found: (traj.nrows(), traj.ncols()),
            });
        }
        let m = &self.spatial * traj * self.temporal.transpose();
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    /// Operator acting on reduced coefficients: `spatial * basis`.
    pub fn reduced(&self, basis: &DMatrix<f64>) -> Self {
        Self { spatial: &self.spatial * basis, ..self.clone() }
    }

    /// Dense `Nm x (DOFs * levels)` matrix, column index `dof + DOFs * level`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.temporal.kronecker(&self.spatial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::{build_mesh, BoundarySide};

    fn tg_mesh() -> (CartesianMesh, DofMap) {
        build_mesh([-1.0, 1.0, -1.0, 1.0], 10, 10, 2, &[BoundarySide::Bottom]).unwrap()
    }

    #[test]
    fn windows_have_unit_integral() {
        let s = RieszSensors::taylor_green();
        for j in [0, 17, 39] {
            let tj = s.window_centers[j];
            let breaks = vec![tj - 0.02, tj - 0.01, tj + 0.01, tj + 0.02];
            let area = integrate_piecewise(|t| s.window(j, t), breaks, tj - 0.03, tj + 0.03);
            assert!((area - 1.0).abs() < 1e-13);
        }
        assert!((s.window_centers[39] - 2.33).abs() < 1e-12);
    }

    #[test]
    fn constant_field_measures_sensor_mass() {
        let (mesh, _) = tg_mesh();
        let grid = TimeGrid::new(2.5, 0.025).unwrap();
        let s = RieszSensors::taylor_green();
        let op = MeasurementOperator::riesz(&mesh, None, &grid, &s).unwrap();
        assert_eq!(op.num_measurements(), 120);
        let traj = DMatrix::from_element(mesh.num_nodes(), grid.nt + 1, 2.0);
        let y = op.measure(&traj).unwrap();
        for j in 0..40 {
            for i in 0..3 {
                let mass: f64 = op.spatial.row(i).sum();
                assert!((y[3 * j + i] - 2.0 * mass).abs() < 1e-12);
            }
        }
        // int of the bump over the plane is pi r^2 / 7.
        let exact = std::f64::consts::PI * 0.01 / 7.0;
        assert!((op.spatial.row(0).sum() - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn time_weights_integrate_linear_functions_exactly() {
        // For c(t) = t the measurement of a unit field is the window mean t_j.
        let grid = TimeGrid::new(2.5, 0.025).unwrap();
        let s = RieszSensors::taylor_green();
        let (mesh, _) = tg_mesh();
        let op = MeasurementOperator::riesz(&mesh, None, &grid, &s).unwrap();
        for j in 0..40 {
            let mean: f64 = (0..=grid.nt).map(|n| op.temporal[(j, n)] * grid.time(n)).sum();
            assert!((mean - s.window_centers[j]).abs() < 1e-12);
            let total: f64 = op.temporal.row(j).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_past_end_is_rejected() {
        let (mesh, _) = tg_mesh();
        let grid = TimeGrid::new(2.0, 0.025).unwrap();
        assert!(matches!(
            MeasurementOperator::riesz(&mesh, None, &grid, &RieszSensors::taylor_green()),
            Err(ObserveError::InvalidConfig(_))
        ));
    }

    #[test]
    fn riesz_rows_are_compactly_supported() {
        let (mesh, dofs) = tg_mesh();
        let grid = TimeGrid::new(2.5, 0.025).unwrap();
        let s = RieszSensors::taylor_green();
        let op = MeasurementOperator::riesz(&mesh, Some(&dofs), &grid, &s).unwrap();
        for (col, node) in dofs.free_nodes().iter().enumerate() {
            let x = mesh.node_coords(*node);
            for (i, c) in s.centers.iter().enumerate() {
                let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
                // Nodes farther than radius + element diagonal see nothing.
                if d > 0.1 + 0.15 {
                    assert_eq!(op.spatial[(i, col)], 0.0);
                }
            }
        }
        for j in 0..40 {
            for n in 0..=grid.nt {
                if (grid.time(n) - s.window_centers[j]).abs() >= 0.02 + 0.025 {
                    assert_eq!(op.temporal[(j, n)], 0.0);
                }
            }
        }
    }

    #[test]
    fn pointwise_reproduces_nodal_values_and_linears() {
        let (mesh, _) = build_mesh([0.0, 1.0, 0.0, 1.0], 10, 10, 1, &[]).unwrap();
        let grid = TimeGrid::new(0.5, 0.02).unwrap();
        let op = MeasurementOperator::pointwise(&mesh, None, &grid, &PointwiseSensors::tracer()).unwrap();
        assert_eq!(op.num_measurements(), 125);
        let lin = mesh.interpolate(|p| p[0] + p[1]);
        let traj = DMatrix::from_fn(mesh.num_nodes(), grid.nt + 1, |i, n| lin[i] * grid.time(n));
        let y = op.measure(&traj).unwrap();
        let s = PointwiseSensors::tracer();
        for (m, t) in s.times.iter().enumerate() {
            for (i, p) in s.points.iter().enumerate() {
                assert!((y[m * 25 + i] - (p[0] + p[1]) * t).abs() < 1e-12);
            }
        }
        // Off-node point on a finer probe.
        let probe = PointwiseSensors { points: vec![[0.33, 0.71]], times: vec![0.03] };
        let op = MeasurementOperator::pointwise(&mesh, None, &grid, &probe).unwrap();
        assert!((op.measure(&traj).unwrap()[0] - (0.33 + 0.71) * 0.03).abs() < 1e-12);
        let bad = PointwiseSensors { points: vec![[1.5, 0.5]], times: vec![0.1] };
        assert!(matches!(MeasurementOperator::pointwise(&mesh, None, &grid, &bad), Err(ObserveError::PointOutside(_))));
    }

    #[test]
    fn reduced_operator_composes_with_basis() {
        let (mesh, dofs) = tg_mesh();
        let grid = TimeGrid::new(2.5, 0.025).unwrap();
        let op = MeasurementOperator::riesz(&mesh, Some(&dofs), &grid, &RieszSensors::taylor_green()).unwrap();
        let basis = DMatrix::from_fn(dofs.num_free(), 3, |i, j| ((i * (j + 1)) as f64 * 0.01).sin());
        let coef = DMatrix::from_fn(3, grid.nt + 1, |j, n| (j + n) as f64 * 0.1);
        let full = op.measure(&(&basis * &coef)).unwrap();
        let red = op.reduced(&basis).measure(&coef).unwrap();
        assert!((full - red).amax() < 1e-12);
    }

    #[test]
    fn dense_form_matches_kronecker_apply() {
        let (mesh, dofs) = build_mesh([-1.0, 1.0, -1.0, 1.0], 4, 4, 2, &[BoundarySide::Bottom]).unwrap();
        let grid = TimeGrid::new(2.5, 0.025).unwrap();
        let op = MeasurementOperator::riesz(&mesh, Some(&dofs), &grid, &RieszSensors::taylor_green()).unwrap();
        let traj = DMatrix::from_fn(dofs.num_free(), grid.nt + 1, |i, n| ((i + 3 * n) as f64 * 0.1).cos());
        let y = op.measure(&traj).unwrap();
        let y2 = op.to_dense() * DVector::from_column_slice(traj.as_slice());
        assert!((y - y2).amax() < 1e-12);
    }
}
