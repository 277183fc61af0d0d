//! Reduced coupled head/tracer model with parameter-affine tensors.
//!
//! Head: `sum_r e^{mu_r} sum_pq A^r_{ipq} u_p u_q = f_i`.
//! Tracer: `(M + dt/2 D) c_n = (M - dt/2 D) c_{n-1} + g` with
//! `D = d_m K + d_l sum_r e^{2 mu_r} B^r(u, u) + sum_r e^{mu_r} C^r(u)`.
//!
//! Storage: `A^r` is `N x N^2` with column `p + N q`, symmetrized in `p, q`.
//! `B^r` is packed over `j <= k` (rows) and `p <= q` (columns), packed
//! index `k (k + 1) / 2 + j`, so leading blocks are the tensors of leading
//! sub-bases. `C^r` is `M^2 x N` with row `j + M k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RomError;
use crate::fem2d::{damped_newton, FemError, NewtonConfig, TimeGrid};
use crate::models::TracerModel;

/// Upper bound on the nominal size of `B` (`regions * N^2 * M^2` doubles).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorBudget {
    pub bytes: u64,
}

impl Default for TensorBudget {
    fn default() -> Self {
        Self { bytes: 2 << 30 }
    }
}

impl TensorBudget {
    pub fn required(regions: usize, n: usize, m: usize) -> u64 {
        (regions * n * n * m * m * 8) as u64
    }

    pub fn check(&self, regions: usize, n: usize, m: usize) -> Result<(), RomError> {
        let required = Self::required(regions, n, m);
        if required > self.bytes {
            return Err(RomError::MemoryBudget { required, budget: self.bytes });
        }
        Ok(())
    }
}

fn packed(j: usize, k: usize) -> usize {
    let (a, b) = if j <= k { (j, k) } else { (k, j) };
    b * (b + 1) / 2 + a
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTracer {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    /// Reduced concentration mass and stiffness.
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Head forcing `Psi^T F_u`.
    pub f: DVector<f64>,
    /// Tracer source per step `dt Phi^T F_c`.
    pub g: DVector<f64>,
    pub d_m: f64,
    pub d_l: f64,
    pub grid: TimeGrid,
    pub newton: NewtonConfig,
    /// Newton starting point; also fixes which of the two sign-symmetric
    /// roots is returned.
    pub head_guess: DVector<f64>,
}

/// Assembles all reduced tensors by full-order quadrature. `head_basis` is
/// free head DOFs x N, `conc_basis` is nodes x M.
pub fn assemble_tracer_tensors(
    head_basis: &DMatrix<f64>,
    conc_basis: &DMatrix<f64>,
    model: &TracerModel,
    budget: &TensorBudget,
) -> Result<ReducedTracer, RomError> {
    let mesh = &model.mesh;
    let nodes = mesh.num_nodes();
    let free = model.head_dofs.free_nodes();
    if head_basis.nrows() != free.len() || conc_basis.nrows() != nodes {
        return Err(RomError::InvalidInput(format!(
            "bases have {} and {} rows, expected {} free head DOFs and {nodes} nodes",
            head_basis.nrows(),
            conc_basis.nrows(),
            free.len()
        )));
    }
    let (n, m) = (head_basis.ncols(), conc_basis.ncols());
    if n == 0 || m == 0 {
        return Err(RomError::InvalidInput("empty basis".into()));
    }
    let nreg = model.num_regions();
    budget.check(nreg, n, m)?;

    let mut psi = DMatrix::zeros(nodes, n);
    for (i, node) in free.iter().enumerate() {
        psi.set_row(*node, &head_basis.row(i));
    }
    let phi = conc_basis;
    let tab = mesh.tabulation();
    let nq = tab.weights.len();
    let nl = mesh.nodes_per_element();
    let det = mesh.jacobian_det();
    let weights: Vec<f64> = tab.weights.iter().map(|w| w * det).collect();
    let grads: Vec<Vec<[f64; 2]>> = tab.grads.iter().map(|g| g.iter().map(|r| mesh.physical_grad(*r)).collect()).collect();
    let center: Vec<[f64; 2]> = mesh.shape_values_and_grads([0.0, 0.0]).1.iter().map(|r| mesh.physical_grad(*r)).collect();

    let (mp, np) = (packed_len(m), packed_len(n));
    let mut a: Vec<DMatrix<f64>> = (0..nreg).map(|_| DMatrix::zeros(n, n * n)).collect();
    let mut b: Vec<DMatrix<f64>> = (0..nreg).map(|_| DMatrix::zeros(mp, np)).collect();
    let mut c: Vec<DMatrix<f64>> = (0..nreg).map(|_| DMatrix::zeros(m * m, n)).collect();

    let mut by_region: Vec<Vec<usize>> = vec![Vec::new(); nreg];
    for (e, r) in model.element_region.iter().enumerate() {
        by_region[*r].push(e);
    }
    const CHUNK: usize = 32;
    let mut en = Vec::new();
    for (r, elements) in by_region.iter().enumerate() {
        for chunk in elements.chunks(CHUNK) {
            let rows = chunk.len();
            let mut sxx = DMatrix::zeros(rows, mp);
            let mut syy = DMatrix::zeros(rows, mp);
            let mut sxy = DMatrix::zeros(rows, mp);
            let mut gxx = DMatrix::zeros(rows, np);
            let mut gyy = DMatrix::zeros(rows, np);
            let mut gxy = DMatrix::zeros(rows, np);
            let mut tx = DMatrix::zeros(rows, m * m);
            let mut ty = DMatrix::zeros(rows, m * m);
            let mut gx = DMatrix::zeros(rows, n);
            let mut gy = DMatrix::zeros(rows, n);
            for (row, &e) in chunk.iter().enumerate() {
                mesh.element_nodes_into(e, &mut en);
                let psi_e = DMatrix::from_fn(nl, n, |a_, p| psi[(en[a_], p)]);
                let phi_e = DMatrix::from_fn(nl, m, |a_, j| phi[(en[a_], j)]);

                // Head tensor, full quadrature.
                for q in 0..nq {
                    let val = (DMatrix::from_fn(1, nl, |_, a_| tab.values[q][a_]) * &psi_e).transpose();
                    let hx = (DMatrix::from_fn(1, nl, |_, a_| grads[q][a_][0]) * &psi_e).transpose();
                    let hy = (DMatrix::from_fn(1, nl, |_, a_| grads[q][a_][1]) * &psi_e).transpose();
                    let gg = &hx * hx.transpose() + &hy * hy.transpose();
                    let w = weights[q];
                    for qq in 0..n {
                        let col = gg.column(qq).into_owned();
                        a[r].columns_mut(n * qq, n).ger(w, &col, &val.column(0), 1.0);
                    }
                }

                // Element-centre head gradients.
                let cx = DMatrix::from_fn(1, nl, |_, a_| center[a_][0]) * &psi_e;
                let cy = DMatrix::from_fn(1, nl, |_, a_| center[a_][1]) * &psi_e;
                gx.row_mut(row).copy_from(&cx);
                gy.row_mut(row).copy_from(&cy);
                for qq in 0..n {
                    for p in 0..=qq {
                        let k = packed(p, qq);
                        gxx[(row, k)] = cx[p] * cx[qq];
                        gyy[(row, k)] = cy[p] * cy[qq];
                        gxy[(row, k)] = 0.5 * (cx[p] * cy[qq] + cx[qq] * cy[p]);
                    }
                }

                // Concentration element matrices.
                let vq = DMatrix::from_fn(nq, nl, |q, a_| tab.values[q][a_]) * &phi_e;
                let dx = DMatrix::from_fn(nq, nl, |q, a_| grads[q][a_][0]) * &phi_e;
                let dy = DMatrix::from_fn(nq, nl, |q, a_| grads[q][a_][1]) * &phi_e;
                let wdx = DMatrix::from_fn(nq, m, |q, j| weights[q] * dx[(q, j)]);
                let wdy = DMatrix::from_fn(nq, m, |q, j| weights[q] * dy[(q, j)]);
                let wv = DMatrix::from_fn(nq, m, |q, j| weights[q] * vq[(q, j)]);
                let exx = wdx.tr_mul(&dx);
                let eyy = wdy.tr_mul(&dy);
                let exy = wdx.tr_mul(&dy);
                let etx = wv.tr_mul(&dx);
                let ety = wv.tr_mul(&dy);
                for k in 0..m {
                    for j in 0..=k {
                        let idx = packed(j, k);
                        sxx[(row, idx)] = exx[(j, k)];
                        syy[(row, idx)] = eyy[(j, k)];
                        sxy[(row, idx)] = exy[(j, k)] + exy[(k, j)];
                    }
                }
                tx.row_mut(row).copy_from_slice(etx.as_slice());
                ty.row_mut(row).copy_from_slice(ety.as_slice());
            }
            b[r].gemm_tr(1.0, &sxx, &gxx, 1.0);
            b[r].gemm_tr(1.0, &syy, &gyy, 1.0);
            b[r].gemm_tr(1.0, &sxy, &gxy, 1.0);
            c[r].gemm_tr(-1.0, &tx, &gx, 1.0);
            c[r].gemm_tr(-1.0, &ty, &gy, 1.0);
        }
    }
    for ar in &mut a {
        let t = ar.clone();
        for qq in 0..n {
            for p in 0..n {
                let s = 0.5 * (t.column(p + n * qq) + t.column(qq + n * p));
                ar.set_column(p + n * qq, &s);
            }
        }
    }

    let head_load = DVector::from_vec(model.head_dofs.restrict_vec(&model.head_load));
    let f = head_basis.transpose() * head_load;
    let g = conc_basis.transpose() * DVector::from_column_slice(&model.tracer_load) * model.grid.dt;
    // Least-squares coefficients of the constant field 1.
    let ones = DVector::from_element(free.len(), 1.0);
    let head_guess = (head_basis.transpose() * head_basis)
        .cholesky()
        .map(|ch| ch.solve(&(head_basis.transpose() * ones)))
        .unwrap_or_else(|| DVector::zeros(n));
    Ok(ReducedTracer {
        a,
        b,
        c,
        mass: model.mass.project(conc_basis),
        stiffness: model.stiffness.project(conc_basis),
        f,
        g,
        d_m: model.config.d_m,
        d_l: model.config.d_l,
        grid: model.grid,
        newton: model.config.newton.clone(),
        head_guess,
    })
}

impl ReducedTracer {
    pub fn head_size(&self) -> usize {
        self.f.len()
    }

    pub fn concentration_size(&self) -> usize {
        self.g.len()
    }

    pub fn num_regions(&self) -> usize {
        self.a.len()
    }

    fn check_mu(&self, mu: &[f64]) -> Result<(), RomError> {
        if mu.len() != self.num_regions() || mu.iter().any(|v| !v.is_finite()) {
            return Err(RomError::InvalidInput(format!("expected {} finite log-conductivities, got {mu:?}", self.num_regions())));
        }
        Ok(())
    }

    /// `N(mu) = sum_r e^{mu_r} A^r` (N x N^2).
    pub fn head_operator(&self, mu: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.head_size(), self.head_size().pow(2));
        for (ar, m) in self.a.iter().zip(mu) {
            out += ar * m.exp();
        }
        out
    }

    /// Residual `N(mu)(u, u) - f`.
    pub fn head_residual(&self, nmat: &DMatrix<f64>, u: &[f64]) -> DVector<f64> {
        let n = u.len();
        let uu = DVector::from_fn(n * n, |k, _| u[k % n] * u[k / n]);
        nmat * uu - &self.f
    }

    fn head_jacobian(nmat: &DMatrix<f64>, u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let mut j = DMatrix::zeros(n, n);
        for (q, uq) in u.iter().enumerate() {
            j += nmat.columns(n * q, n) * (2.0 * uq);
        }
        j
    }

    /// Newton solve of the reduced head equation with the root oriented
    /// like `head_guess`.
    pub fn head_solve(&self, mu: &[f64]) -> Result<DVector<f64>, RomError> {
        self.head_solve_with(mu, &self.newton)
    }

    pub fn head_solve_with(&self, mu: &[f64], newton: &NewtonConfig) -> Result<DVector<f64>, RomError> {
        self.check_mu(mu)?;
        let nmat = self.head_operator(mu);
        let (u, _) = damped_newton(
            self.head_guess.as_slice().to_vec(),
            newton,
            |u| self.head_residual(&nmat, u).as_slice().to_vec(),
            |u| {
                let lu = Self::head_jacobian(&nmat, u).lu();
                if lu.is_invertible() {
                    Ok(lu)
                } else {
                    Err(FemError::Factorization { pivot: 0, context: "reduced head Jacobian".into() })
                }
            },
            |lu, b| {
                let mut v = DVector::from_column_slice(b);
                lu.solve_mut(&mut v);
                b.copy_from_slice(v.as_slice());
            },
        )?;
        let mut u = DVector::from_vec(u);
        if u.dot(&self.head_guess) < 0.0 {
            u.neg_mut();
        }
        Ok(u)
    }

    /// Reduced transport operator `D(u, mu)`.
    pub fn transport_operator(&self, u: &DVector<f64>, mu: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.head_size(), self.concentration_size());
        let mut w = DVector::zeros(packed_len(n));
        for q in 0..n {
            for p in 0..=q {
                w[packed(p, q)] = u[p] * u[q] * if p == q { 1.0 } else { 2.0 };
            }
        }
        let mut bsum = DVector::zeros(packed_len(m));
        let mut csum = DVector::zeros(m * m);
        for r in 0..self.num_regions() {
            bsum.gemv(self.d_l * (2.0 * mu[r]).exp(), &self.b[r], &w, 1.0);
            csum.gemv(mu[r].exp(), &self.c[r], u, 1.0);
        }
        let mut d = &self.stiffness * self.d_m;
        for k in 0..m {
            for j in 0..m {
                d[(j, k)] += bsum[packed(j, k)] + csum[j + m * k];
            }
        }
        d
    }

    /// Crank–Nicolson concentration trajectory (M x levels) from zero.
    pub fn concentration_solve(&self, u: &DVector<f64>, mu: &[f64]) -> Result<DMatrix<f64>, RomError> {
        self.check_mu(mu)?;
        let half = 0.5 * self.grid.dt;
        let d = self.transport_operator(u, mu);
        let lu = (&self.mass + &d * half).lu();
        let rhs = &self.mass - &d * half;
        let step = lu.solve(&rhs).ok_or_else(|| RomError::Solve(format!("singular reduced tracer system at {mu:?}")))?;
        let shift = lu.solve(&self.g).ok_or_else(|| RomError::Solve("singular reduced tracer system".into()))?;
        let levels = self.grid.nt + 1;
        let mut traj = DMatrix::zeros(self.concentration_size(), levels);
        for n in 1..levels {
            let next = &step * traj.column(n - 1) + &shift;
            traj.set_column(n, &next);
        }
        Ok(traj)
    }

    /// Head coefficients and concentration trajectory.
    pub fn solve(&self, mu: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), RomError> {
        let u = self.head_solve(mu)?;
        let c = self.concentration_solve(&u, mu)?;
        Ok((u, c))
    }

    /// Tensors of the leading `n` head and `m` concentration modes.
    pub fn truncated(&self, n: usize, m: usize) -> Self {
        let (bn, bm) = (self.head_size(), self.concentration_size());
        let (n, m) = (n.min(bn), m.min(bm));
        let a = self
            .a
            .iter()
            .map(|ar| DMatrix::from_fn(n, n * n, |i, col| ar[(i, col % n + bn * (col / n))]))
            .collect();
        let b = self.b.iter().map(|br| br.view((0, 0), (packed_len(m), packed_len(n))).into_owned()).collect();
        let c = self.c.iter().map(|cr| DMatrix::from_fn(m * m, n, |row, s| cr[(row % m + bm * (row / m), s)])).collect();
        Self {
            a,
            b,
            c,
            mass: self.mass.view((0, 0), (m, m)).into_owned(),
            stiffness: self.stiffness.view((0, 0), (m, m)).into_owned(),
            f: self.f.rows(0, n).into_owned(),
            g: self.g.rows(0, m).into_owned(),
            d_m: self.d_m,
            d_l: self.d_l,
            grid: self.grid,
            newton: self.newton.clone(),
            head_guess: self.head_guess.rows(0, n).into_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::SparseOperator;
    use crate::models::TracerConfig;

    fn coarse() -> TracerModel {
        TracerModel::new(TracerConfig { nx: 8, ny: 8, t_end: 0.1, dt: 0.02, ..TracerConfig::desk() }).unwrap()
    }

    fn mu_star() -> Vec<f64> {
        crate::models::tracer::REFERENCE_LOG_CONDUCTIVITY.to_vec()
    }

    fn full_bases(model: &TracerModel) -> (DMatrix<f64>, DMatrix<f64>) {
        let nf = model.head_dofs.num_free();
        let nn = model.mesh.num_nodes();
        (DMatrix::identity(nf, nf), DMatrix::identity(nn, nn))
    }

    #[test]
    fn packing_is_nested() {
        let mut seen = vec![false; packed_len(5)];
        for k in 0..5 {
            for j in 0..=k {
                seen[packed(j, k)] = true;
                assert!(packed(j, k) < packed_len(k + 1));
                assert_eq!(packed(j, k), packed(k, j));
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn budget_refuses_large_tensors() {
        let b = TensorBudget { bytes: 1000 };
        assert!(b.check(6, 1, 3).is_ok());
        assert!(matches!(b.check(6, 2, 3), Err(RomError::MemoryBudget { .. })));
        assert_eq!(TensorBudget::required(6, 40, 160), 6 * 1600 * 25600 * 8);
        assert!(TensorBudget::default().check(6, 40, 160).is_ok());
    }

    #[test]
    fn full_basis_matches_full_order() {
        let model = coarse();
        let (hb, cb) = full_bases(&model);
        let rom = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        let mu = mu_star();
        let full = model.solve(&mu).unwrap();

        // Reduced nonlinear form at the full-order head vanishes.
        let u = DVector::from_column_slice(&full.head.free);
        let r = rom.head_residual(&rom.head_operator(&mu), u.as_slice());
        assert!(r.amax() < 1e-6, "{}", r.amax());

        let head = rom.head_solve(&mu).unwrap();
        assert!((&head - &u).amax() < 1e-6 * u.amax());

        // Transport operator equals the full-order one at the same head.
        let d = rom.transport_operator(&u, &mu);
        let fd = model.transport_operator(&full.velocity).to_dense();
        assert!((&d - &fd).amax() < 1e-10 * fd.amax(), "{}", (&d - &fd).amax());

        let conc = rom.concentration_solve(&u, &mu).unwrap();
        assert!((&conc - &full.concentration.coefficients).amax() < 1e-10 * conc.amax());
    }

    #[test]
    fn head_tensor_is_symmetric() {
        let model = coarse();
        let nf = model.head_dofs.num_free();
        let hb = DMatrix::from_fn(nf, 3, |i, j| ((i + 2 * j) as f64 * 0.3).sin());
        let cb = DMatrix::from_fn(model.mesh.num_nodes(), 2, |i, j| ((i * (j + 1)) as f64 * 0.1).cos());
        let rom = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        for ar in &rom.a {
            for i in 0..3 {
                for p in 0..3 {
                    for q in 0..3 {
                        assert!((ar[(i, p + 3 * q)] - ar[(i, q + 3 * p)]).abs() <= 1e-12 * ar.amax());
                    }
                }
            }
        }
        // Reduced stiffness matches explicit projection.
        let k = model.stiffness.project(&cb);
        assert!((rom.stiffness - k).amax() < 1e-12);
    }

    #[test]
    fn scalar_head_is_positive_root() {
        let model = coarse();
        let nf = model.head_dofs.num_free();
        let hb = DMatrix::from_element(nf, 1, 1.0 / (nf as f64).sqrt());
        let cb = DMatrix::from_element(model.mesh.num_nodes(), 1, 1.0);
        let rom = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        let mu = mu_star();
        let n: f64 = rom.head_operator(&mu)[(0, 0)];
        let u = rom.head_solve(&mu).unwrap();
        assert!((u[0] - (rom.f[0] / n).sqrt()).abs() < 1e-6);
        // All log-conductivities shifted by ln 2.
        let shifted: Vec<f64> = mu.iter().map(|m| m + 2f64.ln()).collect();
        let us = rom.head_solve(&shifted).unwrap();
        assert!((us[0] * 2f64.sqrt() - u[0]).abs() < 1e-6);
    }

    #[test]
    fn zero_head_gives_pure_diffusion() {
        let model = coarse();
        let (hb, _) = full_bases(&model);
        let cb = DMatrix::from_fn(model.mesh.num_nodes(), 4, |i, j| ((i + 1) as f64 * (j + 1) as f64 * 0.05).sin());
        let rom = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        let d = rom.transport_operator(&DVector::zeros(hb.ncols()), &mu_star());
        let direct = SparseOperator::linear_combination(&[(model.config.d_m, &model.stiffness)]).project(&cb);
        assert!((d - direct).amax() < 1e-10);
    }

    #[test]
    fn zero_source_gives_zero_trajectory() {
        let model = coarse();
        let (hb, cb) = (DMatrix::identity(model.head_dofs.num_free(), 2), DMatrix::identity(model.mesh.num_nodes(), 3));
        let mut rom = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        rom.g.fill(0.0);
        let c = rom.concentration_solve(&DVector::from_element(2, 0.5), &mu_star()).unwrap();
        assert_eq!(c.amax(), 0.0);
    }

    #[test]
    fn truncation_matches_direct_assembly() {
        let model = coarse();
        let nf = model.head_dofs.num_free();
        let hb = DMatrix::from_fn(nf, 3, |i, j| ((i + 2 * j) as f64 * 0.3).sin());
        let cb = DMatrix::from_fn(model.mesh.num_nodes(), 4, |i, j| ((i * (j + 1)) as f64 * 0.1).cos());
        let big = assemble_tracer_tensors(&hb, &cb, &model, &TensorBudget::default()).unwrap();
        let small = assemble_tracer_tensors(&hb.columns(0, 2).into_owned(), &cb.columns(0, 3).into_owned(), &model, &TensorBudget::default()).unwrap();
        let t = big.truncated(2, 3);
        for r in 0..6 {
            assert!((&t.a[r] - &small.a[r]).amax() < 1e-12);
            assert!((&t.b[r] - &small.b[r]).amax() < 1e-12);
            assert!((&t.c[r] - &small.c[r]).amax() < 1e-12);
        }
        assert!((t.g - small.g).amax() < 1e-14);
    }
}
