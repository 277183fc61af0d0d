//! Strong POD-greedy basis selection driven by true reduced-solve errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pod::{orthonormalize, pod_matrix, PodBasis, PodTarget};
use super::{InnerProduct, RomError};

/// Produces reduced coefficient trajectories (`basis.ncols() x levels`) for
/// a list of parameters, given a basis.
pub trait ReducedSolverFactory {
    fn reduced_trajectories(&self, basis: &DMatrix<f64>, params: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>, RomError>;
}

/// Orthogonal projection of known full-order trajectories; turns the greedy
/// into a projection-error greedy.
pub struct ProjectionReducer<'a> {
    pub params: &'a [Vec<f64>],
    pub trajectories: &'a [DMatrix<f64>],
    pub inner: &'a InnerProduct,
}

impl ReducedSolverFactory for ProjectionReducer<'_> {
    fn reduced_trajectories(&self, basis: &DMatrix<f64>, params: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>, RomError> {
        params
            .iter()
            .map(|mu| {
                let s = self
                    .params
                    .iter()
                    .position(|p| p == mu)
                    .ok_or_else(|| RomError::InvalidInput(format!("no trajectory stored for {mu:?}")))?;
                Ok(basis.transpose() * self.inner.op.mul_dense(&self.trajectories[s]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Stop once the maximum relative training error is at most this.
    pub target: f64,
    pub max_size: usize,
    /// POD modes of the projection residual added per iteration.
    pub modes_per_iteration: usize,
    /// Consecutive non-improving iterations tolerated before giving up.
    pub stagnation_window: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { target: 1e-2, max_size: 60, modes_per_iteration: 1, stagnation_window: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    /// Basis size the errors were measured with.
    pub basis_size: usize,
    pub max_error: f64,
    /// Training index with the largest error.
    pub selected: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// Greedy bases carry no singular values.
    pub basis: PodBasis,
    pub history: Vec<GreedyStep>,
    /// Maximum relative training error of the returned basis.
    pub max_error: f64,
}

/// Squared `L^2(I; X)` norm of a piecewise-linear-in-time trajectory from
/// the level Gram entries `g(m, n) = <c_m, c_n>_X` for `|m - n| <= 1`.
fn time_integral(dt: f64, levels: usize, g: impl Fn(usize, usize) -> f64) -> f64 {
    let mut s = 0.0;
    for n in 1..levels {
        s += g(n - 1, n - 1) + g(n - 1, n) + g(n, n);
    }
    s * dt / 3.0
}

/// Strong greedy: repeatedly solves the reduced problem on every training
/// parameter, picks the one with the largest relative `L^2(I; X)` error and
/// enriches the basis with the leading POD mode(s) of its projection
/// residual. `fom[s]` is the full-order trajectory (DOFs x levels) of
/// `train[s]`.
pub fn strong_greedy(
    train: &[Vec<f64>],
    fom: &[DMatrix<f64>],
    inner: &InnerProduct,
    dt: f64,
    config: &GreedyConfig,
    solver: &dyn ReducedSolverFactory,
) -> Result<GreedyOutcome, RomError> {
    if train.is_empty() || train.len() != fom.len() {
        return Err(RomError::InvalidInput(format!("{} parameters for {} trajectories", train.len(), fom.len())));
    }
    if config.modes_per_iteration == 0 || config.max_size == 0 {
        return Err(RomError::InvalidInput("greedy needs max_size and modes_per_iteration >= 1".into()));
    }
    let ndof = inner.dim();
    let xc: Vec<DMatrix<f64>> = fom.iter().map(|c| inner.op.mul_dense(c)).collect();
    // <c_n, c_n> and <c_{n-1}, c_n> per training trajectory.
    let self_gram: Vec<(Vec<f64>, Vec<f64>)> = fom
        .iter()
        .zip(&xc)
        .map(|(c, x)| {
            let l = c.ncols();
            let diag = (0..l).map(|n| c.column(n).dot(&x.column(n))).collect();
            let off = (0..l).map(|n| if n == 0 { 0.0 } else { c.column(n - 1).dot(&x.column(n)) }).collect();
            (diag, off)
        })
        .collect();
    let norms: Vec<f64> = self_gram
        .iter()
        .zip(fom)
        .map(|((d, o), c)| {
            time_integral(dt, c.ncols(), |m, n| if m == n { d[n] } else { o[n] }).sqrt()
        })
        .collect();

    let mut modes = DMatrix::<f64>::zeros(ndof, 0);
    // proj[s] = modes^T X C_s
    let mut proj: Vec<DMatrix<f64>> = fom.iter().map(|c| DMatrix::zeros(0, c.ncols())).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut errors = vec![1.0; train.len()];

    loop {
        if modes.ncols() > 0 {
            let reduced = solver.reduced_trajectories(&modes, train)?;
            for s in 0..train.len() {
                let (d, o) = &self_gram[s];
                let (r, p) = (&reduced[s], &proj[s]);
                let err2 = time_integral(dt, fom[s].ncols(), |m, n| {
                    let cc = if m == n { d[n] } else { o[n] };
                    cc - r.column(m).dot(&p.column(n)) - r.column(n).dot(&p.column(m)) + r.column(m).dot(&r.column(n))
                });
                errors[s] = if norms[s] > 0.0 { err2.max(0.0).sqrt() / norms[s] } else { 0.0 };
            }
        }
        let (selected, max_error) = errors
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if *e > acc.1 { (i, *e) } else { acc });
        history.push(GreedyStep { basis_size: modes.ncols(), max_error, selected });
        log::debug!("greedy: size {} max error {max_error:.3e} at {selected}", modes.ncols());

        let outcome = |modes: &DMatrix<f64>, history: &Vec<GreedyStep>| GreedyOutcome {
            basis: PodBasis { modes: modes.clone(), singular_values: Vec::new(), tag: inner.tag, rank_deficient: false },
            history: history.clone(),
            max_error,
        };
        if modes.ncols() > 0 && (max_error <= config.target || modes.ncols() >= config.max_size) {
            return Ok(outcome(&modes, &history));
        }
        if modes.ncols() > 0 {
            if max_error < best {
                best = max_error;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.stagnation_window {
                    return Err(RomError::Stagnation {
                        basis_size: modes.ncols(),
                        error: max_error,
                        partial: Box::new(outcome(&modes, &history)),
                    });
                }
            }
        }

        let residual = &fom[selected] - &modes * &proj[selected];
        let resid_norm = (0..residual.ncols()).map(|n| inner.norm_sq(residual.column(n).as_slice())).sum::<f64>();
        let full_norm = self_gram[selected].0.iter().sum::<f64>();
        if resid_norm <= 1e-24 * full_norm {
            // The selected trajectory already lies in the span.
            return Ok(outcome(&modes, &history));
        }
        let room = config.max_size - modes.ncols();
        let add = pod_matrix(&residual, inner, PodTarget::Rank(config.modes_per_iteration.min(room)))?;
        if add.is_empty() {
            // The selected trajectory already lies in the span.
            return Ok(outcome(&modes, &history));
        }
        let start = modes.ncols();
        modes = modes.insert_columns(start, add.len(), 0.0);
        modes.columns_mut(start, add.len()).copy_from(&add.modes);
        orthonormalize(&mut modes, inner, start);
        let new_cols = modes.columns(start, add.len()).transpose();
        for s in 0..train.len() {
            let rows = &new_cols * &xc[s];
            let p = std::mem::replace(&mut proj[s], DMatrix::zeros(0, 0));
            let old_rows = p.nrows();
            let mut grown = p.insert_rows(old_rows, rows.nrows(), 0.0);
            grown.rows_mut(old_rows, rows.nrows()).copy_from(&rows);
            proj[s] = grown;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::SparseOperator;
    use crate::rom::InnerProductTag;

    fn euclid(n: usize) -> InnerProduct {
        InnerProduct::new(InnerProductTag::L2, SparseOperator::identity(n))
    }

    /// Trajectories `c_n = a(mu) v1 + n b(mu) v2` in R^4.
    fn family(mu: f64) -> DMatrix<f64> {
        DMatrix::from_fn(4, 5, |i, n| match i {
            0 => 1.0 + mu,
            1 => n as f64 * mu * mu,
            2 => 0.1 * mu * n as f64,
            _ => 0.0,
        })
    }

    #[test]
    fn single_parameter_gives_its_pod() {
        let train = vec![vec![0.5]];
        let fom = vec![family(0.5)];
        let x = euclid(4);
        let reducer = ProjectionReducer { params: &train, trajectories: &fom, inner: &x };
        let cfg = GreedyConfig { target: 1e-12, max_size: 3, ..Default::default() };
        let out = strong_greedy(&train, &fom, &x, 0.1, &cfg, &reducer).unwrap();
        let direct = pod_matrix(&fom[0], &x, PodTarget::Rank(out.basis.len())).unwrap();
        let gram = out.basis.modes.transpose() * &direct.modes;
        // Same span.
        assert!((gram.transpose() * &gram - DMatrix::identity(out.basis.len(), out.basis.len())).amax() < 1e-10);
        assert!(out.max_error < 1e-6);
    }

    #[test]
    fn loose_target_returns_one_mode() {
        let train: Vec<Vec<f64>> = (1..=5).map(|s| vec![0.1 * s as f64]).collect();
        let fom: Vec<_> = train.iter().map(|m| family(m[0])).collect();
        let x = euclid(4);
        let reducer = ProjectionReducer { params: &train, trajectories: &fom, inner: &x };
        let cfg = GreedyConfig { target: 2.0, ..Default::default() };
        let out = strong_greedy(&train, &fom, &x, 0.1, &cfg, &reducer).unwrap();
        assert_eq!(out.basis.len(), 1);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn errors_reach_zero_when_span_is_complete() {
        let train: Vec<Vec<f64>> = (1..=6).map(|s| vec![0.2 * s as f64]).collect();
        let fom: Vec<_> = train.iter().map(|m| family(m[0])).collect();
        let x = euclid(4);
        let reducer = ProjectionReducer { params: &train, trajectories: &fom, inner: &x };
        let cfg = GreedyConfig { target: 1e-8, max_size: 4, ..Default::default() };
        let out = strong_greedy(&train, &fom, &x, 0.1, &cfg, &reducer).unwrap();
        assert!(out.basis.len() <= 3);
        assert!(out.max_error <= 1e-6);
    }
}
