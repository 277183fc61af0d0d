//! Proper orthogonal decomposition in a general inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{InnerProduct, InnerProductTag, RomError};

/// Snapshot columns with the parameters that produced them.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    /// Parameter of each snapshot group.
    pub params: Vec<Vec<f64>>,
    /// DOFs x columns.
    pub snapshots: DMatrix<f64>,
    /// Columns contributed by each parameter (1 for stationary fields).
    pub per_param: usize,
    pub tag: InnerProductTag,
}

impl SnapshotSet {
    pub fn new(params: Vec<Vec<f64>>, snapshots: DMatrix<f64>, per_param: usize, tag: InnerProductTag) -> Result<Self, RomError> {
        if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
            return Err(RomError::InvalidInput("empty snapshot matrix".into()));
        }
        if per_param == 0 || params.len() * per_param != snapshots.ncols() {
            return Err(RomError::InvalidInput(format!(
                "{} parameters x {per_param} columns do not match {} snapshots",
                params.len(),
                snapshots.ncols()
            )));
        }
        Ok(Self { params, snapshots, per_param, tag })
    }
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodTarget {
    Rank(usize),
    /// Smallest rank whose relative discarded energy
    /// `sqrt(sum_{i>N} s_i^2 / sum_i s_i^2)` is at most the tolerance.
    Energy(f64),
}

/// Orthonormal modes in the declared inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// DOFs x modes.
    pub modes: DMatrix<f64>,
    /// All singular values of the snapshot set, non-increasing.
    pub singular_values: Vec<f64>,
    pub tag: InnerProductTag,
    /// Set when fewer modes than requested carry energy.
    pub rank_deficient: bool,
}

impl PodBasis {
    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    /// Leading `n` modes.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            modes: self.modes.columns(0, n).into_owned(),
            singular_values: self.singular_values.clone(),
            tag: self.tag,
            rank_deficient: self.rank_deficient,
        }
    }

    /// `sum_{i > n} s_i^2`.
    pub fn discarded_energy(&self, n: usize) -> f64 {
        self.singular_values.iter().skip(n).map(|s| s * s).sum()
    }
}

/// Relative threshold below which singular values count as zero.
const RANK_TOL: f64 = 1e-10;

/// POD of `snapshots` in the inner product `x`. Uses the snapshot Gram
/// matrix when there are fewer columns than DOFs and the DOF-space
/// correlation matrix otherwise.
pub fn pod(snapshots: &SnapshotSet, x: &InnerProduct, target: PodTarget) -> Result<PodBasis, RomError> {
    if x.tag != snapshots.tag {
        return Err(RomError::InvalidInput(format!(
            "snapshot set declares {:?} but inner product is {:?}",
            snapshots.tag, x.tag
        )));
    }
    pod_matrix(&snapshots.snapshots, x, target)
}

/// POD of a bare snapshot matrix.
pub fn pod_matrix(s: &DMatrix<f64>, x: &InnerProduct, target: PodTarget) -> Result<PodBasis, RomError> {
    if s.ncols() == 0 || s.nrows() == 0 {
        return Err(RomError::InvalidInput("empty snapshot matrix".into()));
    }
    if s.nrows() != x.dim() {
        return Err(RomError::InvalidInput(format!("snapshots have {} rows, inner product {}", s.nrows(), x.dim())));
    }
    let (eigvals, modes_of) = if s.ncols() <= s.nrows() {
        snapshot_route(s, x)
    } else {
        dof_route(s, x)?
    };
    let singular_values: Vec<f64> = eigvals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    let achievable = singular_values.iter().take_while(|v| **v > RANK_TOL * s1 && s1 > 0.0).count();
    let wanted = match target {
        PodTarget::Rank(n) => n,
        PodTarget::Energy(tol) => {
            let total: f64 = singular_values.iter().map(|v| v * v).sum();
            let mut tail = total;
            let mut n = 0;
            while n < singular_values.len() && tail > tol * tol * total {
                tail -= singular_values[n] * singular_values[n];
                n += 1;
            }
            n.max(1)
        }
    };
    let rank_deficient = wanted > achievable;
    if rank_deficient {
        log::warn!("POD: requested {wanted} modes but the snapshots only support {achievable}");
    }
    let n = wanted.min(achievable);
    let mut modes = modes_of(n);
    orthonormalize(&mut modes, x, 0);
    Ok(PodBasis { modes, singular_values, tag: x.tag, rank_deficient })
}

type ModeBuilder<'a> = Box<dyn Fn(usize) -> DMatrix<f64> + 'a>;

fn sorted_eigen(c: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let vals = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn snapshot_route<'a>(s: &'a DMatrix<f64>, x: &'a InnerProduct) -> (Vec<f64>, ModeBuilder<'a>) {
    let xs = x.op.mul_dense(s);
    let mut c = s.transpose() * &xs;
    c = (&c + c.transpose()) * 0.5;
    let (vals, vecs) = sorted_eigen(c);
    let vals2 = vals.clone();
    (
        vals,
        Box::new(move |n| {
            let mut m = s * vecs.columns(0, n);
            for (k, mut col) in m.column_iter_mut().enumerate() {
                col /= vals2[k].max(f64::MIN_POSITIVE).sqrt();
            }
            m
        }),
    )
}

fn dof_route<'a>(s: &'a DMatrix<f64>, x: &'a InnerProduct) -> Result<(Vec<f64>, ModeBuilder<'a>), RomError> {
    let chol = x
        .op
        .to_dense()
        .cholesky()
        .ok_or_else(|| RomError::InvalidInput("inner product matrix is not positive definite".into()))?;
    let l = chol.l();
    let a = l.transpose() * s;
    let mut c = &a * a.transpose();
    c = (&c + c.transpose()) * 0.5;
    let (vals, vecs) = sorted_eigen(c);
    Ok((
        vals,
        Box::new(move |n| {
            let v = vecs.columns(0, n).into_owned();
            l.transpose().solve_upper_triangular(&v).expect("Cholesky factor is nonsingular")
        }),
    ))
}

/// Gram–Schmidt (two passes) in `x` for columns `start..`, keeping the
/// first `start` columns fixed, followed by the sign convention: the first
/// entry of non-negligible magnitude of every new column is positive.
pub fn orthonormalize(m: &mut DMatrix<f64>, x: &InnerProduct, start: usize) {
    for k in start..m.ncols() {
        for _ in 0..2 {
            let xk = x.op.mul_vec(m.column(k).as_slice());
            let xk = DVector::from_vec(xk);
            for j in 0..k {
                let proj = m.column(j).dot(&xk);
                let cj = m.column(j).into_owned();
                m.column_mut(k).axpy(-proj, &cj, 1.0);
            }
        }
        let nk = x.norm(m.column(k).as_slice());
        m.column_mut(k).unscale_mut(nk);
        let col = m.column(k);
        let scale = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                m.column_mut(k).neg_mut();
            }
        }
    }
}
