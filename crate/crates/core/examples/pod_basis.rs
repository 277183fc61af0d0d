//! POD of Taylor–Green snapshots in the H1 inner product: singular value
//! decay and projection error of a held-out trajectory.

use nalgebra::DMatrix;
use rbenkm::models::{TaylorGreenConfig, TaylorGreenModel};
use rbenkm::rom::{pod_matrix, space_time_norm, InnerProduct, InnerProductTag, PodTarget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TaylorGreenModel::new(TaylorGreenConfig::desk())?;
    let mus: Vec<f64> = (0..9).map(|k| 0.01 + 0.0125 * k as f64).collect();
    let trajs = mus.iter().map(|&mu| model.solve(mu).map(|t| t.coefficients)).collect::<Result<Vec<_>, _>>()?;
    let cols = trajs[0].ncols();
    let snapshots = DMatrix::from_fn(model.num_dofs(), cols * trajs.len(), |i, c| trajs[c / cols][(i, c % cols)]);
    let x = InnerProduct::new(InnerProductTag::H1, model.h1_inner_product());
    let basis = pod_matrix(&snapshots, &x, PodTarget::Energy(1e-6))?;
    println!("{} snapshots, {} modes kept", snapshots.ncols(), basis.len());
    let s0 = basis.singular_values[0];
    for (k, s) in basis.singular_values.iter().take(basis.len()).enumerate().step_by(8) {
        println!("  sigma_{k:<3} / sigma_0 = {:.3e}", s / s0);
    }

    let held_out = model.solve(0.037)?.coefficients;
    let gram = x.op.to_dense();
    for n in [2, 4, 8, 16, basis.len()] {
        let v = basis.modes.columns(0, n);
        let coeffs = v.transpose() * &gram * &held_out;
        let err = space_time_norm(&(&held_out - v * coeffs), &x.op, model.grid.dt) / space_time_norm(&held_out, &x.op, model.grid.dt);
        println!("n = {n:<3} relative projection error {err:.3e}");
    }
    Ok(())
}
