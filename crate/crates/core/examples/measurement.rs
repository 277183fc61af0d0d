//! Windowed Riesz sensors on a Taylor–Green trajectory and synthetic data.

use rbenkm::models::{TaylorGreenConfig, TaylorGreenModel};
use rbenkm::observe::{relative_noise_scale, synthesize_data, MeasurementOperator, NoiseModel, RieszSensors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TaylorGreenModel::new(TaylorGreenConfig::desk())?;
    let sensors = RieszSensors::taylor_green();
    let op = MeasurementOperator::riesz(&model.mesh, Some(&model.dofs), &model.grid, &sensors)?;
    println!("{} sensors x {} windows = {} measurements", op.num_sensors(), op.num_measurements() / op.num_sensors(), op.num_measurements());

    let forward = |mu: &[f64]| -> Result<_, String> {
        let traj = model.solve(mu[0]).map_err(|e| e.to_string())?;
        op.measure(&traj.coefficients).map_err(|e| e.to_string())
    };
    let clean = forward(&[0.04])?;
    let scale = relative_noise_scale(&clean)?;
    println!("measurement scale |G(mu*)|_inf = {scale:.3e}");

    let noise = NoiseModel::isotropic(1e-2 * scale, clean.len())?;
    let record = synthesize_data(forward, &[0.04], &noise, 7)?;
    let diff = record.data() - record.clean();
    println!("noise realization: |eta|_inf = {:.3e}, whitened norm^2 / Nm = {:.3}", diff.amax(), noise.weighted_norm(&diff)?.powi(2) / clean.len() as f64);
    for (j, v) in record.clean().iter().take(6).enumerate() {
        println!("  y_{j} = {v:.4e}");
    }
    Ok(())
}
