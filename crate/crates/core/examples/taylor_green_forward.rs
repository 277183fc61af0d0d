//! Full-order Taylor–Green solve at desk resolution for three Péclet
//! numbers. Prints the solution maximum at a few times and the wall time.

use std::time::Instant;

use rbenkm::models::{TaylorGreenConfig, TaylorGreenModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TaylorGreenModel::new(TaylorGreenConfig::desk())?;
    println!("free DOFs: {}, time steps: {}", model.num_dofs(), model.grid.nt);
    for mu in [1.0 / 10.0, 1.0 / 30.0, 1.0 / 50.0] {
        let start = Instant::now();
        let traj = model.solve(mu)?;
        let elapsed = start.elapsed();
        print!("mu = {mu:.4}  ({:.1} ms)", elapsed.as_secs_f64() * 1e3);
        for t in [0.2, 0.8, 1.4, 2.0] {
            let n = (t / model.grid.dt).round() as usize;
            let max = traj.state(n).amax();
            print!("  max|c(t={t})| = {max:.3}");
        }
        println!();
    }
    Ok(())
}
