//! Head and tracer concentration at the reference log-conductivity.

use std::time::Instant;

use rbenkm::models::{TracerConfig, TracerModel, REFERENCE_LOG_CONDUCTIVITY};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TracerModel::new(TracerConfig::desk())?;
    let start = Instant::now();
    let sol = model.solve(&REFERENCE_LOG_CONDUCTIVITY)?;
    println!("forward solve: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    println!("Newton residuals: {:?}", sol.head.residuals);
    let head_max = sol.head.nodal.iter().cloned().fold(f64::MIN, f64::max);
    println!("max head: {head_max:.4}");
    let speed = sol.velocity.iter().map(|b| b[0].hypot(b[1])).fold(0.0, f64::max);
    println!("max speed: {speed:.4}");
    let n = (0.4 / model.grid.dt).round() as usize;
    for p in [[0.15, 0.15], [0.15, 0.85], [0.85, 0.15], [0.85, 0.85], [0.5, 0.5]] {
        let c = model.mesh.evaluate(sol.concentration.state(n).as_slice(), p)?;
        println!("c({:.2}, {:.2}; t=0.4) = {c:.4}", p[0], p[1]);
    }
    Ok(())
}
