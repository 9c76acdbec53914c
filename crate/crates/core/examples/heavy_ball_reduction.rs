//! Meta-learning `φ(x, w) = w` with linear weights and a constant step is
//! Heavy Ball with momentum `(t−2)/(t+1)`.

use metagrad::analysis::{certify_heavy_ball_reduction, gradient_descent};
use metagrad::problems::QuadraticProblem;

fn main() -> metagrad::Result<()> {
    let p = QuadraticProblem::generate(10, 2)?;
    let x0 = p.default_start();
    let beta = 0.5 / p.smoothness();
    let (cert, traj) = certify_heavy_ball_reduction(&p, beta, 200, &x0, &x0)?;
    println!("passed: {}, max residual {:.2e}", cert.passed, cert.max_residual);
    println!(
        "momentum at t = 2, 10, 100: {:.4} {:.4} {:.4}",
        cert.rho_tilde[0], cert.rho_tilde[8], cert.rho_tilde[98]
    );
    if let Some(r) = cert.printed_form_residual {
        println!("residual with β̃_t = t/(4(t+1)L) instead: {r:.2e}");
    }
    let gd = gradient_descent(&p, 1.0 / p.smoothness(), 200, &x0)?;
    println!(
        "final gap: meta-learned {:.3e}, gradient descent {:.3e}",
        traj.final_gap(),
        gd.final_gap()
    );
    Ok(())
}
