//! Seeded ill-conditioned quadratics and their JSON form.

use metagrad::problems::{Objective, QuadraticProblem};

fn main() -> metagrad::Result<()> {
    for seed in 0..3 {
        let p = QuadraticProblem::generate(2, seed)?;
        let x0 = p.default_start();
        println!(
            "seed {seed}: eigenvalues {:?}, L = {:.3}, f(x0) = {:.3}",
            p.eigenvalues(),
            p.smoothness(),
            p.eval(&x0)?
        );
    }
    let p = QuadraticProblem::generate(10, 4)?;
    let json = p.to_json()?;
    let back = QuadraticProblem::from_json(&json)?;
    assert_eq!(back.q_matrix(), p.q_matrix());
    println!("10-dim problem round-trips through {} bytes of JSON", json.len());
    println!("minimiser {:?}", p.minimizer().map(|x| x.norm()));
    Ok(())
}
