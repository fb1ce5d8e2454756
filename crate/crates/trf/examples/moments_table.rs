//! Print the generalized Gaussian moments (d0, d1, d2) of every built-in
//! activation at a few scales, and cross-check the closed forms against the
//! quadrature fallback.
//!
//! Run with: cargo run --release --example moments_table

use trf::moments::{moments_closed_form, moments_quadrature_kind, ActivationKind};

fn main() -> trf::Result<()> {
    println!("{:<18} {:>6} {:>14} {:>14} {:>14} {:>10}", "activation", "tau", "d0", "d1", "d2", "quad err");
    for tau in [0.25, 1.0, 4.0] {
        for kind in ActivationKind::builtin_table((-0.5, 0.8)) {
            let closed = moments_closed_form(&kind, tau)?;
            let quad = moments_quadrature_kind(&kind, tau, 512)?;
            let err = (closed.d0 - quad.d0)
                .abs()
                .max((closed.d1 - quad.d1).abs())
                .max((closed.d2 - quad.d2).abs());
            println!(
                "{:<18} {:>6} {:>14.8} {:>14.8} {:>14.8} {:>10.2e}",
                kind.to_string(),
                tau,
                closed.d0,
                closed.d1,
                closed.d2,
                err
            );
        }
        println!();
    }
    Ok(())
}
