//! Hoyer sparsity of estimate differences, the adaptive factors it yields and
//! the reweighting factors on a two-node, two-cluster network.

use nalgebra::DVector;
use proxdiff::regularization::{adaptive_p, sparsity_measure, RegularizerSpec, ReweightState};
use proxdiff::topology::ClusteredTopology;

fn main() -> proxdiff::Result<()> {
    let m = 18;
    let ones_until = |n: usize| DVector::from_fn(m, |i, _| if i < n { 1.0 } else { 0.0 });
    println!("{:<16} {:>8}", "distinct entries", "xi");
    for n in [0, 1, 2, 7, 12, 18] {
        println!("{n:<16} {:>8.4}", sparsity_measure(&ones_until(n))?);
    }

    let topo = ClusteredTopology::new(&[0, 1], [(0, 1)])?;
    let spec = RegularizerSpec::reweighted(0.04, 0.1).with_adaptive_p(1.0);
    let phi = vec![
        DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]),
        DVector::from_vec(vec![0.3, -1.0, 1.0, 0.51]),
    ];
    println!("\np(phi) = {:.4}", adaptive_p(&phi, &topo, &spec)?[(0, 1)]);

    let mut rw = ReweightState::new(&topo, 4, &spec);
    rw.record_differences(&phi);
    rw.refresh_alpha(&spec);
    println!("phi_0 - phi_1 = {:?}", rw.delta[0][0].as_slice());
    println!(
        "alpha_01      = {:?}",
        rw.alpha_for(0, 1).unwrap().as_slice()
    );
    Ok(())
}
