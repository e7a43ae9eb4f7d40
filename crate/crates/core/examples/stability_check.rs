use proxdiff::analysis::{Covariance, StabilityReport};
use proxdiff::topology::{uniform_weights, ClusteredTopology};

fn main() -> proxdiff::Result<()> {
    // Five-node ring split into two clusters, isotropic regressors.
    let topo = ClusteredTopology::new(&[0, 0, 0, 1, 1], [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])?;
    let weights = uniform_weights(&topo);
    let cov: Vec<Covariance> = [1.0, 1.5, 2.0, 0.8, 1.2]
        .map(Covariance::Isotropic)
        .to_vec();

    for mu in [0.1, 0.6, 1.2] {
        let r = StabilityReport::new(&weights, &[mu; 5], &cov, 0.05, 0.1, 4)?;
        println!("mu = {mu}");
        println!("  per-node bounds {:.3?}", r.bounds);
        println!("  all below bound {}", r.all_pass());
        println!("  ||B||_b,inf     {:.4}", r.block_norm);
        match r.bias.l1 {
            Some(b) => println!("  l1 bias bound   {b:.4e}"),
            None => println!("  l1 bias bound   none (||B|| >= 1)"),
        }
    }
    Ok(())
}
