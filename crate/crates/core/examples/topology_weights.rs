//! Builds a small clustered network and prints its combination matrices.

use proxdiff::topology::{uniform_weights, ClusteredTopology};

fn main() -> proxdiff::Result<()> {
    // Two clusters of three nodes joined by two links.
    let clusters = [0, 0, 0, 1, 1, 1];
    let edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (2, 3), (1, 4)];
    let topo = ClusteredTopology::new(&clusters, edges)?;
    let w = uniform_weights(&topo);

    for k in 0..topo.n_nodes() {
        println!(
            "node {k}: cluster {}, intra {:?}, extra {:?}",
            topo.cluster_of(k),
            topo.intra_neighbors(k),
            topo.extra_neighbors(k)
        );
    }
    println!("C (right-stochastic){:.3}", w.c);
    println!("A (left-stochastic){:.3}", w.a);
    println!("p = (rho + rho^T)/2{:.3}", w.p);
    Ok(())
}
