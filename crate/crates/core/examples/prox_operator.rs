//! Interval table and values of the closed-form prox for
//! `h(x) = 0.2|x+1| + 0.3|x-1| + 0.5|x-4|` with `λ = 1`.

use proxdiff::prox::{prox, prox_oracle, Grid, WeightedAbsSum};

fn main() -> proxdiff::Result<()> {
    let h = WeightedAbsSum::new([(-1.0, 0.2), (1.0, 0.3), (4.0, 0.5)])?;
    let lambda = 1.0;

    println!("{:<10} {:>8} {:>8}", "piece", "lo", "hi");
    for iv in h.intervals(lambda) {
        println!(
            "{:<10} {:>8.3} {:>8.3}",
            format!("{:?}", iv.id),
            iv.lo,
            iv.hi
        );
    }

    println!(
        "\n{:>6} {:>10} {:>10} {:>10}",
        "v", "prox", "oracle", "gamma"
    );
    for v in [-3.0, -2.0, -1.8, 0.0, 0.7, 2.0, 4.5, 6.0] {
        let r = prox(&h, lambda, v)?;
        let o = prox_oracle(&h, lambda, v, Grid::covering(&h, lambda, v, 20_000))?;
        println!("{v:>6.2} {:>10.6} {o:>10.6} {:>10.3}", r.value, r.gamma);
    }
    Ok(())
}
