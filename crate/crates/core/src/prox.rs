//! Closed-form proximal operator of a weighted sum of shifted absolute values.
//!
//! For `h(x) = Σⱼ cⱼ|x − bⱼ|` with `cⱼ > 0` and sorted breakpoints, the real
//! line splits into `J + 1` intervals whose endpoints depend only on `λ`,
//! the breakpoints and the cumulative weights. On each interval the prox is
//! either a constant (one of the breakpoints) or a unit-slope shift of `v`,
//! which gives an exact `O(J)` evaluation with no iteration.
//!
//! The prox can also be written as `v − λΓ(v)` where `Γ` is a sum of clipped
//! terms; [`gamma`] evaluates that form directly so the two routes can be
//! checked against each other, and [`prox_oracle`] provides an independent
//! numerical minimizer.

use crate::error::{Error, Result};

/// `h(x) = Σⱼ cⱼ|x − bⱼ|` with strictly increasing breakpoints and positive weights.
///
/// The empty sum is the zero function.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedAbsSum {
    breakpoints: Vec<f64>,
    weights: Vec<f64>,
    /// `prefix[j] = Σ_{i<j} cᵢ`, length `J + 1`.
    prefix: Vec<f64>,
}

/// Which piece of the interval decomposition contained the input.
///
/// Indices are zero-based breakpoint indices: `Flat(j)` is the interval on
/// which the prox returns `bⱼ`, `Slope(j)` the interval between the flat
/// pieces of `bⱼ` and `bⱼ₊₁` (unbounded above for the last breakpoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalId {
    /// Left of every flat piece; the prox is `v + λΣc`.
    Below,
    Flat(usize),
    Slope(usize),
    /// `λ = 0` or the empty sum: the prox is the identity.
    Identity,
}

/// Output of [`prox`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxResult {
    pub value: f64,
    /// Subgradient of `h` at `value` satisfying `value = v − λ·gamma`.
    pub gamma: f64,
    pub interval: IntervalId,
}

/// A half-open interval `[lo, hi)` of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub id: IntervalId,
    pub lo: f64,
    pub hi: f64,
}

impl WeightedAbsSum {
    /// Canonicalizes raw `(b, c)` terms: zero weights dropped, equal
    /// breakpoints merged by summing weights, result sorted by breakpoint.
    pub fn new<I>(raw_terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut terms: Vec<(f64, f64)> = Vec::new();
        for (b, c) in raw_terms {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::InvalidWeight {
                    breakpoint: b,
                    weight: c,
                });
            }
            if !b.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite breakpoint {b}")));
            }
            if c > 0.0 {
                terms.push((b, c));
            }
        }
        terms.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut breakpoints: Vec<f64> = Vec::with_capacity(terms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(terms.len());
        for (b, c) in terms {
            match breakpoints.last() {
                Some(&last) if last == b => *weights.last_mut().unwrap() += c,
                _ => {
                    breakpoints.push(b);
                    weights.push(c);
                }
            }
        }
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &c in &weights {
            acc += c;
            prefix.push(acc);
        }
        Ok(Self {
            breakpoints,
            weights,
            prefix,
        })
    }

    /// The zero function.
    pub fn zero() -> Self {
        Self {
            breakpoints: Vec::new(),
            weights: Vec::new(),
            prefix: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    /// `Σⱼ cⱼ`.
    pub fn total_weight(&self) -> f64 {
        *self.prefix.last().unwrap_or(&0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms().map(|(b, c)| c * (x - b).abs()).sum()
    }

    /// The subdifferential `∂h(x)` as a closed interval `(lo, hi)`.
    pub fn subdifferential(&self, x: f64) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (b, c) in self.terms() {
            if x > b {
                lo += c;
                hi += c;
            } else if x < b {
                lo -= c;
                hi -= c;
            } else {
                lo -= c;
                hi += c;
            }
        }
        (lo, hi)
    }

    /// Slope offset `Σ_{i≥j} cᵢ − Σ_{i<j} cᵢ` for `j` in `0..=J`.
    fn offset(&self, j: usize) -> f64 {
        self.total_weight() - 2.0 * self.prefix[j]
    }

    /// The interval decomposition for step `lambda`, in increasing order.
    ///
    /// For `lambda = 0` the flat pieces are empty (`lo == hi`).
    pub fn intervals(&self, lambda: f64) -> Vec<Interval> {
        let n = self.len();
        if n == 0 {
            return vec![Interval {
                id: IntervalId::Identity,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            }];
        }
        let mut out = Vec::with_capacity(2 * n + 1);
        out.push(Interval {
            id: IntervalId::Below,
            lo: f64::NEG_INFINITY,
            hi: self.flat_lo(0, lambda),
        });
        for j in 0..n {
            out.push(Interval {
                id: IntervalId::Flat(j),
                lo: self.flat_lo(j, lambda),
                hi: self.slope_lo(j, lambda),
            });
            out.push(Interval {
                id: IntervalId::Slope(j),
                lo: self.slope_lo(j, lambda),
                hi: self.slope_hi(j, lambda),
            });
        }
        out
    }

    fn flat_lo(&self, j: usize, lambda: f64) -> f64 {
        self.breakpoints[j] - lambda * self.offset(j)
    }

    fn slope_lo(&self, j: usize, lambda: f64) -> f64 {
        self.breakpoints[j] - lambda * self.offset(j + 1)
    }

    fn slope_hi(&self, j: usize, lambda: f64) -> f64 {
        match self.breakpoints.get(j + 1) {
            Some(&next) => next - lambda * self.offset(j + 1),
            None => f64::INFINITY,
        }
    }

    /// `Σⱼ cⱼ·sign(v − bⱼ)` with `sign(0) = 0`.
    fn natural_subgradient(&self, v: f64) -> f64 {
        self.terms()
            .map(|(b, c)| {
                if v > b {
                    c
                } else if v < b {
                    -c
                } else {
                    0.0
                }
            })
            .sum()
    }
}

fn check_args(lambda: f64, v: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidStepsize(lambda));
    }
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite prox input {v}")));
    }
    Ok(())
}

/// `argmin_x h(x) + (x − v)²/(2λ)` by the interval table.
pub fn prox(h: &WeightedAbsSum, lambda: f64, v: f64) -> Result<ProxResult> {
    check_args(lambda, v)?;
    let n = h.len();
    if n == 0 || lambda == 0.0 {
        return Ok(ProxResult {
            value: v,
            gamma: h.natural_subgradient(v),
            interval: IntervalId::Identity,
        });
    }

    let total = h.total_weight();
    if v < h.flat_lo(0, lambda) {
        return Ok(ProxResult {
            value: v + lambda * total,
            gamma: -total,
            interval: IntervalId::Below,
        });
    }
    for j in 0..n {
        if v < h.slope_lo(j, lambda) {
            let b = h.breakpoints[j];
            return Ok(ProxResult {
                value: b,
                gamma: (v - b) / lambda,
                interval: IntervalId::Flat(j),
            });
        }
        if v < h.slope_hi(j, lambda) {
            let s = h.offset(j + 1);
            return Ok(ProxResult {
                value: v + lambda * s,
                gamma: -s,
                interval: IntervalId::Slope(j),
            });
        }
    }
    unreachable!("last slope interval is unbounded above")
}

/// The limiter `Γ(v)` from its compact sum-of-clipped-terms form.
pub fn gamma(h: &WeightedAbsSum, lambda: f64, v: f64) -> Result<f64> {
    check_args(lambda, v)?;
    if lambda == 0.0 {
        return Err(Error::InvalidStepsize(lambda));
    }
    let mut acc = 0.0;
    for (j, &b) in h.breakpoints.iter().enumerate() {
        let u = (v - b) / lambda;
        acc += (u + h.offset(j)).abs() - (u + h.offset(j + 1)).abs();
    }
    Ok(0.5 * acc)
}

/// `h(x) + (x − v)²/(2λ)`.
pub fn objective(h: &WeightedAbsSum, lambda: f64, v: f64, x: f64) -> f64 {
    h.eval(x) + (x - v) * (x - v) / (2.0 * lambda)
}

/// Uniform search grid `lo, lo + step, …, ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    const MAX_POINTS: f64 = 1e8;

    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    /// Smallest range guaranteed to contain the minimizer, split into `cells` cells.
    pub fn covering(h: &WeightedAbsSum, lambda: f64, v: f64, cells: usize) -> Self {
        let (lo, hi) = required_span(h, lambda, v);
        let step = (hi - lo) / cells.max(1) as f64;
        Self { lo, hi, step }
    }
}

fn required_span(h: &WeightedAbsSum, lambda: f64, v: f64) -> (f64, f64) {
    let reach = lambda * h.total_weight() + v.abs();
    let bmin = h.breakpoints.first().copied().unwrap_or(0.0);
    let bmax = h.breakpoints.last().copied().unwrap_or(0.0);
    (bmin.min(0.0) - reach, bmax.max(0.0) + reach)
}

/// Brute-force minimizer: grid scan, then ternary search inside the best cell.
pub fn prox_oracle(h: &WeightedAbsSum, lambda: f64, v: f64, grid: Grid) -> Result<f64> {
    check_args(lambda, v)?;
    if lambda == 0.0 {
        return Err(Error::InvalidStepsize(lambda));
    }
    let Grid { lo, hi, step } = grid;
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || !(step > 0.0) || !(lo < hi) {
        return Err(Error::InvalidInput(format!(
            "degenerate grid ({lo}, {hi}, {step})"
        )));
    }
    let cells = ((hi - lo) / step).ceil();
    if cells > Grid::MAX_POINTS {
        return Err(Error::InvalidInput(format!("grid too fine: {cells} cells")));
    }
    let (need_lo, need_hi) = required_span(h, lambda, v);
    if lo > need_lo || hi < need_hi {
        return Err(Error::InvalidInput(format!(
            "grid [{lo}, {hi}] does not span [{need_lo}, {need_hi}]"
        )));
    }

    let f = |x: f64| objective(h, lambda, v, x);
    let cells = cells as usize;
    let point = |i: usize| (lo + i as f64 * step).min(hi);
    let mut best_i = 0;
    let mut best_f = f(lo);
    for i in 1..=cells {
        let fx = f(point(i));
        if fx < best_f {
            best_f = fx;
            best_i = i;
        }
    }

    // convex objective: the minimizer lies within one cell of the best grid point
    let mut a = point(best_i.saturating_sub(1));
    let mut b = point((best_i + 1).min(cells));
    for _ in 0..300 {
        if b - a <= 1e-10 {
            break;
        }
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if f(refined) <= best_f {
        refined
    } else {
        point(best_i)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig2c() -> WeightedAbsSum {
        WeightedAbsSum::new([(-1.0, 0.2), (1.0, 0.3), (4.0, 0.5)]).unwrap()
    }

    #[test]
    fn build_canonicalizes() {
        let h = WeightedAbsSum::new([(2.0, 0.5)]).unwrap();
        assert_eq!(h.terms().collect::<Vec<_>>(), vec![(2.0, 0.5)]);

        let h = WeightedAbsSum::new([(1.0, 0.3), (1.0, 0.2)]).unwrap();
        assert_eq!(h.terms().collect::<Vec<_>>(), vec![(1.0, 0.5)]);

        let h = WeightedAbsSum::new([(3.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(h.terms().collect::<Vec<_>>(), vec![(0.0, 1.0)]);

        let h = WeightedAbsSum::new([(4.0, 1.0), (-2.0, 1.0), (0.5, 2.0)]).unwrap();
        assert_eq!(h.breakpoints(), &[-2.0, 0.5, 4.0]);
        assert_eq!(h.total_weight(), 4.0);
    }

    #[test]
    fn build_rejects_negative_weight() {
        let err = WeightedAbsSum::new([(0.0, 1.0), (1.0, -0.1)]).unwrap_err();
        assert!(matches!(err, Error::InvalidWeight { .. }));
        assert!(WeightedAbsSum::new([(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        let h = WeightedAbsSum::new([(0.0, 1.0)]).unwrap();
        assert_eq!(prox(&h, 1.0, 2.0).unwrap().value, 1.0);
        assert_eq!(prox(&h, 1.0, 0.5).unwrap().value, 0.0);
        assert_eq!(gamma(&h, 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(gamma(&h, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn fig2c_table() {
        let h = fig2c();
        for (v, expect) in [(0.0, 0.6), (2.0, 2.0), (4.5, 4.0), (6.0, 5.0)] {
            let r = prox(&h, 1.0, v).unwrap();
            assert!((r.value - expect).abs() < 1e-12, "v={v}: {}", r.value);
        }
        assert_eq!(prox(&h, 1.0, 4.5).unwrap().interval, IntervalId::Flat(2));
        assert!((gamma(&h, 1.0, 0.0).unwrap() + 0.6).abs() < 1e-12);
        assert!((prox(&h, 1.0, 0.0).unwrap().gamma + 0.6).abs() < 1e-12);

        let ends: Vec<f64> = h.intervals(1.0)[1..].iter().map(|i| i.lo).collect();
        let expect = [-2.0, -1.6, 0.4, 1.0, 4.0, 5.0];
        for (e, x) in expect.iter().zip(&ends) {
            assert!((e - x).abs() < 1e-12, "{ends:?}");
        }
    }

    #[test]
    fn oracle_examples() {
        let h = WeightedAbsSum::new([(0.0, 1.0)]).unwrap();
        let x = prox_oracle(&h, 1.0, 2.0, Grid::new(-5.0, 5.0, 1e-4)).unwrap();
        assert!((x - 1.0).abs() < 1e-4);

        let h = WeightedAbsSum::new([(2.0, 0.5)]).unwrap();
        let x = prox_oracle(&h, 1.0, 0.0, Grid::new(-5.0, 5.0, 1e-3)).unwrap();
        assert!((x - 0.5).abs() < 1e-4);

        let x = prox_oracle(&fig2c(), 1.0, 4.5, Grid::new(-10.0, 10.0, 1e-3)).unwrap();
        assert!((x - 4.0).abs() < 1e-4);
    }

    #[test]
    fn oracle_rejects_bad_grids() {
        let h = fig2c();
        for g in [
            Grid::new(0.0, 0.0, 0.1),
            Grid::new(-10.0, 10.0, 0.0),
            Grid::new(-10.0, 10.0, -1.0),
            Grid::new(f64::NEG_INFINITY, 10.0, 0.1),
            Grid::new(-1.0, 1.0, 0.01),
        ] {
            assert!(matches!(
                prox_oracle(&h, 1.0, 0.0, g),
                Err(Error::InvalidInput(_))
            ));
        }
    }

    #[test]
    fn zero_lambda_and_empty_sum_are_identity() {
        let h = fig2c();
        let r = prox(&h, 0.0, 1.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.interval, IntervalId::Identity);
        // sign(1-1) = 0 contributes nothing
        assert!((r.gamma - (0.2 - 0.5)).abs() < 1e-15);

        let r = prox(&WeightedAbsSum::zero(), 3.0, -7.5).unwrap();
        assert_eq!(r.value, -7.5);
        assert_eq!(r.gamma, 0.0);
        assert_eq!(gamma(&WeightedAbsSum::zero(), 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        let h = fig2c();
        assert!(matches!(
            prox(&h, -1.0, 0.0),
            Err(Error::InvalidStepsize(_))
        ));
        assert!(matches!(
            prox(&h, f64::NAN, 0.0),
            Err(Error::InvalidStepsize(_))
        ));
        assert!(matches!(
            prox(&h, 1.0, f64::INFINITY),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            gamma(&h, 0.0, 1.0),
            Err(Error::InvalidStepsize(_))
        ));
    }

    fn instance() -> impl Strategy<Value = (WeightedAbsSum, f64)> {
        (
            prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..=6),
            0.01f64..2.0,
        )
            .prop_map(|(terms, lambda)| (WeightedAbsSum::new(terms).unwrap(), lambda))
    }

    proptest! {
        #[test]
        fn matches_oracle((h, lambda) in instance(), v in -10.0f64..10.0) {
            let p = prox(&h, lambda, v).unwrap().value;
            let o = prox_oracle(&h, lambda, v, Grid::covering(&h, lambda, v, 2000)).unwrap();
            prop_assert!((p - o).abs() <= 1e-4, "prox {p} oracle {o}");
            prop_assert!(objective(&h, lambda, v, p) <= objective(&h, lambda, v, o) + 1e-8);
        }

        #[test]
        fn monotone_and_nonexpansive((h, lambda) in instance(), u in -10.0f64..10.0, w in -10.0f64..10.0) {
            let (u, w) = if u <= w { (u, w) } else { (w, u) };
            let pu = prox(&h, lambda, u).unwrap().value;
            let pw = prox(&h, lambda, w).unwrap().value;
            prop_assert!(pw - pu >= -1e-12);
            prop_assert!(pw - pu <= (w - u) + 1e-12);
        }

        #[test]
        fn compact_form_identity((h, lambda) in instance(), v in -10.0f64..10.0) {
            let r = prox(&h, lambda, v).unwrap();
            let g = gamma(&h, lambda, v).unwrap();
            let scale = v.abs().max(lambda * h.total_weight()).max(1.0);
            prop_assert!((v - r.value - lambda * g).abs() <= 1e-12 * scale);
            prop_assert!((r.gamma - g).abs() <= 1e-12 * scale / lambda);
        }

        #[test]
        fn gamma_bounded((h, lambda) in instance(), v in -10.0f64..10.0) {
            let r = prox(&h, lambda, v).unwrap();
            let s = h.total_weight();
            prop_assert!(r.gamma.abs() <= s * (1.0 + 1e-12));
            if matches!(r.interval, IntervalId::Below) || r.interval == IntervalId::Slope(h.len() - 1) {
                prop_assert!((r.gamma.abs() - s).abs() <= 1e-12 * s);
            }
        }

        #[test]
        fn intervals_tile_the_line((h, lambda) in instance()) {
            let iv = h.intervals(lambda);
            prop_assert_eq!(iv.len(), 2 * h.len() + 1);
            prop_assert_eq!(iv[0].lo, f64::NEG_INFINITY);
            prop_assert_eq!(iv.last().unwrap().hi, f64::INFINITY);
            for pair in iv.windows(2) {
                prop_assert!(pair[0].lo <= pair[0].hi);
                prop_assert_eq!(pair[0].hi, pair[1].lo);
            }
        }

        #[test]
        fn reported_interval_contains_input((h, lambda) in instance(), v in -10.0f64..10.0) {
            let r = prox(&h, lambda, v).unwrap();
            let iv = h.intervals(lambda).into_iter().find(|i| i.id == r.interval).unwrap();
            prop_assert!(iv.lo <= v && v < iv.hi);
        }

        #[test]
        fn soft_threshold_reduction(c in 0.01f64..5.0, lambda in 0.0f64..3.0, v in -20.0f64..20.0) {
            let h = WeightedAbsSum::new([(0.0, c)]).unwrap();
            let expect = v.signum() * (v.abs() - lambda * c).max(0.0);
            prop_assert_eq!(prox(&h, lambda, v).unwrap().value, expect);
        }

        #[test]
        fn gamma_is_subgradient_at_prox((h, lambda) in instance(), v in -10.0f64..10.0) {
            let r = prox(&h, lambda, v).unwrap();
            let (lo, hi) = h.subdifferential(r.value);
            prop_assert!(r.gamma >= lo - 1e-9 && r.gamma <= hi + 1e-9,
                "gamma {} not in [{lo}, {hi}]", r.gamma);
        }
    }
}
