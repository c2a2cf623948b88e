//! Exact rational mean-field dynamics in one dimension, for checking the
//! convergence properties without rounding.

use std::cmp::Ordering;

use num::{BigInt, BigRational, Signed, Zero};

pub type Rational = BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Owner plus the `k - 1` others closest in `(|difference|, id)` order.
pub fn neighbors(values: &[Rational], owner: usize, k: usize) -> Vec<usize> {
    let order = ranking(values);
    let pos = order.iter().position(|&v| v == owner).expect("owner is ranked");
    neighbors_sorted(values, &order, pos, k)
}

/// Same as [`neighbors`], with `order = ranking(values)` and `order[pos] == owner`.
/// In one dimension the `k - 1` nearest others lie among the `k - 1` closest
/// positions on either side, widened over ties with the outermost value.
fn neighbors_sorted(values: &[Rational], order: &[usize], pos: usize, k: usize) -> Vec<usize> {
    let owner = order[pos];
    let want = k.saturating_sub(1);
    let mut lo = pos.saturating_sub(want);
    while lo > 0 && values[order[lo - 1]] == values[order[lo]] {
        lo -= 1;
    }
    let mut hi = (pos + want).min(order.len() - 1);
    while hi + 1 < order.len() && values[order[hi + 1]] == values[order[hi]] {
        hi += 1;
    }
    let mut others: Vec<(Rational, usize)> = order[lo..=hi]
        .iter()
        .filter(|&&v| v != owner)
        .map(|&v| ((&values[v] - &values[owner]).abs(), v))
        .collect();
    others.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut set = vec![owner];
    set.extend(others.into_iter().take(want).map(|(_, v)| v));
    set
}

/// One averaging step, optionally pulled towards `anchor` with weight `alpha`.
pub fn step(values: &[Rational], k: usize, alpha: Option<(&Rational, &[Rational])>) -> Vec<Rational> {
    let k = k.clamp(1, values.len().max(1));
    let order = ranking(values);
    let mut pos = vec![0; values.len()];
    for (p, &u) in order.iter().enumerate() {
        pos[u] = p;
    }
    (0..values.len())
        .map(|u| {
            let mut sum = neighbors_sorted(values, &order, pos[u], k)
                .into_iter()
                .fold(Rational::zero(), |acc, v| acc + &values[v]);
            let mut den = Rational::from_integer(BigInt::from(k));
            if let Some((a, anchor)) = alpha {
                sum += a * &anchor[u];
                den += a;
            }
            sum / den
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalRun {
    /// `states[t]` is the state after `t` steps.
    pub states: Vec<Vec<Rational>>,
    /// First `t` with `states[t + 1] == states[t]`.
    pub fixed_point_at: Option<usize>,
}

impl RationalRun {
    pub fn last(&self) -> &[Rational] {
        self.states.last().expect("at least the initial state")
    }
}

/// Iterates until an exact fixed point or `max_steps` transitions.
pub fn run(initial: Vec<Rational>, k: usize, max_steps: usize) -> RationalRun {
    let mut states = vec![initial];
    let mut fixed_point_at = None;
    for t in 0..max_steps {
        let next = step(&states[t], k, None);
        let done = next == states[t];
        states.push(next);
        if done {
            fixed_point_at = Some(t);
            break;
        }
    }
    RationalRun {
        states,
        fixed_point_at,
    }
}

/// Sizes of the equal-value classes, indexed by user.
pub fn class_sizes(values: &[Rational]) -> Vec<usize> {
    values
        .iter()
        .map(|x| values.iter().filter(|y| *y == x).count())
        .collect()
}

/// Users sorted by `(value, id)`.
pub fn ranking(values: &[Rational]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..values.len()).collect();
    ids.sort_by(|&a, &b| match values[a].cmp(&values[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    ids
}

pub fn to_f64(x: &Rational) -> f64 {
    use num::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}
