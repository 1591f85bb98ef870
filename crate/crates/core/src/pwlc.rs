//! Piecewise-linear convex value functions over the belief simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::model::Belief;
use crate::value::ValueFunction;

/// Default margin below which a vector is considered redundant.
pub const PRUNE_TOL: f64 = 1e-9;

/// A linear function over beliefs, `b -> coeffs . b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub coeffs: Vec<f64>,
    /// Action whose backup produced this vector.
    #[serde(default)]
    pub action: Option<usize>,
    /// Per-observation index into the predecessor set.
    #[serde(default)]
    pub witnesses: Option<Vec<usize>>,
}

impl AlphaVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            action: None,
            witnesses: None,
        }
    }

    pub fn with_action(mut self, action: usize) -> Self {
        self.action = Some(action);
        self
    }

    pub fn with_witnesses(mut self, witnesses: Vec<usize>) -> Self {
        self.witnesses = Some(witnesses);
        self
    }

    pub fn dot(&self, b: &[f64]) -> f64 {
        dot(&self.coeffs, b)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `V(b) = max_i alpha_i . b` over a nonempty set without exact duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AlphaVector>", into = "Vec<AlphaVector>")]
pub struct PwlcFn {
    vectors: Vec<AlphaVector>,
}

impl PwlcFn {
    /// Builds a function from vectors, dropping exact duplicates (the first
    /// copy is kept).
    pub fn new(vectors: Vec<AlphaVector>) -> Result<Self> {
        let n = match vectors.first() {
            Some(v) => v.len(),
            None => return Err(Error::Validation("a PWLC function needs at least one vector".into())),
        };
        if n == 0 {
            return Err(Error::Validation("alpha vectors must be nonempty".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    left: v.len(),
                    right: n,
                });
            }
            if v.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("vector {i} has non-finite entries")));
            }
        }
        let keep = dedup_indices(&vectors.iter().map(|v| v.coeffs.as_slice()).collect::<Vec<_>>());
        let vectors = if keep.len() == vectors.len() {
            vectors
        } else {
            let mut mask = vec![false; vectors.len()];
            keep.iter().for_each(|&i| mask[i] = true);
            vectors
                .into_iter()
                .zip(mask)
                .filter_map(|(v, k)| k.then_some(v))
                .collect()
        };
        Ok(Self { vectors })
    }

    /// The constant function `c` over `num_states` states.
    pub fn constant(num_states: usize, c: f64) -> Self {
        Self {
            vectors: vec![AlphaVector::new(vec![c; num_states])],
        }
    }

    pub fn from_coeffs(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(AlphaVector::new).collect())
    }

    pub fn vectors(&self) -> &[AlphaVector] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<AlphaVector> {
        self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.vectors[0].len()
    }

    /// Value and index of the maximizing vector; ties go to the lowest index.
    pub fn eval(&self, b: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in self.vectors.iter().enumerate() {
            let x = v.dot(b);
            if x > best.0 {
                best = (x, i);
            }
        }
        best
    }

    /// `max_i alpha_i(s)` for every state.
    pub fn corner_values(&self) -> Vec<f64> {
        let n = self.num_states();
        (0..n)
            .map(|s| {
                self.vectors
                    .iter()
                    .map(|v| v.coeffs[s])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Removes duplicate and redundant vectors without changing the function.
    pub fn prune(&self, tol: f64) -> Result<PwlcFn> {
        let rows: Vec<&[f64]> = self.vectors.iter().map(|v| v.coeffs.as_slice()).collect();
        let keep = prune_indices(&rows, tol)?;
        Ok(Self {
            vectors: keep.into_iter().map(|i| self.vectors[i].clone()).collect(),
        })
    }

    /// Removes only vectors that another vector dominates in every state.
    pub fn prune_pointwise(&self) -> PwlcFn {
        let rows: Vec<&[f64]> = self.vectors.iter().map(|v| v.coeffs.as_slice()).collect();
        let keep = pointwise_undominated(&rows, &dedup_indices(&rows));
        Self {
            vectors: keep.into_iter().map(|i| self.vectors[i].clone()).collect(),
        }
    }

    /// Adds `c` to every coefficient.
    pub fn shifted(&self, c: f64) -> PwlcFn {
        Self {
            vectors: self
                .vectors
                .iter()
                .map(|v| AlphaVector {
                    coeffs: v.coeffs.iter().map(|x| x + c).collect(),
                    ..v.clone()
                })
                .collect(),
        }
    }

    /// Union of two functions' vectors (the pointwise max).
    pub fn union(&self, other: &PwlcFn) -> Result<PwlcFn> {
        let mut v = self.vectors.clone();
        v.extend(other.vectors.iter().cloned());
        Self::new(v)
    }
}

impl TryFrom<Vec<AlphaVector>> for PwlcFn {
    type Error = Error;
    fn try_from(v: Vec<AlphaVector>) -> Result<Self> {
        PwlcFn::new(v)
    }
}

impl From<PwlcFn> for Vec<AlphaVector> {
    fn from(f: PwlcFn) -> Self {
        f.vectors
    }
}

impl ValueFunction for PwlcFn {
    fn value(&self, b: &[f64]) -> f64 {
        self.eval(b).0
    }
}

/// Outcome of a domination LP.
#[derive(Debug, Clone)]
pub struct Domination {
    pub useful: bool,
    /// The belief where the vector leads the set by `margin`.
    pub witness: Option<Belief>,
    /// `max_b min_{alpha'} (alpha - alpha') . b`; `+inf` against an empty set.
    pub margin: f64,
}

/// Solves `max d` subject to `(alpha - alpha') . b >= d` for every `alpha'`
/// in `others` and `b` in the simplex. The vector is useful iff `d >= tol`.
pub fn dominates_lp(alpha: &[f64], others: &[&[f64]], tol: f64) -> Result<Domination> {
    let n = alpha.len();
    if others.is_empty() {
        let best = (0..n).max_by(|&i, &j| alpha[i].total_cmp(&alpha[j]).then(j.cmp(&i))).unwrap_or(0);
        return Ok(Domination {
            useful: true,
            witness: Some(Belief::extreme(n, best)),
            margin: f64::INFINITY,
        });
    }
    // Shifting every difference by `lift` makes the margin positive on the
    // whole simplex. The program is then homogeneous in (b, d), so the
    // simplex equality relaxes to `sum b <= 1` and the origin is a feasible
    // start: no phase one, which is where wide value ranges lose precision.
    let lift = others
        .iter()
        .flat_map(|o| alpha.iter().zip(*o).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
        + 1.0;
    let mut lp = LinearProgram::new(n + 1);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    lp.maximize(&obj);
    let mut row = vec![0.0; n + 1];
    for other in others {
        for s in 0..n {
            row[s] = other[s] - alpha[s] - lift;
        }
        row[n] = 1.0;
        lp.add_constraint(&row, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; n + 1];
    simplex[n] = 0.0;
    lp.add_constraint(&simplex, Relation::Le, 1.0);
    let sol = lp.solve()?;
    let probs: Vec<f64> = sol.x[..n].iter().map(|x| x.max(0.0)).collect();
    let witness = Belief::normalized(probs).ok();
    // Recompute the margin at the witness; this removes tableau drift.
    let margin = match &witness {
        Some(b) => others
            .iter()
            .map(|o| dot(alpha, b) - dot(o, b))
            .fold(f64::INFINITY, f64::min),
        None => sol.objective - lift,
    };
    Ok(Domination {
        useful: margin >= tol,
        witness,
        margin,
    })
}

/// Indices of the first copy of each distinct row.
pub(crate) fn dedup_indices(rows: &[&[f64]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(rows[i], rows[j]).then(i.cmp(&j)));
    let mut keep = Vec::with_capacity(rows.len());
    for (k, &i) in order.iter().enumerate() {
        if k == 0 || rows[order[k - 1]] != rows[i] {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

fn lex_cmp(x: &[f64], y: &[f64]) -> std::cmp::Ordering {
    for (a, b) in x.iter().zip(y) {
        match a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// True when `x >= y` in every coordinate.
pub(crate) fn pointwise_ge(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a >= b)
}

/// Members of `candidates` not dominated coordinatewise by another member.
/// Candidates must be distinct rows.
fn pointwise_undominated(rows: &[&[f64]], candidates: &[usize]) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| {
            !candidates
                .iter()
                .any(|&j| j != i && pointwise_ge(rows[j], rows[i]))
        })
        .collect()
}

/// Indices (ascending) of the rows that define the upper surface.
///
/// Duplicates and pointwise-dominated rows go first. The remainder runs
/// through a filter that grows a confirmed set `W`: a candidate that beats
/// `W` somewhere hands its witness belief over, and the best remaining
/// candidate there joins `W`. A last pass re-tests each member of `W`
/// against the others so that the result is a fixed point of pruning.
pub fn prune_indices(rows: &[&[f64]], tol: f64) -> Result<Vec<usize>> {
    let distinct = dedup_indices(rows);
    let mut frontier = pointwise_undominated(rows, &distinct);
    if frontier.len() <= 1 {
        return Ok(frontier);
    }
    let mut confirmed: Vec<usize> = Vec::new();
    while let Some(&cand) = frontier.last() {
        let w: Vec<&[f64]> = confirmed.iter().map(|&i| rows[i]).collect();
        let dom = dominates_lp(rows[cand], &w, tol)?;
        if !dom.useful {
            frontier.pop();
            continue;
        }
        let b = dom.witness.expect("useful vectors carry a witness");
        let pos = best_at(rows, &frontier, &b);
        confirmed.push(frontier.swap_remove(pos));
        // swap_remove moved the last element; restore ascending order so the
        // scan stays deterministic.
        frontier.sort_unstable();
    }
    confirmed.sort_unstable();
    let mut result = confirmed.clone();
    for &i in &confirmed {
        let others: Vec<&[f64]> = result.iter().filter(|&&j| j != i).map(|&j| rows[j]).collect();
        if others.is_empty() {
            continue;
        }
        if !dominates_lp(rows[i], &others, tol)?.useful {
            result.retain(|&j| j != i);
        }
    }
    Ok(result)
}

/// Position in `cands` of the row with the largest value at `b`; near ties
/// go to the lexicographically largest row.
fn best_at(rows: &[&[f64]], cands: &[usize], b: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = dot(rows[cands[0]], b);
    for (k, &i) in cands.iter().enumerate().skip(1) {
        let v = dot(rows[i], b);
        let scale = 1.0 + v.abs().max(best_val.abs());
        if v > best_val + 1e-12 * scale
            || ((v - best_val).abs() <= 1e-12 * scale
                && lex_cmp(rows[i], rows[cands[best]]) == std::cmp::Ordering::Greater)
        {
            best = k;
            best_val = v;
        }
    }
    best
}

/// Exact `sup_b (f(b) - g(b))` over the simplex.
pub fn sup_diff(f: &PwlcFn, g: &PwlcFn) -> Result<f64> {
    let others: Vec<&[f64]> = g.vectors.iter().map(|v| v.coeffs.as_slice()).collect();
    let mut best = f64::NEG_INFINITY;
    for v in &f.vectors {
        best = best.max(dominates_lp(&v.coeffs, &others, f64::INFINITY)?.margin);
    }
    Ok(best)
}

/// Exact `sup_b |f(b) - g(b)|`.
pub fn sup_norm_diff(f: &PwlcFn, g: &PwlcFn) -> Result<f64> {
    Ok(sup_diff(f, g)?.max(sup_diff(g, f)?).max(0.0))
}

/// Error guarantees that follow from a Bellman error of `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyBounds {
    /// Distance of the latest iterate from the optimum.
    pub value_i: f64,
    /// Distance of the previous iterate from the optimum.
    pub value_iminus1: f64,
    /// Loss of a `k`-step lookahead controller.
    pub lookahead_k: f64,
    /// Loss of the direct controller.
    pub direct: f64,
}

pub fn accuracy_bounds(epsilon: f64, discount: f64, k: u32) -> AccuracyBounds {
    let tail = 1.0 - discount;
    AccuracyBounds {
        value_i: discount * epsilon / tail,
        value_iminus1: epsilon / tail,
        lookahead_k: 2.0 * epsilon * discount.powi(k as i32) / tail,
        direct: 2.0 * epsilon / tail,
    }
}

/// Worst-case loss of lookahead on a bound whose gap is at most `epsilon`.
pub fn bound_gap_accuracy(epsilon: f64, discount: f64) -> f64 {
    epsilon * (2.0 - discount) / (1.0 - discount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_belief_uniform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[&[f64]]) -> PwlcFn {
        PwlcFn::from_coeffs(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PwlcFn {
        PwlcFn::from_coeffs(
            (0..k)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn eval_tie_goes_low() {
        let f = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(f.eval(&[0.5, 0.5]), (0.5, 0));
        assert_eq!(PwlcFn::constant(3, 2.5).eval(&[0.2, 0.3, 0.5]).0, 2.5);
    }

    #[test]
    fn domination_examples() {
        let d = dominates_lp(&[0.4, 0.4], &[&[1.0, 0.0], &[0.0, 1.0]], PRUNE_TOL).unwrap();
        assert!(!d.useful);
        assert!((d.margin + 0.1).abs() < 1e-9);
        let d = dominates_lp(&[1.0, 0.0], &[&[0.0, 1.0]], PRUNE_TOL).unwrap();
        assert!(d.useful);
        assert!((d.margin - 1.0).abs() < 1e-9);
        assert_eq!(&*d.witness.unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn prune_examples() {
        let f = set(&[&[1.0, 0.0], &[0.0, 1.0], &[0.4, 0.4]]);
        let p = f.prune(PRUNE_TOL).unwrap();
        assert_eq!(p, set(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let dup = PwlcFn::new(vec![AlphaVector::new(vec![1.0, 2.0]), AlphaVector::new(vec![1.0, 2.0])]).unwrap();
        assert_eq!(dup.len(), 1);
    }

    #[test]
    fn domination_agrees_with_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let f = random_set(&mut rng, 3, 4);
            let rows: Vec<&[f64]> = f.vectors().iter().map(|v| v.coeffs.as_slice()).collect();
            for i in 0..rows.len() {
                let others: Vec<&[f64]> = rows.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| *r).collect();
                let lp_margin = dominates_lp(rows[i], &others, PRUNE_TOL).unwrap().margin;
                let mut scan = f64::NEG_INFINITY;
                for a in 0..=100 {
                    for c in 0..=(100 - a) {
                        let b = [a as f64 / 100.0, c as f64 / 100.0, (100 - a - c) as f64 / 100.0];
                        let m = others.iter().map(|o| dot(rows[i], &b) - dot(o, &b)).fold(f64::INFINITY, f64::min);
                        scan = scan.max(m);
                    }
                }
                // The scan can only under-estimate; grid spacing bounds the gap.
                assert!(lp_margin >= scan - 1e-9);
                assert!(lp_margin <= scan + 0.02 * 2.0, "{lp_margin} vs {scan}");
            }
        }
    }

    #[test]
    fn sup_diff_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_set(&mut rng, 3, 5).prune(PRUNE_TOL).unwrap();
        assert!(sup_norm_diff(&f, &f).unwrap().abs() < 1e-9);
        let g = f.shifted(0.75);
        assert!((sup_diff(&g, &f).unwrap() - 0.75).abs() < 1e-9);
        assert!((sup_norm_diff(&f, &g).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn sup_diff_matches_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let f = random_set(&mut rng, 3, 4);
            let g = random_set(&mut rng, 3, 4);
            let exact = sup_diff(&f, &g).unwrap();
            let mut scan = f64::NEG_INFINITY;
            for a in 0..=100 {
                for c in 0..=(100 - a) {
                    let b = [a as f64 / 100.0, c as f64 / 100.0, (100 - a - c) as f64 / 100.0];
                    scan = scan.max(f.value(&b) - g.value(&b));
                }
            }
            assert!(exact >= scan - 1e-9 && exact <= scan + 0.04, "{exact} vs {scan}");
        }
    }

    #[test]
    fn accuracy_formulas() {
        let a = accuracy_bounds(0.1, 0.9, 1);
        assert!((a.value_i - 0.9).abs() < 1e-12);
        assert!((a.value_iminus1 - 1.0).abs() < 1e-12);
        assert!((a.lookahead_k - 1.8).abs() < 1e-12);
        assert!((a.direct - 2.0).abs() < 1e-12);
        let z = accuracy_bounds(0.0, 0.5, 3);
        assert_eq!((z.value_i, z.value_iminus1, z.lookahead_k, z.direct), (0.0, 0.0, 0.0, 0.0));
        assert!((bound_gap_accuracy(0.5, 0.9) - 5.5).abs() < 1e-12);
        assert_eq!(bound_gap_accuracy(0.0, 0.9), 0.0);
        assert!((bound_gap_accuracy(1.0, 0.0) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prune_preserves_values_and_is_idempotent(seed in any::<u64>(), n in 2usize..5, k in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_set(&mut rng, n, k);
            let p = f.prune(PRUNE_TOL).unwrap();
            for _ in 0..500 {
                let b = sample_belief_uniform(&mut rng, n);
                prop_assert!((f.value(&b) - p.value(&b)).abs() <= 1e-9);
            }
            let pp = p.prune(PRUNE_TOL).unwrap();
            prop_assert_eq!(pp, p);
        }

        #[test]
        fn useful_witness_raises_value(seed in any::<u64>(), n in 2usize..5, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_set(&mut rng, n, k);
            let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rows: Vec<&[f64]> = f.vectors().iter().map(|v| v.coeffs.as_slice()).collect();
            let d = dominates_lp(&alpha, &rows, PRUNE_TOL).unwrap();
            if d.useful {
                let b = d.witness.unwrap();
                prop_assert!(dot(&alpha, &b) > f.value(&b));
            }
        }

        #[test]
        fn sup_norm_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_set(&mut rng, 3, 4).prune(PRUNE_TOL).unwrap();
            let g = random_set(&mut rng, 3, 4).prune(PRUNE_TOL).unwrap();
            let h = random_set(&mut rng, 3, 4).prune(PRUNE_TOL).unwrap();
            let fg = sup_norm_diff(&f, &g).unwrap();
            prop_assert!((fg - sup_norm_diff(&g, &f).unwrap()).abs() <= 1e-9);
            let fh = sup_norm_diff(&f, &h).unwrap();
            let hg = sup_norm_diff(&h, &g).unwrap();
            prop_assert!(fg <= fh + hg + 1e-9);
        }
    }
}

