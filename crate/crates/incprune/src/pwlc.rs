//! Piecewise-linear convex value functions represented as finite sets of
//! vectors, `V(x) = max_alpha x . alpha`, with cross-sum, duplicate removal,
//! and witness-region pruning.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lp::{self, DominanceWitness};
use crate::model::Belief;

/// Dot products within this tolerance count as a tie; ties are broken by
/// the lexicographically greatest coefficient sequence.
pub const TIE_TOL: f64 = 1e-9;

/// Tolerance for canonical set comparison across algorithm variants.
pub const CANONICAL_TOL: f64 = 1e-6;

/// One linear piece of a value function, optionally tagged with the action
/// that generated it and with parent vector ids.
///
/// Parent bookkeeping: a vector produced by mapping a source set carries the
/// index of its source vector; a cross-sum output carries `[i, j]`, the
/// indices of its two summands, until the surrounding fold rewrites it to
/// one source index per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub coeffs: Vec<f64>,
    pub action: Option<usize>,
    pub parents: Option<Vec<usize>>,
}

impl AlphaVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        AlphaVector {
            coeffs,
            action: None,
            parents: None,
        }
    }

    pub fn with_action(coeffs: Vec<f64>, action: usize) -> Self {
        AlphaVector {
            coeffs,
            action: Some(action),
            parents: None,
        }
    }

    /// The all-zeros vector of the given dimension.
    pub fn zero(dim: usize) -> Self {
        AlphaVector::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.coeffs.len(), x.len());
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// The cross-sum pair `(i, j)` recorded by [`cross_sum`], if any.
    pub fn cross_sum_pair(&self) -> Option<(usize, usize)> {
        match &self.parents {
            Some(p) if p.len() == 2 => Some((p[0], p[1])),
            _ => None,
        }
    }

    fn bits(&self) -> Vec<u64> {
        self.coeffs.iter().map(|c| c.to_bits()).collect()
    }
}

/// A finite set of alpha vectors. The `minimal` flag is true when the set is
/// known to equal the purge of itself.
///
/// Invariant: no two members have componentwise-equal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    vectors: Vec<AlphaVector>,
    minimal: bool,
}

impl VectorSet {
    /// Builds a set, silently merging componentwise-exact duplicates
    /// (first occurrence kept).
    pub fn new(vectors: Vec<AlphaVector>) -> Self {
        let vectors = dedup_exact(vectors);
        let minimal = vectors.len() <= 1;
        VectorSet { vectors, minimal }
    }

    pub fn empty() -> Self {
        VectorSet {
            vectors: Vec::new(),
            minimal: true,
        }
    }

    pub(crate) fn minimal_from(vectors: Vec<AlphaVector>) -> Self {
        VectorSet {
            vectors,
            minimal: true,
        }
    }

    pub fn vectors(&self) -> &[AlphaVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_minimal(&self) -> bool {
        self.minimal
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(|v| v.coeffs.len())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AlphaVector> {
        self.vectors.iter()
    }

    /// A copy sorted lexicographically by coefficients, the canonical form
    /// used for cross-algorithm comparison and for file output.
    pub fn canonicalized(&self) -> VectorSet {
        let mut vectors = self.vectors.clone();
        vectors.sort_by(|a, b| lex_cmp(&a.coeffs, &b.coeffs));
        VectorSet {
            vectors,
            minimal: self.minimal,
        }
    }
}

/// Counters for one FILTER run plus the accepted witness beliefs,
/// which later seed residual estimation grids.
#[derive(Debug, Clone, Default)]
pub struct FilterStats {
    /// Linear programs solved.
    pub lp_count: u64,
    /// Constraints posed over all of them (region rows plus the two simplex
    /// rows per program).
    pub constraint_total: u64,
    /// Vectors found by checking the corner information states (`m`).
    pub corner_seeds: usize,
    pub witnesses: Vec<Belief>,
}

impl FilterStats {
    pub fn merge(&mut self, other: FilterStats) {
        self.lp_count += other.lp_count;
        self.constraint_total += other.constraint_total;
        self.corner_seeds += other.corner_seeds;
        self.witnesses.extend(other.witnesses);
    }
}

fn dedup_exact(vectors: Vec<AlphaVector>) -> Vec<AlphaVector> {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(vectors.len());
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        if seen.insert(v.bits()) {
            out.push(v);
        }
    }
    out
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("alpha coefficients are finite") {
            std::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.len().cmp(&b.len())
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    lex_cmp(a, b) == std::cmp::Ordering::Greater
}

/// Index of the winning vector at `x`: greatest dot product, ties within
/// [`TIE_TOL`] broken toward the lexicographically greatest coefficients.
pub(crate) fn argmax_at(vectors: &[AlphaVector], x: &[f64]) -> usize {
    debug_assert!(!vectors.is_empty());
    let mut best = 0;
    let mut best_dot = vectors[0].dot(x);
    for (i, v) in vectors.iter().enumerate().skip(1) {
        let d = v.dot(x);
        if d > best_dot + TIE_TOL {
            best = i;
            best_dot = d;
        } else if d >= best_dot - TIE_TOL && lex_greater(&v.coeffs, &vectors[best].coeffs) {
            best = i;
            if d > best_dot {
                best_dot = d;
            }
        }
    }
    best
}

/// Evaluates `V(x) = max_alpha x . alpha`, returning the value and the
/// winning vector (lexicographically greatest among ties).
pub fn evaluate<'a>(v: &'a VectorSet, x: &Belief) -> Result<(f64, &'a AlphaVector)> {
    if v.is_empty() {
        return Err(Error::EmptySet);
    }
    let idx = argmax_at(v.vectors(), x.probs());
    let winner = &v.vectors()[idx];
    Ok((winner.dot(x.probs()), winner))
}

/// `A (+) B = {alpha + beta}` with exact duplicates merged (first kept).
/// Every output records its summand indices as `parents = [i, j]`.
pub fn cross_sum(a: &VectorSet, b: &VectorSet) -> VectorSet {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(a.len() * b.len());
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (i, va) in a.iter().enumerate() {
        for (j, vb) in b.iter().enumerate() {
            debug_assert_eq!(va.coeffs.len(), vb.coeffs.len());
            let coeffs: Vec<f64> = va
                .coeffs
                .iter()
                .zip(&vb.coeffs)
                .map(|(x, y)| x + y)
                .collect();
            let bits: Vec<u64> = coeffs.iter().map(|c| c.to_bits()).collect();
            if seen.insert(bits) {
                out.push(AlphaVector {
                    coeffs,
                    action: va.action.or(vb.action),
                    parents: Some(vec![i, j]),
                });
            }
        }
    }
    VectorSet {
        minimal: out.len() <= 1,
        vectors: out,
    }
}

/// Removes componentwise-exact duplicates, keeping first occurrences.
/// Near-duplicates are deliberately left for the LP to settle.
pub fn remove_duplicates(f: &VectorSet) -> VectorSet {
    VectorSet {
        vectors: dedup_exact(f.vectors.clone()),
        minimal: f.minimal,
    }
}

/// Lark's filter with the standard dominance check against the winners
/// found so far.
pub fn purge(f: &VectorSet) -> Result<(VectorSet, FilterStats)> {
    purge_with_oracle(f, &mut |phi, winners, stats| {
        lp::dominate(phi, winners, stats)
    })
}

/// Lark's filter with a caller-supplied dominance oracle.
///
/// Corner information states seed the winner set first (distinct
/// lexicographic winners over the full input), then each remaining vector
/// is tested by the oracle; a returned witness admits the winning vector
/// at that information state, chosen over the vectors still pending.
///
/// The oracle is called once per loop iteration and is expected to solve
/// exactly one linear program, recording it in the passed stats; the
/// `lp_count = |F| - m` law is asserted on completion.
pub fn purge_with_oracle<O>(f: &VectorSet, oracle: &mut O) -> Result<(VectorSet, FilterStats)>
where
    O: FnMut(&AlphaVector, &[AlphaVector], &mut FilterStats) -> Result<Option<DominanceWitness>>,
{
    let deduped = dedup_exact(f.vectors.clone());
    let total = deduped.len();
    let mut stats = FilterStats::default();
    if total == 0 {
        return Ok((VectorSet::empty(), stats));
    }
    let dim = deduped[0].coeffs.len();

    let mut winners: Vec<AlphaVector> = Vec::new();
    let mut corner = vec![0.0; dim];
    for s in 0..dim {
        corner[s] = 1.0;
        let idx = argmax_at(&deduped, &corner);
        corner[s] = 0.0;
        if !winners.iter().any(|w| w.coeffs == deduped[idx].coeffs) {
            winners.push(deduped[idx].clone());
        }
    }
    stats.corner_seeds = winners.len();

    let mut remaining: Vec<AlphaVector> = deduped
        .into_iter()
        .filter(|v| !winners.iter().any(|w| w.coeffs == v.coeffs))
        .collect();

    while !remaining.is_empty() {
        let phi = remaining[0].clone();
        match oracle(&phi, &winners, &mut stats)? {
            None => {
                remaining.remove(0);
            }
            Some(witness) => {
                let idx = argmax_at(&remaining, witness.x.probs());
                stats.witnesses.push(witness.x);
                winners.push(remaining.remove(idx));
            }
        }
    }

    assert_eq!(
        stats.lp_count as usize,
        total - stats.corner_seeds,
        "FILTER must solve exactly |F| - m linear programs"
    );
    Ok((VectorSet::minimal_from(winners), stats))
}

/// True when both sets have the same size and, after canonical sorting,
/// agree componentwise within `tol`.
pub fn canonically_equal(a: &VectorSet, b: &VectorSet, tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let ca = a.canonicalized();
    let cb = b.canonicalized();
    ca.iter().zip(cb.iter()).all(|(va, vb)| {
        va.coeffs.len() == vb.coeffs.len()
            && va
                .coeffs
                .iter()
                .zip(&vb.coeffs)
                .all(|(x, y)| (x - y).abs() <= tol)
    })
}

// ---------------------------------------------------------------------------
// Alpha-vector file format
// ---------------------------------------------------------------------------

/// Renders a vector set in the alpha file format: per vector, one line with
/// the action name, one line with space-separated coefficients at 17
/// significant digits, then a blank line. Vectors are written in canonical
/// order so equivalent sets serialize byte-identically.
pub fn write_alpha_file(set: &VectorSet, action_names: &[String]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for v in set.canonicalized().iter() {
        let name = v
            .action
            .map(|a| action_names[a].as_str())
            .unwrap_or("-");
        writeln!(out, "{name}").unwrap();
        let row: Vec<String> = v.coeffs.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
        writeln!(out).unwrap();
    }
    out
}

/// Parses the alpha file format back into `(action name, coefficients)`
/// pairs. Accepts exactly what [`write_alpha_file`] emits and regenerates
/// it byte-identically.
pub fn parse_alpha_file(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    loop {
        // skip blank separators
        while matches!(lines.peek(), Some((_, l)) if l.trim().is_empty()) {
            lines.next();
        }
        let (action_line_no, action) = match lines.next() {
            None => break,
            Some((n, l)) => (n + 1, l.trim().to_string()),
        };
        let (_, value_line) = lines.next().ok_or_else(|| {
            Error::AlphaFormat(format!(
                "vector starting at line {action_line_no} has no coefficient line"
            ))
        })?;
        let mut coeffs = Vec::new();
        for tok in value_line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::AlphaFormat(format!("bad coefficient `{tok}` near line {action_line_no}"))
            })?;
            coeffs.push(v);
        }
        if coeffs.is_empty() {
            return Err(Error::AlphaFormat(format!(
                "empty coefficient line near line {action_line_no}"
            )));
        }
        if let Some((_, prev)) = out.last() {
            let prev: &Vec<f64> = prev;
            if prev.len() != coeffs.len() {
                return Err(Error::AlphaFormat(
                    "vectors have inconsistent dimensions".into(),
                ));
            }
        }
        out.push((action, coeffs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(coeffs: &[f64]) -> AlphaVector {
        AlphaVector::new(coeffs.to_vec())
    }

    fn set(vs: &[&[f64]]) -> VectorSet {
        VectorSet::new(vs.iter().map(|c| v(c)).collect())
    }

    fn belief(p: &[f64]) -> Belief {
        Belief::new(p.to_vec()).unwrap()
    }

    #[test]
    fn evaluate_breaks_ties_lexicographically() {
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (val, win) = evaluate(&s, &belief(&[0.5, 0.5])).unwrap();
        assert!((val - 0.5).abs() < 1e-12);
        assert_eq!(win.coeffs, vec![1.0, 0.0]);
    }

    #[test]
    fn evaluate_singleton() {
        let s = set(&[&[0.3, -0.2]]);
        let x = belief(&[0.25, 0.75]);
        let (val, win) = evaluate(&s, &x).unwrap();
        assert!((val - (0.25 * 0.3 - 0.75 * 0.2)).abs() < 1e-12);
        assert_eq!(win.coeffs, vec![0.3, -0.2]);
    }

    #[test]
    fn evaluate_componentwise_dominant_wins() {
        let s = set(&[&[2.0, 2.0], &[1.0, 1.0]]);
        let (val, win) = evaluate(&s, &belief(&[0.4, 0.6])).unwrap();
        assert!((val - 2.0).abs() < 1e-12);
        assert_eq!(win.coeffs, vec![2.0, 2.0]);
    }

    #[test]
    fn evaluate_empty_set_errors() {
        assert!(matches!(
            evaluate(&VectorSet::empty(), &belief(&[1.0])),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn cross_sum_by_definition() {
        let a = set(&[&[1.0, 0.0]]);
        let b = set(&[&[0.0, 1.0], &[1.0, 1.0]]);
        let c = cross_sum(&a, &b);
        assert_eq!(c.len(), 2);
        assert_eq!(c.vectors()[0].coeffs, vec![1.0, 1.0]);
        assert_eq!(c.vectors()[1].coeffs, vec![2.0, 1.0]);
        assert_eq!(c.vectors()[0].cross_sum_pair(), Some((0, 0)));
        assert_eq!(c.vectors()[1].cross_sum_pair(), Some((0, 1)));
    }

    #[test]
    fn cross_sum_zero_is_identity() {
        let a = set(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let zero = set(&[&[0.0, 0.0]]);
        let c = cross_sum(&a, &zero);
        assert_eq!(c.len(), a.len());
        for (orig, summed) in a.iter().zip(c.iter()) {
            assert_eq!(orig.coeffs, summed.coeffs);
        }
    }

    #[test]
    fn cross_sum_merges_exact_duplicates() {
        let a = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let c = cross_sum(&a, &a);
        let coeffs: Vec<&Vec<f64>> = c.iter().map(|v| &v.coeffs).collect();
        assert_eq!(
            coeffs,
            vec![&vec![2.0, 0.0], &vec![1.0, 1.0], &vec![0.0, 2.0]]
        );
    }

    #[test]
    fn remove_duplicates_keeps_first_and_respects_near_misses() {
        let dup = VectorSet {
            vectors: vec![v(&[1.0, 0.0]), v(&[1.0, 0.0])],
            minimal: false,
        };
        assert_eq!(remove_duplicates(&dup).len(), 1);

        assert_eq!(remove_duplicates(&VectorSet::empty()).len(), 0);

        let near = set(&[&[1.0, 0.0], &[1.0, 1e-15]]);
        assert_eq!(remove_duplicates(&near).len(), 2);
    }

    #[test]
    fn purge_drops_everywhere_loser() {
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0], &[0.4, 0.4]]);
        let (w, stats) = purge(&s).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().any(|v| v.coeffs == vec![1.0, 0.0]));
        assert!(w.iter().any(|v| v.coeffs == vec![0.0, 1.0]));
        assert_eq!(stats.corner_seeds, 2);
        assert_eq!(stats.lp_count, 1);
        assert!(w.is_minimal());
    }

    #[test]
    fn purge_singleton_needs_no_lp() {
        let s = set(&[&[0.7, 0.7]]);
        let (w, stats) = purge(&s).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(stats.corner_seeds, 1);
        assert_eq!(stats.lp_count, 0);
    }

    #[test]
    fn purge_lp_count_is_size_minus_corner_seeds() {
        // Two corner winners and eight interior losers: 10 - 2 = 8 LPs.
        let mut vs: Vec<AlphaVector> = vec![v(&[3.0, 0.0]), v(&[0.0, 3.0])];
        for k in 1..=8 {
            let c = 0.1 * k as f64;
            vs.push(v(&[c, c]));
        }
        let s = VectorSet::new(vs);
        assert_eq!(s.len(), 10);
        let (w, stats) = purge(&s).unwrap();
        assert_eq!(stats.corner_seeds, 2);
        assert_eq!(stats.lp_count, 8);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn purge_is_idempotent() {
        let s = set(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.6, 0.6],
            &[0.9, 0.05],
            &[0.2, 0.2],
        ]);
        let (once, _) = purge(&s).unwrap();
        let (twice, stats) = purge(&once).unwrap();
        assert!(canonically_equal(&once, &twice, 0.0));
        assert_eq!(stats.lp_count as usize, once.len() - stats.corner_seeds);
    }

    #[test]
    fn purge_preserves_the_function_on_a_grid() {
        let s = set(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.7, 0.3],
            &[0.5, 0.55],
            &[0.2, 0.9],
            &[0.45, 0.45],
        ]);
        let (w, _) = purge(&s).unwrap();
        for x in crate::solver::simplex_grid(2, 10_000) {
            let (full, _) = evaluate(&s, &x).unwrap();
            let (min, _) = evaluate(&w, &x).unwrap();
            assert!(
                (full - min).abs() <= 1e-9,
                "mismatch at {:?}: {full} vs {min}",
                x.probs()
            );
        }
    }

    #[test]
    fn componentwise_dominated_vectors_never_survive() {
        let dominated = v(&[0.5, 0.5]);
        let dominator = v(&[0.6, 0.5]);
        let s = VectorSet::new(vec![dominated, dominator, v(&[0.0, 0.9])]);
        let (w, _) = purge(&s).unwrap();
        assert!(!w.iter().any(|u| u.coeffs == vec![0.5, 0.5]));
    }

    #[test]
    fn purge_accepted_vectors_have_witnesses_or_corner_wins() {
        let s = set(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.55, 0.5],
            &[0.5, 0.55],
            &[0.3, 0.3],
        ]);
        let (w, _) = purge(&s).unwrap();
        for (i, cand) in w.iter().enumerate() {
            let others: Vec<AlphaVector> = w
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.clone())
                .collect();
            let mut scratch = FilterStats::default();
            let witnessed = lp::dominate(cand, &others, &mut scratch)
                .unwrap()
                .is_some();
            let corner_win = (0..cand.dim()).any(|s_idx| {
                let corner: Vec<f64> = (0..cand.dim())
                    .map(|k| if k == s_idx { 1.0 } else { 0.0 })
                    .collect();
                argmax_at(w.vectors(), &corner) == i
            });
            assert!(
                witnessed || corner_win,
                "vector {:?} has neither witness nor corner win",
                cand.coeffs
            );
        }
    }

    #[test]
    fn purge_is_deterministic() {
        let s = set(&[
            &[0.9, 0.1],
            &[0.1, 0.9],
            &[0.5, 0.5],
            &[0.8, 0.15],
            &[0.15, 0.8],
        ]);
        let (w1, s1) = purge(&s).unwrap();
        let (w2, s2) = purge(&s).unwrap();
        assert_eq!(w1.vectors(), w2.vectors());
        assert_eq!(s1.lp_count, s2.lp_count);
        assert_eq!(s1.constraint_total, s2.constraint_total);
    }

    #[test]
    fn alpha_file_round_trips_byte_identically() {
        let s = VectorSet::new(vec![
            AlphaVector::with_action(vec![1.0, 0.0], 0),
            AlphaVector::with_action(vec![0.25, std::f64::consts::PI], 1),
        ]);
        let names = vec!["a0".to_string(), "a1".to_string()];
        let text = write_alpha_file(&s, &names);
        let parsed = parse_alpha_file(&text).unwrap();
        let rebuilt = VectorSet::new(
            parsed
                .iter()
                .map(|(name, coeffs)| {
                    let a = names.iter().position(|n| n == name).unwrap();
                    AlphaVector::with_action(coeffs.clone(), a)
                })
                .collect(),
        );
        assert_eq!(write_alpha_file(&rebuilt, &names), text);
    }

    #[test]
    fn alpha_file_rejects_ragged_dimensions() {
        let text = "a0\n1.0 2.0\n\na1\n1.0\n\n";
        assert!(matches!(
            parse_alpha_file(text),
            Err(Error::AlphaFormat(_))
        ));
    }
}
