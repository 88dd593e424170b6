//! One dynamic-programming update of a value function: per-observation
//! projections, cross-sum filtering by exhaustive materialization or
//! incremental pruning, and the final union purge.
//!
//! Each cross-sum fold step filters `A (+) B`. The dominance check for a
//! candidate `phi = alpha + beta` may range over different sets `D`:
//!
//! - the full cross sum (the unrestricted check),
//! - `W`, the winners found so far (plain incremental pruning),
//! - `({alpha} (+) B) ∪ {alpha1 + beta in W}` or its mirror
//!   (the restricted-region check; the side with fewer vectors is chosen),
//! - whichever of the last three is smallest (the min variant).
//!
//! Any such `D` decides emptiness of the true witness region exactly, so
//! all variants return the same minimal sets; they differ only in how many
//! constraints the linear programs carry.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lp::{self, DominanceWitness};
use crate::model::{Belief, PomdpModel};
use crate::pwlc::{
    cross_sum, purge_with_oracle, remove_duplicates, AlphaVector, FilterStats, VectorSet,
};

/// Default cap on materialized cross-sum sizes for the exhaustive path.
pub const DEFAULT_CROSS_SUM_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    /// Materialize the full cross sum across observations, then one purge.
    Exhaustive,
    /// Incremental pruning; dominance checks range over the winner set.
    Ip,
    /// Incremental pruning with restricted-region dominance checks.
    Rr,
    /// Incremental pruning picking the smallest candidate set per check.
    RrMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationOrder {
    #[default]
    Natural,
    SmallestFirst,
}

/// Which update algorithm to run and in what observation order to fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateVariant {
    pub kind: VariantKind,
    pub observation_order: ObservationOrder,
}

impl UpdateVariant {
    pub fn new(kind: VariantKind) -> Self {
        UpdateVariant {
            kind,
            observation_order: ObservationOrder::Natural,
        }
    }

    pub fn exhaustive() -> Self {
        Self::new(VariantKind::Exhaustive)
    }

    pub fn ip() -> Self {
        Self::new(VariantKind::Ip)
    }

    pub fn rr() -> Self {
        Self::new(VariantKind::Rr)
    }

    pub fn rr_min() -> Self {
        Self::new(VariantKind::RrMin)
    }
}

/// Counters and wall time for one phase of the update.
#[derive(Debug, Clone, Default)]
pub struct PhaseStats {
    pub lp_count: u64,
    pub constraint_total: u64,
    pub wall: Duration,
}

impl PhaseStats {
    fn absorb(&mut self, stats: &FilterStats) {
        self.lp_count += stats.lp_count;
        self.constraint_total += stats.constraint_total;
    }
}

/// Sizes around one cross-sum filter step inside a fold.
#[derive(Debug, Clone, Copy)]
pub struct FoldStep {
    pub left_size: usize,
    pub right_size: usize,
    pub cross_size: usize,
    pub result_size: usize,
}

/// Instrumentation for one full update, split into the three phases that
/// solve linear programs: building the per-observation sets, building the
/// per-action sets, and purging the union.
#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    pub sza_build: PhaseStats,
    pub sa_build: PhaseStats,
    pub union_purge: PhaseStats,
    /// `|S_z^a|` per action, per observation.
    pub sza_sizes: Vec<Vec<usize>>,
    /// `|S^a|` per action.
    pub sa_sizes: Vec<usize>,
    /// `|S'|`.
    pub result_size: usize,
    pub fold_steps: Vec<FoldStep>,
    /// Accepted dominance witnesses from all phases; used to seed residual
    /// estimation grids.
    pub witnesses: Vec<Belief>,
}

impl UpdateStats {
    fn new(num_actions: usize, num_observations: usize) -> Self {
        UpdateStats {
            sza_sizes: vec![vec![0; num_observations]; num_actions],
            sa_sizes: vec![0; num_actions],
            ..Default::default()
        }
    }

    pub fn total_lp_count(&self) -> u64 {
        self.sza_build.lp_count + self.sa_build.lp_count + self.union_purge.lp_count
    }

    pub fn total_constraints(&self) -> u64 {
        self.sza_build.constraint_total
            + self.sa_build.constraint_total
            + self.union_purge.constraint_total
    }

    pub fn total_wall(&self) -> Duration {
        self.sza_build.wall + self.sa_build.wall + self.union_purge.wall
    }
}

/// Execution knobs that do not change results: per-action builds may run
/// concurrently, and a deadline aborts the update with `Error::TimedOut`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateOptions {
    pub parallel: bool,
    pub deadline: Option<Instant>,
}

fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() >= d => Err(Error::TimedOut),
        _ => Ok(()),
    }
}

/// Projects one vector through acting with `a` and observing `z`:
///
/// `tau(alpha, a, z)(s) = r^a(s)/|Z| + gamma * sum_s' alpha(s') Pr(z|s',a) Pr(s'|s,a)`
///
/// The result carries action tag `a`.
pub fn tau(model: &PomdpModel, alpha: &AlphaVector, a: usize, z: usize) -> AlphaVector {
    let ns = model.num_states();
    debug_assert_eq!(alpha.dim(), ns);
    let inv_nz = 1.0 / model.num_observations() as f64;
    let gamma = model.discount();
    let mut coeffs = Vec::with_capacity(ns);
    for s in 0..ns {
        let mut acc = 0.0;
        for s2 in 0..ns {
            acc += alpha.coeffs[s2] * model.observation(a, s2, z) * model.transition(a, s, s2);
        }
        coeffs.push(inv_nz * model.reward(a, s) + gamma * acc);
    }
    AlphaVector {
        coeffs,
        action: Some(a),
        parents: None,
    }
}

/// Builds the minimal per-observation set: the purge of the tau-image of
/// `s`. Every output is tagged with action `a` and remembers the index of
/// its source vector.
pub fn build_sza(
    model: &PomdpModel,
    s: &VectorSet,
    a: usize,
    z: usize,
) -> Result<(VectorSet, FilterStats)> {
    assert!(!s.is_empty(), "per-observation build needs a non-empty set");
    let image: Vec<AlphaVector> = s
        .iter()
        .enumerate()
        .map(|(i, alpha)| {
            let mut t = tau(model, alpha, a, z);
            t.parents = Some(vec![i]);
            t
        })
        .collect();
    crate::pwlc::purge(&remove_duplicates(&VectorSet::new(image)))
}

/// Rewrites cross-sum pairs `(i, j)` into concatenated source lists, one
/// entry per observation folded so far.
fn concat_parents(result: &VectorSet, a: &VectorSet, b: &VectorSet) -> VectorSet {
    let vectors = result
        .iter()
        .map(|v| {
            let parents = v.cross_sum_pair().map(|(i, j)| {
                let mut ps = a.vectors()[i].parents.clone().unwrap_or_default();
                ps.extend(b.vectors()[j].parents.clone().unwrap_or_default());
                ps
            });
            AlphaVector {
                coeffs: v.coeffs.clone(),
                action: v.action,
                parents,
            }
        })
        .collect();
    if result.is_minimal() {
        VectorSet::minimal_from(vectors)
    } else {
        VectorSet::new(vectors)
    }
}

/// Builds a per-action set by materializing the full cross sum of the
/// per-observation sets, then filtering once.
pub fn exhaustive_sa(sets: &[VectorSet]) -> Result<(VectorSet, FilterStats)> {
    exhaustive_sa_capped(sets, DEFAULT_CROSS_SUM_CAP, None)
}

/// As [`exhaustive_sa`], with an explicit cap on the materialized size and
/// an optional deadline.
pub fn exhaustive_sa_capped(
    sets: &[VectorSet],
    cap: usize,
    deadline: Option<Instant>,
) -> Result<(VectorSet, FilterStats)> {
    assert!(!sets.is_empty(), "cross sum over zero observation sets");
    let mut acc = sets[0].clone();
    for b in &sets[1..] {
        let size = acc.len().saturating_mul(b.len());
        if size > cap {
            return Err(Error::CombinatorialBlowup { size, cap });
        }
        acc = concat_parents(&cross_sum(&acc, b), &acc, b);
    }
    purge_with_oracle(&acc, &mut |phi, winners, stats| {
        check_deadline(deadline)?;
        lp::dominate(phi, winners, stats)
    })
}

/// Result of one incremental-pruning fold across observation sets.
#[derive(Debug, Clone)]
pub struct IncPruneResult {
    pub set: VectorSet,
    pub stats: FilterStats,
    pub fold_steps: Vec<FoldStep>,
}

/// Folds `FILTER(W (+) S_i)` left to right across the given sets, with the
/// dominance check selected by `variant.kind` (`Exhaustive` folds with the
/// unrestricted full-set check). A single set is returned unchanged.
///
/// Every intermediate result is asserted to be at least as large as both
/// fold inputs; purged sets cannot shrink under a cross sum.
pub fn inc_prune(sets: &[VectorSet], variant: &UpdateVariant) -> Result<IncPruneResult> {
    inc_prune_inner(sets, variant.kind, None)
}

fn inc_prune_inner(
    sets: &[VectorSet],
    kind: VariantKind,
    deadline: Option<Instant>,
) -> Result<IncPruneResult> {
    assert!(!sets.is_empty(), "incremental pruning over zero sets");
    let mut stats = FilterStats::default();
    let mut fold_steps = Vec::new();
    if sets.len() == 1 {
        return Ok(IncPruneResult {
            set: sets[0].clone(),
            stats,
            fold_steps,
        });
    }
    let mut acc = sets[0].clone();
    for b in &sets[1..] {
        let crossed = cross_sum(&acc, b);
        let mut oracle = FoldOracle::new(kind, crossed.vectors(), &acc, b, deadline);
        let (result, fstats) =
            purge_with_oracle(&crossed, &mut |phi, winners, st| oracle.check(phi, winners, st))?;
        let step = FoldStep {
            left_size: acc.len(),
            right_size: b.len(),
            cross_size: crossed.len(),
            result_size: result.len(),
        };
        assert!(
            step.result_size >= step.left_size.max(step.right_size),
            "filtered cross sum shrank below an input: {} < max({}, {})",
            step.result_size,
            step.left_size,
            step.right_size
        );
        fold_steps.push(step);
        stats.merge(fstats);
        acc = concat_parents(&result, &acc, b);
    }
    Ok(IncPruneResult {
        set: acc,
        stats,
        fold_steps,
    })
}

/// Dominance oracle for one `FILTER(A (+) B)` run. Tracks winner provenance
/// incrementally so restricted candidate sets can be sized without rescans.
struct FoldOracle<'a> {
    kind: VariantKind,
    full: &'a [AlphaVector],
    a_set: &'a VectorSet,
    b_set: &'a VectorSet,
    by_a: Vec<Vec<usize>>,
    by_b: Vec<Vec<usize>>,
    winners_seen: usize,
    deadline: Option<Instant>,
}

impl<'a> FoldOracle<'a> {
    fn new(
        kind: VariantKind,
        full: &'a [AlphaVector],
        a_set: &'a VectorSet,
        b_set: &'a VectorSet,
        deadline: Option<Instant>,
    ) -> Self {
        FoldOracle {
            kind,
            full,
            a_set,
            b_set,
            by_a: vec![Vec::new(); a_set.len()],
            by_b: vec![Vec::new(); b_set.len()],
            winners_seen: 0,
            deadline,
        }
    }

    fn sync(&mut self, winners: &[AlphaVector]) -> Result<()> {
        while self.winners_seen < winners.len() {
            let idx = self.winners_seen;
            let (i, j) = winners[idx]
                .cross_sum_pair()
                .ok_or(Error::ProvenanceMissing)?;
            self.by_a[i].push(idx);
            self.by_b[j].push(idx);
            self.winners_seen += 1;
        }
        Ok(())
    }

    /// `({alpha} (+) B) ∪ {winners that share beta}`
    fn restricted_by_alpha(&self, i: usize, j: usize, winners: &[AlphaVector]) -> Vec<AlphaVector> {
        let alpha = &self.a_set.vectors()[i];
        let mut d: Vec<AlphaVector> =
            Vec::with_capacity(self.b_set.len() + self.by_b[j].len());
        for beta in self.b_set.iter() {
            let coeffs: Vec<f64> = alpha
                .coeffs
                .iter()
                .zip(&beta.coeffs)
                .map(|(x, y)| x + y)
                .collect();
            d.push(AlphaVector::new(coeffs));
        }
        for &k in &self.by_b[j] {
            d.push(winners[k].clone());
        }
        dedup_for_lp(d)
    }

    /// `(A (+) {beta}) ∪ {winners that share alpha}`
    fn restricted_by_beta(&self, i: usize, j: usize, winners: &[AlphaVector]) -> Vec<AlphaVector> {
        let beta = &self.b_set.vectors()[j];
        let mut d: Vec<AlphaVector> =
            Vec::with_capacity(self.a_set.len() + self.by_a[i].len());
        for alpha in self.a_set.iter() {
            let coeffs: Vec<f64> = alpha
                .coeffs
                .iter()
                .zip(&beta.coeffs)
                .map(|(x, y)| x + y)
                .collect();
            d.push(AlphaVector::new(coeffs));
        }
        for &k in &self.by_a[i] {
            d.push(winners[k].clone());
        }
        dedup_for_lp(d)
    }

    fn check(
        &mut self,
        phi: &AlphaVector,
        winners: &[AlphaVector],
        stats: &mut FilterStats,
    ) -> Result<Option<DominanceWitness>> {
        check_deadline(self.deadline)?;
        match self.kind {
            VariantKind::Exhaustive => lp::dominate(phi, self.full, stats),
            VariantKind::Ip => lp::dominate(phi, winners, stats),
            VariantKind::Rr => {
                self.sync(winners)?;
                let (i, j) = phi.cross_sum_pair().ok_or(Error::ProvenanceMissing)?;
                let d = if self.b_set.len() < self.a_set.len() {
                    self.restricted_by_alpha(i, j, winners)
                } else {
                    self.restricted_by_beta(i, j, winners)
                };
                lp::dominate(phi, &d, stats)
            }
            VariantKind::RrMin => {
                self.sync(winners)?;
                let (i, j) = phi.cross_sum_pair().ok_or(Error::ProvenanceMissing)?;
                // Effective LP sizes after removing phi itself.
                let w_size = winners.len();
                let d1_size = self.b_set.len() - 1 + self.by_b[j].len();
                let d2_size = self.a_set.len() - 1 + self.by_a[i].len();
                if w_size <= d1_size && w_size <= d2_size {
                    lp::dominate(phi, winners, stats)
                } else if d1_size <= d2_size {
                    let d = self.restricted_by_alpha(i, j, winners);
                    lp::dominate(phi, &d, stats)
                } else {
                    let d = self.restricted_by_beta(i, j, winners);
                    lp::dominate(phi, &d, stats)
                }
            }
        }
    }
}

fn dedup_for_lp(vectors: Vec<AlphaVector>) -> Vec<AlphaVector> {
    let mut seen: std::collections::HashSet<Vec<u64>> =
        std::collections::HashSet::with_capacity(vectors.len());
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        if seen.insert(v.coeffs.iter().map(|c| c.to_bits()).collect()) {
            out.push(v);
        }
    }
    out
}

/// Standalone restricted dominance check for a cross-sum candidate, as used
/// inside the fold: returns a witness iff the region of `phi` against the
/// variant's candidate set is non-empty. With `Exhaustive` the candidate set
/// is the full cross sum, giving the unrestricted verdict.
pub fn restricted_dominate(
    phi: &AlphaVector,
    winners: &[AlphaVector],
    a_set: &VectorSet,
    b_set: &VectorSet,
    variant: &UpdateVariant,
    stats: &mut FilterStats,
) -> Result<Option<DominanceWitness>> {
    let crossed = cross_sum(a_set, b_set);
    let mut oracle = FoldOracle::new(variant.kind, crossed.vectors(), a_set, b_set, None);
    oracle.check(phi, winners, stats)
}

/// One DP update `S -> S'` with the chosen variant: build every
/// per-observation set, combine them per action, purge the deduplicated
/// union. Vectors in the result keep their action tags.
pub fn dp_update(
    model: &PomdpModel,
    s: &VectorSet,
    variant: &UpdateVariant,
) -> Result<(VectorSet, UpdateStats)> {
    dp_update_with(model, s, variant, &UpdateOptions::default())
}

/// As [`dp_update`], with explicit execution options.
pub fn dp_update_with(
    model: &PomdpModel,
    s: &VectorSet,
    variant: &UpdateVariant,
    options: &UpdateOptions,
) -> Result<(VectorSet, UpdateStats)> {
    assert!(!s.is_empty(), "update needs a non-empty value function");
    let na = model.num_actions();
    let nz = model.num_observations();
    let mut stats = UpdateStats::new(na, nz);

    // Phase 1: per-observation projections.
    let phase_start = Instant::now();
    let mut sza: Vec<Vec<VectorSet>> = Vec::with_capacity(na);
    for a in 0..na {
        let mut per_obs = Vec::with_capacity(nz);
        for z in 0..nz {
            check_deadline(options.deadline)?;
            let (set, fstats) = build_sza(model, s, a, z)?;
            stats.sza_sizes[a][z] = set.len();
            stats.sza_build.absorb(&fstats);
            stats.witnesses.extend(fstats.witnesses);
            per_obs.push(set);
        }
        sza.push(per_obs);
    }
    stats.sza_build.wall = phase_start.elapsed();

    // Phase 2: per-action combination. The observation fold order is fixed
    // up front so that every variant (including the exhaustive
    // materialization) adds vectors in the same order and produces
    // bit-identical coefficients.
    let builds: Vec<Result<(VectorSet, FilterStats, Vec<FoldStep>, Duration)>> =
        if options.parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = sza
                    .iter()
                    .map(|per_obs| {
                        scope.spawn(|| build_sa(per_obs, variant, options.deadline, nz))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            })
        } else {
            sza.iter()
                .map(|per_obs| build_sa(per_obs, variant, options.deadline, nz))
                .collect()
        };

    let mut sa_sets: Vec<VectorSet> = Vec::with_capacity(na);
    for (a, build) in builds.into_iter().enumerate() {
        let (set, fstats, folds, elapsed) = build?;
        stats.sa_sizes[a] = set.len();
        stats.sa_build.absorb(&fstats);
        stats.sa_build.wall += elapsed;
        stats.witnesses.extend(fstats.witnesses);
        stats.fold_steps.extend(folds);
        sa_sets.push(set);
    }

    // Phase 3: deduplicated union, one purge.
    let phase_start = Instant::now();
    let union: Vec<AlphaVector> = sa_sets
        .iter()
        .flat_map(|set| set.iter().cloned())
        .collect();
    let union = VectorSet::new(union);
    let deadline = options.deadline;
    let (s_prime, fstats) = purge_with_oracle(&union, &mut |phi, winners, st| {
        check_deadline(deadline)?;
        lp::dominate(phi, winners, st)
    })?;
    stats.union_purge.absorb(&fstats);
    stats.witnesses.extend(fstats.witnesses);
    stats.union_purge.wall = phase_start.elapsed();
    stats.result_size = s_prime.len();

    Ok((s_prime, stats))
}

/// Builds one `S^a` from its per-observation sets, honoring the variant and
/// fold order. Returns the set, counters, fold steps, and elapsed time.
fn build_sa(
    per_obs: &[VectorSet],
    variant: &UpdateVariant,
    deadline: Option<Instant>,
    nz: usize,
) -> Result<(VectorSet, FilterStats, Vec<FoldStep>, Duration)> {
    let start = Instant::now();
    let mut order: Vec<usize> = (0..per_obs.len()).collect();
    if variant.observation_order == ObservationOrder::SmallestFirst {
        order.sort_by_key(|&z| (per_obs[z].len(), z));
    }
    let ordered: Vec<VectorSet> = order.iter().map(|&z| per_obs[z].clone()).collect();

    let (set, stats, folds) = match variant.kind {
        VariantKind::Exhaustive => {
            let (set, stats) = exhaustive_sa_capped(&ordered, DEFAULT_CROSS_SUM_CAP, deadline)?;
            (set, stats, Vec::new())
        }
        _ => {
            let out = inc_prune_inner(&ordered, variant.kind, deadline)?;
            (out.set, out.stats, out.fold_steps)
        }
    };

    // Fold-position parent lists back into natural observation order.
    let set = if variant.observation_order == ObservationOrder::SmallestFirst {
        let vectors = set
            .iter()
            .map(|v| {
                let parents = match &v.parents {
                    Some(ps) if ps.len() == nz => {
                        let mut natural = vec![0; nz];
                        for (pos, &z) in order.iter().enumerate() {
                            natural[z] = ps[pos];
                        }
                        Some(natural)
                    }
                    other => other.clone(),
                };
                AlphaVector {
                    coeffs: v.coeffs.clone(),
                    action: v.action,
                    parents,
                }
            })
            .collect();
        VectorSet::minimal_from(vectors)
    } else {
        set
    };

    Ok((set, stats, folds, start.elapsed()))
}
