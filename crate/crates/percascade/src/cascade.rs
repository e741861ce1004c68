//! The perimeter cascade: trees on the Ulam tree labeled by
//! half-perimeters, grown from first-passage excursions of a critical
//! skip-free walk.
//!
//! A node of value `q` gets as children the jump sizes `X_i + 1` of a
//! walk run to `T_q`, drawn from the law size-biased by `1/(1 + L_q)`
//! (realized exactly by rejection), sorted in non-increasing order.
//! Normalizing a child vector by the base perimeter approximates the
//! continuous cascade offspring law; the additive martingales over
//! generations are what the verification suites track.

use crate::analytic::{biggins_transform, malthusian_parameter, CascadeParameters, Ext};
use crate::rng::{splitmix64, Rng};
use crate::walk::{self, StepLaw};

/// Attempt budget for the rejection sampler; exhausting it means the
/// acceptance probability is far below anything a critical law produces.
pub const RETRY_CAP: u64 = 1_000_000;

/// Default memory guard for [`grow_cascade`], in stored nodes.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum CascadeError {
    /// The rejection sampler exhausted its retry budget: the step law is
    /// not critical, or the perimeter is absurdly large.
    RetriesExhausted { p: u64, attempts: u64 },
    /// Tree growth hit the node budget; the fields describe the partial
    /// tree at the moment of failure.
    NodeBudgetExceeded { cap: usize, stored: usize, generation: u32, base: u64 },
    /// A generation-`k` sum was requested from a tree whose expansion
    /// threshold may have pruned ancestors below generation `k`.
    TruncatedTree { t_min: u64, k: u32 },
}

impl std::fmt::Display for CascadeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CascadeError::RetriesExhausted { p, attempts } => write!(
                f,
                "no accepted child sample for p = {p} after {attempts} attempts; \
                 is the step law critical?"
            ),
            CascadeError::NodeBudgetExceeded { cap, stored, generation, base } => write!(
                f,
                "node budget {cap} exceeded at generation {generation} \
                 ({stored} nodes stored, base perimeter {base})"
            ),
            CascadeError::TruncatedTree { t_min, k } => write!(
                f,
                "tree grown with expansion threshold {t_min} > 1 cannot give an \
                 exact generation-{k} sum; use the lower-bound variant if that \
                 is intended"
            ),
        }
    }
}

impl std::error::Error for CascadeError {}

/// A vertex address in the Ulam tree: the sequence of child indices
/// (1-based) from the root; empty = root. Generation = length.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct UlamLabel(Vec<u32>);

impl UlamLabel {
    pub fn root() -> UlamLabel {
        UlamLabel(Vec::new())
    }

    pub fn from_entries(entries: &[u32]) -> UlamLabel {
        assert!(entries.iter().all(|&e| e >= 1), "label entries are 1-based");
        UlamLabel(entries.to_vec())
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// The label of this node's `index`-th child (1-based).
    pub fn child(&self, index: u32) -> UlamLabel {
        assert!(index >= 1, "child indices are 1-based");
        let mut v = self.0.clone();
        v.push(index);
        UlamLabel(v)
    }

    /// Parses the serialized form: `.` for the root, else dot-separated
    /// 1-based indices like `2.1.3`.
    pub fn parse(s: &str) -> Option<UlamLabel> {
        if s == "." {
            return Some(UlamLabel::root());
        }
        let mut v = Vec::new();
        for part in s.split('.') {
            let e: u32 = part.parse().ok()?;
            if e == 0 {
                return None;
            }
            v.push(e);
        }
        Some(UlamLabel(v))
    }
}

impl std::fmt::Display for UlamLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return write!(f, ".");
        }
        let mut sep = "";
        for e in &self.0 {
            write!(f, "{sep}{e}")?;
            sep = ".";
        }
        Ok(())
    }
}

/// Per-sample statistics of the rejection sampler.
#[derive(Clone, Copy, Debug)]
pub struct AcceptStats {
    /// Walk runs drawn until one was accepted.
    pub attempts: u64,
    /// `T_p` of the accepted run.
    pub t_steps: u64,
    /// `L_p` of the accepted run.
    pub l_neg: u64,
}

/// Draw one accepted child vector for a node of value `p`, sorted
/// non-increasingly, reusing `children` as storage.
///
/// Each attempt draws `u` uniform and a walk run to `T_p`; the run is
/// accepted iff `u < (p+1)/(1+L_p)`, which realizes the `1/(1+L_p)`
/// size-biasing exactly (the ratio is at most 1 because `L_p >= p`).
/// Since `L` only grows along a run, an attempt is abandoned the moment
/// its count of down-steps exceeds the budget implied by `u`, and only
/// the accepted run is replayed — from a snapshot of the generator — to
/// collect its jumps. The children are all jump sizes `X_i + 1 >= 1`.
pub fn sample_children_into(
    p: u64,
    step: &StepLaw,
    rng: &mut Rng,
    children: &mut Vec<u64>,
) -> Result<AcceptStats, CascadeError> {
    assert!(p >= 1, "perimeters are positive");
    for attempt in 1..=RETRY_CAP {
        let u = rng.uniform_open();
        // Largest L compatible with accepting this u, padded by 2 so
        // float rounding can only make the budget laxer; the exact test
        // is re-applied on completion.
        let l_max = (((p + 1) as f64 / u) as u64).saturating_add(2);
        let snapshot = rng.clone();
        match walk::run_to_hitting_bounded_counts(step, p, rng, walk::DEFAULT_STEP_CAP, l_max) {
            None => continue,
            Some((_, _, true)) => continue, // step cap hit: a failed attempt
            Some((t, l, false)) => {
                if u * (1.0 + l as f64) < (p + 1) as f64 {
                    children.clear();
                    let mut replay = snapshot;
                    replay_jumps(step, p, &mut replay, children);
                    debug_assert_eq!(children.iter().sum::<u64>(), t - p);
                    children.sort_unstable_by(|a, b| b.cmp(a));
                    return Ok(AcceptStats { attempts: attempt, t_steps: t, l_neg: l });
                }
            }
        }
    }
    Err(CascadeError::RetriesExhausted { p, attempts: RETRY_CAP })
}

/// Allocating wrapper around [`sample_children_into`].
pub fn sample_children(p: u64, step: &StepLaw, rng: &mut Rng) -> Result<Vec<u64>, CascadeError> {
    let mut children = Vec::new();
    sample_children_into(p, step, rng, &mut children)?;
    Ok(children)
}

/// As [`sample_children`], also returning the sampler statistics.
pub fn sample_children_with_stats(
    p: u64,
    step: &StepLaw,
    rng: &mut Rng,
) -> Result<(Vec<u64>, AcceptStats), CascadeError> {
    let mut children = Vec::new();
    let stats = sample_children_into(p, step, rng, &mut children)?;
    Ok((children, stats))
}

/// Collecting twin of the counts-only run: consumes the identical draw
/// sequence, pushing each jump `X_i + 1` for `X_i >= 0`.
fn replay_jumps(step: &StepLaw, p: u64, rng: &mut Rng, jumps: &mut Vec<u64>) {
    let target = -(p as i64);
    let mut s: i64 = 0;
    loop {
        let x = step.sample_step(rng);
        s += x;
        if s == target {
            return;
        }
        if x >= 0 {
            jumps.push((x + 1) as u64);
        }
    }
}

/// One draw of the discrete approximation to the continuous cascade
/// offspring measure: an accepted child vector, normalized by its base.
#[derive(Clone, Debug)]
pub struct NuAlphaSample {
    /// Non-increasing normalized children `x_1 >= x_2 >= ... >= 1/p`.
    pub entries: Vec<f64>,
    pub p_base: u64,
    pub stats: AcceptStats,
}

impl NuAlphaSample {
    /// `sum_i x_i^theta`.
    pub fn power_sum(&self, theta: f64) -> f64 {
        self.entries.iter().map(|&x| x.powf(theta)).sum()
    }

    /// Number of entries strictly above `eps` (the entries are ranked,
    /// so this is a prefix length).
    pub fn count_above(&self, eps: f64) -> usize {
        self.entries.iter().take_while(|&&x| x > eps).count()
    }
}

/// Sample the normalized child vector at `p_base`.
pub fn nu_alpha_sample(
    p_base: u64,
    step: &StepLaw,
    rng: &mut Rng,
) -> Result<NuAlphaSample, CascadeError> {
    let (children, stats) = sample_children_with_stats(p_base, step, rng)?;
    let scale = 1.0 / p_base as f64;
    let entries = children.iter().map(|&c| c as f64 * scale).collect();
    Ok(NuAlphaSample { entries, p_base, stats })
}

#[derive(Clone, Debug)]
struct Node {
    /// Parent id; the root points at itself.
    parent: u32,
    value: u64,
    child_start: u32,
    child_len: u32,
}

/// A sampled cascade tree in breadth-first storage: node 0 is the root,
/// each node's children are contiguous and sorted non-increasingly by
/// value, and each generation occupies a contiguous id range.
#[derive(Clone, Debug)]
pub struct CascadeTree {
    base: u64,
    t_min: u64,
    max_generation: u32,
    nodes: Vec<Node>,
    /// `gen_bounds[k]..gen_bounds[k+1]` are the ids of generation `k`.
    gen_bounds: Vec<usize>,
}

impl CascadeTree {
    pub fn base(&self) -> u64 {
        self.base
    }

    /// The expansion threshold the tree was grown with.
    pub fn t_min(&self) -> u64 {
        self.t_min
    }

    /// The depth growth was asked for (the tree may have died earlier).
    pub fn max_generation(&self) -> u32 {
        self.max_generation
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Deepest generation index with stored nodes.
    pub fn deepest_generation(&self) -> u32 {
        self.gen_bounds.len() as u32 - 2
    }

    /// Node ids of generation `k` (empty beyond the deepest).
    pub fn generation_ids(&self, k: u32) -> std::ops::Range<usize> {
        let k = k as usize;
        if k + 1 >= self.gen_bounds.len() {
            return self.nodes.len()..self.nodes.len();
        }
        self.gen_bounds[k]..self.gen_bounds[k + 1]
    }

    pub fn value(&self, id: usize) -> u64 {
        self.nodes[id].value
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        if id == 0 {
            None
        } else {
            Some(self.nodes[id].parent as usize)
        }
    }

    pub fn children(&self, id: usize) -> std::ops::Range<usize> {
        let n = &self.nodes[id];
        n.child_start as usize..(n.child_start + n.child_len) as usize
    }

    /// 1-based index of `id` among its siblings.
    fn child_index(&self, id: usize) -> u32 {
        let parent = &self.nodes[self.nodes[id].parent as usize];
        id as u32 - parent.child_start + 1
    }

    /// The Ulam label of a stored node.
    pub fn label(&self, id: usize) -> UlamLabel {
        let mut entries = Vec::new();
        let mut cur = id;
        while cur != 0 {
            entries.push(self.child_index(cur));
            cur = self.nodes[cur].parent as usize;
        }
        entries.reverse();
        UlamLabel(entries)
    }

    /// Value at a label, if that label is stored.
    pub fn lookup(&self, label: &UlamLabel) -> Option<u64> {
        let mut id = 0usize;
        for &e in label.entries() {
            let kids = self.children(id);
            let idx = kids.start + (e - 1) as usize;
            if idx >= kids.end {
                return None;
            }
            id = idx;
        }
        Some(self.nodes[id].value)
    }

    /// Structural invariants: root value, ordered children, consistent
    /// parent links, generations covering the ids in order. Violations
    /// are bugs, so this is for tests and verification, not recovery.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        if self.nodes[0].value != self.base {
            return Err(format!("root value {} != base {}", self.nodes[0].value, self.base));
        }
        if *self.gen_bounds.first().unwrap() != 0
            || *self.gen_bounds.last().unwrap() != self.nodes.len()
            || self.gen_bounds.windows(2).any(|w| w[0] > w[1])
        {
            return Err("generation bounds are not a monotone cover".into());
        }
        for id in 0..self.nodes.len() {
            let kids = self.children(id);
            if kids.end > self.nodes.len() {
                return Err(format!("node {id}: child range out of bounds"));
            }
            let mut prev = u64::MAX;
            for c in kids {
                if self.nodes[c].parent as usize != id {
                    return Err(format!("node {c}: wrong parent link"));
                }
                if self.nodes[c].value > prev {
                    return Err(format!("node {id}: children not non-increasing"));
                }
                prev = self.nodes[c].value;
            }
        }
        Ok(())
    }

    /// Serialize as one line per node in breadth-first order: `label
    /// value`, with the root labeled `.`.
    pub fn to_lines(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for id in 0..self.nodes.len() {
            writeln!(out, "{} {}", self.label(id), self.nodes[id].value).unwrap();
        }
        out
    }
}

/// Stream key for the subtree at a child: a SplitMix64 chain over the
/// label path, seeded by the tree seed. A node's subtree thus depends
/// only on the tree seed and its label, which makes raising the
/// expansion threshold a pure pruning (replaying with the same master
/// generator leaves every surviving label's subtree untouched) and
/// would equally let subtrees be grown concurrently.
fn child_path_hash(parent_hash: u64, index: u32) -> u64 {
    let mut state = parent_hash ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut state)
}

/// Grow a cascade tree of depth `max_generation` based at `p`: every
/// stored node of value at least `t_min` is expanded through
/// [`sample_children_into`]; smaller values stay leaves. The memory
/// guard defaults to [`DEFAULT_NODE_CAP`] stored nodes.
pub fn grow_cascade(
    p: u64,
    step: &StepLaw,
    max_generation: u32,
    t_min: u64,
    rng: &mut Rng,
) -> Result<CascadeTree, CascadeError> {
    grow_cascade_with_cap(p, step, max_generation, t_min, DEFAULT_NODE_CAP, rng)
}

/// As [`grow_cascade`] with an explicit node budget.
pub fn grow_cascade_with_cap(
    p: u64,
    step: &StepLaw,
    max_generation: u32,
    t_min: u64,
    node_cap: usize,
    rng: &mut Rng,
) -> Result<CascadeTree, CascadeError> {
    assert!(p >= 1, "perimeters are positive");
    assert!(t_min >= 1, "the expansion threshold is a positive value");
    // One draw fixes the whole tree; per-node streams are derived from
    // it along label paths (see `child_path_hash`).
    let tree_seed = rng.next_u64();
    let mut nodes = vec![Node { parent: 0, value: p, child_start: 1, child_len: 0 }];
    let mut hashes: Vec<u64> = vec![tree_seed];
    let mut gen_bounds = vec![0usize, 1];
    let mut scratch: Vec<u64> = Vec::new();
    for g in 0..max_generation {
        let ids = gen_bounds[g as usize]..gen_bounds[g as usize + 1];
        if ids.is_empty() {
            break;
        }
        for id in ids {
            nodes[id].child_start = nodes.len() as u32;
            let q = nodes[id].value;
            if q < t_min {
                continue;
            }
            let mut node_rng = Rng::stream(hashes[id], 0);
            sample_children_into(q, step, &mut node_rng, &mut scratch)?;
            if nodes.len() + scratch.len() > node_cap {
                return Err(CascadeError::NodeBudgetExceeded {
                    cap: node_cap,
                    stored: nodes.len(),
                    generation: g + 1,
                    base: p,
                });
            }
            nodes[id].child_len = scratch.len() as u32;
            for (i, &v) in scratch.iter().enumerate() {
                hashes.push(child_path_hash(hashes[id], i as u32 + 1));
                nodes.push(Node { parent: id as u32, value: v, child_start: 0, child_len: 0 });
            }
        }
        gen_bounds.push(nodes.len());
    }
    // Nodes of the final generation were never visited by the expansion
    // loop; anchor their empty child ranges at the end.
    let end = nodes.len() as u32;
    for node in nodes.iter_mut() {
        if node.child_len == 0 {
            node.child_start = end;
        }
    }
    Ok(CascadeTree { base: p, t_min, max_generation, nodes, gen_bounds })
}

/// Default bound on the width of a single streamed generation.
///
/// Two `u64` vectors per generation put the worst transient near
/// `4 * 16 * DEFAULT_GENERATION_CAP` bytes while advancing, which stays
/// inside a few GiB; deep trees at bases in the thousands routinely
/// outgrow [`DEFAULT_NODE_CAP`] as whole stored objects but fit
/// generation by generation.
pub const DEFAULT_GENERATION_CAP: usize = 50_000_000;

/// Streaming front of a cascade tree: holds one generation of values at
/// a time and replaces it in place by the next one.
///
/// The per-node randomness is derived exactly as in [`grow_cascade`],
/// so for the same tree seed the streamed generations coincide with the
/// stored tree's, whatever depth the latter can afford to keep.
pub struct GenerationCursor {
    base: u64,
    t_min: u64,
    generation: u32,
    values: Vec<u64>,
    hashes: Vec<u64>,
}

impl GenerationCursor {
    /// Start a cursor at generation 0 (the root) with an explicit tree
    /// seed; [`grow_cascade`] obtains the same seed by drawing one word
    /// from its caller's generator.
    pub fn new(p: u64, t_min: u64, tree_seed: u64) -> GenerationCursor {
        assert!(p >= 1, "perimeters are positive");
        assert!(t_min >= 1, "the expansion threshold is a positive value");
        GenerationCursor {
            base: p,
            t_min,
            generation: 0,
            values: vec![p],
            hashes: vec![tree_seed],
        }
    }

    /// As [`GenerationCursor::new`], drawing the tree seed from `rng` the
    /// same way [`grow_cascade`] does.
    pub fn from_rng(p: u64, t_min: u64, rng: &mut Rng) -> GenerationCursor {
        let tree_seed = rng.next_u64();
        GenerationCursor::new(p, t_min, tree_seed)
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Values of the current generation, in the same order as the stored
    /// tree keeps them (per parent, ranked decreasingly).
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// `sum (value / base)^theta` over the current generation.
    pub fn power_sum(&self, theta: f64) -> f64 {
        let base = self.base as f64;
        self.values.iter().map(|&v| (v as f64 / base).powf(theta)).sum()
    }

    pub fn max_value(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Replace the current generation by the next one.
    pub fn advance(&mut self, step: &StepLaw) -> Result<(), CascadeError> {
        self.advance_with_cap(step, DEFAULT_GENERATION_CAP)
    }

    pub fn advance_with_cap(
        &mut self,
        step: &StepLaw,
        generation_cap: usize,
    ) -> Result<(), CascadeError> {
        let mut next_values: Vec<u64> = Vec::new();
        let mut next_hashes: Vec<u64> = Vec::new();
        let mut scratch: Vec<u64> = Vec::new();
        for (&q, &hash) in self.values.iter().zip(&self.hashes) {
            if q < self.t_min {
                continue;
            }
            let mut node_rng = Rng::stream(hash, 0);
            sample_children_into(q, step, &mut node_rng, &mut scratch)?;
            if next_values.len() + scratch.len() > generation_cap {
                return Err(CascadeError::NodeBudgetExceeded {
                    cap: generation_cap,
                    stored: next_values.len(),
                    generation: self.generation + 1,
                    base: self.base,
                });
            }
            for (i, &v) in scratch.iter().enumerate() {
                next_hashes.push(child_path_hash(hash, i as u32 + 1));
                next_values.push(v);
            }
        }
        self.values = next_values;
        self.hashes = next_hashes;
        self.generation += 1;
        Ok(())
    }
}

/// Per-generation record of additive-martingale values `W_0 ..= W_k`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MartingaleRecord {
    pub alpha: f64,
    pub theta: f64,
    pub p: u64,
    pub values: Vec<f64>,
}

/// Raw generation sum `sum_{|u| = k} (value(u) / p)^theta`, without any
/// normalizer.
pub fn generation_power_sum(tree: &CascadeTree, theta: f64, k: u32) -> f64 {
    let base = tree.base() as f64;
    tree.generation_ids(k).map(|id| (tree.value(id) as f64 / base).powf(theta)).sum()
}

fn require_untruncated(tree: &CascadeTree, k: u32) -> Result<(), CascadeError> {
    // Generation 1 is exact even under a threshold: children are always
    // stored, only their expansion is skipped.
    if tree.t_min > 1 && k >= 2 {
        return Err(CascadeError::TruncatedTree { t_min: tree.t_min, k });
    }
    Ok(())
}

/// The normalized generation-`k` additive martingale
/// `phi(theta)^{-k} sum_{|u|=k} (value(u)/p)^theta`.
///
/// For `k >= 2` the tree must have been grown without an expansion
/// threshold; see [`additive_martingale_lower_bound`] for thresholded
/// trees.
pub fn additive_martingale(
    tree: &CascadeTree,
    params: &CascadeParameters,
    theta: f64,
    k: u32,
) -> Result<f64, CascadeError> {
    require_untruncated(tree, k)?;
    Ok(additive_martingale_lower_bound(tree, params, theta, k))
}

/// As [`additive_martingale`], accepting thresholded trees: with
/// pruning the sum misses subtrees, so the value is a lower bound on
/// the full martingale.
pub fn additive_martingale_lower_bound(
    tree: &CascadeTree,
    params: &CascadeParameters,
    theta: f64,
    k: u32,
) -> f64 {
    assert!(k <= tree.max_generation, "generation beyond the tree's depth");
    let phi = match biggins_transform(params, theta) {
        Ext::Finite(v) => v,
        Ext::PosInfinity => {
            panic!("theta outside (alpha, alpha + 1) has no finite normalizer")
        }
    };
    generation_power_sum(tree, theta, k) * phi.powi(-(k as i32))
}

/// The generation-`k` sum at the Malthusian exponent, where the
/// normalizer is exactly 1 and none is applied.
pub fn malthusian_martingale(
    tree: &CascadeTree,
    params: &CascadeParameters,
    k: u32,
) -> Result<f64, CascadeError> {
    require_untruncated(tree, k)?;
    assert!(k <= tree.max_generation, "generation beyond the tree's depth");
    Ok(generation_power_sum(tree, malthusian_parameter(params), k))
}

/// `W_0 ..= W_k` of [`additive_martingale`] in one record.
pub fn martingale_record(
    tree: &CascadeTree,
    params: &CascadeParameters,
    theta: f64,
    k: u32,
) -> Result<MartingaleRecord, CascadeError> {
    require_untruncated(tree, k)?;
    let values =
        (0..=k).map(|j| additive_martingale_lower_bound(tree, params, theta, j)).collect();
    Ok(MartingaleRecord { alpha: params.alpha, theta, p: tree.base(), values })
}

/// Largest normalized value strictly beyond generation `k` (0 if there
/// is none): the diagnostic for uniform smallness of deep labels.
pub fn max_label_beyond(tree: &CascadeTree, k: u32) -> f64 {
    let mut best = 0u64;
    let mut g = k + 1;
    loop {
        let ids = tree.generation_ids(g);
        if ids.is_empty() {
            break;
        }
        for id in ids {
            best = best.max(tree.value(id));
        }
        g += 1;
    }
    best as f64 / tree.base() as f64
}
