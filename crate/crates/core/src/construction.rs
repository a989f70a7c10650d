//! Index-array construction.
//!
//! Every parity array starts as the `alpha x k` grid of `(row, node)` pairs;
//! arrays `P_2..P_r` get one extra column per group of `r` systematic nodes.
//! For each systematic node we pick a partition of the row indices, designate
//! one subset as the rows read first during repair, and write the node's
//! remaining ("residual") symbols into those rows of the group's extra column.
//!
//! All row and node indices in this module are zero based. The JSON layout
//! produced by [`IndexArraySet::to_json`] is one based, with `[0,0]` marking an
//! empty cell.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galois::FieldSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstructionError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("sub-packetization {alpha} exceeds r^ceil(k/r) = {max}")]
    AlphaTooLarge { alpha: usize, max: u64 },
    #[error("no valid partition found for systematic node {node}")]
    NoValidPartition { node: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

/// `(n, k, r, alpha)` plus the symbol field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub alpha: usize,
    pub field: FieldSpec,
}

impl CodeParams {
    pub fn new(n: usize, k: usize, alpha: usize, field: FieldSpec) -> Result<Self, ConstructionError> {
        if k == 0 || n <= k {
            return Err(ConstructionError::InvalidParams(format!(
                "need n > k >= 1, got n = {n}, k = {k}"
            )));
        }
        if alpha == 0 {
            return Err(ConstructionError::InvalidParams("alpha must be at least 1".into()));
        }
        let r = n - k;
        let max = Self::max_alpha(k, r);
        if alpha as u64 > max {
            return Err(ConstructionError::AlphaTooLarge { alpha, max });
        }
        Ok(CodeParams { n, k, r, alpha, field })
    }

    /// `r^ceil(k/r)`, saturating.
    pub fn max_alpha(k: usize, r: usize) -> u64 {
        let exp = k.div_ceil(r) as u32;
        (r as u64).checked_pow(exp).unwrap_or(u64::MAX)
    }

    pub fn group_count(&self) -> usize {
        self.k.div_ceil(self.r)
    }

    /// `ceil(alpha / r)`: rows read from each helper in the best case.
    pub fn portion(&self) -> usize {
        self.alpha.div_ceil(self.r)
    }

    /// File size `M = k * alpha` in symbols.
    pub fn message_symbols(&self) -> usize {
        self.k * self.alpha
    }

    /// Columns of `P_l` (zero-based `l`).
    pub fn array_cols(&self, l: usize) -> usize {
        if l == 0 {
            self.k
        } else {
            self.k + self.group_count()
        }
    }

    pub fn is_access_optimal(&self) -> bool {
        self.alpha as u64 == Self::max_alpha(self.k, self.r)
    }
}

/// Disjoint groups `J_1, J_2, ...` of systematic nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn group_of(&self, node: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&node))
    }
}

/// Natural ordering: `J_1 = {0..r}`, `J_2 = {r..2r}`, ... with a short last group
/// when `r` does not divide `k`.
pub fn natural_grouping(params: &CodeParams) -> GroupPartition {
    let groups = (0..params.k)
        .collect::<Vec<_>>()
        .chunks(params.r)
        .map(<[usize]>::to_vec)
        .collect();
    GroupPartition { groups }
}

/// Row-selection granularity for one group. `run == 0` marks the relaxed
/// second phase, where only the distinctness condition is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSchedule {
    pub portion: usize,
    pub run: usize,
    pub step: usize,
}

impl PartitionSchedule {
    pub fn is_regular(&self) -> bool {
        self.run > 0
    }

    /// The subset of `portion` rows made of runs of `run` cyclically consecutive
    /// indices separated by `step` skipped indices, starting at `start`.
    /// `None` if the walk revisits an index before collecting enough rows.
    pub fn pattern_from(&self, alpha: usize, start: usize) -> Option<Vec<usize>> {
        if self.run == 0 || self.portion > alpha {
            return None;
        }
        let mut seen = vec![false; alpha];
        let mut out = Vec::with_capacity(self.portion);
        let mut idx = start % alpha;
        while out.len() < self.portion {
            for _ in 0..self.run {
                if out.len() == self.portion {
                    break;
                }
                if seen[idx] {
                    return None;
                }
                seen[idx] = true;
                out.push(idx);
                idx = (idx + 1) % alpha;
            }
            idx = (idx + self.step) % alpha;
        }
        out.sort_unstable();
        Some(out)
    }

    /// All distinct regular subsets, in order of first appearance by start index.
    pub fn patterns(&self, alpha: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for s in 0..alpha {
            if let Some(p) = self.pattern_from(alpha, s) {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn is_pattern(&self, alpha: usize, subset: &[usize]) -> bool {
        subset.len() == self.portion
            && subset
                .first()
                .is_some_and(|_| (0..alpha).any(|s| self.pattern_from(alpha, s).as_deref() == Some(subset)))
    }
}

/// Schedules for every group. Runs shrink by a factor `r` per group; once a
/// group with `run == 1` has been scheduled the remaining groups are relaxed.
pub fn group_schedules(params: &CodeParams) -> Vec<PartitionSchedule> {
    let portion = params.portion();
    let mut out = Vec::with_capacity(params.group_count());
    let mut regular = true;
    let mut upper = params.alpha; // ceil(alpha / r^(nu-1))
    for _ in 0..params.group_count() {
        let run = params.alpha.div_ceil(params.r.saturating_pow(out.len() as u32 + 1).max(1));
        let run = run.max(1);
        if regular {
            out.push(PartitionSchedule {
                portion,
                run,
                step: upper - run,
            });
            regular = run > 1;
        } else {
            out.push(PartitionSchedule { portion, run: 0, step: 0 });
        }
        upper = run;
    }
    out
}

/// One residual symbol of a node written into an appended cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualSlot {
    /// Row index of the residual symbol inside its node.
    pub residual: usize,
    /// Parity array (zero based, never 0).
    pub array: usize,
    /// Row of the parity array; one of the node's chosen rows when `r | alpha`.
    pub row: usize,
    /// Absolute column of the parity array (`>= k`).
    pub column: usize,
}

/// Row partition of one systematic node with its designated subset and the
/// cells its residual symbols were scheduled into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidPartition {
    pub node: usize,
    pub group: usize,
    pub subsets: Vec<Vec<usize>>,
    pub chosen: usize,
    pub slots: Vec<ResidualSlot>,
}

impl ValidPartition {
    pub fn chosen_rows(&self) -> &[usize] {
        &self.subsets[self.chosen]
    }

    fn same_subsets(&self, other: &ValidPartition) -> bool {
        let a: BTreeSet<&Vec<usize>> = self.subsets.iter().collect();
        let b: BTreeSet<&Vec<usize>> = other.subsets.iter().collect();
        a == b
    }
}

/// Position of one systematic symbol: row `row` of node `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolIndex {
    pub row: usize,
    pub node: usize,
}

impl SymbolIndex {
    pub fn new(row: usize, node: usize) -> Self {
        SymbolIndex { row, node }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexArray {
    cols: usize,
    cells: Vec<Option<SymbolIndex>>,
}

impl IndexArray {
    fn base(alpha: usize, k: usize, cols: usize) -> Self {
        let mut cells = vec![None; alpha * cols];
        for i in 0..alpha {
            for j in 0..k {
                cells[i * cols + j] = Some(SymbolIndex::new(i, j));
            }
        }
        IndexArray { cols, cells }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<SymbolIndex> {
        self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Option<SymbolIndex>] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }
}

/// The arrays `P_1..P_r` plus the per-node partitions that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexArraySet {
    params: CodeParams,
    groups: GroupPartition,
    arrays: Vec<IndexArray>,
    partitions: Vec<ValidPartition>,
}

impl IndexArraySet {
    /// Base grids with every appended cell empty.
    pub fn empty(params: &CodeParams) -> Self {
        let arrays = (0..params.r)
            .map(|l| IndexArray::base(params.alpha, params.k, params.array_cols(l)))
            .collect();
        IndexArraySet {
            params: *params,
            groups: natural_grouping(params),
            arrays,
            partitions: Vec::new(),
        }
    }

    /// Builds arrays from explicit per-node partitions, validating every slot.
    pub fn from_partitions(
        params: &CodeParams,
        partitions: Vec<ValidPartition>,
    ) -> Result<Self, ConstructionError> {
        let mut set = Self::empty(params);
        for vp in partitions {
            set.apply(vp)?;
        }
        Ok(set)
    }

    /// Layout where each group uses one shared ordered partition: the m-th
    /// member of the group takes block `m` and its residual blocks go to
    /// `P_2..P_r` in list order. Requires `r | alpha`.
    pub fn from_group_layouts(
        params: &CodeParams,
        layouts: &[Vec<Vec<usize>>],
    ) -> Result<Self, ConstructionError> {
        let groups = natural_grouping(params);
        if layouts.len() != groups.groups.len() {
            return Err(ConstructionError::InvalidLayout(format!(
                "{} group layouts for {} groups",
                layouts.len(),
                groups.groups.len()
            )));
        }
        let mut parts = Vec::with_capacity(params.k);
        for (g, (members, blocks)) in groups.groups.iter().zip(layouts).enumerate() {
            for (m, &node) in members.iter().enumerate() {
                if m >= blocks.len() {
                    return Err(ConstructionError::InvalidLayout(format!(
                        "group {} has fewer blocks than members",
                        g + 1
                    )));
                }
                parts.push(block_partition(params, node, g, blocks.clone(), m));
            }
        }
        Self::from_partitions(params, parts)
    }

    fn apply(&mut self, vp: ValidPartition) -> Result<(), ConstructionError> {
        let p = &self.params;
        if vp.node >= p.k {
            return Err(ConstructionError::InvalidLayout(format!("node {} out of range", vp.node)));
        }
        if self.partitions.iter().any(|q| q.node == vp.node) {
            return Err(ConstructionError::InvalidLayout(format!("node {} laid out twice", vp.node)));
        }
        if self.groups.group_of(vp.node) != Some(vp.group) {
            return Err(ConstructionError::InvalidLayout(format!(
                "node {} is not in group {}",
                vp.node, vp.group
            )));
        }
        let mut all: Vec<usize> = vp.subsets.iter().flatten().copied().collect();
        all.sort_unstable();
        if all != (0..p.alpha).collect::<Vec<_>>() {
            return Err(ConstructionError::InvalidLayout(format!(
                "subsets of node {} do not partition the rows",
                vp.node
            )));
        }
        if vp.chosen >= vp.subsets.len() {
            return Err(ConstructionError::InvalidLayout("chosen subset out of range".into()));
        }
        let chosen = vp.chosen_rows().to_vec();
        let mut placed = BTreeSet::new();
        for s in &vp.slots {
            if s.array == 0 || s.array >= p.r || s.column < p.k || s.column >= p.array_cols(s.array) {
                return Err(ConstructionError::InvalidLayout(format!("slot {s:?} outside appended area")));
            }
            let row_ok = if p.alpha % p.r == 0 { chosen.contains(&s.row) } else { s.row != s.residual };
            if !row_ok || chosen.contains(&s.residual) || s.residual >= p.alpha {
                return Err(ConstructionError::InvalidLayout(format!(
                    "slot {s:?} of node {} breaks the chosen-row rule",
                    vp.node
                )));
            }
            if !placed.insert(s.residual) {
                return Err(ConstructionError::InvalidLayout(format!(
                    "residual {} of node {} scheduled twice",
                    s.residual, vp.node
                )));
            }
            let arr = &mut self.arrays[s.array];
            let idx = s.row * arr.cols + s.column;
            if arr.cells[idx].is_some() {
                return Err(ConstructionError::InvalidLayout(format!("cell {s:?} already occupied")));
            }
            arr.cells[idx] = Some(SymbolIndex::new(s.residual, vp.node));
        }
        self.partitions.push(vp);
        self.partitions.sort_by_key(|q| q.node);
        Ok(())
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn groups(&self) -> &GroupPartition {
        &self.groups
    }

    /// `P_{l+1}`.
    pub fn array(&self, l: usize) -> &IndexArray {
        &self.arrays[l]
    }

    pub fn arrays(&self) -> &[IndexArray] {
        &self.arrays
    }

    pub fn partitions(&self) -> &[ValidPartition] {
        &self.partitions
    }

    pub fn partition(&self, node: usize) -> Option<&ValidPartition> {
        self.partitions.iter().find(|vp| vp.node == node)
    }

    /// Rows read first when repairing `node`.
    pub fn chosen_rows(&self, node: usize) -> &[usize] {
        self.partition(node).map_or(&[], ValidPartition::chosen_rows)
    }

    /// Non-empty cells of row `i` of `P_{l+1}`, in column order.
    pub fn row_terms(&self, l: usize, i: usize) -> impl Iterator<Item = SymbolIndex> + '_ {
        self.arrays[l].row(i).iter().flatten().copied()
    }

    /// Non-empty appended cells of row `i` of `P_{l+1}`.
    pub fn appended_terms(&self, l: usize, i: usize) -> impl Iterator<Item = SymbolIndex> + '_ {
        self.arrays[l].row(i)[self.params.k..].iter().flatten().copied()
    }

    /// Number of filled appended cells in row `i` of `P_{l+1}`.
    fn occupancy(&self, l: usize, i: usize) -> usize {
        self.appended_terms(l, i).count()
    }

    fn is_free(&self, l: usize, row: usize, col: usize) -> bool {
        self.arrays[l].cell(row, col).is_none()
    }

    /// Canonical JSON: one-based `[i, j]` pairs, `[0, 0]` for empty cells.
    pub fn to_json(&self) -> serde_json::Value {
        let arrays: Vec<Vec<Vec<[usize; 2]>>> = self
            .arrays
            .iter()
            .map(|a| {
                (0..self.params.alpha)
                    .map(|i| {
                        a.row(i)
                            .iter()
                            .map(|c| c.map_or([0, 0], |s| [s.row + 1, s.node + 1]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let layout = LayoutJson::from_set(self);
        serde_json::json!({
            "n": self.params.n,
            "k": self.params.k,
            "r": self.params.r,
            "alpha": self.params.alpha,
            "groups": self.groups.groups.iter()
                .map(|g| g.iter().map(|j| j + 1).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "arrays": arrays,
            "partitions": layout.partitions,
        })
    }
}

/// One-based serialisable form of the per-node partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutJson {
    pub partitions: Vec<PartitionJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionJson {
    pub node: usize,
    pub subsets: Vec<Vec<usize>>,
    pub chosen: Vec<usize>,
    /// `[residual, array, row, column]`, one based.
    pub slots: Vec<[usize; 4]>,
}

impl LayoutJson {
    pub fn from_set(set: &IndexArraySet) -> Self {
        let partitions = set
            .partitions
            .iter()
            .map(|vp| PartitionJson {
                node: vp.node + 1,
                subsets: vp.subsets.iter().map(|s| s.iter().map(|i| i + 1).collect()).collect(),
                chosen: vp.chosen_rows().iter().map(|i| i + 1).collect(),
                slots: vp
                    .slots
                    .iter()
                    .map(|s| [s.residual + 1, s.array + 1, s.row + 1, s.column + 1])
                    .collect(),
            })
            .collect();
        LayoutJson { partitions }
    }

    pub fn to_set(&self, params: &CodeParams) -> Result<IndexArraySet, ConstructionError> {
        let groups = natural_grouping(params);
        let dec = |v: usize| {
            v.checked_sub(1)
                .ok_or_else(|| ConstructionError::InvalidLayout("zero index in layout".into()))
        };
        let mut parts = Vec::with_capacity(self.partitions.len());
        for pj in &self.partitions {
            let node = dec(pj.node)?;
            let subsets: Vec<Vec<usize>> = pj
                .subsets
                .iter()
                .map(|s| s.iter().map(|&i| dec(i)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?;
            let chosen_rows: Vec<usize> = pj.chosen.iter().map(|&i| dec(i)).collect::<Result<_, _>>()?;
            let chosen = subsets
                .iter()
                .position(|s| *s == chosen_rows)
                .ok_or_else(|| ConstructionError::InvalidLayout("chosen subset not in partition".into()))?;
            let slots = pj
                .slots
                .iter()
                .map(|s| {
                    Ok(ResidualSlot {
                        residual: dec(s[0])?,
                        array: dec(s[1])?,
                        row: dec(s[2])?,
                        column: dec(s[3])?,
                    })
                })
                .collect::<Result<_, ConstructionError>>()?;
            let group = groups
                .group_of(node)
                .ok_or_else(|| ConstructionError::InvalidLayout(format!("node {} out of range", node + 1)))?;
            parts.push(ValidPartition { node, group, subsets, chosen, slots });
        }
        IndexArraySet::from_partitions(params, parts)
    }
}

/// Partition record for the `m`-th member of a group sharing `blocks`.
fn block_partition(
    params: &CodeParams,
    node: usize,
    group: usize,
    blocks: Vec<Vec<usize>>,
    chosen: usize,
) -> ValidPartition {
    let rows = blocks[chosen].clone();
    let column = params.k + group;
    let slots = blocks
        .iter()
        .enumerate()
        .filter(|&(b, _)| b != chosen)
        .enumerate()
        .flat_map(|(a, (_, block))| {
            let rows = rows.clone();
            block.iter().zip(rows).map(move |(&residual, row)| ResidualSlot {
                residual,
                array: a + 1,
                row,
                column,
            })
        })
        .collect();
    ValidPartition { node, group, subsets: blocks, chosen, slots }
}

/// Condition 1: some subset of `portion` rows follows the run/step pattern and
/// addresses cells of `column` that are all empty in at least one of `P_2..P_r`.
pub fn check_condition1(
    partition: &ValidPartition,
    schedule: &PartitionSchedule,
    arrays: &IndexArraySet,
    column: usize,
) -> bool {
    let alpha = arrays.params.alpha;
    partition.subsets.iter().any(|s| {
        schedule.is_pattern(alpha, s)
            && (1..arrays.params.r).any(|l| {
                column < arrays.params.array_cols(l) && s.iter().all(|&i| arrays.is_free(l, i, column))
            })
    })
}

/// Condition 2: the partition matches those already fixed in its group (when
/// `r | alpha`), its designated subset differs from every other node's, and,
/// when `portion | alpha`, designated subsets within the group are disjoint.
pub fn check_condition2(
    candidate: &ValidPartition,
    existing: &[ValidPartition],
    groups: &GroupPartition,
    params: &CodeParams,
) -> bool {
    let others = existing.iter().filter(|e| e.node != candidate.node);
    let mine = candidate.chosen_rows();
    let group = &groups.groups[candidate.group];
    for e in others {
        if e.chosen_rows() == mine {
            return false;
        }
        if group.contains(&e.node) {
            if params.alpha % params.r == 0 && !candidate.same_subsets(e) {
                return false;
            }
            if params.alpha % params.portion() == 0 && e.chosen_rows().iter().any(|i| mine.contains(i)) {
                return false;
            }
        }
    }
    true
}

/// Partition for the next unscheduled member of group `group_index`.
pub fn valid_partitioning(
    existing: &[ValidPartition],
    params: &CodeParams,
    schedule: &PartitionSchedule,
    group_index: usize,
    arrays: &IndexArraySet,
) -> Result<ValidPartition, ConstructionError> {
    let group = arrays
        .groups
        .groups
        .get(group_index)
        .ok_or_else(|| ConstructionError::PreconditionViolated(format!("no group {group_index}")))?;
    let node = *group
        .iter()
        .find(|j| !existing.iter().any(|e| e.node == **j))
        .ok_or_else(|| ConstructionError::PreconditionViolated(format!("group {group_index} complete")))?;
    let forbidden: Vec<Vec<usize>> = existing.iter().map(|e| e.chosen_rows().to_vec()).collect();

    if params.alpha % params.r == 0 {
        let peers: Vec<&ValidPartition> = existing.iter().filter(|e| e.group == group_index).collect();
        let blocks = match peers.first() {
            Some(p) => p.subsets.clone(),
            None => {
                let other_groups: Vec<Vec<usize>> = existing
                    .iter()
                    .filter(|e| e.group != group_index)
                    .map(|e| e.chosen_rows().to_vec())
                    .collect();
                group_partition(params.alpha, params.r, schedule, &other_groups)
            }
        };
        let taken: Vec<&[usize]> = peers.iter().map(|p| p.chosen_rows()).collect();
        let column = params.k + group_index;
        let free = |b: &Vec<usize>| {
            !taken.contains(&b.as_slice())
                && (1..params.r).any(|l| b.iter().all(|&i| arrays.is_free(l, i, column)))
        };
        let chosen = blocks
            .iter()
            .position(|b| free(b) && !forbidden.contains(b))
            .or_else(|| blocks.iter().position(free))
            .ok_or(ConstructionError::NoValidPartition { node })?;
        return Ok(block_partition(params, node, group_index, blocks, chosen));
    }

    node_partition(params, node, group_index, schedule, arrays, &forbidden)
}

/// Budgeted lexicographic search for a shared group partition. Prefers
/// partitions whose blocks avoid `forbidden` and that contain as many regular
/// (run/step) blocks as possible; ties go to the lexicographically smallest.
fn group_partition(
    alpha: usize,
    r: usize,
    schedule: &PartitionSchedule,
    forbidden: &[Vec<usize>],
) -> Vec<Vec<usize>> {
    let portion = alpha / r;
    let all: Vec<usize> = (0..alpha).collect();
    let patterns = schedule.patterns(alpha);
    for enforce in [true, false] {
        let forbid: &[Vec<usize>] = if enforce { forbidden } else { &[] };
        let cands: Vec<Vec<usize>> = patterns.iter().filter(|p| !forbid.contains(p)).cloned().collect();
        for m in (1..=r.min(cands.len())).rev() {
            let mut best: Option<Vec<Vec<usize>>> = None;
            let mut budget = SEARCH_BUDGET;
            let mut picked = Vec::new();
            let mut used = vec![false; alpha];
            pattern_combos(&cands, 0, m, &mut picked, &mut used, &mut budget, &mut |combo, used| {
                let rest: Vec<usize> = all.iter().copied().filter(|&i| !used[i]).collect();
                let mut fill_budget = SEARCH_BUDGET;
                if let Some(tail) = lex_fill(&rest, portion, forbid, &mut fill_budget) {
                    let mut part: Vec<Vec<usize>> = combo.iter().map(|&c| cands[c].clone()).collect();
                    part.extend(tail);
                    part.sort();
                    if best.as_ref().is_none_or(|b| part < *b) {
                        best = Some(part);
                    }
                }
            });
            if let Some(b) = best {
                return b;
            }
        }
        let mut budget = SEARCH_BUDGET;
        if let Some(part) = lex_fill(&all, portion, forbid, &mut budget) {
            return part;
        }
    }
    all.chunks(portion).map(<[usize]>::to_vec).collect()
}

const SEARCH_BUDGET: usize = 200_000;

/// Visits every set of `m` pairwise-disjoint candidates (indices ascending).
fn pattern_combos(
    cands: &[Vec<usize>],
    from: usize,
    m: usize,
    picked: &mut Vec<usize>,
    used: &mut Vec<bool>,
    budget: &mut usize,
    visit: &mut dyn FnMut(&[usize], &[bool]),
) {
    if picked.len() == m {
        visit(picked, used);
        return;
    }
    for c in from..cands.len() {
        if *budget == 0 {
            return;
        }
        *budget -= 1;
        if cands[c].iter().any(|&i| used[i]) {
            continue;
        }
        for &i in &cands[c] {
            used[i] = true;
        }
        picked.push(c);
        pattern_combos(cands, c + 1, m, picked, used, budget, visit);
        picked.pop();
        for &i in &cands[c] {
            used[i] = false;
        }
    }
}

/// Lexicographically first split of sorted `rest` into blocks of `size`
/// avoiding `forbidden`.
fn lex_fill(
    rest: &[usize],
    size: usize,
    forbidden: &[Vec<usize>],
    budget: &mut usize,
) -> Option<Vec<Vec<usize>>> {
    if rest.is_empty() {
        return Some(Vec::new());
    }
    if rest.len() % size != 0 {
        return None;
    }
    let first = rest[0];
    let tail = &rest[1..];
    let mut idx: Vec<usize> = (0..size - 1).collect();
    loop {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let mut block = Vec::with_capacity(size);
        block.push(first);
        block.extend(idx.iter().map(|&i| tail[i]));
        if !forbidden.contains(&block) {
            let remaining: Vec<usize> = tail
                .iter()
                .enumerate()
                .filter(|(p, _)| !idx.contains(p))
                .map(|(_, &v)| v)
                .collect();
            if let Some(mut more) = lex_fill(&remaining, size, forbidden, budget) {
                more.insert(0, block);
                return Some(more);
            }
        }
        if !next_combination(&mut idx, tail.len()) {
            return None;
        }
    }
}

/// Advances `idx` to the next lexicographic combination of `0..n`.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let m = idx.len();
    for pos in (0..m).rev() {
        if idx[pos] < n - m + pos {
            idx[pos] += 1;
            for q in pos + 1..m {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Per-node scheduling used when `r` does not divide `alpha`: the node picks
/// its own `portion` rows and spreads its residual symbols over the free cells
/// of those rows, favouring parity rows that carry few extra symbols so far.
fn node_partition(
    params: &CodeParams,
    node: usize,
    group: usize,
    schedule: &PartitionSchedule,
    arrays: &IndexArraySet,
    forbidden: &[Vec<usize>],
) -> Result<ValidPartition, ConstructionError> {
    let alpha = params.alpha;
    let portion = params.portion();
    let column = params.k + group;
    let need = alpha - portion;

    let mut cands: Vec<(Vec<usize>, bool)> = schedule.patterns(alpha).into_iter().map(|p| (p, true)).collect();
    for s in 0..alpha {
        let mut w: Vec<usize> = (0..portion).map(|d| (s + d) % alpha).collect();
        w.sort_unstable();
        if !cands.iter().any(|(c, _)| *c == w) {
            cands.push((w, false));
        }
    }
    let capacity = |rows: &[usize]| -> usize {
        rows.iter()
            .map(|&i| (1..params.r).filter(|&l| arrays.is_free(l, i, column)).count())
            .sum()
    };
    // Extra symbols already sitting in the cheapest `need` free cells.
    let load = |rows: &[usize]| -> usize {
        let mut occ: Vec<usize> = rows
            .iter()
            .flat_map(|&i| (1..params.r).filter(move |&l| arrays.is_free(l, i, column)).map(move |l| (l, i)))
            .map(|(l, i)| arrays.occupancy(l, i))
            .collect();
        occ.sort_unstable();
        occ.iter().take(need).sum()
    };
    let tiers: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];
    let mut rows = None;
    for (want_distinct, want_pattern) in tiers {
        rows = cands
            .iter()
            .filter(|(c, pat)| {
                (!want_distinct || !forbidden.contains(c))
                    && (!want_pattern || *pat)
                    && capacity(c) >= need
            })
            .min_by_key(|(c, _)| load(c))
            .map(|(c, _)| c.clone());
        if rows.is_some() {
            break;
        }
    }
    let rows = rows.unwrap_or_else(|| {
        // Rows with the most free cells in the own column, then in all
        // appended columns, lowest index first on ties.
        let spare = |i: usize| -> usize {
            (1..params.r)
                .map(|l| (params.k..params.array_cols(l)).filter(|&c| arrays.is_free(l, i, c)).count())
                .sum()
        };
        let mut order: Vec<usize> = (0..alpha).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(capacity(&[i])), std::cmp::Reverse(spare(i)), i));
        let mut r: Vec<usize> = order[..portion].to_vec();
        r.sort_unstable();
        r
    });

    let residuals: Vec<usize> = (0..alpha).filter(|i| !rows.contains(i)).collect();
    let mut next = 0;
    let mut slots = Vec::with_capacity(need);
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    let mut used_arrays = BTreeSet::new();
    while next < residuals.len() {
        // (cost, take, array, rows) with cost compared per symbol placed.
        let mut best: Option<(usize, usize, usize, Vec<usize>)> = None;
        for l in 1..params.r {
            if used_arrays.contains(&l) {
                continue;
            }
            let mut free: Vec<usize> = rows.iter().copied().filter(|&i| arrays.is_free(l, i, column)).collect();
            if free.is_empty() {
                continue;
            }
            free.sort_by_key(|&i| (arrays.occupancy(l, i), i));
            let take = free.len().min(residuals.len() - next);
            free.truncate(take);
            let cost: usize = free.iter().map(|&i| arrays.occupancy(l, i)).sum();
            let better = match &best {
                None => true,
                Some((bc, bt, _, _)) => cost * bt < bc * take || (cost * bt == bc * take && take > *bt),
            };
            if better {
                best = Some((cost, take, l, free));
            }
        }
        let Some((_, take, l, mut target)) = best else {
            break;
        };
        target.sort_unstable();
        used_arrays.insert(l);
        let chunk = residuals[next..next + take].to_vec();
        for (&residual, &row) in chunk.iter().zip(&target) {
            slots.push(ResidualSlot { residual, array: l, row, column });
        }
        chunks.push(chunk);
        next += take;
    }
    // Spill into other appended columns if the group's own column is full.
    if next < residuals.len() {
        let mut spill = Vec::new();
        'outer: for col in params.k..params.k + params.group_count() {
            if col == column {
                continue;
            }
            for l in (1..params.r).filter(|&l| col < params.array_cols(l)) {
                for &i in &rows {
                    if next + spill.len() == residuals.len() {
                        break 'outer;
                    }
                    if arrays.is_free(l, i, col) {
                        let residual = residuals[next + spill.len()];
                        slots.push(ResidualSlot { residual, array: l, row: i, column: col });
                        spill.push(residual);
                    }
                }
            }
        }
        next += spill.len();
        if !spill.is_empty() {
            chunks.push(spill);
        }
    }
    // Last resort: the least loaded free appended cell on any other row.
    if next < residuals.len() {
        let mut overflow = Vec::new();
        for &residual in &residuals[next..] {
            let cell = (params.k..params.k + params.group_count())
                .flat_map(|col| (1..params.r).flat_map(move |l| (0..alpha).map(move |i| (l, i, col))))
                .filter(|&(l, i, col)| {
                    i != residual && arrays.is_free(l, i, col) && !slots.iter().any(|s| (s.array, s.row, s.column) == (l, i, col))
                })
                .min_by_key(|&(l, i, col)| {
                    let mine = slots.iter().filter(|s| (s.array, s.row) == (l, i)).count();
                    (arrays.occupancy(l, i) + mine, col != column, l, i)
                });
            let Some((array, row, col)) = cell else { break };
            slots.push(ResidualSlot { residual, array, row, column: col });
            overflow.push(residual);
        }
        next += overflow.len();
        if !overflow.is_empty() {
            chunks.push(overflow);
        }
    }
    if next < residuals.len() {
        return Err(ConstructionError::NoValidPartition { node });
    }
    let mut subsets = chunks;
    subsets.push(rows.clone());
    subsets.sort();
    let chosen = subsets.iter().position(|s| *s == rows).expect("chosen rows present");
    Ok(ValidPartition { node, group, subsets, chosen, slots })
}

/// Algorithms 1-3: base grids, appended columns and residual scheduling.
pub fn build_index_arrays(params: &CodeParams) -> Result<IndexArraySet, ConstructionError> {
    let mut set = IndexArraySet::empty(params);
    let schedules = group_schedules(params);
    let groups = set.groups.groups.clone();
    for (g, members) in groups.iter().enumerate() {
        for _ in members {
            let vp = valid_partitioning(&set.partitions.clone(), params, &schedules[g], g, &set)?;
            set.apply(vp)?;
        }
    }
    Ok(set)
}

/// With `r | alpha`, every group's residual symbols sit in one appended column.
pub fn verify_proposition1(arrays: &IndexArraySet) -> Result<bool, ConstructionError> {
    let p = arrays.params;
    if p.alpha % p.r != 0 {
        return Err(ConstructionError::PreconditionViolated(format!(
            "r = {} does not divide alpha = {}",
            p.r, p.alpha
        )));
    }
    for (g, members) in arrays.groups.groups.iter().enumerate() {
        let column = p.k + g;
        for &node in members {
            let rows = arrays.chosen_rows(node);
            for x in (0..p.alpha).filter(|x| !rows.contains(x)) {
                let mut hits = Vec::new();
                for l in 1..p.r {
                    for i in 0..p.alpha {
                        for c in p.k..p.array_cols(l) {
                            if arrays.array(l).cell(i, c) == Some(SymbolIndex::new(x, node)) {
                                hits.push(c);
                            }
                        }
                    }
                }
                if hits != [column] {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, k: usize, alpha: usize) -> CodeParams {
        CodeParams::new(n, k, alpha, FieldSpec::GF16).unwrap()
    }

    fn one_based(rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|i| i + 1).collect()
    }

    #[test]
    fn params_guard_alpha() {
        assert!(matches!(
            CodeParams::new(9, 6, 10, FieldSpec::GF16),
            Err(ConstructionError::AlphaTooLarge { alpha: 10, max: 9 })
        ));
        assert!(CodeParams::new(4, 2, 4, FieldSpec::GF16).is_err());
        assert!(CodeParams::new(6, 6, 1, FieldSpec::GF16).is_err());
        let p = params(9, 6, 9);
        assert_eq!(p.message_symbols(), 54);
        assert_eq!(p.portion(), 3);
    }

    #[test]
    fn natural_groups() {
        assert_eq!(natural_grouping(&params(9, 6, 9)).groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(natural_grouping(&params(6, 3, 3)).groups, vec![vec![0, 1, 2]]);
        let g = natural_grouping(&params(14, 10, 4)).groups;
        assert_eq!(g, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]);
    }

    #[test]
    fn schedules_follow_runs_and_steps() {
        let s = group_schedules(&params(9, 6, 9));
        assert_eq!((s[0].run, s[0].step), (3, 6));
        assert_eq!((s[1].run, s[1].step), (1, 2));
        let s = group_schedules(&params(9, 6, 6));
        assert_eq!((s[1].run, s[1].step), (1, 1));
        // Three regular groups: the last one strides by r.
        let s = group_schedules(&params(14, 10, 64));
        assert_eq!(s.iter().map(|s| (s.run, s.step)).collect::<Vec<_>>(), vec![(16, 48), (4, 12), (1, 3)]);
        // Relaxed phase once run has reached one.
        let s = group_schedules(&params(14, 10, 16));
        assert_eq!(s[1].run, 1);
        assert_eq!(s[2].run, 0);
    }

    #[test]
    fn cyclic_gap_patterns() {
        let s = PartitionSchedule { portion: 3, run: 1, step: 2 };
        assert_eq!(one_based(&s.pattern_from(9, 0).unwrap()), vec![1, 4, 7]);
        assert!(s.is_pattern(9, &[0, 3, 6]));
        assert!(!s.is_pattern(9, &[0, 4, 8]));
        let s = PartitionSchedule { portion: 2, run: 1, step: 1 };
        assert_eq!(one_based(&s.pattern_from(6, 4).unwrap()), vec![1, 5]);
    }

    #[test]
    fn table2_condition_verdicts() {
        let p = params(9, 6, 9);
        let set = IndexArraySet::empty(&p);
        let sched = group_schedules(&p);
        let d1 = ValidPartition {
            node: 3,
            group: 1,
            subsets: vec![vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]],
            chosen: 0,
            slots: vec![],
        };
        assert!(check_condition1(&d1, &sched[1], &set, 7));
        let d2 = ValidPartition {
            subsets: vec![vec![0, 4, 8], vec![1, 5, 6], vec![2, 3, 7]],
            ..d1.clone()
        };
        assert!(!check_condition1(&d2, &sched[1], &set, 7));
        let j1 = |node| ValidPartition {
            node,
            group: 0,
            subsets: vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]],
            chosen: node,
            slots: vec![],
        };
        let existing = vec![j1(0), j1(1), j1(2)];
        let groups = natural_grouping(&p);
        assert!(check_condition2(&d1, &existing, &groups, &p));
        assert!(check_condition2(&d2, &existing, &groups, &p));
        let d3 = ValidPartition {
            subsets: vec![vec![0, 2, 4], vec![1, 3, 5], vec![6, 7, 8]],
            chosen: 2,
            ..d1.clone()
        };
        assert!(!check_condition2(&d3, &existing, &groups, &p));
        // Single group: distinct chosen subsets always pass.
        let p6 = params(6, 3, 3);
        let g6 = natural_grouping(&p6);
        let mk = |node| ValidPartition {
            node,
            group: 0,
            subsets: vec![vec![0], vec![1], vec![2]],
            chosen: node,
            slots: vec![],
        };
        assert!(check_condition2(&mk(2), &[mk(0), mk(1)], &g6, &p6));
    }

    #[test]
    fn alpha9_partitions_match_table2_d1() {
        let set = build_index_arrays(&params(9, 6, 9)).unwrap();
        let chosen: Vec<Vec<usize>> = (0..6).map(|j| one_based(set.chosen_rows(j))).collect();
        assert_eq!(
            chosen,
            vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9], vec![1, 4, 7], vec![2, 5, 8], vec![3, 6, 9]]
        );
        assert_eq!(set.partition(3).unwrap().subsets, vec![vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]);
    }

    #[test]
    fn alpha6_chosen_subsets() {
        let set = build_index_arrays(&params(9, 6, 6)).unwrap();
        let chosen: Vec<Vec<usize>> = (0..6).map(|j| one_based(set.chosen_rows(j))).collect();
        assert_eq!(chosen, vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![1, 3], vec![2, 5], vec![4, 6]]);
    }

    fn appended_column(set: &IndexArraySet, l: usize, col: usize) -> Vec<(usize, usize)> {
        (0..set.params().alpha)
            .map(|i| set.array(l).cell(i, col).map_or((0, 0), |s| (s.row + 1, s.node + 1)))
            .collect()
    }

    #[test]
    fn alpha6_golden_arrays() {
        let set = build_index_arrays(&params(9, 6, 6)).unwrap();
        assert_eq!(appended_column(&set, 1, 6), vec![(3, 1), (4, 1), (1, 2), (2, 2), (1, 3), (2, 3)]);
        assert_eq!(appended_column(&set, 1, 7), vec![(2, 4), (1, 5), (5, 4), (1, 6), (3, 5), (3, 6)]);
        assert_eq!(appended_column(&set, 2, 6), vec![(5, 1), (6, 1), (5, 2), (6, 2), (3, 3), (4, 3)]);
        assert_eq!(appended_column(&set, 2, 7), vec![(4, 4), (4, 5), (6, 4), (2, 6), (6, 5), (5, 6)]);
        assert_eq!(set.array(0).cols(), 6);
        assert_eq!(set.array(1).row(0)[..6].iter().flatten().count(), 6);
    }

    #[test]
    fn alpha9_golden_arrays() {
        let set = build_index_arrays(&params(9, 6, 9)).unwrap();
        assert_eq!(
            appended_column(&set, 1, 6),
            vec![(4, 1), (5, 1), (6, 1), (1, 2), (2, 2), (3, 2), (1, 3), (2, 3), (3, 3)]
        );
        assert_eq!(
            appended_column(&set, 2, 7),
            vec![(3, 4), (3, 5), (2, 6), (6, 4), (6, 5), (5, 6), (9, 4), (9, 5), (8, 6)]
        );
    }

    #[test]
    fn small_code_partition() {
        let set = build_index_arrays(&CodeParams::new(4, 2, 2, FieldSpec::GF16).unwrap()).unwrap();
        let d1 = set.partition(0).unwrap();
        assert_eq!(d1.subsets, vec![vec![0], vec![1]]);
        assert_eq!(d1.chosen_rows(), &[0]);
    }

    #[test]
    fn alpha_one_has_only_base_grids() {
        let set = build_index_arrays(&params(9, 6, 1)).unwrap();
        for l in 1..3 {
            assert!(set.appended_terms(l, 0).next().is_none());
        }
    }

    #[test]
    fn shared_column_guard() {
        let set = build_index_arrays(&params(9, 6, 4)).unwrap();
        assert!(matches!(verify_proposition1(&set), Err(ConstructionError::PreconditionViolated(_))));
        assert_eq!(verify_proposition1(&build_index_arrays(&params(9, 6, 9)).unwrap()), Ok(true));
        assert_eq!(verify_proposition1(&build_index_arrays(&params(9, 6, 6)).unwrap()), Ok(true));
    }

    #[test]
    fn layout_rejects_bad_slots() {
        let p = params(9, 6, 6);
        let set = build_index_arrays(&p).unwrap();
        let mut parts = set.partitions().to_vec();
        parts[0].slots[0].row = 5; // not a chosen row of d_1
        assert!(IndexArraySet::from_partitions(&p, parts).is_err());
        let mut parts = set.partitions().to_vec();
        let dup = parts[1].slots[0];
        parts[0].slots[0] = ResidualSlot { residual: parts[0].slots[0].residual, ..dup };
        assert!(IndexArraySet::from_partitions(&p, parts).is_err());
    }

    #[test]
    fn layout_json_round_trips() {
        let p = params(14, 10, 2);
        let set = build_index_arrays(&p).unwrap();
        let layout = LayoutJson::from_set(&set);
        let text = serde_json::to_string(&layout).unwrap();
        let back: LayoutJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_set(&p).unwrap(), set);
    }
}
