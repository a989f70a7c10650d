//! Repair planning and execution.
//!
//! A single systematic failure is repaired in two passes: the failed node's
//! chosen rows come from `P_1` and the base grid, then its residual symbols are
//! peeled out of the parity rows that carry them. Several failures are handled
//! by selecting parity equations until the lost symbols are determined and
//! solving the resulting linear system.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::codec::{decode, parity_symbol, CodeInstance, CodecError, Stripe};
use crate::construction::{CodeParams, IndexArraySet};
use crate::galois::{solve_linear_system, Element, GaloisError, Matrix, RowBasis};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("node {0} is not a systematic node")]
    NotSystematic(usize),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("node {0} listed twice")]
    DuplicateNode(usize),
    #[error("no failed nodes given")]
    NoFailures,
    #[error("{failed} failures exceed the {r} parity nodes")]
    TooManyFailures { failed: usize, r: usize },
    #[error("selected equations reach rank {rank} of {unknowns}")]
    Unsolvable { rank: usize, unknowns: usize },
    #[error("symbol {row} of node {node} is not available")]
    MissingSymbol { node: usize, row: usize },
    #[error("selected equations do not determine the lost symbols")]
    SingularRepair,
    #[error("fetched symbols are inconsistent with the code")]
    InconsistentData,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMethod {
    /// Two single-unknown passes over the chosen rows and the residual rows.
    SingleNode,
    /// One linear solve over the selected equations.
    MultiNode,
    /// Decode from `k` surviving nodes.
    FullDecode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairPlan {
    pub failed: Vec<usize>,
    pub method: RepairMethod,
    /// Helper node to the sorted rows fetched from it.
    pub reads: BTreeMap<usize, Vec<usize>>,
    /// Selected parity equations `(l, i)` in solving order.
    pub equations: Vec<(usize, usize)>,
    /// Equations solved before the first barrier ([`RepairMethod::SingleNode`]).
    pub first_phase: usize,
    /// Failed systematic nodes solved from the equations.
    pub solved: Vec<usize>,
    /// Failed parity nodes rebuilt by re-encoding.
    pub reencode: Vec<usize>,
}

impl RepairPlan {
    pub fn symbols_read(&self) -> usize {
        self.reads.values().map(Vec::len).sum()
    }

    /// JSON with one-based rows and `d`/`p` node labels.
    pub fn to_json(&self, params: &CodeParams) -> serde_json::Value {
        let label = |j: usize| node_label(params, j);
        serde_json::json!({
            "failed": self.failed.iter().map(|&j| label(j)).collect::<Vec<_>>(),
            "method": self.method,
            "reads": self.reads.iter()
                .map(|(&j, rows)| (label(j), rows.iter().map(|i| i + 1).collect::<Vec<_>>()))
                .collect::<BTreeMap<_, _>>(),
            "equations": self.equations.iter()
                .map(|&(l, i)| serde_json::json!({"parity": format!("p{}", l + 1), "row": i + 1}))
                .collect::<Vec<_>>(),
            "symbols_read": self.symbols_read(),
        })
    }
}

/// `d1..dk` for systematic nodes, `p1..pr` for parity nodes.
pub fn node_label(params: &CodeParams, j: usize) -> String {
    if j < params.k {
        format!("d{}", j + 1)
    } else {
        format!("p{}", j - params.k + 1)
    }
}

fn add_read(reads: &mut BTreeMap<usize, BTreeSet<usize>>, node: usize, row: usize) {
    reads.entry(node).or_default().insert(row);
}

fn finish_reads(reads: BTreeMap<usize, BTreeSet<usize>>) -> BTreeMap<usize, Vec<usize>> {
    reads.into_iter().map(|(j, rows)| (j, rows.into_iter().collect())).collect()
}

/// Reads needed to evaluate `equations` when the nodes in `lost` are unknown.
fn equation_reads(
    arrays: &IndexArraySet,
    lost: &[usize],
    equations: &[(usize, usize)],
) -> BTreeMap<usize, BTreeSet<usize>> {
    let k = arrays.params().k;
    let mut reads = BTreeMap::new();
    for &(l, i) in equations {
        add_read(&mut reads, k + l, i);
        for s in arrays.row_terms(l, i) {
            if !lost.contains(&s.node) {
                add_read(&mut reads, s.node, s.row);
            }
        }
    }
    reads
}

/// Equations chosen so far, with the symbols they need and the unknowns
/// they touch. Symbols are flattened as `node * alpha + row`.
struct Selection {
    basis: RowBasis,
    equations: Vec<(usize, usize)>,
    taken: Vec<bool>,
    covered: Vec<bool>,
    have: Vec<bool>,
    scratch: Vec<usize>,
}

impl Selection {
    fn new(inst: &CodeInstance, unknowns: usize) -> Self {
        let p = inst.params();
        Selection {
            basis: RowBasis::new(inst.field(), unknowns),
            equations: Vec::new(),
            taken: vec![false; p.r * p.alpha],
            covered: vec![false; unknowns],
            have: vec![false; p.n * p.alpha],
            scratch: Vec::new(),
        }
    }

    fn is_taken(&self, alpha: usize, (l, i): (usize, usize)) -> bool {
        self.taken[l * alpha + i]
    }

    fn take(&mut self, arrays: &IndexArraySet, lost: &[usize], eq: (usize, usize), row: &[Element]) {
        let p = arrays.params();
        let (l, i) = eq;
        self.basis.insert(row);
        for (u, &c) in row.iter().enumerate() {
            if c != 0 {
                self.covered[u] = true;
            }
        }
        self.taken[l * p.alpha + i] = true;
        self.have[(p.k + l) * p.alpha + i] = true;
        for s in arrays.row_terms(l, i) {
            if !lost.contains(&s.node) {
                self.have[s.node * p.alpha + s.row] = true;
            }
        }
        self.equations.push(eq);
    }

    /// Symbols equation `eq` would add to those already needed.
    fn new_reads(&mut self, arrays: &IndexArraySet, lost: &[usize], (l, i): (usize, usize)) -> usize {
        let p = arrays.params();
        self.scratch.clear();
        let parity = (p.k + l) * p.alpha + i;
        if !self.have[parity] {
            self.scratch.push(parity);
        }
        for s in arrays.row_terms(l, i) {
            let x = s.node * p.alpha + s.row;
            if !lost.contains(&s.node) && !self.have[x] {
                self.scratch.push(x);
            }
        }
        self.scratch.sort_unstable();
        self.scratch.dedup();
        self.scratch.len()
    }
}

/// Single-node plan from the index arrays alone. `None` if some residual symbol of
/// `failed` is not carried by any parity row at its chosen rows.
pub fn single_repair_equations(arrays: &IndexArraySet, failed: usize) -> Option<(Vec<(usize, usize)>, usize)> {
    let p = arrays.params();
    let rows = arrays.chosen_rows(failed);
    let mut equations: Vec<(usize, usize)> = rows.iter().map(|&i| (0, i)).collect();
    let first_phase = equations.len();
    let mut covered = BTreeSet::new();
    for l in 1..p.r {
        for &i in rows {
            let residuals: Vec<usize> =
                arrays.appended_terms(l, i).filter(|s| s.node == failed).map(|s| s.row).collect();
            if !residuals.is_empty() {
                equations.push((l, i));
                covered.extend(residuals);
            }
        }
    }
    let expected = (0..p.alpha).filter(|x| !rows.contains(x)).count();
    (covered.len() == expected).then_some((equations, first_phase))
}

/// Single-failure plan that needs no coefficients. Used for bandwidth and I/O
/// accounting over candidate layouts.
pub fn plan_single_repair_structural(arrays: &IndexArraySet, failed: usize) -> Option<RepairPlan> {
    let (equations, first_phase) = single_repair_equations(arrays, failed)?;
    let reads = equation_reads(arrays, &[failed], &equations);
    Some(RepairPlan {
        failed: vec![failed],
        method: RepairMethod::SingleNode,
        reads: finish_reads(reads),
        equations,
        first_phase,
        solved: vec![failed],
        reencode: vec![],
    })
}

/// Plans the repair of one systematic node.
pub fn plan_single_repair(inst: &CodeInstance, failed: usize) -> Result<RepairPlan, RepairError> {
    let p = inst.params();
    if failed >= p.n {
        return Err(RepairError::UnknownNode(failed));
    }
    if failed >= p.k {
        return Err(RepairError::NotSystematic(failed));
    }
    match plan_single_repair_structural(inst.arrays(), failed) {
        Some(plan) => Ok(plan),
        None => plan_multi_repair(inst, &[failed]),
    }
}

/// Plans the repair of up to `r` systematic nodes at once.
pub fn plan_multi_repair(inst: &CodeInstance, failed: &[usize]) -> Result<RepairPlan, RepairError> {
    let p = inst.params();
    let lost = validate(p, failed)?;
    if let Some(&j) = lost.iter().find(|&&j| j >= p.k) {
        return Err(RepairError::NotSystematic(j));
    }
    systematic_plan(inst, &lost, &[])
}

/// Any failure set of at most `r` nodes. Systematic members are planned as
/// above against the surviving parities; lost parities are re-encoded.
pub fn plan_repair(inst: &CodeInstance, failed: &[usize]) -> Result<RepairPlan, RepairError> {
    let p = *inst.params();
    let all = validate(&p, failed)?;
    let lost: Vec<usize> = all.iter().copied().filter(|&j| j < p.k).collect();
    let dead: Vec<usize> = all.iter().filter(|&&j| j >= p.k).map(|j| j - p.k).collect();
    if dead.is_empty() {
        return if lost.len() == 1 {
            plan_single_repair(inst, lost[0])
        } else {
            plan_multi_repair(inst, &lost)
        };
    }
    if lost.is_empty() {
        return Ok(decode_plan(&p, &all));
    }
    let mut plan = systematic_plan(inst, &lost, &dead)?;
    if plan.method == RepairMethod::FullDecode {
        return Ok(decode_plan(&p, &all));
    }
    let mut reads: BTreeMap<usize, BTreeSet<usize>> =
        plan.reads.iter().map(|(&j, r)| (j, r.iter().copied().collect())).collect();
    for j in (0..p.k).filter(|j| !lost.contains(j)) {
        for i in 0..p.alpha {
            add_read(&mut reads, j, i);
        }
    }
    plan.failed = all;
    plan.reads = finish_reads(reads);
    plan.reencode = dead.iter().map(|l| p.k + l).collect();
    if plan.symbols_read() > p.message_symbols() {
        return Ok(decode_plan(&p, &plan.failed));
    }
    Ok(plan)
}

fn validate(p: &CodeParams, failed: &[usize]) -> Result<Vec<usize>, RepairError> {
    if failed.is_empty() {
        return Err(RepairError::NoFailures);
    }
    let mut seen = BTreeSet::new();
    for &j in failed {
        if j >= p.n {
            return Err(RepairError::UnknownNode(j));
        }
        if !seen.insert(j) {
            return Err(RepairError::DuplicateNode(j));
        }
    }
    if failed.len() > p.r {
        return Err(RepairError::TooManyFailures { failed: failed.len(), r: p.r });
    }
    Ok(seen.into_iter().collect())
}

/// Reads every symbol of the `k` lowest-index surviving nodes.
fn decode_plan(p: &CodeParams, failed: &[usize]) -> RepairPlan {
    let helpers: Vec<usize> = (0..p.n).filter(|j| !failed.contains(j)).take(p.k).collect();
    RepairPlan {
        failed: failed.to_vec(),
        method: RepairMethod::FullDecode,
        reads: helpers.into_iter().map(|j| (j, (0..p.alpha).collect())).collect(),
        equations: vec![],
        first_phase: 0,
        solved: failed.iter().copied().filter(|&j| j < p.k).collect(),
        reencode: failed.iter().copied().filter(|&j| j >= p.k).collect(),
    }
}

/// Row of parity equation `(l, i)` restricted to the symbols of `lost`.
fn unknown_row(inst: &CodeInstance, lost: &[usize], l: usize, i: usize) -> Vec<Element> {
    let alpha = inst.params().alpha;
    let mut row = vec![0; lost.len() * alpha];
    for (s, c) in inst.equation(l, i) {
        if let Some(b) = lost.iter().position(|&y| y == s.node) {
            row[b * alpha + s.row] ^= c;
        }
    }
    row
}

fn systematic_plan(inst: &CodeInstance, lost: &[usize], dead: &[usize]) -> Result<RepairPlan, RepairError> {
    let p = *inst.params();
    let arrays = inst.arrays();
    let alive: Vec<usize> = (0..p.r).filter(|l| !dead.contains(l)).collect();
    let unknowns = lost.len() * p.alpha;

    let rows: Vec<Vec<Element>> = (0..p.r)
        .flat_map(|l| (0..p.alpha).map(move |i| (l, i)))
        .map(|(l, i)| if dead.contains(&l) { Vec::new() } else { unknown_row(inst, lost, l, i) })
        .collect();
    let row = |l: usize, i: usize| rows[l * p.alpha + i].as_slice();
    let mut sel = Selection::new(inst, unknowns);

    // Chosen rows of every failed node, from every surviving parity,
    // keeping only equations that add information.
    let union: BTreeSet<usize> = lost.iter().flat_map(|&y| arrays.chosen_rows(y).iter().copied()).collect();
    for &y in lost {
        for &i in arrays.chosen_rows(y) {
            for &l in &alive {
                if !sel.is_taken(p.alpha, (l, i)) && sel.basis.would_extend(row(l, i)) {
                    sel.take(arrays, lost, (l, i), row(l, i));
                }
            }
        }
    }

    // Greedy coverage from the remaining rows.
    while sel.covered.iter().any(|c| !c) {
        let mut best: Option<((usize, usize), usize)> = None;
        for i in (0..p.alpha).filter(|i| !union.contains(i)) {
            for &l in &alive {
                if sel.is_taken(p.alpha, (l, i)) {
                    continue;
                }
                let gain = row(l, i).iter().zip(&sel.covered).filter(|(c, done)| **c != 0 && !**done).count();
                if gain > 0 && best.is_none_or(|b| gain > b.1) {
                    best = Some(((l, i), gain));
                }
            }
        }
        let Some(((l, i), _)) = best else { break };
        sel.take(arrays, lost, (l, i), row(l, i));
    }

    // Top up the rank with the equation that adds the fewest new reads,
    // earliest (row, parity) first on ties.
    let mut spanned = vec![false; p.r * p.alpha];
    while !sel.basis.is_full() {
        let mut order: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..p.alpha {
            for &l in &alive {
                if !sel.is_taken(p.alpha, (l, i)) && !spanned[l * p.alpha + i] {
                    order.push((sel.new_reads(arrays, lost, (l, i)), i, l));
                }
            }
        }
        order.sort_unstable();
        let mut pick = None;
        for (_, i, l) in order {
            if sel.basis.would_extend(row(l, i)) {
                pick = Some((l, i));
                break;
            }
            // Once in the span, always in the span.
            spanned[l * p.alpha + i] = true;
        }
        let Some((l, i)) = pick else { break };
        sel.take(arrays, lost, (l, i), row(l, i));
    }
    if !sel.basis.is_full() {
        return Err(RepairError::Unsolvable { rank: sel.basis.rank(), unknowns });
    }
    let selected = sel.equations;

    let reads = equation_reads(arrays, lost, &selected);
    let plan = RepairPlan {
        failed: lost.to_vec(),
        method: RepairMethod::MultiNode,
        reads: finish_reads(reads),
        equations: selected,
        first_phase: 0,
        solved: lost.to_vec(),
        reencode: vec![],
    };
    if plan.symbols_read() > p.message_symbols() {
        return Ok(decode_plan(&p, lost));
    }
    Ok(plan)
}

/// Where a plan fetches its symbols from.
pub trait SymbolSource {
    fn symbol(&self, node: usize, row: usize) -> Option<Element>;
}

impl SymbolSource for Stripe {
    fn symbol(&self, node: usize, row: usize) -> Option<Element> {
        self.nodes.get(node).and_then(|n| n.get(row)).copied()
    }
}

impl SymbolSource for BTreeMap<usize, Vec<Element>> {
    fn symbol(&self, node: usize, row: usize) -> Option<Element> {
        self.get(&node).and_then(|n| n.get(row)).copied()
    }
}

/// Runs `plan`, fetching exactly the symbols it lists, and returns the
/// restored content of every failed node.
pub fn execute_repair(
    inst: &CodeInstance,
    plan: &RepairPlan,
    source: &impl SymbolSource,
) -> Result<BTreeMap<usize, Vec<Element>>, RepairError> {
    let p = *inst.params();
    let field = inst.field();
    let mut fetched: HashMap<(usize, usize), Element> = HashMap::new();
    for (&node, rows) in &plan.reads {
        for &row in rows {
            let v = source.symbol(node, row).ok_or(RepairError::MissingSymbol { node, row })?;
            fetched.insert((node, row), v);
        }
    }
    let known = |node: usize, row: usize| {
        fetched.get(&(node, row)).copied().ok_or(RepairError::MissingSymbol { node, row })
    };

    let mut restored: BTreeMap<usize, Vec<Element>> = BTreeMap::new();
    match plan.method {
        RepairMethod::SingleNode => {
            let j = plan.solved[0];
            let mut solved: Vec<Option<Element>> = vec![None; p.alpha];
            for &(l, i) in &plan.equations {
                let mut acc = known(p.k + l, i)?;
                let mut unknown = None;
                for (s, c) in inst.equation(l, i) {
                    if s.node == j {
                        match solved[s.row] {
                            Some(v) => acc ^= field.mul(c, v),
                            None if unknown.is_none() => unknown = Some((s.row, c)),
                            None => return Err(RepairError::SingularRepair),
                        }
                    } else {
                        acc ^= field.mul(c, known(s.node, s.row)?);
                    }
                }
                match unknown {
                    Some((row, c)) => solved[row] = Some(field.div(acc, c).map_err(CodecError::from)?),
                    None if acc != 0 => return Err(RepairError::InconsistentData),
                    None => {}
                }
            }
            let node = solved.into_iter().collect::<Option<Vec<_>>>().ok_or(RepairError::SingularRepair)?;
            restored.insert(j, node);
        }
        RepairMethod::MultiNode => {
            let lost = &plan.solved;
            let mut rows = Vec::with_capacity(plan.equations.len());
            let mut rhs = Vec::with_capacity(plan.equations.len());
            for &(l, i) in &plan.equations {
                let mut acc = known(p.k + l, i)?;
                for (s, c) in inst.equation(l, i) {
                    if !lost.contains(&s.node) {
                        acc ^= field.mul(c, known(s.node, s.row)?);
                    }
                }
                rows.push(unknown_row(inst, lost, l, i));
                rhs.push(acc);
            }
            let m = Matrix::from_rows(&rows).map_err(CodecError::from)?;
            let x = solve_linear_system(field, &m, &rhs).map_err(|e| match e {
                GaloisError::Inconsistent => RepairError::InconsistentData,
                _ => RepairError::SingularRepair,
            })?;
            for (b, &y) in lost.iter().enumerate() {
                restored.insert(y, x[b * p.alpha..(b + 1) * p.alpha].to_vec());
            }
        }
        RepairMethod::FullDecode => {
            let available: BTreeMap<usize, Vec<Element>> = plan
                .reads
                .iter()
                .map(|(&j, rows)| Ok((j, rows.iter().map(|&i| known(j, i)).collect::<Result<Vec<_>, _>>()?)))
                .collect::<Result<_, RepairError>>()?;
            let data = decode(inst, &available)?;
            for &j in &plan.solved {
                restored.insert(j, data[j].clone());
            }
        }
    }

    if !plan.reencode.is_empty() {
        let data: Vec<Vec<Element>> = (0..p.k)
            .map(|j| match restored.get(&j) {
                Some(v) => Ok(v.clone()),
                None => (0..p.alpha).map(|i| known(j, i)).collect(),
            })
            .collect::<Result<_, RepairError>>()?;
        for &j in &plan.reencode {
            let node = (0..p.alpha).map(|i| parity_symbol(inst, j - p.k, i, |s| data[s.node][s.row])).collect();
            restored.insert(j, node);
        }
    }
    Ok(restored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// One systematic failure.
    Single,
    /// Several systematic failures.
    Multi,
}

/// Lower and upper limits on `gamma` for the plan's failure count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepairBounds {
    pub kind: BoundKind,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairStats {
    pub symbols_read: usize,
    /// Total symbols read in units of one node (`alpha` symbols).
    pub gamma: f64,
    pub beta_per_helper: BTreeMap<usize, f64>,
    pub helpers_contacted: usize,
    /// Present when every failed node is systematic.
    pub bounds: Option<RepairBounds>,
}

/// Bandwidth accounting and the applicable bound check, done in integers.
pub fn repair_stats(plan: &RepairPlan, params: &CodeParams) -> RepairStats {
    let alpha = params.alpha as f64;
    let s = plan.symbols_read();
    let beta_per_helper: BTreeMap<usize, f64> =
        plan.reads.iter().map(|(&j, rows)| (j, rows.len() as f64 / alpha)).collect();
    let t = plan.failed.len();
    let all_systematic = plan.failed.iter().all(|&j| j < params.k);
    let bounds = all_systematic.then(|| bounds_for(params, t, s));
    RepairStats {
        symbols_read: s,
        gamma: s as f64 / alpha,
        helpers_contacted: plan.reads.len(),
        beta_per_helper,
        bounds,
    }
}

/// Bound check for `t` systematic failures repaired with `symbols` reads.
pub fn bounds_for(params: &CodeParams, t: usize, symbols: usize) -> RepairBounds {
    let (n, k, r, a, p) = (params.n, params.k, params.r, params.alpha, params.portion());
    let groups = params.group_count();
    if t == 1 {
        let extra = r * (r - 1) * p * groups;
        let within = symbols * r >= (n - 1) * a && symbols * r <= (n - 1) * a + extra;
        RepairBounds {
            kind: BoundKind::Single,
            lower: (n - 1) as f64 / r as f64,
            upper: (n - 1) as f64 / r as f64 + ((r - 1) * p * groups) as f64 / a as f64,
            within,
        }
    } else {
        let floor = t * p * (n - t);
        RepairBounds {
            kind: BoundKind::Multi,
            lower: floor as f64 / a as f64,
            upper: k as f64,
            within: symbols >= floor && symbols <= k * a,
        }
    }
}

/// Single-failure plans for every systematic node.
pub fn single_failure_fleet(inst: &CodeInstance) -> Result<Vec<RepairPlan>, RepairError> {
    (0..inst.params().k).map(|j| plan_single_repair(inst, j)).collect()
}

/// Mean symbols read over a set of plans, in node units.
pub fn average_gamma(plans: &[RepairPlan], params: &CodeParams) -> f64 {
    let total: usize = plans.iter().map(RepairPlan::symbols_read).sum();
    total as f64 / (plans.len() as f64 * params.alpha as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{assign_coefficients, encode};
    use crate::construction::build_index_arrays;
    use crate::galois::FieldSpec;

    fn instance(n: usize, k: usize, alpha: usize, field: FieldSpec, seed: u64) -> CodeInstance {
        let p = CodeParams::new(n, k, alpha, field).unwrap();
        assign_coefficients(&build_index_arrays(&p).unwrap(), seed, 64).unwrap()
    }

    #[test]
    fn alpha6_single_counts() {
        let inst = instance(9, 6, 6, FieldSpec::GF16, 1);
        let counts: Vec<usize> = (0..6).map(|j| plan_single_repair(&inst, j).unwrap().symbols_read()).collect();
        assert_eq!(counts, vec![18, 20, 18, 18, 20, 18]);
        let d1 = plan_single_repair(&inst, 0).unwrap();
        assert_eq!(d1.reads.len(), 8);
        assert_eq!(d1.first_phase, 2);
    }

    #[test]
    fn alpha9_double_failures() {
        let inst = instance(9, 6, 9, FieldSpec::GF32, 1);
        let mut counts = BTreeMap::new();
        for a in 0..6 {
            for b in a + 1..6 {
                let plan = plan_multi_repair(&inst, &[a, b]).unwrap();
                assert_eq!(plan.method, RepairMethod::MultiNode);
                *counts.entry(plan.symbols_read()).or_insert(0) += 1;
            }
        }
        assert_eq!(counts, BTreeMap::from([(42, 6), (46, 9)]));
        let plan = plan_multi_repair(&inst, &[0, 3]).unwrap();
        assert!(plan.equations.ends_with(&[(0, 4), (1, 4), (0, 5)]));
    }

    #[test]
    fn multi_with_one_node_matches_single() {
        for (n, k, alpha) in [(9, 6, 6), (9, 6, 9), (9, 6, 4), (14, 10, 2)] {
            let inst = instance(n, k, alpha, FieldSpec::GF256, 3);
            for j in 0..k {
                let single = plan_single_repair(&inst, j).unwrap();
                let multi = plan_multi_repair(&inst, &[j]).unwrap();
                assert_eq!(single.symbols_read(), multi.symbols_read(), "({n},{k}) alpha {alpha} node {j}");
            }
        }
    }

    #[test]
    fn rejects_bad_failure_sets() {
        let inst = instance(6, 4, 4, FieldSpec::GF16, 1);
        assert_eq!(plan_single_repair(&inst, 4), Err(RepairError::NotSystematic(4)));
        assert_eq!(plan_single_repair(&inst, 9), Err(RepairError::UnknownNode(9)));
        assert_eq!(plan_repair(&inst, &[0, 1, 2]), Err(RepairError::TooManyFailures { failed: 3, r: 2 }));
        assert_eq!(plan_repair(&inst, &[1, 1]), Err(RepairError::DuplicateNode(1)));
        assert_eq!(plan_repair(&inst, &[]), Err(RepairError::NoFailures));
        assert_eq!(plan_multi_repair(&inst, &[0, 5]), Err(RepairError::NotSystematic(5)));
    }

    #[test]
    fn missing_read_is_reported() {
        let inst = instance(9, 6, 6, FieldSpec::GF16, 1);
        let data: Vec<Vec<Element>> = (0..6).map(|j| (0..6).map(|i| ((i * 7 + j * 3) % 16) as Element).collect()).collect();
        let stripe = encode(&inst, &data).unwrap();
        let mut plan = plan_single_repair(&inst, 0).unwrap();
        assert_eq!(execute_repair(&inst, &plan, &stripe).unwrap()[&0], data[0]);
        let (&helper, rows) = plan.reads.iter().next().unwrap();
        let row = rows[0];
        plan.reads.get_mut(&helper).unwrap().remove(0);
        assert_eq!(
            execute_repair(&inst, &plan, &stripe),
            Err(RepairError::MissingSymbol { node: helper, row })
        );
    }

    #[test]
    fn alpha_one_reads_k_symbols() {
        let inst = instance(9, 6, 1, FieldSpec::GF16, 1);
        for j in 0..6 {
            let plan = plan_single_repair(&inst, j).unwrap();
            assert_eq!(plan.symbols_read(), 6);
            assert_eq!(repair_stats(&plan, inst.params()).gamma, 6.0);
        }
    }

    #[test]
    fn parity_and_mixed_failures() {
        let inst = instance(9, 6, 6, FieldSpec::GF16, 1);
        let data: Vec<Vec<Element>> = (0..6).map(|j| (0..6).map(|i| ((i * 5 + j * 11 + 1) % 16) as Element).collect()).collect();
        let stripe = encode(&inst, &data).unwrap();
        for failed in [vec![6], vec![7, 8], vec![0, 8], vec![1, 4, 6]] {
            let plan = plan_repair(&inst, &failed).unwrap();
            let out = execute_repair(&inst, &plan, &stripe).unwrap();
            for &j in &failed {
                assert_eq!(out[&j], stripe.nodes[j], "failed {failed:?}");
                assert!(!plan.reads.contains_key(&j));
            }
            assert!(plan.symbols_read() <= 36);
        }
    }

    #[test]
    fn stats_and_bounds() {
        let inst = instance(9, 6, 9, FieldSpec::GF32, 1);
        let plan = plan_single_repair(&inst, 2).unwrap();
        let st = repair_stats(&plan, inst.params());
        assert_eq!(st.symbols_read, 24);
        assert!((st.gamma - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(st.helpers_contacted, 8);
        assert!(st.beta_per_helper.values().all(|&b| (b - 1.0 / 3.0).abs() < 1e-12));
        let b = st.bounds.unwrap();
        assert!(b.within && b.kind == BoundKind::Single);
        assert!(!bounds_for(inst.params(), 2, 20).within);
        assert!(bounds_for(inst.params(), 2, 42).within);
    }

    #[test]
    fn plan_json_is_labelled() {
        let inst = instance(9, 6, 6, FieldSpec::GF16, 1);
        let v = plan_single_repair(&inst, 0).unwrap().to_json(inst.params());
        assert_eq!(v["failed"][0], "d1");
        assert_eq!(v["symbols_read"], 18);
        assert_eq!(v["equations"][0]["parity"], "p1");
        assert!(v["reads"]["p1"].is_array());
    }
}
