//! Disk I/O accounting for repair plans and a hill climb toward layouts with
//! fewer random reads at the same repair bandwidth.

use serde::Serialize;
use thiserror::Error;

use crate::codec::{assign_coefficients, CodeInstance, CodecError, DEFAULT_MAX_ATTEMPTS};
use crate::construction::{CodeParams, ConstructionError, IndexArraySet};
use crate::repair::{plan_single_repair, plan_single_repair_structural, RepairError, RepairPlan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IoError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
}

pub const DEFAULT_IO_BYTES: u64 = 512 * 1024;
pub const DEFAULT_NODE_BYTES: u64 = 9 * 1024 * 1024;

/// Node capacity and I/O unit. A node of `alpha` symbols is stored as
/// `alpha` equal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DiskModel {
    pub node_bytes: u64,
    pub io_bytes: u64,
}

impl Default for DiskModel {
    fn default() -> Self {
        DiskModel { node_bytes: DEFAULT_NODE_BYTES, io_bytes: DEFAULT_IO_BYTES }
    }
}

impl DiskModel {
    pub fn new(node_bytes: u64, io_bytes: u64) -> Result<Self, IoError> {
        if node_bytes == 0 || io_bytes == 0 {
            return Err(IoError::PreconditionViolated("node and I/O sizes must be positive".into()));
        }
        Ok(DiskModel { node_bytes, io_bytes })
    }

    /// I/Os per block read; at least one even for blocks smaller than an I/O.
    pub fn ios_per_block(&self, alpha: usize) -> u64 {
        self.node_bytes.div_ceil(alpha as u64 * self.io_bytes).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IoStats {
    pub random_reads: u64,
    pub sequential_reads: u64,
}

impl IoStats {
    pub fn total(&self) -> u64 {
        self.random_reads + self.sequential_reads
    }

    pub fn ratio(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.random_reads as f64 / self.total() as f64
        }
    }
}

/// Maximal runs of consecutive indices in a sorted list.
pub fn runs(sorted: &[usize]) -> usize {
    sorted.windows(2).filter(|w| w[1] != w[0] + 1).count() + usize::from(!sorted.is_empty())
}

/// Each helper's blocks are read in ascending order; the first I/O of every
/// run of consecutive blocks is random and all others are sequential.
pub fn count_reads(plan: &RepairPlan, model: &DiskModel, params: &CodeParams) -> IoStats {
    let per_block = model.ios_per_block(params.alpha);
    let mut st = IoStats::default();
    for rows in plan.reads.values() {
        let seeks = runs(rows) as u64;
        let ios = rows.len() as u64 * per_block;
        st.random_reads += seeks;
        st.sequential_reads += ios - seeks;
    }
    st
}

/// Totals and per-node averages over single failures of every systematic node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FleetIo {
    pub nodes: usize,
    pub total_symbols: usize,
    pub total_random: u64,
    pub total_sequential: u64,
    pub avg_gamma: f64,
    pub avg_random: f64,
    pub avg_sequential: f64,
    pub ratio: f64,
}

impl FleetIo {
    fn from_plans(plans: &[RepairPlan], model: &DiskModel, params: &CodeParams) -> Self {
        let mut io = IoStats::default();
        let mut symbols = 0;
        for plan in plans {
            let st = count_reads(plan, model, params);
            io.random_reads += st.random_reads;
            io.sequential_reads += st.sequential_reads;
            symbols += plan.symbols_read();
        }
        let n = plans.len() as f64;
        FleetIo {
            nodes: plans.len(),
            total_symbols: symbols,
            total_random: io.random_reads,
            total_sequential: io.sequential_reads,
            avg_gamma: symbols as f64 / (n * params.alpha as f64),
            avg_random: io.random_reads as f64 / n,
            avg_sequential: io.sequential_reads as f64 / n,
            ratio: io.ratio(),
        }
    }
}

pub fn fleet_io(inst: &CodeInstance, model: &DiskModel) -> Result<FleetIo, IoError> {
    let plans = (0..inst.params().k)
        .map(|j| plan_single_repair(inst, j))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FleetIo::from_plans(&plans, model, inst.params()))
}

/// Fleet statistics from the arrays alone; `None` if some node needs the
/// coefficient-dependent fallback.
pub fn fleet_io_structural(arrays: &IndexArraySet, model: &DiskModel) -> Option<FleetIo> {
    let plans = (0..arrays.params().k)
        .map(|j| plan_single_repair_structural(arrays, j))
        .collect::<Option<Vec<_>>>()?;
    Some(FleetIo::from_plans(&plans, model, arrays.params()))
}

/// Every node of the first group repairs with one seek per helper.
pub fn verify_proposition4(inst: &CodeInstance, model: &DiskModel) -> Result<bool, IoError> {
    let p = inst.params();
    if !p.is_access_optimal() {
        return Err(IoError::PreconditionViolated(format!(
            "alpha = {} is not r^ceil(k/r)",
            p.alpha
        )));
    }
    for &j in &inst.arrays().groups().groups[0] {
        let plan = plan_single_repair(inst, j)?;
        if count_reads(&plan, model, p).random_reads != (p.n - 1) as u64 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub instance: CodeInstance,
    pub before: FleetIo,
    pub after: FleetIo,
    /// Accepted improving moves.
    pub moves: usize,
}

/// Neighbourhoods larger than this switch from full enumeration to swaps.
const FULL_NEIGHBOURHOOD: usize = 5_000;

/// Steepest-ascent hill climb over per-group ordered partitions. A neighbour
/// re-lays out one group; it must keep the total symbols read and strictly
/// lower the fleet's random reads. The best such neighbour gets fresh
/// coefficients and must pass the MDS check before it is accepted. Only codes
/// with `r | alpha` are moved; others are returned unchanged.
pub fn optimize_io(inst: &CodeInstance, model: &DiskModel, budget: usize) -> Result<OptimizeOutcome, IoError> {
    let p = *inst.params();
    let before = fleet_io(inst, model)?;
    let mut out = OptimizeOutcome { instance: inst.clone(), before, after: before, moves: 0 };
    if budget == 0 || p.alpha % p.r != 0 || p.r < 2 {
        return Ok(out);
    }
    let mut layouts = current_layouts(inst.arrays());
    let mut best_random = before.total_random;
    while out.moves < budget {
        let mut candidates: Vec<(u64, usize, Vec<Vec<Vec<usize>>>)> = Vec::new();
        for g in 0..layouts.len() {
            for blocks in neighbours(&layouts[g], p.alpha, p.r) {
                let mut trial = layouts.clone();
                trial[g] = blocks;
                let Ok(arrays) = IndexArraySet::from_group_layouts(&p, &trial) else { continue };
                let Some(f) = fleet_io_structural(&arrays, model) else { continue };
                if f.total_symbols == before.total_symbols && f.total_random < best_random {
                    candidates.push((f.total_random, candidates.len(), trial));
                }
            }
        }
        candidates.sort_by_key(|c| (c.0, c.1));
        let mut accepted = false;
        for (random, _, trial) in candidates {
            let arrays = IndexArraySet::from_group_layouts(&p, &trial)?;
            match assign_coefficients(&arrays, inst.seed(), DEFAULT_MAX_ATTEMPTS) {
                Ok(next) => {
                    layouts = trial;
                    best_random = random;
                    out.after = fleet_io(&next, model)?;
                    out.instance = next;
                    out.moves += 1;
                    accepted = true;
                    break;
                }
                Err(CodecError::NoMdsCoefficients { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(out)
}

/// Per group, its blocks ordered by member: member `m` takes block `m`, the
/// unchosen blocks follow in partition order.
fn current_layouts(arrays: &IndexArraySet) -> Vec<Vec<Vec<usize>>> {
    arrays
        .groups()
        .groups
        .iter()
        .map(|members| {
            let subsets = &arrays.partition(members[0]).expect("laid out").subsets;
            let mut ordered: Vec<Vec<usize>> = members.iter().map(|&j| arrays.chosen_rows(j).to_vec()).collect();
            for s in subsets {
                if !ordered.contains(s) {
                    ordered.push(s.clone());
                }
            }
            ordered
        })
        .collect()
}

fn neighbours(current: &[Vec<usize>], alpha: usize, r: usize) -> Vec<Vec<Vec<usize>>> {
    let size = alpha / r;
    let partitions = all_partitions(alpha, size, FULL_NEIGHBOURHOOD);
    let orders = (1..=r).product::<usize>();
    if let Some(parts) = partitions.filter(|ps| ps.len() * orders <= FULL_NEIGHBOURHOOD) {
        let perms = permutations(r);
        let mut out = Vec::with_capacity(parts.len() * perms.len());
        for part in &parts {
            for perm in &perms {
                let ordered: Vec<Vec<usize>> = perm.iter().map(|&b| part[b].clone()).collect();
                if ordered != current {
                    out.push(ordered);
                }
            }
        }
        return out;
    }
    let mut out = Vec::new();
    for a in 0..current.len() {
        for b in a + 1..current.len() {
            let mut swapped = current.to_vec();
            swapped.swap(a, b);
            out.push(swapped);
            for x in 0..current[a].len() {
                for y in 0..current[b].len() {
                    let mut moved = current.to_vec();
                    let (u, v) = (moved[a][x], moved[b][y]);
                    moved[a][x] = v;
                    moved[b][y] = u;
                    moved[a].sort_unstable();
                    moved[b].sort_unstable();
                    out.push(moved);
                }
            }
        }
    }
    out
}

/// All partitions of `0..alpha` into blocks of `size`, canonical order, or
/// `None` if there are more than `cap`.
fn all_partitions(alpha: usize, size: usize, cap: usize) -> Option<Vec<Vec<Vec<usize>>>> {
    fn rec(rest: &[usize], size: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>, cap: usize) -> bool {
        if rest.is_empty() {
            out.push(cur.clone());
            return out.len() <= cap;
        }
        let first = rest[0];
        let tail = &rest[1..];
        for combo in crate::codec::combinations(tail.len(), size - 1) {
            let mut block = vec![first];
            block.extend(combo.iter().map(|&i| tail[i]));
            let remaining: Vec<usize> =
                tail.iter().enumerate().filter(|(i, _)| !combo.contains(i)).map(|(_, &v)| v).collect();
            cur.push(block);
            let ok = rec(&remaining, size, cur, out, cap);
            cur.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    let all: Vec<usize> = (0..alpha).collect();
    let mut out = Vec::new();
    rec(&all, size, &mut Vec::new(), &mut out, cap).then_some(out)
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..r).collect();
    fn heap(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(cur.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, cur, out);
            let j = if k % 2 == 0 { i } else { 0 };
            cur.swap(j, k - 1);
        }
    }
    heap(r, &mut cur, &mut out);
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::build_index_arrays;
    use crate::galois::FieldSpec;

    fn params(n: usize, k: usize, alpha: usize) -> CodeParams {
        CodeParams::new(n, k, alpha, FieldSpec::GF16).unwrap()
    }

    #[test]
    fn run_counting_is_not_cyclic() {
        assert_eq!(runs(&[]), 0);
        assert_eq!(runs(&[0, 5]), 2);
        assert_eq!(runs(&[0, 1, 2, 4, 5]), 2);
    }

    #[test]
    fn single_block_helper() {
        let m = DiskModel::default();
        assert_eq!(m.ios_per_block(6), 3);
        assert_eq!(m.ios_per_block(9), 2);
        assert_eq!(m.ios_per_block(1), 18);
        assert_eq!(DiskModel::new(1024, 4096).unwrap().ios_per_block(4), 1);
        assert!(DiskModel::new(0, 1).is_err());
    }

    #[test]
    fn rs_walkthrough() {
        let set = build_index_arrays(&params(9, 6, 1)).unwrap();
        let plan = plan_single_repair_structural(&set, 0).unwrap();
        let st = count_reads(&plan, &DiskModel::default(), set.params());
        assert_eq!((st.random_reads, st.sequential_reads), (6, 102));
    }

    #[test]
    fn alpha6_fleet_averages() {
        let set = build_index_arrays(&params(9, 6, 6)).unwrap();
        let f = fleet_io_structural(&set, &DiskModel::default()).unwrap();
        assert_eq!((f.total_symbols, f.total_random, f.total_sequential), (112, 80, 256));
        assert!((f.ratio - 80.0 / 336.0).abs() < 1e-12);
    }

    #[test]
    fn optimum_layout_is_expressible() {
        let p = params(9, 6, 6);
        let layouts = vec![
            vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            vec![vec![0, 4], vec![1, 5], vec![2, 3]],
        ];
        let set = IndexArraySet::from_group_layouts(&p, &layouts).unwrap();
        let f = fleet_io_structural(&set, &DiskModel::default()).unwrap();
        assert_eq!((f.total_symbols, f.total_random, f.total_sequential), (112, 68, 268));
    }

    #[test]
    fn layouts_round_trip_through_current() {
        let set = build_index_arrays(&params(9, 6, 6)).unwrap();
        let again = IndexArraySet::from_group_layouts(set.params(), &current_layouts(&set)).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn partition_enumeration() {
        assert_eq!(all_partitions(6, 2, 100).unwrap().len(), 15);
        assert_eq!(all_partitions(9, 3, 1000).unwrap().len(), 280);
        assert!(all_partitions(12, 3, 1000).is_none());
        assert_eq!(permutations(3).len(), 6);
    }
}
