//! Grouping leaf activities into logical processes.
//!
//! The partitioner splits the leaves of an activity model into `k`
//! non-empty groups while minimizing the number of arcs that cross group
//! boundaries; every crossing arc later becomes message traffic between
//! simulation processes, so fewer crossings means less synchronization.
//!
//! Up to [`EXACT_LEAF_LIMIT`] leaves the search is exhaustive (with
//! branch-and-bound pruning), so the result is provably minimal. Above
//! that a greedy seeding plus move/swap local search is used. Either way
//! the result is deterministic and independent of the order in which
//! leaves were declared: leaves are always processed in lexicographic
//! order and ties between equal-cut partitions are broken by comparing
//! canonical forms (blocks sorted by smallest member).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::ActivityModel;

/// Largest leaf count for which the exhaustive search runs.
pub const EXACT_LEAF_LIMIT: usize = 12;

/// A partition of the model's leaves, in canonical form: every block is
/// sorted, blocks are ordered by their smallest member, and each block is
/// named after that smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<String>>,
}

impl Partition {
    pub fn lp_id(&self, block: usize) -> &str {
        &self.blocks[block][0]
    }

    pub fn lp_ids(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b[0].as_str()).collect()
    }

    /// Which block a leaf belongs to.
    pub fn block_of(&self, leaf: &str) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.iter().any(|l| l == leaf))
    }

    fn canonicalize(mut blocks: Vec<Vec<String>>) -> Partition {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        Partition { blocks }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "lp {}: {}", b[0], b.join(","))?;
        }
        Ok(())
    }
}

/// Number of arcs whose endpoints land in different blocks.
pub fn cut_weight(model: &ActivityModel, partition: &Partition) -> u32 {
    let mut assign = BTreeMap::new();
    for (i, block) in partition.blocks.iter().enumerate() {
        for leaf in block {
            assign.insert(leaf.as_str(), i);
        }
    }
    model
        .arcs
        .iter()
        .filter(|arc| {
            match (assign.get(arc.from.as_str()), assign.get(arc.to.as_str())) {
                (Some(a), Some(b)) => a != b,
                // Arcs touching leaves outside the partition are not
                // counted; validation reports such leaves separately.
                _ => false,
            }
        })
        .count() as u32
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("cannot split {leaves} leaves into {k} non-empty groups")]
    Infeasible { leaves: usize, k: usize },
    #[error("pin references unknown leaf {0:?}")]
    UnknownPin(String),
    #[error("pin for {leaf:?} targets block {block}, but k = {k}")]
    PinOutOfRange { leaf: String, block: usize, k: usize },
    #[error("pins leave too few free leaves to populate every block")]
    PinsContradictory,
}

/// Searches for a minimum-cut partition of the model's leaves into
/// exactly `k` non-empty blocks. `pins` forces individual leaves into
/// fixed block slots (0-based); when pins are given the block numbering
/// of the result preserves those slots, otherwise numbering is canonical.
pub fn partition(
    model: &ActivityModel,
    k: usize,
    pins: &BTreeMap<String, usize>,
) -> Result<Partition, PartitionError> {
    let leaves: Vec<String> = model.leaves().into_iter().map(String::from).collect();
    if k == 0 || k > leaves.len() {
        return Err(PartitionError::Infeasible {
            leaves: leaves.len(),
            k,
        });
    }
    for (leaf, block) in pins {
        if !leaves.iter().any(|l| l == leaf) {
            return Err(PartitionError::UnknownPin(leaf.clone()));
        }
        if *block >= k {
            return Err(PartitionError::PinOutOfRange {
                leaf: leaf.clone(),
                block: *block,
                k,
            });
        }
    }
    let pinned_blocks: std::collections::BTreeSet<usize> = pins.values().copied().collect();
    let free_leaves = leaves.len() - pins.len();
    if k - pinned_blocks.len() > free_leaves {
        return Err(PartitionError::PinsContradictory);
    }

    let weights = adjacency(model, &leaves);
    let search = SearchCtx {
        leaves: &leaves,
        weights: &weights,
        k,
        pins,
    };
    let assignment = if leaves.len() <= EXACT_LEAF_LIMIT {
        search.exhaustive()
    } else {
        search.greedy_with_local_search()
    };
    let mut blocks: Vec<Vec<String>> = vec![Vec::new(); k];
    for (leaf, block) in leaves.iter().zip(&assignment) {
        blocks[*block].push(leaf.clone());
    }
    if pins.is_empty() {
        Ok(Partition::canonicalize(blocks))
    } else {
        // Keep pinned slots where the caller put them; only sort members.
        for b in &mut blocks {
            b.sort_unstable();
        }
        Ok(Partition { blocks })
    }
}

/// Symmetric arc-count matrix over the (sorted) leaf list.
fn adjacency(model: &ActivityModel, leaves: &[String]) -> Vec<Vec<u32>> {
    let index: BTreeMap<&str, usize> = leaves
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let n = leaves.len();
    let mut w = vec![vec![0u32; n]; n];
    for arc in &model.arcs {
        let (Some(&a), Some(&b)) = (index.get(arc.from.as_str()), index.get(arc.to.as_str()))
        else {
            continue;
        };
        w[a][b] += 1;
        w[b][a] += 1;
    }
    w
}

struct SearchCtx<'a> {
    leaves: &'a [String],
    weights: &'a [Vec<u32>],
    k: usize,
    pins: &'a BTreeMap<String, usize>,
}

impl<'a> SearchCtx<'a> {
    fn pin_of(&self, leaf_idx: usize) -> Option<usize> {
        self.pins.get(&self.leaves[leaf_idx]).copied()
    }

    fn canonical_key(&self, assign: &[usize]) -> Vec<Vec<&'a str>> {
        let mut blocks: Vec<Vec<&str>> = vec![Vec::new(); self.k];
        for (i, b) in assign.iter().enumerate() {
            blocks[*b].push(self.leaves[i].as_str());
        }
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        blocks
    }

    /// Depth-first enumeration of every assignment into exactly k blocks,
    /// pruned on partial cut. Symmetry among blocks that no pin mentions
    /// is removed by only allowing a free leaf into at most one so-far-
    /// unused free block (the lowest-numbered one).
    fn exhaustive(&self) -> Vec<usize> {
        let n = self.leaves.len();
        let pinned_blocks: Vec<bool> = {
            let mut v = vec![false; self.k];
            for &b in self.pins.values() {
                v[b] = true;
            }
            v
        };
        let mut assign = vec![usize::MAX; n];
        let mut best: Option<(u32, Vec<usize>, Vec<Vec<&str>>)> = None;
        self.descend(0, 0, &mut assign, &pinned_blocks, &mut best);
        best.expect("feasibility checked before search").1
    }

    fn descend(
        &self,
        idx: usize,
        partial_cut: u32,
        assign: &mut Vec<usize>,
        pinned_blocks: &[bool],
        best: &mut Option<(u32, Vec<usize>, Vec<Vec<&'a str>>)>,
    ) {
        if let Some((bound, _, _)) = best {
            if partial_cut > *bound {
                return;
            }
        }
        let n = self.leaves.len();
        if idx == n {
            let mut used = vec![false; self.k];
            for &b in assign.iter() {
                used[b] = true;
            }
            if used.iter().all(|u| *u) {
                let key = self.canonical_key(assign);
                let better = match best {
                    None => true,
                    Some((bound, _, best_key)) => {
                        partial_cut < *bound || (partial_cut == *bound && key < *best_key)
                    }
                };
                if better {
                    *best = Some((partial_cut, assign.clone(), key));
                }
            }
            return;
        }
        // Feasibility: every still-empty block needs one of the remaining
        // leaves.
        let mut used = vec![false; self.k];
        for &b in assign[..idx].iter() {
            used[b] = true;
        }
        let empty = used.iter().filter(|u| !**u).count();
        if empty > n - idx {
            return;
        }

        let choices: Vec<usize> = match self.pin_of(idx) {
            Some(b) => vec![b],
            None => {
                // All blocks already in use or pinned, plus the first
                // unused non-pinned block (using a later one first would
                // only relabel).
                let mut c: Vec<usize> = (0..self.k)
                    .filter(|b| used[*b] || pinned_blocks[*b])
                    .collect();
                if let Some(fresh) = (0..self.k).find(|b| !used[*b] && !pinned_blocks[*b]) {
                    if !c.contains(&fresh) {
                        c.push(fresh);
                    }
                }
                c.sort_unstable();
                c
            }
        };
        for b in choices {
            let mut added = 0;
            for j in 0..idx {
                if assign[j] != b {
                    added += self.weights[idx][j];
                }
            }
            assign[idx] = b;
            self.descend(idx + 1, partial_cut + added, assign, pinned_blocks, best);
            assign[idx] = usize::MAX;
        }
    }

    /// Seeding plus strict-improvement moves and swaps until a fixed
    /// point. Used above the exhaustive limit.
    fn greedy_with_local_search(&self) -> Vec<usize> {
        let n = self.leaves.len();
        let mut assign = vec![usize::MAX; n];
        let mut counts = vec![0usize; self.k];
        for i in 0..n {
            if let Some(b) = self.pin_of(i) {
                assign[i] = b;
                counts[b] += 1;
            }
        }
        // Fill still-empty blocks with the first free leaves.
        for b in 0..self.k {
            if counts[b] == 0 {
                let i = (0..n)
                    .find(|i| assign[*i] == usize::MAX)
                    .expect("feasibility checked");
                assign[i] = b;
                counts[b] += 1;
            }
        }
        // Greedy: each remaining leaf to the block it is most connected
        // to (ties to the lowest block index).
        for i in 0..n {
            if assign[i] != usize::MAX {
                continue;
            }
            let mut link = vec![0u32; self.k];
            for j in 0..n {
                if assign[j] != usize::MAX {
                    link[assign[j]] += self.weights[i][j];
                }
            }
            let best = (0..self.k).max_by_key(|b| link[*b]).unwrap_or(0);
            assign[i] = best;
            counts[best] += 1;
        }
        // Local search: strict-improvement single moves, then swaps.
        loop {
            let mut improved = false;
            for i in 0..n {
                if self.pin_of(i).is_some() || counts[assign[i]] == 1 {
                    continue;
                }
                let mut link = vec![0u32; self.k];
                for j in 0..n {
                    if j != i {
                        link[assign[j]] += self.weights[i][j];
                    }
                }
                let cur = assign[i];
                if let Some(better) = (0..self.k)
                    .filter(|b| *b != cur && link[*b] > link[cur])
                    .max_by_key(|b| link[*b])
                {
                    counts[cur] -= 1;
                    counts[better] += 1;
                    assign[i] = better;
                    improved = true;
                }
            }
            for i in 0..n {
                if self.pin_of(i).is_some() {
                    continue;
                }
                for j in i + 1..n {
                    if self.pin_of(j).is_some() || assign[i] == assign[j] {
                        continue;
                    }
                    let before = self.pair_cost(&assign, i, j);
                    let (bi, bj) = (assign[i], assign[j]);
                    let mut trial = assign.clone();
                    trial[i] = bj;
                    trial[j] = bi;
                    let after = self.pair_cost(&trial, i, j);
                    if after < before {
                        assign = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                return assign;
            }
        }
    }

    /// Cut contribution of arcs incident to leaves i or j.
    fn pair_cost(&self, assign: &[usize], i: usize, j: usize) -> u32 {
        let mut cost = 0;
        for x in [i, j] {
            for y in 0..assign.len() {
                if y != x && assign[x] != assign[y] {
                    cost += self.weights[x][y];
                }
            }
        }
        // The (i,j) arc, if any, was counted twice.
        if assign[i] != assign[j] {
            cost -= self.weights[i][j];
        }
        cost
    }
}

/// A problem found by [`validate_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A model leaf missing from every block.
    UncoveredLeaf(String),
    /// A leaf appearing in more than one block (or twice in one).
    DuplicatedLeaf(String),
    /// A partition member that is not a leaf of the model.
    UnknownLeaf(String),
    /// A block with no members.
    EmptyBlock(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UncoveredLeaf(l) => write!(f, "leaf {l:?} is not assigned to any lp"),
            Violation::DuplicatedLeaf(l) => write!(f, "leaf {l:?} is assigned more than once"),
            Violation::UnknownLeaf(l) => write!(f, "{l:?} is not a leaf of the model"),
            Violation::EmptyBlock(i) => write!(f, "lp #{i} has no members"),
        }
    }
}

/// Checks that a partition covers the model's leaves exactly once each.
pub fn validate_partition(model: &ActivityModel, partition: &Partition) -> Vec<Violation> {
    let mut violations = Vec::new();
    let leaves: std::collections::BTreeSet<&str> = model.leaves().into_iter().collect();
    let mut seen = BTreeMap::new();
    for (i, block) in partition.blocks.iter().enumerate() {
        if block.is_empty() {
            violations.push(Violation::EmptyBlock(i));
        }
        for leaf in block {
            *seen.entry(leaf.as_str()).or_insert(0u32) += 1;
            if !leaves.contains(leaf.as_str()) {
                violations.push(Violation::UnknownLeaf(leaf.clone()));
            }
        }
    }
    for (leaf, count) in &seen {
        if *count > 1 {
            violations.push(Violation::DuplicatedLeaf(leaf.to_string()));
        }
    }
    for leaf in leaves {
        if !seen.contains_key(leaf) {
            violations.push(Violation::UncoveredLeaf(leaf.to_string()));
        }
    }
    violations
}

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("partition has {blocks} lps but only {hosts} hosts were supplied")]
    NotEnoughHosts { blocks: usize, hosts: usize },
}

/// An injective assignment of LPs to workstation addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub assignments: Vec<(String, String)>,
}

/// Assigns block `i` of the partition to `hosts[i]`.
pub fn map_to_workstations(partition: &Partition, hosts: &[String]) -> Result<Mapping, MappingError> {
    if hosts.len() < partition.blocks.len() {
        return Err(MappingError::NotEnoughHosts {
            blocks: partition.blocks.len(),
            hosts: hosts.len(),
        });
    }
    Ok(Mapping {
        assignments: partition
            .blocks
            .iter()
            .zip(hosts)
            .map(|(b, h)| (b[0].clone(), h.clone()))
            .collect(),
    })
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (lp, host) in &self.assignments {
            writeln!(f, "map {lp} -> {host}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionFileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Parses `lp <id>: <leaf,...>` and `map <lp> -> <host>` lines, as
/// produced by [`Partition`] and [`Mapping`] `Display`.
pub fn parse_partition_file(
    text: &str,
) -> Result<(Partition, Mapping), PartitionFileError> {
    let mut blocks = Vec::new();
    let mut assignments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: String| PartitionFileError::Syntax {
            line: line_no,
            msg,
        };
        if let Some(rest) = line.strip_prefix("lp ") {
            let (_id, members) = rest
                .split_once(':')
                .ok_or_else(|| syntax("expected 'lp <id>: <leaves>'".into()))?;
            let members: Vec<String> = members
                .split(',')
                .map(|m| m.trim().to_string())
                .filter(|m| !m.is_empty())
                .collect();
            if members.is_empty() {
                return Err(syntax("lp line with no members".into()));
            }
            blocks.push(members);
        } else if let Some(rest) = line.strip_prefix("map ") {
            let (lp, host) = rest
                .split_once("->")
                .ok_or_else(|| syntax("expected 'map <lp> -> <host>'".into()))?;
            assignments.push((lp.trim().to_string(), host.trim().to_string()));
        } else {
            return Err(syntax(format!("unknown directive in {line:?}")));
        }
    }
    Ok((Partition { blocks }, Mapping { assignments }))
}

/// Scenario skeleton for one LP of a partition: processing placeholders
/// for each leaf, a receive port per incoming cut arc, a send port per
/// outgoing cut arc.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSkeleton {
    pub lp_id: String,
    /// (source lp, flow label) per incoming cut arc.
    pub in_ports: Vec<(String, String)>,
    /// (destination lp, flow label) per outgoing cut arc.
    pub out_ports: Vec<(String, String)>,
    pub leaves: Vec<String>,
    /// Scenario-fragment text with `?` placeholders for parameters.
    pub text: String,
}

/// Builds the skeleton for block `index` of the partition. Fan-out beyond
/// a leaf's first outgoing arc cannot be expressed by the single-successor
/// block network, so additional routes are noted as comments for the
/// modeler to wire by hand.
pub fn emit_skeleton(model: &ActivityModel, partition: &Partition, index: usize) -> LpSkeleton {
    let members: std::collections::BTreeSet<&str> = partition.blocks[index]
        .iter()
        .map(String::as_str)
        .collect();
    let lp_id = partition.lp_id(index).to_string();
    let owner_of = |leaf: &str| -> String {
        partition
            .block_of(leaf)
            .map(|b| partition.lp_id(b).to_string())
            .unwrap_or_else(|| leaf.to_string())
    };

    let mut in_ports = Vec::new();
    let mut out_ports = Vec::new();
    let mut lines = Vec::new();
    let mut notes = Vec::new();
    lines.push(format!("lp {lp_id} lookahead=?"));

    // One processing placeholder per leaf; wired to the first outgoing
    // arc's target.
    let mut first_route: BTreeMap<&str, String> = BTreeMap::new();
    for leaf in &partition.blocks[index] {
        let outgoing: Vec<_> = model.arcs.iter().filter(|a| a.from == *leaf).collect();
        for (n, arc) in outgoing.iter().enumerate() {
            let target = if members.contains(arc.to.as_str()) {
                format!("act_{}", arc.to)
            } else {
                let dest = owner_of(&arc.to);
                let name = format!("send_{}_{}", dest, arc.label);
                if !out_ports.iter().any(|(d, l)| *d == dest && *l == arc.label) {
                    out_ports.push((dest.clone(), arc.label.clone()));
                    lines.push(format!("block {lp_id}.{name} portsend dest={dest}"));
                }
                name
            };
            if n == 0 {
                first_route.insert(leaf.as_str(), target);
            } else {
                notes.push(format!(
                    "# unwired route {} -> {} label={}: single-successor blocks cannot fan out",
                    leaf, arc.to, arc.label
                ));
            }
        }
    }
    for leaf in &partition.blocks[index] {
        match first_route.get(leaf.as_str()) {
            Some(target) => lines.push(format!(
                "block {lp_id}.act_{leaf} process resource=? service=? -> {target}"
            )),
            None => {
                lines.push(format!(
                    "block {lp_id}.act_{leaf} process resource=? service=? -> done_{leaf}"
                ));
                lines.push(format!("block {lp_id}.done_{leaf} dispose"));
            }
        }
    }
    // Receive machinery per incoming cut arc.
    for arc in &model.arcs {
        if members.contains(arc.to.as_str()) && !members.contains(arc.from.as_str()) {
            let src = owner_of(&arc.from);
            if in_ports.iter().any(|(s, l)| *s == src && *l == arc.label) {
                continue;
            }
            in_ports.push((src.clone(), arc.label.clone()));
            let recv = format!("recv_{}_{}", src, arc.label);
            let sep = format!("sep_{}_{}", src, arc.label);
            lines.push(format!(
                "block {lp_id}.{recv} createport source={src} kind={} -> {sep}",
                arc.label
            ));
            lines.push(format!(
                "block {lp_id}.{sep} separate add=? -> act_{}",
                arc.to
            ));
        }
    }
    lines.extend(notes);
    LpSkeleton {
        lp_id,
        in_ports,
        out_ports,
        leaves: partition.blocks[index].clone(),
        text: lines.join("\n") + "\n",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_pins() -> BTreeMap<String, usize> {
        BTreeMap::new()
    }

    #[test]
    fn three_firms_split_into_singletons_with_cut_three() {
        let m = ActivityModel::three_firm_example();
        let p = partition(&m, 3, &no_pins()).unwrap();
        assert_eq!(
            p.blocks,
            vec![vec!["A".to_string()], vec!["B".into()], vec!["C".into()]]
        );
        assert_eq!(cut_weight(&m, &p), 3);
    }

    #[test]
    fn two_way_split_keeps_the_chattier_pair_together() {
        // P-Q exchange three arcs, Q-R one; k=2 must cut the single arc.
        let m = ActivityModel::parse(
            "activity P p\nactivity Q q\nactivity R r\n\
             arc P -> Q role=output label=a\n\
             arc P -> Q role=output label=b\n\
             arc Q -> P role=control label=c\n\
             arc Q -> R role=output label=d\n",
        )
        .unwrap();
        let p = partition(&m, 2, &no_pins()).unwrap();
        assert_eq!(cut_weight(&m, &p), 1);
        assert_eq!(p.blocks, vec![vec!["P".to_string(), "Q".into()], vec!["R".into()]]);
    }

    #[test]
    fn result_is_invariant_under_declaration_order() {
        let forward = ActivityModel::parse(
            "activity A a\nactivity B b\nactivity C c\nactivity D d\n\
             arc A -> B role=output label=x\n\
             arc C -> D role=output label=y\n\
             arc B -> C role=output label=z\n",
        )
        .unwrap();
        let shuffled = ActivityModel::parse(
            "activity D d\nactivity B b\nactivity C c\nactivity A a\n\
             arc B -> C role=output label=z\n\
             arc C -> D role=output label=y\n\
             arc A -> B role=output label=x\n",
        )
        .unwrap();
        let p1 = partition(&forward, 2, &no_pins()).unwrap();
        let p2 = partition(&shuffled, 2, &no_pins()).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn infeasible_and_pin_errors() {
        let m = ActivityModel::three_firm_example();
        assert!(matches!(
            partition(&m, 4, &no_pins()),
            Err(PartitionError::Infeasible { .. })
        ));
        let mut pins = BTreeMap::new();
        pins.insert("A".to_string(), 5usize);
        assert!(matches!(
            partition(&m, 2, &pins),
            Err(PartitionError::PinOutOfRange { .. })
        ));
        let mut pins = BTreeMap::new();
        pins.insert("Z".to_string(), 0usize);
        assert!(matches!(
            partition(&m, 2, &pins),
            Err(PartitionError::UnknownPin(_))
        ));
        // Pinning everything to block 0 leaves block 1 unfillable.
        let mut pins = BTreeMap::new();
        for l in ["A", "B", "C"] {
            pins.insert(l.to_string(), 0usize);
        }
        assert_eq!(
            partition(&m, 2, &pins),
            Err(PartitionError::PinsContradictory)
        );
    }

    #[test]
    fn pins_are_honored() {
        let m = ActivityModel::three_firm_example();
        let mut pins = BTreeMap::new();
        pins.insert("A".to_string(), 1usize);
        let p = partition(&m, 2, &pins).unwrap();
        assert!(p.blocks[1].contains(&"A".to_string()));
    }

    #[test]
    fn validation_reports_all_violation_kinds() {
        let m = ActivityModel::three_firm_example();
        let p = Partition {
            blocks: vec![
                vec!["A".into(), "A".into(), "Q".into()],
                vec![],
            ],
        };
        let v = validate_partition(&m, &p);
        assert!(v.contains(&Violation::DuplicatedLeaf("A".into())));
        assert!(v.contains(&Violation::UnknownLeaf("Q".into())));
        assert!(v.contains(&Violation::EmptyBlock(1)));
        assert!(v.contains(&Violation::UncoveredLeaf("B".into())));
        assert!(v.contains(&Violation::UncoveredLeaf("C".into())));

        let good = partition(&m, 3, &no_pins()).unwrap();
        assert!(validate_partition(&m, &good).is_empty());
    }

    #[test]
    fn mapping_is_injective_or_fails() {
        let m = ActivityModel::three_firm_example();
        let p = partition(&m, 3, &no_pins()).unwrap();
        let hosts = vec!["h1:7001".to_string(), "h2:7001".into(), "h3:7001".into()];
        let map = map_to_workstations(&p, &hosts).unwrap();
        assert_eq!(map.assignments.len(), 3);
        let short = vec!["h1:7001".to_string()];
        assert!(matches!(
            map_to_workstations(&p, &short),
            Err(MappingError::NotEnoughHosts { .. })
        ));
    }

    #[test]
    fn partition_file_round_trips() {
        let m = ActivityModel::three_firm_example();
        let p = partition(&m, 2, &no_pins()).unwrap();
        let hosts = vec!["h1:7001".to_string(), "h2:7002".into()];
        let map = map_to_workstations(&p, &hosts).unwrap();
        let text = format!("{p}{map}");
        let (p2, m2) = parse_partition_file(&text).unwrap();
        assert_eq!(p, p2);
        assert_eq!(map, m2);
    }

    #[test]
    fn skeleton_ports_match_cut_arcs() {
        let m = ActivityModel::three_firm_example();
        let p = partition(&m, 3, &no_pins()).unwrap();
        // Block 1 is {B}: one incoming cut arc (X from A), one outgoing
        // (XY to C).
        let sk = emit_skeleton(&m, &p, 1);
        assert_eq!(sk.lp_id, "B");
        assert_eq!(sk.in_ports, vec![("A".to_string(), "X".to_string())]);
        assert_eq!(sk.out_ports, vec![("C".to_string(), "XY".to_string())]);
        assert!(sk.text.contains("createport source=A"));
        assert!(sk.text.contains("separate add=?"));
        assert!(sk.text.contains("portsend dest=C"));
        assert!(sk.text.contains("act_B"));
    }
}
