//! Shared helpers for the integration suites: locating the shipped case
//! study, seeded random scenario generation, seeded random multigraph
//! generation, and a brute-force minimum-cut oracle that is independent
//! of the partitioner under test.

// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dms_core::model::ActivityModel;
use dms_core::rng::RngStream;
use dms_core::run::{run_scenario, RunArtifacts, RunConfig, RunMode};
use dms_core::Scenario;

pub fn example_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../examples")
        .join(name)
}

pub fn load_case_study() -> Scenario {
    Scenario::load(&example_file("case_study.dms")).expect("shipped case study loads")
}

/// Runs one replication and unwraps it.
pub fn run_one(sc: &Scenario, mode: RunMode, trace: bool) -> RunArtifacts {
    let cfg = RunConfig {
        trace,
        ..RunConfig::default()
    };
    run_scenario(sc, &mode, &cfg, None)
        .expect("run succeeds")
        .remove(0)
}

// -----------------------------------------------------------------------
// Random scenarios
// -----------------------------------------------------------------------

/// A randomized firm network. Every firm gets a local product line; every
/// outgoing link gets a dedicated create-process-send chain, so every
/// link carries traffic; every incoming link gets a receive-process-
/// dispose chain. Service times have strictly positive lower bounds and
/// the declared lookahead stays below all of them.
pub fn random_scenario(seed: u64, cyclic: bool) -> Scenario {
    random_scenario_sized(seed, None, cyclic, None)
}

pub fn random_scenario_sized(
    seed: u64,
    lp_count: Option<usize>,
    cyclic: bool,
    end_time: Option<f64>,
) -> Scenario {
    let mut rng = RngStream::from_seed(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let n = lp_count.unwrap_or_else(|| 2 + rng.next_below(4) as usize);
    assert!(n >= 2);

    let mut links: BTreeSet<(usize, usize)> = BTreeSet::new();
    if cyclic {
        for i in 0..n {
            links.insert((i, (i + 1) % n));
        }
    } else {
        // Connect each firm to a random earlier one; indices only ever
        // point forward, so no directed cycle can form.
        for j in 1..n {
            links.insert((rng.next_below(j as u64) as usize, j));
        }
    }
    for _ in 0..rng.next_below(2 * n as u64 + 1) {
        let a = rng.next_below(n as u64) as usize;
        let b = rng.next_below(n as u64) as usize;
        if a == b {
            continue;
        }
        if cyclic {
            links.insert((a, b));
        } else if a < b {
            links.insert((a, b));
        }
    }

    let names: Vec<String> = (0..n).map(|i| format!("F{i}")).collect();
    let end = end_time.unwrap_or(40.0 + rng.next_f64() * 40.0);
    let mut text = String::new();
    writeln!(text, "end_time {end}").unwrap();
    writeln!(text, "seed {}", rng.next_below(1_000_000)).unwrap();

    for (i, name) in names.iter().enumerate() {
        let lo = 0.2 + rng.next_f64() * 0.3;
        let hi = lo + 0.2 + rng.next_f64() * 0.5;
        // Strictly below every service lower bound in this firm.
        let lookahead = (lo * 0.9 * 100.0).floor() / 100.0;
        writeln!(text, "lp {name} lookahead={lookahead}").unwrap();
        writeln!(
            text,
            "resource {name}.cell capacity={}",
            1 + rng.next_below(3)
        )
        .unwrap();

        for &(a, b) in links.iter().filter(|&&(a, _)| a == i) {
            let dest = &names[b];
            let inter = 0.5 + rng.next_f64() * 1.5;
            writeln!(
                text,
                "block {name}.gen_{dest} create kind=G{a}x{b} inter=exp({inter}) -> mk_{dest}"
            )
            .unwrap();
            writeln!(
                text,
                "block {name}.mk_{dest} process resource=cell service=uniform({lo},{hi}) -> out_{dest}"
            )
            .unwrap();
            writeln!(text, "block {name}.out_{dest} portsend dest={dest}").unwrap();
        }

        writeln!(
            text,
            "block {name}.gen_own create kind=L{i} inter=exp(1) -> mk_own"
        )
        .unwrap();
        writeln!(
            text,
            "block {name}.mk_own process resource=cell service=uniform({lo},{hi}) -> done_own"
        )
        .unwrap();
        writeln!(text, "block {name}.done_own dispose").unwrap();

        for &(a, b) in links.iter().filter(|&&(_, b)| b == i) {
            let src = &names[a];
            writeln!(
                text,
                "block {name}.in_{src} createport source={src} kind=G{a}x{b} -> use_{src}"
            )
            .unwrap();
            writeln!(
                text,
                "block {name}.use_{src} process resource=cell service=uniform({lo},{hi}) -> done_{src}"
            )
            .unwrap();
            writeln!(text, "block {name}.done_{src} dispose").unwrap();
        }
    }

    for &(a, b) in &links {
        // Mostly positive transfer delays, occasionally zero: links are
        // allowed to deliver within the sender's own clock tick.
        let transfer = if rng.next_below(6) == 0 {
            0.0
        } else {
            (rng.next_f64() * 3.0 * 100.0).round() / 100.0
        };
        writeln!(text, "link {} -> {} transfer={transfer}", names[a], names[b]).unwrap();
    }

    let sc = Scenario::parse(&text).unwrap_or_else(|e| {
        panic!("generated scenario (seed {seed}) failed to parse: {e}\n{text}")
    });
    sc.validate().unwrap_or_else(|e| {
        panic!("generated scenario (seed {seed}) failed validation: {e}\n{text}")
    });
    sc
}

// -----------------------------------------------------------------------
// Random multigraphs and the brute-force cut oracle
// -----------------------------------------------------------------------

/// A flat activity model over 2..=8 leaves: a random spanning structure
/// guaranteeing connectivity plus random extra arcs, where repeating an
/// ordered pair is allowed (parallel arcs make it a multigraph).
pub fn random_multigraph(rng: &mut RngStream) -> ActivityModel {
    let n = 2 + rng.next_below(7) as usize;
    let mut text = String::new();
    for i in 0..n {
        writeln!(text, "activity L{i} leaf_{i}").unwrap();
    }
    let roles = ["output", "input", "control", "mechanism"];
    let mut arc_no = 0usize;
    let mut push_arc = |text: &mut String, a: usize, b: usize| {
        writeln!(
            text,
            "arc L{a} -> L{b} role={} label=f{arc_no}",
            roles[arc_no % roles.len()]
        )
        .unwrap();
        arc_no += 1;
    };
    for j in 1..n {
        let i = rng.next_below(j as u64) as usize;
        if rng.next_below(2) == 0 {
            push_arc(&mut text, i, j);
        } else {
            push_arc(&mut text, j, i);
        }
    }
    for _ in 0..rng.next_below(2 * n as u64 + 4) {
        let a = rng.next_below(n as u64) as usize;
        let b = rng.next_below(n as u64) as usize;
        if a != b {
            push_arc(&mut text, a, b);
        }
    }
    ActivityModel::parse(&text).expect("generated model parses")
}

/// Exhaustive minimum cut over all assignments of leaves to k blocks with
/// every block non-empty. Counts crossing arcs straight off the arc list;
/// shares no code with the partitioner.
pub fn brute_force_min_cut(model: &ActivityModel, k: usize) -> u32 {
    let leaves = model.leaves();
    let n = leaves.len();
    assert!(k >= 1 && k <= n);
    let index = |id: &str| leaves.iter().position(|l| *l == id).unwrap();
    let arcs: Vec<(usize, usize)> = model
        .arcs
        .iter()
        .map(|a| (index(&a.from), index(&a.to)))
        .collect();

    let mut best = u32::MAX;
    let mut assign = vec![0usize; n];
    loop {
        let mut used = vec![false; k];
        for &b in &assign {
            used[b] = true;
        }
        if used.iter().all(|u| *u) {
            let cut = arcs
                .iter()
                .filter(|(a, b)| assign[*a] != assign[*b])
                .count() as u32;
            best = best.min(cut);
        }
        // Odometer over base-k digits.
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            assign[pos] += 1;
            if assign[pos] < k {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
    }
}

/// Crossing-arc count of a concrete partition, again straight off the arc
/// list, used to cross-check the partitioner's own weight function.
pub fn crossing_arcs(model: &ActivityModel, blocks: &[Vec<String>]) -> u32 {
    let block_of = |id: &str| blocks.iter().position(|b| b.iter().any(|l| l == id));
    model
        .arcs
        .iter()
        .filter(|a| {
            let (x, y) = (block_of(&a.from), block_of(&a.to));
            x.is_some() && y.is_some() && x != y
        })
        .count() as u32
}
