//! Run descriptions: which LPs exist, what blocks they contain, how they
//! are linked, and the run-level knobs (seed, end time, replications).
//!
//! Scenarios live in `.dms` files, a line-oriented keyword format chosen
//! so diffs and hand edits stay readable:
//!
//! ```text
//! end_time 5000
//! seed 42
//! replications 1
//!
//! lp A lookahead=0.1
//! resource A.floor capacity=3
//! block A.make_x create kind=X inter=exp(0.4) -> proc_x
//! block A.proc_x process resource=floor service=uniform(0.2,0.6) -> batch_x
//! block A.batch_x batch size=1000 -> ship_x
//! block A.ship_x portsend dest=B
//!
//! lp B lookahead=2.0
//! block B.recv_x createport source=A kind=X -> sep_x
//! block B.sep_x separate add=999 -> done_x
//! block B.done_x dispose
//!
//! link A -> B transfer=10
//! ```
//!
//! Comments start with `#`. Block successors (`-> name`) stay inside the
//! owning LP; traffic between LPs flows only over `link` lines. A link is
//! an ordered LP pair: the sender needs exactly one `portsend` block
//! aimed at the destination, the receiver exactly one `createport` block
//! keyed by the sender's id, because received messages are routed by
//! their source label.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::Dist;
use crate::kernel::{Block, BlockKind, KernelModel, LpModel, ResourceDef};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub end_time: SimTime,
    pub master_seed: u64,
    pub replications: u32,
    /// Declaration order defines each LP's index, which in turn
    /// participates in event ordering; it must not be permuted.
    pub lps: Vec<ScenarioLp>,
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLp {
    pub id: String,
    pub lookahead: SimTime,
    pub resources: Vec<ResourceDef>,
    pub blocks: Vec<ScenarioBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBlock {
    pub name: String,
    pub kind: ScenarioBlockKind,
    pub successor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioBlockKind {
    Create { entity_kind: String, interarrival: Dist },
    CreatePort { source: String, entity_kind: String },
    Process { resource: String, service: Dist },
    Batch { size: u64 },
    Separate { add: u64 },
    PortSend { dest: String },
    Dispose,
}

impl ScenarioBlockKind {
    pub fn is_sink(&self) -> bool {
        matches!(
            self,
            ScenarioBlockKind::PortSend { .. } | ScenarioBlockKind::Dispose
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub transfer: SimTime,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("scenario invalid:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Advisory finding from the lookahead cross-check. Warnings do not block
/// a run; a too-large lookahead surfaces later as a hard error when a
/// send undercuts an already published promise.
#[derive(Debug, Clone, PartialEq)]
pub enum LookaheadWarning {
    /// Declared lookahead exceeds the provable minimum processing time
    /// along some input-to-output path.
    ExceedsPathBound { lp: String, declared: f64, bound: f64 },
    /// Some input-to-output path has no positive lower bound at all
    /// (e.g. an exponential service with support down to zero).
    UnboundedBelowPath { lp: String, declared: f64 },
}

impl fmt::Display for LookaheadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LookaheadWarning::ExceedsPathBound {
                lp,
                declared,
                bound,
            } => write!(
                f,
                "LP {lp}: declared lookahead {declared} exceeds the minimum \
                 input-to-output processing time {bound}"
            ),
            LookaheadWarning::UnboundedBelowPath { lp, declared } => write!(
                f,
                "LP {lp}: declared lookahead {declared} on a path whose service \
                 times have no positive lower bound"
            ),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let s = Scenario::parse(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut end_time: Option<f64> = None;
        let mut seed: u64 = 0;
        let mut replications: u32 = 1;
        let mut lps: Vec<ScenarioLp> = Vec::new();
        let mut links: Vec<LinkSpec> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |reason: String| ScenarioError::Parse {
                line: lineno,
                reason,
            };
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap();
            match keyword {
                "end_time" => {
                    let v = words
                        .next()
                        .ok_or_else(|| err("end_time needs a value".into()))?;
                    end_time =
                        Some(v.parse().map_err(|_| err(format!("bad end_time {v:?}")))?);
                    if let Some(extra) = words.next() {
                        return Err(err(format!("unexpected token {extra:?}")));
                    }
                }
                "seed" => {
                    let v = words.next().ok_or_else(|| err("seed needs a value".into()))?;
                    seed = v.parse().map_err(|_| err(format!("bad seed {v:?}")))?;
                    if let Some(extra) = words.next() {
                        return Err(err(format!("unexpected token {extra:?}")));
                    }
                }
                "replications" => {
                    let v = words
                        .next()
                        .ok_or_else(|| err("replications needs a value".into()))?;
                    replications = v
                        .parse()
                        .map_err(|_| err(format!("bad replication count {v:?}")))?;
                    if let Some(extra) = words.next() {
                        return Err(err(format!("unexpected token {extra:?}")));
                    }
                }
                "lp" => {
                    let id = words.next().ok_or_else(|| err("lp needs an id".into()))?;
                    let mut lookahead: Option<f64> = None;
                    for w in words {
                        match w.split_once('=') {
                            Some(("lookahead", v)) => {
                                lookahead = Some(
                                    v.parse()
                                        .map_err(|_| err(format!("bad lookahead {v:?}")))?,
                                );
                            }
                            _ => return Err(err(format!("unexpected token {w:?}"))),
                        }
                    }
                    let lookahead =
                        lookahead.ok_or_else(|| err("lp line needs lookahead=<hours>".into()))?;
                    if !lookahead.is_finite() || lookahead <= 0.0 {
                        return Err(err(format!("lookahead must be positive, got {lookahead}")));
                    }
                    lps.push(ScenarioLp {
                        id: id.to_string(),
                        lookahead: SimTime::new(lookahead),
                        resources: Vec::new(),
                        blocks: Vec::new(),
                    });
                }
                "resource" => {
                    let target = words
                        .next()
                        .ok_or_else(|| err("resource needs <lp>.<name>".into()))?;
                    let (lp_id, name) = split_scoped(target)
                        .ok_or_else(|| err(format!("expected <lp>.<name>, got {target:?}")))?;
                    let mut capacity: Option<u32> = None;
                    for w in words {
                        match w.split_once('=') {
                            Some(("capacity", v)) => {
                                capacity = Some(
                                    v.parse()
                                        .map_err(|_| err(format!("bad capacity {v:?}")))?,
                                );
                            }
                            _ => return Err(err(format!("unexpected token {w:?}"))),
                        }
                    }
                    let capacity =
                        capacity.ok_or_else(|| err("resource needs capacity=<n>".into()))?;
                    let lp = find_lp(&mut lps, lp_id)
                        .ok_or_else(|| err(format!("unknown LP {lp_id:?}")))?;
                    lp.resources.push(ResourceDef {
                        name: name.to_string(),
                        capacity,
                    });
                }
                "block" => {
                    let target = words
                        .next()
                        .ok_or_else(|| err("block needs <lp>.<name>".into()))?;
                    let (lp_id, name) = split_scoped(target)
                        .ok_or_else(|| err(format!("expected <lp>.<name>, got {target:?}")))?;
                    let kind_word = words
                        .next()
                        .ok_or_else(|| err("block needs a kind".into()))?;
                    let rest: Vec<&str> = words.collect();
                    // Optional "-> successor" tail.
                    let (params, successor) = match rest.iter().position(|w| *w == "->") {
                        Some(p) => {
                            if p + 2 != rest.len() {
                                return Err(err("expected exactly one successor after ->".into()));
                            }
                            (&rest[..p], Some(rest[p + 1].to_string()))
                        }
                        None => (&rest[..], None),
                    };
                    let mut kv: HashMap<&str, &str> = HashMap::new();
                    for w in params {
                        let (k, v) = w
                            .split_once('=')
                            .ok_or_else(|| err(format!("expected key=value, got {w:?}")))?;
                        if kv.insert(k, v).is_some() {
                            return Err(err(format!("duplicate parameter {k:?}")));
                        }
                    }
                    let mut need = |k: &str| -> Result<&str, ScenarioError> {
                        kv.remove(k)
                            .ok_or_else(|| err(format!("{kind_word} block needs {k}=...")))
                    };
                    let kind = match kind_word {
                        "create" => ScenarioBlockKind::Create {
                            entity_kind: need("kind")?.to_string(),
                            interarrival: parse_dist(need("inter")?, lineno)?,
                        },
                        "createport" => ScenarioBlockKind::CreatePort {
                            source: need("source")?.to_string(),
                            entity_kind: need("kind")?.to_string(),
                        },
                        "process" => ScenarioBlockKind::Process {
                            resource: need("resource")?.to_string(),
                            service: parse_dist(need("service")?, lineno)?,
                        },
                        "batch" => ScenarioBlockKind::Batch {
                            size: need("size")?
                                .parse()
                                .map_err(|_| err("bad batch size".into()))?,
                        },
                        "separate" => ScenarioBlockKind::Separate {
                            add: need("add")?
                                .parse()
                                .map_err(|_| err("bad separate add".into()))?,
                        },
                        "portsend" => ScenarioBlockKind::PortSend {
                            dest: need("dest")?.to_string(),
                        },
                        "dispose" => ScenarioBlockKind::Dispose,
                        other => return Err(err(format!("unknown block kind {other:?}"))),
                    };
                    if let Some((k, _)) = kv.into_iter().next() {
                        return Err(err(format!("unexpected parameter {k:?}")));
                    }
                    let lp = find_lp(&mut lps, lp_id)
                        .ok_or_else(|| err(format!("unknown LP {lp_id:?}")))?;
                    lp.blocks.push(ScenarioBlock {
                        name: name.to_string(),
                        kind,
                        successor,
                    });
                }
                "link" => {
                    let from = words.next().ok_or_else(|| err("link needs a source".into()))?;
                    let arrow = words.next();
                    if arrow != Some("->") {
                        return Err(err("expected: link <from> -> <to> transfer=<h>".into()));
                    }
                    let to = words
                        .next()
                        .ok_or_else(|| err("link needs a destination".into()))?;
                    let mut transfer: Option<f64> = None;
                    for w in words {
                        match w.split_once('=') {
                            Some(("transfer", v)) => {
                                transfer = Some(
                                    v.parse()
                                        .map_err(|_| err(format!("bad transfer {v:?}")))?,
                                );
                            }
                            _ => return Err(err(format!("unexpected token {w:?}"))),
                        }
                    }
                    let transfer =
                        transfer.ok_or_else(|| err("link needs transfer=<hours>".into()))?;
                    if !transfer.is_finite() || transfer < 0.0 {
                        return Err(err(format!(
                            "transfer must be finite and non-negative, got {transfer}"
                        )));
                    }
                    links.push(LinkSpec {
                        from: from.to_string(),
                        to: to.to_string(),
                        transfer: SimTime::new(transfer),
                    });
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }

        let end_time = end_time.ok_or(ScenarioError::Parse {
            line: 0,
            reason: "scenario has no end_time line".into(),
        })?;
        if !end_time.is_finite() || end_time <= 0.0 {
            return Err(ScenarioError::Parse {
                line: 0,
                reason: format!("end_time must be positive, got {end_time}"),
            });
        }
        Ok(Scenario {
            end_time: SimTime::new(end_time),
            master_seed: seed,
            replications,
            lps,
            links,
        })
    }

    /// Canonical text form. Parsing the output reproduces the scenario
    /// exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("end_time {}\n", self.end_time));
        out.push_str(&format!("seed {}\n", self.master_seed));
        out.push_str(&format!("replications {}\n", self.replications));
        for lp in &self.lps {
            out.push('\n');
            out.push_str(&format!("lp {} lookahead={}\n", lp.id, lp.lookahead));
            for r in &lp.resources {
                out.push_str(&format!(
                    "resource {}.{} capacity={}\n",
                    lp.id, r.name, r.capacity
                ));
            }
            for b in &lp.blocks {
                out.push_str(&format!("block {}.{} ", lp.id, b.name));
                match &b.kind {
                    ScenarioBlockKind::Create {
                        entity_kind,
                        interarrival,
                    } => out.push_str(&format!("create kind={entity_kind} inter={interarrival}")),
                    ScenarioBlockKind::CreatePort {
                        source,
                        entity_kind,
                    } => out.push_str(&format!("createport source={source} kind={entity_kind}")),
                    ScenarioBlockKind::Process { resource, service } => {
                        out.push_str(&format!("process resource={resource} service={service}"))
                    }
                    ScenarioBlockKind::Batch { size } => out.push_str(&format!("batch size={size}")),
                    ScenarioBlockKind::Separate { add } => {
                        out.push_str(&format!("separate add={add}"))
                    }
                    ScenarioBlockKind::PortSend { dest } => {
                        out.push_str(&format!("portsend dest={dest}"))
                    }
                    ScenarioBlockKind::Dispose => out.push_str("dispose"),
                }
                if let Some(s) = &b.successor {
                    out.push_str(&format!(" -> {s}"));
                }
                out.push('\n');
            }
        }
        if !self.links.is_empty() {
            out.push('\n');
        }
        for l in &self.links {
            out.push_str(&format!(
                "link {} -> {} transfer={}\n",
                l.from, l.to, l.transfer
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs: Vec<String> = Vec::new();

        if self.replications == 0 {
            errs.push("replications must be at least 1".into());
        }
        if self.lps.is_empty() {
            errs.push("scenario declares no LPs".into());
        }

        let mut lp_ids = HashSet::new();
        for lp in &self.lps {
            if lp.id.is_empty()
                || lp
                    .id
                    .chars()
                    .any(|c| c.is_whitespace() || c == '.' || c == '/' || c == '\\')
            {
                errs.push(format!(
                    "LP id {:?} must be non-empty and free of whitespace, '.', and path separators",
                    lp.id
                ));
            }
            if !lp_ids.insert(&lp.id) {
                errs.push(format!("duplicate LP id {:?}", lp.id));
            }
            self.validate_lp(lp, &mut errs);
        }

        // Links: known endpoints, no self loops, one link per ordered pair.
        let mut pairs = HashSet::new();
        for l in &self.links {
            for end in [&l.from, &l.to] {
                if !lp_ids.contains(end) {
                    errs.push(format!("link references unknown LP {end:?}"));
                }
            }
            if l.from == l.to {
                errs.push(format!("link {} -> {} connects an LP to itself", l.from, l.to));
            }
            if !pairs.insert((&l.from, &l.to)) {
                errs.push(format!(
                    "duplicate link {} -> {}; messages are routed by source label, \
                     so each ordered LP pair supports one link",
                    l.from, l.to
                ));
            }
        }

        // Port/link incidence, both directions.
        for lp in &self.lps {
            let incoming: Vec<&LinkSpec> = self.links.iter().filter(|l| l.to == lp.id).collect();
            let outgoing: Vec<&LinkSpec> = self.links.iter().filter(|l| l.from == lp.id).collect();
            let mut ports: HashMap<&str, u32> = HashMap::new();
            let mut sends: HashMap<&str, u32> = HashMap::new();
            for b in &lp.blocks {
                match &b.kind {
                    ScenarioBlockKind::CreatePort { source, .. } => {
                        *ports.entry(source.as_str()).or_default() += 1;
                    }
                    ScenarioBlockKind::PortSend { dest } => {
                        *sends.entry(dest.as_str()).or_default() += 1;
                    }
                    _ => {}
                }
            }
            for l in &incoming {
                match ports.get(l.from.as_str()) {
                    Some(1) => {}
                    Some(n) => errs.push(format!(
                        "LP {} declares {n} input ports for source {:?}; exactly one is required",
                        lp.id, l.from
                    )),
                    None => errs.push(format!(
                        "link {} -> {} has no matching createport block in {}",
                        l.from, l.to, lp.id
                    )),
                }
            }
            for (src, _) in &ports {
                if !incoming.iter().any(|l| l.from == *src) {
                    errs.push(format!(
                        "LP {} declares an input port for {src:?} but no such link exists",
                        lp.id
                    ));
                }
            }
            for l in &outgoing {
                match sends.get(l.to.as_str()) {
                    Some(1) => {}
                    Some(n) => errs.push(format!(
                        "LP {} declares {n} portsend blocks toward {:?}; exactly one is required",
                        lp.id, l.to
                    )),
                    None => errs.push(format!(
                        "link {} -> {} has no matching portsend block in {}",
                        l.from, l.to, lp.id
                    )),
                }
            }
            for (dest, _) in &sends {
                if !outgoing.iter().any(|l| l.to == *dest) {
                    errs.push(format!(
                        "LP {} sends to {dest:?} but declares no such link",
                        lp.id
                    ));
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errs))
        }
    }

    fn validate_lp(&self, lp: &ScenarioLp, errs: &mut Vec<String>) {
        let mut rnames = HashSet::new();
        for r in &lp.resources {
            if !rnames.insert(&r.name) {
                errs.push(format!("LP {}: duplicate resource {:?}", lp.id, r.name));
            }
            if r.capacity == 0 {
                errs.push(format!(
                    "LP {}: resource {:?} needs capacity of at least 1",
                    lp.id, r.name
                ));
            }
        }
        let mut bnames: HashMap<&str, usize> = HashMap::new();
        for (i, b) in lp.blocks.iter().enumerate() {
            if bnames.insert(b.name.as_str(), i).is_some() {
                errs.push(format!("LP {}: duplicate block {:?}", lp.id, b.name));
            }
        }
        for b in &lp.blocks {
            match (&b.successor, b.kind.is_sink()) {
                (Some(_), true) => errs.push(format!(
                    "LP {}: block {:?} is a sink and cannot have a successor",
                    lp.id, b.name
                )),
                (None, false) => errs.push(format!(
                    "LP {}: block {:?} needs a successor",
                    lp.id, b.name
                )),
                _ => {}
            }
            if let Some(s) = &b.successor {
                if !bnames.contains_key(s.as_str()) {
                    errs.push(format!(
                        "LP {}: block {:?} routes to unknown block {:?}",
                        lp.id, b.name, s
                    ));
                }
            }
            match &b.kind {
                ScenarioBlockKind::Create {
                    entity_kind,
                    interarrival,
                } => {
                    if entity_kind.is_empty() {
                        errs.push(format!("LP {}: block {:?} has an empty kind", lp.id, b.name));
                    }
                    if let Err(e) = interarrival.validate() {
                        errs.push(format!("LP {}: block {:?}: {e}", lp.id, b.name));
                    }
                }
                ScenarioBlockKind::CreatePort { entity_kind, .. } => {
                    if entity_kind.is_empty() {
                        errs.push(format!("LP {}: block {:?} has an empty kind", lp.id, b.name));
                    }
                }
                ScenarioBlockKind::Process { resource, service } => {
                    if !lp.resources.iter().any(|r| &r.name == resource) {
                        errs.push(format!(
                            "LP {}: block {:?} uses undeclared resource {:?}",
                            lp.id, b.name, resource
                        ));
                    }
                    if let Err(e) = service.validate() {
                        errs.push(format!("LP {}: block {:?}: {e}", lp.id, b.name));
                    }
                }
                ScenarioBlockKind::Batch { size } => {
                    if *size == 0 {
                        errs.push(format!(
                            "LP {}: block {:?} needs a batch size of at least 1",
                            lp.id, b.name
                        ));
                    }
                }
                ScenarioBlockKind::Separate { .. }
                | ScenarioBlockKind::PortSend { .. }
                | ScenarioBlockKind::Dispose => {}
            }
        }
        // Successor chains must not loop.
        for (start, _) in bnames.iter() {
            let mut seen = HashSet::new();
            let mut cur = *start;
            while let Some(&i) = bnames.get(cur) {
                if !seen.insert(cur) {
                    errs.push(format!(
                        "LP {}: block routing loops through {:?}",
                        lp.id, cur
                    ));
                    break;
                }
                match &lp.blocks[i].successor {
                    Some(next) => cur = next.as_str(),
                    None => break,
                }
            }
        }
    }

    /// Cross-checks each declared lookahead against what the block
    /// network can actually promise. See [`LookaheadWarning`].
    pub fn effective_lookahead_check(&self) -> Vec<LookaheadWarning> {
        let mut warnings = Vec::new();
        for lp in &self.lps {
            let by_name: HashMap<&str, &ScenarioBlock> =
                lp.blocks.iter().map(|b| (b.name.as_str(), b)).collect();
            let mut min_bound: Option<f64> = None;
            for b in &lp.blocks {
                if !matches!(b.kind, ScenarioBlockKind::CreatePort { .. }) {
                    continue;
                }
                // Walk the single-successor chain; the step bound keeps
                // this safe even on a scenario that never passed
                // validation and loops.
                let mut bound = 0.0;
                let mut cur = b;
                for _ in 0..=lp.blocks.len() {
                    if let ScenarioBlockKind::Process { service, .. } = &cur.kind {
                        bound += service.lower_bound();
                    }
                    match &cur.successor {
                        Some(next) => match by_name.get(next.as_str()) {
                            Some(nb) => cur = nb,
                            None => break,
                        },
                        None => {
                            if matches!(cur.kind, ScenarioBlockKind::PortSend { .. }) {
                                min_bound = Some(match min_bound {
                                    Some(m) if m < bound => m,
                                    _ => bound,
                                });
                            }
                            break;
                        }
                    }
                }
            }
            if let Some(bound) = min_bound {
                let declared = lp.lookahead.hours();
                if declared > bound {
                    if bound == 0.0 {
                        warnings.push(LookaheadWarning::UnboundedBelowPath {
                            lp: lp.id.clone(),
                            declared,
                        });
                    } else {
                        warnings.push(LookaheadWarning::ExceedsPathBound {
                            lp: lp.id.clone(),
                            declared,
                            bound,
                        });
                    }
                }
            }
        }
        warnings
    }

    pub fn lp_index(&self, id: &str) -> Option<u32> {
        self.lps.iter().position(|l| l.id == id).map(|i| i as u32)
    }

    pub fn links_into<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LinkSpec> {
        self.links.iter().filter(move |l| l.to == id)
    }

    pub fn links_out_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LinkSpec> {
        self.links.iter().filter(move |l| l.from == id)
    }

    /// Kernel form of every LP, indices following declaration order.
    /// Call only on a validated scenario.
    pub fn to_kernel_model(&self) -> KernelModel {
        KernelModel {
            lps: (0..self.lps.len()).map(|i| self.lp_model(i as u32)).collect(),
        }
    }

    /// Kernel form of a single LP, keeping its scenario-wide index so
    /// that event ordering is identical in every run mode.
    pub fn kernel_model_for(&self, lp_index: u32) -> KernelModel {
        KernelModel {
            lps: vec![self.lp_model(lp_index)],
        }
    }

    fn lp_model(&self, lp_index: u32) -> LpModel {
        let lp = &self.lps[lp_index as usize];
        let block_index: HashMap<&str, u32> = lp
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.name.as_str(), i as u32))
            .collect();
        let resource_index: HashMap<&str, u32> = lp
            .resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.as_str(), i as u32))
            .collect();
        let blocks = lp
            .blocks
            .iter()
            .map(|b| Block {
                name: b.name.clone(),
                kind: match &b.kind {
                    ScenarioBlockKind::Create {
                        entity_kind,
                        interarrival,
                    } => BlockKind::Create {
                        entity_kind: entity_kind.clone(),
                        interarrival: interarrival.clone(),
                    },
                    ScenarioBlockKind::CreatePort {
                        source,
                        entity_kind,
                    } => BlockKind::CreatePort {
                        source: source.clone(),
                        entity_kind: entity_kind.clone(),
                    },
                    ScenarioBlockKind::Process { resource, service } => BlockKind::Process {
                        resource: resource_index[resource.as_str()],
                        service: service.clone(),
                    },
                    ScenarioBlockKind::Batch { size } => BlockKind::Batch { size: *size },
                    ScenarioBlockKind::Separate { add } => BlockKind::Separate { add: *add },
                    ScenarioBlockKind::PortSend { dest } => {
                        BlockKind::PortSend { dest: dest.clone() }
                    }
                    ScenarioBlockKind::Dispose => BlockKind::Dispose,
                },
                successor: b.successor.as_ref().map(|s| block_index[s.as_str()]),
            })
            .collect();
        LpModel {
            index: lp_index,
            id: lp.id.clone(),
            blocks,
            resources: lp.resources.clone(),
        }
    }
}

fn find_lp<'a>(lps: &'a mut [ScenarioLp], id: &str) -> Option<&'a mut ScenarioLp> {
    lps.iter_mut().find(|l| l.id == id)
}

fn split_scoped(s: &str) -> Option<(&str, &str)> {
    let (lp, name) = s.split_once('.')?;
    if lp.is_empty() || name.is_empty() {
        return None;
    }
    Some((lp, name))
}

fn parse_dist(text: &str, line: usize) -> Result<Dist, ScenarioError> {
    Dist::parse(text).map_err(|e| ScenarioError::Parse {
        line,
        reason: e.to_string(),
    })
}

/// The shipped three-firm example: A fabricates parts X and Z, shipping X
/// to B and Z to C; B assembles XY and ships it to C; C finishes both
/// incoming lines. Every firm also runs one independent in-house product.
/// Cross-firm batches hold 1000 units, reconstituted on arrival by a
/// separate block adding 999, and every shipment takes 10 hours. Arrival
/// rates and service times below are illustrative constants chosen to
/// keep all resources comfortably below saturation.
pub fn build_case_study() -> Scenario {
    // All rates in hours. One place to touch when retuning the example.
    const END_TIME: f64 = 5000.0;
    const SEED: u64 = 42;
    const TRANSFER_H: f64 = 10.0;
    const BATCH: u64 = 1000;
    const ADD: u64 = 999;

    let blk = |name: &str, kind: ScenarioBlockKind, succ: Option<&str>| ScenarioBlock {
        name: name.into(),
        kind,
        successor: succ.map(|s| s.into()),
    };
    use ScenarioBlockKind as K;

    let a = ScenarioLp {
        id: "A".into(),
        lookahead: SimTime::new(0.1),
        resources: vec![ResourceDef {
            name: "floor".into(),
            capacity: 3,
        }],
        blocks: vec![
            blk(
                "make_x",
                K::Create {
                    entity_kind: "X".into(),
                    interarrival: Dist::Exponential(0.4),
                },
                Some("proc_x"),
            ),
            blk(
                "proc_x",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Uniform(0.2, 0.6),
                },
                Some("batch_x"),
            ),
            blk("batch_x", K::Batch { size: BATCH }, Some("ship_x")),
            blk("ship_x", K::PortSend { dest: "B".into() }, None),
            blk(
                "make_z",
                K::Create {
                    entity_kind: "Z".into(),
                    interarrival: Dist::Uniform(0.3, 0.7),
                },
                Some("proc_z"),
            ),
            blk(
                "proc_z",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Triangular(0.1, 0.3, 0.5),
                },
                Some("batch_z"),
            ),
            blk("batch_z", K::Batch { size: BATCH }, Some("ship_z")),
            blk("ship_z", K::PortSend { dest: "C".into() }, None),
            blk(
                "make_own",
                K::Create {
                    entity_kind: "A1".into(),
                    interarrival: Dist::Exponential(1.0),
                },
                Some("proc_own"),
            ),
            blk(
                "proc_own",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Constant(0.5),
                },
                Some("done_own"),
            ),
            blk("done_own", K::Dispose, None),
        ],
    };

    let b = ScenarioLp {
        id: "B".into(),
        lookahead: SimTime::new(2.0),
        resources: vec![ResourceDef {
            name: "floor".into(),
            capacity: 2,
        }],
        blocks: vec![
            blk(
                "recv_x",
                K::CreatePort {
                    source: "A".into(),
                    entity_kind: "X".into(),
                },
                Some("sep_x"),
            ),
            blk("sep_x", K::Separate { add: ADD }, Some("assemble_xy")),
            blk(
                "assemble_xy",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Uniform(2.0, 4.0),
                },
                Some("batch_xy"),
            ),
            blk("batch_xy", K::Batch { size: BATCH }, Some("ship_xy")),
            blk("ship_xy", K::PortSend { dest: "C".into() }, None),
            blk(
                "make_y",
                K::Create {
                    entity_kind: "Y".into(),
                    interarrival: Dist::Exponential(0.8),
                },
                Some("proc_y"),
            ),
            blk(
                "proc_y",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Uniform(0.3, 0.9),
                },
                Some("done_y"),
            ),
            blk("done_y", K::Dispose, None),
            blk(
                "make_own",
                K::Create {
                    entity_kind: "B1".into(),
                    interarrival: Dist::Exponential(1.2),
                },
                Some("proc_own"),
            ),
            blk(
                "proc_own",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Constant(0.6),
                },
                Some("done_own"),
            ),
            blk("done_own", K::Dispose, None),
        ],
    };

    let c = ScenarioLp {
        id: "C".into(),
        lookahead: SimTime::new(1.0),
        resources: vec![ResourceDef {
            name: "floor".into(),
            capacity: 2,
        }],
        blocks: vec![
            blk(
                "recv_z",
                K::CreatePort {
                    source: "A".into(),
                    entity_kind: "Z".into(),
                },
                Some("sep_z"),
            ),
            blk("sep_z", K::Separate { add: ADD }, Some("final_z")),
            blk(
                "final_z",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Uniform(1.0, 2.0),
                },
                Some("done_z"),
            ),
            blk("done_z", K::Dispose, None),
            blk(
                "recv_xy",
                K::CreatePort {
                    source: "B".into(),
                    entity_kind: "XY".into(),
                },
                Some("sep_xy"),
            ),
            blk("sep_xy", K::Separate { add: ADD }, Some("final_xy")),
            blk(
                "final_xy",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Uniform(2.0, 3.0),
                },
                Some("done_xy"),
            ),
            blk("done_xy", K::Dispose, None),
            blk(
                "make_own",
                K::Create {
                    entity_kind: "C1".into(),
                    interarrival: Dist::Exponential(0.9),
                },
                Some("proc_own"),
            ),
            blk(
                "proc_own",
                K::Process {
                    resource: "floor".into(),
                    service: Dist::Constant(0.4),
                },
                Some("done_own"),
            ),
            blk("done_own", K::Dispose, None),
        ],
    };

    Scenario {
        end_time: SimTime::new(END_TIME),
        master_seed: SEED,
        replications: 1,
        lps: vec![a, b, c],
        links: vec![
            LinkSpec {
                from: "A".into(),
                to: "B".into(),
                transfer: SimTime::new(TRANSFER_H),
            },
            LinkSpec {
                from: "A".into(),
                to: "C".into(),
                transfer: SimTime::new(TRANSFER_H),
            },
            LinkSpec {
                from: "B".into(),
                to: "C".into(),
                transfer: SimTime::new(TRANSFER_H),
            },
        ],
    }
}
