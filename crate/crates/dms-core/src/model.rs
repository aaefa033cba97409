//! Hierarchical activity models.
//!
//! An activity model is a tree of named activities plus directed arcs
//! between leaf activities. Arcs carry a role (input, control, output or
//! mechanism) and a flow label. Only leaves do work; interior activities
//! exist to organize the hierarchy, and arc endpoints must be leaves.
//!
//! The text form is line oriented:
//!
//! ```text
//! # three firms
//! activity ENT enterprise
//! activity A firm_a parent=ENT
//! activity B firm_b parent=ENT
//! arc A -> B role=output label=X
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcRole {
    Input,
    Control,
    Output,
    Mechanism,
}

impl ArcRole {
    fn parse(s: &str) -> Option<ArcRole> {
        Some(match s {
            "input" => ArcRole::Input,
            "control" => ArcRole::Control,
            "output" => ArcRole::Output,
            "mechanism" => ArcRole::Mechanism,
            _ => return None,
        })
    }

    fn as_str(&self) -> &'static str {
        match self {
            ArcRole::Input => "input",
            ArcRole::Control => "control",
            ArcRole::Output => "output",
            ArcRole::Mechanism => "mechanism",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activity {
    pub id: String,
    pub name: String,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowArc {
    pub from: String,
    pub to: String,
    pub role: ArcRole,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityModel {
    pub activities: Vec<Activity>,
    pub arcs: Vec<FlowArc>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate activity id {0:?}")]
    DuplicateActivity(String),
    #[error("activity {child:?} references unknown parent {parent:?}")]
    UnknownParent { child: String, parent: String },
    #[error("activity hierarchy contains a cycle through {0:?}")]
    HierarchyCycle(String),
    #[error("arc endpoint {0:?} is not a known activity")]
    UnknownEndpoint(String),
    #[error("arc endpoint {0:?} is not a leaf activity")]
    NonLeafEndpoint(String),
    #[error("arc from {0:?} to itself")]
    SelfArc(String),
}

impl ActivityModel {
    /// All leaf activity ids (activities that are nobody's parent), in
    /// lexicographic order. Partitioning and interaction counting operate
    /// on this set.
    pub fn leaves(&self) -> Vec<&str> {
        let parents: BTreeSet<&str> = self
            .activities
            .iter()
            .filter_map(|a| a.parent.as_deref())
            .collect();
        let mut leaves: Vec<&str> = self
            .activities
            .iter()
            .filter(|a| !parents.contains(a.id.as_str()))
            .map(|a| a.id.as_str())
            .collect();
        leaves.sort_unstable();
        leaves
    }

    /// Number of arcs between `a` and `b`, counting both directions.
    pub fn interaction_count(&self, a: &str, b: &str) -> u32 {
        self.arcs
            .iter()
            .filter(|arc| {
                (arc.from == a && arc.to == b) || (arc.from == b && arc.to == a)
            })
            .count() as u32
    }

    /// Structural checks: unique ids, parents exist, hierarchy is a
    /// forest, arcs join distinct leaves.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut ids = BTreeSet::new();
        for a in &self.activities {
            if !ids.insert(a.id.as_str()) {
                return Err(ModelError::DuplicateActivity(a.id.clone()));
            }
        }
        let by_id: BTreeMap<&str, &Activity> =
            self.activities.iter().map(|a| (a.id.as_str(), a)).collect();
        for a in &self.activities {
            if let Some(p) = &a.parent {
                if !ids.contains(p.as_str()) {
                    return Err(ModelError::UnknownParent {
                        child: a.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        // Walk each activity's parent chain; revisiting a node within one
        // walk means a cycle.
        for a in &self.activities {
            let mut seen = BTreeSet::new();
            let mut cur = a;
            while let Some(p) = &cur.parent {
                if !seen.insert(cur.id.as_str()) {
                    return Err(ModelError::HierarchyCycle(a.id.clone()));
                }
                cur = by_id[p.as_str()];
            }
            if seen.contains(cur.id.as_str()) {
                return Err(ModelError::HierarchyCycle(a.id.clone()));
            }
        }
        let leaves: BTreeSet<&str> = self.leaves().into_iter().collect();
        for arc in &self.arcs {
            for end in [&arc.from, &arc.to] {
                if !ids.contains(end.as_str()) {
                    return Err(ModelError::UnknownEndpoint(end.clone()));
                }
                if !leaves.contains(end.as_str()) {
                    return Err(ModelError::NonLeafEndpoint(end.clone()));
                }
            }
            if arc.from == arc.to {
                return Err(ModelError::SelfArc(arc.from.clone()));
            }
        }
        Ok(())
    }

    /// Parses the line-oriented text form. `#` starts a comment; blank
    /// lines are skipped. The parsed model is validated.
    pub fn parse(text: &str) -> Result<ActivityModel, ModelError> {
        let mut model = ActivityModel::default();
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
            let syntax = |msg: &str| ModelError::Syntax {
                line: line_no,
                msg: msg.to_string(),
            };
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("activity") => {
                    let id = tokens.next().ok_or_else(|| syntax("missing activity id"))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| syntax("missing activity name"))?;
                    let mut parent = None;
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("parent", p)) => parent = Some(p.to_string()),
                            _ => return Err(syntax(&format!("unexpected token {tok:?}"))),
                        }
                    }
                    model.activities.push(Activity {
                        id: id.to_string(),
                        name: name.to_string(),
                        parent,
                    });
                }
                Some("arc") => {
                    let from = tokens.next().ok_or_else(|| syntax("missing arc source"))?;
                    if tokens.next() != Some("->") {
                        return Err(syntax("expected '->'"));
                    }
                    let to = tokens.next().ok_or_else(|| syntax("missing arc target"))?;
                    let mut role = None;
                    let mut label = None;
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("role", r)) => {
                                role = Some(
                                    ArcRole::parse(r)
                                        .ok_or_else(|| syntax(&format!("unknown role {r:?}")))?,
                                )
                            }
                            Some(("label", l)) => label = Some(l.to_string()),
                            _ => return Err(syntax(&format!("unexpected token {tok:?}"))),
                        }
                    }
                    model.arcs.push(FlowArc {
                        from: from.to_string(),
                        to: to.to_string(),
                        role: role.ok_or_else(|| syntax("arc needs role=..."))?,
                        label: label.ok_or_else(|| syntax("arc needs label=..."))?,
                    });
                }
                Some(other) => return Err(syntax(&format!("unknown directive {other:?}"))),
                None => unreachable!(),
            }
        }
        model.validate()?;
        Ok(model)
    }

    /// The three-firm supply chain used as the running example: firm A
    /// ships X to firm B and Z to firm C, firm B ships assembled XY to
    /// firm C.
    pub fn three_firm_example() -> ActivityModel {
        let m = ActivityModel::parse(
            "activity ENT enterprise\n\
             activity A firm_a parent=ENT\n\
             activity B firm_b parent=ENT\n\
             activity C firm_c parent=ENT\n\
             arc A -> B role=output label=X\n\
             arc A -> C role=output label=Z\n\
             arc B -> C role=output label=XY\n",
        )
        .expect("example model is valid");
        m
    }
}

impl fmt::Display for ActivityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.activities {
            match &a.parent {
                Some(p) => writeln!(f, "activity {} {} parent={}", a.id, a.name, p)?,
                None => writeln!(f, "activity {} {}", a.id, a.name)?,
            }
        }
        for arc in &self.arcs {
            writeln!(
                f,
                "arc {} -> {} role={} label={}",
                arc.from,
                arc.to,
                arc.role.as_str(),
                arc.label
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc_counts_one() {
        let m = ActivityModel::three_firm_example();
        assert_eq!(m.interaction_count("A", "B"), 1);
        assert_eq!(m.interaction_count("B", "A"), 1);
        assert_eq!(m.interaction_count("A", "C"), 1);
        assert_eq!(m.interaction_count("B", "C"), 1);
    }

    #[test]
    fn parallel_and_reverse_arcs_sum() {
        let m = ActivityModel::parse(
            "activity P p\n\
             activity Q q\n\
             arc P -> Q role=output label=a\n\
             arc P -> Q role=control label=b\n\
             arc Q -> P role=output label=c\n",
        )
        .unwrap();
        assert_eq!(m.interaction_count("P", "Q"), 3);
        assert_eq!(m.interaction_count("Q", "P"), 3);
        assert_eq!(m.interaction_count("P", "P"), 0);
    }

    #[test]
    fn leaves_exclude_parents() {
        let m = ActivityModel::three_firm_example();
        assert_eq!(m.leaves(), vec!["A", "B", "C"]);
    }

    #[test]
    fn display_round_trips() {
        let m = ActivityModel::three_firm_example();
        let again = ActivityModel::parse(&m.to_string()).unwrap();
        assert_eq!(m.activities, again.activities);
        assert_eq!(m.arcs, again.arcs);
    }

    #[test]
    fn rejects_arc_to_interior_node() {
        let err = ActivityModel::parse(
            "activity ENT e\n\
             activity A a parent=ENT\n\
             activity B b parent=ENT\n\
             arc A -> ENT role=output label=x\n",
        )
        .unwrap_err();
        assert_eq!(err, ModelError::NonLeafEndpoint("ENT".into()));
    }

    #[test]
    fn rejects_unknown_parent_and_duplicates() {
        assert!(matches!(
            ActivityModel::parse("activity A a parent=NOPE\n"),
            Err(ModelError::UnknownParent { .. })
        ));
        assert!(matches!(
            ActivityModel::parse("activity A a\nactivity A b\n"),
            Err(ModelError::DuplicateActivity(_))
        ));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let m = ActivityModel::parse(
            "# header\n\
             \n\
             activity A a  # trailing\n\
             activity B b\n\
             arc A -> B role=output label=x\n",
        )
        .unwrap();
        assert_eq!(m.activities.len(), 2);
        assert_eq!(m.arcs.len(), 1);
    }
}
