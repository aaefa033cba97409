//! Run statistics.
//!
//! Each LP produces a [`LocalReport`]; the orchestrator combines them with
//! per-link message accounting into a [`GlobalReport`]. Reports have two
//! serialized forms: a human-readable text block and a machine-readable
//! record file with one `lp_id,object_id,metric,value` row per statistic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub name: String,
    pub capacity: u32,
    pub busy_hours: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub kind: String,
    /// Entities that entered the block.
    pub entered: u64,
    /// Units those entities carried.
    pub units_in: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureReport {
    pub kind: String,
    pub count: u64,
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub lp_id: String,
    pub final_clock: SimTime,
    pub executed_events: u64,
    pub resources: Vec<ResourceReport>,
    pub blocks: Vec<BlockReport>,
    pub departures: Vec<DepartureReport>,
}

/// Message accounting for one directed link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub from: String,
    pub to: String,
    pub sent: u64,
    pub received: u64,
}

/// How an LP's run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EndStatus {
    Finished,
    Aborted,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub lps: Vec<LocalReport>,
    pub links: Vec<LinkStats>,
    pub statuses: Vec<(String, EndStatus)>,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("link {from}->{to}: sent {sent} messages but {received} were received")]
    Conservation {
        from: String,
        to: String,
        sent: u64,
        received: u64,
    },
}

impl GlobalReport {
    /// Every message sent on a link must have been received on it.
    pub fn check_conservation(&self) -> Result<(), ReportError> {
        for l in &self.links {
            if l.sent != l.received {
                return Err(ReportError::Conservation {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    sent: l.sent,
                    received: l.received,
                });
            }
        }
        Ok(())
    }

    pub fn lp(&self, id: &str) -> Option<&LocalReport> {
        self.lps.iter().find(|r| r.lp_id == id)
    }

    /// The machine-readable record form: a header row then one
    /// `lp_id,object_id,metric,value` row per statistic.
    pub fn to_records(&self) -> String {
        let mut out = String::from("lp_id,object_id,metric,value\n");
        let mut push = |lp: &str, obj: &str, metric: &str, value: String| {
            out.push_str(&format!("{lp},{obj},{metric},{value}\n"));
        };
        for lp in &self.lps {
            push(&lp.lp_id, "run", "final_clock", lp.final_clock.to_string());
            push(&lp.lp_id, "run", "executed_events", lp.executed_events.to_string());
            for r in &lp.resources {
                push(&lp.lp_id, &r.name, "capacity", r.capacity.to_string());
                push(&lp.lp_id, &r.name, "busy_hours", format!("{}", r.busy_hours));
                push(&lp.lp_id, &r.name, "utilization", format!("{}", r.utilization));
            }
            for b in &lp.blocks {
                push(&lp.lp_id, &b.name, "entered", b.entered.to_string());
                push(&lp.lp_id, &b.name, "units_in", b.units_in.to_string());
            }
            for d in &lp.departures {
                push(&lp.lp_id, "departures", &format!("count.{}", d.kind), d.count.to_string());
                push(&lp.lp_id, "departures", &format!("units.{}", d.kind), d.units.to_string());
            }
        }
        for l in &self.links {
            let obj = format!("{}->{}", l.from, l.to);
            push("links", &obj, "sent", l.sent.to_string());
            push("links", &obj, "received", l.received.to_string());
        }
        out
    }

    /// The human-readable form printed after a run.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for lp in &self.lps {
            out.push_str(&format!(
                "lp {} finished at {}h after {} events\n",
                lp.lp_id, lp.final_clock, lp.executed_events
            ));
            for r in &lp.resources {
                out.push_str(&format!(
                    "  resource {:<12} capacity {:<3} busy {:>10.2}h  utilization {:.3}\n",
                    r.name, r.capacity, r.busy_hours, r.utilization
                ));
            }
            for d in &lp.departures {
                out.push_str(&format!(
                    "  departed  {:<12} {:>8} entities  {:>12} units\n",
                    d.kind, d.count, d.units
                ));
            }
        }
        if !self.links.is_empty() {
            out.push_str("links:\n");
            for l in &self.links {
                out.push_str(&format!(
                    "  {} -> {}: sent {} received {}\n",
                    l.from, l.to, l.sent, l.received
                ));
            }
        }
        out.push_str(&format!("wall clock: {} ms\n", self.wall_clock_ms));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GlobalReport {
        GlobalReport {
            lps: vec![LocalReport {
                lp_id: "A".into(),
                final_clock: SimTime::new(100.0),
                executed_events: 12,
                resources: vec![ResourceReport {
                    name: "cell".into(),
                    capacity: 2,
                    busy_hours: 50.0,
                    utilization: 0.25,
                }],
                blocks: vec![],
                departures: vec![DepartureReport {
                    kind: "X".into(),
                    count: 3,
                    units: 3000,
                }],
            }],
            links: vec![LinkStats {
                from: "A".into(),
                to: "B".into(),
                sent: 3,
                received: 3,
            }],
            statuses: vec![("A".into(), EndStatus::Finished)],
            wall_clock_ms: 1,
        }
    }

    #[test]
    fn conservation_holds_and_fails() {
        let mut r = sample();
        assert!(r.check_conservation().is_ok());
        r.links[0].received = 2;
        assert!(matches!(
            r.check_conservation(),
            Err(ReportError::Conservation { sent: 3, received: 2, .. })
        ));
    }

    #[test]
    fn record_form_has_one_row_per_metric() {
        let r = sample();
        let records = r.to_records();
        let mut lines = records.lines();
        assert_eq!(lines.next(), Some("lp_id,object_id,metric,value"));
        assert!(records.contains("A,cell,utilization,0.25"));
        assert!(records.contains("A,departures,units.X,3000"));
        assert!(records.contains("links,A->B,sent,3"));
    }
}
