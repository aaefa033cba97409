//! The sequential discrete-event kernel.
//!
//! A kernel executes the block networks of one or more logical processes
//! (LPs) against a single event calendar. Distributed runs give each LP
//! its own kernel; the sequential oracle mode puts every LP into one
//! kernel. Both arrangements use the code in this module unchanged.
//!
//! # Event ordering
//!
//! The calendar pops events in ascending `(time, class, lp, key)` order.
//! `class` ranks port releases before departures before arrivals, so a
//! message injection always precedes internal work scheduled at the same
//! instant. `key` is a per-LP schedule counter for ordinary events; port
//! releases instead encode (source LP, link sequence number), which is a
//! property of the message itself rather than of when it happened to
//! arrive. The result is that the order of any single LP's events does
//! not depend on which other LPs share the calendar or on message arrival
//! timing, only on timestamps. That invariance is what lets a flattened
//! run reproduce a distributed run event for event.
//!
//! # Blocks
//!
//! * `Create` - generates one-unit entities on an inter-arrival
//!   distribution, starting at the first drawn inter-arrival time.
//! * `CreatePort` - generates a one-unit entity whenever a data message
//!   from its source LP is released into the kernel.
//! * `Process` - seizes a FIFO resource, holds the entity for a drawn
//!   service time, releases.
//! * `Batch` - accumulates incoming units and emits a single combined
//!   entity once the configured size is reached (the emitted entity
//!   carries the full accumulated count, so an oversized arrival passes
//!   straight through).
//! * `Separate` - adds a fixed unit count to each passing entity,
//!   reconstituting a batch that was sent as a single message.
//! * `PortSend` - hands the entity to the enclosing run as an outbound
//!   send request; the entity leaves this kernel.
//! * `Dispose` - terminal sink; counts departures per entity kind.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::Dist;
use crate::report::{BlockReport, DepartureReport, LocalReport, ResourceReport};
use crate::rng::RngStream;
use crate::time::SimTime;

/// Largest link sequence number representable inside a port-release tie
/// key (see [`port_release_key`]).
pub const MAX_LINK_SEQ: u64 = (1 << 40) - 1;

/// Execution priority of an event. Lower ranks run first at equal
/// timestamps: message injections, then service completions, then entity
/// movements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventClass {
    PortRelease = 0,
    Departure = 1,
    Arrival = 2,
}

/// A unit batch flowing through the block network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub kind: String,
    pub units: u64,
}

#[derive(Debug, Clone)]
pub enum Payload {
    /// Create firings and port releases materialize their entity on
    /// execution.
    None,
    /// An entity in motion between blocks.
    Entity(Entity),
    /// An entity completing service; `started` is when it seized the
    /// resource, kept for busy-time accounting.
    Service { entity: Entity, started: SimTime },
}

/// A calendar entry.
#[derive(Debug, Clone)]
pub struct Event {
    pub time: SimTime,
    pub class: EventClass,
    /// Owning LP, as an index into the kernel's LP table.
    pub lp: u32,
    /// Tie-break key: schedule counter, or for port releases the value of
    /// [`port_release_key`].
    pub key: u64,
    /// Target block, as an index into the owning LP's block list.
    pub target: u32,
    pub payload: Payload,
}

impl Event {
    fn order_key(&self) -> (SimTime, EventClass, u32, u64) {
        (self.time, self.class, self.lp, self.key)
    }
}

/// Tie-break key for a port-release event. Encodes the sending LP and the
/// per-link data sequence number, so the key is fixed by message identity.
pub fn port_release_key(source_lp: u32, link_seq: u64) -> u64 {
    assert!(link_seq <= MAX_LINK_SEQ, "link sequence number overflow");
    ((source_lp as u64) << 40) | link_seq
}

struct CalEntry(Event);

impl PartialEq for CalEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.order_key() == other.0.order_key()
    }
}
impl Eq for CalEntry {}
impl PartialOrd for CalEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CalEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.order_key().cmp(&other.0.order_key())
    }
}

/// Static description of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    /// Index of the successor block within the same LP. `None` for sinks
    /// (`PortSend`, `Dispose`), mandatory for everything else.
    pub successor: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    Create { entity_kind: String, interarrival: Dist },
    CreatePort { source: String, entity_kind: String },
    Process { resource: u32, service: Dist },
    Batch { size: u64 },
    Separate { add: u64 },
    PortSend { dest: String },
    Dispose,
}

impl BlockKind {
    pub fn is_sink(&self) -> bool {
        matches!(self, BlockKind::PortSend { .. } | BlockKind::Dispose)
    }

    pub fn label(&self) -> &'static str {
        match self {
            BlockKind::Create { .. } => "create",
            BlockKind::CreatePort { .. } => "createport",
            BlockKind::Process { .. } => "process",
            BlockKind::Batch { .. } => "batch",
            BlockKind::Separate { .. } => "separate",
            BlockKind::PortSend { .. } => "portsend",
            BlockKind::Dispose => "dispose",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDef {
    pub name: String,
    pub capacity: u32,
}

/// One LP's block network. `index` is the LP's position in the scenario's
/// declaration order and must be the same in every run mode, because it
/// participates in event ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpModel {
    pub index: u32,
    pub id: String,
    pub blocks: Vec<Block>,
    pub resources: Vec<ResourceDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelModel {
    pub lps: Vec<LpModel>,
}

/// Outbound message request produced by a `PortSend` firing. The layer
/// driving the kernel decides what "sending" means (a queue frame in
/// distributed runs, an internal delivery in flattened runs).
#[derive(Debug, Clone, PartialEq)]
pub struct SendRequest {
    pub from_lp: u32,
    pub from_block: u32,
    pub dest: String,
    pub units: u64,
    pub at: SimTime,
}

/// One executed event, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: SimTime,
    pub lp: String,
    pub block: String,
    pub entity_kind: String,
    pub units: u64,
    /// Per-LP execution counter: the n-th event this LP executed.
    pub seq: u64,
}

impl TraceRecord {
    /// The pinned single-line form: 17-significant-digit timestamp plus
    /// space-separated key=value fields.
    pub fn to_line(&self) -> String {
        format!(
            "t={} lp={} block={} entity_kind={} units={} seq={}",
            self.t.to_trace_field(),
            self.lp,
            self.block,
            self.entity_kind,
            self.units,
            self.seq
        )
    }

    pub fn parse_line(line: &str) -> Option<TraceRecord> {
        let mut t = None;
        let mut lp = None;
        let mut block = None;
        let mut kind = None;
        let mut units = None;
        let mut seq = None;
        for field in line.split_whitespace() {
            let (k, v) = field.split_once('=')?;
            match k {
                "t" => t = Some(SimTime::new(v.parse().ok()?)),
                "lp" => lp = Some(v.to_string()),
                "block" => block = Some(v.to_string()),
                "entity_kind" => kind = Some(v.to_string()),
                "units" => units = Some(v.parse().ok()?),
                "seq" => seq = Some(v.parse().ok()?),
                _ => return None,
            }
        }
        Some(TraceRecord {
            t: t?,
            lp: lp?,
            block: block?,
            entity_kind: kind?,
            units: units?,
            seq: seq?,
        })
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("lp {lp}: duplicate block name {name:?}")]
    DuplicateBlock { lp: String, name: String },
    #[error("lp {lp}: block {block:?} references successor index {index} out of range")]
    BadSuccessor { lp: String, block: String, index: u32 },
    #[error("lp {lp}: sink block {block:?} must not have a successor")]
    SinkWithSuccessor { lp: String, block: String },
    #[error("lp {lp}: block {block:?} needs a successor")]
    MissingSuccessor { lp: String, block: String },
    #[error("lp {lp}: block {block:?} references resource index {index} out of range")]
    BadResource { lp: String, block: String, index: u32 },
    #[error("lp {lp}: block {block:?} has invalid parameters: {detail}")]
    BadParams { lp: String, block: String, detail: String },
    #[error("lp {lp}: resource {name:?} must have capacity >= 1")]
    BadCapacity { lp: String, name: String },
    #[error("lp indices must be distinct")]
    DuplicateLpIndex,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("event scheduled at {at:?} before current clock {clock:?}")]
    PastEvent { at: SimTime, clock: SimTime },
    #[error("clock regression: popped event at {to:?} behind clock {from:?}")]
    ClockRegression { from: SimTime, to: SimTime },
    #[error("event targets lp index {lp} out of range")]
    BadLp { lp: u32 },
    #[error("event targets block index {block} out of range in lp {lp}")]
    BadBlock { lp: String, block: u32 },
    #[error("event class {class:?} cannot fire block {block} ({kind})")]
    BadEvent {
        class: EventClass,
        block: String,
        kind: &'static str,
    },
    #[error("resource FIFO order violated at {resource}")]
    FifoViolation { resource: String },
}

struct BlockState {
    def: Block,
    rng: RngStream,
    batch_acc: u64,
    batch_kind: String,
    entered: u64,
    units_in: u64,
}

struct QueueEntry {
    block: u32,
    entity: Entity,
    arrival_tag: u64,
}

struct ResourceState {
    def: ResourceDef,
    in_service: u32,
    busy_hours: f64,
    queue: VecDeque<QueueEntry>,
    arrivals: u64,
    last_served: u64,
}

struct LpState {
    id: String,
    blocks: Vec<BlockState>,
    resources: Vec<ResourceState>,
    schedule_ctr: u64,
    exec_ctr: u64,
    departures: BTreeMap<String, (u64, u64)>,
}

/// The event calendar plus the state of every hosted LP.
pub struct Kernel {
    /// Maps kernel-local LP slot -> state. Slots are addressed by the LP's
    /// scenario index through `lp_slot`.
    lps: Vec<LpState>,
    lp_slot: BTreeMap<u32, usize>,
    calendar: BinaryHeap<Reverse<CalEntry>>,
    clock: SimTime,
    executed: u64,
    trace: Option<Vec<TraceRecord>>,
}

impl Kernel {
    pub fn build(
        model: &KernelModel,
        master_seed: u64,
        trace_enabled: bool,
    ) -> Result<Kernel, BuildError> {
        let mut lps = Vec::with_capacity(model.lps.len());
        let mut lp_slot = BTreeMap::new();
        for lp in &model.lps {
            if lp_slot.insert(lp.index, lps.len()).is_some() {
                return Err(BuildError::DuplicateLpIndex);
            }
            let mut names = std::collections::HashSet::new();
            for r in &lp.resources {
                if r.capacity == 0 {
                    return Err(BuildError::BadCapacity {
                        lp: lp.id.clone(),
                        name: r.name.clone(),
                    });
                }
            }
            let mut blocks = Vec::with_capacity(lp.blocks.len());
            for b in &lp.blocks {
                if !names.insert(b.name.clone()) {
                    return Err(BuildError::DuplicateBlock {
                        lp: lp.id.clone(),
                        name: b.name.clone(),
                    });
                }
                match (&b.successor, b.kind.is_sink()) {
                    (Some(_), true) => {
                        return Err(BuildError::SinkWithSuccessor {
                            lp: lp.id.clone(),
                            block: b.name.clone(),
                        })
                    }
                    (None, false) => {
                        return Err(BuildError::MissingSuccessor {
                            lp: lp.id.clone(),
                            block: b.name.clone(),
                        })
                    }
                    (Some(s), false) if *s as usize >= lp.blocks.len() => {
                        return Err(BuildError::BadSuccessor {
                            lp: lp.id.clone(),
                            block: b.name.clone(),
                            index: *s,
                        })
                    }
                    _ => {}
                }
                let check_dist = |d: &Dist| {
                    d.validate().map_err(|e| BuildError::BadParams {
                        lp: lp.id.clone(),
                        block: b.name.clone(),
                        detail: e.to_string(),
                    })
                };
                match &b.kind {
                    BlockKind::Create { interarrival, .. } => check_dist(interarrival)?,
                    BlockKind::Process { resource, service } => {
                        check_dist(service)?;
                        if *resource as usize >= lp.resources.len() {
                            return Err(BuildError::BadResource {
                                lp: lp.id.clone(),
                                block: b.name.clone(),
                                index: *resource,
                            });
                        }
                    }
                    BlockKind::Batch { size } if *size == 0 => {
                        return Err(BuildError::BadParams {
                            lp: lp.id.clone(),
                            block: b.name.clone(),
                            detail: "batch size must be >= 1".into(),
                        })
                    }
                    _ => {}
                }
                blocks.push(BlockState {
                    rng: RngStream::for_block(master_seed, &lp.id, &b.name),
                    def: b.clone(),
                    batch_acc: 0,
                    batch_kind: String::new(),
                    entered: 0,
                    units_in: 0,
                });
            }
            lps.push(LpState {
                id: lp.id.clone(),
                blocks,
                resources: lp
                    .resources
                    .iter()
                    .map(|r| ResourceState {
                        def: r.clone(),
                        in_service: 0,
                        busy_hours: 0.0,
                        queue: VecDeque::new(),
                        arrivals: 0,
                        last_served: 0,
                    })
                    .collect(),
                schedule_ctr: 0,
                exec_ctr: 0,
                departures: BTreeMap::new(),
            });
        }
        Ok(Kernel {
            lps,
            lp_slot,
            calendar: BinaryHeap::new(),
            clock: SimTime::ZERO,
            executed: 0,
            trace: trace_enabled.then(Vec::new),
        })
    }

    /// Schedules the first firing of every `Create` block. Call once
    /// before executing.
    pub fn init_sources(&mut self) {
        let indices: Vec<u32> = self.lp_slot.keys().copied().collect();
        for lp_index in indices {
            let slot = self.lp_slot[&lp_index];
            for b in 0..self.lps[slot].blocks.len() {
                if let BlockKind::Create { interarrival, .. } =
                    self.lps[slot].blocks[b].def.kind.clone()
                {
                    let dt = interarrival.sample(&mut self.lps[slot].blocks[b].rng);
                    let key = self.next_schedule_key(slot);
                    self.push(Event {
                        time: SimTime::new(dt),
                        class: EventClass::Arrival,
                        lp: lp_index,
                        key,
                        target: b as u32,
                        payload: Payload::None,
                    });
                }
            }
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn executed_events(&self) -> u64 {
        self.executed
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.calendar.peek().map(|Reverse(e)| e.0.time)
    }

    pub fn lp_id(&self, lp_index: u32) -> Option<&str> {
        self.lp_slot
            .get(&lp_index)
            .map(|&s| self.lps[s].id.as_str())
    }

    /// Adds an event to the calendar. Fails if the event lies in the past
    /// or targets something that does not exist.
    pub fn schedule(&mut self, ev: Event) -> Result<(), KernelError> {
        if ev.time < self.clock {
            return Err(KernelError::PastEvent {
                at: ev.time,
                clock: self.clock,
            });
        }
        let slot = *self
            .lp_slot
            .get(&ev.lp)
            .ok_or(KernelError::BadLp { lp: ev.lp })?;
        if ev.target as usize >= self.lps[slot].blocks.len() {
            return Err(KernelError::BadBlock {
                lp: self.lps[slot].id.clone(),
                block: ev.target,
            });
        }
        self.push(ev);
        Ok(())
    }

    /// Injects one entity worth of a received data message: schedules a
    /// port release that will fire the given `CreatePort` block at
    /// `release_time`. `key` must come from [`port_release_key`] so that
    /// the release's position among same-time events is a function of the
    /// message, not of arrival timing.
    pub fn release_port_entity(
        &mut self,
        lp_index: u32,
        port_block: u32,
        release_time: SimTime,
        key: u64,
    ) -> Result<(), KernelError> {
        self.schedule(Event {
            time: release_time,
            class: EventClass::PortRelease,
            lp: lp_index,
            key,
            target: port_block,
            payload: Payload::None,
        })
    }

    /// Pops and executes the earliest event. Any outbound sends it causes
    /// are appended to `sends`. Returns the executed event's time and LP,
    /// or `None` when the calendar is empty.
    pub fn execute_next(
        &mut self,
        sends: &mut Vec<SendRequest>,
    ) -> Result<Option<(SimTime, u32)>, KernelError> {
        let Some(Reverse(entry)) = self.calendar.pop() else {
            return Ok(None);
        };
        let ev = entry.0;
        if ev.time < self.clock {
            return Err(KernelError::ClockRegression {
                from: self.clock,
                to: ev.time,
            });
        }
        self.clock = ev.time;
        self.executed += 1;
        let lp = ev.lp;
        self.fire(ev, sends)?;
        Ok(Some((self.clock, lp)))
    }

    fn push(&mut self, ev: Event) {
        self.calendar.push(Reverse(CalEntry(ev)));
    }

    fn next_schedule_key(&mut self, slot: usize) -> u64 {
        self.lps[slot].schedule_ctr += 1;
        self.lps[slot].schedule_ctr
    }

    /// Routes an entity to the successor of `from`, as a same-time arrival.
    fn route(&mut self, lp_index: u32, slot: usize, from: u32, entity: Entity) {
        let succ = self.lps[slot].blocks[from as usize]
            .def
            .successor
            .expect("non-sink blocks have a successor (validated at build)");
        let key = self.next_schedule_key(slot);
        self.push(Event {
            time: self.clock,
            class: EventClass::Arrival,
            lp: lp_index,
            key,
            target: succ,
            payload: Payload::Entity(entity),
        });
    }

    fn record(&mut self, slot: usize, block: u32, entity: &Entity) {
        self.lps[slot].exec_ctr += 1;
        let seq = self.lps[slot].exec_ctr;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                t: self.clock,
                lp: self.lps[slot].id.clone(),
                block: self.lps[slot].blocks[block as usize].def.name.clone(),
                entity_kind: entity.kind.clone(),
                units: entity.units,
                seq,
            });
        }
    }

    fn note_entry(&mut self, slot: usize, block: u32, units: u64) {
        let b = &mut self.lps[slot].blocks[block as usize];
        b.entered += 1;
        b.units_in += units;
    }

    /// Seizes the resource for `entity` at block `block`, or queues it.
    fn seize_or_enqueue(
        &mut self,
        lp_index: u32,
        slot: usize,
        block: u32,
        entity: Entity,
    ) -> Result<(), KernelError> {
        let (res_idx, service) = match &self.lps[slot].blocks[block as usize].def.kind {
            BlockKind::Process { resource, service } => (*resource as usize, *service),
            _ => unreachable!("seize_or_enqueue only called for process blocks"),
        };
        let res = &mut self.lps[slot].resources[res_idx];
        res.arrivals += 1;
        let tag = res.arrivals;
        if res.in_service < res.def.capacity {
            res.in_service += 1;
            if tag != res.last_served + 1 {
                return Err(KernelError::FifoViolation {
                    resource: res.def.name.clone(),
                });
            }
            res.last_served = tag;
            let dur = service.sample(&mut self.lps[slot].blocks[block as usize].rng);
            let started = self.clock;
            let key = self.next_schedule_key(slot);
            self.push(Event {
                time: SimTime::new(started.hours() + dur),
                class: EventClass::Departure,
                lp: lp_index,
                key,
                target: block,
                payload: Payload::Service { entity, started },
            });
        } else {
            res.queue.push_back(QueueEntry {
                block,
                entity,
                arrival_tag: tag,
            });
        }
        Ok(())
    }

    fn fire(&mut self, ev: Event, sends: &mut Vec<SendRequest>) -> Result<(), KernelError> {
        let slot = *self
            .lp_slot
            .get(&ev.lp)
            .ok_or(KernelError::BadLp { lp: ev.lp })?;
        if ev.target as usize >= self.lps[slot].blocks.len() {
            return Err(KernelError::BadBlock {
                lp: self.lps[slot].id.clone(),
                block: ev.target,
            });
        }
        let kind = self.lps[slot].blocks[ev.target as usize].def.kind.clone();
        let bad = |class: EventClass, kind: &'static str, b: &str| KernelError::BadEvent {
            class,
            block: b.to_string(),
            kind,
        };
        match (&kind, ev.class, ev.payload) {
            // A create block firing: materialize the entity, reschedule.
            (BlockKind::Create { entity_kind, interarrival }, EventClass::Arrival, Payload::None) => {
                let entity = Entity {
                    kind: entity_kind.clone(),
                    units: 1,
                };
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                let dt = interarrival.sample(&mut self.lps[slot].blocks[ev.target as usize].rng);
                let key = self.next_schedule_key(slot);
                self.push(Event {
                    time: SimTime::new(self.clock.hours() + dt),
                    class: EventClass::Arrival,
                    lp: ev.lp,
                    key,
                    target: ev.target,
                    payload: Payload::None,
                });
                self.route(ev.lp, slot, ev.target, entity);
            }
            (BlockKind::CreatePort { entity_kind, .. }, EventClass::PortRelease, Payload::None) => {
                let entity = Entity {
                    kind: entity_kind.clone(),
                    units: 1,
                };
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                self.route(ev.lp, slot, ev.target, entity);
            }
            (BlockKind::Process { .. }, EventClass::Arrival, Payload::Entity(entity)) => {
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                self.seize_or_enqueue(ev.lp, slot, ev.target, entity)?;
            }
            (BlockKind::Process { resource, .. }, EventClass::Departure, Payload::Service { entity, started }) => {
                let res_idx = *resource as usize;
                {
                    let res = &mut self.lps[slot].resources[res_idx];
                    res.busy_hours += self.clock.hours() - started.hours();
                    res.in_service -= 1;
                }
                self.record(slot, ev.target, &entity);
                // Pull the next waiting entity, if any, before routing the
                // finished one; either order is deterministic, this one
                // keeps the resource busy without a gap.
                let next = self.lps[slot].resources[res_idx].queue.pop_front();
                if let Some(q) = next {
                    let res = &mut self.lps[slot].resources[res_idx];
                    if q.arrival_tag != res.last_served + 1 {
                        return Err(KernelError::FifoViolation {
                            resource: res.def.name.clone(),
                        });
                    }
                    res.last_served = q.arrival_tag;
                    res.in_service += 1;
                    let service = match &self.lps[slot].blocks[q.block as usize].def.kind {
                        BlockKind::Process { service, .. } => *service,
                        _ => unreachable!("queue entries reference process blocks"),
                    };
                    let dur = service.sample(&mut self.lps[slot].blocks[q.block as usize].rng);
                    let started = self.clock;
                    let key = self.next_schedule_key(slot);
                    self.push(Event {
                        time: SimTime::new(started.hours() + dur),
                        class: EventClass::Departure,
                        lp: ev.lp,
                        key,
                        target: q.block,
                        payload: Payload::Service {
                            entity: q.entity,
                            started,
                        },
                    });
                }
                self.route(ev.lp, slot, ev.target, entity);
            }
            (BlockKind::Batch { size }, EventClass::Arrival, Payload::Entity(entity)) => {
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                let b = &mut self.lps[slot].blocks[ev.target as usize];
                b.batch_acc += entity.units;
                b.batch_kind = entity.kind;
                if b.batch_acc >= *size {
                    let combined = Entity {
                        kind: b.batch_kind.clone(),
                        units: b.batch_acc,
                    };
                    b.batch_acc = 0;
                    self.route(ev.lp, slot, ev.target, combined);
                }
            }
            (BlockKind::Separate { add }, EventClass::Arrival, Payload::Entity(mut entity)) => {
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                entity.units += add;
                self.route(ev.lp, slot, ev.target, entity);
            }
            (BlockKind::PortSend { dest }, EventClass::Arrival, Payload::Entity(entity)) => {
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                sends.push(SendRequest {
                    from_lp: ev.lp,
                    from_block: ev.target,
                    dest: dest.clone(),
                    units: entity.units,
                    at: self.clock,
                });
            }
            (BlockKind::Dispose, EventClass::Arrival, Payload::Entity(entity)) => {
                self.record(slot, ev.target, &entity);
                self.note_entry(slot, ev.target, entity.units);
                let d = self.lps[slot]
                    .departures
                    .entry(entity.kind)
                    .or_insert((0, 0));
                d.0 += 1;
                d.1 += entity.units;
            }
            (k, class, _) => {
                let name = self.lps[slot].blocks[ev.target as usize].def.name.clone();
                return Err(bad(class, k.label(), &name));
            }
        }
        Ok(())
    }

    /// Statistics for one LP over a run of length `elapsed`. Utilization
    /// is busy time over capacity-hours; services still in progress when
    /// the run ends are not counted busy.
    pub fn report(&self, lp_index: u32, elapsed: SimTime) -> Option<LocalReport> {
        let slot = *self.lp_slot.get(&lp_index)?;
        let lp = &self.lps[slot];
        let denom = elapsed.hours();
        Some(LocalReport {
            lp_id: lp.id.clone(),
            final_clock: elapsed,
            executed_events: lp.exec_ctr,
            resources: lp
                .resources
                .iter()
                .map(|r| ResourceReport {
                    name: r.def.name.clone(),
                    capacity: r.def.capacity,
                    busy_hours: r.busy_hours,
                    utilization: if denom > 0.0 {
                        r.busy_hours / (r.def.capacity as f64 * denom)
                    } else {
                        0.0
                    },
                })
                .collect(),
            blocks: lp
                .blocks
                .iter()
                .map(|b| BlockReport {
                    name: b.def.name.clone(),
                    kind: b.def.kind.label().to_string(),
                    entered: b.entered,
                    units_in: b.units_in,
                })
                .collect(),
            departures: lp
                .departures
                .iter()
                .map(|(kind, (count, units))| DepartureReport {
                    kind: kind.clone(),
                    count: *count,
                    units: *units,
                })
                .collect(),
        })
    }

    /// Consumes the recorded trace. Empty if tracing was disabled.
    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }
}
