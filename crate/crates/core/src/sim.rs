//! The network simulation: DCF contention, colour-aware carrier sensing,
//! SINR reception, uplink traffic, beacons and per-step controller updates.
//!
//! Propagation delay is zero, so stations whose backoff ends in the same
//! slot transmit at the same instant and collide. Reception locks onto the
//! first deferring preamble a node hears while idle (the strongest, if
//! several start together); anything starting later only adds interference. A frame is decoded if its RSSI meets the MCS
//! sensitivity and the SINR against the worst interference seen during the
//! frame meets the MCS floor.

use rand::Rng;

use crate::config::SimConfig;
use crate::control::{Controller, ObssPdBounds};
use crate::engine::{EventHandle, EventQueue, Micros, RngStreams};
use crate::error::{ConfigError, SimError};
use crate::mac::{AckResult, MacState, Phase};
use crate::metrics::MetricsLedger;
use crate::phy::{detect_preamble, reception_outcome, Outcome};
use crate::rate::{McsEwma, RateSelector};
use crate::scenario::{next_arrival, NodeSpec, ScenarioSpec, Topology, TrafficSource};
use crate::trace::{FrameKind, FrameOutcome, FrameRecord, Observation, ObservationRecord, TraceRow};
use crate::units::Dbm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub event_log: bool,
    pub record_observations: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            event_log: true,
            record_observations: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    BackoffDone(usize),
    TxEnd(u64),
    AckStart { ap: usize, sta: usize },
    AckTimeout(usize),
    NavEnd,
    Arrival(usize),
    BeaconDue(usize),
    Step,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    id: u64,
    src: usize,
    dst: Option<usize>,
    color: u8,
    kind: FrameKind,
    mcs: u8,
    tx_power: Dbm,
    start: Micros,
    end: Micros,
    payload: u64,
    delivered: bool,
}

#[derive(Debug, Clone, Copy)]
struct Lock {
    frame: u64,
    rssi: Dbm,
    worst_interference_mw: f64,
}

/// Per-node counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub attempts: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
struct NodeState {
    spec: NodeSpec,
    controller: Controller,
    rate: Option<RateSelector>,
    mcs_ewma: McsEwma,
    mac: MacState,
    backoff: Option<(Micros, EventHandle)>,
    tx: Option<u64>,
    lock: Option<Lock>,
    nav_until: Micros,
    ack_timeout: Option<EventHandle>,
    last_mcs: u8,
    queued: u32,
    next_arrival: f64,
    beacon_pending: bool,
    stats: NodeStats,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: MetricsLedger,
    pub trace: Vec<TraceRow>,
    pub events: Vec<FrameRecord>,
    pub observations: Vec<ObservationRecord>,
    pub stats: Vec<NodeStats>,
    pub topology: Topology,
}

pub struct Simulation {
    cfg: SimConfig,
    opts: SimOptions,
    topology: Topology,
    bounds: ObssPdBounds,
    queue: EventQueue<Ev>,
    nodes: Vec<NodeState>,
    /// Path loss in dB between every node pair.
    loss: Vec<Vec<f64>>,
    active: Vec<Frame>,
    next_frame_id: u64,
    rng: RngStreams,
    traffic: TrafficSource,
    ack_us: Micros,
    metrics: MetricsLedger,
    trace: Vec<TraceRow>,
    events: Vec<FrameRecord>,
    observations: Vec<ObservationRecord>,
    steps_done: u64,
    n_steps: u64,
}

/// Builds and runs a scenario to its horizon.
pub fn run(spec: &ScenarioSpec, opts: SimOptions) -> Result<SimOutput, SimError> {
    let mut sim = Simulation::new(spec, opts)?;
    sim.run_to_end()?;
    Ok(sim.finish())
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec, opts: SimOptions) -> Result<Self, SimError> {
        let topology = spec.topology()?;
        let cfg = spec.sim.clone();
        let bounds = spec.bounds()?;
        let traffic = TrafficSource::new(&spec.traffic)?;
        let mut rng = RngStreams::new(spec.seed);
        let rates = cfg.mcs.rates();
        let nodes = topology
            .nodes
            .iter()
            .map(|n| -> Result<NodeState, ConfigError> {
                let rate = if n.is_ap {
                    None
                } else {
                    Some(RateSelector::new(spec.rate_selector, rates.clone(), &cfg.rate)?)
                };
                Ok(NodeState {
                    spec: n.clone(),
                    controller: Controller::new(n.controller, &cfg.controllers, bounds)?,
                    rate,
                    mcs_ewma: McsEwma::new(cfg.controllers.racebot.alpha),
                    mac: MacState::new(&cfg.dcf),
                    backoff: None,
                    tx: None,
                    lock: None,
                    nav_until: 0,
                    ack_timeout: None,
                    last_mcs: 0,
                    queued: 0,
                    next_arrival: 0.0,
                    beacon_pending: false,
                    stats: NodeStats::default(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let loss = topology
            .nodes
            .iter()
            .map(|a| {
                topology
                    .nodes
                    .iter()
                    .map(|b| if a.id == b.id { 0.0 } else { cfg.propagation.loss(a.position.distance(&b.position)) })
                    .collect()
            })
            .collect();
        let ack_us = cfg.phy.airtime_us(cfg.dcf.ack_bytes, cfg.mcs.lowest().rate_mbps);
        let n_steps = cfg.n_steps();
        let metrics = MetricsLedger::new(nodes.len(), cfg.t_step_us());

        let mut queue = EventQueue::new();
        let mut nodes = nodes;
        for n in nodes.iter_mut() {
            if n.spec.is_ap {
                let offset = rng.traffic.random_range(0..cfg.dcf.beacon_interval_us);
                queue.schedule(offset, Ev::BeaconDue(n.spec.id))?;
            } else {
                n.next_arrival = next_arrival(&traffic, &mut rng.traffic);
                queue.schedule(n.next_arrival.ceil() as Micros, Ev::Arrival(n.spec.id))?;
            }
        }
        queue.schedule(cfg.t_step_us(), Ev::Step)?;

        Ok(Self {
            cfg,
            opts,
            topology,
            bounds,
            queue,
            nodes,
            loss,
            active: Vec::new(),
            next_frame_id: 0,
            rng,
            traffic,
            ack_us,
            metrics,
            trace: Vec::new(),
            events: Vec::new(),
            observations: Vec::new(),
            steps_done: 0,
            n_steps,
        })
    }

    pub fn now(&self) -> Micros {
        self.queue.now()
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.n_steps
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn metrics(&self) -> &MetricsLedger {
        &self.metrics
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn events(&self) -> &[FrameRecord] {
        &self.events
    }

    /// Number of payloads waiting at station `node`, including the one in
    /// service.
    pub fn queue_len(&self, node: usize) -> u32 {
        self.nodes[node].queued
    }

    pub fn controller(&self, node: usize) -> &Controller {
        &self.nodes[node].controller
    }

    /// Runs until `steps` more controller steps have completed or the
    /// horizon is reached.
    pub fn advance_steps(&mut self, steps: u64) -> Result<(), SimError> {
        let target = (self.steps_done + steps).min(self.n_steps);
        while self.steps_done < target {
            let Some((at, ev)) = self.queue.pop() else {
                return Err(SimError::Invariant {
                    at: self.now(),
                    what: "event queue drained before the horizon".into(),
                });
            };
            self.handle(at, ev)?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        self.advance_steps(self.n_steps)
    }

    pub fn finish(self) -> SimOutput {
        SimOutput {
            metrics: self.metrics,
            trace: self.trace,
            events: self.events,
            observations: self.observations,
            stats: self.nodes.iter().map(|n| n.stats).collect(),
            topology: self.topology,
        }
    }

    fn handle(&mut self, now: Micros, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::BackoffDone(n) => self.on_backoff_done(n, now)?,
            Ev::TxEnd(id) => self.on_tx_end(id, now)?,
            Ev::AckStart { ap, sta } => self.on_ack_start(ap, sta, now)?,
            Ev::AckTimeout(n) => {
                self.nodes[n].ack_timeout = None;
                self.finish_attempt(n, false, now)?;
            }
            Ev::NavEnd => {}
            Ev::Arrival(n) => {
                self.refill(n, now);
                let node = &mut self.nodes[n];
                if node.queued > 0 && node.mac.phase == Phase::Idle {
                    self.start_contention(n);
                } else if node.queued == 0 {
                    let at = (node.next_arrival.ceil() as Micros).max(now + 1);
                    self.queue.schedule(at, Ev::Arrival(n))?;
                }
            }
            Ev::BeaconDue(n) => {
                self.queue.schedule_in(self.cfg.dcf.beacon_interval_us, Ev::BeaconDue(n));
                let node = &mut self.nodes[n];
                if !node.beacon_pending {
                    node.beacon_pending = true;
                    if node.mac.phase == Phase::Idle {
                        self.start_contention(n);
                    }
                }
            }
            Ev::Step => {
                self.on_step(now)?;
                return Ok(());
            }
        }
        self.refresh_cca(now)
    }

    fn rssi(&self, frame: &Frame, at: usize) -> Dbm {
        frame.tx_power - self.loss[frame.src][at]
    }

    /// Power at `n` from every frame on the air except `skip` and the node's own.
    fn interference_mw(&self, n: usize, skip: Option<u64>) -> f64 {
        self.active
            .iter()
            .filter(|f| f.src != n && Some(f.id) != skip)
            .map(|f| self.rssi(f, n).to_mw())
            .sum()
    }

    fn is_busy(&self, n: usize, now: Micros) -> bool {
        let node = &self.nodes[n];
        node.tx.is_some()
            || node.lock.is_some()
            || node.nav_until > now
            || Dbm::from_mw(self.interference_mw(n, None)) >= Dbm(self.cfg.phy.cca_ed_dbm)
    }

    /// Pauses countdowns of nodes that now sense the medium busy and
    /// restarts those that sense it idle. A countdown ending right now is
    /// left alone: that node transmits in this slot regardless.
    fn refresh_cca(&mut self, now: Micros) -> Result<(), SimError> {
        for n in 0..self.nodes.len() {
            match self.nodes[n].mac.phase {
                Phase::Backoff { .. } => {
                    if self.is_busy(n, now) {
                        let node = &mut self.nodes[n];
                        if let Some((end, handle)) = node.backoff {
                            if end != now {
                                self.queue.cancel(handle);
                                node.backoff = None;
                                node.mac.pause(now, &self.cfg.dcf);
                            }
                        }
                    }
                }
                Phase::Deferring { .. } => {
                    if !self.is_busy(n, now) {
                        let end = self.nodes[n].mac.resume(now, &self.cfg.dcf).expect("deferring");
                        let handle = self.queue.schedule(end, Ev::BackoffDone(n))?;
                        self.nodes[n].backoff = Some((end, handle));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn start_contention(&mut self, n: usize) {
        let cw = self.nodes[n].mac.cw;
        let slots = self.rng.backoff.random_range(0..=cw);
        self.nodes[n].mac.phase = Phase::Deferring { slots };
    }

    /// Moves arrivals up to `now` into the station queue. Arrivals that find
    /// the queue full are lost; the process then restarts from `now`, which
    /// is exact for Poisson arrivals.
    fn refill(&mut self, n: usize, now: Micros) {
        let cap = self.cfg.dcf.queue_capacity;
        let node = &mut self.nodes[n];
        let now_f = now as f64;
        while node.queued < cap && node.next_arrival <= now_f {
            node.queued += 1;
            node.next_arrival += next_arrival(&self.traffic, &mut self.rng.traffic);
        }
        if node.queued == cap && node.next_arrival <= now_f {
            node.next_arrival = now_f + next_arrival(&self.traffic, &mut self.rng.traffic);
        }
    }

    fn record_observation(&mut self, now: Micros, node: usize, observation: Observation) {
        if self.opts.record_observations {
            self.observations.push(ObservationRecord {
                time_us: now,
                node,
                observation,
            });
        }
    }

    fn on_backoff_done(&mut self, n: usize, now: Micros) -> Result<(), SimError> {
        self.nodes[n].backoff = None;
        self.nodes[n].mac.phase = Phase::Transmitting;
        let phy = self.cfg.phy;
        let frame = if self.nodes[n].spec.is_ap {
            let mcs0 = self.cfg.mcs.lowest();
            Frame {
                id: 0,
                src: n,
                dst: None,
                color: self.nodes[n].spec.color.value(),
                kind: FrameKind::Beacon,
                mcs: 0,
                tx_power: self.bounds.txpow_ref,
                start: now,
                end: now + phy.airtime_us(self.cfg.dcf.beacon_bytes, mcs0.rate_mbps),
                payload: 0,
                delivered: false,
            }
        } else {
            let node = &mut self.nodes[n];
            let mcs = node.rate.as_ref().expect("stations select rates").pick(&mut self.rng.rate);
            node.mcs_ewma.record(mcs);
            node.last_mcs = mcs;
            node.stats.attempts += 1;
            let payload = self.traffic.payload_bytes;
            let rate = self.cfg.mcs.get(mcs).rate_mbps;
            Frame {
                id: 0,
                src: n,
                dst: Some(node.spec.ap),
                color: node.spec.color.value(),
                kind: FrameKind::Data,
                mcs,
                tx_power: node.controller.tx_power(),
                start: now,
                end: now + phy.airtime_us(payload + self.cfg.dcf.mac_overhead_bytes, rate),
                payload,
                delivered: false,
            }
        };
        self.start_frame(frame, now)
    }

    fn on_ack_start(&mut self, ap: usize, sta: usize, now: Micros) -> Result<(), SimError> {
        if self.nodes[ap].tx.is_some() {
            return Ok(());
        }
        let node = &self.nodes[ap];
        let frame = Frame {
            id: 0,
            src: ap,
            dst: Some(sta),
            color: node.spec.color.value(),
            kind: FrameKind::Ack,
            mcs: 0,
            tx_power: node.controller.tx_power(),
            start: now,
            end: now + self.ack_us,
            payload: 0,
            delivered: false,
        };
        self.start_frame(frame, now)
    }

    fn start_frame(&mut self, mut frame: Frame, now: Micros) -> Result<(), SimError> {
        frame.id = self.next_frame_id;
        self.next_frame_id += 1;
        let src = frame.src;
        self.nodes[src].lock = None;
        self.nodes[src].tx = Some(frame.id);
        self.active.push(frame);
        self.queue.schedule(frame.end, Ev::TxEnd(frame.id))?;

        let pd = Dbm(self.cfg.phy.preamble_detection_dbm);
        for n in 0..self.nodes.len() {
            if n == src || self.nodes[n].tx.is_some() {
                continue;
            }
            let rssi = self.rssi(&frame, n);
            if let Some(lock) = self.nodes[n].lock {
                // Preambles arriving in the same instant: the receiver
                // synchronises to the strongest one.
                let same_instant = self.active.iter().any(|f| f.id == lock.frame && f.start == now);
                if !(same_instant && rssi > lock.rssi) {
                    let i = self.interference_mw(n, Some(lock.frame));
                    let lock = self.nodes[n].lock.as_mut().expect("locked");
                    lock.worst_interference_mw = lock.worst_interference_mw.max(i);
                    continue;
                }
            }
            let node = &self.nodes[n];
            let verdict = detect_preamble(rssi, frame.color, node.spec.color.value(), node.controller.obss_pd(), pd);
            if verdict.is_heard() && frame.color != node.spec.color.value() {
                self.nodes[n].controller.observe_obss(rssi);
                self.record_observation(now, n, Observation::Obss(rssi));
            }
            if !verdict.defers() {
                if let Some(lock) = self.nodes[n].lock {
                    let i = self.interference_mw(n, Some(lock.frame));
                    let lock = self.nodes[n].lock.as_mut().expect("locked");
                    lock.worst_interference_mw = lock.worst_interference_mw.max(i);
                }
            } else {
                let i = self.interference_mw(n, Some(frame.id));
                self.nodes[n].lock = Some(Lock {
                    frame: frame.id,
                    rssi,
                    worst_interference_mw: i,
                });
            }
        }
        Ok(())
    }

    fn on_tx_end(&mut self, id: u64, now: Micros) -> Result<(), SimError> {
        let pos = self.active.iter().position(|f| f.id == id).ok_or_else(|| SimError::Invariant {
            at: now,
            what: format!("frame {id} ended but was not on the air"),
        })?;
        let mut frame = self.active.swap_remove(pos);
        let noise = Dbm(self.cfg.phy.noise_floor_dbm);
        let mcs = *self.cfg.mcs.get(frame.mcs);

        for n in 0..self.nodes.len() {
            let Some(lock) = self.nodes[n].lock else { continue };
            if lock.frame != id {
                continue;
            }
            self.nodes[n].lock = None;
            let interferers: Vec<Dbm> = if lock.worst_interference_mw > 0.0 {
                vec![Dbm::from_mw(lock.worst_interference_mw)]
            } else {
                Vec::new()
            };
            if reception_outcome(lock.rssi, &interferers, noise, &mcs) != Outcome::Success {
                continue;
            }
            match frame.kind {
                FrameKind::Data if frame.dst == Some(n) => {
                    frame.delivered = true;
                    self.metrics.record(n, frame.payload);
                    self.nodes[n].controller.observe_bss_rssi(lock.rssi);
                    self.record_observation(now, n, Observation::BssRssi(lock.rssi));
                    self.queue.schedule(now + self.cfg.dcf.sifs_us, Ev::AckStart { ap: n, sta: frame.src })?;
                }
                FrameKind::Data => {
                    let until = now + self.cfg.dcf.sifs_us + self.ack_us;
                    if until > self.nodes[n].nav_until {
                        self.nodes[n].nav_until = until;
                        self.queue.schedule(until, Ev::NavEnd)?;
                    }
                }
                FrameKind::Ack if frame.dst == Some(n) => {
                    if self.nodes[n].mac.phase == Phase::AwaitingAck {
                        frame.delivered = true;
                        if let Some(h) = self.nodes[n].ack_timeout.take() {
                            self.queue.cancel(h);
                        }
                        self.finish_attempt(n, true, now)?;
                    }
                }
                FrameKind::Beacon if frame.src == self.nodes[n].spec.ap => {
                    self.nodes[n].controller.observe_bss_rssi(lock.rssi);
                    self.record_observation(now, n, Observation::BssRssi(lock.rssi));
                }
                _ => {}
            }
        }

        let src = frame.src;
        self.nodes[src].tx = None;
        match frame.kind {
            FrameKind::Data => {
                self.nodes[src].mac.phase = Phase::AwaitingAck;
                let at = now + self.cfg.dcf.sifs_us + self.ack_us + 1;
                self.nodes[src].ack_timeout = Some(self.queue.schedule(at, Ev::AckTimeout(src))?);
            }
            FrameKind::Beacon => {
                self.nodes[src].beacon_pending = false;
                self.nodes[src].mac.phase = Phase::Idle;
            }
            FrameKind::Ack => {}
        }

        if self.opts.event_log {
            let outcome = match (frame.kind, frame.delivered) {
                (FrameKind::Beacon, _) => FrameOutcome::Broadcast,
                (_, true) => FrameOutcome::Delivered,
                (_, false) => FrameOutcome::Lost,
            };
            self.events.push(FrameRecord {
                start_us: frame.start,
                end_us: frame.end,
                src,
                dst: frame.dst,
                color: frame.color,
                kind: frame.kind,
                mcs: frame.mcs,
                txpower_dbm: frame.tx_power.0,
                outcome,
                rbytes: if frame.kind == FrameKind::Data && frame.delivered { frame.payload } else { 0 },
            });
        }
        Ok(())
    }

    fn finish_attempt(&mut self, n: usize, success: bool, now: Micros) -> Result<(), SimError> {
        let dcf = self.cfg.dcf;
        let node = &mut self.nodes[n];
        let mcs = node.last_mcs;
        if let Some(rate) = node.rate.as_mut() {
            rate.update(mcs, success, now);
        }
        match node.mac.on_ack_outcome(success, &dcf) {
            AckResult::Delivered => {
                node.stats.delivered += 1;
                node.queued -= 1;
            }
            AckResult::Dropped => {
                node.stats.dropped += 1;
                node.queued -= 1;
            }
            AckResult::Retry => {}
        }
        if !(node.mac.cw >= dcf.cw_min && node.mac.cw <= dcf.cw_max && (node.mac.cw + 1).is_power_of_two()) {
            return Err(SimError::Invariant {
                at: now,
                what: format!("contention window {} of node {n} out of form", node.mac.cw),
            });
        }
        self.refill(n, now);
        if self.nodes[n].queued > 0 {
            self.start_contention(n);
        } else {
            let node = &mut self.nodes[n];
            node.mac.phase = Phase::Idle;
            let at = (node.next_arrival.ceil() as Micros).max(now + 1);
            self.queue.schedule(at, Ev::Arrival(n))?;
        }
        Ok(())
    }

    fn on_step(&mut self, now: Micros) -> Result<(), SimError> {
        self.metrics.close_step();
        let dt = self.cfg.t_step_us();
        let coupling = self.bounds.coupling_sum();
        for n in 0..self.nodes.len() {
            let mcs_ewma = self.nodes[n].mcs_ewma.report();
            self.record_observation(now, n, Observation::Step { dt_us: dt, mcs_ewma });
            let rec = self.nodes[n].controller.step(dt, mcs_ewma);
            if rec.tx_power.0 + rec.obss_pd.0 != coupling {
                return Err(SimError::Invariant {
                    at: now,
                    what: format!(
                        "node {n}: tx power {} + threshold {} != {coupling}",
                        rec.tx_power, rec.obss_pd
                    ),
                });
            }
            if !self.bounds.contains(rec.obss_pd) {
                return Err(SimError::Invariant {
                    at: now,
                    what: format!("node {n}: threshold {} outside bounds", rec.obss_pd),
                });
            }
            self.trace.push(TraceRow {
                time_us: now,
                node: n,
                obss_pd: rec.obss_pd,
                goal: rec.goal,
                tx_power: rec.tx_power,
                mcs_ewma: rec.mcs_ewma,
                branch: rec.branch,
            });
        }
        self.steps_done += 1;
        if self.steps_done < self.n_steps {
            self.queue.schedule_in(dt, Ev::Step);
        }
        Ok(())
    }
}
