//! Per-run records: the frame event log, controller trace rows and the raw
//! controller observation stream, with their CSV forms.

use std::io::{Read, Write};

use crate::control::Branch;
use crate::engine::Micros;
use crate::error::ConfigError;
use crate::units::Dbm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Data,
    Ack,
    Beacon,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Data => "data",
            FrameKind::Ack => "ack",
            FrameKind::Beacon => "beacon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "data" => Some(FrameKind::Data),
            "ack" => Some(FrameKind::Ack),
            "beacon" => Some(FrameKind::Beacon),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOutcome {
    /// Decoded by the addressed receiver.
    Delivered,
    Lost,
    /// Beacons have no single addressee.
    Broadcast,
}

impl FrameOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameOutcome::Delivered => "delivered",
            FrameOutcome::Lost => "lost",
            FrameOutcome::Broadcast => "broadcast",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "delivered" => Some(FrameOutcome::Delivered),
            "lost" => Some(FrameOutcome::Lost),
            "broadcast" => Some(FrameOutcome::Broadcast),
            _ => None,
        }
    }
}

/// One transmitted frame, logged when it leaves the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub start_us: Micros,
    pub end_us: Micros,
    pub src: usize,
    pub dst: Option<usize>,
    pub color: u8,
    pub kind: FrameKind,
    pub mcs: u8,
    pub txpower_dbm: f64,
    pub outcome: FrameOutcome,
    /// Payload bytes credited to the receiver (zero unless delivered data).
    pub rbytes: u64,
}

impl FrameRecord {
    /// Whether two frames share airtime. Frames that merely touch do not.
    pub fn overlaps(&self, other: &FrameRecord) -> bool {
        self.start_us < other.end_us && other.start_us < self.end_us
    }
}

pub const EVENT_HEADER: [&str; 10] = [
    "start_us",
    "end_us",
    "src",
    "dst",
    "color",
    "kind",
    "mcs",
    "txpower_dbm",
    "outcome",
    "rbytes",
];

pub fn write_events<W: Write>(records: &[FrameRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_HEADER)?;
    for r in records {
        w.write_record([
            r.start_us.to_string(),
            r.end_us.to_string(),
            r.src.to_string(),
            r.dst.map(|d| d.to_string()).unwrap_or_default(),
            r.color.to_string(),
            r.kind.as_str().to_string(),
            r.mcs.to_string(),
            r.txpower_dbm.to_string(),
            r.outcome.as_str().to_string(),
            r.rbytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, ConfigError>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    rec[i].parse::<T>().map_err(|e| ConfigError::Parse {
        what: what.into(),
        source: Box::new(e),
    })
}

fn csv_err(what: &str, e: csv::Error) -> ConfigError {
    ConfigError::Parse {
        what: what.into(),
        source: Box::new(e),
    }
}

pub fn read_events<R: Read>(input: R) -> Result<Vec<FrameRecord>, ConfigError> {
    const WHAT: &str = "event log";
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(input).records() {
        let rec = rec.map_err(|e| csv_err(WHAT, e))?;
        let bad = |field: &str| ConfigError::invalid(WHAT, format!("bad {field} `{}`", &rec[5]));
        out.push(FrameRecord {
            start_us: parse_field(&rec, 0, WHAT)?,
            end_us: parse_field(&rec, 1, WHAT)?,
            src: parse_field(&rec, 2, WHAT)?,
            dst: if rec[3].is_empty() { None } else { Some(parse_field(&rec, 3, WHAT)?) },
            color: parse_field(&rec, 4, WHAT)?,
            kind: FrameKind::parse(&rec[5]).ok_or_else(|| bad("kind"))?,
            mcs: parse_field(&rec, 6, WHAT)?,
            txpower_dbm: parse_field(&rec, 7, WHAT)?,
            outcome: FrameOutcome::parse(&rec[8]).ok_or_else(|| bad("outcome"))?,
            rbytes: parse_field(&rec, 9, WHAT)?,
        });
    }
    Ok(out)
}

/// Controller state of one node after one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time_us: Micros,
    pub node: usize,
    pub obss_pd: Dbm,
    pub goal: Option<Dbm>,
    pub tx_power: Dbm,
    pub mcs_ewma: f64,
    pub branch: Branch,
}

pub const TRACE_HEADER: [&str; 7] = ["time_us", "node", "obss_pd", "goal", "txpower", "mcs_ewma", "branch"];

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.time_us.to_string(),
            r.node.to_string(),
            r.obss_pd.0.to_string(),
            r.goal.map(|g| g.0.to_string()).unwrap_or_default(),
            r.tx_power.0.to_string(),
            r.mcs_ewma.to_string(),
            r.branch.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, ConfigError> {
    const WHAT: &str = "controller trace";
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(input).records() {
        let rec = rec.map_err(|e| csv_err(WHAT, e))?;
        out.push(TraceRow {
            time_us: parse_field(&rec, 0, WHAT)?,
            node: parse_field(&rec, 1, WHAT)?,
            obss_pd: Dbm(parse_field(&rec, 2, WHAT)?),
            goal: if rec[3].is_empty() { None } else { Some(Dbm(parse_field(&rec, 3, WHAT)?)) },
            tx_power: Dbm(parse_field(&rec, 4, WHAT)?),
            mcs_ewma: parse_field(&rec, 5, WHAT)?,
            branch: Branch::parse(&rec[6])
                .ok_or_else(|| ConfigError::invalid(WHAT, format!("unknown branch `{}`", &rec[6])))?,
        });
    }
    Ok(out)
}

/// Input seen by a node's controller, in arrival order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    /// An inter-BSS preamble heard at this level.
    Obss(Dbm),
    /// A sample of the node's own link level.
    BssRssi(Dbm),
    /// A controller step over `dt_us` with the MCS average at that moment.
    Step { dt_us: Micros, mcs_ewma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub time_us: Micros,
    pub node: usize,
    pub observation: Observation,
}
