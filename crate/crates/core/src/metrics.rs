//! Received-byte accounting and throughput per node, per step and in total.
//!
//! CSV layout (header `record,step,node,rbytes,value`):
//!
//! * `node,<step>,<node>,<bytes>,<Mbps>` for every node in every step,
//! * `step,<step>,,<bytes>,<aggregated Mbps>` after the node rows of a step,
//! * `total,,,<bytes>,<total transfer in Mbit>` as the last row.

use std::io::{Read, Write};

use crate::engine::{micros_to_secs, Micros};
use crate::error::ConfigError;

/// Throughput in Mbit/s (decimal megabits) of `rbytes` received over `t_step_s`.
pub fn node_throughput(rbytes: u64, t_step_s: f64) -> f64 {
    rbytes as f64 * 8.0 / (1000.0 * 1000.0 * t_step_s)
}

pub fn aggregated_throughput(per_node: &[f64]) -> f64 {
    per_node.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLedger {
    t_step_us: Micros,
    n_nodes: usize,
    steps: Vec<Vec<u64>>,
    current: Vec<u64>,
}

impl MetricsLedger {
    pub fn new(n_nodes: usize, t_step_us: Micros) -> Self {
        Self {
            t_step_us,
            n_nodes,
            steps: Vec::new(),
            current: vec![0; n_nodes],
        }
    }

    pub fn record(&mut self, node: usize, bytes: u64) {
        self.current[node] += bytes;
    }

    pub fn close_step(&mut self) {
        let done = std::mem::replace(&mut self.current, vec![0; self.n_nodes]);
        self.steps.push(done);
    }

    pub fn t_step_s(&self) -> f64 {
        micros_to_secs(self.t_step_us)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn step_bytes(&self, step: usize) -> &[u64] {
        &self.steps[step]
    }

    pub fn node_step_throughput(&self, step: usize, node: usize) -> f64 {
        node_throughput(self.steps[step][node], self.t_step_s())
    }

    pub fn step_aggregate(&self, step: usize) -> f64 {
        let per_node: Vec<f64> = (0..self.n_nodes).map(|n| self.node_step_throughput(step, n)).collect();
        aggregated_throughput(&per_node)
    }

    pub fn aggregate_series(&self) -> Vec<f64> {
        (0..self.n_steps()).map(|s| self.step_aggregate(s)).collect()
    }

    /// Total transferred data in Mbit: step length times the sum of the
    /// per-step aggregated throughputs.
    pub fn total_transfer(&self) -> f64 {
        self.t_step_s() * self.aggregate_series().iter().sum::<f64>()
    }

    pub fn node_total_bytes(&self, node: usize) -> u64 {
        self.steps.iter().map(|s| s[node]).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.steps.iter().flatten().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["record", "step", "node", "rbytes", "value"])?;
        for step in 0..self.n_steps() {
            let s = step.to_string();
            for node in 0..self.n_nodes {
                w.write_record([
                    "node",
                    &s,
                    &node.to_string(),
                    &self.steps[step][node].to_string(),
                    &self.node_step_throughput(step, node).to_string(),
                ])?;
            }
            let bytes: u64 = self.steps[step].iter().sum();
            w.write_record(["step", &s, "", &bytes.to_string(), &self.step_aggregate(step).to_string()])?;
        }
        w.write_record([
            "total",
            "",
            "",
            &self.total_bytes().to_string(),
            &self.total_transfer().to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// What `compare` needs from a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub aggregate_series: Vec<f64>,
    pub total_bytes: u64,
    pub total_transfer_mbit: f64,
}

impl MetricsSummary {
    pub fn from_csv<R: Read>(input: R) -> Result<Self, ConfigError> {
        let parse_err = |e: Box<dyn std::error::Error + Send + Sync>| ConfigError::Parse {
            what: "metrics CSV".into(),
            source: e,
        };
        let mut r = csv::Reader::from_reader(input);
        let mut series = Vec::new();
        let mut total = None;
        for rec in r.records() {
            let rec = rec.map_err(|e| parse_err(Box::new(e)))?;
            match &rec[0] {
                "step" => series.push(rec[4].parse::<f64>().map_err(|e| parse_err(Box::new(e)))?),
                "total" => {
                    let bytes = rec[3].parse::<u64>().map_err(|e| parse_err(Box::new(e)))?;
                    let mbit = rec[4].parse::<f64>().map_err(|e| parse_err(Box::new(e)))?;
                    total = Some((bytes, mbit));
                }
                _ => {}
            }
        }
        let (total_bytes, total_transfer_mbit) =
            total.ok_or_else(|| ConfigError::invalid("metrics CSV", "missing total row"))?;
        Ok(Self {
            aggregate_series: series,
            total_bytes,
            total_transfer_mbit,
        })
    }
}
