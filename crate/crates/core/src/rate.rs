//! MCS selection: a Minstrel-style statistics table and a Thompson-sampling
//! selector, plus the running average of chosen MCS indices.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::control::ofc_ewma_update;
use crate::engine::{secs_to_micros, Micros};
use crate::error::ConfigError;

/// Smallest value a Thompson pseudo-count may decay to.
pub const PSEUDO_COUNT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RateSelectorKind {
    Minstrel,
    Thompson,
    /// Always transmit at one MCS.
    Fixed { mcs: u8 },
}

impl RateSelectorKind {
    pub fn name(&self) -> String {
        match self {
            RateSelectorKind::Minstrel => "minstrel".into(),
            RateSelectorKind::Thompson => "thompson".into(),
            RateSelectorKind::Fixed { mcs } => format!("fixed{mcs}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minstrel" => Some(RateSelectorKind::Minstrel),
            "thompson" => Some(RateSelectorKind::Thompson),
            other => other
                .strip_prefix("fixed:")
                .and_then(|v| v.parse().ok())
                .map(|mcs| RateSelectorKind::Fixed { mcs }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateParams {
    pub minstrel_lookaround: f64,
    pub minstrel_ewma_weight: f64,
    pub minstrel_update_interval_s: f64,
    pub thompson_decay: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            minstrel_lookaround: 0.1,
            minstrel_ewma_weight: 0.25,
            minstrel_update_interval_s: 0.1,
            thompson_decay: 0.1,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.minstrel_lookaround) {
            return Err(ConfigError::invalid("rate.minstrel_lookaround", "must lie in [0, 1]"));
        }
        if !(self.minstrel_ewma_weight > 0.0 && self.minstrel_ewma_weight <= 1.0) {
            return Err(ConfigError::invalid("rate.minstrel_ewma_weight", "must lie in (0, 1]"));
        }
        if !(self.minstrel_update_interval_s > 0.0) {
            return Err(ConfigError::invalid("rate.minstrel_update_interval_s", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.thompson_decay) {
            return Err(ConfigError::invalid("rate.thompson_decay", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateStat {
    pub attempts: u64,
    pub successes: u64,
    attempts_cur: u64,
    successes_cur: u64,
    /// Smoothed success probability; `None` until the first refresh with data.
    pub prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minstrel {
    rates: Vec<f64>,
    stats: Vec<RateStat>,
    lookaround: f64,
    weight: f64,
    interval_us: Micros,
    last_refresh_us: Micros,
}

impl Minstrel {
    pub fn new(rates: Vec<f64>, params: &RateParams) -> Self {
        let n = rates.len();
        Self {
            rates,
            stats: vec![RateStat::default(); n],
            lookaround: params.minstrel_lookaround,
            weight: params.minstrel_ewma_weight,
            interval_us: secs_to_micros(params.minstrel_update_interval_s),
            last_refresh_us: 0,
        }
    }

    /// Builds a table with the given smoothed probabilities already in place.
    pub fn from_snapshot(rates: Vec<f64>, probs: &[f64], params: &RateParams) -> Self {
        let mut m = Self::new(rates, params);
        for (s, &p) in m.stats.iter_mut().zip(probs) {
            s.prob = Some(p);
            s.attempts = 1;
        }
        m
    }

    pub fn stats(&self) -> &[RateStat] {
        &self.stats
    }

    pub fn expected_throughput(&self, mcs: usize) -> f64 {
        self.stats[mcs].prob.unwrap_or(0.0) * self.rates[mcs]
    }

    pub fn exploit_pick(&self) -> u8 {
        argmax((0..self.rates.len()).map(|i| self.expected_throughput(i))) as u8
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let best = self.exploit_pick();
        if rng.random::<f64>() >= self.lookaround || self.rates.len() < 2 {
            return best;
        }
        // Bootstrap: untried rates come first.
        if let Some(i) = self.stats.iter().position(|s| s.attempts == 0) {
            return i as u8;
        }
        let k = rng.random_range(0..self.rates.len() - 1) as u8;
        if k >= best {
            k + 1
        } else {
            k
        }
    }

    pub fn update(&mut self, mcs: u8, success: bool, now_us: Micros) {
        let s = &mut self.stats[mcs as usize];
        s.attempts += 1;
        s.attempts_cur += 1;
        if success {
            s.successes += 1;
            s.successes_cur += 1;
        }
        if now_us >= self.last_refresh_us + self.interval_us {
            self.refresh(now_us);
        }
    }

    /// Folds the counts since the last refresh into the smoothed probabilities.
    pub fn refresh(&mut self, now_us: Micros) {
        for s in &mut self.stats {
            if s.attempts_cur > 0 {
                let raw = s.successes_cur as f64 / s.attempts_cur as f64;
                s.prob = Some(match s.prob {
                    None => raw,
                    Some(p) => ofc_ewma_update(p, raw, self.weight),
                });
                s.attempts_cur = 0;
                s.successes_cur = 0;
            }
        }
        self.last_refresh_us = now_us;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThompsonArm {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ThompsonArm {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thompson {
    rates: Vec<f64>,
    arms: Vec<ThompsonArm>,
    decay: f64,
}

impl Thompson {
    pub fn new(rates: Vec<f64>, params: &RateParams) -> Self {
        let n = rates.len();
        Self {
            rates,
            arms: vec![ThompsonArm::default(); n],
            decay: params.thompson_decay,
        }
    }

    pub fn arms(&self) -> &[ThompsonArm] {
        &self.arms
    }

    pub fn arms_mut(&mut self) -> &mut [ThompsonArm] {
        &mut self.arms
    }

    /// Samples a success probability per arm and picks the best sampled
    /// throughput.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let samples: Vec<f64> = self
            .arms
            .iter()
            .zip(&self.rates)
            .map(|(arm, rate)| {
                let beta = Beta::new(arm.alpha, arm.beta).expect("pseudo-counts stay positive");
                beta.sample(rng) * rate
            })
            .collect();
        argmax(samples) as u8
    }

    pub fn update(&mut self, mcs: u8, success: bool) {
        let arm = &mut self.arms[mcs as usize];
        let keep = 1.0 - self.decay;
        arm.alpha = (keep * arm.alpha + if success { 1.0 } else { 0.0 }).max(PSEUDO_COUNT_FLOOR);
        arm.beta = (keep * arm.beta + if success { 0.0 } else { 1.0 }).max(PSEUDO_COUNT_FLOOR);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateSelector {
    Minstrel(Minstrel),
    Thompson(Thompson),
    Fixed(u8),
}

impl RateSelector {
    pub fn new(kind: RateSelectorKind, rates: Vec<f64>, params: &RateParams) -> Result<Self, ConfigError> {
        Ok(match kind {
            RateSelectorKind::Minstrel => RateSelector::Minstrel(Minstrel::new(rates, params)),
            RateSelectorKind::Thompson => RateSelector::Thompson(Thompson::new(rates, params)),
            RateSelectorKind::Fixed { mcs } => {
                if mcs as usize >= rates.len() {
                    return Err(ConfigError::invalid(
                        "rate_selector.mcs",
                        format!("MCS {mcs} not in a table of {} entries", rates.len()),
                    ));
                }
                RateSelector::Fixed(mcs)
            }
        })
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        match self {
            RateSelector::Minstrel(m) => m.pick(rng),
            RateSelector::Thompson(t) => t.pick(rng),
            RateSelector::Fixed(mcs) => *mcs,
        }
    }

    pub fn update(&mut self, mcs: u8, success: bool, now_us: Micros) {
        match self {
            RateSelector::Minstrel(m) => m.update(mcs, success, now_us),
            RateSelector::Thompson(t) => t.update(mcs, success),
            RateSelector::Fixed(_) => {}
        }
    }
}

/// Exponentially weighted average of chosen MCS indices, starting from 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEwma {
    alpha: f64,
    value: f64,
}

impl McsEwma {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: 0.0 }
    }

    pub fn record(&mut self, mcs: u8) {
        self.value = ofc_ewma_update(self.value, mcs as f64, self.alpha);
    }

    pub fn report(&self) -> f64 {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{substream, Stream};
    use crate::phy::McsTable;

    fn he_rates() -> Vec<f64> {
        McsTable::default().rates()
    }

    #[test]
    fn exploit_prefers_expected_throughput_over_raw_rate() {
        // 0.9 * 57.8 = 52.02 beats 0.5 * 86.7 = 43.35.
        let mut rates = vec![10.0; 8];
        rates[5] = 57.8;
        rates[7] = 86.7;
        let mut probs = vec![0.0; 8];
        probs[5] = 0.9;
        probs[7] = 0.5;
        let m = Minstrel::from_snapshot(rates, &probs, &RateParams::default());
        assert_eq!(m.exploit_pick(), 5);
    }

    #[test]
    fn exploit_ties_go_low() {
        let rates = he_rates();
        let mut probs = vec![0.0; rates.len()];
        // Equal expected throughput on MCS3 and MCS4.
        probs[3] = 1.0;
        probs[4] = rates[3] / rates[4];
        let m = Minstrel::from_snapshot(rates, &probs, &RateParams::default());
        assert_eq!(m.expected_throughput(3), m.expected_throughput(4));
        assert_eq!(m.exploit_pick(), 3);
    }

    #[test]
    fn bootstrap_visits_every_rate_within_first_lookarounds() {
        let params = RateParams {
            minstrel_lookaround: 1.0,
            ..Default::default()
        };
        let mut m = Minstrel::new(he_rates(), &params);
        let mut rng = substream(1, Stream::RateSelection);
        let mut seen = vec![false; 12];
        for _ in 0..12 {
            let mcs = m.pick(&mut rng);
            seen[mcs as usize] = true;
            m.update(mcs, true, 0);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn lookaround_never_returns_best() {
        let params = RateParams {
            minstrel_lookaround: 1.0,
            ..Default::default()
        };
        let m = Minstrel::from_snapshot(he_rates(), &[0.5; 12], &params);
        let best = m.exploit_pick();
        let mut rng = substream(2, Stream::RateSelection);
        for _ in 0..500 {
            let p = m.pick(&mut rng);
            assert_ne!(p, best);
            assert!((p as usize) < 12);
        }
    }

    #[test]
    fn refresh_folds_raw_probability() {
        let mut m = Minstrel::new(he_rates(), &RateParams::default());
        for i in 0..10 {
            m.update(4, i != 0, 0);
        }
        m.refresh(0);
        assert_eq!(m.stats()[4].prob, Some(0.9));
        assert_eq!((m.stats()[4].attempts, m.stats()[4].successes), (10, 9));
        // Second interval all failures: 0.75 * 0.9 + 0.25 * 0.
        m.update(4, false, 0);
        m.refresh(100_000);
        assert!((m.stats()[4].prob.unwrap() - 0.675).abs() < 1e-15);
    }

    #[test]
    fn thompson_update_arithmetic() {
        let mut t = Thompson::new(he_rates(), &RateParams::default());
        t.update(2, true);
        assert_eq!(t.arms()[2], ThompsonArm { alpha: 1.9, beta: 0.9 });
        t.update(5, false);
        assert_eq!(t.arms()[5], ThompsonArm { alpha: 0.9, beta: 1.9 });
        assert_eq!(t.arms()[0], ThompsonArm::default());
    }

    #[test]
    fn thompson_symmetric_prior_explores_all() {
        let t = Thompson::new(vec![1.0; 6], &RateParams::default());
        let mut rng = substream(3, Stream::RateSelection);
        let mut counts = [0usize; 6];
        for _ in 0..3000 {
            counts[t.pick(&mut rng) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn thompson_concentrated_posterior_wins() {
        let mut t = Thompson::new(he_rates(), &RateParams::default());
        for arm in t.arms_mut() {
            *arm = ThompsonArm { alpha: 1.0, beta: 100.0 };
        }
        t.arms_mut()[11] = ThompsonArm { alpha: 100.0, beta: 1.0 };
        let mut rng = substream(4, Stream::RateSelection);
        let hits = (0..1000).filter(|_| t.pick(&mut rng) == 11).count();
        assert!(hits >= 995, "{hits}");
    }

    #[test]
    fn thompson_replays_with_same_stream() {
        let t = Thompson::new(he_rates(), &RateParams::default());
        let run = || {
            let mut rng = substream(9, Stream::RateSelection);
            (0..100).map(|_| t.pick(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mcs_ewma_recurrence() {
        let mut e = McsEwma::new(0.5);
        assert_eq!(e.report(), 0.0);
        let expected = [0.0, 4.0, 2.0, 5.0, 2.5, 5.25, 2.625, 5.3125, 2.65625, 5.328125];
        for (k, want) in expected.iter().enumerate() {
            e.record(if k % 2 == 0 { 0 } else { 8 });
            assert_eq!(e.report(), *want);
        }
        let mut last = McsEwma::new(1.0);
        last.record(3);
        last.record(9);
        assert_eq!(last.report(), 9.0);
        let mut steady = McsEwma::new(0.5);
        for _ in 0..60 {
            steady.record(7);
        }
        assert!((steady.report() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_selector_validates_index() {
        assert!(RateSelector::new(RateSelectorKind::Fixed { mcs: 12 }, he_rates(), &RateParams::default()).is_err());
        let s = RateSelector::new(RateSelectorKind::Fixed { mcs: 7 }, he_rates(), &RateParams::default()).unwrap();
        assert_eq!(s.pick(&mut substream(0, Stream::RateSelection)), 7);
    }
}
