//! Event-driven rearrangement flow of interval sets.
//!
//! Each maximal interval keeps its length and its center obeys `dc/dT = -c`
//! in physical time `T`; the reported flow parameter is `t = 1 - e^{-T}`.
//! Neighbors merge when they touch and continue as one interval centered at
//! their common midpoint. At `t = 1` the result is the centered interval.

use crate::error::{check_finite, Error, Result};
use crate::interval_set::{Interval, IntervalSet};
use std::io::Write;

/// Relative tolerance for treating merge times as simultaneous.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
struct Block {
    center: f64,
    len: f64,
    /// Index of the first original part contained in this block.
    first: usize,
    /// One past the last original part.
    last: usize,
}

impl Block {
    fn interval(&self) -> Interval {
        Interval { lo: self.center - 0.5 * self.len, hi: self.center + 0.5 * self.len }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeEvent {
    /// Physical time of the merge.
    pub time: f64,
    /// Block indices (in the configuration just before the event) that merged.
    pub merged: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    blocks: Vec<Block>,
    time: f64,
    events: Vec<MergeEvent>,
    /// Snapshots `(T, intervals)` after each event, including start.
    trace: Vec<(f64, Vec<Interval>)>,
}

pub fn physical_time(t: f64) -> Result<f64> {
    check_finite(t, "flow parameter")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange { what: "t", value: t, range: "[0, 1]" });
    }
    Ok(if t == 1.0 { f64::INFINITY } else { -(-t).ln_1p() })
}

pub fn flow_parameter(time: f64) -> f64 {
    if time.is_infinite() {
        1.0
    } else {
        -(-time).exp_m1()
    }
}

impl FlowState {
    pub fn new(e: &IntervalSet) -> Self {
        let blocks: Vec<Block> = e
            .parts()
            .iter()
            .enumerate()
            .map(|(i, p)| Block { center: p.center(), len: p.len(), first: i, last: i + 1 })
            .collect();
        let snap = blocks.iter().map(Block::interval).collect();
        FlowState { blocks, time: 0.0, events: Vec::new(), trace: vec![(0.0, snap)] }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> &[MergeEvent] {
        &self.events
    }

    /// Current block lengths; merges add them, nothing rescales them.
    pub fn lengths(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.len).collect()
    }

    pub fn set(&self) -> IntervalSet {
        IntervalSet::from_intervals(self.blocks.iter().map(Block::interval).collect())
    }

    fn merge_delay(&self, i: usize) -> f64 {
        let (a, b) = (&self.blocks[i], &self.blocks[i + 1]);
        let gap = b.center - a.center;
        let reach = 0.5 * (a.len + b.len);
        if gap <= reach {
            0.0
        } else {
            (gap / reach).ln()
        }
    }

    fn drift(&mut self, dt: f64) {
        let f = (-dt).exp();
        for b in &mut self.blocks {
            b.center *= f;
        }
        self.time += dt;
    }

    /// Advance to physical time `target` (may be infinite).
    pub fn advance_to(&mut self, target: f64) {
        while self.time < target {
            let next = (0..self.blocks.len().saturating_sub(1))
                .map(|i| self.merge_delay(i))
                .fold(f64::INFINITY, f64::min);
            let slack = TIE_TOL * (1.0 + target.abs());
            if next.is_infinite() || self.time + next > target + slack {
                if target.is_finite() {
                    self.drift(target - self.time);
                }
                break;
            }
            self.drift(next);
            self.merge_simultaneous(next);
            if target.is_finite() && (self.time - target).abs() <= slack {
                self.time = target;
                break;
            }
        }
        if target.is_infinite() {
            for b in &mut self.blocks {
                b.center = 0.0;
            }
            self.time = f64::INFINITY;
        }
    }

    fn merge_simultaneous(&mut self, delay: f64) {
        // After drifting, pairs whose delay was within tolerance of the minimum touch now.
        let tol = TIE_TOL * (1.0 + delay.abs());
        let mut touching: Vec<bool> = (0..self.blocks.len().saturating_sub(1))
            .map(|i| self.merge_delay(i) <= tol)
            .collect();
        if !touching.iter().any(|&t| t) {
            // Rounding left the minimal pair a hair apart.
            let i = (0..touching.len())
                .min_by(|&a, &b| self.merge_delay(a).total_cmp(&self.merge_delay(b)))
                .unwrap();
            touching[i] = true;
        }
        let mut merged_idx = Vec::new();
        let mut out: Vec<Block> = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 && touching[i - 1] {
                let last = out.last_mut().unwrap();
                let len = last.len + b.len;
                last.center = (last.len * last.center + b.len * b.center) / len;
                last.len = len;
                last.last = b.last;
                merged_idx.push(i);
            } else {
                if i + 1 < self.blocks.len() && touching[i] {
                    merged_idx.push(i);
                }
                out.push(*b);
            }
        }
        self.events.push(MergeEvent { time: self.time, merged: merged_idx });
        self.blocks = out;
        let snap = self.blocks.iter().map(Block::interval).collect();
        self.trace.push((self.time, snap));
    }

    /// Position at the current time of the point of the original set at
    /// offset `offset` inside original part `part`.
    fn image_of(&self, original: &IntervalSet, part: usize, offset: f64) -> f64 {
        let b = self
            .blocks
            .iter()
            .find(|b| b.first <= part && part < b.last)
            .expect("every part lies in a block");
        let before: f64 = original.parts()[b.first..part].iter().map(Interval::len).sum();
        b.center - 0.5 * b.len + before + offset
    }

    /// Whether original parts `i` and `j` share a block now.
    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.blocks.iter().any(|b| b.first <= i.min(j) && i.max(j) < b.last)
    }

    /// Trace rows `T,t,interval_index,lo,hi`.
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "T,t,interval_index,lo,hi")?;
        let mut rows = self.trace.clone();
        if rows.last().map(|r| r.0) != Some(self.time) {
            rows.push((self.time, self.blocks.iter().map(Block::interval).collect()));
        }
        for (time, ivs) in rows {
            for (k, iv) in ivs.iter().enumerate() {
                writeln!(w, "{time:?},{:?},{k},{:?},{:?}", flow_parameter(time), iv.lo, iv.hi)?;
            }
        }
        Ok(())
    }
}

/// `E(t)` for `t` in `[0, 1]`.
pub fn flow(e: &IntervalSet, t: f64) -> Result<IntervalSet> {
    Ok(flow_state(e, t)?.set())
}

pub fn flow_state(e: &IntervalSet, t: f64) -> Result<FlowState> {
    let target = physical_time(t)?;
    let mut st = FlowState::new(e);
    st.advance_to(target);
    Ok(st)
}

/// `E` at physical time `time >= 0`.
pub fn flow_physical(e: &IntervalSet, time: f64) -> Result<IntervalSet> {
    if time.is_nan() || time < 0.0 {
        return Err(Error::OutOfRange { what: "T", value: time, range: "[0, inf]" });
    }
    let mut st = FlowState::new(e);
    st.advance_to(time);
    Ok(st.set())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportPoint {
    pub value: f64,
    /// False when `x` lies outside `E` and the right-continuous extension was used.
    pub inside: bool,
}

/// Monotone transport `ψ_{E,t}(x)`: the point of `E(t)` with the same
/// cumulative measure as `x` in `E`.
pub fn transport_map(e: &IntervalSet, t: f64, x: f64) -> Result<TransportPoint> {
    check_finite(x, "transport point")?;
    let st = flow_state(e, t)?;
    Ok(transport_with(&st, e, x))
}

pub(crate) fn transport_with(st: &FlowState, e: &IntervalSet, x: f64) -> TransportPoint {
    let parts = e.parts();
    if parts.is_empty() {
        return TransportPoint { value: 0.0, inside: false };
    }
    if let Some(i) = e.part_index(x) {
        return TransportPoint { value: st.image_of(e, i, x - parts[i].lo), inside: true };
    }
    let i = parts.partition_point(|p| p.hi < x);
    let value = if i < parts.len() {
        st.image_of(e, i, 0.0)
    } else {
        let k = parts.len() - 1;
        st.image_of(e, k, parts[k].len())
    };
    TransportPoint { value, inside: false }
}

#[derive(Clone, Debug)]
pub struct CompressionWitness {
    /// Physical-time threshold `2δ / (1 - 2δ)`.
    pub threshold: f64,
    set: IntervalSet,
    /// Original parts containing the extreme points of `E ∩ I`.
    first: usize,
    last: usize,
}

impl CompressionWitness {
    /// Whether the image of `E ∩ I` at physical time `time` is one interval.
    pub fn is_interval_at(&self, time: f64) -> bool {
        let mut st = FlowState::new(&self.set);
        st.advance_to(time.max(0.0));
        st.same_block(self.first, self.last)
    }

    /// Physical time at which the image of `E ∩ I` becomes one interval.
    pub fn merge_time(&self) -> f64 {
        let mut st = FlowState::new(&self.set);
        if self.first == self.last {
            return 0.0;
        }
        loop {
            let before = st.events.len();
            let next = (0..st.blocks.len().saturating_sub(1))
                .map(|i| st.merge_delay(i))
                .fold(f64::INFINITY, f64::min);
            if next.is_infinite() {
                return f64::INFINITY;
            }
            st.advance_to(st.time + next);
            if st.events.len() == before {
                st.merge_simultaneous(0.0);
            }
            if st.same_block(self.first, self.last) {
                return st.time;
            }
        }
    }
}

/// Witness for the compression property of an interval `I` on which `E` has
/// density at least `1 - δ`.
pub fn compression_witness(e: &IntervalSet, i: Interval, delta: f64) -> Result<CompressionWitness> {
    check_finite(delta, "delta")?;
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::OutOfRange { what: "delta", value: delta, range: "[0, 0.5)" });
    }
    if i.len() <= 0.0 {
        return Err(Error::Invalid("interval I must have positive length".into()));
    }
    let inside = e.intersect(&IntervalSet::from_intervals(vec![i]));
    if inside.measure() < (1.0 - delta) * i.len() * (1.0 - 1e-12) {
        return Err(Error::Invalid(format!(
            "|E ∩ I| = {} below (1 - δ)|I| = {}",
            inside.measure(),
            (1.0 - delta) * i.len()
        )));
    }
    let lo = inside.inf().unwrap();
    let hi = inside.sup().unwrap();
    let first = e.part_index(lo).unwrap();
    let last = e.part_index(hi).unwrap();
    Ok(CompressionWitness {
        threshold: 2.0 * delta / (1.0 - 2.0 * delta),
        set: e.clone(),
        first,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(p: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::normalize(p).unwrap()
    }

    #[test]
    fn two_intervals_merge_at_point_six() {
        let e = set(&[(-3.0, -1.0), (2.0, 4.0)]);
        let st = flow_state(&e, 0.6).unwrap();
        assert_eq!(st.events().len(), 1);
        assert!((st.events()[0].time - 2.5f64.ln()).abs() < 1e-14);
        let f = st.set();
        assert_eq!(f.len(), 1);
        assert!((f.parts()[0].lo + 1.8).abs() < 1e-12);
        assert!((f.parts()[0].hi - 2.2).abs() < 1e-12);
    }

    #[test]
    fn endpoints_of_parameter_range() {
        let e = set(&[(0.0, 1.0), (5.0, 7.0)]);
        assert_eq!(flow(&e, 0.0).unwrap(), e);
        assert_eq!(flow(&e, 1.0).unwrap(), e.rearranged());
        assert!(flow(&e, 1.5).is_err());
        assert!(flow(&e, -0.1).is_err());
    }

    #[test]
    fn transport_at_end_and_start() {
        let e = set(&[(-3.0, -1.0), (2.0, 4.0)]);
        let p = transport_map(&e, 1.0, 3.0).unwrap();
        assert!(p.inside && (p.value - 1.0).abs() < 1e-14);
        assert_eq!(transport_map(&e, 0.0, 2.5).unwrap().value, 2.5);
        assert!(!transport_map(&e, 0.3, 0.0).unwrap().inside);
    }

    #[test]
    fn simultaneous_merges_form_one_event() {
        let e = set(&[(-5.0, -3.0), (-1.0, 1.0), (3.0, 5.0)]);
        let st = flow_state(&e, 0.9).unwrap();
        assert_eq!(st.events().len(), 1);
        assert_eq!(st.set().len(), 1);
    }

    #[test]
    fn compression_density_check() {
        let e = set(&[(0.0, 0.4), (0.6, 1.0)]);
        let i = Interval { lo: 0.0, hi: 1.0 };
        assert!(compression_witness(&e, i, 0.1).is_err());
        let w = compression_witness(&e, i, 0.2).unwrap();
        assert!(w.is_interval_at(w.threshold));
        assert!(!w.is_interval_at(0.0));
    }
}
