use std::ops::Range;

use super::{Device, Interval};

/// Slack on duration comparisons so that integer-hour boundaries are exact.
const DURATION_EPS: f64 = 1e-9;

/// Per-interval minimum up/down lookback windows of one device.
///
/// `down[t]` holds the prior intervals in which a shutdown forbids a startup
/// at `t` (the off-run would be shorter than the minimum downtime); `up[t]`
/// the prior intervals in which a startup forbids a shutdown at `t`. Both are
/// contiguous ranges ending just before `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LookbackWindows {
    pub up: Vec<Range<usize>>,
    pub down: Vec<Range<usize>>,
}

fn window(starts: &[f64], t: usize, min_duration: f64) -> Range<usize> {
    if min_duration <= DURATION_EPS {
        return t..t;
    }
    let first = (0..t)
        .find(|&s| starts[t] - starts[s] < min_duration - DURATION_EPS)
        .unwrap_or(t);
    first..t
}

pub fn derive_lookback_windows(device: &Device, intervals: &[Interval]) -> LookbackWindows {
    let mut starts = Vec::with_capacity(intervals.len());
    let mut acc = 0.0;
    for iv in intervals {
        starts.push(acc);
        acc += iv.duration;
    }
    LookbackWindows {
        up: (0..intervals.len()).map(|t| window(&starts, t, device.min_uptime)).collect(),
        down: (0..intervals.len()).map(|t| window(&starts, t, device.min_downtime)).collect(),
    }
}
