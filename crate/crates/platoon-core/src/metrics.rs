//! Run metrics: tracking-error summaries, disturbance amplification down the
//! platoon, cross-track deviation from the leader path, and channel figures.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Vec2;
use crate::kernel::{CommStats, MessageCounters, TraceRow, VehicleId};
use crate::profile::LeaderProfile;

/// Fraction of the run discarded as initial transient before steady-state
/// and path metrics are computed.
pub const TRANSIENT_FRACTION: f64 = 0.1;

/// Settling margin after a segment's velocity ramp before its samples count
/// as steady state. Transients propagate down the platoon and decay slowly
/// at the default underdamped gains.
const SETTLE_TIME: f64 = 25.0;

/// Cruise segments slower than this are treated as stop phases and excluded
/// from steady-state windows (the standstill gate freezes the formation).
const MIN_CRUISE_V: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no velocity deviation in window; amplification ratio undefined")]
    UndefinedAmplification,
    #[error("leader path needs at least two points")]
    DegeneratePath,
    #[error("empty input series")]
    EmptySeries,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FollowerMetrics {
    pub vehicle_id: VehicleId,
    pub mean_abs_e_long: f64,
    pub max_abs_e_long: f64,
    /// Largest |e_long| over constant-speed straight segments, after the
    /// per-segment settling margin. `None` when the profile has no such
    /// window.
    pub steady_state_abs_e_long: Option<f64>,
    pub amplification_ratio: Option<f64>,
    pub cross_track_rmse: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChannelReport {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub rejected: u64,
    pub mean_delay: Option<f64>,
    pub mean_interarrival: Option<f64>,
    pub max_speed_quantization_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub followers: Vec<FollowerMetrics>,
    pub channel: ChannelReport,
}

impl MetricsReport {
    /// Every reported value is finite and non-negative.
    pub fn is_sane(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        self.followers.iter().all(|f| {
            ok(f.mean_abs_e_long)
                && ok(f.max_abs_e_long)
                && f.steady_state_abs_e_long.is_none_or(ok)
                && f.amplification_ratio.is_none_or(ok)
                && ok(f.cross_track_rmse)
        }) && self.channel.mean_delay.is_none_or(ok)
            && self.channel.mean_interarrival.is_none_or(ok)
            && self.channel.max_speed_quantization_error.is_none_or(ok)
    }
}

/// Velocity series of one vehicle within `[window.0, window.1]`.
fn velocity_in_window(trace: &[TraceRow], id: VehicleId, window: (f64, f64)) -> Vec<f64> {
    trace
        .iter()
        .filter(|r| r.vehicle_id == id && r.t >= window.0 && r.t <= window.1)
        .map(|r| r.v)
        .collect()
}

fn vehicle_ids(trace: &[TraceRow]) -> Vec<VehicleId> {
    let mut ids: Vec<VehicleId> = trace.iter().map(|r| r.vehicle_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Peak-deviation amplification per follower: for each vehicle i >= 2,
/// max |v_i - v_ss| / max |v_{i-1} - v_ss| over the window. A zero
/// predecessor deviation (no maneuver) makes the metric undefined.
pub fn amplification_ratio(
    trace: &[TraceRow],
    window: (f64, f64),
    v_ss: f64,
) -> Result<Vec<f64>, MetricsError> {
    let ids = vehicle_ids(trace);
    if ids.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let peak = |id: VehicleId| -> f64 {
        velocity_in_window(trace, id, window)
            .iter()
            .map(|v| (v - v_ss).abs())
            .fold(0.0, f64::max)
    };
    let mut ratios = Vec::new();
    for pair in ids.windows(2) {
        let denom = peak(pair[0]);
        if denom == 0.0 {
            return Err(MetricsError::UndefinedAmplification);
        }
        ratios.push(peak(pair[1]) / denom);
    }
    Ok(ratios)
}

/// Distance from `p` to the segment [a, b].
fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len_sq).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Nearest segment of `path` to `p`. Scans everything when `around` is
/// `None`, otherwise a window around the previous match that widens whenever
/// the best hit lands on a window edge.
fn nearest_segment(path: &[Vec2], p: Vec2, around: Option<usize>) -> (f64, usize) {
    let last_seg = path.len() - 2;
    let (mut lo, mut hi) = match around {
        None => (0, last_seg),
        Some(c) => (c.saturating_sub(50), (c + 200).min(last_seg)),
    };
    loop {
        let mut best = f64::INFINITY;
        let mut best_idx = lo;
        for i in lo..=hi {
            let d = point_segment_distance(p, path[i], path[i + 1]);
            if d < best {
                best = d;
                best_idx = i;
            }
        }
        let widen_lo = best_idx == lo && lo > 0;
        let widen_hi = best_idx == hi && hi < last_seg;
        if !widen_lo && !widen_hi {
            return (best, best_idx);
        }
        if widen_lo {
            lo = lo.saturating_sub(400);
        }
        if widen_hi {
            hi = (hi + 400).min(last_seg);
        }
    }
}

/// RMS distance from each follower sample to the piecewise-linear leader
/// path, after discarding the first `TRANSIENT_FRACTION` of the follower
/// samples. Consecutive duplicate leader points (standstill phases) are
/// collapsed first; the nearest-segment search then tracks a cursor along
/// the path, since both vehicles progress monotonically along the route.
pub fn cross_track_rmse(leader_path: &[Vec2], follower_path: &[Vec2]) -> Result<f64, MetricsError> {
    if leader_path.len() < 2 {
        return Err(MetricsError::DegeneratePath);
    }
    if follower_path.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut path: Vec<Vec2> = Vec::with_capacity(leader_path.len());
    for &p in leader_path {
        if path.last().is_none_or(|q| (p - *q).norm() > 1e-9) {
            path.push(p);
        }
    }
    if path.len() < 2 {
        return Err(MetricsError::DegeneratePath);
    }
    let skip = (follower_path.len() as f64 * TRANSIENT_FRACTION) as usize;
    let samples = &follower_path[skip.min(follower_path.len() - 1)..];

    let mut cursor: Option<usize> = None;
    let mut sum_sq = 0.0;
    for &p in samples {
        let (best, idx) = nearest_segment(&path, p, cursor);
        cursor = Some(idx);
        sum_sq += best * best;
    }
    Ok((sum_sq / samples.len() as f64).sqrt())
}

/// Lag (in seconds) of `y` behind `x`, located by the peak of the
/// mean-removed cross-correlation over lags `0..=max_lag_steps`. Both series
/// must be sampled on the same uniform grid. Returns `None` when either
/// series carries no variation.
pub fn cross_correlation_lag(x: &[f64], y: &[f64], dt: f64, max_lag_steps: usize) -> Option<f64> {
    let n = x.len().min(y.len());
    if n <= max_lag_steps + 1 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let x_mean = mean(&x[..n]);
    let y_mean = mean(&y[..n]);
    if x[..n].iter().all(|v| (v - x_mean).abs() < 1e-12)
        || y[..n].iter().all(|v| (v - y_mean).abs() < 1e-12)
    {
        return None;
    }
    let mut best_lag = 0usize;
    let mut best = f64::NEG_INFINITY;
    for lag in 0..=max_lag_steps {
        let mut c = 0.0;
        for k in max_lag_steps..n {
            c += (x[k - lag] - x_mean) * (y[k] - y_mean);
        }
        if c > best {
            best = c;
            best_lag = lag;
        }
    }
    Some(best_lag as f64 * dt)
}

/// Windows (in time) of straight constant-speed cruising: zero-yaw segments
/// at cruise speed, entered `SETTLE_TIME` after the segment's ramp finishes.
fn steady_windows(profile: &LeaderProfile, duration: f64) -> Vec<(f64, f64)> {
    let mut windows = Vec::new();
    let mut start = 0.0;
    let transient_end = duration * TRANSIENT_FRACTION;
    for seg in &profile.segments {
        let end = (start + seg.duration).min(duration);
        if seg.yaw_rate == 0.0 && seg.target_v >= MIN_CRUISE_V {
            let lo = (start + profile.ramp_time + SETTLE_TIME).max(transient_end);
            if lo < end {
                windows.push((lo, end));
            }
        }
        start += seg.duration;
        if start >= duration {
            break;
        }
    }
    windows
}

/// Assemble the full report for one finished run.
pub fn assemble_report(
    trace: &[TraceRow],
    counters: MessageCounters,
    stats: CommStats,
    profile: &LeaderProfile,
    duration: f64,
) -> MetricsReport {
    let ids = vehicle_ids(trace);
    let windows = steady_windows(profile, duration);
    let transient_end = duration * TRANSIENT_FRACTION;

    // Amplification uses the whole post-transient window against the leader
    // velocity at the transient boundary as the reference speed.
    let leader_id = ids.first().copied().unwrap_or(1);
    let v_ss = trace
        .iter()
        .filter(|r| r.vehicle_id == leader_id && r.t >= transient_end)
        .map(|r| r.v)
        .next()
        .unwrap_or(0.0);
    let amp = amplification_ratio(trace, (transient_end, duration), v_ss).ok();

    let leader_path: Vec<Vec2> = trace
        .iter()
        .filter(|r| r.vehicle_id == leader_id)
        .map(|r| Vec2::new(r.x, r.y))
        .collect();

    let mut followers = Vec::new();
    for (k, &id) in ids.iter().enumerate().skip(1) {
        let mut sum = 0.0;
        let mut count = 0u64;
        let mut max = 0.0f64;
        let mut steady_max: Option<f64> = None;
        let mut path = Vec::new();
        for row in trace.iter().filter(|r| r.vehicle_id == id) {
            path.push(Vec2::new(row.x, row.y));
            if let Some(e) = row.e_long {
                let a = e.abs();
                sum += a;
                count += 1;
                max = max.max(a);
                if windows.iter().any(|w| row.t >= w.0 && row.t <= w.1) {
                    let m = steady_max.get_or_insert(0.0);
                    *m = m.max(a);
                }
            }
        }
        followers.push(FollowerMetrics {
            vehicle_id: id,
            mean_abs_e_long: if count > 0 { sum / count as f64 } else { 0.0 },
            max_abs_e_long: max,
            steady_state_abs_e_long: steady_max,
            amplification_ratio: amp.as_ref().and_then(|a| a.get(k - 1).copied()),
            cross_track_rmse: cross_track_rmse(&leader_path, &path).unwrap_or(0.0),
        });
    }

    MetricsReport {
        followers,
        channel: ChannelReport {
            generated: counters.generated,
            delivered: counters.delivered,
            dropped: counters.dropped,
            rejected: counters.rejected,
            mean_delay: stats.mean_delay(),
            mean_interarrival: stats.mean_interarrival(),
            max_speed_quantization_error: stats.max_speed_quant_error,
        },
    }
}
