//! CSV and JSON writers for run artifacts. Formatting is deterministic:
//! floats print in Rust's shortest round-trip form, rows in log order, so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::kernel::{CamLogRow, ReceivedRow, TraceRow};
use crate::metrics::MetricsReport;
use crate::scenario::{RunOutput, ScenarioError};

pub const TRACE_HEADER: &str = "t,vehicle_id,x,y,theta,v,a,omega,delta,e_long,e_lat";
pub const CAM_LOG_HEADER: &str =
    "tx_time,rx_time,station_id,seq,speed_q,heading_q,accel_q,yawrate_q,dropped";
pub const RECEIVED_HEADER: &str = "t,true_v,received_v,channel";

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> io::Result<()> {
    let mut buf = String::new();
    buf.push_str(TRACE_HEADER);
    buf.push('\n');
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.vehicle_id,
            r.x,
            r.y,
            r.theta,
            r.v,
            r.a,
            r.omega,
            r.delta,
            opt(r.e_long),
            opt(r.e_lat)
        )
        .expect("string write");
    }
    w.write_all(buf.as_bytes())
}

pub fn write_cam_log_csv<W: Write>(rows: &[CamLogRow], mut w: W) -> io::Result<()> {
    let mut buf = String::new();
    buf.push_str(CAM_LOG_HEADER);
    buf.push('\n');
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{},{}",
            r.tx_time,
            opt(r.rx_time),
            r.station_id,
            r.seq,
            r.speed_q,
            r.heading_q,
            r.accel_q,
            r.yawrate_q,
            r.dropped
        )
        .expect("string write");
    }
    w.write_all(buf.as_bytes())
}

/// `channel` labels every row, so comparison files can carry both runs.
pub fn write_received_csv<W: Write>(
    rows: &[ReceivedRow],
    channel: &str,
    mut w: W,
) -> io::Result<()> {
    write!(w, "{}", received_csv_header_and_rows(rows, channel, true))
}

fn received_csv_header_and_rows(rows: &[ReceivedRow], channel: &str, header: bool) -> String {
    let mut buf = String::new();
    if header {
        buf.push_str(RECEIVED_HEADER);
        buf.push('\n');
    }
    for r in rows {
        writeln!(
            buf,
            "{},{},{},{}",
            r.t,
            r.true_v,
            opt(r.received_v),
            channel
        )
        .expect("string write");
    }
    buf
}

/// Combined received-signal file for a channel comparison: ideal rows first,
/// then radio rows.
pub fn write_received_comparison_csv<W: Write>(
    ideal: &[ReceivedRow],
    itsg5: &[ReceivedRow],
    mut w: W,
) -> io::Result<()> {
    let mut buf = received_csv_header_and_rows(ideal, "ideal", true);
    buf.push_str(&received_csv_header_and_rows(itsg5, "itsg5", false));
    w.write_all(buf.as_bytes())
}

pub fn write_metrics_json<W: Write>(metrics: &MetricsReport, mut w: W) -> io::Result<()> {
    let text = serde_json::to_string_pretty(metrics)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")
}

/// Write trace.csv, cam_log.csv, received_signal.csv and metrics.json for
/// one run into `dir`, creating it if needed.
pub fn write_run_outputs(out: &RunOutput, dir: &Path) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir)?;
    write_trace_csv(&out.trace, std::fs::File::create(dir.join("trace.csv"))?)?;
    write_cam_log_csv(
        &out.cam_log,
        std::fs::File::create(dir.join("cam_log.csv"))?,
    )?;
    write_received_csv(
        &out.received,
        out.channel.label(),
        std::fs::File::create(dir.join("received_signal.csv"))?,
    )?;
    write_metrics_json(
        &out.metrics,
        std::fs::File::create(dir.join("metrics.json"))?,
    )?;
    Ok(())
}
