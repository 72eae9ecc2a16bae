use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;
use pulse_core::anomaly::EventRecord;
use pulse_core::config::KvConfig;
use pulse_core::series::SeriesFrame;

use super::load_patients;
use crate::args::ReportArgs;
use crate::failure::{create_dir, require_file, write_file, Failure};

/// Prompts longer than this are thinned by dropping excerpt rows.
pub const MAX_PROMPT_CHARS: usize = 8000;
/// Top-ranked targets, and leading context channels, shown in the excerpt.
const EXCERPT_CHANNELS: usize = 3;

pub fn run(args: ReportArgs) -> Result<(), Failure> {
    require_file(&args.events, "event log")?;
    if let Some(p) = &args.patient {
        require_file(p, "patient metadata")?;
    }
    if args.data.data.len() != 1 {
        return Err(Failure::usage("report takes exactly one --data series"));
    }
    let meta = match &args.patient {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    let events = read_events(&args.events)?;
    let patients = load_patients(&args.data)?;
    let frame = &patients[0].frame;
    create_dir(&args.out.out)?;

    let mut summary = String::new();
    if events.is_empty() {
        summary.push_str("0 events; nothing to explain\n");
    } else {
        let _ = writeln!(summary, "{} events", events.len());
    }
    for (i, ev) in events.iter().enumerate() {
        let (start, end) = (parse_time(&ev.start)?, parse_time(&ev.end)?);
        let from = end - i64::from(args.excerpt_minutes) * 60;
        let rows = rows_between(frame, from.min(start), end);
        let prompt = build_prompt(ev, frame, &meta, &rows);
        let stem = format!("event_{:03}", i + 1);
        write_file(&args.out.out.join(format!("{stem}.prompt.txt")), &prompt)?;
        write_file(&args.out.out.join(format!("{stem}.csv")), excerpt_csv(frame, &rows))?;
        let _ = writeln!(
            summary,
            "{stem}: {} .. {}  peak {:.3} (tau {:.3})  channels {}",
            ev.start,
            ev.end,
            ev.peak_score,
            ev.tau,
            ev.channels_ranked.join(",")
        );
    }
    write_file(&args.out.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn read_events(path: &Path) -> Result<Vec<EventRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::usage(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn parse_time(s: &str) -> Result<i64, Failure> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp())
        .map_err(|e| Failure::usage(format!("bad event time {s:?}: {e}")))
}

fn rows_between(frame: &SeriesFrame, from: i64, to: i64) -> Vec<usize> {
    let ts = frame.timestamps();
    let a = ts.partition_point(|&t| t < from);
    let b = ts.partition_point(|&t| t <= to);
    (a..b).collect()
}

fn clock(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.format("%m-%d %H:%M").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn cell(frame: &SeriesFrame, t: usize, c: usize) -> String {
    frame.get(t, c).map(|v| format!("{v:.1}")).unwrap_or_else(|| "NA".into())
}

/// The explanation prompt for one event. Deterministic in its inputs.
pub fn build_prompt(ev: &EventRecord, frame: &SeriesFrame, meta: &KvConfig, rows: &[usize]) -> String {
    let channels: Vec<(usize, &str)> = ev
        .channels_ranked
        .iter()
        .filter_map(|name| frame.channel_index(name).map(|c| (c, name.as_str())))
        .take(EXCERPT_CHANNELS)
        .chain(
            (frame.n_targets()..frame.width())
                .take(EXCERPT_CHANNELS)
                .map(|c| (c, frame.names()[c].as_str())),
        )
        .collect();
    let mut head = String::new();
    let _ = writeln!(
        head,
        "You are assisting a clinician reviewing remote-monitoring data. Interpret the signals below, \
         give reasoning for the abnormal readings, and say whether activity or environment could explain them."
    );
    let _ = writeln!(head, "\nPatient");
    let mut any_meta = false;
    for (k, v) in meta.iter() {
        let _ = writeln!(head, "  {k}: {v}");
        any_meta = true;
    }
    if !any_meta {
        let _ = writeln!(head, "  (no metadata supplied)");
    }
    let _ = writeln!(head, "\nEvent");
    let _ = writeln!(head, "  time range: {} to {}", ev.start, ev.end);
    let _ = writeln!(head, "  peak at {}", ev.peak_time);
    let _ = writeln!(
        head,
        "  anomaly score {:.3} against threshold {:.3} ({:.1}x){}",
        ev.peak_score,
        ev.tau,
        ev.peak_score / ev.tau,
        if ev.fallback { ", threshold from empirical quantile" } else { "" }
    );
    let _ = writeln!(head, "  anomaly type id: {}", ev.anomaly_type_id);
    let _ = writeln!(
        head,
        "  channels by contribution to the reconstruction error: {}",
        ev.channels_ranked.join(", ")
    );
    let context: Vec<&str> = frame
        .names()
        .iter()
        .skip(frame.n_targets())
        .map(String::as_str)
        .collect();
    if !context.is_empty() {
        let _ = writeln!(head, "  context channels recorded: {}", context.join(", "));
    }

    let header: String = std::iter::once("time".to_string())
        .chain(channels.iter().map(|(_, n)| n.to_string()))
        .collect::<Vec<_>>()
        .join(" ");
    let tail = "\nExplain the event in plain language for the care team, then list checks you would recommend.\n";
    let mut step = 1;
    loop {
        let mut body = format!("\nRecent signal ({} rows", rows.len().div_ceil(step));
        if step > 1 {
            let _ = write!(body, ", every {step}th sample");
        }
        let _ = writeln!(body, ")\n  {header}");
        for &t in rows.iter().step_by(step) {
            let _ = write!(body, "  {}", clock(frame.timestamps()[t]));
            for &(c, _) in &channels {
                let _ = write!(body, " {}", cell(frame, t, c));
            }
            body.push('\n');
        }
        let total = head.len() + body.len() + tail.len();
        if total <= MAX_PROMPT_CHARS || step >= rows.len().max(1) {
            return format!("{head}{body}{tail}");
        }
        step += 1;
    }
}

fn excerpt_csv(frame: &SeriesFrame, rows: &[usize]) -> String {
    let mut out = String::from("timestamp");
    for n in frame.names() {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for &t in rows {
        let _ = write!(out, "{}", frame.timestamps()[t]);
        for c in 0..frame.width() {
            out.push(',');
            if let Some(v) = frame.get(t, c) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}
