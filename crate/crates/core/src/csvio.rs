//! CSV output for reports, statistics, decoy bounds, single-photon curves and
//! solver traces. Floats are written with 17 significant digits so files parse
//! back bit-exactly; absent values are empty fields.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::channel::{DetectionStats, IntensitySet, StatsTable, BB84_OUTCOMES, BB84_STATES, MDI_OUTCOMES};
use crate::decoy::DecoyBounds;
use crate::error::{Error, Result};
use crate::pipeline::{KeyRateReport, Method, SinglePhotonPoint};
use crate::protocol::Protocol;
use crate::solver::TraceRow;

pub const REPORT_HEADER: [&str; 15] = [
    "distance_km",
    "method",
    "mu_signal",
    "rate",
    "p1",
    "p_pass",
    "leak_ec",
    "f_lower",
    "f_upper",
    "gap",
    "iterations",
    "below_gllp",
    "all_zero",
    "stats_fingerprint",
    "status",
];
pub const STATS_HEADER: [&str; 5] = ["mu_a", "mu_b", "sent", "outcome", "probability"];
pub const DECOY_HEADER: [&str; 4] = ["sent", "outcome", "lower", "upper"];
pub const SINGLE_PHOTON_HEADER: [&str; 7] = ["e", "mu_out", "numerical_rate", "gllp_rate", "f_lower", "gap", "status"];
pub const TRACE_HEADER: [&str; 4] = ["iteration", "f", "fw_gap", "step"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Validation(format!("column '{col}': cannot parse '{s}' as a number")))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, col).map(Some)
    }
}

fn parse_bool(s: &str, col: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Validation(format!("column '{col}': expected true/false, got '{other}'"))),
    }
}

fn sent_label(protocol: Protocol, sent: usize) -> String {
    match protocol {
        Protocol::Bb84 => BB84_STATES[sent].to_string(),
        Protocol::Mdi => format!("{}/{}", BB84_STATES[sent / 4], BB84_STATES[sent % 4]),
    }
}

fn parse_sent(s: &str) -> Result<(usize, Option<usize>)> {
    let one = |t: &str| {
        BB84_STATES
            .iter()
            .position(|l| *l == t)
            .ok_or_else(|| Error::Validation(format!("unknown sent state '{t}'")))
    };
    match s.split_once('/') {
        Some((a, b)) => Ok((one(a)?, Some(one(b)?))),
        None => Ok((one(s)?, None)),
    }
}

fn outcome_index(protocol: Protocol, s: &str) -> Result<usize> {
    let labels: &[&str] = match protocol {
        Protocol::Bb84 => &BB84_OUTCOMES,
        Protocol::Mdi => &MDI_OUTCOMES,
    };
    labels.iter().position(|l| *l == s).ok_or_else(|| Error::Validation(format!("unknown outcome '{s}'")))
}

/// Column lookup by header name.
struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord, expected: &[&str]) -> Result<Self> {
        let map: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for e in expected {
            if !map.contains_key(*e) {
                return Err(Error::Validation(format!("missing column '{e}'")));
            }
        }
        Ok(Self(map))
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> &'r str {
        rec.get(self.0[col]).unwrap_or("")
    }
}

pub fn write_reports<W: Write>(out: W, reports: &[KeyRateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            fmt_f64(r.distance_km),
            r.method.as_str().to_string(),
            fmt_f64(r.mu_signal),
            fmt_opt(r.rate),
            fmt_f64(r.p1),
            fmt_f64(r.p_pass),
            fmt_f64(r.leak_ec),
            fmt_opt(r.f_lower),
            fmt_opt(r.f_upper),
            fmt_opt(r.solver_gap),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            r.below_gllp.to_string(),
            r.all_zero.to_string(),
            r.stats_fingerprint.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports<R: Read>(input: R) -> Result<Vec<KeyRateReport>> {
    let mut rd = csv::Reader::from_reader(input);
    let cols = Columns::new(rd.headers()?, &REPORT_HEADER)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let g = |c: &str| cols.get(&rec, c);
        let iterations = match g("iterations").trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Validation(format!("column 'iterations': bad value '{s}'")))?),
        };
        out.push(KeyRateReport {
            distance_km: parse_f64(g("distance_km"), "distance_km")?,
            method: g("method").parse::<Method>()?,
            mu_signal: parse_f64(g("mu_signal"), "mu_signal")?,
            rate: parse_opt(g("rate"), "rate")?,
            p1: parse_f64(g("p1"), "p1")?,
            p_pass: parse_f64(g("p_pass"), "p_pass")?,
            leak_ec: parse_f64(g("leak_ec"), "leak_ec")?,
            f_lower: parse_opt(g("f_lower"), "f_lower")?,
            f_upper: parse_opt(g("f_upper"), "f_upper")?,
            solver_gap: parse_opt(g("gap"), "gap")?,
            iterations,
            below_gllp: parse_bool(g("below_gllp"), "below_gllp")?,
            all_zero: parse_bool(g("all_zero"), "all_zero")?,
            stats_fingerprint: g("stats_fingerprint")
                .trim()
                .parse()
                .map_err(|_| Error::Validation("column 'stats_fingerprint': bad value".into()))?,
            status: g("status").to_string(),
        });
    }
    Ok(out)
}

pub fn write_stats<W: Write>(out: W, stats: &DetectionStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    let labels = stats.outcome_labels();
    for t in &stats.tables {
        for (sent, row) in t.rows.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                w.write_record([
                    fmt_f64(t.intensity.0),
                    fmt_opt(t.intensity.1),
                    sent_label(stats.protocol, sent),
                    labels[k].to_string(),
                    fmt_f64(*p),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds statistics written by [`write_stats`]; tables must appear in the written order.
pub fn read_stats<R: Read>(input: R) -> Result<DetectionStats> {
    let mut rd = csv::Reader::from_reader(input);
    let cols = Columns::new(rd.headers()?, &STATS_HEADER)?;
    let mut protocol = None;
    let mut tables: Vec<StatsTable> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let g = |c: &str| cols.get(&rec, c);
        let intensity = (parse_f64(g("mu_a"), "mu_a")?, parse_opt(g("mu_b"), "mu_b")?);
        let p = if intensity.1.is_some() { Protocol::Mdi } else { Protocol::Bb84 };
        if *protocol.get_or_insert(p) != p {
            return Err(Error::Validation("statistics file mixes BB84 and MDI rows".into()));
        }
        let (a, b) = parse_sent(g("sent"))?;
        let sent = match (p, b) {
            (Protocol::Bb84, None) => a,
            (Protocol::Mdi, Some(b)) => 4 * a + b,
            _ => return Err(Error::Validation(format!("sent label '{}' does not match the protocol", g("sent")))),
        };
        let k = outcome_index(p, g("outcome"))?;
        let prob = parse_f64(g("probability"), "probability")?;
        if tables.last().is_none_or(|t| t.intensity != intensity) {
            tables.push(StatsTable { intensity, rows: Vec::new() });
        }
        let t = tables.last_mut().unwrap();
        if t.rows.len() <= sent {
            t.rows.resize(sent + 1, Vec::new());
        }
        if t.rows[sent].len() <= k {
            t.rows[sent].resize(k + 1, 0.0);
        }
        t.rows[sent][k] = prob;
    }
    let protocol = protocol.ok_or_else(|| Error::Validation("empty statistics file".into()))?;
    let mus: Vec<f64> = match protocol {
        Protocol::Bb84 => tables.iter().map(|t| t.intensity.0).collect(),
        Protocol::Mdi => tables.iter().step_by(3).map(|t| t.intensity.0).collect(),
    };
    if mus.len() != 3 || tables.len() != if protocol == Protocol::Mdi { 9 } else { 3 } {
        return Err(Error::Validation(format!("expected 3 intensities, found {} tables", tables.len())));
    }
    let intensities = IntensitySet::new(mus[0], mus[1], mus[2])?;
    Ok(DetectionStats { protocol, intensities, tables })
}

pub fn write_decoy_bounds<W: Write>(out: W, bounds: &DecoyBounds) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECOY_HEADER)?;
    let labels: &[&str] = match bounds.protocol {
        Protocol::Bb84 => &BB84_OUTCOMES,
        Protocol::Mdi => &MDI_OUTCOMES,
    };
    for (sent, row) in bounds.intervals.iter().enumerate() {
        for (k, (lo, hi)) in row.iter().enumerate() {
            w.write_record([sent_label(bounds.protocol, sent), labels[k].to_string(), fmt_f64(*lo), fmt_f64(*hi)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_decoy_bounds<R: Read>(input: R, cutoff: usize) -> Result<DecoyBounds> {
    let mut rd = csv::Reader::from_reader(input);
    let cols = Columns::new(rd.headers()?, &DECOY_HEADER)?;
    let mut protocol = None;
    let mut intervals: Vec<Vec<(f64, f64)>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let g = |c: &str| cols.get(&rec, c);
        let (a, b) = parse_sent(g("sent"))?;
        let p = if b.is_some() { Protocol::Mdi } else { Protocol::Bb84 };
        if *protocol.get_or_insert(p) != p {
            return Err(Error::Validation("decoy file mixes BB84 and MDI rows".into()));
        }
        let sent = b.map_or(a, |b| 4 * a + b);
        let k = outcome_index(p, g("outcome"))?;
        if intervals.len() <= sent {
            intervals.resize(sent + 1, Vec::new());
        }
        if intervals[sent].len() <= k {
            intervals[sent].resize(k + 1, (0.0, 0.0));
        }
        intervals[sent][k] = (parse_f64(g("lower"), "lower")?, parse_f64(g("upper"), "upper")?);
    }
    let protocol = protocol.ok_or_else(|| Error::Validation("empty decoy file".into()))?;
    Ok(DecoyBounds { protocol, cutoff, intervals })
}

pub fn write_single_photon<W: Write>(out: W, points: &[SinglePhotonPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SINGLE_PHOTON_HEADER)?;
    for p in points {
        w.write_record([
            fmt_f64(p.e),
            fmt_f64(p.mu_out),
            fmt_opt(p.numerical_rate),
            fmt_f64(p.gllp_rate),
            fmt_opt(p.f_lower),
            fmt_opt(p.solver_gap),
            p.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_single_photon<R: Read>(input: R) -> Result<Vec<SinglePhotonPoint>> {
    let mut rd = csv::Reader::from_reader(input);
    let cols = Columns::new(rd.headers()?, &SINGLE_PHOTON_HEADER)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let g = |c: &str| cols.get(&rec, c);
        out.push(SinglePhotonPoint {
            e: parse_f64(g("e"), "e")?,
            mu_out: parse_f64(g("mu_out"), "mu_out")?,
            numerical_rate: parse_opt(g("numerical_rate"), "numerical_rate")?,
            gllp_rate: parse_f64(g("gllp_rate"), "gllp_rate")?,
            f_lower: parse_opt(g("f_lower"), "f_lower")?,
            solver_gap: parse_opt(g("gap"), "gap")?,
            status: g("status").to_string(),
        });
    }
    Ok(out)
}

/// Trace rows tagged with the point they belong to.
pub fn write_trace<W: Write>(out: W, rows: &[(String, Vec<TraceRow>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["point"];
    header.extend(TRACE_HEADER);
    w.write_record(&header)?;
    for (point, trace) in rows {
        for t in trace {
            w.write_record([point.clone(), t.iteration.to_string(), fmt_f64(t.f), fmt_f64(t.fw_gap), fmt_f64(t.step)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{simulate_bb84, simulate_mdi, ChannelParams};
    use crate::decoy::decoy_bounds;
    use crate::pipeline::STATUS_OK;
    use proptest::prelude::*;

    fn report(rate: Option<f64>) -> KeyRateReport {
        KeyRateReport {
            distance_km: 12.5,
            method: Method::Numerical,
            mu_signal: 0.47,
            rate,
            p1: 0.3 * (-0.3f64).exp(),
            p_pass: 1.0 / 3.0,
            leak_ec: std::f64::consts::PI * 1e-7,
            f_lower: rate.map(|r| r * 3.0),
            f_upper: None,
            solver_gap: Some(1.234567890123e-9),
            iterations: Some(17),
            below_gllp: true,
            all_zero: false,
            stats_fingerprint: u64::MAX - 3,
            status: STATUS_OK.into(),
        }
    }

    #[test]
    fn reports_round_trip_exactly() {
        let mut bad = report(None);
        bad.status = "infeasible: constraint 'decoy P(1,2)', residual 1e-3".into();
        bad.iterations = None;
        let reports = vec![report(Some(1.0e-5 / 7.0)), bad, report(Some(0.0))];
        let mut buf = Vec::new();
        write_reports(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("distance_km,method,mu_signal,rate,"));
        assert_eq!(read_reports(buf.as_slice()).unwrap(), reports);
    }

    #[test]
    fn stats_round_trip_exactly() {
        let p = ChannelParams::new(20.0, 0.2, 0.125, 0.01, 1e-5).unwrap();
        let i = IntensitySet::new(0.5, 0.02, 0.001).unwrap();
        let bb84 = simulate_bb84(0.5, &i, &p).unwrap();
        let mdi = simulate_mdi(&i, &p, &p, 8).unwrap();
        for stats in [bb84, mdi] {
            let mut buf = Vec::new();
            write_stats(&mut buf, &stats).unwrap();
            assert_eq!(read_stats(buf.as_slice()).unwrap(), stats);
            let bounds = decoy_bounds(&stats, 6).unwrap();
            let mut buf = Vec::new();
            write_decoy_bounds(&mut buf, &bounds).unwrap();
            let back = read_decoy_bounds(buf.as_slice(), 6).unwrap();
            assert_eq!(back.intervals, bounds.intervals);
            assert_eq!(back.protocol, bounds.protocol);
        }
    }

    #[test]
    fn single_photon_round_trip() {
        let pts = vec![
            SinglePhotonPoint { e: 0.01, mu_out: 0.0, numerical_rate: Some(0.8385), gllp_rate: 0.8384, f_lower: Some(0.3), solver_gap: Some(1e-4), status: STATUS_OK.into() },
            SinglePhotonPoint { e: 0.2, mu_out: 1e-3, numerical_rate: None, gllp_rate: 0.0, f_lower: None, solver_gap: None, status: "numerical failure".into() },
        ];
        let mut buf = Vec::new();
        write_single_photon(&mut buf, &pts).unwrap();
        assert_eq!(read_single_photon(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn malformed_input() {
        assert!(read_reports("distance_km,method\n1,gllp\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_reports(&mut buf, &[report(Some(1e-3))]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("numerical", "magic");
        assert!(read_reports(text.as_bytes()).is_err());
        assert!(read_stats("mu_a,mu_b,sent,outcome,probability\n".as_bytes()).is_err());
        assert!(parse_sent("Y+").is_err());
    }

    #[test]
    fn trace_header() {
        let mut buf = Vec::new();
        let rows = vec![("d=0".to_string(), vec![TraceRow { iteration: 0, f: 0.5, fw_gap: 0.1, step: 0.25 }])];
        write_trace(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "point,iteration,f,fw_gap,step");
        assert_eq!(text.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn floats_round_trip(x in proptest::num::f64::ANY) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            if x.is_nan() {
                prop_assert!(back.is_nan());
            } else {
                prop_assert_eq!(back.to_bits(), x.to_bits());
            }
        }
    }
}
