//! CSV readers and writers for trajectories, RB datasets, decay curves and
//! pulse scans.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pulse::ScanPoint;
use crate::rb::{DecayPoint, RbDataset, RbRow};
use crate::repump::TrajectoryPoint;

/// Decimal text with 9 significant digits, switching to exponent notation
/// outside [1e-5, 1e9).
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float");
    let exponent = rounded.abs().log10().floor() as i32;
    if (-5..9).contains(&exponent) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(parse_err)?;
    for row in rows {
        w.write_record(&row).map_err(parse_err)?;
    }
    w.flush().map_err(parse_err)
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, record) in reader.deserialize().enumerate() {
        out.push(record.map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?);
    }
    Ok(out)
}

pub const TRAJECTORY_HEADER: [&str; 9] = ["cycle", "p0", "pLm", "p1", "pLp", "se0", "seLm", "se1", "seLp"];

pub fn write_trajectory_csv<W: Write>(out: W, points: &[TrajectoryPoint]) -> Result<()> {
    write_rows(
        out,
        &TRAJECTORY_HEADER,
        points.iter().map(|p| {
            std::iter::once(p.cycle.to_string())
                .chain(p.populations.iter().chain(&p.std_errors).map(|v| format_number(*v)))
                .collect()
        }),
    )
}

#[derive(Deserialize)]
struct TrajectoryRecord {
    cycle: usize,
    p0: f64,
    #[serde(rename = "pLm")]
    p_lm: f64,
    p1: f64,
    #[serde(rename = "pLp")]
    p_lp: f64,
    se0: f64,
    #[serde(rename = "seLm")]
    se_lm: f64,
    se1: f64,
    #[serde(rename = "seLp")]
    se_lp: f64,
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryPoint>> {
    Ok(read_rows::<_, TrajectoryRecord>(input)?
        .into_iter()
        .map(|r| TrajectoryPoint {
            cycle: r.cycle,
            populations: [r.p0, r.p_lm, r.p1, r.p_lp],
            std_errors: [r.se0, r.se_lm, r.se1, r.se_lp],
        })
        .collect())
}

pub fn write_rb_csv<W: Write>(out: W, dataset: &RbDataset) -> Result<()> {
    write_rows(
        out,
        &["length", "seq_index", "survival", "shots"],
        dataset.rows.iter().map(|r| {
            vec![
                r.length.to_string(),
                r.seq_index.to_string(),
                format_number(r.survival),
                r.shots.to_string(),
            ]
        }),
    )
}

#[derive(Deserialize)]
struct RbRecord {
    length: usize,
    seq_index: usize,
    survival: f64,
    shots: u64,
}

pub fn read_rb_csv<R: Read>(input: R) -> Result<RbDataset> {
    let rows = read_rows::<_, RbRecord>(input)?
        .into_iter()
        .map(|r| RbRow {
            length: r.length,
            seq_index: r.seq_index,
            survival: r.survival,
            shots: r.shots,
        })
        .collect();
    RbDataset::new(rows)
}

pub fn write_decay_csv<W: Write>(out: W, points: &[DecayPoint]) -> Result<()> {
    write_rows(
        out,
        &["cycles", "survival", "shots"],
        points.iter().map(|p| {
            vec![
                format_number(p.cycles),
                format_number(p.survival),
                p.shots.map(|n| n.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

#[derive(Deserialize)]
struct DecayRecord {
    cycles: f64,
    survival: f64,
    shots: Option<u64>,
}

pub fn read_decay_csv<R: Read>(input: R) -> Result<Vec<DecayPoint>> {
    Ok(read_rows::<_, DecayRecord>(input)?
        .into_iter()
        .map(|r| DecayPoint {
            cycles: r.cycles,
            survival: r.survival,
            shots: r.shots,
        })
        .collect())
}

pub fn write_scan_csv<W: Write>(out: W, scan: &[ScanPoint]) -> Result<()> {
    write_rows(
        out,
        &["edge_time_ns", "detuning_hz", "leakage_probability"],
        scan.iter().map(|p| {
            vec![
                format_number(p.edge_time * 1e9),
                format_number(p.detuning_hz),
                format_number(p.leakage_probability),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(0.323), "0.323");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(4.572473708276178e-7), "4.57247371e-7");
        assert_eq!(format_number(8.6e8), "860000000");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-2.5e12), "-2.5e12");
    }

    #[test]
    fn trajectory_round_trip() {
        let points = vec![TrajectoryPoint {
            cycle: 3,
            populations: [0.5, 0.25, 0.125, 0.125],
            std_errors: [0.01, 0.02, 0.0, 0.005],
        }];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &points).unwrap();
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), points);
    }

    #[test]
    fn rb_round_trip_and_errors() {
        let data = RbDataset::new(vec![RbRow {
            length: 2,
            seq_index: 0,
            survival: 0.97,
            shots: 100,
        }])
        .unwrap();
        let mut buf = Vec::new();
        write_rb_csv(&mut buf, &data).unwrap();
        assert_eq!(read_rb_csv(buf.as_slice()).unwrap(), data);
        let bad = "length,seq_index,survival,shots\n2,0,1.5,100\n";
        assert!(read_rb_csv(bad.as_bytes()).is_err());
        let garbled = "length,seq_index,survival,shots\n2,0,x,100\n";
        match read_rb_csv(garbled.as_bytes()) {
            Err(Error::Parse(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decay_without_shots() {
        let text = "cycles,survival,shots\n0,1,\n1000000,0.87,\n";
        let points = read_decay_csv(text.as_bytes()).unwrap();
        assert_eq!(points[1].shots, None);
        assert_eq!(points[1].cycles, 1e6);
    }
}
