//! CSV output with lossless float formatting.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::{MemberId, StatRecord};

pub const STATS_HEADER: [&str; 11] = [
    "t",
    "member",
    "kinetic_energy",
    "enstrophy",
    "angular_momentum",
    "div_l2",
    "visc_dissip",
    "be_dissip",
    "penalty_dissip",
    "spread",
    "std_dev",
];

/// Shortest decimal that parses back to the same `f64`. Very large and very
/// small magnitudes use exponent notation.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes a header and rows of preformatted fields.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn stat_fields(r: &StatRecord) -> [String; 11] {
    [
        format_float(r.t),
        r.member.to_string(),
        format_float(r.kinetic_energy),
        format_float(r.enstrophy),
        format_float(r.angular_momentum),
        format_float(r.div_l2),
        format_float(r.visc_dissip),
        format_float(r.be_dissip),
        format_float(r.penalty_dissip),
        format_float(r.spread),
        format_float(r.std_dev),
    ]
}

pub fn write_stats_csv(records: &[StatRecord], path: &Path) -> Result<()> {
    write_csv(path, &STATS_HEADER, records.iter().map(stat_fields))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(STATS_HEADER) {
        return Err(bad(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != STATS_HEADER.len() {
            return Err(bad(line, format!("expected 11 fields, found {}", rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| bad(line, format!("{}: bad number '{}'", STATS_HEADER[k], &rec[k])))
        };
        let member: MemberId = rec[1]
            .parse()
            .map_err(|_| bad(line, format!("bad member '{}'", &rec[1])))?;
        out.push(StatRecord {
            t: num(0)?,
            member,
            kinetic_energy: num(2)?,
            enstrophy: num(3)?,
            angular_momentum: num(4)?,
            div_l2: num(5)?,
            visc_dissip: num(6)?,
            be_dissip: num(7)?,
            penalty_dissip: num(8)?,
            spread: num(9)?,
            std_dev: num(10)?,
        });
    }
    Ok(out)
}
