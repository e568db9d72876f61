//! CSV input/output for observations and simulated trajectories.
//!
//! Observation files have a header `t,y_1,..,y_q` and one row per time
//! point, `t = 1..=T` in order. Blank cells (or `NA`/`NaN`) are missing.

use std::io::{Read, Write};

use crate::contamination::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub fn read_observations<R: Read>(input: R) -> Result<Vec<Vector>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(Error::InvalidInput("observation CSV needs a header 't,y_1,..'".into()));
    }
    let q = header.len() - 1;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t: usize = rec[0]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad time index '{}' on row {}", &rec[0], k + 1)))?;
        if t != k + 1 {
            return Err(Error::InvalidInput(format!("expected t={} on row {}, found {t}", k + 1, k + 1)));
        }
        let mut y = Vector::zeros(q);
        for i in 0..q {
            let cell = rec.get(i + 1).unwrap_or("");
            y[i] = match cell {
                "" | "NA" | "NaN" | "nan" => f64::NAN,
                s => s
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad value '{s}' at t={t}")))?,
            };
        }
        out.push(y);
    }
    Ok(out)
}

pub fn write_observations<W: Write>(ys: &[Vector], out: W) -> Result<()> {
    let q = ys.first().map_or(0, |y| y.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|i| format!("y_{i}")));
    w.write_record(&header)?;
    for (k, y) in ys.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(y.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per `t = 1..=T`: realized and ideal states and observations plus
/// the contamination indicators.
pub fn write_trajectory<W: Write>(tr: &Trajectory, out: W) -> Result<()> {
    let p = tr.x0.len();
    let q = tr.y_real.first().map_or(0, |y| y.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for (name, n) in [("x", p), ("y", q), ("x_ideal", p), ("y_ideal", q)] {
        header.extend((1..=n).map(|i| format!("{name}_{i}")));
    }
    header.push("io".into());
    header.push("ao".into());
    w.write_record(&header)?;
    for k in 0..tr.horizon() {
        let mut row = vec![(k + 1).to_string()];
        for v in [&tr.x_real[k], &tr.y_real[k], &tr.x_ideal[k], &tr.y_ideal[k]] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push((tr.io_hits[k] as u8).to_string());
        row.push((tr.ao_hits[k] as u8).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
