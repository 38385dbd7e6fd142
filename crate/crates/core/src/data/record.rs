use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceFlag {
    Measured,
    Estimated,
}

/// Offline data `x_[0,T]`, `u_[0,T−1]`, `w_[0,T−1]`; columns are time steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordJson", into = "RecordJson")]
pub struct DataRecord {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub flag: DisturbanceFlag,
}

/// JSON layout: dimensions plus time-major sample lists.
#[derive(Serialize, Deserialize)]
struct RecordJson {
    nx: usize,
    nu: usize,
    t: usize,
    flag: DisturbanceFlag,
    x: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

fn time_major(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_time_major(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::dim(format!("expected samples of length {dim}")));
    }
    Ok(DMatrix::from_fn(dim, rows.len(), |i, k| rows[k][i]))
}

impl From<DataRecord> for RecordJson {
    fn from(r: DataRecord) -> Self {
        RecordJson {
            nx: r.nx(),
            nu: r.nu(),
            t: r.len(),
            flag: r.flag,
            x: time_major(&r.x),
            u: time_major(&r.u),
            w: time_major(&r.w),
        }
    }
}

impl TryFrom<RecordJson> for DataRecord {
    type Error = Error;

    fn try_from(j: RecordJson) -> Result<Self> {
        let r = DataRecord::new(
            from_time_major(&j.x, j.nx)?,
            from_time_major(&j.u, j.nu)?,
            from_time_major(&j.w, j.nx)?,
            j.flag,
        )?;
        if r.len() != j.t {
            return Err(Error::dim(format!("declared T = {} but {} inputs", j.t, r.len())));
        }
        Ok(r)
    }
}

impl DataRecord {
    pub fn new(
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        w: DMatrix<f64>,
        flag: DisturbanceFlag,
    ) -> Result<Self> {
        let t = u.ncols();
        if x.ncols() != t + 1 || w.ncols() != t || w.nrows() != x.nrows() {
            return Err(Error::dim(format!(
                "x {:?}, u {:?}, w {:?}",
                x.shape(),
                u.shape(),
                w.shape()
            )));
        }
        Ok(Self { x, u, w, flag })
    }

    pub fn nx(&self) -> usize {
        self.x.nrows()
    }

    pub fn nu(&self) -> usize {
        self.u.nrows()
    }

    /// Number of input samples `T`.
    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    /// The first `t` input samples with their states and disturbances.
    pub fn window(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::arg(format!("window {t} outside 1..={}", self.len())));
        }
        Self::new(
            self.x.columns(0, t + 1).into_owned(),
            self.u.columns(0, t).into_owned(),
            self.w.columns(0, t).into_owned(),
            self.flag,
        )
    }

    /// `X = x_[0,T−1]`.
    pub fn x_minus(&self) -> DMatrix<f64> {
        self.x.columns(0, self.len()).into_owned()
    }

    /// `X⁺ = x_[1,T]`.
    pub fn x_plus(&self) -> DMatrix<f64> {
        self.x.columns(1, self.len()).into_owned()
    }

    /// CSV with columns `k, x1.., u1.., w1..`; the final state row leaves the
    /// input and disturbance fields empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.nx()).map(|i| format!("x{i}")));
        header.extend((1..=self.nu()).map(|i| format!("u{i}")));
        header.extend((1..=self.nx()).map(|i| format!("w{i}")));
        wtr.write_record(&header)?;
        for k in 0..=self.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.x.column(k).iter().map(|v| v.to_string()));
            if k < self.len() {
                row.extend(self.u.column(k).iter().map(|v| v.to_string()));
                row.extend(self.w.column(k).iter().map(|v| v.to_string()));
            } else {
                row.extend(std::iter::repeat_n(String::new(), self.nu() + self.nx()));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, flag: DisturbanceFlag) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let count = |p: &str| header.iter().filter(|h| h.starts_with(p)).count();
        let (nx, nu) = (count("x"), count("u"));
        if count("w") != nx || nx == 0 || nu == 0 {
            return Err(Error::arg("CSV header must contain k, x*, u*, w* columns"));
        }
        let (mut xs, mut us, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::arg(format!("bad number {s:?}: {e}")))
            };
            let vals: Vec<&str> = rec.iter().collect();
            xs.push(vals[1..1 + nx].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
            if !vals[1 + nx].trim().is_empty() {
                us.push(
                    vals[1 + nx..1 + nx + nu]
                        .iter()
                        .map(|s| parse(s))
                        .collect::<Result<Vec<_>>>()?,
                );
                ws.push(
                    vals[1 + nx + nu..1 + 2 * nx + nu]
                        .iter()
                        .map(|s| parse(s))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        Self::new(
            from_time_major(&xs, nx)?,
            from_time_major(&us, nu)?,
            from_time_major(&ws, nx)?,
            flag,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DataRecord {
        DataRecord::new(
            DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 2.0, 3.5, 0.5, -1.0, 0.25, 1e-3]),
            DMatrix::from_row_slice(1, 3, &[0.1, -0.2, 0.3]),
            DMatrix::from_row_slice(2, 3, &[0.01, 0.02, 0.03, -0.01, 0.0, 7.0]),
            DisturbanceFlag::Measured,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,x1,x2,u1,w1,w2\n"));
        let back = DataRecord::read_csv(&buf[..], DisturbanceFlag::Measured).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"t\":3"));
        let back: DataRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn window_truncates() {
        let w = sample().window(2).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.x.ncols(), 3);
        assert!(sample().window(4).is_err());
    }
}
