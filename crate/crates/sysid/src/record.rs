//! Uniformly sampled four-channel input/output records and their CSV form.

use crate::{Channel, SysidError};
use nalgebra::DMatrix;
use std::io::{BufRead, BufReader, Read, Write};

const CSV_HEADER: &str = "t,u_vx,u_vy,u_z,u_wyaw,y_vx,y_vy,y_z,y_wyaw";

/// Commands `u` and measurements `y` sampled together every `dt` seconds.
/// Rows are samples, columns follow [`Channel::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct IoRecord {
    dt: f64,
    u: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl IoRecord {
    pub fn new(dt: f64, u: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self, SysidError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SysidError::InvalidConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        if u.ncols() != 4 || y.ncols() != 4 {
            return Err(SysidError::LengthMismatch(format!(
                "expected 4 input and 4 output channels, got {} and {}",
                u.ncols(),
                y.ncols()
            )));
        }
        if u.nrows() != y.nrows() {
            return Err(SysidError::LengthMismatch(format!(
                "inputs have {} samples, outputs {}",
                u.nrows(),
                y.nrows()
            )));
        }
        Ok(IoRecord { dt, u, y })
    }

    /// Builds a record from per-channel columns in [`Channel::ALL`] order.
    pub fn from_columns(
        dt: f64,
        u_cols: &[Vec<f64>; 4],
        y_cols: &[Vec<f64>; 4],
    ) -> Result<Self, SysidError> {
        let n = u_cols[0].len();
        for col in u_cols.iter().chain(y_cols.iter()) {
            if col.len() != n {
                return Err(SysidError::LengthMismatch(
                    "channel columns differ in length".into(),
                ));
            }
        }
        let u = DMatrix::from_fn(n, 4, |r, c| u_cols[c][r]);
        let y = DMatrix::from_fn(n, 4, |r, c| y_cols[c][r]);
        IoRecord::new(dt, u, y)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.nrows() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn input_column(&self, ch: Channel) -> Vec<f64> {
        self.u.column(ch.index()).iter().copied().collect()
    }

    pub fn output_column(&self, ch: Channel) -> Vec<f64> {
        self.y.column(ch.index()).iter().copied().collect()
    }

    /// The (command, measurement) series for one input/output pairing.
    pub fn channel_pair(&self, input: Channel, output: Channel) -> (Vec<f64>, Vec<f64>) {
        (self.input_column(input), self.output_column(output))
    }

    /// Keeps every `factor`-th sample, starting at the first. No smoothing
    /// is applied; callers that need anti-aliasing filter beforehand.
    pub fn decimate(&self, factor: usize) -> Result<IoRecord, SysidError> {
        if factor == 0 {
            return Err(SysidError::InvalidConfig("decimation factor is zero".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let rows: Vec<usize> = (0..self.len()).step_by(factor).collect();
        let u = self.u.select_rows(rows.iter());
        let y = self.y.select_rows(rows.iter());
        IoRecord::new(self.dt * factor as f64, u, y)
    }

    /// Copies rows `range` into a new record whose clock restarts at zero.
    pub fn segment(&self, range: std::ops::Range<usize>) -> Result<IoRecord, SysidError> {
        if range.start >= range.end || range.end > self.len() {
            return Err(SysidError::InvalidConfig(format!(
                "segment {range:?} out of bounds for {} samples",
                self.len()
            )));
        }
        let rows: Vec<usize> = range.collect();
        let u = self.u.select_rows(rows.iter());
        let y = self.y.select_rows(rows.iter());
        IoRecord::new(self.dt, u, y)
    }

    /// CSV form: fixed header, one row per sample, time with six decimals,
    /// values in shortest round-trip notation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SysidError> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            write!(w, "{:.6}", i as f64 * self.dt)?;
            for c in 0..4 {
                write!(w, ",{}", self.u[(i, c)])?;
            }
            for c in 0..4 {
                write!(w, ",{}", self.y[(i, c)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<IoRecord, SysidError> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| SysidError::Format("empty file".into()))??;
        if header.trim_end() != CSV_HEADER {
            return Err(SysidError::Format(format!(
                "unexpected header {header:?}"
            )));
        }
        let mut times = Vec::new();
        let mut u_rows: Vec<[f64; 4]> = Vec::new();
        let mut y_rows: Vec<[f64; 4]> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(SysidError::Format(format!(
                    "row {}: expected 9 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let mut vals = [0.0; 9];
            for (k, f) in fields.iter().enumerate() {
                vals[k] = f.trim().parse::<f64>().map_err(|e| {
                    SysidError::Format(format!("row {}: {e} in {f:?}", lineno + 2))
                })?;
            }
            times.push(vals[0]);
            u_rows.push([vals[1], vals[2], vals[3], vals[4]]);
            y_rows.push([vals[5], vals[6], vals[7], vals[8]]);
        }
        if times.len() < 2 {
            return Err(SysidError::Format(
                "need at least two rows to recover the sample interval".into(),
            ));
        }
        let dt = times[1] - times[0];
        // The time column is rounded to microseconds, so successive
        // differences must agree with dt to that resolution.
        for i in 1..times.len() {
            if (times[i] - times[i - 1] - dt).abs() > 2e-6 {
                return Err(SysidError::Format(format!(
                    "non-uniform time step near row {}",
                    i + 2
                )));
            }
        }
        let n = times.len();
        let u = DMatrix::from_fn(n, 4, |r, c| u_rows[r][c]);
        let y = DMatrix::from_fn(n, 4, |r, c| y_rows[r][c]);
        IoRecord::new(dt, u, y)
    }

    pub fn from_csv_str(s: &str) -> Result<IoRecord, SysidError> {
        IoRecord::read_csv(s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_record(n: usize, dt: f64, seed: u64) -> IoRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(n, 4, |_, _| rng.gen_range(-5.0..5.0));
        let y = DMatrix::from_fn(n, 4, |_, _| rng.gen_range(-5.0..5.0));
        IoRecord::new(dt, u, y).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        let ok = DMatrix::zeros(10, 4);
        assert!(IoRecord::new(0.0, ok.clone(), ok.clone()).is_err());
        assert!(IoRecord::new(0.01, DMatrix::zeros(10, 3), ok.clone()).is_err());
        assert!(IoRecord::new(0.01, ok.clone(), DMatrix::zeros(9, 4)).is_err());
        assert!(IoRecord::new(0.01, ok.clone(), ok).is_ok());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let rec = random_record(257, 0.0005, 3);
        let back = IoRecord::from_csv_str(&rec.to_csv_string()).unwrap();
        assert_eq!(back.dt(), rec.dt());
        assert_eq!(back.u(), rec.u());
        assert_eq!(back.y(), rec.y());
    }

    #[test]
    fn csv_layout_matches_the_contract() {
        let u = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.98, -1.0, 0.5, 0.0, 0.98, 0.25]);
        let y = DMatrix::from_row_slice(2, 4, &[0.1, 0.2, 0.97, -0.9, 0.4, 0.1, 0.99, 0.2]);
        let rec = IoRecord::new(0.0005, u, y).unwrap();
        let csv = rec.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "0.000000,1,2,0.98,-1,0.1,0.2,0.97,-0.9"
        );
        assert!(lines.next().unwrap().starts_with("0.000500,"));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(IoRecord::from_csv_str("").is_err());
        assert!(IoRecord::from_csv_str("wrong,header\n1,2\n").is_err());
        let ragged = format!("{CSV_HEADER}\n0.000000,1,2,3,4,5,6,7\n");
        assert!(IoRecord::from_csv_str(&ragged).is_err());
        let bad_float = format!(
            "{CSV_HEADER}\n0.000000,1,2,3,4,5,6,7,8\n0.000500,1,2,x,4,5,6,7,8\n"
        );
        assert!(IoRecord::from_csv_str(&bad_float).is_err());
        let jitter = format!(
            "{CSV_HEADER}\n0.000000,1,2,3,4,5,6,7,8\n0.000500,1,2,3,4,5,6,7,8\n0.001500,1,2,3,4,5,6,7,8\n"
        );
        assert!(IoRecord::from_csv_str(&jitter).is_err());
    }

    #[test]
    fn decimation_keeps_every_factor_th_sample() {
        let rec = random_record(101, 0.0005, 9);
        let dec = rec.decimate(20).unwrap();
        assert_eq!(dec.len(), 6);
        assert_eq!(dec.dt(), 0.01);
        for (i, row) in (0..rec.len()).step_by(20).enumerate() {
            assert_eq!(dec.u()[(i, 2)], rec.u()[(row, 2)]);
            assert_eq!(dec.y()[(i, 0)], rec.y()[(row, 0)]);
        }
    }

    #[test]
    fn segments_and_channel_pairs_line_up() {
        let rec = random_record(50, 0.01, 11);
        let seg = rec.segment(10..20).unwrap();
        assert_eq!(seg.len(), 10);
        let (u, y) = seg.channel_pair(Channel::Vy, Channel::Vy);
        assert_eq!(u[0], rec.u()[(10, 1)]);
        assert_eq!(y[9], rec.y()[(19, 1)]);
        assert!(rec.segment(40..60).is_err());
        assert!(rec.segment(20..20).is_err());
    }
}
