use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use helfrich_core::Real;
use helfrich_core::flow::{FlowError, FlowSink, FlowState, TimeSeriesRecord, TIME_SERIES_COLUMNS};

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streams `series.csv`, one row per record.
pub struct CsvSeries {
    out: BufWriter<File>,
}

impl CsvSeries {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", TIME_SERIES_COLUMNS.join(","))?;
        Ok(Self { out })
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn csv_row(rec: &TimeSeriesRecord) -> String {
    let v = rec.values();
    let mut cells: Vec<String> = v[..v.len() - 1].iter().map(|&x| fmt_f64(x)).collect();
    cells.push(rec.step_rejections.to_string());
    cells.join(",")
}

impl<T> FlowSink<T> for CsvSeries {
    fn record(&mut self, record: &TimeSeriesRecord) -> Result<(), FlowError> {
        writeln!(self.out, "{}", csv_row(record)).map_err(|e| FlowError::Sink(format!("series.csv: {e}")))
    }
}

/// Prints a progress line to stderr every `every` accepted steps.
pub struct Progress {
    pub every: usize,
}

impl<T: Real> FlowSink<T> for Progress {
    fn accepted(&mut self, state: &FlowState<T>) -> Result<(), FlowError> {
        if state.step_index > 0 && state.step_index % self.every == 0 {
            eprintln!(
                "step {:>7}  t = {:.6e}  dt = {:.3e}  A = {:.6e}  E = {:.9e}  |xi| = {:.3e}",
                state.step_index,
                state.t,
                state.dt,
                state.area(),
                state.energy,
                state.gradient_norm
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, std::f64::consts::PI, 1e-300, -123456.789e10] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    proptest::proptest! {
        #[test]
        fn any_finite_value_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            proptest::prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
