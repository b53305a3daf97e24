use std::io::{Read, Write};

use thiserror::Error;

/// Response-time samples (ms) observed at one request load (requests/s).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub load: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(load: f64, samples: Vec<f64>) -> Self {
        Self { load, samples }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("expected header `load_rps,response_ms`, found `{0}`")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

const HEADER: [&str; 2] = ["load_rps", "response_ms"];

/// Reads `load_rps,response_ms` rows, one trace per distinct load, ordered by
/// load.
pub fn read_traces_csv<R: Read>(reader: R) -> Result<Vec<Trace>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(TraceError::Header(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut traces: Vec<Trace> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let parse = |idx: usize| -> Result<f64, TraceError> {
            record
                .get(idx)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| TraceError::Row {
                    row,
                    reason: format!("column {} is not a number", HEADER[idx]),
                })
        };
        let (load, value) = (parse(0)?, parse(1)?);
        if !(value.is_finite() && value > 0.0) {
            return Err(TraceError::Row {
                row,
                reason: format!("response_ms must be > 0, got {value}"),
            });
        }
        match traces.iter_mut().find(|t| t.load == load) {
            Some(trace) => trace.samples.push(value),
            None => traces.push(Trace::new(load, vec![value])),
        }
    }
    traces.sort_by(|a, b| a.load.total_cmp(&b.load));
    Ok(traces)
}

pub fn write_traces_csv<W: Write>(traces: &[Trace], writer: W) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    for trace in traces {
        for sample in &trace.samples {
            wtr.write_record([trace.load.to_string(), sample.to_string()])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_rows_by_load() {
        let text = "load_rps,response_ms\n20,5.5\n10,3\n20,6.25\n";
        let traces = read_traces_csv(text.as_bytes()).unwrap();
        assert_eq!(
            traces,
            vec![
                Trace::new(10.0, vec![3.0]),
                Trace::new(20.0, vec![5.5, 6.25])
            ]
        );
        let mut out = Vec::new();
        write_traces_csv(&traces, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "load_rps,response_ms\n10,3\n20,5.5\n20,6.25\n"
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            read_traces_csv("load,ms\n1,2\n".as_bytes()),
            Err(TraceError::Header(_))
        ));
        assert!(matches!(
            read_traces_csv("load_rps,response_ms\n1,-2\n".as_bytes()),
            Err(TraceError::Row { row: 2, .. })
        ));
        assert!(matches!(
            read_traces_csv("load_rps,response_ms\n1,abc\n".as_bytes()),
            Err(TraceError::Row { row: 2, .. })
        ));
    }
}
