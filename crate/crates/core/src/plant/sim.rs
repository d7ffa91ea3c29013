use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::nonlinear::ControlAffine;
use crate::error::{check_dim, Error, Result};

/// Runs abort once `|y|` exceeds this bound or the state stops being finite.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Uniformly sampled scalar signal; sample `k` sits at time `k * period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub period: f64,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(period: f64, values: Vec<f64>) -> Self {
        Self { period, values }
    }

    pub fn from_fn(period: f64, steps: usize, f: impl Fn(usize) -> f64) -> Self {
        Self::new(period, (0..steps).map(f).collect())
    }

    pub fn constant(period: f64, steps: usize, value: f64) -> Self {
        Self::new(period, vec![value; steps])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample at `t`, holding the final value past the end.
    pub fn at_or_last(&self, t: usize) -> f64 {
        self.values[t.min(self.values.len() - 1)]
    }

    /// Sample at a possibly negative index; zero before the start.
    pub fn at_signed(&self, t: isize) -> f64 {
        if t < 0 {
            0.0
        } else {
            self.at_or_last(t as usize)
        }
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self::new(self.period, self.values.iter().map(|v| v + offset).collect())
    }
}

/// Time-aligned record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub u: Trajectory,
    pub y: Trajectory,
    pub y_d: Trajectory,
    pub x: Vec<DVector<f64>>,
}

impl RunLog {
    pub fn empty(period: f64) -> Self {
        Self {
            u: Trajectory::new(period, Vec::new()),
            y: Trajectory::new(period, Vec::new()),
            y_d: Trajectory::new(period, Vec::new()),
            x: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.y.period
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map_or(0, |x| x.len())
    }

    fn push(&mut self, x: DVector<f64>, u: f64, y: f64, y_d: f64) {
        self.x.push(x);
        self.u.values.push(u);
        self.y.values.push(y);
        self.y_d.values.push(y_d);
    }

    /// Header `t,u,y,y_d,x0,..,x{n-1}`; every value written with 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.state_dim();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "u".into(), "y".into(), "y_d".into()];
        header.extend((0..n).map(|i| format!("x{i}")));
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![
                t.to_string(),
                fmt_full(self.u.values[t]),
                fmt_full(self.y.values[t]),
                fmt_full(self.y_d.values[t]),
            ];
            row.extend(self.x[t].iter().map(|&v| fmt_full(v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, period: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "t" || &headers[1] != "u" {
            return Err(Error::InvalidArgument(
                "run log header must start with t,u,y,y_d".into(),
            ));
        }
        let n = headers.len() - 4;
        let mut log = RunLog::empty(period);
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("row {row_idx}, column {i}: {e}"))
                })
            };
            let t: usize = record[0].trim().parse().map_err(|e| {
                Error::InvalidArgument(format!("row {row_idx}: bad step index: {e}"))
            })?;
            if t != row_idx {
                return Err(Error::InvalidArgument(format!(
                    "step indices must be contiguous from 0 (row {row_idx} has t={t})"
                )));
            }
            let x = (0..n).map(|i| parse(4 + i)).collect::<Result<Vec<_>>>()?;
            log.push(DVector::from_vec(x), parse(1)?, parse(2)?, parse(3)?);
        }
        Ok(log)
    }
}

pub(crate) fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Outcome of a closed-loop run; the log is truncated before the first
/// divergent step.
#[derive(Debug, Clone)]
pub(crate) struct ClosedLoop {
    pub log: RunLog,
    pub diverged_at: Option<usize>,
}

/// Steps `sys` for `y_d.len()` samples, asking `controller(t, x(t), y(t))` for
/// the reference at every step.
pub(crate) fn run_closed_loop<S, F>(
    sys: &S,
    x0: &DVector<f64>,
    y_d: &Trajectory,
    mut controller: F,
) -> Result<ClosedLoop>
where
    S: ControlAffine + ?Sized,
    F: FnMut(usize, &DVector<f64>, f64) -> f64,
{
    check_dim("initial state", sys.state_dim(), x0.len())?;
    let mut log = RunLog::empty(y_d.period);
    let mut x = x0.clone();
    for t in 0..y_d.len() {
        let y = sys.output(&x);
        if !x.iter().all(|v| v.is_finite()) || !y.is_finite() || y.abs() > DIVERGENCE_LIMIT {
            return Ok(ClosedLoop {
                log,
                diverged_at: Some(t),
            });
        }
        let u = controller(t, &x, y);
        if !u.is_finite() {
            return Ok(ClosedLoop {
                log,
                diverged_at: Some(t),
            });
        }
        let next = sys.advance(&x, u);
        log.push(x, u, y, y_d.values[t]);
        x = next;
    }
    Ok(ClosedLoop {
        log,
        diverged_at: None,
    })
}

/// Open-loop response to the reference sequence `u_seq`. The log's `y_d`
/// column repeats the applied reference.
pub fn simulate<S: ControlAffine + ?Sized>(
    sys: &S,
    u_seq: &Trajectory,
    x0: &DVector<f64>,
) -> Result<RunLog> {
    if u_seq.is_empty() {
        return Err(Error::InvalidArgument("input sequence is empty".into()));
    }
    let run = run_closed_loop(sys, x0, u_seq, |t, _, _| u_seq.values[t])?;
    match run.diverged_at {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(run.log),
    }
}
