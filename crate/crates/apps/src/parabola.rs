//! Parameter sweep over parabolas `a x² + b x + c` with `c = 5`: find the
//! `(a, b)` pairs on a grid over `[-1, 1]²` whose curve dips below zero
//! somewhere on `[0, L]`.

use std::io::Write;

use parapat_core::taskmap::{ProblemHooks, TaskInput, Value};
use parapat_core::{Error, Result};

use crate::numfmt::format_g17;

pub const OFFSET: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolaConfig {
    /// Grid points per parameter axis.
    pub m: usize,
    /// Sample points on `[0, L]`.
    pub n: usize,
    pub length: f64,
}

impl ParabolaConfig {
    pub fn new(m: usize, n: usize, length: f64) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::InvalidArgument(format!("m and n must be at least 2, got m={m}, n={n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("L must be positive, got {length}")));
        }
        Ok(ParabolaConfig { m, n, length })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AbPair {
    pub a: f64,
    pub b: f64,
}

/// `n` evenly spaced points from `start` to `stop`, both included.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
            v[n - 1] = stop;
            v
        }
    }
}

pub fn parabola_func(x: &[f64], a: f64, b: f64, c: f64) -> Vec<f64> {
    x.iter().map(|&x| a * x * x + b * x + c).collect()
}

/// One task per `(a, b)`, `a` in the outer loop.
pub fn parabola_initialize(cfg: &ParabolaConfig) -> Vec<TaskInput> {
    let x = linspace(0.0, cfg.length, cfg.n);
    let values = linspace(-1.0, 1.0, cfg.m);
    let mut inputs = Vec::with_capacity(cfg.m * cfg.m);
    for &a in &values {
        for &b in &values {
            inputs.push(
                TaskInput::new()
                    .arg(Value::Reals(x.clone()))
                    .kwarg("a", Value::Real(a))
                    .kwarg("b", Value::Real(b))
                    .kwarg("c", Value::Real(OFFSET)),
            );
        }
    }
    inputs
}

pub fn parabola_task(input: &TaskInput) -> Result<Vec<f64>> {
    let x = input
        .positional
        .first()
        .and_then(Value::as_reals)
        .ok_or_else(|| Error::InvalidArgument("first argument must be the sample points".into()))?;
    Ok(parabola_func(x, input.real("a")?, input.real("b")?, input.real("c")?))
}

/// Keeps the pairs whose sampled minimum is negative.
pub fn parabola_finalize(inputs: &[TaskInput], outputs: &[Vec<f64>]) -> Result<Vec<AbPair>> {
    if inputs.len() != outputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} outputs for {} inputs",
            outputs.len(),
            inputs.len()
        )));
    }
    let mut pairs = Vec::new();
    for (input, result) in inputs.iter().zip(outputs) {
        let min = result.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            pairs.push(AbPair {
                a: input.real("a")?,
                b: input.real("b")?,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub pairs: Vec<AbPair>,
    /// Everything `finalize` received, in task order.
    pub outputs: Vec<Vec<f64>>,
}

/// Task-farm hooks for the sweep.
#[derive(Debug, Clone)]
pub struct ParabolaSweep {
    pub cfg: ParabolaConfig,
    inputs: Vec<TaskInput>,
}

impl ParabolaSweep {
    pub fn new(cfg: ParabolaConfig) -> Self {
        ParabolaSweep { cfg, inputs: Vec::new() }
    }
}

impl ProblemHooks for ParabolaSweep {
    type Input = TaskInput;
    type Output = Vec<f64>;
    type Summary = SweepResult;

    fn initialize(&mut self) -> Result<Vec<TaskInput>> {
        self.inputs = parabola_initialize(&self.cfg);
        Ok(self.inputs.clone())
    }

    fn task(&self, input: &TaskInput) -> Result<Vec<f64>> {
        parabola_task(input)
    }

    fn finalize(&mut self, outputs: Vec<Vec<f64>>) -> Result<SweepResult> {
        let pairs = parabola_finalize(&self.inputs, &outputs)?;
        Ok(SweepResult { pairs, outputs })
    }
}

/// Writes the pairs as CSV with columns `a,b`.
pub fn write_pairs_csv<W: Write>(out: W, pairs: &[AbPair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::App(format!("writing CSV: {e}"));
    w.write_record(["a", "b"]).map_err(io)?;
    for p in pairs {
        w.write_record([format_g17(p.a), format_g17(p.b)]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::App(format!("writing CSV: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use parapat_core::taskmap::solve_problem;

    #[test]
    fn evaluates_pointwise() {
        assert_eq!(parabola_func(&[0.0], 1.0, 0.0, 1.0), vec![1.0]);
        assert_eq!(parabola_func(&[2.0], 1.0, 0.0, 1.0), vec![5.0]);
        assert_eq!(parabola_func(&[10.0], -1.0, -1.0, 5.0), vec![-105.0]);
    }

    #[test]
    fn grid_order_and_endpoints() {
        let inputs = parabola_initialize(&ParabolaConfig::new(2, 5, 10.0).unwrap());
        let ab: Vec<(f64, f64)> = inputs.iter().map(|t| (t.real("a").unwrap(), t.real("b").unwrap())).collect();
        assert_eq!(ab, vec![(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]);

        let inputs = parabola_initialize(&ParabolaConfig::new(3, 5, 10.0).unwrap());
        assert!(inputs.iter().any(|t| t.real("a").unwrap() == 0.0));

        let inputs = parabola_initialize(&ParabolaConfig::new(100, 50, 10.0).unwrap());
        assert_eq!(inputs.len(), 10_000);
        assert_eq!((inputs[0].real("a").unwrap(), inputs[0].real("b").unwrap()), (-1.0, -1.0));
        assert_eq!(inputs[0].real("c").unwrap(), 5.0);
        let x = inputs[0].positional[0].as_reals().unwrap();
        assert_eq!((x.len(), x[0], x[49]), (50, 0.0, 10.0));
    }

    #[test]
    fn keeps_only_negative_dips() {
        let mut sweep = ParabolaSweep::new(ParabolaConfig::new(2, 50, 10.0).unwrap());
        let res = solve_problem(&mut sweep).unwrap();
        assert!(res.pairs.contains(&AbPair { a: -1.0, b: -1.0 }));
        assert!(!res.pairs.contains(&AbPair { a: 1.0, b: 1.0 }));
        for p in &res.pairs {
            let x = linspace(0.0, 10.0, 50);
            assert!(parabola_func(&x, p.a, p.b, OFFSET).iter().any(|&v| v < 0.0));
        }
    }

    #[test]
    fn positive_parameters_give_no_pairs() {
        let x = linspace(0.0, 10.0, 50);
        let inputs: Vec<TaskInput> = linspace(0.01, 1.0, 10)
            .into_iter()
            .flat_map(|a| linspace(0.01, 1.0, 10).into_iter().map(move |b| (a, b)))
            .map(|(a, b)| {
                TaskInput::new()
                    .arg(Value::Reals(x.clone()))
                    .kwarg("a", Value::Real(a))
                    .kwarg("b", Value::Real(b))
                    .kwarg("c", Value::Real(OFFSET))
            })
            .collect();
        let outputs: Vec<Vec<f64>> = inputs.iter().map(|t| parabola_task(t).unwrap()).collect();
        assert!(parabola_finalize(&inputs, &outputs).unwrap().is_empty());
        assert!(parabola_finalize(&inputs, &outputs[1..]).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(ParabolaConfig::new(1, 5, 1.0).is_err());
        assert!(ParabolaConfig::new(2, 1, 1.0).is_err());
        assert!(ParabolaConfig::new(2, 2, 0.0).is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &[AbPair { a: -1.0, b: 0.1 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n-1,0.10000000000000001\n");
    }
}
