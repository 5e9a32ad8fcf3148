//! Serial and parallel drivers for the `initialize → map(task) → finalize`
//! pattern.
//!
//! `initialize` runs on every rank and must be deterministic: each rank
//! recomputes the full input list and works on its own contiguous slice.
//! Outputs are gathered to rank 0, which alone runs `finalize`.

use std::collections::BTreeMap;

use crate::codec::Codec;
use crate::comm::Comm;
use crate::error::{CodecError, Error, Result};
use crate::partition::{collect_subproblem_output_args, get_subproblem_input_args, subproblem_offset};

/// One argument value of a task invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
    Reals(Vec<f64>),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_reals(&self) -> Option<&[f64]> {
        match self {
            Value::Reals(v) => Some(v),
            _ => None,
        }
    }
}

impl Codec for Value {
    fn encode(&self, buf: &mut Vec<u8>) {
        match self {
            Value::Int(i) => {
                buf.push(0);
                i.encode(buf);
            }
            Value::Real(x) => {
                buf.push(1);
                x.encode(buf);
            }
            Value::Text(s) => {
                buf.push(2);
                s.encode(buf);
            }
            Value::Reals(v) => {
                buf.push(3);
                v.encode(buf);
            }
        }
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(match u8::decode(input)? {
            0 => Value::Int(i64::decode(input)?),
            1 => Value::Real(f64::decode(input)?),
            2 => Value::Text(String::decode(input)?),
            3 => Value::Reals(Vec::decode(input)?),
            t => return Err(CodecError::InvalidTag(t)),
        })
    }
}

/// Positional and keyword arguments for one task call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskInput {
    pub positional: Vec<Value>,
    pub keyword: BTreeMap<String, Value>,
}

impl TaskInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arg(mut self, v: Value) -> Self {
        self.positional.push(v);
        self
    }

    pub fn kwarg(mut self, name: &str, v: Value) -> Self {
        self.keyword.insert(name.to_string(), v);
        self
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        self.keyword
            .get(name)
            .and_then(Value::as_real)
            .ok_or_else(|| Error::InvalidArgument(format!("missing real keyword argument `{name}`")))
    }
}

impl Codec for TaskInput {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.positional.encode(buf);
        self.keyword.encode(buf);
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(TaskInput {
            positional: Vec::decode(input)?,
            keyword: BTreeMap::decode(input)?,
        })
    }
}

/// The three user hooks of a task-farm problem.
///
/// `task` must be pure given its input; results may not depend on which rank
/// runs a task or in what order.
pub trait ProblemHooks {
    type Input;
    type Output: Codec;
    type Summary;

    fn initialize(&mut self) -> Result<Vec<Self::Input>>;
    fn task(&self, input: &Self::Input) -> Result<Self::Output>;
    fn finalize(&mut self, outputs: Vec<Self::Output>) -> Result<Self::Summary>;
}

fn run_tasks<H: ProblemHooks>(hooks: &H, inputs: &[H::Input], offset: usize) -> Result<Vec<H::Output>> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            hooks.task(input).map_err(|e| match e {
                Error::Task { .. } => e,
                other => Error::Task {
                    index: offset + i,
                    message: other.to_string(),
                },
            })
        })
        .collect()
}

pub fn solve_problem<H: ProblemHooks>(hooks: &mut H) -> Result<H::Summary> {
    let inputs = hooks.initialize()?;
    let outputs = run_tasks(hooks, &inputs, 0)?;
    hooks.finalize(outputs)
}

/// Runs the problem across the group; rank 0 returns `Some(summary)`.
pub fn parallel_solve_problem<H: ProblemHooks>(hooks: &mut H, comm: &Comm) -> Result<Option<H::Summary>> {
    let inputs = hooks.initialize()?;
    let mine = get_subproblem_input_args(&inputs, comm.rank(), comm.size())?;
    let offset = subproblem_offset(inputs.len(), comm.rank(), comm.size())?;
    let outputs = run_tasks(hooks, mine, offset)?;
    match collect_subproblem_output_args(outputs, comm)? {
        Some(all) => Ok(Some(hooks.finalize(all)?)),
        None => Ok(None),
    }
}
