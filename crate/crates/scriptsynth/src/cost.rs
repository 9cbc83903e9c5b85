//! Program cost functions.

use thiserror::Error;

use crate::dsl::{Instruction, Program, BRANCH_PARAM};
use crate::eval::ExecLog;
use crate::json::JsonValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynCostWeights {
    pub statement: u64,
    pub hidden_let: u64,
    pub param: u64,
    pub br_use: u64,
}

impl Default for SynCostWeights {
    fn default() -> Self {
        SynCostWeights { statement: 10, hidden_let: 0, param: 1, br_use: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceCostWeights {
    pub surplus: u64,
    pub br_use: u64,
    pub br_param: u64,
}

impl Default for TraceCostWeights {
    fn default() -> Self {
        TraceCostWeights { surplus: 2, br_use: 1, br_param: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostFn {
    Syn(SynCostWeights),
    Traces(TraceCostWeights),
}

#[derive(Debug, Error)]
pub enum CostConfigError {
    #[error("cost config is not valid JSON: {0}")]
    Json(String),
    #[error("cost config field {0} must be a non-negative integer")]
    Field(String),
    #[error("unknown cost config field {0}")]
    Unknown(String),
}

impl SynCostWeights {
    /// Reads weight overrides such as `{"statement": 10, "param": 1}`.
    pub fn from_json(text: &str) -> Result<SynCostWeights, CostConfigError> {
        let v = JsonValue::parse(text).map_err(|e| CostConfigError::Json(e.to_string()))?;
        let JsonValue::Object(map) = v else {
            return Err(CostConfigError::Json("expected an object".into()));
        };
        let mut w = SynCostWeights::default();
        for (k, v) in map {
            let JsonValue::Int(n) = v else { return Err(CostConfigError::Field(k)) };
            let n = u64::try_from(n).map_err(|_| CostConfigError::Field(k.clone()))?;
            match k.as_str() {
                "statement" => w.statement = n,
                "hidden_let" => w.hidden_let = n,
                "param" => w.param = n,
                "br_use" => w.br_use = n,
                _ => return Err(CostConfigError::Unknown(k)),
            }
        }
        Ok(w)
    }
}

/// Occurrences of `br` anywhere in the body.
pub fn br_uses(p: &Program) -> u64 {
    fn walk(seq: &[Instruction]) -> u64 {
        seq.iter()
            .map(|ins| {
                let own = ins.own_uses().iter().filter(|v| *v == BRANCH_PARAM).count() as u64;
                own + ins.blocks().into_iter().map(|b| walk(b)).sum::<u64>()
            })
            .sum()
    }
    walk(&p.body)
}

fn count(seq: &[Instruction], visible: &mut u64, hidden: &mut u64, control: &mut u64, ret: &mut u64) {
    for ins in seq {
        match ins {
            Instruction::LetVisible { .. } => *visible += 1,
            Instruction::LetHidden { .. } => *hidden += 1,
            Instruction::Ite { .. } | Instruction::Retry { .. } | Instruction::Foreach { .. } => *control += 1,
            Instruction::Return => *ret += 1,
            Instruction::Empty => {}
        }
        for b in ins.blocks() {
            count(b, visible, hidden, control, ret);
        }
    }
}

/// Syntactic cost: weighted statements, parameters and uses of `br`.
pub fn cost_syn(p: &Program, w: &SynCostWeights) -> u64 {
    let (mut visible, mut hidden, mut control, mut ret) = (0, 0, 0, 0);
    count(&p.body, &mut visible, &mut hidden, &mut control, &mut ret);
    w.statement * (visible + control + ret) + w.hidden_let * hidden + w.param * p.params.len() as u64 + w.br_use * br_uses(p)
}

/// Trace-coverage cost: surplus of statements over the records they
/// account for, plus penalties while `br` is still around.
pub fn cost_traces(p: &Program, logs: &[ExecLog], total_records: usize, w: &TraceCostWeights) -> u64 {
    let (mut visible, mut hidden, mut control, mut ret) = (0, 0, 0, 0);
    count(&p.body, &mut visible, &mut hidden, &mut control, &mut ret);
    let mut uses = 0u64;
    for log in logs {
        for v in &log.visits {
            if matches!(p.stmt(&v.site), Some(Instruction::LetVisible { .. })) {
                uses += (v.rec_end - v.rec_start) as u64;
            }
        }
    }
    let surplus = (total_records as u64 + visible + ret).saturating_sub(uses);
    let br_param = p.params.iter().any(|x| x == BRANCH_PARAM) as u64;
    w.surplus * surplus + w.br_use * br_uses(p) + w.br_param * br_param
}

impl CostFn {
    pub fn eval(&self, p: &Program, logs: &[ExecLog], total_records: usize) -> u64 {
        match self {
            CostFn::Syn(w) => cost_syn(p, w),
            CostFn::Traces(w) => cost_traces(p, logs, total_records, w),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostFn::Syn(_) => "syn",
            CostFn::Traces(_) => "traces",
        }
    }
}
