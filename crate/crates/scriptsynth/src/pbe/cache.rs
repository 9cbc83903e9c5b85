use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{synthesize, IOExample, PbeOptions, SynthesisResult};
use crate::hidden::HiddenFnBody;

/// Digest of a constraint set that ignores example order and trace labels.
pub fn constraint_digest(examples: &[IOExample]) -> [u8; 32] {
    let mut lines: Vec<String> = examples
        .iter()
        .map(|e| {
            let args: Vec<String> =
                e.args.iter().map(|a| a.as_ref().map_or_else(|| "<absent>".to_string(), |v| v.canonical())).collect();
            format!("{}=>{}", args.join("|"), e.out.canonical())
        })
        .collect();
    lines.sort();
    lines.dedup();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    h.finalize().into()
}

#[derive(Clone, Debug)]
enum Entry {
    Sat(HiddenFnBody),
    Unsat { budget: usize },
}

/// Memoizes synthesis answers. An unsatisfiable answer is reused only for
/// budgets no larger than the one it was computed under.
#[derive(Default, Debug)]
pub struct ConstraintCache {
    entries: HashMap<[u8; 32], Entry>,
    pub hits: usize,
    pub misses: usize,
}

impl ConstraintCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&mut self, examples: &[IOExample], budget: usize) -> Option<SynthesisResult> {
        let hit = match self.entries.get(&constraint_digest(examples)) {
            Some(Entry::Sat(f)) if f.body.size() <= budget => Some(SynthesisResult::Sat(f.clone())),
            Some(Entry::Unsat { budget: b }) if budget <= *b => Some(SynthesisResult::Unsat { timed_out: false }),
            _ => None,
        };
        if hit.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        hit
    }

    pub fn store(&mut self, examples: &[IOExample], budget: usize, result: &SynthesisResult) {
        let key = constraint_digest(examples);
        match result {
            SynthesisResult::Sat(f) => {
                self.entries.insert(key, Entry::Sat(f.clone()));
            }
            SynthesisResult::Unsat { timed_out: false } => {
                self.entries.insert(key, Entry::Unsat { budget });
            }
            // a timeout says nothing definite about the budget
            SynthesisResult::Unsat { timed_out: true } => {}
        }
    }

    /// Looks up, or synthesizes and stores.
    pub fn solve(&mut self, examples: &[IOExample], opts: &PbeOptions) -> SynthesisResult {
        if let Some(r) = self.lookup(examples, opts.max_size) {
            return r;
        }
        let r = synthesize(examples, opts);
        self.store(examples, opts.max_size, &r);
        r
    }
}
