use super::*;
use crate::cost::{cost_syn, SynCostWeights};
use crate::dsl::parse_program;
use crate::trace::parse_traces;

const STOP: &str = r#"[
 [{"api":"ec2.StopInstances","request":{"InstanceIds":["i-09dc8"],"Force":false},"response":{"StoppingInstances":[{"InstanceId":"i-09dc8"}]}},
  {"api":"ec2.DescribeInstanceStatus","request":{"InstanceIds":["i-09dc8"],"IncludeAllInstances":true},
   "response":{"InstanceStatuses":[{"InstanceId":"i-09dc8","InstanceState":{"Code":64,"Name":"stopping"}}]}},
  {"api":"ec2.StopInstances","request":{"InstanceIds":["i-09dc8"],"Force":true},"response":{"StoppingInstances":[{"InstanceId":"i-09dc8"}]}}],
 [{"api":"ec2.StopInstances","request":{"InstanceIds":["i-07f34"],"Force":false},"response":{"StoppingInstances":[{"InstanceId":"i-07f34"}]}},
  {"api":"ec2.DescribeInstanceStatus","request":{"InstanceIds":["i-07f34"],"IncludeAllInstances":true},
   "response":{"InstanceStatuses":[{"InstanceId":"i-07f34","InstanceState":{"Code":80,"Name":"stopped"}}]}}]
]"#;

fn setup(text: &str) -> (TraceSet, State) {
    let traces = parse_traces(text.as_bytes()).unwrap();
    let k = traces.default_retry_bound();
    let st = build_initial(&traces, k).unwrap();
    (traces, st)
}

fn syn(p: &Program) -> u64 {
    cost_syn(p, &SynCostWeights::default())
}

/// Applies the cheapest strictly improving rewrite of `kind`.
fn step(st: &State, traces: &TraceSet, kind: RuleKind) -> Option<(RuleId, State)> {
    let unsat = BTreeSet::new();
    let ctx = RewriteCtx { traces, k_bound: traces.default_retry_bound(), unsat_args: &unsat };
    let before = syn(&st.program);
    let mut best: Option<(u64, RuleId, State)> = None;
    for rw in enumerate_rewrites(st, &ctx, kind) {
        let Ok(next) = apply(st, &rw, &ctx) else { continue };
        let c = syn(&next.program);
        if c < before && best.as_ref().is_none_or(|(b, _, _)| c < *b) {
            best = Some((c, rw.rule, next));
        }
    }
    best.map(|(_, r, s)| (r, s))
}

#[test]
fn initial_program_shape() {
    let (_, st) = setup(STOP);
    assert_eq!(syn(&st.program), 62);
    assert!(st.text().starts_with("lambda br.\nif br == 1 {\n  let x_1_1 = ec2.StopInstances("));
    let one = parse_traces(b"[[]]").unwrap();
    assert!(matches!(build_initial(&one, 2), Err(InitError::TooFew(1))));
}

#[test]
fn motivating_trajectory() {
    let (traces, mut st) = setup(STOP);
    let mut costs = vec![syn(&st.program)];
    let mut rules = Vec::new();
    while let Some((r, next)) = step(&st, &traces, RuleKind::Refinement) {
        costs.push(syn(&next.program));
        rules.push(r);
        st = next;
    }
    assert_eq!(costs, vec![62, 53, 44, 43]);
    assert_eq!(rules, vec![RuleId::PullCallOut, RuleId::PullCallOut, RuleId::IntroduceParameter]);
    let (r, open) = step(&st, &traces, RuleKind::Synthesis).unwrap();
    assert_eq!(r, RuleId::EliminateBranch);
    assert_eq!(syn(&open.program), 41);
    assert!(!open.program.params.iter().any(|p| p == BRANCH_PARAM));
    let ex = open.hole_examples();
    let (hole, examples) = ex.iter().next().unwrap();
    assert_eq!(open.program.holes, vec![hole.clone()]);
    let outs: Vec<_> = examples.iter().map(|e| (e.trace, e.out.clone())).collect();
    assert_eq!(outs, vec![(1, JsonValue::Bool(true)), (2, JsonValue::Bool(false))]);
    assert_eq!(examples[0].args.len(), 3);
}

#[test]
fn lowering_moves_equality_into_condition() {
    let p = parse_program(
        "lambda i.\nlet a = s.A(x=i)\nlet c = f(i, a)\nif c {\n  let b = s.B()\n}\nwhere\nf := ($0, $1) -> !($1.st.name == \"done\")\n",
    )
    .unwrap();
    let q = lower_hidden(&p, "f");
    let text = print_program(&q);
    assert!(text.contains("let c = f(a)\nif c != \"done\" {"), "{text}");
    assert!(text.contains("f := ($0) -> $0.st.name"), "{text}");
}

#[test]
fn retry_and_foreach_spans() {
    let polls = r#"[
     [{"api":"s.Start","request":{},"response":{"id":"a"}},
      {"api":"s.Poll","request":{"id":"a"},"response":{"s":"wait"}},
      {"api":"s.Poll","request":{"id":"a"},"response":{"s":"done"}}],
     [{"api":"s.Start","request":{},"response":{"id":"b"}},
      {"api":"s.Poll","request":{"id":"b"},"response":{"s":"done"}}]
    ]"#;
    let (traces, mut st) = setup(polls);
    while let Some((_, next)) = step(&st, &traces, RuleKind::Refinement) {
        st = next;
    }
    let unsat = BTreeSet::new();
    let ctx = RewriteCtx { traces: &traces, k_bound: traces.default_retry_bound(), unsat_args: &unsat };
    let all = enumerate_rewrites(&st, &ctx, RuleKind::Synthesis);
    assert!(all.iter().any(|r| r.rule == RuleId::IntroduceRetry), "{}", st.text());

    let many = r#"[
     [{"api":"s.Put","request":{"k":1},"response":null},{"api":"s.Put","request":{"k":2},"response":null}],
     [{"api":"s.Put","request":{"k":3},"response":null}]
    ]"#;
    let (traces, st) = setup(many);
    let ctx = RewriteCtx { traces: &traces, k_bound: traces.default_retry_bound(), unsat_args: &unsat };
    let fe: Vec<_> = enumerate_rewrites(&st, &ctx, RuleKind::Synthesis)
        .into_iter()
        .filter(|r| r.rule == RuleId::IntroduceForeach)
        .collect();
    assert!(!fe.is_empty(), "{}", st.text());
    let next = apply(&st, &fe[0], &ctx).unwrap();
    let ex = next.hole_examples();
    let outs: Vec<String> = ex.values().next().unwrap().iter().map(|e| e.out.canonical()).collect();
    assert_eq!(outs, vec!["[1,2]", "[3]"]);
}
