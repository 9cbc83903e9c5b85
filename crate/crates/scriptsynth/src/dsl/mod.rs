//! Script language: AST, printer, parser and structural comparison.

mod ast;
mod equiv;
mod lexer;
mod parse;
mod print;

pub use ast::*;
pub use equiv::equiv_mod_renaming;
pub use parse::{parse_hidden_fn, parse_program};
pub use print::print_program;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    const STOP_COND: &str = r#"lambda instanceId.
let instanceIds = list(instanceId)
let stopResult = ec2.StopInstances(instanceIds=instanceIds, force=false)
let statusResult = ec2.DescribeInstanceStatus(instanceIds=instanceIds, includeAllInstances=true)
let instanceState = extractInstanceStatus(statusResult)
if instanceState != "stopped" {
  let forceStop = ec2.StopInstances(instanceIds=instanceIds, force=true)
}
where
extractInstanceStatus := ($0) -> $0.InstanceStatuses[0].InstanceState.Name
"#;

    #[test]
    fn stop_cond_round_trips() {
        let p = parse_program(STOP_COND).unwrap();
        assert_eq!(print_program(&p), STOP_COND);
        assert!(matches!(p.body[0], Instruction::LetHidden { .. }));
        assert_eq!(p.body.len(), 5);
    }

    #[test]
    fn ternaries_and_holes() {
        let src = r#"LAMBDA phi_1.
lambda br, i_1.
let x = s.A(a=(br == 1) ? ["i-1"] : ((br == 2) ? "b" : 3), b=i_1)
let c = phi_1(i_1, x)
if c || !(br == 2 && x == null) {
  return
} else {
  skip
}
retry {
  let y = s.B()
} until y >= x
for (u) in x {
  let z = s.C(u=u)
}
"#;
        let p = parse_program(src).unwrap();
        assert_eq!(print_program(&p), src);
        assert_eq!(p.holes, vec!["phi_1"]);
        assert!(matches!(p.body[1], Instruction::LetHidden { .. }));
    }

    #[test]
    fn hidden_bodies_round_trip() {
        for src in [
            "($0, $1) -> $1..id[0]",
            "($0) -> !($0.a.\"b-c\"[1:3] == 5) && empty($0.x)",
            "($0) -> 1 + length($0.items)",
            "($0) -> \"pre-\" ++ $0.name",
            "($0) -> ($0.a == 1) && $0.b == true",
            "($0, $1) -> [$0, \"x\", $1.k]",
            "() -> {\"a\":[1,2]}",
        ] {
            let f = parse_hidden_fn(src).unwrap();
            let printed = f.to_string();
            assert_eq!(parse_hidden_fn(&printed).unwrap(), f, "{src} -> {printed}");
        }
        let named = parse_hidden_fn("(resp) -> resp.members").unwrap();
        assert_eq!(named.to_string(), "($0) -> $0.members");
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("lambda x.\nlet y = s.A(a=)\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 15));
        let e = parse_program("lambda x.\nif x {\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse_program("lambda .\n").unwrap().body.is_empty());
        assert!(parse_program("lambda x. return").is_ok());
    }
}
