//! Declarative macro-strategic state machines with per-state behavior trees
//! and atomic rules, their text format, and the symbolic executor.

mod dsl;
mod exec;
mod lexer;
mod predicate;
mod spec;

pub use dsl::{parse_spec, SpecError};
pub use exec::{symbolic_execute, Decision, ExecError};
pub use lexer::Pos;
pub use predicate::{evaluate_predicate, CmpOp, Feature, NumExpr, Predicate};
pub use spec::{
    ActionTemplate, AtomicRule, Binding, BtNode, MachineSpec, TemplateArg, TransitionRule,
    VariableDecl,
};

use crate::sim::SimConfig;

/// The shipped default strategy.
pub const DEFAULT_SPEC: &str = include_str!("../../assets/default.masmp");

impl MachineSpec {
    pub fn default_spec(catalog: &SimConfig) -> MachineSpec {
        parse_spec(DEFAULT_SPEC, catalog).expect("bundled default spec parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_parses() {
        let spec = MachineSpec::default_spec(&SimConfig::default_config());
        assert_eq!(spec.states, vec!["opening", "defensive", "aggressive"]);
        assert_eq!(spec.initial_state, "opening");
        assert_eq!(spec.variable_names().collect::<Vec<_>>(), vec!["Tactic", "PriorityUnit"]);
    }
}
