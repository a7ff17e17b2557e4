use std::fmt;

use indexmap::IndexMap;

use super::predicate::Predicate;
use crate::action::Verb;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRule {
    pub from: String,
    pub to: String,
    /// Lowest fires first among simultaneously true transitions.
    pub priority: i64,
    pub predicate: Predicate,
    /// Natural-language rendering shown in prompts.
    pub gloss: String,
}

/// Observation-derived or memory-derived action parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    /// `$home`
    Home,
    /// `$enemy_home`
    EnemyHome,
    /// `$front`: region of the visible enemy army unless it is at our home,
    /// otherwise the center.
    Front,
    /// `$Name`: current value of a declared strategy variable.
    Variable(String),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Home => f.write_str("$home"),
            Binding::EnemyHome => f.write_str("$enemy_home"),
            Binding::Front => f.write_str("$front"),
            Binding::Variable(v) => write!(f, "${v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateArg {
    Literal(String),
    Binding(Binding),
}

impl fmt::Display for TemplateArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateArg::Literal(s) => f.write_str(s),
            TemplateArg::Binding(b) => b.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTemplate {
    pub verb: Verb,
    pub arg: Option<TemplateArg>,
}

impl fmt::Display for ActionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(a) => write!(f, "{}({a})", self.verb),
            None => write!(f, "{}()", self.verb),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BtNode {
    Selector(Vec<BtNode>),
    Sequence(Vec<BtNode>),
    Condition(Predicate),
    Action(ActionTemplate),
}

impl BtNode {
    /// Action templates reachable in this tree, in depth-first order.
    pub fn action_templates(&self) -> Vec<&ActionTemplate> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if let BtNode::Action(t) = n {
                out.push(t);
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a BtNode)) {
        f(self);
        if let BtNode::Selector(children) | BtNode::Sequence(children) = self {
            for c in children {
                c.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicRule {
    pub predicate: Predicate,
    pub actions: Vec<ActionTemplate>,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDecl {
    pub name: String,
    /// Value used for states without an explicit assignment.
    pub default: Option<String>,
    pub per_state: IndexMap<String, String>,
}

impl VariableDecl {
    pub fn value_for(&self, state: &str) -> Option<&str> {
        self.per_state
            .get(state)
            .or(self.default.as_ref())
            .map(String::as_str)
    }
}

/// Macro-strategic state machine, per-state behavior trees and atomic rules.
/// Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSpec {
    pub states: Vec<String>,
    pub initial_state: String,
    pub transitions: Vec<TransitionRule>,
    pub policies: IndexMap<String, BtNode>,
    pub rules: Vec<AtomicRule>,
    /// Declared strategy variables in order; always includes `Tactic`.
    pub variables: Vec<VariableDecl>,
}

impl MachineSpec {
    pub fn has_state(&self, s: &str) -> bool {
        self.states.iter().any(|x| x == s)
    }

    pub fn transitions_from<'a>(&'a self, state: &'a str) -> impl Iterator<Item = &'a TransitionRule> {
        self.transitions.iter().filter(move |t| t.from == state)
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }
}
