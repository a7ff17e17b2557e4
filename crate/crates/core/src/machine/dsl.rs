//! Parser for the line-oriented machine spec format. The grammar is
//! documented in `docs/spec-dsl.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use super::lexer::{lex_line, Cursor, Pos, Tok, Token};
use super::predicate::{parse_predicate, Predicate};
use super::spec::{
    ActionTemplate, AtomicRule, Binding, BtNode, MachineSpec, TemplateArg, TransitionRule,
    VariableDecl,
};
use crate::action::{ArgKind, Verb};
use crate::memory::{is_valid_value, TACTIC};
use crate::sim::{Region, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

impl std::error::Error for SpecError {}

impl From<(Pos, String)> for SpecError {
    fn from((pos, message): (Pos, String)) -> Self {
        Self { pos, message }
    }
}

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError {
        pos,
        message: message.into(),
    })
}

const SECTIONS: [&str; 6] = ["STATES", "VARIABLES", "TRANSITIONS", "POLICY", "TREE", "RULES"];

enum Section {
    States,
    Variables,
    Transitions,
    Policy(usize),
    Rules,
}

enum RawBt {
    Selector(Vec<RawBt>),
    Sequence(Vec<RawBt>),
    Condition(Predicate),
    Action(RawTemplate),
    Use(String, Pos),
}

struct RawTemplate {
    verb: Verb,
    arg: Option<TemplateArg>,
    pos: Pos,
}

struct RawPolicy {
    /// State name, or subtree name when `named_tree` is set.
    state: String,
    named_tree: bool,
    pos: Pos,
    tokens: Vec<Token>,
    end: Pos,
}

struct RawVariable {
    name: String,
    pos: Pos,
    default: Option<String>,
    per_state: Vec<(String, String, Pos)>,
}

struct RawTransition {
    rule: TransitionRule,
    from_pos: Pos,
    to_pos: Pos,
    prio_pos: Pos,
}

struct RawRule {
    predicate: Predicate,
    actions: Vec<RawTemplate>,
    gloss: String,
}

fn is_header(word: &str) -> bool {
    word.len() >= 2 && word.chars().all(|c| c.is_ascii_uppercase() || c == '_')
}

/// Parses and validates a machine spec against the unit catalog.
pub fn parse_spec(text: &str, catalog: &SimConfig) -> Result<MachineSpec, SpecError> {
    let mut section: Option<Section> = None;
    let mut states: Vec<(String, Pos)> = Vec::new();
    let mut variables: Vec<RawVariable> = Vec::new();
    let mut transitions: Vec<RawTransition> = Vec::new();
    let mut policies: Vec<RawPolicy> = Vec::new();
    let mut rules: Vec<RawRule> = Vec::new();
    let mut seen_sections: BTreeSet<&'static str> = BTreeSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = lex_line(raw_line, line_no)?;
        let Some(first) = tokens.first() else { continue };
        let end = Pos {
            line: line_no,
            col: raw_line.chars().count() + 1,
        };
        if let Tok::Ident(word) = &first.tok {
            if is_header(word) {
                let Some(&name) = SECTIONS.iter().find(|s| **s == word) else {
                    return err(first.pos, format!("unknown section `{word}`"));
                };
                let mut cur = Cursor::new(&tokens[1..], end);
                if name == "POLICY" || name == "TREE" {
                    let what = if name == "TREE" { "a tree name after TREE" } else { "a state name after POLICY" };
                    let (state, pos) = cur.ident(what)?;
                    cur.expect_end()?;
                    policies.push(RawPolicy {
                        state,
                        named_tree: name == "TREE",
                        pos,
                        tokens: Vec::new(),
                        end,
                    });
                    section = Some(Section::Policy(policies.len() - 1));
                } else {
                    cur.expect_end()?;
                    if !seen_sections.insert(name) {
                        return err(first.pos, format!("duplicate section `{name}`"));
                    }
                    section = Some(match name {
                        "STATES" => Section::States,
                        "VARIABLES" => Section::Variables,
                        "TRANSITIONS" => Section::Transitions,
                        _ => Section::Rules,
                    });
                }
                continue;
            }
        }
        let mut cur = Cursor::new(&tokens, end);
        match &section {
            None => return err(first.pos, "content before the first section header"),
            Some(Section::States) => {
                let (name, pos) = cur.ident("a state name")?;
                cur.expect_end()?;
                if states.iter().any(|(s, _)| *s == name) {
                    return err(pos, format!("duplicate state `{name}`"));
                }
                states.push((name, pos));
            }
            Some(Section::Variables) => variables.push(parse_variable_line(&mut cur)?),
            Some(Section::Transitions) => transitions.push(parse_transition_line(&mut cur)?),
            Some(Section::Policy(i)) => {
                let p = &mut policies[*i];
                p.tokens.extend(tokens.iter().cloned());
                p.end = end;
            }
            Some(Section::Rules) => rules.push(parse_rule_line(&mut cur)?),
        }
    }

    // States.
    let Some((initial_state, _)) = states.first().cloned() else {
        return err(Pos { line: 1, col: 1 }, "missing STATES section or no states declared");
    };
    let state_set: BTreeSet<&str> = states.iter().map(|(s, _)| s.as_str()).collect();
    let check_state = |name: &str, pos: Pos| -> Result<(), SpecError> {
        if state_set.contains(name) {
            Ok(())
        } else {
            err(pos, format!("unknown state `{name}`"))
        }
    };

    // Variables.
    let mut decls: Vec<VariableDecl> = Vec::new();
    for v in &variables {
        if decls.iter().any(|d| d.name == v.name) {
            return err(v.pos, format!("duplicate variable `{}`", v.name));
        }
        if v.name == TACTIC && (v.default.is_some() || !v.per_state.is_empty()) {
            return err(v.pos, "`Tactic` always holds the current state and takes no values");
        }
        let mut per_state = IndexMap::new();
        for (state, value, pos) in &v.per_state {
            check_state(state, *pos)?;
            if per_state.insert(state.clone(), value.clone()).is_some() {
                return err(*pos, format!("duplicate value for `{}` in state `{state}`", v.name));
            }
        }
        decls.push(VariableDecl {
            name: v.name.clone(),
            default: v.default.clone(),
            per_state,
        });
    }
    if !decls.iter().any(|d| d.name == TACTIC) {
        return err(Pos { line: 1, col: 1 }, "VARIABLES must declare `Tactic`");
    }

    // Transitions.
    let mut priorities: BTreeMap<(&str, i64), ()> = BTreeMap::new();
    for t in &transitions {
        check_state(&t.rule.from, t.from_pos)?;
        check_state(&t.rule.to, t.to_pos)?;
        if priorities.insert((t.rule.from.as_str(), t.rule.priority), ()).is_some() {
            return err(
                t.prio_pos,
                format!(
                    "duplicate priority {} for transitions from `{}`",
                    t.rule.priority, t.rule.from
                ),
            );
        }
    }

    // Policies.
    let mut raw_trees: BTreeMap<String, (RawBt, Pos)> = BTreeMap::new();
    for p in &policies {
        if p.named_tree {
            if state_set.contains(p.state.as_str()) {
                return err(p.pos, format!("tree `{}` has the same name as a state", p.state));
            }
        } else {
            check_state(&p.state, p.pos)?;
        }
        if raw_trees.contains_key(&p.state) {
            let kind = if p.named_tree { "tree" } else { "policy for state" };
            return err(p.pos, format!("duplicate {kind} `{}`", p.state));
        }
        let mut cur = Cursor::new(&p.tokens, p.end);
        if cur.at_end() {
            return err(p.pos, format!("empty policy for state `{}`", p.state));
        }
        let tree = parse_bt(&mut cur)?;
        cur.expect_end()?;
        raw_trees.insert(p.state.clone(), (tree, p.pos));
    }
    let ctx = TemplateCtx {
        catalog,
        decls: &decls,
        states: &states,
    };
    let mut resolved: IndexMap<String, BtNode> = IndexMap::new();
    for (state, pos) in &states {
        if !raw_trees.contains_key(state) {
            return err(*pos, format!("state `{state}` has no POLICY"));
        }
        let mut stack = vec![state.clone()];
        let (tree, _) = &raw_trees[state];
        let node = resolve_bt(tree, &raw_trees, &mut stack, &ctx)?;
        resolved.insert(state.clone(), node);
    }
    // Unused subtrees are still checked.
    for p in policies.iter().filter(|p| p.named_tree) {
        let mut stack = vec![p.state.clone()];
        resolve_bt(&raw_trees[&p.state].0, &raw_trees, &mut stack, &ctx)?;
    }

    let mut atomic = Vec::new();
    for r in rules {
        let actions = r
            .actions
            .iter()
            .map(|t| ctx.check(t))
            .collect::<Result<Vec<_>, _>>()?;
        atomic.push(AtomicRule {
            predicate: r.predicate,
            actions,
            gloss: r.gloss,
        });
    }

    Ok(MachineSpec {
        states: states.into_iter().map(|(s, _)| s).collect(),
        initial_state,
        transitions: transitions.into_iter().map(|t| t.rule).collect(),
        policies: resolved,
        rules: atomic,
        variables: decls,
    })
}

fn parse_variable_line(cur: &mut Cursor<'_>) -> Result<RawVariable, SpecError> {
    let (name, pos) = cur.ident("a variable name")?;
    let mut var = RawVariable {
        name,
        pos,
        default: None,
        per_state: Vec::new(),
    };
    if cur.eat(&Tok::Colon) {
        while !cur.at_end() {
            let at = cur.pos();
            let state = if cur.eat(&Tok::Star) {
                None
            } else {
                Some(cur.ident("a state name or `*`")?.0)
            };
            cur.expect(&Tok::Assign)?;
            let (value, vpos) = cur.ident("a value token")?;
            if !is_valid_value(&value) {
                return err(vpos, format!("invalid value `{value}`"));
            }
            match state {
                None if var.default.is_some() => return err(at, "duplicate default value"),
                None => var.default = Some(value),
                Some(s) => var.per_state.push((s, value, at)),
            }
        }
    }
    cur.expect_end()?;
    Ok(var)
}

fn parse_priority(cur: &mut Cursor<'_>) -> Result<(i64, Pos), SpecError> {
    let pos = cur.pos();
    let negative = cur.eat(&Tok::Minus);
    match cur.next().map(|t| &t.tok) {
        Some(Tok::Number(n)) if n.fract() == 0.0 && n.abs() < 1e15 => {
            let v = *n as i64;
            Ok((if negative { -v } else { v }, pos))
        }
        _ => err(pos, "expected an integer priority"),
    }
}

fn parse_gloss(cur: &mut Cursor<'_>) -> Result<String, SpecError> {
    let pos = cur.pos();
    match cur.next().map(|t| &t.tok) {
        Some(Tok::Str(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Tok::Str(_)) => err(pos, "gloss must not be empty"),
        _ => err(pos, "expected a quoted natural-language gloss"),
    }
}

fn parse_transition_line(cur: &mut Cursor<'_>) -> Result<RawTransition, SpecError> {
    let (from, from_pos) = cur.ident("a source state")?;
    cur.expect(&Tok::Arrow)?;
    let (to, to_pos) = cur.ident("a target state")?;
    cur.expect(&Tok::Colon)?;
    let (priority, prio_pos) = parse_priority(cur)?;
    cur.expect(&Tok::Colon)?;
    let predicate = parse_predicate(cur)?;
    cur.expect(&Tok::Colon)?;
    let gloss = parse_gloss(cur)?;
    cur.expect_end()?;
    Ok(RawTransition {
        rule: TransitionRule {
            from,
            to,
            priority,
            predicate,
            gloss,
        },
        from_pos,
        to_pos,
        prio_pos,
    })
}

fn parse_rule_line(cur: &mut Cursor<'_>) -> Result<RawRule, SpecError> {
    let predicate = parse_predicate(cur)?;
    cur.expect(&Tok::FatArrow)?;
    let mut actions = vec![parse_template(cur)?];
    while cur.eat(&Tok::Comma) {
        actions.push(parse_template(cur)?);
    }
    cur.expect(&Tok::Colon)?;
    let gloss = parse_gloss(cur)?;
    cur.expect_end()?;
    Ok(RawRule {
        predicate,
        actions,
        gloss,
    })
}

fn parse_template(cur: &mut Cursor<'_>) -> Result<RawTemplate, SpecError> {
    let (verb_name, pos) = cur.ident("an action verb")?;
    let Some(verb) = Verb::parse_loose(&verb_name) else {
        return err(pos, format!("unknown verb `{verb_name}`"));
    };
    cur.expect(&Tok::LParen)?;
    let arg_pos = cur.pos();
    let arg = match cur.peek() {
        Some(Tok::RParen) => None,
        Some(Tok::Ident(s)) => {
            let s = s.clone();
            cur.next();
            Some(TemplateArg::Literal(s))
        }
        Some(Tok::Binding(b)) => {
            let b = match b.as_str() {
                "home" => Binding::Home,
                "enemy_home" => Binding::EnemyHome,
                "front" => Binding::Front,
                other => Binding::Variable(other.to_owned()),
            };
            cur.next();
            Some(TemplateArg::Binding(b))
        }
        _ => return err(arg_pos, "expected an action argument or `)`"),
    };
    cur.expect(&Tok::RParen)?;
    Ok(RawTemplate { verb, arg, pos })
}

fn parse_bt(cur: &mut Cursor<'_>) -> Result<RawBt, SpecError> {
    cur.expect(&Tok::LParen)?;
    let (kind, pos) = cur.ident("a node kind")?;
    let node = match kind.as_str() {
        "selector" | "sel" | "sequence" | "seq" => {
            let mut children = Vec::new();
            while cur.peek() == Some(&Tok::LParen) {
                children.push(parse_bt(cur)?);
            }
            if children.is_empty() {
                return err(pos, format!("`{kind}` needs at least one child"));
            }
            if kind.starts_with("sel") {
                RawBt::Selector(children)
            } else {
                RawBt::Sequence(children)
            }
        }
        "condition" | "cond" => RawBt::Condition(parse_predicate(cur)?),
        "action" | "act" => RawBt::Action(parse_template(cur)?),
        "use" => {
            let (name, pos) = cur.ident("a state name")?;
            RawBt::Use(name, pos)
        }
        other => return err(pos, format!("unknown behavior tree node `{other}`")),
    };
    cur.expect(&Tok::RParen)?;
    Ok(node)
}

struct TemplateCtx<'a> {
    catalog: &'a SimConfig,
    decls: &'a [VariableDecl],
    states: &'a [(String, Pos)],
}

impl TemplateCtx<'_> {
    fn literal_ok(&self, kind: ArgKind, value: &str) -> bool {
        match kind {
            ArgKind::Unit => self.catalog.unit(value).is_some(),
            ArgKind::Structure => self.catalog.structure(value).is_some(),
            ArgKind::Region => Region::parse(value).is_some(),
            ArgKind::None => false,
        }
    }

    /// Ensures the template instantiates to a schema-shaped command in every
    /// state and on every observation.
    fn check(&self, t: &RawTemplate) -> Result<ActionTemplate, SpecError> {
        let kind = t.verb.arg_kind();
        match (&t.arg, kind) {
            (None, ArgKind::None) => {}
            (None, _) => return err(t.pos, format!("`{}` needs an argument", t.verb)),
            (Some(_), ArgKind::None) => {
                return err(t.pos, format!("`{}` takes no argument", t.verb))
            }
            (Some(TemplateArg::Literal(v)), kind) => {
                if !self.literal_ok(kind, v) {
                    return err(t.pos, format!("`{v}` is not a valid argument for `{}`", t.verb));
                }
            }
            (Some(TemplateArg::Binding(b)), kind) => match b {
                Binding::EnemyHome | Binding::Front if kind == ArgKind::Region => {}
                Binding::Home => {
                    return err(t.pos, format!("`$home` is not a legal target for `{}`", t.verb))
                }
                Binding::EnemyHome | Binding::Front => {
                    return err(t.pos, format!("`{b}` is a region, not valid for `{}`", t.verb))
                }
                Binding::Variable(name) => {
                    let Some(decl) = self.decls.iter().find(|d| &d.name == name) else {
                        return err(t.pos, format!("unknown variable `${name}`"));
                    };
                    if decl.name == TACTIC {
                        return err(t.pos, "`$Tactic` cannot be an action argument");
                    }
                    for (state, _) in self.states {
                        match decl.value_for(state) {
                            None => {
                                return err(
                                    t.pos,
                                    format!("variable `${name}` has no value in state `{state}`"),
                                )
                            }
                            Some(v) if !self.literal_ok(kind, v) => {
                                return err(
                                    t.pos,
                                    format!(
                                        "variable `${name}` = `{v}` in state `{state}` is not valid for `{}`",
                                        t.verb
                                    ),
                                )
                            }
                            Some(_) => {}
                        }
                    }
                }
            },
        }
        Ok(ActionTemplate {
            verb: t.verb,
            arg: t.arg.clone(),
        })
    }
}

fn resolve_bt(
    raw: &RawBt,
    trees: &BTreeMap<String, (RawBt, Pos)>,
    stack: &mut Vec<String>,
    ctx: &TemplateCtx<'_>,
) -> Result<BtNode, SpecError> {
    Ok(match raw {
        RawBt::Selector(c) => BtNode::Selector(
            c.iter()
                .map(|n| resolve_bt(n, trees, stack, ctx))
                .collect::<Result<_, _>>()?,
        ),
        RawBt::Sequence(c) => BtNode::Sequence(
            c.iter()
                .map(|n| resolve_bt(n, trees, stack, ctx))
                .collect::<Result<_, _>>()?,
        ),
        RawBt::Condition(p) => BtNode::Condition(p.clone()),
        RawBt::Action(t) => BtNode::Action(ctx.check(t)?),
        RawBt::Use(name, pos) => {
            let Some((tree, _)) = trees.get(name) else {
                return if ctx.states.iter().any(|(s, _)| s == name) {
                    err(*pos, format!("state `{name}` has no POLICY to use"))
                } else {
                    err(*pos, format!("unknown tree or state `{name}`"))
                };
            };
            if stack.contains(name) {
                let mut cycle = stack.clone();
                cycle.push(name.clone());
                return err(*pos, format!("cyclic behavior tree: {}", cycle.join(" -> ")));
            }
            stack.push(name.clone());
            let node = resolve_bt(tree, trees, stack, ctx)?;
            stack.pop();
            node
        }
    })
}
