//! Formal conditions over observation features: arithmetic terms, comparisons
//! and boolean combinators. Evaluation is total.

use std::fmt;

use super::lexer::{Cursor, Pos, Tok};
use crate::sim::Observation;

macro_rules! features {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Numeric features derivable from an [`Observation`] alone.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Feature {
            $($variant),*
        }

        impl Feature {
            pub const ALL: &'static [Feature] = &[$(Feature::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name),*
                }
            }
        }
    };
}

features! {
    Tick => "tick",
    Minerals => "minerals",
    Gas => "gas",
    WorkerCount => "worker_count",
    WorkersQueued => "workers_queued",
    QueueLength => "queue_length",
    TechStructures => "tech_structures",
    TechQueued => "tech_queued",
    OwnArmySupply => "own_army_supply",
    OwnArmyCount => "own_army_count",
    AdvancedCount => "advanced_count",
    AdvancedFraction => "advanced_fraction",
    ArmyAtHome => "army_at_home",
    ArmyAtCenter => "army_at_center",
    ArmyAtEnemyHome => "army_at_enemy_home",
    VisibleEnemyArmySupply => "visible_enemy_army_supply",
    VisibleEnemyArmyCount => "visible_enemy_army_count",
    EnemyVisible => "enemy_visible",
    EnemyAtHome => "enemy_at_home",
    EnemyReinforcements => "enemy_reinforcements",
    EnemyStructuresVisible => "enemy_structures_visible",
    LastOwnLosses => "last_own_losses",
    LastEnemyLosses => "last_enemy_losses",
    TicksSinceCombat => "ticks_since_combat",
}

impl Feature {
    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn eval(self, o: &Observation) -> f64 {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Feature::Tick => o.tick as f64,
            Feature::Minerals => o.minerals as f64,
            Feature::Gas => o.gas as f64,
            Feature::WorkerCount => o.worker_count as f64,
            Feature::WorkersQueued => o.workers_queued as f64,
            Feature::QueueLength => o.production_queue.len() as f64,
            Feature::TechStructures => o.tech_structures as f64,
            Feature::TechQueued => o.tech_queued as f64,
            Feature::OwnArmySupply => o.own_army_supply as f64,
            Feature::OwnArmyCount => o.own_army_count() as f64,
            Feature::AdvancedCount => o.own_advanced_count as f64,
            Feature::AdvancedFraction => match o.own_army_count() {
                0 => 0.0,
                n => o.own_advanced_count as f64 / n as f64,
            },
            Feature::ArmyAtHome => flag(o.army_location == o.home),
            Feature::ArmyAtCenter => flag(o.army_location == crate::sim::Region::Center),
            Feature::ArmyAtEnemyHome => flag(o.army_location == o.enemy_home),
            Feature::VisibleEnemyArmySupply => o.visible_enemy_army_supply as f64,
            Feature::VisibleEnemyArmyCount => o.visible_enemy_army_count() as f64,
            Feature::EnemyVisible => flag(o.visible_enemy_army_region.is_some()),
            Feature::EnemyAtHome => flag(o.visible_enemy_army_region == Some(o.home)),
            Feature::EnemyReinforcements => o.visible_enemy_reinforcements as f64,
            Feature::EnemyStructuresVisible => o.visible_enemy_structures.values().sum::<u32>() as f64,
            Feature::LastOwnLosses => o.last_combat_summary.map_or(0.0, |c| c.own_losses as f64),
            Feature::LastEnemyLosses => {
                o.last_combat_summary.map_or(0.0, |c| c.enemy_losses as f64)
            }
            Feature::TicksSinceCombat => match o.last_combat_summary {
                Some(c) => o.tick.saturating_sub(c.tick) as f64,
                None => o.tick as f64 + 1.0,
            },
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Lit(f64),
    Feature(Feature),
    Neg(Box<NumExpr>),
    Add(Box<NumExpr>, Box<NumExpr>),
    Sub(Box<NumExpr>, Box<NumExpr>),
    Mul(Box<NumExpr>, Box<NumExpr>),
}

impl NumExpr {
    pub fn eval(&self, o: &Observation) -> f64 {
        match self {
            NumExpr::Lit(v) => *v,
            NumExpr::Feature(f) => f.eval(o),
            NumExpr::Neg(e) => -e.eval(o),
            NumExpr::Add(a, b) => a.eval(o) + b.eval(o),
            NumExpr::Sub(a, b) => a.eval(o) - b.eval(o),
            NumExpr::Mul(a, b) => a.eval(o) * b.eval(o),
        }
    }

    fn features(&self, out: &mut Vec<Feature>) {
        match self {
            NumExpr::Lit(_) => {}
            NumExpr::Feature(f) => out.push(*f),
            NumExpr::Neg(e) => e.features(out),
            NumExpr::Add(a, b) | NumExpr::Sub(a, b) | NumExpr::Mul(a, b) => {
                a.features(out);
                b.features(out);
            }
        }
    }
}

impl fmt::Display for NumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumExpr::Lit(v) => write!(f, "{v}"),
            NumExpr::Feature(feat) => write!(f, "{feat}"),
            NumExpr::Neg(e) => write!(f, "-({e})"),
            NumExpr::Add(a, b) => write!(f, "({a} + {b})"),
            NumExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            NumExpr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Const(bool),
    Compare(NumExpr, CmpOp, NumExpr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn eval(&self, o: &Observation) -> bool {
        match self {
            Predicate::Const(b) => *b,
            Predicate::Compare(a, op, b) => op.apply(a.eval(o), b.eval(o)),
            Predicate::And(a, b) => a.eval(o) && b.eval(o),
            Predicate::Or(a, b) => a.eval(o) || b.eval(o),
            Predicate::Not(p) => !p.eval(o),
        }
    }

    pub fn features(&self) -> Vec<Feature> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect(&self, out: &mut Vec<Feature>) {
        match self {
            Predicate::Const(_) => {}
            Predicate::Compare(a, _, b) => {
                a.features(out);
                b.features(out);
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Predicate::Not(p) => p.collect(out),
        }
    }

    /// Parses a standalone predicate such as `minerals >= 400 and tick > 60`.
    pub fn parse(text: &str) -> Result<Predicate, (Pos, String)> {
        let tokens = super::lexer::lex_line(text, 1)?;
        let end = Pos {
            line: 1,
            col: text.chars().count() + 1,
        };
        let mut cur = Cursor::new(&tokens, end);
        let p = parse_predicate(&mut cur)?;
        cur.expect_end()?;
        Ok(p)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Const(b) => write!(f, "{b}"),
            Predicate::Compare(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Predicate::And(a, b) => write!(f, "({a} and {b})"),
            Predicate::Or(a, b) => write!(f, "({a} or {b})"),
            Predicate::Not(p) => write!(f, "not ({p})"),
        }
    }
}

/// Untyped parse tree; typed into [`Predicate`]/[`NumExpr`] afterwards so that
/// parentheses can group either kind.
enum Ast {
    Num(f64),
    Ident(String, Pos),
    Bool(bool),
    Neg(Box<Ast>, Pos),
    Arith(char, Box<Ast>, Box<Ast>, Pos),
    Cmp(CmpOp, Box<Ast>, Box<Ast>, Pos),
    And(Box<Ast>, Box<Ast>),
    Or(Box<Ast>, Box<Ast>),
    Not(Box<Ast>, Pos),
}

type PResult<T> = Result<T, (Pos, String)>;

/// Parses a predicate from the cursor, stopping before the first token that
/// cannot continue the expression (e.g. `:` or an unmatched `)`).
pub fn parse_predicate(cur: &mut Cursor<'_>) -> PResult<Predicate> {
    let start = cur.pos();
    let ast = parse_or(cur)?;
    to_predicate(ast, start)
}

fn parse_or(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let mut lhs = parse_and(cur)?;
    while cur.eat_keyword("or") {
        let rhs = parse_and(cur)?;
        lhs = Ast::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let mut lhs = parse_not(cur)?;
    while cur.eat_keyword("and") {
        let rhs = parse_not(cur)?;
        lhs = Ast::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_not(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let pos = cur.pos();
    if cur.eat_keyword("not") {
        return Ok(Ast::Not(Box::new(parse_not(cur)?), pos));
    }
    parse_cmp(cur)
}

fn parse_cmp(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let lhs = parse_additive(cur)?;
    let pos = cur.pos();
    let op = match cur.peek() {
        Some(Tok::Lt) => CmpOp::Lt,
        Some(Tok::Le) => CmpOp::Le,
        Some(Tok::EqEq) | Some(Tok::Assign) => CmpOp::Eq,
        Some(Tok::Ne) => CmpOp::Ne,
        Some(Tok::Ge) => CmpOp::Ge,
        Some(Tok::Gt) => CmpOp::Gt,
        _ => return Ok(lhs),
    };
    cur.next();
    let rhs = parse_additive(cur)?;
    Ok(Ast::Cmp(op, Box::new(lhs), Box::new(rhs), pos))
}

fn parse_additive(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let mut lhs = parse_term(cur)?;
    loop {
        let pos = cur.pos();
        let op = match cur.peek() {
            Some(Tok::Plus) => '+',
            Some(Tok::Minus) => '-',
            _ => return Ok(lhs),
        };
        cur.next();
        let rhs = parse_term(cur)?;
        lhs = Ast::Arith(op, Box::new(lhs), Box::new(rhs), pos);
    }
}

fn parse_term(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let mut lhs = parse_unary(cur)?;
    loop {
        let pos = cur.pos();
        if !cur.eat(&Tok::Star) {
            return Ok(lhs);
        }
        let rhs = parse_unary(cur)?;
        lhs = Ast::Arith('*', Box::new(lhs), Box::new(rhs), pos);
    }
}

fn parse_unary(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let pos = cur.pos();
    if cur.eat(&Tok::Minus) {
        return Ok(match parse_unary(cur)? {
            Ast::Num(v) => Ast::Num(-v),
            other => Ast::Neg(Box::new(other), pos),
        });
    }
    parse_atom(cur)
}

fn parse_atom(cur: &mut Cursor<'_>) -> PResult<Ast> {
    let pos = cur.pos();
    match cur.next().map(|t| &t.tok) {
        Some(Tok::Number(v)) => Ok(Ast::Num(*v)),
        Some(Tok::Ident(s)) if s == "true" => Ok(Ast::Bool(true)),
        Some(Tok::Ident(s)) if s == "false" => Ok(Ast::Bool(false)),
        Some(Tok::Ident(s)) if matches!(s.as_str(), "and" | "or" | "not") => {
            Err((pos, format!("unexpected keyword `{s}`")))
        }
        Some(Tok::Ident(s)) => Ok(Ast::Ident(s.clone(), pos)),
        Some(Tok::LParen) => {
            let inner = parse_or(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(inner)
        }
        Some(t) => Err((pos, format!("expected an expression, found {t}"))),
        None => Err((pos, "expected an expression, found end of input".into())),
    }
}

fn ast_pos(ast: &Ast, fallback: Pos) -> Pos {
    match ast {
        Ast::Ident(_, p) | Ast::Neg(_, p) | Ast::Arith(.., p) | Ast::Cmp(.., p) | Ast::Not(_, p) => {
            *p
        }
        _ => fallback,
    }
}

fn to_predicate(ast: Ast, at: Pos) -> PResult<Predicate> {
    Ok(match ast {
        Ast::Bool(b) => Predicate::Const(b),
        Ast::Cmp(op, a, b, p) => Predicate::Compare(to_num(*a, p)?, op, to_num(*b, p)?),
        Ast::And(a, b) => Predicate::And(Box::new(to_predicate(*a, at)?), Box::new(to_predicate(*b, at)?)),
        Ast::Or(a, b) => Predicate::Or(Box::new(to_predicate(*a, at)?), Box::new(to_predicate(*b, at)?)),
        Ast::Not(p, pos) => Predicate::Not(Box::new(to_predicate(*p, pos)?)),
        Ast::Ident(name, pos) if Feature::from_name(&name).is_none() => {
            return Err((pos, format!("unknown feature `{name}`")))
        }
        other => {
            let pos = ast_pos(&other, at);
            return Err((pos, "expected a comparison or boolean expression".into()));
        }
    })
}

fn to_num(ast: Ast, at: Pos) -> PResult<NumExpr> {
    Ok(match ast {
        Ast::Num(v) => NumExpr::Lit(v),
        Ast::Ident(name, pos) => NumExpr::Feature(
            Feature::from_name(&name).ok_or_else(|| (pos, format!("unknown feature `{name}`")))?,
        ),
        Ast::Neg(e, p) => NumExpr::Neg(Box::new(to_num(*e, p)?)),
        Ast::Arith(op, a, b, p) => {
            let (a, b) = (Box::new(to_num(*a, p)?), Box::new(to_num(*b, p)?));
            match op {
                '+' => NumExpr::Add(a, b),
                '-' => NumExpr::Sub(a, b),
                _ => NumExpr::Mul(a, b),
            }
        }
        other => {
            let pos = ast_pos(&other, at);
            return Err((pos, "expected a numeric expression".into()));
        }
    })
}

/// Free-function form used by callers that hold a predicate and an observation.
pub fn evaluate_predicate(p: &Predicate, o: &Observation) -> bool {
    p.eval(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{observe, SimConfig, WorldState, Player};

    fn obs() -> Observation {
        let cfg = SimConfig::default_config();
        observe(&WorldState::new(&cfg, 0), &cfg, Player::A)
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut o = obs();
        o.minerals = 400;
        assert!(Predicate::parse("minerals >= 400").unwrap().eval(&o));
        assert!(!Predicate::parse("minerals > 400").unwrap().eval(&o));
        assert!(Predicate::parse("minerals = 400").unwrap().eval(&o));
    }

    #[test]
    fn force_advantage_arithmetic() {
        let mut o = obs();
        o.own_army_supply = 30;
        o.visible_enemy_army_supply = 12;
        let p = Predicate::parse("own_army_supply >= 2 * visible_enemy_army_supply").unwrap();
        // 30 >= 24
        assert!(p.eval(&o));
        o.visible_enemy_army_supply = 16;
        // 30 >= 32 fails
        assert!(!p.eval(&o));
    }

    #[test]
    fn precedence() {
        let p = Predicate::parse("tick > 1 or tick > 2 and not tick > 3").unwrap();
        assert_eq!(p.to_string(), "(tick > 1 or (tick > 2 and not (tick > 3)))");
        let p = Predicate::parse("(minerals + 2 * gas) - 3 >= -1").unwrap();
        assert_eq!(p.to_string(), "((minerals + (2 * gas)) - 3) >= -1");
    }

    #[test]
    fn parenthesized_boolean_and_numeric_groups() {
        assert!(Predicate::parse("(tick >= 1 and (gas < 2))").is_ok());
        assert!(Predicate::parse("((tick)) >= 1").is_ok());
    }

    #[test]
    fn errors_carry_positions() {
        let (pos, msg) = Predicate::parse("minerals >= 1 and bogus > 2").unwrap_err();
        assert_eq!(pos, Pos { line: 1, col: 19 });
        assert!(msg.contains("unknown feature `bogus`"));
        let (_, msg) = Predicate::parse("minerals + 1").unwrap_err();
        assert!(msg.contains("comparison"));
        let (_, msg) = Predicate::parse("(tick > 1) + 2 > 0").unwrap_err();
        assert!(msg.contains("numeric"));
        assert!(Predicate::parse("tick >").is_err());
    }

    #[test]
    fn every_feature_name_round_trips() {
        for f in Feature::ALL {
            assert_eq!(Feature::from_name(f.name()), Some(*f));
        }
    }
}
