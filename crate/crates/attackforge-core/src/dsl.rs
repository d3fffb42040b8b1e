//! The control-invariant rule language: parse, print, evaluate.
//!
//! Surface syntax (keywords case-insensitive):
//!
//! ```text
//! rule   := "IF" cond "THEN" act ("&" act)* | range
//! cond   := or-list of and-lists of atoms (parentheses allowed, depth <= 3)
//! atom   := TAGLIST cmp (NUM UNIT? | stateword)
//! act    := "ALARM" | TAGLIST "=" stateword | TAGLIST cmp NUM UNIT?
//! range  := NUM UNIT? "<=" TAG "<=" NUM UNIT?
//! ```
//!
//! `A/B` tag lists expand to one predicate (or assertion) per tag;
//! OPEN/START normalize to state 2, CLOSE/STOP to state 1.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Registry, SignalKind, SignalTag, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

impl Cmp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Gt => ">",
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub tag: SignalTag,
    pub cmp: Cmp,
    pub value: f64,
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cond {
    Atom(Predicate),
    All(Vec<Cond>),
    Any(Vec<Cond>),
}

impl Cond {
    pub fn depth(&self) -> usize {
        match self {
            Cond::Atom(_) => 1,
            Cond::All(cs) | Cond::Any(cs) => 1 + cs.iter().map(Cond::depth).max().unwrap_or(0),
        }
    }

    pub fn atoms(&self) -> Vec<&Predicate> {
        match self {
            Cond::Atom(p) => vec![p],
            Cond::All(cs) | Cond::Any(cs) => cs.iter().flat_map(Cond::atoms).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionAssertion {
    SetState { tag: SignalTag, state_code: i64 },
    AlarmRaised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Consequent {
    Action(ActionAssertion),
    Pred(Predicate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    LLMProposed,
    Mined,
    DesignDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InvariantBody {
    Implication {
        antecedent: Cond,
        consequents: Vec<Consequent>,
    },
    Range {
        tag: SignalTag,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub id: String,
    pub provenance: Provenance,
    pub body: InvariantBody,
}

impl Invariant {
    pub fn new(body: InvariantBody, provenance: Provenance) -> Self {
        let id = format!("r{}", crate::short_hash(&render_body(&body)));
        Invariant { id, provenance, body }
    }

    /// Tags referenced anywhere in the rule.
    pub fn tags(&self) -> Vec<SignalTag> {
        let mut out = Vec::new();
        match &self.body {
            InvariantBody::Range { tag, .. } => out.push(tag.clone()),
            InvariantBody::Implication { antecedent, consequents } => {
                for p in antecedent.atoms() {
                    out.push(p.tag.clone());
                }
                for c in consequents {
                    match c {
                        Consequent::Action(ActionAssertion::SetState { tag, .. }) => {
                            out.push(tag.clone())
                        }
                        Consequent::Action(ActionAssertion::AlarmRaised) => {}
                        Consequent::Pred(p) => out.push(p.tag.clone()),
                    }
                }
            }
        }
        out.dedup();
        out
    }

    /// True when some consequent asserts the alarm flag.
    pub fn is_alarm_rule(&self) -> bool {
        match &self.body {
            InvariantBody::Implication { consequents, .. } => consequents
                .iter()
                .any(|c| matches!(c, Consequent::Action(ActionAssertion::AlarmRaised))),
            InvariantBody::Range { .. } => false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DslError {
    #[error("syntax error at position {0}")]
    SyntaxError(usize),
    #[error("unknown tag {0}")]
    UnknownTag(String),
    #[error("bad state word {0:?}")]
    BadStateWord(String),
    #[error("equality comparison against analog tag {0}")]
    EqualityOnAnalog(String),
    #[error("range bounds not increasing: {lo} >= {hi}")]
    BadRange { lo: f64, hi: f64 },
    #[error("antecedent nesting deeper than 3")]
    TooDeep,
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(f64),
    Cmp(Cmp),
    Amp,
    Slash,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, DslError> {
    let mut toks = Vec::new();
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let pos = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '&' => {
                toks.push((pos, Tok::Amp));
                i += 1;
            }
            '/' => {
                toks.push((pos, Tok::Slash));
                i += 1;
            }
            '(' => {
                toks.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((pos, Tok::RParen));
                i += 1;
            }
            '<' | '>' => {
                if bytes.get(i + 1) == Some(&'=') {
                    toks.push((pos, Tok::Cmp(if c == '<' { Cmp::Le } else { Cmp::Ge })));
                    i += 2;
                } else {
                    toks.push((pos, Tok::Cmp(if c == '<' { Cmp::Lt } else { Cmp::Gt })));
                    i += 1;
                }
            }
            '≤' => {
                toks.push((pos, Tok::Cmp(Cmp::Le)));
                i += 1;
            }
            '≥' => {
                toks.push((pos, Tok::Cmp(Cmp::Ge)));
                i += 1;
            }
            '=' => {
                toks.push((pos, Tok::Cmp(Cmp::Eq)));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let mut j = i;
                if bytes[j] == '-' {
                    j += 1;
                }
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == '.') {
                    j += 1;
                }
                let s: String = bytes[i..j].iter().collect();
                let v: f64 = s.parse().map_err(|_| DslError::SyntaxError(pos))?;
                toks.push((pos, Tok::Num(v)));
                i = j;
            }
            c if c.is_alphabetic() || c == 'µ' => {
                let mut j = i;
                while j < bytes.len()
                    && (bytes[j].is_alphanumeric() || matches!(bytes[j], '³' | '^' | 'µ'))
                {
                    j += 1;
                }
                // unit tokens like m3/h keep their slash
                if j < bytes.len()
                    && bytes[j] == '/'
                    && j + 1 < bytes.len()
                    && bytes[j + 1].is_alphabetic()
                    && bytes[i..j].iter().any(|c| c.is_lowercase() || c.is_ascii_digit())
                    && !bytes[i..j].iter().all(|c| c.is_uppercase() || c.is_ascii_digit())
                {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_alphanumeric() {
                        j += 1;
                    }
                }
                toks.push((pos, Tok::Word(bytes[i..j].iter().collect())));
                i = j;
            }
            _ => return Err(DslError::SyntaxError(pos)),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    i: usize,
    registry: &'a Registry,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(_, t)| t.clone());
        self.i += 1;
        t
    }

    fn keyword(&self, word: &str, kw: &str) -> bool {
        word.eq_ignore_ascii_case(kw)
    }

    fn is_keyword(&self, word: &str) -> bool {
        ["IF", "THEN", "AND", "OR", "ALARM"]
            .iter()
            .any(|k| word.eq_ignore_ascii_case(k))
    }

    fn resolve_tag(&self, word: &str) -> Result<SignalTag, DslError> {
        let tag = SignalTag::new(word).map_err(|_| DslError::UnknownTag(word.to_string()))?;
        if self.registry.contains(&tag) {
            Ok(tag)
        } else {
            Err(DslError::UnknownTag(word.to_string()))
        }
    }

    fn state_code(&self, word: &str) -> Result<i64, DslError> {
        match word.to_ascii_uppercase().as_str() {
            "OPEN" | "START" => Ok(2),
            "CLOSE" | "STOP" => Ok(1),
            w => w
                .parse::<i64>()
                .map_err(|_| DslError::BadStateWord(word.to_string())),
        }
    }

    fn tag_list(&mut self) -> Result<Vec<SignalTag>, DslError> {
        let pos = self.pos();
        let first = match self.bump() {
            Some(Tok::Word(w)) if !self.is_keyword(&w) => self.resolve_tag(&w)?,
            _ => return Err(DslError::SyntaxError(pos)),
        };
        let mut tags = vec![first];
        while self.peek() == Some(&Tok::Slash) {
            self.bump();
            let pos = self.pos();
            match self.bump() {
                Some(Tok::Word(w)) => tags.push(self.resolve_tag(&w)?),
                _ => return Err(DslError::SyntaxError(pos)),
            }
        }
        Ok(tags)
    }

    fn num_with_unit(&mut self) -> Result<(f64, Option<String>), DslError> {
        let pos = self.pos();
        let v = match self.bump() {
            Some(Tok::Num(v)) => v,
            _ => return Err(DslError::SyntaxError(pos)),
        };
        let unit = match self.peek() {
            Some(Tok::Word(w)) if !self.is_keyword(w) && w.chars().next().map_or(false, |c| c.is_lowercase()) => {
                let w = w.clone();
                self.bump();
                Some(w)
            }
            _ => None,
        };
        Ok((v, unit))
    }

    /// One atom, expanded over its tag list into a conjunction.
    fn atom(&mut self) -> Result<Cond, DslError> {
        let tags = self.tag_list()?;
        let pos = self.pos();
        let cmp = match self.bump() {
            Some(Tok::Cmp(c)) => c,
            _ => return Err(DslError::SyntaxError(pos)),
        };
        let (value, unit) = match self.peek() {
            Some(Tok::Num(_)) => self.num_with_unit()?,
            Some(Tok::Word(w)) if cmp == Cmp::Eq => {
                let w = w.clone();
                self.bump();
                (self.state_code(&w)? as f64, None)
            }
            _ => return Err(DslError::SyntaxError(self.pos())),
        };
        let mut preds = Vec::new();
        for tag in tags {
            let spec = self.registry.get(&tag).unwrap();
            if cmp == Cmp::Eq && spec.kind.is_analog() {
                return Err(DslError::EqualityOnAnalog(tag.to_string()));
            }
            preds.push(Cond::Atom(Predicate {
                tag,
                cmp,
                value,
                unit: unit.clone(),
            }));
        }
        Ok(if preds.len() == 1 {
            preds.pop().unwrap()
        } else {
            Cond::All(preds)
        })
    }

    fn cond_factor(&mut self, depth: usize) -> Result<Cond, DslError> {
        if depth > 3 {
            return Err(DslError::TooDeep);
        }
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let inner = self.cond(depth + 1)?;
            let pos = self.pos();
            match self.bump() {
                Some(Tok::RParen) => Ok(inner),
                _ => Err(DslError::SyntaxError(pos)),
            }
        } else {
            self.atom()
        }
    }

    fn cond_term(&mut self, depth: usize) -> Result<Cond, DslError> {
        let mut parts = vec![self.cond_factor(depth)?];
        while let Some(Tok::Word(w)) = self.peek() {
            if self.keyword(w, "AND") {
                self.bump();
                parts.push(self.cond_factor(depth)?);
            } else {
                break;
            }
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Cond::All(parts)
        })
    }

    fn cond(&mut self, depth: usize) -> Result<Cond, DslError> {
        let mut parts = vec![self.cond_term(depth)?];
        while let Some(Tok::Word(w)) = self.peek() {
            if self.keyword(w, "OR") {
                self.bump();
                parts.push(self.cond_term(depth)?);
            } else {
                break;
            }
        }
        let cond = if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Cond::Any(parts)
        };
        if cond.depth() > 3 {
            return Err(DslError::TooDeep);
        }
        Ok(cond)
    }

    /// One consequent clause, possibly expanding a tag list.
    fn act(&mut self, out: &mut Vec<Consequent>) -> Result<(), DslError> {
        if let Some(Tok::Word(w)) = self.peek() {
            if self.keyword(w, "ALARM") {
                self.bump();
                // tolerate e.g. "ALARM = TRUE"
                if self.peek() == Some(&Tok::Cmp(Cmp::Eq)) {
                    self.bump();
                    self.bump();
                }
                out.push(Consequent::Action(ActionAssertion::AlarmRaised));
                return Ok(());
            }
        }
        let tags = self.tag_list()?;
        let pos = self.pos();
        let cmp = match self.bump() {
            Some(Tok::Cmp(c)) => c,
            _ => return Err(DslError::SyntaxError(pos)),
        };
        match (cmp, self.peek().cloned()) {
            (Cmp::Eq, Some(Tok::Word(w))) => {
                self.bump();
                let code = self.state_code(&w)?;
                for tag in tags {
                    self.check_state(&tag, code)?;
                    out.push(Consequent::Action(ActionAssertion::SetState {
                        tag,
                        state_code: code,
                    }));
                }
            }
            (Cmp::Eq, Some(Tok::Num(v))) => {
                self.bump();
                if v.fract() != 0.0 {
                    return Err(DslError::BadStateWord(format!("{v}")));
                }
                for tag in tags {
                    self.check_state(&tag, v as i64)?;
                    out.push(Consequent::Action(ActionAssertion::SetState {
                        tag,
                        state_code: v as i64,
                    }));
                }
                // tolerate "MV101 = 2 (OPEN)" style annotations by leaving
                // trailing parenthesized words to the caller's end check
            }
            (_, Some(Tok::Num(_))) => {
                let (value, unit) = self.num_with_unit()?;
                for tag in tags {
                    let spec = self.registry.get(&tag).unwrap();
                    if cmp == Cmp::Eq && spec.kind.is_analog() {
                        return Err(DslError::EqualityOnAnalog(tag.to_string()));
                    }
                    out.push(Consequent::Pred(Predicate {
                        tag,
                        cmp,
                        value,
                        unit: unit.clone(),
                    }));
                }
            }
            _ => return Err(DslError::SyntaxError(self.pos())),
        }
        Ok(())
    }

    fn check_state(&self, tag: &SignalTag, code: i64) -> Result<(), DslError> {
        let spec = self.registry.get(tag).unwrap();
        if spec.kind.is_analog() {
            return Err(DslError::EqualityOnAnalog(tag.to_string()));
        }
        if spec.kind.state_codes().contains(&code) {
            Ok(())
        } else {
            Err(DslError::BadStateWord(code.to_string()))
        }
    }

    fn skip_state_annotation(&mut self) {
        // "(OPEN)" / "(CLOSE)" etc. after a numeric state code
        if self.peek() == Some(&Tok::LParen) {
            if let (Some(Tok::Word(w)), Some(Tok::RParen)) = (
                self.toks.get(self.i + 1).map(|(_, t)| t.clone()).as_ref(),
                self.toks.get(self.i + 2).map(|(_, t)| t.clone()).as_ref(),
            ) {
                if self.state_code(w).is_ok() {
                    self.i += 3;
                }
            }
        }
    }
}

/// Parse one rule against the tags registered in `registry`.
pub fn parse_invariant_body(text: &str, registry: &Registry) -> Result<InvariantBody, DslError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        registry,
        end: text.chars().count(),
    };
    let body = match p.peek() {
        Some(Tok::Word(w)) if p.keyword(w, "IF") => {
            p.bump();
            let antecedent = p.cond(1)?;
            let pos = p.pos();
            match p.bump() {
                Some(Tok::Word(w)) if p.keyword(&w, "THEN") => {}
                _ => return Err(DslError::SyntaxError(pos)),
            }
            let mut consequents = Vec::new();
            p.act(&mut consequents)?;
            p.skip_state_annotation();
            while p.peek() == Some(&Tok::Amp) {
                p.bump();
                p.act(&mut consequents)?;
                p.skip_state_annotation();
            }
            InvariantBody::Implication {
                antecedent,
                consequents,
            }
        }
        Some(Tok::Num(_)) => {
            let (lo, _unit) = p.num_with_unit()?;
            let pos = p.pos();
            match p.bump() {
                Some(Tok::Cmp(Cmp::Le)) => {}
                _ => return Err(DslError::SyntaxError(pos)),
            }
            let pos = p.pos();
            let tag = match p.bump() {
                Some(Tok::Word(w)) => p.resolve_tag(&w)?,
                _ => return Err(DslError::SyntaxError(pos)),
            };
            let pos = p.pos();
            match p.bump() {
                Some(Tok::Cmp(Cmp::Le)) => {}
                _ => return Err(DslError::SyntaxError(pos)),
            }
            let (hi, _unit) = p.num_with_unit()?;
            if !(lo < hi) {
                return Err(DslError::BadRange { lo, hi });
            }
            InvariantBody::Range { tag, lo, hi }
        }
        _ => return Err(DslError::SyntaxError(p.pos())),
    };
    if p.i != p.toks.len() {
        return Err(DslError::SyntaxError(p.pos()));
    }
    Ok(body)
}

pub fn parse_invariant(
    text: &str,
    registry: &Registry,
    provenance: Provenance,
) -> Result<Invariant, DslError> {
    Ok(Invariant::new(parse_invariant_body(text, registry)?, provenance))
}

// ---------------------------------------------------------------------------
// Rendering

fn render_pred(p: &Predicate, out: &mut String) {
    let _ = write!(out, "{} {} {}", p.tag, p.cmp.as_str(), p.value);
    if let Some(u) = &p.unit {
        out.push_str(u);
    }
}

fn render_cond(c: &Cond, out: &mut String, top: bool) {
    match c {
        Cond::Atom(p) => render_pred(p, out),
        Cond::All(cs) | Cond::Any(cs) => {
            let sep = if matches!(c, Cond::All(_)) { " AND " } else { " OR " };
            if !top {
                out.push('(');
            }
            for (i, inner) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                render_cond(inner, out, false);
            }
            if !top {
                out.push(')');
            }
        }
    }
}

fn render_body(body: &InvariantBody) -> String {
    let mut out = String::new();
    match body {
        InvariantBody::Range { tag, lo, hi } => {
            let _ = write!(out, "{lo} <= {tag} <= {hi}");
        }
        InvariantBody::Implication {
            antecedent,
            consequents,
        } => {
            out.push_str("IF ");
            render_cond(antecedent, &mut out, true);
            out.push_str(" THEN ");
            for (i, c) in consequents.iter().enumerate() {
                if i > 0 {
                    out.push_str(" & ");
                }
                match c {
                    Consequent::Action(ActionAssertion::AlarmRaised) => out.push_str("ALARM"),
                    Consequent::Action(ActionAssertion::SetState { tag, state_code }) => {
                        let _ = write!(out, "{tag} = {state_code}");
                    }
                    Consequent::Pred(p) => render_pred(p, &mut out),
                }
            }
        }
    }
    out
}

/// Canonical text form; `parse(render(inv))` is structurally equal to `inv`.
pub fn render_invariant(inv: &Invariant) -> String {
    render_body(&inv.body)
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub support: usize,
    pub violations: usize,
    pub violation_indices: Vec<usize>,
    pub vacuous: usize,
}

fn pred_holds(p: &Predicate, trace: &Trace, t: usize) -> Result<bool, DslError> {
    let v = trace
        .value(&p.tag, t)
        .ok_or_else(|| DslError::UnknownTag(p.tag.to_string()))?;
    Ok(p.cmp.holds(v, p.value))
}

fn cond_holds(c: &Cond, trace: &Trace, t: usize) -> Result<bool, DslError> {
    match c {
        Cond::Atom(p) => pred_holds(p, trace, t),
        Cond::All(cs) => {
            for inner in cs {
                if !cond_holds(inner, trace, t)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Cond::Any(cs) => {
            for inner in cs {
                if cond_holds(inner, trace, t)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn alarm_tag(trace: &Trace) -> Option<SignalTag> {
    trace
        .registry()
        .specs()
        .iter()
        .find(|s| matches!(s.kind, SignalKind::AlarmFlag))
        .map(|s| s.tag.clone())
}

fn consequents_hold(
    consequents: &[Consequent],
    trace: &Trace,
    t: usize,
    alarm: &Option<SignalTag>,
) -> Result<bool, DslError> {
    for c in consequents {
        let ok = match c {
            Consequent::Pred(p) => pred_holds(p, trace, t)?,
            Consequent::Action(ActionAssertion::SetState { tag, state_code }) => {
                let v = trace
                    .value(tag, t)
                    .ok_or_else(|| DslError::UnknownTag(tag.to_string()))?;
                v == *state_code as f64
            }
            Consequent::Action(ActionAssertion::AlarmRaised) => {
                let tag = alarm
                    .as_ref()
                    .ok_or_else(|| DslError::UnknownTag("ALARM".to_string()))?;
                trace
                    .value(tag, t)
                    .ok_or_else(|| DslError::UnknownTag(tag.to_string()))?
                    != 0.0
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Evaluate one invariant over a trace.
///
/// For implications a sample with a true antecedent at `t` counts as a
/// violation only if the consequent fails at every `t'` in `[t, t+grace]`
/// (clipped to the trace end). Ranges treat every sample as supported.
pub fn eval_over_trace(
    inv: &Invariant,
    trace: &Trace,
    grace: usize,
) -> Result<EvalSummary, DslError> {
    for tag in inv.tags() {
        if !trace.registry().contains(&tag) {
            return Err(DslError::UnknownTag(tag.to_string()));
        }
    }
    let len = trace.len();
    let mut summary = EvalSummary {
        support: 0,
        violations: 0,
        violation_indices: Vec::new(),
        vacuous: 0,
    };
    match &inv.body {
        InvariantBody::Range { tag, lo, hi } => {
            summary.support = len;
            for t in 0..len {
                let v = trace.value(tag, t).unwrap();
                if v < *lo || v > *hi {
                    summary.violations += 1;
                    summary.violation_indices.push(t);
                }
            }
        }
        InvariantBody::Implication {
            antecedent,
            consequents,
        } => {
            let alarm = alarm_tag(trace);
            for t in 0..len {
                if cond_holds(antecedent, trace, t)? {
                    summary.support += 1;
                    let end = (t + grace).min(len.saturating_sub(1));
                    let mut satisfied = false;
                    for t2 in t..=end {
                        if consequents_hold(consequents, trace, t2, &alarm)? {
                            satisfied = true;
                            break;
                        }
                    }
                    if !satisfied {
                        summary.violations += 1;
                        summary.violation_indices.push(t);
                    }
                } else {
                    summary.vacuous += 1;
                }
            }
        }
    }
    debug_assert!(summary.violations <= summary.support);
    debug_assert!(
        matches!(inv.body, InvariantBody::Range { .. })
            || summary.support + summary.vacuous == len
    );
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Rule files

/// Parse a one-rule-per-line file with `#` comments. Unparseable lines are
/// collected, never silently dropped.
pub fn parse_rules_file(
    text: &str,
    registry: &Registry,
    provenance: Provenance,
) -> (Vec<Invariant>, Vec<(usize, String, DslError)>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_invariant(line, registry, provenance) {
            Ok(inv) => accepted.push(inv),
            Err(e) => rejected.push((n + 1, line.to_string(), e)),
        }
    }
    (accepted, rejected)
}

/// JSON emission of a rule set (id, provenance, text, structured body).
pub fn rules_to_json(invs: &[Invariant]) -> String {
    #[derive(Serialize)]
    struct Entry<'a> {
        id: &'a str,
        provenance: &'a Provenance,
        text: String,
        body: &'a InvariantBody,
    }
    let entries: Vec<Entry> = invs
        .iter()
        .map(|inv| Entry {
            id: &inv.id,
            provenance: &inv.provenance,
            text: render_invariant(inv),
            body: &inv.body,
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("rule serialization")
}

pub fn rules_to_text(invs: &[Invariant]) -> String {
    let mut out = String::new();
    for inv in invs {
        out.push_str(&render_invariant(inv));
        out.push('\n');
    }
    out
}

pub fn stage1_registry() -> Arc<Registry> {
    crate::sim::stage1_registry()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::stage1_registry;

    fn parse(text: &str) -> Invariant {
        parse_invariant(text, &stage1_registry(), Provenance::DesignDoc).unwrap()
    }

    #[test]
    fn table1_invariant_1() {
        let inv = parse("IF LIT101 < 500mm THEN MV101 = OPEN");
        match inv.body {
            InvariantBody::Implication {
                antecedent: Cond::Atom(p),
                consequents,
            } => {
                assert_eq!(p.tag.as_str(), "LIT101");
                assert_eq!(p.cmp, Cmp::Lt);
                assert_eq!(p.value, 500.0);
                assert_eq!(p.unit.as_deref(), Some("mm"));
                assert_eq!(
                    consequents,
                    vec![Consequent::Action(ActionAssertion::SetState {
                        tag: SignalTag::new("MV101").unwrap(),
                        state_code: 2
                    })]
                );
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn table1_invariant_8_range() {
        let inv = parse("250mm <= LIT101 <= 1000mm");
        assert_eq!(
            inv.body,
            InvariantBody::Range {
                tag: SignalTag::new("LIT101").unwrap(),
                lo: 250.0,
                hi: 1000.0
            }
        );
    }

    #[test]
    fn table1_invariant_3_alarm_and_sugar() {
        let inv = parse("IF LIT101 < 250mm THEN ALARM & P101/P102 = STOP");
        match inv.body {
            InvariantBody::Implication { consequents, .. } => {
                assert_eq!(
                    consequents,
                    vec![
                        Consequent::Action(ActionAssertion::AlarmRaised),
                        Consequent::Action(ActionAssertion::SetState {
                            tag: SignalTag::new("P101").unwrap(),
                            state_code: 1
                        }),
                        Consequent::Action(ActionAssertion::SetState {
                            tag: SignalTag::new("P102").unwrap(),
                            state_code: 1
                        }),
                    ]
                );
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn table1_invariant_10_actuator_antecedent() {
        let inv = parse("IF P101/P102 = START THEN FIT201 >= 0.5 m3/h");
        match inv.body {
            InvariantBody::Implication {
                antecedent,
                consequents,
            } => {
                assert_eq!(antecedent.atoms().len(), 2);
                assert!(antecedent
                    .atoms()
                    .iter()
                    .all(|p| p.cmp == Cmp::Eq && p.value == 2.0));
                assert_eq!(consequents.len(), 1);
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn fail_state_word_rejected() {
        let err = parse_invariant(
            "IF P101 = FAIL OR (LIT301 < 800mm OR FIT201 < 0.5 m3/h) THEN P102 = START",
            &stage1_registry(),
            Provenance::DesignDoc,
        )
        .unwrap_err();
        assert_eq!(err, DslError::BadStateWord("FAIL".to_string()));
    }

    #[test]
    fn equality_on_analog_rejected() {
        let err = parse_invariant(
            "IF LIT101 = 500 THEN MV101 = OPEN",
            &stage1_registry(),
            Provenance::DesignDoc,
        )
        .unwrap_err();
        assert_eq!(err, DslError::EqualityOnAnalog("LIT101".to_string()));
    }

    #[test]
    fn unknown_tag_rejected() {
        let err = parse_invariant(
            "IF LIT999 < 1 THEN MV101 = OPEN",
            &stage1_registry(),
            Provenance::DesignDoc,
        )
        .unwrap_err();
        assert_eq!(err, DslError::UnknownTag("LIT999".to_string()));
    }

    #[test]
    fn prose_is_a_syntax_error() {
        let err = parse_invariant(
            "the system seems safe",
            &stage1_registry(),
            Provenance::LLMProposed,
        )
        .unwrap_err();
        assert!(matches!(err, DslError::SyntaxError(_) | DslError::UnknownTag(_)));
    }

    #[test]
    fn render_range_canonical() {
        let inv = parse("250mm <= LIT101 <= 1000mm");
        assert_eq!(render_invariant(&inv), "250 <= LIT101 <= 1000");
    }

    fn table1_rules() -> Vec<&'static str> {
        vec![
            "IF LIT101 < 500mm THEN MV101 = OPEN",
            "IF LIT101 > 800mm THEN MV101 = CLOSE",
            "IF LIT101 < 250mm THEN ALARM & P101/P102 = STOP",
            "IF LIT101 > 1000mm THEN ALARM",
            "IF LIT301 < 800mm THEN P101/P102 = START",
            "IF LIT301 > 1000mm THEN P101/P102 = STOP",
            "IF FIT201 < 0.5 m3/h THEN P101/P102 = STOP",
            "250mm <= LIT101 <= 1000mm",
            "800mm <= LIT301 <= 1000mm",
            "IF P101/P102 = START THEN FIT201 >= 0.5 m3/h",
        ]
    }

    #[test]
    fn parse_render_roundtrip_on_table1() {
        let reg = stage1_registry();
        for text in table1_rules() {
            let inv = parse_invariant(text, &reg, Provenance::DesignDoc).unwrap();
            let rendered = render_invariant(&inv);
            let again = parse_invariant(&rendered, &reg, Provenance::DesignDoc).unwrap();
            assert_eq!(inv.body, again.body, "roundtrip failed for {text:?}");
            assert_eq!(rendered, render_invariant(&again));
        }
    }

    #[test]
    fn rules_file_collects_rejects() {
        let text = "# stage 1 rules\nIF LIT101 < 500mm THEN MV101 = OPEN\n\nnot a rule\n";
        let (acc, rej) = parse_rules_file(text, &stage1_registry(), Provenance::DesignDoc);
        assert_eq!(acc.len(), 1);
        assert_eq!(rej.len(), 1);
        assert_eq!(rej[0].0, 4);
    }

    // --- evaluation ---

    use crate::signal::Trace;
    use std::collections::BTreeMap;

    fn mini_trace(rows: &[(f64, f64)]) -> Trace {
        // (LIT101, MV101) pairs; other stage-1 signals held at neutral values
        let reg = stage1_registry();
        let n = rows.len();
        let mut columns: BTreeMap<SignalTag, Vec<f64>> = BTreeMap::new();
        columns.insert(
            SignalTag::new("LIT101").unwrap(),
            rows.iter().map(|r| r.0).collect(),
        );
        columns.insert(
            SignalTag::new("MV101").unwrap(),
            rows.iter().map(|r| r.1).collect(),
        );
        columns.insert(SignalTag::new("LIT301").unwrap(), vec![900.0; n]);
        columns.insert(SignalTag::new("FIT201").unwrap(), vec![2.5; n]);
        columns.insert(SignalTag::new("P101").unwrap(), vec![2.0; n]);
        columns.insert(SignalTag::new("P102").unwrap(), vec![2.0; n]);
        columns.insert(SignalTag::new("ALARM1").unwrap(), vec![0.0; n]);
        Trace::from_columns(reg, columns, vec![0; n]).unwrap()
    }

    #[test]
    fn eval_inv1_no_violation() {
        let inv = parse("IF LIT101 < 500mm THEN MV101 = OPEN");
        let trace = mini_trace(&[(400.0, 2.0), (600.0, 1.0), (450.0, 2.0)]);
        let s = eval_over_trace(&inv, &trace, 0).unwrap();
        assert_eq!((s.support, s.violations, s.vacuous), (2, 0, 1));
    }

    #[test]
    fn eval_inv1_violation_at_end() {
        let inv = parse("IF LIT101 < 500mm THEN MV101 = OPEN");
        let trace = mini_trace(&[(400.0, 2.0), (600.0, 1.0), (450.0, 1.0)]);
        let s = eval_over_trace(&inv, &trace, 0).unwrap();
        assert_eq!((s.support, s.violations), (2, 1));
        assert_eq!(s.violation_indices, vec![2]);
    }

    #[test]
    fn grace_window_semantics() {
        let inv = parse("IF LIT101 < 500mm THEN MV101 = OPEN");
        let trace = mini_trace(&[(450.0, 1.0), (450.0, 1.0), (450.0, 2.0)]);
        let s = eval_over_trace(&inv, &trace, 2).unwrap();
        assert_eq!(s.violations, 0);
        let s = eval_over_trace(&inv, &trace, 0).unwrap();
        assert_eq!(s.violations, 2);
    }

    #[test]
    fn grace_monotonicity() {
        let inv = parse("IF LIT101 < 500mm THEN MV101 = OPEN");
        let trace = mini_trace(&[
            (450.0, 1.0),
            (450.0, 2.0),
            (450.0, 1.0),
            (600.0, 1.0),
            (450.0, 1.0),
        ]);
        let mut prev = usize::MAX;
        for grace in 0..4 {
            let s = eval_over_trace(&inv, &trace, grace).unwrap();
            assert!(s.violations <= prev);
            prev = s.violations;
        }
    }

    #[test]
    fn range_eval() {
        let inv = parse("250mm <= LIT101 <= 1000mm");
        let trace = mini_trace(&[(200.0, 2.0), (500.0, 2.0), (1200.0, 2.0)]);
        let s = eval_over_trace(&inv, &trace, 0).unwrap();
        assert_eq!((s.support, s.violations, s.vacuous), (3, 2, 0));
        assert_eq!(s.violation_indices, vec![0, 2]);
    }
}
