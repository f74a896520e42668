//! Line-oriented adversary scripts.
//!
//! ```text
//! # comment
//! @name replay-m1
//! @property replay
//! @sessions 2
//! @client-trust reset
//! @expect server:Replayed
//! m1 1 c2s replay 0
//! ```
//!
//! Rule lines are `<kind> <index|*> <c2s|s2c|*> <action> [arg]`. The index
//! counts messages of that kind and direction across the whole run, from 0.
//! The first matching rule wins; unmatched traffic passes.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::handshake::{ErrorCode, Fault, Role};
use crate::wire::{Direction, Kind, AUTH_BODY_LEN, C1_BODY_LEN, C2_BODY_LEN, EPH_BODY_LEN, RESUME_BODY_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

fn err(line: usize, msg: impl Into<String>) -> ScriptError {
    ScriptError { line, msg: msg.into() }
}

/// Security properties an attack can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    MutualAuthentication,
    SessionKeyAgreement,
    Replay,
    ManInTheMiddle,
    ForwardSecrecy,
    Insider,
    Impersonation,
    DenialOfService,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::MutualAuthentication,
        Property::SessionKeyAgreement,
        Property::Replay,
        Property::ManInTheMiddle,
        Property::ForwardSecrecy,
        Property::Insider,
        Property::Impersonation,
        Property::DenialOfService,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::MutualAuthentication => "mutual-authentication",
            Property::SessionKeyAgreement => "session-key-agreement",
            Property::Replay => "replay",
            Property::ManInTheMiddle => "man-in-the-middle",
            Property::ForwardSecrecy => "forward-secrecy",
            Property::Insider => "insider",
            Property::Impersonation => "impersonation",
            Property::DenialOfService => "denial-of-service",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown property {s:?}"))
    }
}

/// Whose long-term key an injected message is built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyOwner {
    /// The adversary's own registered identity.
    Adversary,
    LeakedClient,
    LeakedServer,
    /// A registered party outside the attacked session.
    ThirdParty,
}

impl FromStr for KeyOwner {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "adversary" => KeyOwner::Adversary,
            "leaked-client" => KeyOwner::LeakedClient,
            "leaked-server" => KeyOwner::LeakedServer,
            "third-party" => KeyOwner::ThirdParty,
            _ => return Err(format!("unknown key owner {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Pass,
    Drop,
    /// Deliver the n-th recorded message of the same kind and direction
    /// instead.
    Replay(usize),
    /// Flip the low bit of the body byte at this offset.
    TamperByte(usize),
    /// Replace the message with one the adversary builds itself.
    SubstituteKey(KeyOwner),
    /// Advance the shared clock before delivering.
    Delay(u64),
    /// Rewrite the timestamp of `m1`/`m2` without re-signing.
    ShiftTimestamp(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub kind: Kind,
    pub index: Option<usize>,
    pub direction: Option<Direction>,
    pub action: Action,
    pub line: usize,
}

impl Rule {
    pub fn matches(&self, kind: Kind, index: usize, direction: Direction) -> bool {
        self.kind == kind && self.index.is_none_or(|i| i == index) && self.direction.is_none_or(|d| d == direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakTarget {
    Client,
    Server,
    Both,
    ThirdParty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leak {
    pub target: LeakTarget,
    /// Leaked only after every session has ended.
    pub after: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Expect {
    Ok,
    Error(ErrorCode),
    AnyError,
}

impl FromStr for Expect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(Expect::Ok),
            "error" => Ok(Expect::AnyError),
            other => other.parse().map(Expect::Error),
        }
    }
}

impl Expect {
    pub fn check(self, result: Result<(), ErrorCode>) -> bool {
        match (self, result) {
            (Expect::Ok, Ok(())) => true,
            (Expect::AnyError, Err(_)) => true,
            (Expect::Error(want), Err(got)) => want == got,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Expectations {
    pub client: Option<Expect>,
    pub server: Option<Expect>,
    /// `Some(true)`: the attack is expected to yield an adversary-computable
    /// accepted key.
    pub adversary_succeeds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryScript {
    pub name: String,
    pub summary: String,
    pub property: Option<Property>,
    /// Demonstrates a limit or a removed defence; excluded from the
    /// resisted count.
    pub control: bool,
    pub sessions: usize,
    /// Forget the client's stored trust before every session, forcing Phase 1.
    pub client_trust_reset: bool,
    pub leaks: Vec<Leak>,
    pub replay_cache: bool,
    pub fault: Option<Fault>,
    pub expect: Expectations,
    /// Endpoint whose signature/DH count must be zero in the last session.
    pub dos_check: Option<Role>,
    pub rules: Vec<Rule>,
}

impl Default for AdversaryScript {
    fn default() -> Self {
        AdversaryScript {
            name: "unnamed".into(),
            summary: String::new(),
            property: None,
            control: false,
            sessions: 1,
            client_trust_reset: false,
            leaks: Vec::new(),
            replay_cache: true,
            fault: None,
            expect: Expectations::default(),
            dos_check: None,
            rules: Vec::new(),
        }
    }
}

fn fixed_body_len(kind: Kind) -> Option<usize> {
    match kind {
        Kind::M1 | Kind::M2 => Some(AUTH_BODY_LEN),
        Kind::Eph => Some(EPH_BODY_LEN),
        Kind::C1 => Some(C1_BODY_LEN),
        Kind::C2 => Some(C2_BODY_LEN),
        Kind::Resume => Some(RESUME_BODY_LEN),
        Kind::App => None,
    }
}

impl AdversaryScript {
    pub fn holds(&self, owner: KeyOwner, before: bool) -> bool {
        let leaked = |t: &[LeakTarget]| self.leaks.iter().any(|l| t.contains(&l.target) && (!before || !l.after));
        match owner {
            KeyOwner::Adversary => true,
            KeyOwner::LeakedClient => leaked(&[LeakTarget::Client, LeakTarget::Both]),
            KeyOwner::LeakedServer => leaked(&[LeakTarget::Server, LeakTarget::Both]),
            KeyOwner::ThirdParty => leaked(&[LeakTarget::ThirdParty]),
        }
    }

    pub fn parse(text: &str) -> Result<AdversaryScript, ScriptError> {
        let mut s = AdversaryScript::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            if let Some(directive) = words[0].strip_prefix('@') {
                s.directive(line, directive, &words[1..], content)?;
            } else {
                s.rules.push(parse_rule(line, &words)?);
            }
        }
        s.validate()?;
        Ok(s)
    }

    fn directive(&mut self, line: usize, name: &str, args: &[&str], content: &str) -> Result<(), ScriptError> {
        let one = || {
            if args.len() == 1 {
                Ok(args[0])
            } else {
                Err(err(line, format!("@{name} takes one argument")))
            }
        };
        match name {
            "name" => self.name = one()?.to_string(),
            "summary" => self.summary = content["@summary".len()..].trim().to_string(),
            "property" => self.property = Some(one()?.parse().map_err(|e| err(line, e))?),
            "control" => self.control = true,
            "sessions" => {
                self.sessions = one()?.parse().map_err(|_| err(line, "@sessions needs a positive integer"))?;
                if self.sessions == 0 {
                    return Err(err(line, "@sessions needs a positive integer"));
                }
            }
            "client-trust" if one()? == "reset" => self.client_trust_reset = true,
            "replay-cache" if one()? == "off" => self.replay_cache = false,
            "fault" if one()? == "server-ksym-bitflip" => self.fault = Some(Fault::FlipKsymBit),
            "leak" => {
                let target = match args.first() {
                    Some(&"client") => LeakTarget::Client,
                    Some(&"server") => LeakTarget::Server,
                    Some(&"both") => LeakTarget::Both,
                    Some(&"third-party") => LeakTarget::ThirdParty,
                    _ => return Err(err(line, "@leak client|server|both|third-party [after]")),
                };
                let after = match args.get(1) {
                    None => false,
                    Some(&"after") => true,
                    Some(_) => return Err(err(line, "@leak client|server|both|third-party [after]")),
                };
                self.leaks.push(Leak { target, after });
            }
            "expect" => {
                if args.is_empty() {
                    return Err(err(line, "@expect needs at least one who:what pair"));
                }
                for a in args {
                    let (who, what) = a.split_once(':').ok_or_else(|| err(line, format!("bad expectation {a:?}")))?;
                    match who {
                        "client" => self.expect.client = Some(what.parse().map_err(|e| err(line, e))?),
                        "server" => self.expect.server = Some(what.parse().map_err(|e| err(line, e))?),
                        "adversary" => {
                            self.expect.adversary_succeeds = Some(match what {
                                "success" => true,
                                "failure" => false,
                                _ => return Err(err(line, "adversary:success|failure")),
                            })
                        }
                        _ => return Err(err(line, format!("unknown endpoint {who:?}"))),
                    }
                }
            }
            "dos-check" => {
                self.dos_check = Some(match one()? {
                    "client" => Role::Client,
                    "server" => Role::Server,
                    _ => return Err(err(line, "@dos-check client|server")),
                })
            }
            _ => return Err(err(line, format!("unknown directive @{name} {}", args.join(" ")))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ScriptError> {
        for r in &self.rules {
            if let Action::SubstituteKey(owner) = r.action {
                if !self.holds(owner, true) {
                    return Err(err(r.line, "substitute-key with a key the adversary does not hold before the run"));
                }
            }
        }
        if !self.control && self.property.is_none() && !self.rules.is_empty() {
            return Err(err(0, "an attack script needs @property or @control"));
        }
        Ok(())
    }
}

fn parse_rule(line: usize, w: &[&str]) -> Result<Rule, ScriptError> {
    if w.len() < 4 {
        return Err(err(line, "expected <kind> <index|*> <c2s|s2c|*> <action> [arg]"));
    }
    let kind = Kind::from_name(w[0]).ok_or_else(|| err(line, format!("unknown message kind {:?}", w[0])))?;
    let index = match w[1] {
        "*" => None,
        n => Some(n.parse().map_err(|_| err(line, format!("bad index {n:?}")))?),
    };
    let direction = match w[2] {
        "*" => None,
        "c2s" => Some(Direction::ClientToServer),
        "s2c" => Some(Direction::ServerToClient),
        d => return Err(err(line, format!("bad direction {d:?}"))),
    };
    let arg = w.get(4).copied();
    if w.len() > 5 {
        return Err(err(line, "trailing words after the action argument"));
    }
    let need = |what: &str| arg.ok_or_else(|| err(line, format!("{} needs {what}", w[3])));
    let action = match w[3] {
        "pass" => Action::Pass,
        "drop" => Action::Drop,
        "replay" => {
            let n: usize = need("a recorded index")?.parse().map_err(|_| err(line, "bad replay index"))?;
            if index.is_some_and(|i| n >= i) {
                return Err(err(line, "replay must refer to an earlier occurrence"));
            }
            Action::Replay(n)
        }
        "tamper-byte" => {
            let off: usize = need("an offset")?.parse().map_err(|_| err(line, "bad offset"))?;
            if fixed_body_len(kind).is_some_and(|len| off >= len) {
                return Err(err(line, format!("offset {off} beyond the {} body", kind.name())));
            }
            Action::TamperByte(off)
        }
        "substitute-key" => {
            if !matches!(kind, Kind::M1 | Kind::M2 | Kind::Eph | Kind::C1 | Kind::C2) {
                return Err(err(line, "substitute-key applies to m1, m2, eph, c1 and c2"));
            }
            Action::SubstituteKey(arg.unwrap_or("adversary").parse().map_err(|e| err(line, e))?)
        }
        "delay" => Action::Delay(need("milliseconds")?.parse().map_err(|_| err(line, "bad delay"))?),
        "shift-timestamp" => {
            if !matches!(kind, Kind::M1 | Kind::M2) {
                return Err(err(line, "shift-timestamp applies to m1 and m2"));
            }
            Action::ShiftTimestamp(need("milliseconds")?.parse().map_err(|_| err(line, "bad shift"))?)
        }
        a => return Err(err(line, format!("unknown action {a:?}"))),
    };
    if matches!(action, Action::Pass | Action::Drop) && arg.is_some() {
        return Err(err(line, format!("{} takes no argument", w[3])));
    }
    Ok(Rule { kind, index, direction, action, line })
}
