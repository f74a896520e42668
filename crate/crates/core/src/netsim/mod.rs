//! Transports and the scripted adversary.
//!
//! [`Channel`] carries whole frames over TCP or in-memory queues. The
//! harness in [`run_attack`] places an adversary between a client and a
//! server; it sees every frame, applies the script's rules, and afterwards
//! tries to recompute the session keys the endpoints accepted from what it
//! saw plus the keys it holds.

mod channel;
mod harness;
mod script;
mod suite;

pub use channel::{memory_pair, Channel, ChannelError, MemoryChannel, TcpChannel};
pub use harness::{
    run_attack, AttackOutcome, EndpointReport, SessionReport, ADVERSARY_ID, CA_ID, CLIENT_ID, SERVER_ID, THIRD_PARTY_ID,
};
pub use script::{
    Action, AdversaryScript, Expect, Expectations, KeyOwner, Leak, LeakTarget, Property, Rule, ScriptError,
};
pub use suite::{run_attack_suite, Attack, AttackRegistry, PropertyVerdict, ScriptAttack, SuiteReport, DEFAULT_SEED};
