use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::harness::{run_attack, AttackOutcome};
use super::script::{AdversaryScript, Property, ScriptError};

pub const DEFAULT_SEED: u64 = 0x15e6;

/// A named attack the suite can run.
pub trait Attack: Send + Sync {
    fn name(&self) -> &str;
    fn summary(&self) -> &str;
    fn property(&self) -> Option<Property>;
    fn is_control(&self) -> bool;
    fn run(&self, seed: u64) -> AttackOutcome;
}

pub struct ScriptAttack {
    pub script: AdversaryScript,
    pub source: String,
}

impl Attack for ScriptAttack {
    fn name(&self) -> &str {
        &self.script.name
    }

    fn summary(&self) -> &str {
        &self.script.summary
    }

    fn property(&self) -> Option<Property> {
        self.script.property
    }

    fn is_control(&self) -> bool {
        self.script.control
    }

    fn run(&self, seed: u64) -> AttackOutcome {
        run_attack(&self.script, seed)
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("baseline.atk", include_str!("../../../../attacks/baseline.atk")),
    ("forged-server-cert.atk", include_str!("../../../../attacks/forged-server-cert.atk")),
    ("tampered-m1.atk", include_str!("../../../../attacks/tampered-m1.atk")),
    ("tamper-e1.atk", include_str!("../../../../attacks/tamper-e1.atk")),
    ("tamper-c1.atk", include_str!("../../../../attacks/tamper-c1.atk")),
    ("tamper-c2.atk", include_str!("../../../../attacks/tamper-c2.atk")),
    ("ksym-fault.atk", include_str!("../../../../attacks/ksym-fault.atk")),
    ("flip-direction.atk", include_str!("../../../../attacks/flip-direction.atk")),
    ("replay-m1.atk", include_str!("../../../../attacks/replay-m1.atk")),
    ("replay-phase2.atk", include_str!("../../../../attacks/replay-phase2.atk")),
    ("mitm-eph.atk", include_str!("../../../../attacks/mitm-eph.atk")),
    ("mitm-full.atk", include_str!("../../../../attacks/mitm-full.atk")),
    ("forward-secrecy.atk", include_str!("../../../../attacks/forward-secrecy.atk")),
    ("insider-third-party.atk", include_str!("../../../../attacks/insider-third-party.atk")),
    ("impersonate-client.atk", include_str!("../../../../attacks/impersonate-client.atk")),
    ("impersonate-server.atk", include_str!("../../../../attacks/impersonate-server.atk")),
    ("stale-timestamp.atk", include_str!("../../../../attacks/stale-timestamp.atk")),
    ("future-timestamp.atk", include_str!("../../../../attacks/future-timestamp.atk")),
    ("control-replay-no-cache.atk", include_str!("../../../../attacks/control-replay-no-cache.atk")),
    ("control-leaked-client.atk", include_str!("../../../../attacks/control-leaked-client.atk")),
];

#[derive(Default)]
pub struct AttackRegistry {
    attacks: BTreeMap<String, Box<dyn Attack>>,
}

impl AttackRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The scripts shipped in `attacks/`.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for (file, text) in BUILTIN {
            let script = AdversaryScript::parse(text).unwrap_or_else(|e| panic!("{file}: {e}"));
            r.register(Box::new(ScriptAttack { script, source: file.to_string() }));
        }
        r
    }

    /// Loads every `*.atk` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, (String, ScriptError)> {
        let mut r = Self::new();
        let io = |e: std::io::Error| (dir.display().to_string(), ScriptError { line: 0, msg: e.to_string() });
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "atk"))
            .collect();
        paths.sort();
        for p in paths {
            let name = p.display().to_string();
            let text = fs::read_to_string(&p).map_err(io)?;
            let script = AdversaryScript::parse(&text).map_err(|e| (name.clone(), e))?;
            r.register(Box::new(ScriptAttack { script, source: name }));
        }
        Ok(r)
    }

    /// Replaces any attack with the same name.
    pub fn register(&mut self, attack: Box<dyn Attack>) {
        self.attacks.insert(attack.name().to_string(), attack);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Attack> {
        self.attacks.get(name).map(|a| a.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attacks.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Attack> {
        self.attacks.values().map(|a| a.as_ref())
    }

    pub fn len(&self) -> usize {
        self.attacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attacks.is_empty()
    }

    /// Keeps only the named attacks; returns the first unknown name.
    pub fn select(mut self, names: &[String]) -> Result<Self, String> {
        if let Some(bad) = names.iter().find(|n| !self.attacks.contains_key(n.as_str())) {
            return Err(bad.clone());
        }
        self.attacks.retain(|k, _| names.contains(k));
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyVerdict {
    pub property: Property,
    pub scripts: Vec<String>,
    pub resisted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub outcomes: Vec<AttackOutcome>,
    /// One entry per property covered by at least one script.
    pub properties: Vec<PropertyVerdict>,
    pub resisted: usize,
    pub covered: usize,
    pub controls_as_expected: bool,
    /// Every non-control attack failed and met its expectations.
    pub passed: bool,
}

impl SuiteReport {
    /// All eight properties are covered and resisted.
    pub fn complete(&self) -> bool {
        self.passed && self.covered == Property::ALL.len() && self.resisted == Property::ALL.len()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<26} {:<22} {:<7} {:<18} {:<18} adversary key",
            "attack", "property", "result", "client", "server"
        );
        for o in &self.outcomes {
            let last = o.last();
            let end = |e: &super::harness::EndpointReport| match e.error {
                None => "ok".to_string(),
                Some(c) => c.to_string(),
            };
            let property = match (o.property, o.control) {
                (Some(p), false) => p.to_string(),
                (Some(p), true) => format!("({p})"),
                (None, _) => "(control)".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<26} {:<22} {:<7} {:<18} {:<18} {}",
                o.name,
                property,
                if o.passed { "PASS" } else { "FAIL" },
                end(&last.client),
                end(&last.server),
                if o.attack_succeeded { "computable" } else { "none" }
            );
        }
        let _ = writeln!(
            s,
            "\nproperties resisted: {}/{} (covered {}), controls as expected: {}",
            self.resisted,
            Property::ALL.len(),
            self.covered,
            if self.controls_as_expected { "yes" } else { "no" }
        );
        s
    }
}

pub fn run_attack_suite(registry: &AttackRegistry, seed: u64) -> SuiteReport {
    let outcomes: Vec<AttackOutcome> = registry.iter().map(|a| a.run(seed)).collect();
    let mut by_property: BTreeMap<Property, Vec<&AttackOutcome>> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| !o.control) {
        if let Some(p) = o.property {
            by_property.entry(p).or_default().push(o);
        }
    }
    let properties: Vec<PropertyVerdict> = by_property
        .into_iter()
        .map(|(property, os)| PropertyVerdict {
            property,
            scripts: os.iter().map(|o| o.name.clone()).collect(),
            resisted: os.iter().all(|o| o.passed),
        })
        .collect();
    let resisted = properties.iter().filter(|p| p.resisted).count();
    let covered = properties.len();
    let controls_as_expected = outcomes.iter().filter(|o| o.control).all(|o| o.passed);
    let passed = outcomes.iter().filter(|o| !o.control).all(|o| o.passed);
    SuiteReport { seed, outcomes, properties, resisted, covered, controls_as_expected, passed }
}
