//! The test catalog: named server- and client-facing tests, each binding a
//! generation plan, an optional mutation, fixed parameters and an expected
//! outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::engine::{ExpectedOutcome, Goal, Registry, Role};
use crate::gen::{GenerationPlan, Mutation};
use crate::wire::{error_codes, FrameKind};

const BUILTIN: &str = include_str!("catalog.toml");

pub const CATALOG_ENV: &str = "QUICHECK_CATALOG";
pub const SERVER_TEST_COUNT: usize = 23;
pub const CLIENT_TEST_COUNT: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("cannot read catalog {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no {role} test named `{name}`{}", suggestion.as_ref().map(|s| format!("; did you mean `{s}`?")).unwrap_or_default())]
    UnknownTest { name: String, role: Role, suggestion: Option<String> },
    #[error("`{name}` names more than one {role} test")]
    Ambiguous { name: String, role: Role },
}

/// Addresses, version and request count shared by every test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedParams {
    pub client_addr: SocketAddr,
    pub server_addr: SocketAddr,
    pub version: u32,
    pub requests: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub kind: Mutation,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestSpec {
    pub name: String,
    /// Role of the implementation under test.
    pub role: Role,
    pub aliases: Vec<String>,
    pub description: String,
    pub reconstructed: bool,
    pub frames: Vec<FrameKind>,
    pub weights: BTreeMap<FrameKind, u32>,
    pub mutation: Option<MutationSpec>,
    pub migration: bool,
    pub unknown_tp: bool,
    pub tester_closes: bool,
    pub goal: Goal,
    pub expected: ExpectedOutcome,
    pub params: FixedParams,
}

impl TestSpec {
    pub fn tester_role(&self) -> Role {
        self.role.other()
    }

    pub fn plan(&self) -> GenerationPlan {
        let mut plan = GenerationPlan::new(self.frames.clone());
        plan.weights = self.weights.clone();
        plan.mutation = self.mutation.as_ref().map(|m| m.kind);
        plan
    }

    pub fn is_adversarial(&self) -> bool {
        self.mutation.is_some()
    }

    /// Requirement the test's stimulus targets, if any.
    pub fn target(&self) -> Option<&str> {
        self.mutation.as_ref().map(|m| m.target.as_str())
    }

    fn answers_to(&self, name: &str) -> bool {
        self.name == name || self.aliases.iter().any(|a| a == name)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    defaults: FixedParams,
    #[serde(rename = "test", default)]
    tests: Vec<RawTest>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    name: String,
    role: Role,
    #[serde(default)]
    aliases: Vec<String>,
    #[serde(default)]
    description: String,
    #[serde(default)]
    reconstructed: bool,
    frames: Vec<FrameKind>,
    #[serde(default)]
    weights: BTreeMap<String, u32>,
    mutation: Option<MutationSpec>,
    #[serde(default)]
    migration: bool,
    #[serde(default)]
    unknown_tp: bool,
    #[serde(default)]
    tester_closes: bool,
    goal: Goal,
    expected: ExpectedOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Catalog {
    pub defaults: FixedParams,
    pub tests: Vec<TestSpec>,
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let mut tests = Vec::with_capacity(raw.tests.len());
        for t in raw.tests {
            let mut weights = BTreeMap::new();
            for (k, w) in t.weights {
                let kind = FrameKind::ALL
                    .into_iter()
                    .find(|f| f.name() == k)
                    .ok_or_else(|| CatalogError::Parse(format!("test `{}`: unknown frame kind `{k}` in weights", t.name)))?;
                weights.insert(kind, w);
            }
            tests.push(TestSpec {
                name: t.name,
                role: t.role,
                aliases: t.aliases,
                description: t.description,
                reconstructed: t.reconstructed,
                frames: t.frames,
                weights,
                mutation: t.mutation,
                migration: t.migration,
                unknown_tp: t.unknown_tp,
                tester_closes: t.tester_closes,
                goal: t.goal,
                expected: t.expected,
                params: raw.defaults.clone(),
            });
        }
        Ok(Catalog { defaults: raw.defaults, tests })
    }

    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io { path: path.to_path_buf(), source })?;
        Catalog::parse(&text)
    }

    pub fn builtin() -> Arc<Catalog> {
        static CELL: OnceLock<Arc<Catalog>> = OnceLock::new();
        CELL.get_or_init(|| Arc::new(Catalog::parse(BUILTIN).expect("builtin catalog parses"))).clone()
    }

    /// The file named by `QUICHECK_CATALOG`, else the builtin catalog.
    pub fn from_env() -> Result<Arc<Catalog>, CatalogError> {
        match std::env::var_os(CATALOG_ENV) {
            Some(p) if !p.is_empty() => Catalog::load(Path::new(&p)).map(Arc::new),
            _ => Ok(Catalog::builtin()),
        }
    }

    pub fn list_tests(&self, role: Role) -> Vec<&str> {
        self.tests.iter().filter(|t| t.role == role).map(|t| t.name.as_str()).collect()
    }

    pub fn get_test(&self, name: &str, role: Role) -> Result<&TestSpec, CatalogError> {
        let mut hits = self.tests.iter().filter(|t| t.role == role && t.answers_to(name));
        match (hits.next(), hits.next()) {
            (Some(t), None) => Ok(t),
            (Some(_), Some(_)) => Err(CatalogError::Ambiguous { name: name.to_string(), role }),
            (None, _) => Err(CatalogError::UnknownTest { name: name.to_string(), role, suggestion: self.suggest(name, role) }),
        }
    }

    fn suggest(&self, name: &str, role: Role) -> Option<String> {
        self.tests
            .iter()
            .filter(|t| t.role == role)
            .flat_map(|t| std::iter::once(&t.name).chain(t.aliases.iter()).map(move |n| (n, &t.name)))
            .map(|(n, canon)| (strsim::levenshtein(n, name), canon))
            .filter(|(d, _)| *d <= 3)
            .min_by_key(|(d, _)| *d)
            .map(|(_, canon)| canon.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Defect {
    pub test: String,
    pub role: Role,
    pub message: String,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.test, self.role, self.message)
    }
}

pub fn validate_catalog(catalog: &Catalog, registry: &Registry) -> Vec<Defect> {
    let mut out = Vec::new();
    let mut names: BTreeSet<(Role, &str)> = BTreeSet::new();
    for t in &catalog.tests {
        let mut defect = |message: String| out.push(Defect { test: t.name.clone(), role: t.role, message });
        for n in std::iter::once(&t.name).chain(t.aliases.iter()) {
            if !names.insert((t.role, n.as_str())) {
                defect(format!("name `{n}` is used twice"));
            }
        }
        if t.frames.is_empty() {
            defect("empty frame set".into());
        }
        for k in t.weights.keys() {
            if !t.frames.contains(k) {
                defect(format!("weight for {k}, which is not in the frame set"));
            }
        }
        if !t.frames.is_empty() && t.frames.iter().all(|k| t.weights.get(k) == Some(&0)) {
            defect("all weights are zero".into());
        }
        match &t.mutation {
            Some(m) => {
                if !registry.contains(&m.target) {
                    defect(format!("mutation target {} is not registered", m.target));
                } else if m.kind.target() != m.target {
                    defect(format!("mutation {} violates {}, not {}", m.kind, m.kind.target(), m.target));
                }
                if m.kind.tester_role().is_some_and(|r| r != t.tester_role()) {
                    defect(format!("mutation {} needs a {} tester", m.kind, t.role));
                }
                if !t.expected.expects_error() {
                    defect("adversarial test expects no error".into());
                }
            }
            None => {
                if !matches!(t.expected, ExpectedOutcome::CleanClose | ExpectedOutcome::Ignored) {
                    defect("test without a mutation expects an error".into());
                }
            }
        }
        if let ExpectedOutcome::TransportError { codes } | ExpectedOutcome::HandshakeFailureOrError { codes } = &t.expected {
            if codes.is_empty() {
                defect("expected outcome lists no error codes".into());
            }
            for c in codes {
                if error_codes::by_name(c).is_none() {
                    defect(format!("unknown error code {c}"));
                }
            }
        }
        let mutation = t.mutation.as_ref().map(|m| m.kind);
        if t.tester_role() == Role::Client {
            if t.frames.contains(&FrameKind::NewToken) && mutation != Some(Mutation::ClientNewToken) {
                defect("client tester may not send NEW_TOKEN".into());
            }
            if t.frames.contains(&FrameKind::HandshakeDone) && mutation != Some(Mutation::ClientHandshakeDone) {
                defect("client tester may not send HANDSHAKE_DONE".into());
            }
        }
        if t.frames.contains(&FrameKind::Unknown) && mutation != Some(Mutation::UnknownFrameType) {
            defect("UNKNOWN frames need the unknown_frame_type mutation".into());
        }
        if t.role == Role::Client && t.migration {
            defect("migration is not exercised against clients".into());
        }
    }
    out
}
