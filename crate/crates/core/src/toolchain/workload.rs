use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fixture::{CHANGE_REQUEST_STATUSES, REQUIREMENT_STATUSES};
use super::{GroundTruth, ResourceKind, ToolResource, Toolchain};
use crate::rdf::Iri;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpWeights {
    pub create: f64,
    pub modify: f64,
    pub delete: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            create: 3.0,
            modify: 5.0,
            delete: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub requirement: f64,
    pub block: f64,
    pub change_request: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            requirement: 1.0,
            block: 1.0,
            change_request: 1.0,
        }
    }
}

/// A seeded mutation script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadScript {
    pub seed: u64,
    pub steps: usize,
    /// When set, overrides `steps` with `duration_ms * rate / 1000`.
    pub duration_ms: Option<u64>,
    /// Operations per second; 0 runs unpaced.
    pub rate: f64,
    pub ops: OpWeights,
    pub kinds: KindWeights,
    pub satisfies_probability: f64,
    pub refines_probability: f64,
    pub tracks_probability: f64,
}

impl Default for WorkloadScript {
    fn default() -> Self {
        WorkloadScript {
            seed: 0,
            steps: 100,
            duration_ms: None,
            rate: 0.0,
            ops: OpWeights::default(),
            kinds: KindWeights::default(),
            satisfies_probability: 0.5,
            refines_probability: 0.3,
            tracks_probability: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid workload: {0}")]
pub struct WorkloadError(String);

impl WorkloadScript {
    pub fn total_steps(&self) -> usize {
        match self.duration_ms {
            Some(ms) if self.rate > 0.0 => (ms as f64 * self.rate / 1000.0).round() as usize,
            _ => self.steps,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let check = |name: &str, ws: &[f64]| {
            if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(WorkloadError(format!("{name} weights must be finite and non-negative")));
            }
            if !ws.iter().any(|w| *w > 0.0) {
                return Err(WorkloadError(format!("{name} weights need one positive entry")));
            }
            Ok(())
        };
        check("op", &[self.ops.create, self.ops.modify, self.ops.delete])?;
        check("kind", &[self.kinds.requirement, self.kinds.block, self.kinds.change_request])?;
        for (name, p) in [
            ("satisfies_probability", self.satisfies_probability),
            ("refines_probability", self.refines_probability),
            ("tracks_probability", self.tracks_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorkloadError(format!("{name} must lie in [0, 1]")));
            }
        }
        if !self.rate.is_finite() || self.rate < 0.0 {
            return Err(WorkloadError("rate must be non-negative".into()));
        }
        if self.duration_ms.is_some() && self.rate == 0.0 {
            return Err(WorkloadError("duration_ms needs a positive rate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Create,
    Modify,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Create(ToolResource),
    Modify(ToolResource),
    Delete(Iri),
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Create(_) => OpKind::Create,
            Op::Modify(_) => OpKind::Modify,
            Op::Delete(_) => OpKind::Delete,
        }
    }

    pub fn uri(&self) -> &Iri {
        match self {
            Op::Create(r) | Op::Modify(r) => &r.uri,
            Op::Delete(uri) => uri,
        }
    }
}

/// Deterministic operation stream. It tracks which resources are live, so
/// modifications and deletions only ever target live resources.
pub struct WorkloadGenerator {
    rng: ChaCha8Rng,
    script: WorkloadScript,
    op_dist: WeightedIndex<f64>,
    kind_dist: WeightedIndex<f64>,
    truth: GroundTruth,
    live: BTreeMap<ResourceKind, Vec<Iri>>,
    next_index: BTreeMap<ResourceKind, u64>,
    namespaces: BTreeMap<ResourceKind, String>,
    revision: u64,
}

impl WorkloadGenerator {
    pub fn new(script: &WorkloadScript, toolchain: &Toolchain, fixture: &GroundTruth) -> Result<Self, WorkloadError> {
        script.validate()?;
        let op_dist = WeightedIndex::new([script.ops.create, script.ops.modify, script.ops.delete])
            .map_err(|e| WorkloadError(e.to_string()))?;
        let kind_dist = WeightedIndex::new([script.kinds.requirement, script.kinds.block, script.kinds.change_request])
            .map_err(|e| WorkloadError(e.to_string()))?;
        let mut live: BTreeMap<ResourceKind, Vec<Iri>> = BTreeMap::new();
        for r in fixture.resources() {
            live.entry(r.kind).or_default().push(r.uri.clone());
        }
        Ok(WorkloadGenerator {
            rng: ChaCha8Rng::seed_from_u64(script.seed),
            script: script.clone(),
            op_dist,
            kind_dist,
            truth: fixture.clone(),
            live,
            next_index: ResourceKind::ALL.into_iter().map(|k| (k, fixture.next_index(k))).collect(),
            namespaces: ResourceKind::ALL
                .into_iter()
                .map(|k| (k, toolchain.server_for(k).namespace().to_owned()))
                .collect(),
            revision: 0,
        })
    }

    /// The state every operation so far has produced.
    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn is_live(&self, uri: &Iri) -> bool {
        self.truth.get(uri).is_some()
    }

    pub fn next_op(&mut self) -> Op {
        let kind = ResourceKind::ALL[self.kind_dist.sample(&mut self.rng)];
        let wanted = [OpKind::Create, OpKind::Modify, OpKind::Delete][self.op_dist.sample(&mut self.rng)];
        let has_live = self.live.get(&kind).is_some_and(|v| !v.is_empty());
        let op = match wanted {
            OpKind::Modify if has_live => {
                let uri = self.pick_live(kind);
                let mut r = self.truth.get(&uri).expect("live resource is known").clone();
                self.revise(&mut r);
                Op::Modify(r)
            }
            OpKind::Delete if has_live => {
                let pool = self.live.get_mut(&kind).expect("checked non-empty");
                let uri = pool.swap_remove(self.rng.random_range(0..pool.len()));
                Op::Delete(uri)
            }
            _ => Op::Create(self.fresh(kind)),
        };
        match &op {
            Op::Create(r) => {
                self.live.entry(r.kind).or_default().push(r.uri.clone());
                self.truth.insert(r.clone());
            }
            Op::Modify(r) => self.truth.insert(r.clone()),
            Op::Delete(uri) => {
                self.truth.remove(uri);
            }
        }
        op
    }

    fn pick_live(&mut self, kind: ResourceKind) -> Iri {
        let pool = &self.live[&kind];
        pool[self.rng.random_range(0..pool.len())].clone()
    }

    fn random_live(&mut self, kind: ResourceKind) -> Option<Iri> {
        let pool = self.live.get(&kind)?;
        if pool.is_empty() {
            return None;
        }
        Some(pool[self.rng.random_range(0..pool.len())].clone())
    }

    fn fresh(&mut self, kind: ResourceKind) -> ToolResource {
        let n = self.next_index.entry(kind).or_insert(1);
        let id = format!("{}{}", kind.id_prefix(), *n);
        *n += 1;
        let uri = Iri::new(format!("{}{}", self.namespaces[&kind], id)).expect("generated ids are valid");
        let mut r = ToolResource::new(uri, kind, String::new());
        self.revise(&mut r);
        r
    }

    /// New title and status, and freshly drawn links.
    fn revise(&mut self, r: &mut ToolResource) {
        self.revision += 1;
        let id = r.uri.as_str().rsplit('/').next().unwrap_or_default().to_owned();
        r.title = format!("{id} rev {}", self.revision);
        r.status = match r.kind {
            ResourceKind::Requirement => Some(REQUIREMENT_STATUSES[self.rng.random_range(0..2)].to_owned()),
            ResourceKind::ChangeRequest => Some(CHANGE_REQUEST_STATUSES[self.rng.random_range(0..2)].to_owned()),
            ResourceKind::SimulinkBlock => None,
        };
        r.satisfies.clear();
        r.refines.clear();
        r.tracks.clear();
        match r.kind {
            ResourceKind::SimulinkBlock => {
                if self.rng.random_bool(self.script.satisfies_probability) {
                    r.satisfies.extend(self.random_live(ResourceKind::Requirement));
                }
            }
            ResourceKind::Requirement => {
                if self.rng.random_bool(self.script.refines_probability) {
                    r.refines
                        .extend(self.random_live(ResourceKind::Requirement).filter(|t| *t != r.uri));
                }
            }
            ResourceKind::ChangeRequest => {
                if self.rng.random_bool(self.script.tracks_probability) {
                    let target = if self.rng.random_bool(0.8) {
                        ResourceKind::Requirement
                    } else {
                        ResourceKind::SimulinkBlock
                    };
                    r.tracks.extend(self.random_live(target));
                }
            }
        }
    }
}

/// One executed operation with the order and timestamp its change event got.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationRecord {
    pub step: usize,
    pub op: Op,
    pub server_id: String,
    pub order: u64,
    pub ts: u64,
}

impl MutationRecord {
    pub fn apply_to(&self, truth: &mut GroundTruth) {
        match &self.op {
            Op::Create(r) | Op::Modify(r) => truth.insert(r.clone()),
            Op::Delete(uri) => {
                truth.remove(uri);
            }
        }
    }
}

/// Executes the script against the toolchain, paced at `script.rate`.
pub fn run_workload(
    script: &WorkloadScript,
    toolchain: &Toolchain,
    fixture: &GroundTruth,
) -> Result<Vec<MutationRecord>, WorkloadError> {
    let mut generator = WorkloadGenerator::new(script, toolchain, fixture)?;
    let steps = script.total_steps();
    let interval = (script.rate > 0.0).then(|| Duration::from_secs_f64(1.0 / script.rate));
    let started = Instant::now();
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        if let Some(interval) = interval {
            let due = started + interval.mul_f64(step as f64);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let op = generator.next_op();
        let event = match &op {
            Op::Create(r) | Op::Modify(r) => Some(toolchain.put(r)),
            Op::Delete(uri) => toolchain.delete(uri),
        }
        .expect("generator only deletes live resources");
        log.push(MutationRecord {
            step,
            server_id: toolchain
                .server_of(op.uri())
                .map(|s| s.id().to_owned())
                .unwrap_or_default(),
            op,
            order: event.order,
            ts: event.ts,
        });
    }
    Ok(log)
}
