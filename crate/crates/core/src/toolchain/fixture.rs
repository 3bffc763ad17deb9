use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ResourceKind, ToolResource, Toolchain};
use crate::rdf::{Dataset, Iri};

pub const REQUIREMENT_STATUSES: [&str; 2] = ["APPROVED", "DRAFT"];
pub const CHANGE_REQUEST_STATUSES: [&str; 2] = ["OPEN", "RESOLVED"];

/// Population to seed. With `canonical = true` the counts and
/// probabilities are ignored and the fixed twelve-resource fixture is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub canonical: bool,
    pub seed: u64,
    pub requirements: usize,
    pub blocks: usize,
    pub change_requests: usize,
    /// Chance that a block satisfies some requirement.
    pub satisfies_probability: f64,
    /// Chance that a requirement (other than the first) refines an earlier one.
    pub refines_probability: f64,
    /// Chance that a change request tracks something.
    pub tracks_probability: f64,
    /// Given a tracks link, chance that it targets a block instead of a
    /// requirement.
    pub tracks_block_probability: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            canonical: false,
            seed: 0,
            requirements: 0,
            blocks: 0,
            change_requests: 0,
            satisfies_probability: 0.5,
            refines_probability: 0.3,
            tracks_probability: 0.7,
            tracks_block_probability: 0.2,
        }
    }
}

impl FixtureSpec {
    pub fn canonical() -> Self {
        FixtureSpec {
            canonical: true,
            ..Self::default()
        }
    }

    pub fn random(seed: u64, requirements: usize, blocks: usize, change_requests: usize) -> Self {
        FixtureSpec {
            seed,
            requirements,
            blocks,
            change_requests,
            ..Self::default()
        }
    }
}

/// What the toolchain is supposed to contain, kept independently of the
/// servers so tests can compare against it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    resources: BTreeMap<Iri, ToolResource>,
}

impl GroundTruth {
    pub fn insert(&mut self, resource: ToolResource) {
        self.resources.insert(resource.uri.clone(), resource);
    }

    pub fn remove(&mut self, uri: &Iri) -> Option<ToolResource> {
        self.resources.remove(uri)
    }

    pub fn get(&self, uri: &Iri) -> Option<&ToolResource> {
        self.resources.get(uri)
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn resources(&self) -> impl Iterator<Item = &ToolResource> + '_ {
        self.resources.values()
    }

    pub fn of_kind(&self, kind: ResourceKind) -> impl Iterator<Item = &ToolResource> + '_ {
        self.resources.values().filter(move |r| r.kind == kind)
    }

    /// One named graph per resource, as the servers expose them.
    pub fn dataset(&self) -> Dataset {
        let mut ds = Dataset::new();
        for r in self.resources.values() {
            ds.upsert_graph(r.uri.clone(), r.to_graph());
        }
        ds
    }

    /// Smallest numeric suffix above every existing id of `kind`.
    pub fn next_index(&self, kind: ResourceKind) -> u64 {
        self.of_kind(kind)
            .filter_map(|r| {
                let last = r.uri.as_str().rsplit('/').next()?;
                last.strip_prefix(kind.id_prefix())?.parse::<u64>().ok()
            })
            .max()
            .map_or(1, |n| n + 1)
    }
}

/// Seeds `toolchain` per `spec`, recording a Creation for every resource.
pub fn seed_fixture(spec: &FixtureSpec, toolchain: &Toolchain) -> GroundTruth {
    if spec.canonical {
        return seed_canonical(toolchain);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = GroundTruth::default();
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs[rng.random_range(0..xs.len())].to_owned();

    let mut reqs: Vec<Iri> = Vec::new();
    for i in 1..=spec.requirements {
        let id = format!("R{i}");
        let mut r = ToolResource::new(toolchain.iri(ResourceKind::Requirement, &id), ResourceKind::Requirement, format!("Requirement {id}"));
        r.status = Some(pick(&mut rng, &REQUIREMENT_STATUSES));
        if !reqs.is_empty() && rng.random_bool(spec.refines_probability) {
            r.refines.push(reqs[rng.random_range(0..reqs.len())].clone());
        }
        reqs.push(r.uri.clone());
        truth.insert(r);
    }
    let mut blocks: Vec<Iri> = Vec::new();
    for i in 1..=spec.blocks {
        let id = format!("B{i}");
        let mut b = ToolResource::new(toolchain.iri(ResourceKind::SimulinkBlock, &id), ResourceKind::SimulinkBlock, format!("Block {id}"));
        if !reqs.is_empty() && rng.random_bool(spec.satisfies_probability) {
            b.satisfies.push(reqs[rng.random_range(0..reqs.len())].clone());
        }
        blocks.push(b.uri.clone());
        truth.insert(b);
    }
    for i in 1..=spec.change_requests {
        let id = format!("CR{i}");
        let mut cr = ToolResource::new(toolchain.iri(ResourceKind::ChangeRequest, &id), ResourceKind::ChangeRequest, format!("Change request {id}"));
        cr.status = Some(pick(&mut rng, &CHANGE_REQUEST_STATUSES));
        if rng.random_bool(spec.tracks_probability) {
            let to_block = !blocks.is_empty() && (reqs.is_empty() || rng.random_bool(spec.tracks_block_probability));
            let pool = if to_block { &blocks } else { &reqs };
            if !pool.is_empty() {
                cr.tracks.push(pool[rng.random_range(0..pool.len())].clone());
            }
        }
        truth.insert(cr);
    }
    publish(&truth, toolchain);
    truth
}

/// R1..R5 (R2 refines R1, R1 refines R4), B1..B4 (B1 satisfies R1, B2
/// satisfies R2), CR1..CR3 (tracking R1, R2 and R4).
pub fn seed_canonical(toolchain: &Toolchain) -> GroundTruth {
    use ResourceKind::*;
    let req = |id: &str| toolchain.iri(Requirement, id);
    let mut truth = GroundTruth::default();

    for (id, status) in [("R1", "APPROVED"), ("R2", "DRAFT"), ("R3", "APPROVED"), ("R4", "APPROVED"), ("R5", "DRAFT")] {
        let mut r = ToolResource::new(req(id), Requirement, format!("Requirement {id}"));
        r.status = Some(status.into());
        match id {
            "R2" => r.refines.push(req("R1")),
            "R1" => r.refines.push(req("R4")),
            _ => {}
        }
        truth.insert(r);
    }
    for (id, satisfies) in [("B1", Some("R1")), ("B2", Some("R2")), ("B3", None), ("B4", None)] {
        let mut b = ToolResource::new(toolchain.iri(SimulinkBlock, id), SimulinkBlock, format!("Block {id}"));
        b.satisfies.extend(satisfies.map(req));
        truth.insert(b);
    }
    for (id, tracks) in [("CR1", "R1"), ("CR2", "R2"), ("CR3", "R4")] {
        let mut cr = ToolResource::new(toolchain.iri(ChangeRequest, id), ChangeRequest, format!("Change request {id}"));
        cr.status = Some("OPEN".into());
        cr.tracks.push(req(tracks));
        truth.insert(cr);
    }
    publish(&truth, toolchain);
    truth
}

/// Creates resources in a fixed order: requirements, blocks, change
/// requests, each by index.
fn publish(truth: &GroundTruth, toolchain: &Toolchain) {
    for kind in ResourceKind::ALL {
        let mut of_kind: Vec<&ToolResource> = truth.of_kind(kind).collect();
        of_kind.sort_by_key(|r| {
            let last = r.uri.as_str().rsplit('/').next().unwrap_or_default();
            last.trim_start_matches(kind.id_prefix()).parse::<u64>().unwrap_or(u64::MAX)
        });
        for r in of_kind {
            toolchain.put(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SystemClock;
    use crate::rdf::ntriples;
    use crate::trs::TrsServerConfig;
    use std::sync::Arc;

    fn toolchain() -> Toolchain {
        Toolchain::new(TrsServerConfig::default(), Arc::new(SystemClock))
    }

    #[test]
    fn all_zero_spec_leaves_services_empty() {
        let tc = toolchain();
        assert!(seed_fixture(&FixtureSpec::default(), &tc).is_empty());
        assert_eq!(tc.live_count(), 0);
    }

    #[test]
    fn canonical_fixture_shape() {
        let tc = toolchain();
        let truth = seed_fixture(&FixtureSpec::canonical(), &tc);
        assert_eq!(truth.of_kind(ResourceKind::Requirement).count(), 5);
        assert_eq!(truth.of_kind(ResourceKind::SimulinkBlock).count(), 4);
        assert_eq!(truth.of_kind(ResourceKind::ChangeRequest).count(), 3);
        assert_eq!(tc.live_dataset(), truth.dataset());
        assert_eq!(tc.server("reqs").unwrap().last_order(), 5);
        assert_eq!(truth.next_index(ResourceKind::ChangeRequest), 4);
    }

    #[test]
    fn same_seed_gives_identical_bodies() {
        let spec = FixtureSpec::random(7, 20, 15, 10);
        let dump = |tc: &Toolchain| ntriples::serialize_ntriples(&tc.live_dataset().union_graph());
        let (a, b) = (toolchain(), toolchain());
        seed_fixture(&spec, &a);
        seed_fixture(&spec, &b);
        assert_eq!(dump(&a), dump(&b));
        let c = toolchain();
        seed_fixture(&FixtureSpec::random(8, 20, 15, 10), &c);
        assert_ne!(dump(&a), dump(&c));
    }

    #[test]
    fn random_links_point_at_existing_resources() {
        let tc = toolchain();
        let truth = seed_fixture(&FixtureSpec::random(3, 30, 30, 30), &tc);
        for r in truth.resources() {
            for target in r.satisfies.iter().chain(&r.refines).chain(&r.tracks) {
                assert!(truth.get(target).is_some(), "{target}");
            }
        }
    }
}
