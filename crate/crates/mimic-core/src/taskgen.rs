//! Procedural query generation for the four benchmark tasks.
//!
//! Every generated query is exact by construction: the generators draw
//! candidate image tuples from the class pool by rejection sampling and
//! re-verify the task's uniqueness/cleanliness conditions before
//! emitting, so an infeasible spec fails loudly instead of degrading the
//! ground truth. All randomness flows from per-query seeds derived from
//! `(root seed, plan index, query index)`, which makes whole benchmarks
//! reproducible byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::annotations::{CategoryHierarchy, ClassPool, Corpus, ImageId};
use crate::error::{CoreError, Result};
use crate::prompts::TemplateSet;
use crate::seed::{derive_seed, rng_from};

/// Default per-query rejection-sampling attempt budget.
pub const DEFAULT_ATTEMPT_CAP: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Counting,
    Listing,
    Common,
    OddOne,
}

impl TaskKind {
    pub fn slug(&self) -> &'static str {
        match self {
            TaskKind::Counting => "counting",
            TaskKind::Listing => "listing",
            TaskKind::Common => "common",
            TaskKind::OddOne => "odd_one",
        }
    }

    pub const ALL: [TaskKind; 4] = [
        TaskKind::Counting,
        TaskKind::Listing,
        TaskKind::Common,
        TaskKind::OddOne,
    ];
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    Balanced,
    Unbalanced,
}

/// Per-kind image-count bounds (inclusive). Defaults follow the
/// benchmark's shape; all of them are configuration, not hard limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBounds {
    pub counting_balanced: (u32, u32),
    pub counting_unbalanced: (u32, u32),
    pub common: (u32, u32),
    pub odd_one: (u32, u32),
    pub listing: (u32, u32),
}

impl Default for TaskBounds {
    fn default() -> Self {
        TaskBounds {
            counting_balanced: (7, 7),
            counting_unbalanced: (2, 35),
            common: (3, 8),
            odd_one: (4, 6),
            listing: (2, 8),
        }
    }
}

impl TaskBounds {
    pub fn range_for(&self, kind: TaskKind, balance: Option<Balance>) -> (u32, u32) {
        match kind {
            TaskKind::Counting => match balance {
                Some(Balance::Balanced) => self.counting_balanced,
                _ => self.counting_unbalanced,
            },
            TaskKind::Common => self.common,
            TaskKind::OddOne => self.odd_one,
            TaskKind::Listing => self.listing,
        }
    }
}

fn default_m_odd() -> u32 {
    1
}

/// One concrete generation demand: a task kind plus its control dims.
///
/// `spread_s` is per target class: for counting every queried class must
/// appear in exactly `spread_s` images (query images of distinct classes
/// never overlap, so `k * spread_s + distractors = total_images`); for
/// listing it is the number of images carrying in-category classes; for
/// common it equals `total_images`; for odd-one it equals `m_odd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub k: u32,
    pub spread_s: u32,
    pub distractors: u32,
    pub total_images: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub balance: Option<Balance>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instances_total: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    #[serde(default = "default_m_odd")]
    pub m_odd: u32,
    pub seed: u64,
}

impl TaskSpec {
    pub fn counting(
        balance: Balance,
        k: u32,
        spread_s: u32,
        total_images: u32,
        instances_total: Option<u32>,
        seed: u64,
    ) -> Self {
        TaskSpec {
            kind: TaskKind::Counting,
            k,
            spread_s,
            distractors: total_images.saturating_sub(k * spread_s),
            total_images,
            balance: Some(balance),
            instances_total,
            category: None,
            m_odd: 1,
            seed,
        }
    }

    pub fn listing(category: Option<String>, spread_s: u32, total_images: u32, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::Listing,
            k: 1,
            spread_s,
            distractors: total_images.saturating_sub(spread_s),
            total_images,
            balance: None,
            instances_total: None,
            category,
            m_odd: 1,
            seed,
        }
    }

    pub fn common(total_images: u32, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::Common,
            k: 1,
            spread_s: total_images,
            distractors: 0,
            total_images,
            balance: None,
            instances_total: None,
            category: None,
            m_odd: 1,
            seed,
        }
    }

    pub fn odd_one(total_images: u32, m_odd: u32, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::OddOne,
            k: 1,
            spread_s: m_odd,
            distractors: total_images.saturating_sub(m_odd),
            total_images,
            balance: None,
            instances_total: None,
            category: None,
            m_odd,
            seed,
        }
    }

    pub fn validate(&self, bounds: &TaskBounds) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidSpec(msg));
        let (lo, hi) = bounds.range_for(self.kind, self.balance);
        if self.total_images < lo || self.total_images > hi {
            return fail(format!(
                "{}: total_images {} outside [{lo}, {hi}]",
                self.kind, self.total_images
            ));
        }
        if self.spread_s + self.distractors > self.total_images {
            return fail(format!(
                "spread {} + distractors {} exceeds total {}",
                self.spread_s, self.distractors, self.total_images
            ));
        }
        match self.kind {
            TaskKind::Counting => {
                if self.k == 0 || self.spread_s == 0 {
                    return fail("counting requires k >= 1 and spread >= 1".into());
                }
                if self.balance.is_none() {
                    return fail("counting requires a balance mode".into());
                }
                if self.k * self.spread_s + self.distractors != self.total_images {
                    return fail(format!(
                        "counting requires k*spread + distractors = total ({} * {} + {} != {})",
                        self.k, self.spread_s, self.distractors, self.total_images
                    ));
                }
                if self.k == 1 && self.spread_s + self.distractors != self.total_images {
                    return fail("single-class counting requires spread + distractors = total".into());
                }
                match (self.balance, self.instances_total) {
                    (Some(Balance::Balanced), Some(t)) if t < self.spread_s => {
                        return fail(format!(
                            "balanced counting needs instances_total >= spread ({t} < {})",
                            self.spread_s
                        ));
                    }
                    (Some(Balance::Balanced), None) => {
                        return fail("balanced counting requires instances_total".into());
                    }
                    _ => {}
                }
            }
            TaskKind::Listing => {
                if self.spread_s == 0 {
                    return fail("listing requires spread >= 1".into());
                }
                if self.spread_s + self.distractors != self.total_images {
                    return fail("listing requires spread + distractors = total".into());
                }
            }
            TaskKind::Common => {
                if self.spread_s != self.total_images || self.distractors != 0 {
                    return fail("common requires every image to carry the target class".into());
                }
            }
            TaskKind::OddOne => {
                if self.m_odd == 0 {
                    return fail("odd-one requires m_odd >= 1".into());
                }
                if self.spread_s != self.m_odd
                    || self.distractors != self.total_images - self.m_odd
                {
                    return fail("odd-one requires spread = m_odd and the rest distractors".into());
                }
            }
        }
        Ok(())
    }
}

/// Kind-discriminated exact answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroundTruth {
    Counting { counts: BTreeMap<String, u32> },
    Listing { classes: BTreeSet<String> },
    Common { class: String },
    OddOne { class: String },
}

impl GroundTruth {
    pub fn kind(&self) -> TaskKind {
        match self {
            GroundTruth::Counting { .. } => TaskKind::Counting,
            GroundTruth::Listing { .. } => TaskKind::Listing,
            GroundTruth::Common { .. } => TaskKind::Common,
            GroundTruth::OddOne { .. } => TaskKind::OddOne,
        }
    }

    /// Classes the query is about (queried, in-category, or the answer).
    pub fn target_classes(&self) -> Vec<String> {
        match self {
            GroundTruth::Counting { counts } => counts.keys().cloned().collect(),
            GroundTruth::Listing { classes } => classes.iter().cloned().collect(),
            GroundTruth::Common { class } | GroundTruth::OddOne { class } => vec![class.clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Query,
    Distractor,
}

/// One generated benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub query_id: String,
    pub kind: TaskKind,
    pub images: Vec<ImageId>,
    pub prompt: String,
    pub truth: GroundTruth,
    pub spec: TaskSpec,
    pub roles: Vec<ImageRole>,
    /// Eligible instances of all classes across the selected images.
    pub object_instances: u32,
    /// Balanced counting only: per class, the target-instance count of
    /// each of its query images, in final image order.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub composition: Option<BTreeMap<String, Vec<u32>>>,
}

/// Keeps class draws near-uniform across a whole plan: each draw picks
/// uniformly among the least-drawn candidates.
#[derive(Debug, Default)]
pub struct ClassBalancer {
    counts: BTreeMap<String, u64>,
}

impl ClassBalancer {
    fn pick(&self, rng: &mut ChaCha12Rng, candidates: &[&str]) -> Option<String> {
        let min = candidates
            .iter()
            .map(|c| self.counts.get(*c).copied().unwrap_or(0))
            .min()?;
        let bucket: Vec<&&str> = candidates
            .iter()
            .filter(|c| self.counts.get(**c).copied().unwrap_or(0) == min)
            .collect();
        Some(bucket[rng.random_range(0..bucket.len())].to_string())
    }

    fn pick_distinct(
        &self,
        rng: &mut ChaCha12Rng,
        candidates: &[&str],
        k: usize,
    ) -> Option<Vec<String>> {
        if candidates.len() < k {
            return None;
        }
        let mut remaining: Vec<&str> = candidates.to_vec();
        let mut chosen = Vec::with_capacity(k);
        for _ in 0..k {
            let pick = self.pick(rng, &remaining)?;
            remaining.retain(|c| *c != pick);
            chosen.push(pick);
        }
        Some(chosen)
    }

    fn note(&mut self, class: &str) {
        *self.counts.entry(class.to_string()).or_insert(0) += 1;
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }
}

/// Declarative plan entry: a task kind, control-dimension ranges, and a
/// query count. Ranges are inclusive `[lo, hi]` pairs sampled per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub kind: TaskKind,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub balance: Option<Balance>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total_images: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spread: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instances_total: Option<[u32; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m_odd: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
}

pub type Plan = Vec<PlanEntry>;

pub fn load_plan(path: &Path) -> Result<Plan> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CoreError::parse(
            path.display().to_string(),
            Some(e.line() as u64),
            e.to_string(),
        )
    })
}

fn sample_range(rng: &mut ChaCha12Rng, range: [u32; 2], what: &str) -> Result<u32> {
    let [lo, hi] = range;
    if lo > hi {
        return Err(CoreError::InvalidSpec(format!(
            "{what}: empty range [{lo}, {hi}]"
        )));
    }
    Ok(rng.random_range(lo..=hi))
}

impl PlanEntry {
    /// Draw one concrete spec from the entry's ranges.
    pub fn sample_spec(
        &self,
        bounds: &TaskBounds,
        rng: &mut ChaCha12Rng,
        seed: u64,
    ) -> Result<TaskSpec> {
        let default_n = bounds.range_for(self.kind, self.balance);
        let n_range = self.total_images.unwrap_or([default_n.0, default_n.1]);
        let total = sample_range(rng, n_range, "total_images")?;
        let spec = match self.kind {
            TaskKind::Counting => {
                let balance = self.balance.ok_or_else(|| {
                    CoreError::InvalidSpec("counting plan entry requires balance".into())
                })?;
                let spread_cfg = self.spread.unwrap_or([1, total]);
                // Narrow k to what the sampled total can fit: k classes
                // need at least k * spread_lo query images.
                let k_cfg = self.k.unwrap_or([1, 1]);
                let k_hi = k_cfg[1].min(total / spread_cfg[0].max(1)).max(0);
                if k_cfg[0] > k_hi {
                    return Err(CoreError::InvalidSpec(format!(
                        "counting: k >= {} cannot fit in total={total} with spread >= {}",
                        k_cfg[0],
                        spread_cfg[0].max(1)
                    )));
                }
                let k = rng.random_range(k_cfg[0]..=k_hi);
                let (instances_total, spread_hi_cap) = match balance {
                    Balance::Balanced => {
                        let t =
                            sample_range(rng, self.instances_total.unwrap_or([2, 4]), "instances_total")?;
                        (Some(t), t.min(total / k.max(1)))
                    }
                    Balance::Unbalanced => (None, total / k.max(1)),
                };
                let hi = spread_cfg[1].min(spread_hi_cap);
                let lo = spread_cfg[0].max(1);
                if lo > hi {
                    return Err(CoreError::InvalidSpec(format!(
                        "counting: no feasible spread in [{lo}, {hi}] for k={k}, total={total}"
                    )));
                }
                let spread = rng.random_range(lo..=hi);
                TaskSpec::counting(balance, k, spread, total, instances_total, seed)
            }
            TaskKind::Listing => {
                let spread_cfg = self.spread.unwrap_or([1, total]);
                let lo = spread_cfg[0].max(1);
                let hi = spread_cfg[1].min(total);
                if lo > hi {
                    return Err(CoreError::InvalidSpec(format!(
                        "listing: no feasible spread in [{lo}, {hi}] for total={total}"
                    )));
                }
                let spread = rng.random_range(lo..=hi);
                TaskSpec::listing(self.category.clone(), spread, total, seed)
            }
            TaskKind::Common => TaskSpec::common(total, seed),
            TaskKind::OddOne => TaskSpec::odd_one(total, self.m_odd.unwrap_or(1), seed),
        };
        spec.validate(bounds)?;
        Ok(spec)
    }
}

/// Query generator over one corpus/pool, with optional hierarchy for the
/// listing task and templates for prompt rendering.
pub struct Generator<'a> {
    corpus: &'a Corpus,
    pool: &'a ClassPool,
    hierarchy: Option<&'a CategoryHierarchy>,
    templates: &'a TemplateSet,
    bounds: TaskBounds,
    attempt_cap: u32,
    balancer: ClassBalancer,
    all_images: Vec<ImageId>,
    /// class -> instance count -> images with exactly that many eligible
    /// instances; backs balanced composition lookup.
    count_index: BTreeMap<String, BTreeMap<u32, Vec<ImageId>>>,
}

impl<'a> Generator<'a> {
    pub fn new(
        corpus: &'a Corpus,
        pool: &'a ClassPool,
        hierarchy: Option<&'a CategoryHierarchy>,
        templates: &'a TemplateSet,
    ) -> Self {
        let mut count_index: BTreeMap<String, BTreeMap<u32, Vec<ImageId>>> = BTreeMap::new();
        for id in corpus.image_ids() {
            for (class, &count) in corpus.eligible_classes(id).unwrap() {
                count_index
                    .entry(class.clone())
                    .or_default()
                    .entry(count)
                    .or_default()
                    .push(id.clone());
            }
        }
        Generator {
            corpus,
            pool,
            hierarchy,
            templates,
            bounds: TaskBounds::default(),
            attempt_cap: DEFAULT_ATTEMPT_CAP,
            balancer: ClassBalancer::default(),
            all_images: corpus.image_ids().cloned().collect(),
            count_index,
        }
    }

    pub fn with_bounds(mut self, bounds: TaskBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_attempt_cap(mut self, cap: u32) -> Self {
        self.attempt_cap = cap.max(1);
        self
    }

    pub fn balancer(&self) -> &ClassBalancer {
        &self.balancer
    }

    pub fn gen_counting(&mut self, spec: TaskSpec) -> Result<QueryInstance> {
        let mut rng = rng_from(spec.seed);
        self.gen_with_rng(spec, &mut rng)
    }

    pub fn gen_listing(&mut self, spec: TaskSpec) -> Result<QueryInstance> {
        let mut rng = rng_from(spec.seed);
        self.gen_with_rng(spec, &mut rng)
    }

    pub fn gen_common(&mut self, spec: TaskSpec) -> Result<QueryInstance> {
        let mut rng = rng_from(spec.seed);
        self.gen_with_rng(spec, &mut rng)
    }

    pub fn gen_odd_one(&mut self, spec: TaskSpec) -> Result<QueryInstance> {
        let mut rng = rng_from(spec.seed);
        self.gen_with_rng(spec, &mut rng)
    }

    /// Generate every query of a plan. Query ids are deterministic in
    /// `(root_seed, plan index, query index)`, so reruns are identical.
    pub fn gen_benchmark(&mut self, plan: &[PlanEntry], root_seed: u64) -> Result<Vec<QueryInstance>> {
        let total: u64 = plan.iter().map(|e| e.count).sum();
        let mut queries = Vec::with_capacity(total as usize);
        for (plan_idx, entry) in plan.iter().enumerate() {
            for query_idx in 0..entry.count {
                let seed = derive_seed(root_seed, plan_idx as u64, query_idx);
                let mut rng = rng_from(seed);
                let spec = entry.sample_spec(&self.bounds, &mut rng, seed)?;
                let mut query = self.gen_with_rng(spec, &mut rng).map_err(|e| match e {
                    CoreError::Infeasible {
                        constraint,
                        attempts,
                    } => CoreError::Infeasible {
                        constraint: format!(
                            "plan entry {plan_idx} ({}), query {query_idx}: {constraint}",
                            entry.kind
                        ),
                        attempts,
                    },
                    other => other,
                })?;
                query.query_id = format!(
                    "{}_{plan_idx:02}_{query_idx:06}_{:08x}",
                    entry.kind.slug(),
                    seed as u32
                );
                queries.push(query);
            }
        }
        Ok(queries)
    }

    fn gen_with_rng(&mut self, spec: TaskSpec, rng: &mut ChaCha12Rng) -> Result<QueryInstance> {
        spec.validate(&self.bounds)?;
        match spec.kind {
            TaskKind::Counting => self.counting_with_rng(spec, rng),
            TaskKind::Listing => self.listing_with_rng(spec, rng),
            TaskKind::Common => self.common_with_rng(spec, rng),
            TaskKind::OddOne => self.odd_one_with_rng(spec, rng),
        }
    }

    // ---- counting ------------------------------------------------------

    fn counting_with_rng(&mut self, spec: TaskSpec, rng: &mut ChaCha12Rng) -> Result<QueryInstance> {
        let balanced = spec.balance == Some(Balance::Balanced);
        let mut failed_classes: BTreeSet<String> = BTreeSet::new();
        let mut last_reason = String::from("no attempt made");
        for _attempt in 0..self.attempt_cap {
            let candidates: Vec<&str> = self
                .pool
                .classes()
                .iter()
                .map(String::as_str)
                .filter(|c| !failed_classes.contains(*c))
                .collect();
            let Some(classes) = self
                .balancer
                .pick_distinct(rng, &candidates, spec.k as usize)
            else {
                // Every class has been ruled out; the last concrete failure
                // names the binding constraint.
                if last_reason == "no attempt made" {
                    last_reason =
                        format!("fewer than k={} classes are available in the pool", spec.k);
                }
                break;
            };
            match self.try_counting_layout(&classes, &spec, rng) {
                Ok((per_class_images, distractor_images)) => {
                    return Ok(self.assemble_counting(
                        spec,
                        classes,
                        per_class_images,
                        distractor_images,
                        balanced,
                        rng,
                    ));
                }
                Err(CountingFailure { reason, blame }) => {
                    if let Some(class) = blame {
                        failed_classes.insert(class);
                    }
                    last_reason = reason;
                }
            }
        }
        Err(CoreError::Infeasible {
            constraint: last_reason,
            attempts: self.attempt_cap,
        })
    }

    fn try_counting_layout(
        &self,
        classes: &[String],
        spec: &TaskSpec,
        rng: &mut ChaCha12Rng,
    ) -> std::result::Result<(Vec<Vec<ImageId>>, Vec<ImageId>), CountingFailure> {
        let queried: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
        let mut used: BTreeSet<ImageId> = BTreeSet::new();
        let mut per_class = Vec::with_capacity(classes.len());
        for class in classes {
            // A query image for `class` must carry it and stay clean of
            // every other queried class, or per-class spreads would drift.
            let clean = |id: &ImageId| {
                let eligible = self.corpus.eligible_classes(id).unwrap();
                queried
                    .iter()
                    .all(|other| *other == class.as_str() || !eligible.contains_key(*other))
            };
            let images = if let Some(total) = spec.instances_total {
                self.sample_balanced_images(class, total, spec.spread_s, &used, clean, rng)
                    .map_err(|reason| CountingFailure {
                        reason,
                        blame: Some(class.clone()),
                    })?
            } else {
                let candidates: Vec<ImageId> = self
                    .pool
                    .images_for(class)
                    .iter()
                    .filter(|id| !used.contains(*id) && clean(id))
                    .cloned()
                    .collect();
                sample_distinct(rng, &candidates, spec.spread_s as usize).ok_or_else(|| {
                    CountingFailure {
                        reason: format!(
                            "class '{class}' has only {} usable images, spread needs {}",
                            candidates.len(),
                            spec.spread_s
                        ),
                        blame: Some(class.clone()),
                    }
                })?
            };
            used.extend(images.iter().cloned());
            per_class.push(images);
        }
        let distractors = self
            .sample_distractors(&queried, &used, spec.distractors as usize, rng)
            .map_err(|reason| CountingFailure {
                reason,
                blame: None,
            })?;
        Ok((per_class, distractors))
    }

    /// Balanced mode: draw a uniform composition of `total` into
    /// `spread` positive parts, then find a distinct image holding
    /// exactly each part. A few composition redraws absorb unlucky
    /// part sizes before the whole attempt is failed.
    fn sample_balanced_images(
        &self,
        class: &str,
        total: u32,
        spread: u32,
        used: &BTreeSet<ImageId>,
        clean: impl Fn(&ImageId) -> bool,
        rng: &mut ChaCha12Rng,
    ) -> std::result::Result<Vec<ImageId>, String> {
        let by_count = self.count_index.get(class).ok_or_else(|| {
            format!("class '{class}' has no eligible images")
        })?;
        let mut last = format!("class '{class}': no composition attempt made");
        for _ in 0..10 {
            let parts = sample_composition(rng, total, spread);
            let mut chosen: Vec<ImageId> = Vec::with_capacity(parts.len());
            let mut ok = true;
            for &part in &parts {
                let candidates: Vec<&ImageId> = by_count
                    .get(&part)
                    .map(|v| {
                        v.iter()
                            .filter(|id| {
                                !used.contains(*id) && !chosen.contains(*id) && clean(id)
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                if candidates.is_empty() {
                    last = format!(
                        "no unused image with exactly {part} eligible '{class}' instances"
                    );
                    ok = false;
                    break;
                }
                chosen.push(candidates[rng.random_range(0..candidates.len())].clone());
            }
            if ok {
                return Ok(chosen);
            }
        }
        Err(last)
    }

    fn sample_distractors(
        &self,
        queried: &BTreeSet<&str>,
        used: &BTreeSet<ImageId>,
        needed: usize,
        rng: &mut ChaCha12Rng,
    ) -> std::result::Result<Vec<ImageId>, String> {
        if needed == 0 {
            return Ok(Vec::new());
        }
        let mut chosen: Vec<ImageId> = Vec::with_capacity(needed);
        let mut taken: BTreeSet<&ImageId> = BTreeSet::new();
        let budget = 50 * needed + 200;
        for _ in 0..budget {
            let id = &self.all_images[rng.random_range(0..self.all_images.len())];
            if used.contains(id) || taken.contains(id) {
                continue;
            }
            let eligible = self.corpus.eligible_classes(id).unwrap();
            if queried.iter().any(|c| eligible.contains_key(*c)) {
                continue;
            }
            taken.insert(id);
            chosen.push(id.clone());
            if chosen.len() == needed {
                return Ok(chosen);
            }
        }
        Err(format!(
            "could not find {needed} distractor images clean of {:?}",
            queried
        ))
    }

    fn assemble_counting(
        &mut self,
        spec: TaskSpec,
        classes: Vec<String>,
        per_class_images: Vec<Vec<ImageId>>,
        distractor_images: Vec<ImageId>,
        balanced: bool,
        rng: &mut ChaCha12Rng,
    ) -> QueryInstance {
        let mut images: Vec<(ImageId, ImageRole)> = Vec::new();
        for imgs in &per_class_images {
            images.extend(imgs.iter().cloned().map(|id| (id, ImageRole::Query)));
        }
        images.extend(
            distractor_images
                .into_iter()
                .map(|id| (id, ImageRole::Distractor)),
        );
        images.shuffle(rng);

        let counts: BTreeMap<String, u32> = classes
            .iter()
            .map(|class| {
                let total = images
                    .iter()
                    .map(|(id, _)| self.corpus.count_instances(id, class))
                    .sum();
                (class.clone(), total)
            })
            .collect();
        let composition = balanced.then(|| {
            classes
                .iter()
                .map(|class| {
                    let parts: Vec<u32> = images
                        .iter()
                        .filter_map(|(id, _)| {
                            let c = self.corpus.count_instances(id, class);
                            (c > 0).then_some(c)
                        })
                        .collect();
                    (class.clone(), parts)
                })
                .collect()
        });
        for class in &classes {
            self.balancer.note(class);
        }
        let truth = GroundTruth::Counting { counts };
        self.finish(spec, images, truth, composition)
    }

    // ---- common ----------------------------------------------------------

    fn common_with_rng(&mut self, spec: TaskSpec, rng: &mut ChaCha12Rng) -> Result<QueryInstance> {
        let mut failed: BTreeSet<String> = BTreeSet::new();
        let mut last_reason = String::from("no attempt made");
        for _ in 0..self.attempt_cap {
            let candidates: Vec<&str> = self
                .pool
                .classes()
                .iter()
                .map(String::as_str)
                .filter(|c| !failed.contains(*c))
                .collect();
            let Some(class) = self.balancer.pick(rng, &candidates) else {
                last_reason = "no viable target class remains".into();
                break;
            };
            let pool = self.pool.images_for(&class);
            if (pool.len() as u32) < spec.total_images {
                last_reason = format!(
                    "class '{class}' appears in {} images, need {}",
                    pool.len(),
                    spec.total_images
                );
                failed.insert(class);
                continue;
            }
            let images = sample_distinct(rng, pool, spec.total_images as usize)
                .expect("candidate count checked above");
            // The target must be the only class present in every image.
            let mut common: Option<BTreeSet<&String>> = None;
            for id in &images {
                let classes: BTreeSet<&String> =
                    self.corpus.eligible_classes(id).unwrap().keys().collect();
                common = Some(match common {
                    None => classes,
                    Some(prev) => prev.intersection(&classes).cloned().collect(),
                });
            }
            let common = common.unwrap_or_default();
            if common.len() != 1 || !common.contains(&class) {
                last_reason = format!(
                    "draw for '{class}' shared {} classes across all images",
                    common.len()
                );
                continue;
            }
            self.balancer.note(&class);
            let images: Vec<(ImageId, ImageRole)> = {
                let mut v: Vec<(ImageId, ImageRole)> = images
                    .into_iter()
                    .map(|id| (id, ImageRole::Query))
                    .collect();
                v.shuffle(rng);
                v
            };
            let truth = GroundTruth::Common { class };
            return Ok(self.finish(spec, images, truth, None));
        }
        Err(CoreError::Infeasible {
            constraint: last_reason,
            attempts: self.attempt_cap,
        })
    }

    // ---- odd one ---------------------------------------------------------

    fn odd_one_with_rng(&mut self, spec: TaskSpec, rng: &mut ChaCha12Rng) -> Result<QueryInstance> {
        let m_odd = spec.m_odd as usize;
        let rest = spec.total_images as usize - m_odd;
        let mut failed: BTreeSet<String> = BTreeSet::new();
        let mut last_reason = String::from("no attempt made");
        for _ in 0..self.attempt_cap {
            let candidates: Vec<&str> = self
                .pool
                .classes()
                .iter()
                .map(String::as_str)
                .filter(|c| !failed.contains(*c))
                .collect();
            let Some(odd_class) = self.balancer.pick(rng, &candidates) else {
                last_reason = "no viable odd class remains".into();
                break;
            };
            let odd_pool = self.pool.images_for(&odd_class);
            let Some(odd_images) = sample_distinct(rng, odd_pool, m_odd) else {
                last_reason = format!(
                    "class '{odd_class}' appears in {} images, need {m_odd}",
                    odd_pool.len()
                );
                failed.insert(odd_class);
                continue;
            };
            // Scaffold the majority side on one support class whose images
            // avoid the odd class entirely.
            let base_idx = rng.random_range(0..self.pool.classes().len());
            let base = &self.pool.classes()[base_idx];
            if *base == odd_class {
                continue;
            }
            let base_candidates: Vec<ImageId> = self
                .pool
                .images_for(base)
                .iter()
                .filter(|id| {
                    !odd_images.contains(id)
                        && !self
                            .corpus
                            .eligible_classes(id)
                            .unwrap()
                            .contains_key(&odd_class)
                })
                .cloned()
                .collect();
            let Some(rest_images) = sample_distinct(rng, &base_candidates, rest) else {
                last_reason = format!(
                    "support class '{base}' offers {} images clean of '{odd_class}', need {rest}",
                    base_candidates.len()
                );
                continue;
            };

            // Verify strict minority uniqueness over every present class.
            let mut freq: BTreeMap<&String, u32> = BTreeMap::new();
            let selected: Vec<&ImageId> = odd_images.iter().chain(rest_images.iter()).collect();
            for id in &selected {
                for class in self.corpus.eligible_classes(id).unwrap().keys() {
                    *freq.entry(class).or_insert(0) += 1;
                }
            }
            let minority: Vec<&&String> = freq
                .iter()
                .filter(|(_, &n)| n == spec.m_odd)
                .map(|(c, _)| c)
                .collect();
            let unique = minority.len() == 1
                && *minority[0] == &odd_class
                && freq.iter().all(|(c, &n)| **c == odd_class || n > spec.m_odd);
            if !unique {
                last_reason = format!(
                    "draw for '{odd_class}' left {} classes at frequency {}",
                    minority.len(),
                    spec.m_odd
                );
                continue;
            }
            self.balancer.note(&odd_class);
            let mut images: Vec<(ImageId, ImageRole)> = odd_images
                .into_iter()
                .map(|id| (id, ImageRole::Query))
                .chain(rest_images.into_iter().map(|id| (id, ImageRole::Distractor)))
                .collect();
            images.shuffle(rng);
            let truth = GroundTruth::OddOne { class: odd_class };
            return Ok(self.finish(spec, images, truth, None));
        }
        Err(CoreError::Infeasible {
            constraint: last_reason,
            attempts: self.attempt_cap,
        })
    }

    // ---- listing -----------------------------------------------------------

    fn listing_with_rng(&mut self, mut spec: TaskSpec, rng: &mut ChaCha12Rng) -> Result<QueryInstance> {
        let Some(hierarchy) = self.hierarchy else {
            return Err(CoreError::InvalidSpec(
                "listing generation requires a category hierarchy".into(),
            ));
        };
        let category = match spec.category.clone() {
            Some(c) => {
                if hierarchy.classes_of(&c).is_none() {
                    return Err(CoreError::UnknownCategory(c));
                }
                c
            }
            None => {
                let viable: Vec<&String> = hierarchy
                    .categories()
                    .filter(|cat| {
                        hierarchy
                            .classes_of(cat)
                            .is_some_and(|classes| classes.iter().any(|c| self.pool.contains(c)))
                    })
                    .collect();
                if viable.is_empty() {
                    return Err(CoreError::Infeasible {
                        constraint: "no category has eligible classes in the pool".into(),
                        attempts: 0,
                    });
                }
                viable[rng.random_range(0..viable.len())].clone()
            }
        };
        let in_category: Vec<String> = hierarchy
            .classes_of(&category)
            .unwrap()
            .iter()
            .filter(|c| self.pool.contains(c))
            .cloned()
            .collect();
        if in_category.is_empty() {
            return Err(CoreError::Infeasible {
                constraint: format!("category '{category}' has no eligible classes in the pool"),
                attempts: 0,
            });
        }
        spec.category = Some(category.clone());

        let in_cat_set: BTreeSet<&str> = in_category.iter().map(String::as_str).collect();
        let mut last_reason = String::from("no attempt made");
        for _ in 0..self.attempt_cap {
            let mut used: BTreeSet<ImageId> = BTreeSet::new();
            let mut anchors: Vec<String> = Vec::new();
            let mut ok = true;
            for _ in 0..spec.spread_s {
                let candidates: Vec<&str> = in_category.iter().map(String::as_str).collect();
                let anchor = self
                    .balancer
                    .pick(rng, &candidates)
                    .expect("in_category is nonempty");
                let images: Vec<ImageId> = self
                    .pool
                    .images_for(&anchor)
                    .iter()
                    .filter(|id| !used.contains(*id))
                    .cloned()
                    .collect();
                if images.is_empty() {
                    last_reason = format!("no unused image carries '{anchor}'");
                    ok = false;
                    break;
                }
                used.insert(images[rng.random_range(0..images.len())].clone());
                anchors.push(anchor);
            }
            if !ok {
                continue;
            }
            let distractors = match self.sample_distractors(
                &in_cat_set,
                &used,
                spec.distractors as usize,
                rng,
            ) {
                Ok(d) => d,
                Err(reason) => {
                    last_reason = reason;
                    continue;
                }
            };
            let mut images: Vec<(ImageId, ImageRole)> = used
                .into_iter()
                .map(|id| (id, ImageRole::Query))
                .chain(distractors.into_iter().map(|id| (id, ImageRole::Distractor)))
                .collect();
            images.shuffle(rng);
            let classes: BTreeSet<String> = images
                .iter()
                .flat_map(|(id, _)| {
                    self.corpus
                        .eligible_classes(id)
                        .unwrap()
                        .keys()
                        .filter(|c| in_cat_set.contains(c.as_str()))
                        .cloned()
                        .collect::<Vec<_>>()
                })
                .collect();
            debug_assert!(!classes.is_empty());
            for anchor in &anchors {
                self.balancer.note(anchor);
            }
            let truth = GroundTruth::Listing { classes };
            return Ok(self.finish(spec, images, truth, None));
        }
        Err(CoreError::Infeasible {
            constraint: last_reason,
            attempts: self.attempt_cap,
        })
    }

    // ---- shared assembly ---------------------------------------------------

    fn finish(
        &self,
        spec: TaskSpec,
        images: Vec<(ImageId, ImageRole)>,
        truth: GroundTruth,
        composition: Option<BTreeMap<String, Vec<u32>>>,
    ) -> QueryInstance {
        let object_instances = images
            .iter()
            .map(|(id, _)| {
                self.corpus
                    .eligible_classes(id)
                    .unwrap()
                    .values()
                    .sum::<u32>()
            })
            .sum();
        let (images, roles): (Vec<ImageId>, Vec<ImageRole>) = images.into_iter().unzip();
        let mut query = QueryInstance {
            query_id: format!("{}_{:016x}", spec.kind.slug(), spec.seed),
            kind: spec.kind,
            images,
            prompt: String::new(),
            truth,
            spec,
            roles,
            object_instances,
            composition,
        };
        query.prompt = crate::prompts::render_prompt(self.templates, &query, query.spec.seed)
            .expect("built-in templates resolve for every task kind");
        query
    }
}

struct CountingFailure {
    reason: String,
    /// Set when the failure is attributable to one class being too rare,
    /// so the attempt loop can stop re-drawing it.
    blame: Option<String>,
}

/// Uniform sample of `k` distinct items.
fn sample_distinct(rng: &mut ChaCha12Rng, items: &[ImageId], k: usize) -> Option<Vec<ImageId>> {
    if items.len() < k {
        return None;
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    Some(indices[..k].iter().map(|&i| items[i].clone()).collect())
}

/// Uniform composition of `total` into `parts` positive integers, via the
/// bijection with (parts-1)-subsets of the total-1 interior cut points.
fn sample_composition(rng: &mut ChaCha12Rng, total: u32, parts: u32) -> Vec<u32> {
    debug_assert!(parts >= 1 && total >= parts);
    let mut cuts: Vec<u32> = (1..total).collect();
    let take = (parts - 1) as usize;
    for i in 0..take {
        let j = rng.random_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts: Vec<u32> = cuts[..take].to_vec();
    cuts.sort_unstable();
    cuts.push(total);
    let mut parts_out = Vec::with_capacity(parts as usize);
    let mut prev = 0;
    for cut in cuts {
        parts_out.push(cut - prev);
        prev = cut;
    }
    parts_out
}
