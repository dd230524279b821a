//! The symbolic object space: 3 attribute slots with 4 values each, ordered
//! attribute-pair tasks, and the harder train/validation/test splits where
//! designated attribute pairs never leave the test set.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, rng_from_seed};

pub const NUM_SLOTS: usize = 3;
pub const VALUES_PER_SLOT: usize = 4;
pub const NUM_OBJECTS: usize = 64;
pub const NUM_TASKS: usize = 6;
/// Objects encode as 3-hot vectors of this length.
pub const OBJECT_ENCODING_DIM: usize = NUM_SLOTS * VALUES_PER_SLOT;
/// Tasks encode as one-hot vectors over the 6 ordered slot pairs.
pub const TASK_ENCODING_DIM: usize = NUM_TASKS;
pub const FOLD_COUNT: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSlot {
    pub name: String,
    pub values: [String; VALUES_PER_SLOT],
}

/// Names for the 3 x 4 attribute grid. The structure is fixed; only the names
/// are configurable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    slots: [AttributeSlot; NUM_SLOTS],
}

impl Default for AttributeSchema {
    fn default() -> Self {
        let slot = |name: &str, values: [&str; 4]| AttributeSlot {
            name: name.to_string(),
            values: values.map(str::to_string),
        };
        AttributeSchema {
            slots: [
                slot("color", ["red", "green", "blue", "purple"]),
                slot("shape", ["square", "triangle", "circle", "star"]),
                slot("style", ["dotted", "solid", "filled", "dashed"]),
            ],
        }
    }
}

impl AttributeSchema {
    pub fn new(slots: [AttributeSlot; NUM_SLOTS]) -> Result<Self> {
        for slot in &slots {
            for (i, v) in slot.values.iter().enumerate() {
                if slot.values[..i].contains(v) {
                    return Err(Error::config(format!(
                        "duplicate value '{v}' in attribute slot '{}'",
                        slot.name
                    )));
                }
            }
        }
        Ok(AttributeSchema { slots })
    }

    pub fn slots(&self) -> &[AttributeSlot; NUM_SLOTS] {
        &self.slots
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn value_index(&self, slot: usize, name: &str) -> Option<usize> {
        self.slots[slot].values.iter().position(|v| v == name)
    }

    /// All 64 objects in lexicographic order: (0,0,0), (0,0,1), ... (3,3,3).
    pub fn objects(&self) -> Vec<ObjectInstance> {
        let mut out = Vec::with_capacity(NUM_OBJECTS);
        for a in 0..VALUES_PER_SLOT {
            for b in 0..VALUES_PER_SLOT {
                for c in 0..VALUES_PER_SLOT {
                    out.push(ObjectInstance::new([a, b, c]).unwrap());
                }
            }
        }
        out
    }

    /// All 6 ordered pairs of distinct slots, lexicographic.
    pub fn tasks(&self) -> Vec<Task> {
        let mut out = Vec::with_capacity(NUM_TASKS);
        for first in 0..NUM_SLOTS {
            for second in 0..NUM_SLOTS {
                if first != second {
                    out.push(Task::new(first, second).unwrap());
                }
            }
        }
        out
    }

    /// All 384 game states, object-major.
    pub fn states(&self) -> Vec<GameState> {
        let tasks = self.tasks();
        let mut out = Vec::with_capacity(NUM_OBJECTS * NUM_TASKS);
        for object in self.objects() {
            for &task in &tasks {
                out.push(GameState { object, task });
            }
        }
        out
    }
}

/// One point in the object space: a value index per attribute slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectInstance {
    values: [u8; NUM_SLOTS],
}

impl ObjectInstance {
    pub fn new(values: [usize; NUM_SLOTS]) -> Result<Self> {
        if values.iter().any(|&v| v >= VALUES_PER_SLOT) {
            return Err(Error::config(format!("object value out of range: {values:?}")));
        }
        Ok(ObjectInstance { values: values.map(|v| v as u8) })
    }

    pub fn value(&self, slot: usize) -> usize {
        self.values[slot] as usize
    }

    /// Position in the lexicographic enumeration.
    pub fn index(&self) -> usize {
        self.values.iter().fold(0, |acc, &v| acc * VALUES_PER_SLOT + v as usize)
    }

    /// 3-hot encoding: one block of 4 per slot.
    pub fn encode(&self) -> [f64; OBJECT_ENCODING_DIM] {
        let mut out = [0.0; OBJECT_ENCODING_DIM];
        for (slot, &v) in self.values.iter().enumerate() {
            out[slot * VALUES_PER_SLOT + v as usize] = 1.0;
        }
        out
    }
}

/// Ordered pair of distinct attribute slots the questioner must report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    first: u8,
    second: u8,
}

impl Task {
    pub fn new(first: usize, second: usize) -> Result<Self> {
        if first == second || first >= NUM_SLOTS || second >= NUM_SLOTS {
            return Err(Error::config(format!("invalid task ({first}, {second})")));
        }
        Ok(Task { first: first as u8, second: second as u8 })
    }

    pub fn first(&self) -> usize {
        self.first as usize
    }

    pub fn second(&self) -> usize {
        self.second as usize
    }

    /// Position in the canonical 6-task enumeration.
    pub fn index(&self) -> usize {
        let (f, s) = (self.first as usize, self.second as usize);
        f * (NUM_SLOTS - 1) + if s > f { s - 1 } else { s }
    }

    /// One-hot encoding over the 6 ordered tasks. (first, second) and
    /// (second, first) are distinct tasks and encode differently.
    pub fn encode(&self) -> [f64; TASK_ENCODING_DIM] {
        let mut out = [0.0; TASK_ENCODING_DIM];
        out[self.index()] = 1.0;
        out
    }
}

/// One episode's ground situation: the hidden object and the query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GameState {
    pub object: ObjectInstance,
    pub task: Task,
}

impl GameState {
    /// The two attribute values to report, in task order.
    pub fn ground_truth(&self) -> (usize, usize) {
        (self.object.value(self.task.first()), self.object.value(self.task.second()))
    }

    pub fn index(&self) -> usize {
        self.object.index() * NUM_TASKS + self.task.index()
    }
}

/// An attribute-value pair (across two distinct slots) banned from train and
/// validation objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbiddenPair {
    pub slot_a: usize,
    pub value_a: usize,
    pub slot_b: usize,
    pub value_b: usize,
}

impl ForbiddenPair {
    pub fn new(slot_a: usize, value_a: usize, slot_b: usize, value_b: usize) -> Result<Self> {
        if slot_a == slot_b {
            return Err(Error::config("forbidden pair slots must differ".to_string()));
        }
        if slot_a >= NUM_SLOTS || slot_b >= NUM_SLOTS {
            return Err(Error::config("forbidden pair slot out of range".to_string()));
        }
        if value_a >= VALUES_PER_SLOT || value_b >= VALUES_PER_SLOT {
            return Err(Error::config("forbidden pair value out of range".to_string()));
        }
        Ok(ForbiddenPair { slot_a, value_a, slot_b, value_b })
    }

    pub fn matches(&self, object: &ObjectInstance) -> bool {
        object.value(self.slot_a) == self.value_a && object.value(self.slot_b) == self.value_b
    }
}

/// The stock forbidden set: red triangles, filled stars, and blue dotted
/// objects.
pub fn default_forbidden_pairs() -> Vec<ForbiddenPair> {
    vec![
        // color=red, shape=triangle
        ForbiddenPair::new(0, 0, 1, 1).unwrap(),
        // style=filled, shape=star
        ForbiddenPair::new(2, 2, 1, 3).unwrap(),
        // color=blue, style=dotted
        ForbiddenPair::new(0, 2, 2, 0).unwrap(),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub forbidden_pairs: Vec<ForbiddenPair>,
    /// Fraction of non-forbidden objects additionally held out into test.
    pub holdout_fraction: f64,
    pub fold: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            forbidden_pairs: default_forbidden_pairs(),
            holdout_fraction: 0.2,
            fold: 0,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fold >= FOLD_COUNT {
            return Err(Error::config(format!("fold {} out of range 0..{FOLD_COUNT}", self.fold)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config(format!(
                "holdout_fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<GameState>,
    pub validation: Vec<GameState>,
    pub test: Vec<GameState>,
    pub fold: usize,
    pub seed: u64,
}

impl DatasetSplit {
    /// Stable digest over split membership, for manifests and resume checks.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update([self.fold as u8]);
        hasher.update(self.seed.to_le_bytes());
        for (tag, states) in
            [(b'r', &self.train), (b'v', &self.validation), (b't', &self.test)]
        {
            hasher.update([tag]);
            for s in states {
                hasher.update((s.index() as u16).to_le_bytes());
            }
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON-facing view of a split for audit and test pinning.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub schema: AttributeSchema,
    pub forbidden_pairs: Vec<ForbiddenPair>,
    pub holdout_fraction: f64,
    pub fold: usize,
    pub seed: u64,
    pub digest: String,
    pub train: Vec<GameState>,
    pub validation: Vec<GameState>,
    pub test: Vec<GameState>,
}

impl SplitManifest {
    pub fn new(schema: &AttributeSchema, config: &SplitConfig, split: &DatasetSplit) -> Self {
        SplitManifest {
            schema: schema.clone(),
            forbidden_pairs: config.forbidden_pairs.clone(),
            holdout_fraction: config.holdout_fraction,
            fold: split.fold,
            seed: split.seed,
            digest: split.digest(),
            train: split.train.clone(),
            validation: split.validation.clone(),
            test: split.test.clone(),
        }
    }
}

/// Builds the harder compositional split.
///
/// Test objects are every object containing a forbidden pair, plus
/// `holdout_fraction` of the remaining objects drawn at random. The rest of
/// the states are partitioned into 4 folds; `fold` selects which fold is
/// validation. The partition is a function of `seed` alone, so the four folds
/// of one seed share a single test set.
pub fn make_splits(
    schema: &AttributeSchema,
    config: &SplitConfig,
) -> Result<DatasetSplit> {
    config.validate()?;
    let objects = schema.objects();
    let tasks = schema.tasks();

    let forbidden: Vec<ObjectInstance> = objects
        .iter()
        .filter(|o| config.forbidden_pairs.iter().any(|p| p.matches(o)))
        .copied()
        .collect();
    let eligible: Vec<ObjectInstance> = objects
        .iter()
        .filter(|o| !config.forbidden_pairs.iter().any(|p| p.matches(o)))
        .copied()
        .collect();

    // Every attribute value must survive somewhere outside the forbidden set,
    // otherwise no valid train set exists for any draw.
    for slot in 0..NUM_SLOTS {
        for value in 0..VALUES_PER_SLOT {
            if !eligible.iter().any(|o| o.value(slot) == value) {
                return Err(Error::config(format!(
                    "forbidden pairs remove every object with {}={}",
                    schema.slots[slot].name, schema.slots[slot].values[value]
                )));
            }
        }
    }

    let holdout_count = (config.holdout_fraction * eligible.len() as f64).floor() as usize;

    // Deterministic rejection sampling: redraw with a new sub-seed until every
    // fold's train set covers every attribute value.
    for attempt in 0..64u64 {
        let mut draw_rng = rng_from_seed(derive_seed(config.seed, &[rng::streams::SPLIT, attempt]));

        let mut shuffled = eligible.clone();
        shuffle(&mut shuffled, &mut draw_rng);
        let holdout: Vec<ObjectInstance> = shuffled[..holdout_count].to_vec();
        let pool_objects: Vec<ObjectInstance> = {
            let mut p = shuffled[holdout_count..].to_vec();
            p.sort();
            p
        };

        let mut pool_states: Vec<GameState> = Vec::with_capacity(pool_objects.len() * NUM_TASKS);
        for object in &pool_objects {
            for &task in &tasks {
                pool_states.push(GameState { object: *object, task });
            }
        }
        shuffle(&mut pool_states, &mut draw_rng);
        // Round-robin assignment keeps fold sizes within one state of equal.
        let fold_of: Vec<usize> = (0..pool_states.len()).map(|i| i % FOLD_COUNT).collect();

        let all_folds_cover = (0..FOLD_COUNT).all(|f| {
            let mut seen = [[false; VALUES_PER_SLOT]; NUM_SLOTS];
            for (state, &sf) in pool_states.iter().zip(&fold_of) {
                if sf != f {
                    for slot in 0..NUM_SLOTS {
                        seen[slot][state.object.value(slot)] = true;
                    }
                }
            }
            seen.iter().all(|s| s.iter().all(|&v| v))
        });
        if !all_folds_cover {
            continue;
        }

        let mut test_objects = forbidden.clone();
        test_objects.extend(holdout);
        test_objects.sort();
        let mut test = Vec::with_capacity(test_objects.len() * NUM_TASKS);
        for object in &test_objects {
            for &task in &tasks {
                test.push(GameState { object: *object, task });
            }
        }

        let mut train: Vec<GameState> = pool_states
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f != config.fold)
            .map(|(s, _)| *s)
            .collect();
        let mut validation: Vec<GameState> = pool_states
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f == config.fold)
            .map(|(s, _)| *s)
            .collect();
        train.sort();
        validation.sort();

        let split = DatasetSplit { train, validation, test, fold: config.fold, seed: config.seed };
        verify_split(&split, &config.forbidden_pairs)?;
        return Ok(split);
    }
    Err(Error::config(
        "could not draw a split covering every attribute value in train; \
         holdout_fraction is likely too aggressive"
            .to_string(),
    ))
}

/// Brute-force scan of the split invariants, run on every construction.
fn verify_split(split: &DatasetSplit, forbidden_pairs: &[ForbiddenPair]) -> Result<()> {
    for (name, states) in [("train", &split.train), ("validation", &split.validation)] {
        for s in states {
            if forbidden_pairs.iter().any(|p| p.matches(&s.object)) {
                return Err(Error::config(format!(
                    "{name} state {:?} contains a forbidden attribute pair",
                    s.object
                )));
            }
        }
    }
    let mut seen = [[false; VALUES_PER_SLOT]; NUM_SLOTS];
    for s in &split.train {
        for slot in 0..NUM_SLOTS {
            seen[slot][s.object.value(slot)] = true;
        }
    }
    if !seen.iter().all(|s| s.iter().all(|&v| v)) {
        return Err(Error::config("train set is missing an attribute value".to_string()));
    }
    let mut all: Vec<usize> = split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
        .map(GameState::index)
        .collect();
    let before = all.len();
    all.sort_unstable();
    all.dedup();
    if all.len() != before {
        return Err(Error::config("split sections overlap".to_string()));
    }
    Ok(())
}

fn shuffle<T>(items: &mut [T], rng: &mut impl rand::Rng) {
    for i in (1..items.len()).rev() {
        let j = rng::uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
