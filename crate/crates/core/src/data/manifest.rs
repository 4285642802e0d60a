use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{bail, Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal = 0,
    Pneumonia = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Pneumonia),
            _ => bail!(Label, "label {} is not 0 (normal) or 1 (pneumonia)", i),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Val];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Val),
            _ => bail!(Data, "unknown split {:?}", s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub path: String,
    pub label: Label,
    pub split: Split,
}

/// Image records with their class and split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<Record>,
}

impl Manifest {
    /// Rejects duplicate paths.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.path.as_str()) {
                bail!(Data, "duplicate path {:?} in manifest", r.path);
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[normal, pneumonia]` counts in one split.
    pub fn class_counts(&self, split: Split) -> [usize; 2] {
        let mut c = [0; 2];
        for r in self.records.iter().filter(|r| r.split == split) {
            c[r.label.index()] += 1;
        }
        c
    }

    pub fn split(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }
}

/// Per-class test quotas: proportional shares rounded to nearest, with any
/// rounding remainder given to (or taken from) the majority class.
pub fn stratified_quota(class_totals: [usize; 2], test_count: usize) -> [usize; 2] {
    let total = class_totals[0] + class_totals[1];
    if total == 0 {
        return [0, 0];
    }
    let share = |c: usize| libm::round(test_count as f64 * class_totals[c] as f64 / total as f64) as usize;
    let mut q = [share(0).min(class_totals[0]), share(1).min(class_totals[1])];
    let major = usize::from(class_totals[1] >= class_totals[0]);
    let minor = 1 - major;
    let assigned = q[0] + q[1];
    if assigned > test_count {
        let excess = assigned - test_count;
        let take = excess.min(q[major]);
        q[major] -= take;
        q[minor] -= excess - take;
    } else {
        let mut missing = test_count - assigned;
        let room = class_totals[major] - q[major];
        let add = missing.min(room);
        q[major] += add;
        missing -= add;
        q[minor] += missing;
    }
    q
}

/// Pools every split, then draws `test_count` records for test with class
/// proportions preserved; everything else becomes train.
///
/// Records are ordered by path before drawing, so the result depends only
/// on the record set and the seed.
pub fn stratified_resplit(manifest: &Manifest, test_count: usize, seed: u64) -> Result<Manifest> {
    let total = manifest.len();
    if test_count > total {
        bail!(Config, "test_count {} exceeds the {} available records", test_count, total);
    }
    let mut records: Vec<Record> = manifest.records.clone();
    records.sort_by(|a, b| a.path.cmp(&b.path));
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        by_class[r.label.index()].push(i);
    }
    let quota = stratified_quota([by_class[0].len(), by_class[1].len()], test_count);
    for r in records.iter_mut() {
        r.split = Split::Train;
    }
    for c in 0..2 {
        let mut r = rng::stream(seed, &[0x7265_7370, c as u64]);
        by_class[c].shuffle(&mut r);
        for &i in &by_class[c][..quota[c]] {
            records[i].split = Split::Test;
        }
    }
    Manifest::new(records)
}
