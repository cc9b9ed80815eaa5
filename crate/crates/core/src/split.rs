//! Class-balanced train/val/test splitting at frame granularity.
//!
//! Frame counts follow the configured fractions exactly (train and val are
//! rounded, test takes the rest). Within those sizes the splitter searches
//! for an assignment whose val and test splits each hold `quota` instances
//! of every class. A frame's instances always travel together, so the
//! search is approximate: each attempt starts from a seeded shuffle and
//! repairs it by swapping frames between splits while the L1 distance to
//! the quotas decreases. The best attempt wins, ties by attempt index.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, QuotaDeficit, Result};
use crate::model::{CategoryId, Dataset, Split};
use crate::rng::keyed_rng;

const MAX_REPAIR_PASSES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// Target instances per class in each of val and test.
    pub quota: usize,
    /// Accepted deviation from the quota, in instances.
    pub tolerance: usize,
    pub seed: u64,
    pub max_attempts: usize,
    /// Lower the quota of classes too small to meet it instead of failing.
    pub best_effort: bool,
    /// Re-split a dataset that already carries split tags.
    pub force: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            quota: 7,
            tolerance: 1,
            seed: 0,
            max_attempts: 32,
            best_effort: false,
            force: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "split fractions {fr:?} must each lie in (0, 1)"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {sum}, not 1"
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Frame counts for (train, val, test).
    pub fn frame_targets(&self, n: usize) -> [usize; 3] {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

/// Quota bookkeeping for one class in the returned assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassQuota {
    pub category: CategoryId,
    pub total: usize,
    /// `None` for classes absent from the dataset.
    pub target: Option<usize>,
    pub val: usize,
    pub test: usize,
    pub feasible: bool,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub dataset: Dataset,
    /// L1 distance of val and test class counts from their targets.
    pub score: usize,
    pub best_attempt: usize,
    pub attempt_scores: Vec<usize>,
    pub quotas: Vec<ClassQuota>,
}

struct Problem {
    /// Sparse per-frame class counts, indexed by class slot.
    frames: Vec<Vec<(usize, i64)>>,
    /// Target per class slot; `None` means unconstrained.
    targets: Vec<Option<i64>>,
    sizes: [usize; 3],
}

struct Attempt {
    assignment: Vec<Split>,
    score: usize,
}

const VAL: usize = 1;
const TEST: usize = 2;

fn slot(s: Split) -> usize {
    match s {
        Split::Train => 0,
        Split::Val => VAL,
        Split::Test => TEST,
    }
}

impl Problem {
    fn cost(&self, split: usize, class: usize, count: i64) -> i64 {
        match (split, self.targets[class]) {
            (VAL | TEST, Some(t)) => (count - t).abs(),
            _ => 0,
        }
    }

    fn counts(&self, assignment: &[Split]) -> Vec<[i64; 3]> {
        let mut c = vec![[0i64; 3]; self.targets.len()];
        for (f, &s) in self.frames.iter().zip(assignment) {
            for &(k, n) in f {
                c[k][slot(s)] += n;
            }
        }
        c
    }

    fn score(&self, counts: &[[i64; 3]]) -> usize {
        counts
            .iter()
            .enumerate()
            .map(|(k, c)| self.cost(VAL, k, c[VAL]) + self.cost(TEST, k, c[TEST]))
            .sum::<i64>() as usize
    }

    /// Change in score from swapping frames `i` and `j`.
    fn swap_delta(&self, counts: &[[i64; 3]], i: usize, a: usize, j: usize, b: usize) -> i64 {
        let mut delta = 0;
        let mut visit = |k: usize| {
            let d = count_of(&self.frames[j], k) - count_of(&self.frames[i], k);
            if d != 0 {
                let (ca, cb) = (counts[k][a], counts[k][b]);
                delta += self.cost(a, k, ca + d) - self.cost(a, k, ca);
                delta += self.cost(b, k, cb - d) - self.cost(b, k, cb);
            }
        };
        for &(k, _) in &self.frames[i] {
            visit(k);
        }
        for &(k, _) in &self.frames[j] {
            if count_of(&self.frames[i], k) == 0 {
                visit(k);
            }
        }
        delta
    }

    fn run_attempt(&self, seed: u64, attempt: usize) -> Attempt {
        let n = self.frames.len();
        let mut rng = keyed_rng(seed, &[attempt as u64]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut assignment = vec![Split::Train; n];
        for (rank, &f) in order.iter().enumerate() {
            assignment[f] = if rank < self.sizes[0] {
                Split::Train
            } else if rank < self.sizes[0] + self.sizes[1] {
                Split::Val
            } else {
                Split::Test
            };
        }

        let mut counts = self.counts(&assignment);
        let mut visit: Vec<usize> = (0..n).collect();
        for _ in 0..MAX_REPAIR_PASSES {
            visit.shuffle(&mut rng);
            let mut improved = false;
            for &i in &visit {
                for j in 0..n {
                    let (a, b) = (slot(assignment[i]), slot(assignment[j]));
                    if a == b || (a == 0 && b == 0) {
                        continue;
                    }
                    if self.swap_delta(&counts, i, a, j, b) < 0 {
                        for &(k, c) in &self.frames[i] {
                            counts[k][a] -= c;
                            counts[k][b] += c;
                        }
                        for &(k, c) in &self.frames[j] {
                            counts[k][b] -= c;
                            counts[k][a] += c;
                        }
                        assignment.swap(i, j);
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Attempt {
            score: self.score(&counts),
            assignment,
        }
    }
}

fn count_of(frame: &[(usize, i64)], class: usize) -> i64 {
    frame
        .iter()
        .find(|&&(k, _)| k == class)
        .map_or(0, |&(_, c)| c)
}

/// Assigns a split tag to every frame.
pub fn stratified_split(ds: &Dataset, cfg: &SplitConfig) -> Result<SplitOutcome> {
    cfg.validate()?;
    if ds.is_split() && !cfg.force {
        return Err(Error::AlreadySplit);
    }
    let categories: Vec<CategoryId> = ds.taxonomy.ids().collect();
    let slot_of: BTreeMap<CategoryId, usize> =
        categories.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let frames: Vec<Vec<(usize, i64)>> = ds
        .frames
        .iter()
        .map(|f| {
            let mut counts: BTreeMap<usize, i64> = BTreeMap::new();
            for inst in &f.instances {
                if let Some(&k) = slot_of.get(&inst.category()) {
                    *counts.entry(k).or_default() += 1;
                }
            }
            counts.into_iter().collect()
        })
        .collect();

    let mut totals = vec![0usize; categories.len()];
    for f in &frames {
        for &(k, c) in f {
            totals[k] += c as usize;
        }
    }

    let required = 2 * cfg.quota;
    let deficits: Vec<QuotaDeficit> = totals
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t > 0 && t < required)
        .map(|(k, &t)| QuotaDeficit {
            category: categories[k],
            available: t,
            required,
        })
        .collect();
    if !deficits.is_empty() && !cfg.best_effort {
        return Err(Error::InfeasibleQuota(deficits));
    }
    let targets: Vec<Option<i64>> = totals
        .iter()
        .map(|&t| match t {
            0 => None,
            t if t >= required => Some(cfg.quota as i64),
            t => Some((t / 3).min(cfg.quota) as i64),
        })
        .collect();

    let problem = Problem {
        sizes: cfg.frame_targets(frames.len()),
        frames,
        targets,
    };
    let attempts: Vec<Attempt> = (0..cfg.max_attempts)
        .into_par_iter()
        .map(|a| problem.run_attempt(cfg.seed, a))
        .collect();
    let (best_attempt, best) = attempts
        .iter()
        .enumerate()
        .min_by_key(|(i, a)| (a.score, *i))
        .expect("at least one attempt");

    let mut dataset = ds.clone();
    for (frame, &split) in dataset.frames.iter_mut().zip(&best.assignment) {
        frame.split = Some(split);
    }
    let counts = problem.counts(&best.assignment);
    let quotas = categories
        .iter()
        .enumerate()
        .map(|(k, &category)| {
            let (val, test) = (counts[k][VAL] as usize, counts[k][TEST] as usize);
            let target = problem.targets[k].map(|t| t as usize);
            let ok = |c: usize| target.map_or(true, |t| c.abs_diff(t) <= cfg.tolerance);
            ClassQuota {
                category,
                total: totals[k],
                target,
                val,
                test,
                feasible: totals[k] == 0 || totals[k] >= required,
                within_tolerance: ok(val) && ok(test),
            }
        })
        .collect();

    Ok(SplitOutcome {
        dataset,
        score: best.score,
        best_attempt,
        attempt_scores: attempts.iter().map(|a| a.score).collect(),
        quotas,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: Split,
    pub frames: usize,
    pub instances: usize,
    pub per_class: BTreeMap<CategoryId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub rows: Vec<SplitRow>,
}

/// Per-split frame and per-class instance counts of a tagged dataset.
pub fn split_report(ds: &Dataset) -> Result<SplitReport> {
    if !ds.is_split() {
        return Err(Error::Untagged);
    }
    let rows = Split::ALL
        .iter()
        .map(|&split| {
            let mut per_class: BTreeMap<CategoryId, usize> =
                ds.taxonomy.ids().map(|c| (c, 0)).collect();
            let mut frames = 0;
            for f in ds.frames.iter().filter(|f| f.split == Some(split)) {
                frames += 1;
                for inst in &f.instances {
                    *per_class.entry(inst.category()).or_default() += 1;
                }
            }
            SplitRow {
                split,
                frames,
                instances: per_class.values().sum(),
                per_class,
            }
        })
        .collect();
    Ok(SplitReport { rows })
}

impl SplitReport {
    pub fn row(&self, split: Split) -> &SplitRow {
        self.rows.iter().find(|r| r.split == split).expect("all splits present")
    }

    /// `split,frames,instances,<class 1>,...` with names from `ds`'s taxonomy.
    pub fn to_csv(&self, ds: &Dataset) -> String {
        let mut out = String::from("split,frames,instances");
        for c in ds.taxonomy.categories() {
            out.push(',');
            out.push_str(&crate::io::csv_field(&c.name));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.split, r.frames, r.instances));
            for c in ds.taxonomy.ids() {
                out.push_str(&format!(",{}", r.per_class.get(&c).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }
}
