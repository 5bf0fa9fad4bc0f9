//! Reading-time datasets: loading, condition coding and fold assignment.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, FOLD_PLAN_STREAM};

const FOLD_PLAN_ATTEMPTS: u64 = 100;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}` in header (expected participant,item,condition,rt)")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("file contains no data rows")]
    Empty,
    #[error("trial {index}: {message}")]
    InvalidTrial { index: usize, message: String },
    #[error("participant {participant} and item {item} occur together more than once")]
    DuplicatePair { participant: usize, item: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("participant {participant} has no {condition} trials")]
    EmptyStratum { participant: usize, condition: Condition },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
}

/// Relative-clause condition of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    SubjectRelative,
    ObjectRelative,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::SubjectRelative, Condition::ObjectRelative];

    /// Sum coding: subject relatives −½, object relatives +½.
    pub fn sum_code(self) -> f64 {
        match self {
            Condition::SubjectRelative => -0.5,
            Condition::ObjectRelative => 0.5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Condition::SubjectRelative => "SR",
            Condition::ObjectRelative => "OR",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Condition::SubjectRelative => 0,
            Condition::ObjectRelative => 1,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sr" | "subj-ext" => Ok(Condition::SubjectRelative),
            "or" | "obj-ext" => Ok(Condition::ObjectRelative),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

pub fn sum_code(condition: Condition) -> f64 {
    condition.sum_code()
}

/// One self-paced reading observation. Participant and item are zero-based
/// indices into the owning [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub participant: usize,
    pub item: usize,
    pub condition: Condition,
    pub rt_ms: f64,
}

impl Trial {
    pub fn x(&self) -> f64 {
        self.condition.sum_code()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trials: Vec<Trial>,
    n_participants: usize,
    n_items: usize,
    participant_labels: Vec<String>,
    item_labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with numeric labels `1..=I` and `1..=J`.
    pub fn new(trials: Vec<Trial>, n_participants: usize, n_items: usize) -> Result<Self, DataError> {
        let participant_labels = (1..=n_participants).map(|i| i.to_string()).collect();
        let item_labels = (1..=n_items).map(|j| j.to_string()).collect();
        Self::with_labels(trials, participant_labels, item_labels)
    }

    pub fn with_labels(
        trials: Vec<Trial>,
        participant_labels: Vec<String>,
        item_labels: Vec<String>,
    ) -> Result<Self, DataError> {
        let n_participants = participant_labels.len();
        let n_items = item_labels.len();
        let mut seen = HashSet::with_capacity(trials.len());
        for (index, t) in trials.iter().enumerate() {
            if t.participant >= n_participants || t.item >= n_items {
                return Err(DataError::InvalidTrial {
                    index,
                    message: format!(
                        "participant {} / item {} out of range ({n_participants} participants, {n_items} items)",
                        t.participant, t.item
                    ),
                });
            }
            if !(t.rt_ms.is_finite() && t.rt_ms > 0.0) {
                return Err(DataError::InvalidTrial {
                    index,
                    message: format!("reading time must be positive and finite, got {}", t.rt_ms),
                });
            }
            if !seen.insert((t.participant, t.item)) {
                return Err(DataError::DuplicatePair {
                    participant: t.participant + 1,
                    item: t.item + 1,
                });
            }
        }
        Ok(Dataset {
            trials,
            n_participants,
            n_items,
            participant_labels,
            item_labels,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    /// Parses `participant,item,condition,rt` CSV. Participant and item
    /// labels are relabelled to contiguous indices in sorted label order
    /// (numeric order when every label is an integer). Row order is kept.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &'static str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or(DataError::MissingColumn(name))
        };
        let cols = [column("participant")?, column("item")?, column("condition")?, column("rt")?];

        struct Raw {
            participant: String,
            item: String,
            condition: Condition,
            rt: f64,
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |c: usize, name: &str| -> Result<&str, DataError> {
                match record.get(c) {
                    Some(v) if !v.is_empty() => Ok(v),
                    _ => Err(DataError::Row {
                        line,
                        message: format!("missing {name}"),
                    }),
                }
            };
            let participant = field(cols[0], "participant")?.to_string();
            let item = field(cols[1], "item")?.to_string();
            let condition = field(cols[2], "condition")?
                .parse::<Condition>()
                .map_err(|message| DataError::Row { line, message })?;
            let rt_text = field(cols[3], "rt")?;
            let rt: f64 = rt_text.parse().map_err(|_| DataError::Row {
                line,
                message: format!("rt `{rt_text}` is not a number"),
            })?;
            if !(rt.is_finite() && rt > 0.0) {
                return Err(DataError::Row {
                    line,
                    message: format!("rt must be positive, got {rt_text}"),
                });
            }
            rows.push((line, Raw { participant, item, condition, rt }));
        }
        if rows.is_empty() {
            return Err(DataError::Empty);
        }

        let participant_labels = sorted_labels(rows.iter().map(|(_, r)| r.participant.as_str()));
        let item_labels = sorted_labels(rows.iter().map(|(_, r)| r.item.as_str()));
        let p_index: BTreeMap<&str, usize> =
            participant_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let i_index: BTreeMap<&str, usize> =
            item_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

        let mut seen = HashSet::with_capacity(rows.len());
        let mut trials = Vec::with_capacity(rows.len());
        for (line, r) in &rows {
            let participant = p_index[r.participant.as_str()];
            let item = i_index[r.item.as_str()];
            if !seen.insert((participant, item)) {
                return Err(DataError::Row {
                    line: *line,
                    message: format!(
                        "participant {} already has a trial for item {}",
                        r.participant, r.item
                    ),
                });
            }
            trials.push(Trial {
                participant,
                item,
                condition: r.condition,
                rt_ms: r.rt,
            });
        }
        Self::with_labels(trials, participant_labels, item_labels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["participant", "item", "condition", "rt"])?;
        for t in &self.trials {
            w.write_record([
                self.participant_labels[t.participant].as_str(),
                self.item_labels[t.item].as_str(),
                t.condition.label(),
                &t.rt_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Trials at `indices`, in that order. Participant and item counts (and
    /// therefore random-effect dimensions) are those of `self`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            trials: indices.iter().map(|&i| self.trials[i]).collect(),
            n_participants: self.n_participants,
            n_items: self.n_items,
            participant_labels: self.participant_labels.clone(),
            item_labels: self.item_labels.clone(),
        }
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn participant_labels(&self) -> &[String] {
        &self.participant_labels
    }

    pub fn item_labels(&self) -> &[String] {
        &self.item_labels
    }

    pub fn mean_log_rt(&self) -> Option<f64> {
        if self.trials.is_empty() {
            return None;
        }
        Some(self.trials.iter().map(|t| t.rt_ms.ln()).sum::<f64>() / self.trials.len() as f64)
    }
}

fn sorted_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut unique: Vec<&str> = labels.collect::<HashSet<_>>().into_iter().collect();
    if unique.iter().all(|l| l.parse::<i64>().is_ok()) {
        unique.sort_by_key(|l| l.parse::<i64>().unwrap_or_default());
    } else {
        unique.sort_unstable();
    }
    unique.into_iter().map(str::to_string).collect()
}

/// Assignment of every trial to one of `k` held-out sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    /// Zero-based fold of each trial, aligned with the dataset's trial order.
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_trials(&self) -> usize {
        self.assignment.len()
    }

    pub fn heldout(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    /// Writes `trial_index,fold` rows, both one-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["trial_index", "fold"])?;
        for (i, f) in self.assignment.iter().enumerate() {
            w.write_record([(i + 1).to_string(), (f + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits the trials into `k` held-out sets.
///
/// Strata are participant × condition cells. Each stratum is shuffled and its
/// trials are dealt to consecutive folds by a single round-robin counter that
/// runs across all strata (participant-major order, starting at a random
/// offset). This keeps every stratum's fold counts within one of each other,
/// every held-out set within one of `n / k`, and spreads each participant
/// over `min(n_i, k)` folds. Items are not stratified; assignments that would
/// leave some item out of a training set are redrawn.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    let n = dataset.len();
    if k > n {
        return Err(DataError::InfeasibleSplit(format!(
            "{k} folds requested for {n} trials"
        )));
    }

    let mut strata = vec![[Vec::new(), Vec::new()]; dataset.n_participants()];
    let mut item_counts = vec![0usize; dataset.n_items()];
    for (i, t) in dataset.trials().iter().enumerate() {
        strata[t.participant][t.condition.index()].push(i);
        item_counts[t.item] += 1;
    }
    for (p, cells) in strata.iter().enumerate() {
        let present = cells.iter().any(|c| !c.is_empty());
        for condition in Condition::ALL {
            if present && cells[condition.index()].is_empty() {
                return Err(DataError::EmptyStratum {
                    participant: p + 1,
                    condition,
                });
            }
        }
    }
    if let Some(j) = item_counts.iter().position(|&c| c == 1) {
        return Err(DataError::InfeasibleSplit(format!(
            "item {} has a single trial and cannot appear in every training set",
            j + 1
        )));
    }

    for attempt in 0..FOLD_PLAN_ATTEMPTS {
        let mut rng = seeds::rng_from_seed(seeds::derive_seed(seed, FOLD_PLAN_STREAM + attempt));
        let mut assignment = vec![usize::MAX; n];
        let mut counter = rng.random_range(0..k);
        for cells in &strata {
            for cell in cells {
                let mut cell = cell.clone();
                cell.shuffle(&mut rng);
                for i in cell {
                    assignment[i] = counter % k;
                    counter += 1;
                }
            }
        }
        if covers_all_groups(dataset, &assignment, k) {
            return Ok(FoldPlan { k, assignment, seed });
        }
    }
    Err(DataError::InfeasibleSplit(format!(
        "no assignment into {k} folds keeps every participant and item in every training set"
    )))
}

/// True when no participant or item has all of its trials in a single fold.
fn covers_all_groups(dataset: &Dataset, assignment: &[usize], k: usize) -> bool {
    let spread = |groups: usize, key: &dyn Fn(&Trial) -> usize| {
        let mut first = vec![usize::MAX; groups];
        let mut multi = vec![false; groups];
        for (t, &f) in dataset.trials().iter().zip(assignment) {
            let g = key(t);
            if first[g] == usize::MAX {
                first[g] = f;
            } else if first[g] != f {
                multi[g] = true;
            }
        }
        first.iter().zip(&multi).all(|(&f, &m)| f == usize::MAX || m)
    };
    k >= 2
        && spread(dataset.n_participants(), &|t| t.participant)
        && spread(dataset.n_items(), &|t| t.item)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(participants: usize, items: usize) -> Dataset {
        let mut trials = Vec::new();
        for p in 0..participants {
            for i in 0..items {
                let condition = if (p + i) % 2 == 0 {
                    Condition::SubjectRelative
                } else {
                    Condition::ObjectRelative
                };
                trials.push(Trial {
                    participant: p,
                    item: i,
                    condition,
                    rt_ms: 300.0 + (p * items + i) as f64,
                });
            }
        }
        Dataset::new(trials, participants, items).unwrap()
    }

    #[test]
    fn sum_coding() {
        assert_eq!(sum_code(Condition::SubjectRelative), -0.5);
        assert_eq!(sum_code(Condition::ObjectRelative), 0.5);
        assert_eq!(
            sum_code(Condition::SubjectRelative) + sum_code(Condition::ObjectRelative),
            0.0
        );
    }

    #[test]
    fn condition_labels() {
        for s in ["SR", "sr", "subj-ext", "Subj-Ext"] {
            assert_eq!(s.parse::<Condition>().unwrap(), Condition::SubjectRelative);
        }
        for s in ["OR", "or", "obj-ext", "OBJ-EXT"] {
            assert_eq!(s.parse::<Condition>().unwrap(), Condition::ObjectRelative);
        }
        assert!("subject".parse::<Condition>().is_err());
    }

    #[test]
    fn load_small_file() {
        let csv = "participant,item,condition,rt\n1,1,SR,400\n1,2,OR,350.5\n2,1,obj-ext,500\n2,2,subj-ext,610\n";
        let d = Dataset::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.n_participants(), 2);
        assert_eq!(d.n_items(), 2);
        assert_eq!(d.trials()[1].rt_ms, 350.5);
        assert_eq!(d.trials()[2].condition, Condition::ObjectRelative);
    }

    #[test]
    fn relabels_numerically_and_keeps_row_order() {
        let csv = "rt,condition,item,participant\n400,SR,10,30\n410,OR,2,30\n420,OR,10,4\n430,SR,2,4\n";
        let d = Dataset::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(d.participant_labels(), ["4", "30"]);
        assert_eq!(d.item_labels(), ["2", "10"]);
        let t = d.trials();
        assert_eq!((t[0].participant, t[0].item, t[0].rt_ms), (1, 1, 400.0));
        assert_eq!((t[3].participant, t[3].item, t[3].rt_ms), (0, 0, 430.0));
    }

    #[test]
    fn negative_rt_names_line() {
        let csv = "participant,item,condition,rt\n1,1,SR,400\n1,2,OR,-5\n";
        let err = Dataset::from_reader(csv.as_bytes()).unwrap_err();
        match err {
            DataError::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_errors() {
        let bad_number = "participant,item,condition,rt\n1,1,SR,abc\n";
        assert!(matches!(
            Dataset::from_reader(bad_number.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
        let bad_condition = "participant,item,condition,rt\n1,1,XX,300\n";
        assert!(matches!(
            Dataset::from_reader(bad_condition.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
        let missing = "participant,item,condition,rt\n1,,SR,300\n";
        assert!(matches!(
            Dataset::from_reader(missing.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
        let zero = "participant,item,condition,rt\n1,1,SR,0\n";
        assert!(matches!(
            Dataset::from_reader(zero.as_bytes()),
            Err(DataError::Row { line: 2, .. })
        ));
        let dup = "participant,item,condition,rt\n1,1,SR,300\n1,1,OR,310\n";
        assert!(matches!(
            Dataset::from_reader(dup.as_bytes()),
            Err(DataError::Row { line: 3, .. })
        ));
    }

    #[test]
    fn format_errors() {
        let no_rt = "participant,item,condition\n1,1,SR\n";
        assert!(matches!(
            Dataset::from_reader(no_rt.as_bytes()),
            Err(DataError::MissingColumn("rt"))
        ));
        assert!(matches!(
            Dataset::from_reader("".as_bytes()),
            Err(DataError::MissingColumn(_))
        ));
        assert!(matches!(
            Dataset::from_reader("participant,item,condition,rt\n".as_bytes()),
            Err(DataError::Empty)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = grid(3, 4);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn forty_trials_ten_folds() {
        let d = grid(4, 10);
        let plan = make_folds(&d, 10, 7).unwrap();
        for f in 0..10 {
            assert_eq!(plan.heldout(f).len(), 4);
        }
        assert_eq!(plan, make_folds(&d, 10, 7).unwrap());
    }

    #[test]
    fn small_participant_spread_over_folds() {
        // participant 0 has 9 trials, the rest 10
        let mut trials: Vec<Trial> = grid(5, 10).trials().to_vec();
        trials.retain(|t| !(t.participant == 0 && t.item == 9));
        let d = Dataset::new(trials, 5, 10).unwrap();
        let plan = make_folds(&d, 10, 3).unwrap();
        let mut per_fold = [0usize; 10];
        for (t, &f) in d.trials().iter().zip(plan.assignment()) {
            if t.participant == 0 {
                per_fold[f] += 1;
            }
        }
        assert!(per_fold.iter().all(|&c| c <= 1));
        for f in 0..10 {
            let training = plan.training(f);
            assert!(training.iter().any(|&i| d.trials()[i].participant == 0));
        }
    }

    #[test]
    fn fold_errors() {
        let d = grid(3, 4);
        assert!(matches!(make_folds(&d, 1, 0), Err(DataError::InvalidFoldCount(1))));
        assert!(matches!(make_folds(&d, 13, 0), Err(DataError::InfeasibleSplit(_))));
        let only_sr: Vec<Trial> = d
            .trials()
            .iter()
            .copied()
            .filter(|t| !(t.participant == 1 && t.condition == Condition::ObjectRelative))
            .collect();
        let d2 = Dataset::new(only_sr, 3, 4).unwrap();
        assert!(matches!(make_folds(&d2, 2, 0), Err(DataError::EmptyStratum { participant: 2, .. })));
    }

    #[test]
    fn leave_one_out_plan() {
        let d = grid(3, 4);
        let plan = make_folds(&d, 12, 5).unwrap();
        let mut folds: Vec<usize> = plan.assignment().to_vec();
        folds.sort_unstable();
        assert_eq!(folds, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn fold_csv_is_one_based() {
        let d = grid(2, 4);
        let plan = make_folds(&d, 2, 1).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("trial_index,fold"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("1,"));
        assert_eq!(text.lines().count(), 9);
    }
}
