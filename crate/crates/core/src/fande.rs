//! Feature/structure redundancy diagnostic over multi-seed prediction logs.
//!
//! An example is *solvable* by a model when the model predicts its gold
//! label under every seed. Given a feature-only model's solvable set `S_F`
//! and an edge-aware model's solvable set `S_E` over a shared test set `P`,
//! the redundancy score is `|S_F intersect S_E| / |P|` — high values mean
//! most examples fall to either signal alone.
//!
//! Log format: one JSON object per line,
//! `{"model": str, "seed": int, "id": str, "pred": str, "gold": str}`.
//! Labels compare by exact string equality after trimming surrounding
//! whitespace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PredictionRecord {
    pub model: String,
    pub seed: i64,
    pub id: String,
    pub pred: String,
    pub gold: String,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.pred.trim() == self.gold.trim()
    }
}

/// Immutable collection of per-(model, seed, example) predictions.
#[derive(Clone, Debug, Default)]
pub struct PredictionLog {
    records: Vec<PredictionRecord>,
}

impl PredictionLog {
    /// Validates that no (model, seed) pair reports the same example twice.
    pub fn new(records: Vec<PredictionRecord>) -> Result<Self> {
        let mut seen: BTreeSet<(&str, i64, &str)> = BTreeSet::new();
        for r in &records {
            if !seen.insert((&r.model, r.seed, &r.id)) {
                return Err(Error::Invalid(format!(
                    "duplicate record for model {} seed {} example {}",
                    r.model, r.seed, r.id
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: PredictionRecord = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            records.push(r);
        }
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialization"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn models(&self) -> Vec<String> {
        let mut models: Vec<String> = self
            .records
            .iter()
            .map(|r| r.model.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        models.sort();
        models
    }

    pub fn seeds_for(&self, model: &str) -> Vec<i64> {
        self.records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.seed)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The shared example set `P`. Every (model, seed) pair present in the
    /// log must cover exactly the same ids.
    pub fn example_ids(&self) -> Result<BTreeSet<String>> {
        let mut per_pair: BTreeMap<(String, i64), BTreeSet<String>> = BTreeMap::new();
        for r in &self.records {
            per_pair
                .entry((r.model.clone(), r.seed))
                .or_default()
                .insert(r.id.clone());
        }
        let mut iter = per_pair.iter();
        let Some((first_key, reference)) = iter.next() else {
            return Ok(BTreeSet::new());
        };
        for (key, ids) in iter {
            if ids != reference {
                return Err(Error::Coverage(format!(
                    "model {} seed {} covers {} examples, model {} seed {} covers {}",
                    key.0,
                    key.1,
                    ids.len(),
                    first_key.0,
                    first_key.1,
                    reference.len()
                )));
            }
        }
        Ok(reference.clone())
    }
}

/// Examples a model answers correctly under every listed seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolvableSet {
    pub model_id: String,
    pub examples: BTreeSet<String>,
}

/// Intersects per-seed correct sets: an example survives only when every
/// seed got it right. Errors list missing (seed, example) coverage.
pub fn solvable_set(log: &PredictionLog, model_id: &str, seeds: &[i64]) -> Result<SolvableSet> {
    if seeds.is_empty() {
        return Err(Error::Invalid("no seeds given".to_string()));
    }
    let mut per_seed: BTreeMap<i64, BTreeMap<&str, bool>> = BTreeMap::new();
    for r in log.records().iter().filter(|r| r.model == model_id) {
        per_seed
            .entry(r.seed)
            .or_default()
            .insert(r.id.as_str(), r.is_correct());
    }
    let mut universe: BTreeSet<&str> = BTreeSet::new();
    for seed in seeds {
        match per_seed.get(seed) {
            Some(m) => universe.extend(m.keys()),
            None => {
                return Err(Error::Coverage(format!(
                    "model {model_id} has no records for seed {seed}"
                )))
            }
        }
    }
    let mut gaps = Vec::new();
    let mut solvable = BTreeSet::new();
    for id in &universe {
        let mut all_correct = true;
        for seed in seeds {
            match per_seed[seed].get(id) {
                Some(correct) => all_correct &= correct,
                None => gaps.push(format!("seed {seed} misses example {id}")),
            }
        }
        if all_correct && gaps.is_empty() {
            solvable.insert((*id).to_string());
        }
    }
    if !gaps.is_empty() {
        gaps.truncate(8);
        return Err(Error::Coverage(format!(
            "model {model_id}: {}",
            gaps.join("; ")
        )));
    }
    Ok(SolvableSet {
        model_id: model_id.to_string(),
        examples: solvable,
    })
}

/// `|S_F intersect S_E| / |P|`.
pub fn fande_score(sf: &SolvableSet, se: &SolvableSet, p_size: usize) -> Result<f64> {
    if p_size == 0 {
        return Err(Error::Invalid("empty test set".to_string()));
    }
    let both = sf.examples.intersection(&se.examples).count();
    Ok(both as f64 / p_size as f64)
}

/// Quadrant counts for the solvable-set overlap; the four counts always sum
/// to `|P|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Contingency {
    /// `|S_F intersect S_E|`
    pub both: usize,
    /// `|S_E \ S_F|`
    pub edge_only: usize,
    /// `|S_F \ S_E|`
    pub feature_only: usize,
    pub neither: usize,
}

impl Contingency {
    pub fn total(&self) -> usize {
        self.both + self.edge_only + self.feature_only + self.neither
    }

    /// Aligned quadrant table with `S_F` on columns and `S_E` on rows.
    pub fn to_table(&self, feature_model: &str, edge_model: &str) -> String {
        let header = format!("S_F = {feature_model}, S_E = {edge_model}");
        format!(
            "{header}\n{:<12}{:>10}{:>10}\n{:<12}{:>10}{:>10}\n{:<12}{:>10}{:>10}\n",
            "", "S_F", "!S_F", "S_E", self.both, self.edge_only, "!S_E", self.feature_only,
            self.neither
        )
    }
}

pub fn contingency(
    sf: &SolvableSet,
    se: &SolvableSet,
    p: &BTreeSet<String>,
) -> Result<Contingency> {
    for (set, name) in [(sf, "S_F"), (se, "S_E")] {
        if let Some(outside) = set.examples.iter().find(|id| !p.contains(*id)) {
            return Err(Error::Invalid(format!(
                "{name} contains example {outside} outside P"
            )));
        }
    }
    let mut counts = Contingency {
        both: 0,
        edge_only: 0,
        feature_only: 0,
        neither: 0,
    };
    for id in p {
        match (sf.examples.contains(id), se.examples.contains(id)) {
            (true, true) => counts.both += 1,
            (false, true) => counts.edge_only += 1,
            (true, false) => counts.feature_only += 1,
            (false, false) => counts.neither += 1,
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: &str, seed: i64, id: &str, correct: bool) -> PredictionRecord {
        PredictionRecord {
            model: model.to_string(),
            seed,
            id: id.to_string(),
            pred: if correct { "yes" } else { "no" }.to_string(),
            gold: "yes".to_string(),
        }
    }

    fn set(model: &str, ids: &[&str]) -> SolvableSet {
        SolvableSet {
            model_id: model.to_string(),
            examples: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_seed_all_correct_is_full_set() {
        let log = PredictionLog::new(vec![
            record("m", 1, "a", true),
            record("m", 1, "b", true),
        ])
        .unwrap();
        let s = solvable_set(&log, "m", &[1]).unwrap();
        assert_eq!(s.examples.len(), 2);
    }

    #[test]
    fn one_bad_seed_excludes_example() {
        let mut records = Vec::new();
        for seed in 1..=4 {
            records.push(record("m", seed, "a", seed != 4));
            records.push(record("m", seed, "b", true));
        }
        let log = PredictionLog::new(records).unwrap();
        let s = solvable_set(&log, "m", &[1, 2, 3, 4]).unwrap();
        assert!(!s.examples.contains("a"));
        assert!(s.examples.contains("b"));
    }

    #[test]
    fn disjoint_seed_successes_empty_the_set() {
        let log = PredictionLog::new(vec![
            record("m", 1, "a", true),
            record("m", 1, "b", false),
            record("m", 2, "a", false),
            record("m", 2, "b", true),
        ])
        .unwrap();
        let s = solvable_set(&log, "m", &[1, 2]).unwrap();
        assert!(s.examples.is_empty());
    }

    #[test]
    fn adding_seeds_never_grows_the_set() {
        let mut records = Vec::new();
        for seed in 1..=3 {
            for (i, id) in ["a", "b", "c", "d"].iter().enumerate() {
                records.push(record("m", seed, id, !(i + seed as usize).is_multiple_of(3)));
            }
        }
        let log = PredictionLog::new(records).unwrap();
        let s12 = solvable_set(&log, "m", &[1, 2]).unwrap();
        let s123 = solvable_set(&log, "m", &[1, 2, 3]).unwrap();
        assert!(s123.examples.is_subset(&s12.examples));
    }

    #[test]
    fn missing_seed_is_a_coverage_error() {
        let log = PredictionLog::new(vec![record("m", 1, "a", true)]).unwrap();
        assert!(matches!(
            solvable_set(&log, "m", &[1, 2]),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn missing_example_is_a_coverage_error() {
        let log = PredictionLog::new(vec![
            record("m", 1, "a", true),
            record("m", 1, "b", true),
            record("m", 2, "a", true),
        ])
        .unwrap();
        assert!(matches!(
            solvable_set(&log, "m", &[1, 2]),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn whitespace_trims_before_comparison() {
        let r = PredictionRecord {
            model: "m".to_string(),
            seed: 1,
            id: "a".to_string(),
            pred: "  yes ".to_string(),
            gold: "yes".to_string(),
        };
        assert!(r.is_correct());
    }

    /// Solvable sets reconstructed from quadrant counts
    /// (both, edge_only, feature_only, neither).
    fn sets_from_counts(counts: (usize, usize, usize, usize)) -> (SolvableSet, SolvableSet, usize) {
        let (both, edge_only, feature_only, neither) = counts;
        let total = both + edge_only + feature_only + neither;
        let ids: Vec<String> = (0..total).map(|i| format!("x{i}")).collect();
        let sf = SolvableSet {
            model_id: "f".to_string(),
            examples: ids[..both]
                .iter()
                .chain(&ids[both + edge_only..both + edge_only + feature_only])
                .cloned()
                .collect(),
        };
        let se = SolvableSet {
            model_id: "e".to_string(),
            examples: ids[..both + edge_only].iter().cloned().collect(),
        };
        (sf, se, total)
    }

    #[test]
    fn score_matches_published_contingencies() {
        // Two reference model pairs; scores round to 0.57 and 0.50.
        let (sf, se, p) = sets_from_counts((315, 85, 30, 124));
        let score = fande_score(&sf, &se, p).unwrap();
        assert!((score - 315.0 / 554.0).abs() < 1e-15);
        assert_eq!((score * 100.0).round() / 100.0, 0.57);

        let (sf, se, p) = sets_from_counts((807, 83, 129, 609));
        let score = fande_score(&sf, &se, p).unwrap();
        assert!((score - 807.0 / 1628.0).abs() < 1e-15);
        assert_eq!((score * 100.0).round() / 100.0, 0.50);
    }

    #[test]
    fn contingency_recovers_reference_counts() {
        for counts in [(315, 85, 30, 124), (807, 83, 129, 609)] {
            let (sf, se, total) = sets_from_counts(counts);
            let p: BTreeSet<String> = (0..total).map(|i| format!("x{i}")).collect();
            let c = contingency(&sf, &se, &p).unwrap();
            assert_eq!(
                (c.both, c.edge_only, c.feature_only, c.neither),
                counts
            );
        }
    }

    #[test]
    fn score_is_symmetric_and_bounded() {
        let sf = set("f", &["a", "b", "c"]);
        let se = set("e", &["b", "c", "d"]);
        let ab = fande_score(&sf, &se, 5).unwrap();
        let ba = fande_score(&se, &sf, 5).unwrap();
        assert_eq!(ab, ba);
        assert!((ab - 0.4).abs() < 1e-15);
        assert!(fande_score(&sf, &se, 0).is_err());
    }

    #[test]
    fn full_overlap_scores_one() {
        let p: Vec<&str> = vec!["a", "b"];
        let sf = set("f", &p);
        let se = set("e", &p);
        assert_eq!(fande_score(&sf, &se, 2).unwrap(), 1.0);
    }

    #[test]
    fn contingency_counts_sum_to_p() {
        let p: BTreeSet<String> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let sf = set("f", &["a", "b"]);
        let se = set("e", &["b", "c"]);
        let c = contingency(&sf, &se, &p).unwrap();
        assert_eq!(c.both, 1);
        assert_eq!(c.edge_only, 1);
        assert_eq!(c.feature_only, 1);
        assert_eq!(c.neither, 2);
        assert_eq!(c.total(), p.len());
    }

    #[test]
    fn disjoint_sets_covering_p() {
        let p: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let sf = set("f", &["a"]);
        let se = set("e", &["b", "c"]);
        let c = contingency(&sf, &se, &p).unwrap();
        assert_eq!(
            (c.both, c.edge_only, c.feature_only, c.neither),
            (0, 2, 1, 0)
        );
    }

    #[test]
    fn contingency_rejects_membership_outside_p() {
        let p: BTreeSet<String> = ["a"].iter().map(|s| s.to_string()).collect();
        let sf = set("f", &["z"]);
        let se = set("e", &[]);
        assert!(contingency(&sf, &se, &p).is_err());
    }

    #[test]
    fn duplicate_records_rejected() {
        let r = record("m", 1, "a", true);
        assert!(PredictionLog::new(vec![r.clone(), r]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let log = PredictionLog::new(vec![
            record("m", 1, "a", true),
            record("g", 2, "a", false),
        ])
        .unwrap();
        let back = PredictionLog::from_jsonl(&log.to_jsonl()).unwrap();
        assert_eq!(back.records(), log.records());
    }

    #[test]
    fn jsonl_parse_error_names_line() {
        let err = PredictionLog::from_jsonl("{\"model\":\"m\"}\n").unwrap_err();
        assert!(matches!(err, Error::Parse(msg) if msg.starts_with("line 1")));
    }

    #[test]
    fn brute_force_oracle_agreement() {
        // Naive per-example loops recompute solvable sets and quadrants for
        // random logs; the set-based implementation must agree exactly.
        let mut rng = crate::numerics::DeterministicRng::new(77);
        for _ in 0..20 {
            let n_examples = 1 + rng.index(50);
            let n_seeds = 1 + rng.index(4);
            let seeds: Vec<i64> = (1..=n_seeds as i64).collect();
            let mut records = Vec::new();
            for model in ["f", "e"] {
                for &seed in &seeds {
                    for ex in 0..n_examples {
                        records.push(record(model, seed, &format!("x{ex}"), rng.next_f64() < 0.7));
                    }
                }
            }
            let log = PredictionLog::new(records.clone()).unwrap();
            let sf = solvable_set(&log, "f", &seeds).unwrap();
            let se = solvable_set(&log, "e", &seeds).unwrap();
            let p = log.example_ids().unwrap();

            // Oracle: plain loops, no set machinery.
            let mut naive_sf = Vec::new();
            let mut naive_se = Vec::new();
            for ex in 0..n_examples {
                let id = format!("x{ex}");
                for (model, bucket) in [("f", &mut naive_sf), ("e", &mut naive_se)] {
                    let mut all = true;
                    for &seed in &seeds {
                        let rec = records
                            .iter()
                            .find(|r| r.model == model && r.seed == seed && r.id == id)
                            .unwrap();
                        all &= rec.is_correct();
                    }
                    if all {
                        bucket.push(id.clone());
                    }
                }
            }
            assert_eq!(
                sf.examples.iter().cloned().collect::<Vec<_>>(),
                {
                    let mut v = naive_sf.clone();
                    v.sort();
                    v
                }
            );
            assert_eq!(
                se.examples.iter().cloned().collect::<Vec<_>>(),
                {
                    let mut v = naive_se.clone();
                    v.sort();
                    v
                }
            );
            let c = contingency(&sf, &se, &p).unwrap();
            let mut naive = (0, 0, 0, 0);
            for ex in 0..n_examples {
                let id = format!("x{ex}");
                match (naive_sf.contains(&id), naive_se.contains(&id)) {
                    (true, true) => naive.0 += 1,
                    (false, true) => naive.1 += 1,
                    (true, false) => naive.2 += 1,
                    (false, false) => naive.3 += 1,
                }
            }
            assert_eq!(
                (c.both, c.edge_only, c.feature_only, c.neither),
                naive
            );
            assert_eq!(c.total(), n_examples);
        }
    }
}
