use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Task};
use crate::error::{Error, Result};
use crate::util::rng;

/// Fractions of the training set added as disambiguating examples labelled
/// by the intended rule (`linguistic`) or by the heuristic (`surface`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InoculationSplit {
    pub linguistic: f64,
    pub surface: f64,
}

impl InoculationSplit {
    pub const fn new(linguistic: f64, surface: f64) -> Self {
        Self { linguistic, surface }
    }

    pub fn is_none(&self) -> bool {
        self.linguistic == 0.0 && self.surface == 0.0
    }
}

/// The six inoculation variants: none, 2% L, 2% S and the three mixtures.
pub const INOCULATION_RECIPES: [(&str, InoculationSplit); 6] = [
    ("none", InoculationSplit::new(0.0, 0.0)),
    ("2L", InoculationSplit::new(0.02, 0.0)),
    ("2S", InoculationSplit::new(0.0, 0.02)),
    ("2L1S", InoculationSplit::new(0.02, 0.01)),
    ("1L2S", InoculationSplit::new(0.01, 0.02)),
    ("2L2S", InoculationSplit::new(0.02, 0.02)),
];

/// Augments `train` with pool examples on which the task heuristic and the
/// gold label disagree. Linguistic examples keep their gold label; surface
/// examples are relabelled with the heuristic's prediction. Counts are
/// `round(pct * |train|)`. The result is shuffled by `seed`; a zero split
/// returns `train` unchanged.
pub fn inoculation_mix(
    task: Task,
    train: &Dataset,
    pool: &Dataset,
    split: InoculationSplit,
    seed: u64,
) -> Result<Dataset> {
    for pct in [split.linguistic, split.surface] {
        if !(0.0..=0.1).contains(&pct) {
            return Err(Error::InvalidArgument(alloc::format!(
                "inoculation percentages must lie in [0, 0.1], got {pct}"
            )));
        }
    }
    if split.is_none() {
        return Ok(train.clone());
    }
    let n = train.len() as f64;
    let n_ling = libm::round(split.linguistic * n) as usize;
    let n_surf = libm::round(split.surface * n) as usize;

    // Qualifying examples, interleaved by gold label so both directions of
    // the disambiguation are represented.
    let qualifying = |label: u8| -> Vec<&Example> {
        pool.examples
            .iter()
            .filter(|e| e.label == label && task.heuristic_label(e) != e.label)
            .collect()
    };
    let (pos, neg) = (qualifying(1), qualifying(0));
    let mut ordered: Vec<&Example> = Vec::with_capacity(pos.len() + neg.len());
    for i in 0..pos.len().max(neg.len()) {
        ordered.extend(pos.get(i).copied());
        ordered.extend(neg.get(i).copied());
    }
    if n_ling + n_surf > ordered.len() {
        return Err(Error::PoolExhausted { requested: n_ling + n_surf, available: ordered.len() });
    }

    let mut examples = train.examples.clone();
    for example in &ordered[..n_ling] {
        let mut ex = (*example).clone();
        ex.id = alloc::format!("inoc-L-{}", ex.id);
        examples.push(ex);
    }
    for example in &ordered[n_ling..n_ling + n_surf] {
        let mut ex = (*example).clone();
        ex.id = alloc::format!("inoc-S-{}", ex.id);
        ex.label = task.heuristic_label(example);
        examples.push(ex);
    }
    examples.shuffle(&mut rng(seed));

    let mut provenance = train.provenance.clone();
    provenance.params.insert("inoculation_linguistic".into(), alloc::format!("{}", split.linguistic));
    provenance.params.insert("inoculation_surface".into(), alloc::format!("{}", split.surface));
    provenance.params.insert("inoculation_seed".into(), seed.to_string());
    Ok(Dataset {
        name: alloc::format!("{}+inoc", train.name),
        split: train.split,
        examples,
        vocabulary: train.vocabulary.clone(),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, THE};

    fn setup() -> (Dataset, Dataset) {
        let vocab = Vocabulary::standard();
        let (train, _) = Task::MsgsMorph.generate(&vocab, 1000, 100, 7).unwrap();
        let pool = Task::MsgsMorph.inoculation_pool(&vocab, 200, 8).unwrap();
        (train, pool)
    }

    #[test]
    fn adds_linguistic_examples() {
        let (train, pool) = setup();
        let mixed = inoculation_mix(Task::MsgsMorph, &train, &pool, InoculationSplit::new(0.02, 0.0), 1).unwrap();
        assert_eq!(mixed.len(), 1020);
        let added: Vec<&Example> = mixed.examples.iter().filter(|e| e.id.starts_with("inoc-L-")).collect();
        assert_eq!(added.len(), 20);
        // linguistic rule: irregular verb present <=> label 1, "the" disagrees
        for ex in added {
            let the = ex.segment_a().iter().any(|w| w == THE);
            assert_eq!(ex.label, u8::from(!the));
        }
        mixed.validate().unwrap();
    }

    #[test]
    fn surface_examples_follow_the_heuristic() {
        let (train, pool) = setup();
        let mixed = inoculation_mix(Task::MsgsMorph, &train, &pool, InoculationSplit::new(0.0, 0.02), 1).unwrap();
        for ex in mixed.examples.iter().filter(|e| e.id.starts_with("inoc-S-")) {
            let the = ex.segment_a().iter().any(|w| w == THE);
            assert_eq!(ex.label, u8::from(the));
        }
    }

    #[test]
    fn zero_split_is_identity() {
        let (train, pool) = setup();
        let mixed = inoculation_mix(Task::MsgsMorph, &train, &pool, InoculationSplit::new(0.0, 0.0), 1).unwrap();
        assert_eq!(mixed, train);
    }

    #[test]
    fn six_recipes_give_distinct_datasets() {
        let (train, pool) = setup();
        let sets: Vec<Dataset> = INOCULATION_RECIPES
            .iter()
            .map(|(_, s)| inoculation_mix(Task::MsgsMorph, &train, &pool, *s, 3).unwrap())
            .collect();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                assert_ne!(sets[i].examples, sets[j].examples, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn oversized_request_is_rejected() {
        let (train, pool) = setup();
        let small = Dataset { examples: pool.examples[..10].to_vec(), ..pool };
        let err = inoculation_mix(Task::MsgsMorph, &train, &small, InoculationSplit::new(0.02, 0.0), 1).unwrap_err();
        assert_eq!(err, Error::PoolExhausted { requested: 20, available: 10 });
        assert!(inoculation_mix(Task::MsgsMorph, &train, &small, InoculationSplit::new(0.2, 0.0), 1).is_err());
    }
}
