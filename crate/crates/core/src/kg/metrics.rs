//! Shallow scale, entropy and density statistics. Entropies use log base 2.

use super::{KgError, KnowledgeGraph};

/// Entity entropy with `P(e) = (#as subject + #as object) / |T|`.
///
/// Note that these `P(e)` sum to 2, not 1.
pub fn entity_entropy(kg: &KnowledgeGraph) -> Result<f64, KgError> {
    if kg.is_empty() {
        return Err(KgError::Empty);
    }
    let mut counts = vec![0usize; kg.num_entities()];
    for t in kg.triples() {
        counts[t.subject.index()] += 1;
        counts[t.object.index()] += 1;
    }
    Ok(entropy_of_counts(&counts, kg.num_triples()))
}

pub fn relation_entropy(kg: &KnowledgeGraph) -> Result<f64, KgError> {
    if kg.is_empty() {
        return Err(KgError::Empty);
    }
    let mut counts = vec![0usize; kg.num_relations()];
    for t in kg.triples() {
        counts[t.predicate.index()] += 1;
    }
    Ok(entropy_of_counts(&counts, kg.num_triples()))
}

/// `2|T| / |E|`
pub fn entity_density(kg: &KnowledgeGraph) -> Result<f64, KgError> {
    if kg.num_entities() == 0 {
        return Err(KgError::NoElements("entities"));
    }
    Ok(2.0 * kg.num_triples() as f64 / kg.num_entities() as f64)
}

/// `|T| / |R|`
pub fn relation_density(kg: &KnowledgeGraph) -> Result<f64, KgError> {
    if kg.num_relations() == 0 {
        return Err(KgError::NoElements("relations"));
    }
    Ok(kg.num_triples() as f64 / kg.num_relations() as f64)
}

fn entropy_of_counts(counts: &[usize], total: usize) -> f64 {
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * (total / c as f64).log2()
        })
        .fold(0.0, |a, b| a + b)
}

/// All shallow baselines of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub entity_entropy: f64,
    pub relation_entropy: f64,
    pub entity_density: f64,
    pub relation_density: f64,
}

impl Metrics {
    pub fn compute(kg: &KnowledgeGraph) -> Result<Self, KgError> {
        Ok(Self {
            entities: kg.num_entities(),
            relations: kg.num_relations(),
            triples: kg.num_triples(),
            entity_entropy: entity_entropy(kg)?,
            relation_entropy: relation_entropy(kg)?,
            entity_density: entity_density(kg)?,
            relation_density: relation_density(kg)?,
        })
    }

    /// One `NAME<TAB>value` line per metric, six decimals.
    pub fn to_lines(&self) -> String {
        format!(
            "EN\t{:.6}\nRN\t{:.6}\nTN\t{:.6}\nEE\t{:.6}\nRE\t{:.6}\nED\t{:.6}\nRD\t{:.6}\n",
            self.entities as f64,
            self.relations as f64,
            self.triples as f64,
            self.entity_entropy,
            self.relation_entropy,
            self.entity_density,
            self.relation_density,
        )
    }
}
