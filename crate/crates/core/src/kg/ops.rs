//! Cross-graph manipulations. Triples are compared by surface names.

use rand::seq::index;
use rand::Rng;

use super::{KgError, KnowledgeGraph};

/// Triples present, by name, in both graphs. Ids are re-densified in the
/// order of `a`. An empty result is returned as an empty graph; callers
/// must check [`KnowledgeGraph::is_empty`] before sampling from it.
pub fn common_subgraph(a: &KnowledgeGraph, b: &KnowledgeGraph) -> KnowledgeGraph {
    let in_b = b.named_triple_set();
    let common = KnowledgeGraph::from_named_triples(
        format!("{}&{}", a.name(), b.name()),
        a.triples()
            .iter()
            .map(|t| a.names_of(t))
            .filter(|names| in_b.contains(names)),
    );
    if common.is_empty() {
        log::warn!("{} and {} share no triples", a.name(), b.name());
    }
    common
}

/// Removes `n` triples from `kg`, drawn without replacement from two pools:
/// triples unique to `kg` (relative to `other`) and triples it shares with
/// `other`. `round(n * ratio / (ratio + 1))` come from the unique pool; a
/// short pool hands its deficit to the other one.
pub fn ablate_triples<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    other: &KnowledgeGraph,
    n: usize,
    ratio_unique_to_common: f64,
    rng: &mut R,
) -> Result<KnowledgeGraph, KgError> {
    if !(ratio_unique_to_common > 0.0 && ratio_unique_to_common.is_finite()) {
        return Err(KgError::InvalidRatio(ratio_unique_to_common));
    }
    if n > kg.num_triples() {
        return Err(KgError::TooManyRemovals {
            requested: n,
            available: kg.num_triples(),
        });
    }
    let in_other = other.named_triple_set();
    let (common, unique): (Vec<usize>, Vec<usize>) =
        (0..kg.num_triples()).partition(|&i| in_other.contains(&kg.names_of(&kg.triples()[i])));

    let (from_unique, from_common) =
        split_removals(n, ratio_unique_to_common, unique.len(), common.len());

    let mut removed = vec![false; kg.num_triples()];
    for pool_idx in index::sample(rng, unique.len(), from_unique) {
        removed[unique[pool_idx]] = true;
    }
    for pool_idx in index::sample(rng, common.len(), from_common) {
        removed[common[pool_idx]] = true;
    }

    Ok(KnowledgeGraph::from_named_triples(
        kg.name(),
        kg.triples()
            .iter()
            .zip(&removed)
            .filter(|(_, &gone)| !gone)
            .map(|(t, _)| kg.names_of(t)),
    ))
}

/// Number of removals from (unique, common) pools.
pub(crate) fn split_removals(
    n: usize,
    ratio: f64,
    unique_available: usize,
    common_available: usize,
) -> (usize, usize) {
    let want_unique = ((n as f64) * ratio / (ratio + 1.0)).round() as usize;
    let want_unique = want_unique.min(n);
    let mut from_unique = want_unique.min(unique_available);
    let from_common = (n - from_unique).min(common_available);
    // spill any remaining deficit back to the unique pool
    from_unique += (n - from_unique - from_common).min(unique_available - from_unique);
    (from_unique, from_common)
}
