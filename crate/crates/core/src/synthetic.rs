//! Seeded synthetic graphs for tests, demos and the acceptance suite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::KnowledgeGraph;

/// Functional chain: entities `c0..c{n-1}`, relations `r0..r{k-1}` with
/// `ri: cj -> c(j+i+1)` wherever the target exists.
pub fn chain(n_entities: usize, n_relations: usize) -> KnowledgeGraph {
    let mut triples = Vec::new();
    for r in 0..n_relations {
        for j in 0..n_entities {
            let t = j + r + 1;
            if t < n_entities {
                triples.push((format!("c{j}"), format!("r{r}"), format!("c{t}")));
            }
        }
    }
    KnowledgeGraph::from_named_triples("chain", triples)
}

/// A typed world of people, cities, organisations, countries and fields
/// with correlated facts (people mostly live where their employer is based,
/// study their employer's field, and know their colleagues).
pub fn world(n_entities: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let share = |f: f64, min: usize| ((n_entities as f64 * f).round() as usize).max(min);
    let countries = share(0.05, 2);
    let cities = share(0.20, countries);
    let orgs = share(0.15, 2);
    let fields = share(0.10, 2);
    let persons = n_entities
        .saturating_sub(countries + cities + orgs + fields)
        .max(4);

    let mut t: Vec<(String, &str, String)> = Vec::new();
    let city_country: Vec<usize> = (0..cities).map(|c| c % countries).collect();
    for (c, &k) in city_country.iter().enumerate() {
        t.push((format!("city_{c}"), "located_in", format!("country_{k}")));
    }
    let org_city: Vec<usize> = (0..orgs).map(|_| rng.gen_range(0..cities)).collect();
    let org_field: Vec<usize> = (0..orgs).map(|_| rng.gen_range(0..fields)).collect();
    for o in 0..orgs {
        t.push((
            format!("org_{o}"),
            "based_in",
            format!("city_{}", org_city[o]),
        ));
        t.push((
            format!("org_{o}"),
            "field_of",
            format!("field_{}", org_field[o]),
        ));
    }

    let person_org: Vec<usize> = (0..persons).map(|_| rng.gen_range(0..orgs)).collect();
    for p in 0..persons {
        let o = person_org[p];
        let name = format!("person_{p}");
        t.push((name.clone(), "works_for", format!("org_{o}")));
        let home = if rng.gen_bool(0.8) {
            org_city[o]
        } else {
            rng.gen_range(0..cities)
        };
        t.push((name.clone(), "lives_in", format!("city_{home}")));
        let same_country: Vec<usize> = (0..cities)
            .filter(|&c| city_country[c] == city_country[home])
            .collect();
        let birth = *same_country
            .choose(&mut rng)
            .expect("home is in its own country");
        t.push((name.clone(), "born_in", format!("city_{birth}")));
        let field = if rng.gen_bool(0.8) {
            org_field[o]
        } else {
            rng.gen_range(0..fields)
        };
        t.push((name.clone(), "studies", format!("field_{field}")));
        let colleagues: Vec<usize> = (0..persons)
            .filter(|&q| q != p && person_org[q] == o)
            .collect();
        for _ in 0..2 {
            let friend = match colleagues.choose(&mut rng) {
                Some(&q) if rng.gen_bool(0.7) => q,
                _ => rng.gen_range(0..persons),
            };
            if friend != p {
                t.push((name.clone(), "knows", format!("person_{friend}")));
            }
        }
    }
    KnowledgeGraph::from_named_triples(format!("world{seed}"), t)
}
