use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nr_core::assignment::{assign_hpo, Polarity};
use nr_core::embedding::{EmbeddingVector, EntityEmbeddings, Lexicon};
use nr_core::evaluation::{evaluate_exact, evaluate_generalized, LabeledSet};
use nr_core::extraction::{extract_candidates, parse_conllu, parse_number_token, CandidateSet, Candidate, NumberMention, Sentence};
use nr_core::knowledge::{
    load_kb_str, store_kb, validate_kb, GranularBand, KnowledgeBase, NumericEntity, PhenotypeTriple, ReferenceRange,
    Rule,
};
use nr_core::linking::link;
use nr_core::ontology::{HpoId, HpoTerm, Ontology};

fn hp(n: u32) -> HpoId {
    HpoId::new(&format!("HP:{n:07}")).unwrap()
}

// ---------- knowledge base ----------

fn word(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

/// A random KB satisfying every invariant. Entity 0 always carries one
/// band above its first range.
fn random_kb(seed: u64, n: usize) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::default();
    let mut next_hpo = 1_000u32;
    let mut fresh = || {
        next_hpo += 1;
        hp(next_hpo)
    };
    for id in 0..n as u32 {
        let name = format!("{} {}", word(&mut rng, 5), id);
        kb.entities.push(NumericEntity {
            id,
            name,
            abbreviation: format!("{}{id}", word(&mut rng, 2)),
        });
        for u in 0..rng.random_range(1..=2) {
            let lower = (rng.random_range(1..500) as f64) / 10.0;
            let upper = lower + (rng.random_range(1..500) as f64) / 10.0;
            kb.ranges.push(ReferenceRange {
                entity_id: id,
                unit: format!("u{u}"),
                lower,
                upper,
            });
        }
        kb.triples.push(PhenotypeTriple {
            entity_id: id,
            below_hpo: fresh(),
            above_hpo: fresh(),
            normal_hpo: fresh(),
        });
        let syns: Vec<String> = (0..rng.random_range(0..3)).map(|_| word(&mut rng, 6)).collect();
        if !syns.is_empty() {
            kb.synonym_sets.insert(id, syns);
        }
    }
    let r = kb.ranges[0].clone();
    kb.granular_bands.push(GranularBand {
        primary_hpo: kb.triples[0].above_hpo.clone(),
        unit: r.unit.clone(),
        lower: r.upper + 1.0,
        upper: r.upper + 5.0,
        granular_hpo: fresh(),
    });
    kb
}

proptest! {
    #[test]
    fn kb_store_load_round_trip(seed in any::<u64>(), n in 1usize..6) {
        let kb = random_kb(seed, n);
        prop_assert!(validate_kb(&kb).is_empty());
        // loading adds each entity's name and abbreviation to its synonyms,
        // so the first load is the fixed point
        let back = load_kb_str(&store_kb(&kb)).unwrap();
        let again = load_kb_str(&store_kb(&back)).unwrap();
        prop_assert_eq!(&again, &back);
        for e in &kb.entities {
            let mut want = vec![e.name.clone(), e.abbreviation.clone()];
            want.extend(kb.synonyms(e.id).iter().cloned());
            prop_assert_eq!(back.synonyms(e.id), &want[..]);
        }
        prop_assert_eq!(back.entities, kb.entities);
        prop_assert_eq!(back.ranges, kb.ranges);
        prop_assert_eq!(back.triples, kb.triples);
        prop_assert_eq!(back.granular_bands, kb.granular_bands);
    }

    #[test]
    fn one_mutation_one_violation(seed in any::<u64>(), n in 1usize..6, which in 0usize..5) {
        let mut kb = random_kb(seed, n);
        let expected = match which {
            0 => {
                let t = &mut kb.triples[n - 1];
                t.normal_hpo = t.below_hpo.clone();
                Rule::TripleNotDistinct
            }
            1 => {
                kb.synonym_sets.insert(999, vec!["stray".into()]);
                Rule::UnknownEntity
            }
            2 => {
                let mut r = kb.ranges[0].clone();
                r.lower += 0.5;
                kb.ranges.push(r);
                Rule::DuplicateUnit
            }
            3 => {
                let b = &mut kb.granular_bands[0];
                b.lower = kb.ranges[0].upper - 0.1;
                Rule::BandStraddlesRange
            }
            _ => {
                kb.entities[n - 1].name = kb.entities[n - 1].name.to_uppercase();
                Rule::NotLowercase
            }
        };
        let v = validate_kb(&kb);
        prop_assert_eq!(v.len(), 1, "{:?}", v);
        prop_assert_eq!(v[0].rule, expected);
    }
}

// ---------- ontology ----------

const ROOT: u32 = 118;
const ALL: u32 = 1;

/// Node 0 is the phenotype root under HP:0000001. Later nodes pick 1..=3
/// parents among earlier nodes; about one in six hangs off HP:0000001
/// instead, giving a branch outside the subtree.
fn random_dag(seed: u64, n: usize) -> (Vec<HpoTerm>, BTreeMap<HpoId, Vec<HpoId>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<HpoId> = (0..n).map(|i| if i == 0 { hp(ROOT) } else { hp(5000 + i as u32) }).collect();
    let mut terms = vec![HpoTerm {
        id: hp(ALL),
        name: "All".into(),
        parents: vec![],
    }];
    let mut parents = BTreeMap::new();
    parents.insert(hp(ALL), vec![]);
    for (i, id) in ids.iter().enumerate() {
        let ps: Vec<HpoId> = if i == 0 || rng.random_range(0..6) == 0 {
            vec![hp(ALL)]
        } else {
            let k = rng.random_range(1..=3.min(i));
            let mut s = BTreeSet::new();
            for _ in 0..k {
                s.insert(rng.random_range(0..i));
            }
            s.into_iter().map(|j| ids[j].clone()).collect()
        };
        parents.insert(id.clone(), ps.clone());
        terms.push(HpoTerm {
            id: id.clone(),
            name: format!("t{i}"),
            parents: ps,
        });
    }
    (terms, parents)
}

fn reachable(parents: &BTreeMap<HpoId, Vec<HpoId>>, start: &HpoId) -> BTreeSet<HpoId> {
    let mut seen = BTreeSet::new();
    let mut stack = parents[start].clone();
    while let Some(p) = stack.pop() {
        if seen.insert(p.clone()) {
            stack.extend(parents[&p].iter().cloned());
        }
    }
    seen
}

fn brute_ancestors(parents: &BTreeMap<HpoId, Vec<HpoId>>, id: &HpoId) -> BTreeSet<HpoId> {
    reachable(parents, id)
        .into_iter()
        .filter(|a| *a != hp(ROOT) && reachable(parents, a).contains(&hp(ROOT)))
        .collect()
}

proptest! {
    #[test]
    fn ancestors_match_reachability(seed in any::<u64>(), n in 1usize..50) {
        let (terms, parents) = random_dag(seed, n);
        let onto = Ontology::from_terms(terms).unwrap();
        for (id, ps) in &parents {
            let got = onto.ancestors(id).unwrap();
            prop_assert_eq!(&got, &brute_ancestors(&parents, id));
            prop_assert!(!got.contains(&hp(ROOT)));
            prop_assert!(!got.contains(id));
            // a child's closure contains each in-scope parent's closure
            for p in ps {
                if got.contains(p) {
                    prop_assert!(onto.ancestors(p).unwrap().is_subset(&got));
                }
            }
        }
    }
}

// ---------- evaluation ----------

fn random_labels(rng: &mut ChaCha8Rng, ids: &[HpoId], max: usize) -> LabeledSet {
    let mut s = LabeledSet::new();
    for _ in 0..rng.random_range(0..=max) {
        let doc = format!("d{}", rng.random_range(0..4));
        let id = ids[rng.random_range(0..ids.len())].clone();
        let pol = if rng.random_bool(0.8) { Polarity::Affirmed } else { Polarity::Negated };
        s.insert(&doc, id, pol);
    }
    s
}

fn brute_close(set: &LabeledSet, parents: &BTreeMap<HpoId, Vec<HpoId>>) -> BTreeSet<(String, HpoId, Polarity)> {
    let mut out = BTreeSet::new();
    for l in &set.0 {
        out.insert((l.doc_id.clone(), l.hpo_id.clone(), l.polarity));
        for a in brute_ancestors(parents, &l.hpo_id) {
            out.insert((l.doc_id.clone(), a, l.polarity));
        }
    }
    out
}

proptest! {
    #[test]
    fn generalized_equals_brute_closure(seed in any::<u64>(), n in 2usize..50) {
        let (terms, parents) = random_dag(seed, n);
        let ids: Vec<HpoId> = parents.keys().cloned().collect();
        let onto = Ontology::from_terms(terms).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let gold = random_labels(&mut rng, &ids, 30);
        let pred = random_labels(&mut rng, &ids, 30);
        let m = evaluate_generalized(&gold, &pred, &onto).unwrap();
        let g = brute_close(&gold, &parents);
        let p = brute_close(&pred, &parents);
        let tp = g.intersection(&p).count();
        prop_assert_eq!((m.tp, m.fp, m.fn_), (tp, p.len() - tp, g.len() - tp));
        // closure keeps every exact hit, and a perfect exact recall stays perfect
        let exact = evaluate_exact(&gold, &pred);
        prop_assert!(m.tp >= exact.tp);
        if exact.recall == 1.0 {
            prop_assert_eq!(m.recall, 1.0);
        }
    }
}

#[test]
fn generalized_recall_can_fall_below_exact() {
    // Y's in-scope ancestors enlarge the gold side only
    let terms = vec![
        HpoTerm { id: hp(ROOT), name: "root".into(), parents: vec![] },
        HpoTerm { id: hp(10), name: "x".into(), parents: vec![hp(ROOT)] },
        HpoTerm { id: hp(20), name: "ya".into(), parents: vec![hp(ROOT)] },
        HpoTerm { id: hp(21), name: "yb".into(), parents: vec![hp(20)] },
        HpoTerm { id: hp(22), name: "y".into(), parents: vec![hp(21)] },
    ];
    let onto = Ontology::from_terms(terms).unwrap();
    let mut gold = LabeledSet::new();
    gold.insert("d1", hp(10), Polarity::Affirmed);
    gold.insert("d1", hp(22), Polarity::Affirmed);
    let mut pred = LabeledSet::new();
    pred.insert("d1", hp(10), Polarity::Affirmed);
    assert_eq!(evaluate_exact(&gold, &pred).recall, 0.5);
    assert_eq!(evaluate_generalized(&gold, &pred, &onto).unwrap().recall, 0.25);
}

// ---------- numbers and candidates ----------

proptest! {
    #[test]
    fn number_tokens_round_trip(int in 0u32..100_000, frac in proptest::option::of(0u32..1000), unit in "(F|C|mg|kg|%)?") {
        let digits = match frac {
            Some(f) => format!("{int}.{f:03}"),
            None => int.to_string(),
        };
        let raw = format!("{digits}{unit}");
        let m = parse_number_token(&raw, 1);
        prop_assert_eq!(m.len(), 1);
        prop_assert_eq!(m[0].value, digits.parse::<f64>().unwrap());
        prop_assert_eq!(m[0].raw.as_str(), raw.as_str());
        let hint = if unit.is_empty() { None } else { Some(unit.clone()) };
        prop_assert_eq!(m[0].unit_hint.clone(), hint);
    }
}

const UPOS: [&str; 7] = ["NOUN", "VERB", "ADJ", "PROPN", "ADP", "DET", "NUM"];
const RELS: [&str; 7] = ["nsubj", "obj", "obl", "conj", "compound", "amod", "case"];

/// Random tree: token i+1 attaches to a random earlier token or the root.
fn random_sentence(seed: u64, n: usize) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for i in 1..=n {
        let head = if i == 1 { 0 } else { rng.random_range(0..i) };
        let rel = if head == 0 { "root" } else { RELS[rng.random_range(0..RELS.len())] };
        let upos = UPOS[rng.random_range(0..UPOS.len())];
        text.push_str(&format!("{i}\tw{i}\tw{i}\t{upos}\t_\t_\t{head}\t{rel}\t_\t_\n"));
    }
    parse_conllu(&text).unwrap().remove(0).sentences.remove(0)
}

/// Independent statement of the candidate rule on token indices.
fn oracle_heads(s: &Sentence, num: usize) -> BTreeSet<usize> {
    let ok = |i: usize| ["NOUN", "PROPN", "ADJ", "VERB"].contains(&s.tokens[i - 1].upos.as_str());
    let tok = &s.tokens[num - 1];
    let mut out = BTreeSet::new();
    if tok.head != 0 {
        out.insert(tok.head);
        if tok.deprel.split(':').next() == Some("obl") {
            for t in &s.tokens {
                let base = t.deprel.split(':').next().unwrap();
                if t.head == tok.head && t.index != num && ["nsubj", "obj", "conj"].contains(&base) {
                    out.insert(t.index);
                }
            }
        }
    }
    for t in &s.tokens {
        if t.head == num {
            out.insert(t.index);
        }
    }
    out.into_iter().filter(|&i| i != num && ok(i)).collect()
}

proptest! {
    #[test]
    fn candidates_follow_the_rule(seed in any::<u64>(), n in 2usize..20) {
        let s = random_sentence(seed, n);
        for num in 1..=n {
            let mention = NumberMention {
                value: 1.0,
                unit_hint: None,
                token_index: num,
                raw: "1".into(),
                component: None,
            };
            let set = extract_candidates(&s, &mention);
            let heads: BTreeSet<usize> = set.candidates.iter().map(|c| c.head_token_index).collect();
            prop_assert_eq!(heads, oracle_heads(&s, num));
            for c in &set.candidates {
                prop_assert!(c.start < c.end);
            }
        }
    }
}

// ---------- linking ----------

fn lexicon_from(vectors: &[Vec<f32>]) -> Lexicon {
    let mut lex = Lexicon::new(vectors[0].len()).unwrap();
    for (i, v) in vectors.iter().enumerate() {
        lex.insert(&format!("t{i}"), v.clone()).unwrap();
    }
    lex
}

fn candidate_set(k: usize) -> CandidateSet {
    CandidateSet {
        number: NumberMention {
            value: 1.0,
            unit_hint: None,
            token_index: 99,
            raw: "1".into(),
            component: None,
        },
        candidates: (0..k)
            .map(|i| Candidate {
                phrase: format!("t{i}"),
                head_token_index: i + 1,
                relation_path: "head".into(),
                start: 0,
                end: 1,
            })
            .collect(),
    }
}

fn vecs(dim: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, dim), count)
        .prop_filter("nonzero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
}

proptest! {
    #[test]
    fn cosine_ignores_positive_scaling(vs in vecs(6, 2), a in 0.01f32..100.0, b in 0.01f32..100.0) {
        let x = EmbeddingVector(vs[0].clone());
        let y = EmbeddingVector(vs[1].clone());
        let xs = EmbeddingVector(vs[0].iter().map(|v| v * a).collect());
        let ys = EmbeddingVector(vs[1].iter().map(|v| v * b).collect());
        let c = x.cosine(&y).unwrap();
        prop_assert!((c - xs.cosine(&ys).unwrap()).abs() < 1e-5);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
    }

    #[test]
    fn lowering_threshold_keeps_links(vs in vecs(4, 6), refs in vecs(4, 3), t in 0.05f64..1.0, dt in 0.0f64..0.5) {
        let lex = lexicon_from(&vs);
        let entities: EntityEmbeddings = refs.iter().enumerate().map(|(i, v)| (i as u32, EmbeddingVector(v.clone()))).collect();
        let set = candidate_set(vs.len());
        let hi = link(&set, &entities, &lex, t);
        let lo = link(&set, &entities, &lex, (t - dt).max(1e-6));
        if let Some(h) = hi {
            let l = lo.expect("a link at a higher threshold survives a lower one");
            prop_assert_eq!((l.entity_id, l.candidate.head_token_index), (h.entity_id, h.candidate.head_token_index));
            prop_assert!(h.score >= t);
        }
    }
}

// ---------- assignment ----------

proptest! {
    #[test]
    fn assignment_agrees_with_comparisons(seed in any::<u64>(), n in 1usize..5, v in 0.0f64..600.0) {
        let kb = random_kb(seed, n);
        for r in &kb.ranges {
            let t = kb.triples.iter().find(|t| t.entity_id == r.entity_id).unwrap();
            let (id, pol) = if v < r.lower {
                (t.below_hpo.clone(), Polarity::Affirmed)
            } else if v > r.upper {
                (t.above_hpo.clone(), Polarity::Affirmed)
            } else {
                (t.normal_hpo.clone(), Polarity::Negated)
            };
            let id = kb
                .granular_bands
                .iter()
                .find(|b| pol == Polarity::Affirmed && b.primary_hpo == id && b.unit == r.unit && b.lower <= v && v <= b.upper)
                .map(|b| b.granular_hpo.clone())
                .unwrap_or(id);
            let got = assign_hpo(r.entity_id, v, &r.unit, &kb).unwrap();
            prop_assert_eq!((got.hpo_id, got.polarity), (id, pol));
        }
    }
}
