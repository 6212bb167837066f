//! Parser robustness and document round trips.

use std::path::PathBuf;

use proptest::prelude::*;
use qcf_core::classical::random_psm;
use qcf_core::format::{parse_model, parse_query, ModelDocument, PsmDoc, QsmDoc};
use qcf_core::qsm::marginal_process;
use qcf_core::random::random_qsm;
use qcf_core::tensor::Tolerance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundled(dir: &str) -> Vec<String> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(dir);
    let mut files: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.into_iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

/// Delete, replace or insert one character at a char boundary.
fn mutate(text: &str, pos: usize, op: u8, c: char) -> String {
    let chars: Vec<char> = text.chars().collect();
    let pos = pos % (chars.len() + 1);
    let mut out: Vec<char> = chars.clone();
    match op % 3 {
        0 if pos < out.len() => {
            out.remove(pos);
        }
        1 if pos < out.len() => out[pos] = c,
        _ => out.insert(pos, c),
    }
    out.into_iter().collect()
}

fn exercise_model(text: &str) {
    if let Ok(doc) = parse_model(text) {
        match doc {
            ModelDocument::Qsm(d) => {
                let _ = d.build(&Tolerance::default());
            }
            ModelDocument::Psm(d) => {
                let _ = d.build();
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        exercise_model(&text);
        let _ = parse_query(&text);
    }

    #[test]
    fn token_soup_never_panics(words in prop::collection::vec(
        prop::sample::select(vec![
            "qsm", "psm", "node", "in", "out", "edge", "->", "exogenous", "for", "dim", "{", "}", "[", "]",
            ";", ",", ":", "outcome", "prob", "state", "ket", "matrix", "identity", "projector", "of", "sink",
            "factor", "circuit", "wire", "regroup", "gate", "instrument", "basis", "element", "prepare",
            "effect", "do", "choi", "variable", "values", "parents", "prior", "table", "joint", "A", "B",
            "\"0\"", "\"1\"", "2", "0.5", "1", "-1", "1e400", "#", "\n",
        ]),
        0..60,
    )) {
        let text = words.join(" ");
        exercise_model(&text);
        let _ = parse_query(&text);
    }

    #[test]
    fn mutated_models_never_panic(file in 0usize..16, pos in 0usize..4000, op in 0u8..3, c in any::<char>()) {
        let models = bundled("models");
        let text = &models[file % models.len()];
        exercise_model(&mutate(text, pos, op, c));
    }

    #[test]
    fn mutated_queries_never_panic(file in 0usize..16, pos in 0usize..600, op in 0u8..3, c in any::<char>()) {
        let queries = bundled("queries");
        let text = &queries[file % queries.len()];
        let _ = parse_query(&mutate(text, pos, op, c));
    }

    #[test]
    fn psm_documents_round_trip(seed in any::<u64>(), n in 1usize..=4, card in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psm = random_psm(&mut rng, n, card, 1..=3);
        let doc = PsmDoc::from_psm("random", &psm);
        let text = doc.to_text();
        let back = match parse_model(&text).unwrap() {
            ModelDocument::Psm(d) => d,
            ModelDocument::Qsm(_) => panic!("parsed as a quantum model"),
        };
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back.build().unwrap(), psm);
    }

    #[test]
    fn qsm_documents_round_trip(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_qsm(&mut rng, n, 0.6);
        let doc = QsmDoc::from_qsm(&q);
        let text = doc.to_text();
        let back = match parse_model(&text).unwrap() {
            ModelDocument::Qsm(d) => d,
            ModelDocument::Psm(_) => panic!("parsed as a classical model"),
        };
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_text(), text);
        let built = back.build(&Tolerance::default()).unwrap();
        let d = marginal_process(&built).unwrap().distance(&marginal_process(&q).unwrap()).unwrap();
        prop_assert!(d <= 1e-12, "marginal process moved by {}", d);
    }
}
