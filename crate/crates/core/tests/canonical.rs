//! Canonical SMILES on the bundled corpus: idempotence and invariance under
//! atom relabeling.

use std::time::{Duration, Instant};

use mmpt::corpus::bundled_toy_corpus;
use mmpt::molgraph::{canonical_smiles, parse_smiles, write_smiles};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn corpus_is_large_and_drug_sized() {
    let corpus = bundled_toy_corpus();
    assert!(corpus.records.len() >= 1000, "{} molecules", corpus.records.len());
    assert!(corpus.rejected.is_empty(), "{:?}", corpus.rejected);
    for m in corpus.molecules() {
        assert!(m.heavy_atom_count() <= 60);
    }
}

#[test]
fn canonicalization_is_idempotent() {
    for m in bundled_toy_corpus().molecules() {
        let once = canonical_smiles(&m);
        let twice = canonical_smiles(&parse_smiles(&once).unwrap());
        assert_eq!(once, twice);
    }
}

#[test]
fn canonicalization_ignores_atom_order() {
    let start = Instant::now();
    let mols = bundled_toy_corpus().molecules();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let m = &mols[rng.gen_range(0..mols.len())];
        let mut order: Vec<usize> = (0..m.atom_count()).collect();
        order.shuffle(&mut rng);
        let permuted = m.permuted(&order);
        assert_eq!(canonical_smiles(&permuted), canonical_smiles(m));
        // a non-canonical spelling of the relabeled graph parses back to the same molecule
        let respelled = parse_smiles(&write_smiles(&permuted)).unwrap();
        assert_eq!(canonical_smiles(&respelled), canonical_smiles(m));
    }
    assert!(start.elapsed() < Duration::from_secs(10), "{:?}", start.elapsed());
}

#[test]
fn known_spellings_agree() {
    for group in [
        ["OCC", "C(O)C", "CCO"],
        ["c1ccccc1O", "Oc1ccccc1", "c1cc(O)ccc1"],
        ["CC(=O)Nc1ccc(O)cc1", "Oc1ccc(NC(C)=O)cc1", "c1cc(ccc1NC(=O)C)O"],
        ["C1CCNCC1", "N1CCCCC1", "C1CNCCC1"],
    ] {
        let want = canonical_smiles(&parse_smiles(group[0]).unwrap());
        for s in group {
            assert_eq!(canonical_smiles(&parse_smiles(s).unwrap()), want, "{s}");
        }
    }
}
