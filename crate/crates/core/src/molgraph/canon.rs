//! Canonical SMILES.
//!
//! Atoms are ranked by local invariants, refined by neighbor ranks until the
//! partition is stable. Remaining ties are broken by trying each member of the
//! first tied class and keeping the lexicographically smallest output string.
//! Tied atoms that are twins (same neighbors through the same bond orders) are
//! interchangeable by an automorphism, so only one of them is explored.

use super::write::write_ranked;
use super::Molecule;

pub fn canonical_smiles(mol: &Molecule) -> String {
    let initial = initial_ranks(mol);
    let ranks = refine(mol, initial);
    let mut best: Option<String> = None;
    search(mol, ranks, &mut best);
    best.expect("at least one leaf")
}

fn initial_ranks(mol: &Molecule) -> Vec<usize> {
    let keys: Vec<_> = (0..mol.atom_count())
        .map(|i| {
            let atom = mol.atom(i);
            (
                !atom.is_wildcard(),
                atom.map_number,
                mol.degree(i),
                atom.element,
                atom.aromatic,
                atom.formal_charge,
                mol.hydrogen_count(i),
            )
        })
        .collect();
    dense_ranks(&keys)
}

/// Replaces each key by its position among the sorted distinct keys.
fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().max().map_or(0, |&m| m + 1)
}

fn refine(mol: &Molecule, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atom_count())
            .map(|a| {
                let mut env: Vec<(usize, u8)> = mol
                    .neighbors(a)
                    .iter()
                    .map(|&(nbr, b)| (ranks[nbr], mol.bond(b).order as u8))
                    .collect();
                env.sort_unstable();
                (ranks[a], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = class_count(&next);
        if next_classes == classes {
            return next;
        }
        ranks = next;
        classes = next_classes;
    }
}

fn are_twins(mol: &Molecule, a: usize, b: usize) -> bool {
    let env = |x: usize, skip: usize| {
        let mut v: Vec<(usize, u8)> = mol
            .neighbors(x)
            .iter()
            .filter(|&&(nbr, _)| nbr != skip)
            .map(|&(nbr, bond)| (nbr, mol.bond(bond).order as u8))
            .collect();
        v.sort_unstable();
        v
    };
    env(a, b) == env(b, a)
}

fn search(mol: &Molecule, ranks: Vec<usize>, best: &mut Option<String>) {
    let n = ranks.len();
    let classes = class_count(&ranks);
    if classes == n {
        let s = write_ranked(mol, &ranks);
        if best.as_ref().is_none_or(|b| s < *b) {
            *best = Some(s);
        }
        return;
    }
    let mut sizes = vec![0usize; classes];
    for &r in &ranks {
        sizes[r] += 1;
    }
    let tied = (0..classes).find(|&c| sizes[c] > 1).expect("some class is tied");
    let members: Vec<usize> = (0..n).filter(|&a| ranks[a] == tied).collect();

    let mut explored: Vec<usize> = Vec::new();
    for &chosen in &members {
        if explored.iter().any(|&e| are_twins(mol, e, chosen)) {
            continue;
        }
        explored.push(chosen);
        let keys: Vec<(usize, bool)> = (0..n).map(|a| (ranks[a], a != chosen)).collect();
        let split = refine(mol, dense_ranks(&keys));
        search(mol, split, best);
    }
}
