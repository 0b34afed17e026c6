use std::fmt::Write as _;

use super::valence::bare_hydrogens;
use super::{BondOrder, Molecule};

/// Writes a SMILES string following the atom table order: traversal starts
/// at atom 0 and prefers lower-indexed neighbors.
pub fn write_smiles(mol: &Molecule) -> String {
    let ranks: Vec<usize> = (0..mol.atom_count()).collect();
    write_ranked(mol, &ranks)
}

/// Writes SMILES with traversal driven by `ranks`: the lowest-ranked atom
/// starts the string and branches are visited in ascending rank. Identical
/// ranks on isomorphic graphs yield identical strings.
pub(crate) fn write_ranked(mol: &Molecule, ranks: &[usize]) -> String {
    let n = mol.atom_count();
    let start = (0..n).min_by_key(|&a| ranks[a]).expect("non-empty molecule");

    // Spanning tree by DFS; non-tree bonds become ring closures.
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ring_bonds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tree_bond = vec![false; mol.bonds().len()];
    let mut order = Vec::with_capacity(n);
    dfs(mol, ranks, start, &mut visited, &mut children, &mut tree_bond, &mut order);
    for (b, bond) in mol.bonds().iter().enumerate() {
        if !tree_bond[b] {
            ring_bonds[bond.begin].push(b);
            ring_bonds[bond.end].push(b);
        }
    }
    let mut position = vec![0; n];
    for (i, &a) in order.iter().enumerate() {
        position[a] = i;
    }
    // Closures first (in the order their openings were written), then openings
    // by the rank of the far atom.
    for (a, list) in ring_bonds.iter_mut().enumerate() {
        list.sort_by_key(|&b| {
            let other = mol.bond(b).other(a);
            let opens_here = position[other] > position[a];
            (opens_here, if opens_here { ranks[other] } else { position[other] }, b)
        });
    }

    let mut out = String::with_capacity(n * 2);
    let mut ring_digits: Vec<Option<usize>> = vec![None; mol.bonds().len()];
    let mut free_digits: Vec<bool> = vec![true; 100];
    emit(
        mol,
        start,
        None,
        &children,
        &ring_bonds,
        &position,
        &mut ring_digits,
        &mut free_digits,
        &mut out,
    );
    out
}

fn dfs(
    mol: &Molecule,
    ranks: &[usize],
    atom: usize,
    visited: &mut [bool],
    children: &mut [Vec<usize>],
    tree_bond: &mut [bool],
    order: &mut Vec<usize>,
) {
    visited[atom] = true;
    order.push(atom);
    let mut nbrs: Vec<(usize, usize)> = mol.neighbors(atom).to_vec();
    nbrs.sort_by_key(|&(nbr, _)| ranks[nbr]);
    for (nbr, bond) in nbrs {
        if !visited[nbr] {
            tree_bond[bond] = true;
            children[atom].push(nbr);
            dfs(mol, ranks, nbr, visited, children, tree_bond, order);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    atom: usize,
    parent: Option<usize>,
    children: &[Vec<usize>],
    ring_bonds: &[Vec<usize>],
    position: &[usize],
    ring_digits: &mut [Option<usize>],
    free_digits: &mut [bool],
    out: &mut String,
) {
    if let Some(p) = parent {
        let bond = mol.bond_between(p, atom).expect("tree edge");
        out.push_str(bond_symbol(mol, bond));
    }
    write_atom(mol, atom, out);
    for &b in &ring_bonds[atom] {
        let other = mol.bond(b).other(atom);
        if position[other] < position[atom] {
            let digit = ring_digits[b].take().expect("opened earlier");
            free_digits[digit] = true;
            write_digit(digit, out);
        } else {
            let digit = free_digits
                .iter()
                .skip(1)
                .position(|&f| f)
                .map(|d| d + 1)
                .expect("fewer than 100 open rings");
            free_digits[digit] = false;
            ring_digits[b] = Some(digit);
            out.push_str(bond_symbol(mol, b));
            write_digit(digit, out);
        }
    }
    let kids = &children[atom];
    for (i, &child) in kids.iter().enumerate() {
        let branch = i + 1 < kids.len();
        if branch {
            out.push('(');
        }
        emit(
            mol,
            child,
            Some(atom),
            children,
            ring_bonds,
            position,
            ring_digits,
            free_digits,
            out,
        );
        if branch {
            out.push(')');
        }
    }
}

fn write_digit(digit: usize, out: &mut String) {
    if digit < 10 {
        out.push(char::from(b'0' + digit as u8));
    } else {
        let _ = write!(out, "%{digit:02}");
    }
}

fn bond_symbol(mol: &Molecule, bond: usize) -> &'static str {
    let b = mol.bond(bond);
    let both_aromatic = mol.atom(b.begin).aromatic && mol.atom(b.end).aromatic;
    match b.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

fn write_atom(mol: &Molecule, index: usize, out: &mut String) {
    let atom = mol.atom(index);
    let hydrogens = mol.hydrogen_count(index);
    let symbol = atom.element.symbol();
    if atom.is_wildcard() {
        let _ = write!(out, "[*:{}]", atom.map_number);
        return;
    }
    let bond_sum: u8 = mol
        .neighbors(index)
        .iter()
        .map(|&(_, b)| mol.bond(b).order.valence())
        .sum();
    let bare = atom.formal_charge == 0
        && atom.map_number == 0
        && bare_hydrogens(atom.element, atom.aromatic, bond_sum) == Some(hydrogens);
    if bare {
        if atom.aromatic {
            out.push_str(&symbol.to_ascii_lowercase());
        } else {
            out.push_str(symbol);
        }
        return;
    }
    out.push('[');
    if atom.aromatic {
        out.push_str(&symbol.to_ascii_lowercase());
    } else {
        out.push_str(symbol);
    }
    match hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    if atom.map_number > 0 {
        let _ = write!(out, ":{}", atom.map_number);
    }
    out.push(']');
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    #[test]
    fn single_carbon() {
        assert_eq!(write_smiles(&parse_smiles("C").unwrap()), "C");
    }

    #[test]
    fn writes_in_table_order() {
        for text in [
            "OCC",
            "c1ccccc1O",
            "CC(=O)Nc1ccc(O)cc1",
            "[*:1]c1ccc(O)c(O)c1",
            "O=[N+]([O-])c1ccccc1",
            "c1ccccc1-c1ccccc1",
            "C1CC2CCC1CC2",
            "c1cc[nH]c1",
        ] {
            let mol = parse_smiles(text).unwrap();
            let written = write_smiles(&mol);
            assert_eq!(written, text, "round trip of {text}");
        }
    }
}
