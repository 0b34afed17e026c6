//! Molecular graphs over a restricted SMILES subset.
//!
//! A [`Molecule`] is an immutable, connected, attributed graph. Hydrogens are
//! implicit: bracket atoms carry an explicit count, bare organic-subset atoms
//! get theirs from the valence model in [`valence`].

mod canon;
mod parse;
mod valence;
mod write;

pub use canon::canonical_smiles;
pub use parse::{parse_smiles, SmilesError};
pub use valence::ValenceError;
pub use write::write_smiles;

use std::fmt;

/// Supported elements, plus the `*` attachment pseudo-atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Wildcard,
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::Wildcard => "*",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Some(match symbol {
            "*" => Element::Wildcard,
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    /// Elements allowed to be written in lowercase aromatic form.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count given inside brackets; `None` for bare atoms.
    pub explicit_h: Option<u8>,
    /// Atom-map number, 0 when unmapped.
    pub map_number: u16,
}

impl Atom {
    pub fn bare(element: Element, aromatic: bool) -> Atom {
        Atom {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: None,
            map_number: 0,
        }
    }

    pub fn wildcard(map_number: u16) -> Atom {
        Atom {
            element: Element::Wildcard,
            aromatic: false,
            formal_charge: 0,
            explicit_h: Some(0),
            map_number,
        }
    }

    pub fn is_wildcard(&self) -> bool {
        self.element == Element::Wildcard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count as 1.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// Structural problems detected while assembling a [`Molecule`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("bond {0} references an atom outside the atom table")]
    BondOutOfRange(usize),
    #[error("bond {0} joins an atom to itself")]
    SelfBond(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("aromatic bond between non-aromatic atoms {0} and {1}")]
    AromaticBondMismatch(usize, usize),
    #[error("aromatic atom {0} is not part of a ring")]
    AromaticOutsideRing(usize),
    #[error("atom {0}: {1}")]
    InvalidAtom(usize, &'static str),
    #[error("molecule is empty")]
    Empty,
    #[error("molecule is not connected")]
    Disconnected,
    #[error(transparent)]
    Valence(#[from] ValenceError),
}

/// An immutable molecular graph with computed ring flags and hydrogen counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    hydrogens: Vec<u8>,
}

impl Molecule {
    /// Assembles a molecule, perceiving rings and computing implicit
    /// hydrogens. Aromatic bonds that turn out not to lie in a ring are
    /// demoted to single bonds (the inter-ring bond in `c1ccccc1c1ccccc1`).
    pub fn from_parts(atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Result<Molecule, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.is_wildcard() {
                if atom.map_number == 0 {
                    return Err(GraphError::InvalidAtom(i, "wildcard without a map number"));
                }
                if atom.aromatic || atom.formal_charge != 0 {
                    return Err(GraphError::InvalidAtom(i, "wildcard with attributes"));
                }
            } else if atom.aromatic && !atom.element.can_be_aromatic() {
                return Err(GraphError::InvalidAtom(i, "element cannot be aromatic"));
            }
            if !(-2..=2).contains(&atom.formal_charge) {
                return Err(GraphError::InvalidAtom(i, "formal charge outside [-2, 2]"));
            }
        }

        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            if bond.begin >= atoms.len() || bond.end >= atoms.len() {
                return Err(GraphError::BondOutOfRange(i));
            }
            if bond.begin == bond.end {
                return Err(GraphError::SelfBond(i));
            }
            if adjacency[bond.begin]
                .iter()
                .any(|&(nbr, _)| nbr == bond.end)
            {
                return Err(GraphError::DuplicateBond(bond.begin, bond.end));
            }
            if bond.order == BondOrder::Aromatic
                && !(atoms[bond.begin].aromatic && atoms[bond.end].aromatic)
            {
                return Err(GraphError::AromaticBondMismatch(bond.begin, bond.end));
            }
            adjacency[bond.begin].push((bond.end, i));
            adjacency[bond.end].push((bond.begin, i));
        }

        let bridges = find_bridges(atoms.len(), &bonds, &adjacency);
        for (i, bond) in bonds.iter_mut().enumerate() {
            bond.in_ring = !bridges[i];
            if !bond.in_ring && bond.order == BondOrder::Aromatic {
                bond.order = BondOrder::Single;
            }
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.aromatic && !adjacency[i].iter().any(|&(_, b)| bonds[b].in_ring) {
                return Err(GraphError::AromaticOutsideRing(i));
            }
        }

        let mut hydrogens = Vec::with_capacity(atoms.len());
        for (i, atom) in atoms.iter().enumerate() {
            let bond_sum: u8 = adjacency[i].iter().map(|&(_, b)| bonds[b].order.valence()).sum();
            hydrogens.push(valence::hydrogen_count(i, atom, bond_sum)?);
        }

        let mol = Molecule {
            atoms,
            bonds,
            adjacency,
            hydrogens,
        };
        if !mol.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(mol)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, index: usize) -> &Atom {
        &self.atoms[index]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, index: usize) -> &Bond {
        &self.bonds[index]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbor atom, bond index)` pairs in insertion order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Total hydrogens on an atom, implicit or bracketed.
    pub fn hydrogen_count(&self, atom: usize) -> u8 {
        self.hydrogens[atom]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(nbr, _)| nbr == b)
            .map(|&(_, bond)| bond)
    }

    /// Number of non-wildcard atoms.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| !a.is_wildcard()).count()
    }

    pub fn wildcard_atoms(&self) -> Vec<usize> {
        (0..self.atoms.len())
            .filter(|&i| self.atoms[i].is_wildcard())
            .collect()
    }

    /// Number of independent rings (cyclomatic number).
    pub fn ring_count(&self) -> usize {
        self.bonds.len() + 1 - self.atoms.len()
    }

    /// Returns the same graph with atom `i` moved to position `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Molecule {
        assert_eq!(order.len(), self.atoms.len(), "permutation length mismatch");
        let mut atoms = vec![self.atoms[0]; self.atoms.len()];
        for (old, &new) in order.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                begin: order[b.begin],
                end: order[b.end],
                order: b.order,
                in_ring: false,
            })
            .collect();
        Molecule::from_parts(atoms, bonds).expect("permutation preserves validity")
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = stack.pop() {
            for &(nbr, _) in &self.adjacency[a] {
                if !seen[nbr] {
                    seen[nbr] = true;
                    count += 1;
                    stack.push(nbr);
                }
            }
        }
        count == self.atoms.len()
    }
}

/// Marks every bond whose removal disconnects the graph.
fn find_bridges(n: usize, bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<bool> {
    let mut is_bridge = vec![false; bonds.len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (atom, parent bond, next neighbor slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.last_mut() {
            let (atom, parent_bond, slot) = *top;
            if slot < adjacency[atom].len() {
                top.2 += 1;
                let (nbr, bond) = adjacency[atom][slot];
                if bond == parent_bond {
                    continue;
                }
                if disc[nbr] == usize::MAX {
                    disc[nbr] = timer;
                    low[nbr] = timer;
                    timer += 1;
                    stack.push((nbr, bond, 0));
                } else {
                    low[atom] = low[atom].min(disc[nbr]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[atom]);
                    if low[atom] > disc[parent] {
                        is_bridge[parent_bond] = true;
                    }
                }
            }
        }
    }
    is_bridge
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_flags_and_counts() {
        let mol = parse_smiles("OCCc1ccccc1").unwrap();
        assert_eq!(mol.heavy_atom_count(), 9);
        assert_eq!(mol.ring_count(), 1);
        let ring_bonds = mol.bonds().iter().filter(|b| b.in_ring).count();
        assert_eq!(ring_bonds, 6);
    }

    #[test]
    fn biphenyl_link_is_demoted_to_single() {
        let mol = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        let link = mol.bond_between(5, 6).unwrap();
        assert_eq!(mol.bond(link).order, BondOrder::Single);
        assert!(!mol.bond(link).in_ring);
    }

    #[test]
    fn aromatic_atom_outside_ring_rejected() {
        assert!(parse_smiles("Ccc").is_err());
    }

    #[test]
    fn permutation_keeps_structure() {
        let mol = parse_smiles("CC(=O)Nc1ccccc1").unwrap();
        let n = mol.atom_count();
        let order: Vec<usize> = (0..n).rev().collect();
        let p = mol.permuted(&order);
        assert_eq!(p.heavy_atom_count(), mol.heavy_atom_count());
        assert_eq!(canonical_smiles(&p), canonical_smiles(&mol));
    }
}
