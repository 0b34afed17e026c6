//! Single-cut fragmentation into a core and an R-group.

use crate::molgraph::{Atom, Bond, BondOrder, GraphError, Molecule};

/// Heavy-atom limits applied to every candidate cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentationConstraints {
    /// Inclusive upper bound on core heavy atoms.
    pub max_core_heavy: usize,
    /// Inclusive upper bound on R-group heavy atoms.
    pub max_rgroup_heavy: usize,
    /// Strict upper bound on R-group heavy atoms / parent heavy atoms.
    pub max_rgroup_ratio: f64,
}

impl Default for FragmentationConstraints {
    fn default() -> Self {
        FragmentationConstraints {
            max_core_heavy: 50,
            max_rgroup_heavy: 13,
            max_rgroup_ratio: 0.33,
        }
    }
}

impl FragmentationConstraints {
    /// Bounds that accept every cut.
    pub fn permissive() -> Self {
        FragmentationConstraints {
            max_core_heavy: usize::MAX,
            max_rgroup_heavy: usize::MAX,
            max_rgroup_ratio: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_core_heavy == 0 || self.max_rgroup_heavy == 0 {
            return Err("heavy-atom bounds must be positive".into());
        }
        let ratio_ok = self.max_rgroup_ratio.is_infinite()
            || (self.max_rgroup_ratio > 0.0 && self.max_rgroup_ratio < 1.0);
        if !ratio_ok {
            return Err(format!(
                "R-group ratio bound {} must lie in (0, 1)",
                self.max_rgroup_ratio
            ));
        }
        Ok(())
    }

    pub fn admits(&self, core_heavy: usize, rgroup_heavy: usize, parent_heavy: usize) -> bool {
        core_heavy <= self.max_core_heavy
            && rgroup_heavy <= self.max_rgroup_heavy
            && (rgroup_heavy as f64) / (parent_heavy as f64) < self.max_rgroup_ratio
    }
}

/// Identifies a cut: the parent bond and which of its endpoints lies on the
/// R-group side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CutSite {
    pub bond: usize,
    pub rgroup_atom: usize,
}

#[derive(Debug, Clone)]
pub struct Fragmentation {
    pub core: Molecule,
    pub rgroup: Molecule,
    pub site: CutSite,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReattachError {
    #[error("{side} must contain exactly one [*:1] bonded to one heavy atom")]
    Arity { side: &'static str },
    #[error("attachment bond on {side} is not a single bond")]
    AttachmentOrder { side: &'static str },
    #[error("reattached molecule is invalid: {0}")]
    Valence(GraphError),
}

/// Bonds eligible for cutting: acyclic, single, between two heavy atoms.
pub fn cuttable_bonds(mol: &Molecule) -> impl Iterator<Item = usize> + '_ {
    mol.bonds().iter().enumerate().filter_map(|(i, b)| {
        let heavy = !mol.atom(b.begin).is_wildcard() && !mol.atom(b.end).is_wildcard();
        (heavy && !b.in_ring && b.order == BondOrder::Single).then_some(i)
    })
}

/// Atoms reachable from `start` without crossing `skip_bond`.
fn side_of(mol: &Molecule, start: usize, skip_bond: usize) -> Vec<bool> {
    let mut seen = vec![false; mol.atom_count()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(a) = stack.pop() {
        for &(nbr, bond) in mol.neighbors(a) {
            if bond != skip_bond && !seen[nbr] {
                seen[nbr] = true;
                stack.push(nbr);
            }
        }
    }
    seen
}

/// Copies the atoms in `keep` into a new molecule with `[*:1]` bonded to
/// `attach`.
fn extract(mol: &Molecule, keep: &[bool], attach: usize) -> Molecule {
    let mut remap = vec![usize::MAX; mol.atom_count()];
    let mut atoms = Vec::new();
    for (i, &k) in keep.iter().enumerate() {
        if k {
            remap[i] = atoms.len();
            atoms.push(*mol.atom(i));
        }
    }
    let mut bonds: Vec<Bond> = mol
        .bonds()
        .iter()
        .filter(|b| keep[b.begin] && keep[b.end])
        .map(|b| Bond {
            begin: remap[b.begin],
            end: remap[b.end],
            order: b.order,
            in_ring: false,
        })
        .collect();
    let star = atoms.len();
    atoms.push(Atom::wildcard(1));
    bonds.push(Bond {
        begin: remap[attach],
        end: star,
        order: BondOrder::Single,
        in_ring: false,
    });
    Molecule::from_parts(atoms, bonds).expect("cutting a single bond keeps both sides valid")
}

/// Splits `mol` at `site` without applying any constraints.
pub fn cut_at(mol: &Molecule, site: CutSite) -> Fragmentation {
    let bond = mol.bond(site.bond);
    let core_atom = bond.other(site.rgroup_atom);
    let rgroup_side = side_of(mol, site.rgroup_atom, site.bond);
    let core_side: Vec<bool> = rgroup_side.iter().map(|&r| !r).collect();
    Fragmentation {
        core: extract(mol, &core_side, core_atom),
        rgroup: extract(mol, &rgroup_side, site.rgroup_atom),
        site,
    }
}

/// Enumerates every admissible single-cut fragmentation, ordered by cut
/// bond index and then by orientation (R-group on the bond's `end` side
/// first, then on its `begin` side).
pub fn enumerate_cuts(mol: &Molecule, constraints: &FragmentationConstraints) -> Vec<Fragmentation> {
    let parent_heavy = mol.heavy_atom_count();
    let mut out = Vec::new();
    if parent_heavy < 2 {
        return out;
    }
    let heavy_on = |side: &[bool]| {
        side.iter()
            .enumerate()
            .filter(|&(i, &s)| s && !mol.atom(i).is_wildcard())
            .count()
    };
    for b in cuttable_bonds(mol) {
        let bond = *mol.bond(b);
        let end_side = side_of(mol, bond.end, b);
        let end_heavy = heavy_on(&end_side);
        for (rgroup_atom, rgroup_heavy) in [
            (bond.end, end_heavy),
            (bond.begin, parent_heavy - end_heavy),
        ] {
            let core_heavy = parent_heavy - rgroup_heavy;
            if constraints.admits(core_heavy, rgroup_heavy, parent_heavy) {
                out.push(cut_at(
                    mol,
                    CutSite {
                        bond: b,
                        rgroup_atom,
                    },
                ));
            }
        }
    }
    out
}

fn attachment(mol: &Molecule, side: &'static str) -> Result<(usize, usize), ReattachError> {
    let stars = mol.wildcard_atoms();
    let [star] = stars[..] else {
        return Err(ReattachError::Arity { side });
    };
    if mol.atom(star).map_number != 1 {
        return Err(ReattachError::Arity { side });
    }
    let [(nbr, bond)] = mol.neighbors(star)[..] else {
        return Err(ReattachError::Arity { side });
    };
    if mol.atom(nbr).is_wildcard() {
        return Err(ReattachError::Arity { side });
    }
    if mol.bond(bond).order != BondOrder::Single {
        return Err(ReattachError::AttachmentOrder { side });
    }
    Ok((star, nbr))
}

/// Joins two fragments at their `[*:1]` attachment points with a single
/// bond. The returned molecule lists core atoms first, then R-group atoms;
/// the joining bond is the last bond.
pub fn reattach(core: &Molecule, rgroup: &Molecule) -> Result<Molecule, ReattachError> {
    let (core_star, core_atom) = attachment(core, "core")?;
    let (rg_star, rg_atom) = attachment(rgroup, "R-group")?;

    let mut atoms = Vec::with_capacity(core.atom_count() + rgroup.atom_count() - 2);
    let mut bonds = Vec::new();
    let mut append = |mol: &Molecule, star: usize| -> Vec<usize> {
        let offset = atoms.len();
        let mut remap = vec![usize::MAX; mol.atom_count()];
        for (i, atom) in mol.atoms().iter().enumerate() {
            if i != star {
                remap[i] = atoms.len();
                atoms.push(*atom);
            }
        }
        debug_assert!(remap.iter().filter(|&&r| r != usize::MAX).all(|&r| r >= offset));
        for b in mol.bonds() {
            if b.begin != star && b.end != star {
                bonds.push(Bond {
                    begin: remap[b.begin],
                    end: remap[b.end],
                    order: b.order,
                    in_ring: false,
                });
            }
        }
        remap
    };
    let core_map = append(core, core_star);
    let rg_map = append(rgroup, rg_star);
    bonds.push(Bond {
        begin: core_map[core_atom],
        end: rg_map[rg_atom],
        order: BondOrder::Single,
        in_ring: false,
    });
    Molecule::from_parts(atoms, bonds).map_err(ReattachError::Valence)
}
