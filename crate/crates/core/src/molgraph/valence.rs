use super::{Atom, Element};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("atom {atom} ({element}) exceeds its allowed valence with bond order sum {bond_sum}")]
pub struct ValenceError {
    pub atom: usize,
    pub element: Element,
    pub bond_sum: u8,
}

/// Allowed valence states, lowest (default) first.
fn allowed_valences(element: Element) -> &'static [u8] {
    match element {
        Element::Wildcard => &[1],
        Element::B => &[3],
        Element::C => &[4],
        Element::N => &[3, 5],
        Element::O => &[2],
        Element::P => &[3, 5],
        Element::S => &[2, 4, 6],
        Element::F | Element::Cl | Element::Br | Element::I => &[1],
    }
}

/// Implicit hydrogen count of a bare (unbracketed, uncharged) atom, or
/// `None` when no valence state accommodates the bonds.
///
/// Aromatic atoms use the default valence only: one slot goes to the shared
/// pi system when available; otherwise the atom donates a lone pair (furan
/// oxygen, pyrrole-type nitrogen with three connections) and carries no H.
pub(crate) fn bare_hydrogens(element: Element, aromatic: bool, bond_sum: u8) -> Option<u8> {
    let valences = allowed_valences(element);
    if aromatic {
        let default = valences[0];
        if default > bond_sum {
            Some(default - bond_sum - 1)
        } else if default == bond_sum {
            Some(0)
        } else {
            None
        }
    } else {
        valences
            .iter()
            .find(|&&v| v >= bond_sum)
            .map(|&v| v - bond_sum)
    }
}

/// Highest total valence a bracket atom may reach given its charge.
fn max_valence(element: Element, charge: i8) -> u8 {
    let base = *allowed_valences(element).last().expect("non-empty");
    (base as i16 + charge.unsigned_abs() as i16) as u8
}

pub(crate) fn hydrogen_count(index: usize, atom: &Atom, bond_sum: u8) -> Result<u8, ValenceError> {
    let err = ValenceError {
        atom: index,
        element: atom.element,
        bond_sum,
    };
    if atom.is_wildcard() {
        return Ok(0);
    }
    match atom.explicit_h {
        None => bare_hydrogens(atom.element, atom.aromatic, bond_sum).ok_or(err),
        Some(h) => {
            let used = bond_sum as u16 + h as u16;
            if used > max_valence(atom.element, atom.formal_charge) as u16 {
                Err(err)
            } else {
                Ok(h)
            }
        }
    }
}
