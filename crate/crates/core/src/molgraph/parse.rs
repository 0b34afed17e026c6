use std::collections::HashMap;

use super::{Atom, Bond, BondOrder, Element, GraphError, Molecule};

/// Failure to read a SMILES string. Every variant carries the byte offset of
/// the offending character.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported feature at byte {offset}: {feature}")]
    Unsupported { offset: usize, feature: &'static str },
    #[error("invalid structure at byte {offset}: {source}")]
    Structure { offset: usize, source: GraphError },
}

impl SmilesError {
    pub fn offset(&self) -> usize {
        match self {
            SmilesError::Syntax { offset, .. }
            | SmilesError::Unsupported { offset, .. }
            | SmilesError::Structure { offset, .. } => *offset,
        }
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> SmilesError {
    SmilesError::Syntax {
        offset,
        message: message.into(),
    }
}

fn unsupported(offset: usize, feature: &'static str) -> SmilesError {
    SmilesError::Unsupported { offset, feature }
}

struct RingOpening {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bonds: Vec<(usize, usize, Option<BondOrder>, usize)>,
    branches: Vec<(usize, usize)>,
    rings: HashMap<u16, RingOpening>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
}

/// Parses a SMILES string in the supported subset.
///
/// Atom indices follow first appearance in the text. Stereo marks, isotopes
/// and `.`-separated components are rejected as unsupported.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.is_empty() {
        return Err(syntax(0, "empty SMILES"));
    }
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        bonds: Vec::new(),
        branches: Vec::new(),
        rings: HashMap::new(),
        prev: None,
        pending: None,
    };
    parser.run()?;
    parser.finish()
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                b'(' => {
                    let prev = self
                        .prev
                        .ok_or_else(|| syntax(offset, "branch opened before any atom"))?;
                    if self.pending.is_some() {
                        return Err(syntax(offset, "bond symbol before branch"));
                    }
                    self.branches.push((prev, offset));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(syntax(offset, "dangling bond symbol"));
                    }
                    let (atom, _) = self
                        .branches
                        .pop()
                        .ok_or_else(|| syntax(offset, "unbalanced closing parenthesis"))?;
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() {
                        return Err(syntax(offset, "two consecutive bond symbols"));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, offset));
                    self.pos += 1;
                }
                b'/' | b'\\' => return Err(unsupported(offset, "directional bond")),
                b'@' => return Err(unsupported(offset, "chirality")),
                b'.' => return Err(unsupported(offset, "disconnected components")),
                b'$' => return Err(unsupported(offset, "quadruple bond")),
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, offset)?;
                }
                _ => {
                    let atom = self.bare_atom()?;
                    self.add_atom(atom, offset)?;
                }
            }
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<(), SmilesError> {
        let index = self.atoms.len();
        self.atoms.push(atom);
        self.atom_offsets.push(offset);
        match self.prev {
            Some(prev) => {
                let explicit = self.pending.take().map(|(o, _)| o);
                self.bonds.push((prev, index, explicit, offset));
            }
            None => {
                if let Some((_, bond_offset)) = self.pending {
                    return Err(syntax(bond_offset, "bond symbol before any atom"));
                }
            }
        }
        self.prev = Some(index);
        Ok(())
    }

    fn bare_atom(&mut self) -> Result<Atom, SmilesError> {
        let offset = self.pos;
        let c = self.text[self.pos];
        let next = self.text.get(self.pos + 1).copied();
        let (element, aromatic, width) = match (c, next) {
            (b'C', Some(b'l')) => (Element::Cl, false, 2),
            (b'B', Some(b'r')) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            (b'*', _) => return Err(syntax(offset, "wildcard atoms must be written as [*:n]")),
            _ => {
                return Err(syntax(
                    offset,
                    format!("unexpected character '{}'", char::from(c).escape_default()),
                ))
            }
        };
        self.pos += width;
        Ok(Atom::bare(element, aromatic))
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if matches!(self.peek(), Some(b'0'..=b'9')) {
            return Err(unsupported(self.pos, "isotope"));
        }
        let sym_offset = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                (Element::Wildcard, false)
            }
            Some(c @ (b'b' | b'c' | b'n' | b'o' | b'p' | b's')) => {
                self.pos += 1;
                let upper = char::from(c.to_ascii_uppercase()).to_string();
                (Element::from_symbol(&upper).expect("aromatic subset"), true)
            }
            Some(c) if c.is_ascii_uppercase() => {
                self.pos += 1;
                let mut symbol = char::from(c).to_string();
                if let Some(l) = self.peek().filter(u8::is_ascii_lowercase) {
                    let two = format!("{symbol}{}", char::from(l));
                    if Element::from_symbol(&two).is_some() {
                        symbol = two;
                        self.pos += 1;
                    }
                }
                match Element::from_symbol(&symbol) {
                    Some(e) => (e, false),
                    None => return Err(syntax(sym_offset, format!("unknown element '{symbol}'"))),
                }
            }
            None => return Err(syntax(open, "unclosed bracket atom")),
            Some(_) => return Err(syntax(sym_offset, "expected element symbol")),
        };
        if matches!(self.peek(), Some(b'@')) {
            return Err(unsupported(self.pos, "chirality"));
        }
        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = match self.read_number() {
                Some(n) if n <= 4 => n as u8,
                Some(_) => return Err(syntax(self.pos, "hydrogen count too large")),
                None => 1,
            };
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
            if !(-2..=2).contains(&charge) {
                return Err(syntax(sym_offset, "formal charge outside [-2, 2]"));
            }
        }
        let mut map_number = 0u16;
        if self.peek() == Some(b':') {
            self.pos += 1;
            map_number = match self.read_number() {
                Some(n) if n <= u16::MAX as u32 => n as u16,
                _ => return Err(syntax(self.pos, "expected atom-map number")),
            };
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            None => return Err(syntax(open, "unclosed bracket atom")),
            Some(_) => return Err(syntax(self.pos, "unexpected character in bracket atom")),
        }
        if element == Element::Wildcard {
            if map_number == 0 {
                return Err(syntax(open, "wildcard atom requires a map number"));
            }
            if hydrogens != 0 || charge != 0 {
                return Err(syntax(open, "wildcard atom cannot carry hydrogens or charge"));
            }
            return Ok(Atom::wildcard(map_number));
        }
        Ok(Atom {
            element,
            aromatic,
            formal_charge: charge as i8,
            explicit_h: Some(hydrogens),
            map_number,
        })
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let offset = self.pos;
        let number = if self.text[self.pos] == b'%' {
            let digits = self.text.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') * 10 + (d[1] - b'0')) as u16
                }
                _ => return Err(syntax(offset, "'%' must be followed by two digits")),
            }
        } else {
            self.pos += 1;
            (self.text[offset] - b'0') as u16
        };
        let atom = self
            .prev
            .ok_or_else(|| syntax(offset, "ring closure before any atom"))?;
        let explicit = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&number) {
            Some(open) => {
                let order = match (open.order, explicit) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(syntax(offset, "conflicting ring-closure bond orders"))
                    }
                    (a, b) => a.or(b),
                };
                if open.atom == atom {
                    return Err(syntax(offset, "ring closure onto the same atom"));
                }
                self.bonds.push((open.atom, atom, order, offset));
            }
            None => {
                self.rings.insert(
                    number,
                    RingOpening {
                        atom,
                        order: explicit,
                        offset,
                    },
                );
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Molecule, SmilesError> {
        if let Some((_, offset)) = self.pending {
            return Err(syntax(offset, "dangling bond symbol"));
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(syntax(offset, "unclosed parenthesis"));
        }
        if let Some(open) = self.rings.values().min_by_key(|r| r.offset) {
            return Err(syntax(open.offset, "unclosed ring"));
        }
        let mut bonds = Vec::with_capacity(self.bonds.len());
        let mut bond_offsets = Vec::with_capacity(self.bonds.len());
        for &(a, b, explicit, offset) in &self.bonds {
            let order = explicit.unwrap_or(if self.atoms[a].aromatic && self.atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            });
            bonds.push(Bond {
                begin: a,
                end: b,
                order,
                in_ring: false,
            });
            bond_offsets.push(offset);
        }
        let atom_offsets = self.atom_offsets;
        Molecule::from_parts(self.atoms, bonds).map_err(|source| {
            let offset = match &source {
                GraphError::BondOutOfRange(b) | GraphError::SelfBond(b) => bond_offsets[*b],
                GraphError::DuplicateBond(_, b) | GraphError::AromaticBondMismatch(_, b) => {
                    atom_offsets[*b]
                }
                GraphError::AromaticOutsideRing(a) | GraphError::InvalidAtom(a, _) => {
                    atom_offsets[*a]
                }
                GraphError::Valence(v) => atom_offsets[v.atom],
                GraphError::Empty | GraphError::Disconnected => 0,
            };
            SmilesError::Structure { offset, source }
        })
    }
}
