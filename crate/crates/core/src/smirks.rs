//! Single-attachment SMIRKS rules `[*:1]LHS>>[*:1]RHS`.
//!
//! A rule applies where `LHS` is exactly the R-group of an admissible cut of
//! the input; the core at that cut is kept verbatim and `RHS` is attached in
//! place of `LHS`. Nothing outside the matched R-group can change.

use std::collections::BTreeMap;

use crate::fragment::{
    cut_at, cuttable_bonds, enumerate_cuts, reattach, CutSite, FragmentationConstraints,
};
use crate::molgraph::{canonical_smiles, parse_smiles, Molecule, SmilesError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("rule must contain exactly one '>>'")]
    MissingArrow,
    #[error("{side} side: {source}")]
    Side {
        side: &'static str,
        source: SmilesError,
    },
    #[error("{side} side must contain exactly one [*:1] bonded to one heavy atom")]
    Arity { side: &'static str },
}

impl RuleError {
    pub fn is_syntax(&self) -> bool {
        !matches!(self, RuleError::Arity { .. })
    }
}

#[derive(Debug, Clone)]
pub struct TransformRule {
    pub lhs: Molecule,
    pub rhs: Molecule,
    pub text: String,
    lhs_canonical: String,
    rhs_canonical: String,
}

impl TransformRule {
    pub fn lhs_canonical(&self) -> &str {
        &self.lhs_canonical
    }

    pub fn rhs_canonical(&self) -> &str {
        &self.rhs_canonical
    }
}

fn parse_side(text: &str, side: &'static str) -> Result<Molecule, RuleError> {
    let mol = parse_smiles(text).map_err(|source| RuleError::Side { side, source })?;
    let stars = mol.wildcard_atoms();
    let ok = match stars[..] {
        [star] => {
            mol.atom(star).map_number == 1
                && mol.degree(star) == 1
                && !mol.atom(mol.neighbors(star)[0].0).is_wildcard()
        }
        _ => false,
    };
    if ok {
        Ok(mol)
    } else {
        Err(RuleError::Arity { side })
    }
}

pub fn parse_rule(text: &str) -> Result<TransformRule, RuleError> {
    let mut parts = text.split(">>");
    let (Some(lhs), Some(rhs), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(RuleError::MissingArrow);
    };
    let lhs = parse_side(lhs, "left")?;
    let rhs = parse_side(rhs, "right")?;
    Ok(TransformRule {
        lhs_canonical: canonical_smiles(&lhs),
        rhs_canonical: canonical_smiles(&rhs),
        lhs,
        rhs,
        text: text.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct Application {
    pub product: Molecule,
    pub canonical: String,
    pub site: CutSite,
}

/// Applies `rule` at every admissible cut whose R-group equals the rule's
/// left side. Products are deduplicated by canonical SMILES (first site
/// wins) and returned in canonical-string order. Sites where the right side
/// cannot be attached are skipped.
pub fn apply_rule(
    rule: &TransformRule,
    mol: &Molecule,
    constraints: &FragmentationConstraints,
) -> Vec<Application> {
    let mut products: BTreeMap<String, Application> = BTreeMap::new();
    for f in enumerate_cuts(mol, constraints) {
        if canonical_smiles(&f.rgroup) != rule.lhs_canonical {
            continue;
        }
        let Ok(product) = reattach(&f.core, &rule.rhs) else {
            continue;
        };
        let canonical = canonical_smiles(&product);
        products.entry(canonical.clone()).or_insert(Application {
            product,
            canonical,
            site: f.site,
        });
    }
    products.into_values().collect()
}

/// Canonical product strings of [`apply_rule`].
pub fn apply_rule_canonical(
    rule: &TransformRule,
    mol: &Molecule,
    constraints: &FragmentationConstraints,
) -> Vec<String> {
    apply_rule(rule, mol, constraints)
        .into_iter()
        .map(|a| a.canonical)
        .collect()
}

/// Audits locality: the core of `source` at `site` must reappear in
/// `product` on the far side of some cut whose R-group is the rule's right
/// side. Recomputes both fragmentations from scratch.
pub fn core_preserved(source: &Molecule, product: &Molecule, rule: &TransformRule, site: CutSite) -> bool {
    let valid_site = site.bond < source.bonds().len() && {
        let b = source.bond(site.bond);
        b.begin == site.rgroup_atom || b.end == site.rgroup_atom
    };
    if !valid_site || !cuttable_bonds(source).any(|b| b == site.bond) {
        return false;
    }
    let before = cut_at(source, site);
    if canonical_smiles(&before.rgroup) != rule.lhs_canonical {
        return false;
    }
    let source_core = canonical_smiles(&before.core);
    cuttable_bonds(product).any(|b| {
        let bond = product.bond(b);
        [bond.begin, bond.end].into_iter().any(|rgroup_atom| {
            let after = cut_at(product, CutSite { bond: b, rgroup_atom });
            canonical_smiles(&after.rgroup) == rule.rhs_canonical
                && canonical_smiles(&after.core) == source_core
        })
    })
}
