#!/usr/bin/env python3
"""Generate the bundled toy corpus of drug-like SMILES.

Molecules are assembled combinatorially from aryl prefixes, linkers, aryl
suffixes and a substituent library so that the corpus is rich in matched
pairs. A few marketed drugs (stereo removed) are appended. Output is
deterministic for a given seed.

Usage: python3 scripts/gen_corpus.py > crates/core/data/toy_corpus.smi
"""

import random
import sys

SEED = 20240611

PREFIXES = [
    "c1cc({x})ccc1",
    "c1cc({x})ncc1",
    "c1c({x})cccc1",
    "c1cc({x})sc1",
    "c1cc({x})oc1",
]

SUFFIXES = [
    "c1ccc({y})cc1",
    "c1cccc({y})c1",
    "c1ccc({y})nc1",
    "c1ccc({y})s1",
    "c1cnc({y})nc1",
]

LINKERS = [
    "C(=O)N",
    "NC(=O)",
    "S(=O)(=O)N",
    "CN",
    "OC",
    "C(=O)NC",
    "NC(=O)N",
    "",
    "N1CCN(CC1)",
    "C(=O)N1CCC(CC1)",
]

SUBSTITUENTS = [
    "F", "Cl", "Br", "I", "C", "CC", "C(C)C", "C(F)(F)F", "OC", "OCC",
    "OC(F)(F)F", "O", "N", "NC", "N(C)C", "C#N", "C(=O)N", "C(=O)O",
    "C(=O)OC", "NC(C)=O", "S(C)(=O)=O", "S(N)(=O)=O", "SC", "C9CC9",
    "N9CCOCC9", "N9CCCC9", "[N+](=O)[O-]", "CO", "c9ccccc9", "OC9CC9",
]

DRUGS = [
    ("CC(=O)Oc1ccccc1C(=O)O", "aspirin"),
    ("CC(=O)Nc1ccc(O)cc1", "paracetamol"),
    ("CC(C)Cc1ccc(cc1)C(C)C(=O)O", "ibuprofen"),
    ("Cn1cnc2c1c(=O)n(C)c(=O)n2C", "caffeine"),
    ("CN1CCN(CC1)c1ccc(cc1)C(=O)Nc1ccccc1", "piperazine_amide"),
    ("COc1ccc2nc(S(=O)Cc3ncc(C)c(OC)c3C)[nH]c2c1", "omeprazole"),
    ("O=C(O)Cc1ccccc1Nc1c(Cl)cccc1Cl", "diclofenac"),
    ("CC(C)NCC(O)COc1cccc2ccccc12", "propranolol"),
    ("CN(C)CCCN1c2ccccc2CCc2ccccc21", "imipramine"),
    ("Clc1ccc(cc1)C(c1ccccc1)N1CCN(CC1)CCOCC(=O)O", "cetirizine"),
    ("CC(=O)Nc1ccc(OCC)cc1", "phenacetin"),
    ("NS(=O)(=O)c1cc(C(=O)O)c(NCc2ccco2)cc1Cl", "furosemide"),
    ("COc1ccc(CCN(C)CCCC(C#N)(c2ccc(OC)c(OC)c2)C(C)C)cc1OC", "verapamil"),
    ("Cc1ccc(cc1)S(=O)(=O)NC(=O)NN1CCCCCC1", "tolazamide"),
    ("OC(=O)c1ccccc1O", "salicylic_acid"),
    ("CCOC(=O)c1ccc(N)cc1", "benzocaine"),
    ("CCN(CC)CC(=O)Nc1c(C)cccc1C", "lidocaine"),
    ("Nc1ccc(cc1)S(=O)(=O)Nc1ccnc(n1)C", "sulfa"),
    ("O=C1CCc2cc(OCCCCc3nnnn3C3CCCCC3)ccc2N1", "cilostazol_like"),
    ("Fc1ccc(cc1)C(=O)CCCN1CCC(O)(CC1)c1ccc(Cl)cc1", "haloperidol"),
    ("CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21", "diazepam"),
    ("Cc1onc(c1C(=O)NC1CCCC1)-c1ccccc1Cl", "isoxazole_amide"),
    ("OC(=O)CCc1ccc(OCc2ccccc2)cc1", "benzyloxy_acid"),
    ("COc1cc(C=CC(=O)O)ccc1O", "ferulic_acid"),
    ("O=C(C=Cc1ccc(O)cc1)C=Cc1ccc(O)c(O)c1", "bisdemethoxy_curcuminoid"),
    ("O=C(C=Cc1ccc(O)cc1)C=Cc1ccc(O)cc1", "curcuminoid_dehydroxy"),
    ("Cc1ccc(Nc2nccc(n2)-c2cccnc2)cc1NC(=O)c1ccc(CN2CCN(C)CC2)cc1", "imatinib"),
    ("COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1", "gefitinib"),
    ("CS(=O)(=O)Nc1ccc(cc1)C(O)CNC(C)C", "sotalol"),
    ("NC(=O)c1cccnc1", "nicotinamide"),
]


def main() -> None:
    rng = random.Random(SEED)
    combos = [(p, l, s) for p in PREFIXES for l in LINKERS for s in SUFFIXES]
    rng.shuffle(combos)
    seen = set()
    out = []
    for prefix, linker, suffix in combos[:45]:
        xs = rng.sample(SUBSTITUENTS, 8)
        ys = rng.sample(SUBSTITUENTS, 4)
        for y in ys:
            for x in xs:
                smi = prefix.format(x=x) + linker + suffix.format(y=y)
                if smi not in seen:
                    seen.add(smi)
                    out.append(smi)
    w = sys.stdout.write
    w("# toy corpus: combinatorial aryl-linker-aryl library plus reference drugs\n")
    for i, smi in enumerate(out, 1):
        w(f"{smi}\tlib{i:04d}\n")
    for smi, name in DRUGS:
        w(f"{smi}\t{name}\n")


if __name__ == "__main__":
    main()
