"""Fixed-width parsing, serialization round-trip, and ligand extraction."""

import math

import numpy as np
import pytest

from conftest import pdb_line
from decoyforge.errors import EmptyStructure, MalformedRecord
from decoyforge.structure import (
    extract_ligands,
    parse_structure,
    write_structure,
)


def test_single_atom_identity_parse():
    text = pdb_line(1, "CA", "GLY", "A", 1, (1.0, 2.0, 3.0), "C")
    s = parse_structure(text, entry_id="one")
    assert len(s.atoms) == 1
    atom = s.atoms[0]
    assert atom.element == "C"
    assert atom.position.tolist() == [1.0, 2.0, 3.0]
    assert atom.residue_id == ("A", 1, "GLY")
    assert not atom.is_hetero
    assert s.resolution is None


def test_resolution_remark():
    text = "\n".join([
        "REMARK   2 RESOLUTION.    2.30 ANGSTROMS.",
        pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C"),
    ])
    assert parse_structure(text).resolution == 2.30


def test_resolution_not_applicable():
    text = "\n".join([
        "REMARK   2 RESOLUTION. NOT APPLICABLE.",
        pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C"),
    ])
    assert parse_structure(text).resolution is None


def test_only_first_model_kept():
    # expected count derived from the fixture: 2 atoms in model 1, 2 in model 2
    text = "\n".join([
        "MODEL        1",
        pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C"),
        pdb_line(2, "CB", "GLY", "A", 1, (1, 0, 0), "C"),
        "ENDMDL",
        "MODEL        2",
        pdb_line(3, "CA", "GLY", "A", 1, (5, 5, 5), "C"),
        pdb_line(4, "CB", "GLY", "A", 1, (6, 5, 5), "C"),
        "ENDMDL",
    ])
    s = parse_structure(text)
    assert len(s.atoms) == 2
    assert s.atoms[1].position.tolist() == [1.0, 0.0, 0.0]


def test_altloc_b_dropped():
    text = "\n".join([
        pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C", altloc="A"),
        pdb_line(2, "CA", "GLY", "A", 1, (9, 9, 9), "C", altloc="B"),
    ])
    assert len(parse_structure(text).atoms) == 1


def test_malformed_coordinates_carry_line_number():
    good = pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C")
    bad = good[:30] + "  abcdef" + good[38:]
    with pytest.raises(MalformedRecord) as err:
        parse_structure(good + "\n" + bad)
    assert err.value.line_number == 2


def test_short_record_rejected():
    with pytest.raises(MalformedRecord):
        parse_structure("ATOM      1  CA  GLY A   1    1.0")


def test_duplicate_serial_rejected():
    text = "\n".join([
        pdb_line(7, "CA", "GLY", "A", 1, (0, 0, 0), "C"),
        pdb_line(7, "CB", "GLY", "A", 1, (1, 0, 0), "C"),
    ])
    with pytest.raises(MalformedRecord):
        parse_structure(text)


def test_empty_structure():
    with pytest.raises(EmptyStructure):
        parse_structure("REMARK   2 RESOLUTION.    2.00 ANGSTROMS.")


def test_unknown_element_flagged_not_fatal():
    text = pdb_line(1, "Q1", "LIG", "A", 1, (0, 0, 0), "ZQ", hetero=True)
    assert parse_structure(text).atoms[0].element == "Unknown"


def test_roundtrip_preserves_atoms():
    rng = np.random.default_rng(11)
    lines = ["REMARK   2 RESOLUTION.    1.80 ANGSTROMS."]
    for i in range(20):
        xyz = np.round(rng.uniform(-50, 50, 3), 3)  # stored precision
        hetero = i >= 15
        lines.append(
            pdb_line(i + 1, f"C{i}", "LIG" if hetero else "GLY", "A",
                     900 if hetero else i + 1, xyz, "C", hetero=hetero)
        )
    s1 = parse_structure("\n".join(lines), entry_id="rt")
    s2 = parse_structure(write_structure(s1))
    assert s2.resolution == s1.resolution
    assert len(s2.atoms) == len(s1.atoms)
    for a1, a2 in zip(s1.atoms, s2.atoms):
        assert a1.serial == a2.serial
        assert a1.element == a2.element
        assert a1.name == a2.name
        assert a1.residue_id == a2.residue_id
        assert a1.is_hetero == a2.is_hetero
        assert np.array_equal(a1.position, a2.position)  # bit-equal at 3 decimals


def _benzene_lines(start_serial=1, chain="A", resseq=900):
    lines = []
    for i in range(6):
        angle = math.pi * i / 3.0
        xyz = (1.39 * math.cos(angle), 1.39 * math.sin(angle), 0.0)
        lines.append(pdb_line(start_serial + i, f"C{i + 1}", "BNZ", chain, resseq, xyz, "C",
                              hetero=True))
    return lines


def test_extract_ligands_benzene_bonds():
    protein = pdb_line(100, "CA", "GLY", "A", 1, (10, 10, 10), "C")
    s = parse_structure("\n".join([protein] + _benzene_lines()))
    candidates = extract_ligands(s)
    assert len(candidates) == 1
    # ring side length 1.39 A: exactly the 6 ring bonds under r+r+0.4
    assert len(candidates[0].covalent_bonds) == 6
    expected = {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)}
    assert set(candidates[0].covalent_bonds) == expected


def test_extract_ligands_no_hetero():
    s = parse_structure(pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C"))
    assert extract_ligands(s) == []


def test_extract_ligands_water_only_excluded():
    lines = [
        pdb_line(1, "CA", "GLY", "A", 1, (0, 0, 0), "C"),
        pdb_line(2, "O", "HOH", "A", 500, (3, 3, 3), "O", hetero=True),
        pdb_line(3, "O", "HOH", "A", 501, (5, 5, 5), "O", hetero=True),
    ]
    assert extract_ligands(parse_structure("\n".join(lines))) == []


def test_bond_inference_order_independent():
    base = _benzene_lines()
    s1 = parse_structure("\n".join(base))
    shuffled = [base[i] for i in (3, 0, 5, 1, 4, 2)]
    s2 = parse_structure("\n".join(shuffled))
    b1 = extract_ligands(s1)[0]
    b2 = extract_ligands(s2)[0]

    def canonical(cand):
        names = cand.atom_names
        return {tuple(sorted((names[i], names[j]))) for i, j in cand.covalent_bonds}

    assert canonical(b1) == canonical(b2)
