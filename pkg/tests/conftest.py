import numpy as np
import pytest

from decoyforge.curation import ComplexRecord
from decoyforge.structure import Atom, LigandCandidate


def pdb_line(serial, name, resname, chain, resseq, xyz, element, hetero=False, altloc=" "):
    record = "HETATM" if hetero else "ATOM  "
    return (
        f"{record}{serial:5d} {name:<4s}{altloc:1s}{resname:<3s} {chain:1s}{resseq:4d}    "
        f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          "
        f"{element.upper():>2s}"
    )


def make_atom(serial, element, xyz, residue=("A", 1, "GLY"), name=None, hetero=False):
    return Atom(
        serial=serial,
        element=element,
        name=name or f"{element.upper()}{serial}",
        position=np.asarray(xyz, dtype=np.float64),
        residue_id=residue,
        is_hetero=hetero,
    )


def make_record(protein_xyz, ligand_xyz, bonds=None, ligand_elements=None,
                complex_id="test_A_1_LIG") -> ComplexRecord:
    """ComplexRecord straight from coordinate arrays (carbon by default)."""
    protein_atoms = [
        make_atom(i + 1, "C", xyz, residue=("A", i + 1, "GLY"), name="CA")
        for i, xyz in enumerate(protein_xyz)
    ]
    lig_res = ("A", 900, "LIG")
    elements = ligand_elements or ["C"] * len(ligand_xyz)
    ligand_atoms = [
        make_atom(100 + i, elements[i], xyz, residue=lig_res, name=f"C{i + 1}", hetero=True)
        for i, xyz in enumerate(ligand_xyz)
    ]
    return ComplexRecord(
        complex_id=complex_id,
        protein_atoms=protein_atoms,
        ligand=LigandCandidate(residue_id=lig_res, atoms=ligand_atoms,
                               covalent_bonds=list(bonds or [])),
        resolution=2.0,
    )


@pytest.fixture
def simple_record():
    # 4 pocket atoms around a 3-atom bonded ligand
    protein = [(3.0, 0.0, 0.0), (0.0, 3.5, 0.0), (-3.0, 0.0, 1.0), (0.0, -3.0, -1.0)]
    ligand = [(0.0, 0.0, 0.0), (1.45, 0.0, 0.0), (2.2, 1.2, 0.0)]
    return make_record(protein, ligand, bonds=[(0, 1), (1, 2)])


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {status}")
