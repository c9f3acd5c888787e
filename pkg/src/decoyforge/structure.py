"""Fixed-width structure-file parsing and ligand extraction.

Supports the pragmatic PDB-text subset needed by the curation pipeline:
HEADER, REMARK 2 (resolution), MODEL/ENDMDL, ATOM, HETATM, TER, END. Only
the first MODEL is kept. Alternate locations other than blank or 'A' are
dropped. mmCIF is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elements
from .errors import AmbiguousAtomNames, EmptyStructure, MalformedRecord

WATER_RESIDUES = frozenset({"HOH", "DOD", "WAT"})

# PDB v3.3 fixed columns (0-based slices)
_SERIAL = slice(6, 11)
_NAME = slice(12, 16)
_ALTLOC = 16
_RESNAME = slice(17, 20)
_CHAIN = 21
_RESSEQ = slice(22, 26)
_X = slice(30, 38)
_Y = slice(38, 46)
_Z = slice(46, 54)
_ELEMENT = slice(76, 78)

ResidueId = tuple[str, int, str]  # (chain id, residue sequence number, residue name)


@dataclass(slots=True)
class Atom:
    serial: int
    element: str
    name: str
    position: np.ndarray  # (3,) float64, Angstroms
    residue_id: ResidueId
    is_hetero: bool


@dataclass(slots=True)
class Structure:
    entry_id: str
    atoms: list[Atom]
    resolution: float | None = None
    chains: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not self.atoms:
            raise EmptyStructure(f"structure {self.entry_id!r} has no atoms")
        if self.resolution is not None and not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not self.chains:
            self.chains = {a.residue_id[0] for a in self.atoms}


@dataclass(slots=True)
class LigandCandidate:
    residue_id: ResidueId
    atoms: list[Atom]
    covalent_bonds: list[tuple[int, int]]

    @property
    def coords(self) -> np.ndarray:
        return atom_coords(self.atoms)

    @property
    def atom_names(self) -> list[str]:
        return [a.name for a in self.atoms]


def atom_coords(atoms: list[Atom]) -> np.ndarray:
    """Stack atom positions into an (n, 3) float64 array."""
    if not atoms:
        return np.zeros((0, 3), dtype=np.float64)
    return np.array([a.position for a in atoms], dtype=np.float64)


def _parse_float(line: str, span: slice, what: str, line_no: int) -> float:
    text = line[span]
    try:
        value = float(text)
    except ValueError:
        raise MalformedRecord(line_no, f"bad {what} field {text!r}")
    if not np.isfinite(value):
        raise MalformedRecord(line_no, f"non-finite {what} {text!r}")
    return value


def _parse_atom_line(line: str, line_no: int, hetero: bool) -> Atom:
    if len(line) < 54:
        raise MalformedRecord(line_no, f"record too short ({len(line)} cols, need 54)")
    try:
        serial = int(line[_SERIAL])
    except ValueError:
        raise MalformedRecord(line_no, f"bad serial field {line[_SERIAL]!r}")
    try:
        resseq = int(line[_RESSEQ])
    except ValueError:
        raise MalformedRecord(line_no, f"bad residue number {line[_RESSEQ]!r}")
    x = _parse_float(line, _X, "x", line_no)
    y = _parse_float(line, _Y, "y", line_no)
    z = _parse_float(line, _Z, "z", line_no)
    element = elements.normalize_symbol(line[_ELEMENT]) if len(line) >= 78 else elements.UNKNOWN
    return Atom(
        serial=serial,
        element=element,
        name=line[_NAME].strip(),
        position=np.array([x, y, z], dtype=np.float64),
        residue_id=(line[_CHAIN].strip(), resseq, line[_RESNAME].strip()),
        is_hetero=hetero,
    )


def parse_resolution_remark(line: str) -> float | None:
    """Pull the resolution value out of a 'REMARK   2 RESOLUTION.' line."""
    upper = line.upper()
    if "RESOLUTION." not in upper:
        return None
    tail = upper.split("RESOLUTION.", 1)[1]
    for token in tail.split():
        try:
            return float(token)
        except ValueError:
            continue
    return None  # e.g. "RESOLUTION. NOT APPLICABLE."


def parse_structure(text: str, entry_id: str | None = None) -> Structure:
    """Parse PDB-format text into a Structure (first MODEL only).

    The entry id is taken from the HEADER record when present, else from
    `entry_id`, else "UNKNOWN". Raises MalformedRecord (with line number) on
    bad fixed-width fields and EmptyStructure when no atoms survive.
    """
    atoms: list[Atom] = []
    resolution = None
    header_id = None
    serials: set[int] = set()
    model_no = 0
    past_first_model = False

    for line_no, line in enumerate(text.splitlines(), start=1):
        record = line[:6].strip()
        if record == "MODEL":
            model_no += 1
            if model_no > 1:
                past_first_model = True
        elif record == "ENDMDL":
            if model_no >= 1:
                past_first_model = True
        elif record in ("ATOM", "HETATM"):
            if past_first_model:
                continue
            atom = _parse_atom_line(line, line_no, hetero=(record == "HETATM"))
            altloc = line[_ALTLOC]
            if altloc not in (" ", "A"):
                continue
            if atom.serial in serials:
                raise MalformedRecord(line_no, f"duplicate atom serial {atom.serial}")
            serials.add(atom.serial)
            atoms.append(atom)
        elif record == "REMARK" and line[6:10].strip() == "2":
            value = parse_resolution_remark(line)
            if value is not None:
                resolution = value
        elif record == "HEADER" and len(line) >= 66:
            code = line[62:66].strip()
            if code:
                header_id = code
    if not atoms:
        raise EmptyStructure("no ATOM/HETATM records parsed")
    return Structure(
        entry_id=header_id or entry_id or "UNKNOWN",
        atoms=atoms,
        resolution=resolution,
    )


def write_structure(s: Structure) -> str:
    """Serialize back to PDB-format text (3-decimal coordinates).

    Inverse of parse_structure for the supported subset: re-parsing yields
    the same atoms with coordinates equal at the stored precision.
    """
    lines = [f"HEADER    {'':40s}{'':9s}   {s.entry_id[:4]:>4s}"]
    if s.resolution is not None:
        lines.append(f"REMARK   2 RESOLUTION. {s.resolution:7.2f} ANGSTROMS.")
    for a in s.atoms:
        record = "HETATM" if a.is_hetero else "ATOM  "
        chain, resseq, resname = a.residue_id
        name = a.name if len(a.name) == 4 else f" {a.name:<3s}"
        element = "" if a.element == elements.UNKNOWN else a.element
        lines.append(
            f"{record}{a.serial:5d} {name:<4s} {resname:<3s} {chain:1s}{resseq:4d}    "
            f"{a.position[0]:8.3f}{a.position[1]:8.3f}{a.position[2]:8.3f}"
            f"{1.0:6.2f}{0.0:6.2f}          {element.upper():>2s}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"


def infer_bonds(atoms: list[Atom], radius_table: dict[str, float] | None = None) -> list[tuple[int, int]]:
    """Covalent bonds by the distance rule d <= r(a) + r(b) + 0.4 A.

    Input files give no CONECT guarantees, so bonds are inferred from the
    geometry. Returns sorted (i, j) pairs with i < j.
    """
    radii = radius_table if radius_table is not None else elements.COVALENT_RADII
    get = lambda sym: radii.get(sym, elements.DEFAULT_COVALENT_RADIUS)
    coords = atom_coords(atoms)
    bonds = []
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            cutoff = get(atoms[i].element) + get(atoms[j].element) + 0.4
            d2 = float(((coords[i] - coords[j]) ** 2).sum())
            if d2 <= cutoff * cutoff:
                bonds.append((i, j))
    return bonds


def extract_ligands(
    s: Structure, bond_table: dict[str, float] | None = None
) -> list[LigandCandidate]:
    """One candidate per hetero residue group, excluding water.

    Atoms are grouped by residue id in order of first appearance; covalent
    bonds within each group are inferred by the distance rule. Duplicate
    atom names within a group are allowed here (pose ingestion rejects them
    later if it needs a name-based remap).
    """
    groups: dict[ResidueId, list[Atom]] = {}
    for atom in s.atoms:
        if not atom.is_hetero:
            continue
        if atom.residue_id[2] in WATER_RESIDUES:
            continue
        groups.setdefault(atom.residue_id, []).append(atom)
    candidates = []
    for residue_id, atoms in groups.items():
        bonds = infer_bonds(atoms, bond_table)
        candidates.append(LigandCandidate(residue_id=residue_id, atoms=atoms, covalent_bonds=bonds))
    return candidates


def require_unique_names(ligand: LigandCandidate) -> dict[str, int]:
    """Map atom name -> index, raising if names are ambiguous."""
    names = ligand.atom_names
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise AmbiguousAtomNames(f"duplicate ligand atom names: {dupes}")
    return {name: i for i, name in enumerate(names)}
