"""Filter cascade and chain isolation for raw entries.

Rules run in a fixed order and short-circuit: resolution first, then per
ligand monoatomic ion, excluded residue name, element whitelist, metal
cluster, molecular weight, and finally pocket-chain isolation. Each rejected
ligand yields exactly one report naming the first rule that failed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import elements
from ._kernels import any_within, min_cross_dist
from .errors import DecoyForgeError, EmptyStructure, MalformedRecord
from .structure import (
    Atom,
    LigandCandidate,
    Structure,
    atom_coords,
    extract_ligands,
    parse_structure,
)

# Common crystallization additives. The category is part of the pipeline's
# contract; the exact list is configurable (see FilterConfig.excluded_residues).
DEFAULT_EXCLUDED_RESIDUES = frozenset({
    "HOH", "DOD", "SO4", "PO4", "GOL", "PEG", "EDO", "ACT", "DMS", "FMT",
    "MES", "TRS", "EPE", "CIT", "NO3", "BME",
})

DEFAULT_ALLOWED_ELEMENTS = frozenset({"C", "N", "O", "H", "S", "P", "F", "Cl", "Br", "I"})


class Rule(str, enum.Enum):
    RESOLUTION = "Resolution"
    MOLECULAR_WEIGHT = "MolecularWeight"
    ELEMENT = "Element"
    EXCLUDED_RESIDUE = "ExcludedResidue"
    MONOATOMIC_ION = "MonoatomicIon"
    METAL_CLUSTER = "MetalCluster"
    NO_POCKET_CHAIN = "NoPocketChain"


@dataclass(slots=True)
class FilterConfig:
    max_resolution: float = 2.5
    mw_range: tuple[float, float] = (50.0, 700.0)  # open interval, Daltons
    allowed_elements: frozenset[str] = DEFAULT_ALLOWED_ELEMENTS
    excluded_residues: frozenset[str] = DEFAULT_EXCLUDED_RESIDUES
    pocket_radius: float = 10.0

    def __post_init__(self):
        if not self.mw_range[0] < self.mw_range[1]:
            raise ValueError(f"mw_range must be increasing, got {self.mw_range}")
        if not self.pocket_radius > 0:
            raise ValueError("pocket_radius must be positive")
        self.allowed_elements = frozenset(self.allowed_elements)
        self.excluded_residues = frozenset(self.excluded_residues)

    def to_json(self) -> dict:
        return {
            "max_resolution": self.max_resolution,
            "mw_range": list(self.mw_range),
            "allowed_elements": sorted(self.allowed_elements),
            "excluded_residues": sorted(self.excluded_residues),
            "pocket_radius": self.pocket_radius,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FilterConfig":
        kwargs = dict(data)
        if "mw_range" in kwargs:
            kwargs["mw_range"] = tuple(kwargs["mw_range"])
        if "allowed_elements" in kwargs:
            kwargs["allowed_elements"] = frozenset(kwargs["allowed_elements"])
        if "excluded_residues" in kwargs:
            kwargs["excluded_residues"] = frozenset(kwargs["excluded_residues"])
        return cls(**kwargs)


@dataclass(slots=True)
class ComplexRecord:
    complex_id: str
    protein_atoms: list[Atom]
    ligand: LigandCandidate
    resolution: float
    rejection: str | None = None


@dataclass(slots=True)
class RejectionReport:
    complex_id: str
    rule: Rule
    detail: str


@dataclass(slots=True)
class CurationSummary:
    n_entries: int = 0
    n_retained: int = 0
    rejections: dict[str, int] = field(default_factory=dict)
    io_errors: list[tuple[str, str]] = field(default_factory=list)

    def count(self, rule: Rule):
        self.rejections[rule.value] = self.rejections.get(rule.value, 0) + 1


def complex_id_for(entry_id: str, ligand: LigandCandidate) -> str:
    chain, resseq, resname = ligand.residue_id
    return f"{entry_id}_{chain}_{resseq}_{resname}"


def molecular_weight(
    ligand: LigandCandidate, mass_table: dict[str, float] | None = None
) -> float:
    """Sum of standard atomic masses over the atoms present.

    X-ray files usually omit hydrogens; no implicit-hydrogen correction is
    applied. Raises UnknownElement for unrecognized symbols.
    """
    table = mass_table if mass_table is not None else elements.ATOMIC_MASSES
    total = 0.0
    for atom in ligand.atoms:
        if atom.element not in table:
            from .errors import UnknownElement

            raise UnknownElement(f"no mass for element {atom.element!r} in {ligand.residue_id}")
        total += table[atom.element]
    return total


def _heavy_atoms(ligand: LigandCandidate) -> list[Atom]:
    return [a for a in ligand.atoms if a.element not in ("H", "D")]


def _check_ligand(ligand: LigandCandidate, cfg: FilterConfig) -> tuple[Rule, str] | None:
    """First failed rule for one ligand, or None if it passes."""
    if len(_heavy_atoms(ligand)) <= 1:
        return Rule.MONOATOMIC_ION, f"{len(_heavy_atoms(ligand))} heavy atom(s)"
    resname = ligand.residue_id[2]
    if resname in cfg.excluded_residues:
        return Rule.EXCLUDED_RESIDUE, f"residue {resname} is excluded"
    bad = sorted({a.element for a in ligand.atoms if a.element not in cfg.allowed_elements})
    if bad:
        return Rule.ELEMENT, f"disallowed element(s): {', '.join(bad)}"
    # Safety net for loosened whitelists: a group passing the element rule
    # may still carry metals (e.g. Fe added for heme studies).
    metals = sorted({a.element for a in ligand.atoms if a.element in elements.METALS})
    if metals:
        return Rule.METAL_CLUSTER, f"metal(s) present: {', '.join(metals)}"
    mw = molecular_weight(ligand)
    low, high = cfg.mw_range
    if not (low < mw < high):
        return Rule.MOLECULAR_WEIGHT, f"mw {mw:.2f} outside ({low:g}, {high:g})"
    return None


def curate_entry(
    s: Structure, cfg: FilterConfig
) -> tuple[list[ComplexRecord], list[RejectionReport]]:
    """Apply the filter cascade to one entry.

    Failures never raise; every rejected entry/ligand becomes a report.
    Retained records carry only the protein chains with at least one atom
    within cfg.pocket_radius of the ligand.
    """
    records: list[ComplexRecord] = []
    reports: list[RejectionReport] = []

    if s.resolution is None:
        reports.append(RejectionReport(s.entry_id, Rule.RESOLUTION, "no resolution available"))
        return records, reports
    if s.resolution > cfg.max_resolution:
        reports.append(
            RejectionReport(
                s.entry_id,
                Rule.RESOLUTION,
                f"resolution {s.resolution:.2f} > {cfg.max_resolution:g}",
            )
        )
        return records, reports

    protein_by_chain: dict[str, list[Atom]] = {}
    for atom in s.atoms:
        if not atom.is_hetero:
            protein_by_chain.setdefault(atom.residue_id[0], []).append(atom)

    for ligand in extract_ligands(s):
        cid = complex_id_for(s.entry_id, ligand)
        failure = _check_ligand(ligand, cfg)
        if failure is not None:
            rule, detail = failure
            reports.append(RejectionReport(cid, rule, detail))
            continue
        ligand_xyz = ligand.coords
        kept_atoms: list[Atom] = []
        for chain in sorted(protein_by_chain):
            chain_atoms = protein_by_chain[chain]
            if any_within(atom_coords(chain_atoms), ligand_xyz, cfg.pocket_radius):
                kept_atoms.extend(chain_atoms)
        if not kept_atoms:
            if protein_by_chain:
                nearest = min(
                    min_cross_dist(atom_coords(protein_by_chain[c]), ligand_xyz)
                    for c in protein_by_chain
                )
                detail = f"nearest chain atom at {nearest:.2f} A > {cfg.pocket_radius:g}"
            else:
                detail = "entry has no protein atoms"
            reports.append(RejectionReport(cid, Rule.NO_POCKET_CHAIN, detail))
            continue
        records.append(
            ComplexRecord(
                complex_id=cid,
                protein_atoms=kept_atoms,
                ligand=ligand,
                resolution=s.resolution,
            )
        )
    return records, reports


def _curate_one_path(args) -> tuple[str, list[ComplexRecord], list[RejectionReport], str | None]:
    path_str, cfg, manifest = args
    path = Path(path_str)
    try:
        text = path.read_text()
    except OSError as exc:
        return path_str, [], [], f"read failed: {exc}"
    try:
        s = parse_structure(text, entry_id=path.stem)
    except (MalformedRecord, EmptyStructure) as exc:
        return path_str, [], [], str(exc)
    if s.resolution is None and manifest and s.entry_id in manifest:
        s = replace(s, resolution=float(manifest[s.entry_id]["resolution"]))
    records, reports = curate_entry(s, cfg)
    return path_str, records, reports, None


def curate_corpus(
    paths: list[str | Path],
    cfg: FilterConfig,
    workers: int = 1,
    manifest: dict | None = None,
) -> tuple[list[ComplexRecord], list[RejectionReport], CurationSummary]:
    """Curate many entries, optionally in parallel.

    Entries are independent; results are merged in sorted entry order so the
    output is identical for any worker count. Unreadable or malformed files
    are collected in the summary instead of aborting the run.
    """
    jobs = [(str(p), cfg, manifest) for p in sorted(str(p) for p in paths)]
    if workers <= 1 or len(jobs) <= 1:
        results = [_curate_one_path(job) for job in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_curate_one_path, jobs))
    results.sort(key=lambda r: r[0])

    summary = CurationSummary(n_entries=len(jobs))
    all_records: list[ComplexRecord] = []
    all_reports: list[RejectionReport] = []
    for path_str, records, reports, error in results:
        if error is not None:
            summary.io_errors.append((path_str, error))
            continue
        all_records.extend(records)
        all_reports.extend(reports)
        for report in reports:
            summary.count(report.rule)
        summary.n_retained += len(records)
    all_records.sort(key=lambda r: r.complex_id)
    all_reports.sort(key=lambda r: r.complex_id)
    return all_records, all_reports, summary


def write_rejections_csv(reports: list[RejectionReport], path: str | Path):
    lines = ["complex_id,rule,detail"]
    for r in reports:
        detail = r.detail.replace(",", ";")
        lines.append(f"{r.complex_id},{r.rule.value},{detail}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path: str | Path) -> dict:
    """Read the optional entries.json sidecar (entry_id -> {resolution})."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise DecoyForgeError(f"manifest {path} must be a JSON object")
    return data
