"""Dataset persistence and deterministic batch sampling.

On disk a dataset directory holds `index.json` plus binary shards; the exact
byte layout and the sampler's PRNG discipline are specified in FORMAT.md at
the repository root, and the reader/writer here must stay in lockstep with
that document (external tools parse the same bytes).

Coordinates are stored as little-endian float64 and read back bit-exactly.
All sampling uses numpy's PCG64 seeded through SeedSequence; OS randomness
is never consulted.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curation import ComplexRecord
from .decoys import POSITIVE_RMSD_MAX, DecoyPose
from .errors import DatasetFormatError, EmptyPocket, InsufficientDecoys
from .graphs import DEFAULT_CUTOFF, ComplexGraph, build_graph, perturb_ligand
from .structure import Atom, LigandCandidate
from . import elements

FORMAT_VERSION = 1
SHARD_MAGIC = b"DFSH"
DEFAULT_SHARD_SIZE = 512  # complexes per shard file

# SeedSequence tags (see FORMAT.md): "EPOC" and "STEP" as ASCII u32
EPOCH_TAG = 0x45504F43
STEP_TAG = 0x53544550

DECOYS_PER_ANCHOR = 10
PERTURBED_PER_ANCHOR = 10


@dataclass(slots=True)
class IndexEntry:
    complex_id: str
    n_atoms: int
    n_protein_atoms: int
    n_ligand_atoms: int
    n_bonds: int
    n_decoys: int
    max_rmsd: float | None
    shard: str
    offset: int
    length: int

    def to_json(self) -> dict:
        return {
            "complex_id": self.complex_id,
            "n_atoms": self.n_atoms,
            "n_protein_atoms": self.n_protein_atoms,
            "n_ligand_atoms": self.n_ligand_atoms,
            "n_bonds": self.n_bonds,
            "n_decoys": self.n_decoys,
            "max_rmsd": self.max_rmsd,
            "shard": self.shard,
            "offset": self.offset,
            "length": self.length,
        }


@dataclass(slots=True)
class DatasetIndex:
    format_version: int
    d_max: float | None
    positive_rmsd_max: float
    complexes: list[IndexEntry]

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "ordering": "complex_id",
            "positive_rmsd_max": self.positive_rmsd_max,
            "d_max": self.d_max,
            "complexes": [e.to_json() for e in self.complexes],
        }


@dataclass(slots=True)
class StoredComplex:
    complex_id: str
    protein_elements: list[str]
    protein_xyz: np.ndarray
    ligand_elements: list[str]
    ligand_names: list[str]
    ligand_xyz: np.ndarray
    bonds: list[tuple[int, int]]
    decoys: list[DecoyPose]

    def to_record(self) -> ComplexRecord:
        """Materialize a ComplexRecord view of the stored arrays."""
        parts = self.complex_id.rsplit("_", 3)
        if len(parts) == 4:
            residue_id = (parts[1], int(parts[2]) if parts[2].lstrip("-").isdigit() else 0, parts[3])
        else:
            residue_id = ("X", 1, "LIG")
        protein_atoms = [
            Atom(
                serial=i + 1,
                element=sym,
                name=sym.upper(),
                position=self.protein_xyz[i],
                residue_id=("A", i + 1, "RES"),
                is_hetero=False,
            )
            for i, sym in enumerate(self.protein_elements)
        ]
        ligand_atoms = [
            Atom(
                serial=len(protein_atoms) + i + 1,
                element=sym,
                name=self.ligand_names[i],
                position=self.ligand_xyz[i],
                residue_id=residue_id,
                is_hetero=True,
            )
            for i, sym in enumerate(self.ligand_elements)
        ]
        return ComplexRecord(
            complex_id=self.complex_id,
            protein_atoms=protein_atoms,
            ligand=LigandCandidate(
                residue_id=residue_id, atoms=ligand_atoms, covalent_bonds=list(self.bonds)
            ),
            resolution=0.0,
        )


def _encode_block(rec: ComplexRecord, decoys: list[DecoyPose]) -> bytes:
    protein = rec.protein_atoms
    ligand = rec.ligand.atoms
    n_p, n_l = len(protein), len(ligand)
    bonds = rec.ligand.covalent_bonds
    out = bytearray()
    out += struct.pack("<IIII", n_p, n_l, len(bonds), len(decoys))
    codes = [elements.ELEMENT_CODES.get(a.element, 0) for a in protein + ligand]
    out += bytes(codes)
    out += bytes([0] * n_p + [1] * n_l)  # flags: bit0 = is_ligand
    for a in ligand:
        out += a.name[:4].ljust(4).encode("ascii")
    coords = np.array([a.position for a in protein + ligand], dtype="<f8").reshape(-1, 3)
    out += coords.tobytes()
    if bonds:
        out += np.asarray(bonds, dtype="<u4").tobytes()
    for pose in decoys:
        out += np.ascontiguousarray(pose.ligand_coords, dtype="<f8").tobytes()
        out += struct.pack("<d", pose.rmsd)
    return bytes(out)


def _decode_block(buf: bytes, complex_id: str) -> StoredComplex:
    n_p, n_l, n_b, n_d = struct.unpack_from("<IIII", buf, 0)
    pos = 16
    codes = list(buf[pos : pos + n_p + n_l])
    pos += n_p + n_l
    pos += n_p + n_l  # flags are implied by the section split
    names = []
    for i in range(n_l):
        names.append(buf[pos + 4 * i : pos + 4 * i + 4].decode("ascii").strip())
    pos += 4 * n_l
    n_atoms = n_p + n_l
    coords = np.frombuffer(buf, dtype="<f8", count=3 * n_atoms, offset=pos).reshape(-1, 3)
    pos += 24 * n_atoms
    bonds = []
    if n_b:
        pairs = np.frombuffer(buf, dtype="<u4", count=2 * n_b, offset=pos).reshape(-1, 2)
        bonds = [(int(i), int(j)) for i, j in pairs]
        pos += 8 * n_b
    decoys = []
    for k in range(n_d):
        pose_coords = np.frombuffer(buf, dtype="<f8", count=3 * n_l, offset=pos).reshape(-1, 3)
        pos += 24 * n_l
        (rmsd_value,) = struct.unpack_from("<d", buf, pos)
        pos += 8
        decoys.append(
            DecoyPose(
                complex_id=complex_id,
                pose_index=k,
                ligand_coords=pose_coords.copy(),
                rmsd=rmsd_value,
            )
        )
    symbols = [elements.CODE_TO_ELEMENT.get(c, elements.UNKNOWN) for c in codes]
    return StoredComplex(
        complex_id=complex_id,
        protein_elements=symbols[:n_p],
        protein_xyz=coords[:n_p].copy(),
        ligand_elements=symbols[n_p:],
        ligand_names=names,
        ligand_xyz=coords[n_p:].copy(),
        bonds=bonds,
        decoys=decoys,
    )


def write_dataset(
    records: list[ComplexRecord],
    decoys: dict[str, list[DecoyPose]],
    out_dir: str | Path,
    shard_size: int = DEFAULT_SHARD_SIZE,
) -> DatasetIndex:
    """Write shards + index.json; complexes are ordered by complex_id."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.complex_id)
    entries: list[IndexEntry] = []
    d_max: float | None = None

    shard_idx = -1
    shard_fh = None
    shard_name = ""
    offset = 0
    try:
        for i, rec in enumerate(ordered):
            if i % shard_size == 0:
                if shard_fh is not None:
                    shard_fh.close()
                shard_idx += 1
                shard_name = f"shard-{shard_idx:03d}.bin"
                shard_fh = open(out_dir / shard_name, "wb")
                shard_fh.write(SHARD_MAGIC)
                shard_fh.write(struct.pack("<I", FORMAT_VERSION))
                offset = 8
            rec_decoys = decoys.get(rec.complex_id, [])
            block = _encode_block(rec, rec_decoys)
            shard_fh.write(block)
            max_rmsd = max((p.rmsd for p in rec_decoys), default=None)
            if max_rmsd is not None:
                d_max = max_rmsd if d_max is None else max(d_max, max_rmsd)
            entries.append(
                IndexEntry(
                    complex_id=rec.complex_id,
                    n_atoms=len(rec.protein_atoms) + len(rec.ligand.atoms),
                    n_protein_atoms=len(rec.protein_atoms),
                    n_ligand_atoms=len(rec.ligand.atoms),
                    n_bonds=len(rec.ligand.covalent_bonds),
                    n_decoys=len(rec_decoys),
                    max_rmsd=max_rmsd,
                    shard=shard_name,
                    offset=offset,
                    length=len(block),
                )
            )
            offset += len(block)
    finally:
        if shard_fh is not None:
            shard_fh.close()

    index = DatasetIndex(
        format_version=FORMAT_VERSION,
        d_max=d_max,
        positive_rmsd_max=POSITIVE_RMSD_MAX,
        complexes=entries,
    )
    (out_dir / "index.json").write_text(json.dumps(index.to_json(), indent=1, sort_keys=True) + "\n")
    return index


class Dataset:
    """Read-only view over a dataset directory (many readers, one writer)."""

    def __init__(self, root: Path, index: DatasetIndex, entries: list[IndexEntry]):
        self.root = root
        self.index = index
        self.entries = entries
        self._by_id = {e.complex_id: e for e in entries}
        self.d_max = self._compute_d_max()

    @classmethod
    def open(cls, root: str | Path) -> "Dataset":
        root = Path(root)
        index_path = root / "index.json"
        if not index_path.exists():
            raise DatasetFormatError(f"{root}: no index.json (not a dataset directory)")
        raw = json.loads(index_path.read_text())
        if raw.get("format_version") != FORMAT_VERSION:
            raise DatasetFormatError(
                f"{root}: format version {raw.get('format_version')} != {FORMAT_VERSION}"
            )
        entries = [
            IndexEntry(
                complex_id=e["complex_id"],
                n_atoms=e["n_atoms"],
                n_protein_atoms=e["n_protein_atoms"],
                n_ligand_atoms=e["n_ligand_atoms"],
                n_bonds=e["n_bonds"],
                n_decoys=e["n_decoys"],
                max_rmsd=e["max_rmsd"],
                shard=e["shard"],
                offset=e["offset"],
                length=e["length"],
            )
            for e in raw["complexes"]
        ]
        index = DatasetIndex(
            format_version=raw["format_version"],
            d_max=raw["d_max"],
            positive_rmsd_max=raw.get("positive_rmsd_max", POSITIVE_RMSD_MAX),
            complexes=entries,
        )
        return cls(root, index, list(entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def complex_ids(self) -> list[str]:
        return [e.complex_id for e in self.entries]

    def _compute_d_max(self) -> float | None:
        values = [e.max_rmsd for e in self.entries if e.max_rmsd is not None]
        return max(values) if values else None

    def entry(self, complex_id: str) -> IndexEntry:
        try:
            return self._by_id[complex_id]
        except KeyError:
            raise DatasetFormatError(f"unknown complex id {complex_id!r}")

    def read(self, complex_id: str) -> StoredComplex:
        e = self.entry(complex_id)
        path = self.root / e.shard
        with open(path, "rb") as fh:
            if fh.read(4) != SHARD_MAGIC:
                raise DatasetFormatError(f"{path}: bad shard magic")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FORMAT_VERSION:
                raise DatasetFormatError(f"{path}: shard version {version}")
            fh.seek(e.offset)
            buf = fh.read(e.length)
        if len(buf) != e.length:
            raise DatasetFormatError(f"{path}: truncated block for {complex_id}")
        return _decode_block(buf, complex_id)

    def exclusion_filter(self, exclude_ids) -> "Dataset":
        """View without the listed complex ids; d_max is recomputed."""
        exclude = set(exclude_ids)
        kept = [e for e in self.entries if e.complex_id not in exclude]
        return Dataset(self.root, self.index, kept)

    def subset(self, keep_ids) -> "Dataset":
        keep = set(keep_ids)
        kept = [e for e in self.entries if e.complex_id in keep]
        return Dataset(self.root, self.index, kept)

    def scan_d_max(self) -> float | None:
        """Recompute d_max from the shard bytes (consistency checks)."""
        best: float | None = None
        for e in self.entries:
            for pose in self.read(e.complex_id).decoys:
                best = pose.rmsd if best is None else max(best, pose.rmsd)
        return best


# --- batch sampling -----------------------------------------------------------


@dataclass(slots=True)
class DecoySample:
    graph: ComplexGraph
    rmsd: float
    is_positive: bool
    pose_index: int


@dataclass(slots=True)
class PerturbedSample:
    graph: ComplexGraph
    noise: np.ndarray
    sigma: float


@dataclass(slots=True)
class AnchorSample:
    complex_id: str
    native: ComplexGraph
    decoys: list[DecoySample]
    perturbed: list[PerturbedSample]
    max_rmsd: float | None
    replacement_used: bool = False


@dataclass(slots=True)
class PretrainBatch:
    anchors: list[AnchorSample]
    d_max: float | None
    seed: int = 0
    epoch: int = 0
    step: int = 0

    def structures_per_sample(self) -> int:
        a = self.anchors[0]
        return 1 + len(a.decoys) + len(a.perturbed)


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, EPOCH_TAG, epoch])))
    return rng.permutation(n)


def step_generator(seed: int, epoch: int, step: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, STEP_TAG, epoch, step]))
    )


def steps_per_epoch(n_complexes: int, batch_size: int) -> int:
    return (n_complexes + batch_size - 1) // batch_size


def sample_anchor_ids(
    ds: Dataset, batch_size: int, seed: int, epoch: int, step: int
) -> list[str]:
    """Anchor ids for one step: a without-replacement slice of the epoch order."""
    perm = epoch_permutation(len(ds), seed, epoch)
    rows = perm[step * batch_size : (step + 1) * batch_size]
    if rows.size == 0:
        raise ValueError(f"step {step} is past the epoch ({len(ds)} complexes)")
    ids = ds.complex_ids
    return [ids[int(r)] for r in rows]


def draw_pose_ids(
    rng: np.random.Generator, n_decoys: int, k: int, allow_replacement: bool = True
) -> tuple[np.ndarray, bool]:
    """Decoy pose selection for one anchor (see FORMAT.md for the contract)."""
    if n_decoys >= k:
        return rng.permutation(n_decoys)[:k], False
    if n_decoys > 0 and allow_replacement:
        return rng.integers(0, n_decoys, size=k), True
    raise InsufficientDecoys(f"have {n_decoys} decoys, need {k}")


def _decoy_graph(rec: ComplexRecord, pose: DecoyPose, cutoff: float, native: ComplexGraph) -> ComplexGraph:
    # A decoy may drift outside the cutoff of every protein atom; fall back
    # to the native pocket so the sample stays usable (see FORMAT.md).
    try:
        return build_graph(rec, pose=pose, cutoff=cutoff)
    except EmptyPocket:
        moved = native.node_positions.copy()
        moved[native.ligand_node_index] = pose.ligand_coords
        return ComplexGraph(
            node_positions=moved,
            node_features=native.node_features,
            edges=native.edges,
            ligand_node_index=native.ligand_node_index,
        )


def sample_pretrain_batch(
    ds: Dataset,
    batch_size: int = 8,
    seed: int = 0,
    epoch: int = 0,
    step: int = 0,
    sigma: float = 0.5,
    cutoff: float = DEFAULT_CUTOFF,
    decoys_per_anchor: int = DECOYS_PER_ANCHOR,
    perturbed_per_anchor: int = PERTURBED_PER_ANCHOR,
    allow_replacement: bool = True,
) -> PretrainBatch:
    """Deterministic pretraining batch for (seed, epoch, step).

    Anchors are drawn without replacement within an epoch (a seeded
    permutation sliced by step). Per anchor, decoy poses are drawn without
    replacement (with replacement, flagged, when the complex has fewer than
    requested and allow_replacement is set), then the perturbed copies'
    noise is drawn. The exact draw order is part of the dataset format
    contract (FORMAT.md) so external readers can reproduce batches.
    """
    anchor_ids = sample_anchor_ids(ds, batch_size, seed, epoch, step)
    rng = step_generator(seed, epoch, step)
    anchors: list[AnchorSample] = []
    for complex_id in anchor_ids:
        stored = ds.read(complex_id)
        rec = stored.to_record()
        native = build_graph(rec, cutoff=cutoff)
        try:
            pose_ids, replacement_used = draw_pose_ids(
                rng, len(stored.decoys), decoys_per_anchor, allow_replacement
            )
        except InsufficientDecoys:
            raise InsufficientDecoys(
                f"{complex_id} has {len(stored.decoys)} decoys, needs {decoys_per_anchor}"
            )
        decoy_samples = []
        for pid in pose_ids:
            pose = stored.decoys[int(pid)]
            decoy_samples.append(
                DecoySample(
                    graph=_decoy_graph(rec, pose, cutoff, native),
                    rmsd=pose.rmsd,
                    is_positive=pose.rmsd <= ds.index.positive_rmsd_max,
                    pose_index=int(pid),
                )
            )
        perturbed_samples = []
        for _ in range(perturbed_per_anchor):
            graph, noise = perturb_ligand(native, sigma, rng)
            perturbed_samples.append(PerturbedSample(graph=graph, noise=noise, sigma=sigma))
        entry = ds.entry(complex_id)
        anchors.append(
            AnchorSample(
                complex_id=complex_id,
                native=native,
                decoys=decoy_samples,
                perturbed=perturbed_samples,
                max_rmsd=entry.max_rmsd,
                replacement_used=replacement_used,
            )
        )
    return PretrainBatch(anchors=anchors, d_max=ds.d_max, seed=seed, epoch=epoch, step=step)


# --- statistics ----------------------------------------------------------------


@dataclass(slots=True)
class DatasetStats:
    n_complexes: int
    n_decoys: int
    d_max: float | None
    atoms_hist: list[tuple[float, float, int]] = field(default_factory=list)
    decoys_hist: list[tuple[float, float, int]] = field(default_factory=list)
    rmsd_hist: list[tuple[float, float, int]] = field(default_factory=list)
    rmsd_cdf: list[tuple[float, float, float]] = field(default_factory=list)


ATOM_BIN_WIDTH = 10
RMSD_BIN_WIDTH = 0.5


def _binned(values, width) -> list[tuple[float, float, int]]:
    if len(values) == 0:
        return []
    values = np.asarray(values, dtype=np.float64)
    top = int(np.floor(values.max() / width)) + 1
    out = []
    for b in range(top):
        lo, hi = b * width, (b + 1) * width
        count = int(((values >= lo) & (values < hi)).sum())
        out.append((float(lo), float(hi), count))
    return out


def compute_stats(ds: Dataset) -> DatasetStats:
    """The four corpus summaries: atom counts, decoy counts, RMSDs, RMSD CDF."""
    atoms = [e.n_atoms for e in ds.entries]
    decoy_counts = [e.n_decoys for e in ds.entries]
    rmsds: list[float] = []
    for e in ds.entries:
        rmsds.extend(p.rmsd for p in ds.read(e.complex_id).decoys)
    stats = DatasetStats(
        n_complexes=len(ds),
        n_decoys=len(rmsds),
        d_max=ds.d_max,
        atoms_hist=_binned(atoms, ATOM_BIN_WIDTH),
        decoys_hist=_binned(decoy_counts, 1),
        rmsd_hist=_binned(rmsds, RMSD_BIN_WIDTH),
    )
    total = len(rmsds)
    running = 0
    for lo, hi, count in stats.rmsd_hist:
        running += count
        stats.rmsd_cdf.append((lo, hi, running / total))
    return stats


def stats_to_csv(stats: DatasetStats) -> str:
    lines = ["panel,bin_low,bin_high,value"]
    for lo, hi, v in stats.atoms_hist:
        lines.append(f"atoms_per_complex,{lo:g},{hi:g},{v}")
    for lo, hi, v in stats.decoys_hist:
        lines.append(f"decoys_per_complex,{lo:g},{hi:g},{v}")
    for lo, hi, v in stats.rmsd_hist:
        lines.append(f"rmsd,{lo:g},{hi:g},{v}")
    for lo, hi, v in stats.rmsd_cdf:
        lines.append(f"rmsd_cdf,{lo:g},{hi:g},{v!r}")
    return "\n".join(lines) + "\n"
