"""Decoy pose generation, ingestion, and RMSD annotation.

Poses come from a seeded perturbation generator (rigid-body move + torsion
noise + steric clash rejection) or from external docking output parsed as
one pose per MODEL. Every pose is annotated with its RMSD from the native
ligand under fixed atom correspondence (no superposition, no
symmetry-equivalent matching).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import any_within, rmsd_batch
from .curation import ComplexRecord
from .errors import AtomNameMismatch, LengthMismatch, NoValidPose
from .structure import atom_coords, require_unique_names

POSITIVE_RMSD_MAX = 2.0  # Angstroms; near-native threshold
BOX_PADDING = 5.0  # Angstroms added to the native bounding box per dimension
_MAX_ATTEMPTS_PER_POSE = 32


@dataclass(slots=True)
class DecoyPose:
    complex_id: str
    pose_index: int
    ligand_coords: np.ndarray  # (n, 3) float64, native atom order
    rmsd: float

    @property
    def is_positive(self) -> bool:
        return self.rmsd <= POSITIVE_RMSD_MAX


@dataclass(slots=True)
class DecoyGenConfig:
    poses_per_complex: int = 100
    translation_sigma: float = 1.0  # Angstroms
    rotation_max: float = math.pi  # radians, uniform in [-max, max]
    torsion_sigma: float = 0.5  # radians
    clash_min_distance: float = 1.5  # Angstroms
    rng_seed: int = 0

    def __post_init__(self):
        if self.poses_per_complex < 1:
            raise ValueError("poses_per_complex must be >= 1")
        # zero sigmas are allowed so identity-limit behaviour stays testable
        for name in ("translation_sigma", "rotation_max", "torsion_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self) -> dict:
        return {
            "poses_per_complex": self.poses_per_complex,
            "translation_sigma": self.translation_sigma,
            "rotation_max": self.rotation_max,
            "torsion_sigma": self.torsion_sigma,
            "clash_min_distance": self.clash_min_distance,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecoyGenConfig":
        return cls(**data)


def rmsd(native: np.ndarray, pose: np.ndarray) -> float:
    """sqrt(mean squared deviation) over index-aligned atoms, in Angstroms."""
    native = np.asarray(native, dtype=np.float64)
    pose = np.asarray(pose, dtype=np.float64)
    if native.shape != pose.shape or native.ndim != 2 or native.shape[1] != 3:
        raise LengthMismatch(f"coordinate shapes differ: {native.shape} vs {pose.shape}")
    if native.shape[0] < 1:
        raise LengthMismatch("need at least one atom")
    return float(rmsd_batch(native, pose[None, :, :])[0])


# --- bond-graph helpers -----------------------------------------------------


def _adjacency(n: int, bonds: list[tuple[int, int]]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _bridges(n: int, bonds: list[tuple[int, int]]) -> set[tuple[int, int]]:
    """Bridge edges (not on any cycle) via iterative lowlink DFS."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e, (i, j) in enumerate(bonds):
        adj[i].append((j, e))
        adj[j].append((i, e))
    visited = [False] * n
    disc = [0] * n
    low = [0] * n
    timer = 0
    out: set[tuple[int, int]] = set()
    for root in range(n):
        if visited[root]:
            continue
        stack = [(root, -1, iter(adj[root]))]
        visited[root] = True
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            node, in_edge, it = stack[-1]
            advanced = False
            for nbr, e in it:
                if e == in_edge:
                    continue
                if not visited[nbr]:
                    visited[nbr] = True
                    disc[nbr] = low[nbr] = timer
                    timer += 1
                    stack.append((nbr, e, iter(adj[nbr])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nbr])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        i, j = bonds[in_edge]
                        out.add((min(i, j), max(i, j)))
        # fall through to next root
    return out


def rotatable_bonds(
    elements_list: list[str], bonds: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Non-ring bonds between heavy atoms that each have >= 2 heavy neighbours."""
    n = len(elements_list)
    heavy = [e not in ("H", "D") for e in elements_list]
    adj = _adjacency(n, bonds)
    heavy_degree = [sum(1 for nbr in adj[i] if heavy[nbr]) for i in range(n)]
    bridges = _bridges(n, bonds)
    out = []
    for i, j in sorted(bridges):
        if heavy[i] and heavy[j] and heavy_degree[i] >= 2 and heavy_degree[j] >= 2:
            out.append((i, j))
    return out


def _side_atoms(n: int, bonds: list[tuple[int, int]], a: int, b: int) -> list[int]:
    """Atoms reachable from b without crossing the (a, b) bond."""
    adj = _adjacency(n, bonds)
    seen = {a, b}
    stack = [b]
    side = [b]
    while stack:
        node = stack.pop()
        for nbr in adj[node]:
            if node == b and nbr == a:
                continue
            if nbr not in seen:
                seen.add(nbr)
                side.append(nbr)
                stack.append(nbr)
    return side


def _rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _complex_rng(seed: int, complex_id: str) -> np.random.Generator:
    # stable per-complex stream so parallel generation stays deterministic
    digest = hashlib.sha256(complex_id.encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))


def _perturb_once(
    native: np.ndarray,
    torsions: list[tuple[int, int]],
    sides: dict[tuple[int, int], list[int]],
    cfg: DecoyGenConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    coords = native.copy()
    for bond in torsions:
        angle = rng.standard_normal() * cfg.torsion_sigma
        a, b = bond
        rot = _rotation_matrix(coords[b] - coords[a], angle)
        idx = sides[bond]
        coords[idx] = (coords[idx] - coords[a]) @ rot.T + coords[a]
    axis = rng.standard_normal(3)
    angle = rng.uniform(-cfg.rotation_max, cfg.rotation_max) if cfg.rotation_max > 0 else 0.0
    if angle != 0.0 and np.linalg.norm(axis) > 0:
        centroid = coords.mean(axis=0)
        coords = (coords - centroid) @ _rotation_matrix(axis, angle).T + centroid
    coords = coords + rng.standard_normal(3) * cfg.translation_sigma
    return coords


def generate_decoys(rec: ComplexRecord, cfg: DecoyGenConfig) -> list[DecoyPose]:
    """Perturbation decoys for one complex, deterministic given cfg.rng_seed.

    Each candidate pose applies per-rotatable-bond torsion noise, a rigid
    rotation about the ligand centroid, and a Gaussian translation. Poses
    must stay inside the native bounding box padded by 5 A per dimension and
    keep every atom at least clash_min_distance from the retained protein
    atoms. A pose slot is dropped after its retry budget; NoValidPose is
    raised only when every slot fails.
    """
    native = rec.ligand.coords
    if native.shape[0] < 1:
        raise NoValidPose(f"{rec.complex_id}: ligand has no atoms")
    protein_xyz = atom_coords(rec.protein_atoms)
    elements_list = [a.element for a in rec.ligand.atoms]
    torsions = rotatable_bonds(elements_list, rec.ligand.covalent_bonds)
    # rotate the smaller side of each bond about the bond line (both
    # endpoints lie on the axis, so either side is a valid torsion)
    sides = {}
    for a, b in torsions:
        side_b = _side_atoms(len(elements_list), rec.ligand.covalent_bonds, a, b)
        side_a = _side_atoms(len(elements_list), rec.ligand.covalent_bonds, b, a)
        sides[(a, b)] = side_b if len(side_b) <= len(side_a) else side_a
    box_lo = native.min(axis=0) - BOX_PADDING
    box_hi = native.max(axis=0) + BOX_PADDING
    rng = _complex_rng(cfg.rng_seed, rec.complex_id)

    poses: list[DecoyPose] = []
    for pose_index in range(cfg.poses_per_complex):
        coords = None
        for _attempt in range(_MAX_ATTEMPTS_PER_POSE):
            candidate = _perturb_once(native, torsions, sides, cfg, rng)
            if (candidate < box_lo).any() or (candidate > box_hi).any():
                continue
            if protein_xyz.shape[0] and any_within(
                candidate, protein_xyz, cfg.clash_min_distance
            ):
                continue
            coords = candidate
            break
        if coords is None:
            continue
        poses.append(
            DecoyPose(
                complex_id=rec.complex_id,
                pose_index=len(poses),
                ligand_coords=coords,
                rmsd=rmsd(native, coords),
            )
        )
    if not poses:
        raise NoValidPose(f"{rec.complex_id}: all candidate poses clashed or left the box")
    return poses


# --- external pose ingestion -------------------------------------------------


def _split_models(text: str) -> list[list[str]]:
    """HETATM line blocks, one per MODEL (whole file if no MODEL records)."""
    models: list[list[str]] = []
    current: list[str] | None = None
    saw_model = False
    for line in text.splitlines():
        record = line[:6].strip()
        if record == "MODEL":
            saw_model = True
            current = []
        elif record == "ENDMDL":
            if current is not None:
                models.append(current)
            current = None
        elif record == "HETATM":
            if current is not None:
                current.append(line)
            elif not saw_model:
                if not models:
                    models.append([])
                models[0].append(line)
    return [m for m in models if m]


def ingest_poses(rec: ComplexRecord, pose_texts: list[str]) -> list[DecoyPose]:
    """Annotate externally docked poses (PDB HETATM blocks, one per MODEL).

    Pose atoms are matched to the native ligand by atom name and reordered
    to native order before computing RMSD. Raises AtomNameMismatch when the
    name sets differ and AmbiguousAtomNames when names are duplicated.
    """
    from .structure import _parse_atom_line  # lenient fixed-width reader

    name_to_index = require_unique_names(rec.ligand)
    native = rec.ligand.coords
    n = native.shape[0]
    poses: list[DecoyPose] = []
    for text in pose_texts:
        for block in _split_models(text):
            atoms = [_parse_atom_line(line, i + 1, hetero=True) for i, line in enumerate(block)]
            names = [a.name for a in atoms]
            if len(set(names)) != len(names):
                from .errors import AmbiguousAtomNames

                dupes = sorted({x for x in names if names.count(x) > 1})
                raise AmbiguousAtomNames(f"duplicate pose atom names: {dupes}")
            if set(names) != set(name_to_index) or len(atoms) != n:
                missing = sorted(set(name_to_index) - set(names))
                extra = sorted(set(names) - set(name_to_index))
                raise AtomNameMismatch(
                    f"{rec.complex_id}: pose atoms do not match native ligand "
                    f"(missing={missing}, extra={extra})"
                )
            coords = np.zeros((n, 3), dtype=np.float64)
            for atom in atoms:
                coords[name_to_index[atom.name]] = atom.position
            poses.append(
                DecoyPose(
                    complex_id=rec.complex_id,
                    pose_index=len(poses),
                    ligand_coords=coords,
                    rmsd=rmsd(native, coords),
                )
            )
    return poses
