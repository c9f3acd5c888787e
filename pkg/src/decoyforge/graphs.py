"""Complex-graph construction from curated records and poses.

Nodes are pocket protein atoms (within the distance cutoff of any ligand
atom) plus all ligand atoms. Edge classes: protein-protein and
protein-ligand (interactive) pairs within the cutoff, plus the ligand's
covalent bonds. Node features are a one-hot element class with an is-ligand
flag appended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elements
from ._kernels import cross_pairs, pocket_mask, self_pairs
from .curation import ComplexRecord
from .decoys import DecoyPose
from .errors import EmptyPocket
from .structure import atom_coords

DEFAULT_CUTOFF = 5.0  # Angstroms

EDGE_PROTEIN_PROTEIN = 0
EDGE_LIGAND_COVALENT = 1
EDGE_INTERACTIVE = 2
EDGE_TYPE_NAMES = ("ProteinProtein", "LigandCovalent", "Interactive")
NUM_EDGE_TYPES = 3

NODE_FEATURE_DIM = elements.NUM_ELEMENT_CLASSES + 1  # one-hot element + is-ligand flag


@dataclass(slots=True)
class ComplexGraph:
    node_positions: np.ndarray  # (n, 3) float64
    node_features: np.ndarray  # (n, NODE_FEATURE_DIM) float64
    edges: np.ndarray  # (e, 3) int64: i, j, edge_type; undirected, i/j order fixed
    ligand_node_index: np.ndarray  # int64 indices of ligand nodes

    @property
    def n_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def n_ligand(self) -> int:
        return self.ligand_node_index.shape[0]

    @property
    def ligand_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.ligand_node_index] = True
        return mask

    def interactive_edge_count(self) -> int:
        return int((self.edges[:, 2] == EDGE_INTERACTIVE).sum())


def _one_hot_features(symbols: list[str], is_ligand: np.ndarray) -> np.ndarray:
    n = len(symbols)
    feats = np.zeros((n, NODE_FEATURE_DIM), dtype=np.float64)
    for i, sym in enumerate(symbols):
        feats[i, elements.feature_index(sym)] = 1.0
    feats[:, -1] = is_ligand
    return feats


def build_graph(
    rec: ComplexRecord, pose: DecoyPose | None = None, cutoff: float = DEFAULT_CUTOFF
) -> ComplexGraph:
    """Build the complex graph for the native pose or a decoy pose.

    Decoy geometry drives both the pocket filter and the edges, so a decoy
    graph generally differs from the native one in topology, not just
    coordinates. Raises EmptyPocket when no protein atom is within the
    cutoff of the (possibly decoy) ligand.
    """
    ligand_xyz = pose.ligand_coords if pose is not None else rec.ligand.coords
    if pose is not None and ligand_xyz.shape[0] != len(rec.ligand.atoms):
        raise ValueError(
            f"pose has {ligand_xyz.shape[0]} atoms, ligand has {len(rec.ligand.atoms)}"
        )
    protein_xyz = atom_coords(rec.protein_atoms)
    keep = pocket_mask(protein_xyz, ligand_xyz, cutoff)
    pocket_indices = np.nonzero(keep)[0]
    if pocket_indices.size == 0:
        raise EmptyPocket(f"{rec.complex_id}: no protein atom within {cutoff:g} A of the ligand")

    pocket_xyz = protein_xyz[pocket_indices]
    n_pocket = pocket_xyz.shape[0]
    n_ligand = ligand_xyz.shape[0]
    positions = np.concatenate([pocket_xyz, ligand_xyz], axis=0)

    symbols = [rec.protein_atoms[i].element for i in pocket_indices]
    symbols += [a.element for a in rec.ligand.atoms]
    is_ligand = np.zeros(n_pocket + n_ligand, dtype=np.float64)
    is_ligand[n_pocket:] = 1.0

    pp = self_pairs(pocket_xyz, cutoff)
    inter = cross_pairs(pocket_xyz, ligand_xyz, cutoff)
    rows = []
    if pp.shape[0]:
        rows.append(np.column_stack([pp, np.full(pp.shape[0], EDGE_PROTEIN_PROTEIN, np.int64)]))
    if rec.ligand.covalent_bonds:
        lc = np.array(rec.ligand.covalent_bonds, dtype=np.int64) + n_pocket
        rows.append(np.column_stack([lc, np.full(lc.shape[0], EDGE_LIGAND_COVALENT, np.int64)]))
    if inter.shape[0]:
        shifted = np.column_stack([inter[:, 0], inter[:, 1] + n_pocket])
        rows.append(
            np.column_stack([shifted, np.full(inter.shape[0], EDGE_INTERACTIVE, np.int64)])
        )
    edges = (
        np.concatenate(rows, axis=0) if rows else np.zeros((0, 3), dtype=np.int64)
    )
    return ComplexGraph(
        node_positions=positions,
        node_features=_one_hot_features(symbols, is_ligand),
        edges=edges,
        ligand_node_index=np.arange(n_pocket, n_pocket + n_ligand, dtype=np.int64),
    )


def perturb_ligand(
    g: ComplexGraph, sigma: float, rng: np.random.Generator
) -> tuple[ComplexGraph, np.ndarray]:
    """Copy of `g` with i.i.d. Gaussian noise on the ligand coordinates.

    Only ligand atoms are noised; protein positions, features, and the edge
    list are untouched (topology stays frozen at the pre-noise geometry).
    Returns the graph and the (n_ligand, 3) noise used as the denoising
    target.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    noise = rng.standard_normal((g.n_ligand, 3)) * sigma
    positions = g.node_positions.copy()
    positions[g.ligand_node_index] += noise
    perturbed = ComplexGraph(
        node_positions=positions,
        node_features=g.node_features,
        edges=g.edges,
        ligand_node_index=g.ligand_node_index,
    )
    return perturbed, noise


def graph_to_json(g: ComplexGraph) -> dict:
    """Debug/interop export mirroring the in-memory arrays exactly."""
    return {
        "positions": g.node_positions.tolist(),
        "features": g.node_features.tolist(),
        "edges": g.edges.tolist(),
        "ligand_index": g.ligand_node_index.tolist(),
    }


def graph_from_json(data: dict) -> ComplexGraph:
    return ComplexGraph(
        node_positions=np.asarray(data["positions"], dtype=np.float64).reshape(-1, 3),
        node_features=np.asarray(data["features"], dtype=np.float64),
        edges=np.asarray(data["edges"], dtype=np.int64).reshape(-1, 3),
        ligand_node_index=np.asarray(data["ligand_index"], dtype=np.int64),
    )
