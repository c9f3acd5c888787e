"""Deterministic synthetic mini-corpus for pipeline and regression tests.

Entries are physically plausible enough for the whole pipeline: a bonded
ligand random walk surrounded by a shell of protein atoms, with guaranteed
pocket contacts, plus an occasional far-away chain that chain isolation must
drop. Everything derives from a single seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from conftest import pdb_line

PROTEIN_NAMES = ("N", "CA", "C", "O")
LIGAND_ELEMENTS = ("C", "C", "C", "N", "O")  # carbon-rich draw pool


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _ligand_walk(rng: np.random.Generator, n_atoms: int) -> np.ndarray:
    coords = [np.zeros(3)]
    while len(coords) < n_atoms:
        base = coords[-1]
        for _ in range(40):
            candidate = base + 1.45 * _unit(rng)
            dists = [np.linalg.norm(candidate - c) for c in coords]
            if min(dists) > 1.1:
                coords.append(candidate)
                break
        else:
            coords.append(base + 1.45 * _unit(rng))
    return np.array(coords)


def make_entry_text(rng: np.random.Generator, with_far_chain: bool) -> str:
    n_lig = int(rng.integers(8, 13))
    ligand = _ligand_walk(rng, n_lig)
    lig_elements = [LIGAND_ELEMENTS[int(rng.integers(0, len(LIGAND_ELEMENTS)))] for _ in range(n_lig)]

    n_protein = int(rng.integers(14, 21))
    protein = []
    for i in range(n_protein):
        anchor = ligand[int(rng.integers(0, n_lig))]
        # first few atoms guarantee 5 A pocket contacts
        radius = rng.uniform(3.0, 4.5) if i < 3 else rng.uniform(3.0, 7.5)
        for _ in range(60):
            candidate = anchor + radius * _unit(rng)
            ok = all(np.linalg.norm(candidate - q) > 2.2 for q in ligand)
            ok = ok and all(np.linalg.norm(candidate - q) > 1.8 for q in protein)
            if ok:
                protein.append(candidate)
                break
        else:
            protein.append(anchor + (radius + 2.0) * _unit(rng))

    lines = [f"REMARK   2 RESOLUTION. {rng.uniform(1.2, 2.4):7.2f} ANGSTROMS."]
    serial = 1
    for i, xyz in enumerate(protein):
        name = PROTEIN_NAMES[i % 4]
        element = {"N": "N", "CA": "C", "C": "C", "O": "O"}[name]
        lines.append(pdb_line(serial, name, "GLY", "A", i // 4 + 1, xyz, element))
        serial += 1
    if with_far_chain:
        far = np.array([25.0, 25.0, 25.0])
        for j in range(3):
            lines.append(pdb_line(serial, PROTEIN_NAMES[j], "GLY", "B", 1, far + j * 1.5, "C"))
            serial += 1
    for i, xyz in enumerate(ligand):
        lines.append(
            pdb_line(serial, f"{lig_elements[i]}{i + 1}", "LIG", "A", 900, xyz,
                     lig_elements[i], hetero=True)
        )
        serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_corpus(out_dir: Path, n_entries: int = 32, seed: int = 2024) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_entries):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        text = make_entry_text(rng, with_far_chain=(i % 3 == 0))
        path = out_dir / f"syn{i:03d}.pdb"
        path.write_text(text)
        paths.append(path)
    return paths


def interactive_edge_labels(dataset, scale: float = 0.05, base: float = 2.0) -> dict[str, float]:
    """Synthetic affinity target: linear in the interactive-edge count."""
    from decoyforge.graphs import build_graph

    labels = {}
    for cid in dataset.complex_ids:
        g = build_graph(dataset.read(cid).to_record())
        labels[cid] = base + scale * g.interactive_edge_count()
    return labels
