"""Element tables: symbols, standard atomic masses, covalent radii, metals.

Masses are IUPAC 2021 standard atomic weights (conventional values), radii
are the Cordero 2008 single-bond covalent radii. `UNKNOWN` is the sentinel
symbol assigned by the parser when the element column is blank or
unrecognized; downstream filters reject it.
"""

from __future__ import annotations

UNKNOWN = "Unknown"

# symbol -> standard atomic mass in Daltons
ATOMIC_MASSES = {
    "H": 1.008, "D": 2.014, "He": 4.003,
    "Li": 6.94, "Be": 9.012, "B": 10.81, "C": 12.011, "N": 14.007,
    "O": 15.999, "F": 18.998, "Ne": 20.180,
    "Na": 22.990, "Mg": 24.305, "Al": 26.982, "Si": 28.085, "P": 30.974,
    "S": 32.06, "Cl": 35.45, "Ar": 39.95,
    "K": 39.098, "Ca": 40.078, "Sc": 44.956, "Ti": 47.867, "V": 50.942,
    "Cr": 51.996, "Mn": 54.938, "Fe": 55.845, "Co": 58.933, "Ni": 58.693,
    "Cu": 63.546, "Zn": 65.38, "Ga": 69.723, "Ge": 72.630, "As": 74.922,
    "Se": 78.971, "Br": 79.904, "Kr": 83.798,
    "Rb": 85.468, "Sr": 87.62, "Y": 88.906, "Zr": 91.224, "Nb": 92.906,
    "Mo": 95.95, "Ru": 101.07, "Rh": 102.906, "Pd": 106.42, "Ag": 107.868,
    "Cd": 112.414, "In": 114.818, "Sn": 118.710, "Sb": 121.760,
    "Te": 127.60, "I": 126.904, "Xe": 131.293,
    "Cs": 132.905, "Ba": 137.327, "W": 183.84, "Re": 186.207, "Os": 190.23,
    "Ir": 192.217, "Pt": 195.084, "Au": 196.967, "Hg": 200.592,
    "Tl": 204.38, "Pb": 207.2, "Bi": 208.980, "U": 238.029,
}

# symbol -> covalent radius in Angstroms (Cordero et al. 2008)
COVALENT_RADII = {
    "H": 0.31, "D": 0.31, "He": 0.28,
    "Li": 1.28, "Be": 0.96, "B": 0.84, "C": 0.76, "N": 0.71, "O": 0.66,
    "F": 0.57, "Ne": 0.58,
    "Na": 1.66, "Mg": 1.41, "Al": 1.21, "Si": 1.11, "P": 1.07, "S": 1.05,
    "Cl": 1.02, "Ar": 1.06,
    "K": 2.03, "Ca": 1.76, "Sc": 1.70, "Ti": 1.60, "V": 1.53, "Cr": 1.39,
    "Mn": 1.39, "Fe": 1.32, "Co": 1.26, "Ni": 1.24, "Cu": 1.32, "Zn": 1.22,
    "Ga": 1.22, "Ge": 1.20, "As": 1.19, "Se": 1.20, "Br": 1.20, "Kr": 1.16,
    "Rb": 2.20, "Sr": 1.95, "Y": 1.90, "Zr": 1.75, "Nb": 1.64, "Mo": 1.54,
    "Ru": 1.46, "Rh": 1.42, "Pd": 1.39, "Ag": 1.45, "Cd": 1.44, "In": 1.42,
    "Sn": 1.39, "Sb": 1.39, "Te": 1.38, "I": 1.39, "Xe": 1.40,
    "Cs": 2.44, "Ba": 2.15, "W": 1.62, "Re": 1.51, "Os": 1.44, "Ir": 1.41,
    "Pt": 1.36, "Au": 1.36, "Hg": 1.32, "Tl": 1.45, "Pb": 1.46, "Bi": 1.48,
    "U": 1.96,
}

# fallback radius for Unknown / unlisted elements
DEFAULT_COVALENT_RADIUS = 0.77

METALS = frozenset({
    "Li", "Be", "Na", "Mg", "Al", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn",
    "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Rb", "Sr", "Y", "Zr", "Nb", "Mo",
    "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Cs", "Ba", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "U",
})

# Fixed one-hot vocabulary for graph node features. The trailing bucket
# absorbs every element not listed (plus Unknown).
FEATURE_VOCAB = ("H", "C", "N", "O", "S", "P", "F", "Cl", "Br", "I")
FEATURE_OTHER_INDEX = len(FEATURE_VOCAB)
NUM_ELEMENT_CLASSES = len(FEATURE_VOCAB) + 1

# Stable u8 codes used by the shard format. 0 is reserved for Unknown.
ELEMENT_CODES = {UNKNOWN: 0}
for _i, _sym in enumerate(sorted(ATOMIC_MASSES), start=1):
    ELEMENT_CODES[_sym] = _i
CODE_TO_ELEMENT = {code: sym for sym, code in ELEMENT_CODES.items()}

_NORMALIZE = {sym.upper(): sym for sym in ATOMIC_MASSES}


def normalize_symbol(raw: str) -> str:
    """Map a raw element field (any case, padded) to a canonical symbol.

    Returns `Unknown` for blank or unrecognized codes.
    """
    code = raw.strip().upper()
    if not code:
        return UNKNOWN
    return _NORMALIZE.get(code, UNKNOWN)


def atomic_mass(symbol: str) -> float:
    try:
        return ATOMIC_MASSES[symbol]
    except KeyError:
        from .errors import UnknownElement

        raise UnknownElement(f"no mass for element {symbol!r}")


def covalent_radius(symbol: str) -> float:
    return COVALENT_RADII.get(symbol, DEFAULT_COVALENT_RADIUS)


def feature_index(symbol: str) -> int:
    """Index of `symbol` in the one-hot node-feature vocabulary."""
    try:
        return FEATURE_VOCAB.index(symbol)
    except ValueError:
        return FEATURE_OTHER_INDEX
