"""Model definitions for N identical d-level atoms coupled to one photon mode.

Hamiltonian convention (used identically by every solver in this package):

    H = omega a'a  +  sum_i sum_j eps_j |j><j|_i
        + (1/sqrt(N)) (a + a') sum_i sum_{j<k} lam_jk (|j><k|_i + |k><j|_i)
        + kappa (a + a')^2

Level energies are measured from the ground level, eps_0 = 0, and the
coupling matrix lam is real symmetric with zero diagonal.  The 1/sqrt(N)
scaling makes the energy per atom finite in the thermodynamic limit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class AtomSpec:
    """Level energies and transition couplings of a single d-level atom.

    energies : ascending, energies[0] == 0, length d >= 2
    couplings : real symmetric (d, d) matrix, zero diagonal; entry (j, k)
        is the coupling strength of the j <-> k transition to the photon.
    """

    energies: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        energies = _frozen_array(self.energies)
        couplings = _frozen_array(self.couplings)
        if energies.ndim != 1 or energies.size < 2:
            raise ValueError("energies must be a 1d sequence with at least 2 levels")
        d = energies.size
        if energies[0] != 0.0:
            raise ValueError("energies[0] must be 0 (ground level sets the zero)")
        if np.any(np.diff(energies) < 0):
            raise ValueError("energies must be sorted ascending")
        if couplings.shape != (d, d):
            raise ValueError(f"couplings must have shape ({d}, {d}), got {couplings.shape}")
        if np.any(np.diag(couplings) != 0.0):
            raise ValueError("couplings must have zero diagonal")
        ij = np.argwhere(couplings != couplings.T)
        if ij.size:
            j, k = ij[0]
            raise ValueError(f"couplings must be symmetric, mismatch at ({j}, {k})")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "couplings", couplings)

    @property
    def d(self) -> int:
        return self.energies.size

    def coupling(self, j: int, k: int) -> float:
        return float(self.couplings[j, k])

    def with_couplings(self, updates: Mapping[tuple[int, int], float]) -> "AtomSpec":
        """Return a copy with the given (j, k) couplings replaced (symmetrically)."""
        lam = np.array(self.couplings)
        for (j, k), value in updates.items():
            if j == k:
                raise ValueError("cannot set a diagonal coupling")
            lam[j, k] = lam[k, j] = value
        return AtomSpec(self.energies, lam)


@dataclass(frozen=True)
class DickeModel:
    """One photon mode (frequency omega) coupled to n_atoms copies of atom.

    kappa is the strength of the diamagnetic (a + a')^2 term.
    """

    omega: float
    atom: AtomSpec
    n_atoms: int = 1
    kappa: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError("n_atoms must be a positive integer")
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def omega_eff(self) -> float:
        """Photon stiffness omega + 4 kappa seen by the mean-field quadratic term."""
        return self.omega + 4.0 * self.kappa

    def with_couplings(self, updates: Mapping[tuple[int, int], float]) -> "DickeModel":
        return dataclasses.replace(self, atom=self.atom.with_couplings(updates))

    def with_kappa(self, kappa: float) -> "DickeModel":
        return dataclasses.replace(self, kappa=kappa)

    def with_n_atoms(self, n_atoms: int) -> "DickeModel":
        return dataclasses.replace(self, n_atoms=n_atoms)


def two_level(omega: float, omega0: float, coupling: float,
              kappa: float = 0.0, n_atoms: int = 1) -> DickeModel:
    """Standard two-level Dicke model with level splitting omega0."""
    atom = AtomSpec([0.0, omega0], [[0.0, coupling], [coupling, 0.0]])
    return DickeModel(omega, atom, n_atoms=n_atoms, kappa=kappa)


def ladder(omega: float, eps1: float, eps2: float, coupling01: float,
           coupling12: float, kappa: float = 0.0, n_atoms: int = 1) -> DickeModel:
    """Three-level chain 0-1-2 with no direct 0 <-> 2 coupling."""
    atom = AtomSpec(
        [0.0, eps1, eps2],
        [[0.0, coupling01, 0.0],
         [coupling01, 0.0, coupling12],
         [0.0, coupling12, 0.0]],
    )
    return DickeModel(omega, atom, n_atoms=n_atoms, kappa=kappa)


def single_atom_matrix(atom: AtomSpec, x: float) -> np.ndarray:
    """Single-atom Hamiltonian diag(eps) + 2 x lam at photon amplitude x.

    x may be negative; the mean-field solvers only use x >= 0 (the two signs
    are related by the photon parity of H).
    """
    return np.diag(atom.energies) + (2.0 * x) * atom.couplings


@dataclass(frozen=True)
class TrkReport:
    """Ground-transition oscillator-strength bound on the diamagnetic term.

    kappa_min = lam_01^2 / eps_1 is the two-level no-go threshold: a model
    with kappa >= kappa_min cannot develop the 0 <-> 1 instability.  The
    bound says nothing about transitions among excited levels, so those are
    listed as unconstrained.
    """

    kappa_min: float
    kappa_saturates_ground: bool
    unconstrained_transitions: tuple[tuple[int, int], ...]


def trk_report(model: DickeModel) -> TrkReport:
    atom = model.atom
    eps1 = float(atom.energies[1])
    if eps1 == 0.0:
        raise ValueError("degenerate ground transition")
    kappa_min = atom.coupling(0, 1) ** 2 / eps1
    unconstrained = tuple(
        (j, k)
        for j in range(1, atom.d)
        for k in range(j + 1, atom.d)
        if atom.couplings[j, k] != 0.0
    )
    # 4 ulp slack so kappa = lam01**2/eps1 computed in floats still counts
    slack = 4.0 * float(np.spacing(kappa_min))
    return TrkReport(
        kappa_min=float(kappa_min),
        kappa_saturates_ground=bool(model.kappa >= kappa_min - slack),
        unconstrained_transitions=unconstrained,
    )


# ---------------------------------------------------------------------------
# declarative model documents
#
# {"omega": 1.0, "kappa": 0.0, "n_atoms": 1, "ladder": false,
#  "atom": {"energies": [0, 1, 2], "couplings": [[...], ...]}}
#
# couplings may be nested rows or a flat row-major list of d*d values.
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"omega", "kappa", "n_atoms", "atom", "ladder"}
_ATOM_KEYS = {"energies", "couplings"}


def _require_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _number_list(value, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, f"expected a list, got {type(value).__name__}")
    return [_require_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def model_from_dict(doc: Mapping, path: str = "model") -> DickeModel:
    """Build a DickeModel from a plain dict, reporting errors by field path."""
    if not isinstance(doc, Mapping):
        raise ConfigError(path, "expected a mapping")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    if "atom" not in doc:
        raise ConfigError(f"{path}.atom", "missing required key")
    atom_doc = doc["atom"]
    if not isinstance(atom_doc, Mapping):
        raise ConfigError(f"{path}.atom", "expected a mapping")
    unknown = set(atom_doc) - _ATOM_KEYS
    if unknown:
        raise ConfigError(f"{path}.atom.{sorted(unknown)[0]}", "unknown key")
    for key in _ATOM_KEYS:
        if key not in atom_doc:
            raise ConfigError(f"{path}.atom.{key}", "missing required key")

    energies = _number_list(atom_doc["energies"], f"{path}.atom.energies")
    d = len(energies)
    raw = atom_doc["couplings"]
    cpath = f"{path}.atom.couplings"
    if not isinstance(raw, (list, tuple)):
        raise ConfigError(cpath, f"expected a list, got {type(raw).__name__}")
    if raw and isinstance(raw[0], (list, tuple)):
        rows = []
        for i, row in enumerate(raw):
            rows.append(_number_list(row, f"{cpath}[{i}]"))
            if len(rows[-1]) != d:
                raise ConfigError(f"{cpath}[{i}]", f"expected {d} entries")
        if len(rows) != d:
            raise ConfigError(cpath, f"expected {d} rows")
        couplings = rows
    else:
        flat = _number_list(raw, cpath)
        if len(flat) != d * d:
            raise ConfigError(cpath, f"expected {d * d} row-major entries, got {len(flat)}")
        couplings = np.array(flat).reshape(d, d)

    omega = _require_number(doc.get("omega", 1.0), f"{path}.omega")
    kappa = _require_number(doc.get("kappa", 0.0), f"{path}.kappa")
    n_atoms = doc.get("n_atoms", 1)
    if isinstance(n_atoms, bool) or not isinstance(n_atoms, int):
        raise ConfigError(f"{path}.n_atoms", "expected an integer")

    try:
        atom = AtomSpec(energies, couplings)
        model = DickeModel(omega, atom, n_atoms=n_atoms, kappa=kappa)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc

    if "ladder" in doc:
        flag = doc["ladder"]
        if not isinstance(flag, bool):
            raise ConfigError(f"{path}.ladder", "expected a boolean")
        if flag:
            if atom.d != 3:
                raise ConfigError(f"{path}.ladder", "ladder models must have exactly 3 levels")
            if atom.couplings[0, 2] != 0.0:
                raise ConfigError(f"{path}.atom.couplings", "ladder models require coupling (0, 2) == 0")
    return model


def model_to_dict(model: DickeModel) -> dict:
    return {
        "omega": model.omega,
        "kappa": model.kappa,
        "n_atoms": model.n_atoms,
        "atom": {
            "energies": [float(e) for e in model.atom.energies],
            "couplings": [[float(v) for v in row] for row in model.atom.couplings],
        },
    }
