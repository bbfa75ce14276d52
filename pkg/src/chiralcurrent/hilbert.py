"""Tensor-product operator algebra for N three-level atoms and one cavity mode.

Factor ordering is fixed: the cavity (Fock states ``0..n_max``) comes first,
followed by atoms ``0..N-1``. Atomic levels are ordered ``(s, g, e)`` and
indexed ``(0, 1, 2)``. A two-level layout keeps only ``(s, g)``, which is the
ground manifold left after adiabatic elimination and the carrier for the
effective spin models.

All operators are dense ``complex128`` arrays. The largest spaces in use are
``(n_max+1) * 3**3`` for the full three-level model and ``2**5`` for effective
spins, so sparse storage buys nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from itertools import product
from typing import Iterable, Sequence

import numpy as np

LEVELS = ("s", "g", "e")
LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS)}


@dataclass(frozen=True)
class SpaceLayout:
    """Shape of the composite Hilbert space.

    Parameters
    ----------
    n_atoms : int
        Number of atoms.
    fock_cutoff : int or None
        Highest photon number kept. ``None`` drops the cavity factor entirely
        (pure spin space).
    levels : int
        3 for ``(s, g, e)`` atoms, 2 for the ``(s, g)`` ground manifold.
    """

    n_atoms: int
    fock_cutoff: int | None = 4
    levels: int = 3

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.fock_cutoff is not None and self.fock_cutoff < 0:
            raise ValueError(f"fock_cutoff must be >= 0, got {self.fock_cutoff}")

    @property
    def has_cavity(self) -> bool:
        return self.fock_cutoff is not None

    @property
    def cavity_dim(self) -> int:
        return 1 if self.fock_cutoff is None else self.fock_cutoff + 1

    @property
    def atom_dim(self) -> int:
        return self.levels**self.n_atoms

    @property
    def dim(self) -> int:
        return self.cavity_dim * self.atom_dim

    @property
    def factor_dims(self) -> list[int]:
        dims = [self.levels] * self.n_atoms
        return [self.cavity_dim] + dims if self.has_cavity else dims

    def with_fock_cutoff(self, n_max: int | None) -> "SpaceLayout":
        return SpaceLayout(self.n_atoms, n_max, self.levels)

    def spin_layout(self) -> "SpaceLayout":
        """The cavity-free two-level layout with the same atoms."""
        return SpaceLayout(self.n_atoms, None, 2)


def _check_site(site: int, layout: SpaceLayout) -> None:
    if not 0 <= site < layout.n_atoms:
        raise ValueError(f"site {site} out of range for {layout.n_atoms} atoms")


def _level(name: str | int, layout: SpaceLayout) -> int:
    idx = LEVEL_INDEX.get(name) if isinstance(name, str) else int(name)
    if idx is None or not 0 <= idx < layout.levels:
        raise ValueError(f"level {name!r} not available in a {layout.levels}-level atom")
    return idx


def embed_product(ops: Iterable[tuple[int, np.ndarray]], layout: SpaceLayout) -> np.ndarray:
    """Kronecker embedding of local atomic operators, identity elsewhere.

    ``ops`` is a list of ``(site, local_matrix)``; sites must be distinct.
    The cavity factor is left as identity; use :func:`embed_cavity` for that.
    """
    local = {}
    for site, op in ops:
        _check_site(site, layout)
        if site in local:
            raise ValueError(f"duplicate site {site} in product embedding")
        op = np.asarray(op, dtype=complex)
        if op.shape != (layout.levels, layout.levels):
            raise ValueError(f"local operator at site {site} has shape {op.shape}")
        local[site] = op
    eye = np.eye(layout.levels, dtype=complex)
    factors = [local.get(k, eye) for k in range(layout.n_atoms)]
    if layout.has_cavity:
        factors.insert(0, np.eye(layout.cavity_dim, dtype=complex))
    return reduce(np.kron, factors)


def embed_cavity(op: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    if not layout.has_cavity:
        raise ValueError("layout has no cavity factor")
    return np.kron(np.asarray(op, dtype=complex), np.eye(layout.atom_dim, dtype=complex))


def local_transition(a: str | int, b: str | int, levels: int = 3) -> np.ndarray:
    """``|a><b|`` on a single atom."""
    lay = SpaceLayout(1, None, levels)
    out = np.zeros((levels, levels), dtype=complex)
    out[_level(a, lay), _level(b, lay)] = 1.0
    return out


def atomic_transition(site: int, a: str | int, b: str | int, layout: SpaceLayout) -> np.ndarray:
    """Embedded ``sigma_site^{ab} = |a><b|``."""
    _check_site(site, layout)
    return embed_product([(site, local_transition(a, b, layout.levels))], layout)


def cavity_annihilation(layout: SpaceLayout) -> np.ndarray:
    n = np.arange(1, layout.cavity_dim)
    return embed_cavity(np.diag(np.sqrt(n), 1), layout)


def cavity_number(layout: SpaceLayout) -> np.ndarray:
    return embed_cavity(np.diag(np.arange(layout.cavity_dim, dtype=float)), layout)


def local_pauli(axis: str, levels: int = 3) -> np.ndarray:
    """Pauli matrix on the ``{s, g}`` pair, zero on ``|e>``.

    ``x = gs + sg``, ``y = i(sg - gs)``, ``z = gg - ss``: with ``|g>`` as the
    up state these obey the standard algebra ``xy = iz``.
    """
    gs = local_transition("g", "s", levels)
    sg = local_transition("s", "g", levels)
    if axis == "x":
        return gs + sg
    if axis == "y":
        return 1j * (sg - gs)
    if axis == "z":
        return local_transition("g", "g", levels) - local_transition("s", "s", levels)
    raise ValueError(f"unknown Pauli axis {axis!r}")


def ground_pauli(site: int, axis: str, layout: SpaceLayout) -> np.ndarray:
    _check_site(site, layout)
    return embed_product([(site, local_pauli(axis, layout.levels))], layout)


def identity(layout: SpaceLayout) -> np.ndarray:
    return np.eye(layout.dim, dtype=complex)


def basis_labels(layout: SpaceLayout) -> list[tuple[int, tuple[str, ...]]]:
    """``(photons, atom_levels)`` for each basis index, in storage order."""
    names = LEVELS[: layout.levels]
    atoms = list(product(names, repeat=layout.n_atoms))
    return [(n, cfg) for n in range(layout.cavity_dim) for cfg in atoms]


def basis_index(layout: SpaceLayout, levels: Sequence[str], photons: int = 0) -> int:
    if len(levels) != layout.n_atoms:
        raise ValueError(f"expected {layout.n_atoms} atomic levels, got {len(levels)}")
    if not 0 <= photons < layout.cavity_dim:
        raise ValueError(f"photon number {photons} outside cutoff")
    idx = 0
    for lev in levels:
        idx = idx * layout.levels + _level(lev, layout)
    return photons * layout.atom_dim + idx


def product_state(layout: SpaceLayout, levels: Sequence[str] | str, photons: int = 0) -> np.ndarray:
    """Basis ket, e.g. ``product_state(lay, "gss")``."""
    psi = np.zeros(layout.dim, dtype=complex)
    psi[basis_index(layout, list(levels), photons)] = 1.0
    return psi


def ground_vacuum_indices(layout: SpaceLayout) -> np.ndarray:
    """Indices of ``|0> x {s,g}^N`` inside ``layout``, in spin-layout order.

    This is the embedding of an effective-spin state into a cavity model.
    """
    spin = layout.spin_layout()
    return np.array([basis_index(layout, cfg, 0) for _, cfg in basis_labels(spin)])


def excitation_charge(layout: SpaceLayout) -> np.ndarray:
    """``n_photons - n_g`` per basis state.

    Every Hamiltonian in the reduction chain conserves this number; decay
    ``e -> g`` lowers it by one and ``e -> s`` leaves it alone.
    """
    return np.array([n - cfg.count("g") for n, cfg in basis_labels(layout)])


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol)


def is_unitary(op: np.ndarray, tol: float = 1e-10) -> bool:
    eye = np.eye(op.shape[0])
    return bool(np.max(np.abs(op.conj().T @ op - eye), initial=0.0) <= tol)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a
