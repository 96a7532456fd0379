"""Generalized n-qudit Pauli (Weyl-Heisenberg) algebra.

Operators are words X^x Z^z per site, where for dimension d

    X^r : |s> -> |s + r mod d>        Z^r : |s> -> w^{rs} |s>,   w = exp(2*pi*i/d)

with the X factor applied after (to the left of) the Z factor. Labels are
exponent vectors in Z_d^{2n}; no extra phase normalization is applied, so
the d > 2 words are in general non-Hermitian unitaries.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .linalg import tensor

DEFAULT_LABEL_CAP = 4096


@dataclass(frozen=True)
class PauliLabel:
    """Exponent vectors (x, z) in Z_d^n labelling X^{x_1}Z^{z_1} (x) ... (x) X^{x_n}Z^{z_n}."""

    d: int
    n: int
    x: tuple[int, ...]
    z: tuple[int, ...]

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("qudit dimension must be >= 2")
        if self.n < 1:
            raise ValueError("qudit count must be >= 1")
        if len(self.x) != self.n or len(self.z) != self.n:
            raise ValueError("exponent vectors must have length n")
        object.__setattr__(self, "x", tuple(int(v) % self.d for v in self.x))
        object.__setattr__(self, "z", tuple(int(v) % self.d for v in self.z))

    @property
    def is_identity(self) -> bool:
        return not any(self.x) and not any(self.z)


def zero_label(d: int, n: int) -> PauliLabel:
    return PauliLabel(d, n, (0,) * n, (0,) * n)


@functools.lru_cache(maxsize=None)
def omega(d: int) -> complex:
    """Primitive d-th root of unity, computed once per dimension."""
    return np.exp(2j * np.pi / d)


@functools.lru_cache(maxsize=None)
def _site_matrix(d: int, x: int, z: int) -> np.ndarray:
    w = omega(d)
    m = np.zeros((d, d), dtype=np.complex128)
    for s in range(d):
        m[(s + x) % d, s] = w ** (z * s)
    m.flags.writeable = False
    return m


def pauli_matrix(label: PauliLabel) -> np.ndarray:
    """Dense d^n x d^n matrix of the labelled Pauli word."""
    out = _site_matrix(label.d, label.x[0], label.z[0])
    for x, z in zip(label.x[1:], label.z[1:]):
        out = tensor(out, _site_matrix(label.d, x, z))
    return out


def symplectic_product(a: PauliLabel, b: PauliLabel) -> int:
    """(a, b)_Sp = a_x . b_z - a_z . b_x mod d.

    Governs commutation: with the X-after-Z word convention used here the
    exact identity is P_a P_b = w^{(b,a)_Sp} P_b P_a. The two argument
    orders agree mod 2, so the distinction only shows for d > 2.
    """
    if a.d != b.d or a.n != b.n:
        raise ValueError("labels live on different systems")
    acc = 0
    for ax, az, bx, bz in zip(a.x, a.z, b.x, b.z):
        acc += ax * bz - az * bx
    return acc % a.d


def enumerate_paulis(d: int, n: int, cap: int = DEFAULT_LABEL_CAP) -> list[PauliLabel]:
    """All d^{2n} labels in lexicographic order, identity first."""
    count = d ** (2 * n)
    if count > cap:
        raise ValueError(f"{count} labels exceed the cap of {cap}")
    labels = []
    for exps in itertools.product(range(d), repeat=2 * n):
        labels.append(PauliLabel(d, n, exps[:n], exps[n:]))
    return labels


@functools.lru_cache(maxsize=None)
def pauli_basis(d: int, n: int) -> np.ndarray:
    """Stacked (d^{2n}, d^n, d^n) array of all Pauli words, identity first.

    Orthogonal basis: tr(P_i† P_j) = d^n delta_ij. Read-only and cached.
    """
    mats = np.stack([pauli_matrix(l) for l in enumerate_paulis(d, n)])
    mats.flags.writeable = False
    return mats


def character_sum(q: PauliLabel) -> complex:
    """sum_x w^{(q, x)_Sp} over all labels x: d^{2n} at the identity, 0 elsewhere."""
    w = omega(q.d)
    total = 0.0 + 0.0j
    for x in enumerate_paulis(q.d, q.n):
        total += w ** symplectic_product(q, x)
    return total


def format_label(label: PauliLabel) -> str:
    """Text form `x:<exponents>;z:<exponents>` used by the CLI and config files."""
    return "x:{};z:{}".format(
        ",".join(str(v) for v in label.x),
        ",".join(str(v) for v in label.z),
    )


def parse_label(text: str, d: int, n: int) -> PauliLabel:
    parts = dict(
        chunk.split(":", 1) for chunk in text.strip().split(";") if chunk
    )
    if set(parts) != {"x", "z"}:
        raise ValueError(f"bad Pauli label {text!r}; expected `x:...;z:...`")
    x = tuple(int(v) for v in parts["x"].split(","))
    z = tuple(int(v) for v in parts["z"].split(","))
    return PauliLabel(d, n, x, z)
