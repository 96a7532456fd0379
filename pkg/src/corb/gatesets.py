"""Benchmarkable gate-set families and the twirl-annihilation condition.

A set G = {U_i} can be driven by the coherent benchmarking engines when

    sum_i U_i† P_j U_i  =  |G| * I   (j = identity label)
                        =  0         (every other Pauli label j)

holds over the full Pauli basis of the target space. This module builds
the families that satisfy it (Pauli words, Clifford closures, controlled
Pauli sets, dressed sets P_i @ U) and checks the condition numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import TOL, as_matrix, assert_unitary, dagger, tensor
from .paulis import (
    DEFAULT_LABEL_CAP,
    PauliLabel,
    enumerate_paulis,
    pauli_basis,
    pauli_matrix,
)

CLOSURE_PRODUCT_CAP = 200_000

# Families with a feasible exact enumeration; larger groups are rejected
# rather than approximated.
CLIFFORD_SIZES = {(2, 1): 24, (3, 1): 216, (2, 2): 11520}


@dataclass(frozen=True)
class GateSet:
    """Ordered list of unitaries on (C^d)^(x)n with family metadata."""

    d: int
    n: int
    family: str
    elements: tuple[np.ndarray, ...]
    labels: tuple | None = None

    def __post_init__(self):
        if len(self.elements) < 1:
            raise ValueError("gate set must contain at least one element")
        dim = self.d ** self.n
        frozen = []
        for i, u in enumerate(self.elements):
            u = assert_unitary(u, what=f"{self.family} element {i}")
            if u.shape != (dim, dim):
                raise ValueError(
                    f"element {i} has shape {u.shape}, expected ({dim}, {dim})"
                )
            u = u.copy()
            u.flags.writeable = False
            frozen.append(u)
        object.__setattr__(self, "elements", tuple(frozen))

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.d ** self.n

    def stacked(self) -> np.ndarray:
        return np.stack(self.elements)


@dataclass(frozen=True)
class ConditionReport:
    """Worst-case residual of the twirl-annihilation check."""

    passed: bool
    worst_label: PauliLabel
    worst_residual: float
    tolerance: float


def check_condition(gate_set: GateSet, tolerance: float | None = None,
                    cap: int = DEFAULT_LABEL_CAP) -> ConditionReport:
    """Verify sum_i U_i† P_j U_i = |G| I (j = o) / 0 (j != o) over all labels."""
    if tolerance is None:
        tolerance = TOL.channel * len(gate_set)
    labels = enumerate_paulis(gate_set.d, gate_set.n, cap=cap)
    basis = pauli_basis(gate_set.d, gate_set.n)
    stack = gate_set.stacked()
    conj = stack.conj()
    eye = np.eye(gate_set.dim)
    worst = -1.0
    worst_label = labels[0]
    for label, pmat in zip(labels, basis):
        twirl = np.einsum("gba,bc,gcd->ad", conj, pmat, stack, optimize=True)
        if label.is_identity:
            residual = float(np.max(np.abs(twirl - len(gate_set) * eye)))
        else:
            residual = float(np.max(np.abs(twirl)))
        if residual > worst:
            worst = residual
            worst_label = label
    return ConditionReport(worst <= tolerance, worst_label, worst, tolerance)


def normalizer_residual(gate_set: GateSet, cap: int = DEFAULT_LABEL_CAP) -> float:
    """Worst deviation of C P C† from the nearest phase-scaled Pauli word.

    Zero (to rounding) exactly when every element normalizes the Pauli
    group, i.e. is a Clifford operation.
    """
    basis = pauli_basis(gate_set.d, gate_set.n)
    if basis.shape[0] > cap:
        raise ValueError(f"{basis.shape[0]} labels exceed the cap of {cap}")
    stack = gate_set.stacked()
    dim = gate_set.dim
    rows = np.arange(len(stack))
    worst = 0.0
    for pmat in basis:
        conjugated = np.matmul(np.matmul(stack, pmat),
                               stack.conj().transpose(0, 2, 1))
        coeffs = np.einsum("xij,gij->gx", basis.conj(), conjugated) / dim
        best = np.argmax(np.abs(coeffs), axis=1)
        nearest = coeffs[rows, best][:, None, None] * basis[best]
        worst = max(worst, float(np.max(np.abs(conjugated - nearest))))
    return worst


def sequence_inverse(sequence: Sequence[int], gate_set: GateSet) -> np.ndarray:
    """Exact inverse (U^(m) ... U^(1))† of an ordered index sequence.

    Computed as a matrix, not looked up in the set: dressed families are
    not closed under products.
    """
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    dim = gate_set.dim
    product = np.eye(dim, dtype=np.complex128)
    for idx in sequence:
        if not 0 <= idx < len(gate_set):
            raise IndexError(f"element index {idx} out of range")
        product = gate_set.elements[idx] @ product
    return dagger(product)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def build_pauli_set(d: int, n: int, cap: int = DEFAULT_LABEL_CAP) -> GateSet:
    """The d^{2n} Pauli words on n qudits of dimension d."""
    labels = enumerate_paulis(d, n, cap=cap)
    return GateSet(d, n, "pauli", tuple(pauli_matrix(l) for l in labels),
                   labels=tuple(labels))


def _phase_fingerprint(m: np.ndarray, decimals: int = 8) -> bytes:
    """Hashable fingerprint invariant under global phase.

    Divides by the first non-negligible entry (fixing the phase exactly for
    equal-up-to-phase matrices), rounds, and serializes. The +0.0 folds any
    -0.0 into +0.0 so the byte form is canonical.
    """
    flat = m.ravel()
    pivot = flat[np.argmax(np.abs(flat) > 1e-6)]
    norm = flat / pivot
    re = np.round(norm.real, decimals) + 0.0
    im = np.round(norm.imag, decimals) + 0.0
    return re.tobytes() + im.tobytes()


def _closure_mod_phase(generators: list[np.ndarray],
                       product_cap: int = CLOSURE_PRODUCT_CAP) -> list[np.ndarray]:
    """Breadth-first closure under multiplication, deduplicated mod phase."""
    dim = generators[0].shape[0]
    seen: dict[bytes, np.ndarray] = {}
    frontier: list[np.ndarray] = []
    for m in [np.eye(dim, dtype=np.complex128)] + generators:
        f = _phase_fingerprint(m)
        if f not in seen:
            seen[f] = m
            frontier.append(m)
    products = 0
    while frontier:
        new: list[np.ndarray] = []
        for m in frontier:
            for g in generators:
                products += 1
                if products > product_cap:
                    raise RuntimeError(
                        f"closure exceeded the product cap of {product_cap}"
                    )
                p = g @ m
                f = _phase_fingerprint(p)
                if f not in seen:
                    seen[f] = p
                    new.append(p)
        frontier = new
    return list(seen.values())


def _clifford_generators(d: int, n: int) -> list[np.ndarray]:
    if d == 2:
        h = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
        s = np.diag([1, 1j]).astype(np.complex128)
        if n == 1:
            return [h, s]
        eye = np.eye(2, dtype=np.complex128)
        cz = np.diag([1, 1, 1, -1]).astype(np.complex128)
        return [tensor(h, eye), tensor(eye, h), tensor(s, eye), tensor(eye, s), cz]
    if d == 3 and n == 1:
        w = np.exp(2j * np.pi / 3)
        f = np.array([[1, 1, 1], [1, w, w ** 2], [1, w ** 2, w]],
                     dtype=np.complex128) / np.sqrt(3)
        s = np.diag([1, 1, w]).astype(np.complex128)
        return [f, s]
    raise ValueError(f"unsupported Clifford dimensions (d={d}, n={n})")


def build_clifford_set(d: int, n: int) -> GateSet:
    """Exact Clifford group enumeration for the supported (d, n) table.

    Breadth-first closure of the generators, deduplicated modulo global
    phase. Element counts are pinned: 24 for (2,1), 216 for (3,1), 11520
    for (2,2).
    """
    if (d, n) not in CLIFFORD_SIZES:
        raise ValueError(
            f"Clifford enumeration supports {sorted(CLIFFORD_SIZES)}, not ({d}, {n})"
        )
    elements = _closure_mod_phase(_clifford_generators(d, n))
    expected = CLIFFORD_SIZES[(d, n)]
    if len(elements) != expected:
        raise RuntimeError(
            f"Clifford closure produced {len(elements)} elements, expected {expected}"
        )
    return GateSet(d, n, "clifford", tuple(elements))


def _controlled_element(control_paulis: list[np.ndarray],
                        branch_mats: Sequence[np.ndarray],
                        dressing: np.ndarray,
                        target_dim: int) -> np.ndarray:
    k = len(branch_mats)
    block = np.zeros((k * target_dim, k * target_dim), dtype=np.complex128)
    for c, b in enumerate(branch_mats):
        block[c * target_dim:(c + 1) * target_dim,
              c * target_dim:(c + 1) * target_dim] = b
    return tensor(dressing, np.eye(target_dim)) @ block


def build_controlled_set(d: int, cap: int = DEFAULT_LABEL_CAP) -> GateSet:
    """Qubit-controlled Pauli operations on a dimension-d target.

    Elements (P_i (x) I) (|0><0| (x) P_r + |1><1| (x) P_s) with the dressing
    P_i ranging over the control-qubit Paulis and P_r, P_s over the
    single-qudit target Paulis: 4 d^4 elements in total.
    """
    if d * d > cap:
        raise ValueError(f"target label count {d * d} exceeds cap {cap}")
    control = [pauli_matrix(l) for l in enumerate_paulis(2, 1)]
    target = [pauli_matrix(l) for l in enumerate_paulis(d, 1)]
    elements = []
    for pi in control:
        for pr in target:
            for ps in target:
                elements.append(_controlled_element(control, (pr, ps), pi, d))
    if d == 2:
        dd, nn = 2, 2
    else:
        dd, nn = 2 * d, 1
    return GateSet(dd, nn, "controlled", tuple(elements))


def build_two_control_set() -> GateSet:
    """Toffoli-type family: two control qubits, one target qubit.

    Same construction as the single-control set with a branch Pauli per
    control basis state and a two-qubit Pauli dressing on the controls.
    """
    control = [pauli_matrix(l) for l in enumerate_paulis(2, 2)]
    target = [pauli_matrix(l) for l in enumerate_paulis(2, 1)]
    elements = []
    for pc in control:
        for ps in target:
            for pr in target:
                for pp in target:
                    for pq in target:
                        elements.append(
                            _controlled_element(control, (ps, pr, pp, pq), pc, 2)
                        )
    return GateSet(2, 3, "two-control", tuple(elements))


def ms_gate(n: int, theta: float) -> np.ndarray:
    """Multipartite Moelmer-Soerensen unitary: ordered product over pairs
    s < r of exp(i theta X^(s) X^(r))."""
    if n < 2:
        raise ValueError("the entangling gate needs at least two qubits")
    dim = 2 ** n
    u = np.eye(dim, dtype=np.complex128)
    eye = np.eye(dim)
    for s in range(n - 1):
        for r in range(s + 1, n):
            x = (0,) * n
            xs = tuple(1 if q in (s, r) else 0 for q in range(n))
            xx = pauli_matrix(PauliLabel(2, n, xs, (0,) * n))
            u = (np.cos(theta) * eye + 1j * np.sin(theta) * xx) @ u
    return u


def build_ms_dressed_set(n: int, theta: float, cap: int = DEFAULT_LABEL_CAP) -> GateSet:
    """Pauli-dressed entangling gates M_i = P_i U_n(theta), any angle."""
    if 4 ** n > cap:
        raise ValueError(f"4^{n} elements exceed cap {cap}")
    u = ms_gate(n, theta)
    labels = enumerate_paulis(2, n)
    return GateSet(2, n, "ms",
                   tuple(pauli_matrix(l) @ u for l in labels),
                   labels=tuple(labels))


def build_dressed_set(u: np.ndarray, d: int, n: int,
                      cap: int = DEFAULT_LABEL_CAP) -> GateSet:
    """Pauli-dressed set M_i = P_i U for an arbitrary unitary U on d^n."""
    u = assert_unitary(u, what="dressing unitary")
    if u.shape[0] != d ** n:
        raise ValueError(f"unitary dimension {u.shape[0]} != {d ** n}")
    labels = enumerate_paulis(d, n, cap=cap)
    return GateSet(d, n, "dressed",
                   tuple(pauli_matrix(l) @ u for l in labels),
                   labels=tuple(labels))


def build_custom_set(mats: Sequence[np.ndarray], d: int | None = None,
                     n: int | None = None) -> GateSet:
    """Wrap explicit unitaries; (d, n) inferred as a single qudit by default."""
    mats = [as_matrix(m) for m in mats]
    dim = mats[0].shape[0]
    if d is None or n is None:
        d, n = dim, 1
    if d ** n != dim:
        raise ValueError(f"(d={d}, n={n}) inconsistent with dimension {dim}")
    return GateSet(d, n, "custom", tuple(mats))


# ---------------------------------------------------------------------------
# Spec strings (CLI / config surface)
# ---------------------------------------------------------------------------

def _parse_kv(body: str) -> dict[str, str]:
    out = {}
    for chunk in body.split(","):
        if not chunk:
            continue
        key, _, value = chunk.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_set_spec(spec: str,
                   matrix_loader: Callable[[str], list[np.ndarray]] | None = None
                   ) -> GateSet:
    """Build a gate set from a spec string.

    Formats: `pauli:d=2,n=1`, `clifford:d=2,n=1`, `controlled:d=2`,
    `ms:n=2,theta=0.7853981634`, `dressed:d=2,n=1,u=<file>`,
    `custom:<file>`. Files hold one or more matrices in the text matrix
    format (see corb.io).
    """
    if matrix_loader is None:
        from .io import read_matrices
        matrix_loader = read_matrices
    family, _, body = spec.strip().partition(":")
    family = family.strip().lower()
    try:
        if family == "pauli":
            kv = _parse_kv(body)
            return build_pauli_set(int(kv["d"]), int(kv["n"]))
        if family == "clifford":
            kv = _parse_kv(body)
            return build_clifford_set(int(kv["d"]), int(kv["n"]))
        if family == "controlled":
            kv = _parse_kv(body)
            return build_controlled_set(int(kv["d"]))
        if family == "two-control":
            return build_two_control_set()
        if family == "ms":
            kv = _parse_kv(body)
            return build_ms_dressed_set(int(kv["n"]), float(kv["theta"]))
        if family == "dressed":
            kv = _parse_kv(body)
            mats = matrix_loader(kv["u"])
            if len(mats) != 1:
                raise ValueError("dressed spec expects exactly one matrix in the file")
            return build_dressed_set(mats[0], int(kv["d"]), int(kv["n"]))
        if family == "custom":
            return build_custom_set(matrix_loader(body.strip()))
    except KeyError as exc:
        raise ValueError(f"set spec {spec!r} is missing key {exc}") from exc
    raise ValueError(f"unknown gate-set family {family!r}")
