"""Randomized-benchmarking engines over exact density matrices.

Three protocol variants share one core: standard RB (independent random
sequences, no control register), coherent RB (k random sequences applied
in superposition, entangled with a k-level control), and interleaved
coherent RB (a fixed gate inserted after every random gate in all
branches). The coherent state is kept in blocked form (k, D, k, D) so a
controlled gate is a per-branch-pair contraction rather than a full
(kD)^2 matrix product.

Conventions:
  * sequence gates are drawn iid uniformly per branch and position;
    duplicate branches are legitimate,
  * the inverse is computed as an exact matrix (sets need not be closed
    under products),
  * one master seed; each (length, repetition) owns a child stream
    derived via numpy SeedSequence spawn keys, so results are identical
    regardless of worker parallelism,
  * shots = 0 returns exact expectations, shots = N > 0 draws a binomial
    sample of the expectation.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gatesets import GateSet
from .linalg import basis_state, plus_state, projector
from .noise import NoiseModel

MODES = ("standard", "coherent", "coherent-full", "interleaved",
         "coherent-control-noise")

DEFAULT_DIM_CAP = 4096
DEFAULT_ENUM_CAP = 4096


@dataclass(frozen=True)
class RbRunConfig:
    """One benchmarking run: set, noise, lengths, superposition size, seed."""

    gate_set: GateSet
    noise: NoiseModel
    lengths: tuple[int, ...]
    k: int = 1
    repetitions: int = 1
    seed: int = 0
    shots: int = 0
    mode: str = "coherent"
    dim_cap: int = DEFAULT_DIM_CAP
    enum_cap: int = DEFAULT_ENUM_CAP

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(m) for m in self.lengths))
        if not self.lengths or self.lengths[0] < 1:
            raise ValueError("lengths must be positive integers")
        if any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValueError("lengths must be strictly increasing")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class FidelityRecord:
    """One protocol execution: estimate at a given length and repetition."""

    mode: str
    m: int
    repetition: int
    fidelity: float
    k: int
    seed_stream: str


class DimensionError(ValueError):
    """Joint space would exceed the configured dense-simulation cap."""


# ---------------------------------------------------------------------------
# Seed streams and worker pool
# ---------------------------------------------------------------------------

def child_rng(seed: int, m: int, repetition: int, tag: int = 0) -> np.random.Generator:
    """Deterministic child stream for (length, repetition).

    Sequence draws use tag 0, shot sampling tag 1; the spawn key makes
    streams independent of execution order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(m, repetition, tag))
    return np.random.default_rng(ss)


def _worker_count() -> int:
    raw = os.environ.get("CORB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_tasks(fn, tasks):
    workers = _worker_count()
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# Blocked-state primitives (state shape (k, D, k, D))
# ---------------------------------------------------------------------------

def _apply_branch_unitaries(rho: np.ndarray, stack: np.ndarray) -> np.ndarray:
    """rho[i,:,j,:] -> U_i rho[i,:,j,:] U_j† via two batched matmuls."""
    k, d = rho.shape[0], rho.shape[1]
    t = np.matmul(stack, rho.reshape(k, d, k * d))           # (i, a, jc)
    t = t.reshape(k, d, k, d).transpose(2, 0, 1, 3).reshape(k, k * d, d)
    out = np.matmul(t, stack.conj().transpose(0, 2, 1))      # (j, ia, d)
    return out.reshape(k, k, d, d).transpose(1, 2, 0, 3)


def _superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """(D^2, D^2) map acting on the target-index pair of a blocked state."""
    stack = np.stack(kraus)
    d = stack.shape[1]
    return np.einsum("sab,scd->acbd", stack, stack.conj()).reshape(d * d, d * d)


def _is_identity_sop(sop: np.ndarray) -> bool:
    return np.array_equal(sop, np.eye(sop.shape[0]))


def _apply_superop(rho: np.ndarray, sop: np.ndarray) -> np.ndarray:
    """Uniform (branch-independent) channel on the target factor."""
    if _is_identity_sop(sop):
        return rho
    k, d = rho.shape[0], rho.shape[1]
    t = rho.transpose(1, 3, 0, 2).reshape(d * d, k * k)
    return (sop @ t).reshape(d, d, k, k).transpose(2, 0, 3, 1)


def _apply_target_channel(rho: np.ndarray, kraus: Sequence[np.ndarray]) -> np.ndarray:
    return _apply_superop(rho, _superop(kraus))


def _apply_control_depolarize(rho: np.ndarray, q: float) -> np.ndarray:
    """Blocked form of rho -> q rho + (1-q)(I_k/k)(x)tr_c(rho)."""
    k = rho.shape[0]
    target = np.einsum("iaib->ab", rho)
    out = q * rho
    idx = np.arange(k)
    out[idx, :, idx, :] += (1.0 - q) / k * target
    return out


def _prep_target(dim: int, prep_error: float) -> np.ndarray:
    rho = (1.0 - prep_error) * projector(basis_state(dim))
    rho += prep_error * np.eye(dim) / dim
    return rho


def _coherent_initial(k: int, target_rho: np.ndarray) -> np.ndarray:
    dim = target_rho.shape[0]
    block = (target_rho / k)[None, :, None, :]
    return np.broadcast_to(block, (k, dim, k, dim)).astype(np.complex128)


def _coherent_effect(k: int, dim: int, meas_error: float) -> np.ndarray:
    """Return effect (1 - eps_m) |psi><psi|: a detector of efficiency
    1 - eps_m, so measurement error rescales the decay amplitude without
    adding a constant offset."""
    psi = np.kron(plus_state(k), basis_state(dim))
    effect = (1.0 - meas_error) * projector(psi)
    return effect.reshape(k, dim, k, dim)


def _expectation(rho: np.ndarray, effect: np.ndarray) -> float:
    value = np.einsum("iajb,jbia->", effect, rho)
    return float(value.real)


def diagonal_block_survival(rho: np.ndarray, target_effect: np.ndarray) -> float:
    """Average survival of the diagonal control blocks of a blocked state.

    Equals the classical (standard RB) average over the same explicit
    sequence list: branch i carries weight 1/k, so the per-branch survivals
    k*tr(E rho[i,i]) average to sum_i tr(E rho[i,i]).
    """
    diag = np.einsum("iaib->iab", rho)
    return float(np.einsum("ab,iba->", target_effect, diag).real)


def _all_sequences(size: int, m: int) -> np.ndarray:
    """All size^m index sequences, one row per superposition branch."""
    count = size ** m
    idx = np.arange(count)
    cols = []
    for position in range(m):
        cols.append((idx // size ** position) % size)
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# Single protocol executions
# ---------------------------------------------------------------------------

def simulate_coherent(gate_set: GateSet, noise: NoiseModel,
                      sequences: np.ndarray, *,
                      control_q: float = 1.0,
                      interleaved_gate: np.ndarray | None = None,
                      interleaved_noise: Sequence[np.ndarray] | None = None,
                      return_state: bool = False):
    """One coherent run over an explicit (k, m) sequence-index array.

    Protocol: prepare |+>_c (x) prep(|0>); apply m controlled gates, each
    followed by the gate channel on the target (and, when interleaving, by
    the fixed gate and its channel; when control_q < 1, by control
    depolarization); apply the controlled inverse of each branch; measure
    the return effect. The inverse gate is followed by the final channel
    except in the interleaved variant, whose closing gate is noiseless.
    """
    sequences = np.asarray(sequences)
    k, m = sequences.shape
    dim = gate_set.dim
    stack = gate_set.stacked()

    # Everything after the branch gates at one position is branch-uniform,
    # so it folds into a single precomputed superoperator per position.
    position_sop = _superop(noise.gate_channel)
    if interleaved_gate is not None:
        position_sop = _superop([interleaved_gate]) @ position_sop
        if interleaved_noise is not None:
            position_sop = _superop(interleaved_noise) @ position_sop

    rho = _coherent_initial(k, _prep_target(dim, noise.prep_error))
    branch_products = np.broadcast_to(
        np.eye(dim, dtype=np.complex128), (k, dim, dim)
    ).copy()

    for position in range(m):
        gates = stack[sequences[:, position]]
        rho = _apply_branch_unitaries(rho, gates)
        rho = _apply_superop(rho, position_sop)
        branch_products = np.matmul(gates, branch_products)
        if interleaved_gate is not None:
            branch_products = np.matmul(interleaved_gate, branch_products)
        if control_q < 1.0:
            rho = _apply_control_depolarize(rho, control_q)

    inverses = branch_products.conj().transpose(0, 2, 1)
    rho = _apply_branch_unitaries(rho, inverses)
    if interleaved_gate is None:
        rho = _apply_superop(rho, _superop(noise.final_channel))

    fidelity = _expectation(rho, _coherent_effect(k, dim, noise.meas_error))
    fidelity = min(max(fidelity, 0.0), 1.0)
    if return_state:
        return fidelity, rho
    return fidelity


def simulate_standard(gate_set: GateSet, noise: NoiseModel,
                      sequences: np.ndarray) -> np.ndarray:
    """Per-sequence survival fidelities, no control register.

    Noise insertion points match the coherent engine: the gate channel
    after every sequence gate, the final channel after the inverse.
    """
    sequences = np.asarray(sequences)
    k, m = sequences.shape
    dim = gate_set.dim
    stack = gate_set.stacked()

    target = _prep_target(dim, noise.prep_error)
    rho = np.broadcast_to(target, (k, dim, dim)).copy()
    branch_products = np.broadcast_to(
        np.eye(dim, dtype=np.complex128), (k, dim, dim)
    ).copy()
    gate_sop = _superop(noise.gate_channel)

    def channel(states, sop):
        if _is_identity_sop(sop):
            return states
        t = states.transpose(1, 2, 0).reshape(dim * dim, k)
        return (sop @ t).reshape(dim, dim, k).transpose(2, 0, 1)

    for position in range(m):
        gates = stack[sequences[:, position]]
        rho = np.matmul(np.matmul(gates, rho), gates.conj().transpose(0, 2, 1))
        rho = channel(rho, gate_sop)
        branch_products = np.matmul(gates, branch_products)

    inverses = branch_products.conj().transpose(0, 2, 1)
    rho = np.matmul(np.matmul(inverses, rho), inverses.conj().transpose(0, 2, 1))
    rho = channel(rho, _superop(noise.final_channel))

    effect = (1.0 - noise.meas_error) * projector(basis_state(dim))
    survivals = np.einsum("ab,iba->i", effect, rho).real
    return np.clip(survivals, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------

def _check_dim(cfg: RbRunConfig, joint_dim: int) -> None:
    if joint_dim > cfg.dim_cap:
        raise DimensionError(
            f"joint dimension {joint_dim} exceeds the cap of {cfg.dim_cap}"
        )


def _sampled_run(cfg: RbRunConfig, mode: str, *,
                 control_q: float = 1.0,
                 interleaved_gate: np.ndarray | None = None,
                 interleaved_noise: Sequence[np.ndarray] | None = None
                 ) -> list[FidelityRecord]:
    _check_dim(cfg, cfg.k * cfg.gate_set.dim)
    tasks = [(m, rep) for m in cfg.lengths for rep in range(cfg.repetitions)]

    def one(task):
        m, rep = task
        rng = child_rng(cfg.seed, m, rep, 0)
        sequences = rng.integers(0, len(cfg.gate_set), size=(cfg.k, m))
        fidelity = simulate_coherent(
            cfg.gate_set, cfg.noise, sequences,
            control_q=control_q,
            interleaved_gate=interleaved_gate,
            interleaved_noise=interleaved_noise,
        )
        if cfg.shots > 0:
            shots_rng = child_rng(cfg.seed, m, rep, 1)
            fidelity = shots_rng.binomial(cfg.shots, fidelity) / cfg.shots
        return FidelityRecord(mode, m, rep, fidelity, cfg.k, f"{m}/{rep}")

    return _map_tasks(one, tasks)


def run_coherent_rb(cfg: RbRunConfig) -> list[FidelityRecord]:
    """Coherent RB with k iid-sampled sequences in superposition."""
    if cfg.mode != "coherent":
        raise ValueError(f"expected mode 'coherent', got {cfg.mode!r}")
    return _sampled_run(cfg, "coherent")


def run_coherent_with_control_noise(cfg: RbRunConfig) -> list[FidelityRecord]:
    """Coherent RB with control-register depolarization after each
    sequence gate.

    The depolarization is not applied after the closing inverse gate: the
    approximate decay law (q chi00)^m + (1 - q^m)/k f_G counts one control
    error opportunity per sequence position.
    """
    if cfg.mode != "coherent-control-noise":
        raise ValueError(f"expected mode 'coherent-control-noise', got {cfg.mode!r}")
    return _sampled_run(cfg, "coherent-control-noise",
                        control_q=cfg.noise.control_q)


def run_interleaved_coherent(cfg: RbRunConfig, gate: np.ndarray,
                             gate_noise: Sequence[np.ndarray] | None = None,
                             *, full_superposition: bool = False
                             ) -> list[FidelityRecord]:
    """Interleaved coherent RB: `gate` (with its own channel) after every
    random gate in all branches; the closing inverse, which includes the
    interleaved gate, is noiseless."""
    if cfg.mode != "interleaved":
        raise ValueError(f"expected mode 'interleaved', got {cfg.mode!r}")
    from .linalg import assert_unitary
    gate = assert_unitary(gate, what="interleaved gate")
    if full_superposition:
        return _full_run(cfg, "interleaved", interleaved_gate=gate,
                         interleaved_noise=gate_noise)
    return _sampled_run(cfg, "interleaved", interleaved_gate=gate,
                        interleaved_noise=gate_noise)


def _full_run(cfg: RbRunConfig, mode: str, *,
              interleaved_gate: np.ndarray | None = None,
              interleaved_noise: Sequence[np.ndarray] | None = None
              ) -> list[FidelityRecord]:
    records = []
    size = len(cfg.gate_set)
    for m in cfg.lengths:
        k = size ** m
        if k > cfg.enum_cap:
            raise DimensionError(
                f"|G|^m = {k} branches exceed the enumeration cap of {cfg.enum_cap}"
            )
        _check_dim(cfg, k * cfg.gate_set.dim)
        fidelity = simulate_coherent(
            cfg.gate_set, cfg.noise, _all_sequences(size, m),
            interleaved_gate=interleaved_gate,
            interleaved_noise=interleaved_noise,
        )
        for rep in range(cfg.repetitions):
            records.append(FidelityRecord(mode, m, rep, fidelity, k, f"{m}/full"))
    return records


def run_coherent_full(cfg: RbRunConfig) -> list[FidelityRecord]:
    """Deterministic coherent RB over all |G|^m sequences per length."""
    if cfg.mode != "coherent-full":
        raise ValueError(f"expected mode 'coherent-full', got {cfg.mode!r}")
    return _full_run(cfg, "coherent-full")


def run_standard_rb(cfg: RbRunConfig) -> list[FidelityRecord]:
    """Standard RB: each record averages k independent sequence survivals."""
    if cfg.mode != "standard":
        raise ValueError(f"expected mode 'standard', got {cfg.mode!r}")
    tasks = [(m, rep) for m in cfg.lengths for rep in range(cfg.repetitions)]

    def one(task):
        m, rep = task
        rng = child_rng(cfg.seed, m, rep, 0)
        sequences = rng.integers(0, len(cfg.gate_set), size=(cfg.k, m))
        fidelity = float(np.mean(simulate_standard(cfg.gate_set, cfg.noise,
                                                   sequences)))
        if cfg.shots > 0:
            shots_rng = child_rng(cfg.seed, m, rep, 1)
            fidelity = shots_rng.binomial(cfg.shots, fidelity) / cfg.shots
        return FidelityRecord("standard", m, rep, fidelity, cfg.k, f"{m}/{rep}")

    return _map_tasks(one, tasks)


def run(cfg: RbRunConfig, *, interleaved_gate: np.ndarray | None = None,
        interleaved_noise: Sequence[np.ndarray] | None = None
        ) -> list[FidelityRecord]:
    """Dispatch on cfg.mode."""
    if cfg.mode == "standard":
        return run_standard_rb(cfg)
    if cfg.mode == "coherent":
        return run_coherent_rb(cfg)
    if cfg.mode == "coherent-full":
        return run_coherent_full(cfg)
    if cfg.mode == "coherent-control-noise":
        return run_coherent_with_control_noise(cfg)
    if cfg.mode == "interleaved":
        if interleaved_gate is None:
            raise ValueError("interleaved mode needs an interleaved gate")
        return run_interleaved_coherent(cfg, interleaved_gate, interleaved_noise)
    raise ValueError(f"unknown mode {cfg.mode!r}")
