"""Decay-curve fitting, interleaved-gate extraction, deviation studies.

The decay model is F(m) = A * chi00^m: a log-linear least-squares pass
seeds a Gauss-Newton refinement in linear space. Interleaved runs are
compared against a reference run to isolate one gate's chi00, with the
multiplicative-composition error bound

    E = 2 sqrt((1-a) a (1-b) b) + (1-a)(1-b),   a = chi00_ref, b = chi00_gate,

tight when the reference gates are much cleaner than the probed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .engine import FidelityRecord, RbRunConfig, run_coherent_rb, run_standard_rb
from .gatesets import GateSet
from .noise import NoiseModel, chi00_of

GN_STEP_TOL = 1e-12
GN_MAX_ITER = 100


@dataclass(frozen=True)
class DecayFit:
    """Fitted amplitude and decay with residual diagnostics."""

    A: float
    chi00: float
    residual_rms: float
    points_used: int
    converged: bool = True
    stderr_A: float = math.nan
    stderr_chi00: float = math.nan


@dataclass(frozen=True)
class IrbEstimate:
    """Interleaved-vs-reference extraction of a single gate's chi00."""

    chi00_ref: float
    chi00_combined: float
    chi00_gate: float
    bound_E: float


def fit_decay(points: Sequence[tuple[float, float]],
              weights: Sequence[float] | None = None) -> DecayFit:
    """Fit A * chi00^m to (m, fidelity) points.

    Stage 1 initializes from ordinary least squares on log(F) vs m
    (nonpositive fidelities excluded there only); stage 2 runs
    Gauss-Newton on the unweighted (or caller-weighted) squared residuals
    in linear space. Divergent refinements fall back to the stage-1
    estimate with converged=False.
    """
    ms = np.asarray([p[0] for p in points], dtype=float)
    fs = np.asarray([p[1] for p in points], dtype=float)
    if len(np.unique(ms)) < 3:
        raise ValueError("need at least 3 distinct sequence lengths")
    if np.any(fs >= 1.05):
        raise ValueError("fidelities above 1.05 are not a decay curve")
    if np.all(fs <= 0.0):
        raise ValueError("all fidelities nonpositive")
    if weights is None:
        w = np.ones_like(fs)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != fs.shape or np.any(w < 0):
            raise ValueError("weights must be nonnegative, one per point")

    positive = fs > 0.0
    design = np.stack([np.ones(int(positive.sum())), ms[positive]], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, np.log(fs[positive]), rcond=None)
    a0, chi0 = math.exp(coeffs[0]), math.exp(coeffs[1])

    a, chi = a0, chi0
    converged = False
    for _ in range(GN_MAX_ITER):
        model = a * chi ** ms
        residuals = model - fs
        jacobian = np.stack([chi ** ms, a * ms * chi ** (ms - 1)], axis=1)
        step, *_ = np.linalg.lstsq(jacobian * w[:, None], -residuals * w,
                                   rcond=None)
        a += step[0]
        chi += step[1]
        if not (np.isfinite(a) and np.isfinite(chi)) or abs(chi) > 10.0:
            a, chi = a0, chi0  # diverged: report the stage-1 estimate
            break
        if float(np.linalg.norm(step)) < GN_STEP_TOL:
            converged = True
            break
    else:
        converged = True  # iteration cap reached with finite parameters

    chi = min(max(chi, 0.0), 1.0)
    a = max(a, 0.0)
    residuals = a * chi ** ms - fs
    rms = float(np.sqrt(np.mean(residuals ** 2)))

    stderr_a = stderr_chi = math.nan
    dof = len(fs) - 2
    if dof > 0:
        jacobian = np.stack([chi ** ms, a * ms * chi ** (ms - 1)], axis=1)
        try:
            cov = np.linalg.inv(jacobian.T @ jacobian)
            s2 = float(np.sum(residuals ** 2)) / dof
            stderr_a = math.sqrt(max(s2 * cov[0, 0], 0.0))
            stderr_chi = math.sqrt(max(s2 * cov[1, 1], 0.0))
        except np.linalg.LinAlgError:
            pass

    return DecayFit(a, chi, rms, len(fs), converged, stderr_a, stderr_chi)


def fit_records(records: Sequence[FidelityRecord],
                weights: Sequence[float] | None = None) -> DecayFit:
    return fit_decay([(r.m, r.fidelity) for r in records], weights)


def combined_decay(coherent: float, standard: float, k: int) -> float:
    """(1 - 1/k) * coherent + (1/k) * standard reference heuristic."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return (1.0 - 1.0 / k) * coherent + standard / k


def irb_bound(chi00_ref: float, chi00_gate: float) -> float:
    a = min(max(chi00_ref, 0.0), 1.0)
    b = min(max(chi00_gate, 0.0), 1.0)
    return 2.0 * math.sqrt((1.0 - a) * a * (1.0 - b) * b) + (1.0 - a) * (1.0 - b)


def irb_extract(fit_ref: DecayFit, fit_interleaved: DecayFit) -> IrbEstimate:
    """Point estimate chi00_gate = chi00_combined / chi00_ref with bound."""
    if fit_ref.chi00 <= 0.0:
        raise ValueError("reference decay is zero; cannot divide it out")
    combined = fit_interleaved.chi00
    gate = min(max(combined / fit_ref.chi00, 0.0), 1.0)
    return IrbEstimate(fit_ref.chi00, combined, gate,
                       irb_bound(fit_ref.chi00, gate))


def standard_rb_curve(chi00: float, dim: int, m: int | np.ndarray):
    """Zeroth-order standard-RB expectation for a twirl-to-depolarizing set.

    The group average turns the gate channel into depolarizing with
    parameter p = (dim^2 chi00 - 1)/(dim^2 - 1), giving survival
    1/dim + (1 - 1/dim) p^m for ideal SPAM.
    """
    p = (dim ** 2 * chi00 - 1.0) / (dim ** 2 - 1.0)
    return 1.0 / dim + (1.0 - 1.0 / dim) * p ** np.asarray(m)


# ---------------------------------------------------------------------------
# Deviation experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationScenario:
    """Named comparison cell: set, noise, superposition size, grid, seed."""

    name: str
    gate_set: GateSet
    noise: NoiseModel
    k: int
    repetitions: int
    lengths: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class DeviationSummary:
    """Per-length |F_k - F_ref| lists for both modes, plus maxima.

    The reference is the analytic decay A * chi00^m, never the data
    itself; both modes are compared against the same curve.
    """

    scenario: str
    lengths: tuple[int, ...]
    k: int
    repetitions: int
    amplitude: float
    chi00: float
    fidelities: dict
    deviations: dict
    max_deviation: dict


def decay_amplitude(noise: NoiseModel, dim: int, k: int) -> float:
    """Exact SPAM constant: return-effect overlap of the noisy initial state."""
    from .engine import (_apply_target_channel, _coherent_effect,
                         _coherent_initial, _expectation, _prep_target)
    rho = _coherent_initial(k, _prep_target(dim, noise.prep_error))
    rho = _apply_target_channel(rho, noise.final_channel)
    return _expectation(rho, _coherent_effect(k, dim, noise.meas_error))


def deviation_experiment(scenario: DeviationScenario) -> DeviationSummary:
    """Run coherent and standard modes, report deviations from A * chi00^m."""
    chi00 = chi00_of(scenario.noise.gate_channel)
    amplitude = decay_amplitude(scenario.noise, scenario.gate_set.dim, scenario.k)

    base = RbRunConfig(
        gate_set=scenario.gate_set,
        noise=scenario.noise,
        lengths=scenario.lengths,
        k=scenario.k,
        repetitions=scenario.repetitions,
        seed=scenario.seed,
        mode="coherent",
    )
    runs = {
        "coherent": run_coherent_rb(base),
        "standard": run_standard_rb(replace(base, mode="standard")),
    }

    fidelities: dict = {}
    deviations: dict = {}
    max_dev: dict = {}
    for mode, records in runs.items():
        per_m_f = {m: [] for m in scenario.lengths}
        per_m_d = {m: [] for m in scenario.lengths}
        for rec in records:
            reference = amplitude * chi00 ** rec.m
            per_m_f[rec.m].append(rec.fidelity)
            per_m_d[rec.m].append(abs(rec.fidelity - reference))
        fidelities[mode] = {m: tuple(v) for m, v in per_m_f.items()}
        deviations[mode] = {m: tuple(v) for m, v in per_m_d.items()}
        max_dev[mode] = max(max(v) for v in per_m_d.values())

    return DeviationSummary(
        scenario=scenario.name,
        lengths=scenario.lengths,
        k=scenario.k,
        repetitions=scenario.repetitions,
        amplitude=amplitude,
        chi00=chi00,
        fidelities=fidelities,
        deviations=deviations,
        max_deviation=max_dev,
    )
