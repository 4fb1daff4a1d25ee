"""Analytic model of a single-photon heralded entanglement link.

A link connects two emitter nodes through a midpoint detection station.
Each node prepares ``sqrt(1-alpha)|1> + sqrt(alpha)|0>`` with the bright
state ``|0>`` emitting a photon; detection of a single photon at the
midpoint heralds an entangled state close to
``(|01> + s|10>)/sqrt(2)`` with ``s`` the detector sign.

The heralded two-qubit density matrix is assembled from the four
herald-compatible populations

* ``p00 = aA*aB*(pdA + pdB + 2*pdc)``  (both bright: double emission),
* ``p01 = aA*(1-aB)*(pdA + 2*pdc)``    (only the first node's photon),
* ``p10 = (1-aA)*aB*(pdB + 2*pdc)``    (only the second node's photon),
* ``p11 = 2*(1-aA)*(1-aB)*pdc``        (dark count, both dark),

normalized by ``p_tot = p00 + p01 + p10 + p11``, with a coherence between
the ``|01>`` and ``|10>`` components of magnitude
``sqrt(V * p01 * p10) * D_phase * D_double``.  ``D_phase = exp(-sigma^2/2)``
integrates a Gaussian optical-phase spread of standard deviation ``sigma``
(radians); ``D_double = (1 - p_double)**2`` is the double-excitation
coherence penalty.  The exponent 2 in ``D_double`` is a calibrated
coefficient: it is fixed once so that the standalone double-excitation
infidelity of the reference parameter set reproduces the published error
budget, and is not claimed as a microscopic mechanism.  Dark counts are
neglected in the coherences (their population share is ~1e-2 of the total).

Qubit convention: qubit 0 is the first (left) node of the link, qubit 1 the
second; ``|0>`` is the bright state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .qstate import DensityMatrix, bell_state, fidelity_with_pure

__all__ = [
    "LinkParams",
    "HeraldedLinkResult",
    "ErrorBudget",
    "BUDGET_SOURCES",
    "herald_populations",
    "success_probability",
    "heralded_state",
    "error_budget",
    "sample_attempts_until_success",
    "truncated_geometric_mean",
    "block_success_probability",
]

#: Error-budget row names, in reporting order.
BUDGET_SOURCES = (
    "double_emission",
    "phase_uncertainty",
    "double_excitation",
    "distinguishability",
    "dark_counts",
)


@dataclass(frozen=True)
class LinkParams:
    """Physical parameters of one heralded link.

    Attributes
    ----------
    alpha_a, alpha_b : float
        Bright-state populations of the first and second node, in (0, 1).
    pdet_a, pdet_b : float
        End-to-end detection probability of a photon emitted by each node,
        in (0, 1).
    p_dc : float
        Dark-count probability per detection window; must be small compared
        to the detection probabilities.
    visibility : float
        Two-photon interference visibility ``V`` in [0, 1].
    phase_sigma_deg : float
        Standard deviation of the residual optical phase, in degrees.
    p_double : float
        Double-excitation probability per attempt, in [0, 1).
    attempt_duration_s : float
        Wall-clock duration of one entanglement attempt, in seconds.
    """

    alpha_a: float
    alpha_b: float
    pdet_a: float
    pdet_b: float
    p_dc: float
    visibility: float
    phase_sigma_deg: float
    p_double: float
    attempt_duration_s: float

    def __post_init__(self) -> None:
        for name in ("alpha_a", "alpha_b", "pdet_a", "pdet_b"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.p_dc < 0.0:
            raise ValueError(f"p_dc must be >= 0, got {self.p_dc}")
        if self.p_dc >= 0.1 * min(self.pdet_a, self.pdet_b):
            raise ValueError(
                "p_dc must be small compared to the detection probabilities "
                f"(p_dc={self.p_dc} >= 0.1*min(pdet)={0.1 * min(self.pdet_a, self.pdet_b)})"
            )
        if not (0.0 <= self.visibility <= 1.0):
            raise ValueError(f"visibility must be in [0, 1], got {self.visibility}")
        if self.phase_sigma_deg < 0.0:
            raise ValueError(f"phase_sigma_deg must be >= 0, got {self.phase_sigma_deg}")
        if not (0.0 <= self.p_double < 1.0):
            raise ValueError(f"p_double must be in [0, 1), got {self.p_double}")
        if self.attempt_duration_s <= 0.0:
            raise ValueError(f"attempt_duration_s must be > 0, got {self.attempt_duration_s}")


@dataclass(frozen=True)
class HeraldedLinkResult:
    """Heralded link state and its herald statistics.

    Attributes
    ----------
    state : DensityMatrix
        Two-qubit heralded state (qubit 0 = first node).
    p_tot : float
        Herald probability per attempt.
    detector_sign : int
        Which-detector sign ``s`` of the heralded ``(|01> + s|10>)/sqrt(2)``.
    rate_hz : float
        Raw herald rate ``p_tot / attempt_duration`` (no duty cycle).
    """

    state: DensityMatrix
    p_tot: float
    detector_sign: int
    rate_hz: float


@dataclass(frozen=True)
class ErrorBudget:
    """Per-source infidelity contributions plus the combined infidelity.

    ``contributions`` maps error-source names to their individual fidelity
    cost (for the link budget: the increase over the double-emission
    baseline, which itself fills the ``double_emission`` row); ``combined``
    is the infidelity with every source enabled at once.  Contributions are
    nearly additive, so the combined value may not exceed their sum by more
    than a small interaction allowance, and can never fall below the
    largest single contribution.
    """

    contributions: dict[str, float]
    combined: float

    def __post_init__(self) -> None:
        vals = list(self.contributions.values())
        if self.combined < max(vals) - 1e-12:
            raise ValueError("combined infidelity below largest individual contribution")
        if self.combined > sum(vals) + 0.02:
            raise ValueError("combined infidelity exceeds near-additivity bound")


def herald_populations(params: LinkParams) -> tuple[float, float, float, float]:
    """Unnormalized herald populations ``(p00, p01, p10, p11)``.

    Index order is (first node, second node) with ``0`` the bright state.
    """
    a_a, a_b = params.alpha_a, params.alpha_b
    pd_a, pd_b, pdc = params.pdet_a, params.pdet_b, params.p_dc
    p00 = a_a * a_b * (pd_a + pd_b + 2.0 * pdc)
    p01 = a_a * (1.0 - a_b) * (pd_a + 2.0 * pdc)
    p10 = (1.0 - a_a) * a_b * (pd_b + 2.0 * pdc)
    p11 = 2.0 * (1.0 - a_a) * (1.0 - a_b) * pdc
    return p00, p01, p10, p11


def success_probability(params: LinkParams) -> float:
    """Herald probability per attempt, ``p_tot = p00 + p01 + p10 + p11``.

    In the symmetric ideal limit (equal ``alpha``, equal ``pdet``, no dark
    counts) this reduces to ``2 * alpha * pdet`` up to the ``O(alpha)``
    population factors.
    """
    return float(sum(herald_populations(params)))


def heralded_state(
    params: LinkParams,
    detector_sign: int = +1,
    sampled_phase_rad: float | None = None,
) -> HeraldedLinkResult:
    """Heralded two-qubit state for one link.

    Parameters
    ----------
    params : LinkParams
        Link parameters.
    detector_sign : int
        +1 or -1; sign of the heralded coherence (which detector clicked).
    sampled_phase_rad : float, optional
        If given, the coherence carries the explicit phase factor
        ``exp(i * phase)`` of one sampled optical phase instead of the
        Gaussian-averaged damping ``exp(-sigma^2/2)``.  Used by the Monte
        Carlo path, which draws the phase per run.

    Returns
    -------
    HeraldedLinkResult
        State (diagonal ``(p00, p10, p01, p11)/p_tot`` in little-endian index
        order), herald probability, sign, and raw rate.
    """
    if detector_sign not in (+1, -1):
        raise ValueError(f"detector_sign must be +1 or -1, got {detector_sign}")
    p00, p01, p10, p11 = herald_populations(params)
    p_tot = p00 + p01 + p10 + p11

    coh = math.sqrt(params.visibility * p01 * p10)
    coh *= (1.0 - params.p_double) ** 2  # calibrated double-excitation penalty
    if sampled_phase_rad is None:
        sigma_rad = math.radians(params.phase_sigma_deg)
        phase_factor: complex = math.exp(-0.5 * sigma_rad**2)
    else:
        phase_factor = np.exp(1j * sampled_phase_rad)

    m = np.zeros((4, 4), dtype=complex)
    # Little-endian: |q1 q0>; qubit 0 = first node. |01>_(first,second) -> index 2.
    m[0, 0] = p00
    m[2, 2] = p01
    m[1, 1] = p10
    m[3, 3] = p11
    m[2, 1] = detector_sign * coh * phase_factor
    m[1, 2] = np.conj(m[2, 1])
    state = DensityMatrix(m / p_tot, 2)
    return HeraldedLinkResult(
        state=state,
        p_tot=float(p_tot),
        detector_sign=detector_sign,
        rate_hz=float(p_tot / params.attempt_duration_s),
    )


def _bell_infidelity(params: LinkParams) -> float:
    """Infidelity of the heralded state to its Bell target (sign +1)."""
    res = heralded_state(params, +1)
    return 1.0 - fidelity_with_pure(res.state, bell_state("psi+"))


def error_budget(params: LinkParams) -> ErrorBudget:
    """Per-source error budget of the heralded state.

    Each non-baseline source is evaluated as the only error present beyond
    the unavoidable double-emission population (which sets the baseline row),
    and its row is the infidelity increase over that baseline.  The combined
    row turns every source on at once.
    """
    ideal = replace(
        params,
        p_dc=min(params.p_dc, 1e-12),
        visibility=1.0,
        phase_sigma_deg=0.0,
        p_double=0.0,
    )
    base = _bell_infidelity(ideal)
    contributions = {
        "double_emission": base,
        "phase_uncertainty": _bell_infidelity(replace(ideal, phase_sigma_deg=params.phase_sigma_deg)) - base,
        "double_excitation": _bell_infidelity(replace(ideal, p_double=params.p_double)) - base,
        "distinguishability": _bell_infidelity(replace(ideal, visibility=params.visibility)) - base,
        "dark_counts": _bell_infidelity(replace(ideal, p_dc=params.p_dc)) - base,
    }
    return ErrorBudget(contributions=contributions, combined=_bell_infidelity(params))


def sample_attempts_until_success(
    params: LinkParams,
    rng: np.random.Generator,
    timeout: int,
) -> tuple[bool, int]:
    """Sample the attempt count of one heralding block.

    Draws the geometric first-success attempt with per-attempt probability
    ``p_tot`` in closed form (inverse CDF), so the cost is independent of
    the attempt number.

    Parameters
    ----------
    params : LinkParams
        Link parameters (only ``p_tot`` matters here).
    rng : numpy.random.Generator
        Random source.
    timeout : int
        Maximum number of attempts in the block (>= 1).

    Returns
    -------
    tuple
        ``(success, attempts)``; on failure the block consumed ``timeout``
        attempts.
    """
    if timeout < 1:
        raise ValueError(f"timeout must be >= 1, got {timeout}")
    p = success_probability(params)
    if p >= 1.0:
        return True, 1
    u = rng.random()
    # Inverse CDF of the geometric distribution: smallest n with
    # 1 - (1-p)^n >= u.
    n = int(math.ceil(math.log1p(-u) / math.log1p(-p)))
    n = max(n, 1)
    if n > timeout:
        return False, timeout
    return True, n


def block_success_probability(params: LinkParams, timeout: int) -> float:
    """Probability that a block of ``timeout`` attempts heralds at all."""
    p = success_probability(params)
    return float(-math.expm1(timeout * math.log1p(-p)))


def truncated_geometric_mean(p: float, timeout: int) -> float:
    """Mean attempt count of a geometric draw conditioned on ``n <= timeout``.

    Closed form: for ``q = 1 - p``,
    ``E[n | n <= T] = (1/p - (T + 1/p) q^T) / (1 - q^T)``.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    q_t = math.exp(timeout * math.log1p(-p))
    return float((1.0 / p - (timeout + 1.0 / p) * q_t) / (1.0 - q_t))
