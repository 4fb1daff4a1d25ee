"""Readout correction and fidelity estimation from measurement counts.

Measured outcome frequencies are distorted by imperfect single-shot
readout: the measured distribution is ``M = (kron R_i) P`` with per-qubit
readout matrices built from fidelities ``(F0, F1)``.  This module inverts
that map analytically (single qubit) or by tensor inversion (multi-qubit),
propagates statistical and calibration uncertainties -- analytically where a
closed form exists and by Monte Carlo resampling otherwise -- and assembles
Bell/GHZ fidelities from measured correlators.

Corrected populations are reported unclipped: linear inversion can produce
values slightly outside ``[0, 1]`` on finite samples, and clipping them
would bias downstream estimators.  Use :func:`clip_to_simplex` explicitly
when a physical vector is required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .noise import ReadoutModel, apply_readout_error
from .qstate import GHZ_STABILIZER_TERMS, bell_fidelity_signs

__all__ = [
    "CountVector",
    "CorrectedPopulations",
    "MonteCarloResult",
    "correct_single",
    "correct_multi",
    "monte_carlo_uncertainty",
    "ghz_fidelity",
    "bell_fidelity",
    "clip_to_simplex",
]


@dataclass(frozen=True)
class CountVector:
    """Raw measurement tallies over all ``2**k`` outcome bitstrings.

    ``counts[i]`` is the tally of the bitstring whose bit ``k`` (of the
    index ``i``) is qubit ``k``'s outcome -- the same little-endian
    convention as the state engine.
    """

    counts: np.ndarray
    n_qubits: int

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.shape != (2**self.n_qubits,):
            raise ValueError(f"counts shape {c.shape} does not match {self.n_qubits} qubits")
        if np.any(c < 0) or not np.issubdtype(c.dtype, np.integer):
            raise ValueError("counts must be non-negative integers")
        if c.sum() < 1:
            raise ValueError("need at least one count")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        """Total number of shots."""
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        """Observed outcome frequencies ``m = counts / N``."""
        return self.counts / self.total


@dataclass(frozen=True)
class CorrectedPopulations:
    """Readout-corrected outcome probabilities with 1-sigma uncertainties.

    ``probabilities`` always sums to 1 (linear inversion preserves the
    total), but individual entries may exit ``[0, 1]``; see the module
    docstring.  ``covariance`` is the propagated multinomial covariance of
    the corrected vector (calibration uncertainty of the readout fidelities
    is handled by the Monte Carlo path).
    """

    probabilities: np.ndarray
    sigmas: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"corrected populations must sum to 1, got {p.sum()}")


def clip_to_simplex(probabilities: np.ndarray) -> np.ndarray:
    """Clip to ``[0, 1]`` and renormalize; an explicit, separate step."""
    p = np.clip(np.asarray(probabilities, dtype=float), 0.0, 1.0)
    total = p.sum()
    if total <= 0.0:
        raise ValueError("cannot renormalize an all-zero vector")
    return p / total


def _multinomial_covariance(freqs: np.ndarray, total: int) -> np.ndarray:
    """Covariance of observed frequencies: ``(diag(m) - m m^T) / N``."""
    return (np.diag(freqs) - np.outer(freqs, freqs)) / total


def correct_single(counts: CountVector, model: ReadoutModel) -> CorrectedPopulations:
    """Analytic single-qubit readout correction.

    Implements ``p0 = (F1 + m0 - 1) / (F0 + F1 - 1)`` with the statistical
    uncertainty ``sigma_m / (F0 + F1 - 1)``, ``sigma_m = sqrt(m0(1-m0)/N)``,
    and the readout-calibration uncertainties propagated in quadrature.
    """
    if counts.n_qubits != 1:
        raise ValueError(f"correct_single needs 1-qubit counts, got {counts.n_qubits}")
    m0 = float(counts.frequencies()[0])
    n_total = counts.total
    denom = model.f0 + model.f1 - 1.0
    p0 = (model.f1 + m0 - 1.0) / denom

    sigma_m = np.sqrt(m0 * (1.0 - m0) / n_total)
    # d(p0)/d(F0) = -p0/denom, d(p0)/d(F1) = (1-p0)/denom, d(p0)/d(m0) = 1/denom.
    var = (
        sigma_m**2
        + (p0 * model.sigma_f0) ** 2
        + ((1.0 - p0) * model.sigma_f1) ** 2
    ) / denom**2
    sigma_p = float(np.sqrt(var))

    probs = np.array([p0, 1.0 - p0])
    sigmas = np.array([sigma_p, sigma_p])
    cov = np.array([[var, -var], [-var, var]])
    return CorrectedPopulations(probabilities=probs, sigmas=sigmas, covariance=cov)


def correct_multi(counts: CountVector, models: list[ReadoutModel] | tuple[ReadoutModel, ...]) -> CorrectedPopulations:
    """Multi-qubit readout correction ``P = (kron R_i)^-1 M``.

    The multinomial covariance of the measured frequencies is propagated
    exactly through the (linear) inversion; readout-calibration uncertainty
    is left to :func:`monte_carlo_uncertainty`.
    """
    if len(models) != counts.n_qubits:
        raise ValueError(f"got {len(models)} readout models for {counts.n_qubits} qubits")
    r_total = np.array([[1.0]])
    for model in models:  # qubit 0 first -> it must be the last kron factor
        r_total = np.kron(model.matrix, r_total)
    try:
        r_inv = np.linalg.inv(r_total)
    except np.linalg.LinAlgError as exc:
        raise ValueError("readout model is singular") from exc

    m = counts.frequencies()
    p = r_inv @ m
    cov_m = _multinomial_covariance(m, counts.total)
    cov_p = r_inv @ cov_m @ r_inv.T
    return CorrectedPopulations(
        probabilities=p,
        sigmas=np.sqrt(np.clip(np.diag(cov_p), 0.0, None)),
        covariance=cov_p,
    )


@dataclass(frozen=True)
class MonteCarloResult:
    """Empirical distribution of a resampled statistic.

    ``mean``/``std`` are elementwise over the statistic's components;
    percentile rows give the 16/50/84 points, so asymmetric distributions
    are reported faithfully alongside the symmetric ``std``.
    """

    mean: np.ndarray
    std: np.ndarray
    percentile_16: np.ndarray
    percentile_50: np.ndarray
    percentile_84: np.ndarray
    n_samples: int
    samples: np.ndarray | None = None


def _sample_fidelity(mean: float, sigma: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Truncated-normal fidelity draws on (0.5, 1]."""
    if sigma == 0.0:
        return np.full(size, mean)
    a = (0.5 - mean) / sigma
    b = (1.0 - mean) / sigma
    return scipy.stats.truncnorm.rvs(a, b, loc=mean, scale=sigma, size=size, random_state=rng)


def monte_carlo_uncertainty(
    counts: CountVector,
    models: list[ReadoutModel] | tuple[ReadoutModel, ...],
    n_samples: int,
    rng: np.random.Generator,
    statistic=None,
    keep_samples: bool = False,
) -> MonteCarloResult:
    """Monte Carlo uncertainty of readout-corrected quantities.

    Counts are resampled multinomially and the readout fidelities are
    resampled from truncated normals on (0.5, 1]; each draw is corrected by
    exact inversion and mapped through ``statistic``.

    Parameters
    ----------
    counts : CountVector
        Observed tallies.
    models : sequence of ReadoutModel
        Per-qubit readout models, including calibration sigmas.
    n_samples : int
        Number of Monte Carlo draws (>= 1000 for stable percentiles).
    rng : numpy.random.Generator
        Random source.
    statistic : callable, optional
        Maps a corrected population vector to the quantity of interest
        (scalar or vector).  Defaults to the population vector itself.
    keep_samples : bool
        If true, the raw sample array is returned as well.

    Returns
    -------
    MonteCarloResult
        Empirical mean, standard deviation and percentiles, with no
        normality assumption.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    if len(models) != counts.n_qubits:
        raise ValueError(f"got {len(models)} readout models for {counts.n_qubits} qubits")
    if statistic is None:
        statistic = lambda p: p  # noqa: E731 - identity default

    n_total = counts.total
    freqs = counts.frequencies()
    count_draws = rng.multinomial(n_total, freqs, size=n_samples)
    f0_draws = np.column_stack([_sample_fidelity(m.f0, m.sigma_f0, rng, n_samples) for m in models])
    f1_draws = np.column_stack([_sample_fidelity(m.f1, m.sigma_f1, rng, n_samples) for m in models])

    out = []
    for i in range(n_samples):
        r_total = np.array([[1.0]])
        for q in range(len(models)):
            f0, f1 = f0_draws[i, q], f1_draws[i, q]
            r_q = np.array([[f0, 1.0 - f1], [1.0 - f0, f1]])
            r_total = np.kron(r_q, r_total)
        p = np.linalg.solve(r_total, count_draws[i] / n_total)
        out.append(np.atleast_1d(np.asarray(statistic(p), dtype=float)))
    samples = np.vstack(out)

    return MonteCarloResult(
        mean=samples.mean(axis=0),
        std=samples.std(axis=0, ddof=1),
        percentile_16=np.percentile(samples, 16, axis=0),
        percentile_50=np.percentile(samples, 50, axis=0),
        percentile_84=np.percentile(samples, 84, axis=0),
        n_samples=n_samples,
        samples=samples if keep_samples else None,
    )


def _check_correlator(name: str, value: float) -> None:
    if not (-1.0 - 1e-9 <= value <= 1.0 + 1e-9):
        raise ValueError(f"correlator {name} = {value} outside [-1, 1]")


def ghz_fidelity(correlators: dict[str, tuple[float, float]]) -> tuple[float, float]:
    """Three-qubit GHZ fidelity from the seven stabilizer correlators.

    Implements ``F = (1 + <IZZ> + <ZIZ> + <ZZI> + <XXX> - <XYY> - <YXY>
    - <YYX>) / 8`` with the sigma combined in quadrature.

    Parameters
    ----------
    correlators : dict
        Maps each of the seven term names to ``(value, sigma)``.
    """
    missing = set(GHZ_STABILIZER_TERMS) - set(correlators)
    if missing:
        raise ValueError(f"missing GHZ correlators: {sorted(missing)}")
    total = 1.0
    var = 0.0
    for name, sign in GHZ_STABILIZER_TERMS.items():
        value, sigma = correlators[name]
        _check_correlator(name, value)
        total += sign * value
        var += sigma**2
    return total / 8.0, float(np.sqrt(var)) / 8.0


def bell_fidelity(
    correlators: dict[str, tuple[float, float]],
    target: str,
) -> tuple[float, float]:
    """Two-qubit Bell fidelity from the XX, YY, ZZ correlators.

    ``F = (1 + s_x <XX> + s_y <YY> + s_z <ZZ>) / 4`` with signs set by the
    target label (``"phi+"``, ``"phi-"``, ``"psi+"``, ``"psi-"``).
    """
    signs = bell_fidelity_signs(target)
    missing = set(signs) - set(correlators)
    if missing:
        raise ValueError(f"missing Bell correlators: {sorted(missing)}")
    total = 1.0
    var = 0.0
    for name, sign in signs.items():
        value, sigma = correlators[name]
        _check_correlator(name, value)
        total += sign * value
        var += sigma**2
    return total / 4.0, float(np.sqrt(var)) / 4.0
