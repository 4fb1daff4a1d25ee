"""TOML experiment configuration: schema, validation, and bundled presets.

A configuration file describes the full three-node bench once and selects
one experiment to run on it.  Keys are hyphenated and carry their unit as a
suffix (``attempt-duration-us``); values are converted to the SI-based
quantities the simulation modules use at load time, so unit handling lives
entirely in this module.

Sections
--------
``[experiment]``
    ``kind`` (one of :data:`EXPERIMENT_KINDS`), ``runs``, ``seed``.  ``runs``
    drives the Monte Carlo kinds (``double-link``, ``ghz``, ``swap``; 0 means
    analytic); the sampled kinds (``memory``, ``tomo``, ``phase``) take their
    shot counts from their own sections, and ``link``/``budget`` are always
    analytic.
``[link-ab]``, ``[link-bc]``
    Heralded-link parameters (excitation/detection probabilities, dark
    coincidences, visibility, residual phase spread, double excitation,
    attempt duration).
``[memory]``
    Stretched-exponential memory decay (amplitude, 1/e attempt count,
    exponent, optional intrinsic dephasing time).
``[nuclear]``
    Memory precession frequencies and hyperfine splitting for the phase
    feed-forward.
``[readout-b]``
    Node B single-shot readout fidelities and calibration sigmas.
``[protocol]``
    Sequence timing and lumped gate errors (timeout, preparation delay,
    feed-forward resolution, gate infidelities, acceptance duty cycle,
    classical-channel timing).
``[memory-experiment]``, ``[tomo-experiment]``, ``[phase-experiment]``
    Per-kind sampling plans; each is required only when ``experiment.kind``
    selects it.  Phase segments live in ``[phase-experiment.segments.<id>]``
    sub-tables, one per interferometer segment of the three-node layout.

:func:`validate_config` reports every problem it can find as a
:class:`ValidationIssue` with a dotted field path; :func:`load_config` raises
:class:`ConfigError` carrying the same list.  Bundled presets (one per
experiment kind, identical apart from ``[experiment]``) ship with the
package and are accessible through :func:`load_bundled_config`.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib  # type: ignore[no-redef]

from .linkmodel import LinkParams
from .noise import MemoryDecayParams, NuclearSpinParams, ReadoutModel
from .phasestab import (
    DEFAULT_STEP_S,
    FeedbackConfig,
    InterferometerSegment,
    NoiseSpectrum,
    ScheduleInterval,
    StabilizationSchedule,
    validate_three_node_layout,
)
from .protocol import ProtocolConfig

__all__ = [
    "EXPERIMENT_KINDS",
    "ValidationIssue",
    "ConfigError",
    "MemoryExperimentConfig",
    "TomoExperimentConfig",
    "PhaseExperimentConfig",
    "ExperimentConfig",
    "parse_config",
    "validate_config",
    "load_config",
    "load_bundled_config",
    "bundled_config_text",
]

#: Experiment kinds selectable in ``[experiment] kind``.
EXPERIMENT_KINDS = (
    "link",
    "memory",
    "phase",
    "double-link",
    "ghz",
    "swap",
    "tomo",
    "budget",
)

#: Experiment kinds that require a dedicated section when selected.
_KIND_SECTIONS = {
    "memory": "memory-experiment",
    "tomo": "tomo-experiment",
    "phase": "phase-experiment",
}


@dataclass(frozen=True)
class ValidationIssue:
    """One configuration problem, located by a dotted field path."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}" if self.path else self.message


class ConfigError(ValueError):
    """Raised when a configuration cannot be built; carries all issues."""

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "invalid configuration")


@dataclass(frozen=True)
class MemoryExperimentConfig:
    """Sampling plan of the memory-decay experiment.

    For each attempt count the memory qubit is prepared on the equator,
    exposed to that much network activity, and read out ``shots_per_point``
    times through node B's readout; the corrected Bloch-vector lengths are
    then fit to the stretched exponential.
    """

    attempt_counts: tuple[int, ...]
    shots_per_point: int

    def __post_init__(self) -> None:
        if len(self.attempt_counts) < 4:
            raise ValueError(f"need at least 4 attempt counts for the decay fit, got {len(self.attempt_counts)}")
        if any(n < 0 for n in self.attempt_counts):
            raise ValueError("attempt counts must be >= 0")
        if any(b <= a for a, b in zip(self.attempt_counts, self.attempt_counts[1:])):
            raise ValueError("attempt counts must be strictly increasing")
        if self.shots_per_point < 10:
            raise ValueError(f"shots-per-point must be >= 10, got {self.shots_per_point}")


@dataclass(frozen=True)
class TomoExperimentConfig:
    """Sampling plan of the readout-corrected population estimate."""

    shots_per_setting: int
    mc_samples: int

    def __post_init__(self) -> None:
        if self.shots_per_setting < 10:
            raise ValueError(f"shots-per-setting must be >= 10, got {self.shots_per_setting}")
        if self.mc_samples < 1000:
            raise ValueError(f"mc-samples must be >= 1000 for stable percentiles, got {self.mc_samples}")


@dataclass(frozen=True)
class PhaseExperimentConfig:
    """Closed-loop phase-stabilization run on the three-node segment layout."""

    segments: tuple[InterferometerSegment, ...]
    schedule: StabilizationSchedule
    duration_s: float
    step_s: float = DEFAULT_STEP_S
    record_every: int = 10

    def __post_init__(self) -> None:
        validate_three_node_layout(self.segments)
        if self.duration_s <= 0.0:
            raise ValueError(f"duration-s must be > 0, got {self.duration_s}")
        if self.step_s <= 0.0:
            raise ValueError(f"step-us must be > 0, got {self.step_s}")
        if self.record_every < 1:
            raise ValueError(f"record-every must be >= 1, got {self.record_every}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment: the bench description plus one plan.

    ``runs`` and ``seed`` come from ``[experiment]`` and may be overridden
    from the command line; the per-kind plans are ``None`` unless their
    section is present in the file.
    """

    kind: str
    runs: int
    seed: int
    protocol: ProtocolConfig
    memory_run: MemoryExperimentConfig | None = None
    tomo: TomoExperimentConfig | None = None
    phase: PhaseExperimentConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"kind must be one of {EXPERIMENT_KINDS}, got {self.kind!r}")
        if self.runs < 0:
            raise ValueError(f"runs must be >= 0, got {self.runs}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        section = _KIND_SECTIONS.get(self.kind)
        attr = {"memory-experiment": "memory_run", "tomo-experiment": "tomo", "phase-experiment": "phase"}
        if section is not None and getattr(self, attr[section]) is None:
            raise ValueError(f"kind {self.kind!r} requires the [{section}] section")


# ---------------------------------------------------------------------------
# Field tables: TOML key -> constructor argument, with unit scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Field:
    """One key of a section: name, destination argument, type, and scale."""

    key: str
    dest: str
    kind: str = "float"  # float | int | str | int-list | pair-list
    scale: float = 1.0
    required: bool = True
    default: Any = None


_EXPERIMENT_FIELDS = (
    _Field("kind", "kind", kind="str"),
    _Field("runs", "runs", kind="int"),
    _Field("seed", "seed", kind="int"),
)

_LINK_FIELDS = (
    _Field("alpha-a", "alpha_a"),
    _Field("alpha-b", "alpha_b"),
    _Field("pdet-a", "pdet_a"),
    _Field("pdet-b", "pdet_b"),
    _Field("p-dark-coincidence", "p_dc"),
    _Field("visibility", "visibility"),
    _Field("phase-sigma-deg", "phase_sigma_deg"),
    _Field("p-double-excitation", "p_double"),
    _Field("attempt-duration-us", "attempt_duration_s", scale=1e-6),
)

_MEMORY_FIELDS = (
    _Field("amplitude", "amplitude_a"),
    _Field("n-1e", "n_1e"),
    _Field("exponent", "exponent_n"),
    _Field("t2-star-ms", "t2_star_s", scale=1e-3, required=False),
)

_NUCLEAR_FIELDS = (
    _Field("omega0-khz", "omega0_hz", scale=1e3),
    _Field("omega1-khz", "omega1_hz", scale=1e3),
    _Field("a-par-khz", "a_par_hz", scale=1e3),
    _Field("tau-larmor-ns", "tau_larmor_s", scale=1e-9),
)

_READOUT_FIELDS = (
    _Field("f0", "f0"),
    _Field("f1", "f1"),
    _Field("sigma-f0", "sigma_f0", required=False, default=0.0),
    _Field("sigma-f1", "sigma_f1", required=False, default=0.0),
)

_PROTOCOL_FIELDS = (
    _Field("bc-timeout-attempts", "bc_timeout_attempts", kind="int"),
    _Field("prep-delay-s", "prep_delay_s"),
    _Field("feedforward-resolution-ns", "feedforward_resolution_s", scale=1e-9),
    _Field("gate-infidelity-ghz", "gate_infidelity_ghz"),
    _Field("gate-infidelity-swap", "gate_infidelity_swap"),
    _Field("swap-acceptance-duty", "swap_acceptance_duty"),
    _Field("bit-time-ns", "bit_time_s", scale=1e-9),
    _Field("decode-time-us", "decode_time_s", scale=1e-6),
)

_MEMORY_EXPERIMENT_FIELDS = (
    _Field("attempt-counts", "attempt_counts", kind="int-list"),
    _Field("shots-per-point", "shots_per_point", kind="int"),
)

_TOMO_EXPERIMENT_FIELDS = (
    _Field("shots-per-setting", "shots_per_setting", kind="int"),
    _Field("mc-samples", "mc_samples", kind="int"),
)

_PHASE_EXPERIMENT_FIELDS = (
    _Field("duration-s", "duration_s"),
    # Defaults are given in destination (SI) units; scaling applies only to
    # values read from the file.
    _Field("step-us", "step_s", scale=1e-6, required=False, default=DEFAULT_STEP_S),
    _Field("record-every", "record_every", kind="int", required=False, default=10),
    _Field("startup-rounds", "startup_rounds", kind="int", required=False, default=3),
    _Field("gain", "gain"),
    _Field("integration-time-us", "measurement_integration_s", scale=1e-6),
    _Field("stabilize-global-ms", "stabilize_global_s", scale=1e-3),
    _Field("stabilize-local-ms", "stabilize_local_s", scale=1e-3),
    _Field("experiment-ms", "experiment_s", scale=1e-3),
)

_SEGMENT_FIELDS = (
    _Field("detection", "detection_kind", kind="str"),
    _Field("setpoint-deg", "setpoint_deg"),
    _Field("random-walk-deg-per-sqrt-s", "random_walk_deg_per_sqrt_s", required=False, default=0.0),
    _Field("white-noise-deg-per-sqrt-hz", "white_noise_deg_per_sqrt_hz", required=False, default=0.0),
    _Field("drift-deg-per-s", "drift_deg_per_s", required=False, default=0.0),
    _Field("sinusoids", "sinusoids", kind="pair-list", required=False, default=()),
)

_TOP_LEVEL_SECTIONS = (
    "experiment",
    "link-ab",
    "link-bc",
    "memory",
    "nuclear",
    "readout-b",
    "protocol",
    "memory-experiment",
    "tomo-experiment",
    "phase-experiment",
)


def _coerce(field: _Field, value: Any) -> tuple[Any, str | None]:
    """Convert a raw TOML value; returns ``(converted, error message)``."""
    if field.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"expected a number, got {value!r}"
        if not math.isfinite(float(value)):
            return None, f"expected a finite number, got {value!r}"
        return float(value) * field.scale, None
    if field.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"expected an integer, got {value!r}"
        return value, None
    if field.kind == "str":
        if not isinstance(value, str):
            return None, f"expected a string, got {value!r}"
        return value, None
    if field.kind == "int-list":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            return None, f"expected a list of integers, got {value!r}"
        return tuple(value), None
    if field.kind == "pair-list":
        ok = isinstance(value, list) and all(
            isinstance(p, list)
            and len(p) == 2
            and all(not isinstance(x, bool) and isinstance(x, (int, float)) for x in p)
            for p in value
        )
        if not ok:
            return None, f"expected a list of [number, number] pairs, got {value!r}"
        return tuple((float(a), float(b)) for a, b in value), None
    raise AssertionError(f"unhandled field kind {field.kind!r}")


def _read_section(
    doc: Mapping[str, Any],
    name: str,
    fields: tuple[_Field, ...],
    issues: list[ValidationIssue],
    subtables: tuple[str, ...] = (),
) -> dict[str, Any] | None:
    """Extract and convert one section; reports every problem it finds."""
    raw = doc.get(name)
    if raw is None:
        issues.append(ValidationIssue(name, "required section is missing"))
        return None
    if not isinstance(raw, Mapping):
        issues.append(ValidationIssue(name, f"expected a table, got {type(raw).__name__}"))
        return None
    known = {f.key for f in fields} | set(subtables)
    ok = True
    for key in raw:
        if key not in known:
            issues.append(ValidationIssue(f"{name}.{key}", f"unknown key (known keys: {', '.join(sorted(known))})"))
            ok = False
    out: dict[str, Any] = {}
    for field in fields:
        if field.key not in raw:
            if field.required:
                issues.append(ValidationIssue(f"{name}.{field.key}", "required key is missing"))
                ok = False
            elif field.default is not None:
                out[field.dest] = field.default
            continue
        value, err = _coerce(field, raw[field.key])
        if err is not None:
            issues.append(ValidationIssue(f"{name}.{field.key}", err))
            ok = False
        else:
            out[field.dest] = value
    return out if ok else None


def _construct(factory: Callable[..., Any], kwargs: dict[str, Any] | None, path: str, issues: list[ValidationIssue]) -> Any:
    """Call a validating constructor, converting its ValueError to an issue."""
    if kwargs is None:
        return None
    try:
        return factory(**kwargs)
    except ValueError as exc:
        issues.append(ValidationIssue(path, str(exc)))
        return None


def _build_phase(doc: Mapping[str, Any], issues: list[ValidationIssue]) -> PhaseExperimentConfig | None:
    base = _read_section(doc, "phase-experiment", _PHASE_EXPERIMENT_FIELDS, issues, subtables=("segments",))
    raw = doc.get("phase-experiment")
    if base is None or not isinstance(raw, Mapping):
        return None
    seg_tables = raw.get("segments")
    if not isinstance(seg_tables, Mapping) or not seg_tables:
        issues.append(ValidationIssue("phase-experiment.segments", "need one sub-table per interferometer segment"))
        return None
    if base["gain"] < 0.0:
        issues.append(ValidationIssue("phase-experiment.gain", f"gain must be >= 0, got {base['gain']}"))
        return None

    segments = []
    for seg_id in sorted(seg_tables):
        path = f"phase-experiment.segments.{seg_id}"
        seg_doc = {seg_id: seg_tables[seg_id]}
        before = len(issues)
        fields = _read_section(seg_doc, seg_id, _SEGMENT_FIELDS, issues)
        # The wrapped read reports paths relative to the segment id; prefix
        # them with their real location.
        for i in range(before, len(issues)):
            issues[i] = ValidationIssue(f"phase-experiment.segments.{issues[i].path}", issues[i].message)
        if fields is None:
            continue
        noise = _construct(
            NoiseSpectrum,
            {
                "sinusoids": fields["sinusoids"],
                "white_noise_deg_per_sqrt_hz": fields["white_noise_deg_per_sqrt_hz"],
                "random_walk_deg_per_sqrt_s": fields["random_walk_deg_per_sqrt_s"],
                "drift_deg_per_s": fields["drift_deg_per_s"],
            },
            path,
            issues,
        )
        actuator = _construct(
            FeedbackConfig,
            {
                "gain": base["gain"],
                "setpoint_deg": fields["setpoint_deg"],
                "measurement_integration_s": base["measurement_integration_s"],
            },
            path,
            issues,
        )
        if noise is None or actuator is None:
            continue
        seg = _construct(
            InterferometerSegment,
            {"id": seg_id, "detection_kind": fields["detection_kind"], "noise": noise, "actuator": actuator},
            path,
            issues,
        )
        if seg is not None:
            segments.append(seg)
    if len(segments) != len(seg_tables):
        return None

    globals_ = tuple(s.id for s in segments if s.id.startswith("global-"))
    locals_ = tuple(s.id for s in segments if s.id.startswith("local-"))
    intervals = []
    if globals_:
        intervals.append(
            _construct(
                ScheduleInterval,
                {"kind": "stabilize", "duration_s": base["stabilize_global_s"], "segment_ids": globals_},
                "phase-experiment.stabilize-global-ms",
                issues,
            )
        )
    if locals_:
        intervals.append(
            _construct(
                ScheduleInterval,
                {"kind": "stabilize", "duration_s": base["stabilize_local_s"], "segment_ids": locals_},
                "phase-experiment.stabilize-local-ms",
                issues,
            )
        )
    intervals.append(
        _construct(
            ScheduleInterval,
            {"kind": "experiment", "duration_s": base["experiment_s"]},
            "phase-experiment.experiment-ms",
            issues,
        )
    )
    if any(iv is None for iv in intervals):
        return None
    schedule = _construct(
        StabilizationSchedule,
        {"intervals": tuple(intervals), "startup_rounds": base["startup_rounds"]},
        "phase-experiment",
        issues,
    )
    if schedule is None:
        return None
    return _construct(
        PhaseExperimentConfig,
        {
            "segments": tuple(segments),
            "schedule": schedule,
            "duration_s": base["duration_s"],
            "step_s": base["step_s"],
            "record_every": base["record_every"],
        },
        "phase-experiment",
        issues,
    )


def _build(doc: Mapping[str, Any]) -> tuple[ExperimentConfig | None, list[ValidationIssue]]:
    issues: list[ValidationIssue] = []
    if not isinstance(doc, Mapping):
        return None, [ValidationIssue("", f"configuration root must be a table, got {type(doc).__name__}")]
    for key in doc:
        if key not in _TOP_LEVEL_SECTIONS:
            issues.append(
                ValidationIssue(key, f"unknown section (known sections: {', '.join(_TOP_LEVEL_SECTIONS)})")
            )

    exp = _read_section(doc, "experiment", _EXPERIMENT_FIELDS, issues)
    link_ab = _construct(LinkParams, _read_section(doc, "link-ab", _LINK_FIELDS, issues), "link-ab", issues)
    link_bc = _construct(LinkParams, _read_section(doc, "link-bc", _LINK_FIELDS, issues), "link-bc", issues)
    memory = _construct(MemoryDecayParams, _read_section(doc, "memory", _MEMORY_FIELDS, issues), "memory", issues)
    nuclear = _construct(NuclearSpinParams, _read_section(doc, "nuclear", _NUCLEAR_FIELDS, issues), "nuclear", issues)
    readout = _construct(ReadoutModel, _read_section(doc, "readout-b", _READOUT_FIELDS, issues), "readout-b", issues)
    proto_fields = _read_section(doc, "protocol", _PROTOCOL_FIELDS, issues)

    protocol = None
    if None not in (link_ab, link_bc, memory, nuclear, readout) and proto_fields is not None:
        protocol = _construct(
            ProtocolConfig,
            {
                "link_ab": link_ab,
                "link_bc": link_bc,
                "memory": memory,
                "nuclear": nuclear,
                "readout_bob": readout,
                **proto_fields,
            },
            "protocol",
            issues,
        )

    memory_run = None
    if "memory-experiment" in doc:
        memory_run = _construct(
            MemoryExperimentConfig,
            _read_section(doc, "memory-experiment", _MEMORY_EXPERIMENT_FIELDS, issues),
            "memory-experiment",
            issues,
        )
    tomo = None
    if "tomo-experiment" in doc:
        tomo = _construct(
            TomoExperimentConfig,
            _read_section(doc, "tomo-experiment", _TOMO_EXPERIMENT_FIELDS, issues),
            "tomo-experiment",
            issues,
        )
    phase = None
    if "phase-experiment" in doc:
        phase = _build_phase(doc, issues)

    if exp is None or protocol is None or issues:
        return None, issues
    cfg = _construct(
        ExperimentConfig,
        {
            "kind": exp["kind"],
            "runs": exp["runs"],
            "seed": exp["seed"],
            "protocol": protocol,
            "memory_run": memory_run,
            "tomo": tomo,
            "phase": phase,
        },
        "experiment",
        issues,
    )
    if cfg is None:
        return None, issues
    return cfg, []


def parse_config(doc: Mapping[str, Any]) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed TOML mapping.

    Raises
    ------
    ConfigError
        Carrying every :class:`ValidationIssue` found.
    """
    cfg, issues = _build(doc)
    if cfg is None:
        raise ConfigError(issues)
    return cfg


def validate_config(doc: Mapping[str, Any]) -> list[ValidationIssue]:
    """Collect all problems of a parsed TOML mapping; empty means valid."""
    _, issues = _build(doc)
    return issues


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a TOML configuration file.

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        If the TOML is malformed or the configuration is invalid.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([ValidationIssue("", f"TOML parse error: {exc}")]) from exc
    return parse_config(doc)


def bundled_config_text(kind: str) -> str:
    """Raw TOML text of the bundled preset for one experiment kind."""
    if kind not in EXPERIMENT_KINDS:
        raise ValueError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    resource = importlib.resources.files("qnetsim").joinpath("configs", f"{kind}.toml")
    return resource.read_text(encoding="utf-8")


def load_bundled_config(kind: str) -> ExperimentConfig:
    """Load the bundled preset for one experiment kind."""
    return parse_config(tomllib.loads(bundled_config_text(kind)))
