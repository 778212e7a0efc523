"""Versioned JSON scenario files describing one relay-route experiment."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .channel import ASYMPTOTIC, LinkSpec, OutageProfile, outage_profile
from .optimizer import Method
from .pdp import NetworkLayout, Strategy
from .simulator import DelayModel

__all__ = [
    "SCHEMA_VERSION",
    "Scenario",
    "ScenarioError",
    "builtin_scenarios",
    "load_builtin",
    "load_scenario",
]

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "hops", "strategy"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "hops": {"type": "integer", "minimum": 1},
        "los": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "snr_db": _NUM,
        "rate": {"type": "number", "exclusiveMinimum": 0},
        "blocklength": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "asymptotic"}]},
        "outage_override": {
            "type": ["array", "null"],
            "items": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "q_sum": {"type": ["integer", "null"], "minimum": 1},
        "allocation": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "strategy": {"enum": [s.value for s in Strategy]},
        "cluster": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["case", "n_su", "n_cy", "n_sw"],
            "properties": {
                "case": {"enum": [1, 2, 3]},
                "n_su": {"type": "integer", "minimum": 0},
                "n_cy": {"type": "integer", "minimum": 2},
                "n_sw": {"type": "integer", "minimum": 0},
            },
        },
        "delay": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tau_p", "tau_d"],
            "properties": {
                "tau_p": _NONNEG,
                "tau_d": _NONNEG,
                "tau_nack": _NONNEG,
                "t_c": _NONNEG,
                "overhead_factor": _NONNEG,
                "deadline": {"type": ["number", "null"], "minimum": 0},
                "nack_on_success": {"type": "boolean"},
            },
            "not": {"required": ["t_c", "overhead_factor"]},
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "packets": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "bin_width": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "optimize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [m.value for m in Method]},
                "folds": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "sweep": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["q_min", "q_max"],
            "properties": {
                "q_min": {"type": "integer", "minimum": 1},
                "q_max": {"type": "integer", "minimum": 1},
                "methods": {"type": "array", "items": {"enum": [m.value for m in Method]}, "minItems": 1},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario content; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DelaySpec:
    tau_p: float = 1.0
    tau_d: float = 0.0
    tau_nack: float = 0.0
    t_c: float | None = None
    overhead_factor: float | None = None
    deadline: float | None = None
    nack_on_success: bool = True

    def model(self) -> DelayModel:
        if self.overhead_factor is not None:
            return DelayModel.with_overhead(self.tau_p, self.tau_d, self.overhead_factor, tau_nack=self.tau_nack,
                                            deadline=self.deadline, nack_on_success=self.nack_on_success)
        return DelayModel(self.tau_p, self.tau_d, self.tau_nack, self.t_c or 0.0, self.deadline, self.nack_on_success)


@dataclass(frozen=True)
class SimSpec:
    packets: int = 100_000
    seed: int = 0
    bin_width: float = 0.1


@dataclass(frozen=True)
class OptimizeSpec:
    method: str = Method.EXHAUSTIVE.value
    folds: int | None = None


@dataclass(frozen=True)
class SweepSpec:
    q_min: int
    q_max: int
    methods: tuple[str, ...] = (Method.EXHAUSTIVE.value,)


@dataclass(frozen=True)
class Scenario:
    hops: int
    strategy: str = Strategy.SC.value
    los: tuple[float, ...] | None = None
    snr_db: float | None = None
    rate: float | None = None
    blocklength: int | str = "asymptotic"
    outage_override: tuple[float, ...] | None = None
    q_sum: int | None = None
    allocation: tuple[int, ...] | None = None
    cluster: dict[str, int] | None = None
    delay: DelaySpec = field(default_factory=DelaySpec)
    sim: SimSpec = field(default_factory=SimSpec)
    optimize: OptimizeSpec = field(default_factory=OptimizeSpec)
    sweep: SweepSpec | None = None
    name: str | None = None
    description: str | None = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        validator = jsonschema.Draft202012Validator(_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = "/".join(str(p) for p in err.absolute_path) or "<root>"
            raise ScenarioError(path, err.message)
        d = dict(data)
        d.pop("version")
        for key in ("los", "outage_override", "allocation"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "delay" in d:
            d["delay"] = DelaySpec(**d["delay"])
        if "sim" in d:
            d["sim"] = SimSpec(**d["sim"])
        if "optimize" in d:
            d["optimize"] = OptimizeSpec(**d["optimize"])
        if d.get("sweep") is not None:
            sw = dict(d["sweep"])
            if "methods" in sw:
                sw["methods"] = tuple(sw["methods"])
            d["sweep"] = SweepSpec(**sw)
        scenario = cls(**d)
        scenario.validate()
        return scenario

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"version": SCHEMA_VERSION}
        for key, value in asdict(self).items():
            if value is None and key in ("name", "description", "los", "snr_db", "rate", "sweep"):
                continue
            if key == "delay":
                value = {k: v for k, v in value.items() if v is not None or k == "deadline"}
            if key == "sweep" and value is not None:
                value["methods"] = list(value["methods"])
            if isinstance(value, tuple):
                value = list(value)
            out[key] = value
        return out

    def with_updates(self, **changes) -> "Scenario":
        s = replace(self, **changes)
        s.validate()
        return s

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        n = self.hops
        if self.outage_override is not None:
            if len(self.outage_override) != n:
                raise ScenarioError("outage_override", f"expected {n} entries, got {len(self.outage_override)}")
        else:
            for key in ("los", "snr_db", "rate"):
                if getattr(self, key) is None:
                    raise ScenarioError(key, "required when outage_override is absent")
        if self.los is not None and len(self.los) != n:
            raise ScenarioError("los", f"expected {n} entries, got {len(self.los)}")
        try:
            self.layout()
        except ValueError as exc:
            raise ScenarioError("cluster", str(exc)) from None
        try:
            self.delay.model()
        except ValueError as exc:
            raise ScenarioError("delay", str(exc)) from None
        if self.q_sum is None and self.delay.deadline is None:
            raise ScenarioError("q_sum", "give q_sum or a delay.deadline to derive it from")
        if self.delay.tau_p + self.delay.tau_d <= 0 and self.q_sum is None:
            raise ScenarioError("delay", "tau_p + tau_d must be positive to derive q_sum")
        if self.allocation is not None:
            if len(self.allocation) != n:
                raise ScenarioError("allocation", f"expected {n} entries, got {len(self.allocation)}")
            if sum(self.allocation) != self.budget:
                raise ScenarioError("allocation", f"sums to {sum(self.allocation)}, expected q_sum={self.budget}")
        if self.sweep is not None and self.sweep.q_min > self.sweep.q_max:
            raise ScenarioError("sweep", f"empty range {self.sweep.q_min}..{self.sweep.q_max}")

    # -- derived objects -----------------------------------------------------

    @property
    def budget(self) -> int:
        """Total attempts: ``q_sum``, or the deadline divided by the per-attempt slot."""
        if self.q_sum is not None:
            return self.q_sum
        slot = self.delay.tau_p + self.delay.tau_d
        # tolerate representation error in deadlines that are whole multiples of the slot
        return math.floor(self.delay.deadline / slot + 1e-9)

    def layout(self) -> NetworkLayout:
        strategy = Strategy(self.strategy)
        if strategy is Strategy.CSC:
            if self.cluster is None:
                raise ValueError("a csc scenario needs a cluster")
            c = self.cluster
            layout = NetworkLayout.csc(c["case"], c["n_su"], c["n_cy"], c["n_sw"])
            if layout.n_hops != self.hops:
                raise ValueError(f"cluster segments sum to {layout.n_hops}, expected hops={self.hops}")
            return layout
        if self.cluster is not None:
            raise ValueError(f"strategy {strategy.value} takes no cluster")
        return NetworkLayout(self.hops, strategy)

    def links(self) -> list[LinkSpec]:
        if self.los is None:
            raise ScenarioError("los", "no physical link description in this scenario")
        k = ASYMPTOTIC if self.blocklength == "asymptotic" else int(self.blocklength)
        return [LinkSpec(c, self.snr_db, self.rate, k) for c in self.los]

    def outage(self) -> OutageProfile:
        if self.outage_override is not None:
            return OutageProfile(tuple(self.outage_override))
        return outage_profile(self.links())

    def delay_model(self) -> DelayModel:
        return self.delay.model()


def load_scenario(path: str | Path) -> Scenario:
    """Parse a scenario file; raises :class:`ScenarioError` on invalid content."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "a scenario must be a JSON object")
    return Scenario.from_dict(data)


def builtin_scenarios() -> list[str]:
    """Names of the scenario files shipped with the package."""
    root = resources.files("arqplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> Scenario:
    root = resources.files("arqplan") / "scenarios"
    with resources.as_file(root / f"{name}.json") as path:
        return load_scenario(path)
