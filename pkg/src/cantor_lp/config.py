"""Run configuration: one JSON document, scalar fields overridable from the command line."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .quadrature import QuadratureSpec
from .tree import BranchingSequence, GeometryError, build_tree, sequence_from_rule


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


REFERENCE = {"d": 1, "p": 4.0, "p1": 6.0, "M": [32, 64, 64, 64], "K": 4, "seed": 1}
SCALAR_FIELDS = ("d", "p", "p1", "K", "seed", "output_dir", "jobs", "select", "plots")


@dataclass(frozen=True)
class RunConfig:
    d: int = 1
    p: float = 4.0
    p1: float = 6.0
    M: Any = (32, 64, 64, 64)  # list of ints or {"geometric": {"base": b, "ratio": r}}
    K: int = 4
    seed: int = 1
    quadrature: dict = field(default_factory=dict)
    suite: Optional[list] = None  # None = every registered check
    output_dir: str = "out"
    jobs: int = 1
    select: bool = False  # choose good shifts per vertex when building
    selection: dict = field(default_factory=dict)
    plots: bool = True

    # -- construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(doc)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        bad = sorted(set(kw) - set(SCALAR_FIELDS))
        if bad:
            raise ConfigError(f"only scalar fields can be overridden: {', '.join(bad)}")
        cfg = dataclasses.replace(self, **kw)
        cfg.validate()
        return cfg

    def with_suite(self, names) -> "RunConfig":
        cfg = dataclasses.replace(self, suite=list(names))
        cfg.validate()
        return cfg

    # -- derived objects ----------------------------------------------------------
    def branching(self) -> tuple[int, ...]:
        if isinstance(self.M, dict):
            rule = self.M.get("geometric")
            if set(self.M) != {"geometric"} or not isinstance(rule, dict):
                raise ConfigError('M growth rule must look like {"geometric": {"base": b, "ratio": r}}')
            try:
                return sequence_from_rule(int(rule["base"]), float(rule["ratio"]), int(rule.get("count", self.K)))
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"bad geometric rule {rule!r}: {e}") from e
        try:
            return tuple(int(m) for m in self.M)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"M must be a list of integers or a growth rule, got {self.M!r}") from e

    def sequence(self) -> BranchingSequence:
        try:
            return BranchingSequence(d=self.d, p=float(self.p), p1=float(self.p1), M=self.branching(), K=int(self.K))
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    def quadrature_spec(self) -> QuadratureSpec:
        try:
            return QuadratureSpec(**self.quadrature)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad quadrature settings: {e}") from e

    def suite_entries(self) -> list[tuple[str, dict]]:
        """[(check name, overrides)] in run order."""
        from .suite import REGISTRY

        entries = list(REGISTRY) if self.suite is None else self.suite
        out = []
        for e in entries:
            if isinstance(e, str):
                name, kw = e, {}
            elif isinstance(e, dict) and "name" in e:
                kw = dict(e)
                name = kw.pop("name")
            else:
                raise ConfigError(f"suite entries are names or {{'name': ..., overrides}}, got {e!r}")
            if name not in REGISTRY:
                raise ConfigError(f"unknown check {name!r}; known: {', '.join(REGISTRY)}")
            params = REGISTRY[name].params
            bad = sorted(set(kw) - params)
            if bad:
                raise ConfigError(f"{name} does not take override(s) {', '.join(bad)}")
            out.append((name, kw))
        if len({n for n, _ in out}) != len(out):
            raise ConfigError("each check may appear only once in the suite")
        return out

    def validate(self) -> None:
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError(f"jobs must be a positive integer, got {self.jobs!r}")
        try:
            build_tree(self.sequence())
        except GeometryError as e:
            raise ConfigError(str(e)) from e
        self.quadrature_spec()
        self.suite_entries()

    def to_json(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["M"] = self.M if isinstance(self.M, dict) else list(self.M)
        return doc


def parse_assignment(text: str) -> tuple[str, Any]:
    """'key=value' from the command line; the value is JSON if it parses, else a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value

