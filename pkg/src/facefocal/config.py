"""Run configuration: one YAML file drives every command.

All relative paths resolve against the config file's directory; the
canonical hash of the raw document is stamped into every manifest so
stale outputs are detectable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .client import EndpointProfile
from .errors import ConfigurationError
from .geometry import RoiSamplerConfig
from .records import canonical_json, sha256_hex


@dataclass
class RunConfig:
    images_dir: Path
    landmarks_dir: Path
    labels_path: Path
    output_root: Path
    sampler: RoiSamplerConfig
    seed: int
    stages: list[int]
    history_char_cap: int
    endpoints: dict[str, EndpointProfile]
    test_split: dict[str, int]
    key_area_min: float | None
    config_hash: str
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def regions_dir(self) -> Path:
        return self.output_root / "regions"

    @property
    def review_dir(self) -> Path:
        return self.output_root / "review"

    @property
    def reports_dir(self) -> Path:
        return self.output_root / "reports"


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}

    base = path.parent

    def p(key: str) -> Path:
        try:
            value = raw["paths"][key]
        except KeyError as exc:
            raise ConfigurationError(f"config missing paths.{key}") from exc
        value = Path(value)
        return value if value.is_absolute() else base / value

    seed = int(raw.get("seed", 0)) if seed_override is None else seed_override

    sampler_raw = dict(raw.get("sampler") or {})
    sampler_raw.setdefault("seed", seed)
    try:
        sampler = RoiSamplerConfig(**sampler_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad sampler config: {exc}") from exc

    endpoints = {}
    for name, spec in (raw.get("endpoints") or {}).items():
        try:
            endpoints[name] = EndpointProfile(**spec)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad endpoint profile {name!r}: {exc}") from exc

    stages = [int(s) for s in raw.get("stages", [1, 2, 3, 4])]
    if any(s not in (1, 2, 3, 4) for s in stages):
        raise ConfigurationError(f"stages must be within 1..4, got {stages}")

    hash_doc = dict(raw)
    if seed_override is not None:
        hash_doc["seed"] = seed_override

    return RunConfig(
        images_dir=p("images"),
        landmarks_dir=p("landmarks"),
        labels_path=p("labels"),
        output_root=p("output"),
        sampler=sampler,
        seed=seed,
        stages=stages,
        history_char_cap=int(raw.get("history_char_cap", 600)),
        endpoints=endpoints,
        test_split={str(k): int(v) for k, v in (raw.get("test_split") or {}).items()},
        key_area_min=raw.get("key_area_min"),
        config_hash=sha256_hex(canonical_json(hash_doc)),
        raw=raw,
    )
