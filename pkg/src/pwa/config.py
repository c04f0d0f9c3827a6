"""Declarative pipeline configuration for the CLI.

Config files are flat `key=value` text ('#' comments and blank lines
allowed); command-line flags override file values, and the resulting
effective config is printed to stderr and echoed into every output
artifact (as '#' header lines for text artifacts, as a `<path>.cfg`
sidecar for the fixed binary formats).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import UsageError
from .evaluation import AP_VARIANTS


@dataclass
class PipelineConfig:
    alpha: float = 2.0
    beta: float = 2.0
    n_detectors: int = 25
    target_dim: int = 4096
    qe_k: int = 10
    ap_variant: str = "trapezoid"
    epsilon: float = 1e-10
    qe_include_query: bool = True
    final_l2: bool = True
    query_prefix: str = ""
    # Artifact paths; any may also be given per-command as a flag.
    tensors: str = ""
    queries: str = ""
    train_tensors: str = ""
    ground_truth: str = ""
    detectors: str = ""
    whitening: str = ""
    db_raw: str = ""
    query_raw: str = ""
    db_descriptors: str = ""
    query_descriptors: str = ""
    rankings: str = ""
    report: str = ""
    weights_dir: str = ""

    def validate(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise UsageError("alpha and beta must be > 0")
        if self.n_detectors < 1:
            raise UsageError("n_detectors must be >= 1")
        if self.target_dim < 1:
            raise UsageError("target_dim must be >= 1")
        if self.qe_k < 0:
            raise UsageError("qe_k must be >= 0 (0 disables query expansion)")
        if self.ap_variant not in AP_VARIANTS:
            raise UsageError(
                f"ap_variant must be one of {AP_VARIANTS}, got {self.ap_variant!r}"
            )
        if self.epsilon < 0:
            raise UsageError("epsilon must be >= 0")

    def as_lines(self) -> list[str]:
        """Sorted key=value lines for stderr echo and artifact headers."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        return [f"{key}={_format_value(values[key])}" for key in sorted(values)]


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")


def read_config_file(path) -> dict[str, str]:
    """Parse flat key=value lines; later keys override earlier ones."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def build_config(file_values: dict[str, str] | None, overrides: dict) -> PipelineConfig:
    """Merge defaults <- config file <- explicit overrides (flags)."""
    config = PipelineConfig()
    typed = {f.name: f.type for f in fields(PipelineConfig)}
    for key, raw in (file_values or {}).items():
        if key not in typed:
            raise UsageError(f"unknown config key {key!r}")
        current = getattr(config, key)
        if isinstance(current, bool):
            setattr(config, key, _parse_bool(raw, key))
        elif isinstance(current, int):
            try:
                setattr(config, key, int(raw))
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: expected an integer") from exc
        elif isinstance(current, float):
            try:
                setattr(config, key, float(raw))
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: expected a number") from exc
        else:
            setattr(config, key, raw)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config
