"""Flat ``key = value`` run configuration files.

Grammar: one ``key = value`` pair per line; ``#`` starts a comment; blank
lines are ignored; keys may appear once. Booleans accept true/false/1/0/yes/no.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .config import BspfConfig
from .errors import ConfigError
from .pruning import ConvKernel

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _bool(v):
    try:
        return _BOOL[v.lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {v!r}") from None


def _str(v):
    return v


FIELDS = {
    "chunk_size": _int,
    "keep_ratio": _float,
    "metric": _str,
    "shared_qk": _bool,
    "prune_diagonal": _bool,
    "fusion_source": _str,
    "normalization": _str,
    "kernel": _str,
    "kernel_file": _str,
    "audit_mirror": _bool,
    "seed": _int,
    "n_tokens": _int,
    "model_dim": _int,
    "n_heads": _int,
    "tokens_file": _str,
    "pad": _bool,
    "threads": _int,
    "output": _str,
    "stats": _str,
    "support": _str,
    "sweep_csv": _str,
}

REQUIRED = ("chunk_size", "keep_ratio")


@dataclass(frozen=True)
class RunConfig:
    bspf: BspfConfig
    seed: int = 0
    n_tokens: int | None = None
    model_dim: int | None = None
    n_heads: int = 1
    tokens_file: str | None = None
    pad: bool = False
    threads: int = 1
    output: str | None = None
    stats: str | None = None
    support: str | None = None
    sweep_csv: str | None = None


def _kernel(text: str | None, path: str | None, base: Path) -> ConvKernel:
    if text is not None and path is not None:
        raise ConfigError("kernel: give either kernel or kernel_file, not both")
    if path is not None:
        try:
            text = (base / path).read_text()
        except OSError as exc:
            raise ConfigError(f"kernel_file: cannot read {path}: {exc.strerror}") from None
        return ConvKernel.parse(text)
    if text is None or text == "uniform":
        return ConvKernel.uniform()
    if text == "delta":
        return ConvKernel.delta()
    try:
        return ConvKernel.parse(text)
    except ConfigError as exc:
        raise ConfigError(f"kernel: {exc}") from None


def parse_run_config(text: str, base: Path | str = ".") -> RunConfig:
    base = Path(base)
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = FIELDS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None

    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if "tokens_file" not in values:
        for key in ("n_tokens", "model_dim"):
            if key not in values:
                raise ConfigError(f"missing required key {key!r} (no tokens_file given)")

    kernel = _kernel(values.pop("kernel", None), values.pop("kernel_file", None), base)
    bspf_keys = ("chunk_size", "keep_ratio", "metric", "shared_qk", "prune_diagonal",
                 "fusion_source", "normalization", "audit_mirror")
    bspf = BspfConfig(kernel=kernel, **{k: values.pop(k) for k in bspf_keys if k in values})
    if "tokens_file" in values:
        values["tokens_file"] = str(base / values["tokens_file"])
    for key in ("output", "stats", "support", "sweep_csv"):
        if key in values:
            values[key] = str(base / values[key])
    run = RunConfig(bspf=bspf, **values)
    if run.n_heads < 1:
        raise ConfigError("n_heads must be positive")
    if run.threads < 1:
        raise ConfigError("threads must be positive")
    return run


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(), base=path.parent)
