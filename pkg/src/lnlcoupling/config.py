"""Flat ``key = value`` run configurations and the report file format.

Keys use dotted namespaces (``geometry.h``, ``kernel.rho``...).  Every key
is checked against :data:`SCHEMA`; unknown keys and malformed values raise
:class:`ConfigError`.  Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import kernels as kn
from .elastic_models import ElasticParams
from .geometry import GridDomain, Label, balls, boxes, build_grid, default_pad, halfspace, read_mask
from .models import ModelConfig, ModelKind


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


# ---------------------------------------------------------------- value parsers


def _float(text: str) -> float:
    val = float(text)
    if not math.isfinite(val):
        raise ValueError(f"{text!r} is not finite")
    return val


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_float(t) for t in text.split(",") if t.strip()) if text.strip() else ()


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"{text!r} not in {{{', '.join(options)}}}")
        return text

    return parse


_LABELS = {"L": Label.LOCAL, "N": Label.NONLOCAL, "E": Label.EXTERIOR,
           "local": Label.LOCAL, "nonlocal": Label.NONLOCAL, "exterior": Label.EXTERIOR}


def _label(text: str) -> Label:
    if text not in _LABELS:
        raise ValueError(f"{text!r} is not a label (L, N, E)")
    return _LABELS[text]


def _regions(text: str) -> tuple[tuple[Label, tuple[float, ...]], ...]:
    """``N:0.2,0.4,0.2,0.4; E:...`` -> ((label, numbers), ...)."""
    out = []
    for item in text.split(";"):
        if not item.strip():
            continue
        lab, _, nums = item.partition(":")
        out.append((_label(lab.strip()), _floats(nums)))
    return tuple(out)


def _str(text: str) -> str:
    return text


_SOURCE_KINDS = ("zero", "constant", "gaussian_bump", "separable_sine")

# key -> (parser, default); None means "unset"
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "geometry.dim": (_int, 1),
    "geometry.bbox": (_floats, None),
    "geometry.h": (_float, 0.05),
    "geometry.pad": (_str, "auto"),
    "geometry.shape": (_choice("halfspace", "boxes", "balls", "mask"), "halfspace"),
    "geometry.axis": (_int, 0),
    "geometry.cut": (_float, 0.5),
    "geometry.gap": (_float, 0.0),
    "geometry.below": (_label, Label.LOCAL),
    "geometry.above": (_label, Label.NONLOCAL),
    "geometry.background": (_label, Label.LOCAL),
    "geometry.boxes": (_regions, ()),
    "geometry.balls": (_regions, ()),
    "geometry.mask": (_str, None),
    "model.kind": (_choice(*(k.value for k in ModelKind)), "scalar_source"),
    "kernel.kind": (_choice("none", *(k.value for k in kn.KernelKind)), "top_hat"),
    "kernel.rho": (_float, 0.2),
    "kernel.c": (_float, 1.0),
    "kernel.s": (_float, None),
    "kernel.eps": (_float, None),
    "gkernel.kind": (_choice("none", *(k.value for k in kn.SurfaceKernelKind)), "top_hat"),
    "gkernel.rho": (_float, None),
    "gkernel.c": (_float, 1.0),
    "coeff.kind": (_choice("none", "constant", "piecewise", "radial"), "none"),
    "coeff.value": (_float, 1.0),
    "coeff.below": (_float, 1.0),
    "coeff.above": (_float, 1.0),
    "coeff.axis": (_int, 0),
    "coeff.cut": (_float, 0.5),
    "coeff.low": (_float, 1.0),
    "coeff.high": (_float, 2.0),
    "coeff.center": (_floats, None),
    "coeff.width": (_float, 0.25),
    "source.kind": (_choice(*_SOURCE_KINDS), "zero"),
    "source.amp": (_float, 1.0),
    "source.center": (_floats, None),
    "source.width": (_float, 0.1),
    "source.k": (_floats, (1.0,)),
    "force.kind": (_choice(*_SOURCE_KINDS), "zero"),
    "force.amp": (_float, 1.0),
    "force.center": (_floats, None),
    "force.width": (_float, 0.1),
    "force.k": (_floats, (1.0,)),
    "force.direction": (_floats, None),
    "dirichlet.kind": (_choice("zero", "constant", "linear"), "zero"),
    "dirichlet.value": (_float, 0.0),
    "dirichlet.slope": (_floats, ()),
    "elastic.mu": (_float, 1.0),
    "elastic.lambda": (_float, 1.0),
    "assembly.exterior": (_bool, True),
    "assembly.dirichlet": (_bool, True),
    "solve.tol": (_float, 1e-10),
    "solve.max_iter": (_int, None),
    "solve.precond": (_choice("none", "jacobi"), "none"),
    "eig.enabled": (_bool, False),
    "eig.tol": (_float, 1e-8),
    "eig.max_iter": (_int, 500),
    "eig.deflate": (_choice("none", "constants", "rigid"), "none"),
    "eig.min": (_float, 0.0),
    "nonlinear.p": (_float, 2.0),
    "nonlinear.r": (_float, 2.0),
    "nonlinear.tol": (_float, 1e-8),
    "nonlinear.max_iter": (_int, 200000),
    "verify.residual_tol": (_float, 1e-8),
    "verify.gradient_probes": (_int, 0),
    "verify.h_fd": (_float, 1e-5),
    "verify.gradient_tol": (_float, 1e-6),
    "verify.exact": (_choice("none", "poisson_sine"), "none"),
    "verify.exact_factor": (_float, 2.0),
    "verify.flux_margin": (_float, 0.0),
    "output.field": (_str, "field.csv"),
    "output.report": (_str, "report.txt"),
    "output.summary": (_str, "summary.csv"),
    "seed": (_int, 0),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    raw: dict
    base_dir: Path

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_value(self, key: str, text: str) -> "RunConfig":
        raw = dict(self.raw)
        raw[key] = text
        return from_mapping(raw, self.base_dir)


def from_mapping(raw: dict[str, str], base_dir: Path | str = ".") -> RunConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for key, text in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return RunConfig(values, dict(raw), Path(base_dir))


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val.strip()
    return from_mapping(raw, base_dir)


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


# ---------------------------------------------------------------- builders


def _center(cfg: RunConfig, key: str, dim: int) -> tuple[float, ...]:
    c = cfg[key]
    if c is None:
        return (0.5,) * dim
    if len(c) != dim:
        raise ConfigError(f"{key} needs {dim} numbers")
    return c


def build_kernel(cfg: RunConfig) -> kn.KernelSpec | None:
    if cfg["kernel.kind"] == "none":
        return None
    return kn.KernelSpec(cfg["kernel.kind"], cfg["kernel.rho"], cfg["kernel.c"], cfg["kernel.s"], cfg["kernel.eps"])


def build_gkernel(cfg: RunConfig) -> kn.SurfaceKernelSpec | None:
    if cfg["gkernel.kind"] == "none":
        return None
    rho = cfg["gkernel.rho"] if cfg["gkernel.rho"] is not None else cfg["kernel.rho"]
    return kn.SurfaceKernelSpec(cfg["gkernel.kind"], rho, cfg["gkernel.c"])


def build_grid_from(cfg: RunConfig) -> GridDomain:
    dim = cfg["geometry.dim"]
    if dim not in (1, 2):
        raise ConfigError("geometry.dim must be 1 or 2")
    bbox = cfg["geometry.bbox"] or (0.0, 1.0) * dim
    if len(bbox) != 2 * dim:
        raise ConfigError(f"geometry.bbox needs {2 * dim} numbers")
    bbox = [(bbox[2 * k], bbox[2 * k + 1]) for k in range(dim)]
    h = cfg["geometry.h"]
    rhos = [0.0]
    kernel, gkernel = build_kernel(cfg), build_gkernel(cfg)
    if kernel is not None:
        rhos.append(kernel.rho)
    pad_text = cfg["geometry.pad"]
    if pad_text == "auto":
        pad = default_pad(max(rhos), h) if cfg["assembly.exterior"] and max(rhos) > 0 else 0
    else:
        try:
            pad = int(pad_text)
        except ValueError:
            raise ConfigError(f"bad value for 'geometry.pad': {pad_text!r}") from None
    shape = cfg["geometry.shape"]
    if shape == "halfspace":
        labeler = halfspace(cfg["geometry.axis"], cfg["geometry.cut"], cfg["geometry.below"],
                            cfg["geometry.above"], cfg["geometry.gap"])
    elif shape == "boxes":
        items = cfg["geometry.boxes"]
        if any(len(ext) != 2 * dim for _, ext in items):
            raise ConfigError(f"each box needs {2 * dim} numbers")
        labeler = boxes(cfg["geometry.background"], items)
    elif shape == "balls":
        items = []
        for lab, nums in cfg["geometry.balls"]:
            if len(nums) != dim + 1:
                raise ConfigError(f"each ball needs {dim + 1} numbers (center, radius)")
            items.append((lab, nums[:dim], nums[dim]))
        labeler = balls(cfg["geometry.background"], items)
    else:
        if cfg["geometry.mask"] is None:
            raise ConfigError("geometry.shape = mask needs geometry.mask")
        try:
            labeler = read_mask(cfg.base_dir / cfg["geometry.mask"])
        except OSError as exc:
            raise ConfigError(f"cannot read mask: {exc}") from None
    try:
        return build_grid(dim, bbox, h, labeler, pad)
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def _preset(cfg: RunConfig, ns: str, dim: int):
    kind = cfg[f"{ns}.kind"]
    if kind == "zero":
        return None
    if kind == "constant":
        return kn.ConstantSource(cfg[f"{ns}.amp"])
    if kind == "gaussian_bump":
        return kn.GaussianBump(cfg[f"{ns}.amp"], _center(cfg, f"{ns}.center", dim), cfg[f"{ns}.width"])
    return kn.SeparableSine(cfg[f"{ns}.amp"], tuple(cfg[f"{ns}.k"]))


def build_coefficient(cfg: RunConfig, dim: int) -> kn.Coefficient | None:
    kind = cfg["coeff.kind"]
    if kind == "none":
        return None
    if kind == "constant":
        return kn.ConstantCoefficient(cfg["coeff.value"])
    if kind == "piecewise":
        return kn.PiecewiseCoefficient(cfg["coeff.below"], cfg["coeff.above"], cfg["coeff.axis"], cfg["coeff.cut"])
    return kn.RadialCoefficient(cfg["coeff.low"], cfg["coeff.high"], _center(cfg, "coeff.center", dim),
                                cfg["coeff.width"])


def build_model(cfg: RunConfig) -> ModelConfig:
    grid = build_grid_from(cfg)
    dim = grid.dim
    kind = ModelKind(cfg["model.kind"])
    try:
        kernel, gkernel = build_kernel(cfg), build_gkernel(cfg)
        coeff = build_coefficient(cfg, dim)
        if kind.is_elastic:
            profile = _preset(cfg, "force", dim)
            direction = cfg["force.direction"] or (1.0,) + (0.0,) * (dim - 1)
            if len(direction) != dim:
                raise ConfigError(f"force.direction needs {dim} numbers")
            source = None if profile is None else kn.VectorField(profile, tuple(direction))
            elastic = ElasticParams(cfg["elastic.mu"], cfg["elastic.lambda"])
        else:
            source = _preset(cfg, "source", dim)
            elastic = None
        dk = cfg["dirichlet.kind"]
        if dk == "zero":
            datum = None
        else:
            slope = cfg["dirichlet.slope"] if dk == "linear" else ()
            datum = kn.LinearDatum(cfg["dirichlet.value"], tuple(slope) or (0.0,))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    if kind is ModelKind.SCALAR_PR and datum is not None:
        raise ConfigError("model.kind = scalar_pr supports only dirichlet.kind = zero")
    return ModelConfig(kind, grid, kernel=kernel, gkernel=gkernel, coeff=coeff, source=source,
                       elastic=elastic, datum=datum, exterior=cfg["assembly.exterior"],
                       dirichlet=cfg["assembly.dirichlet"], p=cfg["nonlinear.p"], r=cfg["nonlinear.r"])


# ---------------------------------------------------------------- report files


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def parse_value(text: str) -> Any:
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_report(path: Path | str, records: dict[str, Any]) -> None:
    lines = [f"{k}={format_value(v)}" for k, v in records.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path: Path | str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, val = line.partition("=")
            out[key] = parse_value(val)
    return out
