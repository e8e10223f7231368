"""Run configuration: a YAML document validated into a RunConfig.

Every field has a default chosen so the empty document is valid and the
canonical interval setup (0, pi) with -d2/dx2 - 1 needs only a perturbation
and a forcing expression. Validation errors carry dotted field paths.
"""

from __future__ import annotations

import dataclasses
import math
import numbers
from dataclasses import dataclass

import yaml

from . import exprlang
from .control import LocalizationSpec
from .errors import BadExponent, ExprError, ValidationError
from .evolution import SpaceTimeField, TimeGrid, default_steps
from .spectral import DomainSpec, OperatorSpec, build_operator, eigendecompose

__all__ = ["RunConfig", "load_config", "parse_config"]

_SECTIONS = (
    "domain",
    "time",
    "operator",
    "perturbation",
    "forcing",
    "control",
    "output",
)
_KEYS = {
    "domain": ("kind", "x_bounds", "y_bounds", "n"),
    "time": ("T", "steps"),
    "operator": ("a", "c", "lambda_star"),
    "perturbation": ("expr", "scale", "q"),
    "forcing": ("expr",),
    "control": ("K0", "localization"),
    "output": ("directory", "formats"),
}
_LOC_KEYS = ("x_intervals", "y_intervals", "t_intervals")
_FORMATS = ("json", "csv")


def _require_mapping(value, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ValidationError(f"expected a mapping, got {type(value).__name__}", path)
    return value

def _check_keys(sec, allowed, path):
    for key in sec:
        if key not in allowed:
            raise ValidationError(
                f"unknown key (known: {', '.join(allowed)})", f"{path}.{key}"
            )

def _number(sec, key, path, default, minimum=None, strict=False):
    value = sec.get(key, default)
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValidationError("expected a number", f"{path}.{key}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError("must be finite", f"{path}.{key}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        op = ">" if strict else ">="
        raise ValidationError(f"must be {op} {minimum}", f"{path}.{key}")
    return value

def _expression(sec, key, path, default=None):
    value = sec.get(key, default)
    if value is None:
        return None
    if isinstance(value, numbers.Real) and not isinstance(value, bool):
        return repr(float(value))
    if not isinstance(value, str):
        raise ValidationError("expected an expression string", f"{path}.{key}")
    try:
        exprlang.parse(value)
    except ExprError as ex:
        raise ValidationError(f"does not parse: {ex}", f"{path}.{key}") from ex
    return value

def _bounds_pair(sec, key, path, default):
    raw = sec.get(key, default)
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 2
        or not all(
            isinstance(v, numbers.Real) and not isinstance(v, bool) for v in raw
        )
    ):
        raise ValidationError("expected a [lo, hi] number pair", f"{path}.{key}")
    lo, hi = float(raw[0]), float(raw[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValidationError(f"needs finite lo < hi, got [{lo}, {hi}]", f"{path}.{key}")
    return (lo, hi)

def _intervals(sec, key, path, bounds, required_order=True):
    raw = sec.get(key)
    if raw is None:
        return None
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ValidationError("expected a nonempty list of [lo, hi] pairs", f"{path}.{key}")
    out = []
    lo_b, hi_b = bounds
    for i, pair in enumerate(raw):
        where = f"{path}.{key}[{i}]"
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(
                isinstance(v, numbers.Real) and not isinstance(v, bool) for v in pair
            )
        ):
            raise ValidationError("expected a [lo, hi] number pair", where)
        lo, hi = float(pair[0]), float(pair[1])
        if required_order and not lo < hi:
            raise ValidationError(f"needs lo < hi, got [{lo}, {hi}]", where)
        if lo < lo_b or hi > hi_b:
            raise ValidationError(
                f"[{lo}, {hi}] leaves the bounds [{lo_b}, {hi_b}]", where
            )
        out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    """Validated run description plus builders for the solver objects."""

    domain: DomainSpec
    T: float
    steps: int | None
    operator: OperatorSpec
    perturbation_expr: str | None
    scale: float
    q: float
    forcing_expr: str | None
    head_size: int | None
    x_intervals: tuple | None
    y_intervals: tuple | None
    t_intervals: tuple | None
    out_dir: str
    formats: tuple

    @property
    def localized(self):
        return any(
            v is not None
            for v in (self.x_intervals, self.y_intervals, self.t_intervals)
        )

    def build_system(self):
        op = build_operator(self.domain, self.operator)
        return op, eigendecompose(op)

    def time_grid(self, op):
        m = self.steps if self.steps is not None else default_steps(op, self.T)
        return TimeGrid(T=self.T, m=m)

    def perturbation_field(self):
        if self.perturbation_expr is None:
            return SpaceTimeField.zero()
        return SpaceTimeField(
            self.perturbation_expr, name="perturbation"
        ).scaled(self.scale)

    def forcing_field(self):
        if self.forcing_expr is None:
            return SpaceTimeField.zero()
        return SpaceTimeField(self.forcing_expr, name="forcing")

    def localization_spec(self):
        if not self.localized:
            return None
        return LocalizationSpec.from_intervals(
            self.domain,
            self.T,
            x_intervals=self.x_intervals,
            y_intervals=self.y_intervals,
            t_intervals=self.t_intervals,
        )

    def with_overrides(self, steps=None, scale=None, head_size="keep", out_dir=None):
        """CLI scalar overrides; head_size accepts an int, None for auto, or
        "keep" to leave the config value."""
        changes = {}
        if steps is not None:
            if steps < 1:
                raise ValidationError("must be >= 1", "time.steps")
            changes["steps"] = int(steps)
        if scale is not None:
            if not math.isfinite(scale):
                raise ValidationError("must be finite", "perturbation.scale")
            changes["scale"] = float(scale)
        if head_size != "keep":
            if head_size is not None and head_size < 0:
                raise ValidationError("must be >= 0 or auto", "control.K0")
            changes["head_size"] = None if head_size is None else int(head_size)
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        return dataclasses.replace(self, **changes) if changes else self


def parse_config(doc):
    """Validate a parsed YAML document (mapping or None) into a RunConfig."""
    doc = _require_mapping(doc, "config")
    _check_keys(doc, _SECTIONS, "config")

    dom_sec = _require_mapping(doc.get("domain"), "domain")
    _check_keys(dom_sec, _KEYS["domain"], "domain")
    kind = dom_sec.get("kind", "interval")
    if kind not in ("interval", "rectangle"):
        raise ValidationError(f"unknown kind {kind!r}", "domain.kind")
    x_bounds = _bounds_pair(dom_sec, "x_bounds", "domain", [0.0, math.pi])
    y_bounds = None
    if dom_sec.get("y_bounds") is not None:
        y_bounds = _bounds_pair(dom_sec, "y_bounds", "domain", None)
    n = dom_sec.get("n", 200)
    if isinstance(n, (list, tuple)):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in n):
            raise ValidationError("expected integer grid sizes", "domain.n")
        n = tuple(int(v) for v in n)
    elif not isinstance(n, int) or isinstance(n, bool):
        raise ValidationError("expected an integer", "domain.n")
    try:
        domain = DomainSpec(kind=kind, x_bounds=x_bounds, y_bounds=y_bounds, n=n)
    except ValidationError as ex:
        raise ValidationError(str(ex), "domain") from ex

    time_sec = _require_mapping(doc.get("time"), "time")
    _check_keys(time_sec, _KEYS["time"], "time")
    T = _number(time_sec, "T", "time", 1.0, minimum=0.0, strict=True)
    steps = time_sec.get("steps", "auto")
    if steps == "auto":
        steps = None
    elif not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise ValidationError('expected "auto" or an integer >= 1', "time.steps")

    op_sec = _require_mapping(doc.get("operator"), "operator")
    _check_keys(op_sec, _KEYS["operator"], "operator")
    a = _expression(op_sec, "a", "operator", "1.0")
    c = _expression(op_sec, "c", "operator", "-1.0")
    lambda_star = _number(op_sec, "lambda_star", "operator", 0.5, minimum=0.0, strict=True)
    if lambda_star > 1.0:
        raise ValidationError("must lie in (0, 1]", "operator.lambda_star")
    operator = OperatorSpec(a=a, c=c, lambda_star=lambda_star)

    pert_sec = _require_mapping(doc.get("perturbation"), "perturbation")
    _check_keys(pert_sec, _KEYS["perturbation"], "perturbation")
    pert_expr = _expression(pert_sec, "expr", "perturbation")
    scale = _number(pert_sec, "scale", "perturbation", 0.05)
    q = _number(pert_sec, "q", "perturbation", 3.0)
    # the perturbation-size norm is an L^q norm in space; q must clear both
    # the dimension and the square-integrability floor
    if q <= max(domain.dim, 2):
        raise BadExponent(
            f"q must exceed max(N, 2) = {max(domain.dim, 2)}, got {q}",
            "perturbation.q",
        )

    forcing_sec = _require_mapping(doc.get("forcing"), "forcing")
    _check_keys(forcing_sec, _KEYS["forcing"], "forcing")
    forcing_expr = _expression(forcing_sec, "expr", "forcing")

    ctl_sec = _require_mapping(doc.get("control"), "control")
    _check_keys(ctl_sec, _KEYS["control"], "control")
    head_size = ctl_sec.get("K0", "auto")
    if head_size == "auto":
        head_size = None
    elif not isinstance(head_size, int) or isinstance(head_size, bool) or head_size < 0:
        raise ValidationError('expected "auto" or an integer >= 0', "control.K0")
    loc_sec = _require_mapping(ctl_sec.get("localization"), "control.localization")
    _check_keys(loc_sec, _LOC_KEYS, "control.localization")
    x_intervals = _intervals(loc_sec, "x_intervals", "control.localization", x_bounds)
    y_intervals = None
    if loc_sec.get("y_intervals") is not None:
        if domain.kind != "rectangle":
            raise ValidationError(
                "y_intervals need a rectangle domain", "control.localization.y_intervals"
            )
        y_intervals = _intervals(loc_sec, "y_intervals", "control.localization", y_bounds)
    t_intervals = _intervals(loc_sec, "t_intervals", "control.localization", (0.0, T))

    out_sec = _require_mapping(doc.get("output"), "output")
    _check_keys(out_sec, _KEYS["output"], "output")
    out_dir = out_sec.get("directory", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ValidationError("expected a nonempty path", "output.directory")
    formats = out_sec.get("formats", list(_FORMATS))
    if not isinstance(formats, (list, tuple)) or not formats:
        raise ValidationError("expected a nonempty list", "output.formats")
    for fmt in formats:
        if fmt not in _FORMATS:
            raise ValidationError(
                f"unknown format {fmt!r} (known: {', '.join(_FORMATS)})",
                "output.formats",
            )

    return RunConfig(
        domain=domain,
        T=T,
        steps=steps,
        operator=operator,
        perturbation_expr=pert_expr,
        scale=scale,
        q=q,
        forcing_expr=forcing_expr,
        head_size=head_size,
        x_intervals=x_intervals,
        y_intervals=y_intervals,
        t_intervals=t_intervals,
        out_dir=out_dir,
        formats=tuple(formats),
    )


def load_config(path):
    """Read and validate a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as ex:
        raise ValidationError(f"cannot read config: {ex}") from ex
    except yaml.YAMLError as ex:
        raise ValidationError(f"malformed YAML: {ex}") from ex
    return parse_config(doc)
