"""Experiment configuration: YAML parsing, validation and built-in presets.

A config file looks like::

    name: fig1_z2
    experiment: convergence        # convergence | cancellation | correction_efficiency | tail_law
    cell: {L: 2.0}
    charges:
      - {Z: 2, R: [0.35, 0, 0]}
      - {Z: 2, R: [-0.35, 0, 0]}
    smooth:                        # optional a * cos(K.x) terms
      - {k: [1, 0, 0], amplitude: 0.1}
    cutoffs: [8, 12, 16, 20, 24, 32]
    shape: cubic
    solver: {residual_tol: 1.0e-9, max_iterations: 400, seed: 0}
    reference: {policy: high_cutoff_corrected, M_ref: 48}
    cancellation: {charges: [...]}             # second configuration
    tail_law: {cutoff: 40, shells: [[5, 10], [10, 15], [15, 20]]}
    min_cutoff: 6

Errors are reported as :class:`ConfigError` with the offending field and,
when the input came from a file, its line number.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .eigensolver import SolverOptions
from .errors import ConfigError
from .lattice import Cell, Shape
from .potential import ChargeConfig, SmoothPotential

EXPERIMENTS = ("convergence", "cancellation", "correction_efficiency", "tail_law")
REFERENCE_POLICIES = ("high_cutoff_corrected", "high_cutoff", "richardson")
_TOP_KEYS = {
    "name", "experiment", "cell", "charges", "smooth", "cutoffs", "shape", "solver",
    "reference", "cancellation", "tail_law", "min_cutoff",
}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverOptions)}


@dataclass(frozen=True)
class ReferenceSpec:
    policy: str = "high_cutoff_corrected"
    M_ref: int | None = None  # None: max(3 * max(cutoffs), 48)

    def resolved_M_ref(self, cutoffs) -> int:
        return self.M_ref if self.M_ref is not None else max(3 * max(cutoffs), 48)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: str
    L: float
    charges: tuple
    cutoffs: tuple
    shape: Shape = Shape.CUBIC
    smooth_terms: tuple = ()
    solver: SolverOptions = field(default_factory=SolverOptions)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    second_charges: tuple | None = None
    tail_cutoff: int | None = None
    shells: tuple = ((5, 10), (10, 15), (15, 20))
    min_cutoff: int = 6

    @property
    def cell(self) -> Cell:
        return Cell(self.L)

    def charge_config(self, second: bool = False) -> ChargeConfig:
        charges = self.second_charges if second else self.charges
        return ChargeConfig(self.cell, charges)

    def smooth_potential(self) -> SmoothPotential | None:
        if not self.smooth_terms:
            return None
        return SmoothPotential.from_cosines(self.smooth_terms)

    @property
    def M_ref(self) -> int:
        return self.reference.resolved_M_ref(self.cutoffs)

    def echo(self) -> dict:
        """Plain-data form that :func:`parse_config_dict` maps back to an equal config."""
        d = {
            "name": self.name,
            "experiment": self.experiment,
            "cell": {"L": self.L},
            "charges": [{"Z": Z, "R": list(R)} for Z, R in self.charges],
            "smooth": [{"k": list(k), "amplitude": a} for k, a in self.smooth_terms],
            "cutoffs": list(self.cutoffs),
            "shape": self.shape.value,
            "solver": dataclasses.asdict(self.solver),
            "reference": {"policy": self.reference.policy, "M_ref": self.reference.M_ref},
            "min_cutoff": self.min_cutoff,
        }
        if self.second_charges is not None:
            d["cancellation"] = {"charges": [{"Z": Z, "R": list(R)} for Z, R in self.second_charges]}
        if self.experiment == "tail_law":
            d["tail_law"] = {"cutoff": self.tail_cutoff, "shells": [list(s) for s in self.shells]}
        return d


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                lines[p] = v.start_mark.line + 1
                walk(v, p)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, "")
    return lines


class _Ctx:
    def __init__(self, lines=None, source=None):
        self.lines = lines or {}
        self.source = source

    def fail(self, path, message):
        where = path
        line = self.lines.get(path)
        if line is None:
            # fall back to the closest enclosing key that has a line
            p = path
            while line is None and ("." in p or "[" in p):
                p = p[: max(p.rfind("."), p.rfind("["))]
                line = self.lines.get(p)
        if line is not None:
            where = f"{self.source or '<config>'}:{line} ({path})"
        raise ConfigError(message, where)


def _number(ctx, v, path, kind=float, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        ctx.fail(path, f"expected an integer, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        ctx.fail(path, f"must be positive, got {v!r}")
    return v


def _vector(ctx, v, path, kind=float):
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        ctx.fail(path, f"expected a list of 3 numbers, got {v!r}")
    return tuple(_number(ctx, x, f"{path}[{i}]", kind) for i, x in enumerate(v))


def _charges(ctx, v, path):
    if not isinstance(v, list):
        ctx.fail(path, "expected a list of {Z, R} entries")
    out = []
    for i, c in enumerate(v):
        p = f"{path}[{i}]"
        if not isinstance(c, dict) or set(c) != {"Z", "R"}:
            ctx.fail(p, f"each charge needs exactly the keys Z and R, got {c!r}")
        out.append((_number(ctx, c["Z"], f"{p}.Z", positive=True), _vector(ctx, c["R"], f"{p}.R")))
    return tuple(out)


def parse_config_dict(raw, lines=None, source=None) -> ExperimentConfig:
    ctx = _Ctx(lines, source)
    if not isinstance(raw, dict):
        ctx.fail("<root>", "config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        ctx.fail(sorted(unknown)[0], f"unknown key (allowed: {', '.join(sorted(_TOP_KEYS))})")

    experiment = raw.get("experiment", "convergence")
    if experiment not in EXPERIMENTS:
        ctx.fail("experiment", f"unknown experiment {experiment!r} (choose from {', '.join(EXPERIMENTS)})")

    cell = raw.get("cell", {"L": 2.0})
    if not isinstance(cell, dict) or "L" not in cell:
        ctx.fail("cell", "expected a mapping with key L")
    L = _number(ctx, cell["L"], "cell.L", positive=True)

    if "charges" not in raw:
        ctx.fail("charges", "missing required field")
    charges = _charges(ctx, raw["charges"], "charges")

    smooth = []
    for i, t in enumerate(raw.get("smooth") or []):
        p = f"smooth[{i}]"
        if not isinstance(t, dict) or set(t) != {"k", "amplitude"}:
            ctx.fail(p, f"each smooth term needs exactly the keys k and amplitude, got {t!r}")
        smooth.append((_vector(ctx, t["k"], f"{p}.k", int), _number(ctx, t["amplitude"], f"{p}.amplitude")))

    if "cutoffs" not in raw:
        ctx.fail("cutoffs", "missing required field")
    cut = raw["cutoffs"]
    if not isinstance(cut, list) or not cut:
        ctx.fail("cutoffs", "must be a nonempty list of integers")
    cutoffs = tuple(_number(ctx, m, f"cutoffs[{i}]", int) for i, m in enumerate(cut))
    if any(m < 1 for m in cutoffs):
        ctx.fail("cutoffs", f"all cutoffs must be >= 1, got {list(cutoffs)}")
    if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        ctx.fail("cutoffs", f"cutoffs must be strictly ascending, got {list(cutoffs)}")

    try:
        shape = Shape.parse(raw.get("shape", "cubic"))
    except ValueError as exc:
        ctx.fail("shape", str(exc))

    solver_raw = raw.get("solver") or {}
    if not isinstance(solver_raw, dict):
        ctx.fail("solver", "expected a mapping")
    bad = set(solver_raw) - _SOLVER_KEYS
    if bad:
        ctx.fail(f"solver.{sorted(bad)[0]}", f"unknown solver option (allowed: {', '.join(sorted(_SOLVER_KEYS))})")
    try:
        solver = SolverOptions(**solver_raw)
    except (TypeError, ValueError) as exc:
        ctx.fail("solver", str(exc))

    ref_raw = raw.get("reference") or {}
    if not isinstance(ref_raw, dict) or set(ref_raw) - {"policy", "M_ref"}:
        ctx.fail("reference", "expected a mapping with keys policy and M_ref")
    policy = ref_raw.get("policy", "high_cutoff_corrected")
    if policy not in REFERENCE_POLICIES:
        ctx.fail("reference.policy", f"unknown policy {policy!r} (choose from {', '.join(REFERENCE_POLICIES)})")
    M_ref = ref_raw.get("M_ref")
    if M_ref is not None:
        M_ref = _number(ctx, M_ref, "reference.M_ref", int)
        if M_ref <= max(cutoffs):
            ctx.fail("reference.M_ref", f"M_ref={M_ref} must exceed the largest cutoff {max(cutoffs)}")
    if policy == "richardson" and len(cutoffs) < 3:
        ctx.fail("cutoffs", "the richardson reference needs at least 3 cutoffs")

    second = None
    if experiment == "cancellation":
        canc = raw.get("cancellation")
        if not isinstance(canc, dict) or "charges" not in canc:
            ctx.fail("cancellation", "cancellation experiments need cancellation.charges")
        second = _charges(ctx, canc["charges"], "cancellation.charges")
    elif "cancellation" in raw:
        ctx.fail("cancellation", f"only used by the cancellation experiment, not {experiment!r}")

    tail_cutoff, shells = None, ((5, 10), (10, 15), (15, 20))
    if experiment == "tail_law":
        tl = raw.get("tail_law") or {}
        if not isinstance(tl, dict):
            ctx.fail("tail_law", "expected a mapping")
        if "shells" in tl:
            sh = tl["shells"]
            if not isinstance(sh, list) or not sh:
                ctx.fail("tail_law.shells", "expected a nonempty list of [r_lo, r_hi] pairs")
            parsed = []
            for i, s in enumerate(sh):
                if not isinstance(s, list) or len(s) != 2:
                    ctx.fail(f"tail_law.shells[{i}]", f"expected [r_lo, r_hi], got {s!r}")
                lo = _number(ctx, s[0], f"tail_law.shells[{i}][0]")
                hi = _number(ctx, s[1], f"tail_law.shells[{i}][1]")
                if not 0 <= lo < hi:
                    ctx.fail(f"tail_law.shells[{i}]", f"need 0 <= r_lo < r_hi, got {s!r}")
                parsed.append((lo, hi))
            shells = tuple(parsed)
        tail_cutoff = _number(ctx, tl.get("cutoff", max(cutoffs)), "tail_law.cutoff", int, positive=True)
        if max(hi for _, hi in shells) > tail_cutoff:
            ctx.fail("tail_law.shells", f"outermost shell exceeds the solve cutoff {tail_cutoff}")

    min_cutoff = _number(ctx, raw.get("min_cutoff", 6), "min_cutoff", int)

    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        experiment=experiment,
        L=L,
        charges=charges,
        cutoffs=cutoffs,
        shape=shape,
        smooth_terms=tuple(smooth),
        solver=solver,
        reference=ReferenceSpec(policy, M_ref),
        second_charges=second,
        tail_cutoff=tail_cutoff,
        shells=shells,
        min_cutoff=min_cutoff,
    )
    # surface geometry errors (coincident charges, bad smooth terms) as config errors
    for path, build in (("charges", lambda: cfg.charge_config()),
                        ("cancellation.charges", lambda: second is not None and cfg.charge_config(True)),
                        ("smooth", cfg.smooth_potential)):
        try:
            build()
        except ValueError as exc:
            ctx.fail(path, str(exc))
    return cfg


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source or '<config>'}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from None
    return parse_config_dict(raw, _line_map(text), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config_text(text, str(path))


# Built-in presets: two nuclei at +-R/2 with R = 0.7 e1 in a cell of side 2.
# The cancellation partner uses R2 = 0.75 e1 (our choice).
def _pair(Z, R):
    return [{"Z": Z, "R": [R / 2, 0.0, 0.0]}, {"Z": Z, "R": [-R / 2, 0.0, 0.0]}]


_STUDY_CUTOFFS = [8, 12, 16, 20, 24, 32]


def _preset(name, experiment, Z):
    d = {
        "name": name,
        "experiment": experiment,
        "cell": {"L": 2.0},
        "charges": _pair(Z, 0.7),
        "cutoffs": list(_STUDY_CUTOFFS),
        "shape": "cubic",
        "solver": {"residual_tol": 1e-9, "max_iterations": 400, "seed": 0},
        "reference": {"policy": "high_cutoff_corrected", "M_ref": 48},
    }
    if experiment == "cancellation":
        d["cancellation"] = {"charges": _pair(Z, 0.75)}
    return d


PRESETS = {
    f"fig{n}_z{Z}": _preset(f"fig{n}_z{Z}", exp, Z)
    for n, exp in ((1, "convergence"), (2, "cancellation"), (3, "correction_efficiency"))
    for Z in (2, 3)
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset (available: {', '.join(sorted(PRESETS))})", name)
    return parse_config_dict(PRESETS[name], source=f"preset {name}")


def resolve(spec: str) -> ExperimentConfig:
    """A preset name or a path to a YAML file."""
    if spec in PRESETS:
        return preset(spec)
    return load_config(spec)
