"""Run configuration: flat INI sections mapped onto dataclasses.

Every key is optional and documented by the field of the same name below.
Unknown sections or keys are errors reported with their line number.
Overrides given on the command line as ``section.key=value`` take
precedence over the file.
"""

import ast
import configparser
import dataclasses
import math
import operator
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import FRAME_KINDS, FrameFamily
from .evolution import METHODS
from .harness import SUITE_MODELS, SuiteConfig
from .lattice import (Grid, central_difference, identity_op, laplacian_op, make_grid,
                      momentum_op, multiplication_op, LatticeOperator)
from .models import MODELS, PhysicalParams, Potentials
from .reduction import EquationSpec


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` names the line and key."""


POTENTIAL_PRESETS = ("zero", "uniform", "plane_wave", "gaussian_pulse", "file")
INITIAL_KINDS = ("gaussian", "plane_wave", "random", "divergence_free", "snapshot")


@dataclass
class ModelConfig:
    name: str = "dirac"             # a model name or "equation" (see [equation])
    mass: float = 1.0
    charge: float = 0.0
    c: float = 1.0
    hbar: float = 1.0
    reduction: str = "canonical"    # spin1 blocks: canonical | feshbach_villars
    potentials: str = "zero"        # zero | uniform | plane_wave | gaussian_pulse | file
    potential_file: str = ""        # .npz with arrays phi and/or A
    phi0: float = 0.0
    a0: tuple = (0.0, 0.0, 0.0)
    amplitude: float = 0.0
    wavevector: tuple = (1.0, 0.0, 0.0)
    omega: float = 0.0
    polarization: tuple = (0.0, 1.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    t_peak: float = 0.0
    duration: float = math.inf

    def validate(self):
        if self.name not in MODELS and self.name != "equation":
            raise ValueError(f"name must be one of {sorted(MODELS) + ['equation']}")
        if self.potentials not in POTENTIAL_PRESETS:
            raise ValueError(f"potentials must be one of {POTENTIAL_PRESETS}")
        if self.potentials == "file" and not Path(self.potential_file).is_file():
            raise ValueError(f"potential_file {self.potential_file!r} does not exist")
        if self.reduction not in ("canonical", "feshbach_villars"):
            raise ValueError("reduction must be canonical or feshbach_villars")
        PhysicalParams(self.mass, self.charge, self.c, self.hbar)

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.mass, self.charge, self.c, self.hbar)

    def build_potentials(self) -> Potentials:
        kind = self.potentials
        if kind == "zero":
            return Potentials.zero()
        if kind == "uniform":
            return Potentials.uniform(self.phi0, self.a0)
        if kind == "plane_wave":
            return Potentials.plane_wave(self.amplitude, self.wavevector, self.omega,
                                         self.polarization)
        if kind == "gaussian_pulse":
            return Potentials.gaussian_pulse(self.amplitude, self.center, self.width,
                                             self.t_peak, self.duration)
        return Potentials.from_file(self.potential_file)


@dataclass
class GridConfig:
    dim: int = 1
    points: int = 64
    length: float = 2 * math.pi

    def validate(self):
        self.build()

    def build(self) -> Grid:
        return make_grid(self.dim, self.points, self.length)


@dataclass
class EvolutionConfig:
    t_start: float = 0.0
    t_end: float = 1.0
    steps: int = 1000
    method: str = "crank_nicolson"
    keep_every: int = 1
    initial: str = "gaussian"       # gaussian | plane_wave | random | divergence_free | snapshot
    width: float = 0.6
    momentum: tuple = (1.0,)
    mode: tuple = (1,)
    spinor: tuple = ()              # fibre vector; default first component
    seed: int = 0
    snapshot_in: str = ""

    def validate(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.steps < 1 or self.keep_every < 1:
            raise ValueError("steps and keep_every must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.initial not in INITIAL_KINDS:
            raise ValueError(f"initial must be one of {INITIAL_KINDS}")
        if self.initial == "snapshot" and not Path(self.snapshot_in).is_file():
            raise ValueError(f"snapshot_in {self.snapshot_in!r} does not exist")
        if not self.width > 0:
            raise ValueError("width must be positive")


@dataclass
class BundleConfig:
    frame: str = "identity"         # identity | scalar_phase | smooth_random
    seed: int = 0
    amplitude: float = 0.2
    omega: float = 1.0              # scalar_phase rate
    block: int = 0                  # smooth_random block size; 0 = whole fibre
    eps: float = 1e-3
    samples: int = 11               # sample times for the Gamma series
    threshold: float = 0.0          # Gamma CSV drops entries at or below this modulus
    cond_max: float = 1e8

    def validate(self):
        if self.frame not in FRAME_KINDS:
            raise ValueError(f"frame must be one of {FRAME_KINDS}")
        if not self.eps >= 1e-10:
            raise ValueError("eps must be >= 1e-10")
        if self.samples < 2 or self.block < 0:
            raise ValueError("samples must be >= 2 and block >= 0")

    def frames(self, dim: int, fibre_dim: int) -> FrameFamily:
        block = self.block or None
        if self.frame == "smooth_random" and block is None and dim > 64:
            block = fibre_dim
        return FrameFamily(self.frame, dim, seed=self.seed, amplitude=self.amplitude,
                           omega=self.omega, block=block, cond_max=self.cond_max)


@dataclass
class OutputConfig:
    directory: str = "out"
    prefix: str = "run"
    components: bool = True         # per-component re/im columns in trajectory CSV
    timings: bool = False           # wall-clock seconds in JSON reports (breaks bitwise determinism)

    def validate(self):
        if not self.prefix or "/" in self.prefix:
            raise ValueError("prefix must be a plain file-name stem")

    def path(self, suffix: str) -> Path:
        return Path(self.directory) / f"{self.prefix}{suffix}"


@dataclass
class EquationConfig:
    """``d^n phi/dt^n = sum_i f_i d^i phi/dt^i`` with coefficient expressions.

    Names available in expressions: ``id``, ``lap`` (compact Laplacian),
    ``lapw`` (wide Laplacian), ``p0..p2`` (momentum), ``d0..d2`` (central
    difference), ``x0..x2`` (coordinate multipliers), ``t``, ``pi``, ``e``,
    ``sin``, ``cos``, ``exp``, ``sqrt``.  Products of operators compose.
    """

    order: int = 2
    components: int = 1
    coefficients: dict = field(default_factory=dict)   # f0 = ..., f1 = ...

    def validate(self):
        if self.order < 1 or self.components < 1:
            raise ValueError("order and components must be >= 1")
        extra = set(self.coefficients) - {f"f{i}" for i in range(self.order)}
        if extra:
            raise ValueError(f"coefficients {sorted(extra)} exceed order {self.order}")


@dataclass
class VerifyConfig:
    models: tuple = SUITE_MODELS
    dim: int = 1
    points: int = 64
    length: float = 2 * math.pi
    points_3d: int = 4
    n_steps: int = 1000
    t_final: float = 1.0
    maxwell_steps: int = 100
    seed: int = 0
    tolerance_scale: float = 1.0
    select: tuple = ()

    def validate(self):
        self.suite(PhysicalParams())

    def suite(self, params: PhysicalParams) -> SuiteConfig:
        return SuiteConfig(models=tuple(self.models), dim=self.dim, points=self.points,
                           length=self.length, points_3d=self.points_3d, n_steps=self.n_steps,
                           t_final=self.t_final, maxwell_steps=self.maxwell_steps, seed=self.seed,
                           tolerance_scale=self.tolerance_scale, select=tuple(self.select),
                           params=params)


@dataclass
class ConvergenceConfig:
    model: str = "harmonic"
    dt: tuple = (0.02, 0.01, 0.005, 0.0025)
    method: str = "crank_nicolson"
    t_final: float = 0.0            # 0 selects the default span
    order_min: float = 1.9
    order_max: float = 2.1

    def validate(self):
        if self.model != "harmonic" and self.model not in MODELS:
            raise ValueError(f"model must be harmonic or one of {sorted(MODELS)}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    bundle: BundleConfig = field(default_factory=BundleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    equation: EquationConfig = field(default_factory=EquationConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    source: str = "<defaults>"


SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig) if f.name != "source"}


# parsing ------------------------------------------------------------------

def _key_lines(text: str) -> dict:
    """``(section, key) -> line number`` by a plain scan of the file."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = i
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        lines.setdefault((section, key), i)
    return lines


def _convert(kind, raw: str, default):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is tuple:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        sample = default[0] if default else ""
        if isinstance(sample, str):
            return tuple(items)
        if isinstance(sample, int) and not isinstance(sample, bool):
            return tuple(int(v) for v in items)
        return tuple(float(v) for v in items)
    return raw


def load_config(path=None, overrides=()) -> RunConfig:
    """Parse an INI file (or defaults when ``path`` is None) plus ``section.key=value`` overrides."""
    text, source = "", "<defaults>"
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        source = str(path)
    return parse_config(text, overrides, source)


def parse_config(text: str, overrides=(), source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    where = _key_lines(text)
    entries = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}:{where.get((section, None), '?')}: unknown section [{section}]")
        for key, value in parser.items(section):
            entries[(section, key)] = (value, f"{source}:{where.get((section, key), '?')}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"override {item!r}: unknown section [{section}]")
        entries[(section, key.strip().lower())] = (value, f"override {item!r}")
    built = {}
    for section, cls in SECTIONS.items():
        obj = cls()
        hints = typing.get_type_hints(cls)
        for (sec, key), (value, origin) in entries.items():
            if sec != section:
                continue
            if section == "equation" and re.fullmatch(r"f\d+", key):
                obj.coefficients[key] = value.strip()
                continue
            if key not in hints or key == "coefficients":
                raise ConfigError(f"{origin}: unknown key '{key}' in [{section}]")
            try:
                setattr(obj, key, _convert(hints[key], value, getattr(obj, key)))
            except ValueError as exc:
                raise ConfigError(f"{origin}: bad value for '{key}' in [{section}]: {exc}") from None
        try:
            obj.validate()
        except ValueError as exc:
            raise ConfigError(f"{source}: [{section}] {exc}") from None
        built[section] = obj
    return RunConfig(**built, source=source)


# equation expressions -----------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.MatMult: operator.matmul}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}


def _names(grid: Grid, hbar: float) -> dict:
    names = {"id": identity_op(grid), "lap": laplacian_op(grid, "compact"),
             "lapw": laplacian_op(grid, "wide"), "pi": math.pi, "e": math.e}
    coords = grid.coordinates()
    for a in range(grid.dim):
        names[f"p{a}"] = momentum_op(grid, a, hbar)
        names[f"d{a}"] = LatticeOperator(central_difference(grid, a).astype(complex), grid)
        names[f"x{a}"] = multiplication_op(grid, coords[a])
    return names


def _evaluate(node, env):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise ValueError(f"unknown name {node.id!r}")
        return env[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _evaluate(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a, b = _evaluate(node.left, env), _evaluate(node.right, env)
        op_a, op_b = isinstance(a, LatticeOperator), isinstance(b, LatticeOperator)
        if isinstance(node.op, (ast.Add, ast.Sub)) and op_a != op_b:
            eye = env["id"]
            a, b = (a, b * eye) if op_a else (a * eye, b)
        if isinstance(node.op, (ast.Div, ast.Pow)) and op_b:
            raise ValueError("cannot divide by or raise to an operator")
        if isinstance(node.op, ast.Pow) and op_a:
            if b != int(b) or b < 0:
                raise ValueError("operator powers must be non-negative integers")
            out = env["id"]
            for _ in range(int(b)):
                out = out @ a
            return out
        if isinstance(node.op, ast.Div) and op_a:
            return a * (1.0 / b)
        return _BINOPS[type(node.op)](a, b)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ValueError(f"{node.func.id} takes one argument")
        arg = _evaluate(node.args[0], env)
        if isinstance(arg, LatticeOperator):
            raise ValueError(f"{node.func.id} applies to numbers only")
        return _FUNCS[node.func.id](arg)
    raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")


def coefficient_operator(expr: str, grid: Grid, hbar: float = 1.0, components: int = 1):
    """Compile ``expr`` to a :class:`LatticeOperator` or, when it uses ``t``, a callable of ``t``."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {expr!r}: {exc.msg}") from None
    base = _names(grid, hbar)

    def at(t):
        v = _evaluate(tree, {**base, "t": t})
        op = v if isinstance(v, LatticeOperator) else complex(v) * base["id"]
        if components > 1:
            from .lattice import fibre_embed
            op = fibre_embed(op, np.eye(components))
        return op

    uses_t = any(isinstance(n, ast.Name) and n.id == "t" for n in ast.walk(tree))
    at(0.0)
    return at if uses_t else at(0.0)


def build_equation(cfg: RunConfig) -> EquationSpec:
    eq = cfg.equation
    grid = cfg.grid.build()
    coeffs = []
    for i in range(eq.order):
        expr = eq.coefficients.get(f"f{i}", "0")
        try:
            coeffs.append(coefficient_operator(expr, grid, cfg.model.hbar, eq.components))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{cfg.source}: [equation] f{i}: {exc}") from None
    names = tuple(eq.coefficients.get(f"f{i}", "0") for i in range(eq.order))
    return EquationSpec(eq.order, tuple(coeffs), eq.components, cfg.model.hbar, grid, names)
