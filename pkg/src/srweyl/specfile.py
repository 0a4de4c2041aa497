"""Structure specification files (YAML) and the bundled catalog."""

from __future__ import annotations

import ast
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import yaml

from .algebra import format_poly, phase_ring, to_domain
from .geometry import InvalidStructure, SubRiemannianStructure, VectorField


class SpecError(ValueError):
    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass(frozen=True)
class StructureSpec:
    name: str
    n: int
    m: int
    frame: tuple[tuple[str, ...], ...]
    weights: tuple[int, ...] | None = None
    base_point: tuple[Fraction, ...] | None = None

    def to_structure(self) -> SubRiemannianStructure:
        R = phase_ring(self.n, self.m)
        frame = []
        for i, row in enumerate(self.frame):
            comps = tuple(
                parse_poly(text, R, self.n, f"frame[{i + 1}][{j + 1}]") for j, text in enumerate(row)
            )
            frame.append(VectorField(comps))
        try:
            return SubRiemannianStructure(
                self.n, self.m, tuple(frame), self.weights, self.base_point, self.name
            )
        except InvalidStructure as exc:
            raise SpecError(str(exc), self.name) from exc

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "n": self.n, "m": self.m, "frame": [list(r) for r in self.frame]}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.base_point is not None:
            out["base_point"] = [str(v) for v in self.base_point]
        return out


def spec_from_structure(S: SubRiemannianStructure) -> StructureSpec:
    frame = tuple(tuple(format_poly(c) for c in X.components) for X in S.frame)
    return StructureSpec(S.name, S.n, S.m, frame, S.weights, S.base_point)


# -- polynomial strings ------------------------------------------------------

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def parse_poly(text, R, n: int, location: str = ""):
    """Parse a polynomial in x1..xn with rational coefficients into ring R."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if isinstance(text, float) and not text.is_integer():
            raise SpecError(f"floating coefficient {text!r}; use a fraction", location)
        text = str(int(text))
    if not isinstance(text, str):
        raise SpecError(f"expected a polynomial string, got {type(text).__name__}", location)
    src = text.replace("^", "**").strip()
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"syntax error at column {exc.offset}: {text!r}", location) from None

    names = {f"x{i}": R.gens[i - 1] for i in range(1, n + 1)}

    def conv(node):
        where = f"{location} col {getattr(node, 'col_offset', 0) + 1}"
        if isinstance(node, ast.Expression):
            return conv(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return R(to_domain(R, node.value))
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise SpecError(f"unknown variable {node.id!r}", where)
            return names[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = conv(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            left = conv(node.left)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)
                        and node.right.value >= 0):
                    raise SpecError("exponent must be a nonnegative integer", where)
                return left ** node.right.value
            right = conv(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if not right.is_ground or not right:
                raise SpecError("division only by nonzero constants", where)
            return left.quo_ground(right.LC)
        raise SpecError(f"unsupported syntax {type(node).__name__}", where)

    return conv(tree)


def _parse_rational(v, location: str) -> Fraction:
    try:
        if isinstance(v, float):
            if not v.is_integer():
                raise ValueError
            return Fraction(int(v))
        return Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        raise SpecError(f"not a rational number: {v!r}", location) from None


def spec_from_mapping(data, origin: str = "<spec>") -> StructureSpec:
    if not isinstance(data, dict):
        raise SpecError("top level must be a mapping", origin)
    for key in ("n", "m", "frame"):
        if key not in data:
            raise SpecError(f"missing key {key!r}", origin)
    n, m = data["n"], data["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 1:
        raise SpecError("n and m must be positive integers", origin)
    frame = data["frame"]
    if not isinstance(frame, list) or len(frame) != n:
        raise SpecError(f"frame must list {n} vector fields", f"{origin}: frame")
    rows = []
    for i, row in enumerate(frame):
        if not isinstance(row, list) or len(row) != n:
            raise SpecError(f"field must have {n} components", f"{origin}: frame[{i + 1}]")
        rows.append(tuple(str(c) if not isinstance(c, str) else c for c in row))
    weights = data.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or not all(isinstance(w, int) for w in weights):
            raise SpecError("weights must be a list of integers", f"{origin}: weights")
        weights = tuple(weights)
    bp = data.get("base_point")
    if bp is not None:
        if not isinstance(bp, list) or len(bp) != n:
            raise SpecError(f"base_point must have {n} entries", f"{origin}: base_point")
        bp = tuple(_parse_rational(v, f"{origin}: base_point") for v in bp)
    spec = StructureSpec(str(data.get("name", Path(origin).stem)), n, m, tuple(rows), weights, bp)
    spec.to_structure()  # validate eagerly so errors carry locations
    return spec


def parse_spec_text(text: str, origin: str = "<spec>") -> StructureSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{origin}:{mark.line + 1}:{mark.column + 1}" if mark else origin
        raise SpecError(f"YAML error: {getattr(exc, 'problem', exc)}", loc) from None
    return spec_from_mapping(data, origin)


def catalog_names() -> list[str]:
    root = resources.files("srweyl") / "catalog"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_spec(path: str) -> StructureSpec:
    """Load a spec file; ``catalog/NAME`` refers to a bundled model."""
    if path.startswith("catalog/") and not Path(path).exists():
        name = path.split("/", 1)[1].removesuffix(".yaml")
        res = resources.files("srweyl") / "catalog" / f"{name}.yaml"
        if not res.is_file():
            raise SpecError(f"no catalog model named {name!r}", path)
        return parse_spec_text(res.read_text(encoding="utf-8"), path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read file: {exc.strerror}", path) from None
    return parse_spec_text(text, path)


def load_structure(path: str) -> SubRiemannianStructure:
    return load_spec(path).to_structure()


def catalog(name: str) -> SubRiemannianStructure:
    return load_structure(f"catalog/{name}")
