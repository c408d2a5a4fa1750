"""Path-model description: which MVs load on which LVs, which LVs explain which.

The text format is line oriented::

    # comment
    lv Image exogenous
    lv Expectation endogenous
    mv x1 -> Image
    mv x6 -> Expectation
    path Image -> Expectation

Latent variables are reordered so that exogenous ones come first; within each
kind, and for manifest variables, declaration order fixes the matrix index.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EXOGENOUS = "exogenous"
ENDOGENOUS = "endogenous"

_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_LV_RE = re.compile(rf"^lv\s+({_NAME})\s+(\S+)$")
_MV_RE = re.compile(rf"^mv\s+({_NAME})\s*->\s*({_NAME})$")
_PATH_RE = re.compile(rf"^path\s+({_NAME})\s*->\s*({_NAME})$")


class SpecError(ValueError):
    """Malformed or inconsistent model description."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column or 1}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PathModelSpec:
    lv_names: tuple[str, ...]
    lv_kind: tuple[str, ...]
    mv_names: tuple[str, ...]
    measurement_design: np.ndarray  # J x P, 1 iff MV j loads on LV p
    structural_design: np.ndarray  # P x P, [l, p] = 1 iff LV p explains LV l
    structural_design_sym: np.ndarray = field(init=False)

    def __post_init__(self):
        d_lambda = np.asarray(self.measurement_design, dtype=float)
        d_b = np.asarray(self.structural_design, dtype=float)
        d_lambda.setflags(write=False)
        d_b.setflags(write=False)
        sym = symmetrize(d_b)
        sym.setflags(write=False)
        object.__setattr__(self, "measurement_design", d_lambda)
        object.__setattr__(self, "structural_design", d_b)
        object.__setattr__(self, "structural_design_sym", sym)

    @property
    def n_lv(self) -> int:
        return len(self.lv_names)

    @property
    def n_mv(self) -> int:
        return len(self.mv_names)

    @property
    def exogenous(self) -> list[int]:
        return [p for p, kind in enumerate(self.lv_kind) if kind == EXOGENOUS]

    @property
    def endogenous(self) -> list[int]:
        return [p for p, kind in enumerate(self.lv_kind) if kind == ENDOGENOUS]

    @property
    def block_sizes(self) -> np.ndarray:
        return self.measurement_design.sum(axis=0).astype(int)

    def block(self, p: int) -> np.ndarray:
        """Column indices of the MVs reflecting LV ``p``."""
        return np.flatnonzero(self.measurement_design[:, p])

    def predecessors(self, p: int) -> list[int]:
        return list(np.flatnonzero(self.structural_design[p]))

    def lv_index(self, name: str) -> int:
        return self.lv_names.index(name)

    def paths(self) -> list[tuple[str, str]]:
        rows, cols = np.nonzero(self.structural_design)
        return [(self.lv_names[c], self.lv_names[r]) for r, c in zip(rows, cols)]

    def endogenous_order(self) -> list[int]:
        """Endogenous LVs in a topological order of the directed design."""
        order = _topological_order(self.structural_design, self.endogenous)
        if order is None:
            raise SpecError("structural cycle among endogenous latent variables")
        return order

    def to_text(self) -> str:
        return serialize(self)

    def to_dict(self) -> dict:
        return {
            "lv_names": list(self.lv_names),
            "lv_kind": list(self.lv_kind),
            "mv_names": list(self.mv_names),
            "measurement_design": {
                "rows": self.n_mv,
                "cols": self.n_lv,
                "data": self.measurement_design.astype(int).tolist(),
            },
            "structural_design": {
                "rows": self.n_lv,
                "cols": self.n_lv,
                "data": self.structural_design.astype(int).tolist(),
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def __eq__(self, other):
        if not isinstance(other, PathModelSpec):
            return NotImplemented
        return (
            self.lv_names == other.lv_names
            and self.lv_kind == other.lv_kind
            and self.mv_names == other.mv_names
            and np.array_equal(self.measurement_design, other.measurement_design)
            and np.array_equal(self.structural_design, other.structural_design)
        )

    __hash__ = None


def symmetrize(d_b) -> np.ndarray:
    """Elementwise OR of a directed path design with its transpose."""
    d_b = np.asarray(d_b)
    if d_b.ndim != 2 or d_b.shape[0] != d_b.shape[1]:
        raise ValueError(f"path design must be square, got shape {d_b.shape}")
    if np.any(np.diag(d_b) != 0):
        raise ValueError("path design has a nonzero diagonal (self-loop)")
    return ((d_b != 0) | (d_b.T != 0)).astype(float)


def _topological_order(d_b, nodes):
    nodes = list(nodes)
    remaining = set(nodes)
    order = []
    while remaining:
        ready = [v for v in nodes if v in remaining
                 and not any(d_b[v, u] and u in remaining for u in nodes)]
        if not ready:
            return None
        for v in ready:
            order.append(v)
            remaining.discard(v)
    return order


def parse_model_spec(text: str) -> PathModelSpec:
    """Parse the line-oriented model description and validate it.

    Raises
    ------
    SpecError
        On syntax errors, undeclared or duplicate names, and on any violation
        reported by :func:`validate_spec`.
    """
    lvs: dict[str, str] = {}
    mvs: dict[str, list[str]] = {}
    paths: list[tuple[str, str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        keyword = line.split()[0]
        if keyword == "lv":
            m = _LV_RE.match(line)
            if not m:
                raise SpecError("expected 'lv <name> exogenous|endogenous'", lineno, col)
            name, kind = m.groups()
            if kind not in (EXOGENOUS, ENDOGENOUS):
                if kind == "formative":
                    raise SpecError("formative blocks are not supported", lineno, col)
                raise SpecError(f"unknown latent kind {kind!r}", lineno, raw.find(kind) + 1)
            if name in lvs:
                raise SpecError(f"duplicate latent variable {name!r}", lineno, col)
            lvs[name] = kind
        elif keyword == "mv":
            m = _MV_RE.match(line)
            if not m:
                raise SpecError("expected 'mv <name> -> <lv-name>'", lineno, col)
            name, target = m.groups()
            if target not in lvs:
                raise SpecError(f"undeclared latent variable {target!r}", lineno,
                                raw.rfind(target) + 1)
            targets = mvs.setdefault(name, [])
            if target in targets:
                raise SpecError(f"duplicate manifest variable {name!r}", lineno, col)
            targets.append(target)
        elif keyword == "path":
            m = _PATH_RE.match(line)
            if not m:
                raise SpecError("expected 'path <lv-name> -> <lv-name>'", lineno, col)
            src, dst = m.groups()
            for name in (src, dst):
                if name not in lvs:
                    raise SpecError(f"undeclared latent variable {name!r}", lineno,
                                    raw.find(name) + 1)
            if any(s == src and d == dst for s, d, _ in paths):
                raise SpecError(f"duplicate path {src} -> {dst}", lineno, col)
            paths.append((src, dst, lineno))
        else:
            raise SpecError(f"unknown statement {keyword!r}", lineno, col)

    if not lvs:
        raise SpecError("no latent variables declared")

    lv_names = [n for n, k in lvs.items() if k == EXOGENOUS]
    lv_names += [n for n, k in lvs.items() if k == ENDOGENOUS]
    mv_names = list(mvs)
    d_lambda = np.zeros((len(mv_names), len(lv_names)))
    for j, name in enumerate(mv_names):
        for target in mvs[name]:
            d_lambda[j, lv_names.index(target)] = 1
    d_b = np.zeros((len(lv_names), len(lv_names)))
    for src, dst, lineno in paths:
        if src == dst:
            raise SpecError(f"self-loop on {src!r}", lineno)
        d_b[lv_names.index(dst), lv_names.index(src)] = 1

    spec = PathModelSpec(
        lv_names=tuple(lv_names),
        lv_kind=tuple(lvs[n] for n in lv_names),
        mv_names=tuple(mv_names),
        measurement_design=d_lambda,
        structural_design=d_b,
    )
    problems = validate_spec(spec)
    if problems:
        raise SpecError("; ".join(problems))
    return spec


def load_model_spec(path) -> PathModelSpec:
    return parse_model_spec(Path(path).read_text(encoding="utf-8"))


def validate_spec(spec: PathModelSpec) -> list[str]:
    """Return every invariant violation of ``spec``; empty means valid."""
    problems = []
    d_lambda = spec.measurement_design
    d_b = spec.structural_design
    n_mv, n_lv = len(spec.mv_names), len(spec.lv_names)

    if d_lambda.shape != (n_mv, n_lv):
        problems.append(f"measurement design shape {d_lambda.shape} != ({n_mv}, {n_lv})")
        return problems
    if d_b.shape != (n_lv, n_lv):
        problems.append(f"structural design shape {d_b.shape} != ({n_lv}, {n_lv})")
        return problems
    if len(set(spec.lv_names)) != n_lv:
        problems.append("duplicate latent variable names")
    if len(set(spec.mv_names)) != n_mv:
        problems.append("duplicate manifest variable names")

    for j, row in enumerate(d_lambda):
        count = int(np.count_nonzero(row))
        if count > 1:
            problems.append(f"non-disjoint block: {spec.mv_names[j]} loads on {count} LVs")
        elif count == 0:
            problems.append(f"unassigned manifest variable: {spec.mv_names[j]}")
    for p, col in enumerate(d_lambda.T):
        if not np.any(col):
            problems.append(f"empty block: {spec.lv_names[p]}")

    if np.any(np.diag(d_b) != 0):
        problems.append("self-loop in structural design")
    for p, kind in enumerate(spec.lv_kind):
        incoming = np.any(d_b[p] != 0)
        if kind == EXOGENOUS and incoming:
            problems.append(f"exogenous LV {spec.lv_names[p]} has incoming paths")
        if kind == ENDOGENOUS and not incoming:
            problems.append(f"endogenous LV {spec.lv_names[p]} has no incoming paths")
    if _topological_order(d_b, spec.endogenous) is None:
        problems.append("structural cycle among endogenous LVs")

    exo = spec.exogenous
    if exo and max(exo) > min(spec.endogenous, default=n_lv):
        problems.append("exogenous LVs must precede endogenous LVs")
    return problems


def serialize(spec: PathModelSpec) -> str:
    """Render ``spec`` back into the line-oriented text format."""
    lines = [f"lv {name} {kind}" for name, kind in zip(spec.lv_names, spec.lv_kind)]
    for j, name in enumerate(spec.mv_names):
        for p in np.flatnonzero(spec.measurement_design[j]):
            lines.append(f"mv {name} -> {spec.lv_names[p]}")
    for src, dst in spec.paths():
        lines.append(f"path {src} -> {dst}")
    return "\n".join(lines) + "\n"


def spec_from_dict(data: dict) -> PathModelSpec:
    """Inverse of :meth:`PathModelSpec.to_dict`."""
    spec = PathModelSpec(
        lv_names=tuple(data["lv_names"]),
        lv_kind=tuple(data["lv_kind"]),
        mv_names=tuple(data["mv_names"]),
        measurement_design=np.array(data["measurement_design"]["data"], dtype=float),
        structural_design=np.array(data["structural_design"]["data"], dtype=float),
    )
    problems = validate_spec(spec)
    if problems:
        raise SpecError("; ".join(problems))
    return spec


def build_spec(blocks: dict[str, list[str]], paths: list[tuple[str, str]],
               exogenous: list[str] | None = None) -> PathModelSpec:
    """Build a spec from python structures (blocks in LV declaration order).

    LVs without incoming paths are exogenous unless ``exogenous`` says otherwise.
    """
    targets = {dst for _, dst in paths}
    if exogenous is None:
        exogenous = [lv for lv in blocks if lv not in targets]
    lines = []
    for lv in blocks:
        lines.append(f"lv {lv} {EXOGENOUS if lv in exogenous else ENDOGENOUS}")
    for lv, names in blocks.items():
        lines.extend(f"mv {mv} -> {lv}" for mv in names)
    lines.extend(f"path {src} -> {dst}" for src, dst in paths)
    return parse_model_spec("\n".join(lines))
