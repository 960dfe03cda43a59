"""Candidate basis functions for sparse dynamics models.

A model has the form ``dx_j/dt = sum_k xi[k, j] * theta_{j,k}(x)`` where each
state ``j`` owns its own ordered list of candidate terms.  Six kinds of term
are supported: the constant, monomials, reciprocals, exponentials, sines and
cosines of a single state.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

KINDS = ("constant", "monomial", "reciprocal", "exponential", "sine", "cosine")

_UNARY_LABELS = {"exponential": "exp", "sine": "sin", "cosine": "cos"}
_UNARY_KINDS = {v: k for k, v in _UNARY_LABELS.items()}
_FACTOR_RE = re.compile(r"^x(\d+)(?:\^(\d+))?$")
_UNARY_RE = re.compile(r"^(exp|sin|cos)\(x(\d+)\)$")
_RECIP_RE = re.compile(r"^1/x(\d+)$")


class BasisDomainError(ValueError):
    """A basis function was evaluated outside its domain."""


@dataclass(frozen=True)
class BasisFunction:
    """One candidate term.

    ``exponents`` is only meaningful for monomials, ``target`` (0-based state
    index) only for the single-state kinds.
    """

    kind: str
    exponents: tuple[int, ...] = ()
    target: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "monomial":
            if not self.exponents or any(
                int(e) != e or e < 0 for e in self.exponents
            ):
                raise ValueError("monomial exponents must be non-negative integers")
            if sum(self.exponents) == 0:
                raise ValueError("monomial needs at least one positive exponent")
            object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        elif self.kind in ("reciprocal", "exponential", "sine", "cosine"):
            if self.target is None or self.target < 0:
                raise ValueError(f"{self.kind} term needs a target state")

    @classmethod
    def constant(cls) -> BasisFunction:
        return cls("constant")

    @classmethod
    def monomial(cls, *exponents: int) -> BasisFunction:
        return cls("monomial", tuple(exponents))

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return "1"
        if self.kind == "monomial":
            parts = []
            for i, e in enumerate(self.exponents):
                if e == 1:
                    parts.append(f"x{i + 1}")
                elif e > 1:
                    parts.append(f"x{i + 1}^{e}")
            return "*".join(parts)
        if self.kind == "reciprocal":
            return f"1/x{self.target + 1}"
        return f"{_UNARY_LABELS[self.kind]}(x{self.target + 1})"

    @property
    def min_states(self) -> int:
        """Smallest state dimension this term can be evaluated on."""
        if self.kind == "constant":
            return 0
        if self.kind == "monomial":
            nz = [i for i, e in enumerate(self.exponents) if e]
            return nz[-1] + 1
        return self.target + 1

    def __str__(self):
        return self.label

    def _check_domain(self, x: np.ndarray) -> None:
        if self.kind == "reciprocal" and np.any(x[..., self.target] == 0.0):
            raise BasisDomainError(
                f"basis term {self.label} evaluated at x{self.target + 1} = 0"
            )

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at one state vector (shape ``(n_x,)``) or many (``(m, n_x)``)."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        if self.kind == "constant":
            return np.ones(x.shape[:-1])
        if self.kind == "monomial":
            out = np.ones(x.shape[:-1])
            for i, e in enumerate(self.exponents):
                if e:
                    out = out * x[..., i] ** e
            return out
        xt = x[..., self.target]
        if self.kind == "reciprocal":
            return 1.0 / xt
        if self.kind == "exponential":
            return np.exp(xt)
        if self.kind == "sine":
            return np.sin(xt)
        return np.cos(xt)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Analytic gradient, shape ``x.shape`` (last axis is the state index)."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        out = np.zeros_like(x)
        if self.kind == "constant":
            return out
        if self.kind == "monomial":
            n = x.shape[-1]
            exps = self.exponents + (0,) * (n - len(self.exponents))
            for i, e in enumerate(exps):
                if not e:
                    continue
                d = e * x[..., i] ** (e - 1)
                for k, ek in enumerate(exps):
                    if k != i and ek:
                        d = d * x[..., k] ** ek
                out[..., i] = d
            return out
        xt = x[..., self.target]
        if self.kind == "reciprocal":
            out[..., self.target] = -1.0 / xt**2
        elif self.kind == "exponential":
            out[..., self.target] = np.exp(xt)
        elif self.kind == "sine":
            out[..., self.target] = np.cos(xt)
        else:
            out[..., self.target] = -np.sin(xt)
        return out


def parse_label(label: str, n_x: int | None = None) -> BasisFunction:
    """Inverse of :attr:`BasisFunction.label`.

    Monomial factors may appear in any order (``x2^2*x1`` parses to the same
    term as ``x1*x2^2``); ``n_x`` pads monomial exponent vectors.
    """
    s = label.replace(" ", "")
    if s == "1":
        return BasisFunction.constant()
    m = _RECIP_RE.match(s)
    if m:
        return BasisFunction("reciprocal", target=int(m.group(1)) - 1)
    m = _UNARY_RE.match(s)
    if m:
        return BasisFunction(_UNARY_KINDS[m.group(1)], target=int(m.group(2)) - 1)
    powers: dict[int, int] = {}
    for factor in s.split("*"):
        fm = _FACTOR_RE.match(factor)
        if not fm:
            raise ValueError(f"cannot parse basis label {label!r}")
        idx = int(fm.group(1)) - 1
        if idx < 0:
            raise ValueError(f"state indices start at x1: {label!r}")
        powers[idx] = powers.get(idx, 0) + int(fm.group(2) or 1)
    size = max(max(powers) + 1, n_x or 0)
    return BasisFunction.monomial(*(powers.get(i, 0) for i in range(size)))


def _canonical(bf: BasisFunction, n_x: int) -> BasisFunction:
    if bf.kind != "monomial":
        return bf
    exps = bf.exponents
    if len(exps) > n_x:
        if any(exps[n_x:]):
            raise ValueError(f"term {bf.label} references states beyond n_x={n_x}")
        exps = exps[:n_x]
    return BasisFunction.monomial(*(exps + (0,) * (n_x - len(exps))))


class Dictionary:
    """Per-state ordered lists of candidate terms.

    ``per_state[j]`` is the library for the derivative of state ``j``.
    Instances are immutable; :meth:`restrict` returns a new dictionary.
    """

    def __init__(self, per_state: Sequence[Sequence[BasisFunction | str]], n_x: int | None = None):
        if n_x is None:
            n_x = len(per_state)
        if len(per_state) != n_x:
            raise ValueError("need one term list per state")
        lists = []
        for j, terms in enumerate(per_state):
            parsed = []
            for t in terms:
                bf = parse_label(t, n_x) if isinstance(t, str) else t
                if bf.min_states > n_x:
                    raise ValueError(f"term {bf.label} references states beyond n_x={n_x}")
                parsed.append(_canonical(bf, n_x))
            labels = [bf.label for bf in parsed]
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate terms in the library of state x{j + 1}")
            lists.append(tuple(parsed))
        self._per_state = tuple(lists)
        self.n_x = n_x

    @classmethod
    def shared(cls, terms: Sequence[BasisFunction | str], n_x: int) -> Dictionary:
        """Same term list for every state."""
        return cls([list(terms)] * n_x, n_x)

    @property
    def per_state(self) -> tuple[tuple[BasisFunction, ...], ...]:
        return self._per_state

    def labels(self, j: int) -> list[str]:
        return [bf.label for bf in self._per_state[j]]

    def sizes(self) -> list[int]:
        return [len(t) for t in self._per_state]

    @property
    def n_max(self) -> int:
        return max(self.sizes()) if self._per_state else 0

    def __len__(self):
        return sum(self.sizes())

    def __eq__(self, other):
        return (
            isinstance(other, Dictionary)
            and self.n_x == other.n_x
            and self._per_state == other._per_state
        )

    def __hash__(self):
        return hash((self.n_x, self._per_state))

    def __repr__(self):
        return f"Dictionary(n_x={self.n_x}, sizes={self.sizes()})"

    def index(self, j: int, label: str) -> int:
        target = _canonical(parse_label(label, self.n_x), self.n_x).label
        return self.labels(j).index(target)

    def mask(self) -> np.ndarray:
        """Boolean ``(n_max, n_x)`` array marking real (non-padding) entries."""
        out = np.zeros((self.n_max, self.n_x), dtype=bool)
        for j, n in enumerate(self.sizes()):
            out[:n, j] = True
        return out

    def restrict(self, mask: np.ndarray) -> Dictionary:
        """Keep the terms where ``mask[k, j]`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return Dictionary(
            [[bf for k, bf in enumerate(terms) if mask[k, j]]
             for j, terms in enumerate(self._per_state)],
            self.n_x,
        )

    def to_json(self) -> str:
        return json.dumps([self.labels(j) for j in range(self.n_x)])

    @classmethod
    def from_json(cls, text: str) -> Dictionary:
        lists = json.loads(text)
        return cls(lists, len(lists))


_DEFAULT_2D = [
    ["1", "x1", "x2", "x1*x2", "x1^2", "x2^2", "x1^2*x2", "x1*x2^2", "x1^3",
     "x1^4", "1/x1", "exp(x1)", "sin(x1)", "cos(x1)"],
    ["1", "x2", "x1", "x1*x2", "x2^2", "x1^2", "x2^2*x1", "x2*x1^2", "x2^3",
     "x2^4", "1/x2", "exp(x2)", "sin(x2)", "cos(x2)"],
]

# the x2 list uses sin/cos of x3, as published
_DEFAULT_3D = [
    ["1", "x1", "x2", "x3", "x1*x2", "x1*x3", "x2*x3", "x1^2", "x2^2", "x3^2",
     "x1^2*x2", "x1*x2^2", "x1^2*x3", "x1*x3^2", "x2^2*x3", "x2*x3^2", "x1^3",
     "x1^4", "1/x1", "exp(x1)", "sin(x1)", "cos(x1)"],
    ["1", "x2", "x1", "x3", "x2*x1", "x2*x3", "x1*x3", "x2^2", "x1^2", "x3^2",
     "x2^2*x1", "x2*x1^2", "x2^2*x3", "x2*x3^2", "x1^2*x3", "x1*x3^2", "x2^3",
     "x2^4", "1/x2", "exp(x2)", "sin(x3)", "cos(x3)"],
    ["1", "x3", "x1", "x2", "x3*x1", "x3*x2", "x1*x2", "x3^2", "x1^2", "x2^2",
     "x3^2*x1", "x3*x1^2", "x3^2*x2", "x3*x2^2", "x1^2*x2", "x1*x2^2", "x3^3",
     "x3^4", "1/x3", "exp(x3)", "sin(x3)", "cos(x3)"],
]


def default_dictionary(n_x: int) -> Dictionary:
    """The standard 14-term (2 states) or 22-term (3 states) per-state library."""
    if n_x == 2:
        return Dictionary(_DEFAULT_2D, 2)
    if n_x == 3:
        return Dictionary(_DEFAULT_3D, 3)
    raise ValueError(
        f"no default dictionary for n_x={n_x}; build a custom Dictionary "
        "from BasisFunction objects or labels instead"
    )


def eval_matrix(d: Dictionary, j: int, X: np.ndarray) -> np.ndarray:
    """Library of state ``j`` evaluated on the rows of ``X``: shape ``(m, |theta_j|)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    terms = d.per_state[j]
    if not terms:
        return np.empty((X.shape[0], 0))
    return np.stack([bf.evaluate(X) for bf in terms], axis=-1)


def eval_row(d: Dictionary, j: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("eval_row takes a single state vector")
    return eval_matrix(d, j, x[None, :])[0]


def eval_jacobian_many(d: Dictionary, j: int, X: np.ndarray) -> np.ndarray:
    """Term gradients on the rows of ``X``: shape ``(m, |theta_j|, n_x)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    terms = d.per_state[j]
    if not terms:
        return np.empty((X.shape[0], 0, X.shape[1]))
    return np.stack([bf.gradient(X) for bf in terms], axis=1)


def eval_jacobian(d: Dictionary, j: int, x: np.ndarray) -> np.ndarray:
    """Matrix of ``d theta_k / d x_i`` at one state, shape ``(|theta_j|, n_x)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("eval_jacobian takes a single state vector")
    return eval_jacobian_many(d, j, x[None, :])[0]


def model_rhs(d: Dictionary, xi, x: np.ndarray) -> np.ndarray:
    """Right-hand side of the model at ``x``.

    ``xi`` is a :class:`~dynsparse.coefficients.CoefficientMatrix` or a plain
    ``(n_max, n_x)`` array; inactive or padding entries contribute nothing.
    ``x`` may be one state vector or a stack of them.
    """
    values, active = _unpack_xi(d, xi)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = np.zeros((X.shape[0], d.n_x))
    for j in range(d.n_x):
        n = len(d.per_state[j])
        keep = active[:n, j]
        if not keep.any():
            continue
        terms = [bf for k, bf in enumerate(d.per_state[j]) if keep[k]]
        theta = np.stack([bf.evaluate(X) for bf in terms], axis=-1)
        out[:, j] = theta @ values[:n, j][keep]
    return out[0] if single else out


def _unpack_xi(d: Dictionary, xi) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(xi, "active_mask"):
        values, active = np.asarray(xi.values, dtype=float), np.asarray(xi.active_mask)
    else:
        values = np.asarray(xi, dtype=float)
        active = np.ones(values.shape, dtype=bool)
    if values.shape[1] != d.n_x or values.shape[0] < d.n_max:
        raise ValueError(
            f"coefficient array of shape {values.shape} does not match {d!r}"
        )
    return values, active & _pad(d.mask(), values.shape)


def _pad(mask: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    out[: mask.shape[0]] = mask
    return out
