"""Exact symbolic oracle for interaction-degree growth of stacked blocks.

Treating attention weights as constants and keeping only the multiplicative
interaction and the residual, one simplified layer maps position i to

    x_i * (sum_j a[i][j] * x_j) + x_i.

Stacking b such layers, every monomial of position i's output stays divisible
by x_i and the cofactor degree is bounded by 2^b - 1, with equality for
generic weights. This module verifies that with rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151)

MAX_LAYERS = 4
MAX_ARITY = 3


class SymbolicPoly:
    """Multivariate polynomial over the rationals; zero coefficients are never stored."""

    __slots__ = ("arity", "terms")

    def __init__(self, arity: int, terms: dict[tuple[int, ...], Fraction] | None = None):
        self.arity = arity
        self.terms: dict[tuple[int, ...], Fraction] = {}
        if terms:
            for exps, coeff in terms.items():
                if len(exps) != arity:
                    raise ValueError(f"exponent vector {exps} does not have arity {arity}")
                c = Fraction(coeff)
                if c != 0:
                    self.terms[tuple(exps)] = c

    @classmethod
    def variable(cls, arity: int, index: int) -> "SymbolicPoly":
        exps = tuple(1 if i == index else 0 for i in range(arity))
        return cls(arity, {exps: Fraction(1)})

    @classmethod
    def constant(cls, arity: int, value) -> "SymbolicPoly":
        return cls(arity, {tuple([0] * arity): Fraction(value)})

    def __add__(self, other: "SymbolicPoly") -> "SymbolicPoly":
        self._check(other)
        out = dict(self.terms)
        for exps, coeff in other.terms.items():
            s = out.get(exps, Fraction(0)) + coeff
            if s == 0:
                out.pop(exps, None)
            else:
                out[exps] = s
        return SymbolicPoly(self.arity, out)

    def __mul__(self, other: "SymbolicPoly") -> "SymbolicPoly":
        self._check(other)
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                exps = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(exps, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(exps, None)
                else:
                    out[exps] = s
        return SymbolicPoly(self.arity, out)

    def scale(self, value) -> "SymbolicPoly":
        c = Fraction(value)
        return SymbolicPoly(self.arity, {e: c * v for e, v in self.terms.items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolicPoly) and self.arity == other.arity and self.terms == other.terms

    def __hash__(self):
        return hash((self.arity, frozenset(self.terms.items())))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        """Max monomial degree; the zero polynomial reports -1."""
        return max((sum(e) for e in self.terms), default=-1)

    def min_exponent(self, index: int) -> int:
        """Smallest power of variable `index` over all monomials (0 for the zero poly)."""
        return min((e[index] for e in self.terms), default=0)

    def evaluate(self, point: Sequence[Fraction]) -> Fraction:
        if len(point) != self.arity:
            raise ValueError("point arity mismatch")
        total = Fraction(0)
        for exps, coeff in self.terms.items():
            term = coeff
            for x, e in zip(point, exps):
                term *= Fraction(x) ** e
            total += term
        return total

    def _check(self, other: "SymbolicPoly") -> None:
        if self.arity != other.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")

    def __repr__(self) -> str:
        return f"SymbolicPoly(arity={self.arity}, terms={len(self.terms)})"


@dataclass
class SimplifiedBlockSpec:
    """Constant per-layer attention weights for the simplified recurrence."""

    weights: list[list[list[Fraction]]]  # [layer][i][j]
    n: int

    def __post_init__(self):
        for layer in self.weights:
            if len(layer) != self.n or any(len(row) != self.n for row in layer):
                raise ValueError("weights must be b stacked n x n matrices")
        self.weights = [[[Fraction(w) for w in row] for row in layer] for layer in self.weights]

    @property
    def layers(self) -> int:
        return len(self.weights)


def generic_block_spec(layers: int, n: int) -> SimplifiedBlockSpec:
    """Distinct small-prime weights so top-degree terms cannot cancel."""
    need = layers * n * n
    if need > len(_PRIMES):
        raise ValueError("not enough primes for the requested spec")
    it = iter(_PRIMES)
    weights = [[[Fraction(next(it)) for _ in range(n)] for _ in range(n)] for _ in range(layers)]
    return SimplifiedBlockSpec(weights=weights, n=n)


def simplified_block_apply(
    polys: Sequence[SymbolicPoly], spec: SimplifiedBlockSpec, layer: int
) -> list[SymbolicPoly]:
    """One simplified layer: p_i * (sum_j a[i][j] p_j) + p_i, exact arithmetic."""
    if len(polys) != spec.n or any(p.arity != spec.n for p in polys):
        raise ValueError("polynomial list arity does not match the spec")
    a = spec.weights[layer]
    out = []
    for i in range(spec.n):
        mix = SymbolicPoly.constant(spec.n, 0)
        for j in range(spec.n):
            if a[i][j] != 0:
                mix = mix + polys[j].scale(a[i][j])
        out.append(polys[i] * mix + polys[i])
    return out


@dataclass
class DegreeReport:
    holds: bool
    max_degree: int      # largest cofactor degree over positions
    divisibility: bool   # every monomial of position i divisible by x_i


def stacked_polynomials(spec: SimplifiedBlockSpec) -> list[SymbolicPoly]:
    polys = [SymbolicPoly.variable(spec.n, i) for i in range(spec.n)]
    for layer in range(spec.layers):
        polys = simplified_block_apply(polys, spec, layer)
    return polys


def verify_degree_bound(spec: SimplifiedBlockSpec) -> DegreeReport:
    """Check divisibility by each position's own input and the 2^b - 1 cofactor bound."""
    if spec.layers > MAX_LAYERS or spec.n > MAX_ARITY:
        raise ValueError(
            f"verify_degree_bound: limits exceeded (layers <= {MAX_LAYERS}, n <= {MAX_ARITY})"
        )
    polys = stacked_polynomials(spec)
    divisibility = all(p.min_exponent(i) >= 1 for i, p in enumerate(polys))
    max_cofactor = max(p.total_degree() - 1 for p in polys)
    bound = 2**spec.layers - 1
    return DegreeReport(
        holds=divisibility and max_cofactor <= bound,
        max_degree=max_cofactor,
        divisibility=divisibility,
    )
