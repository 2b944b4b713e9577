"""Closed-form scalar fields on the box: finite sums of separable
monomial*trig terms with exact derivatives.

Boundary data and the generating potentials for Neumann fluxes are
supplied in this form so every derivative the quadratures need is
analytic rather than finite-differenced.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["TrigFactor", "Term", "TrigPoly", "affine_component"]

_TRIG_KINDS = ("none", "sin", "cos")


@dataclass(frozen=True)
class TrigFactor:
    """Per-axis factor trig(freq * t + phase); kind "none" means 1."""

    kind: str = "none"
    freq: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in _TRIG_KINDS:
            raise ValueError(f"unknown trig kind {self.kind!r}")

    def value(self, t):
        if self.kind == "none":
            return np.ones_like(t)
        arg = self.freq * t + self.phase
        return np.sin(arg) if self.kind == "sin" else np.cos(arg)

    def derivative(self):
        """Returns (scale, TrigFactor) with d/dt trig = scale * trig'."""
        if self.kind == "none":
            return 0.0, self
        if self.kind == "sin":
            return self.freq, TrigFactor("cos", self.freq, self.phase)
        return -self.freq, TrigFactor("sin", self.freq, self.phase)


@dataclass(frozen=True)
class Term:
    """coef * prod_d t_d^powers[d] * trig_d(t_d)."""

    coef: float
    powers: tuple = (0, 0, 0)
    trig: tuple = (TrigFactor(), TrigFactor(), TrigFactor())

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(int(p) for p in self.powers))
        trig = tuple(
            f if isinstance(f, TrigFactor) else TrigFactor(*f) for f in self.trig
        )
        object.__setattr__(self, "trig", trig)
        if len(self.powers) != 3 or len(self.trig) != 3:
            raise ValueError("terms are three-dimensional")
        if any(p < 0 for p in self.powers):
            raise ValueError("negative powers not supported")


class TrigPoly:
    """Sum of :class:`Term`; supports vectorized evaluation and exact
    partial derivatives of any order (each derivative is again a TrigPoly).
    """

    def __init__(self, terms=()):
        self.terms = [t if isinstance(t, Term) else Term(**t) for t in terms]

    @classmethod
    def constant(cls, value):
        return cls([Term(coef=float(value))])

    @classmethod
    def zero(cls):
        return cls([])

    def __call__(self, x, y, z):
        x, y, z = np.broadcast_arrays(
            np.asarray(x, dtype=float),
            np.asarray(y, dtype=float),
            np.asarray(z, dtype=float),
        )
        out = np.zeros(x.shape)
        for term in self.terms:
            val = np.full(x.shape, term.coef)
            for axis, t in enumerate((x, y, z)):
                p = term.powers[axis]
                if p:
                    val = val * t**p
                fac = term.trig[axis]
                if fac.kind != "none":
                    val = val * fac.value(t)
            out += val
        return out

    def diff(self, axis):
        """Exact partial derivative along axis 0, 1 or 2."""
        new_terms = []
        for term in self.terms:
            p = term.powers[axis]
            fac = term.trig[axis]
            if p:
                powers = list(term.powers)
                powers[axis] = p - 1
                new_terms.append(Term(term.coef * p, tuple(powers), term.trig))
            scale, dfac = fac.derivative()
            if scale != 0.0:
                trig = list(term.trig)
                trig[axis] = dfac
                new_terms.append(Term(term.coef * scale, term.powers, tuple(trig)))
        return TrigPoly(new_terms)

    def gradient(self):
        return [self.diff(a) for a in range(3)]

    def hessian(self):
        grads = self.gradient()
        return [[grads[a].diff(b) for b in range(3)] for a in range(3)]

    def laplacian(self):
        return TrigPoly(
            [t for a in range(3) for t in self.diff(a).diff(a).terms]
        )

    def __add__(self, other):
        return TrigPoly(self.terms + other.terms)

    def scaled(self, factor):
        return TrigPoly(
            [Term(t.coef * factor, t.powers, t.trig) for t in self.terms]
        )

    def to_dict(self):
        return [
            {
                "coef": t.coef,
                "powers": list(t.powers),
                "trig": [[f.kind, f.freq, f.phase] for f in t.trig],
            }
            for t in self.terms
        ]

    @classmethod
    def from_dict(cls, data):
        return cls(
            [
                Term(
                    coef=d["coef"],
                    powers=tuple(d.get("powers", (0, 0, 0))),
                    trig=tuple(
                        TrigFactor(k, w, ph)
                        for k, w, ph in d.get(
                            "trig", [["none", 0, 0]] * 3
                        )
                    ),
                )
                for d in data
            ]
        )


def affine_component(axis):
    """The coordinate function x_axis as a TrigPoly."""
    powers = [0, 0, 0]
    powers[axis] = 1
    return TrigPoly([Term(1.0, tuple(powers))])
