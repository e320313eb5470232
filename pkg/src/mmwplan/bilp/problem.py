"""0-1 integer linear programs: problem and solution containers, exact
re-verification and LP-format export."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class BilpError(RuntimeError):
    """Solver failure: malformed problem, unbounded relaxation, no incumbent in time."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True, eq=False)
class BilpProblem:
    """maximize c.x  subject to  A x (<=|=|>=) rhs,  x in {0,1}^n.

    ``A`` is held as a CSR matrix; ``senses`` is an array of "<=", "=", ">=".
    """

    c: np.ndarray
    A: sparse.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    names: tuple[str, ...] | None = None
    row_names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = sparse.csr_matrix(self.A, dtype=float)
        if A.shape[0] == 0:
            A = sparse.csr_matrix((0, len(c)))
        senses = np.asarray(self.senses, dtype=object).ravel()
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        if A.shape[1] != len(c):
            raise ValueError(f"constraint rows have {A.shape[1]} coefficients, expected {len(c)}")
        if not (len(senses) == len(rhs) == A.shape[0]):
            raise ValueError("senses / rhs length must match the number of rows")
        if not set(senses) <= set(_SENSES):
            raise ValueError(f"senses must be among {_SENSES}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(rhs))):
            raise ValueError("coefficients must be finite")
        if self.names is not None and len(self.names) != len(c):
            raise ValueError("need one name per variable")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", rhs)

    @classmethod
    def from_rows(cls, c, rows=(), names=None) -> "BilpProblem":
        """Build from dense rows given as ``(coefficients, sense, rhs)`` tuples."""
        c = np.asarray(c, dtype=float)
        if rows:
            A = np.array([np.asarray(r[0], dtype=float) for r in rows])
            if A.ndim != 2 or A.shape[1] != len(c):
                raise ValueError(f"every row needs exactly {len(c)} coefficients")
        else:
            A = np.zeros((0, len(c)))
        return cls(c, sparse.csr_matrix(A), [r[1] for r in rows], [r[2] for r in rows], names)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        """c.x, correctly rounded (independent of summation order)."""
        x = np.asarray(x).astype(bool)
        return math.fsum(self.c[x])

    def activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def violation(self, x) -> np.ndarray:
        """Per-row violation (>= 0) in floating point."""
        a = self.activity(x)
        d = a - self.rhs
        return np.where(self.senses == LE, np.maximum(d, 0.0),
                        np.where(self.senses == GE, np.maximum(-d, 0.0), np.abs(d)))

    def is_feasible(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x)
        if x.shape != (self.n,) or not np.all((x == 0) | (x == 1)):
            return False
        if self.m == 0:
            return True
        scale = 1.0 + np.abs(self.rhs) + abs(self.A).max(axis=1).toarray().ravel()
        return bool(np.all(self.violation(x) <= tol * scale))

    @property
    def integral(self) -> bool:
        """True when all data are integers (exact verification applies)."""
        vals = np.concatenate([self.c, self.A.data, self.rhs])
        return bool(np.all(vals == np.round(vals)))

    def to_lp(self, path=None) -> str:
        """CPLEX LP-format text; written to ``path`` when given."""
        names = self.names or tuple(f"x{i + 1}" for i in range(self.n))
        rnames = self.row_names or tuple(f"c{r + 1}" for r in range(self.m))

        def expr(idx, vals):
            parts = []
            for i, v in zip(idx, vals):
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.17g} {names[i]}")
            s = " ".join(parts) if parts else "0 " + names[0]
            return s[2:] if s.startswith("+ ") else s

        nz = np.flatnonzero(self.c)
        lines = ["\\ 0-1 program", "Maximize", " obj: " + expr(nz, self.c[nz]), "Subject To"]
        A = self.A
        for r in range(self.m):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            lines.append(f" {rnames[r]}: {expr(A.indices[lo:hi], A.data[lo:hi])} "
                         f"{self.senses[r]} {self.rhs[r]:.17g}")
        lines += ["Binaries", " " + " ".join(names), "End"]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True, eq=False)
class BilpSolution:
    x: np.ndarray | None
    objective: float
    status: Status
    nodes: int = 0
    wall_time: float = 0.0
    bound: float = math.nan
    gap: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def support(self) -> np.ndarray:
        return np.zeros(0, dtype=np.int64) if self.x is None else np.flatnonzero(self.x)


def _frac(v: float) -> Fraction:
    return Fraction(float(v))


def exact_violation(p: BilpProblem, x, scaled: bool = False) -> float:
    """Largest constraint violation computed in rational arithmetic.

    Coefficients are taken as the exact binary fractions stored in the
    float64 values, so the residuals carry no rounding error. Returns the
    violation as a float (0.0 when every row holds exactly). With ``scaled``
    each row's violation is divided by ``1 + |rhs| + max |a|``, the row
    scale used by :meth:`BilpProblem.is_feasible`.
    """
    x = np.asarray(x)
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("assignment is not binary")
    cols = np.flatnonzero(x)
    sub = p.A[:, cols].tocsr()
    scale = 1.0 + np.abs(p.rhs) + abs(p.A).max(axis=1).toarray().ravel() if scaled else None
    worst = Fraction(0)
    for r in range(p.m):
        lo, hi = sub.indptr[r], sub.indptr[r + 1]
        act = sum((_frac(v) for v in sub.data[lo:hi]), Fraction(0))
        d = act - _frac(p.rhs[r])
        s = p.senses[r]
        v = max(d, 0) if s == LE else (max(-d, 0) if s == GE else abs(d))
        if scaled and v:
            v = v / _frac(scale[r])
        worst = max(worst, v)
    return float(worst)


def verify(p: BilpProblem, sol: BilpSolution, tol: float = 1e-6) -> float:
    """Re-check a solution: binary, feasible, objective equal to c.x.

    Integral problems must satisfy every row exactly; otherwise each row's
    violation, relative to the row scale, must stay within ``tol``. Returns
    the violation measured that way.
    """
    if sol.status == Status.INFEASIBLE:
        return 0.0
    integral = p.integral
    v = exact_violation(p, sol.x, scaled=not integral)
    limit = 0.0 if integral else tol
    if v > limit:
        raise BilpError(f"assignment violates a constraint by {v:.3g}")
    if sol.objective != p.objective(sol.x):
        raise BilpError("reported objective differs from c.x")
    return v
