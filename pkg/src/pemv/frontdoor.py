"""Exact front-door analysis on finite structural causal models.

The graph is U -> X, U -> Y, X -> A, A -> Y with U latent and no U -> A edge.
Interventional distributions are computed two independent ways: from
observational tables via the front-door formula

    p(y | do(x)) = sum_a p(a|x) sum_x' p(y|a,x') p(x')

and by graph surgery (set X := x, enumerate U and A). On this graph the two
agree exactly, while the observational conditional p(y|x) can be arbitrarily
confounded.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-12
MAX_DOMAIN = 8


def _check_rows(name: str, table: np.ndarray) -> None:
    if np.any(table < -ROW_TOL) or np.any(table > 1 + ROW_TOL):
        raise ValueError(f"{name} has entries outside [0, 1]")
    sums = table.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=ROW_TOL, rtol=0.0):
        raise ValueError(f"{name} rows must sum to 1 within {ROW_TOL}, got sums {sums}")


@dataclass(frozen=True)
class DiscreteSCM:
    """Finite SCM over (U, X, A, Y) with the front-door structure.

    p_u:            (nU,)
    p_x_given_u:    (nU, nX)
    p_a_given_x:    (nX, nA)      -- no direct U -> A dependence
    p_y_given_a_u:  (nA, nU, nY)
    """

    p_u: np.ndarray
    p_x_given_u: np.ndarray
    p_a_given_x: np.ndarray
    p_y_given_a_u: np.ndarray

    def __post_init__(self):
        for name in ("p_u", "p_x_given_u", "p_a_given_x", "p_y_given_a_u"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        _check_rows("p_u", self.p_u)
        _check_rows("p_x_given_u", self.p_x_given_u)
        _check_rows("p_a_given_x", self.p_a_given_x)
        _check_rows("p_y_given_a_u", self.p_y_given_a_u)
        nu, nx = self.p_x_given_u.shape
        na = self.p_a_given_x.shape[1]
        if self.p_u.shape != (nu,):
            raise ValueError("p_u length does not match p_x_given_u rows")
        if self.p_a_given_x.shape[0] != nx:
            raise ValueError("p_a_given_x rows do not match the X domain")
        if self.p_y_given_a_u.shape[:2] != (na, nu):
            raise ValueError("p_y_given_a_u leading dims do not match (A, U) domains")
        for n, axis in ((nu, "U"), (nx, "X"), (na, "A"), (self.n_y, "Y")):
            if not 1 <= n <= MAX_DOMAIN:
                raise ValueError(f"domain {axis} has size {n}, outside [1, {MAX_DOMAIN}]")

    @property
    def n_u(self) -> int:
        return self.p_u.shape[0]

    @property
    def n_x(self) -> int:
        return self.p_x_given_u.shape[1]

    @property
    def n_a(self) -> int:
        return self.p_a_given_x.shape[1]

    @property
    def n_y(self) -> int:
        return self.p_y_given_a_u.shape[2]


@dataclass
class ObservationalTables:
    """p(x), p(a|x), p(y|a,x) with masks for undefined conditional rows."""

    p_x: np.ndarray                 # (nX,)
    p_a_given_x: np.ndarray         # (nX, nA)
    p_y_given_a_x: np.ndarray       # (nA, nX, nY)
    defined_a_given_x: np.ndarray   # (nX,) bool
    defined_y_given_a_x: np.ndarray  # (nA, nX) bool


def joint_distribution(scm: DiscreteSCM) -> np.ndarray:
    """Full joint p(u, x, a, y) by exact enumeration."""
    return np.einsum(
        "u,ux,xa,auy->uxay", scm.p_u, scm.p_x_given_u, scm.p_a_given_x, scm.p_y_given_a_u
    )


def marginalize(scm: DiscreteSCM) -> ObservationalTables:
    """Observational tables from the joint; zero-probability conditioning
    events leave the affected row flagged undefined."""
    joint = joint_distribution(scm)  # (U, X, A, Y)
    p_xay = joint.sum(axis=0)
    p_x = p_xay.sum(axis=(1, 2))
    p_xa = p_xay.sum(axis=2)

    defined_x = p_x > 0.0
    p_a_given_x = np.zeros((scm.n_x, scm.n_a))
    np.divide(p_xa, p_x[:, None], out=p_a_given_x, where=defined_x[:, None])

    defined_ax = p_xa.T > 0.0  # (A, X)
    p_y_given_a_x = np.zeros((scm.n_a, scm.n_x, scm.n_y))
    p_axy = np.transpose(p_xay, (1, 0, 2))  # (A, X, Y)
    np.divide(p_axy, p_xa.T[:, :, None], out=p_y_given_a_x, where=defined_ax[:, :, None])

    return ObservationalTables(
        p_x=p_x,
        p_a_given_x=p_a_given_x,
        p_y_given_a_x=p_y_given_a_x,
        defined_a_given_x=defined_x,
        defined_y_given_a_x=defined_ax,
    )


def frontdoor_estimate(obs: ObservationalTables, x: int) -> np.ndarray:
    """p(y | do(x)) from observational quantities only."""
    n_x = obs.p_x.shape[0]
    if not 0 <= x < n_x:
        raise ValueError(f"x={x} outside domain [0, {n_x})")
    if not obs.defined_a_given_x[x]:
        raise ValueError(f"p(a | x={x}) is undefined (p(x={x}) = 0)")

    n_a, _, n_y = obs.p_y_given_a_x.shape
    result = np.zeros(n_y)
    for a in range(n_a):
        inner = np.zeros(n_y)
        for xp in range(n_x):
            weight = obs.p_a_given_x[x, a] * obs.p_x[xp]
            if weight == 0.0:
                continue  # outside estimator support
            if not obs.defined_y_given_a_x[a, xp]:
                raise ValueError(
                    f"front-door estimate needs p(y | a={a}, x'={xp}) but that row is "
                    f"undefined (p(a={a}, x={xp}) = 0) and carries weight {weight:.3g}"
                )
            inner += obs.p_y_given_a_x[a, xp] * obs.p_x[xp]
        result += obs.p_a_given_x[x, a] * inner
    return result


def intervene_truth(scm: DiscreteSCM, x: int) -> np.ndarray:
    """Ground-truth p(y | do(x)) by graph surgery: X := x, enumerate U and A."""
    if not 0 <= x < scm.n_x:
        raise ValueError(f"x={x} outside domain [0, {scm.n_x})")
    return np.einsum("u,a,auy->y", scm.p_u, scm.p_a_given_x[x], scm.p_y_given_a_u)


def observational_conditional(scm: DiscreteSCM, x: int) -> np.ndarray:
    """Plain p(y | x); confounded whenever U touches both X and Y."""
    joint = joint_distribution(scm)
    p_xy = joint.sum(axis=(0, 2))  # (X, Y)
    px = p_xy[x].sum()
    if px == 0.0:
        raise ValueError(f"p(x={x}) = 0; conditional undefined")
    return p_xy[x] / px


def random_scm(rng: np.random.Generator, n_u=2, n_x=2, n_a=2, n_y=2) -> DiscreteSCM:
    """Draw every conditional row from a flat Dirichlet."""

    def rows(*shape):
        flat = rng.dirichlet(np.ones(shape[-1]), size=int(np.prod(shape[:-1], initial=1)))
        flat = flat / flat.sum(axis=-1, keepdims=True)
        return flat.reshape(shape)

    return DiscreteSCM(
        p_u=rows(n_u),
        p_x_given_u=rows(n_u, n_x),
        p_a_given_x=rows(n_x, n_a),
        p_y_given_a_u=rows(n_a, n_u, n_y),
    )


def confounding_witness() -> tuple[DiscreteSCM, float]:
    """A fixed binary SCM whose observational conditional is badly biased.

    U drives X and Y strongly while the mediator channel X -> A is weak, so
    p(y|x) swings with x although p(y|do(x)) barely moves. Returns the SCM and
    max_{x,y} |p(y|x) - p(y|do(x))|.
    """
    scm = DiscreteSCM(
        p_u=np.array([0.5, 0.5]),
        p_x_given_u=np.array([[0.95, 0.05], [0.05, 0.95]]),
        p_a_given_x=np.array([[0.6, 0.4], [0.4, 0.6]]),
        p_y_given_a_u=np.array(
            [  # p(y | a, u); rows are (y=0, y=1)
                [[0.97, 0.03], [0.12, 0.88]],
                [[0.87, 0.13], [0.02, 0.98]],
            ]
        ),
    )
    gap = max(
        float(np.max(np.abs(observational_conditional(scm, x) - intervene_truth(scm, x))))
        for x in range(scm.n_x)
    )
    return scm, gap


@dataclass
class SoundnessReport:
    """Outcome of the front-door verification suite."""

    trials: int
    seed: int
    worst_discrepancy: float
    worst_case: dict = field(default_factory=dict)
    witness_gap: float = 0.0
    witness_example: dict = field(default_factory=dict)
    elapsed_seconds: float = 0.0
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.worst_discrepancy <= self.tolerance and self.witness_gap >= 0.1

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "worst_discrepancy": self.worst_discrepancy,
            "worst_case": self.worst_case,
            "witness_gap": self.witness_gap,
            "witness_example": self.witness_example,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"front-door soundness: {status}",
            f"  trials:             {self.trials} (seed {self.seed})",
            f"  worst |estimate - truth|: {self.worst_discrepancy:.3e} (tolerance {self.tolerance:.0e})",
            f"  worst case:         {self.worst_case}",
            f"  witness |p(y|x) - p(y|do(x))|: {self.witness_gap:.4f} (required >= 0.1)",
        ]
        for x, row in sorted(self.witness_example.items()):
            lines.append(
                f"    x={x}: p(y|x)={row['observational']}  p(y|do(x))={row['interventional']}"
            )
        lines.append("summary: " + json.dumps(self.to_dict(), sort_keys=True))
        return "\n".join(lines)


def run_soundness_suite(trials: int = 1000, seed: int = 0, max_domain: int = 4) -> SoundnessReport:
    """Compare the front-door estimator against graph surgery on random SCMs."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    worst_case: dict = {}
    for trial in range(trials):
        sizes = {axis: int(rng.integers(2, max_domain + 1)) for axis in ("n_u", "n_x", "n_a", "n_y")}
        scm = random_scm(rng, **sizes)
        obs = marginalize(scm)
        for x in range(scm.n_x):
            gap = float(np.max(np.abs(frontdoor_estimate(obs, x) - intervene_truth(scm, x))))
            if gap > worst:
                worst = gap
                worst_case = {"trial": trial, "x": x, "domains": sizes}
    witness, witness_gap = confounding_witness()
    witness_example = {
        x: {
            "observational": [round(float(v), 4) for v in observational_conditional(witness, x)],
            "interventional": [round(float(v), 4) for v in intervene_truth(witness, x)],
        }
        for x in range(witness.n_x)
    }
    return SoundnessReport(
        trials=trials,
        seed=seed,
        worst_discrepancy=worst,
        worst_case=worst_case,
        witness_gap=witness_gap,
        witness_example=witness_example,
        elapsed_seconds=time.perf_counter() - t0,
    )
