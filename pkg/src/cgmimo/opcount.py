"""Real-multiplication accounting for detection and precoding.

Two routes are provided and cross-checked by the test-suite:

* :class:`OpCounter` is threaded through the numerical kernels, which tally
  the multiplications they perform stage by stage (instrumented count).
* :func:`count_detect` / :func:`count_precode` evaluate closed-form
  polynomials in ``B``, ``U`` and ``K`` (analytical count).

Counting conventions
--------------------
* complex x complex            -> 4 real multiplications
* real x complex               -> 2
* ``|z|**2`` or ``Re(a * b)``  -> 2
* real x real                  -> 1
* divisions, reciprocals, square roots and additions are not counted.
* Hermitian results (Gram matrices, Neumann terms) are computed on one
  triangle only; products with structural zeros are skipped.
* The approximate SINR tracker is tallied at ``U`` per iteration, one
  multiplication-equivalent per diagonal entry update.

Counts are per problem instance (one subcarrier). Batched kernels tally
once per call regardless of the number of stacked problems.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

__all__ = [
    "STAGES",
    "OpCounter",
    "count_detect",
    "count_precode",
    "detect_stages",
    "precode_stages",
    "crossover",
]

STAGES = (
    "gram",
    "matched-filter",
    "cg-iteration",
    "tracker",
    "cholesky",
    "substitution",
    "neumann-term",
    "cgls-iteration",
    "equalize",
    "sinr",
    "precode-output",
    "normalize",
)

DETECT_METHODS = ("cholesky", "cg", "cgls", "neumann")
PRECODE_METHODS = ("cholesky", "cg", "cgls", "neumann")


@dataclass
class OpCounter:
    """Tally of real-valued multiplications keyed by algorithm stage."""

    tallies: Counter = field(default_factory=Counter)

    def add(self, stage: str, real_mults: int) -> None:
        if stage not in STAGES:
            raise KeyError(f"unknown stage {stage!r}")
        if real_mults < 0:
            raise ValueError("multiplication counts are nonnegative")
        self.tallies[stage] += int(real_mults)

    def complex_mults(self, stage: str, n: int) -> None:
        self.add(stage, 4 * n)

    def real_complex_mults(self, stage: str, n: int) -> None:
        self.add(stage, 2 * n)

    def abs2(self, stage: str, n: int) -> None:
        self.add(stage, 2 * n)

    def real_mults(self, stage: str, n: int) -> None:
        self.add(stage, n)

    @property
    def total(self) -> int:
        return sum(self.tallies.values())

    def __getitem__(self, stage: str) -> int:
        return self.tallies.get(stage, 0)

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        self.tallies.update(other.tallies)
        return self

    def as_dict(self) -> dict:
        return {s: self.tallies[s] for s in STAGES if self.tallies.get(s)}


class _NullCounter:
    """Stand-in used when no counting is requested."""

    def add(self, stage, real_mults):
        pass

    complex_mults = real_complex_mults = abs2 = real_mults = add


NULL_COUNTER = _NullCounter()


def as_counter(counter):
    return NULL_COUNTER if counter is None else counter


# -- closed-form building blocks -------------------------------------------

def _gram(B, U):
    # U diagonal entries at 2B, U(U-1)/2 off-diagonal entries at 4B
    return 2 * B * U * U


def _cg(U, K):
    # ||r_0||^2, then per iteration: A p, Re(p^H e), alpha*p, alpha*e,
    # ||r||^2, beta*p
    return 2 * U + K * (4 * U * U + 10 * U)


def _cholesky(U):
    return 2 * U * (U - 1) + 2 * U * (U - 1) * (U - 2) // 3


def _substitution(U):
    # forward: identity right-hand side, so row i needs i(i+1)/2 complex
    # products and i real scalings; backward: full U columns per row
    forward = 2 * (U ** 3 - U) // 3 + U * (U - 1)
    backward = 2 * U ** 3
    return forward + backward


def _neumann(U, K):
    if K == 1:
        return 0
    first = 3 * U * (U - 1) // 2
    if K == 2:
        return first
    return first + 2 * U * (U - 1) + (K - 2) * 2 * (U ** 3 - U)


def _exact_tracker(U, K):
    return (K - 1) * (4 * U ** 3 + 6 * U * U)


def _check(B, U, K):
    if U < 1 or B < U:
        raise ValueError("need B >= U >= 1")
    if K < 1:
        raise ValueError("need K >= 1")


def detect_stages(method: str, B: int, U: int, K: int = 1,
                  tracker: str = "approx") -> dict:
    """Per-stage real-multiplication counts for one uplink detection."""
    _check(B, U, K)
    if method == "cholesky":
        return {
            "gram": _gram(B, U),
            "matched-filter": 4 * B * U,
            "cholesky": _cholesky(U),
            "substitution": _substitution(U),
            "equalize": 4 * U * U,
            "sinr": U,
        }
    if method == "cg":
        stages = {
            "gram": _gram(B, U),
            "matched-filter": 4 * B * U,
            "cg-iteration": _cg(U, K),
        }
        if tracker == "approx":
            stages["tracker"] = K * U
            stages["sinr"] = U
        elif tracker == "exact":
            stages["tracker"] = _exact_tracker(U, K)
            stages["sinr"] = 4 * U ** 3 + 4 * U * U + U
        else:
            raise ValueError(f"unknown tracker {tracker!r}")
        return stages
    if method == "cgls":
        return {
            "gram": 2 * B * U,  # diagonal of the Gram matrix only
            "matched-filter": 4 * B * U,
            "cgls-iteration": 2 * U + K * (8 * B * U + 4 * B + 14 * U),
            "tracker": K * U,
            "sinr": U,
        }
    if method == "neumann":
        return {
            "gram": _gram(B, U),
            "matched-filter": 4 * B * U,
            "neumann-term": _neumann(U, K),
            "equalize": 4 * U * U,
            "sinr": 2 * U * U,
        }
    raise ValueError(f"unknown detection method {method!r}")


def precode_stages(method: str, B: int, U: int, K: int = 1) -> dict:
    """Per-stage real-multiplication counts for one downlink precoding."""
    _check(B, U, K)
    tail = {"precode-output": 4 * B * U, "normalize": 4 * B}
    if method == "cholesky":
        return {
            "gram": _gram(B, U),
            "cholesky": _cholesky(U),
            "substitution": _substitution(U),
            "equalize": 4 * U * U,
            **tail,
        }
    if method == "cg":
        return {"gram": _gram(B, U), "cg-iteration": _cg(U, K), **tail}
    if method == "cgls":
        return {
            "matched-filter": 4 * B * U + 2 * U,
            "cgls-iteration": 2 * U + K * (8 * B * U + 6 * B + 14 * U),
            "normalize": 4 * B,
        }
    if method == "neumann":
        return {
            "gram": _gram(B, U),
            "neumann-term": _neumann(U, K),
            "equalize": 4 * U * U,
            **tail,
        }
    raise ValueError(f"unknown precoding method {method!r}")


def count_detect(method: str, B: int, U: int, K: int = 1,
                 tracker: str = "approx") -> int:
    """Closed-form real-multiplication count of one soft-output detection.

    ``K`` is ignored for ``"cholesky"``.
    """
    return sum(detect_stages(method, B, U, K, tracker).values())


def count_precode(method: str, B: int, U: int, K: int = 1) -> int:
    """Closed-form real-multiplication count of one precoded vector."""
    return sum(precode_stages(method, B, U, K).values())


def crossover(B: int, U: int, method: str = "cg", k_max: int = 256,
              link: str = "uplink") -> int:
    """Largest ``K`` for which ``method`` is strictly cheaper than Cholesky.

    Returns 0 if even ``K = 1`` is not cheaper.
    """
    count = count_detect if link == "uplink" else count_precode
    ref = count("cholesky", B, U)
    best = 0
    for K in range(1, k_max + 1):
        if count(method, B, U, K) < ref:
            best = K
    return best
