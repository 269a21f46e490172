"""Two-sided eigenvalue bounds from WG and conforming ground states.

With the L4 correction c(u) = beta/2 |u|_4^4,

    lower = lam_wg + c(u_p2) - c(u_wg)
    upper = lam_p1 + c(u_p2) - c(u_p1)

Both corrections use fourth powers of the L4 norm.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .eigensolve import GroundState
from .exceptions import ArgumentError

__all__ = ["BoundReport", "lower_bound", "upper_bound", "energy_bracket", "bound_report"]


def _spec_key(state: GroundState):
    if state.ops is None:
        return None
    return state.ops.spec.to_dict()


def _check_same_problem(*states: GroundState):
    keys = [_spec_key(s) for s in states]
    known = [k for k in keys if k is not None]
    if any(k != known[0] for k in known[1:]):
        raise ArgumentError("ground states belong to different problems")


def _beta(*states: GroundState) -> float:
    for s in states:
        if s.ops is not None:
            return s.ops.spec.beta
    raise ArgumentError("cannot determine beta: no state carries its operators")


def lower_bound(wg: GroundState, p2: GroundState) -> float:
    """lam_wg + beta/2 (|u_p2|_4^4 - |u_wg|_4^4)."""
    _check_same_problem(wg, p2)
    beta = _beta(wg, p2)
    return wg.lam + 0.5 * beta * (p2.l4norm4 - wg.l4norm4)


def upper_bound(p1: GroundState, p2: GroundState) -> float:
    """lam_p1 + beta/2 (|u_p2|_4^4 - |u_p1|_4^4)."""
    _check_same_problem(p1, p2)
    beta = _beta(p1, p2)
    return p1.lam + 0.5 * beta * (p2.l4norm4 - p1.l4norm4)


def energy_bracket(wg: GroundState, conf: GroundState) -> tuple[float, float]:
    """(E_wg, E_conf): the WG energy approaches from below, the conforming one from above."""
    _check_same_problem(wg, conf)
    return wg.energy, conf.energy


@dataclass
class BoundReport:
    lam_wg: float
    lam_p1: float
    lam_p2: float
    l4_wg: float
    l4_p1: float
    l4_p2: float
    energy_wg: float
    energy_p1: float
    energy_p2: float
    lower: float
    upper: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def ordered(self) -> bool:
        """True when lower <= upper; may fail on meshes that are too coarse."""
        return self.gap >= 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap"] = self.gap
        return d


def bound_report(wg: GroundState, p1: GroundState, p2: GroundState) -> BoundReport:
    _check_same_problem(wg, p1, p2)
    return BoundReport(
        lam_wg=wg.lam,
        lam_p1=p1.lam,
        lam_p2=p2.lam,
        l4_wg=wg.l4norm4,
        l4_p1=p1.l4norm4,
        l4_p2=p2.l4norm4,
        energy_wg=wg.energy,
        energy_p1=p1.energy,
        energy_p2=p2.energy,
        lower=lower_bound(wg, p2),
        upper=upper_bound(p1, p2),
    )
