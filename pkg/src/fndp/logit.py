"""Binary logit mode split between AVs and LVs, class demand split, MSA step."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .network import Network, free_flow_path_time

EXP_CLAMP = 500.0

VOT_LV = 10.0  # $/h
VOT_AV = 6.5  # $/h
BETA_LV = VOT_LV / 3600.0  # per second
BETA_AV = VOT_AV / 3600.0


@dataclass(frozen=True)
class ModeSplit:
    """AV fraction per OD pair."""

    shares: Mapping[tuple[str, str], float]

    def __post_init__(self):
        for od, p in self.shares.items():
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                raise ValueError(f"AV share for OD {od} must lie in [0, 1] (got {p})")

    def __getitem__(self, od: tuple[str, str]) -> float:
        return self.shares[od]

    def vector(self, ods: Iterable[tuple[str, str]]) -> list[float]:
        return [float(self.shares[od]) for od in ods]

    @classmethod
    def uniform(cls, net: Network, p: float) -> "ModeSplit":
        return cls({od.key: float(p) for od in net.od_pairs})

    def distance(self, other: "ModeSplit") -> float:
        return sum(abs(self.shares[od] - other.shares[od]) for od in self.shares)


@dataclass(frozen=True)
class UtilityParams:
    """Trip utility and per-second travel-time disutilities.

    ``beta_trip`` cancels in the binary logit and is kept only for completeness.
    """

    beta_trip: float = 0.0
    beta_lv: float = BETA_LV
    beta_av: float = BETA_AV

    def __post_init__(self):
        if self.beta_lv < 0 or self.beta_av < 0:
            raise ValueError("travel-time disutilities must be nonnegative")

    def utilities(self, tau_lv: float, tau_av: float) -> tuple[float, float]:
        return self.beta_trip - self.beta_lv * tau_lv, self.beta_trip - self.beta_av * tau_av


def logit_exponent(tau_lv: float, tau_av: float, beta_lv: float, beta_av: float) -> float:
    return beta_av * tau_av - beta_lv * tau_lv


def logit_share(tau_lv: float, tau_av: float, beta_lv: float, beta_av: float,
                flags: list | None = None) -> float:
    """AV share ``1 / (exp(beta_av*tau_av - beta_lv*tau_lv) + 1)``.

    The exponent is clamped to +/-500; when that happens a note is appended to
    ``flags`` if one is given.
    """
    x = logit_exponent(tau_lv, tau_av, beta_lv, beta_av)
    if x > EXP_CLAMP or x < -EXP_CLAMP:
        if flags is not None:
            flags.append(f"logit exponent {x:.3g} clamped to +/-{EXP_CLAMP:g}")
        x = max(-EXP_CLAMP, min(EXP_CLAMP, x))
    return 1.0 / (math.exp(x) + 1.0)


def class_demands(demand: float, p: float) -> tuple[float, float]:
    """Split a total demand into (LV, AV) volumes."""
    if demand < 0:
        raise ValueError("demand must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("AV share must lie in [0, 1]")
    d_av = demand * p
    return demand - d_av, d_av


def mean_free_flow_time(net: Network, od) -> float:
    return sum(free_flow_path_time(net, path) for path in od.paths) / len(od.paths)


def initial_shares(net: Network) -> ModeSplit:
    """Logit shares evaluated at free-flow OD travel times for both classes."""
    shares = {}
    for od in net.od_pairs:
        tau = mean_free_flow_time(net, od)
        shares[od.key] = logit_share(tau, tau, od.beta_lv, od.beta_av)
    return ModeSplit(shares)


def msa_update(p_n: float, p_logit: float, n: int) -> float:
    """Successive-averages step ``n/(n+1) p_n + 1/(n+1) p_logit``."""
    if n < 1:
        raise ValueError("MSA iteration index must be >= 1")
    out = (n * p_n + p_logit) / (n + 1)
    # keep inside the hull of the two inputs despite rounding
    lo, hi = min(p_n, p_logit), max(p_n, p_logit)
    return min(max(out, lo), hi)


def msa_update_split(p: ModeSplit, p_logit: Mapping[tuple[str, str], float], n: int) -> ModeSplit:
    return ModeSplit({od: msa_update(v, p_logit[od], n) for od, v in p.shares.items()})
