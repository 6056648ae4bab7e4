"""Budyko-Sellers energy-balance reaction terms for a(x) = 1 - x^2."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainFault, RegistrationRejected
from .solver import NonlinearitySpec

SNOW_LINE_K = 263.15


def insolation_profile(spec) -> Callable[[np.ndarray], np.ndarray]:
    """'constant' -> 1, {'x': [...], 'values': [...]} -> piecewise-linear table, or a callable."""
    if callable(spec):
        return spec
    if spec == "constant" or spec is None:
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if isinstance(spec, dict) and {"x", "values"} <= spec.keys():
        xs = np.asarray(spec["x"], dtype=float)
        vals = np.asarray(spec["values"], dtype=float)
        if xs.shape != vals.shape or xs.ndim != 1 or np.any(np.diff(xs) <= 0):
            raise ValueError("insolation table needs increasing x and matching values")
        return lambda x: np.interp(np.asarray(x, dtype=float), xs, vals)
    raise ValueError(f"unrecognised insolation profile {spec!r}")


@dataclass(frozen=True)
class SellersParams:
    Q: float
    a_i: float
    a_f: float
    u_s: float = SNOW_LINE_K
    eta_smooth: float = 5.0
    sigma_sb: float = 5.67e-8
    m_opacity: float = 0.5
    S_profile: object = "constant"

    def __post_init__(self):
        if not 0 < self.a_i < self.a_f < 1:
            raise ValueError("need 0 < a_i < a_f < 1")
        if not self.eta_smooth > 0:
            raise ValueError("eta_smooth must be positive")
        if self.m_opacity < 0:
            raise ValueError("opacity must be nonnegative")


@dataclass(frozen=True)
class BudykoParams:
    A: float
    B: float
    Q: float
    a_i: float
    a_f: float
    u_s: float = SNOW_LINE_K
    eta_smooth: float = 5.0
    S_profile: object = "constant"

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not 0 < self.a_i < self.a_f < 1:
            raise ValueError("need 0 < a_i < a_f < 1")
        if not self.eta_smooth > 0:
            raise ValueError("eta_smooth must be positive")


def sellers_coalbedo(u, p):
    """Linear ramp from a_i to a_f across [u_s - eta, u_s + eta]."""
    u = np.asarray(u, dtype=float)
    frac = np.clip((u - (p.u_s - p.eta_smooth)) / (2 * p.eta_smooth), 0.0, 1.0)
    out = p.a_i + (p.a_f - p.a_i) * frac
    return float(out) if out.ndim == 0 else out


def budyko_emission(u, p: BudykoParams):
    out = p.A + p.B * np.asarray(u, dtype=float)
    return float(out) if out.ndim == 0 else out


def sellers_emission(u, p: SellersParams):
    """sigma (1 - m tanh(19 u^6 / 1e6)) u^4, u in Kelvin."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainFault("Sellers emission needs u >= 0 (Kelvin)")
    out = p.sigma_sb * (1.0 - p.m_opacity * np.tanh(19.0 * u ** 6 / 1e6)) * u ** 4
    return float(out) if out.ndim == 0 else out


def _sellers_emission_slope(u, p: SellersParams):
    z = 19.0 * u ** 6 / 1e6
    dz = 114.0 * u ** 5 / 1e6
    decay = np.exp(-2.0 * z)
    sech_sq = 4.0 * decay / (1.0 + decay) ** 2
    return p.sigma_sb * ((1.0 - p.m_opacity * np.tanh(z)) * 4.0 * u ** 3 - p.m_opacity * dz * u ** 4 * sech_sq)


def make_ebm_nonlinearity(p, S_profile=None, emission_choice: str | None = None, u_range: float = 350.0) -> NonlinearitySpec:
    """f(x, t, u) = Q S(x) beta(u) - R_e(u), minus its value at u = 0.

    The Sellers law is only defined for u >= 0; negative states use its odd
    extension so the solver sees a reaction defined on the whole line.
    Registered with theta = 1 and nu an analytic Lipschitz bound over |u| <= u_range.
    """
    if emission_choice is None:
        emission_choice = "budyko" if isinstance(p, BudykoParams) else "sellers"
    if emission_choice not in ("budyko", "sellers"):
        raise ValueError(f"unknown emission law {emission_choice!r}")
    if emission_choice == "budyko" and not isinstance(p, BudykoParams):
        raise ValueError("Budyko emission needs BudykoParams")
    if emission_choice == "sellers" and not isinstance(p, SellersParams):
        raise ValueError("Sellers emission needs SellersParams")
    S = insolation_profile(p.S_profile if S_profile is None else S_profile)
    Q = float(p.Q)

    if emission_choice == "budyko":
        def emission(u):
            return budyko_emission(u, p)

        emission_slope = p.B
    else:
        def emission(u):
            return np.sign(u) * sellers_emission(np.abs(u), p)

        u_probe = np.linspace(0.0, u_range, 4001)
        emission_slope = float(np.max(np.abs(_sellers_emission_slope(u_probe, p))))

    base_emission = float(emission(np.array(0.0)))
    base_coalbedo = sellers_coalbedo(0.0, p)

    def reaction(x, t, u):
        u = np.asarray(u, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), u.shape)
        absorbed = Q * S(x) * (sellers_coalbedo(u, p) - base_coalbedo)
        return absorbed - (emission(u) - base_emission)

    xs = np.linspace(-1.0, 1.0, 65)
    s_max = float(np.max(np.abs(S(xs))))
    ramp_overlap = (p.u_s - p.eta_smooth) < u_range
    nu = emission_slope + (abs(Q) * s_max * (p.a_f - p.a_i) / (2 * p.eta_smooth) if ramp_overlap else 0.0)

    # growth constant from samples, including the points the registration check uses
    x_fit = np.concatenate([xs, np.linspace(-1.0, 1.0, 33)])
    u_fit = np.concatenate([np.linspace(-u_range, u_range, 2001), np.linspace(-u_range, u_range, 41)])
    u_fit = u_fit[u_fit != 0.0]
    xx, uu = np.meshgrid(x_fit, u_fit)
    gamma = float(np.max(np.abs(reaction(xx.ravel(), 0.0, uu.ravel())) / np.abs(uu.ravel())))
    if gamma > nu * (1 + 1e-9) + 1e-12:
        raise RegistrationRejected("sampled growth exceeds the Lipschitz bound")
    return NonlinearitySpec(reaction, theta=1.0, gamma_star=gamma, nu=nu, u_range=u_range, name=f"ebm-{emission_choice}")
