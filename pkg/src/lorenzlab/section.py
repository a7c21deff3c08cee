"""Poincare section at the Casimir maxima of the unforced flow.

The surface is the zero set of g(y) = d/dt C = 2 <v0(y), y> computed with
the unforced field v0, restricted to the box

    M_eps = { |y1| <= eps, |y2| <= eps, -(gamma+zeta) <= y3 <= eps-(gamma+zeta) },

together with the max-type condition that g decreases through zero. The
surface is the same for every forcing amplitude; forced trajectories cross
it transversally, which keeps the embedded chain on one fixed section.
Crossings are located by the integrator's event machinery (bracketing plus
root refinement on dense output) and accepted only inside the box; the
flow continues through maxima outside it.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import FieldSpec, Frame, as_state, casimir
from .errors import (
    DomainError,
    HorizonExceeded,
    IntegrationError,
    TangencyWarning,
)
from .noise import NoiseLaw, NoiseSequence

_GUARD_TIME = 1e-6  # nudge used to leave the surface before event detection


@dataclass(frozen=True)
class SectionSpec:
    """Section geometry bound to a base field.

    field: base vector field (its eta is ignored; sojourn forcing is chosen
    per operation). eps_box: half-width of the membership box, see
    calibrate_eps_box. t_max: horizon for a single crossing search.
    tol: integrator tolerance. root_tol: accepted residual |g| at events.
    tangency_tol: |dg/dt| below this flags a grazing event. grid_step:
    sampling step of stored flow segments.
    """

    field: FieldSpec
    eps_box: float
    t_max: float = 100.0
    tol: float = 1e-10
    root_tol: float = 1e-9
    tangency_tol: float = 1e-6
    grid_step: float = 0.01

    def __post_init__(self):
        if self.field.frame is not Frame.Y:
            raise DomainError("the section is defined in the Y frame")
        if not (self.eps_box > 0 and math.isfinite(self.eps_box)):
            raise DomainError("eps_box must be positive and finite")
        if self.t_max <= 0:
            raise DomainError("t_max must be positive")

    def contains(self, y) -> bool:
        """Membership in the box M_eps."""
        e, shift = self.eps_box, self.field.shift
        return bool(abs(y[0]) <= e and abs(y[1]) <= e
                    and -shift <= y[2] <= e - shift)

    def forced(self, eta: float) -> FieldSpec:
        return self.field.with_eta(eta)


@dataclass
class SectionEvent:
    """A crossing: state on the surface, time since the query, diagnostics.

    cdot is the surface function g at the event (meets root_tol), cddot its
    time derivative along the active flow (negative at transversal
    crossings), eta the forcing amplitude active at the crossing.
    """

    t: float
    y: np.ndarray
    casimir: float
    cdot: float
    cddot: float
    eta: float
    tangent: bool


@dataclass
class FlowSegment:
    """Sampled flow between consecutive crossings (relative times, t[0] = 0)."""

    t: np.ndarray
    y: np.ndarray
    eta: float

    @property
    def tau(self) -> float:
        return float(self.t[-1])


@dataclass
class ReturnSample:
    """One application of the return map: x_next = flow_eta^tau(x)."""

    x: SectionEvent
    tau: float
    x_next: SectionEvent

    @property
    def eta(self) -> float:
        return self.x_next.eta


def surface_derivatives(fld: FieldSpec, y) -> tuple[float, float]:
    """Surface function g (unforced Casimir slope) and dg/dt along fld."""
    y = as_state(y)
    v = fld.velocity(y)
    v0 = v - fld.eta * np.asarray(fld.h)
    g = 2.0 * float(np.dot(v0, y))
    gdot = 2.0 * (float(np.dot(fld.jacobian(y) @ v, y)) + float(np.dot(v0, v)))
    return g, gdot


def on_section(section: SectionSpec, y, atol: float = 1e-6) -> bool:
    """True when y lies on M: g = 0 within atol, max-type, inside the box."""
    y = as_state(y)
    g, gdot = surface_derivatives(section.field.with_eta(0.0), y)
    return abs(g) <= atol and gdot <= section.tangency_tol and section.contains(y)


class _PiecewiseDense:
    """Concatenation of dense solutions over consecutive time windows."""

    def __init__(self):
        self.pieces: list[tuple[float, float, object]] = []

    def add(self, t0: float, t1: float, sol) -> None:
        self.pieces.append((t0, t1, sol))

    def eval(self, ts: np.ndarray) -> np.ndarray:
        out = np.empty((len(ts), 3))
        bounds = np.array([p[1] for p in self.pieces])
        idx = np.minimum(np.searchsorted(bounds, ts, side="left"),
                         len(self.pieces) - 1)
        for i in np.unique(idx):
            sel = idx == i
            t0 = self.pieces[i][0]
            local = np.clip(ts[sel] - t0, 0.0, self.pieces[i][1] - t0)
            out[sel] = self.pieces[i][2](local).T
        return out


def _surface_event(fld: FieldSpec):
    h = np.asarray(fld.h)
    eta = fld.eta

    def ev(t, y):
        v = fld.velocity(y)
        return 2.0 * (float(np.dot(v, y)) - eta * float(np.dot(h, y)))

    ev.direction = -1.0
    ev.terminal = True
    return ev


def _make_event(section: SectionSpec, fld: FieldSpec, t_accum: float, y_ev,
                warn: bool = True) -> SectionEvent:
    g, gdot = surface_derivatives(fld, y_ev)
    tangent = bool(abs(gdot) <= section.tangency_tol or gdot > 0)
    if tangent and warn:
        warnings.warn(f"near-tangential section crossing (dg/dt = {gdot:.3e})",
                      TangencyWarning, stacklevel=3)
    return SectionEvent(t=t_accum, y=y_ev, casimir=casimir(y_ev), cdot=g,
                        cddot=gdot, eta=fld.eta, tangent=tangent)


def _search(fld: FieldSpec, section: SectionSpec, y0: np.ndarray,
            want_segment: bool, guard_first: bool):
    """First in-box downward crossing of g = 0 along the fld flow.

    guard_first steps off the surface before enabling events; it is
    required when y0 already satisfies g = 0 (a fresh transition), because
    the event machinery would otherwise re-report the start point.
    """
    y = as_state(y0)
    dense = _PiecewiseDense() if want_segment else None
    t_accum = 0.0
    event = _surface_event(fld)
    rhs = lambda t, s: fld.velocity(s)

    def guard(y_in: np.ndarray) -> np.ndarray:
        nonlocal t_accum
        sol = solve_ivp(rhs, (0.0, _GUARD_TIME), y_in, method="DOP853",
                        rtol=section.tol, atol=section.tol,
                        dense_output=want_segment)
        if not sol.success:
            raise IntegrationError(f"guard step failed: {sol.message}")
        if want_segment:
            dense.add(t_accum, t_accum + _GUARD_TIME, sol.sol)
        t_accum += _GUARD_TIME
        return sol.y[:, -1]

    if guard_first:
        y = guard(y)
    while True:
        remaining = section.t_max - t_accum
        if remaining <= 0:
            raise HorizonExceeded(
                f"no section crossing within t_max = {section.t_max}",
                horizon=section.t_max, last_state=y)
        sol = solve_ivp(rhs, (0.0, remaining), y, method="DOP853",
                        rtol=section.tol, atol=section.tol,
                        events=[event], dense_output=want_segment)
        if sol.status == -1:
            raise IntegrationError(f"crossing search failed: {sol.message}")
        if sol.status == 0:
            raise HorizonExceeded(
                f"no section crossing within t_max = {section.t_max}",
                horizon=section.t_max, last_state=sol.y[:, -1])
        t_ev = float(sol.t_events[0][0])
        y_ev = sol.y_events[0][0].copy()
        if want_segment:
            dense.add(t_accum, t_accum + t_ev, sol.sol)
        t_accum += t_ev
        if section.contains(y_ev):
            ev = _make_event(section, fld, t_accum, y_ev)
            segment = (_build_segment(dense, t_accum, y0, y_ev, fld.eta,
                                      section.grid_step)
                       if want_segment else None)
            return ev, segment
        # Surface crossing outside the box: not an event, flow onward.
        y = guard(y_ev)


def _build_segment(dense: _PiecewiseDense, tau: float, y_start, y_end,
                   eta: float, step: float) -> FlowSegment:
    n = max(1, int(math.ceil(tau / step)))
    ts = np.linspace(0.0, tau, n + 1)
    ys = dense.eval(ts)
    ys[0] = as_state(y_start)
    ys[-1] = y_end
    return FlowSegment(t=ts, y=ys, eta=eta)


def next_crossing(fld: FieldSpec, section: SectionSpec, y0) -> SectionEvent:
    """Hitting event of M from y0 along the fld flow (t = 0 when y0 in M).

    Raises HorizonExceeded when no crossing occurs within section.t_max,
    which usually means y0 escaped the absorbing neighbourhood or the box
    is too small.
    """
    if fld.frame is not Frame.Y:
        raise DomainError("section operations are defined in the Y frame")
    y0 = as_state(y0)
    g, gdot = surface_derivatives(fld, y0)
    if abs(g) <= section.root_tol and gdot <= section.tangency_tol \
            and section.contains(y0):
        return _make_event(section, fld, 0.0, y0.copy(), warn=False)
    ev, _ = _search(fld, section, y0, want_segment=False, guard_first=False)
    return ev


def return_map(section: SectionSpec, x, eta: float = 0.0) -> ReturnSample:
    """One step of the random return map R_eta from a point on M.

    x may be a SectionEvent or a bare state on the section. The return
    time is strictly positive: the search deliberately steps past the
    trivial self-hit at t = 0.
    """
    fld = section.forced(eta)
    if isinstance(x, SectionEvent):
        x_ev, y = x, as_state(x.y)
    else:
        y = as_state(x)
        x_ev = _make_event(section, fld, 0.0, y.copy(), warn=False)
    if not on_section(section, y, atol=1e-6):
        raise DomainError("return_map requires a starting point on the section")
    ev, _ = _search(fld, section, y, want_segment=False, guard_first=True)
    ev.t += x_ev.t
    return ReturnSample(x=x_ev, tau=ev.t - x_ev.t, x_next=ev)


@dataclass
class MarkovRenewalTrace:
    """Embedded chain (x_n, eta_n, tau_n, sigma_n) plus optional segments.

    sigma_n is the absolute time of crossing n (sigma_0 > 0 when the run
    started off the section), tau_n the sojourn driven by eta_n, and
    x_{n+1} = flow_{eta_n}^{tau_n}(x_n) within integration tolerance.
    valid is False on traces cut short by a failed crossing search.
    """

    x: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    casimir: np.ndarray
    tangent: np.ndarray
    x_end: np.ndarray
    law: NoiseLaw
    seed: int
    section: SectionSpec
    valid: bool = True
    segments: list[FlowSegment] | None = None
    approach: FlowSegment | None = None

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def sigma0(self) -> float:
        return float(self.sigma[0])

    def x_next(self, n: int) -> np.ndarray:
        return self.x[n + 1] if n + 1 < len(self.x) else self.x_end

    def continuity_defect(self) -> float:
        """Max mismatch between stored x_{n+1} and segment endpoints."""
        if not self.segments:
            return 0.0
        worst = 0.0
        for n, seg in enumerate(self.segments):
            worst = max(worst, float(np.max(np.abs(seg.y[-1] - self.x_next(n)))))
            worst = max(worst, float(np.max(np.abs(seg.y[0] - self.x[n]))))
        return worst

    def write_jsonl(self, path) -> None:
        """One record per event: {n, t_abs, tau, eta, y, casimir}."""
        with Path(path).open("w") as fh:
            for n in range(len(self)):
                rec = {"n": n, "t_abs": self.sigma[n], "tau": self.tau[n],
                       "eta": self.eta[n],
                       "y": [float(v) for v in self.x[n]],
                       "casimir": self.casimir[n]}
                fh.write(json.dumps(rec) + "\n")

    def write_csv(self, path) -> None:
        """Summary rows (n, tau, casimir)."""
        with Path(path).open("w") as fh:
            fh.write("n,tau,casimir\n")
            for n in range(len(self)):
                fh.write("%d,%.17g,%.17g\n" % (n, self.tau[n], self.casimir[n]))


def sample_chain(law: NoiseLaw, section: SectionSpec, x0, n: int, seed: int,
                 keep_segments: bool = False,
                 t_stop: float | None = None) -> MarkovRenewalTrace:
    """Simulate n steps of the embedded Markov chain on the section.

    The amplitude stream omega = (eta_0, eta_1, ...) is seeded and lazy.
    When x0 (SectionEvent or state) lies on M, sojourn k is driven by
    eta_k. Otherwise eta_0 drives the approach to the first crossing and
    the chain continues on the shifted stream, so every crossing is
    followed by exactly one fresh draw. A failed crossing search re-raises
    HorizonExceeded with the partial trace (valid=False) attached.

    t_stop caps the run in time instead of steps: the chain stops after
    the first transition whose crossing time reaches t_stop, or after n
    steps, whichever comes first.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    y0 = as_state(x0.y if isinstance(x0, SectionEvent) else x0)
    stream = NoiseSequence(law, seed)
    approach = None
    sigma0 = 0.0
    x_cur = y0
    if not on_section(section, y0, atol=1e-6):
        eta0 = stream.value(0)
        ev, approach = _search(section.forced(eta0), section, y0,
                               want_segment=keep_segments, guard_first=False)
        sigma0 = ev.t
        x_cur = ev.y
        stream = stream.shifted(1)

    xs = np.empty((n, 3))
    etas = np.empty(n)
    taus = np.empty(n)
    cas = np.empty(n)
    tang = np.zeros(n, dtype=bool)
    segments: list[FlowSegment] | None = [] if keep_segments else None

    def _trace(k: int, x_end, ok: bool) -> MarkovRenewalTrace:
        sigma = sigma0 + np.concatenate([[0.0], np.cumsum(taus[:k - 1])]) \
            if k else np.empty(0)
        return MarkovRenewalTrace(
            x=xs[:k].copy(), eta=etas[:k].copy(), tau=taus[:k].copy(),
            sigma=sigma, casimir=cas[:k].copy(), tangent=tang[:k].copy(),
            x_end=np.asarray(x_end, dtype=float), law=law, seed=int(seed),
            section=section, valid=ok, segments=segments, approach=approach)

    t_acc = sigma0
    for k in range(n):
        eta_k = stream.value(k)
        xs[k] = x_cur
        etas[k] = eta_k
        cas[k] = casimir(x_cur)
        try:
            ev, seg = _search(section.forced(eta_k), section, x_cur,
                              want_segment=keep_segments, guard_first=True)
        except HorizonExceeded as exc:
            exc.partial = _trace(k, x_cur, ok=False)
            raise
        taus[k] = ev.t
        tang[k] = ev.tangent
        if keep_segments:
            segments.append(seg)
        x_cur = ev.y
        t_acc += ev.t
        if t_stop is not None and t_acc >= t_stop:
            return _trace(k + 1, x_cur, ok=True)
    return _trace(n, x_cur, ok=True)


def settle_on_attractor(fld: FieldSpec, t_settle: float = 30.0,
                        tol: float = 1e-9) -> np.ndarray:
    """A reproducible point on the attractor (fixed start, transient cut)."""
    if fld.frame is not Frame.Y:
        raise DomainError("settle_on_attractor expects a Y-frame field")
    y0 = np.array([1.0, 1.0, 1.0 - fld.shift])
    sol = solve_ivp(lambda t, y: fld.velocity(y), (0.0, t_settle), y0,
                    method="DOP853", rtol=tol, atol=tol)
    if not sol.success:
        raise IntegrationError(f"settle_on_attractor: {sol.message}")
    return sol.y[:, -1]


def calibrate_eps_box(fld: FieldSpec, n_events: int = 2000,
                      coverage: float = 0.99, tol: float = 1e-9,
                      t_settle: float = 30.0) -> float:
    """Smallest box half-width capturing >= coverage of attractor crossings.

    Runs the unforced flow, collects surface crossings without a box
    restriction, and returns the coverage quantile of the per-event
    requirement max(|y1|, |y2|, y3 + gamma + zeta).
    """
    if not (0.0 < coverage <= 1.0):
        raise DomainError("coverage must be in (0, 1]")
    base = fld.with_eta(0.0)
    y = settle_on_attractor(base, t_settle=t_settle, tol=tol)
    ev = _surface_event(base)
    ev.terminal = False
    reqs: list[float] = []
    while len(reqs) < n_events:
        sol = solve_ivp(lambda t, s: base.velocity(s), (0.0, 100.0), y,
                        method="DOP853", rtol=tol, atol=tol, events=[ev])
        if not sol.success:
            raise IntegrationError(f"calibrate_eps_box: {sol.message}")
        for y_ev in sol.y_events[0]:
            reqs.append(max(abs(y_ev[0]), abs(y_ev[1]), y_ev[2] + base.shift))
        y = sol.y[:, -1]
    arr = np.sort(np.asarray(reqs[:n_events]))
    idx = min(len(arr) - 1, int(math.ceil(coverage * len(arr))) - 1)
    return float(arr[idx])
