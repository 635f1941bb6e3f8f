"""Generating families and the four convolution hemigroups they share.

A generating family stores a time grid, a drift value per node, and a
fixed set of atom locations whose weights grow (nondecreasing,
piecewise linear in time).  In reduced form the pair ``(m_t, kappa_t)``
parametrizes simultaneously

* classical increments through the reduced characteristic-function
  exponent ``i m xi + int (e^{i xi x} - 1 - i xi x)/x^2 kappa(dx)``,
* boolean increments through ``K(z) = m + G_kappa(z)``,
* free increments through ``phi(z) = m + G_kappa(z)``,
* monotone increments through the Loewner solver with field
  ``-mdot - G[kappadot](z)``,

so building all four from one family realizes the bijection between the
hemigroups, and the infinitesimal generator of moments is the same for
every kind.  The full form ``(gamma_t, eta_t)`` uses the
``(1+xz)/(z-x)`` kernel instead and requires no second moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convolutions import ConvKind
from .errors import AmbiguousSlope, FixedPointStall, WindowTooSmall
from .loewner import DrivingSpec, LoewnerChain, Segment, reverse_flow
from .measures import Atom, GridDensity, Measure, canonicalize, dirac, levy_distance
from .transforms import PickFunction, _G, p2_analyze, stieltjes_invert

__all__ = [
    "KappaAtom",
    "GeneratingFamily",
    "CHHandle",
    "family_convert",
    "ch_transform_eval",
    "ch_measure",
    "moment_generator",
    "free_subordination_eval",
    "subordination_kappa_check",
    "family_luw_distance",
    "family_to_json",
    "family_from_json",
]


@dataclass(frozen=True)
class KappaAtom:
    """Fixed location with one nonnegative, nondecreasing weight per grid node."""

    x: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "weights", w)
        if w[0] != 0.0:
            raise ValueError("atom weights must start at 0")
        if np.any(np.diff(w) < -1e-15):
            raise ValueError("atom weights must be nondecreasing in time")
        if np.any(w < 0):
            raise ValueError("atom weights must be nonnegative")


@dataclass(frozen=True)
class GeneratingFamily:
    """Time-indexed pair ``(m_t, kappa_t)`` (reduced) or ``(gamma_t, eta_t)`` (full).

    Both the drift and the atom weights interpolate piecewise linearly
    between grid nodes; ``m_0 = 0`` and ``kappa_0 = 0``.
    """

    grid: np.ndarray
    m: np.ndarray
    atoms: tuple[KappaAtom, ...]
    form: str = "reduced"

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.grid, dtype=float))
        mm = np.ascontiguousarray(np.asarray(self.m, dtype=float))
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "m", mm)
        if g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("time grid must be strictly increasing from 0")
        if mm.shape != g.shape:
            raise ValueError("drift values must match the time grid")
        if mm[0] != 0.0:
            raise ValueError("m_0 must be 0")
        for a in self.atoms:
            if a.weights.shape != g.shape:
                raise ValueError("atom weights must match the time grid")
        if self.form not in ("reduced", "full"):
            raise ValueError("form must be 'reduced' or 'full'")

    @property
    def total_time(self) -> float:
        return float(self.grid[-1])

    def m_at(self, t: float) -> float:
        return float(np.interp(t, self.grid, self.m))

    def kappa_measure(self, s: float, t: float) -> Measure:
        """Increment ``kappa_t - kappa_s`` as a measure (may have mass 0)."""
        atoms = []
        for a in self.atoms:
            dw = float(np.interp(t, self.grid, a.weights) - np.interp(s, self.grid, a.weights))
            if dw > 0:
                atoms.append(Atom(a.x, dw))
        return canonicalize(Measure(atoms=tuple(atoms)))

    def _segment_of(self, s: float) -> int:
        g = self.grid
        tol = 1e-12 * (1.0 + self.total_time)
        if np.any(np.abs(g - s) <= tol):
            raise AmbiguousSlope(f"t = {s} sits on a grid node; pick a side")
        if not (g[0] < s < g[-1]):
            raise ValueError(f"t = {s} outside the family range")
        return int(np.searchsorted(g, s) - 1)

    def slopes(self, s: float) -> tuple[float, np.ndarray, np.ndarray]:
        """``(mdot, atom locations, atom weight slopes)`` inside a segment."""
        i = self._segment_of(s)
        dt = self.grid[i + 1] - self.grid[i]
        mdot = (self.m[i + 1] - self.m[i]) / dt
        xs = np.array([a.x for a in self.atoms])
        ws = np.array([(a.weights[i + 1] - a.weights[i]) / dt for a in self.atoms])
        return float(mdot), xs, ws


def family_to_json(f: GeneratingFamily) -> dict:
    return {
        "grid": [float(t) for t in f.grid],
        "m": [float(v) for v in f.m],
        "atoms": [{"x": a.x, "weights": [float(w) for w in a.weights]} for a in f.atoms],
        "form": f.form,
    }


def family_from_json(data: dict) -> GeneratingFamily:
    atoms = tuple(
        KappaAtom(float(a["x"]), np.asarray(a["weights"], dtype=float)) for a in data["atoms"]
    )
    return GeneratingFamily(
        grid=np.asarray(data["grid"], dtype=float),
        m=np.asarray(data["m"], dtype=float),
        atoms=atoms,
        form=data.get("form", "reduced"),
    )


def family_convert(f: GeneratingFamily, to: str) -> GeneratingFamily:
    """Exact node-wise conversion between reduced and full forms.

    ``kappa(dx) = (1 + x^2) eta(dx)`` and ``m = gamma + int x eta(dx)``;
    with atomic data both directions are exact and the roundtrip is the
    identity.
    """
    if to == f.form:
        raise ValueError(f"family already in {to} form")
    xs = np.array([a.x for a in f.atoms])
    W = np.array([a.weights for a in f.atoms]) if f.atoms else np.zeros((0, f.grid.size))
    if to == "reduced":  # (gamma, eta) -> (m, kappa)
        newW = W * (1.0 + xs[:, None] ** 2)
        new_m = f.m + (xs[:, None] * W).sum(axis=0)
    else:  # (m, kappa) -> (gamma, eta)
        newW = W / (1.0 + xs[:, None] ** 2)
        new_m = f.m - (xs[:, None] * newW).sum(axis=0)
    atoms = tuple(KappaAtom(float(x), w) for x, w in zip(xs, newW))
    return GeneratingFamily(grid=f.grid, m=new_m, atoms=atoms, form=to)


@dataclass
class CHHandle:
    """One convolution hemigroup: a generating family plus a kind."""

    family: GeneratingFamily
    kind: ConvKind
    _chain: LoewnerChain | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind is ConvKind.MONOTONE and self.family.form != "reduced":
            raise ValueError("the monotone hemigroup needs the reduced form")

    @property
    def chain(self) -> LoewnerChain:
        if self._chain is None:
            self._chain = _chain_from_family(self.family)
        return self._chain


def _chain_from_family(f: GeneratingFamily) -> LoewnerChain:
    """Driving spec with ``kappadot = rate * kernel`` per family segment."""
    segs = []
    for i in range(f.grid.size - 1):
        t0, t1 = float(f.grid[i]), float(f.grid[i + 1])
        dt = t1 - t0
        mdot = (f.m[i + 1] - f.m[i]) / dt
        pairs = []
        for a in f.atoms:
            slope = (a.weights[i + 1] - a.weights[i]) / dt
            if slope > 0:
                pairs.append((a.x, slope))
        rate = sum(w for _, w in pairs)
        if rate > 0:
            kernel = canonicalize(Measure(atoms=tuple(Atom(x, w / rate) for x, w in pairs)))
        else:
            kernel = dirac(0.0)
        segs.append(Segment(t0, t1, rate, kernel, mdot))
    return LoewnerChain(DrivingSpec(tuple(segs)))


# ---------------------------------------------------------------------------
# Transform evaluation
# ---------------------------------------------------------------------------


def _classical_exponent_term(xi: np.ndarray, x: float, full: bool) -> np.ndarray:
    """Kernel of the characteristic exponent; the x = 0 value is -xi^2/2."""
    if x == 0.0:
        return -0.5 * xi**2
    if full:
        return (np.exp(1j * xi * x) - 1.0 - 1j * xi * x / (1.0 + x**2)) * (1.0 + x**2) / x**2
    return (np.exp(1j * xi * x) - 1.0 - 1j * xi * x) / x**2


def _classical_cf(f: GeneratingFamily, s: float, t: float, xi):
    xi = np.asarray(xi, dtype=float)
    full = f.form == "full"
    expo = 1j * (f.m_at(t) - f.m_at(s)) * xi
    for a in f.atoms:
        dw = float(np.interp(t, f.grid, a.weights) - np.interp(s, f.grid, a.weights))
        if dw > 0:
            expo = expo + dw * _classical_exponent_term(xi, a.x, full)
    return np.exp(expo)


def _lk_transform(f: GeneratingFamily, s: float, t: float, z: np.ndarray) -> np.ndarray:
    """Shared boolean/free linearizer: ``m + G_kappa`` or the full-form kernel."""
    z = np.asarray(z, dtype=complex)
    out = np.full(z.shape, f.m_at(t) - f.m_at(s), dtype=complex)
    full = f.form == "full"
    for a in f.atoms:
        dw = float(np.interp(t, f.grid, a.weights) - np.interp(s, f.grid, a.weights))
        if dw <= 0:
            continue
        if full:
            out += dw * (1.0 + a.x * z) / (z - a.x)
        else:
            out += dw / (z - a.x)
    return out


def _lk_transform_deriv(f: GeneratingFamily, s: float, t: float, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    full = f.form == "full"
    for a in f.atoms:
        dw = float(np.interp(t, f.grid, a.weights) - np.interp(s, f.grid, a.weights))
        if dw <= 0:
            continue
        if full:
            out += -dw * (1.0 + a.x**2) / (z - a.x) ** 2
        else:
            out += -dw / (z - a.x) ** 2
    return out


def _free_F(f: GeneratingFamily, s: float, t: float, z: np.ndarray) -> np.ndarray:
    """Reciprocal Cauchy transform of the free increment.

    Inverts ``H(w) = w + phi_{s,t}(w)`` by continuation downward in the
    imaginary part: the half-plane contraction ``w -> z - phi(w)`` (its
    fixed point is ``F(z)``) warms up a damped Newton solve at each
    height, which keeps boundary evaluations affordable.
    """
    z = np.asarray(z, dtype=complex)

    def residual(w, zc):
        return w + _lk_transform(f, s, t, w) - zc

    w = z + 1j
    offsets = np.concatenate([np.geomspace(1.0, 1e-4, 12), [0.0]])
    for off in offsets:
        zc = z + 1j * off
        tol = 1e-13 * (1.0 + np.abs(zc))
        for _ in range(8):
            w = zc - _lk_transform(f, s, t, w)
        res = residual(w, zc)
        for _ in range(60):
            act = np.abs(res) > tol
            if not np.any(act):
                break
            dH = 1.0 + _lk_transform_deriv(f, s, t, w)
            step = res / np.where(dH == 0, 1.0, dH)
            damp = np.ones(w.shape)
            trial = w - damp * step
            for _ in range(30):
                tres = residual(trial, zc)
                bad = act & ((np.imag(trial) <= 0) | (np.abs(tres) > np.abs(res)))
                if not np.any(bad):
                    break
                damp = np.where(bad, 0.5 * damp, damp)
                trial = w - damp * step
            tres = residual(trial, zc)
            ok = act & (np.imag(trial) > 0) & (np.abs(tres) <= np.abs(res))
            w = np.where(ok, trial, w)
            stuck = act & ~ok
            if np.any(stuck):
                w = np.where(stuck, zc - _lk_transform(f, s, t, w), w)
            res = residual(w, zc)
    tol = 1e-13 * (1.0 + np.abs(z))
    if np.any(np.abs(res) > 100 * tol):
        raise FixedPointStall(
            f"free transform inversion stalled (max residual {float(np.max(np.abs(res))):.3g})"
        )
    return w


def ch_transform_eval(h: CHHandle, s: float, t: float, arg):
    """Evaluate the defining transform of the increment from ``s`` to ``t``.

    Classical: characteristic function at real ``xi``.  Boolean:
    ``F(z) = z - K_{s,t}(z)``.  Free: ``F(z)`` via inversion of
    ``w + phi_{s,t}(w)``.  Monotone: ``f_{s,t}(z)`` from the Loewner
    solver.
    """
    _check_times(h.family, s, t)
    scalar = np.isscalar(arg) or np.asarray(arg).ndim == 0
    if h.kind is ConvKind.CLASSICAL:
        out = _classical_cf(h.family, s, t, np.real(np.atleast_1d(arg)))
    elif h.kind is ConvKind.BOOLEAN:
        z = np.atleast_1d(np.asarray(arg, dtype=complex))
        out = z - _lk_transform(h.family, s, t, z)
    elif h.kind is ConvKind.FREE:
        out = _free_F(h.family, s, t, np.atleast_1d(np.asarray(arg, dtype=complex)))
    elif h.kind is ConvKind.MONOTONE:
        out = np.atleast_1d(reverse_flow(h.chain, s, t, np.atleast_1d(np.asarray(arg, dtype=complex))))
    else:  # pragma: no cover
        raise ValueError(h.kind)
    return complex(out[0]) if scalar else out.reshape(np.shape(arg))


def _check_times(f: GeneratingFamily, s: float, t: float):
    if not (0.0 <= s <= t <= f.total_time + 1e-12):
        raise ValueError(f"need 0 <= s <= t <= {f.total_time}")


# ---------------------------------------------------------------------------
# Measure recovery
# ---------------------------------------------------------------------------


def _auto_window(f: GeneratingFamily, s: float, t: float) -> tuple[float, float]:
    xs = np.array([a.x for a in f.atoms]) if f.atoms else np.zeros(1)
    kap = f.kappa_measure(s, t) if f.form == "reduced" else family_convert(f, "reduced").kappa_measure(s, t)
    v = kap.mass
    c = f.m_at(t) - f.m_at(s)
    w = 4.0 * np.sqrt(max(v, 0.0)) + 3.0 * float(np.max(np.abs(xs)) if xs.size else 0.0) + abs(c) + 2.0
    return (c - w, c + w)


def _fourier_invert(cf, lo: float, hi: float, n_grid: int) -> Measure:
    """Mollified inversion of a characteristic function onto a grid.

    Gaussian mollifier with bandwidth tied to the grid spacing; the
    quadrature in frequency uses a step small enough that aliasing
    images land far outside the window.
    """
    xs = np.linspace(lo, hi, n_grid)
    dx = xs[1] - xs[0]
    span = hi - lo
    eps = 0.5 * dx
    xi_max = 8.6 / eps
    dxi = np.pi / (2.0 * span)
    n_xi = int(np.ceil(xi_max / dxi)) + 1
    xi = dxi * np.arange(n_xi)
    phi = np.asarray(cf(xi), dtype=complex) * np.exp(-0.5 * (eps * xi) ** 2)
    phi[0] *= 0.5  # trapezoid end weight at xi = 0
    dens = np.empty(n_grid)
    step = max(1, 4_000_000 // n_xi)
    for i in range(0, n_grid, step):
        block = np.exp(-1j * np.outer(xs[i : i + step], xi))
        dens[i : i + step] = (block @ phi).real * dxi / np.pi
    dens = np.maximum(dens, 0.0)
    out = Measure(density=GridDensity(lo, dx, dens))
    if abs(out.mass - 1.0) > 0.05:
        raise WindowTooSmall(f"characteristic-function inversion mass {out.mass:.4g}")
    return out


def _boolean_exact_measure(f: GeneratingFamily, s: float, t: float) -> Measure:
    """Atoms of the boolean increment from the rational ``F = z - K``."""
    from numpy.polynomial import polynomial as P

    full = f.form == "full"
    gamma = f.m_at(t) - f.m_at(s)
    pairs = []
    for a in f.atoms:
        dw = float(np.interp(t, f.grid, a.weights) - np.interp(s, f.grid, a.weights))
        if dw > 0:
            pairs.append((a.x, dw))
    if not pairs:
        return dirac(gamma)
    den = np.array([1.0])
    for x, _ in pairs:
        den = P.polymul(den, [-x, 1.0])
    num = P.polymul([-gamma, 1.0], den)
    for i, (x, w) in enumerate(pairs):
        others = np.array([1.0])
        for j, (xj, _) in enumerate(pairs):
            if j != i:
                others = P.polymul(others, [-xj, 1.0])
        term = w * (np.array([1.0, x]) if full else np.array([1.0]))
        num = P.polysub(num, P.polymul(term, others))
    dnum, dden = P.polyder(num), P.polyder(den)
    roots = P.polyroots(num)
    scale = 1.0 + max(abs(x) for x, _ in pairs) + abs(gamma)
    atoms = []
    for r in roots:
        if abs(r.imag) > 1e-10 * scale:
            continue
        x = float(r.real)
        # weight = residue of 1/F at the zero: den/d(num) with quotient rule
        fd = (P.polyval(x, dnum) * P.polyval(x, den) - P.polyval(x, num) * P.polyval(x, dden)) / P.polyval(x, den) ** 2
        if fd > 0:
            atoms.append((x, 1.0 / fd))
    out = canonicalize(Measure(atoms=tuple(Atom(float(x), float(w)) for x, w in atoms)))
    return out


def ch_measure(
    h: CHHandle,
    s: float,
    t: float,
    window: tuple[float, float] | None = None,
    n_grid: int = 2048,
    y_levels=None,
) -> Measure:
    """Increment distribution of the hemigroup between ``s`` and ``t``.

    Boolean increments of atomic families are extracted exactly from
    the rational transform (the limit the Stieltjes inversion would
    take); free and monotone increments invert their transforms on the
    window; classical increments invert the characteristic function
    with a Gaussian mollifier, or return the exact drift atom when
    ``kappa`` vanishes.
    """
    _check_times(h.family, s, t)
    f = h.family
    if window is None:
        window = _auto_window(f, s, t)
    span = window[1] - window[0]
    if y_levels is None:
        y_levels = span * np.array([2e-3, 1e-3, 5e-4])
    if h.kind is ConvKind.CLASSICAL:
        kap_mass = _kappa_mass(f, s, t)
        if kap_mass == 0.0:
            return dirac(f.m_at(t) - f.m_at(s))
        return _fourier_invert(lambda xi: _classical_cf(f, s, t, xi), window[0], window[1], n_grid)
    if h.kind is ConvKind.BOOLEAN:
        return _boolean_exact_measure(f, s, t)
    if h.kind is ConvKind.FREE:
        if _kappa_mass(f, s, t) == 0.0:
            return dirac(f.m_at(t) - f.m_at(s))

        def g(z):
            return 1.0 / _free_F(f, s, t, np.asarray(z, dtype=complex))

        return stieltjes_invert(g, window, n_grid=n_grid, y_levels=y_levels)
    if h.kind is ConvKind.MONOTONE:
        chain = h.chain

        def g(z):
            return 1.0 / reverse_flow(chain, s, t, np.asarray(z, dtype=complex))

        return stieltjes_invert(g, window, n_grid=n_grid, y_levels=y_levels)
    raise ValueError(h.kind)  # pragma: no cover


def _kappa_mass(f: GeneratingFamily, s: float, t: float) -> float:
    """Total kappa mass of the increment (the variance), any form."""
    scale = (lambda x: 1.0 + x**2) if f.form == "full" else (lambda x: 1.0)
    return sum(
        scale(a.x) * float(np.interp(t, f.grid, a.weights) - np.interp(s, f.grid, a.weights))
        for a in f.atoms
    )


# ---------------------------------------------------------------------------
# Moment generators, subordination, convergence metric
# ---------------------------------------------------------------------------


def moment_generator(f: GeneratingFamily, s: float, n: int) -> float:
    """Infinitesimal generator of the n-th moment at time ``s``.

    Equals ``mdot_s`` for ``n = 1`` and the ``(n-2)``-nd moment of
    ``kappadot_s`` for ``n >= 2`` (shared by all four kinds).  ``s``
    must lie inside a grid segment, where the slopes are unambiguous.
    """
    if f.form != "reduced":
        raise ValueError("moment generators are read off the reduced form")
    if n < 1:
        raise ValueError("n must be >= 1")
    mdot, xs, ws = f.slopes(s)
    if n == 1:
        return float(mdot)
    if xs.size == 0:
        return 0.0
    return float(np.sum(ws * xs ** (n - 2)))


def free_subordination_eval(f: GeneratingFamily, s: float, t: float, z):
    """Transform ``F`` of the monotone increment subordinating the free chain.

    ``F_{free,0,t} = F_{free,0,s} o F_out`` with
    ``F_out(z) = F_{free,0,s}^{-1}(F_{free,0,t}(z))``; the outer inverse
    is the explicit map ``w -> w + phi_{0,s}(w)``, so only one fixed
    point per ``z`` is solved.
    """
    if f.form != "reduced":
        raise ValueError("subordination needs the reduced form")
    _check_times(f, s, t)
    scalar = np.isscalar(z) or np.asarray(z).ndim == 0
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    w = _free_F(f, 0.0, t, zz)
    out = w + _lk_transform(f, 0.0, s, w)
    return complex(out[0]) if scalar else out.reshape(np.shape(z))


def _bump(x: np.ndarray, center: float, halfwidth: float) -> np.ndarray:
    u = (x - center) / halfwidth
    out = np.zeros_like(x)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def _pair_measure(m: Measure, fn) -> float:
    total = 0.0
    if m.atoms:
        xs, ws = m.atom_arrays()
        total += float(np.sum(ws * fn(xs)))
    if m.density is not None:
        total += float(np.trapz(fn(m.density.grid) * m.density.values, dx=m.density.dx))
    return total


def subordination_kappa_check(
    f: GeneratingFamily,
    t: float,
    test_fns=None,
    n_time: int = 16,
    n_grid: int = 1024,
    n_gauss: int = 6,
) -> float:
    """Cross-check of the generating measure of the subordination chain.

    The candidate from the chain side sums the characteristic measures
    of subordination increments over a partition of ``[0, t]`` (each via
    residue analysis and Stieltjes inversion); the candidate from the
    generator side integrates ``delta_x``-tilted free laws against the
    kappa rates by Gauss quadrature in time.  Returns the maximum
    discrepancy over the test functions.
    """
    if f.form != "reduced":
        raise ValueError("the check needs the reduced form")
    _check_times(f, 0.0, t)
    if t == 0.0:
        return 0.0
    lo, hi = _auto_window(f, 0.0, t)
    span = hi - lo
    if test_fns is None:
        centers = np.linspace(lo + 0.15 * span, hi - 0.15 * span, 5)
        test_fns = [lambda x, c=c: _bump(x, c, 0.3 * span) for c in centers]

    # chain side: sum of characteristic measures of REF increments
    lhs = np.zeros(len(test_fns))
    ss = np.linspace(0.0, t, n_time + 1)
    for k in range(n_time):
        s0, s1 = ss[k], ss[k + 1]
        dm = f.m_at(s1) - f.m_at(s0)

        def fn(z, _s0=s0, _s1=s1, _dm=dm):
            z = np.asarray(z, dtype=complex)
            w = _free_F(f, 0.0, _s1, z)
            return z - _dm - _G(f.kappa_measure(_s0, _s1), w)

        def defect_fn(z, _s0=s0, _s1=s1, _dm=dm):
            z = np.asarray(z, dtype=complex)
            w = _free_F(f, 0.0, _s1, z)
            return -_dm - _G(f.kappa_measure(_s0, _s1), w)

        pf = PickFunction.explicit(fn, defect_fn=defect_fn, label=f"subord[{s0},{s1}]")
        rho = p2_analyze(pf, n_grid=n_grid).rho_f
        for i, tf in enumerate(test_fns):
            lhs[i] += _pair_measure(rho, tf)

    # generator side: integrate tilted free laws against kappa rates
    rhs = np.zeros(len(test_fns))
    gx, gw = np.polynomial.legendre.leggauss(n_gauss)
    for i in range(f.grid.size - 1):
        t0, t1 = float(f.grid[i]), float(min(f.grid[i + 1], t))
        if t1 <= t0 or t0 >= t:
            continue
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        for xg, wg in zip(gx, gw):
            u = mid + half * xg
            try:
                _, xs, slopes = f.slopes(u)
            except AmbiguousSlope:  # pragma: no cover - gauss nodes avoid grid nodes
                continue
            for x, slope in zip(xs, slopes):
                if slope <= 0:
                    continue

                def g_tilt(z, _u=u, _x=x):
                    z = np.asarray(z, dtype=complex)
                    return 1.0 / (_free_F(f, 0.0, _u, z) - _x)

                tilted = stieltjes_invert(
                    g_tilt,
                    (lo, hi),
                    n_grid=n_grid,
                    y_levels=span * np.array([2e-3, 1e-3, 5e-4]),
                )
                for j, tf in enumerate(test_fns):
                    rhs[j] += half * wg * slope * _pair_measure(tilted, tf)
    return float(np.max(np.abs(lhs - rhs)))


def family_luw_distance(
    a: GeneratingFamily,
    b: GeneratingFamily,
    kind: ConvKind,
    t_grid,
    z_or_xi_grid=None,
    n_grid: int = 1024,
) -> float:
    """Sup over sampled ``(s, t)`` of Levy distance plus variance gap.

    Specialization of the hemigroup metric: for each sampled pair the
    increment laws are compared in Levy distance and the total kappa
    masses (the variances) in absolute value.  ``z_or_xi_grid``, when
    given, pins the measure-recovery window to its extent.
    """
    ts = np.asarray(t_grid, dtype=float)
    window = None
    if z_or_xi_grid is not None:
        pts = np.real(np.asarray(z_or_xi_grid))
        window = (float(pts.min()), float(pts.max()))
    ha, hb = CHHandle(a, kind), CHHandle(b, kind)
    worst = 0.0
    for i in range(ts.size):
        for j in range(i + 1, ts.size):
            s, t = float(ts[i]), float(ts[j])
            ma = ch_measure(ha, s, t, window=window, n_grid=n_grid)
            mb = ch_measure(hb, s, t, window=window, n_grid=n_grid)
            gap = levy_distance(ma, mb) + abs(_kappa_mass(a, s, t) - _kappa_mass(b, s, t))
            worst = max(worst, gap)
    return worst
