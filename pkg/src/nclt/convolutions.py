"""The four convolutions at measure level, plus cumulant oracles.

Discrete monotone and boolean convolutions go through exact
rational-function root/residue extraction (they preserve finite
support, and exactness anchors the downstream tests).  Free convolution
is transform-first: the subordination fixed point defines the
reciprocal Cauchy transform of the output and the measure is recovered
by Stieltjes inversion.

Cumulants are brute-force oracles over the partition lattices (all set
partitions / non-crossing / interval), capped at order 12.
"""

from __future__ import annotations

import enum
from typing import Iterator

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import FixedPointStall, MassLeak, NotProbability, TooLarge
from .measures import Measure, canonicalize, from_atoms, moment
from .transforms import PickFunction, stieltjes_invert

__all__ = [
    "ConvKind",
    "monotone_convolve",
    "boolean_convolve",
    "free_convolve",
    "cumulants",
]


class ConvKind(enum.Enum):
    CLASSICAL = "classical"
    FREE = "free"
    BOOLEAN = "boolean"
    MONOTONE = "monotone"


def _require_probability(*ms: Measure):
    # recovered measures carry quadrature-level mass error; allow it
    for m in ms:
        if abs(m.mass - 1.0) > 1e-4:
            raise NotProbability(f"operand has mass {m.mass}")


def _rational_G(m: Measure) -> tuple[np.ndarray, np.ndarray]:
    """``G_m = N/D`` with ``D`` monic for a purely atomic measure."""
    xs, ws = m.atom_arrays()
    den = np.array([1.0])
    for x in xs:
        den = P.polymul(den, [-x, 1.0])
    num = np.zeros(max(len(xs), 1))
    if len(xs) == 0:
        return np.array([0.0]), den
    for i, (x, w) in enumerate(zip(xs, ws)):
        others = np.array([1.0])
        for j, xj in enumerate(xs):
            if j != i:
                others = P.polymul(others, [-xj, 1.0])
        num = P.polyadd(num, w * others)
    return num, den


def _real_roots(coeffs: np.ndarray, scale: float, tol: float = 1e-10) -> np.ndarray:
    roots = P.polyroots(coeffs)
    keep = np.abs(roots.imag) <= tol * (1.0 + scale)
    return np.sort(roots[keep].real)


def _polish(num: np.ndarray, x: float, iters: int = 3) -> float:
    dnum = P.polyder(num)
    for _ in range(iters):
        fv = P.polyval(x, num)
        dv = P.polyval(x, dnum)
        if dv == 0:
            break
        x -= fv / dv
    return x


def monotone_convolve(a: Measure, b: Measure) -> Measure:
    """Monotone convolution, characterized by ``F_out = F_a o F_b``.

    For discrete operands ``G_out(z) = G_a(F_b(z))`` is rational: the
    output atoms are the real solutions ``x`` of ``F_b(x) = a_j`` over
    atoms ``a_j`` of ``a``, with weights ``a({a_j}) / F_b'(x)``.
    Non-discrete operands go through evaluator composition and
    Stieltjes inversion.
    """
    _require_probability(a, b)
    if not (a.is_discrete and b.is_discrete):
        Fa = PickFunction.from_measure_f(a)
        Fb = PickFunction.from_measure_f(b)
        comp = PickFunction.compose(Fa, Fb)

        def g_out(z):
            return 1.0 / comp._fn(np.asarray(z, dtype=complex))

        lo_a, hi_a = a.support_bounds()
        lo_b, hi_b = b.support_bounds()
        pad = 0.1 * (hi_a - lo_a + hi_b - lo_b) + 1.0
        window = (lo_a + lo_b - pad, hi_a + hi_b + pad)
        span = window[1] - window[0]
        return stieltjes_invert(g_out, window, n_grid=4096, y_levels=span * np.array([2e-4, 1e-4, 5e-5]))

    num_b, den_b = _rational_G(b)  # F_b = den_b / num_b
    xa, wa = a.atom_arrays()
    scale = max(1.0, *(abs(x) for x in xa), *(abs(x) for x in b.atom_arrays()[0]))
    d_den, d_num = P.polyder(den_b), P.polyder(num_b)
    atoms = []
    for aj, wj in zip(xa, wa):
        poly = P.polysub(den_b, aj * num_b)  # monic, degree = #atoms of b
        for x in _real_roots(poly, scale):
            x = _polish(poly, x)
            nv = P.polyval(x, num_b)
            fprime = (P.polyval(x, d_den) * nv - P.polyval(x, den_b) * P.polyval(x, d_num)) / nv**2
            if fprime <= 0:
                continue
            atoms.append((x, wj / fprime))
    out = from_atoms(atoms)
    if out.mass < 1.0 - 1e-6:
        raise MassLeak(f"monotone root extraction recovered mass {out.mass}")
    return out


def boolean_convolve(a: Measure, b: Measure) -> Measure:
    """Boolean convolution: ``F_out = z - K_a(z) - K_b(z)``.

    Discrete operands give a rational ``F_out`` whose real zeros carry
    the output atoms with weights ``1/F_out'``; otherwise the measure
    comes from Stieltjes inversion of ``1/F_out``.
    """
    _require_probability(a, b)
    if not (a.is_discrete and b.is_discrete):
        Fa = PickFunction.from_measure_f(a)
        Fb = PickFunction.from_measure_f(b)

        def g_out(z):
            z = np.asarray(z, dtype=complex)
            return 1.0 / (Fa._fn(z) + Fb._fn(z) - z)

        lo_a, hi_a = a.support_bounds()
        lo_b, hi_b = b.support_bounds()
        pad = 0.5 * (hi_a - lo_a + hi_b - lo_b) + 1.0
        window = (lo_a + lo_b - pad, hi_a + hi_b + pad)
        span = window[1] - window[0]
        return stieltjes_invert(g_out, window, n_grid=4096, y_levels=span * np.array([2e-4, 1e-4, 5e-5]))

    num_a, den_a = _rational_G(a)
    num_b, den_b = _rational_G(b)
    # F_out = D_a/N_a + D_b/N_b - z, zeros of the monic numerator below
    poly = P.polyadd(P.polymul(den_a, num_b), P.polymul(den_b, num_a))
    poly = P.polysub(poly, P.polymul([0.0, 1.0], P.polymul(num_a, num_b)))
    xs_all = np.concatenate([a.atom_arrays()[0], b.atom_arrays()[0]])
    scale = max(1.0, float(np.max(np.abs(xs_all))))
    dpoly = P.polyder(poly)
    denom = P.polymul(num_a, num_b)
    atoms = []
    for x in _real_roots(poly, scale):
        x = _polish(poly, x)
        # residue of G_out = N_a N_b / poly at a simple zero of poly
        w = P.polyval(x, denom) / P.polyval(x, dpoly)
        if w > 0:
            atoms.append((x, w))
    out = from_atoms(atoms)
    if out.mass < 1.0 - 1e-6:
        raise MassLeak(f"boolean root extraction recovered mass {out.mass}")
    return out


def free_convolve(
    a: Measure,
    b: Measure,
    window: tuple[float, float] | None = None,
    n_grid: int = 4096,
    y_levels=None,
) -> tuple[PickFunction, Measure]:
    """Free convolution by subordination.

    With ``h_j(w) = F_j(w) - w``, the subordination function
    ``omega_1(z)`` is the fixed point of ``w -> z + h_b(z + h_a(w))``
    (iterates stay in the upper half-plane and converge); then
    ``F_out(z) = F_a(omega_1(z))``.  Returns the transform and the
    measure recovered by Stieltjes inversion of ``1/F_out``.
    """
    _require_probability(a, b)
    Fa = PickFunction.from_measure_f(a)
    Fb = PickFunction.from_measure_f(b)

    def _residual(w, zc):
        return w - zc - Fb.defect(zc + Fa.defect(w))

    def _solve_at(zc, w):
        """Damped Newton for the fixed point at one height, warm-started."""
        tol = 1e-13 * (1.0 + np.abs(zc))
        for _ in range(10):  # contraction warm-up (maps C+ into Im >= Im z)
            w = zc + Fb.defect(zc + Fa.defect(w))
        res = _residual(w, zc)
        for _ in range(60):
            act = np.abs(res) > tol
            if not np.any(act):
                return w, res
            u = zc + Fa.defect(w)
            dphi = 1.0 - (Fb.derivative(u) - 1.0) * (Fa.derivative(w) - 1.0)
            step = res / np.where(dphi == 0, 1.0, dphi)
            damp = np.ones(w.shape)
            trial = w - damp * step
            for _ in range(30):
                tres = _residual(trial, zc)
                bad = act & ((np.imag(trial) <= 0) | (np.abs(tres) > np.abs(res)))
                if not np.any(bad):
                    break
                damp = np.where(bad, 0.5 * damp, damp)
                trial = w - damp * step
            tres = _residual(trial, zc)
            ok = act & (np.imag(trial) > 0) & (np.abs(tres) <= np.abs(res))
            w = np.where(ok, trial, w)
            stuck = act & ~ok
            if np.any(stuck):  # contraction step for entries Newton cannot move
                pic = zc + Fb.defect(zc + Fa.defect(w))
                w = np.where(stuck, pic, w)
            res = _residual(w, zc)
        return w, res

    def omega1(z):
        """Subordination fixed point by continuation downward in Im z."""
        z = np.asarray(z, dtype=complex)
        offsets = np.concatenate([np.geomspace(1.0, 1e-4, 12), [0.0]])
        w = z + 1j
        for off in offsets:
            zc = z + 1j * off
            w, res = _solve_at(zc, w)
        tol = 1e-13 * (1.0 + np.abs(z))
        if np.any(np.abs(res) > 100 * tol):
            raise FixedPointStall(
                f"subordination fixed point stalled (max residual {float(np.max(np.abs(res))):.3g}); "
                "raise Im z"
            )
        return w

    def f_out(z):
        return Fa._fn(omega1(z))

    def defect_out(z):
        z = np.asarray(z, dtype=complex)
        w = omega1(z)
        ha = Fa.defect(w)
        return ha + Fb.defect(z + ha)

    F_out = PickFunction.explicit(f_out, defect_fn=defect_out, label="F[a boxplus b]")

    if window is None:
        lo_a, hi_a = a.support_bounds()
        lo_b, hi_b = b.support_bounds()
        pad = 0.1 * (hi_a - lo_a + hi_b - lo_b) + 1.0
        window = (lo_a + lo_b - pad, hi_a + hi_b + pad)
    span = window[1] - window[0]
    if y_levels is None:
        y_levels = span * np.array([4e-4, 2e-4, 1e-4])

    def g_out(z):
        return 1.0 / f_out(np.asarray(z, dtype=complex))

    out = stieltjes_invert(g_out, window, n_grid=n_grid, y_levels=y_levels)
    return F_out, out


# ---------------------------------------------------------------------------
# Partition-lattice cumulant oracles
# ---------------------------------------------------------------------------


def _set_partitions(n: int) -> Iterator[list[tuple[int, ...]]]:
    blocks: list[list[int]] = []

    def rec(i: int):
        if i == n:
            yield [tuple(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1)
            b.pop()
        blocks.append([i])
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


def _is_noncrossing(blocks) -> bool:
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            merged = sorted((x, 0) for x in blocks[i]) + sorted((x, 1) for x in blocks[j])
            merged.sort()
            labels = [lab for _, lab in merged]
            switches = sum(1 for k in range(1, len(labels)) if labels[k] != labels[k - 1])
            if switches >= 3:
                return False
    return True


def _is_interval(blocks) -> bool:
    return all(b[-1] - b[0] == len(b) - 1 for b in blocks)


_FILTERS = {
    ConvKind.CLASSICAL: lambda blocks: True,
    ConvKind.FREE: _is_noncrossing,
    ConvKind.BOOLEAN: _is_interval,
}


def cumulants(kind: ConvKind, m: Measure, n_max: int) -> np.ndarray:
    """Cumulants of orders ``1..n_max`` by partition-lattice inversion.

    Classical cumulants sum over all set partitions, free over
    non-crossing ones, boolean over interval partitions; each order is
    solved triangularly from the moment-cumulant relation
    ``m_n = sum_pi prod_V kappa_{|V|}``.  Orders above 12 are refused
    (factorial blowup); this is a test oracle, not production code.
    """
    if kind not in _FILTERS:
        raise ValueError("cumulants are defined for classical, free, and boolean kinds")
    if n_max > 12:
        raise TooLarge("partition-lattice oracle capped at n = 12")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    moments = [moment(m, k) for k in range(n_max + 1)]
    keep = _FILTERS[kind]
    kappa = [0.0] * (n_max + 1)
    for n in range(1, n_max + 1):
        acc = 0.0
        for blocks in _set_partitions(n):
            if len(blocks) == 1:
                continue
            if not keep(blocks):
                continue
            prod = 1.0
            for b in blocks:
                prod *= kappa[len(b)]
                if prod == 0.0:
                    break
            acc += prod
        kappa[n] = moments[n] - acc
    return np.asarray(kappa[1:])
