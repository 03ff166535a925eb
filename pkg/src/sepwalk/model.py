"""Lattice, configurations, jump rates and the measures of the model.

The environment lives on the discrete circle with n sites, indexed internally
by integers 0..n-1; the continuous coordinate of site i is i/n.  A walker jump
rate is a local function of the environment in a finite window around the
walker, stored as an explicit truth table so that mean-field velocities can be
extracted as exact polynomials and the table can be serialized.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .profiles import DensityProfile
from .rng import RngStream

Number = float | Fraction


@dataclass(frozen=True)
class TorusLattice:
    """Discrete circle with n sites at coordinates {0, 1/n, ..., (n-1)/n}."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("lattice needs at least 2 sites")

    def site_of(self, lifted: int) -> int:
        """Canonical covering: integer (winding included) -> site index."""
        return lifted % self.n

    def coordinate(self, site: int) -> float:
        return (site % self.n) / self.n

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n)


class LocalRate:
    """Walker jump rates (c+, c-) as a truth table over a finite window.

    `support` is a tuple of integer offsets relative to the walker.  Entry
    `table[idx]` holds the pair for the restricted configuration whose bit i
    (value of the site at offset support[i]) is (idx >> i) & 1.  Evaluation at
    (eta, x) reads the window of the shifted configuration, i.e. the cocycle
    c_pm(eta; x) = c(tau_x eta, pm).
    """

    def __init__(self, support: Sequence[int],
                 table: Sequence[tuple[Number, Number]]):
        self.support = tuple(int(s) for s in support)
        if len(set(self.support)) != len(self.support):
            raise ValueError("support offsets must be distinct")
        if len(table) != 1 << len(self.support):
            raise ValueError("table must have one row per restricted configuration")
        self.exact_table: list[tuple[Fraction, Fraction]] | None = None
        if all(isinstance(cp, (int, Fraction)) and isinstance(cm, (int, Fraction))
               for cp, cm in table):
            self.exact_table = [(Fraction(cp), Fraction(cm)) for cp, cm in table]
        self.cplus = np.array([float(cp) for cp, _ in table])
        self.cminus = np.array([float(cm) for _, cm in table])
        if np.any(self.cplus < 0) or np.any(self.cminus < 0):
            raise ValueError("rates must be non-negative")
        if not np.all(np.isfinite(self.cplus)) or not np.all(np.isfinite(self.cminus)):
            raise ValueError("rates must be finite")
        self.normalized = bool(np.allclose(self.cplus + self.cminus, 1.0))

    # -- canned examples -----------------------------------------------------

    @staticmethod
    def intro() -> "LocalRate":
        """Rates of the worked example: an occupied site pushes the walker
        right, c+ = (1 + eta(0))/3 and c- = (2 - eta(0))/3."""
        return LocalRate((0,), [(Fraction(1, 3), Fraction(2, 3)),
                                (Fraction(2, 3), Fraction(1, 3))])

    @staticmethod
    def archetype(alpha: Number, beta: Number) -> "LocalRate":
        """c+ = alpha + (beta-alpha) eta(0), c- = beta + (alpha-beta) eta(0)."""
        return LocalRate((0,), [(alpha, beta), (beta, alpha)])

    @staticmethod
    def constant(cplus: Number, cminus: Number) -> "LocalRate":
        return LocalRate((), [(cplus, cminus)])

    # -- evaluation ----------------------------------------------------------

    def window_index(self, occupancy: np.ndarray, x: int) -> int:
        n = occupancy.shape[0]
        idx = 0
        for i, off in enumerate(self.support):
            idx |= int(occupancy[(x + off) % n]) << i
        return idx

    def max_rates(self) -> tuple[float, float]:
        if self.cplus.size == 0:
            return 0.0, 0.0
        return float(self.cplus.max()), float(self.cminus.max())

    # -- mean-field velocity -------------------------------------------------

    def velocity_coefficients(self, exact: bool = False):
        """Polynomial coefficients of v+(rho) and v-(rho), ascending order.

        Obtained by enumerating the 2^|support| window configurations with
        Bernoulli(rho) weights; each window contributes prod rho^bit (1-rho)^(1-bit),
        a polynomial in rho of degree |support|.
        """
        k = len(self.support)
        if exact:
            if self.exact_table is None:
                raise ValueError("rate table was not built from exact rationals")
            zero = Fraction(0)
            cp = [zero] * (k + 1)
            cm = [zero] * (k + 1)
        else:
            cp = np.zeros(k + 1)
            cm = np.zeros(k + 1)
        for idx in range(1 << k):
            # expand prod_i (rho if bit else 1-rho) into coefficients of rho^j
            poly = [Fraction(1)] if exact else np.array([1.0])
            for i in range(k):
                bit = (idx >> i) & 1
                if exact:
                    nxt = [Fraction(0)] * (len(poly) + 1)
                    for j, c in enumerate(poly):
                        if bit:
                            nxt[j + 1] += c
                        else:
                            nxt[j] += c
                            nxt[j + 1] -= c
                    poly = nxt
                else:
                    factor = np.array([0.0, 1.0]) if bit else np.array([1.0, -1.0])
                    poly = np.convolve(poly, factor)
            if exact:
                wp, wm = self.exact_table[idx]
                for j, c in enumerate(poly):
                    cp[j] += wp * c
                    cm[j] += wm * c
            else:
                cp[: len(poly)] += self.cplus[idx] * poly
                cm[: len(poly)] += self.cminus[idx] * poly
        return cp, cm

    def velocity_evaluators(self) -> tuple[Callable, Callable, Callable]:
        """Vectorized (v+, v-, v) as functions of rho."""
        cp, cm = self.velocity_coefficients()
        pp = np.polynomial.Polynomial(cp)
        pm = np.polynomial.Polynomial(cm)
        return pp, pm, (lambda rho: pp(rho) - pm(rho))

    # -- serialization ---------------------------------------------------------

    def to_text(self) -> str:
        """Text block: one `support:` line, then one line per restricted
        configuration `bits c+ c-` (bit i of `bits` is the site at
        support[i], leftmost character = offset support[0])."""
        lines = ["support: " + " ".join(str(s) for s in self.support)]
        for idx in range(1 << len(self.support)):
            bits = "".join(str((idx >> i) & 1) for i in range(len(self.support)))
            bits = bits or "-"
            if self.exact_table is not None:
                cp, cm = self.exact_table[idx]
                lines.append(f"{bits} {cp} {cm}")
            else:
                lines.append(f"{bits} {float(self.cplus[idx])!r} "
                             f"{float(self.cminus[idx])!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "LocalRate":
        lines = [ln for ln in text.strip().splitlines()
                 if ln.strip() and not ln.strip().startswith("#")]
        head = lines[0]
        if not head.startswith("support:"):
            raise ValueError("rate table text must start with a support: line")
        support = tuple(int(tok) for tok in head.split(":", 1)[1].split())
        rows: list[tuple[Number, Number] | None] = [None] * (1 << len(support))

        def parse_number(tok: str) -> Number:
            return Fraction(tok) if "/" in tok or "." not in tok else float(tok)

        for ln in lines[1:]:
            bits_s, cp_s, cm_s = ln.split()
            idx = 0
            if bits_s != "-":
                if len(bits_s) != len(support):
                    raise ValueError("bits width must match support size")
                for i, ch in enumerate(bits_s):
                    idx |= (ch == "1") << i
            rows[idx] = (parse_number(cp_s), parse_number(cm_s))
        if any(r is None for r in rows):
            raise ValueError("rate table text is missing configurations")
        return LocalRate(support, rows)  # type: ignore[arg-type]


def evaluate_local_rate(c: LocalRate, occupancy: np.ndarray, x: int) -> tuple[float, float]:
    """(c+(eta; x), c-(eta; x)) by table lookup with periodic wrap."""
    idx = c.window_index(occupancy, x)
    return float(c.cplus[idx]), float(c.cminus[idx])


def mean_field_velocity(c: LocalRate, rho: Number, exact: bool = False):
    """(v+, v-, v) at density rho.

    The annealed rates under the Bernoulli(rho) product measure; an exact
    polynomial in rho.  With exact=True the arithmetic is carried out in
    rationals (requires a rational table and rho).
    """
    if exact:
        rho_f = Fraction(rho)
        if not 0 <= rho_f <= 1:
            raise ValueError("density must lie in [0, 1]")
        cp, cm = c.velocity_coefficients(exact=True)
        vp = sum(coef * rho_f ** j for j, coef in enumerate(cp))
        vm = sum(coef * rho_f ** j for j, coef in enumerate(cm))
        return vp, vm, vp - vm
    if not 0 <= rho <= 1:
        raise ValueError("density must lie in [0, 1]")
    cp, cm = c.velocity_coefficients()
    vp = float(np.polynomial.polynomial.polyval(float(rho), cp))
    vm = float(np.polynomial.polynomial.polyval(float(rho), cm))
    return vp, vm, vp - vm


def grand_canonical_average(f: Callable[[np.ndarray], float],
                            support: Sequence[int], rho: float) -> float:
    """E_{nu_rho}[f] for a local f with the given support window."""
    support = tuple(support)
    k = len(support)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=k):
        w = 1.0
        for b in bits:
            w *= rho if b else (1.0 - rho)
        if w == 0.0:
            continue
        window = np.zeros(max(support) + 1 if support else 1, dtype=np.uint8)
        for off, b in zip(support, bits):
            window[off] = b
        total += w * float(f(window))
    return total


def canonical_average(f: Callable[[np.ndarray], Number], k: int, ell: int,
                      exact: bool = False):
    """Average of f under the uniform measure on {eta: sum eta = k} in a box
    of ell sites, by exact enumeration.  f receives a 0/1 array of length ell
    (index i = site i+1 of the box, so f = "xi(1)" reads index 0).
    """
    if ell > 24:
        raise ValueError("enumeration budget is ell <= 24")
    if not 0 <= k <= ell:
        raise ValueError("particle number out of range")
    window = np.zeros(ell, dtype=np.uint8)
    total: Number = Fraction(0) if exact else 0.0
    count = 0
    for ones in itertools.combinations(range(ell), k):
        window[:] = 0
        for i in ones:
            window[i] = 1
        val = f(window)
        total = total + (Fraction(val) if exact else float(val))
        count += 1
    if exact:
        return total / count
    return total / count


# -- sampling of initial measures ---------------------------------------------


def sample_product_profile(lattice: TorusLattice, profile: DensityProfile,
                           stream: RngStream) -> np.ndarray:
    """Independent Bernoulli occupancies with per-site success probability
    given by the cell averages of the profile (constant profile = nu_rho)."""
    probs = profile.cell_averages(lattice.n)
    u = stream.generator.random(lattice.n)
    return (u < probs).astype(np.uint8)


def sample_canonical(lattice: TorusLattice, k: int, stream: RngStream) -> np.ndarray:
    """Uniform configuration with exactly k particles on n sites."""
    n = lattice.n
    if not 0 <= k <= n:
        raise ValueError("particle number out of range")
    occ = np.zeros(n, dtype=np.uint8)
    occ[:k] = 1
    return occ[stream.generator.permutation(n)]


def tilted_site_probabilities(lattice: TorusLattice, u0: DensityProfile,
                              v0: DensityProfile) -> tuple[np.ndarray, np.ndarray]:
    """(rho_x, v_x): reference cell averages and tilted per-site probabilities.

    v_x = rho_x e^{f_x} / (1 + rho_x (e^{f_x} - 1)) where f_x is the tent
    average of log[v0 (1-u0) / (u0 (1-v0))].
    """
    n = lattice.n
    for p in (u0, v0):
        if p.values.min() <= 0.0 or p.values.max() >= 1.0:
            raise ValueError("tilted initial sampling needs interior profiles")
    rho = u0.cell_averages(n)
    from .profiles import tent_average

    def logit_ratio(y: np.ndarray) -> np.ndarray:
        a, b = v0(y), u0(y)
        return np.log(a * (1 - b) / (b * (1 - a)))

    fx = tent_average(logit_ratio, n)
    ef = np.exp(fx)
    vx = rho * ef / (1 + rho * (ef - 1))
    return rho, vx


def sample_tilted_initial(lattice: TorusLattice, u0: DensityProfile,
                          v0: DensityProfile, stream: RngStream
                          ) -> tuple[np.ndarray, float]:
    """Sample the tilted product measure and return (configuration, log_rn)
    where log_rn is the exact log Radon-Nikodym density of the tilted measure
    against the reference local-equilibrium measure, at the sampled state."""
    rho, vx = tilted_site_probabilities(lattice, u0, v0)
    u = stream.generator.random(lattice.n)
    occ = (u < vx).astype(np.uint8)
    log_rn = float(np.sum(np.where(occ == 1, np.log(vx / rho),
                                   np.log((1 - vx) / (1 - rho)))))
    return occ, log_rn
