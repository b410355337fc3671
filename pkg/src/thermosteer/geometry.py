"""Strip geometry of the control region: overlapping covering strips, the
reference strip, and the cutoff functions used throughout localization.

The control region is a horizontal strip omega = T x (a, b).  Margins
H1 < H2 are inset by a fixed fraction of the width; the torus is covered by K
overlapping strips of height l_K = 8 pi / (3 K) translated in steps of
3 l_K / 4, so consecutive strips overlap by l_K / 4 and the K translates tile
the circle exactly (K * 3 l_K / 4 = 2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    pass


def _ramp_coeffs(q: int) -> np.ndarray:
    """Polynomial coefficients of the normalized beta ramp I_s(q, q).

    R(s) = int_0^s t^(q-1)(1-t)^(q-1) dt / B(q, q); R(0)=0, R(1)=1,
    R(s)+R(1-s)=1, and derivatives up to order q-1 vanish at both ends.
    Returned as monomial coefficients for powers s^q .. s^(2q-1).
    """
    inv_beta = math.factorial(2 * q - 1) // (math.factorial(q - 1) ** 2)
    return np.array(
        [inv_beta * math.comb(q - 1, j) * (-1) ** j / (q + j) for j in range(q)]
    )


@dataclass(frozen=True)
class SmoothRamp:
    """C^(q-1) polynomial ramp on [0,1], exactly 0/1 outside."""

    q: int

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        sc = np.clip(s, 0.0, 1.0)
        coeffs = _ramp_coeffs(self.q)
        out = np.zeros_like(sc)
        for j, cj in enumerate(coeffs):
            out += cj * sc ** (self.q + j)
        return np.where(s <= 0.0, 0.0, np.where(s >= 1.0, 1.0, out))

    def derivative(self, s):
        s = np.asarray(s, dtype=np.float64)
        sc = np.clip(s, 0.0, 1.0)
        coeffs = _ramp_coeffs(self.q)
        out = np.zeros_like(sc)
        for j, cj in enumerate(coeffs):
            out += cj * (self.q + j) * sc ** (self.q + j - 1)
        return np.where((s <= 0.0) | (s >= 1.0), 0.0, out)


@dataclass(frozen=True)
class Partition:
    """Covering of the torus by K overlapping strips tied to omega = T x (a,b)."""

    a: float
    b: float
    H1: float
    H2: float
    K: int
    lK: float
    strips: tuple  # K intervals (lo, hi), strip i occupying (lo, hi) mod 2pi
    reference: tuple  # (H1 + lK, H1 + 2 lK)

    def strip_indices_at(self, x2: float) -> list:
        """Indices (1-based) of strips whose vertical extent contains x2 mod 2pi."""
        hits = []
        y = x2 % TWO_PI
        for i, (lo, hi) in enumerate(self.strips, start=1):
            if lo <= y < hi or lo <= y + TWO_PI < hi:
                hits.append(i)
        return hits


@dataclass(frozen=True)
class CutoffSet:
    """mu, chi = mu(x2 - H1 - lK), and the mean-one bump chi_tilde on (H1, H2)."""

    partition: Partition
    ramp: SmoothRamp
    bump_amplitude: float = field(init=False)

    def __post_init__(self):
        W = self.partition.H2 - self.partition.H1
        # chi_tilde = amp * s^4 (1-s)^4 integrates to one under the
        # normalized torus measure: amp = 630 * 2pi / W.
        object.__setattr__(self, "bump_amplitude", 630.0 * TWO_PI / W)

    # -- mu and chi ----------------------------------------------------------

    def mu(self, x):
        """Bump on (0, lK): ramp up on [0, lK/4], plateau, mirrored ramp down."""
        lK = self.partition.lK
        x = np.asarray(x, dtype=np.float64)
        up = self.ramp(4.0 * x / lK)
        down = self.ramp(4.0 * (lK - x) / lK)
        return np.where(x <= lK / 2.0, up, down) * ((x > 0) & (x < lK))

    def chi(self, x2):
        base = self.partition.H1 + self.partition.lK
        return self.mu(np.mod(np.asarray(x2, dtype=np.float64) - base, TWO_PI))

    def chi_field_values(self, n: int) -> np.ndarray:
        x2 = TWO_PI * np.arange(n) / n
        row = self.chi(x2)
        return np.tile(row[None, :], (n, 1))

    # -- chi_tilde -------------------------------------------------------------

    def _s(self, x2):
        p = self.partition
        return (np.mod(np.asarray(x2, dtype=np.float64) - p.H1, TWO_PI)) / (p.H2 - p.H1)

    def chi_tilde(self, x2):
        s = self._s(x2)
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, self.bump_amplitude * s**4 * (1.0 - s) ** 4, 0.0)

    def chi_tilde_prime(self, x2):
        p = self.partition
        s = self._s(x2)
        inside = (s > 0.0) & (s < 1.0)
        ds = self.bump_amplitude * (4.0 * s**3 * (1 - s) ** 4 - 4.0 * s**4 * (1 - s) ** 3)
        return np.where(inside, ds / (p.H2 - p.H1), 0.0)

    def chi_tilde_second(self, x2):
        p = self.partition
        s = self._s(x2)
        inside = (s > 0.0) & (s < 1.0)
        d2 = self.bump_amplitude * (
            12.0 * s**2 * (1 - s) ** 4
            - 32.0 * s**3 * (1 - s) ** 3
            + 12.0 * s**4 * (1 - s) ** 2
        )
        return np.where(inside, d2 / (p.H2 - p.H1) ** 2, 0.0)


def build_partition(a: float, b: float, margin_fraction: float = 0.125,
                    smoothstep_order: int = 7, max_K: int = 512):
    """Choose margins, the minimal admissible strip count K, and cutoffs.

    K is the smallest integer with 8 pi / (3 K) < (H2 - H1) / 3; the strips
    are translated copies of the reference strip with overlap lK / 4.
    """
    if not (0.0 < a < b <= TWO_PI):
        raise GeometryError(f"control strip bounds must satisfy 0 < a < b <= 2pi, got ({a}, {b})")
    H1 = a + margin_fraction * (b - a)
    H2 = b - margin_fraction * (b - a)
    K = math.floor(8.0 * np.pi / (H2 - H1)) + 1
    if K > max_K:
        raise GeometryError(
            f"strip width {b - a:.4g} requires K={K} > max_K={max_K}"
        )
    lK = 8.0 * np.pi / (3.0 * K)
    strips = tuple(
        (3.0 * (i - 1) * lK / 4.0, 3.0 * (i - 1) * lK / 4.0 + lK) for i in range(1, K + 1)
    )
    part = Partition(a=a, b=b, H1=H1, H2=H2, K=K, lK=lK, strips=strips,
                     reference=(H1 + lK, H1 + 2.0 * lK))
    if smoothstep_order % 2 == 0:
        raise GeometryError("smoothstep order must be odd (polynomial degree 2q-1)")
    q = (smoothstep_order + 1) // 2
    cutoffs = CutoffSet(partition=part, ramp=SmoothRamp(q))
    return part, cutoffs


def commensurate_strip(n: int, K: int, margin_fraction: float = 0.125,
                       anchor_cell: int = None) -> tuple:
    """Strip bounds (a, b) for which build_partition selects exactly K strips
    and every strip displacement is an integer number of grid cells.

    With K dividing n, the inter-strip step 2 pi / K is a grid multiple; the
    bounds are then placed so the reference offset H1 + lK lands on a grid
    node.  All vertical-flow compositions in the localization pipeline become
    exact cyclic rolls at resolution n, which keeps the transport identities
    at quadrature accuracy even though the cutoff ramps are only a few cells
    wide.
    """
    if n % K != 0:
        raise GeometryError(f"strip count {K} must divide the resolution {n}")
    lK = 8.0 * np.pi / (3.0 * K)
    # minimal-K rule picks K iff 8pi/(H2-H1) in [K-1, K); aim mid-range
    width = 8.0 * np.pi / (K - 0.5) / (1.0 - 2.0 * margin_fraction)
    cell = TWO_PI / n
    if anchor_cell is None:
        anchor_cell = int(np.floor((0.15 * TWO_PI + margin_fraction * width + lK) / cell)) + 1
    a = anchor_cell * cell - lK - margin_fraction * width
    if a <= 0:
        a += cell
    b = a + width
    if b > TWO_PI:
        raise GeometryError(f"commensurate strip does not fit: ({a}, {b})")
    return a, b


def verify_cutoffs(cutoffs: CutoffSet, partition: Partition,
                   samples: int = 10_000, quad_points: int = 200_001) -> dict:
    """Sampled checks of the partition identity, plateau, supports, and the
    chi_tilde normalization.  Report-only; returns max violations."""
    lK = partition.lK
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, lK / 4.0, size=samples)
    identity_violation = float(np.max(np.abs(cutoffs.mu(x) + cutoffs.mu(x + 3.0 * lK / 4.0) - 1.0)))

    mid = partition.H1 + partition.lK + lK / 2.0
    plateau_violation = float(abs(cutoffs.chi(mid) - 1.0))

    y = np.linspace(0.0, TWO_PI, 40_001)
    chi_y = cutoffs.chi(y)
    tilde_y = cutoffs.chi_tilde(y)
    outside_omega = (y <= partition.a) | (y >= partition.b)
    support_violation = float(max(np.max(np.abs(chi_y[outside_omega]), initial=0.0),
                                  np.max(np.abs(tilde_y[outside_omega]), initial=0.0)))

    # Composite-Simpson quadrature of the normalized-measure integral of chi_tilde.
    yy = np.linspace(0.0, TWO_PI, quad_points)
    w = np.ones(quad_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = yy[1] - yy[0]
    integral = float(np.sum(w * cutoffs.chi_tilde(yy)) * h / 3.0 / TWO_PI)

    covered = np.zeros_like(y, dtype=int)
    for lo, hi in partition.strips:
        covered += ((y >= lo) & (y < hi)) | ((y + TWO_PI >= lo) & (y + TWO_PI < hi))
    return {
        "partition_identity_max_violation": identity_violation,
        "chi_plateau_midpoint_error": plateau_violation,
        "support_max_outside_omega": support_violation,
        "chi_tilde_integral_error": abs(integral - 1.0),
        "min_strip_coverage": int(covered.min()),
        "max_strip_coverage": int(covered.max()),
    }
