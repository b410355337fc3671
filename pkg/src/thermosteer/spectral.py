"""Truncated Fourier representation of real periodic fields on the 2pi-torus.

Fields are stored as full complex FFT-layout coefficient arrays normalized so
that f(x) = sum_k c[k] exp(i k.x).  The torus measure is normalized to total
mass one, hence Parseval reads ||f||_0^2 = sum_k |c[k]|^2 and the mean of f is
the (0,0) coefficient.  Sobolev norms use the exact multi-index weight
sum_{|a|<=m} k1^(2a1) k2^(2a2), not the equivalent (1+|k|^2)^m form.

All operations are pure; coefficient arrays are treated as immutable values.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MEAN_TOL = 1e-13
SOBOLEV_MAX = 6


class SpectralError(ValueError):
    pass


@lru_cache(maxsize=None)
def wavenumbers(n: int):
    """Integer wavenumber columns/rows (k1 along axis 0, k2 along axis 1)."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    return k[:, None].copy(), k[None, :].copy()


@lru_cache(maxsize=None)
def grid(n: int):
    """Physical grid coordinates x1 (axis 0), x2 (axis 1), spacing 2pi/n."""
    x = 2.0 * np.pi * np.arange(n) / n
    return x[:, None].copy(), x[None, :].copy()


@lru_cache(maxsize=None)
def dealias_mask(n: int):
    """2/3-rule mask keeping |k1|, |k2| <= n//3."""
    k1, k2 = wavenumbers(n)
    kc = n // 3
    return (np.abs(k1) <= kc) & (np.abs(k2) <= kc)


@lru_cache(maxsize=None)
def sobolev_weight(n: int, m: int):
    """Multi-index weight sum_{a1+a2<=m} k1^(2a1) k2^(2a2) on the k-grid."""
    k1, k2 = wavenumbers(n)
    w = np.zeros((n, n))
    for a1 in range(m + 1):
        for a2 in range(m + 1 - a1):
            w += k1 ** (2 * a1) * k2 ** (2 * a2)
    return w


def _zero_nyquist(c: np.ndarray, axis1: bool = True, axis2: bool = True) -> np.ndarray:
    n = c.shape[0]
    if n % 2 == 0:
        if axis1:
            c[n // 2, :] = 0.0
        if axis2:
            c[:, n // 2] = 0.0
    return c


class SpectralField:
    """A real scalar field on T^2 held as truncated Fourier coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1]:
            raise SpectralError(f"coefficient array must be square, got {coeffs.shape}")
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_values(cls, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        return cls(np.fft.fft2(values) / (n * n))

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(np.zeros((n, n), dtype=np.complex128))

    @classmethod
    def from_function(cls, n: int, fn) -> "SpectralField":
        x1, x2 = grid(n)
        return cls.from_values(fn(x1 + np.zeros((n, n)), x2 + np.zeros((n, n))))

    # -- basic queries -----------------------------------------------------

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    @property
    def is_mean_free(self) -> bool:
        return abs(self.coeffs[0, 0]) <= MEAN_TOL

    def values(self) -> np.ndarray:
        n = self.n
        return np.real(np.fft.ifft2(self.coeffs) * (n * n))

    def hermitian_defect(self) -> float:
        """Max deviation from c(-k) = conj(c(k)); zero for real fields."""
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
        return float(np.max(np.abs(c - flipped)))

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs)

    # -- calculus ----------------------------------------------------------

    def deriv(self, a1: int = 0, a2: int = 0) -> "SpectralField":
        """Partial derivative d^(a1)_1 d^(a2)_2; the Nyquist row of each
        differentiated axis is zeroed (odd-order sign ambiguity)."""
        k1, k2 = wavenumbers(self.n)
        c = self.coeffs * (1j * k1) ** a1 * (1j * k2) ** a2
        return SpectralField(_zero_nyquist(c, axis1=a1 > 0, axis2=a2 > 0))

    def project_mean_free(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[0, 0] = 0.0
        return SpectralField(c)

    def low_pass(self, k_cut: int) -> "SpectralField":
        k1, k2 = wavenumbers(self.n)
        mask = (np.abs(k1) <= k_cut) & (np.abs(k2) <= k_cut)
        return SpectralField(np.where(mask, self.coeffs, 0.0))

    def shift_vertical(self, d: float) -> "SpectralField":
        """x -> f(x + d e2); a pure k2 phase shift.  The k2 Nyquist row gets
        the real symmetric factor cos(n d / 2), which keeps the field real and
        makes shifts by grid multiples exact cyclic rolls."""
        n = self.n
        _, k2 = wavenumbers(n)
        phase = np.exp(1j * k2 * d)
        if n % 2 == 0:
            phase[0, n // 2] = np.cos(0.5 * n * d)
        return SpectralField(self.coeffs * phase)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Exact trigonometric-series evaluation at arbitrary torus points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        k1, k2 = wavenumbers(self.n)
        e1 = np.exp(1j * np.outer(pts[:, 0], k1[:, 0]))
        e2 = np.exp(1j * np.outer(pts[:, 1], k2[0, :]))
        vals = np.einsum("pi,ij,pj->p", e1, self.coeffs, e2)
        return np.real(vals)


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product with the 2/3 rule applied to inputs and output."""
    if f.n != g.n:
        raise SpectralError(f"resolution mismatch: {f.n} vs {g.n}")
    mask = dealias_mask(f.n)
    fv = SpectralField(np.where(mask, f.coeffs, 0.0)).values()
    gv = SpectralField(np.where(mask, g.coeffs, 0.0)).values()
    prod = SpectralField.from_values(fv * gv)
    return SpectralField(np.where(mask, prod.coeffs, 0.0))


def sobolev_norm(f: SpectralField, m: int) -> float:
    """H^m norm with the exact multi-index weight, normalized measure."""
    if m < 0 or m > SOBOLEV_MAX:
        raise SpectralError(f"Sobolev index m={m} outside [0, {SOBOLEV_MAX}]")
    w = sobolev_weight(f.n, m)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


class VelocityField:
    """Divergence-free velocity: stream-function coefficients plus a mean.

    Realizes u = grad^perp(psi) + A with grad^perp = (d2, -d1), so the field is
    solenoidal by construction and its spatial mean is exactly A.
    """

    __slots__ = ("stream", "mean")

    def __init__(self, stream: SpectralField, mean=(0.0, 0.0)):
        self.stream = stream
        self.mean = (float(mean[0]), float(mean[1]))

    @property
    def n(self) -> int:
        return self.stream.n

    def u1(self) -> SpectralField:
        c = self.stream.deriv(0, 1).coeffs.copy()
        c[0, 0] += self.mean[0]
        return SpectralField(c)

    def u2(self) -> SpectralField:
        c = (-self.stream.deriv(1, 0).coeffs).copy()
        c[0, 0] += self.mean[1]
        return SpectralField(c)

    def max_fluctuation_speed(self) -> float:
        v1 = self.stream.deriv(0, 1).values()
        v2 = (-self.stream.deriv(1, 0)).values()
        return float(np.max(np.hypot(v1, v2)))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        out = np.stack([self.u1().evaluate(points), self.u2().evaluate(points)], axis=-1)
        return out

    def sobolev_norm(self, m: int) -> float:
        return float(np.hypot(sobolev_norm(self.u1(), m), sobolev_norm(self.u2(), m)))


def curl(u: VelocityField) -> SpectralField:
    """Vorticity d1 u2 - d2 u1; mean-free by construction."""
    z = u.u2().deriv(1, 0) - u.u1().deriv(0, 1)
    return z.project_mean_free()


def inverse_curl(z: SpectralField, A=(0.0, 0.0)) -> VelocityField:
    """The unique divergence-free field with curl z and spatial mean A.

    Solves the stream-function Poisson problem spectrally,
    psi_hat(k) = z_hat(k)/|k|^2 for k != 0.
    """
    tol = MEAN_TOL * max(1.0, sobolev_norm(z, 0))
    if abs(z.coeffs[0, 0]) > tol:
        raise SpectralError(
            f"inverse_curl requires a mean-free field, got mean {z.coeffs[0, 0]:.3e}"
        )
    k1, k2 = wavenumbers(z.n)
    k_sq = k1**2 + k2**2
    k_sq[0, 0] = 1.0
    psi = z.coeffs / k_sq
    psi[0, 0] = 0.0
    return VelocityField(SpectralField(psi), A)


def measured_divcurl_constant(n: int, m: int) -> float:
    """Sharp grid constant C0 with ||inverse_curl(z,A)||_m <= C0 (||z||_{m-1} + |A|).

    The per-mode map is diagonal, so the constant is the max over grid modes of
    sqrt(W_m(k) / (|k|^2 W_{m-1}(k))), floored at 1 by the pure-mean member.
    """
    k1, k2 = wavenumbers(n)
    k_sq = k1**2 + k2**2
    wm = sobolev_weight(n, m)
    wm1 = sobolev_weight(n, m - 1) if m >= 1 else np.ones((n, n))
    mask = k_sq > 0
    ratio = np.sqrt(wm[mask] / (k_sq[mask] * wm1[mask]))
    return float(max(1.0, np.max(ratio)))


def random_band_limited(n: int, k_max: int, rng: np.random.Generator,
                        mean_free: bool = True, norm: float = 1.0) -> SpectralField:
    """Random real field supported in the Euclidean band |k| <= k_max, with
    unit (or given) L2 norm."""
    c = np.zeros((n, n), dtype=np.complex128)
    k1, k2 = wavenumbers(n)
    band = (k1**2 + k2**2) <= k_max**2
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    c[band] = raw[band]
    # Hermitian symmetrization makes the field real-valued.
    flipped = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
    c = 0.5 * (c + flipped)
    if mean_free:
        c[0, 0] = 0.0
    else:
        c[0, 0] = c[0, 0].real
    f = SpectralField(c)
    amp = sobolev_norm(f, 0)
    if amp > 0 and norm is not None:
        f = f * (norm / amp)
    return f


def save_field(path, f: SpectralField) -> None:
    """Plain-text snapshot: header 'n n', then n*n row-major physical values."""
    vals = f.values()
    n = f.n
    with open(path, "w") as fh:
        fh.write(f"{n} {n}\n")
        for row in vals:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_field(path) -> SpectralField:
    with open(path) as fh:
        header = fh.readline().split()
        n, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh)
    vals = np.asarray(data, dtype=np.float64).reshape(n, m)
    if n != m:
        raise SpectralError(f"snapshot grid must be square, got {n}x{m}")
    return SpectralField.from_values(vals)
