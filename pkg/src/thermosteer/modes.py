"""Transported-mode library: the flow-composed actuator fields and their
time-integral tables.

The four base modes are transported by the generating flow evaluated backward
from time one, sampled on a uniform node grid of [0,1], and stored as centered
coefficient blocks |k1|,|k2| <= k_store.  Vertical-flow compositions never
interpolate: they are exact k2 phase shifts.  The x1-antiderivative operator
uses spectral division (k1 = 0 content zeroed), which keeps every derived
actuator exactly mean-free.

Frame convention: "frame" blocks are the actuators conjugated by the vertical
displacement, i.e. shifted so the convection flow becomes the identity.  The
physical actuator at time s is shift(frame(s), -D(s)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flows import ConvectionStrategy, GeneratingField, h0_values
from .geometry import CutoffSet
from .spectral import SpectralField, grid, wavenumbers

TWO_PI = 2.0 * np.pi

# Enumeration of the twelve non-localized transported modes: the four base
# modes, their d_t variants, then their d_2 variants (after the
# x1-antiderivative), in the base order sin(x1), cos(x1), sin(x1+x2),
# cos(x1+x2).
T_LABELS = tuple(
    f"{group}_{base}"
    for group in ("base", "dt", "d2")
    for base in ("sin_x1", "cos_x1", "sin_x1px2", "cos_x1px2")
)


def _cumtrapz(y: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(y)
    np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0, out=out[1:])
    return out


def cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral along axis 0 on a uniform grid, Simpson accuracy."""
    out = np.zeros_like(y)
    if len(y) < 3:
        if len(y) == 2:
            out[1] = 0.5 * h * (y[0] + y[1])
        return out
    out[1] = h * (5.0 * y[0] + 8.0 * y[1] - y[2]) / 12.0
    for j in range(2, len(y)):
        out[j] = out[j - 2] + h * (y[j - 2] + 4.0 * y[j - 1] + y[j]) / 3.0 \
            if j % 2 == 0 else \
            out[j - 1] + h * (-y[j - 2] + 8.0 * y[j - 1] + 5.0 * y[j]) / 12.0
    return out


# -- centered block helpers --------------------------------------------------

def block_wavenumbers(k_store: int):
    k = np.arange(-k_store, k_store + 1)
    return k[:, None], k[None, :]


def extract_block(coeffs: np.ndarray, k_store: int) -> np.ndarray:
    n = coeffs.shape[0]
    idx = np.arange(-k_store, k_store + 1) % n
    return coeffs[np.ix_(idx, idx)].copy()


def embed_block(block: np.ndarray, n: int) -> np.ndarray:
    k_store = block.shape[0] // 2
    out = np.zeros((n, n), dtype=np.complex128)
    idx = np.arange(-k_store, k_store + 1) % n
    out[np.ix_(idx, idx)] = block
    return out


def block_shift(block: np.ndarray, d: float) -> np.ndarray:
    _, k2 = block_wavenumbers(block.shape[0] // 2)
    return block * np.exp(1j * k2 * d)


def block_d1(block: np.ndarray) -> np.ndarray:
    k1, _ = block_wavenumbers(block.shape[0] // 2)
    return block * (1j * k1)


def block_d2(block: np.ndarray) -> np.ndarray:
    _, k2 = block_wavenumbers(block.shape[0] // 2)
    return block * (1j * k2)


def block_antiderivative_x1(block: np.ndarray) -> np.ndarray:
    """x1-antiderivative with spectral division; k1 = 0 content zeroed."""
    ks = block.shape[0] // 2
    k1, _ = block_wavenumbers(ks)
    out = np.zeros_like(block)
    nz = (k1 != 0) + np.zeros_like(block, dtype=bool)
    out[nz] = block[nz] / (1j * np.broadcast_to(k1, block.shape)[nz])
    return out


def block_norm0(block: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(block) ** 2)))


@dataclass(frozen=True)
class LibraryConfig:
    time_nodes: int = 257       # uniform s-nodes on [0,1]; bins must divide nodes-1
    k_store: int = 12           # stored band |k1|,|k2| <= k_store
    substeps_per_node: int = 4  # RK4 substeps of the generating flow per node gap


class ModeLibrary:
    """Precomputed actuator data shared by synthesis, localization, steering.

    Holds, per base mode m and node s_j:
      T[m, j]   transported base mode e_m(U(x, 1, s_j)) in the frame,
      W[m, j]   its x1-antiderivative,
      dW[m, j]  centered time difference of W (the control-grid d_t),
      CT[m, j]  cumulative integral of T up to s_j,
      CWT[m, j] cumulative integral of (1 - s) d1 T up to s_j.
    """

    def __init__(self, strategy: ConvectionStrategy, gf: GeneratingField,
                 cutoffs: CutoffSet, n: int, config: LibraryConfig = LibraryConfig()):
        self.strategy = strategy
        self.gf = gf
        self.cutoffs = cutoffs
        self.n = n
        self.config = config
        self.nodes = np.linspace(0.0, 1.0, config.time_nodes)
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self):
        n, ks = self.n, self.config.k_store
        nt = len(self.nodes)
        x1, x2 = grid(n)
        pts = np.stack(np.broadcast_arrays(x1, x2), axis=-1).reshape(-1, 2)

        path = self.gf.flow_path(pts, self.nodes[::-1],
                                 substeps_per_node=self.config.substeps_per_node)
        path = path[::-1]  # path[j] = U(x, 1, s_j) for every grid point x

        B = 2 * ks + 1
        self.T = np.empty((4, nt, B, B), dtype=np.complex128)
        for j in range(nt):
            vals = h0_values(path[j]).reshape(n, n, 4)
            coeffs = np.fft.fft2(vals.transpose(2, 0, 1), axes=(-2, -1)) / (n * n)
            for m in range(4):
                blk = extract_block(coeffs[m], ks)
                blk[ks, ks] = 0.0  # continuum transported modes are mean-free
                self.T[m, j] = blk

        self.W = np.empty_like(self.T)
        for m in range(4):
            for j in range(nt):
                self.W[m, j] = block_antiderivative_x1(self.T[m, j])

        h = self.nodes[1] - self.nodes[0]
        self.dW = np.empty_like(self.W)
        self.dW[:, 1:-1] = (self.W[:, 2:] - self.W[:, :-2]) / (2.0 * h)
        self.dW[:, 0] = (self.W[:, 1] - self.W[:, 0]) / h
        self.dW[:, -1] = (self.W[:, -1] - self.W[:, -2]) / h

        # cumulative tables by trapezoid: the synthesis maps then integrate the
        # piecewise-linear node interpolant exactly, so the endpoint maps and
        # the downstream trajectory quadratures agree to roundoff even for
        # large fitted coefficients.  CD/CCD and CCT are the single and nested
        # integrals driving the vorticity-endpoint columns.
        self.CT = np.empty_like(self.T)
        self.CD = np.empty_like(self.T)
        self.CCT = np.empty_like(self.T)
        self.CCD = np.empty_like(self.T)
        for m in range(4):
            self.CT[m] = _cumtrapz(self.T[m], h)
            self.CD[m] = _cumtrapz(self.dW[m], h)
            self.CCT[m] = _cumtrapz(self.CT[m], h)
            self.CCD[m] = _cumtrapz(self.CD[m], h)

        # chi as a circulant convolution along k2 (exact grid multiplication)
        chi_row = self.cutoffs.chi(TWO_PI * np.arange(n) / n)
        chi_hat = np.fft.fft(chi_row) / n
        q = np.arange(n)
        self.chi_circulant_T = chi_hat[(q[:, None] - q[None, :]) % n].T.copy()
        self._k1_idx = np.arange(-ks, ks + 1) % n
        self._k2_embed = np.arange(-ks, ks + 1) % n

        tilde_row = self.cutoffs.chi_tilde(TWO_PI * np.arange(n) / n)
        tilde_prime_row = self.cutoffs.chi_tilde_prime(TWO_PI * np.arange(n) / n)
        self.chi_tilde_coeffs = np.zeros((n, n), dtype=np.complex128)
        self.chi_tilde_coeffs[0, :] = np.fft.fft(tilde_row) / n
        self.chi_tilde_prime_coeffs = np.zeros((n, n), dtype=np.complex128)
        self.chi_tilde_prime_coeffs[0, :] = np.fft.fft(tilde_prime_row) / n
        self.chi_tilde_grid_mean = float(np.mean(tilde_row))
        self.chi_tilde_prime_grid_mean = float(np.mean(tilde_prime_row))

    # -- node/bin bookkeeping -------------------------------------------------

    def bin_edge_nodes(self, n_bins: int) -> np.ndarray:
        stride, rem = divmod(len(self.nodes) - 1, n_bins)
        if rem:
            raise ValueError(f"{n_bins} bins do not align with {len(self.nodes)} nodes")
        return np.arange(0, len(self.nodes), stride)

    def _locate(self, s: float):
        h = self.nodes[1] - self.nodes[0]
        j = min(int(s / h), len(self.nodes) - 2)
        lam = (s - self.nodes[j]) / h
        return j, lam

    def _interp(self, series: np.ndarray, s: float) -> np.ndarray:
        j, lam = self._locate(float(s))
        return (1.0 - lam) * series[:, j] + lam * series[:, j + 1]

    # -- frame actuators ------------------------------------------------------

    def frame_blocks(self, s: float) -> np.ndarray:
        """All twelve frame actuators at time s, stacked (12, B, B)."""
        t_blk = self._interp(self.T, s)
        w_blk = self._interp(self.W, s)
        dw_blk = self._interp(self.dW, s)
        y2 = float(self.strategy.ybar2(s))
        d2w = np.stack([block_d2(w_blk[m]) for m in range(4)])
        return np.concatenate([t_blk, dw_blk - y2 * d2w, d2w], axis=0)

    def reduced_frame(self, s: float) -> np.ndarray:
        """The eight reduced actuators (base modes, then plain dW), (8, B, B).

        The vertical-drift terms of the d_t and d_2 actuator groups cancel
        algebraically when the d_2 coefficients are slaved to ybar2 times the
        d_t ones; all internal trajectory quadratures use this reduced form so
        no fast ybar2 factor is ever sampled."""
        return np.concatenate([self._interp(self.T, s), self._interp(self.dW, s)], axis=0)

    def zeta_T_field(self, l: int, s: float) -> SpectralField:
        """Physical non-localized transported mode l (1..12) at time s."""
        blk = self.frame_blocks(s)[l - 1]
        d = -float(self.strategy.D(s))
        return SpectralField(embed_block(block_shift(blk, d), self.n))

    # -- localized assembly ----------------------------------------------------

    def chi_times(self, rows_block: np.ndarray) -> np.ndarray:
        """Multiply a block field by chi(x2): exact circulant convolution in k2.

        Input is a centered block (B, B); output is a full (n, n) coefficient
        array with the same active k1 rows.
        """
        n, ks = self.n, self.config.k_store
        rows_full = np.zeros((2 * ks + 1, n), dtype=np.complex128)
        rows_full[:, self._k2_embed] = rows_block
        mixed = rows_full @ self.chi_circulant_T
        out = np.zeros((n, n), dtype=np.complex128)
        out[self._k1_idx, :] = mixed
        return out

    def localized_zeta_field(self, l: int, t: float, n_zeta: int = 14) -> SpectralField:
        """Localized actuator l (1..14) at physical time t, on the solver grid.

        l = 1, 2 are the single-variable cutoff and its derivative; l >= 3 are
        chi(x) times the transported modes evaluated through the vertical flow
        and the window reparametrization.
        """
        if l == 1:
            return SpectralField(self.chi_tilde_coeffs.copy())
        if l == 2:
            return SpectralField(self.chi_tilde_prime_coeffs.copy())
        s = float(self.strategy.grid.sigma(t))
        blk = self.frame_blocks(s)[l - 3]
        shifted = block_shift(blk, -float(self.strategy.D(t)))
        return SpectralField(self.chi_times(shifted))
