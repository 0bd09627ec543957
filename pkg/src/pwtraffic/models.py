"""Profiled matrix ensembles, the lambda-block decomposition, and equivalents.

The model applies a polynomial entrywise to a normalized product of two
independent rectangular matrices with step variance profiles.  This module
samples the ensemble, splits the matrix into its linear / perturbative /
deformation / remainder components via the distinct-index block sums, and
builds the independent-Gaussian equivalents whose traffic limits the exact
calculator reproduces.

Sampling is deterministic per (ensemble, seed): every independent matrix is
drawn from its own generator seeded by (seed, stream tag), so components can
be built concurrently without sharing generator state.

Entrywise coefficient matrices for the equivalents are computed as exact
rationals per distinct profile-cell value (step profiles have few cells) and
broadcast afterwards; the only floating-point step is one square root per
cell.  The cell-level second-moment scale is normalized by the inner
dimension (so it equals 1 for constant profiles); the N-normalized
``lambda_ell`` matrices are exposed separately and differ by a factor
psi0 = N0/N.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hermite import Polynomial, expect_derivative, expect_scaled, gaussian_moment
from .partitions import IntegerPartition, enumerate_set_partitions
from .traffic import BlockLayout

# RNG stream tags (seed, tag, ...) for independent components.
STREAM_W = 1
STREAM_X = 2
STREAM_LIN_W = 11
STREAM_LIN_X = 12
STREAM_PER = 20  # (seed, STREAM_PER, order)

_MAX_Z_PARTS = 8


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# -- entry laws --------------------------------------------------------------


@dataclass(frozen=True)
class EntryLaw:
    """Centered unit-variance i.i.d. entry law with finite moments.

    Two-point laws take value ``a`` with probability ``p`` and ``b``
    otherwise; the mean-zero variance-one constraints are checked exactly.
    """

    kind: str
    a: Fraction | None = None
    b: Fraction | None = None
    p: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind == "gaussian":
            return
        if self.kind in ("rademacher", "skewed_two_point"):
            a, b, p = self.a, self.b, self.p
            if a is None or b is None or p is None:
                raise ValueError("two-point laws need values a, b and probability p")
            if not (0 < p < 1):
                raise ValueError("p must lie in (0, 1)")
            if p * a + (1 - p) * b != 0:
                raise ValueError("two-point law is not centered")
            if p * a**2 + (1 - p) * b**2 != 1:
                raise ValueError("two-point law does not have unit variance")
            return
        raise ValueError(f"unknown entry law kind {self.kind!r}")

    @staticmethod
    def gaussian() -> "EntryLaw":
        return EntryLaw("gaussian")

    @staticmethod
    def rademacher() -> "EntryLaw":
        return EntryLaw("rademacher", a=Fraction(1), b=Fraction(-1), p=Fraction(1, 2))

    @staticmethod
    def skewed_two_point(a, b, p) -> "EntryLaw":
        return EntryLaw("skewed_two_point", a=_frac(a), b=_frac(b), p=_frac(p))

    def moment(self, k: int) -> Fraction:
        if self.kind == "gaussian":
            return gaussian_moment(k)
        return self.p * self.a**k + (1 - self.p) * self.b**k

    @property
    def m3(self) -> Fraction:
        return self.moment(3)

    def sample(self, rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        u = rng.random(shape)
        return np.where(u < float(self.p), float(self.a), float(self.b))

    def to_json(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian"}
        if self.kind == "rademacher":
            return {"kind": "rademacher"}
        return {"kind": self.kind, "a": str(self.a), "b": str(self.b), "p": str(self.p)}

    @staticmethod
    def from_json(obj: dict) -> "EntryLaw":
        kind = obj["kind"]
        if kind == "gaussian":
            return EntryLaw.gaussian()
        if kind == "rademacher":
            return EntryLaw.rademacher()
        if kind == "skewed_two_point":
            return EntryLaw.skewed_two_point(Fraction(obj["a"]), Fraction(obj["b"]), Fraction(obj["p"]))
        raise ValueError(f"unknown entry law kind {kind!r}")


def unit_skewed_law() -> EntryLaw:
    """The two-point law with values (2, -1/2), probabilities (1/5, 4/5).

    Centered, unit variance, third moment 3/2.
    """
    return EntryLaw.skewed_two_point(2, Fraction(-1, 2), Fraction(1, 5))


# -- step profiles -----------------------------------------------------------


def _cell_of(i: int, total: int, k: int) -> int:
    """0-based cell of 0-based row i among k cells over `total` rows."""
    return ((i + 1) * k + total - 1) // total - 1


@dataclass(frozen=True)
class StepProfile:
    """K x K' grid of nonnegative rational values, read as a step function.

    Realized onto an (rows x cols) matrix, entry (i, j) takes the value of
    cell (ceil(i*K/rows), ceil(j*K'/cols)) with 1-based indices.  A constant
    profile is a 1x1 grid.
    """

    grid: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        if not self.grid or not self.grid[0]:
            raise ValueError("profile grid must be nonempty")
        width = len(self.grid[0])
        for row in self.grid:
            if len(row) != width:
                raise ValueError("profile grid must be rectangular")
            for v in row:
                if v < 0:
                    raise ValueError("profile values must be nonnegative")

    @staticmethod
    def of(rows: Sequence[Sequence]) -> "StepProfile":
        return StepProfile(tuple(tuple(_frac(v) for v in r) for r in rows))

    @staticmethod
    def constant(value=1) -> "StepProfile":
        return StepProfile(((_frac(value),),))

    @property
    def n_row_cells(self) -> int:
        return len(self.grid)

    @property
    def n_col_cells(self) -> int:
        return len(self.grid[0])

    def row_cells(self, rows: int) -> list[int]:
        return [_cell_of(i, rows, self.n_row_cells) for i in range(rows)]

    def col_cells(self, cols: int) -> list[int]:
        return [_cell_of(j, cols, self.n_col_cells) for j in range(cols)]

    def realize(self, rows: int, cols: int) -> np.ndarray:
        rc = self.row_cells(rows)
        cc = self.col_cells(cols)
        vals = np.array([[float(v) for v in row] for row in self.grid])
        return vals[np.ix_(rc, cc)]

    def value(self, r: int, c: int) -> Fraction:
        return self.grid[r][c]

    def to_json(self) -> list[list[str]]:
        return [[str(v) for v in row] for row in self.grid]

    @staticmethod
    def from_json(data: Sequence[Sequence]) -> "StepProfile":
        return StepProfile.of(data)


# -- the profiled ensemble ----------------------------------------------------


@dataclass(frozen=True)
class ProfiledEnsemble:
    """Matrix sizes, entry laws and variance profiles of the two factors.

    W is N1 x N0 with profile_w, X is N0 x N2 with profile_x.
    """

    layout: BlockLayout
    law_w: EntryLaw
    law_x: EntryLaw
    profile_w: StepProfile
    profile_x: StepProfile

    def realized_profiles(self) -> tuple[np.ndarray, np.ndarray]:
        lay = self.layout
        return (
            self.profile_w.realize(lay.N1, lay.N0),
            self.profile_x.realize(lay.N0, lay.N2),
        )

    def sample(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw (W, X) = (profile o W', profile o X'), deterministic per seed."""
        lay = self.layout
        gw, gx = self.realized_profiles()
        w_raw = self.law_w.sample(np.random.default_rng([seed, STREAM_W]), (lay.N1, lay.N0))
        x_raw = self.law_x.sample(np.random.default_rng([seed, STREAM_X]), (lay.N0, lay.N2))
        return gw * w_raw, gx * x_raw

    def to_json(self) -> dict:
        lay = self.layout
        return {
            "N0": lay.N0,
            "N1": lay.N1,
            "N2": lay.N2,
            "law_w": self.law_w.to_json(),
            "law_x": self.law_x.to_json(),
            "profile_w": self.profile_w.to_json(),
            "profile_x": self.profile_x.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "ProfiledEnsemble":
        return ProfiledEnsemble(
            layout=BlockLayout(int(obj["N0"]), int(obj["N1"]), int(obj["N2"])),
            law_w=EntryLaw.from_json(obj["law_w"]),
            law_x=EntryLaw.from_json(obj["law_x"]),
            profile_w=StepProfile.from_json(obj["profile_w"]),
            profile_x=StepProfile.from_json(obj["profile_x"]),
        )


def pw_matrix(h: Polynomial, w: np.ndarray, x: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """sqrt(psi0)/sqrt(N) times the entrywise evaluation of h on WX/sqrt(N0)."""
    n1, n0 = w.shape
    n0x, n2 = x.shape
    if n0 != n0x or (n1, n0, n2) != (layout.N1, layout.N0, layout.N2):
        raise ValueError("matrix shapes do not match the layout")
    inner = (w @ x) / math.sqrt(layout.N0)
    coeffs = [float(c) for c in h.power_coeffs]
    if not coeffs:
        return np.zeros((n1, n2))
    acc = np.full_like(inner, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = acc * inner + c
    return (math.sqrt(layout.N0) / layout.N) * acc


# -- lambda-type block sums ----------------------------------------------------


def ones_and_pairs(n: int, m: int) -> IntegerPartition:
    """Partition of n with m parts equal to one and the rest twos."""
    if m < 0 or (n - m) % 2 or n < m:
        raise ValueError(f"no partition of {n} with {m} ones and the rest twos")
    return IntegerPartition.of([2] * ((n - m) // 2) + [1] * m)


def triple_and_pairs(n: int) -> IntegerPartition:
    """Partition of n with one part equal to three and the rest twos."""
    if n < 3 or (n - 3) % 2:
        raise ValueError(f"no partition of {n} with a single 3 and the rest twos")
    return IntegerPartition.of([3] + [2] * ((n - 3) // 2))


def all_pairs(n: int) -> IntegerPartition:
    if n % 2:
        raise ValueError("pair partitions need an even total")
    return IntegerPartition.of([2] * (n // 2))


def z_lambda(
    lam: IntegerPartition,
    w: np.ndarray,
    x: np.ndarray,
    i_range: Sequence[int] | None = None,
    j_range: Sequence[int] | None = None,
) -> np.ndarray:
    """Distinct-index block sum over the inner dimension.

    Entry (i, j) sums, over tuples of pairwise distinct inner indices (one
    per part), the product over parts of (W(i, d) X(d, j))^part.  Computed by
    inclusion-exclusion over coincidence patterns of the parts, which reduces
    every term to entrywise products of W^{om} X^{om} matrices; exact on
    integer inputs.  Depends only on the partition, not on a representative.
    """
    parts = lam.parts
    b = len(parts)
    if b > _MAX_Z_PARTS:
        raise ValueError(f"z_lambda guarded at {_MAX_Z_PARTS} parts, got {b}")
    w = np.asarray(w)
    x = np.asarray(x)
    if i_range is not None:
        w = w[np.asarray(i_range), :]
    if j_range is not None:
        x = x[:, np.asarray(j_range)]
    exact = np.issubdtype(w.dtype, np.integer) and np.issubdtype(x.dtype, np.integer)
    if exact:
        w = w.astype(object)
        x = x.astype(object)
    powers: dict[int, np.ndarray] = {}

    def u(m: int) -> np.ndarray:
        if m not in powers:
            powers[m] = (w**m) @ (x**m)
        return powers[m]

    total = np.zeros((w.shape[0], x.shape[1]), dtype=object if exact else float)
    for sigma in enumerate_set_partitions(b):
        weight = 1
        term = None
        for block in sigma.blocks:
            weight *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
            piece = u(sum(parts[k - 1] for k in block))
            term = piece if term is None else term * piece
        total = total + weight * term
    return total


@dataclass(frozen=True)
class Decomposition:
    """Split of a sampled matrix into linear, perturbative, deformation and
    remainder components; the four sum back to the full matrix exactly."""

    lin: np.ndarray
    per: dict[int, np.ndarray]
    deformation: np.ndarray
    eps: np.ndarray

    def reassembled(self) -> np.ndarray:
        out = self.lin + self.deformation + self.eps
        for m in self.per.values():
            out = out + m
        return out


def decompose(h: Polynomial, w: np.ndarray, x: np.ndarray, layout: BlockLayout) -> Decomposition:
    """Four-part split of the model matrix along distinct-index block types.

    The linear part collects the single-free-index blocks weighted by
    E[h_n'], the order-m perturbative parts the m-ones blocks weighted by
    E[h_n^(m)]/m!, the deformation the one-triple blocks weighted by
    E[h_n''']/6; the remainder is what is left of the full matrix.
    """
    if not h.is_odd:
        raise ValueError("decompose expects an odd polynomial")
    if h.degree > 7:
        raise ValueError("decompose guarded at degree 7")
    shape = (layout.N1, layout.N2)
    gamma = math.sqrt(layout.N0) / layout.N  # sqrt(psi0)/sqrt(N)
    lin = np.zeros(shape)
    per: dict[int, np.ndarray] = {}
    deform = np.zeros(shape)
    for n, a_n in enumerate(h.power_coeffs):
        if a_n == 0:
            continue
        hn = Polynomial([0] * n + [1])
        scale = gamma * float(layout.N0) ** (-n / 2)
        c_lin = expect_derivative(hn, 1)
        if c_lin != 0:
            lin = lin + float(a_n * c_lin) * scale * z_lambda(ones_and_pairs(n, 1), w, x).astype(float)
        for m in range(2, n + 1):
            c_m = expect_derivative(hn, m) / math.factorial(m)
            if c_m == 0:
                continue
            term = float(a_n * c_m) * scale * z_lambda(ones_and_pairs(n, m), w, x).astype(float)
            per[m] = per.get(m, np.zeros(shape)) + term
        if n >= 3:
            c_def = expect_derivative(hn, 3) / 6
            if c_def != 0:
                deform = deform + float(a_n * c_def) * scale * z_lambda(triple_and_pairs(n), w, x).astype(float)
    total = pw_matrix(h, w, x, layout)
    eps = total - lin - deform
    for mat in per.values():
        eps = eps - mat
    return Decomposition(lin=lin, per=per, deformation=deform, eps=eps)


# -- profile cell machinery -----------------------------------------------------


def _inner_cell_counts(profile_w: StepProfile, profile_x: StepProfile, n0: int) -> dict[tuple[int, int], int]:
    """How many inner indices fall in each (w-column-cell, x-row-cell) pair."""
    wc = profile_w.col_cells(n0)
    xr = profile_x.row_cells(n0)
    counts: dict[tuple[int, int], int] = {}
    for d in range(n0):
        key = (wc[d], xr[d])
        counts[key] = counts.get(key, 0) + 1
    return counts


def _lambda_cells(
    profile_w: StepProfile,
    profile_x: StepProfile,
    layout: BlockLayout,
    ell: int,
    denominator: int,
) -> list[list[Fraction]]:
    """Cellwise (1/denominator) sum_d gamma_w(r,d)^ell gamma_x(d,c)^ell."""
    counts = _inner_cell_counts(profile_w, profile_x, layout.N0)
    out = []
    for rw in range(profile_w.n_row_cells):
        row = []
        for cx in range(profile_x.n_col_cells):
            acc = Fraction(0)
            for (cw, rx), cnt in counts.items():
                acc += cnt * profile_w.value(rw, cw) ** ell * profile_x.value(rx, cx) ** ell
            row.append(acc / denominator)
        out.append(row)
    return out


def _broadcast_cells(cells: Sequence[Sequence], ensemble: ProfiledEnsemble) -> np.ndarray:
    lay = ensemble.layout
    rc = ensemble.profile_w.row_cells(lay.N1)
    cc = ensemble.profile_x.col_cells(lay.N2)
    vals = np.array([[float(v) for v in row] for row in cells])
    return vals[np.ix_(rc, cc)]


def lambda_ell(
    profile_w: StepProfile, profile_x: StepProfile, layout: BlockLayout, ell: int
) -> np.ndarray:
    """N^{-1} (Gamma_w ^ o ell) (Gamma_x ^ o ell) as a realized N1 x N2 matrix."""
    if ell not in (2, 3):
        raise ValueError("lambda_ell supports ell in {2, 3}")
    cells = _lambda_cells(profile_w, profile_x, layout, ell, layout.N)
    ens = ProfiledEnsemble(layout, EntryLaw.gaussian(), EntryLaw.gaussian(), profile_w, profile_x)
    return _broadcast_cells(cells, ens)


def second_moment_cells(ensemble: ProfiledEnsemble) -> list[list[Fraction]]:
    """Cellwise squared scale mu^2 = (1/N0) sum_d gamma_w^2 gamma_x^2.

    Equals 1 on every cell for constant unit profiles; the entrywise square
    root of the N-normalized lambda_2 matrix rescaled by 1/psi0.
    """
    return _lambda_cells(ensemble.profile_w, ensemble.profile_x, ensemble.layout, 2, ensemble.layout.N0)


def second_moment_profile(ensemble: ProfiledEnsemble) -> np.ndarray:
    """Realized entrywise scale matrix (square root of second_moment_cells)."""
    cells = second_moment_cells(ensemble)
    root = [[math.sqrt(float(v)) for v in row] for row in cells]
    return _broadcast_cells(root, ensemble)


# -- Gaussian equivalents -------------------------------------------------------


def equivalent_lin(h: Polynomial, ensemble: ProfiledEnsemble, seed: int) -> np.ndarray:
    """Linear equivalent: E[h'(mu xi)] cellwise, times a profiled Wishart factor.

    The Gaussian factors are sampled independently of everything else from
    the (seed, lin) streams.
    """
    lay = ensemble.layout
    cells = second_moment_cells(ensemble)
    coeff = [[expect_scaled(h.derivative(1), mu_sq) for mu_sq in row] for row in cells]
    coeff_mat = _broadcast_cells(coeff, ensemble)
    gw, gx = ensemble.realized_profiles()
    w_gau = gw * np.random.default_rng([seed, STREAM_LIN_W]).standard_normal((lay.N1, lay.N0))
    x_gau = gx * np.random.default_rng([seed, STREAM_LIN_X]).standard_normal((lay.N0, lay.N2))
    return coeff_mat * (w_gau @ x_gau) / lay.N


def _per_coefficient_cells(h: Polynomial, ensemble: ProfiledEnsemble, m: int) -> list[list[float]]:
    """Cellwise noise scale for the order-m chaos component.

    The m-th Hermite coefficient of t -> h(t mu) is mu^m E[h^(m)(mu xi)]/m!;
    the matching noise has entry variance psi0 * m! / N, so the coefficient
    in front of a standard Gaussian scaled by 1/sqrt(N) is
    sqrt(psi0 * m!) * mu^m * E[h^(m)(mu xi)] / m!.
    """
    lay = ensemble.layout
    psi0 = float(lay.N0) / lay.N
    cells = second_moment_cells(ensemble)
    deriv = h.derivative(m)
    out = []
    for row in cells:
        line = []
        for mu_sq in row:
            base = expect_scaled(deriv, mu_sq)  # exact rational
            mu_m = float(mu_sq) ** (m / 2)
            line.append(math.sqrt(psi0 * math.factorial(m)) * mu_m * float(base) / math.factorial(m))
        out.append(line)
    return out


def equivalent_per(h: Polynomial, ensemble: ProfiledEnsemble, m: int, seed: int) -> np.ndarray:
    """Order-m chaos equivalent: coefficient cells times Z_m / sqrt(N).

    The Z_m are independent standard Gaussian matrices across orders, drawn
    from the (seed, per, m) streams.
    """
    if m < 2:
        raise ValueError("chaos orders start at m = 2")
    lay = ensemble.layout
    if h.degree < m:
        return np.zeros((lay.N1, lay.N2))
    coeff = _broadcast_cells(_per_coefficient_cells(h, ensemble, m), ensemble)
    z_m = np.random.default_rng([seed, STREAM_PER, m]).standard_normal((lay.N1, lay.N2))
    return coeff * z_m / math.sqrt(lay.N)


def per_noise_family(ensemble: ProfiledEnsemble, seed: int, max_order: int = 9) -> dict[int, np.ndarray]:
    """The unprofiled chaos noises: order n >= 2 -> i.i.d. Gaussian matrix
    with entry variance psi0 * n! / N (zero matrices for orders 0 and 1 are
    omitted).  Streams match :func:`equivalent_per`, so assembling a
    polynomial from these noises or from the per-components agrees.
    """
    lay = ensemble.layout
    psi0 = float(lay.N0) / lay.N
    out: dict[int, np.ndarray] = {}
    for n in range(2, max_order + 1):
        g = np.random.default_rng([seed, STREAM_PER, n]).standard_normal((lay.N1, lay.N2))
        out[n] = math.sqrt(psi0 * math.factorial(n) / lay.N) * g
    return out


def per_matrix(h: Polynomial, ensemble: ProfiledEnsemble, seed: int) -> np.ndarray:
    """Full chaos equivalent: sum of order components over 2 <= m <= deg h."""
    lay = ensemble.layout
    out = np.zeros((lay.N1, lay.N2))
    for m in range(2, h.degree + 1):
        out = out + equivalent_per(h, ensemble, m, seed)
    return out


def equivalent_def(h: Polynomial, ensemble: ProfiledEnsemble) -> np.ndarray:
    """Deterministic deformation: third moments times the cubed-profile factor.

    Entries are O(1/N); the zero matrix whenever either entry law has
    vanishing third moment.
    """
    lay = ensemble.layout
    m3 = ensemble.law_w.m3 * ensemble.law_x.m3
    if m3 == 0 or h.degree < 3:
        return np.zeros((lay.N1, lay.N2))
    lam3 = _lambda_cells(ensemble.profile_w, ensemble.profile_x, lay, 3, lay.N0)
    mu_cells = second_moment_cells(ensemble)
    cells = []
    for row3, row2 in zip(lam3, mu_cells):
        cells.append(
            [m3 / 6 * l3 * expect_scaled(h.derivative(3), mu_sq) for l3, mu_sq in zip(row3, row2)]
        )
    return _broadcast_cells(cells, ensemble) / lay.N


def equivalent_sum(h: Polynomial, ensemble: ProfiledEnsemble, seed: int) -> np.ndarray:
    """equivalent_lin + all chaos orders + equivalent_def."""
    return equivalent_lin(h, ensemble, seed) + per_matrix(h, ensemble, seed) + equivalent_def(h, ensemble)


# -- flat binary dumps -----------------------------------------------------------


def write_matrix(path, a: np.ndarray) -> None:
    """Row-major float64 dump with an 8-byte (rows, cols) uint32 header."""
    a = np.asarray(a, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", a.shape[0], a.shape[1]))
        fh.write(a.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype=np.float64)
    return data.reshape(rows, cols)
