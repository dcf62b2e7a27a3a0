"""Proximal mappings, their certificates, and generalized Jacobian actions.

Every prox returns a :class:`ProxEvaluation` holding the output together
with the structural information (SVD factors, active sets, constancy
blocks, group states) needed later to apply one element of its
generalized Jacobian without recomputing anything.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse
from structlog.stdlib import get_logger

from .errors import DimensionError, InvalidPartitionError, NonFiniteError, UnsupportedPenaltyError
from .types import FloatArray, TProximable

logger = get_logger(__name__)

BoolArray = NDArray[np.bool_]
IndexArray = NDArray[np.intp]


@dataclass(frozen=True, eq=False)
class L1Certificate:
    active_mask: BoolArray


@dataclass(frozen=True, eq=False)
class SvdCertificate:
    """Economy SVD of the (possibly transposed) prox input.

    Factors are stored for the orientation with ``rows <= cols``; when the
    input was tall, ``transposed`` is set and every Jacobian action works on
    the transposed argument.
    """

    left_factor: FloatArray
    right_factor: FloatArray
    singular_values: FloatArray
    threshold: float
    transposed: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.left_factor.shape[0], self.right_factor.shape[0]
        return (cols, rows) if self.transposed else (rows, cols)

    @property
    def alpha1(self) -> IndexArray:
        return np.flatnonzero(self.singular_values > self.threshold)

    @property
    def alpha2(self) -> IndexArray:
        return np.flatnonzero(self.singular_values == self.threshold)

    @property
    def alpha3(self) -> IndexArray:
        return np.flatnonzero(self.singular_values < self.threshold)

    @property
    def rank(self) -> int:
        return int(self.alpha1.size)

    @cached_property
    def spectral_weights(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Return the symmetric-part weights, skew-part weights and the
        per-row scaling of the orthogonal-complement term.

        Rows of both weight matrices outside the leading index set are
        filled by symmetry; the entries between non-leading indices are 0.
        """
        sv = self.singular_values
        t = self.threshold
        lead = sv > t
        tied = sv == t
        below = sv < t

        sym = np.zeros((sv.size, sv.size))
        sym[np.ix_(lead, lead | tied)] = 1.0
        s_lead = sv[lead][:, None]
        sym[np.ix_(lead, below)] = (s_lead - t) / (s_lead - sv[below][None, :])

        skew = np.zeros_like(sym)
        skew[lead, :] = (s_lead - t + np.maximum(sv[None, :] - t, 0.0)) / (s_lead + sv[None, :])

        sym[~lead, :] = sym.T[~lead, :]
        skew[~lead, :] = skew.T[~lead, :]

        mu = np.zeros_like(sv)
        mu[lead] = (sv[lead] - t) / sv[lead]
        return sym, skew, mu


@dataclass(frozen=True, eq=False)
class FusedCertificate:
    """Constancy blocks of the TV prox (half-open ranges) and the L1 mask."""

    tv_blocks: tuple[tuple[int, int], ...]
    post_l1_mask: BoolArray

    @cached_property
    def _block_bounds(self) -> tuple[IndexArray, IndexArray]:
        starts = np.array([b[0] for b in self.tv_blocks], dtype=np.intp)
        lengths = np.array([b[1] - b[0] for b in self.tv_blocks], dtype=np.intp)
        return starts, lengths


@dataclass(frozen=True, eq=False)
class GroupState:
    indices: IndexArray
    inner_mask: BoolArray
    group_survives: bool
    residual_norm: float
    shrunk: FloatArray
    level: float


@dataclass(frozen=True, eq=False)
class GroupCertificate:
    groups: tuple[GroupState, ...]
    size: int


Certificate = L1Certificate | SvdCertificate | FusedCertificate | GroupCertificate


@dataclass(frozen=True, eq=False)
class ProxEvaluation:
    value: FloatArray
    certificate: Certificate | None = None


def _finite(x: FloatArray, what: str) -> FloatArray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return arr


def _check_length(expected: int, u: FloatArray) -> None:
    if u.size != expected:
        raise DimensionError(f"expected a vector of length {expected}, got {u.size}")


# --- squared loss -------------------------------------------------------


def prox_squared_loss_scaled(u: FloatArray, y: FloatArray, c: float) -> FloatArray:
    """Prox of ``c * 0.5 * ||s - y||^2`` at ``u``."""
    if c <= 0:
        raise ValueError(f"scaling must be positive, got {c}")
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if u.shape != y.shape:
        raise DimensionError(f"argument shape {u.shape} does not match response {y.shape}")
    return (u + c * y) / (1.0 + c)


# --- lasso --------------------------------------------------------------


def prox_l1(v: FloatArray, t: float) -> ProxEvaluation:
    """Elementwise soft-thresholding; works for vectors and matrices alike."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    magnitude = np.abs(v)
    out = np.sign(v) * np.maximum(magnitude - t, 0.0)
    return ProxEvaluation(out, L1Certificate(magnitude > t))


def l1_jacobian_apply(cert: L1Certificate, u: FloatArray) -> FloatArray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != cert.active_mask.shape:
        raise DimensionError(f"shape {u.shape} does not match mask {cert.active_mask.shape}")
    return np.where(cert.active_mask, u, 0.0)


# --- nuclear norm -------------------------------------------------------


def prox_nuclear(y_mat: FloatArray, t: float) -> ProxEvaluation:
    """Singular value soft-thresholding at level ``t``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    y_mat = _finite(y_mat, "nuclear prox input")
    if y_mat.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {y_mat.shape}")

    transposed = y_mat.shape[0] > y_mat.shape[1]
    oriented = y_mat.T if transposed else y_mat
    try:
        u, sv, vt = linalg.svd(oriented, full_matrices=False, lapack_driver="gesdd")
    except linalg.LinAlgError:
        logger.warning("gesdd failed, retrying with gesvd", shape=oriented.shape)
        u, sv, vt = linalg.svd(oriented, full_matrices=False, lapack_driver="gesvd")

    out = (u * np.maximum(sv - t, 0.0)) @ vt
    cert = SvdCertificate(u, vt.T, sv, float(t), transposed)
    return ProxEvaluation(out.T if transposed else out, cert)


def _nuclear_jacobian_stack(cert: SvdCertificate, mats: FloatArray) -> FloatArray:
    """Apply the Jacobian element to a stack of oriented matrices ``(..., m, q)``."""
    u, v1 = cert.left_factor, cert.right_factor
    sym_w, skew_w, mu = cert.spectral_weights
    h1 = u.T @ mats @ v1
    h1t = np.swapaxes(h1, -1, -2)
    inner = sym_w * (h1 + h1t) / 2 + skew_w * (h1 - h1t) / 2
    complement = u.T @ mats - h1 @ v1.T
    return u @ (inner @ v1.T + mu[:, None] * complement)


def nuclear_jacobian_apply(cert: SvdCertificate, h_mat: FloatArray) -> FloatArray:
    h_mat = np.asarray(h_mat, dtype=np.float64)
    if h_mat.shape != cert.shape:
        raise DimensionError(f"shape {h_mat.shape} does not match certificate {cert.shape}")
    if cert.rank == 0:
        return np.zeros_like(h_mat)
    if cert.transposed:
        return _nuclear_jacobian_stack(cert, h_mat.T).T
    return _nuclear_jacobian_stack(cert, h_mat)


def nuclear_jacobian_apply_batch(cert: SvdCertificate, mats: FloatArray) -> FloatArray:
    """Jacobian action on every matrix of an ``(n, m, q)`` stack."""
    if mats.shape[1:] != cert.shape:
        raise DimensionError(f"stack shape {mats.shape} does not match certificate {cert.shape}")
    if cert.rank == 0:
        return np.zeros_like(mats)
    if cert.transposed:
        return np.swapaxes(_nuclear_jacobian_stack(cert, np.swapaxes(mats, 1, 2)), 1, 2)
    return _nuclear_jacobian_stack(cert, mats)


def nuclear_design_factor(cert: SvdCertificate, x_tensor: FloatArray) -> FloatArray | None:
    """Factor ``F`` with ``F @ F.T`` equal to the Gram of the Jacobian in the
    design geometry, i.e. ``F[k] . F[l] = <X_k, W(X_l)>``.

    Only the leading rows of the weight matrices are nonzero, so the factor
    has ``r * (2m + q)`` columns for rank ``r``. Returns ``None`` when that
    is not smaller than ``m * q``; callers then use the batched action.
    """
    n = x_tensor.shape[0]
    mats = np.swapaxes(x_tensor, 1, 2) if cert.transposed else x_tensor
    m, q = mats.shape[1:]
    lead = cert.alpha1
    r = lead.size
    if r == 0:
        return np.zeros((n, 0))
    if r * (2 * m + q) >= m * q:
        return None

    u, v1 = cert.left_factor, cert.right_factor
    sym_w, skew_w, mu = cert.spectral_weights

    rows = u[:, lead].T @ mats
    h1_rows = rows @ v1
    h1_cols = np.swapaxes(u.T @ (mats @ v1[:, lead]), 1, 2)
    # off-block pairs appear once here but twice in the full double sum
    mult = np.full(m, 2.0)
    mult[lead] = 1.0
    sym = (h1_rows + h1_cols) / 2 * np.sqrt(sym_w[lead, :] * mult)
    skew = (h1_rows - h1_cols) / 2 * np.sqrt(skew_w[lead, :] * mult)
    complement = (rows - h1_rows @ v1.T) * np.sqrt(mu[lead])[:, None]
    return np.concatenate(
        [sym.reshape(n, -1), skew.reshape(n, -1), complement.reshape(n, -1)], axis=1
    )


# --- total variation and fused lasso -------------------------------------


def _tv_denoise(v: FloatArray, lam: float) -> FloatArray:
    """Direct 1-D total-variation denoising (taut string with segment merging)."""
    width = v.size
    out = np.empty(width)
    if width == 0:
        return out
    k = k0 = 0
    kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = v[0] - lam, v[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == width - 1:
            if umin < 0.0:
                end = max(kminus, k0)
                out[k0 : end + 1] = vmin
                k0 = end + 1
                k = kminus = k0
                vmin = v[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                end = max(kplus, k0)
                out[k0 : end + 1] = vmax
                k0 = end + 1
                k = kplus = k0
                vmax = v[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                out[k0 : k + 1] = vmin
                return out

        umin += v[k + 1] - vmin
        if umin < -lam:
            end = max(kminus, k0)
            out[k0 : end + 1] = vmin
            k0 = end + 1
            k = kplus = kminus = k0
            vmin = v[k0]
            vmax = vmin + twolam
            umin, umax = lam, -lam
            continue

        umax += v[k + 1] - vmax
        if umax > lam:
            end = max(kplus, k0)
            out[k0 : end + 1] = vmax
            k0 = end + 1
            k = kplus = kminus = k0
            vmax = v[k0]
            vmin = vmax - twolam
            umin, umax = lam, -lam
            continue

        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def _constant_runs(x: FloatArray) -> tuple[tuple[int, int], ...]:
    breaks = np.flatnonzero(np.diff(x) != 0.0) + 1
    edges = np.concatenate([[0], breaks, [x.size]])
    return tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))


def prox_tv(v: FloatArray, lam: float) -> tuple[FloatArray, tuple[tuple[int, int], ...]]:
    """Prox of ``lam * sum |x_i - x_{i+1}|`` and its constancy blocks."""
    if lam < 0:
        raise ValueError(f"fusion level must be nonnegative, got {lam}")
    v = _finite(v, "TV prox input").ravel()
    if lam == 0.0:
        return v.copy(), tuple((i, i + 1) for i in range(v.size))
    out = _tv_denoise(v, float(lam))
    return out, _constant_runs(out)


def prox_fused(v: FloatArray, lam: float, lam_prime: float) -> ProxEvaluation:
    """Fused lasso prox: soft-threshold at ``lam`` after TV denoising at ``lam_prime``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    tv, blocks = prox_tv(v, lam_prime)
    soft = prox_l1(tv, lam)
    assert isinstance(soft.certificate, L1Certificate)
    return ProxEvaluation(soft.value, FusedCertificate(blocks, soft.certificate.active_mask))


def fused_jacobian_apply(cert: FusedCertificate, u: FloatArray) -> FloatArray:
    u = np.asarray(u, dtype=np.float64)
    _check_length(cert.post_l1_mask.size, u)
    starts, lengths = cert._block_bounds
    means = np.add.reduceat(u, starts) / lengths
    return np.where(cert.post_l1_mask, np.repeat(means, lengths), 0.0)


# --- sparse group lasso ---------------------------------------------------


def check_partition(groups: Sequence[Sequence[int]], p: int) -> None:
    """Raise unless ``groups`` is a disjoint cover of ``range(p)``."""
    flat = np.concatenate([np.asarray(g, dtype=np.intp) for g in groups]) if groups else []
    if len(flat) != p or not np.array_equal(np.sort(flat), np.arange(p)):
        raise InvalidPartitionError(f"groups do not form a disjoint cover of 0..{p - 1}")
    if any(len(g) == 0 for g in groups):
        raise InvalidPartitionError("groups must be nonempty")


def prox_sgl(
    v: FloatArray,
    lam: float,
    lam_prime: float,
    groups: Sequence[Sequence[int]],
    weights: Sequence[float],
) -> ProxEvaluation:
    """Sparse group lasso prox: elementwise then groupwise shrinkage."""
    if lam < 0 or lam_prime < 0:
        raise ValueError("penalty levels must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    check_partition(groups, v.size)
    if len(weights) != len(groups) or any(w <= 0 for w in weights):
        raise InvalidPartitionError("need one positive weight per group")

    soft = prox_l1(v, lam)
    assert isinstance(soft.certificate, L1Certificate)
    out = np.zeros_like(v)
    states = []
    for group, weight in zip(groups, weights):
        idx = np.asarray(group, dtype=np.intp)
        shrunk = soft.value[idx]
        norm = float(np.linalg.norm(shrunk))
        level = lam_prime * weight
        survives = norm > level
        if survives:
            out[idx] = (1.0 - level / norm) * shrunk
        states.append(
            GroupState(idx, soft.certificate.active_mask[idx], survives, norm, shrunk, level)
        )
    return ProxEvaluation(out, GroupCertificate(tuple(states), v.size))


def sgl_jacobian_apply(cert: GroupCertificate, u: FloatArray) -> FloatArray:
    u = np.asarray(u, dtype=np.float64)
    _check_length(cert.size, u)
    out = np.zeros_like(u)
    for g in cert.groups:
        if not g.group_survives:
            continue
        pu = np.where(g.inner_mask, u[g.indices], 0.0)
        scale = 1.0 - g.level / g.residual_norm
        out[g.indices] = scale * pu + (g.level / g.residual_norm**3) * g.shrunk * (g.shrunk @ pu)
    return out


# --- generic dispatch ---------------------------------------------------


def jacobian_apply(cert: Certificate, u: FloatArray) -> FloatArray:
    """Apply the Jacobian element described by any certificate."""
    match cert:
        case L1Certificate():
            return l1_jacobian_apply(cert, u)
        case SvdCertificate():
            return nuclear_jacobian_apply(cert, u)
        case FusedCertificate():
            return fused_jacobian_apply(cert, u)
        case GroupCertificate():
            return sgl_jacobian_apply(cert, u)
    raise UnsupportedPenaltyError(f"no Jacobian for {type(cert).__name__}")


def jacobian_basis(cert: L1Certificate | FusedCertificate | GroupCertificate) -> sparse.csc_array:
    """Sparse ``S`` with ``S @ S.T`` equal to the vector Jacobian element.

    Columns are only created for active coordinates, blocks or groups, so
    ``Z @ S`` touches nothing outside the active set.
    """
    rows: list[IndexArray] = []
    vals: list[FloatArray] = []
    cols: list[IndexArray] = []
    ncols = 0

    def add_column(r: IndexArray, v: FloatArray) -> None:
        nonlocal ncols
        rows.append(r)
        vals.append(v)
        cols.append(np.full(r.size, ncols, dtype=np.intp))
        ncols += 1

    def add_unit_columns(r: IndexArray, scale: float) -> None:
        nonlocal ncols
        rows.append(r)
        vals.append(np.full(r.size, scale))
        cols.append(np.arange(ncols, ncols + r.size, dtype=np.intp))
        ncols += r.size

    match cert:
        case L1Certificate():
            size = cert.active_mask.size
            add_unit_columns(np.flatnonzero(cert.active_mask.ravel()), 1.0)
        case FusedCertificate():
            size = cert.post_l1_mask.size
            for start, stop in cert.tv_blocks:
                if cert.post_l1_mask[start]:
                    add_column(np.arange(start, stop), np.full(stop - start, (stop - start) ** -0.5))
        case GroupCertificate():
            size = cert.size
            for g in cert.groups:
                if not g.group_survives:
                    continue
                add_unit_columns(g.indices[g.inner_mask], np.sqrt(1.0 - g.level / g.residual_norm))
                if g.level > 0.0:
                    rank_one = np.sqrt(g.level / g.residual_norm**3)
                    add_column(g.indices, rank_one * g.shrunk)
        case _:
            raise UnsupportedPenaltyError(f"no Jacobian basis for {type(cert).__name__}")

    if not rows:
        return sparse.csc_array((size, 0))
    data = np.concatenate(vals)
    return sparse.csc_array(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(size, ncols)
    )


def moreau_envelope(f: object, x: FloatArray, t: float) -> float:
    """Envelope of ``t * f`` at ``x``, evaluated at the prox point."""
    if not isinstance(f, TProximable):
        raise UnsupportedPenaltyError(f"{type(f).__name__} has no proximal mapping")
    if t <= 0:
        raise ValueError(f"envelope parameter must be positive, got {t}")
    x = np.asarray(x, dtype=np.float64)
    p = f.prox(x, t).value
    return float(t * f.value(p) + 0.5 * np.sum((p - x) ** 2))
