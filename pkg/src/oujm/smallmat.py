"""Dense kernels for the tiny matrices of the model (p <= 4, Kronecker lifts up to 16x16).

Each kernel has an array-namespace core (``_expm``, ``_expm2``, ``_chol``, ``_lyap``) that
accepts batched ``(..., p, p)`` input and runs unchanged under NumPy or ``jax.numpy``; the
posterior traces the same cores for automatic differentiation.  The public functions
wrap the cores with validation for single matrices.
"""

import math

import numpy as np

from .errors import DecompositionError, DimensionError, DomainError, SingularityError

MAX_DIM = 4
TAYLOR_ORDER = 16
MAX_SQUARINGS = 24
# Taylor core is applied once the 1-norm has been scaled below this value.
_SCALED_NORM = 1.0


def _stop_gradient(x, xp):
    if xp is np:
        return x
    import jax

    return jax.lax.stop_gradient(x)


def _eye_like(a, xp):
    p = a.shape[-1]
    return xp.broadcast_to(xp.eye(p, dtype=a.dtype), a.shape)


def _expm(a, xp=np, order=TAYLOR_ORDER, max_squarings=MAX_SQUARINGS, scaled_norm=_SCALED_NORM):
    """Scaling-and-squaring with a fixed-order Taylor core on a batch of matrices.

    Inputs whose 1-norm exceeds ``scaled_norm * 2**max_squarings`` lose accuracy.
    """
    norm = xp.max(xp.sum(xp.abs(a), axis=-2), axis=-1)
    norm = _stop_gradient(norm, xp)
    s = xp.ceil(xp.log2(xp.maximum(norm, 1e-300) / scaled_norm))
    s = xp.clip(s, 0, max_squarings)
    scaled = a * (2.0 ** -s)[..., None, None]
    eye = _eye_like(a, xp)
    e = eye
    for k in range(order, 0, -1):
        e = eye + (scaled @ e) / k
    for i in range(max_squarings):
        e = xp.where((i < s)[..., None, None], e @ e, e)
    return e


# |delta| below this uses the power series of the 2x2 closed form
_SERIES_CUTOFF = 1e-3


def _expm2(a, xp=np):
    """Closed-form exponential of a batch of 2x2 matrices.

    With ``m = tr/2`` and ``N = a - m I`` we have ``N @ N = delta I``, so
    ``exp(a) = e^m (C(delta) I + S(delta) N)`` with ``C = cosh(sqrt(delta))`` and
    ``S = sinh(sqrt(delta)) / sqrt(delta)`` (cos/sin for negative delta).  Every branch is
    evaluated on a safe argument so gradients stay finite.
    """
    a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
    m = 0.5 * (a00 + a11)
    h = 0.5 * (a00 - a11)
    delta = h * h + a01 * a10
    pos = delta > _SERIES_CUTOFF
    neg = delta < -_SERIES_CUTOFF
    rp = xp.sqrt(xp.where(pos, delta, 1.0))
    ep, em = xp.exp(m + rp), xp.exp(m - rp)
    c_pos, s_pos = 0.5 * (ep + em), 0.5 * (ep - em) / rp
    rn = xp.sqrt(xp.where(neg, -delta, 1.0))
    e = xp.exp(m)
    c_neg, s_neg = e * xp.cos(rn), e * xp.sin(rn) / rn
    ds = xp.where(pos | neg, 0.0, delta)
    c_ser, s_ser, term_c, term_s = 0.0, 0.0, 1.0, 1.0
    for k in range(7):
        c_ser = c_ser + term_c
        s_ser = s_ser + term_s
        term_c = term_c * ds / ((2 * k + 1) * (2 * k + 2))
        term_s = term_s * ds / ((2 * k + 2) * (2 * k + 3))
    c = xp.where(pos, c_pos, xp.where(neg, c_neg, e * c_ser))
    s = xp.where(pos, s_pos, xp.where(neg, s_neg, e * s_ser))
    row0 = xp.stack([c + s * h, s * a01], axis=-1)
    row1 = xp.stack([s * a10, c - s * h], axis=-1)
    return xp.stack([row0, row1], axis=-2)


def expm_small(a, xp=np):
    """Batched exponential for the traced model code: closed form for 2x2, Taylor otherwise."""
    if a.shape[-1] == 2:
        return _expm2(a, xp)
    return _expm(a, xp)


def _chol(a, xp=np):
    """Unrolled lower Cholesky factor of a batch of small SPD matrices."""
    p = a.shape[-1]
    cols = [[None] * p for _ in range(p)]
    zero = xp.zeros_like(a[..., 0, 0])
    for j in range(p):
        d = a[..., j, j]
        for k in range(j):
            d = d - cols[j][k] ** 2
        ljj = xp.sqrt(d)
        cols[j][j] = ljj
        for i in range(j + 1, p):
            v = a[..., i, j]
            for k in range(j):
                v = v - cols[i][k] * cols[j][k]
            cols[i][j] = v / ljj
    rows = [xp.stack([cols[i][j] if j <= i else zero for j in range(p)], axis=-1) for i in range(p)]
    return xp.stack(rows, axis=-2)


def _kron_sum(theta, xp=np):
    """theta (+) theta acting on the row-major vec of V, i.e. vec(theta V + V theta^T)."""
    p = theta.shape[-1]
    eye = xp.eye(p, dtype=theta.dtype)
    k = xp.einsum("...ij,kl->...ikjl", theta, eye) + xp.einsum("ij,...kl->...ikjl", eye, theta)
    return k.reshape(theta.shape[:-2] + (p * p, p * p))


def _lyap(theta, q, xp=np):
    p = theta.shape[-1]
    vec = xp.linalg.solve(_kron_sum(theta, xp), q.reshape(q.shape[:-2] + (p * p, 1)))
    v = vec.reshape(q.shape)
    return 0.5 * (v + xp.swapaxes(v, -1, -2))


def _as_square(a, name="a"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise DimensionError(f"{name} has dimension {a.shape[0]} > {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return a


def mat_exp(a, scale=1.0):
    """Return ``exp(scale * a)`` for a square matrix of dimension <= 4."""
    a = _as_square(a)
    if not math.isfinite(scale):
        raise DomainError("scale must be finite")
    return _expm(a * scale)


def chol_lower(a, sym_tol=1e-10):
    """Lower-triangular ``L`` with ``L @ L.T == a`` and a positive diagonal.

    Raises
    ------
    DecompositionError
        If ``a`` is not positive definite; ``err.pivot`` is the failing column.
    """
    a = _as_square(a)
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(a))):
        raise DomainError("matrix is not symmetric")
    p = a.shape[0]
    out = np.zeros_like(a)
    for j in range(p):
        d = a[j, j] - out[j, :j] @ out[j, :j]
        if not d > 0.0:
            raise DecompositionError(f"matrix not positive definite (pivot {j}, value {d:.3g})", pivot=j)
        out[j, j] = math.sqrt(d)
        for i in range(j + 1, p):
            out[i, j] = (a[i, j] - out[i, :j] @ out[j, :j]) / out[j, j]
    return out


def lyapunov_solve(theta, q):
    """Solve ``theta V + V theta^T = q`` through the Kronecker-sum linear system."""
    theta = _as_square(theta, "theta")
    q = _as_square(q, "q")
    if q.shape != theta.shape:
        raise DimensionError(f"theta {theta.shape} and q {q.shape} differ in shape")
    ks = _kron_sum(theta)
    if np.linalg.cond(ks) > 1e13:
        raise SingularityError("Kronecker sum theta (+) theta is singular")
    try:
        return _lyap(theta, q)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(str(exc)) from exc
