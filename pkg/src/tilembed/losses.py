"""Triplet and cross-entropy objectives on embedding arrays, with gradients.

These work on plain ``(n, d)`` arrays so that the tile encoder, the
point encoder and recombined batches share one implementation.
"""

import numpy as np

from .errors import ShapeError


def _safe_unit(v, norm):
    # subgradient 0 where the vector vanishes
    out = np.zeros_like(v)
    nz = norm > 0
    out[nz] = v[nz] / norm[nz, None]
    return out


def triplet_objective(z, ia, in_, id_, margin, lam, with_grad=True):
    """Summed hinge-plus-norm objective over index triples into ``z``.

    Returns ``(loss, dz, info)`` where ``dz`` has the shape of ``z`` (``None``
    when ``with_grad`` is false) and ``info`` holds the per-triplet hinge
    arguments, useful for locating kinks.
    """
    z = np.asarray(z)
    ia, in_, id_ = (np.asarray(i, dtype=np.int64) for i in (ia, in_, id_))
    za, zn, zd = z[ia], z[in_], z[id_]
    dan = za - zn
    dad = za - zd
    pos = np.sqrt((dan ** 2).sum(1))
    neg = np.sqrt((dad ** 2).sum(1))
    arg = pos - neg + margin
    active = arg > 0
    hinge = np.where(active, arg, 0.0)
    na, nn, nd = (np.sqrt((v ** 2).sum(1)) for v in (za, zn, zd))
    loss = hinge.sum() + lam * (na.sum() + nn.sum() + nd.sum())
    info = {"hinge_arg": arg, "active": active}
    if not with_grad:
        return loss, None, info

    act = active[:, None].astype(z.dtype)
    u_an = _safe_unit(dan, pos)
    u_ad = _safe_unit(dad, neg)
    gza = act * (u_an - u_ad) + lam * _safe_unit(za, na)
    gzn = -act * u_an + lam * _safe_unit(zn, nn)
    gzd = act * u_ad + lam * _safe_unit(zd, nd)
    dz = np.zeros_like(z)
    np.add.at(dz, ia, gza)
    np.add.at(dz, in_, gzn)
    np.add.at(dz, id_, gzd)
    return loss, dz, info


def triplet_hinge(z_a, z_n, z_d, margin: float) -> float:
    """``max(0, |z_a - z_n| - |z_a - z_d| + margin)`` for single embeddings."""
    z_a, z_n, z_d = (np.asarray(v, dtype=np.float64).ravel() for v in (z_a, z_n, z_d))
    if not (z_a.shape == z_n.shape == z_d.shape):
        raise ShapeError(f"embedding dims differ: {z_a.shape}, {z_n.shape}, {z_d.shape}")
    val = np.linalg.norm(z_a - z_n) - np.linalg.norm(z_a - z_d) + margin
    return float(max(0.0, val))


def objective_value(triplets, margin: float, lam: float) -> float:
    """Sum over ``(z_a, z_n, z_d)`` triples of hinge plus ``lam`` times the three embedding norms."""
    triplets = list(triplets)
    if not triplets:
        raise ShapeError("objective needs at least one triplet")
    try:
        z = np.array([np.asarray(v, dtype=np.float64).ravel() for t in triplets for v in t])
    except ValueError:
        raise ShapeError("embedding dims differ across triplets") from None
    if z.ndim != 2 or len(z) != 3 * len(triplets):
        raise ShapeError("embedding dims differ across triplets")
    idx = np.arange(len(triplets)) * 3
    loss, _, _ = triplet_objective(z, idx, idx + 1, idx + 2, margin, lam, with_grad=False)
    return float(loss)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels, with_grad=True):
    """Mean cross-entropy of integer ``labels`` under softmax ``logits`` and its logit gradient."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float((log_z - shifted[np.arange(n), labels]).mean())
    if not with_grad:
        return loss, None
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
