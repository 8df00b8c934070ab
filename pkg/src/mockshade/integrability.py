"""Integrability analysis of normal fields.

Normal maps are allowed to encode slope fields that no height function
produces (impossible shapes); nothing here repairs them. `curl_residual`
measures how far a field is from being a gradient, and
`integrate_normals` recovers the least-squares height together with the
irreducible residual, which is the practical integrability oracle.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverDiverged
from .field import Field2D, finite_diff_gradient

Array = np.ndarray

# Below this |n_z| a normal is treated as a silhouette vertical and masked out.
DEFAULT_Z_EPS = 1e-3


def gradient_to_normals(grad: Field2D) -> Field2D:
    """Slope field (dh/du, dh/dv) -> unit surface normals (-p, 1)/|.|."""
    g = grad.values
    n = np.empty(g.shape[:2] + (3,))
    n[..., 0] = -g[..., 0]
    n[..., 1] = -g[..., 1]
    n[..., 2] = 1.0
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return Field2D(n, grad.wrap_mode)


def normals_to_slopes(normals: Field2D, z_eps: float = DEFAULT_Z_EPS) -> tuple[Array, Array]:
    """Back out the slope field p = (-n_x/n_z, -n_y/n_z).

    Returns (p, masked) where masked marks pixels with |n_z| <= z_eps;
    their slopes are set to 0 and must be ignored downstream.
    """
    n = normals.values
    if n.ndim != 3 or n.shape[2] != 3:
        raise ValueError("normals must be a vec3 field")
    nz = n[..., 2]
    masked = np.abs(nz) <= z_eps
    safe = np.where(masked, 1.0, nz)
    p = np.empty(n.shape[:2] + (2,))
    p[..., 0] = np.where(masked, 0.0, -n[..., 0] / safe)
    p[..., 1] = np.where(masked, 0.0, -n[..., 1] / safe)
    return p, masked


class CurlResult(NamedTuple):
    residual: Field2D  # scalar field, 0 on masked pixels
    masked: Array  # bool (H, W)


def curl_residual(normals: Field2D, z_eps: float = DEFAULT_Z_EPS) -> CurlResult:
    """Discrete curl of the slope field implied by a normal map.

    r = d(p_v)/du - d(p_u)/dv by central differences (one-sided at the
    borders). Gradient fields give r at discretization level; a nonzero
    band marks slopes no height field can produce.
    """
    p, masked = normals_to_slopes(normals, z_eps)
    wrap = normals.wrap_mode
    dpu = finite_diff_gradient(Field2D(p[..., 0], wrap)).values
    dpv = finite_diff_gradient(Field2D(p[..., 1], wrap)).values
    r = dpv[..., 0] - dpu[..., 1]
    # a masked pixel poisons every difference stencil that reads it
    bad = masked.copy()
    bad[1:, :] |= masked[:-1, :]
    bad[:-1, :] |= masked[1:, :]
    bad[:, 1:] |= masked[:, :-1]
    bad[:, :-1] |= masked[:, 1:]
    r = np.where(bad, 0.0, r)
    return CurlResult(Field2D(r, wrap), bad)


class IntegrationResult(NamedTuple):
    height: Field2D
    residual_norm: float
    masked: Array


def integrate_normals(
    normals: Field2D,
    z_eps: float = DEFAULT_Z_EPS,
    tol: float = 1e-8,
    max_iter: int = 20000,
) -> IntegrationResult:
    """Least-squares height from a normal map.

    Minimizes sum |Gh - p|^2 over unmasked pixels with a staggered
    forward-difference gradient G (p averaged onto edge midpoints, which
    keeps the scheme second-order). Neumann boundaries fall out of the
    normal equations; the gauge is fixed by mean(h) = 0. residual_norm
    is the RMS of Gh - p over the edge equations, the quantity that
    cannot be removed when the field is non-conservative.
    """
    p, masked = normals_to_slopes(normals, z_eps)
    h_px, w_px = p.shape[:2]
    n_pix = h_px * w_px
    ok = ~masked
    idx = np.arange(n_pix).reshape(h_px, w_px)

    # edges along u (between (j,i) and (j,i+1)), spacing 1/W
    ue = ok[:, :-1] & ok[:, 1:]
    u_lo = idx[:, :-1][ue]
    u_hi = idx[:, 1:][ue]
    u_rhs = 0.5 * (p[:, :-1, 0] + p[:, 1:, 0])[ue]
    # edges along v, spacing 1/H
    ve = ok[:-1, :] & ok[1:, :]
    v_lo = idx[:-1, :][ve]
    v_hi = idx[1:, :][ve]
    v_rhs = 0.5 * (p[:-1, :, 1] + p[1:, :, 1])[ve]

    n_u, n_v = len(u_lo), len(v_lo)
    n_eq = n_u + n_v
    if n_eq == 0:
        raise ValueError("every pixel is masked; nothing to integrate")
    rows = np.repeat(np.arange(n_eq), 2)
    cols = np.empty(2 * n_eq, dtype=np.int64)
    data = np.empty(2 * n_eq)
    cols[0 : 2 * n_u : 2] = u_hi
    cols[1 : 2 * n_u : 2] = u_lo
    data[0 : 2 * n_u : 2] = w_px
    data[1 : 2 * n_u : 2] = -w_px
    cols[2 * n_u :: 2] = v_hi
    cols[2 * n_u + 1 :: 2] = v_lo
    data[2 * n_u :: 2] = h_px
    data[2 * n_u + 1 :: 2] = -h_px
    g_mat = sp.csr_matrix((data, (rows, cols)), shape=(n_eq, n_pix))
    b = np.concatenate([u_rhs, v_rhs])
    ata = (g_mat.T @ g_mat).tocsr()
    atb = g_mat.T @ b
    h_flat, info = spla.cg(ata, atb, rtol=tol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise SolverDiverged(f"normal integration CG stopped with info={info}")
    h_flat -= h_flat[ok.ravel()].mean()
    h_flat[~ok.ravel()] = 0.0
    residual = g_mat @ h_flat - b
    residual_norm = float(np.sqrt(np.mean(residual**2)))
    return IntegrationResult(
        Field2D(h_flat.reshape(h_px, w_px), normals.wrap_mode), residual_norm, masked
    )


def plaquette_circulation(p: Array) -> Array:
    """Independent integrability oracle: discrete circulation of a slope
    field around each 2x2 plaquette, divided by the plaquette area.

    Output shape (H-1, W-1). Agrees with the analytic curl for smooth
    fields and localizes seams exactly, without sharing the
    central-difference path of `curl_residual`.
    """
    p = np.asarray(p)
    h_px, w_px = p.shape[:2]
    du = 1.0 / w_px
    dv = 1.0 / h_px
    pu = p[..., 0]
    pv = p[..., 1]
    # trapezoid rule along each plaquette edge, counterclockwise in (u, v)
    bottom = 0.5 * (pu[:-1, :-1] + pu[:-1, 1:]) * du
    right = 0.5 * (pv[:-1, 1:] + pv[1:, 1:]) * dv
    top = -0.5 * (pu[1:, 1:] + pu[1:, :-1]) * du
    left = -0.5 * (pv[1:, :-1] + pv[:-1, :-1]) * dv
    return (bottom + right + top + left) / (du * dv)
