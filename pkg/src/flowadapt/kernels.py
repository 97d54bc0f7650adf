"""Hot per-face kernels for the 2D Euler model.

Every kernel exists twice: an ``_nb`` loop version compiled with numba and a
``_np`` vectorized numpy twin.  ``accel.maybe_compiled`` picks one pair member
at import time (env var ``FLOWADAPT_NUMBA=0`` forces the numpy path).  The two
paths must agree to rounding; tests/test_kernels.py checks that, and
benchmarks/bench_kernels.py times them against each other.

State layout: conserved variables (rho, rho*u, rho*v, E) in rows of an
(m, 4) array; face normals as separate (m,) components, assumed unit length.
"""

import math

import numpy as np

from .accel import njit, maybe_compiled

# ---------------------------------------------------------------------------
# flux and Jacobian


@njit(cache=True)
def _flux_nb(U, nx, ny, gamma):
    m = U.shape[0]
    F = np.empty((m, 4))
    g1 = gamma - 1.0
    for i in range(m):
        rho = U[i, 0]
        u = U[i, 1] / rho
        v = U[i, 2] / rho
        E = U[i, 3]
        p = g1 * (E - 0.5 * rho * (u * u + v * v))
        vn = u * nx[i] + v * ny[i]
        F[i, 0] = rho * vn
        F[i, 1] = U[i, 1] * vn + p * nx[i]
        F[i, 2] = U[i, 2] * vn + p * ny[i]
        F[i, 3] = (E + p) * vn
    return F


def _flux_np(U, nx, ny, gamma):
    g1 = gamma - 1.0
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    E = U[:, 3]
    p = g1 * (E - 0.5 * rho * (u * u + v * v))
    vn = u * nx + v * ny
    F = np.empty_like(U)
    F[:, 0] = rho * vn
    F[:, 1] = U[:, 1] * vn + p * nx
    F[:, 2] = U[:, 2] * vn + p * ny
    F[:, 3] = (E + p) * vn
    return F


@njit(cache=True)
def _jacobian_nb(U, nx, ny, gamma):
    m = U.shape[0]
    A = np.empty((m, 4, 4))
    g1 = gamma - 1.0
    for i in range(m):
        rho = U[i, 0]
        u = U[i, 1] / rho
        v = U[i, 2] / rho
        E = U[i, 3]
        q2 = u * u + v * v
        p = g1 * (E - 0.5 * rho * q2)
        H = (E + p) / rho
        cnx = nx[i]
        cny = ny[i]
        vn = u * cnx + v * cny
        A[i, 0, 0] = 0.0
        A[i, 0, 1] = cnx
        A[i, 0, 2] = cny
        A[i, 0, 3] = 0.0
        A[i, 1, 0] = -u * vn + 0.5 * g1 * q2 * cnx
        A[i, 1, 1] = vn + u * cnx - g1 * u * cnx
        A[i, 1, 2] = u * cny - g1 * v * cnx
        A[i, 1, 3] = g1 * cnx
        A[i, 2, 0] = -v * vn + 0.5 * g1 * q2 * cny
        A[i, 2, 1] = v * cnx - g1 * u * cny
        A[i, 2, 2] = vn + v * cny - g1 * v * cny
        A[i, 2, 3] = g1 * cny
        A[i, 3, 0] = (0.5 * g1 * q2 - H) * vn
        A[i, 3, 1] = H * cnx - g1 * u * vn
        A[i, 3, 2] = H * cny - g1 * v * vn
        A[i, 3, 3] = gamma * vn
    return A


def _jacobian_np(U, nx, ny, gamma):
    g1 = gamma - 1.0
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    E = U[:, 3]
    q2 = u * u + v * v
    p = g1 * (E - 0.5 * rho * q2)
    H = (E + p) / rho
    vn = u * nx + v * ny
    A = np.empty((U.shape[0], 4, 4))
    A[:, 0, 0] = 0.0
    A[:, 0, 1] = nx
    A[:, 0, 2] = ny
    A[:, 0, 3] = 0.0
    A[:, 1, 0] = -u * vn + 0.5 * g1 * q2 * nx
    A[:, 1, 1] = vn + u * nx - g1 * u * nx
    A[:, 1, 2] = u * ny - g1 * v * nx
    A[:, 1, 3] = g1 * nx
    A[:, 2, 0] = -v * vn + 0.5 * g1 * q2 * ny
    A[:, 2, 1] = v * nx - g1 * u * ny
    A[:, 2, 2] = vn + v * ny - g1 * v * ny
    A[:, 2, 3] = g1 * ny
    A[:, 3, 0] = (0.5 * g1 * q2 - H) * vn
    A[:, 3, 1] = H * nx - g1 * u * vn
    A[:, 3, 2] = H * ny - g1 * v * vn
    A[:, 3, 3] = gamma * vn
    return A


# ---------------------------------------------------------------------------
# eigensystem: A = R diag(lam) L with analytic L = R^{-1}


@njit(cache=True)
def _eigensystem_nb(U, nx, ny, gamma):
    m = U.shape[0]
    lam = np.empty((m, 4))
    R = np.empty((m, 4, 4))
    L = np.empty((m, 4, 4))
    g1 = gamma - 1.0
    for i in range(m):
        rho = U[i, 0]
        u = U[i, 1] / rho
        v = U[i, 2] / rho
        E = U[i, 3]
        q2 = u * u + v * v
        p = g1 * (E - 0.5 * rho * q2)
        H = (E + p) / rho
        c = math.sqrt(g1 * (H - 0.5 * q2))
        cnx = nx[i]
        cny = ny[i]
        tx = -cny
        ty = cnx
        vn = u * cnx + v * cny
        vt = u * tx + v * ty
        lam[i, 0] = vn - c
        lam[i, 1] = vn
        lam[i, 2] = vn
        lam[i, 3] = vn + c
        R[i, 0, 0] = 1.0
        R[i, 1, 0] = u - c * cnx
        R[i, 2, 0] = v - c * cny
        R[i, 3, 0] = H - c * vn
        R[i, 0, 1] = 1.0
        R[i, 1, 1] = u
        R[i, 2, 1] = v
        R[i, 3, 1] = 0.5 * q2
        R[i, 0, 2] = 0.0
        R[i, 1, 2] = tx
        R[i, 2, 2] = ty
        R[i, 3, 2] = vt
        R[i, 0, 3] = 1.0
        R[i, 1, 3] = u + c * cnx
        R[i, 2, 3] = v + c * cny
        R[i, 3, 3] = H + c * vn
        b1 = g1 / (c * c)
        b2 = 0.5 * b1 * q2
        L[i, 0, 0] = 0.5 * (b2 + vn / c)
        L[i, 0, 1] = 0.5 * (-b1 * u - cnx / c)
        L[i, 0, 2] = 0.5 * (-b1 * v - cny / c)
        L[i, 0, 3] = 0.5 * b1
        L[i, 1, 0] = 1.0 - b2
        L[i, 1, 1] = b1 * u
        L[i, 1, 2] = b1 * v
        L[i, 1, 3] = -b1
        L[i, 2, 0] = -vt
        L[i, 2, 1] = tx
        L[i, 2, 2] = ty
        L[i, 2, 3] = 0.0
        L[i, 3, 0] = 0.5 * (b2 - vn / c)
        L[i, 3, 1] = 0.5 * (-b1 * u + cnx / c)
        L[i, 3, 2] = 0.5 * (-b1 * v + cny / c)
        L[i, 3, 3] = 0.5 * b1
    return lam, R, L


def _eigensystem_np(U, nx, ny, gamma):
    m = U.shape[0]
    g1 = gamma - 1.0
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    E = U[:, 3]
    q2 = u * u + v * v
    p = g1 * (E - 0.5 * rho * q2)
    H = (E + p) / rho
    c = np.sqrt(g1 * (H - 0.5 * q2))
    tx = -ny
    ty = nx
    vn = u * nx + v * ny
    vt = u * tx + v * ty
    lam = np.stack([vn - c, vn, vn, vn + c], axis=1)
    R = np.zeros((m, 4, 4))
    R[:, 0, 0] = 1.0
    R[:, 1, 0] = u - c * nx
    R[:, 2, 0] = v - c * ny
    R[:, 3, 0] = H - c * vn
    R[:, 0, 1] = 1.0
    R[:, 1, 1] = u
    R[:, 2, 1] = v
    R[:, 3, 1] = 0.5 * q2
    R[:, 1, 2] = tx
    R[:, 2, 2] = ty
    R[:, 3, 2] = vt
    R[:, 0, 3] = 1.0
    R[:, 1, 3] = u + c * nx
    R[:, 2, 3] = v + c * ny
    R[:, 3, 3] = H + c * vn
    b1 = g1 / (c * c)
    b2 = 0.5 * b1 * q2
    L = np.zeros((m, 4, 4))
    L[:, 0, 0] = 0.5 * (b2 + vn / c)
    L[:, 0, 1] = 0.5 * (-b1 * u - nx / c)
    L[:, 0, 2] = 0.5 * (-b1 * v - ny / c)
    L[:, 0, 3] = 0.5 * b1
    L[:, 1, 0] = 1.0 - b2
    L[:, 1, 1] = b1 * u
    L[:, 1, 2] = b1 * v
    L[:, 1, 3] = -b1
    L[:, 2, 0] = -vt
    L[:, 2, 1] = tx
    L[:, 2, 2] = ty
    L[:, 3, 0] = 0.5 * (b2 - vn / c)
    L[:, 3, 1] = 0.5 * (-b1 * u + nx / c)
    L[:, 3, 2] = 0.5 * (-b1 * v + ny / c)
    L[:, 3, 3] = 0.5 * b1
    return lam, R, L


# ---------------------------------------------------------------------------
# Roe flux with Harten entropy fix


@njit(cache=True, inline="always")
def _harten(lam_abs, lam, delta):
    if lam_abs < delta:
        return 0.5 * (lam * lam / delta + delta)
    return lam_abs


@njit(cache=True)
def _roe_flux_nb(UL, UR, nx, ny, gamma, fix_coef):
    m = UL.shape[0]
    F = np.empty((m, 4))
    g1 = gamma - 1.0
    for i in range(m):
        cnx = nx[i]
        cny = ny[i]
        tx = -cny
        ty = cnx
        rL = UL[i, 0]
        uL = UL[i, 1] / rL
        vL = UL[i, 2] / rL
        EL = UL[i, 3]
        pL = g1 * (EL - 0.5 * rL * (uL * uL + vL * vL))
        HL = (EL + pL) / rL
        rR = UR[i, 0]
        uR = UR[i, 1] / rR
        vR = UR[i, 2] / rR
        ER = UR[i, 3]
        pR = g1 * (ER - 0.5 * rR * (uR * uR + vR * vR))
        HR = (ER + pR) / rR
        sL = math.sqrt(rL)
        sR = math.sqrt(rR)
        w = sL / (sL + sR)
        uh = w * uL + (1.0 - w) * uR
        vh = w * vL + (1.0 - w) * vR
        Hh = w * HL + (1.0 - w) * HR
        rh = sL * sR
        q2h = uh * uh + vh * vh
        ch = math.sqrt(g1 * (Hh - 0.5 * q2h))
        vnh = uh * cnx + vh * cny
        vth = uh * tx + vh * ty
        drho = rR - rL
        dp = pR - pL
        dvn = (uR - uL) * cnx + (vR - vL) * cny
        dvt = (uR - uL) * tx + (vR - vL) * ty
        a1 = 0.5 * (dp - rh * ch * dvn) / (ch * ch)
        a2 = drho - dp / (ch * ch)
        a3 = rh * dvt
        a4 = 0.5 * (dp + rh * ch * dvn) / (ch * ch)
        l1 = abs(vnh - ch)
        l2 = abs(vnh)
        l4 = abs(vnh + ch)
        if fix_coef > 0.0:
            delta = fix_coef * (abs(vnh) + ch)
            l1 = _harten(l1, vnh - ch, delta)
            l2 = _harten(l2, vnh, delta)
            l4 = _harten(l4, vnh + ch, delta)
        vnL = uL * cnx + vL * cny
        vnR = uR * cnx + vR * cny
        # central part 0.5 (F(UL) + F(UR))
        F0 = 0.5 * (rL * vnL + rR * vnR)
        F1 = 0.5 * (UL[i, 1] * vnL + pL * cnx + UR[i, 1] * vnR + pR * cnx)
        F2 = 0.5 * (UL[i, 2] * vnL + pL * cny + UR[i, 2] * vnR + pR * cny)
        F3 = 0.5 * ((EL + pL) * vnL + (ER + pR) * vnR)
        # dissipation 0.5 sum alpha_k |lam_k| r_k
        F0 -= 0.5 * (a1 * l1 + a2 * l2 + a4 * l4)
        F1 -= 0.5 * (
            a1 * l1 * (uh - ch * cnx)
            + a2 * l2 * uh
            + a3 * l2 * tx
            + a4 * l4 * (uh + ch * cnx)
        )
        F2 -= 0.5 * (
            a1 * l1 * (vh - ch * cny)
            + a2 * l2 * vh
            + a3 * l2 * ty
            + a4 * l4 * (vh + ch * cny)
        )
        F3 -= 0.5 * (
            a1 * l1 * (Hh - ch * vnh)
            + a2 * l2 * 0.5 * q2h
            + a3 * l2 * vth
            + a4 * l4 * (Hh + ch * vnh)
        )
        F[i, 0] = F0
        F[i, 1] = F1
        F[i, 2] = F2
        F[i, 3] = F3
    return F


def _roe_flux_np(UL, UR, nx, ny, gamma, fix_coef):
    g1 = gamma - 1.0
    tx = -ny
    ty = nx
    rL = UL[:, 0]
    uL = UL[:, 1] / rL
    vL = UL[:, 2] / rL
    EL = UL[:, 3]
    pL = g1 * (EL - 0.5 * rL * (uL * uL + vL * vL))
    HL = (EL + pL) / rL
    rR = UR[:, 0]
    uR = UR[:, 1] / rR
    vR = UR[:, 2] / rR
    ER = UR[:, 3]
    pR = g1 * (ER - 0.5 * rR * (uR * uR + vR * vR))
    HR = (ER + pR) / rR
    sL = np.sqrt(rL)
    sR = np.sqrt(rR)
    w = sL / (sL + sR)
    uh = w * uL + (1.0 - w) * uR
    vh = w * vL + (1.0 - w) * vR
    Hh = w * HL + (1.0 - w) * HR
    rh = sL * sR
    q2h = uh * uh + vh * vh
    ch = np.sqrt(g1 * (Hh - 0.5 * q2h))
    vnh = uh * nx + vh * ny
    vth = uh * tx + vh * ty
    drho = rR - rL
    dp = pR - pL
    dvn = (uR - uL) * nx + (vR - vL) * ny
    dvt = (uR - uL) * tx + (vR - vL) * ty
    ch2 = ch * ch
    a1 = 0.5 * (dp - rh * ch * dvn) / ch2
    a2 = drho - dp / ch2
    a3 = rh * dvt
    a4 = 0.5 * (dp + rh * ch * dvn) / ch2
    lam1 = vnh - ch
    lam2 = vnh
    lam4 = vnh + ch
    l1 = np.abs(lam1)
    l2 = np.abs(lam2)
    l4 = np.abs(lam4)
    if fix_coef > 0.0:
        delta = fix_coef * (np.abs(vnh) + ch)
        l1 = np.where(l1 < delta, 0.5 * (lam1 * lam1 / delta + delta), l1)
        l2 = np.where(l2 < delta, 0.5 * (lam2 * lam2 / delta + delta), l2)
        l4 = np.where(l4 < delta, 0.5 * (lam4 * lam4 / delta + delta), l4)
    vnL = uL * nx + vL * ny
    vnR = uR * nx + vR * ny
    F = np.empty_like(UL)
    F[:, 0] = 0.5 * (rL * vnL + rR * vnR) - 0.5 * (a1 * l1 + a2 * l2 + a4 * l4)
    F[:, 1] = 0.5 * (UL[:, 1] * vnL + pL * nx + UR[:, 1] * vnR + pR * nx) - 0.5 * (
        a1 * l1 * (uh - ch * nx) + a2 * l2 * uh + a3 * l2 * tx + a4 * l4 * (uh + ch * nx)
    )
    F[:, 2] = 0.5 * (UL[:, 2] * vnL + pL * ny + UR[:, 2] * vnR + pR * ny) - 0.5 * (
        a1 * l1 * (vh - ch * ny) + a2 * l2 * vh + a3 * l2 * ty + a4 * l4 * (vh + ch * ny)
    )
    F[:, 3] = 0.5 * ((EL + pL) * vnL + (ER + pR) * vnR) - 0.5 * (
        a1 * l1 * (Hh - ch * vnh)
        + a2 * l2 * 0.5 * q2h
        + a3 * l2 * vth
        + a4 * l4 * (Hh + ch * vnh)
    )
    return F


# ---------------------------------------------------------------------------
# frozen-|A| flux linearization: dF/dUL = 0.5 A(UL) + 0.5 |A_roe|,
# dF/dUR = 0.5 A(UR) - 0.5 |A_roe|


@njit(cache=True)
def _abs_roe_blocks_nb(UL, UR, nx, ny, gamma, fix_coef):
    m = UL.shape[0]
    B = np.empty((m, 4, 4))
    g1 = gamma - 1.0
    for i in range(m):
        cnx = nx[i]
        cny = ny[i]
        tx = -cny
        ty = cnx
        rL = UL[i, 0]
        uL = UL[i, 1] / rL
        vL = UL[i, 2] / rL
        pL = g1 * (UL[i, 3] - 0.5 * rL * (uL * uL + vL * vL))
        HL = (UL[i, 3] + pL) / rL
        rR = UR[i, 0]
        uR = UR[i, 1] / rR
        vR = UR[i, 2] / rR
        pR = g1 * (UR[i, 3] - 0.5 * rR * (uR * uR + vR * vR))
        HR = (UR[i, 3] + pR) / rR
        sL = math.sqrt(rL)
        sR = math.sqrt(rR)
        w = sL / (sL + sR)
        u = w * uL + (1.0 - w) * uR
        v = w * vL + (1.0 - w) * vR
        H = w * HL + (1.0 - w) * HR
        q2 = u * u + v * v
        c = math.sqrt(g1 * (H - 0.5 * q2))
        vn = u * cnx + v * cny
        vt = u * tx + v * ty
        l1 = abs(vn - c)
        l2 = abs(vn)
        l4 = abs(vn + c)
        if fix_coef > 0.0:
            delta = fix_coef * (abs(vn) + c)
            l1 = _harten(l1, vn - c, delta)
            l2 = _harten(l2, vn, delta)
            l4 = _harten(l4, vn + c, delta)
        b1 = g1 / (c * c)
        b2 = 0.5 * b1 * q2
        # |A| = R diag(|lam|) L, rebuilt from the analytic eigenvectors
        for col in range(4):
            if col == 0:
                e0, e1, e2, e3 = 1.0, 0.0, 0.0, 0.0
            elif col == 1:
                e0, e1, e2, e3 = 0.0, 1.0, 0.0, 0.0
            elif col == 2:
                e0, e1, e2, e3 = 0.0, 0.0, 1.0, 0.0
            else:
                e0, e1, e2, e3 = 0.0, 0.0, 0.0, 1.0
            k1 = 0.5 * (b2 + vn / c) * e0 + 0.5 * (-b1 * u - cnx / c) * e1 + 0.5 * (
                -b1 * v - cny / c
            ) * e2 + 0.5 * b1 * e3
            k2 = (1.0 - b2) * e0 + b1 * u * e1 + b1 * v * e2 - b1 * e3
            k3 = -vt * e0 + tx * e1 + ty * e2
            k4 = 0.5 * (b2 - vn / c) * e0 + 0.5 * (-b1 * u + cnx / c) * e1 + 0.5 * (
                -b1 * v + cny / c
            ) * e2 + 0.5 * b1 * e3
            k1 *= l1
            k2 *= l2
            k3 *= l2
            k4 *= l4
            B[i, 0, col] = k1 + k2 + k4
            B[i, 1, col] = (
                k1 * (u - c * cnx) + k2 * u + k3 * tx + k4 * (u + c * cnx)
            )
            B[i, 2, col] = (
                k1 * (v - c * cny) + k2 * v + k3 * ty + k4 * (v + c * cny)
            )
            B[i, 3, col] = (
                k1 * (H - c * vn) + k2 * 0.5 * q2 + k3 * vt + k4 * (H + c * vn)
            )
    return B


def _abs_roe_blocks_np(UL, UR, nx, ny, gamma, fix_coef):
    g1 = gamma - 1.0
    rL = UL[:, 0]
    uL = UL[:, 1] / rL
    vL = UL[:, 2] / rL
    pL = g1 * (UL[:, 3] - 0.5 * rL * (uL * uL + vL * vL))
    HL = (UL[:, 3] + pL) / rL
    rR = UR[:, 0]
    uR = UR[:, 1] / rR
    vR = UR[:, 2] / rR
    pR = g1 * (UR[:, 3] - 0.5 * rR * (uR * uR + vR * vR))
    HR = (UR[:, 3] + pR) / rR
    sL = np.sqrt(rL)
    sR = np.sqrt(rR)
    w = sL / (sL + sR)
    u = w * uL + (1.0 - w) * uR
    v = w * vL + (1.0 - w) * vR
    H = w * HL + (1.0 - w) * HR
    rh = sL * sR
    q2 = u * u + v * v
    c = np.sqrt(g1 * (H - 0.5 * q2))
    # conserved pseudo-state reproducing the Roe-averaged (u, v, H): E = rho H - p
    E = rh * H - rh * c * c / gamma
    Uh = np.stack([rh, rh * u, rh * v, E], axis=1)
    lam, R, L = _eigensystem_np(Uh, nx, ny, gamma)
    la = np.abs(lam)
    if fix_coef > 0.0:
        vn = u * nx + v * ny
        delta = fix_coef * (np.abs(vn) + c)[:, None]
        la = np.where(la < delta, 0.5 * (lam * lam / delta + delta), la)
    return np.einsum("mij,mj,mjk->mik", R, la, L)


@njit(cache=True)
def _face_jacobians_nb(UL, UR, nx, ny, gamma, fix_coef):
    B = _abs_roe_blocks_nb(UL, UR, nx, ny, gamma, fix_coef)
    AL = _jacobian_nb(UL, nx, ny, gamma)
    AR = _jacobian_nb(UR, nx, ny, gamma)
    m = UL.shape[0]
    DL = np.empty((m, 4, 4))
    DR = np.empty((m, 4, 4))
    for i in range(m):
        for r in range(4):
            for s in range(4):
                DL[i, r, s] = 0.5 * (AL[i, r, s] + B[i, r, s])
                DR[i, r, s] = 0.5 * (AR[i, r, s] - B[i, r, s])
    return DL, DR


def _face_jacobians_np(UL, UR, nx, ny, gamma, fix_coef):
    B = _abs_roe_blocks_np(UL, UR, nx, ny, gamma, fix_coef)
    AL = _jacobian_np(UL, nx, ny, gamma)
    AR = _jacobian_np(UR, nx, ny, gamma)
    return 0.5 * (AL + B), 0.5 * (AR - B)


# ---------------------------------------------------------------------------
# boundary fluxes


@njit(cache=True)
def _wall_flux_nb(U, nx, ny, gamma):
    m = U.shape[0]
    F = np.zeros((m, 4))
    g1 = gamma - 1.0
    for i in range(m):
        rho = U[i, 0]
        u = U[i, 1] / rho
        v = U[i, 2] / rho
        p = g1 * (U[i, 3] - 0.5 * rho * (u * u + v * v))
        F[i, 1] = p * nx[i]
        F[i, 2] = p * ny[i]
    return F


def _wall_flux_np(U, nx, ny, gamma):
    g1 = gamma - 1.0
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    p = g1 * (U[:, 3] - 0.5 * rho * (u * u + v * v))
    F = np.zeros_like(U)
    F[:, 1] = p * nx
    F[:, 2] = p * ny
    return F


@njit(cache=True)
def _wall_jacobian_nb(U, nx, ny, gamma):
    m = U.shape[0]
    D = np.zeros((m, 4, 4))
    g1 = gamma - 1.0
    for i in range(m):
        rho = U[i, 0]
        u = U[i, 1] / rho
        v = U[i, 2] / rho
        q2 = u * u + v * v
        # dp/dU = g1 (q2/2, -u, -v, 1)
        D[i, 1, 0] = g1 * 0.5 * q2 * nx[i]
        D[i, 1, 1] = -g1 * u * nx[i]
        D[i, 1, 2] = -g1 * v * nx[i]
        D[i, 1, 3] = g1 * nx[i]
        D[i, 2, 0] = g1 * 0.5 * q2 * ny[i]
        D[i, 2, 1] = -g1 * u * ny[i]
        D[i, 2, 2] = -g1 * v * ny[i]
        D[i, 2, 3] = g1 * ny[i]
    return D


def _wall_jacobian_np(U, nx, ny, gamma):
    g1 = gamma - 1.0
    rho = U[:, 0]
    u = U[:, 1] / rho
    v = U[:, 2] / rho
    q2 = u * u + v * v
    D = np.zeros((U.shape[0], 4, 4))
    dp = np.stack([0.5 * g1 * q2, -g1 * u, -g1 * v, np.full_like(u, g1)], axis=1)
    D[:, 1, :] = dp * nx[:, None]
    D[:, 2, :] = dp * ny[:, None]
    return D


@njit(cache=True)
def _farfield_flux_nb(U, Uext, nx, ny, gamma):
    lam, R, L = _eigensystem_nb(U, nx, ny, gamma)
    fi = _flux_nb(U, nx, ny, gamma)
    fe = _flux_nb(Uext, nx, ny, gamma)
    m = U.shape[0]
    F = np.empty((m, 4))
    for i in range(m):
        for r in range(4):
            acc = 0.0
            for k in range(4):
                wk = 0.0
                for s in range(4):
                    if lam[i, k] >= 0.0:
                        wk += L[i, k, s] * fi[i, s]
                    else:
                        wk += L[i, k, s] * fe[i, s]
                acc += R[i, r, k] * wk
            F[i, r] = acc
    return F


def _farfield_flux_np(U, Uext, nx, ny, gamma):
    lam, R, L = _eigensystem_np(U, nx, ny, gamma)
    fi = _flux_np(U, nx, ny, gamma)
    fe = _flux_np(Uext, nx, ny, gamma)
    wi = np.einsum("mks,ms->mk", L, fi)
    we = np.einsum("mks,ms->mk", L, fe)
    wk = np.where(lam >= 0.0, wi, we)
    return np.einsum("mrk,mk->mr", R, wk)


@njit(cache=True)
def _farfield_jacobian_nb(U, nx, ny, gamma):
    # frozen projectors: d/dU_int [P+ f(U_int)] ~= A+ = R diag(max(lam,0)) L
    lam, R, L = _eigensystem_nb(U, nx, ny, gamma)
    m = U.shape[0]
    D = np.empty((m, 4, 4))
    for i in range(m):
        for r in range(4):
            for s in range(4):
                acc = 0.0
                for k in range(4):
                    lk = lam[i, k]
                    if lk > 0.0:
                        acc += R[i, r, k] * lk * L[i, k, s]
                D[i, r, s] = acc
    return D


def _farfield_jacobian_np(U, nx, ny, gamma):
    lam, R, L = _eigensystem_np(U, nx, ny, gamma)
    return np.einsum("mrk,mk,mks->mrs", R, np.maximum(lam, 0.0), L)


# ---------------------------------------------------------------------------
# generic gather/scatter helpers for residual and matvec assembly


@njit(cache=True)
def _scatter_add_nb(out, idx, vals):
    n = idx.shape[0]
    k = vals.shape[1]
    for i in range(n):
        j = idx[i]
        for s in range(k):
            out[j, s] += vals[i, s]
    return out


def _scatter_add_np(out, idx, vals):
    np.add.at(out, idx, vals)
    return out


@njit(cache=True)
def _apply_blocks_nb(B, v):
    m = B.shape[0]
    k = B.shape[1]
    out = np.empty((m, k))
    for i in range(m):
        for r in range(k):
            acc = 0.0
            for s in range(k):
                acc += B[i, r, s] * v[i, s]
            out[i, r] = acc
    return out


def _apply_blocks_np(B, v):
    return np.einsum("mrs,ms->mr", B, v)


euler_flux = maybe_compiled(_flux_nb, _flux_np)
euler_jacobian = maybe_compiled(_jacobian_nb, _jacobian_np)
euler_eigensystem = maybe_compiled(_eigensystem_nb, _eigensystem_np)
roe_flux_faces = maybe_compiled(_roe_flux_nb, _roe_flux_np)
abs_roe_blocks = maybe_compiled(_abs_roe_blocks_nb, _abs_roe_blocks_np)
face_jacobians = maybe_compiled(_face_jacobians_nb, _face_jacobians_np)
wall_flux_faces = maybe_compiled(_wall_flux_nb, _wall_flux_np)
wall_jacobian_faces = maybe_compiled(_wall_jacobian_nb, _wall_jacobian_np)
farfield_flux_faces = maybe_compiled(_farfield_flux_nb, _farfield_flux_np)
farfield_jacobian_faces = maybe_compiled(_farfield_jacobian_nb, _farfield_jacobian_np)
scatter_add = maybe_compiled(_scatter_add_nb, _scatter_add_np)
apply_blocks = maybe_compiled(_apply_blocks_nb, _apply_blocks_np)
