"""Reference implementations of the hot kernels.

``step_world`` advances the planar world by one physics substep; it is the
semantics anchor for the compiled extension, which must reproduce it
bit-for-bit (same expression order, same libm calls, float64 throughout).
``im2col``/``col2im`` are the data-movement halves of conv2d; the matrix
products themselves stay in BLAS on both backends.

State vector layout (float64):
  [0]      time
  [1:4]    gripper pose x, z, theta
  [4:7]    gripper velocity vx, vz, omega
  [7]      aperture
  [8]      grasped bottle index (-1.0 when free)
  [9:12]   grasped-bottle pose in the gripper frame (dx, dz, dtheta)
  [12:15]  raw wrist wrench fx, fz, ty (noise-free, planar channels)
  [15+6i:] bottle i: x, z, theta, vx, vz, omega

Params vector layout (float64):
  [0] dt            [1] gravity        [2] table_height   [3] table_edge_x
  [4] k_contact     [5] c_contact      [6] c_tangent      [7] kp_lin
  [8] kp_ang        [9] grip_mass      [10] grip_inertia  [11] aperture_rate
  [12] capture_r    [13] latch_margin  [14] release_margin[15] max_aperture
  [16] jaw_radius   [17] n_bottles
  [18+6i:] bottle i: half_height, half_width, mass, inertia, mu, damp_scale

Contact rows (float64, 10 columns):
  body_a, body_b, px, pz, nx, nz, penetration, f_normal, f_tangent, 0
  body codes: bottle index >= 0, table = -1, gripper tool = -2, ground = -3.
  (nx, nz) is the direction of the normal force applied to body_a; the
  tangential force acts along (nz, -nx).
"""

from __future__ import annotations

import math

import numpy as np

STATE_FIXED = 15
PARAMS_FIXED = 18
PER_BOTTLE = 6
MAX_CONTACTS = 32
CONTACT_COLS = 10

BODY_TABLE = -1.0
BODY_GRIPPER = -2.0
BODY_GROUND = -3.0


def state_size(n_bottles: int) -> int:
    return STATE_FIXED + PER_BOTTLE * n_bottles


def params_size(n_bottles: int) -> int:
    return PARAMS_FIXED + PER_BOTTLE * n_bottles


def _wrap_pi(a: float) -> float:
    r = math.fmod(a + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


def _seg_closest(
    ax: float, az: float, bx: float, bz: float,
    cx: float, cz: float, dx_: float, dz_: float,
) -> tuple[float, float, float, float]:
    """Closest points between segments AB and CD (2D).

    Straight port of the standard clamped-parameter method; branch structure
    must stay in sync with the compiled kernel.
    """
    ux = bx - ax
    uz = bz - az
    vx = dx_ - cx
    vz = dz_ - cz
    wx = ax - cx
    wz = az - cz
    a = ux * ux + uz * uz
    b = ux * vx + uz * vz
    c = vx * vx + vz * vz
    d = ux * wx + uz * wz
    e = vx * wx + vz * wz
    denom = a * c - b * b
    if denom > 1e-12:
        s = (b * e - c * d) / denom
    else:
        s = 0.0
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    if c > 1e-12:
        t = (b * s + e) / c
    else:
        t = 0.0
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    # re-project s against the clamped t
    if a > 1e-12:
        s = (b * t - d) / a
    else:
        s = 0.0
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    px = ax + s * ux
    pz = az + s * uz
    qx = cx + t * vx
    qz = cz + t * vz
    return px, pz, qx, qz


def step_world(
    state: np.ndarray,
    params: np.ndarray,
    cmd: np.ndarray,
    out_state: np.ndarray,
    out_contacts: np.ndarray,
) -> int:
    """One semi-implicit Euler substep. Returns the number of contact rows."""
    dt = params[0]
    gravity = params[1]
    table_h = params[2]
    table_edge = params[3]
    k_c = params[4]
    c_c = params[5]
    c_t = params[6]
    kp_lin = params[7]
    kp_ang = params[8]
    g_mass = params[9]
    g_inertia = params[10]
    ap_rate = params[11]
    capture_r = params[12]
    latch_margin = params[13]
    release_margin = params[14]
    max_ap = params[15]
    tool_r = params[16]
    n = int(params[17])

    t = state[0]
    gx = state[1]
    gz = state[2]
    gth = state[3]
    gvx = state[4]
    gvz = state[5]
    gw = state[6]
    ap = state[7]
    gidx = int(state[8])
    relx = state[9]
    relz = state[10]
    relth = state[11]

    # bottle scratch (python lists, fixed index math mirrors the C arrays)
    bx = [0.0] * n
    bz = [0.0] * n
    bth = [0.0] * n
    bvx = [0.0] * n
    bvz = [0.0] * n
    bw = [0.0] * n
    fx = [0.0] * n
    fz = [0.0] * n
    tq = [0.0] * n
    for i in range(n):
        o = STATE_FIXED + PER_BOTTLE * i
        bx[i] = state[o]
        bz[i] = state[o + 1]
        bth[i] = state[o + 2]
        bvx[i] = state[o + 3]
        bvz[i] = state[o + 4]
        bw[i] = state[o + 5]

    def b_par(i: int, j: int) -> float:
        return params[PARAMS_FIXED + PER_BOTTLE * i + j]

    # --- jaw servo and latch bookkeeping -------------------------------
    ap_cmd = cmd[3]
    d_ap = ap_cmd - ap
    lim = ap_rate * dt
    if d_ap > lim:
        d_ap = lim
    elif d_ap < -lim:
        d_ap = -lim
    ap_new = ap + d_ap
    if ap_new < 0.0:
        ap_new = 0.0
    elif ap_new > max_ap:
        ap_new = max_ap

    if gidx >= 0:
        width = 2.0 * b_par(gidx, 1)
        if ap_new >= width + release_margin:
            gidx = -1  # bottle keeps the kinematic velocity it already carries
        else:
            if ap_new < width:
                ap_new = width
    elif ap_cmd < ap:
        best = -1
        best_d = capture_r
        best_rel = (0.0, 0.0, 0.0)
        for i in range(n):
            hh = b_par(i, 0)
            hw = b_par(i, 1)
            width = 2.0 * hw
            if ap_new > width + latch_margin:
                continue
            axx = math.sin(bth[i])
            axz = math.cos(bth[i])
            span = hh - hw
            if span < 0.0:
                span = 0.0
            dx0 = gx - bx[i]
            dz0 = gz - bz[i]
            s = dx0 * axx + dz0 * axz
            if s > span:
                s = span
            elif s < -span:
                s = -span
            px = bx[i] + s * axx
            pz = bz[i] + s * axz
            ddx = gx - px
            ddz = gz - pz
            dist = math.sqrt(ddx * ddx + ddz * ddz)
            if dist < best_d:
                best_d = dist
                best = i
                cg = math.cos(gth)
                sg = math.sin(gth)
                dxw = bx[i] - gx
                dzw = bz[i] - gz
                # world -> gripper frame: R(-gth) * d
                best_rel = (
                    cg * dxw - sg * dzw,
                    sg * dxw + cg * dzw,
                    bth[i] - gth,
                )
        if best >= 0:
            gidx = best
            relx, relz, relth = best_rel
            width = 2.0 * b_par(best, 1)
            if ap_new < width:
                ap_new = width
            # grabbed bottle moves with the wrist from now on
            rx = bx[best] - gx
            rz = bz[best] - gz
            bvx[best] = gvx + gw * rz
            bvz[best] = gvz - gw * rx
            bw[best] = gw

    # --- contact forces -------------------------------------------------
    nc = 0

    def emit(a_id: float, b_id: float, px: float, pz: float, nx: float, nz: float,
             pen: float, fn: float, ft: float) -> None:
        nonlocal nc
        if nc < MAX_CONTACTS:
            row = out_contacts[nc]
            row[0] = a_id
            row[1] = b_id
            row[2] = px
            row[3] = pz
            row[4] = nx
            row[5] = nz
            row[6] = pen
            row[7] = fn
            row[8] = ft
            row[9] = 0.0
            nc += 1

    for i in range(n):
        hh = b_par(i, 0)
        hw = b_par(i, 1)
        mu = b_par(i, 4)
        damp = b_par(i, 5)
        c = math.cos(bth[i])
        s = math.sin(bth[i])
        # rectangle corners vs the table plane (x <= edge) and the ground
        for cu in (-1.0, 1.0):
            for cv in (-1.0, 1.0):
                ux = cu * hw
                vz = cv * hh
                # local (u, v) -> world via R(theta): (u*c + v*s, -u*s + v*c)
                cxw = bx[i] + ux * c + vz * s
                czw = bz[i] - ux * s + vz * c
                if cxw <= table_edge:
                    plane = table_h
                    body = BODY_TABLE
                else:
                    plane = 0.0
                    body = BODY_GROUND
                pen = plane - czw
                if pen <= 0.0:
                    continue
                rx = cxw - bx[i]
                rz = czw - bz[i]
                vpx = bvx[i] + bw[i] * rz
                vpz = bvz[i] - bw[i] * rx
                m = b_par(i, 2)
                inertia = b_par(i, 3)
                # damping coefficients are capped at the one-step critical value
                # for the contact's effective mass, which keeps the explicit
                # damper dissipative at this dt
                m_eff_n = 1.0 / (1.0 / m + (rx * rx) / inertia)
                m_eff_t = 1.0 / (1.0 / m + (rz * rz) / inertia)
                cap_n = 0.5 * m_eff_n / dt
                cap_t = 0.5 * m_eff_t / dt
                cn = c_c * damp
                if cn > cap_n:
                    cn = cap_n
                ct = c_t
                if ct > cap_t:
                    ct = cap_t
                fn = k_c * pen + cn * (-vpz)
                if fn < 0.0:
                    fn = 0.0
                ft = -ct * vpx
                cone = mu * fn
                if ft > cone:
                    ft = cone
                elif ft < -cone:
                    ft = -cone
                fx[i] += ft
                fz[i] += fn
                tq[i] += rz * ft - rx * fn
                emit(float(i), body, cxw, czw, 0.0, 1.0, pen, fn, ft)

    # bottle-bottle capsule contacts
    for i in range(n):
        hh_i = b_par(i, 0)
        hw_i = b_par(i, 1)
        ax_i = math.sin(bth[i])
        az_i = math.cos(bth[i])
        li = hh_i - hw_i
        for j in range(i + 1, n):
            hh_j = b_par(j, 0)
            hw_j = b_par(j, 1)
            ax_j = math.sin(bth[j])
            az_j = math.cos(bth[j])
            lj = hh_j - hw_j
            px, pz, qx, qz = _seg_closest(
                bx[i] - li * ax_i, bz[i] - li * az_i,
                bx[i] + li * ax_i, bz[i] + li * az_i,
                bx[j] - lj * ax_j, bz[j] - lj * az_j,
                bx[j] + lj * ax_j, bz[j] + lj * az_j,
            )
            dxc = px - qx
            dzc = pz - qz
            dist = math.sqrt(dxc * dxc + dzc * dzc)
            rsum = hw_i + hw_j
            if dist >= rsum or dist <= 1e-12:
                continue
            pen = rsum - dist
            nx = dxc / dist
            nz = dzc / dist
            mx = 0.5 * (px + qx)
            mz = 0.5 * (pz + qz)
            rxi = mx - bx[i]
            rzi = mz - bz[i]
            rxj = mx - bx[j]
            rzj = mz - bz[j]
            vix = bvx[i] + bw[i] * rzi
            viz = bvz[i] - bw[i] * rxi
            vjx = bvx[j] + bw[j] * rzj
            vjz = bvz[j] - bw[j] * rxj
            relvx = vix - vjx
            relvz = viz - vjz
            appr = -(relvx * nx + relvz * nz)
            damp = b_par(i, 5)
            dj = b_par(j, 5)
            if dj < damp:
                damp = dj
            tx = nz
            tz = -nx
            mi = b_par(i, 2)
            ii = b_par(i, 3)
            mjm = b_par(j, 2)
            ij = b_par(j, 3)
            cri_n = rxi * nz - rzi * nx
            crj_n = rxj * nz - rzj * nx
            cri_t = rxi * tz - rzi * tx
            crj_t = rxj * tz - rzj * tx
            m_eff_n = 1.0 / (1.0 / mi + cri_n * cri_n / ii + 1.0 / mjm + crj_n * crj_n / ij)
            m_eff_t = 1.0 / (1.0 / mi + cri_t * cri_t / ii + 1.0 / mjm + crj_t * crj_t / ij)
            cap_n = 0.5 * m_eff_n / dt
            cap_t = 0.5 * m_eff_t / dt
            cn = c_c * damp
            if cn > cap_n:
                cn = cap_n
            ct = c_t
            if ct > cap_t:
                ct = cap_t
            fn = k_c * pen + cn * appr
            if fn < 0.0:
                fn = 0.0
            vt = relvx * tx + relvz * tz
            ft = -ct * vt
            mu = b_par(i, 4)
            mj = b_par(j, 4)
            if mj < mu:
                mu = mj
            cone = mu * fn
            if ft > cone:
                ft = cone
            elif ft < -cone:
                ft = -cone
            fxc = fn * nx + ft * tx
            fzc = fn * nz + ft * tz
            fx[i] += fxc
            fz[i] += fzc
            tq[i] += rzi * fxc - rxi * fzc
            fx[j] -= fxc
            fz[j] -= fzc
            tq[j] -= rzj * fxc - rxj * fzc
            emit(float(i), float(j), mx, mz, nx, nz, pen, fn, ft)

    # jaw-tip discs push free bottles (one-way; the servo absorbs the reaction).
    # A disc only pushes a bottle whose nearest spine point lies on its outer
    # side (away from the tool center): bottles between the jaws are being
    # straddled out-of-plane, so descent, latch, and release stay kick-free.
    cgj = math.cos(gth)
    sgj = math.sin(gth)
    for side in (-1.0, 1.0):
        ju = side * (0.5 * ap_new + tool_r)
        jx = gx + ju * cgj + 0.01 * sgj
        jz = gz - ju * sgj + 0.01 * cgj
        jvx = gvx + gw * (jz - gz)
        jvz = gvz - gw * (jx - gx)
        for i in range(n):
            if i == gidx:
                continue
            hh = b_par(i, 0)
            hw = b_par(i, 1)
            axx = math.sin(bth[i])
            axz = math.cos(bth[i])
            span = hh - hw
            dx0 = jx - bx[i]
            dz0 = jz - bz[i]
            s = dx0 * axx + dz0 * axz
            if s > span:
                s = span
            elif s < -span:
                s = -span
            px = bx[i] + s * axx
            pz = bz[i] + s * axz
            if (px - jx) * (jx - gx) + (pz - jz) * (jz - gz) <= 0.0:
                continue
            ddx = px - jx
            ddz = pz - jz
            dist = math.sqrt(ddx * ddx + ddz * ddz)
            rsum = tool_r + hw
            if dist >= rsum or dist <= 1e-12:
                continue
            pen = rsum - dist
            nx = ddx / dist
            nz = ddz / dist
            rx = px - bx[i]
            rz = pz - bz[i]
            vpx = bvx[i] + bw[i] * rz
            vpz = bvz[i] - bw[i] * rx
            relvx = vpx - jvx
            relvz = vpz - jvz
            appr = -(relvx * nx + relvz * nz)
            tx = nz
            tz = -nx
            m = b_par(i, 2)
            inertia = b_par(i, 3)
            cr_n = rx * nz - rz * nx
            cr_t = rx * tz - rz * tx
            m_eff_n = 1.0 / (1.0 / m + cr_n * cr_n / inertia)
            m_eff_t = 1.0 / (1.0 / m + cr_t * cr_t / inertia)
            cap_n = 0.5 * m_eff_n / dt
            cap_t = 0.5 * m_eff_t / dt
            cn = c_c * b_par(i, 5)
            if cn > cap_n:
                cn = cap_n
            ct = c_t
            if ct > cap_t:
                ct = cap_t
            fn = k_c * pen + cn * appr
            if fn < 0.0:
                fn = 0.0
            vt = relvx * tx + relvz * tz
            ft = -ct * vt
            cone = b_par(i, 4) * fn
            if ft > cone:
                ft = cone
            elif ft < -cone:
                ft = -cone
            fxc = fn * nx + ft * tx
            fzc = fn * nz + ft * tz
            fx[i] += fxc
            fz[i] += fzc
            tq[i] += rz * fxc - rx * fzc
            emit(float(i), BODY_GRIPPER, px, pz, nx, nz, pen, fn, ft)

    # --- integrate free bottles -----------------------------------------
    for i in range(n):
        if i == gidx:
            continue
        m = b_par(i, 2)
        inertia = b_par(i, 3)
        bvx[i] = bvx[i] + dt * (fx[i] / m)
        bvz[i] = bvz[i] + dt * (fz[i] / m - gravity)
        bw[i] = bw[i] + dt * (tq[i] / inertia)
        bx[i] = bx[i] + dt * bvx[i]
        bz[i] = bz[i] + dt * bvz[i]
        bth[i] = bth[i] + dt * bw[i]

    # --- gripper servo (plus grasped bottle as one rigid assembly) ------
    wfx = 0.0
    wfz = 0.0
    wty = 0.0
    if gidx < 0:
        m_eff = g_mass
        i_eff = g_inertia
        kd = 2.0 * math.sqrt(kp_lin * m_eff)
        kd_a = 2.0 * math.sqrt(kp_ang * i_eff)
        acc_x = (kp_lin * (cmd[0] - gx) - kd * gvx) / m_eff
        acc_z = (kp_lin * (cmd[1] - gz) - kd * gvz) / m_eff
        alpha = (kp_ang * _wrap_pi(cmd[2] - gth) - kd_a * gw) / i_eff
        gvx = gvx + dt * acc_x
        gvz = gvz + dt * acc_z
        gw = gw + dt * alpha
        gx = gx + dt * gvx
        gz = gz + dt * gvz
        gth = gth + dt * gw
    else:
        m_b = b_par(gidx, 2)
        i_b = b_par(gidx, 3)
        rx = bx[gidx] - gx
        rz = bz[gidx] - gz
        m_eff = g_mass + m_b
        i_eff = g_inertia + i_b + m_b * (rx * rx + rz * rz)
        kd = 2.0 * math.sqrt(kp_lin * m_eff)
        kd_a = 2.0 * math.sqrt(kp_ang * i_eff)
        fcx = fx[gidx]
        fcz = fz[gidx]
        tc = tq[gidx]
        fx_tot = kp_lin * (cmd[0] - gx) - kd * gvx + fcx
        fz_tot = kp_lin * (cmd[1] - gz) - kd * gvz + fcz - m_b * gravity
        tau = (
            kp_ang * _wrap_pi(cmd[2] - gth) - kd_a * gw
            + tc
            + rz * fcx - rx * fcz
            + rx * m_b * gravity  # r x (0, -m g) about +y = -rx * (-m g)
        )
        acc_x = fx_tot / m_eff
        acc_z = fz_tot / m_eff
        alpha = tau / i_eff
        old_bvx = bvx[gidx]
        old_bvz = bvz[gidx]
        old_gw = gw
        gvx = gvx + dt * acc_x
        gvz = gvz + dt * acc_z
        gw = gw + dt * alpha
        gx = gx + dt * gvx
        gz = gz + dt * gvz
        gth = gth + dt * gw
        cg = math.cos(gth)
        sg = math.sin(gth)
        # gripper frame -> world: p + R(gth) * rel
        nbx = gx + relx * cg + relz * sg
        nbz = gz - relx * sg + relz * cg
        nrx = nbx - gx
        nrz = nbz - gz
        nbvx = gvx + gw * nrz
        nbvz = gvz - gw * nrx
        bx[gidx] = nbx
        bz[gidx] = nbz
        bth[gidx] = gth + relth
        bvx[gidx] = nbvx
        bvz[gidx] = nbvz
        bw[gidx] = gw
        # wrench: reaction of everything transmitted through the latch,
        # consistent with the discrete velocity update
        abx = (nbvx - old_bvx) / dt
        abz = (nbvz - old_bvz) / dt
        alpha_d = (gw - old_gw) / dt
        fgx = m_b * abx - fcx
        fgz = m_b * abz - (fcz - m_b * gravity)
        tau_g_com = i_b * alpha_d - tc
        tau_g = tau_g_com + nrz * fgx - nrx * fgz
        wfx = -fgx
        wfz = -fgz
        wty = -tau_g

    # --- pack ------------------------------------------------------------
    out_state[0] = t + dt
    out_state[1] = gx
    out_state[2] = gz
    out_state[3] = gth
    out_state[4] = gvx
    out_state[5] = gvz
    out_state[6] = gw
    out_state[7] = ap_new
    out_state[8] = float(gidx)
    out_state[9] = relx
    out_state[10] = relz
    out_state[11] = relth
    out_state[12] = wfx
    out_state[13] = wfz
    out_state[14] = wty
    for i in range(n):
        o = STATE_FIXED + PER_BOTTLE * i
        out_state[o] = bx[i]
        out_state[o + 1] = bz[i]
        out_state[o + 2] = bth[i]
        out_state[o + 3] = bvx[i]
        out_state[o + 4] = bvz[i]
        out_state[o + 5] = bw[i]
    return nc


def im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """(B, C, H, W) float32 -> (B*OH*OW, C*kh*kw) patch matrix (copy)."""
    b, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]  # (B, C, OH, OW, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(b * oh * ow, c * kh * kw)


def col2im(
    dcols: np.ndarray, b: int, c: int, h: int, w: int, kh: int, kw: int, sh: int, sw: int
) -> np.ndarray:
    """Scatter-add of the patch-matrix gradient back to (B, C, H, W)."""
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    dx = np.zeros((b, c, h, w), dtype=np.float32)
    d6 = dcols.reshape(b, oh, ow, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + oh * sh : sh, j : j + ow * sw : sw] += d6[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    return dx
