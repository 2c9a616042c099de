# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: physics substep and conv2d patch movement.

Line-for-line port of pyref.py; arithmetic must stay bit-identical to the
reference (same expression order, same libm calls, no FMA contraction), so
any change here must be mirrored there and re-checked by the parity tests.
"""

from libc.math cimport cos, fmod, sin, sqrt

import numpy as np

STATE_FIXED = 15
PARAMS_FIXED = 18
PER_BOTTLE = 6
MAX_CONTACTS = 32
CONTACT_COLS = 10

cdef double BODY_TABLE = -1.0
cdef double BODY_GRIPPER = -2.0
cdef double BODY_GROUND = -3.0


cdef inline double _wrap_pi(double a) noexcept:
    cdef double r = fmod(a + 3.141592653589793, 2.0 * 3.141592653589793)
    if r <= 0.0:
        r += 2.0 * 3.141592653589793
    return r - 3.141592653589793


cdef inline int _emit(double[:, ::1] out_contacts, int nc,
                      double a_id, double b_id, double px, double pz,
                      double nx, double nz, double pen, double fn, double ft) noexcept:
    if nc < 32:
        out_contacts[nc, 0] = a_id
        out_contacts[nc, 1] = b_id
        out_contacts[nc, 2] = px
        out_contacts[nc, 3] = pz
        out_contacts[nc, 4] = nx
        out_contacts[nc, 5] = nz
        out_contacts[nc, 6] = pen
        out_contacts[nc, 7] = fn
        out_contacts[nc, 8] = ft
        out_contacts[nc, 9] = 0.0
        return nc + 1
    return nc


def step_world(double[::1] state, double[::1] params, double[::1] cmd,
               double[::1] out_state, double[:, ::1] out_contacts):
    cdef double dt = params[0]
    cdef double gravity = params[1]
    cdef double table_h = params[2]
    cdef double table_edge = params[3]
    cdef double k_c = params[4]
    cdef double c_c = params[5]
    cdef double c_t = params[6]
    cdef double kp_lin = params[7]
    cdef double kp_ang = params[8]
    cdef double g_mass = params[9]
    cdef double g_inertia = params[10]
    cdef double ap_rate = params[11]
    cdef double capture_r = params[12]
    cdef double latch_margin = params[13]
    cdef double release_margin = params[14]
    cdef double max_ap = params[15]
    cdef double tool_r = params[16]
    cdef int n = <int>params[17]

    cdef double t = state[0]
    cdef double gx = state[1]
    cdef double gz = state[2]
    cdef double gth = state[3]
    cdef double gvx = state[4]
    cdef double gvz = state[5]
    cdef double gw = state[6]
    cdef double ap = state[7]
    cdef int gidx = <int>state[8]
    cdef double relx = state[9]
    cdef double relz = state[10]
    cdef double relth = state[11]

    cdef double bx[16]
    cdef double bz[16]
    cdef double bth[16]
    cdef double bvx[16]
    cdef double bvz[16]
    cdef double bw[16]
    cdef double fx[16]
    cdef double fz[16]
    cdef double tq[16]
    cdef int i, j, o, nc, best, ci, cj, side_i, low_idx
    cdef double ap_cmd, d_ap, lim, ap_new, width, best_d
    cdef double best_rel0 = 0.0, best_rel1 = 0.0, best_rel2 = 0.0
    cdef double hh, hw, mu, damp, c, s, ux, vz, cxw, czw, plane, body, pen
    cdef double rx, rz, vpx, vpz, m, inertia, m_eff_n, m_eff_t, cap_n, cap_t
    cdef double cn, ct, fn, ft, cone, vt, axx, axz, span, dx0, dz0, s_, px, pz
    cdef double ddx, ddz, dist, rsum, nx, nz, cg, sg, dxw, dzw
    cdef double hh_i, hw_i, ax_i, az_i, li, hh_j, hw_j, ax_j, az_j, lj
    cdef double p1x, p1z, q1x, q1z, dxc, dzc, mx, mz, rxi, rzi, rxj, rzj
    cdef double vix, viz, vjx, vjz, relvx, relvz, appr, tx, tz, mi, ii, mjm, ij
    cdef double cri_n, crj_n, cri_t, crj_t, dj, mj, fxc, fzc
    cdef double cgj, sgj, ju, jx, jz, jvx, jvz, side
    cdef double m_eff, i_eff, kd, kd_a, acc_x, acc_z, alpha
    cdef double m_b, i_b, fcx, fcz, tc, fx_tot, fz_tot, tau
    cdef double old_bvx, old_bvz, old_gw, nbx, nbz, nrx, nrz, nbvx, nbvz
    cdef double abx, abz, alpha_d, fgx, fgz, tau_g_com, tau_g
    cdef double wfx = 0.0, wfz = 0.0, wty = 0.0
    cdef double ua, uza, vb, vzb, wa, wza, a_, b_, c2, d_, e_, denom, ss, tt
    cdef double sc_, cpx, cpz

    if n > 16:
        raise ValueError("too many bottles for the compiled kernel")

    for i in range(n):
        o = 15 + 6 * i
        bx[i] = state[o]
        bz[i] = state[o + 1]
        bth[i] = state[o + 2]
        bvx[i] = state[o + 3]
        bvz[i] = state[o + 4]
        bw[i] = state[o + 5]
        fx[i] = 0.0
        fz[i] = 0.0
        tq[i] = 0.0

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
        width = 2.0 * params[18 + 6 * gidx + 1]
        if ap_new >= width + release_margin:
            gidx = -1
        else:
            if ap_new < width:
                ap_new = width
    elif ap_cmd < ap:
        best = -1
        best_d = capture_r
        for i in range(n):
            hh = params[18 + 6 * i]
            hw = params[18 + 6 * i + 1]
            width = 2.0 * hw
            if ap_new > width + latch_margin:
                continue
            axx = sin(bth[i])
            axz = cos(bth[i])
            span = hh - hw
            if span < 0.0:
                span = 0.0
            dx0 = gx - bx[i]
            dz0 = gz - bz[i]
            s_ = dx0 * axx + dz0 * axz
            if s_ > span:
                s_ = span
            elif s_ < -span:
                s_ = -span
            px = bx[i] + s_ * axx
            pz = bz[i] + s_ * axz
            ddx = gx - px
            ddz = gz - pz
            dist = sqrt(ddx * ddx + ddz * ddz)
            if dist < best_d:
                best_d = dist
                best = i
                cg = cos(gth)
                sg = sin(gth)
                dxw = bx[i] - gx
                dzw = bz[i] - gz
                best_rel0 = cg * dxw - sg * dzw
                best_rel1 = sg * dxw + cg * dzw
                best_rel2 = bth[i] - gth
        if best >= 0:
            gidx = best
            relx = best_rel0
            relz = best_rel1
            relth = best_rel2
            width = 2.0 * params[18 + 6 * best + 1]
            if ap_new < width:
                ap_new = width
            rx = bx[best] - gx
            rz = bz[best] - gz
            bvx[best] = gvx + gw * rz
            bvz[best] = gvz - gw * rx
            bw[best] = gw

    # --- contact forces ---------------------------------------------------
    nc = 0
    for i in range(n):
        hh = params[18 + 6 * i]
        hw = params[18 + 6 * i + 1]
        mu = params[18 + 6 * i + 4]
        damp = params[18 + 6 * i + 5]
        c = cos(bth[i])
        s = sin(bth[i])
        for ci in range(2):
            for cj in range(2):
                ux = (2.0 * ci - 1.0) * hw
                vz = (2.0 * cj - 1.0) * hh
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
                m = params[18 + 6 * i + 2]
                inertia = params[18 + 6 * i + 3]
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
                nc = _emit(out_contacts, nc, <double>i, body, cxw, czw, 0.0, 1.0, pen, fn, ft)

    # bottle-bottle capsule contacts
    for i in range(n):
        hh_i = params[18 + 6 * i]
        hw_i = params[18 + 6 * i + 1]
        ax_i = sin(bth[i])
        az_i = cos(bth[i])
        li = hh_i - hw_i
        for j in range(i + 1, n):
            hh_j = params[18 + 6 * j]
            hw_j = params[18 + 6 * j + 1]
            ax_j = sin(bth[j])
            az_j = cos(bth[j])
            lj = hh_j - hw_j
            # closest points between the two spine segments
            ua = (bx[i] + li * ax_i) - (bx[i] - li * ax_i)
            uza = (bz[i] + li * az_i) - (bz[i] - li * az_i)
            vb = (bx[j] + lj * ax_j) - (bx[j] - lj * ax_j)
            vzb = (bz[j] + lj * az_j) - (bz[j] - lj * az_j)
            wa = (bx[i] - li * ax_i) - (bx[j] - lj * ax_j)
            wza = (bz[i] - li * az_i) - (bz[j] - lj * az_j)
            a_ = ua * ua + uza * uza
            b_ = ua * vb + uza * vzb
            c2 = vb * vb + vzb * vzb
            d_ = ua * wa + uza * wza
            e_ = vb * wa + vzb * wza
            denom = a_ * c2 - b_ * b_
            if denom > 1e-12:
                ss = (b_ * e_ - c2 * d_) / denom
            else:
                ss = 0.0
            if ss < 0.0:
                ss = 0.0
            elif ss > 1.0:
                ss = 1.0
            if c2 > 1e-12:
                tt = (b_ * ss + e_) / c2
            else:
                tt = 0.0
            if tt < 0.0:
                tt = 0.0
            elif tt > 1.0:
                tt = 1.0
            if a_ > 1e-12:
                ss = (b_ * tt - d_) / a_
            else:
                ss = 0.0
            if ss < 0.0:
                ss = 0.0
            elif ss > 1.0:
                ss = 1.0
            p1x = (bx[i] - li * ax_i) + ss * ua
            p1z = (bz[i] - li * az_i) + ss * uza
            q1x = (bx[j] - lj * ax_j) + tt * vb
            q1z = (bz[j] - lj * az_j) + tt * vzb
            dxc = p1x - q1x
            dzc = p1z - q1z
            dist = sqrt(dxc * dxc + dzc * dzc)
            rsum = hw_i + hw_j
            if dist >= rsum or dist <= 1e-12:
                continue
            pen = rsum - dist
            nx = dxc / dist
            nz = dzc / dist
            mx = 0.5 * (p1x + q1x)
            mz = 0.5 * (p1z + q1z)
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
            damp = params[18 + 6 * i + 5]
            dj = params[18 + 6 * j + 5]
            if dj < damp:
                damp = dj
            tx = nz
            tz = -nx
            mi = params[18 + 6 * i + 2]
            ii = params[18 + 6 * i + 3]
            mjm = params[18 + 6 * j + 2]
            ij = params[18 + 6 * j + 3]
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
            mu = params[18 + 6 * i + 4]
            mj = params[18 + 6 * j + 4]
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
            nc = _emit(out_contacts, nc, <double>i, <double>j, mx, mz, nx, nz, pen, fn, ft)

    # jaw-tip discs push free bottles
    cgj = cos(gth)
    sgj = sin(gth)
    for side_i in range(2):
        side = 2.0 * side_i - 1.0
        ju = side * (0.5 * ap_new + tool_r)
        jx = gx + ju * cgj + 0.01 * sgj
        jz = gz - ju * sgj + 0.01 * cgj
        jvx = gvx + gw * (jz - gz)
        jvz = gvz - gw * (jx - gx)
        for i in range(n):
            if i == gidx:
                continue
            hh = params[18 + 6 * i]
            hw = params[18 + 6 * i + 1]
            axx = sin(bth[i])
            axz = cos(bth[i])
            span = hh - hw
            dx0 = jx - bx[i]
            dz0 = jz - bz[i]
            s_ = dx0 * axx + dz0 * axz
            if s_ > span:
                s_ = span
            elif s_ < -span:
                s_ = -span
            px = bx[i] + s_ * axx
            pz = bz[i] + s_ * axz
            if (px - jx) * (jx - gx) + (pz - jz) * (jz - gz) <= 0.0:
                continue
            ddx = px - jx
            ddz = pz - jz
            dist = sqrt(ddx * ddx + ddz * ddz)
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
            m = params[18 + 6 * i + 2]
            inertia = params[18 + 6 * i + 3]
            cri_n = rx * nz - rz * nx
            cri_t = rx * tz - rz * tx
            m_eff_n = 1.0 / (1.0 / m + cri_n * cri_n / inertia)
            m_eff_t = 1.0 / (1.0 / m + cri_t * cri_t / inertia)
            cap_n = 0.5 * m_eff_n / dt
            cap_t = 0.5 * m_eff_t / dt
            cn = c_c * params[18 + 6 * i + 5]
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
            cone = params[18 + 6 * i + 4] * fn
            if ft > cone:
                ft = cone
            elif ft < -cone:
                ft = -cone
            fxc = fn * nx + ft * tx
            fzc = fn * nz + ft * tz
            fx[i] += fxc
            fz[i] += fzc
            tq[i] += rz * fxc - rx * fzc
            nc = _emit(out_contacts, nc, <double>i, BODY_GRIPPER, px, pz, nx, nz, pen, fn, ft)

    # --- integrate free bottles -----------------------------------------
    for i in range(n):
        if i == gidx:
            continue
        m = params[18 + 6 * i + 2]
        inertia = params[18 + 6 * i + 3]
        bvx[i] = bvx[i] + dt * (fx[i] / m)
        bvz[i] = bvz[i] + dt * (fz[i] / m - gravity)
        bw[i] = bw[i] + dt * (tq[i] / inertia)
        bx[i] = bx[i] + dt * bvx[i]
        bz[i] = bz[i] + dt * bvz[i]
        bth[i] = bth[i] + dt * bw[i]

    # --- gripper servo (plus grasped bottle as one rigid assembly) ------
    if gidx < 0:
        m_eff = g_mass
        i_eff = g_inertia
        kd = 2.0 * sqrt(kp_lin * m_eff)
        kd_a = 2.0 * sqrt(kp_ang * i_eff)
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
        m_b = params[18 + 6 * gidx + 2]
        i_b = params[18 + 6 * gidx + 3]
        rx = bx[gidx] - gx
        rz = bz[gidx] - gz
        m_eff = g_mass + m_b
        i_eff = g_inertia + i_b + m_b * (rx * rx + rz * rz)
        kd = 2.0 * sqrt(kp_lin * m_eff)
        kd_a = 2.0 * sqrt(kp_ang * i_eff)
        fcx = fx[gidx]
        fcz = fz[gidx]
        tc = tq[gidx]
        fx_tot = kp_lin * (cmd[0] - gx) - kd * gvx + fcx
        fz_tot = kp_lin * (cmd[1] - gz) - kd * gvz + fcz - m_b * gravity
        tau = (
            kp_ang * _wrap_pi(cmd[2] - gth) - kd_a * gw
            + tc
            + rz * fcx - rx * fcz
            + rx * m_b * gravity
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
        cg = cos(gth)
        sg = sin(gth)
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

    # --- pack --------------------------------------------------------------
    out_state[0] = t + dt
    out_state[1] = gx
    out_state[2] = gz
    out_state[3] = gth
    out_state[4] = gvx
    out_state[5] = gvz
    out_state[6] = gw
    out_state[7] = ap_new
    out_state[8] = <double>gidx
    out_state[9] = relx
    out_state[10] = relz
    out_state[11] = relth
    out_state[12] = wfx
    out_state[13] = wfz
    out_state[14] = wty
    for i in range(n):
        o = 15 + 6 * i
        out_state[o] = bx[i]
        out_state[o + 1] = bz[i]
        out_state[o + 2] = bth[i]
        out_state[o + 3] = bvx[i]
        out_state[o + 4] = bvz[i]
        out_state[o + 5] = bw[i]
    return nc


def im2col(x, int kh, int kw, int sh, int sw):
    """(B, C, H, W) float32 -> (B*OH*OW, C*kh*kw) patch matrix."""
    cdef float[:, :, :, ::1] xv = x
    cdef int b = xv.shape[0]
    cdef int c = xv.shape[1]
    cdef int h = xv.shape[2]
    cdef int w = xv.shape[3]
    cdef int oh = (h - kh) // sh + 1
    cdef int ow = (w - kw) // sw + 1
    out = np.empty((b * oh * ow, c * kh * kw), dtype=np.float32)
    cdef float[:, ::1] ov = out
    cdef int bi, ci, oi, oj, i, j, row, col
    for bi in range(b):
        for oi in range(oh):
            for oj in range(ow):
                row = (bi * oh + oi) * ow + oj
                for ci in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            col = (ci * kh + i) * kw + j
                            ov[row, col] = xv[bi, ci, oi * sh + i, oj * sw + j]
    return out


def col2im(dcols, int b, int c, int h, int w, int kh, int kw, int sh, int sw):
    """Scatter-add of the patch-matrix gradient back to (B, C, H, W).

    Accumulation order matches the reference (kernel offsets outermost), so
    float32 results are bit-identical.
    """
    cdef float[:, ::1] dv = dcols
    cdef int oh = (h - kh) // sh + 1
    cdef int ow = (w - kw) // sw + 1
    out = np.zeros((b, c, h, w), dtype=np.float32)
    cdef float[:, :, :, ::1] ov = out
    cdef int bi, ci, oi, oj, i, j, row, col
    for i in range(kh):
        for j in range(kw):
            for bi in range(b):
                for ci in range(c):
                    for oi in range(oh):
                        for oj in range(ow):
                            row = (bi * oh + oi) * ow + oj
                            col = (ci * kh + i) * kw + j
                            ov[bi, ci, oi * sh + i, oj * sw + j] += dv[row, col]
    return out
