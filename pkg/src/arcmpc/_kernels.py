"""Compiled inner loops shared by the public modules.

Everything here works on flat float arrays so that batches of candidate
solutions can be rolled out and costed without Python overhead.  The public
wrappers in ``plants``, ``control``, ``arcs`` and ``costs`` document the
layouts.
"""

import math

import numba as nb
import numpy as np

# gain vector layout
G_EPS, G_KP, G_KD = 0, 1, 2
G_KV = 3            # 2x2 row-major, first-order tracker
G_KV_REG, G_KW_REG = 7, 8
G_KPHI = 9          # 2 entries
G_PHI_D_MAX = 11
G_A13, G_A43, G_B11, G_B21, G_B41 = 12, 13, 14, 15, 16
G_TILT_GAIN = 17
G_KZ = 18           # 3 entries, pendulum [v - v_t, phi, phidot] regulator
G_KW = 21
N_GAINS = 22

# cost weight vector layout
W_RHO = 0           # rho1..rho6 at 0..5
W_A_GOAL, W_A_AVOID, W_D_MIN, W_D_MAX, W_V_D, W_PHI_MAX, W_DELTA = 6, 7, 8, 9, 10, 11, 12
W_RHO7, W_KP = 13, 14   # terminal velocity-mismatch weight and the tracker gain it refers to
N_WEIGHTS = 15
N_TERMS = 6

BIG = np.finfo(np.float64).max


@nb.njit(cache=True)
def rhs(kind, x, u, p, out):
    if kind == 0:
        out[0] = u[0] * math.cos(x[2])
        out[1] = u[0] * math.sin(x[2])
        out[2] = u[1]
    elif kind == 1:
        v = x[3]
        w = x[4]
        out[0] = v * math.cos(x[2])
        out[1] = v * math.sin(x[2])
        out[2] = w
        out[3] = min(max(p[0] * v + p[2] * u[0], -p[4]), p[4])
        out[4] = min(max(p[1] * w + p[3] * u[1], -p[5]), p[5])
    else:
        mc, ms, d, L, R, I2, I3, g = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
        v = x[2]
        w = x[4]
        phi = x[5]
        phid = x[6]
        s = math.sin(phi)
        c = math.cos(phi)
        msd = ms * d
        a11 = 3.0 * (mc + ms)
        a12 = -msd * c
        r1 = -u[0] / R - msd * s * (phid * phid + w * w)
        a21 = msd * c
        a22 = -(msd * d + I3)
        r2 = u[0] - msd * d * s * c * phid * phid - msd * g * s
        det = a11 * a22 - a12 * a21
        J = (3.0 * L * L + 1.0 / (2.0 * R * R)) * mc + msd * d * s * s + I2
        out[0] = v * math.cos(x[3])
        out[1] = v * math.sin(x[3])
        out[2] = (r1 * a22 - a12 * r2) / det
        out[3] = w
        out[4] = (L / R * u[1] - msd * d * s * c * w * phid) / J
        out[5] = phid
        out[6] = (a11 * r2 - a21 * r1) / det


@nb.njit(cache=True)
def heading_index(kind):
    return 3 if kind == 2 else 2


@nb.njit(cache=True)
def velocities(kind, x, u):
    """(v, omega) of the state; for the unicycle the commanded input."""
    if kind == 0:
        return u[0], u[1]
    if kind == 1:
        return x[3], x[4]
    return x[2], x[4]


@nb.njit(cache=True)
def regulate(kind, x, vt, wt, p, G, u):
    """Constant-velocity regulator driving (v, omega) to (vt, wt)."""
    if kind == 0:
        u[0] = vt
        u[1] = wt
    elif kind == 1:
        u[0] = -p[0] / p[2] * vt - G[G_KV_REG] * (x[3] - vt)
        u[1] = -p[1] / p[3] * wt - G[G_KW_REG] * (x[4] - wt)
    else:
        u[0] = -(G[G_KZ] * (x[2] - vt) + G[G_KZ + 1] * x[5] + G[G_KZ + 2] * x[6])
        u[1] = -G[G_KW] * (x[4] - wt)


@nb.njit(cache=True)
def track(kind, x, r, p, G, u):
    """epsilon-point reference tracker; ``r = [y_d, ydot_d, yddot_d]`` (6 floats).

    Returns the desired tilt for the pendulum (0 otherwise).
    """
    eps = G[G_EPS]
    kp = G[G_KP]
    psi = x[heading_index(kind)]
    c = math.cos(psi)
    s = math.sin(psi)
    y0 = x[0] + eps * c
    y1 = x[1] + eps * s
    if kind == 0:
        ue0 = r[2] + kp * (r[0] - y0)
        ue1 = r[3] + kp * (r[1] - y1)
        u[0] = c * ue0 + s * ue1
        u[1] = (-s * ue0 + c * ue1) / eps
        return 0.0
    v, w = velocities(kind, x, u)
    yd0 = v * c - eps * w * s
    yd1 = v * s + eps * w * c
    if kind == 1:
        ue0 = r[2] + kp * (r[0] - y0)
        ue1 = r[3] + kp * (r[1] - y1)
        ued0 = r[4] + kp * (r[2] - yd0)
        ued1 = r[5] + kp * (r[3] - yd1)
        vbar0 = c * ue0 + s * ue1
        vbar1 = (-s * ue0 + c * ue1) / eps
        vbd0 = w * (-s * ue0 + c * ue1) + c * ued0 + s * ued1
        vbd1 = (w * (-c * ue0 - s * ue1) + (-s * ued0 + c * ued1)) / eps
        e0 = v - vbar0
        e1 = w - vbar1
        u[0] = (vbd0 - p[0] * vbar0) / p[2] - (G[G_KV] * e0 + G[G_KV + 1] * e1)
        u[1] = (vbd1 - p[1] * vbar1) / p[3] - (G[G_KV + 2] * e0 + G[G_KV + 3] * e1)
        return 0.0
    kd = G[G_KD]
    ue0 = r[4] + kp * (r[0] - y0) + kd * (r[2] - yd0)
    ue1 = r[5] + kp * (r[1] - y1) + kd * (r[3] - yd1)
    vdot_d = w * (-s * yd0 + c * yd1) + c * ue0 + s * ue1
    wdot_d = (w * (-c * yd0 - s * yd1) + (-s * ue0 + c * ue1)) / eps
    lim = G[G_PHI_D_MAX]
    phi_d = min(max(G[G_TILT_GAIN] * vdot_d, -lim), lim)
    u[0] = -(G[G_KPHI] * (x[5] - phi_d) + G[G_KPHI + 1] * x[6]) - G[G_A43] / G[G_B41] * phi_d
    u[1] = wdot_d / G[G_B21]
    return phi_d


@nb.njit(cache=True)
def mode_at(tau, n_arcs, t):
    """Controller index active at relative time ``t``; ``n_arcs`` means tracking."""
    if tau[n_arcs] < tau[n_arcs + 1] and t >= tau[n_arcs]:
        return n_arcs
    i = n_arcs - 1
    while i > 0 and t < tau[i]:
        i -= 1
    return i


@nb.njit(cache=True)
def control(kind, x, m, ridx, theta, ref, p, G, u):
    """Apply controller ``m`` (an arc index, or ``n_arcs`` for tracking)."""
    n_arcs = theta.shape[0]
    if m == n_arcs:
        return track(kind, x, ref[ridx], p, G, u)
    regulate(kind, x, theta[m, 0], theta[m, 1], p, G, u)
    return 0.0


@nb.njit(cache=True)
def _stage(kind, x, m, ridx, theta, ref, p, G, u, out):
    control(kind, x, m, ridx, theta, ref, p, G, u)
    rhs(kind, x, u, p, out)


@nb.njit(cache=True)
def rollout_batch(kind, x0, taus, thetas, p, G, ref, h, n_steps, stride,
                  out_x, out_vel, out_phid, out_ok):
    """RK4 rollouts of K candidate solutions from a common initial state.

    taus: (K, N+2) switch times relative to the start; thetas: (K, N, 2);
    ref: (2 n_steps + 1, 6) reference samples on the half-step grid.
    Samples are written every ``stride`` steps (including t = 0).  The active
    controller is chosen once per step at its midpoint, so switches take effect
    at the step boundary nearest to each switch time.
    """
    K = taus.shape[0]
    n = x0.shape[0]
    x = np.empty(n)
    xt = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    u = np.zeros(2)
    pend = kind == 2
    for k in range(K):
        tau = taus[k]
        theta = thetas[k]
        for i in range(n):
            x[i] = x0[i]
        u[0] = 0.0
        u[1] = 0.0
        n_arcs = theta.shape[0]
        phid = control(kind, x, mode_at(tau, n_arcs, 0.5 * h), 0, theta, ref, p, G, u)
        vv, ww = velocities(kind, x, u)
        out_x[k, 0] = x
        out_vel[k, 0, 0] = vv
        out_vel[k, 0, 1] = ww
        out_phid[k, 0] = phid
        ok = True
        si = 1
        for j in range(n_steps):
            m = mode_at(tau, n_arcs, (j + 0.5) * h)
            _stage(kind, x, m, 2 * j, theta, ref, p, G, u, k1)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k1[i]
            _stage(kind, xt, m, 2 * j + 1, theta, ref, p, G, u, k2)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k2[i]
            _stage(kind, xt, m, 2 * j + 1, theta, ref, p, G, u, k3)
            for i in range(n):
                xt[i] = x[i] + h * k3[i]
            _stage(kind, xt, m, 2 * j + 2, theta, ref, p, G, u, k4)
            for i in range(n):
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not math.isfinite(x[i]):
                    ok = False
            if pend and abs(x[5]) >= 0.5 * math.pi:
                ok = False
            if not ok:
                break
            if (j + 1) % stride == 0:
                # report the controller of the step that starts at this sample
                phid = control(kind, x, mode_at(tau, n_arcs, (j + 1.5) * h), 2 * j + 2, theta, ref, p, G, u)
                vv, ww = velocities(kind, x, u)
                out_x[k, si] = x
                out_vel[k, si, 0] = vv
                out_vel[k, si, 1] = ww
                out_phid[k, si] = phid
                si += 1
        out_ok[k] = ok
        if not ok:
            for s in range(si, out_x.shape[1]):
                out_x[k, s] = np.nan
                out_vel[k, s] = np.nan
                out_phid[k, s] = np.nan


# ---------------------------------------------------------------------------
# costs


@nb.njit(cache=True)
def l_goal(d, delta_ball, a_slope):
    """Goal gate: 0 inside the ball, rising smoothly towards 1 outside it."""
    if d < delta_ball:
        return 0.0
    return 2.0 / (1.0 + math.exp(-a_slope * (d - delta_ball))) - 1.0


@nb.njit(cache=True)
def l_avoid(d, d_min, d_max, a_slope):
    """Log barrier on obstacle distance, infinite at or below ``d_min`` and 0 past ``d_max``."""
    if d <= d_min:
        return math.inf
    if d > d_max:
        return 0.0
    return -a_slope * math.log(d - d_min) + a_slope * math.log(d_max - d_min)


@nb.njit(cache=True)
def tilt_barrier(phi, phi_max, rho6):
    """Log barrier keeping the tilt angle inside (-phi_max, phi_max)."""
    if abs(phi) >= phi_max:
        return math.inf
    if phi == 0.0:
        return 0.0
    return -rho6 * math.log((phi_max * phi_max - phi * phi) / (phi_max * phi_max))


@nb.njit(cache=True)
def terminal_terms(e0, e1, rho4, rho5, delta_ball):
    dist = math.sqrt(e0 * e0 + e1 * e1)
    quad = 0.5 * rho4 * dist * dist
    if rho5 == 0.0:
        return quad, 0.0
    if dist >= delta_ball:
        return quad, math.inf
    if dist == 0.0:
        return quad, 0.0
    return quad, -rho5 * math.log((delta_ball - dist) / delta_ball)


@nb.njit(cache=True)
def nearest_sq(px, py, obstacles):
    best = math.inf
    for m in range(obstacles.shape[0]):
        dx = obstacles[m, 0] - px
        dy = obstacles[m, 1] - py
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
    return best


@nb.njit(cache=True)
def avoid_sum(px, py, obstacles, d_min, d_max, a_slope):
    total = 0.0
    dmax2 = d_max * d_max
    for m in range(obstacles.shape[0]):
        dx = obstacles[m, 0] - px
        dy = obstacles[m, 1] - py
        d2 = dx * dx + dy * dy
        if d2 <= dmax2:
            total += l_avoid(math.sqrt(d2), d_min, d_max, a_slope)
    return total


@nb.njit(cache=True)
def first_collision_index(centers, eps_pts, obstacles, d_min, r_robot, margin):
    """Index of the first sample whose epsilon point is within ``d_min`` or whose
    center is within ``r_robot`` of an obstacle (both widened by ``margin``); -1 if none."""
    e2 = (d_min + margin) ** 2
    c2 = (r_robot + margin) ** 2
    for s in range(centers.shape[0]):
        if nearest_sq(eps_pts[s, 0], eps_pts[s, 1], obstacles) <= e2:
            return s
        if nearest_sq(centers[s, 0], centers[s, 1], obstacles) <= c2:
            return s
    return -1


@nb.njit(cache=True)
def cost_batch(centers, eps_pts, vel, phi, ok, obstacles, goal, yd_end, W, dt,
               barrier_on, use_tilt, r_robot, margin,
               out_terms, out_total, out_hit, out_tc, out_clear, out_coarse):
    """Cost of K sampled trajectories.

    centers, eps_pts, vel: (K, S, 2); phi: (K, S); yd_end: reference position
    and velocity at the horizon end.  out_terms columns are the goal-gated
    velocity integral, obstacle integral, tilt integral, terminal quadratic,
    terminal barrier and terminal velocity mismatch.  The last one compares the
    final epsilon-point velocity with the kinematic tracking law
    ``ydot_d + k_p (y_d - y)``.
    """
    K = centers.shape[0]
    S = centers.shape[1]
    rho1 = W[W_RHO]
    rho2 = W[W_RHO + 1]
    rho3 = W[W_RHO + 2]
    rho4 = W[W_RHO + 3]
    rho5 = W[W_RHO + 4] if barrier_on else 0.0
    rho6 = W[W_RHO + 5]
    d_min = W[W_D_MIN]
    d_max = W[W_D_MAX]
    for k in range(K):
        out_tc[k] = -1
        for q in range(N_TERMS):
            out_terms[k, q] = 0.0
        if not ok[k]:
            out_coarse[k] = BIG
            out_hit[k] = True
            out_total[k] = BIG
            out_clear[k] = 0.0
            for q in range(N_TERMS):
                out_terms[k, q] = BIG
            continue
        out_tc[k] = first_collision_index(centers[k], eps_pts[k], obstacles, d_min, r_robot, margin)
        hit = out_tc[k] >= 0
        clear = math.inf
        run_v = 0.0
        run_o = 0.0
        run_t = 0.0
        coarse = 0.0
        even = (S - 1) % 2 == 0
        for s in range(S):
            wgt = dt if 0 < s < S - 1 else 0.5 * dt
            cw = 0.0
            if even and s % 2 == 0:
                cw = 2.0 * dt if 0 < s < S - 1 else dt
            ex = eps_pts[k, s, 0]
            ey = eps_pts[k, s, 1]
            gx = ex - goal[0]
            gy = ey - goal[1]
            gate = l_goal(math.sqrt(gx * gx + gy * gy), W[W_DELTA], W[W_A_GOAL])
            dv = W[W_V_D] - vel[k, s, 0]
            lv = gate * (0.5 * rho1 * dv * dv + 0.5 * rho2 * vel[k, s, 1] ** 2)
            run_v += wgt * lv
            coarse += cw * lv
            dc = math.sqrt(nearest_sq(centers[k, s, 0], centers[k, s, 1], obstacles)) - r_robot
            de = math.sqrt(nearest_sq(ex, ey, obstacles)) - d_min
            clear = min(clear, dc, de)
            if rho3 > 0.0:
                lo = 0.5 * rho3 * avoid_sum(ex, ey, obstacles, d_min, d_max, W[W_A_AVOID])
                run_o += wgt * lo
                coarse += cw * lo
            if use_tilt:
                lt = tilt_barrier(phi[k, s], W[W_PHI_MAX], rho6)
                run_t += wgt * lt
                coarse += cw * lt
        quad, bar = terminal_terms(eps_pts[k, S - 1, 0] - yd_end[0], eps_pts[k, S - 1, 1] - yd_end[1],
                                   rho4, rho5, W[W_DELTA])
        mis = 0.0
        if W[W_RHO7] > 0.0:
            last = S - 1
            hx = eps_pts[k, last, 0] - centers[k, last, 0]
            hy = eps_pts[k, last, 1] - centers[k, last, 1]
            eps = math.sqrt(hx * hx + hy * hy)
            if eps > 0.0:
                hx /= eps
                hy /= eps
                v = vel[k, last, 0]
                w = vel[k, last, 1]
                m0 = v * hx - eps * w * hy - (yd_end[2] + W[W_KP] * (yd_end[0] - eps_pts[k, last, 0]))
                m1 = v * hy + eps * w * hx - (yd_end[3] + W[W_KP] * (yd_end[1] - eps_pts[k, last, 1]))
                mis = 0.5 * W[W_RHO7] * (m0 * m0 + m1 * m1)
        out_terms[k, 0] = run_v
        out_terms[k, 1] = run_o
        out_terms[k, 2] = run_t
        out_terms[k, 3] = quad
        out_terms[k, 4] = bar
        out_terms[k, 5] = mis
        total = run_v + run_o + run_t + quad + bar + mis
        if hit or not math.isfinite(total):
            hit = True
            total = BIG
            for q in range(N_TERMS):
                if not math.isfinite(out_terms[k, q]):
                    out_terms[k, q] = BIG
        out_hit[k] = hit
        out_total[k] = total
        out_clear[k] = clear
        out_coarse[k] = coarse if even else run_v + run_o + run_t
