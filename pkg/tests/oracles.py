"""Independent reference implementations used by the tests.

Nothing here imports the package's model code: each oracle recomputes its
quantity from first principles with plain numpy/scipy.
"""

from __future__ import annotations

import math

import numpy as np


def rotmat(q):
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_quaternion(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_unit(rng, n=3):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


# -- collision ----------------------------------------------------------------


def scaled_clearance(p, q, radii, e1, e2, n_coarse=2001, n_fine=2001):
    """Smallest ellipsoid-scaled norm of the segment ``e1 e2`` seen from the body at ``(p, q)``.

    Below 1 means some point of the segment lies inside the ellipsoid. The
    segment is sampled densely, then again around the best coarse sample.
    """
    R = rotmat(q)
    a = (R.T @ (e1 - p)) / radii
    b = (R.T @ (e2 - p)) / radii
    t = np.linspace(0.0, 1.0, n_coarse)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    d = np.einsum("ij,ij->i", pts, pts)
    i = int(np.argmin(d))
    h = 1.0 / (n_coarse - 1)
    t2 = np.clip(np.linspace(t[i] - h, t[i] + h, n_fine), 0.0, 1.0)
    pts = a[None, :] + t2[:, None] * (b - a)[None, :]
    return float(np.sqrt(np.einsum("ij,ij->i", pts, pts).min()))


# -- dynamics -----------------------------------------------------------------


def scalar_derivative(x, u, mass, inertia, rx, ry, kappa, spin, gravity):
    """Rigid-body quadrotor derivative written out component by component."""
    px, py, pz, qw, qx, qy, qz, vx, vy, vz, wx, wy, wz, g1, g2, g3, g4 = (float(v) for v in x)
    gam = (g1, g2, g3, g4)
    thrust = g1 + g2 + g3 + g4
    tx = sum(ry[i] * gam[i] for i in range(4))
    ty = -sum(rx[i] * gam[i] for i in range(4))
    tz = kappa * sum(spin[i] * gam[i] for i in range(4))
    # q ⊙ [0, w] / 2
    dqw = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dqx = 0.5 * (qw * wx + qy * wz - qz * wy)
    dqy = 0.5 * (qw * wy - qx * wz + qz * wx)
    dqz = 0.5 * (qw * wz + qx * wy - qy * wx)
    # third column of the rotation matrix times the collective thrust
    ax = 2 * (qx * qz + qw * qy) * thrust / mass + gravity[0]
    ay = 2 * (qy * qz - qw * qx) * thrust / mass + gravity[1]
    az = (1 - 2 * (qx * qx + qy * qy)) * thrust / mass + gravity[2]
    jx, jy, jz = inertia
    dwx = (tx - (wy * jz * wz - wz * jy * wy)) / jx
    dwy = (ty - (wz * jx * wx - wx * jz * wz)) / jy
    dwz = (tz - (wx * jy * wy - wy * jx * wx)) / jz
    return np.array([vx, vy, vz, dqw, dqx, dqy, dqz, ax, ay, az, dwx, dwy, dwz, *u])


def central_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * h)
    return J


def relative_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


# -- perception ---------------------------------------------------------------


def image_line_distance(p_cam, q_cam, fx, fy, e1, e2):
    """Distance (px) of the image center from the projected infinite line through e1, e2."""
    R = rotmat(q_cam)
    pix = []
    for e in (e1, e2):
        c = R.T @ (e - p_cam)
        pix.append(np.array([fx * c[0] / c[2], fy * c[1] / c[2]]))
    a, b = pix
    d = b - a
    return abs(d[0] * a[1] - d[1] * a[0]) / np.linalg.norm(d)


# -- vertical climb by direct collocation ---------------------------------------


def climb_collocation(scenario, sub=4):
    """Vertical hover-to-hover climb solved as a separate dense collocation NLP.

    The climb keeps the body level and all four rotors equal, so the state
    reduces to (z, v_z, gamma) driven by one thrust rate per node. Each node
    interval is split into ``sub`` Hermite-Simpson pieces; the cost mirrors
    the shooting cost (thrust integrals, terminal position and velocity).
    Returns ``(objective, T)``.
    """
    from scipy.optimize import minimize

    rp = scenario.robot
    w = scenario.weights
    N = scenario.n_nodes
    M = N * sub
    m, g = rp.mass, -rp.gravity[2]
    z0, z1 = scenario.x_init.p_wb[2], scenario.x_perch.p_wb[2]
    gh = rp.hover_thrust
    wt = float(w.thrust[0])
    wp, wv = float(w.terminal_position[2]), float(w.terminal_velocity[2])
    t_min, t_max = scenario.t_min, scenario.t_max

    def unpack(y):
        X = y[: 3 * (M + 1)].reshape(M + 1, 3)
        U = y[3 * (M + 1) : 3 * (M + 1) + N]
        return X, U, y[-1]

    def f(X, u):
        return np.column_stack([X[:, 1], 4.0 * X[:, 2] / m - g, u])

    def objective(y):
        X, U, T = unpack(y)
        gam = X[:-1:sub, 2]
        thrust = gam * T / N + U * T**2 / (2 * N**2)
        return 4 * wt * np.sum(thrust**2) + wp * (X[-1, 0] - z1) ** 2 + wv * X[-1, 1] ** 2

    def defects(y):
        X, U, T = unpack(y)
        h = T / M
        u = np.repeat(U, sub)
        f0 = f(X[:-1], u)
        f1 = f(X[1:], u)
        mid = 0.5 * (X[:-1] + X[1:]) + h / 8.0 * (f0 - f1)
        fm = f(mid, u)
        res = X[1:] - X[:-1] - h / 6.0 * (f0 + 4 * fm + f1)
        return np.concatenate([res.ravel(), X[0] - np.array([z0, 0.0, gh])])

    y0 = np.concatenate([np.column_stack([np.linspace(z0, z1, M + 1), np.zeros(M + 1), np.full(M + 1, gh)]).ravel(), np.zeros(N), [0.5 * (t_min + t_max)]])
    bounds = [(scenario.z_min, None), (None, None), (0.0, rp.gamma_max)] * (M + 1) + [(rp.u_min, rp.u_max)] * N + [(t_min, t_max)]
    res = minimize(
        objective,
        y0,
        method="SLSQP",
        constraints=[{"type": "eq", "fun": defects}],
        bounds=bounds,
        options={"maxiter": 1000, "ftol": 1e-12},
    )
    if not res.success:
        raise RuntimeError(f"collocation oracle failed: {res.message}")
    return float(res.fun), float(unpack(res.x)[2])


def sigmoid_plateau_band(k, lam1_sq, eps=1e-3):
    """True where the activation term is within ``eps`` of one of its plateaus."""
    return (k < eps) | (k > lam1_sq - eps)


def degrees(rad):
    return rad * 180.0 / math.pi
