#!/usr/bin/env python3
"""Grid-search optimum of the two-UAV, one-user, single-slot instance.

Writes crates/core/tests/fixtures/micro_oracle.json with the instance
(geometry, parameters, small-scale fading) and the best grid objective.
The Rust acceptance test rebuilds the same instance from that file.

Per grid pair of UAV positions the minimum transmit power is exact:
  - data, one user, single-antenna UAVs: the received powers add,
    sum_l a_l p_l >= Gamma sigma^2 with a_l = A d_l^-alpha |g_l|^2, so the
    weighted minimum puts all power on the UAV with the smallest alpha_l / a_l;
  - fronthaul, BS with N antennas: rank-one channels make each UAV a MISO
    receiver; one served UAV needs Gamma_F sigma^2 / |h|^2, two need the
    min-power SINR solution (uplink-downlink duality fixed point).

Usage: python3 tools/micro_oracle.py [--check] [--out PATH]
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "crates/core/tests/fixtures/micro_oracle.json"

GRID = 21

PARAMS = {
    "bandwidth_hz": 2e6,
    "slot_duration_s": 0.2,
    "num_slots": 1,
    "num_blocks": 1,
    "num_uavs": 2,
    "num_users": 1,
    "bs_antennas": 2,
    "uav_antennas": 1,
    "p_bs_max": 10 ** (46 / 10) / 1e3,
    "p_uav_max": 10 ** (0 / 10) / 1e3,
    "nav_c1": 0.0,
    "nav_c2": 1e-9,
    "noise_psd": 10 ** (-174 / 10) / 1e3,
    "max_speed": 10.0,
    "r_min_bps": 0.8e6,
    "d_min": 10.0,
    "rice_factor": 10 ** (-3 / 10),
    "pathloss_exponent_data": 2.5,
    "pathloss_exponent_fh": 2.0,
    "antenna_gain_data": 1e-3,
    "antenna_gain_fh": 1e-3,
    "beta": 1e4 / (10 ** (0 / 10) / 1e3),
    "weights": {"alpha_0": 1 / 3, "alpha_l": [1 / 3, 1 / 3]},
}

GEOMETRY = {
    "bs_position": [0.0, 0.0, 25.0],
    "user_positions": [[60.0, 0.0, 0.0]],
    "uav_start_positions": [[40.0, 12.0, 50.0], [44.0, -14.0, 55.0]],
    "nav_min": [-1000.0, -1000.0, 50.0],
    "nav_max": [1000.0, 1000.0, 100.0],
    "ring_inner": 50.0,
    "ring_outer": 1000.0,
    "height_min": 50.0,
    "height_max": 100.0,
}

# small-scale fading, fixed by hand: g_data[l] (M = 1), g_fh_tx[l] (N = 2),
# g_fh_rx[l] (M = 1); complex numbers as [re, im]
FADING = {
    "g_data": [[[0.9, 0.3]], [[-0.55, 0.7]]],
    "g_fh_tx": [[[1.0, 0.0], [0.0, 1.0]], [[0.6, 0.8], [-1.0, 0.0]]],
    "g_fh_rx": [[[1.0, 0.0]], [[0.0, -1.0]]],
}


def cplx(a):
    return np.array([complex(re, im) for re, im in a])


def noise():
    return PARAMS["noise_psd"] * PARAMS["bandwidth_hz"]


def gamma_data():
    r = PARAMS["r_min_bps"] / PARAMS["bandwidth_hz"]
    return 2 ** (2 * r) - 1


def gamma_fh(num_users):
    r = PARAMS["r_min_bps"] / PARAMS["bandwidth_hz"]
    return 2 ** (num_users * r) - 1


def candidates(start):
    """Grid of the reachable box around `start`, kept if within d_max and the nav box."""
    d_max = PARAMS["max_speed"] * PARAMS["slot_duration_s"]
    axis = np.linspace(-d_max, d_max, GRID)
    dx, dy, dz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1) + np.asarray(start)
    step = np.linalg.norm(pts - np.asarray(start), axis=1)
    lo, hi = np.asarray(GEOMETRY["nav_min"]), np.asarray(GEOMETRY["nav_max"])
    keep = (step <= d_max + 1e-12) & np.all(pts >= lo, axis=1) & np.all(pts <= hi, axis=1)
    return pts[keep], step[keep]


def min_power_miso(h1, h2, g1, g2, iters=500):
    """Minimum total power for two MISO receivers, unit noise, batched.

    h1, h2: (B, N) effective channels already divided by the noise amplitude.
    Returns (B,) total power from the dual uplink fixed point.
    """
    lam = np.full((h1.shape[0], 2), 1e-3)
    eye = np.eye(h1.shape[1])
    for _ in range(iters):
        outer1 = np.einsum("bi,bj->bij", h1, h1.conj())
        outer2 = np.einsum("bi,bj->bij", h2, h2.conj())
        cov = eye + lam[:, :1, None] * outer1 + lam[:, 1:, None] * outer2
        inv = np.linalg.inv(cov)
        q1 = np.einsum("bi,bij,bj->b", h1.conj(), inv, h1).real
        q2 = np.einsum("bi,bij,bj->b", h2.conj(), inv, h2).real
        new = np.stack([1 / ((1 + 1 / g1) * q1), 1 / ((1 + 1 / g2) * q2)], axis=1)
        if np.max(np.abs(new - lam) / new) < 1e-13:
            lam = new
            break
        lam = new
    return lam.sum(axis=1)


def fh_channels(pts, l):
    """Effective fronthaul MISO channels h = sqrt(A d^-2) ||g_rx|| g_tx, over noise amplitude."""
    bs = np.asarray(GEOMETRY["bs_position"])
    d = np.linalg.norm(pts - bs, axis=1)
    gain = PARAMS["antenna_gain_fh"] * d ** (-PARAMS["pathloss_exponent_fh"])
    tx = cplx(FADING["g_fh_tx"][l])
    rx = np.linalg.norm(cplx(FADING["g_fh_rx"][l]))
    amp = np.sqrt(gain / noise()) * rx
    return amp[:, None] * tx[None, :]


def data_gain(pts, l):
    user = np.asarray(GEOMETRY["user_positions"][0])
    d = np.linalg.norm(pts - user, axis=1)
    g = cplx(FADING["g_data"][l])
    return PARAMS["antenna_gain_data"] * d ** (-PARAMS["pathloss_exponent_data"]) * np.abs(g[0]) ** 2


def solve():
    a0 = PARAMS["weights"]["alpha_0"]
    al = PARAMS["weights"]["alpha_l"]
    c1, c2 = PARAMS["nav_c1"], PARAMS["nav_c2"]
    gd = gamma_data()
    n0 = noise()
    pts, steps = zip(*(candidates(s) for s in GEOMETRY["uav_start_positions"]))
    a = [data_gain(p, l) for l, p in enumerate(pts)]
    h = [fh_channels(p, l) for l, p in enumerate(pts)]
    nav = [c1 + c2 * s for s in steps]
    best = {"objective": math.inf}

    # one serving UAV; the other stays put (its position only costs c2 * step)
    for l in range(2):
        other = 1 - l
        p_data = gd * n0 / a[l]
        p_fh = gamma_fh(1) / np.sum(np.abs(h[l]) ** 2, axis=1)
        f = a0 * p_fh + al[l] * (p_data + nav[l]) + al[other] * c1
        i = int(np.argmin(f))
        if f[i] < best["objective"]:
            pos = [None, None]
            pos[l] = pts[l][i].tolist()
            pos[other] = GEOMETRY["uav_start_positions"][other]
            best = {"objective": float(f[i]), "coop": [l == 0, l == 1], "positions": pos}

    # both UAVs serve; joint grid over pairs, chunked over the first UAV
    d_min = PARAMS["d_min"]
    g_f = gamma_fh(1)
    for i0 in range(0, len(pts[0]), 64):
        idx0 = np.arange(i0, min(i0 + 64, len(pts[0])))
        i, j = np.meshgrid(idx0, np.arange(len(pts[1])), indexing="ij")
        i, j = i.ravel(), j.ravel()
        sep = np.linalg.norm(pts[0][i] - pts[1][j], axis=1)
        ok = sep >= d_min
        i, j = i[ok], j[ok]
        # linear program in (p_0, p_1): a vertex, the cheaper UAV carries everything
        p_data = gd * n0 * np.minimum(al[0] / a[0][i], al[1] / a[1][j])
        p_fh = min_power_miso(h[0][i], h[1][j], g_f, g_f)
        f = a0 * p_fh + p_data + al[0] * nav[0][i] + al[1] * nav[1][j]
        k = int(np.argmin(f))
        if f[k] < best["objective"]:
            best = {
                "objective": float(f[k]),
                "coop": [True, True],
                "positions": [pts[0][i[k]].tolist(), pts[1][j[k]].tolist()],
            }
    return best


def check_miso():
    """Compare the fixed point with a direct SOCP on a few random channel pairs."""
    import cvxpy as cp

    rng = np.random.default_rng(1)
    for _ in range(5):
        h1 = rng.normal(size=2) + 1j * rng.normal(size=2)
        h2 = rng.normal(size=2) + 1j * rng.normal(size=2)
        g1, g2 = rng.uniform(0.2, 3.0, size=2)
        fp = min_power_miso(h1[None, :], h2[None, :], g1, g2)[0]
        w1 = cp.Variable(2, complex=True)
        w2 = cp.Variable(2, complex=True)
        cons = []
        for h, w, wo, g in [(h1, w1, w2, g1), (h2, w2, w1, g2)]:
            sig = h.conj() @ w
            cons += [
                cp.imag(sig) == 0,
                cp.real(sig) >= math.sqrt(g) * cp.norm(cp.hstack([h.conj() @ wo, 1.0])),
            ]
        prob = cp.Problem(cp.Minimize(cp.sum_squares(w1) + cp.sum_squares(w2)), cons)
        prob.solve()
        assert abs(prob.value - fp) <= 1e-5 * fp, (prob.value, fp)
    print("fixed point matches SOCP on 5 random pairs")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="cross-check the MISO solver with cvxpy")
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    if args.check:
        check_miso()
    best = solve()
    fixture = {
        "params": PARAMS,
        "geometry": GEOMETRY,
        "fading": FADING,
        "grid_points_per_axis": GRID,
        "grid_optimum": best,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(fixture, indent=2) + "\n")
    print(json.dumps(best, indent=2))


if __name__ == "__main__":
    main()
