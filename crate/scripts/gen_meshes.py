#!/usr/bin/env python3
"""Generate the checked-in MSH 2.2 meshes used by the `rotors` and `cylinder`
scenarios.

This is a small force-based mesher in the style of distmesh (Persson and
Strang). It was run once; the outputs live in `crates/core/meshes/`. Re-run with

    python3 scripts/gen_meshes.py crates/core/meshes/

Requires numpy and scipy.
"""

import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay


def dcircle(p, cx, cy, r):
    return np.hypot(p[:, 0] - cx, p[:, 1] - cy) - r


def drect(p, x0, x1, y0, y1):
    return -np.minimum.reduce(
        [-y0 + p[:, 1], y1 - p[:, 1], -x0 + p[:, 0], x1 - p[:, 0]]
    )


def circle_points(cx, cy, r, h):
    n = max(8, int(np.ceil(2 * np.pi * r / h)))
    a = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])


def segment_points(p0, p1, h):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(1, int(np.ceil(np.linalg.norm(p1 - p0) / h)))
    t = np.linspace(0, 1, n, endpoint=False)[:, None]
    return p0 + t * (p1 - p0)


def distmesh(fd, fh, h0, bbox, pfix, iters=400, seed=1):
    rng = np.random.default_rng(seed)
    geps = 1e-3 * h0
    deps = np.sqrt(np.finfo(float).eps) * h0
    (x0, y0), (x1, y1) = bbox
    xs = np.arange(x0, x1 + h0, h0)
    ys = np.arange(y0, y1 + h0 * np.sqrt(3) / 2, h0 * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2, :] += h0 / 2
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[fd(p) < -geps]
    r0 = 1.0 / fh(p) ** 2
    p = p[rng.random(len(p)) < r0 / r0.max()]
    # keep interior points away from the fixed boundary nodes
    if len(pfix):
        d = np.min(
            np.hypot(p[:, None, 0] - pfix[None, :, 0], p[:, None, 1] - pfix[None, :, 1]),
            axis=1,
        )
        p = p[d > 0.5 * h0 * fh(p)]
    nfix = len(pfix)
    p = np.vstack([pfix, p])
    pold = np.inf
    ttol, dptol, Fscale, dt = 0.1, 1e-3, 1.2, 0.2
    for _ in range(iters):
        if np.max(np.hypot(*(p - pold).T)) / h0 > ttol:
            pold = p.copy()
            t = Delaunay(p).simplices
            pmid = p[t].mean(axis=1)
            t = t[fd(pmid) < -geps]
            bars = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
            bars = np.unique(np.sort(bars, axis=1), axis=0)
        barvec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.hypot(barvec[:, 0], barvec[:, 1])
        hbars = fh((p[bars[:, 0]] + p[bars[:, 1]]) / 2)
        L0 = hbars * Fscale * np.sqrt(np.sum(L**2) / np.sum(hbars**2))
        F = np.maximum(L0 - L, 0)
        Fvec = (F / L)[:, None] * barvec
        Ftot = np.zeros_like(p)
        np.add.at(Ftot, bars[:, 0], Fvec)
        np.add.at(Ftot, bars[:, 1], -Fvec)
        Ftot[:nfix] = 0
        p = p + dt * Ftot
        d = fd(p)
        ix = d > 0
        if ix.any():
            dgx = (fd(p[ix] + [deps, 0]) - d[ix]) / deps
            dgy = (fd(p[ix] + [0, deps]) - d[ix]) / deps
            p[ix] -= np.column_stack([d[ix] * dgx, d[ix] * dgy]) / (dgx**2 + dgy**2)[:, None]
        if np.max(np.hypot(*(dt * Ftot[d < -geps]).T), initial=0) / h0 < dptol:
            break
    t = Delaunay(p).simplices
    t = t[fd(p[t].mean(axis=1)) < -geps]
    # drop unused points
    used = np.unique(t)
    remap = -np.ones(len(p), int)
    remap[used] = np.arange(len(used))
    p = p[used]
    t = remap[t]
    # counterclockwise
    a = p[t[:, 1]] - p[t[:, 0]]
    b = p[t[:, 2]] - p[t[:, 0]]
    cw = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < 0
    t[cw] = t[cw][:, [0, 2, 1]]
    return p, t


def boundary_edges(t):
    edges = {}
    for tri in t:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges.setdefault(key, []).append((a, b))
    return [v[0] for v in edges.values() if len(v) == 1]


def write_msh(path, p, t, edges, classify, names):
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(names))]
    for tag, name in sorted(names.items()):
        lines.append(f'1 {tag} "{name}"')
    lines += ["$EndPhysicalNames", "$Nodes", str(len(p))]
    for i, (x, y) in enumerate(p):
        lines.append(f"{i + 1} {float(x)!r} {float(y)!r} 0")
    lines += ["$EndNodes", "$Elements", str(len(edges) + len(t))]
    k = 1
    for a, b in edges:
        tag = classify((p[a] + p[b]) / 2)
        lines.append(f"{k} 1 2 {tag} {tag} {a + 1} {b + 1}")
        k += 1
    for tri in t:
        lines.append(f"{k} 2 2 100 100 {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
        k += 1
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")
    ang = []
    for tri in t:
        q = p[tri]
        for k in range(3):
            u, v = q[(k + 1) % 3] - q[k], q[(k + 2) % 3] - q[k]
            ang.append(np.degrees(np.arccos(np.dot(u, v) / np.linalg.norm(u) / np.linalg.norm(v))))
    L = [np.linalg.norm(p[a] - p[b]) for tri in t for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0]))]
    print(
        f"{path}: {len(p)} nodes, {len(t)} triangles, {len(edges)} boundary edges, "
        f"min angle {min(ang):.1f} deg, edge length {min(L):.4f}..{max(L):.4f}"
    )


def rotors(path, h0):
    c1, r0, r1 = 0.5, 1.0, 0.1

    def fd(p):
        return np.maximum.reduce(
            [dcircle(p, 0, 0, r0), -dcircle(p, -c1, 0, r1), -dcircle(p, c1, 0, r1)]
        )

    def fh(p):
        d = np.minimum(np.abs(dcircle(p, -c1, 0, r1)), np.abs(dcircle(p, c1, 0, r1)))
        return np.minimum(0.5 + 2.0 * d, 1.0)

    pfix = np.vstack(
        [
            circle_points(0, 0, r0, h0),
            circle_points(-c1, 0, r1, 0.5 * h0),
            circle_points(c1, 0, r1, 0.5 * h0),
        ]
    )
    # distmesh's h0 is the smallest edge length; fh is relative to it
    p, t = distmesh(fd, fh, 0.5 * h0, ((-1, -1), (1, 1)), pfix)

    def classify(m):
        if np.hypot(m[0] + c1, m[1]) < 2 * r1:
            return 2
        if np.hypot(m[0] - c1, m[1]) < 2 * r1:
            return 3
        return 1

    names = {1: "outer", 2: "left_rotor", 3: "right_rotor"}
    write_msh(path, p, t, boundary_edges(t), classify, names)


def cylinder(path, h0):
    L, H, cx, cy, r = 2.2, 0.41, 0.2, 0.2, 0.05

    def fd(p):
        return np.maximum(drect(p, 0, L, 0, H), -dcircle(p, cx, cy, r))

    def fh(p):
        d = np.abs(dcircle(p, cx, cy, r))
        return np.minimum(0.3 + 1.5 * d / H, 1.0)

    hc = 0.3 * h0
    corners = [(0, 0), (L, 0), (L, H), (0, H)]
    pfix = [circle_points(cx, cy, r, hc)]
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        local = h0 * float(fh(np.array([mid]))[0]) if a[0] == b[0] else h0
        if a[0] == 0 and b[0] == 0:
            local = min(local, 0.5 * h0)
        pfix.append(segment_points(a, b, local))
    pfix = np.vstack(pfix)
    p, t = distmesh(fd, fh, 0.3 * h0, ((0, 0), (L, H)), pfix)

    def classify(m):
        tol = 1e-9
        if np.hypot(m[0] - cx, m[1] - cy) < 2 * r:
            return 4
        if abs(m[0]) < tol:
            return 1
        if abs(m[0] - L) < tol:
            return 2
        return 3

    names = {1: "inlet", 2: "outlet", 3: "wall", 4: "cylinder"}
    write_msh(path, p, t, boundary_edges(t), classify, names)


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/meshes")
    out.mkdir(parents=True, exist_ok=True)
    rotors(out / "rotors_coarse.msh", 0.1)
    rotors(out / "rotors.msh", 0.05)
    cylinder(out / "cylinder_coarse.msh", 0.06)
    cylinder(out / "cylinder.msh", 0.03)
