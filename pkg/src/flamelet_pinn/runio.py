"""Run artifacts: CSV field/trajectory files, JSON sidecars, config hashing.

Floats are written with repr (shortest 17-significant-digit form), so parsing
a written file reproduces the array bit for bit.  No timestamps or other
volatile data are ever written: re-running a seeded command must produce
byte-identical artifacts.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

FIELD_HEADER = ["t", "Z", "T", "Y_H2", "Y_O2", "Y_H2O", "Y_N2"]


class ArtifactError(RuntimeError):
    """Malformed artifact file."""


def fmt(x):
    return repr(float(x))


def config_hash(config):
    """Short stable hash of a resolved configuration mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_field_csv(path, t, z, T, Y, meta=None):
    """Field table: one row per (t, z) sample, species in fixed column order.

    t: (nt,), z: (m,), T: (nt, m), Y: (nt, m, 4).  A metadata sidecar
    ``<path>.meta.json`` is written when ``meta`` is given.
    """
    t = np.asarray(t)
    z = np.asarray(z)
    with open(path, "w") as f:
        f.write(",".join(FIELD_HEADER) + "\n")
        for a in range(t.shape[0]):
            for k in range(z.shape[0]):
                row = [fmt(t[a]), fmt(z[k]), fmt(T[a, k])]
                row += [fmt(Y[a, k, i]) for i in range(Y.shape[2])]
                f.write(",".join(row) + "\n")
    if meta is not None:
        write_json(str(path) + ".meta.json", meta)


def write_trajectory_csv(path, t, T, Y, meta=None):
    """Trajectory table: one row per time, empty Z column (no spatial axis)."""
    t = np.asarray(t)
    with open(path, "w") as f:
        f.write(",".join(FIELD_HEADER) + "\n")
        for a in range(t.shape[0]):
            row = [fmt(t[a]), "", fmt(T[a])]
            row += [fmt(Y[a, i]) for i in range(Y.shape[1])]
            f.write(",".join(row) + "\n")
    if meta is not None:
        write_json(str(path) + ".meta.json", meta)


def read_field_csv(path):
    """Read a field/trajectory CSV back into arrays.

    Returns (t, z, T, Y) with z = None for trajectories (empty Z column).
    """
    with open(path) as f:
        header = f.readline().strip().split(",")
        if header != FIELD_HEADER:
            raise ArtifactError(f"{path}: unexpected header {header}")
        t, z, T, Y = [], [], [], []
        has_z = None
        for line in f:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(FIELD_HEADER):
                raise ArtifactError(f"{path}: bad row {line!r}")
            t.append(float(parts[0]))
            if parts[1] == "":
                row_has_z = False
            else:
                row_has_z = True
                z.append(float(parts[1]))
            if has_z is None:
                has_z = row_has_z
            elif has_z != row_has_z:
                raise ArtifactError(f"{path}: mixed field and trajectory rows")
            T.append(float(parts[2]))
            Y.append([float(v) for v in parts[3:]])
    t = np.array(t)
    T = np.array(T)
    Y = np.array(Y)
    if not has_z:
        return t, None, T, Y
    z = np.array(z)
    # rows come in time blocks sharing one z grid; recover the block length
    repeats = np.nonzero(z == z[0])[0]
    m = z.shape[0] if repeats.shape[0] < 2 else int(repeats[1])
    n = t.shape[0]
    if n % m == 0 and np.array_equal(np.tile(z[:m], n // m), z):
        nt = n // m
        return t[::m], z[:m], T.reshape(nt, m), Y.reshape(nt, m, -1)
    return t, z, T, Y


def write_history_csv(path, rows):
    """Training history: epoch, loss terms, current dissipation-scale value."""
    with open(path, "w") as f:
        f.write("epoch,loss_total,loss_physics,loss_bc,loss_data,alpha_current\n")
        for r in rows:
            f.write(",".join([str(int(r[0]))] + [fmt(v) for v in r[1:]]) + "\n")


def read_history_csv(path):
    with open(path) as f:
        header = f.readline().strip()
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    cols = header.split(",")
    data = {c: np.array([float(r[i]) for r in rows]) for i, c in enumerate(cols)}
    return data


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
