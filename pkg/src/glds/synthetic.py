"""Synthetic models and datasets for tests, demos and sanity runs."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dynamics import GldsModel, simulate_lds

__all__ = ["random_stable_model", "write_synthetic_dataset"]


def random_stable_model(rng, state_dim, obs_shape, radius=(0.5, 0.98), d=None):
    """Random ``(A, C)`` with orthonormal ``C`` and eigenvalue moduli in ``radius``.

    ``A`` is a random orthogonal similarity of a block-diagonal matrix of real
    eigenvalues and 2x2 rotation-scaling blocks.
    """
    lo, hi = radius
    blocks = np.zeros((state_dim, state_dim))
    k = 0
    while k < state_dim:
        r = rng.uniform(lo, hi)
        if state_dim - k >= 2 and rng.random() < 0.5:
            theta = rng.uniform(0.1, np.pi - 0.1)
            c, s = np.cos(theta), np.sin(theta)
            blocks[k:k + 2, k:k + 2] = r * np.array([[c, -s], [s, c]])
            k += 2
        else:
            blocks[k, k] = r * rng.choice([-1.0, 1.0])
            k += 1
    q, _ = np.linalg.qr(rng.standard_normal((state_dim, state_dim)))
    n_obs = int(np.prod(obs_shape))
    c, _ = np.linalg.qr(rng.standard_normal((n_obs, state_dim)))
    return GldsModel(A=q @ blocks @ q.T, C=c, state_shape=(state_dim,),
                     obs_shape=tuple(obs_shape), d=state_dim if d is None else d)


def _class_model(rng, n_joints, state_dim, hip_index):
    model = random_stable_model(rng, state_dim, (n_joints, 3), radius=(0.85, 0.97))
    c = model.C.reshape(n_joints, 3, state_dim, order="F").copy()
    c[hip_index] = 0.0
    c = c.reshape(n_joints * 3, state_dim, order="F")
    c, _ = np.linalg.qr(c)
    return GldsModel(A=model.A, C=c, state_shape=model.state_shape,
                     obs_shape=model.obs_shape, d=state_dim)


def write_synthetic_dataset(root, n_classes=2, n_subjects=4, trials=2, n_frames=40,
                            state_dim=4, noise=0.01, seed=0, n_joints=20, hip_index=0):
    """Write a generic-CSV skeleton dataset whose classes are distinct LDS models.

    Creates ``root/index.csv`` and one ``frame,joint,x,y,z`` CSV per sample.
    The hip joint stays at the origin. Returns the list of written files.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    models = [_class_model(rng, n_joints, state_dim, hip_index) for _ in range(n_classes)]
    written = []
    with open(root / "index.csv", "w", newline="") as fh:
        index = csv.writer(fh)
        index.writerow(["file", "action", "subject", "trial", "view"])
        for a, model in enumerate(models, 1):
            for s in range(1, n_subjects + 1):
                for e in range(1, trials + 1):
                    x0 = rng.standard_normal(state_dim)
                    y = simulate_lds(model, x0, n_frames, noise_scale=noise,
                                     seed=int(rng.integers(2**31)), process_noise_scale=0.0)
                    name = f"a{a:02d}_s{s:02d}_e{e:02d}.csv"
                    with open(root / name, "w", newline="") as out:
                        w = csv.writer(out)
                        w.writerow(["frame", "joint", "x", "y", "z"])
                        for t in range(n_frames):
                            for j in range(n_joints):
                                w.writerow([t, j] + [repr(float(v)) for v in y[j, :, t]])
                    index.writerow([name, a, s, e, ""])
                    written.append(root / name)
    return written
