import numpy as np
import pytest

from mfseg import Blob, DomainExtent, SyntheticSpec, generate_synthetic


UNIT_EXTENT = DomainExtent(0, 10, 0, 10, 0, 10, 0, 4)


def two_blob_spec(seed=7, noise=0.0):
    """Two well-separated blobs along x plus a uniform background."""
    return SyntheticSpec(
        extent=UNIT_EXTENT,
        grid_dims=(12, 8, 8),
        n_field_steps=5,
        n_point_steps=10,
        blobs=(
            Blob(label=1, center=(2.2, 5, 5), radii=(1.4, 1.4, 1.4), t_start=0, t_end=4,
                 field_value=1.0, point_value=1.0, n_trajectories=25),
            Blob(label=2, center=(7.8, 5, 5), radii=(1.4, 1.4, 1.4), t_start=0, t_end=4,
                 field_value=2.0, point_value=2.0, n_trajectories=25),
        ),
        background_field=0.0,
        background_point=0.0,
        n_background_trajectories=20,
        field_noise=noise,
        point_noise=noise,
        seed=seed,
    )


def slab_spec(n_blobs, seed=11, noise=0.0, grid=None, traj_per_blob=20,
              background_traj=20):
    """Box blobs tiling x-slabs, with one pure-background slab in the middle.

    The ground-truth partition coincides with an even split of the x axis into
    ``n_blobs + 1`` slabs, so a run with k=(n_blobs + 1, 1, 1, 1) has a clean
    target to recover.
    """
    n_slabs = n_blobs + 1
    bg_slab = n_slabs // 2
    width = 10.0 / n_slabs
    if grid is None:
        grid = (3 * n_slabs, 6, 6)
    blobs = []
    label = 1
    for s in range(n_slabs):
        if s == bg_slab:
            continue
        blobs.append(Blob(
            label=label, shape="box",
            center=((s + 0.5) * width, 5, 5), radii=(width / 2, 5, 5),
            t_start=0, t_end=4, field_value=float(label), point_value=float(label),
            n_trajectories=traj_per_blob,
        ))
        label += 1
    return SyntheticSpec(
        extent=UNIT_EXTENT,
        grid_dims=grid,
        n_field_steps=5,
        n_point_steps=10,
        blobs=tuple(blobs),
        background_field=0.0,
        background_point=0.0,
        n_background_trajectories=background_traj,
        field_noise=noise,
        point_noise=noise,
        seed=seed,
    )


@pytest.fixture
def extent():
    return UNIT_EXTENT


@pytest.fixture
def two_blob_dataset():
    return generate_synthetic(two_blob_spec())


def brute_force_assign(loc4, vals, cloc, cval, chas, wv, wd, cf):
    """Exhaustive argmin over all centers; the window-free oracle."""
    n = len(loc4)
    labels = np.empty(n, dtype=np.int64)
    for s in range(n):
        d = cloc - loc4[s]
        sst = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2 + (cf * d[:, 3]) ** 2)
        vterm = np.where(chas, wv * np.abs(vals[s] - np.where(chas, cval, 0.0)), 0.0)
        labels[s] = int(np.argmin(vterm + wd * sst))
    return labels


def rand_agreement(a, b):
    """Pairwise (Rand) agreement between two labelings, via the contingency table."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    assert len(b) == n and n >= 2
    pairs = n * (n - 1) // 2

    def comb2(x):
        return (x * (x - 1) // 2).sum()

    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    cont = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(cont, (ai, bi), 1)
    sum_ij = comb2(cont.astype(np.int64))
    sum_a = comb2(cont.sum(axis=1))
    sum_b = comb2(cont.sum(axis=0))
    agree_same = sum_ij
    agree_diff = pairs - sum_a - sum_b + sum_ij
    return (agree_same + agree_diff) / pairs
