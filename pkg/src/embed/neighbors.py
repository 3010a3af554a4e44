"""
Neighbourhood statistics of an embedding.
"""

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.utils.errors import ContractError


def knn_label_spread(coords, labels, k: int = 10) -> float:
    """
    Mean absolute label difference between every point and its ``k`` nearest neighbours.

    Parameters
    ----------
    coords : array-like, shape (N, d)
        Embedding coordinates.
    labels : array-like, shape (N,)
        EF of every point.
    k : int
        Neighbours per point, excluding the point itself.

    Returns
    -------
    float
        Smaller values mean points with similar EF sit closer together.

    Raises
    ------
    ContractError
        If ``k`` is not in ``[1, N - 1]`` or the inputs differ in length.
    """
    coords = np.asarray(coords, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = coords.shape[0]
    if labels.shape[0] != n:
        raise ContractError(f"{n} points but {labels.shape[0]} labels")
    if not 1 <= k <= n - 1:
        raise ContractError(f"k must be in [1, {n - 1}], got {k}")
    finder = NearestNeighbors(n_neighbors=k + 1, algorithm="brute").fit(coords)
    _, index = finder.kneighbors(coords)
    spread = np.empty(n)
    for i in range(n):
        # drop the point itself; with duplicates it may not come first
        others = index[i][index[i] != i][:k]
        spread[i] = np.mean(np.abs(labels[others] - labels[i]))
    return float(spread.mean())
