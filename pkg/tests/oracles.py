"""Slow reference implementations written from the definitions, sharing no code with the package."""

import math


def window(kind, n, c=1.0):
    if kind == "hann":
        if n == 1:
            return [1.0]
        return [0.5 * (1.0 - math.cos(2.0 * math.pi * i / (n - 1))) for i in range(n)]
    if kind == "uniform":
        return [1.0] * n
    zm = [1.0 if i < n // 2 else -1.0 for i in range(n)]
    if kind == "zero_mean":
        return zm
    dc = [w + c for w in zm]
    if kind == "dc":
        return dc
    if kind == "dc_flipped":
        return dc[::-1]
    raise ValueError(kind)


def subaperture(z, x, f_number, pitch, n_elements):
    """(first, length) by exhaustive search over candidate placements."""
    n = int(math.floor(z / (f_number * pitch) + 1e-9))
    n -= n % 2
    n = min(max(n, 2), max(2, n_elements - n_elements % 2))
    x0 = -(n_elements - 1) / 2.0 * pitch
    best = None
    for first in range(-n - 2, n_elements + 2):
        centre = x0 + (first + (n - 1) / 2.0) * pitch
        key = (round(abs(centre - x) / pitch, 9), -first)  # ties go to the larger index
        if best is None or key < best[0]:
            best = (key, first)
    first = min(max(best[1], -(n - 1)), n_elements - 1)
    return first, n


def das(samples, time_zero, angles_deg, pitch, fs, c, f_number, xs, zs, kind, dc=1.0):
    """out[a][iz][ix] by direct delay-and-sum with linear interpolation, zero outside the record."""
    n_a, n_e, n_s = len(samples), len(samples[0]), len(samples[0][0])
    x0 = -(n_e - 1) / 2.0 * pitch
    out = [[[0.0] * len(xs) for _ in zs] for _ in range(n_a)]
    for a in range(n_a):
        th = math.radians(angles_deg[a])
        for iz, z in enumerate(zs):
            for ix, x in enumerate(xs):
                first, n = subaperture(z, x, f_number, pitch, n_e)
                w = window(kind, n, dc)
                acc = 0.0
                for j in range(n):
                    e = first + j
                    if e < 0 or e >= n_e:
                        continue
                    ex = x0 + e * pitch
                    t = (z * math.cos(th) + x * math.sin(th)) / c + math.sqrt(z * z + (x - ex) ** 2) / c
                    pos = (t - time_zero[a]) * fs
                    if pos < 0 or pos > n_s - 1:
                        v = 0.0
                    else:
                        k = int(pos)
                        v = samples[a][e][k] if k == n_s - 1 else \
                            samples[a][e][k] * (1 - (pos - k)) + samples[a][e][k + 1] * (pos - k)
                    acc += w[j] * v
                out[a][iz][ix] = acc
    return out
