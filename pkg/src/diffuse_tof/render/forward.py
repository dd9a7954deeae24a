"""Quadrature forward model for transient histograms.

The same two stages serve plain rendering and differentiation: per-ray
contributions (two-way time and radiometric weight, optionally with their
derivatives w.r.t. the object's vertex parameters), then soft binning into
per-sensor histograms. Values therefore match bit-for-bit between the two
code paths.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

from ..geometry import Part, RayHits, trace_rays
from .jitter import convolve_jitter
from .scene import SceneModel, TransientHistogram
from .sensor import Rig, SensorPose, SensorSpec, generate_ray_grid, laser_intensity

_SIGMOID_SPAN = 40.0  # expit(-40) ~ 4e-18


class RigRays(NamedTuple):
    """All quadrature rays of a rig, concatenated over sensors."""

    origins: np.ndarray  # (R, 3)
    directions: np.ndarray  # (R, 3)
    amplitude: np.ndarray  # (R,) N_emit / pi * Q * I
    sensor: np.ndarray  # (R,) sensor index
    bin_offset: np.ndarray  # (S,) start of each sensor in the flat bin axis
    n_bins: np.ndarray  # (S,)
    bin_width: np.ndarray  # (S,)
    k: np.ndarray  # (S,)
    c: np.ndarray  # (S,)

    @property
    def n_sensors(self) -> int:
        return len(self.n_bins)

    @property
    def n_flat(self) -> int:
        return int(self.n_bins.sum())


def prepare_rays(rig: Rig) -> RigRays:
    origins, dirs, amps, sensor = [], [], [], []
    for s, (spec, pose) in enumerate(zip(rig.specs, rig.poses)):
        grid = generate_ray_grid(spec, pose)
        intensity = laser_intensity(grid.local_directions, spec.intensity_k, spec.intensity_model)
        amps.append(spec.n_emit / np.pi * grid.weights * intensity)
        origins.append(np.broadcast_to(grid.origin, grid.directions.shape))
        dirs.append(grid.directions)
        sensor.append(np.full(len(grid.weights), s, dtype=np.int64))
    n_bins = np.array([sp.n_bins for sp in rig.specs], dtype=np.int64)
    return RigRays(
        np.concatenate(origins),
        np.concatenate(dirs),
        np.concatenate(amps),
        np.concatenate(sensor),
        np.concatenate([[0], np.cumsum(n_bins)[:-1]]).astype(np.int64),
        n_bins,
        np.array([sp.bin_width_s for sp in rig.specs]),
        np.array([sp.k for sp in rig.specs]),
        np.array([sp.c for sp in rig.specs]),
    )


class Contributions(NamedTuple):
    """Rays with non-zero radiance and their per-ray quantities."""

    sensor: np.ndarray
    tau: np.ndarray  # two-way travel time (s)
    weight: np.ndarray  # N_emit/pi * Q * I * cos / t^2, unit albedo
    part: np.ndarray
    dtau: np.ndarray | None  # (r, P) object rays only, zero for plane rays
    dweight: np.ndarray | None


def ray_contributions(rays: RigRays, scene: SceneModel, vertex_jacobian: np.ndarray | None = None,
                      hits: RayHits | None = None) -> Contributions:
    """Closest-hit shading of every ray.

    ``vertex_jacobian`` has shape ``(n_vertices, 3, P)`` and holds the
    derivatives of the object's world vertices w.r.t. ``P`` scene
    parameters; hit triangles are frozen (no visibility gradients).
    Passing ``hits`` skips ray casting and shades the given triangle/plane
    assignment, which is how the frozen-visibility function is evaluated
    away from the parameters it was traced at.
    """
    if hits is None:
        hits = trace_rays(scene.placed_object, scene.plane, rays.origins, rays.directions)
    want_grad = vertex_jacobian is not None
    n_par = vertex_jacobian.shape[2] if want_grad else 0

    sensors, taus, weights, parts, dtaus, dweights = [], [], [], [], [], []

    obj = np.flatnonzero(hits.part == Part.OBJECT)
    if len(obj):
        placed = scene.placed_object
        o = rays.origins[obj]
        w = rays.directions[obj]
        tri_idx = placed.triangles[hits.triangle[obj]]
        v = placed.world_vertices[tri_idx]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        n = np.cross(e1, e2)
        nn = np.linalg.norm(n, axis=1)
        denom = np.einsum("ij,ij->i", w, n)
        t = np.einsum("ij,ij->i", v[:, 0] - o, n) / denom
        cos = -denom / nn
        keep = (cos > 0) & (t > 0)
        c = rays.c[rays.sensor[obj]]
        amp = rays.amplitude[obj]
        g = amp * cos / t**2
        sensors.append(rays.sensor[obj][keep])
        taus.append((2 * t / c)[keep])
        weights.append(g[keep])
        parts.append(np.full(int(keep.sum()), Part.OBJECT))
        if want_grad:
            b = hits.barycentric[obj]
            nhat = n / nn[:, None]
            # d t / d v_k = b_k n / (w . n)
            dt_dv = b[:, :, None] * (n / denom[:, None])[:, None, :]
            a_vec = -(w - np.einsum("ij,ij->i", nhat, w)[:, None] * nhat) / nn[:, None]
            dc_dv1 = np.cross(e2, a_vec)
            dc_dv2 = np.cross(a_vec, e1)
            dc_dv = np.stack([-(dc_dv1 + dc_dv2), dc_dv1, dc_dv2], axis=1)
            dt_dp = np.zeros((len(obj), n_par))
            dc_dp = np.zeros((len(obj), n_par))
            for kv in range(3):
                jk = vertex_jacobian[tri_idx[:, kv]]
                dt_dp += np.einsum("ra,rap->rp", dt_dv[:, kv], jk)
                dc_dp += np.einsum("ra,rap->rp", dc_dv[:, kv], jk)
            dg_dp = (-2 * g / t)[:, None] * dt_dp + (amp / t**2)[:, None] * dc_dp
            dtaus.append(((2 / c)[:, None] * dt_dp)[keep])
            dweights.append(dg_dp[keep])

    pl = np.flatnonzero(hits.part == Part.PLANE)
    if len(pl):
        plane = scene.plane
        o = rays.origins[pl]
        w = rays.directions[pl]
        denom = w @ plane.normal
        t = ((plane.point - o) @ plane.normal) / denom
        cos = -denom
        keep = (cos > 0) & (t > 0)
        c = rays.c[rays.sensor[pl]]
        g = rays.amplitude[pl] * cos / t**2
        sensors.append(rays.sensor[pl][keep])
        taus.append((2 * t / c)[keep])
        weights.append(g[keep])
        parts.append(np.full(int(keep.sum()), Part.PLANE))
        if want_grad:
            nk = int(keep.sum())
            dtaus.append(np.zeros((nk, n_par)))
            dweights.append(np.zeros((nk, n_par)))

    def cat(xs, dtype=float, width=None):
        if xs:
            return np.concatenate(xs)
        return np.zeros((0,) if width is None else (0, width), dtype=dtype)

    return Contributions(
        cat(sensors, np.int64),
        cat(taus),
        cat(weights),
        cat(parts, np.int64),
        cat(dtaus, width=n_par) if want_grad else None,
        cat(dweights, width=n_par) if want_grad else None,
    )


def half_window(k: float, bin_width: float, n_bins: int) -> int:
    """Bins on either side of the hit bin where the soft weight is non-negligible."""
    return int(min(n_bins, math.ceil(_SIGMOID_SPAN / (k * bin_width)) + 1))


@numba.njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def _soft_bin_kernel(offset, tau, weight, is_obj, dt, k, nb, hw, dtau, dweight, parts, jac):
    n_par = jac.shape[1]
    for r in range(tau.shape[0]):
        base = int(math.floor(tau[r] / dt[r]))
        lo = max(base - hw, 0)
        hi = min(base + hw, nb[r] - 1)
        if lo > hi:
            continue
        col = 0 if is_obj[r] else 1
        x = k[r] * (tau[r] - lo * dt[r])
        step = k[r] * dt[r]
        s_lead = _sigmoid(x)
        for i in range(lo, hi + 1):
            # the trailing edge of bin i is the leading edge of bin i + 1
            s_trail = _sigmoid(x - step)
            w = s_lead - s_trail
            parts[offset[r] + i, col] += weight[r] * w
            if n_par > 0 and is_obj[r]:
                dw = k[r] * (s_lead * (1.0 - s_lead) - s_trail * (1.0 - s_trail))
                gw = weight[r] * dw
                for p in range(n_par):
                    jac[offset[r] + i, p] += w * dweight[r, p] + gw * dtau[r, p]
            s_lead = s_trail
            x -= step


def bin_contributions(rays: RigRays, contrib: Contributions):
    """Soft-bin contributions into unit-albedo part histograms.

    Returns ``parts`` of shape ``(n_flat, 2)`` (object, plane) and, when the
    contributions carry derivatives, the object Jacobian ``(n_flat, P)``.
    """
    s = contrib.sensor
    hw = max((half_window(rays.k[i], rays.bin_width[i], rays.n_bins[i]) for i in range(rays.n_sensors)), default=0)
    want_grad = contrib.dtau is not None
    n_par = contrib.dtau.shape[1] if want_grad else 0
    parts = np.zeros((rays.n_flat, 2))
    jac = np.zeros((rays.n_flat, n_par))
    empty = np.zeros((len(s), 0))
    _soft_bin_kernel(
        rays.bin_offset[s], contrib.tau, contrib.weight, contrib.part == Part.OBJECT,
        rays.bin_width[s], rays.k[s], rays.n_bins[s], hw,
        contrib.dtau if want_grad else empty, contrib.dweight if want_grad else empty,
        parts, jac,
    )
    return parts, (jac if want_grad else None)


def split_sensors(rays: RigRays, flat: np.ndarray) -> list[np.ndarray]:
    return [flat[o:o + n] for o, n in zip(rays.bin_offset, rays.n_bins)]


def render_parts(rays: RigRays, scene: SceneModel, vertex_jacobian=None, hits: RayHits | None = None):
    """Pre-jitter unit-albedo part histograms (and object Jacobian) for a rig."""
    return bin_contributions(rays, ray_contributions(rays, scene, vertex_jacobian, hits))


def _single_rig(spec: SensorSpec, pose: SensorPose) -> Rig:
    return Rig([pose], spec)


def render_raw(scene: SceneModel, spec: SensorSpec, pose: SensorPose, sensor_id: int = 0) -> TransientHistogram:
    """Expected photon counts per bin before jitter and temporal offset."""
    rays = prepare_rays(_single_rig(spec, pose))
    parts, _ = render_parts(rays, scene)
    counts = scene.albedo_object * parts[:, 0] + scene.albedo_plane * parts[:, 1]
    return TransientHistogram(counts, spec.bin_width_s, sensor_id)


def render(scene: SceneModel, spec: SensorSpec, pose: SensorPose, sensor_id: int = 0,
           poisson: bool = False, rng: np.random.Generator | None = None) -> TransientHistogram:
    """Jittered, offset histogram; optionally Poisson-sampled (off by default)."""
    hist = convolve_jitter(render_raw(scene, spec, pose, sensor_id), spec)
    if poisson:
        rng = np.random.default_rng() if rng is None else rng
        hist = TransientHistogram(rng.poisson(np.maximum(hist.counts, 0.0)).astype(float), hist.bin_width_s, sensor_id)
    return hist


def render_rig(scene: SceneModel, rig: Rig, rays: RigRays | None = None,
               poisson: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Histograms for every sensor of ``rig``, stacked as ``(S, n_bins)``.

    Sensors must share ``n_bins`` for stacking; use :func:`render` per
    sensor otherwise.
    """
    rays = prepare_rays(rig) if rays is None else rays
    parts, _ = render_parts(rays, scene)
    raw = scene.albedo_object * parts[:, 0] + scene.albedo_plane * parts[:, 1]
    out = np.stack([
        convolve_jitter(h, spec) for h, spec in zip(split_sensors(rays, raw), rig.specs)
    ])
    if poisson:
        rng = np.random.default_rng() if rng is None else rng
        out = rng.poisson(np.maximum(out, 0.0)).astype(float)
    return out
