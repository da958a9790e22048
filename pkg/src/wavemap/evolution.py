"""Radial flows on (0, r_max]: the wave-map equation and its linearization.

Nonlinear flow (f = g g'):

    psi_tt = psi_rr + psi_r / r - f(psi) / r^2

Linearized flow at a root l of g:

    phi_tt = phi_rr + phi_r / r - g'(l)^2 phi / r^2

Both are advanced by an explicit leapfrog (velocity Verlet) on (psi, psi_t)
with a flux-form second-order radial Laplacian.  Nodes sit at r_i = i dr,
i = 1..n; the origin enters only through the regularized ghost value
(psi(0) = ell0, phi(0) = 0), and the outer boundary is fixed by default
(an approximate absorbing variant is available).  The time step obeys
dt <= 0.5 dr; steps refusing the CFL bound raise instead of running.

Blow-up is watched through the Struwe-style concentration criterion: the
smallest radius rho with E(psi(t); 0, rho) at least one bubble energy.  If
that radius shrinks to a few grid spacings (or the state goes NaN), the
trajectory is truncated and a blow-up record is attached.

Snapshot file format (text, 17 significant digits):

    # wavemap-snapshot v1
    # metric <id>
    # ell0 <value> ell_inf <value>
    # t <time>
    <r> <psi> <psi_dot>     one row per node

A trajectory directory holds one snapshot per frame (frame-NNNNNN.dat),
a meta.txt with run parameters, and the series.csv written by the cli.
"""

import math
import os
from dataclasses import dataclass, field as dataclass_field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .geometry import GeometryError, Metric, Root, eval_G, find_vanishing_set

CFL_DEFAULT = 0.5
FMT = "%.17g"


class EvolutionError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    """Uniform nodes r_i = i dr, i = 1..n_points, so r_n = r_max."""
    r_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 4:
            raise EvolutionError("grid needs at least 4 nodes")
        if self.r_max <= 0:
            raise EvolutionError("r_max must be positive")

    @property
    def dr(self):
        return self.r_max / self.n_points

    @cached_property
    def r(self):
        return np.arange(1, self.n_points + 1) * self.dr


@dataclass
class RadialField:
    """State (psi, psi_t) on a grid at one time.

    ell0 and ell_inf are the boundary values the field hangs from: roots of
    g for nonlinear fields, 0 for perturbation fields of the linear flow.
    """
    grid: RadialGrid
    psi: np.ndarray
    psi_dot: np.ndarray
    ell0: float
    ell_inf: float
    time: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.psi_dot = np.asarray(self.psi_dot, dtype=float)
        if self.psi.shape != (self.grid.n_points,) or \
                self.psi_dot.shape != (self.grid.n_points,):
            raise EvolutionError("field arrays must match the grid")

    def copy(self):
        return RadialField(self.grid, self.psi.copy(), self.psi_dot.copy(),
                           self.ell0, self.ell_inf, self.time)

    def gradient(self):
        """d_r psi on nodes: central differences with the origin ghost,
        one-sided at the outer boundary."""
        dr = self.grid.dr
        out = np.empty_like(self.psi)
        out[0] = (self.psi[1] - self.ell0) / (2 * dr)
        out[1:-1] = (self.psi[2:] - self.psi[:-2]) / (2 * dr)
        out[-1] = (self.psi[-1] - self.psi[-2]) / dr
        return out


@dataclass
class BlowupRecord:
    t_plus: float                 # estimated blow-up time
    concentration_radius: float   # argmax of local energy density at detection
    last_valid_time: float
    reason: str                   # "energy-concentration" or "nan"
    radius_series: list           # (t, rho) pairs from the Struwe criterion


@dataclass
class Trajectory:
    snapshots: list
    dt: float
    scheme: str
    cfl: float
    system: Union[Metric, Root, None] = None
    blowup: Optional[BlowupRecord] = None
    meta: dict = dataclass_field(default_factory=dict)

    @property
    def times(self):
        return np.array([s.time for s in self.snapshots])

    def frame_at(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[k]


def _check_cfl(grid, dt):
    if dt > CFL_DEFAULT * grid.dr * (1 + 1e-12):
        raise EvolutionError(
            f"CFL violation: dt = {dt:.6g} exceeds 0.5 dr = "
            f"{0.5 * grid.dr:.6g}")


def _accel(psi, grid, ghost, source):
    """Flux-form radial Laplacian minus the zeroth-order source.

    L psi_i = (r_{i+1/2}(psi_{i+1}-psi_i) - r_{i-1/2}(psi_i-psi_{i-1}))
              / (r_i dr^2), ghost = psi(0).
    The last node's acceleration is set by the boundary handler, not here.
    """
    r = grid.r
    dr = grid.dr
    d = np.diff(psi, prepend=ghost)           # psi_i - psi_{i-1}
    flux = (r - 0.5 * dr) * d                 # face r_{i-1/2} times jump
    lap = np.empty_like(psi)
    lap[:-1] = (flux[1:] - flux[:-1]) / (r[:-1] * dr * dr)
    lap[-1] = 0.0
    a = lap - source
    a[-1] = 0.0
    return a


def _nonlinear_accel(psi, grid, metric, ell0):
    return _accel(psi, grid, ell0, metric.f(psi) / grid.r ** 2)


def _linear_accel(phi, grid, slope_sq):
    return _accel(phi, grid, 0.0, slope_sq * phi / grid.r ** 2)


def _apply_boundary(psi, psi_dot, grid, boundary, ell_inf):
    if boundary == "fixed":
        psi_dot[-1] = 0.0
    elif boundary == "absorbing":
        # approximate outgoing condition psi_t = -psi_r - (psi - ell_inf)/(2r)
        psi_dot[-1] = (-(psi[-1] - psi[-2]) / grid.dr
                       - (psi[-1] - ell_inf) / (2 * grid.r[-1]))
    else:
        raise EvolutionError(f"unknown boundary {boundary!r}")


def step_nonlinear(field, metric, dt, boundary="fixed"):
    """One leapfrog step of the wave-map flow; returns a new field."""
    _check_cfl(field.grid, abs(dt))
    psi, psi_dot = field.psi.copy(), field.psi_dot.copy()
    a = _nonlinear_accel(psi, field.grid, metric, field.ell0)
    psi_dot += 0.5 * dt * a
    _apply_boundary(psi, psi_dot, field.grid, boundary, field.ell_inf)
    psi += dt * psi_dot
    a = _nonlinear_accel(psi, field.grid, metric, field.ell0)
    psi_dot += 0.5 * dt * a
    _apply_boundary(psi, psi_dot, field.grid, boundary, field.ell_inf)
    return RadialField(field.grid, psi, psi_dot, field.ell0, field.ell_inf,
                       field.time + dt)


def step_linear(field, ell, dt, boundary="fixed"):
    """One leapfrog step of the linearized flow at the root `ell`."""
    _check_cfl(field.grid, abs(dt))
    slope_sq = ell.slope ** 2
    phi, phi_dot = field.psi.copy(), field.psi_dot.copy()
    a = _linear_accel(phi, field.grid, slope_sq)
    phi_dot += 0.5 * dt * a
    _apply_boundary(phi, phi_dot, field.grid, boundary, field.ell_inf)
    phi += dt * phi_dot
    a = _linear_accel(phi, field.grid, slope_sq)
    phi_dot += 0.5 * dt * a
    _apply_boundary(phi, phi_dot, field.grid, boundary, field.ell_inf)
    return RadialField(field.grid, phi, phi_dot, field.ell0, field.ell_inf,
                       field.time + dt)


@dataclass
class TransformedField:
    """phi / r^k with the weight exponent of the flat norm it lives in."""
    grid: RadialGrid
    values: np.ndarray
    weight_exponent: float    # 1 + 2|g'(l)|: norm is int |d_r .|^2 r^w dr
    slope: float


def transform_T(field, ell):
    """T phi = phi / r^{|g'(l)|}, mapping the linear flow at l to a free
    radial wave in 2 + 2|g'(l)| space dimensions.

    |g'(l)| is used (the sign convention psi -> -psi absorbs negative
    slopes).  Fields must vanish like r^{|g'(l)|} at the origin to lie in
    the image domain; a diverging transformed profile is rejected.
    """
    k = abs(ell.slope)
    k_int = round(k)
    if abs(k - k_int) > 1e-9 or k_int < 1:
        raise EvolutionError(
            f"transform needs a positive integer slope, got g'(l) = {ell.slope}")
    r = field.grid.r
    vals = field.psi / r ** k_int
    head = np.abs(vals[:8])
    tail_scale = np.median(head[4:]) + 1e-300
    if head[0] > 4.0 * tail_scale and head[0] > 1e-12:
        raise EvolutionError(
            "field not in the image domain of T: profile diverges at the "
            f"origin after dividing by r^{k_int}")
    return TransformedField(field.grid, vals, 1.0 + 2.0 * k_int, float(k))


def discrete_energy(field, system):
    """The flux-form energy the leapfrog integrator actually conserves.

    Gradient terms live on half nodes (matching the discrete Laplacian's
    summation-by-parts structure), kinetic and zeroth-order terms on
    nodes, with the r = 0 ghost carrying ell0:

        sum_i r_i dr psidot_i^2
          + sum_links r_{i+1/2} (psi_{i+1} - psi_i)^2 / dr
          + sum_i g(psi_i)^2 / r_i dr          (nonlinear)
            resp. g'(l)^2 psi_i^2 / r_i dr     (linear).

    Drift of this quantity isolates time-integration error from
    quadrature mismatch; it agrees with the trapezoid energy to O(dr^2).
    """
    grid = field.grid
    r, dr = grid.r, grid.dr
    psi_ext = np.concatenate([[field.ell0], field.psi])
    jumps = np.diff(psi_ext)
    r_half = np.concatenate([[0.5 * dr], 0.5 * (r[1:] + r[:-1])])
    kinetic = float(np.sum(r * dr * field.psi_dot ** 2))
    gradient = float(np.sum(r_half * jumps ** 2 / dr))
    if isinstance(system, Metric):
        zeroth = float(np.sum(np.asarray(system.g(field.psi)) ** 2 / r * dr))
    else:
        zeroth = float(np.sum(system.slope ** 2 * field.psi ** 2 / r * dr))
    return kinetic + gradient + zeroth


def min_bubble_energy(metric, ell0):
    """Least connector energy attachable at the root ell0 (inf if none)."""
    vset = find_vanishing_set(metric)
    try:
        root = vset.root_at(ell0)
    except GeometryError:
        return math.inf
    energies = []
    for side in (+1, -1):
        nb = vset.neighbor(root.value, side)
        if nb is not None:
            energies.append(2 * abs(eval_G(metric, nb.value)
                                    - eval_G(metric, root.value)))
    return min(energies) if energies else math.inf


def _energy_prefix(field, system):
    """Cumulative trapezoid of the energy density from r=0 (ghost node)."""
    r = field.grid.r
    grad = field.gradient()
    if isinstance(system, Metric):
        pot = system.g(field.psi) ** 2 / r
    else:
        pot = system.slope ** 2 * field.psi ** 2 / r
    dens = field.psi_dot ** 2 * r + grad ** 2 * r + pot
    dens_ext = np.concatenate([[0.0], dens])
    r_ext = np.concatenate([[0.0], r])
    return r_ext, np.concatenate(
        [[0.0], np.cumsum(0.5 * (dens_ext[1:] + dens_ext[:-1]) * np.diff(r_ext))])


def _concentration_radius(field, metric, e_crit):
    """Smallest node radius enclosing energy e_crit, or None."""
    r_ext, prefix = _energy_prefix(field, metric)
    idx = np.searchsorted(prefix, e_crit)
    if idx >= len(prefix):
        return None
    return float(r_ext[idx])


def evolve(field, system, t_final, record_every=64, cfl=CFL_DEFAULT,
           boundary="fixed", detect_blowup=True, blowup_floor_nodes=24):
    """Advance a field to t_final, recording frames every `record_every`
    steps (the initial and final states are always frames).

    `system` selects the flow: a Metric runs the nonlinear wave-map
    equation, a Root the linearization at that root.  On numerical blow-up
    the trajectory is truncated at the last recorded frame and a
    BlowupRecord is attached.  Detection fires when the radius enclosing
    one bubble energy shrinks over consecutive frames down to
    blowup_floor_nodes grid cells; under-resolved focusing bounces at
    10-20 cells, so the floor sits above that.
    """
    grid = field.grid
    dt = cfl * grid.dr
    _check_cfl(grid, dt)
    if t_final <= 0:
        raise EvolutionError("t_final must be positive")
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-9)))

    nonlinear = isinstance(system, Metric)
    if nonlinear:
        scheme = f"leapfrog-nonlinear:{system.id}"
        accel = lambda psi: _nonlinear_accel(psi, grid, system, field.ell0)
        e_crit = min_bubble_energy(system, field.ell0)
    else:
        scheme = f"leapfrog-linear:ell={system.value:.12g}"
        slope_sq = system.slope ** 2
        accel = lambda phi: _linear_accel(phi, grid, slope_sq)
        e_crit = math.inf

    psi = field.psi.copy()
    psi_dot = field.psi_dot.copy()
    t = field.time
    snapshots = [field.copy()]
    blowup = None
    radius_series = []
    floor = blowup_floor_nodes * grid.dr

    a = accel(psi)
    for step in range(1, n_steps + 1):
        psi_dot += 0.5 * dt * a
        _apply_boundary(psi, psi_dot, grid, boundary, field.ell_inf)
        psi += dt * psi_dot
        a = accel(psi)
        psi_dot += 0.5 * dt * a
        _apply_boundary(psi, psi_dot, grid, boundary, field.ell_inf)
        t = field.time + step * dt

        if step % record_every == 0 or step == n_steps:
            if not np.all(np.isfinite(psi)) or not np.all(np.isfinite(psi_dot)):
                last = snapshots[-1]
                blowup = BlowupRecord(
                    t_plus=t, concentration_radius=float("nan"),
                    last_valid_time=last.time, reason="nan",
                    radius_series=radius_series)
                break
            frame = RadialField(grid, psi.copy(), psi_dot.copy(),
                                field.ell0, field.ell_inf, t)
            snapshots.append(frame)
            if detect_blowup and nonlinear and math.isfinite(e_crit):
                rho = _concentration_radius(frame, system, e_crit)
                if rho is not None:
                    radius_series.append((t, rho))
                    if rho <= floor and _shrinking(radius_series):
                        blowup = _make_blowup_record(
                            frame, system, radius_series)
                        break

    return Trajectory(snapshots=snapshots, dt=dt, scheme=scheme, cfl=cfl,
                      system=system, blowup=blowup,
                      meta={"boundary": boundary,
                            "record_every": record_every})


def _shrinking(series, window=3):
    if len(series) < window:
        return False
    rhos = [rho for _, rho in series[-window:]]
    return all(b <= a for a, b in zip(rhos, rhos[1:]))


def _make_blowup_record(frame, metric, radius_series):
    r = frame.grid.r
    grad = frame.gradient()
    dens = frame.psi_dot ** 2 + grad ** 2 + metric.g(frame.psi) ** 2 / r ** 2
    r_peak = float(r[int(np.argmax(dens))])
    ts = np.array([t for t, _ in radius_series[-5:]])
    rhos = np.array([rho for _, rho in radius_series[-5:]])
    t_plus = frame.time + rhos[-1]
    if len(ts) >= 2:
        beta, alpha = np.polyfit(ts, rhos, 1)
        if beta < -1e-12:
            t_fit = -alpha / beta
            if frame.time < t_fit < frame.time + 2 * rhos[-1] + 10 * frame.grid.dr:
                t_plus = float(t_fit)
    return BlowupRecord(t_plus=t_plus, concentration_radius=r_peak,
                        last_valid_time=frame.time,
                        reason="energy-concentration",
                        radius_series=radius_series)


# ---------------------------------------------------------------------------
# snapshot and trajectory I/O

def write_snapshot(field, path, metric_id):
    with open(path, "w") as fh:
        fh.write("# wavemap-snapshot v1\n")
        fh.write(f"# metric {metric_id}\n")
        fh.write(f"# ell0 {FMT % field.ell0} ell_inf {FMT % field.ell_inf}\n")
        fh.write(f"# t {FMT % field.time}\n")
        for r, p, pd in zip(field.grid.r, field.psi, field.psi_dot):
            fh.write(f"{FMT % r} {FMT % p} {FMT % pd}\n")


def read_snapshot(path):
    """Returns (RadialField, metric_id)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "# wavemap-snapshot v1":
            raise EvolutionError(f"{path}: not a wavemap snapshot (v1)")
        metric_id = fh.readline().split()[2]
        parts = fh.readline().split()
        ell0, ell_inf = float(parts[2]), float(parts[4])
        t = float(fh.readline().split()[2])
        rows = np.loadtxt(fh, ndmin=2)
    r, psi, psi_dot = rows[:, 0], rows[:, 1], rows[:, 2]
    dr = r[0]
    if np.max(np.abs(np.diff(r) - dr)) > 1e-9 * dr:
        raise EvolutionError(f"{path}: nodes are not uniform")
    grid = RadialGrid(r_max=float(r[-1]), n_points=len(r))
    return RadialField(grid, psi, psi_dot, ell0, ell_inf, t), metric_id


def write_trajectory(traj, dirpath, metric_id=None):
    if metric_id is None:
        metric_id = traj.system.id if isinstance(traj.system, Metric) \
            else "none"
    os.makedirs(dirpath, exist_ok=True)
    for k, snap in enumerate(traj.snapshots):
        write_snapshot(snap, os.path.join(dirpath, f"frame-{k:06d}.dat"),
                       metric_id)
    with open(os.path.join(dirpath, "meta.txt"), "w") as fh:
        fh.write(f"scheme = {traj.scheme}\n")
        fh.write(f"dt = {FMT % traj.dt}\n")
        fh.write(f"cfl = {FMT % traj.cfl}\n")
        fh.write(f"frames = {len(traj.snapshots)}\n")
        for key, value in traj.meta.items():
            fh.write(f"{key} = {value}\n")
        if isinstance(traj.system, Root):
            fh.write(f"ell = {FMT % traj.system.value}\n")
            fh.write(f"slope = {FMT % traj.system.slope}\n")
            fh.write(f"gap = {FMT % traj.system.gap}\n")
        if traj.blowup is not None:
            b = traj.blowup
            fh.write(f"blowup_t_plus = {FMT % b.t_plus}\n")
            fh.write(f"blowup_radius = {FMT % b.concentration_radius}\n")
            fh.write(f"blowup_reason = {b.reason}\n")
            fh.write(f"blowup_last_valid = {FMT % b.last_valid_time}\n")


def read_trajectory(dirpath, metric=None):
    """Load a trajectory directory.  Returns (Trajectory, metric_id).

    The system is reattached when possible: the stored root for linear
    runs, or `metric` / a built-in looked up by id for nonlinear ones.
    """
    from .geometry import get_metric
    names = sorted(n for n in os.listdir(dirpath)
                   if n.startswith("frame-") and n.endswith(".dat"))
    if not names:
        raise EvolutionError(f"{dirpath}: no frames found")
    snapshots, metric_id = [], None
    for name in names:
        snap, metric_id = read_snapshot(os.path.join(dirpath, name))
        snapshots.append(snap)
    meta = {}
    meta_path = os.path.join(dirpath, "meta.txt")
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            for line in fh:
                if "=" in line:
                    key, value = line.split("=", 1)
                    meta[key.strip()] = value.strip()
    scheme = meta.get("scheme", "unknown")
    dt = float(meta.get("dt", "nan"))
    cfl = float(meta.get("cfl", "nan"))
    system = None
    if scheme.startswith("leapfrog-linear") and "ell" in meta:
        system = Root(float(meta["ell"]), float(meta["slope"]),
                      float(meta.get("gap", "inf")))
    elif scheme.startswith("leapfrog-nonlinear"):
        if metric is not None:
            system = metric
        else:
            try:
                system = get_metric(metric_id)
            except GeometryError:
                system = None
    blowup = None
    if "blowup_t_plus" in meta:
        blowup = BlowupRecord(
            t_plus=float(meta["blowup_t_plus"]),
            concentration_radius=float(meta["blowup_radius"]),
            last_valid_time=float(meta["blowup_last_valid"]),
            reason=meta.get("blowup_reason", "unknown"), radius_series=[])
    traj = Trajectory(snapshots=snapshots, dt=dt, scheme=scheme, cfl=cfl,
                      system=system, blowup=blowup, meta=meta)
    return traj, metric_id
