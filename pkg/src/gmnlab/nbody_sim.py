"""Constrained N-body simulator: charged particles, sticks and hinges.

Every particle has unit mass. ``simulate`` uses kick-drift-kick leapfrog by
default; the ``step_*`` functions are single semi-implicit Euler steps.
Sticks and hinges are integrated in generalized coordinates (a pivot position
plus one angular velocity per arm); after each step the arms are rotated by
``rotate(omega * dt)`` and rescaled to their rest length, so constraints hold
up to rounding.

All routines operate on arrays with optional leading batch axes, which lets a
whole dataset be simulated at once.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import geom3

DEFAULT_DT = 1e-3
DEFAULT_STEPS = 1000
DEFAULT_SOFTENING = 1e-2
FORMAT_VERSION = 1

PARTICLE, STICK, HINGE = "particle", "stick", "hinge"


class DegenerateArmError(ArithmeticError):
    pass


class MalformedDatasetError(ValueError):
    def __init__(self, message, offset):
        super().__init__("%s (byte offset %d)" % (message, offset))
        self.offset = offset


@dataclass(frozen=True)
class SystemSpec:
    p: int
    s: int
    h: int
    stick_length_range: tuple = (0.5, 1.0)
    box_scale: float = 1.0
    charges: tuple = None

    def __post_init__(self):
        if min(self.p, self.s, self.h) < 0:
            raise ValueError("object counts must be non-negative: %s" % ((self.p, self.s, self.h),))
        lo, hi = self.stick_length_range
        if not 0 < lo <= hi:
            raise ValueError("invalid stick_length_range %s" % (self.stick_length_range,))
        if self.charges is not None and len(self.charges) != self.n_particles:
            raise ValueError("need %d charges, got %d" % (self.n_particles, len(self.charges)))

    @property
    def n_particles(self):
        return self.p + 2 * self.s + 3 * self.h

    def label(self):
        return "%d-%d-%d" % (self.p, self.s, self.h)

    def to_json(self):
        return {
            "p": self.p,
            "s": self.s,
            "h": self.h,
            "stick_length_range": list(self.stick_length_range),
            "box_scale": self.box_scale,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["p"], obj["s"], obj["h"], tuple(obj["stick_length_range"]), obj["box_scale"])


@dataclass(frozen=True)
class RigidObject:
    """A particle, stick or hinge. ``pivot`` is ``None`` for the stick's virtual centre."""

    kind: str
    members: tuple
    pivot: int = None

    def __post_init__(self):
        want = {PARTICLE: 1, STICK: 2, HINGE: 3}.get(self.kind)
        if want is None or len(self.members) != want:
            raise ValueError("bad rigid object %s %s" % (self.kind, self.members))

    def arms(self):
        """Constrained member pairs, as used by the constraint error."""
        if self.kind == STICK:
            return [(self.members[0], self.members[1])]
        if self.kind == HINGE:
            return [(self.members[0], self.members[1]), (self.members[0], self.members[2])]
        return []


def canonical_objects(spec):
    """Particles first, then sticks, then hinges, with contiguous member indices."""
    objs = [RigidObject(PARTICLE, (i,), i) for i in range(spec.p)]
    base = spec.p
    for k in range(spec.s):
        objs.append(RigidObject(STICK, (base + 2 * k, base + 2 * k + 1), None))
    base += 2 * spec.s
    for k in range(spec.h):
        i = base + 3 * k
        objs.append(RigidObject(HINGE, (i, i + 1, i + 2), i))
    return objs


class Layout:
    """Index arrays grouping the nodes of a system by object kind."""

    def __init__(self, objects, n_particles=None):
        self.objects = list(objects)
        n = n_particles if n_particles is not None else sum(len(o.members) for o in self.objects)
        seen = np.zeros(n, dtype=int)
        for o in self.objects:
            for m in o.members:
                if not 0 <= m < n:
                    raise ValueError("member index %d outside [0, %d)" % (m, n))
                seen[m] += 1
        if np.any(seen != 1):
            raise ValueError("objects must partition the %d nodes (coverage %s)" % (n, seen.tolist()))
        self.n = n
        self.particles = np.array([o.members[0] for o in self.objects if o.kind == PARTICLE], dtype=np.intp)
        self.sticks = np.array([o.members for o in self.objects if o.kind == STICK], dtype=np.intp).reshape(-1, 2)
        self.hinges = np.array([o.members for o in self.objects if o.kind == HINGE], dtype=np.intp).reshape(-1, 3)
        order = np.concatenate([self.particles, self.sticks.reshape(-1), self.hinges.reshape(-1)])
        # position of node i in the kind-grouped ordering
        self.inverse = np.empty(n, dtype=np.intp)
        self.inverse[order] = np.arange(n)

    @property
    def n_arms(self):
        return len(self.sticks) + 2 * len(self.hinges)

    def arm_pairs(self):
        pairs = [o.arms() for o in self.objects]
        return np.array([p for ps in pairs for p in ps], dtype=np.intp).reshape(-1, 2)


@dataclass
class StickState:
    q: np.ndarray
    qdot: np.ndarray
    arm: np.ndarray  # x1 - q; x2 = q - arm
    omega: np.ndarray
    rest: np.ndarray  # half length = |arm|

    def members(self):
        w = geom3.cross(self.omega, self.arm)
        x = np.stack([self.q + self.arm, self.q - self.arm], axis=-2)
        v = np.stack([self.qdot + w, self.qdot - w], axis=-2)
        return x, v


@dataclass
class HingeState:
    q: np.ndarray
    qdot: np.ndarray
    arms: np.ndarray  # (..., 2, 3): x1 - x0, x2 - x0
    omegas: np.ndarray  # (..., 2, 3)
    rest: np.ndarray  # (..., 2)

    def members(self):
        w = geom3.cross(self.omegas, self.arms)
        x = np.concatenate([self.q[..., None, :], self.q[..., None, :] + self.arms], axis=-2)
        v = np.concatenate([self.qdot[..., None, :], self.qdot[..., None, :] + w], axis=-2)
        return x, v


@dataclass
class SystemState:
    """Cartesian particle states plus the generalized state of every stick and hinge."""

    positions: np.ndarray
    velocities: np.ndarray
    sticks: StickState = None
    hinges: HingeState = None

    def copy(self):
        def cp(obj):
            if obj is None:
                return None
            return type(obj)(*(np.array(getattr(obj, f)) for f in obj.__dataclass_fields__))

        return SystemState(self.positions.copy(), self.velocities.copy(), cp(self.sticks), cp(self.hinges))


def angular_velocity(arm, rel_vel):
    """Minimal-norm ``omega`` with ``omega x arm`` equal to the tangential part of ``rel_vel``."""
    return geom3.cross(arm, rel_vel) / geom3.dot(arm, arm)[..., None]


def generalize(positions, velocities, layout):
    """Build the generalized state from Cartesian states (radial arm velocities are dropped)."""
    positions = np.asarray(positions, dtype=np.float64)
    velocities = np.asarray(velocities, dtype=np.float64)
    sticks = hinges = None
    if len(layout.sticks):
        x = positions[..., layout.sticks, :]
        v = velocities[..., layout.sticks, :]
        q = 0.5 * (x[..., 0, :] + x[..., 1, :])
        qdot = 0.5 * (v[..., 0, :] + v[..., 1, :])
        arm = x[..., 0, :] - q
        omega = angular_velocity(arm, v[..., 0, :] - qdot)
        sticks = StickState(q, qdot, arm, omega, np.sqrt(geom3.dot(arm, arm)))
    if len(layout.hinges):
        x = positions[..., layout.hinges, :]
        v = velocities[..., layout.hinges, :]
        q = x[..., 0, :]
        qdot = v[..., 0, :]
        arms = x[..., 1:, :] - q[..., None, :]
        omegas = angular_velocity(arms, v[..., 1:, :] - qdot[..., None, :])
        hinges = HingeState(q, qdot, arms, omegas, np.sqrt(geom3.dot(arms, arms)))
    state = SystemState(positions.copy(), velocities.copy(), sticks, hinges)
    _write_members(state, layout)
    return state


def _write_members(state, layout):
    if state.sticks is not None:
        x, v = state.sticks.members()
        state.positions[..., layout.sticks, :] = x
        state.velocities[..., layout.sticks, :] = v
    if state.hinges is not None:
        x, v = state.hinges.members()
        state.positions[..., layout.hinges, :] = x
        state.velocities[..., layout.hinges, :] = v


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _unit_vectors(rng, n):
    u = rng.standard_normal((n, 3))
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def sample_system(spec, seed):
    """Draw one random initial state for ``spec``.

    Returns:
        ``(state, objects, charges)`` with charges in {-1, +1}.
    """
    rng = _rng(seed)
    n = spec.n_particles
    objects = canonical_objects(spec)
    layout = Layout(objects, n)
    side = spec.box_scale * n ** (1.0 / 3.0)
    lo, hi = spec.stick_length_range
    x = np.empty((n, 3))
    v = rng.standard_normal((n, 3))
    if spec.charges is None:
        charges = rng.choice(np.array([-1.0, 1.0]), size=n)
    else:
        charges = np.asarray(spec.charges, dtype=np.float64)
    x[layout.particles] = rng.uniform(-side / 2, side / 2, size=(spec.p, 3))
    if spec.s:
        centre = rng.uniform(-side / 2, side / 2, size=(spec.s, 3))
        half = 0.5 * rng.uniform(lo, hi, size=spec.s)
        arm = _unit_vectors(rng, spec.s) * half[:, None]
        x[layout.sticks[:, 0]] = centre + arm
        x[layout.sticks[:, 1]] = centre - arm
    if spec.h:
        pivot = rng.uniform(-side / 2, side / 2, size=(spec.h, 3))
        lengths = rng.uniform(lo, hi, size=(spec.h, 2))
        arms = _unit_vectors(rng, 2 * spec.h).reshape(spec.h, 2, 3) * lengths[..., None]
        x[layout.hinges[:, 0]] = pivot
        x[layout.hinges[:, 1:]] = pivot[:, None, :] + arms
    state = generalize(x, v, layout)
    return state, objects, charges


def pairwise_forces(positions, charges, softening=DEFAULT_SOFTENING):
    """Softened Coulomb forces ``c_i c_j (x_i - x_j) / (|x_i - x_j|^2 + eps)^{3/2}`` summed over j."""
    if softening <= 0:
        raise ValueError("softening must be positive")
    x = np.asarray(positions, dtype=np.float64)
    c = np.asarray(charges, dtype=np.float64)
    f = np.zeros_like(x)
    # fixed loop order makes the result independent of the batch shape
    for j in range(x.shape[-2]):
        d = x - x[..., j : j + 1, :]
        r2 = geom3.dot(d, d) + softening
        coef = c * c[..., j : j + 1] / (r2 * np.sqrt(r2))
        f = f + coef[..., None] * d
    return f


def step_free_particle(x, v, f, dt):
    """Semi-implicit Euler for a unit-mass particle."""
    v = v + f * dt
    return x + v * dt, v


def _check_arms(arms):
    if np.any(geom3.dot(arms, arms) <= 1e-18):
        raise DegenerateArmError("rigid arm length underflow (|arm| <= 1e-9)")


def _advance_arm(arm, omega, rest, dt):
    arm = geom3.rotate(omega * dt, arm)
    return arm * (rest / np.sqrt(geom3.dot(arm, arm)))[..., None]


def stick_accelerations(arm, f1, f2):
    """Centre and angular acceleration of a stick with unit-mass particles."""
    _check_arms(arm)
    qddot = 0.5 * (f1 + f2)
    torque = geom3.cross(arm, f1) + geom3.cross(-arm, f2)
    inertia = 2.0 * geom3.dot(arm, arm)
    return qddot, torque / inertia[..., None]


def hinge_accelerations(arms, omegas, f0, f1, f2, mass=1.0):
    """Analytic hinge dynamics.

    Args:
        arms: ``(..., 2, 3)`` vectors from particle 0 to particles 1 and 2.
        omegas: ``(..., 2, 3)`` angular velocities of the two arms.
        f0, f1, f2: forces on the three particles.
        mass: mass of each particle.

    Returns:
        ``(a0, a1, a2, alphas)``: particle accelerations and the arms' angular
        accelerations ``(..., 2, 3)``. By construction
        ``mass * (a0 + a1 + a2) == f0 + f1 + f2``.
    """
    _check_arms(arms)
    x1, x2 = arms[..., 0, :], arms[..., 1, :]
    w1, w2 = omegas[..., 0, :], omegas[..., 1, :]
    e1 = x1 / np.sqrt(geom3.dot(x1, x1))[..., None]
    e2 = x2 / np.sqrt(geom3.dot(x2, x2))[..., None]
    nu1, nu2 = geom3.cross(w1, x1), geom3.cross(w2, x2)
    centripetal1, centripetal2 = geom3.cross(w1, nu1), geom3.cross(w2, nu2)
    total = f0 + f1 + f2
    rhs = (
        total / mass
        - centripetal1
        - centripetal2
        - geom3.project_perp(e1, f1 / mass)
        - geom3.project_perp(e2, f2 / mass)
    )
    eye = np.broadcast_to(np.eye(3), e1.shape[:-1] + (3, 3))
    mat = eye + e1[..., :, None] * e1[..., None, :] + e2[..., :, None] * e2[..., None, :]
    a0 = geom3.solve3(mat, rhs)
    alpha1 = geom3.cross(x1, f1 - mass * a0) / (mass * geom3.dot(x1, x1))[..., None]
    alpha2 = geom3.cross(x2, f2 - mass * a0) / (mass * geom3.dot(x2, x2))[..., None]
    a1 = a0 + geom3.cross(alpha1, x1) + centripetal1
    a2 = a0 + geom3.cross(alpha2, x2) + centripetal2
    return a0, a1, a2, np.stack([alpha1, alpha2], axis=-2)


def _kick_stick(state, f1, f2, h):
    qddot, alpha = stick_accelerations(state.arm, f1, f2)
    return StickState(state.q, state.qdot + qddot * h, state.arm, state.omega + alpha * h, state.rest)


def _drift_stick(state, h):
    arm = _advance_arm(state.arm, state.omega, state.rest, h)
    return StickState(state.q + state.qdot * h, state.qdot, arm, state.omega, state.rest)


def _kick_hinge(state, f0, f1, f2, h, lookahead=0.0):
    # The centre of mass takes the whole force; the pivot velocity follows from it,
    # so total momentum changes only by h * sum(f) up to rounding.
    # lookahead > 0 re-evaluates the velocity-dependent terms at a predicted omega
    _, _, _, alphas = hinge_accelerations(state.arms, state.omegas, f0, f1, f2)
    if lookahead:
        predicted = state.omegas + alphas * lookahead
        _, _, _, alphas = hinge_accelerations(state.arms, predicted, f0, f1, f2)
    omegas = state.omegas + alphas * h
    vcm = _hinge_com_velocity(state.qdot, state.omegas, state.arms) + (f0 + f1 + f2) * (h / 3.0)
    qdot = vcm - geom3.cross(omegas, state.arms).sum(axis=-2) / 3.0
    return HingeState(state.q, qdot, state.arms, omegas, state.rest)


def _hinge_com_velocity(qdot, omegas, arms):
    return qdot + geom3.cross(omegas, arms).sum(axis=-2) / 3.0


def _drift_hinge(state, h):
    # the centre of mass coasts while both arms rotate about it
    vcm = _hinge_com_velocity(state.qdot, state.omegas, state.arms)
    com = state.q + state.arms.sum(axis=-2) / 3.0 + vcm * h
    arms = _advance_arm(state.arms, state.omegas, state.rest, h)
    q = com - arms.sum(axis=-2) / 3.0
    qdot = vcm - geom3.cross(state.omegas, arms).sum(axis=-2) / 3.0
    return HingeState(q, qdot, arms, state.omegas, state.rest)


def step_stick(state, f1, f2, dt):
    """One semi-implicit Euler step of a stick in generalized coordinates."""
    return _drift_stick(_kick_stick(state, f1, f2, dt), dt)


def step_hinge(state, f0, f1, f2, dt):
    """One semi-implicit Euler step of a hinge in generalized coordinates."""
    return _drift_hinge(_kick_hinge(state, f0, f1, f2, dt), dt)


def _kick(state, layout, charges, softening, h, lookahead):
    f = pairwise_forces(state.positions, charges, softening)
    if len(layout.particles):
        idx = layout.particles
        state.velocities[..., idx, :] = state.velocities[..., idx, :] + f[..., idx, :] * h
    if state.sticks is not None:
        fs = f[..., layout.sticks, :]
        state.sticks = _kick_stick(state.sticks, fs[..., 0, :], fs[..., 1, :], h)
    if state.hinges is not None:
        fh = f[..., layout.hinges, :]
        state.hinges = _kick_hinge(state.hinges, fh[..., 0, :], fh[..., 1, :], fh[..., 2, :], h, lookahead)


def _drift(state, layout, h):
    if len(layout.particles):
        idx = layout.particles
        state.positions[..., idx, :] = state.positions[..., idx, :] + state.velocities[..., idx, :] * h
    if state.sticks is not None:
        state.sticks = _drift_stick(state.sticks, h)
    if state.hinges is not None:
        state.hinges = _drift_hinge(state.hinges, h)


def simulate(initial, objects, charges, steps, dt=DEFAULT_DT, softening=DEFAULT_SOFTENING,
             scheme="leapfrog", record=False):
    """Integrate ``steps`` steps from ``initial`` and return the final state.

    ``scheme="euler"`` applies the semi-implicit Euler step functions
    directly. The default ``"leapfrog"`` staggers the same kicks and drifts by
    half a step (kick-drift-kick), which makes the scheme second order for
    the same number of force evaluations; hinge kicks evaluate their
    centripetal terms at the mid-kick angular velocity.

    With ``record=True`` returns ``(final, frames)`` where ``frames`` stacks
    the positions after every step, step 0 included.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if scheme not in ("leapfrog", "euler"):
        raise ValueError("unknown scheme %r" % scheme)
    layout = objects if isinstance(objects, Layout) else Layout(objects, initial.positions.shape[-2])
    state = initial.copy()
    frames = [state.positions.copy()] if record else None
    for i in range(steps):
        if scheme == "euler":
            _kick(state, layout, charges, softening, dt, 0.0)
        elif i == 0:
            _kick(state, layout, charges, softening, 0.5 * dt, 0.0)
        else:
            _kick(state, layout, charges, softening, dt, 0.5 * dt)
        _drift(state, layout, dt)
        _write_members(state, layout)
        if record:
            frames.append(state.positions.copy())
    if scheme == "leapfrog":
        _kick(state, layout, charges, softening, 0.5 * dt, 0.5 * dt)
        _write_members(state, layout)
    if record:
        return state, np.stack(frames)
    return state


# -- datasets ----------------------------------------------------------------


@dataclass
class TrajectoryDataset:
    spec: SystemSpec
    dt: float
    steps: int
    seed: int
    objects: list
    charges: np.ndarray  # (S, N)
    initial: np.ndarray  # (S, N, 6): x then v
    final: np.ndarray  # (S, N, 3)
    softening: float = DEFAULT_SOFTENING
    stream: int = 0

    def __len__(self):
        return self.initial.shape[0]

    @property
    def n_particles(self):
        return self.spec.n_particles

    @property
    def layout(self):
        return Layout(self.objects, self.n_particles)

    def rest_lengths(self):
        pairs = self.layout.arm_pairs()
        x = self.initial[..., :3]
        d = x[:, pairs[:, 0]] - x[:, pairs[:, 1]]
        return np.sqrt(geom3.dot(d, d))

    def subset(self, count):
        return TrajectoryDataset(
            self.spec, self.dt, self.steps, self.seed, self.objects,
            self.charges[:count], self.initial[:count], self.final[:count], self.softening, self.stream,
        )


SPLITS = ("train", "val", "test")


def sample_seed(seed, index, stream=0):
    """Per-sample RNG: sample ``index`` depends only on ``(seed, index, stream)``.

    Stream 0 is the plain ``(seed, index)`` entropy; other streams give
    independent samples for validation and test splits.
    """
    key = [int(seed), int(index)] if stream == 0 else [int(seed), int(index), int(stream)]
    return np.random.default_rng(np.random.SeedSequence(key))


def generate_dataset(spec, num, steps=DEFAULT_STEPS, dt=DEFAULT_DT, seed=0, softening=DEFAULT_SOFTENING,
                     stream=0):
    n = spec.n_particles
    objects = canonical_objects(spec)
    layout = Layout(objects, n)
    xs, vs, cs = [], [], []
    for i in range(num):
        state, _, charges = sample_system(spec, sample_seed(seed, i, stream))
        xs.append(state.positions)
        vs.append(state.velocities)
        cs.append(charges)
    if num == 0:
        empty = np.zeros((0, n, 3))
        return TrajectoryDataset(spec, dt, steps, seed, objects, np.zeros((0, n)),
                                 np.zeros((0, n, 6)), empty, softening, stream)
    x0, v0, charges = np.stack(xs), np.stack(vs), np.stack(cs)
    initial = generalize(x0, v0, layout)
    final = simulate(initial, layout, charges, steps, dt, softening)
    return TrajectoryDataset(
        spec, dt, steps, seed, objects, charges,
        np.concatenate([initial.positions, initial.velocities], axis=-1), final.positions, softening, stream,
    )


def generate_splits(spec, sizes=(500, 200, 200), steps=DEFAULT_STEPS, dt=DEFAULT_DT, seed=0,
                    softening=DEFAULT_SOFTENING):
    """Train, validation and test datasets drawn from independent sample streams."""
    return {
        name: generate_dataset(spec, num, steps, dt, seed, softening, stream=k)
        for k, (name, num) in enumerate(zip(SPLITS, sizes))
    }


def write_dataset(dataset, directory):
    n = dataset.n_particles
    os.makedirs(directory, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "spec": dataset.spec.to_json(),
        "num_samples": len(dataset),
        "n_particles": dataset.n_particles,
        "dt": dataset.dt,
        "steps": dataset.steps,
        "seed": dataset.seed,
        "stream": dataset.stream,
        "softening": dataset.softening,
        "force_law": "softened coulomb: f_i = sum_j c_i c_j (x_i - x_j) / (|x_i - x_j|^2 + softening)^1.5",
        "mass": 1.0,
        "objects": [{"kind": o.kind, "members": list(o.members), "pivot": o.pivot} for o in dataset.objects],
        "charges": dataset.charges.tolist(),
        "rest_lengths": dataset.rest_lengths().tolist(),
        "frame_layout": "[sample][initial: N x 6 (x, v)][final: N x 3] little-endian float64",
    }
    payload = np.concatenate(
        [dataset.initial.reshape(len(dataset), n * 6), dataset.final.reshape(len(dataset), n * 3)], axis=1
    )
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    with open(os.path.join(directory, "frames.f64"), "wb") as fh:
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_dataset(directory):
    meta_path = os.path.join(directory, "meta.json")
    with open(meta_path, "rb") as fh:
        raw = fh.read()
    try:
        meta = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise MalformedDatasetError("meta.json is not UTF-8", exc.start) from None
    except json.JSONDecodeError as exc:
        raise MalformedDatasetError("meta.json: %s" % exc.msg, exc.pos) from None
    try:
        spec = SystemSpec.from_json(meta["spec"])
        num = int(meta["num_samples"])
        n = int(meta["n_particles"])
        objects = [RigidObject(o["kind"], tuple(o["members"]), o.get("pivot")) for o in meta["objects"]]
        charges = np.asarray(meta["charges"], dtype=np.float64).reshape(num, n)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDatasetError("meta.json: missing or invalid field (%s)" % exc, 0) from None
    if n != spec.n_particles:
        raise MalformedDatasetError("meta.json: n_particles disagrees with spec", 0)
    per_sample = n * 9 * 8
    expected = num * per_sample
    frames_path = os.path.join(directory, "frames.f64")
    size = os.path.getsize(frames_path)
    if size != expected:
        offset = min(size, expected)
        if size < expected:
            msg = "frames.f64 truncated: expected %d bytes for %d samples, found %d" % (expected, num, size)
        else:
            msg = "frames.f64 has %d trailing bytes beyond %d samples" % (size - expected, num)
        raise MalformedDatasetError(msg, offset)
    data = np.fromfile(frames_path, dtype="<f8").astype(np.float64).reshape(num, n * 9)
    initial = data[:, : n * 6].reshape(num, n, 6)
    final = data[:, n * 6 :].reshape(num, n, 3)
    return TrajectoryDataset(
        spec, float(meta["dt"]), int(meta["steps"]), int(meta["seed"]), objects,
        charges, initial, final, float(meta.get("softening", DEFAULT_SOFTENING)), int(meta.get("stream", 0)),
    )
