"""Property-check suites run by ``gmnlab check`` and the acceptance tests.

Each suite returns a list of :class:`CheckResult`, one per invariant.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import geom3
from . import model as gm
from . import nbody_sim as sim
from .train import arm_lengths, arm_penalty, mse_loss

SUITES = ("equivariance", "constraints", "gradients", "dynamics", "reduction")
EQUIVARIANT_KINDS = ("gmn", "gmn-l", "egnn")


@dataclass
class CheckResult:
    suite: str
    invariant: str
    passed: bool
    value: float
    threshold: float
    seed: int
    detail: str = ""

    def to_json(self):
        out = asdict(self)
        out["value"] = float(self.value)
        out["passed"] = bool(self.passed)
        return out


def _result(suite, invariant, value, threshold, seed, detail="", below=True):
    ok = bool(value < threshold) if below else bool(value > threshold)
    return CheckResult(suite, invariant, ok, float(value), float(threshold), seed, detail)


def random_batch(spec, count, seed):
    """Random initial states of ``spec`` wrapped as a :class:`~gmnlab.model.GraphBatch`."""
    objects = sim.canonical_objects(spec)
    layout = sim.Layout(objects, spec.n_particles)
    xs, vs, cs = [], [], []
    for i in range(count):
        state, _, charges = sim.sample_system(spec, sim.sample_seed(seed, i, stream=7))
        xs.append(state.positions)
        vs.append(state.velocities)
        cs.append(charges)
    state = sim.generalize(np.stack(xs), np.stack(vs), layout)
    return gm.build_features(state.positions, state.velocities, np.stack(cs), layout)


def perturbed_params(config, seed, noise=0.2):
    """Initial parameters plus fan-in scaled Gaussian noise, so that no head is close to zero."""
    params = gm.init_params(config, seed)
    rng = np.random.default_rng([seed, 99])
    for name in params.names():
        t = params[name]
        weight = params[name[: -len("bias")] + "weight"] if name.endswith(".bias") else t
        fan_in = weight.shape[0] if weight.ndim == 2 else 1
        t.data = t.data + noise / np.sqrt(fan_in) * rng.standard_normal(t.shape)
    return params


def transform_batch(batch, rots, shifts):
    """Per-sample ``x -> R_b x + t_b``, ``v -> R_b v``."""
    x = np.einsum("bij,bnj->bni", rots, batch.x) + shifts[:, None, :]
    v = np.einsum("bij,bnj->bni", rots, batch.v)
    return gm.GraphBatch(x, v, batch.speed, batch.edge_attr, batch.senders, batch.receivers, batch.layout)


# -- suites ---------------------------------------------------------------------------


def check_equivariance(seed=0, trials=100, tol=1e-8, spec=None):
    """``phi(g S) == g phi(S)`` for random rotations, reflections and translations."""
    spec = spec or sim.SystemSpec(3, 2, 1)
    rng = np.random.default_rng([seed, 1])
    batch = random_batch(spec, trials, seed)
    rots = np.stack([geom3.random_orthogonal(rng, reflect=bool(k % 2)) for k in range(trials)])
    shifts = rng.uniform(-5.0, 5.0, size=(trials, 3))
    moved = transform_batch(batch, rots, shifts)
    out = []
    for kind in EQUIVARIANT_KINDS:
        config = gm.ModelConfig(kind=kind)
        params = perturbed_params(config, seed)
        pred = gm.forward(batch, config, params).data
        pred_moved = gm.forward(moved, config, params).data
        expect = np.einsum("bij,bnj->bni", rots, pred) + shifts[:, None, :]
        dev = float(np.max(np.abs(pred_moved - expect)))
        out.append(_result("equivariance", "E(3) equivariance of %s" % kind, dev, tol, seed,
                           "%d transforms, half with det -1" % trials))
    return out


def check_constraints(seed=0, count=1000, tol=1e-9, spec=None):
    """GMN keeps every arm length; EGNN (negative control) does not."""
    spec = spec or sim.SystemSpec(3, 2, 1)
    batch = random_batch(spec, count, seed)
    rest = arm_lengths(batch.x, batch.layout)
    out = []
    for kind in ("gmn", "egnn"):
        config = gm.ModelConfig(kind=kind)
        params = perturbed_params(config, seed)
        pred = gm.forward(batch, config, params).data
        gap = np.abs(arm_lengths(pred, batch.layout) - rest)
        if kind == "gmn":
            rel = float(np.max(np.sum(gap, axis=-1) / np.sum(rest, axis=-1)))
            out.append(_result("constraints", "GMN relative constraint error", rel, tol, seed,
                               "%d systems" % count))
        else:
            err = float(np.mean(np.sum(gap, axis=-1)))
            floor = 1e-3 * float(np.mean(rest))
            out.append(_result("constraints", "EGNN constraint error exceeds 1e-3 x mean arm length",
                               err, floor, seed, "negative control", below=False))
    return out


def relative_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)``; the floor absorbs round-off in near-zero gradients."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _grad_case(config, seed, batch, target, entries_per_tensor):
    params = perturbed_params(config, seed)
    reg = config.kind == "egnn-reg"

    def loss_fn(params):
        pred = gm.forward(batch, config, params)
        loss = mse_loss(pred, target)
        if reg:
            loss = loss + ad.scale(arm_penalty(pred, batch), 0.1)
        return loss

    _, grads = ad.value_and_grad(loss_fn, params)
    rng = np.random.default_rng([seed, 5])
    worst, where = 0.0, ""
    for name in params.names():
        size = params[name].data.size
        if entries_per_tensor is None or size <= entries_per_tensor:
            entries = list(range(size))
        else:
            entries = sorted(rng.choice(size, entries_per_tensor, replace=False).tolist())
        numeric = ad.finite_difference(loss_fn, params, name, 1e-5, entries).reshape(-1)[entries]
        grad = grads.get(name)
        analytic = np.zeros(size)[entries] if grad is None else grad.reshape(-1)[entries]
        err = float(np.max(relative_error(analytic, numeric)))
        if err > worst:
            worst, where = err, name
    return worst, where


def check_gradients(seed=0, tol=1e-4):
    """Central finite differences against reverse mode for every parameter tensor.

    A small architecture is checked on every scalar; the default architecture
    on a few random entries of every tensor.
    """
    spec = sim.SystemSpec(1, 1, 1)
    batch = random_batch(spec, 3, seed)
    target = batch.x + batch.v + 0.1 * np.random.default_rng([seed, 3]).standard_normal(batch.x.shape)
    out = []
    for kind in gm.KINDS:
        for label, config, entries in (
            ("all entries, hidden 4, 2 layers", gm.ModelConfig(kind=kind, hidden=4, layers=2), None),
            ("3 entries per tensor, default size", gm.ModelConfig(kind=kind), 3),
        ):
            worst, where = _grad_case(config, seed, batch, target, entries)
            out.append(_result("gradients", "finite-difference gradient of %s (%s)" % (kind, label),
                               worst, tol, seed, "worst tensor %s" % where))
    return out


def check_dynamics(seed=0, count=1000, tol=1e-12):
    """Analytic hinge and stick dynamics plus simulator invariants."""
    rng = np.random.default_rng([seed, 2])
    out = []
    arms = rng.standard_normal((count, 2, 3))
    arms *= rng.uniform(0.3, 1.5, size=(count, 2, 1)) / np.linalg.norm(arms, axis=-1, keepdims=True)
    omegas = rng.standard_normal((count, 2, 3))
    # arm angular velocities are perpendicular to their arms
    for k in range(2):
        e = arms[:, k] / np.linalg.norm(arms[:, k], axis=-1, keepdims=True)
        omegas[:, k] = geom3.project_perp(e, omegas[:, k])
    f0, f1, f2 = (rng.standard_normal((count, 3)) for _ in range(3))
    total = f0 + f1 + f2
    for mass in (1.0, 2.5):
        a0, a1, a2, _ = sim.hinge_accelerations(arms, omegas, f0, f1, f2, mass=mass)
        dev = float(np.max(np.abs(mass * (a0 + a1 + a2) - total)))
        out.append(_result("dynamics", "hinge: sum_i m a_i equals total force (m=%g)" % mass, dev, tol, seed))
        com = float(np.max(np.abs((a0 + a1 + a2) / 3.0 - total / (3.0 * mass))))
        out.append(_result("dynamics", "hinge: centre-of-mass acceleration equals F / (3m) (m=%g)" % mass,
                           com, tol, seed))
        # the constraint forces m a_k - f_k act along the arms
        lateral = 0.0
        for k, (a, f) in enumerate(((a1, f1), (a2, f2))):
            e = arms[:, k] / np.linalg.norm(arms[:, k], axis=-1, keepdims=True)
            lateral = max(lateral, float(np.max(np.abs(geom3.cross(e, mass * a - f)))))
        out.append(_result("dynamics", "hinge: rod forces are along the arms (m=%g)" % mass, lateral, 1e-10, seed))
    arm = arms[:, 0]
    qddot, alpha = sim.stick_accelerations(arm, f1, f2)
    out.append(_result("dynamics", "stick: centre acceleration equals (f1 + f2) / 2",
                       float(np.max(np.abs(qddot - 0.5 * (f1 + f2)))), tol, seed))
    out.append(_result("dynamics", "stick: angular acceleration is perpendicular to the arm",
                       float(np.max(np.abs(geom3.dot(alpha, arm)))), tol, seed))

    spec = sim.SystemSpec(3, 2, 1)
    ds = sim.generate_dataset(spec, 4, steps=1000, seed=seed)
    rest = ds.rest_lengths()
    final = arm_lengths(ds.final, ds.layout)
    drift = float(np.max(np.abs(final - rest) / rest))
    out.append(_result("dynamics", "simulator: relative arm-length drift over 1000 steps", drift, 1e-6, seed))

    spec = sim.SystemSpec(3, 2, 0)
    objects = sim.canonical_objects(spec)
    layout = sim.Layout(objects, spec.n_particles)
    state, _, charges = sim.sample_system(spec, sim.sample_seed(seed, 0))
    init = sim.generalize(state.positions[None], state.velocities[None], layout)
    end = sim.simulate(init, layout, charges[None], 1000)
    dp = float(np.max(np.abs(end.velocities.sum(axis=-2) - init.velocities.sum(axis=-2))))
    out.append(_result("dynamics", "simulator: momentum conservation without hinges", dp, 1e-6, seed))
    return out


def check_reduction(seed=0, count=16):
    """On a particles-only system GMN and EGNN with the same parameters agree bitwise."""
    spec = sim.SystemSpec(5, 0, 0)
    batch = random_batch(spec, count, seed)
    params = perturbed_params(gm.ModelConfig(kind="gmn"), seed)
    a = gm.gmn_forward(batch, gm.ModelConfig(kind="gmn"), params).data
    b = gm.egnn_forward(batch, gm.ModelConfig(kind="egnn"), params).data
    mismatches = int(np.count_nonzero(a != b))
    return [_result("reduction", "GMN equals EGNN bitwise on particles", mismatches, 1, seed,
                    "%d differing coordinates" % mismatches)]


def run_suite(name, seed=0):
    funcs = {
        "equivariance": check_equivariance,
        "constraints": check_constraints,
        "gradients": check_gradients,
        "dynamics": check_dynamics,
        "reduction": check_reduction,
    }
    if name not in funcs:
        raise ValueError("unknown suite %r" % name)
    return funcs[name](seed=seed)
