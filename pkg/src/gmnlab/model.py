"""Graph Mechanics Networks, the learnable-FK variant, and the EGNN baseline.

A batch holds ``B`` copies of one system layout, so node tensors are shaped
``(B, N, .)`` and edge tensors ``(B, E, .)``. Objects are processed per kind
(particles, sticks, hinges) with index arrays from :class:`~gmnlab.nbody_sim.Layout`.

Parameters are per layer and live in one :class:`~gmnlab.autodiff.ParamStore`.
GMN and EGNN use the same names for the message-passing and velocity-gate
weights, so on a particles-only system a GMN and an EGNN sharing a store
compute the same function, operation for operation.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import geom3
from .nbody_sim import HINGE, PARTICLE, STICK, Layout, RigidObject

KINDS = ("gmn", "gmn-l", "egnn", "egnn-reg", "linear")
KIND_ALIASES = {"gmn-learnable-fk": "gmn-l", "gmnl": "gmn-l"}
ZERO_GRAM = 1e-12
EDGE_NONE, EDGE_STICK, EDGE_HINGE = 0, 1, 2


def canonical_kind(kind):
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError("unknown model kind %r (choose from %s)" % (kind, ", ".join(KINDS)))
    return kind


@dataclass
class ModelConfig:
    kind: str = "gmn"
    layers: int = 4
    hidden: int = 64
    stick_phi2: str = "force"  # "force": Z = f_i; "full": Z = (f_i, x_ki, v_ki)
    share_phi2: bool = False
    normalize: bool = True

    def __post_init__(self):
        self.kind = canonical_kind(self.kind)
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.stick_phi2 not in ("force", "full"):
            raise ValueError("stick_phi2 must be 'force' or 'full'")
        if self.share_phi2 and self.stick_phi2 != "full":
            raise ValueError("a shared phi2 needs the full (f, x, v) form for sticks")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# -- graph construction -------------------------------------------------------


@dataclass
class GraphBatch:
    x: np.ndarray  # (B, N, 3)
    v: np.ndarray  # (B, N, 3)
    speed: np.ndarray  # (B, N, 1), |v|; embedded into h by the model
    edge_attr: np.ndarray  # (B, E, 2): (c_i c_j, edge type)
    senders: np.ndarray  # (E,) j
    receivers: np.ndarray  # (E,) i; messages flow j -> i
    layout: Layout

    @property
    def batch_size(self):
        return self.x.shape[0]

    @property
    def n_nodes(self):
        return self.x.shape[1]

    def transformed(self, rot, shift):
        """Apply ``x -> R x + b`` and ``v -> R v``."""
        return GraphBatch(
            self.x @ rot.T + shift, self.v @ rot.T, self.speed, self.edge_attr,
            self.senders, self.receivers, self.layout,
        )


def complete_edges(n):
    recv, send = np.nonzero(~np.eye(n, dtype=bool))
    return send.astype(np.intp), recv.astype(np.intp)


def edge_types(objects, n, senders, receivers):
    kind = np.zeros((n, n))
    for o in objects:
        code = EDGE_STICK if o.kind == STICK else EDGE_HINGE
        for a, b in o.arms():
            kind[a, b] = kind[b, a] = code
    return kind[senders, receivers]


def build_features(x, v, charges, objects, edges=None):
    """Assemble a :class:`GraphBatch` from ``(B, N, 3)`` states and ``(B, N)`` charges.

    ``edges`` is an optional ``(senders, receivers)`` pair; the complete graph
    is used otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    charges = np.asarray(charges, dtype=np.float64)
    if x.ndim == 2:
        x, v, charges = x[None], v[None], charges[None]
    n = x.shape[1]
    layout = objects if isinstance(objects, Layout) else Layout(objects, n)
    senders, receivers = complete_edges(n) if edges is None else (np.asarray(edges[0]), np.asarray(edges[1]))
    types = edge_types(layout.objects, n, senders, receivers)
    cc = charges[:, senders] * charges[:, receivers]
    edge_attr = np.stack([cc, np.broadcast_to(types, cc.shape)], axis=-1)
    speed = np.sqrt(geom3.dot(v, v))[..., None]
    return GraphBatch(x, v, speed, edge_attr, senders, receivers, layout)


def batch_from_dataset(dataset, index=None):
    idx = slice(None) if index is None else index
    init = dataset.initial[idx]
    return build_features(init[..., :3], init[..., 3:], dataset.charges[idx], dataset.layout)


# -- parameters ---------------------------------------------------------------


def gate_bias(layers):
    """Logit placing every velocity gate at the ``psi`` with ``psi + psi^2 + ... + psi^L = 1``.

    An untrained stack then moves each node by about one unit of its initial
    velocity, the constant-velocity guess over the prediction horizon.
    """
    roots = np.roots([1.0] * layers + [-1.0])
    psi = float(max(r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 0))
    half = psi / 2.0
    return float(np.log(half / (1.0 - half)))


def init_params(config, seed=0):
    """Fresh parameters for ``config``.

    Final layers of the force-like heads are scaled by 0.01 and the velocity
    gates start near the value given by :func:`gate_bias`.
    """
    rng = np.random.default_rng(seed)
    bias = gate_bias(config.layers)
    params = ad.ParamStore()
    hid = config.hidden
    if config.kind == "linear":
        params.add("alpha", np.ones(1))
        return params
    ad.init_mlp(params, "embed", [1, hid], rng)
    for l in range(config.layers):
        p = "layer%d" % l
        ad.init_mlp(params, p + ".edge", [2 * hid + 3, hid, hid], rng)
        ad.init_mlp(params, p + ".force", [hid, hid, 1], rng, final_scale=0.01)
        ad.init_mlp(params, p + ".node", [2 * hid, hid, hid], rng)
        ad.init_mlp(params, p + ".psi", [hid, hid, 1], rng, final_scale=0.01)
        params[p + ".psi.1.bias"].data += bias
        if config.kind == "gmn":
            ad.init_mlp(params, p + ".psi_rot", [hid, hid, 1], rng, final_scale=0.01)
            params[p + ".psi_rot.1.bias"].data += bias
        if config.kind in ("gmn", "gmn-l"):
            if config.share_phi2:
                ad.init_mlp(params, p + ".phi2", [9 + hid, hid, 3], rng, final_scale=0.01)
            else:
                stick_in, stick_out = (1 + hid, 1) if config.stick_phi2 == "force" else (9 + hid, 3)
                ad.init_mlp(params, p + ".phi2_stick", [stick_in, hid, stick_out], rng, final_scale=0.01)
                ad.init_mlp(params, p + ".phi2_hinge", [9 + hid, hid, 3], rng, final_scale=0.01)
        if config.kind == "gmn-l":
            ad.init_mlp(params, p + ".rho", [9 + hid, hid, 3], rng, final_scale=0.01)
    return params


# -- building blocks ----------------------------------------------------------


@dataclass
class EquivariantFn:
    """``Z sigma_w(Z^T Z [/ |Z^T Z|_F], h)`` mapping ``m`` vectors to ``m_out`` vectors.

    The Frobenius normalisation is applied only when ``normalize`` is set and
    ``m > 1``. Where the Gram matrix vanishes the output is exactly zero.
    """

    m: int
    m_out: int
    prefix: str
    normalize: bool = True

    def __call__(self, params, z, h=None):
        """``z`` is a list of ``m`` tensors shaped ``(..., 3)``; returns ``m_out`` tensors."""
        if len(z) != self.m:
            raise ad.ShapeError("%s expects %d input vectors, got %d" % (self.prefix, self.m, len(z)))
        lead = z[0].shape[:-1]
        if self.m == 1:
            gram = ad.norm2(z[0])
            inp = gram if h is None else ad.concat([gram, h])
            w = ad.mlp_forward(params, self.prefix, inp)
            if self.m_out == 1:
                return [ad.mul(z[0], w)]
            cols = [_column(w, k, lead) for k in range(self.m_out)]
            return [ad.mul(z[0], c) for c in cols]
        zmat = ad.concat([ad.reshape(t, lead + (3, 1)) for t in z], axis=-1)  # (..., 3, m)
        gram = ad.matmul(ad.transpose(zmat), zmat)  # (..., m, m)
        mask = None
        if self.normalize:
            norm = ad.fro_norm(gram)
            mask = norm.data < ZERO_GRAM
            gram = ad.div_scalar(gram, ad.masked_fill(norm, mask, 1.0))
        feats = ad.reshape(gram, lead + (self.m * self.m,))
        inp = feats if h is None else ad.concat([feats, h])
        w = ad.reshape(ad.mlp_forward(params, self.prefix, inp), lead + (self.m, self.m_out))
        out = ad.matmul(zmat, w)  # (..., 3, m_out)
        if mask is not None and mask.any():
            out = ad.masked_fill(out, mask, 0.0)
        return [ad.reshape(_column_mat(out, k, lead), lead + (3,)) for k in range(self.m_out)]


def _column(w, k, lead):
    sel = np.zeros((w.shape[-1], 1))
    sel[k, 0] = 1.0
    return ad.linear(w, sel)


def _column_mat(out, k, lead):
    sel = np.zeros(lead + (out.shape[-1], 1))
    sel[..., k, 0] = 1.0
    return ad.matmul(out, ad.Tensor(sel))


def equivariant_apply(params, prefix, z, h=None, m_out=1, normalize=True):
    """Functional form of :class:`EquivariantFn`."""
    return EquivariantFn(len(z), m_out, prefix, normalize)(params, z, h)


def embed(params, batch):
    return ad.linear(batch.speed, params["embed.0.weight"], params["embed.0.bias"])


def interaction_step(params, layer, batch, x, h):
    """Message passing: per-node forces ``f_i`` (equivariant) and features ``h_i`` (invariant).

    ``f_i = sum_j x_ji * gate(m_ji)`` with ``x_ji = x_i - x_j`` and
    ``m_ji = MLP(|x_ji|^2, h_i, h_j, e_ji)``; ``h_i <- h_i + MLP(h_i, sum_j m_ji)``.
    """
    p = "layer%d" % layer
    n = batch.n_nodes
    x_ji = ad.take(x, batch.receivers, 1) - ad.take(x, batch.senders, 1)
    h_i = ad.take(h, batch.receivers, 1)
    h_j = ad.take(h, batch.senders, 1)
    d2 = ad.norm2(x_ji)
    msg = ad.mlp_forward(params, p + ".edge", ad.concat([d2, h_i, h_j, ad.Tensor(batch.edge_attr)]), head="silu")
    gate = ad.mlp_forward(params, p + ".force", msg)
    f = ad.segment_sum(ad.mul(x_ji, gate), batch.receivers, n, 1)
    agg = ad.segment_sum(msg, batch.receivers, n, 1)
    h_new = h + ad.mlp_forward(params, p + ".node", ad.concat([h, agg]))
    return f, h_new


def _gate(params, name, h):
    return ad.mlp_forward(params, name, h, head="gate2")


def _cross_over_norm2(a, b, arm):
    """``(a x b) / |arm|^2`` with explicit guard against degenerate arms."""
    n2 = ad.norm2(arm)
    if np.any(n2.data <= 1e-18):
        raise ArithmeticError("degenerate arm (|arm| <= 1e-9)")
    return ad.div_scalar(ad.cross3(a, b), n2)


def _phi2_prefix(config, layer, kind):
    p = "layer%d" % layer
    if config.share_phi2:
        return p + ".phi2"
    return p + (".phi2_stick" if kind == STICK else ".phi2_hinge")


def infer_generalized_accel(params, config, layer, kind, forces, rel_pos, rel_vel, h):
    """Generalized acceleration of a batch of objects of one kind.

    ``forces``, ``rel_pos``, ``rel_vel`` and ``h`` are lists over the member
    slots of the object (1, 2 or 3 entries) of tensors shaped ``(B, K, .)``.
    Isolated particles pass their force through unchanged.
    """
    if kind == PARTICLE:
        return forces[0]
    full = kind == HINGE or config.stick_phi2 == "full" or config.share_phi2
    prefix = _phi2_prefix(config, layer, kind)
    total = None
    for f, xr, vr, hh in zip(forces, rel_pos, rel_vel, h):
        z = [f, xr, vr] if full else [f]
        out = equivariant_apply(params, prefix, z, hh, m_out=1, normalize=config.normalize)[0]
        total = out if total is None else total + out
    return total


def angular_accels(kind, forces, qddot, arms):
    """Angular accelerations of the arms of sticks (shared) or hinges (per arm).

    Stick: ``(x01 x f1 + x02 x f2) / (|x01|^2 + |x02|^2)`` with ``x02 = -x01``.
    Hinge: ``x0i x (f_i - qddot) / |x0i|^2`` for ``i = 1, 2``.
    """
    if kind == STICK:
        arm = arms[0]
        torque = ad.cross3(arm, forces[0]) + ad.cross3(-arm, forces[1])
        inertia = ad.scale(ad.norm2(arm), 2.0)
        if np.any(inertia.data <= 2e-18):
            raise ArithmeticError("degenerate arm (|arm| <= 1e-9)")
        return [ad.div_scalar(torque, inertia)]
    if kind == HINGE:
        return [_cross_over_norm2(arm, f - qddot, arm) for arm, f in zip(arms, forces[1:])]
    return []


def generalized_update(q, qdot, qddot, omegas, alphas, psi, psi_rot):
    """``qdot <- psi qdot + qddot``; ``q <- q + qdot``; ``omega <- psi' omega + alpha``."""
    qdot = ad.mul(psi, qdot) + qddot
    q = q + qdot
    omegas = [ad.mul(psi_rot, w) + a for w, a in zip(omegas, alphas)]
    return q, qdot, omegas


def forward_kinematics(kind, q, qdot, omegas, arms):
    """Member positions and velocities after rotating each arm by its angular velocity.

    Returns ``(xs, vs, new_arms)`` with one entry per member.
    """
    if kind == PARTICLE:
        return [q], [qdot], []
    new_arms = [ad.rotate(w, a) for w, a in zip(omegas, arms)]
    if kind == STICK:
        w, arm = omegas[0], new_arms[0]
        spin = ad.cross3(w, arm)
        return [q + arm, q - arm], [qdot + spin, qdot - spin], new_arms
    xs, vs = [q], [qdot]
    for w, arm in zip(omegas, new_arms):
        xs.append(q + arm)
        vs.append(qdot + ad.cross3(w, arm))
    return xs, vs, new_arms


# -- forward passes -------------------------------------------------------------


def _assemble(layout, parts):
    """Scatter per-kind member lists back into node order: ``parts`` = (particles, stick members, hinge members)."""
    pieces = []
    p_x, s_xs, h_xs = parts
    if p_x is not None:
        pieces.append(p_x)
    if s_xs:
        # (B, S, 3) per member -> interleave as nodes (s0m0, s0m1, s1m0, ...)
        stacked = ad.concat([ad.reshape(t, t.shape[:2] + (1, 3)) for t in s_xs], axis=2)
        pieces.append(ad.reshape(stacked, (stacked.shape[0], -1, 3)))
    if h_xs:
        stacked = ad.concat([ad.reshape(t, t.shape[:2] + (1, 3)) for t in h_xs], axis=2)
        pieces.append(ad.reshape(stacked, (stacked.shape[0], -1, 3)))
    cat = pieces[0] if len(pieces) == 1 else ad.concat(pieces, axis=1)
    return ad.take(cat, layout.inverse, 1)


def _member_sum(h, idx):
    """Sum node features over the members of each object: ``idx`` is ``(K, n_members)``."""
    total = None
    for k in range(idx.shape[1]):
        t = ad.take(h, idx[:, k], 1)
        total = t if total is None else total + t
    return total


def _init_generalized(batch):
    layout = batch.layout
    x, v = batch.x, batch.v
    state = {}
    if len(layout.particles):
        state[PARTICLE] = (x[:, layout.particles], v[:, layout.particles], [])
    if len(layout.sticks):
        xs, vs = x[:, layout.sticks], v[:, layout.sticks]
        q = 0.5 * (xs[:, :, 0] + xs[:, :, 1])
        qdot = 0.5 * (vs[:, :, 0] + vs[:, :, 1])
        arm = xs[:, :, 0] - q
        omega = geom3.cross(arm, vs[:, :, 0] - qdot) / geom3.dot(arm, arm)[..., None]
        state[STICK] = (q, qdot, [(arm, omega)])
    if len(layout.hinges):
        xh, vh = x[:, layout.hinges], v[:, layout.hinges]
        q, qdot = xh[:, :, 0], vh[:, :, 0]
        arms = []
        for k in (1, 2):
            arm = xh[:, :, k] - q
            omega = geom3.cross(arm, vh[:, :, k] - qdot) / geom3.dot(arm, arm)[..., None]
            arms.append((arm, omega))
        state[HINGE] = (q, qdot, arms)
    return state


def gmn_forward(batch, config, params, return_features=False):
    """GMN with hand-crafted forward kinematics; returns predicted positions ``(B, N, 3)``."""
    layout = batch.layout
    groups = {PARTICLE: layout.particles[:, None], STICK: layout.sticks, HINGE: layout.hinges}
    gen = {}
    for kind, (q, qdot, arms) in _init_generalized(batch).items():
        gen[kind] = {
            "q": ad.Tensor(q),
            "qdot": ad.Tensor(qdot),
            "arms": [ad.Tensor(a) for a, _ in arms],
            "omegas": [ad.Tensor(w) for _, w in arms],
        }
    x = ad.Tensor(batch.x)
    h = embed(params, batch)
    for l in range(config.layers):
        p = "layer%d" % l
        f, h_new = interaction_step(params, l, batch, x, h)
        xs_by_kind = {}
        for kind, g in gen.items():
            idx = groups[kind]
            forces = [ad.take(f, idx[:, k], 1) for k in range(idx.shape[1])]
            h_members = [ad.take(h_new, idx[:, k], 1) for k in range(idx.shape[1])]
            if kind == STICK:
                rel_pos = [g["arms"][0], -g["arms"][0]]
                spin = ad.cross3(g["omegas"][0], g["arms"][0])
                rel_vel = [spin, -spin]
            elif kind == HINGE:
                zero = ad.Tensor(np.zeros(g["q"].shape))
                rel_pos = [zero] + g["arms"]
                rel_vel = [zero] + [ad.cross3(w, a) for w, a in zip(g["omegas"], g["arms"])]
            else:
                rel_pos = rel_vel = [None]
            qddot = infer_generalized_accel(params, config, l, kind, forces, rel_pos, rel_vel, h_members)
            alphas = angular_accels(kind, forces, qddot, g["arms"])
            h_sum = _member_sum(h, idx)
            psi = _gate(params, p + ".psi", h_sum)
            psi_rot = _gate(params, p + ".psi_rot", h_sum) if alphas else None
            g["q"], g["qdot"], g["omegas"] = generalized_update(
                g["q"], g["qdot"], qddot, g["omegas"], alphas, psi, psi_rot
            )
            xs, _, g["arms"] = forward_kinematics(kind, g["q"], g["qdot"], g["omegas"], g["arms"])
            xs_by_kind[kind] = xs
        x = _assemble(
            layout,
            (
                xs_by_kind[PARTICLE][0] if PARTICLE in xs_by_kind else None,
                xs_by_kind.get(STICK, []),
                xs_by_kind.get(HINGE, []),
            ),
        )
        h = h_new
    return (x, h) if return_features else x


def egnn_forward(batch, config, params, return_features=False):
    """EGNN: ``v <- psi(h) v + a``, ``x <- x + v`` with ``a`` the aggregated message force."""
    x = ad.Tensor(batch.x)
    v = ad.Tensor(batch.v)
    idx = np.arange(batch.n_nodes)[:, None]
    h = embed(params, batch)
    for l in range(config.layers):
        f, h_new = interaction_step(params, l, batch, x, h)
        psi = _gate(params, "layer%d.psi" % l, _member_sum(h, idx))
        v = ad.mul(psi, v) + f
        x = x + v
        h = h_new
    return (x, h) if return_features else x


def _object_frames(batch, x, v):
    """Per-node generalized position and velocity of the owning object (from current states)."""
    layout = batch.layout
    q_parts, qd_parts = [], []
    if len(layout.particles):
        q_parts.append(ad.take(x, layout.particles, 1))
        qd_parts.append(ad.take(v, layout.particles, 1))
    if len(layout.sticks):
        s = layout.sticks
        q = ad.scale(ad.take(x, s[:, 0], 1) + ad.take(x, s[:, 1], 1), 0.5)
        qd = ad.scale(ad.take(v, s[:, 0], 1) + ad.take(v, s[:, 1], 1), 0.5)
        rep = np.repeat(np.arange(len(s)), 2)
        q_parts.append(ad.take(q, rep, 1))
        qd_parts.append(ad.take(qd, rep, 1))
    if len(layout.hinges):
        hn = layout.hinges
        rep = np.repeat(np.arange(len(hn)), 3)
        q_parts.append(ad.take(ad.take(x, hn[:, 0], 1), rep, 1))
        qd_parts.append(ad.take(ad.take(v, hn[:, 0], 1), rep, 1))
    q = q_parts[0] if len(q_parts) == 1 else ad.concat(q_parts, axis=1)
    qd = qd_parts[0] if len(qd_parts) == 1 else ad.concat(qd_parts, axis=1)
    return ad.take(q, layout.inverse, 1), ad.take(qd, layout.inverse, 1)


def learnable_fk_forward(batch, config, params, return_features=False):
    """GMN-L: ``v_i <- psi(h_i) v_i + rho(qddot_k, x_ki, f_i)``, ``x_i <- x_i + v_i``."""
    layout = batch.layout
    groups = {PARTICLE: layout.particles[:, None], STICK: layout.sticks, HINGE: layout.hinges}
    x = ad.Tensor(batch.x)
    v = ad.Tensor(batch.v)
    idx_all = np.arange(batch.n_nodes)[:, None]
    h = embed(params, batch)
    for l in range(config.layers):
        p = "layer%d" % l
        f, h_new = interaction_step(params, l, batch, x, h)
        q_node, qd_node = _object_frames(batch, x, v)
        x_rel = x - q_node
        v_rel = v - qd_node
        acc_parts = []
        for kind in (PARTICLE, STICK, HINGE):
            idx = groups[kind]
            if not len(idx):
                continue
            cols = range(idx.shape[1])
            qddot = infer_generalized_accel(
                params, config, l, kind,
                [ad.take(f, idx[:, k], 1) for k in cols],
                [ad.take(x_rel, idx[:, k], 1) for k in cols],
                [ad.take(v_rel, idx[:, k], 1) for k in cols],
                [ad.take(h_new, idx[:, k], 1) for k in cols],
            )
            acc_parts.append(ad.take(qddot, np.repeat(np.arange(len(idx)), idx.shape[1]), 1))
        acc = acc_parts[0] if len(acc_parts) == 1 else ad.concat(acc_parts, axis=1)
        acc_node = ad.take(acc, layout.inverse, 1)
        rho = equivariant_apply(params, p + ".rho", [acc_node, x_rel, f], h_new, m_out=1,
                                normalize=config.normalize)[0]
        psi = _gate(params, p + ".psi", _member_sum(h, idx_all))
        v = ad.mul(psi, v) + rho
        x = x + v
        h = h_new
    return (x, h) if return_features else x


def linear_forward(batch, config, params):
    alpha = ad.reshape(params["alpha"], (1, 1, 1))
    return ad.Tensor(batch.x) + ad.mul(alpha, ad.Tensor(batch.v))


def forward(batch, config, params):
    kind = config.kind
    if kind == "gmn":
        return gmn_forward(batch, config, params)
    if kind == "gmn-l":
        return learnable_fk_forward(batch, config, params)
    if kind in ("egnn", "egnn-reg"):
        return egnn_forward(batch, config, params)
    return linear_forward(batch, config, params)


# -- kinematics decomposition -------------------------------------------------


def decompose_kinematics(n, edges, rigid):
    """Split a graph into disjoint sticks (a greedy maximal matching on rigid edges) and particles.

    Args:
        n: number of nodes.
        edges: iterable of undirected ``(a, b)`` pairs.
        rigid: iterable of booleans, one per edge.
    """
    matched = np.zeros(n, dtype=bool)
    objects = []
    for (a, b), is_rigid in zip(edges, rigid):
        if is_rigid and a != b and not matched[a] and not matched[b]:
            matched[a] = matched[b] = True
            objects.append(RigidObject(STICK, (int(a), int(b)), None))
    for i in range(n):
        if not matched[i]:
            objects.append(RigidObject(PARTICLE, (i,), i))
    return objects
