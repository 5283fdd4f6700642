"""Natural-gradient entropy-loss training on a tractable toy generator.

The generator is affine, ``G(z) = W z + b``; the victim is a linear-softmax
classifier; the perceptual distance is ``d^2(x, y) = |Phi (x - y)|^2``, whose
Hessian is the constant ``2 Phi^T Phi``. The entropy-loss gradient with
respect to the images is preconditioned by the regularised inverse of that
Hessian before being pulled back to the generator parameters. A
moment-matching loss against the auxiliary data stands in for ordinary GAN
training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BatchTooSmall, DimensionMismatch, EigenFailure, ValidationError


@dataclass(frozen=True, eq=False)
class ToyWorld:
    gen_w: np.ndarray  # D_img x D_z
    gen_b: np.ndarray  # D_img
    victim_w: np.ndarray  # K x D_img
    phi: np.ndarray  # F x D_img
    aux_mean: np.ndarray  # D_img
    aux_cov: np.ndarray  # D_img x D_img

    def __post_init__(self):
        for name in ("gen_w", "gen_b", "victim_w", "phi", "aux_mean", "aux_cov"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        d = self.gen_w.shape[0]
        shapes_ok = (
            self.gen_w.ndim == 2
            and self.gen_b.shape == (d,)
            and self.victim_w.ndim == 2 and self.victim_w.shape[1] == d
            and self.phi.ndim == 2 and self.phi.shape[1] == d
            and self.aux_mean.shape == (d,)
            and self.aux_cov.shape == (d, d)
        )
        if not shapes_ok:
            raise DimensionMismatch("toy world arrays have inconsistent shapes")
        if self.victim_w.shape[0] < 2:
            raise ValidationError("victim needs at least 2 classes")
        if self.phi.shape[0] >= d and np.linalg.matrix_rank(self.phi) < d:
            raise ValidationError("phi must have full column rank")

    @property
    def d_img(self):
        return self.gen_w.shape[0]

    @property
    def d_z(self):
        return self.gen_w.shape[1]


def generate(world, z):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != world.d_z:
        raise DimensionMismatch(f"latent dim {z.shape[1]} != {world.d_z}")
    return z @ world.gen_w.T + world.gen_b


# --- losses -----------------------------------------------------------------


def entropy_loss(world, images):
    """Mean Shannon entropy (nats) of the victim's softmax, and its image gradient.

    The gradient row ``i`` is the derivative of the batch mean with respect to
    image ``i``.
    """
    X = np.atleast_2d(np.asarray(images, dtype=np.float64))
    if X.shape[0] == 0:
        raise BatchTooSmall("empty batch")
    if X.shape[1] != world.d_img:
        raise DimensionMismatch(f"image dim {X.shape[1]} != {world.d_img}")
    logits = X @ world.victim_w.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    p = np.exp(log_p)
    h = -(p * log_p).sum(axis=1)
    # dH/dlogit_k = -p_k (log p_k + H)
    d_logits = -p * (log_p + h[:, None])
    n = X.shape[0]
    return float(h.mean()), d_logits @ world.victim_w / n


def perceptual_sq_distance(world, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.shape[-1] != world.d_img:
        raise DimensionMismatch(f"cannot compare shapes {x.shape} and {y.shape}")
    r = world.phi @ (x - y)
    return float(r @ r)


def perceptual_sq_distance_grad(world, x, y):
    """Gradient of ``d^2(x, y)`` with respect to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return 2.0 * world.phi.T @ (world.phi @ (x - y))


def hessian_of_distance(world):
    return 2.0 * world.phi.T @ world.phi


def hvp_finite_diff(d2_grad_fn, x, v, eps=None):
    """Hessian-vector product by central differences of a gradient function."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if eps is None:
        eps = 1e-4 * (np.linalg.norm(x) + 1.0)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    return (d2_grad_fn(x + eps * v) - d2_grad_fn(x - eps * v)) / (2.0 * eps)


# --- natural-gradient projection -------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray  # ascending, clamped at 0
    eigenvectors: np.ndarray  # orthonormal columns
    delta: float = 1e-6

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def inverse(self):
        """Dense ``v diag(1 / (lambda + delta)) v^T``."""
        return (self.eigenvectors / (self.eigenvalues + self.delta)) @ self.eigenvectors.T


def eigen_basis(h, delta=1e-6):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {h.shape}")
    if np.abs(h - h.T).max() > 1e-10 * max(1.0, float(np.abs(h).max())):
        raise EigenFailure("matrix is not symmetric")
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    try:
        w, v = np.linalg.eigh((h + h.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    w = np.maximum(w, 0.0)
    if np.any(w + delta <= 0.0):
        raise EigenFailure("singular matrix with delta = 0")
    return EigenBasis(w, v, float(delta))


def ngd_project(grad_img, basis):
    """Apply ``H^-1 ~ v (lambda + delta)^-1 v^T`` to every gradient row."""
    G = np.atleast_2d(np.asarray(grad_img, dtype=np.float64))
    if G.shape[1] != basis.dim:
        raise DimensionMismatch(f"gradient dim {G.shape[1]} != basis dim {basis.dim}")
    v = basis.eigenvectors
    return ((G @ v) / (basis.eigenvalues + basis.delta)) @ v.T


def chain_to_generator(grad_img, z_batch):
    """Pull image-space gradients back to ``(dW, db)`` of the affine generator.

    ``grad_img`` rows must already be gradients of the batch loss, so the
    per-sample outer products are summed.
    """
    G = np.atleast_2d(np.asarray(grad_img, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if G.shape[0] != Z.shape[0]:
        raise DimensionMismatch(f"batch sizes differ: {G.shape[0]} vs {Z.shape[0]}")
    return G.T @ Z, G.sum(axis=0)


def _batch_moments(X):
    m = X.mean(axis=0)
    Xc = X - m
    return m, Xc, Xc.T @ Xc / (X.shape[0] - 1)


def vanilla_loss(world, z_batch):
    """Moment-matching loss ``|mean - aux_mean|^2 + |cov - aux_cov|_F^2`` and its parameter gradients."""
    Z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    n = Z.shape[0]
    if n < 2:
        raise BatchTooSmall(f"need a batch of at least 2, got {n}")
    X = generate(world, Z)
    m, Xc, C = _batch_moments(X)
    dm = m - world.aux_mean
    dC = C - world.aux_cov
    loss = float(dm @ dm + np.sum(dC * dC))
    # centring drops out: the centred rows sum to zero
    grad_x = 2.0 * dm[None, :] / n + 2.0 * Xc @ (dC + dC.T) / (n - 1)
    gw, gb = chain_to_generator(grad_x, Z)
    return loss, gw, gb


def manifold_deviation(world, z_probe):
    """Moment deviation of ``G(z_probe)`` from the auxiliary data, in whitened coordinates.

    With ``aux_cov = L L^T`` this is ``|L^-1 dm|^2 + |L^-1 dC L^-T|_F^2``, so
    departures along low-variance (off-manifold) directions weigh heavily.
    """
    X = generate(world, z_probe)
    m, _, C = _batch_moments(X)
    L = np.linalg.cholesky(world.aux_cov)
    wm = np.linalg.solve(L, m - world.aux_mean)
    half = np.linalg.solve(L, C - world.aux_cov)
    wc = np.linalg.solve(L, half.T)
    return float(wm @ wm + np.sum(wc * wc))


# --- training loop ----------------------------------------------------------


@dataclass
class TrajectoryReport:
    entropy_loss: np.ndarray
    manifold_deviation: np.ndarray
    projection_enabled: bool
    final_world: ToyWorld
    params: list = field(default_factory=list)  # (gen_w, gen_b) after each step, when recorded

    def to_csv(self):
        lines = ["step,entropy_loss,manifold_deviation"]
        for s, (h, m) in enumerate(zip(self.entropy_loss, self.manifold_deviation)):
            lines.append(f"{s},{float(h)!r},{float(m)!r}")
        return "\n".join(lines) + "\n"


def toy_augmentation_run(world, steps, lr, batch, seed, projection=True, entropy_weight=1.0,
                         vanilla_weight=1.0, delta=1e-6, probe_size=256, record_params=False):
    """Joint vanilla + entropy training of the toy generator.

    Each step draws a latent batch, takes the moment-matching gradient and the
    entropy gradient (projected through the inverse distance Hessian when
    ``projection`` is on), and applies one gradient-descent update. Row ``s``
    of the report is measured on a fixed probe batch after ``s`` updates, so
    row 0 is the starting point.
    """
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if lr < 0:
        raise ValidationError("lr must be non-negative")
    if batch < 2:
        raise BatchTooSmall(f"batch must be >= 2, got {batch}")
    rng = np.random.default_rng(seed)
    z_probe = rng.standard_normal((probe_size, world.d_z))
    basis = eigen_basis(hessian_of_distance(world), delta) if projection else None

    W = world.gen_w.copy()
    b = world.gen_b.copy()
    current = world
    ent, dev, params = [], [], []

    def record(w):
        ent.append(entropy_loss(w, generate(w, z_probe))[0])
        dev.append(manifold_deviation(w, z_probe))

    record(current)
    for _ in range(steps):
        z = rng.standard_normal((batch, world.d_z))
        _, gw_v, gb_v = vanilla_loss(current, z)
        _, g_img = entropy_loss(current, generate(current, z))
        if basis is not None:
            g_img = ngd_project(g_img, basis)
        gw_e, gb_e = chain_to_generator(g_img, z)
        W = W - lr * (vanilla_weight * gw_v + entropy_weight * gw_e)
        b = b - lr * (vanilla_weight * gb_v + entropy_weight * gb_e)
        current = replace(current, gen_w=W, gen_b=b)
        record(current)
        if record_params:
            params.append((W.copy(), b.copy()))
    return TrajectoryReport(np.array(ent), np.array(dev), bool(projection), current, params)


def make_toy_world(d_img=6, d_manifold=3, n_classes=3, condition=100.0, on_var=1.0, off_var=1e-2,
                   victim_scale=1.0, seed=0):
    """A world whose auxiliary data is a thin ellipsoid around a ``d_manifold``-dim subspace.

    ``phi`` stretches the off-subspace directions so that the distance
    Hessian has condition number ``condition``. The generator (latent dim
    ``d_img``) starts exactly at the auxiliary moments.
    """
    if not 1 <= d_manifold <= d_img:
        raise ValidationError("need 1 <= d_manifold <= d_img")
    if condition < 1:
        raise ValidationError("condition must be >= 1")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d_img, d_img)))
    n_off = d_img - d_manifold
    variances = np.array([on_var] * d_manifold + [off_var] * n_off)
    aux_cov = (q * variances) @ q.T
    aux_cov = (aux_cov + aux_cov.T) / 2.0
    aux_mean = 0.1 * rng.standard_normal(d_img)
    scales = np.array([1.0] * d_manifold + [np.sqrt(condition)] * n_off)
    phi = scales[:, None] * q.T
    gen_w = q * np.sqrt(variances)
    victim_w = victim_scale * rng.standard_normal((n_classes, d_img))
    return ToyWorld(gen_w, aux_mean.copy(), victim_w, phi, aux_mean, aux_cov)


def paired_runs(world, steps, lr, batch, seed, entropy_weight=1.0, growth=1.25, max_weight=1e6, **kwargs):
    """Unprojected run plus a projected run with at least the same entropy reduction.

    The projected run's entropy weight starts at ``entropy_weight`` times the
    smallest eigenvalue of the regularised Hessian (the isotropic step-size
    equivalent) and grows by ``growth`` until its entropy reduction matches
    the unprojected one. Returns ``(plain, projected, projected_weight)``.
    """
    delta = kwargs.get("delta", 1e-6)
    plain = toy_augmentation_run(world, steps, lr, batch, seed, projection=False,
                                 entropy_weight=entropy_weight, **kwargs)
    target = plain.entropy_loss[0] - plain.entropy_loss[-1]
    basis = eigen_basis(hessian_of_distance(world), delta)
    weight = entropy_weight * (float(basis.eigenvalues[0]) + basis.delta)
    while True:
        proj = toy_augmentation_run(world, steps, lr, batch, seed, projection=True,
                                    entropy_weight=weight, **kwargs)
        if proj.entropy_loss[0] - proj.entropy_loss[-1] >= target or weight * growth > max_weight:
            return plain, proj, weight
        weight *= growth
