"""Adversarial identification loop.

A parameter-generator network P maps standard-normal noise to coefficient
values of the assumed equation of motion. Per batch the loop takes one
discriminator step (real vs model-generated accelerations, validation data
only) and one generator step whose loss is

    L_P = L_adv + gamma * L_mse

with the adversarial term computed on validation data and the MSE term on
the identification data. Gradients reach P analytically through the
acceleration model and the coefficient decoding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .physics import (
    ModelSpec,
    accel_param_jacobian_batch,
    decode_batch,
    decode_batch_backward,
    eval_accel_batch,
)

log = logging.getLogger(__name__)

LN4 = math.log(4.0)

GENERATOR_HIDDEN = (64, 32, 16)
DISCRIMINATOR_HIDDEN = (64, 32)


class TrainingDiverged(RuntimeError):
    """Raised when a loss or generated value goes non-finite; carries the
    epoch records harvested so far in `.records`."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    batch_size: int = 300
    latent_dim: int = 16
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    gamma: float = 1.0
    seed: int = 42
    normalize_mse: bool = False  # divide L_mse by mean(real training accel^2)
    # "paired": MSE of noise row i against its single paired time sample.
    # "cross": MSE of every noise row against the whole time batch (much
    # lower gradient variance per step at ~B x the evaluation cost).
    mse_pairing: str = "paired"
    convergence_window: int = 100
    convergence_param_rtol: float = 0.01
    convergence_dloss_tol: float = 0.15

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.latent_dim < 1:
            raise ValueError("max_epochs, batch_size and latent_dim must be >= 1")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.mse_pairing not in ("paired", "cross"):
            raise ValueError("mse_pairing must be 'paired' or 'cross'")
        if self.convergence_window < 1:
            raise ValueError("convergence window must be >= 1")


@dataclass
class StateHistory:
    """One experiment's aligned (q, qd, qdd) channels on a uniform grid."""

    times: np.ndarray
    disp: np.ndarray
    vel: np.ndarray
    accel: np.ndarray
    label: str = ""

    def __post_init__(self):
        for name in ("disp", "vel", "accel"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            setattr(self, name, arr)
        self.times = np.asarray(self.times, dtype=float)
        n = self.times.size
        if not (self.disp.shape[0] == self.vel.shape[0] == self.accel.shape[0] == n):
            raise ValueError("channel lengths disagree")
        if not (self.disp.shape == self.vel.shape == self.accel.shape):
            raise ValueError("channel widths disagree")

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def dof(self) -> int:
        return self.disp.shape[1]


@dataclass
class SivaDatasets:
    training: StateHistory
    validation: list

    def __post_init__(self):
        if not self.validation:
            raise ValueError("at least one validation dataset is required")
        dof = self.training.dof
        if any(v.dof != dof for v in self.validation):
            raise ValueError("validation channel count differs from training")


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    d_loss: float
    adv_loss: float
    mse_loss: float
    param_mean: dict

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "d_loss": self.d_loss,
            "adv_loss": self.adv_loss,
            "mse_loss": self.mse_loss,
            "param_mean": dict(self.param_mean),
        }

    @classmethod
    def from_dict(cls, d) -> "EpochRecord":
        return cls(int(d["epoch"]), float(d["d_loss"]), float(d["adv_loss"]),
                   float(d["mse_loss"]), dict(d["param_mean"]))


def sample_noise(count: int, latent_dim: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. standard-normal latent batch; advances rng deterministically."""
    if count < 1 or latent_dim < 1:
        raise ValueError("count and latent_dim must be >= 1")
    return rng.standard_normal((count, latent_dim))


def build_parameter_generator(latent_dim: int, model: ModelSpec, seed) -> nn.Mlp:
    """Noise -> raw coefficient outputs, linear head so signs survive.

    The head starts at zero so every decoded coefficient begins at 0 with
    no spread; the a*10^b decoding otherwise hands outlier rows gradients
    that dominate the batch.
    """
    dims = (latent_dim, *GENERATOR_HIDDEN, model.raw_dim)
    specs = [nn.LayerSpec(a, b, "leaky_relu") for a, b in zip(dims[:-2], dims[1:-1])]
    specs.append(nn.LayerSpec(dims[-2], dims[-1], "linear", init_scale=0.0))
    return nn.mlp_init(specs, seed)


def build_discriminator(dof: int, seed) -> nn.Mlp:
    """Per-sample acceleration vector -> probability the sample is real."""
    dims = (dof, *DISCRIMINATOR_HIDDEN, 1)
    specs = [nn.LayerSpec(a, b, "leaky_relu") for a, b in zip(dims[:-2], dims[1:-1])]
    specs.append(nn.LayerSpec(dims[-2], dims[-1], "sigmoid"))
    return nn.mlp_init(specs, seed)


def networks_for(model: ModelSpec, config: TrainConfig):
    """(P, D) with per-network seeds derived from the run seed."""
    root = np.random.SeedSequence(config.seed)
    p_seed, d_seed, _ = root.spawn(3)
    return (
        build_parameter_generator(config.latent_dim, model, p_seed),
        build_discriminator(model.dof, d_seed),
    )


def training_rng(config: TrainConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])


def generate_accelerations(P: nn.Mlp, model: ModelSpec, z: np.ndarray,
                           q: np.ndarray, qd: np.ndarray):
    """Decode P(z) and evaluate the model at the given states (no caches
    kept, for use where no gradient must flow back into P)."""
    raw, _ = nn.mlp_forward(P, z)
    values = decode_batch(raw, model)
    return values, eval_accel_batch(model, values, q, qd)


def discriminator_step(D: nn.Mlp, real_accels: np.ndarray, fake_accels: np.ndarray,
                       opt: nn.AdamState) -> float:
    """One Adam update of D on labels 1 (real) / 0 (generated).

    The loss is the sum of the two class means, so an undecided D that
    outputs 0.5 everywhere scores ln 4.
    """
    if real_accels.shape[1] != fake_accels.shape[1]:
        raise ValueError("real and fake acceleration dimension mismatch")
    p_real, cache_real = nn.mlp_forward(D, real_accels)
    p_fake, cache_fake = nn.mlp_forward(D, fake_accels)
    loss_real, g_real = nn.bce_loss(p_real, np.ones_like(p_real))
    loss_fake, g_fake = nn.bce_loss(p_fake, np.zeros_like(p_fake))
    d_loss = loss_real + loss_fake
    if not np.isfinite(d_loss):
        raise TrainingDiverged(f"discriminator loss is {d_loss}")
    grads_real, _ = nn.mlp_backward(D, cache_real, g_real)
    grads_fake, _ = nn.mlp_backward(D, cache_fake, g_fake)
    grads = [(gr[0] + gf[0], gr[1] + gf[1]) for gr, gf in zip(grads_real, grads_fake)]
    nn.adam_step(D, grads, opt)
    return d_loss


def generator_step(P: nn.Mlp, D: nn.Mlp, z: np.ndarray, model: ModelSpec,
                   train_batch, val_batch, config: TrainConfig,
                   opt: nn.AdamState, mse_scale: float = 1.0):
    """One Adam update of P; D stays frozen.

    train_batch = (q, qd, qdd) rows from the identification data (MSE term),
    val_batch = (q, qd) rows from validation data (adversarial term). Row i
    of both is evaluated with the coefficient set decoded from noise row i;
    in "cross" pairing mode the MSE instead spans every (noise row, time
    sample) combination of the batch. Returns (adv_loss, mse_loss) with the
    MSE already divided by mse_scale.
    """
    q_tr, qd_tr, qdd_tr = train_batch
    q_val, qd_val = val_batch

    raw, cache_p = nn.mlp_forward(P, z)
    values = decode_batch(raw, model)

    acc_val = eval_accel_batch(model, values, q_val, qd_val)
    if config.mse_pairing == "paired":
        acc_tr = eval_accel_batch(model, values, q_tr, qd_tr)
        real_tr = qdd_tr
        jac_tr = accel_param_jacobian_batch(model, values, q_tr, qd_tr)
        reduce_mse = "bd,bdc->bc"
    else:
        nb, nt = values.shape[0], q_tr.shape[0]
        vflat = np.repeat(values, nt, axis=0)
        qf = np.tile(q_tr, (nb, 1))
        qdf = np.tile(qd_tr, (nb, 1))
        acc_tr = eval_accel_batch(model, vflat, qf, qdf).reshape(nb, nt, -1)
        real_tr = np.broadcast_to(qdd_tr, acc_tr.shape)
        jac_tr = accel_param_jacobian_batch(model, vflat, qf, qdf).reshape(
            nb, nt, acc_tr.shape[2], -1
        )
        reduce_mse = "btd,btdc->bc"
    if not (np.all(np.isfinite(acc_tr)) and np.all(np.isfinite(acc_val))):
        raise TrainingDiverged(
            "non-finite generated acceleration; coefficient ranges: "
            + _value_ranges(values, model)
        )

    # adversarial term: make D call the generated validation samples real
    p_val, cache_d = nn.mlp_forward(D, acc_val)
    adv_loss, dadv_dp = nn.bce_loss(p_val, np.ones_like(p_val))
    _, dadv_dacc = nn.mlp_backward(D, cache_d, dadv_dp)

    mse, dmse_dacc = nn.mse_loss(acc_tr, real_tr)
    mse /= mse_scale
    dmse_dacc = dmse_dacc / mse_scale
    if not (np.isfinite(adv_loss) and np.isfinite(mse)):
        raise TrainingDiverged(
            f"non-finite generator loss (adv={adv_loss}, mse={mse}); "
            + _value_ranges(values, model)
        )

    jac_val = accel_param_jacobian_batch(model, values, q_val, qd_val)
    dvalues = np.einsum("bd,bdc->bc", dadv_dacc, jac_val)
    dvalues += config.gamma * np.einsum(reduce_mse, dmse_dacc, jac_tr)
    draw = decode_batch_backward(raw, dvalues, model)
    grads, _ = nn.mlp_backward(P, cache_p, draw)
    nn.adam_step(P, grads, opt)
    return adv_loss, mse


def _value_ranges(values, model) -> str:
    parts = []
    for i, name in enumerate(model.coefficient_names):
        col = values[:, i]
        parts.append(f"{name} in [{np.min(col):.4g}, {np.max(col):.4g}]")
    return ", ".join(parts)


def _sample_validation(rng, val_sets, count):
    """Uniformly pick a validation set per row, then a time index in it."""
    set_ids = rng.integers(0, len(val_sets), size=count)
    sizes = np.array([v.n_samples for v in val_sets])
    idx = np.floor(rng.random(count) * sizes[set_ids]).astype(np.int64)
    q = np.empty((count, val_sets[0].dof))
    qd = np.empty_like(q)
    acc = np.empty_like(q)
    for s, vset in enumerate(val_sets):
        rows = set_ids == s
        if np.any(rows):
            q[rows] = vset.disp[idx[rows]]
            qd[rows] = vset.vel[idx[rows]]
            acc[rows] = vset.accel[idx[rows]]
    return q, qd, acc


def run_training(P: nn.Mlp, D: nn.Mlp, datasets: SivaDatasets, model: ModelSpec,
                 config: TrainConfig, rng: np.random.Generator | None = None,
                 epoch_callback=None):
    """Full training loop; returns (P, D, records).

    Per epoch the identification samples are visited once in shuffled
    batches; each batch performs one discriminator step then one generator
    step. Fully deterministic for a given config/seed. On divergence a
    TrainingDiverged carrying the partial records is raised.
    """
    tr = datasets.training
    n_train = tr.n_samples
    if config.batch_size > n_train or any(
        config.batch_size > v.n_samples for v in datasets.validation
    ):
        raise ValueError("batch_size exceeds the shortest dataset length")
    if P.input_dim != config.latent_dim:
        raise ValueError("generator input dim does not match latent_dim")
    if P.output_dim != model.raw_dim:
        raise ValueError("generator output dim does not match the model encoding")
    if D.input_dim != tr.dof:
        raise ValueError("discriminator input dim does not match DOF count")

    if rng is None:
        rng = training_rng(config)
    opt_p = nn.AdamState.for_network(
        P, config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2
    )
    opt_d = nn.AdamState.for_network(
        D, config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2
    )
    mse_scale = float(np.mean(tr.accel**2)) if config.normalize_mse else 1.0
    if mse_scale == 0.0:
        mse_scale = 1.0

    n_batches = math.ceil(n_train / config.batch_size)
    records: list[EpochRecord] = []
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_train)
        d_sum = adv_sum = mse_sum = 0.0
        values = None
        for b in range(n_batches):
            sel = perm[b * config.batch_size : (b + 1) * config.batch_size]
            nb = sel.size

            q_v, qd_v, acc_v = _sample_validation(rng, datasets.validation, nb)
            z_d = sample_noise(nb, config.latent_dim, rng)
            try:
                _, fake_v = generate_accelerations(P, model, z_d, q_v, qd_v)
                d_loss = discriminator_step(D, acc_v, fake_v, opt_d)

                q_vg, qd_vg, _ = _sample_validation(rng, datasets.validation, nb)
                z_g = sample_noise(nb, config.latent_dim, rng)
                adv, mse = generator_step(
                    P, D, z_g, model,
                    (tr.disp[sel], tr.vel[sel], tr.accel[sel]),
                    (q_vg, qd_vg),
                    config, opt_p, mse_scale,
                )
            except (TrainingDiverged, ValueError) as exc:
                raise TrainingDiverged(
                    f"epoch {epoch} batch {b}: {exc}", records
                ) from exc
            d_sum += d_loss
            adv_sum += adv
            mse_sum += mse

        # harvest: decoded coefficient means over the epoch's final noise batch
        raw, _ = nn.mlp_forward(P, z_g)
        values = decode_batch(raw, model)
        param_mean = {
            name: float(v)
            for name, v in zip(model.coefficient_names, values.mean(axis=0))
        }
        records.append(
            EpochRecord(epoch, d_sum / n_batches, adv_sum / n_batches,
                        mse_sum / n_batches, param_mean)
        )
        if epoch_callback is not None:
            epoch_callback(records[-1])
        if epoch % 100 == 0 or epoch == config.max_epochs:
            log.info(
                "epoch %d: d=%.4f adv=%.4f mse=%.4g %s",
                epoch, records[-1].d_loss, records[-1].adv_loss,
                records[-1].mse_loss, param_mean,
            )
    return P, D, records


def detect_convergence(records, config: TrainConfig):
    """Earliest epoch whose trailing window satisfies the convergence rule.

    Window = the last `convergence_window` records ending at the candidate
    epoch. Within it every coefficient's running mean must drift less than
    `convergence_param_rtol` (relative) and the mean |d_loss - ln 4| must
    stay below `convergence_dloss_tol`. Returns the epoch number or None.
    """
    if not records:
        return None
    w = config.convergence_window
    d_losses = np.array([r.d_loss for r in records])
    names = list(records[0].param_mean)
    values = np.array([[r.param_mean[n] for n in names] for r in records])
    for end in range(w - 1, len(records)):
        win = slice(end - w + 1, end + 1)
        if np.mean(np.abs(d_losses[win] - LN4)) >= config.convergence_dloss_tol:
            continue
        running = np.cumsum(values[win], axis=0) / np.arange(1, w + 1)[:, None]
        final = running[-1]
        scale = np.maximum(np.abs(final), 1e-300)
        drift = (running.max(axis=0) - running.min(axis=0)) / scale
        if np.all(drift < config.convergence_param_rtol):
            return records[end].epoch
    return None
