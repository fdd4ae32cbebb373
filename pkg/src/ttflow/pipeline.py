"""End-to-end training and sampling: the outer loop over annealing
steps, per-step ALS fits, EMA/rounding TT updates, the four method
variants, and the portable binary checkpoint format."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ttflow.als import AlsConfig, TrainingBatch, als_fit
from ttflow.basis import BasisSet, make_fourier_h2
from ttflow.dynamics import (ParticleEnsemble, langevin_step, ode_solve,
                             resampling_step)
from ttflow.field import FttVectorField
from ttflow.targets import EnergyPath, GroundTruthSampler, make_target
from ttflow.tt import TensorTrain, random_tt, zero_tt

VARIANTS = ("flow", "flow+", "flow+stochastic", "stochastic")

CHECKPOINT_MAGIC = b"TTFL"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Schedule:
    """Uniform time grid t_m = m / M on [0, 1]."""

    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.steps + 1)


@dataclass
class RunConfig:
    seed: int
    target: str = "gm2"
    manywell_m: int = 2
    manywell_d: int = 6
    latent_stddev: Optional[float] = None
    domain: Optional[tuple[float, float]] = None
    basis_n: int = 10
    steps: int = 10                   # M
    train_n: int = 2000               # training batch size
    outer_iterations: int = 3
    variant: str = "flow+stochastic"
    collocation: str = "midpoint"     # residual time per interval
    als: AlsConfig = dc_field(default_factory=AlsConfig)
    init_rank: int = 1
    ema_alpha: float = 0.5
    round_tol: float = 1e-10
    max_rank: int = 20
    ode_substeps: int = 4
    langevin_h: Optional[float] = None
    langevin_steps: int = 10
    langevin_pre: bool = False
    resample_scheme: str = "multinomial"
    resample_ess_floor: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.collocation not in ("start", "midpoint"):
            raise ValueError(f"unknown collocation {self.collocation!r}")
        if not 0.0 <= self.ema_alpha < 1.0:
            raise ValueError("ema_alpha must be in [0, 1)")

    def resolved_langevin_h(self, domain: tuple[float, float]) -> float:
        if self.langevin_h is not None:
            return self.langevin_h
        width = domain[1] - domain[0]
        return 1e-3 * (width / 10.0) ** 2


@dataclass
class FlowModel:
    """Trained per-interval velocity fields plus training metadata."""

    fields: list[TensorTrain]
    c_ts: list[float]
    basis: BasisSet
    domain: tuple[float, float]
    config: RunConfig
    history: list[dict] = dc_field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.fields[0].order

    def field_at(self, k: int) -> FttVectorField:
        return FttVectorField(tt=self.fields[k], basis=self.basis,
                              domain=self.domain)

    def path(self) -> EnergyPath:
        path, _, _ = _resolve_target(self.config)
        return path


def _resolve_target(config: RunConfig):
    return make_target(config.target, manywell_m=config.manywell_m,
                       manywell_d=config.manywell_d,
                       latent_stddev=config.latent_stddev)


def update_tt(old: Optional[TensorTrain], new: TensorTrain, alpha: float,
              round_tol: float, max_rank: int) -> TensorTrain:
    """EMA combination of the previous and newly fitted TT followed by
    SVD recompression; rank adaptation happens through the rounding."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must be in [0, 1)")
    if old is None:
        return new.round(round_tol, max_rank)
    combined = old.scale(alpha).add(new.scale(1.0 - alpha))
    return combined.round(round_tol, max_rank)


def _latent_ensemble(path: EnergyPath, count: int,
                     rng: np.random.Generator,
                     latent_stddev: float) -> ParticleEnsemble:
    x = latent_stddev * rng.standard_normal((count, path.dim))
    return ParticleEnsemble(points=x, log_density=-path.f0.value(x))


def _latent_scale(config: RunConfig) -> float:
    if config.latent_stddev is not None:
        return config.latent_stddev
    return 500.0 if config.target == "gm40" else 1.0


def _stochastic_round(ens: ParticleEnsemble, path: EnergyPath, t: float,
                      config: RunConfig, domain: tuple[float, float],
                      rng: np.random.Generator) -> tuple[ParticleEnsemble, float]:
    """One resampling + Langevin round targeting the annealed energy at
    time t (optionally Langevin before resampling as well)."""
    energy = path.energy_at(t)
    h = config.resolved_langevin_h(domain)
    if config.langevin_pre:
        ens = langevin_step(ens, energy, h, config.langevin_steps, rng)
    ens, ess = resampling_step(ens, lambda pts: -energy.value(pts), rng,
                               scheme=config.resample_scheme,
                               ess_floor=config.resample_ess_floor)
    ens = langevin_step(ens, energy, h, config.langevin_steps, rng)
    return ens, ess


def train(config: RunConfig) -> FlowModel:
    """Training loop: repeat over outer iterations; in each
    one, transport a fresh latent ensemble through the time grid,
    fitting and EMA-updating the per-interval fields as it goes."""
    path, _, default_domain = _resolve_target(config)
    domain = config.domain or default_domain
    basis = make_fourier_h2(domain, config.basis_n)
    grid = Schedule(config.steps).grid()
    m = config.steps
    d = path.dim

    fields: list[Optional[TensorTrain]] = [None] * m
    c_ts = [0.0] * m
    history: list[dict] = []
    seed_seq = np.random.SeedSequence(config.seed)
    train_stochastic = config.variant == "flow+stochastic"
    fit_fields = config.variant != "stochastic"

    for iteration in range(config.outer_iterations):
        rng = np.random.default_rng(seed_seq.spawn(1)[0])
        ens = _latent_ensemble(path, config.train_n, rng,
                               _latent_scale(config))
        for k in range(m):
            t_lo, t_hi = grid[k], grid[k + 1]
            step_info = {"iteration": iteration, "step": k,
                         "loss": float("nan"), "ess": float("nan"),
                         "c_t": float("nan"), "max_rank": 0,
                         "outside": 0}
            if fit_fields:
                # The interval's frozen field approximates a time-varying
                # velocity; collocating the residual at the interval
                # midpoint makes the transported map second-order accurate
                # in the step size, while "start" fits at t_lo.
                t_fit = (t_lo if config.collocation == "start"
                         else 0.5 * (t_lo + t_hi))
                batch = TrainingBatch.from_points(ens.points, path, t_fit,
                                                  basis)
                if fields[k] is None:
                    init = random_tt((config.basis_n,) * d,
                                     (config.init_rank,) * (d - 1),
                                     output_dim=d, rng=rng, scale=1e-3)
                else:
                    init = fields[k]
                tt_new, c_t, loss = als_fit(batch, basis, init, config.als)
                fields[k] = update_tt(fields[k] if iteration > 0 else None,
                                      tt_new, config.ema_alpha,
                                      config.round_tol, config.max_rank)
                c_ts[k] = c_t
                fld = FttVectorField(tt=fields[k], basis=basis,
                                     domain=domain)
                step_info["loss"] = loss
                step_info["c_t"] = c_t
                step_info["max_rank"] = max(fields[k].ranks)
                step_info["outside"] = fld.count_outside(ens.points)
                ens = ode_solve(ens, fld, t_lo, t_hi, config.ode_substeps)
            if train_stochastic or config.variant == "stochastic":
                if config.variant == "stochastic":
                    # ratio p_{k+1} / p_k: re-anchor the tracked density
                    ens = ParticleEnsemble(
                        points=ens.points,
                        log_density=-path.energy_at(t_lo).value(ens.points),
                        num_frozen=ens.num_frozen)
                ens, ess = _stochastic_round(ens, path, t_hi, config,
                                             domain, rng)
                step_info["ess"] = ess
            history.append(step_info)

    final_fields = [f if f is not None
                    else zero_tt((config.basis_n,) * d, d) for f in fields]
    return FlowModel(fields=final_fields, c_ts=c_ts, basis=basis,
                     domain=domain, config=config, history=history)


def sample(model: FlowModel, count: int, variant: str,
           seed: int) -> tuple[np.ndarray, dict]:
    """Push latent draws through the trained fields under one of the
    four method variants; returns (points, metadata)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    config = model.config
    path, _, _ = _resolve_target(config)
    grid = Schedule(model.steps).grid()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ens = _latent_ensemble(path, count, rng, _latent_scale(config))
    ess_trace: list[float] = []

    for k in range(model.steps):
        t_lo, t_hi = grid[k], grid[k + 1]
        if variant == "stochastic":
            ens = ParticleEnsemble(
                points=ens.points,
                log_density=-path.energy_at(t_lo).value(ens.points),
                num_frozen=ens.num_frozen)
            ens, ess = _stochastic_round(ens, path, t_hi, config,
                                         model.domain, rng)
            ess_trace.append(ess)
            continue
        ens = ode_solve(ens, model.field_at(k), t_lo, t_hi,
                        config.ode_substeps)
        if variant == "flow+stochastic":
            ens, ess = _stochastic_round(ens, path, t_hi, config,
                                         model.domain, rng)
            ess_trace.append(ess)

    if variant == "flow+":
        ens, ess = _stochastic_round(ens, path, 1.0, config, model.domain,
                                     rng)
        ess_trace.append(ess)

    meta = {"ess": ess_trace, "num_frozen": ens.num_frozen,
            "variant": variant, "count": count, "seed": seed}
    return ens.points, meta


# ---------------------------------------------------------------------------
# Checkpoint serialization (little-endian, language-portable)
# ---------------------------------------------------------------------------

def checkpoint_bytes(model: FlowModel) -> bytes:
    """Binary layout: magic, version u32, d u32, M u32, n u32, domain
    bounds 2xf64; per field the internal ranks (u32 each) followed by
    core entries (f64, core-major, row-major); then the M constant
    estimates (f64)."""
    d, m, n = model.dim, model.steps, model.basis.size
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<IIII", CHECKPOINT_VERSION, d, m, n)
    out += struct.pack("<dd", *model.domain)
    for tt in model.fields:
        out += struct.pack(f"<{d - 1}I", *tt.ranks) if d > 1 else b""
        for core in tt.cores:
            out += np.ascontiguousarray(core, dtype="<f8").tobytes()
    out += struct.pack(f"<{m}d", *model.c_ts)
    return bytes(out)


def save_checkpoint(model: FlowModel, path: str) -> str:
    """Write the checkpoint and return its content hash (sha256 hex)."""
    data = checkpoint_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: str, config: RunConfig) -> FlowModel:
    """Read fields and constants back; basis/domain/target come from the
    run config recorded in the manifest."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a ttflow checkpoint (bad magic)")
    version, d, m, n = struct.unpack_from("<IIII", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    lo, hi = struct.unpack_from("<dd", data, 20)
    offset = 36
    fields = []
    for _ in range(m):
        if d > 1:
            ranks = struct.unpack_from(f"<{d - 1}I", data, offset)
            offset += 4 * (d - 1)
        else:
            ranks = ()
        bonds = [d, *ranks, 1]
        cores = []
        for k in range(d):
            size = bonds[k] * n * bonds[k + 1]
            core = np.frombuffer(data, dtype="<f8", count=size,
                                 offset=offset).reshape(bonds[k], n,
                                                        bonds[k + 1])
            cores.append(core.copy())
            offset += 8 * size
        fields.append(TensorTrain(cores))
    c_ts = list(struct.unpack_from(f"<{m}d", data, offset))
    offset += 8 * m
    if offset != len(data):
        raise ValueError("trailing bytes in checkpoint")
    basis = make_fourier_h2((lo, hi), n)
    return FlowModel(fields=fields, c_ts=c_ts, basis=basis,
                     domain=(lo, hi), config=config)
