"""Command-line front end: train, sample, eval, export-hist.

Config files are flat namespaced ``key = value`` text (a TOML-compatible
subset).  All randomness flows from the mandatory ``seed`` key.  Exit
codes: 0 success, 2 invalid config/arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
import tempfile

import numpy as np

from ttflow.als import AlsConfig
from ttflow.metrics import energy_distance, moment_report
from ttflow.pipeline import (FlowModel, RunConfig, load_checkpoint, sample,
                             save_checkpoint, train)
from ttflow.targets import make_target

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# flat config key -> (RunConfig attribute, parser)
_KEYS = {
    "seed": ("seed", int),
    "target": ("target", str),
    "manywell.m": ("manywell_m", int),
    "manywell.d": ("manywell_d", int),
    "latent.stddev": ("latent_stddev", float),
    "domain.lo": (None, float),
    "domain.hi": (None, float),
    "basis.n": ("basis_n", int),
    "schedule.M": ("steps", int),
    "train.N": ("train_n", int),
    "train.outer": ("outer_iterations", int),
    "train.variant": ("variant", str),
    "train.collocation": ("collocation", str),
    "train.init_rank": ("init_rank", int),
    "als.sweeps": (None, int),
    "als.ridge": (None, float),
    "als.tol": (None, float),
    "als.estimate_ct": (None, bool),
    "ema.alpha": ("ema_alpha", float),
    "round.tol": ("round_tol", float),
    "round.max_rank": ("max_rank", int),
    "ode.substeps": ("ode_substeps", int),
    "langevin.h": ("langevin_h", float),
    "langevin.steps": ("langevin_steps", int),
    "langevin.pre": ("langevin_pre", bool),
    "resample.scheme": ("resample_scheme", str),
    "resample.ess_floor": ("resample_ess_floor", float),
    "threads": ("threads", int),
}


class ConfigError(ValueError):
    pass


def _parse_value(text: str, kind):
    text = text.strip()
    if kind is bool:
        if text in ("true", "True"):
            return True
        if text in ("false", "False"):
            return False
        raise ConfigError(f"expected boolean, got {text!r}")
    if kind is str:
        return text.strip('"').strip("'")
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value {text!r}: {exc}") from exc


def parse_config_text(text: str) -> dict:
    """Parse the flat key/value format to a raw {key: value} dict,
    rejecting unknown keys by name."""
    raw: dict = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            unknown.append(key)
            continue
        raw[key] = _parse_value(value, _KEYS[key][1])
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    return raw


def build_run_config(raw: dict) -> RunConfig:
    if "seed" not in raw:
        raise ConfigError("config must set an explicit 'seed'")
    kwargs = {}
    for key, value in raw.items():
        attr, _ = _KEYS[key]
        if attr is not None:
            kwargs[attr] = value
    als_kwargs = {}
    for cfg_key, attr in (("als.sweeps", "sweeps"), ("als.ridge", "ridge"),
                          ("als.tol", "tol"),
                          ("als.estimate_ct", "estimate_ct")):
        if cfg_key in raw:
            als_kwargs[attr] = raw[cfg_key]
    if als_kwargs:
        kwargs["als"] = AlsConfig(**als_kwargs)
    if "domain.lo" in raw or "domain.hi" in raw:
        if not ("domain.lo" in raw and "domain.hi" in raw):
            raise ConfigError("domain.lo and domain.hi must be set together")
        kwargs["domain"] = (raw["domain.lo"], raw["domain.hi"])
    try:
        config = RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "TTFLOW_THREADS" in os.environ:
        config.threads = int(os.environ["TTFLOW_THREADS"])
    return config


def config_to_manifest_items(config: RunConfig) -> list[tuple[str, str]]:
    items = []
    for key, (attr, _) in _KEYS.items():
        if attr is None:
            continue
        value = getattr(config, attr)
        if value is None:
            continue
        items.append((key, str(value)))
    if config.domain is not None:
        items.append(("domain.lo", str(config.domain[0])))
        items.append(("domain.hi", str(config.domain[1])))
    items.append(("als.sweeps", str(config.als.sweeps)))
    if config.als.ridge is not None:
        items.append(("als.ridge", str(config.als.ridge)))
    items.append(("als.tol", str(config.als.tol)))
    items.append(("als.estimate_ct", str(config.als.estimate_ct).lower()))
    return sorted(items)


def _atomic_write(path: str, write_fn):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_samples_csv(path: str, points: np.ndarray):
    dim = points.shape[1] if points.size else points.shape[1]

    def body(fh):
        fh.write(",".join(f"x{i + 1}" for i in range(dim)) + "\n")
        for row in points:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    _atomic_write(path, body)


def read_samples_csv(path: str) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        dim = len(header)
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return np.empty((0, dim))
    return data


def _write_manifest(path: str, config: RunConfig, checkpoint_hash: str):
    def body(fh):
        for key, value in config_to_manifest_items(config):
            fh.write(f"{key} = {value}\n")
        fh.write(f"checkpoint.sha256 = {checkpoint_hash}\n")

    _atomic_write(path, body)


def read_manifest(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines()
             if not ln.startswith("checkpoint.sha256")]
    return build_run_config(parse_config_text("\n".join(lines)))


def cmd_train(args) -> int:
    try:
        with open(args.config) as fh:
            raw = parse_config_text(fh.read())
        config = build_run_config(raw)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    try:
        model = train(config)
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure during training: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ckpt_path = os.path.join(args.out, "checkpoint.ttfl")
    digest = save_checkpoint(model, ckpt_path)
    _write_manifest(os.path.join(args.out, "manifest.txt"), config, digest)

    log_path = os.path.join(args.out, "training_log.csv")

    def log_body(fh):
        writer = csv.writer(fh)
        writer.writerow(["iteration", "step", "loss", "ess", "c_t",
                         "max_rank", "outside"])
        for row in model.history:
            writer.writerow([row["iteration"], row["step"],
                             f"{row['loss']:.17g}", f"{row['ess']:.17g}",
                             f"{row['c_t']:.17g}", row["max_rank"],
                             row["outside"]])

    _atomic_write(log_path, log_body)
    print(f"checkpoint: {ckpt_path}")
    print(f"manifest:   {os.path.join(args.out, 'manifest.txt')}")
    print(f"log:        {log_path}")
    return 0


def _load_model(checkpoint: str) -> FlowModel:
    manifest = os.path.join(os.path.dirname(os.path.abspath(checkpoint)),
                            "manifest.txt")
    if not os.path.exists(manifest):
        raise ConfigError(f"manifest not found next to checkpoint: {manifest}")
    config = read_manifest(manifest)
    return load_checkpoint(checkpoint, config)


def cmd_sample(args) -> int:
    try:
        model = _load_model(args.checkpoint)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        points, meta = sample(model, args.count, args.variant, args.seed)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure during sampling: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.count == 0:
        points = np.empty((0, model.dim))
    write_samples_csv(args.out, points)
    print(f"wrote {args.count} samples to {args.out}"
          f" (frozen: {meta['num_frozen']})")
    return 0


def cmd_eval(args) -> int:
    try:
        samples = read_samples_csv(args.samples)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _, truth, _ = make_target(args.target, manywell_m=args.manywell_m,
                              manywell_d=args.manywell_d)
    if samples.shape[1] != truth.dim:
        print(f"error: samples have dimension {samples.shape[1]}, "
              f"target expects {truth.dim}", file=sys.stderr)
        return EXIT_CONFIG
    streams = np.random.SeedSequence(args.seed).spawn(args.draws)
    values = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        truth_pts = truth.draw(args.samples_per_draw, rng)
        if samples.shape[0] > args.samples_per_draw:
            idx = rng.choice(samples.shape[0], size=args.samples_per_draw,
                             replace=False)
            sub = samples[idx]
        else:
            sub = samples
        values.append(energy_distance(sub, truth_pts))
    values = np.asarray(values)
    means, variances = moment_report(samples)

    def body(fh):
        fh.write(f"energy_distance.mean = {values.mean():.17g}\n")
        if len(values) > 1:
            fh.write(f"energy_distance.std = {values.std(ddof=1):.17g}\n")
        fh.write(f"draws = {len(values)}\n")
        fh.write(f"samples = {samples.shape[0]}\n")
        for i, (mu, var) in enumerate(zip(means, variances)):
            fh.write(f"moments.x{i + 1}.mean = {mu:.17g}\n")
            fh.write(f"moments.x{i + 1}.var = {var:.17g}\n")

    _atomic_write(args.out, body)
    print(f"energy distance: {values.mean():.6g}"
          + (f" +/- {values.std(ddof=1):.3g}" if len(values) > 1 else ""))
    return 0


def cmd_export_hist(args) -> int:
    try:
        samples = read_samples_csv(args.samples)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dim = samples.shape[1]
    if dim < 2:
        print("error: need at least 2 dimensions", file=sys.stderr)
        return EXIT_CONFIG
    lo, hi = args.lo, args.hi

    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(["pair", "xbin", "ybin", "xcenter", "ycenter",
                         "count"])
        edges = np.linspace(lo, hi, args.bins + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        for pair in range(dim // 2):
            hist, _, _ = np.histogram2d(samples[:, 2 * pair],
                                        samples[:, 2 * pair + 1],
                                        bins=[edges, edges])
            for ix in range(args.bins):
                for iy in range(args.bins):
                    writer.writerow([pair, ix, iy,
                                     f"{centers[ix]:.17g}",
                                     f"{centers[iy]:.17g}",
                                     int(hist[ix, iy])])

    _atomic_write(args.out, body)
    print(f"wrote histograms for {dim // 2} pairs to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ttflow",
        description="Boltzmann sampling with tensor-train velocity fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a flow model")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="draw samples from a model")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--variant", default="flow+stochastic",
                          choices=["flow", "flow+", "flow+stochastic",
                                   "stochastic"])
    p_sample.add_argument("--count", type=int, required=True)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="evaluate samples against a target")
    p_eval.add_argument("--samples", required=True)
    p_eval.add_argument("--target", required=True)
    p_eval.add_argument("--manywell-m", type=int, default=2)
    p_eval.add_argument("--manywell-d", type=int, default=6)
    p_eval.add_argument("--draws", type=int, default=10)
    p_eval.add_argument("--samples-per-draw", type=int, default=10_000)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_hist = sub.add_parser("export-hist",
                            help="bin samples into per-pair 2-d histograms")
    p_hist.add_argument("--samples", required=True)
    p_hist.add_argument("--bins", type=int, default=50)
    p_hist.add_argument("--lo", type=float, default=-5.0)
    p_hist.add_argument("--hi", type=float, default=5.0)
    p_hist.add_argument("--out", required=True)
    p_hist.set_defaults(func=cmd_export_hist)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
