"""Command-line front end: ``qtomo <command> --config <path> [--threads N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 efficiency
outside the domain of the requested estimators.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from referencing import Registry, Resource

from . import kernels
from .errors import ConfigError, DomainError, EtaOutOfDomain, QtomoError

log = logging.getLogger("qtomo")

COMMANDS = ("simulate", "reconstruct", "mlfit", "test", "image")
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ETA = 4
# input paths with this prefix name files shipped in the package data directory
BUNDLED_PREFIX = "qtomo:"


# ---------------------------------------------------------------- schemas


def load_schema(name: str) -> dict[str, Any]:
    text = resources.files("qtomo").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def _registry() -> Registry:
    state = load_schema("state")
    return Registry().with_resource("state.json", Resource.from_contents(state))


def validate(instance: Any, name: str) -> None:
    """Raise ConfigError when ``instance`` violates schema ``name``."""
    validator = jsonschema.Draft202012Validator(load_schema(name), registry=_registry())
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.path) or "<root>"
        raise ConfigError(f"{name} config invalid at {where}: {err.message}")


# ---------------------------------------------------------------- helpers


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class RunContext:
    command: str
    config: dict[str, Any]
    config_path: Path
    out_dir: Path
    seed: int
    inputs: dict[str, str] = dataclasses.field(default_factory=dict)
    outputs: dict[str, str] = dataclasses.field(default_factory=dict)

    def input_path(self, rel: str) -> Path:
        if rel.startswith(BUNDLED_PREFIX):
            p = Path(str(resources.files("qtomo").joinpath("data", rel[len(BUNDLED_PREFIX) :])))
        else:
            p = Path(rel)
            if not p.is_absolute():
                # earlier pipeline steps write into the output directory
                p = next((d / p for d in (self.out_dir, self.config_path.parent) if (d / p).exists()), self.config_path.parent / p)
        if not p.exists():
            raise FileNotFoundError(f"input file not found: {p}")
        self.inputs[rel] = sha256_file(p)
        return p

    def output_path(self, key: str) -> Path | None:
        rel = self.config["output"].get(key)
        if rel is None:
            return None
        p = Path(rel)
        p = p if p.is_absolute() else self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs[key] = rel
        return p

    def report(self, results: dict[str, Any]) -> dict[str, Any]:
        payload = {
            "schema_version": 1,
            "command": self.command,
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "results": results,
        }
        validate(payload, "report")
        return payload


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _load_data(ctx: RunContext):
    from .detector_sim import DataSet

    path = ctx.input_path(ctx.config["data"])
    side = path.with_suffix(".json")
    if side.exists():
        ctx.inputs[str(Path(ctx.config["data"]).with_suffix(".json"))] = sha256_file(side)
    return DataSet.load(path)


# ---------------------------------------------------------------- commands


def cmd_simulate(ctx: RunContext) -> dict[str, Any]:
    from .detector_sim import sample_homodyne, sample_twin_beam_homodyne, sample_twin_beam_two_channel
    from .states import StateSpec, make_state

    cfg = ctx.config
    spec = StateSpec.from_dict(cfg["state"])
    eta = float(cfg.get("eta", 1.0))
    n = int(cfg["N"])
    if spec.kind == "twin_beam":
        detection = cfg.get("detection", "single_lo")
        if detection == "single_lo":
            data = sample_twin_beam_homodyne(spec.xi, n, eta, ctx.seed)
        elif detection == "two_channel":
            data = sample_twin_beam_two_channel(spec.xi, n, eta, ctx.seed)
        else:
            raise ConfigError("twin-beam states need detection 'single_lo' or 'two_channel'")
    else:
        detection = cfg.get("detection", "homodyne")
        if detection != "homodyne":
            raise ConfigError(f"detection {detection!r} needs a twin-beam state")
        data = sample_homodyne(
            make_state(spec), n, eta, cfg.get("phase_policy", "uniform"), ctx.seed, int(cfg.get("n_phases", 100))
        )
    data = dataclasses.replace(data, provenance=dict(data.provenance, state=spec.to_dict()))
    csv_path = ctx.output_path("data")
    data.save(csv_path)
    summary = {"N": n, "eta": eta, "state": spec.to_dict(), "seed": ctx.seed, "detection": detection, "kind": data.kind}
    print(f"simulated N={n} eta={eta} state={spec.kind} seed={ctx.seed} -> {csv_path}")
    return summary


def cmd_reconstruct(ctx: RunContext) -> dict[str, Any]:
    from .estimators import reconstruct_matrix
    from .multimode import reconstruct_joint_pmf, reconstruct_total_photon

    cfg = ctx.config
    data = _load_data(ctx)
    eta = float(cfg.get("eta", data.eta))
    cutoff = int(cfg["cutoff"])
    blocks = int(cfg.get("n_blocks", 20))
    method = cfg.get("method", "matrix")
    table = ctx.output_path("table")
    if method == "matrix":
        rec = reconstruct_matrix(data, cutoff, eta, blocks)
        if table is not None:
            rec.save_csv(table)
        ent = rec.rho.entries
        results = {
            "method": method,
            "cutoff": cutoff,
            "eta": eta,
            "records": len(data),
            "diagonal": rec.rho.diagonal(),
            "diagonal_stderr": np.diag(rec.stderr),
            "entries_re": ent.real,
            "entries_im": ent.imag,
            "stderr": rec.stderr,
            "min_eigenvalue": rec.min_eigenvalue,
            "physical": rec.rho.physical,
        }
    elif method == "joint_pmf":
        pmf = reconstruct_joint_pmf(data, cutoff - 1, eta, blocks)
        if table is not None:
            pmf.save_csv(table)
        results = {"method": method, "cutoff": cutoff, "eta": eta, "records": len(data), "p": pmf.p, "stderr": pmf.stderr}
    else:
        pmf = reconstruct_total_photon(data, cutoff - 1, eta, blocks)
        if table is not None:
            write_table(table, ["n", "p", "stderr"], [(i, p, e) for i, (p, e) in enumerate(zip(pmf.p, pmf.stderr))])
        results = {"method": method, "cutoff": cutoff, "eta": eta, "records": len(data), "p": pmf.p, "stderr": pmf.stderr}
    return results


def cmd_mlfit(ctx: RunContext) -> dict[str, Any]:
    from .maxlik import ml_gaussian_fit, ml_reconstruct

    cfg = ctx.config
    data = _load_data(ctx)
    eta = float(cfg.get("eta", data.eta))
    restarts = int(cfg.get("restarts", 5))
    table = ctx.output_path("table")
    if cfg["model"] == "density":
        res = ml_reconstruct(data, int(cfg["cutoff"]), eta, int(cfg.get("budget", 1500)), restarts, ctx.seed)
        if table is not None:
            write_table(table, ["n", "p"], list(enumerate(res.state.diagonal())))
        out = res.to_dict()
        out["model"] = "density"
        return out
    fit = ml_gaussian_fit(data, eta, restarts, ctx.seed, int(cfg.get("budget", 2000)))
    if table is not None:
        p, e = fit.photon_pmf(int(cfg.get("cutoff", 16)) - 1)
        write_table(table, ["n", "p", "stderr"], [(i, a, b) for i, (a, b) in enumerate(zip(p, e))])
    out = fit.to_dict()
    out["model"] = "gaussian"
    return out


def cmd_test(ctx: RunContext) -> dict[str, Any]:
    from .applications import test_b, test_c

    cfg = ctx.config
    data = _load_data(ctx)
    blocks = int(cfg.get("n_blocks", 20))
    if cfg["test"] == "b":
        rep = test_b(data, int(cfg.get("cutoff", 10)), cfg.get("mode", "noisy_state"), blocks)
    else:
        rep = test_c(data, cfg.get("eta"), cfg.get("target", "lossy"), blocks)
    if "threshold" in cfg:
        rep = dataclasses.replace(rep, threshold=float(cfg["threshold"]))
    table = ctx.output_path("table")
    if table is not None:
        vals = np.atleast_1d(rep.values)
        errs = np.atleast_1d(rep.stderr)
        write_table(table, ["n", "value", "stderr"], [(i, v, e) for i, (v, e) in enumerate(zip(vals, errs))])
    print(f"test {cfg['test']}: verdict count {rep.verdict} at {rep.threshold} standard errors")
    return rep.to_dict()


def cmd_image(ctx: RunContext) -> dict[str, Any]:
    from . import imaging

    cfg = ctx.config
    src = cfg["source"]
    n_angles = int(cfg.get("angles", imaging.DEFAULT_ANGLES))
    angles = imaging.equally_spaced_angles(n_angles)
    spots = int(cfg.get("spots_per_angle", 0))
    cutoffs = sorted(set(int(c) for c in cfg["cutoffs"]))
    reference = None
    if src["kind"] == "disc":
        radius = float(src.get("radius", 1.0))
        analytic = imaging.disc_profiles(angles, radius)
        grid_profiles = imaging.disc_profiles(angles, radius, x=np.linspace(-radius, radius, 20001))
        reference = imaging.disc_matrix(max(cutoffs) + 300, radius)
    else:
        path = ctx.input_path(src["path"])
        pixels = imaging.read_pgm(path)[::-1]
        extent = float(src.get("extent", 2.0))
        xs = np.linspace(-extent, extent, pixels.shape[1])
        ys = np.linspace(-extent, extent, pixels.shape[0])
        img = imaging.ImagePlane(xs, ys, pixels).normalized()
        analytic = grid_profiles = imaging.radon_project(img, angles)
    data = imaging.sample_spots(grid_profiles, spots, ctx.seed) if spots > 0 else None
    rows = []
    mats = {}
    for c in cutoffs:
        if data is None:
            rho = imaging.profile_reconstruct(analytic, c)
        else:
            rho = imaging.image_reconstruct(data, c).rho
        mats[c] = rho
    ref = reference if reference is not None else mats[max(cutoffs)]
    for c in cutoffs:
        rows.append((c, imaging.hilbert_distance(ref, mats[c]), float(np.real(np.trace(mats[c].entries)))))
    table = ctx.output_path("table")
    if table is not None:
        write_table(table, ["d_H", "D", "trace"], rows)
    image_path = ctx.output_path("image")
    if image_path is not None:
        render = cfg.get("render", {})
        ext = float(render.get("extent", 2.0))
        pts = np.linspace(-ext, ext, int(render.get("points", 201)))
        imaging.image_render(mats[max(cutoffs)], pts, pts).save_pgm(image_path)
    return {
        "source": src,
        "angles": n_angles,
        "spots_per_angle": spots,
        "reference": "disc" if reference is not None else f"d_H={max(cutoffs)}",
        "distance": [{"d_H": c, "D": d, "trace": t} for c, d, t in rows],
    }


HANDLERS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "mlfit": cmd_mlfit,
    "test": cmd_test,
    "image": cmd_image,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtomo", description="Homodyne tomography toolkit")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("--out", default=None, help="directory for relative output paths")
    return parser


def run(command: str, config_path, out_dir=None, threads: int | None = None) -> dict[str, Any]:
    """Execute one command; returns the report payload."""
    config_path = Path(config_path)
    try:
        config = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate(config, command)
    seed = int(config["seed"])
    env_seed = os.environ.get("QTOMO_SEED")
    if env_seed not in (None, ""):
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"QTOMO_SEED must be an integer, got {env_seed!r}") from exc
        log.warning("QTOMO_SEED=%d overrides config seed %d", seed, int(config["seed"]))
    if threads is not None:
        kernels.set_threads(threads)
    out = Path(out_dir) if out_dir is not None else config_path.parent
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(command, config, config_path, out, seed)
    ctx.inputs[config_path.name] = sha256_file(config_path)
    results = HANDLERS[command](ctx)
    report_path = ctx.output_path("report")
    payload = ctx.report(_jsonable(results))
    if report_path is not None:
        write_json(report_path, payload)
    return payload


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        run(args.command, args.config, args.out, args.threads)
    except EtaOutOfDomain as exc:
        print(f"error: {exc}; Fock matrix-element estimators require eta > 1/2", file=sys.stderr)
        return EXIT_ETA
    except (ConfigError, DomainError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QtomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
