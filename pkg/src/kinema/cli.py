"""Batch command-line front end.

Subcommands: fk, ik, project, signal, perturb, curate, eval. Configuration
comes from an optional JSON file plus flag overrides (flags win). All
randomness flows from the single run seed. Exit codes: 0 success, 1 usage,
2 input error, 3 internal. KINEMA_LOG controls verbosity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import control_signal as cs
from . import curation, kinematics, metrics, projection
from .errors import KinemaError
from .robot_model import parse_urdf, resolve_meshes, validate

log = logging.getLogger("kinema")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _setup_logging():
    level = os.environ.get("KINEMA_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = json.load(f)
    for key, val in vars(args).items():
        if key in ("func", "config") or val is None:
            continue
        cfg[key] = val
    return cfg


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_run_manifest(out_dir: Path, command: str, cfg: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config_hash": _config_hash(cfg),
                "seed": cfg.get("seed", 0), "timestamp": time.time()}
    with open(out_dir / "run_manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)


def _load_model(cfg):
    model = parse_urdf(Path(cfg["urdf"]).read_text())
    diags = validate(model)
    if diags:
        raise KinemaError("invalid robot model: " + "; ".join(diags))
    if cfg.get("meshes"):
        resolve_meshes(model, cfg["meshes"])
    return model


def _save_link_poses(poses: kinematics.LinkPoseSequence, path):
    out = [{name: p.to_json() for name, p in frame.items()}
           for frame in poses.frames]
    with open(path, "w") as f:
        json.dump(out, f)


def _load_link_poses(path) -> kinematics.LinkPoseSequence:
    from .transforms import RigidTransform
    with open(path) as f:
        raw = json.load(f)
    return kinematics.LinkPoseSequence(
        [{name: RigidTransform.from_json(p) for name, p in frame.items()}
         for frame in raw])


def _expand(model, cfg):
    actions = kinematics.ActionSequence.load(cfg["actions"])
    poses, qs, report = kinematics.expand_trajectory(
        model, actions, ee_link=cfg.get("ee_link"))
    if report.diverged_frames:
        log.warning("IK did not converge on frames %s", report.diverged_frames)
    return poses, qs


def cmd_fk(args) -> int:
    cfg = _load_config(args)
    model = _load_model(cfg)
    out_dir = Path(cfg["out"])
    poses, qs = _expand(model, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    kinematics.ActionSequence(
        "joint", configurations=qs).save(out_dir / "joint_trace.json")
    _save_link_poses(poses, out_dir / "link_poses.json")
    _write_run_manifest(out_dir, "fk", cfg)
    return EXIT_OK


def cmd_ik(args) -> int:
    # ik is fk restricted to end-effector actions; shares the artifact layout
    cfg = _load_config(args)
    if kinematics.ActionSequence.load(cfg["actions"]).mode != "ee":
        raise KinemaError("ik requires an end-effector action file")
    return cmd_fk(args)


def cmd_project(args) -> int:
    cfg = _load_config(args)
    model = _load_model(cfg)
    camera = projection.CameraModel.load(cfg["camera"])
    out_dir = Path(cfg["out"])
    seed = int(cfg.get("seed", 0))

    if cfg.get("poses"):
        poses = _load_link_poses(cfg["poses"])
    else:
        poses, _ = _expand(model, cfg)

    if cfg.get("calibration"):
        from .transforms import RigidTransform
        with open(cfg["calibration"]) as f:
            calib = RigidTransform.from_json(json.load(f))
        poses = kinematics.apply_base_calibration(calib, poses)

    want_rgb = bool(cfg.get("rgb", False))
    pm, occupancy, rgb = projection.render_sequence(model, poses, camera, want_rgb)

    if cfg.get("perturb"):
        spec = cs.PerturbationSpec.parse(cfg["perturb"], seed)
        pm = cs.perturb(pm, spec)
        occupancy = pm.occupancy()

    out_dir.mkdir(parents=True, exist_ok=True)
    projection.save_pointmap_sequence(pm, out_dir / "pointmap.kpm", camera)
    mask = cs.soft_mask(occupancy, float(cfg.get("soft_ratio", cs.DEFAULT_SOFT_RATIO)),
                        float(cfg.get("soft_value", cs.DEFAULT_SOFT_VALUE)), seed)
    np.save(out_dir / "mask.npy", mask)
    if rgb is not None:
        np.save(out_dir / "rgb.npy", rgb)
    _write_run_manifest(out_dir, "project", cfg)
    return EXIT_OK


def cmd_signal(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg["out"])
    pm, _ = projection.load_pointmap_sequence(cfg["pointmap"])
    npm = cs.normalize_sequence(pm)
    cs.export_pseudo_rgb(npm, out_dir / "pseudo_rgb")
    if cfg.get("world_image"):
        world = np.load(cfg["world_image"])
        t = len(pm.frames)
        extended = cs.extend_world_image(world, t, cfg.get("extend_mode", "zero_pad"))
        cond = cs.concat_width(extended, npm)
        np.save(out_dir / "conditioning.npy", cond)
    _write_run_manifest(out_dir, "signal", cfg)
    return EXIT_OK


def cmd_perturb(args) -> int:
    cfg = _load_config(args)
    pm, sidecar = projection.load_pointmap_sequence(cfg["pointmap"])
    spec = cs.PerturbationSpec.parse(cfg["spec"], int(cfg.get("seed", 0)))
    out = cs.perturb(pm, spec)
    out_path = Path(cfg["out"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    cam = None
    if sidecar.get("camera"):
        cam = projection.CameraModel.from_json(sidecar["camera"])
    projection.save_pointmap_sequence(out, out_path, cam)
    return EXIT_OK


def cmd_curate(args) -> int:
    cfg = _load_config(args)
    in_dir = Path(cfg["input"])
    out_dir = Path(cfg["out"])
    target = int(cfg.get("target_frames", cs.DEFAULT_TARGET_FRAMES))
    episodes, failures = [], []
    for ep_dir in sorted(p for p in in_dir.iterdir() if p.is_dir()):
        try:
            meta = {}
            meta_path = ep_dir / "meta.json"
            if meta_path.exists():
                meta = json.loads(meta_path.read_text())
            rgb = np.load(ep_dir / "rgb.npy")
            pm, sidecar = projection.load_pointmap_sequence(ep_dir / "pointmap.kpm")
            actions = np.load(ep_dir / "actions.npy")
            cam = None
            if sidecar.get("camera"):
                cam = projection.CameraModel.from_json(sidecar["camera"])
            ep = curation.curate_episode(
                ep_dir.name, meta.get("source", "custom"), rgb, pm, actions,
                bool(meta.get("success", True)), cam, out_dir, target)
            episodes.append(ep)
        except (KinemaError, OSError, ValueError) as e:
            log.error("episode %s failed: %s", ep_dir.name, e)
            failures.append({"episode": ep_dir.name, "error": str(e)})
    curation.write_manifest(episodes, out_dir / "manifest.jsonl")
    if failures:
        with open(out_dir / "failures.json", "w") as f:
            json.dump(failures, f, indent=2)
    _write_run_manifest(out_dir, "curate", cfg)
    print(f"curated {len(episodes)} episodes, {len(failures)} failures")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    pred, _ = projection.load_pointmap_sequence(cfg["pred"])
    ref, _ = projection.load_pointmap_sequence(cfg["ref"])
    report = metrics.evaluate_sequences(
        pred, ref, float(cfg.get("tau", metrics.DEFAULT_FSCORE_TAU)),
        cfg.get("units", "metric"))
    if cfg.get("rgb_pred") and cfg.get("rgb_ref"):
        a = np.load(cfg["rgb_pred"])
        b = np.load(cfg["rgb_ref"])
        report.scalars["psnr"] = metrics.psnr(a, b)
        report.scalars["ssim"] = metrics.ssim(a, b)
    if cfg.get("policy"):
        sim_path, real_path = cfg["policy"]
        with open(sim_path) as f:
            sim = json.load(f)
        with open(real_path) as f:
            real = json.load(f)
        rs, rr, diff = metrics.success_rate_diff(sim, real)
        report.scalars.update(success_sim=rs, success_real=rr,
                              success_diff=diff)
    print(report.table())
    if cfg.get("out"):
        report.save(cfg["out"])
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="kinema", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, *specs):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override")
        for flag, kw in specs:
            p.add_argument(flag, **kw)
        p.set_defaults(func=func)
        return p

    common_model = [("--urdf", {}), ("--meshes", {}), ("--actions", {}),
                    ("--ee-link", {"dest": "ee_link"}), ("--out", {})]
    add("fk", cmd_fk, *common_model)
    add("ik", cmd_ik, *common_model)
    add("project", cmd_project, *common_model,
        ("--camera", {}), ("--poses", {}), ("--calibration", {}),
        ("--rgb", {"action": "store_true", "default": None}),
        ("--perturb", {}), ("--soft-ratio", {"dest": "soft_ratio", "type": float}),
        ("--soft-value", {"dest": "soft_value", "type": float}),
        ("--seed", {"type": int}))
    add("signal", cmd_signal,
        ("--pointmap", {}), ("--world-image", {"dest": "world_image"}),
        ("--extend-mode", {"dest": "extend_mode"}), ("--out", {}))
    add("perturb", cmd_perturb,
        ("--pointmap", {}), ("--spec", {}), ("--seed", {"type": int}),
        ("--out", {}))
    add("curate", cmd_curate,
        ("--input", {}), ("--out", {}),
        ("--target-frames", {"dest": "target_frames", "type": int}),
        ("--seed", {"type": int}))
    add("eval", cmd_eval,
        ("--pred", {}), ("--ref", {}), ("--tau", {"type": float}),
        ("--units", {}), ("--rgb-pred", {"dest": "rgb_pred"}),
        ("--rgb-ref", {"dest": "rgb_ref"}),
        ("--policy", {"nargs": 2}), ("--out", {}))
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KinemaError, FileNotFoundError, KeyError, json.JSONDecodeError) as e:
        record = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(record), file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # pragma: no cover
        log.exception("internal error")
        print(json.dumps({"error": "InternalError", "message": str(e)}),
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
