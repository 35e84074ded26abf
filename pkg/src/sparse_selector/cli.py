"""Command-line front end.

Exit codes: 0 success, 2 usage or invalid values, 3 I/O or file format errors.
Every subcommand accepts ``--config FILE`` (JSON or YAML) whose keys mirror
the long flag names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import cbs, pnm, ras, raype
from .geometry import GridIndexError, OrientedBox3D, backproject_pixel_ray, intersect_rays_obb
from .harness import evaluate_ratios, resolve_logits, write_eval_csv
from .scene import (
    Scene,
    SceneInvariantError,
    SceneSchemaError,
    generate_scene,
    gt_distribution,
    load_scene,
    save_scene,
)

log = logging.getLogger("sparse_selector")

EXIT_USAGE = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str):
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j, got {text!r}") from None
    return i, j


def _load(path) -> Scene:
    try:
        return load_scene(path)
    except OSError as err:
        raise CliError(f"cannot read scene {path}: {err.strerror or err}", EXIT_IO) from None
    except (SceneSchemaError, SceneInvariantError) as err:
        raise CliError(f"bad scene {path}: {err}", EXIT_IO) from None


def _grid(scene, name: str):
    if name == "bev":
        return scene.bev
    if name.startswith("camera:"):
        try:
            return scene.camera_grid(int(name.split(":", 1)[1]))
        except (KeyError, ValueError):
            pass
    raise CliError(f"unknown grid {name!r}; use 'bev' or 'camera:<id>'", EXIT_USAGE)


def _logits(args, scene, grid):
    try:
        return resolve_logits(args.logits, scene, grid, args.seed)
    except OSError as err:
        raise CliError(f"cannot read logits {args.logits}: {err}", EXIT_IO) from None
    except ValueError as err:
        raise CliError(str(err), EXIT_USAGE) from None


def _cbs_config(args, rho=1.0):
    try:
        return cbs.CbsConfig(lam=args.lam, rho=rho, weight_mode=args.weight_mode, distribution_source=args.distribution)
    except ValueError as err:
        raise CliError(str(err), EXIT_USAGE) from None


def _mkdir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CliError(f"cannot create {path}: {err}", EXIT_IO) from None
    return path


# ------------------------------------------------------------------ commands


def cmd_gen_scene(args):
    try:
        scene = generate_scene(args.seed, args.boxes, args.class_mix, args.cameras, cell_size=args.cell_size)
    except ValueError as err:
        raise CliError(str(err), EXIT_USAGE) from None
    try:
        save_scene(scene, args.out)
    except OSError as err:
        raise CliError(f"cannot write {args.out}: {err}", EXIT_IO) from None
    dist = gt_distribution(scene)
    for name, count in zip(scene.class_names, dist.counts):
        print(f"{name},{count}")


def _supervise_one(scene, grid, march_step):
    """Analytic mask plus, if requested, oracle mask and disagreement count."""
    mask = ras.ras_mask(scene, grid)
    if march_step is None:
        return mask, None, None
    if grid.kind == "bev":
        oracle, edge = ras.ras_oracle_bev_mask(scene)
        off_edge = edge >= 1e-6
        differ = (mask.values != oracle.values) & off_edge
        return mask, oracle, (int(differ.sum()), int((~off_edge).sum()))
    oracle, o_chord, t_max = ras.ras_oracle_camera_march(scene, grid.rig_id, march_step)
    a_chord = ras.ras_chords(scene, grid, t_max)
    return mask, oracle, ras.mask_disagreements(mask.values, a_chord, oracle.values, o_chord, 2 * march_step)


def cmd_supervise(args):
    scene = _load(args.scene)
    out = _mkdir(args.out_dir)
    if args.march_step is not None and args.march_step <= 0:
        raise CliError("--march-step must be positive", EXIT_USAGE)
    step = args.march_step if args.oracle else None
    grids = [scene.camera_grid(rig.id) for rig in scene.rigs] + [scene.bev]
    if args.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda g: _supervise_one(scene, g, step), grids))
    else:
        results = [_supervise_one(scene, g, step) for g in grids]

    log.debug("writing %d masks to %s", len(grids), out)
    report = []
    for grid, (mask, oracle, counts) in zip(grids, results):
        stem = "bev" if grid.kind == "bev" else f"camera{grid.rig_id}"
        ras.write_mask(mask, out / f"mask_{stem}.txt")
        if oracle is not None:
            ras.write_mask(oracle, out / f"oracle_{stem}.txt")
            report.append((mask.modality, *counts))
    if args.oracle:
        with open(out / "disagreements.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mask", "disagreements", "excluded"])
            w.writerows(report)
        for name, n, excl in report:
            print(f"{name}: {n} disagreements ({excl} cells excluded)")


def cmd_sample(args):
    scene = _load(args.scene)
    grid = _grid(scene, args.grid)
    cfg = _cbs_config(args, args.rho)
    sal = _logits(args, scene, grid)
    weights = cbs.token_weights(sal, cfg, gt_distribution(scene))
    tok = cbs.select_tokens(sal, weights, cfg.rho)
    out = _mkdir(args.out)
    cbs.write_tokens_csv(tok, out / "tokens.csv")
    cbs.write_weights_csv(weights, out / "weights.csv")
    mask = ras.ras_mask(scene, grid)
    recall = cbs.perclass_recall(tok, mask, scene)
    print(f"kept {len(tok)}/{grid.n_tokens} tokens, foreground recall {cbs.foreground_recall(tok, mask):.6f}")
    for name, r in zip(scene.class_names, recall):
        print(f"  {name}: {r:.6f}")


def cmd_eval(args):
    scene = _load(args.scene)
    grid = _grid(scene, args.grid)
    for rho in args.rhos:
        try:
            cbs.check_ratio(rho)
        except ValueError as err:
            raise CliError(str(err), EXIT_USAGE) from None
    if not args.rhos:
        raise CliError("--rhos must list at least one ratio", EXIT_USAGE)
    cfg = _cbs_config(args)
    sal = _logits(args, scene, grid)
    rows = evaluate_ratios(scene, sal, args.rhos, cfg)
    try:
        write_eval_csv(rows, scene.class_names, args.out)
    except OSError as err:
        raise CliError(f"cannot write {args.out}: {err}", EXIT_IO) from None


def cmd_render(args):
    try:
        _, values = ras.read_mask(args.mask)
    except OSError as err:
        raise CliError(f"cannot read mask {args.mask}: {err}", EXIT_IO) from None
    except (ras.MaskFormatError, UnicodeDecodeError) as err:
        raise CliError(f"malformed mask {args.mask}: {err}", EXIT_IO) from None
    if args.scale < 1:
        raise CliError("--scale must be >= 1", EXIT_USAGE)
    if args.tokens:
        try:
            kept = cbs.read_token_indices(args.tokens)
        except (OSError, KeyError, ValueError) as err:
            raise CliError(f"cannot read tokens {args.tokens}: {err}", EXIT_IO) from None
        if kept.size and (kept.min() < 0 or kept.max() >= values.size):
            raise CliError("token indices exceed the mask size", EXIT_IO)
        image = pnm.overlay_image(values, kept, args.scale)
    else:
        image = pnm.mask_image(values, args.scale)
    try:
        pnm.write_pnm(image, args.out)
    except OSError as err:
        raise CliError(f"cannot write {args.out}: {err}", EXIT_IO) from None


def cmd_raype(args):
    scene = _load(args.scene)
    try:
        rig = scene.rig(args.camera)
        ray = backproject_pixel_ray(rig, *args.pixel)
    except (KeyError, GridIndexError) as err:
        raise CliError(str(err).strip("'\""), EXIT_USAGE) from None
    if args.d < 2 or not 0 < args.d_min < args.d_max or args.embed_dim < 2:
        raise CliError("need --d >= 2, 0 < --d-min < --d-max and --embed-dim >= 2", EXIT_USAGE)
    region = scene.region

    # the BEV cell under the point where the ray leaves the region, capped at d_max
    half = region.extent / 2.0
    bounds = OrientedBox3D(tuple(region.lower + half), tuple(region.extent), 0.0)
    hit = intersect_rays_obb(np.array([ray.origin]), np.array([ray.direction]), bounds)
    t_exit = float(hit[2][0]) if hit[0][0] else args.d_max
    exit_point = ray.at(min(t_exit, args.d_max))
    i, j = scene.bev.cell_of(exit_point[0], exit_point[1])
    center = scene.bev.cell_centers()[i, j]

    cam_seq, bev_seq = raype.query_anchor_pair(ray, center, args.d, region, args.d_min, args.d_max)
    cam_seq = raype.AnchorSequence(cam_seq.points, f"camera:{rig.id}:{args.pixel[0]}:{args.pixel[1]}", cam_seq.t, cam_seq.clamped)
    bev_seq = raype.AnchorSequence(bev_seq.points, f"bev:{i}:{j}", bev_seq.t, bev_seq.clamped)

    out = _mkdir(args.out)
    raype.write_anchors_csv([cam_seq, bev_seq], out / "anchors.csv")
    raype.write_encoding_csv(raype.embed(cam_seq, args.embed_dim, region), out / "encoding_camera.csv")
    raype.write_encoding_csv(raype.embed(bev_seq, args.embed_dim, region), out / "encoding_bev.csv")
    raype.write_encoding_csv(raype.embed_query((cam_seq, bev_seq), args.embed_dim, region), out / "encoding_query.csv")
    print(f"camera {rig.id} cell {tuple(args.pixel)} -> bev cell ({i}, {j})")


# ------------------------------------------------------------------- parsing


def _add_cbs_flags(p):
    p.add_argument("--logits", default="perfect", help="perfect, noisy:<sigma> or a .npy file of shape rows x cols x C")
    p.add_argument("--lambda", dest="lam", type=float, default=1.5)
    p.add_argument("--weight-mode", choices=["multiply", "assign"], default="multiply")
    p.add_argument("--distribution", choices=["predicted", "gt"], default="predicted")
    p.add_argument("--grid", default="bev", help="'bev' or 'camera:<id>'")
    p.add_argument("--seed", type=int, default=0, help="seed for noisy logits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-selector", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a synthetic scene file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boxes", type=int, default=30)
    p.add_argument("--cameras", type=int, default=6)
    p.add_argument("--class-mix", type=_floats, default=[0.1] * 10)
    p.add_argument("--cell-size", type=float, default=0.6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("supervise", help="write ray-aware supervision masks")
    p.add_argument("--scene", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--oracle", action="store_true", help="also run the brute-force oracles")
    p.add_argument("--march-step", type=float, default=0.01)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_supervise)

    p = sub.add_parser("sample", help="class-balanced weighting and token pruning")
    p.add_argument("--scene", required=True)
    _add_cbs_flags(p)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="keeping-ratio sweep report")
    p.add_argument("--scene", required=True)
    _add_cbs_flags(p)
    p.add_argument("--rhos", type=_floats, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a mask (and kept tokens) to PGM/PPM")
    p.add_argument("--mask", required=True)
    p.add_argument("--tokens")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("raype", help="anchor samples and encodings for one camera cell")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--pixel", type=_pair, required=True, help="feature cell i,j")
    p.add_argument("--d", type=int, default=raype.DEFAULT_ANCHORS)
    p.add_argument("--d-min", type=float, default=raype.DEFAULT_D_MIN)
    p.add_argument("--d-max", type=float, default=raype.DEFAULT_D_MAX)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_raype)
    return parser


def _config_defaults(argv):
    """Pull ``--config FILE`` out of argv and return (remaining argv, config dict)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return rest, {}
    try:
        with open(known.config) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as err:
        raise CliError(f"cannot read config {known.config}: {err}", EXIT_IO) from None
    except yaml.YAMLError as err:
        raise CliError(f"malformed config {known.config}: {err}", EXIT_IO) from None
    if not isinstance(data, dict):
        raise CliError("config file must hold a mapping", EXIT_IO)
    return rest, {k.replace("-", "_"): v for k, v in data.items()}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, config = _config_defaults(argv)
        parser = build_parser()
        if config:
            # config values become defaults of the chosen subcommand, so flags win
            if "lambda" in config:
                config["lam"] = config.pop("lambda")
            command = next((a for a in argv if not a.startswith("-")), None)
            for action in parser._subparsers._group_actions:
                if command in action.choices:
                    sub = action.choices[command]
                    for act in sub._actions:
                        if act.dest in config:
                            value = config[act.dest]
                            if act.type is not None and isinstance(value, str):
                                value = act.type(value)
                            act.default = value
                            act.required = False
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
        args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except SystemExit as err:
        return int(err.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
