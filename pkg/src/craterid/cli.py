"""Command-line toolkit: index construction, identification, simulation,
Monte Carlo experiments, and metric self-tests.

Exit codes: 0 success/matched, 2 no match, 3 insufficient input, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import LUNAR_RADIUS_KM
from .camera import CameraPose, Intrinsics, parse_camera_file, quaternion_to_matrix
from .conic2d import EllipseParams, ellipse_to_conic
from .crater3d import crater_center
from .errors import CraterIdError
from .index import (
    GLOBAL_SCALE,
    LOCAL_SCALE,
    REGIONAL_SCALE,
    IndexScale,
    build_index,
    load_catalog,
    load_index,
    save_index,
)
from .metrics import GateConfig, gaussian_angle, jaccard_distance
from .pipeline import (
    IdentifyRequest,
    MonteCarloConfig,
    cells_to_jsonl,
    format_cells,
    identify,
    load_detections,
    look_at_pose,
    monte_carlo,
    save_detections,
    synth_scene,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_MATCH = 2
EXIT_INSUFFICIENT = 3

_PRESETS = {"local": LOCAL_SCALE, "regional": REGIONAL_SCALE, "global": GLOBAL_SCALE}


def _read_config(path: str) -> dict[str, str]:
    """Flat key-value config file ('#' comments, 'key value' or 'key=value')."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ", 1).split(None, 1)
        if len(parts) != 2:
            raise CraterIdError(f"{path}: bad config line {raw!r}")
        out[parts[0]] = parts[1].strip()
    return out


def _parse_attitude(spec: str) -> np.ndarray:
    """Attitude from 'qx,qy,qz,qw' (scalar-last) or 9 row-major numbers,
    either inline or in a file."""
    text = spec
    if Path(spec).exists():
        text = Path(spec).read_text()
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) == 4:
        return quaternion_to_matrix(np.array(vals))
    if len(vals) == 9:
        t = np.array(vals).reshape(3, 3)
        if not np.allclose(t @ t.T, np.eye(3), atol=1e-6):
            raise CraterIdError("attitude matrix is not orthonormal")
        return t
    raise CraterIdError("attitude needs 4 (quaternion) or 9 (matrix) numbers")


def _scale_from_args(args) -> IndexScale:
    if args.scale in _PRESETS and not args.custom:
        base = _PRESETS[args.scale]
        return IndexScale(
            name=base.name,
            k=base.k if args.k is None else args.k,
            d_min=base.d_min if args.d_min is None else args.d_min,
            d_max=base.d_max if args.d_max is None else args.d_max,
            max_ellipticity=base.max_ellipticity
            if args.max_ellipticity is None
            else args.max_ellipticity,
            min_arc_fraction=base.min_arc_fraction
            if args.min_arc_fraction is None
            else args.min_arc_fraction,
            descriptor_kind=base.descriptor_kind if args.kind is None else args.kind,
            convention=args.convention or base.convention,
            whiten=args.whiten,
        )
    required = dict(
        k=args.k, d_min=args.d_min, d_max=args.d_max, kind=args.kind
    )
    missing = [k for k, v in required.items() if v is None]
    if missing:
        raise CraterIdError(f"custom scale needs --{', --'.join(missing)}")
    return IndexScale(
        name=args.scale,
        k=args.k,
        d_min=args.d_min,
        d_max=np.inf if args.d_max <= 0 else args.d_max,
        max_ellipticity=np.inf if args.max_ellipticity is None else args.max_ellipticity,
        min_arc_fraction=0.9 if args.min_arc_fraction is None else args.min_arc_fraction,
        descriptor_kind=args.kind,
        convention=args.convention or "ordered",
        whiten=args.whiten,
    )


def _cmd_build_index(args) -> int:
    records, problems = load_catalog(args.catalog)
    for p in problems:
        print(f"warning: {args.catalog}: {p}", file=sys.stderr)
    scale = _scale_from_args(args)
    index = build_index(records, scale, radius=args.radius)
    save_index(index, args.out)
    print(
        f"{scale.name}: {len(index)} triads from {len(records)} craters "
        f"({index.skipped} skipped) -> {args.out}"
    )
    return EXIT_OK


def _cmd_identify(args) -> int:
    detections = load_detections(args.detections)
    intr = parse_camera_file(args.camera)
    attitude = _parse_attitude(args.attitude)
    indexes = [load_index(p) for p in args.index]
    catalog, problems = load_catalog(args.catalog)
    for p in problems:
        print(f"warning: {args.catalog}: {p}", file=sys.stderr)
    req = IdentifyRequest(
        detections=detections,
        intrinsics=intr,
        attitude=attitude,
        indexes=indexes,
        catalog=catalog,
        gate=GateConfig(sigma_img=args.sigma_img, threshold=args.threshold),
        n_candidates=args.n_candidates,
        max_triads=args.max_triads,
    )
    result = identify(req)
    report = {
        "status": result.status,
        "correspondences": {str(k): v for k, v in sorted(result.correspondences.items())},
        "position_km": None if result.r_m is None else [float(v) for v in result.r_m],
        "per_crater": result.per_crater,
        "triads_tried": result.triads_tried,
        "scale": result.scale_name,
    }
    line = json.dumps(report, sort_keys=True)
    if args.report:
        Path(args.report).write_text(line + "\n")
    print(line)
    if result.status == "matched":
        return EXIT_OK
    if result.status == "insufficient-craters":
        return EXIT_INSUFFICIENT
    return EXIT_NO_MATCH


def _cmd_simulate(args) -> int:
    catalog, problems = load_catalog(args.catalog)
    for p in problems:
        print(f"warning: {args.catalog}: {p}", file=sys.stderr)
    intr = parse_camera_file(args.camera)
    sub = crater_center(np.deg2rad(args.lat), np.deg2rad(args.lon), 1.0)
    r_cam = (args.radius + args.altitude) * sub
    helper = np.array([0.0, 0.0, 1.0]) if abs(sub[2]) < 0.95 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, sub)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(sub, e1)
    az = np.deg2rad(args.azimuth)
    up = np.cos(az) * e1 + np.sin(az) * e2
    if args.off_nadir == 0.0:
        pose = look_at_pose(r_cam, np.zeros(3), up_hint=up)
    else:
        tilt = np.deg2rad(args.off_nadir)
        bore = -np.cos(tilt) * sub + np.sin(tilt) * (np.cos(az) * e1 + np.sin(az) * e2)
        pose = look_at_pose(r_cam, r_cam + bore * (args.altitude + args.radius), up_hint=up)
    rng = np.random.default_rng(args.seed)
    dets, truth = synth_scene(catalog, pose, intr, args.sigma_img, rng, args.radius)
    if not dets:
        print("no visible craters from this pose", file=sys.stderr)
        return EXIT_INSUFFICIENT
    save_detections(dets, args.out, truth=truth)
    print(f"{len(dets)} detections -> {args.out}")
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    cfgfile = _read_config(args.config)
    catalog, problems = load_catalog(args.catalog)
    for p in problems:
        print(f"warning: {args.catalog}: {p}", file=sys.stderr)
    intr = parse_camera_file(args.camera)
    indexes = [load_index(p) for p in args.index]
    cfg = MonteCarloConfig(
        catalog=catalog,
        indexes=indexes,
        intrinsics=intr,
        altitude_km=float(cfgfile["altitude_km"]),
        trials=int(cfgfile["trials"]),
        noise_px=[float(v) for v in cfgfile["noise_px"].split(",")],
        off_nadir_deg=[float(v) for v in cfgfile.get("off_nadir_deg", "0").split(",")],
        seed=int(cfgfile.get("seed", "0")),
        n_candidates=int(cfgfile.get("n_candidates", "3")),
        max_triads=int(cfgfile.get("max_triads", "2000")),
        gate_threshold=float(cfgfile.get("gate_threshold", "13.277")),
    )
    cells = monte_carlo(cfg)
    print(format_cells(cells))
    if args.report:
        Path(args.report).write_text(cells_to_jsonl(cells))
    return EXIT_OK


def _cmd_metrics_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.cases
    failures = 0

    def random_conic():
        a = rng.uniform(1.0, 4.0)
        return ellipse_to_conic(
            EllipseParams(
                a=a,
                b=a * rng.uniform(0.4, 1.0),
                xc=rng.uniform(-5, 5),
                yc=rng.uniform(-5, 5),
                psi=rng.uniform(0, np.pi),
            )
        )

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures += 1

    worst_sym = worst_tri = 0.0
    for _ in range(n):
        ca, cb, cc = random_conic(), random_conic(), random_conic()
        dab = gaussian_angle(ca, cb)
        worst_sym = max(worst_sym, abs(dab - gaussian_angle(cb, ca)))
        worst_tri = max(
            worst_tri, dab - gaussian_angle(ca, cc) - gaussian_angle(cc, cb)
        )
    check(f"gaussian-angle symmetry (worst {worst_sym:.2e})", worst_sym == 0.0)
    check(f"gaussian-angle triangle (worst slack {worst_tri:.2e})", worst_tri <= 1e-9)
    check("gaussian-angle minimality", gaussian_angle(ca, ca) == 0.0)
    dj = jaccard_distance(
        ellipse_to_conic(EllipseParams(1, 1, 0, 0)),
        ellipse_to_conic(EllipseParams(1, 1, 1, 0)),
        pitch=1 / 512,
    )
    lens = 2 * np.arccos(0.5) - 0.5 * np.sqrt(3)
    check(
        f"jaccard unit-circle lens ({dj:.5f})",
        abs(dj - (1 - lens / (2 * np.pi - lens))) < 1e-3,
    )
    return EXIT_OK if failures == 0 else EXIT_ERROR


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="craterid", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-index", help="build a descriptor index from a catalog CSV")
    b.add_argument("--catalog", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--scale", default="local", help="local|regional|global or a custom name")
    b.add_argument("--custom", action="store_true", help="ignore preset values")
    b.add_argument("--k", type=int)
    b.add_argument("--d-min", type=float, dest="d_min")
    b.add_argument("--d-max", type=float, dest="d_max", help="<=0 means unbounded")
    b.add_argument("--max-ellipticity", type=float, dest="max_ellipticity")
    b.add_argument("--min-arc-fraction", type=float, dest="min_arc_fraction")
    b.add_argument("--kind", choices=["coplanar7", "noncoplanar3"])
    b.add_argument("--convention", choices=["ordered", "sorted", "p2"])
    b.add_argument("--whiten", action="store_true")
    b.add_argument("--radius", type=float, default=LUNAR_RADIUS_KM)
    b.set_defaults(func=_cmd_build_index)

    i = sub.add_parser("identify", help="match a detections file against indexes")
    i.add_argument("--detections", required=True)
    i.add_argument("--camera", required=True)
    i.add_argument("--attitude", required=True, help="qx,qy,qz,qw or 9 matrix values or file")
    i.add_argument("--index", action="append", required=True)
    i.add_argument("--catalog", required=True)
    i.add_argument("--sigma-img", type=float, default=0.5, dest="sigma_img")
    i.add_argument("--threshold", type=float, default=13.277)
    i.add_argument("--n-candidates", type=int, default=3, dest="n_candidates")
    i.add_argument("--max-triads", type=int, default=2000, dest="max_triads")
    i.add_argument("--report")
    i.set_defaults(func=_cmd_identify)

    s = sub.add_parser("simulate", help="render detections from a catalog and pose")
    s.add_argument("--catalog", required=True)
    s.add_argument("--camera", required=True)
    s.add_argument("--lat", type=float, required=True, help="sub-point latitude, deg")
    s.add_argument("--lon", type=float, required=True, help="sub-point longitude, deg")
    s.add_argument("--altitude", type=float, required=True, help="km")
    s.add_argument("--off-nadir", type=float, default=0.0, dest="off_nadir", help="deg")
    s.add_argument("--azimuth", type=float, default=0.0, help="deg")
    s.add_argument("--sigma-img", type=float, default=0.0, dest="sigma_img")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--radius", type=float, default=LUNAR_RADIUS_KM)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    m = sub.add_parser("montecarlo", help="run the randomized matching experiment")
    m.add_argument("--catalog", required=True)
    m.add_argument("--camera", required=True)
    m.add_argument("--index", action="append", required=True)
    m.add_argument("--config", required=True, help="key-value experiment config")
    m.add_argument("--report", help="write JSONL records here")
    m.set_defaults(func=_cmd_montecarlo)

    t = sub.add_parser("metrics-selftest", help="run the distance-metric axiom suites")
    t.add_argument("--cases", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=_cmd_metrics_selftest)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (CraterIdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
