"""Experiment runner: configuration parsing, the combination matrix,
report files and SVG success-rate plots.

Run configurations are flat ``key=value`` text; repeated keys form lists::

    am=ssd
    am=ncc
    sm=fclk
    ssm=homography
    dataset=path/to/sequences
    seed=7

Subcommands: ``run`` (execute a matrix), ``plot`` (SVG from a summary
CSV), ``synth`` (generate a synthetic sequence directory), ``project-gt``
(project a ground-truth file onto a lower-DOF warp model). All outputs
are deterministic for a fixed config and seed; summary files are written
via write-then-rename.
"""

import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import am as am_mod
from . import eval as eval_mod
from . import pipeline, sm, ssm

log = logging.getLogger("regtrack")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATASET = 2

_LIST_KEYS = ("am", "sm", "ssm", "dataset", "synth")
_SCALAR_KEYS = ("seed", "out", "workers", "tp_max", "tp_step", "resolution",
                "bins", "max_frames", "timing")


class ConfigError(ValueError):
    pass


def parse_config(text, source="<config>"):
    """Parse the flat key=value grammar into a config dict."""
    cfg = {key: [] for key in _LIST_KEYS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, "
                              f"got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        if key in _LIST_KEYS:
            cfg[key].append(value)
        elif key in _SCALAR_KEYS:
            if key in cfg:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            cfg[key] = value
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
    return cfg


def load_config(path):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=os.fspath(path))


def _config_int(cfg, key, default):
    try:
        return int(cfg.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad integer for {key!r}: {cfg[key]!r}") from exc


def _config_float(cfg, key, default):
    try:
        return float(cfg.get(key, default))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad number for {key!r}: {cfg[key]!r}") from exc


def _parse_synth_spec(value, lineno_hint=""):
    # model:sigma:frames:seed[:photometric[:noise]]
    parts = value.split(":")
    if len(parts) < 4:
        raise ConfigError(f"bad synth spec {value!r}{lineno_hint}; expected "
                          "model:sigma:frames:seed[:photometric[:noise]]")
    model = ssm.make_model(parts[0])
    sigma = float(parts[1])
    frames = int(parts[2])
    seed = int(parts[3])
    photometric = parts[4] if len(parts) > 4 else "none"
    noise = float(parts[5]) if len(parts) > 5 else 0.0
    base = eval_mod.textured_image(240, 320, seed=seed)
    box = ssm.corners_from_rect(110.0, 70.0, 100.0, 100.0)
    motions = eval_mod.random_walk_motions(model, frames, sigma, seed)
    name = f"synth-{parts[0]}-{sigma}-{frames}-{seed}-{photometric}"
    return eval_mod.synth_sequence(base, model, motions, box,
                                   photometric=photometric,
                                   noise_sigma=noise, seed=seed, name=name)


def collect_sequences(cfg):
    """Resolve dataset paths and synth specs into Sequence objects."""
    sequences = []
    for root in cfg.get("dataset", []):
        if not os.path.isdir(root):
            raise FileNotFoundError(f"dataset path {root!r} does not exist")
        if os.path.isfile(os.path.join(root, "ground_truth.txt")):
            sequences.append(eval_mod.load_sequence(root))
            continue
        children = sorted(
            d for d in os.listdir(root)
            if os.path.isfile(os.path.join(root, d, "ground_truth.txt")))
        if not children:
            raise FileNotFoundError(f"no sequences found under {root!r}")
        sequences.extend(eval_mod.load_sequence(os.path.join(root, d))
                         for d in children)
    for spec in cfg.get("synth", []):
        sequences.append(_parse_synth_spec(spec))
    if not sequences:
        raise ConfigError("config names no dataset or synth sequences")
    return sequences


# ---------------------------------------------------------------------------
# matrix execution

def _format_float(x):
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf"
    return repr(float(x))


def _write_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def evaluate_combination(spec, sequences, thresholds, max_frames=None,
                         include_timing=True):
    """Run one AM x SM x SSM combination over all sequences.

    With ``include_timing`` off, reported per-frame times and FPS are
    written as zero so rerun outputs are byte-identical.
    """
    records = []
    per_frame_rows = []
    model = ssm.make_model(spec.ssm)
    for seq in sequences:
        gt = seq
        if model.dof < 8:
            gt = eval_mod.project_ground_truth(model, seq)
        n = len(seq) if max_frames is None else min(len(seq), max_frames)
        tracker = pipeline.create_tracker(spec, seq.frame(0), seq.gt[0])
        errors = np.empty(n - 1)
        seconds = np.empty(n - 1)
        statuses = []
        for i in range(1, n):
            out = tracker.track_frame(seq.frame(i))
            err = np.inf if out.status == "diverged" else \
                eval_mod.alignment_error(out.corners, gt.gt[i])
            errors[i - 1] = err
            seconds[i - 1] = out.seconds
            statuses.append(out.status)
            ms = out.seconds * 1e3 if include_timing else 0.0
            per_frame_rows.append(
                f"{seq.name},{seq.frame_name(i)},{_format_float(err)},"
                f"{out.status},{_format_float(ms)}")
        records.append(eval_mod.EvalRecord(seq.name, errors, statuses, seconds))
    curve = eval_mod.sr_curve(records, thresholds)
    fps = float(sum(len(r) for r in records)
                / max(sum(r.seconds.sum() for r in records), 1e-12))
    if not include_timing:
        fps = 0.0
    return records, per_frame_rows, curve, fps


def run_matrix(cfg, out_dir=None):
    """Execute the combination matrix described by a config dict.

    Writes one per-frame CSV per combination, a pooled summary CSV and
    one SVG per (am, ssm) pair grouping curves by search method. Returns
    the summary path.
    """
    out_dir = out_dir or cfg.get("out", "regtrack-out")
    os.makedirs(out_dir, exist_ok=True)
    seed = _config_int(cfg, "seed", 0)
    workers = int(os.environ.get("REGTRACK_THREADS",
                                 _config_int(cfg, "workers", 1)))
    tp_max = _config_float(cfg, "tp_max", 20.0)
    tp_step = _config_float(cfg, "tp_step", 0.5)
    thresholds = np.arange(0.0, tp_max + tp_step / 2, tp_step)
    resolution = _config_int(cfg, "resolution", 50)
    bins = _config_int(cfg, "bins", 8)
    max_frames = cfg.get("max_frames")
    max_frames = int(max_frames) if max_frames is not None else None
    include_timing = str(cfg.get("timing", "on")).lower() not in ("off", "0", "false")

    ams = [a.lower() for a in (cfg.get("am") or ["ssd"])]
    sms = [s.lower() for s in (cfg.get("sm") or ["fclk"])]
    ssms = [s.lower() for s in (cfg.get("ssm") or ["homography"])]
    sequences = collect_sequences(cfg)

    combos = []
    for am_kind, sm_kind, ssm_kind in itertools.product(ams, sms, ssms):
        spec = pipeline.TrackerSpec(
            am=am_kind, sm=sm_kind, ssm=ssm_kind,
            resolution=(resolution, resolution), bins=bins,
            sm_cfg=sm.SMConfig(seed=seed))
        try:
            spec.validate()
        except pipeline.TrackerConfigError as exc:
            log.warning("skip combination=%s+%s+%s reason=UNSUPPORTED_COMBINATION "
                        "detail=%r", am_kind, sm_kind, ssm_kind, str(exc))
            continue
        combos.append(spec)
    if not combos:
        raise ConfigError("no valid combinations in the matrix")

    def job(spec):
        return spec, evaluate_combination(spec, sequences, thresholds,
                                          max_frames, include_timing)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, combos))
    else:
        results = [job(spec) for spec in combos]

    summary_lines = ["am,sm,ssm,t_p,sr"]
    for spec, (records, rows, curve, fps) in results:
        frame_path = os.path.join(
            out_dir, f"results_{spec.am}_{spec.sm}_{spec.ssm}.csv")
        _write_atomic(frame_path, "\n".join(
            ["sequence,frame,e_al,status,ms_per_frame"] + rows) + "\n")
        for t, v in zip(curve.thresholds, curve.values):
            summary_lines.append(
                f"{spec.am},{spec.sm},{spec.ssm},{_format_float(t)},"
                f"{_format_float(v)}")
        summary_lines.append(f"{spec.am},{spec.sm},{spec.ssm},fps,"
                             f"{_format_float(fps)}")
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_atomic(summary_path, "\n".join(summary_lines) + "\n")

    for am_kind, ssm_kind in sorted({(s.am, s.ssm) for s, _ in results}):
        rows = read_summary(summary_path)
        rows = [r for r in rows if r["am"] == am_kind and r["ssm"] == ssm_kind]
        svg_path = os.path.join(out_dir, f"sr_by-sm_{am_kind}_{ssm_kind}.svg")
        _write_svg_plot(rows, "sm", svg_path)
    return summary_path


# ---------------------------------------------------------------------------
# summary plotting

def read_summary(path):
    with open(path, "r") as fh:
        lines = [l.strip() for l in fh if l.strip()]
    if not lines or lines[0] != "am,sm,ssm,t_p,sr":
        raise ConfigError(f"{path}: not a summary CSV")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ConfigError(f"{path}:{lineno}: expected 5 fields")
        rows.append({"am": parts[0], "sm": parts[1], "ssm": parts[2],
                     "t_p": parts[3], "sr": parts[4], "line": lineno})
    return rows


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")


def _write_svg_plot(rows, group_by, out_path, width=640, height=480):
    """Render SR-vs-threshold curves as a deterministic SVG."""
    curves = {}
    for r in rows:
        if r["t_p"] == "fps":
            continue
        label = f'{r["am"]}+{r["sm"]}+{r["ssm"]}' if group_by == "combo" \
            else r[group_by]
        t = float(r["t_p"])
        v = float(r["sr"])
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f'line {r["line"]}: success rate {v} '
                              "outside [0, 1]")
        curves.setdefault(label, []).append((t, v, r["line"]))
    if not curves:
        raise ConfigError("no success-rate rows to plot")
    for label, pts in curves.items():
        pts.sort(key=lambda p: p[0])
        for (t0, v0, _), (t1, v1, line) in zip(pts, pts[1:]):
            if v1 < v0 - 1e-12:
                raise ConfigError(
                    f"line {line}: success rate decreases for {label!r} "
                    f"({v0} -> {v1} at t_p={t1})")
    ml, mr, mt, mb = 50, 16, 16, 40
    pw, ph = width - ml - mr, height - mt - mb
    tmax = max(max(p[0] for p in pts) for pts in curves.values()) or 1.0

    def sx(t):
        return ml + pw * t / tmax

    def sy(v):
        return mt + ph * (1.0 - v)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" '
             'fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
             'fill="none" stroke="black"/>']
    for i in range(0, 5):
        v = i / 4.0
        parts.append(f'<text x="{ml - 8:.2f}" y="{sy(v) + 4:.2f}" '
                     f'font-size="11" text-anchor="end">{v:.2f}</text>')
    step = max(1.0, round(tmax / 8))
    t = 0.0
    while t <= tmax + 1e-9:
        parts.append(f'<text x="{sx(t):.2f}" y="{height - mb + 16:.2f}" '
                     f'font-size="11" text-anchor="middle">{t:g}</text>')
        t += step
    parts.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 8:.2f}" '
                 'font-size="12" text-anchor="middle">alignment error '
                 'threshold (px)</text>')
    for i, (label, pts) in enumerate(sorted(curves.items())):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v, _ in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" data-label="{label}" '
                     f'points="{coords}"/>')
        parts.append(f'<text x="{ml + pw - 6:.2f}" y="{mt + 16 + 14 * i:.2f}" '
                     f'font-size="12" text-anchor="end" fill="{color}">'
                     f'{label}</text>')
    parts.append("</svg>")
    _write_atomic(out_path, "\n".join(parts) + "\n")
    return out_path


def emit_plot(summary_path, group_by, out_path, am=None, sm_kind=None,
              ssm_kind=None):
    """Plot curves from a summary CSV grouped by one dimension.

    Rows may be prefiltered with the ``am`` / ``sm_kind`` / ``ssm_kind``
    arguments; remaining rows must be unambiguous (one curve per value of
    the grouped column).
    """
    if group_by not in ("am", "sm", "ssm", "combo"):
        raise ConfigError(f"cannot group by {group_by!r}")
    rows = read_summary(summary_path)
    if am:
        rows = [r for r in rows if r["am"] == am]
    if sm_kind:
        rows = [r for r in rows if r["sm"] == sm_kind]
    if ssm_kind:
        rows = [r for r in rows if r["ssm"] == ssm_kind]
    if group_by != "combo":
        combos = {(r["am"], r["sm"], r["ssm"]) for r in rows
                  if r["t_p"] != "fps"}
        labels = {c for c in combos}
        per_group = {}
        for c in labels:
            key = {"am": c[0], "sm": c[1], "ssm": c[2]}[group_by]
            per_group.setdefault(key, set()).add(c)
        for key, members in per_group.items():
            if len(members) > 1:
                raise ConfigError(
                    f"grouping by {group_by!r} is ambiguous for {key!r}; "
                    "filter the other dimensions first")
    return _write_svg_plot(rows, group_by, out_path)


# ---------------------------------------------------------------------------
# entry points

def _cmd_run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.workers is not None:
        cfg["workers"] = str(args.workers)
    summary = run_matrix(cfg)
    print(summary)
    return EXIT_OK


def _cmd_plot(args):
    emit_plot(args.summary, args.group_by, args.out, am=args.am,
              sm_kind=args.sm, ssm_kind=args.ssm)
    print(args.out)
    return EXIT_OK


def _cmd_synth(args):
    model = ssm.make_model(args.model)
    base = eval_mod.textured_image(args.height, args.width, seed=args.seed)
    x, y, w, h = (float(v) for v in args.box.split(","))
    box = ssm.corners_from_rect(x, y, w, h)
    motions = eval_mod.random_walk_motions(model, args.frames, args.sigma,
                                           args.seed)
    seq = eval_mod.synth_sequence(base, model, motions, box,
                                  photometric=args.photometric,
                                  noise_sigma=args.noise, seed=args.seed,
                                  name=os.path.basename(args.out))
    eval_mod.save_sequence(seq, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_project_gt(args):
    seq = eval_mod.load_sequence(args.sequence)
    model = ssm.make_model(args.model)
    projected = eval_mod.project_ground_truth(model, seq)
    names = [seq.frame_name(i) for i in range(len(seq))]
    eval_mod.write_ground_truth(args.out, names, projected.gt)
    print(args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="regtrack",
        description="registration-based tracking experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a combination matrix")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_plot = sub.add_parser("plot", help="plot curves from a summary CSV")
    p_plot.add_argument("--summary", required=True)
    p_plot.add_argument("--group-by", default="combo",
                        choices=("am", "sm", "ssm", "combo"))
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--am", default=None)
    p_plot.add_argument("--sm", default=None)
    p_plot.add_argument("--ssm", default=None)
    p_plot.set_defaults(func=_cmd_plot)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--model", default="hom-matrix")
    p_synth.add_argument("--frames", type=int, default=20)
    p_synth.add_argument("--sigma", type=float, default=0.01)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--photometric", default="none",
                         choices=("none", "gain_bias", "subregion_gain"))
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--width", type=int, default=320)
    p_synth.add_argument("--height", type=int, default=240)
    p_synth.add_argument("--box", default="110,70,100,100")
    p_synth.set_defaults(func=_cmd_synth)

    p_gt = sub.add_parser("project-gt",
                          help="project ground truth onto a warp model")
    p_gt.add_argument("--sequence", required=True)
    p_gt.add_argument("--model", required=True)
    p_gt.add_argument("--out", required=True)
    p_gt.set_defaults(func=_cmd_project_gt)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (ConfigError, pipeline.TrackerConfigError, eval_mod.EvalError,
            ssm.WarpError, am_mod.PatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
