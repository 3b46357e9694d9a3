"""Command-line front end: synthesize -> dissimilarity -> geodesic ->
chart/train -> eval -> plot, individually or as one pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Option precedence: command-line flags > --config JSON file > defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import embed, fileformats, nn, synth
from .dataset import TapWindow, feature_matrix
from .dissimilarity import FuseConfig, calibrate_gamma, pairwise_matrix
from .errors import DataError, NumericalError
from .evaluation import (EvalReport, error_cdf, evaluate_chart,
                         evaluate_matrix, render_table)
from .geodesic import build_knn_graph, geodesic_matrix
from .plotting import plot_chart, plot_error_cdf

# desk-scale preset: small L-shaped scene, tap window around the center tap
PRESET_DESK = {
    "tau_min": 33,
    "tau_max": 53,
    "k": 20,
    "samples": 2000,
    "n_arrays": 2,
    "embedder": "isomap",
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _add_common(p):
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $CHARTLAB_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log", help="write a JSON run log to this path")


def _merged(args) -> dict:
    """flags > config file > defaults(None)."""
    d = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if args.config:
        if not os.path.exists(args.config):
            raise DataError(f"config file not found: {args.config}")
        with open(args.config) as f:
            cfg = json.load(f)
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if d.get(key) is None:
                d[key] = v
    return d


def _threads(cfg: dict) -> int:
    if cfg.get("threads") is not None:
        return int(cfg["threads"])
    return int(os.environ.get("CHARTLAB_THREADS", "1"))


def _seed(cfg: dict) -> int:
    return int(cfg["seed"]) if cfg.get("seed") is not None else 0


def _window(cfg: dict, required: bool = True) -> TapWindow | None:
    tmin, tmax = cfg.get("tau_min"), cfg.get("tau_max")
    if tmin is None and tmax is None:
        if required:
            raise DataError("this metric requires --tau-min and --tau-max")
        return None
    if tmin is None or tmax is None:
        raise DataError("--tau-min and --tau-max must be given together")
    return TapWindow(int(tmin), int(tmax))


def _write_runlog(cfg: dict, results: dict) -> None:
    if cfg.get("log"):
        doc = {"config": {k: v for k, v in cfg.items() if k != "log"},
               "results": results}
        with open(cfg["log"], "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True, default=str)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args):
    cfg = _merged(args)
    seed = _seed(cfg)
    if cfg.get("preset") == "paper-desk" or (not cfg.get("scene")):
        scene = synth.default_scene(n_arrays=int(cfg.get("n_arrays")
                                                 or PRESET_DESK["n_arrays"]))
        traj = synth.default_trajectory(
            n_samples=int(cfg.get("samples") or PRESET_DESK["samples"]), seed=seed)
    else:
        with open(cfg["scene"]) as f:
            scene = synth.SceneSpec.from_json(f.read())
        if not cfg.get("trajectory"):
            raise DataError("--trajectory required with --scene")
        with open(cfg["trajectory"]) as f:
            traj = synth.TrajectorySpec.from_json(f.read())
    x, t = synth.generate_trajectory(traj)
    ds = synth.synthesize_csi(scene, x, t, seed=seed)
    fileformats.save_dataset(ds, cfg["out"])
    _write_runlog(cfg, {"L": len(ds), "B": ds.B, "M": ds.M, "N_sub": ds.N_sub})
    print(f"wrote {cfg['out']}: L={len(ds)} B={ds.B} M={ds.M} N_sub={ds.N_sub}")


def _resolve_fuse(ds, cfg, window, threads):
    adp = pairwise_matrix(ds, "adp", window=window, threads=threads)
    gamma = cfg.get("gamma")
    t_thresh = float(cfg.get("t_thresh") or 2.0)
    if gamma in (None, "auto"):
        gamma = calibrate_gamma(ds, adp, t_thresh=t_thresh)
    fc = FuseConfig(float(gamma), t_thresh)
    tmat = np.abs(ds.t[:, None] - ds.t[None, :])
    from .dissimilarity import DissimilarityMatrix
    values = np.minimum(adp.values, fc.gamma * tmat)
    out = DissimilarityMatrix(values, "Fuse",
                              dict(adp.params, gamma=fc.gamma, t_thresh=fc.t_thresh))
    return out, fc.gamma


def _cmd_dissim(args):
    cfg = _merged(args)
    metric = cfg["metric"].lower()
    ds = fileformats.load_dataset(cfg["in_path"])
    threads = _threads(cfg)
    results = {"metric": metric}
    if metric == "fuse":
        window = _window(cfg)
        dm, gamma = _resolve_fuse(ds, cfg, window, threads)
        results["gamma"] = gamma
    elif metric == "dl":
        window = _window(cfg)
        if not cfg.get("model"):
            raise DataError("--model required for the dl metric")
        model = fileformats.load_model(cfg["model"])
        feats = feature_matrix(ds, window)
        dm = pairwise_matrix(ds, "dl", window=window, model=model,
                             features=feats, threads=threads)
    else:
        window = _window(cfg, required=metric in ("cira", "adp"))
        dm = pairwise_matrix(ds, metric, window=window, threads=threads)
    fileformats.save_matrix(dm, cfg["out"])
    _write_runlog(cfg, results)
    print(f"wrote {cfg['out']}: {dm.metric_tag} {dm.L}x{dm.L}")


def _cmd_geodesic(args):
    cfg = _merged(args)
    base = fileformats.load_matrix(cfg["in_path"])
    k = int(cfg.get("k") or PRESET_DESK["k"])
    g = build_knn_graph(base, k)
    dm = geodesic_matrix(g, threads=_threads(cfg),
                         repair=bool(cfg.get("repair")), base=base)
    fileformats.save_matrix(dm, cfg["out"])
    _write_runlog(cfg, {"k": k, "metric_tag": dm.metric_tag})
    print(f"wrote {cfg['out']}: {dm.metric_tag} {dm.L}x{dm.L}")


def _embed_config(cfg) -> embed.EmbedConfig:
    kw = {}
    if cfg.get("iterations") is not None:
        kw["iterations"] = int(cfg["iterations"])
    if cfg.get("learning_rate") is not None:
        kw["learning_rate"] = float(cfg["learning_rate"])
    if cfg.get("perplexity") is not None:
        kw["perplexity"] = float(cfg["perplexity"])
    kw["seed"] = _seed(cfg)
    return embed.EmbedConfig(**kw)


def _cmd_chart(args):
    cfg = _merged(args)
    if cfg.get("model"):
        ds = fileformats.load_dataset(cfg["in_path"])
        model = fileformats.load_model(cfg["model"])
        feats = feature_matrix(ds, _window(cfg))
        chart = nn.predict_chart(model, feats)
    else:
        dm = fileformats.load_matrix(cfg["in_path"])
        method = (cfg.get("embedder") or "mds").lower()
        ecfg = _embed_config(cfg)
        if method == "mds":
            chart = embed.mds(dm, ecfg)
        elif method == "sammon":
            chart = embed.sammon(dm, ecfg)
        elif method == "tsne":
            if cfg.get("learning_rate") is None and cfg.get("iterations") is None:
                ecfg = embed.EmbedConfig(iterations=500, learning_rate=100.0,
                                         seed=ecfg.seed, perplexity=ecfg.perplexity)
            chart = embed.tsne(dm, ecfg)
        elif method == "isomap":
            k = int(cfg.get("k") or PRESET_DESK["k"])
            chart = embed.isomap(dm, k, ecfg, threads=_threads(cfg),
                                 repair=bool(cfg.get("repair")))
        else:
            raise DataError(f"unknown embedder '{method}'")
    fileformats.save_chart(chart, cfg["out"])
    _write_runlog(cfg, {"provenance": chart.provenance})
    print(f"wrote {cfg['out']}: {chart.provenance.get('method')} L={chart.L}")


def _cmd_train(args):
    cfg = _merged(args)
    ds = fileformats.load_dataset(cfg["in_path"])
    mode = cfg["mode"].lower()
    feats = feature_matrix(ds, _window(cfg))
    kw = {}
    if cfg.get("epochs") is not None:
        kw["epochs"] = int(cfg["epochs"])
    if cfg.get("batch_size") is not None:
        kw["batch_size"] = int(cfg["batch_size"])
    if cfg.get("learning_rate") is not None:
        kw["learning_rate"] = float(cfg["learning_rate"])
    kw["seed"] = _seed(cfg)
    if mode in ("siamese", "triplet"):
        if not cfg.get("matrix"):
            raise DataError(f"--matrix required for {mode} training")
        dm = fileformats.load_matrix(cfg["matrix"])
        tcfg = nn.TrainConfig(**kw)
        train = nn.train_siamese if mode == "siamese" else nn.train_triplet
        model = train(feats, dm, cfg=tcfg)
        model.meta["metric_tag"] = dm.metric_tag
    elif mode == "dl":
        model = nn.train_dissimilarity_model(feats, ds.t, cfg=nn.DlTrainConfig(**kw))
    else:
        raise DataError(f"unknown training mode '{mode}'")
    fileformats.save_model(model, cfg["out"])
    _write_runlog(cfg, {"mode": mode, "epoch_losses": model.meta["epoch_losses"]})
    print(f"wrote {cfg['out']}: {mode} model, final loss "
          f"{model.meta['epoch_losses'][-1]:.6g}")


def _cmd_eval(args):
    cfg = _merged(args)
    ds = fileformats.load_dataset(cfg["in_path"])
    K = int(cfg["K"]) if cfg.get("K") is not None else None
    reports: list[EvalReport] = []
    cdfs = {}
    if cfg.get("chart"):
        chart = fileformats.load_chart(cfg["chart"])
        rep = evaluate_chart(chart, ds.x, K)
        reports.append(rep)
        cdfs[rep.label] = error_cdf(rep.errors)
    if cfg.get("matrix"):
        dm = fileformats.load_matrix(cfg["matrix"])
        reports.append(evaluate_matrix(dm, ds.x, K))
    if not reports:
        raise DataError("eval needs --chart and/or --matrix")
    if cfg.get("out"):
        doc = [json.loads(r.to_json()) for r in reports]
        with open(cfg["out"], "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
    table = render_table(reports)
    if cfg.get("table"):
        with open(cfg["table"], "w") as f:
            f.write(table)
    if cfg.get("cdf"):
        if not cdfs:
            raise DataError("--cdf requires --chart")
        plot_error_cdf(cdfs, cfg["cdf"])
    _write_runlog(cfg, {r.label: {"ct": r.ct, "tw": r.tw, "ks": r.ks,
                                  "rd": r.rd, "mae": r.mae} for r in reports})
    print(table, end="")


def _cmd_plot(args):
    cfg = _merged(args)
    ds = fileformats.load_dataset(cfg["in_path"])
    chart = fileformats.load_chart(cfg["chart"])
    plot_chart(chart, ds.x, cfg["out"])
    _write_runlog(cfg, {"points": chart.L})
    print(f"wrote {cfg['out']}")


def _cmd_pipeline(args):
    cfg = _merged(args)
    outdir = cfg["outdir"]
    os.makedirs(outdir, exist_ok=True)
    seed = _seed(cfg)
    threads = _threads(cfg)
    samples = int(cfg.get("samples") or PRESET_DESK["samples"])
    k = int(cfg.get("k") or PRESET_DESK["k"])
    window = TapWindow(int(cfg.get("tau_min") or PRESET_DESK["tau_min"]),
                       int(cfg.get("tau_max") or PRESET_DESK["tau_max"]))
    embedder = (cfg.get("embedder") or PRESET_DESK["embedder"]).lower()

    scene = synth.default_scene(n_arrays=int(cfg.get("n_arrays")
                                             or PRESET_DESK["n_arrays"]))
    traj = synth.default_trajectory(n_samples=samples, seed=seed)
    x, t = synth.generate_trajectory(traj)
    ds = synth.synthesize_csi(scene, x, t, seed=seed)
    fileformats.save_dataset(ds, os.path.join(outdir, "dataset.ccds"))

    adp = pairwise_matrix(ds, "adp", window=window, threads=threads)
    fileformats.save_matrix(adp, os.path.join(outdir, "adp.ccdm"))
    gamma = cfg.get("gamma")
    if gamma in (None, "auto"):
        gamma = calibrate_gamma(ds, adp)
    fc = FuseConfig(float(gamma))
    from .dissimilarity import fuse_matrices, DissimilarityMatrix
    tmat = DissimilarityMatrix(np.abs(ds.t[:, None] - ds.t[None, :]), "Time")
    fuse = fuse_matrices(adp, tmat, fc)
    fileformats.save_matrix(fuse, os.path.join(outdir, "fuse.ccdm"))

    geo = geodesic_matrix(build_knn_graph(fuse, k), threads=threads, base=fuse)
    fileformats.save_matrix(geo, os.path.join(outdir, "g-fuse.ccdm"))

    ecfg = _embed_config(cfg)
    if embedder == "isomap":
        chart = embed.mds(geo, ecfg)
        chart.provenance["method"] = "isomap"
        chart.provenance.setdefault("hyperparams", {})["k"] = k
    elif embedder == "mds":
        chart = embed.mds(geo, ecfg)
    elif embedder == "sammon":
        chart = embed.sammon(geo, ecfg)
    elif embedder == "tsne":
        chart = embed.tsne(geo)
    else:
        raise DataError(f"unknown embedder '{embedder}'")
    fileformats.save_chart(chart, os.path.join(outdir, "chart.ccch"))

    rep_chart = evaluate_chart(chart, ds.x)
    rep_geo = evaluate_matrix(geo, ds.x)
    reports = [rep_chart, rep_geo]
    with open(os.path.join(outdir, "report.json"), "w") as f:
        json.dump([json.loads(r.to_json()) for r in reports], f,
                  indent=2, sort_keys=True)
    with open(os.path.join(outdir, "report.txt"), "w") as f:
        f.write(render_table(reports))
    plot_error_cdf({rep_chart.label: error_cdf(rep_chart.errors)},
                   os.path.join(outdir, "error_cdf.png"))
    plot_chart(chart, ds.x, os.path.join(outdir, "chart.svg"))

    results = {"gamma": fc.gamma,
               "eval": {r.label: {"ct": r.ct, "tw": r.tw, "ks": r.ks,
                                  "rd": r.rd, "mae": r.mae} for r in reports}}
    with open(os.path.join(outdir, "runlog.json"), "w") as f:
        json.dump({"config": {kk: vv for kk, vv in cfg.items() if kk != "log"},
                   "results": results}, f, indent=2, sort_keys=True, default=str)
    _write_runlog(cfg, results)
    print(render_table(reports), end="")


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="chartlab",
                description="Channel charting toolbox: dissimilarity metrics, "
                            "manifold learning, evaluation, and plots.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    s.add_argument("--scene", help="scene JSON file")
    s.add_argument("--trajectory", help="trajectory JSON file")
    s.add_argument("--preset", choices=["paper-desk"])
    s.add_argument("--samples", type=int)
    s.add_argument("--n-arrays", type=int, dest="n_arrays")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("dissim", help="compute a dissimilarity matrix")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--metric", required=True,
                   choices=["euc", "time", "cira", "cs", "adp", "fuse", "dl"])
    s.add_argument("--tau-min", type=int, dest="tau_min")
    s.add_argument("--tau-max", type=int, dest="tau_max")
    s.add_argument("--gamma", help="fusion scale, number or 'auto'")
    s.add_argument("--t-thresh", type=float, dest="t_thresh")
    s.add_argument("--model", help="model file for the dl metric")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_dissim)

    s = sub.add_parser("geodesic", help="geodesic-lift a dissimilarity matrix")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--repair", action="store_true", default=None)
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_geodesic)

    s = sub.add_parser("chart", help="embed a matrix or apply a trained model")
    s.add_argument("--in", dest="in_path", required=True,
                   help="matrix file, or dataset file with --model")
    s.add_argument("--embedder", choices=["mds", "sammon", "tsne", "isomap"])
    s.add_argument("--model", help="trained charting model")
    s.add_argument("--tau-min", type=int, dest="tau_min")
    s.add_argument("--tau-max", type=int, dest="tau_max")
    s.add_argument("--k", type=int)
    s.add_argument("--repair", action="store_true", default=None)
    s.add_argument("--iterations", type=int)
    s.add_argument("--learning-rate", type=float, dest="learning_rate")
    s.add_argument("--perplexity", type=float)
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_chart)

    s = sub.add_parser("train", help="train a charting or metric model")
    s.add_argument("--in", dest="in_path", required=True)
    s.add_argument("--mode", required=True, choices=["siamese", "triplet", "dl"])
    s.add_argument("--matrix", help="dissimilarity matrix (siamese/triplet)")
    s.add_argument("--tau-min", type=int, dest="tau_min")
    s.add_argument("--tau-max", type=int, dest="tau_max")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int, dest="batch_size")
    s.add_argument("--learning-rate", type=float, dest="learning_rate")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("eval", help="score charts/matrices against truth")
    s.add_argument("--in", dest="in_path", required=True, help="dataset file")
    s.add_argument("--chart")
    s.add_argument("--matrix")
    s.add_argument("-K", type=int, dest="K")
    s.add_argument("--out", help="JSON report path")
    s.add_argument("--table", help="text table path")
    s.add_argument("--cdf", help="error-CDF figure path")
    _add_common(s)
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("plot", help="render the two-panel chart SVG")
    s.add_argument("--chart", required=True)
    s.add_argument("--in", dest="in_path", required=True, help="dataset file")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_plot)

    s = sub.add_parser("pipeline", help="synth -> dissim -> geodesic -> "
                                        "chart -> eval -> plot")
    s.add_argument("--preset", choices=["paper-desk"])
    s.add_argument("--samples", type=int)
    s.add_argument("--n-arrays", type=int, dest="n_arrays")
    s.add_argument("--k", type=int)
    s.add_argument("--tau-min", type=int, dest="tau_min")
    s.add_argument("--tau-max", type=int, dest="tau_max")
    s.add_argument("--gamma")
    s.add_argument("--embedder", choices=["mds", "sammon", "tsne", "isomap"])
    s.add_argument("--iterations", type=int)
    s.add_argument("--learning-rate", type=float, dest="learning_rate")
    s.add_argument("--perplexity", type=float)
    s.add_argument("--outdir", required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_pipeline)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    try:
        args.func(args)
        return 0
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
