"""Command-line entry point: ``gatv2tcn <subcommand> [flags]``.

Options resolve as command-line flag > ``--config`` file > built-in default.
The config file is plain ``key = value`` lines (``#`` starts a comment);
keys are flag names with or without the leading dashes, ``-`` and ``_``
interchangeable. Unknown keys are rejected.

Failures print a single line ``error: <Kind>: <message>`` to stderr and exit
with status 2 (bad usage / configuration) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import datasynth, distfit, evalkit, graphkit, pipeline, trainer
from .model import GATV2_TCN, MODEL_KINDS, POSITIONS, ModelConfig, attention_matrix, concat_context

RUN_FILES = ("model.ckpt", "train_log.csv", "config.txt")


class CliError(Exception):
    """Reported as one line; ``status`` is the exit code."""

    def __init__(self, kind: str, message: str, status: int = 1):
        super().__init__(message)
        self.kind = kind
        self.status = status


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: object
    help: str


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _targets(text) -> tuple[str, ...]:
    names = tuple(s.strip() for s in str(text).split(",") if s.strip())
    pipeline.resolve_targets(names)
    return names


_SYNTH = datasynth.SynthConfig()
_MODEL = ModelConfig()
_TRAIN = trainer.TrainConfig()

OPTIONS = {
    o.name: o
    for o in (
        Option("data", str, None, "directory holding players.csv, games.csv, boxscores.csv"),
        Option("out", str, None, "output file or directory"),
        Option("run", str, None, "run directory written by `train`"),
        Option("lines", str, None, "Higher-Lower lines CSV (date,player_id,stat_expr,threshold,actual)"),
        Option("compare", str, None, "second run directory to report alongside (e.g. the graph-free TCN)"),
        Option("seed", int, 0, "random seed"),
        Option("t0", int, _MODEL.t0, "input window length in game days"),
        Option("targets", _targets, pipeline.DEFAULT_TARGETS, "comma-separated target statistics"),
        Option("model", str, GATV2_TCN, f"model kind: {' or '.join(MODEL_KINDS)}"),
        Option("epochs", int, _TRAIN.max_epochs, "maximum training epochs"),
        Option("patience", int, _TRAIN.patience, "early-stopping patience in epochs"),
        Option("lr", float, _TRAIN.lr, "Adam learning rate"),
        Option("weight_decay", float, _TRAIN.weight_decay, "L2 weight decay"),
        Option("heads", int, _MODEL.heads, "attention heads"),
        Option("gat_dim", int, _MODEL.gat_dim, "concatenated attention output width"),
        Option("tcn_dim", int, _MODEL.tcn_dim, "temporal convolution channels"),
        Option("kernel", int, _MODEL.kernel, "temporal convolution kernel width"),
        Option("dropout", float, _MODEL.dropout, "dropout on the per-day node representations"),
        Option("mape_eps", float, evalkit.DEFAULT_MAPE_EPS, "MAPE denominator floor"),
        Option("bins", int, distfit.DEFAULT_BINS, "histogram bins for distribution fitting"),
        Option("all_families", _bool, False, "report every fitted family, not only the best"),
        Option("days", int, _SYNTH.days, "synthetic season length in game days"),
        Option("teams", int, _SYNTH.teams, "synthetic league size"),
        Option("players_per_team", int, _SYNTH.players_per_team, "synthetic roster size per team"),
        Option("games_per_day", int, _SYNTH.games_per_day, "synthetic games per game day"),
        Option("beta", float, _SYNTH.beta, "synthetic opponent-interaction strength"),
        Option("alpha", float, _SYNTH.alpha, "synthetic autoregressive coefficient"),
        Option("noise", float, _SYNTH.noise, "synthetic innovation scale"),
    )
}

_DATA = ("data",)
_MODEL_OPTS = ("t0", "targets", "heads", "gat_dim", "tcn_dim", "kernel", "dropout")

SUBCOMMANDS = {
    "synth": ("generate a synthetic league as CSV files", ("out", "seed", "days", "teams", "players_per_team", "games_per_day", "beta", "alpha", "noise")),
    "ingest-check": ("validate the input CSVs and summarise them", _DATA),
    "graph-stats": ("per-day interaction graphs and Laplacian spectrum check", _DATA + ("out",)),
    "distfit": ("fit distribution families to every statistic", _DATA + ("out", "bins", "all_families")),
    "train": ("train a forecaster into a run directory", _DATA + ("out", "model", "seed", "epochs", "patience", "lr", "weight_decay") + _MODEL_OPTS),
    "eval": ("evaluate a run against the persistence baseline", ("run", "compare", "out", "mape_eps")),
    "predict": ("forecast the day after the last game day for every player", ("run", "data", "out")),
    "bet-eval": ("score Higher-Lower picks made from a run's forecasts", ("run", "lines", "data")),
    "export-attention": ("per-day attention weights as CSV (day,from,to,weight)", ("run", "data", "out")),
    "export-embeddings": ("learned team and position embeddings as CSV", ("run", "out")),
}

# synth keeps the generator's own seed default
_SUBCOMMAND_DEFAULTS = {"synth": {"seed": _SYNTH.seed}}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("UsageError", message, status=2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gatv2tcn", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (summary, opts) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary)
        p.add_argument("--config", default=None, help="key = value file; command-line flags take precedence")
        for key in opts:
            o = OPTIONS[key]
            default = _SUBCOMMAND_DEFAULTS.get(name, {}).get(key, o.default)
            shown = ",".join(default) if isinstance(default, tuple) else default
            flag = "--" + key.replace("_", "-")
            if o.type is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=f"{o.help} (default: {shown})")
            else:
                # None marks "not given" so config values can fill in
                p.add_argument(flag, dest=key, default=None, metavar=key.upper(), help=f"{o.help} (default: {shown})")
    return parser


def read_config(path: str | os.PathLike) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("ConfigError", f"cannot read config {path}: {exc.strerror}", status=2)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("ConfigError", f"{path}:{lineno}: expected key = value", status=2)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS:
            raise CliError("ConfigError", f"{path}:{lineno}: unknown key {key!r}", status=2)
        if key in values:
            raise CliError("ConfigError", f"{path}:{lineno}: duplicate key {key!r}", status=2)
        values[key] = value
    return values


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge flag > config > default for the options ``command`` accepts."""
    config = read_config(args.config) if args.config else {}
    resolved = {}
    for key in SUBCOMMANDS[command][1]:
        o = OPTIONS[key]
        given = getattr(args, key)
        if given is not None:
            raw, source = given, "flag"
        elif key in config:
            raw, source = config[key], "config"
        else:
            resolved[key] = _SUBCOMMAND_DEFAULTS.get(command, {}).get(key, o.default)
            continue
        try:
            resolved[key] = o.type(raw)
        except ValueError as exc:
            raise CliError("ConfigError", f"{key} from {source}: {exc}", status=2)
    return resolved


def _require(opts: dict, *keys: str) -> None:
    missing = ["--" + k.replace("_", "-") for k in keys if not opts.get(k)]
    if missing:
        raise CliError("UsageError", f"missing required flag(s): {' '.join(missing)}", status=2)


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_config(path: Path, opts: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(opts):
            if opts[key] is not None:
                fh.write(f"{key} = {_format_value(opts[key])}\n")


def _load_data(directory: str) -> pipeline.SeasonDataset:
    d = Path(directory)
    missing = [f for f in ("players.csv", "games.csv", "boxscores.csv") if not (d / f).is_file()]
    if missing:
        raise CliError("MissingFile", f"{d}: missing {', '.join(missing)}")
    return pipeline.ingest_dir(d)


@dataclass
class Run:
    directory: Path
    opts: dict
    params: trainer.ModelParams
    config: trainer.ModelConfig
    seed: int


def load_run(directory: str, data: str | None = None) -> tuple[Run, pipeline.PreparedSeason]:
    d = Path(directory)
    missing = [f for f in ("model.ckpt", "config.txt") if not (d / f).is_file()]
    if missing:
        raise CliError("MissingFile", f"{d}: not a run directory (missing {', '.join(missing)})")
    raw = read_config(d / "config.txt")
    opts = {k: OPTIONS[k].type(v) for k, v in raw.items()}
    params, config, seed, _ = trainer.load_model(d / "model.ckpt")
    data_dir = data or opts.get("data")
    if not data_dir:
        raise CliError("UsageError", "run has no recorded data directory; pass --data", status=2)
    prepared = pipeline.prepare(_load_data(data_dir), t0=config.t0, targets=opts.get("targets", pipeline.DEFAULT_TARGETS))
    if prepared.dataset.n_teams != config.n_teams or prepared.features.shape[-1] != config.in_features:
        raise CliError("DataError", f"dataset does not match the run's model ({prepared.dataset.n_teams} teams, {config.n_teams} expected)")
    return Run(d, opts, params, config, seed), prepared


def _out_path(opts: dict, default: Path) -> Path:
    out = Path(opts["out"]) if opts.get("out") else default
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(opts: dict) -> None:
    _require(opts, "out")
    cfg = datasynth.SynthConfig(**{k: opts[k] for k in ("seed", "days", "teams", "players_per_team", "games_per_day", "beta", "alpha", "noise")})
    datasynth.generate(cfg, opts["out"])
    print(f"wrote {cfg.teams * cfg.players_per_team} players, {cfg.days} game days to {opts['out']}")


def cmd_ingest_check(opts: dict) -> None:
    _require(opts, "data")
    ds = _load_data(opts["data"])
    print(f"players {ds.n}")
    print(f"teams {ds.n_teams}")
    print(f"games {len(ds.games)}")
    print(f"game_days {ds.T} ({ds.calendar[0].isoformat()} .. {ds.calendar[-1].isoformat()})")
    print(f"boxscore_rows {len(ds.records)}")
    print(f"active_rows {int(ds.mask.sum())} (>= {ds.minutes_threshold:g} minutes)")


def cmd_graph_stats(opts: dict) -> None:
    _require(opts, "data")
    ds = _load_data(opts["data"])
    rows, worst = [], 0.0
    for t, snap in enumerate(ds.snapshots):
        adj = graphkit.adjacency(snap, ds.n)
        dev = graphkit.spectrum_deviation(adj)
        worst = max(worst, dev)
        sizes = snap.component_sizes
        rows.append((ds.calendar[t].isoformat(), len(sizes), "+".join(map(str, sizes)), int(adj.sum()) // 2, f"{dev:.3e}"))
    header = ("day", "components", "sizes", "edges", "spectrum_deviation")
    if opts.get("out"):
        _write_rows(_out_path(opts, Path()), header, rows)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(map(str, r)))
    print(f"max spectrum deviation {worst:.3e} over {len(rows)} days")


def cmd_distfit(opts: dict) -> None:
    _require(opts, "data")
    ds = _load_data(opts["data"])
    samples = distfit.stat_samples(ds.raw, ds.mask, pipeline.STATS)
    rows = distfit.fit_report(samples, bins=opts["bins"], all_families=opts["all_families"])
    out = _out_path(opts, Path("distfit.csv"))
    distfit.write_report_csv(out, rows)
    for stat, family, *_, score in rows:
        print(f"{stat:<11} {family:<11} rss {score:.4g}")


def cmd_train(opts: dict) -> None:
    _require(opts, "data", "out")
    if opts["model"] not in MODEL_KINDS:
        raise CliError("ConfigError", f"model must be one of {MODEL_KINDS}, got {opts['model']!r}", status=2)
    prepared = pipeline.prepare(_load_data(opts["data"]), t0=opts["t0"], targets=opts["targets"])
    mc = trainer.model_config_for(prepared, **{k: opts[k] for k in ("heads", "gat_dim", "tcn_dim", "kernel", "dropout")})
    tc = trainer.TrainConfig(lr=opts["lr"], weight_decay=opts["weight_decay"], max_epochs=opts["epochs"], patience=opts["patience"], seed=opts["seed"])
    params, log = trainer.train(prepared, mc, tc, kind=opts["model"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    trainer.save_model(out / "model.ckpt", params, mc, seed=opts["seed"], extra={"selected_epoch": str(log.selected_epoch)})
    log.write_csv(out / "train_log.csv", timing=False)
    write_config(out / "config.txt", dict(opts, data=str(Path(opts["data"]).resolve()), out=None))
    best = log.epochs[log.selected_epoch - 1]
    seconds = sum(r.seconds for r in log.epochs)
    print(f"{opts['model']}: {len(log.epochs)} epochs in {seconds:.1f}s, selected epoch {log.selected_epoch} (val RMSE {best.val_rmse:.4f})")


def _report(name: str, predictor, prepared, eps: float) -> list[tuple]:
    rows = []
    for split, windows in (("val", prepared.val), ("test", prepared.test)):
        pred, actual, mask = predictor(windows)
        rows += evalkit.report_rows(name, split, evalkit.evaluate(pred, actual, mask, prepared.targets, mape_eps=eps))
    return rows


def cmd_eval(opts: dict) -> None:
    _require(opts, "run")
    run, prepared = load_run(opts["run"])
    runs = [run]
    if opts.get("compare"):
        other, other_prep = load_run(opts["compare"])
        if other_prep.targets != prepared.targets or other.config.t0 != run.config.t0:
            raise CliError("ConfigError", "compared runs differ in targets or t0", status=2)
        runs.append(other)
    eps = opts["mape_eps"]
    rows = []
    for r in runs:
        rows += _report(r.params.kind, lambda w, r=r: trainer.predict_windows(prepared, r.params, r.config, w), prepared, eps)
    rows += _report("persistence", lambda w: trainer.PersistencePredictor().predict(prepared, w), prepared, eps)
    out = _out_path(opts, run.directory / "eval_report.csv")
    evalkit.write_report_csv(out, rows)
    print(evalkit.format_table([r for r in rows if r[2] == "ALL"]))


def cmd_predict(opts: dict) -> None:
    _require(opts, "run")
    run, prepared = load_run(opts["run"], opts.get("data"))
    T = prepared.dataset.T
    pred = trainer.forecast(prepared, run.params, run.config, range(T - run.config.t0, T))
    after = prepared.dataset.calendar[-1].isoformat()
    rows = [
        (after, p.player_id, p.team_id) + tuple(repr(float(v)) for v in pred[i])
        for i, p in enumerate(prepared.dataset.players)
    ]
    out = _out_path(opts, run.directory / "predictions.csv")
    _write_rows(out, ("after_date", "player_id", "team_id") + prepared.targets, rows)
    print(f"forecast for the game day after {after}: {len(rows)} players -> {out}")


def cmd_bet_eval(opts: dict) -> None:
    _require(opts, "run", "lines")
    run, prepared = load_run(opts["run"], opts.get("data"))
    ds = prepared.dataset
    day_of = {d.isoformat(): t for t, d in enumerate(ds.calendar)}
    player_of = {p.player_id: i for i, p in enumerate(ds.players)}
    cache: dict[int, np.ndarray] = {}
    lines = []
    try:
        rows = evalkit.read_lines_csv(opts["lines"])
    except OSError as exc:
        raise CliError("MissingFile", f"cannot read lines file {opts['lines']}: {exc.strerror}")
    for lineno, row in enumerate(rows, 2):
        where = f"{opts['lines']}:{lineno}"
        t = day_of.get(row["date"])
        if t is None:
            raise CliError("DataError", f"{where}: date {row['date']} is not a game day of the dataset")
        if t < run.config.t0:
            raise CliError("DataError", f"{where}: date {row['date']} has fewer than t0={run.config.t0} prior game days")
        if row["player_id"] not in player_of:
            raise CliError("DataError", f"{where}: unknown player {row['player_id']!r}")
        parts = evalkit.parse_stat_expr(row["stat_expr"], prepared.targets)
        if t not in cache:
            cache[t] = trainer.forecast(prepared, run.params, run.config, range(t - run.config.t0, t))
        pred = cache[t][player_of[row["player_id"]]]
        predicted = float(sum(pred[prepared.targets.index(s)] for s in parts))
        try:
            threshold, actual = float(row["threshold"]), float(row["actual"])
        except ValueError:
            raise CliError("DataError", f"{where}: threshold and actual must be numbers")
        lines.append(evalkit.BetLine(row["player_id"], row["stat_expr"], threshold, actual, predicted, row["date"]))
    result = evalkit.bet_eval(lines)
    print(f"{result.correct}/{result.total} (pushes excluded: {result.pushes}) accuracy {result.accuracy:.4f}")


def cmd_export_attention(opts: dict) -> None:
    _require(opts, "run")
    run, prepared = load_run(opts["run"], opts.get("data"))
    if run.params.kind != GATV2_TCN:
        raise CliError("ConfigError", f"run holds a {run.params.kind!r} model, which has no attention", status=2)
    ds = prepared.dataset
    rows = []
    for t, snap in enumerate(ds.snapshots):
        g = concat_context(prepared.features[t], ds.team_index, ds.pos_index, run.params)
        att = attention_matrix(g, snap, run.params, run.config)
        day = ds.calendar[t].isoformat()
        for i, j in zip(*np.nonzero(att)):
            rows.append((day, ds.players[j].player_id, ds.players[i].player_id, repr(float(att[i, j]))))
    out = _out_path(opts, run.directory / "attention.csv")
    _write_rows(out, ("day", "from", "to", "weight"), rows)
    print(f"{len(rows)} attention weights over {ds.T} days -> {out}")


def cmd_export_embeddings(opts: dict) -> None:
    _require(opts, "run")
    run, prepared = load_run(opts["run"])
    team = run.params["team_emb"].data
    pos = run.params["pos_emb"].data
    team_ids = [tid for tid, _ in prepared.dataset.teams]
    dims = max(team.shape[1], pos.shape[1])
    rows = [("team", team_ids[i]) + tuple(repr(float(v)) for v in team[i]) for i in range(team.shape[0])]
    rows += [("position", POSITIONS[i]) + tuple(repr(float(v)) for v in pos[i]) for i in range(pos.shape[0])]
    out = _out_path(opts, run.directory / "embeddings.csv")
    _write_rows(out, ("kind", "label") + tuple(f"dim{k}" for k in range(dims)), rows)
    print(f"{team.shape[0]} team and {pos.shape[0]} position embeddings -> {out}")


COMMANDS = {
    "synth": cmd_synth,
    "ingest-check": cmd_ingest_check,
    "graph-stats": cmd_graph_stats,
    "distfit": cmd_distfit,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "bet-eval": cmd_bet_eval,
    "export-attention": cmd_export_attention,
    "export-embeddings": cmd_export_embeddings,
}


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        opts = resolve(args.command, args)
        COMMANDS[args.command](opts)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except CliError as exc:
        print(f"error: {exc.kind}: {_one_line(exc)}", file=sys.stderr)
        return exc.status
    except Exception as exc:  # noqa: BLE001 - every failure is reported as one line
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
