"""Command-line front end: generate, train, evaluate, score, epa.

Every flag can also be set through a ``COURTVALUE_<FLAG>`` environment
variable. Exit codes: 0 success, 2 usage, 3 parse, 4 config, 5 numeric,
6 I/O.
"""

from __future__ import annotations

import functools
import io
import sys
from pathlib import Path

import click
import numpy as np

from courtvalue import config as cfgmod
from courtvalue import records
from courtvalue.calibration import brier_skill_score, brier_score, climatology_brier, reliability_curve
from courtvalue.inference import (
    ConstantPredictor,
    ModelPredictor,
    OraclePredictor,
    evaluation_positions,
    position_labels,
    predict_positions,
)
from courtvalue.preprocess import WindowConfig, filter_eligible, split_dataset, to_polar
from courtvalue.synthgen import GeneratorConfig, generate_dataset
from courtvalue.tensornet import load_checkpoint, save_checkpoint
from courtvalue.tracking import TerminalAction, ValidationError
from courtvalue.training import TrainConfig, TrainingDivergedError, fit
from courtvalue.valuation import ValueMap, ep_time_series, epa_distribution_report

EXIT_PARSE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 3, 4, 5, 6
ENV = "COURTVALUE_"


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except records.ParseError as exc:
            _fail(EXIT_PARSE, str(exc))
        except ValidationError as exc:
            _fail(EXIT_PARSE, f"invariant {exc.invariant!r}: {exc}")
        except cfgmod.ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except TrainingDivergedError as exc:
            _fail(EXIT_NUMERIC, f"{exc} (possessions {', '.join(exc.possession_ids[:5])})")
        except (FloatingPointError, ZeroDivisionError) as exc:
            _fail(EXIT_NUMERIC, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))

    return wrapper


def _opt(*names, **kw):
    flag = names[0].lstrip("-").replace("-", "_").upper()
    return click.option(*names, envvar=ENV + flag, show_envvar=True, **kw)


config_opt = _opt("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="key = value config file")
seed_opt = _opt("--seed", type=int, default=None, help="root seed (overrides config)")
corpus_opt = _opt("--corpus", type=click.Path(dir_okay=False), required=True, help="possession file (.jsonl or .jsonl.gz)")
k_opt = _opt("--k", "k", type=int, default=None, help="null windows per possession")


def _settings(config_path, seed):
    values = cfgmod.load_config(config_path)
    cfgmod.check_keys(values)
    if seed is not None:
        values["seed"] = str(seed)
    return values


def _write_lines(path, lines):
    text = "".join(line + "\n" for line in lines)
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_corpus(path, cfg: WindowConfig):
    corpus = records.read_possessions(path)
    corpus = [p if p.is_polar else to_polar(p) for p in corpus]
    return filter_eligible(corpus, cfg)


def _split(corpus, fractions, seed):
    split = split_dataset(corpus, fractions, seed)
    by_id = {p.id: p for p in corpus}
    return tuple([by_id[i] for i in part] for part in (split.train, split.validation, split.test))


def _value_map(values) -> ValueMap:
    return ValueMap(
        beta=cfgmod.eval_setting(values, "beta"),
        field_goal=cfgmod.eval_setting(values, "nu_field_goal"),
        shooting_foul=cfgmod.eval_setting(values, "nu_shooting_foul"),
        non_shooting_foul=cfgmod.eval_setting(values, "nu_non_shooting_foul"),
    )


def _window_from_meta(meta: dict, k: int | None) -> WindowConfig:
    return WindowConfig(int(meta["T"]), int(meta["r"]), int(meta["K"]) if k is None else k)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Expected-points modelling on player-tracking possessions."""


@main.command()
@config_opt
@seed_opt
@_opt("--out", type=click.Path(dir_okay=False), required=True, help="corpus output path")
@_opt("--oracle", type=click.Path(dir_okay=False), default=None, help="ground-truth distribution output path")
@_opt("--n", "n", type=int, default=None, help="number of possessions (overrides config)")
@handles_errors
def generate(config_path, seed, out, oracle, n):
    """Simulate a synthetic corpus."""
    values = _settings(config_path, seed)
    gcfg = cfgmod.build(GeneratorConfig, values, n_possessions=n)
    header = ["courtvalue generate"] + cfgmod.echo(values, n_possessions=gcfg.n_possessions, seed=gcfg.seed)
    count = generate_dataset(gcfg, out, oracle, header)
    click.echo(f"wrote {count} possessions to {out}")


@main.command()
@config_opt
@seed_opt
@corpus_opt
@_opt("--out", type=click.Path(dir_okay=False), required=True, help="checkpoint output path (.npz)")
@_opt("--log", "log_path", type=click.Path(dir_okay=False), default=None, help="per-epoch JSON-lines log")
@k_opt
@handles_errors
def train(config_path, seed, corpus, out, log_path, k):
    """Split the corpus and fit the model with early stopping."""
    values = _settings(config_path, seed)
    tcfg = cfgmod.build(TrainConfig, values, K=k)
    fractions = cfgmod.eval_setting(values, "fractions")
    possessions = _load_corpus(corpus, tcfg.window)
    if len(possessions) < 3:
        raise cfgmod.ConfigError(f"only {len(possessions)} eligible possessions in {corpus}")
    tr, va, _ = _split(possessions, fractions, tcfg.seed)
    roster = 1 + max(max(p.lineup.ids) for p in possessions)
    if "roster_size" in values:
        roster = max(roster, int(values["roster_size"]))

    def progress(rec):
        click.echo(f"epoch {rec.epoch} loss {rec.train_loss:.5f} val_brier {rec.val_brier:.5f}", err=True)

    result = fit(tr, va, tcfg, roster, on_epoch=progress)
    meta = {
        "K": tcfg.K,
        "T": tcfg.T,
        "r": tcfg.r,
        "seed": tcfg.seed,
        "fractions": list(fractions),
        "best_epoch": result.best_epoch,
        "best_val_brier": result.best_brier,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
        "config": dict(sorted(values.items())),
    }
    save_checkpoint(out, result.params, meta)
    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            result.write_log(fh, {"command": "train", **meta})
    click.echo(f"best epoch {result.best_epoch} val_brier {result.best_brier!r}; wrote {out}")


def _evaluate_one(possessions, predictor, wcfg, seed, fractions, mode):
    tr, _, te = _split(possessions, fractions, seed)
    train_labels = position_labels(evaluation_positions(tr, wcfg, seed, "climatology", mode))
    probs, labels = predict_positions(predictor, evaluation_positions(te, wcfg, seed, "test", mode))
    bs = brier_score(probs, labels)
    bs_ref = climatology_brier(train_labels, labels)
    return bs, bs_ref, brier_skill_score(bs, bs_ref), probs, labels


@main.command()
@config_opt
@seed_opt
@corpus_opt
@_opt("--checkpoint", "checkpoints", type=click.Path(dir_okay=False), multiple=True, help="one or more checkpoints")
@_opt("--oracle", type=click.Path(dir_okay=False), default=None, help="score ground-truth distributions instead")
@_opt("--uniform", is_flag=True, default=False, help="score a uniform-output predictor instead")
@_opt("--out", type=click.Path(dir_okay=False), default=None, help="reliability table output path")
@_opt("--mode", type=click.Choice(["sampled", "all"]), default=None, help="test windows: terminal + K nulls, or every position")
@k_opt
@handles_errors
def evaluate(config_path, seed, corpus, checkpoints, oracle, uniform, out, mode, k):
    """Test-set Brier score, climatology reference, skill and reliability.

    With several checkpoints, prints one row per checkpoint (a K sweep when
    they were trained with different K).
    """
    values = _settings(config_path, seed)
    fractions = cfgmod.eval_setting(values, "fractions")
    mode = mode or cfgmod.eval_setting(values, "eval_mode")
    runs = []
    for path in checkpoints:
        params, meta = load_checkpoint(path)
        wcfg = _window_from_meta(meta, k)
        run_seed = int(meta["seed"]) if seed is None else seed
        runs.append((path, ModelPredictor(params, wcfg), wcfg, run_seed, tuple(meta.get("fractions", fractions))))
    if oracle or uniform:
        tcfg = cfgmod.build(TrainConfig, values, K=k)
        predictor = (
            OraclePredictor(records.read_oracles(oracle), tcfg.window) if oracle else ConstantPredictor(np.full(5, 0.2))
        )
        runs.append((oracle or "uniform", predictor, tcfg.window, tcfg.seed, fractions))
    if not runs:
        raise cfgmod.ConfigError("evaluate needs --checkpoint, --oracle or --uniform")

    lines = ["# courtvalue evaluate"] + cfgmod.echo(values, eval_mode=mode)
    lines.append("source\tK\tBS\tBS_ref\tBSS\tn_windows")
    curve = None
    for name, predictor, wcfg, run_seed, fr in runs:
        possessions = _load_corpus(corpus, wcfg)
        bs, bs_ref, bss, probs, labels = _evaluate_one(possessions, predictor, wcfg, run_seed, fr, mode)
        lines.append(f"{name}\t{wcfg.K}\t{bs!r}\t{bs_ref!r}\t{bss!r}\t{labels.size}")
        click.echo(f"{name}: K={wcfg.K} BS={bs:.4f} BS_ref={bs_ref:.4f} BSS={bss:.4f}")
        if curve is None:
            curve = reliability_curve(probs, labels)
    _write_lines(out, lines + curve_lines(curve))


def curve_lines(curve) -> list[str]:
    buf = io.StringIO()
    curve.write(buf)
    return buf.getvalue().splitlines()


@main.command()
@config_opt
@corpus_opt
@_opt("--checkpoint", type=click.Path(dir_okay=False), required=True)
@_opt("--ids", required=True, help="comma-separated possession ids")
@_opt("--out", type=click.Path(dir_okay=False), default=None, help="EP time-series output path")
@handles_errors
def score(config_path, corpus, checkpoint, ids, out):
    """Per-moment EP time series for selected possessions."""
    values = _settings(config_path, None)
    params, meta = load_checkpoint(checkpoint)
    wcfg = _window_from_meta(meta, None)
    wanted = [s.strip() for s in ids.split(",") if s.strip()]
    by_id = {p.id: p for p in records.read_possessions(corpus)}
    missing = [i for i in wanted if i not in by_id]
    if missing:
        raise cfgmod.ConfigError(f"possession ids not in corpus: {', '.join(missing)}")
    predictor = ModelPredictor(params, wcfg)
    vmap = _value_map(values)
    tags = "\t".join(f"p_{a.tag}" for a in TerminalAction)
    lines = ["# courtvalue score"] + cfgmod.echo(values, checkpoint=Path(checkpoint).name)
    lines.append(f"possession_id\ttau\tep\t{tags}")
    for pid in wanted:
        p = by_id[pid]
        p = p if p.is_polar else to_polar(p)
        taus, eps, probs = ep_time_series(predictor, p, vmap, wcfg)
        for t, ep, row in zip(taus, np.atleast_1d(eps), probs):
            lines.append(f"{pid}\t{t}\t{float(ep)!r}\t" + "\t".join(repr(float(x)) for x in row))
    _write_lines(out, lines)


@main.command()
@config_opt
@seed_opt
@corpus_opt
@_opt("--checkpoint", type=click.Path(dir_okay=False), default=None)
@_opt("--oracle", type=click.Path(dir_okay=False), default=None, help="use ground-truth distributions instead")
@_opt("--kind", "kinds", multiple=True, default=("pass", "assist"), help="event tags to compare")
@_opt("--count", type=int, default=None)
@_opt("--epsilon", type=int, default=None)
@_opt("--out", type=click.Path(dir_okay=False), default=None, help="summary report path")
@_opt("--samples", type=click.Path(dir_okay=False), default=None, help="per-action EPA output path")
@handles_errors
def epa(config_path, seed, corpus, checkpoint, oracle, kinds, count, epsilon, out, samples):
    """EPA distributions per action kind with a two-sample KS test."""
    values = _settings(config_path, seed)
    count = cfgmod.eval_setting(values, "count") if count is None else count
    epsilon = cfgmod.eval_setting(values, "epsilon") if epsilon is None else epsilon
    alpha = cfgmod.eval_setting(values, "alpha")
    if checkpoint:
        params, meta = load_checkpoint(checkpoint)
        wcfg = _window_from_meta(meta, None)
        predictor = ModelPredictor(params, wcfg)
    elif oracle:
        wcfg = cfgmod.build(TrainConfig, values).window
        predictor = OraclePredictor(records.read_oracles(oracle), wcfg)
    else:
        raise cfgmod.ConfigError("epa needs --checkpoint or --oracle")
    run_seed = int(values.get("seed", 0))
    possessions = [p if p.is_polar else to_polar(p) for p in records.read_possessions(corpus)]
    try:
        report = epa_distribution_report(
            possessions, predictor, _value_map(values), wcfg, kinds, count, epsilon, run_seed, alpha
        )
    except KeyError as exc:
        raise cfgmod.ConfigError(str(exc.args[0])) from None
    buf = io.StringIO()
    report.write(buf)
    _write_lines(out, ["# courtvalue epa"] + cfgmod.echo(values, count=count, epsilon=epsilon) + buf.getvalue().splitlines())
    if samples:
        with open(samples, "w", encoding="utf-8") as fh:
            report.write_samples(fh)


if __name__ == "__main__":
    main()
