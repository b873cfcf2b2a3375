"""Command-line entry point: ``adaptsiam <subcommand> [options]``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import experiment, report, synthdata
from .config import FIELDS, ConfigError, Settings, build_settings, dump_config, parse_value
from .errors import AdaptSiamError
from .tracker import ALL_MODES, UpdateMode, run, write_trajectory

log = logging.getLogger("adaptsiam")

DEFAULT_TAUS = (0.3, 0.5, 0.7)
DEFAULT_ALPHAS = (0.25, 0.5, 0.75)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _settings_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("settings (override --config)")
    for name in FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"set_{name}", metavar="VALUE", default=None)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _settings_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adaptsiam", description="Adaptive Siamese tracking toolkit")
    parser.add_argument("--dump-config", action="store_true", help="print every setting with its default and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", choices=sorted(synthdata.SUITES))
    src.add_argument("--specs", help="JSON list (or JSON lines) of sequence specs")
    p.add_argument("--count", type=int)
    p.add_argument("--length", type=int)
    _common(p)

    for name, helptext in [
        ("train-backbone", "train the matching backbone"),
        ("train-gen", "train the template generator and discriminator"),
        ("calibrate", "compute regularity calibration statistics"),
        ("train-adapt", "train the attention and fusion adapter"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True, help="training dataset directory")
        p.add_argument("--models", required=True, help="model directory (read and written)")
        _common(p)

    p = sub.add_parser("track", help="track one sequence to a JSON-lines trajectory")
    p.add_argument("--data", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    _common(p)

    for name, helptext in [("eval", "evaluate a dataset into a report"), ("ablate", "run the ablation grid")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True)
        p.add_argument("--models", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--timing", action="store_true", help="include wall-clock runtime in reports")
        if name == "ablate":
            p.add_argument("--modes", help=f"comma list from {','.join(ALL_MODES)}")
            p.add_argument("--taus", help="comma list of tau values swept on the full mode")
            p.add_argument("--alphas", help="comma list of alpha values swept on the full mode")
        _common(p)
    return parser


def _settings(args) -> Settings:
    overrides = {}
    for name in FIELDS:
        raw = getattr(args, f"set_{name}", None)
        if raw is not None:
            overrides[name] = parse_value(name, raw)
    return build_settings(args.config, overrides)


def _floats(text: str | None, flag: str) -> list[float]:
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects a comma-separated list of numbers, got {text!r}") from None


def _read_specs(path: Path) -> list[synthdata.SequenceSpec]:
    text = Path(path).read_text(encoding="utf-8").strip()
    records = json.loads(text) if text.startswith("[") else [json.loads(line) for line in text.splitlines() if line.strip()]
    return [synthdata.SequenceSpec.from_dict(r) for r in records]


# ---------------------------------------------------------------- commands


def cmd_synth(args, settings: Settings) -> None:
    if args.specs:
        specs = _read_specs(Path(args.specs))
    else:
        kw = {k: v for k, v in (("count", args.count), ("length", args.length)) if v is not None}
        specs = synthdata.SUITES[args.suite](settings.seed, **kw)
    synthdata.synthesize(args.out, specs)
    log.info("wrote %d sequences to %s", len(specs), args.out)


def _load_data(path) -> dict:
    if not Path(path).is_dir():
        raise FileNotFoundError(f"missing dataset directory: {path}")
    return synthdata.read_dataset(path)


def cmd_train_backbone(args, settings):
    Path(args.models).mkdir(parents=True, exist_ok=True)
    experiment.stage_backbone(_load_data(args.data), settings, Path(args.models))


def cmd_train_gen(args, settings):
    Path(args.models).mkdir(parents=True, exist_ok=True)
    experiment.stage_generator(_load_data(args.data), settings, Path(args.models))


def cmd_calibrate(args, settings):
    stats = experiment.stage_calibrate(_load_data(args.data), settings, Path(args.models))
    log.info("calibration e_min=%.6f e_max=%.6f", stats.e_min, stats.e_max)


def cmd_train_adapt(args, settings):
    _, before, records = experiment.stage_adapter(_load_data(args.data), settings, Path(args.models))
    log.info("held-out constraint rate %.3f -> %.3f", before, records[-1]["constraint_rate"])


def cmd_track(args, settings):
    models = experiment.load_models(Path(args.models), settings)
    data_dir = Path(args.data) / args.sequence
    if not data_dir.is_dir():
        raise FileNotFoundError(f"missing sequence directory: {data_dir}")
    frames, anns = synthdata.read_sequence(data_dir)
    outputs = run(frames, anns[0].gt_box, models, settings.tracker())
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(args.out, outputs)


def cmd_eval(args, settings):
    models = experiment.load_models(Path(args.models), settings)
    results = experiment.evaluate(_load_data(args.data), models, settings.tracker())
    report.emit_report(results, args.out, asdict(settings), timing=args.timing)


def ablation_arms(settings: Settings, modes, taus, alphas) -> list[tuple[str, Settings]]:
    arms = [(m, replace(settings, update_mode=m)) for m in modes]
    full = UpdateMode.FULL.value
    for tau in taus:
        if tau != settings.tau:
            arms.append((f"{full}@tau={tau:g}", replace(settings, update_mode=full, tau=tau)))
    for alpha in alphas:
        if alpha != settings.alpha:
            arms.append((f"{full}@alpha={alpha:g}", replace(settings, update_mode=full, alpha=alpha)))
    return arms


def cmd_ablate(args, settings):
    if args.modes:
        modes = [m.strip() for m in args.modes.split(",") if m.strip()]
        bad = [m for m in modes if m not in ALL_MODES]
        if bad:
            raise UsageError(f"unknown update mode(s) {bad}; choose from {ALL_MODES}")
        taus, alphas = _floats(args.taus, "--taus"), _floats(args.alphas, "--alphas")
    else:
        modes = list(ALL_MODES)
        taus = _floats(args.taus, "--taus") if args.taus else list(DEFAULT_TAUS)
        alphas = _floats(args.alphas, "--alphas") if args.alphas else list(DEFAULT_ALPHAS)
    arms = ablation_arms(settings, modes, taus, alphas)
    for _, arm in arms:
        arm.tracker()
    data = _load_data(args.data)
    out = Path(args.out)
    rows = []
    for i, (name, arm) in enumerate(arms):
        models = experiment.load_models(Path(args.models), arm)
        results = experiment.evaluate(data, models, arm.tracker())
        agg = report.emit_report(results, out / "arms" / f"{i:02d}", asdict(arm), timing=args.timing)
        log.info("arm %s mean IoU %.3f eao_lite %.3f", name, agg["mean_iou"], agg["eao_lite"])
        rows.append({"arm": name, "mode": arm.update_mode, "tau": arm.tau, "alpha": arm.alpha,
                     "eao_lite": agg["eao_lite"], "robustness": agg["robustness"],
                     "mean_iou": agg["mean_iou"], "success_auc": agg["success_auc"]})
    report.write_table(out, rows)


COMMANDS = {
    "synth": cmd_synth,
    "train-backbone": cmd_train_backbone,
    "train-gen": cmd_train_gen,
    "calibrate": cmd_calibrate,
    "train-adapt": cmd_train_adapt,
    "track": cmd_track,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.dump_config:
            sys.stdout.write(dump_config())
            return 0
        if not args.command:
            parser.print_usage(sys.stderr)
            raise UsageError("adaptsiam: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = _settings(args)
        COMMANDS[args.command](args, settings)
        return 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"adaptsiam: config error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else 1
    except (FileNotFoundError, AdaptSiamError, ValueError, OSError, RuntimeError) as exc:
        print(f"adaptsiam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
